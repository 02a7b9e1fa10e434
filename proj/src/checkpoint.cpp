#include "structgan/checkpoint.hpp"

#include <sstream>
#include <stdexcept>

#include "structgan/features.hpp"
#include "structgan/training.hpp"

namespace structgan {

namespace fs = std::filesystem;
using torch::serialize::InputArchive;
using torch::serialize::OutputArchive;

namespace {

std::string rng_state(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

std::mt19937_64 rng_from(const std::string& text) {
  std::istringstream is(text);
  std::mt19937_64 rng;
  is >> rng;
  if (!is) throw std::runtime_error("checkpoint: corrupt RNG state");
  return rng;
}

void write_pool(OutputArchive& ar, const std::string& key, const ImagePool& pool) {
  OutputArchive sub;
  sub.write("rng", c10::IValue(rng_state(pool.rng())));
  sub.write("count", c10::IValue(static_cast<int64_t>(pool.size())));
  if (pool.size() > 0) sub.write("images", torch::stack(pool.items()), /*is_buffer=*/true);
  ar.write(key, sub);
}

void read_pool(InputArchive& ar, const std::string& key, ImagePool& pool) {
  InputArchive sub;
  ar.read(key, sub);
  c10::IValue rng, count;
  sub.read("rng", rng);
  sub.read("count", count);
  std::vector<torch::Tensor> items;
  if (count.toInt() > 0) {
    torch::Tensor images;
    sub.read("images", images, /*is_buffer=*/true);
    for (int64_t i = 0; i < images.size(0); ++i) items.push_back(images[i].clone());
  }
  pool.restore(std::move(items), rng_from(rng.toStringRef()));
}

template <typename M>
void write_module(OutputArchive& ar, const std::string& key, const M& module) {
  OutputArchive sub;
  module->save(sub);
  ar.write(key, sub);
}

template <typename M>
void read_module(InputArchive& ar, const std::string& key, M& module) {
  InputArchive sub;
  ar.read(key, sub);
  module->load(sub);
}

std::string read_string(InputArchive& ar, const std::string& key) {
  c10::IValue v;
  ar.read(key, v);
  return v.toStringRef();
}

int64_t read_int(InputArchive& ar, const std::string& key) {
  c10::IValue v;
  ar.read(key, v);
  return v.toInt();
}

CheckpointInfo read_info(InputArchive& ar, const fs::path& path) {
  CheckpointInfo info;
  try {
    info.format = read_int(ar, "format_version");
  } catch (const c10::Error&) {
    throw std::runtime_error("not a structgan checkpoint: " + path.string());
  }
  if (info.format != kCheckpointFormat)
    throw std::runtime_error("unsupported checkpoint format " + std::to_string(info.format) + " in " +
                             path.string());
  info.config = parse_experiment_config(read_string(ar, "config"));
  // Recorded as written; keys added to the config format later re-serialize
  // differently, so comparisons go through the parsed config instead.
  info.config_hash = static_cast<std::uint64_t>(read_int(ar, "config_hash"));
  info.epoch = static_cast<int>(read_int(ar, "epoch"));
  info.step = read_int(ar, "step");
  info.seed = static_cast<std::uint64_t>(read_int(ar, "seed"));
  return info;
}

InputArchive open_archive(const fs::path& path) {
  if (!fs::exists(path)) throw std::runtime_error("checkpoint not found: " + path.string());
  InputArchive ar;
  ar.load_from(path.string());
  return ar;
}

}  // namespace

void save_checkpoint(const TrainState& s, const fs::path& path) {
  OutputArchive ar;
  ar.write("format_version", c10::IValue(kCheckpointFormat));
  ar.write("config", c10::IValue(serialize_config(s.config)));
  ar.write("config_hash", c10::IValue(static_cast<int64_t>(config_hash(s.config))));
  ar.write("epoch", c10::IValue(static_cast<int64_t>(s.epoch)));
  ar.write("step", c10::IValue(s.step));
  ar.write("seed", c10::IValue(static_cast<int64_t>(s.seed)));
  ar.write("rng", c10::IValue(rng_state(s.rng)));
  ar.write("sampler", c10::IValue(s.sampler_state));
  write_pool(ar, "pool_a", s.pool_a);
  write_pool(ar, "pool_b", s.pool_b);
  write_module(ar, "g_a2b", s.g_a2b);
  write_module(ar, "g_b2a", s.g_b2a);
  write_module(ar, "d_a", s.d_a);
  write_module(ar, "d_b", s.d_b);
  OutputArchive og, od;
  s.opt_g->save(og);
  s.opt_d->save(od);
  ar.write("opt_g", og);
  ar.write("opt_d", od);

  // Write-then-rename so an interrupted save never leaves a truncated checkpoint.
  const auto tmp = fs::path(path.string() + ".tmp");
  ar.save_to(tmp.string());
  fs::rename(tmp, path);
}

void load_checkpoint(TrainState& s, const fs::path& path) {
  auto ar = open_archive(path);
  const auto info = read_info(ar, path);
  if (config_hash(info.config) != config_hash(s.config))
    throw std::runtime_error("checkpoint " + path.string() + " was written for config '" +
                             info.config.name + "', which differs from the current config");
  s.epoch = info.epoch;
  s.step = info.step;
  s.seed = info.seed;
  s.rng = rng_from(read_string(ar, "rng"));
  s.sampler_state = read_string(ar, "sampler");
  read_pool(ar, "pool_a", s.pool_a);
  read_pool(ar, "pool_b", s.pool_b);
  read_module(ar, "g_a2b", s.g_a2b);
  read_module(ar, "g_b2a", s.g_b2a);
  read_module(ar, "d_a", s.d_a);
  read_module(ar, "d_b", s.d_b);
  InputArchive og, od;
  ar.read("opt_g", og);
  ar.read("opt_d", od);
  s.opt_g->load(og);
  s.opt_d->load(od);
}

CheckpointInfo read_checkpoint_info(const fs::path& path) {
  auto ar = open_archive(path);
  return read_info(ar, path);
}

Transformer load_generator(const fs::path& path, Direction direction) {
  auto ar = open_archive(path);
  const auto info = read_info(ar, path);
  auto g = build_transformer(TransformerSpec::from_config(info.config));
  read_module(ar, direction == Direction::a2b ? "g_a2b" : "g_b2a", g);
  freeze(*g);
  return g;
}

}  // namespace structgan
