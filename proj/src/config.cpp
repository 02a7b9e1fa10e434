#include "structgan/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <vector>

#include "structgan/networks.hpp"

namespace structgan {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

double parse_double(const std::string& key, std::string_view s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw ConfigError(key, "expected a real number, got '" + std::string(s) + "'");
  return v;
}

int parse_int(const std::string& key, std::string_view s) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw ConfigError(key, "expected an integer, got '" + std::string(s) + "'");
  return v;
}

bool parse_bool(const std::string& key, std::string_view s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError(key, "expected a boolean, got '" + std::string(s) + "'");
}

std::string lambda_key(std::string_view kind, PairTag tag) {
  return "lambda_" + std::string(kind) + "_" + std::string(to_string(tag));
}

void set_lambda(LambdaMap& map, PairTag tag, double v) {
  if (v == 0.0)
    map.erase(tag);
  else
    map[tag] = v;
}

double lookup(const LambdaMap& map, PairTag tag) {
  auto it = map.find(tag);
  return it == map.end() ? 0.0 : it->second;
}

ExperimentConfig constants() {
  ExperimentConfig c;
  c.n_iter = 100;
  c.n_iter_decay = 100;
  c.base_lr = 0.0002;
  c.beta1 = 0.5;
  c.pool_size = 50;
  c.load_size = {256, 256};
  c.crop_size = {192, 192};
  c.n_scales = scales_for_crop(192);
  return c;
}

int derived_scales(Extent crop) {
  return std::min(scales_for_crop(crop.width), scales_for_crop(crop.height));
}

}  // namespace

std::string_view to_string(PairTag tag) {
  switch (tag) {
    case PairTag::afb: return "afb";
    case PairTag::bfa: return "bfa";
    case PairTag::farb: return "farb";
    case PairTag::fbra: return "fbra";
  }
  return "?";
}

PairTag pair_tag_from_string(std::string_view s) {
  for (PairTag t : kAllPairTags)
    if (to_string(t) == s) return t;
  throw ConfigError("pair_tag", "unknown pair tag '" + std::string(s) + "'");
}

std::string_view to_string(GeneratorArch arch) {
  return arch == GeneratorArch::fcdensenet ? "fcdensenet" : "resnet-blocks";
}

std::string_view to_string(PerceptualMode mode) {
  switch (mode) {
    case PerceptualMode::multi_layer: return "multi-layer";
    case PerceptualMode::last_layer: return "last-layer";
    case PerceptualMode::analytic_stub: return "analytic-stub";
  }
  return "?";
}

std::string_view to_string(EdgeBackbone backbone) {
  return backbone == EdgeBackbone::hed_residual ? "hed" : "sobel";
}

GeneratorArch generator_arch_from_string(std::string_view s) {
  if (s == "fcdensenet") return GeneratorArch::fcdensenet;
  if (s == "resnet-blocks" || s == "resnet") return GeneratorArch::resnet_blocks;
  throw ConfigError("generator_arch", "unknown architecture '" + std::string(s) + "'");
}

PerceptualMode perceptual_mode_from_string(std::string_view s) {
  if (s == "multi-layer") return PerceptualMode::multi_layer;
  if (s == "last-layer") return PerceptualMode::last_layer;
  if (s == "analytic-stub") return PerceptualMode::analytic_stub;
  throw ConfigError("perceptual_extractor", "unknown extractor '" + std::string(s) + "'");
}

EdgeBackbone edge_backbone_from_string(std::string_view s) {
  if (s == "sobel" || s == "analytic-sobel") return EdgeBackbone::analytic_sobel;
  if (s == "hed" || s == "hed-residual") return EdgeBackbone::hed_residual;
  throw ConfigError("edge_detector", "unknown edge detector '" + std::string(s) + "'");
}

std::string to_string(Extent e) {
  return std::to_string(e.width) + "x" + std::to_string(e.height);
}

Extent parse_extent(std::string_view s) {
  const auto x = s.find('x');
  if (x == std::string_view::npos) {
    const int side = parse_int("size", trim(s));
    return {side, side};
  }
  return {parse_int("size", trim(s.substr(0, x))), parse_int("size", trim(s.substr(x + 1)))};
}

double ExperimentConfig::lambda_p_of(PairTag tag) const { return lookup(lambda_p, tag); }
double ExperimentConfig::lambda_ep_of(PairTag tag) const { return lookup(lambda_ep, tag); }
double ExperimentConfig::lambda_ei_of(PairTag tag) const { return lookup(lambda_ei, tag); }

void ExperimentConfig::validate() const {
  auto nonneg = [](const std::string& key, double v) {
    if (!std::isfinite(v) || v < 0.0)
      throw ConfigError(key, "weight must be a finite value >= 0, got " + format_double(v));
  };
  auto positive = [](const std::string& key, long v) {
    if (v < 1) throw ConfigError(key, "must be a positive integer, got " + std::to_string(v));
  };

  nonneg("lambda_cyc_A", lambda_cyc_A);
  nonneg("lambda_cyc_B", lambda_cyc_B);
  for (auto [kind, map] : {std::pair{"p", &lambda_p}, {"ep", &lambda_ep}, {"ei", &lambda_ei}})
    for (const auto& [tag, v] : *map) nonneg(lambda_key(kind, tag), v);

  positive("n_iter", n_iter);
  positive("n_iter_decay", n_iter_decay);
  if (!(base_lr > 0.0) || !std::isfinite(base_lr))
    throw ConfigError("lr", "learning rate must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0)) throw ConfigError("beta1", "must lie in (0, 1)");
  if (pool_size < 0) throw ConfigError("pool_size", "must be >= 0");

  positive("load_size", std::min(load_size.width, load_size.height));
  positive("crop_size", std::min(crop_size.width, crop_size.height));
  if (crop_size.width > load_size.width || crop_size.height > load_size.height)
    throw ConfigError("crop_size", "crop " + to_string(crop_size) + " exceeds load size " +
                                       to_string(load_size));

  positive("n_scales", n_scales);
  if (generator_arch == GeneratorArch::fcdensenet) {
    if (n_scales > 30) throw ConfigError("n_scales", "too many scales");
    const long factor = 1L << n_scales;
    if (crop_size.width % factor != 0 || crop_size.height % factor != 0)
      throw ConfigError("n_scales", "crop " + to_string(crop_size) + " is not divisible by 2^" +
                                        std::to_string(n_scales));
  }
  positive("seg_classes", seg_classes);
  positive("growth_rate", growth_rate);
  positive("layers_per_block", layers_per_block);
  positive("stem_channels", stem_channels);
  positive("resnet_width", resnet_width);
  if (resnet_blocks < 0) throw ConfigError("resnet_blocks", "must be >= 0");
  positive("disc_width", disc_width);
  positive("disc_levels", disc_levels);
  positive("batch_size", batch_size);
  positive("save_epoch_freq", save_epoch_freq);
}

ExperimentConfig builtin_config(std::string_view name) {
  ExperimentConfig c = constants();
  c.name = std::string(name);
  if (name == "cycle") {
    c.lambda_cyc_A = 10;
    c.lambda_cyc_B = 10;
    c.generator_arch = GeneratorArch::resnet_blocks;
  } else if (name == "cycle+pdist") {
    c.lambda_cyc_A = 10;
    c.lambda_cyc_B = 10;
    for (PairTag t : kAllPairTags) c.lambda_p[t] = 0.25;
    c.generator_arch = GeneratorArch::fcdensenet;
  } else if (name == "cycle+edge") {
    c.lambda_cyc_A = 10;
    c.lambda_cyc_B = 5;
    c.lambda_ep[PairTag::afb] = 100;
    c.lambda_ep[PairTag::farb] = 100;
    c.lambda_ei[PairTag::bfa] = 10;
    c.lambda_ei[PairTag::fbra] = 10;
    c.generator_arch = GeneratorArch::fcdensenet;
  } else {
    throw ConfigError("preset", "unknown preset '" + std::string(name) +
                                    "' (expected cycle, cycle+pdist or cycle+edge)");
  }
  return c;
}

ExperimentConfig parse_experiment_config(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = line;
    if (auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = trim(view);
    if (view.empty()) continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("line " + std::to_string(line_no), "expected 'key = value'");
    std::string key(trim(view.substr(0, eq)));
    std::string value(trim(view.substr(eq + 1)));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no), "empty key");
    entries.emplace_back(std::move(key), std::move(value));
  }

  ExperimentConfig c = constants();
  for (const auto& [key, value] : entries)
    if (key == "preset") c = builtin_config(value);

  bool scales_given = false;
  for (const auto& [key, value] : entries) {
    if (key == "preset") continue;
    if (key == "name") {
      c.name = value;
    } else if (key == "lambda_cyc_A") {
      c.lambda_cyc_A = parse_double(key, value);
    } else if (key == "lambda_cyc_B") {
      c.lambda_cyc_B = parse_double(key, value);
    } else if (key.rfind("lambda_", 0) == 0) {
      const auto rest = std::string_view(key).substr(7);
      const auto us = rest.find('_');
      if (us == std::string_view::npos) throw ConfigError(key, "unknown key");
      const auto kind = rest.substr(0, us);
      PairTag tag;
      try {
        tag = pair_tag_from_string(rest.substr(us + 1));
      } catch (const ConfigError&) {
        throw ConfigError(key, "unknown key");
      }
      const double v = parse_double(key, value);
      if (kind == "p")
        set_lambda(c.lambda_p, tag, v);
      else if (kind == "ep")
        set_lambda(c.lambda_ep, tag, v);
      else if (kind == "ei")
        set_lambda(c.lambda_ei, tag, v);
      else
        throw ConfigError(key, "unknown key");
    } else if (key == "n_iter") {
      c.n_iter = parse_int(key, value);
    } else if (key == "n_iter_decay") {
      c.n_iter_decay = parse_int(key, value);
    } else if (key == "lr") {
      c.base_lr = parse_double(key, value);
    } else if (key == "beta1") {
      c.beta1 = parse_double(key, value);
    } else if (key == "pool_size") {
      c.pool_size = parse_int(key, value);
    } else if (key == "load_size" || key == "crop_size") {
      Extent e;
      try {
        e = parse_extent(value);
      } catch (const ConfigError&) {
        throw ConfigError(key, "expected WxH, got '" + value + "'");
      }
      (key == "load_size" ? c.load_size : c.crop_size) = e;
    } else if (key == "generator_arch") {
      c.generator_arch = generator_arch_from_string(value);
    } else if (key == "n_scales") {
      c.n_scales = parse_int(key, value);
      scales_given = true;
    } else if (key == "use_seg_discriminator") {
      c.use_seg_discriminator = parse_bool(key, value);
    } else if (key == "seg_classes") {
      c.seg_classes = parse_int(key, value);
    } else if (key == "perceptual_extractor") {
      c.perceptual_extractor = perceptual_mode_from_string(value);
    } else if (key == "edge_detector") {
      c.edge_detector = edge_backbone_from_string(value);
    } else if (key == "growth_rate") {
      c.growth_rate = parse_int(key, value);
    } else if (key == "layers_per_block") {
      c.layers_per_block = parse_int(key, value);
    } else if (key == "stem_channels") {
      c.stem_channels = parse_int(key, value);
    } else if (key == "resnet_width") {
      c.resnet_width = parse_int(key, value);
    } else if (key == "resnet_blocks") {
      c.resnet_blocks = parse_int(key, value);
    } else if (key == "disc_width") {
      c.disc_width = parse_int(key, value);
    } else if (key == "disc_levels") {
      c.disc_levels = parse_int(key, value);
    } else if (key == "batch_size") {
      c.batch_size = parse_int(key, value);
    } else if (key == "input_skip") {
      c.input_skip = parse_bool(key, value);
    } else if (key == "flip") {
      c.flip = parse_bool(key, value);
    } else if (key == "save_epoch_freq") {
      c.save_epoch_freq = parse_int(key, value);
    } else {
      throw ConfigError(key, "unknown key");
    }
  }

  if (!scales_given && c.generator_arch == GeneratorArch::fcdensenet && c.crop_size.width > 0 &&
      c.crop_size.height > 0) {
    try {
      c.n_scales = derived_scales(c.crop_size);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("crop_size", e.what());
    }
  }
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_experiment_config(buf.str());
}

std::string serialize_config(const ExperimentConfig& c) {
  std::ostringstream out;
  out << "name = " << c.name << "\n";
  out << "lambda_cyc_A = " << format_double(c.lambda_cyc_A) << "\n";
  out << "lambda_cyc_B = " << format_double(c.lambda_cyc_B) << "\n";
  for (auto [kind, map] : {std::pair{"p", &c.lambda_p}, {"ep", &c.lambda_ep}, {"ei", &c.lambda_ei}})
    for (PairTag t : kAllPairTags)
      out << lambda_key(kind, t) << " = " << format_double(lookup(*map, t)) << "\n";
  out << "n_iter = " << c.n_iter << "\n";
  out << "n_iter_decay = " << c.n_iter_decay << "\n";
  out << "lr = " << format_double(c.base_lr) << "\n";
  out << "beta1 = " << format_double(c.beta1) << "\n";
  out << "pool_size = " << c.pool_size << "\n";
  out << "load_size = " << to_string(c.load_size) << "\n";
  out << "crop_size = " << to_string(c.crop_size) << "\n";
  out << "generator_arch = " << to_string(c.generator_arch) << "\n";
  out << "n_scales = " << c.n_scales << "\n";
  out << "use_seg_discriminator = " << (c.use_seg_discriminator ? "true" : "false") << "\n";
  out << "seg_classes = " << c.seg_classes << "\n";
  out << "perceptual_extractor = " << to_string(c.perceptual_extractor) << "\n";
  out << "edge_detector = " << to_string(c.edge_detector) << "\n";
  out << "growth_rate = " << c.growth_rate << "\n";
  out << "layers_per_block = " << c.layers_per_block << "\n";
  out << "stem_channels = " << c.stem_channels << "\n";
  out << "resnet_width = " << c.resnet_width << "\n";
  out << "resnet_blocks = " << c.resnet_blocks << "\n";
  out << "input_skip = " << (c.input_skip ? "true" : "false") << "\n";
  out << "disc_width = " << c.disc_width << "\n";
  out << "disc_levels = " << c.disc_levels << "\n";
  out << "batch_size = " << c.batch_size << "\n";
  out << "flip = " << (c.flip ? "true" : "false") << "\n";
  out << "save_epoch_freq = " << c.save_epoch_freq << "\n";
  return out.str();
}

std::uint64_t config_hash(const ExperimentConfig& config) {
  // FNV-1a
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : serialize_config(config)) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

double learning_rate_at(const LrSchedule& s, int epoch) {
  if (epoch < s.n_iter) return s.base_lr;
  const double progress = static_cast<double>(epoch - s.n_iter) / s.n_iter_decay;
  if (progress >= 1.0) return 0.0;
  return s.base_lr * (1.0 - progress);
}

}  // namespace structgan
