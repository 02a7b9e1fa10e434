#include "structgan/training.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "structgan/checkpoint.hpp"

namespace structgan {

namespace fs = std::filesystem;

torch::Tensor pool_query(ImagePool& pool, const torch::Tensor& fakes) {
  if (fakes.dim() != 4) throw std::invalid_argument("pool_query: expected (N, C, H, W) fakes");
  std::vector<torch::Tensor> out;
  out.reserve(static_cast<std::size_t>(fakes.size(0)));
  for (int64_t i = 0; i < fakes.size(0); ++i) out.push_back(pool.query(fakes[i].detach().clone()));
  return torch::stack(out);
}

std::string_view to_string(ImageRole role) {
  switch (role) {
    case ImageRole::a: return "a";
    case ImageRole::b: return "b";
    case ImageRole::a_f: return "a_f";
    case ImageRole::b_f: return "b_f";
    case ImageRole::a_r: return "a_r";
    case ImageRole::b_r: return "b_r";
  }
  return "?";
}

std::pair<ImageRole, ImageRole> pair_roles(PairTag tag) {
  switch (tag) {
    case PairTag::afb: return {ImageRole::a, ImageRole::b_f};
    case PairTag::bfa: return {ImageRole::b, ImageRole::a_f};
    case PairTag::farb: return {ImageRole::b_f, ImageRole::a_r};
    case PairTag::fbra: return {ImageRole::a_f, ImageRole::b_r};
  }
  throw std::logic_error("pair_roles: bad tag");
}

std::vector<WiredLoss> wire_losses(const ExperimentConfig& config) {
  std::vector<WiredLoss> wired;
  if (config.lambda_cyc_A > 0)
    wired.push_back({LossKind::cycle, std::string(term::cyc_A), ImageRole::a, ImageRole::a_r,
                     config.lambda_cyc_A});
  if (config.lambda_cyc_B > 0)
    wired.push_back({LossKind::cycle, std::string(term::cyc_B), ImageRole::b, ImageRole::b_r,
                     config.lambda_cyc_B});
  const std::array<std::pair<ConstraintKind, LossKind>, 3> kinds{{
      {ConstraintKind::perceptual, LossKind::perceptual},
      {ConstraintKind::edge_preservation, LossKind::edge_preservation},
      {ConstraintKind::edge_introduction, LossKind::edge_introduction},
  }};
  for (auto [ck, lk] : kinds) {
    for (PairTag tag : kAllPairTags) {
      const std::string name = term_name(ck, tag);
      const double w = term_weight(name, config);
      if (w == 0) continue;
      auto [ref, gen] = pair_roles(tag);
      wired.push_back({lk, name, ref, gen, w});
    }
  }
  return wired;
}

void TrainResources::complete_for(const ExperimentConfig& config) {
  if (!edges) edges = EdgeDetector::from_config(config);
  if (!perceptual) {
    PerceptualSpec spec;
    spec.mode = config.perceptual_extractor;
    perceptual = PerceptualExtractor(spec);
  }
  if (config.use_seg_discriminator) {
    if (!segmenter)
      throw std::invalid_argument(
          "use_seg_discriminator is set but no segmentation network was supplied");
    if (segmenter->classes() != config.seg_classes)
      throw std::invalid_argument("segmentation network has " + std::to_string(segmenter->classes()) +
                                  " classes, config expects seg_classes = " +
                                  std::to_string(config.seg_classes));
    freeze(*segmenter);
  }
}

TrainState::TrainState(ExperimentConfig cfg, std::uint64_t seed_, TrainResources res)
    : config(std::move(cfg)),
      seed(seed_),
      pool_a(static_cast<std::size_t>(config.pool_size), seed_ + 1),
      pool_b(static_cast<std::size_t>(config.pool_size), seed_ + 2),
      rng(seed_),
      resources(std::move(res)) {
  config.validate();
  resources.complete_for(config);

  torch::manual_seed(seed);
  const auto tspec = TransformerSpec::from_config(config);
  g_a2b = build_transformer(tspec);
  g_b2a = build_transformer(tspec);
  DiscriminatorSpec dspec;
  dspec.width = config.disc_width;
  dspec.levels = config.disc_levels;
  d_a = PatchDiscriminator(dspec);
  if (config.use_seg_discriminator) dspec.seg_classes = config.seg_classes;
  d_b = PatchDiscriminator(dspec);
  for (torch::nn::Module* m : std::initializer_list<torch::nn::Module*>{
           g_a2b.get(), g_b2a.get(), d_a.get(), d_b.get()})
    init_weights(*m);

  const auto adam = torch::optim::AdamOptions(config.base_lr).betas({config.beta1, 0.999});
  auto g_params = g_a2b->parameters();
  for (auto& p : g_b2a->parameters()) g_params.push_back(p);
  auto d_params = d_a->parameters();
  for (auto& p : d_b->parameters()) d_params.push_back(p);
  opt_g = std::make_unique<torch::optim::Adam>(g_params, adam);
  opt_d = std::make_unique<torch::optim::Adam>(d_params, adam);
}

void TrainState::set_learning_rate(double lr) {
  for (auto* opt : {opt_g.get(), opt_d.get()})
    for (auto& group : opt->param_groups())
      static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
}

double TrainState::learning_rate() const {
  return static_cast<const torch::optim::AdamOptions&>(opt_g->param_groups().front().options()).lr();
}

namespace {

void set_requires_grad(torch::nn::Module& m, bool on) {
  for (auto& p : m.parameters()) p.set_requires_grad(on);
}

struct StepImages {
  torch::Tensor a, b, a_f, b_f, a_r, b_r;
  const torch::Tensor& get(ImageRole r) const {
    switch (r) {
      case ImageRole::a: return a;
      case ImageRole::b: return b;
      case ImageRole::a_f: return a_f;
      case ImageRole::b_f: return b_f;
      case ImageRole::a_r: return a_r;
      case ImageRole::b_r: return b_r;
    }
    throw std::logic_error("bad role");
  }
};

class FeatureCache {
 public:
  FeatureCache(const StepImages& imgs, TrainResources& res) : imgs_(imgs), res_(res) {}
  const torch::Tensor& edges(ImageRole r) {
    auto& slot = edges_[static_cast<int>(r)];
    if (!slot.defined()) slot = res_.edges->detect(imgs_.get(r));
    return slot;
  }
  const FeatureStack& features(ImageRole r) {
    auto& slot = features_[static_cast<int>(r)];
    if (!slot) slot = res_.perceptual->forward(imgs_.get(r));
    return *slot;
  }

 private:
  const StepImages& imgs_;
  TrainResources& res_;
  std::array<torch::Tensor, 6> edges_;
  std::array<std::optional<FeatureStack>, 6> features_;
};

std::optional<torch::Tensor> segmaps_for(TrainState& s, const torch::Tensor& images_b) {
  if (!s.config.use_seg_discriminator) return std::nullopt;
  return s.resources.segmenter->forward(images_b);
}

double scalar(const torch::Tensor& t) { return t.item<double>(); }

}  // namespace

LossReport train_step(TrainState& s, const torch::Tensor& batch_a, const torch::Tensor& batch_b) {
  if (batch_a.dim() != 4 || batch_b.dim() != 4)
    throw std::invalid_argument("train_step: expected (N, 3, H, W) batches");
  s.g_a2b->train();
  s.g_b2a->train();
  s.d_a->train();
  s.d_b->train();

  LossComponents components;
  const auto wired = wire_losses(s.config);

  // Generators.
  set_requires_grad(*s.d_a, false);
  set_requires_grad(*s.d_b, false);
  StepImages im;
  im.a = batch_a;
  im.b = batch_b;
  im.b_f = transform(*s.g_a2b, im.a);
  im.a_f = transform(*s.g_b2a, im.b);
  im.a_r = transform(*s.g_b2a, im.b_f);
  im.b_r = transform(*s.g_a2b, im.a_f);

  auto fail_if_non_finite = [&](const char* stage) {
    for (const auto& [name, v] : components)
      if (!std::isfinite(v)) {
        LossReport partial;
        for (const auto& [n, x] : components) partial.terms[n] = {x, term_weight(n, s.config)};
        throw NonFiniteLossError(std::string("train_step: non-finite ") + name + " during " + stage +
                                     " update at step " + std::to_string(s.step),
                                 std::move(partial));
      }
  };
  // Score maps are checked before they reach the losses, so a diverged
  // network surfaces as a NonFiniteLossError with the partial report.
  auto guard = [&](std::string_view name, const torch::Tensor& t, const char* stage) {
    if (!torch::isfinite(t).all().item<bool>()) {
      components[std::string(name)] = std::numeric_limits<double>::quiet_NaN();
      fail_if_non_finite(stage);
    }
    return t;
  };

  auto g_adv_a2b = adversarial_generator_loss(
      guard(term::g_adv_A2B, s.d_b->forward(im.b_f, segmaps_for(s, im.b_f)), "generator"));
  auto g_adv_b2a =
      adversarial_generator_loss(guard(term::g_adv_B2A, s.d_a->forward(im.a_f), "generator"));
  auto loss_g = g_adv_a2b + g_adv_b2a;
  components[std::string(term::g_adv_A2B)] = scalar(g_adv_a2b);
  components[std::string(term::g_adv_B2A)] = scalar(g_adv_b2a);

  FeatureCache cache(im, s.resources);
  for (const auto& w : wired) {
    torch::Tensor value;
    switch (w.kind) {
      case LossKind::cycle:
        value = cycle_consistency_loss(im.get(w.ref), im.get(w.gen));
        break;
      case LossKind::perceptual:
        value = perceptual_distance(cache.features(w.ref), cache.features(w.gen));
        break;
      case LossKind::edge_preservation:
        value = edge_preservation_loss(cache.edges(w.ref), cache.edges(w.gen));
        break;
      case LossKind::edge_introduction:
        value = edge_introduction_loss(cache.edges(w.ref), cache.edges(w.gen));
        break;
    }
    components[w.term] = scalar(value);
    loss_g = loss_g + w.weight * value;
  }
  fail_if_non_finite("generator");

  s.opt_g->zero_grad();
  loss_g.backward();
  s.opt_g->step();

  // Discriminators, on detached fakes drawn through the history pools.
  set_requires_grad(*s.d_a, true);
  set_requires_grad(*s.d_b, true);
  const auto fake_b = pool_query(s.pool_b, im.b_f.detach());
  const auto fake_a = pool_query(s.pool_a, im.a_f.detach());
  torch::Tensor d_b_loss, d_a_loss;
  {
    const auto seg_real = segmaps_for(s, im.b);
    const auto seg_fake = segmaps_for(s, fake_b);
    d_b_loss = adversarial_discriminator_loss(
        guard(term::d_B, s.d_b->forward(im.b, seg_real), "discriminator"),
        guard(term::d_B, s.d_b->forward(fake_b, seg_fake), "discriminator"));
    d_a_loss = adversarial_discriminator_loss(guard(term::d_A, s.d_a->forward(im.a), "discriminator"),
                                              guard(term::d_A, s.d_a->forward(fake_a), "discriminator"));
  }
  components[std::string(term::d_A)] = scalar(d_a_loss);
  components[std::string(term::d_B)] = scalar(d_b_loss);
  fail_if_non_finite("discriminator");

  if (s.update_discriminators) {
    s.opt_d->zero_grad();
    (d_a_loss + d_b_loss).backward();
    s.opt_d->step();
  }
  ++s.step;
  return total_objective(components, s.config);
}

fs::path checkpoint_path(const fs::path& out_dir, int epoch) {
  std::ostringstream name;
  name << "checkpoint_epoch_" << std::setw(3) << std::setfill('0') << epoch << ".pt";
  return out_dir / name.str();
}

namespace {

torch::Tensor load_batch(const UnpairedDataset& ds, const std::vector<std::size_t>& idx,
                         const ExperimentConfig& c, std::mt19937_64& rng) {
  std::vector<torch::Tensor> images;
  for (auto i : idx)
    images.push_back(preprocess(read_image(ds.items[i]), c.load_size, c.crop_size, rng, c.flip));
  return torch::stack(images);
}

void write_metrics_row(std::ofstream& out, const TrainState& s, double lr, const LossReport& r) {
  out << s.epoch << ',' << s.step << ',' << lr;
  for (double v : r.csv_values()) out << ',' << v;
  out << '\n';
}

}  // namespace

TrainResult train(const ExperimentConfig& config, const UnpairedDataset& dataset_a,
                  const UnpairedDataset& dataset_b, TrainOptions options) {
  if (dataset_a.size() == 0 || dataset_b.size() == 0)
    throw std::invalid_argument("train: both datasets must be non-empty");
  fs::create_directories(options.out_dir);

  TrainState state(config, options.seed, std::move(options.resources));
  if (options.resume) load_checkpoint(state, *options.resume);

  TrainResult result;
  result.metrics = options.out_dir / "metrics.csv";
  const bool fresh = !options.resume || !fs::exists(result.metrics);
  std::ofstream metrics(result.metrics, fresh ? std::ios::trunc : std::ios::app);
  if (!metrics) throw std::runtime_error("cannot write " + result.metrics.string());
  metrics << std::setprecision(17);
  if (fresh) {
    metrics << "epoch,step,lr";
    for (const auto& c : LossReport::columns()) metrics << ',' << c;
    metrics << '\n';
  }

  EpochSampler sampler(dataset_a.size(), dataset_b.size());
  if (!state.sampler_state.empty()) sampler.load_state(state.sampler_state);
  const int total_epochs = config.n_iter + config.n_iter_decay;
  const auto schedule = schedule_of(config);
  const auto batch = static_cast<std::size_t>(config.batch_size);

  while (state.epoch < total_epochs &&
         (options.stop_after_epoch < 0 || state.epoch < options.stop_after_epoch)) {
    const double lr = learning_rate_at(schedule, state.epoch);
    state.set_learning_rate(lr);
    const auto pairs = sampler.next_epoch(state.rng);
    for (std::size_t start = 0; start + batch <= pairs.size(); start += batch) {
      std::vector<std::size_t> ia, ib;
      for (std::size_t k = start; k < start + batch; ++k) {
        ia.push_back(pairs[k].first);
        ib.push_back(pairs[k].second);
      }
      const auto a = load_batch(dataset_a, ia, config, state.rng);
      const auto b = load_batch(dataset_b, ib, config, state.rng);
      auto report = train_step(state, a, b);
      write_metrics_row(metrics, state, lr, report);
      if (options.on_step) options.on_step(state, report);
      result.last_report = std::move(report);
    }
    metrics.flush();
    ++state.epoch;
    state.sampler_state = sampler.save_state();
    if (options.on_epoch) options.on_epoch(state);

    const bool stopping = state.epoch == total_epochs || state.epoch == options.stop_after_epoch;
    if (stopping || state.epoch % std::max(1, config.save_epoch_freq) == 0) {
      const auto path = checkpoint_path(options.out_dir, state.epoch);
      save_checkpoint(state, path);
      result.checkpoints.push_back(path);
    }
  }
  result.epochs_completed = state.epoch;
  result.steps = state.step;
  return result;
}

}  // namespace structgan
