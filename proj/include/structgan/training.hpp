#ifndef STRUCTGAN_TRAINING_HPP
#define STRUCTGAN_TRAINING_HPP

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "structgan/config.hpp"
#include "structgan/data.hpp"
#include "structgan/features.hpp"
#include "structgan/image_pool.hpp"
#include "structgan/losses.hpp"
#include "structgan/networks.hpp"

namespace structgan {

using ImagePool = BasicImagePool<torch::Tensor>;

// Queries the pool once per image of a (N, C, H, W) batch of fakes. Stored
// images are detached copies.
torch::Tensor pool_query(ImagePool& pool, const torch::Tensor& fakes);

// Images formed during one step.
enum class ImageRole { a, b, a_f, b_f, a_r, b_r };
std::string_view to_string(ImageRole role);

enum class LossKind { cycle, perceptual, edge_preservation, edge_introduction };

struct WiredLoss {
  LossKind kind;
  std::string term;  // LossReport column, e.g. "cyc_A", "ep_afb"
  ImageRole ref;
  ImageRole gen;
  double weight;
};

// Image pair behind a tag: afb = (a, b_f), bfa = (b, a_f), farb = (b_f, a_r), fbra = (a_f, b_r).
std::pair<ImageRole, ImageRole> pair_roles(PairTag tag);

// Constraint terms with nonzero weight; adversarial terms are always present
// and not listed.
std::vector<WiredLoss> wire_losses(const ExperimentConfig& config);

// Frozen helpers the objective may need. Missing ones are created from the
// config (Sobel edges, seeded perceptual stub); the segmentation network must
// be supplied when the config asks for segmentation-augmented discrimination.
struct TrainResources {
  std::optional<EdgeDetector> edges;
  PerceptualExtractor perceptual{nullptr};
  Segmenter segmenter{nullptr};

  void complete_for(const ExperimentConfig& config);
};

struct TrainState {
  TrainState(ExperimentConfig config, std::uint64_t seed, TrainResources resources = {});
  TrainState(const TrainState&) = delete;
  TrainState& operator=(const TrainState&) = delete;

  ExperimentConfig config;
  std::uint64_t seed;

  Transformer g_a2b, g_b2a;
  PatchDiscriminator d_a{nullptr}, d_b{nullptr};
  ImagePool pool_a;  // past fakes in domain A, shown to D_A
  ImagePool pool_b;
  std::unique_ptr<torch::optim::Adam> opt_g, opt_d;

  int epoch = 0;      // completed epochs
  std::int64_t step = 0;  // completed optimizer steps
  std::mt19937_64 rng;    // sampling, crops, flips
  std::string sampler_state;

  TrainResources resources;
  // When false, train_step leaves the discriminators untouched.
  bool update_discriminators = true;

  void set_learning_rate(double lr);
  double learning_rate() const;
};

// Carries the report of the step that produced a non-finite value.
class NonFiniteLossError : public std::runtime_error {
 public:
  NonFiniteLossError(const std::string& what, LossReport report)
      : std::runtime_error(what), report_(std::move(report)) {}
  const LossReport& report() const { return report_; }

 private:
  LossReport report_;
};

// One optimisation step on (N, 3, H, W) batches: both generators on the
// adversarial and wired constraint terms, then both discriminators on pooled fakes.
LossReport train_step(TrainState& state, const torch::Tensor& batch_a, const torch::Tensor& batch_b);

struct TrainOptions {
  std::filesystem::path out_dir;
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> resume;
  // Stop once this many epochs are complete (a checkpoint is written); -1 runs the full schedule.
  int stop_after_epoch = -1;
  TrainResources resources;
  std::function<void(const TrainState&, const LossReport&)> on_step;
  std::function<void(const TrainState&)> on_epoch;
};

struct TrainResult {
  int epochs_completed = 0;
  std::int64_t steps = 0;
  std::vector<std::filesystem::path> checkpoints;
  std::filesystem::path metrics;
  std::optional<LossReport> last_report;
};

// Runs the schedule from epoch 0 (or the resumed checkpoint). Writes
// out_dir/metrics.csv (one row per step) and out_dir/checkpoint_epoch_NNN.pt
// every save_epoch_freq epochs, after the final epoch and when stopping early.
TrainResult train(const ExperimentConfig& config, const UnpairedDataset& dataset_a,
                  const UnpairedDataset& dataset_b, TrainOptions options);

std::filesystem::path checkpoint_path(const std::filesystem::path& out_dir, int epoch);

}  // namespace structgan

#endif
