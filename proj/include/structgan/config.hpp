#ifndef STRUCTGAN_CONFIG_HPP
#define STRUCTGAN_CONFIG_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>

namespace structgan {

// Raised for malformed config files and for values that break a config invariant.
// The message always names the offending key.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& what)
      : std::runtime_error(key + ": " + what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

// Image pairs a constraint loss can be attached to.
//   afb  = (original a, fake b_f)
//   bfa  = (original b, fake a_f)
//   farb = (fake b_f, reconstruction a_r)
//   fbra = (fake a_f, reconstruction b_r)
enum class PairTag { afb, bfa, farb, fbra };
inline constexpr std::array<PairTag, 4> kAllPairTags{PairTag::afb, PairTag::bfa, PairTag::farb,
                                                      PairTag::fbra};

std::string_view to_string(PairTag tag);
PairTag pair_tag_from_string(std::string_view s);

enum class GeneratorArch { resnet_blocks, fcdensenet };
enum class PerceptualMode { multi_layer, last_layer, analytic_stub };
enum class EdgeBackbone { analytic_sobel, hed_residual };

std::string_view to_string(GeneratorArch arch);
std::string_view to_string(PerceptualMode mode);
std::string_view to_string(EdgeBackbone backbone);
GeneratorArch generator_arch_from_string(std::string_view s);
PerceptualMode perceptual_mode_from_string(std::string_view s);
EdgeBackbone edge_backbone_from_string(std::string_view s);

struct Extent {
  int width = 0;
  int height = 0;
  friend bool operator==(const Extent&, const Extent&) = default;
};

std::string to_string(Extent e);
// Parses "WxH" or a single side "N" (square).
Extent parse_extent(std::string_view s);

using LambdaMap = std::map<PairTag, double>;

// Every hyperparameter of an experiment. Immutable once loaded.
struct ExperimentConfig {
  std::string name = "custom";

  double lambda_cyc_A = 0.0;
  double lambda_cyc_B = 0.0;
  LambdaMap lambda_p;
  LambdaMap lambda_ep;
  LambdaMap lambda_ei;

  int n_iter = 100;
  int n_iter_decay = 100;
  double base_lr = 0.0002;
  double beta1 = 0.5;
  int pool_size = 50;

  Extent load_size{256, 256};
  Extent crop_size{192, 192};

  GeneratorArch generator_arch = GeneratorArch::resnet_blocks;
  int n_scales = 6;
  bool use_seg_discriminator = false;
  int seg_classes = 5;
  PerceptualMode perceptual_extractor = PerceptualMode::analytic_stub;
  EdgeBackbone edge_detector = EdgeBackbone::analytic_sobel;

  // Architecture widths (desk-scale defaults).
  int growth_rate = 12;
  int layers_per_block = 4;
  int stem_channels = 32;
  int resnet_width = 16;
  int resnet_blocks = 6;
  // Generators start near the identity mapping (see TransformerSpec::input_skip).
  bool input_skip = false;
  int disc_width = 32;
  int disc_levels = 4;

  int batch_size = 1;
  bool flip = true;
  int save_epoch_freq = 5;

  // Weight of the given constraint kind on `tag`; absent tags weigh 0.
  double lambda_p_of(PairTag tag) const;
  double lambda_ep_of(PairTag tag) const;
  double lambda_ei_of(PairTag tag) const;

  // Throws ConfigError naming the first violated key.
  void validate() const;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

// Presets: "cycle", "cycle+pdist", "cycle+edge". Unknown names throw ConfigError.
ExperimentConfig builtin_config(std::string_view name);

// Flat `key = value` text, one per line, `#` starts a comment.
// A `preset = NAME` line selects the base; all other keys override it.
ExperimentConfig parse_experiment_config(std::string_view text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
std::string serialize_config(const ExperimentConfig& config);

// Stable 64-bit fingerprint of the serialized config.
std::uint64_t config_hash(const ExperimentConfig& config);

struct LrSchedule {
  int n_iter = 100;
  int n_iter_decay = 100;
  double base_lr = 0.0002;
};

inline LrSchedule schedule_of(const ExperimentConfig& c) {
  return {c.n_iter, c.n_iter_decay, c.base_lr};
}

// Constant for epoch < n_iter, then linear to zero over n_iter_decay epochs, 0 after.
double learning_rate_at(const LrSchedule& schedule, int epoch);

}  // namespace structgan

#endif
