#ifndef STRUCTGAN_FEATURES_HPP
#define STRUCTGAN_FEATURES_HPP

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <vector>

#include "structgan/config.hpp"
#include "structgan/losses.hpp"
#include "structgan/networks.hpp"

namespace structgan {

// Freezes every parameter of `m` (no gradient, eval mode).
void freeze(torch::nn::Module& m);

// Luma of a (N, C, H, W) image with C in {1, 3}; returns (N, 1, H, W).
torch::Tensor to_grayscale(const torch::Tensor& images);

// Differentiable Sobel edge strength: grayscale, 3x3 Sobel with replicated
// borders, then 1 - exp(-|g|^2 / scale). Maps (C, H, W) -> (H, W) and
// (N, C, H, W) -> (N, 1, H, W); exactly 0 on constant regions.
torch::Tensor analytic_edge_oracle(const torch::Tensor& image, double scale = 1.0);

struct HedResidualSpec {
  int width = 16;
  std::vector<int> blocks{3, 4, 6, 3};  // ResNet-34 stage layout
};

// HED-style detector on a residual backbone: one side output per stage,
// upsampled to the input size and fused by a 1x1 conv, sigmoid output.
class HedResidualImpl : public torch::nn::Module {
 public:
  explicit HedResidualImpl(HedResidualSpec spec = {});
  torch::Tensor forward(const torch::Tensor& x);
  int64_t min_size() const { return int64_t{1} << (spec_.blocks.size() - 1); }

 private:
  HedResidualSpec spec_;
  torch::nn::Sequential stem_{nullptr};
  std::vector<torch::nn::Sequential> stages_;
  std::vector<torch::nn::Conv2d> sides_;
  torch::nn::Conv2d fuse_{nullptr};
};
TORCH_MODULE(HedResidual);

class EdgeDetector {
 public:
  static EdgeDetector sobel(double scale = 1.0);
  static EdgeDetector hed(HedResidualSpec spec = {});
  static EdgeDetector from_config(const ExperimentConfig& config);

  EdgeBackbone backbone() const { return backbone_; }
  // hed-residual detectors refuse to run until weights are supplied.
  bool ready() const { return backbone_ == EdgeBackbone::analytic_sobel || weights_loaded_; }
  void load_weights(const std::filesystem::path& path);
  void save_weights(const std::filesystem::path& path) const;
  // Marks in-memory weights as final (used after programmatic initialisation).
  void mark_weights_loaded() { weights_loaded_ = true; }
  HedResidual network() const { return net_; }

  torch::Tensor detect(const torch::Tensor& image) const;

 private:
  EdgeBackbone backbone_ = EdgeBackbone::analytic_sobel;
  double scale_ = 1.0;
  HedResidual net_{nullptr};
  bool weights_loaded_ = false;
};

torch::Tensor detect_edges(const torch::Tensor& image, const EdgeDetector& detector);

struct PerceptualSpec {
  PerceptualMode mode = PerceptualMode::analytic_stub;
  // Empty: equal weights summing to one.
  std::vector<double> layer_weights;
  std::uint64_t seed = 1234;
  // Channel divisor applied to the classic VGG/ResNet widths.
  int width_divisor = 8;
  // 16 or 19 (multi-layer only).
  int vgg_depth = 19;
};

// Frozen feature pyramid. Weights default to a fixed-seed random draw and can
// be replaced with pretrained ones through load_weights.
class PerceptualExtractorImpl : public torch::nn::Module {
 public:
  explicit PerceptualExtractorImpl(PerceptualSpec spec = {});
  FeatureStack forward(const torch::Tensor& image);
  int64_t min_size() const { return min_size_; }
  std::size_t layer_count() const { return taps_; }
  const PerceptualSpec& spec() const { return spec_; }
  void load_weights(const std::filesystem::path& path);

 private:
  void build_stub();
  void build_vgg();
  void build_resnet();

  PerceptualSpec spec_;
  // Each stage maps the previous stage output to a tapped activation.
  std::vector<torch::nn::Sequential> stages_;
  std::vector<double> weights_;
  int64_t min_size_ = 1;
  std::size_t taps_ = 0;
};
TORCH_MODULE(PerceptualExtractor);

FeatureStack extract_perceptual_features(const torch::Tensor& image,
                                         PerceptualExtractorImpl& extractor);

struct SegmenterSpec {
  int classes = 5;
  int n_scales = 3;
  int layers_per_block = 3;
  int growth_rate = 8;
  int stem_channels = 16;
};

// Segmentation network of the FC-DenseNet family with independent sigmoid
// heads, so one pixel can belong to several classes.
class SegmenterImpl : public torch::nn::Module {
 public:
  explicit SegmenterImpl(SegmenterSpec spec = {});
  // (N, 3, H, W) -> (N, K, H, W) in (0, 1); any H, W (reflect-padded internally).
  torch::Tensor forward(const torch::Tensor& image);
  int classes() const { return spec_.classes; }
  FcDenseNet net() const { return net_; }

 private:
  SegmenterSpec spec_;
  FcDenseNet net_{nullptr};
};
TORCH_MODULE(Segmenter);

torch::Tensor segment(const torch::Tensor& image, SegmenterImpl& segnet);

// Brief supervised fit on labelled images ((N, 3, H, W) in [-1, 1], labels
// (N, K, H, W) in {0, 1}) with per-class binary cross-entropy. Returns the
// final mean loss. Leaves the network frozen.
double train_segmenter(SegmenterImpl& segnet, const torch::Tensor& images,
                       const torch::Tensor& labels, int steps, double lr = 1e-3,
                       std::uint64_t seed = 0);

}  // namespace structgan

#endif
