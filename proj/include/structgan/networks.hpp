#ifndef STRUCTGAN_NETWORKS_HPP
#define STRUCTGAN_NETWORKS_HPP

#include <torch/torch.h>

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "structgan/config.hpp"

namespace structgan {

// Number of FC-DenseNet levels for a square crop side: the largest s with
// side % 2^s == 0, capped at 8. Throws std::invalid_argument for sides < 4 or odd sides.
int scales_for_crop(int crop_side);

// Periodic shuffle, (C*r*r, H, W) -> (C, H*r, W*r):
//   out[c, h*r + i, w*r + j] = in[c*r*r + i*r + j, h, w]
// Accepts unbatched (C, H, W) or batched (N, C, H, W) tensors.
torch::Tensor subpixel_upsample(const torch::Tensor& x, int64_t r);
// Exact inverse of subpixel_upsample.
torch::Tensor subpixel_downsample(const torch::Tensor& x, int64_t r);

enum class HeadActivation { tanh, sigmoid };

struct TransformerSpec {
  GeneratorArch arch = GeneratorArch::fcdensenet;
  int n_scales = 6;
  int layers_per_block = 4;
  int growth_rate = 12;
  int stem_channels = 32;
  int resnet_width = 16;
  int resnet_blocks = 6;
  int io_channels = 3;
  int out_channels = 3;
  HeadActivation head = HeadActivation::tanh;
  // tanh head only: out = tanh(net(x) + atanh(0.999 x)) with a zero-initialised
  // output layer, so a fresh generator starts at (nearly) the identity.
  bool input_skip = false;

  static TransformerSpec from_config(const ExperimentConfig& c);
  void validate() const;
};

// Common interface of the image-to-image generators.
class TransformerImpl : public torch::nn::Module {
 public:
  virtual torch::Tensor forward(torch::Tensor x) = 0;
  // Input sides must be multiples of this.
  virtual int64_t size_multiple() const = 0;
  const TransformerSpec& spec() const { return spec_; }

 protected:
  explicit TransformerImpl(TransformerSpec spec) : spec_(std::move(spec)) {}
  // Output activation applied to the network's pre-activation `out`.
  torch::Tensor finish(const torch::Tensor& out, const torch::Tensor& x) const;
  TransformerSpec spec_;
};

using Transformer = std::shared_ptr<TransformerImpl>;

struct DenseLayerImpl : torch::nn::Module {
  DenseLayerImpl(int in_channels, int growth);
  torch::Tensor forward(const torch::Tensor& x);
  torch::nn::GroupNorm norm{nullptr};
  torch::nn::Conv2d conv{nullptr};
};
TORCH_MODULE(DenseLayer);

// Returns (input ++ new features, new features only).
struct DenseBlockImpl : torch::nn::Module {
  DenseBlockImpl(int in_channels, int n_layers, int growth);
  std::pair<torch::Tensor, torch::Tensor> forward(const torch::Tensor& x);
  int out_channels() const { return in_channels_ + n_layers_ * growth_; }
  int new_channels() const { return n_layers_ * growth_; }
  std::vector<DenseLayer> layers;

 private:
  int in_channels_, n_layers_, growth_;
};
TORCH_MODULE(DenseBlock);

// Sub-pixel transition up: 3x3 conv to 4*out channels, then a factor-2 shuffle.
struct SubpixelUpImpl : torch::nn::Module {
  SubpixelUpImpl(int in_channels, int out_channels);
  torch::Tensor forward(const torch::Tensor& x);
  torch::nn::Conv2d conv{nullptr};
};
TORCH_MODULE(SubpixelUp);

// FC-DenseNet ("Tiramisu") with strided-conv transitions down and sub-pixel
// transitions up; one dense block per level plus a bottleneck block.
class FcDenseNetImpl : public TransformerImpl {
 public:
  explicit FcDenseNetImpl(TransformerSpec spec);
  torch::Tensor forward(torch::Tensor x) override;
  int64_t size_multiple() const override { return int64_t{1} << spec_.n_scales; }
  // Bottleneck features (new channels of the deepest dense block).
  torch::Tensor encode(const torch::Tensor& x);
  torch::nn::Conv2d& head_conv() { return head_; }

 private:
  torch::nn::Conv2d stem_{nullptr};
  std::vector<DenseBlock> down_blocks_;
  std::vector<torch::nn::Sequential> transitions_down_;
  DenseBlock bottleneck_{nullptr};
  std::vector<SubpixelUp> transitions_up_;
  std::vector<DenseBlock> up_blocks_;
  torch::nn::Conv2d head_{nullptr};
};
TORCH_MODULE(FcDenseNet);

struct ResidualBlockImpl : torch::nn::Module {
  explicit ResidualBlockImpl(int channels);
  torch::Tensor forward(const torch::Tensor& x);
  torch::nn::Sequential body{nullptr};
};
TORCH_MODULE(ResidualBlock);

// Baseline generator: two stride-2 downsamplings, residual blocks, two transposed-conv upsamplings.
class ResnetGeneratorImpl : public TransformerImpl {
 public:
  explicit ResnetGeneratorImpl(TransformerSpec spec);
  torch::Tensor forward(torch::Tensor x) override;
  int64_t size_multiple() const override { return 4; }

 private:
  torch::nn::Sequential model_{nullptr};
};
TORCH_MODULE(ResnetGenerator);

Transformer build_transformer(const TransformerSpec& spec);

// Strict application: sides must be multiples of size_multiple(). Accepts
// (C, H, W) or (N, C, H, W); output has the input's shape.
torch::Tensor transform(TransformerImpl& t, const torch::Tensor& image);
// Full-frame inference: reflect-pads up to the next valid size, crops back.
torch::Tensor transform_padded(TransformerImpl& t, const torch::Tensor& image);

struct DiscriminatorSpec {
  int image_channels = 3;
  int seg_classes = 0;  // 0: plain discriminator
  int width = 32;
  int levels = 4;
  int input_channels() const { return image_channels + seg_classes; }
};

// Strided convolutional patch discriminator emitting a (N, 1, h, w) score map.
class PatchDiscriminatorImpl : public torch::nn::Module {
 public:
  explicit PatchDiscriminatorImpl(DiscriminatorSpec spec);
  // Concatenates segmaps (N, K, H, W) after the image channels when present.
  torch::Tensor forward(const torch::Tensor& image,
                        const std::optional<torch::Tensor>& segmaps = std::nullopt);
  const DiscriminatorSpec& spec() const { return spec_; }
  torch::nn::Conv2d& final_conv() { return final_; }

 private:
  DiscriminatorSpec spec_;
  torch::nn::Sequential body_{nullptr};
  torch::nn::Conv2d final_{nullptr};
};
TORCH_MODULE(PatchDiscriminator);

torch::Tensor discriminate(PatchDiscriminatorImpl& d, const torch::Tensor& image,
                           const std::optional<torch::Tensor>& segmaps = std::nullopt);

// N(0, 0.02) conv weights and zero biases; norm layers get unit scale.
void init_weights(torch::nn::Module& m);

// Exact fingerprint of every parameter and buffer byte.
std::uint64_t parameter_checksum(const torch::nn::Module& m);
int64_t parameter_count(const torch::nn::Module& m);

}  // namespace structgan

#endif
