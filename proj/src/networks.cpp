#include "structgan/networks.hpp"

#include <sstream>
#include <stdexcept>

namespace structgan {

namespace nn = torch::nn;

int scales_for_crop(int crop_side) {
  if (crop_side < 4)
    throw std::invalid_argument("scales_for_crop: crop side " + std::to_string(crop_side) +
                                " is below the minimum of 4");
  if (crop_side % 2 != 0)
    throw std::invalid_argument("scales_for_crop: crop side " + std::to_string(crop_side) +
                                " has no factor of 2");
  int s = 0;
  while (s < 8 && crop_side % (1 << (s + 1)) == 0) ++s;
  return s;
}

torch::Tensor subpixel_upsample(const torch::Tensor& x, int64_t r) {
  if (r < 1) throw std::invalid_argument("subpixel_upsample: factor must be >= 1");
  const bool batched = x.dim() == 4;
  if (!batched && x.dim() != 3)
    throw std::invalid_argument("subpixel_upsample: expected (C, H, W) or (N, C, H, W)");
  auto in = batched ? x : x.unsqueeze(0);
  const auto n = in.size(0), c = in.size(1), h = in.size(2), w = in.size(3);
  if (c % (r * r) != 0)
    throw std::invalid_argument("subpixel_upsample: " + std::to_string(c) +
                                " channels are not divisible by r^2 = " + std::to_string(r * r));
  const auto oc = c / (r * r);
  auto out = in.reshape({n, oc, r, r, h, w}).permute({0, 1, 4, 2, 5, 3}).reshape({n, oc, h * r, w * r});
  return batched ? out : out.squeeze(0);
}

torch::Tensor subpixel_downsample(const torch::Tensor& x, int64_t r) {
  if (r < 1) throw std::invalid_argument("subpixel_downsample: factor must be >= 1");
  const bool batched = x.dim() == 4;
  if (!batched && x.dim() != 3)
    throw std::invalid_argument("subpixel_downsample: expected (C, H, W) or (N, C, H, W)");
  auto in = batched ? x : x.unsqueeze(0);
  const auto n = in.size(0), c = in.size(1), h = in.size(2), w = in.size(3);
  if (h % r != 0 || w % r != 0)
    throw std::invalid_argument("subpixel_downsample: spatial size not divisible by factor");
  auto out = in.reshape({n, c, h / r, r, w / r, r}).permute({0, 1, 3, 5, 2, 4}).reshape(
      {n, c * r * r, h / r, w / r});
  return batched ? out : out.squeeze(0);
}

TransformerSpec TransformerSpec::from_config(const ExperimentConfig& c) {
  TransformerSpec s;
  s.arch = c.generator_arch;
  s.n_scales = c.n_scales;
  s.layers_per_block = c.layers_per_block;
  s.growth_rate = c.growth_rate;
  s.stem_channels = c.stem_channels;
  s.resnet_width = c.resnet_width;
  s.resnet_blocks = c.resnet_blocks;
  s.input_skip = c.input_skip;
  return s;
}

void TransformerSpec::validate() const {
  if (n_scales < 1 || n_scales > 16)
    throw std::invalid_argument("TransformerSpec: n_scales must be in [1, 16]");
  if (layers_per_block < 1 || growth_rate < 1 || stem_channels < 1)
    throw std::invalid_argument("TransformerSpec: dense block sizes must be positive");
  if (resnet_width < 1 || resnet_blocks < 0)
    throw std::invalid_argument("TransformerSpec: invalid residual generator width");
  if (io_channels < 1 || out_channels < 1)
    throw std::invalid_argument("TransformerSpec: channel counts must be positive");
  if (input_skip && (head != HeadActivation::tanh || io_channels != out_channels))
    throw std::invalid_argument("TransformerSpec: input_skip needs a tanh head and out_channels == io_channels");
}

namespace {

// Output layer of an input_skip generator: the initial mapping is exactly 0.999 x.
void zero_init(nn::Conv2dImpl& conv) {
  torch::NoGradGuard no_grad;
  conv.weight.zero_();
  if (conv.bias.defined()) conv.bias.zero_();
}

}  // namespace

torch::Tensor TransformerImpl::finish(const torch::Tensor& out, const torch::Tensor& x) const {
  if (spec_.head == HeadActivation::sigmoid) return torch::sigmoid(out);
  if (!spec_.input_skip) return torch::tanh(out);
  return torch::tanh(out + torch::atanh(0.999 * x.clamp(-1, 1)));
}

// --- FC-DenseNet ------------------------------------------------------------

DenseLayerImpl::DenseLayerImpl(int in_channels, int growth)
    : norm(register_module("norm", nn::GroupNorm(nn::GroupNormOptions(1, in_channels)))),
      conv(register_module("conv",
                           nn::Conv2d(nn::Conv2dOptions(in_channels, growth, 3).padding(1)))) {}

torch::Tensor DenseLayerImpl::forward(const torch::Tensor& x) {
  return conv(torch::relu(norm(x)));
}

DenseBlockImpl::DenseBlockImpl(int in_channels, int n_layers, int growth)
    : in_channels_(in_channels), n_layers_(n_layers), growth_(growth) {
  for (int i = 0; i < n_layers; ++i)
    layers.push_back(
        register_module("layer" + std::to_string(i), DenseLayer(in_channels + i * growth, growth)));
}

std::pair<torch::Tensor, torch::Tensor> DenseBlockImpl::forward(const torch::Tensor& x) {
  std::vector<torch::Tensor> all{x};
  std::vector<torch::Tensor> fresh;
  for (auto& layer : layers) {
    auto y = layer->forward(torch::cat(all, 1));
    all.push_back(y);
    fresh.push_back(y);
  }
  return {torch::cat(all, 1), torch::cat(fresh, 1)};
}

SubpixelUpImpl::SubpixelUpImpl(int in_channels, int out_channels)
    : conv(register_module(
          "conv", nn::Conv2d(nn::Conv2dOptions(in_channels, 4 * out_channels, 3).padding(1)))) {}

torch::Tensor SubpixelUpImpl::forward(const torch::Tensor& x) {
  return subpixel_upsample(conv(x), 2);
}

FcDenseNetImpl::FcDenseNetImpl(TransformerSpec spec) : TransformerImpl(std::move(spec)) {
  spec_.validate();
  const int L = spec_.layers_per_block, g = spec_.growth_rate;
  stem_ = register_module(
      "stem", nn::Conv2d(nn::Conv2dOptions(spec_.io_channels, spec_.stem_channels, 3).padding(1)));

  int channels = spec_.stem_channels;
  std::vector<int> skip_channels;
  for (int l = 0; l < spec_.n_scales; ++l) {
    auto block = register_module("down" + std::to_string(l), DenseBlock(channels, L, g));
    channels = block->out_channels();
    skip_channels.push_back(channels);
    down_blocks_.push_back(block);
    transitions_down_.push_back(register_module(
        "td" + std::to_string(l),
        nn::Sequential(nn::GroupNorm(nn::GroupNormOptions(1, channels)), nn::ReLU(),
                       nn::Conv2d(nn::Conv2dOptions(channels, channels, 3).stride(2).padding(1)))));
  }
  bottleneck_ = register_module("bottleneck", DenseBlock(channels, L, g));

  int up_in = bottleneck_->new_channels();
  int final_channels = 0;
  for (int l = spec_.n_scales - 1; l >= 0; --l) {
    const int upsampled = L * g;
    transitions_up_.push_back(
        register_module("tu" + std::to_string(l), SubpixelUp(up_in, upsampled)));
    auto block = register_module("up" + std::to_string(l),
                                 DenseBlock(upsampled + skip_channels[l], L, g));
    up_blocks_.push_back(block);
    up_in = block->new_channels();
    final_channels = block->out_channels();
  }
  head_ = register_module(
      "head", nn::Conv2d(nn::Conv2dOptions(final_channels, spec_.out_channels, 1)));
  init_weights(*this);
  if (spec_.input_skip) zero_init(*head_);
}

torch::Tensor FcDenseNetImpl::encode(const torch::Tensor& x) {
  auto h = stem_(x);
  for (int l = 0; l < spec_.n_scales; ++l)
    h = transitions_down_[l]->forward(down_blocks_[l]->forward(h).first);
  return bottleneck_->forward(h).second;
}

torch::Tensor FcDenseNetImpl::forward(torch::Tensor x) {
  auto h = stem_(x);
  std::vector<torch::Tensor> skips;
  for (int l = 0; l < spec_.n_scales; ++l) {
    auto all = down_blocks_[l]->forward(h).first;
    skips.push_back(all);
    h = transitions_down_[l]->forward(all);
  }
  auto fresh = bottleneck_->forward(h).second;
  torch::Tensor all;
  for (std::size_t i = 0; i < up_blocks_.size(); ++i) {
    const auto level = spec_.n_scales - 1 - static_cast<int>(i);
    auto up = transitions_up_[i]->forward(fresh);
    std::tie(all, fresh) = up_blocks_[i]->forward(torch::cat({up, skips[level]}, 1));
  }
  auto out = head_(all);
  return finish(out, x);
}

// --- Residual baseline ------------------------------------------------------

ResidualBlockImpl::ResidualBlockImpl(int channels) {
  body = register_module(
      "body", nn::Sequential(nn::ReflectionPad2d(1), nn::Conv2d(nn::Conv2dOptions(channels, channels, 3)),
                             nn::InstanceNorm2d(nn::InstanceNorm2dOptions(channels).affine(true)),
                             nn::ReLU(), nn::ReflectionPad2d(1),
                             nn::Conv2d(nn::Conv2dOptions(channels, channels, 3)),
                             nn::InstanceNorm2d(nn::InstanceNorm2dOptions(channels).affine(true))));
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) { return x + body->forward(x); }

ResnetGeneratorImpl::ResnetGeneratorImpl(TransformerSpec spec) : TransformerImpl(std::move(spec)) {
  spec_.validate();
  const int w = spec_.resnet_width;
  auto inorm = [](int c) { return nn::InstanceNorm2d(nn::InstanceNorm2dOptions(c).affine(true)); };
  nn::Sequential seq(nn::ReflectionPad2d(3), nn::Conv2d(nn::Conv2dOptions(spec_.io_channels, w, 7)),
                     inorm(w), nn::ReLU(),
                     nn::Conv2d(nn::Conv2dOptions(w, 2 * w, 3).stride(2).padding(1)), inorm(2 * w),
                     nn::ReLU(),
                     nn::Conv2d(nn::Conv2dOptions(2 * w, 4 * w, 3).stride(2).padding(1)),
                     inorm(4 * w), nn::ReLU());
  for (int i = 0; i < spec_.resnet_blocks; ++i) seq->push_back(ResidualBlock(4 * w));
  seq->push_back(nn::ConvTranspose2d(
      nn::ConvTranspose2dOptions(4 * w, 2 * w, 3).stride(2).padding(1).output_padding(1)));
  seq->push_back(inorm(2 * w));
  seq->push_back(nn::ReLU());
  seq->push_back(nn::ConvTranspose2d(
      nn::ConvTranspose2dOptions(2 * w, w, 3).stride(2).padding(1).output_padding(1)));
  seq->push_back(inorm(w));
  seq->push_back(nn::ReLU());
  seq->push_back(nn::ReflectionPad2d(3));
  seq->push_back(nn::Conv2d(nn::Conv2dOptions(w, spec_.out_channels, 7)));
  model_ = register_module("model", seq);
  init_weights(*this);
  if (spec_.input_skip) zero_init(*model_->ptr(model_->size() - 1)->as<nn::Conv2d>());
}

torch::Tensor ResnetGeneratorImpl::forward(torch::Tensor x) {
  auto out = model_->forward(x);
  return finish(out, x);
}

Transformer build_transformer(const TransformerSpec& spec) {
  spec.validate();
  if (spec.arch == GeneratorArch::fcdensenet) return FcDenseNet(spec).ptr();
  return ResnetGenerator(spec).ptr();
}

namespace {

torch::Tensor as_batch(const torch::Tensor& image, int channels, const char* op) {
  if (image.dim() != 3 && image.dim() != 4)
    throw std::invalid_argument(std::string(op) + ": expected (C, H, W) or (N, C, H, W)");
  auto x = image.dim() == 3 ? image.unsqueeze(0) : image;
  if (x.size(1) != channels)
    throw std::invalid_argument(std::string(op) + ": expected " + std::to_string(channels) +
                                " channels, got " + std::to_string(x.size(1)));
  return x;
}

}  // namespace

torch::Tensor transform(TransformerImpl& t, const torch::Tensor& image) {
  auto x = as_batch(image, t.spec().io_channels, "transform");
  const auto m = t.size_multiple();
  if (x.size(2) % m != 0 || x.size(3) % m != 0) {
    std::ostringstream os;
    os << "transform: input " << x.size(3) << "x" << x.size(2) << " must be divisible by " << m;
    if (t.spec().arch == GeneratorArch::fcdensenet) os << " (2^" << t.spec().n_scales << ")";
    throw std::invalid_argument(os.str());
  }
  auto y = t.forward(x);
  return image.dim() == 3 ? y.squeeze(0) : y;
}

torch::Tensor transform_padded(TransformerImpl& t, const torch::Tensor& image) {
  auto x = as_batch(image, t.spec().io_channels, "transform_padded");
  const auto m = t.size_multiple();
  const auto h = x.size(2), w = x.size(3);
  const auto ph = (m - h % m) % m, pw = (m - w % m) % m;
  if (ph || pw) {
    // Reflection needs the pad to be smaller than the side; fall back to replication.
    const bool reflect = ph < h && pw < w;
    torch::nn::functional::PadFuncOptions::mode_t mode = torch::kReplicate;
    if (reflect) mode = torch::kReflect;
    x = torch::nn::functional::pad(x, torch::nn::functional::PadFuncOptions({0, pw, 0, ph}).mode(mode));
  }
  auto y = t.forward(x);
  y = y.index({torch::indexing::Slice(), torch::indexing::Slice(), torch::indexing::Slice(0, h),
               torch::indexing::Slice(0, w)});
  return image.dim() == 3 ? y.squeeze(0) : y;
}

// --- Discriminator ----------------------------------------------------------

PatchDiscriminatorImpl::PatchDiscriminatorImpl(DiscriminatorSpec spec) : spec_(spec) {
  if (spec_.levels < 2) throw std::invalid_argument("PatchDiscriminator: need at least 2 levels");
  if (spec_.seg_classes < 0 || spec_.width < 1)
    throw std::invalid_argument("PatchDiscriminator: invalid spec");
  auto lrelu = [] { return nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)); };
  nn::Sequential seq(
      nn::Conv2d(nn::Conv2dOptions(spec_.input_channels(), spec_.width, 4).stride(2).padding(1)),
      lrelu());
  int channels = spec_.width;
  for (int l = 1; l < spec_.levels; ++l) {
    const int next = spec_.width * (1 << std::min(l, 3));
    const int stride = l < spec_.levels - 1 ? 2 : 1;
    seq->push_back(nn::Conv2d(nn::Conv2dOptions(channels, next, 4).stride(stride).padding(1)));
    seq->push_back(nn::InstanceNorm2d(nn::InstanceNorm2dOptions(next).affine(true)));
    seq->push_back(lrelu());
    channels = next;
  }
  body_ = register_module("body", seq);
  final_ = register_module("final", nn::Conv2d(nn::Conv2dOptions(channels, 1, 4).padding(1)));
  init_weights(*this);
}

torch::Tensor PatchDiscriminatorImpl::forward(const torch::Tensor& image,
                                              const std::optional<torch::Tensor>& segmaps) {
  if (image.dim() != 4) throw std::invalid_argument("discriminate: expected (N, C, H, W) images");
  torch::Tensor x = image;
  if (segmaps) {
    if (segmaps->dim() != 4 || segmaps->size(0) != image.size(0) ||
        segmaps->size(2) != image.size(2) || segmaps->size(3) != image.size(3))
      throw std::invalid_argument("discriminate: segmentation maps must match the image batch and resolution");
    x = torch::cat({image, *segmaps}, 1);
  }
  if (x.size(1) != spec_.input_channels()) {
    std::ostringstream os;
    os << "discriminate: expected " << spec_.input_channels() << " input channels ("
       << spec_.image_channels << " image + " << spec_.seg_classes << " segmentation), got "
       << x.size(1);
    throw std::invalid_argument(os.str());
  }
  return final_(body_->forward(x));
}

torch::Tensor discriminate(PatchDiscriminatorImpl& d, const torch::Tensor& image,
                           const std::optional<torch::Tensor>& segmaps) {
  return d.forward(image, segmaps);
}

void init_weights(torch::nn::Module& m) {
  torch::NoGradGuard no_grad;
  for (auto& mod : m.modules(/*include_self=*/false)) {
    if (auto* conv = mod->as<nn::Conv2d>()) {
      nn::init::normal_(conv->weight, 0.0, 0.02);
      if (conv->bias.defined()) nn::init::zeros_(conv->bias);
    } else if (auto* convt = mod->as<nn::ConvTranspose2d>()) {
      nn::init::normal_(convt->weight, 0.0, 0.02);
      if (convt->bias.defined()) nn::init::zeros_(convt->bias);
    }
  }
}

std::uint64_t parameter_checksum(const torch::nn::Module& m) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const torch::Tensor& t) {
    auto c = t.detach().contiguous().cpu();
    const auto* bytes = static_cast<const unsigned char*>(c.data_ptr());
    const auto n = c.numel() * c.element_size();
    for (int64_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& p : m.named_parameters()) mix(p.value());
  for (const auto& b : m.named_buffers()) mix(b.value());
  return h;
}

int64_t parameter_count(const torch::nn::Module& m) {
  int64_t n = 0;
  for (const auto& p : m.parameters()) n += p.numel();
  return n;
}

}  // namespace structgan
