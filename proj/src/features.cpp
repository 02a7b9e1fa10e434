#include "structgan/features.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>
#include <random>
#include <stdexcept>

namespace structgan {

namespace nn = torch::nn;
using torch::indexing::Slice;

void freeze(torch::nn::Module& m) {
  for (auto& p : m.parameters()) p.set_requires_grad(false);
  m.eval();
}

torch::Tensor to_grayscale(const torch::Tensor& images) {
  if (images.dim() != 4) throw std::invalid_argument("to_grayscale: expected (N, C, H, W)");
  if (images.size(1) == 1) return images;
  if (images.size(1) != 3)
    throw std::invalid_argument("to_grayscale: expected 1 or 3 channels, got " +
                                std::to_string(images.size(1)));
  return 0.299 * images.slice(1, 0, 1) + 0.587 * images.slice(1, 1, 2) +
         0.114 * images.slice(1, 2, 3);
}

namespace {

torch::Tensor as_batch(const torch::Tensor& image, const char* op) {
  if (image.dim() == 3) return image.unsqueeze(0);
  if (image.dim() == 4) return image;
  throw std::invalid_argument(std::string(op) + ": expected (C, H, W) or (N, C, H, W)");
}

torch::Tensor to_rgb(const torch::Tensor& x) {
  if (x.size(1) == 3) return x;
  if (x.size(1) == 1) return x.expand({x.size(0), 3, x.size(2), x.size(3)});
  throw std::invalid_argument("expected 1 or 3 image channels, got " + std::to_string(x.size(1)));
}

// Residual basic block; `norm` selects GroupNorm(1, C) after each conv.
struct BasicBlockImpl : nn::Module {
  BasicBlockImpl(int in, int out, int stride, bool norm) : use_norm(norm) {
    conv1 = register_module("conv1", nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(stride).padding(1)));
    conv2 = register_module("conv2", nn::Conv2d(nn::Conv2dOptions(out, out, 3).padding(1)));
    if (norm) {
      norm1 = register_module("norm1", nn::GroupNorm(nn::GroupNormOptions(1, out)));
      norm2 = register_module("norm2", nn::GroupNorm(nn::GroupNormOptions(1, out)));
    }
    if (in != out || stride != 1)
      shortcut = register_module("shortcut",
                                 nn::Conv2d(nn::Conv2dOptions(in, out, 1).stride(stride)));
  }
  torch::Tensor forward(const torch::Tensor& x) {
    auto h = conv1(x);
    if (use_norm) h = norm1(h);
    h = conv2(torch::relu(h));
    if (use_norm) h = norm2(h);
    return torch::relu(h + (shortcut ? shortcut(x) : x));
  }
  bool use_norm;
  nn::Conv2d conv1{nullptr}, conv2{nullptr}, shortcut{nullptr};
  nn::GroupNorm norm1{nullptr}, norm2{nullptr};
};
TORCH_MODULE(BasicBlock);

void load_module(nn::Module& m, const std::filesystem::path& path) {
  if (!std::filesystem::exists(path))
    throw std::runtime_error("weights file not found: " + path.string());
  torch::serialize::InputArchive archive;
  archive.load_from(path.string());
  m.load(archive);
}

}  // namespace

torch::Tensor analytic_edge_oracle(const torch::Tensor& image, double scale) {
  auto x = as_batch(image, "analytic_edge_oracle");
  auto gray = to_grayscale(x);
  const auto h = gray.size(2), w = gray.size(3);
  auto p = nn::functional::pad(gray, nn::functional::PadFuncOptions({1, 1, 1, 1}).mode(torch::kReplicate));
  // Separable Sobel on slices keeps constant regions exactly zero.
  auto smooth_v = p.index({Slice(), Slice(), Slice(0, h), Slice()}) +
                  2 * p.index({Slice(), Slice(), Slice(1, h + 1), Slice()}) +
                  p.index({Slice(), Slice(), Slice(2, h + 2), Slice()});
  auto gx = smooth_v.index({Slice(), Slice(), Slice(), Slice(2, w + 2)}) -
            smooth_v.index({Slice(), Slice(), Slice(), Slice(0, w)});
  auto smooth_h = p.index({Slice(), Slice(), Slice(), Slice(0, w)}) +
                  2 * p.index({Slice(), Slice(), Slice(), Slice(1, w + 1)}) +
                  p.index({Slice(), Slice(), Slice(), Slice(2, w + 2)});
  auto gy = smooth_h.index({Slice(), Slice(), Slice(2, h + 2), Slice()}) -
            smooth_h.index({Slice(), Slice(), Slice(0, h), Slice()});
  auto edges = -torch::expm1(-(gx.pow(2) + gy.pow(2)) / scale);
  return image.dim() == 3 ? edges.squeeze(0).squeeze(0) : edges;
}

// --- HED-style residual detector ------------------------------------------

HedResidualImpl::HedResidualImpl(HedResidualSpec spec) : spec_(std::move(spec)) {
  if (spec_.blocks.empty() || spec_.width < 1)
    throw std::invalid_argument("HedResidual: need at least one stage");
  stem_ = register_module(
      "stem", nn::Sequential(nn::Conv2d(nn::Conv2dOptions(3, spec_.width, 3).padding(1)),
                             nn::GroupNorm(nn::GroupNormOptions(1, spec_.width)), nn::ReLU()));
  int channels = spec_.width;
  for (std::size_t s = 0; s < spec_.blocks.size(); ++s) {
    const int out = spec_.width << s;
    nn::Sequential stage;
    for (int b = 0; b < spec_.blocks[s]; ++b)
      stage->push_back(BasicBlock(b == 0 ? channels : out, out, (b == 0 && s > 0) ? 2 : 1, true));
    stages_.push_back(register_module("stage" + std::to_string(s), stage));
    sides_.push_back(register_module("side" + std::to_string(s),
                                     nn::Conv2d(nn::Conv2dOptions(out, 1, 1))));
    channels = out;
  }
  fuse_ = register_module(
      "fuse", nn::Conv2d(nn::Conv2dOptions(static_cast<int64_t>(spec_.blocks.size()), 1, 1)));
}

torch::Tensor HedResidualImpl::forward(const torch::Tensor& x) {
  const auto h = x.size(2), w = x.size(3);
  auto feat = stem_->forward(to_rgb(x));
  std::vector<torch::Tensor> sides;
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    feat = stages_[s]->forward(feat);
    auto side = sides_[s](feat);
    if (side.size(2) != h || side.size(3) != w)
      side = nn::functional::interpolate(
          side, nn::functional::InterpolateFuncOptions()
                    .size(std::vector<int64_t>{h, w})
                    .mode(torch::kBilinear)
                    .align_corners(false));
    sides.push_back(side);
  }
  return torch::sigmoid(fuse_(torch::cat(sides, 1)));
}

EdgeDetector EdgeDetector::sobel(double scale) {
  EdgeDetector d;
  d.backbone_ = EdgeBackbone::analytic_sobel;
  d.scale_ = scale;
  return d;
}

EdgeDetector EdgeDetector::hed(HedResidualSpec spec) {
  EdgeDetector d;
  d.backbone_ = EdgeBackbone::hed_residual;
  d.net_ = HedResidual(std::move(spec));
  freeze(*d.net_);
  return d;
}

EdgeDetector EdgeDetector::from_config(const ExperimentConfig& config) {
  return config.edge_detector == EdgeBackbone::hed_residual ? hed() : sobel();
}

void EdgeDetector::load_weights(const std::filesystem::path& path) {
  if (backbone_ != EdgeBackbone::hed_residual)
    throw std::logic_error("the analytic Sobel detector has no weights");
  load_module(*net_, path);
  freeze(*net_);
  weights_loaded_ = true;
}

void EdgeDetector::save_weights(const std::filesystem::path& path) const {
  if (backbone_ != EdgeBackbone::hed_residual)
    throw std::logic_error("the analytic Sobel detector has no weights");
  torch::serialize::OutputArchive archive;
  net_->save(archive);
  archive.save_to(path.string());
}

torch::Tensor EdgeDetector::detect(const torch::Tensor& image) const {
  if (backbone_ == EdgeBackbone::analytic_sobel) return analytic_edge_oracle(image, scale_);
  if (!weights_loaded_)
    throw std::runtime_error("detect_edges: hed-residual detector has no weights loaded");
  auto x = as_batch(image, "detect_edges");
  if (x.size(2) < net_->min_size() || x.size(3) < net_->min_size())
    throw std::invalid_argument("detect_edges: hed-residual detector needs images of at least " +
                                std::to_string(net_->min_size()) + "x" +
                                std::to_string(net_->min_size()));
  HedResidual net = net_;
  auto edges = net->forward(x);
  return image.dim() == 3 ? edges.squeeze(0).squeeze(0) : edges;
}

torch::Tensor detect_edges(const torch::Tensor& image, const EdgeDetector& detector) {
  return detector.detect(image);
}

// --- Perceptual extractor ---------------------------------------------------

PerceptualExtractorImpl::PerceptualExtractorImpl(PerceptualSpec spec) : spec_(std::move(spec)) {
  if (spec_.width_divisor < 1) throw std::invalid_argument("PerceptualExtractor: width_divisor < 1");
  switch (spec_.mode) {
    case PerceptualMode::analytic_stub: build_stub(); break;
    case PerceptualMode::multi_layer: build_vgg(); break;
    case PerceptualMode::last_layer: build_resnet(); break;
  }
  taps_ = stages_.size();
  if (spec_.layer_weights.empty()) {
    weights_.assign(taps_, 1.0 / static_cast<double>(taps_));
  } else {
    if (spec_.layer_weights.size() != taps_)
      throw std::invalid_argument("PerceptualExtractor: expected " + std::to_string(taps_) +
                                  " layer weights, got " + std::to_string(spec_.layer_weights.size()));
    double sum = 0.0;
    for (double w : spec_.layer_weights) {
      if (!std::isfinite(w) || w < 0.0)
        throw std::invalid_argument("PerceptualExtractor: layer weights must be finite and >= 0");
      sum += w;
    }
    if (!(sum > 0.0)) throw std::invalid_argument("PerceptualExtractor: layer weights sum to 0");
    weights_ = spec_.layer_weights;
  }

  // Fixed-seed random draw, independent of the global torch RNG.
  auto gen = at::make_generator<at::CPUGeneratorImpl>(spec_.seed);
  torch::NoGradGuard no_grad;
  for (auto& mod : modules(/*include_self=*/false)) {
    auto* conv = mod->as<nn::Conv2d>();
    if (!conv) continue;
    const auto& w = conv->weight;
    const double fan_in = static_cast<double>(w.size(1) * w.size(2) * w.size(3));
    const double gain = spec_.mode == PerceptualMode::analytic_stub ? 1.0 : 2.0;
    w.normal_(0.0, std::sqrt(gain / fan_in), gen);
    if (conv->bias.defined()) conv->bias.zero_();
  }
  if (spec_.mode == PerceptualMode::last_layer) {
    // Keep activations bounded through the un-normalised residual stack.
    int64_t n_blocks = 0;
    for (auto& mod : modules(false))
      if (mod->as<BasicBlock>()) ++n_blocks;
    for (auto& mod : modules(false))
      if (auto* block = mod->as<BasicBlock>())
        block->conv2->weight.mul_(1.0 / std::sqrt(static_cast<double>(n_blocks)));
  }
  freeze(*this);
}

void PerceptualExtractorImpl::build_stub() {
  const int widths[] = {8, 16, 32};
  int in = 3;
  for (int s = 0; s < 3; ++s) {
    nn::Sequential stage;
    if (s > 0) stage->push_back(nn::AvgPool2d(nn::AvgPool2dOptions(2)));
    stage->push_back(nn::Conv2d(nn::Conv2dOptions(in, widths[s], 3).padding(1)));
    stage->push_back(nn::Tanh());
    stages_.push_back(register_module("stage" + std::to_string(s), stage));
    in = widths[s];
  }
  min_size_ = 4;
}

void PerceptualExtractorImpl::build_vgg() {
  if (spec_.vgg_depth != 16 && spec_.vgg_depth != 19)
    throw std::invalid_argument("PerceptualExtractor: vgg_depth must be 16 or 19");
  const std::vector<int> convs = spec_.vgg_depth == 19 ? std::vector<int>{2, 2, 4, 4, 4}
                                                       : std::vector<int>{2, 2, 3, 3, 3};
  const int widths[] = {64, 128, 256, 512, 512};
  int in = 3;
  for (std::size_t b = 0; b < convs.size(); ++b) {
    const int out = std::max(1, widths[b] / spec_.width_divisor);
    nn::Sequential stage;
    if (b > 0) stage->push_back(nn::MaxPool2d(nn::MaxPool2dOptions(2)));
    for (int c = 0; c < convs[b]; ++c) {
      stage->push_back(nn::Conv2d(nn::Conv2dOptions(c == 0 ? in : out, out, 3).padding(1)));
      stage->push_back(nn::ReLU());
    }
    stages_.push_back(register_module("block" + std::to_string(b), stage));
    in = out;
  }
  min_size_ = 16;
}

void PerceptualExtractorImpl::build_resnet() {
  const int widths[] = {64, 128, 256, 512};
  const int blocks[] = {3, 4, 6, 3};
  const int w0 = std::max(1, widths[0] / spec_.width_divisor);
  nn::Sequential net(nn::Conv2d(nn::Conv2dOptions(3, w0, 7).stride(2).padding(3)), nn::ReLU(),
                     nn::MaxPool2d(nn::MaxPool2dOptions(3).stride(2).padding(1)));
  int in = w0;
  for (int s = 0; s < 4; ++s) {
    const int out = std::max(1, widths[s] / spec_.width_divisor);
    for (int b = 0; b < blocks[s]; ++b) {
      net->push_back(BasicBlock(in, out, (b == 0 && s > 0) ? 2 : 1, false));
      in = out;
    }
  }
  stages_.push_back(register_module("resnet34", net));
  min_size_ = 32;
}

FeatureStack PerceptualExtractorImpl::forward(const torch::Tensor& image) {
  auto x = to_rgb(as_batch(image, "extract_perceptual_features"));
  if (x.size(2) < min_size_ || x.size(3) < min_size_)
    throw std::invalid_argument("extract_perceptual_features: image " + std::to_string(x.size(3)) +
                                "x" + std::to_string(x.size(2)) + " is smaller than the minimum " +
                                std::to_string(min_size_) + "x" + std::to_string(min_size_));
  FeatureStack stack;
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    x = stages_[s]->forward(x);
    stack.layers.push_back({x, weights_[s]});
  }
  return stack;
}

void PerceptualExtractorImpl::load_weights(const std::filesystem::path& path) {
  load_module(*this, path);
  freeze(*this);
}

FeatureStack extract_perceptual_features(const torch::Tensor& image,
                                         PerceptualExtractorImpl& extractor) {
  return extractor.forward(image);
}

// --- Segmenter --------------------------------------------------------------

SegmenterImpl::SegmenterImpl(SegmenterSpec spec) : spec_(spec) {
  if (spec_.classes < 1) throw std::invalid_argument("Segmenter: need at least one class");
  TransformerSpec t;
  t.arch = GeneratorArch::fcdensenet;
  t.n_scales = spec_.n_scales;
  t.layers_per_block = spec_.layers_per_block;
  t.growth_rate = spec_.growth_rate;
  t.stem_channels = spec_.stem_channels;
  t.io_channels = 3;
  t.out_channels = spec_.classes;
  t.head = HeadActivation::sigmoid;
  net_ = register_module("net", FcDenseNet(t));
}

torch::Tensor SegmenterImpl::forward(const torch::Tensor& image) {
  if (image.dim() != 4) throw std::invalid_argument("segment: expected (N, 3, H, W) images");
  if (image.size(1) != 3)
    throw std::invalid_argument("segment: expected 3 image channels, got " +
                                std::to_string(image.size(1)));
  return transform_padded(*net_, image);
}

torch::Tensor segment(const torch::Tensor& image, SegmenterImpl& segnet) {
  return segnet.forward(image);
}

double train_segmenter(SegmenterImpl& segnet, const torch::Tensor& images,
                       const torch::Tensor& labels, int steps, double lr, std::uint64_t seed) {
  if (images.dim() != 4 || labels.dim() != 4 || images.size(0) != labels.size(0) ||
      labels.size(1) != segnet.classes() || images.size(2) != labels.size(2) ||
      images.size(3) != labels.size(3))
    throw std::invalid_argument("train_segmenter: images and labels do not match");
  for (auto& p : segnet.parameters()) p.set_requires_grad(true);
  segnet.train();
  torch::optim::Adam opt(segnet.parameters(), torch::optim::AdamOptions(lr).betas({0.9, 0.999}));
  std::mt19937_64 rng(seed);
  const int64_t n = images.size(0);
  const int64_t batch = std::min<int64_t>(n, 4);
  std::uniform_int_distribution<int64_t> pick(0, n - 1);
  double last = 0.0;
  for (int step = 0; step < steps; ++step) {
    std::vector<int64_t> idx(batch);
    for (auto& i : idx) i = pick(rng);
    auto index = torch::tensor(idx, torch::kLong);
    auto pred = segnet.forward(images.index_select(0, index)).clamp(1e-6, 1 - 1e-6);
    auto loss = torch::binary_cross_entropy(pred, labels.index_select(0, index).to(pred.dtype()));
    opt.zero_grad();
    loss.backward();
    opt.step();
    last = loss.item<double>();
  }
  freeze(segnet);
  return last;
}

}  // namespace structgan
