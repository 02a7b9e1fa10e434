#include <gtest/gtest.h>

#include "structgan/networks.hpp"

using namespace structgan;

namespace {

TransformerSpec fcdense(int n_scales) {
  TransformerSpec s;
  s.arch = GeneratorArch::fcdensenet;
  s.n_scales = n_scales;
  return s;
}

// out[c, h*r + i, w*r + j] = in[c*r*r + i*r + j, h, w], by explicit loops.
torch::Tensor shuffle_oracle(const torch::Tensor& in, int64_t r) {
  const auto C = in.size(0) / (r * r), H = in.size(1), W = in.size(2);
  auto out = torch::empty({C, H * r, W * r}, in.options());
  auto src = in.accessor<float, 3>();
  auto dst = out.accessor<float, 3>();
  for (int64_t c = 0; c < C; ++c)
    for (int64_t h = 0; h < H; ++h)
      for (int64_t w = 0; w < W; ++w)
        for (int64_t i = 0; i < r; ++i)
          for (int64_t j = 0; j < r; ++j) dst[c][h * r + i][w * r + j] = src[c * r * r + i * r + j][h][w];
  return out;
}

}  // namespace

TEST(ScalesForCrop, KnownCropSizes) {
  EXPECT_EQ(scales_for_crop(256), 8);
  EXPECT_EQ(scales_for_crop(192), 6);
  EXPECT_EQ(scales_for_crop(64), 6);
  EXPECT_EQ(scales_for_crop(1024), 8);
  EXPECT_EQ(scales_for_crop(4), 2);
  EXPECT_THROW(scales_for_crop(255), std::invalid_argument);
  EXPECT_THROW(scales_for_crop(2), std::invalid_argument);
}

TEST(Subpixel, ShapeAndHandExample) {
  EXPECT_EQ(subpixel_upsample(torch::rand({8, 4, 4}), 2).sizes(), (std::vector<int64_t>{2, 8, 8}));
  auto x = torch::tensor({1.f, 2.f, 3.f, 4.f}).view({4, 1, 1});
  auto y = subpixel_upsample(x, 2);
  EXPECT_TRUE(torch::equal(y, torch::tensor({1.f, 2.f, 3.f, 4.f}).view({1, 2, 2})));
  auto r1 = torch::rand({3, 5, 5});
  EXPECT_TRUE(torch::equal(subpixel_upsample(r1, 1), r1));
  EXPECT_THROW(subpixel_upsample(torch::rand({6, 2, 2}), 2), std::invalid_argument);
}

TEST(Subpixel, MatchesIndexOracle) {
  torch::manual_seed(1);
  for (int64_t r : {1, 2, 4}) {
    auto x = torch::rand({3 * r * r, 5, 3});
    EXPECT_TRUE(torch::equal(subpixel_upsample(x, r), shuffle_oracle(x, r))) << r;
    auto batched = torch::rand({2, 2 * r * r, 3, 4});
    auto y = subpixel_upsample(batched, r);
    for (int64_t n = 0; n < 2; ++n) EXPECT_TRUE(torch::equal(y[n], shuffle_oracle(batched[n].contiguous(), r)));
  }
}

TEST(Subpixel, InverseRoundTrip) {
  for (int64_t r : {1, 2, 4}) {
    auto x = torch::rand({2, 4 * r * r, 3, 5});
    EXPECT_TRUE(torch::equal(subpixel_downsample(subpixel_upsample(x, r), r), x));
    auto y = torch::rand({3, 4 * r, 8 * r});
    EXPECT_TRUE(torch::equal(subpixel_upsample(subpixel_downsample(y, r), r), y));
  }
}

TEST(Transformer, FcDenseNetPreservesShape192And256) {
  torch::NoGradGuard no_grad;
  for (auto [side, scales] : {std::pair{192, 6}, std::pair{256, 8}}) {
    auto g = build_transformer(fcdense(scales));
    auto x = torch::rand({1, 3, side, side}) * 2 - 1;
    auto y = transform(*g, x);
    EXPECT_EQ(y.sizes(), x.sizes()) << side;
    EXPECT_LE(y.abs().max().item<double>(), 1.0);
  }
}

TEST(Transformer, ResnetPreservesShape) {
  TransformerSpec s;
  s.arch = GeneratorArch::resnet_blocks;
  auto g = build_transformer(s);
  auto x = torch::rand({3, 64, 64}) * 2 - 1;
  EXPECT_EQ(transform(*g, x).sizes(), x.sizes());
}

TEST(Transformer, DeterministicInEvalMode) {
  torch::manual_seed(2);
  auto g = build_transformer(fcdense(4));
  g->eval();
  auto x = torch::rand({1, 3, 32, 32});
  EXPECT_TRUE(torch::equal(transform(*g, x), transform(*g, x)));
}

TEST(Transformer, IndivisibleSizeNamesRequirement) {
  auto g = build_transformer(fcdense(6));
  try {
    transform(*g, torch::rand({1, 3, 96, 96}));
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("64"), std::string::npos) << e.what();
  }
}

TEST(Transformer, FullFrameThroughPadding) {
  torch::NoGradGuard no_grad;
  auto g = build_transformer(fcdense(6));
  g->eval();
  auto x = torch::rand({1, 3, 288, 512}) * 2 - 1;
  EXPECT_EQ(transform_padded(*g, x).sizes(), x.sizes());
  auto odd = torch::rand({3, 37, 50});
  EXPECT_EQ(transform_padded(*g, odd).sizes(), odd.sizes());
}

TEST(Transformer, InputSkipStartsNearIdentity) {
  torch::manual_seed(4);
  torch::NoGradGuard no_grad;
  auto x = torch::rand({1, 3, 32, 32}) * 1.6 - 0.8;
  for (auto arch : {GeneratorArch::fcdensenet, GeneratorArch::resnet_blocks}) {
    TransformerSpec s = fcdense(3);
    s.arch = arch;
    s.input_skip = true;
    auto g = build_transformer(s);
    EXPECT_LT((transform(*g, x) - x).abs().max().item<double>(), 1e-3);
    s.input_skip = false;
    EXPECT_GT((transform(*build_transformer(s), x) - x).abs().max().item<double>(), 0.5);
  }
  TransformerSpec bad = fcdense(3);
  bad.input_skip = true;
  bad.head = HeadActivation::sigmoid;
  EXPECT_THROW(build_transformer(bad), std::invalid_argument);
}

TEST(Transformer, ParameterCountGrowsWithScales) {
  int64_t prev = 0;
  for (int s = 2; s <= 8; ++s) {
    auto g = build_transformer(fcdense(s));
    const auto n = parameter_count(*g);
    EXPECT_GT(n, prev) << s;
    prev = n;
  }
}

TEST(Transformer, BottleneckSeesTheWholeCrop) {
  // Gradient of one bottleneck activation with respect to the input reaches
  // all four corners of a 64x64 crop at scales_for_crop(64) levels.
  torch::manual_seed(3);
  auto spec = fcdense(scales_for_crop(64));
  auto net = std::dynamic_pointer_cast<FcDenseNetImpl>(build_transformer(spec));
  ASSERT_TRUE(net);
  auto x = torch::rand({1, 3, 64, 64}).requires_grad_();
  auto z = net->encode(x);
  z.index({0, 0, z.size(2) / 2, z.size(3) / 2}).backward();
  auto g = x.grad().abs().sum(1)[0];
  for (auto [r, c] : {std::pair{0, 0}, std::pair{0, 63}, std::pair{63, 0}, std::pair{63, 63}})
    EXPECT_GT(g[r][c].item<double>(), 0.0) << r << "," << c;
}

TEST(Discriminator, PatchScoresShrinkWithDepth) {
  PatchDiscriminator d(DiscriminatorSpec{});
  auto s = discriminate(*d, torch::rand({1, 3, 256, 256}));
  EXPECT_EQ(s.dim(), 4);
  EXPECT_EQ(s.size(1), 1);
  EXPECT_GT(s.size(2), 1);
  EXPECT_LT(s.size(2), 256);
}

TEST(Discriminator, SegmentationAugmentedChannels) {
  DiscriminatorSpec spec;
  spec.seg_classes = 5;
  PatchDiscriminator d(spec);
  EXPECT_EQ(spec.input_channels(), 8);
  auto img = torch::rand({1, 3, 64, 64});
  EXPECT_NO_THROW(discriminate(*d, img, torch::rand({1, 5, 64, 64})));
  try {
    discriminate(*d, img);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("expected 8 input channels"), std::string::npos) << e.what();
  }
  EXPECT_THROW(discriminate(*d, img, torch::rand({1, 4, 64, 64})), std::invalid_argument);
  EXPECT_THROW(discriminate(*d, img, torch::rand({1, 5, 32, 32})), std::invalid_argument);
}

TEST(Discriminator, SegmentationChannelsComeAfterImage) {
  // With every first-layer weight zeroed except those reading channel 3 (the
  // first class map), scores depend on the segmentation input only.
  DiscriminatorSpec spec;
  spec.seg_classes = 2;
  PatchDiscriminator d(spec);
  d->eval();
  torch::NoGradGuard no_grad;
  torch::nn::Conv2dImpl* conv = nullptr;
  for (auto& m : d->modules(false))
    if ((conv = m->as<torch::nn::Conv2d>())) break;
  ASSERT_NE(conv, nullptr);
  ASSERT_EQ(conv->weight.size(1), 5);
  conv->weight.slice(1, 0, 3).zero_();
  conv->weight.slice(1, 4, 5).zero_();
  auto seg = torch::rand({1, 2, 32, 32});
  auto s1 = discriminate(*d, torch::rand({1, 3, 32, 32}), seg);
  auto s2 = discriminate(*d, torch::rand({1, 3, 32, 32}), seg);
  EXPECT_TRUE(torch::allclose(s1, s2));
}

TEST(Checksum, DetectsSingleParameterChange) {
  PatchDiscriminator d(DiscriminatorSpec{});
  const auto before = parameter_checksum(*d);
  EXPECT_EQ(parameter_checksum(*d), before);
  torch::NoGradGuard no_grad;
  d->parameters().front().view(-1)[0] += 1e-6f;
  EXPECT_NE(parameter_checksum(*d), before);
}
