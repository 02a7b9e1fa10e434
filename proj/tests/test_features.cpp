#include <gtest/gtest.h>

#include <filesystem>

#include "oracles.hpp"
#include "structgan/features.hpp"

using namespace structgan;

namespace {

torch::Tensor vertical_step(int64_t h, int64_t w) {
  auto img = -torch::ones({3, h, w}, torch::kDouble);
  img.slice(2, w / 2, w).fill_(1.0);
  return img;
}

}  // namespace

TEST(SobelEdges, ConstantImageIsZero) {
  for (double v : {-1.0, 0.0, 0.7}) {
    auto e = analytic_edge_oracle(torch::full({3, 9, 7}, v));
    EXPECT_EQ(e.abs().max().item<double>(), 0.0);
  }
}

TEST(SobelEdges, VerticalStepOnlyNearTheStep) {
  auto e = analytic_edge_oracle(vertical_step(8, 8));
  ASSERT_EQ(e.sizes(), (std::vector<int64_t>{8, 8}));
  for (int64_t c = 0; c < 8; ++c) {
    const double col_max = e.select(1, c).max().item<double>();
    if (c == 3 || c == 4)
      EXPECT_GT(col_max, 0.5) << c;
    else
      EXPECT_EQ(col_max, 0.0) << c;
  }
}

TEST(SobelEdges, RangeAndShape) {
  torch::manual_seed(1);
  auto img = torch::rand({2, 3, 11, 13}) * 2 - 1;
  auto e = analytic_edge_oracle(img);
  EXPECT_EQ(e.sizes(), (std::vector<int64_t>{2, 1, 11, 13}));
  EXPECT_GE(e.min().item<double>(), 0.0);
  EXPECT_LE(e.max().item<double>(), 1.0);
  auto strong = analytic_edge_oracle(img * 50);
  EXPECT_LE(strong.max().item<double>(), 1.0);
}

TEST(SobelEdges, TranslationEquivariantInTheInterior) {
  torch::manual_seed(2);
  auto img = torch::rand({3, 12, 12}, torch::kDouble) * 2 - 1;
  auto shifted = torch::roll(img, {1}, {2});
  auto e = analytic_edge_oracle(img), es = analytic_edge_oracle(shifted);
  using torch::indexing::Slice;
  auto a = e.index({Slice(1, 11), Slice(1, 10)});
  auto b = es.index({Slice(1, 11), Slice(2, 11)});
  EXPECT_TRUE(torch::allclose(a, b, 0, 1e-12));
}

TEST(SobelEdges, GradientMatchesFiniteDifferences) {
  torch::manual_seed(3);
  auto x = (torch::rand({1, 6, 6}, torch::kDouble) * 2 - 1).requires_grad_();
  auto w = torch::rand({6, 6}, torch::kDouble);
  (analytic_edge_oracle(x) * w).sum().backward();
  auto num = oracle::numeric_gradient(
      [&](const torch::Tensor& v) { return (analytic_edge_oracle(v) * w).sum().item<double>(); }, x);
  EXPECT_LT(oracle::max_relative_error(x.grad(), num), 1e-3);
}

TEST(SobelEdges, EdgeLossGradientThroughDetector) {
  // Masks and the balance factor are fixed at the evaluation point.
  torch::manual_seed(4);
  auto ref_img = torch::rand({1, 6, 6}, torch::kDouble) * 2 - 1;
  auto x = (torch::rand({1, 6, 6}, torch::kDouble) * 2 - 1).requires_grad_();
  const auto ref = analytic_edge_oracle(ref_img);
  edge_preservation_loss(ref, analytic_edge_oracle(x)).backward();
  const auto gen0 = analytic_edge_oracle(x.detach());
  const auto pos = ((1 + (ref - gen0).sign()) / 2);
  const double fbal = (1 - ref).mean().item<double>();
  auto num = oracle::numeric_gradient(
      [&](const torch::Tensor& v) {
        auto err = pos * (ref - analytic_edge_oracle(v));
        return fbal * (err * err).sum().item<double>();
      },
      x);
  EXPECT_LT(oracle::max_relative_error(x.grad(), num), 1e-3);
}

TEST(EdgeDetector, HedWithoutWeightsRefuses) {
  auto hed = EdgeDetector::hed();
  EXPECT_FALSE(hed.ready());
  try {
    detect_edges(torch::zeros({3, 16, 16}), hed);
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("no weights"), std::string::npos);
  }
}

TEST(EdgeDetector, HedWithWeightsKeepsResolutionAndRange) {
  torch::manual_seed(5);
  auto source = EdgeDetector::hed();
  const auto path = std::filesystem::temp_directory_path() / "structgan_hed_test.pt";
  source.save_weights(path);
  auto hed = EdgeDetector::hed();
  hed.load_weights(path);
  std::filesystem::remove(path);
  ASSERT_TRUE(hed.ready());
  auto e = detect_edges(torch::rand({3, 24, 20}) * 2 - 1, hed);
  EXPECT_EQ(e.sizes(), (std::vector<int64_t>{24, 20}));
  EXPECT_GE(e.min().item<double>(), 0.0);
  EXPECT_LE(e.max().item<double>(), 1.0);
  EXPECT_EQ(parameter_checksum(*hed.network()), parameter_checksum(*source.network()));
}

TEST(Perceptual, MultiLayerSizesStrictlyDecrease) {
  PerceptualExtractor vgg(PerceptualSpec{PerceptualMode::multi_layer});
  auto stack = vgg->forward(torch::rand({3, 64, 64}) * 2 - 1);
  ASSERT_EQ(stack.layers.size(), 5u);
  for (std::size_t l = 1; l < stack.layers.size(); ++l)
    EXPECT_LT(stack.layers[l].map.size(-1), stack.layers[l - 1].map.size(-1));
  double sum = 0;
  for (const auto& layer : stack.layers) sum += layer.weight;
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(Perceptual, LastLayerHasOneLayer) {
  PerceptualExtractor resnet(PerceptualSpec{PerceptualMode::last_layer});
  EXPECT_EQ(resnet->forward(torch::rand({3, 64, 64})).layers.size(), 1u);
}

TEST(Perceptual, DeterministicAcrossInstances) {
  auto img = torch::rand({3, 32, 32});
  for (auto mode : {PerceptualMode::analytic_stub, PerceptualMode::multi_layer, PerceptualMode::last_layer}) {
    PerceptualExtractor a(PerceptualSpec{mode}), b(PerceptualSpec{mode});
    auto sa = a->forward(img), sb = b->forward(img);
    ASSERT_EQ(sa.layers.size(), sb.layers.size());
    for (std::size_t l = 0; l < sa.layers.size(); ++l) EXPECT_TRUE(torch::equal(sa.layers[l].map, sb.layers[l].map));
  }
}

TEST(Perceptual, TooSmallNamesMinimum) {
  PerceptualExtractor vgg(PerceptualSpec{PerceptualMode::multi_layer});
  try {
    vgg->forward(torch::rand({3, 8, 8}));
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("16x16"), std::string::npos) << e.what();
  }
}

TEST(Perceptual, StubGradientMatchesFiniteDifferences) {
  PerceptualExtractor stub;
  stub->to(torch::kDouble);
  auto target = stub->forward(torch::rand({1, 6, 6}, torch::kDouble) * 2 - 1);
  auto x = (torch::rand({1, 6, 6}, torch::kDouble) * 2 - 1).requires_grad_();
  perceptual_distance(stub->forward(x), target).backward();
  auto num = oracle::numeric_gradient(
      [&](const torch::Tensor& v) { return perceptual_distance(stub->forward(v), target).item<double>(); }, x);
  EXPECT_LT(oracle::max_relative_error(x.grad(), num), 1e-3);
}

TEST(Perceptual, FrozenButPassesGradientToInput) {
  PerceptualExtractor stub;
  const auto before = parameter_checksum(*stub);
  auto x = torch::rand({1, 3, 16, 16}).requires_grad_();
  perceptual_distance(stub->forward(x), stub->forward(torch::zeros({1, 3, 16, 16}))).backward();
  EXPECT_GT(x.grad().abs().sum().item<double>(), 0.0);
  for (const auto& p : stub->parameters()) EXPECT_FALSE(p.requires_grad());
  EXPECT_EQ(parameter_checksum(*stub), before);
}

TEST(Segmenter, ShapeRangeAndDeterminism) {
  torch::manual_seed(6);
  Segmenter seg;
  freeze(*seg);
  auto img = torch::rand({2, 3, 20, 28}) * 2 - 1;
  auto maps = segment(img, *seg);
  EXPECT_EQ(maps.sizes(), (std::vector<int64_t>{2, 5, 20, 28}));
  EXPECT_GT(maps.min().item<double>(), 0.0);
  EXPECT_LT(maps.max().item<double>(), 1.0);
  EXPECT_TRUE(torch::equal(maps, segment(img, *seg)));
  EXPECT_THROW(segment(torch::rand({1, 4, 16, 16}), *seg), std::invalid_argument);
}

TEST(Segmenter, OnePixelCanHoldTwoClasses) {
  torch::manual_seed(7);
  SegmenterSpec spec;
  spec.classes = 2;
  Segmenter seg(spec);
  auto images = torch::rand({4, 3, 16, 16}) * 2 - 1;
  auto labels = torch::ones({4, 2, 16, 16});  // every pixel belongs to both classes
  train_segmenter(*seg, images, labels, 60, 5e-3, 7);
  auto maps = segment(images, *seg);
  EXPECT_GT(maps.select(1, 0).min().item<double>(), 0.5);
  EXPECT_GT(maps.select(1, 1).min().item<double>(), 0.5);
  for (const auto& p : seg->parameters()) EXPECT_FALSE(p.requires_grad());
}
