#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>

#include <opencv2/imgcodecs.hpp>

#include "oracles.hpp"
#include "structgan/evaluation.hpp"
#include "structgan/synthetic.hpp"

using namespace structgan;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("structgan_eval_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path fog_testset(const std::string& name, double severity) {
  const auto root = scratch(name);
  const CorruptionSpec spec{CorruptionKind::fog, severity, 4};
  write_synthetic_dataset(root, synthesize_desk_dataset(2, {32, 32}, spec, 1),
                          synthesize_desk_dataset(5, {32, 32}, spec, 2));
  return root;
}

std::vector<PairDistance> constant(const std::vector<std::string>& ids, double v) {
  std::vector<PairDistance> out;
  for (const auto& id : ids) out.push_back({id, v});
  return out;
}

}  // namespace

TEST(Evaluate, IdentityOnCleanPairsIsZero) {
  const auto root = fog_testset("zero", 0.0);
  auto metric = make_metric_extractor();
  const auto d = evaluate_config(identity_transform(), load_paired_testset(root), *metric);
  ASSERT_EQ(d.size(), 5u);
  for (const auto& p : d) EXPECT_EQ(p.distance, 0.0) << p.pair_id;
  fs::remove_all(root);
}

TEST(Evaluate, FogIsPositiveDeterministicAndOrderInvariant) {
  const auto root = fog_testset("fog", 0.7);
  auto testset = load_paired_testset(root);
  auto m1 = make_metric_extractor(), m2 = make_metric_extractor();
  const auto d1 = evaluate_config(identity_transform(), testset, *m1);
  for (const auto& p : d1) EXPECT_GT(p.distance, 0.0);
  std::reverse(testset.pairs.begin(), testset.pairs.end());
  const auto d2 = evaluate_config(identity_transform(), testset, *m2);
  ASSERT_EQ(d1.size(), d2.size());
  for (std::size_t i = 0; i < d1.size(); ++i) {
    EXPECT_EQ(d1[i].pair_id, d2[i].pair_id);
    EXPECT_EQ(d1[i].distance, d2[i].distance);
  }
  EXPECT_TRUE(std::is_sorted(d1.begin(), d1.end(),
                             [](const PairDistance& a, const PairDistance& b) { return a.pair_id < b.pair_id; }));
  fs::remove_all(root);
}

TEST(BoxStats, SmallExamples) {
  auto s = summarize_boxplot({5, 1, 4, 2, 3});
  EXPECT_EQ(s.median, 3.0);
  EXPECT_EQ(s.q1, 2.0);
  EXPECT_EQ(s.q3, 4.0);
  EXPECT_EQ(s.whisker_low, 1.0);
  EXPECT_EQ(s.whisker_high, 5.0);
  EXPECT_TRUE(s.outliers.empty());
  EXPECT_EQ(s.n, 5u);

  auto one = summarize_boxplot({7});
  EXPECT_EQ(one.median, 7.0);
  EXPECT_EQ(one.q1, 7.0);
  EXPECT_EQ(one.whisker_high, 7.0);

  auto flat = summarize_boxplot({2, 2, 2, 2});
  EXPECT_EQ(flat.q3 - flat.q1, 0.0);
  EXPECT_TRUE(flat.outliers.empty());

  auto outlier = summarize_boxplot({1, 2, 3, 4, 100});
  EXPECT_EQ(outlier.whisker_high, 4.0);
  EXPECT_EQ(outlier.outliers, (std::vector<double>{100}));

  EXPECT_THROW(summarize_boxplot({}), std::invalid_argument);
  EXPECT_THROW(summarize_boxplot({1.0, std::nan("")}), std::invalid_argument);
}

TEST(BoxStats, MatchesSortOracleOnRandomSamples) {
  std::mt19937_64 rng(17);
  std::lognormal_distribution<double> dist(0.0, 0.8);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> v(100);
    for (auto& x : v) x = dist(rng);
    const auto s = summarize_boxplot(v);
    EXPECT_NEAR(s.median, oracle::quantile(v, 0.5), 1e-9);
    EXPECT_NEAR(s.q1, oracle::quantile(v, 0.25), 1e-9);
    EXPECT_NEAR(s.q3, oracle::quantile(v, 0.75), 1e-9);
    const double iqr = s.q3 - s.q1;
    double lo = s.q3, hi = s.q1;
    std::size_t outside = 0;
    for (double x : v) {
      if (x < s.q1 - 1.5 * iqr || x > s.q3 + 1.5 * iqr)
        ++outside;
      else
        lo = std::min(lo, x), hi = std::max(hi, x);
    }
    EXPECT_EQ(s.whisker_low, lo);
    EXPECT_EQ(s.whisker_high, hi);
    EXPECT_EQ(s.outliers.size(), outside);
  }
}

TEST(Compare, CanonicalOrderAndRanks) {
  const std::vector<std::string> ids{"p0", "p1", "p2"};
  std::map<std::string, std::vector<PairDistance>> results{
      {"Zeta", constant(ids, 3.0)},
      {"Edge+FCDenseNet", constant(ids, 1.0)},
      {"Cycle+Resnet", constant(ids, 2.0)},
      {"Alpha", constant(ids, 1.0)},
  };
  const auto report = compare_report(results);
  ASSERT_EQ(report.rows.size(), 4u);
  EXPECT_EQ(report.rows[0].config, "Cycle+Resnet");
  EXPECT_EQ(report.rows[1].config, "Edge+FCDenseNet");
  EXPECT_EQ(report.rows[2].config, "Alpha");
  EXPECT_EQ(report.rows[3].config, "Zeta");
  EXPECT_EQ(report.rows[0].rank_by_mean, 3);
  EXPECT_EQ(report.rows[1].rank_by_mean, 1);
  EXPECT_EQ(report.rows[2].rank_by_mean, 1);  // tie
  EXPECT_EQ(report.rows[3].rank_by_median, 4);
  EXPECT_EQ(report.rows[0].mean, 2.0);
  const auto csv = report.to_csv();
  EXPECT_NE(csv.find("Cycle+Resnet"), std::string::npos);
  EXPECT_EQ(report.to_json()["configurations"].size(), 4u);
}

TEST(Compare, RejectsMismatchedOrSingleConfigs) {
  std::map<std::string, std::vector<PairDistance>> one{{"A", constant({"x"}, 1)}};
  EXPECT_THROW(compare_report(one), std::invalid_argument);
  std::map<std::string, std::vector<PairDistance>> mismatch{{"A", constant({"x", "y"}, 1)},
                                                            {"B", constant({"x", "z"}, 1)}};
  EXPECT_THROW(compare_report(mismatch), std::invalid_argument);
  std::map<std::string, std::vector<PairDistance>> dup{{"A", constant({"x", "x"}, 1)}, {"B", constant({"x", "x"}, 1)}};
  EXPECT_THROW(compare_report(dup), std::invalid_argument);
}

TEST(Report, WritesAllArtifacts) {
  const auto out = scratch("report");
  const std::vector<std::string> ids{"a", "b", "c", "d"};
  std::vector<PairDistance> spread{{"a", 0.5}, {"b", 1.5}, {"c", 1.0}, {"d", 9.0}};
  write_report({{"Cycle+Resnet", spread}, {"Edge+FCDenseNet", constant(ids, 0.7)}}, out);
  for (const char* f : {"comparison.csv", "comparison.json", "comparison.png", "Cycle+Resnet/distances.csv",
                        "Cycle+Resnet/boxstats.json", "Edge+FCDenseNet/distances.csv"})
    EXPECT_TRUE(fs::is_regular_file(out / f)) << f;
  std::ifstream in(out / "Cycle+Resnet" / "distances.csv");
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  EXPECT_EQ(header, "pair_id,distance");
  EXPECT_EQ(first.rfind("a,0.5", 0), 0u);
  auto png = cv::imread((out / "comparison.png").string());
  EXPECT_FALSE(png.empty());
  fs::remove_all(out);
}
