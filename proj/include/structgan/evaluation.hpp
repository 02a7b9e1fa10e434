#ifndef STRUCTGAN_EVALUATION_HPP
#define STRUCTGAN_EVALUATION_HPP

#include <torch/torch.h>

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "structgan/data.hpp"
#include "structgan/features.hpp"
#include "structgan/networks.hpp"

namespace structgan {

// (1, 3, H, W) in [-1, 1] -> same shape.
using ImageFn = std::function<torch::Tensor(const torch::Tensor&)>;

ImageFn identity_transform();
// Full-frame inference through a generator (reflect padding for odd sizes).
ImageFn generator_transform(Transformer generator);

// Evaluation metric: frozen VGG16-layout pyramid tapped before every pooling
// layer, equal layer weights, seeded independently of the training extractors.
PerceptualExtractor make_metric_extractor(std::uint64_t seed = 20160);

struct PairDistance {
  std::string pair_id;
  double distance = 0.0;
};

// Perceptual distance between transform(degraded) and the clean reference for
// every test pair, sorted by pair id.
std::vector<PairDistance> evaluate_config(const ImageFn& transform, const PairedTestset& testset,
                                          PerceptualExtractorImpl& metric);

double mean_distance(const std::vector<PairDistance>& distances);

struct BoxStats {
  double median = 0, q1 = 0, q3 = 0;
  double whisker_low = 0, whisker_high = 0;
  std::size_t n = 0;
  std::vector<double> outliers;

  nlohmann::json to_json() const;
};

// Quartiles by linear interpolation between order statistics; whiskers reach
// the most extreme samples within 1.5 IQR of the quartiles.
BoxStats summarize_boxplot(std::vector<double> values);
// Linear-interpolation quantile of sorted data, q in [0, 1].
double quantile_sorted(const std::vector<double>& sorted, double q);

struct ComparisonRow {
  std::string config;
  BoxStats stats;
  double mean = 0;
  int rank_by_mean = 0;    // 1 = lowest distance
  int rank_by_median = 0;
};

struct ComparisonReport {
  std::vector<ComparisonRow> rows;
  nlohmann::json to_json() const;
  std::string to_csv() const;
};

// Rows follow the canonical order Cycle+Resnet, Edge+Resnet, Edge+FCDenseNet,
// Perc+FCDenseNet, then any other names alphabetically. All configurations
// must cover the same pair ids.
ComparisonReport compare_report(const std::map<std::string, std::vector<PairDistance>>& results);

// Box-plot figure, one box per row in report order.
void render_boxplot(const ComparisonReport& report, const std::filesystem::path& png);

// distances.csv for one configuration.
void write_distances_csv(const std::vector<PairDistance>& distances, const std::filesystem::path& path);
// out/{distances.csv, boxstats.json} per configuration (sub-folders when there
// are several), plus comparison.{csv,json,png}.
void write_report(const std::map<std::string, std::vector<PairDistance>>& results,
                  const std::filesystem::path& out_dir);

}  // namespace structgan

#endif
