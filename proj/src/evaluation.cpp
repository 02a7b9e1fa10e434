#include "structgan/evaluation.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "structgan/losses.hpp"

namespace structgan {

namespace fs = std::filesystem;

ImageFn identity_transform() {
  return [](const torch::Tensor& x) { return x; };
}

ImageFn generator_transform(Transformer generator) {
  freeze(*generator);
  return [g = std::move(generator)](const torch::Tensor& x) { return transform_padded(*g, x); };
}

PerceptualExtractor make_metric_extractor(std::uint64_t seed) {
  PerceptualSpec spec;
  spec.mode = PerceptualMode::multi_layer;
  spec.vgg_depth = 16;
  spec.seed = seed;
  return PerceptualExtractor(spec);
}

std::vector<PairDistance> evaluate_config(const ImageFn& fn, const PairedTestset& testset,
                                          PerceptualExtractorImpl& metric) {
  if (testset.pairs.empty()) throw std::invalid_argument("evaluate_config: test set has no pairs");
  torch::NoGradGuard no_grad;
  auto pairs = testset.pairs;
  std::sort(pairs.begin(), pairs.end(),
            [](const TestPair& a, const TestPair& b) { return a.pair_id < b.pair_id; });
  std::vector<PairDistance> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (p.pair_id.empty()) throw std::invalid_argument("evaluate_config: test pair without id");
    const auto degraded = image_to_tensor(read_image(p.degraded)).unsqueeze(0);
    const auto clean = image_to_tensor(read_image(p.clean)).unsqueeze(0);
    if (degraded.sizes() != clean.sizes())
      throw std::runtime_error("evaluate_config: pair " + p.pair_id + " has mismatched image sizes");
    const auto produced = fn(degraded);
    const double d =
        perceptual_distance(metric.forward(produced), metric.forward(clean)).item<double>();
    out.push_back({p.pair_id, d});
  }
  return out;
}

double mean_distance(const std::vector<PairDistance>& distances) {
  if (distances.empty()) throw std::invalid_argument("mean_distance: no distances");
  double sum = 0;
  for (const auto& d : distances) sum += d.distance;
  return sum / static_cast<double>(distances.size());
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("quantile_sorted: empty input");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

BoxStats summarize_boxplot(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("summarize_boxplot: no values");
  for (double v : values)
    if (!std::isfinite(v)) throw std::invalid_argument("summarize_boxplot: non-finite value");
  std::sort(values.begin(), values.end());
  BoxStats s;
  s.n = values.size();
  s.q1 = quantile_sorted(values, 0.25);
  s.median = quantile_sorted(values, 0.5);
  s.q3 = quantile_sorted(values, 0.75);
  const double iqr = s.q3 - s.q1;
  const double lo_fence = s.q1 - 1.5 * iqr, hi_fence = s.q3 + 1.5 * iqr;
  s.whisker_low = s.q1;
  s.whisker_high = s.q3;
  for (double v : values) {
    if (v < lo_fence || v > hi_fence) {
      s.outliers.push_back(v);
      continue;
    }
    s.whisker_low = std::min(s.whisker_low, v);
    s.whisker_high = std::max(s.whisker_high, v);
  }
  return s;
}

nlohmann::json BoxStats::to_json() const {
  return {{"n", n},           {"median", median},   {"q1", q1},
          {"q3", q3},         {"whisker_low", whisker_low},
          {"whisker_high", whisker_high},           {"outliers", outliers}};
}

namespace {

const std::vector<std::string>& canonical_order() {
  static const std::vector<std::string> order{"Cycle+Resnet", "Edge+Resnet", "Edge+FCDenseNet",
                                              "Perc+FCDenseNet"};
  return order;
}

std::vector<std::string> ordered_names(const std::map<std::string, std::vector<PairDistance>>& r) {
  std::vector<std::string> names;
  for (const auto& n : canonical_order())
    if (r.count(n)) names.push_back(n);
  for (const auto& [n, _] : r)  // std::map iterates alphabetically
    if (std::find(canonical_order().begin(), canonical_order().end(), n) == canonical_order().end())
      names.push_back(n);
  return names;
}

std::set<std::string> ids_of(const std::vector<PairDistance>& d) {
  std::set<std::string> ids;
  for (const auto& p : d) ids.insert(p.pair_id);
  return ids;
}

std::vector<double> values_of(const std::vector<PairDistance>& d) {
  std::vector<double> v;
  for (const auto& p : d) v.push_back(p.distance);
  return v;
}

// Competition ranking, 1 for the smallest key.
template <typename Key>
void assign_ranks(std::vector<ComparisonRow>& rows, Key key, int ComparisonRow::*rank) {
  for (auto& r : rows) {
    int better = 0;
    for (const auto& o : rows)
      if (key(o) < key(r)) ++better;
    r.*rank = better + 1;
  }
}

ComparisonReport build_report(const std::map<std::string, std::vector<PairDistance>>& results) {
  ComparisonReport report;
  for (const auto& name : ordered_names(results)) {
    const auto& d = results.at(name);
    report.rows.push_back({name, summarize_boxplot(values_of(d)), mean_distance(d), 0, 0});
  }
  assign_ranks(report.rows, [](const ComparisonRow& r) { return r.mean; },
               &ComparisonRow::rank_by_mean);
  assign_ranks(report.rows, [](const ComparisonRow& r) { return r.stats.median; },
               &ComparisonRow::rank_by_median);
  return report;
}

}  // namespace

ComparisonReport compare_report(const std::map<std::string, std::vector<PairDistance>>& results) {
  if (results.size() < 2)
    throw std::invalid_argument("compare_report: need at least two configurations");
  const auto reference = ids_of(results.begin()->second);
  for (const auto& [name, d] : results) {
    if (ids_of(d).size() != d.size())
      throw std::invalid_argument("compare_report: duplicate pair ids in '" + name + "'");
    if (ids_of(d) != reference)
      throw std::invalid_argument("compare_report: '" + name + "' was evaluated on a different test set than '" +
                                  results.begin()->first + "'");
  }
  return build_report(results);
}

nlohmann::json ComparisonReport::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& r : rows) {
    auto j = r.stats.to_json();
    j["config"] = r.config;
    j["mean"] = r.mean;
    j["rank_by_mean"] = r.rank_by_mean;
    j["rank_by_median"] = r.rank_by_median;
    rows_json.push_back(j);
  }
  return {{"configurations", rows_json}};
}

std::string ComparisonReport::to_csv() const {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "config,n,mean,median,q1,q3,whisker_low,whisker_high,outliers,rank_by_mean,rank_by_median\n";
  for (const auto& r : rows)
    os << r.config << ',' << r.stats.n << ',' << r.mean << ',' << r.stats.median << ','
       << r.stats.q1 << ',' << r.stats.q3 << ',' << r.stats.whisker_low << ','
       << r.stats.whisker_high << ',' << r.stats.outliers.size() << ',' << r.rank_by_mean << ','
       << r.rank_by_median << '\n';
  return os.str();
}

void render_boxplot(const ComparisonReport& report, const fs::path& png) {
  if (report.rows.empty()) throw std::invalid_argument("render_boxplot: empty report");
  const int box_w = 160, margin_l = 90, margin_r = 30, top = 40, plot_h = 360, bottom = 60;
  const int width = margin_l + margin_r + box_w * static_cast<int>(report.rows.size());
  const int height = top + plot_h + bottom;
  cv::Mat img(height, width, CV_8UC3, cv::Scalar(255, 255, 255));

  double lo = report.rows.front().stats.whisker_low, hi = report.rows.front().stats.whisker_high;
  for (const auto& r : report.rows) {
    lo = std::min(lo, r.stats.whisker_low);
    hi = std::max(hi, r.stats.whisker_high);
    for (double o : r.stats.outliers) {
      lo = std::min(lo, o);
      hi = std::max(hi, o);
    }
  }
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
  auto y_of = [&](double v) { return top + static_cast<int>(std::lround((hi - v) / (hi - lo) * plot_h)); };

  const cv::Scalar black(0, 0, 0), grey(190, 190, 190), blue(180, 110, 40), red(40, 40, 200);
  const auto font = cv::FONT_HERSHEY_SIMPLEX;
  for (int t = 0; t <= 5; ++t) {
    const double v = lo + (hi - lo) * t / 5.0;
    const int y = y_of(v);
    cv::line(img, {margin_l, y}, {width - margin_r, y}, grey, 1);
    std::ostringstream label;
    label << std::setprecision(3) << v;
    cv::putText(img, label.str(), {5, y + 4}, font, 0.4, black, 1, cv::LINE_AA);
  }
  cv::line(img, {margin_l, top}, {margin_l, top + plot_h}, black, 1);
  cv::putText(img, "perceptual distance", {margin_l, top - 15}, font, 0.5, black, 1, cv::LINE_AA);

  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    const auto& s = report.rows[i].stats;
    const int cx = margin_l + box_w * static_cast<int>(i) + box_w / 2;
    const int half = box_w / 4;
    cv::line(img, {cx, y_of(s.whisker_low)}, {cx, y_of(s.q1)}, black, 1);
    cv::line(img, {cx, y_of(s.q3)}, {cx, y_of(s.whisker_high)}, black, 1);
    cv::line(img, {cx - half / 2, y_of(s.whisker_low)}, {cx + half / 2, y_of(s.whisker_low)}, black, 1);
    cv::line(img, {cx - half / 2, y_of(s.whisker_high)}, {cx + half / 2, y_of(s.whisker_high)}, black, 1);
    cv::Rect box(cv::Point(cx - half, y_of(s.q3)), cv::Point(cx + half, y_of(s.q1) + 1));
    cv::rectangle(img, box, blue, cv::FILLED);
    cv::rectangle(img, box, black, 1);
    cv::line(img, {cx - half, y_of(s.median)}, {cx + half, y_of(s.median)}, red, 2);
    for (double o : s.outliers) cv::circle(img, {cx, y_of(o)}, 3, black, 1, cv::LINE_AA);

    const auto& name = report.rows[i].config;
    int baseline = 0;
    const auto size = cv::getTextSize(name, font, 0.45, 1, &baseline);
    cv::putText(img, name, {cx - size.width / 2, top + plot_h + 25}, font, 0.45, black, 1, cv::LINE_AA);
  }
  if (!cv::imwrite(png.string(), img)) throw std::runtime_error("cannot write " + png.string());
}

void write_distances_csv(const std::vector<PairDistance>& distances, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << std::setprecision(17) << "pair_id,distance\n";
  for (const auto& d : distances) out << d.pair_id << ',' << d.distance << '\n';
}

void write_report(const std::map<std::string, std::vector<PairDistance>>& results,
                  const fs::path& out_dir) {
  if (results.empty()) throw std::invalid_argument("write_report: no results");
  fs::create_directories(out_dir);
  const auto report = results.size() == 1 ? build_report(results) : compare_report(results);
  for (const auto& [name, d] : results) {
    const auto dir = results.size() == 1 ? out_dir : out_dir / name;
    fs::create_directories(dir);
    write_distances_csv(d, dir / "distances.csv");
    auto stats = summarize_boxplot(values_of(d)).to_json();
    stats["config"] = name;
    stats["mean"] = mean_distance(d);
    std::ofstream(dir / "boxstats.json") << stats.dump(2) << '\n';
  }
  std::ofstream(out_dir / "comparison.csv") << report.to_csv();
  std::ofstream(out_dir / "comparison.json") << report.to_json().dump(2) << '\n';
  render_boxplot(report, out_dir / "comparison.png");
}

}  // namespace structgan
