#include "structgan/synthetic.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>
#include <stdexcept>

#include "structgan/data.hpp"

namespace structgan {

namespace fs = std::filesystem;

std::string_view to_string(CorruptionKind kind) {
  switch (kind) {
    case CorruptionKind::fog: return "fog";
    case CorruptionKind::night: return "night";
    case CorruptionKind::rain: return "rain";
  }
  return "?";
}

CorruptionKind corruption_kind_from_string(std::string_view s) {
  if (s == "fog") return CorruptionKind::fog;
  if (s == "night") return CorruptionKind::night;
  if (s == "rain") return CorruptionKind::rain;
  throw std::invalid_argument("unknown corruption '" + std::string(s) + "' (fog, night, rain)");
}

namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uniform_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

cv::Scalar rgb(double r, double g, double b) { return cv::Scalar(r, g, b); }

void fill_rect(Scene& s, cv::Rect r, cv::Scalar color, int label) {
  r &= cv::Rect(0, 0, s.image.cols, s.image.rows);
  if (r.area() <= 0) return;
  s.image(r).setTo(color);
  if (label >= 0) s.labels(r).setTo(label);
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  // splitmix64 step over the combined value
  std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void validate_severity(double severity) {
  if (!(severity >= 0.0 && severity <= 1.0))
    throw std::invalid_argument("corruption severity must lie in [0, 1], got " +
                                std::to_string(severity));
}

cv::Mat to_float(const cv::Mat& rgb8) {
  cv::Mat f;
  rgb8.convertTo(f, CV_32FC3, 1.0 / 255.0);
  return f;
}

cv::Mat to_bytes(const cv::Mat& rgbf) {
  cv::Mat b;
  rgbf.convertTo(b, CV_8UC3, 255.0);
  return b;
}

}  // namespace

Scene render_scene(std::uint64_t seed, Extent size) {
  if (size.width < 8 || size.height < 8) throw std::invalid_argument("render_scene: size below 8x8");
  Rng rng(seed);
  const int w = size.width, h = size.height;
  Scene s{cv::Mat(h, w, CV_32FC3), cv::Mat(h, w, CV_8UC1, cv::Scalar(kSky))};

  const int horizon = static_cast<int>(h * uniform(rng, 0.42, 0.58));
  for (int y = 0; y < horizon; ++y) {
    const double t = horizon > 1 ? static_cast<double>(y) / (horizon - 1) : 0.0;
    s.image.row(y).setTo(rgb(0.35 + 0.35 * t, 0.55 + 0.25 * t, 0.90 + 0.06 * t));
  }
  fill_rect(s, {0, horizon, w, h - horizon}, rgb(0.28, 0.50, 0.22), kVegetation);

  // Road: trapezoid widening toward the bottom.
  const double centre = w * uniform(rng, 0.35, 0.65);
  const double top_half = w * uniform(rng, 0.04, 0.10);
  const double bottom_half = w * uniform(rng, 0.35, 0.55);
  std::vector<cv::Point> road{{static_cast<int>(centre - top_half), horizon},
                              {static_cast<int>(centre + top_half), horizon},
                              {static_cast<int>(centre + bottom_half), h - 1},
                              {static_cast<int>(centre - bottom_half), h - 1}};
  const double grey = uniform(rng, 0.30, 0.42);
  cv::fillConvexPoly(s.image, road, rgb(grey, grey, grey));
  cv::fillConvexPoly(s.labels, road, cv::Scalar(kRoad));
  for (int y = horizon + 2; y < h; y += std::max(3, h / 10)) {
    const double t = static_cast<double>(y - horizon) / std::max(1, h - horizon);
    const int dash = std::max(1, static_cast<int>(1 + 2 * t));
    cv::rectangle(s.image, cv::Rect(static_cast<int>(centre) - dash / 2, y, dash, std::max(1, h / 20)),
                  rgb(0.92, 0.92, 0.88), cv::FILLED);
  }

  // Buildings standing on the horizon.
  const int n_buildings = uniform_int(rng, 2, 5);
  for (int i = 0; i < n_buildings; ++i) {
    const int bw = static_cast<int>(w * uniform(rng, 0.10, 0.25));
    const int bh = static_cast<int>(horizon * uniform(rng, 0.35, 0.85));
    const int bx = uniform_int(rng, -bw / 3, w - 2 * bw / 3);
    const double base = uniform(rng, 0.35, 0.75);
    const cv::Scalar wall = rgb(base, base * uniform(rng, 0.75, 0.95), base * uniform(rng, 0.6, 0.9));
    const cv::Rect body(bx, horizon - bh, bw, bh);
    fill_rect(s, body, wall, kBuilding);
    const int win = std::max(1, w / 40);
    for (int wy = body.y + 2 * win; wy + win < horizon - win; wy += 3 * win)
      for (int wx = body.x + win; wx + win < body.x + bw - win; wx += 3 * win)
        fill_rect(s, {wx, wy, win, win}, rgb(0.15, 0.18, 0.25), -1);
  }

  // Trees on the verges.
  const int n_trees = uniform_int(rng, 1, 3);
  for (int i = 0; i < n_trees; ++i) {
    const bool left = uniform(rng, 0, 1) < 0.5;
    const int tx = left ? uniform_int(rng, 0, std::max(0, static_cast<int>(centre - bottom_half / 2)))
                        : uniform_int(rng, std::min(w - 1, static_cast<int>(centre + bottom_half / 2)), w - 1);
    const int base_y = uniform_int(rng, horizon, std::min(h - 1, horizon + h / 6));
    const int trunk_h = std::max(2, h / 12);
    const int radius = std::max(2, static_cast<int>(h * uniform(rng, 0.07, 0.14)));
    fill_rect(s, {tx - std::max(1, w / 64), base_y - trunk_h, std::max(2, w / 32), trunk_h},
              rgb(0.35, 0.24, 0.12), kVegetation);
    const cv::Point c(tx, base_y - trunk_h - radius / 2);
    cv::circle(s.image, c, radius, rgb(0.12, uniform(rng, 0.40, 0.55), 0.12), cv::FILLED);
    cv::circle(s.labels, c, radius, cv::Scalar(kVegetation), cv::FILLED);
  }

  // Vehicles on the road.
  const int n_cars = uniform_int(rng, 0, 2);
  for (int i = 0; i < n_cars; ++i) {
    const double t = uniform(rng, 0.3, 0.9);
    const int cy = horizon + static_cast<int>(t * (h - horizon - 1));
    const int cw = std::max(3, static_cast<int>(w * (0.06 + 0.18 * t)));
    const int ch = std::max(2, cw / 2);
    const double half = top_half + t * (bottom_half - top_half);
    const int cx = static_cast<int>(centre + uniform(rng, -0.6, 0.6) * half) - cw / 2;
    const cv::Scalar body = rgb(uniform(rng, 0.1, 0.95), uniform(rng, 0.1, 0.5), uniform(rng, 0.1, 0.95));
    fill_rect(s, {cx, cy - ch, cw, ch}, body, kVehicle);
    fill_rect(s, {cx + cw / 5, cy - ch, 3 * cw / 5, std::max(1, ch / 3)}, rgb(0.2, 0.25, 0.3), kVehicle);
  }
  return s;
}

cv::Mat corrupt(const cv::Mat& clean, const CorruptionSpec& spec, std::uint64_t image_seed) {
  validate_severity(spec.severity);
  if (clean.type() != CV_32FC3) throw std::invalid_argument("corrupt: expected CV_32FC3 image");
  cv::Mat out = clean.clone();
  const double s = spec.severity;
  if (s == 0.0) return out;
  Rng rng(mix_seed(spec.seed, image_seed));
  const int h = out.rows, w = out.cols;

  switch (spec.kind) {
    case CorruptionKind::fog: {
      for (int y = 0; y < h; ++y) {
        const double depth = h > 1 ? 1.0 - static_cast<double>(y) / (h - 1) : 1.0;
        const float alpha = static_cast<float>(s * depth);
        auto* row = out.ptr<cv::Vec3f>(y);
        for (int x = 0; x < w; ++x) row[x] = row[x] * (1.0f - alpha) + cv::Vec3f(alpha, alpha, alpha);
      }
      break;
    }
    case CorruptionKind::night: {
      const double gamma = 1.0 + 2.0 * s;
      const double gain = 1.0 - 0.7 * s;
      std::normal_distribution<double> noise(0.0, 0.04 * s);
      for (int y = 0; y < h; ++y) {
        auto* row = out.ptr<cv::Vec3f>(y);
        for (int x = 0; x < w; ++x) {
          cv::Vec3f& p = row[x];
          for (int c = 0; c < 3; ++c) p[c] = static_cast<float>(gain * std::pow(p[c], gamma));
          const float luma = 0.299f * p[0] + 0.587f * p[1] + 0.114f * p[2];
          for (int c = 0; c < 3; ++c) {
            const double v = (1.0 - s) * p[c] + s * luma + noise(rng);
            p[c] = static_cast<float>(std::clamp(v, 0.0, 1.0));
          }
        }
      }
      break;
    }
    case CorruptionKind::rain: {
      cv::Mat mask(h, w, CV_32FC1, cv::Scalar(0));
      const int n = static_cast<int>(std::lround(s * 0.02 * w * h));
      const double angle = uniform(rng, 0.15, 0.35);
      for (int i = 0; i < n; ++i) {
        const cv::Point a(uniform_int(rng, 0, w - 1), uniform_int(rng, 0, h - 1));
        const double len = uniform(rng, 0.05, 0.15) * h;
        const cv::Point b(a.x + static_cast<int>(len * std::sin(angle)),
                          a.y + static_cast<int>(len * std::cos(angle)));
        cv::line(mask, a, b, cv::Scalar(1.0), 1, cv::LINE_8);
      }
      const float strength = static_cast<float>(0.5 + 0.3 * s);
      for (int y = 0; y < h; ++y) {
        auto* row = out.ptr<cv::Vec3f>(y);
        const auto* m = mask.ptr<float>(y);
        for (int x = 0; x < w; ++x) {
          const float a = strength * m[x];
          row[x] = row[x] * (1.0f - a) + cv::Vec3f(0.9f, 0.9f, 0.95f) * a;
        }
      }
      // Overall greying of rainy scenes.
      out = out * (1.0 - 0.15 * s) + cv::Scalar::all(0.5 * 0.15 * s);
      break;
    }
  }
  return out;
}

SyntheticDataset synthesize_desk_dataset(const std::vector<cv::Mat>& base_images,
                                         const CorruptionSpec& spec) {
  validate_severity(spec.severity);
  SyntheticDataset ds;
  for (std::size_t i = 0; i < base_images.size(); ++i) {
    const auto& img = base_images[i];
    if (img.type() != CV_8UC3) throw std::invalid_argument("synthesize_desk_dataset: expected 8-bit RGB");
    std::ostringstream id;
    id << std::setw(4) << std::setfill('0') << i;
    ds.pair_ids.push_back(id.str());
    ds.clean.push_back(img.clone());
    ds.degraded.push_back(to_bytes(corrupt(to_float(img), spec, i)));
  }
  return ds;
}

SyntheticDataset synthesize_desk_dataset(int count, Extent size, const CorruptionSpec& spec,
                                         std::uint64_t scene_seed) {
  validate_severity(spec.severity);
  if (count < 1) throw std::invalid_argument("synthesize_desk_dataset: count must be positive");
  SyntheticDataset ds;
  for (int i = 0; i < count; ++i) {
    const auto scene = render_scene(mix_seed(scene_seed, static_cast<std::uint64_t>(i)), size);
    const cv::Mat clean = to_bytes(scene.image);
    std::ostringstream id;
    id << std::setw(4) << std::setfill('0') << i;
    ds.pair_ids.push_back(id.str());
    ds.clean.push_back(clean);
    // Corrupt the quantised clean image so severity 0 reproduces it exactly.
    ds.degraded.push_back(to_bytes(corrupt(to_float(clean), spec, static_cast<std::uint64_t>(i))));
    ds.labels.push_back(scene.labels.clone());
  }
  return ds;
}

void write_synthetic_dataset(const fs::path& root, const SyntheticDataset& train,
                             const SyntheticDataset& test) {
  for (const char* sub : {"trainA", "trainB", "testA", "testB"}) fs::create_directories(root / sub);
  if (!train.labels.empty()) fs::create_directories(root / "labelsB");
  std::ofstream pairs(root / "pairs.csv");
  if (!pairs) throw std::runtime_error("cannot write " + (root / "pairs.csv").string());
  pairs << "pair_id,clean_path,degraded_path\n";
  auto emit = [&](const SyntheticDataset& ds, const std::string& split) {
    for (std::size_t i = 0; i < ds.clean.size(); ++i) {
      const std::string id = split + "_" + ds.pair_ids[i];
      const std::string file = id + ".png";
      write_image(root / (split + "B") / file, ds.clean[i]);
      write_image(root / (split + "A") / file, ds.degraded[i]);
      pairs << id << "," << split << "B/" << file << "," << split << "A/" << file << "\n";
      if (split == "train" && i < ds.labels.size()) {
        if (!cv::imwrite((root / "labelsB" / file).string(), ds.labels[i]))
          throw std::runtime_error("cannot write label map for " + file);
      }
    }
  };
  emit(train, "train");
  emit(test, "test");
}

torch::Tensor labels_to_onehot(const cv::Mat& labels, int classes) {
  if (labels.type() != CV_8UC1) throw std::invalid_argument("labels_to_onehot: expected CV_8UC1");
  cv::Mat c = labels.isContinuous() ? labels : labels.clone();
  auto ids = torch::from_blob(c.data, {c.rows, c.cols}, torch::kUInt8).to(torch::kLong);
  if (ids.max().item<int64_t>() >= classes)
    throw std::invalid_argument("labels_to_onehot: label id exceeds class count");
  return torch::one_hot(ids, classes).permute({2, 0, 1}).to(torch::kFloat32).contiguous();
}

}  // namespace structgan
