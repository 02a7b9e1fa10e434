// Independent scalar references for the loss and statistics tests. Everything
// here works on flat std::vector<double> so it shares no code with the library.
#ifndef STRUCTGAN_TESTS_ORACLES_HPP
#define STRUCTGAN_TESTS_ORACLES_HPP

#include <torch/torch.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace oracle {

inline std::vector<double> values(const torch::Tensor& t) {
  auto c = t.detach().to(torch::kDouble).contiguous().view(-1);
  return {c.data_ptr<double>(), c.data_ptr<double>() + c.numel()};
}

inline double mean_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::fabs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

inline double mse(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

inline double sgn(double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); }

// One H x W map, row-major.
inline double edge_preservation(const std::vector<double>& ref, const std::vector<double>& gen) {
  double non_edge = 0, masked = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    non_edge += 1.0 - ref[i];
    const double err = ref[i] - gen[i];
    const double pos = (1.0 + sgn(err)) / 2.0;
    masked += (pos * err) * (pos * err);
  }
  return non_edge / static_cast<double>(ref.size()) * masked;
}

inline double edge_introduction(const std::vector<double>& ref, const std::vector<double>& gen) {
  double edge = 0, masked = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    edge += ref[i];
    const double err = ref[i] - gen[i];
    const double neg = (1.0 - sgn(err)) / 2.0;
    masked += (neg * err) * (neg * err);
  }
  return edge / static_cast<double>(ref.size()) * masked;
}

inline double lsgan_generator(const std::vector<double>& s) {
  double acc = 0;
  for (double v : s) acc += (v - 1) * (v - 1);
  return acc / static_cast<double>(s.size());
}

inline double lsgan_discriminator(const std::vector<double>& real, const std::vector<double>& fake) {
  double r = 0, f = 0;
  for (double v : real) r += (v - 1) * (v - 1);
  for (double v : fake) f += v * v;
  return 0.5 * r / static_cast<double>(real.size()) + 0.5 * f / static_cast<double>(fake.size());
}

// Sort-based quantile: position p (n - 1) between order statistics.
inline double quantile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double h = p * static_cast<double>(v.size() - 1);
  const std::size_t k = static_cast<std::size_t>(h);
  if (k + 1 >= v.size()) return v.back();
  return v[k] + (h - static_cast<double>(k)) * (v[k + 1] - v[k]);
}

// Central differences of a scalar function of `x` (double tensor), step h.
inline torch::Tensor numeric_gradient(const std::function<double(const torch::Tensor&)>& f,
                                      const torch::Tensor& x, double h = 1e-4) {
  auto base = x.detach().clone().to(torch::kDouble).contiguous();
  auto grad = torch::zeros_like(base);
  auto flat = base.view(-1);
  auto g = grad.view(-1);
  for (int64_t i = 0; i < flat.numel(); ++i) {
    const double orig = flat[i].item<double>();
    flat[i] = orig + h;
    const double up = f(base);
    flat[i] = orig - h;
    const double down = f(base);
    flat[i] = orig;
    g[i] = (up - down) / (2 * h);
  }
  return grad;
}

// Largest relative error, with an absolute floor for near-zero entries.
inline double max_relative_error(const torch::Tensor& analytic, const torch::Tensor& numeric,
                                 double floor = 1e-6) {
  auto a = values(analytic), n = values(numeric);
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::fabs(a[i] - n[i]) / std::max({std::fabs(a[i]), std::fabs(n[i]), floor}));
  return worst;
}

}  // namespace oracle

#endif
