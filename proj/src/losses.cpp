#include "structgan/losses.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace structgan {

namespace {

std::string shape_str(const torch::Tensor& t) {
  std::ostringstream os;
  os << t.sizes();
  return os.str();
}

void require_same_shape(const char* op, const torch::Tensor& a, const torch::Tensor& b) {
  if (a.sizes() != b.sizes())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                                shape_str(b));
}

void require_finite(const char* op, const torch::Tensor& t) {
  if (!torch::isfinite(t).all().item<bool>())
    throw std::invalid_argument(std::string(op) + ": non-finite input");
}

void require_edge_map(const char* op, const torch::Tensor& ref, const torch::Tensor& gen) {
  require_same_shape(op, ref, gen);
  if (ref.dim() < 2) throw std::invalid_argument(std::string(op) + ": edge maps need (..., H, W)");
  for (const auto* t : {&ref, &gen}) {
    require_finite(op, *t);
    if (t->min().item<double>() < 0.0 || t->max().item<double>() > 1.0)
      throw std::invalid_argument(std::string(op) + ": edge map values must lie in [0, 1]");
  }
}

// Collapses leading dims so maps are (B, H*W).
torch::Tensor flat_maps(const torch::Tensor& m) {
  const auto h = m.size(-2), w = m.size(-1);
  return m.reshape({-1, h * w});
}

}  // namespace

torch::Tensor cycle_consistency_loss(const torch::Tensor& original,
                                     const torch::Tensor& reconstructed) {
  require_same_shape("cycle_consistency_loss", original, reconstructed);
  return (original - reconstructed).abs().mean();
}

torch::Tensor perceptual_distance(const FeatureStack& a, const FeatureStack& b) {
  if (a.layers.empty()) throw std::invalid_argument("perceptual_distance: empty feature stack");
  if (a.layers.size() != b.layers.size())
    throw std::invalid_argument("perceptual_distance: stacks have " +
                                std::to_string(a.layers.size()) + " and " +
                                std::to_string(b.layers.size()) + " layers");
  torch::Tensor total;
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    const auto& la = a.layers[l];
    const auto& lb = b.layers[l];
    if (la.weight != lb.weight)
      throw std::invalid_argument("perceptual_distance: layer " + std::to_string(l) +
                                  " weights differ");
    if (!std::isfinite(la.weight) || la.weight < 0.0)
      throw std::invalid_argument("perceptual_distance: layer weights must be finite and >= 0");
    require_same_shape("perceptual_distance", la.map, lb.map);
    auto term = la.weight * (la.map - lb.map).pow(2).mean();
    total = total.defined() ? total + term : term;
  }
  return total;
}

torch::Tensor edge_preservation_loss(const torch::Tensor& edge_ref, const torch::Tensor& edge_gen) {
  require_edge_map("edge_preservation_loss", edge_ref, edge_gen);
  auto ref = flat_maps(edge_ref);
  auto err = ref - flat_maps(edge_gen);
  auto pos = ((1 + err.detach().sign()) / 2);
  auto f_bal = (1 - ref.detach()).mean(1);
  auto masked = (pos * err).pow(2).sum(1);
  return (f_bal * masked).mean();
}

torch::Tensor edge_introduction_loss(const torch::Tensor& edge_ref, const torch::Tensor& edge_gen) {
  require_edge_map("edge_introduction_loss", edge_ref, edge_gen);
  auto ref = flat_maps(edge_ref);
  auto err = ref - flat_maps(edge_gen);
  auto neg = ((1 - err.detach().sign()) / 2);
  auto density = ref.detach().mean(1);
  auto masked = (neg * err).pow(2).sum(1);
  return (density * masked).mean();
}

torch::Tensor adversarial_generator_loss(const torch::Tensor& fake_scores) {
  require_finite("adversarial_generator_loss", fake_scores);
  return (fake_scores - 1).pow(2).mean();
}

torch::Tensor adversarial_discriminator_loss(const torch::Tensor& real_scores,
                                             const torch::Tensor& fake_scores) {
  require_finite("adversarial_discriminator_loss", real_scores);
  require_finite("adversarial_discriminator_loss", fake_scores);
  return 0.5 * (real_scores - 1).pow(2).mean() + 0.5 * fake_scores.pow(2).mean();
}

std::string term_name(ConstraintKind kind, PairTag tag) {
  const char* prefix = kind == ConstraintKind::perceptual          ? "p_"
                       : kind == ConstraintKind::edge_preservation ? "ep_"
                                                                   : "ei_";
  return prefix + std::string(to_string(tag));
}

namespace {

bool is_adversarial(std::string_view t) {
  return t == term::g_adv_A2B || t == term::g_adv_B2A || t == term::d_A || t == term::d_B;
}

}  // namespace

std::string lambda_name(std::string_view t) {
  if (is_adversarial(t)) return std::string(t);
  return "lambda_" + std::string(t);
}

double term_weight(std::string_view t, const ExperimentConfig& c) {
  if (is_adversarial(t)) return 1.0;
  if (t == term::cyc_A) return c.lambda_cyc_A;
  if (t == term::cyc_B) return c.lambda_cyc_B;
  for (PairTag tag : kAllPairTags) {
    if (t == term_name(ConstraintKind::perceptual, tag)) return c.lambda_p_of(tag);
    if (t == term_name(ConstraintKind::edge_preservation, tag)) return c.lambda_ep_of(tag);
    if (t == term_name(ConstraintKind::edge_introduction, tag)) return c.lambda_ei_of(tag);
  }
  throw std::invalid_argument("unknown loss term '" + std::string(t) + "'");
}

double LossReport::raw(std::string_view name) const {
  auto it = terms.find(name);
  return it == terms.end() ? 0.0 : it->second.raw;
}

double LossReport::weighted(std::string_view name) const {
  auto it = terms.find(name);
  return it == terms.end() ? 0.0 : it->second.weighted();
}

double LossReport::weighted_sum() const {
  double s = 0.0;
  for (const auto& [name, t] : terms) s += t.weighted();
  return s;
}

const std::vector<std::string>& LossReport::columns() {
  static const std::vector<std::string> cols = [] {
    std::vector<std::string> c{std::string(term::g_adv_A2B), std::string(term::g_adv_B2A),
                               std::string(term::d_A),       std::string(term::d_B),
                               std::string(term::cyc_A),     std::string(term::cyc_B)};
    for (auto kind : {ConstraintKind::perceptual, ConstraintKind::edge_preservation,
                      ConstraintKind::edge_introduction})
      for (PairTag tag : kAllPairTags) c.push_back(term_name(kind, tag));
    c.emplace_back("total");
    return c;
  }();
  return cols;
}

std::vector<double> LossReport::csv_values() const {
  std::vector<double> v;
  for (const auto& col : columns()) v.push_back(col == "total" ? total : raw(col));
  return v;
}

nlohmann::json LossReport::to_json() const {
  nlohmann::json j;
  for (const auto& [name, t] : terms)
    j["terms"][name] = {{"raw", t.raw}, {"weight", t.weight}, {"weighted", t.weighted()}};
  j["total"] = total;
  return j;
}

bool operator==(const LossReport& a, const LossReport& b) {
  if (a.total != b.total || a.terms.size() != b.terms.size()) return false;
  for (const auto& [name, t] : a.terms) {
    auto it = b.terms.find(name);
    if (it == b.terms.end() || it->second.raw != t.raw || it->second.weight != t.weight)
      return false;
  }
  return true;
}

LossReport total_objective(const LossComponents& components, const ExperimentConfig& config) {
  LossReport report;
  for (const auto& col : LossReport::columns()) {
    if (col == "total") continue;
    const double w = term_weight(col, config);
    auto it = components.find(col);
    if (it == components.end()) {
      if (w != 0.0)
        throw std::invalid_argument("total_objective: missing loss term '" + col +
                                    "' required by " + lambda_name(col));
      continue;
    }
    if (!std::isfinite(it->second))
      throw std::invalid_argument("total_objective: non-finite value for '" + col + "'");
    report.terms[col] = LossTerm{it->second, w};
  }
  for (const auto& [name, value] : components)
    if (!report.contains(name)) throw std::invalid_argument("unknown loss term '" + name + "'");
  report.total = report.weighted_sum();
  return report;
}

}  // namespace structgan
