#ifndef STRUCTGAN_LOSSES_HPP
#define STRUCTGAN_LOSSES_HPP

#include <torch/torch.h>

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "structgan/config.hpp"

namespace structgan {

struct FeatureLayer {
  torch::Tensor map;
  double weight = 1.0;
};

// Feature maps of one image at several depths, each with its distance weight.
struct FeatureStack {
  std::vector<FeatureLayer> layers;
};

// Mean absolute difference; the cycle weight is applied by total_objective.
torch::Tensor cycle_consistency_loss(const torch::Tensor& original,
                                     const torch::Tensor& reconstructed);

// Sum over layers of weight * mean squared difference. Stacks must agree in
// layer count, per-layer shape and weights.
torch::Tensor perceptual_distance(const FeatureStack& a, const FeatureStack& b);

// Edge losses take maps shaped (..., H, W) with values in [0, 1]; leading dims
// are a batch and the per-map losses are averaged over it.
//
// Preservation penalises edges of `edge_ref` that are weaker in `edge_gen`:
//   err = ref - gen,  pos = (1 + sign(err)) / 2,  f_bal = sum(1 - ref) / (W H)
//   L_EP = f_bal * sum((pos * err)^2)
// Introduction penalises edges of `edge_gen` absent from `edge_ref`:
//   neg = (1 - sign(err)) / 2,  L_EI = (sum(ref) / (W H)) * sum((neg * err)^2)
// Masks and balance factors are detached from the graph.
torch::Tensor edge_preservation_loss(const torch::Tensor& edge_ref, const torch::Tensor& edge_gen);
torch::Tensor edge_introduction_loss(const torch::Tensor& edge_ref, const torch::Tensor& edge_gen);

// Least-squares adversarial objectives: targets 1 for real, 0 for fake.
torch::Tensor adversarial_generator_loss(const torch::Tensor& fake_scores);
torch::Tensor adversarial_discriminator_loss(const torch::Tensor& real_scores,
                                             const torch::Tensor& fake_scores);

namespace term {
inline constexpr std::string_view g_adv_A2B = "g_adv_A2B";
inline constexpr std::string_view g_adv_B2A = "g_adv_B2A";
inline constexpr std::string_view d_A = "d_A";
inline constexpr std::string_view d_B = "d_B";
inline constexpr std::string_view cyc_A = "cyc_A";
inline constexpr std::string_view cyc_B = "cyc_B";
}  // namespace term

enum class ConstraintKind { perceptual, edge_preservation, edge_introduction };

// "p_afb", "ep_farb", ...
std::string term_name(ConstraintKind kind, PairTag tag);
// Name of the config weight behind a report term, e.g. "lambda_ep_afb".
std::string lambda_name(std::string_view term);
// Weight applied to a report term under `config`; adversarial terms weigh 1.
double term_weight(std::string_view term, const ExperimentConfig& config);

struct LossTerm {
  double raw = 0.0;
  double weight = 1.0;
  double weighted() const { return raw * weight; }
};

using LossComponents = std::map<std::string, double, std::less<>>;

struct LossReport {
  std::map<std::string, LossTerm, std::less<>> terms;
  double total = 0.0;

  bool contains(std::string_view name) const { return terms.find(name) != terms.end(); }
  // Unweighted value, 0 for terms that were not evaluated.
  double raw(std::string_view name) const;
  double weighted(std::string_view name) const;
  double weighted_sum() const;

  // Stable column order used by CSV metrics files.
  static const std::vector<std::string>& columns();
  std::vector<double> csv_values() const;
  nlohmann::json to_json() const;

  friend bool operator==(const LossReport& a, const LossReport& b);
};

// Objective bookkeeping: adversarial terms enter unweighted, every other term is
// scaled by its lambda. Throws std::invalid_argument naming the lambda when a
// term with nonzero weight is missing.
LossReport total_objective(const LossComponents& components, const ExperimentConfig& config);

}  // namespace structgan

#endif
