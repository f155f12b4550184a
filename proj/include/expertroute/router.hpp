#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "expertroute/featurizer.hpp"
#include "expertroute/registry.hpp"
#include "expertroute/reward_pipeline.hpp"

namespace expertroute {

inline constexpr std::uint32_t kRouterFormatVersion = 1;

/// Lower bound applied to probabilities before any logarithm, in the loss and
/// in its gradient alike.
inline constexpr double kProbabilityFloor = 1e-12;

/// Multinomial logistic regression over hashed text features:
/// Z(q) = softmax(W f(q) + b).
struct RouterModel {
  ModelRegistry registry;
  FeaturizerConfig featurizer;
  std::vector<double> weights;  // num_models() x dimension(), row-major
  std::vector<double> bias;     // num_models()
  std::uint32_t version = kRouterFormatVersion;

  std::size_t num_models() const noexcept { return registry.size(); }
  std::uint32_t dimension() const noexcept { return featurizer.dimension; }
  double weight(std::size_t model, std::uint32_t feature) const {
    return weights[model * dimension() + feature];
  }

  /// Throws UsageError on shape mismatch, K < 2 or non-finite parameters.
  void validate() const;
  bool operator==(const RouterModel&) const = default;
};

/// Which way round the distillation divergence is taken.
enum class KlDirection {
  kTargetToPrediction,  // KL(target || prediction), the default
  kPredictionToTarget,  // KL(prediction || target)
};

struct TrainConfig {
  double learning_rate = 0.1;
  std::uint32_t epochs = 20;
  std::uint32_t batch_size = 64;
  double beta = 0.3;
  double temperature = 1.0;
  double l2_penalty = 1e-6;
  std::uint64_t seed = 0;
  bool shuffle = true;
  KlDirection kl_direction = KlDirection::kTargetToPrediction;

  void validate() const;
};

struct TrainReport {
  /// Mean divergence over all rows, measured after each epoch.
  std::vector<double> epoch_losses;
  double final_loss = 0.0;
  double wall_seconds = 0.0;
  std::size_t rows = 0;
};

struct TrainResult {
  RouterModel model;
  TrainReport report;
};

struct RouteDecision {
  std::size_t model_index = 0;
  std::string model_id;
  RoutingDistribution distribution;
};

/// Weights uniform in [-0.01, 0.01] from a generator seeded with `seed`; zero bias.
RouterModel init_router(const ModelRegistry& registry, const FeaturizerConfig& featurizer,
                        std::uint64_t seed);

std::vector<double> logits(const RouterModel& model, const FeatureVector& features);

RoutingDistribution forward(const RouterModel& model, const FeatureVector& features);

/// KL(p || q) = sum_i p_i ln(p_i / q_i); zero entries of p contribute nothing
/// and q is floored at kProbabilityFloor.
double kl_divergence(const RoutingDistribution& p, const RoutingDistribution& q);

/// Distillation loss between the router's prediction and its target.
/// With the default direction this is KL(target || pred).
double kl_loss(const RoutingDistribution& pred, const RoutingDistribution& target,
               KlDirection direction = KlDirection::kTargetToPrediction);

/// d kl_loss / d logits for a prediction produced by softmax of those logits.
std::vector<double> kl_logit_gradient(const RoutingDistribution& pred,
                                      const RoutingDistribution& target,
                                      KlDirection direction = KlDirection::kTargetToPrediction);

/// Training objective: mean kl_loss over the rows plus (l2/2)·||W||² (bias unpenalized).
double objective(const RouterModel& model, std::span<const FeatureVector> features,
                 std::span<const RoutingDistribution> targets, double l2_penalty,
                 KlDirection direction = KlDirection::kTargetToPrediction);

struct ObjectiveGradient {
  std::vector<double> weights;  // same layout as RouterModel::weights
  std::vector<double> bias;
};

/// Dense analytic gradient of objective().
ObjectiveGradient objective_gradient(const RouterModel& model,
                                     std::span<const FeatureVector> features,
                                     std::span<const RoutingDistribution> targets,
                                     double l2_penalty,
                                     KlDirection direction = KlDirection::kTargetToPrediction);

/// Distillation targets: softmax(enhance_labels(r, q, table, beta) / temperature) per row.
std::vector<RoutingDistribution> distillation_targets(const RewardDataset& dataset,
                                                      const TagRewardTable& table,
                                                      double beta, double temperature);

/// Mini-batch gradient descent on objective() against distillation_targets().
/// Throws TrainingDiverged when a loss turns non-finite.
TrainResult train(RouterModel model, const RewardDataset& dataset, const TagRewardTable& table,
                  const TrainConfig& config);

RouteDecision route(const RouterModel& model, std::string_view text);

}  // namespace expertroute
