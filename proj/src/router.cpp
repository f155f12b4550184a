#include "expertroute/router.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "expertroute/error.hpp"
#include "expertroute/numeric.hpp"
#include "expertroute/random.hpp"

namespace expertroute {

namespace {

double floored_log(double p) { return std::log(std::max(p, kProbabilityFloor)); }

void require_same_length(const RoutingDistribution& a, const RoutingDistribution& b) {
  if (a.size() != b.size()) {
    std::ostringstream msg;
    msg << "distribution length mismatch: " << a.size() << " vs " << b.size();
    throw UsageError(msg.str());
  }
}

}  // namespace

void RouterModel::validate() const {
  if (registry.size() < 2) throw UsageError("router needs at least 2 candidate models");
  featurizer.validate();
  if (weights.size() != registry.size() * static_cast<std::size_t>(featurizer.dimension)) {
    throw UsageError("router weight matrix does not match registry size x feature dimension");
  }
  if (bias.size() != registry.size()) throw UsageError("router bias length does not match registry");
  auto finite = [](double v) { return std::isfinite(v); };
  if (!std::all_of(weights.begin(), weights.end(), finite) ||
      !std::all_of(bias.begin(), bias.end(), finite)) {
    throw UsageError("router parameters must be finite");
  }
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw UsageError("learning_rate must be positive");
  }
  if (epochs == 0) throw UsageError("epochs must be positive");
  if (batch_size == 0) throw UsageError("batch_size must be positive");
  if (!(beta >= 0.0 && beta <= 1.0)) throw UsageError("beta must lie in [0, 1]");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw UsageError("temperature must be positive");
  }
  if (!(l2_penalty >= 0.0) || !std::isfinite(l2_penalty)) {
    throw UsageError("l2_penalty must be non-negative");
  }
}

RouterModel init_router(const ModelRegistry& registry, const FeaturizerConfig& featurizer,
                        std::uint64_t seed) {
  if (registry.size() < 2) throw UsageError("router needs at least 2 candidate models");
  featurizer.validate();
  RouterModel model;
  model.registry = registry;
  model.featurizer = featurizer;
  model.weights.resize(registry.size() * static_cast<std::size_t>(featurizer.dimension));
  model.bias.assign(registry.size(), 0.0);
  Rng rng(seed);
  for (double& w : model.weights) w = rng.uniform(-0.01, 0.01);
  return model;
}

std::vector<double> logits(const RouterModel& model, const FeatureVector& features) {
  if (features.dimension != model.dimension()) {
    std::ostringstream msg;
    msg << "feature dimension " << features.dimension << " does not match router dimension "
        << model.dimension();
    throw UsageError(msg.str());
  }
  std::vector<double> z(model.bias);
  for (std::size_t k = 0; k < z.size(); ++k) {
    const double* row = model.weights.data() + k * model.dimension();
    for (std::size_t n = 0; n < features.indices.size(); ++n) {
      z[k] += row[features.indices[n]] * features.values[n];
    }
  }
  return z;
}

RoutingDistribution forward(const RouterModel& model, const FeatureVector& features) {
  return {softmax(logits(model, features))};
}

double kl_divergence(const RoutingDistribution& p, const RoutingDistribution& q) {
  require_same_length(p, q);
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) total += p[i] * (std::log(p[i]) - floored_log(q[i]));
  }
  return std::max(total, 0.0);
}

double kl_loss(const RoutingDistribution& pred, const RoutingDistribution& target,
               KlDirection direction) {
  return direction == KlDirection::kTargetToPrediction ? kl_divergence(target, pred)
                                                       : kl_divergence(pred, target);
}

std::vector<double> kl_logit_gradient(const RoutingDistribution& pred,
                                      const RoutingDistribution& target, KlDirection direction) {
  require_same_length(pred, target);
  const std::size_t k = pred.size();
  std::vector<double> g(k, 0.0);
  if (direction == KlDirection::kTargetToPrediction) {
    // L = sum_i t_i ln t_i - sum_i t_i ln max(p_i, floor); floored entries
    // have zero derivative.
    double active_mass = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      if (pred[i] > kProbabilityFloor) active_mass += target[i];
    }
    for (std::size_t i = 0; i < k; ++i) {
      g[i] = pred[i] * active_mass - (pred[i] > kProbabilityFloor ? target[i] : 0.0);
    }
  } else {
    // L = sum_i p_i (ln p_i - ln t_i); dL/dz_k = p_k (ln p_k - ln t_k - L).
    std::vector<double> a(k, 0.0);
    double loss = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      if (pred[i] > 0.0) a[i] = std::log(pred[i]) - floored_log(target[i]);
      loss += pred[i] * a[i];
    }
    for (std::size_t i = 0; i < k; ++i) g[i] = pred[i] * (a[i] - loss);
  }
  return g;
}

double objective(const RouterModel& model, std::span<const FeatureVector> features,
                 std::span<const RoutingDistribution> targets, double l2_penalty,
                 KlDirection direction) {
  if (features.size() != targets.size() || features.empty()) {
    throw UsageError("objective: features and targets must be non-empty and aligned");
  }
  double total = 0.0;
  for (std::size_t r = 0; r < features.size(); ++r) {
    total += kl_loss(forward(model, features[r]), targets[r], direction);
  }
  double sq = 0.0;
  for (double w : model.weights) sq += w * w;
  return total / static_cast<double>(features.size()) + 0.5 * l2_penalty * sq;
}

ObjectiveGradient objective_gradient(const RouterModel& model,
                                     std::span<const FeatureVector> features,
                                     std::span<const RoutingDistribution> targets,
                                     double l2_penalty, KlDirection direction) {
  if (features.size() != targets.size() || features.empty()) {
    throw UsageError("objective_gradient: features and targets must be non-empty and aligned");
  }
  ObjectiveGradient grad{std::vector<double>(model.weights.size(), 0.0),
                         std::vector<double>(model.bias.size(), 0.0)};
  const double scale = 1.0 / static_cast<double>(features.size());
  const std::size_t dim = model.dimension();
  for (std::size_t r = 0; r < features.size(); ++r) {
    const auto g = kl_logit_gradient(forward(model, features[r]), targets[r], direction);
    for (std::size_t k = 0; k < g.size(); ++k) {
      grad.bias[k] += scale * g[k];
      for (std::size_t n = 0; n < features[r].indices.size(); ++n) {
        grad.weights[k * dim + features[r].indices[n]] += scale * g[k] * features[r].values[n];
      }
    }
  }
  for (std::size_t i = 0; i < grad.weights.size(); ++i) grad.weights[i] += l2_penalty * model.weights[i];
  return grad;
}

std::vector<RoutingDistribution> distillation_targets(const RewardDataset& dataset,
                                                      const TagRewardTable& table, double beta,
                                                      double temperature) {
  std::vector<RoutingDistribution> targets;
  targets.reserve(dataset.rows.size());
  for (const auto& row : dataset.rows) {
    targets.push_back(
        normalize_rewards(enhance_labels(row.rewards, row.query, table, beta), temperature));
  }
  return targets;
}

TrainResult train(RouterModel model, const RewardDataset& dataset, const TagRewardTable& table,
                  const TrainConfig& config) {
  const auto started = std::chrono::steady_clock::now();
  config.validate();
  model.validate();
  if (dataset.rows.empty()) throw DataError("train: empty dataset");
  if (dataset.registry.size() != model.num_models()) {
    throw UsageError("train: dataset registry size does not match router");
  }

  const auto targets = distillation_targets(dataset, table, config.beta, config.temperature);
  std::vector<FeatureVector> features;
  features.reserve(dataset.rows.size());
  for (const auto& row : dataset.rows) features.push_back(featurize(model.featurizer, row.query.text));

  const std::size_t rows = dataset.rows.size();
  const std::size_t k = model.num_models();
  const std::size_t dim = model.dimension();
  std::vector<std::size_t> order(rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(config.seed);

  TrainReport report;
  report.rows = rows;
  double last_finite = 0.0;
  std::vector<std::vector<double>> batch_grads;

  for (std::uint32_t epoch = 0; epoch < config.epochs; ++epoch) {
    if (config.shuffle) rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0; start < rows; start += config.batch_size) {
      const std::size_t end = std::min(rows, start + config.batch_size);
      const double step = config.learning_rate / static_cast<double>(end - start);

      // Gradients for the whole batch come from the pre-update parameters.
      batch_grads.clear();
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t r = order[b];
        batch_grads.push_back(
            kl_logit_gradient(forward(model, features[r]), targets[r], config.kl_direction));
      }
      if (config.l2_penalty > 0.0) {
        const double decay = 1.0 - config.learning_rate * config.l2_penalty;
        for (double& w : model.weights) w *= decay;
      }
      for (std::size_t b = start; b < end; ++b) {
        const auto& f = features[order[b]];
        const auto& g = batch_grads[b - start];
        for (std::size_t c = 0; c < k; ++c) {
          model.bias[c] -= step * g[c];
          double* row = model.weights.data() + c * dim;
          for (std::size_t n = 0; n < f.indices.size(); ++n) {
            row[f.indices[n]] -= step * g[c] * f.values[n];
          }
        }
      }
    }

    double total = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      total += kl_loss(forward(model, features[r]), targets[r], config.kl_direction);
    }
    const double epoch_loss = total / static_cast<double>(rows);
    const auto finite = [](double v) { return std::isfinite(v); };
    if (!std::isfinite(epoch_loss) || !std::all_of(model.bias.begin(), model.bias.end(), finite) ||
        !std::all_of(model.weights.begin(), model.weights.end(), finite)) {
      std::ostringstream msg;
      msg << "training diverged at epoch " << (epoch + 1) << "; last finite loss " << last_finite;
      throw TrainingDiverged(msg.str(), last_finite);
    }
    last_finite = epoch_loss;
    report.epoch_losses.push_back(epoch_loss);
  }

  report.final_loss = report.epoch_losses.back();
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return {std::move(model), std::move(report)};
}

RouteDecision route(const RouterModel& model, std::string_view text) {
  RouteDecision decision;
  decision.distribution = forward(model, featurize(model.featurizer, text));
  decision.model_index = argmax(decision.distribution.probs);
  decision.model_id = model.registry[decision.model_index].model_id;
  return decision;
}

}  // namespace expertroute
