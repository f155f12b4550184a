#include "expertroute/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numeric>

#include "expertroute/error.hpp"
#include "expertroute/hash.hpp"
#include "expertroute/numeric.hpp"

namespace expertroute {

namespace {

double score_of(const SubsetScores& subset, std::string_view system) {
  auto it = subset.scores.find(system);
  if (it == subset.scores.end()) {
    throw DataError("system '" + std::string(system) + "' has no score in subset '" + subset.subset + "'");
  }
  return it->second;
}

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

std::size_t subset_rank(const SubsetScores& subset, std::string_view system) {
  const double mine = score_of(subset, system);
  std::size_t better = 0;
  for (const auto& [name, score] : subset.scores) {
    if (score > mine) ++better;
  }
  return better + 1;
}

double mean_task_rank(std::span<const SubsetScores> subsets, std::string_view system) {
  if (subsets.empty()) throw UsageError("mean_task_rank: no subsets");
  double total = 0.0;
  for (const auto& s : subsets) total += static_cast<double>(subset_rank(s, system));
  return total / static_cast<double>(subsets.size());
}

double uplift_rate(std::span<const SubsetScores> subsets, std::string_view system) {
  if (subsets.empty()) throw UsageError("uplift_rate: no subsets");
  std::size_t wins = 0;
  for (const auto& s : subsets) {
    if (subset_rank(s, system) == 1) ++wins;
  }
  return static_cast<double>(wins) / static_cast<double>(subsets.size());
}

EvalReport build_report(std::vector<SubsetScores> subsets) {
  EvalReport report;
  std::vector<std::string> systems;
  for (const auto& s : subsets) {
    if (s.scores.empty()) throw DataError("subset '" + s.subset + "' has no systems");
    for (const auto& [name, score] : s.scores) {
      if (std::find(systems.begin(), systems.end(), name) == systems.end()) systems.push_back(name);
    }
  }
  for (const auto& s : subsets) {
    for (const auto& name : systems) report.ranks[s.subset][name] = subset_rank(s, name);
  }
  for (const auto& name : systems) {
    report.systems.push_back({name, mean_task_rank(subsets, name), uplift_rate(subsets, name)});
  }
  report.subsets = std::move(subsets);
  return report;
}

double routing_accuracy(const RouterModel& model, const RewardDataset& dataset, const OracleMap& oracle) {
  if (dataset.rows.empty()) throw DataError("routing_accuracy: empty dataset");
  std::size_t hits = 0;
  for (const auto& row : dataset.rows) {
    const std::size_t expected = oracle_select(row.query, oracle);
    if (route(model, row.query.text).model_index == expected) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(dataset.rows.size());
}

SingleModelBaseline best_single_model(const RewardDataset& dataset, const OracleMap& oracle) {
  if (dataset.rows.empty()) throw DataError("best_single_model: empty dataset");
  std::vector<std::size_t> wins(dataset.registry.size(), 0);
  for (const auto& row : dataset.rows) ++wins[oracle_select(row.query, oracle)];
  std::size_t best = 0;
  for (std::size_t i = 1; i < wins.size(); ++i) {
    if (wins[i] > wins[best]) best = i;
  }
  return {best, static_cast<double>(wins[best]) / static_cast<double>(dataset.rows.size())};
}

std::vector<SubsetScores> compare_systems(const RouterModel& model, const RewardDataset& dataset,
                                          const OracleMap& oracle) {
  const auto& registry = dataset.registry;
  std::map<std::string, std::map<std::string, double, std::less<>>> sums;
  std::map<std::string, std::size_t> counts;
  std::vector<std::string> order;
  for (const auto& row : dataset.rows) {
    const std::string subset = row.query.subset.value_or("all");
    if (!counts.contains(subset)) order.push_back(subset);
    ++counts[subset];
    auto it = oracle.find(row.query.id);
    if (it == oracle.end()) throw DataError("no oracle entry for query '" + row.query.id + "'");
    const RewardVector& truth = it->second;
    auto& s = sums[subset];
    for (std::size_t i = 0; i < registry.size(); ++i) s[registry[i].model_id] += truth.values[i];
    s["router"] += truth.values[route(model, row.query.text).model_index];
    s["rmr"] += truth.values[argmax(row.rewards.values)];
    s["oracle"] += truth.values[oracle_select(truth)];
  }
  std::vector<SubsetScores> out;
  for (const auto& subset : order) {
    SubsetScores scores{subset, {}};
    for (const auto& [system, total] : sums[subset]) {
      scores.scores[system] = total / static_cast<double>(counts[subset]);
    }
    out.push_back(std::move(scores));
  }
  return out;
}

std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw UsageError("spearman: length mismatch");
  if (x.size() < 2) return std::nullopt;
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

EntropyAnalysis entropy_quality_analysis(const RewardDataset& dataset, const RewardSource& source,
                                         const OracleMap& oracle, double temperature) {
  EntropyAnalysis analysis;
  analysis.points.reserve(dataset.rows.size());
  std::vector<double> entropies, correct;
  for (const auto& row : dataset.rows) {
    const auto outputs = stub_outputs(dataset.registry, row.query);
    const auto sel = rmr_select(dataset.registry, row.query, outputs, source);
    const double h = reward_entropy(normalize_rewards(sel.rewards, temperature));
    const bool ok = sel.model_index == oracle_select(row.query, oracle);
    analysis.points.push_back({row.query.id, h, ok});
    entropies.push_back(h);
    correct.push_back(ok ? 1.0 : 0.0);
  }
  analysis.rank_correlation = spearman(entropies, correct);
  return analysis;
}

bool is_heldout(std::string_view query_id) noexcept { return fnv1a64(query_id) % 100 >= 80; }

AblationTable beta_ablation(const AblationSpec& spec) {
  for (double b : spec.betas) {
    if (!(b >= 0.0 && b <= 1.0)) throw UsageError("beta_ablation: every beta must lie in [0, 1]");
  }
  if (spec.betas.empty()) throw UsageError("beta_ablation: no betas given");
  const auto bench = make_synthetic_benchmark(spec.benchmark);
  RewardDataset train_set{bench.dataset.registry, {}};
  RewardDataset heldout{bench.dataset.registry, {}};
  for (const auto& row : bench.dataset.rows) {
    (is_heldout(row.query.id) ? heldout : train_set).rows.push_back(row);
  }
  if (train_set.rows.empty() || heldout.rows.empty()) {
    throw UsageError("beta_ablation: benchmark too small for an 80/20 split");
  }
  const auto table = aggregate_tag_rewards(train_set);
  const auto initial = init_router(train_set.registry, spec.featurizer, spec.train.seed);

  std::vector<std::future<TrainResult>> runs;
  for (double beta : spec.betas) {
    TrainConfig cfg = spec.train;
    cfg.beta = beta;
    runs.push_back(std::async(std::launch::async,
                              [&, cfg] { return train(initial, train_set, table, cfg); }));
  }

  AblationTable out;
  out.train_rows = train_set.rows.size();
  out.heldout_rows = heldout.rows.size();
  std::vector<SubsetScores> per_cluster;
  std::map<std::string, std::size_t> cluster_index;
  std::map<std::string, std::size_t> cluster_sizes;
  for (const auto& row : heldout.rows) {
    const std::string subset = row.query.subset.value_or("all");
    if (!cluster_index.contains(subset)) {
      cluster_index[subset] = per_cluster.size();
      per_cluster.push_back({subset, {}});
    }
    ++cluster_sizes[subset];
  }

  for (std::size_t i = 0; i < runs.size(); ++i) {
    const TrainResult result = runs[i].get();
    const std::string system = "beta=" + std::to_string(spec.betas[i]) + "#" + std::to_string(i);
    std::vector<std::size_t> cluster_hits(per_cluster.size(), 0);
    std::size_t hits = 0;
    for (const auto& row : heldout.rows) {
      if (route(result.model, row.query.text).model_index == oracle_select(row.query, bench.oracle)) {
        ++hits;
        ++cluster_hits[cluster_index[row.query.subset.value_or("all")]];
      }
    }
    for (std::size_t c = 0; c < per_cluster.size(); ++c) {
      per_cluster[c].scores[system] = static_cast<double>(cluster_hits[c]) /
                                      static_cast<double>(cluster_sizes[per_cluster[c].subset]);
    }
    out.rows.push_back({spec.betas[i], static_cast<double>(hits) / static_cast<double>(heldout.rows.size()),
                        0.0, result.report.final_loss});
  }
  for (std::size_t i = 0; i < out.rows.size(); ++i) {
    const std::string system = "beta=" + std::to_string(spec.betas[i]) + "#" + std::to_string(i);
    out.rows[i].mtr = mean_task_rank(per_cluster, system);
  }
  return out;
}

}  // namespace expertroute
