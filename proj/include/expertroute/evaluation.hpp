#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "expertroute/featurizer.hpp"
#include "expertroute/ranking.hpp"
#include "expertroute/router.hpp"

namespace expertroute {

/// Scores of every compared system on one benchmark subset; higher is better.
struct SubsetScores {
  std::string subset;
  std::map<std::string, double, std::less<>> scores;
};

/// Competition rank: 1 + number of systems scoring strictly higher.
std::size_t subset_rank(const SubsetScores& subset, std::string_view system);

/// Mean of subset_rank over all subsets. Throws DataError when the system is
/// missing from a subset and UsageError for an empty subset list.
double mean_task_rank(std::span<const SubsetScores> subsets, std::string_view system);

/// Fraction of subsets where the system ties or holds the top score.
double uplift_rate(std::span<const SubsetScores> subsets, std::string_view system);

struct SystemSummary {
  std::string system;
  double mtr = 0.0;
  double uplift = 0.0;
};

struct EvalReport {
  std::vector<SubsetScores> subsets;
  /// subset -> system -> rank
  std::map<std::string, std::map<std::string, std::size_t>> ranks;
  /// One entry per system, in first-seen order.
  std::vector<SystemSummary> systems;
};

EvalReport build_report(std::vector<SubsetScores> subsets);

/// Fraction of queries where the router picks the oracle's argmax.
double routing_accuracy(const RouterModel& model, const RewardDataset& dataset, const OracleMap& oracle);

struct SingleModelBaseline {
  std::size_t model_index = 0;
  double accuracy = 0.0;
};

/// The single model that is oracle-best most often (lowest index on ties).
SingleModelBaseline best_single_model(const RewardDataset& dataset, const OracleMap& oracle);

/// Per-subset mean true reward of each system's chosen model. Systems: every
/// registry model alone, "router", "rmr" (argmax of observed rewards) and
/// "oracle". Rows without a subset go to "all".
std::vector<SubsetScores> compare_systems(const RouterModel& model, const RewardDataset& dataset,
                                          const OracleMap& oracle);

struct EntropyPoint {
  std::string query_id;
  double entropy = 0.0;
  bool rmr_correct = false;
};

struct EntropyAnalysis {
  std::vector<EntropyPoint> points;
  /// Spearman correlation of entropy vs correctness; empty when either side
  /// has no variance.
  std::optional<double> rank_correlation;
};

/// Spearman rank correlation with average ranks for ties. Empty on zero variance.
std::optional<double> spearman(std::span<const double> x, std::span<const double> y);

EntropyAnalysis entropy_quality_analysis(const RewardDataset& dataset, const RewardSource& source,
                                         const OracleMap& oracle, double temperature = 1.0);

/// Deterministic 80/20 split by FNV-1a of the query id.
bool is_heldout(std::string_view query_id) noexcept;

struct AblationSpec {
  SyntheticSpec benchmark;
  TrainConfig train;  // beta is overridden per row
  FeaturizerConfig featurizer;
  std::vector<double> betas{0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0};
};

struct AblationRow {
  double beta = 0.0;
  double accuracy = 0.0;  // held-out routing accuracy
  double mtr = 0.0;       // rank among the betas, per cluster subset
  double final_loss = 0.0;
};

struct AblationTable {
  std::vector<AblationRow> rows;
  std::size_t train_rows = 0;
  std::size_t heldout_rows = 0;
};

/// Trains one router per beta on the same benchmark and initialization and
/// scores each on the held-out split.
AblationTable beta_ablation(const AblationSpec& spec);

}  // namespace expertroute
