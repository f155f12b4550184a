#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "expertroute/registry.hpp"

namespace expertroute {

/// Tag under which rows without any tag are aggregated.
inline constexpr std::string_view kUntaggedTag = "__untagged__";

struct Query {
  std::string id;
  std::string text;
  std::set<std::string> tags;
  std::optional<std::string> subset;

  bool operator==(const Query&) const = default;
};

/// One finite reward per registry model, in registry order.
struct RewardVector {
  std::vector<double> values;

  std::size_t size() const noexcept { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
  bool operator==(const RewardVector&) const = default;
};

/// Probability vector over registry models.
struct RoutingDistribution {
  std::vector<double> probs;

  std::size_t size() const noexcept { return probs.size(); }
  double operator[](std::size_t i) const { return probs[i]; }
  bool operator==(const RoutingDistribution&) const = default;
};

struct RewardRow {
  Query query;
  RewardVector rewards;
};

struct RewardDataset {
  ModelRegistry registry;
  std::vector<RewardRow> rows;
};

struct TagStats {
  RewardVector mean_rewards;
  std::size_t count = 0;
};

struct TagRewardTable {
  std::map<std::string, TagStats, std::less<>> entries;
  /// Mean over every row; stands in for tags missing from `entries`.
  RewardVector global_mean;
};

// --- dataset files (one JSON record per line) ---

/// Parses a dataset stream. `source` names the input in error messages.
/// Throws DataError with the 1-based line number on any invalid record.
RewardDataset read_dataset(std::istream& in, const ModelRegistry& registry,
                           std::string_view source = "<stream>");
RewardDataset load_dataset(const std::filesystem::path& path, const ModelRegistry& registry);

void write_dataset(std::ostream& out, const RewardDataset& dataset);
void save_dataset(const RewardDataset& dataset, const std::filesystem::path& path);

// --- decontamination ---

/// Lowercased, whitespace-split, punctuation-stripped tokens. Tokens that are
/// pure punctuation disappear.
std::vector<std::string> decontamination_tokens(std::string_view text);

struct RemovedQuery {
  std::string id;
  /// First n-gram of the query (in token order) that also occurs in a benchmark.
  std::string matched_ngram;
};

struct DecontaminationResult {
  RewardDataset dataset;
  std::vector<RemovedQuery> removed;
};

/// Drops every row sharing at least one token n-gram with any benchmark query.
DecontaminationResult decontaminate(const RewardDataset& dataset,
                                    std::span<const std::string> benchmark_queries,
                                    std::size_t n = 6);

// --- reward shaping ---

/// softmax(r / temperature). Throws UsageError for temperature <= 0.
RoutingDistribution normalize_rewards(const RewardVector& rewards, double temperature = 1.0);

TagRewardTable aggregate_tag_rewards(const RewardDataset& dataset);

/// Tag-wise prior for a query: unweighted mean of the table entries for its
/// tags. Unknown tags contribute the global mean; untagged queries use
/// kUntaggedTag.
RewardVector tag_prior(const Query& query, const TagRewardTable& table);

/// beta * r + (1 - beta) * tag_prior(query). Throws UsageError unless 0 <= beta <= 1.
RewardVector enhance_labels(const RewardVector& rewards, const Query& query,
                            const TagRewardTable& table, double beta);

/// Shannon entropy in nats, with 0 ln 0 = 0.
double reward_entropy(const RoutingDistribution& distribution) noexcept;

}  // namespace expertroute
