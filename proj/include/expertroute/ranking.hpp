#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "expertroute/registry.hpp"
#include "expertroute/reward_pipeline.hpp"

namespace expertroute {

/// Ground-truth preference scores per query id.
using OracleMap = std::map<std::string, RewardVector, std::less<>>;

struct CandidateOutput {
  std::string model_id;
  std::string response_text;
  std::optional<double> score;
};

/// Placeholder generation "<model_id>:<16 hex digits of FNV-1a(query)>".
std::string stub_response(std::string_view model_id, std::string_view query_text);

/// One stub output per registry model, in registry order.
std::vector<CandidateOutput> stub_outputs(const ModelRegistry& registry, const Query& query);

/// Scores (query, model) pairs. All kinds are pure and deterministic.
class RewardSource {
 public:
  enum class Kind { kDatasetLookup, kSyntheticPlanted, kNoisyWrapper };

  /// Looks rewards up by query id.
  static RewardSource dataset_lookup(const RewardDataset& dataset);
  /// `margin` for the model planted as expert of any of the query's tags, 0 otherwise.
  static RewardSource synthetic_planted(std::size_t num_models,
                                        std::map<std::string, std::size_t, std::less<>> expertise,
                                        double margin);
  /// inner + sigma * N(0,1); the draw depends only on (seed, query id, model index).
  static RewardSource noisy(RewardSource inner, double sigma, std::uint64_t seed);

  Kind kind() const noexcept;
  std::size_t num_models() const noexcept;

  /// Throws DataError when the source has no entry for the query.
  double score(const Query& query, std::size_t model_index) const;
  RewardVector score_all(const Query& query) const;

 private:
  struct Lookup {
    std::shared_ptr<const std::map<std::string, RewardVector, std::less<>>> rewards;
    std::size_t num_models;
  };
  struct Planted {
    std::map<std::string, std::size_t, std::less<>> expertise;
    double margin;
    std::size_t num_models;
  };
  struct Noisy {
    std::shared_ptr<const RewardSource> inner;
    double sigma;
    std::uint64_t seed;
  };

  explicit RewardSource(std::variant<Lookup, Planted, Noisy> impl) : impl_(std::move(impl)) {}
  std::variant<Lookup, Planted, Noisy> impl_;
};

/// Standard normal draw keyed by (seed, query id, model index).
double keyed_normal(std::uint64_t seed, std::string_view query_id, std::size_t model_index) noexcept;

struct RmrSelection {
  std::size_t model_index = 0;
  std::string model_id;
  RewardVector rewards;  // registry order
};

/// Reward-model ranking: score every candidate output and keep the best.
/// Outputs must cover each registry model exactly once (any order).
RmrSelection rmr_select(const ModelRegistry& registry, const Query& query,
                        std::span<const CandidateOutput> outputs, const RewardSource& source);

/// Argmax of ground-truth scores, lowest index on ties.
std::size_t oracle_select(const RewardVector& oracle_scores) noexcept;
/// Throws DataError when the oracle has no entry for the query.
std::size_t oracle_select(const Query& query, const OracleMap& oracle);

struct SyntheticCluster {
  std::string tag;
  std::vector<std::string> vocabulary;
  /// Planted expert (registry index); defaults to the cluster's position.
  std::optional<std::size_t> expert;
};

struct SyntheticSpec {
  std::size_t num_models = 0;
  std::vector<SyntheticCluster> clusters;
  std::size_t queries_per_cluster = 100;
  double expertise_margin = 1.0;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  /// Words every cluster draws from with probability shared_word_rate.
  std::vector<std::string> shared_vocabulary;
  double shared_word_rate = 0.0;
  std::size_t min_words = 6;
  std::size_t max_words = 12;

  /// Throws UsageError on an unusable spec.
  void validate() const;
  std::map<std::string, std::size_t, std::less<>> expertise() const;

  static SyntheticSpec from_json(const nlohmann::json& doc);
  nlohmann::ordered_json to_json() const;
};

SyntheticSpec load_synthetic_spec(const std::filesystem::path& path);

/// Registry "m0", "m1", ... for synthetic experiments.
ModelRegistry synthetic_registry(std::size_t num_models);

struct SyntheticBenchmark {
  RewardDataset dataset;  // observed (noisy) rewards
  OracleMap oracle;       // true rewards
};

/// Queries sample cluster words (and shared words); the cluster's expert gets
/// a true reward `margin` above everyone else (0); observed rewards add
/// N(0, noise_sigma^2). Deterministic in spec.seed.
SyntheticBenchmark make_synthetic_benchmark(const SyntheticSpec& spec);

/// Writes the oracle in the dataset line format, with true rewards.
void save_oracle(const OracleMap& oracle, const RewardDataset& dataset, const std::filesystem::path& path);
OracleMap load_oracle(const std::filesystem::path& path, const ModelRegistry& registry);
OracleMap oracle_from_dataset(const RewardDataset& dataset);

}  // namespace expertroute
