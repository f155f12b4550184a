#include "expertroute/reward_pipeline.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "expertroute/error.hpp"
#include "expertroute/numeric.hpp"
#include "expertroute/text.hpp"

namespace expertroute {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

[[noreturn]] void fail_at(std::string_view source, std::size_t line, const std::string& what) {
  std::ostringstream msg;
  msg << source << ":" << line << ": " << what;
  throw DataError(msg.str());
}

RewardRow parse_record(const json& rec, const ModelRegistry& registry, std::string_view source,
                       std::size_t line) {
  if (!rec.is_object()) fail_at(source, line, "record is not a JSON object");
  RewardRow row;

  auto id = rec.find("id");
  if (id == rec.end() || !id->is_string()) fail_at(source, line, "missing string field \"id\"");
  row.query.id = id->get<std::string>();

  auto query = rec.find("query");
  if (query == rec.end() || !query->is_string()) {
    fail_at(source, line, "missing string field \"query\"");
  }
  row.query.text = query->get<std::string>();
  if (text::trim(row.query.text).empty()) fail_at(source, line, "query text is empty");

  if (auto tags = rec.find("tags"); tags != rec.end() && !tags->is_null()) {
    if (!tags->is_array()) fail_at(source, line, "\"tags\" must be an array of strings");
    for (const auto& t : *tags) {
      if (!t.is_string()) fail_at(source, line, "\"tags\" must be an array of strings");
      row.query.tags.insert(t.get<std::string>());
    }
  }
  if (auto subset = rec.find("subset"); subset != rec.end() && !subset->is_null()) {
    if (!subset->is_string()) fail_at(source, line, "\"subset\" must be a string");
    row.query.subset = subset->get<std::string>();
  }

  auto rewards = rec.find("rewards");
  if (rewards == rec.end() || !rewards->is_object()) {
    fail_at(source, line, "missing object field \"rewards\"");
  }
  row.rewards.values.assign(registry.size(), 0.0);
  std::vector<bool> seen(registry.size(), false);
  for (const auto& [model_id, value] : rewards->items()) {
    auto idx = registry.index_of(model_id);
    if (!idx) fail_at(source, line, "unknown model_id \"" + model_id + "\"");
    if (!value.is_number()) fail_at(source, line, "reward for \"" + model_id + "\" is not a number");
    const double v = value.get<double>();
    if (!std::isfinite(v)) fail_at(source, line, "reward for \"" + model_id + "\" is not finite");
    row.rewards.values[*idx] = v;
    seen[*idx] = true;
  }
  for (std::size_t i = 0; i < registry.size(); ++i) {
    if (!seen[i]) fail_at(source, line, "missing reward for model \"" + registry[i].model_id + "\"");
  }
  return row;
}

std::string join(std::span<const std::string> tokens, std::size_t begin, std::size_t n) {
  std::string out;
  for (std::size_t i = begin; i < begin + n; ++i) {
    if (i != begin) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

}  // namespace

RewardDataset read_dataset(std::istream& in, const ModelRegistry& registry, std::string_view source) {
  if (registry.empty()) throw DataError("registry is empty");
  RewardDataset dataset{registry, {}};
  std::unordered_set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      fail_at(source, line_no, std::string("parse error: ") + e.what());
    }
    RewardRow row = parse_record(rec, registry, source, line_no);
    if (!ids.insert(row.query.id).second) {
      fail_at(source, line_no, "duplicate query id \"" + row.query.id + "\"");
    }
    dataset.rows.push_back(std::move(row));
  }
  if (dataset.rows.empty()) throw DataError(std::string(source) + ": empty dataset");
  return dataset;
}

RewardDataset load_dataset(const std::filesystem::path& path, const ModelRegistry& registry) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset file: " + path.string());
  return read_dataset(in, registry, path.string());
}

void write_dataset(std::ostream& out, const RewardDataset& dataset) {
  for (const auto& row : dataset.rows) {
    ordered_json rec;
    rec["id"] = row.query.id;
    rec["query"] = row.query.text;
    rec["tags"] = row.query.tags;
    if (row.query.subset) rec["subset"] = *row.query.subset;
    ordered_json rewards = ordered_json::object();
    for (std::size_t i = 0; i < dataset.registry.size(); ++i) {
      rewards[dataset.registry[i].model_id] = row.rewards.values.at(i);
    }
    rec["rewards"] = std::move(rewards);
    out << rec.dump() << '\n';
  }
}

void save_dataset(const RewardDataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write dataset file: " + path.string());
  write_dataset(out, dataset);
}

std::vector<std::string> decontamination_tokens(std::string_view text) {
  std::vector<std::string> out;
  for (const auto& raw : text::split_whitespace(text)) {
    auto stripped = text::strip_punctuation(raw);
    if (!stripped.empty()) out.push_back(text::ascii_lower(stripped));
  }
  return out;
}

DecontaminationResult decontaminate(const RewardDataset& dataset,
                                    std::span<const std::string> benchmark_queries, std::size_t n) {
  if (n == 0) throw UsageError("decontaminate: n must be >= 1");
  std::unordered_set<std::string> benchmark_ngrams;
  for (const auto& q : benchmark_queries) {
    const auto tokens = decontamination_tokens(q);
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) benchmark_ngrams.insert(join(tokens, i, n));
  }

  DecontaminationResult result{{dataset.registry, {}}, {}};
  for (const auto& row : dataset.rows) {
    std::optional<std::string> hit;
    if (!benchmark_ngrams.empty()) {
      const auto tokens = decontamination_tokens(row.query.text);
      for (std::size_t i = 0; i + n <= tokens.size() && !hit; ++i) {
        auto gram = join(tokens, i, n);
        if (benchmark_ngrams.contains(gram)) hit = std::move(gram);
      }
    }
    if (hit) {
      result.removed.push_back({row.query.id, std::move(*hit)});
    } else {
      result.dataset.rows.push_back(row);
    }
  }
  return result;
}

RoutingDistribution normalize_rewards(const RewardVector& rewards, double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw UsageError("normalize_rewards: temperature must be a positive finite number");
  }
  return {softmax(rewards.values, temperature)};
}

TagRewardTable aggregate_tag_rewards(const RewardDataset& dataset) {
  if (dataset.rows.empty()) throw DataError("aggregate_tag_rewards: empty dataset");
  const std::size_t k = dataset.registry.size();
  TagRewardTable table;
  table.global_mean.values.assign(k, 0.0);

  auto accumulate = [k](TagStats& stats, const RewardVector& r) {
    if (stats.mean_rewards.values.empty()) stats.mean_rewards.values.assign(k, 0.0);
    for (std::size_t i = 0; i < k; ++i) stats.mean_rewards.values[i] += r.values[i];
    ++stats.count;
  };

  for (const auto& row : dataset.rows) {
    for (std::size_t i = 0; i < k; ++i) table.global_mean.values[i] += row.rewards.values[i];
    if (row.query.tags.empty()) {
      accumulate(table.entries[std::string(kUntaggedTag)], row.rewards);
    } else {
      for (const auto& tag : row.query.tags) accumulate(table.entries[tag], row.rewards);
    }
  }
  // Sums become means.
  for (auto& [tag, stats] : table.entries) {
    for (double& v : stats.mean_rewards.values) v /= static_cast<double>(stats.count);
  }
  for (double& v : table.global_mean.values) v /= static_cast<double>(dataset.rows.size());
  return table;
}

RewardVector tag_prior(const Query& query, const TagRewardTable& table) {
  auto lookup = [&table](std::string_view tag) -> const RewardVector& {
    auto it = table.entries.find(tag);
    return it == table.entries.end() ? table.global_mean : it->second.mean_rewards;
  };
  if (query.tags.empty()) return lookup(kUntaggedTag);
  if (query.tags.size() == 1) return lookup(*query.tags.begin());

  RewardVector prior{std::vector<double>(table.global_mean.size(), 0.0)};
  for (const auto& tag : query.tags) {
    const auto& r = lookup(tag);
    for (std::size_t i = 0; i < prior.size(); ++i) prior.values[i] += r.values[i];
  }
  for (double& v : prior.values) v /= static_cast<double>(query.tags.size());
  return prior;
}

RewardVector enhance_labels(const RewardVector& rewards, const Query& query,
                            const TagRewardTable& table, double beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw UsageError("enhance_labels: beta must lie in [0, 1]");
  const RewardVector prior = tag_prior(query, table);
  if (prior.size() != rewards.size()) {
    throw UsageError("enhance_labels: reward vector length does not match tag table");
  }
  RewardVector out{std::vector<double>(rewards.size())};
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    out.values[i] = beta * rewards.values[i] + (1.0 - beta) * prior.values[i];
  }
  return out;
}

double reward_entropy(const RoutingDistribution& distribution) noexcept {
  double h = 0.0;
  for (double p : distribution.probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h < 0.0 ? 0.0 : h;
}

}  // namespace expertroute
