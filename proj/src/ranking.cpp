#include "expertroute/ranking.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "expertroute/error.hpp"
#include "expertroute/hash.hpp"
#include "expertroute/numeric.hpp"
#include "expertroute/random.hpp"

namespace expertroute {

std::string stub_response(std::string_view model_id, std::string_view query_text) {
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(fnv1a64(query_text)));
  std::string out(model_id);
  out.push_back(':');
  out += hex;
  return out;
}

std::vector<CandidateOutput> stub_outputs(const ModelRegistry& registry, const Query& query) {
  std::vector<CandidateOutput> out;
  out.reserve(registry.size());
  for (const auto& m : registry.models()) {
    out.push_back({m.model_id, stub_response(m.model_id, query.text), std::nullopt});
  }
  return out;
}

double keyed_normal(std::uint64_t seed, std::string_view query_id, std::size_t model_index) noexcept {
  const std::uint64_t key = mix64(mix64(seed) ^ fnv1a64(query_id)) + model_index;
  const std::uint64_t a = mix64(key * 2 + 1);
  const std::uint64_t b = mix64(key * 2 + 2);
  // u1 in (0, 1], u2 in [0, 1)
  const double u1 = static_cast<double>((a >> 11) + 1) * 0x1.0p-53;
  const double u2 = static_cast<double>(b >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

RewardSource RewardSource::dataset_lookup(const RewardDataset& dataset) {
  auto table = std::make_shared<std::map<std::string, RewardVector, std::less<>>>();
  for (const auto& row : dataset.rows) table->emplace(row.query.id, row.rewards);
  return RewardSource(Lookup{std::move(table), dataset.registry.size()});
}

RewardSource RewardSource::synthetic_planted(std::size_t num_models,
                                             std::map<std::string, std::size_t, std::less<>> expertise,
                                             double margin) {
  for (const auto& [tag, model] : expertise) {
    if (model >= num_models) throw UsageError("planted expert index out of range for tag '" + tag + "'");
  }
  return RewardSource(Planted{std::move(expertise), margin, num_models});
}

RewardSource RewardSource::noisy(RewardSource inner, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw UsageError("noise sigma must be >= 0");
  return RewardSource(Noisy{std::make_shared<const RewardSource>(std::move(inner)), sigma, seed});
}

RewardSource::Kind RewardSource::kind() const noexcept {
  switch (impl_.index()) {
    case 0: return Kind::kDatasetLookup;
    case 1: return Kind::kSyntheticPlanted;
    default: return Kind::kNoisyWrapper;
  }
}

std::size_t RewardSource::num_models() const noexcept {
  return std::visit(
      [](const auto& s) -> std::size_t {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Noisy>) {
          return s.inner->num_models();
        } else {
          return s.num_models;
        }
      },
      impl_);
}

double RewardSource::score(const Query& query, std::size_t model_index) const {
  if (model_index >= num_models()) throw UsageError("model index out of range");
  if (const auto* lookup = std::get_if<Lookup>(&impl_)) {
    auto it = lookup->rewards->find(query.id);
    if (it == lookup->rewards->end()) throw DataError("no reward entry for query '" + query.id + "'");
    return it->second.values[model_index];
  }
  if (const auto* planted = std::get_if<Planted>(&impl_)) {
    for (const auto& tag : query.tags) {
      auto it = planted->expertise.find(tag);
      if (it != planted->expertise.end() && it->second == model_index) return planted->margin;
    }
    return 0.0;
  }
  const auto& noisy = std::get<Noisy>(impl_);
  const double base = noisy.inner->score(query, model_index);
  if (noisy.sigma == 0.0) return base;
  return base + noisy.sigma * keyed_normal(noisy.seed, query.id, model_index);
}

RewardVector RewardSource::score_all(const Query& query) const {
  RewardVector out{std::vector<double>(num_models())};
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] = score(query, i);
  return out;
}

RmrSelection rmr_select(const ModelRegistry& registry, const Query& query,
                        std::span<const CandidateOutput> outputs, const RewardSource& source) {
  if (source.num_models() != registry.size()) {
    throw UsageError("reward source and registry disagree on the number of models");
  }
  std::vector<bool> covered(registry.size(), false);
  for (const auto& out : outputs) {
    auto idx = registry.index_of(out.model_id);
    if (!idx) throw DataError("candidate output from unregistered model '" + out.model_id + "'");
    if (covered[*idx]) throw DataError("duplicate candidate output for model '" + out.model_id + "'");
    covered[*idx] = true;
  }
  for (std::size_t i = 0; i < registry.size(); ++i) {
    if (!covered[i]) throw DataError("missing candidate output for model '" + registry[i].model_id + "'");
  }

  RmrSelection sel;
  sel.rewards.values.assign(registry.size(), 0.0);
  for (const auto& out : outputs) {
    const std::size_t idx = *registry.index_of(out.model_id);
    sel.rewards.values[idx] = source.score(query, idx);
  }
  sel.model_index = argmax(sel.rewards.values);
  sel.model_id = registry[sel.model_index].model_id;
  return sel;
}

std::size_t oracle_select(const RewardVector& oracle_scores) noexcept {
  return argmax(oracle_scores.values);
}

std::size_t oracle_select(const Query& query, const OracleMap& oracle) {
  auto it = oracle.find(query.id);
  if (it == oracle.end()) throw DataError("no oracle entry for query '" + query.id + "'");
  return oracle_select(it->second);
}

void SyntheticSpec::validate() const {
  if (num_models < 2) throw UsageError("synthetic spec: num_models must be >= 2");
  if (clusters.empty()) throw UsageError("synthetic spec: at least one cluster is required");
  std::set<std::string> tags;
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    const auto& c = clusters[i];
    if (c.tag.empty()) throw UsageError("synthetic spec: cluster tag is empty");
    if (!tags.insert(c.tag).second) throw UsageError("synthetic spec: duplicate cluster '" + c.tag + "'");
    if (c.vocabulary.empty()) throw UsageError("synthetic spec: empty vocabulary for cluster '" + c.tag + "'");
    if (!c.expert && num_models != clusters.size()) {
      throw UsageError("synthetic spec: cluster '" + c.tag +
                       "' has no expert and num_models differs from the cluster count");
    }
    if (c.expert && *c.expert >= num_models) {
      throw UsageError("synthetic spec: expert for cluster '" + c.tag + "' is out of range");
    }
  }
  if (!(expertise_margin > 0.0) || !std::isfinite(expertise_margin)) {
    throw UsageError("synthetic spec: expertise_margin must be positive");
  }
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw UsageError("synthetic spec: noise_sigma must be >= 0");
  }
  if (queries_per_cluster == 0) throw UsageError("synthetic spec: queries_per_cluster must be positive");
  if (min_words == 0 || min_words > max_words) throw UsageError("synthetic spec: need 1 <= min_words <= max_words");
  if (!(shared_word_rate >= 0.0 && shared_word_rate < 1.0)) {
    throw UsageError("synthetic spec: shared_word_rate must lie in [0, 1)");
  }
  if (shared_word_rate > 0.0 && shared_vocabulary.empty()) {
    throw UsageError("synthetic spec: shared_word_rate > 0 needs a shared_vocabulary");
  }
}

std::map<std::string, std::size_t, std::less<>> SyntheticSpec::expertise() const {
  std::map<std::string, std::size_t, std::less<>> out;
  for (std::size_t i = 0; i < clusters.size(); ++i) out[clusters[i].tag] = clusters[i].expert.value_or(i);
  return out;
}

SyntheticSpec SyntheticSpec::from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw DataError("synthetic spec must be a JSON object");
  SyntheticSpec spec;
  try {
    spec.num_models = doc.at("num_models").get<std::size_t>();
    const auto& clusters = doc.at("clusters");
    if (clusters.is_object()) {
      // tag -> vocabulary; experts follow sorted tag order.
      for (const auto& [tag, vocab] : clusters.items()) {
        spec.clusters.push_back({tag, vocab.get<std::vector<std::string>>(), std::nullopt});
      }
    } else if (clusters.is_array()) {
      for (const auto& c : clusters) {
        SyntheticCluster cluster{c.at("tag").get<std::string>(),
                                 c.at("vocabulary").get<std::vector<std::string>>(), std::nullopt};
        if (c.contains("expert")) cluster.expert = c.at("expert").get<std::size_t>();
        spec.clusters.push_back(std::move(cluster));
      }
    } else {
      throw DataError("synthetic spec: \"clusters\" must be an object or an array");
    }
    spec.queries_per_cluster = doc.value("queries_per_cluster", spec.queries_per_cluster);
    spec.expertise_margin = doc.value("expertise_margin", spec.expertise_margin);
    spec.noise_sigma = doc.value("noise_sigma", spec.noise_sigma);
    spec.seed = doc.value("seed", spec.seed);
    spec.shared_vocabulary = doc.value("shared_vocabulary", spec.shared_vocabulary);
    spec.shared_word_rate = doc.value("shared_word_rate", spec.shared_word_rate);
    spec.min_words = doc.value("min_words", spec.min_words);
    spec.max_words = doc.value("max_words", spec.max_words);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("synthetic spec: ") + e.what());
  }
  return spec;
}

nlohmann::ordered_json SyntheticSpec::to_json() const {
  nlohmann::ordered_json doc;
  doc["num_models"] = num_models;
  doc["clusters"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    nlohmann::ordered_json c;
    c["tag"] = clusters[i].tag;
    c["vocabulary"] = clusters[i].vocabulary;
    c["expert"] = clusters[i].expert.value_or(i);
    doc["clusters"].push_back(std::move(c));
  }
  doc["queries_per_cluster"] = queries_per_cluster;
  doc["expertise_margin"] = expertise_margin;
  doc["noise_sigma"] = noise_sigma;
  doc["seed"] = seed;
  doc["shared_vocabulary"] = shared_vocabulary;
  doc["shared_word_rate"] = shared_word_rate;
  doc["min_words"] = min_words;
  doc["max_words"] = max_words;
  return doc;
}

SyntheticSpec load_synthetic_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open synthetic spec: " + path.string());
  try {
    return SyntheticSpec::from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("synthetic spec " + path.string() + ": " + e.what());
  }
}

ModelRegistry synthetic_registry(std::size_t num_models) {
  std::vector<ModelInfo> models;
  for (std::size_t i = 0; i < num_models; ++i) {
    const std::string id = "m" + std::to_string(i);
    models.push_back({id, std::nullopt, id});
  }
  return ModelRegistry(std::move(models));
}

SyntheticBenchmark make_synthetic_benchmark(const SyntheticSpec& spec) {
  spec.validate();
  const ModelRegistry registry = synthetic_registry(spec.num_models);
  const auto truth = RewardSource::synthetic_planted(spec.num_models, spec.expertise(), spec.expertise_margin);
  const auto observed = RewardSource::noisy(truth, spec.noise_sigma, mix64(spec.seed ^ 0x6E6F697365ULL));

  Rng rng(spec.seed);
  SyntheticBenchmark bench{{registry, {}}, {}};
  bench.dataset.rows.reserve(spec.clusters.size() * spec.queries_per_cluster);
  for (const auto& cluster : spec.clusters) {
    for (std::size_t q = 0; q < spec.queries_per_cluster; ++q) {
      const std::size_t length = spec.min_words + rng.below(spec.max_words - spec.min_words + 1);
      std::string text;
      for (std::size_t w = 0; w < length; ++w) {
        const bool shared = spec.shared_word_rate > 0.0 && rng.uniform() < spec.shared_word_rate;
        const auto& vocab = shared ? spec.shared_vocabulary : cluster.vocabulary;
        if (w != 0) text.push_back(' ');
        text += vocab[rng.below(vocab.size())];
      }
      char suffix[16];
      std::snprintf(suffix, sizeof suffix, "-%05zu", q);
      Query query{cluster.tag + suffix, std::move(text), {cluster.tag}, cluster.tag};
      RewardVector observed_rewards = observed.score_all(query);
      bench.oracle.emplace(query.id, truth.score_all(query));
      bench.dataset.rows.push_back({std::move(query), std::move(observed_rewards)});
    }
  }
  return bench;
}

OracleMap oracle_from_dataset(const RewardDataset& dataset) {
  OracleMap oracle;
  for (const auto& row : dataset.rows) oracle.emplace(row.query.id, row.rewards);
  return oracle;
}

void save_oracle(const OracleMap& oracle, const RewardDataset& dataset, const std::filesystem::path& path) {
  RewardDataset truth{dataset.registry, {}};
  truth.rows.reserve(dataset.rows.size());
  for (const auto& row : dataset.rows) {
    auto it = oracle.find(row.query.id);
    if (it == oracle.end()) throw DataError("no oracle entry for query '" + row.query.id + "'");
    truth.rows.push_back({row.query, it->second});
  }
  save_dataset(truth, path);
}

OracleMap load_oracle(const std::filesystem::path& path, const ModelRegistry& registry) {
  return oracle_from_dataset(load_dataset(path, registry));
}

}  // namespace expertroute
