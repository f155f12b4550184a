// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"

#include "expertroute/checkpoint.hpp"
#include "expertroute/evaluation.hpp"
#include "expertroute/gateway.hpp"
#include "expertroute/numeric.hpp"
#include "expertroute/ranking.hpp"
#include "expertroute/reward_pipeline.hpp"
#include "expertroute/router.hpp"

namespace er = expertroute;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double limit_seconds;  // 0 = no runtime limit
  std::function<Outcome()> run;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(precision);
  s << v;
  return s.str();
}

std::string sci(double v) {
  std::ostringstream s;
  s.setf(std::ios::scientific);
  s.precision(2);
  s << v;
  return s.str();
}

er::SyntheticSpec bundled_spec() { return er::load_synthetic_spec(fs::path(EXPERTROUTE_DATA_DIR) / "synth.json"); }

struct Split {
  er::RewardDataset train, heldout;
};

Split split(const er::RewardDataset& ds) {
  Split s{{ds.registry, {}}, {ds.registry, {}}};
  for (const auto& row : ds.rows) (er::is_heldout(row.query.id) ? s.heldout : s.train).rows.push_back(row);
  return s;
}

er::TrainResult train_default(const er::RewardDataset& ds, std::uint64_t seed = 0) {
  er::TrainConfig cfg;
  cfg.seed = seed;
  return er::train(er::init_router(ds.registry, er::FeaturizerConfig{}, seed), ds, er::aggregate_tag_rewards(ds), cfg);
}

std::string dataset_bytes(const er::RewardDataset& ds) {
  std::ostringstream out;
  er::write_dataset(out, ds);
  return out.str();
}

er::RoutingDistribution random_distribution(std::mt19937_64& gen, std::size_t k, double scale) {
  std::normal_distribution<double> nd(0.0, scale);
  std::vector<double> r(k);
  for (auto& v : r) v = nd(gen);
  return {er::softmax(r)};
}

// ---------------------------------------------------------------- 1

Outcome numeric_core() {
  std::mt19937_64 gen(2023);
  std::normal_distribution<double> nd(0.0, 4.0);
  double worst_shift = 0, worst_kl = 0, worst_self = 0, worst_grad = 0;
  bool entropy_ok = true;

  for (int t = 0; t < 1000; ++t) {
    const std::size_t k = 2 + gen() % 7;
    std::vector<double> r(k);
    for (auto& v : r) v = nd(gen);
    const double c = nd(gen) * 250;
    std::vector<double> shifted = r;
    for (auto& v : shifted) v += c;
    const auto p = er::softmax(r);
    const auto q = er::softmax(shifted);
    for (std::size_t i = 0; i < k; ++i) worst_shift = std::max(worst_shift, std::abs(p[i] - q[i]));

    const auto a = random_distribution(gen, k, 2.0);
    const auto b = random_distribution(gen, k, 2.0);
    worst_kl = std::min(worst_kl, er::kl_divergence(a, b));
    worst_self = std::max(worst_self, std::abs(er::kl_divergence(a, a)));

    const double h = er::reward_entropy(a);
    const double cap = std::log(static_cast<double>(k));
    entropy_ok = entropy_ok && h >= 0.0 && h <= cap + 1e-12;
    std::vector<double> onehot(k, 0.0);
    onehot[gen() % k] = 1.0;
    entropy_ok = entropy_ok && er::reward_entropy({onehot}) == 0.0 &&
                 std::abs(er::reward_entropy({std::vector<double>(k, 1.0 / k)}) - cap) < 1e-12;
  }

  // Finite differences on K=3, D=10 instances, both divergence directions.
  std::vector<std::string> ids{"a", "b", "c"};
  std::vector<er::ModelInfo> models;
  for (const auto& id : ids) models.push_back({id, std::nullopt, ""});
  const er::ModelRegistry reg(models);
  er::FeaturizerConfig fc;
  fc.dimension = 10;
  const double step = 1e-5;
  for (auto dir : {er::KlDirection::kTargetToPrediction, er::KlDirection::kPredictionToTarget}) {
    for (int inst = 0; inst < 10; ++inst) {
      auto m = er::init_router(reg, fc, inst);
      std::normal_distribution<double> w(0.0, 0.5);
      for (auto& x : m.weights) x = w(gen);
      for (auto& x : m.bias) x = w(gen);
      std::vector<er::FeatureVector> feats;
      std::vector<er::RoutingDistribution> targets;
      std::uniform_real_distribution<double> u(0.05, 1.0);
      for (int r = 0; r < 8; ++r) {
        er::FeatureVector f;
        f.dimension = 10;
        for (std::uint32_t i = 0; i < 10; ++i)
          if (gen() % 3) {
            f.indices.push_back(i);
            f.values.push_back(u(gen));
          }
        feats.push_back(f);
        targets.push_back(random_distribution(gen, 3, 1.5));
      }
      const double l2 = 1e-3;
      const auto g = er::objective_gradient(m, feats, targets, l2, dir);
      auto check = [&](double& param, double analytic) {
        const double saved = param;
        param = saved + step;
        const double up = er::objective(m, feats, targets, l2, dir);
        param = saved - step;
        const double down = er::objective(m, feats, targets, l2, dir);
        param = saved;
        const double numeric = (up - down) / (2 * step);
        const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
        worst_grad = std::max(worst_grad, rel);
      };
      for (std::size_t i = 0; i < m.weights.size(); ++i) check(m.weights[i], g.weights[i]);
      for (std::size_t i = 0; i < m.bias.size(); ++i) check(m.bias[i], g.bias[i]);
    }
  }
  const bool pass = worst_shift <= 1e-9 && worst_kl >= 0.0 && worst_self == 0.0 && entropy_ok && worst_grad < 1e-4;
  return {pass, "max shift diff " + sci(worst_shift) + ", min KL " + sci(worst_kl) +
                    ", max |KL(p,p)| " + sci(worst_self) + ", entropy bounds " +
                    (entropy_ok ? "ok" : "violated") + ", max grad rel err " + sci(worst_grad)};
}

// ---------------------------------------------------------------- 2

Outcome oracle_upper_bound() {
  std::vector<std::pair<double, std::uint64_t>> configs{{0.0, 1}, {0.25, 7}, {1.0, 3}, {4.0, 11}};
  double worst_mtr = 1.0, worst_uplift = 1.0;
  for (const auto& [sigma, seed] : configs) {
    auto spec = bundled_spec();
    spec.noise_sigma = sigma;
    spec.seed = seed;
    spec.queries_per_cluster = 50;
    const auto bench = er::make_synthetic_benchmark(spec);
    er::FeaturizerConfig fc;
    fc.dimension = 1024;
    const auto m = er::init_router(bench.dataset.registry, fc, seed);
    const auto subsets = er::compare_systems(m, bench.dataset, bench.oracle);
    const double mtr = er::mean_task_rank(subsets, "oracle");
    const double up = er::uplift_rate(subsets, "oracle");
    if (mtr != 1.0) worst_mtr = mtr;
    if (up != 1.0) worst_uplift = up;
  }
  return {worst_mtr == 1.0 && worst_uplift == 1.0,
          "oracle MTR " + fmt(worst_mtr) + ", uplift " + fmt(worst_uplift) + " over " +
              std::to_string(configs.size()) + " benchmarks"};
}

// ---------------------------------------------------------------- 3

Outcome expertise_recovery() {
  const auto spec = bundled_spec();
  const auto bench = er::make_synthetic_benchmark(spec);
  const auto parts = split(bench.dataset);
  const auto result = train_default(parts.train);
  const double acc = er::routing_accuracy(result.model, parts.heldout, bench.oracle);
  const auto single = er::best_single_model(parts.heldout, bench.oracle);
  const bool shape = spec.num_models == 6 && spec.clusters.size() == 6 && spec.queries_per_cluster == 200 &&
                     spec.expertise_margin == 1.0 && spec.noise_sigma == 0.25;
  return {shape && acc >= 0.90 && acc > single.accuracy,
          "held-out accuracy " + fmt(acc) + " (need >= 0.90), best single model " + fmt(single.accuracy) + " on " +
              std::to_string(parts.heldout.rows.size()) + " rows"};
}

// ---------------------------------------------------------------- 4

er::AblationSpec ablation_spec() {
  er::AblationSpec spec;
  spec.benchmark = bundled_spec();
  spec.benchmark.noise_sigma = 2.0 * spec.benchmark.expertise_margin;
  return spec;  // default training config and beta grid
}

std::string ablation_text(const er::AblationTable& t) {
  std::ostringstream out;
  for (const auto& r : t.rows)
    out << "      beta " << fmt(r.beta, 1) << "  accuracy " << fmt(r.accuracy) << "  MTR " << fmt(r.mtr, 2)
        << "  loss " << fmt(r.final_loss) << "\n";
  return out.str();
}

Outcome beta_ablation_trend() {
  const auto spec = ablation_spec();
  const auto table = er::beta_ablation(spec);
  std::map<double, double> acc;
  for (const auto& r : table.rows) acc[r.beta] = r.accuracy;
  const double a0 = acc.at(0.0), a1 = acc.at(1.0);
  const double mid = std::max({acc.at(0.1), acc.at(0.3), acc.at(0.5)});
  const bool first = a0 > a1;
  const bool second = mid >= std::max(a0, a1);
  std::cout << ablation_text(table);
  return {first && second, "sigma " + fmt(spec.benchmark.noise_sigma, 2) + ": acc(0)=" + fmt(a0) +
                               " vs acc(1)=" + fmt(a1) + (first ? " ok" : " FAILS") + "; max acc over {0.1,0.3,0.5}=" +
                               fmt(mid) + " vs max endpoint " + fmt(std::max(a0, a1)) + (second ? " ok" : " FAILS")};
}

// ---------------------------------------------------------------- 5

Outcome entropy_uncertainty() {
  auto spec = bundled_spec();
  spec.noise_sigma = spec.expertise_margin;
  spec.queries_per_cluster = 400;
  const auto bench = er::make_synthetic_benchmark(spec);
  const auto res =
      er::entropy_quality_analysis(bench.dataset, er::RewardSource::dataset_lookup(bench.dataset), bench.oracle);
  const bool pass = bench.dataset.rows.size() >= 2000 && res.rank_correlation && *res.rank_correlation < 0.0;
  return {pass, "Spearman(entropy, RMR correct) = " +
                    (res.rank_correlation ? fmt(*res.rank_correlation) : std::string("undefined")) + " over " +
                    std::to_string(res.points.size()) + " rows"};
}

// ---------------------------------------------------------------- 6

Outcome decontamination_exactness() {
  std::mt19937_64 gen(606);
  std::vector<std::string> vocab;
  for (int i = 0; i < 40; ++i) vocab.push_back("w" + std::to_string(i));
  auto stream = [&](std::size_t len) {
    std::vector<std::string> t;
    for (std::size_t i = 0; i < len; ++i) t.push_back(vocab[gen() % vocab.size()]);
    return t;
  };
  auto join = [](const std::vector<std::string>& t) {
    std::string s;
    for (std::size_t i = 0; i < t.size(); ++i) s += (i ? " " : "") + t[i];
    return s;
  };
  const std::size_t n = 6;
  std::vector<std::vector<std::string>> bench_tokens;
  std::vector<std::string> bench;
  for (int b = 0; b < 40; ++b) {
    bench_tokens.push_back(stream(8 + gen() % 20));
    bench.push_back(join(bench_tokens.back()));
  }
  std::set<std::vector<std::string>> bench_grams;
  for (const auto& t : bench_tokens)
    for (std::size_t i = 0; i + n <= t.size(); ++i) bench_grams.insert({t.begin() + i, t.begin() + i + n});

  er::RewardDataset ds{er::synthetic_registry(2), {}};
  std::set<std::string> truth;
  for (int q = 0; q < 500; ++q) {
    auto t = stream(3 + gen() % 25);
    if (q % 3 == 0) {  // plant an overlap of random length (sometimes shorter than n)
      const auto& src = bench_tokens[gen() % bench_tokens.size()];
      const std::size_t len = std::min<std::size_t>(src.size(), 4 + gen() % 5);
      const std::size_t from = gen() % (src.size() - len + 1);
      const std::size_t at = gen() % (t.size() + 1);
      t.insert(t.begin() + at, src.begin() + from, src.begin() + from + len);
    }
    bool hit = false;
    for (std::size_t i = 0; i + n <= t.size() && !hit; ++i)
      hit = bench_grams.count({t.begin() + i, t.begin() + i + n}) > 0;
    const std::string id = "q" + std::to_string(q);
    if (hit) truth.insert(id);
    ds.rows.push_back({er::Query{id, join(t), {}, std::nullopt}, er::RewardVector{{0, 0}}});
  }
  const auto res = er::decontaminate(ds, bench, n);
  std::set<std::string> removed;
  for (const auto& r : res.removed) removed.insert(r.id);
  std::size_t tp = 0;
  for (const auto& id : removed) tp += truth.count(id);
  const double precision = removed.empty() ? 1.0 : static_cast<double>(tp) / removed.size();
  const double recall = truth.empty() ? 1.0 : static_cast<double>(tp) / truth.size();
  return {precision == 1.0 && recall == 1.0 && !truth.empty(),
          "precision " + fmt(precision) + ", recall " + fmt(recall) + " (" + std::to_string(truth.size()) +
              " contaminated of 500)"};
}

// ---------------------------------------------------------------- 7

Outcome metric_oracle() {
  std::mt19937_64 gen(707);
  std::size_t mismatches = 0, tables_with_ties = 0, checks = 0;
  for (int t = 0; t < 200; ++t) {
    const std::size_t systems = 1 + gen() % 8;
    const std::size_t subsets = 1 + gen() % 26;
    std::vector<er::SubsetScores> table;
    bool ties = false;
    for (std::size_t s = 0; s < subsets; ++s) {
      er::SubsetScores sub{"s" + std::to_string(s), {}};
      const bool coarse = t % 2 == 0;
      std::set<double> seen;
      for (std::size_t k = 0; k < systems; ++k) {
        const double v = coarse ? static_cast<double>(gen() % 3) : std::ldexp(static_cast<double>(gen() % 100000), -7);
        ties = ties || !seen.insert(v).second;
        sub.scores["sys" + std::to_string(k)] = v;
      }
      table.push_back(std::move(sub));
    }
    tables_with_ties += ties;
    for (std::size_t k = 0; k < systems; ++k) {
      const std::string sys = "sys" + std::to_string(k);
      // Sort-based oracle: position of the first equal score in descending order.
      double rank_sum = 0;
      std::size_t tops = 0;
      for (const auto& sub : table) {
        std::vector<double> scores;
        for (const auto& [name, v] : sub.scores) scores.push_back(v);
        std::sort(scores.begin(), scores.end(), std::greater<>());
        const double mine = sub.scores.at(sys);
        const std::size_t rank = static_cast<std::size_t>(std::find(scores.begin(), scores.end(), mine) - scores.begin()) + 1;
        rank_sum += static_cast<double>(rank);
        tops += mine == scores.front();
      }
      ++checks;
      mismatches += er::mean_task_rank(table, sys) != rank_sum / subsets;
      mismatches += er::uplift_rate(table, sys) != static_cast<double>(tops) / subsets;
    }
  }
  return {mismatches == 0 && tables_with_ties > 0,
          std::to_string(mismatches) + " mismatches over " + std::to_string(checks) + " (table, system) pairs; " +
              std::to_string(tables_with_ties) + " of 200 tables contain ties"};
}

// ---------------------------------------------------------------- 8

Outcome gateway_equivalence() {
  const auto bench = er::make_synthetic_benchmark(bundled_spec());
  const auto model = train_default(split(bench.dataset).train).model;
  const fs::path dir = fs::temp_directory_path() / ("expertroute-acceptance-" + std::to_string(::getpid()));
  fs::create_directories(dir);
  er::save_checkpoint(model, dir / "router.ck");

  std::vector<std::unique_ptr<er::StubBackend>> stubs;
  er::GatewayConfig cfg;
  cfg.port = 0;
  cfg.checkpoint_path = dir / "router.ck";
  for (const auto& m : model.registry.models()) {
    stubs.push_back(std::make_unique<er::StubBackend>(er::StubBackend::Options{m.model_id, {}, false}));
    stubs.back()->start(0);
    cfg.endpoints[m.model_id] = stubs.back()->url();
  }
  er::Gateway gateway(cfg);
  gateway.start();

  const std::size_t n = 100;
  std::vector<std::string> queries;
  for (std::size_t i = 0; i < n; ++i) queries.push_back(bench.dataset.rows[(i * 37) % bench.dataset.rows.size()].query.text);
  std::vector<int> status(n, 0);
  std::vector<std::string> chosen(n), errors(n);
  std::vector<std::thread> clients;
  for (std::size_t i = 0; i < n; ++i) {
    clients.emplace_back([&, i] {
      httplib::Client cli("127.0.0.1", gateway.port());
      cli.set_read_timeout(20, 0);
      auto res = cli.Post("/generate", nlohmann::json{{"query", queries[i]}}.dump(), "application/json");
      if (!res) {
        errors[i] = httplib::to_string(res.error());
        return;
      }
      status[i] = res->status;
      if (res->status == 200) chosen[i] = nlohmann::json::parse(res->body)["model_id"].get<std::string>();
    });
  }
  for (auto& t : clients) t.join();
  gateway.shutdown(std::chrono::seconds(5));

  std::size_t ok = 0, match = 0;
  std::uint64_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ok += status[i] == 200;
    match += chosen[i] == er::route(model, queries[i]).model_id;
  }
  for (const auto& s : stubs) hits += s->hits();
  std::map<std::string, std::size_t> failures;
  for (std::size_t i = 0; i < n; ++i) {
    if (!errors[i].empty()) ++failures[errors[i]];
    else if (status[i] != 200) ++failures["HTTP " + std::to_string(status[i])];
  }
  std::string failure_text;
  for (const auto& [what, count] : failures) failure_text += "; " + std::to_string(count) + " x " + what;
  const auto snap = gateway.metrics_snapshot();
  std::uint64_t per_model = 0;
  for (const auto& [m, c] : snap.routed_by_model) per_model += c;
  for (auto& s : stubs) s->stop();
  fs::remove_all(dir);
  return {ok == n && hits == n && match == n && per_model == n,
          std::to_string(ok) + "/100 answered, " + std::to_string(hits) + " backend hits across " +
              std::to_string(stubs.size()) + " stubs, " + std::to_string(match) + "/100 match offline route(), " +
              "routed counts sum " + std::to_string(per_model) + failure_text};
}

// ---------------------------------------------------------------- 9

Outcome determinism() {
  auto spec = bundled_spec();
  const auto b1 = er::make_synthetic_benchmark(spec);
  const auto b2 = er::make_synthetic_benchmark(spec);
  const bool synth_same = dataset_bytes(b1.dataset) == dataset_bytes(b2.dataset) && b1.oracle == b2.oracle;

  const auto c1 = er::encode_checkpoint(train_default(b1.dataset, 7).model);
  const auto c2 = er::encode_checkpoint(train_default(b2.dataset, 7).model);
  const bool ckpt_same = c1 == c2;

  const auto t1 = ablation_text(er::beta_ablation(ablation_spec()));
  const auto t2 = ablation_text(er::beta_ablation(ablation_spec()));
  const bool table_same = t1 == t2;
  return {synth_same && ckpt_same && table_same,
          std::string("synthetic dataset ") + (synth_same ? "identical" : "DIFFERS") + ", checkpoint (" +
              std::to_string(c1.size()) + " bytes) " + (ckpt_same ? "identical" : "DIFFERS") + ", ablation table " +
              (table_same ? "identical" : "DIFFERS")};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "numeric core invariants", 5, numeric_core},
      {2, "oracle upper bound", 5, oracle_upper_bound},
      {3, "expertise recovery", 60, expertise_recovery},
      {4, "beta ablation trend", 300, beta_ablation_trend},
      {5, "entropy vs selection correctness", 30, entropy_uncertainty},
      {6, "decontamination exactness", 10, decontamination_exactness},
      {7, "metric oracle equivalence", 0, metric_oracle},
      {8, "gateway efficiency and equivalence", 30, gateway_equivalence},
      {9, "determinism", 0, determinism},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    const bool in_time = c.limit_seconds == 0 || secs < c.limit_seconds;
    const bool pass = o.pass && in_time;
    failed += !pass;
    std::cout << (pass ? "PASS" : "FAIL") << "  criterion " << c.id << " (" << c.name << "): " << o.detail << "; "
              << fmt(secs, 2) << " s";
    if (c.limit_seconds > 0) std::cout << " (limit " << c.limit_seconds << " s" << (in_time ? "" : ", EXCEEDED") << ")";
    std::cout << std::endl;
  }
  std::cout << (9 - failed) << "/9 criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
