#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "expertroute/error.hpp"
#include "expertroute/numeric.hpp"
#include "expertroute/reward_pipeline.hpp"

namespace er = expertroute;

namespace {

er::ModelRegistry two_models() {
  return er::ModelRegistry({{"m0", std::nullopt, ""}, {"m1", std::nullopt, ""}});
}

er::RewardRow row(std::string id, std::string text, std::set<std::string> tags, std::vector<double> r) {
  return {er::Query{std::move(id), std::move(text), std::move(tags), std::nullopt}, er::RewardVector{std::move(r)}};
}

std::string error_of(const std::string& content) {
  std::istringstream in(content);
  try {
    er::read_dataset(in, two_models(), "data.jsonl");
  } catch (const er::DataError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(LoadDataset, ParsesRowsInFileOrder) {
  std::istringstream in(
      R"({"id":"a","query":"first","tags":["x"],"rewards":{"m0":1,"m1":2}})"
      "\n"
      R"({"id":"b","query":"second","tags":[],"subset":"s","rewards":{"m1":0.5,"m0":-1}})"
      "\n\n"
      R"({"id":"c","query":"third","tags":["x","y"],"rewards":{"m0":0,"m1":0}})"
      "\n");
  const auto ds = er::read_dataset(in, two_models());
  ASSERT_EQ(ds.rows.size(), 3u);
  EXPECT_EQ(ds.rows[0].query.id, "a");
  EXPECT_EQ(ds.rows[1].query.subset, std::optional<std::string>("s"));
  EXPECT_EQ(ds.rows[1].rewards.values, (std::vector<double>{-1, 0.5}));
  EXPECT_EQ(ds.rows[2].query.tags, (std::set<std::string>{"x", "y"}));
  for (const auto& r : ds.rows) EXPECT_EQ(r.rewards.size(), 2u);
}

TEST(LoadDataset, UnknownModelNamesModelAndLine) {
  const auto msg = error_of(
      R"({"id":"a","query":"q","tags":[],"rewards":{"m0":1,"m1":2}})"
      "\n"
      R"({"id":"b","query":"q2","tags":[],"rewards":{"m0":1,"m1":2,"m9":3}})"
      "\n");
  EXPECT_NE(msg.find("m9"), std::string::npos) << msg;
  EXPECT_NE(msg.find(":2:"), std::string::npos) << msg;
}

TEST(LoadDataset, EmptyFile) {
  EXPECT_NE(error_of("").find("empty dataset"), std::string::npos);
  EXPECT_NE(error_of("\n\n").find("empty dataset"), std::string::npos);
}

TEST(LoadDataset, RejectsInvalidRecords) {
  const std::string ok = R"({"id":"a","query":"q","tags":[],"rewards":{"m0":1,"m1":2}})"
                         "\n";
  EXPECT_NE(error_of(ok + ok).find("duplicate"), std::string::npos);
  EXPECT_NE(error_of(R"({"id":"a","query":"q","tags":[],"rewards":{"m0":1}})").find("m1"), std::string::npos);
  EXPECT_NE(error_of(ok + "{not json\n").find(":2:"), std::string::npos);
  EXPECT_FALSE(error_of(R"({"id":"a","query":"","tags":[],"rewards":{"m0":1,"m1":2}})").empty());
}

TEST(LoadDataset, WriteReadRoundTrip) {
  er::RewardDataset ds{two_models(), {row("a", "hello world", {"t"}, {0.25, -3.5}), row("b", "x", {}, {1e-3, 7})}};
  ds.rows[1].query.subset = "sub";
  std::stringstream buf;
  er::write_dataset(buf, ds);
  const auto back = er::read_dataset(buf, two_models());
  ASSERT_EQ(back.rows.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back.rows[i].query, ds.rows[i].query);
    EXPECT_EQ(back.rows[i].rewards, ds.rows[i].rewards);
  }
}

// --- decontamination ---

TEST(Decontaminate, Examples) {
  er::RewardDataset ds{two_models(),
                       {row("same", "the quick brown fox jumps over the dog", {}, {0, 0}),
                        row("shifted", "a b c d e f g", {}, {0, 0}),
                        row("short", "one two three four five", {}, {0, 0}),
                        row("clean", "nothing in common with anything at all here", {}, {0, 0})}};
  const std::vector<std::string> bench{"The quick brown fox jumps over the dog", "x a b c d e f",
                                       "one two three four five"};
  const auto res = er::decontaminate(ds, bench);
  ASSERT_EQ(res.removed.size(), 2u);
  EXPECT_EQ(res.removed[0].id, "same");
  EXPECT_EQ(res.removed[1].id, "shifted");
  EXPECT_EQ(res.removed[1].matched_ngram, "a b c d e f");
  ASSERT_EQ(res.dataset.rows.size(), 2u);
  EXPECT_EQ(res.dataset.rows[0].query.id, "short");
  EXPECT_EQ(res.dataset.rows[1].query.id, "clean");
}

TEST(Decontaminate, EmptyBenchmarkIsIdentity) {
  er::RewardDataset ds{two_models(), {row("a", "a b c d e f", {}, {1, 2})}};
  const auto res = er::decontaminate(ds, {});
  EXPECT_TRUE(res.removed.empty());
  EXPECT_EQ(res.dataset.rows.size(), 1u);
}

TEST(Decontaminate, TokenNormalization) {
  EXPECT_EQ(er::decontamination_tokens("  Hello, WORLD!  --  (it's)\tdone."),
            (std::vector<std::string>{"hello", "world", "it's", "done"}));
  EXPECT_THROW(er::decontaminate(er::RewardDataset{two_models(), {}}, {}, 0), er::UsageError);
}

TEST(Decontaminate, MatchesBruteForceOracle) {
  std::mt19937_64 gen(11);
  const std::vector<std::string> vocab{"a", "b", "c", "d", "e", "f", "g", "h"};
  auto stream = [&](std::size_t len) {
    std::vector<std::string> toks;
    for (std::size_t i = 0; i < len; ++i) toks.push_back(vocab[gen() % vocab.size()]);
    return toks;
  };
  auto join = [](const std::vector<std::string>& t, std::size_t from, std::size_t n) {
    std::string s;
    for (std::size_t i = from; i < from + n; ++i) s += (i == from ? "" : " ") + t[i];
    return s;
  };
  for (std::size_t n : {3u, 4u, 6u}) {
    std::vector<std::string> bench;
    std::set<std::string> bench_grams;
    for (int b = 0; b < 10; ++b) {
      auto t = stream(4 + gen() % 12);
      bench.push_back(join(t, 0, t.size()));
      for (std::size_t i = 0; i + n <= t.size(); ++i) bench_grams.insert(join(t, i, n));
    }
    er::RewardDataset ds{two_models(), {}};
    std::vector<std::string> expected;
    for (int q = 0; q < 200; ++q) {
      auto t = stream(1 + gen() % 14);
      bool hit = false;
      for (std::size_t i = 0; i + n <= t.size(); ++i) hit = hit || bench_grams.count(join(t, i, n)) > 0;
      const std::string id = "q" + std::to_string(q);
      if (hit) expected.push_back(id);
      ds.rows.push_back(row(id, join(t, 0, t.size()), {}, {0, 0}));
    }
    const auto res = er::decontaminate(ds, bench, n);
    std::vector<std::string> got;
    for (const auto& r : res.removed) got.push_back(r.id);
    EXPECT_EQ(got, expected) << "n=" << n;
    EXPECT_EQ(res.dataset.rows.size() + res.removed.size(), ds.rows.size());
  }
}

// --- normalization and entropy ---

TEST(NormalizeRewards, Examples) {
  const auto u = er::normalize_rewards({{4.2, 4.2, 4.2}});
  for (double p : u.probs) EXPECT_NEAR(p, 1.0 / 3.0, 1e-12);

  const auto d = er::normalize_rewards({{0.0, std::log(2.0)}});
  EXPECT_NEAR(d[0], 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(d[1], 2.0 / 3.0, 1e-12);

  const auto big = er::normalize_rewards({{1000, 1001, 1002}});
  const auto small = er::normalize_rewards({{0, 1, 2}});
  for (std::size_t i = 0; i < 3; ++i) {
    ASSERT_TRUE(std::isfinite(big[i]));
    EXPECT_NEAR(big[i], small[i], 1e-12);
  }
  EXPECT_THROW(er::normalize_rewards({{1, 2}}, 0.0), er::UsageError);
  EXPECT_THROW(er::normalize_rewards({{1, 2}}, -1.0), er::UsageError);
}

TEST(NormalizeRewards, SumShiftAndArgmaxProperties) {
  std::mt19937_64 gen(3);
  std::normal_distribution<double> nd(0.0, 5.0);
  std::uniform_real_distribution<double> temp(0.05, 10.0);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t k = 2 + gen() % 7;
    std::vector<double> r(k);
    for (auto& v : r) v = nd(gen);
    if (trial % 5 == 0) r[gen() % k] = r[0];  // plant ties
    const double t = temp(gen);
    const double c = nd(gen) * 100;
    std::vector<double> shifted = r;
    for (auto& v : shifted) v += c;
    const auto p = er::normalize_rewards({r}, t);
    const auto q = er::normalize_rewards({shifted}, t);
    EXPECT_NEAR(std::accumulate(p.probs.begin(), p.probs.end(), 0.0), 1.0, 1e-9);
    for (std::size_t i = 0; i < k; ++i) EXPECT_NEAR(p[i], q[i], 1e-9);
    EXPECT_EQ(er::argmax(r), er::argmax(p.probs));
  }
}

TEST(RewardEntropy, ExamplesAndBounds) {
  EXPECT_NEAR(er::reward_entropy({std::vector<double>(6, 1.0 / 6)}), std::log(6.0), 1e-12);
  EXPECT_EQ(er::reward_entropy({{0, 1, 0}}), 0.0);
  EXPECT_NEAR(er::reward_entropy({{0.5, 0.25, 0.25}}), 1.5 * std::log(2.0), 1e-12);
  EXPECT_NEAR(er::reward_entropy({{0.5, 0.25, 0.25}}), 1.0397, 1e-4);

  std::mt19937_64 gen(5);
  std::normal_distribution<double> nd(0.0, 3.0);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t k = 2 + gen() % 6;
    std::vector<double> r(k);
    for (auto& v : r) v = nd(gen);
    const double h = er::reward_entropy(er::normalize_rewards({r}));
    EXPECT_GE(h, 0.0);
    EXPECT_LE(h, std::log(static_cast<double>(k)) + 1e-12);
  }
}

// --- tag aggregation and enhancement ---

TEST(AggregateTagRewards, Examples) {
  er::RewardDataset ds{two_models(),
                       {row("a", "x", {"math"}, {1, 0}), row("b", "y", {"math"}, {3, 2}),
                        row("c", "z", {"code"}, {5, 7}), row("d", "w", {"math", "code"}, {0, 1}),
                        row("e", "v", {}, {2, 2})}};
  const auto t = er::aggregate_tag_rewards(ds);
  EXPECT_EQ(t.entries.at("math").count, 3u);
  EXPECT_EQ(t.entries.at("math").mean_rewards.values, (std::vector<double>{4.0 / 3, 1.0}));
  EXPECT_EQ(t.entries.at("code").count, 2u);
  EXPECT_EQ(t.entries.at("code").mean_rewards.values, (std::vector<double>{2.5, 4.0}));
  EXPECT_EQ(t.entries.at(std::string(er::kUntaggedTag)).count, 1u);
  EXPECT_NEAR(t.global_mean[0], 11.0 / 5, 1e-12);
  EXPECT_NEAR(t.global_mean[1], 12.0 / 5, 1e-12);

  er::RewardDataset one{two_models(), {row("a", "x", {"code"}, {0.7, -0.2})}};
  EXPECT_EQ(er::aggregate_tag_rewards(one).entries.at("code").mean_rewards.values,
            (std::vector<double>{0.7, -0.2}));
}

TEST(AggregateTagRewards, MatchesGroupByOracle) {
  std::mt19937_64 gen(17);
  std::normal_distribution<double> nd(0.0, 2.0);
  const std::vector<std::string> tags{"a", "b", "c", "d", "e"};
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t rows = 1 + gen() % 1000;
    er::RewardDataset ds{two_models(), {}};
    for (std::size_t i = 0; i < rows; ++i) {
      std::set<std::string> ts;
      for (const auto& t : tags)
        if (gen() % 4 == 0) ts.insert(t);
      ds.rows.push_back(row("q" + std::to_string(i), "text", ts, {nd(gen), nd(gen)}));
    }
    // Oracle: explicit membership scan per tag.
    std::set<std::string> all;
    for (const auto& r : ds.rows) {
      if (r.query.tags.empty()) all.insert(std::string(er::kUntaggedTag));
      all.insert(r.query.tags.begin(), r.query.tags.end());
    }
    const auto table = er::aggregate_tag_rewards(ds);
    ASSERT_EQ(table.entries.size(), all.size());
    for (const auto& tag : all) {
      double s0 = 0, s1 = 0;
      std::size_t n = 0;
      for (const auto& r : ds.rows) {
        const bool member = tag == er::kUntaggedTag ? r.query.tags.empty() : r.query.tags.count(tag) > 0;
        if (!member) continue;
        s0 += r.rewards[0];
        s1 += r.rewards[1];
        ++n;
      }
      const auto& e = table.entries.at(tag);
      EXPECT_EQ(e.count, n);
      EXPECT_NEAR(e.mean_rewards[0], s0 / n, 1e-9);
      EXPECT_NEAR(e.mean_rewards[1], s1 / n, 1e-9);
    }
  }
}

TEST(EnhanceLabels, EndpointsAndInterpolation) {
  er::TagRewardTable table;
  table.entries["t"] = {er::RewardVector{{0, 1}}, 1};
  table.entries["u"] = {er::RewardVector{{2, 3}}, 1};
  table.global_mean = er::RewardVector{{10, 20}};
  const er::Query q{"id", "text", {"t"}, std::nullopt};
  const er::RewardVector r{{1, 0}};
  EXPECT_EQ(er::enhance_labels(r, q, table, 1.0), r);
  EXPECT_EQ(er::enhance_labels(r, q, table, 0.0).values, (std::vector<double>{0, 1}));
  const auto mid = er::enhance_labels(r, q, table, 0.3);
  EXPECT_NEAR(mid[0], 0.3, 1e-15);
  EXPECT_NEAR(mid[1], 0.7, 1e-15);

  const er::Query multi{"id", "text", {"t", "u"}, std::nullopt};
  EXPECT_EQ(er::enhance_labels(r, multi, table, 0.0).values, (std::vector<double>{1, 2}));
  const er::Query unknown{"id", "text", {"nope"}, std::nullopt};
  EXPECT_EQ(er::enhance_labels(r, unknown, table, 0.0).values, (std::vector<double>{10, 20}));

  EXPECT_THROW(er::enhance_labels(r, q, table, 1.5), er::UsageError);
  EXPECT_THROW(er::enhance_labels(r, q, table, -0.1), er::UsageError);
}

TEST(EnhanceLabels, LinearInBeta) {
  std::mt19937_64 gen(23);
  std::normal_distribution<double> nd(0.0, 1.0);
  er::RewardDataset ds{two_models(), {}};
  for (int i = 0; i < 50; ++i)
    ds.rows.push_back(row("q" + std::to_string(i), "x", {i % 2 ? "odd" : "even"}, {nd(gen), nd(gen)}));
  ds.rows.push_back(row("plain", "x", {}, {nd(gen), nd(gen)}));
  const auto table = er::aggregate_tag_rewards(ds);
  for (const auto& r : ds.rows) {
    const auto e0 = er::enhance_labels(r.rewards, r.query, table, 0.0);
    const auto e1 = er::enhance_labels(r.rewards, r.query, table, 1.0);
    for (double beta : {0.1, 0.3, 0.5, 0.77}) {
      const auto e = er::enhance_labels(r.rewards, r.query, table, beta);
      for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(e[i], beta * e1[i] + (1 - beta) * e0[i], 1e-12);
    }
  }
}
