#include "cli.hpp"

#include <algorithm>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <pthread.h>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "expertroute/checkpoint.hpp"
#include "expertroute/error.hpp"
#include "expertroute/evaluation.hpp"
#include "expertroute/gateway.hpp"
#include "expertroute/ranking.hpp"
#include "expertroute/reward_pipeline.hpp"
#include "expertroute/router.hpp"
#include "expertroute/text.hpp"

namespace expertroute::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

enum class Format { kTable, kRecords };

const std::map<std::string, Format> kFormats{{"table", Format::kTable}, {"records", Format::kRecords}};

void add_format_option(CLI::App* cmd, Format& format) {
  cmd->add_option("--format", format, "Output format: table or records (JSON lines)")
      ->transform(CLI::CheckedTransformer(kFormats, CLI::ignore_case))
      ->default_str("table");
}

std::string fixed(double v, int precision = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision) << v;
  return s.str();
}

/// Left-aligned first column, right-aligned remaining columns.
void print_table(std::ostream& out, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size(), 0);
  auto widen = [&](const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < r.size() && i < width.size(); ++i) width[i] = std::max(width[i], r[i].size());
  };
  widen(header);
  for (const auto& r : rows) widen(r);
  auto emit = [&](const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i == 0) {
        out << std::left << std::setw(static_cast<int>(width[i])) << r[i];
      } else {
        out << "  " << std::right << std::setw(static_cast<int>(width[i])) << r[i];
      }
    }
    out << "\n";
  };
  emit(header);
  std::size_t total = 0;
  for (std::size_t w : width) total += w + 2;
  out << std::string(total > 2 ? total - 2 : 0, '-') << "\n";
  for (const auto& r : rows) emit(r);
  out << std::left;
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!text::trim(line).empty()) lines.push_back(line);
  }
  return lines;
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write file: " + path.string());
  return out;
}

// ---------------------------------------------------------------- ingest

struct IngestArgs {
  std::string data, registry, benchmarks, out, report;
  std::size_t n = 6;
  Format format = Format::kTable;
};

int cmd_ingest(const IngestArgs& a, std::ostream& out) {
  const auto registry = load_registry(a.registry);
  const auto dataset = load_dataset(a.data, registry);
  std::vector<std::string> benchmarks;
  if (!a.benchmarks.empty()) benchmarks = read_lines(a.benchmarks);
  const auto result = decontaminate(dataset, benchmarks, a.n);
  save_dataset(result.dataset, a.out);

  if (!a.report.empty()) {
    auto report = open_output(a.report);
    for (const auto& r : result.removed) {
      ordered_json rec;
      rec["id"] = r.id;
      rec["ngram"] = r.matched_ngram;
      report << rec.dump() << "\n";
    }
  }
  if (a.format == Format::kRecords) {
    ordered_json summary;
    summary["input_rows"] = dataset.rows.size();
    summary["kept_rows"] = result.dataset.rows.size();
    summary["removed"] = ordered_json::array();
    for (const auto& r : result.removed) summary["removed"].push_back({{"id", r.id}, {"ngram", r.matched_ngram}});
    out << summary.dump() << "\n";
  } else {
    out << "input rows: " << dataset.rows.size() << "\nkept rows: " << result.dataset.rows.size()
        << "\nremoved: " << result.removed.size() << "\n";
    if (!result.removed.empty()) {
      std::vector<std::vector<std::string>> rows;
      for (const auto& r : result.removed) rows.push_back({r.id, r.matched_ngram});
      print_table(out, {"id", "matched " + std::to_string(a.n) + "-gram"}, rows);
    }
  }
  return kOk;
}

// ---------------------------------------------------------------- tag

struct TagArgs {
  std::string data, rules, out;
};

int cmd_tag(const TagArgs& a, std::ostream& out) {
  const json rules_doc = read_json_file(a.rules);
  if (!rules_doc.is_object()) throw DataError(a.rules + ": rules must map tag -> [keywords]");
  std::vector<std::pair<std::string, std::vector<std::string>>> rules;
  for (const auto& [tag, keywords] : rules_doc.items()) {
    if (!keywords.is_array()) throw DataError(a.rules + ": keywords for '" + tag + "' must be an array");
    std::vector<std::string> lowered;
    for (const auto& k : keywords) {
      if (!k.is_string() || k.get<std::string>().empty()) {
        throw DataError(a.rules + ": keywords for '" + tag + "' must be non-empty strings");
      }
      lowered.push_back(text::ascii_lower(k.get<std::string>()));
    }
    rules.emplace_back(tag, std::move(lowered));
  }

  std::ifstream in(a.data, std::ios::binary);
  if (!in) throw DataError("cannot open dataset file: " + a.data);
  auto dst = open_output(a.out);
  std::string line;
  std::size_t line_no = 0, tagged = 0, total = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    ordered_json rec;
    try {
      rec = ordered_json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError(a.data + ":" + std::to_string(line_no) + ": parse error: " + e.what());
    }
    if (!rec.is_object() || !rec.contains("query") || !rec["query"].is_string()) {
      throw DataError(a.data + ":" + std::to_string(line_no) + ": missing string field \"query\"");
    }
    std::set<std::string> tags;
    if (rec.contains("tags") && rec["tags"].is_array()) {
      for (const auto& t : rec["tags"]) {
        if (t.is_string()) tags.insert(t.get<std::string>());
      }
    }
    const std::string lowered = text::ascii_lower(rec["query"].get<std::string>());
    const std::size_t before = tags.size();
    for (const auto& [tag, keywords] : rules) {
      for (const auto& k : keywords) {
        if (lowered.find(k) != std::string::npos) {
          tags.insert(tag);
          break;
        }
      }
    }
    if (tags.size() > before) ++tagged;
    ++total;
    rec["tags"] = tags;
    dst << rec.dump() << "\n";
  }
  out << "rows: " << total << "\nrows given new tags: " << tagged << "\n";
  return kOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string data, registry, out, report;
  TrainConfig config;
  std::uint32_t dimension = 1u << 16;
  std::string kl_direction = "target-pred";
  Format format = Format::kTable;
};

int cmd_train(TrainArgs a, std::ostream& out, std::ostream& err) {
  a.config.kl_direction =
      a.kl_direction == "pred-target" ? KlDirection::kPredictionToTarget : KlDirection::kTargetToPrediction;
  const auto registry = load_registry(a.registry);
  const auto dataset = load_dataset(a.data, registry);
  const auto table = aggregate_tag_rewards(dataset);
  FeaturizerConfig featurizer;
  featurizer.dimension = a.dimension;
  auto model = init_router(registry, featurizer, a.config.seed);

  TrainResult result;
  try {
    result = train(std::move(model), dataset, table, a.config);
  } catch (const TrainingDiverged& e) {
    err << "error: " << e.what() << "\nlast finite loss: " << e.last_finite_loss() << "\n";
    return kRuntimeError;
  }
  save_checkpoint(result.model, a.out);

  const auto& rep = result.report;
  if (a.format == Format::kRecords) {
    for (std::size_t i = 0; i < rep.epoch_losses.size(); ++i) {
      ordered_json rec;
      rec["epoch"] = i + 1;
      rec["loss"] = rep.epoch_losses[i];
      out << rec.dump() << "\n";
    }
    ordered_json fin;
    fin["final_loss"] = rep.final_loss;
    fin["rows"] = rep.rows;
    fin["wall_seconds"] = rep.wall_seconds;
    fin["checkpoint"] = a.out;
    out << fin.dump() << "\n";
  } else {
    for (std::size_t i = 0; i < rep.epoch_losses.size(); ++i) {
      out << "epoch " << std::setw(3) << (i + 1) << "  loss " << fixed(rep.epoch_losses[i], 6) << "\n";
    }
    out << "final loss: " << fixed(rep.final_loss, 6) << "\nrows: " << rep.rows
        << "\nwall seconds: " << fixed(rep.wall_seconds, 3) << "\ncheckpoint: " << a.out << "\n";
  }
  if (!a.report.empty()) {
    ordered_json doc;
    doc["epoch_losses"] = rep.epoch_losses;
    doc["final_loss"] = rep.final_loss;
    doc["rows"] = rep.rows;
    doc["beta"] = a.config.beta;
    doc["seed"] = a.config.seed;
    open_output(a.report) << doc.dump(2) << "\n";
  }
  return kOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string checkpoint, data, oracle;
  Format format = Format::kTable;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const auto model = load_checkpoint(a.checkpoint);
  const auto dataset = load_dataset(a.data, model.registry);
  const auto oracle = load_oracle(a.oracle, model.registry);
  const double accuracy = routing_accuracy(model, dataset, oracle);
  const auto single = best_single_model(dataset, oracle);
  const auto report = build_report(compare_systems(model, dataset, oracle));

  if (a.format == Format::kRecords) {
    ordered_json acc;
    acc["routing_accuracy"] = accuracy;
    acc["best_single_model"] = model.registry[single.model_index].model_id;
    acc["best_single_accuracy"] = single.accuracy;
    out << acc.dump() << "\n";
    for (const auto& s : report.subsets) {
      for (const auto& [system, score] : s.scores) {
        ordered_json rec;
        rec["subset"] = s.subset;
        rec["system"] = system;
        rec["score"] = score;
        rec["rank"] = report.ranks.at(s.subset).at(system);
        out << rec.dump() << "\n";
      }
    }
    for (const auto& sys : report.systems) {
      ordered_json rec;
      rec["system"] = sys.system;
      rec["mtr"] = sys.mtr;
      rec["uplift"] = sys.uplift;
      out << rec.dump() << "\n";
    }
    return kOk;
  }

  out << "routing accuracy: " << fixed(accuracy) << "\nbest single model: "
      << model.registry[single.model_index].model_id << " (accuracy " << fixed(single.accuracy) << ")\n\n";
  std::vector<std::string> header{"system"};
  for (const auto& s : report.subsets) header.push_back(s.subset);
  header.push_back("MTR");
  header.push_back("% Uplift");
  std::vector<std::vector<std::string>> rows;
  for (const auto& sys : report.systems) {
    std::vector<std::string> row{sys.system};
    for (const auto& s : report.subsets) row.push_back(fixed(s.scores.at(sys.system), 3));
    row.push_back(fixed(sys.mtr, 2));
    row.push_back(fixed(sys.uplift, 2));
    rows.push_back(std::move(row));
  }
  print_table(out, header, rows);
  return kOk;
}

// ---------------------------------------------------------------- ablate

struct AblateArgs {
  std::string spec, out;
  std::vector<double> betas{0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0};
  TrainConfig config;
  std::uint32_t dimension = 1u << 16;
  std::optional<double> sigma;
  Format format = Format::kTable;
};

void write_ablation(std::ostream& out, const AblationTable& table, Format format) {
  if (format == Format::kRecords) {
    for (const auto& r : table.rows) {
      ordered_json rec;
      rec["beta"] = r.beta;
      rec["accuracy"] = r.accuracy;
      rec["mtr"] = r.mtr;
      rec["final_loss"] = r.final_loss;
      out << rec.dump() << "\n";
    }
    return;
  }
  out << "train rows: " << table.train_rows << "  held-out rows: " << table.heldout_rows << "\n";
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : table.rows) {
    rows.push_back({fixed(r.beta, 1), fixed(r.accuracy), fixed(r.mtr, 2), fixed(r.final_loss)});
  }
  print_table(out, {"beta", "accuracy", "MTR", "final loss"}, rows);
}

int cmd_ablate(const AblateArgs& a, std::ostream& out) {
  AblationSpec spec;
  spec.benchmark = load_synthetic_spec(a.spec);
  if (a.sigma) spec.benchmark.noise_sigma = *a.sigma;
  spec.train = a.config;
  spec.featurizer.dimension = a.dimension;
  spec.betas = a.betas;
  const auto table = beta_ablation(spec);
  write_ablation(out, table, a.format);
  if (!a.out.empty()) {
    auto file = open_output(a.out);
    write_ablation(file, table, a.format);
  }
  return kOk;
}

// ---------------------------------------------------------------- route

struct RouteArgs {
  std::string checkpoint, query;
  Format format = Format::kTable;
};

int cmd_route(const RouteArgs& a, std::ostream& out) {
  if (text::trim(a.query).empty()) throw UsageError("--query must not be empty");
  const auto model = load_checkpoint(a.checkpoint);
  const auto decision = route(model, a.query);
  if (a.format == Format::kRecords) {
    ordered_json rec;
    rec["model_id"] = decision.model_id;
    rec["distribution"] = ordered_json::object();
    for (std::size_t i = 0; i < model.num_models(); ++i) {
      rec["distribution"][model.registry[i].model_id] = decision.distribution[i];
    }
    out << rec.dump() << "\n";
    return kOk;
  }
  out << "model_id: " << decision.model_id << "\n";
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < model.num_models(); ++i) {
    rows.push_back({model.registry[i].model_id, fixed(decision.distribution[i], 6)});
  }
  print_table(out, {"model", "probability"}, rows);
  return kOk;
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  std::string spec, out, oracle_out, registry_out;
  std::optional<std::uint64_t> seed;
  std::optional<double> sigma;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  auto spec = load_synthetic_spec(a.spec);
  if (a.seed) spec.seed = *a.seed;
  if (a.sigma) spec.noise_sigma = *a.sigma;
  const auto bench = make_synthetic_benchmark(spec);
  save_dataset(bench.dataset, a.out);
  if (!a.oracle_out.empty()) save_oracle(bench.oracle, bench.dataset, a.oracle_out);
  if (!a.registry_out.empty()) save_registry(bench.dataset.registry, a.registry_out);
  out << "rows: " << bench.dataset.rows.size() << "\nmodels: " << bench.dataset.registry.size()
      << "\ndataset: " << a.out << "\n";
  return kOk;
}

// ---------------------------------------------------------------- serve

struct ServeArgs {
  std::string config, checkpoint, registry, listen = "127.0.0.1", fallback, routing_log;
  int port = 8080;
  std::int64_t timeout_ms = 30000;
  std::size_t max_in_flight = 256;
};

int cmd_serve(const ServeArgs& a, const CLI::App& cmd, std::ostream& out) {
  GatewayConfig cfg;
  if (!a.config.empty()) cfg = load_gateway_config(a.config);
  if (!a.checkpoint.empty()) cfg.checkpoint_path = a.checkpoint;
  if (cfg.checkpoint_path.empty()) throw UsageError("serve needs --checkpoint or a --config naming one");
  if (!a.registry.empty()) {
    for (const auto& m : load_registry(a.registry).models()) {
      if (m.endpoint) cfg.endpoints[m.model_id] = *m.endpoint;
    }
  }
  if (cmd.count("--listen") || a.config.empty()) cfg.listen_address = a.listen;
  if (cmd.count("--port") || a.config.empty()) cfg.port = a.port;
  if (cmd.count("--timeout-ms") || a.config.empty()) cfg.timeout = std::chrono::milliseconds(a.timeout_ms);
  if (cmd.count("--max-in-flight") || a.config.empty()) cfg.max_in_flight = a.max_in_flight;
  if (!a.fallback.empty()) cfg.fallback_model_id = a.fallback;
  if (!a.routing_log.empty()) cfg.routing_log = a.routing_log;

  // Signals are consumed by sigwait below; every server thread inherits the mask.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  Gateway gateway(cfg);
  gateway.start();
  out << "listening on " << cfg.listen_address << ":" << gateway.port() << std::endl;
  int sig = 0;
  sigwait(&signals, &sig);
  out << "signal " << sig << " received, draining" << std::endl;
  gateway.shutdown();
  out << "stopped" << std::endl;
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"expertroute: reward-distilled query routing over a pool of candidate models"};
  app.name(args.empty() ? "expertroute" : fs::path(args[0]).filename().string());
  app.require_subcommand(1);

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Validate a reward dataset and drop rows overlapping benchmark queries");
  c_ingest->add_option("--data", ingest.data, "Dataset (JSON lines)")->required();
  c_ingest->add_option("--registry", ingest.registry, "Model registry (JSON)")->required();
  c_ingest->add_option("--benchmarks", ingest.benchmarks, "Benchmark queries, one per line");
  c_ingest->add_option("--out", ingest.out, "Decontaminated dataset output")->required();
  c_ingest->add_option("--report", ingest.report, "Removal report output (JSON lines)");
  c_ingest->add_option("--n", ingest.n, "n-gram length")->check(CLI::PositiveNumber)->capture_default_str();
  add_format_option(c_ingest, ingest.format);

  TagArgs tag;
  auto* c_tag = app.add_subcommand("tag", "Attach tags to dataset rows with case-insensitive keyword rules");
  c_tag->add_option("--data", tag.data, "Dataset (JSON lines)")->required();
  c_tag->add_option("--rules", tag.rules, "Rules file: {\"tag\": [\"keyword\", ...]}")->required();
  c_tag->add_option("--out", tag.out, "Tagged dataset output")->required();

  TrainArgs trainer;
  auto* c_train = app.add_subcommand("train", "Distill rewards into a router checkpoint");
  c_train->add_option("--data", trainer.data, "Dataset (JSON lines)")->required();
  c_train->add_option("--registry", trainer.registry, "Model registry (JSON)")->required();
  c_train->add_option("--out", trainer.out, "Checkpoint output")->required();
  c_train->add_option("--report", trainer.report, "Training report output (JSON)");
  c_train->add_option("--beta", trainer.config.beta, "Weight of sample rewards vs tag-mean rewards")
      ->check(CLI::Range(0.0, 1.0))->capture_default_str();
  c_train->add_option("--epochs", trainer.config.epochs)->check(CLI::PositiveNumber)->capture_default_str();
  c_train->add_option("--lr", trainer.config.learning_rate, "Learning rate")
      ->check(CLI::PositiveNumber)->capture_default_str();
  c_train->add_option("--batch-size", trainer.config.batch_size)->check(CLI::PositiveNumber)->capture_default_str();
  c_train->add_option("--temperature", trainer.config.temperature, "Softmax temperature for targets")
      ->check(CLI::PositiveNumber)->capture_default_str();
  c_train->add_option("--l2", trainer.config.l2_penalty, "L2 penalty on weights")
      ->check(CLI::NonNegativeNumber)->capture_default_str();
  c_train->add_option("--seed", trainer.config.seed)->capture_default_str();
  c_train->add_option("--dimension", trainer.dimension, "Hashed feature dimension")
      ->check(CLI::Range(2u, 1u << 24))->capture_default_str();
  c_train->add_option("--kl-direction", trainer.kl_direction, "target-pred (default) or pred-target")
      ->check(CLI::IsMember({"target-pred", "pred-target"}));
  add_format_option(c_train, trainer.format);

  EvalArgs evaluator;
  auto* c_eval = app.add_subcommand("eval", "Score a router against oracle labels and baselines");
  c_eval->add_option("--checkpoint", evaluator.checkpoint)->required();
  c_eval->add_option("--data", evaluator.data, "Dataset with observed rewards")->required();
  c_eval->add_option("--oracle", evaluator.oracle, "Dataset-format file with true rewards")->required();
  add_format_option(c_eval, evaluator.format);

  AblateArgs ablate;
  auto* c_ablate = app.add_subcommand("ablate", "Train one router per beta on a synthetic benchmark");
  c_ablate->add_option("--spec", ablate.spec, "Synthetic benchmark spec (JSON)")->required();
  c_ablate->add_option("--betas", ablate.betas, "Comma-separated betas in [0,1]")
      ->delimiter(',')->check(CLI::Range(0.0, 1.0));
  c_ablate->add_option("--sigma", ablate.sigma, "Override the spec's noise sigma")->check(CLI::NonNegativeNumber);
  c_ablate->add_option("--epochs", ablate.config.epochs)->check(CLI::PositiveNumber)->capture_default_str();
  c_ablate->add_option("--lr", ablate.config.learning_rate)->check(CLI::PositiveNumber)->capture_default_str();
  c_ablate->add_option("--batch-size", ablate.config.batch_size)->check(CLI::PositiveNumber)->capture_default_str();
  c_ablate->add_option("--seed", ablate.config.seed)->capture_default_str();
  c_ablate->add_option("--dimension", ablate.dimension)->check(CLI::Range(2u, 1u << 24))->capture_default_str();
  c_ablate->add_option("--out", ablate.out, "Also write the table to this file");
  add_format_option(c_ablate, ablate.format);

  RouteArgs router_args;
  auto* c_route = app.add_subcommand("route", "Route one query with a checkpoint");
  c_route->add_option("--checkpoint", router_args.checkpoint)->required();
  c_route->add_option("--query", router_args.query)->required();
  add_format_option(c_route, router_args.format);

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Generate a synthetic planted-expert benchmark");
  c_synth->add_option("--spec", synth.spec, "Synthetic benchmark spec (JSON)")->required();
  c_synth->add_option("--seed", synth.seed, "Override the spec's seed");
  c_synth->add_option("--sigma", synth.sigma, "Override the spec's noise sigma")->check(CLI::NonNegativeNumber);
  c_synth->add_option("--out", synth.out, "Dataset output (observed rewards)")->required();
  c_synth->add_option("--oracle-out", synth.oracle_out, "Oracle output (true rewards)");
  c_synth->add_option("--registry-out", synth.registry_out, "Registry output");

  ServeArgs serve;
  auto* c_serve = app.add_subcommand("serve", "Run the HTTP routing gateway until SIGINT/SIGTERM");
  c_serve->add_option("--config", serve.config, "Gateway config (JSON)");
  c_serve->add_option("--checkpoint", serve.checkpoint);
  c_serve->add_option("--registry", serve.registry, "Registry whose endpoints are used for backends");
  c_serve->add_option("--listen", serve.listen)->capture_default_str();
  c_serve->add_option("--port", serve.port)->check(CLI::Range(0, 65535))->capture_default_str();
  c_serve->add_option("--timeout-ms", serve.timeout_ms)->check(CLI::PositiveNumber)->capture_default_str();
  c_serve->add_option("--max-in-flight", serve.max_in_flight)->check(CLI::PositiveNumber)->capture_default_str();
  c_serve->add_option("--fallback", serve.fallback, "Model to retry once when the routed backend fails");
  c_serve->add_option("--routing-log", serve.routing_log, "Append routing records (JSON lines) here");

  // CLI11 takes the arguments without the program name, in reverse order.
  if (args.size() < 2) {
    err << app.help() << "A subcommand is required\n";
    return kUsage;
  }
  std::vector<std::string> reversed(args.begin() + 1, args.end());
  std::reverse(reversed.begin(), reversed.end());
  try {
    app.parse(std::move(reversed));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*c_ingest) return cmd_ingest(ingest, out);
    if (*c_tag) return cmd_tag(tag, out);
    if (*c_train) return cmd_train(trainer, out, err);
    if (*c_eval) return cmd_eval(evaluator, out);
    if (*c_ablate) return cmd_ablate(ablate, out);
    if (*c_route) return cmd_route(router_args, out);
    if (*c_synth) return cmd_synth(synth, out);
    if (*c_serve) return cmd_serve(serve, *c_serve, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const CheckpointError& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const TrainingDiverged& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kUsage;
}

}  // namespace expertroute::cli
