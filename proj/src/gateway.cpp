#include "expertroute/gateway.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <sstream>

#include "httplib.h"

#include "expertroute/checkpoint.hpp"
#include "expertroute/error.hpp"
#include "expertroute/hash.hpp"
#include "expertroute/ranking.hpp"
#include "expertroute/text.hpp"

namespace expertroute {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

struct ParsedUrl {
  std::string base;  // scheme://host:port
  std::string path;
};

ParsedUrl parse_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  const std::size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  const auto path_start = url.find('/', host_start);
  ParsedUrl out;
  if (path_start == std::string::npos) {
    out.base = url;
    out.path = "/";
  } else {
    out.base = url.substr(0, path_start);
    out.path = url.substr(path_start);
  }
  if (scheme_end == std::string::npos) out.base = "http://" + out.base;
  return out;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  const std::size_t idx = static_cast<std::size_t>(q * static_cast<double>(values.size() - 1) + 0.5);
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(idx), values.end());
  return values[idx];
}

void reply_json(httplib::Response& res, int status, const ordered_json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

ordered_json error_body(const std::string& message) {
  ordered_json body;
  body["error"] = message;
  return body;
}

// Returns the query string or an error message.
std::optional<std::string> parse_query(const httplib::Request& req, std::string& error) {
  json body;
  try {
    body = json::parse(req.body);
  } catch (const json::parse_error&) {
    error = "request body is not valid JSON";
    return std::nullopt;
  }
  if (!body.is_object() || !body.contains("query") || !body["query"].is_string()) {
    error = "request body needs a string field \"query\"";
    return std::nullopt;
  }
  auto query = body["query"].get<std::string>();
  if (text::trim(query).empty()) {
    error = "query is empty";
    return std::nullopt;
  }
  return query;
}

}  // namespace

// --- config ---

void GatewayConfig::validate() const {
  if (timeout.count() <= 0) throw UsageError("gateway: timeout must be positive");
  if (max_in_flight == 0) throw UsageError("gateway: max_in_flight must be positive");
  if (port < 0 || port > 65535) throw UsageError("gateway: port out of range");
  if (worker_threads == 0) throw UsageError("gateway: worker_threads must be positive");
}

GatewayConfig GatewayConfig::from_json(const json& doc) {
  if (!doc.is_object()) throw DataError("gateway config must be a JSON object");
  GatewayConfig cfg;
  try {
    cfg.listen_address = doc.value("listen_address", cfg.listen_address);
    cfg.port = doc.value("port", cfg.port);
    cfg.checkpoint_path = doc.at("checkpoint_path").get<std::string>();
    if (doc.contains("endpoints")) cfg.endpoints = doc["endpoints"].get<std::map<std::string, std::string>>();
    cfg.timeout = std::chrono::milliseconds(doc.value("timeout_ms", std::int64_t{30000}));
    cfg.max_in_flight = doc.value("max_in_flight", cfg.max_in_flight);
    if (doc.contains("fallback_model_id") && !doc["fallback_model_id"].is_null()) {
      cfg.fallback_model_id = doc["fallback_model_id"].get<std::string>();
    }
    if (doc.contains("routing_log") && !doc["routing_log"].is_null()) {
      cfg.routing_log = doc["routing_log"].get<std::string>();
    }
    cfg.worker_threads = doc.value("worker_threads", cfg.worker_threads);
  } catch (const json::exception& e) {
    throw DataError(std::string("gateway config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

GatewayConfig load_gateway_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open gateway config: " + path.string());
  try {
    auto cfg = GatewayConfig::from_json(json::parse(in));
    if (cfg.checkpoint_path.is_relative()) cfg.checkpoint_path = path.parent_path() / cfg.checkpoint_path;
    return cfg;
  } catch (const json::parse_error& e) {
    throw DataError("gateway config " + path.string() + ": " + e.what());
  }
}

// --- backend client ---

BackendReply HttpBackendClient::generate(const std::string& endpoint, const std::string& query,
                                         std::chrono::milliseconds timeout) {
  const auto url = parse_url(endpoint);
  httplib::Client client(url.base);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);

  json body;
  body["query"] = query;
  const auto started = Clock::now();
  auto result = client.Post(url.path, body.dump(), "application/json");

  BackendReply reply;
  if (!result) {
    const auto err = result.error();
    const bool timed_out =
        err == httplib::Error::ConnectionTimeout ||
        (err == httplib::Error::Read && Clock::now() - started >= timeout);
    reply.status = timed_out ? BackendReply::Status::kTimeout : BackendReply::Status::kError;
    reply.error = httplib::to_string(err);
    return reply;
  }
  reply.http_status = result->status;
  if (result->status < 200 || result->status >= 300) {
    reply.error = "backend answered HTTP " + std::to_string(result->status);
    return reply;
  }
  try {
    auto doc = json::parse(result->body);
    reply.text = doc.at("text").get<std::string>();
    reply.status = BackendReply::Status::kOk;
  } catch (const json::exception&) {
    reply.error = "backend reply is missing a string \"text\" field";
  }
  return reply;
}

// --- records and metrics ---

ordered_json RouteRecord::to_json() const {
  ordered_json rec;
  rec["request_id"] = request_id;
  rec["query_hash"] = query_hash;
  rec["model_id"] = model_id;
  rec["distribution"] = distribution.probs;
  rec["latency_ms"] = latency_ms;
  rec["backend_status"] = backend_status;
  if (failover_model_id) rec["failover_model_id"] = *failover_model_id;
  return rec;
}

std::string MetricsSnapshot::to_text() const {
  std::ostringstream out;
  out << "# TYPE expertroute_routed_total counter\n";
  out << "expertroute_routed_total " << routed_total << "\n";
  for (const auto& [model, count] : routed_by_model) {
    out << "expertroute_routed_total{model=\"" << model << "\"} " << count << "\n";
  }
  out << "expertroute_route_requests_total " << route_requests << "\n";
  out << "expertroute_generate_requests_total " << generate_requests << "\n";
  out << "expertroute_backend_calls_total " << backend_calls << "\n";
  out << "expertroute_errors_total{kind=\"backend\"} " << backend_errors << "\n";
  out << "expertroute_errors_total{kind=\"timeout\"} " << backend_timeouts << "\n";
  out << "expertroute_errors_total{kind=\"rejected\"} " << rejected << "\n";
  out << "expertroute_errors_total{kind=\"bad_request\"} " << bad_requests << "\n";
  out << "expertroute_failovers_total " << failovers << "\n";
  out << "expertroute_latency_ms{quantile=\"0.5\"} " << latency_p50_ms << "\n";
  out << "expertroute_latency_ms{quantile=\"0.95\"} " << latency_p95_ms << "\n";
  out << "expertroute_in_flight " << in_flight << "\n";
  return out.str();
}

struct Gateway::Counters {
  std::mutex routed_mutex;
  std::vector<std::pair<std::string, std::uint64_t>> routed;
  std::atomic<std::uint64_t> route_requests{0};
  std::atomic<std::uint64_t> generate_requests{0};
  std::atomic<std::uint64_t> backend_errors{0};
  std::atomic<std::uint64_t> backend_timeouts{0};
  std::atomic<std::uint64_t> failovers{0};
  std::atomic<std::uint64_t> rejected{0};
  std::atomic<std::uint64_t> bad_requests{0};
  std::atomic<std::uint64_t> backend_calls{0};

  void add_models(const ModelRegistry& registry) {
    std::lock_guard lock(routed_mutex);
    for (const auto& m : registry.models()) {
      auto it = std::find_if(routed.begin(), routed.end(), [&](const auto& e) { return e.first == m.model_id; });
      if (it == routed.end()) routed.emplace_back(m.model_id, 0);
    }
  }
  void count_routed(const std::string& model_id) {
    std::lock_guard lock(routed_mutex);
    auto it = std::find_if(routed.begin(), routed.end(), [&](const auto& e) { return e.first == model_id; });
    if (it == routed.end()) {
      routed.emplace_back(model_id, 1);
    } else {
      ++it->second;
    }
  }
};

// --- gateway ---

Gateway::Gateway(GatewayConfig config, std::shared_ptr<BackendClient> client)
    : config_(std::move(config)),
      client_(client ? std::move(client) : std::make_shared<HttpBackendClient>()),
      counters_(std::make_unique<Counters>()) {
  config_.validate();
  auto model = std::make_shared<const RouterModel>(load_checkpoint(config_.checkpoint_path));
  check_endpoints(*model);
  counters_->add_models(model->registry);
  model_ = std::move(model);
  if (config_.routing_log) {
    log_.open(*config_.routing_log, std::ios::app | std::ios::binary);
    if (!log_) throw DataError("cannot open routing log: " + config_.routing_log->string());
  }
}

Gateway::~Gateway() {
  if (running_) shutdown(std::chrono::seconds(5));
  if (listener_.joinable()) listener_.join();
}

std::string Gateway::endpoint_for(const RouterModel& model, const std::string& model_id) const {
  if (auto it = config_.endpoints.find(model_id); it != config_.endpoints.end()) return it->second;
  if (auto idx = model.registry.index_of(model_id); idx && model.registry[*idx].endpoint) {
    return *model.registry[*idx].endpoint;
  }
  return {};
}

void Gateway::check_endpoints(const RouterModel& model) const {
  for (const auto& m : model.registry.models()) {
    if (endpoint_for(model, m.model_id).empty()) {
      throw DataError("gateway: no endpoint configured for model '" + m.model_id + "'");
    }
  }
  if (config_.fallback_model_id && endpoint_for(model, *config_.fallback_model_id).empty()) {
    throw DataError("gateway: no endpoint configured for fallback model '" + *config_.fallback_model_id + "'");
  }
}

std::shared_ptr<const RouterModel> Gateway::model() const {
  std::lock_guard lock(model_mutex_);
  return model_;
}

void Gateway::reload(const std::filesystem::path& checkpoint_path) {
  auto fresh = std::make_shared<const RouterModel>(load_checkpoint(checkpoint_path));
  check_endpoints(*fresh);
  counters_->add_models(fresh->registry);
  std::lock_guard lock(model_mutex_);
  model_ = std::move(fresh);
}

void Gateway::append_log(const RouteRecord& record) {
  if (!log_.is_open()) return;
  const std::string line = record.to_json().dump() + "\n";
  std::lock_guard lock(log_mutex_);
  log_ << line;
  log_.flush();
}

void Gateway::record_latency(double ms) {
  constexpr std::size_t kWindow = 10000;
  std::lock_guard lock(latency_mutex_);
  if (latencies_.size() == kWindow) latencies_.erase(latencies_.begin(), latencies_.begin() + kWindow / 2);
  latencies_.push_back(ms);
}

MetricsSnapshot Gateway::metrics_snapshot() const {
  MetricsSnapshot snap;
  {
    std::lock_guard lock(counters_->routed_mutex);
    snap.routed_by_model = counters_->routed;
  }
  for (const auto& [model, count] : snap.routed_by_model) snap.routed_total += count;
  snap.route_requests = counters_->route_requests;
  snap.generate_requests = counters_->generate_requests;
  snap.backend_errors = counters_->backend_errors;
  snap.backend_timeouts = counters_->backend_timeouts;
  snap.failovers = counters_->failovers;
  snap.rejected = counters_->rejected;
  snap.bad_requests = counters_->bad_requests;
  snap.backend_calls = counters_->backend_calls;
  snap.in_flight = in_flight_;
  std::vector<double> copy;
  {
    std::lock_guard lock(latency_mutex_);
    copy = latencies_;
  }
  snap.latency_p50_ms = percentile(copy, 0.5);
  snap.latency_p95_ms = percentile(std::move(copy), 0.95);
  return snap;
}

void Gateway::install_routes() {
  auto& svr = *server_;

  // Admission gate: the guard releases its slot when the handler returns.
  struct Slot {
    std::atomic<std::uint64_t>& gauge;
    bool admitted;
    ~Slot() {
      if (admitted) --gauge;
    }
  };
  auto admit = [this]() -> Slot {
    if (draining_) return {in_flight_, false};
    if (in_flight_.fetch_add(1) >= config_.max_in_flight) {
      --in_flight_;
      return {in_flight_, false};
    }
    return {in_flight_, true};
  };

  svr.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
    ordered_json body;
    body["status"] = draining_ ? "draining" : "ok";
    body["models"] = model()->num_models();
    reply_json(res, draining_ ? 503 : 200, body);
  });

  svr.Get("/metrics", [this](const httplib::Request&, httplib::Response& res) {
    res.status = 200;
    res.set_content(metrics_snapshot().to_text(), "text/plain; version=0.0.4");
  });

  svr.Post("/route", [this, admit](const httplib::Request& req, httplib::Response& res) {
    Slot slot = admit();
    if (!slot.admitted) {
      ++counters_->rejected;
      reply_json(res, 503, error_body("over capacity"));
      return;
    }
    ++counters_->route_requests;
    std::string error;
    auto query = parse_query(req, error);
    if (!query) {
      ++counters_->bad_requests;
      reply_json(res, 400, error_body(error));
      return;
    }
    const auto snapshot = model();
    const auto decision = route(*snapshot, *query);
    counters_->count_routed(decision.model_id);
    ordered_json body;
    body["model_id"] = decision.model_id;
    body["distribution"] = decision.distribution.probs;
    body["request_id"] = "req-" + std::to_string(next_request_++);
    reply_json(res, 200, body);
  });

  svr.Post("/generate", [this, admit](const httplib::Request& req, httplib::Response& res) {
    Slot slot = admit();
    if (!slot.admitted) {
      ++counters_->rejected;
      reply_json(res, 503, error_body("over capacity"));
      return;
    }
    const auto started = Clock::now();
    ++counters_->generate_requests;
    std::string error;
    auto query = parse_query(req, error);
    if (!query) {
      ++counters_->bad_requests;
      reply_json(res, 400, error_body(error));
      return;
    }
    const auto snapshot = model();
    const auto decision = route(*snapshot, *query);
    counters_->count_routed(decision.model_id);

    RouteRecord record;
    record.request_id = "req-" + std::to_string(next_request_++);
    record.query_hash = hex64(fnv1a64(*query));
    record.model_id = decision.model_id;
    record.distribution = decision.distribution;

    ++counters_->backend_calls;
    BackendReply reply = client_->generate(endpoint_for(*snapshot, decision.model_id), *query, config_.timeout);
    std::string served_by = decision.model_id;
    if (reply.status == BackendReply::Status::kError && config_.fallback_model_id &&
        *config_.fallback_model_id != decision.model_id) {
      ++counters_->backend_errors;
      ++counters_->failovers;
      served_by = *config_.fallback_model_id;
      record.failover_model_id = served_by;
      ++counters_->backend_calls;
      reply = client_->generate(endpoint_for(*snapshot, served_by), *query, config_.timeout);
    }

    record.latency_ms = std::chrono::duration<double, std::milli>(Clock::now() - started).count();
    record_latency(record.latency_ms);
    ordered_json body;
    switch (reply.status) {
      case BackendReply::Status::kOk:
        record.backend_status = "ok";
        body["model_id"] = served_by;
        body["text"] = reply.text;
        body["request_id"] = record.request_id;
        body["latency_ms"] = record.latency_ms;
        if (record.failover_model_id) {
          body["routed_model_id"] = decision.model_id;
          body["failover"] = true;
        }
        reply_json(res, 200, body);
        break;
      case BackendReply::Status::kTimeout:
        ++counters_->backend_timeouts;
        record.backend_status = "timeout";
        body["error"] = "backend timeout: " + reply.error;
        body["model_id"] = served_by;
        body["request_id"] = record.request_id;
        reply_json(res, 504, body);
        break;
      case BackendReply::Status::kError:
        ++counters_->backend_errors;
        record.backend_status = "error";
        body["error"] = "backend error: " + reply.error;
        body["model_id"] = decision.model_id;
        if (record.failover_model_id) body["failover_model_id"] = *record.failover_model_id;
        body["request_id"] = record.request_id;
        reply_json(res, 502, body);
        break;
    }
    append_log(record);
  });

  svr.Post("/admin/reload", [this](const httplib::Request& req, httplib::Response& res) {
    std::string path;
    try {
      path = json::parse(req.body).at("checkpoint_path").get<std::string>();
    } catch (const json::exception&) {
      reply_json(res, 400, error_body("request body needs a string field \"checkpoint_path\""));
      return;
    }
    try {
      reload(path);
    } catch (const std::exception& e) {
      reply_json(res, 422, error_body(e.what()));
      return;
    }
    ordered_json body;
    body["status"] = "reloaded";
    body["models"] = model()->num_models();
    reply_json(res, 200, body);
  });
}

void Gateway::start() {
  std::lock_guard lock(lifecycle_mutex_);
  if (running_) return;
  server_ = std::make_unique<httplib::Server>();
  const std::size_t workers = config_.worker_threads;
  server_->new_task_queue = [workers] { return new httplib::ThreadPool(workers); };
  server_->set_keep_alive_timeout(1);
  install_routes();

  if (config_.port == 0) {
    bound_port_ = server_->bind_to_any_port(config_.listen_address);
    if (bound_port_ < 0) throw std::runtime_error("gateway: cannot bind " + config_.listen_address);
  } else {
    if (!server_->bind_to_port(config_.listen_address, config_.port)) {
      throw std::runtime_error("gateway: cannot bind " + config_.listen_address + ":" +
                               std::to_string(config_.port));
    }
    bound_port_ = config_.port;
  }
  draining_ = false;
  running_ = true;
  listener_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
}

void Gateway::shutdown(std::chrono::milliseconds drain_timeout) {
  std::lock_guard lock(lifecycle_mutex_);
  if (!running_) return;
  draining_ = true;
  const auto deadline = Clock::now() + drain_timeout;
  while (in_flight_ > 0 && Clock::now() < deadline) {
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  server_->stop();
  if (listener_.joinable()) listener_.join();
  running_ = false;
}

void Gateway::wait() {
  while (running_) std::this_thread::sleep_for(std::chrono::milliseconds(50));
}

// --- stub backend ---

StubBackend::StubBackend(Options options) : options_(std::move(options)) {}

StubBackend::~StubBackend() { stop(); }

int StubBackend::start(int port) {
  server_ = std::make_unique<httplib::Server>();
  server_->new_task_queue = [] { return new httplib::ThreadPool(32); };
  server_->set_keep_alive_timeout(1);
  server_->Post(R"(/.*)", [this](const httplib::Request& req, httplib::Response& res) {
    ++hits_;
    if (options_.delay.count() > 0) std::this_thread::sleep_for(options_.delay);
    if (options_.fail) {
      res.status = 500;
      res.set_content(R"({"error":"stub failure"})", "application/json");
      return;
    }
    std::string query;
    try {
      query = json::parse(req.body).at("query").get<std::string>();
    } catch (const json::exception&) {
      res.status = 400;
      res.set_content(R"({"error":"bad request"})", "application/json");
      return;
    }
    ordered_json body;
    body["text"] = stub_response(options_.model_id, query);
    body["model_id"] = options_.model_id;
    res.status = 200;
    res.set_content(body.dump(), "application/json");
  });
  if (port == 0) {
    port_ = server_->bind_to_any_port("127.0.0.1");
  } else {
    port_ = server_->bind_to_port("127.0.0.1", port) ? port : -1;
  }
  if (port_ < 0) throw std::runtime_error("stub backend: cannot bind port");
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void StubBackend::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

std::string StubBackend::url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/generate"; }

}  // namespace expertroute
