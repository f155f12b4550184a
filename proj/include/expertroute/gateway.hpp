#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "expertroute/router.hpp"

namespace httplib {
class Server;
}

namespace expertroute {

struct GatewayConfig {
  std::string listen_address = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::filesystem::path checkpoint_path;
  /// model_id -> backend URL. Overrides endpoints stored in the checkpoint registry.
  std::map<std::string, std::string> endpoints;
  std::chrono::milliseconds timeout{30000};
  std::size_t max_in_flight = 256;
  std::optional<std::string> fallback_model_id;
  std::optional<std::filesystem::path> routing_log;
  std::size_t worker_threads = 64;

  void validate() const;
  static GatewayConfig from_json(const nlohmann::json& doc);
};

GatewayConfig load_gateway_config(const std::filesystem::path& path);

struct BackendReply {
  enum class Status { kOk, kError, kTimeout };
  Status status = Status::kError;
  int http_status = 0;
  std::string text;
  std::string error;
};

/// Backend protocol: POST {"query": ...} to the endpoint, expect {"text": ...}.
class BackendClient {
 public:
  virtual ~BackendClient() = default;
  virtual BackendReply generate(const std::string& endpoint, const std::string& query,
                                std::chrono::milliseconds timeout) = 0;
};

class HttpBackendClient final : public BackendClient {
 public:
  BackendReply generate(const std::string& endpoint, const std::string& query,
                        std::chrono::milliseconds timeout) override;
};

struct RouteRecord {
  std::string request_id;
  std::string query_hash;
  std::string model_id;  // routing decision
  RoutingDistribution distribution;
  double latency_ms = 0.0;
  std::string backend_status;  // "ok", "error", "timeout"
  std::optional<std::string> failover_model_id;

  nlohmann::ordered_json to_json() const;
};

struct MetricsSnapshot {
  std::vector<std::pair<std::string, std::uint64_t>> routed_by_model;  // registry order
  std::uint64_t routed_total = 0;
  std::uint64_t route_requests = 0;
  std::uint64_t generate_requests = 0;
  std::uint64_t backend_errors = 0;
  std::uint64_t backend_timeouts = 0;
  std::uint64_t failovers = 0;
  std::uint64_t rejected = 0;      // 503 from the admission gate
  std::uint64_t bad_requests = 0;  // 400
  std::uint64_t backend_calls = 0;
  double latency_p50_ms = 0.0;
  double latency_p95_ms = 0.0;
  std::uint64_t in_flight = 0;

  /// Prometheus-style text exposition.
  std::string to_text() const;
};

/// HTTP routing service. Endpoints: POST /route, POST /generate, GET /healthz,
/// GET /metrics, POST /admin/reload.
class Gateway {
 public:
  /// Loads the checkpoint; throws CheckpointError or DataError if it cannot.
  explicit Gateway(GatewayConfig config, std::shared_ptr<BackendClient> client = nullptr);
  ~Gateway();

  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  /// Binds and starts serving on a background thread. Throws std::runtime_error on bind failure.
  void start();
  /// Stops admitting requests, waits for in-flight ones (up to drain_timeout), then closes the listener.
  void shutdown(std::chrono::milliseconds drain_timeout = std::chrono::seconds(30));
  /// Blocks until shutdown() completes.
  void wait();

  int port() const noexcept { return bound_port_; }
  bool running() const noexcept { return running_.load(); }

  std::shared_ptr<const RouterModel> model() const;
  /// Atomically swaps in a new checkpoint; in-flight requests keep the old one.
  void reload(const std::filesystem::path& checkpoint_path);

  MetricsSnapshot metrics_snapshot() const;

 private:
  struct Counters;

  void install_routes();
  void check_endpoints(const RouterModel& model) const;
  std::string endpoint_for(const RouterModel& model, const std::string& model_id) const;
  void append_log(const RouteRecord& record);
  void record_latency(double ms);

  GatewayConfig config_;
  std::shared_ptr<BackendClient> client_;
  std::unique_ptr<httplib::Server> server_;
  std::thread listener_;

  mutable std::mutex model_mutex_;
  std::shared_ptr<const RouterModel> model_;

  std::unique_ptr<Counters> counters_;
  std::atomic<std::uint64_t> in_flight_{0};
  std::atomic<std::uint64_t> next_request_{1};
  std::atomic<bool> draining_{false};
  std::atomic<bool> running_{false};
  int bound_port_ = 0;

  mutable std::mutex latency_mutex_;
  std::vector<double> latencies_;

  std::mutex log_mutex_;
  std::ofstream log_;

  std::mutex lifecycle_mutex_;
};

/// In-process backend implementing the backend protocol: replies
/// {"text": stub_response(model_id, query), "model_id": model_id}.
class StubBackend {
 public:
  struct Options {
    std::string model_id;
    std::chrono::milliseconds delay{0};
    bool fail = false;  // answer 500 to every request
  };

  explicit StubBackend(Options options);
  ~StubBackend();

  StubBackend(const StubBackend&) = delete;
  StubBackend& operator=(const StubBackend&) = delete;

  /// Binds 127.0.0.1:port (0 = any free port) and returns the bound port.
  int start(int port = 0);
  void stop();

  std::string url() const;
  std::uint64_t hits() const noexcept { return hits_.load(); }

 private:
  Options options_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  std::atomic<std::uint64_t> hits_{0};
  int port_ = 0;
};

}  // namespace expertroute
