// Stand-alone backend for local gateway runs: answers POST {"query"} with
// {"text": "<model_id>:<query hash>"}.

#include <csignal>
#include <cstdlib>
#include <iostream>
#include <string>

#include <pthread.h>

#include "CLI11.hpp"
#include "expertroute/gateway.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Stub LLM backend for the expertroute gateway"};
  std::string model_id;
  int port = 0;
  int delay_ms = 0;
  bool fail = false;
  app.add_option("--model-id", model_id, "Model id echoed in every reply")->required();
  app.add_option("--port", port, "Port to bind on 127.0.0.1 (0 picks one)")->check(CLI::Range(0, 65535));
  app.add_option("--delay-ms", delay_ms, "Artificial latency per request")->check(CLI::NonNegativeNumber);
  app.add_flag("--fail", fail, "Answer every request with HTTP 500");
  CLI11_PARSE(app, argc, argv);

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  expertroute::StubBackend backend({model_id, std::chrono::milliseconds(delay_ms), fail});
  try {
    const int bound = backend.start(port);
    std::cout << "stub backend " << model_id << " listening on 127.0.0.1:" << bound << std::endl;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  int sig = 0;
  sigwait(&signals, &sig);
  backend.stop();
  return 0;
}
