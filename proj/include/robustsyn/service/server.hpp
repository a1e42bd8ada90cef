#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "robustsyn/service/jobs.hpp"

namespace httplib {
class Server;
}

namespace robustsyn::service {

struct ServerConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  int workers = 2;
  std::size_t frame_capacity = 64;
  int http_threads = 32;

  // Config file (JSON):
  //   {"host": "...", "port": 8080, "workers": 2, "frame_capacity": 64,
  //    "model_dir": "dir", "models": {"name": "path.rsm"}, "seeds": {"name": "path.rss"}}
  // Relative paths are resolved against the config file's directory.
  static ServerConfig load(const std::filesystem::path& path, ModelRegistry& registry);
};

// HTTP front end over a JobManager and SessionManager. The endpoint schema is
// documented in docs/service_schema.md.
class Server {
 public:
  Server(const ModelRegistry& registry, ServerConfig config);
  ~Server();

  // Binds and serves on a background thread; returns the bound port.
  int start();
  void stop();
  int port() const { return port_; }
  // Binds and serves on the calling thread until stop() is called.
  void run_blocking();

  JobManager& jobs() { return *jobs_; }
  SessionManager& sessions() { return *sessions_; }

 private:
  void routes();

  const ModelRegistry& registry_;
  ServerConfig config_;
  std::unique_ptr<JobManager> jobs_;
  std::unique_ptr<SessionManager> sessions_;
  std::unique_ptr<httplib::Server> http_;
  std::thread thread_;
  int port_ = 0;
};

// `robustsyn serve` entry point; args exclude "serve".
int serve_main(const std::vector<std::string>& args);

}  // namespace robustsyn::service
