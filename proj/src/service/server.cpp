#include "robustsyn/service/server.hpp"

#include <httplib.h>

#include <CLI11.hpp>

#include <csignal>
#include <iostream>

#include "robustsyn/cli/commands.hpp"
#include "robustsyn/data/image_io.hpp"
#include "robustsyn/service/codec.hpp"

namespace robustsyn::service {

using nlohmann::json;
namespace fs = std::filesystem;

ServerConfig ServerConfig::load(const fs::path& path, ModelRegistry& registry) {
  json j;
  try {
    j = json::parse(read_file_bytes(path));
  } catch (const json::exception& e) {
    throw FormatError("malformed service config " + path.string() + ": " + e.what());
  }
  ServerConfig c;
  const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
  try {
    c.host = j.value("host", c.host);
    c.port = j.value("port", c.port);
    c.workers = j.value("workers", c.workers);
    c.frame_capacity = j.value("frame_capacity", c.frame_capacity);
    c.http_threads = j.value("http_threads", c.http_threads);
    if (j.contains("model_dir")) registry.load_directory(resolve(j["model_dir"]));
    for (const auto& [name, p] : j.value("models", json::object()).items()) registry.load_model(name, resolve(p));
    for (const auto& [name, p] : j.value("seeds", json::object()).items()) registry.load_seeds(name, resolve(p));
  } catch (const json::exception& e) {
    throw FormatError("bad field in service config: " + std::string(e.what()));
  }
  return c;
}

namespace {

json frame_json(const Frame& f) { return {{"step", f.step}, {"value", f.value}, {"image", encode_image(f.image)}}; }

json status_json(const JobStatus& s) {
  return {{"schema", kSchemaVersion},
          {"id", s.id},
          {"task", to_string(s.task)},
          {"state", to_string(s.state)},
          {"cancelled", s.cancelled},
          {"error", s.error},
          {"steps", s.steps},
          {"latest_frame", s.latest ? frame_json(*s.latest) : json(nullptr)},
          {"created", s.created},
          {"started", s.started},
          {"finished", s.finished}};
}

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void error_reply(httplib::Response& res, int status, const std::string& message) {
  reply(res, status, {{"schema", kSchemaVersion}, {"error", message}});
}

json parse_body(const httplib::Request& req) {
  try {
    return json::parse(req.body);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("request body is not valid JSON: ") + e.what());
  }
}

}  // namespace

Server::Server(const ModelRegistry& registry, ServerConfig config)
    : registry_(registry), config_(std::move(config)),
      jobs_(std::make_unique<JobManager>(registry_, config_.workers, config_.frame_capacity)),
      sessions_(std::make_unique<SessionManager>(*jobs_)), http_(std::make_unique<httplib::Server>()) {
  const int threads = config_.http_threads;
  http_->new_task_queue = [threads] { return new httplib::ThreadPool(static_cast<std::size_t>(threads)); };
  routes();
}

Server::~Server() {
  stop();
  // Jobs reference sessions through weak pointers only, but their callbacks
  // must not outlive the session manager.
  jobs_.reset();
  sessions_.reset();
}

void Server::routes() {
  auto guarded = [](auto handler) {
    return [handler](const httplib::Request& req, httplib::Response& res) {
      try {
        handler(req, res);
      } catch (const InvalidArgument& e) {
        error_reply(res, 400, e.what());
      } catch (const ShapeError& e) {
        error_reply(res, 400, e.what());
      } catch (const std::exception& e) {
        error_reply(res, 500, e.what());
      }
    };
  };

  http_->Get("/v1/health", guarded([](const httplib::Request&, httplib::Response& res) {
    reply(res, 200, {{"schema", kSchemaVersion}, {"status", "ok"}});
  }));

  http_->Get("/v1/models", guarded([this](const httplib::Request&, httplib::Response& res) {
    auto d = registry_.describe();
    d["schema"] = kSchemaVersion;
    reply(res, 200, d);
  }));

  http_->Post("/v1/jobs", guarded([this](const httplib::Request& req, httplib::Response& res) {
    JobSpec spec = JobSpec::from_json(parse_body(req));
    validate_job(spec, registry_);
    const std::string id = jobs_->submit(std::move(spec));
    reply(res, 201, {{"schema", kSchemaVersion}, {"id", id}, {"state", "queued"}});
  }));

  http_->Get(R"(/v1/jobs/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
    auto s = jobs_->status(req.matches[1]);
    if (!s) return error_reply(res, 404, "unknown job");
    json body = status_json(*s);
    auto out = jobs_->output(req.matches[1]);
    body["output"] = out ? encode_image(*out) : json(nullptr);
    reply(res, 200, body);
  }));

  http_->Get(R"(/v1/jobs/([^/]+)/frames)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    int from = 0;
    if (req.has_param("from")) {
      try {
        from = std::stoi(req.get_param_value("from"));
      } catch (const std::exception&) {
        throw InvalidArgument("'from' must be an integer");
      }
    }
    auto b = jobs_->frames(req.matches[1], from);
    if (!b) return error_reply(res, 404, "unknown job");
    json frames = json::array();
    for (const auto& f : b->frames) frames.push_back(frame_json(f));
    const int next = b->frames.empty() ? from : b->frames.back().step + 1;
    reply(res, 200,
          {{"schema", kSchemaVersion},
           {"state", to_string(b->state)},
           {"frames", frames},
           {"gap", b->gap},
           {"dropped", b->dropped},
           {"next", next}});
  }));

  http_->Delete(R"(/v1/jobs/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
    switch (jobs_->cancel(req.matches[1])) {
      case CancelResult::not_found: return error_reply(res, 404, "unknown job");
      case CancelResult::already_finished: return error_reply(res, 409, "job already finished");
      case CancelResult::cancelled: break;
    }
    reply(res, 200, {{"schema", kSchemaVersion}, {"id", std::string(req.matches[1])}, {"cancel_requested", true}});
  }));

  http_->Post("/v1/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const json body = req.body.empty() ? json::object() : parse_body(req);
    Image canvas;
    if (body.contains("image")) {
      canvas = decode_image(body["image"]);
    } else {
      int c = body.value("channels", 0), h = body.value("height", 0), w = body.value("width", 0);
      if (body.contains("model")) {
        const auto& s = registry_.model(body["model"].get<std::string>()).spec();
        c = s.channels, h = s.height, w = s.width;
      }
      if (c < 1 || h < 1 || w < 1) throw InvalidArgument("session needs an 'image', a 'model', or channels/height/width");
      const double fill = body.value("fill", 0.5);
      if (!(fill >= 0 && fill <= 1)) throw InvalidArgument("fill must be in [0, 1]");
      canvas = Image(c, h, w, static_cast<float>(fill));
    }
    const std::string id = sessions_->create(std::move(canvas));
    reply(res, 201, {{"schema", kSchemaVersion}, {"id", id}});
  }));

  http_->Post(R"(/v1/sessions/([^/]+)/apply)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const std::string sid = req.matches[1];
    auto view = sessions_->view(sid);
    if (!view) return error_reply(res, 404, "unknown session");
    json body = parse_body(req);
    if (body.is_object()) body.erase("image");
    JobSpec spec = JobSpec::from_json(body, false);
    spec.image = view->canvas;
    if (spec.mask) check_mask(*spec.mask, *spec.image);
    validate_job(spec, registry_);
    std::string job;
    switch (sessions_->apply(sid, std::move(spec), &job)) {
      case SessionError::not_found: return error_reply(res, 404, "unknown session");
      case SessionError::busy: return error_reply(res, 409, "session already has a job in flight");
      default: break;
    }
    reply(res, 202, {{"schema", kSchemaVersion}, {"session", sid}, {"job", job}});
  }));

  http_->Post(R"(/v1/sessions/([^/]+)/undo)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const std::string sid = req.matches[1];
    switch (sessions_->undo(sid)) {
      case SessionError::not_found: return error_reply(res, 404, "unknown session");
      case SessionError::busy: return error_reply(res, 409, "session has a job in flight");
      case SessionError::nothing_to_undo: return error_reply(res, 409, "nothing to undo");
      case SessionError::none: break;
    }
    auto v = sessions_->view(sid);
    reply(res, 200, {{"schema", kSchemaVersion}, {"image", encode_image(v->canvas)}, {"undo_depth", v->undo_depth}});
  }));

  http_->Get(R"(/v1/sessions/([^/]+)/canvas)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    auto v = sessions_->view(req.matches[1]);
    if (!v) return error_reply(res, 404, "unknown session");
    reply(res, 200,
          {{"schema", kSchemaVersion},
           {"image", encode_image(v->canvas)},
           {"history", v->history},
           {"jobs", v->job_ids},
           {"active_job", v->active_job.empty() ? json(nullptr) : json(v->active_job)},
           {"undo_depth", v->undo_depth}});
  }));
}

int Server::start() {
  if (config_.port == 0) {
    port_ = http_->bind_to_any_port(config_.host);
  } else {
    if (!http_->bind_to_port(config_.host, config_.port)) {
      throw IoError("cannot bind " + config_.host + ":" + std::to_string(config_.port));
    }
    port_ = config_.port;
  }
  if (port_ <= 0) throw IoError("cannot bind " + config_.host);
  thread_ = std::thread([this] { http_->listen_after_bind(); });
  http_->wait_until_ready();
  return port_;
}

void Server::run_blocking() {
  if (!http_->bind_to_port(config_.host, config_.port)) {
    throw IoError("cannot bind " + config_.host + ":" + std::to_string(config_.port));
  }
  port_ = config_.port;
  http_->listen_after_bind();
}

void Server::stop() {
  if (http_) http_->stop();
  if (thread_.joinable()) thread_.join();
}

namespace {
Server* g_server = nullptr;
void on_signal(int) {
  if (g_server) g_server->stop();
}
}  // namespace

int serve_main(const std::vector<std::string>& args) {
  CLI::App app{"Serve synthesis jobs over HTTP", "robustsyn serve"};
  std::string config_path, model_dir, host = "127.0.0.1";
  int port = 8080, workers = 2;
  std::size_t frames = 64;
  app.add_option("--config", config_path, "Service config file (JSON)");
  app.add_option("--model-dir", model_dir, "Directory of *.rsm checkpoints and *.rss seed files");
  auto* host_opt = app.add_option("--host", host, "Bind address")->capture_default_str();
  auto* port_opt = app.add_option("--port", port, "Port")->capture_default_str();
  auto* workers_opt = app.add_option("--workers", workers, "Job worker threads")->capture_default_str();
  auto* frames_opt = app.add_option("--frame-capacity", frames, "Frames kept per job")->capture_default_str();
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? cli::kOk : cli::kUsageError;
  }
  try {
    ModelRegistry registry;
    ServerConfig config;
    if (!config_path.empty()) config = ServerConfig::load(config_path, registry);
    if (model_dir.empty()) {
      if (const char* env = std::getenv(cli::kModelDirEnv); env && *env && config_path.empty()) model_dir = env;
    }
    if (!model_dir.empty()) registry.load_directory(model_dir);
    if (host_opt->count()) config.host = host;
    if (port_opt->count()) config.port = port;
    if (workers_opt->count()) config.workers = workers;
    if (frames_opt->count()) config.frame_capacity = frames;
    Server server(registry, config);
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cout << "serving " << registry.describe()["models"].size() << " model(s) on " << config.host << ":"
              << config.port << std::endl;
    server.run_blocking();
    g_server = nullptr;
    return cli::kOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::exit_code_for(e);
  }
}

}  // namespace robustsyn::service
