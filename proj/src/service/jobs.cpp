#include "robustsyn/service/jobs.hpp"

#include <algorithm>
#include <cmath>

#include "robustsyn/cli/presets.hpp"
#include "robustsyn/models/checkpoint.hpp"
#include "robustsyn/service/codec.hpp"
#include "robustsyn/tensor/kernels.hpp"

namespace robustsyn::service {

using nlohmann::json;

// ---- registry ---------------------------------------------------------------

void ModelRegistry::add_model(const std::string& name, Classifier model) {
  model.set_trainable(false);
  models_[name] = std::make_shared<const Classifier>(std::move(model));
}

void ModelRegistry::add_seeds(const std::string& name, SeedModelSet seeds) {
  seeds_[name] = std::make_shared<const SeedModelSet>(std::move(seeds));
}

void ModelRegistry::load_model(const std::string& name, const std::filesystem::path& path) {
  add_model(name, load_checkpoint(path));
}

void ModelRegistry::load_seeds(const std::string& name, const std::filesystem::path& path) {
  add_seeds(name, load_seed_models(path));
}

void ModelRegistry::load_directory(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("model directory not found: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& p : files) {
    if (p.extension() == ".rsm") load_model(p.stem().string(), p);
    if (p.extension() == ".rss") load_seeds(p.stem().string(), p);
  }
}

const Classifier& ModelRegistry::model(const std::string& name) const {
  auto it = models_.find(name);
  if (it == models_.end()) throw InvalidArgument("unknown model '" + name + "'");
  return *it->second;
}

const SeedModelSet& ModelRegistry::seeds(const std::string& name) const {
  auto it = seeds_.find(name);
  if (it == seeds_.end()) throw InvalidArgument("unknown seed model '" + name + "'");
  return *it->second;
}

json ModelRegistry::describe() const {
  json models = json::array();
  for (const auto& [name, m] : models_) {
    const auto& s = m->spec();
    models.push_back({{"name", name},
                      {"channels", s.channels},
                      {"height", s.height},
                      {"width", s.width},
                      {"num_classes", s.num_classes},
                      {"representation_width", s.representation_width()},
                      {"epsilon", m->metadata().epsilon},
                      {"norm", m->metadata().norm}});
  }
  json seeds = json::array();
  for (const auto& [name, s] : seeds_) seeds.push_back({{"name", name}, {"classes", s->models.size()}});
  return {{"models", models}, {"seeds", seeds}};
}

// ---- job spec ---------------------------------------------------------------

std::string to_string(JobSpec::Task t) {
  switch (t) {
    case JobSpec::Task::generate: return "generate";
    case JobSpec::Task::sketch: return "sketch";
    case JobSpec::Task::inpaint: return "inpaint";
    case JobSpec::Task::translate: return "translate";
    case JobSpec::Task::superres: return "superres";
    case JobSpec::Task::paint: return "paint";
  }
  return "?";
}

namespace {

JobSpec::Task parse_task(const std::string& s) {
  for (auto t : {JobSpec::Task::generate, JobSpec::Task::sketch, JobSpec::Task::inpaint, JobSpec::Task::translate,
                 JobSpec::Task::superres, JobSpec::Task::paint}) {
    if (to_string(t) == s) return t;
  }
  throw InvalidArgument("unknown task '" + s + "'");
}

template <class T>
T field(const json& j, const char* key, const json& preset, const char* preset_key, T fallback) {
  try {
    if (j.contains(key)) return j.at(key).get<T>();
    if (preset.contains(preset_key)) return preset.at(preset_key).get<T>();
  } catch (const json::exception&) {
    throw InvalidArgument(std::string("field '") + key + "' has the wrong type");
  }
  return fallback;
}

}  // namespace

JobSpec JobSpec::from_json(const json& j, bool image_required) {
  if (!j.is_object()) throw InvalidArgument("job spec must be a JSON object");
  if (j.contains("schema") && j["schema"] != kSchemaVersion) throw InvalidArgument("unsupported schema version");
  JobSpec s;
  if (!j.contains("task") || !j["task"].is_string()) throw InvalidArgument("job spec needs a string 'task'");
  s.task = parse_task(j["task"]);
  if (!j.contains("model") || !j["model"].is_string()) throw InvalidArgument("job spec needs a string 'model'");
  s.model = j["model"];
  const std::string preset_name = j.value("preset", std::string());
  const auto& preset = preset_name.empty() ? cli::default_preset(to_string(s.task))
                                           : cli::find_preset(preset_name, to_string(s.task));
  const json& pv = preset.values;
  const json none = json::object();
  s.eps = field<double>(j, "eps", pv, "eps", 0.0);
  s.steps = field<int>(j, "steps", pv, "steps", 0);
  s.step_size = field<double>(j, "step_size", pv, "step-size", 0.1);
  s.lambda = field<double>(j, "lambda", pv, "lambda", 0.0);
  s.factor = field<int>(j, "factor", pv, "factor", 1);
  s.frame_stride = field<int>(j, "frame_stride", none, "", 10);
  s.seed = field<std::uint64_t>(j, "seed", none, "", 0);
  s.label = field<int>(j, "label", none, "", -1);
  s.target = field<int>(j, "target", none, "", field<int>(j, "class", none, "", field<int>(j, "feature", none, "", 0)));
  s.seeds = field<std::string>(j, "seeds", none, "", s.model);
  if (!(s.eps >= 0) || !std::isfinite(s.eps)) throw InvalidArgument("eps must be finite and >= 0");
  if (s.steps < 0) throw InvalidArgument("steps must be >= 0");
  if (!(s.step_size >= 0) || !std::isfinite(s.step_size)) throw InvalidArgument("step_size must be finite and >= 0");
  if (!(s.lambda >= 0) || !std::isfinite(s.lambda)) throw InvalidArgument("lambda must be finite and >= 0");
  if (s.factor < 1) throw InvalidArgument("factor must be >= 1");
  if (s.frame_stride < 1) throw InvalidArgument("frame_stride must be >= 1");
  if (j.contains("image")) s.image = decode_image(j["image"]);
  if (j.contains("mask")) s.mask = decode_image(j["mask"]);
  if (s.task != Task::generate && image_required && !s.image) throw InvalidArgument("job needs an 'image'");
  if ((s.task == Task::inpaint || s.task == Task::paint) && !s.mask) throw InvalidArgument("job needs a 'mask'");
  if (s.mask && s.image) check_mask(*s.mask, *s.image);
  return s;
}

json JobSpec::to_json() const {
  json j{{"schema", kSchemaVersion},
         {"task", to_string(task)},
         {"model", model},
         {"target", target},
         {"label", label},
         {"eps", eps},
         {"steps", steps},
         {"step_size", step_size},
         {"lambda", lambda},
         {"factor", factor},
         {"seed", seed},
         {"frame_stride", frame_stride}};
  if (task == Task::generate) j["seeds"] = seeds;
  if (image) j["image"] = encode_image(*image, false);
  if (mask) j["mask"] = encode_image(*mask, false);
  return j;
}

void validate_job(const JobSpec& s, const ModelRegistry& registry) {
  const Classifier& model = registry.model(s.model);
  const auto& ms = model.spec();
  auto in_range = [](int v, int n, const char* what) {
    if (v < 0 || v >= n) {
      throw InvalidArgument(std::string(what) + " " + std::to_string(v) + " out of range [0, " + std::to_string(n) + ")");
    }
  };
  switch (s.task) {
    case JobSpec::Task::paint: in_range(s.target, ms.representation_width(), "feature"); break;
    case JobSpec::Task::inpaint:
    case JobSpec::Task::superres:
      if (s.label >= 0) in_range(s.label, ms.num_classes, "label");
      break;
    default: in_range(s.target, ms.num_classes, "class"); break;
  }
  if (s.task == JobSpec::Task::generate) {
    registry.seeds(s.seeds).for_class(s.target);
    return;
  }
  if (!s.image) return;
  const int f = s.task == JobSpec::Task::superres ? s.factor : 1;
  if (s.image->channels != ms.channels || s.image->height * f != ms.height || s.image->width * f != ms.width) {
    throw InvalidArgument("image shape does not match model '" + s.model + "'");
  }
}

SynthesisResult run_job(const JobSpec& s, const ModelRegistry& registry, const FrameObserver& observer) {
  const Classifier& model = registry.model(s.model);
  PgdSchedule sched;
  sched.steps = s.steps;
  sched.step_size = s.step_size;
  sched.validate();
  auto one = [](const std::optional<Image>& im, const char* what) {
    if (!im) throw InvalidArgument(std::string("job needs an '") + what + "'");
    return std::vector<Image>{*im};
  };
  std::optional<std::vector<int>> label;
  if (s.label >= 0) label = std::vector<int>{s.label};
  switch (s.task) {
    case JobSpec::Task::generate:
      return generate(model, registry.seeds(s.seeds).for_class(s.target), s.target, s.eps, sched, 1, s.seed, observer);
    case JobSpec::Task::sketch:
      return sketch_to_image(model, one(s.image, "image"), s.target, s.eps, sched, observer);
    case JobSpec::Task::inpaint:
      return inpaint(model, one(s.image, "image"), one(s.mask, "mask"), label, s.lambda, sched, s.eps, observer);
    case JobSpec::Task::translate:
      return translate(model, one(s.image, "image"), s.target, s.eps, sched, observer);
    case JobSpec::Task::superres:
      return superres(model, one(s.image, "image"), s.factor, label, s.eps, sched, observer);
    case JobSpec::Task::paint:
      return feature_paint(model, one(s.image, "image"), one(s.mask, "mask"), s.target, s.lambda, sched, s.eps,
                           observer);
  }
  throw InvalidArgument("unknown task");
}

std::string to_string(JobState s) {
  switch (s) {
    case JobState::queued: return "queued";
    case JobState::running: return "running";
    case JobState::done: return "done";
    case JobState::failed: return "failed";
  }
  return "?";
}

// ---- job manager ------------------------------------------------------------

struct JobManager::Job {
  std::string id;
  JobSpec spec;
  DoneCallback on_done;
  mutable std::mutex mu;
  std::condition_variable done_cv;
  std::atomic<bool> cancel_requested{false};
  JobState state = JobState::queued;
  bool cancelled = false;
  std::string error;
  std::deque<Frame> frames;
  int max_evicted_step = -1;
  int dropped = 0;
  std::optional<Image> output;
  double created = 0, started = 0, finished = 0;
};

JobManager::JobManager(const ModelRegistry& registry, int workers, std::size_t frame_capacity)
    : registry_(registry), frame_capacity_(std::max<std::size_t>(frame_capacity, 1)),
      epoch_(std::chrono::steady_clock::now()) {
  if (workers < 1) throw InvalidArgument("worker count must be >= 1");
  for (int i = 0; i < workers; ++i) workers_.emplace_back([this] { worker_loop(); });
}

JobManager::~JobManager() {
  {
    std::lock_guard lock(mu_);
    stopping_ = true;
    for (auto& [id, job] : jobs_) job->cancel_requested = true;
  }
  queue_cv_.notify_all();
  for (auto& t : workers_) t.join();
}

double JobManager::now() const {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_).count();
}

std::string JobManager::submit(JobSpec spec, DoneCallback on_done) {
  auto job = std::make_shared<Job>();
  job->spec = std::move(spec);
  job->on_done = std::move(on_done);
  job->created = now();
  std::lock_guard lock(mu_);
  if (stopping_) throw Error("job manager is shutting down");
  job->id = "job-" + std::to_string(next_id_++);
  jobs_[job->id] = job;
  queue_.push_back(job);
  queue_cv_.notify_one();
  return job->id;
}

std::shared_ptr<JobManager::Job> JobManager::find(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = jobs_.find(id);
  return it == jobs_.end() ? nullptr : it->second;
}

void JobManager::worker_loop() {
  kernels::set_max_threads(1);
  for (;;) {
    std::shared_ptr<Job> job;
    {
      std::unique_lock lock(mu_);
      queue_cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
      if (queue_.empty()) return;
      job = queue_.front();
      queue_.pop_front();
    }
    execute(*job);
  }
}

void JobManager::execute(Job& job) {
  {
    std::lock_guard lock(job.mu);
    if (job.state != JobState::queued) return;  // cancelled while queued
    job.state = JobState::running;
    job.started = now();
  }
  const int steps = job.spec.steps, stride = job.spec.frame_stride;
  auto observer = [&](int step, const Tensor& x, double value) {
    if (job.cancel_requested) return false;
    if (step % stride == 0 || step == steps) {
      Frame f{step, value, from_batch(x).front()};
      std::lock_guard lock(job.mu);
      job.frames.push_back(std::move(f));
      if (job.frames.size() > frame_capacity_) {
        job.max_evicted_step = job.frames.front().step;
        ++job.dropped;
        job.frames.pop_front();
      }
    }
    return !job.cancel_requested;
  };
  JobState final_state;
  std::optional<Image> output;
  std::string error;
  bool cancelled = false;
  try {
    SynthesisResult r = run_job(job.spec, registry_, observer);
    if (r.cancelled || job.cancel_requested) {
      final_state = JobState::failed;
      cancelled = true;
      error = "cancelled";
    } else {
      final_state = JobState::done;
      output = r.images.front();
    }
  } catch (const std::exception& e) {
    final_state = JobState::failed;
    error = e.what();
  }
  {
    std::lock_guard lock(job.mu);
    job.state = final_state;
    job.cancelled = cancelled;
    job.error = error;
    job.output = output;
    job.finished = now();
  }
  job.done_cv.notify_all();
  if (job.on_done) job.on_done(job.id, final_state, output ? &*output : nullptr);
}

std::optional<JobStatus> JobManager::status(const std::string& id) const {
  auto job = find(id);
  if (!job) return std::nullopt;
  std::lock_guard lock(job->mu);
  JobStatus s;
  s.id = job->id;
  s.task = job->spec.task;
  s.state = job->state;
  s.cancelled = job->cancelled;
  s.error = job->error;
  s.steps = job->spec.steps;
  if (!job->frames.empty()) s.latest = job->frames.back();
  s.created = job->created;
  s.started = job->started;
  s.finished = job->finished;
  return s;
}

std::optional<FrameBatch> JobManager::frames(const std::string& id, int from) const {
  auto job = find(id);
  if (!job) return std::nullopt;
  std::lock_guard lock(job->mu);
  FrameBatch b;
  b.state = job->state;
  for (const auto& f : job->frames)
    if (f.step >= from) b.frames.push_back(f);
  b.gap = job->max_evicted_step >= from;
  b.dropped = job->dropped;
  return b;
}

std::optional<Image> JobManager::output(const std::string& id) const {
  auto job = find(id);
  if (!job) return std::nullopt;
  std::lock_guard lock(job->mu);
  return job->output;
}

CancelResult JobManager::cancel(const std::string& id) {
  auto job = find(id);
  if (!job) return CancelResult::not_found;
  bool was_queued = false;
  {
    std::lock_guard lock(job->mu);
    if (job->state == JobState::done || job->state == JobState::failed) return CancelResult::already_finished;
    job->cancel_requested = true;
    if (job->state == JobState::queued) {
      was_queued = true;
      job->state = JobState::failed;
      job->cancelled = true;
      job->error = "cancelled";
      job->finished = now();
    }
  }
  if (was_queued) {
    {
      std::lock_guard lock(mu_);
      queue_.erase(std::remove_if(queue_.begin(), queue_.end(), [&](const auto& j) { return j.get() == job.get(); }),
                   queue_.end());
    }
    job->done_cv.notify_all();
    if (job->on_done) job->on_done(job->id, JobState::failed, nullptr);
  }
  return CancelResult::cancelled;
}

bool JobManager::wait(const std::string& id) const {
  auto job = find(id);
  if (!job) return false;
  std::unique_lock lock(job->mu);
  job->done_cv.wait(lock, [&] { return job->state == JobState::done || job->state == JobState::failed; });
  return true;
}

// ---- sessions ---------------------------------------------------------------

std::shared_ptr<SessionManager::Session> SessionManager::find(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

std::string SessionManager::create(Image canvas) {
  auto s = std::make_shared<Session>();
  s->canvas = std::move(canvas);
  std::lock_guard lock(mu_);
  const std::string id = "ses-" + std::to_string(next_id_++);
  sessions_[id] = s;
  return id;
}

SessionError SessionManager::apply(const std::string& id, JobSpec spec, std::string* job_id) {
  auto s = find(id);
  if (!s) return SessionError::not_found;
  std::lock_guard lock(s->mu);
  if (!s->active_job.empty()) return SessionError::busy;
  spec.image = s->canvas;
  JobSpec recorded = spec;
  recorded.image.reset();
  json entry = recorded.to_json();
  std::weak_ptr<Session> weak = s;
  const std::string jid = jobs_.submit(std::move(spec), [weak, entry](const std::string&, JobState state, const Image* out) {
    auto sess = weak.lock();
    if (!sess) return;
    std::lock_guard l(sess->mu);
    if (state == JobState::done && out) {
      sess->undo_stack.push_back(sess->canvas);
      sess->canvas = *out;
      sess->history.push_back(entry);
    }
    sess->active_job.clear();
  });
  s->active_job = jid;
  s->job_ids.push_back(jid);
  if (job_id) *job_id = jid;
  return SessionError::none;
}

SessionError SessionManager::undo(const std::string& id) {
  auto s = find(id);
  if (!s) return SessionError::not_found;
  std::lock_guard lock(s->mu);
  if (!s->active_job.empty()) return SessionError::busy;
  if (s->undo_stack.empty()) return SessionError::nothing_to_undo;
  s->canvas = std::move(s->undo_stack.back());
  s->undo_stack.pop_back();
  s->history.pop_back();
  return SessionError::none;
}

std::optional<SessionManager::View> SessionManager::view(const std::string& id) const {
  auto s = find(id);
  if (!s) return std::nullopt;
  std::lock_guard lock(s->mu);
  return View{s->canvas, s->history, s->job_ids, s->active_job, s->undo_stack.size()};
}

}  // namespace robustsyn::service
