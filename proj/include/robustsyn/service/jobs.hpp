#pragma once

#include <atomic>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "robustsyn/models/classifier.hpp"
#include "robustsyn/synthesis/tasks.hpp"

namespace robustsyn::service {

// Models and seed models by name. Loaded once, then shared read-only by all
// jobs.
class ModelRegistry {
 public:
  void add_model(const std::string& name, Classifier model);
  void add_seeds(const std::string& name, SeedModelSet seeds);
  void load_model(const std::string& name, const std::filesystem::path& path);
  void load_seeds(const std::string& name, const std::filesystem::path& path);
  // Registers every *.rsm checkpoint (model name = file stem) and every *.rss
  // seed file in the directory.
  void load_directory(const std::filesystem::path& dir);

  const Classifier& model(const std::string& name) const;  // InvalidArgument if unknown
  const SeedModelSet& seeds(const std::string& name) const;
  bool has_model(const std::string& name) const { return models_.count(name) > 0; }
  nlohmann::json describe() const;

 private:
  std::map<std::string, std::shared_ptr<const Classifier>> models_;
  std::map<std::string, std::shared_ptr<const SeedModelSet>> seeds_;
};

// Parameters of one synthesis job. JSON field names are the schema's.
struct JobSpec {
  enum class Task { generate, sketch, inpaint, translate, superres, paint };
  Task task = Task::paint;
  std::string model;
  std::string seeds;        // generate only
  int target = 0;           // class (generate, sketch, translate), feature (paint)
  int label = -1;           // inpaint / superres class, -1 = model prediction
  double eps = 0;
  int steps = 0;
  double step_size = 0;
  double lambda = 0;        // inpaint / paint
  int factor = 1;           // superres
  std::uint64_t seed = 0;   // generate
  std::optional<Image> image;
  std::optional<Image> mask;
  int frame_stride = 10;

  // Unset eps / steps / step_size / lambda / factor come from the task's desk
  // preset (or the named "preset"). Throws InvalidArgument on any violation.
  static JobSpec from_json(const nlohmann::json& j, bool image_required = true);
  nlohmann::json to_json() const;
};

std::string to_string(JobSpec::Task t);

// Checks a spec against the registry: model and seeds exist, class or feature
// index in range, image and mask shapes match the model. InvalidArgument
// otherwise.
void validate_job(const JobSpec& spec, const ModelRegistry& registry);

// Runs a job synchronously on the calling thread.
SynthesisResult run_job(const JobSpec& spec, const ModelRegistry& registry, const FrameObserver& observer = {});

enum class JobState { queued, running, done, failed };
std::string to_string(JobState s);

struct Frame {
  int step = 0;
  double value = 0;
  Image image;
};

struct JobStatus {
  std::string id;
  JobSpec::Task task;
  JobState state = JobState::queued;
  bool cancelled = false;
  std::string error;
  int steps = 0;
  std::optional<Frame> latest;
  double created = 0, started = 0, finished = 0;  // seconds since the manager started
};

struct FrameBatch {
  std::vector<Frame> frames;  // step >= from, increasing
  bool gap = false;           // frames with step >= from were dropped from the buffer
  int dropped = 0;
  JobState state = JobState::queued;
};

enum class CancelResult { cancelled, not_found, already_finished };

// Bounded worker pool executing jobs. Each job's PGD loop runs on one worker
// thread with single-threaded kernels.
class JobManager {
 public:
  using DoneCallback = std::function<void(const std::string& id, JobState state, const Image* output)>;

  JobManager(const ModelRegistry& registry, int workers = 2, std::size_t frame_capacity = 64);
  ~JobManager();
  JobManager(const JobManager&) = delete;
  JobManager& operator=(const JobManager&) = delete;

  std::string submit(JobSpec spec, DoneCallback on_done = {});
  std::optional<JobStatus> status(const std::string& id) const;
  std::optional<FrameBatch> frames(const std::string& id, int from) const;
  std::optional<Image> output(const std::string& id) const;
  CancelResult cancel(const std::string& id);
  // Blocks until the job is done or failed; false for unknown ids.
  bool wait(const std::string& id) const;

 private:
  struct Job;
  void worker_loop();
  void execute(Job& job);
  std::shared_ptr<Job> find(const std::string& id) const;
  double now() const;

  const ModelRegistry& registry_;
  std::size_t frame_capacity_;
  mutable std::mutex mu_;
  std::condition_variable queue_cv_;
  std::deque<std::shared_ptr<Job>> queue_;
  std::map<std::string, std::shared_ptr<Job>> jobs_;
  std::uint64_t next_id_ = 1;
  bool stopping_ = false;
  std::vector<std::thread> workers_;
  std::chrono::steady_clock::time_point epoch_;
};

enum class SessionError { none, not_found, busy, nothing_to_undo };

// Iterative editing: every applied job starts from the current canvas and, on
// success, replaces it. Undo restores the previous canvas exactly.
class SessionManager {
 public:
  explicit SessionManager(JobManager& jobs) : jobs_(jobs) {}

  std::string create(Image canvas);
  // On success returns the job id.
  SessionError apply(const std::string& id, JobSpec spec, std::string* job_id);
  SessionError undo(const std::string& id);

  struct View {
    Image canvas;
    std::vector<nlohmann::json> history;  // job specs applied to reach the canvas (no images)
    std::vector<std::string> job_ids;
    std::string active_job;
    std::size_t undo_depth = 0;
  };
  std::optional<View> view(const std::string& id) const;

 private:
  struct Session {
    mutable std::mutex mu;
    Image canvas;
    std::vector<Image> undo_stack;
    std::vector<nlohmann::json> history;
    std::vector<std::string> job_ids;
    std::string active_job;
  };
  std::shared_ptr<Session> find(const std::string& id) const;

  JobManager& jobs_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t next_id_ = 1;
};

}  // namespace robustsyn::service
