#include "robustsyn/cli/commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <sstream>

#include "robustsyn/cli/manifest.hpp"
#include "robustsyn/cli/presets.hpp"
#include "robustsyn/data/image_io.hpp"
#include "robustsyn/data/transforms.hpp"
#include "robustsyn/models/checkpoint.hpp"
#include "robustsyn/robust/train.hpp"
#include "robustsyn/synthesis/metrics.hpp"
#include "robustsyn/synthesis/tasks.hpp"
#include "robustsyn/tensor/kernels.hpp"

namespace robustsyn::cli {

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const IoError*>(&e)) return kIoError;
  if (dynamic_cast<const FormatError*>(&e)) return kFormatError;
  if (dynamic_cast<const ShapeError*>(&e)) return kShapeError;
  if (dynamic_cast<const InvalidArgument*>(&e)) return kInvalidArgument;
  if (dynamic_cast<const NumericError*>(&e)) return kNumericError;
  return kInternalError;
}

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class T>
std::vector<std::string> render(const T& v) {
  if constexpr (std::is_same_v<T, double>) {
    return {format_double(v)};
  } else if constexpr (std::is_same_v<T, std::string>) {
    return {v};
  } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
    return v;
  } else {
    return {std::to_string(v)};
  }
}

std::vector<double> parse_double_list(const std::string& s, const char* what) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw InvalidArgument(std::string(what) + ": cannot parse '" + item + "' as a number");
    }
  }
  return out;
}

std::vector<int> parse_int_list(const std::string& s, const char* what) {
  std::vector<int> out;
  for (double v : parse_double_list(s, what)) {
    if (v != static_cast<int>(v)) throw InvalidArgument(std::string(what) + ": expected integers");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

// A subcommand plus everything needed to resolve its flags and write its
// manifest entry.
class Command {
 public:
  Command(CLI::App& app, const std::string& name, const std::string& help, bool has_presets)
      : name_(name), has_presets_(has_presets) {
    sub_ = app.add_subcommand(name, help);
    if (has_presets) sub_->add_option("--preset", preset_, "Named set of defaults (see README)");
    sub_->add_option("--manifest", manifest_path_, "Manifest file to append the run record to");
    flag("jobs", jobs_, "Worker threads for per-sample parallelism (0 = all cores)");
  }

  template <class T>
  CLI::Option* flag(const std::string& name, T& target, const std::string& help) {
    auto* opt = sub_->add_option("--" + name, target, help)->capture_default_str();
    flags_.push_back(Flag{name, opt, false, [&target] { return json(target); },
                          [&target](const json& j) { target = j.get<T>(); }, [&target] { return render(target); }});
    return opt;
  }

  template <class T>
  CLI::Option* positional(const std::string& name, T& target, const std::string& help) {
    auto* opt = sub_->add_option(name, target, help)->required();
    flags_.push_back(Flag{name, opt, true, [&target] { return json(target); },
                          [&target](const json& j) { target = j.get<T>(); }, [&target] { return render(target); }});
    return opt;
  }

  bool parsed() const { return sub_->parsed(); }
  const std::string& name() const { return name_; }

  // Fills flags that were not given from the preset and sets thread count.
  void resolve() {
    start_ = std::chrono::steady_clock::now();
    const Preset* preset = nullptr;
    if (has_presets_) {
      preset = preset_.empty() ? &default_preset(name_) : &find_preset(preset_, name_);
      preset_ = preset->name;
    }
    for (auto& f : flags_) {
      if (f.opt->count() > 0) {
        manifest_.provenance[f.name] = "flag";
      } else if (preset && preset->values.contains(f.name)) {
        try {
          f.set(preset->values.at(f.name));
        } catch (const json::exception& e) {
          throw Error("preset " + preset->name + " has a bad value for " + f.name + ": " + e.what());
        }
        manifest_.provenance[f.name] = preset->origin + ":" + preset->name;
      } else {
        manifest_.provenance[f.name] = "built-in";
      }
    }
    if (jobs_ < 0) throw InvalidArgument("--jobs must be >= 0");
    if (jobs_ > 0) kernels::set_max_threads(jobs_);
    jobs_ = kernels::max_threads();
  }

  // Records resolved values. Call after command-specific normalisation.
  void record() {
    manifest_.command = name_;
    manifest_.args = {name_};
    if (!preset_.empty()) manifest_.args.insert(manifest_.args.end(), {"--preset", preset_});
    manifest_.threads = jobs_;
    std::vector<std::string> positionals;
    for (auto& f : flags_) {
      manifest_.params[f.name] = f.get();
      auto values = f.render();
      if (f.positional) {
        positionals.insert(positionals.end(), values.begin(), values.end());
        continue;
      }
      if (values.empty() || (values.size() == 1 && values[0].empty())) continue;
      manifest_.args.push_back("--" + f.name);
      manifest_.args.insert(manifest_.args.end(), values.begin(), values.end());
    }
    manifest_.args.insert(manifest_.args.end(), positionals.begin(), positionals.end());
  }

  void add_input(const fs::path& p) { manifest_.inputs.push_back({p.string(), git_blob_hash_file(p)}); }
  void add_output(const fs::path& p) { manifest_.outputs.push_back({p.string(), git_blob_hash_file(p)}); }
  void set_checkpoint(const fs::path& p) { manifest_.checkpoint_hash = git_blob_hash_file(p); }
  json& metrics() { return manifest_.metrics; }

  // Writes the manifest entry next to the primary output unless --manifest
  // names a file.
  void finish(const fs::path& default_manifest) {
    manifest_.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    const fs::path path = manifest_path_.empty() ? default_manifest : fs::path(manifest_path_);
    append_manifest(path, manifest_);
  }

  std::function<void()> action;

 private:
  struct Flag {
    std::string name;
    CLI::Option* opt;
    bool positional;
    std::function<json()> get;
    std::function<void(const json&)> set;
    std::function<std::vector<std::string>()> render;
  };

  std::string name_;
  bool has_presets_;
  CLI::App* sub_ = nullptr;
  std::vector<Flag> flags_;
  std::string preset_;
  std::string manifest_path_;
  int jobs_ = 0;
  RunManifest manifest_;
  std::chrono::steady_clock::time_point start_;
};

fs::path resolve_model_file(const std::string& given, const char* what) {
  if (given.empty()) throw InvalidArgument(std::string("--") + what + " is required");
  fs::path p(given);
  if (fs::exists(p)) return p;
  if (p.is_relative()) {
    if (const char* dir = std::getenv(kModelDirEnv); dir && *dir) {
      fs::path q = fs::path(dir) / p;
      if (fs::exists(q)) return q;
    }
  }
  throw IoError(std::string(what) + " not found: " + given);
}

std::vector<fs::path> expand_inputs(const std::vector<std::string>& inputs) {
  std::vector<fs::path> out;
  for (const auto& s : inputs) {
    fs::path p(s);
    if (fs::is_directory(p)) {
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(p)) {
        const auto ext = e.path().extension();
        if (e.is_regular_file() && (ext == ".fif" || ext == ".png")) files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      out.insert(out.end(), files.begin(), files.end());
    } else if (fs::exists(p)) {
      out.push_back(p);
    } else {
      throw IoError("input not found: " + s);
    }
  }
  if (out.empty()) throw InvalidArgument("no input images");
  return out;
}

std::vector<Image> read_inputs(Command& cmd, const std::vector<fs::path>& paths) {
  std::vector<Image> out;
  for (const auto& p : paths) {
    out.push_back(read_image(p));
    cmd.add_input(p);
  }
  return out;
}

Classifier open_model(Command& cmd, std::string& path) {
  const fs::path p = resolve_model_file(path, "model");
  path = p.string();
  cmd.set_checkpoint(p);
  return load_checkpoint(p);
}

void write_images(Command& cmd, const fs::path& dir, const std::string& prefix, const std::vector<Image>& images,
                  bool png) {
  for (std::size_t i = 0; i < images.size(); ++i) {
    char name[64];
    std::snprintf(name, sizeof name, "%s_%03zu", prefix.c_str(), i);
    const fs::path fif = dir / (std::string(name) + ".fif");
    write_fif(images[i], fif);
    cmd.add_output(fif);
    if (png) {
      const fs::path pngp = dir / (std::string(name) + ".png");
      write_png(images[i], pngp);
      cmd.add_output(pngp);
    }
  }
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw InvalidArgument(std::string("--") + flag + " is required");
}

PgdSchedule schedule_of(int steps, double step_size) {
  PgdSchedule s;
  s.steps = steps;
  s.step_size = step_size;
  s.validate();
  return s;
}

// ---- dataset flags ----------------------------------------------------------

struct DataFlags {
  std::string dataset = "stripes-blobs";
  std::string format = "builtin";
  int samples = 1024;
  std::uint64_t data_seed = 0;
  int size = 32;
  double contrast = -1, noise = -1, cue = -1, cue_conflict = -1;
  std::string grouping;

  void bind(Command& c) {
    c.flag("dataset", dataset, "Builtin dataset name or path");
    c.flag("format", format, "builtin | images | cifar");
    c.flag("samples", samples, "Number of samples (builtin) or cap on loaded samples (0 = all)");
    c.flag("data-seed", data_seed, "Dataset generation / shuffle seed");
    c.flag("size", size, "Builtin image side length");
    c.flag("contrast", contrast, "Builtin contrast (-1 = dataset default)");
    c.flag("noise", noise, "Builtin pixel noise std (-1 = dataset default)");
    c.flag("cue", cue, "Builtin faint label cue amplitude (-1 = dataset default)");
    c.flag("cue-conflict", cue_conflict, "Builtin fraction of conflicting samples (-1 = dataset default)");
    c.flag("grouping", grouping, "Label grouping file, or 'restricted-imagenet'");
  }

  DatasetFormat parsed_format() const {
    if (format == "builtin") return DatasetFormat::builtin;
    if (format == "images") return DatasetFormat::image_directory;
    if (format == "cifar") return DatasetFormat::cifar_binary;
    throw InvalidArgument("unknown dataset format '" + format + "'");
  }

  // Replaces "dataset default" sentinels with the actual values.
  void normalize() {
    if (parsed_format() != DatasetFormat::builtin) return;
    const BuiltinOptions d = builtin_defaults(dataset);
    if (contrast < 0) contrast = d.contrast;
    if (noise < 0) noise = d.noise;
    if (cue < 0) cue = d.cue_amplitude;
    if (cue_conflict < 0) cue_conflict = d.cue_conflict;
  }

  Dataset load() const {
    if (samples < 0) throw InvalidArgument("--samples must be >= 0");
    BuiltinOptions o;
    o.samples = static_cast<std::size_t>(samples);
    o.seed = data_seed;
    o.size = size;
    o.contrast = contrast;
    o.noise = noise;
    o.cue_amplitude = cue;
    o.cue_conflict = cue_conflict;
    Dataset ds = load_dataset(dataset, parsed_format(), data_seed, o);
    if (!grouping.empty()) {
      const LabelGrouping g =
          grouping == "restricted-imagenet" ? LabelGrouping::restricted_imagenet()
                                            : LabelGrouping::parse(read_file_bytes(grouping));
      ds = apply_grouping(ds, g, true);
    }
    if (samples > 0 && static_cast<std::size_t>(samples) < ds.size()) ds = ds.take(0, static_cast<std::size_t>(samples));
    ds.validate();
    return ds;
  }
};

struct ScheduleFlags {
  double eps = 0;
  int steps = 0;
  double step_size = 0.1;

  void bind(Command& c) {
    c.flag("eps", eps, "L2 radius of the search region");
    c.flag("steps", steps, "PGD steps");
    c.flag("step-size", step_size, "PGD step length (L2-normalised steps)");
  }
  PgdSchedule schedule() const { return schedule_of(steps, step_size); }
};

struct OutputFlags {
  std::string out_dir;
  int png = 0;

  void bind(Command& c) {
    c.flag("out-dir", out_dir, "Output directory");
    c.flag("png", png, "Also write 8-bit PNG previews (0 or 1)");
  }
  fs::path manifest() const { return fs::path(out_dir) / "manifest.jsonl"; }
};

std::vector<int> labels_or_empty(int label, std::size_t n) {
  return label >= 0 ? std::vector<int>(n, label) : std::vector<int>{};
}

// ---- commands ---------------------------------------------------------------

void add_train(CLI::App& app, std::vector<std::unique_ptr<Command>>& cmds) {
  auto& c = *cmds.emplace_back(std::make_unique<Command>(app, "train", "Train a classifier (adversarially when eps > 0)", true));
  struct F {
    DataFlags data;
    std::string widths = "8,16,32", depths;
    std::string norm = "l2";
    double eps = 0.5;
    int attack_steps = 7;
    double attack_step_size = 0.1;
    int epochs = 5, batch_size = 64;
    double lr = 0.1, momentum = 0.9, weight_decay = 5e-4, lr_drop_at = 0.6, lr_drop_factor = 0.1;
    std::string lr_drop_epochs;
    int augment = 1;
    std::uint64_t seed = 0;
    std::string out;
  };
  auto f = std::make_shared<F>();
  f->data.bind(c);
  c.flag("widths", f->widths, "Comma-separated stage widths");
  c.flag("depths", f->depths, "Comma-separated residual blocks per stage (default 1 each)");
  c.flag("norm", f->norm, "Attack norm: l2 | linf");
  c.flag("eps", f->eps, "Attack radius (0 = standard training)");
  c.flag("attack-steps", f->attack_steps, "Attack PGD steps");
  c.flag("attack-step-size", f->attack_step_size, "Attack PGD step length");
  c.flag("epochs", f->epochs, "Training epochs");
  c.flag("batch-size", f->batch_size, "Minibatch size");
  c.flag("lr", f->lr, "Learning rate");
  c.flag("momentum", f->momentum, "SGD momentum");
  c.flag("weight-decay", f->weight_decay, "Weight decay");
  c.flag("lr-drop-at", f->lr_drop_at, "Fraction of epochs after which the rate drops once");
  c.flag("lr-drop-factor", f->lr_drop_factor, "Learning-rate drop factor");
  c.flag("lr-drop-epochs", f->lr_drop_epochs, "Comma-separated epochs at which the rate drops (overrides --lr-drop-at)");
  c.flag("augment", f->augment, "Random crop and flip (0 or 1)");
  c.flag("seed", f->seed, "Initialisation and training-order seed");
  c.flag("out", f->out, "Checkpoint to write");
  c.action = [&c, f] {
    c.resolve();
    f->data.normalize();
    c.record();
    require(f->out, "out");
    Dataset ds = f->data.load();
    ClassifierSpec spec;
    spec.channels = ds.images.front().channels;
    spec.height = ds.images.front().height;
    spec.width = ds.images.front().width;
    spec.num_classes = ds.num_classes();
    spec.stage_widths = parse_int_list(f->widths, "--widths");
    spec.stage_depths = f->depths.empty() ? std::vector<int>(spec.stage_widths.size(), 1)
                                          : parse_int_list(f->depths, "--depths");
    Classifier model = Classifier::build(spec, f->seed);
    TrainConfig tc;
    tc.epochs = f->epochs;
    tc.batch_size = f->batch_size;
    tc.learning_rate = f->lr;
    tc.momentum = f->momentum;
    tc.weight_decay = f->weight_decay;
    tc.lr_drop_at = f->lr_drop_at;
    tc.lr_drop_factor = f->lr_drop_factor;
    tc.lr_drop_epochs = parse_int_list(f->lr_drop_epochs, "--lr-drop-epochs");
    tc.augment = f->augment != 0;
    tc.seed = f->seed;
    AttackConfig ac;
    ac.norm = parse_norm(f->norm);
    ac.epsilon = f->eps;
    ac.schedule = schedule_of(f->attack_steps, f->attack_step_size);
    auto history = json::array();
    auto result = adv_train(model, ds, tc, ac, nullptr, [&](const EpochMetrics& m) {
      std::cout << "epoch " << m.epoch << " lr " << m.learning_rate << " loss " << m.loss << " clean " << m.clean_acc
                << " robust " << m.robust_acc << std::endl;
      history.push_back({{"epoch", m.epoch},
                         {"lr", m.learning_rate},
                         {"loss", m.loss},
                         {"clean_acc", m.clean_acc},
                         {"robust_acc", m.robust_acc}});
    });
    auto& md = model.metadata();
    md.norm = f->eps > 0 && f->attack_steps > 0 ? f->norm : "none";
    md.epsilon = f->eps;
    md.attack_steps = f->attack_steps;
    md.attack_step_size = f->attack_step_size;
    md.epochs = f->epochs;
    md.extra["dataset"] = f->data.dataset;
    md.extra["class_names"] = json(ds.class_names).dump();
    save_checkpoint(model, f->out);
    c.add_output(f->out);
    c.metrics()["history"] = history;
    c.finish(fs::path(f->out).string() + ".manifest.jsonl");
  };
}

void add_eval(CLI::App& app, std::vector<std::unique_ptr<Command>>& cmds) {
  auto& c = *cmds.emplace_back(std::make_unique<Command>(app, "eval-robust", "Clean and PGD accuracy over a sweep of radii", true));
  struct F {
    std::string model;
    DataFlags data;
    std::string eps = "0,0.25,0.5,1", norm = "l2";
    int attack_steps = 7;
    double attack_step_size = 0.1;
    int batch_size = 128;
    std::string out;
  };
  auto f = std::make_shared<F>();
  f->data.data_seed = 1;
  f->data.samples = 512;
  c.flag("model", f->model, "Checkpoint");
  f->data.bind(c);
  c.flag("eps", f->eps, "Comma-separated attack radii");
  c.flag("norm", f->norm, "Attack norm: l2 | linf");
  c.flag("attack-steps", f->attack_steps, "Attack PGD steps");
  c.flag("attack-step-size", f->attack_step_size, "Attack PGD step length");
  c.flag("batch-size", f->batch_size, "Evaluation chunk size");
  c.flag("out", f->out, "JSON report to write (optional)");
  c.action = [&c, f] {
    c.resolve();
    f->data.normalize();
    c.record();
    Classifier model = open_model(c, f->model);
    Dataset ds = f->data.load();
    auto rows = json::array();
    for (double eps : parse_double_list(f->eps, "--eps")) {
      AttackConfig ac;
      ac.norm = parse_norm(f->norm);
      ac.epsilon = eps;
      ac.schedule = schedule_of(f->attack_steps, f->attack_step_size);
      auto r = evaluate_robustness(model, ds, ac, f->batch_size);
      std::cout << "eps " << eps << " clean " << r.clean_acc << " robust " << r.robust_acc << std::endl;
      rows.push_back({{"eps", eps}, {"clean_acc", r.clean_acc}, {"robust_acc", r.robust_acc}, {"count", r.count}});
    }
    c.metrics()["sweep"] = rows;
    if (!f->out.empty()) {
      write_file_bytes(f->out, json{{"sweep", rows}}.dump(2) + "\n");
      c.add_output(f->out);
    }
    c.finish(f->out.empty() ? fs::path("robustsyn-manifest.jsonl") : fs::path(f->out + ".manifest.jsonl"));
  };
}

void add_attack(CLI::App& app, std::vector<std::unique_ptr<Command>>& cmds) {
  auto& c = *cmds.emplace_back(std::make_unique<Command>(app, "attack", "Untargeted or targeted PGD attack", true));
  struct F {
    std::string model, norm = "l2";
    std::vector<std::string> input;
    int label = -1, target = -1;
    ScheduleFlags s;
    OutputFlags o;
  };
  auto f = std::make_shared<F>();
  c.flag("model", f->model, "Checkpoint");
  c.flag("input", f->input, "Input images or directories");
  c.flag("label", f->label, "True label for untargeted attacks (-1 = model prediction)");
  c.flag("target", f->target, "Target class for a targeted attack (-1 = untargeted)");
  c.flag("norm", f->norm, "l2 | linf");
  f->s.bind(c);
  f->o.bind(c);
  c.action = [&c, f] {
    c.resolve();
    c.record();
    require(f->o.out_dir, "out-dir");
    Classifier model = open_model(c, f->model);
    auto images = read_inputs(c, expand_inputs(f->input));
    const Tensor x = to_batch(images);
    Objective obj;
    std::vector<int> labels;
    if (f->target >= 0) {
      obj.direction = Direction::minimize;
      labels.assign(images.size(), f->target);
    } else {
      obj.direction = Direction::maximize;
      labels = f->label >= 0 ? std::vector<int>(images.size(), f->label) : classify(model, images);
    }
    obj.terms.push_back(ObjectiveTerm::class_loss(labels));
    PerturbationSet set(parse_norm(f->norm), f->s.eps, x);
    auto r = pgd(model, obj, set, f->s.schedule(), x);
    auto out = from_batch(r.x);
    const auto after = classify(model, out);
    std::size_t hit = 0;
    for (std::size_t i = 0; i < out.size(); ++i) hit += f->target >= 0 ? after[i] == f->target : after[i] != labels[i];
    c.metrics()["success_rate"] = static_cast<double>(hit) / static_cast<double>(out.size());
    std::cout << "attack success " << hit << "/" << out.size() << std::endl;
    write_images(c, f->o.out_dir, "adv", out, f->o.png != 0);
    c.finish(f->o.manifest());
  };
}

void add_fit_seeds(CLI::App& app, std::vector<std::unique_ptr<Command>>& cmds) {
  auto& c = *cmds.emplace_back(std::make_unique<Command>(app, "fit-seeds", "Fit class-conditional Gaussian seed models", true));
  struct F {
    DataFlags data;
    double shrinkage = -1;
    int downsample = 1;
    std::string out;
  };
  auto f = std::make_shared<F>();
  f->data.bind(c);
  c.flag("shrinkage", f->shrinkage, "Diagonal shrinkage (-1 = 1e-3 * trace / d)");
  c.flag("downsample", f->downsample, "Fit resolution divisor; draws are upsampled by nearest neighbour");
  c.flag("out", f->out, "Seed model file to write");
  c.action = [&c, f] {
    c.resolve();
    f->data.normalize();
    c.record();
    require(f->out, "out");
    Dataset ds = f->data.load();
    auto set = fit_seed_models(ds, f->shrinkage, f->downsample);
    save_seed_models(set, f->out);
    c.add_output(f->out);
    auto sh = json::array();
    for (const auto& m : set.models) sh.push_back(m.shrinkage);
    c.metrics()["shrinkage"] = sh;
    c.finish(f->out + ".manifest.jsonl");
  };
}

void add_export_data(CLI::App& app, std::vector<std::unique_ptr<Command>>& cmds) {
  auto& c = *cmds.emplace_back(std::make_unique<Command>(app, "export-data", "Write dataset images and labels to files", false));
  struct F {
    DataFlags data;
    OutputFlags o;
  };
  auto f = std::make_shared<F>();
  f->data.data_seed = 1;
  f->data.samples = 100;
  f->data.bind(c);
  f->o.bind(c);
  c.action = [&c, f] {
    c.resolve();
    f->data.normalize();
    c.record();
    require(f->o.out_dir, "out-dir");
    Dataset ds = f->data.load();
    write_images(c, f->o.out_dir, "img", ds.images, f->o.png != 0);
    const fs::path labels = fs::path(f->o.out_dir) / "labels.json";
    write_file_bytes(labels, json{{"labels", ds.labels}, {"class_names", ds.class_names}}.dump() + "\n");
    c.add_output(labels);
    c.finish(f->o.manifest());
  };
}

void add_generate(CLI::App& app, std::vector<std::unique_ptr<Command>>& cmds) {
  auto& c = *cmds.emplace_back(std::make_unique<Command>(app, "generate", "Class-conditional generation from Gaussian seeds", true));
  struct F {
    std::string model, seeds;
    int cls = 0, n = 8;
    std::uint64_t seed = 0;
    ScheduleFlags s;
    OutputFlags o;
  };
  auto f = std::make_shared<F>();
  c.flag("model", f->model, "Checkpoint");
  c.flag("seeds", f->seeds, "Seed model file from fit-seeds");
  c.flag("class", f->cls, "Target class");
  c.flag("n", f->n, "Number of samples");
  c.flag("seed", f->seed, "Sampling seed");
  f->s.bind(c);
  f->o.bind(c);
  c.action = [&c, f] {
    c.resolve();
    const fs::path seeds_path = resolve_model_file(f->seeds, "seeds");
    f->seeds = seeds_path.string();
    c.record();
    require(f->o.out_dir, "out-dir");
    if (f->n < 1) throw InvalidArgument("--n must be >= 1");
    Classifier model = open_model(c, f->model);
    c.add_input(seeds_path);
    auto seeds = load_seed_models(seeds_path);
    auto r = generate(model, seeds.for_class(f->cls), f->cls, f->s.eps, f->s.schedule(),
                      static_cast<std::size_t>(f->n), f->seed);
    c.metrics()["seed_class_rate"] = class_rate(model, r.starts, f->cls);
    c.metrics()["class_rate"] = class_rate(model, r.images, f->cls);
    std::cout << "class rate seeds " << c.metrics()["seed_class_rate"] << " generated " << c.metrics()["class_rate"]
              << std::endl;
    write_images(c, f->o.out_dir, "gen", r.images, f->o.png != 0);
    c.finish(f->o.manifest());
  };
}

void add_sketch(CLI::App& app, std::vector<std::unique_ptr<Command>>& cmds) {
  auto& c = *cmds.emplace_back(std::make_unique<Command>(app, "sketch", "Turn sketches into class samples", true));
  struct F {
    std::string model;
    std::vector<std::string> input;
    int cls = 0;
    ScheduleFlags s;
    OutputFlags o;
  };
  auto f = std::make_shared<F>();
  c.flag("model", f->model, "Checkpoint");
  c.flag("input", f->input, "Sketch images or directories");
  c.flag("class", f->cls, "Target class");
  f->s.bind(c);
  f->o.bind(c);
  c.action = [&c, f] {
    c.resolve();
    c.record();
    require(f->o.out_dir, "out-dir");
    Classifier model = open_model(c, f->model);
    auto images = read_inputs(c, expand_inputs(f->input));
    auto r = sketch_to_image(model, images, f->cls, f->s.eps, f->s.schedule());
    c.metrics()["class_rate"] = class_rate(model, r.images, f->cls);
    write_images(c, f->o.out_dir, "sketch", r.images, f->o.png != 0);
    c.finish(f->o.manifest());
  };
}

void add_inpaint(CLI::App& app, std::vector<std::unique_ptr<Command>>& cmds) {
  auto& c = *cmds.emplace_back(std::make_unique<Command>(app, "inpaint", "Fill masked regions", true));
  struct F {
    std::string model;
    std::vector<std::string> input, mask;
    int patch = 0, label = -1;
    double lambda = 10;
    std::uint64_t seed = 0;
    ScheduleFlags s;
    OutputFlags o;
  };
  auto f = std::make_shared<F>();
  c.flag("model", f->model, "Checkpoint");
  c.flag("input", f->input, "Corrupted images (with --mask) or clean images (with --patch)");
  c.flag("mask", f->mask, "Masks, 1 inside the region to fill; one per input or one shared");
  c.flag("patch", f->patch, "Without --mask: corrupt each input with a random square patch of this side");
  c.flag("label", f->label, "Class to use (-1 = model prediction on the corrupted input)");
  c.flag("lambda", f->lambda, "Weight of the penalty on changes outside the mask");
  c.flag("seed", f->seed, "Patch placement seed");
  f->s.bind(c);
  f->o.bind(c);
  c.action = [&c, f] {
    c.resolve();
    c.record();
    require(f->o.out_dir, "out-dir");
    Classifier model = open_model(c, f->model);
    auto images = read_inputs(c, expand_inputs(f->input));
    std::vector<Image> corrupted, masks, originals;
    if (!f->mask.empty()) {
      auto m = read_inputs(c, expand_inputs(f->mask));
      if (m.size() != 1 && m.size() != images.size()) throw InvalidArgument("need one mask per input or one shared mask");
      corrupted = images;
      for (std::size_t i = 0; i < images.size(); ++i) masks.push_back(m.size() == 1 ? m[0] : m[i]);
    } else {
      if (f->patch < 1) throw InvalidArgument("inpaint needs --mask or --patch");
      originals = images;
      for (std::size_t i = 0; i < images.size(); ++i) {
        std::mt19937_64 rng(stream_seed(f->seed, i));
        auto cor = corrupt_patch(images[i], f->patch, rng);
        corrupted.push_back(std::move(cor.corrupted));
        masks.push_back(std::move(cor.mask));
      }
      write_images(c, f->o.out_dir, "corrupted", corrupted, f->o.png != 0);
      write_images(c, f->o.out_dir, "mask", masks, false);
    }
    std::optional<std::vector<int>> labels;
    if (f->label >= 0) labels = std::vector<int>(images.size(), f->label);
    auto r = inpaint(model, corrupted, masks, labels, f->lambda, f->s.schedule(), f->s.eps);
    if (!originals.empty()) {
      double before = 0, after = 0;
      for (std::size_t i = 0; i < originals.size(); ++i) {
        before += psnr(corrupted[i], originals[i]).db;
        after += psnr(r.images[i], originals[i]).db;
      }
      c.metrics()["psnr_corrupted"] = before / static_cast<double>(originals.size());
      c.metrics()["psnr_inpainted"] = after / static_cast<double>(originals.size());
      std::cout << "mean psnr corrupted " << c.metrics()["psnr_corrupted"] << " inpainted "
                << c.metrics()["psnr_inpainted"] << std::endl;
    }
    write_images(c, f->o.out_dir, "inpainted", r.images, f->o.png != 0);
    c.finish(f->o.manifest());
  };
}

void add_translate(CLI::App& app, std::vector<std::unique_ptr<Command>>& cmds) {
  auto& c = *cmds.emplace_back(std::make_unique<Command>(app, "translate", "Translate images into a target domain", true));
  struct F {
    std::string model;
    std::vector<std::string> input;
    int target = 1;
    ScheduleFlags s;
    OutputFlags o;
  };
  auto f = std::make_shared<F>();
  c.flag("model", f->model, "Domain classifier checkpoint");
  c.flag("input", f->input, "Source-domain images or directories");
  c.flag("target", f->target, "Target domain label");
  f->s.bind(c);
  f->o.bind(c);
  c.action = [&c, f] {
    c.resolve();
    c.record();
    require(f->o.out_dir, "out-dir");
    Classifier model = open_model(c, f->model);
    auto images = read_inputs(c, expand_inputs(f->input));
    auto r = translate(model, images, f->target, f->s.eps, f->s.schedule());
    c.metrics()["target_rate"] = class_rate(model, r.images, f->target);
    std::cout << "target-domain rate " << c.metrics()["target_rate"] << std::endl;
    write_images(c, f->o.out_dir, "translated", r.images, f->o.png != 0);
    c.finish(f->o.manifest());
  };
}

void add_superres(CLI::App& app, std::vector<std::unique_ptr<Command>>& cmds) {
  auto& c = *cmds.emplace_back(std::make_unique<Command>(app, "superres", "Super-resolve low-resolution images", true));
  struct F {
    std::string model;
    std::vector<std::string> input;
    int factor = 4, label = -1, downsample_input = 0;
    ScheduleFlags s;
    OutputFlags o;
  };
  auto f = std::make_shared<F>();
  c.flag("model", f->model, "Checkpoint");
  c.flag("input", f->input, "Low-resolution images (or full-resolution with --downsample-input 1)");
  c.flag("factor", f->factor, "Upsampling factor");
  c.flag("label", f->label, "Class to use (-1 = model prediction on the upsampled input)");
  c.flag("downsample-input", f->downsample_input,
         "Treat inputs as ground truth: downsample first and report PSNR against them (0 or 1)");
  f->s.bind(c);
  f->o.bind(c);
  c.action = [&c, f] {
    c.resolve();
    c.record();
    require(f->o.out_dir, "out-dir");
    Classifier model = open_model(c, f->model);
    auto images = read_inputs(c, expand_inputs(f->input));
    std::vector<Image> low;
    for (const auto& im : images) low.push_back(f->downsample_input ? downsample(im, f->factor) : im);
    std::optional<std::vector<int>> labels;
    if (f->label >= 0) labels = std::vector<int>(low.size(), f->label);
    auto r = superres(model, low, f->factor, labels, f->s.eps, f->s.schedule());
    if (f->downsample_input) {
      double nn = 0, sr = 0;
      for (std::size_t i = 0; i < images.size(); ++i) {
        nn += psnr(r.starts[i], images[i]).db;
        sr += psnr(r.images[i], images[i]).db;
      }
      c.metrics()["psnr_nearest"] = nn / static_cast<double>(images.size());
      c.metrics()["psnr_superres"] = sr / static_cast<double>(images.size());
      std::cout << "mean psnr nearest " << c.metrics()["psnr_nearest"] << " superres " << c.metrics()["psnr_superres"]
                << std::endl;
    }
    write_images(c, f->o.out_dir, "superres", r.images, f->o.png != 0);
    c.finish(f->o.manifest());
  };
}

void add_paint(CLI::App& app, std::vector<std::unique_ptr<Command>>& cmds) {
  auto& c = *cmds.emplace_back(std::make_unique<Command>(app, "paint", "Paint a representation feature into masked regions", true));
  struct F {
    std::string model;
    std::vector<std::string> input, mask;
    int feature = 0;
    double lambda = 10;
    ScheduleFlags s;
    OutputFlags o;
  };
  auto f = std::make_shared<F>();
  c.flag("model", f->model, "Checkpoint");
  c.flag("input", f->input, "Images or directories");
  c.flag("mask", f->mask, "Masks, 1 where the feature may be painted; one per input or one shared");
  c.flag("feature", f->feature, "Representation feature index");
  c.flag("lambda", f->lambda, "Weight of the penalty on changes outside the mask");
  f->s.bind(c);
  f->o.bind(c);
  c.action = [&c, f] {
    c.resolve();
    c.record();
    require(f->o.out_dir, "out-dir");
    Classifier model = open_model(c, f->model);
    auto images = read_inputs(c, expand_inputs(f->input));
    if (f->mask.empty()) throw InvalidArgument("--mask is required");
    auto m = read_inputs(c, expand_inputs(f->mask));
    if (m.size() != 1 && m.size() != images.size()) throw InvalidArgument("need one mask per input or one shared mask");
    std::vector<Image> masks;
    for (std::size_t i = 0; i < images.size(); ++i) masks.push_back(m.size() == 1 ? m[0] : m[i]);
    auto r = feature_paint(model, images, masks, f->feature, f->lambda, f->s.schedule(), f->s.eps);
    auto mean_feature = [&](const std::vector<Image>& ims) {
      auto rep = model.representation(to_batch(ims));
      const auto d = rep.dim(1);
      double s = 0;
      for (std::int64_t i = 0; i < rep.dim(0); ++i) s += rep.data()[static_cast<std::size_t>(i * d + f->feature)];
      return s / static_cast<double>(rep.dim(0));
    };
    c.metrics()["feature_before"] = mean_feature(images);
    c.metrics()["feature_after"] = mean_feature(r.images);
    write_images(c, f->o.out_dir, "painted", r.images, f->o.png != 0);
    c.finish(f->o.manifest());
  };
}

void add_score(CLI::App& app, std::vector<std::unique_ptr<Command>>& cmds) {
  auto& c = *cmds.emplace_back(std::make_unique<Command>(app, "score", "Inception-style score under the given classifier", false));
  struct F {
    std::string model;
    std::vector<std::string> input;
    std::string out;
  };
  auto f = std::make_shared<F>();
  c.flag("model", f->model, "Scoring checkpoint");
  c.flag("input", f->input, "Images or directories");
  c.flag("out", f->out, "JSON report to write (optional)");
  c.action = [&c, f] {
    c.resolve();
    c.record();
    Classifier model = open_model(c, f->model);
    auto images = read_inputs(c, expand_inputs(f->input));
    std::vector<std::vector<double>> rows;
    for (std::size_t start = 0; start < images.size(); start += 128) {
      const std::size_t end = std::min(images.size(), start + 128);
      auto logits = model.logits(to_batch(std::span<const Image>(images.data() + start, end - start)));
      const auto p = ops::softmax_rows(logits);
      const auto k = static_cast<std::size_t>(logits.dim(1));
      for (std::size_t i = 0; i < end - start; ++i) rows.emplace_back(p.begin() + i * k, p.begin() + (i + 1) * k);
    }
    const double score = inception_style_score(rows);
    std::cout << "score " << format_double(score) << std::endl;
    c.metrics()["score"] = score;
    if (!f->out.empty()) {
      write_file_bytes(f->out, json{{"score", score}, {"count", images.size()}}.dump(2) + "\n");
      c.add_output(f->out);
    }
    c.finish(f->out.empty() ? fs::path("robustsyn-manifest.jsonl") : fs::path(f->out + ".manifest.jsonl"));
  };
}

void add_psnr(CLI::App& app, std::vector<std::unique_ptr<Command>>& cmds) {
  auto& c = *cmds.emplace_back(std::make_unique<Command>(app, "psnr", "PSNR between two images", false));
  struct F {
    std::string a, b;
    double max_value = 1.0;
  };
  auto f = std::make_shared<F>();
  c.positional("a", f->a, "First image");
  c.positional("b", f->b, "Second image");
  c.flag("max", f->max_value, "Peak signal value");
  c.action = [&c, f] {
    c.resolve();
    c.record();
    const auto a = read_inputs(c, expand_inputs({f->a}));
    const auto b = read_inputs(c, expand_inputs({f->b}));
    const Psnr p = psnr(a.front(), b.front(), f->max_value);
    if (p.infinite) {
      std::cout << "psnr inf (sentinel " << format_double(p.db) << ")" << std::endl;
    } else {
      std::cout << "psnr " << format_double(p.db) << " dB" << std::endl;
    }
    c.metrics()["psnr_db"] = p.db;
    c.metrics()["infinite"] = p.infinite;
    c.finish("robustsyn-manifest.jsonl");
  };
}

int rerun(const std::string& manifest, int index, bool verify) {
  const auto entries = read_manifests(manifest);
  if (entries.empty()) throw InvalidArgument("manifest " + manifest + " is empty");
  const int n = static_cast<int>(entries.size());
  const int i = index < 0 ? n + index : index;
  if (i < 0 || i >= n) throw InvalidArgument("manifest index " + std::to_string(index) + " out of range");
  const RunManifest& m = entries[static_cast<std::size_t>(i)];
  std::vector<std::string> args = m.args;
  for (std::size_t k = 0; k + 1 < args.size(); ++k)
    if (args[k] == "--jobs") args[k + 1] = "1";
  const std::string replay_manifest = manifest + ".rerun.jsonl";
  args.insert(args.begin() + 1, {"--manifest", replay_manifest});
  const int code = run(args);
  if (code != kOk || !verify) return code;
  const auto replay = read_manifests(replay_manifest).back();
  int mismatches = 0;
  for (const auto& out : m.outputs) {
    auto it = std::find_if(replay.outputs.begin(), replay.outputs.end(),
                           [&](const FileRecord& r) { return r.path == out.path; });
    if (it == replay.outputs.end()) {
      std::cerr << "missing output on rerun: " << out.path << '\n';
      ++mismatches;
    } else if (it->hash != out.hash) {
      std::cerr << "output differs on rerun: " << out.path << '\n';
      ++mismatches;
    }
  }
  if (replay.outputs.size() != m.outputs.size()) ++mismatches;
  // Commands without output files (psnr, score without --out) are compared
  // through their recorded metrics.
  if (replay.metrics != m.metrics) {
    std::cerr << "metrics differ on rerun\n";
    ++mismatches;
  }
  if (mismatches) return kMismatch;
  std::cout << "rerun reproduced " << m.outputs.size() << " output file(s) bit-identically and identical metrics"
            << std::endl;
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Image synthesis with a single robust classifier", "robustsyn"};
  app.require_subcommand(1);
  std::vector<std::unique_ptr<Command>> cmds;
  add_train(app, cmds);
  add_eval(app, cmds);
  add_attack(app, cmds);
  add_fit_seeds(app, cmds);
  add_export_data(app, cmds);
  add_generate(app, cmds);
  add_sketch(app, cmds);
  add_inpaint(app, cmds);
  add_translate(app, cmds);
  add_superres(app, cmds);
  add_paint(app, cmds);
  add_score(app, cmds);
  add_psnr(app, cmds);

  auto* rr = app.add_subcommand("rerun", "Replay a manifest entry single-threaded and compare its outputs");
  std::string rr_manifest;
  int rr_index = -1, rr_verify = 1;
  rr->add_option("manifest", rr_manifest, "Manifest file")->required();
  rr->add_option("--index", rr_index, "Entry to replay (negative counts from the end)")->capture_default_str();
  rr->add_option("--verify", rr_verify, "Compare output hashes (0 or 1)")->capture_default_str();

  auto* presets = app.add_subcommand("presets", "List the named presets");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsageError;
  }
  try {
    if (rr->parsed()) return rerun(rr_manifest, rr_index, rr_verify != 0);
    if (presets->parsed()) {
      for (const auto& p : all_presets())
        std::cout << p.name << "  [" << p.command << ", " << p.origin << "]  " << p.description << "\n    "
                  << p.values.dump() << '\n';
      return kOk;
    }
    for (auto& c : cmds) {
      if (c->parsed()) {
        c->action();
        return kOk;
      }
    }
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
}

}  // namespace robustsyn::cli
