// Acceptance runner. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails. Thresholds and budgets are fixed below.
//
// Desk models are trained once through the CLI with the desk presets, so the
// numbers measured here are the ones a user gets from the defaults.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gradcheck_suite.hpp"
#include "pgd_contract.hpp"
#include "robustsyn/cli/commands.hpp"
#include "robustsyn/cli/presets.hpp"
#include "robustsyn/data/image_io.hpp"
#include "robustsyn/data/transforms.hpp"
#include "robustsyn/models/checkpoint.hpp"
#include "robustsyn/robust/train.hpp"
#include "robustsyn/synthesis/metrics.hpp"
#include "robustsyn/synthesis/tasks.hpp"

using namespace robustsyn;
namespace fs = std::filesystem;

namespace {

// Tolerances and thresholds.
constexpr double kBallSlack = 1e-5;        // relative slack on ||x - x0|| <= eps
constexpr double kTwinGap = 0.20;          // robust minus ERM accuracy at the training radius
constexpr double kTwinRadius = 0.5;
constexpr double kTranslateRate = 0.80;
constexpr double kDriftLimit = 1e-3;       // unmasked drift at lambda = 1e6
constexpr double kPinLambda = 1e6;
constexpr double kMetricTol = 1e-9;
constexpr std::size_t kTwinTrainSamples = 4000;
constexpr std::size_t kTwinTestSamples = 512;
constexpr std::size_t kGenerateSamples = 64;
constexpr std::size_t kInpaintImages = 50;
constexpr std::size_t kSuperresImages = 100;
constexpr std::size_t kTranslateImages = 100;
constexpr int kSuperresFactor = 4;
constexpr std::uint64_t kHeldOutSeed = 1;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  double budget_seconds;
  std::function<Outcome()> body;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double preset_value(const std::string& command, const std::string& key) {
  return cli::default_preset(command).values.at(key).get<double>();
}

PgdSchedule preset_schedule(const std::string& command) {
  PgdSchedule s;
  s.steps = static_cast<int>(preset_value(command, "steps"));
  s.step_size = preset_value(command, "step-size");
  return s;
}

double l2_distance(const Image& a, const Image& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = double(a.pixels[i]) - double(b.pixels[i]);
    s += d * d;
  }
  return std::sqrt(s);
}

double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0 : s / static_cast<double>(v.size());
}

Dataset held_out(const std::string& name, std::size_t n) {
  BuiltinOptions o = builtin_defaults(name);
  o.samples = n;
  o.seed = kHeldOutSeed;
  return make_builtin(name, o);
}

class Runner {
 public:
  Runner(fs::path work, bool reuse) : work_(std::move(work)), reuse_(reuse) { fs::create_directories(work_); }

  // Criteria, in the order they are reported.
  std::vector<Criterion> criteria() {
    return {
        {"gradient-correctness", 120, [this] { return gradients(); }},
        {"pgd-contract", 120, [this] { return pgd_contract(); }},
        {"robust-vs-standard-twin", 900, [this] { return twin(); }},
        {"generation", 180, [this] { return generation(); }},
        {"inpainting", 600, [this] { return inpainting(); }},
        {"super-resolution", 600, [this] { return super_resolution(); }},
        {"translation", 300, [this] { return translation(); }},
        {"metrics", 1, [this] { return metrics(); }},
        {"reproducibility", 600, [this] { return reproducibility(); }},
    };
  }

 private:
  fs::path work_;
  bool reuse_;
  std::map<std::string, fs::path> built_;

  // Trains through the CLI once per run, or not at all when a reusable
  // checkpoint already exists.
  fs::path cli_artifact(const std::string& file, std::vector<std::string> args) {
    if (auto it = built_.find(file); it != built_.end()) return it->second;
    const fs::path out = work_ / file;
    if (!(reuse_ && fs::exists(out))) {
      args.push_back("--out");
      args.push_back(out.string());
      const int code = cli::run(args);
      if (code != cli::kOk)
        throw std::runtime_error(args[0] + " for " + file + " exited with code " + std::to_string(code));
    }
    built_[file] = out;
    return out;
  }

  fs::path robust_model() { return cli_artifact("robust.rsm", {"train", "--preset", "desk-train"}); }
  fs::path standard_model() { return cli_artifact("standard.rsm", {"train", "--preset", "desk-train", "--eps", "0"}); }
  fs::path seed_models() { return cli_artifact("seeds.rss", {"fit-seeds", "--preset", "desk-seeds", "--samples", "4000"}); }
  fs::path domain_model() {
    return cli_artifact("domain.rsm", {"train", "--preset", "desk-train", "--dataset", "hv-stripes", "--samples", "1000",
                                       "--epochs", "3"});
  }

  Outcome gradients() {
    using namespace robustsyn::testing;
    double worst = 0;
    int checked = 0, kinks = 0;
    bool ok = true;
    std::string failed;
    for (const auto& r : run_op_suite()) {
      if (!r.ok()) {
        ok = false;
        failed += " " + r.name;
      }
      worst = std::max(worst, r.worst);
      checked += r.checked;
      kinks += r.kinks;
    }
    for (const auto& c : run_classifier_suite()) {
      if (!c.ok()) {
        ok = false;
        failed += " classifier" + std::to_string(c.seed);
      }
      worst = std::max(worst, c.report.max_error);
      checked += c.report.checked;
      kinks += c.report.skipped_kinks;
    }
    std::string detail = fmt("f32 worst=%.3g (tol %.0e) checked=%d kinks=%d", worst, kTolerance, checked, kinks);
    if (!failed.empty()) detail += "; failing:" + failed;

    std::string child_out;
    int child_code = -1;
    if (FILE* p = popen(ROBUSTSYN_GRADCHECK_F64 " 2>&1", "r")) {
      char buf[256];
      while (std::fgets(buf, sizeof buf, p)) child_out += buf;
      child_code = pclose(p);
    }
    while (!child_out.empty() && child_out.back() == '\n') child_out.pop_back();
    const auto last = child_out.find_last_of('\n');
    detail += "; " + (last == std::string::npos ? child_out : child_out.substr(last + 1));
    if (child_code != 0) detail += " (64-bit check failed)";
    return {ok && child_code == 0, detail};
  }

  Outcome pgd_contract() {
    testing::PgdContractSuite suite(777);
    const auto r = suite.run(1000);
    std::string detail = fmt("trials=%d quadratic=%d worst quadratic err=%.2g worst step err=%.2g failures=%zu",
                             int(r.trials), int(r.quadratic_trials), r.worst_quadratic_error, r.worst_step_error,
                             r.failures.size());
    if (!r.failures.empty()) detail += "; first: " + r.failures.front();
    return {r.ok() && r.trials == 1000, detail};
  }

  Outcome twin() {
    if (preset_value("train", "samples") != double(kTwinTrainSamples) || preset_value("train", "epochs") != 5)
      return {false, "desk-train preset no longer trains 5 epochs on 4000 samples"};
    const auto robust = load_checkpoint(robust_model());
    const auto standard = load_checkpoint(standard_model());
    const Dataset test = held_out("stripes-blobs", kTwinTestSamples);

    std::vector<double> radii;
    std::stringstream ss(cli::default_preset("eval-robust").values.at("eps").get<std::string>());
    for (std::string tok; std::getline(ss, tok, ',');) radii.push_back(std::stod(tok));
    AttackConfig attack;
    attack.schedule.steps = static_cast<int>(preset_value("eval-robust", "attack-steps"));
    attack.schedule.step_size = preset_value("eval-robust", "attack-step-size");

    std::vector<double> r_acc, s_acc;
    double r_at = -1, s_at = -1;
    for (double e : radii) {
      attack.epsilon = e;
      r_acc.push_back(evaluate_robustness(robust, test, attack).robust_acc);
      s_acc.push_back(evaluate_robustness(standard, test, attack).robust_acc);
      if (e == kTwinRadius) {
        r_at = r_acc.back();
        s_at = s_acc.back();
      }
    }
    bool monotone = true;
    for (std::size_t i = 1; i < r_acc.size(); ++i) monotone = monotone && r_acc[i] <= r_acc[i - 1];
    std::string curve;
    for (std::size_t i = 0; i < radii.size(); ++i) curve += fmt(" %.2g:%.3f/%.3f", radii[i], r_acc[i], s_acc[i]);
    const bool pass = r_at >= 0 && r_at - s_at >= kTwinGap && monotone;
    return {pass, fmt("robust@%.2g=%.3f standard@%.2g=%.3f gap=%.3f (need >= %.2f), monotone=%s; eps:robust/standard",
                      kTwinRadius, r_at, kTwinRadius, s_at, r_at - s_at, kTwinGap, monotone ? "yes" : "no") +
                      curve};
  }

  Outcome generation() {
    const auto model = load_checkpoint(robust_model());
    const auto seeds = load_seed_models(seed_models());
    const double eps = preset_value("generate", "eps");
    const auto schedule = preset_schedule("generate");
    const int classes = model.spec().num_classes;
    const std::size_t per_class = kGenerateSamples / static_cast<std::size_t>(classes);
    double seed_hits = 0, gen_hits = 0, worst_ratio = 0;
    std::size_t total = 0;
    for (int y = 0; y < classes; ++y) {
      auto r = generate(model, seeds.for_class(y), y, eps, schedule, per_class, static_cast<std::uint64_t>(y));
      seed_hits += class_rate(model, r.starts, y) * double(per_class);
      gen_hits += class_rate(model, r.images, y) * double(per_class);
      for (std::size_t i = 0; i < r.images.size(); ++i)
        worst_ratio = std::max(worst_ratio, l2_distance(r.images[i], r.starts[i]) / eps);
      total += per_class;
    }
    const double seed_rate = seed_hits / double(total), gen_rate = gen_hits / double(total);
    const bool inside = worst_ratio <= 1 + kBallSlack;
    return {total == kGenerateSamples && gen_rate > seed_rate && inside,
            fmt("n=%zu seed rate=%.3f generated rate=%.3f, max ||x-x0||/eps=%.6f", total, seed_rate, gen_rate,
                worst_ratio)};
  }

  Outcome inpainting() {
    const auto model = load_checkpoint(robust_model());
    const Dataset data = held_out("stripes-blobs", kInpaintImages);
    const int patch = static_cast<int>(preset_value("inpaint", "patch"));
    std::vector<Image> corrupted, masks;
    for (std::size_t i = 0; i < data.size(); ++i) {
      std::mt19937_64 rng(stream_seed(0, i));
      auto c = corrupt_patch(data.images[i], patch, rng);
      corrupted.push_back(std::move(c.corrupted));
      masks.push_back(std::move(c.mask));
    }
    const auto schedule = preset_schedule("inpaint");
    const double eps = preset_value("inpaint", "eps");
    auto r = inpaint(model, corrupted, masks, std::nullopt, preset_value("inpaint", "lambda"), schedule, eps);
    std::vector<double> before, after;
    for (std::size_t i = 0; i < data.size(); ++i) {
      before.push_back(psnr(corrupted[i], data.images[i]).db);
      after.push_back(psnr(r.images[i], data.images[i]).db);
    }
    auto pinned = inpaint(model, corrupted, masks, std::nullopt, kPinLambda, schedule, eps);
    double drift = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const Image& m = masks[i];
      const std::size_t plane = m.size();
      for (std::size_t k = 0; k < corrupted[i].size(); ++k) {
        if (m.pixels[k % plane] != 0) continue;
        drift = std::max(drift, std::abs(double(pinned.images[i].pixels[k]) - double(corrupted[i].pixels[k])));
      }
    }
    const double mb = mean(before), ma = mean(after);
    return {ma > mb && drift < kDriftLimit,
            fmt("n=%zu mean PSNR corrupted=%.3f dB inpainted=%.3f dB; max unmasked drift at lambda=1e6: %.2g",
                data.size(), mb, ma, drift)};
  }

  Outcome super_resolution() {
    const auto model = load_checkpoint(robust_model());
    const Dataset data = held_out("stripes-blobs", kSuperresImages);
    const int factor = static_cast<int>(preset_value("superres", "factor"));
    if (factor != kSuperresFactor) return {false, "desk superres preset does not use factor 4"};
    std::vector<Image> low;
    for (const auto& x : data.images) low.push_back(downsample(x, factor));
    const double eps = preset_value("superres", "eps");
    auto r = superres(model, low, factor, std::nullopt, eps, preset_schedule("superres"));
    std::vector<double> nn, sr;
    double worst_ratio = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const Image up = upsample_nn(low[i], factor);
      nn.push_back(psnr(up, data.images[i]).db);
      sr.push_back(psnr(r.images[i], data.images[i]).db);
      worst_ratio = std::max(worst_ratio, l2_distance(r.images[i], up) / eps);
    }
    const double mn = mean(nn), ms = mean(sr);
    const bool inside = worst_ratio <= 1 + kBallSlack;
    return {ms >= mn && inside, fmt("n=%zu x%d mean PSNR nearest=%.4f dB superres=%.4f dB, max ||x'-up||/eps=%.6f",
                                    data.size(), factor, mn, ms, worst_ratio)};
  }

  Outcome translation() {
    const auto model = load_checkpoint(domain_model());
    const Dataset data = held_out("hv-stripes", kTranslateImages);
    const double eps = preset_value("translate", "eps");
    const auto schedule = preset_schedule("translate");
    double hits = 0;
    std::size_t total = 0;
    for (int source = 0; source < 2; ++source) {
      std::vector<Image> inputs;
      for (std::size_t i = 0; i < data.size(); ++i)
        if (data.labels[i] == source) inputs.push_back(data.images[i]);
      if (inputs.empty()) continue;
      const int target = 1 - source;
      auto r = translate(model, inputs, target, eps, schedule);
      hits += class_rate(model, r.images, target) * double(inputs.size());
      total += inputs.size();
    }
    const double rate = total ? hits / double(total) : 0;
    return {total == data.size() && rate >= kTranslateRate,
            fmt("n=%zu target-domain rate=%.3f (need >= %.2f)", total, rate, kTranslateRate)};
  }

  Outcome metrics() {
    bool ok = true;
    std::string detail;
    for (int k : {2, 5, 10}) {
      std::vector<std::vector<double>> uniform(7, std::vector<double>(k, 1.0 / k));
      std::vector<std::vector<double>> onehot;
      for (int i = 0; i < 3 * k; ++i) {
        std::vector<double> row(k, 0.0);
        row[i % k] = 1.0;
        onehot.push_back(row);
      }
      const double u = inception_style_score(uniform), o = inception_style_score(onehot);
      ok = ok && std::abs(u - 1.0) <= kMetricTol && std::abs(o - k) <= kMetricTol;
      detail += fmt("IS(uniform,K=%d)=%.12g IS(one-hot)=%.12g; ", k, u, o);
    }
    const Psnr zero = psnr(std::vector<float>{0.f, 0.f}, std::vector<float>{1.f, 1.f});
    const Psnr quarter = psnr(std::vector<float>{0.25f, 0.75f}, std::vector<float>{0.75f, 0.25f});
    const double expect = 10 * std::log10(4.0);
    ok = ok && std::abs(zero.db) <= kMetricTol && !zero.infinite && std::abs(quarter.db - expect) <= kMetricTol;
    detail += fmt("PSNR(mse=1)=%.12g dB PSNR(mse=0.25)=%.12g dB", zero.db, quarter.db);
    return {ok, detail};
  }

  // Every command once with a tiny configuration, then a single-threaded
  // replay of each manifest.
  Outcome reproducibility() {
    const fs::path dir = work_ / "repro";
    fs::remove_all(dir);
    fs::create_directories(dir);
    auto p = [&](const std::string& name) { return (dir / name).string(); };
    write_image(rect_mask(16, 16, 4, 4, 8, 8), dir / "mask.fif");
    const std::vector<std::string> tiny = {"--samples", "64", "--size", "16"};
    auto with = [](std::vector<std::string> a, const std::vector<std::string>& b) {
      a.insert(a.end(), b.begin(), b.end());
      return a;
    };
    const std::vector<std::pair<std::string, std::vector<std::string>>> commands = {
        {"train", with({"train", "--widths", "4,8", "--epochs", "1", "--attack-steps", "2", "--batch-size", "32",
                        "--out", p("m.rsm")},
                       tiny)},
        {"eval-robust", with({"eval-robust", "--model", p("m.rsm"), "--eps", "0,0.5", "--attack-steps", "2", "--out",
                              p("eval.json")},
                             {"--samples", "16", "--size", "16"})},
        {"fit-seeds", with({"fit-seeds", "--out", p("s.rss")}, tiny)},
        {"export-data", {"export-data", "--samples", "4", "--size", "16", "--out-dir", p("data")}},
        {"generate", {"generate", "--model", p("m.rsm"), "--seeds", p("s.rss"), "--n", "3", "--steps", "4",
                      "--out-dir", p("gen")}},
        {"sketch", {"sketch", "--model", p("m.rsm"), "--input", p("data/img_000.fif"), "--class", "1", "--steps", "4",
                    "--out-dir", p("sketch")}},
        {"attack", {"attack", "--model", p("m.rsm"), "--input", p("data"), "--eps", "0.5", "--steps", "4",
                    "--out-dir", p("attack")}},
        {"inpaint", {"inpaint", "--model", p("m.rsm"), "--input", p("data"), "--patch", "4", "--steps", "4",
                     "--out-dir", p("inpaint")}},
        {"translate", {"translate", "--model", p("m.rsm"), "--input", p("data"), "--steps", "4", "--out-dir",
                       p("translate")}},
        {"superres", {"superres", "--model", p("m.rsm"), "--input", p("data"), "--downsample-input", "1", "--steps",
                      "4", "--out-dir", p("superres")}},
        {"paint", {"paint", "--model", p("m.rsm"), "--input", p("data"), "--mask", p("mask.fif"), "--steps", "4",
                   "--out-dir", p("paint")}},
        {"score", {"score", "--model", p("m.rsm"), "--input", p("gen"), "--out", p("score.json")}},
        {"psnr", {"psnr", p("data/img_000.fif"), p("data/img_001.fif")}},
    };
    std::vector<std::string> failed;
    for (const auto& [name, args] : commands) {
      const std::string manifest = p(name + ".jsonl");
      auto full = args;
      full.insert(full.end(), {"--jobs", "2", "--manifest", manifest});
      if (cli::run(full) != cli::kOk) {
        failed.push_back(name + "(run)");
        continue;
      }
      if (cli::run({"rerun", manifest}) != cli::kOk) failed.push_back(name + "(rerun)");
    }
    std::string detail = fmt("%zu commands replayed single-threaded", commands.size());
    if (failed.empty()) return {true, detail + ", all outputs bit-identical"};
    for (const auto& f : failed) detail += " " + f;
    return {false, detail + " failed"};
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria runner"};
  std::string work = (fs::temp_directory_path() / "robustsyn_acceptance").string();
  bool reuse = false;
  std::vector<std::string> only;
  app.add_option("--work-dir", work, "Directory for trained desk models and scratch files");
  app.add_flag("--reuse", reuse, "Reuse checkpoints already present in the work directory");
  app.add_option("--only", only, "Run only the named criteria")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  Runner runner(work, reuse);
  int failures = 0;
  for (const auto& c : runner.criteria()) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.name) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.body();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_budget = secs <= c.budget_seconds;
    const bool pass = o.pass && in_budget;
    if (!pass) ++failures;
    std::printf("%s %s [%.2f s, budget %.0f s%s] %s\n", pass ? "PASS" : "FAIL", c.name.c_str(), secs,
                c.budget_seconds, in_budget ? "" : ", over budget", o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
