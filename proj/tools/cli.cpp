#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>

#if __has_include(<CLI/CLI.hpp>)
#include <CLI/CLI.hpp>
#else
#include <CLI11.hpp>
#endif
#include <nlohmann/json.hpp>
#include <spdlog/cfg/env.h>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "posestream/errors.hpp"
#include "posestream/interchange.hpp"
#include "posestream/metrics.hpp"
#include "posestream/simulator.hpp"
#include "posestream/tracker.hpp"

namespace posestream::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kInterchangeVersion = 1;

class Stopwatch {
 public:
  double ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void init_logging() {
  static const bool done = [] {
    auto logger = spdlog::stderr_logger_mt("posestream");
    logger->set_level(spdlog::level::warn);
    spdlog::set_default_logger(logger);
    spdlog::cfg::load_env_levels();  // SPDLOG_LEVEL=info, debug, ...
    return true;
  }();
  (void)done;
}

json versions() {
  return {{"posestream", POSESTREAM_VERSION}, {"interchange", kInterchangeVersion}};
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string scenario;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> frames;
  std::string out;
};

int cmd_simulate(const SimulateArgs& a, std::ostream& out) {
  Stopwatch total;
  if (a.scenario.empty() == a.config.empty()) {
    throw ConfigError("simulate needs exactly one of --scenario or --config");
  }
  SceneConfig cfg = a.config.empty() ? scenario(a.scenario) : io::parse_scene_config(io::read_text(a.config));
  if (a.seed) cfg.seed = *a.seed;
  if (a.frames) cfg.frames = *a.frames;
  cfg.validate();

  const std::string resolved = io::scene_config_json(cfg);
  const fs::path dir(a.out);
  fs::create_directories(dir);
  write_text(dir / "config.json", resolved + "\n");

  Stopwatch sim;
  const SceneGenerator gen(cfg);
  io::DatasetWriter writer(dir);
  std::size_t annotations = 0;
  std::size_t regions = 0;
  for (int t = 0; t < gen.frame_count(); ++t) {
    const FrameObservation f = gen.frame(t);
    annotations += f.annotations.size();
    regions += f.ignore_regions.size();
    writer.add(f);
  }
  writer.finish();
  const double sim_ms = sim.ms();

  int identities = 0;
  for (const auto& agent : cfg.agents) identities += agent.annotated ? 1 : 0;

  write_json(dir / "manifest.json",
             {{"command", "simulate"},
              {"config_hash", io::hex64(io::config_hash(resolved))},
              {"seed", cfg.seed},
              {"scenario", cfg.name},
              {"frame_count", cfg.frames},
              {"versions", versions()},
              {"inputs", {{"config", a.config.empty() ? json(nullptr) : json(a.config)},
                          {"scenario", a.scenario.empty() ? json(nullptr) : json(a.scenario)}}},
              {"outputs",
               {"config.json", io::kFramesFile, io::kAnnotationsFile, io::kIgnoreRegionsFile,
                io::kFeaturesData, io::kFeaturesManifest}},
              {"wall_clock_ms", {{"simulate", sim_ms}, {"total", total.ms()}}}});
  spdlog::info("simulated {} frames in {:.1f} ms", cfg.frames, sim_ms);
  out << "scenario " << cfg.name << ": " << cfg.frames << " frames, " << identities
      << " annotated identities, " << annotations << " annotations, " << regions
      << " ignore regions\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct TrackArgs {
  std::string dataset;
  std::string config;
  std::string updater;
  std::string out;
};

int cmd_track(const TrackArgs& a, std::ostream& out) {
  Stopwatch total;
  std::string config_text = "{}";
  if (!a.config.empty()) config_text = io::read_text(a.config);
  TrackerConfig cfg = io::parse_tracker_config(config_text);
  if (a.updater == "kinematic") {
    cfg.updater = UpdaterKind::kKinematic;
  } else if (a.updater == "learned") {
    cfg.updater = UpdaterKind::kLearned;
  }
  const std::string resolved = io::tracker_config_json(cfg);

  io::DatasetReader reader(a.dataset);
  Tracker tracker(cfg);
  std::vector<Snapshot> snapshots;
  FrameObservation frame;
  Stopwatch run;
  while (reader.next(frame)) {
    if (frame.intrinsics.width != cfg.input_size || frame.intrinsics.height != cfg.input_size) {
      throw DataError("frame " + std::to_string(frame.frame) + " is " +
                      std::to_string(frame.intrinsics.width) + "x" +
                      std::to_string(frame.intrinsics.height) + " but input_size is " +
                      std::to_string(cfg.input_size));
    }
    try {
      snapshots.push_back(tracker.step(frame));
    } catch (const OutOfOrderFrame& e) {
      throw DataError(e.what());
    }
  }
  if (snapshots.empty()) throw DataError("dataset " + a.dataset + " contains no frames");
  const double run_ms = run.ms();

  const fs::path dir(a.out);
  fs::create_directories(dir);
  io::write_tracks(dir / io::kTracksFile, snapshots);
  io::write_events(dir / io::kEventsFile, tracker.events());

  TrackHistory summary{{}, tracker.events()};
  const std::size_t created = summary.count(EventKind::kInstantiate);
  const std::size_t deleted = summary.count(EventKind::kDelete);
  write_json(dir / "manifest.json",
             {{"command", "track"},
              {"config_hash", io::hex64(io::config_hash(resolved))},
              {"config", json::parse(resolved)},
              {"versions", versions()},
              {"inputs", {{"dataset", a.dataset}, {"config", a.config.empty() ? json(nullptr) : json(a.config)}}},
              {"outputs", {io::kTracksFile, io::kEventsFile}},
              {"frame_count", snapshots.size()},
              {"wall_clock_ms", {{"track", run_ms}, {"total", total.ms()}}}});
  spdlog::info("tracked {} frames in {:.1f} ms", snapshots.size(), run_ms);

  out << "frames " << snapshots.size() << '\n'
      << "tracks created " << created << '\n'
      << "tracks deleted " << deleted << '\n';
  for (auto r : {DeleteReason::kLowScore, DeleteReason::kYoung, DeleteReason::kCollapse}) {
    out << "  " << reason_text(r) << ": " << summary.count(r) << '\n';
  }
  out << "tracks active at end " << tracker.tracks().size() << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------

struct EvaluateArgs {
  std::string gt;
  std::string tracks;
  std::string ignore_mode = "fixed";
  std::string match = "oks";
  double threshold = 0.5;
  bool pose_metrics = false;
  double pck_reference = 1.0;
  std::vector<double> pck_thresholds{0.05, 0.1, 0.2};
  std::string out;
};

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out) {
  Stopwatch total;
  EvaluationConfig cfg;
  cfg.ignore.mode = a.ignore_mode == "buggy" ? IgnoreMode::kBuggyIou : IgnoreMode::kFixedFraction;
  cfg.match.similarity = a.match == "iou" ? MatchSimilarity::kBoxIou : MatchSimilarity::kOks;
  cfg.match.threshold = a.threshold;
  cfg.pose_metrics = a.pose_metrics;
  cfg.pck_reference = a.pck_reference;
  cfg.pck_thresholds = a.pck_thresholds;

  const fs::path gt_dir(a.gt);
  const auto gt = io::read_annotations(gt_dir / io::kAnnotationsFile);
  std::vector<IgnoreRegion> regions;
  if (fs::exists(gt_dir / io::kIgnoreRegionsFile)) regions = io::read_ignore_regions(gt_dir / io::kIgnoreRegionsFile);
  const auto preds = io::read_tracks(fs::path(a.tracks) / io::kTracksFile);

  // Frame ranges must agree when the dataset declares its length.
  if (fs::exists(gt_dir / "manifest.json")) {
    try {
      const json m = json::parse(io::read_text(gt_dir / "manifest.json"));
      if (m.contains("frame_count")) {
        const int n = m.at("frame_count").get<int>();
        for (const auto& p : preds) {
          if (p.frame < 0 || p.frame >= n) {
            throw DataError("track record for frame " + std::to_string(p.frame) +
                            " is outside the dataset's " + std::to_string(n) + " frames");
          }
        }
      }
    } catch (const json::exception& e) {
      throw DataError("malformed dataset manifest: " + std::string(e.what()));
    }
  }

  Evaluation ev;
  try {
    ev = evaluate(gt, regions, preds, cfg);
  } catch (const DegeneratePolygon& e) {
    throw DataError(e.what());
  }

  const fs::path dir(a.out);
  fs::create_directories(dir);
  const std::string text = format_report(ev.report);
  write_text(dir / "report.txt", text);
  write_text(dir / "report.json", io::report_json(ev.report) + "\n");
  io::write_discards(dir / io::kDiscardsFile, ev.discards);
  write_json(dir / "manifest.json",
             {{"command", "evaluate"},
              {"versions", versions()},
              {"settings",
               {{"ignore_mode", a.ignore_mode},
                {"match", a.match},
                {"threshold", a.threshold},
                {"pose_metrics", a.pose_metrics},
                {"pck_reference", a.pck_reference},
                {"pck_thresholds", a.pck_thresholds}}},
              {"inputs", {{"gt", a.gt}, {"tracks", a.tracks}}},
              {"outputs", {"report.txt", "report.json", io::kDiscardsFile}},
              {"wall_clock_ms", {{"total", total.ms()}}}});
  out << text;
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  init_logging();
  CLI::App app{"posestream: synthetic multi-person 3D pose tracking"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic dataset");
  simulate->add_option("--scenario", sim.scenario, "Named scenario");
  simulate->add_option("--config", sim.config, "Scene config file (JSON)");
  simulate->add_option("--seed", sim.seed, "Override the random seed");
  simulate->add_option("--frames", sim.frames, "Override the frame count");
  simulate->add_option("--out", sim.out, "Output directory")->required();

  TrackArgs trk;
  auto* track = app.add_subcommand("track", "Run the tracker over a dataset");
  track->add_option("dataset", trk.dataset, "Dataset directory")->required();
  track->add_option("--config", trk.config, "Tracker config file (JSON)");
  track->add_option("--updater", trk.updater, "Override the updater")
      ->check(CLI::IsMember({"kinematic", "learned"}));
  track->add_option("--out", trk.out, "Output directory")->required();

  EvaluateArgs ev;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Score track files against ground truth");
  evaluate_cmd->add_option("--gt", ev.gt, "Dataset directory with annotations")->required();
  evaluate_cmd->add_option("--tracks", ev.tracks, "Directory with tracks.jsonl")->required();
  evaluate_cmd->add_option("--ignore-mode", ev.ignore_mode, "Ignore-region rule")
      ->check(CLI::IsMember({"buggy", "fixed"}));
  evaluate_cmd->add_option("--match", ev.match, "Similarity for matching")
      ->check(CLI::IsMember({"oks", "iou"}));
  evaluate_cmd->add_option("--threshold", ev.threshold, "Match threshold")->check(CLI::Range(0.0, 1.0));
  evaluate_cmd->add_flag("--pose-metrics", ev.pose_metrics, "Add PCK, MPJPE and PA-MPJPE");
  evaluate_cmd->add_option("--pck-reference", ev.pck_reference, "PCK normalization length in meters")
      ->check(CLI::PositiveNumber);
  evaluate_cmd->add_option("--pck-thresholds", ev.pck_thresholds, "PCK thresholds");
  evaluate_cmd->add_option("--out", ev.out, "Output directory")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*simulate) return cmd_simulate(sim, out);
    if (*track) return cmd_track(trk, out);
    if (*evaluate_cmd) return cmd_evaluate(ev, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const UnknownScenario& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  }
  return kUsage;
}

}  // namespace posestream::cli
