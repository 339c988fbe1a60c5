#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "posestream/frame.hpp"
#include "posestream/metrics.hpp"
#include "posestream/simulator.hpp"
#include "posestream/tensor_archive.hpp"
#include "posestream/tracker.hpp"

// Dataset and result files. Every file is JSON Lines (one record per line);
// feature maps live in a tensor archive next to the frames file. Field names
// are documented in schema/interchange.schema.json.
namespace posestream::io {

inline constexpr const char* kFramesFile = "frames.jsonl";
inline constexpr const char* kAnnotationsFile = "annotations.jsonl";
inline constexpr const char* kIgnoreRegionsFile = "ignore_regions.jsonl";
inline constexpr const char* kFeaturesData = "features.bin";
inline constexpr const char* kFeaturesManifest = "features.manifest.json";
inline constexpr const char* kTracksFile = "tracks.jsonl";
inline constexpr const char* kEventsFile = "events.jsonl";
inline constexpr const char* kDiscardsFile = "discards.jsonl";

// ---------------------------------------------------------------------------
// Configuration documents. Parsers throw ConfigError naming the field.

SceneConfig parse_scene_config(const std::string& json_text);
std::string scene_config_json(const SceneConfig& cfg);

TrackerConfig parse_tracker_config(const std::string& json_text);
std::string tracker_config_json(const TrackerConfig& cfg);

/// FNV-1a over the canonical serialization (sorted keys), so the value does
/// not depend on field order in the source text. Throws ConfigError for
/// invalid JSON.
std::uint64_t config_hash(const std::string& json_text);
std::string hex64(std::uint64_t v);

std::string read_text(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Single records (one JSON object, no trailing newline)

std::string frame_record(const FrameObservation& frame, const std::string& feature_tensor);
std::string annotation_record(const Annotation& a);
std::string ignore_region_record(const IgnoreRegion& r);
std::string track_record(const TrackRecord& r);
std::string event_record(const LifecycleEvent& e);
std::string discard_record(const DiscardEntry& d);

Annotation parse_annotation(const std::string& line);
IgnoreRegion parse_ignore_region(const std::string& line);
TrackRecord parse_track(const std::string& line);
LifecycleEvent parse_event(const std::string& line);

// ---------------------------------------------------------------------------
// Datasets

class DatasetWriter {
 public:
  /// Creates `dir` if needed and truncates the dataset files in it.
  explicit DatasetWriter(const std::filesystem::path& dir);

  void add(const FrameObservation& frame);
  void finish();
  int frames_written() const { return frames_; }

 private:
  std::filesystem::path dir_;
  std::ofstream frames_out_, annotations_out_, regions_out_;
  TensorArchiveWriter features_;
  int frames_ = 0;
  bool finished_ = false;
};

/// Streams frames from a dataset directory. Annotations and ignore regions
/// are not attached; load them with the readers below. Throws DataError on
/// malformed input, naming the file and line.
class DatasetReader {
 public:
  explicit DatasetReader(const std::filesystem::path& dir);

  bool next(FrameObservation& out);
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  std::ifstream in_;
  std::optional<TensorArchive> features_;
  int line_ = 0;
};

std::vector<Annotation> read_annotations(const std::filesystem::path& path);
std::vector<IgnoreRegion> read_ignore_regions(const std::filesystem::path& path);
std::vector<TrackRecord> read_tracks(const std::filesystem::path& path);
std::vector<LifecycleEvent> read_events(const std::filesystem::path& path);

void write_tracks(const std::filesystem::path& path, std::span<const Snapshot> frames);
void write_events(const std::filesystem::path& path, std::span<const LifecycleEvent> events);
void write_discards(const std::filesystem::path& path, std::span<const DiscardEntry> log);

/// Machine-readable metrics report.
std::string report_json(const MetricsReport& r);

}  // namespace posestream::io
