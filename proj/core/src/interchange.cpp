#include "posestream/interchange.hpp"

#include <cstdio>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "posestream/errors.hpp"

namespace posestream::io {

using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Config documents: strict field access with ConfigError naming the field.

class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "must be an object");
  }

  template <typename T>
  std::optional<T> opt(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return std::nullopt;
    try {
      return it->get<T>();
    } catch (const json::exception&) {
      fail(name(key), "has the wrong type");
    }
  }

  template <typename T>
  T req(const std::string& key) {
    auto v = opt<T>(key);
    if (!v) fail(name(key), "is required");
    return *v;
  }

  template <typename T>
  void get(const std::string& key, T& target) {
    if (auto v = opt<T>(key)) target = *v;
  }

  void get_vec3(const std::string& key, Point3& target) {
    if (auto v = opt<std::array<double, 3>>(key)) target = {(*v)[0], (*v)[1], (*v)[2]};
  }

  const json* child(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() || it->is_null() ? nullptr : &*it;
  }

  std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  /// Rejects keys that were never asked for, so typos do not pass silently.
  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.contains(key)) fail(name(key), "is not a known field");
    }
  }

  [[noreturn]] static void fail(const std::string& field, const std::string& what) {
    throw ConfigError("config field '" + field + "' " + what);
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

json parse_config_text(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
}

json vec(const Eigen::Ref<const Eigen::VectorXd>& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json points_json(const std::vector<Point2>& pts) {
  json a = json::array();
  for (const auto& p : pts) a.push_back({p.x(), p.y()});
  return a;
}

std::vector<Point2> points_from(const json& j) {
  std::vector<Point2> out;
  for (const auto& p : j) {
    const auto xy = p.get<std::array<double, 2>>();
    out.emplace_back(xy[0], xy[1]);
  }
  return out;
}

json intrinsics_json(const Intrinsics& k) {
  return {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width}, {"height", k.height}};
}

Intrinsics intrinsics_from(const json& j) {
  Intrinsics k;
  k.fx = j.at("fx").get<double>();
  k.fy = j.at("fy").get<double>();
  k.cx = j.at("cx").get<double>();
  k.cy = j.at("cy").get<double>();
  k.width = j.at("width").get<int>();
  k.height = j.at("height").get<int>();
  return k;
}

json pose_json(const PoseState& p) {
  return {{"gamma", vec(p.gamma)}, {"theta", vec(p.theta)}, {"beta", vec(p.beta)}};
}

template <int N>
Eigen::Matrix<double, N, 1> fixed_vec(const json& j, const char* what) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != static_cast<std::size_t>(N)) {
    throw DataError(std::string(what) + " must have " + std::to_string(N) + " entries");
  }
  Eigen::Matrix<double, N, 1> out;
  for (int i = 0; i < N; ++i) out[i] = v[i];
  return out;
}

PoseState pose_from(const json& j) {
  PoseState p;
  p.gamma = fixed_vec<3>(j.at("gamma"), "pose.gamma");
  p.theta = fixed_vec<kNumPoseParams>(j.at("theta"), "pose.theta");
  p.beta = fixed_vec<kNumShapeParams>(j.at("beta"), "pose.beta");
  return p;
}

json keypoints_json(const KeypointSet& kp) {
  json valid = json::array();
  for (auto v : kp.valid) valid.push_back(v ? 1 : 0);
  return {{"points", points_json(kp.points)}, {"valid", valid}};
}

KeypointSet keypoints_from(const json& j, bool annotation) {
  KeypointSet kp;
  kp.points = points_from(j.at("points"));
  for (int v : j.at("valid").get<std::vector<int>>()) kp.valid.push_back(v ? 1 : 0);
  if (kp.points.size() != kp.valid.size()) throw DataError("keypoint and validity lengths differ");
  kp.is_annotation = annotation;
  return kp;
}

const char* motion_name(MotionKind k) {
  switch (k) {
    case MotionKind::kLinear: return "linear";
    case MotionKind::kCircular: return "circular";
    case MotionKind::kWaypoint: return "waypoint";
    case MotionKind::kConverge: return "converge";
  }
  return "linear";
}

const char* variant_name(UpdateVariant v) {
  switch (v) {
    case UpdateVariant::kFull: return "full";
    case UpdateVariant::kNoGru: return "no_gru";
    case UpdateVariant::kNoHidden: return "no_hidden";
  }
  return "full";
}

const char* reason_key(DeleteReason r) {
  switch (r) {
    case DeleteReason::kNone: return "";
    case DeleteReason::kLowScore: return "low_score";
    case DeleteReason::kYoung: return "young";
    case DeleteReason::kCollapse: return "collapse";
  }
  return "";
}

DeleteReason reason_from_key(const std::string& s) {
  if (s.empty()) return DeleteReason::kNone;
  if (s == "low_score") return DeleteReason::kLowScore;
  if (s == "young") return DeleteReason::kYoung;
  if (s == "collapse") return DeleteReason::kCollapse;
  throw DataError("unknown deletion kind '" + s + "'");
}

template <typename T, typename Parse>
std::vector<T> read_lines(const std::filesystem::path& path, Parse parse) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<T> out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(parse(line));
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

template <typename F>
auto guard(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw DataError(e.what());
  }
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

// ---------------------------------------------------------------------------
// Scene config fields

MotionModel motion_from(const json& j, const std::string& path) {
  Fields f(j, path);
  MotionModel m;
  const auto kind = f.req<std::string>("kind");
  if (kind == "linear") {
    m.kind = MotionKind::kLinear;
  } else if (kind == "circular") {
    m.kind = MotionKind::kCircular;
  } else if (kind == "waypoint") {
    m.kind = MotionKind::kWaypoint;
  } else if (kind == "converge") {
    m.kind = MotionKind::kConverge;
  } else {
    Fields::fail(f.name("kind"), "must be one of linear, circular, waypoint, converge");
  }
  f.get_vec3("start", m.start);
  f.get_vec3("velocity", m.velocity);
  f.get_vec3("center", m.center);
  f.get("radius", m.radius);
  f.get("angular_speed", m.angular_speed);
  f.get("phase", m.phase);
  f.get_vec3("target", m.target);
  f.get("time_constant", m.time_constant);
  if (const json* w = f.child("waypoints")) {
    if (!w->is_array()) Fields::fail(f.name("waypoints"), "must be an array");
    for (std::size_t i = 0; i < w->size(); ++i) {
      Fields wf((*w)[i], f.name("waypoints") + "[" + std::to_string(i) + "]");
      Waypoint p;
      p.frame = wf.req<int>("frame");
      const auto pos = wf.req<std::array<double, 3>>("position");
      p.position = {pos[0], pos[1], pos[2]};
      wf.finish();
      m.waypoints.push_back(p);
    }
  }
  f.finish();
  return m;
}

json motion_json(const MotionModel& m) {
  json j = {{"kind", motion_name(m.kind)}};
  switch (m.kind) {
    case MotionKind::kLinear:
      j["start"] = vec(m.start);
      j["velocity"] = vec(m.velocity);
      break;
    case MotionKind::kCircular:
      j["center"] = vec(m.center);
      j["radius"] = m.radius;
      j["angular_speed"] = m.angular_speed;
      j["phase"] = m.phase;
      break;
    case MotionKind::kWaypoint: {
      json w = json::array();
      for (const auto& p : m.waypoints) w.push_back({{"frame", p.frame}, {"position", vec(p.position)}});
      j["waypoints"] = w;
      break;
    }
    case MotionKind::kConverge:
      j["start"] = vec(m.start);
      j["target"] = vec(m.target);
      j["time_constant"] = m.time_constant;
      break;
  }
  return j;
}

void detection_fields(Fields& f, DetectionConfig& d) {
  f.get("confidence_threshold", d.confidence_threshold);
  f.get("nms_threshold", d.nms_threshold);
  f.get("match_min_score", d.match_min_score);
  f.get("max_negatives", d.max_negatives);
  f.get("decoder_seed", d.decoder_seed);
  f.get("anchors", d.anchors);
  f.get("strides", d.strides);
  f.get("z_default", d.z_default);
  if (const json* s = f.child("similarity")) {
    Fields sf(*s, f.name("similarity"));
    sf.get("kappa", d.similarity.kappa);
    sf.get("min_scale", d.similarity.min_scale);
    sf.finish();
  }
}

json detection_json(const DetectionConfig& d) {
  return {{"confidence_threshold", d.confidence_threshold},
          {"nms_threshold", d.nms_threshold},
          {"match_min_score", d.match_min_score},
          {"max_negatives", d.max_negatives},
          {"decoder_seed", d.decoder_seed},
          {"anchors", d.anchors},
          {"strides", d.strides},
          {"z_default", d.z_default},
          {"similarity", {{"kappa", d.similarity.kappa}, {"min_scale", d.similarity.min_scale}}}};
}

template <typename Validate>
void validated(Validate&& v) {
  try {
    v();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace

// ---------------------------------------------------------------------------

SceneConfig parse_scene_config(const std::string& json_text) {
  const json j = parse_config_text(json_text);
  Fields f(j, "");
  SceneConfig s;
  f.get("name", s.name);
  f.get("width", s.width);
  f.get("height", s.height);
  s.frames = f.req<int>("frames");
  f.get("seed", s.seed);
  if (const json* k = f.child("intrinsics")) {
    Fields kf(*k, "intrinsics");
    Intrinsics in;
    in.fx = kf.req<double>("fx");
    in.fy = kf.req<double>("fy");
    in.cx = kf.req<double>("cx");
    in.cy = kf.req<double>("cy");
    in.width = kf.req<int>("width");
    in.height = kf.req<int>("height");
    kf.finish();
    s.intrinsics = in;
  }
  const json* agents = f.child("agents");
  if (!agents) Fields::fail("agents", "is required");
  if (!agents->is_array()) Fields::fail("agents", "must be an array");
  for (std::size_t i = 0; i < agents->size(); ++i) {
    const std::string path = "agents[" + std::to_string(i) + "]";
    Fields af((*agents)[i], path);
    AgentConfig a;
    const json* m = af.child("motion");
    if (!m) Fields::fail(path + ".motion", "is required");
    a.motion = motion_from(*m, path + ".motion");
    af.get("yaw", a.yaw);
    if (auto beta = af.opt<std::vector<double>>("beta")) {
      if (beta->size() != kNumShapeParams) Fields::fail(path + ".beta", "must have 10 entries");
      for (int b = 0; b < kNumShapeParams; ++b) a.beta[b] = (*beta)[b];
    }
    af.get("pose_amplitude", a.pose_amplitude);
    af.get("annotated", a.annotated);
    af.get("first_frame", a.first_frame);
    af.get("last_frame", a.last_frame);
    af.finish();
    s.agents.push_back(std::move(a));
  }
  if (const json* occ = f.child("occluders")) {
    for (std::size_t i = 0; i < occ->size(); ++i) {
      Fields of((*occ)[i], "occluders[" + std::to_string(i) + "]");
      Occluder o;
      const auto b = of.req<std::array<double, 4>>("box");
      o.box = {b[0], b[1], b[2], b[3]};
      of.get("first_frame", o.first_frame);
      of.get("last_frame", o.last_frame);
      of.finish();
      s.occluders.push_back(o);
    }
  }
  if (const json* regions = f.child("ignore_regions")) {
    for (std::size_t i = 0; i < regions->size(); ++i) {
      const std::string path = "ignore_regions[" + std::to_string(i) + "]";
      Fields rf((*regions)[i], path);
      IgnoreScript r;
      const auto poly = rf.req<std::vector<std::array<double, 2>>>("polygon");
      for (const auto& p : poly) r.polygon.emplace_back(p[0], p[1]);
      rf.get("first_frame", r.first_frame);
      rf.get("last_frame", r.last_frame);
      rf.finish();
      s.ignore_regions.push_back(std::move(r));
    }
  }
  if (const json* n = f.child("noise")) {
    Fields nf(*n, "noise");
    nf.get("keypoint_sigma", s.noise.keypoint_sigma);
    nf.get("miss_probability", s.noise.miss_probability);
    nf.get("false_positive_rate", s.noise.false_positive_rate);
    nf.get("confidence_noise", s.noise.confidence_noise);
    nf.finish();
  }
  f.get("min_visible_fraction", s.min_visible_fraction);
  f.get("detection_logit", s.detection_logit);
  f.get("feature_channels", s.feature_channels);
  f.get("feature_stride", s.feature_stride);
  f.get("blob_sigma", s.blob_sigma);
  if (const json* d = f.child("detection")) {
    Fields df(*d, "detection");
    detection_fields(df, s.detection);
    df.finish();
  }
  f.finish();
  s.validate();
  return s;
}

std::string scene_config_json(const SceneConfig& s) {
  json agents = json::array();
  for (const auto& a : s.agents) {
    agents.push_back({{"motion", motion_json(a.motion)},
                      {"yaw", a.yaw},
                      {"beta", vec(a.beta)},
                      {"pose_amplitude", a.pose_amplitude},
                      {"annotated", a.annotated},
                      {"first_frame", a.first_frame},
                      {"last_frame", a.last_frame}});
  }
  json occluders = json::array();
  for (const auto& o : s.occluders) {
    occluders.push_back({{"box", {o.box.x0, o.box.y0, o.box.x1, o.box.y1}},
                         {"first_frame", o.first_frame},
                         {"last_frame", o.last_frame}});
  }
  json regions = json::array();
  for (const auto& r : s.ignore_regions) {
    regions.push_back({{"polygon", points_json(r.polygon)},
                       {"first_frame", r.first_frame},
                       {"last_frame", r.last_frame}});
  }
  json j = {{"name", s.name},
            {"width", s.width},
            {"height", s.height},
            {"frames", s.frames},
            {"seed", s.seed},
            {"agents", agents},
            {"occluders", occluders},
            {"ignore_regions", regions},
            {"noise",
             {{"keypoint_sigma", s.noise.keypoint_sigma},
              {"miss_probability", s.noise.miss_probability},
              {"false_positive_rate", s.noise.false_positive_rate},
              {"confidence_noise", s.noise.confidence_noise}}},
            {"min_visible_fraction", s.min_visible_fraction},
            {"detection_logit", s.detection_logit},
            {"feature_channels", s.feature_channels},
            {"feature_stride", s.feature_stride},
            {"blob_sigma", s.blob_sigma},
            {"detection", detection_json(s.detection)}};
  if (s.intrinsics) j["intrinsics"] = intrinsics_json(*s.intrinsics);
  return j.dump(2);
}

TrackerConfig parse_tracker_config(const std::string& json_text) {
  const json j = parse_config_text(json_text);
  Fields f(j, "");
  TrackerConfig c;
  if (auto u = f.opt<std::string>("updater")) {
    if (*u == "kinematic") {
      c.updater = UpdaterKind::kKinematic;
    } else if (*u == "learned") {
      c.updater = UpdaterKind::kLearned;
    } else {
      Fields::fail("updater", "must be 'kinematic' or 'learned'");
    }
  }
  f.get("alpha", c.alpha);
  f.get("instantiate_below", c.instantiate_below);
  f.get("delete_ema_below", c.delete_ema_below);
  f.get("young_age", c.young_age);
  f.get("young_oks_below", c.young_oks_below);
  f.get("collapse_oks_above", c.collapse_oks_above);
  f.get("collapse_frames", c.collapse_frames);
  f.get("initial_score", c.initial_score);
  f.get("input_size", c.input_size);
  if (const json* d = f.child("detection")) {
    Fields df(*d, "detection");
    detection_fields(df, c.detection);
    df.finish();
  }
  if (const json* k = f.child("kinematic")) {
    Fields kf(*k, "kinematic");
    kf.get("blend", c.kinematic.blend);
    kf.get("min_match_oks", c.kinematic.min_match_oks);
    kf.finish();
  }
  if (const json* u = f.child("update")) {
    Fields uf(*u, "update");
    uf.get("tokens", c.update.tokens);
    uf.get("width", c.update.width);
    uf.get("hidden", c.update.hidden);
    uf.get("heads", c.update.heads);
    uf.get("rounds", c.update.rounds);
    uf.get("feature_channels", c.update.feature_channels);
    uf.get("positional_channels", c.update.positional_channels);
    uf.get("seed", c.update.seed);
    if (auto v = uf.opt<std::string>("variant")) {
      if (*v == "full") {
        c.update.variant = UpdateVariant::kFull;
      } else if (*v == "no_gru") {
        c.update.variant = UpdateVariant::kNoGru;
      } else if (*v == "no_hidden") {
        c.update.variant = UpdateVariant::kNoHidden;
      } else {
        Fields::fail("update.variant", "must be one of full, no_gru, no_hidden");
      }
    }
    uf.finish();
  }
  f.finish();
  c.kinematic.similarity = c.detection.similarity;
  validated([&] { c.validate(); });
  return c;
}

std::string tracker_config_json(const TrackerConfig& c) {
  const json j = {
      {"updater", c.updater == UpdaterKind::kLearned ? "learned" : "kinematic"},
      {"alpha", c.alpha},
      {"instantiate_below", c.instantiate_below},
      {"delete_ema_below", c.delete_ema_below},
      {"young_age", c.young_age},
      {"young_oks_below", c.young_oks_below},
      {"collapse_oks_above", c.collapse_oks_above},
      {"collapse_frames", c.collapse_frames},
      {"initial_score", c.initial_score},
      {"input_size", c.input_size},
      {"detection", detection_json(c.detection)},
      {"kinematic", {{"blend", c.kinematic.blend}, {"min_match_oks", c.kinematic.min_match_oks}}},
      {"update",
       {{"tokens", c.update.tokens},
        {"width", c.update.width},
        {"hidden", c.update.hidden},
        {"heads", c.update.heads},
        {"rounds", c.update.rounds},
        {"feature_channels", c.update.feature_channels},
        {"positional_channels", c.update.positional_channels},
        {"seed", c.update.seed},
        {"variant", variant_name(c.update.variant)}}}};
  return j.dump(2);
}

std::uint64_t config_hash(const std::string& json_text) {
  const std::string canonical = parse_config_text(json_text).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// ---------------------------------------------------------------------------
// Records

std::string frame_record(const FrameObservation& frame, const std::string& feature_tensor) {
  json shapes = json::array();
  std::array<int, kNumLevels> strides{};
  int anchors = 0;
  json cells = json::array();
  for (int l = 0; l < kNumLevels; ++l) {
    const GridLevel& level = frame.grids.levels[l];
    shapes.push_back({level.rows, level.cols});
    strides[l] = level.stride;
    anchors = level.anchors;
    for (int r = 0; r < level.rows; ++r) {
      for (int c = 0; c < level.cols; ++c) {
        for (int a = 0; a < level.anchors; ++a) {
          const RawCell& cell = level.at(r, c, a);
          if (cell == RawCell{}) continue;
          json embedding = json::array();
          for (double e : cell.embedding) embedding.push_back(e);
          cells.push_back({{"level", l},
                           {"row", r},
                           {"col", c},
                           {"anchor", a},
                           {"du", cell.du},
                           {"dv", cell.dv},
                           {"z_log", cell.z_log},
                           {"root", vec(cell.root_orientation)},
                           {"embedding", embedding},
                           {"beta", vec(cell.beta)},
                           {"logit", cell.logit}});
        }
      }
    }
  }
  json j = {{"frame", frame.frame},
            {"intrinsics", intrinsics_json(frame.intrinsics)},
            {"grid", {{"strides", strides}, {"anchors", anchors}, {"shapes", shapes}}},
            {"cells", cells}};
  j["features"] = feature_tensor.empty() ? json(nullptr) : json(feature_tensor);
  return j.dump();
}

namespace {

FrameObservation parse_frame(const std::string& line, const std::optional<TensorArchive>& features) {
  return guard([&] {
    const json j = json::parse(line);
    FrameObservation f;
    f.frame = j.at("frame").get<int>();
    f.intrinsics = intrinsics_from(j.at("intrinsics"));
    try {
      f.intrinsics.validate();
    } catch (const InvalidArgument& e) {
      throw DataError(e.what());
    }
    const json& g = j.at("grid");
    const auto strides = g.at("strides").get<std::array<int, kNumLevels>>();
    const int anchors = g.at("anchors").get<int>();
    for (int s : strides) {
      if (s <= 0) throw DataError("grid strides must be positive");
    }
    if (anchors < 1) throw DataError("grid anchors must be positive");
    f.grids = GridOutput::empty(f.intrinsics.width, f.intrinsics.height, strides, anchors);
    const auto shapes = g.at("shapes").get<std::vector<std::array<int, 2>>>();
    if (shapes.size() != kNumLevels) throw DataError("grid must list three level shapes");
    for (int l = 0; l < kNumLevels; ++l) {
      if (shapes[l][0] != f.grids.levels[l].rows || shapes[l][1] != f.grids.levels[l].cols) {
        throw DataError("grid level " + std::to_string(l) + " shape does not match the image size");
      }
    }
    for (const auto& c : j.at("cells")) {
      const int l = c.at("level").get<int>();
      const int r = c.at("row").get<int>();
      const int col = c.at("col").get<int>();
      const int a = c.at("anchor").get<int>();
      if (l < 0 || l >= kNumLevels) throw DataError("cell level out of range");
      GridLevel& level = f.grids.levels[l];
      if (r < 0 || r >= level.rows || col < 0 || col >= level.cols || a < 0 || a >= level.anchors) {
        throw DataError("cell index out of range");
      }
      RawCell& cell = level.at(r, col, a);
      cell.du = c.at("du").get<double>();
      cell.dv = c.at("dv").get<double>();
      cell.z_log = c.at("z_log").get<double>();
      cell.root_orientation = fixed_vec<3>(c.at("root"), "cell.root");
      cell.embedding = c.at("embedding").get<std::vector<double>>();
      if (!cell.embedding.empty() && cell.embedding.size() != kEmbeddingDim) {
        throw DataError("cell embedding must have 256 entries");
      }
      cell.beta = fixed_vec<kNumShapeParams>(c.at("beta"), "cell.beta");
      cell.logit = c.at("logit").get<double>();
    }
    const json& ft = j.at("features");
    if (!ft.is_null()) {
      if (!features) throw DataError("frame references features but the dataset has no feature archive");
      const std::string name = ft.get<std::string>();
      const TensorEntry& e = features->entry(name);
      if (e.shape.size() != 3) throw DataError("feature tensor '" + name + "' must be 3-dimensional");
      f.features.rows = static_cast<int>(e.shape[0]);
      f.features.cols = static_cast<int>(e.shape[1]);
      f.features.channels = static_cast<int>(e.shape[2]);
      f.features.data = features->read_f32(name);
    }
    return f;
  });
}

}  // namespace

std::string annotation_record(const Annotation& a) {
  json j = {{"frame", a.frame}, {"track_id", a.track_id}, {"keypoints", keypoints_json(a.keypoints)}};
  if (a.joints3d) {
    json pts = json::array();
    for (const auto& p : *a.joints3d) pts.push_back(vec(p));
    j["joints3d"] = pts;
  }
  if (a.pose) j["pose"] = pose_json(*a.pose);
  j["has_beta"] = a.has_beta;
  return j.dump();
}

Annotation parse_annotation(const std::string& line) {
  return guard([&] {
    const json j = json::parse(line);
    Annotation a;
    a.frame = j.at("frame").get<int>();
    a.track_id = j.at("track_id").get<int>();
    a.keypoints = keypoints_from(j.at("keypoints"), true);
    if (j.contains("joints3d")) {
      std::vector<Point3> pts;
      for (const auto& p : j.at("joints3d")) pts.push_back(fixed_vec<3>(p, "joints3d entry"));
      a.joints3d = std::move(pts);
    }
    if (j.contains("pose")) a.pose = pose_from(j.at("pose"));
    a.has_beta = j.value("has_beta", false);
    return a;
  });
}

std::string ignore_region_record(const IgnoreRegion& r) {
  return json{{"frame", r.frame}, {"polygon", points_json(r.polygon)}}.dump();
}

IgnoreRegion parse_ignore_region(const std::string& line) {
  return guard([&] {
    const json j = json::parse(line);
    return IgnoreRegion{j.at("frame").get<int>(), points_from(j.at("polygon"))};
  });
}

std::string track_record(const TrackRecord& r) {
  return json{{"frame", r.frame},
              {"id", r.id},
              {"pose", pose_json(r.pose)},
              {"keypoints", keypoints_json(r.keypoints)},
              {"ema_score", r.ema_score},
              {"age", r.age}}
      .dump();
}

TrackRecord parse_track(const std::string& line) {
  return guard([&] {
    const json j = json::parse(line);
    TrackRecord r;
    r.frame = j.at("frame").get<int>();
    r.id = j.at("id").get<int>();
    r.pose = pose_from(j.at("pose"));
    r.keypoints = keypoints_from(j.at("keypoints"), false);
    r.ema_score = j.at("ema_score").get<double>();
    r.age = j.at("age").get<int>();
    return r;
  });
}

std::string event_record(const LifecycleEvent& e) {
  json j = {{"frame", e.frame},
            {"track_id", e.track_id},
            {"event", e.kind == EventKind::kInstantiate ? "instantiate" : "delete"},
            {"ema_score", e.ema_score},
            {"age", e.age}};
  if (e.kind == EventKind::kDelete) {
    j["kind"] = reason_key(e.reason);
    j["reason"] = reason_text(e.reason);
  }
  if (e.peer) j["peer"] = *e.peer;
  if (e.oks) j["oks"] = *e.oks;
  return j.dump();
}

LifecycleEvent parse_event(const std::string& line) {
  return guard([&] {
    const json j = json::parse(line);
    LifecycleEvent e;
    e.frame = j.at("frame").get<int>();
    e.track_id = j.at("track_id").get<int>();
    const auto kind = j.at("event").get<std::string>();
    if (kind == "instantiate") {
      e.kind = EventKind::kInstantiate;
    } else if (kind == "delete") {
      e.kind = EventKind::kDelete;
      e.reason = reason_from_key(j.at("kind").get<std::string>());
    } else {
      throw DataError("unknown event '" + kind + "'");
    }
    e.ema_score = j.at("ema_score").get<double>();
    e.age = j.at("age").get<int>();
    if (j.contains("peer")) e.peer = j.at("peer").get<int>();
    if (j.contains("oks")) e.oks = j.at("oks").get<double>();
    return e;
  });
}

std::string discard_record(const DiscardEntry& d) {
  return json{{"frame", d.frame},
              {"track_id", d.track_id},
              {"box", {d.box.x0, d.box.y0, d.box.x1, d.box.y1}},
              {"region", d.region},
              {"iou", d.iou},
              {"overlap_fraction", d.overlap_fraction},
              {"discarded", d.discarded}}
      .dump();
}

// ---------------------------------------------------------------------------
// Datasets

DatasetWriter::DatasetWriter(const std::filesystem::path& dir)
    : dir_((std::filesystem::create_directories(dir), dir)),
      frames_out_(open_out(dir / kFramesFile)),
      annotations_out_(open_out(dir / kAnnotationsFile)),
      regions_out_(open_out(dir / kIgnoreRegionsFile)),
      features_(dir / kFeaturesData) {}

void DatasetWriter::add(const FrameObservation& frame) {
  std::string tensor;
  if (!frame.features.empty()) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%06d", frame.frame);
    tensor = name;
    features_.add(tensor, std::span<const float>(frame.features.data),
                  {frame.features.rows, frame.features.cols, frame.features.channels});
  }
  frames_out_ << frame_record(frame, tensor) << '\n';
  for (const auto& a : frame.annotations) annotations_out_ << annotation_record(a) << '\n';
  for (const auto& r : frame.ignore_regions) regions_out_ << ignore_region_record(r) << '\n';
  ++frames_;
}

void DatasetWriter::finish() {
  if (finished_) return;
  finished_ = true;
  features_.finish(dir_ / kFeaturesManifest);
  for (auto* out : {&frames_out_, &annotations_out_, &regions_out_}) {
    out->flush();
    if (!*out) throw DataError("write failed in " + dir_.string());
  }
}

DatasetReader::DatasetReader(const std::filesystem::path& dir) : dir_(dir), in_(dir / kFramesFile) {
  if (!in_) throw DataError("no " + std::string(kFramesFile) + " in " + dir.string());
  if (std::filesystem::exists(dir / kFeaturesManifest)) {
    features_ = TensorArchive::open(dir / kFeaturesManifest);
  }
}

bool DatasetReader::next(FrameObservation& out) {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_;
    if (line.empty()) continue;
    try {
      out = parse_frame(line, features_);
    } catch (const DataError& e) {
      throw DataError((dir_ / kFramesFile).string() + ":" + std::to_string(line_) + ": " + e.what());
    }
    return true;
  }
  return false;
}

std::vector<Annotation> read_annotations(const std::filesystem::path& path) {
  return read_lines<Annotation>(path, parse_annotation);
}

std::vector<IgnoreRegion> read_ignore_regions(const std::filesystem::path& path) {
  return read_lines<IgnoreRegion>(path, parse_ignore_region);
}

std::vector<TrackRecord> read_tracks(const std::filesystem::path& path) {
  return read_lines<TrackRecord>(path, parse_track);
}

std::vector<LifecycleEvent> read_events(const std::filesystem::path& path) {
  return read_lines<LifecycleEvent>(path, parse_event);
}

void write_tracks(const std::filesystem::path& path, std::span<const Snapshot> frames) {
  auto out = open_out(path);
  for (const auto& s : frames) {
    for (const auto& t : s.tracks) out << track_record(t) << '\n';
  }
  if (!out.flush()) throw DataError("write failed for " + path.string());
}

void write_events(const std::filesystem::path& path, std::span<const LifecycleEvent> events) {
  auto out = open_out(path);
  for (const auto& e : events) out << event_record(e) << '\n';
  if (!out.flush()) throw DataError("write failed for " + path.string());
}

void write_discards(const std::filesystem::path& path, std::span<const DiscardEntry> log) {
  auto out = open_out(path);
  for (const auto& d : log) out << discard_record(d) << '\n';
  if (!out.flush()) throw DataError("write failed for " + path.string());
}

std::string report_json(const MetricsReport& r) {
  json j = {{"mota", r.mota},
            {"idf1", r.idf1},
            {"idp", r.idp},
            {"idr", r.idr},
            {"id_switches", r.id_switches},
            {"fp", r.fp},
            {"fn", r.fn},
            {"gt_count", r.gt_count},
            {"matches", r.matches},
            {"predictions", r.predictions},
            {"discarded", r.discarded},
            {"ignore_mode", ignore_mode_name(r.ignore_mode)}};
  if (r.pose) {
    json pck = json::object();
    for (const auto& [th, v] : r.pose->pck) {
      char key[32];
      std::snprintf(key, sizeof key, "%g", th);
      pck[key] = v;
    }
    j["pose"] = {{"pck", pck},
                 {"mpjpe_mm", r.pose->mpjpe},
                 {"pa_mpjpe_mm", r.pose->pa_mpjpe},
                 {"pairs", r.pose->pairs},
                 {"pairs_3d", r.pose->pairs_3d}};
  }
  return j.dump(2);
}

}  // namespace posestream::io
