#include "posestream/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "posestream/errors.hpp"
#include "posestream/random.hpp"

namespace posestream {

namespace {

constexpr double kPi = std::numbers::pi;

// Salts separating the random streams of one frame.
enum Stream : std::uint64_t {
  kPoseStream = 0x905e,
  kJitterStream = 0x717e,
  kMissStream = 0x5155,
  kFalsePositiveStream = 0xfa15e,
};

constexpr double kMinDepth = 0.05;
constexpr double kPersonHeight = 1.7;  // meters, for pixel-to-depth noise conversion

bool in_image(const Point3& joint, const Point2& uv, const Intrinsics& k) {
  return joint.z() > kMinDepth && uv.x() >= 0.0 && uv.x() < k.width && uv.y() >= 0.0 &&
         uv.y() < k.height;
}

bool inside(const Box& b, const Point2& p) {
  return p.x() >= b.x0 && p.x() <= b.x1 && p.y() >= b.y0 && p.y() <= b.y1;
}

[[noreturn]] void config_error(const std::string& field, const std::string& what) {
  throw ConfigError("scene config: " + field + ": " + what);
}

void add_blob(ImageFeatureMap& f, int channel, double col, double row, double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  const int c0 = std::max(0, static_cast<int>(std::floor(col)) - radius);
  const int c1 = std::min(f.cols - 1, static_cast<int>(std::floor(col)) + radius);
  const int r0 = std::max(0, static_cast<int>(std::floor(row)) - radius);
  const int r1 = std::min(f.rows - 1, static_cast<int>(std::floor(row)) + radius);
  for (int r = r0; r <= r1; ++r) {
    for (int c = c0; c <= c1; ++c) {
      const double dc = c + 0.5 - col;
      const double dr = r + 0.5 - row;
      f.at(r, c, channel) += static_cast<float>(std::exp(-(dc * dc + dr * dr) / (2.0 * sigma * sigma)));
    }
  }
}

}  // namespace

Point3 MotionModel::position(int frame) const {
  const double t = frame;
  switch (kind) {
    case MotionKind::kLinear:
      return start + t * velocity;
    case MotionKind::kCircular: {
      const double a = angular_speed * t + phase;
      return center + Point3(radius * std::cos(a), 0.0, radius * std::sin(a));
    }
    case MotionKind::kWaypoint: {
      if (waypoints.empty()) return start;
      if (frame <= waypoints.front().frame) return waypoints.front().position;
      for (std::size_t i = 1; i < waypoints.size(); ++i) {
        const auto& a = waypoints[i - 1];
        const auto& b = waypoints[i];
        if (frame <= b.frame) {
          const double s = static_cast<double>(frame - a.frame) / (b.frame - a.frame);
          return a.position + s * (b.position - a.position);
        }
      }
      return waypoints.back().position;
    }
    case MotionKind::kConverge:
      return target + (start - target) * std::exp(-t / time_constant);
  }
  return start;
}

void SceneConfig::validate() const {
  if (frames < 1) config_error("frames", "must be at least 1");
  if (width < 1 || height < 1) config_error("width/height", "must be positive");
  if (intrinsics) {
    try {
      intrinsics->validate();
    } catch (const InvalidArgument& e) {
      config_error("intrinsics", e.what());
    }
  }
  const auto probability = [](double p, const char* field) {
    if (!(p >= 0.0 && p <= 1.0)) config_error(field, "must lie in [0, 1]");
  };
  probability(noise.miss_probability, "noise.miss_probability");
  probability(min_visible_fraction, "min_visible_fraction");
  if (!(noise.keypoint_sigma >= 0.0)) config_error("noise.keypoint_sigma", "must be non-negative");
  if (!(noise.false_positive_rate >= 0.0)) config_error("noise.false_positive_rate", "must be non-negative");
  if (!(noise.confidence_noise >= 0.0)) config_error("noise.confidence_noise", "must be non-negative");
  if (feature_channels < 1) config_error("feature_channels", "must be positive");
  if (feature_stride < 1) config_error("feature_stride", "must be positive");
  if (!(blob_sigma > 0.0)) config_error("blob_sigma", "must be positive");
  try {
    detection.validate();
  } catch (const InvalidArgument& e) {
    config_error("detection", e.what());
  }

  for (std::size_t a = 0; a < agents.size(); ++a) {
    const auto& agent = agents[a];
    const std::string field = "agents[" + std::to_string(a) + "]";
    const auto& m = agent.motion;
    if (m.kind == MotionKind::kWaypoint) {
      if (m.waypoints.empty()) config_error(field + ".motion.waypoints", "must not be empty");
      for (std::size_t i = 1; i < m.waypoints.size(); ++i) {
        if (m.waypoints[i].frame <= m.waypoints[i - 1].frame) {
          config_error(field + ".motion.waypoints", "frames must increase");
        }
      }
    }
    if (m.kind == MotionKind::kConverge && !(m.time_constant > 0.0)) {
      config_error(field + ".motion.time_constant", "must be positive");
    }
    if (!(agent.pose_amplitude >= 0.0)) config_error(field + ".pose_amplitude", "must be non-negative");
    if ((agent.beta.array().abs() > kShapeLimit).any()) {
      config_error(field + ".beta", "coefficients must lie in [-5, 5]");
    }
    bool in_front = false;
    for (int t = std::max(0, agent.first_frame); t < frames && agent.active(t); ++t) {
      if (m.position(t).z() > kMinDepth) {
        in_front = true;
        break;
      }
    }
    if (!in_front) config_error(field + ".motion", "agent is never in front of the camera");
  }
  for (std::size_t i = 0; i < occluders.size(); ++i) {
    if (!(occluders[i].box.area() > 0.0)) {
      config_error("occluders[" + std::to_string(i) + "].box", "must have positive area");
    }
  }
  for (std::size_t i = 0; i < ignore_regions.size(); ++i) {
    if (!is_simple(ignore_regions[i].polygon)) {
      config_error("ignore_regions[" + std::to_string(i) + "].polygon", "must be a simple polygon");
    }
  }
}

bool write_detection(GridOutput& grids, const PoseState& pose, double logit, const Intrinsics& k,
                     const DetectionConfig& cfg, const PoseDecoder& decoder) {
  const double z = pose.gamma.z();
  if (!(z > 0.0)) return false;
  const Point2 uv = project(pose.gamma, k);

  std::array<int, kNumLevels> order{};
  std::array<double, kNumLevels> z_log{};
  for (int l = 0; l < kNumLevels; ++l) {
    order[l] = l;
    z_log[l] = std::log(z / (cfg.z_default[l] * k.fx));
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return std::abs(z_log[a]) < std::abs(z_log[b]); });

  for (int l : order) {
    GridLevel& level = grids.levels[l];
    const int row = std::clamp(static_cast<int>(std::floor(uv.y() / level.stride)), 0, level.rows - 1);
    const int col = std::clamp(static_cast<int>(std::floor(uv.x() / level.stride)), 0, level.cols - 1);
    for (int a = 0; a < level.anchors; ++a) {
      RawCell& cell = level.at(row, col, a);
      if (cell.logit != kBackgroundLogit) continue;
      const Point2 base = level.base_pixel(row, col);
      cell.du = uv.x() - base.x();
      cell.dv = uv.y() - base.y();
      cell.z_log = z_log[l];
      cell.root_orientation = pose.root_orientation();
      cell.embedding = decoder.encode(pose.theta.tail<kNumBodyPoseParams>());
      cell.beta = pose.beta;
      cell.logit = logit;
      return true;
    }
  }
  return false;
}

SceneGenerator::SceneGenerator(SceneConfig cfg, const Skeleton& skel)
    : cfg_(std::move(cfg)), skel_(skel), k_(cfg_.camera()),
      decoder_(shared_pose_decoder(cfg_.detection.decoder_seed)) {
  cfg_.validate();
}

PoseState SceneGenerator::agent_pose(int agent, int frame) const {
  const AgentConfig& a = cfg_.agents.at(static_cast<std::size_t>(agent));
  PoseState p;
  p.gamma = a.motion.position(frame);
  p.theta.setZero();
  p.theta[1] = a.yaw;
  Rng rng = Rng::derive(cfg_.seed, kPoseStream, static_cast<std::uint64_t>(agent));
  const double t = frame;
  for (int i = 3; i < kNumPoseParams; ++i) {
    const double a1 = a.pose_amplitude * rng.uniform(0.3, 1.0);
    const double w1 = rng.uniform(0.02, 0.08);
    const double p1 = rng.uniform(0.0, 2.0 * kPi);
    const double a2 = 0.5 * a.pose_amplitude * rng.uniform(0.3, 1.0);
    const double w2 = rng.uniform(0.05, 0.15);
    const double p2 = rng.uniform(0.0, 2.0 * kPi);
    p.theta[i] = a1 * std::sin(w1 * t + p1) + a2 * std::sin(w2 * t + p2);
  }
  p.beta = a.beta;
  canonicalize(p);
  return p;
}

SceneGenerator::Placement SceneGenerator::build(int t) const {
  if (t < 0 || t >= cfg_.frames) {
    throw InvalidArgument("simulator: frame " + std::to_string(t) + " outside the sequence");
  }
  Placement out;
  FrameObservation& obs = out.obs;
  obs.frame = t;
  obs.intrinsics = k_;
  obs.grids = GridOutput::empty(cfg_.width, cfg_.height, cfg_.detection.strides, cfg_.detection.anchors);
  const int frows = (cfg_.height + cfg_.feature_stride - 1) / cfg_.feature_stride;
  const int fcols = (cfg_.width + cfg_.feature_stride - 1) / cfg_.feature_stride;
  obs.features = ImageFeatureMap::zeros(frows, fcols, cfg_.feature_channels);
  out.detected.assign(cfg_.agents.size(), 0);

  const auto& noise = cfg_.noise;
  for (std::size_t a = 0; a < cfg_.agents.size(); ++a) {
    const AgentConfig& agent = cfg_.agents[a];
    if (!agent.active(t)) continue;
    const PoseState pose = agent_pose(static_cast<int>(a), t);
    const JointPositions joints = forward_kinematics(pose, skel_);

    KeypointSet kp;
    kp.points.resize(kNumJoints, Point2::Zero());
    kp.valid.assign(kNumJoints, 0);
    kp.is_annotation = true;
    int visible = 0;
    for (int j = 0; j < kNumJoints; ++j) {
      if (joints[j].z() <= kMinDepth) continue;
      const Point2 uv = project(joints[j], k_);
      kp.points[j] = uv;
      if (!in_image(joints[j], uv, k_)) continue;
      kp.valid[j] = 1;
      const bool hidden = std::any_of(cfg_.occluders.begin(), cfg_.occluders.end(),
                                      [&](const Occluder& o) { return o.active(t) && inside(o.box, uv); });
      if (!hidden) ++visible;
      add_blob(obs.features, skel_.shape_group(j) % cfg_.feature_channels,
               uv.x() / cfg_.feature_stride, uv.y() / cfg_.feature_stride,
               cfg_.blob_sigma / cfg_.feature_stride);
    }
    if (kp.valid_count() == 0) continue;

    if (agent.annotated) {
      Annotation ann;
      ann.frame = t;
      ann.track_id = static_cast<int>(a);
      ann.keypoints = kp;
      std::vector<Point3> rel(joints.begin(), joints.end());
      for (auto& p : rel) p -= joints[0];
      ann.joints3d = std::move(rel);
      ann.pose = pose;
      ann.has_beta = true;
      obs.annotations.push_back(std::move(ann));
    }

    Rng jitter = Rng::derive(cfg_.seed, kJitterStream, static_cast<std::uint64_t>(t), a);
    Rng miss = Rng::derive(cfg_.seed, kMissStream, static_cast<std::uint64_t>(t), a);
    const bool dropped = miss.bernoulli(noise.miss_probability);
    if (static_cast<double>(visible) / kNumJoints < cfg_.min_visible_fraction || dropped) continue;

    PoseState noisy = pose;
    const double height_px = k_.fy * kPersonHeight / pose.gamma.z();
    const double rel_sigma = noise.keypoint_sigma / height_px;
    const Point2 uv = project(pose.gamma, k_);
    const double du = jitter.normal(0.0, noise.keypoint_sigma);
    const double dv = jitter.normal(0.0, noise.keypoint_sigma);
    const double dz = jitter.normal(0.0, rel_sigma);
    noisy.gamma = unproject(uv.x() + du, uv.y() + dv, pose.gamma.z() * std::exp(dz), k_);
    for (int i = 0; i < kNumPoseParams; ++i) noisy.theta[i] += jitter.normal(0.0, rel_sigma);
    canonicalize(noisy);
    const double logit = cfg_.detection_logit + jitter.normal(0.0, noise.confidence_noise);
    if (write_detection(obs.grids, noisy, logit, k_, cfg_.detection, *decoder_)) out.detected[a] = 1;
  }

  Rng fp = Rng::derive(cfg_.seed, kFalsePositiveStream, static_cast<std::uint64_t>(t));
  const double whole = std::floor(noise.false_positive_rate);
  const int count = static_cast<int>(whole) + (fp.bernoulli(noise.false_positive_rate - whole) ? 1 : 0);
  for (int i = 0; i < count; ++i) {
    PoseState p;
    const double z = fp.uniform(3.0, 9.0);
    p.gamma = unproject(fp.uniform(0.15, 0.85) * cfg_.width, fp.uniform(0.45, 0.6) * cfg_.height, z, k_);
    p.theta.setZero();
    p.theta[1] = fp.uniform(-kPi, kPi);
    for (int j = 3; j < kNumPoseParams; ++j) p.theta[j] = fp.normal(0.0, 0.1);
    canonicalize(p);
    write_detection(obs.grids, p, cfg_.detection_logit, k_, cfg_.detection, *decoder_);
  }

  for (const auto& script : cfg_.ignore_regions) {
    if (script.active(t)) obs.ignore_regions.push_back({t, script.polygon});
  }
  return out;
}

FrameObservation SceneGenerator::frame(int t) const { return build(t).obs; }

FrameObservation SceneGenerator::frame(int t, std::vector<std::uint8_t>& detected) const {
  Placement p = build(t);
  detected = std::move(p.detected);
  return std::move(p.obs);
}

bool SceneGenerator::detected(int agent, int t) const {
  return build(t).detected.at(static_cast<std::size_t>(agent)) != 0;
}

Sequence generate(const SceneConfig& cfg) {
  const SceneGenerator gen(cfg);
  Sequence seq;
  seq.tracks.resize(cfg.agents.size());
  for (std::size_t a = 0; a < cfg.agents.size(); ++a) {
    seq.tracks[a].id = static_cast<int>(a);
    seq.tracks[a].annotated = cfg.agents[a].annotated;
  }
  std::vector<std::uint8_t> detected;
  for (int t = 0; t < cfg.frames; ++t) {
    seq.frames.push_back(gen.frame(t, detected));
    for (std::size_t a = 0; a < detected.size(); ++a) seq.tracks[a].detected_frames += detected[a];
    for (const auto& ann : seq.frames.back().annotations) {
      GtTrack& g = seq.tracks[static_cast<std::size_t>(ann.track_id)];
      if (g.first_frame < 0) g.first_frame = t;
      g.last_frame = t;
      ++g.annotated_frames;
    }
  }
  return seq;
}

std::vector<std::string> scenario_names() {
  return {"crossing_pair", "occlusion_pass", "crowd_8", "ignore_region_demo", "collapse_bait"};
}

namespace {

AgentConfig linear_agent(Point3 start, Point3 velocity, double yaw) {
  AgentConfig a;
  a.motion.kind = MotionKind::kLinear;
  a.motion.start = start;
  a.motion.velocity = velocity;
  a.yaw = yaw;
  return a;
}

AgentConfig circling_agent(Point3 center, double radius, double period, double phase, double yaw) {
  AgentConfig a;
  a.motion.kind = MotionKind::kCircular;
  a.motion.center = center;
  a.motion.radius = radius;
  a.motion.angular_speed = 2.0 * kPi / period;
  a.motion.phase = phase;
  a.yaw = yaw;
  return a;
}

// Lateral position whose pelvis projects to pixel column u at depth z.
double lateral(double u, double z, double width) { return (u - 0.5 * width) * z / width; }

constexpr double kPelvisHeight = 0.3;  // below the optical axis

}  // namespace

SceneConfig scenario(const std::string& name, std::uint64_t seed) {
  SceneConfig s;
  s.name = name;
  s.seed = seed;
  const double w = s.width;

  if (name == "crossing_pair") {
    s.frames = 200;
    const double span = s.frames - 1;
    s.agents.push_back(linear_agent({-1.6, kPelvisHeight, 4.0}, {3.2 / span, 0.0, 0.0}, -0.5));
    s.agents.push_back(linear_agent({2.4, kPelvisHeight, 7.0}, {-4.8 / span, 0.0, 0.0}, 0.5));
    s.agents[1].beta[0] = 1.0;
    s.noise.keypoint_sigma = 2.0;
    s.noise.miss_probability = 0.05;
  } else if (name == "occlusion_pass") {
    s.frames = 120;
    s.agents.push_back(linear_agent({-1.5, kPelvisHeight, 5.0}, {3.0 / 119.0, 0.0, 0.0}, -0.4));
    s.agents.push_back(circling_agent({lateral(60, 6.0, w), kPelvisHeight, 6.0}, 0.1, 90.0, 0.0, 0.3));
    // Hides the walker completely for six frames around the image center.
    s.occluders.push_back({{190.0, 0.0, 322.0, 512.0}, 57, 62});
    s.noise.keypoint_sigma = 1.0;
  } else if (name == "crowd_8") {
    s.frames = 200;
    const double front_z = 4.5;
    const double back_z = 8.5;
    int i = 0;
    for (double u : {85.0, 199.0, 313.0, 427.0}) {
      s.agents.push_back(circling_agent({lateral(u, front_z, w), kPelvisHeight, front_z}, 0.15, 120.0,
                                        0.7 * i, 0.2 * (i % 3) - 0.2));
      ++i;
    }
    for (double u : {142.0, 256.0, 370.0, 484.0}) {
      s.agents.push_back(circling_agent({lateral(u, back_z, w), kPelvisHeight, back_z}, 0.15, 150.0,
                                        0.9 * i, 0.2 * (i % 3) - 0.2));
      ++i;
    }
    s.noise.keypoint_sigma = 2.0;
    s.noise.miss_probability = 0.05;
  } else if (name == "ignore_region_demo") {
    s.frames = 100;
    s.agents.push_back(circling_agent({lateral(90, 3.5, w), kPelvisHeight, 3.5}, 0.05, 80.0, 0.0, 0.2));
    int i = 0;
    for (double u : {200.0, 280.0, 360.0, 440.0}) {
      auto a = circling_agent({lateral(u, 9.0, w), kPelvisHeight, 9.0}, 0.08, 100.0, 1.3 * i, 0.0);
      a.annotated = false;
      s.agents.push_back(a);
      ++i;
    }
    s.ignore_regions.push_back({{{150, 60}, {500, 60}, {500, 440}, {330, 470}, {150, 440}}});
    s.noise.keypoint_sigma = 1.0;
  } else if (name == "collapse_bait") {
    s.frames = 100;
    for (double side : {-1.0, 1.0}) {
      AgentConfig a;
      a.motion.kind = MotionKind::kConverge;
      a.motion.start = {0.3 * side, kPelvisHeight, 5.0};
      a.motion.target = {0.02 * side, kPelvisHeight, 5.0};
      a.motion.time_constant = 12.0;
      a.pose_amplitude = 0.03;
      s.agents.push_back(a);
    }
  } else {
    throw UnknownScenario("unknown scenario '" + name + "'");
  }
  return s;
}

}  // namespace posestream
