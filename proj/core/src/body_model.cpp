#include "posestream/body_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include <Eigen/Geometry>

#include "posestream/errors.hpp"

namespace posestream {

namespace {

constexpr double kShapeRate = 0.1;
constexpr double kMinVisibleDepth = 0.05;
constexpr double kFrameMargin = 0.5;

struct RestJoint {
  int parent;
  double x, y, z;
  int group;
};

// 0 pelvis, 1 L_hip, 2 R_hip, 3 spine1, 4 L_knee, 5 R_knee, 6 spine2,
// 7 L_ankle, 8 R_ankle, 9 spine3, 10 L_foot, 11 R_foot, 12 neck,
// 13 L_collar, 14 R_collar, 15 head, 16 L_shoulder, 17 R_shoulder,
// 18 L_elbow, 19 R_elbow, 20 L_wrist, 21 R_wrist, 22 L_hand, 23 R_hand.
// Groups: 1 pelvis width, 2 thighs, 3 shins, 4 feet, 5 spine, 6 neck/head,
// 7 shoulders, 8 upper arms, 9 forearms and hands.
constexpr std::array<RestJoint, kNumJoints> kRestTable{{
    {-1, 0.00, 0.00, 0.00, 0},
    {0, 0.07, 0.08, 0.00, 1},
    {0, -0.07, 0.08, 0.00, 1},
    {0, 0.00, -0.11, 0.01, 5},
    {1, 0.03, 0.38, 0.00, 2},
    {2, -0.03, 0.38, 0.00, 2},
    {3, 0.00, -0.13, 0.00, 5},
    {4, -0.01, 0.40, 0.03, 3},
    {5, 0.01, 0.40, 0.03, 3},
    {6, 0.00, -0.06, 0.00, 5},
    {7, 0.02, 0.06, -0.12, 4},
    {8, -0.02, 0.06, -0.12, 4},
    {9, 0.00, -0.21, 0.02, 6},
    {9, 0.07, -0.12, 0.00, 7},
    {9, -0.07, -0.12, 0.00, 7},
    {12, 0.00, -0.10, -0.04, 6},
    {13, 0.11, 0.03, 0.00, 7},
    {14, -0.11, 0.03, 0.00, 7},
    {16, 0.06, 0.25, 0.00, 8},
    {17, -0.06, 0.25, 0.00, 8},
    {18, 0.02, 0.24, -0.02, 9},
    {19, -0.02, 0.24, -0.02, 9},
    {20, 0.01, 0.08, 0.00, 9},
    {21, -0.01, 0.08, 0.00, 9},
}};

}  // namespace

Eigen::Vector3d wrap_axis_angle(const Eigen::Vector3d& r) {
  const double angle = r.norm();
  if (angle <= std::numbers::pi) return r;
  // Reduce to (-pi, pi] about the same axis, then flip the axis if negative.
  double wrapped = std::remainder(angle, 2.0 * std::numbers::pi);
  Eigen::Vector3d axis = r / angle;
  if (wrapped < 0.0) {
    wrapped = -wrapped;
    axis = -axis;
  }
  return axis * wrapped;
}

Eigen::Matrix3d rotation_from_axis_angle(const Eigen::Vector3d& r) {
  const double angle = r.norm();
  if (angle < 1e-15) return Eigen::Matrix3d::Identity();
  return Eigen::AngleAxisd(angle, r / angle).toRotationMatrix();
}

Eigen::Vector3d axis_angle_from_rotation(const Eigen::Matrix3d& R) {
  const Eigen::AngleAxisd aa(R);
  return wrap_axis_angle(aa.axis() * aa.angle());
}

void canonicalize(PoseState& pose) {
  for (int j = 0; j < kNumJoints; ++j) {
    pose.theta.segment<3>(3 * j) = wrap_axis_angle(pose.theta.segment<3>(3 * j));
  }
  pose.beta = pose.beta.cwiseMax(-kShapeLimit).cwiseMin(kShapeLimit);
}

bool is_canonical(const PoseState& pose) {
  if (!pose.gamma.allFinite() || !pose.theta.allFinite() || !pose.beta.allFinite()) {
    return false;
  }
  for (int j = 0; j < kNumJoints; ++j) {
    if (pose.theta.segment<3>(3 * j).norm() > std::numbers::pi + 1e-12) return false;
  }
  return pose.beta.cwiseAbs().maxCoeff() <= kShapeLimit;
}

Skeleton::Skeleton(std::vector<int> parents, std::vector<Point3> offsets, std::vector<int> groups)
    : parents_(std::move(parents)), offsets_(std::move(offsets)), groups_(std::move(groups)) {
  validate();
  for (int j = 1; j < kNumJoints; ++j) {
    limbs_.push_back({parents_[j], j, offsets_[j].norm()});
  }
}

void Skeleton::validate() const {
  if (parents_.size() != kNumJoints || offsets_.size() != kNumJoints ||
      groups_.size() != kNumJoints) {
    throw InvalidArgument("skeleton: expected " + std::to_string(kNumJoints) + " joints");
  }
  if (parents_[0] != -1) throw InvalidArgument("skeleton: joint 0 must be the root");
  for (int j = 1; j < kNumJoints; ++j) {
    // Parents must precede children, which makes the graph a tree rooted at 0.
    if (parents_[j] < 0 || parents_[j] >= j) {
      throw InvalidArgument("skeleton: joint " + std::to_string(j) + " has invalid parent");
    }
    if (!(offsets_[j].norm() > 0.0)) {
      throw InvalidArgument("skeleton: joint " + std::to_string(j) + " has zero-length limb");
    }
    if (groups_[j] < 0 || groups_[j] >= kNumShapeParams) {
      throw InvalidArgument("skeleton: joint " + std::to_string(j) + " has invalid shape group");
    }
  }
}

const Skeleton& Skeleton::standard() {
  static const Skeleton skel = [] {
    std::vector<int> parents;
    std::vector<Point3> offsets;
    std::vector<int> groups;
    for (const auto& j : kRestTable) {
      parents.push_back(j.parent);
      offsets.emplace_back(j.x, j.y, j.z);
      groups.push_back(j.group);
    }
    return Skeleton(std::move(parents), std::move(offsets), std::move(groups));
  }();
  return skel;
}

Skeleton Skeleton::from_table(std::istream& in) {
  std::vector<int> parents(kNumJoints, -2);
  std::vector<Point3> offsets(kNumJoints, Point3::Zero());
  std::vector<int> groups(kNumJoints, 0);
  std::vector<bool> seen(kNumJoints, false);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    int joint = 0;
    int parent = 0;
    double x = 0, y = 0, z = 0;
    if (!(ls >> joint)) continue;
    if (!(ls >> parent >> x >> y >> z)) {
      throw InvalidArgument("skeleton table line " + std::to_string(line_no) +
                            ": expected `joint parent x y z [group]`");
    }
    int group = 0;
    ls >> group;
    if (joint < 0 || joint >= kNumJoints || seen[joint]) {
      throw InvalidArgument("skeleton table line " + std::to_string(line_no) +
                            ": bad or duplicate joint index");
    }
    seen[joint] = true;
    parents[joint] = parent;
    offsets[joint] = Point3(x, y, z);
    groups[joint] = group;
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    throw InvalidArgument("skeleton table: missing joints");
  }
  return Skeleton(std::move(parents), std::move(offsets), std::move(groups));
}

Skeleton Skeleton::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("skeleton: cannot open " + path.string());
  return from_table(in);
}

void Skeleton::write_table(std::ostream& out) const {
  out << "# joint parent x y z group\n";
  for (int j = 0; j < kNumJoints; ++j) {
    out << j << ' ' << parents_[j] << ' ' << offsets_[j].x() << ' ' << offsets_[j].y() << ' '
        << offsets_[j].z() << ' ' << groups_[j] << '\n';
  }
}

double Skeleton::offset_scale(int joint, const ShapeVector& beta) const {
  double s = std::exp(kShapeRate * beta[0]);
  if (groups_[joint] > 0) s *= std::exp(kShapeRate * beta[groups_[joint]]);
  return s;
}

Skeleton Skeleton::scaled(double factor) const {
  std::vector<Point3> offsets = offsets_;
  for (auto& o : offsets) o *= factor;
  return Skeleton(parents_, std::move(offsets), groups_);
}

JointPositions forward_kinematics(const PoseState& pose, const Skeleton& skel) {
  JointPositions joints;
  std::array<Eigen::Matrix3d, kNumJoints> global;
  global[0] = rotation_from_axis_angle(pose.joint_rotation(0));
  joints[0] = pose.gamma;
  for (int j = 1; j < kNumJoints; ++j) {
    const int p = skel.parent(j);
    joints[j] = joints[p] + global[p] * (skel.offset(j) * skel.offset_scale(j, pose.beta));
    global[j] = global[p] * rotation_from_axis_angle(pose.joint_rotation(j));
  }
  return joints;
}

KeypointSet keypoints_2d(const JointPositions& joints, const Intrinsics& k) {
  KeypointSet kp;
  kp.points.reserve(kNumJoints);
  kp.valid.reserve(kNumJoints);
  const double umin = -kFrameMargin * k.width;
  const double umax = (1.0 + kFrameMargin) * k.width;
  const double vmin = -kFrameMargin * k.height;
  const double vmax = (1.0 + kFrameMargin) * k.height;
  for (const auto& p : joints) {
    if (p.z() <= kMinVisibleDepth) {
      kp.points.emplace_back(0.0, 0.0);
      kp.valid.push_back(0);
      continue;
    }
    const Point2 uv = project(p, k);
    kp.points.push_back(uv);
    const bool inside = uv.x() >= umin && uv.x() <= umax && uv.y() >= vmin && uv.y() <= vmax;
    kp.valid.push_back(inside ? 1 : 0);
  }
  return kp;
}

KeypointSet keypoints_2d(const PoseState& pose, const Intrinsics& k, const Skeleton& skel) {
  return keypoints_2d(forward_kinematics(pose, skel), k);
}

const std::vector<int>& layout_joints(KeypointLayout layout) {
  static const std::vector<int> full = [] {
    std::vector<int> v(kNumJoints);
    for (int i = 0; i < kNumJoints; ++i) v[i] = i;
    return v;
  }();
  // Head, neck, arms, hips, legs, pelvis and feet; drops the spine chain,
  // collars and hands.
  static const std::vector<int> subset17{0, 1, 2, 4, 5, 7, 8, 10, 11, 12, 15, 16, 17, 18, 19, 20, 21};
  return layout == KeypointLayout::kFull24 ? full : subset17;
}

void apply_layout(KeypointSet& kp, KeypointLayout layout) {
  if (layout == KeypointLayout::kFull24) return;
  std::vector<std::uint8_t> keep(kp.size(), 0);
  for (int j : layout_joints(layout)) {
    if (j < static_cast<int>(kp.size())) keep[j] = 1;
  }
  for (std::size_t i = 0; i < kp.size(); ++i) kp.valid[i] = kp.valid[i] && keep[i];
}

}  // namespace posestream
