#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include <Eigen/Core>

#include "posestream/geometry.hpp"
#include "posestream/keypoints.hpp"

namespace posestream {

inline constexpr int kNumJoints = 24;
inline constexpr int kNumPoseParams = 3 * kNumJoints;  // 72, root orientation first
inline constexpr int kNumBodyPoseParams = kNumPoseParams - 3;
inline constexpr int kNumShapeParams = 10;
inline constexpr double kShapeLimit = 5.0;

using PoseVector = Eigen::Matrix<double, kNumPoseParams, 1>;
using ShapeVector = Eigen::Matrix<double, kNumShapeParams, 1>;

/// One person: camera-frame translation of the pelvis, axis-angle rotations
/// (root orientation followed by 23 joint rotations) and shape coefficients.
struct PoseState {
  Point3 gamma = Point3::Zero();
  PoseVector theta = PoseVector::Zero();
  ShapeVector beta = ShapeVector::Zero();

  Eigen::Vector3d root_orientation() const { return theta.head<3>(); }
  Eigen::Vector3d joint_rotation(int joint) const { return theta.segment<3>(3 * joint); }

  bool operator==(const PoseState& o) const {
    return gamma == o.gamma && theta == o.theta && beta == o.beta;
  }
};

/// Wraps every axis-angle triple to norm <= pi and clamps beta to [-5, 5].
void canonicalize(PoseState& pose);
bool is_canonical(const PoseState& pose);

/// Wraps an axis-angle vector so its angle lies in [0, pi].
Eigen::Vector3d wrap_axis_angle(const Eigen::Vector3d& r);
Eigen::Matrix3d rotation_from_axis_angle(const Eigen::Vector3d& r);
Eigen::Vector3d axis_angle_from_rotation(const Eigen::Matrix3d& R);

struct Limb {
  int parent = 0;
  int child = 0;
  double length = 0.0;  // meters, at beta = 0
};

/// Keypoint subsets used by the similarity and pose metrics.
enum class KeypointLayout { kFull24, kSubset17 };

/// Simplified articulated skeleton with SMPL's 24-joint topology.
///
/// Each non-root joint stores its rest offset from the parent (camera-frame
/// axes, person upright and facing the camera) and a shape group. beta[0]
/// scales every offset by exp(0.1 * beta[0]); beta[g] for g in 1..9 scales
/// the offsets whose group is g by exp(0.1 * beta[g]).
class Skeleton {
 public:
  Skeleton(std::vector<int> parents, std::vector<Point3> offsets, std::vector<int> groups);

  static const Skeleton& standard();

  /// Reads a whitespace table: `joint parent x y z [group]` per line; '#'
  /// starts a comment. Root has parent -1.
  static Skeleton from_table(std::istream& in);
  static Skeleton load(const std::filesystem::path& path);
  void write_table(std::ostream& out) const;

  int parent(int joint) const { return parents_[joint]; }
  const Point3& offset(int joint) const { return offsets_[joint]; }
  int shape_group(int joint) const { return groups_[joint]; }
  const std::vector<Limb>& limbs() const { return limbs_; }

  /// Scale factor applied to the offset of `joint` for the given shape.
  double offset_scale(int joint, const ShapeVector& beta) const;

  /// Returns a copy with every rest offset multiplied by `factor`.
  Skeleton scaled(double factor) const;

 private:
  void validate() const;

  std::vector<int> parents_;
  std::vector<Point3> offsets_;
  std::vector<int> groups_;
  std::vector<Limb> limbs_;
};

using JointPositions = std::array<Point3, kNumJoints>;

/// Joint positions in camera coordinates. The root lands on gamma.
JointPositions forward_kinematics(const PoseState& pose, const Skeleton& skel = Skeleton::standard());

/// Projects every joint. A keypoint is invalid when its depth is at most
/// 5 cm or it lands more than half an image width/height outside the frame.
KeypointSet keypoints_2d(const PoseState& pose, const Intrinsics& k,
                         const Skeleton& skel = Skeleton::standard());
KeypointSet keypoints_2d(const JointPositions& joints, const Intrinsics& k);

/// Marks keypoints outside the layout invalid, keeping joint indexing intact.
void apply_layout(KeypointSet& kp, KeypointLayout layout);

/// Joint indices that make up a layout.
const std::vector<int>& layout_joints(KeypointLayout layout);

}  // namespace posestream
