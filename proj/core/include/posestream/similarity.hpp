#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "posestream/body_model.hpp"
#include "posestream/keypoints.hpp"

namespace posestream {

struct SimilarityConfig {
  /// Width of the Cauchy kernel, shared by all keypoints.
  double kappa = 0.1;
  /// Lower bound on the pixels-per-meter scale.
  double min_scale = 1.0;
  /// Adjacent keypoint pairs with reference lengths (meters).
  std::vector<Limb> limbs = Skeleton::standard().limbs();

  void validate() const;
};

/// Pixels-per-meter size of a person: the largest ratio of projected limb
/// length to reference length over limbs with both endpoints valid, clamped
/// below at min_scale. Throws NoValidLimb when no limb qualifies.
double estimate_scale(const KeypointSet& kp, const SimilarityConfig& cfg = {});

struct OksResult {
  double value = 0.0;
  double scale = 0.0;
  /// Neither side had a usable limb and min_scale was used.
  bool scale_fallback = false;
};

/// Keypoint similarity with a Cauchy kernel:
///   mean over jointly valid i of 1 / (1 + d_i^2 / (2 s^2 kappa^2)).
/// The scale s is the annotation's when exactly one side is an annotation,
/// otherwise the larger of the two. Throws NoValidKeypoints when no keypoint
/// is valid on both sides.
OksResult oks_detailed(const KeypointSet& a, const KeypointSet& b, const SimilarityConfig& cfg = {});

inline double oks(const KeypointSet& a, const KeypointSet& b, const SimilarityConfig& cfg = {}) {
  return oks_detailed(a, b, cfg).value;
}

/// Pairwise OKS; pairs without jointly valid keypoints score 0.
Eigen::MatrixXd oks_matrix(std::span<const KeypointSet> a, std::span<const KeypointSet> b,
                           const SimilarityConfig& cfg = {});

/// Greedy OKS suppression. Candidates are visited by descending confidence
/// (ties by lower index); a candidate survives when its OKS to every survivor
/// is below `threshold`. Returns surviving indices in visiting order.
std::vector<std::size_t> nms(std::span<const KeypointSet> candidates,
                             std::span<const double> confidences, double threshold,
                             const SimilarityConfig& cfg = {});

}  // namespace posestream
