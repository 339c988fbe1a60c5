#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "posestream/annotation.hpp"
#include "posestream/body_model.hpp"
#include "posestream/geometry.hpp"
#include "posestream/similarity.hpp"

namespace posestream {

inline constexpr int kNumLevels = 3;
inline constexpr int kEmbeddingDim = 256;
inline constexpr double kBackgroundLogit = -30.0;

using BodyPoseVector = Eigen::Matrix<double, kNumBodyPoseParams, 1>;

/// Raw output of one anchor in one grid cell.
struct RawCell {
  double du = 0.0;      // pixels
  double dv = 0.0;      // pixels
  double z_log = 0.0;   // log-depth relative to the level default
  Eigen::Vector3d root_orientation = Eigen::Vector3d::Zero();
  /// Latent body pose; empty means all zeros.
  std::vector<double> embedding;
  ShapeVector beta = ShapeVector::Zero();
  double logit = kBackgroundLogit;

  bool operator==(const RawCell&) const = default;
};

struct GridLevel {
  int rows = 0;
  int cols = 0;
  int stride = 0;
  int anchors = 0;
  /// Index ((row * cols) + col) * anchors + anchor.
  std::vector<RawCell> cells;

  RawCell& at(int row, int col, int anchor) { return cells[index(row, col, anchor)]; }
  const RawCell& at(int row, int col, int anchor) const { return cells[index(row, col, anchor)]; }
  std::size_t index(int row, int col, int anchor) const {
    return (static_cast<std::size_t>(row) * cols + col) * anchors + anchor;
  }
  /// Pixel position the cell's offsets are relative to.
  Point2 base_pixel(int row, int col) const {
    return {(col + 0.5) * stride, (row + 0.5) * stride};
  }
};

/// Multi-scale detection grids for one frame.
struct GridOutput {
  std::array<GridLevel, kNumLevels> levels;

  /// Background-filled grids for an image of the given size. Level shapes are
  /// the image size divided (rounding up) by each stride.
  static GridOutput empty(int width, int height, const std::array<int, kNumLevels>& strides,
                          int anchors);

  std::size_t candidate_count() const;
};

struct CandidateSource {
  int level = 0;
  int row = 0;
  int col = 0;
  int anchor = 0;
};

struct DetectionCandidate {
  PoseState pose;
  double logit = 0.0;
  double confidence = 0.0;
  CandidateSource source;
  KeypointSet keypoints;
};

struct DetectionConfig {
  /// Default depth per pyramid level, in meters per pixel of focal length;
  /// strictly decreasing so coarse levels start closer to the camera.
  std::array<double, kNumLevels> z_default{15e-3, 7.5e-3, 3.75e-3};
  std::array<int, kNumLevels> strides{32, 64, 128};
  int anchors = 4;
  double confidence_threshold = 0.5;
  double nms_threshold = 0.5;
  /// Matches whose confidence-weighted OKS falls below this are dropped.
  double match_min_score = 0.05;
  int max_negatives = 256;
  std::uint64_t decoder_seed = 0x5eed'dec0deULL;
  SimilarityConfig similarity;

  void validate() const;
};

/// Two-layer map from the latent pose embedding to 69 body-pose angles:
///   theta = W2 * leaky_relu(W1 * e + b1) + b2.
/// Both layers have full row rank, so `encode` is an exact right inverse.
class PoseDecoder {
 public:
  static constexpr int kHiddenDim = 128;
  static constexpr double kLeakySlope = 0.1;

  explicit PoseDecoder(std::uint64_t seed);

  BodyPoseVector decode(std::span<const double> embedding) const;
  /// Minimum-norm embedding that decodes to `body_pose`.
  std::vector<double> encode(const BodyPoseVector& body_pose) const;

  const Eigen::MatrixXd& w1() const { return w1_; }
  const Eigen::VectorXd& b1() const { return b1_; }
  const Eigen::MatrixXd& w2() const { return w2_; }
  const Eigen::VectorXd& b2() const { return b2_; }

 private:
  Eigen::MatrixXd w1_, w2_, pinv1_, pinv2_;
  Eigen::VectorXd b1_, b2_;
};

/// Shared decoder instance for a seed (constructed once per seed).
std::shared_ptr<const PoseDecoder> shared_pose_decoder(std::uint64_t seed);

class Detector {
 public:
  explicit Detector(DetectionConfig cfg = {}, const Skeleton& skel = Skeleton::standard());

  const DetectionConfig& config() const { return cfg_; }
  const PoseDecoder& decoder() const { return *decoder_; }
  const Skeleton& skeleton() const { return skel_; }

  /// Translation from grid offsets: u = base_u + du, v = base_v + dv,
  /// z = z_default * fx * exp(z_log), gamma = z * K^-1 (u, v, 1).
  Point3 decode_translation(const RawCell& cell, const GridLevel& level, int level_index, int row,
                            int col, const Intrinsics& k) const;

  DetectionCandidate decode_candidate(const GridOutput& grids, const CandidateSource& src,
                                      const Intrinsics& k) const;

  /// Every candidate, in level/row/col/anchor order.
  std::vector<DetectionCandidate> decode_all(const GridOutput& grids, const Intrinsics& k) const;

  /// Candidates above the confidence threshold after OKS-NMS, sorted by
  /// descending confidence.
  std::vector<DetectionCandidate> detect(const GridOutput& grids, const Intrinsics& k) const;

 private:
  DetectionConfig cfg_;
  Skeleton skel_;
  std::shared_ptr<const PoseDecoder> decoder_;
};

struct Match {
  std::size_t detection = 0;
  std::size_t annotation = 0;
  double score = 0.0;
};

/// Hungarian matching on OKS scaled by detection confidence; pairs scoring
/// below cfg.match_min_score are left unmatched.
std::vector<Match> match_to_ground_truth(std::span<const DetectionCandidate> detections,
                                         std::span<const Annotation> annotations,
                                         const DetectionConfig& cfg = {});

struct LossBreakdown {
  double loss_2d = 0.0;     // mean L1 keypoint error / image width
  double loss_3d = 0.0;     // mean L1 root-centered joint error, meters
  double loss_angle = 0.0;  // mean squared wrapped axis-angle difference
  double loss_beta = 0.0;   // mean L1 over shape coefficients
  double loss_conf = 0.0;   // binary cross-entropy
  int positives = 0;
  int negatives = 0;
  bool empty = false;
};

/// Forward-only detection supervision. `candidates` is the full candidate
/// pool; matched candidates are positives and a seeded subset of at most
/// `max_negatives` unmatched candidates are negatives for the confidence loss.
LossBreakdown supervision_losses(std::span<const DetectionCandidate> candidates,
                                 std::span<const Annotation> annotations,
                                 std::span<const Match> matches, const Intrinsics& k,
                                 std::uint64_t seed, int max_negatives = 256,
                                 const Skeleton& skel = Skeleton::standard());

double sigmoid(double x);
/// log(1 + exp(x)) without overflow.
double softplus(double x);

}  // namespace posestream
