#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "posestream/body_model.hpp"
#include "posestream/detection.hpp"
#include "posestream/features.hpp"
#include "posestream/geometry.hpp"
#include "posestream/nn.hpp"
#include "posestream/similarity.hpp"

namespace posestream {

/// Hidden-state handling: recurrent GRU state,
/// a plain affine state update, or no state at all.
enum class UpdateVariant { kFull, kNoGru, kNoHidden };

struct UpdateConfig {
  int tokens = 4;            // M, tokens per person (24 at full scale)
  int width = 64;            // D, token width (512 at full scale)
  int hidden = 64;           // D_h
  int heads = 4;
  int rounds = 2;            // cross-attention rounds
  int feature_channels = 8;  // C of the incoming feature map
  int positional_channels = 16;
  UpdateVariant variant = UpdateVariant::kFull;
  std::uint64_t seed = 0x0bad'5eedULL;
  /// Must match the detector's so both stages share one pose decoder.
  std::uint64_t decoder_seed = DetectionConfig{}.decoder_seed;

  void validate() const;
};

/// Pose plus recurrent state of one tracked person.
struct TrackState {
  PoseState pose;
  Eigen::VectorXd hidden;
};

/// New translation from a residual relative to the previous one: the pixel
/// offset is added to the projection of `previous` and the depth is scaled by
/// exp(z_log_residual).
Point3 apply_translation_residual(const Point3& previous, double du, double dv,
                                  double z_log_residual, const Intrinsics& k);

/// Forward-only pose update step with seeded weights:
///   tokens = enc2d(keypoints) + enc_pose(gamma, theta, beta) + enc_hidden(h)
///   repeat rounds: cross-attend to image tokens, residual MLP,
///                  attention across people, attention within a person
///   pooled = mean over tokens; h' = GRU(pooled, h)
///   decode (du, dv, z_log, root orientation, pose embedding) from [pooled, h']
/// Betas are carried through unchanged.
class PoseUpdater {
 public:
  explicit PoseUpdater(UpdateConfig cfg = {}, const Skeleton& skel = Skeleton::standard());

  const UpdateConfig& config() const { return cfg_; }

  /// Zero state of the configured width.
  Eigen::VectorXd initial_hidden() const { return Eigen::VectorXd::Zero(cfg_.hidden); }

  /// Per-track token blocks (each tokens x width).
  std::vector<nn::Matrix> encode_tokens(std::span<const TrackState> tracks,
                                        const Intrinsics& k) const;

  /// Image tokens: flattened features with sinusoidal positions appended.
  nn::Matrix image_tokens(const ImageFeatureMap& features) const;

  /// Throws EmptyTrackSet when `tracks` is empty.
  std::vector<TrackState> step(const ImageFeatureMap& features, const Intrinsics& k,
                               std::span<const TrackState> tracks) const;

  /// Visits every weight tensor in a fixed order.
  void visit_parameters(const nn::ParamVisitor& v);
  void save(const std::filesystem::path& data_path, const std::filesystem::path& manifest_path);
  /// Replaces weights from an archive; shapes must match the configuration.
  void load(const std::filesystem::path& manifest_path);

 private:
  struct Round {
    nn::Linear query;
    nn::Mlp post_attention;
    nn::TransformerBlock across_people;
    nn::TransformerBlock within_person;
  };

  UpdateConfig cfg_;
  Skeleton skel_;
  std::shared_ptr<const PoseDecoder> decoder_;

  nn::Linear encode_2d_;
  nn::Linear encode_pose_;
  nn::Linear encode_hidden_;
  nn::Linear image_key_;
  nn::Linear image_value_;
  std::vector<Round> rounds_;
  nn::Gru gru_;
  nn::Linear affine_state_;  // used by kNoGru
  nn::Mlp head_;
};

struct KinematicConfig {
  /// Fraction of the way a matched track moves toward its detection.
  double blend = 0.8;
  /// Track/detection pairs below this OKS are not matched.
  double min_match_oks = 0.2;
  SimilarityConfig similarity;
};

/// Track with the previous translation needed for velocity extrapolation.
struct KinematicTrack {
  PoseState pose;
  Point3 previous_gamma = Point3::Zero();
};

/// Baseline updater without learned weights. Tracks are matched to
/// detections by Hungarian assignment on negated OKS; matched tracks blend
/// toward their detection (translation linearly, joint rotations by slerp,
/// shape unchanged), unmatched ones extrapolate the translation at constant
/// velocity and hold their joint angles.
std::vector<KinematicTrack> kinematic_update(std::span<const KinematicTrack> tracks,
                                             std::span<const DetectionCandidate> detections,
                                             const Intrinsics& k, const KinematicConfig& cfg = {});

/// Joint-wise spherical interpolation between two poses (translation and
/// shape linearly).
PoseState interpolate_pose(const PoseState& from, const PoseState& to, double t);

}  // namespace posestream
