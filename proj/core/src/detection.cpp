#include "posestream/detection.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

#include <Eigen/QR>

#include "posestream/assignment.hpp"
#include "posestream/errors.hpp"
#include "posestream/random.hpp"

namespace posestream {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

GridOutput GridOutput::empty(int width, int height, const std::array<int, kNumLevels>& strides,
                             int anchors) {
  GridOutput g;
  for (int l = 0; l < kNumLevels; ++l) {
    auto& level = g.levels[l];
    level.stride = strides[l];
    level.rows = (height + strides[l] - 1) / strides[l];
    level.cols = (width + strides[l] - 1) / strides[l];
    level.anchors = anchors;
    level.cells.assign(static_cast<std::size_t>(level.rows) * level.cols * anchors, RawCell{});
  }
  return g;
}

std::size_t GridOutput::candidate_count() const {
  std::size_t n = 0;
  for (const auto& l : levels) n += l.cells.size();
  return n;
}

void DetectionConfig::validate() const {
  for (int l = 0; l < kNumLevels; ++l) {
    if (!(z_default[l] > 0.0)) throw InvalidArgument("detection: z_default must be positive");
    if (l > 0 && !(z_default[l] < z_default[l - 1])) {
      throw InvalidArgument("detection: z_default must decrease from fine to coarse levels");
    }
    if (strides[l] <= 0) throw InvalidArgument("detection: strides must be positive");
  }
  if (anchors < 1) throw InvalidArgument("detection: need at least one anchor");
  if (!(confidence_threshold >= 0.0 && confidence_threshold <= 1.0)) {
    throw InvalidArgument("detection: confidence threshold must lie in [0, 1]");
  }
  if (!(nms_threshold > 0.0 && nms_threshold < 1.0)) {
    throw InvalidArgument("detection: NMS threshold must lie in (0, 1)");
  }
  similarity.validate();
}

PoseDecoder::PoseDecoder(std::uint64_t seed) {
  Rng rng = Rng::derive(seed, 0xdec0);
  // Uniform in +-1/sqrt(fan_in) for weights and biases alike.
  auto init = [&rng](Eigen::Index rows, Eigen::Index cols, int fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c) {
      for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = rng.uniform(-bound, bound);
    }
    return m;
  };
  w1_ = init(kHiddenDim, kEmbeddingDim, kEmbeddingDim);
  b1_ = init(kHiddenDim, 1, kEmbeddingDim);
  w2_ = init(kNumBodyPoseParams, kHiddenDim, kHiddenDim);
  b2_ = init(kNumBodyPoseParams, 1, kHiddenDim);
  pinv1_ = w1_.completeOrthogonalDecomposition().pseudoInverse();
  pinv2_ = w2_.completeOrthogonalDecomposition().pseudoInverse();
}

BodyPoseVector PoseDecoder::decode(std::span<const double> embedding) const {
  Eigen::VectorXd hidden = b1_;
  if (!embedding.empty()) {
    if (embedding.size() != static_cast<std::size_t>(kEmbeddingDim)) {
      throw InvalidArgument("pose decoder: embedding must have 256 entries");
    }
    hidden += w1_ * Eigen::Map<const Eigen::VectorXd>(embedding.data(), kEmbeddingDim);
  }
  hidden = hidden.unaryExpr([](double x) { return x >= 0.0 ? x : kLeakySlope * x; });
  return w2_ * hidden + b2_;
}

std::vector<double> PoseDecoder::encode(const BodyPoseVector& body_pose) const {
  Eigen::VectorXd activated = pinv2_ * (body_pose - b2_);
  Eigen::VectorXd pre = activated.unaryExpr([](double y) { return y >= 0.0 ? y : y / kLeakySlope; });
  Eigen::VectorXd e = pinv1_ * (pre - b1_);
  return {e.data(), e.data() + e.size()};
}

std::shared_ptr<const PoseDecoder> shared_pose_decoder(std::uint64_t seed) {
  static std::mutex mu;
  static std::map<std::uint64_t, std::shared_ptr<const PoseDecoder>> cache;
  std::lock_guard lock(mu);
  auto& slot = cache[seed];
  if (!slot) slot = std::make_shared<const PoseDecoder>(seed);
  return slot;
}

Detector::Detector(DetectionConfig cfg, const Skeleton& skel)
    : cfg_(std::move(cfg)), skel_(skel), decoder_(shared_pose_decoder(cfg_.decoder_seed)) {
  cfg_.validate();
}

Point3 Detector::decode_translation(const RawCell& cell, const GridLevel& level, int level_index,
                                    int row, int col, const Intrinsics& k) const {
  const Point2 base = level.base_pixel(row, col);
  const double u = base.x() + cell.du;
  const double v = base.y() + cell.dv;
  const double z = cfg_.z_default[level_index] * k.fx * std::exp(cell.z_log);
  return unproject(u, v, z, k);
}

DetectionCandidate Detector::decode_candidate(const GridOutput& grids, const CandidateSource& src,
                                              const Intrinsics& k) const {
  const GridLevel& level = grids.levels[src.level];
  const RawCell& cell = level.at(src.row, src.col, src.anchor);

  DetectionCandidate det;
  det.source = src;
  det.logit = cell.logit;
  det.confidence = sigmoid(cell.logit);
  det.pose.gamma = decode_translation(cell, level, src.level, src.row, src.col, k);
  det.pose.theta.head<3>() = cell.root_orientation;
  det.pose.theta.tail<kNumBodyPoseParams>() = decoder_->decode(cell.embedding);
  det.pose.beta = cell.beta;
  canonicalize(det.pose);
  det.keypoints = keypoints_2d(det.pose, k, skel_);
  return det;
}

namespace {

template <typename Fn>
void for_each_cell(const GridOutput& grids, Fn&& fn) {
  for (int l = 0; l < kNumLevels; ++l) {
    const auto& level = grids.levels[l];
    for (int r = 0; r < level.rows; ++r) {
      for (int c = 0; c < level.cols; ++c) {
        for (int a = 0; a < level.anchors; ++a) fn(CandidateSource{l, r, c, a}, level.at(r, c, a));
      }
    }
  }
}

}  // namespace

std::vector<DetectionCandidate> Detector::decode_all(const GridOutput& grids,
                                                     const Intrinsics& k) const {
  k.validate();
  std::vector<DetectionCandidate> out;
  out.reserve(grids.candidate_count());
  for_each_cell(grids, [&](const CandidateSource& src, const RawCell&) {
    out.push_back(decode_candidate(grids, src, k));
  });
  return out;
}

std::vector<DetectionCandidate> Detector::detect(const GridOutput& grids,
                                                 const Intrinsics& k) const {
  k.validate();
  // Thresholding only needs the logit, so the pose decoder runs on survivors.
  std::vector<DetectionCandidate> confident;
  for_each_cell(grids, [&](const CandidateSource& src, const RawCell& cell) {
    if (sigmoid(cell.logit) >= cfg_.confidence_threshold) {
      confident.push_back(decode_candidate(grids, src, k));
    }
  });

  std::vector<KeypointSet> kps;
  std::vector<double> conf;
  kps.reserve(confident.size());
  conf.reserve(confident.size());
  for (const auto& d : confident) {
    kps.push_back(d.keypoints);
    conf.push_back(d.confidence);
  }
  const auto kept = nms(kps, conf, cfg_.nms_threshold, cfg_.similarity);

  std::vector<DetectionCandidate> out;
  out.reserve(kept.size());
  for (std::size_t i : kept) out.push_back(std::move(confident[i]));
  return out;
}

std::vector<Match> match_to_ground_truth(std::span<const DetectionCandidate> detections,
                                         std::span<const Annotation> annotations,
                                         const DetectionConfig& cfg) {
  std::vector<Match> matches;
  if (detections.empty() || annotations.empty()) return matches;

  Eigen::MatrixXd score(detections.size(), annotations.size());
  for (std::size_t i = 0; i < detections.size(); ++i) {
    for (std::size_t j = 0; j < annotations.size(); ++j) {
      KeypointSet gt = annotations[j].keypoints;
      gt.is_annotation = true;
      double s = 0.0;
      try {
        s = oks(detections[i].keypoints, gt, cfg.similarity);
      } catch (const NoValidKeypoints&) {
        s = 0.0;
      }
      score(i, j) = s * detections[i].confidence;
    }
  }
  const Assignment a = hungarian(-score);
  for (std::size_t i = 0; i < detections.size(); ++i) {
    const int j = a.row_to_col[i];
    if (j < 0 || score(i, j) < cfg.match_min_score) continue;
    matches.push_back({i, static_cast<std::size_t>(j), score(i, j)});
  }
  return matches;
}

namespace {

std::vector<Point3> root_relative_joints(const PoseState& pose, const Skeleton& skel) {
  const auto joints = forward_kinematics(pose, skel);
  std::vector<Point3> out(joints.begin(), joints.end());
  for (auto& p : out) p -= joints[0];
  return out;
}

double wrap_angle(double x) { return std::remainder(x, 2.0 * std::numbers::pi); }

}  // namespace

LossBreakdown supervision_losses(std::span<const DetectionCandidate> candidates,
                                 std::span<const Annotation> annotations,
                                 std::span<const Match> matches, const Intrinsics& k,
                                 std::uint64_t seed, int max_negatives, const Skeleton& skel) {
  LossBreakdown out;
  if (matches.empty()) {
    out.empty = true;
    return out;
  }

  double sum_2d = 0.0, sum_3d = 0.0, sum_angle = 0.0, sum_beta = 0.0, sum_conf = 0.0;
  long n_2d = 0, n_3d = 0, n_angle = 0, n_beta = 0;
  std::vector<char> matched(candidates.size(), 0);

  for (const auto& m : matches) {
    const DetectionCandidate& det = candidates[m.detection];
    const Annotation& gt = annotations[m.annotation];
    matched[m.detection] = 1;

    const KeypointSet& pk = det.keypoints;
    const KeypointSet& gk = gt.keypoints;
    for (std::size_t i = 0; i < std::min(pk.size(), gk.size()); ++i) {
      if (!pk.is_valid(i) || !gk.is_valid(i)) continue;
      sum_2d += (pk.points[i] - gk.points[i]).cwiseAbs().sum() / k.width;
      ++n_2d;
    }

    std::optional<std::vector<Point3>> gt3d = gt.joints3d;
    if (!gt3d && gt.pose) gt3d = root_relative_joints(*gt.pose, skel);
    if (gt3d) {
      const auto pred3d = root_relative_joints(det.pose, skel);
      // Re-center the ground truth too, in case it was stored absolute.
      const Point3 root = (*gt3d)[0];
      for (std::size_t j = 0; j < std::min(pred3d.size(), gt3d->size()); ++j) {
        sum_3d += (pred3d[j] - ((*gt3d)[j] - root)).cwiseAbs().sum();
        ++n_3d;
      }
    }

    if (gt.pose) {
      for (int i = 0; i < kNumPoseParams; ++i) {
        const double d = wrap_angle(det.pose.theta[i] - gt.pose->theta[i]);
        sum_angle += d * d;
        ++n_angle;
      }
      if (gt.has_beta) {
        sum_beta += (det.pose.beta - gt.pose->beta).cwiseAbs().sum();
        n_beta += kNumShapeParams;
      }
    }

    sum_conf += softplus(-det.logit);  // -log(sigmoid(logit))
    ++out.positives;
  }

  std::vector<std::size_t> unmatched;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (!matched[i]) unmatched.push_back(i);
  }
  const std::size_t n_neg = std::min<std::size_t>(std::max(max_negatives, 0), unmatched.size());
  Rng rng(seed);
  // Partial Fisher-Yates: the first n_neg entries become the sample.
  for (std::size_t i = 0; i < n_neg; ++i) {
    const std::size_t j = i + rng.below(unmatched.size() - i);
    std::swap(unmatched[i], unmatched[j]);
    sum_conf += softplus(candidates[unmatched[i]].logit);  // -log(1 - sigmoid(logit))
    ++out.negatives;
  }

  out.loss_2d = n_2d ? sum_2d / n_2d : 0.0;
  out.loss_3d = n_3d ? sum_3d / n_3d : 0.0;
  out.loss_angle = n_angle ? sum_angle / n_angle : 0.0;
  out.loss_beta = n_beta ? sum_beta / n_beta : 0.0;
  out.loss_conf = sum_conf / (out.positives + out.negatives);
  return out;
}

}  // namespace posestream
