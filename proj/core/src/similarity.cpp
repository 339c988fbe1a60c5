#include "posestream/similarity.hpp"

#include <algorithm>
#include <numeric>
#include <optional>

#include "posestream/errors.hpp"

namespace posestream {

void SimilarityConfig::validate() const {
  if (!(kappa > 0.0)) throw InvalidArgument("similarity: kappa must be positive");
  if (!(min_scale > 0.0)) throw InvalidArgument("similarity: min_scale must be positive");
  for (const auto& l : limbs) {
    if (!(l.length > 0.0)) throw InvalidArgument("similarity: limb lengths must be positive");
  }
}

double estimate_scale(const KeypointSet& kp, const SimilarityConfig& cfg) {
  double best = -1.0;
  const int n = static_cast<int>(kp.size());
  for (const auto& limb : cfg.limbs) {
    if (limb.parent >= n || limb.child >= n) continue;
    if (!kp.is_valid(limb.parent) || !kp.is_valid(limb.child)) continue;
    const double ratio = (kp.points[limb.parent] - kp.points[limb.child]).norm() / limb.length;
    best = std::max(best, ratio);
  }
  if (best < 0.0) throw NoValidLimb("estimate_scale: no limb with both endpoints valid");
  return std::max(best, cfg.min_scale);
}

namespace {

std::optional<double> scale_of(const KeypointSet& kp, const SimilarityConfig& cfg) {
  if (kp.scale) return std::max(*kp.scale, cfg.min_scale);
  try {
    return estimate_scale(kp, cfg);
  } catch (const NoValidLimb&) {
    return std::nullopt;
  }
}

}  // namespace

OksResult oks_detailed(const KeypointSet& a, const KeypointSet& b, const SimilarityConfig& cfg) {
  if (a.size() != b.size()) throw InvalidArgument("oks: keypoint sets differ in length");

  const std::optional<double> sa = scale_of(a, cfg);
  const std::optional<double> sb = scale_of(b, cfg);

  OksResult out;
  if (a.is_annotation != b.is_annotation) {
    const auto& gt = a.is_annotation ? sa : sb;
    const auto& other = a.is_annotation ? sb : sa;
    if (gt) {
      out.scale = *gt;
    } else if (other) {
      out.scale = *other;
    }
  } else if (sa || sb) {
    out.scale = std::max(sa.value_or(0.0), sb.value_or(0.0));
  }
  if (out.scale <= 0.0) {
    out.scale = cfg.min_scale;
    out.scale_fallback = true;
  }

  const double denom = 2.0 * out.scale * out.scale * cfg.kappa * cfg.kappa;
  double sum = 0.0;
  int count = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a.is_valid(i) || !b.is_valid(i)) continue;
    const double d2 = (a.points[i] - b.points[i]).squaredNorm();
    sum += 1.0 / (1.0 + d2 / denom);
    ++count;
  }
  if (count == 0) throw NoValidKeypoints("oks: no keypoint valid on both sides");
  out.value = sum / count;
  return out;
}

Eigen::MatrixXd oks_matrix(std::span<const KeypointSet> a, std::span<const KeypointSet> b,
                           const SimilarityConfig& cfg) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(a.size()),
                                            static_cast<Eigen::Index>(b.size()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      try {
        m(i, j) = oks(a[i], b[j], cfg);
      } catch (const NoValidKeypoints&) {
        m(i, j) = 0.0;
      }
    }
  }
  return m;
}

std::vector<std::size_t> nms(std::span<const KeypointSet> candidates,
                             std::span<const double> confidences, double threshold,
                             const SimilarityConfig& cfg) {
  if (candidates.size() != confidences.size()) {
    throw InvalidArgument("nms: candidates and confidences differ in length");
  }
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw InvalidArgument("nms: threshold must lie in (0, 1)");
  }
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return confidences[x] > confidences[y];
  });

  std::vector<std::size_t> kept;
  for (std::size_t idx : order) {
    bool suppressed = false;
    for (std::size_t k : kept) {
      double s = 0.0;
      try {
        s = oks(candidates[idx], candidates[k], cfg);
      } catch (const NoValidKeypoints&) {
        s = 0.0;
      }
      if (s >= threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(idx);
  }
  return kept;
}

}  // namespace posestream
