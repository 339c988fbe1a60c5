#include "posestream/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <unordered_map>

#include <Eigen/LU>
#include <Eigen/SVD>

#include "posestream/assignment.hpp"
#include "posestream/errors.hpp"
#include "posestream/polygon.hpp"

namespace posestream {

namespace {

// Larger than any achievable cost of a feasible pair, so assignment prefers
// more feasible matches first.
constexpr double kInfeasible = 1e6;

template <typename T>
std::map<int, std::vector<const T*>> by_frame(std::span<const T> items) {
  std::map<int, std::vector<const T*>> out;
  for (const auto& item : items) out[item.frame].push_back(&item);
  return out;
}

KeypointSet as_annotation(const KeypointSet& kp) {
  KeypointSet k = kp;
  k.is_annotation = true;
  return k;
}

double pair_similarity(const Annotation& g, const TrackRecord& p, const MatchConfig& cfg) {
  if (cfg.similarity == MatchSimilarity::kBoxIou) {
    const auto a = keypoint_box(g.keypoints);
    const auto b = keypoint_box(p.keypoints);
    return a && b ? box_iou(*a, *b) : 0.0;
  }
  const KeypointSet gk = as_annotation(g.keypoints);
  try {
    return oks(gk, p.keypoints, cfg.oks);
  } catch (const NoValidKeypoints&) {
    return 0.0;
  }
}

Eigen::MatrixXd similarity_matrix(const std::vector<const Annotation*>& gts,
                                  const std::vector<const TrackRecord*>& preds,
                                  const MatchConfig& cfg) {
  Eigen::MatrixXd s(gts.size(), preds.size());
  for (std::size_t i = 0; i < gts.size(); ++i) {
    for (std::size_t j = 0; j < preds.size(); ++j) s(i, j) = pair_similarity(*gts[i], *preds[j], cfg);
  }
  return s;
}

std::vector<Point3> root_relative(const JointPositions& joints) {
  std::vector<Point3> out(joints.begin(), joints.end());
  const Point3 root = out[0];
  for (auto& p : out) p -= root;
  return out;
}

double mean_distance_mm(std::span<const Point3> a, std::span<const Point3> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += (a[i] - b[i]).norm();
  return 1000.0 * sum / static_cast<double>(a.size());
}

void require_matching_clouds(std::span<const Point3> gt, std::span<const Point3> pred) {
  if (gt.size() != pred.size()) throw InvalidArgument("pose metrics: joint counts differ");
  if (gt.empty()) throw InvalidArgument("pose metrics: empty joint sets");
}

}  // namespace

const char* ignore_mode_name(IgnoreMode m) {
  return m == IgnoreMode::kBuggyIou ? "buggy" : "fixed";
}

FilterResult filter_ignore(std::span<const TrackRecord> predictions,
                           std::span<const IgnoreRegion> regions, const IgnoreConfig& cfg) {
  for (const auto& r : regions) require_simple(r.polygon);
  std::map<int, std::vector<const IgnoreRegion*>> regions_by_frame;
  for (const auto& r : regions) regions_by_frame[r.frame].push_back(&r);

  FilterResult out;
  for (const auto& p : predictions) {
    const auto it = regions_by_frame.find(p.frame);
    const auto box = keypoint_box(p.keypoints);
    if (it == regions_by_frame.end() || !box || box->area() <= 0.0) {
      out.retained.push_back(p);
      continue;
    }
    DiscardEntry entry{p.frame, p.id, *box};
    bool touched = false;
    for (std::size_t r = 0; r < it->second.size(); ++r) {
      const Polygon& poly = it->second[r]->polygon;
      const double inter = intersection_area(poly, *box);
      if (inter <= 0.0) continue;
      touched = true;
      const double iou = inter / (box->area() + polygon_area(poly) - inter);
      const double fraction = inter / box->area();
      const double key = cfg.mode == IgnoreMode::kBuggyIou ? iou : fraction;
      const double best = cfg.mode == IgnoreMode::kBuggyIou ? entry.iou : entry.overlap_fraction;
      if (entry.region < 0 || key > best) {
        entry.region = static_cast<int>(r);
        entry.iou = iou;
        entry.overlap_fraction = fraction;
      }
    }
    // The region with the largest score decides, since the rule is a threshold on it.
    entry.discarded = cfg.mode == IgnoreMode::kBuggyIou ? entry.iou > cfg.iou_threshold
                                                        : entry.overlap_fraction > cfg.fraction_threshold;
    if (touched) out.log.push_back(entry);
    if (!entry.discarded) out.retained.push_back(p);
  }
  return out;
}

double mota_from_counts(int fp, int fn, int id_switches, int gt_count) {
  return 100.0 * (1.0 - static_cast<double>(fp + fn + id_switches) / std::max(gt_count, 1));
}

ClearMot clear_mot(std::span<const Annotation> gt, std::span<const TrackRecord> preds,
                   const MatchConfig& cfg) {
  const auto gt_frames = by_frame(gt);
  const auto pred_frames = by_frame(preds);
  std::set<int> frames;
  for (const auto& [f, _] : gt_frames) frames.insert(f);
  for (const auto& [f, _] : pred_frames) frames.insert(f);

  ClearMot out;
  std::unordered_map<int, int> last_match;  // gt id -> pred id of its latest match
  const std::vector<const Annotation*> no_gt;
  const std::vector<const TrackRecord*> no_pred;

  for (int f : frames) {
    const auto git = gt_frames.find(f);
    const auto pit = pred_frames.find(f);
    const auto& g = git == gt_frames.end() ? no_gt : git->second;
    const auto& p = pit == pred_frames.end() ? no_pred : pit->second;
    const Eigen::MatrixXd sim = similarity_matrix(g, p, cfg);

    std::vector<int> g_to_p(g.size(), -1);
    std::vector<int> p_to_g(p.size(), -1);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const auto lm = last_match.find(g[i]->track_id);
      if (lm == last_match.end()) continue;
      for (std::size_t j = 0; j < p.size(); ++j) {
        if (p[j]->id == lm->second && p_to_g[j] < 0 && sim(i, j) >= cfg.threshold) {
          g_to_p[i] = static_cast<int>(j);
          p_to_g[j] = static_cast<int>(i);
          break;
        }
      }
    }

    std::vector<std::size_t> free_g, free_p;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (g_to_p[i] < 0) free_g.push_back(i);
    }
    for (std::size_t j = 0; j < p.size(); ++j) {
      if (p_to_g[j] < 0) free_p.push_back(j);
    }
    if (!free_g.empty() && !free_p.empty()) {
      Eigen::MatrixXd cost(free_g.size(), free_p.size());
      for (std::size_t a = 0; a < free_g.size(); ++a) {
        for (std::size_t b = 0; b < free_p.size(); ++b) {
          const double s = sim(free_g[a], free_p[b]);
          cost(a, b) = s >= cfg.threshold ? -s : kInfeasible;
        }
      }
      const Assignment asg = hungarian(cost);
      for (std::size_t a = 0; a < free_g.size(); ++a) {
        const int b = asg.row_to_col[a];
        if (b < 0 || cost(a, b) >= kInfeasible) continue;
        g_to_p[free_g[a]] = static_cast<int>(free_p[b]);
        p_to_g[free_p[b]] = static_cast<int>(free_g[a]);
      }
    }

    out.gt_count += static_cast<int>(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      FrameMatch row{f, g[i]->track_id};
      if (g_to_p[i] < 0) {
        ++out.fn;
      } else {
        const TrackRecord& m = *p[g_to_p[i]];
        row.pred_id = m.id;
        row.similarity = sim(i, g_to_p[i]);
        const auto lm = last_match.find(g[i]->track_id);
        if (lm != last_match.end() && lm->second != m.id) {
          row.id_switch = true;
          ++out.id_switches;
        }
        last_match[g[i]->track_id] = m.id;
        ++out.matches;
      }
      out.table.push_back(row);
    }
    for (std::size_t j = 0; j < p.size(); ++j) {
      if (p_to_g[j] >= 0) continue;
      ++out.fp;
      out.table.push_back({f, -1, p[j]->id, 0.0, false});
    }
  }
  out.mota = mota_from_counts(out.fp, out.fn, out.id_switches, out.gt_count);
  return out;
}

IdMetrics id_metrics(std::span<const Annotation> gt, std::span<const TrackRecord> preds,
                     const MatchConfig& cfg) {
  std::map<int, int> gt_index, pred_index;
  for (const auto& a : gt) gt_index.emplace(a.track_id, 0);
  for (const auto& p : preds) pred_index.emplace(p.id, 0);
  int n = 0;
  for (auto& [id, idx] : gt_index) idx = n++;
  n = 0;
  for (auto& [id, idx] : pred_index) idx = n++;

  // Frames in which each (gt, prediction) pair is within the threshold.
  Eigen::MatrixXd overlap = Eigen::MatrixXd::Zero(gt_index.size(), pred_index.size());
  const auto gt_frames = by_frame(gt);
  const auto pred_frames = by_frame(preds);
  for (const auto& [f, g] : gt_frames) {
    const auto pit = pred_frames.find(f);
    if (pit == pred_frames.end()) continue;
    const Eigen::MatrixXd sim = similarity_matrix(g, pit->second, cfg);
    for (std::size_t i = 0; i < g.size(); ++i) {
      for (std::size_t j = 0; j < pit->second.size(); ++j) {
        if (sim(i, j) >= cfg.threshold) {
          overlap(gt_index[g[i]->track_id], pred_index[pit->second[j]->id]) += 1.0;
        }
      }
    }
  }

  IdMetrics out;
  if (overlap.size() > 0) {
    const Assignment asg = hungarian(-overlap);
    for (Eigen::Index i = 0; i < overlap.rows(); ++i) {
      if (asg.row_to_col[i] >= 0) out.idtp += static_cast<int>(overlap(i, asg.row_to_col[i]));
    }
  }
  out.idfn = static_cast<int>(gt.size()) - out.idtp;
  out.idfp = static_cast<int>(preds.size()) - out.idtp;
  if (out.idtp + out.idfp > 0) out.idp = 100.0 * out.idtp / (out.idtp + out.idfp);
  if (out.idtp + out.idfn > 0) out.idr = 100.0 * out.idtp / (out.idtp + out.idfn);
  const int denom = 2 * out.idtp + out.idfp + out.idfn;
  if (denom > 0) out.idf1 = 100.0 * 2.0 * out.idtp / denom;
  return out;
}

double pck(const KeypointSet& gt, const KeypointSet& pred, double threshold, double normalization) {
  if (gt.size() != pred.size()) throw InvalidArgument("pck: keypoint counts differ");
  const double limit = threshold * normalization;
  int valid = 0;
  int within = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!gt.is_valid(i) || !pred.is_valid(i)) continue;
    ++valid;
    if ((gt.points[i] - pred.points[i]).norm() < limit) ++within;
  }
  if (valid == 0) throw NoValidKeypoints("pck: no keypoint is valid on both sides");
  return static_cast<double>(within) / valid;
}

double mpjpe(std::span<const Point3> gt, std::span<const Point3> pred) {
  require_matching_clouds(gt, pred);
  double sum = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) sum += ((gt[i] - gt[0]) - (pred[i] - pred[0])).norm();
  return 1000.0 * sum / static_cast<double>(gt.size());
}

Similarity3 procrustes(std::span<const Point3> from, std::span<const Point3> to) {
  require_matching_clouds(from, to);
  const auto n = static_cast<Eigen::Index>(from.size());
  if (n < 3) throw DegenerateCloud("procrustes: need at least three points");
  Eigen::Matrix3Xd x(3, n), y(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x.col(i) = from[i];
    y.col(i) = to[i];
  }
  const Eigen::Vector3d mx = x.rowwise().mean();
  const Eigen::Vector3d my = y.rowwise().mean();
  x.colwise() -= mx;
  y.colwise() -= my;

  for (const Eigen::Matrix3Xd* c : {&x, &y}) {
    const Eigen::Vector3d sv = Eigen::JacobiSVD<Eigen::Matrix3d>(*c * c->transpose()).singularValues();
    if (!(sv[0] > 0.0) || sv[1] <= 1e-12 * sv[0]) {
      throw DegenerateCloud("procrustes: points are collinear or coincide");
    }
  }

  const Eigen::Matrix3d cov = y * x.transpose() / static_cast<double>(n);
  const Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Vector3d s = Eigen::Vector3d::Ones();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) s[2] = -1.0;
  Similarity3 t;
  t.rotation = svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
  const double var_x = x.squaredNorm() / static_cast<double>(n);
  t.scale = svd.singularValues().dot(s) / var_x;
  t.translation = my - t.scale * t.rotation * mx;
  return t;
}

double pa_mpjpe(std::span<const Point3> gt, std::span<const Point3> pred) {
  const Similarity3 t = procrustes(pred, gt);
  std::vector<Point3> aligned(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) aligned[i] = t.apply(pred[i]);
  return mean_distance_mm(gt, aligned);
}

Evaluation evaluate(std::span<const Annotation> gt, std::span<const IgnoreRegion> regions,
                    std::span<const TrackRecord> preds, const EvaluationConfig& cfg,
                    const Skeleton& skel) {
  Evaluation ev;
  FilterResult filtered = filter_ignore(preds, regions, cfg.ignore);
  ev.discards = std::move(filtered.log);
  const auto& kept = filtered.retained;

  ev.clear = clear_mot(gt, kept, cfg.match);
  const IdMetrics ids = id_metrics(gt, kept, cfg.match);

  MetricsReport& r = ev.report;
  r.mota = ev.clear.mota;
  r.idf1 = ids.idf1;
  r.idp = ids.idp;
  r.idr = ids.idr;
  r.id_switches = ev.clear.id_switches;
  r.fp = ev.clear.fp;
  r.fn = ev.clear.fn;
  r.gt_count = ev.clear.gt_count;
  r.matches = ev.clear.matches;
  r.predictions = static_cast<int>(preds.size());
  r.discarded = static_cast<int>(preds.size() - kept.size());
  r.ignore_mode = cfg.ignore.mode;

  if (!cfg.pose_metrics) return ev;

  std::map<std::pair<int, int>, const Annotation*> gt_lookup;
  for (const auto& a : gt) gt_lookup[{a.frame, a.track_id}] = &a;
  std::map<std::pair<int, int>, const TrackRecord*> pred_lookup;
  for (const auto& p : kept) pred_lookup[{p.frame, p.id}] = &p;

  PoseMetrics pm;
  std::map<double, std::pair<long, long>> pck_counts;  // within, total
  double mpjpe_sum = 0.0;
  double pa_sum = 0.0;
  int pa_pairs = 0;
  for (const auto& row : ev.clear.table) {
    if (row.gt_id < 0 || row.pred_id < 0) continue;
    const Annotation& g = *gt_lookup.at({row.frame, row.gt_id});
    const TrackRecord& p = *pred_lookup.at({row.frame, row.pred_id});
    ++pm.pairs;

    double scale = 0.0;
    try {
      scale = estimate_scale(g.keypoints, cfg.match.oks);
    } catch (const NoValidLimb&) {
      scale = 0.0;
    }
    if (scale > 0.0) {
      for (double th : cfg.pck_thresholds) {
        auto& [within, total] = pck_counts[th];
        const double limit = th * scale * cfg.pck_reference;
        for (std::size_t i = 0; i < g.keypoints.size() && i < p.keypoints.size(); ++i) {
          if (!g.keypoints.is_valid(i) || !p.keypoints.is_valid(i)) continue;
          ++total;
          if ((g.keypoints.points[i] - p.keypoints.points[i]).norm() < limit) ++within;
        }
      }
    }

    std::vector<Point3> gt3;
    if (g.joints3d) {
      gt3 = *g.joints3d;
    } else if (g.pose) {
      gt3 = root_relative(forward_kinematics(*g.pose, skel));
    } else {
      continue;
    }
    const std::vector<Point3> pred3 = root_relative(forward_kinematics(p.pose, skel));
    if (gt3.size() != pred3.size()) continue;
    ++pm.pairs_3d;
    mpjpe_sum += mpjpe(gt3, pred3);
    try {
      pa_sum += pa_mpjpe(gt3, pred3);
      ++pa_pairs;
    } catch (const DegenerateCloud&) {
    }
  }
  for (double th : cfg.pck_thresholds) {
    const auto [within, total] = pck_counts[th];
    pm.pck[th] = total > 0 ? static_cast<double>(within) / total : 0.0;
  }
  pm.mpjpe = pm.pairs_3d > 0 ? mpjpe_sum / pm.pairs_3d : 0.0;
  pm.pa_mpjpe = pa_pairs > 0 ? pa_sum / pa_pairs : 0.0;
  r.pose = pm;
  return ev;
}

std::string format_report(const MetricsReport& r) {
  std::ostringstream out;
  char buf[128];
  const auto line = [&](const char* label, const char* fmt, auto value) {
    std::snprintf(buf, sizeof buf, fmt, value);
    out << label << buf << '\n';
  };
  out << "tracking (ignore mode: " << ignore_mode_name(r.ignore_mode) << ")\n";
  line("  MOTA         ", "%.2f", r.mota);
  line("  IDF1         ", "%.2f", r.idf1);
  line("  IDP          ", "%.2f", r.idp);
  line("  IDR          ", "%.2f", r.idr);
  line("  ID switches  ", "%d", r.id_switches);
  line("  FP           ", "%d", r.fp);
  line("  FN           ", "%d", r.fn);
  line("  GT objects   ", "%d", r.gt_count);
  line("  matches      ", "%d", r.matches);
  line("  predictions  ", "%d", r.predictions);
  line("  discarded    ", "%d", r.discarded);
  if (r.pose) {
    out << "pose (" << r.pose->pairs << " matched pairs)\n";
    for (const auto& [th, v] : r.pose->pck) {
      std::snprintf(buf, sizeof buf, "  PCK@%-8g %.4f", th, v);
      out << buf << '\n';
    }
    line("  MPJPE mm     ", "%.2f", r.pose->mpjpe);
    line("  PA-MPJPE mm  ", "%.2f", r.pose->pa_mpjpe);
  }
  return out.str();
}

}  // namespace posestream
