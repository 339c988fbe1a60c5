#include "posestream/tracker.hpp"

#include <algorithm>
#include <set>

#include "posestream/errors.hpp"

namespace posestream {

namespace {

bool in_unit(double x) { return x >= 0.0 && x <= 1.0; }

}  // namespace

void TrackerConfig::validate() const {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("tracker: alpha must lie in (0, 1]");
  if (!in_unit(instantiate_below)) throw ConfigError("tracker: instantiate_below must lie in [0, 1]");
  if (!in_unit(delete_ema_below)) throw ConfigError("tracker: delete_ema_below must lie in [0, 1]");
  if (!in_unit(young_oks_below)) throw ConfigError("tracker: young_oks_below must lie in [0, 1]");
  if (!in_unit(collapse_oks_above)) throw ConfigError("tracker: collapse_oks_above must lie in [0, 1]");
  if (!in_unit(initial_score)) throw ConfigError("tracker: initial_score must lie in [0, 1]");
  if (young_age < 1) throw ConfigError("tracker: young_age must be at least 1");
  if (collapse_frames < 1) throw ConfigError("tracker: collapse_frames must be at least 1");
  if (input_size < 1) throw ConfigError("tracker: input_size must be positive");
  if (!(kinematic.blend >= 0.0 && kinematic.blend <= 1.0)) {
    throw ConfigError("tracker: kinematic blend must lie in [0, 1]");
  }
  detection.validate();
  if (updater == UpdaterKind::kLearned) update.validate();
}

const char* reason_text(DeleteReason r) {
  switch (r) {
    case DeleteReason::kNone: return "";
    case DeleteReason::kLowScore: return "ema<0.15";
    case DeleteReason::kYoung: return "young track with oks<0.15";
    case DeleteReason::kCollapse: return "overlap>0.6 for >20 frames";
  }
  return "";
}

std::size_t TrackHistory::count(EventKind kind) const {
  return static_cast<std::size_t>(std::count_if(
      events.begin(), events.end(), [&](const LifecycleEvent& e) { return e.kind == kind; }));
}

std::size_t TrackHistory::count(DeleteReason reason) const {
  return static_cast<std::size_t>(std::count_if(events.begin(), events.end(), [&](const LifecycleEvent& e) {
    return e.kind == EventKind::kDelete && e.reason == reason;
  }));
}

std::vector<Deletion> lifecycle_step(std::span<Track> tracks, std::span<const double> best_oks,
                                     const Eigen::MatrixXd& pairwise_oks,
                                     std::span<const std::uint8_t> newborn,
                                     const TrackerConfig& cfg) {
  const std::size_t n = tracks.size();
  if (best_oks.size() != n || newborn.size() != n || pairwise_oks.rows() != static_cast<Eigen::Index>(n) ||
      pairwise_oks.cols() != static_cast<Eigen::Index>(n)) {
    throw InvalidArgument("lifecycle: inputs disagree on the number of tracks");
  }

  std::set<int> alive;
  for (const auto& t : tracks) alive.insert(t.id);
  for (auto& t : tracks) {
    std::erase_if(t.overlap_frames, [&](const auto& kv) { return !alive.contains(kv.first); });
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (newborn[i]) continue;
    tracks[i].last_matched_oks = best_oks[i];
    tracks[i].ema_score = cfg.alpha * best_oks[i] + (1.0 - cfg.alpha) * tracks[i].ema_score;
  }

  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (newborn[i] || newborn[j]) continue;
      if (pairwise_oks(i, j) > cfg.collapse_oks_above) {
        ++tracks[i].overlap_frames[tracks[j].id];
        ++tracks[j].overlap_frames[tracks[i].id];
      } else {
        tracks[i].overlap_frames.erase(tracks[j].id);
        tracks[j].overlap_frames.erase(tracks[i].id);
      }
    }
  }

  std::vector<Deletion> marks(n);
  for (std::size_t i = 0; i < n; ++i) {
    marks[i].index = i;
    if (newborn[i]) continue;
    if (tracks[i].ema_score < cfg.delete_ema_below) {
      marks[i].reason = DeleteReason::kLowScore;
    } else if (tracks[i].age < cfg.young_age && best_oks[i] < cfg.young_oks_below) {
      marks[i].reason = DeleteReason::kYoung;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (newborn[i] || newborn[j]) continue;
      if (marks[i].reason != DeleteReason::kNone || marks[j].reason != DeleteReason::kNone) continue;
      const auto it = tracks[i].overlap_frames.find(tracks[j].id);
      if (it == tracks[i].overlap_frames.end() || it->second <= cfg.collapse_frames) continue;
      std::size_t loser = j;
      if (tracks[i].ema_score < tracks[j].ema_score) {
        loser = i;
      } else if (tracks[i].ema_score == tracks[j].ema_score && tracks[i].id > tracks[j].id) {
        loser = i;
      }
      const std::size_t winner = loser == i ? j : i;
      marks[loser].reason = DeleteReason::kCollapse;
      marks[loser].peer = tracks[winner].id;
    }
  }

  std::vector<Deletion> out;
  for (auto& m : marks) {
    if (m.reason != DeleteReason::kNone) out.push_back(m);
  }
  return out;
}

Tracker::Tracker(TrackerConfig cfg, const Skeleton& skel)
    : cfg_(std::move(cfg)), skel_(skel), detector_(cfg_.detection, skel_) {
  cfg_.validate();
  if (cfg_.updater == UpdaterKind::kLearned) {
    UpdateConfig u = cfg_.update;
    u.decoder_seed = cfg_.detection.decoder_seed;
    updater_.emplace(u, skel_);
  }
}

void Tracker::update_existing(const FrameObservation& frame,
                              std::span<const DetectionCandidate> dets) {
  if (updater_) {
    std::vector<TrackState> states;
    states.reserve(tracks_.size());
    for (const auto& t : tracks_) states.push_back({t.pose, t.hidden});
    const auto next = updater_->step(frame.features, frame.intrinsics, states);
    for (std::size_t i = 0; i < tracks_.size(); ++i) {
      tracks_[i].previous_gamma = tracks_[i].pose.gamma;
      tracks_[i].pose = next[i].pose;
      tracks_[i].hidden = next[i].hidden;
    }
    return;
  }
  std::vector<KinematicTrack> kin;
  kin.reserve(tracks_.size());
  for (const auto& t : tracks_) kin.push_back({t.pose, t.previous_gamma});
  const auto next = kinematic_update(kin, dets, frame.intrinsics, cfg_.kinematic);
  for (std::size_t i = 0; i < tracks_.size(); ++i) {
    tracks_[i].pose = next[i].pose;
    tracks_[i].previous_gamma = next[i].previous_gamma;
  }
}

void Tracker::refine_newborns(const FrameObservation& frame, std::size_t first) {
  if (!updater_ || first >= tracks_.size()) return;
  std::vector<TrackState> states;
  for (std::size_t i = first; i < tracks_.size(); ++i) states.push_back({tracks_[i].pose, tracks_[i].hidden});
  const auto refined = updater_->step(frame.features, frame.intrinsics, states);
  for (std::size_t i = first; i < tracks_.size(); ++i) {
    tracks_[i].pose = refined[i - first].pose;
    tracks_[i].hidden = refined[i - first].hidden;
    tracks_[i].previous_gamma = tracks_[i].pose.gamma;
  }
}

Snapshot Tracker::step(const FrameObservation& frame) {
  if (last_frame_ && frame.frame <= *last_frame_) {
    throw OutOfOrderFrame("tracker: frame " + std::to_string(frame.frame) + " after frame " +
                          std::to_string(*last_frame_));
  }
  last_frame_ = frame.frame;
  const Intrinsics& k = frame.intrinsics;
  if (updater_ && frame.features.empty()) {
    throw DataError("tracker: the learned updater needs feature maps");
  }

  const auto dets = detector_.detect(frame.grids, k);
  for (auto& t : tracks_) ++t.age;
  if (!tracks_.empty()) update_existing(frame, dets);

  const std::size_t existing = tracks_.size();
  std::vector<KeypointSet> track_kp;
  track_kp.reserve(existing);
  for (const auto& t : tracks_) track_kp.push_back(keypoints_2d(t.pose, k, skel_));
  std::vector<KeypointSet> det_kp;
  det_kp.reserve(dets.size());
  for (const auto& d : dets) det_kp.push_back(d.keypoints);
  const Eigen::MatrixXd sim = oks_matrix(track_kp, det_kp, cfg_.detection.similarity);

  for (std::size_t j = 0; j < dets.size(); ++j) {
    const double best = existing > 0 ? sim.col(static_cast<Eigen::Index>(j)).maxCoeff() : 0.0;
    if (best >= cfg_.instantiate_below) continue;
    Track t;
    t.id = next_id_++;
    t.pose = dets[j].pose;
    if (updater_) t.hidden = updater_->initial_hidden();
    t.ema_score = cfg_.initial_score;
    t.age = 1;
    t.previous_gamma = t.pose.gamma;
    events_.push_back({frame.frame, t.id, EventKind::kInstantiate, DeleteReason::kNone, t.ema_score,
                       t.age, std::nullopt, best});
    tracks_.push_back(std::move(t));
  }
  refine_newborns(frame, existing);

  std::vector<double> best(tracks_.size(), 0.0);
  std::vector<std::uint8_t> newborn(tracks_.size(), 0);
  for (std::size_t i = 0; i < tracks_.size(); ++i) {
    if (i >= existing) {
      newborn[i] = 1;
    } else if (!dets.empty()) {
      best[i] = sim.row(static_cast<Eigen::Index>(i)).maxCoeff();
    }
  }
  std::vector<KeypointSet> all_kp = std::move(track_kp);
  for (std::size_t i = existing; i < tracks_.size(); ++i) all_kp.push_back(keypoints_2d(tracks_[i].pose, k, skel_));
  const Eigen::MatrixXd pairwise = oks_matrix(all_kp, all_kp, cfg_.detection.similarity);

  const auto deletions = lifecycle_step(tracks_, best, pairwise, newborn, cfg_);
  for (const auto& d : deletions) {
    const Track& t = tracks_[d.index];
    events_.push_back({frame.frame, t.id, EventKind::kDelete, d.reason, t.ema_score, t.age, d.peer,
                       std::nullopt});
  }
  for (auto it = deletions.rbegin(); it != deletions.rend(); ++it) {
    tracks_.erase(tracks_.begin() + static_cast<std::ptrdiff_t>(it->index));
    all_kp.erase(all_kp.begin() + static_cast<std::ptrdiff_t>(it->index));
  }

  Snapshot snap;
  snap.frame = frame.frame;
  for (std::size_t i = 0; i < tracks_.size(); ++i) {
    const Track& t = tracks_[i];
    snap.tracks.push_back({frame.frame, t.id, t.pose, all_kp[i], t.ema_score, t.age});
  }
  return snap;
}

TrackHistory run_stream(std::span<const FrameObservation> frames, const TrackerConfig& cfg) {
  std::size_t i = 0;
  return run_stream(
      [&](FrameObservation& out) {
        if (i >= frames.size()) return false;
        out = frames[i++];
        return true;
      },
      cfg);
}

TrackHistory run_stream(const std::function<bool(FrameObservation&)>& next,
                        const TrackerConfig& cfg) {
  Tracker tracker(cfg);
  TrackHistory history;
  FrameObservation frame;
  while (next(frame)) history.frames.push_back(tracker.step(frame));
  if (history.frames.empty()) throw InvalidArgument("run_stream: no frames");
  history.events = tracker.events();
  return history;
}

}  // namespace posestream
