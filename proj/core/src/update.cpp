#include "posestream/update.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/Geometry>

#include "posestream/assignment.hpp"
#include "posestream/errors.hpp"
#include "posestream/tensor_archive.hpp"

namespace posestream {

namespace {

constexpr int kKeypointInputs = 3 * kNumJoints;                      // u, v, valid
constexpr int kPoseInputs = 3 + kNumPoseParams + kNumShapeParams;     // gamma, theta, beta
constexpr int kHeadOutputs = 3 + 3 + kEmbeddingDim;                   // du dv zlog, root, embedding

nn::Matrix reshape_tokens(const Eigen::RowVectorXd& flat, int tokens, int width) {
  nn::Matrix out(tokens, width);
  for (int m = 0; m < tokens; ++m) out.row(m) = flat.segment(static_cast<Eigen::Index>(m) * width, width);
  return out;
}

}  // namespace

void UpdateConfig::validate() const {
  if (tokens < 1) throw InvalidArgument("update: need at least one token per person");
  if (width < 1 || heads < 1 || width % heads != 0) {
    throw InvalidArgument("update: token width must be divisible by the head count");
  }
  if (hidden < 1) throw InvalidArgument("update: hidden width must be positive");
  if (rounds < 1) throw InvalidArgument("update: need at least one attention round");
  if (feature_channels < 1) throw InvalidArgument("update: feature channels must be positive");
  if (positional_channels < 0 || positional_channels % 4 != 0) {
    throw InvalidArgument("update: positional channels must be a multiple of 4");
  }
}

Point3 apply_translation_residual(const Point3& previous, double du, double dv,
                                  double z_log_residual, const Intrinsics& k) {
  const Point2 uv = project(previous, k);
  return unproject(uv.x() + du, uv.y() + dv, previous.z() * std::exp(z_log_residual), k);
}

PoseUpdater::PoseUpdater(UpdateConfig cfg, const Skeleton& skel)
    : cfg_(std::move(cfg)), skel_(skel), decoder_(shared_pose_decoder(cfg_.decoder_seed)) {
  cfg_.validate();
  Rng rng = Rng::derive(cfg_.seed, 0x0bda7e);
  const int md = cfg_.tokens * cfg_.width;
  encode_2d_ = nn::Linear::init(kKeypointInputs, md, rng);
  encode_pose_ = nn::Linear::init(kPoseInputs, md, rng);
  encode_hidden_ = nn::Linear::init(cfg_.hidden, md, rng);
  const int image_in = cfg_.feature_channels + cfg_.positional_channels;
  image_key_ = nn::Linear::init(image_in, cfg_.width, rng);
  image_value_ = nn::Linear::init(image_in, cfg_.width, rng);
  for (int r = 0; r < cfg_.rounds; ++r) {
    Round round;
    round.query = nn::Linear::init(cfg_.width, cfg_.width, rng);
    round.post_attention = nn::Mlp::init(cfg_.width, 2 * cfg_.width, cfg_.width, rng);
    round.across_people = nn::TransformerBlock::init(cfg_.width, cfg_.heads, rng);
    round.within_person = nn::TransformerBlock::init(cfg_.width, cfg_.heads, rng);
    rounds_.push_back(std::move(round));
  }
  gru_ = nn::Gru::init(cfg_.width, cfg_.hidden, rng);
  affine_state_ = nn::Linear::init(cfg_.width + cfg_.hidden, cfg_.hidden, rng);
  head_ = nn::Mlp::init(cfg_.width + cfg_.hidden, 2 * cfg_.width, kHeadOutputs, rng);
}

std::vector<nn::Matrix> PoseUpdater::encode_tokens(std::span<const TrackState> tracks,
                                                   const Intrinsics& k) const {
  std::vector<nn::Matrix> out;
  out.reserve(tracks.size());
  for (const auto& t : tracks) {
    const KeypointSet kp = keypoints_2d(t.pose, k, skel_);
    Eigen::RowVectorXd kin(kKeypointInputs);
    for (int j = 0; j < kNumJoints; ++j) {
      const bool v = kp.is_valid(j);
      kin[3 * j] = v ? 2.0 * kp.points[j].x() / k.width - 1.0 : 0.0;
      kin[3 * j + 1] = v ? 2.0 * kp.points[j].y() / k.height - 1.0 : 0.0;
      kin[3 * j + 2] = v ? 1.0 : 0.0;
    }
    Eigen::RowVectorXd pin(kPoseInputs);
    pin << t.pose.gamma.transpose(), t.pose.theta.transpose(), t.pose.beta.transpose();

    Eigen::RowVectorXd hin = Eigen::RowVectorXd::Zero(cfg_.hidden);
    if (cfg_.variant != UpdateVariant::kNoHidden && t.hidden.size() > 0) {
      if (t.hidden.size() != cfg_.hidden) throw InvalidArgument("update: hidden state has wrong width");
      hin = t.hidden.transpose();
    }

    Eigen::RowVectorXd flat = nn::gelu(encode_2d_.forward(kin));
    flat += nn::gelu(encode_pose_.forward(pin));
    flat += nn::gelu(encode_hidden_.forward(hin));
    out.push_back(reshape_tokens(flat, cfg_.tokens, cfg_.width));
  }
  return out;
}

nn::Matrix PoseUpdater::image_tokens(const ImageFeatureMap& features) const {
  if (features.channels != cfg_.feature_channels || features.rows < 1 || features.cols < 1 ||
      features.data.size() !=
          static_cast<std::size_t>(features.rows) * features.cols * features.channels) {
    throw InvalidArgument("update: feature map does not match the configured channel count");
  }
  const int pos = cfg_.positional_channels;
  const int freqs = pos / 4;
  nn::Matrix x(static_cast<Eigen::Index>(features.rows) * features.cols, features.channels + pos);
  for (int r = 0; r < features.rows; ++r) {
    for (int c = 0; c < features.cols; ++c) {
      const Eigen::Index row = static_cast<Eigen::Index>(r) * features.cols + c;
      for (int ch = 0; ch < features.channels; ++ch) x(row, ch) = features.at(r, c, ch);
      const double py = (r + 0.5) / features.rows;
      const double px = (c + 0.5) / features.cols;
      for (int f = 0; f < freqs; ++f) {
        const double w = std::numbers::pi * std::ldexp(1.0, f);
        const int base = features.channels + 4 * f;
        x(row, base) = std::sin(w * px);
        x(row, base + 1) = std::cos(w * px);
        x(row, base + 2) = std::sin(w * py);
        x(row, base + 3) = std::cos(w * py);
      }
    }
  }
  return x;
}

std::vector<TrackState> PoseUpdater::step(const ImageFeatureMap& features, const Intrinsics& k,
                                          std::span<const TrackState> tracks) const {
  if (tracks.empty()) throw EmptyTrackSet("update: no tracks to update");
  k.validate();
  const int n = static_cast<int>(tracks.size());
  const int m = cfg_.tokens;
  const int d = cfg_.width;

  const auto blocks = encode_tokens(tracks, k);
  nn::Matrix x(static_cast<Eigen::Index>(n) * m, d);  // row n * M + m
  for (int i = 0; i < n; ++i) x.middleRows(static_cast<Eigen::Index>(i) * m, m) = blocks[i];

  const nn::Matrix img = image_tokens(features);
  const nn::Matrix keys = image_key_.forward(img);
  const nn::Matrix values = image_value_.forward(img);

  for (const auto& round : rounds_) {
    const nn::Matrix feedback =
        nn::scaled_dot_product_attention(round.query.forward(x), keys, values, cfg_.heads);
    x += round.post_attention.forward(feedback);

    for (int t = 0; t < m; ++t) {
      nn::Matrix people(n, d);
      for (int i = 0; i < n; ++i) people.row(i) = x.row(static_cast<Eigen::Index>(i) * m + t);
      people = round.across_people.forward(people);
      for (int i = 0; i < n; ++i) x.row(static_cast<Eigen::Index>(i) * m + t) = people.row(i);
    }
    for (int i = 0; i < n; ++i) {
      auto rows = x.middleRows(static_cast<Eigen::Index>(i) * m, m);
      rows = round.within_person.forward(rows);
    }
  }

  nn::Matrix pooled(n, d);
  for (int i = 0; i < n; ++i) {
    pooled.row(i) = x.middleRows(static_cast<Eigen::Index>(i) * m, m).colwise().mean();
  }

  nn::Matrix h_in = nn::Matrix::Zero(n, cfg_.hidden);
  if (cfg_.variant != UpdateVariant::kNoHidden) {
    for (int i = 0; i < n; ++i) {
      if (tracks[i].hidden.size() == cfg_.hidden) h_in.row(i) = tracks[i].hidden.transpose();
    }
  }
  nn::Matrix h_out;
  switch (cfg_.variant) {
    case UpdateVariant::kFull:
      h_out = gru_.forward(pooled, h_in);
      break;
    case UpdateVariant::kNoGru: {
      nn::Matrix joined(n, d + cfg_.hidden);
      joined << pooled, h_in;
      h_out = affine_state_.forward(joined);
      break;
    }
    case UpdateVariant::kNoHidden:
      h_out = nn::Matrix::Zero(n, cfg_.hidden);
      break;
  }

  nn::Matrix head_in(n, d + cfg_.hidden);
  head_in << pooled, h_out;
  const nn::Matrix raw = head_.forward(head_in);

  std::vector<TrackState> out(tracks.size());
  for (int i = 0; i < n; ++i) {
    const auto& prev = tracks[i].pose;
    auto& next = out[i];
    next.pose.gamma = apply_translation_residual(prev.gamma, raw(i, 0), raw(i, 1), raw(i, 2), k);
    next.pose.theta.head<3>() = raw.row(i).segment<3>(3).transpose();
    std::vector<double> embedding(kEmbeddingDim);
    for (int e = 0; e < kEmbeddingDim; ++e) embedding[e] = raw(i, 6 + e);
    next.pose.theta.tail<kNumBodyPoseParams>() = decoder_->decode(embedding);
    canonicalize(next.pose);
    next.pose.beta = prev.beta;
    next.hidden = h_out.row(i).transpose();
  }
  return out;
}

void PoseUpdater::visit_parameters(const nn::ParamVisitor& v) {
  encode_2d_.visit("encode_2d", v);
  encode_pose_.visit("encode_pose", v);
  encode_hidden_.visit("encode_hidden", v);
  image_key_.visit("image_key", v);
  image_value_.visit("image_value", v);
  for (std::size_t r = 0; r < rounds_.size(); ++r) {
    const std::string p = "round" + std::to_string(r);
    rounds_[r].query.visit(p + ".query", v);
    rounds_[r].post_attention.visit(p + ".post_attention", v);
    rounds_[r].across_people.visit(p + ".across_people", v);
    rounds_[r].within_person.visit(p + ".within_person", v);
  }
  gru_.visit("gru", v);
  affine_state_.visit("affine_state", v);
  head_.visit("head", v);
}

void PoseUpdater::save(const std::filesystem::path& data_path,
                       const std::filesystem::path& manifest_path) {
  TensorArchiveWriter w(data_path);
  visit_parameters([&](const std::string& name, double* data, Eigen::Index rows, Eigen::Index cols) {
    w.add(name, std::span<const double>(data, static_cast<std::size_t>(rows * cols)), {rows, cols});
  });
  w.finish(manifest_path);
}

void PoseUpdater::load(const std::filesystem::path& manifest_path) {
  const TensorArchive a = TensorArchive::open(manifest_path);
  visit_parameters([&](const std::string& name, double* data, Eigen::Index rows, Eigen::Index cols) {
    const TensorEntry& e = a.entry(name);
    if (e.shape != std::vector<std::int64_t>{rows, cols}) {
      throw DataError("update weights: tensor '" + name + "' has an unexpected shape");
    }
    const auto values = a.read_f64(name);
    std::copy(values.begin(), values.end(), data);
  });
}

PoseState interpolate_pose(const PoseState& from, const PoseState& to, double t) {
  PoseState out;
  out.gamma = from.gamma + t * (to.gamma - from.gamma);
  for (int j = 0; j < kNumJoints; ++j) {
    const Eigen::Quaterniond qa(rotation_from_axis_angle(from.joint_rotation(j)));
    const Eigen::Quaterniond qb(rotation_from_axis_angle(to.joint_rotation(j)));
    out.theta.segment<3>(3 * j) = axis_angle_from_rotation(qa.slerp(t, qb).toRotationMatrix());
  }
  out.beta = from.beta + t * (to.beta - from.beta);
  return out;
}

std::vector<KinematicTrack> kinematic_update(std::span<const KinematicTrack> tracks,
                                             std::span<const DetectionCandidate> detections,
                                             const Intrinsics& k, const KinematicConfig& cfg) {
  std::vector<KeypointSet> track_kps;
  track_kps.reserve(tracks.size());
  for (const auto& t : tracks) track_kps.push_back(keypoints_2d(t.pose, k));
  std::vector<KeypointSet> det_kps;
  det_kps.reserve(detections.size());
  for (const auto& d : detections) det_kps.push_back(d.keypoints);

  const Eigen::MatrixXd sim = oks_matrix(track_kps, det_kps, cfg.similarity);
  const Assignment a = hungarian(-sim);

  std::vector<KinematicTrack> out(tracks.begin(), tracks.end());
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    const auto& prev = tracks[i];
    auto& next = out[i];
    const int j = a.row_to_col.empty() ? -1 : a.row_to_col[i];
    next.previous_gamma = prev.pose.gamma;
    if (j >= 0 && sim(i, j) >= cfg.min_match_oks) {
      next.pose = interpolate_pose(prev.pose, detections[j].pose, cfg.blend);
      next.pose.beta = prev.pose.beta;
    } else {
      next.pose.gamma = prev.pose.gamma + (prev.pose.gamma - prev.previous_gamma);
    }
  }
  return out;
}

}  // namespace posestream
