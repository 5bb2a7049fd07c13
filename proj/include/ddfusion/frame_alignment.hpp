#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "ddfusion/errors.hpp"
#include "ddfusion/state_model.hpp"

namespace ddfusion {

struct TimedPoint {
  double t = 0.0;
  double x = 0.0;
  double y = 0.0;
};

/// Planar trajectory with strictly increasing timestamps.
struct TimedPath {
  std::vector<TimedPoint> samples;

  bool empty() const { return samples.empty(); }
  std::size_t size() const { return samples.size(); }
  double t_begin() const { return samples.front().t; }
  double t_end() const { return samples.back().t; }

  void validate() const {
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto& s = samples[i];
      if (!(std::isfinite(s.t) && std::isfinite(s.x) && std::isfinite(s.y)))
        throw ConfigError("path sample " + std::to_string(i) + " is not finite");
      if (i > 0 && !(s.t > samples[i - 1].t))
        throw ConfigError("path timestamps must be strictly increasing (sample " +
                          std::to_string(i) + ")");
    }
  }

  /// Samples with t inside [t0, t1].
  TimedPath window(double t0, double t1) const {
    TimedPath out;
    for (const auto& s : samples)
      if (s.t >= t0 && s.t <= t1) out.samples.push_back(s);
    return out;
  }
};

struct PointPair {
  Eigen::Vector2d a;  ///< point in the reference frame
  Eigen::Vector2d b;  ///< corresponding point in the frame being aligned
};

struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double psi = 0.0;
};

/// Rotation by theta followed by translation (tx, ty): p_a = R(theta) p_b + t.
struct RigidTransform2D {
  double theta = 0.0;
  double tx = 0.0;
  double ty = 0.0;

  static RigidTransform2D identity() { return {}; }

  Eigen::Matrix2d rotation() const {
    const double c = std::cos(theta), s = std::sin(theta);
    Eigen::Matrix2d r;
    r << c, -s, s, c;
    return r;
  }

  Eigen::Vector2d translation() const { return {tx, ty}; }

  RigidTransform2D inverse() const {
    const Eigen::Vector2d t = -(rotation().transpose() * translation());
    return {wrap_angle(-theta), t.x(), t.y()};
  }
};

inline Eigen::Vector2d apply_transform(const RigidTransform2D& tf, const Eigen::Vector2d& p) {
  return tf.rotation() * p + tf.translation();
}

inline Pose2 apply_transform(const RigidTransform2D& tf, const Pose2& p) {
  const Eigen::Vector2d q = apply_transform(tf, Eigen::Vector2d(p.x, p.y));
  return {q.x(), q.y(), wrap_angle(p.psi + tf.theta)};
}

namespace detail {

inline Eigen::Vector2d interpolate(const TimedPoint& p0, const TimedPoint& p1, double t) {
  const double u = (t - p0.t) / (p1.t - p0.t);
  return {p0.x + u * (p1.x - p0.x), p0.y + u * (p1.y - p0.y)};
}

}  // namespace detail

/// Pairs every sample of `a` that lies inside the common time span with `b`
/// linearly interpolated at the same timestamp. The pair-count requirement
/// of the alignment itself is enforced by horn_align.
inline std::vector<PointPair> associate(const TimedPath& a, const TimedPath& b) {
  if (a.empty() || b.size() < 2) throw AlignmentError("no temporal overlap between paths");
  const double t0 = std::max(a.t_begin(), b.t_begin());
  const double t1 = std::min(a.t_end(), b.t_end());
  if (!(t0 <= t1)) throw AlignmentError("no temporal overlap between paths");

  std::vector<PointPair> pairs;
  std::size_t j = 0;
  for (const auto& s : a.samples) {
    if (s.t < t0 || s.t > t1) continue;
    while (j + 2 < b.size() && b.samples[j + 1].t < s.t) ++j;
    const auto& b0 = b.samples[j];
    const auto& b1 = b.samples[j + 1];
    pairs.push_back({{s.x, s.y}, detail::interpolate(b0, b1, s.t)});
  }
  if (pairs.empty()) throw AlignmentError("no temporal overlap between paths");
  return pairs;
}

/// Closed-form least-squares rigid transform (unit scale) mapping the `b`
/// points of each pair onto the `a` points.
inline RigidTransform2D horn_align(const std::vector<PointPair>& pairs) {
  if (pairs.size() < 2) throw AlignmentError("alignment needs at least 2 point pairs");

  Eigen::Vector2d ca = Eigen::Vector2d::Zero(), cb = Eigen::Vector2d::Zero();
  for (const auto& p : pairs) {
    ca += p.a;
    cb += p.b;
  }
  ca /= static_cast<double>(pairs.size());
  cb /= static_cast<double>(pairs.size());

  // Cross-covariance terms of the centered sets.
  double dot = 0.0, cross = 0.0, spread = 0.0;
  for (const auto& p : pairs) {
    const Eigen::Vector2d a = p.a - ca;
    const Eigen::Vector2d b = p.b - cb;
    dot += a.x() * b.x() + a.y() * b.y();
    cross += b.x() * a.y() - b.y() * a.x();
    spread += b.squaredNorm();
  }
  if (spread <= 1e-24 * std::max(1.0, cb.squaredNorm()) * static_cast<double>(pairs.size()))
    throw AlignmentError("degenerate alignment input: points are coincident");

  RigidTransform2D tf;
  tf.theta = wrap_angle(std::atan2(cross, dot));
  const Eigen::Vector2d t = ca - tf.rotation() * cb;
  tf.tx = t.x();
  tf.ty = t.y();
  return tf;
}

/// Mean squared point-to-point error after mapping b onto a.
inline double alignment_mse(const RigidTransform2D& tf, const std::vector<PointPair>& pairs) {
  if (pairs.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& p : pairs) sum += (apply_transform(tf, p.b) - p.a).squaredNorm();
  return sum / static_cast<double>(pairs.size());
}

}  // namespace ddfusion
