#include "autolabel/box_fitting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "autolabel/errors.hpp"

namespace autolabel {

namespace {

const EgoPose& pose_for(const std::vector<EgoPose>& poses, int frame_index) {
  const auto it = std::lower_bound(
      poses.begin(), poses.end(), frame_index,
      [](const EgoPose& p, int f) { return p.frame_index < f; });
  if (it == poses.end() || it->frame_index != frame_index)
    throw DataError("no pose for frame " + std::to_string(frame_index));
  return *it;
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[(v.size() - 1) / 2];
}

// summed inverse distance to the nearest edge of the heading-aligned
// bounding rectangle
double closeness_score(const std::vector<Vec2>& bev, double theta, double d0) {
  const double c = std::cos(theta), s = std::sin(theta);
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const Vec2& p : bev) {
    const double x = c * p.x() + s * p.y();
    const double y = -s * p.x() + c * p.y();
    xmin = std::min(xmin, x);
    xmax = std::max(xmax, x);
    ymin = std::min(ymin, y);
    ymax = std::max(ymax, y);
  }
  double score = 0.0;
  for (const Vec2& p : bev) {
    const double x = c * p.x() + s * p.y();
    const double y = -s * p.x() + c * p.y();
    const double dx = std::min(x - xmin, xmax - x);
    const double dy = std::min(y - ymin, ymax - y);
    score += 1.0 / std::max(std::min(dx, dy), d0);
  }
  return score;
}

}  // namespace

BevRect l_shape_fit(const std::vector<Vec2>& bev, double d0) {
  if (bev.size() < 3) throw DataError("rectangle fit needs 3 or more points");
  {
    // collinearity: largest triangle area against the two farthest points
    const Vec2& a = bev[0];
    double best = 0.0;
    Vec2 b = a;
    for (const Vec2& p : bev)
      if ((p - a).squaredNorm() > best) {
        best = (p - a).squaredNorm();
        b = p;
      }
    const double scale2 = std::max(best, 1e-12);
    double area = 0.0;
    const Vec2 ab = b - a;
    for (const Vec2& p : bev)
      area = std::max(area, std::abs(ab.x() * (p.y() - a.y()) -
                                     ab.y() * (p.x() - a.x())));
    if (area < 1e-9 * scale2)
      throw DataError("rectangle fit on collinear points");
  }

  const double step = kPi / 180.0;
  int best_k = 0;
  double best_score = -1.0;
  for (int k = 0; k < 90; ++k) {
    const double sc = closeness_score(bev, k * step, d0);
    if (sc > best_score) {
      best_score = sc;
      best_k = k;
    }
  }

  // golden-section pass inside the winning cell; anchors the heading to the
  // data instead of the grid phase
  double lo = (best_k - 1) * step;
  double hi = (best_k + 1) * step;
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - gr * (hi - lo);
  double x2 = lo + gr * (hi - lo);
  double f1 = closeness_score(bev, x1, d0);
  double f2 = closeness_score(bev, x2, d0);
  for (int it = 0; it < 60; ++it) {
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + gr * (hi - lo);
      f2 = closeness_score(bev, x2, d0);
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - gr * (hi - lo);
      f1 = closeness_score(bev, x1, d0);
    }
  }
  const double theta = 0.5 * (lo + hi);

  const double c = std::cos(theta), s = std::sin(theta);
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const Vec2& p : bev) {
    const double x = c * p.x() + s * p.y();
    const double y = -s * p.x() + c * p.y();
    xmin = std::min(xmin, x);
    xmax = std::max(xmax, x);
    ymin = std::min(ymin, y);
    ymax = std::max(ymax, y);
  }
  BevRect r;
  const double cx = 0.5 * (xmin + xmax), cy = 0.5 * (ymin + ymax);
  r.center = Vec2(c * cx - s * cy, s * cx + c * cy);
  r.length = xmax - xmin;
  r.width = ymax - ymin;
  r.heading = theta;
  if (r.width > r.length) {
    std::swap(r.width, r.length);
    r.heading = theta + kPi / 2.0;
  }
  r.heading = normalize_angle(r.heading);
  return r;
}

Box3D fit_box_from_points(const std::vector<Vec3>& points, double d0) {
  std::vector<Vec2> bev;
  bev.reserve(points.size());
  double zmin = 1e300, zmax = -1e300;
  for (const Vec3& p : points) {
    bev.emplace_back(p.x(), p.y());
    zmin = std::min(zmin, p.z());
    zmax = std::max(zmax, p.z());
  }
  const BevRect r = l_shape_fit(bev, d0);
  Box3D b;
  b.center = Vec3(r.center.x(), r.center.y(), 0.5 * (zmin + zmax));
  b.dims = Vec3(r.length, r.width, std::max(zmax - zmin, 1e-6));
  b.heading = r.heading;
  return b;
}

MotionState classify_motion(const std::vector<FramePoints>& frames,
                            const std::vector<EgoPose>& poses,
                            const BoxFitConfig& cfg) {
  std::vector<Vec3> centroids;
  double t0 = 0.0, t1 = 0.0;
  for (const FramePoints& f : frames) {
    if (f.points.empty()) continue;
    Vec3 c = Vec3::Zero();
    for (const Vec3& p : f.points) c += p;
    c /= static_cast<double>(f.points.size());
    if (centroids.empty()) t0 = f.timestamp;
    t1 = f.timestamp;
    centroids.push_back(pose_for(poses, f.frame_index).sensor_to_global * c);
  }
  if (centroids.size() < 2) return MotionState::kStatic;

  double spread = 0.0;
  for (size_t i = 0; i < centroids.size(); ++i)
    for (size_t j = i + 1; j < centroids.size(); ++j)
      spread = std::max(spread, (centroids[i] - centroids[j]).norm());
  const double budget =
      std::max(cfg.static_speed_budget_mps * (t1 - t0), cfg.static_drift_m);
  return spread > budget ? MotionState::kDynamic : MotionState::kStatic;
}

std::vector<TimedBox> fit_static(const std::vector<FramePoints>& frames,
                                 const std::vector<EgoPose>& poses,
                                 const std::string& category,
                                 Completer* completer,
                                 const CompletenessParams& gate,
                                 const BoxFitConfig& cfg) {
  std::vector<Vec3> aggregate;
  for (const FramePoints& f : frames) {
    const Eigen::Isometry3d& tf = pose_for(poses, f.frame_index).sensor_to_global;
    for (const Vec3& p : f.points) aggregate.push_back(tf * p);
  }
  if (aggregate.size() < 3)
    throw DataError("static fit with fewer than 3 aggregate points");

  if (completer && cfg.completion_enabled) {
    const Box3D rough = fit_box_from_points(aggregate, cfg.closeness_clamp);
    const CompletenessReport rep =
        completeness(aggregate, rough, gate.resolution, gate.ratio_threshold);
    if (!rep.complete) aggregate = completer->complete(aggregate, category);
  }

  const Box3D initial = fit_box_from_points(aggregate, cfg.closeness_clamp);

  // the cut box takes trimmed-quantile extents along the fitted axes, so a
  // handful of stray returns cannot stretch it around themselves
  Box3D cut = initial;
  {
    const double c = std::cos(initial.heading), s = std::sin(initial.heading);
    std::vector<double> along, lateral, vertical;
    along.reserve(aggregate.size());
    for (const Vec3& p : aggregate) {
      const Vec3 d = p - initial.center;
      along.push_back(c * d.x() + s * d.y());
      lateral.push_back(-s * d.x() + c * d.y());
      vertical.push_back(d.z());
    }
    auto trimmed = [&](std::vector<double>& v) {
      std::sort(v.begin(), v.end());
      const double n1 = static_cast<double>(v.size() - 1);
      const size_t lo = (size_t)std::floor(cfg.outlier_trim * n1);
      const size_t hi = (size_t)std::ceil((1.0 - cfg.outlier_trim) * n1);
      return std::make_pair(v[lo], v[hi]);
    };
    const auto [a0, a1] = trimmed(along);
    const auto [l0, l1] = trimmed(lateral);
    const auto [v0, v1] = trimmed(vertical);
    const double mx = 0.5 * (a0 + a1), my = 0.5 * (l0 + l1);
    cut.center = initial.center +
                 Vec3(c * mx - s * my, s * mx + c * my, 0.5 * (v0 + v1));
    cut.dims = Vec3(std::max(a1 - a0, 1e-6), std::max(l1 - l0, 1e-6),
                    std::max(v1 - v0, 1e-6));
  }

  std::vector<Vec3> kept;
  for (const Vec3& p : aggregate)
    if (cut.contains(p, cfg.box_inflation)) kept.push_back(p);
  if (kept.size() < 3) kept = aggregate;

  std::vector<Vec3> sample = kept;
  if (static_cast<int>(kept.size()) > cfg.fit_points) {
    sample.clear();
    for (int i : fps(kept, cfg.fit_points, 0)) sample.push_back(kept[i]);
  }
  Box3D refined = fit_box_from_points(sample, cfg.closeness_clamp);
  double zmin = 1e300, zmax = -1e300;
  for (const Vec3& p : kept) {
    zmin = std::min(zmin, p.z());
    zmax = std::max(zmax, p.z());
  }
  refined.center.z() = 0.5 * (zmin + zmax);
  refined.dims.z() = std::max(zmax - zmin, 1e-6);

  std::vector<TimedBox> out;
  for (const FramePoints& f : frames)
    out.push_back(TimedBox{f.frame_index, f.timestamp, refined, false});
  return out;
}

std::vector<TimedBox> fit_dynamic(const std::vector<FramePoints>& frames,
                                  const std::vector<EgoPose>& poses,
                                  Completer* completer,
                                  const BoxFitConfig& cfg) {
  (void)completer;  // parity with the static signature; unused per frame
  struct InitialFit {
    const FramePoints* frame;
    std::vector<Vec3> global;
    Box3D box;
  };
  std::vector<InitialFit> fits;
  for (const FramePoints& f : frames) {
    if (static_cast<int>(f.points.size()) < cfg.min_frame_points) continue;
    const Eigen::Isometry3d& tf = pose_for(poses, f.frame_index).sensor_to_global;
    InitialFit fit;
    fit.frame = &f;
    if (static_cast<int>(f.points.size()) > cfg.fit_points) {
      std::vector<Vec3> local;
      local.reserve(f.points.size());
      for (const Vec3& p : f.points) local.push_back(p);
      for (int i : fps(local, cfg.fit_points, 0))
        fit.global.push_back(tf * local[i]);
    } else {
      for (const Vec3& p : f.points) fit.global.push_back(tf * p);
    }
    fit.box = fit_box_from_points(fit.global, cfg.closeness_clamp);
    fits.push_back(std::move(fit));
  }
  if (fits.empty()) return {};

  std::vector<double> ls, ws, hs;
  for (const InitialFit& f : fits) {
    ls.push_back(f.box.length());
    ws.push_back(f.box.width());
    hs.push_back(f.box.height());
  }
  const double al = median_of(ls), aw = median_of(ws), ah = median_of(hs);

  const double d0 = cfg.closeness_clamp;
  std::vector<TimedBox> out;
  for (const InitialFit& f : fits) {
    const double theta0 = f.box.heading;
    const int half = static_cast<int>(std::lround(cfg.heading_search_deg));
    double best_score = -1e300;
    double best_theta = theta0;
    Vec2 best_center = Vec2::Zero();
    for (int k = -half; k <= half; ++k) {
      const double theta = theta0 + k * kPi / 180.0;
      const double c = std::cos(theta), s = std::sin(theta);
      double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
      for (const Vec3& p : f.global) {
        const double x = c * p.x() + s * p.y();
        const double y = -s * p.x() + c * p.y();
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
      }
      const Vec2 candidates[5] = {
          {xmin + al / 2, ymin + aw / 2},
          {xmin + al / 2, ymax - aw / 2},
          {xmax - al / 2, ymin + aw / 2},
          {xmax - al / 2, ymax - aw / 2},
          {0.5 * (xmin + xmax), 0.5 * (ymin + ymax)}};
      for (const Vec2& cand : candidates) {
        double score = 0.0;
        for (const Vec3& p : f.global) {
          const double x = c * p.x() + s * p.y();
          const double y = -s * p.x() + c * p.y();
          const double dx = al / 2 - std::abs(x - cand.x());
          const double dy = aw / 2 - std::abs(y - cand.y());
          if (dx >= 0.0 && dy >= 0.0)
            score += 1.0 / std::max(std::min(dx, dy), d0);
          else
            score -= 1.0 / d0;
        }
        if (score > best_score) {
          best_score = score;
          best_theta = theta;
          best_center = Vec2(c * cand.x() - s * cand.y(),
                             s * cand.x() + c * cand.y());
        }
      }
    }

    double zmin = 1e300;
    for (const Vec3& p : f.global) zmin = std::min(zmin, p.z());
    Box3D box;
    box.center = Vec3(best_center.x(), best_center.y(), zmin + ah / 2);
    box.dims = Vec3(al, aw, ah);
    box.heading = normalize_angle(best_theta);
    out.push_back(
        TimedBox{f.frame->frame_index, f.frame->timestamp, box, false});
  }
  return out;
}

std::vector<Vec3> smooth_positions(const std::vector<double>& times,
                                   const std::vector<Vec3>& measurements,
                                   const std::vector<double>& out_times,
                                   double process_noise,
                                   double measurement_noise) {
  if (times.size() != measurements.size() || times.empty())
    throw DataError("smoother needs matching nonempty times and measurements");

  using Vec6 = Eigen::Matrix<double, 6, 1>;
  using Mat6 = Eigen::Matrix<double, 6, 6>;
  const double q = process_noise * process_noise;
  const double r = measurement_noise * measurement_noise;

  // merged ascending timeline; measurements matched to steps by time
  std::vector<double> steps = times;
  for (double t : out_times)
    if (t >= times.front() && t <= times.back()) steps.push_back(t);
  std::sort(steps.begin(), steps.end());
  steps.erase(std::unique(steps.begin(), steps.end(),
                          [](double a, double b) { return std::abs(a - b) < 1e-9; }),
              steps.end());
  std::vector<int> meas_at(steps.size(), -1);
  for (size_t m = 0; m < times.size(); ++m) {
    const auto it = std::lower_bound(steps.begin(), steps.end(),
                                     times[m] - 1e-9);
    meas_at[static_cast<size_t>(it - steps.begin())] = static_cast<int>(m);
  }

  Vec6 x = Vec6::Zero();
  x.head<3>() = measurements[0];
  if (measurements.size() > 1) {
    const double dt = times[1] - times[0];
    x.tail<3>() = (measurements[1] - measurements[0]) / dt;
  }
  Mat6 p = Mat6::Identity() * r;
  if (times.size() > 1) {
    const double dv = 2.0 * r / ((times[1] - times[0]) * (times[1] - times[0]));
    p.bottomRightCorner<3, 3>() = Mat3::Identity() * dv;
  } else {
    p.bottomRightCorner<3, 3>() = Mat3::Identity() * 100.0;
  }

  const size_t n = steps.size();
  std::vector<Vec6> x_pred(n), x_filt(n);
  std::vector<Mat6> p_pred(n), p_filt(n), f_step(n);

  for (size_t k = 0; k < n; ++k) {
    Mat6 f = Mat6::Identity();
    if (k > 0) {
      const double dt = steps[k] - steps[k - 1];
      f.topRightCorner<3, 3>() = Mat3::Identity() * dt;
      Mat6 qk = Mat6::Zero();
      qk.topLeftCorner<3, 3>() = Mat3::Identity() * (q * dt * dt * dt * dt / 4);
      qk.topRightCorner<3, 3>() = Mat3::Identity() * (q * dt * dt * dt / 2);
      qk.bottomLeftCorner<3, 3>() = qk.topRightCorner<3, 3>();
      qk.bottomRightCorner<3, 3>() = Mat3::Identity() * (q * dt * dt);
      x = f * x;
      p = f * p * f.transpose() + qk;
    }
    f_step[k] = f;
    x_pred[k] = x;
    p_pred[k] = p;
    if (meas_at[k] >= 0) {
      const Vec3 innov = measurements[meas_at[k]] - x.head<3>();
      const Mat3 s_mat = p.topLeftCorner<3, 3>() + Mat3::Identity() * r;
      const Eigen::Matrix<double, 6, 3> gain =
          p.leftCols<3>() * s_mat.inverse();
      x += gain * innov;
      p -= gain * p.topRows<3>();
    }
    x_filt[k] = x;
    p_filt[k] = p;
  }

  // backward pass
  std::vector<Vec6> x_smooth(n);
  x_smooth[n - 1] = x_filt[n - 1];
  Mat6 p_smooth = p_filt[n - 1];
  for (size_t k = n - 1; k-- > 0;) {
    const Mat6 gain =
        p_filt[k] * f_step[k + 1].transpose() * p_pred[k + 1].inverse();
    x_smooth[k] = x_filt[k] + gain * (x_smooth[k + 1] - x_pred[k + 1]);
    p_smooth = p_filt[k] + gain * (p_smooth - p_pred[k + 1]) * gain.transpose();
  }

  std::vector<Vec3> out;
  out.reserve(out_times.size());
  for (double t : out_times) {
    if (t < steps.front()) {
      out.push_back(x_smooth[0].head<3>() +
                    x_smooth[0].tail<3>() * (t - steps.front()));
    } else if (t > steps.back()) {
      out.push_back(x_smooth[n - 1].head<3>() +
                    x_smooth[n - 1].tail<3>() * (t - steps.back()));
    } else {
      const auto it = std::lower_bound(steps.begin(), steps.end(), t - 1e-9);
      out.push_back(x_smooth[static_cast<size_t>(it - steps.begin())].head<3>());
    }
  }
  return out;
}

std::vector<TimedBox> smooth_trajectory(
    const std::vector<TimedBox>& boxes,
    const std::vector<std::pair<int, double>>& frame_times,
    const BoxFitConfig& cfg) {
  if (boxes.empty()) return {};

  std::vector<TimedBox> sorted = boxes;
  std::sort(sorted.begin(), sorted.end(),
            [](const TimedBox& a, const TimedBox& b) {
              return a.frame_index < b.frame_index;
            });

  if (sorted.size() == 1) {
    std::vector<TimedBox> out;
    for (const auto& [frame, ts] : frame_times)
      out.push_back(TimedBox{frame, ts, sorted[0].box,
                             frame != sorted[0].frame_index});
    return out;
  }

  std::vector<double> times;
  std::vector<Vec3> centers;
  std::vector<double> headings;
  for (const TimedBox& b : sorted) {
    times.push_back(b.timestamp);
    centers.push_back(b.box.center);
    double h = b.box.heading;
    if (!headings.empty()) {
      while (h - headings.back() > kPi / 2) h -= kPi;
      while (h - headings.back() < -kPi / 2) h += kPi;
    }
    headings.push_back(h);
  }

  // linear heading model, adopted only when it explains the sequence
  double hb = 0.0, ha = headings[0];
  {
    double st = 0, sh = 0, stt = 0, sth = 0;
    const double t_ref = times[0];
    for (size_t i = 0; i < times.size(); ++i) {
      const double t = times[i] - t_ref;
      st += t;
      sh += headings[i];
      stt += t * t;
      sth += t * headings[i];
    }
    const double len = static_cast<double>(times.size());
    const double denom = len * stt - st * st;
    hb = denom > 1e-12 ? (len * sth - st * sh) / denom : 0.0;
    ha = (sh - hb * st) / len;
    double rss = 0.0;
    for (size_t i = 0; i < times.size(); ++i) {
      const double res = headings[i] - (ha + hb * (times[i] - t_ref));
      rss += res * res;
    }
    if (std::sqrt(rss / len) > cfg.heading_residual_gate_rad) {
      hb = 0.0;  // fall back to the raw aligned sequence
      ha = std::numeric_limits<double>::quiet_NaN();
    }
  }
  auto heading_at = [&](double t) {
    if (!std::isnan(ha)) return ha + hb * (t - times[0]);
    // piecewise-linear through the aligned raw headings
    if (t <= times.front()) return headings.front();
    if (t >= times.back()) return headings.back();
    const auto it = std::upper_bound(times.begin(), times.end(), t);
    const size_t j = static_cast<size_t>(it - times.begin());
    const double w = (t - times[j - 1]) / (times[j] - times[j - 1]);
    return headings[j - 1] * (1.0 - w) + headings[j] * w;
  };

  std::vector<double> out_times;
  for (const auto& [frame, ts] : frame_times) out_times.push_back(ts);
  const std::vector<Vec3> smoothed =
      smooth_positions(times, centers, out_times, cfg.kalman_process_noise,
                       cfg.kalman_measurement_noise);

  std::vector<TimedBox> out;
  for (size_t i = 0; i < frame_times.size(); ++i) {
    const auto& [frame, ts] = frame_times[i];
    // dims come from the nearest fitted box in time
    size_t nearest = 0;
    double best = 1e300;
    for (size_t j = 0; j < times.size(); ++j)
      if (std::abs(times[j] - ts) < best) {
        best = std::abs(times[j] - ts);
        nearest = j;
      }
    Box3D box = sorted[nearest].box;
    box.center = smoothed[i];

    Vec3 vel = Vec3::Zero();
    if (i + 1 < frame_times.size())
      vel = (smoothed[i + 1] - smoothed[i]) /
            (frame_times[i + 1].second - ts);
    else if (i > 0)
      vel = (smoothed[i] - smoothed[i - 1]) /
            (ts - frame_times[i - 1].second);

    double h = heading_at(ts);
    const double speed = vel.head<2>().norm();
    const double ratio = box.length() / std::max(box.width(), 1e-9);
    if (ratio < cfg.square_ratio) {
      if (speed > 0.1) h = std::atan2(vel.y(), vel.x());
    } else if (speed > 0.1 &&
               std::cos(h - std::atan2(vel.y(), vel.x())) < 0.0) {
      h += kPi;
    }
    box.heading = normalize_angle(h);

    bool fitted = false;
    for (const TimedBox& b : sorted) fitted = fitted || b.frame_index == frame;
    out.push_back(TimedBox{frame, ts, box, !fitted});
  }
  return out;
}

}  // namespace autolabel
