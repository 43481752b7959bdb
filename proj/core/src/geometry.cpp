#include "autolabel/geometry.hpp"

#include <algorithm>

namespace autolabel {

double normalize_angle(double a) {
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a < 0.0) a += 2.0 * kPi;
  return a - kPi;
}

double angle_diff(double a, double b) { return normalize_angle(a - b); }

Box3D Box3D::canonicalized() const {
  Box3D out = *this;
  if (out.dims.y() > out.dims.x()) {
    std::swap(out.dims.x(), out.dims.y());
    out.heading += kPi / 2.0;
  }
  out.heading = normalize_angle(out.heading);
  return out;
}

std::array<Vec2, 4> Box3D::bev_corners() const {
  const double c = std::cos(heading);
  const double s = std::sin(heading);
  const double hl = dims.x() * 0.5;
  const double hw = dims.y() * 0.5;
  const Vec2 ax(c, s);    // length axis
  const Vec2 ay(-s, c);   // width axis
  const Vec2 ctr(center.x(), center.y());
  return {ctr + ax * hl + ay * hw, ctr - ax * hl + ay * hw,
          ctr - ax * hl - ay * hw, ctr + ax * hl - ay * hw};
}

bool Box3D::contains(const Vec3& p, double inflation) const {
  const Vec3 d = p - center;
  const double c = std::cos(heading);
  const double s = std::sin(heading);
  const double lx = c * d.x() + s * d.y();
  const double ly = -s * d.x() + c * d.y();
  return std::abs(lx) <= dims.x() * 0.5 * inflation &&
         std::abs(ly) <= dims.y() * 0.5 * inflation &&
         std::abs(d.z()) <= dims.z() * 0.5 * inflation;
}

Box3D Box3D::transformed(const Eigen::Isometry3d& pose) const {
  Box3D out = *this;
  out.center = pose * center;
  const Vec3 dir(std::cos(heading), std::sin(heading), 0.0);
  const Vec3 rdir = pose.linear() * dir;
  out.heading = normalize_angle(std::atan2(rdir.y(), rdir.x()));
  return out;
}

namespace {

double polygon_area(const std::vector<Vec2>& poly) {
  double a = 0.0;
  const size_t n = poly.size();
  for (size_t i = 0; i < n; ++i) {
    const Vec2& p = poly[i];
    const Vec2& q = poly[(i + 1) % n];
    a += p.x() * q.y() - q.x() * p.y();
  }
  return 0.5 * a;
}

}  // namespace

double convex_intersection_area(const std::vector<Vec2>& a,
                                const std::vector<Vec2>& b) {
  if (a.size() < 3 || b.size() < 3) return 0.0;
  std::vector<Vec2> poly = a;
  const size_t nb = b.size();
  // Clip `poly` against each edge of `b`. b must be counter-clockwise, so the
  // interior lies to the left of every directed edge.
  for (size_t i = 0; i < nb && !poly.empty(); ++i) {
    const Vec2 e0 = b[i];
    const Vec2 e1 = b[(i + 1) % nb];
    const Vec2 dir = e1 - e0;
    std::vector<Vec2> next;
    next.reserve(poly.size() + 2);
    const size_t n = poly.size();
    for (size_t j = 0; j < n; ++j) {
      const Vec2& cur = poly[j];
      const Vec2& nxt = poly[(j + 1) % n];
      const double dc = dir.x() * (cur.y() - e0.y()) - dir.y() * (cur.x() - e0.x());
      const double dn = dir.x() * (nxt.y() - e0.y()) - dir.y() * (nxt.x() - e0.x());
      const bool in_c = dc >= 0.0;
      const bool in_n = dn >= 0.0;
      if (in_c) next.push_back(cur);
      if (in_c != in_n) {
        const double t = dc / (dc - dn);
        next.push_back(cur + (nxt - cur) * t);
      }
    }
    poly.swap(next);
  }
  if (poly.size() < 3) return 0.0;
  return std::abs(polygon_area(poly));
}

double bev_iou(const Box3D& a, const Box3D& b) {
  const auto ca = a.bev_corners();
  const auto cb = b.bev_corners();
  const std::vector<Vec2> pa(ca.begin(), ca.end());
  const std::vector<Vec2> pb(cb.begin(), cb.end());
  const double inter = convex_intersection_area(pa, pb);
  const double area_a = a.dims.x() * a.dims.y();
  const double area_b = b.dims.x() * b.dims.y();
  const double uni = area_a + area_b - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

double box_iou_3d(const Box3D& a, const Box3D& b) {
  const auto ca = a.bev_corners();
  const auto cb = b.bev_corners();
  const std::vector<Vec2> pa(ca.begin(), ca.end());
  const std::vector<Vec2> pb(cb.begin(), cb.end());
  const double inter_area = convex_intersection_area(pa, pb);
  const double zo = std::min(a.z_max(), b.z_max()) - std::max(a.z_min(), b.z_min());
  const double inter = inter_area * std::max(0.0, zo);
  const double uni = a.volume() + b.volume() - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

}  // namespace autolabel
