#include "autolabel/projection.hpp"

namespace autolabel {

std::optional<Vec2> to_pixel(const Vec3& p_cam, const CameraCalibration& calib) {
  if (p_cam.z() <= 0.0) return std::nullopt;
  const double u = calib.fx * p_cam.x() / p_cam.z() + calib.cx;
  const double v = calib.fy * p_cam.y() / p_cam.z() + calib.cy;
  if (u < 0.0 || u >= calib.width || v < 0.0 || v >= calib.height)
    return std::nullopt;
  return Vec2(u, v);
}

std::vector<ProjectedPoint> project_frame(const PointCloudFrame& frame,
                                          const CameraCalibration& calib) {
  std::vector<ProjectedPoint> out;
  out.reserve(frame.points.size() / 4);
  for (size_t i = 0; i < frame.points.size(); ++i) {
    const Vec3 p_cam = to_camera(frame.points[i], calib);
    const auto px = to_pixel(p_cam, calib);
    if (!px) continue;
    out.push_back({static_cast<int>(i), px->x(), px->y(), p_cam.z()});
  }
  return out;
}

bool in_any_view(const Vec3& p, const std::vector<CameraCalibration>& views) {
  for (const auto& calib : views)
    if (to_pixel(to_camera(p, calib), calib)) return true;
  return false;
}

}  // namespace autolabel
