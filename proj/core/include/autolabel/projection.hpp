#pragma once

#include <optional>
#include <vector>

#include "autolabel/scene.hpp"

namespace autolabel {

// One sensor point that landed inside a camera image.
struct ProjectedPoint {
  int point_index = 0;
  double u = 0.0, v = 0.0;  // continuous pixel coordinates
  double depth = 0.0;       // camera-frame z, > 0
};

// Sensor-frame point into the camera frame.
inline Vec3 to_camera(const Vec3& p, const CameraCalibration& calib) {
  return calib.rotation * p + calib.translation;
}

// Camera-frame point onto the image plane. Points at or behind the camera
// (z <= 0) and pixels outside [0, width) x [0, height) are culled.
std::optional<Vec2> to_pixel(const Vec3& p_cam, const CameraCalibration& calib);

// Projects every point of the frame into the view. Output is ordered by
// point_index and contains only points that survive culling.
std::vector<ProjectedPoint> project_frame(const PointCloudFrame& frame,
                                          const CameraCalibration& calib);

// True when the sensor-frame point projects into at least one of the views.
bool in_any_view(const Vec3& p, const std::vector<CameraCalibration>& views);

}  // namespace autolabel
