// Oriented-box interpretation of instance point tracks: L-shape fitting,
// static/dynamic paths, and trajectory smoothing.
#pragma once

#include <string>
#include <vector>

#include "autolabel/completion.hpp"
#include "autolabel/geometry.hpp"
#include "autolabel/scene.hpp"

namespace autolabel {

struct BoxFitConfig {
  double static_drift_m = 1.0;          // centroid spread before "dynamic"
  double static_speed_budget_mps = 0.02;
  int fit_points = 4096;                // subsample size for refined fits
  double heading_search_deg = 15.0;     // dynamic refit window around initial
  int min_frame_points = 3;
  double kalman_process_noise = 0.5;    // accel noise, m/s^2
  double kalman_measurement_noise = 0.3;  // m
  double heading_residual_gate_rad = 0.05;
  double square_ratio = 1.2;   // below this l/w, heading comes from motion
  double box_inflation = 1.1;  // outlier cut around the initial static fit
  double outlier_trim = 0.05;  // per-side quantile for the cut-box extents
  double closeness_clamp = 0.01;  // edge-distance floor, m
  bool completion_enabled = true;
};

enum class MotionState { kStatic, kDynamic };

struct FramePoints {
  int frame_index = -1;
  double timestamp = 0.0;
  std::vector<Vec3> points;  // sensor frame of that frame
};

struct TimedBox {
  int frame_index = -1;
  double timestamp = 0.0;
  Box3D box;
  bool interpolated = false;
};

struct BevRect {
  Vec2 center = Vec2::Zero();
  double length = 0.0;  // along heading
  double width = 0.0;
  double heading = 0.0;
};

// Rectangle under the closeness criterion: headings on a 1-degree grid over
// [0, pi/2), scored by summed inverse distance to the nearest rectangle edge
// (clamped below by d0), then refined within the winning cell so the result
// tracks the continuous optimum rather than the grid phase.
BevRect l_shape_fit(const std::vector<Vec2>& bev, double d0 = 0.01);

// l_shape_fit over the points' BEV footprint; z extent fills in height.
Box3D fit_box_from_points(const std::vector<Vec3>& points, double d0 = 0.01);

// Spread of per-frame global centroids against the drift budget; single-frame
// tracks count as static.
MotionState classify_motion(const std::vector<FramePoints>& frames,
                            const std::vector<EgoPose>& poses,
                            const BoxFitConfig& cfg);

// Static path: aggregate every frame's points in the global frame, complete
// the aggregate if a completer is supplied and the shape tests partial,
// fit, drop points outside the inflated initial box, subsample, refit. The
// single global box is returned once per input frame.
std::vector<TimedBox> fit_static(const std::vector<FramePoints>& frames,
                                 const std::vector<EgoPose>& poses,
                                 const std::string& category,
                                 Completer* completer,
                                 const CompletenessParams& gate,
                                 const BoxFitConfig& cfg);

// Dynamic path: per-frame initial fits, then per-track median dims as the
// anchor, then a fixed-dims refit per frame (heading within
// heading_search_deg of the initial estimate, five candidate placements).
// Frames with fewer than min_frame_points points yield no box. The completer
// is reserved for parity with the static path and is not applied per frame.
std::vector<TimedBox> fit_dynamic(const std::vector<FramePoints>& frames,
                                  const std::vector<EgoPose>& poses,
                                  Completer* completer,
                                  const BoxFitConfig& cfg);

// Constant-velocity forward filter plus backward smoothing over the
// measurement times, evaluated at out_times (which may add gap times).
std::vector<Vec3> smooth_positions(const std::vector<double>& times,
                                   const std::vector<Vec3>& measurements,
                                   const std::vector<double>& out_times,
                                   double process_noise,
                                   double measurement_noise);

// Smooths a global-frame box sequence: headings are aligned across the pi
// ambiguity and replaced by a linear fit when its residual passes the gate;
// centers run through the constant-velocity smoother; frame_times rows
// without an input box come back flagged interpolated. Near-square boxes
// take their heading from the motion direction where the track is moving.
std::vector<TimedBox> smooth_trajectory(
    const std::vector<TimedBox>& boxes,
    const std::vector<std::pair<int, double>>& frame_times,
    const BoxFitConfig& cfg);

}  // namespace autolabel
