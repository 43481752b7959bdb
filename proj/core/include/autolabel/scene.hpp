#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "autolabel/geometry.hpp"

namespace autolabel {

// Sentinel for "no semantic label" in in-memory label state. Never appears in
// label files; unlabeled points simply have no record there.
inline constexpr uint16_t kNoSemantic = 0xFFFF;

struct PointCloudFrame {
  int frame_index = 0;
  double timestamp = 0.0;
  std::vector<Vec3> points;       // sensor frame
  std::vector<float> intensity;   // empty or one per point
};

// Pinhole camera rigidly mounted on the sensor rig.
// rotation/translation map sensor-frame points into the camera frame
// (x right, y down, z forward).
struct CameraCalibration {
  std::string view_id;
  int panoramic_index = 0;  // position in the left-to-right panoramic order
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  double fx = 0.0, fy = 0.0, cx = 0.0, cy = 0.0;
  int width = 0, height = 0;
};

struct EgoPose {
  int frame_index = 0;
  double timestamp = 0.0;
  Eigen::Isometry3d sensor_to_global = Eigen::Isometry3d::Identity();
};

// One 2D mask inside a view's index map. Foreground (thing) masks carry a
// per-view track id that is stable over time; stuff masks have local_id -1.
struct MaskRecord {
  uint16_t k = 0;  // value in the index map, >= 1
  int64_t local_id = -1;
  std::string category;
  std::array<double, 4> box2d = {0, 0, 0, 0};  // u0, v0, u1, v1 (tight)
  double confidence = 1.0;
  Eigen::VectorXd appearance;  // unit norm; may be empty for stuff masks

  bool is_foreground() const { return local_id >= 0; }
};

// All masks of one (view, frame): a dense per-pixel index map plus one record
// per mask. Pixel value 0 means "no mask"; masks within a view are disjoint
// by construction of the map.
struct MaskImage {
  int view_index = 0;
  int frame_index = 0;
  int width = 0, height = 0;
  std::vector<uint16_t> index_map;  // row-major, width * height
  std::vector<MaskRecord> records;  // sorted by k

  uint16_t value_at(int u, int v) const {
    return index_map[static_cast<size_t>(v) * width + u];
  }
  const MaskRecord* record_for(uint16_t k) const;
};

struct Diagnostic {
  std::string where;
  std::string message;
};

// A full multi-view sequence: point cloud frames with poses, camera
// calibrations, per-view mask tracks and the category vocabulary.
struct SceneBundle {
  std::vector<CameraCalibration> views;  // sorted by panoramic_index
  std::vector<PointCloudFrame> frames;   // sorted by frame_index
  std::vector<EgoPose> poses;            // one per frame, same order
  // masks[view_index][frame position]
  std::vector<std::vector<MaskImage>> masks;
  std::vector<std::string> vocabulary;

  size_t frame_count() const { return frames.size(); }
  size_t view_count() const { return views.size(); }

  // Sum of view widths in panoramic order.
  double panorama_width() const;
  // Sum of widths of views preceding view_index in panoramic order.
  double panorama_offset(int view_index) const;

  std::optional<uint16_t> semantic_id(const std::string& category) const;
  const std::string& category_of(uint16_t semantic) const;
};

// Structural checks on an in-memory bundle. Empty result means valid.
std::vector<Diagnostic> validate_bundle(const SceneBundle& bundle);

// Reads a bundle directory (calib.json, poses.jsonl, frames/, masks/,
// vocab.txt). Throws DataError naming the offending file on any violation;
// a returned bundle always passes validate_bundle.
SceneBundle load_bundle(const std::filesystem::path& dir);

// Writes the standard bundle layout. load_bundle(save_bundle(b)) reproduces
// b up to float32 storage precision.
void save_bundle(const SceneBundle& bundle, const std::filesystem::path& dir);

}  // namespace autolabel
