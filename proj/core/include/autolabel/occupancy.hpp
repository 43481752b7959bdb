// Semantic/instance occupancy grids with per-voxel flow, decoded from
// labeled points and box tracks.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "autolabel/box_fitting.hpp"
#include "autolabel/geometry.hpp"
#include "autolabel/scene.hpp"
#include "autolabel/segmentation.hpp"

namespace autolabel {

struct GridSpec {
  Vec3 origin = Vec3(-40.0, -40.0, -1.0);
  double voxel_size = 0.4;
  std::array<int, 3> dims = {200, 200, 16};
  int min_points = 1;  // occupancy evidence threshold per voxel
};

struct VoxelRecord {
  uint32_t linear_index = 0;  // (z * ny + y) * nx + x
  uint16_t semantic_id = 0;
  uint32_t instance_id = 0;  // 0 = no instance
  Vec3 flow = Vec3::Zero();  // m/s, sensor frame
};

struct OccupancyGrid {
  Vec3 origin = Vec3::Zero();
  double voxel_size = 0.0;
  std::array<int, 3> dims = {0, 0, 0};
  int frame_index = 0;
  std::vector<VoxelRecord> voxels;  // ascending linear_index

  bool same_spec(const OccupancyGrid& other) const;
  Vec3 voxel_center(uint32_t linear_index) const;
};

// One instance's box sequence in the global frame, for flow attachment.
struct InstanceTrack {
  uint32_t instance_id = 0;
  MotionState motion = MotionState::kStatic;
  std::vector<TimedBox> boxes;  // ascending frame_index
};

// Counts labeled points per voxel (unlabeled entries carry no evidence).
// Semantic by majority, ties to the smallest id; instance by majority among
// instance-carrying points. Points outside the grid are ignored.
OccupancyGrid voxelize(const std::vector<Vec3>& points,
                       const std::vector<PointLabel>& labels,
                       const GridSpec& spec, int frame_index);

// Writes rigid-body flow into every occupied voxel whose center falls inside
// a dynamic track's box at the grid's frame: translation from the
// finite-difference of centers (backward at the track end) plus the
// rotational term about the vertical axis, expressed in the sensor frame.
void attach_flow(OccupancyGrid& grid, const std::vector<InstanceTrack>& tracks,
                 const EgoPose& pose);

// Drops voxels whose centers project into none of the cameras.
void mask_to_fov(OccupancyGrid& grid,
                 const std::vector<CameraCalibration>& views);

struct OccupancyIou {
  std::vector<std::pair<uint16_t, double>> per_class;  // evaluated classes
  double miou = 0.0;
};

// Per-class voxel IoU over the occupied sets; classes absent from both grids
// are skipped.
OccupancyIou occupancy_miou(const OccupancyGrid& pred,
                            const OccupancyGrid& truth,
                            const std::vector<uint16_t>& classes);

void save_grid(const std::filesystem::path& path, const OccupancyGrid& grid);
OccupancyGrid load_grid(const std::filesystem::path& path);

}  // namespace autolabel
