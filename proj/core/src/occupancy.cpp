#include "autolabel/occupancy.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <map>
#include <unordered_map>

#include "autolabel/detail/binary.hpp"
#include "autolabel/errors.hpp"
#include "autolabel/projection.hpp"

namespace autolabel {

bool OccupancyGrid::same_spec(const OccupancyGrid& other) const {
  return (origin - other.origin).norm() < 1e-9 &&
         std::abs(voxel_size - other.voxel_size) < 1e-12 && dims == other.dims;
}

Vec3 OccupancyGrid::voxel_center(uint32_t linear_index) const {
  const uint32_t nx = dims[0], ny = dims[1];
  const uint32_t x = linear_index % nx;
  const uint32_t y = (linear_index / nx) % ny;
  const uint32_t z = linear_index / (nx * ny);
  return origin + voxel_size * Vec3(x + 0.5, y + 0.5, z + 0.5);
}

OccupancyGrid voxelize(const std::vector<Vec3>& points,
                       const std::vector<PointLabel>& labels,
                       const GridSpec& spec, int frame_index) {
  if (points.size() != labels.size())
    throw DataError("voxelize: points and labels disagree in size");
  if (spec.voxel_size <= 0.0 || spec.dims[0] <= 0 || spec.dims[1] <= 0 ||
      spec.dims[2] <= 0)
    throw DataError("voxelize: degenerate grid spec");

  OccupancyGrid grid;
  grid.origin = spec.origin;
  grid.voxel_size = spec.voxel_size;
  grid.dims = spec.dims;
  grid.frame_index = frame_index;

  struct Tally {
    int total = 0;
    std::map<uint16_t, int> semantic;
    std::map<uint32_t, int> instance;
  };
  std::unordered_map<uint32_t, Tally> cells;
  for (size_t i = 0; i < points.size(); ++i) {
    if (!labels[i].labeled()) continue;
    const Vec3 rel = (points[i] - spec.origin) / spec.voxel_size;
    const int ix = (int)std::floor(rel.x());
    const int iy = (int)std::floor(rel.y());
    const int iz = (int)std::floor(rel.z());
    if (ix < 0 || iy < 0 || iz < 0 || ix >= spec.dims[0] ||
        iy >= spec.dims[1] || iz >= spec.dims[2])
      continue;
    const uint32_t idx =
        ((uint32_t)iz * spec.dims[1] + iy) * spec.dims[0] + ix;
    Tally& t = cells[idx];
    ++t.total;
    ++t.semantic[labels[i].semantic_id];
    if (labels[i].instance_id != 0) ++t.instance[labels[i].instance_id];
  }

  for (const auto& [idx, tally] : cells) {
    if (tally.total < spec.min_points) continue;
    VoxelRecord rec;
    rec.linear_index = idx;
    int best = 0;
    for (const auto& [sem, count] : tally.semantic)
      if (count > best) {  // map order makes ties fall to the smallest id
        best = count;
        rec.semantic_id = sem;
      }
    best = 0;
    for (const auto& [inst, count] : tally.instance)
      if (count > best) {
        best = count;
        rec.instance_id = inst;
      }
    grid.voxels.push_back(rec);
  }
  std::sort(grid.voxels.begin(), grid.voxels.end(),
            [](const VoxelRecord& a, const VoxelRecord& b) {
              return a.linear_index < b.linear_index;
            });
  return grid;
}

void attach_flow(OccupancyGrid& grid, const std::vector<InstanceTrack>& tracks,
                 const EgoPose& pose) {
  const Mat3 to_sensor = pose.sensor_to_global.linear().transpose();

  std::vector<char> claimed(grid.voxels.size(), 0);
  std::vector<const InstanceTrack*> order;
  for (const InstanceTrack& t : tracks) order.push_back(&t);
  std::sort(order.begin(), order.end(),
            [](const InstanceTrack* a, const InstanceTrack* b) {
              return a->instance_id < b->instance_id;
            });

  for (const InstanceTrack* track : order) {
    if (track->motion != MotionState::kDynamic) continue;
    const auto& boxes = track->boxes;
    int at = -1;
    for (size_t i = 0; i < boxes.size(); ++i)
      if (boxes[i].frame_index == grid.frame_index) at = (int)i;
    if (at < 0) continue;

    // forward difference, backward at the track end, zero for lone boxes
    const TimedBox* a = nullptr;
    const TimedBox* b = nullptr;
    if (at + 1 < (int)boxes.size()) {
      a = &boxes[at];
      b = &boxes[at + 1];
    } else if (at > 0) {
      a = &boxes[at - 1];
      b = &boxes[at];
    }
    Vec3 v = Vec3::Zero();
    double omega = 0.0;
    if (a && b) {
      const double dt = b->timestamp - a->timestamp;
      if (dt > 0.0) {
        v = (b->box.center - a->box.center) / dt;
        omega = angle_diff(b->box.heading, a->box.heading) / dt;
      }
    }

    const Box3D& box = boxes[at].box;
    for (size_t k = 0; k < grid.voxels.size(); ++k) {
      if (claimed[k]) continue;
      const Vec3 center_global =
          pose.sensor_to_global * grid.voxel_center(grid.voxels[k].linear_index);
      if (!box.contains(center_global)) continue;
      const Vec3 arm = center_global - box.center;
      const Vec3 flow_global =
          v + Vec3(-omega * arm.y(), omega * arm.x(), 0.0);
      grid.voxels[k].flow = to_sensor * flow_global;
      claimed[k] = 1;
    }
  }
}

void mask_to_fov(OccupancyGrid& grid,
                 const std::vector<CameraCalibration>& views) {
  std::vector<VoxelRecord> kept;
  kept.reserve(grid.voxels.size());
  for (const VoxelRecord& rec : grid.voxels)
    if (in_any_view(grid.voxel_center(rec.linear_index), views))
      kept.push_back(rec);
  grid.voxels = std::move(kept);
}

OccupancyIou occupancy_miou(const OccupancyGrid& pred,
                            const OccupancyGrid& truth,
                            const std::vector<uint16_t>& classes) {
  if (!pred.same_spec(truth))
    throw DataError("occupancy grids disagree on spec");

  std::unordered_map<uint32_t, uint16_t> p, t;
  for (const VoxelRecord& r : pred.voxels) p[r.linear_index] = r.semantic_id;
  for (const VoxelRecord& r : truth.voxels) t[r.linear_index] = r.semantic_id;

  OccupancyIou out;
  double sum = 0.0;
  for (uint16_t cls : classes) {
    size_t inter = 0, uni = 0;
    for (const auto& [idx, sem] : p) {
      if (sem != cls) continue;
      ++uni;
      const auto it = t.find(idx);
      if (it != t.end() && it->second == cls) ++inter;
    }
    for (const auto& [idx, sem] : t) {
      if (sem != cls) continue;
      const auto it = p.find(idx);
      if (it == p.end() || it->second != cls) ++uni;
    }
    if (uni == 0) continue;  // class absent on both sides
    const double iou = (double)inter / (double)uni;
    out.per_class.push_back({cls, iou});
    sum += iou;
  }
  out.miou = out.per_class.empty() ? 0.0 : sum / (double)out.per_class.size();
  return out;
}

namespace {
constexpr char kMagic[4] = {'O', 'G', 'R', 'D'};
constexpr uint32_t kVersion = 1;
}  // namespace

void save_grid(const std::filesystem::path& path, const OccupancyGrid& grid) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(kMagic, 4);
  detail::write_le(out, kVersion);
  for (int i = 0; i < 3; ++i) detail::write_le(out, grid.origin[i]);
  detail::write_le(out, grid.voxel_size);
  for (int i = 0; i < 3; ++i) detail::write_le(out, (uint32_t)grid.dims[i]);
  detail::write_le(out, (uint32_t)grid.frame_index);
  detail::write_le(out, (uint32_t)grid.voxels.size());
  for (const VoxelRecord& rec : grid.voxels) {
    detail::write_le(out, rec.linear_index);
    detail::write_le(out, rec.semantic_id);
    detail::write_le(out, rec.instance_id);
    for (int i = 0; i < 3; ++i) detail::write_le(out, (float)rec.flow[i]);
  }
  if (!out) throw DataError("short write to " + path.string());
}

OccupancyGrid load_grid(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError("not a grid file: " + path.string());
  if (detail::read_le<uint32_t>(in, "grid version") != kVersion)
    throw DataError("unsupported grid version in " + path.string());

  OccupancyGrid grid;
  for (int i = 0; i < 3; ++i)
    grid.origin[i] = detail::read_le<double>(in, "grid origin");
  grid.voxel_size = detail::read_le<double>(in, "voxel size");
  for (int i = 0; i < 3; ++i)
    grid.dims[i] = (int)detail::read_le<uint32_t>(in, "grid dims");
  grid.frame_index = (int)detail::read_le<uint32_t>(in, "grid frame");
  const uint32_t count = detail::read_le<uint32_t>(in, "voxel count");
  if (grid.voxel_size <= 0.0 || grid.dims[0] <= 0 || grid.dims[1] <= 0 ||
      grid.dims[2] <= 0)
    throw DataError("degenerate grid header in " + path.string());
  const uint64_t cell_count =
      (uint64_t)grid.dims[0] * grid.dims[1] * grid.dims[2];

  grid.voxels.reserve(count);
  uint32_t prev = 0;
  for (uint32_t i = 0; i < count; ++i) {
    VoxelRecord rec;
    rec.linear_index = detail::read_le<uint32_t>(in, "voxel index");
    rec.semantic_id = detail::read_le<uint16_t>(in, "voxel semantic");
    rec.instance_id = detail::read_le<uint32_t>(in, "voxel instance");
    for (int k = 0; k < 3; ++k)
      rec.flow[k] = detail::read_le<float>(in, "voxel flow");
    if (rec.linear_index >= cell_count)
      throw DataError("voxel index outside the grid in " + path.string());
    if (i > 0 && rec.linear_index <= prev)
      throw DataError("voxel indices not ascending in " + path.string());
    prev = rec.linear_index;
    grid.voxels.push_back(rec);
  }
  return grid;
}

}  // namespace autolabel
