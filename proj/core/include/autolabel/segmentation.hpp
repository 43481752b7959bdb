// 2D mask labels onto 3D points: projection lookup, occlusion filtering,
// density-based denoising.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <utility>
#include <vector>

#include "autolabel/association.hpp"
#include "autolabel/scene.hpp"

namespace autolabel {

struct ParallaxConfig {
  int kernel_size = 15;
  int step_h = 10;
  int step_v = 5;
  double depth_ratio_threshold = 0.25;
  // right-boundary extent when a window holds a single near point
  int pseudo_width = 15;
};

// one projected point inside a mask, pixel coords in that mask's view
struct MaskPixel {
  int point_index = -1;
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;
};

struct LabelCandidate {
  int view_index = -1;
  uint16_t mask_k = 0;
  uint16_t semantic_id = kNoSemantic;
  uint32_t instance_id = 0;  // 0 = background mask
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;
};

struct PointLabel {
  uint16_t semantic_id = kNoSemantic;
  uint32_t instance_id = 0;  // 0 = none
  int view_index = -1;
  double depth = 0.0;
  bool labeled() const { return semantic_id != kNoSemantic; }
};

struct LabeledPointSet {
  std::vector<PointLabel> labels;
  // per point, every mask covering its projection; collapsed to the winning
  // label once the scene has been filtered
  std::vector<std::vector<LabelCandidate>> candidates;

  size_t size() const { return labels.size(); }
  std::map<uint32_t, std::vector<int>> points_by_instance() const;
};

// Looks up each projected point's pixel in every view's index map and collects
// all covering masks as candidates. Labels stay unset.
LabeledPointSet assign_by_projection(const SceneBundle& bundle,
                                     size_t frame_pos,
                                     const GlobalIdMap& id_map);

// Slides a kernel_size square window over the points' bounding region with
// steps (step_h, step_v). A window whose depth spread exceeds the ratio
// threshold splits into near (depth <= min*(1+theta)) and far points; far
// points inside the rectangle spanned by the near points (down to the window
// bottom) are rejected. Returns (kept, rejected), each in input order.
std::pair<std::vector<MaskPixel>, std::vector<MaskPixel>> parallax_filter(
    const std::vector<MaskPixel>& mask_points, const ParallaxConfig& cfg);

// Runs the occlusion filter over all foreground masks of one frame, nearest
// mask first (by median candidate depth across views). A point kept by a mask
// is claimed and leaves the candidate pool of farther masks. Unclaimed points
// fall back to the deepest background mask covering their pixel, else stay
// unlabeled. Candidates in the result are collapsed to the winning label,
// which makes the operation idempotent.
LabeledPointSet filter_scene(const LabeledPointSet& raw,
                             const SceneBundle& bundle, size_t frame_pos,
                             const ParallaxConfig& cfg);

// Density clustering, -1 = noise. Neighborhoods are closed balls of radius
// eps; a point counts toward its own neighborhood. Clusters are numbered by
// first discovery in index order, so output is deterministic.
std::vector<int> dbscan(const std::vector<Vec3>& points, double eps,
                        int min_pts);

// Keeps only the largest cluster of each instance (ties favor the earlier
// cluster); demoted points become unlabeled. Instances losing all points are
// reported through diagnostics.
LabeledPointSet denoise_instances(const LabeledPointSet& labeled,
                                  const std::vector<Vec3>& coords, double eps,
                                  int min_pts,
                                  std::vector<Diagnostic>* diagnostics = nullptr);

// Per-frame label file: packed records (point_index u32, semantic u16,
// instance u32), little endian, labeled points only, ascending point index.
void save_frame_labels(const std::filesystem::path& path,
                       const LabeledPointSet& labeled);
LabeledPointSet load_frame_labels(const std::filesystem::path& path,
                                  size_t point_count);

}  // namespace autolabel
