// Partial/complete data-pair tooling and the pluggable point completer.
#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "autolabel/geometry.hpp"
#include "autolabel/rng.hpp"

namespace autolabel {

struct CompletenessParams {
  double resolution = 0.2;
  double ratio_threshold = 0.6;
};

struct CompletenessReport {
  double occupied_ratio = 0.0;
  double resolution = 0.0;
  bool complete = false;
};

struct CompletionPair {
  std::vector<Vec3> partial;
  std::vector<Vec3> complete;
  std::vector<Vec3> structure;
  double rotation_applied = 0.0;
  Mat3 linear_applied = Mat3::Identity();
};

// Occupied fraction of the box's voxel lattice (counts per box-local cell).
// The box is expected to enclose the points; stragglers clamp to the border
// cells.
CompletenessReport completeness(const std::vector<Vec3>& points,
                                const Box3D& box, double resolution,
                                double ratio_threshold = 0.6);

// Convex hull, exact input points as vertices. Degenerate inputs (fewer than
// 4 points, or all coplanar) yield an empty hull.
struct ConvexHull {
  std::vector<int> vertices;                 // ascending indices into input
  std::vector<std::array<int, 3>> faces;     // outward-oriented triangles
};
ConvexHull convex_hull(const std::vector<Vec3>& points);

// Removes round(fraction*n) points, least visible from the viewpoint first:
// points hidden under spherical-inversion hull visibility go before visible
// ones, random order within each class. Coplanar clouds fall back to
// farthest-first removal. Output preserves input order.
std::vector<Vec3> make_partial(const std::vector<Vec3>& complete,
                               const Vec3& viewpoint, double removal_fraction,
                               Rng& rng);

// Greedy farthest-point subsample: indices into points, starting at
// seed_index; each step takes the point with the largest distance to the
// selected set, ties to the smallest index.
std::vector<int> fps(const std::vector<Vec3>& points, int m, int seed_index);

// Rotates the pair about the vertical axis through the complete set's
// centroid (angle uniform in [-pi/2, pi/2]) and applies I + epsilon*G with G
// standard normal. Both transforms are recorded in the result.
CompletionPair augment(const CompletionPair& pair, Rng& rng,
                       double epsilon = 0.05);

// Symmetric mean of squared nearest-neighbor distances.
double chamfer(const std::vector<Vec3>& a, const std::vector<Vec3>& b);

class Completer {
 public:
  virtual ~Completer() = default;
  virtual std::vector<Vec3> complete(const std::vector<Vec3>& partial,
                                     const std::string& category) = 0;
};

// Reflects the points across a vertical plane parallel to the fitted heading
// axis and unions with the input. The plane sits on the centerline when the
// two lateral extremes carry comparable point mass, else on the sparse edge,
// which rebuilds shapes observed from one side only. Ignores the category.
class MirrorCompleter : public Completer {
 public:
  explicit MirrorCompleter(double symmetry_ratio = 0.25)
      : symmetry_ratio_(symmetry_ratio) {}
  std::vector<Vec3> complete(const std::vector<Vec3>& partial,
                             const std::string& category) override;

 private:
  double symmetry_ratio_;
};

// Shells out to `exe <in> <out> <category>` with packed float32 xyz records
// on both sides.
class ExternalCompleter : public Completer {
 public:
  explicit ExternalCompleter(std::filesystem::path executable);
  std::vector<Vec3> complete(const std::vector<Vec3>& partial,
                             const std::string& category) override;

 private:
  std::filesystem::path executable_;
};

// Point records understood by the external completer contract.
void save_xyz_points(const std::filesystem::path& path,
                     const std::vector<Vec3>& points);
std::vector<Vec3> load_xyz_points(const std::filesystem::path& path);

}  // namespace autolabel
