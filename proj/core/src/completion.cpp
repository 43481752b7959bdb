#include "autolabel/completion.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>

#include "autolabel/box_fitting.hpp"
#include "autolabel/detail/binary.hpp"
#include "autolabel/errors.hpp"

namespace autolabel {

CompletenessReport completeness(const std::vector<Vec3>& points,
                                const Box3D& box, double resolution,
                                double ratio_threshold) {
  if (points.empty()) throw DataError("completeness of an empty point set");
  if (resolution <= 0.0) throw DataError("completeness needs resolution > 0");

  const int nx = std::max(1, (int)std::ceil(box.length() / resolution));
  const int ny = std::max(1, (int)std::ceil(box.width() / resolution));
  const int nz = std::max(1, (int)std::ceil(box.height() / resolution));
  const double c = std::cos(box.heading), s = std::sin(box.heading);

  std::vector<char> occupied((size_t)nx * ny * nz, 0);
  for (const Vec3& p : points) {
    const Vec3 d = p - box.center;
    const double lx = c * d.x() + s * d.y() + box.length() / 2;
    const double ly = -s * d.x() + c * d.y() + box.width() / 2;
    const double lz = d.z() + box.height() / 2;
    const int ix = std::clamp((int)std::floor(lx / resolution), 0, nx - 1);
    const int iy = std::clamp((int)std::floor(ly / resolution), 0, ny - 1);
    const int iz = std::clamp((int)std::floor(lz / resolution), 0, nz - 1);
    occupied[((size_t)iz * ny + iy) * nx + ix] = 1;
  }

  size_t filled = 0;
  for (char v : occupied) filled += v;
  CompletenessReport rep;
  rep.occupied_ratio = (double)filled / (double)occupied.size();
  rep.resolution = resolution;
  rep.complete = rep.occupied_ratio >= ratio_threshold;
  return rep;
}

namespace {

struct HullFace {
  int a, b, c;
  Vec3 n;  // outward, unit
  double offset;
  std::vector<int> outside;
  bool alive = true;
};

double face_dist(const HullFace& f, const Vec3& p) {
  return f.n.dot(p) - f.offset;
}

HullFace make_face(int a, int b, int c, const std::vector<Vec3>& pts,
                   const Vec3& interior) {
  HullFace f;
  f.a = a;
  f.b = b;
  f.c = c;
  Vec3 n = (pts[b] - pts[a]).cross(pts[c] - pts[a]);
  if (n.dot(interior - pts[a]) > 0.0) {
    std::swap(f.b, f.c);
    n = -n;
  }
  f.n = n.normalized();
  f.offset = f.n.dot(pts[f.a]);
  return f;
}

}  // namespace

ConvexHull convex_hull(const std::vector<Vec3>& points) {
  ConvexHull hull;
  const size_t n = points.size();
  if (n < 4) return hull;

  double scale = 1e-12;
  for (const Vec3& p : points) scale = std::max(scale, p.cwiseAbs().maxCoeff());
  const double eps = 1e-9 * scale;

  // initial simplex: extreme pair, farthest from their line, farthest from
  // that plane
  int i0 = 0, i1 = 0;
  {
    for (size_t i = 1; i < n; ++i)
      if (points[i].x() < points[i0].x()) i0 = (int)i;
    double best = -1.0;
    for (size_t i = 0; i < n; ++i) {
      const double d = (points[i] - points[i0]).squaredNorm();
      if (d > best) {
        best = d;
        i1 = (int)i;
      }
    }
    if (best <= eps * eps) return hull;  // all points coincide
  }
  int i2 = -1;
  {
    const Vec3 dir = (points[i1] - points[i0]).normalized();
    double best = eps;
    for (size_t i = 0; i < n; ++i) {
      const Vec3 d = points[i] - points[i0];
      const double off = (d - dir * dir.dot(d)).norm();
      if (off > best) {
        best = off;
        i2 = (int)i;
      }
    }
    if (i2 < 0) return hull;  // collinear
  }
  int i3 = -1;
  {
    const Vec3 nrm =
        (points[i1] - points[i0]).cross(points[i2] - points[i0]).normalized();
    double best = eps;
    for (size_t i = 0; i < n; ++i) {
      const double off = std::abs(nrm.dot(points[i] - points[i0]));
      if (off > best) {
        best = off;
        i3 = (int)i;
      }
    }
    if (i3 < 0) return hull;  // coplanar
  }

  const Vec3 interior =
      (points[i0] + points[i1] + points[i2] + points[i3]) / 4.0;
  std::vector<HullFace> faces;
  faces.push_back(make_face(i0, i1, i2, points, interior));
  faces.push_back(make_face(i0, i1, i3, points, interior));
  faces.push_back(make_face(i0, i2, i3, points, interior));
  faces.push_back(make_face(i1, i2, i3, points, interior));

  for (size_t i = 0; i < n; ++i) {
    if ((int)i == i0 || (int)i == i1 || (int)i == i2 || (int)i == i3) continue;
    for (HullFace& f : faces)
      if (face_dist(f, points[i]) > eps) {
        f.outside.push_back((int)i);
        break;
      }
  }

  // expand until no face sees an outside point
  for (;;) {
    int fi = -1;
    for (size_t k = 0; k < faces.size(); ++k)
      if (faces[k].alive && !faces[k].outside.empty()) {
        fi = (int)k;
        break;
      }
    if (fi < 0) break;

    const HullFace& f = faces[fi];
    int apex = f.outside[0];
    double best = face_dist(f, points[apex]);
    for (int idx : f.outside) {
      const double d = face_dist(f, points[idx]);
      if (d > best) {
        best = d;
        apex = idx;
      }
    }

    std::vector<int> visible;
    std::vector<int> orphans;
    for (size_t k = 0; k < faces.size(); ++k) {
      if (!faces[k].alive) continue;
      if (face_dist(faces[k], points[apex]) > eps) {
        visible.push_back((int)k);
        faces[k].alive = false;
        orphans.insert(orphans.end(), faces[k].outside.begin(),
                       faces[k].outside.end());
      }
    }

    // horizon: edges of visible faces bordering a live face
    std::vector<std::pair<int, int>> horizon;
    auto edge_count = [&](int u, int v) {
      int cnt = 0;
      for (int k : visible) {
        const HullFace& g = faces[k];
        const int e[3][2] = {{g.a, g.b}, {g.b, g.c}, {g.c, g.a}};
        for (auto& ed : e)
          if ((ed[0] == u && ed[1] == v) || (ed[0] == v && ed[1] == u)) ++cnt;
      }
      return cnt;
    };
    for (int k : visible) {
      const HullFace& g = faces[k];
      const int e[3][2] = {{g.a, g.b}, {g.b, g.c}, {g.c, g.a}};
      for (auto& ed : e)
        if (edge_count(ed[0], ed[1]) == 1) horizon.push_back({ed[0], ed[1]});
    }

    std::vector<int> fresh;
    for (auto& [u, v] : horizon) {
      faces.push_back(make_face(u, v, apex, points, interior));
      fresh.push_back((int)faces.size() - 1);
    }
    for (int idx : orphans) {
      if (idx == apex) continue;
      for (int k : fresh)
        if (face_dist(faces[k], points[idx]) > eps) {
          faces[k].outside.push_back(idx);
          break;
        }
    }
  }

  std::set<int> verts;
  for (const HullFace& f : faces) {
    if (!f.alive) continue;
    hull.faces.push_back({f.a, f.b, f.c});
    verts.insert(f.a);
    verts.insert(f.b);
    verts.insert(f.c);
  }
  hull.vertices.assign(verts.begin(), verts.end());
  return hull;
}

std::vector<Vec3> make_partial(const std::vector<Vec3>& complete,
                               const Vec3& viewpoint, double removal_fraction,
                               Rng& rng) {
  const size_t n = complete.size();
  if (n == 0) throw DataError("make_partial on an empty point set");
  if (removal_fraction < 0.0 || removal_fraction > 1.0)
    throw DataError("removal fraction outside [0, 1]");
  const size_t target = (size_t)std::llround(removal_fraction * (double)n);

  // spherical inversion about the viewpoint; hull membership marks the
  // visible side
  double radius = 0.0;
  std::vector<Vec3> flipped(n + 1);
  for (size_t i = 0; i < n; ++i)
    radius = std::max(radius, (complete[i] - viewpoint).norm());
  bool any_flipped = false;
  for (size_t i = 0; i < n; ++i) {
    const Vec3 q = complete[i] - viewpoint;
    const double len = q.norm();
    if (len < 1e-12) {
      flipped[i] = Vec3::Zero();
    } else {
      flipped[i] = q * (2.0 * radius / len - 1.0);
      any_flipped = true;
    }
  }
  flipped[n] = Vec3::Zero();  // the viewpoint itself

  std::vector<char> visible(n, 0);
  bool hull_ok = false;
  if (any_flipped) {
    const ConvexHull hull = convex_hull(flipped);
    if (!hull.faces.empty()) {
      hull_ok = true;
      for (int v : hull.vertices)
        if (v < (int)n) visible[v] = 1;
    }
  }

  std::vector<int> hidden_order, visible_order;
  if (hull_ok) {
    for (size_t i = 0; i < n; ++i)
      (visible[i] ? visible_order : hidden_order).push_back((int)i);
    auto shuffle = [&rng](std::vector<int>& v) {
      for (size_t i = v.size(); i > 1; --i)
        std::swap(v[i - 1], v[rng.uniform_index(i)]);
    };
    shuffle(hidden_order);
    shuffle(visible_order);
  } else {
    // degenerate geometry: drop the farthest points first
    std::vector<int> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = (int)i;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return (complete[a] - viewpoint).squaredNorm() >
             (complete[b] - viewpoint).squaredNorm();
    });
    hidden_order = std::move(order);
  }

  std::vector<char> removed(n, 0);
  size_t taken = 0;
  for (int idx : hidden_order) {
    if (taken == target) break;
    removed[idx] = 1;
    ++taken;
  }
  for (int idx : visible_order) {
    if (taken == target) break;
    removed[idx] = 1;
    ++taken;
  }

  std::vector<Vec3> out;
  out.reserve(n - target);
  for (size_t i = 0; i < n; ++i)
    if (!removed[i]) out.push_back(complete[i]);
  return out;
}

std::vector<int> fps(const std::vector<Vec3>& points, int m, int seed_index) {
  const int n = (int)points.size();
  if (m < 1 || m > n)
    throw DataError("farthest-point sample size outside [1, n]");
  if (seed_index < 0 || seed_index >= n)
    throw DataError("farthest-point seed outside the point set");

  std::vector<int> picked;
  picked.reserve(m);
  picked.push_back(seed_index);
  std::vector<double> dist2(n);
  for (int i = 0; i < n; ++i)
    dist2[i] = (points[i] - points[seed_index]).squaredNorm();
  while ((int)picked.size() < m) {
    int next = 0;
    for (int i = 1; i < n; ++i)
      if (dist2[i] > dist2[next]) next = i;
    picked.push_back(next);
    for (int i = 0; i < n; ++i)
      dist2[i] = std::min(dist2[i], (points[i] - points[next]).squaredNorm());
  }
  return picked;
}

CompletionPair augment(const CompletionPair& pair, Rng& rng, double epsilon) {
  if (pair.complete.empty())
    throw DataError("augment needs a nonempty complete set");
  Vec3 centroid = Vec3::Zero();
  for (const Vec3& p : pair.complete) centroid += p;
  centroid /= (double)pair.complete.size();

  const double alpha = rng.uniform(-kPi / 2, kPi / 2);
  Mat3 g;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) g(r, c) = rng.normal();

  Mat3 rot = Mat3::Identity();
  rot(0, 0) = std::cos(alpha);
  rot(0, 1) = -std::sin(alpha);
  rot(1, 0) = std::sin(alpha);
  rot(1, 1) = std::cos(alpha);
  const Mat3 linear = (Mat3::Identity() + epsilon * g) * rot;

  auto apply = [&](const std::vector<Vec3>& pts) {
    std::vector<Vec3> out;
    out.reserve(pts.size());
    for (const Vec3& p : pts) out.push_back(centroid + linear * (p - centroid));
    return out;
  };
  CompletionPair out;
  out.partial = apply(pair.partial);
  out.complete = apply(pair.complete);
  out.structure = apply(pair.structure);
  out.rotation_applied = alpha;
  out.linear_applied = linear;
  return out;
}

double chamfer(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  if (a.empty() || b.empty())
    throw DataError("chamfer distance of an empty point set");
  auto one_way = [](const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
    double total = 0.0;
    for (const Vec3& p : from) {
      double best = 1e300;
      for (const Vec3& q : to) best = std::min(best, (p - q).squaredNorm());
      total += best;
    }
    return total / (double)from.size();
  };
  return one_way(a, b) + one_way(b, a);
}

std::vector<Vec3> MirrorCompleter::complete(const std::vector<Vec3>& partial,
                                            const std::string& category) {
  (void)category;
  if (partial.size() < 3) return partial;

  std::vector<Vec2> bev;
  bev.reserve(partial.size());
  for (const Vec3& p : partial) bev.emplace_back(p.x(), p.y());
  BevRect rect;
  try {
    rect = l_shape_fit(bev);
  } catch (const DataError&) {
    return partial;  // degenerate footprint, nothing to mirror against
  }

  const double c = std::cos(rect.heading), s = std::sin(rect.heading);
  std::vector<double> lateral(partial.size());
  double lo = 1e300, hi = -1e300;
  for (size_t i = 0; i < partial.size(); ++i) {
    const double dx = partial[i].x() - rect.center.x();
    const double dy = partial[i].y() - rect.center.y();
    lateral[i] = -s * dx + c * dy;
    lo = std::min(lo, lateral[i]);
    hi = std::max(hi, lateral[i]);
  }
  const double extent = hi - lo;
  const double band = std::max(0.05 * extent, 0.05);
  size_t n_lo = 0, n_hi = 0;
  for (double y : lateral) {
    if (y <= lo + band) ++n_lo;
    if (y >= hi - band) ++n_hi;
  }
  const double balance =
      (double)std::min(n_lo, n_hi) / (double)std::max<size_t>(std::max(n_lo, n_hi), 1);

  // balanced extremes: reflect across the centerline; one-sided view:
  // reflect across the sparse edge, which restores the unseen half
  double plane;
  if (balance >= symmetry_ratio_)
    plane = 0.5 * (lo + hi);
  else
    plane = n_lo < n_hi ? lo : hi;

  std::vector<Vec3> out = partial;
  out.reserve(2 * partial.size());
  for (size_t i = 0; i < partial.size(); ++i) {
    const double mirrored = 2.0 * plane - lateral[i];
    const double dx = partial[i].x() - rect.center.x();
    const double dy = partial[i].y() - rect.center.y();
    const double along = c * dx + s * dy;
    out.emplace_back(rect.center.x() + c * along - s * mirrored,
                     rect.center.y() + s * along + c * mirrored,
                     partial[i].z());
  }
  return out;
}

ExternalCompleter::ExternalCompleter(std::filesystem::path executable)
    : executable_(std::move(executable)) {}

std::vector<Vec3> ExternalCompleter::complete(const std::vector<Vec3>& partial,
                                              const std::string& category) {
  namespace fs = std::filesystem;
  static std::atomic<int> invocation{0};
  const fs::path dir = fs::temp_directory_path();
  const std::string stem = "completer_" + std::to_string(++invocation) + "_" +
                           std::to_string((unsigned long)::getpid());
  const fs::path in_path = dir / (stem + "_in.bin");
  const fs::path out_path = dir / (stem + "_out.bin");
  save_xyz_points(in_path, partial);

  const std::string cmd = "\"" + executable_.string() + "\" \"" +
                          in_path.string() + "\" \"" + out_path.string() +
                          "\" " + category;
  const int rc = std::system(cmd.c_str());
  std::error_code ec;
  if (rc != 0) {
    fs::remove(in_path, ec);
    fs::remove(out_path, ec);
    throw StageError("external completer exited with status " +
                     std::to_string(rc));
  }
  std::vector<Vec3> out;
  try {
    out = load_xyz_points(out_path);
  } catch (...) {
    fs::remove(in_path, ec);
    fs::remove(out_path, ec);
    throw;
  }
  fs::remove(in_path, ec);
  fs::remove(out_path, ec);
  return out;
}

void save_xyz_points(const std::filesystem::path& path,
                     const std::vector<Vec3>& points) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const Vec3& p : points) {
    detail::write_le(out, (float)p.x());
    detail::write_le(out, (float)p.y());
    detail::write_le(out, (float)p.z());
  }
  if (!out) throw DataError("short write to " + path.string());
}

std::vector<Vec3> load_xyz_points(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw DataError("cannot read " + path.string());
  const auto bytes = (size_t)in.tellg();
  if (bytes % 12 != 0)
    throw DataError("point file size not a multiple of 12: " + path.string());
  in.seekg(0);
  std::vector<Vec3> out;
  out.reserve(bytes / 12);
  for (size_t i = 0; i < bytes / 12; ++i) {
    const float x = detail::read_le<float>(in, "point x");
    const float y = detail::read_le<float>(in, "point y");
    const float z = detail::read_le<float>(in, "point z");
    out.emplace_back(x, y, z);
  }
  return out;
}

}  // namespace autolabel
