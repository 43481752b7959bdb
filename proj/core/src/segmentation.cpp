#include "autolabel/segmentation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <unordered_map>

#include "autolabel/detail/binary.hpp"
#include "autolabel/errors.hpp"
#include "autolabel/projection.hpp"

namespace autolabel {

std::map<uint32_t, std::vector<int>> LabeledPointSet::points_by_instance()
    const {
  std::map<uint32_t, std::vector<int>> out;
  for (size_t i = 0; i < labels.size(); ++i)
    if (labels[i].instance_id != 0)
      out[labels[i].instance_id].push_back(static_cast<int>(i));
  return out;
}

LabeledPointSet assign_by_projection(const SceneBundle& bundle,
                                     size_t frame_pos,
                                     const GlobalIdMap& id_map) {
  const PointCloudFrame& frame = bundle.frames.at(frame_pos);
  LabeledPointSet out;
  out.labels.resize(frame.points.size());
  out.candidates.resize(frame.points.size());

  for (size_t v = 0; v < bundle.views.size(); ++v) {
    const CameraCalibration& calib = bundle.views[v];
    const MaskImage& mask = bundle.masks[v][frame_pos];
    for (const ProjectedPoint& pp : project_frame(frame, calib)) {
      const int pu = static_cast<int>(std::floor(pp.u));
      const int pv = static_cast<int>(std::floor(pp.v));
      const uint16_t k = mask.value_at(pu, pv);
      if (k == 0) continue;
      const MaskRecord* rec = mask.record_for(k);
      if (!rec) continue;
      LabelCandidate c;
      c.view_index = static_cast<int>(v);
      c.mask_k = k;
      const auto sem = bundle.semantic_id(rec->category);
      if (!sem)
        throw DataError("mask category missing from vocabulary: " +
                        rec->category);
      c.semantic_id = *sem;
      if (rec->is_foreground()) {
        const auto gid = id_map.global_id(static_cast<int>(v), rec->local_id);
        if (!gid) throw DataError("mask has no global id: " + rec->category);
        c.instance_id = *gid;
      }
      c.u = pp.u;
      c.v = pp.v;
      c.depth = pp.depth;
      out.candidates[pp.point_index].push_back(c);
    }
  }
  return out;
}

std::pair<std::vector<MaskPixel>, std::vector<MaskPixel>> parallax_filter(
    const std::vector<MaskPixel>& mask_points, const ParallaxConfig& cfg) {
  std::pair<std::vector<MaskPixel>, std::vector<MaskPixel>> result;
  if (mask_points.size() < 2) {
    result.first = mask_points;
    return result;
  }

  double min_u = mask_points[0].u, max_u = mask_points[0].u;
  double min_v = mask_points[0].v, max_v = mask_points[0].v;
  for (const MaskPixel& p : mask_points) {
    min_u = std::min(min_u, p.u);
    max_u = std::max(max_u, p.u);
    min_v = std::min(min_v, p.v);
    max_v = std::max(max_v, p.v);
  }
  const double u0 = std::floor(min_u);
  const double v0 = std::floor(min_v);
  const double k = cfg.kernel_size;

  // points bucketed into step-sized tiles so each window gathers only the
  // tiles it overlaps
  const int tiles_u = static_cast<int>((max_u - u0) / cfg.step_h) + 1;
  std::unordered_map<int64_t, std::vector<int>> tiles;
  auto tile_key = [&](int ta, int tb) {
    return static_cast<int64_t>(tb) * tiles_u + ta;
  };
  for (size_t i = 0; i < mask_points.size(); ++i) {
    const int ta = static_cast<int>((mask_points[i].u - u0) / cfg.step_h);
    const int tb = static_cast<int>((mask_points[i].v - v0) / cfg.step_v);
    tiles[tile_key(ta, tb)].push_back(static_cast<int>(i));
  }
  const int span_u = (cfg.kernel_size + cfg.step_h - 1) / cfg.step_h;
  const int span_v = (cfg.kernel_size + cfg.step_v - 1) / cfg.step_v;

  std::vector<char> rejected(mask_points.size(), 0);
  std::vector<int> window;
  for (double y = v0; y <= max_v; y += cfg.step_v) {
    const int tb0 = static_cast<int>((y - v0) / cfg.step_v);
    for (double x = u0; x <= max_u; x += cfg.step_h) {
      const int ta0 = static_cast<int>((x - u0) / cfg.step_h);
      window.clear();
      for (int tb = tb0; tb <= tb0 + span_v; ++tb)
        for (int ta = ta0; ta <= ta0 + span_u; ++ta) {
          const auto it = tiles.find(tile_key(ta, tb));
          if (it == tiles.end()) continue;
          for (int i : it->second) {
            const MaskPixel& p = mask_points[i];
            if (p.u >= x && p.u < x + k && p.v >= y && p.v < y + k)
              window.push_back(i);
          }
        }
      if (window.size() < 2) continue;

      double dmin = mask_points[window[0]].depth;
      double dmax = dmin;
      for (int i : window) {
        dmin = std::min(dmin, mask_points[i].depth);
        dmax = std::max(dmax, mask_points[i].depth);
      }
      if ((dmax - dmin) / dmin <= cfg.depth_ratio_threshold) continue;

      const double near_limit = dmin * (1.0 + cfg.depth_ratio_threshold);
      double left = 0.0, right = 0.0, top = 0.0;
      int near_count = 0;
      for (int i : window) {
        const MaskPixel& p = mask_points[i];
        if (p.depth > near_limit) continue;
        if (near_count == 0) {
          left = right = p.u;
          top = p.v;
        } else {
          left = std::min(left, p.u);
          right = std::max(right, p.u);
          top = std::min(top, p.v);
        }
        ++near_count;
      }
      if (near_count == 1) right = left + cfg.pseudo_width;
      const double bottom = y + k;

      for (int i : window) {
        const MaskPixel& p = mask_points[i];
        if (p.depth <= near_limit) continue;
        if (p.u >= left && p.u <= right && p.v >= top && p.v <= bottom)
          rejected[i] = 1;
      }
    }
  }

  for (size_t i = 0; i < mask_points.size(); ++i)
    (rejected[i] ? result.second : result.first).push_back(mask_points[i]);
  return result;
}

namespace {

struct MaskBucket {
  int view_index = -1;
  uint16_t mask_k = 0;
  bool foreground = false;
  double median_depth = 0.0;
  std::vector<int> point_indices;  // into the frame, ascending
};

}  // namespace

LabeledPointSet filter_scene(const LabeledPointSet& raw,
                             const SceneBundle& bundle, size_t frame_pos,
                             const ParallaxConfig& cfg) {
  if (frame_pos >= bundle.frames.size())
    throw DataError("filter_scene: frame position out of range");
  const size_t n = raw.size();

  std::map<std::pair<int, uint16_t>, MaskBucket> buckets;
  for (size_t i = 0; i < n; ++i)
    for (const LabelCandidate& c : raw.candidates[i]) {
      MaskBucket& b = buckets[{c.view_index, c.mask_k}];
      b.view_index = c.view_index;
      b.mask_k = c.mask_k;
      b.foreground = c.instance_id != 0;
      b.point_indices.push_back(static_cast<int>(i));
    }
  for (auto& [key, b] : buckets) {
    std::vector<double> depths;
    depths.reserve(b.point_indices.size());
    for (int i : b.point_indices)
      for (const LabelCandidate& c : raw.candidates[i])
        if (c.view_index == b.view_index && c.mask_k == b.mask_k)
          depths.push_back(c.depth);
    std::sort(depths.begin(), depths.end());
    b.median_depth = depths[(depths.size() - 1) / 2];
  }

  std::vector<const MaskBucket*> fg;
  for (const auto& [key, b] : buckets)
    if (b.foreground) fg.push_back(&b);
  std::sort(fg.begin(), fg.end(), [](const MaskBucket* a, const MaskBucket* b) {
    if (a->median_depth != b->median_depth)
      return a->median_depth < b->median_depth;
    if (a->view_index != b->view_index) return a->view_index < b->view_index;
    return a->mask_k < b->mask_k;
  });

  LabeledPointSet out;
  out.labels.resize(n);
  out.candidates.resize(n);

  auto candidate_of = [&](int point, int view, uint16_t k) {
    for (const LabelCandidate& c : raw.candidates[point])
      if (c.view_index == view && c.mask_k == k) return c;
    return LabelCandidate{};
  };

  std::vector<char> claimed(n, 0);
  for (const MaskBucket* b : fg) {
    std::vector<MaskPixel> pts;
    pts.reserve(b->point_indices.size());
    for (int i : b->point_indices) {
      if (claimed[i]) continue;
      const LabelCandidate c = candidate_of(i, b->view_index, b->mask_k);
      pts.push_back(MaskPixel{i, c.u, c.v, c.depth});
    }
    const auto [kept, rejected_unused] = parallax_filter(pts, cfg);
    for (const MaskPixel& p : kept) {
      const LabelCandidate c = candidate_of(p.point_index, b->view_index,
                                            b->mask_k);
      claimed[p.point_index] = 1;
      out.labels[p.point_index] =
          PointLabel{c.semantic_id, c.instance_id, c.view_index, c.depth};
      out.candidates[p.point_index] = {c};
    }
  }

  for (size_t i = 0; i < n; ++i) {
    if (claimed[i]) continue;
    const MaskBucket* best = nullptr;
    const LabelCandidate* best_c = nullptr;
    for (const LabelCandidate& c : raw.candidates[i]) {
      if (c.instance_id != 0) continue;
      const MaskBucket& b = buckets.at({c.view_index, c.mask_k});
      if (!best || b.median_depth > best->median_depth ||
          (b.median_depth == best->median_depth &&
           std::pair{b.view_index, b.mask_k} <
               std::pair{best->view_index, best->mask_k})) {
        best = &b;
        best_c = &c;
      }
    }
    if (!best_c) continue;
    out.labels[i] =
        PointLabel{best_c->semantic_id, 0, best_c->view_index, best_c->depth};
    out.candidates[i] = {*best_c};
  }
  return out;
}

std::vector<int> dbscan(const std::vector<Vec3>& points, double eps,
                        int min_pts) {
  const int n = static_cast<int>(points.size());
  std::vector<int> labels(n, -1);
  if (n == 0) return labels;

  std::unordered_map<int64_t, std::vector<int>> cells;
  auto cell_of = [&](const Vec3& p) {
    const int64_t cx = static_cast<int64_t>(std::floor(p.x() / eps));
    const int64_t cy = static_cast<int64_t>(std::floor(p.y() / eps));
    const int64_t cz = static_cast<int64_t>(std::floor(p.z() / eps));
    return std::array<int64_t, 3>{cx, cy, cz};
  };
  auto key_of = [](const std::array<int64_t, 3>& c) {
    int64_t h = 1469598103934665603LL;
    for (int64_t v : c) {
      h ^= v;
      h *= 1099511628211LL;
    }
    return h;
  };
  // key collisions are tolerable: the distance test filters false neighbors
  for (int i = 0; i < n; ++i) cells[key_of(cell_of(points[i]))].push_back(i);

  const double eps2 = eps * eps;
  std::vector<int> nbr;
  auto neighbors = [&](int i, std::vector<int>& out) {
    out.clear();
    const auto c = cell_of(points[i]);
    for (int64_t dz = -1; dz <= 1; ++dz)
      for (int64_t dy = -1; dy <= 1; ++dy)
        for (int64_t dx = -1; dx <= 1; ++dx) {
          const auto it = cells.find(
              key_of({c[0] + dx, c[1] + dy, c[2] + dz}));
          if (it == cells.end()) continue;
          for (int j : it->second)
            if ((points[j] - points[i]).squaredNorm() <= eps2)
              out.push_back(j);
        }
  };

  std::vector<char> visited(n, 0);
  std::vector<int> queue;
  int cluster = 0;
  for (int i = 0; i < n; ++i) {
    if (visited[i]) continue;
    visited[i] = 1;
    neighbors(i, nbr);
    if (static_cast<int>(nbr.size()) < min_pts) continue;
    labels[i] = cluster;
    queue = nbr;
    for (size_t qi = 0; qi < queue.size(); ++qi) {
      const int j = queue[qi];
      if (labels[j] == -1) labels[j] = cluster;
      if (visited[j]) continue;
      visited[j] = 1;
      labels[j] = cluster;
      neighbors(j, nbr);
      if (static_cast<int>(nbr.size()) >= min_pts)
        queue.insert(queue.end(), nbr.begin(), nbr.end());
    }
    ++cluster;
  }
  return labels;
}

LabeledPointSet denoise_instances(const LabeledPointSet& labeled,
                                  const std::vector<Vec3>& coords, double eps,
                                  int min_pts,
                                  std::vector<Diagnostic>* diagnostics) {
  LabeledPointSet out = labeled;
  for (const auto& [instance, indices] : labeled.points_by_instance()) {
    std::vector<Vec3> pts;
    pts.reserve(indices.size());
    for (int i : indices) pts.push_back(coords.at(i));
    const std::vector<int> cl = dbscan(pts, eps, min_pts);

    int best = -1;
    std::map<int, int> sizes;
    for (int c : cl)
      if (c >= 0) ++sizes[c];
    for (const auto& [c, sz] : sizes)
      if (best < 0 || sz > sizes[best]) best = c;

    if (best < 0) {
      if (diagnostics) {
        char buf[96];
        std::snprintf(buf, sizeof buf,
                      "instance %u fully demoted by denoising (%zu points)",
                      instance, indices.size());
        diagnostics->push_back(Diagnostic{"denoise_instances", buf});
      }
    }
    for (size_t j = 0; j < indices.size(); ++j) {
      if (cl[j] == best && best >= 0) continue;
      out.labels[indices[j]] = PointLabel{};
      out.candidates[indices[j]].clear();
    }
  }
  return out;
}

void save_frame_labels(const std::filesystem::path& path,
                       const LabeledPointSet& labeled) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  for (size_t i = 0; i < labeled.size(); ++i) {
    const PointLabel& l = labeled.labels[i];
    if (!l.labeled()) continue;
    detail::write_le<uint32_t>(f, static_cast<uint32_t>(i));
    detail::write_le<uint16_t>(f, l.semantic_id);
    detail::write_le<uint32_t>(f, l.instance_id);
  }
  if (!f) throw DataError("short write: " + path.string());
}

LabeledPointSet load_frame_labels(const std::filesystem::path& path,
                                  size_t point_count) {
  std::error_code ec;
  const auto bytes = std::filesystem::file_size(path, ec);
  if (ec) throw DataError("cannot stat " + path.string());
  constexpr uintmax_t kRecord = 10;
  if (bytes % kRecord != 0)
    throw DataError("label file size not a whole record count: " +
                    path.string());
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read " + path.string());

  LabeledPointSet out;
  out.labels.resize(point_count);
  out.candidates.resize(point_count);
  int64_t prev = -1;
  for (uintmax_t r = 0; r < bytes / kRecord; ++r) {
    const auto idx = detail::read_le<uint32_t>(f, path.string());
    const auto sem = detail::read_le<uint16_t>(f, path.string());
    const auto inst = detail::read_le<uint32_t>(f, path.string());
    if (idx >= point_count || static_cast<int64_t>(idx) <= prev)
      throw DataError("label record out of order or out of range: " +
                      path.string());
    if (sem == kNoSemantic)
      throw DataError("label record with reserved semantic id: " +
                      path.string());
    prev = idx;
    out.labels[idx] = PointLabel{sem, inst, -1, 0.0};
  }
  return out;
}

}  // namespace autolabel
