#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "autolabel/errors.hpp"
#include "autolabel/segmentation.hpp"
#include "autolabel/rng.hpp"
#include "bundle_builder.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace autolabel;
using namespace testutil;

namespace {

MaskPixel mp(int idx, double u, double v, double d) {
  return MaskPixel{idx, u, v, d};
}

std::vector<char> reject_flags(
    const std::pair<std::vector<MaskPixel>, std::vector<MaskPixel>>& fr,
    size_t n) {
  std::vector<char> flags(n, 0);
  for (const MaskPixel& p : fr.second) flags[p.point_index] = 1;
  return flags;
}

}  // namespace

TEST_CASE("uniform-depth windows reject nothing") {
  ParallaxConfig cfg;
  std::vector<MaskPixel> pts;
  for (int i = 0; i < 20; ++i)
    pts.push_back(mp(i, 100.0 + 3 * i, 200.0 + (i % 5), 7.5));
  const auto [kept, rejected] = parallax_filter(pts, cfg);
  CHECK(kept.size() == 20);
  CHECK(rejected.empty());
}

TEST_CASE("a far point below a near one is rejected") {
  ParallaxConfig cfg;
  // depth jump 5 -> 10 exceeds the 0.25 ratio; the single near point spans a
  // pseudo-width rectangle down to the window bottom
  std::vector<MaskPixel> pts = {mp(0, 100.0, 50.0, 5.0),
                                mp(1, 100.0, 55.0, 10.0)};
  const auto [kept, rejected] = parallax_filter(pts, cfg);
  REQUIRE(rejected.size() == 1);
  CHECK(rejected[0].point_index == 1);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].point_index == 0);
}

TEST_CASE("two near points clamp the rectangle to their horizontal span") {
  ParallaxConfig cfg;
  cfg.kernel_size = 15;
  std::vector<MaskPixel> pts = {
      mp(0, 100.0, 50.0, 5.0), mp(1, 110.0, 50.0, 5.2),
      mp(2, 111.0, 50.0, 5.1),
      mp(3, 105.0, 58.0, 12.0),   // between the near points: rejected
      mp(4, 112.5, 58.0, 12.0)};  // right of every near span: kept
  const auto [kept, rejected] = parallax_filter(pts, cfg);
  std::set<int> rej;
  for (const auto& p : rejected) rej.insert(p.point_index);
  CHECK(rej == std::set<int>{3});
  CHECK(kept.size() == 4);
}

TEST_CASE("pseudo width bounds the single-near rectangle") {
  std::vector<MaskPixel> pts = {mp(0, 100.0, 50.0, 5.0),
                                mp(1, 109.0, 55.0, 10.0)};
  ParallaxConfig narrow;
  narrow.pseudo_width = 6;
  CHECK(parallax_filter(pts, narrow).second.empty());
  ParallaxConfig wide;
  wide.pseudo_width = 12;
  CHECK(parallax_filter(pts, wide).second.size() == 1);
}

TEST_CASE("raising the ratio threshold disarms the depth trigger") {
  std::vector<MaskPixel> pts = {mp(0, 100.0, 50.0, 5.0),
                                mp(1, 100.0, 55.0, 10.0)};
  ParallaxConfig cfg;
  cfg.depth_ratio_threshold = 1.5;  // spread ratio is exactly 1.0
  const auto [kept, rejected] = parallax_filter(pts, cfg);
  CHECK(rejected.empty());
  CHECK(kept.size() == 2);
}

TEST_CASE("near points are never rejected") {
  Rng rng(11);
  ParallaxConfig cfg;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<MaskPixel> pts;
    for (int i = 0; i < 40; ++i)
      pts.push_back(mp(i, rng.uniform(100.0, 140.0), rng.uniform(200.0, 235.0),
                       rng.uniform() < 0.5 ? rng.uniform(5.0, 6.2)
                                           : rng.uniform(9.0, 14.0)));
    const auto [kept, rejected] = parallax_filter(pts, cfg);
    CHECK(kept.size() + rejected.size() == pts.size());
    // global near band: within theta of the global minimum depth, which every
    // window minimum is at or above
    double dmin = 1e300;
    for (const auto& p : pts) dmin = std::min(dmin, p.depth);
    for (const auto& p : rejected)
      CHECK(p.depth > dmin * (1.0 + cfg.depth_ratio_threshold));
  }
}

TEST_CASE("filter matches the literal window sweep") {
  Rng rng(23);
  std::vector<ParallaxConfig> configs(3);
  configs[1].kernel_size = 8;
  configs[1].step_h = 3;
  configs[1].step_v = 4;
  configs[1].pseudo_width = 6;
  configs[2].step_h = 16;  // strides wider than the kernel leave gaps
  configs[2].step_v = 20;

  for (int trial = 0; trial < 150; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform_index(80));
    std::vector<MaskPixel> pts;
    std::vector<oracles::WindowPoint> opts;
    for (int i = 0; i < n; ++i) {
      const double u = rng.uniform(100.0, 150.0);
      const double v = rng.uniform(200.0, 240.0);
      const double d = rng.uniform() < 0.6 ? rng.uniform(5.0, 7.0)
                                           : rng.uniform(9.0, 14.0);
      pts.push_back(mp(i, u, v, d));
      opts.push_back(oracles::WindowPoint{u, v, d});
    }
    const ParallaxConfig& cfg = configs[trial % configs.size()];
    const auto fr = parallax_filter(pts, cfg);
    const auto expected = oracles::parallax_reject_reference(
        opts, cfg.kernel_size, cfg.step_h, cfg.step_v,
        cfg.depth_ratio_threshold, cfg.pseudo_width);
    const auto got = reject_flags(fr, pts.size());
    CHECK(got == expected);
    // both halves preserve input order
    for (size_t i = 1; i < fr.first.size(); ++i)
      CHECK(fr.first[i - 1].point_index < fr.first[i].point_index);
    for (size_t i = 1; i < fr.second.size(); ++i)
      CHECK(fr.second[i - 1].point_index < fr.second[i].point_index);
  }
}

namespace {

// A flat car face 8 m ahead and a wall at 13 m. The camera sits 0.8 m below
// the scanner, so a band of wall points lands inside the car's mask. A second
// camera at the scanner origin supplies wall-only masks for fallback labels.
struct WallCarScene {
  SceneBundle bundle;
  int car_count = 0;
  std::vector<int> band;  // wall points whose view-0 pixel is in the car mask
};

WallCarScene wall_car_scene() {
  WallCarScene s;
  SceneBundle& b = s.bundle;
  b.vocabulary = {"car", "wall"};
  b.views.push_back(make_camera("v0", 0, 0.0, Vec3(0, 0, -0.8), 400, 640, 480));
  b.views.push_back(make_camera("v1", 1, 0.0, Vec3(0, 0, 0), 400, 640, 480));

  PointCloudFrame f;
  f.frame_index = 0;
  f.timestamp = 0.0;
  for (int iy = -9; iy <= 9; ++iy)
    for (int iz = 4; iz <= 28; ++iz)
      f.points.push_back(Vec3(8.0, 0.1 * iy, 0.05 * iz));
  s.car_count = static_cast<int>(f.points.size());
  for (int iy = -25; iy <= 25; ++iy)
    for (int iz = 1; iz <= 59; ++iz)
      f.points.push_back(Vec3(13.0, 0.1 * iy, 0.05 * iz));
  b.frames.push_back(f);
  b.poses.push_back(identity_pose(0, 0.0));

  // view 0: car mask over the face's pixel footprint, wall everywhere else
  MaskImage m0 = blank_mask(0, 0, 640, 480);
  paint_rect(m0, 2, 0, 0, 640, 480);
  paint_rect(m0, 1, 275, 130, 366, 191);
  m0.records.push_back(make_record(1, 1, "car", unit_feature(8, 0)));
  m0.records.push_back(make_record(2, -1, "wall", Eigen::VectorXd()));
  finalize_mask(m0);
  b.masks.push_back({m0});

  MaskImage m1 = blank_mask(1, 0, 640, 480);
  paint_rect(m1, 1, 0, 0, 640, 480);
  m1.records.push_back(make_record(1, -1, "wall", Eigen::VectorXd()));
  finalize_mask(m1);
  b.masks.push_back({m1});

  for (int i = s.car_count; i < static_cast<int>(f.points.size()); ++i) {
    const auto px = oracles::project_homogeneous(f.points[i], b.views[0]);
    REQUIRE(px.has_value());
    const int u = static_cast<int>(std::floor(px->u));
    const int v = static_cast<int>(std::floor(px->v));
    if (u >= 275 && u < 366 && v >= 130 && v < 191)
      s.band.push_back(i);
  }
  return s;
}

}  // namespace

TEST_CASE("occluded wall points lose the car label and fall back to wall") {
  WallCarScene s = wall_car_scene();
  const GlobalIdMap ids = unify_sequence(s.bundle, AssociationConfig{});
  REQUIRE(ids.id_count == 1);

  const LabeledPointSet raw = assign_by_projection(s.bundle, 0, ids);
  const size_t n = raw.size();
  REQUIRE(n == s.bundle.frames[0].points.size());
  for (size_t i = 0; i < n; ++i) REQUIRE(raw.candidates[i].size() == 2);
  for (size_t i = 0; i < n; ++i) CHECK(!raw.labels[i].labeled());

  ParallaxConfig cfg;
  const LabeledPointSet out = filter_scene(raw, s.bundle, 0, cfg);
  const uint16_t car_sem = *s.bundle.semantic_id("car");
  const uint16_t wall_sem = *s.bundle.semantic_id("wall");

  REQUIRE(s.band.size() == 1160);
  const std::set<int> band(s.band.begin(), s.band.end());
  for (int i = 0; i < static_cast<int>(n); ++i) {
    const PointLabel& l = out.labels[i];
    if (i < s.car_count) {
      CHECK(l.semantic_id == car_sem);
      CHECK(l.instance_id == 1);
      CHECK(l.view_index == 0);
    } else if (band.count(i)) {
      CHECK(l.semantic_id == wall_sem);
      CHECK(l.instance_id == 0);
      CHECK(l.view_index == 1);  // view 0 has no wall mask at that pixel
    } else {
      CHECK(l.semantic_id == wall_sem);
      CHECK(l.instance_id == 0);
      CHECK(l.view_index == 0);
    }
  }

  // a second pass changes nothing
  const LabeledPointSet again = filter_scene(out, s.bundle, 0, cfg);
  for (size_t i = 0; i < n; ++i) {
    CHECK(again.labels[i].semantic_id == out.labels[i].semantic_id);
    CHECK(again.labels[i].instance_id == out.labels[i].instance_id);
    CHECK(again.labels[i].view_index == out.labels[i].view_index);
  }
}

TEST_CASE("one point seen by two views under one id gets one label") {
  SceneBundle b;
  b.vocabulary = {"car"};
  b.views.push_back(make_camera("v0", 0, 0.0, Vec3(0, 0, -0.5), 400, 640, 480));
  b.views.push_back(make_camera("v1", 1, 0.0, Vec3(0, 0, -0.5), 400, 640, 480));
  PointCloudFrame f;
  f.frame_index = 0;
  f.timestamp = 0.0;
  f.points.push_back(Vec3(10.0, 0.0, 0.5));
  b.frames.push_back(f);
  b.poses.push_back(identity_pose(0, 0.0));
  for (int v = 0; v < 2; ++v) {
    MaskImage m = blank_mask(v, 0, 640, 480);
    paint_rect(m, 1, 310, 190, 331, 211);
    m.records.push_back(make_record(1, v == 0 ? 3 : 8, "car",
                                    unit_feature(8, 0)));
    finalize_mask(m);
    b.masks.push_back({m});
  }

  const GlobalIdMap ids = unify_sequence(b, AssociationConfig{});
  REQUIRE(ids.id_count == 1);  // both views resolve to the same identity
  const LabeledPointSet raw = assign_by_projection(b, 0, ids);
  REQUIRE(raw.candidates[0].size() == 2);
  CHECK(raw.candidates[0][0].instance_id == raw.candidates[0][1].instance_id);

  const LabeledPointSet out = filter_scene(raw, b, 0, ParallaxConfig{});
  CHECK(out.labels[0].instance_id == *ids.global_id(0, 3));
  CHECK(out.candidates[0].size() == 1);
}

TEST_CASE("points outside every mask stay unlabeled") {
  SceneBundle b;
  b.vocabulary = {"car"};
  b.views.push_back(make_camera("v0", 0, 0.0, Vec3(0, 0, -0.5), 400, 640, 480));
  PointCloudFrame f;
  f.frame_index = 0;
  f.timestamp = 0.0;
  f.points.push_back(Vec3(10.0, 0.0, 0.5));    // lands in the mask
  f.points.push_back(Vec3(10.0, 3.0, 0.5));    // lands outside it
  f.points.push_back(Vec3(-10.0, 0.0, 0.5));   // behind the camera
  b.frames.push_back(f);
  b.poses.push_back(identity_pose(0, 0.0));
  MaskImage m = blank_mask(0, 0, 640, 480);
  paint_rect(m, 1, 310, 190, 331, 211);
  m.records.push_back(make_record(1, 1, "car", unit_feature(8, 0)));
  finalize_mask(m);
  b.masks.push_back({m});

  const GlobalIdMap ids = unify_sequence(b, AssociationConfig{});
  const LabeledPointSet raw = assign_by_projection(b, 0, ids);
  CHECK(raw.candidates[0].size() == 1);
  CHECK(raw.candidates[1].empty());
  CHECK(raw.candidates[2].empty());
  const LabeledPointSet out = filter_scene(raw, b, 0, ParallaxConfig{});
  CHECK(out.labels[0].labeled());
  CHECK(!out.labels[1].labeled());
  CHECK(!out.labels[2].labeled());
}

TEST_CASE("clustering basics") {
  std::vector<Vec3> pts;
  for (int i = 0; i < 10; ++i) pts.push_back(Vec3(0.01 * i, 0, 0));
  auto labels = dbscan(pts, 0.5, 4);
  for (int l : labels) CHECK(l == 0);

  pts.push_back(Vec3(50.0, 0, 0));
  labels = dbscan(pts, 0.5, 4);
  CHECK(labels.back() == -1);
  for (size_t i = 0; i + 1 < labels.size(); ++i) CHECK(labels[i] == 0);

  // min_pts 1 makes every point a core point
  labels = dbscan(pts, 0.5, 1);
  CHECK(labels.back() == 1);
}

TEST_CASE("clustering matches the quadratic reference") {
  Rng rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<Vec3> pts;
    const int blobs = 1 + static_cast<int>(rng.uniform_index(4));
    for (int c = 0; c < blobs; ++c) {
      const Vec3 center(rng.uniform(-5.0, 5.0), rng.uniform(-5.0, 5.0),
                        rng.uniform(-1.0, 1.0));
      const int m = 5 + static_cast<int>(rng.uniform_index(60));
      for (int i = 0; i < m; ++i)
        pts.push_back(center + Vec3(rng.normal(0, 0.2), rng.normal(0, 0.2),
                                    rng.normal(0, 0.2)));
    }
    for (int i = 0; i < 10; ++i)
      pts.push_back(Vec3(rng.uniform(-8.0, 8.0), rng.uniform(-8.0, 8.0),
                         rng.uniform(-2.0, 2.0)));
    const double eps = trial % 2 ? 0.3 : 0.7;
    const int min_pts = 1 + static_cast<int>(rng.uniform_index(6));
    CHECK(dbscan(pts, eps, min_pts) ==
          oracles::dbscan_reference(pts, eps, min_pts));
  }
}

TEST_CASE("clustering is unchanged by rigid motion") {
  Rng rng(9);
  std::vector<Vec3> pts;
  for (int c = 0; c < 3; ++c) {
    const Vec3 center(3.0 * c, -c, 0.5 * c);
    for (int i = 0; i < 30; ++i)
      pts.push_back(center + Vec3(rng.normal(0, 0.15), rng.normal(0, 0.15),
                                  rng.normal(0, 0.15)));
  }
  const auto base = dbscan(pts, 0.5, 5);

  const Eigen::AngleAxisd rot(rng.uniform(0.0, 3.0),
                              Vec3(rng.normal(), rng.normal(), rng.normal())
                                  .normalized());
  const Vec3 shift(4.0, -7.0, 2.0);
  std::vector<Vec3> moved;
  for (const auto& p : pts) moved.push_back(rot * p + shift);
  CHECK(dbscan(moved, 0.5, 5) == base);
}

TEST_CASE("denoising keeps only the dominant cluster per instance") {
  Rng rng(31);
  std::vector<Vec3> coords;
  LabeledPointSet set;
  for (int i = 0; i < 95; ++i)
    coords.push_back(Vec3(rng.normal(0, 0.1), rng.normal(0, 0.1),
                          rng.normal(0, 0.1)));
  for (int i = 0; i < 5; ++i)
    coords.push_back(Vec3(20.0 + 3.0 * i, 0, 0));
  set.labels.assign(coords.size(), PointLabel{0, 7, 0, 10.0});
  set.candidates.resize(coords.size());

  std::vector<Diagnostic> diags;
  const LabeledPointSet out =
      denoise_instances(set, coords, 0.5, 5, &diags);
  for (int i = 0; i < 95; ++i) CHECK(out.labels[i].instance_id == 7);
  for (int i = 95; i < 100; ++i) CHECK(!out.labels[i].labeled());
  CHECK(diags.empty());

  // compact instances come through untouched
  LabeledPointSet compact;
  compact.labels.assign(95, PointLabel{0, 3, 0, 10.0});
  compact.candidates.resize(95);
  std::vector<Vec3> cc(coords.begin(), coords.begin() + 95);
  const LabeledPointSet same = denoise_instances(compact, cc, 0.5, 5);
  for (const auto& l : same.labels) CHECK(l.instance_id == 3);
}

TEST_CASE("an instance below the density floor is dropped and reported") {
  std::vector<Vec3> coords = {Vec3(0, 0, 0), Vec3(10, 0, 0), Vec3(20, 0, 0)};
  LabeledPointSet set;
  set.labels.assign(3, PointLabel{0, 12, 0, 5.0});
  set.candidates.resize(3);
  std::vector<Diagnostic> diags;
  const LabeledPointSet out = denoise_instances(set, coords, 0.5, 5, &diags);
  for (const auto& l : out.labels) CHECK(!l.labeled());
  REQUIRE(diags.size() == 1);
  CHECK(diags[0].message.find("12") != std::string::npos);
}

TEST_CASE("label files round-trip and reject corruption") {
  TempDir dir("labels");
  LabeledPointSet set;
  set.labels.resize(6);
  set.candidates.resize(6);
  set.labels[1] = PointLabel{2, 9, 0, 8.0};
  set.labels[4] = PointLabel{0, 0, 1, 13.0};

  const auto path = dir.path() / "000000.labels";
  save_frame_labels(path, set);
  CHECK(std::filesystem::file_size(path) == 20);  // two 10-byte records

  const LabeledPointSet in = load_frame_labels(path, 6);
  CHECK(in.labels[1].semantic_id == 2);
  CHECK(in.labels[1].instance_id == 9);
  CHECK(in.labels[4].semantic_id == 0);
  CHECK(in.labels[4].instance_id == 0);
  CHECK(!in.labels[0].labeled());
  CHECK(!in.labels[5].labeled());

  SUBCASE("truncated file") {
    std::filesystem::resize_file(path, 15);
    CHECK_THROWS_AS(load_frame_labels(path, 6), DataError);
  }
  SUBCASE("index beyond the point count") {
    CHECK_THROWS_AS(load_frame_labels(path, 4), DataError);
  }
}
