#include "autolabel/completion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "autolabel/box_fitting.hpp"
#include "autolabel/errors.hpp"
#include "autolabel/rng.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace autolabel;

namespace {

std::vector<Vec3> box_shell(const Vec3& center, const Vec3& dims,
                            double heading, double step) {
  std::vector<Vec3> pts;
  const double c = std::cos(heading), s = std::sin(heading);
  auto emit = [&](double lx, double ly, double lz) {
    pts.emplace_back(center.x() + c * lx - s * ly,
                     center.y() + s * lx + c * ly, center.z() + lz);
  };
  const double hx = dims.x() / 2, hy = dims.y() / 2, hz = dims.z() / 2;
  for (double z = -hz; z <= hz + 1e-9; z += step) {
    for (double x = -hx; x <= hx + 1e-9; x += step) {
      emit(x, -hy, z);
      emit(x, hy, z);
    }
    for (double y = -hy + step; y <= hy - step + 1e-9; y += step) {
      emit(-hx, y, z);
      emit(hx, y, z);
    }
  }
  return pts;
}

double support(const std::vector<Vec3>& pts, const Vec3& dir) {
  double best = -1e300;
  for (const Vec3& p : pts) best = std::max(best, dir.dot(p));
  return best;
}

}  // namespace

TEST_CASE("occupied ratio counts box-local cells") {
  Box3D box;
  box.center = Vec3(10, -3, 2);
  box.dims = Vec3(0.4, 0.4, 0.4);
  box.heading = 0.0;

  // 2x2x2 lattice at 0.2 m; a single point lights one cell
  std::vector<Vec3> one = {Vec3(10.1, -2.9, 2.1)};
  const auto rep = completeness(one, box, 0.2);
  CHECK(rep.occupied_ratio == doctest::Approx(0.125).epsilon(1e-12));
  CHECK(!rep.complete);
  CHECK(rep.resolution == 0.2);

  // all eight cell centers
  std::vector<Vec3> full;
  for (int dx = -1; dx <= 1; dx += 2)
    for (int dy = -1; dy <= 1; dy += 2)
      for (int dz = -1; dz <= 1; dz += 2)
        full.emplace_back(10 + 0.1 * dx, -3 + 0.1 * dy, 2 + 0.1 * dz);
  const auto rep_full = completeness(full, box, 0.2);
  CHECK(rep_full.occupied_ratio == doctest::Approx(1.0));
  CHECK(rep_full.complete);

  // one vertical half
  std::vector<Vec3> half(full.begin(), full.begin() + 4);
  CHECK(completeness(half, box, 0.2).occupied_ratio ==
        doctest::Approx(0.5).epsilon(1e-12));
  CHECK(completeness(half, box, 0.2, 0.5).complete);
  CHECK(!completeness(half, box, 0.2, 0.6).complete);

  CHECK_THROWS_AS(completeness({}, box, 0.2), DataError);
}

TEST_CASE("occupied ratio respects the box heading and clamps stragglers") {
  Box3D box;
  box.center = Vec3::Zero();
  box.dims = Vec3(4.0, 2.0, 1.0);
  box.heading = 0.7;

  // fill every cell with a rotated lattice sample
  std::vector<Vec3> pts;
  const double c = std::cos(0.7), s = std::sin(0.7);
  for (double lx = -1.9; lx < 2.0; lx += 0.2)
    for (double ly = -0.9; ly < 1.0; ly += 0.2)
      for (double lz = -0.45; lz < 0.5; lz += 0.2)
        pts.emplace_back(c * lx - s * ly, s * lx + c * ly, lz);
  CHECK(completeness(pts, box, 0.2).occupied_ratio == doctest::Approx(1.0));

  // a far outlier clamps into a border cell instead of throwing
  Box3D small = box;
  small.dims = Vec3(0.4, 0.4, 0.4);
  const auto rep = completeness({Vec3(50, 50, 50)}, small, 0.2);
  CHECK(rep.occupied_ratio == doctest::Approx(0.125));
}

TEST_CASE("convex hull of a cube keeps the corners and drops the rest") {
  std::vector<Vec3> pts;
  for (int x = 0; x <= 1; ++x)
    for (int y = 0; y <= 1; ++y)
      for (int z = 0; z <= 1; ++z) pts.emplace_back(x, y, z);
  Rng rng(7);
  for (int i = 0; i < 40; ++i)
    pts.emplace_back(0.1 + 0.8 * rng.uniform(), 0.1 + 0.8 * rng.uniform(),
                     0.1 + 0.8 * rng.uniform());

  const ConvexHull hull = convex_hull(pts);
  CHECK(hull.vertices.size() == 8);
  for (int v : hull.vertices) CHECK(v < 8);
  CHECK(std::is_sorted(hull.vertices.begin(), hull.vertices.end()));
}

TEST_CASE("convex hull matches the support function of the input") {
  Rng rng(11);
  std::vector<Vec3> pts;
  for (int i = 0; i < 120; ++i)
    pts.emplace_back(rng.normal(), rng.normal(), 0.5 * rng.normal());

  const ConvexHull hull = convex_hull(pts);
  REQUIRE(!hull.faces.empty());
  std::vector<Vec3> verts;
  for (int v : hull.vertices) verts.push_back(pts[v]);

  for (int trial = 0; trial < 200; ++trial) {
    Vec3 dir(rng.normal(), rng.normal(), rng.normal());
    if (dir.norm() < 1e-6) continue;
    dir.normalize();
    CHECK(support(verts, dir) == doctest::Approx(support(pts, dir)).epsilon(1e-9));
  }

  // every input point sits behind every outward face plane
  for (const auto& f : hull.faces) {
    const Vec3 n =
        (pts[f[1]] - pts[f[0]]).cross(pts[f[2]] - pts[f[0]]).normalized();
    for (const Vec3& p : pts) CHECK(n.dot(p - pts[f[0]]) < 1e-7);
  }
}

TEST_CASE("convex hull flags degenerate inputs with an empty result") {
  CHECK(convex_hull({}).faces.empty());
  CHECK(convex_hull({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)}).faces.empty());
  std::vector<Vec3> plane;
  for (int i = 0; i < 30; ++i) plane.emplace_back(i * 0.3, (i * 7) % 5, 2.0);
  CHECK(convex_hull(plane).faces.empty());
  CHECK(convex_hull(plane).vertices.empty());
  std::vector<Vec3> line;
  for (int i = 0; i < 10; ++i) line.emplace_back(i, 2 * i, -i);
  CHECK(convex_hull(line).faces.empty());
}

TEST_CASE("partial views remove the occluded side first") {
  // dense unit sphere, viewed from far +x: the -x hemisphere hides
  Rng rng(3);
  std::vector<Vec3> sphere;
  while (sphere.size() < 600) {
    Vec3 p(rng.normal(), rng.normal(), rng.normal());
    if (p.norm() < 1e-3) continue;
    sphere.push_back(p.normalized());
  }
  Rng removal(99);
  const auto kept = make_partial(sphere, Vec3(50, 0, 0), 0.5, removal);
  CHECK(kept.size() == 300);

  std::set<size_t> kept_ids;
  size_t cursor = 0;
  for (const Vec3& k : kept) {
    while (cursor < sphere.size() && sphere[cursor] != k) ++cursor;
    REQUIRE(cursor < sphere.size());  // subset, input order preserved
    kept_ids.insert(cursor);
  }

  int removed_back = 0, removed_total = 0;
  for (size_t i = 0; i < sphere.size(); ++i) {
    if (kept_ids.count(i)) continue;
    ++removed_total;
    if (sphere[i].x() < 0) ++removed_back;
  }
  CHECK(removed_total == 300);
  CHECK(removed_back > 0.8 * removed_total);
}

TEST_CASE("partial views are reproducible and hit the exact count") {
  Rng data(5);
  std::vector<Vec3> cloud;
  for (int i = 0; i < 157; ++i)
    cloud.emplace_back(data.normal(), data.normal(), data.normal());

  Rng a(42), b(42), c(43);
  const auto ka = make_partial(cloud, Vec3(10, 0, 0), 0.37, a);
  const auto kb = make_partial(cloud, Vec3(10, 0, 0), 0.37, b);
  const auto kc = make_partial(cloud, Vec3(10, 0, 0), 0.37, c);
  CHECK(ka.size() == 157 - (size_t)std::llround(0.37 * 157));
  REQUIRE(ka.size() == kb.size());
  for (size_t i = 0; i < ka.size(); ++i) CHECK(ka[i] == kb[i]);
  CHECK(ka != kc);  // different seed, different hidden-order shuffle

  Rng d(1);
  CHECK(make_partial(cloud, Vec3(0, 0, 0), 0.0, d).size() == 157);
  CHECK(make_partial(cloud, Vec3(0, 0, 0), 1.0, d).empty());
  CHECK_THROWS_AS(make_partial({}, Vec3::Zero(), 0.5, d), DataError);
  CHECK_THROWS_AS(make_partial(cloud, Vec3::Zero(), 1.5, d), DataError);
}

TEST_CASE("coplanar clouds fall back to farthest-first removal") {
  std::vector<Vec3> plane;
  for (int i = 0; i < 20; ++i) plane.emplace_back(i * 1.0, 0.0, 0.0);
  Rng rng(8);
  const auto kept = make_partial(plane, Vec3(-5, 0, 0), 0.5, rng);
  REQUIRE(kept.size() == 10);
  // the ten nearest to the viewpoint survive
  for (size_t i = 0; i < kept.size(); ++i) CHECK(kept[i].x() == (double)i);
}

TEST_CASE("farthest-point sampling walks the corners of a square first") {
  std::vector<Vec3> pts = {Vec3(0, 0, 0), Vec3(4, 0, 0), Vec3(4, 4, 0),
                           Vec3(0, 4, 0), Vec3(2, 2, 0), Vec3(1, 1, 0)};
  const auto picked = fps(pts, 4, 0);
  CHECK(picked == std::vector<int>{0, 2, 1, 3});

  CHECK(fps(pts, 1, 3) == std::vector<int>{3});
  CHECK(fps(pts, 6, 0).size() == 6);
  CHECK_THROWS_AS(fps(pts, 7, 0), DataError);
  CHECK_THROWS_AS(fps(pts, 0, 0), DataError);
  CHECK_THROWS_AS(fps(pts, 2, 6), DataError);
}

TEST_CASE("farthest-point sampling matches the greedy step oracle") {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Vec3> pts;
    const int n = 10 + (int)rng.uniform_index(25);
    for (int i = 0; i < n; ++i)
      pts.emplace_back(rng.uniform(-5, 5), rng.uniform(-5, 5),
                       rng.uniform(-1, 1));
    const int m = 1 + (int)rng.uniform_index(n);
    const int seed = (int)rng.uniform_index(n);
    const auto picked = fps(pts, m, seed);
    REQUIRE((int)picked.size() == m);
    CHECK(picked[0] == seed);
    std::vector<int> sel = {seed};
    for (int k = 1; k < m; ++k) {
      const int expect = oracles::fps_step_reference(pts, sel);
      CHECK(picked[k] == expect);
      sel.push_back(expect);
    }
  }
}

TEST_CASE("farthest-point samples spread wider than random ones") {
  Rng rng(77);
  std::vector<Vec3> pts;
  for (int i = 0; i < 400; ++i)
    pts.emplace_back(rng.normal(), rng.normal(), rng.normal());

  auto min_pairwise = [&](const std::vector<int>& ids) {
    double best = 1e300;
    for (size_t i = 0; i < ids.size(); ++i)
      for (size_t j = i + 1; j < ids.size(); ++j)
        best = std::min(best, (pts[ids[i]] - pts[ids[j]]).norm());
    return best;
  };

  const auto picked = fps(pts, 40, 0);
  std::vector<int> random_ids;
  for (int i = 0; i < 40; ++i) random_ids.push_back((int)rng.uniform_index(400));
  std::sort(random_ids.begin(), random_ids.end());
  random_ids.erase(std::unique(random_ids.begin(), random_ids.end()),
                   random_ids.end());
  CHECK(min_pairwise(picked) > min_pairwise(random_ids));
}

TEST_CASE("augmentation at epsilon zero is a rigid motion about the centroid") {
  CompletionPair pair;
  Rng data(2);
  for (int i = 0; i < 50; ++i)
    pair.complete.emplace_back(data.normal(), data.normal(), data.normal());
  pair.partial.assign(pair.complete.begin(), pair.complete.begin() + 20);
  pair.structure = {Vec3(1, 2, 3)};

  Rng rng(13);
  const CompletionPair out = augment(pair, rng, 0.0);
  REQUIRE(out.complete.size() == pair.complete.size());
  REQUIRE(out.partial.size() == pair.partial.size());
  REQUIRE(out.structure.size() == 1);
  for (size_t i = 0; i < pair.complete.size(); ++i)
    for (size_t j = i + 1; j < pair.complete.size(); ++j) {
      const double before = (pair.complete[i] - pair.complete[j]).norm();
      const double after = (out.complete[i] - out.complete[j]).norm();
      CHECK(after == doctest::Approx(before).epsilon(1e-9));
    }
  // z is untouched by a rotation about the vertical axis
  for (size_t i = 0; i < pair.complete.size(); ++i)
    CHECK(out.complete[i].z() == doctest::Approx(pair.complete[i].z()));
  CHECK(std::abs(out.rotation_applied) <= kPi / 2);
}

TEST_CASE("augmentation records the transform it applied") {
  CompletionPair pair;
  Rng data(4);
  for (int i = 0; i < 30; ++i)
    pair.complete.emplace_back(data.uniform(-2, 2), data.uniform(-2, 2),
                               data.uniform(0, 1));
  pair.partial = pair.complete;

  Vec3 centroid = Vec3::Zero();
  for (const Vec3& p : pair.complete) centroid += p;
  centroid /= (double)pair.complete.size();

  Rng rng(31);
  const CompletionPair out = augment(pair, rng, 0.05);
  for (size_t i = 0; i < pair.complete.size(); ++i) {
    const Vec3 expect = centroid + out.linear_applied * (pair.complete[i] - centroid);
    CHECK((out.complete[i] - expect).norm() < 1e-12);
  }

  // angles cover the allowed range and stay inside it
  double lo = 1e300, hi = -1e300;
  Rng sweep(1);
  for (int i = 0; i < 2000; ++i) {
    const CompletionPair o = augment(pair, sweep, 0.05);
    lo = std::min(lo, o.rotation_applied);
    hi = std::max(hi, o.rotation_applied);
  }
  CHECK(lo >= -kPi / 2);
  CHECK(hi <= kPi / 2);
  CHECK(lo < -kPi / 4);
  CHECK(hi > kPi / 4);

  Rng r1(9), r2(9);
  const CompletionPair a = augment(pair, r1, 0.05);
  const CompletionPair b = augment(pair, r2, 0.05);
  CHECK(a.rotation_applied == b.rotation_applied);
  for (size_t i = 0; i < a.complete.size(); ++i)
    CHECK(a.complete[i] == b.complete[i]);

  CHECK_THROWS_AS(augment(CompletionPair{}, r1, 0.05), DataError);
}

TEST_CASE("chamfer distance closed forms") {
  const std::vector<Vec3> a = {Vec3(0, 0, 0)};
  const std::vector<Vec3> b = {Vec3(3, 4, 0)};
  CHECK(chamfer(a, a) == 0.0);
  CHECK(chamfer(a, b) == doctest::Approx(50.0));  // 2 * 5^2
  CHECK(chamfer(b, a) == doctest::Approx(chamfer(a, b)));

  Rng rng(6);
  std::vector<Vec3> big, small;
  for (int i = 0; i < 40; ++i)
    big.emplace_back(rng.normal(), rng.normal(), rng.normal());
  small.assign(big.begin(), big.begin() + 10);
  CHECK(chamfer(big, big) == 0.0);
  CHECK(chamfer(small, big) > 0.0);
  CHECK(chamfer(small, big) == doctest::Approx(chamfer(big, small)));
  CHECK_THROWS_AS(chamfer({}, b), DataError);
  CHECK_THROWS_AS(chamfer(a, {}), DataError);
}

TEST_CASE("mirroring a half-observed shell restores the full width") {
  // one long side plus both ends of a 4.6 x 1.8 shell, lateral >= 0 only
  const Vec3 dims(4.6, 1.8, 1.5);
  auto full = box_shell(Vec3(2, -1, 0.75), dims, 0.4, 0.1);
  std::vector<Vec3> half;
  const double c = std::cos(0.4), s = std::sin(0.4);
  for (const Vec3& p : full) {
    const double lat = -s * (p.x() - 2) + c * (p.y() + 1);
    if (lat >= -0.02) half.push_back(p);
  }
  REQUIRE(half.size() > 100);
  REQUIRE(half.size() < full.size());

  MirrorCompleter mirror;
  const auto completed = mirror.complete(half, "car");
  CHECK(completed.size() == 2 * half.size());
  for (size_t i = 0; i < half.size(); ++i) CHECK(completed[i] == half[i]);

  const Box3D fit = fit_box_from_points(completed);
  CHECK(fit.width() == doctest::Approx(dims.y()).epsilon(0.05));
  CHECK(fit.length() == doctest::Approx(dims.x()).epsilon(0.05));

  const Box3D half_fit = fit_box_from_points(half);
  CHECK(half_fit.width() < 0.6 * dims.y());  // the gap being closed
}

TEST_CASE("mirroring a symmetric shell reflects across the centerline") {
  const Vec3 dims(4.0, 2.0, 1.4);
  const auto full = box_shell(Vec3(0, 0, 0.7), dims, 0.0, 0.1);
  MirrorCompleter mirror;
  const auto completed = mirror.complete(full, "car");
  CHECK(completed.size() == 2 * full.size());

  const Box3D before = fit_box_from_points(full);
  const Box3D after = fit_box_from_points(completed);
  CHECK(after.length() == doctest::Approx(before.length()).epsilon(0.01));
  CHECK(after.width() == doctest::Approx(before.width()).epsilon(0.01));

  // mirrored copies of a symmetric shell stay inside the original footprint
  for (const Vec3& p : completed) CHECK(before.contains(p, 1.05));
}

TEST_CASE("point files round-trip through the completer exchange format") {
  testutil::TempDir dir("cmpl_io");
  const auto path = dir.path() / "pts.bin";
  std::vector<Vec3> pts = {Vec3(1.5, -2.25, 0.125), Vec3(0, 0, 0),
                           Vec3(-1e6, 1e-3, 42)};
  save_xyz_points(path, pts);
  const auto back = load_xyz_points(path);
  REQUIRE(back.size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(back[i].x() == (float)pts[i].x());
    CHECK(back[i].y() == (float)pts[i].y());
    CHECK(back[i].z() == (float)pts[i].z());
  }

  std::ofstream truncate(path, std::ios::binary);
  truncate.write("1234567", 7);
  truncate.close();
  CHECK_THROWS_AS(load_xyz_points(path), DataError);
  CHECK_THROWS_AS(load_xyz_points(dir.path() / "missing.bin"), DataError);
}

TEST_CASE("external completers run the executable contract") {
  testutil::TempDir dir("cmpl_ext");
  const auto script = dir.path() / "doubler.sh";
  {
    std::ofstream out(script);
    // append a sentinel point: cat input, then 12 bytes of zeros
    out << "#!/bin/sh\ncat \"$1\" > \"$2\"\n"
        << "head -c 12 /dev/zero >> \"$2\"\n"
        << "[ \"$3\" = car ] || exit 7\n";
  }
  std::filesystem::permissions(script,
                               std::filesystem::perms::owner_all |
                                   std::filesystem::perms::group_read |
                                   std::filesystem::perms::others_read);

  ExternalCompleter ext(script);
  const std::vector<Vec3> in = {Vec3(1, 2, 3), Vec3(4, 5, 6)};
  const auto out = ext.complete(in, "car");
  REQUIRE(out.size() == 3);
  CHECK(out[0] == Vec3(1, 2, 3));
  CHECK(out[1] == Vec3(4, 5, 6));
  CHECK(out[2] == Vec3(0, 0, 0));

  CHECK_THROWS_AS(ext.complete(in, "truck"), StageError);
  ExternalCompleter missing(dir.path() / "nope.sh");
  CHECK_THROWS_AS(missing.complete(in, "car"), StageError);
}
