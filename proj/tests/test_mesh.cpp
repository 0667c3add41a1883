#include <gtest/gtest.h>

#include <filesystem>

#include "askin/demo_assets.hpp"

#include "helpers.hpp"
#include "askin/mesh.hpp"
#include "askin/mesh_io.hpp"

using namespace askin;

namespace {

// Small flat grid in the z=0 plane, uv equal to xy. Total chart on [0,1]^2.
Mesh flat_grid(int n) {
  Mesh m;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double x = static_cast<double>(j) / (n - 1);
      const double y = static_cast<double>(i) / (n - 1);
      m.vertices.emplace_back(x, y, 0.0);
      m.uv.emplace_back(x, y);
    }
  auto at = [n](int i, int j) { return i * n + j; };
  for (int i = 0; i + 1 < n; ++i)
    for (int j = 0; j + 1 < n; ++j) {
      m.faces.push_back({at(i, j), at(i, j + 1), at(i + 1, j + 1)});
      m.faces.push_back({at(i, j), at(i + 1, j + 1), at(i + 1, j)});
    }
  m.validate();
  return m;
}

}  // namespace

TEST(LocateUv, VertexRoundTrip) {
  const Mesh& m = askin::testing::demo_head().mesh;
  const UvGrid grid(m);
  for (int v = 0; v < m.vertex_count(); v += 17) {
    const BarycentricHit hit = locate_uv(m, m.uv[v], grid);
    const auto& tri = m.faces[hit.face_index];
    const Vec2 back = hit.alpha * m.uv[tri[0]] + hit.beta * m.uv[tri[1]] + hit.gamma * m.uv[tri[2]];
    EXPECT_EQ((back - m.uv[v]).norm(), 0.0);
  }
}

TEST(LocateUv, FaceCentroid) {
  const Mesh m = flat_grid(5);
  for (int f = 0; f < m.face_count(); f += 7) {
    const auto& tri = m.faces[f];
    const Vec2 centroid = (m.uv[tri[0]] + m.uv[tri[1]] + m.uv[tri[2]]) / 3.0;
    const BarycentricHit hit = locate_uv(m, centroid, UvGrid(m));
    EXPECT_EQ(hit.face_index, f);
    EXPECT_NEAR(hit.alpha, 1.0 / 3.0, 1e-12);
    EXPECT_NEAR(hit.beta, 1.0 / 3.0, 1e-12);
    EXPECT_NEAR(hit.gamma, 1.0 / 3.0, 1e-12);
  }
}

TEST(LocateUv, RandomInteriorPointsMatchBruteForce) {
  const Mesh& m = askin::testing::demo_head().mesh;
  const UvGrid grid(m);
  Rng rng(101);
  int tested = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const Vec2 p(rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0));
    BarycentricHit fast{}, brute{};
    bool fast_ok = true, brute_ok = true;
    try {
      fast = locate_uv(m, p, grid);
    } catch (const Error&) {
      fast_ok = false;
    }
    try {
      brute = locate_uv_brute(m, p);
    } catch (const Error&) {
      brute_ok = false;
    }
    ASSERT_EQ(fast_ok, brute_ok);
    if (!fast_ok) continue;
    ++tested;
    // accelerated result is bit-identical to the brute force scan
    ASSERT_EQ(fast.face_index, brute.face_index);
    ASSERT_EQ(fast.alpha, brute.alpha);
    ASSERT_EQ(fast.beta, brute.beta);
    ASSERT_EQ(fast.gamma, brute.gamma);
    const auto& tri = m.faces[fast.face_index];
    const Vec2 back = fast.alpha * m.uv[tri[0]] + fast.beta * m.uv[tri[1]] + fast.gamma * m.uv[tri[2]];
    ASSERT_NEAR((back - p).norm(), 0.0, 1e-9);
  }
  EXPECT_GT(tested, 5000);
}

TEST(LocateUv, OutOfChartThrows) {
  const Mesh m = flat_grid(4);
  EXPECT_THROW(locate_uv(m, Vec2(2.0, 2.0), UvGrid(m)), Error);
  try {
    locate_uv(m, Vec2(2.0, 2.0), UvGrid(m));
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("uv-out-of-chart"), std::string::npos);
  }
}

TEST(NearestVertexFront, ExactAndTies) {
  Mesh m;
  m.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 5), Vec3(-1, 0, -3), Vec3(1, 0, -9)};
  m.uv.assign(4, Vec2(0, 0));
  // exactly above vertex 1 in xy, z ignored
  EXPECT_EQ(nearest_vertex_front(m, Vec3(1, 0, 100)), 1);
  // vertices 1 and 3 share xy; tie resolved to the lower index
  EXPECT_EQ(nearest_vertex_front(m, Vec3(1, 0.25, 0)), 1);
  // invariance to z translation of the query
  const DemoHead& head = askin::testing::demo_head();
  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    const Vec3 q(rng.uniform(-1, 1), rng.uniform(-1.2, 1.2), rng.uniform(-1, 1));
    const int a = nearest_vertex_front(head.mesh, q);
    const int b = nearest_vertex_front(head.mesh, q + Vec3(0, 0, rng.uniform(-10, 10)));
    EXPECT_EQ(a, b);
  }
}

TEST(NearestVertexFront, MatchesExhaustiveScan) {
  const Mesh& m = askin::testing::demo_head().mesh;
  Rng rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    const Vec3 q(rng.uniform(-1.2, 1.2), rng.uniform(-1.5, 1.5), rng.uniform(-1, 1));
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int v = 0; v < m.vertex_count(); ++v) {
      const double d = (m.vertices[v].head<2>() - q.head<2>()).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = v;
      }
    }
    EXPECT_EQ(nearest_vertex_front(m, q), best);
  }
}

TEST(PointMeshDistance, OnSurfaceIsZero) {
  const Mesh& m = askin::testing::demo_head().mesh;
  Rng rng(31);
  std::vector<Vec3> points;
  for (int i = 0; i < 100; ++i) {
    const auto& tri = m.faces[rng.uniform_int(0, m.face_count() - 1)];
    double a = rng.uniform(), b = rng.uniform();
    if (a + b > 1) {
      a = 1 - a;
      b = 1 - b;
    }
    points.push_back(m.vertices[tri[0]] + a * (m.vertices[tri[1]] - m.vertices[tri[0]]) +
                     b * (m.vertices[tri[2]] - m.vertices[tri[0]]));
  }
  const auto d = point_mesh_distance(points, m);
  EXPECT_NEAR(d.mean, 0.0, 1e-9);
}

TEST(PointMeshDistance, PlaneOffset) {
  const Mesh m = flat_grid(6);
  const std::vector<Vec3> points = {Vec3(0.5, 0.5, 0.25), Vec3(0.3, 0.7, -0.5)};
  const auto d = point_mesh_distance(points, m);
  EXPECT_NEAR(d.per_point[0], 0.25, 1e-12);
  EXPECT_NEAR(d.per_point[1], 0.5, 1e-12);
  EXPECT_NEAR(d.mean, 0.375, 1e-12);
}

TEST(PointMeshDistance, BvhMatchesBruteForceBitwise) {
  const Mesh& m = askin::testing::demo_head().mesh;
  MeshBvh bvh(m);
  Rng rng(47);
  for (int trial = 0; trial < 300; ++trial) {
    const Vec3 q(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
    const SurfaceHit fast = bvh.closest(q);
    const SurfaceHit brute = closest_point_brute(m, q);
    ASSERT_EQ(fast.distance, brute.distance);
  }
}

TEST(PointMeshDistance, ConvexCombinationOfFaceIsOnSurface) {
  const Mesh& m = askin::testing::demo_head().mesh;
  const auto& tri = m.faces[100];
  const Vec3 p = 0.2 * m.vertices[tri[0]] + 0.3 * m.vertices[tri[1]] + 0.5 * m.vertices[tri[2]];
  EXPECT_NEAR(point_mesh_distance({p}, m).mean, 0.0, 1e-9);
}

TEST(PointMeshDistance, EmptyPointSetThrows) {
  EXPECT_THROW(point_mesh_distance({}, askin::testing::demo_head().mesh), Error);
}

TEST(ObjIo, RoundTripAndQuadTriangulation) {
  const std::string path = "/tmp/askin_test_quad.obj";
  atomic_write(path,
               "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\n"
               "vt 0 0\nvt 1 0\nvt 1 1\nvt 0 1\n"
               "f 1/1 2/2 3/3 4/4\n");
  const Mesh m = load_obj_mesh(path);
  EXPECT_EQ(m.vertex_count(), 4);
  EXPECT_EQ(m.face_count(), 2);  // quad fan-triangulated
  EXPECT_EQ(m.faces[0][0], 0);
  EXPECT_EQ(m.faces[1][2], 3);
  EXPECT_EQ(m.uv[2], Vec2(1, 1));
}

TEST(ObjIo, RejectsMissingTextureIndices) {
  const std::string path = "/tmp/askin_test_novt.obj";
  atomic_write(path, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n");
  EXPECT_THROW(load_obj_mesh(path), Error);
  const std::string path2 = "/tmp/askin_test_novt2.obj";
  atomic_write(path2, "v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nf 1//1 2//1 3//1\n");
  EXPECT_THROW(load_obj_mesh(path2), Error);
}

TEST(ObjIo, SeamVertexIsSplit) {
  const std::string path = "/tmp/askin_test_seam.obj";
  // vertex 1 referenced with two different vt records
  atomic_write(path,
               "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\n"
               "vt 0 0\nvt 1 0\nvt 1 1\nvt 0.5 0.5\n"
               "f 1/1 2/2 3/3\nf 1/4 3/3 4/3\n");
  const Mesh m = load_obj_mesh(path);
  EXPECT_EQ(m.vertex_count(), 5);  // one seam split
  EXPECT_EQ(m.uv.size(), m.vertices.size());
}

TEST(ObjIo, ExportCopiesSourceLinesVerbatim) {
  const DemoHead& head = askin::testing::demo_head();
  const std::string path = "/tmp/askin_test_export.obj";
  save_obj(path, head.mesh, head.mesh.vertices);
  const Mesh back = load_obj_mesh(path);
  ASSERT_EQ(back.vertex_count(), head.mesh.vertex_count());
  double max_d = 0.0;
  for (int v = 0; v < back.vertex_count(); ++v)
    max_d = std::max(max_d, (back.vertices[v] - head.mesh.vertices[v]).norm());
  EXPECT_EQ(max_d, 0.0);  // %.17g is lossless for doubles
  for (int v = 0; v < back.vertex_count(); ++v)
    EXPECT_EQ((back.uv[v] - head.mesh.uv[v]).norm(), 0.0);
  // a second export of the loaded mesh reproduces the same vt/f text
  const std::string again = obj_text(back, back.vertices);
  const std::string first = read_file(path);
  EXPECT_EQ(first, again);
}

TEST(PlyIo, ReadsAsciiPoints) {
  const std::string path = "/tmp/askin_test_points.ply";
  atomic_write(path,
               "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\n"
               "property float z\nend_header\n0 0.5 1\n-1 2 3.5\n");
  const auto pts = load_points(path);
  ASSERT_EQ(pts.size(), 2u);
  EXPECT_EQ(pts[1], Vec3(-1, 2, 3.5));
}
