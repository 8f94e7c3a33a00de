#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "lofno/io.hpp"

using namespace lofno;

TEST_CASE("voxel grid centers and indexing") {
  VoxelGrid g({4, 4, 4}, {0.25, 0.25, 0.25}, {0, 0, 0});
  Vec3 c = g.center(0, 0, 0);
  CHECK(c[0] == Catch::Approx(0.125));
  c = g.center(3, 0, 0);
  CHECK(c[0] == Catch::Approx(0.875));
  CHECK(g.index(1, 2, 3) == 1 * 16 + 2 * 4 + 3);
  CHECK(g.nvox() == 64);
}

TEST_CASE("straight tube sdf is exact") {
  VesselSpec spec;  // default: straight tube along x, radius 0.12
  VesselGeometry geom(spec);
  // on-axis point: distance to wall = radius
  CHECK(geom.sdf({0.5, 0.5, 0.5}) == Catch::Approx(-0.12).margin(1e-6));
  // radial offset rho: sdf = rho - R
  CHECK(geom.sdf({0.5, 0.5 + 0.06, 0.5}) == Catch::Approx(-0.06).margin(1e-6));
  CHECK(geom.sdf({0.5, 0.5 + 0.2, 0.5}) == Catch::Approx(0.08).margin(1e-6));
  // gradient points radially outward
  Vec3 gr = geom.sdf_gradient({0.5, 0.58, 0.5}, 1e-4);
  gr = normalized(gr);
  CHECK(gr[1] == Catch::Approx(1.0).margin(1e-3));
}

TEST_CASE("sample_chi counts interior voxels and rejects empty domains") {
  VesselSpec spec;
  VesselGeometry geom(spec);
  VoxelGrid g = VoxelGrid::cube(16, 1.0, {0, 0, 0});
  ChiField chi = sample_chi(geom, g);
  // tube volume ~ pi R^2 L with R=.12, L=.7 -> ~0.032 of unit cube
  double frac = double(chi.count()) / double(g.nvox());
  CHECK(frac > 0.01);
  CHECK(frac < 0.08);

  VoxelGrid far = VoxelGrid::cube(4, 0.1, {10, 10, 10});
  CHECK_THROWS_WITH(sample_chi(geom, far), Catch::Matchers::ContainsSubstring("empty domain"));
}

TEST_CASE("generate_vessel is deterministic and seed-sensitive") {
  VesselSpec spec;
  spec.bend_jitter = 0.04;
  spec.radius_jitter = 0.15;
  VesselGeometry a = generate_vessel(spec, 7);
  VesselGeometry b = generate_vessel(spec, 7);
  VesselGeometry c = generate_vessel(spec, 8);
  Vec3 p{0.5, 0.52, 0.48};
  CHECK(a.sdf(p) == b.sdf(p));
  CHECK(a.sdf(p) != c.sdf(p));
}

TEST_CASE("bulge expands the interior") {
  VesselSpec plain;
  VesselSpec bulged = plain;
  bulged.bulge = BulgeSpec{0.5, 0.15, 0.8};
  VesselGeometry g0(plain), g1(bulged);
  VoxelGrid g = VoxelGrid::cube(24, 1.0, {0, 0, 0});
  CHECK(sample_chi(g1, g).count() > sample_chi(g0, g).count());
  // smooth union only shrinks the sdf
  for (double y : {0.5, 0.6, 0.7})
    CHECK(g1.sdf({0.5, y, 0.5}) <= g0.sdf({0.5, y, 0.5}) + 1e-12);
}

TEST_CASE("surface mesh is watertight, single-component, outward-oriented") {
  VesselSpec spec;
  spec.bulge = BulgeSpec{};
  VesselGeometry geom(spec);
  SurfaceMesh mesh = extract_surface_mesh(geom, 32);
  REQUIRE(mesh.faces.size() > 100);
  CHECK(mesh.components() == 1);
  CHECK(mesh.euler_characteristic() == 2);  // topological sphere (capped tube)

  // every edge shared by exactly two faces, with opposite orientation
  std::map<std::pair<int, int>, int> edges;
  for (const auto& f : mesh.faces)
    for (int e = 0; e < 3; ++e) {
      int u = f[size_t(e)], v = f[size_t((e + 1) % 3)];
      edges[{std::min(u, v), std::max(u, v)}] += (u < v) ? 1 : -1;
    }
  for (const auto& [e, bal] : edges) CHECK(bal == 0);

  // divergence theorem: signed volume positive and near the voxel estimate
  double vol6 = 0;
  for (const auto& f : mesh.faces) {
    const Vec3 &a = mesh.vertices[size_t(f[0])], &b = mesh.vertices[size_t(f[1])],
               &c = mesh.vertices[size_t(f[2])];
    vol6 += a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0]) +
            a[2] * (b[0] * c[1] - b[1] * c[0]);
  }
  double vol = vol6 / 6.0;
  CHECK(vol > 0);
  VoxelGrid g = VoxelGrid::cube(64, 1.0, {0, 0, 0});
  double voxvol = double(sample_chi(geom, g).count()) * std::pow(1.0 / 64, 3);
  CHECK(vol == Catch::Approx(voxvol).epsilon(0.15));

  // vertices lie on the zero level set
  double worst = 0;
  for (const auto& v : mesh.vertices) worst = std::max(worst, std::abs(geom.sdf(v)));
  CHECK(worst < 2.0 / 32);  // within one cell of the extraction lattice
}

TEST_CASE("extract_surface_mesh input validation") {
  VesselGeometry geom((VesselSpec()));
  CHECK_THROWS(extract_surface_mesh(geom, 4));
}

TEST_CASE("obj round trip preserves mesh exactly") {
  VesselGeometry geom((VesselSpec()));
  SurfaceMesh mesh = extract_surface_mesh(geom, 16);
  std::ostringstream os;
  write_obj(mesh, os);
  auto tmp = std::filesystem::temp_directory_path() / "lofno_test_mesh.obj";
  io::atomic_write(tmp, os.str());
  SurfaceMesh back = io::read_obj(tmp);
  REQUIRE(back.vertices.size() == mesh.vertices.size());
  REQUIRE(back.faces.size() == mesh.faces.size());
  for (size_t i = 0; i < mesh.vertices.size(); ++i)
    for (int a = 0; a < 3; ++a) CHECK(back.vertices[i][a] == mesh.vertices[i][a]);
  CHECK(back.faces == mesh.faces);
  std::filesystem::remove(tmp);
}

TEST_CASE("vtk triangle import") {
  const char* vtk = R"(<?xml version="1.0"?>
<VTKFile type="UnstructuredGrid">
  <UnstructuredGrid>
    <Piece NumberOfPoints="4" NumberOfCells="2">
      <Points>
        <DataArray type="Float64" NumberOfComponents="3" format="ascii">
          0 0 0  1 0 0  0 1 0  1 1 0
        </DataArray>
      </Points>
      <Cells>
        <DataArray type="Int64" Name="connectivity" format="ascii">0 1 2 1 3 2</DataArray>
        <DataArray type="Int64" Name="offsets" format="ascii">3 6</DataArray>
        <DataArray type="UInt8" Name="types" format="ascii">5 5</DataArray>
      </Cells>
    </Piece>
  </UnstructuredGrid>
</VTKFile>)";
  auto tmp = std::filesystem::temp_directory_path() / "lofno_test_tris.vtu";
  io::atomic_write(tmp, vtk);
  SurfaceMesh m = read_vtk_triangles(tmp.string());
  CHECK(m.vertices.size() == 4);
  REQUIRE(m.faces.size() == 2);
  CHECK(m.faces[0] == std::array<int, 3>{0, 1, 2});

  std::string bad = vtk;
  auto pos = bad.find(">5 5<");
  bad.replace(pos, 5, ">5 9<");
  io::atomic_write(tmp, bad);
  CHECK_THROWS(read_vtk_triangles(tmp.string()));
  std::filesystem::remove(tmp);
}

TEST_CASE("boundary normals point outward") {
  VesselGeometry geom((VesselSpec()));
  VoxelGrid g = VoxelGrid::cube(24, 1.0, {0, 0, 0});
  ChiField chi = sample_chi(geom, g);
  NormalField nf = boundary_normals(geom, chi);
  REQUIRE(nf.normals.size() > 10);
  for (const auto& [idx, n] : nf.normals) {
    CHECK(norm(n) == Catch::Approx(1.0).margin(1e-9));
    int64_t k = idx % g.dims[2], j = (idx / g.dims[2]) % g.dims[1],
            i = idx / (g.dims[1] * g.dims[2]);
    Vec3 p = g.center(i, j, k);
    // stepping along the normal increases the sdf
    CHECK(geom.sdf(p + (0.5 * g.spacing[0]) * n) > geom.sdf(p));
  }
}
