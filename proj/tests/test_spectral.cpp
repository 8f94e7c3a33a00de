#include <catch2/catch_amalgamated.hpp>

#include "lofno/spectral.hpp"

using namespace lofno;

namespace {

// explicit edge-list graph packed into a one-triangle-per-edge dummy mesh is
// awkward; build MeshGraph directly instead
MeshGraph graph_from_edges(int n, const std::vector<std::pair<int, int>>& edges) {
  MeshGraph g;
  g.n_vertices = n;
  g.degrees.assign(size_t(n), 0);
  std::vector<Eigen::Triplet<double>> trips;
  for (auto [a, b] : edges) {
    trips.emplace_back(a, b, 1.0);
    trips.emplace_back(b, a, 1.0);
    g.degrees[size_t(a)]++;
    g.degrees[size_t(b)]++;
  }
  g.adjacency.resize(n, n);
  g.adjacency.setFromTriplets(trips.begin(), trips.end());
  return g;
}

std::vector<double> dense_spectrum(const Eigen::SparseMatrix<double>& L) {
  Eigen::MatrixXd Ld(L);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Ld);
  std::vector<double> v(es.eigenvalues().data(), es.eigenvalues().data() + L.rows());
  return v;
}

}  // namespace

TEST_CASE("triangle mesh graph is K3 with all degrees 2") {
  SurfaceMesh tri;
  tri.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  tri.faces = {{0, 1, 2}};
  MeshGraph g = build_graph(tri);
  CHECK(g.n_vertices == 3);
  for (int d : g.degrees) CHECK(d == 2);
  CHECK(g.adjacency.nonZeros() == 6);
}

TEST_CASE("path graph P4 spectrum is {0, 1/2, 3/2, 2}") {
  // analytic normalized-Laplacian spectrum of the 4-vertex path,
  // cross-checked against the dense solver
  auto g = graph_from_edges(4, {{0, 1}, {1, 2}, {2, 3}});
  auto L = normalized_laplacian(g);
  auto ev = dense_spectrum(L);
  std::vector<double> want{0.0, 0.5, 1.5, 2.0};
  REQUIRE(ev.size() == 4);
  for (size_t i = 0; i < 4; ++i) CHECK(ev[i] == Catch::Approx(want[i]).margin(1e-10));

  auto spec = top_k_eigenpairs(L, 2, EigenOrder::largest_nonzero);
  REQUIRE(spec.eigenvalues.size() == 2);
  CHECK(spec.eigenvalues[0] == Catch::Approx(2.0).margin(1e-10));
  CHECK(spec.eigenvalues[1] == Catch::Approx(1.5).margin(1e-10));

  auto small = top_k_eigenpairs(L, 2, EigenOrder::smallest_nonzero);
  CHECK(small.eigenvalues[0] == Catch::Approx(0.5).margin(1e-10));
  CHECK(small.eigenvalues[1] == Catch::Approx(1.5).margin(1e-10));
}

TEST_CASE("K3 spectrum is {0, 3/2, 3/2}; k limits enforced") {
  auto g = graph_from_edges(3, {{0, 1}, {1, 2}, {0, 2}});
  auto L = normalized_laplacian(g);
  auto ev = dense_spectrum(L);
  CHECK(ev[0] == Catch::Approx(0.0).margin(1e-10));
  CHECK(ev[1] == Catch::Approx(1.5).margin(1e-10));
  CHECK(ev[2] == Catch::Approx(1.5).margin(1e-10));

  auto spec = top_k_eigenpairs(L, 2);
  CHECK(spec.eigenvalues[0] == Catch::Approx(1.5).margin(1e-10));
  CHECK(spec.eigenvalues[1] == Catch::Approx(1.5).margin(1e-10));
  // orthonormal within 1e-8
  Eigen::MatrixXd G = spec.eigenvectors.transpose() * spec.eigenvectors;
  CHECK((G - Eigen::MatrixXd::Identity(2, 2)).norm() < 1e-8);

  CHECK_THROWS(top_k_eigenpairs(L, 3));
}

TEST_CASE("disconnected mesh rejected") {
  SurfaceMesh two;
  two.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {5, 0, 0}, {6, 0, 0}, {5, 1, 0}};
  two.faces = {{0, 1, 2}, {3, 4, 5}};
  CHECK_THROWS_WITH(build_graph(two), Catch::Matchers::ContainsSubstring("disconnected"));
}

TEST_CASE("spectrum in [0,2] and residuals small on a real vessel mesh") {
  VesselSpec vs;
  vs.bulge = BulgeSpec{};
  VesselGeometry geom(vs);
  SurfaceMesh mesh = extract_surface_mesh(geom, 16);
  auto L = normalized_laplacian(build_graph(mesh));
  const int k = 16;
  auto spec = top_k_eigenpairs(L, k);
  REQUIRE(int(spec.eigenvalues.size()) == k);
  for (int i = 0; i < k; ++i) {
    double lam = spec.eigenvalues[size_t(i)];
    CHECK(lam >= -1e-12);
    CHECK(lam <= 2.0 + 1e-12);
    if (i > 0) CHECK(lam <= spec.eigenvalues[size_t(i - 1)] + 1e-12);
    Eigen::VectorXd v = spec.eigenvectors.col(i);
    CHECK((L * v - lam * v).norm() <= 1e-6 * std::max(1.0, lam));
    CHECK(v.norm() == Catch::Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("iterative solver matches dense oracle on a small mesh") {
  VesselSpec vs;
  VesselGeometry geom(vs);
  VesselSpec small = vs;
  small.base_radius = 0.05;
  VesselGeometry gsm(small);
  SurfaceMesh mesh = extract_surface_mesh(gsm, 8);
  REQUIRE(mesh.vertices.size() <= 500);
  auto L = normalized_laplacian(build_graph(mesh));
  auto dense = dense_spectrum(L);

  const int k = 8;
  auto spec = top_k_eigenpairs(L, k);
  // compare against the k largest nonzero dense eigenvalues
  std::vector<double> want;
  for (auto it = dense.rbegin(); it != dense.rend() && int(want.size()) < k; ++it)
    if (std::abs(*it) >= 1e-9) want.push_back(*it);
  REQUIRE(int(want.size()) == k);
  for (int i = 0; i < k; ++i)
    CHECK(spec.eigenvalues[size_t(i)] == Catch::Approx(want[size_t(i)]).margin(1e-8));
}

TEST_CASE("solver is deterministic and sign-fixed") {
  auto g = graph_from_edges(6, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {5, 0}, {0, 3}});
  auto L = normalized_laplacian(g);
  auto a = top_k_eigenpairs(L, 3, EigenOrder::largest_nonzero, 5);
  auto b = top_k_eigenpairs(L, 3, EigenOrder::largest_nonzero, 5);
  CHECK(a.eigenvalues == b.eigenvalues);
  CHECK((a.eigenvectors - b.eigenvectors).norm() == 0.0);
  for (int i = 0; i < 3; ++i) {
    // largest-|entry| component is positive
    int imax = 0;
    for (int r = 1; r < 6; ++r)
      if (std::abs(a.eigenvectors(r, i)) > std::abs(a.eigenvectors(imax, i))) imax = r;
    CHECK(a.eigenvectors(imax, i) > 0);
  }
}

TEST_CASE("gaussian resample: constant field maps to constant inside support") {
  VesselGeometry geom((VesselSpec()));
  SurfaceMesh mesh = extract_surface_mesh(geom, 12);
  Eigen::MatrixXd vals = Eigen::MatrixXd::Ones(int(mesh.vertices.size()), 1);
  VoxelGrid grid = VoxelGrid::cube(12, 1.0, {0, 0, 0});
  double radius = 1.5 / 12.0;
  PriorChannels pc = gaussian_resample(mesh, vals, grid, radius);
  REQUIRE(pc.channels.shape == std::vector<int64_t>{1, 12, 12, 12});
  int64_t supported = 0;
  for (double x : pc.channels.v) {
    CHECK((x == 0.0 || std::abs(x - 1.0) < 1e-12));
    supported += x != 0.0;
  }
  CHECK(supported > 0);  // kernel support covers near-wall voxels
}

TEST_CASE("gaussian resample respects the 3-sigma cutoff") {
  SurfaceMesh one;
  one.vertices = {{0.5, 0.5, 0.5}, {0.5001, 0.5, 0.5}, {0.5, 0.5001, 0.5}};
  one.faces = {{0, 1, 2}};
  Eigen::MatrixXd vals = Eigen::MatrixXd::Constant(3, 1, 2.0);
  VoxelGrid grid = VoxelGrid::cube(16, 1.0, {0, 0, 0});
  double radius = 0.05;
  PriorChannels pc = gaussian_resample(one, vals, grid, radius);
  for (int64_t i = 0; i < 16; ++i)
    for (int64_t j = 0; j < 16; ++j)
      for (int64_t k = 0; k < 16; ++k) {
        double d = norm(grid.center(i, j, k) - Vec3{0.5, 0.5, 0.5});
        double got = pc.channels.v[size_t(grid.index(i, j, k))];
        if (d > 3 * radius + 0.001) CHECK(got == 0.0);
        if (d < 2.5 * radius) CHECK(got == Catch::Approx(2.0).margin(1e-9));
      }
}
