#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <set>

#include "lofno/mesh.hpp"

namespace lofno {

struct MeshGraph {
  int n_vertices = 0;
  Eigen::SparseMatrix<double> adjacency;  // symmetric, zero diagonal
  std::vector<int> degrees;
};

enum class EigenOrder { largest_nonzero, smallest_nonzero };

struct LaplacianSpectrum {
  std::vector<double> eigenvalues;  // k values, sorted per requested order
  Eigen::MatrixXd eigenvectors;     // N x k, unit columns
};

struct PriorChannels {
  VoxelGrid grid;
  Tensor channels;  // [Ne, X, Y, Z]
};

inline MeshGraph build_graph(const SurfaceMesh& mesh) {
  if (mesh.components() != 1)
    throw std::runtime_error("build_graph: mesh is disconnected (" +
                             std::to_string(mesh.components()) + " components)");
  const int n = int(mesh.vertices.size());
  std::set<std::pair<int, int>> edges;
  for (const auto& f : mesh.faces)
    for (int e = 0; e < 3; ++e) {
      int a = f[e], b = f[(e + 1) % 3];
      if (a != b) edges.emplace(std::min(a, b), std::max(a, b));
    }
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(edges.size() * 2);
  MeshGraph g;
  g.n_vertices = n;
  g.degrees.assign(size_t(n), 0);
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

/// L_sym = I - D^+^{1/2} A D^+^{1/2}; isolated vertices get an identity row
/// through the pseudoinverse of D.
inline Eigen::SparseMatrix<double> normalized_laplacian(const MeshGraph& graph) {
  const int n = graph.n_vertices;
  std::vector<double> dinvsqrt(size_t(n), 0.0);
  for (int i = 0; i < n; ++i)
    if (graph.degrees[size_t(i)] > 0) dinvsqrt[size_t(i)] = 1.0 / std::sqrt(double(graph.degrees[size_t(i)]));
  std::vector<Eigen::Triplet<double>> trips;
  for (int i = 0; i < n; ++i) trips.emplace_back(i, i, 1.0);
  for (int col = 0; col < graph.adjacency.outerSize(); ++col)
    for (Eigen::SparseMatrix<double>::InnerIterator it(graph.adjacency, col); it; ++it)
      trips.emplace_back(int(it.row()), col,
                         -it.value() * dinvsqrt[size_t(it.row())] * dinvsqrt[size_t(col)]);
  Eigen::SparseMatrix<double> L(n, n);
  L.setFromTriplets(trips.begin(), trips.end());
  return L;
}

namespace detail {

inline void fix_sign(Eigen::Ref<Eigen::VectorXd> v) {
  int imax = 0;
  double amax = 0;
  for (int i = 0; i < v.size(); ++i)
    if (std::abs(v[i]) > amax) {
      amax = std::abs(v[i]);
      imax = i;
    }
  if (v[imax] < 0) v = -v;
}

}  // namespace detail

/// Top-k eigenpairs of a sparse symmetric matrix with spectrum in [0, 2],
/// excluding the nullspace (|lambda| < 1e-9). Lanczos with full
/// reorthogonalization, deterministic seeded start vector; the subspace is
/// grown until every requested Ritz pair meets the residual tolerance.
inline LaplacianSpectrum top_k_eigenpairs(const Eigen::SparseMatrix<double>& L, int k,
                                          EigenOrder order = EigenOrder::largest_nonzero,
                                          uint64_t seed = 0, double tol = 1e-9,
                                          int max_iters = 5000) {
  const int n = int(L.rows());
  if (k >= n) throw std::invalid_argument("top_k_eigenpairs: k must be < matrix size");

  // For smallest_nonzero, work with 2I - L so the wanted end is the large end.
  const bool flip = (order == EigenOrder::smallest_nonzero);
  auto apply = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    Eigen::VectorXd y = L * x;
    return flip ? Eigen::VectorXd(2.0 * x - y) : y;
  };

  auto rng = make_rng(seed, /*stream=*/23);
  std::normal_distribution<double> nd(0.0, 1.0);

  int m = std::min(n, std::max(2 * k + 40, 60));
  std::vector<double> vals;
  Eigen::MatrixXd vecs;

  while (true) {
    Eigen::MatrixXd V(n, m + 1);
    Eigen::VectorXd alpha(m), beta(m);
    Eigen::VectorXd q(n);
    for (int i = 0; i < n; ++i) q[i] = nd(rng);
    q.normalize();
    int built = 0;
    for (int j = 0; j < m; ++j) {
      V.col(j) = q;
      Eigen::VectorXd w = apply(q);
      alpha[j] = q.dot(w);
      w -= alpha[j] * q;
      if (j > 0) w -= beta[j - 1] * V.col(j - 1);
      // full reorthogonalization, twice for safety
      for (int pass = 0; pass < 2; ++pass)
        for (int i = 0; i <= j; ++i) w -= V.col(i).dot(w) * V.col(i);
      beta[j] = w.norm();
      built = j + 1;
      if (beta[j] < 1e-13) break;  // invariant subspace reached
      q = w / beta[j];
    }
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(built, built);
    for (int i = 0; i < built; ++i) {
      T(i, i) = alpha[i];
      if (i + 1 < built) T(i, i + 1) = T(i + 1, i) = beta[i];
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);

    // Ritz pairs, largest first in the working spectrum.
    std::vector<std::pair<double, int>> ritz;
    for (int i = 0; i < built; ++i) ritz.emplace_back(es.eigenvalues()[i], i);
    std::sort(ritz.begin(), ritz.end(), [](auto& a, auto& b) { return a.first > b.first; });

    vals.clear();
    std::vector<Eigen::VectorXd> cols;
    bool converged = true;
    for (auto& [theta, idx] : ritz) {
      double lam = flip ? 2.0 - theta : theta;
      if (std::abs(lam) < 1e-9) continue;  // nullspace
      Eigen::VectorXd y = V.leftCols(built) * es.eigenvectors().col(idx);
      y.normalize();
      Eigen::VectorXd r = L * y - lam * y;
      if (r.norm() > tol * std::max(1.0, std::abs(lam)) * 1e3 && built < n) {
        converged = false;
        break;
      }
      vals.push_back(lam);
      cols.push_back(y);
      if (int(vals.size()) == k) break;
    }
    if (converged && int(vals.size()) == k) {
      vecs.resize(n, k);
      for (int i = 0; i < k; ++i) vecs.col(i) = cols[size_t(i)];
      break;
    }
    if (built >= n || m >= max_iters) {
      if (int(vals.size()) < k)
        throw std::runtime_error("top_k_eigenpairs: only " + std::to_string(vals.size()) +
                                 " nonzero eigenvalues available, requested " + std::to_string(k));
      vecs.resize(n, k);
      for (int i = 0; i < k; ++i) vecs.col(i) = cols[size_t(i)];
      break;
    }
    m = std::min({n, std::max(2 * m, m + 40), max_iters});
  }

  // Rayleigh refinement: one residual-check pass with sign fixing.
  LaplacianSpectrum spec;
  spec.eigenvalues = vals;
  spec.eigenvectors = vecs;
  for (int i = 0; i < k; ++i) {
    detail::fix_sign(spec.eigenvectors.col(i));
    spec.eigenvectors.col(i).normalize();
  }
  // deterministic order within degenerate groups: by sign-fixed first component
  for (int i = 0; i + 1 < k;) {
    int j = i + 1;
    while (j < k && std::abs(spec.eigenvalues[size_t(j)] - spec.eigenvalues[size_t(i)]) < 1e-8) ++j;
    if (j - i > 1) {
      std::vector<int> idx(size_t(j - i));
      for (int t = 0; t < j - i; ++t) idx[size_t(t)] = i + t;
      std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        return spec.eigenvectors(0, a) > spec.eigenvectors(0, b);
      });
      std::vector<double> ev(size_t(j - i));
      Eigen::MatrixXd group(spec.eigenvectors.rows(), j - i);
      for (int t = 0; t < j - i; ++t) {
        ev[size_t(t)] = spec.eigenvalues[size_t(idx[size_t(t)])];
        group.col(t) = spec.eigenvectors.col(idx[size_t(t)]);
      }
      for (int t = 0; t < j - i; ++t) {
        spec.eigenvalues[size_t(i + t)] = ev[size_t(t)];
        spec.eigenvectors.col(i + t) = group.col(t);
      }
    }
    i = j;
  }
  return spec;
}

/// Gaussian-kernel scatter of per-vertex values onto voxel centers:
/// normalized weights w = exp(-d^2/(2 r^2)) over vertices within 3r;
/// voxels with no vertex in range stay 0.
inline PriorChannels gaussian_resample(const SurfaceMesh& mesh, const Eigen::MatrixXd& vertex_values,
                                       const VoxelGrid& grid, double radius) {
  if (!(radius > 0)) throw std::invalid_argument("gaussian_resample: radius must be > 0");
  if (vertex_values.rows() != int(mesh.vertices.size()))
    throw std::invalid_argument("gaussian_resample: vertex value row count mismatch");
  const int ne = int(vertex_values.cols());
  const double cutoff = 3.0 * radius, cutoff2 = cutoff * cutoff;

  PriorChannels pc;
  pc.grid = grid;
  pc.channels = Tensor({ne, grid.dims[0], grid.dims[1], grid.dims[2]});

  // bin vertices on a coarse lattice of cell size = cutoff
  std::unordered_map<int64_t, std::vector<int>> bins;
  Vec3 lo = grid.origin;
  auto bin_key = [&](const Vec3& p) {
    int64_t bx = int64_t(std::floor((p[0] - lo[0]) / cutoff));
    int64_t by = int64_t(std::floor((p[1] - lo[1]) / cutoff));
    int64_t bz = int64_t(std::floor((p[2] - lo[2]) / cutoff));
    return (bx * 73856093) ^ (by * 19349663) ^ (bz * 83492791);
  };
  auto bin_key_idx = [&](int64_t bx, int64_t by, int64_t bz) {
    return (bx * 73856093) ^ (by * 19349663) ^ (bz * 83492791);
  };
  for (int v = 0; v < int(mesh.vertices.size()); ++v)
    bins[bin_key(mesh.vertices[size_t(v)])].push_back(v);

  const int64_t nvox = grid.nvox();
  for (int64_t i = 0; i < grid.dims[0]; ++i)
    for (int64_t j = 0; j < grid.dims[1]; ++j)
      for (int64_t k = 0; k < grid.dims[2]; ++k) {
        Vec3 p = grid.center(i, j, k);
        int64_t bx = int64_t(std::floor((p[0] - lo[0]) / cutoff));
        int64_t by = int64_t(std::floor((p[1] - lo[1]) / cutoff));
        int64_t bz = int64_t(std::floor((p[2] - lo[2]) / cutoff));
        double wsum = 0;
        std::vector<std::pair<int, double>> active;
        for (int64_t dx = -1; dx <= 1; ++dx)
          for (int64_t dy = -1; dy <= 1; ++dy)
            for (int64_t dz = -1; dz <= 1; ++dz) {
              auto it = bins.find(bin_key_idx(bx + dx, by + dy, bz + dz));
              if (it == bins.end()) continue;
              for (int v : it->second) {
                Vec3 d = p - mesh.vertices[size_t(v)];
                double d2 = dot(d, d);
                if (d2 > cutoff2) continue;
                double w = std::exp(-d2 / (2.0 * radius * radius));
                active.emplace_back(v, w);
                wsum += w;
              }
            }
        if (wsum <= 0) continue;
        int64_t vox = grid.index(i, j, k);
        for (int c = 0; c < ne; ++c) {
          double acc = 0;
          for (auto& [v, w] : active) acc += w * vertex_values(v, c);
          pc.channels.v[size_t(c * nvox + vox)] = acc / wsum;
        }
      }
  return pc;
}

}  // namespace lofno
