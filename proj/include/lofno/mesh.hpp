#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include "lofno/geometry.hpp"

namespace lofno {

struct SurfaceMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;

  int64_t euler_characteristic() const {
    std::map<std::pair<int, int>, int> edges;
    for (const auto& f : faces)
      for (int e = 0; e < 3; ++e) {
        int a = f[e], b = f[(e + 1) % 3];
        edges[{std::min(a, b), std::max(a, b)}]++;
      }
    return int64_t(vertices.size()) - int64_t(edges.size()) + int64_t(faces.size());
  }

  double area() const {
    double a = 0;
    for (const auto& f : faces)
      a += 0.5 * norm(cross(vertices[f[1]] - vertices[f[0]], vertices[f[2]] - vertices[f[0]]));
    return a;
  }

  /// Number of edge-connected components over faces (union-find on vertices
  /// joined by faces).
  int components() const {
    std::vector<int> parent(vertices.size());
    for (size_t i = 0; i < parent.size(); ++i) parent[i] = int(i);
    std::function<int(int)> find = [&](int x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    for (const auto& f : faces) {
      int a = find(f[0]);
      parent[find(f[1])] = a;
      parent[find(f[2])] = a;
    }
    std::vector<uint8_t> used(vertices.size(), 0), root(vertices.size(), 0);
    for (const auto& f : faces)
      for (int v : f) used[size_t(v)] = 1;
    int c = 0;
    for (size_t i = 0; i < vertices.size(); ++i)
      if (used[i] && !root[size_t(find(int(i)))]) {
        root[size_t(find(int(i)))] = 1;
        ++c;
      }
    return c;
  }
};

namespace detail {

struct MeshBuilder {
  static constexpr double kSnap = 1e-6;
  std::map<std::array<int64_t, 3>, int> lookup;  // snapped position -> vertex id
  SurfaceMesh mesh;

  int vertex(const Vec3& p) {
    std::array<int64_t, 3> key{int64_t(std::llround(p[0] / kSnap)),
                               int64_t(std::llround(p[1] / kSnap)),
                               int64_t(std::llround(p[2] / kSnap))};
    auto it = lookup.find(key);
    if (it != lookup.end()) return it->second;
    int id = int(mesh.vertices.size());
    mesh.vertices.push_back(p);
    lookup.emplace(key, id);
    return id;
  }

  void face(int a, int b, int c) {
    if (a == b || b == c || a == c) return;
    const Vec3 &pa = mesh.vertices[a], &pb = mesh.vertices[b], &pc = mesh.vertices[c];
    if (norm(cross(pb - pa, pc - pa)) < 1e-14) return;
    mesh.faces.push_back({a, b, c});
  }
};

}  // namespace detail

/// Contour the SDF zero level set by marching tetrahedra on the Kuhn
/// (6-tetrahedra) subdivision of each lattice cell. The subdivision tiles
/// space consistently, so the mesh is watertight; vertices are welded by
/// snapped position.
inline SurfaceMesh extract_surface_mesh(const VesselGeometry& geom, int resolution) {
  if (resolution < 8) throw std::invalid_argument("extract_surface_mesh: resolution must be >= 8");
  Vec3 lo, hi;
  geom.bounding_box(lo, hi);
  const int n = resolution;
  Vec3 h{(hi[0] - lo[0]) / n, (hi[1] - lo[1]) / n, (hi[2] - lo[2]) / n};

  // sample SDF at lattice points
  std::vector<double> f(size_t((n + 1) * (n + 1) * (n + 1)));
  auto fidx = [n](int i, int j, int k) { return size_t((i * (n + 1) + j) * (n + 1) + k); };
  auto fpos = [&](int i, int j, int k) {
    return Vec3{lo[0] + i * h[0], lo[1] + j * h[1], lo[2] + k * h[2]};
  };
  for (int i = 0; i <= n; ++i)
    for (int j = 0; j <= n; ++j)
      for (int k = 0; k <= n; ++k) f[fidx(i, j, k)] = geom.sdf(fpos(i, j, k));

  detail::MeshBuilder mb;

  // Kuhn subdivision: 6 tets per cube, one per permutation of axis steps
  // along the (0,0,0)-(1,1,1) diagonal.
  static const int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};

  auto edge_vertex = [&](const std::array<int, 3>& a, const std::array<int, 3>& b, double fa,
                         double fb) {
    double t = fa / (fa - fb);
    t = std::clamp(t, 0.0, 1.0);
    Vec3 pa = fpos(a[0], a[1], a[2]), pb = fpos(b[0], b[1], b[2]);
    return mb.vertex(pa + t * (pb - pa));
  };

  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        for (const auto& perm : perms) {
          std::array<std::array<int, 3>, 4> c;
          c[0] = {i, j, k};
          for (int s = 0; s < 3; ++s) {
            c[s + 1] = c[s];
            c[s + 1][perm[s]] += 1;
          }
          double fv[4];
          bool in[4];
          int nin = 0;
          for (int s = 0; s < 4; ++s) {
            fv[s] = f[fidx(c[s][0], c[s][1], c[s][2])];
            in[s] = fv[s] < 0;
            nin += in[s];
          }
          if (nin == 0 || nin == 4) continue;
          // collect crossing-edge vertices
          int vid[4];
          if (nin == 1 || nin == 3) {
            int lone = -1;
            for (int s = 0; s < 4; ++s)
              if (in[s] == (nin == 1)) lone = s;
            int m = 0;
            for (int s = 0; s < 4; ++s)
              if (s != lone) vid[m++] = edge_vertex(c[lone], c[s], fv[lone], fv[s]);
            mb.face(vid[0], vid[1], vid[2]);
          } else {
            int a[2], b[2], na = 0, nb = 0;
            for (int s = 0; s < 4; ++s) (in[s] ? a[na++] : b[nb++]) = s;
            int v00 = edge_vertex(c[a[0]], c[b[0]], fv[a[0]], fv[b[0]]);
            int v01 = edge_vertex(c[a[0]], c[b[1]], fv[a[0]], fv[b[1]]);
            int v10 = edge_vertex(c[a[1]], c[b[0]], fv[a[1]], fv[b[0]]);
            int v11 = edge_vertex(c[a[1]], c[b[1]], fv[a[1]], fv[b[1]]);
            mb.face(v00, v01, v11);
            mb.face(v00, v11, v10);
          }
        }

  SurfaceMesh& mesh = mb.mesh;
  // orient faces outward (along the SDF gradient)
  for (auto& fc : mesh.faces) {
    Vec3 centroid = (1.0 / 3.0) * (mesh.vertices[fc[0]] + mesh.vertices[fc[1]] + mesh.vertices[fc[2]]);
    Vec3 fn = cross(mesh.vertices[fc[1]] - mesh.vertices[fc[0]],
                    mesh.vertices[fc[2]] - mesh.vertices[fc[0]]);
    if (dot(fn, geom.sdf_gradient(centroid)) < 0) std::swap(fc[1], fc[2]);
  }

  if (mesh.faces.empty()) throw std::runtime_error("extract_surface_mesh: no surface in range");
  int comps = mesh.components();
  if (comps != 1)
    throw std::runtime_error("extract_surface_mesh: mesh has " + std::to_string(comps) +
                             " components, expected 1");
  return mesh;
}

inline void write_obj(const SurfaceMesh& mesh, std::ostream& out) {
  out.precision(17);  // full double round-trip
  for (const auto& v : mesh.vertices) out << "v " << v[0] << " " << v[1] << " " << v[2] << "\n";
  for (const auto& f : mesh.faces)
    out << "f " << f[0] + 1 << " " << f[1] + 1 << " " << f[2] + 1 << "\n";
}

inline void write_obj(const SurfaceMesh& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_obj: cannot open " + path);
  write_obj(mesh, out);
}

/// Minimal reader for ASCII VTK XML unstructured grids restricted to
/// triangle cells (VTK cell type 5). Anything else is rejected.
inline SurfaceMesh read_vtk_triangles(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_vtk_triangles: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  std::string text = ss.str();

  auto array_after = [&](const std::string& name_attr, size_t from) -> std::vector<double> {
    size_t pos = text.find(name_attr, from);
    if (pos == std::string::npos)
      throw std::runtime_error("read_vtk_triangles: missing DataArray " + name_attr);
    size_t open = text.find('>', pos);
    size_t close = text.find("</DataArray>", open);
    if (open == std::string::npos || close == std::string::npos)
      throw std::runtime_error("read_vtk_triangles: malformed DataArray " + name_attr);
    std::istringstream vals(text.substr(open + 1, close - open - 1));
    std::vector<double> out;
    double x;
    while (vals >> x) out.push_back(x);
    return out;
  };

  if (text.find("<UnstructuredGrid") == std::string::npos)
    throw std::runtime_error("read_vtk_triangles: not a VTK UnstructuredGrid file");

  std::vector<double> pts;
  if (text.find("Name=\"Points\"") != std::string::npos) {
    pts = array_after("Name=\"Points\"", 0);
  } else {
    size_t ppos = text.find("<Points>");
    if (ppos == std::string::npos) throw std::runtime_error("read_vtk_triangles: no Points");
    pts = array_after("<DataArray", ppos);
  }
  if (pts.size() % 3 != 0) throw std::runtime_error("read_vtk_triangles: bad point array");
  auto conn = array_after("Name=\"connectivity\"", 0);
  auto offs = array_after("Name=\"offsets\"", 0);
  auto types = array_after("Name=\"types\"", 0);

  SurfaceMesh mesh;
  for (size_t i = 0; i + 2 < pts.size(); i += 3)
    mesh.vertices.push_back({pts[i], pts[i + 1], pts[i + 2]});
  size_t start = 0;
  for (size_t c = 0; c < offs.size(); ++c) {
    if (c < types.size() && int(types[c]) != 5)
      throw std::runtime_error("read_vtk_triangles: non-triangle cell type " +
                               std::to_string(int(types[c])) + " at cell " + std::to_string(c));
    size_t end = size_t(offs[c]);
    if (end - start != 3) throw std::runtime_error("read_vtk_triangles: cell is not a triangle");
    std::array<int, 3> fc{int(conn[start]), int(conn[start + 1]), int(conn[start + 2])};
    for (int v : fc)
      if (v < 0 || size_t(v) >= mesh.vertices.size())
        throw std::runtime_error("read_vtk_triangles: face index out of range");
    mesh.faces.push_back(fc);
    start = end;
  }
  return mesh;
}

}  // namespace lofno
