#pragma once

#include <zlib.h>

#include "lofno/io.hpp"

namespace lofno {

/// 8-bit RGB image, row-major top-left origin.
struct Image {
  int64_t width = 0, height = 0;
  std::vector<uint8_t> rgb;  // 3 * width * height

  Image() = default;
  Image(int64_t w, int64_t h) : width(w), height(h), rgb(size_t(3 * w * h), 0) {}
  void set(int64_t x, int64_t y, uint8_t r, uint8_t g, uint8_t b) {
    size_t i = size_t(3 * (y * width + x));
    rgb[i] = r;
    rgb[i + 1] = g;
    rgb[i + 2] = b;
  }
};

namespace png_detail {

inline void put_be32(std::string& out, uint32_t v) {
  out.push_back(char((v >> 24) & 0xff));
  out.push_back(char((v >> 16) & 0xff));
  out.push_back(char((v >> 8) & 0xff));
  out.push_back(char(v & 0xff));
}

inline void chunk(std::string& out, const char type[4], const std::string& data) {
  put_be32(out, uint32_t(data.size()));
  size_t start = out.size();
  out.append(type, 4);
  out += data;
  uint32_t crc = uint32_t(
      crc32(0, reinterpret_cast<const Bytef*>(out.data() + start), uInt(out.size() - start)));
  put_be32(out, crc);
}

}  // namespace png_detail

/// Serialize to PNG (8-bit RGB, zlib level 9, filter 0). Deterministic bytes
/// for identical pixels.
inline std::string encode_png(const Image& img) {
  if (img.width < 1 || img.height < 1) throw std::invalid_argument("encode_png: empty image");
  std::string out("\x89PNG\r\n\x1a\n", 8);
  std::string ihdr;
  png_detail::put_be32(ihdr, uint32_t(img.width));
  png_detail::put_be32(ihdr, uint32_t(img.height));
  ihdr += std::string("\x08\x02\x00\x00\x00", 5);  // depth 8, truecolor
  png_detail::chunk(out, "IHDR", ihdr);

  std::string raw;
  raw.reserve(size_t((3 * img.width + 1) * img.height));
  for (int64_t y = 0; y < img.height; ++y) {
    raw.push_back('\0');  // filter: none
    raw.append(reinterpret_cast<const char*>(img.rgb.data() + 3 * y * img.width),
               size_t(3 * img.width));
  }
  uLongf bound = compressBound(uLong(raw.size()));
  std::string z(bound, '\0');
  if (compress2(reinterpret_cast<Bytef*>(z.data()), &bound,
                reinterpret_cast<const Bytef*>(raw.data()), uLong(raw.size()), 9) != Z_OK)
    throw std::runtime_error("encode_png: deflate failed");
  z.resize(bound);
  png_detail::chunk(out, "IDAT", z);
  png_detail::chunk(out, "IEND", "");
  return out;
}

inline void write_png(const io::fs::path& path, const Image& img) {
  io::atomic_write(path, encode_png(img));
}

/// Diverging blue-white-red map for signed values; u = 0 maps to white.
inline void diverging_color(double u, uint8_t& r, uint8_t& g, uint8_t& b) {
  u = std::clamp(u, -1.0, 1.0);
  if (u < 0) {
    r = uint8_t(255 * (1 + u));
    g = uint8_t(255 * (1 + u));
    b = 255;
  } else {
    r = 255;
    g = uint8_t(255 * (1 - u));
    b = uint8_t(255 * (1 - u));
  }
}

/// Black-body style map for nonnegative magnitudes.
inline void magnitude_color(double u, uint8_t& r, uint8_t& g, uint8_t& b) {
  u = std::clamp(u, 0.0, 1.0);
  r = uint8_t(255 * std::min(1.0, 3 * u));
  g = uint8_t(255 * std::clamp(3 * u - 1, 0.0, 1.0));
  b = uint8_t(255 * std::clamp(3 * u - 2, 0.0, 1.0));
}

/// One velocity component on an axis-aligned slice, colored symmetrically
/// about zero. A constant field produces a single-color image.
inline Image render_slice(const FlowField& f, int component, int64_t timestep, int axis,
                          int64_t slice) {
  const auto& g = f.grid;
  if (axis < 0 || axis > 2) throw std::invalid_argument("render_slice: axis out of range");
  if (slice < 0 || slice >= g.dims[size_t(axis)])
    throw std::out_of_range("render_slice: slice index out of range");
  if (timestep < 0 || timestep >= f.T())
    throw std::out_of_range("render_slice: timestep out of range");
  int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
  const int64_t W = g.dims[size_t(a1)], H = g.dims[size_t(a2)];
  const int64_t n = g.nvox();
  const double* base = f.velocity.v.data() + (int64_t(component) * f.T() + timestep) * n;

  double vmax = 0;
  auto at = [&](int64_t u, int64_t v) {
    int64_t idx[3];
    idx[axis] = slice;
    idx[a1] = u;
    idx[a2] = v;
    return base[g.index(idx[0], idx[1], idx[2])];
  };
  for (int64_t u = 0; u < W; ++u)
    for (int64_t v = 0; v < H; ++v) vmax = std::max(vmax, std::abs(at(u, v)));

  Image img(W, H);
  for (int64_t u = 0; u < W; ++u)
    for (int64_t v = 0; v < H; ++v) {
      uint8_t r, gc, b;
      diverging_color(vmax > 0 ? at(u, v) / vmax : 0.0, r, gc, b);
      img.set(u, H - 1 - v, r, gc, b);
    }
  return img;
}

/// Wall-shear magnitudes at one timestep scattered onto the image plane
/// orthogonal to `axis` (vertices projected along the axis; nearest pixel).
inline Image render_wss(const WssField& wss, const SurfaceMesh& mesh, const VoxelGrid& grid,
                        int64_t timestep, int axis) {
  if (timestep < 0 || timestep >= int64_t(wss.tau.size()))
    throw std::out_of_range("render_wss: timestep out of range");
  int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
  const int64_t W = grid.dims[size_t(a1)], H = grid.dims[size_t(a2)];
  std::vector<double> mag(size_t(W * H), -1.0);
  double vmax = 0;
  for (size_t v = 0; v < mesh.vertices.size(); ++v) {
    if (wss.missing[v]) continue;
    const Vec3& p = mesh.vertices[v];
    int64_t u = int64_t(std::floor((p[a1] - grid.origin[a1]) / grid.spacing[a1]));
    int64_t w = int64_t(std::floor((p[a2] - grid.origin[a2]) / grid.spacing[a2]));
    if (u < 0 || u >= W || w < 0 || w >= H) continue;
    double m = norm(wss.tau[size_t(timestep)][v]);
    double& cell = mag[size_t(w * W + u)];
    cell = std::max(cell, m);
    vmax = std::max(vmax, m);
  }
  Image img(W, H);
  for (int64_t u = 0; u < W; ++u)
    for (int64_t w = 0; w < H; ++w) {
      double m = mag[size_t(w * W + u)];
      if (m < 0) continue;  // background stays black
      uint8_t r, g, b;
      magnitude_color(vmax > 0 ? m / vmax : 0.0, r, g, b);
      img.set(u, H - 1 - w, r, g, b);
    }
  return img;
}

}  // namespace lofno
