#pragma once

#include <cstdint>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace lofno {

/// Dense row-major tensor of doubles. Complex tensors store interleaved
/// re/im pairs; `shape` is the logical shape (the trailing factor of 2 is
/// implicit).
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<double> v;
  bool complex = false;

  Tensor() = default;
  explicit Tensor(std::vector<int64_t> s, bool cplx = false)
      : shape(std::move(s)), complex(cplx) {
    v.assign(static_cast<size_t>(numel()) * (complex ? 2 : 1), 0.0);
  }

  int64_t numel() const {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
  }
  size_t bytes() const { return v.size() * sizeof(double); }

  double& operator[](size_t i) { return v[i]; }
  double operator[](size_t i) const { return v[i]; }

  bool same_shape(const Tensor& o) const {
    return shape == o.shape && complex == o.complex;
  }

  void fill(double x) { std::fill(v.begin(), v.end(), x); }

  bool all_finite() const {
    for (double x : v)
      if (!std::isfinite(x)) return false;
    return true;
  }
};

inline std::string shape_str(const std::vector<int64_t>& s) {
  std::string r = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) r += ",";
    r += std::to_string(s[i]);
  }
  return r + "]";
}

inline void check_shape(const Tensor& a, const Tensor& b, const char* where) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(where) + ": shape mismatch " +
                                shape_str(a.shape) + " vs " + shape_str(b.shape));
}

/// Deterministic RNG stream. Distinct purposes get distinct streams by
/// hashing the purpose tag into the seed.
inline std::mt19937_64 make_rng(uint64_t seed, uint64_t stream = 0) {
  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + stream * 0xBF58476D1CE4E5B9ULL + 1);
  rng.discard(7);
  return rng;
}

inline Tensor randn(std::vector<int64_t> shape, std::mt19937_64& rng, double scale = 1.0,
                    bool cplx = false) {
  Tensor t(std::move(shape), cplx);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (double& x : t.v) x = scale * nd(rng);
  return t;
}

/// FNV-1a 64-bit over raw bytes; used for content hashes in manifests.
inline uint64_t fnv1a(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ULL) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline uint64_t hash_tensor(const Tensor& t) {
  uint64_t h = fnv1a(t.shape.data(), t.shape.size() * sizeof(int64_t));
  h = fnv1a(t.v.data(), t.v.size() * sizeof(double), h);
  return fnv1a(&t.complex, 1, h);
}

}  // namespace lofno
