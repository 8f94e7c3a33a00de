#pragma once

#include <fftw3.h>

#include <complex>
#include <map>
#include <memory>

#include "lofno/tensor.hpp"

namespace lofno {
namespace fft_detail {

/// Cached in-place c2c plan for one grid size and direction. FFTW_ESTIMATE
/// keeps planning deterministic.
struct Plan {
  fftw_plan plan = nullptr;
  fftw_complex* buf = nullptr;
  int64_t n = 0;

  Plan(int64_t X, int64_t Y, int64_t Z, int sign) : n(X * Y * Z) {
    buf = fftw_alloc_complex(size_t(n));
    plan = fftw_plan_dft_3d(int(X), int(Y), int(Z), buf, buf, sign, FFTW_ESTIMATE);
  }
  ~Plan() {
    if (plan) fftw_destroy_plan(plan);
    if (buf) fftw_free(buf);
  }
  Plan(const Plan&) = delete;
};

inline Plan& plan_for(int64_t X, int64_t Y, int64_t Z, int sign) {
  static std::map<std::tuple<int64_t, int64_t, int64_t, int>, std::unique_ptr<Plan>> cache;
  auto key = std::make_tuple(X, Y, Z, sign);
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.emplace(key, std::make_unique<Plan>(X, Y, Z, sign)).first;
  return *it->second;
}

inline void grid_dims(const Tensor& t, int64_t& B, int64_t& X, int64_t& Y, int64_t& Z,
                      bool half_z) {
  if (t.shape.size() < 3) throw std::invalid_argument("fft3: tensor rank must be >= 3");
  X = t.shape[t.shape.size() - 3];
  Y = t.shape[t.shape.size() - 2];
  Z = t.shape[t.shape.size() - 1];
  if (half_z) Z = (Z - 1) * 2;  // stored slab is Z/2+1
  B = 1;
  for (size_t i = 0; i + 3 < t.shape.size(); ++i) B *= t.shape[i];
}

}  // namespace fft_detail

/// Unitary real-to-complex 3D FFT over the trailing three axes; the last
/// axis keeps the Hermitian-nonredundant half spectrum (Z/2+1 entries).
inline Tensor fft3(const Tensor& x) {
  if (x.complex) throw std::invalid_argument("fft3: input must be real");
  if (!x.all_finite()) throw std::invalid_argument("fft3: non-finite input");
  int64_t B, X, Y, Z;
  fft_detail::grid_dims(x, B, X, Y, Z, false);
  if (X < 2 || Y < 2 || Z < 2) throw std::invalid_argument("fft3: grid dims must be >= 2");
  if (Z % 2 != 0)
    throw std::invalid_argument("fft3: last axis must be even (half-spectrum storage)");
  const int64_t N = X * Y * Z, Kz = Z / 2 + 1;
  const double scale = 1.0 / std::sqrt(double(N));

  std::vector<int64_t> oshape(x.shape);
  oshape[oshape.size() - 1] = Kz;
  Tensor out(oshape, /*cplx=*/true);

  auto& pl = fft_detail::plan_for(X, Y, Z, FFTW_FORWARD);
  for (int64_t b = 0; b < B; ++b) {
    const double* src = x.v.data() + b * N;
    for (int64_t i = 0; i < N; ++i) {
      pl.buf[i][0] = src[i];
      pl.buf[i][1] = 0.0;
    }
    fftw_execute(pl.plan);
    double* dst = out.v.data() + b * X * Y * Kz * 2;
    for (int64_t i = 0; i < X; ++i)
      for (int64_t j = 0; j < Y; ++j)
        for (int64_t k = 0; k < Kz; ++k) {
          int64_t s = (i * Y + j) * Z + k;
          int64_t d = ((i * Y + j) * Kz + k) * 2;
          dst[d] = pl.buf[s][0] * scale;
          dst[d + 1] = pl.buf[s][1] * scale;
        }
  }
  return out;
}

/// Unitary inverse of fft3: Hermitian-extends the half spectrum and keeps
/// the real part. Well defined (and linear) for arbitrary slab input.
inline Tensor ifft3(const Tensor& y) {
  if (!y.complex) throw std::invalid_argument("ifft3: input must be complex");
  int64_t B, X, Y, Z;
  fft_detail::grid_dims(y, B, X, Y, Z, true);
  const int64_t N = X * Y * Z, Kz = Z / 2 + 1;
  const double scale = 1.0 / std::sqrt(double(N));

  std::vector<int64_t> oshape(y.shape);
  oshape[oshape.size() - 1] = Z;
  Tensor out(oshape, /*cplx=*/false);

  auto& pl = fft_detail::plan_for(X, Y, Z, FFTW_BACKWARD);
  for (int64_t b = 0; b < B; ++b) {
    const double* src = y.v.data() + b * X * Y * Kz * 2;
    for (int64_t i = 0; i < X; ++i)
      for (int64_t j = 0; j < Y; ++j)
        for (int64_t k = 0; k < Z; ++k) {
          int64_t d = (i * Y + j) * Z + k;
          if (k < Kz) {
            int64_t s = ((i * Y + j) * Kz + k) * 2;
            pl.buf[d][0] = src[s];
            pl.buf[d][1] = src[s + 1];
          } else {
            int64_t im = (X - i) % X, jm = (Y - j) % Y, km = Z - k;
            int64_t s = ((im * Y + jm) * Kz + km) * 2;
            pl.buf[d][0] = src[s];
            pl.buf[d][1] = -src[s + 1];
          }
        }
    fftw_execute(pl.plan);
    double* dst = out.v.data() + b * N;
    for (int64_t i = 0; i < N; ++i) dst[i] = pl.buf[i][0] * scale;
  }
  return out;
}

/// Adjoint of fft3 w.r.t. the real inner product on interleaved components:
/// zero-pad the slab cotangent into a full cube, backward transform, take
/// the real part.
inline Tensor fft3_adjoint(const Tensor& ybar, int64_t Z) {
  int64_t B, X, Y, Zc;
  fft_detail::grid_dims(ybar, B, X, Y, Zc, true);
  (void)Zc;
  const int64_t N = X * Y * Z, Kz = ybar.shape[ybar.shape.size() - 1];
  const double scale = 1.0 / std::sqrt(double(N));

  std::vector<int64_t> oshape(ybar.shape);
  oshape[oshape.size() - 1] = Z;
  Tensor out(oshape, /*cplx=*/false);

  auto& pl = fft_detail::plan_for(X, Y, Z, FFTW_BACKWARD);
  for (int64_t b = 0; b < B; ++b) {
    const double* src = ybar.v.data() + b * X * Y * Kz * 2;
    for (int64_t i = 0; i < N; ++i) pl.buf[i][0] = pl.buf[i][1] = 0.0;
    for (int64_t i = 0; i < X; ++i)
      for (int64_t j = 0; j < Y; ++j)
        for (int64_t k = 0; k < Kz; ++k) {
          int64_t s = ((i * Y + j) * Kz + k) * 2;
          int64_t d = (i * Y + j) * Z + k;
          pl.buf[d][0] = src[s];
          pl.buf[d][1] = src[s + 1];
        }
    fftw_execute(pl.plan);
    double* dst = out.v.data() + b * N;
    for (int64_t i = 0; i < N; ++i) dst[i] = pl.buf[i][0] * scale;
  }
  return out;
}

/// Adjoint of ifft3: forward transform of the real cotangent, restricted to
/// the slab; interior-kz entries are doubled (they stand for a conjugate
/// pair in the Hermitian extension).
inline Tensor ifft3_adjoint(const Tensor& xbar) {
  int64_t B, X, Y, Z;
  fft_detail::grid_dims(xbar, B, X, Y, Z, false);
  if (Z % 2 != 0) throw std::invalid_argument("ifft3_adjoint: last axis must be even");
  const int64_t N = X * Y * Z, Kz = Z / 2 + 1;
  const double scale = 1.0 / std::sqrt(double(N));

  std::vector<int64_t> oshape(xbar.shape);
  oshape[oshape.size() - 1] = Kz;
  Tensor out(oshape, /*cplx=*/true);

  auto& pl = fft_detail::plan_for(X, Y, Z, FFTW_FORWARD);
  for (int64_t b = 0; b < B; ++b) {
    const double* src = xbar.v.data() + b * N;
    for (int64_t i = 0; i < N; ++i) {
      pl.buf[i][0] = src[i];
      pl.buf[i][1] = 0.0;
    }
    fftw_execute(pl.plan);
    double* dst = out.v.data() + b * X * Y * Kz * 2;
    for (int64_t i = 0; i < X; ++i)
      for (int64_t j = 0; j < Y; ++j)
        for (int64_t k = 0; k < Kz; ++k) {
          double c = (k == 0 || 2 * k == Z) ? 1.0 : 2.0;
          int64_t s = (i * Y + j) * Z + k;
          int64_t d = ((i * Y + j) * Kz + k) * 2;
          dst[d] = pl.buf[s][0] * scale * c;
          dst[d + 1] = pl.buf[s][1] * scale * c;
        }
  }
  return out;
}

}  // namespace lofno
