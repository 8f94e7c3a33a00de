#pragma once

#include <functional>
#include <memory>

#include "lofno/fft.hpp"

namespace lofno {
namespace ad {

struct Node {
  Tensor val;
  Tensor grad;       // allocated lazily, same layout as val
  bool needs_grad = false;

  Tensor& g() {
    if (grad.v.empty()) grad = Tensor(val.shape, val.complex);
    return grad;
  }
};

using Value = std::shared_ptr<Node>;

/// Eager reverse-mode tape. Each operation computes its result immediately
/// and records a closure that scatters the output cotangent back to its
/// inputs. backward() replays the closures in reverse creation order, so
/// every node's cotangent is complete before it is consumed.
class Tape {
 public:
  Value leaf(Tensor t, bool requires_grad = true) {
    auto n = std::make_shared<Node>();
    n->val = std::move(t);
    n->needs_grad = requires_grad;
    return n;
  }
  Value constant(Tensor t) { return leaf(std::move(t), false); }

  void backward(const Value& out, const Tensor* cotangent = nullptr) {
    if (steps_.empty()) throw std::runtime_error("Tape::backward called before forward");
    if (cotangent) {
      check_shape(out->val, *cotangent, "backward");
      out->g() = *cotangent;
    } else {
      out->g().fill(1.0);
    }
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
    steps_.clear();
  }

  size_t size() const { return steps_.size(); }

  // ---- elementwise ----

  Value add(const Value& a, const Value& b) {
    check_shape(a->val, b->val, "add");
    Tensor t = a->val;
    for (size_t i = 0; i < t.v.size(); ++i) t.v[i] += b->val.v[i];
    return record({a, b}, std::move(t), [a, b](Node& o) {
      if (a->needs_grad)
        for (size_t i = 0; i < o.grad.v.size(); ++i) a->g().v[i] += o.grad.v[i];
      if (b->needs_grad)
        for (size_t i = 0; i < o.grad.v.size(); ++i) b->g().v[i] += o.grad.v[i];
    });
  }

  Value sub(const Value& a, const Value& b) {
    check_shape(a->val, b->val, "sub");
    Tensor t = a->val;
    for (size_t i = 0; i < t.v.size(); ++i) t.v[i] -= b->val.v[i];
    return record({a, b}, std::move(t), [a, b](Node& o) {
      if (a->needs_grad)
        for (size_t i = 0; i < o.grad.v.size(); ++i) a->g().v[i] += o.grad.v[i];
      if (b->needs_grad)
        for (size_t i = 0; i < o.grad.v.size(); ++i) b->g().v[i] -= o.grad.v[i];
    });
  }

  Value scale(const Value& a, double s) {
    Tensor t = a->val;
    for (double& x : t.v) x *= s;
    return record({a}, std::move(t), [a, s](Node& o) {
      if (a->needs_grad)
        for (size_t i = 0; i < o.grad.v.size(); ++i) a->g().v[i] += s * o.grad.v[i];
    });
  }

  /// Elementwise product of real tensors.
  Value mul(const Value& a, const Value& b) {
    check_shape(a->val, b->val, "mul");
    if (a->val.complex) throw std::invalid_argument("mul: real tensors only");
    Tensor t = a->val;
    for (size_t i = 0; i < t.v.size(); ++i) t.v[i] *= b->val.v[i];
    return record({a, b}, std::move(t), [a, b](Node& o) {
      if (a->needs_grad)
        for (size_t i = 0; i < o.grad.v.size(); ++i) a->g().v[i] += o.grad.v[i] * b->val.v[i];
      if (b->needs_grad)
        for (size_t i = 0; i < o.grad.v.size(); ++i) b->g().v[i] += o.grad.v[i] * a->val.v[i];
    });
  }

  /// Multiply a [C, N...] tensor by a constant [N...] mask, broadcast over
  /// the leading channel axis.
  Value mask(const Value& a, const Tensor& m) {
    if (a->val.complex) throw std::invalid_argument("mask: real tensors only");
    int64_t n = m.numel();
    if (a->val.numel() % n != 0) throw std::invalid_argument("mask: size mismatch");
    int64_t c = a->val.numel() / n;
    Tensor t = a->val;
    for (int64_t ch = 0; ch < c; ++ch)
      for (int64_t i = 0; i < n; ++i) t.v[size_t(ch * n + i)] *= m.v[size_t(i)];
    Tensor mc = m;
    return record({a}, std::move(t), [a, mc = std::move(mc), c, n](Node& o) {
      if (!a->needs_grad) return;
      for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t i = 0; i < n; ++i)
          a->g().v[size_t(ch * n + i)] += o.grad.v[size_t(ch * n + i)] * mc.v[size_t(i)];
    });
  }

  Value gelu(const Value& a) {
    Tensor t = a->val;
    for (double& x : t.v) x = 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
    return record({a}, std::move(t), [a](Node& o) {
      if (!a->needs_grad) return;
      for (size_t i = 0; i < o.grad.v.size(); ++i) {
        double x = a->val.v[i];
        double cdf = 0.5 * (1.0 + std::erf(x / std::sqrt(2.0)));
        double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
        a->g().v[i] += o.grad.v[i] * (cdf + x * pdf);
      }
    });
  }

  Value relu(const Value& a) {
    Tensor t = a->val;
    for (double& x : t.v) x = x > 0 ? x : 0.0;
    return record({a}, std::move(t), [a](Node& o) {
      if (!a->needs_grad) return;
      for (size_t i = 0; i < o.grad.v.size(); ++i)
        if (a->val.v[i] > 0) a->g().v[i] += o.grad.v[i];
    });
  }

  Value activation(const Value& a, const std::string& kind) {
    if (kind == "gelu") return gelu(a);
    if (kind == "relu") return relu(a);
    throw std::invalid_argument("activation: unknown kind " + kind);
  }

  // ---- channel ops ----

  /// Per-point channel mix: x [Cin, N...] -> [Cout, N...], W [Cout, Cin],
  /// bias c [Cout].
  Value affine(const Value& x, const Value& W, const Value& c) {
    if (W->val.shape.size() != 2) throw std::invalid_argument("affine: W must be a matrix");
    const int64_t co = W->val.shape[0], ci = W->val.shape[1];
    if (x->val.shape.empty() || x->val.shape[0] != ci)
      throw std::invalid_argument("affine: channel mismatch");
    if (c->val.numel() != co) throw std::invalid_argument("affine: bias size mismatch");
    const int64_t n = x->val.numel() / ci;
    std::vector<int64_t> os(x->val.shape);
    os[0] = co;
    Tensor t(os);
    for (int64_t o = 0; o < co; ++o) {
      double* dst = t.v.data() + o * n;
      const double bias = c->val.v[size_t(o)];
      for (int64_t p = 0; p < n; ++p) dst[p] = bias;
      for (int64_t i = 0; i < ci; ++i) {
        const double w = W->val.v[size_t(o * ci + i)];
        const double* src = x->val.v.data() + i * n;
        for (int64_t p = 0; p < n; ++p) dst[p] += w * src[p];
      }
    }
    return record({x, W, c}, std::move(t), [x, W, c, co, ci, n](Node& o) {
      for (int64_t oc = 0; oc < co; ++oc) {
        const double* go = o.grad.v.data() + oc * n;
        if (x->needs_grad)
          for (int64_t i = 0; i < ci; ++i) {
            const double w = W->val.v[size_t(oc * ci + i)];
            double* gx = x->g().v.data() + i * n;
            for (int64_t p = 0; p < n; ++p) gx[p] += w * go[p];
          }
        if (W->needs_grad)
          for (int64_t i = 0; i < ci; ++i) {
            const double* xv = x->val.v.data() + i * n;
            double acc = 0;
            for (int64_t p = 0; p < n; ++p) acc += go[p] * xv[p];
            W->g().v[size_t(oc * ci + i)] += acc;
          }
        if (c->needs_grad) {
          double acc = 0;
          for (int64_t p = 0; p < n; ++p) acc += go[p];
          c->g().v[size_t(oc)] += acc;
        }
      }
    });
  }

  /// 3D convolution, odd cubic kernel, zero padding, stride 1.
  /// x [Cin, X, Y, Z], w [Cout, Cin, k, k, k], b [Cout].
  Value conv3(const Value& x, const Value& w, const Value& b) {
    if (x->val.shape.size() != 4 || w->val.shape.size() != 5)
      throw std::invalid_argument("conv3: expected x rank 4, w rank 5");
    const int64_t ci = x->val.shape[0], X = x->val.shape[1], Y = x->val.shape[2],
                  Z = x->val.shape[3];
    const int64_t co = w->val.shape[0], k = w->val.shape[2];
    if (w->val.shape[1] != ci || w->val.shape[3] != k || w->val.shape[4] != k || k % 2 == 0)
      throw std::invalid_argument("conv3: channel/kernel mismatch");
    if (b->val.numel() != co) throw std::invalid_argument("conv3: bias size mismatch");
    const int64_t r = k / 2, n = X * Y * Z;
    Tensor t({co, X, Y, Z});
    for (int64_t oc = 0; oc < co; ++oc) {
      double* dst = t.v.data() + oc * n;
      const double bias = b->val.v[size_t(oc)];
      for (int64_t p = 0; p < n; ++p) dst[p] = bias;
      for (int64_t ic = 0; ic < ci; ++ic) {
        const double* src = x->val.v.data() + ic * n;
        const double* ker = w->val.v.data() + (oc * ci + ic) * k * k * k;
        for (int64_t dx = -r; dx <= r; ++dx)
          for (int64_t dy = -r; dy <= r; ++dy)
            for (int64_t dz = -r; dz <= r; ++dz) {
              const double wv = ker[((dx + r) * k + (dy + r)) * k + (dz + r)];
              if (wv == 0.0) continue;
              for (int64_t i = std::max<int64_t>(0, -dx); i < std::min(X, X - dx); ++i)
                for (int64_t j = std::max<int64_t>(0, -dy); j < std::min(Y, Y - dy); ++j) {
                  const int64_t z0 = std::max<int64_t>(0, -dz), z1 = std::min(Z, Z - dz);
                  double* dp = dst + (i * Y + j) * Z;
                  const double* sp = src + ((i + dx) * Y + (j + dy)) * Z + dz;
                  for (int64_t z = z0; z < z1; ++z) dp[z] += wv * sp[z];
                }
            }
      }
    }
    return record({x, w, b}, std::move(t), [x, w, b, ci, co, X, Y, Z, k, r, n](Node& o) {
      for (int64_t oc = 0; oc < co; ++oc) {
        const double* go = o.grad.v.data() + oc * n;
        if (b->needs_grad) {
          double acc = 0;
          for (int64_t p = 0; p < n; ++p) acc += go[p];
          b->g().v[size_t(oc)] += acc;
        }
        for (int64_t ic = 0; ic < ci; ++ic) {
          const double* src = x->val.v.data() + ic * n;
          const double* ker = w->val.v.data() + (oc * ci + ic) * k * k * k;
          double* gker = w->needs_grad ? w->g().v.data() + (oc * ci + ic) * k * k * k : nullptr;
          double* gx = x->needs_grad ? x->g().v.data() + ic * n : nullptr;
          for (int64_t dx = -r; dx <= r; ++dx)
            for (int64_t dy = -r; dy <= r; ++dy)
              for (int64_t dz = -r; dz <= r; ++dz) {
                const int64_t kidx = ((dx + r) * k + (dy + r)) * k + (dz + r);
                const double wv = ker[kidx];
                double wacc = 0;
                for (int64_t i = std::max<int64_t>(0, -dx); i < std::min(X, X - dx); ++i)
                  for (int64_t j = std::max<int64_t>(0, -dy); j < std::min(Y, Y - dy); ++j) {
                    const int64_t z0 = std::max<int64_t>(0, -dz), z1 = std::min(Z, Z - dz);
                    const double* gp = go + (i * Y + j) * Z;
                    const double* sp = src + ((i + dx) * Y + (j + dy)) * Z + dz;
                    double* gxp = gx ? gx + ((i + dx) * Y + (j + dy)) * Z + dz : nullptr;
                    for (int64_t z = z0; z < z1; ++z) {
                      wacc += gp[z] * sp[z];
                      if (gxp) gxp[z] += wv * gp[z];
                    }
                  }
                if (gker) gker[kidx] += wacc;
              }
        }
      }
    });
  }

  Value concat_channels(const Value& a, const Value& b) {
    if (a->val.shape.size() != b->val.shape.size() || a->val.complex || b->val.complex)
      throw std::invalid_argument("concat_channels: rank/type mismatch");
    for (size_t i = 1; i < a->val.shape.size(); ++i)
      if (a->val.shape[i] != b->val.shape[i])
        throw std::invalid_argument("concat_channels: trailing shape mismatch");
    std::vector<int64_t> os(a->val.shape);
    os[0] += b->val.shape[0];
    Tensor t(os);
    std::copy(a->val.v.begin(), a->val.v.end(), t.v.begin());
    std::copy(b->val.v.begin(), b->val.v.end(), t.v.begin() + int64_t(a->val.v.size()));
    const size_t na = a->val.v.size();
    return record({a, b}, std::move(t), [a, b, na](Node& o) {
      if (a->needs_grad)
        for (size_t i = 0; i < na; ++i) a->g().v[i] += o.grad.v[i];
      if (b->needs_grad)
        for (size_t i = 0; i < b->val.v.size(); ++i) b->g().v[i] += o.grad.v[na + i];
    });
  }

  /// Sub-voxel shuffle: [C*s^3, X, Y, Z] -> [C, sX, sY, sZ].
  Value shuffle3(const Value& a, int64_t s) {
    const auto& sh = a->val.shape;
    if (sh.size() != 4 || sh[0] % (s * s * s) != 0)
      throw std::invalid_argument("shuffle3: channel count not divisible by s^3");
    const int64_t C = sh[0] / (s * s * s), X = sh[1], Y = sh[2], Z = sh[3];
    Tensor t({C, s * X, s * Y, s * Z});
    auto src_idx = [=](int64_t c, int64_t di, int64_t dj, int64_t dk, int64_t i, int64_t j,
                       int64_t k) {
      int64_t ch = c * s * s * s + (di * s + dj) * s + dk;
      return ((ch * X + i) * Y + j) * Z + k;
    };
    auto dst_idx = [=](int64_t c, int64_t ii, int64_t jj, int64_t kk) {
      return ((c * s * X + ii) * s * Y + jj) * s * Z + kk;
    };
    for (int64_t c = 0; c < C; ++c)
      for (int64_t i = 0; i < X; ++i)
        for (int64_t di = 0; di < s; ++di)
          for (int64_t j = 0; j < Y; ++j)
            for (int64_t dj = 0; dj < s; ++dj)
              for (int64_t k = 0; k < Z; ++k)
                for (int64_t dk = 0; dk < s; ++dk)
                  t.v[size_t(dst_idx(c, i * s + di, j * s + dj, k * s + dk))] =
                      a->val.v[size_t(src_idx(c, di, dj, dk, i, j, k))];
    return record({a}, std::move(t), [a, s, C, X, Y, Z, src_idx, dst_idx](Node& o) {
      if (!a->needs_grad) return;
      for (int64_t c = 0; c < C; ++c)
        for (int64_t i = 0; i < X; ++i)
          for (int64_t di = 0; di < s; ++di)
            for (int64_t j = 0; j < Y; ++j)
              for (int64_t dj = 0; dj < s; ++dj)
                for (int64_t k = 0; k < Z; ++k)
                  for (int64_t dk = 0; dk < s; ++dk)
                    a->g().v[size_t(src_idx(c, di, dj, dk, i, j, k))] +=
                        o.grad.v[size_t(dst_idx(c, i * s + di, j * s + dj, k * s + dk))];
    });
  }

  // ---- spectral ops ----

  Value fft3(const Value& x) {
    const int64_t Z = x->val.shape.back();
    Tensor t = lofno::fft3(x->val);
    return record({x}, std::move(t), [x, Z](Node& o) {
      if (!x->needs_grad) return;
      Tensor gx = fft3_adjoint(o.grad, Z);
      for (size_t i = 0; i < gx.v.size(); ++i) x->g().v[i] += gx.v[i];
    });
  }

  Value ifft3(const Value& y) {
    Tensor t = lofno::ifft3(y->val);
    return record({y}, std::move(t), [y](Node& o) {
      if (!y->needs_grad) return;
      Tensor gy = ifft3_adjoint(o.grad);
      for (size_t i = 0; i < gy.v.size(); ++i) y->g().v[i] += gy.v[i];
    });
  }

  /// Per-mode channel mixing of a half spectrum. h [d, X, Y, Kz] complex,
  /// w [d, d, Nm, Nm, Nm] complex indexed by (|kx|, |ky|, kz); modes with
  /// any frequency >= Nm are zeroed. Z is the full spatial extent of the
  /// last axis (needed for the Nyquist bound).
  Value spectral_multiply(const Value& h, const Value& w, int64_t Z) {
    const auto& sh = h->val.shape;
    if (sh.size() != 4 || !h->val.complex || !w->val.complex)
      throw std::invalid_argument("spectral_multiply: expected complex [d,X,Y,Kz] and weights");
    const int64_t d = sh[0], X = sh[1], Y = sh[2], Kz = sh[3];
    const int64_t Nm = w->val.shape[2];
    if (w->val.shape[0] != d || w->val.shape[1] != d || w->val.shape[3] != Nm ||
        w->val.shape[4] != Nm)
      throw std::invalid_argument("spectral_multiply: weight shape mismatch");
    const int64_t nyq = std::min({X / 2, Y / 2, Z / 2}) + 1;
    if (Nm > nyq)
      throw std::invalid_argument("spectral_multiply: N_m exceeds grid Nyquist (" +
                                  std::to_string(nyq) + ")");
    Tensor t(sh, /*cplx=*/true);
    // captures by value: this lambda outlives the forward call inside the
    // recorded backward closure
    auto mode_weight_base = [X, Y, Nm](int64_t kx, int64_t ky, int64_t kz) -> int64_t {
      int64_t ax = std::min(kx, X - kx), ay = std::min(ky, Y - ky);
      if (ax >= Nm || ay >= Nm || kz >= Nm) return -1;
      return (ax * Nm + ay) * Nm + kz;
    };
    auto run = [=](const Tensor& hv, const Tensor& wv, Tensor& out, bool conj_w) {
      const int64_t nmode = X * Y * Kz;
      for (int64_t kx = 0; kx < X; ++kx)
        for (int64_t ky = 0; ky < Y; ++ky)
          for (int64_t kz = 0; kz < Kz; ++kz) {
            int64_t mb = mode_weight_base(kx, ky, kz);
            if (mb < 0) continue;
            int64_t p = (kx * Y + ky) * Kz + kz;
            for (int64_t oi = 0; oi < d; ++oi) {
              double re = 0, im = 0;
              for (int64_t ii = 0; ii < d; ++ii) {
                int64_t widx = conj_w ? ((ii * d + oi) * Nm * Nm * Nm + mb) * 2
                                      : ((oi * d + ii) * Nm * Nm * Nm + mb) * 2;
                double wr = wv.v[size_t(widx)], wi = wv.v[size_t(widx + 1)];
                if (conj_w) wi = -wi;
                double hr = hv.v[size_t((ii * nmode + p) * 2)],
                       hi = hv.v[size_t((ii * nmode + p) * 2 + 1)];
                re += wr * hr - wi * hi;
                im += wr * hi + wi * hr;
              }
              out.v[size_t((oi * nmode + p) * 2)] = re;
              out.v[size_t((oi * nmode + p) * 2 + 1)] = im;
            }
          }
    };
    run(h->val, w->val, t, false);
    return record({h, w}, std::move(t),
                  [h, w, d, X, Y, Kz, Nm, mode_weight_base, run](Node& o) {
      const int64_t nmode = X * Y * Kz;
      if (h->needs_grad) {
        Tensor gh(h->val.shape, true);
        run(o.grad, w->val, gh, /*conj_w=*/true);
        for (size_t i = 0; i < gh.v.size(); ++i) h->g().v[i] += gh.v[i];
      }
      if (w->needs_grad) {
        for (int64_t kx = 0; kx < X; ++kx)
          for (int64_t ky = 0; ky < Y; ++ky)
            for (int64_t kz = 0; kz < Kz; ++kz) {
              int64_t mb = mode_weight_base(kx, ky, kz);
              if (mb < 0) continue;
              int64_t p = (kx * Y + ky) * Kz + kz;
              for (int64_t oi = 0; oi < d; ++oi) {
                double gr = o.grad.v[size_t((oi * nmode + p) * 2)],
                       gi = o.grad.v[size_t((oi * nmode + p) * 2 + 1)];
                for (int64_t ii = 0; ii < d; ++ii) {
                  double hr = h->val.v[size_t((ii * nmode + p) * 2)],
                         hi = h->val.v[size_t((ii * nmode + p) * 2 + 1)];
                  // grad_W = gbar * conj(h)
                  int64_t widx = ((oi * d + ii) * Nm * Nm * Nm + mb) * 2;
                  w->g().v[size_t(widx)] += gr * hr + gi * hi;
                  w->g().v[size_t(widx + 1)] += gi * hr - gr * hi;
                }
              }
            }
      }
    });
  }

  // ---- reductions ----

  Value sum(const Value& a) {
    double s = 0;
    for (double x : a->val.v) s += x;
    Tensor t({1});
    t.v[0] = s;
    return record({a}, std::move(t), [a](Node& o) {
      if (!a->needs_grad) return;
      for (double& g : a->g().v) g += o.grad.v[0];
    });
  }

  /// Dot product with a constant tensor (scalar output); handy as a generic
  /// scalarizer in gradient checks.
  Value dot_const(const Value& a, const Tensor& r) {
    if (a->val.v.size() != r.v.size()) throw std::invalid_argument("dot_const: size mismatch");
    double s = 0;
    for (size_t i = 0; i < r.v.size(); ++i) s += a->val.v[i] * r.v[i];
    Tensor t({1});
    t.v[0] = s;
    Tensor rc = r;
    return record({a}, std::move(t), [a, rc = std::move(rc)](Node& o) {
      if (!a->needs_grad) return;
      for (size_t i = 0; i < rc.v.size(); ++i) a->g().v[i] += o.grad.v[0] * rc.v[i];
    });
  }

  /// Relative-loss reduction: pred and truth are [3, T, X, Y, Z]-like with
  /// the vector axis leading; site_weight is [T*X*Y*Z] (0 at excluded
  /// sites, 1/max(|u|, eps) at kept ones). Returns sum over sites of
  /// site_weight * ||pred - truth||_2.
  Value weighted_vec_norm_sum(const Value& pred, const Tensor& truth, const Tensor& site_weight) {
    if (pred->val.numel() != truth.numel() || pred->val.complex || truth.complex)
      throw std::invalid_argument("weighted_vec_norm_sum: size mismatch");
    if (pred->val.numel() % 3 != 0)
      throw std::invalid_argument("weighted_vec_norm_sum: leading axis must factor as 3");
    const int64_t n = pred->val.numel() / 3;
    if (site_weight.numel() != n)
      throw std::invalid_argument("weighted_vec_norm_sum: weight size mismatch");
    double s = 0;
    for (int64_t p = 0; p < n; ++p) {
      double wq = site_weight.v[size_t(p)];
      if (wq == 0) continue;
      double d0 = pred->val.v[size_t(p)] - truth.v[size_t(p)];
      double d1 = pred->val.v[size_t(n + p)] - truth.v[size_t(n + p)];
      double d2 = pred->val.v[size_t(2 * n + p)] - truth.v[size_t(2 * n + p)];
      s += wq * std::sqrt(d0 * d0 + d1 * d1 + d2 * d2);
    }
    Tensor t({1});
    t.v[0] = s;
    Tensor tc = truth, wc = site_weight;
    return record({pred}, std::move(t),
                  [pred, tc = std::move(tc), wc = std::move(wc), n](Node& o) {
      if (!pred->needs_grad) return;
      const double go = o.grad.v[0];
      for (int64_t p = 0; p < n; ++p) {
        double wq = wc.v[size_t(p)];
        if (wq == 0) continue;
        double d0 = pred->val.v[size_t(p)] - tc.v[size_t(p)];
        double d1 = pred->val.v[size_t(n + p)] - tc.v[size_t(n + p)];
        double d2 = pred->val.v[size_t(2 * n + p)] - tc.v[size_t(2 * n + p)];
        double nn = std::sqrt(d0 * d0 + d1 * d1 + d2 * d2);
        if (nn == 0) continue;
        double f = go * wq / nn;
        pred->g().v[size_t(p)] += f * d0;
        pred->g().v[size_t(n + p)] += f * d1;
        pred->g().v[size_t(2 * n + p)] += f * d2;
      }
    });
  }

 private:
  Value record(std::vector<Value> inputs, Tensor out, std::function<void(Node&)> back) {
    auto n = std::make_shared<Node>();
    n->val = std::move(out);
    if (!n->val.all_finite()) throw std::runtime_error("tape: non-finite value produced");
    for (const auto& in : inputs) n->needs_grad = n->needs_grad || in->needs_grad;
    if (n->needs_grad)
      steps_.push_back([n, back = std::move(back)]() {
        if (!n->grad.v.empty()) back(*n);
      });
    return n;
  }

  std::vector<std::function<void()>> steps_;
};

}  // namespace ad
}  // namespace lofno
