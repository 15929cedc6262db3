#pragma once

// Dense row-major tensors plus the small numeric kernel everything else
// builds on: matmul, thin SVD (one-sided Jacobi), normalization, elementwise
// ops and a central-difference gradient used by the test suites.
//
// Storage is 32-bit float for the public `Tensor` type; accumulation inside
// every kernel is 64-bit. The same templates instantiated with double back
// the training tape.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace strata {

using Shape = std::vector<std::int64_t>;

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) {
    if (d < 0) throw std::invalid_argument("negative axis length in shape " + shape_str(s));
    n *= d;
  }
  return n;
}

template <typename T>
class TensorT {
 public:
  TensorT() = default;

  explicit TensorT(Shape shape) : shape_(std::move(shape)), data_(shape_numel(shape_), T(0)) {}

  TensorT(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != static_cast<std::int64_t>(data_.size()))
      throw std::invalid_argument("tensor data size " + std::to_string(data_.size()) +
                                  " does not match shape " + shape_str(shape_));
  }

  static TensorT full(Shape shape, T v) {
    TensorT t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), v);
    return t;
  }

  static TensorT identity(std::int64_t n) {
    TensorT t(Shape{n, n});
    for (std::int64_t i = 0; i < n; ++i) t.data_[i * n + i] = T(1);
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::int64_t rank() const { return static_cast<std::int64_t>(shape_.size()); }
  std::int64_t dim(std::int64_t i) const { return shape_.at(static_cast<std::size_t>(i)); }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  T operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  // 2-D accessors; callers guarantee rank()==2.
  T& at2(std::int64_t r, std::int64_t c) { return data_[static_cast<std::size_t>(r * dim(1) + c)]; }
  T at2(std::int64_t r, std::int64_t c) const { return data_[static_cast<std::size_t>(r * dim(1) + c)]; }

  bool same_shape(const TensorT& o) const { return shape_ == o.shape_; }

 private:
  Shape shape_;
  std::vector<T> data_;
};

using Tensor = TensorT<float>;
using DTensor = TensorT<double>;

template <typename T>
inline void check_finite(const TensorT<T>& t, const char* where) {
  for (std::int64_t i = 0; i < t.size(); ++i)
    if (!std::isfinite(static_cast<double>(t[i])))
      throw std::runtime_error(std::string(where) + ": non-finite value at flat index " + std::to_string(i));
}

template <typename T>
inline TensorT<T> reshape(const TensorT<T>& t, Shape shape) {
  if (shape_numel(shape) != t.size())
    throw std::invalid_argument("reshape " + shape_str(t.shape()) + " -> " + shape_str(shape) +
                                " changes element count");
  return TensorT<T>(std::move(shape), t.vec());
}

inline DTensor widen(const Tensor& t) {
  DTensor out(t.shape());
  for (std::int64_t i = 0; i < t.size(); ++i) out[i] = static_cast<double>(t[i]);
  return out;
}

inline Tensor narrow(const DTensor& t) {
  Tensor out(t.shape());
  for (std::int64_t i = 0; i < t.size(); ++i) out[i] = static_cast<float>(t[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Elementwise and reduction helpers

template <typename T>
inline TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
  if (!a.same_shape(b))
    throw std::invalid_argument("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  TensorT<T> out(a.shape());
  for (std::int64_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

template <typename T>
inline TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
  if (!a.same_shape(b))
    throw std::invalid_argument("sub: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  TensorT<T> out(a.shape());
  for (std::int64_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

template <typename T>
inline TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
  if (!a.same_shape(b))
    throw std::invalid_argument("mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  TensorT<T> out(a.shape());
  for (std::int64_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

template <typename T>
inline TensorT<T> scale(const TensorT<T>& a, double s) {
  TensorT<T> out(a.shape());
  for (std::int64_t i = 0; i < a.size(); ++i) out[i] = static_cast<T>(static_cast<double>(a[i]) * s);
  return out;
}

template <typename T>
inline TensorT<T> relu(const TensorT<T>& x) {
  TensorT<T> out(x.shape());
  for (std::int64_t i = 0; i < x.size(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
  return out;
}

template <typename T>
inline double max_abs(const TensorT<T>& t) {
  double m = 0.0;
  for (std::int64_t i = 0; i < t.size(); ++i) m = std::max(m, std::fabs(static_cast<double>(t[i])));
  return m;
}

template <typename T>
inline double max_abs_diff(const TensorT<T>& a, const TensorT<T>& b) {
  if (!a.same_shape(b))
    throw std::invalid_argument("max_abs_diff: shape mismatch");
  double m = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::fabs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  return m;
}

template <typename T>
inline double sum_all(const TensorT<T>& t) {
  double s = 0.0;
  for (std::int64_t i = 0; i < t.size(); ++i) s += static_cast<double>(t[i]);
  return s;
}

template <typename T>
inline double sq_norm(const TensorT<T>& t) {
  double s = 0.0;
  for (std::int64_t i = 0; i < t.size(); ++i) {
    double v = static_cast<double>(t[i]);
    s += v * v;
  }
  return s;
}

// Walks an axis of an N-D tensor as (outer, axis, inner) index blocks.
template <typename T, typename Fn>
inline void for_each_lane(const Shape& shape, std::int64_t axis, Fn&& fn) {
  const auto r = static_cast<std::int64_t>(shape.size());
  if (axis < 0 || axis >= r) throw std::invalid_argument("axis out of range");
  std::int64_t outer = 1, inner = 1;
  for (std::int64_t i = 0; i < axis; ++i) outer *= shape[static_cast<std::size_t>(i)];
  for (std::int64_t i = axis + 1; i < r; ++i) inner *= shape[static_cast<std::size_t>(i)];
  const std::int64_t n = shape[static_cast<std::size_t>(axis)];
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t in = 0; in < inner; ++in)
      fn(o * n * inner + in, inner, n);  // base offset, stride, lane length
}

템template <typename T>
inline TensorT<T> softmax(const TensorT<T>& x, std::int64_t axis) {
  TensorT<T> out(x.shape());
  for_each_lane<T>(x.shape(), axis, [&](std::int64_t base, std::int64_t stride, std::int64_t n) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::int64_t i = 0; i < n; ++i) mx = std::max(mx, static_cast<double>(x[base + i * stride]));
    double denom = 0.0;
    for (std::int64_t i = 0; i < n; ++i) denom += std::exp(static_cast<double>(x[base + i * stride]) - mx);
    for (std::int64_t i = 0; i < n; ++i)
      out[base + i * stride] = static_cast<T>(std::exp(static_cast<double>(x[base + i * stride]) - mx) / denom);
  });
  return out;
}

template <typename T>
inline TensorT<T> rms_norm(const TensorT<T>& x, std::int64_t axis, double eps) {
  if (eps <= 0) throw std::invalid_argument("rms_norm: eps must be positive");
  TensorT<T> out(x.shape());
  for_each_lane<T>(x.shape(), axis, [&](std::int64_t base, std::int64_t stride, std::int64_t n) {
    double ms = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
      double v = static_cast<double>(x[base + i * stride]);
      ms += v * v;
    }
    double r = 1.0 / std::sqrt(ms / static_cast<double>(n) + eps);
    for (std::int64_t i = 0; i < n; ++i)
      out[base + i * stride] = static_cast<T>(static_cast<double>(x[base + i * stride]) * r);
  });
  return out;
}

// ---------------------------------------------------------------------------
// 2-D linear algebra

template <typename T>
inline TensorT<T> transpose(const TensorT<T>& a) {
  if (a.rank() != 2) throw std::invalid_argument("transpose: rank-2 tensor required");
  const std::int64_t m = a.dim(0), n = a.dim(1);
  TensorT<T> out(Shape{n, m});
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
  return out;
}

// Row-major matmul with 64-bit accumulation. `madds`, when given, is
// incremented by the m*n*k multiply-add count.
template <typename T>
inline TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b, std::uint64_t* madds = nullptr) {
  if (a.rank() != 2 || b.rank() != 2)
    throw std::invalid_argument("matmul: rank-2 tensors required");
  if (a.dim(1) != b.dim(0))
    throw std::invalid_argument("matmul: inner dimensions disagree " + shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  TensorT<T> out(Shape{m, n});
  std::vector<double> acc(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < m; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::int64_t p = 0; p < k; ++p) {
      const double aip = static_cast<double>(a[i * k + p]);
      const T* brow = b.data() + p * n;
      for (std::int64_t j = 0; j < n; ++j) acc[static_cast<std::size_t>(j)] += aip * static_cast<double>(brow[j]);
    }
    for (std::int64_t j = 0; j < n; ++j) out[i * n + j] = static_cast<T>(acc[static_cast<std::size_t>(j)]);
  }
  if (madds) *madds += static_cast<std::uint64_t>(m) * static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(k);
  return out;
}

// ---------------------------------------------------------------------------
// Thin SVD via one-sided Jacobi on the columns. Sweep cap and off-diagonal
// tolerance follow the module defaults (60 sweeps, 1e-10); the work happens
// in double regardless of T.

template <typename T>
struct SvdFactorsT {
  TensorT<T> U;   // m x r, orthonormal columns
  TensorT<T> S;   // r, non-increasing, >= 0
  TensorT<T> Vt;  // r x n, orthonormal rows
};

using SvdFactors = SvdFactorsT<float>;

namespace detail {

inline void jacobi_orthogonalize(std::vector<double>& w, std::vector<double>& v, std::int64_t m, std::int64_t n,
                                 int max_sweeps, double tol) {
  // w: m x n column-major, v: n x n column-major (accumulates rotations).
  auto col = [&](std::vector<double>& mat, std::int64_t rows, std::int64_t j) { return mat.data() + j * rows; };
  bool converged = false;
  for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
    converged = true;
    for (std::int64_t p = 0; p < n - 1; ++p) {
      for (std::int64_t q = p + 1; q < n; ++q) {
        double* wp = col(w, m, p);
        double* wq = col(w, m, q);
        double app = 0.0, aqq = 0.0, apq = 0.0;
        for (std::int64_t i = 0; i < m; ++i) {
          app += wp[i] * wp[i];
          aqq += wq[i] * wq[i];
          apq += wp[i] * wq[i];
        }
        const double denom = std::sqrt(app * aqq);
        if (denom == 0.0 || std::fabs(apq) <= tol * denom) continue;
        converged = false;
        const double zeta = (aqq - app) / (2.0 * apq);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::int64_t i = 0; i < m; ++i) {
          const double wpi = wp[i], wqi = wq[i];
          wp[i] = c * wpi - s * wqi;
          wq[i] = s * wpi + c * wqi;
        }
        double* vp = col(v, n, p);
        double* vq = col(v, n, q);
        for (std::int64_t i = 0; i < n; ++i) {
          const double vpi = vp[i], vqi = vq[i];
          vp[i] = c * vpi - s * vqi;
          vq[i] = s * vpi + c * vqi;
        }
      }
    }
    if (sweep == max_sweeps - 1 && !converged)
      throw std::runtime_error("svd_thin: Jacobi sweeps did not converge (ill-conditioned input)");
  }
}

}  // namespace detail

template <typename T>
inline SvdFactorsT<T> svd_thin(const TensorT<T>& a, int max_sweeps = 60, double tol = 1e-10) {
  if (a.rank() != 2) throw std::invalid_argument("svd_thin: rank-2 tensor required");
  const std::int64_t m = a.dim(0), n = a.dim(1);
  if (m < 1 || n < 1) throw std::invalid_argument("svd_thin: empty matrix");
  if (m < n) {
    auto f = svd_thin(transpose(a), max_sweeps, tol);
    return SvdFactorsT<T>{transpose(f.Vt), f.S, transpose(f.U)};
  }

  std::vector<double> w(static_cast<std::size_t>(m * n));
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j) w[static_cast<std::size_t>(j * m + i)] = static_cast<double>(a[i * n + j]);
  std::vector<double> v(static_cast<std::size_t>(n * n), 0.0);
  for (std::int64_t j = 0; j < n; ++j) v[static_cast<std::size_t>(j * n + j)] = 1.0;

  detail::jacobi_orthogonalize(w, v, m, n, max_sweeps, tol);

  std::vector<double> sing(static_cast<std::size_t>(n), 0.0);
  double smax = 0.0;
  for (std::int64_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::int64_t i = 0; i < m; ++i) {
      double wv = w[static_cast<std::size_t>(j * m + i)];
      s += wv * wv;
    }
    sing[static_cast<std::size_t>(j)] = std::sqrt(s);
    smax = std::max(smax, sing[static_cast<std::size_t>(j)]);
  }
  // Snap numerically-zero singular values to exact zero.
  const double cutoff = smax * static_cast<double>(std::max(m, n)) * std::numeric_limits<double>::epsilon();
  for (auto& s : sing)
    if (s <= cutoff) s = 0.0;

  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  for (std::int64_t j = 0; j < n; ++j) order[static_cast<std::size_t>(j)] = j;
  std::stable_sort(order.begin(), order.end(), [&](std::int64_t x, std::int64_t y) {
    return sing[static_cast<std::size_t>(x)] > sing[static_cast<std::size_t>(y)];
  });

  TensorT<T> U(Shape{m, n});
  TensorT<T> S(Shape{n});
  TensorT<T> Vt(Shape{n, n});
  std::vector<std::vector<double>> ucols;  // double copies for the completion step
  ucols.reserve(static_cast<std::size_t>(n));
  for (std::int64_t jj = 0; jj < n; ++jj) {
    const std::int64_t j = order[static_cast<std::size_t>(jj)];
    const double s = sing[static_cast<std::size_t>(j)];
    S[jj] = static_cast<T>(s);
    std::vector<double> uc(static_cast<std::size_t>(m), 0.0);
    if (s > 0.0)
      for (std::int64_t i = 0; i < m; ++i) uc[static_cast<std::size_t>(i)] = w[static_cast<std::size_t>(j * m + i)] / s;
    ucols.push_back(std::move(uc));
    for (std::int64_t i = 0; i < n; ++i) Vt[jj * n + i] = static_cast<T>(v[static_cast<std::size_t>(j * n + i)]);
  }

  // Orthonormal completion of U columns belonging to zero singular values.
  for (std::int64_t jj = 0; jj < n; ++jj) {
    if (S[jj] > T(0)) continue;
    std::vector<double>& uc = ucols[static_cast<std::size_t>(jj)];
    for (std::int64_t seed = 0; seed < m; ++seed) {
      std::fill(uc.begin(), uc.end(), 0.0);
      uc[static_cast<std::size_t>(seed)] = 1.0;
      for (std::int64_t kk = 0; kk < n; ++kk) {
        if (kk == jj) continue;
        const auto& other = ucols[static_cast<std::size_t>(kk)];
        double d = 0.0;
        for (std::int64_t i = 0; i < m; ++i) d += uc[static_cast<std::size_t>(i)] * other[static_cast<std::size_t>(i)];
        for (std::int64_t i = 0; i < m; ++i) uc[static_cast<std::size_t>(i)] -= d * other[static_cast<std::size_t>(i)];
      }
      double norm = 0.0;
      for (double x : uc) norm += x * x;
      norm = std::sqrt(norm);
      if (norm > 0.5) {
        for (double& x : uc) x /= norm;
        break;
      }
    }
  }

  for (std::int64_t jj = 0; jj < n; ++jj)
    for (std::int64_t i = 0; i < m; ++i) U[i * n + jj] = static_cast<T>(ucols[static_cast<std::size_t>(jj)][static_cast<std::size_t>(i)]);
  return SvdFactorsT<T>{std::move(U), std::move(S), std::move(Vt)};
}

// Moore-Penrose pseudoinverse from the thin SVD. Singular values at or below
// `threshold` are treated as zero.
template <typename T>
inline TensorT<T> pinv_matrix(const TensorT<T>& a, double threshold = 1e-6) {
  auto f = svd_thin(a);
  const std::int64_t r = f.S.size();
  TensorT<T> v = transpose(f.Vt);              // n x r
  TensorT<T> ut = transpose(f.U);              // r x m
  for (std::int64_t j = 0; j < r; ++j) {
    const double s = static_cast<double>(f.S[j]);
    const double inv = s > threshold ? 1.0 / s : 0.0;
    for (std::int64_t i = 0; i < ut.dim(1); ++i) ut[j * ut.dim(1) + i] = static_cast<T>(static_cast<double>(ut[j * ut.dim(1) + i]) * inv);
  }
  return matmul(v, ut);  // n x m
}

// ---------------------------------------------------------------------------
// Central-difference gradient; test oracle only.

inline Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double h) {
  if (h < 1e-5 || h > 1e-2) throw std::invalid_argument("finite_diff_grad: h outside [1e-5, 1e-2]");
  Tensor g(x.shape());
  Tensor probe = x;
  for (std::int64_t i = 0; i < x.size(); ++i) {
    const float orig = probe[i];
    probe[i] = orig + static_cast<float>(h);
    const double fp = f(probe);
    probe[i] = orig - static_cast<float>(h);
    const double fm = f(probe);
    probe[i] = orig;
    g[i] = static_cast<float>((fp - fm) / (2.0 * h));
  }
  return g;
}

}  // namespace strata
