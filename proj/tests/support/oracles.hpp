#pragma once

// Independent reference computations for the tests. Nothing here calls into
// the code paths it is used to check (no Graph, no library matmul, no power
// iteration).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "nrs/rng.hpp"
#include "nrs/tensor.hpp"

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<std::vector<double>>;

inline Mat triple_loop_matmul(const Mat& a, const Mat& b) {
  Mat c(a.size(), Vec(b.front().size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.front().size(); ++j) {
      long double s = 0.0L;
      for (std::size_t k = 0; k < b.size(); ++k) s += static_cast<long double>(a[i][k]) * b[k][j];
      c[i][j] = static_cast<double>(s);
    }
  return c;
}

/// Central differences of a scalar function, one coordinate at a time.
inline Vec fd_gradient(const std::function<double(const Vec&)>& f, Vec x, double h = 1e-5) {
  Vec g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    x[i] = xi + h;
    const double fp = f(x);
    x[i] = xi - h;
    const double fm = f(x);
    x[i] = xi;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor).
inline double max_rel_error(const Vec& a, const Vec& b, double floor = 1e-3) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

/// Kahan-Babuska (Neumaier) summation.
inline double compensated_sum(const Vec& v) {
  double s = 0.0, c = 0.0;
  for (double x : v) {
    const double t = s + x;
    c += std::abs(s) >= std::abs(x) ? (s - t) + x : (x - t) + s;
    s = t;
  }
  return s + c;
}

inline long double pairwise_sum(const Vec& v, std::size_t lo, std::size_t hi) {
  if (hi - lo <= 2) {
    long double s = 0.0L;
    for (std::size_t i = lo; i < hi; ++i) s += v[i];
    return s;
  }
  const std::size_t mid = lo + (hi - lo) / 2;
  return pairwise_sum(v, lo, mid) + pairwise_sum(v, mid, hi);
}

/// Dense Hessian of a scalar function by entrywise second differences.
inline Mat fd_hessian(const std::function<double(const Vec&)>& f, Vec x, double h = 1e-3) {
  const std::size_t n = x.size();
  Mat H(n, Vec(n));
  auto at = [&](std::size_t i, double di, std::size_t j, double dj) {
    const double xi = x[i], xj = x[j];
    x[i] += di;
    x[j] += dj;
    const double v = f(x);
    x[i] = xi;
    x[j] = xj;
    return v;
  };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) {
      const double v = (at(i, h, j, h) - at(i, h, j, -h) - at(i, -h, j, h) + at(i, -h, j, -h)) / (4.0 * h * h);
      H[i][j] = H[j][i] = v;
    }
  return H;
}

inline Vec mat_vec(const Mat& m, const Vec& v) {
  Vec out(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    long double s = 0.0L;
    for (std::size_t j = 0; j < v.size(); ++j) s += static_cast<long double>(m[i][j]) * v[j];
    out[i] = static_cast<double>(s);
  }
  return out;
}

/// Cyclic Jacobi rotations; returns all eigenvalues sorted ascending.
inline Vec jacobi_eigenvalues(Mat a, int sweeps = 100) {
  const std::size_t n = a.size();
  for (int s = 0; s < sweeps; ++s) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a[p][q]) < 1e-300) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), sn = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - sn * akq;
          a[k][q] = sn * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - sn * aqk;
          a[q][k] = sn * apk + c * aqk;
        }
      }
  }
  Vec ev(n);
  for (std::size_t i = 0; i < n; ++i) ev[i] = a[i][i];
  std::sort(ev.begin(), ev.end());
  return ev;
}

inline Mat random_symmetric(std::size_t n, nrs::RngStream& rng) {
  Mat m(n, Vec(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) m[i][j] = m[j][i] = rng.uniform(-1.0, 1.0);
  return m;
}

inline nrs::Tensor to_tensor(const Mat& m) {
  std::vector<double> data;
  for (const auto& r : m) data.insert(data.end(), r.begin(), r.end());
  return nrs::Tensor(nrs::Shape{m.size(), m.front().size()}, std::move(data));
}

inline Vec uniform_vec(std::size_t n, nrs::RngStream& rng, double lo = -2.0, double hi = 2.0) {
  Vec v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

}  // namespace oracle
