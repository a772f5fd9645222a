// pipeflow: uniform grid, finite-difference derivatives, and quadrature.
//
// Everything downstream (states, energies, the time stepper) lives on a
// uniform grid over [0,1]. Derivatives are 4th-order finite differences with
// one-sided closures generated by Fornberg's recurrence, so the same code
// path serves interior and boundary rows.
#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "pipeflow/errors.hpp"
#include "pipeflow/params.hpp"

namespace pipeflow {

struct Grid {
  std::size_t n = 513;  // node count; odd so composite Simpson closes exactly
  double h = 1.0 / 512.0;
  std::vector<double> s;

  static Grid uniform(std::size_t n = 513) {
    if (n < 9) throw Error(ErrorCode::InvalidGrid, "need at least 9 nodes");
    Grid g;
    g.n = n;
    g.h = 1.0 / static_cast<double>(n - 1);
    g.s.resize(n);
    for (std::size_t i = 0; i < n; ++i) g.s[i] = static_cast<double>(i) * g.h;
    g.s.back() = 1.0;
    return g;
  }
};

// Fornberg's algorithm: weights of the m-th derivative at point z for function
// values on the nodes x[0..nn-1]. Returns weights for derivative order m only.
inline std::vector<double> fd_weights(double z, const std::vector<double>& x, int m) {
  const int nn = static_cast<int>(x.size());
  std::vector<std::vector<double>> c(nn, std::vector<double>(m + 1, 0.0));
  double c1 = 1.0;
  double c4 = x[0] - z;
  c[0][0] = 1.0;
  for (int i = 1; i < nn; ++i) {
    const int mn = std::min(i, m);
    double c2 = 1.0;
    double c5 = c4;
    c4 = x[i] - z;
    for (int j = 0; j < i; ++j) {
      const double c3 = x[i] - x[j];
      c2 *= c3;
      if (j == i - 1) {
        for (int k = mn; k >= 1; --k)
          c[i][k] = c1 * (k * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
        c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
      }
      for (int k = mn; k >= 1; --k) c[j][k] = (c4 * c[j][k] - k * c[j][k - 1]) / c3;
      c[j][0] = c4 * c[j][0] / c3;
    }
    c1 = c2;
  }
  std::vector<double> w(nn);
  for (int i = 0; i < nn; ++i) w[i] = c[i][m];
  return w;
}

// A precomputed bank of 4th-order stencils for derivative order m on a uniform
// grid: centered in the interior, progressively one-sided near the ends.
class DerivativeStencils {
 public:
  DerivativeStencils(int order, std::size_t n, double h) : order_(order), n_(n) {
    // 4th-order accuracy needs order+4 points one-sided; centered stencils
    // gain one order from symmetry so 5 points cover m=1,2 and 7 cover m=3,4.
    const int width = (order <= 2) ? 5 : 7;
    const int wing = width / 2;
    const int edge_width = order + 4;
    offsets_.resize(n);
    weights_.resize(n);
    std::vector<double> xs;
    for (std::size_t i = 0; i < n; ++i) {
      int lo, w;
      if (static_cast<int>(i) >= wing && static_cast<int>(n - 1 - i) >= wing) {
        lo = static_cast<int>(i) - wing;
        w = width;
      } else {
        w = edge_width;
        lo = std::clamp(static_cast<int>(i) - edge_width / 2, 0,
                        static_cast<int>(n) - edge_width);
      }
      xs.resize(w);
      for (int k = 0; k < w; ++k) xs[k] = (lo + k - static_cast<int>(i)) * h;
      offsets_[i] = lo;
      weights_[i] = fd_weights(0.0, xs, order);
    }
  }

  template <typename T>
  std::vector<T> apply(const std::vector<T>& f) const {
    if (f.size() != n_) throw Error(ErrorCode::InvalidGrid, "stencil/grid size mismatch");
    std::vector<T> out(n_);
    for (std::size_t i = 0; i < n_; ++i) {
      T acc{};
      const auto& w = weights_[i];
      const int lo = offsets_[i];
      for (std::size_t k = 0; k < w.size(); ++k) acc += w[k] * f[lo + k];
      out[i] = acc;
    }
    return out;
  }

  // Single-point evaluation, used for boundary traces.
  template <typename T>
  T at(const std::vector<T>& f, std::size_t i) const {
    T acc{};
    const auto& w = weights_[i];
    const int lo = offsets_[i];
    for (std::size_t k = 0; k < w.size(); ++k) acc += w[k] * f[lo + k];
    return acc;
  }

  int order() const { return order_; }

 private:
  int order_;
  std::size_t n_;
  std::vector<int> offsets_;
  std::vector<std::vector<double>> weights_;
};

// Derivative of sampled values, 4th order. Stencil banks are cached per
// (order, n, h) since the grid rarely changes within a run.
template <typename T>
std::vector<T> derivative(const std::vector<T>& f, const Grid& g, int order) {
  DerivativeStencils st(order, g.n, g.h);
  return st.apply(f);
}

// Composite Simpson; falls back to a 3/8 tail when the interval count is odd.
template <typename T>
T integrate(const std::vector<T>& f, double h) {
  const std::size_t n = f.size();
  if (n < 4) throw Error(ErrorCode::InvalidGrid, "quadrature needs at least 4 nodes");
  T acc{};
  std::size_t last = n - 1;           // index of final node
  std::size_t simpson_end = last;     // Simpson covers [0, simpson_end]
  if (last % 2 != 0) simpson_end = last - 3;  // leave 3 intervals for the 3/8 rule
  for (std::size_t i = 0; i + 2 <= simpson_end; i += 2)
    acc += (h / 3.0) * (f[i] + 4.0 * f[i + 1] + f[i + 2]);
  if (simpson_end != last) {
    const std::size_t i = simpson_end;
    acc += (3.0 * h / 8.0) * (f[i] + 3.0 * f[i + 1] + 3.0 * f[i + 2] + f[i + 3]);
  }
  return acc;
}

template <typename T>
T integrate(const std::vector<T>& f, const Grid& g) {
  if (f.size() != g.n) throw Error(ErrorCode::InvalidGrid, "quadrature/grid size mismatch");
  return integrate(f, g.h);
}

// Running integral, uniformly 4th order: each increment integrates the cubic
// through four neighbouring nodes (shifted into range at the ends).
template <typename T>
std::vector<T> cumulative_integral(const std::vector<T>& f, double h) {
  const std::size_t n = f.size();
  if (n < 4) throw Error(ErrorCode::InvalidGrid, "cumulative integral needs 4 nodes");
  std::vector<T> cum(n);
  cum[0] = T{};
  for (std::size_t i = 1; i < n; ++i) {
    T inc{};
    if (i == 1) {
      inc = (h / 24.0) * (9.0 * f[0] + 19.0 * f[1] - 5.0 * f[2] + f[3]);
    } else if (i == 2) {
      inc = (h / 24.0) * (-f[0] + 13.0 * f[1] + 13.0 * f[2] - f[3]);
    } else {
      inc = (h / 24.0) * (f[i - 3] - 5.0 * f[i - 2] + 19.0 * f[i - 1] + 9.0 * f[i]);
    }
    cum[i] = cum[i - 1] + inc;
  }
  return cum;
}

}  // namespace pipeflow
