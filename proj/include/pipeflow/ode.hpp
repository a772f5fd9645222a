// pipeflow: canonical fundamental system of the spectral ODE and the
// characteristic determinant built from it.
//
// For a spectral parameter lambda the deflection solves
//     w'''' - (gamma - eta^2) w'' + 2 lambda beta eta w' + lambda^2 w = 0
// on [0,1]. We integrate the four canonical columns (w^(k)(0) = delta_{kr})
// with an embedded Dormand-Prince 5(4) pair. Solutions grow like e^{|rho|s}
// with lambda = i rho^2, so each column carries a running rescale factor,
// kept as a log; values are combined only after aligning those logs, which
// preserves zeros exactly.
//
// The determinant itself is NOT assembled from the four columns. Because the
// left boundary rows are delta rows of the canonical data, the 4x4 reduces
// exactly to a 2x2 minor of the two columns with unit w'(0) and unit w'''(0),
// and forming that minor from separately integrated columns cancels the
// dominant e^{2 rho} products down to roundoff once |rho| exceeds ~15. We
// instead integrate the six 2x2 minors (Plucker coordinates) of that column
// pair directly: they satisfy their own linear system, the determinant is a
// LINEAR form in them, and the cancellation disappears. Zeros agree with the
// 4x4 determinant exactly (the two differ by a factor of -1).
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "pipeflow/params.hpp"
#include "pipeflow/errors.hpp"

namespace pipeflow {

// Which boundary operator closes the problem:
//   full      : w(0), w''(0), w''(1) + lambda kappa w'(1), w'''(1) - c w'(1)
//   benchmark : w(0), w''(0), w'(1),                       w'''(1) - c w'(1)
// The benchmark variant also drops the transport term from the ODE; it is the
// selfadjoint comparison problem whose modes are exactly sqrt(2) sin((n+1/2) pi s).
enum class BoundarySet { full, benchmark };

using Complex4 = std::array<Complex, 4>;  // (w, w', w'', w''')

struct FundamentalColumn {
  Complex4 at0{};   // boundary data at s=0, expressed on the final scale
  Complex4 at1{};   // boundary data at s=1 (final scale by construction)
  double log_scale = 0.0;  // true column = stored values * exp(log_scale)
  // Optional interior samples (same final scale), one Complex4 per sample point.
  std::vector<Complex4> samples;
};

struct FundamentalSystem {
  Complex lambda;
  TubeParams params;
  bool flow_term = true;
  std::array<FundamentalColumn, 4> cols;
  std::vector<double> sample_points;
};

namespace detail {

struct Rhs {
  double c;           // stiffness gamma - eta^2
  Complex two_lbe;    // 2 lambda beta eta (zero when the transport term is off)
  Complex lambda_sq;

  void operator()(const Complex4& y, Complex4& dy) const {
    dy[0] = y[1];
    dy[1] = y[2];
    dy[2] = y[3];
    dy[3] = c * y[2] - two_lbe * y[1] - lambda_sq * y[0];
  }
};

// Induced system on the 2x2 minors p_kl = y1_k y2_l - y1_l y2_k of a pair of
// solutions, ordered (p01, p02, p03, p12, p13, p23). Derived from the
// first-order form y' = A y with A_3 = (-lambda^2, -2 lambda beta eta, c, 0).
struct CompoundRhs {
  double c;
  Complex two_lbe;
  Complex lambda_sq;

  void operator()(const std::array<Complex, 6>& y,
                  std::array<Complex, 6>& dy) const {
    dy[0] = y[1];                                // p01' = p02
    dy[1] = y[3] + y[2];                         // p02' = p12 + p03
    dy[2] = y[4] - two_lbe * y[0] + c * y[1];    // p03' = p13 - 2lbe p01 + c p02
    dy[3] = y[4];                                // p12' = p13
    dy[4] = y[5] + lambda_sq * y[0] + c * y[3];  // p13' = p23 + l^2 p01 + c p12
    dy[5] = lambda_sq * y[1] + two_lbe * y[3];   // p23' = l^2 p02 + 2lbe p12
  }
};

template <std::size_t N>
inline double inf_norm(const std::array<Complex, N>& y) {
  double m = 0.0;
  for (const auto& c : y) m = std::max(m, std::abs(c));
  return m;
}

template <std::size_t N>
struct Integration {
  std::array<Complex, N> at0{};  // initial data, expressed on the final scale
  std::array<Complex, N> at1{};  // data at s=1 (final scale by construction)
  double log_scale = 0.0;        // true solution = stored values * exp(log_scale)
  std::vector<std::array<Complex, N>> samples;  // at save points, final scale
};

// Dormand-Prince 5(4): integrates one linear system from 0 to 1, rescaling
// whenever the solution grows past 1e40, and landing exactly on each save
// point so interior samples need no interpolation.
template <std::size_t N, class RhsT>
inline Integration<N> integrate_linear(const RhsT& rhs, std::array<Complex, N> y,
                                       const std::vector<double>& saves) {
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                          a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33,
                          a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                          b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                          e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

  const std::array<Complex, N> y_initial = y;
  double log_scale = 0.0;

  std::vector<std::pair<std::array<Complex, N>, double>> saved;  // (value, log at save)
  saved.reserve(saves.size());
  std::size_t next_save = 0;
  // s=0 may itself be a save point.
  while (next_save < saves.size() && saves[next_save] <= 1e-15) {
    saved.push_back({y, log_scale});
    ++next_save;
  }

  double s = 0.0;
  double h = 1e-4;
  std::array<Complex, N> k1, k2, k3, k4, k5, k6, k7, yt, ynew;
  rhs(y, k1);
  long steps = 0;
  const long max_steps = 4000000;
  while (s < 1.0 - 1e-15) {
    if (++steps > max_steps)
      throw Error(ErrorCode::NoConvergence, "ODE step limit exceeded");
    const double target = (next_save < saves.size()) ? saves[next_save] : 1.0;
    const double h_free = h;  // controller's choice before clipping to a save point
    bool clipped = false;
    if (s + h >= target - 1e-15) {
      h = target - s;
      clipped = true;
    }
    for (std::size_t i = 0; i < N; ++i) yt[i] = y[i] + h * (a21 * k1[i]);
    rhs(yt, k2);
    for (std::size_t i = 0; i < N; ++i)
      yt[i] = y[i] + h * (a31 * k1[i] + a32 * k2[i]);
    rhs(yt, k3);
    for (std::size_t i = 0; i < N; ++i)
      yt[i] = y[i] + h * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
    rhs(yt, k4);
    for (std::size_t i = 0; i < N; ++i)
      yt[i] = y[i] + h * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
    rhs(yt, k5);
    for (std::size_t i = 0; i < N; ++i)
      yt[i] = y[i] + h * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] +
                          a65 * k5[i]);
    rhs(yt, k6);
    for (std::size_t i = 0; i < N; ++i)
      ynew[i] = y[i] + h * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] +
                            b6 * k6[i]);
    rhs(ynew, k7);

    double err = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      const Complex e = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] +
                             e6 * k6[i] + e7 * k7[i]);
      const double sc =
          tol::ode_abs + tol::ode_rel * std::max(std::abs(y[i]), std::abs(ynew[i]));
      const double q = std::abs(e) / sc;
      err += q * q;
    }
    err = std::sqrt(err / static_cast<double>(N));

    if (err <= 1.0) {
      s += h;
      y = ynew;
      k1 = k7;  // first-same-as-last
      if (clipped && next_save < saves.size() && s >= saves[next_save] - 1e-15) {
        saved.push_back({y, log_scale});
        ++next_save;
      }
      const double m = inf_norm<N>(y);
      if (m > 1e40) {
        for (auto& c : y) c /= m;
        for (auto& c : k1) c /= m;
        log_scale += std::log(m);
      }
    }
    const double factor =
        (err > 0.0) ? std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0) : 5.0;
    if (clipped && err <= 1.0)
      h = h_free;  // a step shortened only to land on a save point says nothing new
    else
      h = std::min(h * factor, 0.25);
    if (h < 1e-14)
      throw Error(ErrorCode::NoConvergence, "ODE step size underflow");
  }

  Integration<N> out;
  out.at1 = y;
  out.log_scale = log_scale;
  // Express everything on the final scale so all samples of one solution are
  // directly comparable. Early samples pick up exp(saved_log - final_log) <= 1.
  out.at0 = y_initial;
  for (auto& c : out.at0) c *= std::exp(-log_scale);
  out.samples.resize(saved.size());
  for (std::size_t i = 0; i < saved.size(); ++i) {
    const double f = std::exp(saved[i].second - log_scale);
    for (std::size_t k = 0; k < N; ++k) out.samples[i][k] = saved[i].first[k] * f;
  }
  return out;
}

inline FundamentalColumn integrate_column(int r, const Rhs& rhs,
                                          const std::vector<double>& saves) {
  Complex4 y{};
  y[r] = 1.0;
  Integration<4> res = integrate_linear<4>(rhs, y, saves);
  FundamentalColumn col;
  col.at0 = res.at0;
  col.at1 = res.at1;
  col.log_scale = res.log_scale;
  col.samples = std::move(res.samples);
  return col;
}

}  // namespace detail

// Integrate the four canonical columns; sample_points must be sorted ascending
// within [0,1] (may be empty). flow_term=false drops 2 lambda beta eta w'.
inline FundamentalSystem fundamental_system(Complex lambda, const TubeParams& p,
                                            bool flow_term = true,
                                            std::vector<double> sample_points = {}) {
  detail::Rhs rhs{p.stiffness(),
                  flow_term ? Complex(2.0) * lambda * p.flow() : Complex(0.0),
                  lambda * lambda};
  FundamentalSystem fs;
  fs.lambda = lambda;
  fs.params = p;
  fs.flow_term = flow_term;
  fs.sample_points = std::move(sample_points);
  for (int r = 0; r < 4; ++r)
    fs.cols[r] = detail::integrate_column(r, rhs, fs.sample_points);
  return fs;
}

// The four boundary forms applied to one column's endpoint data.
inline Complex4 boundary_forms(const FundamentalColumn& col, Complex lambda,
                               const TubeParams& p, BoundarySet set) {
  const double c = p.stiffness();
  Complex4 rows;
  rows[0] = col.at0[0];
  rows[1] = col.at0[2];
  if (set == BoundarySet::full)
    rows[2] = col.at1[2] + lambda * p.kappa * col.at1[1];
  else
    rows[2] = col.at1[1];
  rows[3] = col.at1[3] - c * col.at1[1];
  return rows;
}

inline Eigen::Matrix4cd boundary_matrix(const FundamentalSystem& fs, BoundarySet set) {
  Eigen::Matrix4cd m;
  for (int j = 0; j < 4; ++j) {
    const Complex4 rows = boundary_forms(fs.cols[j], fs.lambda, fs.params, set);
    for (int i = 0; i < 4; ++i) m(i, j) = rows[i];
  }
  return m;
}

// Characteristic determinant in scaled form: true Delta = value * exp(log_scale).
// term_sum is the magnitude scale of the linear form that assembles Delta
// (coefficient norm times minor norm, on the same scale); |value| / term_sum
// is the scale-free residual that the root-finder drives toward zero. It sits
// near the ODE tolerance at a root and is O(1) away from the spectrum.
struct DetValue {
  Complex value{};
  double log_scale = 0.0;
  double term_sum = 0.0;

  double residual() const {
    return std::abs(value) / std::max(term_sum, 1e-300);
  }
  double log10_abs() const {
    const double a = std::abs(value);
    if (a == 0.0) return -std::numeric_limits<double>::infinity();
    return (std::log(a) + log_scale) / std::log(10.0);
  }
};

namespace detail {

inline double permanent_magnitude(const Eigen::Matrix4cd& m) {
  std::array<int, 4> idx{0, 1, 2, 3};
  double sum = 0.0;
  do {
    double prod = 1.0;
    for (int i = 0; i < 4; ++i) prod *= std::abs(m(i, idx[i]));
    sum += prod;
  } while (std::next_permutation(idx.begin(), idx.end()));
  return sum;
}

}  // namespace detail

// The six 2x2 minors (p01, p02, p03, p12, p13, p23) at s=1 of the solution
// pair with unit w'(0) and unit w'''(0) -- the pair spanning the left-boundary
// subspace w(0) = w''(0) = 0. Initial data: only p13(0) = 1.
struct CompoundMinors {
  std::array<Complex, 6> at1{};
  double log_scale = 0.0;
};

inline CompoundMinors compound_minors(Complex lambda, const TubeParams& p,
                                      bool flow_term = true) {
  const detail::CompoundRhs rhs{
      p.stiffness(), flow_term ? Complex(2.0) * lambda * p.flow() : Complex(0.0),
      lambda * lambda};
  std::array<Complex, 6> y{};
  y[4] = 1.0;  // p13
  const detail::Integration<6> res = detail::integrate_linear<6>(rhs, y, {});
  return {res.at1, res.log_scale};
}

// Delta as a linear form in the compound minors:
//   full:      Delta = p23(1) + c p12(1) + lambda kappa p13(1)
//   benchmark: Delta = p13(1)                      (right rows w'(1), w'''(1)-c w'(1))
// This equals minus the 4x4 determinant of boundary forms over the canonical
// columns; zeros, residuals, and log-derivatives are unaffected by the sign.
inline DetValue characteristic_determinant(Complex lambda, const TubeParams& p,
                                           BoundarySet set = BoundarySet::full) {
  const bool flow = (set == BoundarySet::full);
  const CompoundMinors cm = compound_minors(lambda, p, flow);
  if (cm.log_scale > 650.0)
    throw Error(ErrorCode::NoConvergence,
                "determinant scale exceeds double range; |rho| too large");
  const double c = p.stiffness();
  const double pnorm = detail::inf_norm<6>(cm.at1);
  DetValue d;
  d.log_scale = cm.log_scale;
  if (set == BoundarySet::full) {
    const Complex lk = lambda * p.kappa;
    d.value = cm.at1[5] + c * cm.at1[3] + lk * cm.at1[4];
    d.term_sum = pnorm * std::max({1.0, c, std::abs(lk)});
  } else {
    d.value = cm.at1[4];
    d.term_sum = pnorm;
  }
  return d;
}

// Delta and its derivative by a centered difference, all three evaluations
// aligned to one common scale so the Newton ratio Delta/Delta' is exact in
// the rescaling. Step: h = max(1e-6, 1e-8 |lambda|), real.
struct DetWithDerivative {
  Complex value;       // Delta on the common scale
  Complex derivative;  // Delta' on the same scale
  double log_scale;
  double residual;     // cancellation-aware residual at lambda
};

inline DetWithDerivative determinant_with_derivative(Complex lambda,
                                                     const TubeParams& p,
                                                     BoundarySet set) {
  const double h = std::max(1e-6, 1e-8 * std::abs(lambda));
  const DetValue d0 = characteristic_determinant(lambda, p, set);
  const DetValue dp = characteristic_determinant(lambda + h, p, set);
  const DetValue dm = characteristic_determinant(lambda - h, p, set);
  const double lmax = std::max({d0.log_scale, dp.log_scale, dm.log_scale});
  const Complex v0 = d0.value * std::exp(d0.log_scale - lmax);
  const Complex vp = dp.value * std::exp(dp.log_scale - lmax);
  const Complex vm = dm.value * std::exp(dm.log_scale - lmax);
  return {v0, (vp - vm) / (2.0 * h), lmax, d0.residual()};
}

// Wronskian of the canonical system at s=1 in the same scaled representation;
// Abel's identity makes the true value identically 1. At large |rho| the
// cancellation in this determinant sits far below double precision, which is
// why term_sum is reported alongside.
inline DetValue wronskian_at_end(const FundamentalSystem& fs) {
  double total_log = 0.0;
  for (const auto& col : fs.cols) total_log += col.log_scale;
  Eigen::Matrix4cd m;
  for (int j = 0; j < 4; ++j)
    for (int i = 0; i < 4; ++i) m(i, j) = fs.cols[j].at1[i];
  DetValue d;
  d.value = m.determinant();
  d.log_scale = total_log;
  d.term_sum = detail::permanent_magnitude(m);
  return d;
}

}  // namespace pipeflow
