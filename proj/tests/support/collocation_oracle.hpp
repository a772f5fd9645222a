// Test-side eigenvalue oracle: Chebyshev collocation of the quadratic pencil.
//
// This is a deliberately independent route to the spectrum: a dense spectral
// discretisation with boundary rows replaced, linearised in the eigenvalue
// and handed to a QZ solver. It shares no code with the shooting determinant
// it cross-checks. Spurious discrete eigenvalues are removed by running two
// resolutions and keeping only values that agree to 1e-7 relative.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include "pipeflow/params.hpp"

namespace oracle {

using pipeflow::Complex;
using pipeflow::TubeParams;

struct ChebOps {
  std::vector<double> s;  // ascending nodes on [0,1]
  Eigen::MatrixXd d1, d2, d3, d4;
};

// Differentiation matrices on the Chebyshev-Gauss-Lobatto nodes, mapped to
// [0,1] via s = (1 - xi)/2 (so d/ds = -2 d/dxi). Higher orders come from the
// order-by-order recursion with the negative-sum diagonal (Welfert's scheme),
// not from matrix powers: squaring D loses ~N^8 ulps in D^4, which is what a
// fourth-order pencil can least afford. Node differences use the product
// identity cos a - cos b = 2 sin((a+b)/2) sin((b-a)/2) to avoid cancellation.
inline ChebOps cheb_ops(int n_poly) {
  const int n = n_poly + 1;
  Eigen::VectorXd xi(n);
  for (int j = 0; j < n; ++j) xi(j) = std::cos(pipeflow::kPi * j / n_poly);
  Eigen::VectorXd c(n);
  for (int j = 0; j < n; ++j)
    c(j) = ((j == 0 || j == n_poly) ? 2.0 : 1.0) * ((j % 2) ? -1.0 : 1.0);
  Eigen::MatrixXd inv_dx(n, n);  // 1/(xi_i - xi_j) off the diagonal
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) {
        inv_dx(i, j) = 0.0;
        continue;
      }
      const double sum = pipeflow::kPi * (i + j) / (2.0 * n_poly);
      const double dif = pipeflow::kPi * (j - i) / (2.0 * n_poly);
      inv_dx(i, j) = 1.0 / (2.0 * std::sin(sum) * std::sin(dif));
    }
  }
  std::array<Eigen::MatrixXd, 4> dxi;  // d/dxi matrices, orders 1..4
  Eigen::MatrixXd prev = Eigen::MatrixXd::Identity(n, n);
  for (int ell = 1; ell <= 4; ++ell) {
    Eigen::MatrixXd cur(n, n);
    for (int i = 0; i < n; ++i) {
      double row_sum = 0.0;
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        cur(i, j) =
            ell * inv_dx(i, j) * ((c(i) / c(j)) * prev(i, i) - prev(i, j));
        row_sum += cur(i, j);
      }
      cur(i, i) = -row_sum;  // negative-sum trick keeps rows consistent
    }
    dxi[ell - 1] = cur;
    prev = std::move(cur);
  }
  ChebOps ops;
  ops.s.resize(n);
  for (int j = 0; j < n; ++j) ops.s[j] = 0.5 * (1.0 - xi(j));
  ops.d1 = -2.0 * dxi[0];
  ops.d2 = 4.0 * dxi[1];
  ops.d3 = -8.0 * dxi[2];
  ops.d4 = 16.0 * dxi[3];
  return ops;
}

// Eigenvalues of the pencil lambda^2 w + lambda (2 be w' [+ kappa w'(1) row]) +
// (w'''' - c w'') = 0, collocated as a coupled second-order system in
// z = (w, u) with u = w''. Keeping the spatial order at two matters: applying
// D^4 in doubles floors the residual at ~eps*||D^4|| ~ 1e-1 for N=96, while
// the mixed form only ever multiplies by D^2 (~1e-7). Boundary forms replace
// the boundary-node rows of each block. benchmark=true swaps in the
// selfadjoint comparison conditions and drops the transport term.
inline std::vector<Complex> collocation_eigenvalues_single(const TubeParams& p,
                                                           int n_poly,
                                                           bool benchmark = false) {
  const ChebOps ops = cheb_ops(n_poly);
  const int n = n_poly + 1;
  const int m = 2 * n;  // unknowns: w at n nodes, then u at n nodes
  const double c = p.stiffness();
  const double be = benchmark ? 0.0 : p.flow();

  Eigen::MatrixXd a0 = Eigen::MatrixXd::Zero(m, m);
  Eigen::MatrixXd a1 = Eigen::MatrixXd::Zero(m, m);
  Eigen::MatrixXd mass = Eigen::MatrixXd::Zero(m, m);

  // Definition block (rows 0..n-1): u - w'' = 0 at interior nodes.
  for (int r = 1; r < n - 1; ++r) {
    a0.row(r).head(n) = -ops.d2.row(r);
    a0(r, n + r) = 1.0;
  }
  // Dynamics block (rows n..2n-1): u'' - c u + 2 be lambda w' + lambda^2 w = 0.
  for (int r = 1; r < n - 1; ++r) {
    a0.row(n + r).tail(n) = ops.d2.row(r);
    a0(n + r, n + r) -= c;
    a1.row(n + r).head(n) = 2.0 * be * ops.d1.row(r);
    mass(n + r, r) = 1.0;
  }
  // Left end: w(0) = 0 and u(0) = w''(0) = 0.
  a0(0, 0) = 1.0;
  a0(n, n) = 1.0;
  // Right end: w''(1) + lambda kappa w'(1) = 0 (or w'(1) = 0 for the
  // benchmark), and w'''(1) - c w'(1) = u'(1) - c w'(1) = 0.
  if (benchmark) {
    a0.row(n - 1).head(n) = ops.d1.row(n - 1);
  } else {
    a0(n - 1, m - 1) = 1.0;  // u(1)
    a1.row(n - 1).head(n) = p.kappa * ops.d1.row(n - 1);
  }
  a0.row(m - 1).tail(n) = ops.d1.row(n - 1);
  a0.row(m - 1).head(n) -= c * ops.d1.row(n - 1);

  // Companion linearisation zeta = (z, lambda z / s) with the quadratic-pencil
  // scaling s = sqrt(|a0| / |mass|); without it the two companion blocks
  // differ in norm by the full |lambda|^2 spread and QZ loses the low modes.
  const double scale = std::sqrt(a0.cwiseAbs().maxCoeff());
  Eigen::MatrixXd big_a = Eigen::MatrixXd::Zero(2 * m, 2 * m);
  Eigen::MatrixXd big_b = Eigen::MatrixXd::Zero(2 * m, 2 * m);
  big_a.topRightCorner(m, m) = scale * Eigen::MatrixXd::Identity(m, m);
  big_a.bottomLeftCorner(m, m) = -a0 / scale;
  big_a.bottomRightCorner(m, m) = -a1;
  big_b.topLeftCorner(m, m).setIdentity();
  big_b.bottomRightCorner(m, m) = mass;

  Eigen::GeneralizedEigenSolver<Eigen::MatrixXd> ges;
  ges.compute(big_a, big_b, false);
  std::vector<Complex> out;
  const auto alphas = ges.alphas();
  const auto betas = ges.betas();
  for (int i = 0; i < alphas.size(); ++i) {
    if (betas(i) == 0.0) continue;  // infinite: boundary rows
    const Complex lam = Complex(alphas(i)) / betas(i);
    if (!std::isfinite(lam.real()) || !std::isfinite(lam.imag())) continue;
    if (std::abs(lam) > 1e10) continue;  // numerically infinite
    out.push_back(lam);
  }
  return out;
}

// Two-resolution filter: keep eigenvalues agreeing to 1e-7 relative between
// n_poly = 64 and 96, upper half plane (plus near-real), sorted by Im.
inline std::vector<Complex> collocation_eigenvalues(const TubeParams& p,
                                                    double im_max,
                                                    bool benchmark = false) {
  const auto coarse = collocation_eigenvalues_single(p, 64, benchmark);
  const auto fine = collocation_eigenvalues_single(p, 96, benchmark);
  std::vector<Complex> accepted;
  for (const Complex lf : fine) {
    if (lf.imag() < -1e-6 * (1.0 + std::abs(lf)) || lf.imag() > im_max) continue;
    double best = 1e300;
    for (const Complex lc : coarse) best = std::min(best, std::abs(lf - lc));
    if (best <= 1e-7 * (1.0 + std::abs(lf))) accepted.push_back(lf);
  }
  std::sort(accepted.begin(), accepted.end(),
            [](Complex a, Complex b) { return a.imag() < b.imag(); });
  // Defensive dedupe: QZ occasionally reports a root twice.
  std::vector<Complex> out;
  for (const Complex l : accepted)
    if (out.empty() || std::abs(l - out.back()) > 1e-6 * (1.0 + std::abs(l)))
      out.push_back(l);
  return out;
}

}  // namespace oracle
