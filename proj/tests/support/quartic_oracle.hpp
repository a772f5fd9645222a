// Test-side closed-form oracle for the eta = 0 spectral ODE.
//
// Without the transport term the equation has constant coefficients and the
// canonical fundamental system is an explicit combination of exponentials
// e^{mu s} with mu^4 - c mu^2 + lambda^2 = 0. Used to validate the shooting
// integrator and the determinant assembly on an independent route.
#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <complex>

#include "pipeflow/params.hpp"

namespace oracle {

using pipeflow::Complex;

struct QuarticColumn {
  std::array<Complex, 4> coeff;  // weights of e^{mu_k s}
};

struct QuarticSystem {
  std::array<Complex, 4> mu;
  std::array<QuarticColumn, 4> cols;  // canonical initial data w^(k)(0)=delta_{kr}

  // d-th derivative of column r at s.
  Complex eval(int r, int d, double s) const {
    Complex acc = 0.0;
    for (int k = 0; k < 4; ++k) {
      Complex f = cols[r].coeff[k] * std::exp(mu[k] * s);
      for (int j = 0; j < d; ++j) f *= mu[k];
      acc += f;
    }
    return acc;
  }
};

// Requires the four characteristic roots to be distinct; callers pick lambda
// away from the degeneracies c^2 = 4 lambda^2 and lambda = 0.
inline QuarticSystem quartic_fundamental(Complex lambda, double c) {
  const Complex disc = std::sqrt(Complex(c * c) - 4.0 * lambda * lambda);
  const Complex mu2p = (Complex(c) + disc) / 2.0;
  const Complex mu2m = (Complex(c) - disc) / 2.0;
  QuarticSystem q;
  q.mu = {std::sqrt(mu2p), -std::sqrt(mu2p), std::sqrt(mu2m), -std::sqrt(mu2m)};
  Eigen::Matrix4cd vand;
  for (int j = 0; j < 4; ++j)
    for (int k = 0; k < 4; ++k) {
      Complex e = 1.0;
      for (int d = 0; d < j; ++d) e *= q.mu[k];
      vand(j, k) = e;
    }
  const Eigen::PartialPivLU<Eigen::Matrix4cd> lu(vand);
  for (int r = 0; r < 4; ++r) {
    Eigen::Vector4cd rhs = Eigen::Vector4cd::Zero();
    rhs(r) = 1.0;
    const Eigen::Vector4cd a = lu.solve(rhs);
    for (int k = 0; k < 4; ++k) q.cols[r].coeff[k] = a(k);
  }
  return q;
}

}  // namespace oracle
