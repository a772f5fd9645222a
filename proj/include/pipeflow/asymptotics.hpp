// pipeflow: closed-form large-mode asymptotics.
//
// With lambda = i rho^2 the spectral ODE has quasi-exponential solutions
// e^{omega_r rho s}(1 + f_r(s)/rho + f_r1(s)/rho^2 + ...), omega_r = i^r.
// The correction profiles f_r, f_r1 solve a pair of first-order ODEs in s and
// have the explicit forms implemented here. Feeding them through the boundary
// conditions gives the eigenvalue ladder
//   rho_n = (n+1/2) pi + [ b^2 e^2/2 + (g - e^2) + 2 i b e + 2 i / k ] / (4 (n+1/2) pi) + O(n^-2)
// and its lambda-plane shadow with horizontal asymptote -(beta eta + 1/kappa).
// The three-step chain goes through the selfadjoint comparison problem
// (tau ladder) and adds the damper and the transport term one at a time.
#pragma once

#include <cmath>
#include <complex>

#include "pipeflow/params.hpp"
#include "pipeflow/errors.hpp"

namespace pipeflow {

inline Complex unit_root(int r) {
  switch (((r % 4) + 4) % 4) {
    case 0: return {1.0, 0.0};
    case 1: return {0.0, 1.0};
    case 2: return {-1.0, 0.0};
    default: return {0.0, -1.0};
  }
}

struct LemmaCorrection {
  Complex f;   // O(1/rho) profile
  Complex f1;  // O(1/rho^2) profile
};

// r in 1..4 selects the characteristic direction omega_r = i^r.
inline LemmaCorrection lemma_correction(int r, double s, const TubeParams& p) {
  const Complex i(0.0, 1.0);
  const Complex omega = unit_root(r);
  const Complex omega2 = omega * omega;         // (-1)^r
  const Complex cr = -(i * p.flow() / 2.0) * omega2;
  const Complex expo = std::exp(cr * s);
  LemmaCorrection out;
  out.f = -1.0 + expo;
  const double big_a = p.flow() * p.flow() / 2.0 + p.stiffness();
  out.f1 = (omega * omega * omega / 4.0) * big_a * s * expo;
  return out;
}

// Max residual of the two correction ODEs over a fixed sampling of [0,1],
// using analytic derivatives of the closed forms:
//   4 w^3 f' + 2 i be w (1 + f) = 0
//   4 w^3 f1' + 2 i be w f1 + 6 w^2 f'' + 2 i be f' - c w^2 (1 + f) = 0
struct LemmaResiduals {
  double first = 0.0;
  double second = 0.0;
};

inline LemmaResiduals lemma_ode_residual(int r, const TubeParams& p,
                                         int n_samples = 101) {
  const Complex i(0.0, 1.0);
  const Complex w = unit_root(r);
  const Complex w2 = w * w;
  const Complex w3 = w2 * w;
  const double be = p.flow();
  const double c = p.stiffness();
  const double big_a = be * be / 2.0 + c;
  const Complex cr = -(i * be / 2.0) * w2;
  LemmaResiduals res;
  for (int k = 0; k < n_samples; ++k) {
    const double s = static_cast<double>(k) / (n_samples - 1);
    const Complex expo = std::exp(cr * s);
    const Complex f = -1.0 + expo;
    const Complex fp = cr * expo;
    const Complex fpp = cr * cr * expo;
    const Complex f1 = (w3 / 4.0) * big_a * s * expo;
    const Complex f1p = (w3 / 4.0) * big_a * expo * (1.0 + cr * s);
    const Complex r1 = 4.0 * w3 * fp + 2.0 * i * be * w * (1.0 + f);
    const Complex r2 = 4.0 * w3 * f1p + 2.0 * i * be * w * f1 + 6.0 * w2 * fpp +
                       2.0 * i * be * fp - c * w2 * (1.0 + f);
    res.first = std::max(res.first, std::abs(r1));
    res.second = std::max(res.second, std::abs(r2));
  }
  return res;
}

// rho_n to O(n^-2). Refuses kappa = 0: the 2i/kappa term is singular there and
// the zero-damper ladder lives on a different offset family.
inline Complex asymptotic_rho(int n, const TubeParams& p) {
  if (p.kappa == 0.0)
    throw Error(ErrorCode::KappaZero,
                "closed-form ladder is singular at kappa=0; use the contour path");
  if (n < 1) throw Error(ErrorCode::BadValue, "mode index must be >= 1");
  const double a = (n + 0.5) * kPi;
  const double be = p.flow();
  const double big_a = be * be / 2.0 + p.stiffness();
  const double big_b = 2.0 * be + 2.0 / p.kappa;
  return Complex(a) + Complex(big_a, big_b) / (4.0 * a);
}

// lambda_n = i rho_n^2 expanded to the same order: the decay offset is exactly
// -(beta eta + 1/kappa) and the frequency rides the (n+1/2)^2 pi^2 ladder.
inline Complex asymptotic_lambda(int n, const TubeParams& p) {
  if (p.kappa == 0.0)
    throw Error(ErrorCode::KappaZero,
                "closed-form ladder is singular at kappa=0; use the contour path");
  if (n < 1) throw Error(ErrorCode::BadValue, "mode index must be >= 1");
  const double a = (n + 0.5) * kPi;
  const double be = p.flow();
  const double big_a = be * be / 2.0 + p.stiffness();
  return Complex(-(be + 1.0 / p.kappa), a * a + big_a / 2.0);
}

// The three-step construction: selfadjoint benchmark -> add the damper ->
// add the transport term. Exposed so the chain's internal consistency can be
// checked against the direct formula.
struct ChainRho {
  double tau_tilde;    // benchmark ladder (real)
  Complex rho_tilde;   // after the boundary damper
  Complex rho;         // after the transport term; matches asymptotic_rho to O(n^-2)
};

inline ChainRho chain_rho(int n, const TubeParams& p) {
  if (p.kappa == 0.0)
    throw Error(ErrorCode::KappaZero,
                "chain includes the damper step; kappa must be positive");
  if (n < 1) throw Error(ErrorCode::BadValue, "mode index must be >= 1");
  const double a = (n + 0.5) * kPi;
  const double c = p.stiffness();
  const double be = p.flow();
  ChainRho out;
  out.tau_tilde = a + c / (4.0 * a);
  out.rho_tilde = Complex(out.tau_tilde) + Complex(0.0, 1.0 / (2.0 * p.kappa * out.tau_tilde));
  out.rho = out.rho_tilde + Complex(be * be / 2.0, 2.0 * be) / (4.0 * out.rho_tilde);
  return out;
}

// Exact benchmark eigenvalue parameters: q_n = (n+1/2) pi and
// tau_n = (q_n^2 (q_n^2 + c))^{1/4}; the benchmark eigenvalue is i tau_n^2.
inline double benchmark_tau_exact(int n, const TubeParams& p) {
  if (n < 1) throw Error(ErrorCode::BadValue, "mode index must be >= 1");
  const double q = (n + 0.5) * kPi;
  return std::pow(q * q * (q * q + p.stiffness()), 0.25);
}

}  // namespace pipeflow
