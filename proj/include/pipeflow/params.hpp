// pipeflow: physical parameter set for the boundary-damped tube model.
//
// The tube carries fluid at dimensionless speed eta with mass ratio beta;
// gamma collects the axial prestress, and kappa is the gain of the rotational
// boundary damper at s = 1. The model is only hyperbolic-stable when the
// effective stiffness gamma - eta^2 stays positive, so validation rejects
// anything at or below that line.
#pragma once

#include <cmath>
#include <complex>
#include <string>

#include "pipeflow/errors.hpp"

namespace pipeflow {

using Complex = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;

namespace tol {
// One place for every pinned tolerance; modules refer to these by name.
inline constexpr double ode_rel = 1e-11;     // RK relative error per step
inline constexpr double ode_abs = 1e-13;     // RK absolute error per step
inline constexpr double root = 1e-9;         // Newton step / determinant residual
inline constexpr double conj = 1e-8;         // conjugate-symmetry checks
inline constexpr double bc = 1e-7;           // boundary-condition residuals
inline constexpr double biorth = 1e-8;       // biorthogonality defect
inline constexpr double power_balance = 1e-5;  // energy identity along trajectories
inline constexpr double monotone = 1e-6;     // allowed relative energy uptick per step
inline constexpr double real_part = 1e-8;    // imaginary leakage in real evolutions
}  // namespace tol

struct TubeParams {
  double gamma = 10.0;
  double eta = 1.0;
  double kappa = 1.0;
  double beta = 0.5;

  // gamma - eta^2 > 0; appears everywhere as the bending-vs-flow stiffness.
  double stiffness() const { return gamma - eta * eta; }
  // Combined transport coefficient multiplying w' in the evolution equation.
  double flow() const { return beta * eta; }
  // Parameter sets close to the degenerate line need a health warning.
  bool near_degenerate() const { return stiffness() < 1e-6; }
};

inline TubeParams validate(double gamma, double eta, double kappa, double beta) {
  auto finite = [](double x) { return std::isfinite(x); };
  if (!finite(gamma) || !finite(eta) || !finite(kappa) || !finite(beta))
    throw Error(ErrorCode::NonFiniteParameter, "all parameters must be finite");
  if (!(beta > 0.0 && beta < 1.0))
    throw Error(ErrorCode::BetaOutOfRange, "beta must lie in (0,1), got " + std::to_string(beta));
  if (eta < 0.0)
    throw Error(ErrorCode::NegativeEta, "eta must be >= 0, got " + std::to_string(eta));
  if (kappa < 0.0)
    throw Error(ErrorCode::NegativeKappa, "kappa must be >= 0, got " + std::to_string(kappa));
  if (!(gamma > eta * eta))
    throw Error(ErrorCode::GammaNotAboveEtaSquared,
                "gamma must exceed eta^2, got gamma=" + std::to_string(gamma) +
                    " eta^2=" + std::to_string(eta * eta));
  return TubeParams{gamma, eta, kappa, beta};
}

inline TubeParams validate(const TubeParams& p) {
  return validate(p.gamma, p.eta, p.kappa, p.beta);
}

}  // namespace pipeflow
