// pipeflow: eigenfunctions, energy-space eigenvectors, and the biorthogonal
// machinery behind the Riesz-basis diagnostics.
//
// A mode is stored as a four-term sum of anchored exponentials
// a_j * exp(mu_j (s - sigma_j)), where the mu_j are the roots of the quartic
// symbol at the eigenvalue and the anchor sigma_j is 1 for right-growing
// exponentials and 0 otherwise, so every basis function stays bounded by 1 on
// [0,1]. Derivatives and all L2/energy inner products are then closed forms:
// normalization, Gram matrices, and quadratic-closeness distances carry no
// grid error, and grid samples exist only for output and for cross-checks
// against the grid-based solvers.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "pipeflow/grid.hpp"
#include "pipeflow/params.hpp"
#include "pipeflow/spectrum.hpp"
#include "pipeflow/state.hpp"

namespace pipeflow {

// One anchored exponential: coeff * exp(mu * (s - anchor)), anchor in {0, 1}.
struct ExpTerm {
  Complex coeff;
  Complex mu;
  double anchor = 0.0;
};

namespace detail {

inline Complex cpow_int(Complex z, int k) {
  Complex r{1.0, 0.0};
  for (int i = 0; i < k; ++i) r *= z;
  return r;
}

}  // namespace detail

// Exact value of  int_0^1 exp(mu_a (s - anchor_a)) * exp(mu_b (s - anchor_b)) ds.
// With anchors chosen so each factor is bounded by 1 on [0,1], both endpoint
// exponents have nonpositive real part and the evaluation cannot overflow.
// Near mu_a + mu_b = 0 the difference quotient loses digits, so a short series
// takes over (its truncation error is ~|m|^4/120, negligible below the cut).
inline Complex exp_pair_integral(Complex mu_a, double anchor_a, Complex mu_b,
                                 double anchor_b) {
  const Complex m = mu_a + mu_b;
  const Complex at0 = -mu_a * anchor_a - mu_b * anchor_b;  // exponent at s = 0
  const double scale = std::abs(mu_a) + std::abs(mu_b) + 1.0;
  if (std::abs(m) < 1e-6 * scale)
    return std::exp(at0) * (1.0 + m * (0.5 + m * (1.0 / 6.0 + m / 24.0)));
  const Complex at1 = mu_a * (1.0 - anchor_a) + mu_b * (1.0 - anchor_b);
  return (std::exp(at1) - std::exp(at0)) / m;
}

// k-th derivative of an anchored-exponential sum at a point.
inline Complex eval_terms(const std::vector<ExpTerm>& terms, double s, int k = 0) {
  Complex acc{};
  for (const auto& t : terms)
    acc += t.coeff * detail::cpow_int(t.mu, k) * std::exp(t.mu * (s - t.anchor));
  return acc;
}

// Exact L2 pairing  int_0^1 f^(kf) * conj(g^(kg)) ds  of two sums. Conjugating
// an anchored exponential just conjugates mu (s and the anchor are real), so
// each cross term reduces to exp_pair_integral.
inline Complex terms_inner(const std::vector<ExpTerm>& f, int kf,
                           const std::vector<ExpTerm>& g, int kg) {
  Complex acc{};
  for (const auto& a : f) {
    const Complex wa = a.coeff * detail::cpow_int(a.mu, kf);
    for (const auto& b : g) {
      const Complex wb = std::conj(b.coeff * detail::cpow_int(b.mu, kg));
      acc += wa * wb * exp_pair_integral(a.mu, a.anchor, std::conj(b.mu), b.anchor);
    }
  }
  return acc;
}

enum class Normalization { l2_unit };
enum class PhaseRule { slope_at_origin, largest_sample };

struct ModeShape {
  Eigenvalue lambda;                 // carries the rung index and certificates
  BoundarySet set = BoundarySet::full;
  Grid grid;
  std::vector<ExpTerm> terms;        // exact description of w
  std::vector<Complex> samples;      // w on the grid, for output/cross-checks
  Normalization normalization = Normalization::l2_unit;
  PhaseRule phase = PhaseRule::slope_at_origin;

  Complex eval(double s, int derivative_order = 0) const {
    return eval_terms(terms, s, derivative_order);
  }
};

namespace detail {

// Roots of  mu^4 + a2 mu^2 + a1 mu + a0  (no cubic term arises here) via the
// companion matrix, each polished by a few Newton steps on the monic quartic.
inline std::array<Complex, 4> quartic_roots(Complex a2, Complex a1, Complex a0) {
  Eigen::Matrix4cd comp = Eigen::Matrix4cd::Zero();
  comp(1, 0) = 1.0;
  comp(2, 1) = 1.0;
  comp(3, 2) = 1.0;
  comp(0, 3) = -a0;
  comp(1, 3) = -a1;
  comp(2, 3) = -a2;
  Eigen::ComplexEigenSolver<Eigen::Matrix4cd> es(comp);
  if (es.info() != Eigen::Success)
    throw Error(ErrorCode::NoConvergence, "companion eigensolve failed");
  std::array<Complex, 4> mu;
  for (int i = 0; i < 4; ++i) {
    Complex z = es.eigenvalues()(i);
    for (int it = 0; it < 4; ++it) {
      const Complex f = ((z * z + a2) * z + a1) * z + a0;
      const Complex df = (4.0 * z * z + 2.0 * a2) * z + a1;
      if (!(std::abs(df) > 0.0)) break;
      const Complex step = f / df;
      z -= step;
      if (std::abs(step) <= 1e-15 * (1.0 + std::abs(z))) break;
    }
    mu[i] = z;
  }
  return mu;
}

// The four boundary functionals applied to one anchored exponential; rows
// match the determinant machinery: w(0), w''(0), the damped end condition,
// and the shear condition.
inline std::array<Complex, 4> boundary_row_entries(Complex mu, double anchor,
                                                   Complex lambda,
                                                   const TubeParams& p,
                                                   BoundarySet set) {
  const double c = p.stiffness();
  const Complex at0 = std::exp(-mu * anchor);
  const Complex at1 = std::exp(mu * (1.0 - anchor));
  std::array<Complex, 4> r;
  r[0] = at0;
  r[1] = mu * mu * at0;
  if (set == BoundarySet::full)
    r[2] = (mu * mu + lambda * p.kappa * mu) * at1;
  else
    r[2] = mu * at1;
  r[3] = (mu * mu * mu - c * mu) * at1;
  return r;
}

}  // namespace detail

// Enforce the stored conventions in place: unit L2 norm, then a unit-modulus
// phase making w'(0) real and positive (largest-magnitude grid sample when the
// slope at the origin is below 1e-10), then refresh the samples. Idempotent.
inline void normalize_mode(ModeShape& m) {
  const double nrm =
      std::sqrt(std::max(0.0, terms_inner(m.terms, 0, m.terms, 0).real()));
  if (!(nrm > 0.0) || !std::isfinite(nrm))
    throw Error(ErrorCode::NoConvergence, "mode has no L2 mass to normalize");
  for (auto& t : m.terms) t.coeff /= nrm;
  Complex ref = eval_terms(m.terms, 0.0, 1);
  m.phase = PhaseRule::slope_at_origin;
  if (std::abs(ref) < 1e-10) {
    m.phase = PhaseRule::largest_sample;
    ref = Complex{};
    for (std::size_t i = 0; i < m.grid.n; ++i) {
      const Complex v = eval_terms(m.terms, m.grid.s[i], 0);
      if (std::abs(v) > std::abs(ref)) ref = v;
    }
  }
  if (std::abs(ref) > 0.0) {
    const Complex phase = std::conj(ref) / std::abs(ref);
    for (auto& t : m.terms) t.coeff *= phase;
  }
  m.samples.resize(m.grid.n);
  for (std::size_t i = 0; i < m.grid.n; ++i)
    m.samples[i] = eval_terms(m.terms, m.grid.s[i], 0);
}

// Synthesize the eigenfunction at a refined eigenvalue: quartic symbol roots,
// anchored exponentials, null vector of the row-normalized 4x4 boundary
// matrix by smallest singular direction, then the normalization conventions.
inline ModeShape build_mode(const Eigenvalue& ev, const TubeParams& p,
                            const Grid& g, BoundarySet set = BoundarySet::full) {
  if (!(ev.residual < tol::root))
    throw Error(ErrorCode::BadValue,
                "eigenvalue residual exceeds the root tolerance; refine first");
  const double c = p.stiffness();
  const Complex lambda = ev.lambda;
  const Complex transport =
      (set == BoundarySet::full) ? Complex{2.0 * p.flow(), 0.0} * lambda : Complex{};
  const auto mu =
      detail::quartic_roots(Complex{-c, 0.0}, transport, lambda * lambda);

  double mu_max = 1.0;
  for (const auto& z : mu) mu_max = std::max(mu_max, std::abs(z));
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j)
      if (std::abs(mu[i] - mu[j]) < 1e-6 * mu_max)
        throw Error(ErrorCode::RankDeficiencyAmbiguous,
                    "near-coincident symbol roots; exponential basis degenerates");

  ModeShape m;
  m.lambda = ev;
  m.set = set;
  m.grid = g;
  m.terms.resize(4);
  Eigen::Matrix4cd bmat;
  for (int j = 0; j < 4; ++j) {
    const double anchor = (mu[j].real() > 0.0) ? 1.0 : 0.0;
    m.terms[j] = ExpTerm{Complex{}, mu[j], anchor};
    const auto col = detail::boundary_row_entries(mu[j], anchor, lambda, p, set);
    for (int i = 0; i < 4; ++i) bmat(i, j) = col[i];
  }
  for (int i = 0; i < 4; ++i) {
    double row_scale = 0.0;
    for (int j = 0; j < 4; ++j) row_scale = std::max(row_scale, std::abs(bmat(i, j)));
    if (row_scale > 0.0) bmat.row(i) /= row_scale;
  }
  Eigen::JacobiSVD<Eigen::Matrix4cd> svd(bmat, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (sv(2) < 1e-6 * sv(0))
    throw Error(ErrorCode::RankDeficiencyAmbiguous,
                "two near-zero singular values in the boundary matrix");
  const Eigen::Vector4cd coeffs = svd.matrixV().col(3);
  for (int j = 0; j < 4; ++j) m.terms[j].coeff = coeffs(j);
  normalize_mode(m);
  return m;
}

// Scale-free residuals of the four boundary conditions, each measured against
// the largest term entering its sum (the same cancellation-aware convention
// the determinant uses).
inline std::array<double, 4> boundary_residuals(const ModeShape& m,
                                                const TubeParams& p) {
  std::array<double, 4> out{};
  std::array<Complex, 4> sum{};
  std::array<double, 4> term_mag{};
  for (const auto& t : m.terms) {
    const auto row =
        detail::boundary_row_entries(t.mu, t.anchor, m.lambda.lambda, p, m.set);
    for (int i = 0; i < 4; ++i) {
      sum[i] += t.coeff * row[i];
      term_mag[i] = std::max(term_mag[i], std::abs(t.coeff * row[i]));
    }
  }
  for (int i = 0; i < 4; ++i)
    out[i] = std::abs(sum[i]) / std::max(term_mag[i], 1e-300);
  return out;
}

// Energy-space eigenvector x = (w/lambda, w), with the exact term lists kept
// alongside the grid samples so the energy norm and all Gram entries are
// closed forms. Dual vectors reuse the same shape (their term lists are the
// mode combination the Gram solve produces).
struct EnergyEigenvector {
  Complex lambda;                    // associated eigenvalue
  Grid grid;
  std::vector<ExpTerm> top_terms;    // exact description of the first slot
  std::vector<ExpTerm> bottom_terms; // exact description of the second slot
  std::vector<Complex> top;          // first slot on the grid
  std::vector<Complex> bottom;       // second slot on the grid
  double norm_X = 0.0;
};

// Energy inner product <a, b> = (a1'', b1'') + c (a1', b1') + (a2, b2),
// evaluated exactly on the term lists.
inline Complex inner_X(const EnergyEigenvector& a, const EnergyEigenvector& b,
                       const TubeParams& p) {
  const double c = p.stiffness();
  return terms_inner(a.top_terms, 2, b.top_terms, 2) +
         c * terms_inner(a.top_terms, 1, b.top_terms, 1) +
         terms_inner(a.bottom_terms, 0, b.bottom_terms, 0);
}

inline EnergyEigenvector energy_vector(const ModeShape& m, const TubeParams& p) {
  const Complex lambda = m.lambda.lambda;
  if (!(std::abs(lambda) > 0.0))
    throw Error(ErrorCode::BadValue, "zero eigenvalue has no energy eigenvector");
  EnergyEigenvector x;
  x.lambda = lambda;
  x.grid = m.grid;
  x.bottom_terms = m.terms;
  x.top_terms = m.terms;
  for (auto& t : x.top_terms) t.coeff /= lambda;
  x.bottom = m.samples;
  x.top.resize(m.grid.n);
  for (std::size_t i = 0; i < m.grid.n; ++i) x.top[i] = m.samples[i] / lambda;
  x.norm_X = std::sqrt(std::max(0.0, inner_X(x, x, p).real()));
  return x;
}

// The closed-loop generator acting on an exactly represented pair:
// T(u, v) = (v, -u'''' + c u'' - 2 beta eta v'). On an energy eigenvector this
// reproduces lambda * x identically, which the tests pin.
inline EnergyEigenvector generator_action(const EnergyEigenvector& x,
                                          const TubeParams& p) {
  const double c = p.stiffness();
  const double two_flow = 2.0 * p.flow();
  EnergyEigenvector y;
  y.lambda = x.lambda;
  y.grid = x.grid;
  y.top_terms = x.bottom_terms;
  y.bottom_terms.reserve(x.top_terms.size() + x.bottom_terms.size());
  for (const auto& t : x.top_terms) {
    const Complex mu2 = t.mu * t.mu;
    y.bottom_terms.push_back(ExpTerm{t.coeff * (c * mu2 - mu2 * mu2), t.mu, t.anchor});
  }
  if (two_flow != 0.0)
    for (const auto& t : x.bottom_terms)
      y.bottom_terms.push_back(ExpTerm{-two_flow * t.coeff * t.mu, t.mu, t.anchor});
  y.top.resize(y.grid.n);
  y.bottom.resize(y.grid.n);
  for (std::size_t i = 0; i < y.grid.n; ++i) {
    y.top[i] = eval_terms(y.top_terms, y.grid.s[i], 0);
    y.bottom[i] = eval_terms(y.bottom_terms, y.grid.s[i], 0);
  }
  y.norm_X = std::sqrt(std::max(0.0, inner_X(y, y, p).real()));
  return y;
}

// Eigenvector of the quadratic pencil: the deflection samples together with
// the boundary slope w'(1) that the damped condition traces.
struct PencilEigenvector {
  std::vector<Complex> w_part;
  Complex trace;  // w'(1), evaluated exactly from the term list
};

inline PencilEigenvector pencil_vector(const ModeShape& m) {
  return PencilEigenvector{m.samples, eval_terms(m.terms, 1.0, 1)};
}

// Closed-form inverse of the undamped block operator A(w, v) = (v, -w'''' + c w'').
// Writing V(s) = int_0^s dt int_t^1 v~(r) dr, the top solves w'' - c w = V with
// w(0) = 0 and w''(1) = -kappa w~'(1):
//   w(s) = b sinh(sqrt(c) s) + c^{-1/2} int_0^s sinh(sqrt(c)(s - r)) V(r) dr,
//   b = (-sqrt(c) int_0^1 sinh(sqrt(c)(1 - r)) V(r) dr - V(1) - kappa w~'(1))
//       / (c sinh(sqrt(c))),
// and the bottom is w~ itself. The convolution is split into sinh/cosh parts
// so only running integrals of bounded integrands appear.
inline StateVector apply_A_inverse(const StateVector& xtilde, const TubeParams& p) {
  check_state(xtilde);
  const Grid& g = xtilde.grid;
  // Two nested cumulative integrations plus a one-sided boundary slope need
  // more room than the bare grid type guarantees.
  if (g.n < 17)
    throw Error(ErrorCode::GridTooCoarse, "inverse formula needs at least 9 nodes");
  const double c = p.stiffness();
  const double rc = std::sqrt(c);

  const std::vector<Complex> cumv = cumulative_integral(xtilde.v, g.h);
  const Complex total = cumv.back();
  std::vector<Complex> tail(g.n);
  for (std::size_t i = 0; i < g.n; ++i) tail[i] = total - cumv[i];
  const std::vector<Complex> big_v = cumulative_integral(tail, g.h);

  std::vector<Complex> fcosh(g.n), fsinh(g.n);
  for (std::size_t i = 0; i < g.n; ++i) {
    fcosh[i] = std::cosh(rc * g.s[i]) * big_v[i];
    fsinh[i] = std::sinh(rc * g.s[i]) * big_v[i];
  }
  const std::vector<Complex> cum_cosh = cumulative_integral(fcosh, g.h);
  const std::vector<Complex> cum_sinh = cumulative_integral(fsinh, g.h);
  std::vector<Complex> conv(g.n);
  for (std::size_t i = 0; i < g.n; ++i)
    conv[i] = std::sinh(rc * g.s[i]) * cum_cosh[i] -
              std::cosh(rc * g.s[i]) * cum_sinh[i];

  const DerivativeStencils d1(1, g.n, g.h);
  const Complex slope_end = d1.at(xtilde.w, g.n - 1);
  const Complex b = (-rc * conv.back() - big_v.back() - p.kappa * slope_end) /
                    (c * std::sinh(rc));

  StateVector out = StateVector::zero(g);
  for (std::size_t i = 0; i < g.n; ++i)
    out.w[i] = b * std::sinh(rc * g.s[i]) + conv[i] / rc;
  out.v = xtilde.w;
  return out;
}

// Modes of the selfadjoint comparison problem (flow coupling removed, clamped
// slope at the damped end), one per rung 0..n_max, L2-normalized. Their
// frequencies are purely imaginary and the set is orthonormal.
inline std::vector<ModeShape> benchmark_modes(const TubeParams& p, int n_max,
                                              const Grid& g) {
  if (n_max < 0 || n_max > 60)
    throw Error(ErrorCode::BadValue, "n_max must lie in 0..60");
  const Spectrum sp = find_spectrum(p, std::max(n_max, 1), BoundarySet::benchmark);
  std::vector<ModeShape> out;
  out.reserve(static_cast<std::size_t>(n_max) + 1);
  for (int n = 0; n <= n_max; ++n) {
    const Eigenvalue* ev = sp.by_index(n);
    if (!ev)
      throw Error(ErrorCode::IncompleteSpectrum,
                  "benchmark spectrum is missing rung " + std::to_string(n));
    out.push_back(build_mode(*ev, p, g, BoundarySet::benchmark));
  }
  return out;
}

// Multiply an anchored-exponential sum by the unimodular factor exp(i delta s);
// the product is again an anchored sum with every exponent shifted by i delta.
inline std::vector<ExpTerm> modulated_terms(const std::vector<ExpTerm>& terms,
                                            double delta) {
  std::vector<ExpTerm> out = terms;
  const Complex shift{0.0, delta};
  for (auto& t : out) {
    t.coeff *= std::exp(shift * t.anchor);
    t.mu += shift;
  }
  return out;
}

// Quadratic closeness of two mode sequences matched rung by rung.
//
// The flow coupling stamps every upper-half eigenfunction with the unimodular
// factor exp(i beta eta s / 2) (the conjugate factor below the axis): the two
// oscillatory symbol roots sit at i(+rho + beta*eta/2) and i(-rho + beta*eta/2),
// so the factor never decays with the mode index. Distances against the
// flow-free comparison family are therefore measured after applying that
// factor to the comparison modes. Multiplication by a fixed unimodular
// function is unitary on L2, so the modulated family is still orthonormal and
// the quadratic-closeness reading is unchanged; omitting the factor would
// wedge a constant-width gap between the families that no index can close.
// The factor is applied only when a flow-coupled sequence is compared against
// the flow-free benchmark; sequences from the same boundary set compare as-is
// (identical sequences give exact zeros).
//
// Phases are aligned per pair by the unit constant maximizing Re<w, w_hat>,
// after which d_n = ||w_n - w_hat_n||^2 = ||w||^2 + ||w_hat||^2 - 2 |<w, w_hat>|;
// the energy-space distance reuses the same constant.
struct ClosenessReport {
  std::vector<int> index;
  std::vector<double> d;                   // L2 distances squared
  std::vector<double> d_energy;            // energy-norm distances squared
  std::vector<double> partial_sum;         // running sums of d
  std::vector<double> partial_sum_energy;  // running sums of d_energy
};

inline ClosenessReport quadratic_closeness(const std::vector<ModeShape>& modes,
                                           const std::vector<ModeShape>& benchmarks,
                                           const TubeParams& p) {
  if (modes.size() != benchmarks.size())
    throw Error(ErrorCode::IndexMismatch, "sequences must have equal length");
  const double c = p.stiffness();
  const auto x_inner = [&](const std::vector<ExpTerm>& ta, Complex la,
                           const std::vector<ExpTerm>& tb, Complex lb) {
    return (terms_inner(ta, 2, tb, 2) + c * terms_inner(ta, 1, tb, 1)) /
               (la * std::conj(lb)) +
           terms_inner(ta, 0, tb, 0);
  };
  ClosenessReport rep;
  double run = 0.0;
  double run_energy = 0.0;
  for (std::size_t i = 0; i < modes.size(); ++i) {
    const ModeShape& w = modes[i];
    const ModeShape& wh = benchmarks[i];
    if (w.lambda.n != wh.lambda.n)
      throw Error(ErrorCode::IndexMismatch, "sequences must be matched rung by rung");
    double delta = 0.0;
    if (w.set == BoundarySet::full && wh.set == BoundarySet::benchmark) {
      if (w.lambda.lambda.imag() > 0.0) delta = 0.5 * p.flow();
      if (w.lambda.lambda.imag() < 0.0) delta = -0.5 * p.flow();
    }
    const std::vector<ExpTerm> bench = modulated_terms(wh.terms, delta);

    const Complex cross = terms_inner(w.terms, 0, bench, 0);
    const double na = terms_inner(w.terms, 0, w.terms, 0).real();
    const double nb = terms_inner(bench, 0, bench, 0).real();
    const Complex phase =
        (std::abs(cross) > 0.0) ? std::conj(cross) / std::abs(cross) : Complex{1.0, 0.0};
    const double dn = std::max(0.0, na + nb - 2.0 * (phase * cross).real());

    const Complex la = w.lambda.lambda;
    const Complex lb = wh.lambda.lambda;
    const double na_x = x_inner(w.terms, la, w.terms, la).real();
    const double nb_x = x_inner(bench, lb, bench, lb).real();
    const Complex cross_x = x_inner(w.terms, la, bench, lb);
    const double dn_energy =
        std::max(0.0, na_x + nb_x - 2.0 * (phase * cross_x).real());

    run += dn;
    run_energy += dn_energy;
    rep.index.push_back(w.lambda.n);
    rep.d.push_back(dn);
    rep.d_energy.push_back(dn_energy);
    rep.partial_sum.push_back(run);
    rep.partial_sum_energy.push_back(run_energy);
  }
  return rep;
}

// Truncated biorthogonal system: duals z_n in the span of the given
// eigenvectors with <x_m, z_n> = delta_mn, found by solving the Hermitian
// Gram system. The Gram condition number is the numeric Riesz-basis proxy.
struct BiorthogonalSet {
  std::vector<EnergyEigenvector> modes;
  std::vector<EnergyEigenvector> duals;
  double gram_condition = 0.0;
};

inline BiorthogonalSet biorthogonal_duals(const std::vector<EnergyEigenvector>& xs,
                                          const TubeParams& p) {
  const std::size_t n = xs.size();
  if (n < 2)
    throw Error(ErrorCode::BadValue, "biorthogonal set needs at least two vectors");
  Eigen::MatrixXcd gram(n, n);
  for (std::size_t m = 0; m < n; ++m)
    for (std::size_t k = 0; k < n; ++k) gram(m, k) = inner_X(xs[m], xs[k], p);
  gram = (0.5 * (gram + gram.adjoint())).eval();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(gram);
  if (eig.info() != Eigen::Success)
    throw Error(ErrorCode::NoConvergence, "Gram eigensolve failed");
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  const double cond =
      (lo > 0.0) ? hi / lo : std::numeric_limits<double>::infinity();
  if (!(lo > 0.0) || cond > 1e8)
    throw Error(ErrorCode::GramSingular,
                "Gram condition exceeds 1e8 at this truncation");

  const Eigen::MatrixXcd gram_inv =
      gram.llt().solve(Eigen::MatrixXcd::Identity(n, n));

  BiorthogonalSet set;
  set.modes = xs;
  set.gram_condition = cond;
  set.duals.reserve(n);
  for (std::size_t j = 0; j < n; ++j) {
    EnergyEigenvector z;
    z.lambda = xs[j].lambda;
    z.grid = xs[j].grid;
    z.top.assign(z.grid.n, Complex{});
    z.bottom.assign(z.grid.n, Complex{});
    for (std::size_t k = 0; k < n; ++k) {
      const Complex ck = std::conj(gram_inv(k, j));  // z_j = sum_k ck x_k
      if (ck == Complex{}) continue;
      for (const auto& t : xs[k].top_terms)
        z.top_terms.push_back(ExpTerm{ck * t.coeff, t.mu, t.anchor});
      for (const auto& t : xs[k].bottom_terms)
        z.bottom_terms.push_back(ExpTerm{ck * t.coeff, t.mu, t.anchor});
      for (std::size_t i = 0; i < z.grid.n; ++i) {
        z.top[i] += ck * xs[k].top[i];
        z.bottom[i] += ck * xs[k].bottom[i];
      }
    }
    // ||z_j||^2 = e_j^T Gram^{-1} e_j, no quadrature needed.
    z.norm_X = std::sqrt(std::max(0.0, gram_inv(j, j).real()));
    set.duals.push_back(std::move(z));
  }
  return set;
}

}  // namespace pipeflow
