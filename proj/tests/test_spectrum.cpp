// Spectrum location: refinement, certificates, oracle agreement, and the
// asymptotic structure of the eigenvalue families.
#include <algorithm>
#include <cmath>
#include <complex>

#include <catch2/catch_amalgamated.hpp>

#include "pipeflow/spectrum.hpp"
#include "support/collocation_oracle.hpp"

using namespace pipeflow;
using Catch::Approx;

namespace {

const TubeParams& default_params() {
  static const TubeParams p = validate(10.0, 1.0, 1.0, 0.5);
  return p;
}

// One shared default-parameter spectrum; several cases read it.
const Spectrum& default_spectrum() {
  static const Spectrum sp = find_spectrum(default_params(), 40, BoundarySet::full);
  return sp;
}

// Exact skewadjoint frequencies: with eta = kappa = 0 the eigenfunctions are
// combinations of sin(q s) and sinh(p s) with p^2 = q^2 + c, and the right
// boundary conditions force q^3 tan(q) = p^3 tanh(p). Bisection on the bracket
// (n pi, n pi + pi/2) where the combination q^3 sin q cosh p - p^3 sinh p cos q
// changes sign exactly once.
double skew_q(int n, double c) {
  double lo = n * kPi + 1e-9, hi = n * kPi + kPi / 2.0 - 1e-9;
  const double sgn = (n % 2 == 0) ? 1.0 : -1.0;
  auto g = [&](double q) {
    const double pp = std::sqrt(q * q + c);
    return sgn * (q * q * q * std::sin(q) * std::cosh(pp) -
                  pp * pp * pp * std::sinh(pp) * std::cos(q));
  };
  for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (g(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("collocation oracle reproduces the exact skewadjoint ladder") {
  const TubeParams p = validate(10.0, 0.0, 0.0, 0.5);  // c = gamma = 10
  const auto evs = oracle::collocation_eigenvalues(p, 300.0, false);
  REQUIRE(evs.size() == 6);

  // Frozen transcendental frequencies Im(lambda_n) = q_n sqrt(q_n^2 + 10)
  // for n = 1..5, pinned against the bisection they came from.
  const double frozen[] = {22.4011888095467205, 56.6106636643935544,
                           110.520266573223777, 184.288987671539946,
                           277.876563489847888};
  for (int n = 1; n <= 5; ++n) {
    const double q = skew_q(n, 10.0);
    const double im = q * std::sqrt(q * q + 10.0);
    CHECK(std::abs(im - frozen[n - 1]) < 1e-10 * frozen[n - 1]);
  }
  for (int n = 0; n <= 5; ++n) {
    const double q = skew_q(n, 10.0);
    const double im = q * std::sqrt(q * q + 10.0);
    CHECK(std::abs(evs[n].imag() - im) < 1e-9 * (1.0 + im));
    CHECK(std::abs(evs[n].real()) < 1e-9 * (1.0 + im));
  }
}

TEST_CASE("collocation oracle reproduces the exact benchmark frequencies") {
  const auto evs = oracle::collocation_eigenvalues(default_params(), 1500.0, true);
  REQUIRE(evs.size() >= 12);
  for (int n = 0; n < 12; ++n) {
    const double q = (n + 0.5) * kPi;
    const double im = std::sqrt(q * q * q * q + 9.0 * q * q);
    CHECK(std::abs(evs[n].imag() - im) < 1e-8 * im);
    CHECK(std::abs(evs[n].real()) < 1e-9 * (1.0 + im));
  }
}

TEST_CASE("located spectrum matches the collocation oracle") {
  const Spectrum& sp = default_spectrum();
  // Window holding the real root plus rung pairs 0..20.
  const auto evs = oracle::collocation_eigenvalues(default_params(), 4200.0, false);
  REQUIRE(evs.size() == 22);

  int upper_in_window = 0;
  for (const auto& e : sp.eigenvalues) {
    if (e.lambda.imag() < 0.0 || e.lambda.imag() > 4200.0) continue;
    ++upper_in_window;
    double best = 1e300;
    for (const Complex o : evs) best = std::min(best, std::abs(e.lambda - o));
    CHECK(best < 1e-6 * (1.0 + std::abs(e.lambda)));
  }
  CHECK(upper_in_window == 22);
}

TEST_CASE("rung labels align with the asymptotic ladder") {
  const Spectrum& sp = default_spectrum();
  // 42 pairs (rungs 0..40 up and down) plus one flagged real root.
  REQUIRE(sp.eigenvalues.size() == 83);

  int reals = 0;
  for (const auto& e : sp.eigenvalues)
    if (e.real_root) {
      ++reals;
      CHECK(e.n == 0);
      CHECK(e.lambda.imag() == 0.0);
      CHECK(e.lambda.real() == Approx(-2.98159251919134).margin(1e-8));
    }
  CHECK(reals == 1);

  // Every rung 0..40 present exactly once in the upper half plane, each within
  // half a rung gap of its predicted height.
  for (int n = 0; n <= 40; ++n) {
    int hits = 0;
    Complex lam;
    for (const auto& e : sp.eigenvalues)
      if (e.n == n && !e.real_root && e.lambda.imag() > 0.0) {
        ++hits;
        lam = e.lambda;
      }
    REQUIRE(hits == 1);
    const double predicted = std::pow((n + 0.5) * kPi, 2);
    const double gap = kPi * kPi * (n + 1.0);
    CHECK(std::abs(lam.imag() - predicted) < 0.5 * gap);
  }

  // by_index(0) prefers the real root; signed lookups land on conjugates.
  REQUIRE(sp.by_index(0) != nullptr);
  CHECK(sp.by_index(0)->real_root);
  REQUIRE(sp.by_index(7) != nullptr);
  REQUIRE(sp.by_index(-7) != nullptr);
  CHECK(sp.by_index(-7)->lambda == std::conj(sp.by_index(7)->lambda));
}

TEST_CASE("skewadjoint parameters give a purely imaginary spectrum") {
  const TubeParams p = validate(10.0, 0.0, 0.0, 0.5);
  const Spectrum sp = find_spectrum(p, 20, BoundarySet::full);
  REQUIRE(sp.eigenvalues.size() == 42);  // rungs 0..20, up and down
  for (const auto& e : sp.eigenvalues) {
    CHECK(std::abs(e.lambda.real()) < 1e-8);
    CHECK(e.certified);
    CHECK_FALSE(e.real_root);
  }
}

TEST_CASE("dissipative parameters confine the spectrum to the left half plane") {
  const Spectrum& sp = default_spectrum();
  for (const auto& e : sp.eigenvalues) {
    CHECK(e.lambda.real() < -1e-6);
    CHECK(std::abs(e.lambda) > 1e-6);
    CHECK(e.certified);
  }
  // Ordered by Im, and the upper family's Im is nonnegative increasing in n.
  for (std::size_t i = 1; i < sp.eigenvalues.size(); ++i)
    CHECK(sp.eigenvalues[i].lambda.imag() >= sp.eigenvalues[i - 1].lambda.imag());

  // Real parts settle onto -(beta eta + 1/kappa) = -1.5 at the theorem's rate.
  const Complex l30 = sp.by_index(30)->lambda;
  CHECK(std::abs(l30.real() + 1.5) < 1.5 / 30.0);

  // The abscissa is attained at the rung-0 pair, well right of the asymptote.
  const double absc = spectral_abscissa(sp);
  CHECK(absc == Approx(-0.713065542933789).margin(1e-6));
  CHECK(absc > -1.5);
}

TEST_CASE("conjugate closure holds with fresh determinant residuals") {
  const Spectrum& sp = default_spectrum();
  for (const auto& e : sp.eigenvalues) {
    CHECK(e.residual < tol::root);
    if (e.real_root || e.lambda.imag() <= 0.0) continue;
    // n = 0 pair: by_index(0) prefers the real root, so search directly.
    const Eigenvalue* mirror = nullptr;
    for (const auto& o : sp.eigenvalues)
      if (o.n == -e.n && !o.real_root && o.lambda.imag() < 0.0) mirror = &o;
    REQUIRE(mirror != nullptr);
    CHECK(mirror->lambda == std::conj(e.lambda));
    CHECK(mirror->residual < tol::conj);
  }
}

TEST_CASE("asymptotic agreement at the theorem rate") {
  const Spectrum& sp = default_spectrum();
  // lambda = i rho^2 holds across the family by construction of rho.
  for (const auto& e : sp.eigenvalues)
    CHECK(std::abs(Complex(0.0, 1.0) * e.rho * e.rho - e.lambda) <
          1e-10 * (1.0 + std::abs(e.lambda)));

  const double c10 =
      100.0 * std::abs(sp.by_index(10)->rho - asymptotic_rho(10, default_params()));
  CHECK(c10 > 0.0);
  for (int n = 11; n <= 40; ++n) {
    const double dev =
        n * n * std::abs(sp.by_index(n)->rho - asymptotic_rho(n, default_params()));
    CHECK(dev <= 2.0 * c10);
  }
}

TEST_CASE("newton refinement from asymptotic seeds") {
  const TubeParams& p = default_params();

  SECTION("rung-20 seed converges fast and lands nearby") {
    const Complex seed = asymptotic_lambda(20, p);
    const RefineResult rr = refine_root(seed, p, BoundarySet::full);
    CHECK(rr.iterations <= 6);
    CHECK(rr.residual < tol::root);
    CHECK(std::abs(rr.lambda - seed) < 0.05);
  }

  SECTION("conjugate seed converges to the conjugate root") {
    const Complex root5 = default_spectrum().by_index(5)->lambda;
    const RefineResult rr = refine_root(std::conj(root5), p, BoundarySet::full);
    CHECK(std::abs(rr.lambda - std::conj(root5)) < 1e-8 * (1.0 + std::abs(root5)));
  }

  SECTION("seed at the origin never returns zero") {
    try {
      const RefineResult rr = refine_root(Complex(0.0, 0.0), p, BoundarySet::full);
      CHECK(std::abs(rr.lambda) > 1e-3);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::NoConvergence);
    }
  }

  SECTION("basin guard flags a seed that drifts to a different root") {
    // Seed between rungs with a tight radius: the iterate must travel farther
    // than the allowance to reach any root.
    const Complex l7 = default_spectrum().by_index(7)->lambda;
    const Complex l8 = default_spectrum().by_index(8)->lambda;
    const Complex between = 0.5 * (l7 + l8);
    try {
      refine_root(between, p, BoundarySet::full, 0.05);
      FAIL("expected the basin guard to fire");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ConvergedToWrongBasin);
    }
  }
}

TEST_CASE("winding counts certify roots and their absence") {
  const TubeParams& p = default_params();

  SECTION("a far-left box holds no spectrum") {
    CHECK(count_zeros(Rect{-1001.0, -999.0, -1.0, 1.0}, p, BoundarySet::full) == 0);
  }

  SECTION("a box around one pair winds once") {
    CHECK(count_zeros(Rect{-3.0, 0.25, 20.0, 33.0}, p, BoundarySet::full) == 1);
  }

  SECTION("a tall box counts the whole family below it") {
    const Spectrum& sp = default_spectrum();
    const double top =
        0.5 * (sp.by_index(12)->lambda.imag() + sp.by_index(13)->lambda.imag());
    int inside = 0;
    for (const auto& e : sp.eigenvalues)
      if (e.lambda.imag() >= -1e-4 && e.lambda.imag() < top) ++inside;
    CHECK(count_zeros(Rect{-50.0, 0.5, -1e-4, top}, p, BoundarySet::full) == inside);
  }

  SECTION("certificate windings sum to the upper-half count") {
    const Spectrum& sp = default_spectrum();
    int total = 0;
    for (const auto& c : sp.certificates) total += c.winding;
    int upper = 0;
    for (const auto& e : sp.eigenvalues)
      if (e.lambda.imag() > 0.0 || e.real_root) ++upper;
    CHECK(total == upper);
    // Each certificate's recorded roots actually lie inside its region.
    for (const auto& c : sp.certificates) {
      CHECK(static_cast<int>(c.roots.size()) == c.winding);
      for (const Complex z : c.roots) CHECK(c.region.contains(z));
    }
  }
}

TEST_CASE("simple zeros behave linearly near every refined root") {
  const Spectrum& sp = default_spectrum();
  // At distance delta from a simple zero the Newton ratio Delta/Delta' has
  // magnitude ~delta; a multiple zero would halve it or worse.
  for (int n : {10, 20, 30, 40}) {
    const Complex root = sp.by_index(n)->lambda;
    const double delta = 1e-3 * (1.0 + std::abs(root));
    const Complex probe = root + Complex(0.0, delta);
    const DetWithDerivative d =
        determinant_with_derivative(probe, default_params(), BoundarySet::full);
    const double ratio = std::abs(d.value / d.derivative);
    CHECK(ratio > 0.7 * delta);
    CHECK(ratio < 1.3 * delta);
  }
}

TEST_CASE("transport damping alone still moves the family left") {
  const TubeParams p = validate(10.0, 1.0, 0.0, 0.5);  // kappa = 0
  const Spectrum sp = find_spectrum(p, 8, BoundarySet::full);
  const auto evs = oracle::collocation_eigenvalues(p, 800.0, false);
  REQUIRE(evs.size() >= 9);
  for (const auto& e : sp.eigenvalues) {
    if (e.lambda.imag() < 0.0) continue;
    double best = 1e300;
    for (const Complex o : evs) best = std::min(best, std::abs(e.lambda - o));
    CHECK(best < 1e-6 * (1.0 + std::abs(e.lambda)));
    CHECK(e.lambda.real() < 0.0);
  }
  // Real parts head toward the pure-transport asymptote -2 beta eta = -1.
  CHECK(sp.by_index(8)->lambda.real() == Approx(-1.0).margin(0.05));
}

TEST_CASE("benchmark boundary set is selfadjoint in frequencies") {
  const Spectrum sp = find_spectrum(default_params(), 8, BoundarySet::benchmark);
  REQUIRE(sp.eigenvalues.size() == 18);
  for (const auto& e : sp.eigenvalues) {
    CHECK(std::abs(e.lambda.real()) < 1e-8);
    if (e.lambda.imag() < 0.0) continue;
    const double q = (e.n + 0.5) * kPi;
    const double exact = std::sqrt(q * q * q * q + 9.0 * q * q);
    CHECK(std::abs(e.lambda.imag() - exact) < 1e-7 * exact);
  }
}

TEST_CASE("spectrum preconditions reject out-of-range requests") {
  auto code = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::NoConvergence;
  };
  CHECK(code([] { find_spectrum(default_params(), 0); }) == ErrorCode::BadValue);
  CHECK(code([] { find_spectrum(default_params(), 61); }) == ErrorCode::BadValue);
}
