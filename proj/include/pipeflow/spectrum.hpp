// pipeflow: eigenvalue location with argument-principle certificates.
//
// Roots of the characteristic determinant are refined by Newton's method on
// the log-scaled determinant. Existence and completeness are certified by
// winding counts over rectangles: the strip between consecutive ladder
// midlines must wind exactly once, and the low-frequency box is subdivided
// until every piece holds at most one root. All phase bookkeeping happens on
// the scaled determinant value, whose positive rescale factor cannot move a
// phase or a zero.
#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "pipeflow/asymptotics.hpp"
#include "pipeflow/ode.hpp"

namespace pipeflow {

struct Eigenvalue {
  int n = 0;            // rung index; conjugates get -n, real roots 0
  Complex lambda;
  Complex rho;          // principal branch of sqrt(lambda / i)
  double residual = 0.0;  // cancellation-aware determinant residual
  bool certified = false;
  bool real_root = false;  // purely real eigenvalue; self-paired at index 0
};

struct Rect {
  double re_lo, re_hi, im_lo, im_hi;
  Complex center() const { return {0.5 * (re_lo + re_hi), 0.5 * (im_lo + im_hi)}; }
  double width() const { return re_hi - re_lo; }
  double height() const { return im_hi - im_lo; }
  bool contains(Complex z) const {
    return z.real() >= re_lo && z.real() <= re_hi && z.imag() >= im_lo &&
           z.imag() <= im_hi;
  }
  Rect dilated(double f) const {
    const Complex c = center();
    return {c.real() - 0.5 * f * width(), c.real() + 0.5 * f * width(),
            c.imag() - 0.5 * f * height(), c.imag() + 0.5 * f * height()};
  }
};

struct Certificate {
  Rect region;
  int winding = 0;
  std::vector<Complex> roots;  // refined roots found inside this region
};

struct Spectrum {
  TubeParams params;
  BoundarySet set = BoundarySet::full;
  std::vector<Eigenvalue> eigenvalues;  // sorted by increasing Im(lambda)
  std::vector<Certificate> certificates;

  // Index n is unique for n != 0. Index 0 can be shared by a real root and a
  // rung-0 pair (both occur at the default parameters); prefer the smallest
  // |Im|, then the upper-half member, so lookups stay deterministic.
  const Eigenvalue* by_index(int n) const {
    const Eigenvalue* best = nullptr;
    for (const auto& e : eigenvalues) {
      if (e.n != n) continue;
      if (!best || std::abs(e.lambda.imag()) < std::abs(best->lambda.imag()) ||
          (std::abs(e.lambda.imag()) == std::abs(best->lambda.imag()) &&
           e.lambda.imag() > best->lambda.imag()))
        best = &e;
    }
    return best;
  }
};

inline Complex rho_of_lambda(Complex lambda) {
  return std::sqrt(lambda / Complex(0.0, 1.0));
}

inline double spectral_abscissa(const Spectrum& sp) {
  double a = -std::numeric_limits<double>::infinity();
  for (const auto& e : sp.eigenvalues) a = std::max(a, e.lambda.real());
  return a;
}

struct RefineResult {
  Complex lambda;
  double residual;
  int iterations;
};

// Newton iteration on the scaled determinant. The optional seed gap bounds how
// far the iterate may drift from the seed before we declare a basin escape.
inline RefineResult refine_root(Complex seed, const TubeParams& p, BoundarySet set,
                                std::optional<double> basin_radius = std::nullopt,
                                int max_iter = 50) {
  Complex lambda = seed;
  for (int it = 1; it <= max_iter; ++it) {
    const DetWithDerivative d = determinant_with_derivative(lambda, p, set);
    const double dscale = std::abs(d.derivative);
    if (!(dscale > 0.0) || !std::isfinite(dscale))
      throw Error(ErrorCode::NoConvergence, "vanishing determinant derivative");
    const Complex step = -d.value / d.derivative;
    lambda += step;
    if (basin_radius && std::abs(lambda - seed) > *basin_radius)
      throw Error(ErrorCode::ConvergedToWrongBasin,
                  "Newton iterate left the seed's ladder gap");
    if (std::abs(step) <= tol::root * (1.0 + std::abs(lambda))) {
      const DetValue fin = characteristic_determinant(lambda, p, set);
      return {lambda, fin.residual(), it};
    }
  }
  throw Error(ErrorCode::NoConvergence, "Newton did not converge in 50 iterations");
}

namespace detail {

struct EdgeSample {
  Complex z;
  Complex value;     // scaled determinant (scale irrelevant for phase)
  double residual;
};

// Total phase turn along one edge, refining until successive samples differ by
// less than pi/4. A residual dip below the floor means the contour grazes a
// root; the caller reacts by dilating the rectangle.
inline double edge_phase(Complex a, Complex b, const TubeParams& p, BoundarySet set,
                         double dip_floor, int& budget) {
  struct Node {
    Complex z;
    Complex v;
    double log_mag;  // true ln|Delta|, scale folded back in
  };
  auto eval = [&](Complex z) -> Node {
    if (--budget < 0)
      throw Error(ErrorCode::NoConvergence, "winding sample budget exhausted");
    const DetValue d = characteristic_determinant(z, p, set);
    if (d.residual() < dip_floor)
      throw Error(ErrorCode::BoundaryTooClose, "determinant dip on contour edge");
    return {z, d.value, std::log(std::abs(d.value)) + d.log_scale};
  };
  // Recursive bisection with an explicit stack of (left, right, depth).
  double phase = 0.0;
  std::vector<std::pair<Node, Node>> stack;
  std::vector<int> depth_stack;
  const int n0 = 8;
  std::vector<Node> base;  // initial uniform subdivision
  base.reserve(n0 + 1);
  for (int i = 0; i <= n0; ++i)
    base.push_back(eval(a + (b - a) * (static_cast<double>(i) / n0)));
  for (int i = n0; i >= 1; --i) {
    stack.push_back({base[i - 1], base[i]});
    depth_stack.push_back(0);
  }
  while (!stack.empty()) {
    auto [l, r] = stack.back();
    stack.pop_back();
    const int depth = depth_stack.back();
    depth_stack.pop_back();
    const double d = std::arg(r.v / l.v);
    // Two roots hugging the contour inside one gap turn the phase by ~2 pi,
    // which the step test alone cannot see (it wraps to ~0). Such a pair also
    // forces |Delta| to dip between the samples, so refine on magnitude
    // variation as well; base intervals always split once to seed both tests.
    const double mag_step = std::abs(r.log_mag - l.log_mag);
    if (depth > 0 && std::abs(d) < kPi / 4.0 && mag_step < 1.4) {
      phase += d;
      continue;
    }
    if (depth > 30)
      throw Error(ErrorCode::BoundaryTooClose,
                  "phase step will not settle; root on or next to the contour");
    const Node m = eval(0.5 * (l.z + r.z));
    stack.push_back({m, r});
    depth_stack.push_back(depth + 1);
    stack.push_back({l, m});
    depth_stack.push_back(depth + 1);
  }
  return phase;
}

inline int winding_number(const Rect& rect, const TubeParams& p, BoundarySet set,
                          double dip_floor, int budget = 4000) {
  const Complex c1(rect.re_lo, rect.im_lo), c2(rect.re_hi, rect.im_lo),
      c3(rect.re_hi, rect.im_hi), c4(rect.re_lo, rect.im_hi);
  double phase = 0.0;
  phase += edge_phase(c1, c2, p, set, dip_floor, budget);
  phase += edge_phase(c2, c3, p, set, dip_floor, budget);
  phase += edge_phase(c3, c4, p, set, dip_floor, budget);
  phase += edge_phase(c4, c1, p, set, dip_floor, budget);
  const double turns = phase / (2.0 * kPi);
  const long k = std::lround(turns);
  if (std::abs(turns - static_cast<double>(k)) > 0.15)
    throw Error(ErrorCode::WindingNotInteger,
                "contour phase sum is not an integer multiple of 2 pi");
  if (k < 0)
    throw Error(ErrorCode::WindingNotInteger, "negative winding over a rectangle");
  return static_cast<int>(k);
}

}  // namespace detail

// Winding count with up to five 1% dilation retries when the boundary grazes
// a root.
inline int count_zeros(Rect rect, const TubeParams& p, BoundarySet set = BoundarySet::full,
                       double dip_floor = 1e-10) {
  for (int attempt = 0;; ++attempt) {
    try {
      return detail::winding_number(rect, p, set, dip_floor);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::BoundaryTooClose || attempt >= 5) throw;
      rect = rect.dilated(1.01);
    }
  }
}

namespace detail {

struct BoxWork {
  Rect rect;
  int winding;
  int depth;
};

// Subdivide a rectangle until each piece isolates one root, then polish the
// root by Newton from the centroid. Certificates for every piece (including
// empty ones) are appended so the union keeps covering the original region.
inline void isolate_roots(const Rect& start, const TubeParams& p, BoundarySet set,
                          std::vector<Certificate>& certs,
                          std::vector<Eigenvalue>& roots) {
  std::vector<BoxWork> queue;
  {
    Rect r = start;
    int w = -1;
    // Initial count, with dilation allowed to move edges off roots.
    for (int attempt = 0;; ++attempt) {
      try {
        w = winding_number(r, p, set, 1e-10);
        break;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::BoundaryTooClose || attempt >= 5) throw;
        r = r.dilated(1.01);
      }
    }
    queue.push_back({r, w, 0});
  }
  while (!queue.empty()) {
    BoxWork bw = queue.back();
    queue.pop_back();
    if (bw.winding == 0) {
      certs.push_back({bw.rect, 0, {}});
      continue;
    }
    if (bw.winding == 1) {
      // Newton from the centroid; fall back to quarter-point seeds.
      std::vector<Complex> seeds{bw.rect.center()};
      const double dw = 0.25 * bw.rect.width(), dh = 0.25 * bw.rect.height();
      const Complex c = bw.rect.center();
      seeds.push_back(c + Complex(dw, dh));
      seeds.push_back(c + Complex(-dw, dh));
      seeds.push_back(c + Complex(dw, -dh));
      seeds.push_back(c + Complex(-dw, -dh));
      bool placed = false;
      for (const Complex s : seeds) {
        try {
          const RefineResult rr = refine_root(s, p, set);
          if (bw.rect.contains(rr.lambda)) {
            Eigenvalue e;
            e.lambda = rr.lambda;
            e.rho = rho_of_lambda(rr.lambda);
            e.residual = rr.residual;
            e.certified = true;
            roots.push_back(e);
            certs.push_back({bw.rect, 1, {rr.lambda}});
            placed = true;
            break;
          }
        } catch (const Error&) {
          // try the next seed
        }
      }
      if (!placed)
        throw Error(ErrorCode::IncompleteSpectrum,
                    "winding count 1 but Newton failed to localise the root");
      continue;
    }
    if (bw.depth > 14)
      throw Error(ErrorCode::IncompleteSpectrum,
                  "root cluster did not separate under subdivision");
    // Split along the longer side; nudge the cut if it lands on a root.
    const bool horizontal = bw.rect.height() >= bw.rect.width();
    const double fracs[] = {0.5, 0.45, 0.55, 0.40, 0.60, 0.35, 0.65};
    bool done = false;
    for (const double f : fracs) {
      Rect lo = bw.rect, hi = bw.rect;
      if (horizontal) {
        const double cut = bw.rect.im_lo + f * bw.rect.height();
        lo.im_hi = cut;
        hi.im_lo = cut;
      } else {
        const double cut = bw.rect.re_lo + f * bw.rect.width();
        lo.re_hi = cut;
        hi.re_lo = cut;
      }
      try {
        const int w_lo = winding_number(lo, p, set, 1e-10);
        const int w_hi = winding_number(hi, p, set, 1e-10);
        if (w_lo + w_hi != bw.winding)
          continue;  // a root sat on the cut; shift it
        queue.push_back({lo, w_lo, bw.depth + 1});
        queue.push_back({hi, w_hi, bw.depth + 1});
        done = true;
        break;
      } catch (const Error& e) {
        if (e.code() == ErrorCode::BoundaryTooClose ||
            e.code() == ErrorCode::WindingNotInteger)
          continue;
        throw;
      }
    }
    if (!done)
      throw Error(ErrorCode::IncompleteSpectrum,
                  "could not place a quiet cut through a root cluster");
  }
}

// Ladder of predicted Im(lambda) for modes 1..n_max+1, used to place strip
// boundaries. kappa=0 rides the selfadjoint (n+1/4) pi family, computed from
// its exact characteristic equation q^3 tan q = p^3 tanh p.
inline std::vector<double> predicted_imag_ladder(const TubeParams& p, BoundarySet set,
                                                 int n_max) {
  std::vector<double> im(n_max + 2, 0.0);
  const double c = p.stiffness();
  if (set == BoundarySet::benchmark) {
    for (int n = 1; n <= n_max + 1; ++n) {
      const double t = benchmark_tau_exact(n, p);
      im[n] = t * t;
    }
    return im;
  }
  if (p.kappa > 0.0) {
    for (int n = 1; n <= n_max + 1; ++n) im[n] = asymptotic_lambda(n, p).imag();
    return im;
  }
  // kappa = 0: leading boundary operator is w''(1)=0; its ladder solves
  // q^3 tan q = p^3 tanh p with p^2 = q^2 + c, and Im(lambda) = p q.
  for (int n = 1; n <= n_max + 1; ++n) {
    double lo = n * kPi + 1e-3, hi = n * kPi + kPi / 2.0 - 1e-3;
    const double sgn = (n % 2 == 0) ? 1.0 : -1.0;
    auto g = [&](double q) {
      const double pp = std::sqrt(q * q + c);
      return sgn * (q * q * q * std::sin(q) * std::cosh(pp) -
                    pp * pp * pp * std::sinh(pp) * std::cos(q));
    };
    // g(lo) < 0 < g(hi) by construction of the bracket.
    for (int it = 0; it < 200 && hi - lo > 1e-14 * hi; ++it) {
      const double mid = 0.5 * (lo + hi);
      (g(mid) < 0.0 ? lo : hi) = mid;
    }
    const double q = 0.5 * (lo + hi);
    im[n] = q * std::sqrt(q * q + c);
  }
  return im;
}

}  // namespace detail

// Locate the upper-half eigenvalue family up to rung n_max, plus conjugates
// and any real roots. Rungs above 4 come from asymptotic ladder seeds, each
// certified by a strip of winding one; everything below the first strip is
// swept by certified subdivision of a box reaching down to the real axis, and
// its pairs take the rung labels counting down from 4 (the rung-0 pair exists
// at the default parameters). Real roots take index 0 with a flag.
inline Spectrum find_spectrum(const TubeParams& p, int n_max,
                              BoundarySet set = BoundarySet::full) {
  if (n_max < 1 || n_max > 60)
    throw Error(ErrorCode::BadValue, "n_max must lie in 1..60");
  Spectrum sp;
  sp.params = p;
  sp.set = set;

  const std::vector<double> ladder = detail::predicted_imag_ladder(p, set, n_max);
  auto cut_between = [&](int n) {  // horizontal line separating modes n and n+1
    return 0.5 * (ladder[n] + ladder[n + 1]);
  };

  // Horizontal extent: all physical roots live in Re <= 0; the right edge
  // sits slightly inside the right half plane, the left edge well below the
  // deepest decay rate we expect (asymptote + safety factor).
  const double asymptote =
      p.flow() + (p.kappa > 0.0 ? 1.0 / p.kappa : 0.0);
  const double re_lo = -std::max(50.0, 12.0 * (asymptote + std::sqrt(p.stiffness())));
  const double re_hi = 0.5 + 0.1 * asymptote;

  std::vector<Eigenvalue> roots;
  std::vector<Certificate> certs;

  // Low box: everything below the rung-J/rung-J+1 midline, by subdivision.
  // Its non-real roots are labeled counting down so the topmost gets rung J:
  // at the default parameters the box holds five pairs, rungs 0..4, and the
  // rung-0 pair is genuine (the asymptotic family starts at (1/2)pi).
  const int J = std::min(4, n_max);
  {
    std::vector<Eigenvalue> low;
    // Slicing at the ladder midlines keeps each piece's contour short enough
    // that no sample gap can straddle two roots; the pieces tile the box.
    const double floor_im = -1e-6 * std::max(1.0, ladder[1]);
    double lo_im = floor_im;
    for (int n = 1; n <= J; ++n) {
      const double hi_im = cut_between(n);
      detail::isolate_roots(Rect{re_lo, re_hi, lo_im, hi_im}, p, set, certs, low);
      lo_im = hi_im;
    }
    std::vector<Eigenvalue*> pairs;
    for (auto& r : low) {
      if (std::abs(r.lambda.imag()) < 1e-9 * (1.0 + std::abs(r.lambda))) {
        r.n = 0;
        r.real_root = true;
        r.lambda = Complex(r.lambda.real(), 0.0);
        r.rho = rho_of_lambda(r.lambda);
      } else {
        pairs.push_back(&r);
      }
    }
    std::sort(pairs.begin(), pairs.end(), [](const Eigenvalue* a, const Eigenvalue* b) {
      return a->lambda.imag() < b->lambda.imag();
    });
    if (static_cast<int>(pairs.size()) > J + 1)
      throw Error(ErrorCode::IncompleteSpectrum,
                  "more low-frequency pairs than rung labels 0..J; indexing "
                  "would need negative rungs");
    for (std::size_t i = 0; i < pairs.size(); ++i)
      pairs[i]->n = J + 1 - static_cast<int>(pairs.size()) + static_cast<int>(i);
    roots.insert(roots.end(), low.begin(), low.end());
  }

  // One strip per higher rung; the asymptotic seed almost always lands the
  // root directly (the ladder built it), so try Newton first and certify the
  // strip winds once; fall back to subdivision when it strays.
  for (int n = J + 1; n <= n_max; ++n) {
    Rect strip{re_lo, re_hi, cut_between(n - 1), cut_between(n)};
    std::vector<Eigenvalue> found;
    bool fast = false;
    try {
      const Complex seed(-0.5 * asymptote, ladder[n]);
      const RefineResult rr =
          refine_root(seed, p, set, 0.75 * (cut_between(n) - cut_between(n - 1)));
      if (strip.contains(rr.lambda) &&
          detail::winding_number(strip, p, set, 1e-10) == 1) {
        Eigenvalue e;
        e.lambda = rr.lambda;
        e.rho = rho_of_lambda(rr.lambda);
        e.residual = rr.residual;
        e.certified = true;
        found.push_back(e);
        certs.push_back({strip, 1, {rr.lambda}});
        fast = true;
      }
    } catch (const Error&) {
      // strayed or grazed; subdivision handles it below
    }
    if (!fast) {
      found.clear();
      detail::isolate_roots(strip, p, set, certs, found);
    }
    if (found.size() != 1)
      throw Error(ErrorCode::IncompleteSpectrum,
                  "rung strip does not hold exactly one eigenvalue; rung "
                  "labels would be ambiguous");
    found.front().n = n;
    roots.push_back(found.front());
  }

  // Certificates partition the sweep region, so the total winding equals the
  // number of distinct roots found; duplicates across dilated edges collide.
  std::sort(roots.begin(), roots.end(), [](const Eigenvalue& a, const Eigenvalue& b) {
    return a.lambda.imag() < b.lambda.imag();
  });
  for (std::size_t i = 1; i < roots.size(); ++i)
    if (std::abs(roots[i].lambda - roots[i - 1].lambda) <
        1e-7 * (1.0 + std::abs(roots[i].lambda)))
      throw Error(ErrorCode::IncompleteSpectrum,
                  "two certificates captured the same root");

  int expected = 0;
  for (const auto& c : certs) expected += c.winding;
  if (static_cast<int>(roots.size()) != expected)
    throw Error(ErrorCode::IncompleteSpectrum,
                "certified count does not match located roots");

  // Origin must stay in the resolvent set.
  for (const auto& r : roots)
    if (std::abs(r.lambda) < 1e-6)
      throw Error(ErrorCode::IncompleteSpectrum,
                  "root at the origin contradicts invertibility of the generator");

  // Conjugate family: lambda_{-n} = conj(lambda_n), checked by evaluating the
  // determinant there rather than assumed. Real roots are self-paired.
  std::vector<Eigenvalue> all;
  all.reserve(2 * roots.size());
  for (const auto& r : roots) {
    if (r.real_root) {
      all.push_back(r);
      continue;
    }
    Eigenvalue conj_e;
    conj_e.n = -r.n;
    conj_e.lambda = std::conj(r.lambda);
    conj_e.rho = rho_of_lambda(conj_e.lambda);
    conj_e.residual = characteristic_determinant(conj_e.lambda, p, set).residual();
    conj_e.certified = r.certified;
    all.push_back(conj_e);
    all.push_back(r);
  }
  std::sort(all.begin(), all.end(), [](const Eigenvalue& a, const Eigenvalue& b) {
    if (a.lambda.imag() != b.lambda.imag()) return a.lambda.imag() < b.lambda.imag();
    return a.lambda.real() > b.lambda.real();
  });

  sp.eigenvalues = std::move(all);
  sp.certificates = std::move(certs);
  return sp;
}

}  // namespace pipeflow
