#pragma once
// Modified balancing energy on the space of invariant (diagonal) forms:
//   Z_A(H) = I(FS(H)) + (V k^n / N) tr(S^{-1} log H),
//   S = (1 + c_A) I - A / (2 pi k),
// its gradient delta Z_A = -mubar + (V k^n / N) S^{-1} in the H-orthonormal
// frame, the normalizing constant c_A, and the positive semidefinite Hessian
// quadratic form of the I(FS) part with its exact null space along the torus
// generators. The I(FS) part is only ever needed relative to a reference
// form and is recovered by integrating its derivative along the connecting
// geodesic.

#include <stdexcept>
#include <utility>
#include <vector>

#include "qk/symmetry.hpp"

namespace qk {

// ---------------- context ----------------
struct EnergyContext {
  HermitianEndo a;    // modification direction, diagonal, frame rep
  double ca = 0;      // normalizing constant
  HermitianForm href; // reference point for energy values

  // diagonal of S = (1 + ca) I - A/(2 pi k)
  VecR sdiag(int k) const {
    const int N = a.dim();
    VecR s(N);
    for (int i = 0; i < N; ++i)
      s[i] = 1.0 + ca - a.m(i, i).real() / (2.0 * kPi * k);
    return s;
  }
};

inline double pair_real(const HermitianEndo& x, const HermitianEndo& y) {
  return (x.m * y.m).trace().real();
}

// c_A = tr(A mubar) / (2 pi k^{n+1} V); |c_A| <= ||A||_op / (2 pi k)
inline double compute_CA(const Setup& st, const HermitianForm& h,
                         const HermitianEndo& a) {
  const VecR m = centre_of_mass(st, h);
  double tr = 0;
  for (int i = 0; i < st.N; ++i) tr += a.m(i, i).real() * m[i];
  return tr / (2.0 * kPi * st.k * st.mass());
}

inline void require_nondegenerate(const VecR& s) {
  for (int i = 0; i < int(s.size()); ++i)
    if (!(s[i] > 1e-8))
      throw std::runtime_error(
          "modification direction has a near-degenerate weight: "
          "S entry " + std::to_string(s[i]) + " at index " +
          std::to_string(i));
}

// ---------------- gradient ----------------
// delta Z_A at a diagonal form, itself diagonal in the H-orthonormal frame.
inline HermitianEndo delta_ZA(const Setup& st, const EnergyContext& ctx,
                              const HermitianForm& h) {
  const VecR m = centre_of_mass(st, h);
  const VecR s = ctx.sdiag(st.k);
  require_nondegenerate(s);
  HermitianEndo g;
  g.m = MatC::Zero(st.N, st.N);
  const double c = st.mass() / st.N;
  for (int i = 0; i < st.N; ++i) g.m(i, i) = cxd(-m[i] + c / s[i], 0.0);
  return g;
}

// ---------------- energy ----------------
// tr part of Z_A relative to the reference form; valid for any Hermitian
// argument since it is pure matrix algebra.
inline double energy_trace_part(const Setup& st, const EnergyContext& ctx,
                                const HermitianForm& h) {
  const VecR s = ctx.sdiag(st.k);
  require_nondegenerate(s);
  const MatC lg = logm_pd(h.m) - logm_pd(ctx.href.m);
  double tr = 0;
  for (int i = 0; i < st.N; ++i) tr += lg(i, i).real() / s[i];
  return tr * st.mass() / st.N;
}

// Z_A(h) - Z_A(href) for diagonal h, href. The I(FS) part is the line
// integral of -tr(B mubar(H(t))) along the geodesic H(t) = href e^{tB},
// B = log h - log href, by composite Simpson.
inline double energy_ZA(const Setup& st, const EnergyContext& ctx,
                        const HermitianForm& h, int panels = 21) {
  const int N = st.N;
  VecR b(N);
  for (int i = 0; i < N; ++i)
    b[i] = std::log(h.m(i, i).real() / ctx.href.m(i, i).real());

  const auto slope = [&](double t) {
    HermitianForm ht;
    ht.dim = N;
    ht.m = MatC::Zero(N, N);
    for (int i = 0; i < N; ++i)
      ht.m(i, i) = ctx.href.m(i, i).real() * std::exp(t * b[i]);
    const VecR m = centre_of_mass(st, ht);
    return -m.dot(b);
  };

  const int segs = 2 * panels;
  const double hstep = 1.0 / segs;
  double ifs = slope(0.0) + slope(1.0);
  for (int i = 1; i < segs; ++i)
    ifs += (i % 2 ? 4.0 : 2.0) * slope(i * hstep);
  ifs *= hstep / 3.0;

  return ifs + energy_trace_part(st, ctx, h);
}

// ---------------- normalizing-constant refresh ----------------
// Smallest-magnitude root of sum_i 1/(x_i + d) = target over d > -min(x):
// safeguarded Newton on a convex decreasing function.
inline double recenter_delta(const VecR& x, double target) {
  const double xmin = x.minCoeff();
  double lo = -xmin + 1e-300;  // f -> +inf
  double hi = -xmin + double(x.size()) / target;  // f(hi) < target side?
  const auto f = [&](double d) {
    double s = 0;
    for (int i = 0; i < int(x.size()); ++i) s += 1.0 / (x[i] + d);
    return s - target;
  };
  while (f(hi) > 0) hi = 2.0 * (hi + xmin) - xmin;  // double the offset
  double d = 0.0;
  if (!(d > lo) || f(d) < 0) d = 0.5 * (lo + hi);
  for (int it = 0; it < 50; ++it) {
    double s = 0, ds = 0;
    for (int i = 0; i < int(x.size()); ++i) {
      const double r = 1.0 / (x[i] + d);
      s += r;
      ds -= r * r;
    }
    const double fv = s - target;
    if (std::abs(fv) <= 1e-13 * target) break;
    if (fv > 0) lo = d; else hi = d;
    double dn = d - fv / ds;
    if (!(dn > lo && dn < hi)) dn = 0.5 * (lo + hi);
    d = dn;
  }
  return d;
}

// shift ca so that tr(S^{-1}) = N exactly (solvability of the critical
// point equation mubar = (mass/N) S^{-1} at fixed total mass)
inline void recenter_constant(const Setup& st, EnergyContext& ctx) {
  ctx.ca += recenter_delta(ctx.sdiag(st.k), double(st.N));
}

// ---------------- Hessian quadratic form ----------------
// Second variation of the I(FS) part at a balanced form: for a Hermitian
// direction B acting on the embedded manifold, the integrand is the squared
// norm of the component of the induced field normal to the manifold,
//   <a,a>_Z - c^* Gamma^{-1} c,  a = conj(B) yhat,
// with Gamma the (theta-free) Gram of the coordinate tangent fields and c
// their pairing against a. Angular dependence is a trigonometric polynomial
// of degree <= 2k per dimension, so the uniform grid is exact.
inline VecR hessian_quadform(const Setup& st, const HermitianForm& h,
                             const std::vector<HermitianEndo>& dirs) {
  const MetricModel mm = fs_model(st.basis, h);
  const int D = int(dirs.size());
  const int n = st.poly.n;
  const int B = st.quad.blocks();
  std::vector<VecR> acc(B, VecR::Zero(D));
  std::vector<double> mass(B, 0.0);

  // For a batch of diagonal directions the integrand is theta-free (the
  // angular average collapses onto lattice covariances), so the angular grid
  // is skipped entirely; one mixed entry sends the whole batch to the dense
  // path below.
  bool all_diag = true;
  for (const auto& d : dirs) {
    MatC off = d.m;
    off.diagonal().setZero();
    if (off.norm() != 0.0) all_diag = false;
  }
  if (all_diag) {
    std::vector<VecR> dd;
    dd.reserve(D);
    for (const auto& d : dirs) dd.push_back(d.m.diagonal().real());
    const MatR& exps = st.basis.exps;
    scan_radial(st.quad, mm, [&](int blk, const ScanNode& nd) {
      const VecR& p = nd.terms[0].p;
      const int N = int(p.size());
      const double g00 = nd.cum.m2[0][0];
      const double g01 = n == 2 ? nd.cum.m2[0][1] : 0.0;
      const double g11 = n == 2 ? nd.cum.m2[1][1] : 1.0;
      const double det = n == 2 ? nd.density : g00;
      const bool solvable = det > 0 && std::isfinite(1.0 / det);
      VecR q = VecR::Zero(D);
      for (int d = 0; d < D; ++d) {
        const VecR& v = dd[d];
        double sd = 0, sdd = 0, cx0 = 0, cx1 = 0;
        for (int i = 0; i < N; ++i) {
          const double w = p[i] * v[i];
          sd += w;
          sdd += w * v[i];
          cx0 += exps(i, 0) * w;
          if (n == 2) cx1 += exps(i, 1) * w;
        }
        double val = sdd - sd * sd;
        if (solvable) {
          const double c0 = cx0 - nd.terms[0].mean[0] * sd;
          if (n == 1) {
            val -= c0 * c0 / det;
          } else {
            const double c1 = cx1 - nd.terms[0].mean[1] * sd;
            val -= (g11 * c0 * c0 - 2.0 * g01 * c0 * c1 + g00 * c1 * c1) / det;
          }
        }
        q[d] += val;
      }
      acc[blk] += nd.mass_w * q;
      mass[blk] += nd.mass_w;
    });
    VecR out = VecR::Zero(D);
    double m = 0;
    for (int b = 0; b < B; ++b) {
      out += acc[b];
      m += mass[b];
    }
    return out * (st.mass() / m);
  }

  const AngularGrid grid = AngularGrid::make(st.basis);
  std::vector<MatC> cd;
  cd.reserve(D);
  for (const auto& d : dirs) cd.push_back(d.m.conjugate());
  const int m1max = n == 2 ? grid.M : 1;
  const double npts = double(grid.points());

  scan_radial(st.quad, mm, [&](int blk, const ScanNode& nd) {
    const TermNode& tn = nd.terms[0];
    const VecR& p = tn.p;
    const int N = int(p.size());
    // tangent Gram and its adjugate; fall back to dropping the tangential
    // subtraction where the (nonnegative) integrand is negligible anyway
    const double g00 = nd.cum.m2[0][0];
    const double g01 = n == 2 ? nd.cum.m2[0][1] : 0.0;
    const double g11 = n == 2 ? nd.cum.m2[1][1] : 1.0;
    const double det = n == 2 ? nd.density : g00;
    const bool solvable = det > 0 && std::isfinite(1.0 / det);

    VecC yh, a;
    VecR q = VecR::Zero(D);
    for (int m1 = 0; m1 < m1max; ++m1)
      for (int m0 = 0; m0 < grid.M; ++m0) {
        grid.yhat(p, m0, m1, yh);
        for (int d = 0; d < D; ++d) {
          a.noalias() = cd[d] * yh;
          const cxd ya = yh.dot(a);  // yhat^* a
          double val = a.squaredNorm() - std::norm(ya);
          if (solvable) {
            cxd c0(0, 0), c1(0, 0);
            for (int i = 0; i < N; ++i) {
              const cxd w = std::conj(yh[i]) * a[i];
              c0 += st.basis.exps(i, 0) * w;
              if (n == 2) c1 += st.basis.exps(i, 1) * w;
            }
            c0 -= tn.mean[0] * ya;
            double sub;
            if (n == 1) {
              sub = std::norm(c0) / det;
            } else {
              c1 -= tn.mean[1] * ya;
              sub = (g11 * std::norm(c0) - 2.0 * g01 * (c0 * std::conj(c1)).real() +
                     g00 * std::norm(c1)) /
                    det;
            }
            val -= sub;
          }
          q[d] += val;
        }
      }
    acc[blk] += (nd.mass_w / npts) * q;
    mass[blk] += nd.mass_w;
  });

  VecR out = VecR::Zero(D);
  double m = 0;
  for (int b = 0; b < B; ++b) {
    out += acc[b];
    m += mass[b];
  }
  return out * (st.mass() / m);
}

}  // namespace qk
