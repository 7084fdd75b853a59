#pragma once
// Torus symmetry data on the section space: the n diagonal traceless
// generators, their L^2 field-pairing Gram, projection of a Hermitian
// direction off the symmetry span, induced Hamiltonians, and the exact
// angular grid used by curvature-of-energy integrands. The key reduction:
// pairing any direction against a diagonal generator only sees the diagonal
// of the direction (angular frequencies are orthogonal), so all symmetry
// projections are radial covariance integrals.

#include <vector>

#include "qk/quantization.hpp"

namespace qk {

// ---------------- generators and projection ----------------
struct LieData {
  int r = 0;               // torus rank = polytope dimension
  std::vector<VecR> gens;  // diagonal traceless generators, length-N each
  MatR gram;               // field-pairing Gram, r x r, positive definite
};

// Covariance of two diagonal observables under the node distribution
inline double node_cov(const VecR& p, const VecR& a, const VecR& b) {
  double ma = 0, mb = 0, cov = 0;
  const int cnt = int(p.size());
  for (int i = 0; i < cnt; ++i) {
    ma += p[i] * a[i];
    mb += p[i] * b[i];
  }
  for (int i = 0; i < cnt; ++i) cov += p[i] * (a[i] - ma) * (b[i] - mb);
  return cov;
}

// diagonal traceless generators A_j = diag(alpha_j - mean(alpha_j))
inline std::vector<VecR> lie_generators(const SectionBasis& b) {
  std::vector<VecR> gens;
  for (int j = 0; j < b.poly.n; ++j) {
    VecR g = b.exps.col(j);
    gens.push_back(VecR(g.array() - g.mean()));
  }
  return gens;
}

// The Gram is the L^2 pairing of the induced projective fields,
// Gram_jl = ∫ Cov_p(a_j, a_l) dmu.
inline LieData make_lie_data(const Setup& st, const HermitianForm& h) {
  LieData ld;
  ld.r = st.poly.n;
  ld.gens = lie_generators(st.basis);
  const MetricModel mm = fs_model(st.basis, h);
  const int B = st.quad.blocks();
  std::vector<MatR> acc(B, MatR::Zero(ld.r, ld.r));
  std::vector<double> mass(B, 0.0);
  scan_radial(st.quad, mm, [&](int b, const ScanNode& nd) {
    for (int j = 0; j < ld.r; ++j)
      for (int l = j; l < ld.r; ++l)
        acc[b](j, l) += nd.mass_w * nd.cum.m2[j][l];
    mass[b] += nd.mass_w;
  });
  MatR g = MatR::Zero(ld.r, ld.r);
  double m = 0;
  for (int b = 0; b < B; ++b) {
    g += acc[b];
    m += mass[b];
  }
  const double pin = st.mass() / m;
  MatR full = g.selfadjointView<Eigen::Upper>();
  ld.gram = pin * full;
  return ld;
}

struct SplitDirection {
  HermitianEndo along;  // component in the generator span
  HermitianEndo perp;   // remainder, L^2-orthogonal to every generator
  VecR coeff;           // generator coefficients of `along`
};

// Split a Hermitian direction (H-orthonormal frame rep) into its symmetry
// component and the orthogonal remainder. Only the diagonal of xi pairs
// against the diagonal generators.
inline SplitDirection project_perp(const Setup& st, const HermitianForm& h,
                                   const LieData& ld,
                                   const HermitianEndo& xi) {
  VecR d(st.N);
  for (int a = 0; a < st.N; ++a) d[a] = xi.m(a, a).real();
  const MetricModel mm = fs_model(st.basis, h);
  const int B = st.quad.blocks();
  std::vector<VecR> acc(B, VecR::Zero(ld.r));
  std::vector<double> mass(B, 0.0);
  scan_radial(st.quad, mm, [&](int b, const ScanNode& nd) {
    const VecR& p = nd.terms[0].p;
    for (int j = 0; j < ld.r; ++j)
      acc[b][j] += nd.mass_w * node_cov(p, ld.gens[j], d);
    mass[b] += nd.mass_w;
  });
  VecR bvec = VecR::Zero(ld.r);
  double m = 0;
  for (int b = 0; b < B; ++b) {
    bvec += acc[b];
    m += mass[b];
  }
  bvec *= st.mass() / m;

  SplitDirection out;
  out.coeff = ld.gram.ldlt().solve(bvec);
  out.along.m = MatC::Zero(st.N, st.N);
  for (int j = 0; j < ld.r; ++j)
    for (int a = 0; a < st.N; ++a)
      out.along.m(a, a) += cxd(out.coeff[j] * ld.gens[j][a], 0.0);
  out.perp.m = xi.m - out.along.m;
  return out;
}

// ---------------- Hamiltonians ----------------
// The function induced by a Hermitian direction A (frame rep):
//   psi_A(t) = -(1/2 pi k) sum_a Re(A_aa) p_a(t) - offset,
// centered so that ∫ psi dmu = 0. Only diag(A) contributes by invariance.
struct Hamiltonian {
  VecR diag;       // Re diag(A)
  double scale;    // -1/(2 pi k)
  double offset;   // mu-mean of the raw values

  double at(const VecR& p) const {
    double s = 0;
    for (int i = 0; i < int(p.size()); ++i) s += p[i] * diag[i];
    return scale * s - offset;
  }
};

inline Hamiltonian hamiltonian_of(const Setup& st, const HermitianForm& h,
                                  const HermitianEndo& a) {
  Hamiltonian hm;
  hm.diag = VecR(st.N);
  for (int i = 0; i < st.N; ++i) hm.diag[i] = a.m(i, i).real();
  hm.scale = -1.0 / (2.0 * kPi * st.k);
  hm.offset = 0.0;
  const MetricModel mm = fs_model(st.basis, h);
  auto [raw, mass] = integrate_with_mass(
      st.quad, mm, [&](const ScanNode& nd) { return hm.at(nd.terms[0].p); });
  hm.offset = raw / mass;
  return hm;
}

// ---------------- exact angular grid ----------------
// Integrands built from one Hermitian direction are trigonometric
// polynomials of degree <= 2k per angular dimension, so the uniform grid
// with M = 4k+1 points integrates them exactly.
struct AngularGrid {
  int M = 1;
  int n = 1;
  std::vector<cxd> root;      // M-th roots of unity
  std::vector<int> alpha0;    // lattice exponents reduced mod M
  std::vector<int> alpha1;

  static AngularGrid make(const SectionBasis& b) {
    AngularGrid g;
    g.n = b.poly.n;
    g.M = 4 * b.k + 1;
    g.root.resize(g.M);
    for (int m = 0; m < g.M; ++m) {
      const double th = 2.0 * kPi * m / g.M;
      g.root[m] = cxd(std::cos(th), std::sin(th));
    }
    for (int a = 0; a < b.count; ++a) {
      g.alpha0.push_back(int(std::lround(b.exps(a, 0))) % g.M);
      if (g.n == 2) g.alpha1.push_back(int(std::lround(b.exps(a, 1))) % g.M);
    }
    return g;
  }

  long points() const { return n == 1 ? M : long(M) * M; }

  // unit section vector at angle index (m0, m1): sqrt(p) ⊙ phases
  void yhat(const VecR& p, int m0, int m1, VecC& out) const {
    const int cnt = int(p.size());
    out.resize(cnt);
    for (int a = 0; a < cnt; ++a) {
      int idx = alpha0[a] * m0;
      if (n == 2) idx += alpha1[a] * m1;
      out[a] = std::sqrt(p[a]) * root[idx % M];
    }
  }
};

}  // namespace qk
