#pragma once
// Quantization maps between torus-invariant Kaehler metrics and Hermitian
// forms on the section space: diagonal Gram integrals, Hilb / FS, the centre
// of mass, the T-operator and the Bergman density. All forms are diagonal
// (invariant data); the angular directions integrate away exactly, so every
// quantity reduces to a radial quadrature from toric.hpp.

#include <utility>
#include <vector>

#include "qk/toric.hpp"

namespace qk {

// ---------------- level setup ----------------
struct Setup {
  Polytope poly;
  SectionBasis basis;
  QuadratureScheme scheme;
  Quadrature quad;
  int k = 1;       // level
  int N = 0;       // number of lattice sections
  double V = 0;    // polytope volume

  static Setup make(const Polytope& p, int k, QuadratureScheme s = {}) {
    Setup st;
    st.poly = p;
    st.basis = SectionBasis::make(p, k);
    st.scheme = s;
    st.quad = Quadrature::build(s, p.n, double(k));
    st.k = k;
    st.N = st.basis.count;
    st.V = p.volume;
    return st;
  }
  // total mass of the level-k measure, k^n V
  double mass() const { return std::pow(double(k), poly.n) * V; }
};

// ---------------- diagonal Gram ----------------
struct GramResult {
  VecR g;           // raw Gram diagonal, no volume pin
  double mass = 0;  // raw measure mass
};

// G_a = ∫ |s_a|^2_h dmu_raw = ∫ exp(<a,t> - psi(t)) det(Hess psi) dt, the
// diagonal Gram of the lattice sections in the metric of mm. Off-diagonal
// entries vanish exactly by torus invariance.
inline GramResult gram_diag(const Setup& st, const MetricModel& mm) {
  const int N = st.N;
  const MatR& exps = st.basis.exps;
  const int n = st.poly.n;
  std::vector<VecR> acc(st.quad.blocks());
  std::vector<double> mass(st.quad.blocks(), 0.0);
  scan_radial(st.quad, mm, [&](int b, const ScanNode& nd) {
    if (acc[b].size() == 0) acc[b] = VecR::Zero(N);
    for (int a = 0; a < N; ++a) {
      double e = exps(a, 0) * nd.t[0] - nd.log_u_total;
      if (n == 2) e += exps(a, 1) * nd.t[1];
      acc[b][a] += nd.mass_w * std::exp(e);
    }
    mass[b] += nd.mass_w;
  });
  GramResult out;
  out.g = VecR::Zero(N);
  for (int b = 0; b < st.quad.blocks(); ++b) {
    if (acc[b].size() != 0) out.g += acc[b];
    out.mass += mass[b];
  }
  return out;
}

// ---------------- quantization maps ----------------
// Centre of mass of H: the positive diagonal endomorphism with entries
//   mubar_a = pin * G_a(FS(H)) / H_aa,       pin = k^n V / mass_raw,
// whose trace is k^n V exactly. Scale invariant: mubar(cH) = mubar(H).
inline VecR centre_of_mass(const Setup& st, const HermitianForm& h) {
  auto gr = gram_diag(st, fs_model(st.basis, h));
  const double pin = st.mass() / gr.mass;
  VecR m(st.N);
  for (int a = 0; a < st.N; ++a)
    m[a] = pin * gr.g[a] / h.m(a, a).real();
  return m;
}

// Hilb(h): the L^2 form of the sections in the metric of mm,
//   Hilb_aa = (N / k^n V) * pin * G_a.
inline HermitianForm hilb(const Setup& st, const MetricModel& mm) {
  auto gr = gram_diag(st, mm);
  const double scale = double(st.N) / gr.mass;  // (N / k^n V) * pin
  HermitianForm h = HermitianForm::identity(st.N);
  for (int a = 0; a < st.N; ++a) h.m(a, a) = cxd(scale * gr.g[a], 0.0);
  return h;
}

// one step of the balancing map: T(H) = Hilb(FS(H))
inline HermitianForm t_operator(const Setup& st, const HermitianForm& h) {
  return hilb(st, fs_model(st.basis, h));
}

// ---------------- Bergman density ----------------
struct BergmanReport {
  double min = 0, max = 0;  // extrema of rho-bar over the scan nodes
  double integral = 0;      // ∫ rho dmu, equals N exactly through the pin
  double sup_dev = 0;       // sup |rho-bar - 1|
};

// rho_k(t) = sum_a |s_a(t)|^2_h / ||s_a||^2; rho-bar = (k^n V / N) rho_k is
// identically 1 exactly when H is balanced.
inline BergmanReport bergman(const Setup& st, const HermitianForm& h) {
  const MetricModel mm = fs_model(st.basis, h);
  auto gr = gram_diag(st, mm);
  const double pin = st.mass() / gr.mass;
  const MatR& exps = st.basis.exps;
  const int n = st.poly.n;
  const double nrm = st.mass() / double(st.N);
  const int B = st.quad.blocks();
  std::vector<double> mn(B, 1e300), mx(B, -1e300), acc(B, 0.0);
  scan_radial(st.quad, mm, [&](int b, const ScanNode& nd) {
    double rho = 0;
    for (int a = 0; a < st.N; ++a) {
      double e = exps(a, 0) * nd.t[0] - nd.log_u_total;
      if (n == 2) e += exps(a, 1) * nd.t[1];
      rho += std::exp(e) / (pin * gr.g[a]);
    }
    const double rb = nrm * rho;
    mn[b] = std::min(mn[b], rb);
    mx[b] = std::max(mx[b], rb);
    acc[b] += nd.mass_w * rho;
  });
  BergmanReport out;
  out.min = 1e300;
  out.max = -1e300;
  for (int b = 0; b < B; ++b) {
    out.min = std::min(out.min, mn[b]);
    out.max = std::max(out.max, mx[b]);
    out.integral += pin * acc[b];
  }
  out.sup_dev = std::max(std::abs(out.max - 1.0), std::abs(out.min - 1.0));
  return out;
}

// Bergman density evaluated at one radial point (for identity spot checks)
inline double bergman_at(const Setup& st, const HermitianForm& h,
                         const VecR& t) {
  const MetricModel mm = fs_model(st.basis, h);
  auto gr = gram_diag(st, mm);
  const double pin = st.mass() / gr.mass;
  TermNode tn;
  softmax_logits(mm.terms[0].basis.exps, mm.terms[0].logw, t, tn);
  double rho = 0;
  for (int a = 0; a < st.N; ++a) {
    double e = st.basis.exps(a, 0) * t[0] - tn.log_u;
    if (st.poly.n == 2) e += st.basis.exps(a, 1) * t[1];
    rho += std::exp(e) / (pin * gr.g[a]);
  }
  return (st.mass() / double(st.N)) * rho;
}

}  // namespace qk
