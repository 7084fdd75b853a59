#pragma once
// Positive-definite hermitian forms on the section space and hermitian
// endomorphisms tangent to that space: frames, geodesics, norms.
//
// Conventions: a form H acts on coefficient vectors as <a, b>_H = b^* H a.
// A frame matrix P has the H-orthonormal basis as its columns, P^* H P = I.
// An endomorphism B is hermitian w.r.t. H iff H B = B^* H; the geodesic
// through H with velocity B is t -> H e^{tB} (equal to e^{tB}H(0) read in an
// H-orthonormal frame).

#include <unsupported/Eigen/MatrixFunctions>

#include "qk/common.hpp"

namespace qk {

// ---------------- errors ----------------
struct definiteness_error : std::runtime_error {
  int minor_index;  // first leading principal minor that fails
  explicit definiteness_error(int idx)
      : std::runtime_error("form not positive definite at leading minor " +
                           std::to_string(idx + 1)),
        minor_index(idx) {}
};

// ---------------- domain types ----------------
struct HermitianForm {
  int dim = 0;
  MatC m;  // hermitian positive definite, reference basis

  static HermitianForm identity(int n) {
    HermitianForm h;
    h.dim = n;
    h.m = MatC::Identity(n, n);
    return h;
  }
};

struct HermitianEndo {
  MatC m;  // hermitian w.r.t. a stated base form, reference basis
  int dim() const { return int(m.rows()); }
};

// ---------------- small helpers ----------------
inline MatC hermitize(const MatC& a) { return 0.5 * (a + a.adjoint()); }

inline double op_norm_herm(const MatC& a) {
  Eigen::SelfAdjointEigenSolver<MatC> es(a, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

inline double hs_norm(const MatC& a) { return a.norm(); }

inline bool is_hermitian(const MatC& a, double rel = 1e-14) {
  double scale = std::max(a.cwiseAbs().maxCoeff(), 1e-300);
  return (a - a.adjoint()).cwiseAbs().maxCoeff() <= rel * scale + 1e-14;
}

// self-adjointness w.r.t. H: H b = b^* H
inline bool is_self_adjoint(const MatC& b, const HermitianForm& h,
                            double rel = 1e-10) {
  MatC lhs = h.m * b;
  double scale = std::max(lhs.cwiseAbs().maxCoeff(), 1e-300);
  return (lhs - lhs.adjoint()).cwiseAbs().maxCoeff() <= rel * scale + 1e-12;
}

// ---------------- Cholesky ----------------
// Plain lower Cholesky; reports the first failing leading minor on
// non-positive pivots. Deterministic loop order.
inline MatC cholesky_lower(const MatC& a) {
  const int n = int(a.rows());
  MatC l = MatC::Zero(n, n);
  for (int j = 0; j < n; ++j) {
    cxd diag = a(j, j);
    for (int k = 0; k < j; ++k) diag -= l(j, k) * std::conj(l(j, k));
    double d = diag.real();
    if (!(d > 0.0) || !std::isfinite(d)) throw definiteness_error(j);
    const double lj = std::sqrt(d);
    l(j, j) = lj;
    for (int i = j + 1; i < n; ++i) {
      cxd s = a(i, j);
      for (int k = 0; k < j; ++k) s -= l(i, k) * std::conj(l(j, k));
      l(i, j) = s / lj;
    }
  }
  return l;
}

// ---------------- operations ----------------
// Frame matrix P with P^* H P = I; columns express the H-orthonormal basis in
// the reference basis. Cholesky-based, hence triangular and deterministic.
inline MatC orthonormal_frame(const HermitianForm& h) {
  MatC l = cholesky_lower(h.m);
  return l.adjoint()
      .template triangularView<Eigen::Upper>()
      .solve(MatC::Identity(h.dim, h.dim));
}

// endomorphism matrix rewritten in the frame with columns P
inline MatC frame_rep(const MatC& endo, const MatC& p) {
  return p.partialPivLu().solve(endo * p);
}

inline MatC expm(const MatC& a) { return a.exp(); }

// log of a positive definite hermitian matrix (spectral; only used for the
// energy's tr-log term and determinant normalization)
inline MatC logm_pd(const MatC& a) {
  Eigen::SelfAdjointEigenSolver<MatC> es(hermitize(a));
  if (es.eigenvalues().minCoeff() <= 0.0) throw definiteness_error(0);
  VecR lg = es.eigenvalues().array().log();
  return es.eigenvectors() * lg.asDiagonal() * es.eigenvectors().adjoint();
}

inline HermitianForm geodesic_step(const HermitianForm& h,
                                   const HermitianEndo& b, double t) {
  HermitianForm out;
  out.dim = h.dim;
  out.m = hermitize(h.m * expm(t * b.m));
  return out;
}

struct NormPair {
  double hs = 0.0;
  double op = 0.0;
};

// Hilbert-Schmidt and operator norm of xi taken in an H-orthonormal frame.
inline NormPair norms(const HermitianEndo& xi, const HermitianForm& h) {
  MatC p = orthonormal_frame(h);
  MatC rep = hermitize(frame_rep(xi.m, p));
  NormPair out;
  out.hs = rep.norm();
  Eigen::SelfAdjointEigenSolver<MatC> es(rep, Eigen::EigenvaluesOnly);
  out.op = es.eigenvalues().cwiseAbs().maxCoeff();
  return out;
}

// ---------------- seeded generators ----------------
// dense hermitian with unit operator norm
inline MatC random_hermitian(int n, rng64& rng) {
  MatC a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = rng.csym();
  a = hermitize(a);
  double s = op_norm_herm(a);
  if (s > 0) a /= s;
  return a;
}

// H = exp(amp * R) with R random hermitian of unit operator norm
inline HermitianForm random_spd_form(int n, rng64& rng, double amp,
                                     bool diagonal = false) {
  HermitianForm h;
  h.dim = n;
  if (diagonal) {
    VecR d(n);
    for (int i = 0; i < n; ++i) d[i] = rng.sym();
    double mean = d.mean();
    d.array() -= mean;
    double s = d.cwiseAbs().maxCoeff();
    if (s > 0) d *= amp / s;
    h.m = d.array().exp().matrix().cast<cxd>().asDiagonal();
  } else {
    h.m = hermitize(expm(amp * random_hermitian(n, rng)));
  }
  return h;
}

}  // namespace qk
