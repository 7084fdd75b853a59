#pragma once
// Toric geometry backend: moment polytopes, monomial section bases, tensorized
// Gauss-Legendre quadrature in log coordinates, and the per-node evaluation
// engine (softmax weights + cumulants of the lattice-point distribution).
//
// Conventions. Log coordinates t = (log|z_1|^2, ..., log|z_n|^2); a section
// with exponent a has pointwise squared norm e^{<a,t>}. A torus-invariant
// metric model is psi(t) = sum_r c_r log u_r(t) with
// u_r(t) = sum_a W_a e^{<a,t>}, W_a > 0 (kept as log-weights). The Kaehler
// measure in these coordinates is det(Hess_t psi) dt after the exact angular
// integral; its total mass equals deg^n * Vol(P) where deg = sum_r c_r k_r.
// All evaluation stays in the log domain (softmax over the lattice points),
// so nothing overflows at any level k or box size.

#include <cstring>
#include <utility>

#include "qk/hermitian.hpp"

namespace qk {

// ---------------- polytope ----------------
struct Polytope {
  int n = 0;
  std::string name;
  MatR vertices;   // rows = vertices; n = 2: counterclockwise order
  MatR face_nrm;   // halfspaces <nrm_i, x> <= off_i
  VecR face_off;
  double volume = 0.0;
  bool is_delzant = true;

  double support(const VecR& t) const {
    return (vertices * t).maxCoeff();
  }
  bool contains(const VecR& x, double scale, double tol = 1e-9) const {
    return ((face_nrm * x - scale * face_off).array() <= tol).all();
  }

  static Polytope segment() {
    Polytope p;
    p.n = 1;
    p.name = "segment";
    p.vertices = MatR(2, 1);
    p.vertices << 0, 1;
    p.face_nrm = MatR(2, 1);
    p.face_nrm << -1, 1;
    p.face_off = VecR(2);
    p.face_off << 0, 1;
    p.volume = 1.0;
    return p;
  }
  static Polytope from_polygon(std::string name, MatR verts) {
    Polytope p;
    p.n = 2;
    p.name = std::move(name);
    p.vertices = std::move(verts);
    const int m = int(p.vertices.rows());
    p.face_nrm = MatR(m, 2);
    p.face_off = VecR(m);
    double area2 = 0.0;
    for (int i = 0; i < m; ++i) {
      VecR a = p.vertices.row(i), b = p.vertices.row((i + 1) % m);
      // outward normal of a counterclockwise edge
      p.face_nrm(i, 0) = b[1] - a[1];
      p.face_nrm(i, 1) = a[0] - b[0];
      p.face_off[i] = p.face_nrm.row(i).dot(a);
      area2 += a[0] * b[1] - a[1] * b[0];
    }
    p.volume = 0.5 * area2;
    if (p.volume <= 0) throw std::invalid_argument("polygon not counterclockwise");
    return p;
  }
  static Polytope simplex() {
    MatR v(3, 2);
    v << 0, 0, 1, 0, 0, 1;
    return from_polygon("simplex", std::move(v));
  }
  static Polytope unit_square() {
    MatR v(4, 2);
    v << 0, 0, 1, 0, 1, 1, 0, 1;
    return from_polygon("square", std::move(v));
  }
  // blow-up surface: the asymmetric Delzant trapezoid, the smallest target
  // whose symmetry obstruction forces a nonzero correction direction
  static Polytope trapezoid() {
    MatR v(4, 2);
    v << 0, 0, 2, 0, 1, 1, 0, 1;
    return from_polygon("trapezoid", std::move(v));
  }
};

inline Polytope polytope_by_name(const std::string& name) {
  if (name == "segment" || name == "P1") return Polytope::segment();
  if (name == "simplex" || name == "P2") return Polytope::simplex();
  if (name == "square") return Polytope::unit_square();
  if (name == "trapezoid") return Polytope::trapezoid();
  throw std::invalid_argument("unknown polytope: " + name);
}

// ---------------- section basis ----------------
// Lattice points of kP in lexicographic order; one monomial section each.
struct SectionBasis {
  Polytope poly;
  int k = 0;
  int count = 0;
  MatR exps;  // count x n, integer-valued

  static SectionBasis make(const Polytope& p, int k) {
    if (k < 1) throw std::invalid_argument("level must be >= 1");
    SectionBasis b;
    b.poly = p;
    b.k = k;
    std::vector<VecR> pts;
    VecR lo = k * p.vertices.colwise().minCoeff().transpose();
    VecR hi = k * p.vertices.colwise().maxCoeff().transpose();
    if (p.n == 1) {
      for (long a = std::lround(std::ceil(lo[0] - 1e-9));
           a <= std::lround(std::floor(hi[0] + 1e-9)); ++a) {
        VecR x(1);
        x << double(a);
        if (p.contains(x, k)) pts.push_back(x);
      }
    } else {
      for (long a0 = std::lround(std::ceil(lo[0] - 1e-9));
           a0 <= std::lround(std::floor(hi[0] + 1e-9)); ++a0)
        for (long a1 = std::lround(std::ceil(lo[1] - 1e-9));
             a1 <= std::lround(std::floor(hi[1] + 1e-9)); ++a1) {
          VecR x(2);
          x << double(a0), double(a1);
          if (p.contains(x, k)) pts.push_back(x);
        }
    }
    if (pts.empty()) throw std::invalid_argument("degenerate polytope: no sections");
    b.count = int(pts.size());
    b.exps = MatR(b.count, p.n);
    for (int i = 0; i < b.count; ++i) b.exps.row(i) = pts[i].transpose();
    return b;
  }
};

// ---------------- quadrature ----------------
struct QuadratureScheme {
  double half_width = 40.0;  // truncation of the log-coordinate box
  int gl_order = 12;         // Gauss-Legendre nodes per panel
  double resolution = 1.0;   // density multiplier (the CLI --resolution)

  // Panels shrink with the degree: the integrand is analytic in a strip of
  // half-width ~ pi/deg (zeros of the section sum approach the real axis as
  // the lattice grows), and order-12 panels want width*deg <~ 6 for ~1e-12.
  double panel_width(double degree) const {
    return std::min(2.0, 6.0 / std::max(1.0, degree)) / resolution;
  }
  QuadratureScheme refined(double s) const {
    QuadratureScheme q = *this;
    q.resolution *= s;
    return q;
  }
};

struct Quadrature {
  int n = 1;
  VecR tn, tw;  // composite 1-d rule, shared by all radial dimensions

  int blocks() const { return int(tn.size()); }
  long nodes() const {
    long m = 1;
    for (int d = 0; d < n; ++d) m *= tn.size();
    return m;
  }

  static Quadrature build(const QuadratureScheme& s, int n, double degree) {
    Quadrature q;
    q.n = n;
    const double pw = s.panel_width(degree);
    const int panels = int(std::ceil(2.0 * s.half_width / pw));
    const auto& gl = gauss_legendre(s.gl_order);
    q.tn = VecR(panels * s.gl_order);
    q.tw = VecR(panels * s.gl_order);
    const double h = 2.0 * s.half_width / panels;
    for (int p = 0; p < panels; ++p) {
      const double a = -s.half_width + p * h;
      for (int i = 0; i < s.gl_order; ++i) {
        q.tn[p * s.gl_order + i] = a + 0.5 * h * (gl.x[i] + 1.0);
        q.tw[p * s.gl_order + i] = 0.5 * h * gl.w[i];
      }
    }
    return q;
  }
};

// ---------------- invariant metric models ----------------
struct invariance_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// one term c * log( sum_a e^{<a,t> + logw_a} )
struct MetricTerm {
  double coeff = 1.0;
  SectionBasis basis;
  VecR logw;
};

struct MetricModel {
  std::vector<MetricTerm> terms;
  double degree() const {
    double d = 0;
    for (const auto& t : terms) d += t.coeff * t.basis.k;
    return d;
  }
  int dim() const { return terms.front().basis.poly.n; }
};

inline void require_invariant(const MatC& m) {
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j)
      if (i != j && m(i, j) != cxd(0, 0))
        throw invariance_error("non-invariant form in toric mode (entry " +
                               std::to_string(i) + "," + std::to_string(j) + ")");
}

inline VecR diag_log(const HermitianForm& h) {
  require_invariant(h.m);
  VecR d(h.dim);
  for (int i = 0; i < h.dim; ++i) {
    double v = h.m(i, i).real();
    if (!(v > 0)) throw definiteness_error(i);
    d[i] = std::log(v);
  }
  return d;
}

// FS(H) as a model: u = zeta^* H^{-1} zeta, so logw = -log diag(H)
inline MetricModel fs_model(const SectionBasis& b, const HermitianForm& h) {
  MetricModel m;
  m.terms.push_back({1.0, b, -diag_log(h)});
  return m;
}

// fractional power (FS(H))^{k/k0}: the degree-k potential of the same metric
inline MetricModel power_model(const SectionBasis& b, const HermitianForm& h,
                               double coeff) {
  MetricModel m;
  m.terms.push_back({coeff, b, -diag_log(h)});
  return m;
}

// ---------------- node evaluation ----------------
struct TermNode {
  double log_u = 0.0;   // log u_r(t), exact
  VecR p;               // softmax weights over the lattice points, sum = 1
  double mean[2] = {};  // first moment of p over the lattice
  double m2t[3] = {};   // central second moment (xx, xy, yy)
};

// Real cumulants (t-derivatives of psi) up to 2nd order, n <= 2. Higher
// cumulants are never stored: curvature consumers re-contract the lattice
// weights directly through cancellation-free pairwise identities.
struct Cumulants {
  int n = 1;
  double m1[2] = {0, 0};
  double m2[2][2] = {};

  void add_scaled(const Cumulants& o, double c) {
    for (int j = 0; j < n; ++j) {
      m1[j] += c * o.m1[j];
      for (int l = 0; l < n; ++l) m2[j][l] += c * o.m2[j][l];
    }
  }
};

struct ScanNode {
  long id = 0;       // flat radial index, for error reports
  VecR t;
  double gl_w = 0;   // product of radial GL weights
  double density = 0;  // det(combined second cumulant), stable form
  double mass_w = 0;   // gl_w * density = the d(mu) weight of this node
  double log_u_total = 0;  // sum_r c_r log u_r
  std::vector<TermNode> terms;
  Cumulants cum;  // combined first/second cumulants of the potential
};

// softmax of <a,t> + logw over the rows of exps
inline void softmax_logits(const MatR& exps, const VecR& logw, const VecR& t,
                           TermNode& out) {
  VecR logits = exps * t + logw;
  const double mx = logits.maxCoeff();
  out.p = (logits.array() - mx).exp();
  const double s = out.p.sum();
  out.p /= s;
  out.log_u = mx + std::log(s);
}

// Stable determinant of the combined second cumulant (n = 2 only). The
// direct 2x2 determinant cancels catastrophically where the distribution
// collapses onto a lattice line (far radial corners); the pairwise form
//   det(sum_m w_m v_m v_m^T) = sum_{m<m'} w_m w_m' (v_m x v_m')^2
// is a sum of nonnegative terms and stays relatively accurate everywhere.
inline double stable_det2(const MetricModel& mm,
                          const std::vector<TermNode>& terms) {
  double det = 0;
  const int nt = int(terms.size());
  for (int r = 0; r < nt; ++r) {
    const MatR& er = mm.terms[r].basis.exps;
    const TermNode& tr = terms[r];
    const int cr = int(tr.p.size());
    for (int i = 0; i < cr; ++i) {
      const double wi = mm.terms[r].coeff * tr.p[i];
      if (wi == 0) continue;
      const double vx = er(i, 0) - tr.mean[0];
      const double vy = er(i, 1) - tr.mean[1];
      for (int j = i + 1; j < cr; ++j) {
        const double c =
            vx * (er(j, 1) - tr.mean[1]) - vy * (er(j, 0) - tr.mean[0]);
        det += wi * (mm.terms[r].coeff * tr.p[j]) * c * c;
      }
      for (int s = r + 1; s < nt; ++s) {
        const MatR& es = mm.terms[s].basis.exps;
        const TermNode& ts = terms[s];
        const int cs = int(ts.p.size());
        for (int j = 0; j < cs; ++j) {
          const double c =
              vx * (es(j, 1) - ts.mean[1]) - vy * (es(j, 0) - ts.mean[0]);
          det += wi * (mm.terms[s].coeff * ts.p[j]) * c * c;
        }
      }
    }
  }
  return det;
}

// central first/second moments of the lattice distribution p over exps
inline void term_cumulants(const MatR& exps, const VecR& p, int n,
                           Cumulants& c) {
  c = Cumulants{};
  c.n = n;
  const int cnt = int(p.size());
  for (int i = 0; i < cnt; ++i)
    for (int j = 0; j < n; ++j) c.m1[j] += p[i] * exps(i, j);
  double d[2];
  for (int i = 0; i < cnt; ++i) {
    for (int j = 0; j < n; ++j) d[j] = exps(i, j) - c.m1[j];
    const double pi = p[i];
    for (int j = 0; j < n; ++j)
      for (int l = 0; l < n; ++l) c.m2[j][l] += pi * d[j] * d[l];
  }
}

// Scalar curvature of the degree-1 metric omega = (i/2 pi deg) ddbar psi at
// a node. With M = psi_{j lbar}, T_m = d_m M, F_{mp} = d_m dbar_p M the
// curvature is S = -2 pi deg tr(M^{-1} X), X_{mp} = tr(M^{-1} F_{mp}) -
// tr(M^{-1} T_p M^{-1} T_m); contracting over the weighted lattice points
// this becomes  S = -2 pi deg [ <M^-2, mu4> - c4 - <M^-3, mu3 (x) mu3> ]
// with c4 the pairing correction turning mu4 into the 4th cumulant. The
// naive moment contraction loses every digit in the measure's far tail; the
// pieces below are evaluated through nonnegative pairwise sums (a Hankel
// determinant for n = 1, the adjugate identity
//   d^T adj(M) d' = sum_j w_j (d x d_j)(d' x d_j)
// for n = 2) which keep relative accuracy at every node.
inline double node_scalar_curvature(const MetricModel& mm,
                                    const ScanNode& nd) {
  const int n = nd.cum.n;
  const double deg = mm.degree();
  const int nt = int(nd.terms.size());
  if (!(nd.density > 0))
    throw std::runtime_error("degenerate metric hessian");

  // Centered offsets via the pairwise identity d_i = sum_j p_j (a_i - a_j):
  // subtracting the stored mean loses the tiny tail offsets entirely once
  // the mean rounds to a lattice point, and the curvature combination needs
  // them to full relative accuracy.
  int np = 0;
  for (int r = 0; r < nt; ++r) np += int(nd.terms[r].p.size());
  std::vector<double> w(np), dx(np), dy(np);
  for (int r = 0, m = 0; r < nt; ++r) {
    const MatR& er = mm.terms[r].basis.exps;
    const TermNode& tr = nd.terms[r];
    const double cr = mm.terms[r].coeff;
    const int crn = int(tr.p.size());
    for (int i = 0; i < crn; ++i, ++m) {
      w[m] = cr * tr.p[i];
      double sx = 0, sy = 0;
      for (int j = 0; j < crn; ++j) {
        sx += tr.p[j] * (er(i, 0) - er(j, 0));
        if (n == 2) sy += tr.p[j] * (er(i, 1) - er(j, 1));
      }
      dx[m] = sx;
      dy[m] = sy;
    }
  }

  if (n == 1) {
    // Y M^3 = [mu2 mu4 - mu3^2]_pooled - 3 M sum_r c_r mu2r^2; the bracket
    // equals sum_{m<m'} w w' d^2 d'^2 (d - d')^2 over the pooled points.
    const double M = nd.cum.m2[0][0];
    double hank = 0, corr = 0;
    for (int r = 0; r < nt; ++r)
      corr += mm.terms[r].coeff * nd.terms[r].m2t[0] * nd.terms[r].m2t[0];
    for (int i = 0; i < np; ++i) {
      if (w[i] == 0) continue;
      for (int j = i + 1; j < np; ++j) {
        const double g = dx[i] - dx[j];
        hank += w[i] * w[j] * dx[i] * dx[i] * dx[j] * dx[j] * g * g;
      }
    }
    return -2.0 * kPi * deg * (hank - 3.0 * M * corr) / (M * M * M);
  }

  // n = 2: adjugate of the combined second cumulant
  const double a00 = nd.cum.m2[1][1], a11 = nd.cum.m2[0][0];
  const double a01 = -nd.cum.m2[0][1];
  const double D = nd.density;

  // q_i = d_i^T adj(M) d_i as a nonnegative pairwise sum, then
  // P1 = <adj (x) adj, mu4> = sum_i w_i q_i^2
  std::vector<double> q(np, 0.0);
  for (int i = 0; i < np; ++i)
    for (int j = 0; j < np; ++j) {
      const double x = dx[i] * dy[j] - dy[i] * dx[j];
      q[i] += w[j] * x * x;
    }
  double p1 = 0;
  for (int i = 0; i < np; ++i) p1 += w[i] * q[i] * q[i];

  // c4 contraction: sum_r c_r [2 tr((adj mu2r)^2) + (tr adj mu2r)^2]
  double corr = 0;
  for (int r = 0; r < nt; ++r) {
    const double cr = mm.terms[r].coeff;
    const double t0 = nd.terms[r].m2t[0], t1 = nd.terms[r].m2t[1],
                 t2 = nd.terms[r].m2t[2];
    const double n00 = a00 * t0 + a01 * t1, n01 = a00 * t1 + a01 * t2;
    const double n10 = a01 * t0 + a11 * t1, n11 = a01 * t1 + a11 * t2;
    const double trn = n00 + n11;
    const double trnn = n00 * n00 + 2.0 * n01 * n10 + n11 * n11;
    corr += cr * (2.0 * trnn + trn * trn);
  }

  // P3 = <adj^3, mu3 (x) mu3> over ordered pairs; diagonal uses the stable q
  double p3 = 0;
  for (int i = 0; i < np; ++i) {
    p3 += w[i] * w[i] * q[i] * q[i] * q[i];
    for (int j = i + 1; j < np; ++j) {
      const double r = dx[i] * (a00 * dx[j] + a01 * dy[j]) +
                       dy[i] * (a01 * dx[j] + a11 * dy[j]);
      p3 += 2.0 * w[i] * w[j] * r * r * r;
    }
  }

  const double y = (p1 - corr) / (D * D) - p3 / (D * D * D);
  return -2.0 * kPi * deg * y;
}

// Radial scan: visits every node of the tensorized rule, parallel over the
// outer radial index (the "block"), sequential within a block. The sink must
// write only to per-block storage; combine blocks in index order afterwards.
template <class Sink>
inline void scan_radial(const Quadrature& q, const MetricModel& mm,
                        Sink&& sink) {
  const int n = q.n;
  const int R = int(q.tn.size());
  const int nterms = int(mm.terms.size());
  failure_slot fail;
  parallel_blocks(R, [&](int b) {
    ScanNode nd;
    nd.t = VecR(n);
    nd.terms.resize(nterms);
    Cumulants tc;
    const int inner = (n == 2) ? R : 1;
    for (int i2 = 0; i2 < inner; ++i2) {
      nd.id = long(b) * inner + i2;
      nd.t[0] = q.tn[b];
      nd.gl_w = q.tw[b];
      if (n == 2) {
        nd.t[1] = q.tn[i2];
        nd.gl_w *= q.tw[i2];
      }
      nd.cum = Cumulants{};
      nd.cum.n = n;
      nd.log_u_total = 0;
      for (int r = 0; r < nterms; ++r) {
        const auto& tm = mm.terms[r];
        softmax_logits(tm.basis.exps, tm.logw, nd.t, nd.terms[r]);
        nd.log_u_total += tm.coeff * nd.terms[r].log_u;
        term_cumulants(tm.basis.exps, nd.terms[r].p, n, tc);
        for (int d = 0; d < n; ++d) nd.terms[r].mean[d] = tc.m1[d];
        nd.terms[r].m2t[0] = tc.m2[0][0];
        if (n == 2) {
          nd.terms[r].m2t[1] = tc.m2[0][1];
          nd.terms[r].m2t[2] = tc.m2[1][1];
        }
        nd.cum.add_scaled(tc, tm.coeff);
      }
      nd.density = (n == 1) ? nd.cum.m2[0][0] : stable_det2(mm, nd.terms);
      nd.mass_w = nd.gl_w * nd.density;
      if (!std::isfinite(nd.mass_w) || nd.density <= 0) {
        fail.note(nd.id);
        return;
      }
      sink(b, std::as_const(nd));
    }
  });
  if (fail.failed())
    throw std::runtime_error("non-finite integrand at node " +
                             std::to_string(fail.first.load()));
}

// ---------------- simple integrals ----------------
// integral of f(node) d(mu), plus the raw measure mass (for the volume pin)
template <class F>
inline std::pair<double, double> integrate_with_mass(const Quadrature& q,
                                                     const MetricModel& mm,
                                                     F&& f) {
  std::vector<double> acc(q.blocks(), 0.0), mass(q.blocks(), 0.0);
  scan_radial(q, mm, [&](int b, const ScanNode& nd) {
    acc[b] += nd.mass_w * f(nd);
    mass[b] += nd.mass_w;
  });
  double a = 0, m = 0;
  for (int b = 0; b < q.blocks(); ++b) {
    a += acc[b];
    m += mass[b];
  }
  return {a, m};
}

// Kaehler measure total mass is deg^n * Vol(P); every consumer rescales raw
// sums by pin = (deg^n V)/mass so that the volume identities hold exactly.
inline double mass_target(const MetricModel& mm) {
  return std::pow(mm.degree(), mm.dim()) * mm.terms.front().basis.poly.volume;
}

// normalized integral: ∫ f dmu with the measure pinned to mass deg^n V
template <class F>
inline double integrate(const Quadrature& q, const MetricModel& mm, F&& f) {
  auto [a, m] = integrate_with_mass(q, mm, std::forward<F>(f));
  return a * (mass_target(mm) / m);
}

// ---------------- FS potential point evaluation ----------------
struct PotentialEval {
  double phi;  // (1/k) log sum_i |s'_i|^2 at t
  VecR grad;   // d phi / dt (the moment map scaled into P)
  MatR hess;   // d^2 phi / dt^2, positive definite
};

inline PotentialEval fs_potential_eval(const HermitianForm& h,
                                       const SectionBasis& b, const VecR& t) {
  MetricModel mm = fs_model(b, h);
  TermNode tn;
  softmax_logits(mm.terms[0].basis.exps, mm.terms[0].logw, t, tn);
  Cumulants c;
  term_cumulants(mm.terms[0].basis.exps, tn.p, b.poly.n, c);
  PotentialEval out;
  const double k = b.k;
  out.phi = tn.log_u / k;
  out.grad = VecR(b.poly.n);
  out.hess = MatR(b.poly.n, b.poly.n);
  for (int j = 0; j < b.poly.n; ++j) {
    out.grad[j] = c.m1[j] / k;
    for (int l = 0; l < b.poly.n; ++l) out.hess(j, l) = c.m2[j][l] / k;
  }
  return out;
}

}  // namespace qk
