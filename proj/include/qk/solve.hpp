#pragma once
// Solvers on the space of invariant (diagonal) forms:
//  - solve_balanced: damped T-operator iteration to the balanced form,
//  - gradient_flow_ZA: backtracking geodesic Euler descent of the modified
//    energy restricted to directions orthogonal to the torus generators,
//  - solve_qext: outer correction scheme alternating the flow with updates
//    of the modification direction from the symmetry component of the
//    gradient, until the quantized-extremal certificate holds,
//  - modified_t_operator: the fixed-point operator of that certificate.

#include <chrono>
#include <functional>
#include <string>
#include <vector>

#include "qk/energy.hpp"

namespace qk {

// ---------------- shared helpers ----------------
inline void det_normalize(HermitianForm& h) {
  double lg = 0;
  for (int i = 0; i < h.dim; ++i) lg += std::log(h.m(i, i).real());
  const double c = std::exp(-lg / h.dim);
  for (int i = 0; i < h.dim; ++i) h.m(i, i) *= c;
}

// sup deviation of the certificate N/(mass) * S^{1/2} mubar S^{1/2} = I;
// at A = 0 this is the balanced centre-of-mass characterization.
inline double qext_residual(const Setup& st, const EnergyContext& ctx,
                            const HermitianForm& h) {
  const VecR m = centre_of_mass(st, h);
  const VecR s = ctx.sdiag(st.k);
  const double c = double(st.N) / st.mass();
  double dev = 0;
  for (int i = 0; i < st.N; ++i)
    dev = std::max(dev, std::abs(c * s[i] * m[i] - 1.0));
  return dev;
}

// Pointwise form of the same certificate: the normalized Bergman density of
// FS(H) equals the S-weighted sum of the section masses at every node. The
// sup deviation vanishes together with the centre-of-mass characterization.
inline double density_contraction_residual(const Setup& st,
                                           const EnergyContext& ctx,
                                           const HermitianForm& h) {
  const VecR mu = centre_of_mass(st, h);
  const VecR s = ctx.sdiag(st.k);
  const MetricModel mm = fs_model(st.basis, h);
  const double nrm = st.mass() / double(st.N);
  std::vector<double> sup(st.quad.blocks(), 0.0);
  scan_radial(st.quad, mm, [&](int b, const ScanNode& nd) {
    const VecR& p = nd.terms[0].p;
    double rho = 0, sw = 0;
    for (int a = 0; a < st.N; ++a) {
      rho += p[a] / mu[a];
      sw += s[a] * p[a];
    }
    sup[b] = std::max(sup[b], std::abs(nrm * rho - sw));
  });
  double out = 0;
  for (double v : sup) out = std::max(out, v);
  return out;
}

// MT(H) = P^{-*} [(N/mass) S'^{1/2} mubar' S'^{1/2}] P^{-1}; reduces to the
// plain T-operator at A = 0 and has the certificate as its fixed point.
inline HermitianForm modified_t_operator(const Setup& st,
                                         const EnergyContext& ctx,
                                         const HermitianForm& h) {
  const VecR m = centre_of_mass(st, h);
  const VecR s = ctx.sdiag(st.k);
  require_nondegenerate(s);
  HermitianForm out = h;
  const double c = double(st.N) / st.mass();
  for (int i = 0; i < st.N; ++i)
    out.m(i, i) = h.m(i, i).real() * c * s[i] * m[i];
  return out;
}

// Damped fixed-point iteration of the modified T-operator: the cross-check
// driver for the gradient flow. At A = 0 the limit is the balanced form;
// with a correction context it is a fixed point of the certificate.
struct TIterOptions {
  int max_iters = 500;
  double tol = 1e-8;     // sup deviation of the certificate
  double damping = 1.0;  // 1 = full step, smaller mixes in log space
  std::function<void(int, double, const HermitianForm&)> on_iter;
};

struct TIterState {
  HermitianForm h;
  int iters = 0;
  double residual = 0;
  bool converged = false;
  bool stalled = false;
};

inline TIterState solve_modified_t(const Setup& st, const EnergyContext& ctx,
                                   const HermitianForm& h0,
                                   const TIterOptions& opt = {}) {
  TIterState ts;
  ts.h = h0;
  det_normalize(ts.h);
  const VecR s = ctx.sdiag(st.k);
  require_nondegenerate(s);
  const double c = double(st.N) / st.mass();
  double best = 1e300;
  int since_best = 0;
  for (ts.iters = 0; ts.iters <= opt.max_iters; ++ts.iters) {
    // one centre-of-mass scan serves both the residual and the step
    const VecR m = centre_of_mass(st, ts.h);
    ts.residual = 0;
    for (int i = 0; i < st.N; ++i)
      ts.residual = std::max(ts.residual, std::abs(c * s[i] * m[i] - 1.0));
    if (opt.on_iter) opt.on_iter(ts.iters, ts.residual, ts.h);
    if (ts.residual <= opt.tol) {
      ts.converged = true;
      return ts;
    }
    if (ts.iters == opt.max_iters) break;
    if (ts.residual < best * (1.0 - 1e-12)) {
      best = ts.residual;
      since_best = 0;
    } else if (++since_best >= 25) {
      ts.stalled = true;
      return ts;
    }
    for (int i = 0; i < st.N; ++i) {
      const double t = ts.h.m(i, i).real() * c * s[i] * m[i];
      const double mix = (1.0 - opt.damping) * std::log(ts.h.m(i, i).real()) +
                         opt.damping * std::log(t);
      ts.h.m(i, i) = std::exp(mix);
    }
    det_normalize(ts.h);
  }
  return ts;
}

// diagonal warm start: identity for seed 0, otherwise a seeded diagonal
// form with operator-norm log-amplitude `amp`
inline HermitianForm warm_start(const Setup& st, std::uint64_t seed,
                                double amp) {
  if (seed == 0 || amp == 0.0) return HermitianForm::identity(st.N);
  rng64 rng(seed);
  return random_spd_form(st.N, rng, amp, true);
}

// ---------------- balanced solver ----------------
struct BalanceOptions {
  int max_iters = 500;
  double tol = 1e-11;      // sup deviation of N mubar / mass from 1
  double damping = 1.0;    // 1 = full T step, smaller mixes in log space
  std::function<void(int, double, const HermitianForm&)> on_iter;
};

struct BalanceState {
  HermitianForm h;
  int iters = 0;
  double residual = 0;
  bool converged = false;
  bool stalled = false;
};

inline BalanceState solve_balanced(const Setup& st, const HermitianForm& h0,
                                   const BalanceOptions& opt = {}) {
  BalanceState bs;
  bs.h = h0;
  det_normalize(bs.h);
  double best = 1e300;
  int since_best = 0;
  for (bs.iters = 0; bs.iters <= opt.max_iters; ++bs.iters) {
    // one scan serves both the residual and the T step
    const GramResult gr = gram_diag(st, fs_model(st.basis, bs.h));
    const double pin = st.mass() / gr.mass;
    bs.residual = 0;
    for (int i = 0; i < st.N; ++i) {
      const double m = pin * gr.g[i] / bs.h.m(i, i).real();
      bs.residual =
          std::max(bs.residual, std::abs(st.N * m / st.mass() - 1.0));
    }
    if (opt.on_iter) opt.on_iter(bs.iters, bs.residual, bs.h);
    if (bs.residual <= opt.tol) {
      bs.converged = true;
      return bs;
    }
    if (bs.iters == opt.max_iters) break;
    if (bs.residual < best * (1.0 - 1e-12)) {
      best = bs.residual;
      since_best = 0;
    } else if (++since_best >= 25) {
      bs.stalled = true;
      return bs;
    }
    for (int i = 0; i < st.N; ++i) {
      const double t = st.N / gr.mass * gr.g[i];
      const double mix = (1.0 - opt.damping) * std::log(bs.h.m(i, i).real()) +
                         opt.damping * std::log(t);
      bs.h.m(i, i) = std::exp(mix);
    }
    det_normalize(bs.h);
  }
  return bs;
}

// ---------------- projected gradient flow ----------------
struct FlowOptions {
  int max_iters = 2000;
  double tol = -1;         // HS norm of the projected gradient; <0 = auto
  double eta0 = 1.0;
  bool record_history = true;

  double resolved_tol(const Setup& st) const {
    return tol > 0 ? tol : 1e-9 * st.mass() / st.N;
  }
};

struct FlowRow {
  int iter = 0;
  double residual = 0;   // HS norm of the projected gradient
  double corr_norm = 0;  // HS norm of the symmetry component of the gradient
  double ca = 0;
  double energy = 0;     // modified energy relative to flow entry
  double wall = 0;       // seconds since flow entry
};

struct FlowState {
  HermitianForm h;
  int iters = 0;
  double residual = 0;
  double energy = 0;
  bool converged = false;
  bool stalled = false;
  VecR lie_entry;  // generator coefficients of the gradient at entry
  VecR lie_exit;   // and at exit: conserved by the projected flow
  std::vector<FlowRow> history;
};

// One scan collects everything a flow iteration needs at a diagonal form:
// the pinned centre of mass, the generator Gram, and the covariance of each
// generator against every lattice point mass.
struct FlowEval {
  VecR m;     // pinned centre-of-mass entries
  MatR gram;  // r x r generator gram, pinned
  MatR cov;   // r x N generator/point-mass covariances, pinned
};

inline FlowEval flow_eval(const Setup& st, const std::vector<VecR>& gens,
                          const HermitianForm& h) {
  const int r = int(gens.size());
  const MetricModel mm = fs_model(st.basis, h);
  const int B = st.quad.blocks();
  struct Block {
    VecR g;
    MatR gram, cov;
    double mass = 0;
  };
  std::vector<Block> acc(B);
  scan_radial(st.quad, mm, [&](int b, const ScanNode& nd) {
    Block& bl = acc[b];
    if (bl.g.size() == 0) {
      bl.g = VecR::Zero(st.N);
      bl.gram = MatR::Zero(r, r);
      bl.cov = MatR::Zero(r, st.N);
    }
    const TermNode& tn = nd.terms[0];
    bl.g += nd.mass_w * tn.p;
    for (int j = 0; j < r; ++j) {
      for (int l = j; l < r; ++l)
        bl.gram(j, l) += nd.mass_w * nd.cum.m2[j][l];
      for (int a = 0; a < st.N; ++a)
        bl.cov(j, a) +=
            nd.mass_w * tn.p[a] * (st.basis.exps(a, j) - tn.mean[j]);
    }
    bl.mass += nd.mass_w;
  });
  FlowEval fe;
  fe.m = VecR::Zero(st.N);
  fe.gram = MatR::Zero(r, r);
  fe.cov = MatR::Zero(r, st.N);
  double mass = 0;
  for (int b = 0; b < B; ++b) {
    if (acc[b].g.size() == 0) continue;
    fe.m += acc[b].g;
    fe.gram += acc[b].gram;
    fe.cov += acc[b].cov;
    mass += acc[b].mass;
  }
  const double pin = st.mass() / mass;
  fe.m *= pin;
  MatR full = fe.gram.selfadjointView<Eigen::Upper>();
  fe.gram = pin * full;
  fe.cov *= pin;
  return fe;
}

inline FlowState gradient_flow_ZA(const Setup& st, const EnergyContext& ctx,
                                  const HermitianForm& h0,
                                  const FlowOptions& opt = {}) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  FlowState fs;
  fs.h = h0;
  det_normalize(fs.h);
  const double tol = opt.resolved_tol(st);
  const std::vector<VecR> gens = lie_generators(st.basis);
  const int r = int(gens.size());
  const VecR s = ctx.sdiag(st.k);
  require_nondegenerate(s);
  VecR sinv(st.N);
  for (int i = 0; i < st.N; ++i) sinv[i] = st.mass() / (st.N * s[i]);

  double eta = opt.eta0;
  double energy = 0;
  FlowEval ev = flow_eval(st, gens, fs.h);

  for (fs.iters = 0; fs.iters < opt.max_iters; ++fs.iters) {
    // gradient and its symmetry split, all from the single scan
    const VecR delta = sinv - ev.m;
    const VecR coef = ev.gram.ldlt().solve(ev.cov * delta);
    VecR perp = delta;
    for (int j = 0; j < r; ++j) perp -= coef[j] * gens[j];
    const double res = perp.norm();
    double corr2 = 0;
    for (int j = 0; j < r; ++j)
      for (int l = 0; l < r; ++l)
        corr2 += coef[j] * coef[l] * gens[j].dot(gens[l]);
    const double corr = std::sqrt(std::max(0.0, corr2));
    if (fs.iters == 0) fs.lie_entry = coef;
    fs.lie_exit = coef;
    if (opt.record_history) {
      const double wall =
          std::chrono::duration<double>(clock::now() - t0).count();
      fs.history.push_back({fs.iters, res, corr, ctx.ca, energy, wall});
    }
    fs.residual = res;
    fs.energy = energy;
    if (res <= tol) {
      fs.converged = true;
      return fs;
    }

    // Backtracking geodesic Euler step along the projected descent
    // direction, centered so the determinant gauge is preserved exactly.
    // The energy change over h -> h e^{b} is a one-panel Simpson of the
    // exact slope -<b, m(t)> plus the closed-form trace part; the endpoint
    // scan is reused as the next iteration's base.
    VecR step = -perp;
    step.array() -= step.mean();
    const auto at = [&](const VecR& b, double t) {
      HermitianForm ht = fs.h;
      for (int i = 0; i < st.N; ++i)
        ht.m(i, i) = fs.h.m(i, i).real() * std::exp(t * b[i]);
      return ht;
    };
    bool accepted = false;
    while (eta >= 1e-12) {
      const VecR b = eta * step;
      const double s0 = -ev.m.dot(b);
      const double sm = -centre_of_mass(st, at(b, 0.5)).dot(b);
      const FlowEval evb = flow_eval(st, gens, at(b, 1.0));
      const double s1 = -evb.m.dot(b);
      double tr = 0;
      for (int i = 0; i < st.N; ++i) tr += b[i] / s[i];
      const double de = (s0 + 4.0 * sm + s1) / 6.0 + tr * st.mass() / st.N;
      if (de <= 0.0) {
        fs.h = at(b, 1.0);
        energy += de;
        eta *= 1.2;
        accepted = true;
        ev = evb;
        break;
      }
      eta *= 0.5;
    }
    if (!accepted) {
      fs.stalled = true;
      return fs;
    }
  }
  return fs;
}

// ---------------- outer correction scheme ----------------
struct QextOptions {
  int max_outer = 40;
  double outer_tol = 1e-8;  // HS norm of the correction direction
  FlowOptions inner;
  bool keep_flows = false;  // retain every inner flow state, not just the last
};

struct OuterRow {
  int outer = 0;
  double corr_norm = 0;      // HS norm of the correction applied this round
  double ca = 0;
  double inner_residual = 0;
  int inner_iters = 0;
  double certificate = 0;    // sup deviation of the qext identity
};

struct QextState {
  HermitianForm h;
  EnergyContext ctx;  // final modification direction and constant
  int outer_iters = 0;
  double certificate = 0;
  bool converged = false;
  bool aborted = false;
  std::string abort_reason;
  FlowState last_flow;
  std::vector<FlowState> flows;  // populated when QextOptions::keep_flows
  std::vector<OuterRow> history;
};

inline QextState solve_qext(const Setup& st, const HermitianForm& h0,
                            const QextOptions& opt = {}) {
  QextState qs;
  qs.h = h0;
  det_normalize(qs.h);
  qs.ctx.a.m = MatC::Zero(st.N, st.N);
  qs.ctx.href = qs.h;
  qs.ctx.ca = 0.0;

  for (qs.outer_iters = 0; qs.outer_iters < opt.max_outer; ++qs.outer_iters) {
    try {
      qs.last_flow = gradient_flow_ZA(st, qs.ctx, qs.h, opt.inner);
    } catch (const std::runtime_error& e) {
      qs.aborted = true;
      qs.abort_reason = e.what();
      return qs;
    }
    qs.h = qs.last_flow.h;
    if (opt.keep_flows) qs.flows.push_back(qs.last_flow);

    // symmetry component of the gradient drives the correction update
    const LieData ld = make_lie_data(st, qs.h);
    const HermitianEndo grad = delta_ZA(st, qs.ctx, qs.h);
    const SplitDirection sp = project_perp(st, qs.h, ld, grad);
    HermitianEndo corr;
    corr.m = -(double(st.N) / st.mass()) * sp.along.m;
    const double cn = corr.m.norm();

    qs.ctx.a.m += 2.0 * kPi * st.k * corr.m;
    qs.ctx.ca = compute_CA(st, qs.h, qs.ctx.a);
    recenter_constant(st, qs.ctx);
    qs.certificate = qext_residual(st, qs.ctx, qs.h);
    qs.history.push_back({qs.outer_iters, cn, qs.ctx.ca,
                          qs.last_flow.residual, qs.last_flow.iters,
                          qs.certificate});
    if (cn <= opt.outer_tol && qs.last_flow.converged) {
      qs.converged = true;
      ++qs.outer_iters;
      return qs;
    }
  }
  return qs;
}

}  // namespace qk
