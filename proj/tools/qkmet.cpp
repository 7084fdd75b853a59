// qkmet: balanced and quantized-extremal metrics on polarized toric
// geometries at desk scale.
//   solve    - one solve; writes config.json, history.csv, state.json,
//              verdicts.json into the output directory
//   sweep    - level sweep driving the verification suite; per-level solve
//              artifacts plus one aggregated sweep_report.json
//   diagnose - re-verify the certificates of a saved final state without
//              re-solving
// Exit codes: 0 converged / all checks pass, 1 error, 2 stalled or failed.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "qk/io.hpp"

using namespace qk;
namespace fsys = std::filesystem;

namespace {

// ---------------- shared solve plumbing ----------------
struct SolveOutcome {
  Setup st;          // toric setup; unused in cloud mode
  HermitianForm h;   // final diagonal form (toric)
  EnergyContext ctx; // final correction context (toric)
  MatC h_full;       // final full form (cloud)
  bool cloud = false;
  bool converged = false, stalled = false;
  int iters = 0, outer_iters = 0;
  double residual = 0, certificate = 0;
  std::vector<FlowRow> rows;
  VecR lie_entry, lie_exit;
  bool has_lie = false;
  bool energy_monotone = true;
};

Setup setup_from(const RunConfig& cfg, int k) {
  QuadratureScheme sc;
  sc.resolution = cfg.resolution;
  return Setup::make(polytope_by_name(cfg.polytope), k, sc);
}

HermitianForm warm_from(const RunConfig& cfg, int n) {
  if (cfg.profile == "fubini_study" || cfg.seed == 0 || cfg.amplitude == 0.0)
    return HermitianForm::identity(n);
  rng64 rng(cfg.seed);
  return random_spd_form(n, rng, cfg.amplitude, true);
}

EnergyContext zero_ctx(int n, const HermitianForm& href) {
  EnergyContext ctx;
  ctx.a.m = MatC::Zero(n, n);
  ctx.ca = 0;
  ctx.href = href;
  return ctx;
}

EnergyContext context_from_state(const std::string& path, const Setup& st) {
  const njson j = read_json_file(path, "context state file");
  const njson* r = iod::sub(j, "result");
  if (!r || !r->contains("a_diag") || !r->contains("ca"))
    throw ConfigError("context state file lacks result.{a_diag, ca}: " + path);
  const VecR a = vec_from_json(r->at("a_diag"), "result.a_diag");
  if (int(a.size()) != st.N)
    throw ConfigError("context state dimension mismatch: " + path);
  EnergyContext ctx;
  ctx.a.m = a.cast<cxd>().asDiagonal();
  ctx.ca = iod::get_num(*r, "ca", "result.ca", 0.0);
  ctx.href = HermitianForm::identity(st.N);
  return ctx;
}

SolveOutcome run_toric_solve(const RunConfig& cfg, int k) {
  SolveOutcome oc;
  oc.st = setup_from(cfg, k);
  const HermitianForm h0 = warm_from(cfg, oc.st.N);
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  const auto wall = [&] {
    return std::chrono::duration<double>(clock::now() - t0).count();
  };

  if (cfg.method == "balanced") {
    const EnergyContext zc = zero_ctx(oc.st.N, h0);
    BalanceOptions bo;
    bo.max_iters = cfg.max_iters;
    bo.tol = cfg.tol;
    bo.damping = cfg.damping;
    bo.on_iter = [&](int it, double res, const HermitianForm& h) {
      oc.rows.push_back({it, res, 0.0, 0.0, energy_ZA(oc.st, zc, h), wall()});
    };
    const BalanceState bs = solve_balanced(oc.st, h0, bo);
    oc.h = bs.h;
    oc.ctx = zero_ctx(oc.st.N, h0);
    oc.converged = bs.converged;
    oc.stalled = bs.stalled;
    oc.iters = bs.iters;
    oc.residual = bs.residual;
    oc.certificate = qext_residual(oc.st, oc.ctx, oc.h);
  } else if (cfg.method == "modified_t") {
    EnergyContext ctx = cfg.context_from.empty()
                            ? zero_ctx(oc.st.N, h0)
                            : context_from_state(cfg.context_from, oc.st);
    ctx.href = h0;
    TIterOptions to;
    to.max_iters = cfg.max_iters;
    to.tol = cfg.tol;
    to.damping = cfg.damping;
    to.on_iter = [&](int it, double res, const HermitianForm& h) {
      oc.rows.push_back(
          {it, res, 0.0, ctx.ca, energy_ZA(oc.st, ctx, h), wall()});
    };
    const TIterState ts = solve_modified_t(oc.st, ctx, h0, to);
    oc.h = ts.h;
    oc.ctx = ctx;
    oc.converged = ts.converged;
    oc.stalled = ts.stalled;
    oc.iters = ts.iters;
    oc.residual = ts.residual;
    oc.certificate = ts.residual;
  } else {  // qext correction scheme
    QextOptions qo;
    qo.max_outer = cfg.max_outer;
    qo.outer_tol = cfg.outer_tol;
    qo.inner.max_iters = cfg.max_iters;
    qo.inner.tol = cfg.inner_tol;
    qo.keep_flows = true;
    const QextState qs = solve_qext(oc.st, h0, qo);
    if (qs.aborted)
      throw std::runtime_error("solver aborted: " + qs.abort_reason);
    oc.h = qs.h;
    oc.ctx = qs.ctx;
    oc.converged = qs.converged;
    oc.stalled = !qs.converged;
    oc.outer_iters = qs.outer_iters;
    oc.residual = qs.last_flow.residual;
    oc.certificate = qs.certificate;
    int it = 0;
    double base = 0;
    for (const FlowState& fl : qs.flows) {
      for (size_t i = 0; i < fl.history.size(); ++i) {
        const FlowRow& r = fl.history[i];
        if (i > 0 && r.energy > fl.history[i - 1].energy + 1e-12)
          oc.energy_monotone = false;
        oc.rows.push_back(
            {it++, r.residual, r.corr_norm, r.ca, r.energy, base + r.wall});
      }
      if (!fl.history.empty()) base += fl.history.back().wall;
      oc.iters += fl.iters;
    }
    oc.lie_entry = qs.last_flow.lie_entry;
    oc.lie_exit = qs.last_flow.lie_exit;
    oc.has_lie = oc.lie_entry.size() > 0;
  }
  return oc;
}

SolveOutcome run_cloud_solve(const RunConfig& cfg) {
  if (cfg.method != "balanced")
    throw ConfigError(
        "invalid value: solver.method (cloud mode supports balanced only)");
  if (cfg.damping != 1.0)
    throw ConfigError(
        "invalid value: solver.damping (cloud mode supports 1.0 only)");
  const CloudData cd = load_cloud(cfg.cloud);
  SolveOutcome oc;
  oc.cloud = true;
  const MatC h0 = warm_from(cfg, cd.nsec).m;
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  const CloudBalanceState cs = solve_cloud_balanced(
      cd, h0, cfg.max_iters, cfg.tol, [&](int it, double res) {
        const double w =
            std::chrono::duration<double>(clock::now() - t0).count();
        oc.rows.push_back({it, res, 0.0, 0.0, 0.0, w});
      });
  oc.h_full = cs.h;
  oc.converged = cs.converged;
  oc.stalled = cs.stalled;
  oc.iters = cs.iters;
  oc.residual = cs.residual;
  oc.certificate = cs.residual;
  return oc;
}

// certificate residuals recomputed through the same code paths the solvers
// use: centre-of-mass deviation, pointwise density contraction, and the HS
// norm of the projected gradient
njson certificates_json(const Setup& st, const EnergyContext& ctx,
                        const HermitianForm& h) {
  const double com = qext_residual(st, ctx, h);
  const double den = density_contraction_residual(st, ctx, h);
  const std::vector<VecR> gens = lie_generators(st.basis);
  const FlowEval ev = flow_eval(st, gens, h);
  const VecR s = ctx.sdiag(st.k);
  VecR sinv(st.N);
  for (int i = 0; i < st.N; ++i) sinv[i] = st.mass() / (st.N * s[i]);
  const VecR delta = sinv - ev.m;
  const VecR coef = ev.gram.ldlt().solve(ev.cov * delta);
  VecR perp = delta;
  for (size_t j = 0; j < gens.size(); ++j) perp -= coef[j] * gens[j];
  return njson{{"centre_of_mass", com},
               {"density_contraction", den},
               {"gradient_norm", perp.norm()}};
}

njson state_json(const RunConfig& cfg, const SolveOutcome& oc) {
  njson geometry, result;
  if (oc.cloud) {
    geometry = njson{{"N", int(oc.h_full.rows())},
                     {"mode", "fixed_reference"},
                     {"source", cfg.cloud}};
    result["h"] = matrix_json(oc.h_full);
    result["certificates"] = njson{{"balanced_pencil", oc.residual}};
  } else {
    geometry = njson{{"N", oc.st.N},
                     {"k", oc.st.k},
                     {"n", oc.st.poly.n},
                     {"polytope", cfg.polytope},
                     {"volume", oc.st.V}};
    result["h"] = matrix_json(oc.h.m);
    result["a_diag"] = vec_json(VecR(oc.ctx.a.m.diagonal().real()));
    result["ca"] = oc.ctx.ca;
    result["certificates"] = certificates_json(oc.st, oc.ctx, oc.h);
    if (oc.has_lie)
      result["lie"] = njson{{"entry", vec_json(oc.lie_entry)},
                            {"exit", vec_json(oc.lie_exit)}};
  }
  result["converged"] = oc.converged;
  result["stalled"] = oc.stalled;
  result["iters"] = oc.iters;
  result["outer_iters"] = oc.outer_iters;
  result["reported"] =
      njson{{"certificate", oc.certificate}, {"residual", oc.residual}};
  // the embedded config is the reproducibility record; output location and
  // worker count do not affect the numbers and are kept out so artifacts are
  // byte-identical across directories and thread counts
  njson cfgj = effective_json(cfg);
  cfgj.erase("output");
  cfgj.erase("threads");
  return njson{{"config", cfgj},
               {"format_version", kFormatVersion},
               {"geometry", geometry},
               {"result", result}};
}

njson verdicts_json(const RunConfig& cfg, const SolveOutcome& oc,
                    const njson& state) {
  njson v = njson::array();
  const auto add = [&](const char* name, bool pass, double value,
                       double bound) {
    v.push_back(njson{
        {"bound", bound}, {"name", name}, {"pass", pass}, {"value", value}});
  };
  const double tol = cfg.method == "qext" ? cfg.outer_tol : cfg.tol;
  add("converged", oc.converged, oc.residual, tol);
  if (!oc.cloud) {
    const njson& certs = state.at("result").at("certificates");
    const double com = certs.at("centre_of_mass").get<double>();
    const double den = certs.at("density_contraction").get<double>();
    const double grad = certs.at("gradient_norm").get<double>();
    add("centre_of_mass_within_tol", com <= 10.0 * tol, com, 10.0 * tol);
    add("density_contraction_within_tol", den <= 10.0 * tol, den, 10.0 * tol);
    double gb;
    if (cfg.method == "qext") {
      FlowOptions fo;
      fo.tol = cfg.inner_tol;
      gb = 10.0 * fo.resolved_tol(oc.st);
    } else {
      gb = 10.0 * tol * (oc.st.mass() / oc.st.N) * std::sqrt(double(oc.st.N));
    }
    add("gradient_norm_within_tol", grad <= gb, grad, gb);
    if (cfg.method == "qext") {
      add("energy_nonincreasing", oc.energy_monotone,
          oc.energy_monotone ? 0.0 : 1.0, 0.0);
      if (oc.has_lie) {
        const double rel = (oc.lie_exit - oc.lie_entry).norm() /
                           std::max(oc.lie_entry.norm(), 1e-6);
        add("lie_component_conserved", rel <= 1e-6, rel, 1e-6);
      }
    }
  }
  bool all = true;
  for (const njson& e : v) all = all && e.at("pass").get<bool>();
  return njson{{"exit_code", oc.converged ? kExitOk : kExitStalled},
               {"pass", all},
               {"verdicts", v}};
}

void write_solve_artifacts(const std::string& dir, const RunConfig& cfg,
                           const SolveOutcome& oc) {
  fsys::create_directories(dir);
  const njson state = state_json(cfg, oc);
  write_history_csv(dir + "/history.csv", oc.rows);
  write_json_file(dir + "/state.json", state);
  write_json_file(dir + "/verdicts.json", verdicts_json(cfg, oc, state));
}

// ---------------- subcommands ----------------
int cmd_solve(const RunConfig& cfg) {
  fsys::create_directories(cfg.out_dir);
  write_json_file(cfg.out_dir + "/config.json", effective_json(cfg));
  const SolveOutcome oc =
      cfg.cloud.empty() ? run_toric_solve(cfg, cfg.k) : run_cloud_solve(cfg);
  write_solve_artifacts(cfg.out_dir, cfg, oc);
  std::printf("solve %s: %s\n", cfg.method.c_str(),
              cfg.cloud.empty()
                  ? (cfg.polytope + " k=" + std::to_string(cfg.k)).c_str()
                  : cfg.cloud.c_str());
  std::printf("%s after %d iterations: residual %.3e, certificate %.3e\n",
              oc.converged ? "converged" : "stalled", oc.iters, oc.residual,
              oc.certificate);
  std::printf(
      "artifacts: %s/{config.json, history.csv, state.json, verdicts.json}\n",
      cfg.out_dir.c_str());
  return oc.converged ? kExitOk : kExitStalled;
}

int cmd_sweep(const RunConfig& cfg) {
  if (!cfg.cloud.empty())
    throw ConfigError("invalid value: sweep (cloud mode supports solve only)");
  if (cfg.k_list.empty())
    throw ConfigError("missing key: sweep.k_list (nonempty list required)");
  fsys::create_directories(cfg.out_dir);
  write_json_file(cfg.out_dir + "/config.json", effective_json(cfg));

  int code = kExitOk;
  njson per_k = njson::array();
  SweepReport rep;
  if (cfg.kind == "bergman") {
    // fixed-metric density sweep: no solves, the warm-start form is the model
    const SectionBasis basis =
        SectionBasis::make(polytope_by_name(cfg.polytope), cfg.k);
    const HermitianForm h0 = warm_from(cfg, basis.count);
    QuadratureScheme sc;
    sc.resolution = cfg.resolution;
    rep = check_bergman_first_order(basis, h0, cfg.k_list, sc);
  } else if (cfg.kind == "semiclassical") {
    std::vector<QextSweepItem> items;
    for (int k : cfg.k_list) {
      SolveOutcome oc = run_toric_solve(cfg, k);
      write_solve_artifacts(cfg.out_dir + "/k_" + std::to_string(k), cfg, oc);
      per_k.push_back(njson{{"certificate", oc.certificate},
                            {"converged", oc.converged},
                            {"exit_code", oc.converged ? kExitOk : kExitStalled},
                            {"iters", oc.iters},
                            {"k", k},
                            {"residual", oc.residual}});
      if (!oc.converged) code = kExitStalled;
      QextSweepItem item;
      item.k = k;
      item.st = oc.st;
      item.h = oc.h;
      item.ctx = oc.ctx;
      item.converged = oc.converged;
      items.push_back(std::move(item));
    }
    rep = check_semiclassical_extremal(items);
  } else {  // spectrum
    const SectionBasis b1 =
        SectionBasis::make(polytope_by_name(cfg.polytope), 1);
    std::vector<SpectrumEntry> entries;
    for (int k : cfg.k_list) {
      SolveOutcome oc = run_toric_solve(cfg, k);
      write_solve_artifacts(cfg.out_dir + "/k_" + std::to_string(k), cfg, oc);
      const LieData lie = make_lie_data(oc.st, oc.h);
      const MetricModel ref =
          power_model(b1, HermitianForm::identity(b1.count), double(k));
      const SpectrumEntry e = hessian_spectrum_report(
          oc.st, oc.h, lie, ref, cfg.sweep_seed, cfg.r_bound);
      per_k.push_back(njson{{"converged", oc.converged},
                            {"exit_code", oc.converged ? kExitOk : kExitStalled},
                            {"in_regime", e.in_regime},
                            {"k", k},
                            {"residual", oc.residual}});
      if (!oc.converged) code = kExitStalled;
      entries.push_back(e);
    }
    rep = spectrum_sweep_report(entries, cfg.band);
  }

  if (!rep.inconclusive && !rep.pass()) code = kExitStalled;
  njson doc = njson{{"config", effective_json(cfg)},
                    {"format_version", kFormatVersion},
                    {"kind", cfg.kind},
                    {"per_k", per_k},
                    {"report", report_json(rep)}};
  write_json_file(cfg.out_dir + "/sweep_report.json", doc);
  std::printf("sweep %s: %zu levels, %s\n", cfg.kind.c_str(), rep.rows.size(),
              rep.inconclusive ? ("inconclusive: " + rep.note).c_str()
                               : (rep.pass() ? "pass" : "fail"));
  for (const SweepVerdict& v : rep.verdicts)
    std::printf("  %s  %-32s value %.6g bound %.6g\n",
                v.pass ? "pass" : "FAIL", v.name.c_str(), v.value, v.bound);
  std::printf("artifacts: %s/sweep_report.json\n", cfg.out_dir.c_str());
  return code;
}

int cmd_diagnose(const RunConfig& cli_cfg, const std::string& state_path) {
  const std::string path =
      state_path.empty() ? cli_cfg.out_dir + "/state.json" : state_path;
  const njson sj = read_json_file(path, "state file");
  if (!sj.is_object() || !sj.contains("config") || !sj.contains("result"))
    throw ConfigError("state file lacks config/result: " + path);
  const RunConfig cfg = parse_config(sj.at("config"));
  const njson& res = sj.at("result");
  const MatC h = matrix_from_json(res.at("h"), "result.h");
  const njson& reported = res.at("reported");

  int fails = 0;
  const auto line = [&](const char* name, double value, double bound) {
    const bool ok = value <= bound;
    if (!ok) ++fails;
    std::printf("%s  %-28s %.6e (bound %.6e)\n", ok ? "pass" : "FAIL", name,
                value, bound);
  };

  if (!cfg.cloud.empty()) {
    const Eigen::SelfAdjointEigenSolver<MatC> es(h);
    if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() <= 0) {
      std::fprintf(stderr, "error: definiteness error: state form is not "
                           "positive definite\n");
      return kExitError;
    }
    const CloudData cd = load_cloud(cfg.cloud);
    if (cd.nsec != int(h.rows()))
      throw ConfigError("state dimension does not match cloud file");
    const MatC t = (double(cd.nsec) / cd.volume) * cloud_mubar(cd, h);
    Eigen::GeneralizedSelfAdjointEigenSolver<MatC> ges(t, h);
    double dev = 0;
    for (int i = 0; i < cd.nsec; ++i)
      dev = std::max(dev, std::abs(ges.eigenvalues()[i] - 1.0));
    line("balanced_pencil", dev, 10.0 * cfg.tol);
    const double match =
        std::abs(dev - reported.at("residual").get<double>());
    line("recompute_matches_reported", match,
         1e-12 * std::max(1.0, std::abs(dev)));
    return fails == 0 ? kExitOk : kExitStalled;
  }

  // toric state: the invariant sector is diagonal with positive entries
  const Setup st = setup_from(cfg, cfg.k);
  if (int(h.rows()) != st.N || int(h.cols()) != st.N)
    throw ConfigError("state dimension does not match geometry");
  for (int i = 0; i < st.N; ++i)
    for (int j = 0; j < st.N; ++j) {
      const bool diag = i == j;
      const cxd e = h(i, j);
      const bool bad =
          diag ? !(e.real() > 0) || e.imag() != 0 || !std::isfinite(e.real())
               : e != cxd(0, 0);
      if (bad) {
        std::fprintf(stderr, "error: definiteness error: state form must be "
                             "diagonal with positive entries (entry %d,%d)\n",
                     i, j);
        return kExitError;
      }
    }
  HermitianForm hf = HermitianForm::identity(st.N);
  for (int i = 0; i < st.N; ++i) hf.m(i, i) = h(i, i).real();
  if (!res.contains("a_diag") || !res.contains("ca"))
    throw ConfigError("state file lacks result.{a_diag, ca}: " + path);
  EnergyContext ctx;
  const VecR a = vec_from_json(res.at("a_diag"), "result.a_diag");
  if (int(a.size()) != st.N)
    throw ConfigError("state a_diag dimension mismatch");
  ctx.a.m = a.cast<cxd>().asDiagonal();
  ctx.ca = iod::get_num(res, "ca", "result.ca", 0.0);
  ctx.href = hf;

  const njson certs = certificates_json(st, ctx, hf);
  const double tol = cfg.method == "qext" ? cfg.outer_tol : cfg.tol;
  line("centre_of_mass", certs.at("centre_of_mass").get<double>(),
       10.0 * tol);
  line("density_contraction",
       certs.at("density_contraction").get<double>(), 10.0 * tol);
  double gb;
  if (cfg.method == "qext") {
    FlowOptions fo;
    fo.tol = cfg.inner_tol;
    gb = 10.0 * fo.resolved_tol(st);
  } else {
    gb = 10.0 * tol * (st.mass() / st.N) * std::sqrt(double(st.N));
  }
  line("gradient_norm", certs.at("gradient_norm").get<double>(), gb);
  line("inverse_moment", check_inverse_moment_identity(st, hf), 1e-7);
  const double match =
      std::abs(certs.at("centre_of_mass").get<double>() -
               reported.at("certificate").get<double>());
  line("recompute_matches_reported", match,
       1e-12 * std::max(1.0, std::abs(
                                 reported.at("certificate").get<double>())));
  return fails == 0 ? kExitOk : kExitStalled;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"balanced and quantized-extremal metrics on polarized toric "
               "geometries"};
  app.require_subcommand(1);
  std::string config_path, out_override, state_path;
  int threads_override = 0;
  double res_override = 0;
  std::int64_t seed_override = -1;

  CLI::App* csolve =
      app.add_subcommand("solve", "run one solve and write artifacts");
  CLI::App* csweep =
      app.add_subcommand("sweep", "run a level sweep with diagnostics");
  CLI::App* cdiag =
      app.add_subcommand("diagnose", "re-verify a saved final state");
  for (CLI::App* s : {csolve, csweep, cdiag}) {
    s->add_option("--config", config_path, "run configuration (JSON)")
        ->required();
    s->add_option("--out", out_override, "output directory override");
    s->add_option("--threads", threads_override, "worker thread override");
    s->add_option("--resolution", res_override,
                  "quadrature resolution override");
    s->add_option("--seed", seed_override, "warm-start seed override");
  }
  cdiag->add_option("--state", state_path,
                    "state document (default <out>/state.json)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitError;
  }

  try {
    RunConfig cfg = parse_config(read_json_file(config_path, "config file"));
    if (!out_override.empty()) cfg.out_dir = out_override;
    if (threads_override > 0) {
      if (threads_override > 256)
        throw ConfigError("invalid value: --threads (must be in [1, 256])");
      cfg.threads = threads_override;
    }
    if (res_override > 0) {
      if (res_override > 16.0)
        throw ConfigError("invalid value: --resolution (must be in (0, 16])");
      cfg.resolution = res_override;
    }
    if (seed_override >= 0) cfg.seed = std::uint64_t(seed_override);
    worker_count() = cfg.threads;
    if (app.got_subcommand("solve")) return cmd_solve(cfg);
    if (app.got_subcommand("sweep")) return cmd_sweep(cfg);
    return cmd_diagnose(cfg, state_path);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitError;
  }
}
