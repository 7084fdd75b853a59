#pragma once
// Run configuration and artifact serialization for the command-line driver,
// plus the fixed-measure point-cloud backend. One structured-text format
// (JSON) carries configs, states and reports; CSV carries iteration time
// series. Writers sort keys and print shortest round-trip reals, so a config
// or report survives write -> read -> write byte-identically and identical
// runs produce identical artifacts.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qk/diagnostics.hpp"
#include "qk/solve.hpp"

namespace qk {

using njson = nlohmann::json;

constexpr int kFormatVersion = 1;
constexpr int kExitOk = 0;       // converged / all checks pass
constexpr int kExitError = 1;    // bad config, bad input files, hard failure
constexpr int kExitStalled = 2;  // ran fine but did not converge / pass

// configuration or input-file violations; the message names the field path
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------- run configuration ----------------
struct RunConfig {
  // geometry: exactly one of polytope (toric) or cloud (fixed measure)
  std::string polytope;
  std::string cloud;
  int k = 0;
  // solver
  std::string method = "balanced";  // balanced | qext | modified_t
  double tol = 1e-11;               // balanced / T-iteration residual
  double outer_tol = 1e-8;          // correction-scheme exit norm
  double inner_tol = -1.0;          // flow gradient tol; <= 0 = scaled default
  int max_iters = 3000;
  int max_outer = 40;
  double damping = 1.0;
  std::string context_from;  // state file seeding the T-operator context
  // warm start
  std::string profile = "fubini_study";  // fubini_study | perturbed
  std::uint64_t seed = 0;
  double amplitude = 0.0;
  // quadrature
  double resolution = 1.0;
  // sweep
  std::vector<int> k_list;
  std::string kind = "semiclassical";  // semiclassical | bergman | spectrum
  std::uint64_t sweep_seed = 1;
  double band = 5.0;
  double r_bound = 10.0;
  // output
  std::string out_dir = "out";
  int threads = 1;
};

namespace iod {

inline ConfigError wrong_type(const std::string& path, const char* want) {
  return ConfigError("wrong type: " + path + " (expected " +
                     std::string(want) + ")");
}

inline void check_keys(const njson& j, const std::string& prefix,
                       std::initializer_list<const char*> allowed) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw ConfigError("unknown key: " + prefix + it.key());
  }
}

inline const njson* sub(const njson& j, const char* key) {
  const auto it = j.find(key);
  return it == j.end() ? nullptr : &*it;
}

inline double get_num(const njson& j, const char* key,
                      const std::string& path, double dflt) {
  const njson* v = sub(j, key);
  if (!v) return dflt;
  if (!v->is_number()) throw wrong_type(path, "number");
  return v->get<double>();
}

inline int get_int(const njson& j, const char* key, const std::string& path,
                   int dflt) {
  const njson* v = sub(j, key);
  if (!v) return dflt;
  if (!v->is_number_integer()) throw wrong_type(path, "integer");
  return v->get<int>();
}

inline std::uint64_t get_uint(const njson& j, const char* key,
                              const std::string& path, std::uint64_t dflt) {
  const njson* v = sub(j, key);
  if (!v) return dflt;
  if (v->is_number_unsigned()) return v->get<std::uint64_t>();
  if (v->is_number_integer() && v->get<std::int64_t>() >= 0)
    return std::uint64_t(v->get<std::int64_t>());
  throw wrong_type(path, "non-negative integer");
}

inline std::string get_str(const njson& j, const char* key,
                           const std::string& path, const std::string& dflt) {
  const njson* v = sub(j, key);
  if (!v) return dflt;
  if (!v->is_string()) throw wrong_type(path, "string");
  return v->get<std::string>();
}

inline void in_set(const std::string& value, const std::string& path,
                   std::initializer_list<const char*> allowed) {
  for (const char* a : allowed)
    if (value == a) return;
  std::string opts;
  for (const char* a : allowed) opts += std::string(opts.empty() ? "" : " | ") + a;
  throw ConfigError("invalid value: " + path + " (got \"" + value +
                    "\", expected one of: " + opts + ")");
}

}  // namespace iod

// Strict schema validation: unknown keys, wrong types and out-of-range
// values are rejected before any computation, naming the offending field.
inline RunConfig parse_config(const njson& j) {
  using namespace iod;
  RunConfig c;
  if (!j.is_object()) throw ConfigError("config root must be an object");
  check_keys(j, "", {"format_version", "geometry", "solver", "warm_start",
                     "quadrature", "sweep", "output", "threads"});
  if (const njson* v = sub(j, "format_version")) {
    if (!v->is_number_integer()) throw wrong_type("format_version", "integer");
    if (v->get<int>() != kFormatVersion)
      throw ConfigError("unsupported format_version: " +
                        std::to_string(v->get<int>()) + " (expected " +
                        std::to_string(kFormatVersion) + ")");
  }

  const njson* g = sub(j, "geometry");
  if (!g) throw ConfigError("missing key: geometry");
  if (!g->is_object()) throw wrong_type("geometry", "object");
  check_keys(*g, "geometry.", {"polytope", "cloud", "k"});
  c.polytope = get_str(*g, "polytope", "geometry.polytope", "");
  c.cloud = get_str(*g, "cloud", "geometry.cloud", "");
  if (c.polytope.empty() && c.cloud.empty())
    throw ConfigError("missing key: geometry.polytope (or geometry.cloud)");
  if (!c.polytope.empty() && !c.cloud.empty())
    throw ConfigError(
        "invalid value: geometry (polytope and cloud are mutually exclusive)");
  if (!c.polytope.empty()) {
    try {
      polytope_by_name(c.polytope);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("invalid value: geometry.polytope (" +
                        std::string(e.what()) + ")");
    }
    if (!sub(*g, "k")) throw ConfigError("missing key: geometry.k");
    c.k = get_int(*g, "k", "geometry.k", 0);
    if (c.k < 1)
      throw ConfigError("invalid value: geometry.k (level must be >= 1)");
  } else {
    c.k = get_int(*g, "k", "geometry.k", 0);
  }

  if (const njson* s = sub(j, "solver")) {
    if (!s->is_object()) throw wrong_type("solver", "object");
    check_keys(*s, "solver.",
               {"method", "tol", "outer_tol", "inner_tol", "max_iters",
                "max_outer", "damping", "context_from"});
    c.method = get_str(*s, "method", "solver.method", c.method);
    in_set(c.method, "solver.method", {"balanced", "qext", "modified_t"});
    c.tol = get_num(*s, "tol", "solver.tol", c.tol);
    if (!(c.tol > 0))
      throw ConfigError("invalid value: solver.tol (must be > 0)");
    c.outer_tol = get_num(*s, "outer_tol", "solver.outer_tol", c.outer_tol);
    if (!(c.outer_tol > 0))
      throw ConfigError("invalid value: solver.outer_tol (must be > 0)");
    c.inner_tol = get_num(*s, "inner_tol", "solver.inner_tol", c.inner_tol);
    c.max_iters = get_int(*s, "max_iters", "solver.max_iters", c.max_iters);
    if (c.max_iters < 1)
      throw ConfigError("invalid value: solver.max_iters (must be >= 1)");
    c.max_outer = get_int(*s, "max_outer", "solver.max_outer", c.max_outer);
    if (c.max_outer < 1)
      throw ConfigError("invalid value: solver.max_outer (must be >= 1)");
    c.damping = get_num(*s, "damping", "solver.damping", c.damping);
    if (!(c.damping > 0) || c.damping > 1.0)
      throw ConfigError("invalid value: solver.damping (must be in (0, 1])");
    c.context_from =
        get_str(*s, "context_from", "solver.context_from", c.context_from);
  }

  if (const njson* w = sub(j, "warm_start")) {
    if (!w->is_object()) throw wrong_type("warm_start", "object");
    check_keys(*w, "warm_start.", {"profile", "seed", "amplitude"});
    c.profile = get_str(*w, "profile", "warm_start.profile", c.profile);
    in_set(c.profile, "warm_start.profile", {"fubini_study", "perturbed"});
    c.seed = get_uint(*w, "seed", "warm_start.seed", c.seed);
    c.amplitude = get_num(*w, "amplitude", "warm_start.amplitude", c.amplitude);
    if (c.amplitude < 0)
      throw ConfigError("invalid value: warm_start.amplitude (must be >= 0)");
  }

  if (const njson* q = sub(j, "quadrature")) {
    if (!q->is_object()) throw wrong_type("quadrature", "object");
    check_keys(*q, "quadrature.", {"resolution"});
    c.resolution = get_num(*q, "resolution", "quadrature.resolution",
                           c.resolution);
    if (!(c.resolution > 0) || c.resolution > 16.0)
      throw ConfigError(
          "invalid value: quadrature.resolution (must be in (0, 16])");
  }

  if (const njson* s = sub(j, "sweep")) {
    if (!s->is_object()) throw wrong_type("sweep", "object");
    check_keys(*s, "sweep.", {"k_list", "kind", "seed", "band", "r_bound"});
    if (const njson* kl = sub(*s, "k_list")) {
      if (!kl->is_array()) throw wrong_type("sweep.k_list", "array");
      c.k_list.clear();
      for (const njson& e : *kl) {
        if (!e.is_number_integer())
          throw wrong_type("sweep.k_list", "array of integers");
        c.k_list.push_back(e.get<int>());
      }
      for (size_t i = 0; i < c.k_list.size(); ++i)
        if (c.k_list[i] < 1 || (i > 0 && c.k_list[i] <= c.k_list[i - 1]))
          throw ConfigError(
              "invalid value: sweep.k_list (levels must be >= 1 and strictly "
              "increasing)");
    }
    c.kind = get_str(*s, "kind", "sweep.kind", c.kind);
    in_set(c.kind, "sweep.kind", {"semiclassical", "bergman", "spectrum"});
    c.sweep_seed = get_uint(*s, "seed", "sweep.seed", c.sweep_seed);
    c.band = get_num(*s, "band", "sweep.band", c.band);
    if (!(c.band > 1))
      throw ConfigError("invalid value: sweep.band (must be > 1)");
    c.r_bound = get_num(*s, "r_bound", "sweep.r_bound", c.r_bound);
    if (!(c.r_bound > 1))
      throw ConfigError("invalid value: sweep.r_bound (must be > 1)");
  }

  if (const njson* o = sub(j, "output")) {
    if (!o->is_object()) throw wrong_type("output", "object");
    check_keys(*o, "output.", {"dir"});
    c.out_dir = get_str(*o, "dir", "output.dir", c.out_dir);
    if (c.out_dir.empty())
      throw ConfigError("invalid value: output.dir (must be nonempty)");
  }

  if (const njson* t = sub(j, "threads")) {
    if (!t->is_number_integer()) throw wrong_type("threads", "integer");
    c.threads = t->get<int>();
    if (c.threads < 1 || c.threads > 256)
      throw ConfigError("invalid value: threads (must be in [1, 256])");
  }
  return c;
}

// full effective configuration, defaults included; the persisted snapshot
inline njson effective_json(const RunConfig& c) {
  njson g;
  if (!c.polytope.empty()) g["polytope"] = c.polytope;
  if (!c.cloud.empty()) g["cloud"] = c.cloud;
  g["k"] = c.k;
  njson j;
  j["format_version"] = kFormatVersion;
  j["geometry"] = g;
  j["solver"] = {{"method", c.method},
                 {"tol", c.tol},
                 {"outer_tol", c.outer_tol},
                 {"inner_tol", c.inner_tol},
                 {"max_iters", c.max_iters},
                 {"max_outer", c.max_outer},
                 {"damping", c.damping},
                 {"context_from", c.context_from}};
  j["warm_start"] = {
      {"profile", c.profile}, {"seed", c.seed}, {"amplitude", c.amplitude}};
  j["quadrature"] = {{"resolution", c.resolution}};
  j["sweep"] = {{"k_list", c.k_list},
                {"kind", c.kind},
                {"seed", c.sweep_seed},
                {"band", c.band},
                {"r_bound", c.r_bound}};
  j["output"] = {{"dir", c.out_dir}};
  j["threads"] = c.threads;
  return j;
}

// ---------------- file helpers ----------------
inline njson read_json_file(const std::string& path, const char* what) {
  std::ifstream f(path);
  if (!f)
    throw ConfigError("cannot open " + std::string(what) + ": " + path);
  njson j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    throw ConfigError(std::string(what) + " parse error in " + path + ": " +
                      e.what());
  }
  return j;
}

inline void write_json_file(const std::string& path, const njson& j) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << j.dump(2) << '\n';
}

inline void write_history_csv(const std::string& path,
                              const std::vector<FlowRow>& rows) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "iter,residual,corr_norm,ca,energy,wallclock\n";
  char buf[320];
  for (const FlowRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.6f\n",
                  r.iter, r.residual, r.corr_norm, r.ca, r.energy, r.wall);
    f << buf;
  }
}

// ---------------- matrix serialization ----------------
// complex matrices as paired real arrays, row-major
inline njson matrix_json(const MatC& m) {
  njson re = njson::array(), im = njson::array();
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) {
      re.push_back(m(i, j).real());
      im.push_back(m(i, j).imag());
    }
  return njson{
      {"cols", m.cols()}, {"im", im}, {"re", re}, {"rows", m.rows()}};
}

inline MatC matrix_from_json(const njson& j, const std::string& path) {
  using namespace iod;
  if (!j.is_object()) throw wrong_type(path, "object");
  check_keys(j, path + ".", {"rows", "cols", "re", "im"});
  const int rows = get_int(j, "rows", path + ".rows", -1);
  const int cols = get_int(j, "cols", path + ".cols", -1);
  if (rows < 1 || cols < 1)
    throw ConfigError("invalid value: " + path + " (bad dimensions)");
  const njson* re = sub(j, "re");
  const njson* im = sub(j, "im");
  if (!re || !im || !re->is_array() || !im->is_array() ||
      int(re->size()) != rows * cols || int(im->size()) != rows * cols)
    throw ConfigError("invalid value: " + path +
                      " (re/im must be rows*cols arrays)");
  MatC m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int c = 0; c < cols; ++c) {
      const njson& a = (*re)[i * cols + c];
      const njson& b = (*im)[i * cols + c];
      if (!a.is_number() || !b.is_number())
        throw ConfigError("invalid value: " + path + " (non-numeric entry)");
      m(i, c) = cxd(a.get<double>(), b.get<double>());
    }
  return m;
}

inline njson vec_json(const VecR& v) {
  njson a = njson::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline VecR vec_from_json(const njson& j, const std::string& path) {
  if (!j.is_array()) throw iod::wrong_type(path, "array");
  VecR v(j.size());
  int i = 0;
  for (const njson& e : j) {
    if (!e.is_number())
      throw ConfigError("invalid value: " + path + " (non-numeric entry)");
    v[i++] = e.get<double>();
  }
  return v;
}

// ---------------- report serialization ----------------
inline njson report_json(const SweepReport& rep) {
  njson rows = njson::array();
  for (const SweepRow& r : rep.rows) {
    njson o;
    o["k"] = r.k;
    for (const auto& [name, value] : r.metrics) o[name] = value;
    rows.push_back(o);
  }
  njson verdicts = njson::array();
  for (const SweepVerdict& v : rep.verdicts)
    verdicts.push_back(njson{{"bound", v.bound},
                             {"name", v.name},
                             {"pass", v.pass},
                             {"value", v.value}});
  return njson{{"inconclusive", rep.inconclusive},
               {"k_values", rep.k_values},
               {"note", rep.note},
               {"pass", rep.pass()},
               {"rows", rows},
               {"verdicts", verdicts}};
}

// ---------------- fixed-measure point clouds ----------------
// Exploratory backend: section values sampled on an immutable weighted node
// set; the measure does not respond to the metric, so only Gram-type maps
// and the balanced iteration are meaningful here.
struct CloudData {
  double volume = 0;
  int k = 0;  // echoed level, informational
  int nsec = 0;
  std::vector<double> w;  // node weights, sum pinned to volume
  MatC v;                 // nodes x sections, values in the fixed frame
};

inline CloudData load_cloud(const std::string& path) {
  using namespace iod;
  const njson j = read_json_file(path, "cloud file");
  if (!j.is_object()) throw ConfigError("cloud file root must be an object");
  check_keys(j, "cloud.",
             {"format_version", "k", "n_sections", "volume", "nodes"});
  if (const njson* v = sub(j, "format_version")) {
    if (!v->is_number_integer() || v->get<int>() != kFormatVersion)
      throw ConfigError("unsupported format_version in cloud file");
  }
  CloudData cd;
  if (!sub(j, "volume")) throw ConfigError("missing key: cloud.volume");
  cd.volume = get_num(j, "volume", "cloud.volume", 0);
  if (!(cd.volume > 0))
    throw ConfigError("invalid value: cloud.volume (must be > 0)");
  cd.k = get_int(j, "k", "cloud.k", 0);
  const njson* nodes = sub(j, "nodes");
  if (!nodes) throw ConfigError("missing key: cloud.nodes");
  if (!nodes->is_array() || nodes->empty())
    throw ConfigError("invalid value: cloud.nodes (nonempty array required)");

  const int m = int(nodes->size());
  int nsec = get_int(j, "n_sections", "cloud.n_sections", -1);
  double wsum = 0;
  for (int t = 0; t < m; ++t) {
    const njson& nd = (*nodes)[t];
    const std::string p = "cloud.nodes[" + std::to_string(t) + "]";
    if (!nd.is_object()) throw wrong_type(p, "object");
    check_keys(nd, p + ".", {"id", "weight", "values"});
    if (!sub(nd, "id") || !sub(nd, "weight") || !sub(nd, "values"))
      throw ConfigError("missing key: " + p + ".{id, weight, values}");
    const double w = get_num(nd, "weight", p + ".weight", -1);
    if (!(w > 0))
      throw ConfigError("invalid value: " + p + ".weight (must be > 0)");
    const njson& vals = nd["values"];
    if (!vals.is_array())
      throw wrong_type(p + ".values", "array of [re, im] pairs");
    if (nsec < 0) nsec = int(vals.size());
    if (int(vals.size()) != nsec)
      throw ConfigError("invalid value: " + p +
                        ".values (inconsistent section count)");
    if (t == 0) {
      cd.nsec = nsec;
      cd.v.resize(m, nsec);
    }
    for (int a = 0; a < nsec; ++a) {
      const njson& pr = vals[a];
      if (!pr.is_array() || pr.size() != 2 || !pr[0].is_number() ||
          !pr[1].is_number())
        throw ConfigError("invalid value: " + p +
                          ".values (entries must be [re, im])");
      cd.v(t, a) = cxd(pr[0].get<double>(), pr[1].get<double>());
    }
    cd.w.push_back(w);
    wsum += w;
  }
  if (cd.nsec < 1)
    throw ConfigError("invalid value: cloud.n_sections (must be >= 1)");
  if (std::abs(wsum - cd.volume) > 1e-6 * std::max(1.0, cd.volume)) {
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "invalid value: cloud.volume (weights sum %.12g differs "
                  "from declared %.12g)",
                  wsum, cd.volume);
    throw ConfigError(buf);
  }
  return cd;
}

// mubar(H)_ij = sum_t w_t v_i conj(v_j) / B_t with B = sum_ab Hinv_ab
// v_a conj(v_b): the L2 Gram of the FS(H) pointwise inner products on the
// fixed measure.
inline MatC cloud_mubar(const CloudData& cd, const MatC& h) {
  const int nn = cd.nsec;
  const Eigen::LLT<MatC> llt(h);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("cloud form lost positivity");
  const MatC hinv = llt.solve(MatC::Identity(nn, nn));
  MatC out = MatC::Zero(nn, nn);
  for (int t = 0; t < int(cd.w.size()); ++t) {
    const Eigen::VectorXcd u = cd.v.row(t).transpose();
    const Eigen::VectorXcd hu = hinv * u.conjugate();
    const double b = (u.transpose() * hu)(0, 0).real();
    if (!(b > 0) || !std::isfinite(b))
      throw std::runtime_error("cloud density degenerate at node " +
                               std::to_string(t));
    out.noalias() += (cd.w[t] / b) * (u * u.adjoint());
  }
  return (out + out.adjoint()) / 2.0;  // enforce exact hermiticity
}

inline void cloud_det_normalize(MatC& h) {
  const Eigen::LLT<MatC> llt(h);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("cloud form lost positivity");
  double lg = 0;
  const MatC l = llt.matrixL();
  for (int i = 0; i < h.rows(); ++i) lg += 2.0 * std::log(l(i, i).real());
  h *= std::exp(-lg / double(h.rows()));
}

struct CloudBalanceState {
  MatC h;
  int iters = 0;
  double residual = 0;
  bool converged = false;
  bool stalled = false;
};

// full-matrix T-operator iteration H <- (N/volume) mubar(H) on the fixed
// measure; residual = sup |lambda - 1| over the (mubar, H) pencil
inline CloudBalanceState solve_cloud_balanced(
    const CloudData& cd, const MatC& h0, int max_iters, double tol,
    const std::function<void(int, double)>& on_iter = {}) {
  CloudBalanceState cs;
  cs.h = h0;
  cloud_det_normalize(cs.h);
  const double c = double(cd.nsec) / cd.volume;
  double best = 1e300;
  int since_best = 0;
  for (cs.iters = 0; cs.iters <= max_iters; ++cs.iters) {
    const MatC t = c * cloud_mubar(cd, cs.h);
    Eigen::GeneralizedSelfAdjointEigenSolver<MatC> ges(t, cs.h);
    if (ges.info() != Eigen::Success)
      throw std::runtime_error("cloud pencil eigensolve failed");
    cs.residual = 0;
    for (int i = 0; i < cd.nsec; ++i)
      cs.residual = std::max(cs.residual,
                             std::abs(ges.eigenvalues()[i] - 1.0));
    if (on_iter) on_iter(cs.iters, cs.residual);
    if (cs.residual <= tol) {
      cs.converged = true;
      return cs;
    }
    if (cs.iters == max_iters) break;
    if (cs.residual < best * (1.0 - 1e-12)) {
      best = cs.residual;
      since_best = 0;
    } else if (++since_best >= 25) {
      cs.stalled = true;
      return cs;
    }
    cs.h = t;
    cloud_det_normalize(cs.h);
  }
  return cs;
}

}  // namespace qk
