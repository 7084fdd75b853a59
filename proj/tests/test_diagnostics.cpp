#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "qk/diagnostics.hpp"
#include "qk/solve.hpp"

using namespace qk;

namespace {

Setup p1(int k, double res = 1.0) {
  QuadratureScheme s;
  s.resolution = res;
  return Setup::make(Polytope::segment(), k, s);
}

Setup p2(int k, double res = 1.0) {
  QuadratureScheme s;
  s.resolution = res;
  return Setup::make(Polytope::simplex(), k, s);
}

HermitianForm seeded(int n, std::uint64_t seed, double amp) {
  rng64 rng(seed);
  return random_spd_form(n, rng, amp, true);
}

// balanced forms for the sweep helpers; levels up to 16 need headroom
BalanceState balanced(const Setup& st) {
  BalanceOptions bo;
  bo.max_iters = 3000;
  return solve_balanced(st, HermitianForm::identity(st.N), bo);
}

}  // namespace

// ---------------- inverse-moment identity ----------------

TEST_CASE("inverse-moment identity matches the density route") {
  SECTION("identity form on the line") {
    const Setup st = p1(1);
    REQUIRE(check_inverse_moment_identity(st, HermitianForm::identity(st.N)) <
            1e-10);
  }
  SECTION("seeded diagonal form on the line, default grid") {
    const Setup st = p1(5);
    REQUIRE(check_inverse_moment_identity(st, seeded(st.N, 42, 1.0)) < 1e-8);
  }
  SECTION("seeded diagonal form on the plane") {
    const Setup st = p2(2, 0.5);
    REQUIRE(check_inverse_moment_identity(st, seeded(st.N, 7, 1.0)) < 1e-7);
  }
}

TEST_CASE("inverse-moment residual refines like quadrature error") {
  // the identity is exact, so the residual must collapse under refinement:
  // either a >= 10x drop per resolution doubling or already at the plateau
  const HermitianForm h = seeded(6, 42, 1.0);
  const double r1 = check_inverse_moment_identity(p1(5, 0.5), h);
  const double r2 = check_inverse_moment_identity(p1(5, 1.0), h);
  CAPTURE(r1, r2);
  REQUIRE(r1 < 1e-8);
  REQUIRE(r1 > 1e-12);  // coarse grid keeps the drop measurable
  REQUIRE(r2 <= r1 / 10.0);
}

// ---------------- affine curvature fit ----------------

TEST_CASE("affine curvature fit is exact on constant-curvature models") {
  SECTION("round metric on the line") {
    const Setup st = p1(1);
    const auto cs = curvature_affine_fit(
        st.quad, fs_model(st.basis, HermitianForm::identity(st.N)),
        bulk_floor(1));
    REQUIRE(cs.mean == Catch::Approx(4.0 * kPi).epsilon(1e-10));
    REQUIRE(cs.l2_dist < 1e-8);
    REQUIRE(std::abs(cs.slope[0]) < 1e-6);
  }
  SECTION("product round metric on the square") {
    const Setup st = Setup::make(Polytope::unit_square(), 1);
    const auto cs = curvature_affine_fit(
        st.quad, fs_model(st.basis, HermitianForm::identity(st.N)),
        bulk_floor(2));
    REQUIRE(cs.mean == Catch::Approx(8.0 * kPi).epsilon(1e-10));
    REQUIRE(cs.l2_dist < 1e-4);
    REQUIRE(cs.sup_bulk < 1e-6);
    REQUIRE(std::abs(cs.slope[0]) < 1e-10);
    REQUIRE(std::abs(cs.slope[1]) < 1e-10);
  }
}

TEST_CASE("affine fit coefficients depend only on the polytope") {
  // the moment-map pushforward of the Kaehler measure and the pairing of S
  // against affine functions are both invariants of the polarized class, so
  // the fit coefficients cannot depend on the metric -- only the defect does
  const Setup st = Setup::make(Polytope::trapezoid(), 1, [] {
    QuadratureScheme s;
    s.resolution = 0.5;
    return s;
  }());
  const auto c1 = curvature_affine_fit(
      st.quad, fs_model(st.basis, HermitianForm::identity(st.N)),
      bulk_floor(2));
  const auto c2 = curvature_affine_fit(
      st.quad, fs_model(st.basis, seeded(st.N, 5, 0.8)), bulk_floor(2));
  CAPTURE(c1.b0, c2.b0, c1.slope[1], c2.slope[1]);
  REQUIRE(std::abs(c1.b0 - c2.b0) < 1e-6);
  REQUIRE((c1.slope - c2.slope).norm() < 1e-6);
  // boundary-to-volume identity fixes the mean curvature of the class
  REQUIRE(c1.mean == Catch::Approx(20.0 * kPi / 3.0).epsilon(1e-8));
  REQUIRE(std::abs(c1.mean - c2.mean) < 1e-6);
  // the mirror symmetry of this polytope kills the first slope component
  REQUIRE(std::abs(c1.slope[0]) < 1e-6);
  REQUIRE(c1.slope[1] == Catch::Approx(-11.599727).margin(1e-4));
  // neither form is anywhere near extremal: the defect stays order one
  REQUIRE(c1.l2_dist > 1.0);
  REQUIRE(c2.l2_dist > 1.0);
}

// ---------------- density expansion in the level ----------------

TEST_CASE("fixed-metric density deviation decays at first order in the level") {
  const SectionBasis b2 = SectionBasis::make(Polytope::segment(), 2);
  HermitianForm h0 = HermitianForm::identity(3);
  h0.m(0, 0) = std::exp(0.3);
  h0.m(2, 2) = std::exp(0.3);

  SECTION("slope and monotone decay over a 4x level range") {
    const auto rep = check_bergman_first_order(b2, h0, {32, 64, 128});
    CAPTURE(rep.note);
    REQUIRE(rep.pass());
    REQUIRE(rep.verdicts.size() == 2);
    for (const auto& v : rep.verdicts) REQUIRE(v.pass);
    REQUIRE(rep.verdicts[0].name == "first_order_slope");
    REQUIRE(rep.verdicts[0].value <= -0.8);
    // successive halving of the level roughly halves the defect
    for (size_t i = 1; i < rep.rows.size(); ++i) {
      const double ratio = rep.rows[i].metrics.at("ratio");
      REQUIRE(ratio > 0.3);
      REQUIRE(ratio < 0.8);
    }
    REQUIRE(rep.rows.back().metrics.at("err_sup") < 1.2);
  }
  SECTION("a narrow level range is reported as inconclusive") {
    const auto rep = check_bergman_first_order(b2, h0, {8, 16});
    REQUIRE(rep.inconclusive);
    REQUIRE_FALSE(rep.pass());
    REQUIRE_FALSE(rep.note.empty());
  }
}

TEST_CASE("density deviation at the round metric sits at the quadrature floor") {
  // constant curvature: the first-order term vanishes identically and the
  // sup defect reads pure quadrature error at every level
  const SectionBasis b1 = SectionBasis::make(Polytope::segment(), 1);
  const auto rep =
      check_bergman_first_order(b1, HermitianForm::identity(2), {4, 8, 16});
  for (const auto& row : rep.rows) {
    CAPTURE(row.k);
    REQUIRE(row.metrics.at("err_sup") < 1e-9);
    REQUIRE(row.metrics.at("sbar") == Catch::Approx(4.0 * kPi).epsilon(1e-9));
  }
}

// ---------------- semiclassical sweep ----------------

TEST_CASE("balanced level sweep passes the semiclassical checks") {
  std::vector<QextSweepItem> items;
  for (int k : {4, 8, 16}) {
    QextSweepItem it;
    it.k = k;
    it.st = p1(k);
    const auto bs = balanced(it.st);
    REQUIRE(bs.converged);
    it.h = bs.h;
    it.ctx.a.m = MatC::Zero(it.st.N, it.st.N);
    it.converged = bs.converged;
    items.push_back(std::move(it));
  }

  SECTION("constant-curvature limits: defects at the floor, verdicts pass") {
    const auto rep = check_semiclassical_extremal(items);
    CAPTURE(rep.note);
    REQUIRE(rep.pass());
    REQUIRE(rep.rows.size() == 3);
    for (const auto& row : rep.rows) {
      REQUIRE(row.metrics.at("affine_dist") < 1e-7);
      REQUIRE(row.metrics.at("track_sup") < 1e-6);
      REQUIRE(row.metrics.at("sbar") ==
              Catch::Approx(4.0 * kPi).epsilon(1e-9));
      REQUIRE(std::abs(row.metrics.at("slope0")) < 1e-9);
    }
  }
  SECTION("non-converged levels are excluded with a note") {
    auto cut = items;
    cut[1].converged = false;
    const auto rep = check_semiclassical_extremal(cut);
    REQUIRE(rep.rows.size() == 2);
    REQUIRE_FALSE(rep.note.empty());
    REQUIRE(rep.pass());
  }
  SECTION("fewer than two usable levels is inconclusive") {
    auto cut = items;
    cut[0].converged = false;
    cut[2].converged = false;
    const auto rep = check_semiclassical_extremal(cut);
    REQUIRE(rep.inconclusive);
    REQUIRE_FALSE(rep.pass());
  }
}

// ---------------- Hessian spectrum ----------------

TEST_CASE("hessian matrix matches the quadratic form and kills symmetries") {
  SECTION("on the line") {
    const Setup st = p1(6);
    const HermitianForm h = seeded(st.N, 11, 1.0);
    const MatR m = hessian_matrix(st, h);
    // degenerate directions: global scalings and symmetry generators
    const auto lie = make_lie_data(st, h);
    REQUIRE((m * VecR::Ones(st.N)).norm() < 1e-12 * m.norm());
    for (const VecR& g : lie.gens)
      REQUIRE((m * g).norm() < 1e-12 * m.norm() * g.norm());
    // agreement with the scan-based evaluator on a seeded direction
    rng64 rng(12);
    VecR v(st.N);
    for (int a = 0; a < st.N; ++a) v[a] = rng.sym();
    v.array() -= v.mean();
    v /= v.norm();
    HermitianEndo e;
    e.m = v.cast<cxd>().asDiagonal();
    const double q = hessian_quadform(st, h, {e})[0];
    REQUIRE(v.dot(m * v) == Catch::Approx(q).epsilon(1e-12));

    // a mixed entry reroutes the batch through the angular grid; both
    // paths must agree and the off-diagonal value stays nonnegative
    HermitianEndo e2;
    e2.m = MatC::Zero(st.N, st.N);
    e2.m(0, 1) = cxd(0.3, 0.1);
    e2.m(1, 0) = cxd(0.3, -0.1);
    e2.m(2, 2) = 0.5;
    const VecR qd = hessian_quadform(st, h, {e, e2});
    REQUIRE(qd[0] == Catch::Approx(q).epsilon(1e-12));
    REQUIRE(qd[1] > 0.0);
  }
  SECTION("on the plane") {
    const Setup st = p2(2, 0.5);
    const HermitianForm h = seeded(st.N, 13, 0.8);
    const MatR m = hessian_matrix(st, h);
    REQUIRE((m * VecR::Ones(st.N)).norm() < 1e-12 * m.norm());
    rng64 rng(14);
    VecR v(st.N);
    for (int a = 0; a < st.N; ++a) v[a] = rng.sym();
    v.array() -= v.mean();
    v /= v.norm();
    HermitianEndo e;
    e.m = v.cast<cxd>().asDiagonal();
    HermitianEndo e2;
    e2.m = MatC::Zero(st.N, st.N);
    e2.m(1, 3) = cxd(0.2, -0.4);
    e2.m(3, 1) = cxd(0.2, 0.4);
    const VecR qd = hessian_quadform(st, h, {e, e2});
    REQUIRE(v.dot(m * v) == Catch::Approx(qd[0]).epsilon(1e-12));
    REQUIRE(qd[1] > 0.0);
  }
}

TEST_CASE("hessian spectrum entries find the complement gap") {
  const SectionBasis b1 = SectionBasis::make(Polytope::segment(), 1);
  std::vector<SpectrumEntry> entries;
  for (int k : {4, 8}) {
    const Setup st = p1(k);
    const auto bs = balanced(st);
    REQUIRE(bs.converged);
    const auto lie = make_lie_data(st, bs.h);
    const MetricModel ref =
        power_model(b1, HermitianForm::identity(2), double(k));
    const auto e = hessian_spectrum_report(st, bs.h, lie, ref, 99);
    CAPTURE(e.k, e.min_quotient, e.r_observed);
    // the balanced metric at any level is the round one, so the reference
    // comparison is exact and the refined minimum hits the spectral floor
    REQUIRE(e.in_regime);
    REQUIRE(e.r_observed < 1.001);
    REQUIRE(e.lie_quotient < 1e-10);
    REQUIRE(e.min_quotient > 0.0);
    const double floor_k = k == 4 ? 0.228571 : 0.0969697;
    REQUIRE(e.min_quotient == Catch::Approx(floor_k).margin(1e-4));
    // determinism: the same seed reproduces the entry exactly
    const auto e2 = hessian_spectrum_report(st, bs.h, lie, ref, 99);
    REQUIRE(e2.min_quotient == e.min_quotient);
    REQUIRE(e2.r_observed == e.r_observed);
    entries.push_back(e);
  }
  const auto rep = spectrum_sweep_report(entries);
  CAPTURE(rep.note);
  REQUIRE(rep.pass());
  REQUIRE(rep.verdicts.size() == 3);
  for (const auto& v : rep.verdicts) REQUIRE(v.pass);
}

TEST_CASE("spectrum sweep flags reference-comparability violations") {
  const SectionBasis b1 = SectionBasis::make(Polytope::segment(), 1);
  const Setup st = p1(4);
  const MetricModel ref =
      power_model(b1, HermitianForm::identity(2), 4.0);
  // a large-amplitude form is far from the fixed background: the entry is
  // flagged and any sweep containing it refuses to certify
  const HermitianForm h = seeded(st.N, 3, 6.0);
  const auto bad = hessian_spectrum_report(st, h, make_lie_data(st, h), ref, 99);
  REQUIRE_FALSE(bad.in_regime);
  REQUIRE(bad.r_observed > 10.0);

  const auto bs = balanced(st);
  const auto good =
      hessian_spectrum_report(st, bs.h, make_lie_data(st, bs.h), ref, 99);
  const auto rep = spectrum_sweep_report({good, bad});
  REQUIRE(rep.inconclusive);
  REQUIRE_FALSE(rep.pass());
  REQUIRE(rep.note.find("out of regime") != std::string::npos);
}
