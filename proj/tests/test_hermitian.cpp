#include <catch2/catch_amalgamated.hpp>

#include "qk/hermitian.hpp"

using namespace qk;

TEST_CASE("orthonormal frame of identity is identity") {
  auto h = HermitianForm::identity(6);
  MatC p = orthonormal_frame(h);
  REQUIRE((p - MatC::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("orthonormal frame of scalar form rescales") {
  HermitianForm h;
  h.dim = 4;
  h.m = 4.0 * MatC::Identity(4, 4);
  MatC p = orthonormal_frame(h);
  REQUIRE((p - 0.5 * MatC::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("frame orthonormalizes seeded dense forms") {
  rng64 rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    HermitianForm h = random_spd_form(5, rng, 1.5);
    MatC p = orthonormal_frame(h);
    MatC g = p.adjoint() * h.m * p;
    REQUIRE((g - MatC::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-12);
    // triangular frame: Gram-Schmidt in basis order
    for (int i = 1; i < 5; ++i)
      for (int j = 0; j < i; ++j) REQUIRE(std::abs(p(i, j)) == 0.0);
  }
}

TEST_CASE("cholesky reports first failing minor") {
  MatC a = MatC::Identity(3, 3);
  a(1, 1) = -2.0;
  try {
    cholesky_lower(a);
    FAIL("expected definiteness_error");
  } catch (const definiteness_error& e) {
    REQUIRE(e.minor_index == 1);
  }
}

TEST_CASE("geodesic step basics") {
  rng64 rng(7);
  HermitianForm h = random_spd_form(5, rng, 1.0);
  HermitianEndo b;
  // hermitian w.r.t. h: b = h^{-1} s with s a hermitian matrix
  MatC s = random_hermitian(5, rng);
  b.m = h.m.partialPivLu().solve(s);
  REQUIRE(is_self_adjoint(b.m, h));

  SECTION("t = 0 is the identity") {
    HermitianForm h0 = geodesic_step(h, b, 0.0);
    REQUIRE((h0.m - h.m).cwiseAbs().maxCoeff() < 1e-14);
  }
  SECTION("scalar velocity rescales") {
    HermitianEndo c;
    c.m = 0.7 * MatC::Identity(5, 5);
    HermitianForm h1 = geodesic_step(h, c, 2.0);
    REQUIRE((h1.m - std::exp(1.4) * h.m).cwiseAbs().maxCoeff() <
            1e-12 * h.m.cwiseAbs().maxCoeff());
  }
  SECTION("half-step composition") {
    HermitianForm whole = geodesic_step(h, b, 0.8);
    HermitianForm half = geodesic_step(geodesic_step(h, b, 0.4), b, 0.4);
    REQUIRE((whole.m - half.m).cwiseAbs().maxCoeff() <
            1e-10 * whole.m.cwiseAbs().maxCoeff());
  }
  SECTION("stays positive definite far out") {
    for (double t : {-10.0, -3.0, 3.0, 10.0}) {
      HermitianForm ht = geodesic_step(h, b, t);
      REQUIRE_NOTHROW(cholesky_lower(ht.m));
      REQUIRE(is_hermitian(ht.m));
    }
  }
}

TEST_CASE("matrix exponential matches 2x2 closed form") {
  // exp(t [[0,1],[1,0]]) = [[cosh t, sinh t],[sinh t, cosh t]]
  MatC x(2, 2);
  x << 0, 1, 1, 0;
  for (double t : {0.3, 1.0, -2.5}) {
    MatC e = expm(t * x);
    MatC ref(2, 2);
    ref << std::cosh(t), std::sinh(t), std::sinh(t), std::cosh(t);
    REQUIRE((e - ref).cwiseAbs().maxCoeff() < 1e-13 * std::cosh(t));
  }
}

TEST_CASE("norms in the identity frame") {
  auto h = HermitianForm::identity(4);
  HermitianEndo xi;
  xi.m = MatC::Zero(4, 4);
  auto z = norms(xi, h);
  REQUIRE(z.hs == 0.0);
  REQUIRE(z.op == 0.0);

  xi.m = MatC::Identity(4, 4);
  xi.m(0, 0) = -1.0;
  auto n1 = norms(xi, h);  // eigenvalues -1,1,1,1
  REQUIRE(n1.op == Catch::Approx(1.0).epsilon(1e-12));
  REQUIRE(n1.hs == Catch::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("hs norm is the entrywise sum in an orthonormal frame") {
  rng64 rng(23);
  HermitianForm h = random_spd_form(6, rng, 1.2);
  MatC p = orthonormal_frame(h);
  MatC rep = random_hermitian(6, rng);
  HermitianEndo xi;
  xi.m = p * rep * p.partialPivLu().solve(MatC::Identity(6, 6));
  auto nn = norms(xi, h);
  REQUIRE(nn.hs == Catch::Approx(rep.norm()).epsilon(1e-12));
}

TEST_CASE("operator and hs norms sandwich") {
  rng64 rng(5);
  for (int rep = 0; rep < 100; ++rep) {
    int n = 2 + int(rng.next() % 6);
    HermitianForm h = random_spd_form(n, rng, 1.0);
    HermitianEndo xi;
    MatC s = random_hermitian(n, rng);
    xi.m = h.m.partialPivLu().solve(s);
    auto nn = norms(xi, h);
    REQUIRE(nn.op <= nn.hs * (1 + 1e-12));
    REQUIRE(nn.hs <= std::sqrt(double(n)) * nn.op * (1 + 1e-12));
  }
}

TEST_CASE("log of positive definite hermitian inverts exp") {
  rng64 rng(41);
  MatC a = random_hermitian(5, rng);
  MatC l = logm_pd(expm(a));
  REQUIRE((l - a).cwiseAbs().maxCoeff() < 1e-12);
}
