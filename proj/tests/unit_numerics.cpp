#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <wcl/numerics.hpp>

#include <cmath>
#include <complex>

using namespace wcl;

TEST_CASE("gauss-legendre integrates polynomials of degree 2n-1 exactly") {
  const auto q = gauss_legendre(6, -1.0, 2.0);
  REQUIRE(q.nodes.size() == 6);
  double s0 = 0.0, s11 = 0.0;
  for (int i = 0; i < 6; ++i) {
    s0 += q.weights[i];
    s11 += q.weights[i] * std::pow(q.nodes[i], 11);
  }
  CHECK(s0 == doctest::Approx(3.0).epsilon(1e-14));
  // int_{-1}^{2} x^11 dx = (2^12 - 1) / 12
  CHECK(s11 == doctest::Approx((4096.0 - 1.0) / 12.0).epsilon(1e-13));

  // A transcendental integrand converges fast: int_0^pi sin = 2.
  const auto qs = gauss_legendre(24, 0.0, kPi);
  double ss = 0.0;
  for (int i = 0; i < 24; ++i) ss += qs.weights[i] * std::sin(qs.nodes[i]);
  CHECK(ss == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("midpoint rule: equal weights, exact on linear functions") {
  const auto q = midpoint_rule(10, 1.0, 3.0);
  REQUIRE(q.nodes.size() == 10);
  double sw = 0.0, sx = 0.0;
  for (int i = 0; i < 10; ++i) {
    CHECK(q.weights[i] == doctest::Approx(0.2).epsilon(1e-15));
    sw += q.weights[i];
    sx += q.weights[i] * q.nodes[i];
  }
  CHECK(sw == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(sx == doctest::Approx(4.0).epsilon(1e-14));  // int_1^3 x dx
  CHECK(q.nodes[0] == doctest::Approx(1.1).epsilon(1e-15));
}

TEST_CASE("expm: nilpotent, rotation, inverse") {
  Mat n = Mat::Zero(2, 2);
  n(0, 1) = 3.0;
  const Mat en = expm(n);
  CHECK(op_norm(en - (Mat::Identity(2, 2) + n)) < 1e-14);

  const double th = 0.7;
  Mat a = Mat::Zero(2, 2);
  a(0, 1) = -th;
  a(1, 0) = th;
  const Mat r = expm(a);
  CHECK(std::abs(r(0, 0) - std::cos(th)) < 1e-14);
  CHECK(std::abs(r(0, 1) + std::sin(th)) < 1e-14);

  Mat b(3, 3);
  b << cplx(0.1, 0.3), cplx(-1.0, 0.2), 0.4, 0.9, cplx(0.0, -0.5), 1.1,
      cplx(0.2, 0.2), -0.3, cplx(-0.1, 0.7);
  CHECK(op_norm(expm(b) * expm(-b) - Mat::Identity(3, 3)) < 1e-12);
}

TEST_CASE("hermitian propagator matches expm(-i t H)") {
  Mat h(2, 2);
  h << 1.0, cplx(0.2, -0.4), cplx(0.2, 0.4), -0.5;
  const HermitianPropagator p(h);
  const double t = 1.3;
  const Mat direct = expm(cplx(0.0, -1.0) * t * h);
  CHECK(op_norm(p.at(t) - direct) < 1e-13);

  Vec v(2);
  v << cplx(0.3, 0.1), cplx(-0.7, 0.2);
  CHECK((p.apply(t, v) - direct * v).norm() < 1e-13);
  CHECK(std::abs(p.apply(t, v).norm() - v.norm()) < 1e-13);
}

TEST_CASE("operator norm and hermiticity defect") {
  Mat d = Mat::Zero(2, 2);
  d(0, 0) = 3.0;
  d(1, 1) = cplx(0.0, -4.0);
  CHECK(op_norm(d) == doctest::Approx(4.0).epsilon(1e-14));

  Mat herm(2, 2);
  herm << 1.0, cplx(0.0, 2.0), cplx(0.0, -2.0), -1.0;
  CHECK(herm_defect(herm) < 1e-15);

  Mat upper = Mat::Zero(2, 2);
  upper(0, 1) = 1.0;  // A - A^dag = [[0,1],[-1,0]], norm 1
  CHECK(herm_defect(upper) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("smoothstep and bump window") {
  CHECK(smoothstep(-1.0) == 0.0);
  CHECK(smoothstep(0.0) == 0.0);
  CHECK(smoothstep(1.0) == 1.0);
  CHECK(smoothstep(2.0) == 1.0);
  CHECK(smoothstep(0.5) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(smoothstep(0.3) < smoothstep(0.31));

  CHECK(bump_window(0.0, 0.0, 1.0, 2.0) == 1.0);
  CHECK(bump_window(0.99, 0.0, 1.0, 2.0) == 1.0);
  CHECK(bump_window(2.0, 0.0, 1.0, 2.0) == 0.0);
  CHECK(bump_window(-2.5, 0.0, 1.0, 2.0) == 0.0);
  const double mid = bump_window(1.5, 0.0, 1.0, 2.0);
  CHECK(mid > 0.0);
  CHECK(mid < 1.0);
  CHECK(bump_window(1.5, 0.0, 1.0, 2.0) ==
        doctest::Approx(bump_window(-1.5, 0.0, 1.0, 2.0)).epsilon(1e-15));
  // translation covariance
  CHECK(bump_window(3.2, 2.0, 1.0, 2.0) ==
        doctest::Approx(bump_window(1.2, 0.0, 1.0, 2.0)).epsilon(1e-15));
}

TEST_CASE("deterministic double formatting") {
  CHECK(format_double(0.1) == "0.10000000000000001");
  CHECK(format_double(1.0) == "1");
  CHECK(format_double(-2.5) == "-2.5");
  // round trip
  CHECK(std::stod(format_double(kPi)) == kPi);
}

TEST_CASE("fnv1a64 is deterministic and input sensitive") {
  const char a[] = "abc";
  const char b[] = "abd";
  CHECK(fnv1a64(a, 3) == fnv1a64(a, 3));
  CHECK(fnv1a64(a, 3) != fnv1a64(b, 3));
  CHECK(fnv1a64(a, 3, 7) != fnv1a64(a, 3, 8));
}
