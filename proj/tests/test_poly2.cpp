#include "doctest.h"

#include <array>
#include <cmath>
#include <random>

#include "ncpose/poly2.hpp"

using namespace ncpose;
using P10 = Poly2<double, 10>;

namespace {

// Reference evaluation: plain sum of coeff * y^i * z^j.
double naive_eval(const P10& p, double y, double z) {
  double v = 0.0;
  for (int i = 0; i <= 10; ++i)
    for (int j = 0; i + j <= 10; ++j)
      v += p.coeff(i, j) * std::pow(y, i) * std::pow(z, j);
  return v;
}

P10 random_poly(std::mt19937_64& rng, int max_deg, double density = 1.0) {
  std::uniform_real_distribution<double> uc(-2.0, 2.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  P10 p;
  for (int i = 0; i <= max_deg; ++i)
    for (int j = 0; i + j <= max_deg; ++j)
      if (u01(rng) <= density) p.coeff(i, j) = uc(rng);
  return p;
}

}  // namespace

TEST_CASE("triangular index covers each (i, j) pair exactly once") {
  CHECK(P10::kNumCoeffs == 66);
  std::array<bool, P10::kNumCoeffs> seen{};
  for (int i = 0; i <= 10; ++i)
    for (int j = 0; i + j <= 10; ++j) {
      const int k = P10::index(i, j);
      REQUIRE(k >= 0);
      REQUIRE(k < P10::kNumCoeffs);
      CHECK(!seen[static_cast<std::size_t>(k)]);
      seen[static_cast<std::size_t>(k)] = true;
    }
}

TEST_CASE("constant and variable constructors evaluate correctly") {
  CHECK(P10::constant(3.5).eval(11.0, -7.0) == 3.5);
  CHECK(P10::var_y().eval(11.0, -7.0) == 11.0);
  CHECK(P10::var_z().eval(11.0, -7.0) == -7.0);
}

TEST_CASE("Horner evaluation matches the naive sum") {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> ux(-1.5, 1.5);
  for (int rep = 0; rep < 50; ++rep) {
    const P10 p = random_poly(rng, 10, 0.5);
    const double y = ux(rng), z = ux(rng);
    const double ref = naive_eval(p, y, z);
    CHECK(p.eval(y, z) == doctest::Approx(ref).epsilon(1e-12));
  }
}

TEST_CASE("poly_mul matches the naive convolution") {
  std::mt19937_64 rng(43);
  std::uniform_int_distribution<int> udeg(0, 5);
  for (int rep = 0; rep < 50; ++rep) {
    const int da = udeg(rng), db = udeg(rng);
    const P10 a = random_poly(rng, da, 0.7);
    const P10 b = random_poly(rng, db, 0.7);
    const P10 prod = poly_mul(a, b);
    P10 ref;
    for (int i = 0; i <= da; ++i)
      for (int j = 0; i + j <= da; ++j)
        for (int k = 0; k <= db; ++k)
          for (int l = 0; k + l <= db; ++l)
            ref.coeff(i + k, j + l) += a.coeff(i, j) * b.coeff(k, l);
    for (int i = 0; i <= 10; ++i)
      for (int j = 0; i + j <= 10; ++j)
        CHECK(prod.coeff(i, j) ==
              doctest::Approx(ref.coeff(i, j)).epsilon(1e-12));
  }
}

TEST_CASE("poly_mul throws on structural degree overflow") {
  P10 a, b;
  a.coeff(6, 0) = 1.0;
  b.coeff(5, 0) = 1.0;
  CHECK_THROWS_AS(poly_mul(a, b), std::logic_error);

  // Zero times anything is fine regardless of the other factor's degree.
  P10 zero;
  CHECK(poly_mul(zero, b).max_abs() == 0.0);
}

TEST_CASE("total_degree reports the largest contributing band") {
  P10 p;
  CHECK(p.total_degree() == -1);
  p.coeff(0, 0) = 2.0;
  CHECK(p.total_degree() == 0);
  p.coeff(3, 4) = 1e-3;
  CHECK(p.total_degree() == 7);
  // Relative tolerance ignores the small band.
  CHECK(p.total_degree(1e-2) == 0);
  p.coeff(10, 0) = 5.0;
  CHECK(p.total_degree(1e-2) == 10);
}

TEST_CASE("arithmetic operators behave linearly") {
  std::mt19937_64 rng(47);
  const P10 a = random_poly(rng, 5, 0.6);
  const P10 b = random_poly(rng, 5, 0.6);
  const double y = 0.3, z = -1.1;
  CHECK((a + b).eval(y, z) ==
        doctest::Approx(a.eval(y, z) + b.eval(y, z)).epsilon(1e-12));
  CHECK((a - b).eval(y, z) ==
        doctest::Approx(a.eval(y, z) - b.eval(y, z)).epsilon(1e-12));
  CHECK((2.5 * a).eval(y, z) ==
        doctest::Approx(2.5 * a.eval(y, z)).epsilon(1e-12));
  CHECK((-a).eval(y, z) == doctest::Approx(-a.eval(y, z)).epsilon(1e-12));
  CHECK(poly_mul(a, b).eval(y, z) ==
        doctest::Approx(a.eval(y, z) * b.eval(y, z)).epsilon(1e-10));
}

TEST_CASE("max_abs scans every stored coefficient") {
  P10 p;
  p.coeff(2, 3) = -4.0;
  p.coeff(9, 1) = 3.0;
  CHECK(p.max_abs() == 4.0);
}
