#include "doctest.h"

#include <cmath>
#include <random>

#include "ncpose/line_curve.hpp"
#include "ncpose/presets.hpp"

using namespace ncpose;

namespace {

// Forward-projected reflection points of line samples: the independent
// oracle the curve polynomial must agree with.
std::vector<Vec3<double>> oracle_points(const Line3D<double>& line,
                                        const QuadricMirror<double>& mirror,
                                        int n, double lo, double hi) {
  std::vector<Vec3<double>> pts;
  for (int k = 0; k < n; ++k) {
    const double lam = lo + (hi - lo) * k / (n - 1);
    const auto fp = forward_project(line.point_at(lam), mirror);
    if (!fp.solutions.empty()) pts.push_back(fp.solutions.front().m);
  }
  return pts;
}

Line3D<double> generic_line(const std::string& preset) {
  if (preset == "parabolic")
    return Line3D<double>(Vec3<double>(30, -20, -10),
                          Vec3<double>(-1.0, 1.0, 0.2));
  if (preset == "hyperbolic")
    return Line3D<double>(Vec3<double>(25, -15, 30),
                          Vec3<double>(-0.5, 1.0, 0.3));
  return Line3D<double>(Vec3<double>(40, 0, 0), Vec3<double>(0, 1, 0));
}

}  // namespace

TEST_CASE("curve agrees with forward-projected reflections on the sphere") {
  const auto mirror = preset_mirror<double>("spheric");
  const Line3D<double> line(Vec3<double>(40, 0, 0), Vec3<double>(0, 1, 0));
  const auto c = curve_coefficients(line, mirror);

  const auto pts = oracle_points(line, mirror, 10, -45.0, 45.0);
  REQUIRE(pts.size() == 10);
  for (const auto& m : pts) {
    CHECK(std::abs(gamma_eval(c, m.y(), m.z())) < 1e-6);
    const auto x = x_from_yz(c, m.y(), m.z());
    REQUIRE(x.has_value());
    CHECK(std::abs(*x - m.x()) < 1e-6);
    // The recovered x lands back on the surface.
    CHECK(std::abs(mirror_eval(mirror, Vec3<double>(*x, m.y(), m.z()))) <
          1e-3);
    // A centimeter off the curve in some axis direction the polynomial is
    // distinctly nonzero (a single direction can graze a tangency).
    double off = 0.0;
    for (const double dy : {-1.0, 0.0, 1.0})
      for (const double dz : {-1.0, 0.0, 1.0}) {
        if (dy == 0.0 && dz == 0.0) continue;
        off = std::max(off, std::abs(gamma_eval(c, m.y() + dy, m.z() + dz)));
      }
    CHECK(off > 1e-6);
    CHECK(off > 1e3 * std::abs(gamma_eval(c, m.y(), m.z())));
  }
}

TEST_CASE("curve agrees with forward projection on every preset") {
  for (const auto& name : preset_names()) {
    const auto mirror = preset_mirror<double>(name);
    const Line3D<double> line = generic_line(name);
    const auto c = curve_coefficients(line, mirror);
    const auto pts = oracle_points(line, mirror, 12, -40.0, 40.0);
    REQUIRE(pts.size() >= 6);
    for (const auto& m : pts) {
      CHECK(std::abs(gamma_eval(c, m.y(), m.z())) < 1e-6);
      CHECK(curve_point_residual(c, mirror, m) < 1e-6);
    }
  }
}

TEST_CASE("curve degree is 10 generically, 6 on the sphere") {
  for (const auto& name : preset_names()) {
    const auto mirror = preset_mirror<double>(name);
    const auto c = curve_coefficients(generic_line(name), mirror);
    const int deg = c.gamma.total_degree(1e-9);
    CHECK(deg <= 10);
    // B = 0 and A = 1 annihilate the leading bands of the expansion.
    if (name == "spheric")
      CHECK(deg == 6);
    else
      CHECK(deg == 10);
  }
}

TEST_CASE("normalization invariants") {
  for (const auto& name : preset_names()) {
    const auto mirror = preset_mirror<double>(name);
    const auto c = curve_coefficients(generic_line(name), mirror);
    CHECK(c.gamma.max_abs() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(c.scale > 0.0);
    CHECK(c.x_den.max_abs() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(c.x_scale > 0.0);
    CHECK(c.coord_scale == doctest::Approx(characteristic_scale(mirror)));
  }
}

TEST_CASE("line in the x = 0 plane yields an identically-zero x numerator") {
  const auto mirror = preset_mirror<double>("spheric");
  const Line3D<double> line(Vec3<double>(0, 40, 10), Vec3<double>(0, 3, 4));
  const auto c = curve_coefficients(line, mirror);
  CHECK(c.x_num.max_abs() == 0.0);
  for (const double y : {-20.0, 5.0, 17.0})
    for (const double z : {-10.0, 3.0, 22.0}) {
      const auto x = x_from_yz(c, y, z);
      if (x) CHECK(*x == 0.0);
    }
}

TEST_CASE("mirroring the line in x keeps gamma and flips x") {
  const auto mirror = preset_mirror<double>("hyperbolic");
  const Line3D<double> line(Vec3<double>(25, -15, 30),
                            Vec3<double>(-0.5, 1.0, 0.3));
  const Line3D<double> flipped(Vec3<double>(-25, -15, 30),
                               Vec3<double>(0.5, 1.0, 0.3));
  const auto ca = curve_coefficients(line, mirror);
  const auto cb = curve_coefficients(flipped, mirror);
  for (int i = 0; i <= 10; ++i)
    for (int j = 0; i + j <= 10; ++j)
      CHECK(ca.gamma.coeff(i, j) ==
            doctest::Approx(cb.gamma.coeff(i, j)).epsilon(1e-9));
  const auto pts = oracle_points(line, mirror, 8, -30.0, 30.0);
  REQUIRE(!pts.empty());
  for (const auto& m : pts) {
    const auto xa = x_from_yz(ca, m.y(), m.z());
    const auto xb = x_from_yz(cb, m.y(), m.z());
    REQUIRE(xa.has_value());
    REQUIRE(xb.has_value());
    CHECK(*xa == doctest::Approx(-*xb).epsilon(1e-9));
  }
}

TEST_CASE("curve_point_residual separates members from impostors") {
  const auto mirror = preset_mirror<double>("spheric");
  const Line3D<double> line(Vec3<double>(40, 0, 0), Vec3<double>(0, 1, 0));
  const auto c = curve_coefficients(line, mirror);
  const auto pts = oracle_points(line, mirror, 8, -40.0, 40.0);
  REQUIRE(!pts.empty());
  for (const auto& m : pts) {
    CHECK(curve_point_residual(c, mirror, m) < 1e-6);
    // The x-mirrored twin shares (y, z) but not x.
    if (std::abs(m.x()) > 0.5) {
      const Vec3<double> twin(-m.x(), m.y(), m.z());
      CHECK(curve_point_residual(c, mirror, twin) > 1e-3);
    }
  }
  // Points of an unrelated line's curve miss this one.
  const Line3D<double> other(Vec3<double>(-35, 20, 10),
                             Vec3<double>(1, 0.4, -0.2));
  for (const auto& m : oracle_points(other, mirror, 8, -40.0, 40.0))
    CHECK(curve_point_residual(c, mirror, m) > 1e-3);
}

TEST_CASE("sample_curve returns on-curve polyline points") {
  const auto mirror = preset_mirror<double>("spheric");
  const Line3D<double> line(Vec3<double>(40, 0, 0), Vec3<double>(0, 1, 0));
  const auto sc = sample_curve(line, mirror, 25);
  CHECK(sc.skipped == 0);
  REQUIRE(sc.points.size() == 25);
  CHECK(sc.lambdas.size() == sc.points.size());
  CHECK(sc.residuals.size() == sc.points.size());
  // The rational x breaks down at isolated poles, reported as the sentinel;
  // every other sample must sit on the curve.
  int poles = 0;
  for (const double r : sc.residuals) {
    if (r == kSentinelResidual)
      ++poles;
    else
      CHECK(r < 1e-6);
  }
  CHECK(poles <= 2);

  const auto ends = sample_curve(line, mirror, 2, -12.0, 34.0);
  REQUIRE(ends.lambdas.size() == 2);
  CHECK(ends.lambdas.front() == doctest::Approx(-12.0));
  CHECK(ends.lambdas.back() == doctest::Approx(34.0));

  CHECK_THROWS_AS(sample_curve(line, mirror, 1), std::invalid_argument);
}

TEST_CASE("lines through the cop are rejected") {
  const auto mirror = preset_mirror<double>("parabolic");
  const Vec3<double> d(0.2, 1.0, -0.4);
  CHECK_THROWS_AS(
      curve_coefficients(Line3D<double>(mirror.cop, d), mirror),
      DegenerateLine);
  const Line3D<double> shifted(mirror.cop - 10.0 * d.normalized(), d);
  CHECK_THROWS_AS(curve_coefficients(shifted, mirror), DegenerateLine);
}
