#include "doctest.h"

#include <cmath>
#include <random>

#include "ncpose/geometry.hpp"
#include "ncpose/presets.hpp"
#include "ncpose/reflection.hpp"

using namespace ncpose;

TEST_CASE("mirror_eval vanishes at known axis points") {
  const auto sphere = preset_mirror<double>("spheric");
  CHECK(mirror_eval(sphere, Vec3<double>(0, 0, 30)) == doctest::Approx(0.0));

  const auto para = preset_mirror<double>("parabolic");
  CHECK(mirror_eval(para, Vec3<double>(0, 0, 53.2 / 20.4)) ==
        doctest::Approx(0.0).epsilon(1e-12));

  const auto hyp = preset_mirror<double>("hyperbolic");
  // positive root of -1.2 z^2 + 3.4 z + 33.2 = 0
  const double z0 = (3.4 + std::sqrt(3.4 * 3.4 + 4.0 * 1.2 * 33.2)) /
                    (2.0 * 1.2);
  CHECK(z0 == doctest::Approx(6.8640).epsilon(1e-4));
  CHECK(std::abs(mirror_eval(hyp, Vec3<double>(0, 0, z0))) < 1e-12);
}

TEST_CASE("mirror_eval vanishes at every axis intersection per preset") {
  for (const auto& name : preset_names()) {
    const auto mirror = preset_mirror<double>(name);
    const auto roots = axis_intersections(mirror);
    CHECK(!roots.empty());
    for (const double z : roots)
      CHECK(std::abs(mirror_eval(mirror, Vec3<double>(0, 0, z))) < 1e-9);
  }
}

TEST_CASE("mirror_normal closed forms") {
  const auto sphere = preset_mirror<double>("spheric");
  const Vec3<double> n1 = mirror_normal(sphere, Vec3<double>(0, 0, 30));
  CHECK(n1.isApprox(Vec3<double>(0, 0, 30)));

  QuadricMirror<double> unit_sphere{1.0, 0.0, 25.0, Vec3<double>::Zero()};
  CHECK(mirror_normal(unit_sphere, Vec3<double>(3, 4, 0))
            .isApprox(Vec3<double>(3, 4, 0)));

  const auto para = preset_mirror<double>("parabolic");
  const Vec3<double> n3 = mirror_normal(para, Vec3<double>(1.0, -2.0, 2.0));
  CHECK(n3.x() == doctest::Approx(1.0));
  CHECK(n3.y() == doctest::Approx(-2.0));
  CHECK(n3.z() == doctest::Approx(10.2));  // B/2, independent of the point

  QuadricMirror<double> degenerate{1.0, 0.0, 0.0, Vec3<double>::Zero()};
  CHECK_THROWS_AS(mirror_normal(degenerate, Vec3<double>(0, 0, 0)),
                  std::domain_error);
}

namespace {

// Random on-surface point: height from the cap window, azimuth uniform.
Vec3<double> random_surface_point(const QuadricMirror<double>& mirror,
                                  std::mt19937_64& rng) {
  const auto win = mirror_cap_window(mirror);
  std::uniform_real_distribution<double> uz(win.z_lo, win.z_hi);
  std::uniform_real_distribution<double> uphi(0.0, 2.0 * EIGEN_PI);
  for (;;) {
    const double z = uz(rng);
    const double r2 = mirror.C - mirror.A * z * z - mirror.B * z;
    if (!(r2 > 1e-6)) continue;
    const double r = std::sqrt(r2), phi = uphi(rng);
    return Vec3<double>(r * std::cos(phi), r * std::sin(phi), z);
  }
}

}  // namespace

TEST_CASE("mirror_normal matches finite differences of mirror_eval") {
  std::mt19937_64 rng(7);
  for (const auto& name : preset_names()) {
    const auto mirror = preset_mirror<double>(name);
    for (int i = 0; i < 100; ++i) {
      const Vec3<double> p = random_surface_point(mirror, rng);
      const Vec3<double> n = mirror_normal(mirror, p);
      Vec3<double> fd;
      const double h = 1e-6 * std::max(1.0, p.norm());
      for (int c = 0; c < 3; ++c) {
        Vec3<double> pp = p, pm = p;
        pp[c] += h;
        pm[c] -= h;
        fd[c] = (mirror_eval(mirror, pp) - mirror_eval(mirror, pm)) /
                (2.0 * h);
      }
      // The normal is grad(Omega)/2.
      CHECK((fd / 2.0 - n).norm() <= 1e-6 * std::max(1.0, n.norm()));
    }
  }
}

TEST_CASE("ray_quadric_intersect on the sphere preset") {
  const auto sphere = preset_mirror<double>("spheric");

  const auto up = ray_quadric_intersect(Vec3<double>(0, 0, 0),
                                        Vec3<double>(0, 0, 1), sphere);
  REQUIRE(up.size() == 1);
  CHECK(up[0] == doctest::Approx(30.0));

  const auto miss = ray_quadric_intersect(Vec3<double>(0, 0, 100),
                                          Vec3<double>(0, 0, 1), sphere);
  CHECK(miss.empty());

  const auto tangent = ray_quadric_intersect(Vec3<double>(30, 0, -50),
                                             Vec3<double>(0, 0, 1), sphere);
  REQUIRE(tangent.size() == 1);  // double root reported once
  CHECK(tangent[0] == doctest::Approx(50.0));
}

TEST_CASE("ray_quadric_intersect roots lie on the surface") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> ub(-80.0, 80.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (const auto& name : preset_names()) {
    const auto mirror = preset_mirror<double>(name);
    const double tol = 1e-8 * std::max(1.0, std::abs(mirror.C));
    int found = 0;
    for (int i = 0; i < 200; ++i) {
      const Vec3<double> origin(ub(rng), ub(rng), ub(rng));
      const Vec3<double> dir =
          Vec3<double>(gauss(rng), gauss(rng), gauss(rng)).normalized();
      for (const double t : ray_quadric_intersect(origin, dir, mirror)) {
        CHECK(t >= 0.0);
        CHECK(std::abs(mirror_eval(mirror, Vec3<double>(origin + t * dir))) < tol);
        ++found;
      }
    }
    CHECK(found > 0);
  }
}

TEST_CASE("ray_quadric_intersect degenerate quadratic reduces to linear") {
  // Axis-parallel ray on the parabolic preset: a == 0, single root.
  const auto para = preset_mirror<double>("parabolic");
  const auto roots = ray_quadric_intersect(Vec3<double>(1, 1, -10),
                                           Vec3<double>(0, 0, 1), para);
  REQUIRE(roots.size() == 1);
  const Vec3<double> hit = Vec3<double>(1, 1, -10) + roots[0] * Vec3<double>(0, 0, 1);
  CHECK(std::abs(mirror_eval(para, hit)) < 1e-8);
}

TEST_CASE("planar_pose_to_rt builds the expected rotation") {
  PlanarPose<double> id;
  id.z_offset = 3.0;
  const auto rt0 = planar_pose_to_rt(id);
  CHECK(rt0.R.isIdentity(1e-15));
  CHECK(rt0.t.isApprox(Vec3<double>(0, 0, 3)));

  PlanarPose<double> quarter{EIGEN_PI / 2.0, 0, 0, 0};
  const auto rt1 = planar_pose_to_rt(quarter);
  Mat3<double> expected;
  expected << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  CHECK(rt1.R.isApprox(expected, 1e-12));

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> uang(-EIGEN_PI, EIGEN_PI);
  for (int i = 0; i < 20; ++i) {
    PlanarPose<double> p{uang(rng), uang(rng), uang(rng), uang(rng)};
    const auto rt = planar_pose_to_rt(p);
    CHECK(rt.is_valid());
    CHECK(rt.R.determinant() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("transform_line examples") {
  const Line3D<double> line(Vec3<double>(1, 0, 0), Vec3<double>(1, 0, 0));

  const auto same = transform_line(line, PlanarPose<double>{});
  CHECK(same.q.isApprox(line.q));
  CHECK(same.d.isApprox(line.d));

  const auto flipped =
      transform_line(line, PlanarPose<double>{EIGEN_PI, 0, 0, 0});
  CHECK(flipped.d.isApprox(Vec3<double>(-1, 0, 0), 1e-12));

  const auto turned =
      transform_line(line, PlanarPose<double>{EIGEN_PI / 2.0, 0, 0, 0});
  CHECK(turned.q.isApprox(Vec3<double>(0, 1, 0), 1e-12));
}

TEST_CASE("camera_to_world inverts transform_point") {
  CHECK(camera_to_world(Vec3<double>(1, 2, 3), PlanarPose<double>{})
            .isApprox(Vec3<double>(1, 2, 3)));

  const PlanarPose<double> pose{EIGEN_PI / 2.0, 1, 0, 0};
  CHECK(camera_to_world(Vec3<double>(1, 0, 0), pose)
            .isApprox(Vec3<double>(0, 0, 0), 1e-12));

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  std::uniform_real_distribution<double> uang(-EIGEN_PI, EIGEN_PI);
  for (int i = 0; i < 50; ++i) {
    const PlanarPose<double> p{uang(rng), u(rng), u(rng), u(rng)};
    const Vec3<double> x(u(rng), u(rng), u(rng));
    CHECK((camera_to_world(transform_point(x, p), p) - x).norm() < 1e-12);
  }
}

TEST_CASE("transform_line and camera_to_world agree pointwise") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-40.0, 40.0);
  std::uniform_real_distribution<double> uang(-EIGEN_PI, EIGEN_PI);
  for (int i = 0; i < 20; ++i) {
    const PlanarPose<double> pose{uang(rng), u(rng), u(rng), u(rng)};
    const Line3D<double> line(Vec3<double>(u(rng), u(rng), u(rng)),
                              Vec3<double>(u(rng), u(rng), u(rng) + 1.0));
    const Line3D<double> moved = transform_line(line, pose);
    for (const double lam : {-20.0, -3.0, 0.0, 7.5, 31.0}) {
      // Same lambda on both sides: the constructor renormalizes d, and a
      // rigid map preserves its length, so parameterizations correspond.
      const Vec3<double> back = camera_to_world(moved.point_at(lam), pose);
      CHECK((back - line.point_at(lam)).norm() < 1e-10);
    }
  }
}

TEST_CASE("wrap_angle maps into (-pi, pi]") {
  CHECK(wrap_angle(0.0) == 0.0);
  CHECK(wrap_angle(EIGEN_PI) == doctest::Approx(EIGEN_PI));
  CHECK(wrap_angle(-EIGEN_PI) == doctest::Approx(EIGEN_PI));
  CHECK(wrap_angle(3.0 * EIGEN_PI / 2.0) ==
        doctest::Approx(-EIGEN_PI / 2.0));
  CHECK(wrap_angle(10.0 * EIGEN_PI + 0.25) == doctest::Approx(0.25));
}

TEST_CASE("Line3D rejects zero directions and normalizes") {
  CHECK_THROWS_AS(Line3D<double>(Vec3<double>(1, 2, 3), Vec3<double>::Zero()),
                  DegenerateLine);
  const Line3D<double> line(Vec3<double>(0, 0, 0), Vec3<double>(0, 3, 4));
  CHECK(line.d.norm() == doctest::Approx(1.0));
  CHECK(line.d.isApprox(Vec3<double>(0, 0.6, 0.8)));
}
