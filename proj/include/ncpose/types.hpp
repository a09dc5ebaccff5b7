#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <stdexcept>
#include <string>

namespace ncpose {

template <typename S> using Vec2 = Eigen::Matrix<S, 2, 1>;
template <typename S> using Vec3 = Eigen::Matrix<S, 3, 1>;
template <typename S> using Mat3 = Eigen::Matrix<S, 3, 3>;

// Error taxonomy; thrown by the operations documented in each header.
struct DegenerateLine : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IllPosed : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct GenerationExhausted : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NoIntersection : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct BehindCamera : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Wraps an angle to (-pi, pi].
template <typename S> S wrap_angle(S theta) {
  const S two_pi = S(2) * S(EIGEN_PI);
  S t = std::fmod(theta, two_pi);
  if (t <= -S(EIGEN_PI)) t += two_pi;
  if (t > S(EIGEN_PI)) t -= two_pi;
  return t;
}

// Rotationally symmetric quadric mirror x^2 + y^2 + A z^2 + B z - C = 0,
// z-axis symmetric, viewed by a perspective camera centered at cop.
// Units: A dimensionless, B in cm, C in cm^2, cop in cm, cop.x == 0.
template <typename S> struct QuadricMirror {
  S A{0};
  S B{0};
  S C{0};
  Vec3<S> cop{Vec3<S>::Zero()};
};

// 3D line as point + unit direction. The constructor normalizes d and
// rejects (near-)zero directions.
template <typename S> struct Line3D {
  Vec3<S> q{Vec3<S>::Zero()};
  Vec3<S> d{Vec3<S>::UnitX()};

  Line3D() = default;
  Line3D(const Vec3<S>& q_in, const Vec3<S>& d_in) : q(q_in), d(d_in) {
    const S n2 = d.squaredNorm();
    if (!(n2 > S(1e-100))) throw DegenerateLine("Line3D: zero direction");
    d /= std::sqrt(n2);
  }

  Vec3<S> point_at(S lambda) const { return q + lambda * d; }
};

// Planar pose: rotation theta about z plus translation (t_x, t_y, z_offset),
// where z_offset is the known constant height of the motion plane.
template <typename S> struct PlanarPose {
  S theta{0};
  S t_x{0};
  S t_y{0};
  S z_offset{0};

  PlanarPose canonicalized() const {
    return {wrap_angle(theta), t_x, t_y, z_offset};
  }
};

template <typename S> struct RigidTransform {
  Mat3<S> R{Mat3<S>::Identity()};
  Vec3<S> t{Vec3<S>::Zero()};

  bool is_valid(S tol = S(1e-10)) const {
    const Mat3<S> e = R.transpose() * R - Mat3<S>::Identity();
    return e.cwiseAbs().maxCoeff() <= tol &&
           std::abs(R.determinant() - S(1)) <= tol;
  }

  Vec3<S> apply(const Vec3<S>& p) const { return R * p + t; }
  Vec3<S> apply_inverse(const Vec3<S>& p) const {
    return R.transpose() * (p - t);
  }
};

// Perspective camera placed at the mirror's cop, looking at the mirror cap.
// pose_in_mirror_frame maps mirror-frame points into the camera frame:
// p_cam = R * p_mirror + t. Plumbing values sized so the mirror cap fills
// the sensor at a high-resolution imaging scale; pixel noise is lifted back
// through the same camera, so the focal length fixes how many cm of mirror
// surface one pixel of noise spans.
template <typename S> struct PinholeCamera {
  S focal{S(3200)};
  Vec2<S> principal_point{Vec2<S>(S(2560), S(2048))};
  Vec2<S> image_size{Vec2<S>(S(5120), S(4096))};
  RigidTransform<S> pose_in_mirror_frame{};

  Vec3<S> center() const {
    return -(pose_in_mirror_frame.R.transpose() * pose_in_mirror_frame.t);
  }
};

}  // namespace ncpose
