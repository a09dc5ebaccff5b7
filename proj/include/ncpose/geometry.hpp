#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "ncpose/types.hpp"

namespace ncpose {

// Quadric value Omega(p) = x^2 + y^2 + A z^2 + B z - C; zero on the surface.
template <typename S>
S mirror_eval(const QuadricMirror<S>& mirror, const Vec3<S>& p) {
  return p.x() * p.x() + p.y() * p.y() + mirror.A * p.z() * p.z() +
         mirror.B * p.z() - mirror.C;
}

// Surface normal direction n = (x, y, A z + B/2), i.e. grad(Omega)/2.
// Unnormalized. Throws on the degenerate zero-gradient point.
template <typename S>
Vec3<S> mirror_normal(const QuadricMirror<S>& mirror, const Vec3<S>& p) {
  Vec3<S> n(p.x(), p.y(), mirror.A * p.z() + mirror.B / S(2));
  if (n.squaredNorm() == S(0))
    throw std::domain_error("mirror_normal: zero gradient");
  return n;
}

// Real roots of the axis quadratic A z^2 + B z - C = 0, ascending.
// Linear case (A == 0) returns the single root when B != 0.
template <typename S>
std::vector<S> axis_intersections(const QuadricMirror<S>& mirror) {
  std::vector<S> roots;
  if (mirror.A == S(0)) {
    if (mirror.B != S(0)) roots.push_back(mirror.C / mirror.B);
    return roots;
  }
  const S disc = mirror.B * mirror.B + S(4) * mirror.A * mirror.C;
  if (disc < S(0)) return roots;
  const S sq = std::sqrt(disc);
  roots.push_back((-mirror.B - sq) / (S(2) * mirror.A));
  roots.push_back((-mirror.B + sq) / (S(2) * mirror.A));
  std::sort(roots.begin(), roots.end());
  if (roots.size() == 2 && roots[0] == roots[1]) roots.pop_back();
  return roots;
}

// All non-negative ray parameters t with Omega(origin + t*dir) = 0,
// ascending; rays travel forward only. Double roots are reported once.
// Degenerate quadratics (dir in the quadric's null directions) reduce to a
// linear equation.
template <typename S>
std::vector<S> ray_quadric_intersect(const Vec3<S>& origin,
                                     const Vec3<S>& dir,
                                     const QuadricMirror<S>& mirror) {
  // Omega(o + t d) = a t^2 + b t + c
  const S a = dir.x() * dir.x() + dir.y() * dir.y() +
              mirror.A * dir.z() * dir.z();
  const S b = S(2) * (origin.x() * dir.x() + origin.y() * dir.y() +
                      mirror.A * origin.z() * dir.z()) +
              mirror.B * dir.z();
  const S c = mirror_eval(mirror, origin);

  std::vector<S> out;
  const S scale = std::max({std::abs(a), std::abs(b), std::abs(c), S(1)});
  if (std::abs(a) <= S(1e-14) * scale) {
    if (std::abs(b) > S(1e-14) * scale) {
      const S t = -c / b;
      if (t >= S(0)) out.push_back(t);
    }
    return out;
  }
  const S disc = b * b - S(4) * a * c;
  if (disc < S(0)) return out;
  const S sq = std::sqrt(disc);
  // Numerically stable quadratic roots.
  const S q = -(b + (b >= S(0) ? sq : -sq)) / S(2);
  const S t1 = q / a;
  const S t2 = (q != S(0)) ? c / q : t1;
  S lo = std::min(t1, t2), hi = std::max(t1, t2);
  if (lo >= S(0)) out.push_back(lo);
  if (hi >= S(0) && hi != lo) out.push_back(hi);
  return out;
}

template <typename S>
RigidTransform<S> planar_pose_to_rt(const PlanarPose<S>& pose) {
  const S c = std::cos(pose.theta), s = std::sin(pose.theta);
  RigidTransform<S> rt;
  rt.R << c, -s, S(0), s, c, S(0), S(0), S(0), S(1);
  rt.t = Vec3<S>(pose.t_x, pose.t_y, pose.z_offset);
  return rt;
}

// World -> camera point map p' = R p + t.
template <typename S>
Vec3<S> transform_point(const Vec3<S>& p, const PlanarPose<S>& pose) {
  return planar_pose_to_rt(pose).apply(p);
}

// World -> camera line map (direction re-normalized by the constructor).
template <typename S>
Line3D<S> transform_line(const Line3D<S>& line, const PlanarPose<S>& pose) {
  const RigidTransform<S> rt = planar_pose_to_rt(pose);
  return Line3D<S>(rt.apply(line.q), rt.R * line.d);
}

// Camera -> world point map, the inverse of transform_point.
template <typename S>
Vec3<S> camera_to_world(const Vec3<S>& p, const PlanarPose<S>& pose) {
  return planar_pose_to_rt(pose).apply_inverse(p);
}

}  // namespace ncpose
