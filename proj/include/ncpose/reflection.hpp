#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "ncpose/geometry.hpp"
#include "ncpose/types.hpp"

namespace ncpose {

// Scale-free Snell reflection of incident direction v_i at unnormalized
// surface normal n: 4(n'n) v_i - 8 n (v_i' n).
template <typename S>
Vec3<S> reflect_direction(const Vec3<S>& v_i, const Vec3<S>& n) {
  const S nn = n.squaredNorm();
  if (nn == S(0))
    throw std::invalid_argument("reflect_direction: zero normal");
  return S(4) * nn * v_i - S(8) * n.dot(v_i) * n;
}

// One mirror reflection: the ray cop -> m reflects at m into direction v_r
// and passes through the queried point. residual is the normalized
// cross-product defect |v_r x (p - m)| / (|v_r| |p - m|) at convergence.
template <typename S> struct ReflectionSolution {
  Vec3<S> m{Vec3<S>::Zero()};
  Vec3<S> v_i{Vec3<S>::Zero()};
  Vec3<S> v_r{Vec3<S>::Zero()};
  S residual{0};
};

template <typename S> struct ForwardProjection {
  std::vector<ReflectionSolution<S>> solutions;  // polished below 1e-9
  // Candidates that refused to polish below 1e-6 (reported, never silently
  // dropped; empty in practice).
  std::vector<ReflectionSolution<S>> stalled;
};

// +1 when the cop lies on the positive side of Omega, -1 otherwise. The
// surface is visible from the cop where the normal points toward the cop's
// side, so the facing test below is sign-corrected; the hyperbolic preset
// places the cop on the negative side.
template <typename S> S facing_sign(const QuadricMirror<S>& mirror) {
  return mirror_eval(mirror, mirror.cop) >= S(0) ? S(1) : S(-1);
}

// True when the surface element at m is oriented toward the cop.
template <typename S>
bool faces_cop(const QuadricMirror<S>& mirror, const Vec3<S>& m) {
  const Vec3<S> n(m.x(), m.y(), mirror.A * m.z() + mirror.B / S(2));
  return facing_sign(mirror) * n.dot(mirror.cop - m) > S(0);
}

// Characteristic length of the rig, used for scaling decisions.
template <typename S> S characteristic_scale(const QuadricMirror<S>& mirror) {
  return std::max({S(1), std::sqrt(std::abs(mirror.C)),
                   std::abs(mirror.B) / S(2), std::abs(mirror.cop.y()),
                   std::abs(mirror.cop.z())});
}

// z-range of the mirror cap used for seeding: the full surface for closed
// quadrics (A > 0), a span clustered at the vertex for open ones. For
// two-sheet quadrics (A < 0) only the sheet nearer the cop is seeded.
template <typename S> struct CapWindow {
  S z_lo, z_hi;
  bool cluster_at_lo;  // seed density increases toward z_lo
};

template <typename S>
CapWindow<S> mirror_cap_window(const QuadricMirror<S>& mirror) {
  const std::vector<S> roots = axis_intersections(mirror);
  if (mirror.A > S(0)) {
    const S h = roots.back() - roots.front();
    return {roots.front() + S(1e-3) * h, roots.back() - S(1e-3) * h, false};
  }
  if (mirror.A == S(0)) {
    const S z0 = roots.front();
    const S span =
        S(4) * std::max((mirror.cop - Vec3<S>(S(0), S(0), z0)).norm(), S(1));
    if (mirror.B > S(0)) return {z0 - span, z0, false};  // cap opens downward
    return {z0, z0 + span, true};                        // cap opens upward
  }
  // A < 0: two sheets at z <= roots[0] and z >= roots[1].
  const S lo = roots.front(), hi = roots.back();
  const bool upper =
      std::abs(mirror.cop.z() - hi) <= std::abs(mirror.cop.z() - lo);
  if (upper) {
    const S span =
        S(4) * std::max((mirror.cop - Vec3<S>(S(0), S(0), hi)).norm(), S(1));
    return {hi, hi + span, true};
  }
  const S span =
      S(4) * std::max((mirror.cop - Vec3<S>(S(0), S(0), lo)).norm(), S(1));
  return {lo - span, lo, false};
}

namespace detail {

// Residual state of the reflection equations at a trial mirror point.
template <typename S> struct ReflState {
  Vec3<S> n, v_i, v_r, cr;
  S a, b, omega, merit, rn;
  bool ok;
};

template <typename S>
ReflState<S> refl_state(const QuadricMirror<S>& mirror, const Vec3<S>& o,
                        const Vec3<S>& p, const Vec3<S>& m, S omega_scale) {
  ReflState<S> st;
  st.n = Vec3<S>(m.x(), m.y(), mirror.A * m.z() + mirror.B / S(2));
  st.v_i = m - o;
  st.a = st.n.squaredNorm();
  st.b = st.n.dot(st.v_i);
  st.v_r = st.a * st.v_i - S(2) * st.b * st.n;
  const Vec3<S> w = p - m;
  st.cr = st.v_r.cross(w);
  st.omega = mirror_eval(mirror, m);
  const S vr2 = st.v_r.squaredNorm(), w2 = w.squaredNorm();
  st.ok = vr2 > S(0) && w2 > S(0) && std::isfinite(st.omega);
  if (!st.ok) {
    st.merit = std::numeric_limits<S>::infinity();
    st.rn = std::numeric_limits<S>::infinity();
    return st;
  }
  st.rn = std::sqrt(st.cr.squaredNorm() / (vr2 * w2));
  const S os = st.omega / omega_scale;
  st.merit = st.rn * st.rn + os * os;
  return st;
}

template <typename S> struct NewtonResult {
  Vec3<S> m;
  ReflState<S> st;
  bool usable{false};
};

// Damped Newton on { two components of v_r x (p - m), Omega(m) } from one
// seed, with analytic Jacobian and early bail-out of hopeless basins.
template <typename S>
NewtonResult<S> newton_reflect(const QuadricMirror<S>& mirror,
                               const Vec3<S>& o, const Vec3<S>& p, Vec3<S> m,
                               S omega_scale, S step_cap) {
  constexpr int kMaxIter = 16;
  NewtonResult<S> out;
  auto st = refl_state(mirror, o, p, m, omega_scale);
  if (!st.ok) return out;
  for (int it = 0; it < kMaxIter; ++it) {
    if (st.rn < S(1e-11) && std::abs(st.omega) < S(1e-10) * omega_scale)
      break;
    if (it >= 4 && st.merit > S(1e-1)) return out;    // hopeless basin
    if (it >= 6 && st.merit > S(1e-6)) return out;    // not contracting
    if (it >= 10 && st.merit > S(1e-12)) return out;  // too slow
    // Drop the cross-product row weighted by the largest |v_r| component
    // (the three rows satisfy v_r . cr = 0).
    int kmax = 0;
    st.v_r.cwiseAbs().maxCoeff(&kmax);
    const int r0 = (kmax + 1) % 3, r1 = (kmax + 2) % 3;

    Mat3<S> J;
    const Vec3<S> w = p - m;
    for (int c = 0; c < 3; ++c) {
      Vec3<S> dn = Vec3<S>::Zero();
      dn[c] = (c == 2) ? mirror.A : S(1);
      const S da = S(2) * st.n.dot(dn);
      const S db = st.v_i.dot(dn) + st.n[c];
      Vec3<S> dvi = Vec3<S>::Zero();
      dvi[c] = S(1);
      const Vec3<S> dvr =
          da * st.v_i + st.a * dvi - S(2) * db * st.n - S(2) * st.b * dn;
      Vec3<S> dw = Vec3<S>::Zero();
      dw[c] = S(-1);
      const Vec3<S> dcr = dvr.cross(w) + st.v_r.cross(dw);
      J(0, c) = dcr[r0];
      J(1, c) = dcr[r1];
    }
    J(2, 0) = S(2) * m.x();
    J(2, 1) = S(2) * m.y();
    J(2, 2) = S(2) * mirror.A * m.z() + mirror.B;

    const Vec3<S> F(st.cr[r0], st.cr[r1], st.omega);
    // 3x3 cofactor inverse beats pivoted LU at this size; a singular J yields
    // non-finite entries and is rejected below.
    Vec3<S> delta = J.inverse() * (-F);
    if (!delta.allFinite()) return out;
    const S dlen = delta.norm();
    if (dlen > step_cap) delta *= step_cap / dlen;

    // Backtracking on the scale-free merit.
    S s = S(1);
    bool accepted = false;
    for (int ls = 0; ls < 8; ++ls, s *= S(0.5)) {
      const Vec3<S> m_cand = m + s * delta;
      auto cand = refl_state(mirror, o, p, m_cand, omega_scale);
      if (cand.ok && cand.merit < st.merit * (S(1) - S(1e-4) * s)) {
        m += s * delta;
        st = cand;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;  // stuck; classify by final residual
  }
  out.m = m;
  out.st = st;
  out.usable = st.ok;
  return out;
}

// Physical validity: surface element faces the cop and the reflected ray
// travels forward through p.
template <typename S>
bool physical_solution(const QuadricMirror<S>& mirror, const Vec3<S>& p,
                       const Vec3<S>& m, const Vec3<S>& v_r) {
  return faces_cop(mirror, m) && v_r.dot(p - m) > S(0);
}

// Continuation polish used by dataset generation: a single Newton run from a
// known nearby solution; empty unless it converges to a physically valid
// reflection.
template <typename S>
std::optional<ReflectionSolution<S>> polish_reflection(
    const QuadricMirror<S>& mirror, const Vec3<S>& p, const Vec3<S>& m0) {
  const S omega_scale = std::max(S(1), std::abs(mirror.C));
  const S step_cap = S(2) * characteristic_scale(mirror);
  const auto r =
      newton_reflect(mirror, mirror.cop, p, m0, omega_scale, step_cap);
  if (!r.usable || r.st.rn >= S(1e-9) ||
      std::abs(r.st.omega) >= S(1e-8) * omega_scale)
    return std::nullopt;
  if (!physical_solution(mirror, p, r.m, r.st.v_r)) return std::nullopt;
  return ReflectionSolution<S>{r.m, r.st.v_i, r.st.v_r, r.st.rn};
}

}  // namespace detail

// All physically valid single-bounce reflections of point p: multistart
// (36 x 32 seeds over the cap) damped Newton on the system
//   { two components of v_r x (p - m), Omega(m) } = 0,
// followed by facing / forward-ray filtering and deduplication. Solutions
// are sorted by |m - cop| ascending.
template <typename S>
ForwardProjection<S> forward_project(const Vec3<S>& p,
                                     const QuadricMirror<S>& mirror) {
  const Vec3<S> o = mirror.cop;
  const S omega_scale = std::max(S(1), std::abs(mirror.C));
  if ((p - o).squaredNorm() < S(1e-18))
    throw std::invalid_argument("forward_project: p coincides with cop");
  if (std::abs(mirror_eval(mirror, p)) < S(1e-12) * omega_scale)
    throw std::invalid_argument("forward_project: p lies on the mirror");

  constexpr int kPhi = 36, kZ = 32;
  const CapWindow<S> win = mirror_cap_window(mirror);
  const S step_cap = S(2) * characteristic_scale(mirror);

  std::vector<ReflectionSolution<S>> raw, stalled_raw;
  auto consider = [&](const Vec3<S>& seed) {
    const auto r = detail::newton_reflect(mirror, o, p, seed, omega_scale,
                                          step_cap);
    if (!r.usable) return;
    const bool on_surface = std::abs(r.st.omega) < S(1e-8) * omega_scale;
    if (!on_surface) return;
    ReflectionSolution<S> sol{r.m, r.st.v_i, r.st.v_r, r.st.rn};
    if (r.st.rn < S(1e-9))
      raw.push_back(sol);
    else if (r.st.rn < S(1e-6))
      stalled_raw.push_back(sol);
  };

  for (int iz = 0; iz < kZ; ++iz) {
    const S u = (S(iz) + S(0.5)) / S(kZ);
    S z;
    if (mirror.A > S(0)) {
      z = win.z_lo + (win.z_hi - win.z_lo) * u;
    } else if (win.cluster_at_lo) {
      z = win.z_lo + (win.z_hi - win.z_lo) * u * u;
    } else {
      z = win.z_hi - (win.z_hi - win.z_lo) * u * u;
    }
    const S r2 = mirror.C - mirror.A * z * z - mirror.B * z;
    if (!(r2 > S(0))) continue;
    const S r = std::sqrt(r2);
    for (int ip = 0; ip < kPhi; ++ip) {
      const S phi =
          S(2) * S(EIGEN_PI) * (S(ip) + S(0.5) * S(iz % 2)) / S(kPhi);
      consider(Vec3<S>(r * std::cos(phi), r * std::sin(phi), z));
    }
  }
  // Axis vertices are valid seeds the polar grid cannot express (r = 0).
  for (const S zr : axis_intersections(mirror))
    consider(Vec3<S>(S(0), S(0), zr));

  ForwardProjection<S> out;
  std::erase_if(raw, [&](const auto& s) {
    return !detail::physical_solution(mirror, p, s.m, s.v_r);
  });
  std::sort(raw.begin(), raw.end(), [&](const auto& x, const auto& y) {
    return (x.m - o).squaredNorm() < (y.m - o).squaredNorm();
  });
  for (const auto& s : raw) {
    bool dup = false;
    for (auto& kept : out.solutions)
      if ((kept.m - s.m).norm() < S(1e-6)) {
        if (s.residual < kept.residual) kept = s;
        dup = true;
        break;
      }
    if (!dup) out.solutions.push_back(s);
  }
  std::erase_if(stalled_raw, [&](const auto& s) {
    return !detail::physical_solution(mirror, p, s.m, s.v_r);
  });
  for (const auto& s : stalled_raw) {
    bool dup = false;
    for (const auto& kept : out.solutions)
      if ((kept.m - s.m).norm() < S(1e-5)) dup = true;
    for (const auto& kept : out.stalled)
      if ((kept.m - s.m).norm() < S(1e-5)) dup = true;
    if (!dup) out.stalled.push_back(s);
  }
  return out;
}

// Default plumbing camera: at the cop, aimed at the facing axis vertex of
// the mirror cap.
template <typename S>
PinholeCamera<S> default_camera(const QuadricMirror<S>& mirror) {
  const std::vector<S> roots = axis_intersections(mirror);
  Vec3<S> target(S(0), S(0), roots.empty() ? S(0) : roots.front());
  S best = std::numeric_limits<S>::infinity();
  for (const S zr : roots) {
    const Vec3<S> v(S(0), S(0), zr);
    const S dist = (mirror.cop - v).norm();
    const S score = faces_cop(mirror, v) ? dist : dist + S(1e6);
    if (score < best) {
      best = score;
      target = v;
    }
  }
  const Vec3<S> zc = (target - mirror.cop).normalized();
  const Vec3<S> xc = (std::abs(zc.z()) < S(0.99))
                         ? Vec3<S>(Vec3<S>::UnitZ().cross(zc)).normalized()
                         : Vec3<S>(Vec3<S>::UnitX().cross(zc)).normalized();
  const Vec3<S> yc = zc.cross(xc);

  PinholeCamera<S> cam;
  cam.pose_in_mirror_frame.R.row(0) = xc.transpose();
  cam.pose_in_mirror_frame.R.row(1) = yc.transpose();
  cam.pose_in_mirror_frame.R.row(2) = zc.transpose();
  cam.pose_in_mirror_frame.t = -(cam.pose_in_mirror_frame.R * mirror.cop);
  return cam;
}

// Perspective projection of a mirror-frame point. Throws BehindCamera when
// the camera-frame depth is non-positive.
template <typename S>
Vec2<S> project_to_pixel(const Vec3<S>& m, const PinholeCamera<S>& cam) {
  const Vec3<S> pc = cam.pose_in_mirror_frame.apply(m);
  if (pc.z() <= S(0))
    throw BehindCamera("project_to_pixel: point behind camera");
  return Vec2<S>(cam.focal * pc.x() / pc.z() + cam.principal_point.x(),
                 cam.focal * pc.y() / pc.z() + cam.principal_point.y());
}

// Lifts a pixel back onto the mirror: first non-negative ray intersection
// whose surface element faces the cop. Throws NoIntersection otherwise.
template <typename S>
Vec3<S> backproject_pixel(const Vec2<S>& u, const PinholeCamera<S>& cam,
                          const QuadricMirror<S>& mirror) {
  const Vec3<S> dir_cam((u.x() - cam.principal_point.x()) / cam.focal,
                        (u.y() - cam.principal_point.y()) / cam.focal, S(1));
  const Vec3<S> origin = cam.center();
  const Vec3<S> dir =
      (cam.pose_in_mirror_frame.R.transpose() * dir_cam).normalized();
  for (const S t : ray_quadric_intersect(origin, dir, mirror)) {
    const Vec3<S> m = origin + t * dir;
    if (faces_cop(mirror, m)) return m;
  }
  throw NoIntersection("backproject_pixel: ray misses the visible cap");
}

}  // namespace ncpose
