#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <vector>

#include "ncpose/geometry.hpp"
#include "ncpose/poly2.hpp"
#include "ncpose/reflection.hpp"
#include "ncpose/types.hpp"

namespace ncpose {

// Residual reported for curve points where the rational x-recovery breaks
// down (vanishing denominator).
inline constexpr double kSentinelResidual = 1e6;

// Floor applied to the normalized x_den when forming smooth pole-safe
// quotients of the cleared defect (see x_defect_eval and the pose solver).
inline constexpr double kDenFloor = 1e-2;

// Reflection curve of one 3D line on the mirror: the zero set of a bivariate
// polynomial gamma(y, z) of total degree <= 10 joined with the rational
// x(y, z) = coord_scale * x_num / x_den.
//
// All three tables live in scaled coordinates (y/coord_scale, z/coord_scale)
// to keep coefficient magnitudes comparable across degrees; gamma is
// normalized to max-abs coefficient 1 (scale stores the divisor), and
// x_num/x_den are jointly normalized by x_den's max-abs (their ratio is what
// matters).
template <typename S> struct CurveCoefficients {
  Poly2<S, 10> gamma;
  Poly2<S, 10> x_num;
  Poly2<S, 10> x_den;
  S scale{1};        // gamma normalization divisor
  S x_scale{1};      // joint x_num/x_den normalization divisor
  S coord_scale{1};  // characteristic length dividing (y, z) inputs
};

namespace detail {

// Coefficient assembly shared by the Line3D entry point and the pose
// residual path (which feeds raw transformed q, d). Inputs are assumed
// pre-scaled by the caller (mirror and q divided by s; d free-scale).
template <typename S>
CurveCoefficients<S> build_curve(S A, S B, S C, S oy, S oz, const Vec3<S>& q,
                                 const Vec3<S>& d, S s) {
  using P = Poly2<S, 10>;
  const P y = P::var_y(), z = P::var_z();

  // Reflection plane through cop, line point and axis point k = m - n gives
  // x = (e3 L + e4) / (e1 L + e2) in the line parameter L:
  const P u = (S(1) - A) * z - P::constant(B / S(2) + oz);
  const P G = poly_mul(u, y) + oy * (A * z + P::constant(B / S(2)));
  const P e1 = d.y() * u + P::constant(d.z() * oy);
  const P e2 = (q.y() - oy) * u + P::constant((q.z() - oz) * oy);
  const P e3 = d.x() * G;
  const P e4 = q.x() * G;

  // Substituting x^2 = -Sq on the mirror turns the surface constraint into
  // c5 L^2 + c6 L + c7 = 0.
  const P Sq = poly_mul(y, y) + A * poly_mul(z, z) + B * z - P::constant(C);
  const P c5 = poly_mul(e3, e3) + poly_mul(Sq, poly_mul(e1, e1));
  const P c6 = S(2) * (poly_mul(e3, e4) + poly_mul(Sq, poly_mul(e1, e2)));
  const P c7 = poly_mul(e4, e4) + poly_mul(Sq, poly_mul(e2, e2));

  // Reflected direction on the mirror: v_r = rho * v_i - 2 sigma * n with
  // rho = n'n and sigma = n'v_i reduced modulo the surface equation. The
  // x-free component of v_r x (p(L) - m) is linear in L: c8 L + c9 = 0.
  const P rho = A * (A - S(1)) * poly_mul(z, z) + B * (A - S(1)) * z +
                P::constant(C + B * B / S(4));
  const P sig = -oy * y - (B / S(2) + A * oz) * z +
                P::constant(C - (B / S(2)) * oz);
  const P alpha = poly_mul(rho, y - P::constant(oy)) - S(2) * poly_mul(sig, y);
  const P beta = poly_mul(rho, z - P::constant(oz)) -
                 S(2) * poly_mul(sig, A * z + P::constant(B / S(2)));
  const P c8 = d.z() * alpha - d.y() * beta;
  // c9 in analytically reduced form: the naive alpha*(q3 - z) - beta*(q2 - y)
  // carries degree-4 terms that cancel exactly; expanding the cancellation by
  // hand avoids leaving floating-point residue in the top band.
  const P c9 = q.z() * alpha - q.y() * beta +
               poly_mul(rho, oy * z - oz * y) +
               S(2) * (S(1) - A) * poly_mul(sig, poly_mul(y, z)) -
               B * poly_mul(sig, y);

  CurveCoefficients<S> out;
  out.gamma = poly_mul(c5, poly_mul(c9, c9)) -
              poly_mul(c6, poly_mul(c8, c9)) +
              poly_mul(c7, poly_mul(c8, c8));
  out.x_num = poly_mul(e4, c8) - poly_mul(e3, c9);
  out.x_den = poly_mul(e2, c8) - poly_mul(e1, c9);
  out.coord_scale = s;

  const S gmax = out.gamma.max_abs();
  if (!(gmax > S(1e-280)))
    throw DegenerateLine("curve_coefficients: identically-zero expansion");
  out.gamma *= S(1) / gmax;
  out.scale = gmax;
  const S dmax = out.x_den.max_abs();
  if (dmax > S(0)) {
    out.x_num *= S(1) / dmax;
    out.x_den *= S(1) / dmax;
    out.x_scale = dmax;
  }
  return out;
}

}  // namespace detail

// Expanded reflection-curve coefficients for a line in the mirror frame.
// Throws DegenerateLine for lines through the cop (every reflection plane is
// consistent there) and for identically-zero expansions.
template <typename S>
CurveCoefficients<S> curve_coefficients(const Line3D<S>& line,
                                        const QuadricMirror<S>& mirror) {
  const Vec3<S> rel = mirror.cop - line.q;
  const S dist_to_cop = (rel - rel.dot(line.d) * line.d).norm();
  if (dist_to_cop < S(1e-9) * (S(1) + mirror.cop.norm()))
    throw DegenerateLine("curve_coefficients: line passes through the cop");

  const S s = characteristic_scale(mirror);
  return detail::build_curve(mirror.A, mirror.B / s, mirror.C / (s * s),
                             mirror.cop.y() / s, mirror.cop.z() / s,
                             Vec3<S>(line.q / s), line.d, s);
}

// Normalized curve polynomial value at a mirror point's (y, z).
template <typename S>
S gamma_eval(const CurveCoefficients<S>& c, S y, S z) {
  return c.gamma.eval(y / c.coord_scale, z / c.coord_scale);
}

// Rational x-recovery; empty when the evaluation point lies where the
// plane-elimination parameterization breaks (|x_den| <= 1e-10 after
// normalization).
template <typename S>
std::optional<S> x_from_yz(const CurveCoefficients<S>& c, S y, S z) {
  const S ys = y / c.coord_scale, zs = z / c.coord_scale;
  const S den = c.x_den.eval(ys, zs);
  if (std::abs(den) <= S(1e-10)) return std::nullopt;
  return c.coord_scale * c.x_num.eval(ys, zs) / den;
}

// Cleared (pole-free) form of the x-consistency defect at a 3D point:
// (x / coord_scale) * x_den(y, z) - x_num(y, z), zero exactly where x agrees
// with the rational x(y, z). Smooth in the curve coefficients, so usable
// inside optimizers where the rational form would inject sentinel cliffs.
template <typename S>
S x_defect_eval(const CurveCoefficients<S>& c, S x, S y, S z) {
  const S ys = y / c.coord_scale, zs = z / c.coord_scale;
  return (x / c.coord_scale) * c.x_den.eval(ys, zs) - c.x_num.eval(ys, zs);
}

// Fallback x-resolution through the surface equation, +/-sqrt(C - y^2 -
// A z^2 - B z); empty when (y, z) lifts to no real surface point.
template <typename S>
std::optional<std::array<S, 2>> x_on_mirror(const QuadricMirror<S>& mirror,
                                            S y, S z) {
  const S r2 = mirror.C - y * y - mirror.A * z * z - mirror.B * z;
  if (r2 < S(0)) return std::nullopt;
  const S r = std::sqrt(r2);
  return std::array<S, 2>{r, -r};
}

// x-recovery with the on-mirror fallback near denominator poles; the sign is
// chosen toward the cop-facing cap.
template <typename S>
std::optional<S> resolve_x(const CurveCoefficients<S>& c,
                           const QuadricMirror<S>& mirror, S y, S z) {
  if (auto x = x_from_yz(c, y, z)) return x;
  const auto pair = x_on_mirror(mirror, y, z);
  if (!pair) return std::nullopt;
  const Vec3<S> mp((*pair)[0], y, z), mm((*pair)[1], y, z);
  const bool fp = faces_cop(mirror, mp), fm = faces_cop(mirror, mm);
  if (fp != fm) return fp ? (*pair)[0] : (*pair)[1];
  return ((mp - mirror.cop).squaredNorm() <= (mm - mirror.cop).squaredNorm())
             ? (*pair)[0]
             : (*pair)[1];
}

// Scalar curve-membership residual |gamma| + |x(y,z) - m_x| at a mirror
// point; kSentinelResidual when the rational x has no value there.
template <typename S>
S curve_point_residual(const CurveCoefficients<S>& c,
                       const QuadricMirror<S>& mirror, const Vec3<S>& m) {
  (void)mirror;
  const S g = std::abs(gamma_eval(c, m.y(), m.z()));
  const auto x = x_from_yz(c, m.y(), m.z());
  if (!x) return S(kSentinelResidual);
  return g + std::abs(*x - m.x());
}

template <typename S>
S curve_point_residual(const Line3D<S>& line, const QuadricMirror<S>& mirror,
                       const Vec3<S>& m) {
  return curve_point_residual(curve_coefficients(line, mirror), mirror, m);
}

// Curve polyline for plotting: forward-projects n line samples (nearest
// solution to the cop) and reports the membership residual of each kept
// point. Samples with no valid reflection are skipped and counted.
template <typename S> struct SampledCurve {
  std::vector<Vec3<S>> points;
  std::vector<S> lambdas;
  std::vector<S> residuals;
  int skipped{0};
};

template <typename S>
SampledCurve<S> sample_curve(const Line3D<S>& line,
                             const QuadricMirror<S>& mirror, int n,
                             S lambda_lo = S(-60), S lambda_hi = S(60)) {
  if (n < 2) throw std::invalid_argument("sample_curve: n must be >= 2");
  const CurveCoefficients<S> c = curve_coefficients(line, mirror);
  SampledCurve<S> out;
  for (int k = 0; k < n; ++k) {
    const S lam = lambda_lo + (lambda_hi - lambda_lo) * S(k) / S(n - 1);
    const Vec3<S> p = line.point_at(lam);
    ForwardProjection<S> fp;
    try {
      fp = forward_project(p, mirror);
    } catch (const std::invalid_argument&) {
      ++out.skipped;  // sample on the mirror surface or at the cop
      continue;
    }
    if (fp.solutions.empty()) {
      ++out.skipped;
      continue;
    }
    const Vec3<S>& m = fp.solutions.front().m;
    out.points.push_back(m);
    out.lambdas.push_back(lam);
    out.residuals.push_back(curve_point_residual(c, mirror, m));
  }
  return out;
}

}  // namespace ncpose
