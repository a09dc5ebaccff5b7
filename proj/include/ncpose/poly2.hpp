#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace ncpose {

// Dense bivariate polynomial in (y, z) of total degree <= MaxDeg, stored as
// a triangular coefficient table indexed by (deg_y, deg_z). Degree 10 has 66
// terms. All operations are allocation-free.
template <typename S, int MaxDeg = 10> class Poly2 {
 public:
  static constexpr int kMaxDeg = MaxDeg;
  static constexpr int kNumCoeffs = (MaxDeg + 1) * (MaxDeg + 2) / 2;

  Poly2() { coeffs_.fill(S(0)); }

  static constexpr int index(int i, int j) {
    // offset of row i (terms y^i z^0..z^(MaxDeg-i)) plus j
    return i * (MaxDeg + 1) - i * (i - 1) / 2 + j;
  }

  S coeff(int i, int j) const { return coeffs_[index(i, j)]; }
  S& coeff(int i, int j) { return coeffs_[index(i, j)]; }

  static Poly2 constant(S c) {
    Poly2 p;
    p.coeff(0, 0) = c;
    return p;
  }
  static Poly2 var_y() {
    Poly2 p;
    p.coeff(1, 0) = S(1);
    return p;
  }
  static Poly2 var_z() {
    Poly2 p;
    p.coeff(0, 1) = S(1);
    return p;
  }

  Poly2& operator+=(const Poly2& o) {
    for (int k = 0; k < kNumCoeffs; ++k) coeffs_[k] += o.coeffs_[k];
    return *this;
  }
  Poly2& operator-=(const Poly2& o) {
    for (int k = 0; k < kNumCoeffs; ++k) coeffs_[k] -= o.coeffs_[k];
    return *this;
  }
  Poly2& operator*=(S c) {
    for (int k = 0; k < kNumCoeffs; ++k) coeffs_[k] *= c;
    return *this;
  }
  friend Poly2 operator+(Poly2 a, const Poly2& b) { return a += b; }
  friend Poly2 operator-(Poly2 a, const Poly2& b) { return a -= b; }
  friend Poly2 operator*(S c, Poly2 p) { return p *= c; }
  friend Poly2 operator*(Poly2 p, S c) { return p *= c; }
  Poly2 operator-() const {
    Poly2 p = *this;
    return p *= S(-1);
  }

  // Largest total degree whose coefficient exceeds rel_tol * max_abs();
  // -1 for the (near-)zero polynomial.
  int total_degree(S rel_tol = S(0)) const {
    const S m = max_abs();
    if (m == S(0)) return -1;
    const S thr = rel_tol * m;
    int deg = -1;
    for (int i = 0; i <= MaxDeg; ++i)
      for (int j = 0; j + i <= MaxDeg; ++j)
        if (std::abs(coeff(i, j)) > thr && i + j > deg) deg = i + j;
    return deg;
  }

  S max_abs() const {
    S m(0);
    for (int k = 0; k < kNumCoeffs; ++k)
      m = std::max(m, std::abs(coeffs_[k]));
    return m;
  }

  // Horner evaluation: inner Horner over z per y-row, outer Horner over y.
  S eval(S y, S z) const {
    S v(0);
    for (int i = MaxDeg; i >= 0; --i) {
      S row(0);
      for (int j = MaxDeg - i; j >= 0; --j) row = row * z + coeff(i, j);
      v = v * y + row;
    }
    return v;
  }

 private:
  std::array<S, kNumCoeffs> coeffs_;
};

// Product of two polynomials; throws if the structural degrees overflow the
// representation. Nonzero terms are gathered first so sparse factors (the
// common case in the curve construction) multiply in O(nnz_a * nnz_b).
template <typename S, int MaxDeg>
Poly2<S, MaxDeg> poly_mul(const Poly2<S, MaxDeg>& a,
                          const Poly2<S, MaxDeg>& b) {
  struct Term {
    std::int8_t i, j;
    S c;
  };
  constexpr int kN = Poly2<S, MaxDeg>::kNumCoeffs;
  std::array<Term, kN> ta, tb;
  int na = 0, nb = 0, da = -1, db = -1;
  for (int i = 0; i <= MaxDeg; ++i)
    for (int j = 0; i + j <= MaxDeg; ++j) {
      const S ca = a.coeff(i, j);
      if (ca != S(0)) {
        ta[na++] = {static_cast<std::int8_t>(i), static_cast<std::int8_t>(j),
                    ca};
        if (i + j > da) da = i + j;
      }
      const S cb = b.coeff(i, j);
      if (cb != S(0)) {
        tb[nb++] = {static_cast<std::int8_t>(i), static_cast<std::int8_t>(j),
                    cb};
        if (i + j > db) db = i + j;
      }
    }
  Poly2<S, MaxDeg> out;
  if (da < 0 || db < 0) return out;
  if (da + db > MaxDeg) throw std::logic_error("poly_mul: degree overflow");
  for (int u = 0; u < na; ++u) {
    const int iu = ta[u].i, ju = ta[u].j;
    const S cu = ta[u].c;
    for (int w = 0; w < nb; ++w)
      out.coeff(iu + tb[w].i, ju + tb[w].j) += cu * tb[w].c;
  }
  return out;
}

}  // namespace ncpose
