#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace sdcguard {

#ifdef __FAST_MATH__
#error fast math breaks the error-free transformations used here
#endif

struct FloatModel {
  int p = 53;
  // Per-operation noise constant: the ulp of one (mu) by default, or the unit roundoff.
  bool per_op_mu = true;

  double u() const { return std::ldexp(1.0, -p); }
  double mu() const { return std::ldexp(1.0, 1 - p); }
  double op_bound() const { return per_op_mu ? mu() : u(); }
};

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Error-free transformations.
inline void two_sum(double a, double b, double& s, double& e) {
  s = a + b;
  double bb = s - a;
  e = (a - (s - bb)) + (b - bb);
}

inline void two_prod(double a, double b, double& p, double& e) {
  p = a * b;
  e = std::fma(a, b, -p);
}

// Directed rounding built on the exact residuals, so no rounding-mode switches.
inline double add_up(double a, double b) {
  double s, e;
  two_sum(a, b, s, e);
  return e > 0 ? std::nextafter(s, kInf) : s;
}
inline double add_down(double a, double b) {
  double s, e;
  two_sum(a, b, s, e);
  return e < 0 ? std::nextafter(s, -kInf) : s;
}
inline double sub_up(double a, double b) { return add_up(a, -b); }
inline double sub_down(double a, double b) { return add_down(a, -b); }
inline double mul_up(double a, double b) {
  double p, e;
  two_prod(a, b, p, e);
  return e > 0 ? std::nextafter(p, kInf) : p;
}
inline double mul_down(double a, double b) {
  double p, e;
  two_prod(a, b, p, e);
  return e < 0 ? std::nextafter(p, -kInf) : p;
}
inline double div_up(double a, double b) {
  double q = a / b;
  double r = std::fma(-q, b, a);  // a - q*b exactly
  if (r != 0 && ((r > 0) == (b > 0))) return std::nextafter(q, kInf);
  return q;
}

// Binary exponent floor(log2|x|); zero maps to the lowest int so that differences clamp.
inline constexpr int kExpNegInf = std::numeric_limits<int>::min() / 4;
inline int exponent_of(double x) {
  if (x == 0) return kExpNegInf;
  return std::ilogb(x);
}

inline int clamp_int(long long v, int lo, int hi) {
  return static_cast<int>(v < lo ? lo : (v > hi ? hi : v));
}

struct Interval {
  double lo = 0;
  double hi = 0;

  bool contains_zero() const { return lo <= 0 && hi >= 0; }
  double mag_lo() const { return contains_zero() ? 0.0 : std::fmin(std::fabs(lo), std::fabs(hi)); }
  double mag_hi() const { return std::fmax(std::fabs(lo), std::fabs(hi)); }
};

inline Interval operator+(const Interval& a, const Interval& b) {
  return {add_down(a.lo, b.lo), add_up(a.hi, b.hi)};
}
inline Interval operator-(const Interval& a, const Interval& b) {
  return {sub_down(a.lo, b.hi), sub_up(a.hi, b.lo)};
}

// Sum of independent intervals with one removed: [S.lo - a.lo, S.hi - a.hi], outward.
inline Interval remove_term(const Interval& s, const Interval& a) {
  return {sub_down(s.lo, a.lo), sub_up(s.hi, a.hi)};
}

// Unevaluated sum hi + lo with |lo| <= ulp(hi)/2.
struct DoubleDouble {
  double hi = 0;
  double lo = 0;

  DoubleDouble() = default;
  constexpr DoubleDouble(double h) : hi(h), lo(0) {}
  constexpr DoubleDouble(double h, double l) : hi(h), lo(l) {}

  double to_double() const { return hi + lo; }
  bool is_zero() const { return hi == 0 && lo == 0; }

  // Tight double enclosure of the exact value.
  double round_down() const {
    double s, e;
    two_sum(hi, lo, s, e);
    return e < 0 ? std::nextafter(s, -kInf) : s;
  }
  double round_up() const {
    double s, e;
    two_sum(hi, lo, s, e);
    return e > 0 ? std::nextafter(s, kInf) : s;
  }
};

inline DoubleDouble dd_renorm(double s, double e) {
  double h = s + e;
  return {h, e - (h - s)};
}

inline DoubleDouble operator+(const DoubleDouble& a, const DoubleDouble& b) {
  double s, e, t, f;
  two_sum(a.hi, b.hi, s, e);
  two_sum(a.lo, b.lo, t, f);
  e += t;
  DoubleDouble r = dd_renorm(s, e);
  e = f + r.lo;
  return dd_renorm(r.hi, e);
}

inline DoubleDouble operator-(const DoubleDouble& a) { return {-a.hi, -a.lo}; }
inline DoubleDouble operator-(const DoubleDouble& a, const DoubleDouble& b) { return a + (-b); }

inline DoubleDouble operator*(const DoubleDouble& a, const DoubleDouble& b) {
  double p, e;
  two_prod(a.hi, b.hi, p, e);
  e += a.hi * b.lo + a.lo * b.hi;
  return dd_renorm(p, e);
}

inline DoubleDouble& operator+=(DoubleDouble& a, const DoubleDouble& b) { return a = a + b; }

inline DoubleDouble dd_abs(const DoubleDouble& a) { return a.hi < 0 || (a.hi == 0 && a.lo < 0) ? -a : a; }

inline bool operator==(const DoubleDouble& a, const DoubleDouble& b) { return a.hi == b.hi && a.lo == b.lo; }

}  // namespace sdcguard
