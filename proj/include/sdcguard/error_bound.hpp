#pragma once

#include <cmath>
#include <vector>

#include "sdcguard/coeff_table.hpp"
#include "sdcguard/float_model.hpp"
#include "sdcguard/stencil.hpp"

namespace sdcguard {

inline int detector_precision(double Rs, double Rd, const FloatModel& m = {}) {
  double r = std::fmax(Rs, Rd);
  if (r <= 0) return m.p;
  if (!std::isfinite(r)) return 0;
  int e;
  double f = std::frexp(r, &e);  // r = f * 2^e, f in [0.5, 1)
  int ceil_log2 = f == 0.5 ? e - 1 : e;
  return clamp_int(static_cast<long long>(m.p) - ceil_log2, 0, m.p);
}

struct ErrorEstimate {
  double Rs = 0;        // relative, in units of u
  double Rd = 0;        // relative, in units of u
  double totalAbs = 0;  // iterated absolute bound in canonical units
  double directAbs = 0; // direct absolute bound incl. trimming, canonical units
  double denom = 0;     // normalization magnitude
  bool signCrossing = false;
  int dp = 0;
};

// Row statistics per step count, accumulated as rows become available.
struct RowStats {
  // [k][u][v]; k = 0 is the identity.
  std::vector<std::vector<std::vector<double>>> abs;  // sum |c|, rounded up
  std::vector<std::vector<std::vector<double>>> pos;  // sum of positive c, rounded up
  std::vector<std::vector<std::vector<double>>> neg;  // sum of |negative c|, rounded up
  std::vector<std::vector<std::vector<double>>> posd; // same, rounded down
  std::vector<std::vector<std::vector<double>>> negd;

  explicit RowStats(int arrays) {
    auto id = std::vector<std::vector<double>>(arrays, std::vector<double>(arrays, 0.0));
    auto zero = id;
    for (int a = 0; a < arrays; ++a) id[a][a] = 1.0;
    abs.push_back(id);
    pos.push_back(id);
    posd.push_back(id);
    neg.push_back(zero);
    negd.push_back(zero);
  }
  int kmax() const { return static_cast<int>(abs.size()) - 1; }

  void add(const RowSet& rs) {
    const size_t n = rs.size();
    auto blank = std::vector<std::vector<double>>(n, std::vector<double>(n, 0.0));
    abs.push_back(blank);
    pos.push_back(blank);
    neg.push_back(blank);
    posd.push_back(blank);
    negd.push_back(blank);
    for (size_t u = 0; u < n; ++u)
      for (size_t v = 0; v < n; ++v) {
        DoubleDouble p, q;
        for (const auto& c : rs[u][v].c) {
          if (c.hi > 0) p += c;
          else if (c.hi < 0) q += -c;
        }
        pos.back()[u][v] = p.round_up();
        posd.back()[u][v] = p.round_down();
        neg.back()[u][v] = q.round_up();
        negd.back()[u][v] = q.round_down();
        abs.back()[u][v] = add_up(pos.back()[u][v], neg.back()[u][v]);
      }
  }
  double abs_row(int y, int k) const {
    double s = 0;
    for (double v : abs[k][y]) s = add_up(s, v);
    return s;
  }
};

inline RowStats row_stats(const CoeffTable& t, int T) {
  RowStats st(t.arrays);
  for (int k = 1; k <= T; ++k) st.add(t.step(k));
  return st;
}

// Fresh rounding noise generated when computing target v from inputs bounded by B[y],
// summed over the products and the left-to-right additions (unit input scale).
inline double step_noise(const StencilSpec& s, int v, const std::vector<double>& B, const FloatModel& m) {
  if (s.is_static(v)) return 0;
  double total = 0, partial = 0;
  bool first = true;
  for (const auto& pr : s.pairs) {
    if (pr.to != v) continue;
    for (double c : pr.coeffs) {
      double prod = mul_up(std::fabs(c), B[pr.from]);
      total = add_up(total, prod);
      partial = add_up(partial, prod);
      if (!first) total = add_up(total, partial);
      first = false;
    }
  }
  return mul_up(total, m.op_bound());
}

// Absolute iterated-evaluation error bound for target u after T steps, inputs bounded by 1.
// Noise created at step s (s = 1..T) reaches the detector through the (T-s)-step row.
inline double iterated_abs_bound(const StencilSpec& s, const RowStats& st, int u, int T, const FloatModel& m) {
  if (T > st.kmax()) throw Error(ErrorCode::TstepOutOfRange, "T beyond available rows");
  double total = 0;
  std::vector<double> B(s.arrays);
  for (int step = 1; step <= T; ++step) {
    for (int y = 0; y < s.arrays; ++y) B[y] = st.abs_row(y, step - 1);
    for (int v = 0; v < s.arrays; ++v) {
      double reach = st.abs[T - step][u][v];
      if (reach == 0) continue;
      total = add_up(total, mul_up(step_noise(s, v, B, m), reach));
    }
  }
  return total;
}

// Direct-evaluation interval of target u after T steps with all inputs in [1, X].
inline Interval direct_interval(const RowStats& st, int u, int T, double X) {
  double lo = 0, hi = 0;
  for (size_t v = 0; v < st.abs[T][u].size(); ++v) {
    lo = add_down(lo, sub_down(st.posd[T][u][v], mul_up(X, st.neg[T][u][v])));
    hi = add_up(hi, sub_up(mul_up(X, st.pos[T][u][v]), st.negd[T][u][v]));
  }
  return {lo, hi};
}

// Normalization magnitude: the upper magnitude bound of the direct-value interval, the same
// quantity the check threshold is anchored to. crossing records a sign-changing interval.
inline double normalization(const Interval& I, bool& crossing) {
  crossing = I.contains_zero();
  return I.mag_hi();
}

// Compensated dot-product error over a support whose |c| sum is absSum (inputs <= X):
// coefficient rounding (u), product rounding (op), and 2 ulp of summation plus n*mu^2.
inline double direct_abs_bound(double absSum, double X, long n, const FloatModel& m) {
  double mag = mul_up(absSum, X);
  double rel = add_up(add_up(m.u(), m.op_bound()), add_up(2 * m.mu(), mul_up(static_cast<double>(n), m.mu() * m.mu())));
  return mul_up(mul_up(mag, rel), 1 + 4 * m.mu());
}

inline void check_width(int width, int exp_max) {
  if (width < 0 || width > exp_max)
    throw Error(ErrorCode::ExponentRangeUnprofiled, "width " + std::to_string(width));
}

inline ErrorEstimate estimate_errors(const StencilSpec& s, const RowStats& st, int u, int T, int width,
                                     double ewAbsSum, long ewCount, double trimAbsSum, const FloatModel& m) {
  ErrorEstimate e;
  if (T == 0) {
    e.dp = m.p;
    e.denom = 1;
    return e;
  }
  const double X = std::ldexp(1.0, width);
  e.totalAbs = mul_up(iterated_abs_bound(s, st, u, T, m), X);
  e.directAbs = add_up(direct_abs_bound(ewAbsSum, X, ewCount, m), mul_up(trimAbsSum, X));
  // A lone unit coefficient is a copy and incurs no rounding.
  if (ewCount == 1 && ewAbsSum == 1.0 && trimAbsSum == 0) e.directAbs = 0;
  e.denom = normalization(direct_interval(st, u, T, X), e.signCrossing);
  if (e.denom == 0) {
    e.Rs = e.Rd = kInf;
    e.dp = 0;
    return e;
  }
  const double scale = mul_down(e.denom, m.u());
  e.Rs = div_up(e.totalAbs, scale);
  e.Rd = div_up(e.directAbs, scale);
  e.dp = detector_precision(e.Rs, e.Rd, m);
  return e;
}

// R_s of target 0 (or the worst evolving target) for a (spec, T, width) triple.
inline double iterated_error_bound(const StencilSpec& s, int T, int width, const CoeffTable& t,
                                   const FloatModel& m = {}, int exp_max = 20) {
  check_width(width, exp_max);
  if (T < 0 || T > t.Tmax) throw Error(ErrorCode::TstepOutOfRange, "T=" + std::to_string(T));
  if (T == 0) return 0;
  RowStats st = row_stats(t, T);
  double worst = 0;
  for (int u : s.evolving()) {
    double full = 0;
    long n = 0;
    for (int v = 0; v < s.arrays; ++v) {
      full = add_up(full, st.abs[T][u][v]);
      n += static_cast<long>(t.row(u, v, T).size());
    }
    worst = std::fmax(worst, estimate_errors(s, st, u, T, width, full, n, 0, m).Rs);
  }
  return worst;
}

}  // namespace sdcguard
