#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "sdcguard/float_model.hpp"
#include "sdcguard/stencil.hpp"

namespace sdcguard {

// Dense block of k-step coefficients for one (target, source) pair over [-k*w, k*w].
struct CoeffRow {
  int k = 0;
  Index half;    // k * w per dimension
  Index extent;  // 2*half + 1
  std::vector<DoubleDouble> c;

  CoeffRow() = default;
  CoeffRow(int steps, const Index& w) : k(steps), half(w.size()), extent(w.size()) {
    long n = 1;
    for (size_t d = 0; d < w.size(); ++d) {
      half[d] = steps * w[d];
      extent[d] = 2 * half[d] + 1;
      n *= extent[d];
    }
    c.assign(n, DoubleDouble{});
  }
  size_t size() const { return c.size(); }
  long linear(const Index& off) const {
    long k_ = 0;
    for (size_t d = 0; d < off.size(); ++d) k_ = k_ * extent[d] + (off[d] + half[d]);
    return k_;
  }
  Index offset(long idx) const {
    Index off(extent.size());
    for (int d = static_cast<int>(extent.size()) - 1; d >= 0; --d) {
      off[d] = idx % extent[d] - half[d];
      idx /= extent[d];
    }
    return off;
  }
  bool contains(const Index& off) const {
    for (size_t d = 0; d < off.size(); ++d)
      if (off[d] < -half[d] || off[d] > half[d]) return false;
    return true;
  }
  DoubleDouble at(const Index& off) const { return contains(off) ? c[linear(off)] : DoubleDouble{}; }
  DoubleDouble sum() const {
    DoubleDouble s;
    for (const auto& v : c) s += v;
    return s;
  }
  double abs_sum_up() const {
    double s = 0;
    for (const auto& v : c) s = add_up(s, dd_abs(v).round_up());
    return s;
  }
};

// Calls f(j_from, j_to) for every entry of `from`, where `to` is a larger centered block.
template <class F>
void for_each_embedded(const CoeffRow& from, const CoeffRow& to, F&& f) {
  const int D = static_cast<int>(from.extent.size());
  long stride[8], coord[8];
  long st = 1;
  for (int d = D - 1; d >= 0; --d) {
    stride[d] = st;
    st *= to.extent[d];
    coord[d] = 0;
  }
  long base = 0;
  for (int d = 0; d < D; ++d) base += (to.half[d] - from.half[d]) * stride[d];
  const long n = static_cast<long>(from.c.size());
  long jt = base;
  for (long j = 0; j < n; ++j) {
    f(j, jt);
    int d = D - 1;
    ++coord[d];
    jt += stride[d];
    while (d > 0 && coord[d] == from.extent[d]) {
      jt -= coord[d] * stride[d];
      coord[d] = 0;
      --d;
      ++coord[d];
      jt += stride[d];
    }
  }
}

// All (target, source) rows of one step count.
using RowSet = std::vector<std::vector<CoeffRow>>;

inline RowSet identity_rows(const StencilSpec& s) {
  Index w = s.width();
  RowSet r(s.arrays, std::vector<CoeffRow>(s.arrays, CoeffRow(0, w)));
  for (int a = 0; a < s.arrays; ++a) r[a][a].c[0] = DoubleDouble(1.0);
  return r;
}

struct StepCoeff {
  int target;
  int source;
  Index off;
  double c;
};

inline std::vector<StepCoeff> step_coeffs(const StencilSpec& s) {
  std::vector<StepCoeff> r;
  for (const auto& pr : s.pairs)
    for (size_t k = 0; k < pr.offsets.size(); ++k) r.push_back({pr.to, pr.from, pr.offsets[k], pr.coeffs[k]});
  return r;
}

// row(k)[u][v](i) = sum_m sum_s row(k-1)[u][m](i - s) * c_{m,v}(s), gathered per entry.
// Mirrored offsets with equal weights are added as a pair first, which keeps symmetric
// rows exactly symmetric.
inline RowSet next_rows(const StencilSpec& s, const std::vector<StepCoeff>& steps, const RowSet& prev) {
  const Index w = s.width();
  const int k = prev[0][0].k + 1;
  const int D = s.dims;
  RowSet out(s.arrays, std::vector<CoeffRow>(s.arrays, CoeffRow(k, w)));

  CoeffRow pad(k + 1, w);  // layout large enough for i - s
  struct Group {
    int m, v;
    double c;
    long d1, d2;
    bool pair;
  };
  std::vector<Group> groups;
  std::vector<bool> used(steps.size(), false);
  auto delta = [&](const Index& off) {
    Index o(off);
    long lin = pad.linear(o);
    Index z(D, 0);
    return lin - pad.linear(z);
  };
  for (size_t a = 0; a < steps.size(); ++a) {
    if (used[a]) continue;
    used[a] = true;
    Group g{steps[a].target, steps[a].source, steps[a].c, delta(steps[a].off), 0, false};
    bool zero = std::all_of(steps[a].off.begin(), steps[a].off.end(), [](long x) { return x == 0; });
    for (size_t b = a + 1; b < steps.size() && !zero; ++b) {
      if (used[b] || steps[b].target != g.m || steps[b].source != g.v || steps[b].c != g.c) continue;
      bool mirror = true;
      for (int d = 0; d < D; ++d) mirror = mirror && steps[b].off[d] == -steps[a].off[d];
      if (!mirror) continue;
      used[b] = true;
      g.d2 = delta(steps[b].off);
      g.pair = true;
      break;
    }
    groups.push_back(g);
  }

  std::vector<std::vector<DoubleDouble>> padded(s.arrays);
  for (int u = 0; u < s.arrays; ++u) {
    for (int m = 0; m < s.arrays; ++m) {
      const CoeffRow& src = prev[u][m];
      padded[m].assign(pad.c.size(), DoubleDouble{});
      auto& pm = padded[m];
      for_each_embedded(src, pad, [&](long j, long jp) { pm[jp] = src.c[j]; });
    }
    for (int v = 0; v < s.arrays; ++v) {
      CoeffRow& dst = out[u][v];
      for_each_embedded(dst, pad, [&](long j, long p) {
        DoubleDouble acc;
        for (const auto& g : groups) {
          if (g.v != v) continue;
          const auto& src = padded[g.m];
          const DoubleDouble cc(g.c);
          DoubleDouble t = src[p - g.d1] * cc;
          if (g.pair) t = t + src[p - g.d2] * cc;
          acc += t;
        }
        dst.c[j] = acc;
      });
    }
  }
  return out;
}

// Streams rows k = 1, 2, ... without keeping the history.
class RowStream {
 public:
  explicit RowStream(const StencilSpec& s) : spec_(s), steps_(step_coeffs(s)), cur_(identity_rows(s)) {}
  const RowSet& current() const { return cur_; }
  int k() const { return cur_[0][0].k; }
  const RowSet& advance() {
    cur_ = next_rows(spec_, steps_, cur_);
    return cur_;
  }

 private:
  StencilSpec spec_;
  std::vector<StepCoeff> steps_;
  RowSet cur_;
};

struct CoeffTable {
  SpecHash hash{};
  int dims = 0;
  int arrays = 0;
  int Tmax = 0;
  Index w;
  std::vector<RowSet> rows;  // rows[k-1][u][v]

  const CoeffRow& row(int u, int v, int k) const {
    if (k < 1 || k > Tmax) throw Error(ErrorCode::TstepOutOfRange, "k=" + std::to_string(k));
    return rows[k - 1][u][v];
  }
  const RowSet& step(int k) const {
    if (k < 1 || k > Tmax) throw Error(ErrorCode::TstepOutOfRange, "k=" + std::to_string(k));
    return rows[k - 1];
  }
};

inline CoeffTable unroll_coefficients(const StencilSpec& s, int Tmax) {
  if (Tmax < 1) throw Error(ErrorCode::InvalidArgument, "Tmax must be positive");
  CoeffTable t;
  t.hash = spec_hash(s);
  t.dims = s.dims;
  t.arrays = s.arrays;
  t.Tmax = Tmax;
  t.w = s.width();
  RowStream rs(s);
  for (int k = 1; k <= Tmax; ++k) t.rows.push_back(rs.advance());
  return t;
}

inline double coeff_checksum(const CoeffTable& t, int k) {
  const RowSet& rs = t.step(k);
  double best = -kInf;
  for (int u = 0; u < t.arrays; ++u) {
    DoubleDouble s;
    for (int v = 0; v < t.arrays; ++v) s += rs[u][v].sum();
    best = std::max(best, s.to_double());
  }
  return best;
}

namespace detail {
inline constexpr char kMagic[4] = {'F', 'P', 'D', 'C'};
inline constexpr std::uint32_t kFormatVersion = 1;
static_assert(std::endian::native == std::endian::little, "table I/O assumes a little-endian host");

template <class T>
void put(std::ofstream& f, const T& v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T>
T get(std::ifstream& f) {
  T v{};
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!f) throw Error(ErrorCode::IoError, "truncated table file");
  return v;
}
}  // namespace detail

inline void save_table(const CoeffTable& t, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::IoError, "cannot open " + path);
  f.write(detail::kMagic, 4);
  detail::put(f, detail::kFormatVersion);
  f.write(reinterpret_cast<const char*>(t.hash.data()), 32);
  detail::put(f, static_cast<std::uint32_t>(t.dims));
  detail::put(f, static_cast<std::uint32_t>(t.arrays));
  detail::put(f, static_cast<std::uint32_t>(t.Tmax));
  for (long w : t.w) detail::put(f, static_cast<std::uint32_t>(w));
  for (const auto& rs : t.rows)
    for (const auto& ru : rs)
      for (const auto& r : ru) {
        for (long e : r.extent) detail::put(f, static_cast<std::uint32_t>(e));
        for (const auto& v : r.c) {
          detail::put(f, v.hi);
          detail::put(f, v.lo);
        }
      }
  if (!f) throw Error(ErrorCode::IoError, "write failed for " + path);
}

inline CoeffTable load_table(const std::string& path, std::optional<SpecHash> expect = std::nullopt) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::IoError, "cannot open " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, detail::kMagic, 4) != 0)
    throw Error(ErrorCode::FormatVersionMismatch, "bad magic in " + path);
  if (detail::get<std::uint32_t>(f) != detail::kFormatVersion)
    throw Error(ErrorCode::FormatVersionMismatch, "unsupported version in " + path);
  CoeffTable t;
  f.read(reinterpret_cast<char*>(t.hash.data()), 32);
  if (!f) throw Error(ErrorCode::IoError, "truncated table file");
  if (expect && *expect != t.hash) throw Error(ErrorCode::SpecHashMismatch, path);
  t.dims = static_cast<int>(detail::get<std::uint32_t>(f));
  t.arrays = static_cast<int>(detail::get<std::uint32_t>(f));
  t.Tmax = static_cast<int>(detail::get<std::uint32_t>(f));
  if (t.dims < 1 || t.dims > 8 || t.arrays < 1 || t.arrays > 64 || t.Tmax < 1)
    throw Error(ErrorCode::FormatVersionMismatch, "implausible header in " + path);
  for (int d = 0; d < t.dims; ++d) t.w.push_back(detail::get<std::uint32_t>(f));
  for (int k = 1; k <= t.Tmax; ++k) {
    RowSet rs(t.arrays, std::vector<CoeffRow>(t.arrays, CoeffRow(k, t.w)));
    for (auto& ru : rs)
      for (auto& r : ru) {
        for (int d = 0; d < t.dims; ++d)
          if (static_cast<long>(detail::get<std::uint32_t>(f)) != r.extent[d])
            throw Error(ErrorCode::FormatVersionMismatch, "row extent mismatch in " + path);
        for (auto& v : r.c) {
          v.hi = detail::get<double>(f);
          v.lo = detail::get<double>(f);
        }
      }
    t.rows.push_back(std::move(rs));
  }
  return t;
}

}  // namespace sdcguard
