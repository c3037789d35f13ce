#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdcguard/coeff_table.hpp"
#include "sdcguard/error_bound.hpp"

namespace sdcguard {

struct WeightedSupport {
  std::vector<Interval> points;
  Interval total;
  std::vector<Interval> partial;  // S_{Y\i}
};

inline Interval product_interval(const DoubleDouble& c, double xlo, double xhi) {
  double cl = c.round_down(), ch = c.round_up();
  double a = mul_down(cl, xlo), b = mul_down(cl, xhi);
  double e = mul_up(ch, xlo), f = mul_up(ch, xhi);
  return {std::fmin(a, b), std::fmax(e, f)};
}

inline WeightedSupport build_support(const std::vector<const CoeffRow*>& rows, double xlo, double xhi) {
  WeightedSupport s;
  for (const CoeffRow* r : rows)
    for (const auto& c : r->c) s.points.push_back(product_interval(c, xlo, xhi));
  for (const auto& y : s.points) s.total = s.total + y;
  s.partial.reserve(s.points.size());
  for (const auto& y : s.points)
    s.partial.push_back(s.points.size() == 1 ? Interval{} : remove_term(s.total, y));
  return s;
}

inline WeightedSupport build_support(const CoeffRow& row, double xlo, double xhi) {
  return build_support(std::vector<const CoeffRow*>{&row}, xlo, xhi);
}

inline int max_contrib(const WeightedSupport& s, size_t i, int p) {
  if (s.points.size() == 1) return p;
  long long d = static_cast<long long>(exponent_of(s.partial[i].mag_lo())) - exponent_of(s.points[i].mag_hi());
  if (s.points[i].mag_hi() == 0) return -(1 << 20);
  if (s.partial[i].mag_lo() == 0) return p;
  return p - static_cast<int>(std::max(0LL, d));
}

inline int min_contrib(const WeightedSupport& s, size_t i, int dp) {
  if (s.points[i].mag_lo() == 0) return -(1 << 20);
  if (s.points.size() == 1 || s.partial[i].mag_hi() == 0) return dp;
  long long d = static_cast<long long>(exponent_of(s.partial[i].mag_hi())) - exponent_of(s.points[i].mag_lo());
  return dp - static_cast<int>(std::max(0LL, d));
}

// Bits a point must give up before its top-udp flip is guaranteed visible: the larger of
// d_max and the gap to the exponent of the full sum.
inline constexpr int kNeverProtected = 1 << 20;
inline int protection_need(const WeightedSupport& s, size_t i) {
  if (s.points[i].mag_lo() == 0) return kNeverProtected;
  const int ey = exponent_of(s.points[i].mag_lo());
  long long dmax = 0;
  if (s.points.size() > 1 && s.partial[i].mag_hi() != 0)
    dmax = std::max(0LL, static_cast<long long>(exponent_of(s.partial[i].mag_hi())) - ey);
  long long gap = static_cast<long long>(exponent_of(s.total.mag_hi())) - ey;
  return static_cast<int>(std::max({0LL, dmax, gap}));
}

struct EssentialWidth {
  Index left;
  Index right;
  Index total() const {
    Index t(left.size());
    for (size_t d = 0; d < left.size(); ++d) t[d] = left[d] + right[d] + 1;
    return t;
  }
  long volume() const {
    long v = 1;
    for (long x : total()) v *= x;
    return v;
  }
  template <class It>
  bool contains(It off) const {
    for (size_t d = 0; d < left.size(); ++d)
      if (off[d] < -left[d] || off[d] > right[d]) return false;
    return true;
  }
  bool contains(const Index& off) const { return contains(off.begin()); }
};

inline EssentialWidth ew_union(const EssentialWidth& a, const EssentialWidth& b) {
  EssentialWidth r = a;
  for (size_t d = 0; d < a.left.size(); ++d) {
    r.left[d] = std::max(a.left[d], b.left[d]);
    r.right[d] = std::max(a.right[d], b.right[d]);
  }
  return r;
}

// Nonzero entries of one target's k-step rows (all sources), with the offsets, rings and
// rounded coefficient bounds needed to evaluate supports against [1, X] for any X.
struct RowGeometry {
  struct Parts {
    double plo = 0, phi = 0;  // positive coefficients
    double nlo = 0, nhi = 0;  // negative coefficients
    double abs = 0;
    void add(double cl, double ch) {
      if (cl >= 0) {
        plo = add_down(plo, cl);
        phi = add_up(phi, ch);
      } else if (ch <= 0) {
        nlo = add_down(nlo, cl);
        nhi = add_up(nhi, ch);
      } else {
        nlo = add_down(nlo, cl);
        phi = add_up(phi, ch);
      }
      abs = add_up(abs, std::fmax(std::fabs(cl), std::fabs(ch)));
    }
    Interval over(double X) const { return {add_down(plo, nlo * X), add_up(phi * X, nhi)}; }
  };

  int D = 0;
  int k = 0;
  std::vector<int> off;  // D per entry
  std::vector<int> cheb, ring;
  std::vector<char> evolving;
  std::vector<int> src;
  std::vector<double> cl, ch;
  Index sideL, sideR;
  int rmax = 0;
  Parts total;
  std::vector<Parts> rings;

  RowGeometry(const StencilSpec& s, const RowSet& rs, int u) {
    D = s.dims;
    k = rs[u][0].k;
    sideL.assign(D, 0);
    sideR.assign(D, 0);
    for (int v = 0; v < s.arrays; ++v) {
      const CoeffRow& r = rs[u][v];
      const bool ev = !s.is_static(v);
      std::vector<long> o(D);
      for (size_t j = 0; j < r.c.size(); ++j) {
        if (r.c[j].is_zero()) continue;
        long idx = static_cast<long>(j);
        int cb = 0;
        for (int d = D - 1; d >= 0; --d) {
          o[d] = idx % r.extent[d] - r.half[d];
          idx /= r.extent[d];
        }
        for (int d = 0; d < D; ++d) {
          off.push_back(static_cast<int>(o[d]));
          cb = std::max(cb, static_cast<int>(std::labs(o[d])));
          sideL[d] = std::max(sideL[d], -o[d]);
          sideR[d] = std::max(sideR[d], o[d]);
        }
        cheb.push_back(cb);
        evolving.push_back(ev);
        src.push_back(v);
        cl.push_back(r.c[j].round_down());
        ch.push_back(r.c[j].round_up());
      }
    }
    for (int d = 0; d < D; ++d) rmax = static_cast<int>(std::max({static_cast<long>(rmax), sideL[d], sideR[d]}));
    rings.assign(rmax + 1, Parts{});
    ring.resize(size());
    for (size_t i = 0; i < size(); ++i) {
      long best = 0;
      bool any = false;
      for (int d = 0; d < D; ++d) {
        int x = off[i * D + d];
        if (x == 0) continue;
        long r = (x < 0 ? sideL[d] : sideR[d]) - std::abs(x) + 1;
        best = any ? std::min(best, r) : r;
        any = true;
      }
      ring[i] = any ? static_cast<int>(best) : 0;
      rings[ring[i]].add(cl[i], ch[i]);
      total.add(cl[i], ch[i]);
    }
  }

  size_t size() const { return cl.size(); }
  Interval point(size_t i, double X) const {
    if (cl[i] >= 0) return {cl[i], ch[i] * X};
    if (ch[i] <= 0) return {cl[i] * X, ch[i]};
    return {cl[i] * X, ch[i] * X};
  }

  // Largest ring shrink whose collective excluded sum cannot reach dp bits of the retained sum.
  int shrink_for(int dp, double X) const {
    std::vector<Interval> retained(rmax + 2);
    for (int r = rmax; r >= 1; --r) retained[r] = retained[r + 1] + rings[r].over(X);
    const Interval center = rings[0].over(X);
    Interval excluded{};
    int best = 0;
    for (int r = 1; r <= rmax; ++r) {
      excluded = excluded + rings[r].over(X);
      Interval keep = retained[r + 1] + center;
      double ex = excluded.mag_hi(), kp = keep.mag_lo();
      bool ok = ex == 0 || (kp != 0 && static_cast<long long>(exponent_of(kp)) - exponent_of(ex) >= dp);
      if (!ok) break;
      best = r;
    }
    return best;
  }

  EssentialWidth width_for(int dp, double X) const {
    int r = shrink_for(dp, X);
    EssentialWidth e;
    for (int d = 0; d < D; ++d) {
      e.left.push_back(std::max(0L, sideL[d] - r));
      e.right.push_back(std::max(0L, sideR[d] - r));
    }
    return e;
  }

  // |c| sums inside and outside a region.
  std::pair<double, double> split_abs(const EssentialWidth& ew, long* count = nullptr) const {
    double in = 0, out = 0;
    long n = 0;
    for (size_t i = 0; i < size(); ++i) {
      double a = std::fmax(std::fabs(cl[i]), std::fabs(ch[i]));
      if (ew.contains(off.begin() + static_cast<long>(i) * D)) {
        in = add_up(in, a);
        ++n;
      } else {
        out = add_up(out, a);
      }
    }
    if (count) *count = n;
    return {in, out};
  }
};

inline EssentialWidth essential_width(const StencilSpec& s, const RowSet& rs, int u, int width, int dp) {
  return RowGeometry(s, rs, u).width_for(dp, std::ldexp(1.0, width));
}

inline double direct_error_bound(const StencilSpec& s, int T, int width, const CoeffTable& t,
                                  const EssentialWidth& ew, const FloatModel& m = {}, int u = 0, int exp_max = 20) {
  check_width(width, exp_max);
  if (T < 1 || T > t.Tmax) throw Error(ErrorCode::TstepOutOfRange, "T=" + std::to_string(T));
  RowStats st = row_stats(t, T);
  long n = 0;
  auto [in, out] = RowGeometry(s, t.step(T), u).split_abs(ew, &n);
  return estimate_errors(s, st, u, T, width, in, n, out, m).Rd;
}

// Chebyshev radius and protection need of every evolving-source point of a target's rows.
struct NeedPoint {
  int cheb;
  int need;
};

// Need per geometry entry; static sources are never protected.
inline std::vector<int> entry_needs(const RowGeometry& g, double X) {
  const Interval total = g.total.over(X);
  const int etot = exponent_of(total.mag_hi());
  std::vector<int> out(g.size(), kNeverProtected);
  for (size_t i = 0; i < g.size(); ++i) {
    if (!g.evolving[i]) continue;
    Interval y = g.point(i, X);
    if (y.mag_lo() == 0) continue;
    const long long ey = exponent_of(y.mag_lo());
    long long need = std::max(0LL, etot - ey);
    if (g.size() > 1) {
      double part = remove_term(total, y).mag_hi();
      if (part != 0) need = std::max(need, exponent_of(part) - ey);
    }
    out[i] = static_cast<int>(need);
  }
  return out;
}

inline std::vector<NeedPoint> protection_needs(const RowGeometry& g, double X) {
  std::vector<int> need = entry_needs(g, X);
  std::vector<NeedPoint> out;
  out.reserve(g.size());
  for (size_t i = 0; i < g.size(); ++i)
    if (g.evolving[i]) out.push_back({g.cheb[i], need[i]});
  return out;
}

// Largest centered square region (half-width h) whose points all satisfy need <= dp - udp;
// returns -1 when even the center fails.
inline int protected_half_width(const std::vector<NeedPoint>& pts, int limit_h, int dp, int udp) {
  int bad = limit_h + 1;
  for (const auto& p : pts)
    if (p.need > dp - udp) bad = std::min(bad, p.cheb);
  return bad - 1;
}

// Pyramid trim over look-back t in [0, rho]: component-wise minimum across rows T-t.
inline Index protected_width(const StencilSpec& s, const CoeffTable& t, int width, int dp, int udp, int rho, int T) {
  if (udp > dp || udp < 1) throw Error(ErrorCode::EmptyProtectedRegion, "udp outside [1, dp]");
  if (rho > T || rho < 1) throw Error(ErrorCode::InvalidArgument, "rho must be in [1, T]");
  const double X = std::ldexp(1.0, width);
  const long wmax = *std::max_element(t.w.begin(), t.w.end());
  long h = std::numeric_limits<long>::max();
  for (int lb = 0; lb <= rho; ++lb) {
    const int k = T - lb;
    const RowSet rs = k == 0 ? identity_rows(s) : t.step(k);
    for (int u : s.evolving()) {
      RowGeometry g(s, rs, u);
      h = std::min<long>(h, protected_half_width(protection_needs(g, X), static_cast<int>(k * wmax), dp, udp));
    }
  }
  if (h < 0) throw Error(ErrorCode::EmptyProtectedRegion, "no point carries the requested bits");
  return Index(s.dims, 2 * h + 1);
}

inline double interior_factor(int T, const Index& N, const Index& w) {
  double f = 1;
  for (size_t d = 0; d < N.size(); ++d) {
    double in = static_cast<double>(N[d]) - 2.0 * static_cast<double>(w[d]) * T;
    f *= in <= 0 ? 0.0 : in / static_cast<double>(N[d]);
  }
  return f;
}

inline double coverage_fraction(double inbox_fraction, int T, const Index& N, const Index& w) {
  return interior_factor(T, N, w) * inbox_fraction;
}

inline std::optional<double> adjust_coverage(double cov, double interiorFrac) {
  if (cov == 0) return 0.0;
  if (interiorFrac <= 0) return std::nullopt;
  double in = cov / interiorFrac;
  if (in > 1) return std::nullopt;
  return in;
}

inline double config_cost(const EssentialWidth& ew, const Index& pw, int rho) {
  double c = 1.0 / rho;
  Index tot = ew.total();
  for (size_t d = 0; d < pw.size(); ++d) c *= static_cast<double>(tot[d]) / static_cast<double>(pw[d]);
  return c;
}

struct DetectorConfig {
  int width = 0;
  int T = 0;
  int rho = 0;
  int dp = 0;
  Index pw;
  EssentialWidth ew;
  double cost = 0;
  double coverage = 0;     // in-box covered fraction
  std::vector<int> sexp;   // exp of the support-sum upper bound per target (canonical units)
};

inline nlohmann::json config_to_json(const DetectorConfig& c) {
  return {{"T", c.T},         {"rho", c.rho},       {"dp", c.dp},   {"pw", c.pw},
          {"ewl", c.ew.left}, {"ewr", c.ew.right},  {"cost", c.cost}, {"coverage", c.coverage},
          {"sexp", c.sexp},   {"width", c.width}};
}

inline DetectorConfig config_from_json(const nlohmann::json& j) {
  DetectorConfig c;
  c.T = j.at("T");
  c.rho = j.at("rho");
  c.dp = j.at("dp");
  c.pw = j.at("pw").get<Index>();
  c.ew.left = j.at("ewl").get<Index>();
  c.ew.right = j.at("ewr").get<Index>();
  c.cost = j.at("cost");
  c.coverage = j.at("coverage");
  c.sexp = j.value("sexp", std::vector<int>{});
  c.width = j.value("width", 0);
  return c;
}

struct LutCell {
  DetectorConfig best;
  std::vector<DetectorConfig> frontier;  // best config under successively smaller T caps
};

struct ConfigLUT {
  std::string specHash;
  int Tmax = 0;
  std::vector<int> exps, udps, covs;
  std::map<std::string, std::optional<LutCell>> entries;
  std::map<int, std::vector<int>> maxdp;  // per width, index T-1
  bool latticeCoverage = false;

  static std::string key(int e, int u, int c) {
    return "e" + std::to_string(e) + ":u" + std::to_string(u) + ":c" + std::to_string(c);
  }
  const std::optional<LutCell>* find(int e, int u, int c) const {
    auto it = entries.find(key(e, u, c));
    return it == entries.end() ? nullptr : &it->second;
  }
};

inline nlohmann::json lut_to_json(const ConfigLUT& l) {
  nlohmann::json j;
  j["spec_hash"] = l.specHash;
  j["tmax"] = l.Tmax;
  j["exps"] = l.exps;
  j["udps"] = l.udps;
  j["covs"] = l.covs;
  j["coverage_model"] = l.latticeCoverage ? "lattice" : "box";
  nlohmann::json md = nlohmann::json::object();
  for (const auto& [e, v] : l.maxdp) md[std::to_string(e)] = v;
  j["maxdp"] = md;
  nlohmann::json ent = nlohmann::json::object();
  for (const auto& [k, v] : l.entries) {
    if (!v) {
      ent[k] = "infeasible";
      continue;
    }
    nlohmann::json c = config_to_json(v->best);
    c["frontier"] = nlohmann::json::array();
    for (const auto& f : v->frontier) c["frontier"].push_back(config_to_json(f));
    ent[k] = c;
  }
  j["entries"] = ent;
  return j;
}

inline ConfigLUT lut_from_json(const nlohmann::json& j) {
  ConfigLUT l;
  try {
    l.specHash = j.at("spec_hash");
    l.Tmax = j.at("tmax");
    l.exps = j.at("exps").get<std::vector<int>>();
    l.udps = j.at("udps").get<std::vector<int>>();
    l.covs = j.at("covs").get<std::vector<int>>();
    l.latticeCoverage = j.value("coverage_model", "box") == "lattice";
    for (const auto& [e, v] : j.at("maxdp").items()) l.maxdp[std::stoi(e)] = v.get<std::vector<int>>();
    for (const auto& [k, v] : j.at("entries").items()) {
      if (v.is_string()) {
        l.entries[k] = std::nullopt;
        continue;
      }
      LutCell cell{config_from_json(v), {}};
      for (const auto& f : v.value("frontier", nlohmann::json::array())) cell.frontier.push_back(config_from_json(f));
      l.entries[k] = cell;
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedInput, e.what());
  }
  return l;
}

namespace detail {

// cum[h * levels + l]: points of the half-width-h box with need <= l.
struct NeedHistogram {
  int hmax = 0;
  int levels = 0;
  std::vector<std::uint32_t> cum;

  NeedHistogram(const std::vector<NeedPoint>& pts, int hmax_, int levels_) : hmax(hmax_), levels(levels_) {
    cum.assign(static_cast<size_t>(hmax + 1) * levels, 0);
    for (const auto& p : pts)
      if (p.need < levels && p.cheb <= hmax) ++cum[static_cast<size_t>(p.cheb) * levels + p.need];
    accumulate_levels();
    for (int h = 1; h <= hmax; ++h)
      for (int l = 0; l < levels; ++l) cum[static_cast<size_t>(h) * levels + l] += cum[static_cast<size_t>(h - 1) * levels + l];
  }

  // Lattice form: a point also counts when a detector one spacing away along an axis covers it.
  NeedHistogram(const RowGeometry& g, const std::vector<int>& need, int hcap, int levels_)
      : hmax(hcap), levels(levels_) {
    cum.assign(static_cast<size_t>(hmax + 1) * levels, 0);
    const int D = g.D;
    const long R = 3L * hcap + 1, side = 2 * R + 1;
    std::vector<long> stride(D, 1);
    for (int d = D - 2; d >= 0; --d) stride[d] = stride[d + 1] * side;
    std::map<int, std::vector<int>> dense;
    for (size_t i = 0; i < g.size(); ++i) {
      if (!g.evolving[i]) continue;
      auto& a = dense[g.src[i]];
      if (a.empty()) a.assign(static_cast<size_t>(stride[0] * side), kNeverProtected);
      long idx = 0;
      bool in = true;
      for (int d = 0; d < D; ++d) {
        long o = g.off[i * D + d];
        if (std::labs(o) > R) in = false;
        idx += (o + R) * stride[d];
      }
      if (in) a[idx] = need[i];
    }
    std::vector<long> x(D);
    for (const auto& [v, a] : dense) {
      for (int h = 0; h <= hmax; ++h) {
        const long pw = 2L * h + 1;
        std::fill(x.begin(), x.end(), -h);
        for (;;) {
          long idx = 0;
          for (int d = 0; d < D; ++d) idx += (x[d] + R) * stride[d];
          int m = a[idx];
          for (int d = 0; d < D; ++d) {
            if (x[d] + pw <= R) m = std::min(m, a[idx + pw * stride[d]]);
            if (x[d] - pw >= -R) m = std::min(m, a[idx - pw * stride[d]]);
          }
          if (m < levels) ++cum[static_cast<size_t>(h) * levels + m];
          int d = D - 1;
          while (d >= 0 && ++x[d] > h) x[d--] = -h;
          if (d < 0) break;
        }
      }
    }
    accumulate_levels();
  }

  void accumulate_levels() {
    for (int h = 0; h <= hmax; ++h)
      for (int l = 1; l < levels; ++l) cum[static_cast<size_t>(h) * levels + l] += cum[static_cast<size_t>(h) * levels + l - 1];
  }
  std::uint32_t at(int h, int l) const {
    h = std::min(h, hmax);
    return cum[static_cast<size_t>(h) * levels + l];
  }
};

// Preference order: lower cost, then larger rho, then smaller T, then smaller ew volume.
inline bool better(const DetectorConfig& a, const DetectorConfig& b) {
  if (a.cost != b.cost) return a.cost < b.cost;
  if (a.rho != b.rho) return a.rho > b.rho;
  if (a.T != b.T) return a.T < b.T;
  return a.ew.volume() < b.ew.volume();
}

struct WidthData {
  std::vector<int> maxdp;                    // per T (index T-1)
  std::vector<EssentialWidth> ew;            // per T
  std::vector<std::vector<int>> sexp;        // per T, per evolving target
  std::vector<std::vector<NeedHistogram>> hist;  // per k (index k-1), per evolving target
};

}  // namespace detail

struct ProfileOptions {
  FloatModel model;
  int exp_max = 20;
  int lattice_hcap = 32;
};

// Every update among evolving arrays moves an odd L1 distance, so k-step rows vanish on
// alternate points.
inline bool is_bipartite(const StencilSpec& s) {
  bool any = false;
  for (const auto& pr : s.pairs) {
    if (s.is_static(pr.from) || s.is_static(pr.to)) continue;
    for (const auto& o : pr.offsets) {
      long l1 = 0;
      for (long x : o) l1 += std::labs(x);
      if (l1 % 2 == 0) return false;
      any = true;
    }
  }
  return any;
}

// Certified detector precision for one T: the largest dp not above the bound-derived value
// for which the check threshold covers iterated, direct and trimming error together.
struct TStepAnalysis {
  int dp = 0;
  EssentialWidth ew;
  std::vector<int> sexp;
};

inline TStepAnalysis analyze_tstep(const StencilSpec& s, const RowStats& st, const std::vector<RowGeometry>& geoms,
                                   int T, int width, const FloatModel& m) {
  TStepAnalysis out;
  const double X = std::ldexp(1.0, width);
  const auto targets = s.evolving();
  std::vector<ErrorEstimate> full;
  int dp0 = m.p;
  double dirmax = 0;  // worst direct bound over rows 1..T
  for (size_t i = 0; i < targets.size(); ++i) {
    const int u = targets[i];
    const RowGeometry& g = geoms[i];
    ErrorEstimate e = estimate_errors(s, st, u, T, width, g.total.abs, static_cast<long>(g.size()), 0, m);
    full.push_back(e);
    dp0 = std::min(dp0, e.dp);
    out.sexp.push_back(exponent_of(g.total.over(X).mag_hi()));
    for (int k = 1; k <= T; ++k) {
      long n = s.arrays;
      for (long w : s.width()) n *= 2 * k * w + 1;
      dirmax = std::fmax(dirmax, direct_abs_bound(st.abs_row(u, k), X, n, m));
    }
  }
  for (int dp = dp0; dp >= 1; --dp) {
    EssentialWidth ew = geoms[0].width_for(dp, X);
    for (size_t i = 1; i < geoms.size(); ++i) ew = ew_union(ew, geoms[i].width_for(dp, X));
    bool ok = true;
    for (size_t i = 0; i < targets.size() && ok; ++i) {
      double outside = geoms[i].split_abs(ew).second;
      double budget = add_up(full[i].totalAbs, add_up(mul_up(2, dirmax), mul_up(outside, X)));
      if (out.sexp[i] == kExpNegInf || std::ldexp(1.0, out.sexp[i] - dp + 1) < budget) ok = false;
    }
    if (ok) {
      out.dp = dp;
      out.ew = ew;
      return out;
    }
  }
  out.dp = 0;
  return out;
}

inline ConfigLUT offline_profile(const StencilSpec& s, const CoeffTable* table, int Tmax, const std::vector<int>& expSet,
                                 const std::vector<int>& udpSet, const std::vector<int>& covSet,
                                 const ProfileOptions& opt = {}) {
  if (Tmax < 1) throw Error(ErrorCode::InvalidArgument, "Tmax must be positive");
  if (table && table->Tmax < Tmax) throw Error(ErrorCode::TstepOutOfRange, "table shorter than Tmax");
  for (int e : expSet) check_width(e, opt.exp_max);
  const FloatModel& m = opt.model;
  const int levels = m.p + 1;
  const auto targets = s.evolving();
  const Index wv = s.width();
  const long wmax = *std::max_element(wv.begin(), wv.end());
  const bool lattice = is_bipartite(s);

  std::map<int, detail::WidthData> data;
  for (int e : expSet) {
    auto& d = data[e];
    d.maxdp.resize(Tmax);
    d.ew.resize(Tmax);
    d.sexp.resize(Tmax);
    d.hist.resize(Tmax);
  }

  RowStats st(s.arrays);
  std::optional<RowStream> stream;
  if (!table) stream.emplace(s);
  for (int k = 1; k <= Tmax; ++k) {
    const RowSet& rs = table ? table->step(k) : stream->advance();
    st.add(rs);
    std::vector<RowGeometry> geoms;
    for (int u : targets) geoms.emplace_back(s, rs, u);
    for (int e : expSet) {
      auto& d = data[e];
      const double X = std::ldexp(1.0, e);
      TStepAnalysis a = analyze_tstep(s, st, geoms, k, e, m);
      d.maxdp[k - 1] = a.dp;
      d.ew[k - 1] = a.ew;
      d.sexp[k - 1] = a.sexp;
      for (const auto& g : geoms) {
        if (lattice) d.hist[k - 1].emplace_back(g, entry_needs(g, X), opt.lattice_hcap, levels);
        else d.hist[k - 1].emplace_back(protection_needs(g, X), static_cast<int>(k * wmax), levels);
      }
    }
  }

  ConfigLUT lut;
  lut.specHash = to_hex(spec_hash(s));
  lut.Tmax = Tmax;
  lut.exps = expSet;
  lut.udps = udpSet;
  lut.covs = covSet;
  lut.latticeCoverage = lattice;
  std::vector<int> covSorted = covSet;
  std::sort(covSorted.begin(), covSorted.end());
  std::vector<int> caps;
  for (int c = 1; c < Tmax; c *= 2) caps.push_back(c);
  caps.push_back(Tmax);

  const double nev = static_cast<double>(targets.size());
  (void)nev;
  for (int e : expSet) {
    auto& d = data[e];
    lut.maxdp[e] = d.maxdp;
    // best[udp][cov bucket][T]
    for (int udp : udpSet) {
      std::vector<std::vector<std::optional<DetectorConfig>>> bestT(
          covSorted.size(), std::vector<std::optional<DetectorConfig>>(Tmax));
      for (int T = 1; T <= Tmax; ++T) {
        const int dp = d.maxdp[T - 1];
        const int L = dp - udp;
        if (dp < 1 || L < 0) continue;
        const int hmax = lattice ? opt.lattice_hcap : static_cast<int>(T * wmax);
        // acc[u][h]: qualifying points over the window rows T-rho+1..T
        std::vector<std::vector<double>> acc(targets.size(), std::vector<double>(hmax + 1, 0.0));
        for (int rho = 1; rho <= T; ++rho) {
          const int k = T - rho + 1;
          for (size_t ui = 0; ui < targets.size(); ++ui)
            for (int h = 0; h <= hmax; ++h) acc[ui][h] += d.hist[k - 1][ui].at(h, L);
          if (2 * rho <= T) continue;
          for (int h = 0; h <= hmax; ++h) {
            double box = std::pow(2.0 * h + 1, s.dims) * static_cast<double>(rho) * nev;
            double frac = 1;
            for (size_t ui = 0; ui < targets.size(); ++ui) frac = std::min(frac, acc[ui][h] / box);
            int ci = -1;
            for (size_t c = 0; c < covSorted.size(); ++c)
              if (frac + 1e-12 >= covSorted[c] / 100.0) ci = static_cast<int>(c);
            if (ci < 0) continue;
            DetectorConfig cfg;
            cfg.width = e;
            cfg.T = T;
            cfg.rho = rho;
            cfg.dp = dp;
            cfg.pw = Index(s.dims, 2 * h + 1);
            cfg.ew = d.ew[T - 1];
            cfg.cost = config_cost(cfg.ew, cfg.pw, rho);
            cfg.coverage = frac;
            cfg.sexp = d.sexp[T - 1];
            auto& slot = bestT[ci][T - 1];
            if (!slot || detail::better(cfg, *slot)) slot = cfg;
          }
        }
      }
      // A config meeting a higher coverage also meets every lower one.
      for (int c = static_cast<int>(covSorted.size()) - 2; c >= 0; --c)
        for (int T = 1; T <= Tmax; ++T) {
          auto& hi = bestT[c + 1][T - 1];
          auto& lo = bestT[c][T - 1];
          if (hi && (!lo || detail::better(*hi, *lo))) lo = hi;
        }
      for (size_t c = 0; c < covSorted.size(); ++c) {
        std::optional<LutCell> cell;
        std::optional<DetectorConfig> run;
        int capi = 0;
        std::vector<DetectorConfig> capped;
        for (int T = 1; T <= Tmax; ++T) {
          const auto& cand = bestT[c][T - 1];
          if (cand && (!run || detail::better(*cand, *run))) run = cand;
          if (capi < static_cast<int>(caps.size()) && T == caps[capi]) {
            if (run && (capped.empty() || !(capped.back().T == run->T && capped.back().rho == run->rho &&
                                             capped.back().pw == run->pw)))
              capped.push_back(*run);
            ++capi;
          }
        }
        if (run) cell = LutCell{*run, capped};
        lut.entries[ConfigLUT::key(e, udp, covSorted[c])] = cell;
      }
    }
  }
  return lut;
}

}  // namespace sdcguard
