#pragma once

#include <openssl/sha.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdcguard/errors.hpp"
#include "sdcguard/float_model.hpp"

namespace sdcguard {

using Index = std::vector<long>;

enum class BoundaryKind { DirichletFixed, DirichletTimeDependent, Neumann };

inline const char* to_string(BoundaryKind k) {
  switch (k) {
    case BoundaryKind::DirichletFixed: return "DirichletFixed";
    case BoundaryKind::DirichletTimeDependent: return "DirichletTimeDependent";
    case BoundaryKind::Neumann: return "Neumann";
  }
  return "?";
}

struct BoundaryCondition {
  BoundaryKind kind = BoundaryKind::DirichletFixed;
  // Dirichlet: the boundary value. Neumann: the additive ghost offset h*du/dn.
  std::function<double(int array, const Index& point, long t)> value;
};

struct StencilPair {
  int to = 0;
  int from = 0;
  std::vector<Index> offsets;
  std::vector<double> coeffs;
};

struct StencilSpec {
  int dims = 1;
  int arrays = 1;
  Index lower;
  Index upper;
  std::vector<StencilPair> pairs;
  BoundaryCondition boundary;

  Index width() const {
    Index w(dims, 0);
    for (const auto& pr : pairs)
      for (const auto& o : pr.offsets)
        for (int d = 0; d < dims; ++d) w[d] = std::max(w[d], std::labs(o[d]));
    return w;
  }
  Index extent() const {
    Index e(dims);
    for (int d = 0; d < dims; ++d) e[d] = upper[d] - lower[d] + 1;
    return e;
  }
  long points() const {
    long n = 1;
    for (long e : extent()) n *= e;
    return n;
  }

  // Arrays whose only update is the identity copy hold time-invariant fields (forcing terms).
  bool is_static(int a) const {
    int n = 0;
    bool identity = true;
    for (const auto& pr : pairs) {
      if (pr.to != a) continue;
      ++n;
      if (pr.from != a || pr.offsets.size() != 1 || pr.coeffs[0] != 1.0) identity = false;
      else
        for (long c : pr.offsets[0])
          if (c != 0) identity = false;
    }
    return n == 1 && identity;
  }
  std::vector<int> evolving() const {
    std::vector<int> r;
    for (int a = 0; a < arrays; ++a)
      if (!is_static(a)) r.push_back(a);
    return r;
  }

  void validate() const {
    if (dims < 1 || arrays < 1) throw Error(ErrorCode::ShapeMismatch, "dims and arrays must be positive");
    if (static_cast<int>(lower.size()) != dims || static_cast<int>(upper.size()) != dims)
      throw Error(ErrorCode::ShapeMismatch, "bounds need one entry per dimension");
    for (int d = 0; d < dims; ++d)
      if (lower[d] >= upper[d]) throw Error(ErrorCode::ShapeMismatch, "lower must be below upper");
    for (const auto& pr : pairs) {
      if (pr.to < 0 || pr.to >= arrays || pr.from < 0 || pr.from >= arrays)
        throw Error(ErrorCode::ShapeMismatch, "pair array index out of range");
      if (pr.offsets.size() != pr.coeffs.size())
        throw Error(ErrorCode::ShapeMismatch, "offsets and coeffs differ in length");
      for (const auto& o : pr.offsets)
        if (static_cast<int>(o.size()) != dims) throw Error(ErrorCode::ShapeMismatch, "offset rank");
    }
  }
};

// Stability gate. Sums exclude static forcing arrays; negative weights are allowed
// only when the caller asks (leapfrog schemes carry a -1 on the previous level).
inline void check_stability(const StencilSpec& s, bool allow_negative) {
  const double tol = 64 * std::numeric_limits<double>::epsilon();
  for (int x = 0; x < s.arrays; ++x) {
    if (s.is_static(x)) continue;
    double sum = 0;
    for (const auto& pr : s.pairs) {
      if (pr.to != x) continue;
      for (double c : pr.coeffs) {
        if (std::fabs(c) > 1.0 + tol)
          throw Error(ErrorCode::UnstableDiscretization, "coefficient magnitude above 1");
        if (s.is_static(pr.from)) continue;
        if (c < 0 && !allow_negative)
          throw Error(ErrorCode::UnstableDiscretization, "negative coefficient");
        sum += c;
      }
    }
    if (sum > 1.0 + tol) throw Error(ErrorCode::UnstableDiscretization, "coefficient sum above 1");
  }
}

struct GridState {
  std::vector<std::vector<double>> data;
  long time = 0;
  std::vector<std::vector<double>> scratch;
};

inline GridState make_state(const StencilSpec& s) {
  GridState g;
  g.data.assign(s.arrays, std::vector<double>(s.points(), 0.0));
  return g;
}

// Row-major linear indexing over the local box [0, extent).
struct Layout {
  Index extent;
  Index stride;

  explicit Layout(const StencilSpec& s) : extent(s.extent()), stride(s.dims) {
    long st = 1;
    for (int d = s.dims - 1; d >= 0; --d) {
      stride[d] = st;
      st *= extent[d];
    }
  }
  long size() const { return extent.empty() ? 0 : extent[0] * stride[0]; }
  long linear(const Index& local) const {
    long k = 0;
    for (size_t d = 0; d < local.size(); ++d) k += local[d] * stride[d];
    return k;
  }
  Index local(long k) const {
    Index r(extent.size());
    for (size_t d = 0; d < extent.size(); ++d) {
      r[d] = k / stride[d];
      k %= stride[d];
    }
    return r;
  }
  long delta(const Index& off) const { return linear(off); }
};

inline bool is_interior(const Index& local, const Index& extent, const Index& w) {
  for (size_t d = 0; d < local.size(); ++d)
    if (local[d] < w[d] || local[d] >= extent[d] - w[d]) return false;
  return true;
}

struct StepTerm {
  int from;
  long delta;
  double coeff;
};

// Precomputed iteration structure for one spec.
struct StepPlan {
  Layout layout;
  Index w;
  std::vector<int> targets;
  std::vector<std::vector<StepTerm>> terms;   // per target, declared order
  std::vector<std::pair<long, long>> rows;    // interior runs [begin, end) in linear index
  std::vector<long> ring;                      // boundary points, linear index
  std::vector<Index> ring_global;
  std::vector<long> ring_inner;                // nearest interior point per ring point

  explicit StepPlan(const StencilSpec& s) : layout(s), w(s.width()), targets(s.evolving()) {
    terms.resize(s.arrays);
    for (const auto& pr : s.pairs) {
      if (s.is_static(pr.to)) continue;
      for (size_t k = 0; k < pr.offsets.size(); ++k)
        terms[pr.to].push_back({pr.from, layout.delta(pr.offsets[k]), pr.coeffs[k]});
    }
    const int D = s.dims;
    for (int d = 0; d < D; ++d)
      if (layout.extent[d] <= 2 * w[d]) throw Error(ErrorCode::ShapeMismatch, "grid has no interior");
    long n = layout.size();
    for (long k = 0; k < n; ++k) {
      Index loc = layout.local(k);
      if (is_interior(loc, layout.extent, w)) continue;
      ring.push_back(k);
      Index g(D), in(D);
      for (int d = 0; d < D; ++d) {
        g[d] = loc[d] + s.lower[d];
        in[d] = std::clamp(loc[d], w[d], layout.extent[d] - 1 - w[d]);
      }
      ring_global.push_back(g);
      ring_inner.push_back(layout.linear(in));
    }
    // Interior runs along the innermost dimension.
    long inner = layout.extent[D - 1];
    for (long k = 0; k < n; k += inner) {
      Index loc = layout.local(k);
      bool ok = true;
      for (int d = 0; d < D - 1; ++d)
        if (loc[d] < w[d] || loc[d] >= layout.extent[d] - w[d]) ok = false;
      if (ok) rows.push_back({k + w[D - 1], k + inner - w[D - 1]});
    }
  }
};

inline double apply_terms(const std::vector<StepTerm>& ts, const std::vector<const double*>& src, long i) {
  double acc = ts[0].coeff * src[ts[0].from][i + ts[0].delta];
  for (size_t k = 1; k < ts.size(); ++k) acc = acc + ts[k].coeff * src[ts[k].from][i + ts[k].delta];
  return acc;
}

inline void apply_boundary(GridState& g, const StencilSpec& s, const StepPlan& plan, long t) {
  if (!s.boundary.value) return;
  for (int x : plan.targets) {
    auto& a = g.data[x];
    for (size_t r = 0; r < plan.ring.size(); ++r) {
      double v = s.boundary.value(x, plan.ring_global[r], t);
      if (s.boundary.kind == BoundaryKind::Neumann) a[plan.ring[r]] = a[plan.ring_inner[r]] + v;
      else a[plan.ring[r]] = v;
    }
  }
}

inline void check_shape(const GridState& g, const StencilSpec& s) {
  if (static_cast<int>(g.data.size()) != s.arrays) throw Error(ErrorCode::ShapeMismatch, "array count");
  for (const auto& a : g.data)
    if (static_cast<long>(a.size()) != s.points()) throw Error(ErrorCode::ShapeMismatch, "array extent");
}

inline void step_iterated(GridState& g, const StencilSpec& s, const StepPlan& plan) {
  check_shape(g, s);
  if (g.scratch.size() != g.data.size()) g.scratch = g.data;
  std::vector<const double*> src(s.arrays);
  for (int a = 0; a < s.arrays; ++a) src[a] = g.data[a].data();
  for (int x : plan.targets) {
    double* dst = g.scratch[x].data();
    const auto& ts = plan.terms[x];
    for (auto [b, e] : plan.rows)
      for (long i = b; i < e; ++i) dst[i] = apply_terms(ts, src, i);
  }
  for (int x : plan.targets) std::swap(g.data[x], g.scratch[x]);
  g.time += 1;
  apply_boundary(g, s, plan, g.time);
}

inline void step_iterated(GridState& g, const StencilSpec& s) { step_iterated(g, s, StepPlan(s)); }

inline void run_iterated(GridState& g, const StencilSpec& s, long steps) {
  if (steps < 0) throw Error(ErrorCode::InvalidArgument, "negative step count");
  if (steps == 0) return;
  StepPlan plan(s);
  for (long k = 0; k < steps; ++k) step_iterated(g, s, plan);
}

struct ExponentRange {
  int e_min = 0;
  int e_max = 0;
  int width = 0;  // 0 only for all-zero input
  bool all_zero = false;
  int canonical_width() const { return width == 0 ? 1 : width; }
};

inline ExponentRange scan_exponent_range(const GridState& g) {
  double lo = kInf, hi = 0;
  for (const auto& a : g.data)
    for (double v : a) {
      double m = std::fabs(v);
      if (m == 0 || !std::isfinite(m)) continue;
      lo = std::min(lo, m);
      hi = std::max(hi, m);
    }
  ExponentRange r;
  if (hi == 0) {
    r.all_zero = true;
    return r;
  }
  r.e_min = exponent_of(lo);
  r.e_max = exponent_of(hi);
  r.width = r.e_max - r.e_min + 1;
  return r;
}

// JSON form; the boundary value function is reduced to a constant when serialized.
inline nlohmann::json spec_to_json(const StencilSpec& s) {
  nlohmann::json j;
  j["dims"] = s.dims;
  j["arrays"] = s.arrays;
  j["lower"] = s.lower;
  j["upper"] = s.upper;
  j["pairs"] = nlohmann::json::array();
  for (const auto& pr : s.pairs)
    j["pairs"].push_back({{"to", pr.to}, {"from", pr.from}, {"offsets", pr.offsets}, {"coeffs", pr.coeffs}});
  j["boundary"] = {{"kind", to_string(s.boundary.kind)}};
  return j;
}

inline StencilSpec spec_from_json(const nlohmann::json& j) {
  StencilSpec s;
  try {
    s.dims = j.at("dims").get<int>();
    s.arrays = j.at("arrays").get<int>();
    s.lower = j.at("lower").get<Index>();
    s.upper = j.at("upper").get<Index>();
    for (const auto& p : j.at("pairs")) {
      StencilPair pr;
      pr.to = p.at("to").get<int>();
      pr.from = p.at("from").get<int>();
      pr.offsets = p.at("offsets").get<std::vector<Index>>();
      pr.coeffs = p.at("coeffs").get<std::vector<double>>();
      s.pairs.push_back(pr);
    }
    std::string kind = "DirichletFixed";
    double value = 0;
    if (j.contains("boundary")) {
      kind = j["boundary"].value("kind", kind);
      value = j["boundary"].value("value", 0.0);
    }
    if (kind == "DirichletFixed") s.boundary.kind = BoundaryKind::DirichletFixed;
    else if (kind == "DirichletTimeDependent") s.boundary.kind = BoundaryKind::DirichletTimeDependent;
    else if (kind == "Neumann") s.boundary.kind = BoundaryKind::Neumann;
    else throw Error(ErrorCode::MalformedInput, "unknown boundary kind " + kind);
    s.boundary.value = [value](int, const Index&, long) { return value; };
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedInput, e.what());
  }
  s.validate();
  return s;
}

using SpecHash = std::array<std::uint8_t, 32>;

inline SpecHash spec_hash(const StencilSpec& s) {
  std::string text = spec_to_json(s).dump();
  SpecHash h{};
  SHA256(reinterpret_cast<const unsigned char*>(text.data()), text.size(), h.data());
  return h;
}

inline std::string to_hex(const SpecHash& h) {
  static const char* digits = "0123456789abcdef";
  std::string r;
  for (auto b : h) {
    r.push_back(digits[b >> 4]);
    r.push_back(digits[b & 15]);
  }
  return r;
}

}  // namespace sdcguard
