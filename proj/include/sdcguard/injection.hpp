#pragma once

#include <algorithm>
#include <atomic>
#include <bit>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "sdcguard/runtime.hpp"

namespace sdcguard {

// Counter-based generator: output i of stream (seed, key) is splitmix64 of a hashed counter.
struct SplitMix64 {
  std::uint64_t state;
  explicit SplitMix64(std::uint64_t seed, std::uint64_t key = 0) : state(seed ^ (key * 0xD1B54A32D192ED03ULL)) {}
  std::uint64_t next() {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }
  // Uniform in [0, n) by rejection.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t lim = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do x = next();
    while (x >= lim);
    return x % n;
  }
};

inline double flip_bit(double v, int bit) {
  if (bit < 0 || bit > 63) throw Error(ErrorCode::InvalidArgument, "bit must be in [0, 63]");
  return std::bit_cast<double>(std::bit_cast<std::uint64_t>(v) ^ (std::uint64_t{1} << bit));
}

// Sign, exponent, and the top udp-1 explicit mantissa bits.
inline bool is_protected_bit(int bit, int udp) { return bit >= 52 || bit >= 53 - udp; }

enum class FaultMode { SingleBit, DoubleBitIn16ByteSection };

struct SoftFaultPlan {
  FaultMode mode = FaultMode::SingleBit;
  long timeStep = 0;
  int array = 0;
  long index = 0;    // SingleBit: point; DoubleBit: 16-byte section
  int bit = 0;       // SingleBit: 0..63; DoubleBit: 0..127 within the section
  int bit2 = 0;      // DoubleBit only
  std::uint64_t seed = 0;
};

inline void inject_soft_fault(GridState& g, const SoftFaultPlan& p) {
  if (g.time != p.timeStep) throw Error(ErrorCode::TimeMismatch, "injection at t=" + std::to_string(g.time));
  if (p.array < 0 || p.array >= static_cast<int>(g.data.size()))
    throw Error(ErrorCode::LocationOutOfRange, "array " + std::to_string(p.array));
  auto& a = g.data[p.array];
  if (p.mode == FaultMode::SingleBit) {
    if (p.index < 0 || p.index >= static_cast<long>(a.size()))
      throw Error(ErrorCode::LocationOutOfRange, "index " + std::to_string(p.index));
    a[p.index] = flip_bit(a[p.index], p.bit);
    return;
  }
  if (p.index < 0 || 2 * p.index + 1 >= static_cast<long>(a.size()))
    throw Error(ErrorCode::LocationOutOfRange, "section " + std::to_string(p.index));
  if (p.bit == p.bit2 || p.bit < 0 || p.bit > 127 || p.bit2 < 0 || p.bit2 > 127)
    throw Error(ErrorCode::InvalidArgument, "two distinct bits in [0, 127] required");
  for (int b : {p.bit, p.bit2}) {
    long at = 2 * p.index + b / 64;
    a[at] = flip_bit(a[at], b % 64);
  }
}

inline long bound_hook(int c, long x, std::optional<int> selected) {
  if (!selected || *selected != c) return x;
  return c % 2 == 0 ? x + 1 : x - 1;
}

inline long access_hook(int id, long index, std::optional<int> selected) {
  if (!selected || *selected != id) return index;
  return index / 2;
}

enum class BugKind { None, LoopBound, ArrayAccess, LoopReorder };

struct TilingParams {
  int timeTile = 4;
  long spaceTile = 24;
};

// Loop ids: tiles 0..D-1, time D, points D+1..2D.
struct Reorder {
  std::string name;
  std::vector<int> order;
  std::vector<int> reversed;
  bool ringFirst = false;
  bool targetsSwapped = false;
  bool legal = true;
};

inline std::vector<Reorder> curated_reorders(const StencilSpec& s) {
  const bool dirichlet = s.boundary.kind != BoundaryKind::Neumann;
  if (s.dims == 2) {
    return {
        {"tiles_yx", {1, 0, 2, 3, 4}, {}, false, false, true},
        {"points_ji", {0, 1, 2, 4, 3}, {}, false, false, true},
        {"tiles_yx_points_ji", {1, 0, 2, 4, 3}, {}, false, false, true},
        {"time_outermost", {2, 0, 1, 3, 4}, {}, false, false, true},
        {"time_between_tiles", {0, 2, 1, 3, 4}, {}, false, false, true},
        {"points_i_reversed", {0, 1, 2, 3, 4}, {3}, false, false, true},
        {"time_inside_i", {0, 1, 3, 2, 4}, {}, false, false, false},
        {"time_inside_j", {0, 1, 3, 4, 2}, {}, false, false, false},
        {"time_inside_j_first", {0, 1, 4, 2, 3}, {}, false, false, false},
        {"time_innermost_ji", {0, 1, 4, 3, 2}, {}, false, false, false},
        {"tiles_x_reversed", {0, 1, 2, 3, 4}, {0}, false, false, false},
        {"tiles_y_reversed", {0, 1, 2, 3, 4}, {1}, false, false, false},
        {"time_reversed", {0, 1, 2, 3, 4}, {2}, false, false, false},
        {"boundary_before_update", {0, 1, 2, 3, 4}, {}, true, false, dirichlet},
        {"targets_swapped", {0, 1, 2, 3, 4}, {}, false, true, true},
    };
  }
  if (s.dims == 1) {
    return {
        {"points_reversed", {0, 1, 2}, {2}, false, false, true},
        {"time_outermost", {1, 0, 2}, {}, false, false, true},
        {"time_inside_points", {0, 2, 1}, {}, false, false, false},
        {"tiles_reversed", {0, 1, 2}, {0}, false, false, false},
        {"time_reversed", {0, 1, 2}, {1}, false, false, false},
        {"time_reversed_points_reversed", {0, 1, 2}, {1, 2}, false, false, false},
        {"tiles_and_points_reversed", {0, 1, 2}, {0, 2}, false, false, false},
        {"time_outermost_points_reversed", {1, 0, 2}, {2}, false, false, true},
        {"time_outermost_tiles_reversed", {1, 0, 2}, {0}, false, false, true},
        {"time_inside_points_reversed", {0, 2, 1}, {2}, false, false, false},
        {"boundary_before_update", {0, 1, 2}, {}, true, false, dirichlet},
        {"targets_swapped", {0, 1, 2}, {}, false, true, true},
        {"time_outermost_boundary_first", {1, 0, 2}, {}, true, false, dirichlet},
        {"time_inside_tiles_reversed", {0, 2, 1}, {0}, false, false, false},
        {"all_reversed", {0, 1, 2}, {0, 1, 2}, false, false, false},
    };
  }
  return {};
}

struct BugSelection {
  BugKind kind = BugKind::None;
  int site = -1;
  std::optional<Reorder> reorder;
};

// Skewed, time-tiled executor with one buffer per time level inside a tile. Every loop bound
// and every array index passes through the bug hooks.
class TiledVariant {
 public:
  TiledVariant(const StencilSpec& s, TilingParams tp, BugSelection bug = {})
      : s_(s), tp_(tp), bug_(std::move(bug)), plan_(s), layout_(s) {
    if (tp_.timeTile < 1 || tp_.spaceTile < 1) throw Error(ErrorCode::IllegalTiling, "tile sizes must be positive");
    if (s.dims < 1 || s.dims > 3) throw Error(ErrorCode::IllegalTiling, "tiled executor supports 1 to 3 dimensions");
    D_ = s.dims;
    ext_ = s.extent();
    w_ = s.width();
    targets_ = s.evolving();
    for (size_t r = 0; r < plan_.ring.size(); ++r) ringsOf_[plan_.ring_inner[r]].push_back(r);
    int id = 0;
    for (int x : targets_) {
      writeSite_[x] = id;
      id += D_;
      for (size_t k = 0; k < plan_.terms[x].size(); ++k, id += D_) readSite_[x].push_back(id);
    }
    accessSites_ = id;
    order_.resize(2 * D_ + 1);
    for (int i = 0; i <= 2 * D_; ++i) order_[i] = i;
    if (bug_.reorder) {
      if (static_cast<int>(bug_.reorder->order.size()) != 2 * D_ + 1)
        throw Error(ErrorCode::IllegalTiling, "reorder does not match loop depth");
      order_ = bug_.reorder->order;
      for (int r : bug_.reorder->reversed) reversed_.push_back(r);
    }
    offs_.resize(s.arrays);
    for (const auto& pr : s.pairs)
      if (!s.is_static(pr.to))
        for (const auto& o : pr.offsets) offs_[pr.to].push_back(o);
  }

  int bound_sites() const { return 2 * (2 * D_ + 1); }
  int access_sites() const { return accessSites_; }
  long reached() const { return reached_; }

  // Always computes whole time tiles; shorter requests are served from the cached levels
  // as long as the caller hands back the state it was given.
  void advance(GridState& g, long n) {
    check_shape(g, s_);
    while (n > 0) {
      const long l = g.time - t0_;
      if (!(cached_ && l >= 0 && l < steps_ && L_[l] == g.data)) {
        time_tile(g, tp_.timeTile);
        continue;
      }
      const long k = std::min<long>(n, steps_ - l);
      g.data = L_[l + k];
      g.time += k;
      n -= k;
    }
  }

 private:
  const StencilSpec& s_;
  TilingParams tp_;
  BugSelection bug_;
  StepPlan plan_;
  Layout layout_;
  int D_ = 0;
  Index ext_, w_;
  std::vector<int> targets_;
  std::unordered_map<long, std::vector<size_t>> ringsOf_;
  std::map<int, int> writeSite_;
  std::map<int, std::vector<int>> readSite_;
  std::vector<std::vector<Index>> offs_;
  int accessSites_ = 0;
  std::vector<int> order_;
  std::vector<int> reversed_;
  long reached_ = 0;
  std::vector<std::vector<std::vector<double>>> L_;
  long t0_ = 0;
  int steps_ = 0;
  bool cached_ = false;

  long bnd(int c, long x) {
    if (bug_.kind == BugKind::LoopBound && bug_.site == c) ++reached_;
    return bug_.kind == BugKind::LoopBound ? bound_hook(c, x, bug_.site) : x;
  }
  long acs(int id, long i) {
    if (bug_.kind == BugKind::ArrayAccess && bug_.site == id) ++reached_;
    return bug_.kind == BugKind::ArrayAccess ? access_hook(id, i, bug_.site) : i;
  }

  static long floordiv(long a, long b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

  void time_tile(const GridState& g, int steps) {
    t0_ = g.time;
    steps_ = steps;
    L_.resize(steps + 1);
    for (int l = 0; l <= steps; ++l) L_[l] = g.data;
    if (s_.boundary.value && s_.boundary.kind != BoundaryKind::Neumann)
      for (int l = 1; l <= steps; ++l)
        for (int x : targets_)
          for (size_t r = 0; r < plan_.ring.size(); ++r)
            L_[l][x][plan_.ring[r]] = s_.boundary.value(x, plan_.ring_global[r], t0_ + l);
    std::vector<long> var(2 * D_ + 1, 0);
    std::vector<char> bound(2 * D_ + 1, 0);
    nest(0, var, bound);
    cached_ = true;
  }

  // Range of loop `id` given the loops bound so far; exact is false when time is still free.
  std::pair<long, long> range(int id, const std::vector<long>& var, const std::vector<char>& bound, bool& exact) const {
    exact = true;
    const long B = tp_.spaceTile;
    if (id < D_) {
      const long lo = w_[id], hi = ext_[id] - 1 - w_[id];
      return {floordiv(lo + w_[id], B), floordiv(hi + w_[id] * steps_, B)};
    }
    if (id == D_) return {1, steps_};
    const int d = id - D_ - 1;
    const long lo = w_[d], hi = ext_[d] - 1 - w_[d];
    const long t = var[d];
    if (bound[D_]) {
      const long sk = w_[d] * var[D_];
      return {std::max(lo, t * B - sk), std::min(hi, t * B + B - 1 - sk)};
    }
    exact = false;
    return {std::max(lo, t * B - w_[d] * steps_), std::min(hi, t * B + B - 1 - w_[d])};
  }

  bool in_tile(const std::vector<long>& var) const {
    const long B = tp_.spaceTile;
    for (int d = 0; d < D_; ++d) {
      long sk = var[D_ + 1 + d] + w_[d] * var[D_];
      if (floordiv(sk, B) != var[d]) return false;
    }
    return true;
  }

  void nest(int depth, std::vector<long>& var, std::vector<char>& bound) {
    if (depth == 2 * D_ + 1) {
      if (in_tile(var)) compute(var);
      return;
    }
    const int id = order_[depth];
    bool exact;
    auto [lo, hi] = range(id, var, bound, exact);
    lo = bnd(2 * id, lo);
    hi = bnd(2 * id + 1, hi);
    const bool rev = std::find(reversed_.begin(), reversed_.end(), id) != reversed_.end();
    bound[id] = 1;
    if (!rev)
      for (long v = lo; v <= hi; ++v) {
        var[id] = v;
        nest(depth + 1, var, bound);
      }
    else
      for (long v = hi; v >= lo; --v) {
        var[id] = v;
        nest(depth + 1, var, bound);
      }
    bound[id] = 0;
  }

  void compute(const std::vector<long>& var) {
    const int l = static_cast<int>(var[D_]);
    if (l < 1 || l > steps_) return;
    auto& dst = L_[l];
    const auto& src = L_[l - 1];
    long p[3];
    for (int d = 0; d < D_; ++d) p[d] = var[D_ + 1 + d];
    std::vector<int> order = targets_;
    if (bug_.reorder && bug_.reorder->targetsSwapped) std::reverse(order.begin(), order.end());
    for (int x : order) {
      long home = 0;
      for (int d = 0; d < D_; ++d) home += p[d] * layout_.stride[d];
      const bool ringFirst = bug_.reorder && bug_.reorder->ringFirst;
      if (ringFirst) update_rings(dst, x, home, l);
      long wlin = 0;
      for (int d = 0; d < D_; ++d) wlin += acs(writeSite_[x] + d, p[d]) * layout_.stride[d];
      const auto& ts = plan_.terms[x];
      double acc = 0;
      for (size_t k = 0; k < ts.size(); ++k) {
        long rlin = 0;
        for (int d = 0; d < D_; ++d) rlin += acs(readSite_[x][k] + d, p[d] + offs_[x][k][d]) * layout_.stride[d];
        double v = ts[k].coeff * src[ts[k].from][rlin];
        acc = k == 0 ? v : acc + v;
      }
      dst[x][wlin] = acc;
      if (!ringFirst) update_rings(dst, x, home, l);
    }
  }

  void update_rings(std::vector<std::vector<double>>& dst, int x, long inner, int l) {
    if (s_.boundary.kind != BoundaryKind::Neumann || !s_.boundary.value) return;
    auto it = ringsOf_.find(inner);
    if (it == ringsOf_.end()) return;
    for (size_t r : it->second)
      dst[x][plan_.ring[r]] = dst[x][inner] + s_.boundary.value(x, plan_.ring_global[r], t0_ + l);
  }
};

inline TiledVariant tiled_variant(const BenchmarkDef& bench, TilingParams tp, BugSelection bug = {}) {
  return TiledVariant(bench.spec, tp, std::move(bug));
}

// Highest differing bit between two grids, or -1 when bitwise equal.
inline int highest_differing_bit(const GridState& a, const GridState& b) {
  int hi = -1;
  for (size_t x = 0; x < a.data.size(); ++x)
    for (size_t i = 0; i < a.data[x].size(); ++i) {
      std::uint64_t d = std::bit_cast<std::uint64_t>(a.data[x][i]) ^ std::bit_cast<std::uint64_t>(b.data[x][i]);
      if (d) hi = std::max(hi, 63 - std::countl_zero(d));
    }
  return hi;
}

struct CampaignConfig {
  std::string bench = "h1";
  long grid = 128;
  int udp = 15;
  double cov = 0.9;
  long trials = 100;
  std::string mode = "bitflip";  // bitflip | bitflip2 | bound | access | reorder
  std::uint64_t seed = 20240601;
  long steps = 64;
  bool protectedOnly = false;   // draw flips from protected bits of interior points only
  int tmax = 16;
  TilingParams tiling;
  unsigned threads = 1;
};

struct TrialRecord {
  long trial = 0;
  std::string mode;
  std::string siteOrBit;
  long timeStep = 0;
  bool reached = false;
  bool manifested = false;
  bool detected = false;
  int matchedBitsMin = 53;
  bool protectedHit = false;
  int highestBit = -1;
};

struct CampaignReport {
  std::string bench;
  std::string mode;
  std::uint64_t seed = 0;
  std::string rng = "splitmix64";
  long trials = 0;
  long reachedCount = 0;
  long manifestedCount = 0;
  long detectedCount = 0;
  long protectedTrials = 0;
  long protectedDetected = 0;
  long unprotectedTrials = 0;
  long unprotectedDetected = 0;
  double detectionRateProtected = 0;
  double detectionRateUnprotected = 0;
  double detectionRateManifested = 0;
  long falsePositives = 0;
  DetectorConfig config;
  std::vector<TrialRecord> records;
};

// LUT for one benchmark at its own input width.
inline ConfigLUT profile_for(const BenchmarkDef& bench, int tmax, const std::vector<int>& udps) {
  const ExponentRange er = scan_exponent_range(bench.initial_state());
  if (er.all_zero) throw Error(ErrorCode::AllZeroInput, bench.id);
  std::vector<int> covs;
  for (int c = 0; c <= 100; c += 5) covs.push_back(c);
  return offline_profile(bench.spec, nullptr, tmax, {er.canonical_width()}, udps, covs);
}

inline void finalize(CampaignReport& r) {
  r.trials = static_cast<long>(r.records.size());
  for (const auto& t : r.records) {
    r.reachedCount += t.reached;
    r.manifestedCount += t.manifested;
    r.detectedCount += t.detected;
    if (t.detected && !t.manifested) ++r.falsePositives;
    if (t.protectedHit) {
      ++r.protectedTrials;
      r.protectedDetected += t.detected;
    } else {
      ++r.unprotectedTrials;
      r.unprotectedDetected += t.detected;
    }
  }
  auto rate = [](long a, long b) { return b ? static_cast<double>(a) / static_cast<double>(b) : 0.0; };
  r.detectionRateProtected = rate(r.protectedDetected, r.protectedTrials);
  r.detectionRateUnprotected = rate(r.unprotectedDetected, r.unprotectedTrials);
  long md = 0;
  for (const auto& t : r.records) md += t.manifested && t.detected;
  r.detectionRateManifested = rate(md, r.manifestedCount);
}

template <class F>
void parallel_for(long n, unsigned threads, F&& f) {
  if (threads <= 1 || n <= 1) {
    for (long i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<long> next{0};
  std::vector<std::thread> pool;
  for (unsigned k = 0; k < threads; ++k)
    pool.emplace_back([&] {
      for (long i; (i = next++) < n;) f(i);
    });
  for (auto& t : pool) t.join();
}

inline CampaignReport run_campaign(const CampaignConfig& cfg, const ConfigLUT* lutIn = nullptr) {
  if (cfg.trials < 1) throw Error(ErrorCode::InvalidArgument, "trials must be at least 1");
  const BenchmarkDef bench = build_benchmark(cfg.bench, cfg.grid);
  ConfigLUT own;
  if (!lutIn) own = profile_for(bench, cfg.tmax, {cfg.udp});
  const ConfigLUT& lut = lutIn ? *lutIn : own;
  const StencilSpec& s = bench.spec;

  CampaignReport rep;
  rep.bench = cfg.bench;
  rep.mode = cfg.mode;
  rep.seed = cfg.seed;

  const bool bug = cfg.mode == "bound" || cfg.mode == "access" || cfg.mode == "reorder";
  const bool flip2 = cfg.mode == "bitflip2";
  if (!bug && !flip2 && cfg.mode != "bitflip") throw Error(ErrorCode::InvalidArgument, "unknown mode " + cfg.mode);

  RunOptions quiet;
  quiet.keepOutcomes = false;
  RunHooks cleanHooks;
  if (bug) {
    auto clean = std::make_shared<TiledVariant>(s, cfg.tiling);
    cleanHooks.advance = [clean](GridState& g, long n) { clean->advance(g, n); };
  }
  ProtectedRun ref = run_protected(bench, lut, cfg.udp, cfg.cov, cfg.steps, cleanHooks, quiet);
  rep.config = ref.config;
  const DetectorConfig& dc = ref.config;
  if (ref.detected()) throw Error(ErrorCode::InfeasibleConfig, "clean reference run raised a detection");

  auto classify = [&](TrialRecord& tr, const ProtectedRun& run) {
    const int hb = highest_differing_bit(run.state, ref.state);
    tr.highestBit = hb;
    tr.manifested = hb >= 0;
    tr.detected = run.detected() > 0;
    tr.matchedBitsMin = std::min(tr.matchedBitsMin, run.minMatchedBits);
  };

  if (bug) {
    TiledVariant probe(s, cfg.tiling);
    std::vector<BugSelection> sel;
    std::vector<std::string> names;
    if (cfg.mode == "bound")
      for (int c = 0; c < probe.bound_sites(); ++c) {
        sel.push_back({BugKind::LoopBound, c, std::nullopt});
        names.push_back("bound:" + std::to_string(c));
      }
    else if (cfg.mode == "access")
      for (int c = 0; c < probe.access_sites(); ++c) {
        sel.push_back({BugKind::ArrayAccess, c, std::nullopt});
        names.push_back("acs:" + std::to_string(c));
      }
    else
      for (const auto& r : curated_reorders(s)) {
        sel.push_back({BugKind::LoopReorder, -1, r});
        names.push_back(r.name);
      }
    rep.records.resize(sel.size());
    parallel_for(static_cast<long>(sel.size()), cfg.threads, [&](long i) {
      auto tv = std::make_shared<TiledVariant>(s, cfg.tiling, sel[i]);
      RunHooks h;
      h.advance = [tv](GridState& g, long n) { tv->advance(g, n); };
      ProtectedRun run = run_protected(bench, lut, cfg.udp, cfg.cov, cfg.steps, h, quiet);
      TrialRecord tr;
      tr.trial = i;
      tr.mode = cfg.mode;
      tr.siteOrBit = names[i];
      tr.reached = sel[i].kind == BugKind::LoopReorder || tv->reached() > 0;
      classify(tr, run);
      // beyond the 8 least significant bits
      tr.protectedHit = tr.highestBit >= 8;
      rep.records[i] = tr;
    });
    finalize(rep);
    return rep;
  }

  const auto targets = s.evolving();
  const Index ext = s.extent(), w = s.width();
  const Layout lay(s);
  rep.records.resize(cfg.trials);
  parallel_for(cfg.trials, cfg.threads, [&](long i) {
    SplitMix64 rng(cfg.seed, static_cast<std::uint64_t>(i) + 1);
    SoftFaultPlan plan;
    plan.seed = cfg.seed;
    plan.timeStep = static_cast<long>(rng.below(static_cast<std::uint64_t>(std::max<long>(cfg.steps, 1))));
    plan.array = targets[rng.below(targets.size())];
    auto interior = [&](long lin) {
      Index p = lay.local(lin);
      for (int d = 0; d < s.dims; ++d)
        if (p[d] < w[d] * dc.T || p[d] > ext[d] - 1 - w[d] * dc.T) return false;
      return true;
    };
    auto draw_interior = [&] {
      long lin = 0;
      for (int d = 0; d < s.dims; ++d) {
        long lo = w[d] * dc.T, hi = ext[d] - 1 - w[d] * dc.T;
        lin += (lo + static_cast<long>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)))) * lay.stride[d];
      }
      return lin;
    };
    auto draw_bit = [&] {
      if (!cfg.protectedOnly) return static_cast<int>(rng.below(64));
      const int n = 12 + cfg.udp - 1;
      return 63 - static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
    };
    TrialRecord tr;
    tr.trial = i;
    tr.mode = cfg.mode;
    tr.timeStep = plan.timeStep;
    tr.reached = true;
    if (!flip2) {
      plan.mode = FaultMode::SingleBit;
      plan.index = cfg.protectedOnly ? draw_interior() : static_cast<long>(rng.below(static_cast<std::uint64_t>(s.points())));
      plan.bit = draw_bit();
      tr.siteOrBit = std::to_string(plan.bit) + "@" + join_index(lay.local(plan.index));
      tr.protectedHit = is_protected_bit(plan.bit, cfg.udp) && interior(plan.index);
    } else {
      plan.mode = FaultMode::DoubleBitIn16ByteSection;
      if (cfg.protectedOnly) {
        long lin = draw_interior();
        plan.index = lin / 2;
        int slot = static_cast<int>(lin % 2);
        plan.bit = 64 * slot + draw_bit();
      } else {
        plan.index = static_cast<long>(rng.below(static_cast<std::uint64_t>(s.points() / 2)));
        plan.bit = static_cast<int>(rng.below(128));
      }
      do plan.bit2 = static_cast<int>(rng.below(128));
      while (plan.bit2 == plan.bit);
      tr.siteOrBit = std::to_string(plan.bit) + "+" + std::to_string(plan.bit2) + "@" + std::to_string(plan.index);
      for (int b : {plan.bit, plan.bit2})
        tr.protectedHit = tr.protectedHit || (is_protected_bit(b % 64, cfg.udp) && interior(2 * plan.index + b / 64));
    }
    RunHooks h;
    h.inject_time = plan.timeStep;
    h.inject = [plan](GridState& g) { inject_soft_fault(g, plan); };
    ProtectedRun run = run_protected(bench, lut, cfg.udp, cfg.cov, cfg.steps, h, quiet);
    classify(tr, run);
    rep.records[i] = tr;
  });
  finalize(rep);
  return rep;
}

inline void write_campaign_csv(std::ostream& os, const CampaignReport& r) {
  os << "trial,mode,site_or_bit,time_step,reached,manifested,detected,matched_bits_min\n";
  for (const auto& t : r.records)
    os << t.trial << ',' << t.mode << ',' << t.siteOrBit << ',' << t.timeStep << ',' << t.reached << ','
       << t.manifested << ',' << t.detected << ',' << t.matchedBitsMin << '\n';
}

inline nlohmann::json campaign_summary(const CampaignReport& r) {
  return {{"bench", r.bench},
          {"mode", r.mode},
          {"seed", r.seed},
          {"rng", r.rng},
          {"trials", r.trials},
          {"reached", r.reachedCount},
          {"manifested", r.manifestedCount},
          {"detected", r.detectedCount},
          {"protected_trials", r.protectedTrials},
          {"protected_detected", r.protectedDetected},
          {"detection_rate_protected", r.detectionRateProtected},
          {"detection_rate_unprotected", r.detectionRateUnprotected},
          {"detection_rate_manifested", r.detectionRateManifested},
          {"false_positives", r.falsePositives},
          {"config", config_to_json(r.config)}};
}

}  // namespace sdcguard
