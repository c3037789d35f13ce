#pragma once

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "sdcguard/benchmarks.hpp"
#include "sdcguard/coeff_table.hpp"
#include "sdcguard/synthesis.hpp"

namespace sdcguard {

// Products rounded once each, summed with Kahan compensation.
inline double kahan_dot(const double* c, const double* x, size_t n) {
  double sum = 0, comp = 0;
  for (size_t i = 0; i < n; ++i) {
    double y = c[i] * x[i] - comp;
    double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  }
  return sum;
}

inline double kahan_dot(const std::vector<double>& c, const std::vector<double>& x) {
  if (c.size() != x.size()) throw Error(ErrorCode::ShapeMismatch, "kahan_dot length mismatch");
  return kahan_dot(c.data(), x.data(), c.size());
}

// Flattened direct-evaluation stencil for one target: source array, linear delta, coefficient.
struct DirectKernel {
  int target = 0;
  int steps = 0;
  std::vector<int> array;
  std::vector<long> delta;
  std::vector<double> coeff;
  Index reach;  // max |offset| per dim

  double eval(const GridState& g, long lin) const {
    thread_local std::vector<double> vals;
    vals.resize(coeff.size());
    for (size_t i = 0; i < coeff.size(); ++i) vals[i] = g.data[array[i]][lin + delta[i]];
    return kahan_dot(coeff.data(), vals.data(), coeff.size());
  }
};

inline DirectKernel make_kernel(const StencilSpec& s, const RowSet& rs, int u, const std::optional<EssentialWidth>& ew) {
  DirectKernel k;
  k.target = u;
  k.steps = rs[u][0].k;
  k.reach.assign(s.dims, 0);
  Layout lay(s);
  for (int v = 0; v < s.arrays; ++v) {
    const CoeffRow& r = rs[u][v];
    for (size_t j = 0; j < r.c.size(); ++j) {
      if (r.c[j].is_zero()) continue;
      Index o = r.offset(static_cast<long>(j));
      if (ew && !ew->contains(o)) continue;
      k.array.push_back(v);
      k.delta.push_back(lay.delta(o));
      k.coeff.push_back(r.c[j].to_double());
      for (int d = 0; d < s.dims; ++d) k.reach[d] = std::max(k.reach[d], std::labs(o[d]));
    }
  }
  return k;
}

enum class Verdict { Pass, Detected };
inline const char* to_string(Verdict v) { return v == Verdict::Pass ? "pass" : "detected"; }

struct DetectorInstance {
  long id = 0;
  int array = 0;
  Index position;
  long lin = -1;  // linear index of position, -1 when unset
  long evalTime = 0;
  long targetTime = 0;
  double predicted = 0;
  double threshold = 0;
  int dp = 0;
  long linear(const StencilSpec& s) const { return lin >= 0 ? lin : Layout(s).linear(position); }
};

struct CheckOutcome {
  long detectorId = 0;
  int array = 0;
  Index position;
  long evalTime = 0;
  long targetTime = 0;
  double predicted = 0;
  double actual = 0;
  int matchedBits = 0;
  double threshold = 0;
  bool trailing = false;
  Verdict verdict = Verdict::Pass;
};

// Detection threshold for a target: 2^(e_a + exp(S_Y upper) - dp + 1).
inline double check_threshold(int e_a, int sexp, int dp) { return std::ldexp(1.0, e_a + sexp - dp + 1); }

inline int matched_bits(double predicted, double actual, double threshold, int dp, int p = 53) {
  double diff = std::fabs(predicted - actual);
  if (!std::isfinite(diff)) return 0;
  if (diff == 0) return p;
  return clamp_int(static_cast<long long>(exponent_of(threshold)) + dp - 1 - exponent_of(diff), 0, p);
}

inline void check_position(const StencilSpec& s, const Index& pos, int T) {
  Index ext = s.extent(), w = s.width();
  if (static_cast<int>(pos.size()) != s.dims) throw Error(ErrorCode::ShapeMismatch, "position rank");
  for (int d = 0; d < s.dims; ++d)
    if (pos[d] < w[d] * T || pos[d] > ext[d] - 1 - w[d] * T)
      throw Error(ErrorCode::PositionTooCloseToBoundary, "detector within w*T of the boundary");
}

inline DetectorInstance eval_detector(const GridState& g, const StencilSpec& s, const DirectKernel& k, const Index& pos,
                                      double threshold, int dp, long id = 0) {
  check_position(s, pos, k.steps);
  DetectorInstance d;
  d.id = id;
  d.array = k.target;
  d.position = pos;
  d.evalTime = g.time;
  d.targetTime = g.time + k.steps;
  d.lin = Layout(s).linear(pos);
  d.predicted = k.eval(g, d.lin);
  d.threshold = threshold;
  d.dp = dp;
  return d;
}

inline Verdict verdict_for(double predicted, double actual, double threshold) {
  double diff = std::fabs(predicted - actual);
  return !std::isfinite(diff) || diff >= threshold ? Verdict::Detected : Verdict::Pass;
}

inline CheckOutcome outcome_for(const DetectorInstance& d, double actual, bool trailing) {
  CheckOutcome o;
  o.detectorId = d.id;
  o.array = d.array;
  o.position = d.position;
  o.evalTime = d.evalTime;
  o.targetTime = d.targetTime;
  o.predicted = d.predicted;
  o.actual = actual;
  o.threshold = d.threshold;
  o.trailing = trailing;
  o.matchedBits = matched_bits(d.predicted, actual, d.threshold, d.dp);
  o.verdict = verdict_for(d.predicted, actual, d.threshold);
  return o;
}

inline CheckOutcome detector_check(const GridState& g, const StencilSpec& s, const DetectorInstance& d) {
  if (g.time != d.targetTime) throw Error(ErrorCode::TimeMismatch, "check at t=" + std::to_string(g.time));
  return outcome_for(d, g.data[d.array][d.linear(s)], false);
}

// Second direct estimate of the detector's target value from a later baseline.
inline CheckOutcome trailing_check(const GridState& later, const StencilSpec& s, const DetectorInstance& d,
                                   const DirectKernel& rest) {
  const long tp = later.time - d.evalTime;
  if (tp < 0 || tp > d.targetTime - d.evalTime) throw Error(ErrorCode::TimeMismatch, "trailing baseline outside window");
  if (rest.steps != d.targetTime - later.time) throw Error(ErrorCode::TstepRowMissing, "kernel step count mismatch");
  return outcome_for(d, rest.eval(later, d.linear(s)), true);
}

inline CheckOutcome trailing_check(const GridState& base0, const GridState& base1, const StencilSpec& s,
                                   const CoeffTable& table, const DetectorConfig& cfg, const Index& pos, int array,
                                   double threshold) {
  const long tp = base1.time - base0.time;
  if (tp < 0 || tp >= cfg.T) throw Error(ErrorCode::TimeMismatch, "t' must lie in [0, T)");
  if (cfg.T > table.Tmax) throw Error(ErrorCode::TstepRowMissing, "row T missing");
  const int rest = cfg.T - static_cast<int>(tp);
  DirectKernel first = make_kernel(s, table.step(cfg.T), array, cfg.ew);
  DirectKernel second = make_kernel(s, table.step(rest), array, std::nullopt);
  DetectorInstance d = eval_detector(base0, s, first, pos, threshold, cfg.dp);
  return trailing_check(base1, s, d, second);
}

struct ScheduleEvent {
  enum Kind { Check, Eval, Trailing } kind;
  long time;
  long bank;  // baseline time of the bank
};

struct Schedule {
  long iters = 0;
  int T = 0;
  int rho = 0;
  int tdelta = 0;
  std::vector<long> baselines;
  std::vector<ScheduleEvent> events;  // time-ordered; at equal times checks, evals, trailing
};

inline Schedule plan_schedule(long iters, int T, int rho) {
  if (rho < 1 || rho > T || 2 * rho <= T) throw Error(ErrorCode::RhoTooSmall, "rho must satisfy T/2 < rho <= T");
  if (iters < 0) throw Error(ErrorCode::InvalidArgument, "negative iteration count");
  Schedule s;
  s.iters = iters;
  s.T = T;
  s.rho = rho;
  s.tdelta = T - rho;
  for (long b = 0; b < iters; b += rho) s.baselines.push_back(b);
  for (long b : s.baselines) {
    s.events.push_back({ScheduleEvent::Eval, b, b});
    if (b + T <= iters) s.events.push_back({ScheduleEvent::Check, b + T, b});
    else s.events.push_back({ScheduleEvent::Trailing, iters, b});
  }
  std::stable_sort(s.events.begin(), s.events.end(), [](const ScheduleEvent& a, const ScheduleEvent& b) {
    auto rank = [](ScheduleEvent::Kind k) { return k == ScheduleEvent::Check ? 0 : k == ScheduleEvent::Eval ? 1 : 2; };
    return a.time != b.time ? a.time < b.time : rank(a.kind) < rank(b.kind);
  });
  return s;
}

// Largest number of banks evaluated and not yet checked at any instant.
inline int max_live_banks(const Schedule& s) {
  int live = 0, most = 0;
  for (const auto& e : s.events) {
    if (e.kind == ScheduleEvent::Eval) most = std::max(most, ++live);
    else --live;
  }
  return most;
}

struct RunHooks {
  // Advances the state by n steps; defaults to the iterated stepper.
  std::function<void(GridState&, long)> advance;
  // Called once when the state reaches inject_time, after that time's detector work.
  std::optional<long> inject_time;
  std::function<void(GridState&)> inject;
  // Returning true ends the run early at the current time.
  std::function<bool(const GridState&)> converged;
};

struct RunOptions {
  bool revalidate = false;
  bool keepOutcomes = true;  // false: only the counters below are filled
};

struct ProtectedRun {
  GridState state;
  std::vector<CheckOutcome> outcomes;
  DetectorConfig config;
  int lutWidth = 0;
  int e_a = 0;
  double interior = 0;
  long detectorsPerBank = 0;
  long checks = 0;
  long detections = 0;
  int minMatchedBits = 53;
  long detected() const { return detections; }
};

struct ConfigChoice {
  DetectorConfig config;
  int lutWidth = 0;
  double interior = 0;
};

// Cheapest stored configuration whose overall coverage meets cov on this grid.
inline ConfigChoice select_config(const ConfigLUT& lut, const StencilSpec& s, int width, int udp, double cov) {
  std::vector<int> widths;
  for (int e : lut.exps)
    if (e >= width) widths.push_back(e);
  if (widths.empty()) throw Error(ErrorCode::ExponentRangeUnprofiled, "input exponent width " + std::to_string(width));
  const int W = *std::min_element(widths.begin(), widths.end());
  const Index N = s.extent(), w = s.width();
  std::optional<ConfigChoice> best;
  bool anySupported = false, anyCandidate = false;
  for (int c : lut.covs) {
    const auto* cell = lut.find(W, udp, c);
    if (!cell || !*cell) continue;
    std::vector<DetectorConfig> cands = (*cell)->frontier;
    cands.push_back((*cell)->best);
    for (const auto& cfg : cands) {
      anyCandidate = true;
      const double inter = interior_factor(cfg.T, N, w);
      auto in = adjust_coverage(cov, inter);
      if (!in) continue;
      anySupported = true;
      if (cfg.coverage + 1e-12 < *in) continue;
      if (!best || detail::better(cfg, best->config)) best = ConfigChoice{cfg, W, inter};
    }
  }
  if (best) return *best;
  if (anyCandidate && !anySupported)
    throw Error(ErrorCode::UnsupportedCoverage, "unsupported coverage: boundary region exceeds the allowed uncovered share");
  throw Error(ErrorCode::InfeasibleConfig, "no feasible configuration for the requested goal");
}

inline std::vector<Index> detector_positions(const StencilSpec& s, int T, const Index& pw) {
  const Index ext = s.extent(), w = s.width();
  std::vector<std::vector<long>> axes(s.dims);
  for (int d = 0; d < s.dims; ++d) {
    const long lo = w[d] * T, hi = ext[d] - 1 - w[d] * T;
    if (hi < lo) return {};
    for (long p = std::min(lo + (pw[d] + 1) / 2, hi); p <= hi; p += pw[d]) axes[d].push_back(p);
  }
  std::vector<Index> out;
  Index cur(s.dims);
  std::function<void(int)> rec = [&](int d) {
    if (d == s.dims) {
      out.push_back(cur);
      return;
    }
    for (long p : axes[d]) {
      cur[d] = p;
      rec(d + 1);
    }
  };
  rec(0);
  return out;
}

inline ProtectedRun run_protected(const BenchmarkDef& bench, const ConfigLUT& lut, int udp, double cov, long steps,
                                  const RunHooks& hooks = {}, const RunOptions& opt = {},
                                  std::optional<GridState> start = std::nullopt) {
  const StencilSpec& s = bench.spec;
  if (lut.specHash != to_hex(spec_hash(s))) throw Error(ErrorCode::SpecHashMismatch, "LUT built for another spec");
  if (steps < 0) throw Error(ErrorCode::InvalidArgument, "negative step count");
  ProtectedRun run;
  run.state = start ? std::move(*start) : bench.initial_state();
  GridState& g = run.state;
  const ExponentRange er = scan_exponent_range(g);
  if (er.all_zero) throw Error(ErrorCode::AllZeroInput, "input grid is all zeros");
  ConfigChoice ch = select_config(lut, s, er.canonical_width(), udp, cov);
  run.config = ch.config;
  run.lutWidth = ch.lutWidth;
  run.interior = ch.interior;
  run.e_a = er.e_min;
  const DetectorConfig& cfg = run.config;
  const auto targets = s.evolving();

  RowStream rows(s);
  std::vector<RowSet> byStep(cfg.T + 1);
  byStep[0] = identity_rows(s);
  for (int k = 1; k <= cfg.T; ++k) byStep[k] = rows.advance();
  std::vector<DirectKernel> kernels;
  std::vector<double> thresholds;
  for (size_t i = 0; i < targets.size(); ++i) {
    kernels.push_back(make_kernel(s, byStep[cfg.T], targets[i], cfg.ew));
    thresholds.push_back(check_threshold(run.e_a, cfg.sexp.at(i), cfg.dp));
  }
  const std::vector<Index> positions = detector_positions(s, cfg.T, cfg.pw);
  std::vector<long> lins;
  for (const auto& p : positions) {
    check_position(s, p, cfg.T);
    lins.push_back(Layout(s).linear(p));
  }
  auto record = [&](CheckOutcome o) {
    ++run.checks;
    run.detections += o.verdict == Verdict::Detected;
    run.minMatchedBits = std::min(run.minMatchedBits, o.matchedBits);
    if (opt.keepOutcomes) run.outcomes.push_back(std::move(o));
  };
  run.detectorsPerBank = static_cast<long>(positions.size() * targets.size());
  const double bound = std::ldexp(1.0, run.e_a + run.lutWidth);

  StepPlan plan(s);
  auto advance = [&](long n) {
    if (n <= 0) return;
    if (hooks.advance) hooks.advance(g, n);
    else
      for (long k = 0; k < n; ++k) step_iterated(g, s, plan);
  };

  Schedule sch = plan_schedule(steps, cfg.T, cfg.rho);
  std::map<long, std::vector<DetectorInstance>> banks;
  long nextId = 0;
  bool injected = false;
  long iters = steps;

  std::map<std::pair<int, int>, DirectKernel> restKernels;
  auto trailing = [&](long bank) {
    for (const auto& d : banks[bank]) {
      const int rest = static_cast<int>(d.targetTime - g.time);
      auto key = std::make_pair(rest, d.array);
      auto it = restKernels.find(key);
      if (it == restKernels.end()) it = restKernels.emplace(key, make_kernel(s, byStep[rest], d.array, std::nullopt)).first;
      record(trailing_check(g, s, d, it->second));
    }
    banks.erase(bank);
  };

  size_t ei = 0;
  for (long t = 0;; ++t) {
    if (t > g.time) advance(t - g.time);
    while (ei < sch.events.size() && sch.events[ei].time == t && t <= iters) {
      const auto& e = sch.events[ei++];
      if (e.kind == ScheduleEvent::Check) {
        for (const auto& d : banks[e.bank]) record(detector_check(g, s, d));
        banks.erase(e.bank);
      } else if (e.kind == ScheduleEvent::Eval) {
        if (opt.revalidate) {
          ExponentRange now = scan_exponent_range(g);
          if (!now.all_zero && std::ldexp(1.0, now.e_max + 1) > bound)
            throw Error(ErrorCode::ExponentRangeUnprofiled, "values left the profiled exponent range");
        }
        auto& bank = banks[e.bank];
        for (size_t i = 0; i < targets.size(); ++i)
          for (size_t j = 0; j < positions.size(); ++j) {
            DetectorInstance d;
            d.id = nextId++;
            d.array = targets[i];
            d.lin = lins[j];
            if (opt.keepOutcomes) d.position = positions[j];
            d.evalTime = g.time;
            d.targetTime = g.time + kernels[i].steps;
            d.predicted = kernels[i].eval(g, lins[j]);
            d.threshold = thresholds[i];
            d.dp = cfg.dp;
            bank.push_back(std::move(d));
          }
      } else if (banks.count(e.bank)) {
        trailing(e.bank);
      }
    }
    if (t >= iters) break;
    if (hooks.inject && hooks.inject_time && *hooks.inject_time == t && !injected) {
      hooks.inject(g);
      injected = true;
    }
    if (hooks.converged && t > 0 && hooks.converged(g)) {
      iters = t;
      std::vector<long> open;
      for (const auto& [b, _] : banks) open.push_back(b);
      for (long b : open) trailing(b);
      break;
    }
    // skip ahead to the next event or injection time
    long next = iters;
    if (ei < sch.events.size()) next = std::min(next, sch.events[ei].time);
    if (hooks.inject_time && !injected && *hooks.inject_time > t) next = std::min(next, *hooks.inject_time);
    if (!hooks.converged && next > t + 1) {
      advance(next - 1 - g.time);
      t = next - 1;
    }
  }
  std::stable_sort(run.outcomes.begin(), run.outcomes.end(),
                   [](const CheckOutcome& a, const CheckOutcome& b) { return a.detectorId < b.detectorId; });
  return run;
}

inline std::string hex_bits(double v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "0x%016" PRIx64, std::bit_cast<std::uint64_t>(v));
  return buf;
}

inline std::string join_index(const Index& p) {
  std::string s;
  for (size_t i = 0; i < p.size(); ++i) s += (i ? ":" : "") + std::to_string(p[i]);
  return s;
}

inline void write_outcomes_csv(std::ostream& os, const std::vector<CheckOutcome>& out) {
  os << "detector_id,array,position,eval_t,target_t,predicted_hex,actual_hex,matched_bits,verdict\n";
  for (const auto& o : out)
    os << o.detectorId << ',' << o.array << ',' << join_index(o.position) << ',' << o.evalTime << ',' << o.targetTime
       << ',' << hex_bits(o.predicted) << ',' << hex_bits(o.actual) << ',' << o.matchedBits << ','
       << to_string(o.verdict) << '\n';
}

}  // namespace sdcguard
