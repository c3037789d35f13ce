// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers as arguments to
// run a subset.
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <set>
#include <string>

#include "oracle.hpp"
#include "sdcguard/benchmarks.hpp"
#include "sdcguard/injection.hpp"
#include "sdcguard/runtime.hpp"
#include "sdcguard/synthesis.hpp"
#include "soundness.hpp"

using namespace sdcguard;

namespace {

// Tolerances and sizes, all pinned.
constexpr int kDpLow = 42, kDpHigh = 48;
constexpr long kSoundGrids = 10000;
constexpr long kCampaignTrials = 1000;
constexpr double kSoftErrorRate = 0.88;
constexpr double kBugRate = 0.95;
constexpr int kBugLsb = 8;
constexpr double kInteriorTarget = 0.9002, kInteriorTol = 1e-4;
constexpr long kKahanTrials = 10000;
constexpr int kKahanLen = 129;

struct Line {
  bool ok;
  std::string detail;
};

unsigned threads() {
  const char* e = std::getenv("FPDETECT_THREADS");
  return e ? static_cast<unsigned>(std::max(1, std::atoi(e))) : 1u;
}

Line c1_coefficients() {
  const double set[3][7] = {{0, 0, 0.25, 0.5, 0.25, 0, 0},
                            {0, 0.0625, 0.25, 0.375, 0.25, 0.0625, 0},
                            {0.015625, 0.09375, 0.234375, 0.3125, 0.234375, 0.09375, 0.015625}};
  CoeffTable t = unroll_coefficients(heat_1d_spec(64), 3);
  int bad = 0;
  for (int k = 1; k <= 3; ++k)
    for (int j = -3; j <= 3; ++j) {
      const DoubleDouble c = t.row(0, 0, k).at({j});
      if (c.hi != set[k - 1][j + 3] || c.lo != 0) ++bad;
    }
  return {bad == 0, std::to_string(21 - bad) + "/21 entries exact"};
}

Line c2_precision() {
  ConfigLUT l = offline_profile(heat_1d_spec(512), nullptr, 64, {1}, {1}, {0});
  const int dp = l.maxdp.at(1)[63];
  return {dp >= kDpLow && dp <= kDpHigh,
          "dp=" + std::to_string(dp) + " want [" + std::to_string(kDpLow) + "," + std::to_string(kDpHigh) + "]"};
}

Line c3_soundness() {
  double worst = 0;
  long points = 0;
  std::string per;
  for (int dims : {1, 2})
    for (int T : {1, 2, 4, 8}) {
      auto r = soundness::run(dims, T, kSoundGrids, 1000 * dims + T);
      const double w = std::max(r.worstIterated, r.worstDirect);
      worst = std::max(worst, w);
      points += r.points;
      char buf[64];
      std::snprintf(buf, sizeof buf, " %dd/T%d:%.3g", dims, T, w);
      per += buf;
    }
  return {worst <= 1.0, "worst observed/bound " + std::to_string(worst) + " over " + std::to_string(points) +
                            " points;" + per};
}

Line c4_no_false_positives() {
  long runs = 0, skipped = 0, detections = 0, checks = 0;
  std::string skips;
  for (const auto& id : benchmark_ids()) {
    BenchmarkDef b = build_benchmark(id, 128);
    ConfigLUT lut = profile_for(b, 16, {10, 15, 20});
    RunOptions quiet;
    quiet.keepOutcomes = false;
    for (int udp : {10, 15, 20})
      for (double cov : {0.6, 0.8, 0.9}) {
        ProtectedRun probe;
        try {
          probe = run_protected(b, lut, udp, cov, 0, {}, quiet);
        } catch (const Error& e) {
          ++skipped;
          skips += " " + id + "/" + std::to_string(udp) + "/" + std::to_string(static_cast<int>(cov * 100));
          continue;
        }
        ProtectedRun r = run_protected(b, lut, udp, cov, 2L * probe.config.T, {}, quiet);
        ++runs;
        checks += r.checks;
        detections += r.detections;
      }
  }
  return {detections == 0 && runs > 0,
          std::to_string(runs) + " runs, " + std::to_string(checks) + " checks, " + std::to_string(detections) +
              " detected, " + std::to_string(skipped) + " goals unsupported" + skips};
}

Line c5_soft_errors() {
  bool ok = true;
  std::string detail;
  for (const char* id : {"h1", "p1", "w1", "c1"}) {
    CampaignConfig c;
    c.bench = id;
    c.grid = 128;
    c.udp = 15;
    c.cov = 0.9;
    c.trials = kCampaignTrials;
    c.protectedOnly = true;
    c.threads = threads();
    CampaignReport r = run_campaign(c);
    const double rate = static_cast<double>(r.protectedDetected) / static_cast<double>(r.protectedTrials);
    ok = ok && rate >= kSoftErrorRate && r.falsePositives == 0;
    char buf[96];
    std::snprintf(buf, sizeof buf, " %s %.3f (%ld/%ld, fp %ld)", id, rate, r.protectedDetected, r.protectedTrials,
                  r.falsePositives);
    detail += buf;
  }
  return {ok, "rate >= " + std::to_string(kSoftErrorRate) + ":" + detail};
}

// 1-d heat, T <= 6: every protected bit of every point inside pw, at every look-back, flipped
// and run to the detector's target time; and the worst excluded contribution at the endpoints.
Line c6_lemma_brute_force() {
  const long n = 64, c = n / 2;
  const FloatModel m;
  StencilSpec s = heat_1d_spec(n);
  CoeffTable table = unroll_coefficients(s, 6);
  long flips = 0, missed = 0, excludedPoints = 0, lemma1Bad = 0, goals = 0, emptyGoals = 0;
  std::mt19937_64 rng(6);
  std::vector<std::vector<double>> grids = {std::vector<double>(n, 1.0),
                                            std::vector<double>(n, std::nextafter(2.0, 0.0)),
                                            oracle::binade_values(rng, n), oracle::binade_values(rng, n)};
  for (int T = 1; T <= 6; ++T) {
    RowStats st = row_stats(table, T);
    std::vector<RowGeometry> geoms{RowGeometry(s, table.step(T), 0)};
    TStepAnalysis a = analyze_tstep(s, st, geoms, T, 1, m);
    const double thr = check_threshold(0, a.sexp[0], a.dp);
    DirectKernel full = make_kernel(s, table.step(T), 0, std::nullopt);
    DirectKernel trimmed = make_kernel(s, table.step(T), 0, a.ew);

    // Lemma 1: endpoint enumeration of the excluded points
    std::vector<int> excl;
    for (int j = -T; j <= T; ++j)
      if (!a.ew.contains(Index{j})) excl.push_back(j);
    excludedPoints += static_cast<long>(excl.size());
    for (unsigned mask = 0; mask < (1u << excl.size()); ++mask) {
      long double sum = 0;
      for (size_t q = 0; q < excl.size(); ++q) sum += oracle::binomial_row(T, excl[q]) * ((mask >> q & 1) ? 2.0L : 1.0L);
      if (sum >= thr) ++lemma1Bad;
    }
    for (const auto& v : grids) {
      GridState g = make_state(s);
      g.data[0] = v;
      if (std::fabs(full.eval(g, c) - trimmed.eval(g, c)) >= thr) ++lemma1Bad;
    }

    // Lemma 2
    for (int udp = 1; udp <= a.dp; udp += 4) {
      const int rho = T;
      long h = 0;
      try {
        h = (protected_width(s, table, 1, a.dp, udp, rho, T)[0] - 1) / 2;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::EmptyProtectedRegion) throw;
        ++emptyGoals;
        continue;
      }
      ++goals;
      for (const auto& v : grids) {
        GridState g0 = make_state(s);
        g0.data[0] = v;
        const double predicted = trimmed.eval(g0, c);
        GridState gt = g0;
        for (int t = 0; t <= std::min(rho, T - 1); ++t) {
          if (t > 0) step_iterated(gt, s);
          for (long j = -h; j <= h; ++j)
            for (int bit = 53 - udp; bit <= 63; ++bit) {
              GridState f = gt;
              f.data[0][c + j] = flip_bit(f.data[0][c + j], bit);
              run_iterated(f, s, T - t);
              ++flips;
              if (verdict_for(predicted, f.data[0][c], thr) != Verdict::Detected) ++missed;
            }
        }
      }
    }
  }
  // Longer rows, where trimming does happen; coefficients are positive so all-upper inputs are worst.
  StencilSpec wide = heat_1d_spec(256);
  CoeffTable wt = unroll_coefficients(wide, 64);
  for (int T : {16, 32, 64}) {
    RowStats st = row_stats(wt, T);
    std::vector<RowGeometry> geoms{RowGeometry(wide, wt.step(T), 0)};
    TStepAnalysis a = analyze_tstep(wide, st, geoms, T, 1, m);
    const double thr = check_threshold(0, a.sexp[0], a.dp);
    long double sum = 0;
    for (int j = -T; j <= T; ++j)
      if (!a.ew.contains(Index{j})) {
        ++excludedPoints;
        sum += 2.0L * oracle::binomial_row(T, j);
      }
    if (sum >= thr) ++lemma1Bad;
  }
  return {missed == 0 && lemma1Bad == 0 && flips > 0,
          std::to_string(goals) + " (T,udp) goals with " + std::to_string(emptyGoals) + " empty, " +
              std::to_string(flips) + " flips, " + std::to_string(missed) + " undetected; " +
              std::to_string(excludedPoints) + " excluded points, " + std::to_string(lemma1Bad) +
              " endpoint cases at or above threshold"};
}

Line c7_bugs() {
  bool ok = true;
  std::string detail;
  for (const char* id : {"h1", "c1"})
    for (const char* mode : {"bound", "access"}) {
      CampaignConfig c;
      c.bench = id;
      c.grid = 128;
      c.udp = 4;
      c.cov = 0.9;
      c.mode = mode;
      c.trials = 1;
      c.threads = threads();
      CampaignReport r = run_campaign(c);
      long det = 0;
      for (const auto& t : r.records) det += t.manifested && t.detected;
      const double rate = r.manifestedCount ? static_cast<double>(det) / static_cast<double>(r.manifestedCount) : 1.0;
      ok = ok && rate >= kBugRate && r.falsePositives == 0;
      char buf[96];
      std::snprintf(buf, sizeof buf, " %s/%s %ld/%ld", id, mode, det, r.manifestedCount);
      detail += buf;
    }
  for (const char* id : {"h1", "c1", "w1"}) {
    CampaignConfig c;
    c.bench = id;
    c.grid = 128;
    c.udp = 4;
    c.cov = 0.9;
    c.mode = "reorder";
    c.trials = 1;
    c.threads = threads();
    CampaignReport r = run_campaign(c);
    long beyond = 0, det = 0;
    for (const auto& t : r.records)
      if (t.highestBit >= kBugLsb) {
        ++beyond;
        det += t.detected;
      }
    ok = ok && det == beyond && r.falsePositives == 0;
    char buf[96];
    std::snprintf(buf, sizeof buf, " %s/reorder %ld/%ld", id, det, beyond);
    detail += buf;
  }
  return {ok, "detected/manifesting:" + detail};
}

Line c8_interior() {
  const double f = interior_factor(256, {10000, 10000}, {1, 1});
  char buf[64];
  std::snprintf(buf, sizeof buf, "factor %.6f", f);
  return {std::fabs(f - kInteriorTarget) <= kInteriorTol, buf};
}

Line c9_kahan() {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1, 1);
  std::uniform_int_distribution<int> e(-20, 20);
  oracle::ExactDot exact;
  const double mu = std::ldexp(1.0, -52);
  long bad = 0;
  double worst = 0;
  for (long trial = 0; trial < kKahanTrials; ++trial) {
    std::vector<double> a(kKahanLen), x(kKahanLen);
    double maxterm = 0;
    for (int i = 0; i < kKahanLen; ++i) {
      a[i] = u(rng);
      x[i] = std::ldexp(u(rng), e(rng));
      maxterm = std::max(maxterm, std::fabs(a[i] * x[i]));
    }
    const double got = kahan_dot(a, x);
    const double bound = 2 * oracle::ulp(got) + kKahanLen * mu * maxterm;
    const double err = exact.abs_error(a, x, got);
    worst = std::max(worst, err / bound);
    bad += err > bound;
  }
  return {bad == 0, std::to_string(bad) + " violations, worst error/bound " + std::to_string(worst)};
}

Line c10_trends() {
  bool ok = true;
  std::string detail;
  for (const char* id : {"h1", "w1"}) {
    BenchmarkDef b = build_benchmark(id, 128);
    std::vector<int> exps;
    for (int e = 0; e <= 9; ++e) exps.push_back(e);
    ConfigLUT lut = offline_profile(b.spec, nullptr, 64, exps, {20}, {90});
    double prevCost = 0;
    long prevVol = std::numeric_limits<long>::max();
    detail += std::string(" ") + id + ":";
    for (int e : exps) {
      const auto* cell = lut.find(e, 20, 90);
      if (!cell || !*cell) {
        detail += " e" + std::to_string(e) + "=infeasible";
        prevCost = INFINITY;
        prevVol = 0;
        continue;
      }
      const DetectorConfig& cfg = (*cell)->best;
      long vol = 1;
      for (long p : cfg.pw) vol *= p;
      if (cfg.cost < prevCost || vol > prevVol) ok = false;
      prevCost = cfg.cost;
      prevVol = vol;
      char buf[64];
      std::snprintf(buf, sizeof buf, " e%d=(%.4g,%ld)", e, cfg.cost, vol);
      detail += buf;
    }
  }
  return {ok, "(cost,pw volume)" + detail};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  struct Criterion {
    int id;
    const char* name;
    Line (*fn)();
  };
  const Criterion all[] = {{1, "coefficient rows", c1_coefficients},
                           {2, "detector precision", c2_precision},
                           {3, "soundness", c3_soundness},
                           {4, "no false positives", c4_no_false_positives},
                           {5, "soft-error coverage", c5_soft_errors},
                           {6, "protected/essential width brute force", c6_lemma_brute_force},
                           {7, "software-bug detection", c7_bugs},
                           {8, "coverage formula", c8_interior},
                           {9, "compensated dot bound", c9_kahan},
                           {10, "cost and pw trends", c10_trends}};
  int failed = 0;
  for (const auto& c : all) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Line l;
    try {
      l = c.fn();
    } catch (const std::exception& e) {
      l = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %d %s: %s [%.1fs]\n", l.ok ? "PASS" : "FAIL", c.id, c.name, l.detail.c_str(), secs);
    std::fflush(stdout);
    failed += !l.ok;
  }
  return failed ? 1 : 0;
}
