#include <gtest/gtest.h>

#include <set>

#include "sdcguard/benchmarks.hpp"
#include "sdcguard/injection.hpp"
#include "sdcguard/runtime.hpp"

using namespace sdcguard;

namespace {

std::vector<long> times_of(const Schedule& s, ScheduleEvent::Kind k) {
  std::vector<long> out;
  for (const auto& e : s.events)
    if (e.kind == k) out.push_back(k == ScheduleEvent::Trailing ? e.bank : e.time);
  return out;
}

struct H1Fixture : ::testing::Test {
  static void SetUpTestSuite() {
    bench_ = new BenchmarkDef(build_benchmark("h1", 128));
    lut_ = new ConfigLUT(profile_for(*bench_, 16, {10, 15}));
  }
  static void TearDownTestSuite() {
    delete lut_;
    delete bench_;
  }
  static BenchmarkDef* bench_;
  static ConfigLUT* lut_;
};
BenchmarkDef* H1Fixture::bench_ = nullptr;
ConfigLUT* H1Fixture::lut_ = nullptr;

}  // namespace

TEST(Schedule, ThirtyTenSix) {
  Schedule s = plan_schedule(30, 10, 6);
  EXPECT_EQ(s.tdelta, 4);
  EXPECT_EQ(times_of(s, ScheduleEvent::Eval), (std::vector<long>{0, 6, 12, 18, 24}));
  EXPECT_EQ(times_of(s, ScheduleEvent::Check), (std::vector<long>{10, 16, 22, 28}));
  // the last bank starts at 24 and is closed by a trailing check at 30
  EXPECT_EQ(times_of(s, ScheduleEvent::Trailing), (std::vector<long>{24}));
  EXPECT_EQ(s.events.back().time, 30);
}

TEST(Schedule, ShorterThanRho) {
  Schedule s = plan_schedule(4, 10, 6);
  EXPECT_EQ(times_of(s, ScheduleEvent::Eval), (std::vector<long>{0}));
  EXPECT_TRUE(times_of(s, ScheduleEvent::Check).empty());
  EXPECT_EQ(times_of(s, ScheduleEvent::Trailing).size(), 1u);
}

TEST(Schedule, ExactMultiple) {
  Schedule s = plan_schedule(24, 8, 6);
  EXPECT_EQ(times_of(s, ScheduleEvent::Eval), (std::vector<long>{0, 6, 12, 18}));
  EXPECT_EQ(times_of(s, ScheduleEvent::Check), (std::vector<long>{8, 14, 20}));
  EXPECT_EQ(times_of(s, ScheduleEvent::Trailing), (std::vector<long>{18}));
}

TEST(Schedule, RhoMustExceedHalfT) {
  try {
    plan_schedule(30, 10, 5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::RhoTooSmall);
  }
  EXPECT_THROW(plan_schedule(30, 10, 11), Error);
}

TEST(Schedule, AtMostTwoLiveBanks) {
  for (int T = 1; T <= 24; ++T)
    for (int rho = T / 2 + 1; rho <= T; ++rho)
      for (long iters : {0L, 1L, 7L, 64L, 100L, 257L}) {
        Schedule s = plan_schedule(iters, T, rho);
        EXPECT_LE(max_live_banks(s), 2) << T << " " << rho << " " << iters;
        // every bank is closed exactly once
        std::multiset<long> closed;
        for (const auto& e : s.events)
          if (e.kind != ScheduleEvent::Eval) closed.insert(e.bank);
        for (long b : s.baselines) EXPECT_EQ(closed.count(b), 1u);
      }
}

TEST(Detector, PredictsHeatImpulse) {
  StencilSpec s = heat_1d_spec(11);
  CoeffTable t = unroll_coefficients(s, 2);
  GridState g = make_state(s);
  g.data[0][5] = 1;
  DirectKernel k = make_kernel(s, t.step(2), 0, std::nullopt);
  DetectorInstance d = eval_detector(g, s, k, {5}, std::ldexp(1.0, -40), 40);
  EXPECT_EQ(d.predicted, 0.375);
  EXPECT_EQ(d.targetTime, 2);
  run_iterated(g, s, 2);
  EXPECT_EQ(detector_check(g, s, d).verdict, Verdict::Pass);
  try {
    eval_detector(g, s, k, {1}, 1, 40);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::PositionTooCloseToBoundary);
  }
}

TEST(Detector, CheckAtWrongTime) {
  StencilSpec s = heat_1d_spec(11);
  CoeffTable t = unroll_coefficients(s, 2);
  GridState g = make_state(s);
  DetectorInstance d = eval_detector(g, s, make_kernel(s, t.step(2), 0, std::nullopt), {5}, 1, 40);
  EXPECT_THROW(detector_check(g, s, d), Error);
}

TEST(Detector, VerdictAgainstThreshold) {
  const double thr = check_threshold(0, 0, 40);
  EXPECT_EQ(thr, std::ldexp(1.0, -39));
  EXPECT_EQ(verdict_for(1.5, 1.5, thr), Verdict::Pass);
  EXPECT_EQ(verdict_for(1.5, 1.5 + 4.0, thr), Verdict::Detected);
  EXPECT_EQ(verdict_for(1.5, 1.5 + std::ldexp(1.0, -45), thr), Verdict::Pass);
  EXPECT_EQ(verdict_for(1.5, 1.5 + thr, thr), Verdict::Detected);
  EXPECT_EQ(verdict_for(1.5, NAN, thr), Verdict::Detected);
  EXPECT_EQ(matched_bits(1.5, 1.5, thr, 40), 53);
  EXPECT_EQ(matched_bits(1.5, 1.5 + std::ldexp(1.0, -40), thr, 40), 40);
  EXPECT_EQ(matched_bits(1.5, 1.5 + std::ldexp(1.0, -39), thr, 40), 39);
  EXPECT_EQ(matched_bits(1.5, 1.5 + std::ldexp(1.0, -20), thr, 40), 20);
  EXPECT_EQ(matched_bits(1.5, INFINITY, thr, 40), 0);
}

TEST(Detector, TrailingCheck) {
  StencilSpec s = heat_1d_spec(64);
  CoeffTable t = unroll_coefficients(s, 6);
  std::vector<double> v(64);
  for (size_t i = 0; i < v.size(); ++i) v[i] = 1.0 + static_cast<double>(i % 7) / 8;
  GridState b0 = make_state(s);
  b0.data[0] = v;
  DetectorConfig cfg;
  cfg.T = 6;
  cfg.dp = 40;
  cfg.ew = {{6}, {6}};
  const double thr = check_threshold(0, 1, 40);
  EXPECT_EQ(trailing_check(b0, b0, s, t, cfg, {30}, 0, thr).verdict, Verdict::Pass);
  GridState b1 = b0;
  run_iterated(b1, s, 2);
  EXPECT_EQ(trailing_check(b0, b1, s, t, cfg, {30}, 0, thr).verdict, Verdict::Pass);
  b1.data[0][31] = -b1.data[0][31];
  EXPECT_EQ(trailing_check(b0, b1, s, t, cfg, {30}, 0, thr).verdict, Verdict::Detected);
  GridState b6 = b0;
  run_iterated(b6, s, 6);
  EXPECT_THROW(trailing_check(b0, b6, s, t, cfg, {30}, 0, thr), Error);
}

TEST(Placement, SpacingAndReach) {
  StencilSpec s = heat_2d_spec(100, 0.2);
  for (int T : {1, 5, 20})
    for (long pw : {1L, 4L, 7L, 15L}) {
      auto pos = detector_positions(s, T, {pw, pw});
      ASSERT_FALSE(pos.empty());
      std::set<long> xs;
      for (const auto& p : pos) xs.insert(p[0]);
      std::vector<long> axis(xs.begin(), xs.end());
      for (size_t i = 1; i < axis.size(); ++i) EXPECT_EQ(axis[i] - axis[i - 1], pw);
      EXPECT_EQ(pos.size(), axis.size() * axis.size());
      // interior points up to the last detector lie within ceil(pw/2) of one
      const long reach = (pw + 1) / 2;
      for (long x = T; x <= axis.back(); ++x) {
        long best = 1L << 40;
        for (long a : axis) best = std::min(best, std::labs(a - x));
        EXPECT_LE(best, reach) << T << " " << pw << " " << x;
      }
      for (const auto& p : pos) EXPECT_NO_THROW(check_position(s, p, T));
    }
}

TEST_F(H1Fixture, CleanRunHasNoDetections) {
  ProtectedRun r = run_protected(*bench_, *lut_, 15, 0.8, 512);
  EXPECT_EQ(r.state.time, 512);
  EXPECT_GT(r.checks, 0);
  EXPECT_EQ(r.detected(), 0);
  for (const auto& o : r.outcomes) EXPECT_EQ(o.verdict, Verdict::Pass);
  GridState ref = bench_->initial_state();
  run_iterated(ref, bench_->spec, 512);
  EXPECT_EQ(ref.data, r.state.data);
}

TEST_F(H1Fixture, SignFlipDetected) {
  ProtectedRun clean = run_protected(*bench_, *lut_, 15, 0.8, 64);
  auto pos = detector_positions(bench_->spec, clean.config.T, clean.config.pw);
  const long lin = Layout(bench_->spec).linear(pos[pos.size() / 2]);
  RunHooks h;
  h.inject_time = 1;
  h.inject = [&](GridState& g) { g.data[0][lin] = -g.data[0][lin]; };
  ProtectedRun r = run_protected(*bench_, *lut_, 15, 0.8, 64, h);
  EXPECT_GE(r.detected(), 1);
}

TEST_F(H1Fixture, OutcomesAndCountersAgree) {
  ProtectedRun a = run_protected(*bench_, *lut_, 10, 0.6, 100);
  RunOptions quiet;
  quiet.keepOutcomes = false;
  ProtectedRun b = run_protected(*bench_, *lut_, 10, 0.6, 100, {}, quiet);
  EXPECT_EQ(static_cast<long>(a.outcomes.size()), a.checks);
  EXPECT_EQ(a.checks, b.checks);
  EXPECT_TRUE(b.outcomes.empty());
  EXPECT_EQ(a.state.data, b.state.data);
}

TEST_F(H1Fixture, PredictionWithinThreshold) {
  ProtectedRun r = run_protected(*bench_, *lut_, 15, 0.8, 0);
  const DetectorConfig& cfg = r.config;
  CoeffTable t = unroll_coefficients(bench_->spec, cfg.T);
  GridState g = bench_->initial_state();
  DirectKernel k = make_kernel(bench_->spec, t.step(cfg.T), 0, cfg.ew);
  const double thr = check_threshold(r.e_a, cfg.sexp[0], cfg.dp);
  for (const auto& p : detector_positions(bench_->spec, cfg.T, cfg.pw)) {
    DetectorInstance d = eval_detector(g, bench_->spec, k, p, thr, cfg.dp);
    GridState later = g;
    run_iterated(later, bench_->spec, cfg.T);
    ASSERT_LT(std::fabs(d.predicted - later.data[0][d.lin]), thr);
    break;
  }
}

TEST_F(H1Fixture, EarlyStopClosesOpenBanks) {
  RunHooks h;
  h.converged = [](const GridState& g) { return g.time >= 21; };
  ProtectedRun r = run_protected(*bench_, *lut_, 15, 0.8, 200, h);
  EXPECT_EQ(r.state.time, 21);
  EXPECT_EQ(r.detected(), 0);
  bool trailing = false;
  for (const auto& o : r.outcomes) trailing |= o.trailing;
  EXPECT_TRUE(trailing);
}

TEST_F(H1Fixture, UnsupportedCoverage) {
  try {
    run_protected(*bench_, *lut_, 15, 0.9999, 16);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnsupportedCoverage);
  }
}

TEST_F(H1Fixture, SpecMismatchRejected) {
  BenchmarkDef other = build_benchmark("h2", 128);
  EXPECT_THROW(run_protected(other, *lut_, 15, 0.8, 16), Error);
}

// A perturbation below the threshold at a baseline keeps every later check under its threshold.
TEST(Dampening, SubThresholdPerturbation) {
  BenchmarkDef b = build_benchmark("h1", 128);
  ConfigLUT lut = profile_for(b, 8, {10});
  ProtectedRun clean = run_protected(b, lut, 10, 0.6, 48);
  ASSERT_LE(clean.config.T, 8);
  const double thr = check_threshold(clean.e_a, clean.config.sexp[0], clean.config.dp);
  for (long target : {2000L, 64L * 128 + 64, 100L * 128 + 37}) {
    RunHooks h;
    h.inject_time = clean.config.rho;
    h.inject = [&](GridState& g) { g.data[0][target] += thr / 8; };
    ProtectedRun r = run_protected(b, lut, 10, 0.6, 48, h);
    ASSERT_EQ(r.outcomes.size(), clean.outcomes.size());
    for (size_t i = 0; i < r.outcomes.size(); ++i) {
      EXPECT_EQ(r.outcomes[i].verdict, Verdict::Pass);
      EXPECT_LT(std::fabs(r.outcomes[i].actual - clean.outcomes[i].actual), r.outcomes[i].threshold);
    }
  }
}
