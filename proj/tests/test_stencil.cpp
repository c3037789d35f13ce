#include <gtest/gtest.h>

#include <random>

#include "oracle.hpp"
#include "sdcguard/benchmarks.hpp"

using namespace sdcguard;

namespace {

GridState state_1d(const StencilSpec& s, const std::vector<double>& v) {
  GridState g = make_state(s);
  g.data[0] = v;
  return g;
}

}  // namespace

TEST(Stencil, HeatOneDimensionalShape) {
  StencilSpec s = heat_1d_spec(16);
  EXPECT_EQ(s.dims, 1);
  EXPECT_EQ(s.arrays, 1);
  EXPECT_EQ(s.width(), Index{1});
  double sum = 0;
  for (double c : s.pairs[0].coeffs) sum += c;
  EXPECT_EQ(sum, 1.0);
}

TEST(Stencil, AllOnesIsFixedPoint) {
  StencilSpec s = heat_1d_spec(32, 0.25, 0.5, 0.25, 1.0);
  GridState g = state_1d(s, std::vector<double>(32, 1.0));
  run_iterated(g, s, 50);
  for (double v : g.data[0]) EXPECT_EQ(v, 1.0);
  EXPECT_EQ(g.time, 50);
}

TEST(Stencil, ImpulseSpreadsToNeighbours) {
  StencilSpec s = heat_1d_spec(11);
  std::vector<double> v(11, 0.0);
  v[5] = 1;
  GridState g = state_1d(s, v);
  step_iterated(g, s);
  EXPECT_EQ(g.data[0][4], 0.25);
  EXPECT_EQ(g.data[0][5], 0.5);
  EXPECT_EQ(g.data[0][6], 0.25);
  EXPECT_EQ(g.data[0][3], 0.0);
  step_iterated(g, s);
  const double two[] = {0.0625, 0.25, 0.375, 0.25, 0.0625};
  for (int j = 0; j < 5; ++j) EXPECT_EQ(g.data[0][3 + j], two[j]);
}

TEST(Stencil, ZeroStepsIsIdentity) {
  StencilSpec s = heat_1d_spec(9);
  std::vector<double> v = {3, 1, 4, 1, 5, 9, 2, 6, 5};
  GridState g = state_1d(s, v);
  run_iterated(g, s, 0);
  EXPECT_EQ(g.data[0], v);
  EXPECT_EQ(g.time, 0);
  EXPECT_THROW(run_iterated(g, s, -1), Error);
}

TEST(Stencil, MatchesPlainLoopOneDimensional) {
  std::mt19937_64 rng(7);
  StencilSpec s = heat_1d_spec(40, 0.3, 0.45, 0.25);
  std::vector<double> v = oracle::binade_values(rng, 40);
  v.front() = v.back() = 0;
  GridState g = state_1d(s, v);
  for (int k = 0; k < 20; ++k) {
    v = oracle::heat1d_step(v, 0.3, 0.45, 0.25);
    step_iterated(g, s);
  }
  EXPECT_EQ(g.data[0], v);
}

TEST(Stencil, MatchesPlainLoopTwoDimensional) {
  std::mt19937_64 rng(8);
  const long n = 20;
  StencilSpec s = heat_2d_spec(n, 0.2);
  std::vector<double> v = oracle::binade_values(rng, n * n);
  for (long i = 0; i < n; ++i)
    for (long j = 0; j < n; ++j)
      if (i == 0 || j == 0 || i == n - 1 || j == n - 1) v[i * n + j] = 0;
  GridState g = make_state(s);
  g.data[0] = v;
  for (int k = 0; k < 10; ++k) {
    v = oracle::heat2d_step(v, n, 1 - 4 * 0.2, 0.2);
    step_iterated(g, s);
  }
  EXPECT_EQ(g.data[0], v);
}

// h1 written out by hand: five-point update plus the constant source, Dirichlet ring from u.
TEST(Stencil, H1OneStepMatchesHandWrittenReference) {
  const long n = 64;
  BenchmarkDef b = build_benchmark("h1", n);
  GridState g = b.initial_state();
  const double h = 1.0 / (n - 1), dt = 0.9 * 0.25 * h * h, r = dt / (h * h);
  const double alpha = 3, zeta = 1.2, f = zeta - 2 - 2 * alpha;
  auto u = [&](double x, double y, double t) { return 1 + x * x + alpha * y * y + zeta * t; };
  std::vector<double> ref(n * n);
  for (long i = 0; i < n; ++i)
    for (long j = 0; j < n; ++j) ref[i * n + j] = u(i * h, j * h, 0);
  EXPECT_EQ(g.data[0], ref);
  std::vector<double> next = ref;
  for (long i = 1; i < n - 1; ++i)
    for (long j = 1; j < n - 1; ++j) {
      const long k = i * n + j;
      double acc = (1 - 4 * r) * ref[k];
      acc = acc + r * ref[k - n];
      acc = acc + r * ref[k + n];
      acc = acc + r * ref[k - 1];
      acc = acc + r * ref[k + 1];
      acc = acc + (dt * f) * 1.0;
      next[k] = acc;
    }
  for (long i = 0; i < n; ++i)
    for (long j = 0; j < n; ++j)
      if (i == 0 || j == 0 || i == n - 1 || j == n - 1) next[i * n + j] = u(i * h, j * h, dt);
  step_iterated(g, b.spec);
  EXPECT_EQ(g.data[0], next);
}

TEST(Stencil, ConservationWithMatchingBoundary) {
  for (double c : {1.0, 2.5, 1e-3}) {
    StencilSpec s = heat_2d_spec(12, 0.15, c);
    GridState g = make_state(s);
    std::fill(g.data[0].begin(), g.data[0].end(), c);
    run_iterated(g, s, 37);
    for (double v : g.data[0]) ASSERT_EQ(v, c);
  }
}

TEST(Stencil, LinearityWithinFourUlp) {
  std::mt19937_64 rng(11);
  StencilSpec s = heat_2d_spec(16, 0.225);
  const long n = 16;
  std::vector<double> x = oracle::binade_values(rng, n * n), y = oracle::binade_values(rng, n * n);
  const double a = 0.75, bcoef = 1.5;
  std::vector<double> z(n * n);
  for (long k = 0; k < n * n; ++k) z[k] = a * x[k] + bcoef * y[k];
  GridState gx = make_state(s), gy = make_state(s), gz = make_state(s);
  gx.data[0] = x;
  gy.data[0] = y;
  gz.data[0] = z;
  // ring values must also satisfy the relation; a zero boundary does
  for (auto* g : {&gx, &gy, &gz})
    for (long i = 0; i < n; ++i)
      for (long j = 0; j < n; ++j)
        if (i == 0 || j == 0 || i == n - 1 || j == n - 1) g->data[0][i * n + j] = 0;
  step_iterated(gx, s);
  step_iterated(gy, s);
  step_iterated(gz, s);
  for (long k = 0; k < n * n; ++k) {
    double lin = a * gx.data[0][k] + bcoef * gy.data[0][k];
    EXPECT_LE(std::fabs(lin - gz.data[0][k]), 4 * oracle::ulp(gz.data[0][k]) + 1e-300) << k;
  }
}

TEST(Stencil, ExponentRangeExamples) {
  StencilSpec s = heat_1d_spec(4);
  GridState g = state_1d(s, {1.0, 1.5, 1.999, 1.25});
  EXPECT_EQ(scan_exponent_range(g).width, 1);
  g = state_1d(s, {1.5 * 8, 1.25 * 1024, 100, 0});
  auto r = scan_exponent_range(g);
  EXPECT_EQ(r.e_min, 3);
  EXPECT_EQ(r.e_max, 10);
  EXPECT_EQ(r.width, 8);
  g = state_1d(s, {0, 0, 0, 0});
  EXPECT_TRUE(scan_exponent_range(g).all_zero);
}

TEST(Stencil, BenchmarkInitialRangesAreProfiled) {
  for (const auto& id : benchmark_ids()) {
    BenchmarkDef b = build_benchmark(id, 64);
    GridState g = b.initial_state();
    ExponentRange r = scan_exponent_range(g);
    // exhaustive scan by hand
    double lo = INFINITY, hi = 0;
    for (const auto& a : g.data)
      for (double v : a)
        if (v != 0) {
          lo = std::min(lo, std::fabs(v));
          hi = std::max(hi, std::fabs(v));
        }
    EXPECT_EQ(r.width, std::ilogb(hi) - std::ilogb(lo) + 1) << id;
    EXPECT_GE(r.width, 1) << id;
    EXPECT_LE(r.width, 20) << id;
  }
}

TEST(Stencil, UnknownBenchmarkRejected) {
  EXPECT_THROW(build_benchmark("q7", 64), Error);
  try {
    build_benchmark("h9x", 64);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownBenchmark);
  }
}

TEST(Stencil, StabilityGate) {
  StencilSpec s = heat_1d_spec(8, 0.6, 0.5, 0.25);
  EXPECT_THROW(check_stability(s, false), Error);
  StencilSpec neg = heat_1d_spec(8, -0.1, 0.8, 0.3);
  EXPECT_THROW(check_stability(neg, false), Error);
  EXPECT_NO_THROW(check_stability(heat_1d_spec(8), false));
}

TEST(Stencil, ShapeMismatchDetected) {
  StencilSpec s = heat_1d_spec(8);
  GridState g = make_state(s);
  g.data[0].resize(7);
  EXPECT_THROW(step_iterated(g, s), Error);
}

TEST(Stencil, SpecJsonRoundTrip) {
  BenchmarkDef b = build_benchmark("c1", 64);
  StencilSpec back = spec_from_json(spec_to_json(b.spec));
  EXPECT_EQ(spec_hash(back), spec_hash(b.spec));
  EXPECT_NE(spec_hash(build_benchmark("c2", 64).spec), spec_hash(b.spec));
  EXPECT_THROW(spec_from_json(nlohmann::json{{"dims", 1}}), Error);
}

TEST(Stencil, AllBenchmarksBuild) {
  EXPECT_EQ(benchmark_ids().size(), 24u);
  for (const auto& id : benchmark_ids()) {
    BenchmarkDef b = build_benchmark(id, 64);
    GridState g = b.initial_state();
    run_iterated(g, b.spec, 10);
    for (const auto& a : g.data)
      for (double v : a) ASSERT_TRUE(std::isfinite(v)) << id;
  }
}

TEST(Stencil, ConvectionUnstableOnCoarseGrid) {
  try {
    build_benchmark("c1", 32);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnstableDiscretization);
  }
}
