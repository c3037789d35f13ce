// Soundness sweep: random single-binade grids, iterated and direct evaluation against a
// quad-precision shadow run. Ratios above 1 mean a bound was violated.
#pragma once

#include <random>

#include "oracle.hpp"
#include "sdcguard/runtime.hpp"

namespace soundness {

using namespace sdcguard;

struct Result {
  double worstIterated = 0;  // max observed / bound
  double worstDirect = 0;
  double Rs = 0, Rd = 0;
  long points = 0;
};

inline Result run(int dims, int T, long grids, std::uint64_t seed) {
  const long n = dims == 1 ? 2 * T + 17 : 2 * T + 5;
  StencilSpec s = dims == 1 ? heat_1d_spec(n) : heat_2d_spec(n, 0.225);
  const double r = 0.225, cc = 1 - 4 * r;
  CoeffTable table = unroll_coefficients(s, T);
  RowStats st = row_stats(table, T);
  const FloatModel m;
  long count = static_cast<long>(table.row(0, 0, T).size());
  ErrorEstimate est = estimate_errors(s, st, 0, T, 1, st.abs[T][0][0], count, 0, m);
  DirectKernel kernel = make_kernel(s, table.step(T), 0, std::nullopt);
  const double Rs = est.Rs * m.u(), Rd = est.Rd * m.u();

  Result out;
  out.Rs = est.Rs;
  out.Rd = est.Rd;
  std::mt19937_64 rng(seed);
  const long total = dims == 1 ? n : n * n;
  Layout lay(s);
  for (long gi = 0; gi < grids; ++gi) {
    std::vector<double> v = oracle::binade_values(rng, static_cast<size_t>(total));
    GridState g0 = make_state(s);
    g0.data[0] = v;
    GridState g = g0;
    run_iterated(g, s, T);
    std::vector<oracle::quad> q = oracle::convert<oracle::quad>(v);
    for (int k = 0; k < T; ++k)
      q = dims == 1 ? oracle::heat1d_step<oracle::quad>(q, 0.25, 0.5, 0.25)
                    : oracle::heat2d_step<oracle::quad>(q, n, cc, r);
    auto check = [&](long lin) {
      const oracle::quad ref = q[lin];
      const double rel_it = oracle::to_double(oracle::qabs(g.data[0][lin] - ref) / oracle::qabs(ref));
      const double direct = kernel.eval(g0, lin);
      const double rel_di = oracle::to_double(oracle::qabs(direct - ref) / oracle::qabs(ref));
      out.worstIterated = std::max(out.worstIterated, Rs > 0 ? rel_it / Rs : (rel_it > 0 ? INFINITY : 0));
      out.worstDirect = std::max(out.worstDirect, Rd > 0 ? rel_di / Rd : (rel_di > 0 ? INFINITY : 0));
      ++out.points;
    };
    if (dims == 1)
      for (long i = T; i <= n - 1 - T; ++i) check(i);
    else
      for (long i = T; i <= n - 1 - T; ++i)
        for (long j = T; j <= n - 1 - T; ++j) check(lay.linear({i, j}));
  }
  return out;
}

}  // namespace soundness
