#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "sdcguard/stencil.hpp"

namespace sdcguard {

struct BenchmarkDef {
  std::string id;
  StencilSpec spec;
  std::function<void(GridState&)> init;
  std::map<std::string, double> params;
  double dx = 0;
  double dt = 0;
  long default_steps = 4000;

  GridState initial_state() const {
    GridState g = make_state(spec);
    init(g);
    return g;
  }
};

inline const std::vector<std::string>& benchmark_ids() {
  static const std::vector<std::string> ids = {"h1", "h2", "h3", "h4", "h5", "h6", "p1", "p2",
                                                "p3", "p4", "p5", "p6", "p7", "p8", "p9", "w1",
                                                "w2", "w3", "w4", "w5", "w6", "c1", "c2", "c3"};
  return ids;
}

namespace detail {

using Field = std::function<double(double x, double y, double t)>;

inline StencilPair five_point(int to, int from, double center, double xm, double xp, double ym, double yp) {
  StencilPair p{to, from, {}, {}};
  auto add = [&](long dx, long dy, double c) {
    if (c == 0) return;
    p.offsets.push_back({dx, dy});
    p.coeffs.push_back(c);
  };
  add(0, 0, center);
  add(-1, 0, xm);
  add(1, 0, xp);
  add(0, -1, ym);
  add(0, 1, yp);
  return p;
}

inline StencilPair identity_pair(int a) { return {a, a, {{0, 0}}, {1.0}}; }

// Shared scaffolding for the 2-d benchmarks: array 0 is the solution, optional extra
// evolving arrays follow, then static forcing arrays.
struct Builder {
  long n = 0;
  double h = 0;
  StencilSpec spec;
  std::vector<Field> init_fields;  // one per array
  std::vector<Field> bc_fields;    // Dirichlet values or exact solution for Neumann ghosts
  std::function<double(int, double, double)> flux;  // outward normal derivative, if given
  double dt = 0;

  Builder(long gridN, int arrays) : n(gridN), h(1.0 / static_cast<double>(gridN - 1)) {
    spec.dims = 2;
    spec.arrays = arrays;
    spec.lower = {0, 0};
    spec.upper = {gridN - 1, gridN - 1};
    init_fields.resize(arrays);
    bc_fields.resize(arrays);
  }

  // Forcing g(x,y) entering array 0 with weight `scale`. Constant forcing uses a unit
  // array; wide-range fields are stored with a power-of-two bias removed through the unit array.
  void add_forcing(const Field& g, double scale, bool constant, double bias) {
    int unit = spec.arrays++;
    init_fields.push_back([](double, double, double) { return 1.0; });
    bc_fields.push_back(nullptr);
    spec.pairs.push_back(identity_pair(unit));
    if (constant) {
      double gv = g(0, 0, 0);
      spec.pairs.push_back({0, unit, {{0, 0}}, {scale * gv}});
      return;
    }
    int f = spec.arrays++;
    init_fields.push_back([g, bias](double x, double y, double t) { return g(x, y, t) + bias; });
    bc_fields.push_back(nullptr);
    spec.pairs.push_back(identity_pair(f));
    spec.pairs.push_back({0, f, {{0, 0}}, {scale}});
    if (bias != 0) spec.pairs.push_back({0, unit, {{0, 0}}, {-scale * bias}});
  }

  std::function<void(GridState&)> make_init() const {
    auto fields = init_fields;
    long nn = n;
    double hh = h;
    return [fields, nn, hh](GridState& g) {
      for (size_t a = 0; a < fields.size(); ++a)
        for (long i = 0; i < nn; ++i)
          for (long j = 0; j < nn; ++j) g.data[a][i * nn + j] = fields[a](i * hh, j * hh, 0.0);
      g.time = 0;
    };
  }

  void set_dirichlet(BoundaryKind kind) {
    spec.boundary.kind = kind;
    auto fields = bc_fields;
    double hh = h, tt = dt;
    spec.boundary.value = [fields, hh, tt](int a, const Index& p, long t) {
      if (!fields[a]) return 0.0;
      return fields[a](p[0] * hh, p[1] * hh, static_cast<double>(t) * tt);
    };
  }

  // Ghost offset: value(ring) - value(nearest interior) from the exact field or a flux.
  void set_neumann() {
    spec.boundary.kind = BoundaryKind::Neumann;
    auto fields = bc_fields;
    auto fl = flux;
    double hh = h, tt = dt;
    long last = n - 1;
    spec.boundary.value = [fields, fl, hh, tt, last](int a, const Index& p, long t) {
      long qi = std::clamp<long>(p[0], 1, last - 1), qj = std::clamp<long>(p[1], 1, last - 1);
      double time = static_cast<double>(t) * tt;
      if (fl) {
        double x = p[0] * hh, y = p[1] * hh;
        double steps = static_cast<double>(std::labs(p[0] - qi) + std::labs(p[1] - qj));
        return steps * hh * fl(a, x, y);
      }
      if (!fields[a]) return 0.0;
      return fields[a](p[0] * hh, p[1] * hh, time) - fields[a](qi * hh, qj * hh, time);
    };
  }
};

}  // namespace detail

inline BenchmarkDef build_benchmark(const std::string& id, long gridN) {
  using detail::Field;
  using std::numbers::pi;
  const auto& ids = benchmark_ids();
  if (std::find(ids.begin(), ids.end(), id) == ids.end())
    throw Error(ErrorCode::UnknownBenchmark, id);
  if (gridN < 8) throw Error(ErrorCode::InvalidArgument, "gridN must be at least 8");

  BenchmarkDef def;
  def.id = id;
  const char family = id[0];
  const int variant = id[1] - '0';
  bool allow_negative = false;

  if (family == 'h') {
    const double alpha = 3, zeta = 1.2;
    def.params = {{"alpha", alpha}, {"zeta", zeta}};
    detail::Builder b(gridN, 1);
    b.dt = 0.9 * 0.25 * b.h * b.h;
    const double r = b.dt / (b.h * b.h);
    b.spec.pairs.push_back(detail::five_point(0, 0, 1 - 4 * r, r, r, r, r));
    Field u;
    double f = 0;
    switch (variant) {
      case 1: f = zeta - 2 - 2 * alpha; [[fallthrough]];
      case 2: u = [=](double x, double y, double t) { return 1 + x * x + alpha * y * y + zeta * t; }; break;
      case 3:
        f = 2 * zeta - 2 - 2 * alpha;
        u = [=](double x, double y, double t) { return 1 + x * x + alpha * y * y + zeta * t * t; };
        break;
      case 4: u = [](double x, double y, double t) { return 2 + std::exp(-pi * pi * t / 2) * std::sin(pi * (x + y) / 2); }; break;
      case 5: u = [](double x, double y, double t) { return 4 + std::exp(-pi * pi * t / 2) * std::cos(pi * (x + y) / 2); }; break;
      default:
        u = [](double x, double y, double t) {
          return 2 + std::exp(-pi * pi * t / 2) * (std::sin(pi * (x + y) / 2) + std::cos(pi * (x + y) / 2));
        };
    }
    b.init_fields[0] = u;
    b.bc_fields[0] = u;
    if (f != 0) b.add_forcing([f](double, double, double) { return f; }, b.dt, true, 0);
    if (variant <= 3) b.set_dirichlet(BoundaryKind::DirichletTimeDependent);
    else b.set_neumann();
    def.spec = b.spec;
    def.init = b.make_init();
    def.dx = b.h;
    def.dt = b.dt;
  } else if (family == 'p') {
    // Jacobi sweeps of -lap(u) = g. The membrane and Neumann cases are shifted by +1,
    // which leaves the equation unchanged and keeps data away from zero.
    detail::Builder b(gridN, 1);
    b.dt = 1;
    b.spec.pairs.push_back(detail::five_point(0, 0, 0, 0.25, 0.25, 0.25, 0.25));
    const double w = 0.25 * b.h * b.h;
    auto g1 = [](double x, double y) { return 4 * std::exp(-5 * ((x - .6) * (x - .6) + (y - .6) * (y - .6))); };
    auto g2 = [](double x, double y) { return 2 * std::exp(-5 * ((x - .3) * (x - .3) + (y - .3) * (y - .3))); };
    auto g3 = [](double x, double y) { return 4 * std::exp(-5 * ((x - .3) * (x - .3) + (y - .6) * (y - .6))); };
    Field u, g;
    bool constant = false;
    double bias = 0;
    Field one = [](double, double, double) { return 1.0; };
    switch (variant) {
      case 1:
        u = [](double x, double y, double) { return 1 + x * x + y * y; };
        g = [](double, double, double) { return -6.0; };
        constant = true;
        break;
      case 2:
        u = [](double x, double y, double) { return 1 + x * x * x + y * y * y; };
        g = [](double x, double y, double) { return -6 * (2 + x + y); };
        break;
      case 3:
        u = [](double x, double y, double) { return 1 + x * x + 2 * y * y * y; };
        g = [](double, double y, double) { return -2 - 12 * y; };
        break;
      case 4: u = one; g = [=](double x, double y, double) { return g1(x, y); }; break;
      case 5: u = one; g = [=](double x, double y, double) { return g1(x, y) + g2(x, y); }; break;
      case 6: u = one; g = [=](double x, double y, double) { return g1(x, y) + g2(x, y) + g3(x, y); }; break;
      case 7:
        u = one;
        g = [](double x, double y, double) { return 10 * std::exp(-((x - .5) * (x - .5) + (y - .5) * (y - .5)) / 0.02); };
        bias = 16;
        break;
      case 8: u = one; break;
      default:
        u = one;
        g = [](double x, double y, double) { return 20 * std::exp(-((x - .25) * (x - .25) + (y - .25) * (y - .25)) / 0.01); };
        bias = 32;
    }
    b.init_fields[0] = u;
    b.bc_fields[0] = u;
    if (g) b.add_forcing(g, w, constant, bias);
    if (variant <= 6) {
      b.set_dirichlet(BoundaryKind::DirichletFixed);
    } else {
      b.flux = [](int a, double x, double) { return a == 0 ? -std::sin(5 * x) : 0.0; };
      b.set_neumann();
    }
    def.spec = b.spec;
    def.init = b.make_init();
    def.dx = b.h;
    def.dt = 1;
  } else if (family == 'w') {
    // Leapfrog with arrays (u^n, u^{n-1}). w1-w3 are shifted by +4 like the +16 of w4-w6.
    const double c = variant <= 3 ? 1.0 : 0.7;
    def.params = {{"c", c}};
    detail::Builder b(gridN, 2);
    const double r2 = 0.9 * 0.5;
    b.dt = std::sqrt(r2) * b.h / c;
    b.spec.pairs.push_back(detail::five_point(0, 0, 2 - 4 * r2, r2, r2, r2, r2));
    b.spec.pairs.push_back({0, 1, {{0, 0}}, {-1.0}});
    b.spec.pairs.push_back({1, 0, {{0, 0}}, {1.0}});
    const double s2 = std::sqrt(2.0);
    Field u;
    switch (variant) {
      case 1: u = [=](double x, double y, double t) { return 4 + std::cos(s2 * pi * t) * std::sin(pi * x) * std::sin(pi * y) + x * x - y * y; }; break;
      case 2:
      case 3: u = [=](double x, double y, double t) { return 4 + std::sin(s2 * pi * t) * std::cos(pi * x) * std::cos(pi * y) + x * x - y * y; }; break;
      case 4: u = [=](double x, double y, double t) { return 16 + 2 * std::sin(pi / 4 * x) * std::sin(pi / 4 * y) * std::cos(pi / 2 * c * c * t); }; break;
      case 5: u = [=](double x, double, double t) { return 16 + std::sin(pi / 2 * x) * std::sin(pi / 2 * x) * std::cos(pi / 4 * c * c * t); }; break;
      default: u = [=](double x, double, double t) { return 16 + 2 * std::sin(pi / 2 * x) * std::cos(pi / 4 * x) * std::sin(pi / 2 * c * c * t); };
    }
    const double dt = b.dt;
    b.init_fields[0] = u;
    b.init_fields[1] = [u, dt](double x, double y, double t) { return u(x, y, t - dt); };
    b.bc_fields[0] = u;
    b.bc_fields[1] = b.init_fields[1];
    b.set_dirichlet(BoundaryKind::DirichletTimeDependent);
    def.spec = b.spec;
    def.init = b.make_init();
    def.dx = b.h;
    def.dt = b.dt;
    allow_negative = true;
  } else {
    // Convection-diffusion, upwind-free central scheme; exact solution shifted by +1.
    const double a = variant == 1 ? 0.8 : (variant == 2 ? 0.4 : 0.1);
    const double z = variant == 1 ? 0.01 : (variant == 2 ? 0.4 : 0.8);
    def.params = {{"alpha", a}, {"zeta", z}};
    detail::Builder b(gridN, 1);
    b.dt = 0.9 * b.h * b.h / (4 * z);
    const double d = z * b.dt / (b.h * b.h), v = a * b.dt / (2 * b.h);
    b.spec.pairs.push_back(detail::five_point(0, 0, 1 - 4 * d, d + v, d - v, d + v, d - v));
    Field u = [=](double x, double y, double t) {
      double s = 4 * t + 1;
      return 1 + std::exp(-((x - a * t - .5) * (x - a * t - .5) + (y - a * t - .5) * (y - a * t - .5)) / (z * s)) / s;
    };
    b.init_fields[0] = u;
    b.bc_fields[0] = u;
    b.set_dirichlet(BoundaryKind::DirichletTimeDependent);
    def.spec = b.spec;
    def.init = b.make_init();
    def.dx = b.h;
    def.dt = b.dt;
  }
  def.spec.validate();
  check_stability(def.spec, allow_negative);
  return def;
}

// 1-d three-point heat kernel with fixed boundary values.
inline StencilSpec heat_1d_spec(long n, double left = 0.25, double center = 0.5, double right = 0.25,
                                double boundary = 0.0) {
  StencilSpec s;
  s.dims = 1;
  s.arrays = 1;
  s.lower = {0};
  s.upper = {n - 1};
  s.pairs.push_back({0, 0, {{-1}, {0}, {1}}, {left, center, right}});
  s.boundary.kind = BoundaryKind::DirichletFixed;
  s.boundary.value = [boundary](int, const Index&, long) { return boundary; };
  return s;
}

// 2-d five-point heat kernel (no forcing) with fixed boundary values.
inline StencilSpec heat_2d_spec(long n, double r = 0.225, double boundary = 0.0) {
  StencilSpec s;
  s.dims = 2;
  s.arrays = 1;
  s.lower = {0, 0};
  s.upper = {n - 1, n - 1};
  s.pairs.push_back(detail::five_point(0, 0, 1 - 4 * r, r, r, r, r));
  s.boundary.kind = BoundaryKind::DirichletFixed;
  s.boundary.value = [boundary](int, const Index&, long) { return boundary; };
  return s;
}

}  // namespace sdcguard
