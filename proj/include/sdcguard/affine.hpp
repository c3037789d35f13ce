#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <map>

#include "sdcguard/float_model.hpp"

namespace sdcguard {

struct AffineForm {
  double central = 0;
  std::map<std::uint64_t, double> noise;

  double radius() const {
    double r = 0;
    for (const auto& [id, c] : noise) r = add_up(r, std::fabs(c));
    return r;
  }
  Interval concretize() const {
    double r = radius();
    return {sub_down(central, r), add_up(central, r)};
  }
  double magnitude() const { return add_up(std::fabs(central), radius()); }
};

inline std::uint64_t fresh_noise_id() {
  static std::atomic<std::uint64_t> next{1};
  return next.fetch_add(1, std::memory_order_relaxed);
}

inline AffineForm affine_constant(double v) { return {v, {}}; }

inline AffineForm affine_negate(const AffineForm& x) {
  AffineForm r{-x.central, {}};
  for (const auto& [id, c] : x.noise) r.noise[id] = -c;
  return r;
}

// Rounded product alpha*x: propagate the existing noise and add one fresh term.
inline AffineForm affine_scale(const AffineForm& x, double alpha, const FloatModel& m) {
  AffineForm r{alpha * x.central, {}};
  for (const auto& [id, c] : x.noise) r.noise[id] = alpha * c;
  r.noise[fresh_noise_id()] = mul_up(std::fabs(alpha), x.magnitude()) * m.op_bound();
  return r;
}

// Rounded sum: shared noise ids superpose with sign, then one fresh term.
inline AffineForm affine_add(const AffineForm& x, const AffineForm& y, const FloatModel& m) {
  AffineForm r{x.central + y.central, x.noise};
  for (const auto& [id, c] : y.noise) r.noise[id] += c;
  double mag = add_up(std::fabs(r.central), r.radius());
  r.noise[fresh_noise_id()] = mag * m.op_bound();
  return r;
}

}  // namespace sdcguard
