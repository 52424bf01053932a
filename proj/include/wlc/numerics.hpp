#pragma once

#include <cmath>
#include <span>

#include "wlc/vec3.hpp"

#ifdef __FAST_MATH__
#error "compensated summation is defeated by -ffast-math"
#endif

namespace wlc {

/// Neumaier-compensated accumulator. Adding the same values in the same order
/// always yields the same bits.
class CompensatedSum {
 public:
  CompensatedSum& operator+=(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      carry_ += (sum_ - t) + x;
    else
      carry_ += (x - t) + sum_;
    sum_ = t;
    return *this;
  }
  double value() const { return sum_ + carry_; }

 private:
  double sum_ = 0.0;
  double carry_ = 0.0;
};

inline double compensated_sum(std::span<const double> xs) {
  CompensatedSum s;
  for (double x : xs) s += x;
  return s.value();
}

inline Vec3 compensated_mean(std::span<const Vec3> xs) {
  CompensatedSum sx, sy, sz;
  for (const auto& v : xs) {
    sx += v.x;
    sy += v.y;
    sz += v.z;
  }
  const double n = static_cast<double>(xs.size());
  return {sx.value() / n, sy.value() / n, sz.value() / n};
}

}  // namespace wlc
