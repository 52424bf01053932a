#pragma once

// Globally adaptive cubature on unions of axis-aligned rectangles, using the
// degree-7 Genz-Malik rule with its embedded degree-5 rule for error control.
// Regions can be added while refining, which lets callers grow the domain.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <queue>
#include <vector>

namespace wlc {

struct Box2 {
  std::array<double, 2> lo{};
  std::array<double, 2> hi{};
  double area() const { return (hi[0] - lo[0]) * (hi[1] - lo[1]); }
};

struct CubatureStats {
  double value = 0.0;
  double error = 0.0;
  std::size_t evaluations = 0;
  std::size_t regions = 0;
  bool converged = true;
};

template <class F>
class AdaptiveCubature2D {
 public:
  AdaptiveCubature2D(F f, int max_depth, std::size_t max_evaluations)
      : f_(std::move(f)), max_depth_(max_depth), max_evals_(max_evaluations) {}

  /// Evaluates the rule on `box` and adds it to the working set.
  void add(const Box2& box, int depth = 0) {
    if (!(box.hi[0] > box.lo[0]) || !(box.hi[1] > box.lo[1])) return;
    Region r = evaluate(box, depth);
    value_ += r.value;
    error_ += r.error;
    push(std::move(r));
  }

  double value() const { return value_; }
  double error() const { return error_; }
  std::size_t evaluations() const { return evals_; }

  /// Bisects the worst region until error <= max(rel_tol |I|, abs_tol).
  /// Returns false if the depth or evaluation budget ran out first.
  bool refine(double rel_tol, double abs_tol) {
    for (;;) {
      if (error_ <= std::max(rel_tol * std::abs(value_), abs_tol)) return true;
      if (heap_.empty() || evals_ + 2 * kPoints > max_evals_) return false;
      Region r = heap_.top();
      heap_.pop();
      if (r.depth >= max_depth_) {
        // Frozen: keep its contribution but stop considering it.
        frozen_ = true;
        frozen_value_ += r.value;
        frozen_error_ += r.error;
        if (heap_.empty()) return false;
        continue;
      }
      value_ -= r.value;
      error_ -= r.error;
      Box2 a = r.box, b = r.box;
      const double mid = 0.5 * (r.box.lo[r.split_dim] + r.box.hi[r.split_dim]);
      a.hi[r.split_dim] = mid;
      b.lo[r.split_dim] = mid;
      add(a, r.depth + 1);
      add(b, r.depth + 1);
      // Recompute the running sums from scratch now and then to shed drift.
      if (++splits_ % 256 == 0) resum();
    }
  }

  CubatureStats stats() const {
    return {value_, error_, evals_, heap_.size(), !frozen_};
  }

 private:
  static constexpr std::size_t kPoints = 17;

  struct Region {
    Box2 box;
    double value = 0.0;
    double error = 0.0;
    int depth = 0;
    int split_dim = 0;
    std::size_t serial = 0;
  };
  struct WorseFirst {
    bool operator()(const Region& a, const Region& b) const {
      if (a.error != b.error) return a.error < b.error;
      return a.serial > b.serial;
    }
  };

  Region evaluate(const Box2& box, int depth) {
    static const double l2 = std::sqrt(9.0 / 70.0);
    static const double l4 = std::sqrt(9.0 / 10.0);
    static const double l5 = std::sqrt(9.0 / 19.0);
    constexpr double w1 = -3816.0 / 19683.0, w2 = 980.0 / 6561.0, w3 = 1020.0 / 19683.0,
                     w4 = 200.0 / 19683.0, w5 = 6859.0 / 19683.0 / 4.0;
    constexpr double v1 = -971.0 / 729.0, v2 = 245.0 / 486.0, v3 = 65.0 / 1458.0, v4 = 25.0 / 729.0;

    const double cx = 0.5 * (box.lo[0] + box.hi[0]), cy = 0.5 * (box.lo[1] + box.hi[1]);
    const double hx = 0.5 * (box.hi[0] - box.lo[0]), hy = 0.5 * (box.hi[1] - box.lo[1]);
    const double f0 = f_(cx, cy);
    const double a2x = f_(cx - l2 * hx, cy), b2x = f_(cx + l2 * hx, cy);
    const double a2y = f_(cx, cy - l2 * hy), b2y = f_(cx, cy + l2 * hy);
    const double a4x = f_(cx - l4 * hx, cy), b4x = f_(cx + l4 * hx, cy);
    const double a4y = f_(cx, cy - l4 * hy), b4y = f_(cx, cy + l4 * hy);
    const double s4 = f_(cx - l4 * hx, cy - l4 * hy) + f_(cx + l4 * hx, cy - l4 * hy) +
                      f_(cx - l4 * hx, cy + l4 * hy) + f_(cx + l4 * hx, cy + l4 * hy);
    const double s5 = f_(cx - l5 * hx, cy - l5 * hy) + f_(cx + l5 * hx, cy - l5 * hy) +
                      f_(cx - l5 * hx, cy + l5 * hy) + f_(cx + l5 * hx, cy + l5 * hy);
    evals_ += kPoints;

    const double s2 = a2x + b2x + a2y + b2y;
    const double s3 = a4x + b4x + a4y + b4y;
    const double vol = 4.0 * hx * hy;
    Region r;
    r.box = box;
    r.depth = depth;
    r.serial = serial_++;
    r.value = vol * (w1 * f0 + w2 * s2 + w3 * s3 + w4 * s4 + w5 * s5);
    const double low = vol * (v1 * f0 + v2 * s2 + v3 * s3 + v4 * s4);
    r.error = std::abs(r.value - low);

    const double dx = std::abs((a2x + b2x - 2 * f0) - (a4x + b4x - 2 * f0) / 7.0);
    const double dy = std::abs((a2y + b2y - 2 * f0) - (a4y + b4y - 2 * f0) / 7.0);
    if (dx > dy)
      r.split_dim = 0;
    else if (dy > dx)
      r.split_dim = 1;
    else
      r.split_dim = hx >= hy ? 0 : 1;
    return r;
  }

  void push(Region r) { heap_.push(std::move(r)); }

  void resum() {
    auto copy = heap_;
    double v = 0.0, e = 0.0;
    while (!copy.empty()) {
      v += copy.top().value;
      e += copy.top().error;
      copy.pop();
    }
    value_ = v + frozen_value_;
    error_ = e + frozen_error_;
  }

  F f_;
  int max_depth_;
  std::size_t max_evals_;
  std::priority_queue<Region, std::vector<Region>, WorseFirst> heap_;
  double value_ = 0.0;
  double error_ = 0.0;
  double frozen_value_ = 0.0;
  double frozen_error_ = 0.0;
  bool frozen_ = false;
  std::size_t evals_ = 0;
  std::size_t serial_ = 0;
  std::size_t splits_ = 0;
};

template <class F>
AdaptiveCubature2D<F> make_cubature(F f, int max_depth, std::size_t max_evaluations) {
  return AdaptiveCubature2D<F>(std::move(f), max_depth, max_evaluations);
}

}  // namespace wlc
