#pragma once

// Dirichlet bodies and the exact scale sets ("lambda supports") on which a
// scaled and translated unit loop touches them. A unit loop y placed at x_cm
// with scale lambda = sqrt(T) occupies the points x_cm + lambda * y_i.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "wlc/vec3.hpp"

namespace wlc {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct Interval {
  double lo = 0.0;
  double hi = kInf;
  friend bool operator==(const Interval&, const Interval&) = default;
};

/// Sorted union of disjoint intervals in lambda >= 0. The last interval may be
/// unbounded. Endpoints closer than 1e-14 * max(1, lambda) are merged.
class LambdaSupport {
 public:
  LambdaSupport() = default;
  static LambdaSupport from_intervals(std::span<const Interval> intervals);
  static LambdaSupport half_line(double lo) { return from_intervals(std::vector<Interval>{{lo, kInf}}); }

  std::span<const Interval> intervals() const { return intervals_; }
  std::size_t size() const { return intervals_.size(); }
  bool empty() const { return intervals_.empty(); }
  bool contains(double lambda) const;
  /// True when `iv` lies inside a single interval of the set.
  bool covers(const Interval& iv) const;

  /// Adds [lo, hi]; intervals with lo >= hi (after clipping to lambda >= 0) are ignored.
  void insert(Interval iv);
  void clear() { intervals_.clear(); }

  /// Throws std::logic_error if sortedness, disjointness or non-negativity fail.
  void check_invariants() const;

  friend bool operator==(const LambdaSupport&, const LambdaSupport&) = default;

 private:
  std::vector<Interval> intervals_;
};

LambdaSupport support_intersection(const LambdaSupport& a, const LambdaSupport& b);

// --- bodies -----------------------------------------------------------------

/// The plane z = z0 (the plate surface). Contact means crossing or touching it.
struct Plane {
  double z0 = 0.0;
};

struct Sphere {
  double radius = 1.0;
  Vec3 center{};
};

/// Infinite cylinder with axis parallel to y through (axis_x, *, axis_z).
struct Cylinder {
  double radius = 1.0;
  double axis_x = 0.0;
  double axis_z = 0.0;
};

/// Planes z = 0 and z = separation.
struct SlabPair {
  double separation = 1.0;
};

enum class GeometryKind { slab, sphere, cylinder };

/// A body above the plate z = 0 at minimal distance a; R is unused for slabs.
struct Configuration {
  GeometryKind kind = GeometryKind::slab;
  double a = 1.0;
  double R = 0.0;

  static Configuration slab(double a);
  static Configuration sphere(double a, double R);
  static Configuration cylinder(double a, double R);

  /// Throws InvalidArgument unless a > 0 (and R > 0 for curved bodies).
  void validate() const;
  Sphere sphere_body() const { return {R, {0.0, 0.0, a + R}}; }
  Cylinder cylinder_body() const { return {R, 0.0, a + R}; }
  SlabPair slab_body() const { return {a}; }
  /// Same geometry with every length multiplied by `kappa`.
  Configuration scaled(double kappa) const { return {kind, a * kappa, R * kappa}; }
};

const char* to_string(GeometryKind kind);

// --- supports -----------------------------------------------------------------

/// Extreme z-components of a loop; all that matters for planes.
struct ZExtent {
  double min_z = 0.0;
  double max_z = 0.0;
};
ZExtent z_extent(std::span<const Vec3> points);

/// Smallest lambda at which a loop with extent `ext` whose center sits at
/// signed height `height` above a plane touches it; +inf if never.
double plane_threshold(double height, const ZExtent& ext);

LambdaSupport plate_support(const Plane& plane, const Vec3& x_cm, std::span<const Vec3> points);
inline LambdaSupport plate_support(const Vec3& x_cm, std::span<const Vec3> points) {
  return plate_support(Plane{}, x_cm, points);
}

/// Union over loop points of {lambda >= 0 : |x_cm + lambda y_i - c|^2 <= R^2}.
LambdaSupport quadric_support(const Sphere& body, const Vec3& x_cm, std::span<const Vec3> points);
/// Same in the (x, z) cross-section of the cylinder.
LambdaSupport quadric_support(const Cylinder& body, const Vec3& x_cm, std::span<const Vec3> points);

LambdaSupport slab_support(const SlabPair& pair, const Vec3& x_cm, std::span<const Vec3> points);

/// {lambda >= 0 : A lambda^2 + B lambda + C <= 0} as at most two intervals.
/// Returns the count written to `out`. A vanishing discriminant with A > 0
/// yields nothing (tangency has measure zero).
int quadratic_sublevel(double A, double B, double C, Interval out[2]);

// --- accelerated queries --------------------------------------------------------

/// Bounding-ball hierarchy over contiguous runs of loop points. Answers the
/// same question as quadric_support, restricted to lambda >= floor, while
/// skipping runs whose possible contributions are already covered. Results
/// agree with the brute-force union.
class LoopIndex {
 public:
  enum class Projection { full, xz };

  LoopIndex(std::span<const Vec3> points, Projection projection, std::size_t leaf_size = 16);

  Projection projection() const { return projection_; }
  std::size_t size() const { return n_points_; }
  /// Largest projected distance of a loop point from the origin.
  double max_radius() const { return nodes_.empty() ? 0.0 : max_radius_; }

  /// Support of the ball (3D, or disk in x-z for Projection::xz) of radius
  /// `radius` with `offset` = x_cm - center, clipped to [floor, inf).
  void ball_support(const Vec3& offset, double radius, double floor, LambdaSupport& out) const;

 private:
  struct Node {
    double c[3];
    double r;
    std::uint32_t begin, end;
    std::int32_t left, right;
  };
  std::int32_t build(std::uint32_t begin, std::uint32_t end, std::size_t leaf_size);
  void visit(std::int32_t node, const double* d, double d2, double radius, double floor,
             LambdaSupport& out) const;
  int node_outer(const Node& n, const double* d, double d2, double radius, double floor,
                 Interval out[2]) const;

  Projection projection_;
  int dim_;
  std::size_t n_points_ = 0;
  std::vector<double> coords_;  // dim_ per point
  std::vector<double> norm2_;
  std::vector<Node> nodes_;
  double max_radius_ = 0.0;
};

}  // namespace wlc
