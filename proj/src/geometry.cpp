#include "wlc/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "wlc/error.hpp"

namespace wlc {

namespace {

double merge_tol(double x) { return 1e-14 * std::max(1.0, x); }

void sort_and_merge(std::vector<Interval>& ivs) {
  std::erase_if(ivs, [](const Interval& iv) { return !(iv.lo < iv.hi); });
  std::sort(ivs.begin(), ivs.end(), [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
  std::size_t w = 0;
  for (std::size_t i = 0; i < ivs.size(); ++i) {
    if (w > 0 && ivs[i].lo - merge_tol(ivs[i].lo) <= ivs[w - 1].hi + merge_tol(ivs[w - 1].hi)) {
      ivs[w - 1].hi = std::max(ivs[w - 1].hi, ivs[i].hi);
    } else {
      ivs[w++] = ivs[i];
    }
  }
  ivs.resize(w);
}

}  // namespace

LambdaSupport LambdaSupport::from_intervals(std::span<const Interval> intervals) {
  LambdaSupport s;
  s.intervals_.reserve(intervals.size());
  for (Interval iv : intervals) {
    iv.lo = std::max(iv.lo, 0.0);
    s.intervals_.push_back(iv);
  }
  sort_and_merge(s.intervals_);
  return s;
}

bool LambdaSupport::contains(double lambda) const {
  auto it = std::upper_bound(intervals_.begin(), intervals_.end(), lambda,
                             [](double v, const Interval& iv) { return v < iv.lo; });
  if (it == intervals_.begin()) return false;
  --it;
  return lambda <= it->hi;
}

bool LambdaSupport::covers(const Interval& iv) const {
  auto it = std::upper_bound(intervals_.begin(), intervals_.end(), iv.lo,
                             [](double v, const Interval& x) { return v < x.lo; });
  if (it == intervals_.begin()) return false;
  --it;
  return iv.hi <= it->hi;
}

void LambdaSupport::insert(Interval iv) {
  iv.lo = std::max(iv.lo, 0.0);
  if (!(iv.lo < iv.hi)) return;
  auto it = std::lower_bound(intervals_.begin(), intervals_.end(), iv.lo,
                             [](const Interval& x, double v) { return x.hi + merge_tol(x.hi) < v; });
  auto jt = it;
  while (jt != intervals_.end() && jt->lo - merge_tol(jt->lo) <= iv.hi + merge_tol(iv.hi)) {
    iv.lo = std::min(iv.lo, jt->lo);
    iv.hi = std::max(iv.hi, jt->hi);
    ++jt;
  }
  it = intervals_.erase(it, jt);
  intervals_.insert(it, iv);
}

void LambdaSupport::check_invariants() const {
  for (std::size_t k = 0; k < intervals_.size(); ++k) {
    const auto& iv = intervals_[k];
    if (!(iv.lo >= 0.0)) throw std::logic_error("lambda support has a negative endpoint");
    if (!(iv.lo < iv.hi)) throw std::logic_error("lambda support has an empty interval");
    if (k + 1 < intervals_.size() && !(iv.hi < intervals_[k + 1].lo))
      throw std::logic_error("lambda support intervals overlap or are unsorted");
  }
}

LambdaSupport support_intersection(const LambdaSupport& a, const LambdaSupport& b) {
  std::vector<Interval> out;
  auto ia = a.intervals();
  auto ib = b.intervals();
  std::size_t i = 0, j = 0;
  while (i < ia.size() && j < ib.size()) {
    const double lo = std::max(ia[i].lo, ib[j].lo);
    const double hi = std::min(ia[i].hi, ib[j].hi);
    if (lo < hi) out.push_back({lo, hi});
    if (ia[i].hi < ib[j].hi)
      ++i;
    else
      ++j;
  }
  return LambdaSupport::from_intervals(out);
}

// --- configurations -------------------------------------------------------------

Configuration Configuration::slab(double a) {
  Configuration c{GeometryKind::slab, a, 0.0};
  c.validate();
  return c;
}
Configuration Configuration::sphere(double a, double R) {
  Configuration c{GeometryKind::sphere, a, R};
  c.validate();
  return c;
}
Configuration Configuration::cylinder(double a, double R) {
  Configuration c{GeometryKind::cylinder, a, R};
  c.validate();
  return c;
}

void Configuration::validate() const {
  if (!(a > 0.0) || !std::isfinite(a)) throw InvalidArgument("separation a must be positive and finite");
  if (kind != GeometryKind::slab && (!(R > 0.0) || !std::isfinite(R)))
    throw InvalidArgument("radius R must be positive and finite");
}

const char* to_string(GeometryKind kind) {
  switch (kind) {
    case GeometryKind::slab: return "slab";
    case GeometryKind::sphere: return "sphere";
    case GeometryKind::cylinder: return "cylinder";
  }
  return "?";
}

// --- supports ---------------------------------------------------------------------

ZExtent z_extent(std::span<const Vec3> points) {
  ZExtent e{kInf, -kInf};
  for (const auto& p : points) {
    e.min_z = std::min(e.min_z, p.z);
    e.max_z = std::max(e.max_z, p.z);
  }
  return e;
}

double plane_threshold(double height, const ZExtent& ext) {
  if (height > 0.0) return ext.min_z < 0.0 ? height / -ext.min_z : kInf;
  if (height < 0.0) return ext.max_z > 0.0 ? -height / ext.max_z : kInf;
  return 0.0;
}

LambdaSupport plate_support(const Plane& plane, const Vec3& x_cm, std::span<const Vec3> points) {
  const double lam = plane_threshold(x_cm.z - plane.z0, z_extent(points));
  if (lam == kInf) return {};
  return LambdaSupport::half_line(lam);
}

LambdaSupport slab_support(const SlabPair& pair, const Vec3& x_cm, std::span<const Vec3> points) {
  const ZExtent ext = z_extent(points);
  const double l0 = plane_threshold(x_cm.z, ext);
  const double l1 = plane_threshold(x_cm.z - pair.separation, ext);
  const double lam = std::max(l0, l1);
  if (lam == kInf) return {};
  return LambdaSupport::half_line(lam);
}

int quadratic_sublevel(double A, double B, double C, Interval out[2]) {
  if (A == 0.0) {
    if (B == 0.0) {
      if (C <= 0.0) {
        out[0] = {0.0, kInf};
        return 1;
      }
      return 0;
    }
    const double root = -C / B;
    if (B > 0.0) {
      if (root > 0.0) {
        out[0] = {0.0, root};
        return 1;
      }
      return 0;
    }
    out[0] = {std::max(root, 0.0), kInf};
    return 1;
  }
  const double disc = B * B - 4.0 * A * C;
  if (A > 0.0) {
    if (!(disc > 0.0)) return 0;
    const double q = -0.5 * (B + std::copysign(std::sqrt(disc), B));
    double r1 = q / A;
    double r2 = C / q;
    if (r1 > r2) std::swap(r1, r2);
    const double lo = std::max(r1, 0.0);
    if (lo < r2) {
      out[0] = {lo, r2};
      return 1;
    }
    return 0;
  }
  // A < 0: concave parabola, non-positive outside its roots.
  if (!(disc > 0.0)) {
    out[0] = {0.0, kInf};
    return 1;
  }
  const double q = -0.5 * (B + std::copysign(std::sqrt(disc), B));
  double r1 = q / A;
  double r2 = C / q;
  if (r1 > r2) std::swap(r1, r2);
  int n = 0;
  if (r1 > 0.0) out[n++] = {0.0, r1};
  out[n++] = {std::max(r2, 0.0), kInf};
  if (n == 2 && out[1].lo <= out[0].hi) {
    out[0].hi = kInf;
    n = 1;
  }
  return n;
}

namespace {

template <class Project>
LambdaSupport quadric_union(std::span<const Vec3> points, const Vec3& d, double radius, Project proj) {
  const Vec3 dp = proj(d);
  const double C = norm2(dp) - radius * radius;
  std::vector<Interval> ivs;
  Interval tmp[2];
  for (const auto& y : points) {
    const Vec3 p = proj(y);
    const int n = quadratic_sublevel(norm2(p), 2.0 * dot(p, dp), C, tmp);
    for (int k = 0; k < n; ++k) ivs.push_back(tmp[k]);
  }
  return LambdaSupport::from_intervals(ivs);
}

}  // namespace

LambdaSupport quadric_support(const Sphere& body, const Vec3& x_cm, std::span<const Vec3> points) {
  return quadric_union(points, x_cm - body.center, body.radius, [](const Vec3& v) { return v; });
}

LambdaSupport quadric_support(const Cylinder& body, const Vec3& x_cm, std::span<const Vec3> points) {
  const Vec3 axis{body.axis_x, 0.0, body.axis_z};
  return quadric_union(points, x_cm - axis, body.radius, [](const Vec3& v) { return Vec3{v.x, 0.0, v.z}; });
}

// --- LoopIndex ------------------------------------------------------------------------

LoopIndex::LoopIndex(std::span<const Vec3> points, Projection projection, std::size_t leaf_size)
    : projection_(projection), dim_(projection == Projection::full ? 3 : 2), n_points_(points.size()) {
  if (leaf_size < 1) leaf_size = 1;
  coords_.reserve(points.size() * dim_);
  norm2_.reserve(points.size());
  for (const auto& p : points) {
    if (dim_ == 3) {
      coords_.insert(coords_.end(), {p.x, p.y, p.z});
      norm2_.push_back(norm2(p));
    } else {
      coords_.insert(coords_.end(), {p.x, p.z});
      norm2_.push_back(p.x * p.x + p.z * p.z);
    }
    max_radius_ = std::max(max_radius_, std::sqrt(norm2_.back()));
  }
  if (!points.empty()) {
    nodes_.reserve(2 * (points.size() / leaf_size + 1));
    build(0, static_cast<std::uint32_t>(points.size()), leaf_size);
  }
}

std::int32_t LoopIndex::build(std::uint32_t begin, std::uint32_t end, std::size_t leaf_size) {
  const auto id = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back({});
  Node n{};
  n.begin = begin;
  n.end = end;
  n.left = n.right = -1;
  if (end - begin <= leaf_size) {
    double lo[3] = {kInf, kInf, kInf}, hi[3] = {-kInf, -kInf, -kInf};
    for (auto i = begin; i < end; ++i)
      for (int k = 0; k < dim_; ++k) {
        lo[k] = std::min(lo[k], coords_[i * dim_ + k]);
        hi[k] = std::max(hi[k], coords_[i * dim_ + k]);
      }
    for (int k = 0; k < 3; ++k) n.c[k] = k < dim_ ? 0.5 * (lo[k] + hi[k]) : 0.0;
    double r2 = 0.0;
    for (auto i = begin; i < end; ++i) {
      double s = 0.0;
      for (int k = 0; k < dim_; ++k) {
        const double t = coords_[i * dim_ + k] - n.c[k];
        s += t * t;
      }
      r2 = std::max(r2, s);
    }
    n.r = std::sqrt(r2);
  } else {
    const std::uint32_t mid = begin + (end - begin) / 2;
    n.left = build(begin, mid, leaf_size);
    n.right = build(mid, end, leaf_size);
    const Node& a = nodes_[n.left];
    const Node& b = nodes_[n.right];
    // Ball enclosing both child balls.
    double dist = 0.0;
    for (int k = 0; k < dim_; ++k) dist += (b.c[k] - a.c[k]) * (b.c[k] - a.c[k]);
    dist = std::sqrt(dist);
    if (dist + b.r <= a.r) {
      std::copy(a.c, a.c + 3, n.c);
      n.r = a.r;
    } else if (dist + a.r <= b.r) {
      std::copy(b.c, b.c + 3, n.c);
      n.r = b.r;
    } else {
      n.r = 0.5 * (dist + a.r + b.r);
      const double t = (n.r - a.r) / dist;
      for (int k = 0; k < 3; ++k) n.c[k] = a.c[k] + t * (b.c[k] - a.c[k]);
    }
  }
  // Absorb rounding so that the ball provably contains its points.
  n.r = n.r * (1.0 + 1e-12) + 1e-300;
  nodes_[id] = n;
  return id;
}

int LoopIndex::node_outer(const Node& n, const double* d, double d2, double radius, double floor,
                          Interval out[2]) const {
  double c2 = 0.0, dc = 0.0;
  for (int k = 0; k < dim_; ++k) {
    c2 += n.c[k] * n.c[k];
    dc += d[k] * n.c[k];
  }
  Interval raw[2];
  const int m = quadratic_sublevel(c2 - n.r * n.r, 2.0 * (dc - radius * n.r), d2 - radius * radius, raw);
  int cnt = 0;
  for (int k = 0; k < m; ++k) {
    Interval iv{std::max(raw[k].lo * (1.0 - 1e-12), floor), raw[k].hi * (1.0 + 1e-12)};
    if (iv.lo < iv.hi) out[cnt++] = iv;
  }
  return cnt;
}

void LoopIndex::visit(std::int32_t id, const double* d, double d2, double radius, double floor,
                      LambdaSupport& out) const {
  const Node& n = nodes_[id];
  Interval o[2];
  const int no = node_outer(n, d, d2, radius, floor, o);
  if (no == 0) return;
  bool covered = true;
  for (int k = 0; k < no && covered; ++k) covered = out.covers(o[k]);
  if (covered) return;
  if (n.left < 0) {
    const double C = d2 - radius * radius;
    Interval tmp[2];
    for (auto i = n.begin; i < n.end; ++i) {
      double pd = 0.0;
      for (int k = 0; k < dim_; ++k) pd += coords_[i * dim_ + k] * d[k];
      const int m = quadratic_sublevel(norm2_[i], 2.0 * pd, C, tmp);
      for (int k = 0; k < m; ++k) out.insert({std::max(tmp[k].lo, floor), tmp[k].hi});
    }
    return;
  }
  Interval ol[2], orr[2];
  const int nl = node_outer(nodes_[n.left], d, d2, radius, floor, ol);
  const int nr = node_outer(nodes_[n.right], d, d2, radius, floor, orr);
  const double left_lo = nl ? ol[0].lo : kInf;
  const double right_lo = nr ? orr[0].lo : kInf;
  if (left_lo <= right_lo) {
    if (nl) visit(n.left, d, d2, radius, floor, out);
    if (nr) visit(n.right, d, d2, radius, floor, out);
  } else {
    if (nr) visit(n.right, d, d2, radius, floor, out);
    if (nl) visit(n.left, d, d2, radius, floor, out);
  }
}

void LoopIndex::ball_support(const Vec3& offset, double radius, double floor, LambdaSupport& out) const {
  out.clear();
  if (nodes_.empty()) return;
  double d[3];
  double d2;
  if (dim_ == 3) {
    d[0] = offset.x;
    d[1] = offset.y;
    d[2] = offset.z;
    d2 = norm2(offset);
  } else {
    d[0] = offset.x;
    d[1] = offset.z;
    d[2] = 0.0;
    d2 = offset.x * offset.x + offset.z * offset.z;
  }
  visit(0, d, d2, radius, std::max(floor, 0.0), out);
}

}  // namespace wlc
