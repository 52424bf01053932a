#include "wlc/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "wlc/error.hpp"
#include "wlc/numerics.hpp"
#include "wlc/parallel.hpp"
#include "wlc/quadrature.hpp"
#include "wlc/stats.hpp"

namespace wlc {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kMassRelTol = 1e-10;
constexpr int kMaxShells = 64;
constexpr double kStartExtent = 1.0;  // first truncation distance, units of a
constexpr double kPolarRadius = 2.0;    // R / a below which the polar cover is used
constexpr double kResolvedRadius = 8.0; // angular cells of arc ~R out to this radius

double pow4(double x) {
  const double x2 = x * x;
  return x2 * x2;
}

double interval_integral(double lo, double hi, double mass) {
  if (!(hi > lo)) return 0.0;
  if (lo <= 0.0) throw DivergenceError("propertime integral diverges: support reaches lambda = 0");
  if (mass == 0.0) return 0.5 * (1.0 / pow4(lo) - (hi == kInf ? 0.0 : 1.0 / pow4(hi)));
  const double m2 = mass * mass;
  auto f = [m2](double lam) {
    const double l2 = lam * lam;
    return 2.0 * std::exp(-m2 * l2) / (l2 * l2 * lam);
  };
  // Integrate in lambda / lo so the integrand is O(1) at the lower end.
  auto g = [&](double s) { return f(lo * s) * lo; };
  const double upper = hi == kInf ? kInf : hi / lo;
  double err = 0.0;
  const double v = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(g, 1.0, upper, 30,
                                                                                 kMassRelTol, &err);
  return v;
}

double sum_support(const LambdaSupport& s, double mass) {
  double total = 0.0;
  for (const auto& iv : s.intervals()) total += interval_integral(iv.lo, iv.hi, mass);
  return total;
}

// Spatial dimension of the reduced integral: the energy scales as a^(dim-4).
int com_dimension(GeometryKind kind) {
  switch (kind) {
    case GeometryKind::slab: return 1;
    case GeometryKind::cylinder: return 2;
    case GeometryKind::sphere: return 3;
  }
  return 3;
}

double length_power(double a, int p) { return std::pow(a, static_cast<double>(p)); }

// Certified bound on the integral outside {D <= L}, D = max(|z|, distance to
// the body), for unit plate distance, body radius R and loop reach r. Uses
// integrand <= (r/D)^4 / 2.
double tail_bound(GeometryKind kind, double R, double r, double L) {
  const double r4 = pow4(r);
  const double L2 = L * L, L3 = L2 * L, L4 = L2 * L2;
  switch (kind) {
    case GeometryKind::slab: return 4.0 * r4 / (3.0 * L3);
    case GeometryKind::cylinder: {
      const double strip = 8.0 * r4 * (R / (3.0 * L3) + 1.0 / (2.0 * L2));
      const double disk = 2.0 * kPi * r4 * (R * R / (4.0 * L4) + 2.0 * R / (3.0 * L3) + 1.0 / (2.0 * L2));
      return std::min(strip, disk);
    }
    case GeometryKind::sphere: {
      const double slab = 4.0 * kPi * r4 * (R * R / (3.0 * L3) + R / L2 + 1.0 / L);
      const double ball =
          8.0 * kPi / 3.0 * r4 * (R * R * R / (4.0 * L4) + R * R / L3 + 1.5 * R / L2 + 1.0 / L);
      return std::min(slab, ball);
    }
  }
  return kInf;
}

// Squared radial (sphere) or half-width (cylinder) extent of {D <= L} in the
// unit geometry; the body center sits at height 1 + R.
double lateral_extent2(double R, double L) {
  const double zc = 1.0 + R;
  const double dz = zc - std::min(L, zc);
  return (R + L) * (R + L) - dz * dz;
}

struct Unit {
  Configuration geometry;
  double mass;
  double scale;  // physical value = scale * unit value
};

Unit to_unit(const Configuration& config, double mass) {
  const double a = config.a;
  Configuration g{config.kind, 1.0, config.kind == GeometryKind::slab ? 0.0 : config.R / a};
  return {g, mass * a, length_power(a, com_dimension(config.kind) - 4)};
}

ComResult integrate_slab(const Unit& u, const PreparedLoop& loop, const EngineConfig& cfg) {
  ComResult res;
  const ZExtent ext = loop.extent();
  const double r = loop.reach(GeometryKind::slab);
  if (r == 0.0) return res;
  LambdaSupport scratch;
  std::size_t evals = 0;
  auto f = [&](double z) {
    ++evals;
    return loop.integrand(u.geometry, {0.0, 0.0, z}, u.mass, scratch);
  };
  bool ok = true;
  double value = 0.0, error = 0.0;
  auto piece = [&](double lo, double hi) {
    if (!(hi > lo)) return;
    double err = 0.0, l1 = 0.0;
    const double v = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(
        f, lo, hi, static_cast<unsigned>(std::min(cfg.max_depth, 30)), cfg.quad_rel_tol, &err, &l1);
    if (err > cfg.quad_rel_tol * l1 && err > 0.0) ok = false;
    value += v;
    error += err;
  };
  // Kinks of the integrand: both planes and the point where the two plane
  // thresholds coincide.
  const double down = -ext.min_z, up = ext.max_z;
  const double kink = (down > 0.0 && up > 0.0) ? down / (down + up) : 0.5;
  piece(0.0, kink);
  piece(kink, 1.0);
  double L = kStartExtent;
  int shells = 0;
  while (tail_bound(GeometryKind::slab, 0.0, r, L) > cfg.trunc_tol * std::abs(value)) {
    if (++shells > kMaxShells) {
      ok = false;
      break;
    }
    const double L2 = 2.0 * L;
    piece(1.0 - L2, 1.0 - L);
    piece(L, L2);
    L = L2;
  }
  res.value = u.scale * value;
  res.error = u.scale * (error + tail_bound(GeometryKind::slab, 0.0, r, L));
  res.extent = L;
  res.evaluations = evals;
  res.converged = ok;
  return res;
}

template <class F>
ComResult grow_and_refine(GeometryKind kind, double R, double r, F f, const Unit& u, const EngineConfig& cfg) {
  const bool sphere = kind == GeometryKind::sphere;
  auto cub = make_cubature(f, cfg.max_depth, cfg.max_evaluations);
  // Sphere coordinates are (w = rho^2, z); cylinder coordinates are (x, z).
  auto box = [&](double L) {
    const double e2 = lateral_extent2(R, L);
    Box2 b;
    b.lo = {sphere ? 0.0 : -std::sqrt(e2), 1.0 - L};
    b.hi = {sphere ? e2 : std::sqrt(e2), L};
    return b;
  };
  double L = kStartExtent;
  cub.add(box(L));
  bool ok = true;
  int shells = 0;
  for (;;) {
    if (!cub.refine(cfg.quad_rel_tol, 0.0)) {
      ok = false;
      break;
    }
    if (tail_bound(kind, R, r, L) <= cfg.trunc_tol * std::abs(cub.value())) break;
    if (++shells > kMaxShells) {
      ok = false;
      break;
    }
    const Box2 inner = box(L), outer = box(2.0 * L);
    cub.add({{outer.lo[0], outer.lo[1]}, {outer.hi[0], inner.lo[1]}});
    cub.add({{outer.lo[0], inner.hi[1]}, {outer.hi[0], outer.hi[1]}});
    if (!sphere) cub.add({{outer.lo[0], inner.lo[1]}, {inner.lo[0], inner.hi[1]}});
    cub.add({{inner.hi[0], inner.lo[1]}, {outer.hi[0], inner.hi[1]}});
    L *= 2.0;
  }
  const CubatureStats st = cub.stats();
  ComResult res;
  res.value = u.scale * st.value;
  res.error = u.scale * (st.error + tail_bound(kind, R, r, L));
  res.extent = L;
  res.evaluations = st.evaluations;
  res.converged = ok && st.converged;
  return res;
}

// Small bodies: contact regions are strips of width ~2R radiating from the
// body center, which coarse boxes can miss entirely. Cover the plane with
// annuli around the center, split in angle into cells of arc length ~R.
// Beyond kResolvedRadius the cells coarsen again since the strips there
// carry a vanishing share of the integral. Coordinates are (r, theta); the
// disk r <= R + L contains {D <= L}, so the same tail bound applies.
template <class F>
ComResult grow_and_refine_polar(GeometryKind kind, double R, double r, F f, const Unit& u, const EngineConfig& cfg) {
  const double span = kind == GeometryKind::sphere ? kPi : 2.0 * kPi;
  auto cub = make_cubature(f, cfg.max_depth, cfg.max_evaluations);
  auto annulus = [&](double r_in, double r_out) {
    const double coarsen = std::min(1.0, (kResolvedRadius / r_out) * (kResolvedRadius / r_out));
    const double cells = span * r_out / R * coarsen;
    const std::size_t n = std::max<std::size_t>(4, static_cast<std::size_t>(std::ceil(cells)));
    const double h = span / static_cast<double>(n);
    for (std::size_t k = 0; k < n; ++k)
      cub.add({{r_in, h * static_cast<double>(k)}, {r_out, k + 1 == n ? span : h * static_cast<double>(k + 1)}});
  };
  // Geometric annuli from 2R out to R + 1.
  double r_in = 0.0, r_out = 2.0 * R;
  while (r_out < R + kStartExtent) {
    annulus(r_in, r_out);
    r_in = r_out;
    r_out *= 2.0;
  }
  double L = kStartExtent;
  annulus(r_in, R + L);
  bool ok = true;
  int shells = 0;
  for (;;) {
    if (!cub.refine(cfg.quad_rel_tol, 0.0)) {
      ok = false;
      break;
    }
    if (tail_bound(kind, R, r, L) <= cfg.trunc_tol * std::abs(cub.value())) break;
    if (++shells > kMaxShells) {
      ok = false;
      break;
    }
    annulus(R + L, R + 2.0 * L);
    L *= 2.0;
  }
  const CubatureStats st = cub.stats();
  ComResult res;
  res.value = u.scale * st.value;
  res.error = u.scale * (st.error + tail_bound(kind, R, r, L));
  res.extent = L;
  res.evaluations = st.evaluations;
  res.converged = ok && st.converged;
  return res;
}

ComResult integrate_curved(const Unit& u, const PreparedLoop& loop, const EngineConfig& cfg) {
  const GeometryKind kind = u.geometry.kind;
  const double R = u.geometry.R;
  const double r = loop.reach(kind);
  if (r == 0.0) return {};
  LambdaSupport scratch;
  const double zc = 1.0 + R;
  if (R < kPolarRadius) {
    if (kind == GeometryKind::sphere) {
      // Volume element 2 pi rho r dr dtheta with theta from the +z axis.
      auto f = [&](double rr, double th) {
        const double rho = rr * std::sin(th);
        return 2.0 * kPi * rho * rr *
               loop.integrand(u.geometry, {rho, 0.0, zc + rr * std::cos(th)}, u.mass, scratch);
      };
      return grow_and_refine_polar(kind, R, r, f, u, cfg);
    }
    auto f = [&](double rr, double th) {
      return rr * loop.integrand(u.geometry, {rr * std::cos(th), 0.0, zc + rr * std::sin(th)}, u.mass, scratch);
    };
    return grow_and_refine_polar(kind, R, r, f, u, cfg);
  }
  if (kind == GeometryKind::sphere) {
    auto f = [&](double w, double z) {
      return kPi * loop.integrand(u.geometry, {std::sqrt(std::max(w, 0.0)), 0.0, z}, u.mass, scratch);
    };
    return grow_and_refine(kind, R, r, f, u, cfg);
  }
  auto f = [&](double x, double z) { return loop.integrand(u.geometry, {x, 0.0, z}, u.mass, scratch); };
  return grow_and_refine(kind, R, r, f, u, cfg);
}

std::vector<Vec3> subloop(std::span<const Vec3> points, std::size_t stride) {
  std::vector<Vec3> sub;
  sub.reserve(points.size() / stride);
  for (std::size_t i = 0; i < points.size(); i += stride) sub.push_back(points[i]);
  const Vec3 c = compensated_mean(sub);
  for (auto& p : sub) p = p - c;
  return sub;
}

// Cyclic axis permutation number `turn` (0: identity).
std::vector<Vec3> rotate_axes(std::span<const Vec3> points, int turn) {
  std::vector<Vec3> out(points.begin(), points.end());
  for (auto& p : out) {
    if (turn == 1)
      p = {p.y, p.z, p.x};
    else if (turn == 2)
      p = {p.z, p.x, p.y};
  }
  return out;
}

}  // namespace

void EngineConfig::validate() const {
  if (!(mass >= 0.0) || !std::isfinite(mass)) throw InvalidArgument("mass must be finite and >= 0");
  if (!(quad_rel_tol > 0.0 && quad_rel_tol < 1.0)) throw InvalidArgument("quadrature tolerance must lie in (0, 1)");
  if (!(trunc_tol > 0.0 && trunc_tol < 1.0)) throw InvalidArgument("truncation tolerance must lie in (0, 1)");
  if (max_depth < 1) throw InvalidArgument("max depth must be positive");
  if (max_evaluations < 64) throw InvalidArgument("evaluation budget too small");
  if (batch_size < 1) throw InvalidArgument("batch size must be positive");
  if (blocks < 2) throw InvalidArgument("jackknife needs at least 2 blocks");
  if (orientations != 1 && orientations != 3) throw InvalidArgument("orientations must be 1 or 3");
}

double propertime_integral(const LambdaSupport& support, double mass) {
  if (!(mass >= 0.0) || !std::isfinite(mass)) throw InvalidArgument("mass must be finite and >= 0");
  return sum_support(support, mass);
}

double com_integrand(const Configuration& config, std::span<const Vec3> points, const Vec3& x_cm, double mass) {
  config.validate();
  switch (config.kind) {
    case GeometryKind::slab: return propertime_integral(slab_support(config.slab_body(), x_cm, points), mass);
    case GeometryKind::sphere:
      return propertime_integral(
          support_intersection(plate_support(x_cm, points), quadric_support(config.sphere_body(), x_cm, points)),
          mass);
    case GeometryKind::cylinder:
      return propertime_integral(support_intersection(plate_support(x_cm, points),
                                                      quadric_support(config.cylinder_body(), x_cm, points)),
                                 mass);
  }
  return 0.0;
}

PreparedLoop::PreparedLoop(std::span<const Vec3> points, std::span<const GeometryKind> kinds)
    : points_(points), extent_(z_extent(points)) {
  for (const auto& p : points) {
    reach_full_ = std::max(reach_full_, norm(p));
    reach_xz_ = std::max(reach_xz_, std::hypot(p.x, p.z));
  }
  const bool want_full = std::find(kinds.begin(), kinds.end(), GeometryKind::sphere) != kinds.end();
  const bool want_xz = std::find(kinds.begin(), kinds.end(), GeometryKind::cylinder) != kinds.end();
  if (want_full) full_.emplace(points, LoopIndex::Projection::full);
  if (want_xz) xz_.emplace(points, LoopIndex::Projection::xz);
}

double PreparedLoop::reach(GeometryKind kind) const {
  switch (kind) {
    case GeometryKind::slab: return std::max(-extent_.min_z, extent_.max_z);
    case GeometryKind::cylinder: return reach_xz_;
    case GeometryKind::sphere: return reach_full_;
  }
  return reach_full_;
}

double PreparedLoop::integrand(const Configuration& config, const Vec3& x, double mass,
                               LambdaSupport& scratch) const {
  if (config.kind == GeometryKind::slab) {
    const double lam = std::max(plane_threshold(x.z, extent_), plane_threshold(x.z - config.a, extent_));
    return lam == kInf ? 0.0 : interval_integral(lam, kInf, mass);
  }
  const double floor = plane_threshold(x.z, extent_);
  if (floor == kInf) return 0.0;
  const Vec3 center{0.0, 0.0, config.a + config.R};
  const LoopIndex* index = config.kind == GeometryKind::sphere ? (full_ ? &*full_ : nullptr) : (xz_ ? &*xz_ : nullptr);
  if (!index) throw std::logic_error("PreparedLoop: geometry kind was not prepared");
  index->ball_support(x - center, config.R, floor, scratch);
  return sum_support(scratch, mass);
}

ComResult integrate_com(const Configuration& config, const PreparedLoop& loop, const EngineConfig& cfg) {
  config.validate();
  cfg.validate();
  const Unit u = to_unit(config, cfg.mass);
  if (config.kind == GeometryKind::slab) return integrate_slab(u, loop, cfg);
  return integrate_curved(u, loop, cfg);
}

ComResult integrate_com(const Configuration& config, std::span<const Vec3> points, const EngineConfig& cfg) {
  const GeometryKind kinds[] = {config.kind};
  const PreparedLoop loop(points, kinds);
  return integrate_com(config, loop, cfg);
}

ComResult integrate_com_box(const Configuration& config, const PreparedLoop& loop, double rho_lo, double rho_hi,
                            double z_lo, double z_hi, const EngineConfig& cfg) {
  config.validate();
  cfg.validate();
  if (!(z_hi > z_lo)) throw InvalidArgument("empty z range");
  if (config.kind != GeometryKind::slab && !(rho_hi > rho_lo)) throw InvalidArgument("empty lateral range");
  if (config.kind == GeometryKind::sphere && rho_lo < 0.0) throw InvalidArgument("sphere radial range starts below 0");
  const Unit u = to_unit(config, cfg.mass);
  const double a = config.a;
  LambdaSupport scratch;
  ComResult res;
  if (config.kind == GeometryKind::slab) {
    std::size_t evals = 0;
    auto f = [&](double z) {
      ++evals;
      return loop.integrand(u.geometry, {0.0, 0.0, z}, u.mass, scratch);
    };
    double err = 0.0, l1 = 0.0;
    const double v = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(
        f, z_lo / a, z_hi / a, static_cast<unsigned>(std::min(cfg.max_depth, 30)), cfg.quad_rel_tol, &err, &l1);
    res.value = u.scale * v;
    res.error = u.scale * err;
    res.evaluations = evals;
    res.converged = !(err > cfg.quad_rel_tol * l1 && err > 0.0);
    return res;
  }
  auto finish = [&](auto& cub) {
    const bool ok = cub.refine(cfg.quad_rel_tol, 0.0);
    const CubatureStats st = cub.stats();
    res.value = u.scale * st.value;
    res.error = u.scale * st.error;
    res.evaluations = st.evaluations;
    res.converged = ok && st.converged;
    return res;
  };
  if (config.kind == GeometryKind::sphere) {
    auto f = [&](double w, double z) {
      return kPi * loop.integrand(u.geometry, {std::sqrt(std::max(w, 0.0)), 0.0, z}, u.mass, scratch);
    };
    auto cub = make_cubature(f, cfg.max_depth, cfg.max_evaluations);
    cub.add({{rho_lo * rho_lo / (a * a), z_lo / a}, {rho_hi * rho_hi / (a * a), z_hi / a}});
    return finish(cub);
  }
  auto f = [&](double x, double z) { return loop.integrand(u.geometry, {x, 0.0, z}, u.mass, scratch); };
  auto cub = make_cubature(f, cfg.max_depth, cfg.max_evaluations);
  cub.add({{rho_lo / a, z_lo / a}, {rho_hi / a, z_hi / a}});
  return finish(cub);
}

double pfa_control(const Configuration& config, const ZExtent& extent) {
  config.validate();
  const double range4 = pow4(extent.max_z - extent.min_z);
  const double a = config.a;
  switch (config.kind) {
    case GeometryKind::slab: return range4 / (6.0 * a * a * a);
    case GeometryKind::sphere: return kPi * config.R * range4 / (6.0 * a * a);
    case GeometryKind::cylinder:
      return range4 / 6.0 * (3.0 * kPi / 8.0) * std::sqrt(2.0 * config.R) / std::pow(a, 2.5);
  }
  return 0.0;
}

std::vector<EnergyResult> casimir_energies(std::span<const Configuration> configs, const LoopSource& loops,
                                           const EngineConfig& cfg) {
  cfg.validate();
  if (configs.empty()) throw InvalidArgument("no geometry given");
  for (const auto& c : configs) c.validate();
  const EnsembleMeta meta = loops.meta();
  if (meta.n_loops == 0) throw InvalidArgument("empty ensemble");
  validate(meta);
  if (cfg.extrapolate && (meta.n_points % 4 != 0 || meta.n_points < 8))
    throw InvalidArgument("extrapolation needs N divisible by 4 and N >= 8");

  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t n = meta.n_loops, k_count = configs.size();
  std::vector<GeometryKind> kinds;
  for (const auto& c : configs) kinds.push_back(c.kind);
  std::vector<std::vector<double>> v(k_count, std::vector<double>(n)), c(k_count, std::vector<double>(n));
  std::vector<std::vector<char>> bad(k_count, std::vector<char>(n, 0));
  const std::size_t threads = cfg.threads ? cfg.threads : default_thread_count();

  for (std::size_t start = 0; start < n; start += cfg.batch_size) {
    const std::size_t count = std::min(cfg.batch_size, n - start);
    parallel_for(count, threads, [&](std::size_t j) {
      const std::size_t i = start + j;
      const UnitLoop loop = loops.loop(i);
      std::vector<double> value(k_count, 0.0), control(k_count, 0.0);
      std::vector<char> ok(k_count, 1);
      for (int o = 0; o < cfg.orientations; ++o) {
        const std::vector<Vec3> turned = rotate_axes(loop.points(), o);
        const PreparedLoop full(turned, kinds);
        std::vector<Vec3> sub_points;
        std::optional<PreparedLoop> sub;
        if (cfg.extrapolate) {
          sub_points = subloop(turned, 4);
          sub.emplace(sub_points, kinds);
        }
        for (std::size_t k = 0; k < k_count; ++k) {
          const ComResult r = integrate_com(configs[k], full, cfg);
          double val = r.value;
          double ctl = pfa_control(configs[k], full.extent());
          bool conv = r.converged;
          if (sub) {
            const ComResult rs = integrate_com(configs[k], *sub, cfg);
            val = 2.0 * val - rs.value;
            ctl = 2.0 * ctl - pfa_control(configs[k], sub->extent());
            conv = conv && rs.converged;
          }
          value[k] += val;
          control[k] += ctl;
          if (!conv) ok[k] = 0;
        }
      }
      for (std::size_t k = 0; k < k_count; ++k) {
        v[k][i] = value[k] / cfg.orientations;
        c[k][i] = control[k] / cfg.orientations;
        bad[k][i] = ok[k] ? 0 : 1;
      }
    });
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::vector<EnergyResult> out;
  out.reserve(k_count);
  const std::size_t n_b = std::min(cfg.blocks, n);
  for (std::size_t k = 0; k < k_count; ++k) {
    EnergyResult e;
    e.geometry = configs[k];
    e.ensemble = meta;
    e.config = cfg;
    e.wall_seconds = wall;
    if (n_b >= 2) {
      const JackknifeResult m = jackknife_mean(v[k], n_b);
      e.value = kEnergyPrefactor * m.mean;
      e.stat_error = -kEnergyPrefactor * m.error;
      const JackknifeResult q = jackknife_ratio(v[k], c[k], n_b);
      e.norm_value = q.mean;
      e.norm_error = q.error;
    } else {
      // A single loop carries no error information.
      e.value = kEnergyPrefactor * v[k][0];
      e.norm_value = c[k][0] != 0.0 ? v[k][0] / c[k][0] : 0.0;
    }
    e.unconverged = static_cast<std::size_t>(std::count(bad[k].begin(), bad[k].end(), 1));
    e.per_loop = std::move(v[k]);
    e.per_loop_control = std::move(c[k]);
    out.push_back(std::move(e));
  }
  return out;
}

EnergyResult casimir_energy(const Configuration& config, const LoopSource& loops, const EngineConfig& cfg) {
  const Configuration one[] = {config};
  return std::move(casimir_energies(one, loops, cfg).front());
}

void DensitySpec::validate() const {
  if (n_rho < 1 || n_z < 1) throw InvalidArgument("density grid needs at least one node per axis");
  if (!std::isfinite(rho_min) || !std::isfinite(rho_max) || !std::isfinite(z_min) || !std::isfinite(z_max))
    throw InvalidArgument("density grid bounds must be finite");
  if (rho_max < rho_min || z_max < z_min) throw InvalidArgument("density grid bounds reversed");
  if ((n_rho > 1 && rho_max == rho_min) || (n_z > 1 && z_max == z_min))
    throw InvalidArgument("degenerate density grid axis");
}

double DensitySpec::rho(std::size_t i) const {
  return n_rho == 1 ? rho_min : rho_min + (rho_max - rho_min) * static_cast<double>(i) / static_cast<double>(n_rho - 1);
}

double DensitySpec::z(std::size_t j) const {
  return n_z == 1 ? z_min : z_min + (z_max - z_min) * static_cast<double>(j) / static_cast<double>(n_z - 1);
}

DensityGrid energy_density(const Configuration& config, const LoopSource& loops, const DensitySpec& spec,
                           const EngineConfig& cfg) {
  config.validate();
  cfg.validate();
  spec.validate();
  const std::size_t n = loops.size();
  if (n == 0) throw InvalidArgument("empty ensemble");
  const std::size_t nodes = spec.n_rho * spec.n_z;
  const std::size_t threads = cfg.threads ? cfg.threads : default_thread_count();
  const GeometryKind kinds[] = {config.kind};
  std::vector<CompensatedSum> acc(nodes);
  std::vector<double> buf;
  for (std::size_t start = 0; start < n; start += cfg.batch_size) {
    const std::size_t count = std::min(cfg.batch_size, n - start);
    buf.assign(count * nodes, 0.0);
    parallel_for(count, threads, [&](std::size_t j) {
      const UnitLoop loop = loops.loop(start + j);
      const PreparedLoop prepared(loop.points(), kinds);
      LambdaSupport scratch;
      double* row = buf.data() + j * nodes;
      for (std::size_t iz = 0; iz < spec.n_z; ++iz)
        for (std::size_t ir = 0; ir < spec.n_rho; ++ir) {
          const double rho = spec.rho(ir);
          const Vec3 x{config.kind == GeometryKind::sphere ? std::abs(rho) : rho, 0.0, spec.z(iz)};
          row[iz * spec.n_rho + ir] = prepared.integrand(config, x, cfg.mass, scratch);
        }
    });
    for (std::size_t j = 0; j < count; ++j)
      for (std::size_t q = 0; q < nodes; ++q) acc[q] += buf[j * nodes + q];
  }
  DensityGrid grid;
  grid.spec = spec;
  grid.values.resize(nodes);
  for (std::size_t q = 0; q < nodes; ++q)
    grid.values[q] = kEnergyPrefactor * acc[q].value() / static_cast<double>(n);
  return grid;
}

}  // namespace wlc
