// Acceptance run: one PASS/FAIL line per criterion, detail lines indented.
// Exit status is the number of failed criteria (capped at 8).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "wlc/analysis.hpp"
#include "wlc/cli.hpp"
#include "wlc/engine.hpp"
#include "wlc/geometry.hpp"
#include "wlc/loopgen.hpp"
#include "wlc/stats.hpp"

using namespace wlc;

namespace {

constexpr double kPi = std::numbers::pi;

struct Outcome {
  bool pass = true;
  std::string summary;
};

double g_scale = 1.0;

std::uint32_t loops_of(double n) { return static_cast<std::uint32_t>(std::max(8.0, std::round(n * g_scale))); }

void detail(const char* fmt, auto... args) {
  std::printf("    ");
  std::printf(fmt, args...);
  std::printf("\n");
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

EnsembleMeta meta_of(std::uint64_t seed, std::uint32_t n_l, std::uint32_t n) {
  EnsembleMeta m;
  m.seed = seed;
  m.n_loops = n_l;
  m.n_points = n;
  return m;
}

EngineConfig engine(std::uint32_t n_loops, bool extrapolate, int orientations = 1) {
  EngineConfig cfg;
  cfg.extrapolate = extrapolate;
  cfg.orientations = orientations;
  cfg.blocks = std::min<std::size_t>(100, n_loops);
  return cfg;
}

// --- 1 ------------------------------------------------------------------------

Outcome parallel_plates() {
  const std::uint32_t n_l = loops_of(1e4);
  const GeneratedLoops loops(meta_of(1001, n_l, 100000));
  const auto e = casimir_energy(Configuration::slab(1.0), loops, engine(n_l, true, 3));
  const double e0 = parallel_plate_energy(1.0);
  const double rel = e.value / e0 - 1.0;
  const double sig = std::abs(e.value - e0) / e.stat_error;
  detail("slab a=1 n_L=%u N=100000, N/4 extrapolation, 3 axis orientations, %.0f s", n_l, e.wall_seconds);
  detail("E/area = %.6e +- %.2e, oracle -pi^2/1440 = %.6e", e.value, e.stat_error, e0);
  const bool ok = std::abs(rel) <= 0.015 && sig <= 3.0 && e.unconverged == 0;
  return {ok, fmt("deviation %+.3f%% (limit 1.5%%), %.2f sigma (limit 3)", 100 * rel, sig)};
}

// --- 2 to 4 share one ensemble ----------------------------------------------------

struct SphereScan {
  std::vector<double> xs;
  std::vector<EnergyResult> results;
};

const SphereScan& small_curvature_scan() {
  static SphereScan scan = [] {
    SphereScan s;
    s.xs = {0.001, 0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08, 0.09, 0.1};
    const std::uint32_t n_l = loops_of(1e4);
    const GeneratedLoops loops(meta_of(2002, n_l, 256));
    std::vector<Configuration> cs;
    for (double x : s.xs) cs.push_back(Configuration::sphere(1.0, 1.0 / x));
    s.results = casimir_energies(cs, loops, engine(n_l, true));
    detail("sphere-plate scan: n_L=%u N=256 with N/4 extrapolation, %.0f s", n_l, s.results[0].wall_seconds);
    for (std::size_t k = 0; k < s.xs.size(); ++k) {
      const auto& r = s.results[k];
      detail("a/R=%-6g E/E0 = %.5f +- %.5f   (direct %.5f +- %.5f)  unconverged=%zu", s.xs[k], r.norm_value,
             r.norm_error, r.value / pfa_zeroth(r.geometry), r.stat_error / std::abs(pfa_zeroth(r.geometry)),
             r.unconverged);
    }
    return s;
  }();
  return scan;
}

Outcome small_curvature_limit() {
  const auto& r = small_curvature_scan().results[0];
  const double dev = std::abs(r.norm_value - 1.0);
  const double lim = std::max(0.005, 3.0 * r.norm_error);
  return {dev <= lim && r.unconverged == 0,
          fmt("a/R=0.001: E/E0 = %.5f +- %.5f, |dev| %.5f (limit %.5f)", r.norm_value, r.norm_error, dev, lim)};
}

Outcome sign_reversal() {
  const auto& s = small_curvature_scan();
  const auto& r = s.results[5];
  const double x = s.xs[5];
  const double e0 = pfa_sphere(1.0, 1.0 / x);
  const double plate = pfa_sphere(1.0, 1.0 / x, {1, PfaVariant::plate_based}) / e0;
  const double sphere = pfa_sphere(1.0, 1.0 / x, {1, PfaVariant::sphere_based}) / e0;
  detail("a/R=0.05: plate-based PFA %.5f, sphere-based PFA %.5f (relative to E0)", plate, sphere);
  const bool ok = r.norm_value > 1.0 && plate < 1.0 && sphere < 1.0;
  return {ok, fmt("a/R=0.05: E/E0 = %.5f +- %.5f (%.1f sigma above 1), both NTL PFA variants below 1", r.norm_value,
                  r.norm_error, (r.norm_value - 1.0) / r.norm_error)};
}

Outcome fit_consistency() {
  // Exact recovery on synthetic data first.
  Curve synth;
  for (int k = 1; k <= 10; ++k) {
    const double x = 0.01 * k;
    synth.points.push_back({x, 1.0 + 0.35 * x - 1.92 * x * x, 1e-6});
  }
  const auto fs = fit_constrained_quadratic(synth);
  const double rec = std::max(std::abs(fs.c1 - 0.35), std::abs(fs.c2 + 1.92));
  detail("synthetic exact data: max coefficient error %.2e (limit 1e-10)", rec);

  const auto& s = small_curvature_scan();
  Curve c;
  for (std::size_t k = 1; k < s.xs.size(); ++k) c.points.push_back(normalize_paired(s.results[k]));
  const auto f = fit_constrained_quadratic(c, 0.1);
  detail("scan fit over a/R in [0.01, 0.1]: p(x) = 1 + %.4f x %+.4f x^2, sigma(c1) = %.4f, chi2 = %.2f for %zu points",
         f.c1, f.c2, std::sqrt(f.cov[0][0]), f.chi2, f.n_points);
  const bool ok = rec <= 1e-10 && f.c1 >= 0.1 && f.c1 <= 0.6;
  return {ok, fmt("c1 = %.4f +- %.4f (window [0.1, 0.6]), synthetic recovery %.1e", f.c1, std::sqrt(f.cov[0][0]), rec)};
}

// --- 5 ------------------------------------------------------------------------

Outcome asymptote() {
  const std::vector<double> xs{0.5, 1.0, 2.0, 5.0, 10.0};
  const std::uint32_t n_l = loops_of(2000);
  const GeneratedLoops loops(meta_of(5005, n_l, 16384));
  std::vector<Configuration> cs;
  for (double x : xs) cs.push_back(Configuration::sphere(1.0, 1.0 / x));
  const auto rs = casimir_energies(cs, loops, engine(n_l, true));
  detail("sphere-plate large curvature: n_L=%u N=16384 with N/4 extrapolation, %.0f s", n_l, rs[0].wall_seconds);
  bool increasing = true;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const double e0 = pfa_zeroth(cs[k]);
    detail("a/R=%-4g E/E0 = %.4f +- %.4f   (direct %.4f +- %.4f)  unconverged=%zu", xs[k], rs[k].norm_value,
           rs[k].norm_error, rs[k].value / e0, rs[k].stat_error / std::abs(e0), rs[k].unconverged);
    if (k > 0 && !(rs[k].norm_value > rs[k - 1].norm_value)) increasing = false;
  }
  const double last = rs.back().norm_value;
  const double rel = last / kSphereAsymptote - 1.0;
  const bool ok = increasing && std::abs(rel) <= 0.25;
  return {ok, fmt("%s; a/R=10: %.4f vs 180/pi^4 = %.5f (%+.1f%%, limit 25%%)",
                  increasing ? "strictly increasing" : "NOT increasing", last, kSphereAsymptote, 100 * rel)};
}

// --- 6 ------------------------------------------------------------------------

Outcome validity_bounds() {
  std::ostringstream out, err;
  const int code = cli::run({"bounds", "--reference", "--band-convention", "halfwidth", "--tolerance", "0.001,0.01"},
                            out, err);
  BoundOptions o;
  o.convention = BandConvention::halfwidth;
  const double t1 = pfa_validity_bound(reference_fit(), o).threshold;
  o.tolerance = 1e-2;
  const double t2 = pfa_validity_bound(reference_fit(), o).threshold;
  std::istringstream lines(out.str());
  for (std::string line; std::getline(lines, line);) detail("wlc %s", line.c_str());
  // The command prints the same numbers the library returns.
  const bool printed = out.str().find(cli::format_double(t1)) != std::string::npos &&
                       out.str().find(cli::format_double(t2)) != std::string::npos;
  const bool ok = code == 0 && printed && std::abs(t1 / 7.3e-4 - 1.0) <= 0.10 && std::abs(t2 / 7.55e-3 - 1.0) <= 0.25;
  return {ok, fmt("0.1%% mode %.4e (7.3e-4 +- 10%%), 1%% mode %.4e (7.55e-3 +- 25%%)", t1, t2)};
}

// --- 7 ------------------------------------------------------------------------

Outcome cylinder() {
  const std::uint32_t n_flat = loops_of(1000);
  const GeneratedLoops flat_loops(meta_of(7007, n_flat, 4096));
  const Configuration flat = Configuration::cylinder(1.0, 100.0);
  const auto f = casimir_energy(flat, flat_loops, engine(n_flat, true));
  detail("cylinder a/R=0.01: n_L=%u N=4096 extrapolated: E/E0 = %.5f +- %.5f (direct %.5f), %.0f s", n_flat,
         f.norm_value, f.norm_error, f.value / pfa_zeroth(flat), f.wall_seconds);

  const std::vector<double> xs{1.0, 2.0, 5.0, 10.0};
  const std::uint32_t n_l = loops_of(400);
  const GeneratedLoops loops(meta_of(7008, n_l, 4096));
  std::vector<Configuration> cs;
  for (double x : xs) cs.push_back(Configuration::cylinder(1.0, 1.0 / x));
  const auto rs = casimir_energies(cs, loops, engine(n_l, true));
  detail("cylinder large curvature: n_L=%u N=4096 extrapolated, %.0f s", n_l, rs[0].wall_seconds);
  bool increasing = true;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    detail("a/R=%-4g E/E0 = %.4f +- %.4f   (direct %.4f)  unconverged=%zu", xs[k], rs[k].norm_value, rs[k].norm_error,
           rs[k].value / pfa_zeroth(cs[k]), rs[k].unconverged);
    if (k > 0 && !(rs[k].norm_value > rs[k - 1].norm_value)) increasing = false;
  }
  const double dev = std::abs(f.norm_value - 1.0);
  const bool ok = dev <= 0.02 && increasing && f.unconverged == 0;
  return {ok, fmt("a/R=0.01: %.5f (|dev| %.2f%%, limit 2%%); a/R 1..10 %s", f.norm_value, 100 * dev,
                  increasing ? "strictly increasing" : "NOT increasing")};
}

// --- 8 ------------------------------------------------------------------------

bool bridge_suite() {
  const auto ens = generate_ensemble(meta_of(8001, 10000, 128));
  const auto r = bridge_diagnostics(ens.loops, 20);
  detail("bridge covariance: %zu pairs, max |z| = %.2f, mean z = %.2f", r.pairs.size(), r.max_abs_z, r.mean_z);
  return r.max_abs_z < 4.0 && std::abs(r.mean_z) < 1.5;
}

bool support_suite() {
  std::mt19937_64 rng(8002);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  int bad = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const UnitLoop loop = generate_unit_loop(8 + trial % 24, rng);
    const auto pts = loop.points();
    const double R = 0.2 + std::abs(u(rng)), a = 0.1 + std::abs(u(rng));
    const Vec3 x{u(rng), u(rng), 1.5 * u(rng) + 0.5};
    const int kind = trial % 4;
    LambdaSupport s;
    const Sphere sp{R, {0, 0, a + R}};
    const Cylinder cy{R, 0.0, a + R};
    switch (kind) {
      case 0: s = quadric_support(sp, x, pts); break;
      case 1: s = quadric_support(cy, x, pts); break;
      case 2: s = plate_support(x, pts); break;
      default: s = slab_support({a}, x, pts); break;
    }
    const int n = 5000;
    const double h = 12.0 / n;
    for (int k = 0; k <= n; ++k) {
      const double lam = k * h;
      bool member = false;
      double lo = kInf, hi = -kInf;
      for (const auto& y : pts) {
        const Vec3 p = x + lam * y;
        lo = std::min(lo, p.z);
        hi = std::max(hi, p.z);
        if (kind == 0) member = member || norm2(p - sp.center) <= R * R;
        if (kind == 1) member = member || p.x * p.x + (p.z - cy.axis_z) * (p.z - cy.axis_z) <= R * R;
      }
      if (kind == 2) member = lo <= 0.0 && 0.0 <= hi;
      if (kind == 3) member = lo <= 0.0 && hi >= a;
      if (member == s.contains(lam)) continue;
      bool near_edge = false;
      for (const auto& iv : s.intervals())
        near_edge = near_edge || std::abs(lam - iv.lo) <= h || std::abs(lam - iv.hi) <= h;
      if (!near_edge) ++bad;
    }
  }
  detail("lambda supports vs grid membership: 1000 instances, %d mismatches away from endpoints", bad);
  return bad == 0;
}

bool propertime_suite() {
  std::mt19937_64 rng(8003);
  std::uniform_real_distribution<double> u(0.2, 3.0);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const double lo = u(rng), hi = lo + u(rng), m = trial % 2 ? 0.0 : u(rng);
    const auto s = LambdaSupport::from_intervals(std::vector<Interval>{{lo, hi}});
    // Composite Simpson grid in u = ln lambda, where the integrand is 2 exp(-m^2 lambda^2) lambda^-4.
    const int n = 200000;
    const double a = std::log(lo), b = std::log(hi), h = (b - a) / n;
    auto f = [m](double v) {
      const double lam = std::exp(v);
      return 2.0 * std::exp(-m * m * lam * lam) / std::pow(lam, 4.0);
    };
    double g = f(a) + f(b);
    for (int k = 1; k < n; ++k) g += (k % 2 ? 4.0 : 2.0) * f(a + k * h);
    g *= h / 3.0;
    worst = std::max(worst, std::abs(propertime_integral(s, m) / g - 1.0));
  }
  detail("propertime integral vs fine grid: worst relative deviation %.2e over 50 intervals", worst);
  return worst < 1e-9;
}

bool scaling_suite() {
  const GeneratedLoops loops(meta_of(8004, 40, 64));
  EngineConfig cfg = engine(40, false);
  double worst = 0.0;
  for (const auto& c : {Configuration::sphere(1.0, 3.0), Configuration::cylinder(1.0, 3.0), Configuration::slab(1.0)}) {
    const double p = c.kind == GeometryKind::sphere ? -1.0 : c.kind == GeometryKind::cylinder ? -2.0 : -3.0;
    const auto base = casimir_energy(c, loops, cfg);
    for (double kappa : {2.0, 3.0, 0.7}) {
      const auto s = casimir_energy(c.scaled(kappa), loops, cfg);
      worst = std::max(worst, std::abs(s.value / (base.value * std::pow(kappa, p)) - 1.0));
      if (c.kind != GeometryKind::slab) worst = std::max(worst, std::abs(s.norm_value / base.norm_value - 1.0));
    }
  }
  detail("exact scaling and a/R invariance: worst relative deviation %.2e", worst);
  return worst <= 1e-9;
}

bool jackknife_suite() {
  std::mt19937_64 rng(8005);
  std::normal_distribution<double> g(1.0, 0.5);
  std::vector<double> xs(5000);
  for (auto& x : xs) x = g(rng);
  const auto r = jackknife_mean(xs, xs.size());
  double mean = 0.0, ss = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  for (double x : xs) ss += (x - mean) * (x - mean);
  const double sem = std::sqrt(ss / (static_cast<double>(xs.size()) * static_cast<double>(xs.size() - 1)));
  detail("jackknife of a linear statistic: %.15e vs classical %.15e", r.error, sem);
  return std::abs(r.error / sem - 1.0) < 1e-12;
}

bool determinism_suite() {
  const GeneratedLoops loops(meta_of(8006, 60, 128));
  EngineConfig one = engine(60, true), many = engine(60, true);
  one.threads = 1;
  many.threads = 7;
  one.batch_size = many.batch_size = 16;
  const Configuration cs[] = {Configuration::sphere(1.0, 4.0), Configuration::cylinder(1.0, 4.0), Configuration::slab(1.0)};
  const auto a = casimir_energies(cs, loops, one);
  const auto b = casimir_energies(cs, loops, many);
  const auto c = casimir_energies(cs, loops, one);
  bool same = true;
  for (std::size_t k = 0; k < 3; ++k)
    same = same && a[k].value == b[k].value && a[k].stat_error == b[k].stat_error &&
           a[k].norm_value == b[k].norm_value && a[k].value == c[k].value && a[k].per_loop == b[k].per_loop;
  detail("fixed seed, 1 vs 7 threads and a rerun: %s", same ? "bit-identical" : "DIFFERENT");
  return same;
}

bool density_suite() {
  // Slab: the density depends on z only and integrates to the energy per area.
  const GeneratedLoops loops(meta_of(8007, 30, 64));
  EngineConfig cfg = engine(30, false);
  cfg.quad_rel_tol = 1e-9;
  cfg.trunc_tol = 1e-7;
  const auto e = casimir_energy(Configuration::slab(1.0), loops, cfg);
  DensitySpec spec;
  spec.rho_min = spec.rho_max = 0.0;
  spec.n_rho = 1;
  const double zr = 40.0;
  spec.z_min = 0.5 - zr;
  spec.z_max = 0.5 + zr;
  spec.n_z = 160001;
  const auto g = energy_density(Configuration::slab(1.0), loops, spec, cfg);
  const double h = (spec.z_max - spec.z_min) / static_cast<double>(spec.n_z - 1);
  double s = 0.0;
  for (std::size_t j = 0; j < spec.n_z; ++j) s += (j == 0 || j + 1 == spec.n_z ? 0.5 : 1.0) * g.at(0, j);
  s *= h;
  const double slab_dev = std::abs(s / e.value - 1.0);
  detail("slab density integral %.8e vs energy %.8e (rel %.1e)", s, e.value, slab_dev);

  // Sphere: the density over a box integrates to the box-restricted energy.
  const auto c = Configuration::sphere(1.0, 1.0);
  const GeneratedLoops few(meta_of(8008, 6, 32));
  EngineConfig tight = engine(6, false);
  tight.quad_rel_tol = 1e-5;
  double box = 0.0;
  const GeometryKind kinds[] = {c.kind};
  for (std::size_t i = 0; i < few.size(); ++i) {
    const UnitLoop loop = few.loop(i);
    box += integrate_com_box(c, PreparedLoop(loop.points(), kinds), 0.0, 0.6, 0.2, 1.0, tight).value;
  }
  box *= kEnergyPrefactor / static_cast<double>(few.size());
  DensitySpec sq;
  sq.rho_min = 0.0;
  sq.rho_max = 0.6;
  sq.z_min = 0.2;
  sq.z_max = 1.0;
  sq.n_rho = sq.n_z = 401;
  const auto gs = energy_density(c, few, sq, tight);
  double t = 0.0;
  for (std::size_t j = 0; j < sq.n_z; ++j)
    for (std::size_t i = 0; i < sq.n_rho; ++i)
      t += (i == 0 || i == 400 ? 0.5 : 1.0) * (j == 0 || j == 400 ? 0.5 : 1.0) * 2 * kPi * sq.rho(i) * gs.at(i, j);
  t *= (0.6 / 400) * (0.8 / 400);
  const double box_dev = std::abs(t / box - 1.0);
  detail("sphere box density integral %.6e vs box energy %.6e (rel %.1e)", t, box, box_dev);
  return slab_dev < 1e-3 && box_dev < 3e-3;
}

Outcome property_suites() {
  const std::pair<const char*, std::function<bool()>> suites[] = {
      {"bridge", bridge_suite},         {"supports", support_suite},   {"propertime", propertime_suite},
      {"scaling", scaling_suite},       {"jackknife", jackknife_suite}, {"determinism", determinism_suite},
      {"density", density_suite}};
  std::string failed;
  for (const auto& [name, run] : suites)
    if (!run()) failed += std::string(failed.empty() ? "" : ", ") + name;
  return {failed.empty(), failed.empty() ? "all 7 suites pass" : "failed: " + failed};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::set<int> only;
  app.add_option("--scale", g_scale, "multiplier on loop counts (1 for the acceptance run)")
      ->check(CLI::PositiveNumber);
  app.add_option("--only", only, "criteria to run")->check(CLI::Range(1, 8));
  CLI11_PARSE(app, argc, argv);
  if (g_scale != 1.0) std::printf("NOTE: loop counts scaled by %g; this is not the acceptance configuration\n", g_scale);

  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"parallel-plate oracle", parallel_plates},
      {"small-curvature limit", small_curvature_limit},
      {"curvature-sign reversal", sign_reversal},
      {"fit consistency", fit_consistency},
      {"sphere asymptote", asymptote},
      {"PFA validity bounds", validity_bounds},
      {"cylinder", cylinder},
      {"property suites", property_suites},
  };
  int failures = 0;
  for (int k = 0; k < 8; ++k) {
    if (!only.empty() && !only.count(k + 1)) continue;
    std::printf("criterion %d: %s\n", k + 1, criteria[k].first);
    std::fflush(stdout);
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s criterion %d (%s): %s [%.0f s]\n", o.pass ? "PASS" : "FAIL", k + 1, criteria[k].first,
                o.summary.c_str(), sec);
    std::fflush(stdout);
    if (!o.pass) ++failures;
  }
  return failures;
}
