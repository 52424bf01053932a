#include "wlc/cli.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "wlc/error.hpp"
#include "wlc/loopgen.hpp"
#include "wlc/stats.hpp"

namespace wlc::cli {

using json = nlohmann::json;

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, r.ptr);
}

std::string format_row(const EnergyRow& r) {
  std::ostringstream s;
  s << format_double(r.a_over_R) << ',' << format_double(r.E) << ',' << format_double(r.E_err) << ','
    << format_double(r.E0_pfa) << ',' << format_double(r.E_norm) << ',' << format_double(r.E_norm_err) << ','
    << r.n_L << ',' << r.N << ',' << format_double(r.m) << ',' << format_double(r.runtime_s) << ',' << r.status;
  return s.str();
}

EnergyRow make_row(const EnergyResult& e, double e0) {
  EnergyRow r;
  r.a_over_R = e.geometry.kind == GeometryKind::slab ? 0.0 : e.geometry.a / e.geometry.R;
  r.E = e.value;
  r.E_err = e.stat_error;
  r.E0_pfa = e0;
  if (e.geometry.kind == GeometryKind::slab) {
    // The per-loop reference equals the slab value itself; normalize directly.
    r.E_norm = e.value / e0;
    r.E_norm_err = std::abs(e.stat_error / e0);
  } else {
    r.E_norm = e.norm_value;
    r.E_norm_err = e.norm_error;
  }
  r.n_L = e.ensemble.n_loops;
  r.N = e.ensemble.n_points;
  r.m = e.config.mass;
  r.runtime_s = e.wall_seconds;
  r.status = e.unconverged == 0 ? "ok" : "unconverged=" + std::to_string(e.unconverged);
  return r;
}

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream s(line);
  while (std::getline(s, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = b + s.size();
  const auto r = std::from_chars(b, e, v);
  if (r.ec != std::errc() || r.ptr != e) throw InvalidArgument("malformed number '" + s + "' in table");
  return v;
}

std::uint64_t parse_uint(const std::string& s) {
  std::uint64_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw InvalidArgument("malformed integer '" + s + "'");
  return v;
}

}  // namespace

std::vector<EnergyRow> read_energy_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw InvalidArgument("empty energy table");
  if (line != kEnergyHeader) throw InvalidArgument("unexpected energy table header: " + line);
  std::vector<EnergyRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 11) throw InvalidArgument("energy table row has " + std::to_string(f.size()) + " fields");
    EnergyRow r;
    r.a_over_R = parse_double(f[0]);
    r.E = parse_double(f[1]);
    r.E_err = parse_double(f[2]);
    r.E0_pfa = parse_double(f[3]);
    r.E_norm = parse_double(f[4]);
    r.E_norm_err = parse_double(f[5]);
    r.n_L = parse_uint(f[6]);
    r.N = parse_uint(f[7]);
    r.m = parse_double(f[8]);
    r.runtime_s = parse_double(f[9]);
    r.status = f[10];
    rows.push_back(r);
  }
  return rows;
}

std::vector<EnergyRow> read_energy_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(FormatError::Kind::io, "cannot open " + path.string());
  return read_energy_csv(in);
}

Curve curve_from_rows(const std::vector<EnergyRow>& rows) {
  Curve c;
  for (const auto& r : rows)
    if (r.status == "ok") c.points.push_back({r.a_over_R, r.E_norm, r.E_norm_err});
  return c;
}

namespace {

struct EngineFlags {
  std::string geometry = "sphere";
  double a = 1.0;
  std::optional<double> R;
  double mass = 0.0;
  std::string ensemble;
  std::uint64_t seed = 1;
  std::uint32_t n_loops = 1000;
  std::uint32_t points = 1024;
  double qtol = EngineConfig{}.quad_rel_tol;
  double trunc_tol = EngineConfig{}.trunc_tol;
  std::size_t blocks = 100;
  int orientations = 1;
  std::size_t max_evals = EngineConfig{}.max_evaluations;
  int max_depth = EngineConfig{}.max_depth;
  bool extrapolate = false;
  std::string out;
};

void add_engine_flags(CLI::App* app, EngineFlags& f, bool with_R) {
  app->add_option("--geometry", f.geometry, "slab, sphere or cylinder")
      ->check(CLI::IsMember({"slab", "sphere", "cylinder"}));
  app->add_option("--a", f.a, "plate distance in L0")->check(CLI::PositiveNumber);
  if (with_R) app->add_option("--R", f.R, "body radius in L0")->check(CLI::PositiveNumber);
  app->add_option("--mass", f.mass, "field mass in 1/L0")->check(CLI::NonNegativeNumber);
  app->add_option("--ensemble", f.ensemble, "ensemble file written by `loops gen`")->check(CLI::ExistingFile);
  app->add_option("--seed", f.seed, "seed of a generated ensemble");
  app->add_option("--n-loops", f.n_loops, "loops of a generated ensemble")->check(CLI::Range(1u, 4000000000u));
  app->add_option("--points", f.points, "points per loop of a generated ensemble")->check(CLI::Range(2u, 4000000000u));
  app->add_option("--qtol", f.qtol, "relative quadrature tolerance")->check(CLI::Range(0.0, 1.0));
  app->add_option("--trunc-tol", f.trunc_tol, "relative truncation tolerance")->check(CLI::Range(0.0, 1.0));
  app->add_option("--blocks", f.blocks, "jackknife blocks")->check(CLI::Range(std::size_t{2}, std::size_t{1} << 40));
  app->add_option("--max-evals", f.max_evals, "integrand evaluations per loop and geometry");
  app->add_option("--max-depth", f.max_depth, "cubature bisection depth");
  app->add_option("--orientations", f.orientations, "1, or 3 to average over cyclic axis permutations")
      ->check(CLI::IsMember({1, 3}));
  app->add_flag("--extrapolate", f.extrapolate, "combine each loop with its every-4th-point subloop");
  app->add_option("--out", f.out, "output file (default: stdout)");
}

EngineConfig engine_config(const EngineFlags& f) {
  EngineConfig c;
  c.mass = f.mass;
  c.quad_rel_tol = f.qtol;
  c.trunc_tol = f.trunc_tol;
  c.blocks = f.blocks;
  c.max_evaluations = f.max_evals;
  c.max_depth = f.max_depth;
  c.extrapolate = f.extrapolate;
  c.orientations = f.orientations;
  c.validate();
  return c;
}

GeometryKind parse_kind(const std::string& s) {
  if (s == "slab") return GeometryKind::slab;
  if (s == "sphere") return GeometryKind::sphere;
  if (s == "cylinder") return GeometryKind::cylinder;
  throw InvalidArgument("unknown geometry " + s);
}

std::unique_ptr<LoopSource> loop_source(const EngineFlags& f) {
  if (!f.ensemble.empty()) return std::make_unique<FileLoops>(f.ensemble);
  EnsembleMeta meta;
  meta.seed = f.seed;
  meta.n_loops = f.n_loops;
  meta.n_points = f.points;
  validate(meta);
  return std::make_unique<GeneratedLoops>(meta);
}

Configuration single_config(const EngineFlags& f) {
  const GeometryKind kind = parse_kind(f.geometry);
  if (kind == GeometryKind::slab) return Configuration::slab(f.a);
  if (!f.R) throw InvalidArgument("--R is required for geometry " + f.geometry);
  return kind == GeometryKind::sphere ? Configuration::sphere(f.a, *f.R) : Configuration::cylinder(f.a, *f.R);
}

// Writes to --out if given, else to `out`.
class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) {
    if (!path.empty()) {
      file_.open(path, std::ios::binary | std::ios::trunc);
      if (!file_) throw FormatError(FormatError::Kind::io, "cannot write " + path);
    }
    stream_ = path.empty() ? &fallback : &file_;
  }
  std::ostream& operator*() { return *stream_; }
  void close() {
    if (file_.is_open()) {
      file_.close();
      if (!file_) throw FormatError(FormatError::Kind::io, "write failed");
    }
  }

 private:
  std::ofstream file_;
  std::ostream* stream_;
};

void summary(std::ostream& s, const EnergyResult& e, double e0) {
  s << to_string(e.geometry.kind) << " a=" << e.geometry.a;
  if (e.geometry.kind != GeometryKind::slab) s << " R=" << e.geometry.R;
  s << std::setprecision(6) << ": E = " << e.value << " +- " << e.stat_error << ", E0_pfa = " << e0
    << ", E/E0 (paired) = " << e.norm_value << " +- " << e.norm_error << " [n_L=" << e.ensemble.n_loops
    << ", N=" << e.ensemble.n_points << ", " << e.wall_seconds << " s";
  if (e.unconverged) s << ", " << e.unconverged << " loops unconverged";
  s << "]\n";
}

json fit_json(const FitResult& f) {
  return {{"c1", f.c1},
          {"c2", f.c2},
          {"covariance", {{f.cov[0][0], f.cov[0][1]}, {f.cov[1][0], f.cov[1][1]}}},
          {"n_points", f.n_points},
          {"chi2", f.chi2},
          {"x_max", f.x_max},
          {"band", "x*sqrt(v11 + 2*x*v12 + x^2*v22)"},
          {"reference_slopes", {{"semiclassical", kSemiclassicalSlope}, {"optical", kOpticalSlope}}}};
}

FitResult fit_from_json(const json& j) {
  FitResult f;
  f.c1 = j.at("c1").get<double>();
  f.c2 = j.at("c2").get<double>();
  const auto& c = j.at("covariance");
  f.cov[0][0] = c.at(0).at(0).get<double>();
  f.cov[0][1] = c.at(0).at(1).get<double>();
  f.cov[1][0] = c.at(1).at(0).get<double>();
  f.cov[1][1] = c.at(1).at(1).get<double>();
  return f;
}

std::vector<double> parse_ratio_list(const std::vector<std::string>& items) {
  std::vector<double> out;
  for (const auto& item : items)
    for (const auto& tok : split(item, ',')) {
      if (tok.empty()) continue;
      double v;
      try {
        v = parse_double(tok);
      } catch (const InvalidArgument&) {
        throw InvalidArgument("--ratios: cannot parse '" + tok + "'");
      }
      if (!(v > 0.0) || !std::isfinite(v)) throw InvalidArgument("--ratios must be positive");
      out.push_back(v);
    }
  if (out.empty()) throw InvalidArgument("--ratios is empty");
  for (std::size_t i = 1; i < out.size(); ++i) {
    if (out[i] == out[i - 1]) throw InvalidArgument("--ratios contains duplicates");
    if (out[i] < out[i - 1]) throw InvalidArgument("--ratios must be sorted increasingly");
  }
  return out;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Worldline Monte Carlo Casimir energies", "wlc"};
  app.require_subcommand(1);

  // loops gen
  auto* loops = app.add_subcommand("loops", "loop ensembles");
  loops->require_subcommand(1);
  auto* gen = loops->add_subcommand("gen", "generate an ensemble file");
  EnsembleMeta gen_meta;
  gen_meta.n_loops = 1000;
  gen_meta.n_points = 1024;
  gen_meta.seed = 1;
  std::string gen_out;
  gen->add_option("--n-loops", gen_meta.n_loops, "loop count")->check(CLI::Range(1u, 4000000000u));
  gen->add_option("--points", gen_meta.n_points, "points per loop")->check(CLI::Range(2u, 4000000000u));
  gen->add_option("--seed", gen_meta.seed, "64-bit seed");
  gen->add_option("--out", gen_out, "output file")->required();

  EngineFlags ef;
  auto* energy = app.add_subcommand("energy", "interaction energy of one configuration");
  add_engine_flags(energy, ef, true);

  EngineFlags sf;
  std::vector<std::string> ratio_items;
  auto* scan = app.add_subcommand("scan", "normalized energies over a list of a/R on one ensemble");
  add_engine_flags(scan, sf, false);
  scan->add_option("--ratios", ratio_items, "a/R values, comma separated, increasing")->required();

  EngineFlags df;
  DensitySpec grid;
  grid.rho_min = -3;
  grid.rho_max = 3;
  grid.n_rho = 61;
  grid.z_min = -1;
  grid.z_max = 3;
  grid.n_z = 41;
  auto* density = app.add_subcommand("density", "energy density on a (rho, z) grid");
  add_engine_flags(density, df, true);
  density->add_option("--rho-min", grid.rho_min);
  density->add_option("--rho-max", grid.rho_max);
  density->add_option("--n-rho", grid.n_rho)->check(CLI::PositiveNumber);
  density->add_option("--z-min", grid.z_min);
  density->add_option("--z-max", grid.z_max);
  density->add_option("--n-z", grid.n_z)->check(CLI::PositiveNumber);

  std::string fit_curve, fit_out;
  double fit_xmax = 0.1;
  auto* fit = app.add_subcommand("fit", "constrained quadratic fit of a scan table");
  fit->add_option("--curve", fit_curve, "scan table")->required()->check(CLI::ExistingFile);
  fit->add_option("--x-max", fit_xmax, "largest a/R used")->check(CLI::PositiveNumber);
  fit->add_option("--out", fit_out, "JSON report");

  std::string b_curve, b_fit, b_out, b_conv = "stat";
  std::optional<double> b_c1, b_c2;
  double b_v11 = 0, b_v12 = 0, b_v22 = 0;
  bool b_reference = false;
  std::vector<double> b_tols{1e-3, 1e-2};
  double b_base = 1e-3, b_xmax = 0.1;
  auto* bounds = app.add_subcommand("bounds", "PFA validity thresholds");
  auto* src_curve = bounds->add_option("--curve", b_curve, "scan table")->check(CLI::ExistingFile);
  auto* src_fit = bounds->add_option("--fit", b_fit, "JSON report of `fit`")->check(CLI::ExistingFile);
  auto* src_c1 = bounds->add_option("--c1", b_c1, "linear coefficient of p(x)");
  bounds->add_option("--c2", b_c2, "quadratic coefficient of p(x)")->needs(src_c1);
  bounds->add_option("--v11", b_v11, "fit covariance")->needs(src_c1);
  bounds->add_option("--v12", b_v12)->needs(src_c1);
  bounds->add_option("--v22", b_v22)->needs(src_c1);
  auto* src_ref = bounds->add_flag("--reference", b_reference, "use p(x) = 1 + 0.35x - 1.92x^2 and its band");
  src_curve->excludes(src_fit)->excludes(src_c1)->excludes(src_ref);
  src_fit->excludes(src_c1)->excludes(src_ref);
  src_c1->excludes(src_ref);
  bounds->add_option("--tolerance", b_tols, "accuracy targets")->delimiter(',');
  bounds->add_option("--base-accuracy", b_base, "accuracy of the worldline data");
  bounds->add_option("--band-convention", b_conv, "stat or halfwidth")->check(CLI::IsMember({"stat", "halfwidth"}));
  bounds->add_option("--x-search-max", b_xmax, "upper end of the fit-based search");
  bounds->add_option("--out", b_out, "JSON report");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (gen->parsed()) {
      validate(gen_meta);
      write_generated_ensemble(gen_meta, gen_out);
      out << "wrote " << gen_out << ": N=" << gen_meta.n_points << " n_L=" << gen_meta.n_loops
          << " seed=" << gen_meta.seed << " tag=" << gen_meta.algorithm_tag << "\n";
      return kExitOk;
    }
    if (energy->parsed()) {
      const Configuration config = single_config(ef);
      const EngineConfig cfg = engine_config(ef);
      const auto source = loop_source(ef);
      const EnergyResult e = casimir_energy(config, *source, cfg);
      const double e0 = pfa_zeroth(config);
      Sink sink(ef.out, out);
      *sink << kEnergyHeader << "\n" << format_row(make_row(e, e0)) << "\n";
      sink.close();
      summary(ef.out.empty() ? err : out, e, e0);
      return kExitOk;
    }
    if (scan->parsed()) {
      const GeometryKind kind = parse_kind(sf.geometry);
      if (kind == GeometryKind::slab) throw InvalidArgument("scan needs a curved body (sphere or cylinder)");
      const std::vector<double> ratios = parse_ratio_list(ratio_items);
      const EngineConfig cfg = engine_config(sf);
      const auto source = loop_source(sf);
      std::vector<Configuration> configs;
      for (double x : ratios)
        configs.push_back(kind == GeometryKind::sphere ? Configuration::sphere(sf.a, sf.a / x)
                                                       : Configuration::cylinder(sf.a, sf.a / x));
      std::vector<EnergyRow> rows(configs.size());
      bool failed = false;
      try {
        const auto results = casimir_energies(configs, *source, cfg);
        for (std::size_t k = 0; k < configs.size(); ++k) rows[k] = make_row(results[k], pfa_zeroth(configs[k]));
      } catch (const NumericError&) {
        // Isolate the failing rows and keep the others.
        for (std::size_t k = 0; k < configs.size(); ++k) {
          try {
            rows[k] = make_row(casimir_energy(configs[k], *source, cfg), pfa_zeroth(configs[k]));
          } catch (const NumericError& e) {
            failed = true;
            rows[k] = EnergyRow{};
            rows[k].a_over_R = ratios[k];
            rows[k].E0_pfa = pfa_zeroth(configs[k]);
            rows[k].n_L = source->meta().n_loops;
            rows[k].N = source->meta().n_points;
            rows[k].m = cfg.mass;
            rows[k].E = rows[k].E_err = rows[k].E_norm = rows[k].E_norm_err = std::nan("");
            rows[k].status = std::string("failed:") + e.what();
            std::replace(rows[k].status.begin(), rows[k].status.end(), ',', ';');
          }
        }
      }
      Sink sink(sf.out, out);
      *sink << kEnergyHeader << "\n";
      for (const auto& r : rows) *sink << format_row(r) << "\n";
      sink.close();
      if (failed) {
        err << "some rows failed; see the status column\n";
        return kExitNumeric;
      }
      return kExitOk;
    }
    if (density->parsed()) {
      const Configuration config = single_config(df);
      const EngineConfig cfg = engine_config(df);
      const auto source = loop_source(df);
      const DensityGrid g = energy_density(config, *source, grid, cfg);
      Sink sink(df.out, out);
      *sink << kDensityHeader << "\n";
      for (std::size_t j = 0; j < grid.n_z; ++j)
        for (std::size_t i = 0; i < grid.n_rho; ++i)
          *sink << format_double(grid.rho(i)) << ',' << format_double(grid.z(j)) << ','
                << format_double(g.at(i, j)) << "\n";
      sink.close();
      return kExitOk;
    }
    if (fit->parsed()) {
      const Curve curve = curve_from_rows(read_energy_csv(std::filesystem::path(fit_curve)));
      const FitResult f = fit_constrained_quadratic(curve, fit_xmax);
      const json report = fit_json(f);
      out << std::setprecision(6) << "p(x) = 1 + " << f.c1 << " x + " << f.c2 << " x^2 +- x sqrt(" << f.cov[0][0]
          << " + 2x (" << f.cov[0][1] << ") + x^2 " << f.cov[1][1] << ")  [" << f.n_points
          << " points, chi2 = " << f.chi2 << "]\n";
      if (!fit_out.empty()) {
        Sink sink(fit_out, out);
        *sink << report.dump(2) << "\n";
        sink.close();
      }
      return kExitOk;
    }
    if (bounds->parsed()) {
      BoundOptions opts;
      opts.base_accuracy = b_base;
      opts.convention = parse_band_convention(b_conv);
      opts.x_search_max = b_xmax;
      std::optional<Curve> curve;
      FitResult f;
      std::string source;
      if (!b_curve.empty()) {
        curve = curve_from_rows(read_energy_csv(std::filesystem::path(b_curve)));
        source = "curve:" + b_curve;
      } else if (!b_fit.empty()) {
        std::ifstream in(b_fit);
        f = fit_from_json(json::parse(in));
        source = "fit:" + b_fit;
      } else if (b_c1) {
        f.c1 = *b_c1;
        f.c2 = b_c2.value_or(0.0);
        f.cov[0][0] = b_v11;
        f.cov[0][1] = f.cov[1][0] = b_v12;
        f.cov[1][1] = b_v22;
        source = "coefficients";
      } else {
        if (!b_reference) throw InvalidArgument("bounds needs --curve, --fit, --c1/--c2 or --reference");
        f = reference_fit();
        source = "reference";
      }
      json report = {{"source", source}, {"band_convention", b_conv}, {"base_accuracy", b_base}};
      json items = json::array();
      bool failed = false;
      for (double t : b_tols) {
        opts.tolerance = t;
        try {
          const BoundResult r = curve ? pfa_validity_bound(*curve, opts) : pfa_validity_bound(f, opts);
          items.push_back({{"tolerance", t}, {"threshold", r.threshold}, {"non_monotone", r.non_monotone}});
          out << "tolerance " << t << " (" << b_conv << "): a/R <= " << format_double(r.threshold)
              << (r.non_monotone ? "  [gap not monotone]" : "") << "\n";
        } catch (const NumericError& e) {
          failed = true;
          items.push_back({{"tolerance", t}, {"threshold", nullptr}, {"error", e.what()}});
          out << "tolerance " << t << " (" << b_conv << "): no threshold: " << e.what() << "\n";
        }
      }
      report["bounds"] = items;
      if (!b_out.empty()) {
        Sink sink(b_out, out);
        *sink << report.dump(2) << "\n";
        sink.close();
      }
      return failed ? kExitNumeric : kExitOk;
    }
  } catch (const InvalidArgument& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const json::exception& e) {
    err << "error: bad report file: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
  return kExitUsage;
}

}  // namespace wlc::cli
