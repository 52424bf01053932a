#include "wlc/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
// pchip.hpp calls isnan unqualified.
#include <math.h>

#include <boost/math/interpolators/pchip.hpp>

#include "wlc/error.hpp"

namespace wlc {

namespace {
constexpr double kPi = std::numbers::pi;
constexpr double kBisectRelTol = 1e-6;
constexpr std::size_t kScanPoints = 4000;

void check_lengths(double a, double R) {
  if (!(a > 0.0) || !std::isfinite(a)) throw InvalidArgument("a must be positive and finite");
  if (!(R > 0.0) || !std::isfinite(R)) throw InvalidArgument("R must be positive and finite");
}

void check_cpp(int c_pp) {
  if (c_pp != 1 && c_pp != 2) throw InvalidArgument("c_PP must be 1 or 2");
}
}  // namespace

double PfaModel::ntl_coefficient() const {
  switch (variant) {
    case PfaVariant::zeroth: return 0.0;
    case PfaVariant::plate_based: return 1.0;
    case PfaVariant::sphere_based: return 1.0 / 3.0;
  }
  return 0.0;
}

void PfaModel::validate() const { check_cpp(c_pp); }

double pfa_sphere(double a, double R, const PfaModel& model) {
  check_lengths(a, R);
  model.validate();
  const double e0 = -model.c_pp * (kPi * kPi * kPi / 1440.0) * R / (a * a);
  return e0 * (1.0 - model.ntl_coefficient() * a / R);
}

double pfa_cylinder_zeroth(double a, double R, int c_pp, CylinderPfaForm form) {
  check_lengths(a, R);
  check_cpp(c_pp);
  const double shape = 3.0 * kPi / (4.0 * std::sqrt(2.0)) * std::sqrt(R) / std::pow(a, 2.5);
  const double plate = form == CylinderPfaForm::consistent ? kPi * kPi / 1440.0 : 1.0;
  return -c_pp * plate * shape;
}

double parallel_plate_energy(double a, int c_pp) {
  if (!(a > 0.0) || !std::isfinite(a)) throw InvalidArgument("a must be positive and finite");
  check_cpp(c_pp);
  return -c_pp * kPi * kPi / (1440.0 * a * a * a);
}

double pfa_zeroth(const Configuration& config, int c_pp) {
  config.validate();
  switch (config.kind) {
    case GeometryKind::slab: return parallel_plate_energy(config.a, c_pp);
    case GeometryKind::sphere: return pfa_sphere(config.a, config.R, {c_pp, PfaVariant::zeroth});
    case GeometryKind::cylinder: return pfa_cylinder_zeroth(config.a, config.R, c_pp);
  }
  return 0.0;
}

void Curve::validate() const {
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    if (!(p.x > 0.0) || !std::isfinite(p.x)) throw InvalidArgument("curve abscissae must be positive");
    if (i > 0 && !(p.x > points[i - 1].x)) throw InvalidArgument("curve abscissae must strictly increase");
    if (!(p.err >= 0.0) || !std::isfinite(p.value)) throw InvalidArgument("curve errors must be >= 0");
  }
}

namespace {
double curvature_ratio(const Configuration& c) { return c.kind == GeometryKind::slab ? 0.0 : c.a / c.R; }
}  // namespace

CurvePoint normalize(const EnergyResult& e, double e0) {
  if (e0 == 0.0 || !std::isfinite(e0)) throw InvalidArgument("normalization energy must be nonzero");
  return {curvature_ratio(e.geometry), e.value / e0, std::abs(e.stat_error / e0)};
}

CurvePoint normalize_paired(const EnergyResult& e) {
  return {curvature_ratio(e.geometry), e.norm_value, e.norm_error};
}

double FitResult::band(double x) const {
  const double q = cov[0][0] + 2.0 * x * cov[0][1] + x * x * cov[1][1];
  return std::abs(x) * std::sqrt(std::max(q, 0.0));
}

FitResult fit_constrained_quadratic(const Curve& curve, double x_max) {
  curve.validate();
  if (!(x_max > 0.0)) throw InvalidArgument("x_max must be positive");
  // Normal equations for y - 1 = c1 x + c2 x^2.
  double s11 = 0, s12 = 0, s22 = 0, t1 = 0, t2 = 0;
  std::size_t used = 0;
  for (const auto& p : curve.points) {
    if (p.x > x_max * (1.0 + 1e-12)) continue;
    if (!(p.err > 0.0)) throw InvalidArgument("fit needs positive point errors");
    const double w = 1.0 / (p.err * p.err);
    const double x = p.x, x2 = x * x, y = p.value - 1.0;
    s11 += w * x2;
    s12 += w * x2 * x;
    s22 += w * x2 * x2;
    t1 += w * x * y;
    t2 += w * x2 * y;
    ++used;
  }
  if (used < 3) throw NumericError("constrained fit is underdetermined: fewer than 3 points with x <= x_max");
  const double det = s11 * s22 - s12 * s12;
  if (!(std::abs(det) > 1e-14 * s11 * s22)) throw NumericError("constrained fit: singular normal matrix");
  FitResult r;
  r.cov[0][0] = s22 / det;
  r.cov[1][1] = s11 / det;
  r.cov[0][1] = r.cov[1][0] = -s12 / det;
  r.c1 = r.cov[0][0] * t1 + r.cov[0][1] * t2;
  r.c2 = r.cov[1][0] * t1 + r.cov[1][1] * t2;
  r.n_points = used;
  r.x_max = x_max;
  for (const auto& p : curve.points) {
    if (p.x > x_max * (1.0 + 1e-12)) continue;
    const double d = (p.value - r.p(p.x)) / p.err;
    r.chi2 += d * d;
  }
  return r;
}

FitResult reference_fit() {
  FitResult r;
  r.c1 = kReferenceC1;
  r.c2 = kReferenceC2;
  const double v11 = kReferenceBandScale * kReferenceBandScale;
  r.cov[0][0] = v11;
  r.cov[0][1] = r.cov[1][0] = v11 * kReferenceBandLinear / 2.0;
  r.cov[1][1] = v11 * kReferenceBandQuadratic;
  return r;
}

const char* to_string(BandConvention c) { return c == BandConvention::stat ? "stat" : "halfwidth"; }

BandConvention parse_band_convention(const std::string& s) {
  if (s == "stat") return BandConvention::stat;
  if (s == "halfwidth") return BandConvention::halfwidth;
  throw InvalidArgument("unknown band convention '" + s + "' (expected stat or halfwidth)");
}

namespace {

void check_options(const BoundOptions& o) {
  if (!(o.tolerance > 0.0 && o.tolerance < 1.0)) throw InvalidArgument("tolerance must lie in (0, 1)");
  if (!(o.base_accuracy > 0.0 && o.base_accuracy < 1.0)) throw InvalidArgument("base accuracy must lie in (0, 1)");
  if (!(o.x_search_max > 0.0)) throw InvalidArgument("search range must be positive");
}

// Smallest-x separation of the worldline band from the PFA band.
BoundResult find_bound(const std::function<double(double)>& value, const std::function<double(double)>& stat_band,
                       double x_hi, const BoundOptions& o) {
  auto halfwidth = [&](double x) {
    const double v = value(x);
    double w = o.convention == BandConvention::stat ? stat_band(x) : 0.5 * o.base_accuracy * std::abs(v);
    if (o.tolerance > o.base_accuracy) w += 0.5 * o.tolerance * std::abs(v);
    return w;
  };
  auto gap = [&](double x) {
    const double v = value(x), w = halfwidth(x);
    const double top = 1.0 - x / 3.0, bottom = 1.0 - x;
    return std::max((v - w) - top, bottom - (v + w));
  };

  const double x_lo = x_hi * 1e-9;
  const double ratio = std::pow(x_hi / x_lo, 1.0 / static_cast<double>(kScanPoints - 1));
  std::vector<double> xs(kScanPoints), gs(kScanPoints);
  for (std::size_t i = 0; i < kScanPoints; ++i) {
    xs[i] = i + 1 == kScanPoints ? x_hi : x_lo * std::pow(ratio, static_cast<double>(i));
    gs[i] = gap(xs[i]);
  }
  if (gs[0] > 0.0) throw NumericError("worldline and PFA bands never overlap");
  std::size_t first = kScanPoints, changes = 0;
  for (std::size_t i = 1; i < kScanPoints; ++i) {
    if ((gs[i] > 0.0) != (gs[i - 1] > 0.0)) {
      ++changes;
      if (first == kScanPoints) first = i;
    }
  }
  if (first == kScanPoints) throw NumericError("worldline and PFA bands do not separate within the search range");

  double lo = xs[first - 1], hi = xs[first];
  while (hi - lo > kBisectRelTol * hi) {
    const double mid = 0.5 * (lo + hi);
    (gap(mid) > 0.0 ? hi : lo) = mid;
  }
  BoundResult r;
  r.threshold = 0.5 * (lo + hi);
  r.tolerance = o.tolerance;
  r.base_accuracy = o.base_accuracy;
  r.convention = o.convention;
  r.non_monotone = changes > 1;
  return r;
}

}  // namespace

BoundResult pfa_validity_bound(const FitResult& fit, const BoundOptions& opts) {
  check_options(opts);
  return find_bound([&](double x) { return fit.p(x); }, [&](double x) { return fit.band(x); }, opts.x_search_max,
                    opts);
}

BoundResult pfa_validity_bound(const Curve& curve, const BoundOptions& opts) {
  check_options(opts);
  curve.validate();
  if (curve.points.size() < 2) throw NumericError("curve-based bound needs at least 2 points");
  // The exact small-curvature limit p(0) = 1 anchors the interpolation.
  std::vector<double> xs{0.0}, vs{1.0}, es{0.0};
  for (const auto& p : curve.points) {
    xs.push_back(p.x);
    vs.push_back(p.value);
    es.push_back(p.err);
  }
  auto linear = [](const std::vector<double>& x, const std::vector<double>& y, double t) {
    auto it = std::upper_bound(x.begin(), x.end(), t);
    std::size_t k = std::clamp<std::size_t>(static_cast<std::size_t>(it - x.begin()), 1, x.size() - 1);
    const double s = (t - x[k - 1]) / (x[k] - x[k - 1]);
    return y[k - 1] + s * (y[k] - y[k - 1]);
  };
  std::function<double(double)> value;
  if (xs.size() >= 4) {
    auto spline = std::make_shared<boost::math::interpolators::pchip<std::vector<double>>>(std::vector<double>(xs),
                                                                                            std::vector<double>(vs));
    value = [spline](double x) { return (*spline)(x); };
  } else {
    value = [=](double x) { return linear(xs, vs, x); };
  }
  auto band = [=](double x) { return linear(xs, es, x); };
  return find_bound(value, band, xs.back(), opts);
}

}  // namespace wlc
