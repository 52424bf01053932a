#pragma once

// Proximity force reference energies, normalized curves, the constrained
// small-curvature fit and PFA validity thresholds.

#include <array>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "wlc/engine.hpp"

namespace wlc {

// --- reference constants ----------------------------------------------------

/// Large-a/R limit of the sphere-plate energy over E0_PFA for a Dirichlet scalar.
inline constexpr double kSphereAsymptote = 180.0 / (std::numbers::pi * std::numbers::pi * std::numbers::pi * std::numbers::pi);
/// Linear coefficients of the semiclassical and optical approximations,
/// p(x) = 1 + slope * x. Display only.
inline constexpr double kSemiclassicalSlope = -0.17;
inline constexpr double kOpticalSlope = 0.05;
/// Reference small-curvature fit p(x) = 1 + 0.35 x - 1.92 x^2 with band
/// 0.19 x sqrt(1 - 137.2 x + 5125 x^2).
inline constexpr double kReferenceC1 = 0.35;
inline constexpr double kReferenceC2 = -1.92;
inline constexpr double kReferenceBandScale = 0.19;
inline constexpr double kReferenceBandLinear = -137.2;
inline constexpr double kReferenceBandQuadratic = 5125.0;

// --- PFA ----------------------------------------------------------------------

enum class PfaVariant { zeroth, plate_based, sphere_based };

struct PfaModel {
  int c_pp = 1;  ///< 1 for a real scalar, 2 for a complex scalar or the EM field
  PfaVariant variant = PfaVariant::zeroth;
  /// Coefficient k of the (1 - k a/R) factor: 0, 1 or 1/3.
  double ntl_coefficient() const;
  void validate() const;
};

/// -c_PP (pi^3 / 1440) R / a^2, times (1 - k a/R) for the NTL variants.
double pfa_sphere(double a, double R, const PfaModel& model = {});

/// Which constant multiplies sqrt(R) / a^(5/2) for the cylinder.
enum class CylinderPfaForm {
  /// -c_PP (pi^2/1440) (3 pi / (4 sqrt 2)): the parallel-plate energy
  /// integrated over the cylinder profile.
  consistent,
  /// -c_PP (3 pi / (4 sqrt 2)) without the parallel-plate factor pi^2/1440.
  printed,
};

double pfa_cylinder_zeroth(double a, double R, int c_pp = 1, CylinderPfaForm form = CylinderPfaForm::consistent);

/// -c_PP pi^2 / (1440 a^3): Dirichlet parallel plates per unit area.
double parallel_plate_energy(double a, int c_pp = 1);

/// Zeroth-order reference for a configuration (exact for slabs).
double pfa_zeroth(const Configuration& config, int c_pp = 1);

// --- curves -------------------------------------------------------------------

struct CurvePoint {
  double x = 0.0;      ///< a / R
  double value = 0.0;  ///< E / E0_PFA
  double err = 0.0;
};

struct Curve {
  std::vector<CurvePoint> points;
  /// Throws InvalidArgument unless x > 0 strictly increases and err >= 0.
  void validate() const;
};

/// E / E0 with error |stat_error / E0|. Throws InvalidArgument for E0 == 0.
CurvePoint normalize(const EnergyResult& e, double e0);
/// The engine's paired estimate: loop-mean energy over the same loops' PFA estimate.
CurvePoint normalize_paired(const EnergyResult& e);

// --- fit ------------------------------------------------------------------------

struct FitResult {
  double c1 = 0.0;
  double c2 = 0.0;
  std::array<std::array<double, 2>, 2> cov{};  ///< inverse weighted normal matrix
  std::size_t n_points = 0;
  double chi2 = 0.0;
  double x_max = 0.1;

  double p(double x) const { return 1.0 + c1 * x + c2 * x * x; }
  /// x sqrt(v11 + 2 x v12 + x^2 v22).
  double band(double x) const;
};

/// Weighted least squares for y - 1 = c1 x + c2 x^2 over points with
/// x <= x_max, weights 1 / err^2. Throws NumericError for fewer than three
/// usable points or a singular normal matrix, InvalidArgument for err <= 0.
FitResult fit_constrained_quadratic(const Curve& curve, double x_max = 0.1);

/// A fit result carrying the reference coefficients and band.
FitResult reference_fit();

// --- validity bounds -------------------------------------------------------------

enum class BandConvention {
  stat,       ///< half-width = statistical band (fit band or point errors)
  halfwidth,  ///< half-width = base_accuracy * value / 2
};

const char* to_string(BandConvention c);
BandConvention parse_band_convention(const std::string& s);

struct BoundOptions {
  double tolerance = 1e-3;      ///< accuracy target t
  double base_accuracy = 1e-3;  ///< accuracy of the worldline data itself
  BandConvention convention = BandConvention::stat;
  double x_search_max = 0.1;    ///< search range for fit-based bounds (the fit range)
};

struct BoundResult {
  double threshold = 0.0;  ///< largest a/R with overlapping bands
  double tolerance = 0.0;
  double base_accuracy = 0.0;
  BandConvention convention = BandConvention::stat;
  bool non_monotone = false;  ///< the gap changed sign more than once
};

/// Worldline band [v - w, v + w] against the PFA band [1 - x, 1 - x/3].
/// w is the band of the chosen convention, widened by t/2 * v when t exceeds
/// the base accuracy. Bisection to relative 1e-6 in x. Throws NumericError
/// if the bands never overlap or never separate within the search range.
BoundResult pfa_validity_bound(const FitResult& fit, const BoundOptions& opts);
BoundResult pfa_validity_bound(const Curve& curve, const BoundOptions& opts);

}  // namespace wlc
