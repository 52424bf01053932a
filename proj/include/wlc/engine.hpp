#pragma once

// Casimir interaction energies from a loop ensemble: the propertime integral
// is done in closed form on lambda supports, the center-of-mass integral by
// adaptive quadrature on the symmetry-reduced domain, and the loop average
// in fixed index order.
//
// Units: one length unit L0 per run. Sphere-plate energies are in 1/L0,
// slab energies per area in 1/L0^3, cylinder energies per length in 1/L0^2.

#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "wlc/geometry.hpp"
#include "wlc/loopgen.hpp"

namespace wlc {

struct EngineConfig {
  double mass = 0.0;               ///< m >= 0, in 1/L0
  /// Relative tolerance on the embedded-rule error estimate of the
  /// center-of-mass quadrature. The estimate is conservative; realized
  /// errors are typically ten times smaller.
  double quad_rel_tol = 1e-2;
  int max_depth = 40;              ///< bisection depth limit per cubature region
  std::size_t max_evaluations = 2'000'000;  ///< integrand calls per loop and geometry
  double trunc_tol = 1e-3;         ///< certified bound on the discarded tail, relative
  std::size_t batch_size = 256;    ///< loops in flight at once
  std::size_t threads = 0;         ///< 0 selects default_thread_count()
  std::size_t blocks = 100;        ///< jackknife blocks
  /// Also evaluate each loop on its every-4th-point subloop and combine the
  /// two as (2 v_N - v_{N/4}), removing the leading N^{-1/2} bias of the
  /// point-sampled loop extent. Needs N divisible by 4.
  bool extrapolate = false;
  /// 1, or 3 to average each loop over its cyclic axis permutations
  /// (x,y,z), (y,z,x), (z,x,y). The loop measure is isotropic, so the
  /// average has the same mean and a smaller variance.
  int orientations = 1;

  /// Throws InvalidArgument for values outside their documented ranges.
  void validate() const;
};

/// 2 * integral over the support of lambda^-5 exp(-m^2 lambda^2). Exact for
/// m = 0; adaptive Gauss-Kronrod to relative 1e-10 otherwise. Throws
/// DivergenceError when an interval of positive length starts at 0.
double propertime_integral(const LambdaSupport& support, double mass);

/// Propertime integral of the two-body support at one center point, via the
/// direct per-point construction.
double com_integrand(const Configuration& config, std::span<const Vec3> points, const Vec3& x_cm,
                     double mass);

/// A loop with the search structures the integrand needs for a set of
/// geometries. Cheap to query from one thread; build one per worker.
class PreparedLoop {
 public:
  PreparedLoop(std::span<const Vec3> points, std::span<const GeometryKind> kinds);

  std::span<const Vec3> points() const { return points_; }
  const ZExtent& extent() const { return extent_; }
  /// Radius bound used by the tail estimate: 3D for spheres, x-z for
  /// cylinders, |y_z| for slabs.
  double reach(GeometryKind kind) const;

  /// Same value as com_integrand. `scratch` avoids reallocation.
  double integrand(const Configuration& config, const Vec3& x_cm, double mass,
                   LambdaSupport& scratch) const;

 private:
  std::span<const Vec3> points_;
  ZExtent extent_;
  double reach_full_ = 0.0;
  double reach_xz_ = 0.0;
  std::optional<LoopIndex> full_;
  std::optional<LoopIndex> xz_;
};

struct ComResult {
  double value = 0.0;        ///< per-loop integral, physical units
  double error = 0.0;        ///< quadrature error estimate plus tail bound
  double extent = 0.0;       ///< final truncation distance in units of a
  std::size_t evaluations = 0;
  bool converged = true;
};

/// Center-of-mass integral of the integrand for one loop (sphere: weight
/// 2 pi rho over (rho, z); cylinder: (x, z) per unit length; slab: z per
/// unit area). The domain grows in shells until the certified tail bound
/// falls below trunc_tol times the accumulated value.
ComResult integrate_com(const Configuration& config, const PreparedLoop& loop, const EngineConfig& cfg);
ComResult integrate_com(const Configuration& config, std::span<const Vec3> points, const EngineConfig& cfg);

/// Same integral restricted to rho in [rho_lo, rho_hi] (x for cylinders) and
/// z in [z_lo, z_hi], without truncation logic.
ComResult integrate_com_box(const Configuration& config, const PreparedLoop& loop, double rho_lo,
                            double rho_hi, double z_lo, double z_hi, const EngineConfig& cfg);

/// Per-loop proximity-force estimate: the parallel-plate integral of this
/// loop's z-range, integrated over the body profile. Its continuum ensemble
/// mean reproduces the zeroth-order PFA energy (times -32 pi^2).
double pfa_control(const Configuration& config, const ZExtent& extent);

struct EnergyResult {
  Configuration geometry;
  EnsembleMeta ensemble;
  EngineConfig config;
  double value = 0.0;        ///< -(1/32 pi^2) x loop mean of integrate_com
  double stat_error = 0.0;   ///< jackknife over contiguous loop blocks
  /// Paired normalization: loop mean of integrate_com over loop mean of
  /// pfa_control, i.e. E / E0_PFA with the ensemble's own PFA estimate.
  double norm_value = 0.0;
  double norm_error = 0.0;
  std::size_t unconverged = 0;  ///< loops whose quadrature hit a limit
  double wall_seconds = 0.0;
  std::vector<double> per_loop;          ///< integrate_com values
  std::vector<double> per_loop_control;  ///< pfa_control values
};

/// Energy of one geometry. Deterministic for fixed inputs and any thread count.
EnergyResult casimir_energy(const Configuration& config, const LoopSource& loops, const EngineConfig& cfg);

/// Several geometries on one ensemble; each loop is generated and indexed once.
std::vector<EnergyResult> casimir_energies(std::span<const Configuration> configs, const LoopSource& loops,
                                           const EngineConfig& cfg);

struct DensitySpec {
  double rho_min = 0.0, rho_max = 1.0;
  std::size_t n_rho = 2;
  double z_min = 0.0, z_max = 1.0;
  std::size_t n_z = 2;
  void validate() const;
  double rho(std::size_t i) const;
  double z(std::size_t j) const;
};

/// Energy density -(1/32 pi^2) <integrand> on a (rho, z) grid. For spheres
/// the node (rho, z) is evaluated at x_cm = (|rho|, 0, z); for cylinders
/// rho is the x coordinate; slabs ignore rho. Values are row-major with z
/// varying slowest: values[j * n_rho + i].
struct DensityGrid {
  DensitySpec spec;
  std::vector<double> values;
  double at(std::size_t i, std::size_t j) const { return values[j * spec.n_rho + i]; }
};

DensityGrid energy_density(const Configuration& config, const LoopSource& loops, const DensitySpec& spec,
                           const EngineConfig& cfg);

/// -1/(32 pi^2), the worldline prefactor of the interaction energy.
inline constexpr double kEnergyPrefactor = -1.0 / (32.0 * std::numbers::pi * std::numbers::pi);

}  // namespace wlc
