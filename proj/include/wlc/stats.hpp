#pragma once

// Delete-one-block jackknife over contiguous loop blocks, and convergence
// sweeps in the number of points per loop.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "wlc/engine.hpp"

namespace wlc {

struct JackknifeResult {
  double mean = 0.0;   ///< estimator on the full sample
  double error = 0.0;  ///< jackknife standard error
  std::size_t blocks = 0;
};

/// [begin, end) of block k when n samples are cut into n_b contiguous blocks
/// whose sizes differ by at most one. Requires 2 <= n_b <= n.
std::pair<std::size_t, std::size_t> block_range(std::size_t n, std::size_t n_b, std::size_t k);

/// Per-block sums of `samples` (compensated, in index order).
std::vector<double> block_sums(std::span<const double> samples, std::size_t n_b);

/// Generic delete-one-block jackknife. `estimator` receives a mask-free view:
/// the total sums minus the omitted block's sums for each of the supplied
/// series, and the remaining sample count.
using BlockEstimator = std::function<double(std::span<const double> sums, std::size_t count)>;
JackknifeResult jackknife(std::span<const std::span<const double>> series, std::size_t n_b,
                          const BlockEstimator& estimator);

/// Jackknife of the sample mean. Throws InvalidArgument when n_b < 2 or
/// n_b exceeds the sample count.
JackknifeResult jackknife_mean(std::span<const double> samples, std::size_t n_b);

/// Jackknife of mean(num) / mean(den) over paired samples.
JackknifeResult jackknife_ratio(std::span<const double> num, std::span<const double> den, std::size_t n_b);

/// Jackknife error from equal-weight block means (order does not matter).
JackknifeResult jackknife_block_means(std::span<const double> block_means);

struct SweepRow {
  std::uint32_t n_points = 0;
  double energy = 0.0;
  double error = 0.0;
  double norm_value = 0.0;
  double norm_error = 0.0;
};

struct SweepTable {
  std::vector<SweepRow> rows;
  /// max_i |E(N_i) - E(N_max)| / err(N_max); absent for a single N.
  std::optional<double> max_deviation_sigma;
};

/// Energies at each N (strictly increasing) with common seed and n_L.
SweepTable discretization_sweep(const Configuration& config, std::uint64_t seed,
                                std::span<const std::uint32_t> n_points, std::uint32_t n_loops,
                                const EngineConfig& cfg);

}  // namespace wlc
