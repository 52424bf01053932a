#include "wlc/stats.hpp"

#include <cmath>
#include <string>

#include "wlc/error.hpp"
#include "wlc/numerics.hpp"

namespace wlc {

std::pair<std::size_t, std::size_t> block_range(std::size_t n, std::size_t n_b, std::size_t k) {
  const std::size_t base = n / n_b, extra = n % n_b;
  const std::size_t begin = k * base + std::min(k, extra);
  return {begin, begin + base + (k < extra ? 1 : 0)};
}

namespace {

void check_blocks(std::size_t n, std::size_t n_b) {
  if (n_b < 2) throw InvalidArgument("jackknife needs at least 2 blocks");
  if (n_b > n)
    throw InvalidArgument("jackknife: " + std::to_string(n_b) + " blocks for " + std::to_string(n) +
                          " samples");
}

}  // namespace

std::vector<double> block_sums(std::span<const double> samples, std::size_t n_b) {
  check_blocks(samples.size(), n_b);
  std::vector<double> sums(n_b);
  for (std::size_t k = 0; k < n_b; ++k) {
    auto [b, e] = block_range(samples.size(), n_b, k);
    sums[k] = compensated_sum(samples.subspan(b, e - b));
  }
  return sums;
}

JackknifeResult jackknife(std::span<const std::span<const double>> series, std::size_t n_b,
                          const BlockEstimator& estimator) {
  if (series.empty()) throw InvalidArgument("jackknife: no series");
  const std::size_t n = series[0].size();
  for (auto s : series)
    if (s.size() != n) throw InvalidArgument("jackknife: series lengths differ");
  check_blocks(n, n_b);

  const std::size_t m = series.size();
  std::vector<std::vector<double>> sums(m);
  std::vector<double> total(m);
  for (std::size_t s = 0; s < m; ++s) {
    sums[s] = block_sums(series[s], n_b);
    total[s] = compensated_sum(sums[s]);
  }
  JackknifeResult r;
  r.blocks = n_b;
  r.mean = estimator(total, n);

  std::vector<double> theta(n_b), partial(m);
  for (std::size_t k = 0; k < n_b; ++k) {
    auto [b, e] = block_range(n, n_b, k);
    for (std::size_t s = 0; s < m; ++s) partial[s] = total[s] - sums[s][k];
    theta[k] = estimator(partial, n - (e - b));
  }
  const double bar = compensated_sum(theta) / static_cast<double>(n_b);
  CompensatedSum dev;
  for (double t : theta) dev += (t - bar) * (t - bar);
  r.error = std::sqrt(static_cast<double>(n_b - 1) / static_cast<double>(n_b) * dev.value());
  return r;
}

JackknifeResult jackknife_mean(std::span<const double> samples, std::size_t n_b) {
  const std::span<const double> series[] = {samples};
  return jackknife(series, n_b, [](std::span<const double> s, std::size_t count) {
    return s[0] / static_cast<double>(count);
  });
}

JackknifeResult jackknife_ratio(std::span<const double> num, std::span<const double> den, std::size_t n_b) {
  const std::span<const double> series[] = {num, den};
  return jackknife(series, n_b, [](std::span<const double> s, std::size_t) { return s[0] / s[1]; });
}

JackknifeResult jackknife_block_means(std::span<const double> block_means) {
  return jackknife_mean(block_means, block_means.size());
}

SweepTable discretization_sweep(const Configuration& config, std::uint64_t seed,
                                std::span<const std::uint32_t> n_points, std::uint32_t n_loops,
                                const EngineConfig& cfg) {
  if (n_points.empty()) throw InvalidArgument("discretization sweep needs at least one N");
  for (std::size_t i = 1; i < n_points.size(); ++i)
    if (n_points[i] <= n_points[i - 1]) throw InvalidArgument("N list must be strictly increasing");

  SweepTable table;
  for (std::uint32_t n : n_points) {
    EnsembleMeta meta;
    meta.n_loops = n_loops;
    meta.n_points = n;
    meta.seed = seed;
    const GeneratedLoops loops(meta);
    const EnergyResult e = casimir_energy(config, loops, cfg);
    table.rows.push_back({n, e.value, e.stat_error, e.norm_value, e.norm_error});
  }
  if (table.rows.size() > 1) {
    const SweepRow& last = table.rows.back();
    double worst = 0.0;
    for (const auto& row : table.rows) worst = std::max(worst, std::abs(row.energy - last.energy));
    table.max_deviation_sigma = last.error > 0.0 ? worst / last.error : (worst > 0.0 ? kInf : 0.0);
  }
  return table;
}

}  // namespace wlc
