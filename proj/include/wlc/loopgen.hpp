#pragma once

// Unit-propertime closed worldlines ("v loops"), ensembles and their binary
// persistence.
//
// A unit loop is the discretized Brownian bridge y(t), t in [0, 1), with
// per-coordinate variance 2 per unit propertime, shifted so that its center of
// mass is at the origin. A worldline of propertime T centered at x_cm is
// x_cm + sqrt(T) * y.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <fstream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "wlc/error.hpp"
#include "wlc/vec3.hpp"

namespace wlc {

inline constexpr const char* kVLoopTag = "vloop-bridge-v1";

class UnitLoop {
 public:
  UnitLoop() = default;

  /// Takes ownership of `points`; throws InvalidArgument if N < 2 or the
  /// center of mass deviates from zero by more than 1e-12 per coordinate.
  explicit UnitLoop(std::vector<Vec3> points);

  std::size_t size() const { return points_.size(); }
  std::span<const Vec3> points() const { return points_; }
  const Vec3& operator[](std::size_t i) const { return points_[i]; }

  friend bool operator==(const UnitLoop&, const UnitLoop&) = default;

 private:
  std::vector<Vec3> points_;
};

/// Builds a loop from raw increments: subtracts the increment mean (closure),
/// cumulative-sums to points starting at the origin and shifts the center of
/// mass to zero.
UnitLoop loop_from_increments(std::span<const Vec3> increments);

/// Draws one unit loop with N points from `rng`.
template <class URBG>
UnitLoop generate_unit_loop(std::size_t n_points, URBG& rng) {
  if (n_points < 2) throw InvalidArgument("unit loop needs at least 2 points");
  std::normal_distribution<double> gauss(0.0, std::sqrt(2.0 / static_cast<double>(n_points)));
  std::vector<Vec3> inc(n_points);
  for (auto& v : inc) {
    v.x = gauss(rng);
    v.y = gauss(rng);
    v.z = gauss(rng);
  }
  return loop_from_increments(inc);
}

struct EnsembleMeta {
  std::uint32_t n_loops = 0;
  std::uint32_t n_points = 0;
  std::uint64_t seed = 0;
  std::string algorithm_tag = kVLoopTag;

  friend bool operator==(const EnsembleMeta&, const EnsembleMeta&) = default;
};

/// Throws InvalidArgument unless n_L >= 1, N >= 2 and the tag is known.
void validate(const EnsembleMeta& meta);

/// Seed of the private random stream of loop `index`:
/// splitmix64(splitmix64(seed) XOR index).
std::uint64_t loop_stream_seed(std::uint64_t seed, std::uint64_t index);

/// Loop `index` of the ensemble described by `meta`. Pure in (meta, index).
UnitLoop generate_loop(const EnsembleMeta& meta, std::size_t index);

struct Ensemble {
  EnsembleMeta meta;
  std::vector<UnitLoop> loops;

  friend bool operator==(const Ensemble&, const Ensemble&) = default;
};

/// Materializes all loops. Requests above `memory_budget_bytes` raise
/// ResourceError (distinct from the InvalidArgument raised for bad meta).
Ensemble generate_ensemble(const EnsembleMeta& meta,
                           std::size_t memory_budget_bytes = std::size_t{2} << 30);

// ---------------------------------------------------------------------------
// Binary format "WLC1" (little endian):
//   magic "WLC1" | u32 version=1 | u32 N | u32 n_L | u64 seed |
//   u32 tag_len | tag bytes | n_L*N*3 f64 (loop-major, point-major, xyz) |
//   u64 checksum
// The checksum is 64-bit FNV-1a over every byte between the magic and the
// checksum itself.

class FormatError : public std::runtime_error {
 public:
  enum class Kind { bad_magic, bad_version, truncated, checksum, io };
  FormatError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

inline constexpr std::uint32_t kFormatVersion = 1;

std::uint64_t fnv1a64(std::span<const unsigned char> bytes, std::uint64_t state);
inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;

void save_ensemble(const Ensemble& ensemble, std::ostream& out);
void save_ensemble(const Ensemble& ensemble, const std::filesystem::path& path);
Ensemble load_ensemble(std::istream& in);
Ensemble load_ensemble(const std::filesystem::path& path);

/// Streams loops of `meta` straight to `path` without holding the ensemble.
void write_generated_ensemble(const EnsembleMeta& meta, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Loop sources used by the engine: random access by loop index.

class LoopSource {
 public:
  virtual ~LoopSource() = default;
  virtual const EnsembleMeta& meta() const = 0;
  virtual UnitLoop loop(std::size_t index) const = 0;
  std::size_t size() const { return meta().n_loops; }
};

class GeneratedLoops final : public LoopSource {
 public:
  explicit GeneratedLoops(EnsembleMeta meta);
  const EnsembleMeta& meta() const override { return meta_; }
  UnitLoop loop(std::size_t index) const override { return generate_loop(meta_, index); }

 private:
  EnsembleMeta meta_;
};

class InMemoryLoops final : public LoopSource {
 public:
  explicit InMemoryLoops(const Ensemble& ensemble) : ensemble_(ensemble) {}
  const EnsembleMeta& meta() const override { return ensemble_.meta; }
  UnitLoop loop(std::size_t index) const override { return ensemble_.loops.at(index); }

 private:
  const Ensemble& ensemble_;
};

/// Reads loops on demand from an ensemble file. The whole file is checksummed
/// once on open.
class FileLoops final : public LoopSource {
 public:
  explicit FileLoops(const std::filesystem::path& path);
  const EnsembleMeta& meta() const override { return meta_; }
  UnitLoop loop(std::size_t index) const override;

 private:
  EnsembleMeta meta_;
  std::uint64_t data_offset_ = 0;
  mutable std::ifstream in_;
  mutable std::mutex mutex_;
};

// ---------------------------------------------------------------------------

struct BridgePair {
  std::size_t i = 0;
  std::size_t j = 0;
  double t = 0.0;         ///< |i - j| / N
  double measured = 0.0;  ///< ensemble mean of |y_i - y_j|^2
  double target = 0.0;    ///< 6 t (1 - t)
  double std_error = 0.0;
  double z_score = 0.0;
};

struct BridgeReport {
  std::vector<BridgePair> pairs;
  double max_abs_z = 0.0;
  double mean_z = 0.0;
};

/// Compares the measured bridge covariance with 6 t (1 - t) on up to
/// `n_pairs` index pairs whose separations span [0, N/2].
/// Requires at least 100 loops.
BridgeReport bridge_diagnostics(std::span<const UnitLoop> loops, std::size_t n_pairs = 20);

}  // namespace wlc
