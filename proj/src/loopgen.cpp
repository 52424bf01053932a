#include "wlc/loopgen.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

#include "wlc/numerics.hpp"

namespace wlc {

namespace {

static_assert(std::endian::native == std::endian::little,
              "ensemble I/O assumes a little-endian host");

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Writes raw little-endian values and folds them into the running checksum.
class ChecksumWriter {
 public:
  explicit ChecksumWriter(std::ostream& out) : out_(out) {}

  template <class T>
  void put(const T& value) {
    std::array<unsigned char, sizeof(T)> buf{};
    std::memcpy(buf.data(), &value, sizeof(T));
    bytes(buf);
  }
  void bytes(std::span<const unsigned char> b) {
    hash_ = fnv1a64(b, hash_);
    out_.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  }
  void points(std::span<const Vec3> pts) {
    static_assert(sizeof(Vec3) == 3 * sizeof(double));
    bytes({reinterpret_cast<const unsigned char*>(pts.data()), pts.size() * sizeof(Vec3)});
  }
  std::uint64_t hash() const { return hash_; }

 private:
  std::ostream& out_;
  std::uint64_t hash_ = kFnvOffset;
};

class ChecksumReader {
 public:
  explicit ChecksumReader(std::istream& in) : in_(in) {}

  void bytes(std::span<unsigned char> b, bool hashed = true) {
    in_.read(reinterpret_cast<char*>(b.data()), static_cast<std::streamsize>(b.size()));
    if (static_cast<std::size_t>(in_.gcount()) != b.size())
      throw FormatError(FormatError::Kind::truncated, "ensemble blob is truncated");
    if (hashed) hash_ = fnv1a64(b, hash_);
  }
  template <class T>
  T get(bool hashed = true) {
    std::array<unsigned char, sizeof(T)> buf{};
    bytes(buf, hashed);
    T value;
    std::memcpy(&value, buf.data(), sizeof(T));
    return value;
  }
  std::uint64_t hash() const { return hash_; }

 private:
  std::istream& in_;
  std::uint64_t hash_ = kFnvOffset;
};

constexpr std::array<unsigned char, 4> kMagic{'W', 'L', 'C', '1'};

void write_header(ChecksumWriter& w, std::ostream& out, const EnsembleMeta& meta) {
  out.write(reinterpret_cast<const char*>(kMagic.data()), kMagic.size());
  w.put(kFormatVersion);
  w.put(meta.n_points);
  w.put(meta.n_loops);
  w.put(meta.seed);
  w.put(static_cast<std::uint32_t>(meta.algorithm_tag.size()));
  w.bytes({reinterpret_cast<const unsigned char*>(meta.algorithm_tag.data()),
           meta.algorithm_tag.size()});
}

EnsembleMeta read_header(ChecksumReader& r, std::istream& in) {
  std::array<unsigned char, 4> magic{};
  in.read(reinterpret_cast<char*>(magic.data()), magic.size());
  if (in.gcount() != static_cast<std::streamsize>(magic.size()))
    throw FormatError(FormatError::Kind::truncated, "ensemble blob is truncated");
  if (magic != kMagic) throw FormatError(FormatError::Kind::bad_magic, "not a WLC1 ensemble file");
  const auto version = r.get<std::uint32_t>();
  if (version != kFormatVersion)
    throw FormatError(FormatError::Kind::bad_version,
                      "unsupported ensemble format version " + std::to_string(version));
  EnsembleMeta meta;
  meta.n_points = r.get<std::uint32_t>();
  meta.n_loops = r.get<std::uint32_t>();
  meta.seed = r.get<std::uint64_t>();
  const auto tag_len = r.get<std::uint32_t>();
  if (tag_len > 4096) throw FormatError(FormatError::Kind::bad_version, "implausible tag length");
  meta.algorithm_tag.resize(tag_len);
  r.bytes({reinterpret_cast<unsigned char*>(meta.algorithm_tag.data()), tag_len});
  return meta;
}

}  // namespace

UnitLoop::UnitLoop(std::vector<Vec3> points) : points_(std::move(points)) {
  if (points_.size() < 2) throw InvalidArgument("unit loop needs at least 2 points");
  Vec3 mean = compensated_mean(std::span<const Vec3>(points_));
  constexpr double tol = 1e-12;
  if (std::abs(mean.x) > tol || std::abs(mean.y) > tol || std::abs(mean.z) > tol)
    throw InvalidArgument("unit loop center of mass is not at the origin");
}

UnitLoop loop_from_increments(std::span<const Vec3> increments) {
  const std::size_t n = increments.size();
  if (n < 2) throw InvalidArgument("unit loop needs at least 2 points");
  const Vec3 inc_mean = compensated_mean(increments);
  std::vector<Vec3> pts(n);
  Vec3 pos{};
  for (std::size_t i = 0; i < n; ++i) {
    pts[i] = pos;
    pos += increments[i] - inc_mean;
  }
  const Vec3 com = compensated_mean(std::span<const Vec3>(pts));
  for (auto& p : pts) p -= com;
  return UnitLoop(std::move(pts));
}

void validate(const EnsembleMeta& meta) {
  if (meta.n_loops < 1) throw InvalidArgument("ensemble needs n_L >= 1");
  if (meta.n_points < 2) throw InvalidArgument("ensemble needs N >= 2");
  if (meta.algorithm_tag != kVLoopTag)
    throw InvalidArgument("unknown loop algorithm tag '" + meta.algorithm_tag + "'");
}

std::uint64_t loop_stream_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(splitmix64(seed) ^ index);
}

UnitLoop generate_loop(const EnsembleMeta& meta, std::size_t index) {
  std::mt19937_64 rng(loop_stream_seed(meta.seed, index));
  return generate_unit_loop(meta.n_points, rng);
}

Ensemble generate_ensemble(const EnsembleMeta& meta, std::size_t memory_budget_bytes) {
  validate(meta);
  const double bytes = static_cast<double>(meta.n_loops) * meta.n_points * sizeof(Vec3);
  if (bytes > static_cast<double>(memory_budget_bytes))
    throw ResourceError("ensemble of " + std::to_string(bytes / (1 << 20)) +
                        " MiB exceeds the memory budget; stream it instead");
  Ensemble e{meta, {}};
  try {
    e.loops.reserve(meta.n_loops);
    for (std::size_t i = 0; i < meta.n_loops; ++i) e.loops.push_back(generate_loop(meta, i));
  } catch (const std::bad_alloc&) {
    throw ResourceError("out of memory while generating the ensemble");
  }
  return e;
}

std::uint64_t fnv1a64(std::span<const unsigned char> bytes, std::uint64_t state) {
  for (unsigned char b : bytes) {
    state ^= b;
    state *= 0x100000001b3ULL;
  }
  return state;
}

void save_ensemble(const Ensemble& ensemble, std::ostream& out) {
  validate(ensemble.meta);
  if (ensemble.loops.size() != ensemble.meta.n_loops)
    throw InvalidArgument("ensemble loop count does not match its meta");
  ChecksumWriter w(out);
  write_header(w, out, ensemble.meta);
  for (const auto& loop : ensemble.loops) {
    if (loop.size() != ensemble.meta.n_points)
      throw InvalidArgument("loop point count does not match ensemble meta");
    w.points(loop.points());
  }
  const std::uint64_t sum = w.hash();
  out.write(reinterpret_cast<const char*>(&sum), sizeof sum);
  if (!out) throw FormatError(FormatError::Kind::io, "failed writing ensemble");
}

void save_ensemble(const Ensemble& ensemble, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatError::Kind::io, "cannot open " + path.string() + " for writing");
  save_ensemble(ensemble, out);
}

void write_generated_ensemble(const EnsembleMeta& meta, const std::filesystem::path& path) {
  validate(meta);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatError::Kind::io, "cannot open " + path.string() + " for writing");
  ChecksumWriter w(out);
  write_header(w, out, meta);
  for (std::size_t i = 0; i < meta.n_loops; ++i) w.points(generate_loop(meta, i).points());
  const std::uint64_t sum = w.hash();
  out.write(reinterpret_cast<const char*>(&sum), sizeof sum);
  if (!out) throw FormatError(FormatError::Kind::io, "failed writing " + path.string());
}

Ensemble load_ensemble(std::istream& in) {
  ChecksumReader r(in);
  Ensemble e;
  e.meta = read_header(r, in);
  try {
    validate(e.meta);
  } catch (const InvalidArgument& err) {
    throw FormatError(FormatError::Kind::bad_version, err.what());
  }
  e.loops.reserve(e.meta.n_loops);
  std::vector<Vec3> pts;
  for (std::size_t l = 0; l < e.meta.n_loops; ++l) {
    pts.resize(e.meta.n_points);
    r.bytes({reinterpret_cast<unsigned char*>(pts.data()), pts.size() * sizeof(Vec3)});
    e.loops.emplace_back(std::move(pts));
    pts = {};
  }
  const auto stored = r.get<std::uint64_t>(false);
  if (stored != r.hash()) throw FormatError(FormatError::Kind::checksum, "ensemble checksum mismatch");
  return e;
}

Ensemble load_ensemble(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Kind::io, "cannot open " + path.string());
  return load_ensemble(in);
}

GeneratedLoops::GeneratedLoops(EnsembleMeta meta) : meta_(std::move(meta)) { validate(meta_); }

FileLoops::FileLoops(const std::filesystem::path& path) : in_(path, std::ios::binary) {
  if (!in_) throw FormatError(FormatError::Kind::io, "cannot open " + path.string());
  ChecksumReader r(in_);
  meta_ = read_header(r, in_);
  try {
    validate(meta_);
  } catch (const InvalidArgument& err) {
    throw FormatError(FormatError::Kind::bad_version, err.what());
  }
  data_offset_ = static_cast<std::uint64_t>(in_.tellg());
  std::vector<unsigned char> chunk(std::size_t{1} << 20);
  std::uint64_t remaining = std::uint64_t{meta_.n_loops} * meta_.n_points * sizeof(Vec3);
  while (remaining > 0) {
    const auto take = static_cast<std::size_t>(std::min<std::uint64_t>(remaining, chunk.size()));
    r.bytes({chunk.data(), take});
    remaining -= take;
  }
  const auto stored = r.get<std::uint64_t>(false);
  if (stored != r.hash()) throw FormatError(FormatError::Kind::checksum, "ensemble checksum mismatch");
}

UnitLoop FileLoops::loop(std::size_t index) const {
  if (index >= meta_.n_loops) throw InvalidArgument("loop index out of range");
  std::vector<Vec3> pts(meta_.n_points);
  const std::uint64_t bytes = std::uint64_t{meta_.n_points} * sizeof(Vec3);
  std::lock_guard lock(mutex_);
  in_.clear();
  in_.seekg(static_cast<std::streamoff>(data_offset_ + index * bytes));
  in_.read(reinterpret_cast<char*>(pts.data()), static_cast<std::streamsize>(bytes));
  if (!in_) throw FormatError(FormatError::Kind::truncated, "ensemble file is truncated");
  return UnitLoop(std::move(pts));
}

BridgeReport bridge_diagnostics(std::span<const UnitLoop> loops, std::size_t n_pairs) {
  if (loops.size() < 100) throw InvalidArgument("bridge diagnostics need at least 100 loops");
  if (n_pairs < 2) throw InvalidArgument("bridge diagnostics need at least 2 pairs");
  const std::size_t n = loops.front().size();
  for (const auto& l : loops)
    if (l.size() != n) throw InvalidArgument("loops of different sizes");

  std::vector<std::size_t> lags;
  for (std::size_t k = 0; k < n_pairs; ++k) {
    const auto lag = static_cast<std::size_t>(
        std::llround(static_cast<double>(k) * static_cast<double>(n / 2) / static_cast<double>(n_pairs - 1)));
    if (lags.empty() || lags.back() != lag) lags.push_back(lag);
  }

  BridgeReport report;
  const double count = static_cast<double>(loops.size());
  for (std::size_t k = 0; k < lags.size(); ++k) {
    BridgePair p;
    p.i = (k * 7919) % n;
    p.j = (p.i + lags[k]) % n;
    p.t = static_cast<double>(lags[k]) / static_cast<double>(n);
    p.target = 6.0 * p.t * (1.0 - p.t);
    CompensatedSum sum, sum2;
    for (const auto& l : loops) {
      const double s = norm2(l[p.i] - l[p.j]);
      sum += s;
      sum2 += s * s;
    }
    p.measured = sum.value() / count;
    const double var = std::max(0.0, (sum2.value() / count - p.measured * p.measured) * count / (count - 1));
    p.std_error = std::sqrt(var / count);
    p.z_score = p.std_error > 0 ? (p.measured - p.target) / p.std_error : 0.0;
    report.max_abs_z = std::max(report.max_abs_z, std::abs(p.z_score));
    report.mean_z += p.z_score;
    report.pairs.push_back(p);
  }
  report.mean_z /= static_cast<double>(report.pairs.size());
  return report;
}

}  // namespace wlc
