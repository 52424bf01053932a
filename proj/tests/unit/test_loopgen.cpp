#include <doctest.h>

#include <unistd.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "wlc/loopgen.hpp"
#include "wlc/numerics.hpp"

using namespace wlc;

namespace {

// Independent bridge sampler: free random walk pinned by subtracting the
// linear drift to its endpoint, then centered.
std::vector<Vec3> naive_bridge(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, std::sqrt(2.0 / static_cast<double>(n)));
  std::vector<Vec3> walk(n + 1);
  for (std::size_t k = 1; k <= n; ++k) walk[k] = walk[k - 1] + Vec3{g(rng), g(rng), g(rng)};
  std::vector<Vec3> pts(n);
  Vec3 mean{};
  for (std::size_t k = 0; k < n; ++k) {
    pts[k] = walk[k] - walk[n] * (static_cast<double>(k) / static_cast<double>(n));
    mean += pts[k];
  }
  for (auto& p : pts) p -= mean * (1.0 / static_cast<double>(n));
  return pts;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("wlc_test_" + std::to_string(::getpid()) + "_" + name);
}

std::string blob_of(const Ensemble& e) {
  std::ostringstream s(std::ios::binary);
  save_ensemble(e, s);
  return s.str();
}

EnsembleMeta meta_of(std::uint64_t seed, std::uint32_t n_l, std::uint32_t n) {
  EnsembleMeta m;
  m.seed = seed;
  m.n_loops = n_l;
  m.n_points = n;
  return m;
}

}  // namespace

TEST_CASE("two-point loop from opposite increments") {
  const std::vector<Vec3> inc{{0, 0, 0.5}, {0, 0, -0.5}};
  const UnitLoop loop = loop_from_increments(inc);
  REQUIRE(loop.size() == 2);
  CHECK(loop[0].z == doctest::Approx(-0.25).epsilon(1e-15));
  CHECK(loop[1].z == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(loop[0].x == 0.0);
  CHECK(loop[1].y == 0.0);
}

TEST_CASE("closure and center of mass hold for every generated loop") {
  const EnsembleMeta m = meta_of(3, 200, 257);
  for (std::size_t i = 0; i < m.n_loops; ++i) {
    const UnitLoop loop = generate_loop(m, i);
    const Vec3 c = compensated_mean(loop.points());
    CHECK(std::abs(c.x) <= 1e-12);
    CHECK(std::abs(c.y) <= 1e-12);
    CHECK(std::abs(c.z) <= 1e-12);
    // Closing increment equals minus the sum of the others.
    Vec3 sum{};
    for (std::size_t k = 0; k < loop.size(); ++k) sum += loop[(k + 1) % loop.size()] - loop[k];
    CHECK(norm(sum) <= 1e-12);
  }
}

TEST_CASE("N below two is rejected") {
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(generate_unit_loop(1, rng), InvalidArgument);
  CHECK_THROWS_AS(UnitLoop(std::vector<Vec3>{{0, 0, 0}}), InvalidArgument);
  CHECK_THROWS_AS(UnitLoop(std::vector<Vec3>{{0, 0, 1}, {0, 0, 0}}), InvalidArgument);
}

TEST_CASE("bridge covariance at half period agrees with a naive sampler") {
  const std::size_t n = 64, n_l = 10000;
  const EnsembleMeta m = meta_of(17, n_l, n);
  std::mt19937_64 rng(99);
  double lib = 0, lib2 = 0, ref = 0, ref2 = 0;
  for (std::size_t l = 0; l < n_l; ++l) {
    const UnitLoop loop = generate_loop(m, l);
    const double d = norm2(loop[5] - loop[5 + n / 2]);
    lib += d;
    lib2 += d * d;
    const auto pts = naive_bridge(n, rng);
    const double e = norm2(pts[5] - pts[5 + n / 2]);
    ref += e;
    ref2 += e * e;
  }
  const double nl = static_cast<double>(n_l);
  const double lib_mean = lib / nl, ref_mean = ref / nl;
  const double lib_se = std::sqrt((lib2 / nl - lib_mean * lib_mean) / nl);
  const double ref_se = std::sqrt((ref2 / nl - ref_mean * ref_mean) / nl);
  CHECK(std::abs(lib_mean - 1.5) < 5 * lib_se);
  CHECK(std::abs(ref_mean - 1.5) < 5 * ref_se);
  CHECK(std::abs(lib_mean - ref_mean) < 5 * std::hypot(lib_se, ref_se));
}

TEST_CASE("ensemble generation is deterministic and seed dependent") {
  const Ensemble a = generate_ensemble(meta_of(1, 3, 8));
  const Ensemble b = generate_ensemble(meta_of(1, 3, 8));
  CHECK(a == b);
  CHECK(a.loops.size() == 3);
  const Ensemble c = generate_ensemble(meta_of(2, 3, 8));
  bool differs = false;
  for (std::size_t l = 0; l < 3; ++l)
    for (std::size_t k = 0; k < 8; ++k) differs = differs || !(a.loops[l][k] == c.loops[l][k]);
  CHECK(differs);
}

TEST_CASE("invalid meta and resource exhaustion are distinct errors") {
  CHECK_THROWS_AS(generate_ensemble(meta_of(1, 0, 8)), InvalidArgument);
  CHECK_THROWS_AS(generate_ensemble(meta_of(1, 3, 1)), InvalidArgument);
  EnsembleMeta bad_tag = meta_of(1, 3, 8);
  bad_tag.algorithm_tag = "other";
  CHECK_THROWS_AS(generate_ensemble(bad_tag), InvalidArgument);
  CHECK_THROWS_AS(generate_ensemble(meta_of(1, 1000, 1000), 1024), ResourceError);
}

TEST_CASE("loop streams do not depend on the batch a loop is drawn in") {
  const EnsembleMeta m = meta_of(5, 10, 16);
  const Ensemble all = generate_ensemble(m);
  for (std::size_t i = 0; i < 10; ++i) CHECK(generate_loop(m, i) == all.loops[i]);
  CHECK(loop_stream_seed(5, 0) != loop_stream_seed(5, 1));
  CHECK(loop_stream_seed(5, 0) != loop_stream_seed(6, 0));
}

TEST_CASE("persistence round trip is bit exact") {
  const Ensemble e = generate_ensemble(meta_of(11, 3, 33));
  std::istringstream in(blob_of(e), std::ios::binary);
  const Ensemble back = load_ensemble(in);
  CHECK(back == e);

  const auto path = temp_path("rt.wlc");
  save_ensemble(e, path);
  CHECK(load_ensemble(path) == e);
  std::filesystem::remove(path);
}

TEST_CASE("file layout") {
  const Ensemble e = generate_ensemble(meta_of(7, 2, 4));
  const std::string blob = blob_of(e);
  const std::size_t tag = std::string(kVLoopTag).size();
  CHECK(blob.size() == 4 + 4 + 4 + 4 + 8 + 4 + tag + 2 * 4 * 3 * 8 + 8);
  CHECK(blob.substr(0, 4) == "WLC1");
  auto u32 = [&](std::size_t off) {
    std::uint32_t v;
    std::memcpy(&v, blob.data() + off, 4);
    return v;
  };
  CHECK(u32(4) == 1);
  CHECK(u32(8) == 4);
  CHECK(u32(12) == 2);
  std::uint64_t seed;
  std::memcpy(&seed, blob.data() + 16, 8);
  CHECK(seed == 7);
  CHECK(u32(24) == tag);
  CHECK(blob.substr(28, tag) == kVLoopTag);
  double first;
  std::memcpy(&first, blob.data() + 28 + tag, 8);
  CHECK(first == e.loops[0][0].x);
  // Checksum covers everything between magic and checksum.
  std::uint64_t stored;
  std::memcpy(&stored, blob.data() + blob.size() - 8, 8);
  const auto* p = reinterpret_cast<const unsigned char*>(blob.data());
  CHECK(stored == fnv1a64({p + 4, blob.size() - 12}, kFnvOffset));
}

TEST_CASE("format errors") {
  const std::string blob = blob_of(generate_ensemble(meta_of(7, 3, 5)));
  auto load_kind = [](std::string b) {
    std::istringstream in(b, std::ios::binary);
    try {
      load_ensemble(in);
    } catch (const FormatError& e) {
      return static_cast<int>(e.kind());
    }
    return -1;
  };
  std::string magic = blob;
  magic[0] = 'X';
  CHECK(load_kind(magic) == static_cast<int>(FormatError::Kind::bad_magic));
  std::string version = blob;
  version[4] = 2;
  CHECK(load_kind(version) == static_cast<int>(FormatError::Kind::bad_version));
  CHECK(load_kind(blob.substr(0, blob.size() - 20)) == static_cast<int>(FormatError::Kind::truncated));
  CHECK(load_kind(blob.substr(0, 10)) == static_cast<int>(FormatError::Kind::truncated));
  std::string flipped = blob;
  flipped[60] ^= 0x10;
  CHECK(load_kind(flipped) == static_cast<int>(FormatError::Kind::checksum));
}

TEST_CASE("streamed file equals saved ensemble and serves loops by index") {
  const EnsembleMeta m = meta_of(21, 5, 12);
  const auto a = temp_path("stream.wlc"), b = temp_path("saved.wlc");
  write_generated_ensemble(m, a);
  save_ensemble(generate_ensemble(m), b);
  auto bytes = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  CHECK(bytes(a) == bytes(b));
  const FileLoops file(a);
  CHECK(file.meta() == m);
  for (std::size_t i = 0; i < 5; ++i) CHECK(file.loop(i) == generate_loop(m, i));
  CHECK_THROWS_AS(file.loop(5), InvalidArgument);
  std::filesystem::remove(a);
  std::filesystem::remove(b);
}

TEST_CASE("bridge diagnostics") {
  SUBCASE("correct sampler") {
    const Ensemble e = generate_ensemble(meta_of(4, 2000, 128));
    const BridgeReport r = bridge_diagnostics(e.loops, 20);
    CHECK(r.pairs.size() >= 10);
    CHECK(r.max_abs_z < 4.0);
    for (const auto& p : r.pairs) {
      CHECK(p.target == doctest::Approx(6 * p.t * (1 - p.t)));
      CHECK(p.std_error >= 0.0);
    }
  }
  SUBCASE("doubled variance is detected") {
    Ensemble e = generate_ensemble(meta_of(4, 2000, 128));
    for (auto& l : e.loops) {
      std::vector<Vec3> pts(l.points().begin(), l.points().end());
      for (auto& p : pts) p *= std::sqrt(2.0);
      l = UnitLoop(pts);
    }
    const BridgeReport r = bridge_diagnostics(e.loops, 20);
    CHECK(r.mean_z > 5.0);
    std::size_t positive = 0, nonzero = 0;
    for (const auto& p : r.pairs)
      if (p.target > 0) {
        ++nonzero;
        positive += p.z_score > 0 ? 1 : 0;
      }
    CHECK(positive == nonzero);
  }
  SUBCASE("two-point loops") {
    const Ensemble e = generate_ensemble(meta_of(4, 200, 2));
    const BridgeReport r = bridge_diagnostics(e.loops, 20);
    for (const auto& p : r.pairs) {
      CHECK((p.t == 0.0 || p.t == 0.5));
      if (p.t == 0.0) {
        CHECK(p.target == 0.0);
        CHECK(p.measured == 0.0);
      }
    }
  }
  SUBCASE("too small") {
    const Ensemble e = generate_ensemble(meta_of(4, 99, 8));
    CHECK_THROWS_AS(bridge_diagnostics(e.loops), InvalidArgument);
  }
}
