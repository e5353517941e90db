#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "md/features.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace md;

namespace {

GrayFrame square_image(double offset) {
  GrayFrame g(32, 32, offset);
  for (int y = 11; y <= 20; ++y)
    for (int x = 11; x <= 20; ++x) g.at(x, y) = 200.0 + offset;
  return g;
}

std::vector<Keypoint> raster_sorted(std::vector<Keypoint> v) {
  std::sort(v.begin(), v.end(), [](const Keypoint& a, const Keypoint& b) {
    return a.y != b.y ? a.y < b.y : a.x < b.x;
  });
  return v;
}

}  // namespace

TEST_CASE("FAST on a constant image finds nothing") {
  CHECK(detect_fast(GrayFrame(20, 20, 128.0)).empty());
}

TEST_CASE("FAST finds the four square corners") {
  const auto kps = detect_fast(square_image(0.0), {.threshold = 20.0});
  REQUIRE(kps.size() == 4);
  const std::vector<Point2> corners{{11, 11}, {20, 11}, {11, 20}, {20, 20}};
  for (const Point2& c : corners) {
    const bool hit = std::any_of(kps.begin(), kps.end(), [&](const Keypoint& k) {
      return std::abs(k.x - c.x) <= 1 && std::abs(k.y - c.y) <= 1;
    });
    CHECK(hit);
  }
  CHECK(kps == oracle::fast_detect(square_image(0.0), 20.0, 9, true));
}

TEST_CASE("FAST is invariant to additive intensity shifts") {
  CHECK(detect_fast(square_image(10.0)) == detect_fast(square_image(0.0)));
  Rng rng(12);
  for (int trial = 0; trial < 5; ++trial) {
    GrayFrame g = test::blocky_gray(rng, 48, 48, 4);
    for (double& v : g.data) v = std::min(v, 200.0);
    GrayFrame shifted = g;
    for (double& v : shifted.data) v += 37.0;
    CHECK(detect_fast(g) == detect_fast(shifted));
  }
}

TEST_CASE("FAST matches the brute-force segment test") {
  Rng rng(13);
  for (int trial = 0; trial < 6; ++trial) {
    const GrayFrame g = trial % 2 ? test::random_int_gray(rng, 40, 40) : test::blocky_gray(rng, 40, 40, 3);
    const int n = 9 + trial % 4;
    CHECK(detect_fast(g, {.threshold = 25.0, .n_contiguous = n, .nonmax = true}) ==
          oracle::fast_detect(g, 25.0, n, true));
    CHECK(raster_sorted(detect_fast(g, {.threshold = 25.0, .n_contiguous = n, .nonmax = false})) ==
          raster_sorted(oracle::fast_detect(g, 25.0, n, false)));
  }
}

TEST_CASE("FAST non-max keeps keypoints apart and respects bounds") {
  Rng rng(14);
  for (int trial = 0; trial < 5; ++trial) {
    const GrayFrame g = test::random_int_gray(rng, 50, 30);
    const auto kps = detect_fast(g);
    for (std::size_t i = 0; i < kps.size(); ++i) {
      CHECK(kps[i].x >= 3);
      CHECK(kps[i].x < g.width - 3);
      CHECK(kps[i].y >= 3);
      CHECK(kps[i].y < g.height - 3);
      for (std::size_t j = i + 1; j < kps.size(); ++j) {
        CHECK(std::max(std::abs(kps[i].x - kps[j].x), std::abs(kps[i].y - kps[j].y)) > 1);
      }
    }
  }
}

TEST_CASE("FAST cap keeps the strongest") {
  Rng rng(15);
  const GrayFrame g = test::random_int_gray(rng, 64, 64);
  const auto all = detect_fast(g, {.max_keypoints = 0});
  REQUIRE(all.size() > 10);
  const auto capped = detect_fast(g, {.max_keypoints = 10});
  CHECK(capped == std::vector<Keypoint>(all.begin(), all.begin() + 10));
}

TEST_CASE("FAST rejects bad input") {
  CHECK_THROWS_AS(detect_fast(GrayFrame(6, 20)), std::invalid_argument);
  CHECK_THROWS_AS(detect_fast(GrayFrame(20, 20), {.threshold = 0.0}), std::invalid_argument);
  CHECK_THROWS_AS(detect_fast(GrayFrame(20, 20), {.n_contiguous = 8}), std::invalid_argument);
}

TEST_CASE("retinal pattern layout") {
  const RetinalPattern p = build_pattern();
  CHECK(p.fields.size() == 43);
  CHECK(p.pairs.size() == 512);
  for (std::size_t r = 1; r < p.ring_radii.size(); ++r) CHECK(p.ring_radii[r] > p.ring_radii[r - 1]);
  std::set<std::pair<int, int>> seen;
  double prev = 1e9;
  for (const auto& pr : p.pairs) {
    CHECK(pr.a < pr.b);
    CHECK(seen.insert({pr.a, pr.b}).second);
    const double s = p.fields[pr.a].radius + p.fields[pr.b].radius;
    CHECK(s <= prev);
    prev = s;
  }
  const RetinalPattern q = build_pattern();
  CHECK(q.fields.size() == p.fields.size());
  for (std::size_t i = 0; i < p.fields.size(); ++i) {
    CHECK(p.fields[i].dx == q.fields[i].dx);
    CHECK(p.fields[i].dy == q.fields[i].dy);
    CHECK(p.fields[i].radius == q.fields[i].radius);
  }
  for (std::size_t j = 0; j < p.pairs.size(); ++j) {
    CHECK(p.pairs[j].a == q.pairs[j].a);
    CHECK(p.pairs[j].b == q.pairs[j].b);
  }
  CHECK(p.extent() == doctest::Approx(28.0));
}

TEST_CASE("describe: constant image gives all-zero descriptors") {
  const GrayFrame g(80, 80, 90.0);
  const std::vector<Keypoint> kps{{40, 40, 1}, {35, 44, 1}};
  const auto d = describe(g, kps, build_pattern());
  REQUIRE(d.size() == 2);
  for (const auto& desc : d) CHECK(desc.bits == Bits512{});
}

TEST_CASE("describe drops keypoints near the border") {
  const GrayFrame g(80, 80, 90.0);
  const std::vector<Keypoint> kps{{10, 40, 1}, {40, 40, 2}, {40, 75, 3}};
  const auto d = describe(g, kps, build_pattern());
  REQUIRE(d.size() == 1);
  CHECK(d[0].keypoint.score == 2);
}

TEST_CASE("describe is offset invariant and matches direct evaluation") {
  Rng rng(16);
  const RetinalPattern p = build_pattern();
  for (int trial = 0; trial < 3; ++trial) {
    GrayFrame g = test::blocky_gray(rng, 90, 90, 3);
    for (double& v : g.data) v = std::min(v, 220.0);
    GrayFrame shifted = g;
    for (double& v : shifted.data) v += 30.0;
    std::vector<Keypoint> kps;
    for (int i = 0; i < 20; ++i) kps.push_back({28.0 + rng.index(34), 28.0 + rng.index(34), 1.0});
    const auto a = describe(g, kps, p);
    const auto b = describe(shifted, kps, p);
    REQUIRE(a.size() == kps.size());
    REQUIRE(b.size() == kps.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].bits == b[i].bits);
      CHECK(a[i].bits == oracle::describe_one(g, kps[i], p));
    }
  }
}

TEST_CASE("describe on a horizontal ramp follows the pair x-offsets") {
  GrayFrame g(100, 100);
  for (int y = 0; y < 100; ++y)
    for (int x = 0; x < 100; ++x) g.at(x, y) = 2.0 * x + 10.0;
  const RetinalPattern p = build_pattern();
  const Keypoint kp{50, 50, 1};
  const auto d = describe(g, std::vector<Keypoint>{kp}, p);
  REQUIRE(d.size() == 1);
  CHECK(d[0].bits == oracle::describe_one(g, kp, p));
  int decided = 0;
  for (std::size_t j = 0; j < p.pairs.size(); ++j) {
    const double dx = p.fields[p.pairs[j].a].dx - p.fields[p.pairs[j].b].dx;
    // Box quantization moves an effective centre by less than one pixel.
    if (std::abs(dx) <= 1.0) continue;
    ++decided;
    CHECK(get_bit(d[0].bits, static_cast<int>(j)) == (dx > 0));
  }
  CHECK(decided > 300);
}

TEST_CASE("Hamming distance properties") {
  Rng rng(17);
  auto rnd = [&] {
    Bits512 b;
    for (auto& w : b) w = rng.next_u64();
    return b;
  };
  for (int t = 0; t < 200; ++t) {
    const Bits512 a = rnd(), b = rnd(), c = rnd();
    CHECK(hamming(a, a) == 0);
    CHECK(hamming(a, b) == hamming(b, a));
    CHECK(hamming(a, b) <= 512);
    CHECK(hamming(a, c) <= hamming(a, b) + hamming(b, c));
    CHECK(hamming(a, b) == oracle::popcount_distance(a, b));
  }
}

TEST_CASE("match examples") {
  Rng rng(18);
  std::vector<BinaryDescriptor> ds(30);
  for (auto& d : ds)
    for (auto& w : d.bits) w = rng.next_u64();
  const auto same = match(ds, ds);
  REQUIRE(same.size() == ds.size());
  for (std::size_t i = 0; i < same.size(); ++i) CHECK(same[i] == Match{int(i), int(i), 0});

  BinaryDescriptor comp = ds[0];
  for (auto& w : comp.bits) w = ~w;
  CHECK(match(std::vector{ds[0]}, std::vector{comp}).empty());

  BinaryDescriptor seven = ds[0];
  for (int j : {0, 63, 64, 200, 300, 401, 511}) flip_bit(seven.bits, j);
  const auto m = match(std::vector{ds[0]}, std::vector{seven});
  REQUIRE(m.size() == 1);
  CHECK(m[0].distance == 7);

  CHECK(match({}, ds).empty());
}

TEST_CASE("match agrees with exhaustive mutual nearest neighbour") {
  Rng rng(19);
  for (int trial = 0; trial < 10; ++trial) {
    // Low-entropy descriptors produce plenty of ties and close calls.
    std::vector<BinaryDescriptor> f(40), m(35);
    for (auto* set : {&f, &m}) {
      for (auto& d : *set) {
        for (int j = 0; j < 512; ++j)
          if (rng.uniform() < 0.05) set_bit(d.bits, j);
      }
    }
    const auto got = match(f, m, 40);
    CHECK(got == oracle::mutual_nn(f, m, 40));
    std::set<int> fi, mi;
    for (const auto& x : got) {
      CHECK(fi.insert(x.index_fixed).second);
      CHECK(mi.insert(x.index_moving).second);
      CHECK(x.distance <= 40);
    }
  }
}

TEST_CASE("descriptor dump round trip") {
  Rng rng(20);
  std::vector<BinaryDescriptor> ds(5);
  for (auto& d : ds) {
    for (auto& w : d.bits) w = rng.next_u64();
    d.keypoint = {double(rng.index(200)), double(rng.index(200)), 0.5 * rng.index(1000)};
  }
  const auto path = std::filesystem::temp_directory_path() / "md_desc.mdbd";
  write_descriptors(path, ds);
  CHECK(std::filesystem::file_size(path) == 8 + 5 * (12 + 64));
  const auto back = read_descriptors(path);
  REQUIRE(back.size() == ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(back[i].bits == ds[i].bits);
    CHECK(back[i].keypoint == ds[i].keypoint);
  }
  std::filesystem::remove(path);
}
