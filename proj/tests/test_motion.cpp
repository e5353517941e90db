#include <cmath>
#include <numbers>
#include <stdexcept>

#include "correspondences.hpp"
#include "doctest.h"
#include "md/msac.hpp"
#include "md/rigid.hpp"
#include "test_util.hpp"

using namespace md;

namespace {
constexpr double kDeg = std::numbers::pi / 180.0;

double dist(Point2 a, Point2 b) { return std::hypot(a.x - b.x, a.y - b.y); }
}  // namespace

TEST_CASE("apply examples") {
  const Point2 p = apply(RigidTransform::identity(), {5, 7});
  CHECK(p == Point2{5, 7});
  const Point2 q = apply(RigidTransform::rotation(std::numbers::pi / 2), {1, 0});
  CHECK(std::abs(q.x) < 1e-15);
  CHECK(std::abs(q.y - 1.0) < 1e-15);
  CHECK(apply(RigidTransform::translation(3, 4), {1, 1}) == Point2{4, 5});
}

TEST_CASE("matrix form") {
  const RigidTransform t(0.3, 2.0, -1.0);
  const Matrix3 m = t.matrix();
  CHECK(m[2][0] == 0.0);
  CHECK(m[2][1] == 0.0);
  CHECK(m[2][2] == 1.0);
  CHECK(std::abs(m[0][0] * m[1][1] - m[0][1] * m[1][0] - 1.0) < 1e-12);
  const Point2 p{3.0, 4.0};
  const Point2 a = t.apply(p);
  CHECK(a.x == doctest::Approx(m[0][0] * p.x + m[0][1] * p.y + m[0][2]));
  CHECK(a.y == doctest::Approx(m[1][0] * p.x + m[1][1] * p.y + m[1][2]));
}

TEST_CASE("compose and invert") {
  const RigidTransform t(0.7, 3.0, -2.0);
  CHECK(compose(RigidTransform::identity(), t) == t);
  const RigidTransform tt = compose(RigidTransform::translation(1, 2), RigidTransform::translation(3, 4));
  CHECK(tt.tx() == 4.0);
  CHECK(tt.ty() == 6.0);
  CHECK(tt.angle() == 0.0);
  const RigidTransform r = compose(RigidTransform::rotation(30 * kDeg), RigidTransform::rotation(60 * kDeg));
  CHECK(std::abs(r.angle() - 90 * kDeg) < 1e-12);

  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const RigidTransform a = test::random_rigid(rng), b = test::random_rigid(rng);
    const Point2 p{rng.uniform(-50, 50), rng.uniform(-50, 50)};
    const Point2 lhs = compose(a, b).apply(p), rhs = a.apply(b.apply(p));
    CHECK(dist(lhs, rhs) < 1e-9);
    const RigidTransform id = compose(a, invert(a));
    CHECK(std::abs(id.angle()) < 1e-12);
    CHECK(std::abs(id.tx()) < 1e-9);
    CHECK(std::abs(id.ty()) < 1e-9);
    const Point2 q{rng.uniform(-50, 50), rng.uniform(-50, 50)};
    CHECK(std::abs(dist(a.apply(p), a.apply(q)) - dist(p, q)) < 1e-9);
  }
}

TEST_CASE("angles wrap into (-pi, pi]") {
  CHECK(wrap_angle(std::numbers::pi) == std::numbers::pi);
  CHECK(std::abs(wrap_angle(3 * std::numbers::pi) - std::numbers::pi) < 1e-12);
  CHECK(std::abs(wrap_angle(-std::numbers::pi) - std::numbers::pi) < 1e-12);
  CHECK(std::abs(RigidTransform(7.0, 0, 0).angle() - (7.0 - 2 * std::numbers::pi)) < 1e-12);
}

TEST_CASE("estimate_rigid closed-form cases") {
  const std::vector<Correspondence> same{{{1, 2}, {1, 2}}, {{5, -3}, {5, -3}}, {{0, 7}, {0, 7}}};
  const RigidTransform id = estimate_rigid(same);
  CHECK(id.angle() == 0.0);
  CHECK(std::abs(id.tx()) < 1e-12);
  CHECK(std::abs(id.ty()) < 1e-12);

  const std::vector<Correspondence> shifted{{{4, -1}, {1, 1}}, {{8, 3}, {5, 5}}};
  const RigidTransform t = estimate_rigid(shifted);
  CHECK(std::abs(t.angle()) < 1e-12);
  CHECK(std::abs(t.tx() - 3) < 1e-12);
  CHECK(std::abs(t.ty() + 2) < 1e-12);

  const auto rot = RigidTransform::rotation(std::numbers::pi / 2);
  std::vector<Correspondence> rotated;
  for (Point2 p : {Point2{1, 0}, Point2{0, 2}, Point2{-3, 1}}) rotated.push_back({rot.apply(p), p});
  const RigidTransform r = estimate_rigid(rotated);
  CHECK(std::abs(r.angle() - std::numbers::pi / 2) < 1e-12);
  CHECK(std::hypot(r.tx(), r.ty()) < 1e-12);

  CHECK_THROWS_AS(estimate_rigid(std::vector<Correspondence>{{{1, 1}, {1, 1}}}), std::invalid_argument);
  CHECK_THROWS_AS(estimate_rigid(std::vector<Correspondence>{{{1, 1}, {2, 2}}, {{3, 1}, {2, 2}}}),
                  std::invalid_argument);
}

TEST_CASE("estimate_rigid recovers any noiseless transform") {
  Rng rng(2);
  for (int trial = 0; trial < 500; ++trial) {
    const RigidTransform t = test::random_rigid(rng);
    std::vector<Correspondence> pairs;
    const int n = 2 + static_cast<int>(rng.index(10));
    for (int i = 0; i < n; ++i) {
      const Point2 m{rng.uniform(0, 200), rng.uniform(0, 200)};
      pairs.push_back({t.apply(m), m});
    }
    const RigidTransform e = estimate_rigid(pairs);
    CHECK(std::abs(wrap_angle(e.angle() - t.angle())) < 1e-9);
    CHECK(std::abs(e.tx() - t.tx()) < 1e-9);
    CHECK(std::abs(e.ty() - t.ty()) < 1e-9);
  }
}

TEST_CASE("MSAC on noiseless translation") {
  Rng rng(3);
  const auto s = test::make_matches(rng, RigidTransform::translation(5, 0), 50, 0, 0.0);
  const MsacResult r = estimate_msac(s.pairs, {.seed = 1});
  CHECK_FALSE(r.fallback);
  CHECK(std::abs(r.transform.angle()) < 1e-9);
  CHECK(std::abs(r.transform.tx() - 5) < 1e-9);
  CHECK(std::abs(r.transform.ty()) < 1e-9);
  CHECK(r.cost < 1e-12);
  CHECK(r.inlier_count() == 50);
}

TEST_CASE("MSAC with noise and outliers") {
  Rng rng(4);
  const RigidTransform truth(2 * kDeg, 3, 1);
  const auto s = test::make_matches(rng, truth, 70, 30, 0.3);
  const MsacResult r = estimate_msac(s.pairs, {.seed = 9});
  CHECK_FALSE(r.fallback);
  CHECK(std::abs(r.transform.angle() - truth.angle()) < 0.3 * kDeg);
  CHECK(std::abs(r.transform.tx() - 3) < 0.3);
  CHECK(std::abs(r.transform.ty() - 1) < 0.3);
  int flagged = 0;
  for (std::size_t i = 0; i < s.pairs.size(); ++i) flagged += (s.is_inlier[i] && r.inlier_mask[i]) ? 1 : 0;
  CHECK(flagged >= 65);
}

TEST_CASE("MSAC degenerate input falls back to identity") {
  const std::vector<Correspondence> one{{{1, 2}, {3, 4}}};
  const MsacResult r = estimate_msac(one, {});
  CHECK(r.fallback);
  CHECK(r.transform.is_identity());
  CHECK(estimate_msac(std::vector<Correspondence>{}, {}).fallback);

  // Too few inliers for min_inliers.
  Rng rng(5);
  const auto s = test::make_matches(rng, RigidTransform::translation(1, 1), 4, 0, 0.0);
  const MsacResult few = estimate_msac(s.pairs, {.min_inliers = 6});
  CHECK(few.fallback);
  CHECK(few.transform.is_identity());
  CHECK(few.cost == doctest::Approx(msac_cost(s.pairs, RigidTransform::identity(), 2.0)));
}

TEST_CASE("MSAC invariants") {
  Rng rng(6);
  for (int trial = 0; trial < 30; ++trial) {
    const RigidTransform truth(rng.uniform(-0.1, 0.1), rng.uniform(-8, 8), rng.uniform(-8, 8));
    const auto s = test::make_matches(rng, truth, 20 + static_cast<int>(rng.index(40)),
                                      static_cast<int>(rng.index(30)), 0.5);
    const MsacParams params{.seed = static_cast<std::uint64_t>(trial), .record_candidates = true};
    const MsacResult r = estimate_msac(s.pairs, params);
    CHECK(r.cost == doctest::Approx(msac_cost(s.pairs, r.transform, 2.0)).epsilon(1e-12));
    CHECK(r.cost <= s.pairs.size() * 4.0);
    CHECK(std::abs(r.transform.cos_angle() * r.transform.cos_angle() +
                   r.transform.sin_angle() * r.transform.sin_angle() - 1.0) < 1e-9);
    if (!r.fallback) {
      for (double c : r.candidate_costs) CHECK(r.cost <= c);
    }
    const MsacResult again = estimate_msac(s.pairs, params);
    CHECK(again.transform == r.transform);
    CHECK(again.cost == r.cost);
    CHECK(again.inlier_mask == r.inlier_mask);
    CHECK(again.iterations_used == r.iterations_used);
  }
}
