#include "md/rigid.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace md {

RigidTransform::RigidTransform(double angle_rad, double tx, double ty)
    : angle_(wrap_angle(angle_rad)), tx_(tx), ty_(ty) {
  c_ = std::cos(angle_);
  s_ = std::sin(angle_);
}

RigidTransform RigidTransform::rotation_about(double angle_rad, Point2 center) {
  const RigidTransform r(angle_rad, 0.0, 0.0);
  const Point2 rc = r.apply(center);
  return {angle_rad, center.x - rc.x, center.y - rc.y};
}

Matrix3 RigidTransform::matrix() const {
  return {{{c_, -s_, tx_}, {s_, c_, ty_}, {0.0, 0.0, 1.0}}};
}

double wrap_angle(double a) {
  constexpr double pi = std::numbers::pi;
  if (a > -pi && a <= pi) return a;
  a = std::remainder(a, 2.0 * pi);
  if (a <= -pi) a += 2.0 * pi;
  return a;
}

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  const Point2 t = a.apply({b.tx(), b.ty()});
  return {a.angle() + b.angle(), t.x, t.y};
}

RigidTransform invert(const RigidTransform& t) {
  // R^T (-t)
  const double c = t.cos_angle();
  const double s = t.sin_angle();
  return {-t.angle(), -(c * t.tx() + s * t.ty()), -(-s * t.tx() + c * t.ty())};
}

RigidTransform estimate_rigid(std::span<const Correspondence> pairs) {
  if (pairs.size() < 2) {
    throw std::invalid_argument("estimate_rigid: need at least 2 correspondences");
  }
  const double n = static_cast<double>(pairs.size());
  Point2 mf, mm;
  for (const auto& p : pairs) {
    mf.x += p.fixed.x;
    mf.y += p.fixed.y;
    mm.x += p.moving.x;
    mm.y += p.moving.y;
  }
  mf = {mf.x / n, mf.y / n};
  mm = {mm.x / n, mm.y / n};

  double dot = 0.0, cross = 0.0, scatter_m = 0.0, scatter_f = 0.0;
  for (const auto& p : pairs) {
    const double mx = p.moving.x - mm.x, my = p.moving.y - mm.y;
    const double fx = p.fixed.x - mf.x, fy = p.fixed.y - mf.y;
    dot += mx * fx + my * fy;
    cross += mx * fy - my * fx;
    scatter_m += mx * mx + my * my;
    scatter_f += fx * fx + fy * fy;
  }
  if (scatter_m == 0.0 || scatter_f == 0.0) {
    throw std::invalid_argument("estimate_rigid: correspondences have zero scatter");
  }
  const double angle = std::atan2(cross, dot);
  const RigidTransform r(angle, 0.0, 0.0);
  const Point2 rm = r.apply(mm);
  return {angle, mf.x - rm.x, mf.y - rm.y};
}

}  // namespace md
