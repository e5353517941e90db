#pragma once

#include <array>
#include <span>

namespace md {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point2&, const Point2&) = default;
};

struct Correspondence {
  Point2 fixed;   // coordinates in the reference (fixed) image
  Point2 moving;  // coordinates in the moving image
};

using Matrix3 = std::array<std::array<double, 3>, 3>;

// Rotation + translation mapping moving-image coordinates into the fixed image:
//   [x'; y'; 1] = [c -s tx; s c ty; 0 0 1] [x; y; 1]
// The angle is stored directly so the rotation block stays orthonormal to
// rounding no matter how many compositions are chained.
class RigidTransform {
public:
  RigidTransform() = default;
  RigidTransform(double angle_rad, double tx, double ty);

  static RigidTransform identity() { return {}; }
  static RigidTransform translation(double tx, double ty) { return {0.0, tx, ty}; }
  static RigidTransform rotation(double angle_rad) { return {angle_rad, 0.0, 0.0}; }
  // Rotation by angle about `center`.
  static RigidTransform rotation_about(double angle_rad, Point2 center);

  double angle() const { return angle_; }
  double tx() const { return tx_; }
  double ty() const { return ty_; }
  double cos_angle() const { return c_; }
  double sin_angle() const { return s_; }

  Matrix3 matrix() const;

  Point2 apply(Point2 p) const { return {c_ * p.x - s_ * p.y + tx_, s_ * p.x + c_ * p.y + ty_}; }

  bool is_identity() const { return angle_ == 0.0 && tx_ == 0.0 && ty_ == 0.0; }

  friend bool operator==(const RigidTransform& a, const RigidTransform& b) {
    return a.angle_ == b.angle_ && a.tx_ == b.tx_ && a.ty_ == b.ty_;
  }

private:
  double angle_ = 0.0;
  double tx_ = 0.0;
  double ty_ = 0.0;
  double c_ = 1.0;
  double s_ = 0.0;
};

inline Point2 apply(const RigidTransform& t, Point2 p) { return t.apply(p); }

// apply(compose(a, b), p) == apply(a, apply(b, p))
RigidTransform compose(const RigidTransform& a, const RigidTransform& b);
RigidTransform invert(const RigidTransform& t);

// Wraps an angle to (-pi, pi].
double wrap_angle(double a);

// Least-squares rotation + translation (2D Procrustes, no scale, no reflection)
// taking each `moving` point onto its `fixed` partner. Throws std::invalid_argument
// for fewer than two pairs or zero centered scatter.
RigidTransform estimate_rigid(std::span<const Correspondence> pairs);

}  // namespace md
