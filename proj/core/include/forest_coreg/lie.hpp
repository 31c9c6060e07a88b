#ifndef FOREST_COREG_LIE_HPP
#define FOREST_COREG_LIE_HPP

#include <cmath>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "forest_coreg/errors.hpp"

namespace fcoreg {

using Vector6d = Eigen::Matrix<double, 6, 1>;
using Matrix6d = Eigen::Matrix<double, 6, 6>;

/// Tangent vector of SE(3). Ordering is fixed project-wide:
/// components [0..2] are the translational part rho (meters),
/// components [3..5] are the rotational part phi (radians, axis * angle).
using Twist = Vector6d;

/// Branch threshold for the axis-angle vs Taylor paths in exp/log.
inline constexpr double kSmallAngle = 1e-8;

inline Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d s;
  // clang-format off
  s <<     0.0, -v.z(),  v.y(),
         v.z(),    0.0, -v.x(),
        -v.y(),  v.x(),    0.0;
  // clang-format on
  return s;
}

namespace detail {

// Series coefficients used by the SO(3)/SE(3) maps. Each switches to a
// truncated Taylor form below the angle where the direct expression starts
// to cancel; switch points keep relative error under ~1e-10 on both sides.

// (1 - cos t) / t^2, via the half-angle identity (no cancellation).
inline double coeff_one_minus_cos(double t) {
  if (t < kSmallAngle) return 0.5;
  const double s = std::sin(0.5 * t);
  return 2.0 * s * s / (t * t);
}

// (t - sin t) / t^3
inline double coeff_t_minus_sin(double t) {
  if (t < 1e-2) {
    const double t2 = t * t;
    return 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0;
  }
  return (t - std::sin(t)) / (t * t * t);
}

// (t^2/2 + cos t - 1) / t^4
inline double coeff_cos_remainder(double t) {
  if (t < 0.1) {
    const double t2 = t * t;
    return 1.0 / 24.0 - t2 / 720.0 + t2 * t2 / 40320.0;
  }
  const double t2 = t * t;
  return (0.5 * t2 + std::cos(t) - 1.0) / (t2 * t2);
}

// (sin t - t + t^3/6) / t^5
inline double coeff_sin_remainder(double t) {
  if (t < 0.3) {
    const double t2 = t * t;
    return 1.0 / 120.0 - t2 / 5040.0 + t2 * t2 / 362880.0 -
           t2 * t2 * t2 / 39916800.0;
  }
  const double t2 = t * t;
  return (std::sin(t) - t + t * t2 / 6.0) / (t2 * t2 * t);
}

// (1 - t^2/2 + t^4/24 - cos t) / t^6
inline double coeff_cos_remainder2(double t) {
  if (t < 0.5) {
    const double t2 = t * t;
    return 1.0 / 720.0 - t2 / 40320.0 + t2 * t2 / 3628800.0 -
           t2 * t2 * t2 / 479001600.0;
  }
  const double t2 = t * t;
  return (1.0 - 0.5 * t2 + t2 * t2 / 24.0 - std::cos(t)) / (t2 * t2 * t2);
}

// 1/t^2 - (1 + cos t) / (2 t sin t), the W^2 coefficient of the inverse
// left Jacobian of SO(3). Valid for t < pi.
inline double coeff_jlinv(double t) {
  if (t < 1e-2) {
    const double t2 = t * t;
    return 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0;
  }
  return 1.0 / (t * t) - 0.5 * (1.0 + std::cos(t)) / (t * std::sin(t));
}

}  // namespace detail

/// SO(3) exponential: axis-angle vector -> unit quaternion.
inline Eigen::Quaterniond so3_exp(const Eigen::Vector3d& phi) {
  const double theta = phi.norm();
  if (theta < kSmallAngle) {
    Eigen::Quaterniond q(1.0, 0.5 * phi.x(), 0.5 * phi.y(), 0.5 * phi.z());
    q.normalize();
    return q;
  }
  const double half = 0.5 * theta;
  const Eigen::Vector3d axis = phi / theta;
  const double s = std::sin(half);
  return Eigen::Quaterniond(std::cos(half), s * axis.x(), s * axis.y(),
                            s * axis.z());
}

/// SO(3) logarithm: unit quaternion -> axis-angle vector.
/// The rotation angle of the result is always in [0, pi].
inline Eigen::Vector3d so3_log(const Eigen::Quaterniond& q_in) {
  Eigen::Quaterniond q = q_in.normalized();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  const double n = q.vec().norm();
  const double theta = 2.0 * std::atan2(n, q.w());
  if (n < kSmallAngle) {
    return 2.0 * q.vec();  // w ~ 1 here
  }
  return (theta / n) * q.vec();
}

/// Left Jacobian of SO(3): J_l = I + B(t) W + C(t) W^2.
inline Eigen::Matrix3d so3_left_jacobian(const Eigen::Vector3d& phi) {
  const double theta = phi.norm();
  const Eigen::Matrix3d w = skew(phi);
  return Eigen::Matrix3d::Identity() + detail::coeff_one_minus_cos(theta) * w +
         detail::coeff_t_minus_sin(theta) * w * w;
}

/// Inverse of the left Jacobian of SO(3). Requires ||phi|| < pi.
inline Eigen::Matrix3d so3_left_jacobian_inverse(const Eigen::Vector3d& phi) {
  const double theta = phi.norm();
  const Eigen::Matrix3d w = skew(phi);
  return Eigen::Matrix3d::Identity() - 0.5 * w +
         detail::coeff_jlinv(theta) * w * w;
}

/// Rigid SE(3) transform. Rotation is stored as a unit quaternion and kept
/// normalized through composition; immutable value type.
class Pose {
 public:
  Pose() : q_(Eigen::Quaterniond::Identity()), t_(Eigen::Vector3d::Zero()) {}

  Pose(const Eigen::Quaterniond& q, const Eigen::Vector3d& t)
      : q_(q.normalized()), t_(t) {}

  Pose(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& t)
      : q_(rotation), t_(t) {
    q_.normalize();
  }

  static Pose identity() { return Pose(); }

  const Eigen::Quaterniond& rotation() const { return q_; }
  const Eigen::Vector3d& translation() const { return t_; }
  Eigen::Matrix3d rotation_matrix() const { return q_.toRotationMatrix(); }

  Eigen::Matrix4d matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rotation_matrix();
    m.topRightCorner<3, 1>() = t_;
    return m;
  }

  Pose inverse() const {
    const Eigen::Quaterniond qi = q_.conjugate();
    return Pose(qi, qi * -t_);
  }

  /// Composition; the result's quaternion is renormalized so that chains of
  /// up to 1e4 compositions stay orthonormal to 1e-9.
  Pose operator*(const Pose& other) const {
    return Pose(q_ * other.q_, q_ * other.t_ + t_);
  }

  /// Applies the transform to a point: R x + t.
  Eigen::Vector3d operator*(const Eigen::Vector3d& x) const {
    return q_ * x + t_;
  }

 private:
  Eigen::Quaterniond q_;
  Eigen::Vector3d t_;
};

/// SE(3) exponential map. Precondition: ||phi|| < pi.
inline Pose se3_exp(const Twist& xi) {
  const Eigen::Vector3d rho = xi.head<3>();
  const Eigen::Vector3d phi = xi.tail<3>();
  return Pose(so3_exp(phi), so3_left_jacobian(phi) * rho);
}

/// SE(3) logarithm. Throws AngleAtCutLocus when the rotation angle is
/// within 1e-6 of pi, where the log is not uniquely defined.
inline Twist se3_log(const Pose& p) {
  const Eigen::Vector3d phi = so3_log(p.rotation());
  const double theta = phi.norm();
  if (theta >= M_PI - 1e-6) {
    throw AngleAtCutLocus("se3_log: rotation angle " + std::to_string(theta) +
                          " is at the cut locus");
  }
  Twist xi;
  xi.head<3>() = so3_left_jacobian_inverse(phi) * p.translation();
  xi.tail<3>() = phi;
  return xi;
}

/// Adjoint of a pose in (rho, phi) ordering:
///   Ad(T) = [ R  [t]x R ]
///           [ 0     R   ]
inline Matrix6d adjoint(const Pose& p) {
  const Eigen::Matrix3d r = p.rotation_matrix();
  Matrix6d ad = Matrix6d::Zero();
  ad.topLeftCorner<3, 3>() = r;
  ad.topRightCorner<3, 3>() = skew(p.translation()) * r;
  ad.bottomRightCorner<3, 3>() = r;
  return ad;
}

namespace detail {

// Off-diagonal block Q of the SE(3) left Jacobian, derived from the series
//   Q = sum_{a,b >= 0} W^a P W^b / (a+b+2)!   with W = skew(phi), P = skew(rho)
// reduced via W^3 = -theta^2 W to the nine basis products W^a P W^b with
// a, b in {0,1,2}.
inline Eigen::Matrix3d se3_jacobian_q(const Eigen::Vector3d& rho,
                                      const Eigen::Vector3d& phi) {
  const double theta = phi.norm();
  const Eigen::Matrix3d w = skew(phi);
  const Eigen::Matrix3d p = skew(rho);
  const Eigen::Matrix3d ww = w * w;

  const double c = coeff_t_minus_sin(theta);       // W P, P W
  const double d = coeff_cos_remainder(theta);     // W^2 P, P W^2
  const double e = coeff_sin_remainder(theta);
  const double f = coeff_cos_remainder2(theta);
  const double s11 = 0.5 * c - d;                  // W P W
  const double s21 = 0.5 * d - 1.5 * e;            // W^2 P W, W P W^2
  const double s22 = 0.5 * e - 2.0 * f;            // W^2 P W^2

  return 0.5 * p + c * (w * p + p * w) + d * (ww * p + p * ww) +
         s11 * (w * p * w) + s21 * (ww * p * w + w * p * ww) +
         s22 * (ww * p * ww);
}

}  // namespace detail

/// Inverse of the left Jacobian of SE(3) in (rho, phi) ordering.
inline Matrix6d se3_left_jacobian_inverse(const Twist& xi) {
  const Eigen::Vector3d rho = xi.head<3>();
  const Eigen::Vector3d phi = xi.tail<3>();
  const Eigen::Matrix3d jinv = so3_left_jacobian_inverse(phi);
  const Eigen::Matrix3d q = detail::se3_jacobian_q(rho, phi);
  Matrix6d out = Matrix6d::Zero();
  out.topLeftCorner<3, 3>() = jinv;
  out.topRightCorner<3, 3>() = -jinv * q * jinv;
  out.bottomRightCorner<3, 3>() = jinv;
  return out;
}

/// Inverse of the right Jacobian of SE(3): Jr^{-1}(xi) = Jl^{-1}(-xi).
inline Matrix6d se3_right_jacobian_inverse(const Twist& xi) {
  return se3_left_jacobian_inverse(-xi);
}

}  // namespace fcoreg

#endif  // FOREST_COREG_LIE_HPP
