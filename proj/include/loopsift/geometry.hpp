#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace loopsift {

using Vector3 = Eigen::Vector3d;
using Vector6 = Eigen::Matrix<double, 6, 1>;
using Matrix3 = Eigen::Matrix3d;
using Matrix4 = Eigen::Matrix4d;
using Matrix6 = Eigen::Matrix<double, 6, 6>;

/// Element of se(3). Stacked as [rotation; translation] wherever a 6-vector is needed.
struct Twist {
    Vector3 rotation = Vector3::Zero();     // radians
    Vector3 translation = Vector3::Zero();  // meters

    Twist() = default;
    Twist(const Vector3& rot, const Vector3& trans) : rotation(rot), translation(trans) {}
    explicit Twist(const Vector6& v) : rotation(v.head<3>()), translation(v.tail<3>()) {}

    Vector6 vector() const {
        Vector6 v;
        v << rotation, translation;
        return v;
    }
};

/// Rigid transform stored as unit quaternion + translation.
///
/// Composition renormalizes the quaternion so long odometry chains do not
/// accumulate scale drift in the rotation.
class Pose {
public:
    Pose() = default;
    Pose(const Eigen::Quaterniond& rotation, const Vector3& translation);

    static Pose identity() { return {}; }
    static Pose from_translation(const Vector3& t) { return {Eigen::Quaterniond::Identity(), t}; }
    static Pose from_matrix(const Matrix4& m);

    const Eigen::Quaterniond& rotation() const { return rotation_; }
    const Vector3& translation() const { return translation_; }
    Matrix3 rotation_matrix() const { return rotation_.toRotationMatrix(); }
    Matrix4 matrix() const;

    Pose inverse() const;
    Pose operator*(const Pose& other) const;
    Vector3 operator*(const Vector3& point) const { return rotation_ * point + translation_; }

    /// Rotation angle in [0, pi].
    double angle() const;

private:
    Eigen::Quaterniond rotation_ = Eigen::Quaterniond::Identity();
    Vector3 translation_ = Vector3::Zero();
};

inline Pose compose(const Pose& a, const Pose& b) { return a * b; }
inline Pose inverse(const Pose& p) { return p.inverse(); }
inline Vector3 transform_point(const Pose& p, const Vector3& x) { return p * x; }

Matrix3 hat(const Vector3& v);

Eigen::Quaterniond so3_exp(const Vector3& omega);
/// Throws NumericError when the rotation angle is pi (axis sign ambiguous).
Vector3 so3_log(const Eigen::Quaterniond& q);

Pose se3_exp(const Twist& xi);
/// Throws NumericError when the rotation angle is pi.
Twist se3_log(const Pose& p);

/// Adjoint of p acting on [rotation; translation] twists: p * exp(x) * p^-1 = exp(Ad(p) x).
Matrix6 adjoint(const Pose& p);

/// Inverse right Jacobian of SE(3) at xi, [rotation; translation] ordering.
/// log(exp(xi) * exp(d)) ~= xi + Jr^-1(xi) d for small d.
Matrix6 se3_right_jacobian_inverse(const Twist& xi);

/// Translation distance and rotation angle (radians) between two poses.
struct PoseDelta {
    double translation;
    double rotation;
};
PoseDelta pose_delta(const Pose& a, const Pose& b);

}  // namespace loopsift
