#include "loopsift/geometry.hpp"

#include <cmath>

#include "loopsift/errors.hpp"

namespace loopsift {

namespace {

// Below this angle the closed-form coefficients lose precision; use series.
constexpr double kSmallAngle = 1e-4;

Eigen::Quaterniond canonical(Eigen::Quaterniond q) {
    q.normalize();
    if (q.w() < 0.0) q.coeffs() = -q.coeffs();
    return q;
}

// J_l(phi) of SO(3): I + (1 - cos t)/t^2 phi^ + (t - sin t)/t^3 phi^2
Matrix3 so3_left_jacobian(const Vector3& phi) {
    const double t2 = phi.squaredNorm();
    const double t = std::sqrt(t2);
    double a, b;
    if (t < kSmallAngle) {
        a = 0.5 - t2 / 24.0 + t2 * t2 / 720.0;
        b = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0;
    } else {
        a = (1.0 - std::cos(t)) / t2;
        b = (t - std::sin(t)) / (t2 * t);
    }
    const Matrix3 P = hat(phi);
    return Matrix3::Identity() + a * P + b * P * P;
}

Matrix3 so3_left_jacobian_inverse(const Vector3& phi) {
    const double t2 = phi.squaredNorm();
    const double t = std::sqrt(t2);
    double c;
    if (t < kSmallAngle) {
        c = 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0;
    } else {
        c = 1.0 / t2 - (1.0 + std::cos(t)) / (2.0 * t * std::sin(t));
    }
    const Matrix3 P = hat(phi);
    return Matrix3::Identity() - 0.5 * P + c * P * P;
}

// Translational coupling block of the SE(3) left Jacobian.
Matrix3 se3_q_matrix(const Vector3& rho, const Vector3& phi) {
    const double t2 = phi.squaredNorm();
    const double t = std::sqrt(t2);
    double c1, c2, c3;
    if (t < kSmallAngle) {
        c1 = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0;
        c2 = 1.0 / 24.0 - t2 / 720.0 + t2 * t2 / 40320.0;
        c3 = 1.0 / 120.0 - t2 / 2520.0 + t2 * t2 / 120960.0;
    } else {
        const double s = std::sin(t);
        const double c = std::cos(t);
        c1 = (t - s) / (t2 * t);
        c2 = (t2 + 2.0 * c - 2.0) / (2.0 * t2 * t2);
        c3 = (2.0 * t - 3.0 * s + t * c) / (2.0 * t2 * t2 * t);
    }
    const Matrix3 P = hat(phi);
    const Matrix3 R = hat(rho);
    const Matrix3 PR = P * R;
    const Matrix3 RP = R * P;
    const Matrix3 PRP = PR * P;
    return 0.5 * R + c1 * (PR + RP + PRP) + c2 * (P * PR + RP * P - 3.0 * PRP) +
           c3 * (PRP * P + P * PRP);
}

}  // namespace

Pose::Pose(const Eigen::Quaterniond& rotation, const Vector3& translation)
    : rotation_(rotation.normalized()), translation_(translation) {}

Pose Pose::from_matrix(const Matrix4& m) {
    const Matrix3 r = m.topLeftCorner<3, 3>();
    return {Eigen::Quaterniond(r), m.topRightCorner<3, 1>()};
}

Matrix4 Pose::matrix() const {
    Matrix4 m = Matrix4::Identity();
    m.topLeftCorner<3, 3>() = rotation_matrix();
    m.topRightCorner<3, 1>() = translation_;
    return m;
}

Pose Pose::inverse() const {
    const Eigen::Quaterniond qi = rotation_.conjugate();
    return {qi, -(qi * translation_)};
}

Pose Pose::operator*(const Pose& other) const {
    return {rotation_ * other.rotation_, rotation_ * other.translation_ + translation_};
}

double Pose::angle() const {
    const Eigen::Quaterniond q = canonical(rotation_);
    return 2.0 * std::atan2(q.vec().norm(), q.w());
}

Matrix3 hat(const Vector3& v) {
    Matrix3 m;
    m << 0.0, -v.z(), v.y(),
         v.z(), 0.0, -v.x(),
         -v.y(), v.x(), 0.0;
    return m;
}

Eigen::Quaterniond so3_exp(const Vector3& omega) {
    const double t2 = omega.squaredNorm();
    const double t = std::sqrt(t2);
    double w, k;  // k = sin(t/2) / t
    if (t < kSmallAngle) {
        w = 1.0 - t2 / 8.0 + t2 * t2 / 384.0;
        k = 0.5 - t2 / 48.0 + t2 * t2 / 3840.0;
    } else {
        w = std::cos(0.5 * t);
        k = std::sin(0.5 * t) / t;
    }
    Eigen::Quaterniond q(w, k * omega.x(), k * omega.y(), k * omega.z());
    q.normalize();
    return q;
}

Vector3 so3_log(const Eigen::Quaterniond& q_in) {
    const Eigen::Quaterniond q = canonical(q_in);
    const double n = q.vec().norm();
    const double w = q.w();
    if (w < 1e-12) {
        throw NumericError("so3_log: rotation angle is pi, axis sign is ambiguous");
    }
    double k;  // theta / n
    if (n < 1e-8) {
        k = 2.0 / w * (1.0 - n * n / (3.0 * w * w));
    } else {
        k = 2.0 * std::atan2(n, w) / n;
    }
    return k * q.vec();
}

Pose se3_exp(const Twist& xi) {
    return {so3_exp(xi.rotation), so3_left_jacobian(xi.rotation) * xi.translation};
}

Twist se3_log(const Pose& p) {
    const Vector3 omega = so3_log(p.rotation());
    return {omega, so3_left_jacobian_inverse(omega) * p.translation()};
}

Matrix6 adjoint(const Pose& p) {
    const Matrix3 R = p.rotation_matrix();
    Matrix6 ad = Matrix6::Zero();
    ad.topLeftCorner<3, 3>() = R;
    ad.bottomRightCorner<3, 3>() = R;
    ad.bottomLeftCorner<3, 3>() = hat(p.translation()) * R;
    return ad;
}

Matrix6 se3_right_jacobian_inverse(const Twist& xi) {
    // J_r(xi) = J_l(-xi) = [[A, 0], [C, A]] with A = J_l(-phi), C = Q(-rho, -phi)
    const Vector3 phi = -xi.rotation;
    const Vector3 rho = -xi.translation;
    const Matrix3 a_inv = so3_left_jacobian_inverse(phi);
    const Matrix3 c = se3_q_matrix(rho, phi);
    Matrix6 out = Matrix6::Zero();
    out.topLeftCorner<3, 3>() = a_inv;
    out.bottomRightCorner<3, 3>() = a_inv;
    out.bottomLeftCorner<3, 3>() = -a_inv * c * a_inv;
    return out;
}

PoseDelta pose_delta(const Pose& a, const Pose& b) {
    const Pose d = a.inverse() * b;
    return {d.translation().norm(), d.angle()};
}

}  // namespace loopsift
