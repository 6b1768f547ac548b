#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <Eigen/Sparse>

#include <cmath>

namespace needleforge {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat12 = Eigen::Matrix<double, 12, 12>;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;
using Quat = Eigen::Quaterniond;
using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

inline constexpr double kMillimetresPerMetre = 1000.0;

/// Rotation of |v| radians about v / |v|; identity for tiny v.
inline Quat quat_from_rotvec(const Vec3& v) {
    const double angle = v.norm();
    if (angle < 1e-14) return Quat::Identity();
    return Quat(Eigen::AngleAxisd(angle, v / angle));
}

/// Log map: rotation vector of a unit quaternion.
inline Vec3 rotvec_from_quat(const Quat& q) {
    Quat u = q.normalized();
    if (u.w() < 0.0) u.coeffs() = -u.coeffs();
    const double sin_half = u.vec().norm();
    if (sin_half < 1e-14) return 2.0 * u.vec();
    const double angle = 2.0 * std::atan2(sin_half, u.w());
    return (angle / sin_half) * u.vec();
}

/// Smallest rotation taking unit vector `from` onto unit vector `to`.
inline Quat rotation_between(const Vec3& from, const Vec3& to) {
    return Quat::FromTwoVectors(from, to);
}

/// Rigid transform t + q * x.
struct RigidPose {
    Vec3 translation = Vec3::Zero();
    Quat rotation = Quat::Identity();

    Vec3 apply(const Vec3& p) const { return translation + rotation * p; }
    Vec3 rotate(const Vec3& v) const { return rotation * v; }
};

inline RigidPose compose(const RigidPose& a, const RigidPose& b) {
    return {a.translation + a.rotation * b.translation, (a.rotation * b.rotation).normalized()};
}

}  // namespace needleforge
