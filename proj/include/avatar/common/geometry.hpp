#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <cmath>
#include <numbers>

namespace avatar {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;
using Pose = Eigen::Isometry3d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

/// Planar pose on the ground plane.
struct Pose2
{
    double x{0.0};
    double y{0.0};
    double yaw{0.0};

    Vec2 position() const { return {x, y}; }
};

inline double wrap_angle(double a)
{
    // (-pi, pi]
    a = std::remainder(a, 2.0 * std::numbers::pi);
    if (a <= -std::numbers::pi)
        a += 2.0 * std::numbers::pi;
    return a;
}

inline Mat3 skew(const Vec3& v)
{
    Mat3 s;
    s << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
    return s;
}

/// Rotation vector of R (SO(3) logarithm).
inline Vec3 log_so3(const Mat3& R)
{
    Eigen::AngleAxisd aa(R);
    return aa.angle() * aa.axis();
}

inline Mat3 exp_so3(const Vec3& w)
{
    const double angle = w.norm();
    if (angle < 1e-15)
        return Mat3::Identity();
    return Eigen::AngleAxisd(angle, w / angle).toRotationMatrix();
}

inline Mat3 rot_x(double a) { return Eigen::AngleAxisd(a, Vec3::UnitX()).toRotationMatrix(); }
inline Mat3 rot_y(double a) { return Eigen::AngleAxisd(a, Vec3::UnitY()).toRotationMatrix(); }
inline Mat3 rot_z(double a) { return Eigen::AngleAxisd(a, Vec3::UnitZ()).toRotationMatrix(); }

inline double yaw_of(const Mat3& R) { return std::atan2(R(1, 0), R(0, 0)); }

inline Pose make_pose(const Vec3& p, const Mat3& R)
{
    Pose T = Pose::Identity();
    T.linear() = R;
    T.translation() = p;
    return T;
}

} // namespace avatar
