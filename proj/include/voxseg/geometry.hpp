#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace voxseg {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Rigid transform mapping camera-frame points into the world frame.
struct Pose {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    Vec3 to_world(const Vec3& p_cam) const { return rotation * p_cam + translation; }
    Vec3 to_camera(const Vec3& p_world) const {
        return rotation.transpose() * (p_world - translation);
    }
    Pose inverse() const {
        Pose inv;
        inv.rotation = rotation.transpose();
        inv.translation = -(rotation.transpose() * translation);
        return inv;
    }
    Pose compose(const Pose& rhs) const {
        // this * rhs: apply rhs first.
        Pose out;
        out.rotation = rotation * rhs.rotation;
        out.translation = rotation * rhs.translation + translation;
        return out;
    }

    bool is_valid(double tol = 1e-9) const {
        const Mat3 err = rotation.transpose() * rotation - Mat3::Identity();
        return err.cwiseAbs().maxCoeff() <= tol &&
               std::abs(rotation.determinant() - 1.0) <= tol;
    }
};

// Rodrigues formula for a small-angle axis times angle vector.
inline Mat3 rotation_from_axis_angle(const Vec3& omega) {
    const double theta = omega.norm();
    if (theta < 1e-12) return Mat3::Identity();
    const Vec3 axis = omega / theta;
    Mat3 k;
    k << 0, -axis.z(), axis.y(), axis.z(), 0, -axis.x(), -axis.y(), axis.x(), 0;
    return Mat3::Identity() + std::sin(theta) * k + (1.0 - std::cos(theta)) * k * k;
}

inline double rotation_angle(const Mat3& r) {
    const double c = std::clamp((r.trace() - 1.0) / 2.0, -1.0, 1.0);
    return std::acos(c);
}

struct Aabb {
    Vec3 min = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 max = Vec3::Constant(-std::numeric_limits<double>::infinity());

    bool empty() const { return !(min.x() <= max.x()); }
    void extend(const Vec3& p) {
        min = min.cwiseMin(p);
        max = max.cwiseMax(p);
    }
    void extend(const Aabb& b) {
        min = min.cwiseMin(b.min);
        max = max.cwiseMax(b.max);
    }
    Vec3 center() const { return 0.5 * (min + max); }
    Vec3 extent() const { return max - min; }
    bool contains(const Vec3& p) const {
        return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
    }
    bool intersects(const Aabb& b) const {
        return (min.array() <= b.max.array()).all() && (b.min.array() <= max.array()).all();
    }
};

} // namespace voxseg
