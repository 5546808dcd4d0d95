#pragma once

#include <stdexcept>
#include <vector>

#include "voxseg/geometry.hpp"

namespace voxseg {

struct CameraIntrinsics {
    double fx = 0, fy = 0;
    double cx = 0, cy = 0;
    int width = 0, height = 0;

    void validate() const {
        if (fx <= 0 || fy <= 0) throw std::invalid_argument("focal lengths must be positive");
        if (width <= 0 || height <= 0) throw std::invalid_argument("image size must be positive");
        if (cx < 0 || cx >= width || cy < 0 || cy >= height)
            throw std::invalid_argument("principal point outside image");
    }
};

inline CameraIntrinsics vga_intrinsics() {
    return CameraIntrinsics{525.0, 525.0, 319.5, 239.5, 640, 480};
}

// Scaled pinhole model, keeping the half-pixel principal point convention.
inline CameraIntrinsics scaled_intrinsics(int width, int height, double focal_scale = 1.0) {
    CameraIntrinsics intr;
    intr.width = width;
    intr.height = height;
    intr.fx = intr.fy = focal_scale * 525.0 * width / 640.0;
    intr.cx = width / 2.0 - 0.5;
    intr.cy = height / 2.0 - 0.5;
    return intr;
}

struct Pixel {
    double u = 0, v = 0;
};

inline Pixel project(const Vec3& p_cam, const CameraIntrinsics& intr) {
    if (p_cam.z() <= 0) throw std::domain_error("point behind camera");
    return Pixel{intr.fx * p_cam.x() / p_cam.z() + intr.cx,
                 intr.fy * p_cam.y() / p_cam.z() + intr.cy};
}

inline Vec3 backproject(double u, double v, double depth_mm, const CameraIntrinsics& intr) {
    if (depth_mm <= 0) throw std::domain_error("zero or negative depth");
    const double z = depth_mm * 1e-3;
    return Vec3{(u - intr.cx) / intr.fx * z, (v - intr.cy) / intr.fy * z, z};
}

using Trajectory = std::vector<Pose>;

// Camera axes: +X right, +Y down, +Z forward (optical axis).
inline Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& world_up = Vec3::UnitY()) {
    Vec3 z = target - eye;
    if (z.norm() < 1e-12) throw std::invalid_argument("look_at: eye coincides with target");
    z.normalize();
    Vec3 x = z.cross(world_up);
    if (x.norm() < 1e-9) x = z.cross(Vec3::UnitX()); // looking straight up/down
    x.normalize();
    const Vec3 y = z.cross(x);
    Pose pose;
    pose.rotation.col(0) = x;
    pose.rotation.col(1) = y;
    pose.rotation.col(2) = z;
    pose.translation = eye;
    return pose;
}

struct OrbitParams {
    double radius = 2.0;   // meters from centroid, in the horizontal plane
    double height = 1.5;   // camera height above centroid, meters
    double start_angle = 0.0;
    double sweep = 2.0 * M_PI; // total angle covered by the trajectory
};

inline Trajectory generate_trajectory(const Aabb& bounds, int n_frames, const OrbitParams& orbit) {
    if (n_frames < 1) throw std::invalid_argument("trajectory needs at least one frame");
    if (orbit.radius <= 0) throw std::invalid_argument("orbit radius must be positive");
    const Vec3 centroid = bounds.center();
    Trajectory poses;
    poses.reserve(n_frames);
    for (int i = 0; i < n_frames; ++i) {
        const double a = orbit.start_angle + orbit.sweep * i / n_frames;
        const Vec3 eye = centroid + Vec3{orbit.radius * std::cos(a), orbit.height,
                                         orbit.radius * std::sin(a)};
        poses.push_back(look_at(eye, centroid));
    }
    return poses;
}

} // namespace voxseg
