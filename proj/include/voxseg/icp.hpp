#pragma once

#include "voxseg/camera.hpp"
#include "voxseg/image.hpp"

namespace voxseg {

struct TrackingLostError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Reference view the live frame is registered against: a depth map with
// per-pixel world-frame normals, its camera pose, and intrinsics.
struct ModelView {
    DepthImage depth;
    std::vector<Vec3> normals; // world frame, unit; indexed v*width+u
    std::vector<std::uint8_t> normal_valid;
    CameraIntrinsics intrinsics;
    Pose pose;
};

struct IcpParams {
    int max_iterations = 20;
    double distance_gate = 0.1;              // meters
    double angle_gate = 30.0 * M_PI / 180.0; // radians
    int min_correspondences = 100;
    double relative_change_tol = 1e-6;
};

namespace detail {

// Camera-frame normals from central-difference tangents, for gating only.
inline void live_normals(const DepthImage& depth, const CameraIntrinsics& intr,
                         std::vector<Vec3>& normals, std::vector<std::uint8_t>& valid) {
    const int w = depth.width(), h = depth.height();
    normals.assign((std::size_t)w * h, Vec3::Zero());
    valid.assign((std::size_t)w * h, 0);
    for (int v = 1; v < h - 1; ++v) {
        for (int u = 1; u < w - 1; ++u) {
            const std::uint16_t dl = depth.at(u - 1, v), dr = depth.at(u + 1, v),
                                du = depth.at(u, v - 1), dd = depth.at(u, v + 1);
            if (depth.at(u, v) == 0 || dl == 0 || dr == 0 || du == 0 || dd == 0) continue;
            const Vec3 tx = backproject(u + 1, v, dr, intr) - backproject(u - 1, v, dl, intr);
            const Vec3 ty = backproject(u, v + 1, dd, intr) - backproject(u, v - 1, du, intr);
            Vec3 n = tx.cross(ty);
            if (n.norm() < 1e-12) continue;
            n.normalize();
            const Vec3 view = backproject(u, v, depth.at(u, v), intr).normalized();
            if (n.dot(view) > 0) n = -n;
            const std::size_t pix = (std::size_t)v * w + u;
            normals[pix] = n;
            valid[pix] = 1;
        }
    }
}

} // namespace detail

// Point-to-plane ICP with projective data association, minimizing
// sum(((R p_live + t - q_model) . n_model)^2) by iterated small-angle
// linearization of the 6x6 normal equations.
inline Pose icp_track(const ModelView& model, const DepthImage& live,
                      const CameraIntrinsics& live_intr, const Pose& init_pose,
                      const IcpParams& params = {}) {
    Pose est = init_pose;
    double prev_residual = std::numeric_limits<double>::infinity();
    const double cos_gate = std::cos(params.angle_gate);

    std::vector<Vec3> live_n;
    std::vector<std::uint8_t> live_n_valid;
    detail::live_normals(live, live_intr, live_n, live_n_valid);

    for (int iter = 0; iter < params.max_iterations; ++iter) {
        Eigen::Matrix<double, 6, 6> a = Eigen::Matrix<double, 6, 6>::Zero();
        Eigen::Matrix<double, 6, 1> b = Eigen::Matrix<double, 6, 1>::Zero();
        double residual_sum = 0.0;
        int n_corr = 0;

        for (int v = 0; v < live.height(); ++v) {
            for (int u = 0; u < live.width(); ++u) {
                const std::uint16_t d = live.at(u, v);
                const std::size_t lpix = (std::size_t)v * live.width() + u;
                if (d == 0 || !live_n_valid[lpix]) continue;
                const Vec3 p_live = backproject(u, v, d, live_intr);
                const Vec3 p_w = est.to_world(p_live);

                const Vec3 p_mc = model.pose.to_camera(p_w);
                if (p_mc.z() <= 0) continue;
                const int mu = (int)std::lround(model.intrinsics.fx * p_mc.x() / p_mc.z() +
                                                model.intrinsics.cx);
                const int mv = (int)std::lround(model.intrinsics.fy * p_mc.y() / p_mc.z() +
                                                model.intrinsics.cy);
                if (!model.depth.in_bounds(mu, mv)) continue;
                const std::uint16_t md = model.depth.at(mu, mv);
                const std::size_t mpix = (std::size_t)mv * model.depth.width() + mu;
                if (md == 0 || !model.normal_valid[mpix]) continue;

                const Vec3 q_w = model.pose.to_world(backproject(mu, mv, md, model.intrinsics));
                const Vec3& n_w = model.normals[mpix];
                if ((p_w - q_w).norm() > params.distance_gate) continue;
                if ((est.rotation * live_n[lpix]).dot(n_w) < cos_gate) continue;

                const double r = (p_w - q_w).dot(n_w);
                Eigen::Matrix<double, 6, 1> j;
                j.head<3>() = p_w.cross(n_w);
                j.tail<3>() = n_w;
                a += j * j.transpose();
                b += j * r;
                residual_sum += r * r;
                ++n_corr;
            }
        }

        if (n_corr < params.min_correspondences)
            throw TrackingLostError("icp: insufficient correspondences (" +
                                    std::to_string(n_corr) + ")");

        const Eigen::Matrix<double, 6, 1> x = a.ldlt().solve(-b);
        const Mat3 dr = rotation_from_axis_angle(x.head<3>());
        est.rotation = dr * est.rotation;
        est.translation = dr * est.translation + x.tail<3>();

        // re-orthonormalize against drift from repeated small updates
        Eigen::JacobiSVD<Mat3> svd(est.rotation, Eigen::ComputeFullU | Eigen::ComputeFullV);
        est.rotation = svd.matrixU() * svd.matrixV().transpose();

        const double residual = residual_sum / n_corr;
        if (residual < 1e-16) break;
        if (prev_residual < std::numeric_limits<double>::infinity() &&
            std::abs(prev_residual - residual) / std::max(prev_residual, 1e-30) <
                params.relative_change_tol)
            break;
        prev_residual = residual;
    }
    return est;
}

} // namespace voxseg
