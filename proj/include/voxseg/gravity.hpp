#pragma once

#include <algorithm>

#include "voxseg/geometry.hpp"

namespace voxseg {

struct DegenerateScatterError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Rotation aligning the reconstruction frame with the inertial frame, the
// estimated up axis in reconstruction coordinates, and the floor height
// along it.
struct GravityFrame {
    Mat3 rotation = Mat3::Identity(); // maps reconstruction frame -> inertial (up -> +Y)
    Vec3 up = Vec3::UnitY();
    double floor_level = 0.0;

    double height_of(const Vec3& p_world) const { return up.dot(p_world) - floor_level; }
};

struct GravityParams {
    Vec3 init_up = Vec3::UnitY();
    double cone_half_angle = 15.0 * M_PI / 180.0; // membership cone for both sets
    double stop_angle = 0.01 * M_PI / 180.0;
    int max_iterations = 10;
    std::size_t min_samples = 1000;
};

// Iterative up-axis estimate from surface normals: normals near +-up form the
// parallel set, normals near the horizon the orthogonal set; the up direction
// maximizing agreement with both is the top eigenvector of the signed scatter
// sum(par) n n^T - sum(orth) n n^T. Floor level is the 1st percentile of point
// heights along the recovered axis.
inline GravityFrame align_gravity(const std::vector<Vec3>& points,
                                  const std::vector<Vec3>& normals,
                                  const GravityParams& params = {}) {
    if (normals.size() < params.min_samples)
        throw std::invalid_argument("align_gravity: needs at least " +
                                    std::to_string(params.min_samples) + " normal samples");
    if (points.size() != normals.size())
        throw std::invalid_argument("align_gravity: point/normal size mismatch");

    Vec3 up = params.init_up.normalized();
    const double par_cos = std::cos(params.cone_half_angle);   // |n.up| above this: parallel
    const double orth_sin = std::sin(params.cone_half_angle);  // |n.up| below this: orthogonal

    for (int iter = 0; iter < params.max_iterations; ++iter) {
        Mat3 scatter = Mat3::Zero();
        std::size_t n_members = 0;
        for (const Vec3& n : normals) {
            const double c = std::abs(n.dot(up));
            if (c >= par_cos) {
                scatter += n * n.transpose();
                ++n_members;
            } else if (c <= orth_sin) {
                scatter -= n * n.transpose();
                ++n_members;
            }
        }
        if (n_members == 0) throw DegenerateScatterError("align_gravity: empty membership sets");

        Eigen::SelfAdjointEigenSolver<Mat3> eig(scatter);
        const auto& vals = eig.eigenvalues(); // ascending
        if (vals[2] - vals[1] <= 1e-9 * std::max(1.0, std::abs(vals[2])))
            throw DegenerateScatterError("align_gravity: no dominant up direction");
        Vec3 up_new = eig.eigenvectors().col(2);
        if (up_new.dot(up) < 0) up_new = -up_new;

        const double delta = std::acos(std::clamp(up_new.dot(up), -1.0, 1.0));
        up = up_new;
        if (delta < params.stop_angle) break;
    }

    GravityFrame frame;
    frame.up = up;
    frame.rotation = Eigen::Quaterniond::FromTwoVectors(up, Vec3::UnitY()).toRotationMatrix();

    std::vector<double> heights;
    heights.reserve(points.size());
    for (const Vec3& p : points) heights.push_back(up.dot(p));
    std::sort(heights.begin(), heights.end());
    frame.floor_level = heights.empty() ? 0.0 : heights[(std::size_t)(0.01 * (heights.size() - 1))];
    return frame;
}

} // namespace voxseg
