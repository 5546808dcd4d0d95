#pragma once

#include <cstring>
#include <istream>
#include <ostream>

#include "voxseg/camera.hpp"
#include "voxseg/gravity.hpp"
#include "voxseg/image.hpp"
#include "voxseg/io.hpp"

namespace voxseg {

// The network's 4-channel input: depth, height from ground, angle with
// gravity, curvature, with a shared validity mask.
class FeatureImage {
public:
    static constexpr int kChannels = 4;

    FeatureImage() = default;
    FeatureImage(int width, int height)
        : width_(width), height_(height),
          planes_(kChannels, std::vector<float>((std::size_t)width * height, 0.0f)),
          mask_((std::size_t)width * height, 0) {}

    int width() const { return width_; }
    int height() const { return height_; }

    float& channel(int c, int u, int v) { return planes_[c][(std::size_t)v * width_ + u]; }
    float channel(int c, int u, int v) const { return planes_[c][(std::size_t)v * width_ + u]; }
    bool valid(int u, int v) const { return mask_[(std::size_t)v * width_ + u] != 0; }
    void set_valid(int u, int v, bool ok) { mask_[(std::size_t)v * width_ + u] = ok ? 1 : 0; }

    const std::vector<float>& plane(int c) const { return planes_[c]; }
    std::vector<float>& plane(int c) { return planes_[c]; }
    const std::vector<std::uint8_t>& mask() const { return mask_; }
    std::vector<std::uint8_t>& mask() { return mask_; }

    bool operator==(const FeatureImage&) const = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<std::vector<float>> planes_;
    std::vector<std::uint8_t> mask_;
};

struct DhacParams {
    double discontinuity_gate = 0.03; // meters; neighbor depth jump invalidates
    int curvature_window = 11;        // odd, >= 3
    int curvature_min_points = 6;
    // fixed affine normalization to [0,1]
    double depth_scale = 8.0;  // meters
    double height_scale = 3.0; // meters
};

struct NormalImage {
    std::vector<Vec3> normals; // camera frame, unit, oriented toward camera
    std::vector<std::uint8_t> valid;
    int width = 0, height = 0;

    const Vec3& at(int u, int v) const { return normals[(std::size_t)v * width + u]; }
    bool is_valid(int u, int v) const { return valid[(std::size_t)v * width + u] != 0; }
};

// Central-difference tangent normals. A pixel is invalid next to missing depth
// or across a discontinuity (neighbor jump beyond the gate).
inline NormalImage compute_normals(const DepthImage& depth, const CameraIntrinsics& intr,
                                   const DhacParams& params = {}) {
    NormalImage out;
    out.width = depth.width();
    out.height = depth.height();
    out.normals.assign((std::size_t)out.width * out.height, Vec3::Zero());
    out.valid.assign((std::size_t)out.width * out.height, 0);
    const double gate_mm = params.discontinuity_gate * 1000.0;

    for (int v = 1; v < out.height - 1; ++v) {
        for (int u = 1; u < out.width - 1; ++u) {
            const std::uint16_t dc = depth.at(u, v);
            const std::uint16_t dl = depth.at(u - 1, v), dr = depth.at(u + 1, v),
                                dt = depth.at(u, v - 1), db = depth.at(u, v + 1);
            if (dc == 0 || dl == 0 || dr == 0 || dt == 0 || db == 0) continue;
            if (std::abs((double)dl - dc) > gate_mm || std::abs((double)dr - dc) > gate_mm ||
                std::abs((double)dt - dc) > gate_mm || std::abs((double)db - dc) > gate_mm)
                continue;
            const Vec3 tx = backproject(u + 1, v, dr, intr) - backproject(u - 1, v, dl, intr);
            const Vec3 ty = backproject(u, v + 1, db, intr) - backproject(u, v - 1, dt, intr);
            Vec3 n = tx.cross(ty);
            if (n.norm() < 1e-12) continue;
            n.normalize();
            const Vec3 view = backproject(u, v, dc, intr).normalized();
            if (n.dot(view) > 0) n = -n;
            const std::size_t pix = (std::size_t)v * out.width + u;
            out.normals[pix] = n;
            out.valid[pix] = 1;
        }
    }
    return out;
}

// H = up . world_point - floor_level, meters. Raster; validity = depth validity.
inline std::vector<float> compute_height(const DepthImage& depth, const CameraIntrinsics& intr,
                                         const Pose& pose, const GravityFrame& gravity) {
    std::vector<float> h((std::size_t)depth.width() * depth.height(), 0.0f);
    for (int v = 0; v < depth.height(); ++v)
        for (int u = 0; u < depth.width(); ++u) {
            const std::uint16_t d = depth.at(u, v);
            if (d == 0) continue;
            const Vec3 p_w = pose.to_world(backproject(u, v, d, intr));
            h[(std::size_t)v * depth.width() + u] = (float)gravity.height_of(p_w);
        }
    return h;
}

// Unsigned angle between the surface-normal line and the up axis: 0 for
// floor/ceiling, pi/2 for walls. D and H disambiguate floor from ceiling.
inline std::vector<float> compute_angle(const NormalImage& normals, const Pose& pose,
                                        const GravityFrame& gravity) {
    std::vector<float> a((std::size_t)normals.width * normals.height, 0.0f);
    for (std::size_t i = 0; i < normals.normals.size(); ++i) {
        if (!normals.valid[i]) continue;
        const Vec3 n_w = pose.rotation * normals.normals[i];
        a[i] = (float)std::acos(std::clamp(std::abs(n_w.dot(gravity.up)), 0.0, 1.0));
    }
    return a;
}

// Surface variation lambda0/(lambda0+lambda1+lambda2) of the covariance of
// backprojected points in a k x k window, discontinuity-gated against the
// center depth. Undefined with fewer than `curvature_min_points` samples.
inline void compute_curvature(const DepthImage& depth, const CameraIntrinsics& intr,
                              const DhacParams& params, std::vector<float>& c,
                              std::vector<std::uint8_t>& valid) {
    const int k = params.curvature_window;
    if (k < 3 || k % 2 == 0) throw std::invalid_argument("curvature window must be odd and >= 3");
    const int r = k / 2;
    const int w = depth.width(), h = depth.height();
    c.assign((std::size_t)w * h, 0.0f);
    valid.assign((std::size_t)w * h, 0);
    const double gate_mm = params.discontinuity_gate * 1000.0;

    std::vector<Vec3> pts;
    pts.reserve((std::size_t)k * k);
    for (int v = 0; v < h; ++v) {
        for (int u = 0; u < w; ++u) {
            const std::uint16_t dc = depth.at(u, v);
            if (dc == 0) continue;
            pts.clear();
            for (int dv = -r; dv <= r; ++dv)
                for (int du = -r; du <= r; ++du) {
                    const int uu = u + du, vv = v + dv;
                    if (!depth.in_bounds(uu, vv)) continue;
                    const std::uint16_t d = depth.at(uu, vv);
                    if (d == 0 || std::abs((double)d - dc) > gate_mm) continue;
                    pts.push_back(backproject(uu, vv, d, intr));
                }
            if ((int)pts.size() < params.curvature_min_points) continue;
            Vec3 mean = Vec3::Zero();
            for (const Vec3& p : pts) mean += p;
            mean /= (double)pts.size();
            Mat3 cov = Mat3::Zero();
            for (const Vec3& p : pts) {
                const Vec3 q = p - mean;
                cov += q * q.transpose();
            }
            cov /= (double)pts.size();
            Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
            const auto& lambda = eig.eigenvalues(); // ascending
            const double sum = lambda.sum();
            const std::size_t pix = (std::size_t)v * w + u;
            c[pix] = sum > 0 ? (float)std::max(0.0, lambda[0] / sum) : 0.0f;
            valid[pix] = 1;
        }
    }
}

// Full 4-channel input, normalized to [0,1]: D/8m, H/3m (clamped), A/(pi/2),
// C*3. Mask is the conjunction of per-channel validity.
inline FeatureImage assemble_dhac(const DepthImage& depth, const CameraIntrinsics& intr,
                                  const Pose& pose, const GravityFrame& gravity,
                                  const DhacParams& params = {}) {
    const NormalImage normals = compute_normals(depth, intr, params);
    const std::vector<float> height = compute_height(depth, intr, pose, gravity);
    const std::vector<float> angle = compute_angle(normals, pose, gravity);
    std::vector<float> curv;
    std::vector<std::uint8_t> curv_valid;
    compute_curvature(depth, intr, params, curv, curv_valid);

    FeatureImage out(depth.width(), depth.height());
    for (int v = 0; v < depth.height(); ++v)
        for (int u = 0; u < depth.width(); ++u) {
            const std::size_t pix = (std::size_t)v * depth.width() + u;
            const bool ok = depth.at(u, v) != 0 && normals.valid[pix] && curv_valid[pix];
            out.set_valid(u, v, ok);
            if (!ok) continue;
            out.channel(0, u, v) =
                (float)std::clamp(depth.at(u, v) * 1e-3 / params.depth_scale, 0.0, 1.0);
            out.channel(1, u, v) =
                (float)std::clamp(height[pix] / params.height_scale, 0.0, 1.0);
            out.channel(2, u, v) = (float)std::clamp(angle[pix] / (M_PI / 2.0), 0.0, 1.0);
            out.channel(3, u, v) = std::clamp(curv[pix] * 3.0f, 0.0f, 1.0f);
        }
    return out;
}

// Dump: magic + width/height + 4 planar little-endian float rasters + mask.
inline void save_features(const FeatureImage& img, std::ostream& out) {
    out.write("DHACIMG1", 8);
    const std::int32_t wh[2] = {img.width(), img.height()};
    out.write(reinterpret_cast<const char*>(wh), sizeof(wh));
    for (int c = 0; c < FeatureImage::kChannels; ++c)
        out.write(reinterpret_cast<const char*>(img.plane(c).data()),
                  (std::streamsize)(img.plane(c).size() * sizeof(float)));
    out.write(reinterpret_cast<const char*>(img.mask().data()),
              (std::streamsize)img.mask().size());
}

inline FeatureImage load_features(std::istream& in) {
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, "DHACIMG1", 8) != 0)
        throw FileFormatError("feature dump: bad magic");
    std::int32_t wh[2];
    in.read(reinterpret_cast<char*>(wh), sizeof(wh));
    if (!in) throw FileFormatError("feature dump: truncated header");
    FeatureImage img(wh[0], wh[1]);
    for (int c = 0; c < FeatureImage::kChannels; ++c)
        in.read(reinterpret_cast<char*>(img.plane(c).data()),
                (std::streamsize)(img.plane(c).size() * sizeof(float)));
    in.read(reinterpret_cast<char*>(img.mask().data()), (std::streamsize)img.mask().size());
    if (!in) throw FileFormatError("feature dump: truncated payload");
    return img;
}

} // namespace voxseg
