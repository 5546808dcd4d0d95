#pragma once

#include <array>
#include <cstring>
#include <fstream>

#include "voxseg/camera.hpp"
#include "voxseg/image.hpp"
#include "voxseg/io.hpp"

namespace voxseg {

struct GridGeometry {
    Vec3 origin = Vec3::Zero(); // world position of the grid corner, meters
    double voxel_size = 0.02;   // meters
    std::array<int, 3> dims = {128, 128, 128};

    bool operator==(const GridGeometry&) const = default;

    std::size_t voxel_count() const {
        return (std::size_t)dims[0] * dims[1] * dims[2];
    }
    std::size_t linear_index(int x, int y, int z) const {
        return ((std::size_t)z * dims[1] + y) * dims[0] + x;
    }
    bool in_grid(int x, int y, int z) const {
        return x >= 0 && x < dims[0] && y >= 0 && y < dims[1] && z >= 0 && z < dims[2];
    }
    Vec3 voxel_center(int x, int y, int z) const {
        return origin + voxel_size * Vec3{x + 0.5, y + 0.5, z + 0.5};
    }
    // voxel containing a world point, or nullopt outside the grid
    std::optional<std::array<int, 3>> voxel_of(const Vec3& p) const {
        const Vec3 g = (p - origin) / voxel_size;
        const int x = (int)std::floor(g.x()), y = (int)std::floor(g.y()),
                  z = (int)std::floor(g.z());
        if (!in_grid(x, y, z)) return std::nullopt;
        return std::array<int, 3>{x, y, z};
    }
};

// Grid sized to cover scene bounds plus a margin, KinectFusion-style defaults.
inline GridGeometry grid_for_bounds(const Aabb& bounds, int resolution = 128,
                                    double margin = 0.5) {
    GridGeometry g;
    g.dims = {resolution, resolution, resolution};
    const Vec3 size = bounds.extent() + Vec3::Constant(2 * margin);
    g.voxel_size = size.maxCoeff() / resolution;
    g.origin = bounds.center() - 0.5 * g.voxel_size * Vec3::Constant(resolution);
    return g;
}

// Unobserved voxels hold tsdf = +1, weight = 0, so raycasting marches through
// free space correctly.
class TsdfVolume {
public:
    static constexpr float kMaxWeight = 100.0f;

    explicit TsdfVolume(const GridGeometry& geom, double truncation = 0.0)
        : geom_(geom), mu_(truncation > 0 ? truncation : 4.0 * geom.voxel_size),
          tsdf_(geom.voxel_count(), 1.0f), weight_(geom.voxel_count(), 0.0f) {}

    const GridGeometry& geometry() const { return geom_; }
    double truncation() const { return mu_; }
    float tsdf_at(int x, int y, int z) const { return tsdf_[geom_.linear_index(x, y, z)]; }
    float weight_at(int x, int y, int z) const { return weight_[geom_.linear_index(x, y, z)]; }
    const std::vector<float>& tsdf_data() const { return tsdf_; }
    const std::vector<float>& weight_data() const { return weight_; }
    std::vector<float>& tsdf_data() { return tsdf_; }
    std::vector<float>& weight_data() { return weight_; }

    std::size_t observed_count() const {
        std::size_t n = 0;
        for (float w : weight_)
            if (w > 0) ++n;
        return n;
    }

    void integrate(const DepthImage& depth, const CameraIntrinsics& intr, const Pose& pose,
                   float frame_weight = 1.0f) {
        if (frame_weight <= 0) throw std::invalid_argument("frame weight must be positive");
        if (!pose.is_valid()) throw std::invalid_argument("invalid pose");
        const Pose world_to_cam = pose.inverse();
        const int nx = geom_.dims[0], ny = geom_.dims[1], nz = geom_.dims[2];
        for (int z = 0; z < nz; ++z) {
            for (int y = 0; y < ny; ++y) {
                for (int x = 0; x < nx; ++x) {
                    const Vec3 p_cam = world_to_cam.to_world(geom_.voxel_center(x, y, z));
                    if (p_cam.z() <= 0) continue;
                    const int u = (int)std::lround(intr.fx * p_cam.x() / p_cam.z() + intr.cx);
                    const int v = (int)std::lround(intr.fy * p_cam.y() / p_cam.z() + intr.cy);
                    if (!depth.in_bounds(u, v)) continue;
                    const std::uint16_t d = depth.at(u, v);
                    if (d == 0) continue;
                    const double sdf = d * 1e-3 - p_cam.z();
                    if (sdf < -mu_) continue; // behind the surface, outside the band
                    const float f = (float)std::clamp(sdf / mu_, -1.0, 1.0);
                    const std::size_t i = geom_.linear_index(x, y, z);
                    const float w_old = weight_[i];
                    tsdf_[i] = (tsdf_[i] * w_old + f * frame_weight) / (w_old + frame_weight);
                    weight_[i] = std::min(w_old + frame_weight, kMaxWeight);
                }
            }
        }
    }

    // Trilinear TSDF sample at a world point; +1 outside the sampling domain.
    // `observed` reports whether any contributing voxel has nonzero weight.
    float sample(const Vec3& p, bool* observed = nullptr) const {
        const Vec3 g = (p - geom_.origin) / geom_.voxel_size - Vec3::Constant(0.5);
        const int x0 = (int)std::floor(g.x()), y0 = (int)std::floor(g.y()),
                  z0 = (int)std::floor(g.z());
        if (x0 < 0 || y0 < 0 || z0 < 0 || x0 + 1 >= geom_.dims[0] || y0 + 1 >= geom_.dims[1] ||
            z0 + 1 >= geom_.dims[2]) {
            if (observed) *observed = false;
            return 1.0f;
        }
        const double fx = g.x() - x0, fy = g.y() - y0, fz = g.z() - z0;
        double acc = 0.0;
        bool any_weight = false;
        for (int dz = 0; dz < 2; ++dz)
            for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx) {
                    const double w = (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy) * (dz ? fz : 1 - fz);
                    const std::size_t i = geom_.linear_index(x0 + dx, y0 + dy, z0 + dz);
                    acc += w * tsdf_[i];
                    if (weight_[i] > 0) any_weight = true;
                }
        if (observed) *observed = any_weight;
        return (float)acc;
    }

    Vec3 gradient(const Vec3& p) const {
        const double h = 0.5 * geom_.voxel_size;
        Vec3 g;
        for (int a = 0; a < 3; ++a) {
            Vec3 dp = Vec3::Zero();
            dp[a] = h;
            g[a] = sample(p + dp) - sample(p - dp);
        }
        return g;
    }

private:
    GridGeometry geom_;
    double mu_;
    std::vector<float> tsdf_;
    std::vector<float> weight_;
};

struct RaycastResult {
    DepthImage depth;                      // camera Z, mm; 0 = no crossing
    std::vector<Vec3> normals;             // world frame, unit; indexed v*width+u
    std::vector<std::uint8_t> normal_valid;
    std::vector<std::array<int, 3>> voxel; // surface voxel per pixel (valid pixels)
};

// Marches each ray in steps of half a voxel from the volume entry point and
// locates the + -> - zero crossing by linear interpolation.
inline RaycastResult raycast(const TsdfVolume& volume, const CameraIntrinsics& intr,
                             const Pose& pose) {
    intr.validate();
    const GridGeometry& geom = volume.geometry();
    Aabb box;
    box.extend(geom.origin);
    box.extend(geom.origin + geom.voxel_size * Vec3{(double)geom.dims[0], (double)geom.dims[1],
                                                    (double)geom.dims[2]});
    const double step = 0.5 * geom.voxel_size;

    RaycastResult out;
    out.depth = DepthImage(intr.width, intr.height, 0);
    out.normals.assign((std::size_t)intr.width * intr.height, Vec3::Zero());
    out.normal_valid.assign((std::size_t)intr.width * intr.height, 0);
    out.voxel.assign((std::size_t)intr.width * intr.height, {-1, -1, -1});

    for (int v = 0; v < intr.height; ++v) {
        for (int u = 0; u < intr.width; ++u) {
            const Vec3 d_cam{(u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0};
            const double d_norm = d_cam.norm();
            const Vec3 dir = pose.rotation * (d_cam / d_norm);
            const Vec3& origin = pose.translation;

            // slab clip against the volume box
            double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
            bool miss = false;
            for (int a = 0; a < 3; ++a) {
                if (std::abs(dir[a]) < 1e-15) {
                    if (origin[a] < box.min[a] || origin[a] > box.max[a]) { miss = true; break; }
                    continue;
                }
                double lo = (box.min[a] - origin[a]) / dir[a];
                double hi = (box.max[a] - origin[a]) / dir[a];
                if (lo > hi) std::swap(lo, hi);
                t0 = std::max(t0, lo);
                t1 = std::min(t1, hi);
                if (t0 > t1) { miss = true; break; }
            }
            if (miss) continue;

            double t_prev = t0;
            bool prev_observed = false;
            float f_prev = volume.sample(origin + t0 * dir, &prev_observed);
            bool found = false;
            double t_hit = 0;
            for (double t = t0 + step; t <= t1 && !found; t += step) {
                bool observed = false;
                const float f = volume.sample(origin + t * dir, &observed);
                if (f_prev > 0 && f < 0 && (observed || prev_observed)) {
                    t_hit = t_prev + step * f_prev / (f_prev - f);
                    found = true;
                } else {
                    t_prev = t;
                    f_prev = f;
                    prev_observed = observed;
                }
            }
            if (!found) continue;

            const Vec3 p_hit = origin + t_hit * dir;
            const double z_m = t_hit / d_norm;
            const long mm = std::lround(z_m * 1000.0);
            if (mm < 1 || mm > 65535) continue;
            const std::size_t pix = (std::size_t)v * intr.width + u;
            out.depth.at(u, v) = (std::uint16_t)mm;
            if (auto vox = geom.voxel_of(p_hit)) out.voxel[pix] = *vox;

            Vec3 n = volume.gradient(p_hit);
            if (n.norm() > 1e-12) {
                n.normalize();
                if (n.dot(dir) > 0) n = -n; // orient toward the camera
                out.normals[pix] = n;
                out.normal_valid[pix] = 1;
            }
        }
    }
    return out;
}

// Volume dump: magic + header (origin, voxel_size, dims, mu) + raw tsdf and
// weight planes, little-endian 32-bit floats.
inline void save_tsdf(const TsdfVolume& volume, std::ostream& out) {
    out.write("TSDFVOL1", 8);
    const GridGeometry& g = volume.geometry();
    double header[5] = {g.origin.x(), g.origin.y(), g.origin.z(), g.voxel_size,
                        volume.truncation()};
    std::int32_t dims[3] = {g.dims[0], g.dims[1], g.dims[2]};
    out.write(reinterpret_cast<const char*>(header), sizeof(header));
    out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    out.write(reinterpret_cast<const char*>(volume.tsdf_data().data()),
              (std::streamsize)(volume.tsdf_data().size() * sizeof(float)));
    out.write(reinterpret_cast<const char*>(volume.weight_data().data()),
              (std::streamsize)(volume.weight_data().size() * sizeof(float)));
}

inline TsdfVolume load_tsdf(std::istream& in) {
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, "TSDFVOL1", 8) != 0)
        throw FileFormatError("tsdf dump: bad magic");
    double header[5];
    std::int32_t dims[3];
    in.read(reinterpret_cast<char*>(header), sizeof(header));
    in.read(reinterpret_cast<char*>(dims), sizeof(dims));
    if (!in) throw FileFormatError("tsdf dump: truncated header");
    GridGeometry g;
    g.origin = Vec3{header[0], header[1], header[2]};
    g.voxel_size = header[3];
    g.dims = {dims[0], dims[1], dims[2]};
    TsdfVolume volume(g, header[4]);
    auto& tsdf = volume.tsdf_data();
    auto& weight = volume.weight_data();
    in.read(reinterpret_cast<char*>(tsdf.data()), (std::streamsize)(tsdf.size() * sizeof(float)));
    in.read(reinterpret_cast<char*>(weight.data()),
            (std::streamsize)(weight.size() * sizeof(float)));
    if (!in) throw FileFormatError("tsdf dump: truncated payload");
    return volume;
}

} // namespace voxseg
