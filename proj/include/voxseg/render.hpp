#pragma once

#include <algorithm>
#include <optional>
#include <thread>
#include <vector>

#include "voxseg/camera.hpp"
#include "voxseg/image.hpp"
#include "voxseg/scene.hpp"

namespace voxseg {

struct Ray {
    Vec3 origin;
    Vec3 dir; // unit norm
};

struct Hit {
    double t = 0;
    int mesh_index = 0;
    int triangle_index = 0;
};

inline constexpr double kRayEpsilon = 1e-6; // meters; minimum accepted hit distance

// Moller-Trumbore. Hits on either face; returns nullopt for parallel rays and
// hits closer than kRayEpsilon.
inline std::optional<double> intersect_triangle(const Ray& ray, const Vec3& v0, const Vec3& v1,
                                                const Vec3& v2) {
    const Vec3 e1 = v1 - v0, e2 = v2 - v0;
    const Vec3 pvec = ray.dir.cross(e2);
    const double det = e1.dot(pvec);
    if (std::abs(det) < 1e-14) return std::nullopt;
    const double inv_det = 1.0 / det;
    const Vec3 tvec = ray.origin - v0;
    const double u = tvec.dot(pvec) * inv_det;
    if (u < 0.0 || u > 1.0) return std::nullopt;
    const Vec3 qvec = tvec.cross(e1);
    const double v = ray.dir.dot(qvec) * inv_det;
    if (v < 0.0 || u + v > 1.0) return std::nullopt;
    const double t = e2.dot(qvec) * inv_det;
    if (t < kRayEpsilon) return std::nullopt;
    return t;
}

namespace detail {

struct TriRef {
    Vec3 v0, v1, v2;
    Vec3 centroid;
    int mesh_index;
    int triangle_index;
};

struct BvhNode {
    Aabb box;
    int left = -1;  // internal: child node index; leaf: first triangle
    int right = -1; // internal: child node index; leaf: -1
    int count = 0;  // leaf: triangle count; internal: 0
    bool is_leaf() const { return count > 0; }
};

inline bool intersect_aabb(const Ray& ray, const Vec3& inv_dir, const Aabb& box, double t_max) {
    double t0 = 0.0, t1 = t_max;
    for (int a = 0; a < 3; ++a) {
        double lo = (box.min[a] - ray.origin[a]) * inv_dir[a];
        double hi = (box.max[a] - ray.origin[a]) * inv_dir[a];
        if (inv_dir[a] < 0) std::swap(lo, hi);
        t0 = std::max(t0, lo);
        t1 = std::min(t1, hi);
        if (t0 > t1) return false;
    }
    return true;
}

} // namespace detail

// Median-split BVH over the longest centroid axis, leaf size 4. The traversal
// keeps the nearest hit; exact-t ties resolve to the lowest (mesh, triangle)
// index so results do not depend on build or traversal order.
class SceneIndex {
public:
    explicit SceneIndex(Scene scene) : scene_(std::move(scene)) {
        for (int mi = 0; mi < (int)scene_.meshes.size(); ++mi) {
            const Mesh& m = scene_.meshes[mi];
            for (int ti = 0; ti < (int)m.triangles.size(); ++ti) {
                const Triangle& t = m.triangles[ti];
                detail::TriRef ref;
                ref.v0 = m.vertices[t.a];
                ref.v1 = m.vertices[t.b];
                ref.v2 = m.vertices[t.c];
                ref.centroid = (ref.v0 + ref.v1 + ref.v2) / 3.0;
                ref.mesh_index = mi;
                ref.triangle_index = ti;
                tris_.push_back(ref);
            }
        }
        if (!tris_.empty()) build(0, (int)tris_.size());
    }

    const Scene& scene() const { return scene_; }

    std::optional<Hit> intersect(const Ray& ray) const {
        if (tris_.empty()) return std::nullopt;
        const Vec3 inv_dir{1.0 / ray.dir.x(), 1.0 / ray.dir.y(), 1.0 / ray.dir.z()};
        std::optional<Hit> best;
        double best_t = std::numeric_limits<double>::infinity();
        int stack[64];
        int sp = 0;
        stack[sp++] = 0;
        while (sp > 0) {
            const detail::BvhNode& node = nodes_[stack[--sp]];
            if (!detail::intersect_aabb(ray, inv_dir, node.box, best_t)) continue;
            if (node.is_leaf()) {
                for (int i = node.left; i < node.left + node.count; ++i)
                    consider(ray, tris_[i], best, best_t);
            } else {
                stack[sp++] = node.right;
                stack[sp++] = node.left;
            }
        }
        return best;
    }

    // Exhaustive reference path; rendering through it must match the BVH.
    std::optional<Hit> intersect_brute(const Ray& ray) const {
        std::optional<Hit> best;
        double best_t = std::numeric_limits<double>::infinity();
        for (const auto& tri : tris_) consider(ray, tri, best, best_t);
        return best;
    }

    std::size_t triangle_count() const { return tris_.size(); }

private:
    static void consider(const Ray& ray, const detail::TriRef& tri, std::optional<Hit>& best,
                         double& best_t) {
        const auto t = intersect_triangle(ray, tri.v0, tri.v1, tri.v2);
        if (!t) return;
        const bool closer = *t < best_t;
        const bool tie_lower =
            *t == best_t && best &&
            std::make_pair(tri.mesh_index, tri.triangle_index) <
                std::make_pair(best->mesh_index, best->triangle_index);
        if (closer || tie_lower) {
            best_t = *t;
            best = Hit{*t, tri.mesh_index, tri.triangle_index};
        }
    }

    int build(int begin, int end) {
        detail::BvhNode node;
        Aabb centroid_box;
        for (int i = begin; i < end; ++i) {
            node.box.extend(tris_[i].v0);
            node.box.extend(tris_[i].v1);
            node.box.extend(tris_[i].v2);
            centroid_box.extend(tris_[i].centroid);
        }
        const int node_index = (int)nodes_.size();
        nodes_.push_back(node);
        if (end - begin <= 4) {
            nodes_[node_index].left = begin;
            nodes_[node_index].count = end - begin;
            return node_index;
        }
        const Vec3 ext = centroid_box.extent();
        int axis = 0;
        if (ext.y() > ext.x()) axis = 1;
        if (ext.z() > ext[axis]) axis = 2;
        const int mid = (begin + end) / 2;
        std::nth_element(tris_.begin() + begin, tris_.begin() + mid, tris_.begin() + end,
                         [axis](const detail::TriRef& a, const detail::TriRef& b) {
                             if (a.centroid[axis] != b.centroid[axis])
                                 return a.centroid[axis] < b.centroid[axis];
                             return std::make_pair(a.mesh_index, a.triangle_index) <
                                    std::make_pair(b.mesh_index, b.triangle_index);
                         });
        const int left = build(begin, mid);
        const int right = build(mid, end);
        nodes_[node_index].left = left;
        nodes_[node_index].right = right;
        return node_index;
    }

    Scene scene_;
    std::vector<detail::TriRef> tris_;
    std::vector<detail::BvhNode> nodes_;
};

struct RenderedFrame {
    DepthImage depth;
    LabelImage label;
};

// Casts one ray through each pixel center; depth is camera Z in millimeters
// rounded to nearest. Output is identical for any worker count: threads own
// disjoint row ranges.
inline RenderedFrame render_frame(const SceneIndex& index, const CameraIntrinsics& intr,
                                  const Pose& pose, int n_threads = 0, bool use_bvh = true) {
    intr.validate();
    if (!pose.is_valid()) throw std::invalid_argument("invalid camera pose");
    RenderedFrame frame{DepthImage(intr.width, intr.height, 0),
                        LabelImage(intr.width, intr.height, kVoidLabel)};

    auto render_rows = [&](int v0, int v1) {
        for (int v = v0; v < v1; ++v) {
            for (int u = 0; u < intr.width; ++u) {
                const Vec3 d_cam{(u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0};
                const double d_norm = d_cam.norm();
                Ray ray{pose.translation, pose.rotation * (d_cam / d_norm)};
                const auto hit = use_bvh ? index.intersect(ray) : index.intersect_brute(ray);
                if (!hit) continue;
                const double z_m = hit->t / d_norm; // camera Z
                const long mm = std::lround(z_m * 1000.0);
                if (mm < 1 || mm > 65535) continue;
                frame.depth.at(u, v) = (std::uint16_t)mm;
                frame.label.at(u, v) = index.scene().labels[hit->mesh_index];
            }
        }
    };

    if (n_threads <= 0) n_threads = (int)std::max(1u, std::thread::hardware_concurrency());
    n_threads = std::min(n_threads, intr.height);
    if (n_threads == 1) {
        render_rows(0, intr.height);
    } else {
        std::vector<std::thread> workers;
        const int rows_per = (intr.height + n_threads - 1) / n_threads;
        for (int i = 0; i < n_threads; ++i) {
            const int v0 = i * rows_per, v1 = std::min(intr.height, v0 + rows_per);
            if (v0 < v1) workers.emplace_back(render_rows, v0, v1);
        }
        for (auto& w : workers) w.join();
    }
    return frame;
}

} // namespace voxseg
