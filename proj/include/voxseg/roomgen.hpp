#pragma once

#include <random>

#include "voxseg/scene.hpp"

namespace voxseg {

// Desk-scale stand-in for a curated scene collection: an axis-aligned room
// with box-and-leg tables and chairs, exactly the 5 default classes.
struct RoomSpec {
    Vec3 extents{4.0, 2.5, 4.0}; // width (x), height (y, up), depth (z), meters
    int n_chairs = 0;
    int n_tables = 0;
    std::uint64_t seed = 0;

    void validate() const {
        if (extents.minCoeff() <= 0) throw std::invalid_argument("room extents must be positive");
        if (n_chairs < 0 || n_tables < 0) throw std::invalid_argument("negative object count");
    }
};

struct RoomPlacementError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline Mesh make_box(const Vec3& lo, const Vec3& hi, const std::string& name) {
    Mesh m;
    m.object_name = name;
    for (int i = 0; i < 8; ++i)
        m.vertices.push_back(Vec3{(i & 1) ? hi.x() : lo.x(), (i & 2) ? hi.y() : lo.y(),
                                  (i & 4) ? hi.z() : lo.z()});
    const int quads[6][4] = {
        {0, 1, 3, 2}, {4, 6, 7, 5}, // z faces
        {0, 4, 5, 1}, {2, 3, 7, 6}, // y faces
        {0, 2, 6, 4}, {1, 5, 7, 3}, // x faces
    };
    for (const auto& q : quads) {
        m.triangles.push_back(Triangle{q[0], q[1], q[2]});
        m.triangles.push_back(Triangle{q[0], q[2], q[3]});
    }
    return m;
}

inline Mesh make_quad(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d,
                      const std::string& name) {
    Mesh m;
    m.object_name = name;
    m.vertices = {a, b, c, d};
    m.triangles = {Triangle{0, 1, 2}, Triangle{0, 2, 3}};
    return m;
}

inline void append_box_to(Mesh& mesh, const Vec3& lo, const Vec3& hi) {
    const Mesh box = make_box(lo, hi, "");
    const int base = (int)mesh.vertices.size();
    mesh.vertices.insert(mesh.vertices.end(), box.vertices.begin(), box.vertices.end());
    for (const auto& t : box.triangles)
        mesh.triangles.push_back(Triangle{t.a + base, t.b + base, t.c + base});
}

// Table: top slab at 0.75 m with four legs.
inline Mesh make_table(double cx, double cz, const std::string& name) {
    const double w = 1.2, d = 0.7, top_h = 0.75, slab = 0.05, leg = 0.06;
    Mesh m;
    m.object_name = name;
    append_box_to(m, Vec3{cx - w / 2, top_h - slab, cz - d / 2},
                  Vec3{cx + w / 2, top_h, cz + d / 2});
    for (int sx : {-1, 1})
        for (int sz : {-1, 1}) {
            const double x0 = cx + sx * w / 2, z0 = cz + sz * d / 2;
            const Vec3 a{x0, 0, z0}, b{x0 - sx * leg, top_h - slab, z0 - sz * leg};
            append_box_to(m, a.cwiseMin(b), a.cwiseMax(b));
        }
    return m;
}

// Chair: seat at 0.45 m, four legs, a backrest slab.
inline Mesh make_chair(double cx, double cz, const std::string& name) {
    const double w = 0.45, d = 0.45, seat_h = 0.45, slab = 0.05, leg = 0.04, back_h = 0.9;
    Mesh m;
    m.object_name = name;
    append_box_to(m, Vec3{cx - w / 2, seat_h - slab, cz - d / 2},
                  Vec3{cx + w / 2, seat_h, cz + d / 2});
    for (int sx : {-1, 1})
        for (int sz : {-1, 1}) {
            const double x0 = cx + sx * w / 2, z0 = cz + sz * d / 2;
            const Vec3 a{x0, 0, z0}, b{x0 - sx * leg, seat_h - slab, z0 - sz * leg};
            append_box_to(m, a.cwiseMin(b), a.cwiseMax(b));
        }
    append_box_to(m, Vec3{cx - w / 2, seat_h, cz + d / 2 - slab},
                  Vec3{cx + w / 2, back_h, cz + d / 2});
    return m;
}

struct Footprint {
    double x0, z0, x1, z1;
    bool overlaps(const Footprint& o) const {
        return x0 <= o.x1 && o.x0 <= x1 && z0 <= o.z1 && o.z0 <= z1;
    }
};

} // namespace detail

inline Scene generate_room(const RoomSpec& spec) {
    spec.validate();
    const double w = spec.extents.x(), h = spec.extents.y(), d = spec.extents.z();

    std::vector<Mesh> meshes;
    std::vector<std::uint8_t> labels;
    const ClassTaxonomy tax = default_taxonomy();

    auto add = [&](Mesh m, const char* cls) {
        labels.push_back(tax.id_of(cls));
        meshes.push_back(std::move(m));
    };

    using detail::make_quad;
    add(make_quad({0, 0, 0}, {w, 0, 0}, {w, 0, d}, {0, 0, d}, "floor"), "floor");
    add(make_quad({0, h, 0}, {0, h, d}, {w, h, d}, {w, h, 0}, "ceiling"), "ceiling");
    add(make_quad({0, 0, 0}, {0, h, 0}, {w, h, 0}, {w, 0, 0}, "wall_n"), "wall");
    add(make_quad({0, 0, d}, {w, 0, d}, {w, h, d}, {0, h, d}, "wall_s"), "wall");
    add(make_quad({0, 0, 0}, {0, 0, d}, {0, h, d}, {0, h, 0}, "wall_w"), "wall");
    add(make_quad({w, 0, 0}, {w, h, 0}, {w, h, d}, {w, 0, d}, "wall_e"), "wall");

    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> ux(0.0, 1.0);
    std::vector<detail::Footprint> placed;

    // margin keeps object footprints off the walls
    auto place = [&](double half_w, double half_d) -> std::pair<double, double> {
        const double margin = 0.1;
        for (int attempt = 0; attempt < 1000; ++attempt) {
            const double cx = margin + half_w + ux(rng) * (w - 2 * (margin + half_w));
            const double cz = margin + half_d + ux(rng) * (d - 2 * (margin + half_d));
            detail::Footprint fp{cx - half_w, cz - half_d, cx + half_w, cz + half_d};
            bool ok = true;
            for (const auto& other : placed)
                if (fp.overlaps(other)) { ok = false; break; }
            if (ok) {
                placed.push_back(fp);
                return {cx, cz};
            }
        }
        throw RoomPlacementError("could not place object: room too small for requested counts");
    };

    for (int i = 0; i < spec.n_tables; ++i) {
        auto [cx, cz] = place(0.6, 0.35);
        add(detail::make_table(cx, cz, "table_" + std::to_string(i)), "table");
    }
    for (int i = 0; i < spec.n_chairs; ++i) {
        auto [cx, cz] = place(0.225, 0.225);
        add(detail::make_chair(cx, cz, "chair_" + std::to_string(i)), "chair");
    }

    Scene scene;
    scene.meshes = std::move(meshes);
    scene.labels = std::move(labels);
    scene.recompute_bounds();
    return scene;
}

} // namespace voxseg
