#include <catch_amalgamated.hpp>

#include <sstream>

#include "voxseg/render.hpp"
#include "voxseg/roomgen.hpp"
#include "voxseg/tsdf.hpp"

using namespace voxseg;

namespace {

// fronto-parallel wall at z meters, camera at origin looking down +Z
DepthImage constant_depth(const CameraIntrinsics& intr, std::uint16_t mm) {
    return DepthImage(intr.width, intr.height, mm);
}

} // namespace

TEST_CASE("grid_for_bounds: cubic grid with margin") {
    Aabb bounds;
    bounds.extend(Vec3{0, 0, 0});
    bounds.extend(Vec3{4, 2.5, 4});
    const GridGeometry g = grid_for_bounds(bounds, 128, 0.5);
    CHECK(g.dims == std::array<int, 3>{128, 128, 128});
    CHECK(g.voxel_size == Catch::Approx(5.0 / 128));
    // grid is centered on the scene and covers bounds plus margin
    const Vec3 span = g.voxel_size * Vec3::Constant(128);
    CHECK(((g.origin + 0.5 * span) - bounds.center()).norm() < 1e-12);
    CHECK(g.origin.x() <= -0.5);
    CHECK(g.origin.x() + span.x() >= 4.5);
}

TEST_CASE("GridGeometry: voxel_of inverts voxel_center") {
    GridGeometry g;
    g.origin = Vec3{-1, 0.25, 2};
    g.voxel_size = 0.05;
    g.dims = {16, 8, 12};
    for (int z = 0; z < g.dims[2]; z += 3)
        for (int y = 0; y < g.dims[1]; y += 2)
            for (int x = 0; x < g.dims[0]; x += 5) {
                const auto vox = g.voxel_of(g.voxel_center(x, y, z));
                REQUIRE(vox.has_value());
                CHECK(*vox == std::array<int, 3>{x, y, z});
            }
    CHECK_FALSE(g.voxel_of(Vec3{-1.01, 0.3, 2.1}).has_value());
}

TEST_CASE("integrate: planar wall produces the analytic truncated SDF") {
    GridGeometry g;
    g.origin = Vec3{-1.28, -1.28, 0.72};
    g.voxel_size = 0.02;
    g.dims = {128, 128, 128}; // z spans [0.72, 3.28], wall at z = 2
    TsdfVolume volume(g);
    const double mu = volume.truncation();
    CHECK(mu == Catch::Approx(4 * g.voxel_size));

    const CameraIntrinsics intr = vga_intrinsics();
    volume.integrate(constant_depth(intr, 2000), intr, Pose{});

    // oracle: voxels that project into the image hold clamp((2 - z)/mu, -1, 1),
    // except beyond the far side of the band where they stay unobserved
    int checked = 0;
    for (int z = 0; z < g.dims[2]; z += 7)
        for (int y = 40; y < 90; y += 9)
            for (int x = 40; x < 90; x += 9) {
                const Vec3 c = g.voxel_center(x, y, z);
                const double u = intr.fx * c.x() / c.z() + intr.cx;
                const double v = intr.fy * c.y() / c.z() + intr.cy;
                if (u < 0 || u > intr.width - 1 || v < 0 || v > intr.height - 1) continue;
                const double sdf = 2.0 - c.z();
                if (sdf < -mu) {
                    CHECK(volume.weight_at(x, y, z) == 0.0f);
                    CHECK(volume.tsdf_at(x, y, z) == 1.0f);
                } else {
                    CHECK(volume.weight_at(x, y, z) == 1.0f);
                    CHECK(volume.tsdf_at(x, y, z) ==
                          Catch::Approx(std::clamp(sdf / mu, -1.0, 1.0)).margin(1e-6));
                }
                ++checked;
            }
    CHECK(checked > 200);
}

TEST_CASE("integrate: weighted average and weight cap") {
    GridGeometry g;
    g.origin = Vec3{-0.5, -0.5, 1.5};
    g.voxel_size = 0.05;
    g.dims = {20, 20, 20};
    TsdfVolume volume(g);
    const CameraIntrinsics intr = vga_intrinsics();

    volume.integrate(constant_depth(intr, 2000), intr, Pose{});
    TsdfVolume twice = volume;
    twice.integrate(constant_depth(intr, 2000), intr, Pose{});
    for (int z = 0; z < 20; ++z)
        for (int y = 8; y < 12; ++y)
            for (int x = 8; x < 12; ++x) {
                if (volume.weight_at(x, y, z) == 0) continue;
                // same observation twice: value unchanged, weight doubled
                CHECK(twice.tsdf_at(x, y, z) == Catch::Approx(volume.tsdf_at(x, y, z)));
                CHECK(twice.weight_at(x, y, z) == 2 * volume.weight_at(x, y, z));
            }

    // conflicting observation pulls toward the weighted mean
    TsdfVolume mixed = volume;
    mixed.integrate(constant_depth(intr, 2050), intr, Pose{}, 3.0f);
    const double mu = volume.truncation();
    bool any = false;
    for (int z = 0; z < 20; ++z) {
        const Vec3 c = g.voxel_center(10, 10, z);
        const double f1 = std::clamp((2.0 - c.z()) / mu, -1.0, 1.0);
        const double f2 = std::clamp((2.05 - c.z()) / mu, -1.0, 1.0);
        if ((2.0 - c.z()) < -mu || (2.05 - c.z()) < -mu) continue;
        CHECK(mixed.tsdf_at(10, 10, z) == Catch::Approx((f1 + 3 * f2) / 4).margin(1e-5));
        any = true;
    }
    CHECK(any);

    TsdfVolume capped(g);
    for (int i = 0; i < 105; ++i) capped.integrate(constant_depth(intr, 2000), intr, Pose{});
    for (float w : capped.weight_data()) CHECK(w <= TsdfVolume::kMaxWeight);

    CHECK_THROWS_AS(volume.integrate(constant_depth(intr, 2000), intr, Pose{}, 0.0f),
                    std::invalid_argument);
}

TEST_CASE("sample: trilinear interpolation and observed flag") {
    GridGeometry g;
    g.voxel_size = 0.1;
    g.dims = {4, 4, 4};
    TsdfVolume volume(g);
    // linear field f = x voxel index / 3 over the grid
    for (int z = 0; z < 4; ++z)
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x)
                volume.tsdf_data()[g.linear_index(x, y, z)] = (float)x / 3.0f;

    // midway between voxel centers (1,1,1) and (2,1,1)
    const Vec3 p = 0.5 * (g.voxel_center(1, 1, 1) + g.voxel_center(2, 1, 1));
    bool observed = true;
    CHECK(volume.sample(p, &observed) == Catch::Approx(0.5));
    CHECK_FALSE(observed); // all weights still zero

    volume.weight_data()[g.linear_index(1, 1, 1)] = 1.0f;
    volume.sample(p, &observed);
    CHECK(observed);

    // outside the sampling domain
    CHECK(volume.sample(Vec3{-1, 0, 0}, &observed) == 1.0f);
    CHECK_FALSE(observed);
}

TEST_CASE("raycast: wall depth and camera-facing normals") {
    GridGeometry g;
    g.origin = Vec3{-1.28, -1.28, 0.72};
    g.voxel_size = 0.02;
    g.dims = {128, 128, 128};
    TsdfVolume volume(g);
    const CameraIntrinsics intr = scaled_intrinsics(160, 120);
    volume.integrate(constant_depth(intr, 2000), intr, Pose{});

    const RaycastResult rc = raycast(volume, intr, Pose{});
    int valid = 0;
    for (int v = 30; v < 90; ++v)
        for (int u = 40; u < 120; ++u) {
            REQUIRE(rc.depth.at(u, v) != 0);
            CHECK(std::abs((int)rc.depth.at(u, v) - 2000) <= 2); // within interpolation error
            const std::size_t pix = (std::size_t)v * intr.width + u;
            REQUIRE(rc.normal_valid[pix] == 1);
            CHECK((rc.normals[pix] - Vec3{0, 0, -1}).norm() < 0.05);
            REQUIRE(rc.voxel[pix][0] >= 0);
            const Vec3 c = g.voxel_center(rc.voxel[pix][0], rc.voxel[pix][1], rc.voxel[pix][2]);
            CHECK(std::abs(c.z() - 2.0) < 2 * g.voxel_size);
            ++valid;
        }
    CHECK(valid == 60 * 80);
}

TEST_CASE("raycast: empty volume yields no crossings") {
    GridGeometry g;
    g.dims = {32, 32, 32};
    const TsdfVolume volume(g);
    const CameraIntrinsics intr = scaled_intrinsics(32, 24);
    const RaycastResult rc = raycast(volume, intr, Pose{});
    for (auto d : rc.depth.data()) CHECK(d == 0);
}

// fuse rendered views of a room and compare a held-out raycast against the
// renderer, which is an independent geometric oracle
TEST_CASE("fused room: held-out raycast matches rendered depth") {
    RoomSpec spec;
    spec.n_chairs = 1;
    spec.n_tables = 1;
    spec.seed = 13;
    const Scene scene = generate_room(spec);
    const SceneIndex index(scene);
    const CameraIntrinsics intr = scaled_intrinsics(160, 120);

    const GridGeometry g = grid_for_bounds(scene.bounds, 96, 0.3);
    TsdfVolume volume(g);
    OrbitParams orbit;
    orbit.radius = 1.4;
    orbit.height = 0.4;
    const Trajectory traj = generate_trajectory(scene.bounds, 13, orbit);
    for (std::size_t i = 0; i + 1 < traj.size(); ++i)
        volume.integrate(render_frame(index, intr, traj[i]).depth, intr, traj[i]);

    const Pose held_out = traj.back();
    const RenderedFrame truth = render_frame(index, intr, held_out);
    const RaycastResult rc = raycast(volume, intr, held_out);

    int within = 0, total = 0;
    for (int v = 0; v < intr.height; ++v)
        for (int u = 0; u < intr.width; ++u) {
            if (truth.depth.at(u, v) == 0 || rc.depth.at(u, v) == 0) continue;
            ++total;
            const double err = std::abs((int)truth.depth.at(u, v) - (int)rc.depth.at(u, v)) * 1e-3;
            if (err <= 2 * g.voxel_size) ++within;
        }
    REQUIRE(total > (int)(0.8 * intr.width * intr.height));
    CHECK((double)within / total >= 0.95);
}

TEST_CASE("tsdf dump round-trips byte-identically") {
    GridGeometry g;
    g.origin = Vec3{-0.5, -0.5, 1.5};
    g.voxel_size = 0.05;
    g.dims = {20, 18, 16};
    TsdfVolume volume(g, 0.17);
    const CameraIntrinsics intr = vga_intrinsics();
    volume.integrate(constant_depth(intr, 2000), intr, Pose{});

    std::stringstream ss;
    save_tsdf(volume, ss);
    const std::string bytes = ss.str();
    TsdfVolume back = load_tsdf(ss);
    CHECK(back.geometry() == g);
    CHECK(back.truncation() == 0.17);
    CHECK(back.tsdf_data() == volume.tsdf_data());
    CHECK(back.weight_data() == volume.weight_data());
    std::stringstream ss2;
    save_tsdf(back, ss2);
    CHECK(ss2.str() == bytes);

    std::istringstream bad("NOTATSDF");
    CHECK_THROWS_AS(load_tsdf(bad), FileFormatError);
    std::istringstream truncated(bytes.substr(0, 64));
    CHECK_THROWS_AS(load_tsdf(truncated), FileFormatError);
}
