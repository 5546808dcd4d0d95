#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "voxseg/pipeline.hpp"

using namespace voxseg;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag)
        : path(fs::temp_directory_path() / ("voxseg_test_" + tag + "_" +
                                            std::to_string(::getpid()))) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE(f.good());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

// small-but-real configuration so pipeline tests stay fast
RunConfig tiny_config(std::uint64_t seed) {
    RunConfig cfg;
    cfg.image_width = 80;
    cfg.image_height = 60;
    cfg.n_frames = 6;
    cfg.n_chairs = 1;
    cfg.n_tables = 1;
    cfg.grid_resolution = 48;
    cfg.net_layers = 2;
    cfg.net_hidden = 6;
    cfg.net_kernel = 3;
    cfg.epochs = 3;
    cfg.seed = seed;
    return cfg;
}

} // namespace

TEST_CASE("config: round-trip, comments, unknown keys, validation") {
    RunConfig cfg = tiny_config(7);
    cfg.learning_rate = 0.0125;
    cfg.pose_source = "icp";
    std::stringstream ss;
    write_config(cfg, ss);
    const RunConfig back = parse_config(ss);
    std::stringstream ss2;
    write_config(back, ss2);
    std::stringstream orig;
    write_config(cfg, orig);
    CHECK(ss2.str() == orig.str());

    std::istringstream commented("# a comment\n  n_frames = 9  # trailing\n\nseed=4\n");
    const RunConfig c = parse_config(commented);
    CHECK(c.n_frames == 9);
    CHECK(c.seed == 4);

    std::istringstream unknown("n_framez = 9\n");
    CHECK_THROWS_AS(parse_config(unknown), ConfigError);
    std::istringstream noeq("n_frames 9\n");
    CHECK_THROWS_AS(parse_config(noeq), ConfigError);
    std::istringstream badval("n_frames = banana\n");
    CHECK_THROWS_AS(parse_config(badval), ConfigError);
    std::istringstream badpose("pose_source = slam\n");
    CHECK_THROWS_AS(parse_config(badpose), ConfigError);
    std::istringstream evenk("net_kernel = 4\n");
    CHECK_THROWS_AS(parse_config(evenk), ConfigError);
    CHECK_THROWS_AS(load_config_file("/nonexistent/config.txt"), ConfigError);
}

TEST_CASE("cmd_generate: expected files, byte-identical reruns") {
    const RunConfig cfg = tiny_config(3);
    TempDir a("gen_a"), b("gen_b");
    pipeline::cmd_generate(cfg, a.path);
    pipeline::cmd_generate(cfg, b.path);

    const char* files[] = {"scene.obj", "scene.annotations.txt", "taxonomy.txt", "config.txt",
                           "frame_00000.depth.pgm", "frame_00000.label.pgm",
                           "frame_00000.pose.txt", "frame_00005.depth.pgm"};
    for (const char* f : files) {
        CAPTURE(f);
        REQUIRE(fs::exists(a.path / f));
        CHECK(slurp(a.path / f) == slurp(b.path / f));
    }
    CHECK_FALSE(fs::exists(a.path / "frame_00006.depth.pgm"));

    // scene and sidecar reload into a consistent labeled scene
    std::ifstream obj(a.path / "scene.obj");
    auto meshes = parse_obj(obj);
    std::ifstream ann(a.path / "scene.annotations.txt");
    std::ifstream taxf(a.path / "taxonomy.txt");
    const Scene scene =
        attach_labels(meshes, parse_annotation_sidecar(ann), parse_taxonomy(taxf));
    CHECK(scene.meshes.size() == 8); // 6 room surfaces + chair + table

    RunConfig bad = cfg;
    bad.n_frames = 0;
    TempDir c("gen_c");
    CHECK_THROWS_AS(pipeline::cmd_generate(bad, c.path), pipeline::PipelineError);
}

TEST_CASE("cmd_generate: different seeds give different scenes") {
    TempDir a("seed_a"), b("seed_b");
    pipeline::cmd_generate(tiny_config(1), a.path);
    pipeline::cmd_generate(tiny_config(2), b.path);
    CHECK(slurp(a.path / "scene.obj") != slurp(b.path / "scene.obj"));
}

TEST_CASE("train and run: end-to-end on a tiny dataset") {
    const RunConfig cfg = tiny_config(11);
    TempDir data("e2e_data"), model("e2e_model"), out("e2e_out");
    pipeline::cmd_generate(cfg, data.path);

    const pipeline::TrainReport tr = pipeline::cmd_train(cfg, {data.path}, model.path);
    REQUIRE(tr.layers.size() == 2);
    for (const auto& l : tr.layers) {
        CHECK(l.final_loss <= l.initial_loss);
        CHECK(l.train_accuracy >= 0.0);
        CHECK(l.train_accuracy <= 1.0);
    }
    REQUIRE(fs::exists(model.path / "weights.bin"));
    REQUIRE(fs::exists(model.path / "weights.layer1.bin"));
    REQUIRE(fs::exists(model.path / "weights.layer2.bin"));
    const auto report_json = nlohmann::json::parse(slurp(model.path / "train_report.json"));
    CHECK(report_json["layers"].size() == 2);

    const pipeline::RunReport rr =
        pipeline::cmd_run(cfg, data.path, model.path / "weights.bin", out.path);
    CHECK(rr.frames_processed == cfg.n_frames);
    CHECK_FALSE(rr.tracking_lost);
    REQUIRE(rr.per_frame_accuracy.size() == (std::size_t)cfg.n_frames);
    for (double a : rr.per_frame_accuracy) {
        CHECK(a >= 0.0);
        CHECK(a <= 1.0);
    }
    CHECK(rr.fused_voxel_accuracy > 0.0);
    CHECK(rr.mean_frame_voxel_accuracy > 0.0);
    REQUIRE(fs::exists(out.path / "tsdf.bin"));
    REQUIRE(fs::exists(out.path / "label_volume.bin"));
    REQUIRE(fs::exists(out.path / "metrics.json"));
    REQUIRE(fs::exists(out.path / "frame_00000.pred.pgm"));
    REQUIRE(fs::exists(out.path / "frame_00005.pred.ppm"));
    const auto metrics = nlohmann::json::parse(slurp(out.path / "metrics.json"));
    CHECK(metrics["frames_processed"] == cfg.n_frames);
    CHECK(metrics["mean_frame_accuracy"].get<double>() ==
          Catch::Approx(rr.mean_frame_accuracy));

    // saved volumes reload
    std::ifstream tf(out.path / "tsdf.bin", std::ios::binary);
    const TsdfVolume tsdf = load_tsdf(tf);
    CHECK(tsdf.geometry().dims[0] == cfg.grid_resolution);
    std::ifstream lf(out.path / "label_volume.bin", std::ios::binary);
    const LabelVolume lv = load_label_volume(lf);
    CHECK(lv.geometry() == tsdf.geometry());

    SECTION("icp pose source reproduces ground-truth tracking closely") {
        RunConfig icp_cfg = cfg;
        icp_cfg.pose_source = "icp";
        TempDir icp_out("e2e_icp");
        const pipeline::RunReport ir =
            pipeline::cmd_run(icp_cfg, data.path, model.path / "weights.bin", icp_out.path);
        CHECK(ir.frames_processed == cfg.n_frames);
        CHECK_FALSE(ir.tracking_lost);
    }

    SECTION("rerunning cmd_run is byte-identical") {
        TempDir out2("e2e_out2");
        pipeline::cmd_run(cfg, data.path, model.path / "weights.bin", out2.path);
        CHECK(slurp(out.path / "metrics.json") == slurp(out2.path / "metrics.json"));
        CHECK(slurp(out.path / "label_volume.bin") == slurp(out2.path / "label_volume.bin"));
        CHECK(slurp(out.path / "frame_00003.pred.pgm") ==
              slurp(out2.path / "frame_00003.pred.pgm"));
    }
}

TEST_CASE("cmd_train: resume from a checkpoint reproduces the full run") {
    const RunConfig cfg = tiny_config(13);
    TempDir data("resume_data"), full("resume_full"), part("resume_part");
    pipeline::cmd_generate(cfg, data.path);

    pipeline::cmd_train(cfg, {data.path}, full.path);

    // fresh directory seeded with only the layer-1 checkpoint
    fs::copy_file(full.path / "weights.layer1.bin", part.path / "weights.layer1.bin");
    pipeline::cmd_train(cfg, {data.path}, part.path, 2);
    CHECK(slurp(full.path / "weights.bin") == slurp(part.path / "weights.bin"));

    TempDir empty("resume_empty");
    CHECK_THROWS_AS(pipeline::cmd_train(cfg, {data.path}, empty.path, 2),
                    pipeline::PipelineError);
}

TEST_CASE("cmd_eval: metrics and renderings") {
    TempDir dir("eval");
    LabelImage a(16, 12, 0);
    for (int v = 0; v < 12; ++v)
        for (int u = 0; u < 16; ++u) a.at(u, v) = (std::uint8_t)((u + v) % 5);
    {
        std::ofstream f(dir.path / "a.pgm", std::ios::binary);
        write_label_pgm(a, f);
    }
    const SegMetrics self = pipeline::cmd_eval(dir.path / "a.pgm", dir.path / "a.pgm", dir.path);
    CHECK(self.accuracy == 1.0);
    CHECK(self.support == 16 * 12);
    REQUIRE(fs::exists(dir.path / "metrics.json"));
    const auto j = nlohmann::json::parse(slurp(dir.path / "metrics.json"));
    CHECK(j["pixel_accuracy"] == 1.0);
    CHECK(j["per_class_accuracy"]["floor"] == 1.0);

    // palette rendering: header plus fixed colors
    const std::string ppm = slurp(dir.path / "predicted.ppm");
    CHECK(ppm.rfind("P6\n16 12\n255\n", 0) == 0);
    // pixel (0,0) has class 0: floor green
    const std::size_t off = std::string("P6\n16 12\n255\n").size();
    CHECK((std::uint8_t)ppm[off] == 106);
    CHECK((std::uint8_t)ppm[off + 1] == 168);
    CHECK((std::uint8_t)ppm[off + 2] == 79);

    LabelImage small(8, 12, 0);
    {
        std::ofstream f(dir.path / "small.pgm", std::ios::binary);
        write_label_pgm(small, f);
    }
    CHECK_THROWS_AS(pipeline::cmd_eval(dir.path / "a.pgm", dir.path / "small.pgm", dir.path),
                    pipeline::PipelineError);
    CHECK_THROWS_AS(pipeline::cmd_eval(dir.path / "missing.pgm", dir.path / "a.pgm", dir.path),
                    pipeline::PipelineError);
}

TEST_CASE("cli: exit codes for usage, config, and runtime failures") {
    const std::string cli = VOXSEG_CLI_PATH;
    TempDir dir("cli");
    auto run = [&](const std::string& args) {
        const std::string cmd = cli + " " + args + " > /dev/null 2>&1";
        const int status = std::system(cmd.c_str());
        return WEXITSTATUS(status);
    };

    CHECK(run("") == 1);                      // no subcommand
    CHECK(run("frobnicate") == 1);            // unknown subcommand
    CHECK(run("generate") == 1);              // missing --out
    {
        std::ofstream f(dir.path / "bad.cfg");
        f << "definitely_not_a_key = 1\n";
    }
    CHECK(run("generate --config " + (dir.path / "bad.cfg").string() + " --out " +
              (dir.path / "x").string()) == 1);
    CHECK(run("run " + (dir.path / "nodir").string() + " " +
              (dir.path / "noweights.bin").string() + " --out " +
              (dir.path / "y").string()) == 2); // runtime failure

    {
        std::ofstream f(dir.path / "ok.cfg");
        RunConfig cfg = tiny_config(5);
        cfg.n_frames = 2;
        write_config(cfg, f);
    }
    CHECK(run("generate --config " + (dir.path / "ok.cfg").string() + " --out " +
              (dir.path / "gen").string()) == 0);
    CHECK(fs::exists(dir.path / "gen" / "frame_00001.depth.pgm"));

    // --seed overrides the config seed, changing the scene
    CHECK(run("generate --config " + (dir.path / "ok.cfg").string() + " --seed 99 --out " +
              (dir.path / "gen2").string()) == 0);
    CHECK(slurp(dir.path / "gen" / "scene.obj") != slurp(dir.path / "gen2" / "scene.obj"));

    CHECK(run("eval " + (dir.path / "gen" / "frame_00000.label.pgm").string() + " " +
              (dir.path / "gen" / "frame_00000.label.pgm").string() + " --out " +
              (dir.path / "ev").string()) == 0);
}
