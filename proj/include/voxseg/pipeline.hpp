#pragma once

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "voxseg/config.hpp"
#include "voxseg/dhac.hpp"
#include "voxseg/fusion.hpp"
#include "voxseg/gravity.hpp"
#include "voxseg/icp.hpp"
#include "voxseg/io.hpp"
#include "voxseg/render.hpp"
#include "voxseg/roomgen.hpp"
#include "voxseg/segnet.hpp"
#include "voxseg/tsdf.hpp"

namespace voxseg::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

struct PipelineError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Fixed label palette for visualizations (RGB), class order of the default
// taxonomy; void renders black.
inline const std::array<std::array<std::uint8_t, 3>, 5> kPalette = {{
    {106, 168, 79},  // floor: green
    {217, 217, 217}, // ceiling: light gray
    {203, 165, 124}, // wall: tan
    {120, 72, 36},   // table: brown
    {204, 0, 0},     // chair: red
}};

inline void write_label_ppm(const LabelImage& labels, std::ostream& out) {
    out << "P6\n" << labels.width() << " " << labels.height() << "\n255\n";
    for (std::uint8_t l : labels.data()) {
        std::array<std::uint8_t, 3> rgb = {0, 0, 0};
        if (l < kPalette.size()) rgb = kPalette[l];
        out.write(reinterpret_cast<const char*>(rgb.data()), 3);
    }
}

inline CameraIntrinsics intrinsics_for(const RunConfig& cfg) {
    return scaled_intrinsics(cfg.image_width, cfg.image_height);
}

inline RoomSpec room_spec_for(const RunConfig& cfg) {
    RoomSpec spec;
    spec.extents = Vec3{cfg.room_width, cfg.room_height, cfg.room_depth};
    spec.n_chairs = cfg.n_chairs;
    spec.n_tables = cfg.n_tables;
    spec.seed = cfg.seed;
    return spec;
}

inline Trajectory trajectory_for(const RunConfig& cfg, const Aabb& bounds) {
    OrbitParams orbit;
    orbit.radius = cfg.orbit_radius;
    orbit.height = cfg.orbit_height;
    return generate_trajectory(bounds, cfg.n_frames, orbit);
}

inline void echo_config(const RunConfig& cfg, const fs::path& out_dir) {
    std::ofstream f(out_dir / "config.txt");
    write_config(cfg, f);
}

// generate: deterministic dataset on disk (scene + frame_%05d depth/label/pose).
inline void cmd_generate(const RunConfig& cfg, const fs::path& out_dir) {
    cfg.validate();
    if (cfg.n_frames < 1) throw PipelineError("generate: n_frames must be >= 1");
    fs::create_directories(out_dir);

    const Scene scene = generate_room(room_spec_for(cfg));
    const ClassTaxonomy tax = default_taxonomy();
    {
        std::ofstream f(out_dir / "scene.obj");
        serialize_obj(scene.meshes, f);
    }
    {
        std::map<std::string, std::string> annotations;
        for (std::size_t i = 0; i < scene.meshes.size(); ++i)
            annotations[scene.meshes[i].object_name] = tax.name_of(scene.labels[i]);
        std::ofstream f(out_dir / "scene.annotations.txt");
        write_annotation_sidecar(annotations, f);
    }
    {
        std::ofstream f(out_dir / "taxonomy.txt");
        write_taxonomy(tax, f);
    }

    const CameraIntrinsics intr = intrinsics_for(cfg);
    const Trajectory trajectory = trajectory_for(cfg, scene.bounds);
    const SceneIndex index(scene);
    for (int i = 0; i < cfg.n_frames; ++i) {
        const RenderedFrame frame = render_frame(index, intr, trajectory[i]);
        save_frame(out_dir, i, frame.depth, frame.label, intr, trajectory[i]);
    }
    echo_config(cfg, out_dir);
}

// Gravity frame estimated from the depth data itself: normals and points
// gathered from frames until enough samples are collected.
inline GravityFrame estimate_gravity(const std::vector<LoadedFrame>& frames,
                                     const std::vector<Pose>& poses,
                                     std::size_t min_samples = 1000) {
    std::vector<Vec3> points, normals;
    for (std::size_t i = 0; i < frames.size() && normals.size() < 4 * min_samples; ++i) {
        const NormalImage nimg = compute_normals(frames[i].depth, frames[i].intrinsics);
        const Pose& pose = poses[i];
        for (int v = 0; v < nimg.height; v += 2)
            for (int u = 0; u < nimg.width; u += 2) {
                if (!nimg.is_valid(u, v)) continue;
                normals.push_back(pose.rotation * nimg.at(u, v));
                points.push_back(
                    pose.to_world(backproject(u, v, frames[i].depth.at(u, v),
                                              frames[i].intrinsics)));
            }
    }
    return align_gravity(points, normals);
}

inline std::vector<LoadedFrame> load_sequence(const fs::path& dir) {
    const int n = count_frames(dir);
    if (n == 0) throw PipelineError("no frames found in " + dir.string());
    std::vector<LoadedFrame> frames;
    frames.reserve((std::size_t)n);
    for (int i = 0; i < n; ++i) frames.push_back(load_frame(dir, i));
    return frames;
}

struct TrainReport {
    std::vector<LayerTrainReport> layers;

    json to_json() const {
        json j;
        j["layers"] = json::array();
        for (const auto& l : layers)
            j["layers"].push_back({{"initial_loss", l.initial_loss},
                                   {"final_loss", l.final_loss},
                                   {"train_accuracy", l.train_accuracy}});
        return j;
    }
};

// train: layer-wise training over one or more generated sequences. Resume
// retrains layers >= resume_from_layer starting from a saved checkpoint.
inline TrainReport cmd_train(const RunConfig& cfg, const std::vector<fs::path>& dataset_dirs,
                             const fs::path& out_dir, int resume_from_layer = 1) {
    cfg.validate();
    if (dataset_dirs.empty()) throw PipelineError("train: no dataset directories");
    fs::create_directories(out_dir);

    std::vector<TrainSample> samples;
    for (const auto& dir : dataset_dirs) {
        const std::vector<LoadedFrame> frames = load_sequence(dir);
        std::vector<Pose> poses;
        for (const auto& f : frames) poses.push_back(f.pose);
        const GravityFrame gravity = estimate_gravity(frames, poses);
        for (const auto& f : frames) {
            TrainSample s;
            s.features = assemble_dhac(f.depth, f.intrinsics, f.pose, gravity);
            s.labels = f.label;
            samples.push_back(std::move(s));
        }
    }

    StackConfig net;
    net.layers = cfg.net_layers;
    net.hidden = cfg.net_hidden;
    net.kernel = cfg.net_kernel;
    net.classes = (int)default_taxonomy().size();

    StackF stack = StackF::create(net, cfg.seed);
    if (resume_from_layer > 1) {
        const fs::path ckpt = out_dir / ("weights.layer" + std::to_string(resume_from_layer - 1) +
                                         ".bin");
        std::ifstream f(ckpt, std::ios::binary);
        if (!f) throw PipelineError("train: missing checkpoint " + ckpt.string());
        stack = load_weights(f);
        if (!(stack.config == net)) throw PipelineError("train: checkpoint config mismatch");
    }

    TrainConfig tc;
    tc.learning_rate = cfg.learning_rate;
    tc.epochs = cfg.epochs;
    tc.batch_pixels = cfg.batch_pixels;
    tc.seed = cfg.seed;

    TrainReport report;
    for (int i = 1; i < resume_from_layer; ++i) report.layers.push_back({});
    for (int i = resume_from_layer; i <= net.layers; ++i) {
        report.layers.push_back(train_layer(stack, i, samples, tc));
        std::ofstream f(out_dir / ("weights.layer" + std::to_string(i) + ".bin"),
                        std::ios::binary);
        save_weights(stack, f);
    }
    {
        std::ofstream f(out_dir / "weights.bin", std::ios::binary);
        save_weights(stack, f);
    }
    {
        std::ofstream f(out_dir / "train_report.json");
        f << report.to_json().dump(2) << "\n";
    }
    echo_config(cfg, out_dir);
    return report;
}

struct RunReport {
    std::vector<double> per_frame_accuracy;
    double mean_frame_accuracy = 0;
    double fused_voxel_accuracy = 0;
    double mean_frame_voxel_accuracy = 0;
    bool tracking_lost = false;
    int frames_processed = 0;

    json to_json() const {
        json j;
        j["per_frame_accuracy"] = per_frame_accuracy;
        j["mean_frame_accuracy"] = mean_frame_accuracy;
        j["fused_voxel_accuracy"] = fused_voxel_accuracy;
        j["mean_frame_voxel_accuracy"] = mean_frame_voxel_accuracy;
        j["tracking_lost"] = tracking_lost;
        j["frames_processed"] = frames_processed;
        return j;
    }
};

// World-space bounds of the observed geometry, from subsampled backprojections.
inline Aabb sequence_bounds(const std::vector<LoadedFrame>& frames) {
    Aabb box;
    for (const auto& f : frames)
        for (int v = 0; v < f.depth.height(); v += 4)
            for (int u = 0; u < f.depth.width(); u += 4) {
                const std::uint16_t d = f.depth.at(u, v);
                if (d == 0) continue;
                box.extend(f.pose.to_world(backproject(u, v, d, f.intrinsics)));
            }
    if (box.empty()) throw PipelineError("sequence contains no valid depth");
    return box;
}

// run: per frame integrate -> raycast -> DHAC -> predict -> fuse. Pose source
// is ground truth or ICP tracking per config. On tracking loss, partial
// outputs and metrics are written before the error propagates.
inline RunReport cmd_run(const RunConfig& cfg, const fs::path& sequence_dir,
                         const fs::path& weights_path, const fs::path& out_dir) {
    cfg.validate();
    fs::create_directories(out_dir);
    const std::vector<LoadedFrame> frames = load_sequence(sequence_dir);
    const CameraIntrinsics intr = frames.front().intrinsics;

    StackF stack = [&] {
        std::ifstream f(weights_path, std::ios::binary);
        if (!f) throw PipelineError("run: cannot open weights " + weights_path.string());
        return load_weights(f);
    }();
    const int num_classes = stack.config.classes;

    const Aabb bounds = sequence_bounds(frames);
    const GridGeometry grid = grid_for_bounds(bounds, cfg.grid_resolution, cfg.grid_margin);
    TsdfVolume tsdf(grid);
    LabelVolume label_volume(grid, num_classes);

    // gravity from the raw first frames at their file poses
    std::vector<Pose> file_poses;
    for (const auto& f : frames) file_poses.push_back(f.pose);
    const GravityFrame gravity = estimate_gravity(frames, file_poses);

    const bool use_icp = cfg.pose_source == "icp";
    RunReport report;
    std::vector<Pose> est_poses;
    // per frame: voxel -> argmax label of that frame's projected distribution
    std::vector<std::map<std::size_t, std::uint8_t>> frame_voxel_labels;

    auto finalize = [&]() {
        {
            std::ofstream f(out_dir / "tsdf.bin", std::ios::binary);
            save_tsdf(tsdf, f);
        }
        {
            std::ofstream f(out_dir / "label_volume.bin", std::ios::binary);
            save_label_volume(label_volume, f);
        }
        // voxel ground truth from the GT label files over the processed poses
        std::vector<DepthImage> gt_depths;
        std::vector<LabelImage> gt_labels;
        Trajectory gt_poses;
        for (int i = 0; i < report.frames_processed; ++i) {
            gt_depths.push_back(frames[(std::size_t)i].depth);
            gt_labels.push_back(frames[(std::size_t)i].label);
            gt_poses.push_back(frames[(std::size_t)i].pose);
        }
        if (report.frames_processed > 0) {
            const auto gt_voxels = ground_truth_volume(gt_depths, gt_labels, intr, gt_poses,
                                                       grid, num_classes);
            const auto fused = label_volume.extract_labels();
            report.fused_voxel_accuracy = evaluate(fused, gt_voxels, num_classes).accuracy;
            // each frame projected alone, scored on the voxels it touches
            double sum = 0;
            std::size_t n = 0;
            for (const auto& fv : frame_voxel_labels) {
                std::size_t correct = 0, total = 0;
                for (const auto& [vox, lbl] : fv) {
                    if (gt_voxels[vox] == kVoidLabel) continue;
                    ++total;
                    if (lbl == gt_voxels[vox]) ++correct;
                }
                if (total == 0) continue;
                sum += (double)correct / (double)total;
                ++n;
            }
            if (n > 0) report.mean_frame_voxel_accuracy = sum / (double)n;
        }
        if (!report.per_frame_accuracy.empty()) {
            double sum = 0;
            for (double a : report.per_frame_accuracy) sum += a;
            report.mean_frame_accuracy = sum / (double)report.per_frame_accuracy.size();
        }
        {
            std::ofstream f(out_dir / "metrics.json");
            f << report.to_json().dump(2) << "\n";
        }
        echo_config(cfg, out_dir);
    };

    try {
        for (std::size_t i = 0; i < frames.size(); ++i) {
            const LoadedFrame& frame = frames[i];
            Pose pose = frame.pose;
            if (use_icp && i > 0) {
                const Pose& prev = est_poses.back();
                const RaycastResult model_rc = raycast(tsdf, intr, prev);
                ModelView model{model_rc.depth, model_rc.normals, model_rc.normal_valid, intr,
                                prev};
                pose = icp_track(model, frame.depth, intr, prev);
            } else if (use_icp) {
                pose = frame.pose; // first frame anchors the trajectory
            }
            est_poses.push_back(pose);

            tsdf.integrate(frame.depth, intr, pose, (float)cfg.frame_weight);
            const RaycastResult rc = raycast(tsdf, intr, pose);
            const FeatureImage features = assemble_dhac(rc.depth, intr, pose, gravity);
            const std::vector<ProbabilityImage> preds = stack_forward(stack, features);
            const ProbabilityImage& prob = preds.back();

            label_volume.fuse_frame(prob, rc.depth, intr, pose);

            {
                // the same frame fused into an empty volume, kept sparse
                std::map<std::size_t, std::vector<double>> acc;
                for (int v = 0; v < intr.height; ++v)
                    for (int u = 0; u < intr.width; ++u) {
                        const std::uint16_t d = rc.depth.at(u, v);
                        if (d == 0 || !prob.valid(u, v)) continue;
                        const auto vox =
                            grid.voxel_of(pose.to_world(backproject(u, v, d, intr)));
                        if (!vox) continue;
                        auto& a = acc[grid.linear_index((*vox)[0], (*vox)[1], (*vox)[2])];
                        if (a.empty()) a.assign((std::size_t)num_classes, 0.0);
                        for (int c = 0; c < num_classes; ++c)
                            a[(std::size_t)c] += std::log(std::max(
                                (double)prob.prob(u, v, c), LabelVolume::kProbFloor));
                    }
                std::map<std::size_t, std::uint8_t> labels;
                for (const auto& [vox, a] : acc)
                    labels[vox] = (std::uint8_t)(std::max_element(a.begin(), a.end()) -
                                                 a.begin());
                frame_voxel_labels.push_back(std::move(labels));
            }

            // per-frame pixel accuracy against the GT annotation raster
            LabelImage pred_label(intr.width, intr.height, kVoidLabel);
            for (int v = 0; v < intr.height; ++v)
                for (int u = 0; u < intr.width; ++u)
                    if (prob.valid(u, v)) pred_label.at(u, v) = prob.argmax(u, v);
            const SegMetrics m =
                evaluate(pred_label.data(), frame.label.data(), num_classes);
            report.per_frame_accuracy.push_back(m.accuracy);

            {
                std::ofstream f(out_dir / (frame_basename((int)i) + ".pred.pgm"),
                                std::ios::binary);
                write_label_pgm(pred_label, f);
            }
            {
                std::ofstream f(out_dir / (frame_basename((int)i) + ".pred.ppm"),
                                std::ios::binary);
                write_label_ppm(pred_label, f);
            }
            report.frames_processed = (int)i + 1;
        }
    } catch (const TrackingLostError&) {
        report.tracking_lost = true;
        finalize();
        throw;
    }
    finalize();
    return report;
}

// eval: compare predicted vs ground-truth label rasters, write metrics JSON
// and palette renderings.
inline SegMetrics cmd_eval(const fs::path& predicted_pgm, const fs::path& ground_truth_pgm,
                           const fs::path& out_dir, int num_classes = 5) {
    fs::create_directories(out_dir);
    auto read = [](const fs::path& p) {
        std::ifstream f(p, std::ios::binary);
        if (!f) throw PipelineError("eval: cannot open " + p.string());
        return read_label_pgm(f);
    };
    const LabelImage pred = read(predicted_pgm);
    const LabelImage gt = read(ground_truth_pgm);
    if (pred.width() != gt.width() || pred.height() != gt.height())
        throw PipelineError("eval: image size mismatch");
    const SegMetrics m = evaluate(pred.data(), gt.data(), num_classes);

    const ClassTaxonomy tax = default_taxonomy();
    json j;
    j["pixel_accuracy"] = m.accuracy;
    j["class_average_accuracy"] = m.class_average_accuracy;
    j["support"] = m.support;
    json per_class = json::object();
    for (int c = 0; c < num_classes && c < (int)tax.size(); ++c)
        per_class[tax.name_of((std::uint8_t)c)] = m.per_class_accuracy[(std::size_t)c];
    j["per_class_accuracy"] = per_class;
    j["confusion"] = m.confusion;
    {
        std::ofstream f(out_dir / "metrics.json");
        f << j.dump(2) << "\n";
    }
    {
        std::ofstream f(out_dir / "predicted.ppm", std::ios::binary);
        write_label_ppm(pred, f);
    }
    {
        std::ofstream f(out_dir / "ground_truth.ppm", std::ios::binary);
        write_label_ppm(gt, f);
    }
    return m;
}

} // namespace voxseg::pipeline
