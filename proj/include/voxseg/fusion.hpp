#pragma once

#include <cstring>

#include "voxseg/image.hpp"
#include "voxseg/tsdf.hpp"

namespace voxseg {

// Per-voxel Bayesian accumulator: K log-probability sums plus an observation
// count. Log-space accumulation with an epsilon floor keeps a single bad
// observation from locking a voxel out of any class.
class LabelVolume {
public:
    static constexpr double kProbFloor = 1e-6;

    LabelVolume(const GridGeometry& geom, int num_classes)
        : geom_(geom), num_classes_(num_classes),
          acc_(geom.voxel_count() * num_classes, 0.0), count_(geom.voxel_count(), 0) {}

    const GridGeometry& geometry() const { return geom_; }
    int num_classes() const { return num_classes_; }

    double accumulator(std::size_t voxel, int c) const { return acc_[voxel * num_classes_ + c]; }
    std::uint32_t observation_count(std::size_t voxel) const { return count_[voxel]; }
    const std::vector<double>& accumulators() const { return acc_; }
    const std::vector<std::uint32_t>& counts() const { return count_; }
    std::vector<double>& accumulators() { return acc_; }
    std::vector<std::uint32_t>& counts() { return count_; }

    struct FuseStats {
        std::size_t fused = 0;
        std::size_t out_of_bounds = 0;
    };

    // Backprojects each valid pixel through the raycast depth and adds
    // log(max(p_c, eps)) per class to the containing voxel.
    FuseStats fuse_frame(const ProbabilityImage& prob, const DepthImage& raycast_depth,
                         const CameraIntrinsics& intr, const Pose& pose) {
        if (prob.width() != raycast_depth.width() || prob.height() != raycast_depth.height())
            throw std::invalid_argument("fuse_frame: probability/depth resolution mismatch");
        if (prob.num_classes() != num_classes_)
            throw std::invalid_argument("fuse_frame: class count mismatch");
        if (!pose.is_valid()) throw std::invalid_argument("fuse_frame: invalid pose");
        FuseStats stats;
        for (int v = 0; v < raycast_depth.height(); ++v) {
            for (int u = 0; u < raycast_depth.width(); ++u) {
                const std::uint16_t d = raycast_depth.at(u, v);
                if (d == 0 || !prob.valid(u, v)) continue;
                const Vec3 p_w = pose.to_world(backproject(u, v, d, intr));
                const auto vox = geom_.voxel_of(p_w);
                if (!vox) {
                    ++stats.out_of_bounds;
                    continue;
                }
                const std::size_t i = geom_.linear_index((*vox)[0], (*vox)[1], (*vox)[2]);
                for (int c = 0; c < num_classes_; ++c)
                    acc_[i * num_classes_ + c] +=
                        std::log(std::max((double)prob.prob(u, v, c), kProbFloor));
                ++count_[i];
                ++stats.fused;
            }
        }
        return stats;
    }

    // Argmax per observed voxel; ties break toward the lowest class id;
    // unobserved voxels are void.
    std::vector<std::uint8_t> extract_labels() const {
        std::vector<std::uint8_t> labels(geom_.voxel_count(), kVoidLabel);
        for (std::size_t i = 0; i < geom_.voxel_count(); ++i) {
            if (count_[i] == 0) continue;
            int best = 0;
            double best_acc = acc_[i * num_classes_];
            for (int c = 1; c < num_classes_; ++c) {
                if (acc_[i * num_classes_ + c] > best_acc) {
                    best_acc = acc_[i * num_classes_ + c];
                    best = c;
                }
            }
            labels[i] = (std::uint8_t)best;
        }
        return labels;
    }

private:
    GridGeometry geom_;
    int num_classes_;
    std::vector<double> acc_;
    std::vector<std::uint32_t> count_;
};

// Raycasts the TSDF surface and reads the fused label at the surface voxel.
inline LabelImage render_label_view(const LabelVolume& labels, const TsdfVolume& tsdf,
                                    const CameraIntrinsics& intr, const Pose& pose) {
    if (labels.geometry() != tsdf.geometry())
        throw std::invalid_argument("render_label_view: grid geometry mismatch");
    const RaycastResult rc = raycast(tsdf, intr, pose);
    const std::vector<std::uint8_t> voxel_labels = labels.extract_labels();
    LabelImage out(intr.width, intr.height, kVoidLabel);
    for (int v = 0; v < intr.height; ++v)
        for (int u = 0; u < intr.width; ++u) {
            if (rc.depth.at(u, v) == 0) continue;
            const auto& vox = rc.voxel[(std::size_t)v * intr.width + u];
            if (vox[0] < 0) continue;
            out.at(u, v) =
                voxel_labels[labels.geometry().linear_index(vox[0], vox[1], vox[2])];
        }
    return out;
}

inline ProbabilityImage one_hot_probabilities(const LabelImage& labels, const DepthImage& depth,
                                              int num_classes) {
    ProbabilityImage prob(labels.width(), labels.height(), num_classes);
    for (int v = 0; v < labels.height(); ++v)
        for (int u = 0; u < labels.width(); ++u) {
            const std::uint8_t l = labels.at(u, v);
            const bool ok = l != kVoidLabel && l < num_classes && depth.at(u, v) != 0;
            prob.set_valid(u, v, ok);
            if (ok) prob.prob(u, v, l) = 1.0f;
        }
    return prob;
}

// Voxel-level ground truth: rendered label images fused as one-hot
// distributions with the same rule as predictions.
inline std::vector<std::uint8_t> ground_truth_volume(
    const std::vector<DepthImage>& depths, const std::vector<LabelImage>& labels,
    const CameraIntrinsics& intr, const Trajectory& trajectory, const GridGeometry& grid,
    int num_classes) {
    if (depths.size() != labels.size() || depths.size() != trajectory.size())
        throw std::invalid_argument("ground_truth_volume: frame count mismatch");
    LabelVolume volume(grid, num_classes);
    for (std::size_t i = 0; i < depths.size(); ++i)
        volume.fuse_frame(one_hot_probabilities(labels[i], depths[i], num_classes), depths[i],
                          intr, trajectory[i]);
    return volume.extract_labels();
}

struct SegMetrics {
    std::vector<std::vector<std::size_t>> confusion; // [gt][pred]
    double accuracy = 0;
    std::vector<double> per_class_accuracy;
    double class_average_accuracy = 0;
    std::size_t support = 0;
};

// Confusion-matrix metrics over paired label sequences; void on either side is
// excluded.
inline SegMetrics evaluate(const std::vector<std::uint8_t>& predicted,
                           const std::vector<std::uint8_t>& ground_truth, int num_classes) {
    if (predicted.size() != ground_truth.size())
        throw std::invalid_argument("evaluate: size mismatch");
    SegMetrics m;
    m.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const std::uint8_t gt = ground_truth[i], pr = predicted[i];
        if (gt == kVoidLabel || pr == kVoidLabel || gt >= num_classes || pr >= num_classes)
            continue;
        ++m.confusion[gt][pr];
        ++m.support;
        if (gt == pr) ++correct;
    }
    m.accuracy = m.support ? (double)correct / (double)m.support : 0.0;
    double class_sum = 0;
    int class_count = 0;
    for (int c = 0; c < num_classes; ++c) {
        std::size_t row = 0;
        for (int p = 0; p < num_classes; ++p) row += m.confusion[c][p];
        if (row == 0) {
            m.per_class_accuracy.push_back(0.0);
            continue;
        }
        const double acc = (double)m.confusion[c][c] / (double)row;
        m.per_class_accuracy.push_back(acc);
        class_sum += acc;
        ++class_count;
    }
    m.class_average_accuracy = class_count ? class_sum / class_count : 0.0;
    return m;
}

// Dump mirrors the TSDF format: header + K accumulator planes (float32) +
// counts.
inline void save_label_volume(const LabelVolume& volume, std::ostream& out) {
    out.write("LBLVOL01", 8);
    const GridGeometry& g = volume.geometry();
    double header[4] = {g.origin.x(), g.origin.y(), g.origin.z(), g.voxel_size};
    std::int32_t dims[4] = {g.dims[0], g.dims[1], g.dims[2], volume.num_classes()};
    out.write(reinterpret_cast<const char*>(header), sizeof(header));
    out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    std::vector<float> plane(g.voxel_count());
    for (int c = 0; c < volume.num_classes(); ++c) {
        for (std::size_t i = 0; i < g.voxel_count(); ++i)
            plane[i] = (float)volume.accumulator(i, c);
        out.write(reinterpret_cast<const char*>(plane.data()),
                  (std::streamsize)(plane.size() * sizeof(float)));
    }
    out.write(reinterpret_cast<const char*>(volume.counts().data()),
              (std::streamsize)(volume.counts().size() * sizeof(std::uint32_t)));
}

inline LabelVolume load_label_volume(std::istream& in) {
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, "LBLVOL01", 8) != 0)
        throw FileFormatError("label volume: bad magic");
    double header[4];
    std::int32_t dims[4];
    in.read(reinterpret_cast<char*>(header), sizeof(header));
    in.read(reinterpret_cast<char*>(dims), sizeof(dims));
    if (!in) throw FileFormatError("label volume: truncated header");
    GridGeometry g;
    g.origin = Vec3{header[0], header[1], header[2]};
    g.voxel_size = header[3];
    g.dims = {dims[0], dims[1], dims[2]};
    LabelVolume volume(g, dims[3]);
    std::vector<float> plane(g.voxel_count());
    for (int c = 0; c < dims[3]; ++c) {
        in.read(reinterpret_cast<char*>(plane.data()),
                (std::streamsize)(plane.size() * sizeof(float)));
        for (std::size_t i = 0; i < g.voxel_count(); ++i)
            volume.accumulators()[i * dims[3] + c] = plane[i];
    }
    in.read(reinterpret_cast<char*>(volume.counts().data()),
            (std::streamsize)(volume.counts().size() * sizeof(std::uint32_t)));
    if (!in) throw FileFormatError("label volume: truncated payload");
    return volume;
}

} // namespace voxseg
