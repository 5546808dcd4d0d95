#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace voxseg {

inline constexpr std::uint8_t kVoidLabel = 255;

template <typename T>
class Raster {
public:
    Raster() = default;
    Raster(int width, int height, T fill = T{})
        : width_(width), height_(height), data_(static_cast<std::size_t>(width) * height, fill) {
        if (width <= 0 || height <= 0) throw std::invalid_argument("raster dimensions must be positive");
    }

    int width() const { return width_; }
    int height() const { return height_; }
    bool empty() const { return data_.empty(); }
    bool in_bounds(int u, int v) const { return u >= 0 && u < width_ && v >= 0 && v < height_; }

    T& at(int u, int v) { return data_[static_cast<std::size_t>(v) * width_ + u]; }
    const T& at(int u, int v) const { return data_[static_cast<std::size_t>(v) * width_ + u]; }

    std::vector<T>& data() { return data_; }
    const std::vector<T>& data() const { return data_; }

    bool operator==(const Raster&) const = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<T> data_;
};

// Z-depth in millimeters; 0 marks an invalid pixel (no hit / no observation).
using DepthImage = Raster<std::uint16_t>;
// Class ids; 255 is the void label.
using LabelImage = Raster<std::uint8_t>;

inline double depth_meters(const DepthImage& depth, int u, int v) {
    return depth.at(u, v) * 1e-3;
}

// K class probabilities per pixel, planar layout, with a validity mask.
class ProbabilityImage {
public:
    ProbabilityImage() = default;
    ProbabilityImage(int width, int height, int num_classes)
        : width_(width), height_(height), num_classes_(num_classes),
          planes_(static_cast<std::size_t>(width) * height * num_classes, 0.0f),
          valid_(static_cast<std::size_t>(width) * height, 0) {}

    int width() const { return width_; }
    int height() const { return height_; }
    int num_classes() const { return num_classes_; }

    float& prob(int u, int v, int c) {
        return planes_[(static_cast<std::size_t>(c) * height_ + v) * width_ + u];
    }
    float prob(int u, int v, int c) const {
        return planes_[(static_cast<std::size_t>(c) * height_ + v) * width_ + u];
    }
    bool valid(int u, int v) const { return valid_[static_cast<std::size_t>(v) * width_ + u] != 0; }
    void set_valid(int u, int v, bool ok) {
        valid_[static_cast<std::size_t>(v) * width_ + u] = ok ? 1 : 0;
    }

    std::uint8_t argmax(int u, int v) const {
        int best = 0;
        float best_p = prob(u, v, 0);
        for (int c = 1; c < num_classes_; ++c) {
            if (prob(u, v, c) > best_p) {
                best_p = prob(u, v, c);
                best = c;
            }
        }
        return static_cast<std::uint8_t>(best);
    }

    bool operator==(const ProbabilityImage&) const = default;

private:
    int width_ = 0;
    int height_ = 0;
    int num_classes_ = 0;
    std::vector<float> planes_;
    std::vector<std::uint8_t> valid_;
};

} // namespace voxseg
