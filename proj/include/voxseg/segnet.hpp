#pragma once

#include <cstring>
#include <istream>
#include <ostream>
#include <random>

#include <Eigen/Dense>

#include "voxseg/dhac.hpp"
#include "voxseg/image.hpp"

namespace voxseg {

// Plane-major feature maps: channel c occupies a contiguous h*w block.
template <typename Scalar>
struct PlaneMap {
    int channels = 0, height = 0, width = 0;
    std::vector<Scalar> data;

    PlaneMap() = default;
    PlaneMap(int c, int h, int w)
        : channels(c), height(h), width(w), data((std::size_t)c * h * w, Scalar(0)) {}

    Scalar& at(int c, int x, int y) { return data[((std::size_t)c * height + y) * width + x]; }
    Scalar at(int c, int x, int y) const { return data[((std::size_t)c * height + y) * width + x]; }
    std::size_t pixels() const { return (std::size_t)height * width; }
};

using Mask = std::vector<std::uint8_t>; // 1 = valid, indexed y*width+x

template <typename Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// One autoencoder stage: a k x k affine encoder with tanh, plus a 1 x 1
// affine classifier head, operating at resolution 1/2^scale.
template <typename Scalar>
struct Layer {
    int in_channels = 0;
    int hidden = 0;
    int kernel = 0;
    int classes = 0;
    int scale = 1; // layer works at 1/2^scale resolution

    MatX<Scalar> enc_w;  // hidden x (in_channels*kernel*kernel)
    VecX<Scalar> enc_b;  // hidden
    MatX<Scalar> head_w; // classes x hidden
    VecX<Scalar> head_b; // classes

    void init(std::mt19937_64& rng) {
        const int fan_in = in_channels * kernel * kernel;
        const Scalar a = Scalar(1) / std::sqrt(Scalar(fan_in));
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        enc_w.resize(hidden, fan_in);
        enc_b = VecX<Scalar>::Zero(hidden);
        head_w.resize(classes, hidden);
        head_b = VecX<Scalar>::Zero(classes);
        for (int r = 0; r < enc_w.rows(); ++r)
            for (int c = 0; c < enc_w.cols(); ++c) enc_w(r, c) = Scalar(u(rng)) * a;
        const Scalar ah = Scalar(1) / std::sqrt(Scalar(hidden));
        for (int r = 0; r < head_w.rows(); ++r)
            for (int c = 0; c < head_w.cols(); ++c) head_w(r, c) = Scalar(u(rng)) * ah;
    }

    template <typename S2>
    Layer<S2> cast() const {
        Layer<S2> out;
        out.in_channels = in_channels;
        out.hidden = hidden;
        out.kernel = kernel;
        out.classes = classes;
        out.scale = scale;
        out.enc_w = enc_w.template cast<S2>();
        out.enc_b = enc_b.template cast<S2>();
        out.head_w = head_w.template cast<S2>();
        out.head_b = head_b.template cast<S2>();
        return out;
    }
};

namespace detail {

// Zero-padded im2col: column per pixel, row (c*k+dy)*k+dx.
template <typename Scalar>
MatX<Scalar> im2col(const PlaneMap<Scalar>& in, int kernel) {
    const int r = kernel / 2;
    const int w = in.width, h = in.height;
    MatX<Scalar> patches(in.channels * kernel * kernel, (Eigen::Index)w * h);
    patches.setZero();
    for (int c = 0; c < in.channels; ++c)
        for (int dy = 0; dy < kernel; ++dy)
            for (int dx = 0; dx < kernel; ++dx) {
                const int row = (c * kernel + dy) * kernel + dx;
                for (int y = 0; y < h; ++y) {
                    const int sy = y + dy - r;
                    if (sy < 0 || sy >= h) continue;
                    for (int x = 0; x < w; ++x) {
                        const int sx = x + dx - r;
                        if (sx < 0 || sx >= w) continue;
                        patches(row, (Eigen::Index)y * w + x) = in.at(c, sx, sy);
                    }
                }
            }
    return patches;
}

template <typename Scalar>
void softmax_columns(MatX<Scalar>& logits) {
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
        auto col = logits.col(j);
        const Scalar m = col.maxCoeff();
        col = (col.array() - m).exp();
        col /= col.sum();
    }
}

} // namespace detail

template <typename Scalar>
struct LayerActivations {
    MatX<Scalar> patches; // im2col of the input
    MatX<Scalar> hidden;  // hidden x npix, tanh applied
    MatX<Scalar> logits;  // classes x npix
    MatX<Scalar> probs;   // softmax of logits
};

// `linear` drops the tanh; used by the gradient harness to isolate the heads.
template <typename Scalar>
LayerActivations<Scalar> layer_forward(const Layer<Scalar>& layer, const PlaneMap<Scalar>& in,
                                       bool linear = false) {
    if (in.channels != layer.in_channels)
        throw std::invalid_argument("layer_forward: channel mismatch");
    LayerActivations<Scalar> act;
    act.patches = detail::im2col(in, layer.kernel);
    act.hidden = (layer.enc_w * act.patches).colwise() + layer.enc_b;
    if (!linear) act.hidden = act.hidden.array().tanh();
    act.logits = (layer.head_w * act.hidden).colwise() + layer.head_b;
    act.probs = act.logits;
    detail::softmax_columns(act.probs);
    return act;
}

template <typename Scalar>
struct LayerGradients {
    MatX<Scalar> enc_w;
    VecX<Scalar> enc_b;
    MatX<Scalar> head_w;
    VecX<Scalar> head_b;
    Scalar loss = 0;   // mean cross-entropy over counted pixels
    std::size_t count = 0;
};

// Mean per-pixel softmax cross-entropy against `labels` (255 = void,
// excluded). `selected` optionally restricts the loss to a pixel subset.
template <typename Scalar>
LayerGradients<Scalar> layer_backward(const Layer<Scalar>& layer,
                                      const LayerActivations<Scalar>& act,
                                      const std::vector<std::uint8_t>& labels,
                                      const std::vector<std::uint8_t>* selected = nullptr,
                                      bool linear = false) {
    const Eigen::Index npix = act.probs.cols();
    LayerGradients<Scalar> grad;
    MatX<Scalar> dlogits = MatX<Scalar>::Zero(layer.classes, npix);
    std::size_t count = 0;
    Scalar loss = 0;
    for (Eigen::Index j = 0; j < npix; ++j) {
        const std::uint8_t lbl = labels[(std::size_t)j];
        if (lbl == kVoidLabel || lbl >= layer.classes) continue;
        if (selected && !(*selected)[(std::size_t)j]) continue;
        dlogits.col(j) = act.probs.col(j);
        dlogits(lbl, j) -= Scalar(1);
        loss -= std::log(std::max(act.probs(lbl, j), Scalar(1e-30)));
        ++count;
    }
    if (count == 0) throw std::invalid_argument("layer_backward: no labeled pixels");
    dlogits /= Scalar(count);
    grad.loss = loss / Scalar(count);
    grad.count = count;

    grad.head_w = dlogits * act.hidden.transpose();
    grad.head_b = dlogits.rowwise().sum();
    MatX<Scalar> dhidden = layer.head_w.transpose() * dlogits;
    if (!linear) dhidden.array() *= (Scalar(1) - act.hidden.array().square());
    grad.enc_w = dhidden * act.patches.transpose();
    grad.enc_b = dhidden.rowwise().sum();
    return grad;
}

struct StackConfig {
    int layers = 4;
    int hidden = 32;  // d
    int kernel = 7;   // k
    int classes = 5;  // K
    int in_channels = 4;

    int layer_in_channels(int i) const { // i is 1-based
        return i == 1 ? in_channels : in_channels + hidden + classes;
    }
    bool operator==(const StackConfig&) const = default;
};

template <typename Scalar>
struct Stack {
    StackConfig config;
    std::vector<Layer<Scalar>> layers_;

    static Stack create(const StackConfig& cfg, std::uint64_t seed) {
        Stack s;
        s.config = cfg;
        for (int i = 1; i <= cfg.layers; ++i) {
            Layer<Scalar> layer;
            layer.in_channels = cfg.layer_in_channels(i);
            layer.hidden = cfg.hidden;
            layer.kernel = cfg.kernel;
            layer.classes = cfg.classes;
            layer.scale = i;
            std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ull + (std::uint64_t)i);
            layer.init(rng);
            s.layers_.push_back(std::move(layer));
        }
        return s;
    }
};

using StackF = Stack<float>;

namespace detail {

// Nearest-neighbor downsample by an integer factor (top-left sampling).
template <typename Scalar>
PlaneMap<Scalar> downsample_nearest(const PlaneMap<Scalar>& in, int factor) {
    PlaneMap<Scalar> out(in.channels, std::max(1, in.height / factor),
                         std::max(1, in.width / factor));
    for (int c = 0; c < in.channels; ++c)
        for (int y = 0; y < out.height; ++y)
            for (int x = 0; x < out.width; ++x) out.at(c, x, y) = in.at(c, x * factor, y * factor);
    return out;
}

inline Mask downsample_mask(const Mask& mask, int w, int h, int factor) {
    const int ow = std::max(1, w / factor), oh = std::max(1, h / factor);
    Mask out((std::size_t)ow * oh, 0);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x)
            out[(std::size_t)y * ow + x] = mask[(std::size_t)(y * factor) * w + x * factor];
    return out;
}

inline std::vector<std::uint8_t> downsample_labels(const LabelImage& labels, int factor) {
    const int ow = std::max(1, labels.width() / factor), oh = std::max(1, labels.height() / factor);
    std::vector<std::uint8_t> out((std::size_t)ow * oh, kVoidLabel);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) out[(std::size_t)y * ow + x] = labels.at(x * factor, y * factor);
    return out;
}

} // namespace detail

// DHAC planes with invalid pixels zeroed, plus the validity mask.
template <typename Scalar>
PlaneMap<Scalar> feature_planes(const FeatureImage& features, Mask* mask_out = nullptr) {
    PlaneMap<Scalar> planes(FeatureImage::kChannels, features.height(), features.width());
    if (mask_out) mask_out->assign((std::size_t)features.width() * features.height(), 0);
    for (int v = 0; v < features.height(); ++v)
        for (int u = 0; u < features.width(); ++u) {
            if (!features.valid(u, v)) continue;
            if (mask_out) (*mask_out)[(std::size_t)v * features.width() + u] = 1;
            for (int c = 0; c < FeatureImage::kChannels; ++c)
                planes.at(c, u, v) = Scalar(features.channel(c, u, v));
        }
    return planes;
}

template <typename Scalar>
struct StackForwardState {
    // per layer, at that layer's scale
    std::vector<PlaneMap<Scalar>> inputs;
    std::vector<LayerActivations<Scalar>> acts;
};

namespace detail {

// Input to layer i (1-based): DHAC at the layer scale; for i > 1 also the
// previous layer's hidden maps and softmax, downsampled by 2.
template <typename Scalar>
PlaneMap<Scalar> build_layer_input(const Stack<Scalar>& stack, int i,
                                   const PlaneMap<Scalar>& dhac_full,
                                   const StackForwardState<Scalar>* state) {
    const int factor = 1 << i;
    PlaneMap<Scalar> dhac_s = downsample_nearest(dhac_full, factor);
    if (i == 1) return dhac_s;

    const LayerActivations<Scalar>& prev = state->acts[(std::size_t)i - 2];
    const PlaneMap<Scalar>& prev_in = state->inputs[(std::size_t)i - 2];
    const int ph = prev_in.height, pw = prev_in.width;

    PlaneMap<Scalar> prev_maps(stack.config.hidden + stack.config.classes, ph, pw);
    for (int c = 0; c < stack.config.hidden; ++c)
        for (int y = 0; y < ph; ++y)
            for (int x = 0; x < pw; ++x)
                prev_maps.at(c, x, y) = prev.hidden(c, (Eigen::Index)y * pw + x);
    for (int c = 0; c < stack.config.classes; ++c)
        for (int y = 0; y < ph; ++y)
            for (int x = 0; x < pw; ++x)
                prev_maps.at(stack.config.hidden + c, x, y) =
                    prev.probs(c, (Eigen::Index)y * pw + x);
    PlaneMap<Scalar> prev_s = downsample_nearest(prev_maps, 2);

    PlaneMap<Scalar> input(stack.config.layer_in_channels(i), dhac_s.height, dhac_s.width);
    const int h = std::min({dhac_s.height, prev_s.height, input.height});
    const int w = std::min({dhac_s.width, prev_s.width, input.width});
    for (int c = 0; c < FeatureImage::kChannels; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) input.at(c, x, y) = dhac_s.at(c, x, y);
    for (int c = 0; c < prev_s.channels; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                input.at(FeatureImage::kChannels + c, x, y) = prev_s.at(c, x, y);
    return input;
}

} // namespace detail

// Forward pass up to and including layer `upto` (default: all layers).
template <typename Scalar>
StackForwardState<Scalar> stack_forward_state(const Stack<Scalar>& stack,
                                              const PlaneMap<Scalar>& dhac_full, int upto = -1) {
    if (upto < 0) upto = stack.config.layers;
    StackForwardState<Scalar> state;
    for (int i = 1; i <= upto; ++i) {
        state.inputs.push_back(detail::build_layer_input(stack, i, dhac_full, &state));
        state.acts.push_back(layer_forward(stack.layers_[(std::size_t)i - 1], state.inputs.back()));
    }
    return state;
}

// Bilinearly upsamples a layer's softmax to full resolution. Masked pixels
// carry the uniform distribution.
template <typename Scalar>
ProbabilityImage upsample_probs(const MatX<Scalar>& probs, int sw, int sh, int full_w, int full_h,
                                const Mask& full_mask, int classes) {
    ProbabilityImage out(full_w, full_h, classes);
    const double fx = (double)sw / full_w, fy = (double)sh / full_h;
    for (int y = 0; y < full_h; ++y)
        for (int x = 0; x < full_w; ++x) {
            const bool ok = full_mask[(std::size_t)y * full_w + x] != 0;
            out.set_valid(x, y, ok);
            if (!ok) {
                for (int c = 0; c < classes; ++c) out.prob(x, y, c) = 1.0f / classes;
                continue;
            }
            const double sx = std::min((double)(sw - 1), std::max(0.0, x * fx));
            const double sy = std::min((double)(sh - 1), std::max(0.0, y * fy));
            const int x0 = (int)sx, y0 = (int)sy;
            const int x1 = std::min(sw - 1, x0 + 1), y1 = std::min(sh - 1, y0 + 1);
            const double ax = sx - x0, ay = sy - y0;
            for (int c = 0; c < classes; ++c) {
                const double p =
                    (1 - ax) * (1 - ay) * probs(c, (Eigen::Index)y0 * sw + x0) +
                    ax * (1 - ay) * probs(c, (Eigen::Index)y0 * sw + x1) +
                    (1 - ax) * ay * probs(c, (Eigen::Index)y1 * sw + x0) +
                    ax * ay * probs(c, (Eigen::Index)y1 * sw + x1);
                out.prob(x, y, c) = (float)p;
            }
        }
    return out;
}

// Per-layer dense predictions at full resolution.
template <typename Scalar>
std::vector<ProbabilityImage> stack_forward(const Stack<Scalar>& stack,
                                            const FeatureImage& features) {
    Mask mask;
    const PlaneMap<Scalar> dhac = feature_planes<Scalar>(features, &mask);
    const StackForwardState<Scalar> state = stack_forward_state(stack, dhac);
    std::vector<ProbabilityImage> out;
    for (int i = 1; i <= stack.config.layers; ++i) {
        const auto& in = state.inputs[(std::size_t)i - 1];
        out.push_back(upsample_probs(state.acts[(std::size_t)i - 1].probs, in.width, in.height,
                                     features.width(), features.height(), mask,
                                     stack.config.classes));
    }
    return out;
}

struct TrainConfig {
    double learning_rate = 0.05;
    int epochs = 60;
    int batch_pixels = 4096; // per-image pixel cap for one gradient step
    std::uint64_t seed = 0;

    void validate() const {
        if (learning_rate <= 0 || epochs <= 0 || batch_pixels <= 0)
            throw std::invalid_argument("train config: hyperparameters must be positive");
    }
};

struct TrainSample {
    FeatureImage features;
    LabelImage labels;
};

struct LayerTrainReport {
    double initial_loss = 0;
    double final_loss = 0;
    double train_accuracy = 0; // at layer scale, after training
};

// Trains layer `index` (1-based) with all earlier layers frozen. Inputs to the
// layer are precomputed once per image since the prefix does not change.
template <typename Scalar>
LayerTrainReport train_layer(Stack<Scalar>& stack, int index,
                             const std::vector<TrainSample>& dataset, const TrainConfig& config) {
    config.validate();
    if (dataset.empty()) throw std::invalid_argument("train_layer: empty dataset");
    if (index < 1 || index > stack.config.layers)
        throw std::invalid_argument("train_layer: layer index out of range");
    Layer<Scalar>& layer = stack.layers_[(std::size_t)index - 1];
    const int factor = 1 << index;

    std::vector<PlaneMap<Scalar>> inputs;
    std::vector<std::vector<std::uint8_t>> labels;
    std::size_t total_labeled = 0;
    for (const auto& sample : dataset) {
        Mask mask;
        const PlaneMap<Scalar> dhac = feature_planes<Scalar>(sample.features, &mask);
        StackForwardState<Scalar> state = stack_forward_state(stack, dhac, index - 1);
        inputs.push_back(detail::build_layer_input(stack, index, dhac, &state));
        auto lbl = detail::downsample_labels(sample.labels, factor);
        // exclude pixels outside the feature mask
        const Mask mask_s =
            detail::downsample_mask(mask, sample.features.width(), sample.features.height(), factor);
        for (std::size_t j = 0; j < lbl.size(); ++j)
            if (!mask_s[j]) lbl[j] = kVoidLabel;
        for (std::uint8_t l : lbl)
            if (l != kVoidLabel) ++total_labeled;
        labels.push_back(std::move(lbl));
    }
    if (total_labeled == 0) throw std::invalid_argument("train_layer: all labels void");

    auto dataset_loss = [&](const Layer<Scalar>& l) {
        double loss = 0;
        std::size_t n = 0;
        for (std::size_t s = 0; s < inputs.size(); ++s) {
            const auto act = layer_forward(l, inputs[s]);
            for (Eigen::Index j = 0; j < act.probs.cols(); ++j) {
                const std::uint8_t lbl = labels[s][(std::size_t)j];
                if (lbl == kVoidLabel) continue;
                loss -= std::log(std::max((double)act.probs(lbl, j), 1e-30));
                ++n;
            }
        }
        return loss / (double)n;
    };

    LayerTrainReport report;
    const Layer<Scalar> initial = layer;
    report.initial_loss = dataset_loss(layer);

    std::mt19937_64 rng(config.seed * 0x2545f4914f6cdd1dull + (std::uint64_t)index);
    std::vector<std::size_t> order(inputs.size());
    for (std::size_t s = 0; s < order.size(); ++s) order[s] = s;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t s : order) {
            // cap pixels per step, deterministic subset
            std::vector<std::uint8_t> selected;
            std::size_t labeled = 0;
            for (std::uint8_t l : labels[s])
                if (l != kVoidLabel) ++labeled;
            if (labeled == 0) continue;
            if ((int)labeled > config.batch_pixels) {
                selected.assign(labels[s].size(), 0);
                std::vector<std::size_t> idx;
                idx.reserve(labeled);
                for (std::size_t j = 0; j < labels[s].size(); ++j)
                    if (labels[s][j] != kVoidLabel) idx.push_back(j);
                std::shuffle(idx.begin(), idx.end(), rng);
                for (int j = 0; j < config.batch_pixels; ++j) selected[idx[(std::size_t)j]] = 1;
            }
            const auto act = layer_forward(layer, inputs[s]);
            const auto grad =
                layer_backward(layer, act, labels[s], selected.empty() ? nullptr : &selected);
            const Scalar lr = Scalar(config.learning_rate);
            layer.enc_w -= lr * grad.enc_w;
            layer.enc_b -= lr * grad.enc_b;
            layer.head_w -= lr * grad.head_w;
            layer.head_b -= lr * grad.head_b;
        }
    }

    report.final_loss = dataset_loss(layer);
    if (report.final_loss > report.initial_loss) {
        layer = initial; // training made things worse; keep the starting point
        report.final_loss = report.initial_loss;
    }

    std::size_t correct = 0, counted = 0;
    for (std::size_t s = 0; s < inputs.size(); ++s) {
        const auto act = layer_forward(layer, inputs[s]);
        for (Eigen::Index j = 0; j < act.probs.cols(); ++j) {
            const std::uint8_t lbl = labels[s][(std::size_t)j];
            if (lbl == kVoidLabel) continue;
            Eigen::Index arg = 0;
            act.probs.col(j).maxCoeff(&arg);
            if ((std::uint8_t)arg == lbl) ++correct;
            ++counted;
        }
    }
    report.train_accuracy = counted ? (double)correct / (double)counted : 0.0;
    return report;
}

// Central finite differences (h = 1e-4) over every parameter of `layer`.
// Returns max |analytic - numeric| / max(1e-8, |analytic|).
template <typename Scalar>
double gradient_check(const Layer<Scalar>& layer, const PlaneMap<Scalar>& input,
                      const std::vector<std::uint8_t>& labels, bool linear = false) {
    auto loss_of = [&](const Layer<Scalar>& l) {
        const auto act = layer_forward(l, input, linear);
        double loss = 0;
        std::size_t n = 0;
        for (Eigen::Index j = 0; j < act.probs.cols(); ++j) {
            const std::uint8_t lbl = labels[(std::size_t)j];
            if (lbl == kVoidLabel || lbl >= layer.classes) continue;
            loss -= std::log(std::max((double)act.probs(lbl, j), 1e-300));
            ++n;
        }
        return loss / (double)n;
    };

    const auto act = layer_forward(layer, input, linear);
    const auto grad = layer_backward(layer, act, labels, nullptr, linear);

    const double h = 1e-4;
    double max_rel = 0;
    auto check_param = [&](auto get_ref, double analytic) {
        Layer<Scalar> probe = layer;
        get_ref(probe) += Scalar(h);
        const double lp = loss_of(probe);
        get_ref(probe) -= Scalar(2 * h);
        const double lm = loss_of(probe);
        const double numeric = (lp - lm) / (2 * h);
        const double rel = std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic));
        max_rel = std::max(max_rel, rel);
    };

    for (int r = 0; r < layer.enc_w.rows(); ++r)
        for (int c = 0; c < layer.enc_w.cols(); ++c)
            check_param([r, c](Layer<Scalar>& l) -> Scalar& { return l.enc_w(r, c); },
                        (double)grad.enc_w(r, c));
    for (int r = 0; r < layer.enc_b.size(); ++r)
        check_param([r](Layer<Scalar>& l) -> Scalar& { return l.enc_b(r); },
                    (double)grad.enc_b(r));
    for (int r = 0; r < layer.head_w.rows(); ++r)
        for (int c = 0; c < layer.head_w.cols(); ++c)
            check_param([r, c](Layer<Scalar>& l) -> Scalar& { return l.head_w(r, c); },
                        (double)grad.head_w(r, c));
    for (int r = 0; r < layer.head_b.size(); ++r)
        check_param([r](Layer<Scalar>& l) -> Scalar& { return l.head_b(r); },
                    (double)grad.head_b(r));
    return max_rel;
}

// Weight file: magic + version + config block + raw little-endian float32
// tensors in declared order (enc_w, enc_b, head_w, head_b per layer).
inline constexpr char kWeightMagic[8] = {'V', 'X', 'S', 'G', 'N', 'E', 'T', '1'};
inline constexpr std::int32_t kWeightVersion = 1;

inline void save_weights(const StackF& stack, std::ostream& out) {
    out.write(kWeightMagic, 8);
    out.write(reinterpret_cast<const char*>(&kWeightVersion), 4);
    const std::int32_t cfg[5] = {stack.config.layers, stack.config.hidden, stack.config.kernel,
                                 stack.config.classes, stack.config.in_channels};
    out.write(reinterpret_cast<const char*>(cfg), sizeof(cfg));
    auto write_mat = [&out](const MatX<float>& m) {
        // column-major, as stored
        out.write(reinterpret_cast<const char*>(m.data()),
                  (std::streamsize)(m.size() * sizeof(float)));
    };
    for (const auto& layer : stack.layers_) {
        write_mat(layer.enc_w);
        out.write(reinterpret_cast<const char*>(layer.enc_b.data()),
                  (std::streamsize)(layer.enc_b.size() * sizeof(float)));
        write_mat(layer.head_w);
        out.write(reinterpret_cast<const char*>(layer.head_b.data()),
                  (std::streamsize)(layer.head_b.size() * sizeof(float)));
    }
}

inline StackF load_weights(std::istream& in) {
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kWeightMagic, 8) != 0)
        throw FileFormatError("weight file: bad magic");
    std::int32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), 4);
    if (version != kWeightVersion)
        throw FileFormatError("weight file: version mismatch (got " + std::to_string(version) +
                              ")");
    std::int32_t cfg[5];
    in.read(reinterpret_cast<char*>(cfg), sizeof(cfg));
    if (!in) throw FileFormatError("weight file: truncated config");
    StackConfig config;
    config.layers = cfg[0];
    config.hidden = cfg[1];
    config.kernel = cfg[2];
    config.classes = cfg[3];
    config.in_channels = cfg[4];
    if (config.layers <= 0 || config.hidden <= 0 || config.kernel <= 0 || config.classes <= 0)
        throw FileFormatError("weight file: invalid config block");

    StackF stack = StackF::create(config, 0);
    for (auto& layer : stack.layers_) {
        auto read_block = [&in](float* dst, std::size_t n) {
            in.read(reinterpret_cast<char*>(dst), (std::streamsize)(n * sizeof(float)));
            if (!in) throw FileFormatError("weight file: truncated tensors");
        };
        read_block(layer.enc_w.data(), (std::size_t)layer.enc_w.size());
        read_block(layer.enc_b.data(), (std::size_t)layer.enc_b.size());
        read_block(layer.head_w.data(), (std::size_t)layer.head_w.size());
        read_block(layer.head_b.data(), (std::size_t)layer.head_b.size());
    }
    return stack;
}

} // namespace voxseg
