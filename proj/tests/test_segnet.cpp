#include <catch_amalgamated.hpp>

#include <random>
#include <sstream>

#include "voxseg/segnet.hpp"

using namespace voxseg;

namespace {

template <typename Scalar>
PlaneMap<Scalar> random_planes(int c, int h, int w, std::uint64_t seed) {
    PlaneMap<Scalar> out(c, h, w);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (auto& x : out.data) x = Scalar(u(rng));
    return out;
}

template <typename Scalar>
Layer<Scalar> random_layer(int in_ch, int hidden, int kernel, int classes, std::uint64_t seed) {
    Layer<Scalar> layer;
    layer.in_channels = in_ch;
    layer.hidden = hidden;
    layer.kernel = kernel;
    layer.classes = classes;
    std::mt19937_64 rng(seed);
    layer.init(rng);
    // nonzero biases so bias gradients are exercised
    std::uniform_real_distribution<double> u(-0.2, 0.2);
    for (int r = 0; r < layer.enc_b.size(); ++r) layer.enc_b(r) = Scalar(u(rng));
    for (int r = 0; r < layer.head_b.size(); ++r) layer.head_b(r) = Scalar(u(rng));
    return layer;
}

} // namespace

// oracle: direct nested-loop convolution with zero padding
TEST_CASE("layer_forward matches a naive convolution") {
    const int in_ch = 3, hidden = 4, kernel = 3, classes = 3, w = 9, h = 7;
    const Layer<double> layer = random_layer<double>(in_ch, hidden, kernel, classes, 11);
    const PlaneMap<double> input = random_planes<double>(in_ch, h, w, 22);
    const auto act = layer_forward(layer, input);

    const int r = kernel / 2;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int o = 0; o < hidden; ++o) {
                double acc = layer.enc_b(o);
                for (int c = 0; c < in_ch; ++c)
                    for (int dy = 0; dy < kernel; ++dy)
                        for (int dx = 0; dx < kernel; ++dx) {
                            const int sy = y + dy - r, sx = x + dx - r;
                            if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
                            acc += layer.enc_w(o, (c * kernel + dy) * kernel + dx) *
                                   input.at(c, sx, sy);
                        }
                CHECK(act.hidden(o, (Eigen::Index)y * w + x) ==
                      Catch::Approx(std::tanh(acc)).margin(1e-12));
            }

    // head: 1x1 affine over hidden, softmax normalizes every column
    for (Eigen::Index j = 0; j < act.probs.cols(); ++j) {
        CHECK(act.probs.col(j).sum() == Catch::Approx(1.0).margin(1e-12));
        CHECK(act.probs.col(j).minCoeff() > 0.0);
    }
}

TEST_CASE("layer_forward: zero weights give uniform class probabilities") {
    Layer<float> layer = random_layer<float>(2, 3, 3, 4, 1);
    layer.enc_w.setZero();
    layer.enc_b.setZero();
    layer.head_w.setZero();
    layer.head_b.setZero();
    const auto act = layer_forward(layer, random_planes<float>(2, 5, 5, 2));
    for (Eigen::Index j = 0; j < act.probs.cols(); ++j)
        for (int c = 0; c < 4; ++c) CHECK(act.probs(c, j) == Catch::Approx(0.25));
    CHECK_THROWS_AS(layer_forward(layer, random_planes<float>(3, 5, 5, 2)),
                    std::invalid_argument);
}

TEST_CASE("layer_forward: constant interior input has the closed-form response") {
    const int kernel = 3;
    Layer<double> layer;
    layer.in_channels = 1;
    layer.hidden = 1;
    layer.kernel = kernel;
    layer.classes = 2;
    layer.enc_w = MatX<double>::Constant(1, kernel * kernel, 0.1);
    layer.enc_b = VecX<double>::Constant(1, 0.05);
    layer.head_w = MatX<double>::Constant(2, 1, 1.0);
    layer.head_b = VecX<double>::Zero(2);

    PlaneMap<double> input(1, 7, 7);
    for (auto& x : input.data) x = 0.5;
    const auto act = layer_forward(layer, input);
    // interior pixel: all 9 taps present
    const double expected = std::tanh(0.05 + 9 * 0.1 * 0.5);
    CHECK(act.hidden(0, (Eigen::Index)3 * 7 + 3) == Catch::Approx(expected).margin(1e-15));
    // corner pixel: only 4 taps inside the image (zero padding)
    const double corner = std::tanh(0.05 + 4 * 0.1 * 0.5);
    CHECK(act.hidden(0, 0) == Catch::Approx(corner).margin(1e-15));
}

TEST_CASE("softmax is invariant to a uniform logit shift") {
    Layer<double> a = random_layer<double>(2, 3, 3, 4, 7);
    Layer<double> b = a;
    b.head_b.array() += 3.7;
    const PlaneMap<double> input = random_planes<double>(2, 6, 6, 8);
    const auto pa = layer_forward(a, input).probs;
    const auto pb = layer_forward(b, input).probs;
    CHECK((pa - pb).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("gradient_check: analytic gradients match finite differences") {
    const Layer<double> layer = random_layer<double>(3, 4, 3, 3, 31);
    const PlaneMap<double> input = random_planes<double>(3, 6, 8, 32);
    std::mt19937_64 rng(33);
    std::vector<std::uint8_t> labels(6 * 8);
    for (auto& l : labels) {
        const auto r = rng() % 4;
        l = r == 3 ? kVoidLabel : (std::uint8_t)r; // some void pixels excluded
    }
    SECTION("full layer with tanh") {
        CHECK(gradient_check(layer, input, labels) < 1e-4);
    }
    SECTION("linear mode is near machine precision") {
        CHECK(gradient_check(layer, input, labels, true) < 1e-7);
    }
}

TEST_CASE("layer_backward: void-only labels are an error") {
    const Layer<float> layer = random_layer<float>(2, 3, 3, 4, 3);
    const PlaneMap<float> input = random_planes<float>(2, 4, 4, 4);
    const auto act = layer_forward(layer, input);
    const std::vector<std::uint8_t> labels(16, kVoidLabel);
    CHECK_THROWS_AS(layer_backward(layer, act, labels), std::invalid_argument);
}

namespace {

// linearly separable toy scene: channel 0 encodes the class band
TrainSample toy_sample(std::uint64_t seed, int classes, int size = 32) {
    TrainSample sample;
    sample.features = FeatureImage(size, size);
    sample.labels = LabelImage(size, size, 0);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> noise(-0.03, 0.03);
    for (int v = 0; v < size; ++v)
        for (int u = 0; u < size; ++u) {
            const int cls = (u * classes) / size;
            sample.features.set_valid(u, v, true);
            sample.features.channel(0, u, v) =
                (float)((cls + 0.5) / classes + noise(rng));
            sample.features.channel(1, u, v) = (float)noise(rng);
            sample.features.channel(2, u, v) = (float)(0.5 + noise(rng));
            sample.features.channel(3, u, v) = (float)noise(rng);
            sample.labels.at(u, v) = (std::uint8_t)cls;
        }
    return sample;
}

} // namespace

TEST_CASE("train_layer: separable classes reach high accuracy, loss decreases") {
    StackConfig cfg;
    cfg.layers = 1;
    cfg.hidden = 8;
    cfg.kernel = 3;
    cfg.classes = 3;
    StackF stack = StackF::create(cfg, 5);

    std::vector<TrainSample> dataset;
    for (int i = 0; i < 3; ++i) dataset.push_back(toy_sample(100 + (std::uint64_t)i, 3));
    TrainConfig tc;
    tc.epochs = 80;
    tc.learning_rate = 0.2;
    tc.seed = 9;

    const LayerTrainReport report = train_layer(stack, 1, dataset, tc);
    CHECK(report.final_loss <= report.initial_loss);
    CHECK(report.final_loss < 0.3);
    CHECK(report.train_accuracy >= 0.99);
}

TEST_CASE("train_layer: frozen prefix stays byte-identical") {
    StackConfig cfg;
    cfg.layers = 2;
    cfg.hidden = 6;
    cfg.kernel = 3;
    cfg.classes = 3;
    StackF stack = StackF::create(cfg, 77);
    const MatX<float> l1_enc = stack.layers_[0].enc_w;
    const MatX<float> l1_head = stack.layers_[0].head_w;

    std::vector<TrainSample> dataset = {toy_sample(1, 3), toy_sample(2, 3)};
    TrainConfig tc;
    tc.epochs = 5;
    tc.seed = 3;
    train_layer(stack, 2, dataset, tc);
    CHECK(std::memcmp(stack.layers_[0].enc_w.data(), l1_enc.data(),
                      sizeof(float) * (std::size_t)l1_enc.size()) == 0);
    CHECK(std::memcmp(stack.layers_[0].head_w.data(), l1_head.data(),
                      sizeof(float) * (std::size_t)l1_head.size()) == 0);
    // layer 2 did change
    CHECK(stack.layers_[1].enc_w != StackF::create(cfg, 77).layers_[1].enc_w);
}

TEST_CASE("train_layer: identical seeds give identical weights") {
    StackConfig cfg;
    cfg.layers = 1;
    cfg.hidden = 6;
    cfg.kernel = 3;
    cfg.classes = 3;
    std::vector<TrainSample> dataset = {toy_sample(4, 3), toy_sample(5, 3)};
    TrainConfig tc;
    tc.epochs = 7;
    tc.batch_pixels = 100; // force the subset-selection path
    tc.seed = 21;

    StackF a = StackF::create(cfg, 1);
    StackF b = StackF::create(cfg, 1);
    train_layer(a, 1, dataset, tc);
    train_layer(b, 1, dataset, tc);
    CHECK(a.layers_[0].enc_w == b.layers_[0].enc_w);
    CHECK(a.layers_[0].enc_b == b.layers_[0].enc_b);
    CHECK(a.layers_[0].head_w == b.layers_[0].head_w);
    CHECK(a.layers_[0].head_b == b.layers_[0].head_b);

    tc.seed = 22;
    StackF c = StackF::create(cfg, 1);
    train_layer(c, 1, dataset, tc);
    CHECK(a.layers_[0].enc_w != c.layers_[0].enc_w);
}

TEST_CASE("train_layer: error paths") {
    StackConfig cfg;
    cfg.layers = 1;
    cfg.classes = 3;
    StackF stack = StackF::create(cfg, 0);
    std::vector<TrainSample> dataset = {toy_sample(1, 3)};
    TrainConfig tc;
    CHECK_THROWS_AS(train_layer(stack, 0, dataset, tc), std::invalid_argument);
    CHECK_THROWS_AS(train_layer(stack, 2, dataset, tc), std::invalid_argument);
    CHECK_THROWS_AS(train_layer(stack, 1, {}, tc), std::invalid_argument);
    TrainConfig bad;
    bad.learning_rate = -1;
    CHECK_THROWS_AS(train_layer(stack, 1, dataset, bad), std::invalid_argument);
}

TEST_CASE("stack_forward: shapes, masks, and probability sums") {
    StackConfig cfg; // full-size default: 4 layers
    StackF stack = StackF::create(cfg, 123);

    FeatureImage features(40, 32);
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int v = 0; v < 32; ++v)
        for (int u_ = 0; u_ < 40; ++u_) {
            const bool ok = (u_ + v) % 5 != 0; // some invalid pixels
            features.set_valid(u_, v, ok);
            for (int c = 0; c < 4; ++c) features.channel(c, u_, v) = (float)u(rng);
        }

    const std::vector<ProbabilityImage> preds = stack_forward(stack, features);
    REQUIRE(preds.size() == 4);
    for (const auto& p : preds) {
        REQUIRE(p.width() == 40);
        REQUIRE(p.height() == 32);
        for (int v = 0; v < 32; ++v)
            for (int u_ = 0; u_ < 40; ++u_) {
                float sum = 0;
                for (int c = 0; c < cfg.classes; ++c) sum += p.prob(u_, v, c);
                CHECK(sum == Catch::Approx(1.0).margin(1e-5));
                CHECK(p.valid(u_, v) == features.valid(u_, v));
                if (!p.valid(u_, v))
                    CHECK(p.prob(u_, v, 0) == Catch::Approx(1.0 / cfg.classes));
            }
    }
}

TEST_CASE("downsample helpers sample the top-left corner of each block") {
    PlaneMap<float> in(1, 4, 6);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 6; ++x) in.at(0, x, y) = (float)(y * 10 + x);
    const PlaneMap<float> out = detail::downsample_nearest(in, 2);
    REQUIRE(out.width == 3);
    REQUIRE(out.height == 2);
    CHECK(out.at(0, 0, 0) == 0.0f);
    CHECK(out.at(0, 1, 0) == 2.0f);
    CHECK(out.at(0, 2, 1) == 24.0f);

    LabelImage labels(6, 4, 0);
    labels.at(2, 2) = 3;
    const auto lbl = detail::downsample_labels(labels, 2);
    CHECK(lbl[(std::size_t)1 * 3 + 1] == 3);
}

TEST_CASE("weight file round-trip preserves the forward pass bit-exactly") {
    StackConfig cfg;
    cfg.layers = 2;
    cfg.hidden = 6;
    cfg.kernel = 3;
    cfg.classes = 3;
    StackF stack = StackF::create(cfg, 9);
    std::vector<TrainSample> dataset = {toy_sample(6, 3)};
    TrainConfig tc;
    tc.epochs = 3;
    train_layer(stack, 1, dataset, tc);

    std::stringstream ss;
    save_weights(stack, ss);
    const std::string bytes = ss.str();
    const StackF back = load_weights(ss);
    CHECK(back.config == cfg);
    for (int i = 0; i < 2; ++i) {
        CHECK(back.layers_[(std::size_t)i].enc_w == stack.layers_[(std::size_t)i].enc_w);
        CHECK(back.layers_[(std::size_t)i].head_b == stack.layers_[(std::size_t)i].head_b);
    }
    const auto pa = stack_forward(stack, dataset[0].features);
    const auto pb = stack_forward(back, dataset[0].features);
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i] == pb[i]);

    std::stringstream ss2;
    save_weights(back, ss2);
    CHECK(ss2.str() == bytes);

    SECTION("bad magic") {
        std::istringstream bad("NOTWEIGH");
        CHECK_THROWS_AS(load_weights(bad), FileFormatError);
    }
    SECTION("version mismatch") {
        std::string mutated = bytes;
        mutated[8] = 9; // bump the version field
        std::istringstream in(mutated);
        CHECK_THROWS_WITH(load_weights(in), Catch::Matchers::ContainsSubstring("version"));
    }
    SECTION("truncated tensors") {
        std::istringstream in(bytes.substr(0, bytes.size() - 10));
        CHECK_THROWS_AS(load_weights(in), FileFormatError);
    }
}

TEST_CASE("stacked layers consume the previous hidden and softmax maps") {
    StackConfig cfg;
    cfg.layers = 2;
    cfg.hidden = 3;
    cfg.kernel = 3;
    cfg.classes = 2;
    CHECK(cfg.layer_in_channels(1) == 4);
    CHECK(cfg.layer_in_channels(2) == 4 + 3 + 2);

    StackF stack = StackF::create(cfg, 55);
    const PlaneMap<float> dhac = random_planes<float>(4, 24, 24, 3);
    const auto state = stack_forward_state(stack, dhac);
    REQUIRE(state.inputs.size() == 2);
    CHECK(state.inputs[0].channels == 4);
    CHECK(state.inputs[0].width == 12);
    CHECK(state.inputs[1].channels == 9);
    CHECK(state.inputs[1].width == 6);

    // layer 2 input carries layer 1's outputs: channel 4 equals the 2x
    // downsample of layer 1's first hidden map
    for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 6; ++x)
            CHECK(state.inputs[1].at(4, x, y) ==
                  state.acts[0].hidden(0, (Eigen::Index)(2 * y) * 12 + 2 * x));
    // and its softmax channels
    for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 6; ++x)
            CHECK(state.inputs[1].at(4 + 3, x, y) ==
                  state.acts[0].probs(0, (Eigen::Index)(2 * y) * 12 + 2 * x));
}
