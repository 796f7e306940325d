#pragma once

// The five backbone families with the compound-expression classification head.
//
// Architectures mirror the torchvision reference definitions (layer order, channel
// arithmetic and parameter names), so that the 1000-class reference configuration
// reproduces the torchvision parameter counts. A width multiplier scales every channel
// count for desk-scale runs.

#include "cer/nn/layers.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace cer::nn {

struct BackboneSpec {
    std::string name;
    /// Channel multiplier; 1.0 is the reference architecture.
    double width = 1.0;
    int input_size = 224;
    /// Hidden width of the two-layer head.
    int hidden_dim = 512;
    int num_classes = 7;
    /// Use the architecture's original single-linear 1000-class classifier instead of the head.
    bool reference_head = false;

    bool operator==(const BackboneSpec&) const = default;

    static BackboneSpec reference(std::string_view name);
};

inline constexpr std::array<std::string_view, 5> kBackboneNames = {"mobilenet_v2", "resnet152", "densenet121",
                                                                    "resnet18", "densenet201"};

bool is_known_backbone(std::string_view name);
std::string known_backbones();

/// Torchvision trainable-parameter count of the 1000-class reference configuration.
long reference_param_count(std::string_view name);

namespace detail {

inline int scaled(int channels, double width) {
    return std::max(1, static_cast<int>(std::lround(channels * width)));
}

// Rounds to a multiple of 8 without dropping more than 10%, as MobileNetV2 does.
inline int make_divisible(double v, int divisor = 8) {
    int out = std::max(divisor, int(v + divisor / 2.0) / divisor * divisor);
    if (out < 0.9 * v) out += divisor;
    return out;
}

template <typename Scalar>
std::unique_ptr<Sequential<Scalar>> conv_bn(int in, int out, int k, int stride, int pad, int groups, Scalar relu_cap) {
    auto s = std::make_unique<Sequential<Scalar>>();
    s->template emplace<Conv2d<Scalar>>("0", in, out, k, stride, pad, groups);
    s->template emplace<BatchNorm2d<Scalar>>("1", out);
    s->template emplace<ReLU<Scalar>>("2", relu_cap);
    return s;
}

template <typename Scalar>
struct Built {
    Sequential<Scalar> backbone;
    int feature_dim = 0;
    InitRule rule;
    std::string reference_head_name;
};

template <typename Scalar>
Built<Scalar> build_resnet(std::span<const int> blocks, bool bottleneck, double width) {
    Built<Scalar> b;
    const int expansion = bottleneck ? 4 : 1;
    int inplanes = scaled(64, width);
    auto& net = b.backbone;
    net.template emplace<Conv2d<Scalar>>("conv1", 3, inplanes, 7, 2, 3);
    net.template emplace<BatchNorm2d<Scalar>>("bn1", inplanes);
    net.template emplace<ReLU<Scalar>>("relu");
    net.template emplace<MaxPool2d<Scalar>>("maxpool", 3, 2, 1);
    const std::array<int, 4> base{64, 128, 256, 512};
    for (int stage = 0; stage < 4; ++stage) {
        auto layer = std::make_unique<Sequential<Scalar>>();
        const int planes = scaled(base[size_t(stage)], width);
        for (int i = 0; i < blocks[size_t(stage)]; ++i) {
            const int stride = (stage > 0 && i == 0) ? 2 : 1;
            const int out = planes * expansion;
            Sequential<Scalar> main;
            if (bottleneck) {
                main.template emplace<Conv2d<Scalar>>("conv1", inplanes, planes, 1);
                main.template emplace<BatchNorm2d<Scalar>>("bn1", planes);
                main.template emplace<ReLU<Scalar>>("relu1");
                main.template emplace<Conv2d<Scalar>>("conv2", planes, planes, 3, stride, 1);
                main.template emplace<BatchNorm2d<Scalar>>("bn2", planes);
                main.template emplace<ReLU<Scalar>>("relu2");
                main.template emplace<Conv2d<Scalar>>("conv3", planes, out, 1);
                main.template emplace<BatchNorm2d<Scalar>>("bn3", out);
            } else {
                main.template emplace<Conv2d<Scalar>>("conv1", inplanes, planes, 3, stride, 1);
                main.template emplace<BatchNorm2d<Scalar>>("bn1", planes);
                main.template emplace<ReLU<Scalar>>("relu1");
                main.template emplace<Conv2d<Scalar>>("conv2", planes, planes, 3, 1, 1);
                main.template emplace<BatchNorm2d<Scalar>>("bn2", planes);
            }
            std::unique_ptr<Sequential<Scalar>> proj;
            if (stride != 1 || inplanes != out) {
                proj = std::make_unique<Sequential<Scalar>>();
                proj->template emplace<Conv2d<Scalar>>("0", inplanes, out, 1, stride, 0);
                proj->template emplace<BatchNorm2d<Scalar>>("1", out);
            }
            layer->append(std::make_unique<Residual<Scalar>>(std::move(main), std::move(proj), true));
            inplanes = out;
        }
        net.add("layer" + std::to_string(stage + 1), std::move(layer));
    }
    b.feature_dim = inplanes;
    b.rule = {InitRule::ConvFan::Out, InitRule::LinearInit::Uniform, false};
    b.reference_head_name = "fc";
    return b;
}

template <typename Scalar>
Built<Scalar> build_densenet(std::span<const int> blocks, double width) {
    Built<Scalar> b;
    const int growth = scaled(32, width);
    const int bn_size = 4;
    int channels = scaled(64, width);
    auto features = std::make_unique<Sequential<Scalar>>();
    features->template emplace<Conv2d<Scalar>>("conv0", 3, channels, 7, 2, 3);
    features->template emplace<BatchNorm2d<Scalar>>("norm0", channels);
    features->template emplace<ReLU<Scalar>>("relu0");
    features->template emplace<MaxPool2d<Scalar>>("pool0", 3, 2, 1);
    for (size_t i = 0; i < blocks.size(); ++i) {
        auto block = std::make_unique<DenseBlock<Scalar>>(channels, growth);
        for (int l = 0; l < blocks[i]; ++l) {
            const int in = channels + l * growth;
            auto layer = std::make_unique<Sequential<Scalar>>();
            layer->template emplace<BatchNorm2d<Scalar>>("norm1", in);
            layer->template emplace<ReLU<Scalar>>("relu1");
            layer->template emplace<Conv2d<Scalar>>("conv1", in, bn_size * growth, 1);
            layer->template emplace<BatchNorm2d<Scalar>>("norm2", bn_size * growth);
            layer->template emplace<ReLU<Scalar>>("relu2");
            layer->template emplace<Conv2d<Scalar>>("conv2", bn_size * growth, growth, 3, 1, 1);
            block->add_layer(std::move(layer));
        }
        channels = block->out_channels();
        features->add("denseblock" + std::to_string(i + 1), std::move(block));
        if (i + 1 != blocks.size()) {
            auto trans = std::make_unique<Sequential<Scalar>>();
            trans->template emplace<BatchNorm2d<Scalar>>("norm", channels);
            trans->template emplace<ReLU<Scalar>>("relu");
            trans->template emplace<Conv2d<Scalar>>("conv", channels, channels / 2, 1);
            trans->template emplace<AvgPool2d<Scalar>>("pool", 2);
            features->add("transition" + std::to_string(i + 1), std::move(trans));
            channels /= 2;
        }
    }
    features->template emplace<BatchNorm2d<Scalar>>("norm5", channels);
    b.backbone.add("features", std::move(features));
    b.backbone.template emplace<ReLU<Scalar>>("relu");
    b.feature_dim = channels;
    b.rule = {InitRule::ConvFan::In, InitRule::LinearInit::Uniform, true};
    b.reference_head_name = "classifier";
    return b;
}

template <typename Scalar>
Built<Scalar> build_mobilenet_v2(double width) {
    Built<Scalar> b;
    const Scalar six(6);
    // expansion, output channels, repeats, first stride
    const int settings[7][4] = {{1, 16, 1, 1}, {6, 24, 2, 2}, {6, 32, 3, 2}, {6, 64, 4, 2},
                                {6, 96, 3, 1}, {6, 160, 3, 2}, {6, 320, 1, 1}};
    int in = make_divisible(32 * width);
    const int last = make_divisible(1280 * std::max(1.0, width));
    auto features = std::make_unique<Sequential<Scalar>>();
    features->append(conv_bn<Scalar>(3, in, 3, 2, 1, 1, six));
    for (const auto& s : settings) {
        const int out = make_divisible(s[1] * width);
        for (int i = 0; i < s[2]; ++i) {
            const int stride = i == 0 ? s[3] : 1;
            const int hidden = static_cast<int>(std::lround(in * double(s[0])));
            auto conv = std::make_unique<Sequential<Scalar>>();
            if (s[0] != 1) conv->append(conv_bn<Scalar>(in, hidden, 1, 1, 0, 1, six));
            conv->append(conv_bn<Scalar>(hidden, hidden, 3, stride, 1, hidden, six));
            conv->template emplace<Conv2d<Scalar>>(std::to_string(conv->size()), hidden, out, 1);
            conv->template emplace<BatchNorm2d<Scalar>>(std::to_string(conv->size()), out);
            if (stride == 1 && in == out) {
                features->append(std::make_unique<Residual<Scalar>>(std::move(*conv), nullptr, false, "conv."));
            } else {
                auto wrap = std::make_unique<Sequential<Scalar>>();
                wrap->add("conv", std::move(conv));
                features->append(std::move(wrap));
            }
            in = out;
        }
    }
    features->append(conv_bn<Scalar>(in, last, 1, 1, 0, 1, six));
    b.backbone.add("features", std::move(features));
    b.feature_dim = last;
    b.rule = {InitRule::ConvFan::Out, InitRule::LinearInit::Normal001, true};
    b.reference_head_name = "classifier.1";
    return b;
}

template <typename Scalar>
Built<Scalar> build_backbone(const BackboneSpec& spec) {
    static constexpr int r18[] = {2, 2, 2, 2};
    static constexpr int r152[] = {3, 8, 36, 3};
    static constexpr int d121[] = {6, 12, 24, 16};
    static constexpr int d201[] = {6, 12, 48, 32};
    if (spec.name == "resnet18") return build_resnet<Scalar>(r18, false, spec.width);
    if (spec.name == "resnet152") return build_resnet<Scalar>(r152, true, spec.width);
    if (spec.name == "densenet121") return build_densenet<Scalar>(d121, spec.width);
    if (spec.name == "densenet201") return build_densenet<Scalar>(d201, spec.width);
    if (spec.name == "mobilenet_v2") return build_mobilenet_v2<Scalar>(spec.width);
    throw std::invalid_argument("unknown backbone '" + spec.name + "'; valid names: " + known_backbones());
}

}  // namespace detail

/// Backbone + global average pooling + classification head, mapping an image batch
/// to a (batch, num_classes) logit matrix.
template <typename Scalar>
class Network {
public:
    explicit Network(BackboneSpec spec) : spec_(std::move(spec)) {
        if (!(spec_.width > 0)) throw std::invalid_argument("width multiplier must be positive");
        if (spec_.input_size < 32) throw std::invalid_argument("input size must be at least 32");
        auto built = detail::build_backbone<Scalar>(spec_);
        backbone_ = std::move(built.backbone);
        feature_dim_ = built.feature_dim;
        rule_ = built.rule;
        if (spec_.reference_head) {
            head_prefix_ = built.reference_head_name + ".";
            head_.template emplace<Linear<Scalar>>("0", feature_dim_, spec_.num_classes);
        } else {
            head_prefix_ = "head.";
            head_.template emplace<Linear<Scalar>>("0", feature_dim_, spec_.hidden_dim);
            head_.template emplace<ReLU<Scalar>>("1");
            head_.template emplace<Linear<Scalar>>("2", spec_.hidden_dim, spec_.num_classes);
        }
    }

    Network(const Network&) = delete;
    Network& operator=(const Network&) = delete;
    Network(Network&&) = default;
    Network& operator=(Network&&) = default;

    const BackboneSpec& spec() const { return spec_; }
    int feature_dim() const { return feature_dim_; }

    /// Allocates and draws every tensor from a generator seeded with `seed`.
    void initialize(std::uint64_t seed) {
        Rng rng(seed);
        backbone_.reset(rng, rule_);
        reset_head(rng);
    }

    /// Re-draws only the classification head, from its own seeded stream.
    void reset_head(Rng& rng) {
        InitRule head_rule = rule_;
        if (!spec_.reference_head) head_rule = InitRule{};
        head_.reset(rng, head_rule);
    }

    Mat<Scalar> forward(const Tensor<Scalar>& images, bool training) {
        if (images.channels() != 3) throw std::invalid_argument("network expects 3-channel images");
        Tensor<Scalar> h = backbone_.forward(images, training);
        h = pool_.forward(h, training);
        h = head_.forward(h, training);
        return h.data.transpose();
    }

    /// Back-propagates dL/dlogits (batch x classes), accumulating parameter gradients.
    void backward(const Mat<Scalar>& dlogits) {
        Tensor<Scalar> g;
        g.data = dlogits.transpose();
        g.batch = static_cast<int>(dlogits.rows());
        g.height = g.width = 1;
        g = head_.backward(g);
        g = pool_.backward(g);
        backbone_.backward(g);
    }

    ParameterList<Scalar> backbone_parameters() {
        ParameterList<Scalar> out;
        backbone_.parameters("", out);
        return out;
    }

    ParameterList<Scalar> parameters() {
        ParameterList<Scalar> out = backbone_parameters();
        if (spec_.reference_head)
            head_[0].parameters(head_prefix_, out);
        else
            head_.parameters(head_prefix_, out);
        return out;
    }

    long count_params() {
        long total = 0;
        for (const auto& p : parameters())
            if (p.trainable) total += p.param->numel();
        return total;
    }

    void zero_grad() {
        for (auto& p : parameters())
            if (p.trainable) p.param->grad.setZero();
    }

private:
    BackboneSpec spec_;
    Sequential<Scalar> backbone_;
    GlobalAvgPool<Scalar> pool_;
    Sequential<Scalar> head_;
    std::string head_prefix_;
    int feature_dim_ = 0;
    InitRule rule_;
};

}  // namespace cer::nn
