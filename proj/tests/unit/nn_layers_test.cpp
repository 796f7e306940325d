#include <doctest.h>

#include "cer/nn/layers.hpp"
#include "oracles.hpp"

#include <random>

using namespace cer::nn;

namespace {

Tensor<double> random_tensor(int c, int n, int h, int w, std::mt19937_64& rng) {
    Tensor<double> t(c, n, h, w);
    std::normal_distribution<double> d(0, 1);
    for (auto& v : t.data.reshaped()) v = d(rng);
    return t;
}

// Checks input and parameter gradients of `m` against central differences of sum(y * r).
void check_layer(Module<double>& m, Tensor<double> x, std::mt19937_64& rng, double tol = 1e-6) {
    const Tensor<double> y0 = m.forward(x, true);
    Tensor<double> r = y0;
    std::normal_distribution<double> d(0, 1);
    for (auto& v : r.data.reshaped()) v = d(rng);
    auto loss = [&] { return (m.forward(x, true).data.array() * r.data.array()).sum(); };

    ParameterList<double> params;
    m.parameters("", params);
    for (auto& p : params) p.param->grad.setZero();
    m.forward(x, true);
    const Tensor<double> dx = m.backward(r);

    const double h = 1e-6;
    Eigen::VectorXd num_dx(x.data.size());
    for (Eigen::Index i = 0; i < x.data.size(); ++i) {
        const double keep = x.data.data()[i];
        x.data.data()[i] = keep + h;
        const double up = loss();
        x.data.data()[i] = keep - h;
        const double down = loss();
        x.data.data()[i] = keep;
        num_dx(i) = (up - down) / (2 * h);
    }
    CHECK(oracle::relative_error(Eigen::Map<const Eigen::VectorXd>(dx.data.data(), dx.data.size()), num_dx) <= tol);

    for (auto& p : params) {
        if (!p.trainable) continue;
        CAPTURE(p.name);
        Eigen::VectorXd num(p.param->numel());
        for (Eigen::Index i = 0; i < num.size(); ++i) {
            const double keep = p.param->value(i);
            p.param->value(i) = keep + h;
            const double up = loss();
            p.param->value(i) = keep - h;
            const double down = loss();
            p.param->value(i) = keep;
            num(i) = (up - down) / (2 * h);
        }
        CHECK(oracle::relative_error(p.param->grad, num) <= tol);
    }
}

void init(Module<double>& m, std::uint64_t seed) {
    Rng rng(seed);
    m.reset(rng, InitRule{});
}

}  // namespace

TEST_CASE("layer gradients") {
    std::mt19937_64 rng(17);
    SUBCASE("dense 3x3 stride 2 conv") {
        Conv2d<double> conv(3, 4, 3, 2, 1);
        init(conv, 1);
        check_layer(conv, random_tensor(3, 2, 7, 6, rng), rng);
    }
    SUBCASE("7x7 stem conv") {
        Conv2d<double> conv(2, 3, 7, 2, 3);
        init(conv, 1);
        check_layer(conv, random_tensor(2, 2, 9, 9, rng), rng);
    }
    SUBCASE("pointwise conv") {
        Conv2d<double> conv(5, 3, 1);
        init(conv, 2);
        check_layer(conv, random_tensor(5, 3, 4, 4, rng), rng);
    }
    SUBCASE("strided pointwise conv") {
        Conv2d<double> conv(5, 3, 1, 2, 0);
        init(conv, 2);
        check_layer(conv, random_tensor(5, 2, 5, 5, rng), rng);
    }
    SUBCASE("depthwise conv") {
        for (int stride : {1, 2}) {
            Conv2d<double> conv(4, 4, 3, stride, 1, 4);
            init(conv, 3);
            check_layer(conv, random_tensor(4, 2, 6, 5, rng), rng);
        }
    }
    SUBCASE("batch norm") {
        BatchNorm2d<double> bn(3);
        init(bn, 0);
        ParameterList<double> ps;
        bn.parameters("", ps);
        std::normal_distribution<double> d(0, 1);
        for (auto& p : ps)
            if (p.trainable)
                for (auto& v : p.param->value) v += d(rng);
        check_layer(bn, random_tensor(3, 3, 3, 2, rng), rng);
    }
    SUBCASE("relu6") {
        ReLU<double> relu(6.0);
        auto x = random_tensor(3, 2, 4, 4, rng);
        x.data *= 5.0;
        check_layer(relu, x, rng);
    }
    SUBCASE("max pool") {
        MaxPool2d<double> pool(3, 2, 1);
        check_layer(pool, random_tensor(2, 2, 7, 8, rng), rng);
    }
    SUBCASE("avg pool") {
        AvgPool2d<double> pool(2);
        check_layer(pool, random_tensor(2, 2, 5, 4, rng), rng);
    }
    SUBCASE("global average pool") {
        GlobalAvgPool<double> pool;
        check_layer(pool, random_tensor(3, 2, 3, 4, rng), rng);
    }
    SUBCASE("linear") {
        Linear<double> fc(5, 3);
        init(fc, 4);
        check_layer(fc, random_tensor(5, 4, 1, 1, rng), rng);
    }
}

TEST_CASE("dense block concatenates and routes gradients") {
    std::mt19937_64 rng(2);
    DenseBlock<double> block(3, 2);
    for (int l = 0; l < 3; ++l) {
        auto layer = std::make_unique<Sequential<double>>();
        layer->emplace<Conv2d<double>>("conv", 3 + 2 * l, 2, 3, 1, 1);
        block.add_layer(std::move(layer));
    }
    init(block, 8);
    const auto x = random_tensor(3, 2, 4, 4, rng);
    const auto y = block.forward(x, true);
    CHECK(y.channels() == 9);
    CHECK((y.data.topRows(3).array() == x.data.array()).all());
    check_layer(block, x, rng);
}

TEST_CASE("residual block gradients") {
    std::mt19937_64 rng(6);
    Sequential<double> main;
    main.emplace<Conv2d<double>>("conv1", 3, 3, 3, 1, 1);
    main.emplace<ReLU<double>>("relu");
    Residual<double> block(std::move(main), nullptr, true);
    init(block, 1);
    check_layer(block, random_tensor(3, 2, 4, 4, rng), rng);
}
