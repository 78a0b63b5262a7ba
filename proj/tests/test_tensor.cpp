#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "mtunet/tape.hpp"

using namespace mtunet;
using mtunet::testing::random_tensor;

namespace {

// Direct sliding-window cross-correlation with zero padding.
Tensor<double> conv_oracle(const Tensor<double>& x, const Tensor<double>& k, const Tensor<double>& b) {
    const std::size_t fin = x.dim(0), h = x.dim(1), w = x.dim(2), fout = k.dim(0), ks = k.dim(2);
    const long pad = static_cast<long>(ks / 2);
    Tensor<double> y({fout, h, w});
    for (std::size_t o = 0; o < fout; ++o)
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j) {
                double acc = b[o];
                for (std::size_t c = 0; c < fin; ++c)
                    for (std::size_t u = 0; u < ks; ++u)
                        for (std::size_t v = 0; v < ks; ++v) {
                            const long yi = static_cast<long>(i + u) - pad, xj = static_cast<long>(j + v) - pad;
                            if (yi < 0 || xj < 0 || yi >= static_cast<long>(h) || xj >= static_cast<long>(w)) continue;
                            acc += k[((o * fin + c) * ks + u) * ks + v] * x.at(c, yi, xj);
                        }
                y.at(o, i, j) = acc;
            }
    return y;
}

}  // namespace

TEST_CASE("dense forward examples") {
    Tape<double> t;
    auto y = dense(t.constant(Tensor<double>::vector({3, -1})), t.constant(Tensor<double>({2, 2}, {1, 0, 0, 1})),
                   t.constant(Tensor<double>({2})));
    CHECK(y.value() == Tensor<double>::vector({3, -1}));

    auto z = dense(t.constant(Tensor<double>::vector({1, 1})), t.constant(Tensor<double>({2, 2}, {1, 2, 3, 4})),
                   t.constant(Tensor<double>::vector({1, 1})));
    CHECK(z.value() == Tensor<double>::vector({4, 8}));
}

TEST_CASE("dense gradient of the output sum") {
    Parameter<double> x{"x", Tensor<double>::vector({1, 1})};
    Tape<double> t;
    auto y = dense(t.param(x), t.constant(Tensor<double>({2, 2}, {1, 2, 3, 4})), t.constant(Tensor<double>({2})));
    t.backward(sum(y));
    CHECK(x.grad[0] == doctest::Approx(4));
    CHECK(x.grad[1] == doctest::Approx(6));
}

TEST_CASE("dense rejects mismatched shapes") {
    Tape<double> t;
    CHECK_THROWS_AS(dense(t.constant(Tensor<double>({3})), t.constant(Tensor<double>({2, 2})),
                          t.constant(Tensor<double>({2}))),
                    ShapeError);
}

TEST_CASE("conv2d examples") {
    Tape<double> t;
    const Tensor<double> x({1, 2, 2}, {1, 2, 3, 4});
    auto id = conv2d(t.constant(x), t.constant(Tensor<double>({1, 1, 1, 1}, {1})), t.constant(Tensor<double>({1})));
    CHECK(id.value() == x);

    auto all = conv2d(t.constant(x), t.constant(Tensor<double>({1, 1, 3, 3}, 1.0)), t.constant(Tensor<double>({1})));
    CHECK(all.value() == Tensor<double>({1, 2, 2}, {10, 10, 10, 10}));
}

TEST_CASE("conv2d matches the sliding-window oracle") {
    SeededRng rng(11);
    for (std::size_t k : {1, 3, 5}) {
        const auto x = random_tensor(rng, {3, 6, 7});
        const auto K = random_tensor(rng, {4, 3, k, k});
        const auto b = random_tensor(rng, {4});
        Tape<double> t;
        const auto y = conv2d(t.constant(x), t.constant(K), t.constant(b)).value();
        const auto ref = conv_oracle(x, K, b);
        REQUIRE(y.shape() == ref.shape());
        for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(ref[i]).epsilon(1e-12));
    }
}

TEST_CASE("conv2d rejects even kernels and channel mismatch") {
    Tape<double> t;
    auto x = t.constant(Tensor<double>({1, 4, 4}));
    CHECK_THROWS_AS(conv2d(x, t.constant(Tensor<double>({1, 1, 2, 2})), t.constant(Tensor<double>({1}))), ShapeError);
    CHECK_THROWS_AS(conv2d(x, t.constant(Tensor<double>({1, 2, 3, 3})), t.constant(Tensor<double>({1}))), ShapeError);
}

TEST_CASE("max_pool2 examples") {
    Tape<double> t;
    CHECK(max_pool2(t.constant(Tensor<double>({1, 4, 4}, 2.5))).value() == Tensor<double>({1, 2, 2}, 2.5));

    Parameter<double> x{"x", Tensor<double>({1, 2, 2}, {1, 2, 3, 4})};
    Tape<double> g;
    auto y = max_pool2(g.param(x));
    CHECK(y.value() == Tensor<double>({1, 1, 1}, {4}));
    g.backward(sum(y));
    CHECK(x.grad == Tensor<double>({1, 2, 2}, {0, 0, 0, 1}));
}

TEST_CASE("max_pool2 sends tied gradients to the first cell and rejects odd extents") {
    Parameter<double> x{"x", Tensor<double>({1, 2, 2}, 1.0)};
    Tape<double> g;
    g.backward(sum(max_pool2(g.param(x))));
    CHECK(x.grad == Tensor<double>({1, 2, 2}, {1, 0, 0, 0}));

    Tape<double> t;
    CHECK_THROWS_AS(max_pool2(t.constant(Tensor<double>({1, 3, 4}))), ShapeError);
}

TEST_CASE("upsample examples") {
    Tape<double> t;
    CHECK(upsample_nearest2(t.constant(Tensor<double>({1, 1, 1}, {1}))).value() == Tensor<double>({1, 2, 2}, 1.0));
    auto y = upsample2(t.constant(Tensor<double>({3, 4, 4})), t.constant(Tensor<double>({3, 3, 3, 3})),
                       t.constant(Tensor<double>({3})));
    CHECK(y.shape() == Shape{3, 8, 8});
}

TEST_CASE("concat_features examples") {
    Tape<double> t;
    const Tensor<double> x({2, 3, 3}, 1.5);
    CHECK(concat_features(t.constant(x), t.constant(Tensor<double>({0, 3, 3}))).value() == x);
    CHECK(concat_features(t.constant(Tensor<double>({2, 4, 4})), t.constant(Tensor<double>({3, 4, 4}))).shape() ==
          Shape{5, 4, 4});
    CHECK_THROWS_AS(concat_features(t.constant(Tensor<double>({2, 4, 4})), t.constant(Tensor<double>({1, 4, 2}))),
                    ShapeError);

    Parameter<double> a{"a", Tensor<double>({2, 4, 4})}, b{"b", Tensor<double>({3, 4, 4})};
    Tape<double> g;
    g.backward(sum(concat_features(g.param(a), g.param(b))));
    CHECK(a.grad == Tensor<double>({2, 4, 4}, 1.0));
    CHECK(b.grad == Tensor<double>({3, 4, 4}, 1.0));
}

TEST_CASE("activation and pooling examples") {
    Tape<double> t;
    const auto s = softmax_vec(t.constant(Tensor<double>({3}))).value();
    for (double v : s.data()) CHECK(v == doctest::Approx(1.0 / 3.0));
    CHECK(global_avg_pool(t.constant(Tensor<double>({1, 2, 2}, {1, 2, 3, 4}))).value()[0] == doctest::Approx(2.5));
    CHECK(relu(t.constant(Tensor<double>::vector({-1, 0, 2}))).value() == Tensor<double>::vector({0, 0, 2}));

    SeededRng rng(1);
    const Tensor<double> x({2, 3, 3}, 0.7);
    CHECK(dropout(t.constant(x), 0.25, false, rng).value() == x);
    CHECK_THROWS_AS(dropout(t.constant(x), 1.0, true, rng), ConfigError);
}

TEST_CASE("softmax outputs are positive and normalized") {
    SeededRng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        Tape<float> t;
        Tensor<float> v({7}), m({1, 9, 9});
        for (auto& x : v.data()) x = static_cast<float>(rng.uniform(-20, 20));
        for (auto& x : m.data()) x = static_cast<float>(rng.uniform(-20, 20));
        for (const auto& out : {softmax_vec(t.constant(v)).value(), softmax_spatial(t.constant(m)).value()}) {
            double total = 0;
            for (float x : out.data()) {
                CHECK(x > 0.0f);
                total += x;
            }
            CHECK(std::abs(total - 1.0) < 1e-6);
        }
    }
}

TEST_CASE("inverted dropout preserves the expectation") {
    SeededRng rng(99);
    const Tensor<double> x({100}, 2.0);
    double total = 0;
    const int trials = 10000;
    for (int i = 0; i < trials; ++i) {
        Tape<double> t;
        for (double v : dropout(t.constant(x), 0.25, true, rng).value().data()) total += v;
    }
    const double mean = total / (trials * 100.0);
    CHECK(std::abs(mean - 2.0) / 2.0 < 0.02);
}

TEST_CASE("backward contract") {
    Parameter<double> p{"p", Tensor<double>::vector({0.3, -2, 5})};
    {
        Tape<double> t;
        t.param(p);
        t.backward(t.constant(Tensor<double>::scalar(4.0)));
        CHECK(p.grad == Tensor<double>({3}));
    }
    {
        Tape<double> t;
        t.backward(sum(t.param(p)));
        CHECK(p.grad == Tensor<double>({3}, 1.0));
    }
    Tape<double> t;
    CHECK_THROWS_AS(t.backward(t.param(p)), ShapeError);
}

TEST_CASE("gradients of every primitive match central differences") {
    for (const auto& c : mtunet::testing::primitive_cases()) {
        for (std::uint64_t seed = 0; seed < 3; ++seed) {
            SeededRng rng(seed);
            const auto r = c.run(rng);
            INFO(c.name << " seed " << seed << " worst " << r.worst);
            CHECK(r.checked > 0);
            CHECK(r.max_rel < 1e-4);
        }
    }
}

TEST_CASE("forward and backward are bit-identical on replay") {
    auto run = [] {
        SeededRng rng(7);
        const auto x = random_tensor(rng, {2, 4, 4});
        Parameter<double> k{"k", random_tensor(rng, {3, 2, 3, 3})};
        Parameter<double> b{"b", random_tensor(rng, {3})};
        Tape<double> t;
        auto y = softmax_vec(global_avg_pool(relu(conv2d(t.constant(x), t.param(k), t.param(b)))));
        auto loss = sum(mul(y, y));
        t.backward(loss);
        return std::make_pair(loss.value(), k.grad);
    };
    CHECK(run() == run());
}
