#include <doctest.h>

#include "tempseg/gradcheck.hpp"
#include "tempseg/tensor.hpp"

using namespace tempseg;

namespace {

// independent triple-nested-loop convolution oracle
template <typename T>
Tensor<T> conv_oracle(const Tensor<T>& in, const ConvParams<T>& p) {
    Tensor<T> out(p.out_channels, in.time);
    const int mid = (p.kernel - 1) / 2;
    for (int co = 0; co < p.out_channels; ++co)
        for (int t = 0; t < in.time; ++t) {
            T acc = p.bias[co];
            for (int k = 0; k < p.kernel; ++k)
                for (int ci = 0; ci < p.in_channels; ++ci) {
                    const int src = t + (k - mid) * p.dilation;
                    if (src >= 0 && src < in.time) acc += p.w(k, ci, co) * in.at(ci, src);
                }
            out.at(co, t) = acc;
        }
    return out;
}

Tensor<double> line(std::initializer_list<double> v) {
    Tensor<double> t(1, static_cast<int>(v.size()));
    std::copy(v.begin(), v.end(), t.data.begin());
    return t;
}

}  // namespace

TEST_CASE("conv1d identity and shifted kernels") {
    Tensor<double> x = line({1, 2, 3});
    ConvParams<double> p(3, 1, 1, 1);

    p.w(1, 0, 0) = 1;  // identity kernel [0,1,0]
    Tensor<double> out = conv1d_forward(x, p);
    CHECK(out.data == std::vector<double>{1, 2, 3});

    p.w(1, 0, 0) = 0;
    p.w(0, 0, 0) = 1;  // left tap [1,0,0]
    out = conv1d_forward(x, p);
    CHECK(out.data == std::vector<double>{0, 1, 2});

    ConvParams<double> p2(3, 1, 1, 2);
    p2.w(0, 0, 0) = 1;
    out = conv1d_forward(x, p2);
    CHECK(out.data == std::vector<double>{0, 0, 1});
}

TEST_CASE("conv1d matches triple-loop oracle on random cases") {
    Rng rng(42);
    for (int trial = 0; trial < 5; ++trial) {
        const int dil = 1 + static_cast<int>(rng.uniform_index(4));
        Tensor<double> x(4, 16);
        for (auto& v : x.data) v = rng.uniform(-1, 1);
        ConvParams<double> p(3, 4, 5, dil);
        for (auto& w : p.weights) w = rng.uniform(-1, 1);
        for (auto& b : p.bias) b = rng.uniform(-1, 1);
        const Tensor<double> got = conv1d_forward(x, p);
        const Tensor<double> want = conv_oracle(x, p);
        for (size_t i = 0; i < got.size(); ++i)
            CHECK(got.data[i] == doctest::Approx(want.data[i]).epsilon(1e-12));
    }
}

TEST_CASE("conv1d preserves time length for every dilation") {
    Rng rng(3);
    for (const int dil : {1, 2, 4, 64, 512, 1024}) {
        Tensor<double> x(2, 37);
        for (auto& v : x.data) v = rng.uniform(-1, 1);
        ConvParams<double> p(3, 2, 3, dil);
        for (auto& w : p.weights) w = rng.uniform(-1, 1);
        CHECK(conv1d_forward(x, p).time == 37);
    }
}

TEST_CASE("conv1d kernel 1 equals per-timestep affine map") {
    Rng rng(7);
    Tensor<double> x(3, 9);
    for (auto& v : x.data) v = rng.uniform(-1, 1);
    ConvParams<double> p(1, 3, 4, 1);
    for (auto& w : p.weights) w = rng.uniform(-1, 1);
    for (auto& b : p.bias) b = rng.uniform(-1, 1);
    const Tensor<double> got = conv1d_forward(x, p);
    for (int t = 0; t < x.time; ++t)
        for (int co = 0; co < 4; ++co) {
            double acc = p.bias[co];
            for (int ci = 0; ci < 3; ++ci) acc += p.w(0, ci, co) * x.at(ci, t);
            CHECK(got.at(co, t) == doctest::Approx(acc).epsilon(1e-12));
        }
}

TEST_CASE("conv1d rejects channel mismatch") {
    Tensor<double> x(2, 4);
    ConvParams<double> p(3, 3, 2, 1);
    CHECK_THROWS_AS(conv1d_forward(x, p), DimensionError);
}

TEST_CASE("conv1d backward zero and identity cases") {
    Tensor<double> x = line({1, 2, 3});
    ConvParams<double> p(3, 1, 1, 1);
    p.w(1, 0, 0) = 1;

    Tensor<double> zeros(1, 3);
    ConvGrads<double> g = conv1d_backward(x, p, zeros);
    for (const double v : g.input.data) CHECK(v == 0.0);
    for (const double v : g.weights) CHECK(v == 0.0);
    for (const double v : g.bias) CHECK(v == 0.0);

    Tensor<double> gout = line({0.5, -1, 2});
    g = conv1d_backward(x, p, gout);
    CHECK(g.input.data == gout.data);
}

TEST_CASE("conv1d backward matches finite differences over 10 seeds") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed)
        CHECK(finite_difference_check("conv1d", seed) < 1e-4);
}

TEST_CASE("relu forward and backward") {
    Tensor<double> x = line({-1, 0, 2});
    CHECK(relu(x).data == std::vector<double>{0, 0, 2});

    Tensor<double> pos = line({1, 2, 3});
    CHECK(relu(pos).data == pos.data);

    for (std::uint64_t seed = 1; seed <= 10; ++seed)
        CHECK(finite_difference_check("relu", seed) < 1e-6);
}

TEST_CASE("channel_softmax analytic columns") {
    Tensor<double> z(2, 2);
    z.at(0, 1) = std::log(2.0);
    const Tensor<double> p = channel_softmax(z);
    CHECK(p.at(0, 0) == doctest::Approx(0.5));
    CHECK(p.at(1, 0) == doctest::Approx(0.5));
    CHECK(p.at(0, 1) == doctest::Approx(2.0 / 3.0));
    CHECK(p.at(1, 1) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("channel_softmax matches exp/sum oracle and normalizes") {
    Rng rng(11);
    Tensor<double> z(5, 20);
    for (auto& v : z.data) v = rng.uniform(-5, 5);
    const Tensor<double> p = channel_softmax(z);
    for (int t = 0; t < z.time; ++t) {
        double denom = 0;
        for (int c = 0; c < 5; ++c) denom += std::exp(z.at(c, t));
        double sum = 0;
        for (int c = 0; c < 5; ++c) {
            CHECK(p.at(c, t) == doctest::Approx(std::exp(z.at(c, t)) / denom).epsilon(1e-9));
            CHECK(p.at(c, t) >= 0.0);
            sum += p.at(c, t);
        }
        CHECK(std::abs(sum - 1.0) < 1e-6);
    }
}

TEST_CASE("log softmax equals log of softmax and stays finite") {
    Rng rng(12);
    Tensor<double> z(4, 8);
    for (auto& v : z.data) v = rng.uniform(-80, 80);  // drives probs to ~0
    const Tensor<double> lp = channel_log_softmax(z);
    const Tensor<double> p = channel_softmax(z);
    for (size_t i = 0; i < lp.size(); ++i) {
        CHECK(std::isfinite(lp.data[i]));
        CHECK(lp.data[i] ==
              doctest::Approx(std::log(std::max(p.data[i], kProbFloor))).epsilon(1e-6));
    }
}

TEST_CASE("softmax + cross-entropy composite gradient") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed)
        CHECK(finite_difference_check("softmax_xent", seed) < 1e-4);
}

TEST_CASE("dropout rate 0 and eval mode are identities") {
    Rng rng(5);
    Tensor<float> x(3, 7);
    for (auto& v : x.data) v = static_cast<float>(rng.uniform(-1, 1));
    CHECK(dropout(x, 0.0, true, rng).data == x.data);
    CHECK(dropout(x, 0.5, false, rng).data == x.data);
}

TEST_CASE("dropout preserves the mean over seeds") {
    Tensor<float> x(32, 256);
    Rng init(99);
    double in_mean = 0;
    for (auto& v : x.data) {
        v = static_cast<float>(init.uniform(0.5, 1.5));
        in_mean += v;
    }
    in_mean /= static_cast<double>(x.size());

    double out_mean = 0;
    const int n_seeds = 12;
    for (std::uint64_t seed = 1; seed <= n_seeds; ++seed) {
        Rng rng(seed);
        const Tensor<float> y = dropout(x, 0.5, true, rng);
        for (const float v : y.data) out_mean += v;
    }
    out_mean /= static_cast<double>(x.size()) * n_seeds;
    CHECK(std::abs(out_mean - in_mean) / in_mean < 0.05);
}

TEST_CASE("dropout backward reuses the forward mask") {
    Rng rng(4);
    Tensor<double> x(2, 50);
    for (auto& v : x.data) v = rng.uniform(1, 2);
    std::vector<double> mask;
    const Tensor<double> y = dropout(x, 0.5, true, rng, &mask);
    Tensor<double> gout(2, 50);
    for (auto& v : gout.data) v = 1.0;
    const Tensor<double> gin = dropout_backward(gout, mask);
    for (size_t i = 0; i < gin.size(); ++i)
        CHECK(gin.data[i] == (y.data[i] == 0.0 ? 0.0 : mask[i]));
}

TEST_CASE("primitives are deterministic given the seed") {
    Tensor<float> x(4, 33);
    Rng fill(8);
    for (auto& v : x.data) v = static_cast<float>(fill.uniform(-1, 1));
    Rng a(123), b(123);
    CHECK(dropout(x, 0.3, true, a).data == dropout(x, 0.3, true, b).data);

    ConvParams<float> p(3, 4, 4, 2);
    Rng wr(9);
    for (auto& w : p.weights) w = static_cast<float>(wr.uniform(-1, 1));
    CHECK(conv1d_forward(x, p).data == conv1d_forward(x, p).data);
}

TEST_CASE("finite_difference_check rejects unknown primitive ids") {
    CHECK_THROWS_AS(finite_difference_check("nope", 1), FormatError);
}
