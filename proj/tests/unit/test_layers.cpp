#include <cmath>
#include <random>

#include "doctest.h"
#include "salcnn/layers.hpp"

using namespace salcnn;

namespace {

Tensor<double> random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng,
                             double scale = 1.0) {
    Tensor<double> t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = (2.0 * u01(rng) - 1.0) * scale;
    return t;
}

CbamParams<double> zero_cbam(std::size_t c, std::size_t c_hid, std::size_t k) {
    return CbamParams<double>{Tensor<double>({c_hid, c}), Tensor<double>({c_hid}),
                              Tensor<double>({c, c_hid}), Tensor<double>({c}),
                              Tensor<double>({1, 2, k, k})};
}

CbamParams<double> random_cbam(std::size_t c, std::size_t c_hid, std::size_t k,
                               std::mt19937_64& rng) {
    CbamParams<double> p = zero_cbam(c, c_hid, k);
    for (auto* t : {&p.mlp_w1, &p.mlp_b1, &p.mlp_w2, &p.mlp_b2, &p.spatial_kernel})
        for (std::size_t i = 0; i < t->size(); ++i) (*t)[i] = 2.0 * u01(rng) - 1.0;
    return p;
}

LstmParams<double> zero_lstm(std::size_t h, std::size_t d) {
    return LstmParams<double>{Tensor<double>({h, h + d}), Tensor<double>({h, h + d}),
                              Tensor<double>({h, h + d}), Tensor<double>({h, h + d}),
                              Tensor<double>({h}),        Tensor<double>({h}),
                              Tensor<double>({h}),        Tensor<double>({h})};
}

}  // namespace

TEST_CASE("conv block zero and identity behaviour") {
    std::mt19937_64 rng(1);
    ConvBlockParams<double> zero{Tensor<double>({2, 1, 3, 3}), Tensor<double>({2})};
    Tensor<double> x = random_tensor({1, 4, 5}, rng);
    Tensor<double> y = conv_block_forward(x, zero);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == 0.0);

    ConvBlockParams<double> ident{Tensor<double>({1, 1, 3, 3}), Tensor<double>({1})};
    ident.kernels.at4(0, 0, 1, 1) = 1.0;
    Tensor<double> pos({1, 3, 3});
    for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = u01(rng) + 0.1;
    Tensor<double> out = conv_block_forward(pos, ident);
    for (std::size_t i = 0; i < pos.size(); ++i)
        CHECK(out[i] == doctest::Approx(pos[i]).epsilon(1e-14));
}

TEST_CASE("conv block backward matches finite differences") {
    std::mt19937_64 rng(2);
    ConvBlockParams<double> p = ConvBlockParams<double>::init(3, 2, 3, rng);
    Tensor<double> x = random_tensor({2, 4, 5}, rng);
    Tensor<double> gout = random_tensor({3, 4, 5}, rng);

    auto loss = [&]() {
        Tensor<double> out = conv_block_forward(x, p);
        double acc = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) acc += out[i] * gout[i];
        return acc;
    };
    ConvBlockCache<double> cache;
    conv_block_forward(x, p, &cache);
    ConvBlockParams<double> grads{Tensor<double>(p.kernels.shape()), Tensor<double>(p.bias.shape())};
    Tensor<double> gx = conv_block_backward(gout, cache, p, grads);
    auto rep = grad_check(loss, {&x, &p.kernels, &p.bias},
                          {&gx, &grads.kernels, &grads.bias}, 1e-5, 1e-6);
    CHECK(rep.pass);
}

TEST_CASE("cbam channel attention trivial cases") {
    std::mt19937_64 rng(3);
    // zero MLP -> sigmoid(0) = 0.5 per channel
    CbamParams<double> zero = zero_cbam(4, 2, 3);
    Tensor<double> f = random_tensor({4, 3, 5}, rng);
    Tensor<double> mc = cbam_channel_attention(f, zero);
    for (std::size_t i = 0; i < 4; ++i) CHECK(mc[i] == 0.5);

    // constant map: avg == max pooled vectors, so Mc = sigmoid(2*MLP(v))
    CbamParams<double> p = random_cbam(4, 2, 3, rng);
    Tensor<double> constant({4, 3, 5});
    for (std::size_t c = 0; c < 4; ++c)
        for (std::size_t i = 0; i < 15; ++i) constant[c * 15 + i] = 0.3 * (c + 1.0);
    Tensor<double> got = cbam_channel_attention(constant, p);
    Tensor<double> v({4});
    for (std::size_t c = 0; c < 4; ++c) v[c] = 0.3 * (c + 1.0);
    Tensor<double> one_branch = cbam_mlp<double>(v, p, nullptr);
    for (std::size_t c = 0; c < 4; ++c)
        CHECK(got[c] == doctest::Approx(sigmoid_scalar(2.0 * one_branch[c])).epsilon(1e-12));
}

TEST_CASE("cbam channel attention matches direct transcription") {
    // step-by-step evaluation of the channel attention formula
    std::mt19937_64 rng(5);
    CbamParams<double> p = random_cbam(3, 2, 3, rng);
    Tensor<double> f = random_tensor({3, 4, 4}, rng);
    Tensor<double> got = cbam_channel_attention(f, p);

    for (std::size_t c = 0; c < 3; ++c) {
        double avg = 0.0, mx = f[c * 16];
        for (std::size_t i = 0; i < 16; ++i) {
            avg += f[c * 16 + i];
            mx = std::max(mx, f[c * 16 + i]);
        }
        avg /= 16.0;
        auto mlp = [&](const std::vector<double>& pooled, std::size_t out_c) {
            double acc = p.mlp_b2[out_c];
            for (std::size_t j = 0; j < 2; ++j) {
                double h = p.mlp_b1[j];
                for (std::size_t k = 0; k < 3; ++k) h += p.mlp_w1.at2(j, k) * pooled[k];
                acc += p.mlp_w2.at2(out_c, j) * std::max(h, 0.0);
            }
            return acc;
        };
        std::vector<double> avgv(3), maxv(3);
        for (std::size_t cc = 0; cc < 3; ++cc) {
            double a = 0.0, m = f[cc * 16];
            for (std::size_t i = 0; i < 16; ++i) {
                a += f[cc * 16 + i];
                m = std::max(m, f[cc * 16 + i]);
            }
            avgv[cc] = a / 16.0;
            maxv[cc] = m;
        }
        const double want = sigmoid_scalar(mlp(avgv, c) + mlp(maxv, c));
        CHECK(got[c] == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("cbam spatial attention trivial cases and backward") {
    std::mt19937_64 rng(7);
    CbamParams<double> zero = zero_cbam(3, 2, 3);
    Tensor<double> f = random_tensor({3, 4, 5}, rng);
    Tensor<double> ms = cbam_spatial_attention(f, zero);
    for (std::size_t i = 0; i < ms.size(); ++i) CHECK(ms[i] == 0.5);

    // single channel: avg map == max map
    Tensor<double> single = random_tensor({1, 4, 5}, rng);
    CbamSpatialCache<double> sc;
    cbam_spatial_attention(single, zero, &sc);
    for (std::size_t i = 0; i < 20; ++i) CHECK(sc.cat[i] == sc.cat[20 + i]);

    // backward vs finite differences
    CbamParams<double> p = random_cbam(3, 2, 3, rng);
    Tensor<double> gout = random_tensor({1, 4, 5}, rng);
    auto loss = [&]() {
        Tensor<double> out = cbam_spatial_attention(f, p);
        double acc = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) acc += out[i] * gout[i];
        return acc;
    };
    CbamSpatialCache<double> cache;
    cbam_spatial_attention(f, p, &cache);
    CbamParams<double> grads = zero_cbam(3, 2, 3);
    Tensor<double> gf = cbam_spatial_backward(gout, cache, p, grads);
    auto rep = grad_check(loss, {&f, &p.spatial_kernel}, {&gf, &grads.spatial_kernel},
                          1e-5, 1e-6);
    CHECK(rep.pass);
}

TEST_CASE("cbam_apply trivial and compositional equivalence") {
    std::mt19937_64 rng(11);
    CbamParams<double> zero = zero_cbam(3, 2, 3);
    Tensor<double> f = random_tensor({3, 4, 5}, rng);
    Tensor<double> out = cbam_apply(f, zero);
    for (std::size_t i = 0; i < f.size(); ++i)
        CHECK(out[i] == doctest::Approx(0.25 * f[i]).epsilon(1e-14));

    Tensor<double> zf({3, 4, 5});
    Tensor<double> zout = cbam_apply(zf, zero);
    for (std::size_t i = 0; i < zout.size(); ++i) CHECK(zout[i] == 0.0);

    // composing the two sub-operations by hand gives the same result
    CbamParams<double> p = random_cbam(3, 2, 3, rng);
    Tensor<double> got = cbam_apply(f, p);
    Tensor<double> mc = cbam_channel_attention(f, p);
    Tensor<double> fprime(f.shape());
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < 20; ++i) fprime[c * 20 + i] = mc[c] * f[c * 20 + i];
    Tensor<double> ms = cbam_spatial_attention(fprime, p);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < 20; ++i)
            CHECK(got[c * 20 + i] ==
                  doctest::Approx(ms[i] * fprime[c * 20 + i]).epsilon(1e-12));
}

TEST_CASE("cbam attenuation and open-interval properties") {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 25; ++trial) {
        CbamParams<double> p = random_cbam(4, 2, 3, rng);
        Tensor<double> f = random_tensor({4, 5, 6}, rng, 3.0);
        CbamCache<double> cache;
        Tensor<double> out = cbam_apply(f, p, &cache);
        for (std::size_t i = 0; i < f.size(); ++i) CHECK(std::abs(out[i]) <= std::abs(f[i]));
        for (std::size_t i = 0; i < cache.channel.mc.size(); ++i) {
            CHECK(cache.channel.mc[i] > 0.0);
            CHECK(cache.channel.mc[i] < 1.0);
        }
        for (std::size_t i = 0; i < cache.spatial.ms.size(); ++i) {
            CHECK(cache.spatial.ms[i] > 0.0);
            CHECK(cache.spatial.ms[i] < 1.0);
        }
    }
}

TEST_CASE("cbam_apply backward matches finite differences") {
    std::mt19937_64 rng(17);
    CbamParams<double> p = random_cbam(3, 2, 3, rng);
    Tensor<double> f = random_tensor({3, 4, 5}, rng);
    Tensor<double> gout = random_tensor({3, 4, 5}, rng);
    auto loss = [&]() {
        Tensor<double> out = cbam_apply(f, p);
        double acc = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) acc += out[i] * gout[i];
        return acc;
    };
    CbamCache<double> cache;
    cbam_apply(f, p, &cache);
    CbamParams<double> grads = zero_cbam(3, 2, 3);
    Tensor<double> gf = cbam_backward(gout, cache, p, grads);
    auto rep = grad_check(
        loss, {&f, &p.mlp_w1, &p.mlp_b1, &p.mlp_w2, &p.mlp_b2, &p.spatial_kernel},
        {&gf, &grads.mlp_w1, &grads.mlp_b1, &grads.mlp_w2, &grads.mlp_b2,
         &grads.spatial_kernel},
        1e-5, 1e-6);
    CHECK(rep.pass);
}

TEST_CASE("lstm cell zero parameters") {
    LstmParams<double> p = zero_lstm(3, 2);
    LstmState<double> prev = LstmState<double>::zeros(3);
    Tensor<double> x({2}, {0.7, -0.4});
    LstmCellCache<double> cache;
    LstmState<double> next = lstm_cell(x, prev, p, &cache);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(cache.f[i] == 0.5);
        CHECK(cache.i[i] == 0.5);
        CHECK(cache.o[i] == 0.5);
        CHECK(cache.g[i] == 0.0);
        CHECK(next.c[i] == 0.0);
        CHECK(next.h[i] == 0.0);
    }

    // zero params, prev.c = 1: c_t = 0.5, h_t = 0.5*tanh(0.5)
    prev.c.fill(1.0);
    next = lstm_cell(x, prev, p);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(next.c[i] == 0.5);
        CHECK(next.h[i] == doctest::Approx(0.5 * std::tanh(0.5)).epsilon(1e-15));
    }

    CHECK_THROWS_WITH_AS(lstm_cell(Tensor<double>({5}), prev, p),
                         doctest::Contains("gate"), std::invalid_argument);
}

TEST_CASE("lstm hidden state stays inside the unit box") {
    std::mt19937_64 rng(19);
    LstmParams<double> p = LstmParams<double>::init(4, 3, rng);
    LstmState<double> st = LstmState<double>::zeros(4);
    for (int t = 0; t < 20; ++t) {
        Tensor<double> x = random_tensor({3}, rng, 5.0);
        st = lstm_cell(x, st, p);
        for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(st.h[i]) < 1.0);
    }
}

TEST_CASE("lstm 3-step backward-through-time matches finite differences") {
    std::mt19937_64 rng(23);
    std::vector<LstmParams<double>> layers = {LstmParams<double>::init(4, 3, rng)};
    Tensor<double> xs = random_tensor({3, 3}, rng);
    Tensor<double> gout = random_tensor({3, 4}, rng);

    auto loss = [&]() {
        Tensor<double> hs = lstm_sequence(xs, layers);
        double acc = 0.0;
        for (std::size_t i = 0; i < hs.size(); ++i) acc += hs[i] * gout[i];
        return acc;
    };
    LstmSequenceCache<double> cache;
    lstm_sequence(xs, layers, &cache);
    std::vector<LstmParams<double>> grads = {zero_lstm(4, 3)};
    Tensor<double> gxs = lstm_sequence_backward(gout, cache, layers, grads);
    auto rep = grad_check(loss,
                          {&xs, &layers[0].w_f, &layers[0].w_i, &layers[0].w_c, &layers[0].w_o,
                           &layers[0].b_f, &layers[0].b_i, &layers[0].b_c, &layers[0].b_o},
                          {&gxs, &grads[0].w_f, &grads[0].w_i, &grads[0].w_c, &grads[0].w_o,
                           &grads[0].b_f, &grads[0].b_i, &grads[0].b_c, &grads[0].b_o},
                          1e-5, 1e-5);
    CHECK(rep.pass);
}

TEST_CASE("stacked lstm equals manual composition of single layers") {
    std::mt19937_64 rng(29);
    std::vector<LstmParams<double>> two = {LstmParams<double>::init(4, 3, rng),
                                           LstmParams<double>::init(5, 4, rng)};
    Tensor<double> xs = random_tensor({6, 3}, rng);
    Tensor<double> got = lstm_sequence(xs, two);

    std::vector<LstmParams<double>> first = {two[0]};
    std::vector<LstmParams<double>> second = {two[1]};
    Tensor<double> mid = lstm_sequence(xs, first);
    Tensor<double> want = lstm_sequence(mid, second);
    REQUIRE(got.shape() == want.shape());
    for (std::size_t i = 0; i < got.size(); ++i)
        CHECK(std::abs(got[i] - want[i]) < 1e-12);

    // T = 1 reduces to a single cell step per layer
    Tensor<double> x1({1, 3}, {0.3, -0.2, 0.9});
    Tensor<double> seq1 = lstm_sequence(x1, first);
    Tensor<double> xv({3}, {0.3, -0.2, 0.9});
    LstmState<double> cell = lstm_cell(xv, LstmState<double>::zeros(4), two[0]);
    for (std::size_t i = 0; i < 4; ++i) CHECK(seq1.at2(0, i) == cell.h[i]);

    // zero everything stays zero
    std::vector<LstmParams<double>> zl = {zero_lstm(4, 3)};
    Tensor<double> zx({5, 3});
    Tensor<double> zh = lstm_sequence(zx, zl);
    for (std::size_t i = 0; i < zh.size(); ++i) CHECK(zh[i] == 0.0);

    CHECK_THROWS_AS(lstm_sequence(Tensor<double>({1, 2}), std::vector<LstmParams<double>>{}),
                    std::invalid_argument);
}

TEST_CASE("dense head") {
    DenseParams<double> zero{Tensor<double>({1, 4}), Tensor<double>({1})};
    zero.b[0] = 2.5;
    Tensor<double> x({4}, {1, 2, 3, 4});
    CHECK(dense(x, zero)[0] == 2.5);

    DenseParams<double> pick{Tensor<double>({1, 4}), Tensor<double>({1})};
    pick.w[2] = 1.0;
    CHECK(dense(x, pick)[0] == 3.0);

    std::mt19937_64 rng(31);
    DenseParams<double> p = DenseParams<double>::init(4, rng);
    auto loss = [&]() { return dense(x, p)[0]; };
    DenseParams<double> grads{Tensor<double>({1, 4}), Tensor<double>({1})};
    Tensor<double> gx = dense_backward(1.0, x, p, grads);
    auto rep = grad_check(loss, {&x, &p.w, &p.b}, {&gx, &grads.w, &grads.b}, 1e-5, 1e-7);
    CHECK(rep.pass);
}

TEST_CASE("dropout identity, masking, expectation") {
    Tensor<double> x({8});
    x.fill(1.0);
    auto r0 = dropout(x, 0.0, true, 1);
    for (std::size_t i = 0; i < 8; ++i) CHECK(r0.out[i] == 1.0);
    auto r1 = dropout(x, 0.5, false, 1);
    for (std::size_t i = 0; i < 8; ++i) CHECK(r1.out[i] == 1.0);
    CHECK_THROWS_AS(dropout(x, 1.0, true, 1), std::invalid_argument);

    // inverted scaling preserves the mean: 1e6 masked ones average to ~1
    Tensor<double> big({1000000});
    big.fill(1.0);
    auto r = dropout(big, 0.1, true, 99);
    double mean = 0.0;
    for (std::size_t i = 0; i < big.size(); ++i) mean += r.out[i];
    mean /= static_cast<double>(big.size());
    CHECK(std::abs(mean - 1.0) < 0.01);

    // same seed, same mask
    auto ra = dropout(big, 0.1, true, 7);
    auto rb = dropout(big, 0.1, true, 7);
    CHECK(ra.keep == rb.keep);
}
