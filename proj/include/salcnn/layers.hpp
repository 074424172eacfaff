#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "salcnn/numerics.hpp"
#include "salcnn/tensor.hpp"

namespace salcnn {

template <typename T>
void init_uniform(Tensor<T>& t, double bound, std::mt19937_64& rng) {
    for (std::size_t i = 0; i < t.size(); ++i)
        t[i] = static_cast<T>((2.0 * u01(rng) - 1.0) * bound);
}

// ---------------------------------------------------------------------------
// Convolution block: shape-preserving 3x3 conv + ReLU.
// ---------------------------------------------------------------------------

template <typename T>
struct ConvBlockParams {
    Tensor<T> kernels;  // [C_out, C_in, 3, 3]
    Tensor<T> bias;     // [C_out]

    static ConvBlockParams init(std::size_t c_out, std::size_t c_in, std::size_t k,
                                std::mt19937_64& rng) {
        ConvBlockParams p{Tensor<T>({c_out, c_in, k, k}), Tensor<T>({c_out})};
        const double bound = 1.0 / std::sqrt(static_cast<double>(c_in * k * k));
        init_uniform(p.kernels, bound, rng);
        init_uniform(p.bias, bound, rng);
        return p;
    }
};

template <typename T>
struct ConvBlockCache {
    Tensor<T> input;
    Tensor<T> pre_relu;
};

template <typename T>
Tensor<T> conv_block_forward(const Tensor<T>& x, const ConvBlockParams<T>& p,
                             ConvBlockCache<T>* cache = nullptr) {
    const int pad = static_cast<int>(p.kernels.dim(2) / 2);
    Tensor<T> pre = conv2d(x, p.kernels, p.bias, pad, 1);
    Tensor<T> out = relu(pre);
    if (cache) {
        cache->input = x;
        cache->pre_relu = std::move(pre);
    }
    return out;
}

template <typename T>
Tensor<T> conv_block_backward(const Tensor<T>& grad_out, const ConvBlockCache<T>& cache,
                              const ConvBlockParams<T>& p, ConvBlockParams<T>& grads) {
    const int pad = static_cast<int>(p.kernels.dim(2) / 2);
    Tensor<T> grad_pre = relu_backward(grad_out, cache.pre_relu);
    Conv2dGrads<T> g = conv2d_backward(grad_pre, cache.input, p.kernels, pad, 1);
    grads.kernels += g.grad_kernels;
    grads.bias += g.grad_bias;
    return std::move(g.grad_input);
}

// ---------------------------------------------------------------------------
// CBAM: channel attention Mc = sigmoid(MLP(avgpool) + MLP(maxpool)) with a
// shared two-layer MLP, then spatial attention Ms = sigmoid(conv(concat of
// channel-wise avg/max maps)). Applied multiplicatively: F' = Mc (x) F,
// F'' = Ms (x) F'.
// ---------------------------------------------------------------------------

template <typename T>
struct CbamParams {
    Tensor<T> mlp_w1;          // [C_hid, C]
    Tensor<T> mlp_b1;          // [C_hid]
    Tensor<T> mlp_w2;          // [C, C_hid]
    Tensor<T> mlp_b2;          // [C]
    Tensor<T> spatial_kernel;  // [1, 2, k, k]

    std::size_t channels() const { return mlp_w1.dim(1); }
    std::size_t spatial_k() const { return spatial_kernel.dim(2); }

    static CbamParams init(std::size_t c, std::size_t reduction, std::size_t k,
                           std::mt19937_64& rng) {
        if (k % 2 == 0) throw std::invalid_argument("CbamParams: spatial kernel must be odd");
        const std::size_t c_hid = std::max<std::size_t>(c / reduction, 1);
        CbamParams p{Tensor<T>({c_hid, c}), Tensor<T>({c_hid}), Tensor<T>({c, c_hid}),
                     Tensor<T>({c}), Tensor<T>({1, 2, k, k})};
        init_uniform(p.mlp_w1, 1.0 / std::sqrt(static_cast<double>(c)), rng);
        init_uniform(p.mlp_b1, 1.0 / std::sqrt(static_cast<double>(c)), rng);
        init_uniform(p.mlp_w2, 1.0 / std::sqrt(static_cast<double>(c_hid)), rng);
        init_uniform(p.mlp_b2, 1.0 / std::sqrt(static_cast<double>(c_hid)), rng);
        init_uniform(p.spatial_kernel, 1.0 / std::sqrt(2.0 * static_cast<double>(k * k)), rng);
        return p;
    }
};

template <typename T>
struct CbamMlpCache {
    Tensor<T> input;      // [C]
    Tensor<T> hidden_pre; // [C_hid]
};

// shared MLP: w2 * relu(w1*v + b1) + b2
template <typename T>
Tensor<T> cbam_mlp(const Tensor<T>& v, const CbamParams<T>& p, CbamMlpCache<T>* cache) {
    const std::size_t c = p.mlp_w1.dim(1), c_hid = p.mlp_w1.dim(0);
    Tensor<T> hpre({c_hid});
    for (std::size_t i = 0; i < c_hid; ++i) {
        T acc = p.mlp_b1[i];
        for (std::size_t j = 0; j < c; ++j) acc += p.mlp_w1.at2(i, j) * v[j];
        hpre[i] = acc;
    }
    Tensor<T> out({c});
    for (std::size_t i = 0; i < c; ++i) {
        T acc = p.mlp_b2[i];
        for (std::size_t j = 0; j < c_hid; ++j)
            acc += p.mlp_w2.at2(i, j) * (hpre[j] > T{0} ? hpre[j] : T{0});
        out[i] = acc;
    }
    if (cache) {
        cache->input = v;
        cache->hidden_pre = std::move(hpre);
    }
    return out;
}

template <typename T>
Tensor<T> cbam_mlp_backward(const Tensor<T>& grad_out, const CbamMlpCache<T>& cache,
                            const CbamParams<T>& p, CbamParams<T>& grads) {
    const std::size_t c = p.mlp_w1.dim(1), c_hid = p.mlp_w1.dim(0);
    Tensor<T> dh({c_hid});
    for (std::size_t i = 0; i < c; ++i) {
        grads.mlp_b2[i] += grad_out[i];
        for (std::size_t j = 0; j < c_hid; ++j) {
            const T hj = cache.hidden_pre[j] > T{0} ? cache.hidden_pre[j] : T{0};
            grads.mlp_w2.at2(i, j) += grad_out[i] * hj;
            dh[j] += grad_out[i] * p.mlp_w2.at2(i, j);
        }
    }
    Tensor<T> dv({c});
    for (std::size_t j = 0; j < c_hid; ++j) {
        if (cache.hidden_pre[j] <= T{0}) continue;
        grads.mlp_b1[j] += dh[j];
        for (std::size_t k = 0; k < c; ++k) {
            grads.mlp_w1.at2(j, k) += dh[j] * cache.input[k];
            dv[k] += dh[j] * p.mlp_w1.at2(j, k);
        }
    }
    return dv;
}

template <typename T>
struct CbamChannelCache {
    Tensor<T> input;
    PoolResult<T> avg, max;
    CbamMlpCache<T> mlp_avg, mlp_max;
    Tensor<T> mc;  // [C]
};

template <typename T>
Tensor<T> cbam_channel_attention(const Tensor<T>& f, const CbamParams<T>& p,
                                 CbamChannelCache<T>* cache = nullptr) {
    if (f.dim(0) != p.channels())
        throw std::invalid_argument("cbam_channel_attention: channel count " +
                                    std::to_string(f.dim(0)) + " != params " +
                                    std::to_string(p.channels()));
    CbamChannelCache<T> local;
    CbamChannelCache<T>& cc = cache ? *cache : local;
    cc.input = f;
    cc.avg = pool_channel(f, PoolMode::Avg);
    cc.max = pool_channel(f, PoolMode::Max);
    Tensor<T> va({f.dim(0)}, cc.avg.out.vec());
    Tensor<T> vm({f.dim(0)}, cc.max.out.vec());
    Tensor<T> s = cbam_mlp(va, p, &cc.mlp_avg);
    Tensor<T> sm = cbam_mlp(vm, p, &cc.mlp_max);
    s += sm;
    cc.mc = sigmoid(s);
    return cc.mc;
}

// dMc -> dF (plus parameter grads)
template <typename T>
Tensor<T> cbam_channel_backward(const Tensor<T>& grad_mc, const CbamChannelCache<T>& cc,
                                const CbamParams<T>& p, CbamParams<T>& grads) {
    Tensor<T> ds = sigmoid_backward(grad_mc, cc.mc);
    Tensor<T> dva = cbam_mlp_backward(ds, cc.mlp_avg, p, grads);
    Tensor<T> dvm = cbam_mlp_backward(ds, cc.mlp_max, p, grads);
    Tensor<T> da({cc.input.dim(0), 1, 1}, dva.vec());
    Tensor<T> dm({cc.input.dim(0), 1, 1}, dvm.vec());
    Tensor<T> df = pool_channel_backward(da, cc.input, PoolMode::Avg, {});
    df += pool_channel_backward(dm, cc.input, PoolMode::Max, cc.max.argmax);
    return df;
}

template <typename T>
struct CbamSpatialCache {
    Tensor<T> input;
    PoolResult<T> avg, max;
    Tensor<T> cat;  // [2, H, W]
    Tensor<T> ms;   // [1, H, W]
};

template <typename T>
Tensor<T> cbam_spatial_attention(const Tensor<T>& f, const CbamParams<T>& p,
                                 CbamSpatialCache<T>* cache = nullptr) {
    if (p.spatial_kernel.dim(1) != 2)
        throw std::invalid_argument("cbam_spatial_attention: spatial kernel needs 2 input channels");
    CbamSpatialCache<T> local;
    CbamSpatialCache<T>& sc = cache ? *cache : local;
    const std::size_t h = f.dim(1), w = f.dim(2);
    sc.input = f;
    sc.avg = pool_spatial(f, PoolMode::Avg);
    sc.max = pool_spatial(f, PoolMode::Max);
    sc.cat = Tensor<T>({2, h, w});
    for (std::size_t i = 0; i < h * w; ++i) {
        sc.cat[i] = sc.avg.out[i];
        sc.cat[h * w + i] = sc.max.out[i];
    }
    const int pad = static_cast<int>(p.spatial_k() / 2);
    Tensor<T> zero_bias({1});
    Tensor<T> pre = conv2d(sc.cat, p.spatial_kernel, zero_bias, pad, 1);
    sc.ms = sigmoid(pre);
    return sc.ms;
}

template <typename T>
Tensor<T> cbam_spatial_backward(const Tensor<T>& grad_ms, const CbamSpatialCache<T>& sc,
                                const CbamParams<T>& p, CbamParams<T>& grads) {
    const std::size_t h = sc.input.dim(1), w = sc.input.dim(2);
    Tensor<T> dpre = sigmoid_backward(grad_ms, sc.ms);
    const int pad = static_cast<int>(p.spatial_k() / 2);
    Conv2dGrads<T> g = conv2d_backward(dpre, sc.cat, p.spatial_kernel, pad, 1);
    grads.spatial_kernel += g.grad_kernels;  // the spatial conv has no bias
    Tensor<T> davg({1, h, w});
    Tensor<T> dmax({1, h, w});
    for (std::size_t i = 0; i < h * w; ++i) {
        davg[i] = g.grad_input[i];
        dmax[i] = g.grad_input[h * w + i];
    }
    Tensor<T> df = pool_spatial_backward(davg, sc.input, PoolMode::Avg, {});
    df += pool_spatial_backward(dmax, sc.input, PoolMode::Max, sc.max.argmax);
    return df;
}

template <typename T>
struct CbamCache {
    Tensor<T> input;   // F
    CbamChannelCache<T> channel;
    Tensor<T> fprime;  // F'
    CbamSpatialCache<T> spatial;
};

template <typename T>
Tensor<T> cbam_apply(const Tensor<T>& f, const CbamParams<T>& p,
                     CbamCache<T>* cache = nullptr) {
    CbamCache<T> local;
    CbamCache<T>& c = cache ? *cache : local;
    const std::size_t ch = f.dim(0), h = f.dim(1), w = f.dim(2);
    c.input = f;
    Tensor<T> mc = cbam_channel_attention(f, p, &c.channel);
    c.fprime = Tensor<T>(f.shape());
    for (std::size_t i = 0; i < ch; ++i)
        for (std::size_t j = 0; j < h * w; ++j)
            c.fprime[i * h * w + j] = mc[i] * f[i * h * w + j];
    Tensor<T> ms = cbam_spatial_attention(c.fprime, p, &c.spatial);
    Tensor<T> out(f.shape());
    for (std::size_t i = 0; i < ch; ++i)
        for (std::size_t j = 0; j < h * w; ++j)
            out[i * h * w + j] = ms[j] * c.fprime[i * h * w + j];
    return out;
}

template <typename T>
Tensor<T> cbam_backward(const Tensor<T>& grad_out, const CbamCache<T>& c,
                        const CbamParams<T>& p, CbamParams<T>& grads) {
    const std::size_t ch = c.input.dim(0), h = c.input.dim(1), w = c.input.dim(2);
    const Tensor<T>& ms = c.spatial.ms;
    Tensor<T> dms({1, h, w});
    Tensor<T> dfp(c.fprime.shape());
    for (std::size_t i = 0; i < ch; ++i) {
        for (std::size_t j = 0; j < h * w; ++j) {
            dfp[i * h * w + j] = grad_out[i * h * w + j] * ms[j];
            dms[j] += grad_out[i * h * w + j] * c.fprime[i * h * w + j];
        }
    }
    dfp += cbam_spatial_backward(dms, c.spatial, p, grads);
    const Tensor<T>& mc = c.channel.mc;
    Tensor<T> dmc({ch});
    Tensor<T> df(c.input.shape());
    for (std::size_t i = 0; i < ch; ++i) {
        for (std::size_t j = 0; j < h * w; ++j) {
            df[i * h * w + j] = dfp[i * h * w + j] * mc[i];
            dmc[i] += dfp[i * h * w + j] * c.input[i * h * w + j];
        }
    }
    df += cbam_channel_backward(dmc, c.channel, p, grads);
    return df;
}

// ---------------------------------------------------------------------------
// LSTM cell and stacked sequence.
// ---------------------------------------------------------------------------

template <typename T>
struct LstmParams {
    Tensor<T> w_f, w_i, w_c, w_o;  // [H, H+D]
    Tensor<T> b_f, b_i, b_c, b_o;  // [H]

    std::size_t hidden() const { return w_f.dim(0); }
    std::size_t input() const { return w_f.dim(1) - w_f.dim(0); }

    static LstmParams init(std::size_t hidden, std::size_t input, std::mt19937_64& rng) {
        const std::size_t cols = hidden + input;
        LstmParams p{Tensor<T>({hidden, cols}), Tensor<T>({hidden, cols}),
                     Tensor<T>({hidden, cols}), Tensor<T>({hidden, cols}),
                     Tensor<T>({hidden}),       Tensor<T>({hidden}),
                     Tensor<T>({hidden}),       Tensor<T>({hidden})};
        const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
        init_uniform(p.w_f, bound, rng);
        init_uniform(p.w_i, bound, rng);
        init_uniform(p.w_c, bound, rng);
        init_uniform(p.w_o, bound, rng);
        init_uniform(p.b_f, bound, rng);
        init_uniform(p.b_i, bound, rng);
        init_uniform(p.b_c, bound, rng);
        init_uniform(p.b_o, bound, rng);
        for (std::size_t i = 0; i < hidden; ++i) p.b_f[i] += T{1};  // forget-gate bias offset
        return p;
    }
};

template <typename T>
struct LstmState {
    Tensor<T> h, c;

    static LstmState zeros(std::size_t hidden) {
        return LstmState{Tensor<T>({hidden}), Tensor<T>({hidden})};
    }
};

template <typename T>
struct LstmCellCache {
    Tensor<T> z;         // [H+D] = concat(h_prev, x)
    Tensor<T> f, i, g, o;
    Tensor<T> c_prev, c, tanh_c;
};

template <typename T>
LstmState<T> lstm_cell(const Tensor<T>& x, const LstmState<T>& prev, const LstmParams<T>& p,
                       LstmCellCache<T>* cache = nullptr) {
    const std::size_t hd = p.hidden(), d = p.input();
    if (x.size() != d)
        throw std::invalid_argument("lstm_cell: input dim " + std::to_string(x.size()) +
                                    " != gate matrix input dim " + std::to_string(d));
    if (prev.h.size() != hd)
        throw std::invalid_argument("lstm_cell: state dim " + std::to_string(prev.h.size()) +
                                    " != hidden dim " + std::to_string(hd));
    Tensor<T> z({hd + d});
    for (std::size_t i = 0; i < hd; ++i) z[i] = prev.h[i];
    for (std::size_t i = 0; i < d; ++i) z[hd + i] = x[i];

    auto gate = [&](const Tensor<T>& w, const Tensor<T>& b) {
        Tensor<T> a({hd});
        for (std::size_t r = 0; r < hd; ++r) {
            T acc = b[r];
            const T* row = w.data() + r * (hd + d);
            for (std::size_t col = 0; col < hd + d; ++col) acc += row[col] * z[col];
            a[r] = acc;
        }
        return a;
    };

    Tensor<T> f = sigmoid(gate(p.w_f, p.b_f));
    Tensor<T> i = sigmoid(gate(p.w_i, p.b_i));
    Tensor<T> g = tanh_fwd(gate(p.w_c, p.b_c));
    Tensor<T> o = sigmoid(gate(p.w_o, p.b_o));

    LstmState<T> next{Tensor<T>({hd}), Tensor<T>({hd})};
    for (std::size_t r = 0; r < hd; ++r) next.c[r] = f[r] * prev.c[r] + i[r] * g[r];
    Tensor<T> tc = tanh_fwd(next.c);
    for (std::size_t r = 0; r < hd; ++r) next.h[r] = o[r] * tc[r];

    if (cache) {
        cache->z = std::move(z);
        cache->f = std::move(f);
        cache->i = std::move(i);
        cache->g = std::move(g);
        cache->o = std::move(o);
        cache->c_prev = prev.c;
        cache->c = next.c;
        cache->tanh_c = std::move(tc);
    }
    return next;
}

template <typename T>
struct LstmCellGradIn {
    Tensor<T> dx, dh_prev, dc_prev;
};

// dh/dc arrive from the step after and from the consumer of h_t.
template <typename T>
LstmCellGradIn<T> lstm_cell_backward(const Tensor<T>& dh, const Tensor<T>& dc,
                                     const LstmCellCache<T>& cc, const LstmParams<T>& p,
                                     LstmParams<T>& grads) {
    const std::size_t hd = p.hidden(), d = p.input();
    Tensor<T> dc_total({hd});
    Tensor<T> da_f({hd}), da_i({hd}), da_g({hd}), da_o({hd});
    for (std::size_t r = 0; r < hd; ++r) {
        const T t = cc.tanh_c[r];
        dc_total[r] = dc[r] + dh[r] * cc.o[r] * (T{1} - t * t);
        da_o[r] = dh[r] * t * cc.o[r] * (T{1} - cc.o[r]);
        da_f[r] = dc_total[r] * cc.c_prev[r] * cc.f[r] * (T{1} - cc.f[r]);
        da_i[r] = dc_total[r] * cc.g[r] * cc.i[r] * (T{1} - cc.i[r]);
        da_g[r] = dc_total[r] * cc.i[r] * (T{1} - cc.g[r] * cc.g[r]);
    }

    Tensor<T> dz({hd + d});
    auto accum = [&](const Tensor<T>& da, const Tensor<T>& w, Tensor<T>& gw, Tensor<T>& gb) {
        for (std::size_t r = 0; r < hd; ++r) {
            const T dar = da[r];
            if (dar == T{0}) continue;
            gb[r] += dar;
            T* gwrow = gw.data() + r * (hd + d);
            const T* wrow = w.data() + r * (hd + d);
            for (std::size_t col = 0; col < hd + d; ++col) {
                gwrow[col] += dar * cc.z[col];
                dz[col] += dar * wrow[col];
            }
        }
    };
    accum(da_f, p.w_f, grads.w_f, grads.b_f);
    accum(da_i, p.w_i, grads.w_i, grads.b_i);
    accum(da_g, p.w_c, grads.w_c, grads.b_c);
    accum(da_o, p.w_o, grads.w_o, grads.b_o);

    LstmCellGradIn<T> out{Tensor<T>({d}), Tensor<T>({hd}), Tensor<T>({hd})};
    for (std::size_t r = 0; r < hd; ++r) {
        out.dh_prev[r] = dz[r];
        out.dc_prev[r] = dc_total[r] * cc.f[r];
    }
    for (std::size_t i = 0; i < d; ++i) out.dx[i] = dz[hd + i];
    return out;
}

template <typename T>
struct LstmSequenceCache {
    // cells[layer][step]
    std::vector<std::vector<LstmCellCache<T>>> cells;
    std::size_t steps = 0;
};

// Stacked LSTM over xs [T, D]; returns the top layer's hidden states [T, H].
// States start at zero.
template <typename T>
Tensor<T> lstm_sequence(const Tensor<T>& xs, const std::vector<LstmParams<T>>& layers,
                        LstmSequenceCache<T>* cache = nullptr) {
    if (xs.rank() != 2 || xs.dim(0) < 1)
        throw std::invalid_argument("lstm_sequence: need a nonempty [T, D] input");
    if (layers.empty()) throw std::invalid_argument("lstm_sequence: no layers");
    const std::size_t steps = xs.dim(0);
    if (cache) {
        cache->cells.assign(layers.size(), std::vector<LstmCellCache<T>>(steps));
        cache->steps = steps;
    }

    Tensor<T> seq = xs;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const std::size_t hd = layers[l].hidden();
        if (layers[l].input() != seq.dim(1))
            throw std::invalid_argument("lstm_sequence: layer " + std::to_string(l) +
                                        " expects input dim " + std::to_string(layers[l].input()) +
                                        ", got " + std::to_string(seq.dim(1)));
        Tensor<T> out({steps, hd});
        LstmState<T> state = LstmState<T>::zeros(hd);
        for (std::size_t t = 0; t < steps; ++t) {
            Tensor<T> x({seq.dim(1)});
            for (std::size_t i = 0; i < x.size(); ++i) x[i] = seq.at2(t, i);
            state = lstm_cell(x, state, layers[l], cache ? &cache->cells[l][t] : nullptr);
            for (std::size_t i = 0; i < hd; ++i) out.at2(t, i) = state.h[i];
        }
        seq = std::move(out);
    }
    return seq;
}

// Backprop through time and layers. grad_seq is d(loss)/d(top hidden states)
// [T, H]. Returns d(loss)/d(xs); per-layer grads accumulate into `grads`.
template <typename T>
Tensor<T> lstm_sequence_backward(const Tensor<T>& grad_seq, const LstmSequenceCache<T>& cache,
                                 const std::vector<LstmParams<T>>& layers,
                                 std::vector<LstmParams<T>>& grads) {
    const std::size_t steps = cache.steps;
    Tensor<T> dseq = grad_seq;
    for (std::size_t li = layers.size(); li-- > 0;) {
        const LstmParams<T>& p = layers[li];
        const std::size_t hd = p.hidden(), d = p.input();
        Tensor<T> dxs({steps, d});
        Tensor<T> dh({hd}), dc({hd});
        for (std::size_t t = steps; t-- > 0;) {
            for (std::size_t i = 0; i < hd; ++i) dh[i] += dseq.at2(t, i);
            LstmCellGradIn<T> g = lstm_cell_backward(dh, dc, cache.cells[li][t], p, grads[li]);
            for (std::size_t i = 0; i < d; ++i) dxs.at2(t, i) = g.dx[i];
            dh = std::move(g.dh_prev);
            dc = std::move(g.dc_prev);
        }
        dseq = std::move(dxs);
    }
    return dseq;
}

// ---------------------------------------------------------------------------
// Dense head and dropout.
// ---------------------------------------------------------------------------

template <typename T>
struct DenseParams {
    Tensor<T> w;  // [1, H]
    Tensor<T> b;  // [1]

    static DenseParams init(std::size_t in, std::mt19937_64& rng) {
        DenseParams p{Tensor<T>({1, in}), Tensor<T>({1})};
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        init_uniform(p.w, bound, rng);
        init_uniform(p.b, bound, rng);
        return p;
    }
};

template <typename T>
Tensor<T> dense(const Tensor<T>& x, const DenseParams<T>& p) {
    if (x.size() != p.w.dim(1))
        throw std::invalid_argument("dense: input dim " + std::to_string(x.size()) +
                                    " != weight dim " + std::to_string(p.w.dim(1)));
    Tensor<T> out({1});
    T acc = p.b[0];
    for (std::size_t i = 0; i < x.size(); ++i) acc += p.w[i] * x[i];
    out[0] = acc;
    return out;
}

template <typename T>
Tensor<T> dense_backward(T grad_out, const Tensor<T>& saved_input, const DenseParams<T>& p,
                         DenseParams<T>& grads) {
    Tensor<T> dx(saved_input.shape());
    grads.b[0] += grad_out;
    for (std::size_t i = 0; i < saved_input.size(); ++i) {
        grads.w[i] += grad_out * saved_input[i];
        dx[i] = grad_out * p.w[i];
    }
    return dx;
}

template <typename T>
struct DropoutResult {
    Tensor<T> out;
    std::vector<std::uint8_t> keep;  // empty in inference mode
};

// Inverted dropout: survivors scaled by 1/(1-rate) so expectation is kept.
template <typename T>
DropoutResult<T> dropout(const Tensor<T>& x, double rate, bool training,
                         std::uint64_t rng_seed) {
    if (rate < 0.0 || rate >= 1.0)
        throw std::invalid_argument("dropout: rate must lie in [0, 1)");
    DropoutResult<T> r{x, {}};
    if (!training || rate == 0.0) return r;
    std::mt19937_64 rng(rng_seed);
    const T scale = static_cast<T>(1.0 / (1.0 - rate));
    r.keep.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const bool keep = u01(rng) >= rate;
        r.keep[i] = keep ? 1 : 0;
        r.out[i] = keep ? x[i] * scale : T{0};
    }
    return r;
}

template <typename T>
Tensor<T> dropout_backward(const Tensor<T>& grad_out, const DropoutResult<T>& saved,
                           double rate) {
    if (saved.keep.empty()) return grad_out;  // identity pass
    Tensor<T> g(grad_out.shape());
    const T scale = static_cast<T>(1.0 / (1.0 - rate));
    for (std::size_t i = 0; i < g.size(); ++i)
        g[i] = saved.keep[i] ? grad_out[i] * scale : T{0};
    return g;
}

}  // namespace salcnn
