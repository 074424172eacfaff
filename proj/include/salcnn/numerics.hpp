#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "salcnn/tensor.hpp"

namespace salcnn {

// uniform in [0,1) from raw 64-bit draws, stable across standard libraries
inline double u01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// ---------------------------------------------------------------------------
// 2-D convolution (cross-correlation, the usual deep-learning convention).
// input  [C_in, H, W], kernels [C_out, C_in, kH, kW], bias [C_out]
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernels,
                 const Tensor<T>& bias, int padding, int stride) {
    if (input.rank() != 3)
        throw std::invalid_argument("conv2d: input must be rank 3, got " + input.shape_str());
    if (kernels.rank() != 4)
        throw std::invalid_argument("conv2d: kernels must be rank 4, got " + kernels.shape_str());
    const std::size_t c_in = input.dim(0), h = input.dim(1), w = input.dim(2);
    const std::size_t c_out = kernels.dim(0), kh = kernels.dim(2), kw = kernels.dim(3);
    if (kernels.dim(1) != c_in)
        throw std::invalid_argument("conv2d: kernel input-channel axis " +
                                    std::to_string(kernels.dim(1)) + " != input channels " +
                                    std::to_string(c_in));
    if (bias.size() != c_out)
        throw std::invalid_argument("conv2d: bias axis " + std::to_string(bias.size()) +
                                    " != output channels " + std::to_string(c_out));
    if (kh % 2 == 0 || kw % 2 == 0)
        throw std::invalid_argument("conv2d: kernel dims must be odd");
    if (padding < 0 || stride < 1)
        throw std::invalid_argument("conv2d: need padding >= 0 and stride >= 1");

    const long hp = static_cast<long>(h) + 2L * padding - static_cast<long>(kh);
    const long wp = static_cast<long>(w) + 2L * padding - static_cast<long>(kw);
    if (hp < 0 || wp < 0 || hp % stride != 0 || wp % stride != 0)
        throw std::invalid_argument("conv2d: output spatial size is not integral");
    const std::size_t h_out = static_cast<std::size_t>(hp / stride) + 1;
    const std::size_t w_out = static_cast<std::size_t>(wp / stride) + 1;

    Tensor<T> out({c_out, h_out, w_out});
    for (std::size_t o = 0; o < c_out; ++o) {
        for (std::size_t y = 0; y < h_out; ++y) {
            for (std::size_t x = 0; x < w_out; ++x) {
                T acc = bias[o];
                for (std::size_t i = 0; i < c_in; ++i) {
                    for (std::size_t ky = 0; ky < kh; ++ky) {
                        const long iy = static_cast<long>(y) * stride - padding + static_cast<long>(ky);
                        if (iy < 0 || iy >= static_cast<long>(h)) continue;
                        for (std::size_t kx = 0; kx < kw; ++kx) {
                            const long ix = static_cast<long>(x) * stride - padding + static_cast<long>(kx);
                            if (ix < 0 || ix >= static_cast<long>(w)) continue;
                            acc += input.at3(i, iy, ix) * kernels.at4(o, i, ky, kx);
                        }
                    }
                }
                out.at3(o, y, x) = acc;
            }
        }
    }
    return out;
}

template <typename T>
struct Conv2dGrads {
    Tensor<T> grad_input;
    Tensor<T> grad_kernels;
    Tensor<T> grad_bias;
};

template <typename T>
Conv2dGrads<T> conv2d_backward(const Tensor<T>& grad_out, const Tensor<T>& saved_input,
                               const Tensor<T>& kernels, int padding, int stride) {
    const std::size_t c_in = saved_input.dim(0), h = saved_input.dim(1), w = saved_input.dim(2);
    const std::size_t c_out = kernels.dim(0), kh = kernels.dim(2), kw = kernels.dim(3);
    if (grad_out.dim(0) != c_out)
        throw std::invalid_argument("conv2d_backward: grad_out channel axis mismatch");
    const std::size_t h_out = grad_out.dim(1), w_out = grad_out.dim(2);

    Conv2dGrads<T> g{Tensor<T>(saved_input.shape()), Tensor<T>(kernels.shape()),
                     Tensor<T>({c_out})};
    for (std::size_t o = 0; o < c_out; ++o) {
        for (std::size_t y = 0; y < h_out; ++y) {
            for (std::size_t x = 0; x < w_out; ++x) {
                const T go = grad_out.at3(o, y, x);
                if (go == T{0}) continue;
                g.grad_bias[o] += go;
                for (std::size_t i = 0; i < c_in; ++i) {
                    for (std::size_t ky = 0; ky < kh; ++ky) {
                        const long iy = static_cast<long>(y) * stride - padding + static_cast<long>(ky);
                        if (iy < 0 || iy >= static_cast<long>(h)) continue;
                        for (std::size_t kx = 0; kx < kw; ++kx) {
                            const long ix = static_cast<long>(x) * stride - padding + static_cast<long>(kx);
                            if (ix < 0 || ix >= static_cast<long>(w)) continue;
                            g.grad_kernels.at4(o, i, ky, kx) += go * saved_input.at3(i, iy, ix);
                            g.grad_input.at3(i, iy, ix) += go * kernels.at4(o, i, ky, kx);
                        }
                    }
                }
            }
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// Elementwise activations with paired backwards.
// ---------------------------------------------------------------------------

template <typename T>
T sigmoid_scalar(T x) {
    // split on sign so exp never overflows
    if (x >= T{0}) {
        const T e = std::exp(-x);
        return T{1} / (T{1} + e);
    }
    const T e = std::exp(x);
    return e / (T{1} + e);
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    Tensor<T> y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = sigmoid_scalar(x[i]);
    return y;
}

// grad via saved output: s * (1 - s)
template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& grad_out, const Tensor<T>& saved_output) {
    Tensor<T> g(grad_out.shape());
    for (std::size_t i = 0; i < g.size(); ++i)
        g[i] = grad_out[i] * saved_output[i] * (T{1} - saved_output[i]);
    return g;
}

template <typename T>
Tensor<T> tanh_fwd(const Tensor<T>& x) {
    Tensor<T> y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
    return y;
}

template <typename T>
Tensor<T> tanh_backward(const Tensor<T>& grad_out, const Tensor<T>& saved_output) {
    Tensor<T> g(grad_out.shape());
    for (std::size_t i = 0; i < g.size(); ++i)
        g[i] = grad_out[i] * (T{1} - saved_output[i] * saved_output[i]);
    return g;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    Tensor<T> y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
    return y;
}

// grad via saved input: passes where x > 0
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& grad_out, const Tensor<T>& saved_input) {
    Tensor<T> g(grad_out.shape());
    for (std::size_t i = 0; i < g.size(); ++i)
        g[i] = saved_input[i] > T{0} ? grad_out[i] : T{0};
    return g;
}

// ---------------------------------------------------------------------------
// Matrix product a[M,K] * b[K,N].
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw std::invalid_argument("matmul: operands must be rank 2");
    if (a.dim(1) != b.dim(0))
        throw std::invalid_argument("matmul: inner dimensions differ, " + a.shape_str() +
                                    " vs " + b.shape_str());
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor<T> out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const T av = a.at2(i, p);
            if (av == T{0}) continue;
            const T* brow = b.data() + p * n;
            T* orow = out.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

template <typename T>
struct MatmulGrads {
    Tensor<T> grad_a;
    Tensor<T> grad_b;
};

template <typename T>
MatmulGrads<T> matmul_backward(const Tensor<T>& grad_out, const Tensor<T>& a,
                               const Tensor<T>& b) {
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    MatmulGrads<T> g{Tensor<T>(a.shape()), Tensor<T>(b.shape())};
    // grad_a = grad_out * b^T ; grad_b = a^T * grad_out
    for (std::size_t i = 0; i < m; ++i) {
        const T* grow = grad_out.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const T* brow = b.data() + p * n;
            T acc{0};
            for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            g.grad_a.at2(i, p) = acc;
        }
        for (std::size_t p = 0; p < k; ++p) {
            const T av = a.at2(i, p);
            if (av == T{0}) continue;
            T* gbrow = g.grad_b.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// Global pooling. pool_channel reduces over H*W per channel; pool_spatial
// reduces over channels per position.
// ---------------------------------------------------------------------------

enum class PoolMode { Avg, Max };

template <typename T>
struct PoolResult {
    Tensor<T> out;
    std::vector<std::size_t> argmax;  // flat source index per output, Max mode only
};

template <typename T>
PoolResult<T> pool_channel(const Tensor<T>& x, PoolMode mode) {
    const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    PoolResult<T> r{Tensor<T>({c, 1, 1}), {}};
    if (mode == PoolMode::Max) r.argmax.resize(c);
    for (std::size_t ch = 0; ch < c; ++ch) {
        if (mode == PoolMode::Avg) {
            T acc{0};
            for (std::size_t i = 0; i < h * w; ++i) acc += x[ch * h * w + i];
            r.out[ch] = acc / static_cast<T>(h * w);
        } else {
            std::size_t best = ch * h * w;
            for (std::size_t i = 1; i < h * w; ++i)
                if (x[ch * h * w + i] > x[best]) best = ch * h * w + i;
            r.out[ch] = x[best];
            r.argmax[ch] = best;
        }
    }
    return r;
}

template <typename T>
Tensor<T> pool_channel_backward(const Tensor<T>& grad_out, const Tensor<T>& saved_input,
                                PoolMode mode, const std::vector<std::size_t>& argmax) {
    const std::size_t c = saved_input.dim(0), h = saved_input.dim(1), w = saved_input.dim(2);
    Tensor<T> g(saved_input.shape());
    for (std::size_t ch = 0; ch < c; ++ch) {
        if (mode == PoolMode::Avg) {
            const T share = grad_out[ch] / static_cast<T>(h * w);
            for (std::size_t i = 0; i < h * w; ++i) g[ch * h * w + i] = share;
        } else {
            g[argmax[ch]] += grad_out[ch];
        }
    }
    return g;
}

template <typename T>
PoolResult<T> pool_spatial(const Tensor<T>& x, PoolMode mode) {
    const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    PoolResult<T> r{Tensor<T>({1, h, w}), {}};
    if (mode == PoolMode::Max) r.argmax.resize(h * w);
    for (std::size_t p = 0; p < h * w; ++p) {
        if (mode == PoolMode::Avg) {
            T acc{0};
            for (std::size_t ch = 0; ch < c; ++ch) acc += x[ch * h * w + p];
            r.out[p] = acc / static_cast<T>(c);
        } else {
            std::size_t best = 0;
            for (std::size_t ch = 1; ch < c; ++ch)
                if (x[ch * h * w + p] > x[best * h * w + p]) best = ch;
            r.out[p] = x[best * h * w + p];
            r.argmax[p] = best;
        }
    }
    return r;
}

template <typename T>
Tensor<T> pool_spatial_backward(const Tensor<T>& grad_out, const Tensor<T>& saved_input,
                                PoolMode mode, const std::vector<std::size_t>& argmax) {
    const std::size_t c = saved_input.dim(0), h = saved_input.dim(1), w = saved_input.dim(2);
    Tensor<T> g(saved_input.shape());
    for (std::size_t p = 0; p < h * w; ++p) {
        if (mode == PoolMode::Avg) {
            const T share = grad_out[p] / static_cast<T>(c);
            for (std::size_t ch = 0; ch < c; ++ch) g[ch * h * w + p] = share;
        } else {
            g[argmax[p] * h * w + p] += grad_out[p];
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient check.
// ---------------------------------------------------------------------------

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::size_t checked = 0;
    bool pass = false;
};

// f maps the current contents of `inputs` to a scalar loss; analytic_grads[i]
// is the claimed gradient of that loss w.r.t. inputs[i]. Central differences
// are taken per scalar. When max_coords_per_input > 0, a seeded subset of
// coordinates is probed per input (needed for million-parameter groups).
inline GradCheckReport grad_check(const std::function<double()>& f,
                                  std::vector<Tensor<double>*> inputs,
                                  const std::vector<const Tensor<double>*>& analytic_grads,
                                  double step, double tol,
                                  std::size_t max_coords_per_input = 0,
                                  std::uint64_t coord_seed = 17) {
    if (step <= 0.0 || step > 1e-3)
        throw std::invalid_argument("grad_check: step must lie in (0, 1e-3]");
    if (inputs.size() != analytic_grads.size())
        throw std::invalid_argument("grad_check: inputs/grads count mismatch");

    GradCheckReport rep;
    std::mt19937_64 rng(coord_seed);
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        Tensor<double>& x = *inputs[t];
        const Tensor<double>& g = *analytic_grads[t];
        if (!x.same_shape(g))
            throw std::invalid_argument("grad_check: grad shape mismatch at input " +
                                        std::to_string(t));
        std::vector<std::size_t> coords;
        if (max_coords_per_input == 0 || x.size() <= max_coords_per_input) {
            coords.resize(x.size());
            for (std::size_t i = 0; i < x.size(); ++i) coords[i] = i;
        } else {
            std::uniform_int_distribution<std::size_t> pick(0, x.size() - 1);
            for (std::size_t i = 0; i < max_coords_per_input; ++i) coords.push_back(pick(rng));
        }
        for (std::size_t i : coords) {
            const double saved = x[i];
            x[i] = saved + step;
            const double fp = f();
            x[i] = saved - step;
            const double fm = f();
            x[i] = saved;
            const double numeric = (fp - fm) / (2.0 * step);
            const double analytic = g[i];
            const double denom = std::max(std::abs(numeric) + std::abs(analytic), 1e-3);
            rep.max_rel_err = std::max(rep.max_rel_err, std::abs(numeric - analytic) / denom);
            ++rep.checked;
        }
    }
    rep.pass = rep.max_rel_err < tol;
    return rep;
}

}  // namespace salcnn
