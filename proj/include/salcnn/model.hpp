#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "salcnn/dsp.hpp"
#include "salcnn/layers.hpp"
#include "salcnn/tensor.hpp"

namespace salcnn {

struct ModelConfig {
    std::size_t conv_depth = 3;           // total conv layers incl. the 5->1 compression
    std::size_t conv_channels = 5;
    std::size_t cbam_reduction = 2;
    std::size_t cbam_spatial_kernel = 3;
    std::size_t lstm_layers = 2;
    std::size_t lstm_hidden = 1408;
    std::size_t sequence_window = 5;      // snapshots per sample
    std::size_t time_steps = 11;          // spectrogram frames per snapshot
    std::size_t freq_bins = 128;          // model-facing frequency bins
    double dropout = 0.1;

    std::size_t flat_size() const { return time_steps * freq_bins; }

    void validate() const {
        if (conv_depth < 2)
            throw std::invalid_argument("ModelConfig: conv_depth must be >= 2 (first block plus compression)");
        if (conv_channels == 0 || lstm_layers == 0 || lstm_hidden == 0 ||
            sequence_window == 0 || time_steps == 0 || freq_bins == 0)
            throw std::invalid_argument("ModelConfig: all sizes must be positive");
        if (cbam_spatial_kernel % 2 == 0)
            throw std::invalid_argument("ModelConfig: cbam_spatial_kernel must be odd");
        if (dropout < 0.0 || dropout >= 1.0)
            throw std::invalid_argument("ModelConfig: dropout must lie in [0, 1)");
    }
};

template <typename T>
struct ModelParams {
    ModelConfig config;
    std::vector<ConvBlockParams<T>> conv_blocks;  // 1->C then (depth-2) of C->C
    CbamParams<T> cbam;
    ConvBlockParams<T> compress;                  // C->1
    std::vector<LstmParams<T>> lstm;
    DenseParams<T> head;
    NormStats norm_stats;
};

// Deterministic parameter construction for a fixed seed.
template <typename T>
ModelParams<T> build_model(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    ModelParams<T> p;
    p.config = cfg;
    const std::size_t c = cfg.conv_channels;
    p.conv_blocks.push_back(ConvBlockParams<T>::init(c, 1, 3, rng));
    for (std::size_t i = 0; i + 2 < cfg.conv_depth; ++i)
        p.conv_blocks.push_back(ConvBlockParams<T>::init(c, c, 3, rng));
    p.cbam = CbamParams<T>::init(c, cfg.cbam_reduction, cfg.cbam_spatial_kernel, rng);
    p.compress = ConvBlockParams<T>::init(1, c, 3, rng);
    for (std::size_t l = 0; l < cfg.lstm_layers; ++l)
        p.lstm.push_back(LstmParams<T>::init(cfg.lstm_hidden,
                                             l == 0 ? cfg.flat_size() : cfg.lstm_hidden, rng));
    p.head = DenseParams<T>::init(cfg.lstm_hidden, rng);
    return p;
}

template <typename T>
ModelParams<T> zeros_like(const ModelParams<T>& p) {
    ModelParams<T> z;
    z.config = p.config;
    z.norm_stats = p.norm_stats;
    for (const auto& cb : p.conv_blocks)
        z.conv_blocks.push_back({Tensor<T>(cb.kernels.shape()), Tensor<T>(cb.bias.shape())});
    z.cbam = CbamParams<T>{Tensor<T>(p.cbam.mlp_w1.shape()), Tensor<T>(p.cbam.mlp_b1.shape()),
                           Tensor<T>(p.cbam.mlp_w2.shape()), Tensor<T>(p.cbam.mlp_b2.shape()),
                           Tensor<T>(p.cbam.spatial_kernel.shape())};
    z.compress = {Tensor<T>(p.compress.kernels.shape()), Tensor<T>(p.compress.bias.shape())};
    for (const auto& l : p.lstm)
        z.lstm.push_back(LstmParams<T>{Tensor<T>(l.w_f.shape()), Tensor<T>(l.w_i.shape()),
                                       Tensor<T>(l.w_c.shape()), Tensor<T>(l.w_o.shape()),
                                       Tensor<T>(l.b_f.shape()), Tensor<T>(l.b_i.shape()),
                                       Tensor<T>(l.b_c.shape()), Tensor<T>(l.b_o.shape())});
    z.head = {Tensor<T>(p.head.w.shape()), Tensor<T>(p.head.b.shape())};
    return z;
}

// Flat view of every learned tensor, in declaration order. Grad/moment
// structures share the same layout, so walking two models in lockstep pairs
// parameter with gradient.
template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> param_tensors(ModelParams<T>& p) {
    std::vector<std::pair<std::string, Tensor<T>*>> out;
    for (std::size_t i = 0; i < p.conv_blocks.size(); ++i) {
        out.push_back({"conv" + std::to_string(i) + ".kernels", &p.conv_blocks[i].kernels});
        out.push_back({"conv" + std::to_string(i) + ".bias", &p.conv_blocks[i].bias});
    }
    out.push_back({"cbam.mlp_w1", &p.cbam.mlp_w1});
    out.push_back({"cbam.mlp_b1", &p.cbam.mlp_b1});
    out.push_back({"cbam.mlp_w2", &p.cbam.mlp_w2});
    out.push_back({"cbam.mlp_b2", &p.cbam.mlp_b2});
    out.push_back({"cbam.spatial_kernel", &p.cbam.spatial_kernel});
    out.push_back({"compress.kernels", &p.compress.kernels});
    out.push_back({"compress.bias", &p.compress.bias});
    for (std::size_t l = 0; l < p.lstm.size(); ++l) {
        const std::string pre = "lstm" + std::to_string(l) + ".";
        out.push_back({pre + "w_f", &p.lstm[l].w_f});
        out.push_back({pre + "w_i", &p.lstm[l].w_i});
        out.push_back({pre + "w_c", &p.lstm[l].w_c});
        out.push_back({pre + "w_o", &p.lstm[l].w_o});
        out.push_back({pre + "b_f", &p.lstm[l].b_f});
        out.push_back({pre + "b_i", &p.lstm[l].b_i});
        out.push_back({pre + "b_c", &p.lstm[l].b_c});
        out.push_back({pre + "b_o", &p.lstm[l].b_o});
    }
    out.push_back({"head.w", &p.head.w});
    out.push_back({"head.b", &p.head.b});
    return out;
}

template <typename T>
std::size_t param_count(const ModelParams<T>& p) {
    auto& mp = const_cast<ModelParams<T>&>(p);
    std::size_t n = 0;
    for (auto& [name, t] : param_tensors(mp)) n += t->size();
    return n;
}

template <typename T>
struct SnapshotCache {
    std::vector<ConvBlockCache<T>> conv;
    CbamCache<T> cbam;
    ConvBlockCache<T> compress;
};

template <typename T>
struct ForwardCache {
    std::vector<SnapshotCache<T>> snapshots;
    Tensor<T> lstm_in;   // [W, flat]
    LstmSequenceCache<T> lstm;
    Tensor<T> last_h;    // [H]
    DropoutResult<T> drop;
};

// Attention maps recorded during a forward pass.
template <typename T>
struct AttentionCapture {
    Tensor<T> mc;  // [W, C]
    Tensor<T> ms;  // [W, time_steps, freq_bins]
};

// One training/inference sample: window [W, time_steps, freq_bins] of
// already-normalized spectrogram snapshots -> predicted RUL in model units
// (fraction of life, 0..1 scale during training).
template <typename T>
T model_forward(const ModelParams<T>& p, const Tensor<T>& window, bool training,
                std::uint64_t dropout_seed, ForwardCache<T>* cache = nullptr,
                AttentionCapture<T>* capture = nullptr) {
    const ModelConfig& cfg = p.config;
    if (window.rank() != 3 || window.dim(1) != cfg.time_steps || window.dim(2) != cfg.freq_bins)
        throw std::invalid_argument("model_forward: window must be [W," +
                                    std::to_string(cfg.time_steps) + "," +
                                    std::to_string(cfg.freq_bins) + "], got " +
                                    window.shape_str());
    const std::size_t w = window.dim(0);
    const std::size_t flat = cfg.flat_size();

    ForwardCache<T> local;
    ForwardCache<T>& fc = cache ? *cache : local;
    fc.snapshots.assign(w, SnapshotCache<T>{});
    fc.lstm_in = Tensor<T>({w, flat});
    if (capture) {
        capture->mc = Tensor<T>({w, cfg.conv_channels});
        capture->ms = Tensor<T>({w, cfg.time_steps, cfg.freq_bins});
    }

    for (std::size_t s = 0; s < w; ++s) {
        Tensor<T> x({1, cfg.time_steps, cfg.freq_bins});
        for (std::size_t i = 0; i < flat; ++i) x[i] = window[s * flat + i];
        SnapshotCache<T>& sc = fc.snapshots[s];
        sc.conv.resize(p.conv_blocks.size());
        for (std::size_t b = 0; b < p.conv_blocks.size(); ++b)
            x = conv_block_forward(x, p.conv_blocks[b], &sc.conv[b]);
        x = cbam_apply(x, p.cbam, &sc.cbam);
        x = conv_block_forward(x, p.compress, &sc.compress);
        for (std::size_t i = 0; i < flat; ++i) fc.lstm_in.at2(s, i) = x[i];
        if (capture) {
            for (std::size_t c = 0; c < cfg.conv_channels; ++c)
                capture->mc.at2(s, c) = sc.cbam.channel.mc[c];
            for (std::size_t i = 0; i < flat; ++i)
                capture->ms[s * flat + i] = sc.cbam.spatial.ms[i];
        }
    }

    Tensor<T> hs = lstm_sequence(fc.lstm_in, p.lstm, &fc.lstm);
    fc.last_h = Tensor<T>({cfg.lstm_hidden});
    for (std::size_t i = 0; i < cfg.lstm_hidden; ++i)
        fc.last_h[i] = hs.at2(w - 1, i);

    fc.drop = dropout(fc.last_h, cfg.dropout, training, dropout_seed);
    return dense(fc.drop.out, p.head)[0];
}

// Accumulates gradients of (grad_pred * prediction) into `grads`.
template <typename T>
void model_backward(T grad_pred, const ForwardCache<T>& fc, const ModelParams<T>& p,
                    ModelParams<T>& grads) {
    const ModelConfig& cfg = p.config;
    const std::size_t w = fc.lstm_in.dim(0);
    const std::size_t flat = cfg.flat_size();

    Tensor<T> dh = dense_backward(grad_pred, fc.drop.out, p.head, grads.head);
    dh = dropout_backward(dh, fc.drop, cfg.dropout);

    Tensor<T> grad_seq({w, cfg.lstm_hidden});
    for (std::size_t i = 0; i < cfg.lstm_hidden; ++i) grad_seq.at2(w - 1, i) = dh[i];
    Tensor<T> dxs = lstm_sequence_backward(grad_seq, fc.lstm, p.lstm, grads.lstm);

    for (std::size_t s = 0; s < w; ++s) {
        Tensor<T> dx({1, cfg.time_steps, cfg.freq_bins});
        for (std::size_t i = 0; i < flat; ++i) dx[i] = dxs.at2(s, i);
        const SnapshotCache<T>& sc = fc.snapshots[s];
        dx = conv_block_backward(dx, sc.compress, p.compress, grads.compress);
        dx = cbam_backward(dx, sc.cbam, p.cbam, grads.cbam);
        for (std::size_t b = p.conv_blocks.size(); b-- > 0;)
            dx = conv_block_backward(dx, sc.conv[b], p.conv_blocks[b], grads.conv_blocks[b]);
    }
}

// Forward with attention capture; the prediction is untouched by recording.
template <typename T>
AttentionCapture<T> capture_attention(const ModelParams<T>& p, const Tensor<T>& window,
                                      T* prediction = nullptr) {
    AttentionCapture<T> cap;
    const T pred =
        model_forward(p, window, false, 0, static_cast<ForwardCache<T>*>(nullptr), &cap);
    if (prediction) *prediction = pred;
    return cap;
}

// ---------------------------------------------------------------------------
// Checkpoints: little-endian binary, magic "SALC", version, config, norm
// stats, then every tensor in declaration order with a shape prefix.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <typename V>
void put(std::ofstream& out, V v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V get(std::ifstream& in, const std::string& what) {
    V v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(V));
    if (!in) throw std::runtime_error("checkpoint: truncated while reading " + what);
    return v;
}

}  // namespace detail

template <typename T>
void save_model(const ModelParams<T>& p, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_model: cannot open " + path);
    out.write("SALC", 4);
    detail::put<std::uint32_t>(out, kCheckpointVersion);
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(sizeof(T)));
    const ModelConfig& c = p.config;
    for (std::size_t v : {c.conv_depth, c.conv_channels, c.cbam_reduction,
                          c.cbam_spatial_kernel, c.lstm_layers, c.lstm_hidden,
                          c.sequence_window, c.time_steps, c.freq_bins})
        detail::put<std::uint64_t>(out, v);
    detail::put<double>(out, c.dropout);
    detail::put<double>(out, p.norm_stats.min);
    detail::put<double>(out, p.norm_stats.max);

    auto& mp = const_cast<ModelParams<T>&>(p);
    for (auto& [name, t] : param_tensors(mp)) {
        detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(t->rank()));
        for (std::size_t d : t->shape()) detail::put<std::uint64_t>(out, d);
        out.write(reinterpret_cast<const char*>(t->data()),
                  static_cast<long>(t->size() * sizeof(T)));
    }
    if (!out) throw std::runtime_error("save_model: write failed for " + path);
}

// Scalar width recorded in a checkpoint header (4 or 8 bytes).
inline std::uint32_t peek_checkpoint_width(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "SALC", 4) != 0)
        throw std::runtime_error(path + ": bad checkpoint magic");
    detail::get<std::uint32_t>(in, "version");
    return detail::get<std::uint32_t>(in, "scalar width");
}

template <typename T>
ModelParams<T> load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_model: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "SALC", 4) != 0)
        throw std::runtime_error(path + ": bad checkpoint magic");
    const auto version = detail::get<std::uint32_t>(in, "version");
    if (version != kCheckpointVersion)
        throw std::runtime_error(path + ": unsupported checkpoint version " +
                                 std::to_string(version));
    const auto width = detail::get<std::uint32_t>(in, "scalar width");
    if (width != sizeof(T))
        throw std::runtime_error(path + ": checkpoint scalar width " + std::to_string(width) +
                                 " does not match requested " + std::to_string(sizeof(T)));
    ModelConfig c;
    c.conv_depth = detail::get<std::uint64_t>(in, "conv_depth");
    c.conv_channels = detail::get<std::uint64_t>(in, "conv_channels");
    c.cbam_reduction = detail::get<std::uint64_t>(in, "cbam_reduction");
    c.cbam_spatial_kernel = detail::get<std::uint64_t>(in, "cbam_spatial_kernel");
    c.lstm_layers = detail::get<std::uint64_t>(in, "lstm_layers");
    c.lstm_hidden = detail::get<std::uint64_t>(in, "lstm_hidden");
    c.sequence_window = detail::get<std::uint64_t>(in, "sequence_window");
    c.time_steps = detail::get<std::uint64_t>(in, "time_steps");
    c.freq_bins = detail::get<std::uint64_t>(in, "freq_bins");
    c.dropout = detail::get<double>(in, "dropout");
    NormStats stats;
    stats.min = detail::get<double>(in, "norm min");
    stats.max = detail::get<double>(in, "norm max");

    ModelParams<T> p = build_model<T>(c, 0);
    p.norm_stats = stats;
    for (auto& [name, t] : param_tensors(p)) {
        const auto rank = detail::get<std::uint32_t>(in, name + " rank");
        if (rank != t->rank())
            throw std::runtime_error(path + ": " + name + " rank mismatch");
        for (std::size_t d = 0; d < rank; ++d) {
            const auto dim = detail::get<std::uint64_t>(in, name + " shape");
            if (dim != t->dim(d))
                throw std::runtime_error(path + ": " + name + " shape mismatch on axis " +
                                         std::to_string(d));
        }
        in.read(reinterpret_cast<char*>(t->data()), static_cast<long>(t->size() * sizeof(T)));
        if (!in) throw std::runtime_error(path + ": truncated tensor data for " + name);
    }
    return p;
}

}  // namespace salcnn
