#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "salcnn/tensor.hpp"

namespace salcnn {

// Symmetric Hamming window: w[k] = 0.54 - 0.46*cos(2*pi*k/(n-1)).
inline std::vector<double> hamming_window(std::size_t n) {
    if (n < 2) throw std::invalid_argument("hamming_window: need n >= 2");
    std::vector<double> w(n);
    // evaluate the first half and mirror so w[k] == w[n-1-k] holds exactly
    for (std::size_t k = 0; k < (n + 1) / 2; ++k) {
        w[k] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(k) /
                                      static_cast<double>(n - 1));
        w[n - 1 - k] = w[k];
    }
    return w;
}

// In-place iterative radix-2 FFT, no forward normalization.
inline void fft(std::vector<std::complex<double>>& x) {
    const std::size_t n = x.size();
    if (n == 0 || (n & (n - 1)) != 0)
        throw std::invalid_argument("fft: length must be a power of two, got " +
                                    std::to_string(n));
    // bit-reversal permutation
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(x[i], x[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = x[i + k];
                const std::complex<double> v = x[i + k + len / 2] * w;
                x[i + k] = u + v;
                x[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

struct StftConfig {
    double sample_rate_hz = 25600.0;
    std::size_t segment_len = 512;
    std::size_t hop = 256;
    std::size_t crop_bins = 129;

    void validate() const {
        if (segment_len < 2 || (segment_len & (segment_len - 1)) != 0)
            throw std::invalid_argument("StftConfig: segment_len must be a power of two");
        if (hop == 0 || hop > segment_len)
            throw std::invalid_argument("StftConfig: need 0 < hop <= segment_len");
        if (crop_bins > segment_len / 2 + 1)
            throw std::invalid_argument("StftConfig: crop_bins exceeds one-sided bin count");
    }
};

// Time x frequency magnitude map with axis metadata.
struct Spectrogram {
    Tensor<double> magnitudes;  // [frames, bins]
    std::vector<double> frame_times_s;
    std::vector<double> bin_freqs_hz;

    std::size_t frames() const { return magnitudes.dim(0); }
    std::size_t bins() const { return magnitudes.dim(1); }
};

// Centered-frame STFT: the signal is zero-padded by segment_len/2 on both
// ends, frames start every `hop` samples, each frame is Hamming-windowed and
// transformed, and the one-sided magnitude spectrum is cropped to the lowest
// crop_bins bins.
inline Spectrogram stft(const std::vector<double>& signal, const StftConfig& cfg) {
    cfg.validate();
    if (signal.size() % cfg.hop != 0)
        throw std::invalid_argument(
            "stft: signal length " + std::to_string(signal.size()) +
            " not divisible by hop " + std::to_string(cfg.hop) + "; expected " +
            std::to_string(signal.size() / cfg.hop + 1) + " whole frames");

    const std::size_t n = cfg.segment_len;
    const std::size_t pad = n / 2;
    const std::size_t frames = signal.size() / cfg.hop + 1;
    const std::vector<double> window = hamming_window(n);

    std::vector<double> padded(signal.size() + 2 * pad, 0.0);
    std::copy(signal.begin(), signal.end(), padded.begin() + static_cast<long>(pad));

    Spectrogram s{Tensor<double>({frames, cfg.crop_bins}), {}, {}};
    std::vector<std::complex<double>> buf(n);
    for (std::size_t t = 0; t < frames; ++t) {
        for (std::size_t k = 0; k < n; ++k)
            buf[k] = std::complex<double>(padded[t * cfg.hop + k] * window[k], 0.0);
        fft(buf);
        for (std::size_t k = 0; k < cfg.crop_bins; ++k)
            s.magnitudes.at2(t, k) = std::abs(buf[k]);
        s.frame_times_s.push_back(static_cast<double>(t) * cfg.hop / cfg.sample_rate_hz);
    }
    for (std::size_t k = 0; k < cfg.crop_bins; ++k)
        s.bin_freqs_hz.push_back(static_cast<double>(k) * cfg.sample_rate_hz /
                                 static_cast<double>(n));
    return s;
}

// Keep the lowest `bins` frequency rows.
inline Spectrogram crop_to_model_bins(const Spectrogram& s, std::size_t bins) {
    if (bins > s.bins())
        throw std::invalid_argument("crop_to_model_bins: requested " + std::to_string(bins) +
                                    " bins but only " + std::to_string(s.bins()) + " exist");
    Spectrogram out{Tensor<double>({s.frames(), bins}), s.frame_times_s, {}};
    for (std::size_t t = 0; t < s.frames(); ++t)
        for (std::size_t k = 0; k < bins; ++k) out.magnitudes.at2(t, k) = s.magnitudes.at2(t, k);
    out.bin_freqs_hz.assign(s.bin_freqs_hz.begin(), s.bin_freqs_hz.begin() + static_cast<long>(bins));
    return out;
}

struct NormStats {
    double min = 0.0;
    double max = 1.0;

    void validate() const {
        if (!(max > min))
            throw std::invalid_argument("NormStats: degenerate stats, max must exceed min");
    }
};

// Global dataset min-max scaling to [0,1]. Stats come from the training
// split and travel with the model checkpoint.
inline Spectrogram normalize(const Spectrogram& s, const NormStats& stats) {
    stats.validate();
    Spectrogram out = s;
    const double span = stats.max - stats.min;
    for (std::size_t i = 0; i < out.magnitudes.size(); ++i)
        out.magnitudes[i] = (out.magnitudes[i] - stats.min) / span;
    return out;
}

inline Spectrogram denormalize(const Spectrogram& s, const NormStats& stats) {
    stats.validate();
    Spectrogram out = s;
    const double span = stats.max - stats.min;
    for (std::size_t i = 0; i < out.magnitudes.size(); ++i)
        out.magnitudes[i] = out.magnitudes[i] * span + stats.min;
    return out;
}

// ---------------------------------------------------------------------------
// Export: CSV (frames as rows, header row of bin frequencies) and binary PGM.
// ---------------------------------------------------------------------------

inline void write_spectrogram_csv(const Spectrogram& s, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << std::setprecision(17);
    for (std::size_t k = 0; k < s.bins(); ++k) out << (k ? "," : "") << s.bin_freqs_hz[k];
    out << "\n";
    for (std::size_t t = 0; t < s.frames(); ++t) {
        for (std::size_t k = 0; k < s.bins(); ++k)
            out << (k ? "," : "") << s.magnitudes.at2(t, k);
        out << "\n";
    }
}

// round-half-up to [0,255]
inline std::uint8_t intensity_byte(double v) {
    const double scaled = std::floor(v * 255.0 + 0.5);
    return static_cast<std::uint8_t>(std::clamp(scaled, 0.0, 255.0));
}

// P5 image, one pixel column per frequency bin (lowest frequency leftmost),
// one row per frame, intensities linearly scaled to [0,255] over the map's
// own range.
inline void write_pgm(const Tensor<double>& map, const std::string& path,
                      bool already_unit_range = false) {
    const std::size_t rows = map.dim(0), cols = map.dim(1);
    double lo = 0.0, hi = 1.0;
    if (!already_unit_range) {
        lo = map[0];
        hi = map[0];
        for (std::size_t i = 0; i < map.size(); ++i) {
            lo = std::min(lo, map[i]);
            hi = std::max(hi, map[i]);
        }
        if (hi == lo) hi = lo + 1.0;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "P5\n" << cols << " " << rows << "\n255\n";
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
            out.put(static_cast<char>(intensity_byte((map.at2(r, c) - lo) / (hi - lo))));
}

struct PgmImage {
    std::size_t width = 0, height = 0;
    std::vector<std::uint8_t> pixels;
};

inline PgmImage read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string magic;
    in >> magic;
    if (magic != "P5") throw std::runtime_error(path + ": not a P5 PGM");
    PgmImage img;
    std::size_t maxval = 0;
    in >> img.width >> img.height >> maxval;
    if (maxval != 255) throw std::runtime_error(path + ": expected maxval 255");
    in.get();  // single whitespace after header
    img.pixels.resize(img.width * img.height);
    in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<long>(img.pixels.size()));
    if (!in) throw std::runtime_error(path + ": truncated pixel data");
    return img;
}

}  // namespace salcnn
