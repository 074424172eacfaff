#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "salcnn/dsp.hpp"
#include "salcnn/numerics.hpp"
#include "salcnn/tensor.hpp"

namespace salcnn {

inline constexpr std::size_t kRecordingSamples = 2560;  // 0.1 s at 25.6 kHz

struct Timestamp {
    int hour = 0, minute = 0, second = 0;
    long microsec = 0;
};

// One 2560-sample vibration capture (horizontal acceleration).
struct Recording {
    std::vector<double> samples;
    Timestamp timestamp;
};

struct OperatingCondition {
    double speed_rpm = 0.0;
    double radial_force_n = 0.0;
};

struct BearingRun {
    std::string id;  // e.g. "1-1"
    OperatingCondition condition;
    std::vector<Recording> recordings;

    std::size_t total_life_index() const { return recordings.size(); }
};

// ---------------------------------------------------------------------------
// PHM2012-format acc_XXXXX.csv files: hour,minute,second,microsec,haccel[,vaccel]
// ---------------------------------------------------------------------------

inline double parse_cell(const std::string& cell, const std::string& path, std::size_t row,
                         std::size_t col) {
    try {
        std::size_t used = 0;
        const double v = std::stod(cell, &used);
        if (used != cell.size()) throw std::invalid_argument("trailing junk");
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error(path + ": non-numeric cell at row " + std::to_string(row + 1) +
                                 ", column " + std::to_string(col + 1) + ": '" + cell + "'");
    }
}

inline Recording parse_acc_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    Recording rec;
    rec.samples.reserve(kRecordingSamples);
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() < 5)
            throw std::runtime_error(path + ": row " + std::to_string(row + 1) + " has " +
                                     std::to_string(cells.size()) + " columns, need >= 5");
        if (row == 0) {
            rec.timestamp.hour = static_cast<int>(parse_cell(cells[0], path, row, 0));
            rec.timestamp.minute = static_cast<int>(parse_cell(cells[1], path, row, 1));
            rec.timestamp.second = static_cast<int>(parse_cell(cells[2], path, row, 2));
            rec.timestamp.microsec = static_cast<long>(parse_cell(cells[3], path, row, 3));
        }
        rec.samples.push_back(parse_cell(cells[4], path, row, 4));
        ++row;
    }
    if (rec.samples.size() != kRecordingSamples)
        throw std::runtime_error(path + ": expected " + std::to_string(kRecordingSamples) +
                                 " rows, found " + std::to_string(rec.samples.size()));
    return rec;
}

inline void write_acc_csv(const Recording& rec, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << std::setprecision(17);
    for (std::size_t i = 0; i < rec.samples.size(); ++i) {
        out << rec.timestamp.hour << "," << rec.timestamp.minute << "," << rec.timestamp.second
            << "," << rec.timestamp.microsec << "," << rec.samples[i] << "\n";
    }
}

// Loads a bearing directory of acc_XXXXX.csv files. Order comes from the
// filename index, not the directory listing; gaps in the sequence are errors.
inline BearingRun load_bearing(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw std::runtime_error(dir + " is not a directory");
    std::vector<std::pair<long, fs::path>> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.size() >= 8 && name.rfind("acc_", 0) == 0 &&
            name.substr(name.size() - 4) == ".csv") {
            files.emplace_back(std::stol(name.substr(4, name.size() - 8)), entry.path());
        }
    }
    if (files.empty()) throw std::runtime_error(dir + ": no acc_*.csv files");
    std::sort(files.begin(), files.end());
    for (std::size_t i = 0; i < files.size(); ++i) {
        const long expected = files[0].first + static_cast<long>(i);
        if (files[i].first != expected)
            throw std::runtime_error(dir + ": gap in acc file sequence, missing index " +
                                     std::to_string(expected));
    }
    BearingRun run;
    run.id = fs::path(dir).filename().string();
    for (const auto& [idx, path] : files) run.recordings.push_back(parse_acc_csv(path.string()));
    return run;
}

// ---------------------------------------------------------------------------
// Dataset construction.
// ---------------------------------------------------------------------------

template <typename T>
struct Sample {
    Tensor<T> window;  // [W, time_steps, freq_bins]
    double label_rul_pct = 0.0;
    std::string bearing_id;
    std::size_t end_index = 0;
};

// STFT + crop for one recording; magnitudes only, not yet normalized.
inline Tensor<double> recording_spectrogram(const Recording& rec, const StftConfig& cfg,
                                            std::size_t model_bins) {
    Spectrogram s = stft(rec.samples, cfg);
    if (model_bins < s.bins()) s = crop_to_model_bins(s, model_bins);
    return s.magnitudes;
}

inline std::vector<Tensor<double>> run_spectrograms(const BearingRun& run, const StftConfig& cfg,
                                                    std::size_t model_bins) {
    std::vector<Tensor<double>> out;
    out.reserve(run.recordings.size());
    for (const auto& rec : run.recordings)
        out.push_back(recording_spectrogram(rec, cfg, model_bins));
    return out;
}

// Global min/max over every spectrogram value of the training split.
inline NormStats compute_norm_stats(const std::vector<Tensor<double>>& spectrograms) {
    if (spectrograms.empty())
        throw std::invalid_argument("compute_norm_stats: empty training split");
    NormStats s;
    s.min = spectrograms[0][0];
    s.max = spectrograms[0][0];
    for (const auto& t : spectrograms) {
        for (std::size_t i = 0; i < t.size(); ++i) {
            s.min = std::min(s.min, t[i]);
            s.max = std::max(s.max, t[i]);
        }
    }
    s.validate();  // constant-valued split is degenerate
    return s;
}

inline double rul_pct_label(std::size_t end_index, std::size_t n) {
    return 100.0 * static_cast<double>(n - 1 - end_index) / static_cast<double>(n - 1);
}

// Sliding windows of W consecutive recordings. Label is the percent RUL at
// the window's last recording.
template <typename T>
std::vector<Sample<T>> build_dataset(const BearingRun& run, const StftConfig& stft_cfg,
                                     std::size_t model_bins, std::size_t w,
                                     std::size_t stride, const NormStats& stats) {
    const std::size_t n = run.recordings.size();
    if (n < w)
        throw std::invalid_argument("build_dataset: bearing " + run.id + " has " +
                                    std::to_string(n) + " recordings, need >= " +
                                    std::to_string(w));
    stats.validate();
    std::vector<Tensor<double>> specs = run_spectrograms(run, stft_cfg, model_bins);
    const std::size_t frames = specs[0].dim(0);
    const std::size_t flat = frames * model_bins;
    const double span = stats.max - stats.min;

    std::vector<Sample<T>> out;
    for (std::size_t end = w - 1; end < n; end += stride) {
        Sample<T> s;
        s.window = Tensor<T>({w, frames, model_bins});
        for (std::size_t k = 0; k < w; ++k) {
            const Tensor<double>& sp = specs[end - w + 1 + k];
            for (std::size_t i = 0; i < flat; ++i)
                s.window[k * flat + i] = static_cast<T>((sp[i] - stats.min) / span);
        }
        s.label_rul_pct = rul_pct_label(end, n);
        s.bearing_id = run.id;
        s.end_index = end;
        out.push_back(std::move(s));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic run-to-failure bearings. Early life: energy in the high-frequency
// tones; late life: energy migrates to the low-frequency tones and overall
// amplitude grows, mimicking observed degradation.
// ---------------------------------------------------------------------------

struct SynthProfile {
    std::size_t life_n = 120;
    double sample_rate_hz = 25600.0;
    std::vector<double> low_freqs_hz = {800.0, 1500.0};
    std::vector<double> high_freqs_hz = {4200.0, 5600.0};
    double amplitude = 1.0;
    double noise_sigma = 0.05;
    double degradation_exponent = 1.0;

    void validate() const {
        if (life_n < 2) throw std::invalid_argument("SynthProfile: life_n must be >= 2");
        if (low_freqs_hz.empty() || high_freqs_hz.empty())
            throw std::invalid_argument("SynthProfile: need at least one tone per band");
        if (noise_sigma < 0.0 || amplitude <= 0.0 || degradation_exponent <= 0.0)
            throw std::invalid_argument("SynthProfile: invalid amplitude/noise/exponent");
    }
};

inline double gaussian(std::mt19937_64& rng) {
    // Box-Muller on raw uniform draws
    double u1 = 0.0;
    do {
        u1 = u01(rng);
    } while (u1 <= 0.0);
    const double u2 = u01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

inline BearingRun synth_bearing(const std::string& id, const SynthProfile& profile,
                                std::uint64_t seed) {
    profile.validate();
    std::mt19937_64 rng(seed);
    BearingRun run;
    run.id = id;
    run.condition = {1800.0, 4000.0};
    for (std::size_t k = 0; k < profile.life_n; ++k) {
        const double progress =
            std::pow(static_cast<double>(k) / static_cast<double>(profile.life_n - 1),
                     profile.degradation_exponent);
        const double low_amp = profile.amplitude * progress;
        const double high_amp = profile.amplitude * (1.0 - progress);
        Recording rec;
        rec.samples.assign(kRecordingSamples, 0.0);
        const long total_s = static_cast<long>(k) * 10;
        rec.timestamp = {static_cast<int>(total_s / 3600), static_cast<int>((total_s / 60) % 60),
                         static_cast<int>(total_s % 60), 0};
        std::vector<double> phases;
        for (std::size_t i = 0; i < profile.low_freqs_hz.size() + profile.high_freqs_hz.size(); ++i)
            phases.push_back(2.0 * std::numbers::pi * u01(rng));
        for (std::size_t n = 0; n < kRecordingSamples; ++n) {
            const double t = static_cast<double>(n) / profile.sample_rate_hz;
            double v = 0.0;
            std::size_t ph = 0;
            for (double f : profile.low_freqs_hz)
                v += low_amp * std::sin(2.0 * std::numbers::pi * f * t + phases[ph++]);
            for (double f : profile.high_freqs_hz)
                v += high_amp * std::sin(2.0 * std::numbers::pi * f * t + phases[ph++]);
            if (profile.noise_sigma > 0.0) v += profile.noise_sigma * gaussian(rng);
            rec.samples[n] = v;
        }
        run.recordings.push_back(std::move(rec));
    }
    return run;
}

// Desk-scale fleet mirroring the three-condition layout at 3/3/2 bearings.
inline std::vector<BearingRun> synth_fleet(std::size_t bearings, std::size_t life_n,
                                           std::uint64_t seed) {
    static const OperatingCondition conds[3] = {{1800.0, 4000.0}, {1650.0, 4200.0}, {1500.0, 5000.0}};
    static const std::size_t per_cond[3] = {3, 3, 2};
    std::vector<BearingRun> fleet;
    std::size_t cond = 0, in_cond = 0;
    for (std::size_t b = 0; b < bearings; ++b) {
        SynthProfile prof;
        prof.life_n = life_n;
        // small per-bearing detuning so bearings are distinct but kin
        const double shift = 100.0 * static_cast<double>(b % 4);
        prof.low_freqs_hz = {800.0 + shift, 1500.0 + shift};
        prof.high_freqs_hz = {4200.0 + shift, 5600.0 - shift};
        BearingRun run = synth_bearing(
            std::to_string(cond + 1) + "-" + std::to_string(in_cond + 1), prof,
            seed + 1000 * b);
        run.condition = conds[cond];
        fleet.push_back(std::move(run));
        if (++in_cond >= per_cond[cond] && cond + 1 < 3) {
            cond++;
            in_cond = 0;
        }
    }
    return fleet;
}

}  // namespace salcnn
