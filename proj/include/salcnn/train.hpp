#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <future>
#include <iomanip>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "salcnn/data.hpp"
#include "salcnn/model.hpp"

namespace salcnn {

// Labels are stored in percent of life; the model itself works on the 0..1
// fraction so the L1/Adam step sizes of the reference setup can move the
// output across its full range within a short training budget.
inline constexpr double kLabelScale = 100.0;

struct TrainConfig {
    std::size_t epochs = 150;
    std::size_t batch_size = 32;
    double learning_rate = 0.001;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 42;
    bool check_nan = true;

    void validate() const {
        if (epochs < 1 || batch_size < 1)
            throw std::invalid_argument("TrainConfig: epochs and batch_size must be >= 1");
        if (learning_rate <= 0.0 && learning_rate != 0.0)
            throw std::invalid_argument("TrainConfig: learning_rate must be >= 0");
    }
};

// ---------------------------------------------------------------------------
// L1 loss and the MAE evaluation metric.
// ---------------------------------------------------------------------------

template <typename T>
T l1_loss(const std::vector<T>& pred, const std::vector<T>& target) {
    if (pred.size() != target.size())
        throw std::invalid_argument("l1_loss: length mismatch, " + std::to_string(pred.size()) +
                                    " vs " + std::to_string(target.size()));
    T acc{0};
    for (std::size_t i = 0; i < pred.size(); ++i)
        acc += std::abs(pred[i] - target[i]);
    return acc / static_cast<T>(pred.size());
}

// d(loss)/d(pred_i) = sign(pred_i - target_i)/B, subgradient 0 at ties.
template <typename T>
std::vector<T> l1_loss_backward(const std::vector<T>& pred, const std::vector<T>& target) {
    if (pred.size() != target.size())
        throw std::invalid_argument("l1_loss_backward: length mismatch");
    std::vector<T> g(pred.size());
    const T inv = T{1} / static_cast<T>(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const T d = pred[i] - target[i];
        g[i] = d > T{0} ? inv : (d < T{0} ? -inv : T{0});
    }
    return g;
}

inline double mae(const std::vector<double>& actual, const std::vector<double>& predicted) {
    if (actual.empty()) throw std::invalid_argument("mae: empty series");
    if (actual.size() != predicted.size())
        throw std::invalid_argument("mae: length mismatch, " + std::to_string(actual.size()) +
                                    " vs " + std::to_string(predicted.size()));
    double acc = 0.0;
    for (std::size_t i = 0; i < actual.size(); ++i) acc += std::abs(actual[i] - predicted[i]);
    return acc / static_cast<double>(actual.size());
}

// ---------------------------------------------------------------------------
// Adam with bias correction.
// ---------------------------------------------------------------------------

template <typename T>
struct AdamState {
    ModelParams<T> m, v;
    std::size_t step_count = 0;

    static AdamState init(const ModelParams<T>& params) {
        return AdamState{zeros_like(params), zeros_like(params), 0};
    }
};

template <typename T>
void adam_step(ModelParams<T>& params, ModelParams<T>& grads, AdamState<T>& state,
               const TrainConfig& cfg) {
    state.step_count++;
    const double t = static_cast<double>(state.step_count);
    const double bc1 = 1.0 - std::pow(cfg.adam_beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.adam_beta2, t);

    auto pt = param_tensors(params);
    auto gt = param_tensors(grads);
    auto mt = param_tensors(state.m);
    auto vt = param_tensors(state.v);
    for (std::size_t k = 0; k < pt.size(); ++k) {
        Tensor<T>& p = *pt[k].second;
        Tensor<T>& g = *gt[k].second;
        Tensor<T>& m = *mt[k].second;
        Tensor<T>& v = *vt[k].second;
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = static_cast<double>(g[i]);
            if (cfg.check_nan && !std::isfinite(gi))
                throw std::runtime_error("adam_step: non-finite gradient in " + pt[k].first +
                                         " at flat index " + std::to_string(i));
            const double mi = cfg.adam_beta1 * static_cast<double>(m[i]) + (1.0 - cfg.adam_beta1) * gi;
            const double vi = cfg.adam_beta2 * static_cast<double>(v[i]) + (1.0 - cfg.adam_beta2) * gi * gi;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            const double mhat = mi / bc1;
            const double vhat = vi / bc2;
            p[i] = static_cast<T>(static_cast<double>(p[i]) -
                                  cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps));
        }
    }
}

// ---------------------------------------------------------------------------
// Training loop. Deterministic for a fixed seed: seeded epoch shuffles,
// derived dropout seeds, serial batch reduction.
// ---------------------------------------------------------------------------

template <typename T>
std::vector<double> train_model(ModelParams<T>& params, const std::vector<Sample<T>>& samples,
                                const TrainConfig& cfg) {
    cfg.validate();
    if (samples.empty()) throw std::invalid_argument("train_model: empty dataset");

    AdamState<T> state = AdamState<T>::init(params);
    std::vector<double> epoch_losses;
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::mt19937_64 shuffle_rng(cfg.seed + 0x9E3779B97F4A7C15ULL * (epoch + 1));
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        double loss_sum = 0.0;
        for (std::size_t start = 0, batch = 0; start < order.size();
             start += cfg.batch_size, ++batch) {
            const std::size_t bsz = std::min(cfg.batch_size, order.size() - start);
            std::vector<T> preds(bsz), targets(bsz);
            std::vector<ForwardCache<T>> caches(bsz);
            for (std::size_t i = 0; i < bsz; ++i) {
                const Sample<T>& s = samples[order[start + i]];
                const std::uint64_t drop_seed =
                    cfg.seed ^ (epoch * 1000003ULL + batch * 1009ULL + i + 1);
                preds[i] = model_forward(params, s.window, true, drop_seed, &caches[i]);
                targets[i] = static_cast<T>(s.label_rul_pct / kLabelScale);
            }
            const double batch_loss = static_cast<double>(l1_loss(preds, targets));
            if (!std::isfinite(batch_loss))
                throw std::runtime_error("train_model: NaN loss at epoch " +
                                         std::to_string(epoch) + ", batch " + std::to_string(batch));
            loss_sum += batch_loss * static_cast<double>(bsz);

            std::vector<T> dpred = l1_loss_backward(preds, targets);
            ModelParams<T> grads = zeros_like(params);
            for (std::size_t i = 0; i < bsz; ++i)
                model_backward(dpred[i], caches[i], params, grads);
            adam_step(params, grads, state, cfg);
        }
        epoch_losses.push_back(loss_sum / static_cast<double>(order.size()));
    }
    return epoch_losses;
}

// ---------------------------------------------------------------------------
// Leave-one-bearing-out evaluation.
// ---------------------------------------------------------------------------

struct PredictionPoint {
    double timestamp_s = 0.0;
    double actual_rul_pct = 0.0;
    double predicted_rul_pct = 0.0;
};

struct BearingEval {
    std::string bearing_id;
    double mae_pct = 0.0;
    bool skipped = false;  // run shorter than the sequence window
    std::vector<PredictionPoint> series;
};

struct EvalReport {
    std::vector<BearingEval> bearings;
    double mean_mae_pct = 0.0;
};

inline constexpr double kRecordingPeriodS = 10.0;

template <typename T>
std::vector<double> predict_run(const ModelParams<T>& params, const BearingRun& run,
                                const StftConfig& stft_cfg, std::size_t stride,
                                std::vector<Sample<T>>* out_samples = nullptr) {
    std::vector<Sample<T>> samples =
        build_dataset<T>(run, stft_cfg, params.config.freq_bins, params.config.sequence_window,
                         stride, params.norm_stats);
    std::vector<double> preds;
    for (const auto& s : samples)
        preds.push_back(static_cast<double>(model_forward(params, s.window, false, 0)) *
                        kLabelScale);
    if (out_samples) *out_samples = std::move(samples);
    return preds;
}

// Optional predictor override (test hook): maps a sample to a percent RUL
// prediction without training a model.
template <typename T>
using PredictorHook = std::function<double(const Sample<T>&)>;

template <typename T>
EvalReport evaluate_loocv(const std::vector<BearingRun>& runs, const StftConfig& stft_cfg,
                          const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                          std::size_t stride = 1, std::size_t threads = 1,
                          PredictorHook<T> predictor = nullptr) {
    if (runs.size() < 2)
        throw std::invalid_argument("evaluate_loocv: need at least 2 bearing runs");

    auto run_fold = [&](std::size_t fold) {
        BearingEval ev;
        ev.bearing_id = runs[fold].id;
        if (runs[fold].recordings.size() < model_cfg.sequence_window) {
            ev.skipped = true;
            return ev;
        }

        std::vector<Tensor<double>> train_specs;
        std::vector<const BearingRun*> train_runs;
        for (std::size_t i = 0; i < runs.size(); ++i) {
            if (i == fold) continue;
            if (runs[i].recordings.size() < model_cfg.sequence_window) continue;
            train_runs.push_back(&runs[i]);
            for (auto& t : run_spectrograms(runs[i], stft_cfg, model_cfg.freq_bins))
                train_specs.push_back(std::move(t));
        }
        const NormStats stats = compute_norm_stats(train_specs);
        train_specs.clear();

        ModelParams<T> params = build_model<T>(model_cfg, train_cfg.seed);
        params.norm_stats = stats;
        if (!predictor) {
            std::vector<Sample<T>> train_set;
            for (const BearingRun* r : train_runs) {
                auto samples = build_dataset<T>(*r, stft_cfg, model_cfg.freq_bins,
                                                model_cfg.sequence_window, stride, stats);
                for (auto& s : samples) train_set.push_back(std::move(s));
            }
            train_model(params, train_set, train_cfg);
        }

        std::vector<Sample<T>> test_set =
            build_dataset<T>(runs[fold], stft_cfg, model_cfg.freq_bins,
                             model_cfg.sequence_window, stride, stats);
        std::vector<double> actual, predicted;
        for (const auto& s : test_set) {
            const double pred =
                predictor ? predictor(s)
                          : static_cast<double>(model_forward(params, s.window, false, 0)) *
                                kLabelScale;
            actual.push_back(s.label_rul_pct);
            predicted.push_back(pred);
            ev.series.push_back({static_cast<double>(s.end_index) * kRecordingPeriodS,
                                 s.label_rul_pct, pred});
        }
        ev.mae_pct = mae(actual, predicted);
        return ev;
    };

    EvalReport report;
    report.bearings.resize(runs.size());
    if (threads <= 1) {
        for (std::size_t fold = 0; fold < runs.size(); ++fold)
            report.bearings[fold] = run_fold(fold);
    } else {
        for (std::size_t base = 0; base < runs.size(); base += threads) {
            std::vector<std::future<BearingEval>> futs;
            for (std::size_t fold = base; fold < std::min(base + threads, runs.size()); ++fold)
                futs.push_back(std::async(std::launch::async, run_fold, fold));
            for (std::size_t k = 0; k < futs.size(); ++k)
                report.bearings[base + k] = futs[k].get();
        }
    }

    double sum = 0.0;
    std::size_t counted = 0;
    for (const auto& ev : report.bearings) {
        if (ev.skipped) continue;
        sum += ev.mae_pct;
        ++counted;
    }
    if (counted == 0) throw std::runtime_error("evaluate_loocv: every bearing was skipped");
    report.mean_mae_pct = sum / static_cast<double>(counted);
    return report;
}

inline void write_eval_report(const EvalReport& report, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::ofstream out(dir + "/report.csv", std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + dir + "/report.csv");
    out << std::setprecision(17) << "bearing,mae_pct\n";
    for (const auto& ev : report.bearings) {
        if (ev.skipped)
            out << ev.bearing_id << ",skipped\n";
        else
            out << ev.bearing_id << "," << ev.mae_pct << "\n";
    }
    out << "mean," << report.mean_mae_pct << "\n";
    for (const auto& ev : report.bearings) {
        if (ev.skipped) continue;
        std::ofstream ps(dir + "/pred_" + ev.bearing_id + ".csv", std::ios::binary);
        ps << std::setprecision(17) << "timestamp_s,actual_rul_pct,predicted_rul_pct\n";
        for (const auto& pt : ev.series)
            ps << pt.timestamp_s << "," << pt.actual_rul_pct << "," << pt.predicted_rul_pct
               << "\n";
    }
}

}  // namespace salcnn
