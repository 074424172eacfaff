// salcnn: end-to-end bearing RUL pipeline driver.
// Subcommands: preprocess, train, evaluate, predict, heatmap.
// Exit codes: 0 success, 2 usage/config error, 3 runtime/numeric error.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "salcnn/data.hpp"
#include "salcnn/dsp.hpp"
#include "salcnn/model.hpp"
#include "salcnn/train.hpp"

namespace fs = std::filesystem;
using namespace salcnn;

namespace {

constexpr const char* kVersion = "salcnn 1.0.0";

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Options {
    std::string config_path;
    // data
    std::string data_dir;
    bool synthetic = false;
    std::size_t synth_bearings = 8;
    std::size_t synth_life = 120;
    // stft
    StftConfig stft;
    // model
    ModelConfig model;
    // train
    TrainConfig train;
    std::string precision = "f64";
    std::size_t stride = 1;
    std::size_t threads = 1;
};

void add_common_options(CLI::App& cmd, Options& opt, bool with_data) {
    // config file values are injected before explicit flags, last value wins
    cmd.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    cmd.add_option("--config", opt.config_path, "key=value config file");
    if (with_data) {
        cmd.add_option("--data-dir", opt.data_dir, "root directory of bearing subdirectories")
            ->envname("SALCNN_DATA_ROOT");
        cmd.add_flag("--synthetic", opt.synthetic, "use the built-in synthetic fleet");
        cmd.add_option("--synth-bearings", opt.synth_bearings, "synthetic fleet size");
        cmd.add_option("--synth-life", opt.synth_life, "recordings per synthetic bearing");
    }
    cmd.add_option("--stft-sample-rate", opt.stft.sample_rate_hz, "sampling rate, Hz");
    cmd.add_option("--stft-nperseg", opt.stft.segment_len, "STFT segment length");
    cmd.add_option("--stft-hop", opt.stft.hop, "STFT hop length");
    cmd.add_option("--stft-crop-bins", opt.stft.crop_bins, "retained frequency bins");
    cmd.add_option("--conv-depth", opt.model.conv_depth, "total conv layers");
    cmd.add_option("--conv-channels", opt.model.conv_channels, "conv stack channel width");
    cmd.add_option("--cbam-reduction", opt.model.cbam_reduction, "CBAM MLP reduction ratio");
    cmd.add_option("--cbam-kernel", opt.model.cbam_spatial_kernel, "CBAM spatial kernel size");
    cmd.add_option("--lstm-layers", opt.model.lstm_layers, "stacked LSTM layers");
    cmd.add_option("--lstm-hidden", opt.model.lstm_hidden, "LSTM hidden size");
    cmd.add_option("--window", opt.model.sequence_window, "snapshots per sample");
    cmd.add_option("--model-bins", opt.model.freq_bins, "model-facing frequency bins");
    cmd.add_option("--dropout", opt.model.dropout, "dropout rate");
    cmd.add_option("--epochs", opt.train.epochs, "training epochs");
    cmd.add_option("--batch-size", opt.train.batch_size, "batch size");
    cmd.add_option("--lr", opt.train.learning_rate, "Adam learning rate");
    cmd.add_option("--seed", opt.train.seed, "global RNG seed");
    cmd.add_option("--precision", opt.precision, "f32 or f64")
        ->check(CLI::IsMember({"f32", "f64"}));
    cmd.add_option("--stride", opt.stride, "sample window stride");
    cmd.add_option("--threads", opt.threads, "parallel LOOCV folds");
}

std::string strip(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

// Turns `key = value` lines into --key=value tokens placed right after the
// subcommand name, so anything given explicitly on the command line wins.
std::vector<std::string> expand_config_args(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    std::string path;
    for (std::size_t i = 0; i + 1 < args.size(); ++i)
        if (args[i] == "--config") path = args[i + 1];
    if (path.empty() || args.empty() || args[0].rfind("-", 0) == 0) return args;

    std::ifstream in(path);
    if (!in) throw UsageError("config file " + path + " was not readable");
    std::vector<std::string> extra;
    std::string line;
    while (std::getline(in, line)) {
        line = strip(line);
        if (line.empty() || line[0] == '#' || line[0] == ';' || line[0] == '[') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw UsageError("config file " + path + ": expected key=value, got '" + line + "'");
        std::string key = strip(line.substr(0, eq));
        std::string val = strip(line.substr(eq + 1));
        if (val.size() >= 2 && (val.front() == '"' || val.front() == '\'') &&
            val.back() == val.front())
            val = val.substr(1, val.size() - 2);
        if (key.empty()) throw UsageError("config file " + path + ": empty key");
        extra.push_back("--" + key + "=" + val);
    }
    std::vector<std::string> out;
    out.push_back(args[0]);
    out.insert(out.end(), extra.begin(), extra.end());
    out.insert(out.end(), args.begin() + 1, args.end());
    return out;
}

std::string describe(const Options& opt) {
    std::ostringstream os;
    os << "version = " << kVersion << "\n"
       << "seed = " << opt.train.seed << "\n"
       << "precision = " << opt.precision << "\n"
       << "[stft]\n"
       << "sample_rate_hz = " << opt.stft.sample_rate_hz << "\n"
       << "nperseg = " << opt.stft.segment_len << "\n"
       << "hop = " << opt.stft.hop << "\n"
       << "crop_bins = " << opt.stft.crop_bins << "\n"
       << "[model]\n"
       << "conv_depth = " << opt.model.conv_depth << "\n"
       << "conv_channels = " << opt.model.conv_channels << "\n"
       << "cbam_reduction = " << opt.model.cbam_reduction << "\n"
       << "cbam_spatial_kernel = " << opt.model.cbam_spatial_kernel << "\n"
       << "lstm_layers = " << opt.model.lstm_layers << "\n"
       << "lstm_hidden = " << opt.model.lstm_hidden << "\n"
       << "sequence_window = " << opt.model.sequence_window << "\n"
       << "time_steps = " << opt.model.time_steps << "\n"
       << "freq_bins = " << opt.model.freq_bins << "\n"
       << "dropout = " << opt.model.dropout << "\n"
       << "[train]\n"
       << "epochs = " << opt.train.epochs << "\n"
       << "batch_size = " << opt.train.batch_size << "\n"
       << "learning_rate = " << opt.train.learning_rate << "\n"
       << "stride = " << opt.stride << "\n";
    return os.str();
}

void write_manifest(const Options& opt, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write manifest " + path);
    out << describe(opt);
}

std::vector<BearingRun> load_fleet(const Options& opt) {
    if (opt.synthetic) return synth_fleet(opt.synth_bearings, opt.synth_life, opt.train.seed);
    if (opt.data_dir.empty())
        throw UsageError("either --data-dir or --synthetic is required");
    if (!fs::is_directory(opt.data_dir))
        throw UsageError("--data-dir " + opt.data_dir + " is not a directory");
    std::vector<std::string> dirs;
    for (const auto& entry : fs::directory_iterator(opt.data_dir))
        if (entry.is_directory()) dirs.push_back(entry.path().string());
    std::sort(dirs.begin(), dirs.end());
    if (dirs.empty()) throw UsageError(opt.data_dir + " contains no bearing directories");
    std::vector<BearingRun> fleet;
    for (const auto& d : dirs) fleet.push_back(load_bearing(d));
    return fleet;
}

// expected frame count for the configured recording length
void sync_time_steps(Options& opt) {
    opt.model.time_steps = kRecordingSamples / opt.stft.hop + 1;
}

// ---------------------------------------------------------------------------

int cmd_preprocess(const Options& opt, const std::string& bearing, const std::string& out_dir) {
    if (opt.data_dir.empty()) throw UsageError("--data-dir is required");
    const fs::path dir = fs::path(opt.data_dir) / bearing;
    if (!fs::is_directory(dir)) throw UsageError(dir.string() + " is not a directory");
    BearingRun run = load_bearing(dir.string());
    fs::create_directories(out_dir);
    for (std::size_t k = 0; k < run.recordings.size(); ++k) {
        Spectrogram s = stft(run.recordings[k].samples, opt.stft);
        char name[32];
        std::snprintf(name, sizeof(name), "spec_%05zu", k + 1);
        write_spectrogram_csv(s, out_dir + "/" + std::string(name) + ".csv");
        write_pgm(s.magnitudes, out_dir + "/" + std::string(name) + ".pgm");
    }
    write_manifest(opt, out_dir + "/run_manifest.txt");
    std::cout << "wrote " << 2 * run.recordings.size() << " files to " << out_dir << "\n";
    return 0;
}

template <typename T>
int run_train(const Options& opt, const std::string& out_ckpt, const std::string& history_path) {
    std::vector<BearingRun> fleet = load_fleet(opt);
    std::vector<Tensor<double>> specs;
    for (const auto& run : fleet)
        for (auto& t : run_spectrograms(run, opt.stft, opt.model.freq_bins))
            specs.push_back(std::move(t));
    const NormStats stats = compute_norm_stats(specs);
    specs.clear();

    std::vector<Sample<T>> samples;
    for (const auto& run : fleet) {
        if (run.recordings.size() < opt.model.sequence_window) {
            std::cerr << "warning: skipping " << run.id << " (shorter than window)\n";
            continue;
        }
        auto part = build_dataset<T>(run, opt.stft, opt.model.freq_bins,
                                     opt.model.sequence_window, opt.stride, stats);
        for (auto& s : part) samples.push_back(std::move(s));
    }

    ModelParams<T> params = build_model<T>(opt.model, opt.train.seed);
    params.norm_stats = stats;
    std::vector<double> history = train_model(params, samples, opt.train);
    save_model(params, out_ckpt);
    write_manifest(opt, out_ckpt + ".manifest.txt");

    const std::string hist = history_path.empty() ? out_ckpt + ".loss.csv" : history_path;
    std::ofstream out(hist, std::ios::binary);
    out << std::setprecision(17) << "epoch,mean_train_loss\n";
    for (std::size_t e = 0; e < history.size(); ++e) out << e + 1 << "," << history[e] << "\n";
    std::cout << "trained " << history.size() << " epochs on " << samples.size()
              << " samples; checkpoint " << out_ckpt << "\n";
    return 0;
}

template <typename T>
int run_evaluate(const Options& opt, const std::string& out_dir) {
    std::vector<BearingRun> fleet = load_fleet(opt);
    EvalReport report = evaluate_loocv<T>(fleet, opt.stft, opt.model, opt.train, opt.stride,
                                          opt.threads);
    write_eval_report(report, out_dir);
    write_manifest(opt, out_dir + "/run_manifest.txt");
    for (const auto& ev : report.bearings)
        std::cout << ev.bearing_id << " "
                  << (ev.skipped ? "skipped" : std::to_string(ev.mae_pct)) << "\n";
    std::cout << "mean " << report.mean_mae_pct << "\n";
    return 0;
}

template <typename T>
int run_predict(const Options& opt, const std::string& ckpt, const std::string& bearing_dir,
                const std::string& out_path) {
    ModelParams<T> params = load_model<T>(ckpt);
    BearingRun run = load_bearing(bearing_dir);
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + out_path);
    out << std::setprecision(17) << "end_index,predicted_rul_pct\n";
    if (run.recordings.size() < params.config.sequence_window) {
        std::cerr << "warning: " << run.id << " is shorter than the sequence window, no rows\n";
        return 0;
    }
    std::vector<Sample<T>> samples;
    std::vector<double> preds = predict_run(params, run, opt.stft, opt.stride, &samples);
    for (std::size_t i = 0; i < preds.size(); ++i)
        out << samples[i].end_index << "," << preds[i] << "\n";
    std::cout << "wrote " << preds.size() << " predictions to " << out_path << "\n";
    return 0;
}

template <typename T>
int run_heatmap(const Options& opt, const std::string& ckpt, const std::string& bearing_dir,
                const std::vector<std::size_t>& indices, const std::string& out_dir) {
    ModelParams<T> params = load_model<T>(ckpt);
    BearingRun run = load_bearing(bearing_dir);
    const std::size_t w = params.config.sequence_window;
    const std::size_t n = run.recordings.size();
    if (n < w) throw UsageError("bearing has fewer recordings than the sequence window");
    for (std::size_t idx : indices)
        if (idx + 1 < w || idx >= n)
            throw UsageError("index " + std::to_string(idx) + " out of range; valid range is " +
                             std::to_string(w - 1) + ".." + std::to_string(n - 1));

    fs::create_directories(out_dir);
    params.norm_stats.validate();
    const double df = opt.stft.sample_rate_hz / static_cast<double>(opt.stft.segment_len);
    for (std::size_t idx : indices) {
        // window of W consecutive recordings ending at idx
        std::vector<Tensor<double>> specs;
        for (std::size_t k = idx + 1 - w; k <= idx; ++k)
            specs.push_back(recording_spectrogram(run.recordings[k], opt.stft,
                                                  params.config.freq_bins));
        Tensor<T> window({w, params.config.time_steps, params.config.freq_bins});
        const double span = params.norm_stats.max - params.norm_stats.min;
        for (std::size_t k = 0; k < w; ++k)
            for (std::size_t i = 0; i < specs[k].size(); ++i)
                window[k * specs[k].size() + i] =
                    static_cast<T>((specs[k][i] - params.norm_stats.min) / span);

        AttentionCapture<T> cap = capture_attention(params, window);
        char tag[32];
        std::snprintf(tag, sizeof(tag), "%05zu", idx + 1);

        // spatial attention of the snapshot at idx (last of its window)
        Tensor<double> ms({params.config.time_steps, params.config.freq_bins});
        const std::size_t flat = ms.size();
        for (std::size_t i = 0; i < flat; ++i)
            ms[i] = static_cast<double>(cap.ms[(w - 1) * flat + i]);
        write_pgm(ms, out_dir + "/heatmap_" + tag + "_ms.pgm", true);

        Spectrogram ms_csv{ms, {}, {}};
        for (std::size_t t = 0; t < params.config.time_steps; ++t)
            ms_csv.frame_times_s.push_back(static_cast<double>(t) * opt.stft.hop /
                                           opt.stft.sample_rate_hz);
        for (std::size_t k = 0; k < params.config.freq_bins; ++k)
            ms_csv.bin_freqs_hz.push_back(df * static_cast<double>(k));
        write_spectrogram_csv(ms_csv, out_dir + "/heatmap_" + tag + "_ms.csv");

        std::ofstream mc(out_dir + "/heatmap_" + tag + "_mc.csv", std::ios::binary);
        mc << std::setprecision(17) << "channel,attention\n";
        for (std::size_t c = 0; c < params.config.conv_channels; ++c)
            mc << c << "," << static_cast<double>(cap.mc.at2(w - 1, c)) << "\n";

        // input spectrogram alongside, for side-by-side reading
        Spectrogram in_spec{specs.back(), ms_csv.frame_times_s, ms_csv.bin_freqs_hz};
        write_spectrogram_csv(in_spec, out_dir + "/spec_" + tag + ".csv");
        write_pgm(in_spec.magnitudes, out_dir + "/spec_" + tag + ".pgm");
    }
    write_manifest(opt, out_dir + "/run_manifest.txt");
    std::cout << "wrote attention maps for " << indices.size() << " recordings to " << out_dir
              << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"SAL-CNN bearing remaining-useful-life pipeline"};
    app.require_subcommand(1);
    Options opt;

    std::string bearing, out_dir, out_ckpt, history_path, ckpt, bearing_dir, out_path;
    std::vector<std::size_t> indices;

    CLI::App* pre = app.add_subcommand("preprocess", "export spectrograms for one bearing");
    add_common_options(*pre, opt, true);
    pre->add_option("--bearing", bearing, "bearing subdirectory name")->required();
    pre->add_option("--out-dir", out_dir, "output directory")->required();

    CLI::App* tr = app.add_subcommand("train", "train a model on a fleet");
    add_common_options(*tr, opt, true);
    tr->add_option("--out", out_ckpt, "checkpoint output path")->required();
    tr->add_option("--loss-history", history_path, "loss history CSV path");

    CLI::App* ev = app.add_subcommand("evaluate", "leave-one-bearing-out evaluation");
    add_common_options(*ev, opt, true);
    ev->add_option("--out-dir", out_dir, "report output directory")->required();

    CLI::App* pr = app.add_subcommand("predict", "predict RUL for one bearing");
    add_common_options(*pr, opt, false);
    pr->add_option("--model", ckpt, "checkpoint path")->required();
    pr->add_option("--bearing-dir", bearing_dir, "bearing directory")->required();
    pr->add_option("--out", out_path, "prediction CSV path")->required();

    CLI::App* hm = app.add_subcommand("heatmap", "export CBAM attention heatmaps");
    add_common_options(*hm, opt, false);
    hm->add_option("--model", ckpt, "checkpoint path")->required();
    hm->add_option("--bearing-dir", bearing_dir, "bearing directory")->required();
    hm->add_option("--indices", indices, "recording indices (0-based), e.g. 4,60,115")
        ->required()
        ->delimiter(',');
    hm->add_option("--out-dir", out_dir, "output directory")->required();

    try {
        std::vector<std::string> args = expand_config_args(argc, argv);
        std::reverse(args.begin(), args.end());
        app.parse(std::move(args));
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        sync_time_steps(opt);
        opt.stft.validate();
        opt.model.validate();
        opt.train.validate();
        const bool f32 = opt.precision == "f32";

        if (pre->parsed()) return cmd_preprocess(opt, bearing, out_dir);
        if (tr->parsed())
            return f32 ? run_train<float>(opt, out_ckpt, history_path)
                       : run_train<double>(opt, out_ckpt, history_path);
        if (ev->parsed())
            return f32 ? run_evaluate<float>(opt, out_dir) : run_evaluate<double>(opt, out_dir);
        if (pr->parsed()) {
            const bool ckpt32 = peek_checkpoint_width(ckpt) == 4;
            return ckpt32 ? run_predict<float>(opt, ckpt, bearing_dir, out_path)
                          : run_predict<double>(opt, ckpt, bearing_dir, out_path);
        }
        if (hm->parsed()) {
            const bool ckpt32 = peek_checkpoint_width(ckpt) == 4;
            return ckpt32 ? run_heatmap<float>(opt, ckpt, bearing_dir, indices, out_dir)
                          : run_heatmap<double>(opt, ckpt, bearing_dir, indices, out_dir);
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
