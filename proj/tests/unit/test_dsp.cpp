#include <cmath>
#include <complex>
#include <filesystem>
#include <numbers>
#include <random>

#include "doctest.h"
#include "salcnn/dsp.hpp"
#include "salcnn/numerics.hpp"  // u01

using namespace salcnn;

namespace {

// O(N^2) reference transform
std::vector<std::complex<double>> naive_dft(const std::vector<std::complex<double>>& x) {
    const std::size_t n = x.size();
    std::vector<std::complex<double>> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::complex<double> acc{0.0, 0.0};
        for (std::size_t m = 0; m < n; ++m) {
            const double ang = -2.0 * std::numbers::pi * static_cast<double>(k * m) /
                               static_cast<double>(n);
            acc += x[m] * std::complex<double>(std::cos(ang), std::sin(ang));
        }
        out[k] = acc;
    }
    return out;
}

}  // namespace

TEST_CASE("hamming window endpoints, midpoint, symmetry") {
    auto w512 = hamming_window(512);
    CHECK(w512[0] == doctest::Approx(0.08).epsilon(1e-15));
    auto w511 = hamming_window(511);
    CHECK(w511[255] == doctest::Approx(1.0).epsilon(1e-15));
    for (std::size_t k = 0; k < 512; ++k) CHECK(w512[k] == w512[511 - k]);

    // direct summation oracle
    double want = 0.0;
    for (std::size_t k = 0; k < 512; ++k)
        want += 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * k / 511.0);
    double got = 0.0;
    for (double v : w512) got += v;
    CHECK(got == doctest::Approx(want).epsilon(1e-14));

    CHECK_THROWS_AS(hamming_window(1), std::invalid_argument);
}

TEST_CASE("fft trivial spectra") {
    std::vector<std::complex<double>> impulse = {{1, 0}, {0, 0}, {0, 0}, {0, 0}};
    fft(impulse);
    for (auto v : impulse) {
        CHECK(v.real() == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(v.imag() == doctest::Approx(0.0).epsilon(1e-15));
    }
    std::vector<std::complex<double>> constant = {{1, 0}, {1, 0}, {1, 0}, {1, 0}};
    fft(constant);
    CHECK(constant[0].real() == doctest::Approx(4.0));
    for (std::size_t k = 1; k < 4; ++k) CHECK(std::abs(constant[k]) < 1e-14);

    std::vector<std::complex<double>> bad(6);
    CHECK_THROWS_AS(fft(bad), std::invalid_argument);
}

TEST_CASE("fft equals naive DFT on random inputs") {
    std::mt19937_64 rng(29);
    for (std::size_t len : {std::size_t{8}, std::size_t{64}, std::size_t{512}}) {
        for (int trial = 0; trial < 8; ++trial) {
            std::vector<std::complex<double>> x(len);
            for (auto& v : x) v = {2.0 * u01(rng) - 1.0, 2.0 * u01(rng) - 1.0};
            auto want = naive_dft(x);
            auto got = x;
            fft(got);
            for (std::size_t k = 0; k < len; ++k) CHECK(std::abs(got[k] - want[k]) < 1e-9);
        }
    }
}

TEST_CASE("parseval per windowed frame") {
    std::mt19937_64 rng(31);
    const std::size_t n = 512;
    auto window = hamming_window(n);
    std::vector<std::complex<double>> buf(n);
    double time_energy = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double v = (2.0 * u01(rng) - 1.0) * window[k];
        buf[k] = {v, 0.0};
        time_energy += v * v;
    }
    fft(buf);
    double freq_energy = 0.0;
    for (auto v : buf) freq_energy += std::norm(v);
    freq_energy /= static_cast<double>(n);
    CHECK(std::abs(time_energy - freq_energy) / time_energy < 1e-9);
}

TEST_CASE("stft shape and zero input") {
    StftConfig cfg;
    std::vector<double> zeros(2560, 0.0);
    Spectrogram s = stft(zeros, cfg);
    CHECK(s.frames() == 11);
    CHECK(s.bins() == 129);
    for (std::size_t i = 0; i < s.magnitudes.size(); ++i) CHECK(s.magnitudes[i] == 0.0);
    CHECK(s.bin_freqs_hz.front() == 0.0);
    CHECK(s.bin_freqs_hz.back() == doctest::Approx(6400.0));

    std::vector<double> wrong(2500, 0.0);
    CHECK_THROWS_WITH_AS(stft(wrong, cfg), doctest::Contains("frames"), std::invalid_argument);
}

TEST_CASE("pure tone localizes at its bin") {
    StftConfig cfg;
    std::vector<double> sine(2560);
    for (std::size_t n = 0; n < sine.size(); ++n)
        sine[n] = std::sin(2.0 * std::numbers::pi * 6250.0 * static_cast<double>(n) / 25600.0);
    Spectrogram s = stft(sine, cfg);
    // interior frames see a full window of tone
    for (std::size_t t = 1; t + 1 < s.frames(); ++t) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < s.bins(); ++k)
            if (s.magnitudes.at2(t, k) > s.magnitudes.at2(t, best)) best = k;
        CHECK(best == 125);  // 6250 Hz / (25600/512 = 50 Hz per bin)
    }
}

TEST_CASE("pure tone localization across bin-centered frequencies") {
    StftConfig cfg;
    const double df = cfg.sample_rate_hz / static_cast<double>(cfg.segment_len);
    for (std::size_t bin : {std::size_t{10}, std::size_t{40}, std::size_t{90}, std::size_t{120}}) {
        std::vector<double> sine(2560);
        for (std::size_t n = 0; n < sine.size(); ++n)
            sine[n] = std::sin(2.0 * std::numbers::pi * (df * static_cast<double>(bin)) *
                               static_cast<double>(n) / cfg.sample_rate_hz);
        Spectrogram s = stft(sine, cfg);
        std::size_t best = 0;
        for (std::size_t k = 0; k < s.bins(); ++k)
            if (s.magnitudes.at2(5, k) > s.magnitudes.at2(5, best)) best = k;
        CHECK(best == bin);
    }
}

TEST_CASE("crop keeps the low band") {
    StftConfig cfg;
    std::mt19937_64 rng(37);
    std::vector<double> sig(2560);
    for (auto& v : sig) v = 2.0 * u01(rng) - 1.0;
    Spectrogram s = stft(sig, cfg);
    Spectrogram c = crop_to_model_bins(s, 128);
    CHECK(c.frames() == 11);
    CHECK(c.bins() == 128);
    CHECK(c.magnitudes.size() == 1408);
    CHECK(c.bin_freqs_hz.back() == doctest::Approx(6350.0));  // 127 * 50 Hz
    for (std::size_t t = 0; t < c.frames(); ++t)
        for (std::size_t k = 0; k < 128; ++k)
            CHECK(c.magnitudes.at2(t, k) == s.magnitudes.at2(t, k));

    Spectrogram same = crop_to_model_bins(s, s.bins());
    for (std::size_t i = 0; i < s.magnitudes.size(); ++i)
        CHECK(same.magnitudes[i] == s.magnitudes[i]);
    CHECK_THROWS_AS(crop_to_model_bins(s, 200), std::invalid_argument);
}

TEST_CASE("normalization and its inverse") {
    Spectrogram s{Tensor<double>({2, 3}), {0.0, 0.01}, {0, 50, 100}};
    s.magnitudes.fill(1.0);
    NormStats stats{0.0, 2.0};
    Spectrogram n = normalize(s, stats);
    for (std::size_t i = 0; i < n.magnitudes.size(); ++i) CHECK(n.magnitudes[i] == 0.5);

    s.magnitudes.fill(0.0);
    n = normalize(s, stats);
    for (std::size_t i = 0; i < n.magnitudes.size(); ++i) CHECK(n.magnitudes[i] == 0.0);

    std::mt19937_64 rng(41);
    for (std::size_t i = 0; i < s.magnitudes.size(); ++i) s.magnitudes[i] = u01(rng) * 5.0;
    NormStats st{-1.0, 4.5};
    Spectrogram round = denormalize(normalize(s, st), st);
    for (std::size_t i = 0; i < s.magnitudes.size(); ++i)
        CHECK(std::abs(round.magnitudes[i] - s.magnitudes[i]) < 1e-12);

    CHECK_THROWS_AS(normalize(s, NormStats{1.0, 1.0}), std::invalid_argument);
}

TEST_CASE("spectrogram csv and pgm export round-trip") {
    namespace fs = std::filesystem;
    const std::string dir = (fs::temp_directory_path() / "salcnn_dsp_test").string();
    fs::create_directories(dir);

    StftConfig cfg;
    std::mt19937_64 rng(43);
    std::vector<double> sig(2560);
    for (auto& v : sig) v = 2.0 * u01(rng) - 1.0;
    Spectrogram s = stft(sig, cfg);

    write_spectrogram_csv(s, dir + "/spec.csv");
    std::ifstream in(dir + "/spec.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header.rfind("0,50,100", 0) == 0);
    std::size_t rows = 0;
    std::string line;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 11);

    write_pgm(s.magnitudes, dir + "/spec.pgm");
    PgmImage img = read_pgm(dir + "/spec.pgm");
    CHECK(img.width == 129);
    CHECK(img.height == 11);
    CHECK(img.pixels.size() == 129 * 11);
    fs::remove_all(dir);
}
