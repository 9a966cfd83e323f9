#include "socmpc/metrics/metrics.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

namespace {

using namespace socmpc;
namespace mt = socmpc::metrics;

std::vector<std::vector<Eigen::Vector2d>> offset_traj(const std::vector<std::vector<Eigen::Vector2d>>& base,
                                                      const Eigen::Vector2d& off) {
    auto out = base;
    for (auto& v : out)
        for (auto& p : v) p += off;
    return out;
}

std::vector<std::vector<Eigen::Vector2d>> straight_traj(int vehicles, int steps) {
    std::vector<std::vector<Eigen::Vector2d>> t(vehicles);
    for (int v = 0; v < vehicles; ++v)
        for (int k = 0; k < steps; ++k) t[v].push_back({k * 1.0 + v * 100.0, v * 3.5});
    return t;
}

TEST(Ade, IdenticalIsZero) {
    const auto gt = straight_traj(3, 10);
    EXPECT_DOUBLE_EQ(mt::ade(gt, gt, 10), 0.0);
    EXPECT_DOUBLE_EQ(mt::fde(gt, gt), 0.0);
}

TEST(Ade, UniformOffsetIsPythagorean) {
    const auto gt = straight_traj(2, 8);
    const auto pred = offset_traj(gt, {0.3, 0.4});
    EXPECT_NEAR(mt::ade(pred, gt, 8), 0.5, 1e-14);
}

TEST(Ade, MeanAcrossVehicles) {
    auto gt = straight_traj(2, 5);
    auto pred = gt;
    for (auto& p : pred[0]) p += Eigen::Vector2d{1.0, 0.0};
    for (auto& p : pred[1]) p += Eigen::Vector2d{3.0, 0.0};
    EXPECT_NEAR(mt::ade(pred, gt, 5), 2.0, 1e-14);
}

TEST(Ade, LengthMismatchRejected) {
    auto gt = straight_traj(1, 5);
    auto pred = straight_traj(1, 4);
    EXPECT_THROW(mt::ade(pred, gt, 5), std::invalid_argument);
}

TEST(Ade, BoundedByMaxStepError) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 2.0);
    auto gt = straight_traj(1, 12);
    auto pred = gt;
    double max_err = 0.0;
    for (auto& p : pred[0]) {
        const double e = u(rng);
        p += Eigen::Vector2d{e, 0.0};
        max_err = std::max(max_err, e);
    }
    for (int k = 1; k <= 12; ++k) EXPECT_LE(mt::ade(pred, gt, k), max_err + 1e-12);
}

TEST(Ade, MonotoneWhenTailErrorsGrow) {
    auto gt = straight_traj(1, 10);
    auto pred = gt;
    for (int k = 0; k < 10; ++k) pred[0][k] += Eigen::Vector2d{0.1 * k, 0.0};  // growing error
    double prev = 0.0;
    for (int k = 1; k <= 10; ++k) {
        const double a = mt::ade(pred, gt, k);
        EXPECT_GE(a, prev - 1e-15);
        prev = a;
    }
}

TEST(Fde, FinalPointOnly) {
    auto gt = straight_traj(1, 6);
    auto pred = gt;
    pred[0].back() += Eigen::Vector2d{0.6, 0.8};
    EXPECT_NEAR(mt::fde(pred, gt), 1.0, 1e-14);
    EXPECT_LT(mt::ade(pred, gt, 6), 1.0);
}

TEST(Fde, SingleVehicleValue) {
    auto gt = straight_traj(1, 4);
    auto pred = gt;
    pred[0].back() += Eigen::Vector2d{2.2, 0.0};
    EXPECT_NEAR(mt::fde(pred, gt), 2.2, 1e-14);
}

TEST(Frobenius, Identity2x2) { EXPECT_NEAR(mt::frobenius(Eigen::Matrix2d::Identity()), std::sqrt(2.0), 1e-15); }

TEST(Frobenius, ThreeFourFive) {
    Eigen::Matrix2d m;
    m << 3, 4, 0, 0;
    EXPECT_DOUBLE_EQ(mt::frobenius(m), 5.0);
}

TEST(Frobenius, MatchesBruteForce) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    Eigen::Matrix4d m;
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) m(r, c) = u(rng);
    double s = 0.0;
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) s += std::abs(m(r, c)) * std::abs(m(r, c));
    EXPECT_NEAR(mt::frobenius(m), std::sqrt(s), 1e-12);
}

TEST(InteractionStrength, ZeroBlocksZeroNorms) {
    std::vector<Eigen::MatrixXd> blocks(5, Eigen::MatrixXd::Zero(4, 4));
    const auto is = mt::interaction_strength(blocks);
    EXPECT_DOUBLE_EQ(is.time_averaged, 0.0);
    for (double v : is.per_step) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(InteractionStrength, ConstantBlockAveragesToItself) {
    Eigen::MatrixXd b = Eigen::MatrixXd::Identity(4, 4);
    std::vector<Eigen::MatrixXd> blocks(7, b);
    const auto is = mt::interaction_strength(blocks);
    EXPECT_NEAR(is.time_averaged, 2.0, 1e-15);
    EXPECT_NEAR(is.per_step.front(), 2.0, 1e-15);
}

TEST(InteractionStrength, AverageOfPerStep) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<Eigen::MatrixXd> blocks;
    for (int k = 0; k < 9; ++k) {
        Eigen::MatrixXd b(4, 2);
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 2; ++c) b(r, c) = u(rng);
        blocks.push_back(b);
    }
    const auto is = mt::interaction_strength(blocks);
    double mean = 0.0;
    for (double v : is.per_step) mean += v;
    mean /= 9.0;
    EXPECT_NEAR(is.time_averaged, mean, 1e-12);
}

// Naive O(n^2) DFT oracle.
std::vector<std::complex<double>> naive_dft(const std::vector<std::complex<double>>& x) {
    const size_t n = x.size();
    std::vector<std::complex<double>> X(n);
    for (size_t k = 0; k < n; ++k) {
        std::complex<double> acc{0.0, 0.0};
        for (size_t t = 0; t < n; ++t) {
            const double ang = -2.0 * M_PI * static_cast<double>(k * t) / static_cast<double>(n);
            acc += x[t] * std::complex<double>(std::cos(ang), std::sin(ang));
        }
        X[k] = acc;
    }
    return X;
}

TEST(Fft, MatchesNaiveDftUpTo1024) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (size_t n : {8u, 64u, 256u, 1024u}) {
        std::vector<std::complex<double>> x(n);
        for (auto& v : x) v = {u(rng), u(rng)};
        auto fast = x;
        mt::fft_radix2(fast);
        const auto slow = naive_dft(x);
        double worst = 0.0;
        for (size_t k = 0; k < n; ++k) worst = std::max(worst, std::abs(fast[k] - slow[k]));
        EXPECT_LT(worst, 1e-9) << "n = " << n;
    }
}

TEST(Fft, RejectsNonPowerOfTwo) {
    std::vector<std::complex<double>> x(12, {1.0, 0.0});
    EXPECT_THROW(mt::fft_radix2(x), std::invalid_argument);
}

TEST(Fft, ParsevalIdentity) {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<std::complex<double>> x(128);
    for (auto& v : x) v = {u(rng), 0.0};
    double time_energy = 0.0;
    for (const auto& v : x) time_energy += std::norm(v);
    auto X = x;
    mt::fft_radix2(X);
    double freq_energy = 0.0;
    for (const auto& v : X) freq_energy += std::norm(v);
    EXPECT_NEAR(time_energy, freq_energy / 128.0, 1e-9);
}

TEST(HeadwaySpectrum, ConstantSeriesHasNoPower) {
    std::vector<double> series(64, 1.7);
    const auto ps = mt::headway_spectrum(series, 0.1);
    for (double p : ps.power) EXPECT_LT(p, 1e-9);  // mean removal kills DC too
}

TEST(HeadwaySpectrum, SinusoidPeaksAtItsFrequency) {
    // 1 Hz sampled at 10 Hz over 12.8 s
    std::vector<double> series;
    for (int i = 0; i < 128; ++i) series.push_back(std::sin(2.0 * M_PI * 1.0 * i * 0.1));
    const auto ps = mt::headway_spectrum(series, 0.1);
    size_t peak = 1;
    for (size_t k = 1; k < ps.power.size(); ++k)
        if (ps.power[k] > ps.power[peak]) peak = k;
    EXPECT_NEAR(ps.freq_hz[peak], 1.0, 1.0 / (128 * 0.1) + 1e-12);  // within one bin
}

TEST(HeadwaySpectrum, TwoToneLinearityInDisjointBins) {
    // tones on exact bins: k=8 (0.625 Hz) and k=32 (2.5 Hz) of a 128-point FFT
    auto tone = [](double f, int n) {
        std::vector<double> s;
        for (int i = 0; i < n; ++i) s.push_back(std::sin(2.0 * M_PI * f * i * 0.1));
        return s;
    };
    const auto s1 = tone(0.625, 128), s2 = tone(2.5, 128);
    std::vector<double> sum(128);
    for (int i = 0; i < 128; ++i) sum[i] = s1[i] + s2[i];
    const auto p1 = mt::headway_spectrum(s1, 0.1);
    const auto p2 = mt::headway_spectrum(s2, 0.1);
    const auto p12 = mt::headway_spectrum(sum, 0.1);
    // in each tone's own support bins the other tone contributes only window
    // leakage, so the summed signal's amplitude matches the lone tone's
    const double peak = std::sqrt(*std::max_element(p1.power.begin(), p1.power.end()));
    for (size_t k = 6; k <= 10; ++k)
        EXPECT_NEAR(std::sqrt(p12.power[k]), std::sqrt(p1.power[k]), 1e-2 * peak);
    for (size_t k = 30; k <= 34; ++k)
        EXPECT_NEAR(std::sqrt(p12.power[k]), std::sqrt(p2.power[k]), 1e-2 * peak);
}

TEST(HeadwaySpectrum, TooShortRejected) {
    std::vector<double> series(7, 0.0);
    EXPECT_THROW(mt::headway_spectrum(series, 0.1), std::invalid_argument);
}

}  // namespace
