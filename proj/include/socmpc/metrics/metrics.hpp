#pragma once

#include <Eigen/Core>

#include <cmath>
#include <complex>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace socmpc::metrics {

/// Average displacement error over steps 1..upto, mean across vehicles.
/// Trajectories are lists of (x, y) points per vehicle, predicted vs truth.
inline double ade(const std::vector<std::vector<Eigen::Vector2d>>& pred,
                  const std::vector<std::vector<Eigen::Vector2d>>& gt, int upto) {
    if (pred.size() != gt.size() || pred.empty()) throw std::invalid_argument("ade: trajectory count mismatch");
    double total = 0.0;
    int count = 0;
    for (size_t v = 0; v < pred.size(); ++v) {
        if (pred[v].size() != gt[v].size() || static_cast<int>(pred[v].size()) < upto)
            throw std::invalid_argument("ade: length mismatch for vehicle " + std::to_string(v));
        for (int t = 0; t < upto; ++t) {
            total += (pred[v][t] - gt[v][t]).norm();
            ++count;
        }
    }
    return total / count;
}

/// Final displacement error: mean over vehicles of the last-point distance.
inline double fde(const std::vector<std::vector<Eigen::Vector2d>>& pred,
                  const std::vector<std::vector<Eigen::Vector2d>>& gt) {
    if (pred.size() != gt.size() || pred.empty()) throw std::invalid_argument("fde: trajectory count mismatch");
    double total = 0.0;
    for (size_t v = 0; v < pred.size(); ++v) {
        if (pred[v].empty() || pred[v].size() != gt[v].size())
            throw std::invalid_argument("fde: length mismatch for vehicle " + std::to_string(v));
        total += (pred[v].back() - gt[v].back()).norm();
    }
    return total / static_cast<double>(pred.size());
}

inline double frobenius(const Eigen::MatrixXd& m) {
    double s = 0.0;
    for (int r = 0; r < m.rows(); ++r)
        for (int c = 0; c < m.cols(); ++c) s += m(r, c) * m(r, c);
    return std::sqrt(s);
}

/// Per-pair interaction strength: per-step and time-averaged Frobenius norms
/// of a decoded block sequence.
struct InteractionStrength {
    std::vector<double> per_step;
    double time_averaged = 0.0;
};

inline InteractionStrength interaction_strength(const std::vector<Eigen::MatrixXd>& blocks) {
    InteractionStrength out;
    if (blocks.empty()) return out;
    for (const auto& b : blocks) out.per_step.push_back(frobenius(b));
    double s = 0.0;
    for (double v : out.per_step) s += v;
    out.time_averaged = s / static_cast<double>(out.per_step.size());
    return out;
}

// ---------------------------------------------------------------------------
// FFT
// ---------------------------------------------------------------------------

/// In-place radix-2 Cooley-Tukey. Length must be a power of two.
inline void fft_radix2(std::vector<std::complex<double>>& a) {
    const size_t n = a.size();
    if (n == 0 || (n & (n - 1)) != 0) throw std::invalid_argument("fft: length must be a power of two");
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * M_PI / static_cast<double>(len);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = a[i + k];
                const std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

inline size_t next_pow2(size_t n) {
    size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

struct PowerSpectrum {
    std::vector<double> freq_hz;
    std::vector<double> power;
    size_t n_fft = 0;
};

/// One-sided power spectrum of a time series sampled at dt. The series is
/// mean-removed, Hann-windowed and zero-padded to the next power of two.
inline PowerSpectrum headway_spectrum(const std::vector<double>& series, double dt) {
    if (series.size() < 8) throw std::invalid_argument("headway_spectrum: need at least 8 samples");
    if (!(dt > 0.0)) throw std::invalid_argument("headway_spectrum: dt must be positive");
    const size_t n = series.size();
    double mean = 0.0;
    for (double v : series) mean += v;
    mean /= static_cast<double>(n);

    const size_t nfft = next_pow2(n);
    std::vector<std::complex<double>> buf(nfft, {0.0, 0.0});
    for (size_t i = 0; i < n; ++i) {
        const double w = 0.5 * (1.0 - std::cos(2.0 * M_PI * static_cast<double>(i) / static_cast<double>(n - 1)));
        buf[i] = {(series[i] - mean) * w, 0.0};
    }
    fft_radix2(buf);

    PowerSpectrum ps;
    ps.n_fft = nfft;
    const size_t half = nfft / 2;
    for (size_t k = 0; k <= half; ++k) {
        ps.freq_hz.push_back(static_cast<double>(k) / (static_cast<double>(nfft) * dt));
        const double p = std::norm(buf[k]);
        ps.power.push_back((k == 0 || k == half) ? p : 2.0 * p);
    }
    return ps;
}

}  // namespace socmpc::metrics
