#pragma once

#include "socmpc/metrics/metrics.hpp"
#include "socmpc/sim/simulator.hpp"

#include <json.hpp>

#include <numeric>

namespace socmpc::metrics {

/// Closed-loop measures of effectiveness plus (when filled by the open-loop
/// path) the displacement-error table.
struct EvalReport {
    // open-loop prediction errors; empty until a predict run fills them
    std::vector<double> ade_at_horizons;  ///< ADE@1s..@5s [m]
    double fde = std::numeric_limits<double>::quiet_NaN();

    // outcome rates in percent
    double success_pct = 0, failure_pct = 0, collision_pct = 0;
    int episodes = 0;

    double offramp_duration_mean = std::numeric_limits<double>::quiet_NaN();
    double offramp_duration_min = std::numeric_limits<double>::quiet_NaN();
    double offramp_duration_max = std::numeric_limits<double>::quiet_NaN();

    double average_speed = 0.0;                  ///< ego mean speed [m/s]
    double mean_subthreshold_headway = std::numeric_limits<double>::quiet_NaN();
    double headway_threshold = 1.0;

    std::vector<double> spectrum_freq_hz;
    std::vector<double> spectrum_power;  ///< episode-averaged one-sided power

    double speed_bin_width = 0.5;
    std::vector<int> speed_histogram;  ///< bin k covers [k*w, (k+1)*w)

    std::vector<double> lane_change_distances;  ///< per ego lane change [m]
};

/// Aggregates MOEs over episode logs. Headway spectra are padded to a shared
/// FFT length so bins align before averaging; undefined headway samples are
/// filled with the episode mean so they add no oscillation energy.
inline EvalReport episode_moes(const std::vector<sim::EpisodeLog>& logs, double headway_threshold = 1.0) {
    if (logs.empty()) throw std::invalid_argument("episode_moes: no logs");
    EvalReport r;
    r.episodes = static_cast<int>(logs.size());
    r.headway_threshold = headway_threshold;

    int succ = 0, fail = 0, coll = 0;
    std::vector<double> durations;
    double speed_sum = 0.0;
    int64_t speed_count = 0;
    double sub_headway_sum = 0.0;
    int64_t sub_headway_count = 0;
    size_t longest = 0;

    for (const auto& log : logs) {
        if (log.outcome == "success") {
            ++succ;
            durations.push_back(log.offramp_time);
        } else if (log.outcome == "collision") {
            ++coll;
        } else {
            ++fail;
        }
        longest = std::max(longest, log.steps.size());
        for (const auto& st : log.steps) {
            const double v = st.vehicles.front().v;
            speed_sum += v;
            ++speed_count;
            const int bin = static_cast<int>(v / r.speed_bin_width);
            if (bin >= static_cast<int>(r.speed_histogram.size())) r.speed_histogram.resize(bin + 1, 0);
            ++r.speed_histogram[bin];
            if (st.headway >= 0.0 && st.headway < headway_threshold) {
                sub_headway_sum += st.headway;
                ++sub_headway_count;
            }
        }
        for (const auto& ev : log.ego_lane_changes)
            r.lane_change_distances.push_back(std::abs(ev.s_end - ev.s_start));
    }

    r.success_pct = 100.0 * succ / r.episodes;
    r.failure_pct = 100.0 * fail / r.episodes;
    r.collision_pct = 100.0 * coll / r.episodes;
    if (!durations.empty()) {
        r.offramp_duration_mean =
            std::accumulate(durations.begin(), durations.end(), 0.0) / durations.size();
        r.offramp_duration_min = *std::min_element(durations.begin(), durations.end());
        r.offramp_duration_max = *std::max_element(durations.begin(), durations.end());
    }
    if (speed_count > 0) r.average_speed = speed_sum / static_cast<double>(speed_count);
    if (sub_headway_count > 0)
        r.mean_subthreshold_headway = sub_headway_sum / static_cast<double>(sub_headway_count);

    // episode-averaged headway spectrum on a shared bin grid
    const size_t nfft = next_pow2(std::max<size_t>(8, longest));
    int spectra = 0;
    for (const auto& log : logs) {
        if (log.steps.size() < 8) continue;
        std::vector<double> series;
        series.reserve(log.steps.size());
        double mean = 0.0;
        int defined = 0;
        for (const auto& st : log.steps)
            if (st.headway >= 0.0) {
                mean += st.headway;
                ++defined;
            }
        mean = defined > 0 ? mean / defined : 0.0;
        for (const auto& st : log.steps) series.push_back(st.headway >= 0.0 ? st.headway : mean);
        series.resize(nfft, mean);  // extend so all episodes share bins
        const PowerSpectrum ps = headway_spectrum(series, log.dt);
        if (r.spectrum_power.empty()) {
            r.spectrum_freq_hz = ps.freq_hz;
            r.spectrum_power.assign(ps.power.size(), 0.0);
        }
        for (size_t k = 0; k < ps.power.size(); ++k) r.spectrum_power[k] += ps.power[k];
        ++spectra;
    }
    if (spectra > 0)
        for (double& p : r.spectrum_power) p /= spectra;
    return r;
}

inline nlohmann::json report_to_json(const EvalReport& r) {
    nlohmann::json j;
    auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); };
    j["ade_at_horizons"] = r.ade_at_horizons;
    j["fde"] = num(r.fde);
    j["episodes"] = r.episodes;
    j["success_pct"] = r.success_pct;
    j["failure_pct"] = r.failure_pct;
    j["collision_pct"] = r.collision_pct;
    j["offramp_duration_mean"] = num(r.offramp_duration_mean);
    j["offramp_duration_min"] = num(r.offramp_duration_min);
    j["offramp_duration_max"] = num(r.offramp_duration_max);
    j["average_speed"] = r.average_speed;
    j["mean_subthreshold_headway"] = num(r.mean_subthreshold_headway);
    j["headway_threshold"] = r.headway_threshold;
    j["spectrum_freq_hz"] = r.spectrum_freq_hz;
    j["spectrum_power"] = r.spectrum_power;
    j["speed_bin_width"] = r.speed_bin_width;
    j["speed_histogram"] = r.speed_histogram;
    j["lane_change_distances"] = r.lane_change_distances;
    return j;
}

}  // namespace socmpc::metrics
