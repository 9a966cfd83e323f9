#pragma once

#include "socmpc/core/types.hpp"

#include <json.hpp>

#include <array>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace socmpc {

struct FrameError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// track feature columns
inline constexpr int kFs = 0;
inline constexpr int kFy = 1;
inline constexpr int kFv = 2;
inline constexpr int kFa = 3;
inline constexpr int kFpsi = 4;
inline constexpr int kVehFeatures = 5;

// lane-map layout
inline constexpr int kMapWaypoints = 20;
inline constexpr int kMapFeatures = 4;  ///< local x offset, local y offset, lane heading, exists flag
inline constexpr double kMapSpacing = 2.0;

/// Local lane geometry around one vehicle: current, left, right polylines.
/// A missing lane carries exists-flag 0 and zeroed geometry.
struct LaneMap {
    std::array<Eigen::MatrixXd, 3> lanes;  // each kMapWaypoints x kMapFeatures

    LaneMap() {
        for (auto& l : lanes) l = Eigen::MatrixXd::Zero(kMapWaypoints, kMapFeatures);
    }

    Eigen::MatrixXd& current() { return lanes[0]; }
    Eigen::MatrixXd& left() { return lanes[1]; }
    Eigen::MatrixXd& right() { return lanes[2]; }
    const Eigen::MatrixXd& current() const { return lanes[0]; }
    const Eigen::MatrixXd& left() const { return lanes[1]; }
    const Eigen::MatrixXd& right() const { return lanes[2]; }
};

/// One vehicle's record inside a frame. Tracks are T x 5 matrices with
/// columns [s, y, v, a, psi]; absent vehicles carry empty tracks.
struct VehicleTrack {
    bool present = false;
    VehicleParams params;
    Eigen::MatrixXd history;  // T_h x 5
    Eigen::MatrixXd future;   // N x 5
    LaneMap map;
};

inline VehicleState state_from_row(const Eigen::MatrixXd& track, int row) {
    return VehicleState{track(row, kFs), track(row, kFv), track(row, kFy), track(row, kFpsi)};
}

/// One training/inference sample: ego + kNumSlots neighbors, 10 Hz tracks.
struct Frame {
    std::string frame_id;
    double dt = 0.1;
    VehicleTrack ego;
    std::array<VehicleTrack, kNumSlots> slots;

    int history_steps() const { return static_cast<int>(ego.history.rows()); }
    int future_steps() const { return static_cast<int>(ego.future.rows()); }

    const VehicleTrack& vehicle(int i) const { return i == 0 ? ego : slots[i - 1]; }
    VehicleTrack& vehicle(int i) { return i == 0 ? ego : slots[i - 1]; }

    /// Current system state = last history row of every present vehicle.
    SystemState current_state() const {
        SystemState st(kNumSlots);
        st.ego = state_from_row(ego.history, history_steps() - 1);
        for (int i = 0; i < kNumSlots; ++i) {
            st.present[i] = slots[i].present;
            if (slots[i].present) st.surr[i] = state_from_row(slots[i].history, history_steps() - 1);
        }
        return st;
    }

    /// System state one step before the current one.
    SystemState previous_state() const {
        SystemState st(kNumSlots);
        const int r = std::max(0, history_steps() - 2);
        st.ego = state_from_row(ego.history, r);
        for (int i = 0; i < kNumSlots; ++i) {
            st.present[i] = slots[i].present;
            if (slots[i].present) st.surr[i] = state_from_row(slots[i].history, r);
        }
        return st;
    }
};

namespace detail {

inline nlohmann::json track_to_json(const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (int r = 0; r < m.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Eigen::MatrixXd track_from_json(const nlohmann::json& j, int cols, const std::string& what) {
    if (!j.is_array()) throw FrameError(what + ": expected array");
    Eigen::MatrixXd m(static_cast<int>(j.size()), cols);
    for (int r = 0; r < static_cast<int>(j.size()); ++r) {
        const auto& row = j[r];
        if (!row.is_array() || static_cast<int>(row.size()) != cols)
            throw FrameError(what + ": row " + std::to_string(r) + " must have " + std::to_string(cols) + " values");
        for (int c = 0; c < cols; ++c) m(r, c) = row[c].get<double>();
    }
    return m;
}

inline nlohmann::json vehicle_to_json(const VehicleTrack& v, const std::string& slot) {
    nlohmann::json j;
    j["slot"] = slot;
    j["present"] = v.present;
    j["params"] = {{"l_f", v.params.l_f},
                   {"l_r", v.params.l_r},
                   {"length", v.params.length},
                   {"width", v.params.width}};
    j["history"] = track_to_json(v.history);
    j["future"] = track_to_json(v.future);
    j["map"] = {{"current", track_to_json(v.map.current())},
                {"left", track_to_json(v.map.left())},
                {"right", track_to_json(v.map.right())}};
    return j;
}

inline VehicleTrack vehicle_from_json(const nlohmann::json& j) {
    VehicleTrack v;
    v.present = j.at("present").get<bool>();
    const auto& p = j.at("params");
    v.params.l_f = p.at("l_f").get<double>();
    v.params.l_r = p.at("l_r").get<double>();
    v.params.length = p.at("length").get<double>();
    v.params.width = p.at("width").get<double>();
    v.history = track_from_json(j.at("history"), kVehFeatures, "history");
    v.future = track_from_json(j.at("future"), kVehFeatures, "future");
    const auto& m = j.at("map");
    v.map.current() = track_from_json(m.at("current"), kMapFeatures, "map.current");
    v.map.left() = track_from_json(m.at("left"), kMapFeatures, "map.left");
    v.map.right() = track_from_json(m.at("right"), kMapFeatures, "map.right");
    return v;
}

}  // namespace detail

inline nlohmann::json frame_to_json(const Frame& f) {
    nlohmann::json j;
    j["frame_id"] = f.frame_id;
    j["dt"] = f.dt;
    nlohmann::json vehicles = nlohmann::json::array();
    vehicles.push_back(detail::vehicle_to_json(f.ego, "ego"));
    for (int i = 0; i < kNumSlots; ++i) vehicles.push_back(detail::vehicle_to_json(f.slots[i], slot_name(i)));
    j["vehicles"] = vehicles;
    return j;
}

inline Frame frame_from_json(const nlohmann::json& j) {
    Frame f;
    f.frame_id = j.at("frame_id").get<std::string>();
    f.dt = j.at("dt").get<double>();
    const auto& vehicles = j.at("vehicles");
    if (!vehicles.is_array()) throw FrameError("vehicles must be an array");
    bool saw_ego = false;
    for (const auto& vj : vehicles) {
        const std::string slot = vj.at("slot").get<std::string>();
        VehicleTrack v = detail::vehicle_from_json(vj);
        if (slot == "ego") {
            f.ego = std::move(v);
            saw_ego = true;
        } else {
            const int idx = slot_index(slot);
            if (idx < 0) throw FrameError("unknown slot '" + slot + "'");
            f.slots[idx] = std::move(v);
        }
    }
    if (!saw_ego) throw FrameError("frame is missing the ego record");
    if (!f.ego.present) throw FrameError("ego must be present");
    return f;
}

namespace detail {

inline void validate_frame(const Frame& f, int T_h, int N, int lineno) {
    auto fail = [&](const std::string& msg) {
        throw FrameError("frame '" + f.frame_id + "' (line " + std::to_string(lineno) + "): " + msg);
    };
    if (!(f.dt > 0.0)) fail("dt must be positive");
    for (int i = 0; i <= kNumSlots; ++i) {
        const VehicleTrack& v = f.vehicle(i);
        if (!v.present) continue;
        if (v.history.rows() != T_h)
            fail(std::string(i == 0 ? "ego" : slot_name(i - 1)) + " history length " +
                 std::to_string(v.history.rows()) + " != T_h " + std::to_string(T_h));
        if (v.future.rows() != N)
            fail(std::string(i == 0 ? "ego" : slot_name(i - 1)) + " future length " +
                 std::to_string(v.future.rows()) + " != N " + std::to_string(N));
        for (const auto& lane : v.map.lanes)
            if (lane.rows() != kMapWaypoints) fail("lane polyline must have " + std::to_string(kMapWaypoints) + " waypoints");
    }
}

}  // namespace detail

/// Reads a JSON-Lines frame file. All frames must agree on T_h, N and dt;
/// the first frame pins the values. Order matches the file.
inline std::vector<Frame> load_frames(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FrameError("cannot open frame file: " + path);
    std::vector<Frame> frames;
    std::string line;
    int lineno = 0;
    int T_h = -1, N = -1;
    double dt = 0.0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const std::exception& e) {
            throw FrameError("line " + std::to_string(lineno) + ": JSON parse error: " + e.what());
        }
        Frame f;
        try {
            f = frame_from_json(j);
        } catch (const FrameError&) {
            throw;
        } catch (const std::exception& e) {
            throw FrameError("line " + std::to_string(lineno) + ": " + e.what());
        }
        if (T_h < 0) {
            T_h = f.history_steps();
            N = f.future_steps();
            dt = f.dt;
        }
        if (f.dt != dt) throw FrameError("line " + std::to_string(lineno) + ": dt differs from first frame");
        detail::validate_frame(f, T_h, N, lineno);
        frames.push_back(std::move(f));
    }
    return frames;
}

inline void save_frames(const std::vector<Frame>& frames, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FrameError("cannot open output file: " + path);
    for (const Frame& f : frames) out << frame_to_json(f).dump() << "\n";
}

}  // namespace socmpc
