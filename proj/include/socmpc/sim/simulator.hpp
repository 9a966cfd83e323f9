#pragma once

#include "socmpc/core/config.hpp"
#include "socmpc/core/rng.hpp"
#include "socmpc/kinematics.hpp"
#include "socmpc/sim/ego_interface.hpp"
#include "socmpc/sim/idm_mobil.hpp"

#include <json.hpp>

#include <deque>
#include <fstream>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace socmpc::sim {

// ---------------------------------------------------------------------------
// scenario
// ---------------------------------------------------------------------------

/// Off-ramp scenario description. Lane 0 is the rightmost (ramp) lane and
/// lane centers sit at y = lane * lane_width.
struct Scenario {
    int lanes = 3;
    double lane_width = 3.5;
    double length = 700.0;
    double ramp_start = 420.0;
    double ramp_end = 640.0;
    double vc_ratio = 0.6;        ///< demand knob in {0.4, 0.6, 0.8}
    std::string style = "normal"; ///< "normal" | "aggressive"
    double horizon_s = 60.0;
    uint64_t seed = 1;
    double ego_spawn_s = 60.0;
    double ego_spawn_v = 18.0;
    int ego_spawn_lane = 2;
    int target_lane = 0;
    double desired_speed = 22.0;

    double lane_center(int lane) const { return lane * lane_width; }
};

struct ScenarioError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline Scenario parse_scenario(std::istream& in) {
    Scenario s;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = socmpc::detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ScenarioError("scenario line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = socmpc::detail::trim(line.substr(0, eq));
        const std::string value = socmpc::detail::trim(line.substr(eq + 1));
        if (key == "lanes") s.lanes = std::stoi(value);
        else if (key == "lane_width") s.lane_width = std::stod(value);
        else if (key == "length") s.length = std::stod(value);
        else if (key == "ramp_start") s.ramp_start = std::stod(value);
        else if (key == "ramp_end") s.ramp_end = std::stod(value);
        else if (key == "vc_ratio") s.vc_ratio = std::stod(value);
        else if (key == "style") s.style = value;
        else if (key == "horizon_s") s.horizon_s = std::stod(value);
        else if (key == "seed") s.seed = std::stoull(value);
        else if (key == "ego_spawn_s") s.ego_spawn_s = std::stod(value);
        else if (key == "ego_spawn_v") s.ego_spawn_v = std::stod(value);
        else if (key == "ego_spawn_lane") s.ego_spawn_lane = std::stoi(value);
        else if (key == "target_lane") s.target_lane = std::stoi(value);
        else if (key == "desired_speed") s.desired_speed = std::stod(value);
        else throw ScenarioError("unknown scenario key '" + key + "'");
    }
    if (s.lanes < 1) throw ScenarioError("lanes must be >= 1");
    if (s.target_lane < 0 || s.target_lane >= s.lanes) throw ScenarioError("target lane does not exist");
    if (s.ego_spawn_lane < 0 || s.ego_spawn_lane >= s.lanes) throw ScenarioError("ego spawn lane does not exist");
    if (!(s.ramp_start < s.ramp_end && s.ramp_end <= s.length))
        throw ScenarioError("off-ramp window must lie within the road length");
    if (s.style != "normal" && s.style != "aggressive") throw ScenarioError("style must be normal or aggressive");
    return s;
}

inline Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ScenarioError("cannot open scenario file: " + path);
    return parse_scenario(in);
}

/// Driving-style parameter sets; "aggressive" tightens headways and
/// thresholds relative to "normal".
struct DriverStyle {
    IdmParams idm;
    MobilParams mobil;
};

inline DriverStyle style_params(const std::string& style) {
    DriverStyle d;
    if (style == "aggressive") {
        d.idm.T = 0.9;
        d.idm.a_max = 2.5;
        d.mobil.delta_a_th = 0.05;
        d.mobil.politeness = 0.1;
    }
    return d;
}

// ---------------------------------------------------------------------------
// episode log
// ---------------------------------------------------------------------------

struct VehicleSnapshot {
    int id = 0;
    bool is_ego = false;
    double s = 0, v = 0, y = 0, psi = 0;
    int lane = 0;
};

struct EpisodeStep {
    double t = 0.0;
    std::vector<VehicleSnapshot> vehicles;  // ego first, then SVs by id
    ControlInput ego_u;
    double headway = -1.0;  ///< ego time headway [s]; negative = undefined
};

struct LaneChangeEvent {
    double t_start = 0, t_end = 0;
    double s_start = 0, s_end = 0;
    int from_lane = 0, to_lane = 0;
};

struct EpisodeLog {
    std::string planner;
    uint64_t seed = 0;
    double dt = 0.1;
    std::string outcome;  ///< "success" | "failure" | "collision"
    double end_time = 0.0;
    double offramp_time = -1.0;  ///< spawn-to-ramp-exit time on success
    std::vector<EpisodeStep> steps;
    std::vector<LaneChangeEvent> ego_lane_changes;
};

inline nlohmann::json step_to_json(const EpisodeStep& st) {
    nlohmann::json j;
    j["t"] = st.t;
    j["headway"] = st.headway;
    j["ego_u"] = {st.ego_u.a, st.ego_u.delta_f};
    nlohmann::json vs = nlohmann::json::array();
    for (const auto& v : st.vehicles)
        vs.push_back({{"id", v.id},
                      {"ego", v.is_ego},
                      {"s", v.s},
                      {"v", v.v},
                      {"y", v.y},
                      {"psi", v.psi},
                      {"lane", v.lane}});
    j["vehicles"] = vs;
    return j;
}

inline nlohmann::json summary_to_json(const EpisodeLog& log) {
    nlohmann::json j;
    j["planner"] = log.planner;
    j["seed"] = log.seed;
    j["dt"] = log.dt;
    j["outcome"] = log.outcome;
    j["end_time"] = log.end_time;
    j["offramp_time"] = log.offramp_time;
    nlohmann::json lc = nlohmann::json::array();
    for (const auto& e : log.ego_lane_changes)
        lc.push_back({{"t_start", e.t_start},
                      {"t_end", e.t_end},
                      {"s_start", e.s_start},
                      {"s_end", e.s_end},
                      {"from_lane", e.from_lane},
                      {"to_lane", e.to_lane}});
    j["ego_lane_changes"] = lc;
    j["steps"] = static_cast<int>(log.steps.size());
    return j;
}

/// Writes <prefix>.steps.jsonl (one step per line) and <prefix>.summary.json.
inline void write_episode_log(const EpisodeLog& log, const std::string& prefix) {
    {
        std::ofstream out(prefix + ".steps.jsonl");
        if (!out) throw ScenarioError("cannot write " + prefix + ".steps.jsonl");
        for (const auto& st : log.steps) out << step_to_json(st).dump() << "\n";
    }
    std::ofstream out(prefix + ".summary.json");
    if (!out) throw ScenarioError("cannot write " + prefix + ".summary.json");
    out << summary_to_json(log).dump(2) << "\n";
}

inline EpisodeLog read_episode_log(const std::string& prefix) {
    EpisodeLog log;
    std::ifstream sum(prefix + ".summary.json");
    if (!sum) throw ScenarioError("cannot open " + prefix + ".summary.json");
    nlohmann::json j = nlohmann::json::parse(sum);
    log.planner = j.at("planner").get<std::string>();
    log.seed = j.at("seed").get<uint64_t>();
    log.dt = j.at("dt").get<double>();
    log.outcome = j.at("outcome").get<std::string>();
    log.end_time = j.at("end_time").get<double>();
    log.offramp_time = j.at("offramp_time").get<double>();
    for (const auto& e : j.at("ego_lane_changes")) {
        LaneChangeEvent ev;
        ev.t_start = e.at("t_start").get<double>();
        ev.t_end = e.at("t_end").get<double>();
        ev.s_start = e.at("s_start").get<double>();
        ev.s_end = e.at("s_end").get<double>();
        ev.from_lane = e.at("from_lane").get<int>();
        ev.to_lane = e.at("to_lane").get<int>();
        log.ego_lane_changes.push_back(ev);
    }
    std::ifstream steps(prefix + ".steps.jsonl");
    if (!steps) throw ScenarioError("cannot open " + prefix + ".steps.jsonl");
    std::string line;
    while (std::getline(steps, line)) {
        if (line.empty()) continue;
        nlohmann::json sj = nlohmann::json::parse(line);
        EpisodeStep st;
        st.t = sj.at("t").get<double>();
        st.headway = sj.at("headway").get<double>();
        st.ego_u = {sj.at("ego_u")[0].get<double>(), sj.at("ego_u")[1].get<double>()};
        for (const auto& vj : sj.at("vehicles")) {
            VehicleSnapshot v;
            v.id = vj.at("id").get<int>();
            v.is_ego = vj.at("ego").get<bool>();
            v.s = vj.at("s").get<double>();
            v.v = vj.at("v").get<double>();
            v.y = vj.at("y").get<double>();
            v.psi = vj.at("psi").get<double>();
            v.lane = vj.at("lane").get<int>();
            st.vehicles.push_back(v);
        }
        log.steps.push_back(std::move(st));
    }
    return log;
}

// ---------------------------------------------------------------------------
// traffic world
// ---------------------------------------------------------------------------

namespace detail {

struct TrackedVehicle {
    int id = 0;
    bool is_ego = false;
    VehicleState st;
    VehicleParams params{1.5, 1.5, 4.5, 1.8};
    IdmParams idm;
    MobilParams mobil;
    int lane = 0;
    int change_to = -1;       // target lane while a change is in progress
    double change_t = 0.0;
    double change_y0 = 0.0;
    double change_dur = 3.0;
    double accel = 0.0;
    int spawn_step = 0;
    std::vector<std::array<double, 5>> hist;  // (s, y, v, a, psi) per step since spawn

    bool changing() const { return change_to >= 0; }
};

inline double footprint_gap(const TrackedVehicle& rear, const TrackedVehicle& front) {
    return front.st.s - rear.st.s - 0.5 * (front.params.length + rear.params.length);
}

}  // namespace detail

/// Relative-region slot assignment: nearest vehicle per region
/// (same/left/right lane x ahead/behind), nearest by Euclidean gap.
/// `others` supplies (index, s, y, lane); returns indices per slot, -1 = empty.
struct SlotCandidate {
    int index = -1;
    double s = 0, y = 0;
    int lane = 0;
};

inline std::array<int, kNumSlots> assign_slots(double ego_s, double ego_y, int ego_lane,
                                               const std::vector<SlotCandidate>& others) {
    std::array<int, kNumSlots> best_idx;
    best_idx.fill(-1);
    std::array<double, kNumSlots> best_d2;
    best_d2.fill(std::numeric_limits<double>::infinity());
    for (const auto& o : others) {
        int slot = -1;
        const bool ahead = o.s >= ego_s;
        if (o.lane == ego_lane)
            slot = ahead ? static_cast<int>(Slot::FV) : static_cast<int>(Slot::RV);
        else if (o.lane == ego_lane + 1)
            slot = ahead ? static_cast<int>(Slot::LFV) : static_cast<int>(Slot::LRV);
        else if (o.lane == ego_lane - 1)
            slot = ahead ? static_cast<int>(Slot::RFV) : static_cast<int>(Slot::RRV);
        if (slot < 0) continue;
        const double d2 = (o.s - ego_s) * (o.s - ego_s) + (o.y - ego_y) * (o.y - ego_y);
        if (d2 < best_d2[slot]) {
            best_d2[slot] = d2;
            best_idx[slot] = o.index;
        }
    }
    return best_idx;
}

/// Local lane map of a vehicle on the straight road: waypoints every 2 m
/// ahead, features (x offset, y offset, lane heading, exists flag).
inline LaneMap local_lane_map(double veh_y, int veh_lane, const Scenario& scn) {
    LaneMap map;
    const int lanes_rel[3] = {veh_lane, veh_lane + 1, veh_lane - 1};  // current, left, right
    for (int l = 0; l < 3; ++l) {
        const bool exists = lanes_rel[l] >= 0 && lanes_rel[l] < scn.lanes;
        for (int k = 0; k < kMapWaypoints; ++k) {
            map.lanes[l](k, 0) = exists ? kMapSpacing * k : 0.0;
            map.lanes[l](k, 1) = exists ? scn.lane_center(lanes_rel[l]) - veh_y : 0.0;
            map.lanes[l](k, 2) = 0.0;
            map.lanes[l](k, 3) = exists ? 1.0 : 0.0;
        }
    }
    return map;
}

class TrafficWorld {
public:
    TrafficWorld(const Scenario& scn, bool with_ego, int T_h, double dt)
        : scn_(scn), with_ego_(with_ego), T_h_(T_h), dt_(dt), style_(style_params(scn.style)) {
        spawn_rng_ = make_rng(scn.seed, "spawn");
        init_rng_ = make_rng(scn.seed, "init");
        populate_initial();
        if (with_ego_) {
            detail::TrackedVehicle ego;
            ego.id = 0;
            ego.is_ego = true;
            ego.st = {scn.ego_spawn_s, scn.ego_spawn_v, scn.lane_center(scn.ego_spawn_lane), 0.0};
            ego.lane = scn.ego_spawn_lane;
            ego.idm = style_.idm;
            ego.mobil = style_.mobil;
            clear_region(ego.st.s, ego.lane, 25.0);
            vehicles_.insert(vehicles_.begin(), ego);
        }
        for (auto& v : vehicles_) record_history(v);
    }

    const Scenario& scenario() const { return scn_; }
    double time() const { return step_count_ * dt_; }
    int step_count() const { return step_count_; }
    const std::vector<detail::TrackedVehicle>& vehicles() const { return vehicles_; }
    const std::vector<detail::TrackedVehicle>& archive() const { return archive_; }

    detail::TrackedVehicle& ego() {
        if (!with_ego_ || vehicles_.empty() || !vehicles_.front().is_ego)
            throw ScenarioError("world has no ego vehicle");
        return vehicles_.front();
    }

    /// Advances every vehicle one step; `ego_u` is ignored when the world was
    /// built without an ego. Returns false once a collision happened.
    bool step(const ControlInput& ego_u) {
        // surrounding vehicles decide first (reacting to the world as-is,
        // including the ego's current motion), then everyone moves
        for (auto& v : vehicles_) {
            if (v.is_ego) continue;
            update_sv_decision(v);
        }
        for (auto& v : vehicles_) {
            if (v.is_ego)
                advance_ego(v, ego_u);
            else
                advance_sv(v);
        }
        despawn_and_spawn();
        ++step_count_;
        for (auto& v : vehicles_) record_history(v);
        return !detect_collision();
    }

    bool collided() const { return collided_; }

    /// Ego time headway to its same-lane leader; negative when undefined.
    double ego_headway() const {
        if (!with_ego_) return -1.0;
        const auto& ego = vehicles_.front();
        if (ego.st.v < 0.5) return -1.0;
        double best = std::numeric_limits<double>::infinity();
        const detail::TrackedVehicle* lead = nullptr;
        for (const auto& o : vehicles_) {
            if (o.id == ego.id) continue;
            if (nearest_lane(o.st.y) != nearest_lane(ego.st.y)) continue;
            const double ds = o.st.s - ego.st.s;
            if (ds > 0.0 && ds < best) {
                best = ds;
                lead = &o;
            }
        }
        if (!lead) return -1.0;
        const double gap = detail::footprint_gap(vehicles_.front(), *lead);
        return gap > 0.0 ? gap / ego.st.v : 0.0;
    }

    int nearest_lane(double y) const {
        int lane = static_cast<int>(std::lround(y / scn_.lane_width));
        return std::clamp(lane, 0, scn_.lanes - 1);
    }

    /// Frame-shaped observation around the ego (no future tracks).
    EgoObservation observe() {
        EgoObservation obs;
        obs.t = time();
        obs.dt = dt_;
        obs.target_y = scn_.lane_center(scn_.target_lane);
        obs.lane_width = scn_.lane_width;
        obs.desired_speed = scn_.desired_speed;
        obs.ramp_start = scn_.ramp_start;
        obs.ramp_end = scn_.ramp_end;
        Frame& f = obs.frame;
        f.frame_id = "live_t" + std::to_string(step_count_);
        f.dt = dt_;
        const auto& ego = vehicles_.front();
        f.ego.present = true;
        f.ego.params = ego.params;
        f.ego.history = history_matrix(ego);
        f.ego.map = local_lane_map(ego.st.y, nearest_lane(ego.st.y), scn_);

        std::vector<SlotCandidate> cands;
        for (size_t i = 1; i < vehicles_.size(); ++i) {
            const auto& o = vehicles_[i];
            cands.push_back({static_cast<int>(i), o.st.s, o.st.y, nearest_lane(o.st.y)});
        }
        const auto slots = assign_slots(ego.st.s, ego.st.y, nearest_lane(ego.st.y), cands);
        for (int s = 0; s < kNumSlots; ++s) {
            if (slots[s] < 0) {
                f.slots[s].present = false;
                f.slots[s].history.resize(0, kVehFeatures);
                f.slots[s].future.resize(0, kVehFeatures);
                continue;
            }
            const auto& o = vehicles_[slots[s]];
            f.slots[s].present = true;
            f.slots[s].params = o.params;
            f.slots[s].history = history_matrix(o);
            f.slots[s].map = local_lane_map(o.st.y, nearest_lane(o.st.y), scn_);
            f.slots[s].future.resize(0, kVehFeatures);
        }
        f.ego.future.resize(0, kVehFeatures);
        return obs;
    }

    VehicleSnapshot snapshot_of(const detail::TrackedVehicle& v) const {
        return {v.id, v.is_ego, v.st.s, v.st.v, v.st.y, v.st.psi, nearest_lane(v.st.y)};
    }

private:
    /// History of the last T_h steps as a T_h x 5 track, backfilled by
    /// constant-velocity extrapolation for freshly spawned vehicles.
    Eigen::MatrixXd history_matrix(const detail::TrackedVehicle& v) const {
        Eigen::MatrixXd m(T_h_, kVehFeatures);
        const int have = static_cast<int>(v.hist.size());
        for (int r = 0; r < T_h_; ++r) {
            const int src = have - T_h_ + r;
            if (src >= 0) {
                for (int c = 0; c < kVehFeatures; ++c) m(r, c) = v.hist[src][c];
            } else if (have > 0) {
                const auto& oldest = v.hist.front();
                const double back = (have - T_h_ + r - 0) * dt_;  // negative
                m(r, kFs) = oldest[kFs] + back * oldest[kFv];
                m(r, kFy) = oldest[kFy];
                m(r, kFv) = oldest[kFv];
                m(r, kFa) = 0.0;
                m(r, kFpsi) = oldest[kFpsi];
            } else {
                const double back = (r - (T_h_ - 1)) * dt_;
                m(r, kFs) = v.st.s + back * v.st.v;
                m(r, kFy) = v.st.y;
                m(r, kFv) = v.st.v;
                m(r, kFa) = 0.0;
                m(r, kFpsi) = v.st.psi;
            }
        }
        return m;
    }

    void record_history(detail::TrackedVehicle& v) {
        v.hist.push_back({v.st.s, v.st.y, v.st.v, v.accel, v.st.psi});
    }

    bool occupies(const detail::TrackedVehicle& v, int lane) const {
        if (lane < 0 || lane >= scn_.lanes) return false;
        if (v.changing() && lane == v.change_to) return true;  // commit from decision time
        return std::abs(scn_.lane_center(lane) - v.st.y) < 0.75 * scn_.lane_width;
    }

    const detail::TrackedVehicle* leader_in_lane(const detail::TrackedVehicle& self, int lane,
                                                 double* gap_out) const {
        const detail::TrackedVehicle* best = nullptr;
        double best_ds = std::numeric_limits<double>::infinity();
        for (const auto& o : vehicles_) {
            if (o.id == self.id || !occupies(o, lane)) continue;
            const double ds = o.st.s - self.st.s;
            if (ds > 0.0 && ds < best_ds) {
                best_ds = ds;
                best = &o;
            }
        }
        if (best && gap_out) *gap_out = detail::footprint_gap(self, *best);
        return best;
    }

    const detail::TrackedVehicle* follower_in_lane(const detail::TrackedVehicle& self, int lane,
                                                   double* gap_out) const {
        const detail::TrackedVehicle* best = nullptr;
        double best_ds = std::numeric_limits<double>::infinity();
        for (const auto& o : vehicles_) {
            if (o.id == self.id || !occupies(o, lane)) continue;
            const double ds = self.st.s - o.st.s;
            if (ds > 0.0 && ds < best_ds) {
                best_ds = ds;
                best = &o;
            }
        }
        if (best && gap_out) *gap_out = detail::footprint_gap(*best, self);
        return best;
    }

    LaneContext lane_context(const detail::TrackedVehicle& self, int lane) const {
        LaneContext ctx;
        if (lane < 0 || lane >= scn_.lanes) return ctx;
        ctx.exists = true;
        double gap = 0.0;
        if (const auto* lead = leader_in_lane(self, lane, &gap)) {
            ctx.has_leader = true;
            ctx.leader_v = lead->st.v;
            ctx.leader_gap = gap;
        }
        if (const auto* foll = follower_in_lane(self, lane, &gap)) {
            ctx.has_follower = true;
            ctx.follower_v = foll->st.v;
            ctx.follower_gap = gap;
            if (ctx.has_leader) {
                const auto* lead = leader_in_lane(self, lane, nullptr);
                ctx.follower_to_leader_gap = detail::footprint_gap(*foll, *lead);
            }
        }
        return ctx;
    }

    void update_sv_decision(detail::TrackedVehicle& v) {
        // car-following against the most restrictive occupied-lane leader
        double a_cmd = idm_accel(v.st.v, 0.0, kNoLeaderGap, v.idm);
        for (int lane : {v.lane, v.change_to}) {
            if (lane < 0) continue;
            double gap = 0.0;
            if (const auto* lead = leader_in_lane(v, lane, &gap))
                a_cmd = std::min(a_cmd, idm_accel(v.st.v, lead->st.v, gap, v.idm));
        }
        v.accel = a_cmd;

        // lane-change decision once per second, staggered by id
        if (!v.changing() && (step_count_ + v.id) % decision_period_ == 0) {
            const LaneContext cur = lane_context(v, v.lane);
            const LaneContext left = lane_context(v, v.lane + 1);
            const LaneContext right = lane_context(v, v.lane - 1);
            const LaneChange d = mobil_decide(v.st.v, cur, left, right, v.idm, v.mobil);
            if (d != LaneChange::stay) {
                v.change_to = v.lane + (d == LaneChange::left ? 1 : -1);
                v.change_t = 0.0;
                v.change_y0 = v.st.y;
            }
        }
    }

    void advance_sv(detail::TrackedVehicle& v) {
        const double a = v.accel;
        v.st.s += v.st.v * dt_ + 0.5 * a * dt_ * dt_;
        v.st.v = std::max(0.0, v.st.v + a * dt_);
        if (v.changing()) {
            v.change_t += dt_;
            const double tau = std::min(1.0, v.change_t / v.change_dur);
            const double y1 = scn_.lane_center(v.change_to);
            const double blend = tau * tau * (3.0 - 2.0 * tau);  // C1 smoothstep
            const double y_new = v.change_y0 + (y1 - v.change_y0) * blend;
            const double y_dot = (y1 - v.change_y0) * 6.0 * tau * (1.0 - tau) / v.change_dur;
            v.st.y = y_new;
            v.st.psi = std::atan2(y_dot, std::max(v.st.v, 1.0));
            if (tau >= 1.0) {
                v.lane = v.change_to;
                v.change_to = -1;
                v.st.y = y1;
                v.st.psi = 0.0;
            }
        }
    }

    void advance_ego(detail::TrackedVehicle& v, const ControlInput& u) {
        v.accel = u.a;
        auto deriv = [&](const Eigen::Vector4d& x) {
            VehicleState st = VehicleState::from_vec(x);
            st.v = std::max(0.0, st.v);
            return bicycle_derivative(st, u, v.params);
        };
        const Eigen::Vector4d x0 = v.st.vec();
        const Eigen::Vector4d k1 = deriv(x0);
        const Eigen::Vector4d k2 = deriv(x0 + 0.5 * dt_ * k1);
        const Eigen::Vector4d k3 = deriv(x0 + 0.5 * dt_ * k2);
        const Eigen::Vector4d k4 = deriv(x0 + dt_ * k3);
        Eigen::Vector4d x1 = x0 + dt_ / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        x1[1] = std::max(0.0, x1[1]);
        v.st = VehicleState::from_vec(x1);
    }

    void populate_initial() {
        const double rate = spawn_rate_per_lane();
        if (rate <= 0.0) return;
        std::uniform_real_distribution<double> uu(0.0, 1.0);
        for (int lane = 0; lane < scn_.lanes; ++lane) {
            const double v_mean = 0.85 * style_.idm.v0;
            const double mean_gap = std::max(style_.idm.s0 + 8.0, v_mean / rate);
            double s = scn_.length - 20.0;
            while (s > 40.0) {
                s -= mean_gap * (0.5 + uu(init_rng_));
                if (s <= 40.0) break;
                spawn_vehicle(lane, s, sample_desired_speed(init_rng_) * 0.85, init_rng_, 0);
            }
        }
    }

    double spawn_rate_per_lane() const {
        return scn_.vc_ratio * 2200.0 / 3600.0;  // veh/s, nominal capacity 2200 veh/h/lane
    }

    double sample_desired_speed(std::mt19937_64& rng) {
        const double lo = scn_.style == "aggressive" ? 25.0 : 22.0;
        const double hi = scn_.style == "aggressive" ? 35.0 : 32.0;
        std::uniform_real_distribution<double> u(lo, hi);
        return u(rng);
    }

    void spawn_vehicle(int lane, double s, double v, std::mt19937_64& rng, int spawn_step) {
        detail::TrackedVehicle nv;
        nv.id = next_id_++;
        nv.st = {s, v, scn_.lane_center(lane), 0.0};
        nv.lane = lane;
        nv.idm = style_.idm;
        nv.mobil = style_.mobil;
        nv.idm.v0 = sample_desired_speed(rng);
        nv.spawn_step = spawn_step;
        // cap the entry speed so the downstream leader stays reachable by a
        // comfortable stop, and refuse to spawn into an occupied spot
        double lead_gap = kNoLeaderGap;
        double lead_v = 0.0;
        if (const auto* lead = leader_in_lane(nv, lane, &lead_gap)) lead_v = lead->st.v;
        if (std::isfinite(lead_gap)) {
            if (lead_gap < nv.idm.s0 + 2.0) return;
            const double v_safe =
                std::sqrt(std::max(0.0, lead_v * lead_v + 2.0 * nv.idm.b * (lead_gap - nv.idm.s0)));
            nv.st.v = std::min(v, v_safe);
        }
        for (const auto& o : vehicles_)
            if (std::abs(o.st.y - nv.st.y) < 0.75 * scn_.lane_width &&
                std::abs(o.st.s - s) < nv.idm.s0 + 0.5 * (o.params.length + nv.params.length))
                return;
        vehicles_.push_back(nv);
    }

    void clear_region(double s, int lane, double radius) {
        std::erase_if(vehicles_, [&](const detail::TrackedVehicle& o) {
            return !o.is_ego && occupies(o, lane) && std::abs(o.st.s - s) < radius;
        });
    }

    void despawn_and_spawn() {
        for (auto it = vehicles_.begin(); it != vehicles_.end();) {
            if (!it->is_ego && it->st.s > scn_.length) {
                archive_.push_back(std::move(*it));
                it = vehicles_.erase(it);
            } else {
                ++it;
            }
        }
        const double rate = spawn_rate_per_lane();
        if (rate <= 0.0) return;
        std::uniform_real_distribution<double> uu(0.0, 1.0);
        for (int lane = 0; lane < scn_.lanes; ++lane)
            if (uu(spawn_rng_) < rate * dt_)
                spawn_vehicle(lane, 2.0, sample_desired_speed(spawn_rng_) * 0.8, spawn_rng_, step_count_ + 1);
    }

    bool detect_collision() {
        for (size_t i = 0; i < vehicles_.size() && !collided_; ++i)
            for (size_t j = i + 1; j < vehicles_.size(); ++j) {
                const auto& a = vehicles_[i];
                const auto& b = vehicles_[j];
                if (std::abs(a.st.s - b.st.s) < 0.5 * (a.params.length + b.params.length) &&
                    std::abs(a.st.y - b.st.y) < 0.5 * (a.params.width + b.params.width)) {
                    collided_ = true;
                    break;
                }
            }
        return collided_;
    }

    Scenario scn_;
    bool with_ego_;
    int T_h_;
    double dt_;
    DriverStyle style_;
    std::vector<detail::TrackedVehicle> vehicles_;  // ego (if any) always first
    std::vector<detail::TrackedVehicle> archive_;
    std::mt19937_64 spawn_rng_;
    std::mt19937_64 init_rng_;
    int next_id_ = 1;
    int step_count_ = 0;
    int decision_period_ = 10;  // one MOBIL decision per second at 10 Hz
    bool collided_ = false;
};

// ---------------------------------------------------------------------------
// PAS baseline planner: IDM longitudinal + route-biased MOBIL lateral
// ---------------------------------------------------------------------------

class PasPlanner : public EgoPlanner {
public:
    PasPlanner(const Scenario& scn, const Config& cfg)
        : scn_(scn), cfg_(cfg), style_(style_params(scn.style)) {}

    const char* name() const override { return "pas"; }

    ControlInput act(const EgoObservation& obs) override {
        const Frame& f = obs.frame;
        const VehicleState ego = state_from_row(f.ego.history, f.history_steps() - 1);
        const int lane = nearest_lane(ego.y);

        // longitudinal: IDM against the front vehicle (and the target-lane
        // front vehicle while a change is in progress)
        double a_cmd = idm_accel(ego.v, 0.0, kNoLeaderGap, style_.idm);
        a_cmd = std::min(a_cmd, idm_toward_slot(f, ego, Slot::FV));
        if (changing_) {
            const Slot side_front = change_target_ > lane_at_start_ ? Slot::LFV : Slot::RFV;
            a_cmd = std::min(a_cmd, idm_toward_slot(f, ego, side_front));
        }

        if (!changing_ && obs.t >= next_decision_t_) {
            next_decision_t_ = obs.t + 1.0;
            decide_change(f, ego, lane, obs);
        }

        // lateral: track the lane-change spline (or the lane center)
        double y_des = scn_.lane_center(lane);
        double y_dot_des = 0.0;
        if (changing_) {
            change_t_ += obs.dt;
            const double tau = std::min(1.0, change_t_ / change_dur_);
            const double y1 = scn_.lane_center(change_target_);
            const double blend = tau * tau * (3.0 - 2.0 * tau);
            y_des = change_y0_ + (y1 - change_y0_) * blend;
            y_dot_des = (y1 - change_y0_) * 6.0 * tau * (1.0 - tau) / change_dur_;
            if (tau >= 1.0) changing_ = false;
        }
        const double v_eff = std::max(ego.v, 2.0);
        double psi_des = std::asin(std::clamp((y_dot_des + 0.5 * (y_des - ego.y)) / v_eff, -0.35, 0.35));
        const double delta = std::clamp(2.0 * (psi_des - ego.psi), -cfg_.delta_max, cfg_.delta_max);
        return {std::clamp(a_cmd, cfg_.a_min, cfg_.a_max), delta};
    }

private:
    int nearest_lane(double y) const {
        return std::clamp(static_cast<int>(std::lround(y / scn_.lane_width)), 0, scn_.lanes - 1);
    }

    double idm_toward_slot(const Frame& f, const VehicleState& ego, Slot slot) const {
        const VehicleTrack& tr = f.slots[static_cast<int>(slot)];
        if (!tr.present) return std::numeric_limits<double>::infinity();
        const VehicleState sv = state_from_row(tr.history, tr.history.rows() - 1);
        const double gap = sv.s - ego.s - 0.5 * (tr.params.length + f.ego.params.length);
        return idm_accel(ego.v, sv.v, gap, style_.idm);
    }

    LaneContext context_from_slots(const Frame& f, const VehicleState& ego, Slot front, Slot rear,
                                   bool exists) const {
        LaneContext ctx;
        ctx.exists = exists;
        if (!exists) return ctx;
        const VehicleTrack& ft = f.slots[static_cast<int>(front)];
        const VehicleTrack& rt = f.slots[static_cast<int>(rear)];
        double front_s = 0.0;
        if (ft.present) {
            const VehicleState sv = state_from_row(ft.history, ft.history.rows() - 1);
            ctx.has_leader = true;
            ctx.leader_v = sv.v;
            ctx.leader_gap = sv.s - ego.s - 0.5 * (ft.params.length + f.ego.params.length);
            front_s = sv.s;
        }
        if (rt.present) {
            const VehicleState sv = state_from_row(rt.history, rt.history.rows() - 1);
            ctx.has_follower = true;
            ctx.follower_v = sv.v;
            ctx.follower_gap = ego.s - sv.s - 0.5 * (rt.params.length + f.ego.params.length);
            if (ctx.has_leader)
                ctx.follower_to_leader_gap =
                    front_s - sv.s - 0.5 * (ft.params.length + rt.params.length);
        }
        return ctx;
    }

    void decide_change(const Frame& f, const VehicleState& ego, int lane, const EgoObservation& obs) {
        LaneContext cur = context_from_slots(f, ego, Slot::FV, Slot::RV, true);
        LaneContext left = context_from_slots(f, ego, Slot::LFV, Slot::LRV, lane + 1 < scn_.lanes);
        LaneContext right = context_from_slots(f, ego, Slot::RFV, Slot::RRV, lane - 1 >= 0);

        // route incentive toward the off-ramp lane, growing with urgency
        const int target = scn_.target_lane;
        const double dist_left = std::max(obs.ramp_end - ego.s, 1.0);
        const double lanes_to_go = std::abs(lane - target);
        const double urgency = std::clamp(lanes_to_go * 140.0 / dist_left, 0.0, 2.5);
        const double toward = 0.25 + urgency;
        if (target < lane) {
            right.bias += toward;
            left.bias -= toward;
        } else if (target > lane) {
            left.bias += toward;
            right.bias -= toward;
        }

        const LaneChange d = mobil_decide(ego.v, cur, left, right, style_.idm, style_.mobil);
        if (d != LaneChange::stay) {
            changing_ = true;
            lane_at_start_ = lane;
            change_target_ = lane + (d == LaneChange::left ? 1 : -1);
            change_y0_ = ego.y;
            change_t_ = 0.0;
        }
    }

    Scenario scn_;
    Config cfg_;
    DriverStyle style_;
    bool changing_ = false;
    int change_target_ = 0;
    int lane_at_start_ = 0;
    double change_y0_ = 0.0;
    double change_t_ = 0.0;
    double change_dur_ = 3.0;
    double next_decision_t_ = 0.0;
};

// ---------------------------------------------------------------------------
// episode driver
// ---------------------------------------------------------------------------

/// Post-hoc ego lane-change events from the logged lateral trajectory:
/// a change runs from leaving the 0.2 m corridor of the old center to
/// entering the 0.2 m corridor of the new one.
inline void finalize_lane_changes(EpisodeLog& log, const Scenario& scn) {
    auto lane_of = [&](double y) {
        return std::clamp(static_cast<int>(std::lround(y / scn.lane_width)), 0, scn.lanes - 1);
    };
    int prev_lane = -1;
    for (size_t k = 0; k < log.steps.size(); ++k) {
        const auto* ego = &log.steps[k].vehicles.front();
        const int lane = lane_of(ego->y);
        if (prev_lane >= 0 && lane != prev_lane) {
            LaneChangeEvent ev;
            ev.from_lane = prev_lane;
            ev.to_lane = lane;
            size_t a = k;
            while (a > 0 &&
                   std::abs(log.steps[a - 1].vehicles.front().y - scn.lane_center(prev_lane)) > 0.2)
                --a;
            size_t b = k;
            while (b + 1 < log.steps.size() &&
                   std::abs(log.steps[b].vehicles.front().y - scn.lane_center(lane)) > 0.2)
                ++b;
            ev.t_start = log.steps[a].t;
            ev.t_end = log.steps[b].t;
            ev.s_start = log.steps[a].vehicles.front().s;
            ev.s_end = log.steps[b].vehicles.front().s;
            log.ego_lane_changes.push_back(ev);
            k = b;
        }
        prev_lane = lane_of(log.steps[k].vehicles.front().y);
    }
}

/// Runs one closed-loop episode. Deterministic for a fixed scenario seed,
/// planner and model. Ends early on collision or ramp exit.
inline EpisodeLog run_episode(const Scenario& scn, EgoPlanner& planner, const Config& cfg) {
    TrafficWorld world(scn, /*with_ego=*/true, cfg.T_h, cfg.dt);
    EpisodeLog log;
    log.planner = planner.name();
    log.seed = scn.seed;
    log.dt = cfg.dt;
    log.outcome = "failure";

    const int max_steps = static_cast<int>(std::lround(scn.horizon_s / cfg.dt));
    for (int k = 0; k < max_steps; ++k) {
        EgoObservation obs = world.observe();
        ControlInput u = planner.act(obs);
        u.a = std::clamp(u.a, cfg.a_min, cfg.a_max);
        u.delta_f = std::clamp(u.delta_f, -cfg.delta_max, cfg.delta_max);

        const bool ok = world.step(u);

        EpisodeStep st;
        st.t = world.time();
        st.ego_u = u;
        st.headway = world.ego_headway();
        for (const auto& v : world.vehicles()) st.vehicles.push_back(world.snapshot_of(v));
        log.steps.push_back(std::move(st));

        const auto& ego = world.vehicles().front();
        if (!ok) {
            log.outcome = "collision";
            break;
        }
        const bool on_target_lane = world.nearest_lane(ego.st.y) == scn.target_lane &&
                                    std::abs(ego.st.y - scn.lane_center(scn.target_lane)) <
                                        0.3 * scn.lane_width;
        if (ego.st.s >= scn.ramp_start && ego.st.s < scn.ramp_end && on_target_lane) {
            log.outcome = "success";
            log.offramp_time = world.time();
            break;
        }
        if (ego.st.s >= scn.ramp_end) break;  // missed the ramp
    }
    log.end_time = world.time();
    finalize_lane_changes(log, scn);
    return log;
}

// ---------------------------------------------------------------------------
// synthetic dataset generation
// ---------------------------------------------------------------------------

/// Runs ego-less IDM/MOBIL traffic and slices sliding 9 s windows into
/// frames (T_h history + N future at dt), one randomly designated "ego"
/// per window. Stops after max_frames when positive.
inline std::vector<Frame> generate_dataset(const Scenario& base, int episodes, const Config& cfg,
                                           int max_frames = 0) {
    std::vector<Frame> frames;
    const int window = cfg.T_h + cfg.N;
    const int stride = static_cast<int>(std::lround(1.0 / cfg.dt));
    auto pick_rng = make_rng(base.seed, "ego-pick");

    for (int e = 0; e < episodes; ++e) {
        Scenario scn = base;
        scn.seed = derive_seed(base.seed, "episode", static_cast<uint64_t>(e));
        TrafficWorld world(scn, /*with_ego=*/false, cfg.T_h, cfg.dt);
        const int steps = static_cast<int>(std::lround(scn.horizon_s / cfg.dt));
        for (int k = 0; k < steps; ++k) world.step({0.0, 0.0});

        // all vehicles ever alive, with their spawn offsets
        std::vector<const detail::TrackedVehicle*> all;
        for (const auto& v : world.vehicles()) all.push_back(&v);
        for (const auto& v : world.archive()) all.push_back(&v);

        for (int w0 = 0; w0 + window <= steps; w0 += stride) {
            std::vector<const detail::TrackedVehicle*> eligible;
            for (const auto* v : all) {
                const int first = v->spawn_step;
                const int last = v->spawn_step + static_cast<int>(v->hist.size()) - 1;
                if (first <= w0 && last >= w0 + window - 1) eligible.push_back(v);
            }
            if (eligible.empty()) continue;
            const auto* ego = eligible[pick_rng() % eligible.size()];
            const int cur = w0 + cfg.T_h - 1;  // current-instant step index

            auto row_at = [&](const detail::TrackedVehicle* v, int step) {
                return v->hist[static_cast<size_t>(step - v->spawn_step)];
            };
            auto track_of = [&](const detail::TrackedVehicle* v, int from, int count) {
                Eigen::MatrixXd m(count, kVehFeatures);
                for (int r = 0; r < count; ++r) {
                    const auto& row = row_at(v, from + r);
                    for (int c = 0; c < kVehFeatures; ++c) m(r, c) = row[c];
                }
                return m;
            };

            const auto ego_row = row_at(ego, cur);
            std::vector<SlotCandidate> cands;
            for (size_t i = 0; i < eligible.size(); ++i) {
                if (eligible[i] == ego) continue;
                const auto& r = row_at(eligible[i], cur);
                cands.push_back({static_cast<int>(i), r[kFs], r[kFy],
                                 std::clamp(static_cast<int>(std::lround(r[kFy] / scn.lane_width)), 0,
                                            scn.lanes - 1)});
            }
            const int ego_lane = std::clamp(static_cast<int>(std::lround(ego_row[kFy] / scn.lane_width)),
                                            0, scn.lanes - 1);
            const auto slots = assign_slots(ego_row[kFs], ego_row[kFy], ego_lane, cands);

            Frame f;
            f.frame_id = "ep" + std::to_string(e) + "_w" + std::to_string(w0) + "_veh" +
                         std::to_string(ego->id);
            f.dt = cfg.dt;
            f.ego.present = true;
            f.ego.params = ego->params;
            f.ego.history = track_of(ego, w0, cfg.T_h);
            f.ego.future = track_of(ego, w0 + cfg.T_h, cfg.N);
            f.ego.map = local_lane_map(ego_row[kFy], ego_lane, scn);
            for (int s = 0; s < kNumSlots; ++s) {
                if (slots[s] < 0) {
                    f.slots[s].present = false;
                    f.slots[s].history.resize(0, kVehFeatures);
                    f.slots[s].future.resize(0, kVehFeatures);
                    continue;
                }
                const auto* sv = eligible[slots[s]];
                const auto r = row_at(sv, cur);
                f.slots[s].present = true;
                f.slots[s].params = sv->params;
                f.slots[s].history = track_of(sv, w0, cfg.T_h);
                f.slots[s].future = track_of(sv, w0 + cfg.T_h, cfg.N);
                f.slots[s].map = local_lane_map(
                    r[kFy],
                    std::clamp(static_cast<int>(std::lround(r[kFy] / scn.lane_width)), 0, scn.lanes - 1),
                    scn);
            }
            frames.push_back(std::move(f));
            if (max_frames > 0 && static_cast<int>(frames.size()) >= max_frames) return frames;
        }
    }
    return frames;
}

}  // namespace socmpc::sim
