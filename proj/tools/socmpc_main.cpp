// socmpc command-line front end: dataset generation, training, open-loop
// prediction, single-shot planning, closed-loop simulation and evaluation.

#include "socmpc/metrics/moes.hpp"
#include "socmpc/planner/mpc_planner.hpp"
#include "socmpc/sim/simulator.hpp"
#include "socmpc/train/trainer.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iomanip>
#include <iostream>

namespace {

using namespace socmpc;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct CommonOpts {
    std::string config_path;
    uint64_t seed = 0;
    bool seed_set = false;
    int verbosity = 0;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config_path, "config file (key = value)");
    cmd->add_option("--seed", o.seed, "root seed override")->each([&](const std::string&) {
        o.seed_set = true;
    });
    cmd->add_flag("-v,--verbose", o.verbosity, "verbose progress");
}

Config resolve_config(const CommonOpts& o) {
    Config cfg = o.config_path.empty() ? validate_config(Config{}) : load_config(o.config_path);
    if (o.seed_set) cfg.seed = o.seed;
    std::cout << "# resolved config\n" << dump_config(cfg) << "# seed = " << cfg.seed << "\n";
    return cfg;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
}

// ---------------------------------------------------------------------------

int run_gen_data(const CommonOpts& common, const std::string& scenario_path, int episodes,
                 const std::string& out_path, int max_frames) {
    Config cfg = resolve_config(common);
    sim::Scenario scn = sim::load_scenario(scenario_path);
    if (common.seed_set) scn.seed = common.seed;
    const auto frames = sim::generate_dataset(scn, episodes, cfg, max_frames);
    save_frames(frames, out_path);
    std::cout << "wrote " << frames.size() << " frames to " << out_path << "\n";
    return kExitOk;
}

int run_train(const CommonOpts& common, const std::string& data_path, const std::string& out_dir,
              int steps, double lr, const std::string& resume_dir) {
    Config cfg = resolve_config(common);
    if (steps > 0) cfg.max_steps = steps;
    if (lr >= 0.0) cfg.lr = lr;
    const auto frames = load_frames(data_path);
    if (frames.empty()) throw ConfigError("training data is empty: " + data_path);
    cfg.T_h = frames.front().history_steps();
    cfg.N = frames.front().future_steps();
    cfg.dt = frames.front().dt;
    cfg = validate_config(cfg);

    auto result = train::train(frames, cfg, out_dir, common.verbosity > 0, resume_dir);
    fs::create_directories(out_dir);
    result.report.write_csv(out_dir + "/train_report.csv");
    write_text(out_dir + "/train_summary.json", result.report.summary_json().dump(2) + "\n");
    result.report.write_meta(out_dir + "/run_meta.json");
    std::cout << "trained " << result.report.steps.size() << " steps; final loss "
              << (result.report.steps.empty() ? 0.0 : result.report.steps.back().loss_total) << "\n";
    return kExitOk;
}

std::string csv_ade_row(const std::string& name, const train::AdeFdeTable& t) {
    std::ostringstream os;
    os << std::setprecision(17) << name;
    for (double a : t.ade_at_seconds) os << "," << a;
    os << "," << t.fde << "\n";
    return os.str();
}

int run_predict(const CommonOpts& common, const std::string& data_path, const std::string& ckpt,
                const std::string& out_dir, bool want_json, bool want_csv) {
    Config cfg = resolve_config(common);
    const auto frames = load_frames(data_path);
    if (frames.empty()) throw ConfigError("no frames in " + data_path);
    cfg.T_h = frames.front().history_steps();
    cfg.N = frames.front().future_steps();
    cfg.dt = frames.front().dt;

    std::optional<model::EncoderDecoder> m;
    if (!ckpt.empty()) m = model::EncoderDecoder::load(ckpt);
    const model::EncoderDecoder* mp = m ? &*m : nullptr;
    if (!mp) std::cout << "no checkpoint given: physics-only (zero-interaction) prediction\n";

    const auto table = train::ade_fde_over_frames(
        frames, cfg.dt, [&](const Frame& f) { return train::predict_frame(mp, f, cfg); });
    const auto cv_table = train::ade_fde_over_frames(
        frames, cfg.dt, [&](const Frame& f) { return train::predict_frame_constant_velocity(f); });

    fs::create_directories(out_dir);
    if (want_csv) {
        std::ostringstream os;
        os << "approach";
        for (size_t h = 1; h <= table.ade_at_seconds.size(); ++h) os << ",ADE@" << h << "s";
        os << ",FDE\n";
        os << csv_ade_row(mp ? "model" : "physics-only", table);
        os << csv_ade_row("const-velocity", cv_table);
        write_text(out_dir + "/ade_fde.csv", os.str());
    }
    if (want_json) {
        nlohmann::json j;
        j["model"] = {{"ade_at_seconds", table.ade_at_seconds}, {"fde", table.fde},
                      {"frames", table.frames}, {"tracks", table.tracks}};
        j["const_velocity"] = {{"ade_at_seconds", cv_table.ade_at_seconds}, {"fde", cv_table.fde}};
        write_text(out_dir + "/ade_fde.json", j.dump(2) + "\n");
    }
    // per-frame predicted trajectories
    {
        std::ofstream out(out_dir + "/predictions.jsonl");
        for (const Frame& f : frames) {
            const auto fp = train::predict_frame(mp, f, cfg);
            nlohmann::json j;
            j["frame_id"] = f.frame_id;
            nlohmann::json tracks = nlohmann::json::array();
            for (size_t v = 0; v < fp.predicted.size(); ++v) {
                nlohmann::json pj = nlohmann::json::array();
                for (const auto& pt : fp.predicted[v]) pj.push_back({pt.x(), pt.y()});
                tracks.push_back({{"slot", slot_name(fp.slot_indices[v])}, {"pred", pj}});
            }
            j["tracks"] = tracks;
            out << j.dump() << "\n";
        }
    }
    std::cout << "ADE table over " << table.frames << " frames written to " << out_dir << "\n";
    if (!table.ade_at_seconds.empty())
        std::cout << "model ADE@" << table.ade_at_seconds.size() << "s = " << table.ade_at_seconds.back()
                  << " vs const-velocity " << cv_table.ade_at_seconds.back() << "\n";
    return kExitOk;
}

int run_plan(const CommonOpts& common, const std::string& data_path, const std::string& ckpt,
             const std::string& out_path, double v_des, double y_des) {
    Config cfg = resolve_config(common);
    const auto frames = load_frames(data_path);
    if (frames.empty()) throw ConfigError("no frames in " + data_path);
    cfg.T_h = frames.front().history_steps();
    cfg.N = frames.front().future_steps();
    cfg.dt = frames.front().dt;

    std::optional<model::EncoderDecoder> m;
    if (!ckpt.empty()) m = model::EncoderDecoder::load(ckpt);
    plan::MpcPlanner planner(m ? &*m : nullptr, cfg);
    if (!out_path.empty()) planner.enable_dump(out_path);

    int solved = 0;
    for (const Frame& f : frames) {
        sim::EgoObservation obs;
        obs.frame = f;
        obs.dt = f.dt;
        const VehicleState st = state_from_row(f.ego.history, f.history_steps() - 1);
        obs.desired_speed = v_des > 0 ? v_des : st.v;
        obs.target_y = y_des < 1e29 ? y_des : st.y;
        const plan::PlanResult res = planner.plan(obs);
        if (res.status == qp::QpStatus::optimal) ++solved;
    }
    std::cout << "planned " << frames.size() << " frames, " << solved << " optimal\n";
    return kExitOk;
}

int run_simulate(const CommonOpts& common, const std::string& scenario_path, const std::string& planner_name,
                 const std::string& ckpt, int episodes, const std::string& out_dir,
                 const std::string& plan_dump) {
    Config cfg = resolve_config(common);
    sim::Scenario base = sim::load_scenario(scenario_path);
    if (common.seed_set) base.seed = common.seed;

    std::optional<model::EncoderDecoder> m;
    if (!ckpt.empty()) {
        m = model::EncoderDecoder::load(ckpt);
        cfg.T_h = m->hyper().T_h;
    }
    fs::create_directories(out_dir);

    int success = 0, collision = 0;
    for (int e = 0; e < episodes; ++e) {
        sim::Scenario scn = base;
        scn.seed = derive_seed(base.seed, "scenario", static_cast<uint64_t>(e));
        std::unique_ptr<sim::EgoPlanner> planner;
        if (planner_name == "pas") {
            planner = std::make_unique<sim::PasPlanner>(scn, cfg);
        } else if (planner_name == "mpcformer") {
            auto mpc = std::make_unique<plan::MpcPlanner>(m ? &*m : nullptr, cfg);
            if (!plan_dump.empty())
                mpc->enable_dump(out_dir + "/" + plan_dump + "_ep" + std::to_string(e) + ".jsonl");
            planner = std::move(mpc);
        } else {
            throw ConfigError("unknown planner '" + planner_name + "' (expected mpcformer or pas)");
        }
        const sim::EpisodeLog log = sim::run_episode(scn, *planner, cfg);
        sim::write_episode_log(log, out_dir + "/ep_" + std::to_string(e));
        if (log.outcome == "success") ++success;
        if (log.outcome == "collision") ++collision;
        if (common.verbosity > 0)
            std::cerr << "episode " << e << ": " << log.outcome << " at t=" << log.end_time << "\n";
    }
    std::cout << planner_name << ": " << success << "/" << episodes << " success, " << collision
              << " collisions; logs in " << out_dir << "\n";
    return kExitOk;
}

std::vector<sim::EpisodeLog> load_logs_from(const std::string& dir) {
    std::vector<std::string> prefixes;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        const auto pos = name.find(".summary.json");
        if (pos != std::string::npos) prefixes.push_back((entry.path().parent_path() / name.substr(0, pos)).string());
    }
    std::sort(prefixes.begin(), prefixes.end());
    std::vector<sim::EpisodeLog> logs;
    for (const auto& p : prefixes) logs.push_back(sim::read_episode_log(p));
    return logs;
}

int run_evaluate(const CommonOpts& common, const std::vector<std::string>& log_dirs,
                 const std::string& out_dir, bool want_json, bool want_csv) {
    resolve_config(common);
    std::map<std::string, std::vector<sim::EpisodeLog>> by_planner;
    for (const auto& dir : log_dirs)
        for (auto& log : load_logs_from(dir)) by_planner[log.planner].push_back(std::move(log));
    if (by_planner.empty()) throw ConfigError("no episode logs found");

    fs::create_directories(out_dir);
    nlohmann::json all;
    std::ostringstream outcomes, speeds, spectrum, lanes;
    outcomes << "planner,episodes,success_pct,failure_pct,collision_pct,avg_speed,"
                "mean_subthreshold_headway,offramp_duration_mean\n";
    speeds << "planner,bin_low,count\n";
    spectrum << "planner,freq_hz,power\n";
    lanes << "planner,distance_m\n";
    outcomes << std::setprecision(17);
    speeds << std::setprecision(17);
    spectrum << std::setprecision(17);
    lanes << std::setprecision(17);

    for (const auto& [planner, logs] : by_planner) {
        const metrics::EvalReport r = metrics::episode_moes(logs);
        all[planner] = metrics::report_to_json(r);
        outcomes << planner << "," << r.episodes << "," << r.success_pct << "," << r.failure_pct << ","
                 << r.collision_pct << "," << r.average_speed << "," << r.mean_subthreshold_headway << ","
                 << r.offramp_duration_mean << "\n";
        for (size_t b = 0; b < r.speed_histogram.size(); ++b)
            speeds << planner << "," << b * r.speed_bin_width << "," << r.speed_histogram[b] << "\n";
        for (size_t k = 0; k < r.spectrum_power.size(); ++k)
            spectrum << planner << "," << r.spectrum_freq_hz[k] << "," << r.spectrum_power[k] << "\n";
        for (double d : r.lane_change_distances) lanes << planner << "," << d << "\n";
        std::cout << planner << ": success " << r.success_pct << "%, failure " << r.failure_pct
                  << "%, collision " << r.collision_pct << "%\n";
    }
    if (want_json) write_text(out_dir + "/eval.json", all.dump(2) + "\n");
    if (want_csv) {
        write_text(out_dir + "/outcomes.csv", outcomes.str());
        write_text(out_dir + "/speed_histogram.csv", speeds.str());
        write_text(out_dir + "/headway_spectrum.csv", spectrum.str());
        write_text(out_dir + "/lane_changes.csv", lanes.str());
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"socially-aware motion planning toolkit"};
    app.require_subcommand(1);

    CommonOpts common;

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic frame dataset from traffic");
    std::string gen_scenario, gen_out = "frames.jsonl";
    int gen_episodes = 5, gen_max_frames = 0;
    gen->add_option("--scenario", gen_scenario, "scenario file")->required();
    gen->add_option("--episodes", gen_episodes, "episodes to simulate");
    gen->add_option("--out", gen_out, "output frame file");
    gen->add_option("--frames", gen_max_frames, "stop after this many frames (0 = all)");
    add_common(gen, common);

    // train
    auto* tr = app.add_subcommand("train", "train the encoder-decoder on a frame dataset");
    std::string tr_data, tr_out = "train_out", tr_resume;
    int tr_steps = 0;
    double tr_lr = -1.0;
    tr->add_option("--data", tr_data, "frame dataset")->required();
    tr->add_option("--out", tr_out, "output directory");
    tr->add_option("--steps", tr_steps, "optimizer steps (0 = by epochs)");
    tr->add_option("--lr", tr_lr, "learning rate override");
    tr->add_option("--resume", tr_resume, "resume from a training output directory");
    add_common(tr, common);

    // predict
    auto* pr = app.add_subcommand("predict", "open-loop SV trajectory prediction + ADE/FDE table");
    std::string pr_data, pr_ckpt, pr_out = "predict_out";
    bool pr_json = false, pr_csv = false;
    pr->add_option("--data", pr_data, "frame dataset")->required();
    pr->add_option("--checkpoint", pr_ckpt, "model checkpoint (omit for zero-interaction physics)");
    pr->add_option("--out", pr_out, "output directory");
    pr->add_flag("--json", pr_json, "emit JSON");
    pr->add_flag("--csv", pr_csv, "emit CSV");
    add_common(pr, common);

    // plan
    auto* pl = app.add_subcommand("plan", "single-shot planning on stored frames, with dumps");
    std::string pl_data, pl_ckpt, pl_out = "plans.jsonl";
    double pl_vdes = -1.0, pl_ydes = 1e30;
    pl->add_option("--data", pl_data, "frame dataset")->required();
    pl->add_option("--checkpoint", pl_ckpt, "model checkpoint");
    pl->add_option("--out", pl_out, "plan dump file (JSON lines)");
    pl->add_option("--v-des", pl_vdes, "desired speed (default: current)");
    pl->add_option("--y-des", pl_ydes, "desired lateral position (default: current)");
    add_common(pl, common);

    // simulate
    auto* si = app.add_subcommand("simulate", "closed-loop episodes with a selected ego planner");
    std::string si_scenario, si_planner = "pas", si_ckpt, si_out = "sim_out", si_dump;
    int si_episodes = 1;
    si->add_option("--scenario", si_scenario, "scenario file")->required();
    si->add_option("--planner", si_planner, "ego planner: mpcformer | pas");
    si->add_option("--checkpoint", si_ckpt, "model checkpoint for mpcformer");
    si->add_option("--episodes", si_episodes, "episode count");
    si->add_option("--out", si_out, "output directory");
    si->add_option("--plan-dump", si_dump, "per-cycle plan dump prefix (mpcformer only)");
    add_common(si, common);

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "aggregate MOEs over episode logs");
    std::vector<std::string> ev_dirs;
    std::string ev_out = "eval_out";
    bool ev_json = false, ev_csv = false;
    ev->add_option("--logs", ev_dirs, "episode log directories")->required()->expected(-1);
    ev->add_option("--out", ev_out, "output directory");
    ev->add_flag("--json", ev_json, "emit JSON");
    ev->add_flag("--csv", ev_csv, "emit CSV");
    add_common(ev, common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (gen->parsed()) return run_gen_data(common, gen_scenario, gen_episodes, gen_out, gen_max_frames);
        if (tr->parsed()) return run_train(common, tr_data, tr_out, tr_steps, tr_lr, tr_resume);
        if (pr->parsed())
            return run_predict(common, pr_data, pr_ckpt, pr_out, pr_json || !pr_csv, pr_csv || !pr_json);
        if (pl->parsed()) return run_plan(common, pl_data, pl_ckpt, pl_out, pl_vdes, pl_ydes);
        if (si->parsed())
            return run_simulate(common, si_scenario, si_planner, si_ckpt, si_episodes, si_out, si_dump);
        if (ev->parsed())
            return run_evaluate(common, ev_dirs, ev_out, ev_json || !ev_csv, ev_csv || !ev_json);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const FrameError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const sim::ScenarioError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
