#pragma once

#include "socmpc/train/losses.hpp"
#include "socmpc/train/predictor.hpp"
#include "socmpc/train/rollout.hpp"

#include <chrono>
#include <filesystem>
#include <iomanip>

namespace socmpc::train {

struct TrainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Adaptive-moment optimizer over the model's named parameters. Updates run
/// in name order, so training is deterministic.
class Adam {
public:
    Adam(std::map<std::string, Tensor>& params, double lr, double beta1 = 0.9, double beta2 = 0.999,
         double eps = 1e-8)
        : params_(params), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (auto& [name, t] : params_) {
            m_[name].assign(t.values().size(), 0.0);
            v_[name].assign(t.values().size(), 0.0);
        }
    }

    void zero_grad() {
        for (auto& [name, t] : params_) t.zero_grad();
    }

    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, t_);
        const double bc2 = 1.0 - std::pow(beta2_, t_);
        for (auto& [name, t] : params_) {
            auto& vals = t.values_mut();
            const auto& g = t.grad();
            auto& m = m_[name];
            auto& v = v_[name];
            for (size_t i = 0; i < vals.size(); ++i) {
                m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
                v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
                vals[i] -= lr_ * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
            }
        }
    }

    double lr() const { return lr_; }

    /// Moment buffers and step counter as a checkpoint, for exact resumes.
    void save(const std::string& path) const {
        std::map<std::string, Tensor> state;
        for (const auto& [name, m] : m_) {
            state.emplace("m/" + name, Tensor::param({static_cast<int>(m.size())}, m));
            state.emplace("v/" + name, Tensor::param({static_cast<int>(v_.at(name).size())}, v_.at(name)));
        }
        state.emplace("t", Tensor::param({1}, {static_cast<double>(t_)}));
        ad::save_checkpoint(state, path);
    }

    void load(const std::string& path) {
        const auto state = ad::load_checkpoint(path);
        for (auto& [name, m] : m_) {
            m = state.at("m/" + name).values();
            v_[name] = state.at("v/" + name).values();
        }
        t_ = static_cast<int>(state.at("t").values()[0]);
    }

private:
    std::map<std::string, Tensor>& params_;
    double lr_, beta1_, beta2_, eps_;
    int t_ = 0;
    std::map<std::string, std::vector<double>> m_;
    std::map<std::string, std::vector<double>> v_;
};

struct TrainStepRecord {
    int step = 0;
    double loss_total = 0, loss_vehicle = 0, loss_gmm = 0;
};

struct EpochValidation {
    int epoch = 0;
    double ade = std::numeric_limits<double>::quiet_NaN();
    double fde = std::numeric_limits<double>::quiet_NaN();
};

struct TrainReport {
    std::vector<TrainStepRecord> steps;
    std::vector<EpochValidation> validations;
    uint64_t seed = 0;
    double wall_seconds = 0.0;  ///< excluded from primary outputs; see write_meta

    void write_csv(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw TrainError("cannot write " + path);
        out << "step,loss_total,loss_vehicle,loss_gmm\n";
        out << std::setprecision(17);
        for (const auto& r : steps)
            out << r.step << "," << r.loss_total << "," << r.loss_vehicle << "," << r.loss_gmm << "\n";
    }

    nlohmann::json summary_json() const {
        nlohmann::json j;
        j["seed"] = seed;
        j["steps"] = static_cast<int>(steps.size());
        j["loss_initial"] = steps.empty() ? 0.0 : steps.front().loss_total;
        j["loss_final"] = steps.empty() ? 0.0 : steps.back().loss_total;
        nlohmann::json vals = nlohmann::json::array();
        for (const auto& v : validations)
            vals.push_back({{"epoch", v.epoch}, {"ade", v.ade}, {"fde", v.fde}});
        j["validation"] = vals;
        return j;
    }

    void write_meta(const std::string& path) const {
        std::ofstream out(path);
        out << nlohmann::json{{"wall_seconds", wall_seconds}}.dump(2) << "\n";
    }
};

struct DatasetSplit {
    std::vector<int> train, val, test;
};

/// Deterministic 70/20/10 split.
inline DatasetSplit split_dataset(int count, uint64_t seed) {
    std::vector<int> idx(count);
    std::iota(idx.begin(), idx.end(), 0);
    auto rng = make_rng(seed, "split");
    std::shuffle(idx.begin(), idx.end(), rng);
    DatasetSplit s;
    const int n_train = static_cast<int>(count * 0.7);
    const int n_val = static_cast<int>(count * 0.2);
    s.train.assign(idx.begin(), idx.begin() + n_train);
    s.val.assign(idx.begin() + n_train, idx.begin() + n_train + n_val);
    s.test.assign(idx.begin() + n_train + n_val, idx.end());
    return s;
}

struct FrameLoss {
    Tensor total;
    double vehicle = 0, gmm = 0;
};

/// Forward pass + losses for one frame (Algorithm steps: plan ego controls
/// to follow the ground truth, predict blocks and reactions, roll the
/// coupled dynamics, score against the ground truth).
inline FrameLoss frame_loss(const model::EncoderDecoder& m, const Frame& frame, const Config& cfg) {
    const int N = frame.future_steps();
    const Eigen::MatrixXd u_ego = infer_ego_controls(frame, cfg);
    const model::ModelOutput out = m.forward(frame, u_ego);

    std::vector<bool> vehicle_mask(kNumSlots + 1, false);
    vehicle_mask[0] = true;
    std::vector<bool> present_mask(kNumSlots, false);
    for (int i = 0; i < kNumSlots; ++i) {
        present_mask[i] = frame.slots[i].present;
        vehicle_mask[i + 1] = frame.slots[i].present;
    }

    const Eigen::MatrixXd u_gt = infer_surr_controls(frame, cfg);
    const GmmLossParts gmm = gmm_loss(out.gmm, u_gt, present_mask, cfg.gmm_data_term);

    // training-time rollout uses the best-of-K modality so the vehicle loss
    // trains the same branch the mixture loss selected
    const Tensor u_surr_train = out.gmm.means[gmm.selected];
    const auto pred = rollout_tensors(frame, out, u_ego, u_surr_train, N, frame.dt);
    const auto gt = ground_truth_tensors(frame, N);
    const Tensor lv = vehicle_loss(pred, gt, vehicle_mask);

    FrameLoss fl;
    fl.vehicle = lv.item();
    fl.gmm = gmm.loss.item();
    fl.total = total_loss(lv, gmm.loss, cfg.lambda_1, cfg.lambda_2);
    return fl;
}

struct TrainResult {
    model::EncoderDecoder model;
    TrainReport report;
    DatasetSplit split;
};

/// Algorithm's learning stage: sample a batch, recover ego controls, forward,
/// roll the explicit interaction dynamics, evaluate the combined loss,
/// back-propagate and update. Checkpoints per epoch when out_dir is given.
/// A non-empty resume_dir continues a previous run exactly: model weights,
/// optimizer moments and the batch-shuffle stream are all restored.
inline TrainResult train(const std::vector<Frame>& dataset, const Config& cfg,
                         const std::string& out_dir = "", bool verbose = false,
                         const std::string& resume_dir = "") {
    if (dataset.empty()) throw TrainError("train: empty dataset");
    const auto t0 = std::chrono::steady_clock::now();

    int steps_done = 0;
    model::EncoderDecoder m =
        resume_dir.empty()
            ? model::EncoderDecoder(model::ModelHyper::from_config(cfg), derive_seed(cfg.seed, "model-init"))
            : model::EncoderDecoder::load(resume_dir + "/model.bin");
    Adam opt(m.params(), cfg.lr);
    if (!resume_dir.empty()) {
        opt.load(resume_dir + "/opt.bin");
        std::ifstream st(resume_dir + "/train_state.json");
        if (!st) throw TrainError("resume: missing train_state.json in " + resume_dir);
        steps_done = nlohmann::json::parse(st).at("steps_done").get<int>();
    }
    DatasetSplit split = split_dataset(static_cast<int>(dataset.size()), cfg.seed);
    if (split.train.empty()) split.train = {0};

    const int batches_per_epoch =
        std::max(1, static_cast<int>(split.train.size()) / std::max(1, cfg.batch_size));
    const int total_steps = cfg.max_steps > 0 ? cfg.max_steps : cfg.epochs * batches_per_epoch;

    TrainReport report;
    report.seed = cfg.seed;
    auto batch_rng = make_rng(cfg.seed, "batch-shuffle");
    std::vector<int> order = split.train;

    int step = 0;
    int epoch = 0;
    while (step < total_steps) {
        std::shuffle(order.begin(), order.end(), batch_rng);
        for (int b = 0; b < batches_per_epoch && step < total_steps; ++b) {
            if (step < steps_done) {  // fast-forward a resumed run
                ++step;
                continue;
            }
            opt.zero_grad();
            double sum_total = 0, sum_veh = 0, sum_gmm = 0;
            const int bs = std::min<int>(cfg.batch_size, static_cast<int>(order.size()));
            std::vector<std::string> batch_ids;
            for (int i = 0; i < bs; ++i) {
                const Frame& frame = dataset[order[(b * cfg.batch_size + i) % order.size()]];
                batch_ids.push_back(frame.frame_id);
                FrameLoss fl = frame_loss(m, frame, cfg);
                sum_total += fl.total.item();
                sum_veh += fl.vehicle;
                sum_gmm += fl.gmm;
                ad::scale(fl.total, 1.0 / bs).backward();
            }
            if (!std::isfinite(sum_total)) {
                std::string ids;
                for (const auto& id : batch_ids) ids += id + " ";
                throw TrainError("non-finite loss at step " + std::to_string(step) + "; batch: " + ids);
            }
            opt.step();
            ++step;
            report.steps.push_back({step, sum_total / bs, sum_veh / bs, sum_gmm / bs});
            if (verbose && step % 10 == 0)
                std::cerr << "step " << step << "/" << total_steps << " loss "
                          << report.steps.back().loss_total << "\n";
        }
        ++epoch;
        if (step <= steps_done) continue;  // still fast-forwarding
        if (!split.val.empty()) {
            std::vector<Frame> val_frames;
            for (int i : split.val) val_frames.push_back(dataset[i]);
            const AdeFdeTable t = ade_fde_over_frames(val_frames, cfg.dt, [&](const Frame& f) {
                return predict_frame(&m, f, cfg);
            });
            EpochValidation ev;
            ev.epoch = epoch;
            if (!t.ade_at_seconds.empty()) {
                ev.ade = t.ade_at_seconds.back();
                ev.fde = t.fde;
            }
            report.validations.push_back(ev);
        }
        if (!out_dir.empty()) {
            std::filesystem::create_directories(out_dir);
            m.save(out_dir + "/ckpt_epoch" + std::to_string(epoch) + ".bin");
        }
    }
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        m.save(out_dir + "/model.bin");
        opt.save(out_dir + "/opt.bin");
        std::ofstream st(out_dir + "/train_state.json");
        st << nlohmann::json{{"steps_done", step}}.dump() << "\n";
    }
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return TrainResult{std::move(m), std::move(report), std::move(split)};
}

}  // namespace socmpc::train
