#pragma once

#include "socmpc/ad/checkpoint.hpp"
#include "socmpc/ad/ops.hpp"
#include "socmpc/core/config.hpp"
#include "socmpc/core/frame.hpp"
#include "socmpc/core/rng.hpp"
#include "socmpc/social_dynamics.hpp"

#include <map>
#include <string>
#include <vector>

namespace socmpc::model {

using ad::Tensor;

struct ModelHyper {
    int d = 64;
    int heads = 4;
    int enc_layers = 2;
    int dec_layers = 2;
    int K = 6;  ///< reaction modalities
    int T_h = 40;
    int N = 50;
    int n = 6;
    double block_bound = 2.0;

    static ModelHyper from_config(const Config& cfg) {
        ModelHyper h;
        h.d = cfg.embed_dim;
        h.heads = cfg.heads;
        h.enc_layers = cfg.enc_layers;
        h.dec_layers = cfg.dec_layers;
        h.K = cfg.K_modalities;
        h.T_h = cfg.T_h;
        h.N = cfg.N;
        h.n = cfg.n;
        h.block_bound = cfg.block_bound;
        return h;
    }
};

// feature scales used to normalize network inputs
namespace scales {
inline constexpr double kPos = 20.0;
inline constexpr double kLat = 4.0;
inline constexpr double kSpeed = 15.0;
inline constexpr double kAccel = 3.0;
inline constexpr double kHeading = 0.3;
}  // namespace scales

/// K-modality Gaussian mixture over the joint surrounding-vehicle control
/// sequence. Each modality's mean and sigma are [N, 2n] tensors.
struct GmmOutput {
    std::vector<Tensor> means;
    std::vector<Tensor> sigmas;
    Tensor probs;  // [K], sums to one
    int argmax_prob = -1;
};

/// Forward products of one frame: per-pair interaction block sequences, the
/// reaction mixture and the highest-probability reaction sequence.
struct ModelOutput {
    std::vector<std::pair<int, int>> pairs;  ///< ordered (row, col) over present vehicles
    std::vector<Tensor> c_seq;               ///< per pair: [N, 16]
    std::vector<Tensor> b_seq;               ///< per pair: [N, 8]
    GmmOutput gmm;
    Tensor u_surr;  ///< [N, 2n]: selected (argmax probability) modality mean, masked columns zero

    /// Dense per-step block grids for the dynamics assembly.
    std::vector<LearnedBlocks> to_learned_blocks(int n, int N) const {
        std::vector<LearnedBlocks> out(N, LearnedBlocks(n));
        for (size_t p = 0; p < pairs.size(); ++p) {
            const auto [row, col] = pairs[p];
            const auto& cv = c_seq[p].values();
            const auto& bv = b_seq[p].values();
            for (int k = 0; k < N; ++k) {
                auto& cb = out[k].c_block(row, col);
                auto& bb = out[k].b_block(row, col);
                for (int r = 0; r < 4; ++r) {
                    for (int c = 0; c < 4; ++c) cb(r, c) = cv[static_cast<size_t>(k) * 16 + r * 4 + c];
                    for (int c = 0; c < 2; ++c) bb(r, c) = bv[static_cast<size_t>(k) * 8 + r * 2 + c];
                }
            }
        }
        return out;
    }

    Eigen::MatrixXd u_surr_matrix() const { return u_surr.to_eigen(); }
};

namespace detail {

struct Linear {
    Tensor w;
    Tensor b;
    Tensor operator()(const Tensor& x) const { return ad::add_rowwise(ad::matmul(x, w), b); }
};

inline Tensor multihead(const Tensor& q, const Tensor& k, const Tensor& v, int heads) {
    const int d = q.shape()[1];
    const int dh = d / heads;
    if (heads == 1) return ad::attention(q, k, v);
    std::vector<Tensor> outs;
    outs.reserve(heads);
    for (int h = 0; h < heads; ++h)
        outs.push_back(ad::attention(ad::slice(q, 1, h * dh, dh), ad::slice(k, 1, h * dh, dh),
                                     ad::slice(v, 1, h * dh, dh)));
    return ad::concat(outs, 1);
}

}  // namespace detail

/// The socially-aware encoder-decoder. Weights are shared across vehicles
/// and ordered pairs; nothing is slot-indexed, so swapping slot contents
/// together with pair labels permutes outputs correspondingly.
class EncoderDecoder {
public:
    EncoderDecoder(const ModelHyper& h, uint64_t seed) : h_(h) {
        build_params(seed);
    }

    const ModelHyper& hyper() const { return h_; }
    std::map<std::string, Tensor>& params() { return params_; }
    const std::map<std::string, Tensor>& params() const { return params_; }

    void save(const std::string& path) const {
        ad::save_checkpoint(params_, path);
        std::ofstream side(path + ".hyper");
        side << "d = " << h_.d << "\nheads = " << h_.heads << "\nenc_layers = " << h_.enc_layers
             << "\ndec_layers = " << h_.dec_layers << "\nK = " << h_.K << "\nT_h = " << h_.T_h
             << "\nN = " << h_.N << "\nn = " << h_.n << "\nblock_bound = " << h_.block_bound << "\n";
    }

    static EncoderDecoder load(const std::string& path) {
        std::ifstream side(path + ".hyper");
        if (!side) throw ad::TensorError("missing hyperparameter sidecar: " + path + ".hyper");
        ModelHyper h;
        std::string line;
        while (std::getline(side, line)) {
            const auto eq = line.find('=');
            if (eq == std::string::npos) continue;
            const std::string key = socmpc::detail::trim(line.substr(0, eq));
            const std::string value = socmpc::detail::trim(line.substr(eq + 1));
            if (key == "d") h.d = std::stoi(value);
            else if (key == "heads") h.heads = std::stoi(value);
            else if (key == "enc_layers") h.enc_layers = std::stoi(value);
            else if (key == "dec_layers") h.dec_layers = std::stoi(value);
            else if (key == "K") h.K = std::stoi(value);
            else if (key == "T_h") h.T_h = std::stoi(value);
            else if (key == "N") h.N = std::stoi(value);
            else if (key == "n") h.n = std::stoi(value);
            else if (key == "block_bound") h.block_bound = std::stod(value);
        }
        EncoderDecoder m(h, 0);
        const auto loaded = ad::load_checkpoint(path);
        if (loaded.size() != m.params_.size())
            throw ad::TensorError("checkpoint parameter count mismatch");
        for (auto& [name, t] : m.params_) {
            auto it = loaded.find(name);
            if (it == loaded.end()) throw ad::TensorError("checkpoint missing parameter " + name);
            if (it->second.shape() != t.shape())
                throw ad::TensorError("checkpoint shape mismatch for " + name);
            t = it->second;
        }
        return m;
    }

    /// Temporal self-attention encoding of one vehicle's normalized history.
    Tensor trajectory_former(const Tensor& traj_norm) const {
        Tensor x = ad::add(lin("traj_emb.2")(ad::gelu(lin("traj_emb.1")(traj_norm))), p("traj_pos"));
        for (int l = 0; l < h_.enc_layers; ++l) {
            const std::string pre = "traj_sa." + std::to_string(l) + ".";
            Tensor att = detail::multihead(lin(pre + "q")(x), lin(pre + "k")(x), lin(pre + "v")(x), h_.heads);
            x = ad::layer_norm(ad::add(x, lin(pre + "o")(att)));
            x = ad::layer_norm(ad::add(x, lin(pre + "ff2")(ad::gelu(lin(pre + "ff1")(x)))));
        }
        return x;
    }

    /// Cross-attention of veh1's temporal feature (queries) over veh2's
    /// (keys and values): the directed interaction feature veh1 -> veh2.
    Tensor v2v_encode(const Tensor& feat1, const Tensor& feat2) const {
        Tensor x = feat1;
        for (int l = 0; l < h_.enc_layers; ++l) {
            const std::string pre = "v2v." + std::to_string(l) + ".";
            Tensor att =
                detail::multihead(lin(pre + "q")(x), lin(pre + "k")(feat2), lin(pre + "v")(feat2), h_.heads);
            x = ad::layer_norm(ad::add(x, lin(pre + "o")(att)));
            x = ad::layer_norm(ad::add(x, lin(pre + "ff2")(ad::gelu(lin(pre + "ff1")(x)))));
        }
        return x;
    }

    /// Map embedding: lane tokens through an MLP; geometry of non-existing
    /// lanes is masked out by the exists flag before embedding.
    Tensor map_former(const LaneMap& map) const {
        std::vector<double> rows;
        rows.reserve(3 * kMapWaypoints * kMapFeatures);
        for (const auto& lane : map.lanes)
            for (int k = 0; k < kMapWaypoints; ++k) {
                const double exists = lane(k, 3);
                rows.push_back(exists * lane(k, 0) / scales::kPos);
                rows.push_back(exists * lane(k, 1) / scales::kLat);
                rows.push_back(exists * lane(k, 2) / scales::kHeading);
                rows.push_back(exists);
            }
        Tensor tokens = Tensor::from({3 * kMapWaypoints, kMapFeatures}, std::move(rows));
        return ad::add(lin("map_emb.2")(ad::gelu(lin("map_emb.1")(tokens))), p("map_pos"));
    }

    /// Cross-attention of the pair feature over map embeddings: queries from
    /// V2V, keys from veh1's map, values from veh2's map.
    Tensor v2m_encode(const Tensor& v2v, const Tensor& map1_emb, const Tensor& map2_emb) const {
        Tensor x = v2v;
        for (int l = 0; l < h_.enc_layers; ++l) {
            const std::string pre = "v2m." + std::to_string(l) + ".";
            Tensor att = detail::multihead(lin(pre + "q")(x), lin(pre + "k")(map1_emb),
                                           lin(pre + "v")(map2_emb), h_.heads);
            x = ad::layer_norm(ad::add(x, lin(pre + "o")(att)));
            x = ad::layer_norm(ad::add(x, lin(pre + "ff2")(ad::gelu(lin(pre + "ff1")(x)))));
        }
        return x;
    }

    /// One-shot transformer decoding of a pair feature into N steps of C and
    /// B blocks, tanh-saturated to the configured bound. The pre-activation
    /// gain keeps the assembled linear system well conditioned: block noise
    /// compounds over the whole rollout horizon, so raw decoder outputs are
    /// damped before saturation.
    static constexpr double kBlockGain = 0.02;

    std::pair<Tensor, Tensor> decode_interaction_blocks(const Tensor& pair_feature) const {
        Tensor memory = lin("blk_mem")(pair_feature);  // T_h x d
        Tensor x = decoder_stack("blk_dec.", p("blk_query"), memory);
        Tensor c = ad::scale(ad::tanh(ad::scale(lin("c_head")(x), kBlockGain)), h_.block_bound);
        Tensor b = ad::scale(ad::tanh(ad::scale(lin("b_head")(x), kBlockGain)), h_.block_bound);
        return {c, b};
    }

    struct Encoded {
        std::vector<std::pair<int, int>> pairs;
        std::vector<Tensor> pair_features;  // T_h x 2d each
    };

    /// Full encoder: trajectory + V2V + V2M for every ordered present pair.
    Encoded encode(const Frame& frame) const {
        Encoded enc;
        std::vector<int> present{0};
        for (int i = 0; i < h_.n; ++i)
            if (frame.slots[i].present) present.push_back(i + 1);

        const VehicleState ego_now = state_from_row(frame.ego.history, frame.history_steps() - 1);
        std::map<int, Tensor> temporal;
        std::map<int, Tensor> map_emb;
        for (int v : present) {
            const VehicleTrack& tr = frame.vehicle(v);
            temporal.emplace(v, trajectory_former(normalize_track(tr.history, ego_now)));
            map_emb.emplace(v, map_former(tr.map));
        }
        for (int a : present)
            for (int b : present) {
                if (a == b) continue;
                Tensor v2v = v2v_encode(temporal.at(a), temporal.at(b));
                Tensor v2m = v2m_encode(v2v, map_emb.at(a), map_emb.at(b));
                enc.pairs.emplace_back(a, b);
                enc.pair_features.push_back(ad::concat({v2v, v2m}, 1));
            }
        return enc;
    }

    /// Reaction decoding: planned ego motions query the pooled latent, a GMM
    /// head emits K modalities of the joint surrounding-control sequence.
    /// Each pair token is tagged with a learned slot-pair identity so the
    /// head can route a pair's features to the right output columns; the
    /// per-pair block decoders stay identity-free.
    /// Decay rate of the acceleration-persistence prior underneath the
    /// mixture means; the heads learn corrections on top of it.
    static constexpr double kPersistenceDecay = 0.97;

    GmmOutput decode_reactions(const Encoded& enc, const Tensor& planned_ego_norm,
                               const std::vector<bool>& present_mask,
                               const std::vector<double>& current_accel) const {
        Tensor queries =
            ad::add(lin("ego_emb.2")(ad::gelu(lin("ego_emb.1")(planned_ego_norm))), p("ego_pos"));
        Tensor memory;
        if (!enc.pair_features.empty()) {
            std::vector<Tensor> tokens;
            tokens.reserve(enc.pair_features.size());
            Tensor pool = Tensor::full({1, h_.T_h}, 1.0 / h_.T_h);
            for (size_t i = 0; i < enc.pair_features.size(); ++i) {
                const auto [a, b] = enc.pairs[i];
                Tensor tok = lin("rx_mem")(ad::matmul(pool, enc.pair_features[i]));
                tokens.push_back(ad::add(tok, ad::slice(p("rx_slot_emb"), 0, a * (h_.n + 1) + b, 1)));
            }
            memory = ad::concat(tokens, 0);  // P x d
        } else {
            memory = lin("rx_mem")(Tensor::zeros({1, 2 * h_.d}));
        }
        Tensor x = decoder_stack("rx_dec.", queries, memory);

        // per-step mixture parameters + pooled modality probabilities;
        // moderate output gains keep early training near the physics prior
        Tensor mean_all = ad::scale(lin("gmm_mean")(x), 0.5);     // N x (K * 2n)
        Tensor logsig_all = ad::scale(lin("gmm_logsig")(x), 0.1); // N x (K * 2n)
        Tensor pooled = ad::matmul(Tensor::full({1, h_.N}, 1.0 / h_.N), x);
        Tensor probs = ad::softmax(lin("gmm_prob")(pooled), 1);  // 1 x K

        std::vector<double> mask_data;
        std::vector<double> prior_data;
        mask_data.reserve(static_cast<size_t>(h_.N) * 2 * h_.n);
        prior_data.reserve(static_cast<size_t>(h_.N) * 2 * h_.n);
        for (int k = 0; k < h_.N; ++k)
            for (int j = 0; j < h_.n; ++j) {
                const double m = j < static_cast<int>(present_mask.size()) && present_mask[j] ? 1.0 : 0.0;
                mask_data.push_back(m);
                mask_data.push_back(m);
                const double a0 = m > 0.0 && j < static_cast<int>(current_accel.size()) ? current_accel[j] : 0.0;
                prior_data.push_back(a0 * std::pow(kPersistenceDecay, k + 1));
                prior_data.push_back(0.0);
            }
        Tensor mask = Tensor::from({h_.N, 2 * h_.n}, std::move(mask_data));
        Tensor prior = Tensor::from({h_.N, 2 * h_.n}, std::move(prior_data));

        GmmOutput gmm;
        gmm.probs = ad::reshape(probs, {h_.K});
        for (int k = 0; k < h_.K; ++k) {
            Tensor mean_k =
                ad::mul(ad::add(prior, ad::slice(mean_all, 1, k * 2 * h_.n, 2 * h_.n)), mask);
            Tensor sig_k = ad::exp(ad::slice(logsig_all, 1, k * 2 * h_.n, 2 * h_.n));
            gmm.means.push_back(mean_k);
            gmm.sigmas.push_back(sig_k);
        }
        int best = 0;
        for (int k = 1; k < h_.K; ++k)
            if (gmm.probs.value_at(k) > gmm.probs.value_at(best)) best = k;
        gmm.argmax_prob = best;
        return gmm;
    }

    /// Whole pipeline for one frame and a planned ego control sequence (N x 2).
    ModelOutput forward(const Frame& frame, const Eigen::MatrixXd& planned_ego) const {
        if (planned_ego.rows() != h_.N || planned_ego.cols() != 2)
            throw ad::TensorError("forward: planned ego controls must be N x 2");
        if (frame.history_steps() != h_.T_h)
            throw ad::TensorError("forward: frame history length does not match the model");
        Encoded enc = encode(frame);

        ModelOutput out;
        out.pairs = enc.pairs;
        for (const auto& f : enc.pair_features) {
            auto [c, b] = decode_interaction_blocks(f);
            out.c_seq.push_back(c);
            out.b_seq.push_back(b);
        }

        std::vector<double> ego_norm;
        ego_norm.reserve(static_cast<size_t>(h_.N) * 2);
        for (int k = 0; k < h_.N; ++k) {
            ego_norm.push_back(planned_ego(k, 0) / scales::kAccel);
            ego_norm.push_back(planned_ego(k, 1) / scales::kHeading);
        }
        std::vector<bool> present_mask(h_.n, false);
        std::vector<double> current_accel(h_.n, 0.0);
        for (int i = 0; i < h_.n; ++i) {
            present_mask[i] = frame.slots[i].present;
            if (frame.slots[i].present)
                current_accel[i] = frame.slots[i].history(frame.history_steps() - 1, kFa);
        }
        out.gmm = decode_reactions(enc, Tensor::from({h_.N, 2}, std::move(ego_norm)), present_mask,
                                   current_accel);
        out.u_surr = out.gmm.means[out.gmm.argmax_prob];
        return out;
    }

    /// Ego-relative feature normalization of a raw track.
    static Tensor normalize_track(const Eigen::MatrixXd& track, const VehicleState& ego_now) {
        std::vector<double> data;
        data.reserve(static_cast<size_t>(track.rows()) * kVehFeatures);
        for (int r = 0; r < track.rows(); ++r) {
            data.push_back((track(r, kFs) - ego_now.s) / scales::kPos);
            data.push_back((track(r, kFy) - ego_now.y) / scales::kLat);
            data.push_back(track(r, kFv) / scales::kSpeed);
            data.push_back(track(r, kFa) / scales::kAccel);
            data.push_back(track(r, kFpsi) / scales::kHeading);
        }
        return Tensor::from({static_cast<int>(track.rows()), kVehFeatures}, std::move(data));
    }

private:
    Tensor decoder_stack(const std::string& name, const Tensor& queries, const Tensor& memory) const {
        Tensor x = queries;
        for (int l = 0; l < h_.dec_layers; ++l) {
            const std::string pre = name + std::to_string(l) + ".";
            Tensor self =
                detail::multihead(lin(pre + "sq")(x), lin(pre + "sk")(x), lin(pre + "sv")(x), h_.heads);
            x = ad::layer_norm(ad::add(x, lin(pre + "so")(self)));
            Tensor cross = detail::multihead(lin(pre + "cq")(x), lin(pre + "ck")(memory),
                                             lin(pre + "cv")(memory), h_.heads);
            x = ad::layer_norm(ad::add(x, lin(pre + "co")(cross)));
            x = ad::layer_norm(ad::add(x, lin(pre + "ff2")(ad::gelu(lin(pre + "ff1")(x)))));
        }
        return x;
    }

    const Tensor& p(const std::string& name) const {
        auto it = params_.find(name);
        if (it == params_.end()) throw ad::TensorError("unknown parameter " + name);
        return it->second;
    }

    detail::Linear lin(const std::string& name) const {
        return detail::Linear{p(name + ".w"), p(name + ".b")};
    }

    void add_linear(const std::string& name, int in, int out, uint64_t seed, double gain = 1.0) {
        auto rng = make_rng(seed, "model-init/" + name);
        const double limit = gain * std::sqrt(6.0 / (in + out));
        std::uniform_real_distribution<double> u(-limit, limit);
        std::vector<double> w(static_cast<size_t>(in) * out);
        for (double& x : w) x = u(rng);
        params_.emplace(name + ".w", Tensor::param({in, out}, std::move(w)));
        params_.emplace(name + ".b", Tensor::param({out}, std::vector<double>(out, 0.0)));
    }

    void add_table(const std::string& name, int rows, int cols, uint64_t seed, double scale = 0.02) {
        auto rng = make_rng(seed, "model-init/" + name);
        std::uniform_real_distribution<double> u(-scale, scale);
        std::vector<double> w(static_cast<size_t>(rows) * cols);
        for (double& x : w) x = u(rng);
        params_.emplace(name, Tensor::param({rows, cols}, std::move(w)));
    }

    void build_params(uint64_t seed) {
        const int d = h_.d;
        add_linear("traj_emb.1", kVehFeatures, d, seed);
        add_linear("traj_emb.2", d, d, seed);
        add_table("traj_pos", h_.T_h, d, seed);
        add_linear("map_emb.1", kMapFeatures, d, seed);
        add_linear("map_emb.2", d, d, seed);
        add_table("map_pos", 3 * kMapWaypoints, d, seed);
        for (int l = 0; l < h_.enc_layers; ++l)
            for (const char* grp : {"traj_sa.", "v2v.", "v2m."}) {
                const std::string pre = grp + std::to_string(l) + ".";
                add_linear(pre + "q", d, d, seed);
                add_linear(pre + "k", d, d, seed);
                add_linear(pre + "v", d, d, seed);
                add_linear(pre + "o", d, d, seed);
                add_linear(pre + "ff1", d, 2 * d, seed);
                add_linear(pre + "ff2", 2 * d, d, seed);
            }
        add_linear("blk_mem", 2 * d, d, seed);
        add_table("blk_query", h_.N, d, seed);
        add_linear("ego_emb.1", 2, d, seed);
        add_linear("ego_emb.2", d, d, seed);
        add_table("ego_pos", h_.N, d, seed);
        add_linear("rx_mem", 2 * d, d, seed);
        add_table("rx_slot_emb", (h_.n + 1) * (h_.n + 1), d, seed, 0.2);
        for (const char* grp : {"blk_dec.", "rx_dec."})
            for (int l = 0; l < h_.dec_layers; ++l) {
                const std::string pre = grp + std::to_string(l) + ".";
                add_linear(pre + "sq", d, d, seed);
                add_linear(pre + "sk", d, d, seed);
                add_linear(pre + "sv", d, d, seed);
                add_linear(pre + "so", d, d, seed);
                add_linear(pre + "cq", d, d, seed);
                add_linear(pre + "ck", d, d, seed);
                add_linear(pre + "cv", d, d, seed);
                add_linear(pre + "co", d, d, seed);
                add_linear(pre + "ff1", d, 2 * d, seed);
                add_linear(pre + "ff2", 2 * d, d, seed);
            }
        // output heads start near zero so an untrained model reduces to the
        // physics-only rollout; training grows the interaction terms from there
        add_linear("c_head", d, 16, seed, 0.1);
        add_linear("b_head", d, 8, seed, 0.1);
        add_linear("gmm_mean", d, h_.K * 2 * h_.n, seed, 0.1);
        add_linear("gmm_logsig", d, h_.K * 2 * h_.n, seed, 0.01);
        add_linear("gmm_prob", d, h_.K, seed, 0.1);
    }

    ModelHyper h_;
    std::map<std::string, Tensor> params_;
};

}  // namespace socmpc::model
