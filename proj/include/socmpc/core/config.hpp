#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

namespace socmpc {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// All tunables in one place. Field names double as config-file keys.
struct Config {
    // discretization / horizons
    double dt = 0.1;  ///< step length [s]
    int N = 50;       ///< prediction & planning horizon steps
    int T_h = 40;     ///< history steps
    int n = 6;        ///< surrounding-vehicle slots

    // cost weights (Q: s, v, y, psi <- theta_1, theta_2, theta_4, theta_5; R: a, delta_f <- theta_3, theta_6)
    double theta_1 = 0.0;
    double theta_2 = 1.0;
    double theta_3 = 0.5;
    double theta_4 = 2.0;
    double theta_5 = 1.0;
    double theta_6 = 2.0;

    // loss weights
    double lambda_1 = 1.0;
    double lambda_2 = 0.5;

    // collision-avoidance constants
    double big_m = 1e4;
    double s_ref = 10.0;  ///< longitudinal safety reference [m]
    double y_ref = 2.0;   ///< lateral safety reference [m]

    // box bounds
    double v_min = 0.0;
    double v_max = 35.0;
    double a_min = -6.0;
    double a_max = 4.0;
    double psi_max = 0.3;
    double delta_max = 0.5;

    // model hyperparameters
    int embed_dim = 64;
    int heads = 4;
    int enc_layers = 2;
    int dec_layers = 2;
    int K_modalities = 6;
    double block_bound = 2.0;  ///< tanh saturation bound on decoded interaction blocks

    // training
    double lr = 1e-3;
    int batch_size = 32;
    int epochs = 25;
    int max_steps = 0;  ///< 0 = run by epochs
    double v_floor = 0.5;
    bool gmm_data_term = true;  ///< adds the Gaussian NLL term so modality means receive gradient

    // solver
    double qp_tol = 1e-6;
    int qp_max_iter = 20000;
    int replan_passes = 1;

    uint64_t seed = 42;
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace detail

/// Checks invariants and returns the normalized config. Throws ConfigError
/// with the offending key named.
inline Config validate_config(Config cfg) {
    if (!(cfg.dt > 0.0)) throw ConfigError("dt must be positive");
    if (cfg.N <= 0) throw ConfigError("N must be positive");
    if (cfg.T_h <= 0) throw ConfigError("T_h must be positive");
    if (cfg.n < 0) throw ConfigError("n must be non-negative");
    if (!(cfg.big_m > cfg.s_ref)) throw ConfigError("big_m must exceed s_ref");
    const double weights[] = {cfg.theta_1, cfg.theta_2, cfg.theta_3, cfg.theta_4,
                              cfg.theta_5, cfg.theta_6, cfg.lambda_1, cfg.lambda_2};
    for (double w : weights)
        if (w < 0.0) throw ConfigError("cost and loss weights must be non-negative");
    if (cfg.embed_dim <= 0 || cfg.heads <= 0 || cfg.embed_dim % cfg.heads != 0)
        throw ConfigError("embed_dim must be a positive multiple of heads");
    if (cfg.K_modalities <= 0) throw ConfigError("K_modalities must be positive");
    if (!(cfg.qp_tol > 0.0)) throw ConfigError("qp_tol must be positive");
    if (cfg.v_max < cfg.v_min || cfg.a_max < cfg.a_min) throw ConfigError("bound intervals must be non-empty");
    return cfg;
}

/// Parses `key = value` lines (comments start with '#'). Unknown keys are an error.
inline Config parse_config(std::istream& in, Config cfg = Config{}) {
    std::map<std::string, std::string> kv;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        kv[detail::trim(line.substr(0, eq))] = detail::trim(line.substr(eq + 1));
    }

    auto as_double = [](const std::string& v) { return std::stod(v); };
    auto as_int = [](const std::string& v) { return std::stoi(v); };
    auto as_bool = [](const std::string& v) {
        if (v == "true" || v == "1") return true;
        if (v == "false" || v == "0") return false;
        throw ConfigError("expected boolean, got '" + v + "'");
    };

    for (const auto& [key, value] : kv) {
        if (key == "dt") cfg.dt = as_double(value);
        else if (key == "N") cfg.N = as_int(value);
        else if (key == "T_h") cfg.T_h = as_int(value);
        else if (key == "n") cfg.n = as_int(value);
        else if (key == "theta_1") cfg.theta_1 = as_double(value);
        else if (key == "theta_2") cfg.theta_2 = as_double(value);
        else if (key == "theta_3") cfg.theta_3 = as_double(value);
        else if (key == "theta_4") cfg.theta_4 = as_double(value);
        else if (key == "theta_5") cfg.theta_5 = as_double(value);
        else if (key == "theta_6") cfg.theta_6 = as_double(value);
        else if (key == "lambda_1") cfg.lambda_1 = as_double(value);
        else if (key == "lambda_2") cfg.lambda_2 = as_double(value);
        else if (key == "big_m") cfg.big_m = as_double(value);
        else if (key == "s_ref") cfg.s_ref = as_double(value);
        else if (key == "y_ref") cfg.y_ref = as_double(value);
        else if (key == "v_min") cfg.v_min = as_double(value);
        else if (key == "v_max") cfg.v_max = as_double(value);
        else if (key == "a_min") cfg.a_min = as_double(value);
        else if (key == "a_max") cfg.a_max = as_double(value);
        else if (key == "psi_max") cfg.psi_max = as_double(value);
        else if (key == "delta_max") cfg.delta_max = as_double(value);
        else if (key == "embed_dim") cfg.embed_dim = as_int(value);
        else if (key == "heads") cfg.heads = as_int(value);
        else if (key == "enc_layers") cfg.enc_layers = as_int(value);
        else if (key == "dec_layers") cfg.dec_layers = as_int(value);
        else if (key == "K_modalities") cfg.K_modalities = as_int(value);
        else if (key == "block_bound") cfg.block_bound = as_double(value);
        else if (key == "lr") cfg.lr = as_double(value);
        else if (key == "batch_size") cfg.batch_size = as_int(value);
        else if (key == "epochs") cfg.epochs = as_int(value);
        else if (key == "max_steps") cfg.max_steps = as_int(value);
        else if (key == "v_floor") cfg.v_floor = as_double(value);
        else if (key == "gmm_data_term") cfg.gmm_data_term = as_bool(value);
        else if (key == "qp_tol") cfg.qp_tol = as_double(value);
        else if (key == "qp_max_iter") cfg.qp_max_iter = as_int(value);
        else if (key == "replan_passes") cfg.replan_passes = as_int(value);
        else if (key == "seed") cfg.seed = static_cast<uint64_t>(std::stoull(value));
        else throw ConfigError("unknown config key '" + key + "'");
    }
    return validate_config(cfg);
}

inline Config load_config(const std::string& path, Config defaults = Config{}) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    return parse_config(in, defaults);
}

/// Renders the resolved config in the same key = value format.
inline std::string dump_config(const Config& c) {
    std::ostringstream os;
    os.precision(17);
    os << "dt = " << c.dt << "\nN = " << c.N << "\nT_h = " << c.T_h << "\nn = " << c.n << "\n";
    os << "theta_1 = " << c.theta_1 << "\ntheta_2 = " << c.theta_2 << "\ntheta_3 = " << c.theta_3
       << "\ntheta_4 = " << c.theta_4 << "\ntheta_5 = " << c.theta_5 << "\ntheta_6 = " << c.theta_6 << "\n";
    os << "lambda_1 = " << c.lambda_1 << "\nlambda_2 = " << c.lambda_2 << "\n";
    os << "big_m = " << c.big_m << "\ns_ref = " << c.s_ref << "\ny_ref = " << c.y_ref << "\n";
    os << "v_min = " << c.v_min << "\nv_max = " << c.v_max << "\na_min = " << c.a_min << "\na_max = " << c.a_max
       << "\npsi_max = " << c.psi_max << "\ndelta_max = " << c.delta_max << "\n";
    os << "embed_dim = " << c.embed_dim << "\nheads = " << c.heads << "\nenc_layers = " << c.enc_layers
       << "\ndec_layers = " << c.dec_layers << "\nK_modalities = " << c.K_modalities
       << "\nblock_bound = " << c.block_bound << "\n";
    os << "lr = " << c.lr << "\nbatch_size = " << c.batch_size << "\nepochs = " << c.epochs
       << "\nmax_steps = " << c.max_steps << "\nv_floor = " << c.v_floor
       << "\ngmm_data_term = " << (c.gmm_data_term ? "true" : "false") << "\n";
    os << "qp_tol = " << c.qp_tol << "\nqp_max_iter = " << c.qp_max_iter
       << "\nreplan_passes = " << c.replan_passes << "\n";
    os << "seed = " << c.seed << "\n";
    return os.str();
}

}  // namespace socmpc
