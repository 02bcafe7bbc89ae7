#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "swflow/diagnostics.hpp"
#include "swflow/io.hpp"
#include "swflow/jko.hpp"
#include "swflow/oracles.hpp"
#include "swflow/swflow_version.hpp"

namespace swflow {

/// Raised for unreadable, malformed, or inconsistent experiment configs.
/// The CLI maps it to exit code 2; nothing is written in that case.
class config_error : public std::runtime_error {
public:
    explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

namespace exp_detail {

// Strict key-value access: every key must be consumed, unknown keys are
// rejected before any computation starts.
class KeyMap {
public:
    explicit KeyMap(std::map<std::string, std::string> entries)
        : entries_(std::move(entries)) {}

    bool has(const std::string& key) const { return entries_.count(key) > 0; }

    std::string get_string(const std::string& key, const std::string& fallback) {
        auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        consumed_.insert(key);
        return it->second;
    }
    std::string require_string(const std::string& key) {
        auto it = entries_.find(key);
        if (it == entries_.end()) throw config_error("missing required key '" + key + "'");
        consumed_.insert(key);
        return it->second;
    }
    double get_double(const std::string& key, double fallback) {
        auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        consumed_.insert(key);
        double v;
        if (!io_detail::parse_double(it->second, v))
            throw config_error("key '" + key + "' is not a number: " + it->second);
        return v;
    }
    long get_long(const std::string& key, long fallback) {
        const double v = get_double(key, static_cast<double>(fallback));
        const long out = static_cast<long>(v);
        if (static_cast<double>(out) != v)
            throw config_error("key '" + key + "' must be an integer");
        return out;
    }
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) {
        auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        consumed_.insert(key);
        try {
            return std::stoull(it->second);
        } catch (...) {
            throw config_error("key '" + key + "' is not an unsigned integer: " + it->second);
        }
    }
    bool get_bool(const std::string& key, bool fallback) {
        auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        consumed_.insert(key);
        if (it->second == "true" || it->second == "1") return true;
        if (it->second == "false" || it->second == "0") return false;
        throw config_error("key '" + key + "' must be true/false: " + it->second);
    }
    VectorXd get_vector(const std::string& key, const VectorXd& fallback) {
        auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        consumed_.insert(key);
        std::istringstream ss(it->second);
        std::vector<double> vals;
        std::string token;
        while (ss >> token) {
            double v;
            if (!io_detail::parse_double(token, v))
                throw config_error("key '" + key + "' has a bad number: " + token);
            vals.push_back(v);
        }
        if (vals.empty()) throw config_error("key '" + key + "' is empty");
        return Eigen::Map<const VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
    }

    void finish() const {
        std::string unknown;
        for (const auto& [key, value] : entries_) {
            if (!consumed_.count(key)) unknown += (unknown.empty() ? "" : ", ") + key;
        }
        if (!unknown.empty()) throw config_error("unknown config keys: " + unknown);
    }

private:
    std::map<std::string, std::string> entries_;
    std::set<std::string> consumed_;
};

inline std::map<std::string, std::string> parse_flat_text(const std::string& text) {
    std::map<std::string, std::string> entries;
    std::istringstream ss(text);
    std::string line;
    int line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        const auto comment = line.find('#');
        if (comment != std::string::npos) line = line.substr(0, comment);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw config_error("line " + std::to_string(line_no) + ": expected 'key = value'");
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            const auto b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw config_error("line " + std::to_string(line_no) + ": empty key");
        if (entries.count(key))
            throw config_error("duplicate config key '" + key + "'");
        entries[key] = value;
    }
    return entries;
}

inline std::map<std::string, std::string> parse_json_text(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
        throw config_error(std::string("invalid JSON config: ") + e.what());
    }
    if (!doc.is_object()) throw config_error("JSON config must be an object");
    std::map<std::string, std::string> entries;
    for (const auto& [key, value] : doc.items()) {
        if (value.is_string()) {
            entries[key] = value.get<std::string>();
        } else if (value.is_boolean()) {
            entries[key] = value.get<bool>() ? "true" : "false";
        } else if (value.is_number()) {
            entries[key] = format_double(value.get<double>());
        } else if (value.is_array()) {
            std::string flat;
            for (const auto& item : value) {
                if (!item.is_number()) throw config_error("array values must be numeric: " + key);
                flat += (flat.empty() ? "" : " ") + format_double(item.get<double>());
            }
            entries[key] = flat;
        } else {
            throw config_error("unsupported JSON value for key '" + key + "'");
        }
    }
    return entries;
}

}  // namespace exp_detail

/// Fully-resolved description of one batch run. Everything an experiment
/// produces is a deterministic function of this struct.
struct ExperimentConfig {
    std::string experiment;
    std::string parameterization = "particles";
    Eigen::Index dimension = 2;
    Eigen::Index n_particles = 1000;
    Eigen::Index grid_per_axis = 50;
    double grid_lo = -3.0;
    double grid_hi = 3.0;
    SolverConfig solver;
    int threads = 1;
    std::string out_dir = "swflow-out";

    VectorXd init_mean;   // defaults to zeros(dimension)
    double init_sigma = 1.0;

    double potential_a_iso = 1.0;
    bool potential_random_spd = false;
    std::uint64_t potential_spd_seed = 0;
    VectorXd potential_mean;  // defaults to zeros(dimension)

    double kernel_a = 4.0;
    double kernel_b = 2.0;
    double drift_alpha = 1.0;
    double drift_beta = 4.0;

    double ula_step = 1e-3;
    double ula_horizon = 8.0;

    std::string file_a;
    std::string file_b;

    std::uint64_t target_seed = 1;

    static ExperimentConfig from_text(const std::string& text);
    static ExperimentConfig from_file(const std::string& path);

    void validate() const;
    std::string echo() const;
};

namespace exp_detail {

inline const std::set<std::string>& known_experiments() {
    static const std::set<std::string> names = {
        "gaussian-flow",  "aggregation", "aggregation-drift", "disk",
        "compare-trajectories", "sw-estimate", "ula-baseline"};
    return names;
}

}  // namespace exp_detail

inline ExperimentConfig ExperimentConfig::from_text(const std::string& text) {
    const auto first = text.find_first_not_of(" \t\r\n");
    std::map<std::string, std::string> raw;
    if (first != std::string::npos && text[first] == '{')
        raw = exp_detail::parse_json_text(text);
    else
        raw = exp_detail::parse_flat_text(text);
    exp_detail::KeyMap keys(std::move(raw));

    ExperimentConfig cfg;
    cfg.experiment = keys.require_string("experiment");
    if (!exp_detail::known_experiments().count(cfg.experiment))
        throw config_error("unknown experiment '" + cfg.experiment + "'");
    if (cfg.experiment == "gaussian-flow") cfg.parameterization = "grid";
    cfg.parameterization = keys.get_string("parameterization", cfg.parameterization);

    // per-experiment defaults (calibrated to reproduce the named setups);
    // every field remains overridable below
    if (cfg.experiment == "gaussian-flow") {
        cfg.solver.n_outer = 80;
        cfg.solver.dilation = true;
        cfg.solver.n_projections = 48;
        cfg.solver.n_inner = 150;
        if (cfg.parameterization == "grid") {
            cfg.solver.tau = 0.1;
            cfg.solver.inner_step = 5e-6;
            cfg.solver.inner_step_decay = 0.96;
        } else {
            cfg.solver.tau = 0.05;
            cfg.solver.inner_step = 6e-3;
            cfg.solver.inner_step_decay = 0.97;
        }
    } else if (cfg.experiment == "aggregation" || cfg.experiment == "disk") {
        cfg.solver.tau = 0.05;
        cfg.solver.n_outer = 200;
        cfg.solver.n_inner = 60;
        cfg.solver.n_projections = 32;
        cfg.solver.inner_step = cfg.experiment == "aggregation" ? 2e-3 : 4e-3;
        cfg.solver.inner_step_decay = 0.95;
    } else if (cfg.experiment == "aggregation-drift") {
        cfg.solver.tau = 0.05;
        cfg.solver.n_outer = 100;  // t = 5; the singular kernel heats the edge later
        cfg.solver.n_inner = 80;
        cfg.solver.n_projections = 32;
        cfg.solver.inner_step = 6e-3;
        cfg.solver.inner_step_decay = 0.96;
        cfg.solver.dilation = true;
    } else if (cfg.experiment == "compare-trajectories") {
        cfg.n_particles = 20;
        cfg.solver.tau = 0.1;
        cfg.solver.n_outer = 150;
        cfg.solver.dilation = true;
        cfg.solver.n_inner = 40;
        cfg.solver.n_projections = 16;
        cfg.solver.inner_step = 5e-2;
        cfg.solver.inner_step_decay = 0.98;
    } else if (cfg.experiment == "sw-estimate") {
        cfg.solver.n_projections = 2000;
    } else if (cfg.experiment == "ula-baseline") {
        cfg.n_particles = 10000;
    }
    if (cfg.experiment == "aggregation") cfg.init_sigma = 0.25;
    cfg.dimension = keys.get_long("dimension", cfg.dimension);
    cfg.n_particles = keys.get_long("n_particles", cfg.n_particles);
    cfg.grid_per_axis = keys.get_long("grid_per_axis", cfg.grid_per_axis);
    cfg.grid_lo = keys.get_double("grid_lo", cfg.grid_lo);
    cfg.grid_hi = keys.get_double("grid_hi", cfg.grid_hi);

    cfg.solver.tau = keys.get_double("tau", cfg.solver.tau);
    cfg.solver.n_outer = static_cast<int>(keys.get_long("n_outer", cfg.solver.n_outer));
    cfg.solver.n_inner = static_cast<int>(keys.get_long("n_inner", cfg.solver.n_inner));
    cfg.solver.n_projections = keys.get_long("n_projections", cfg.solver.n_projections);
    cfg.solver.quantile_m = keys.get_long("quantile_m", cfg.solver.quantile_m);
    cfg.solver.inner_step = keys.get_double("inner_step", cfg.solver.inner_step);
    cfg.solver.inner_step_decay =
        keys.get_double("inner_step_decay", cfg.solver.inner_step_decay);
    cfg.solver.inner_method =
        inner_method_from_string(keys.get_string("inner_method", to_string(cfg.solver.inner_method)));
    cfg.solver.momentum_beta = keys.get_double("momentum_beta", cfg.solver.momentum_beta);
    cfg.solver.dilation = keys.get_bool("dilation", cfg.solver.dilation);
    cfg.solver.warm_start = keys.get_bool("warm_start", cfg.solver.warm_start);
    cfg.solver.freeze_projections =
        keys.get_bool("freeze_projections", cfg.solver.freeze_projections);
    cfg.solver.seed = keys.get_u64("seed", cfg.solver.seed);
    cfg.threads = static_cast<int>(keys.get_long("threads", cfg.threads));
    cfg.out_dir = keys.get_string("out", cfg.out_dir);

    cfg.init_mean = keys.get_vector("init_mean", VectorXd::Zero(cfg.dimension));
    cfg.init_sigma = keys.get_double("init_sigma", cfg.init_sigma);

    cfg.potential_a_iso = keys.get_double("potential_a_iso", cfg.potential_a_iso);
    cfg.potential_random_spd = keys.has("potential_spd_seed");
    cfg.potential_spd_seed = keys.get_u64("potential_spd_seed", 0);
    cfg.potential_mean = keys.get_vector("potential_mean", VectorXd::Zero(cfg.dimension));

    cfg.kernel_a = keys.get_double("kernel_a", cfg.kernel_a);
    cfg.kernel_b = keys.get_double("kernel_b", cfg.kernel_b);
    cfg.drift_alpha = keys.get_double("drift_alpha", cfg.drift_alpha);
    cfg.drift_beta = keys.get_double("drift_beta", cfg.drift_beta);

    cfg.ula_step = keys.get_double("ula_step", cfg.ula_step);
    cfg.ula_horizon = keys.get_double("ula_horizon", cfg.ula_horizon);

    cfg.file_a = keys.get_string("file_a", "");
    cfg.file_b = keys.get_string("file_b", "");

    cfg.target_seed = keys.get_u64("target_seed", cfg.target_seed);

    keys.finish();
    cfg.validate();
    return cfg;
}

inline ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot read config file: " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return from_text(buffer.str());
}

inline void ExperimentConfig::validate() const {
    try {
        solver.validate();
    } catch (const std::invalid_argument& e) {
        throw config_error(e.what());
    }
    if (parameterization != "particles" && parameterization != "grid")
        throw config_error("parameterization must be 'particles' or 'grid'");
    if (dimension < 1) throw config_error("dimension must be >= 1");
    if (n_particles < 1) throw config_error("n_particles must be >= 1");
    if (grid_per_axis < 2) throw config_error("grid_per_axis must be >= 2");
    if (!(grid_hi > grid_lo)) throw config_error("need grid_hi > grid_lo");
    if (init_mean.size() != dimension || potential_mean.size() != dimension)
        throw config_error("init_mean / potential_mean must have 'dimension' entries");
    if (!(init_sigma >= 0.0)) throw config_error("init_sigma must be >= 0");
    if (threads < 1) throw config_error("threads must be >= 1");
    if (!(kernel_a > kernel_b) || kernel_b < 0.0)
        throw config_error("kernel exponents need a > b >= 0");
    if (!(ula_step > 0.0) || !(ula_horizon >= 0.0))
        throw config_error("ULA needs ula_step > 0 and ula_horizon >= 0");

    const bool particles_only = experiment == "aggregation-drift" || experiment == "disk" ||
                                experiment == "compare-trajectories" ||
                                experiment == "ula-baseline";
    if (particles_only && parameterization != "particles")
        throw config_error("experiment '" + experiment + "' runs on particles only");
    if (experiment == "sw-estimate" && (file_a.empty() || file_b.empty()))
        throw config_error("sw-estimate needs file_a and file_b");
    if (experiment == "gaussian-flow" && parameterization == "grid" && dimension != 2)
        throw config_error("grid parameterization is implemented for dimension = 2");
}

inline std::string ExperimentConfig::echo() const {
    std::ostringstream out;
    out << "# swflow " << SWFLOW_VERSION << " resolved config\n";
    out << "experiment = " << experiment << "\n";
    out << "parameterization = " << parameterization << "\n";
    out << "dimension = " << dimension << "\n";
    out << "n_particles = " << n_particles << "\n";
    out << "grid_per_axis = " << grid_per_axis << "\n";
    out << "grid_lo = " << format_double(grid_lo) << "\n";
    out << "grid_hi = " << format_double(grid_hi) << "\n";
    out << "tau = " << format_double(solver.tau) << "\n";
    out << "n_outer = " << solver.n_outer << "\n";
    out << "n_inner = " << solver.n_inner << "\n";
    out << "n_projections = " << solver.n_projections << "\n";
    out << "quantile_m = " << solver.quantile_m << "\n";
    out << "inner_step = " << format_double(solver.inner_step) << "\n";
    out << "inner_step_decay = " << format_double(solver.inner_step_decay) << "\n";
    out << "inner_method = " << to_string(solver.inner_method) << "\n";
    out << "momentum_beta = " << format_double(solver.momentum_beta) << "\n";
    out << "dilation = " << (solver.dilation ? "true" : "false") << "\n";
    out << "warm_start = " << (solver.warm_start ? "true" : "false") << "\n";
    out << "freeze_projections = " << (solver.freeze_projections ? "true" : "false") << "\n";
    out << "seed = " << solver.seed << "\n";
    out << "threads = " << threads << "\n";
    out << "out = " << out_dir << "\n";
    auto vec = [&](const VectorXd& v) {
        std::string s;
        for (Eigen::Index i = 0; i < v.size(); ++i)
            s += (i ? " " : "") + format_double(v(i));
        return s;
    };
    out << "init_mean = " << vec(init_mean) << "\n";
    out << "init_sigma = " << format_double(init_sigma) << "\n";
    if (potential_random_spd) out << "potential_spd_seed = " << potential_spd_seed << "\n";
    out << "potential_a_iso = " << format_double(potential_a_iso) << "\n";
    out << "potential_mean = " << vec(potential_mean) << "\n";
    out << "kernel_a = " << format_double(kernel_a) << "\n";
    out << "kernel_b = " << format_double(kernel_b) << "\n";
    out << "drift_alpha = " << format_double(drift_alpha) << "\n";
    out << "drift_beta = " << format_double(drift_beta) << "\n";
    out << "ula_step = " << format_double(ula_step) << "\n";
    out << "ula_horizon = " << format_double(ula_horizon) << "\n";
    if (!file_a.empty()) out << "file_a = " << file_a << "\n";
    if (!file_b.empty()) out << "file_b = " << file_b << "\n";
    out << "target_seed = " << target_seed << "\n";
    return out.str();
}

// ---------------------------------------------------------------------------
// Bundle writing
// ---------------------------------------------------------------------------

namespace exp_detail {

class Bundle {
public:
    explicit Bundle(const ExperimentConfig& cfg) : dir_(cfg.out_dir) {
        std::filesystem::create_directories(dir_);
        std::ofstream echo(dir_ / "config_echo.txt");
        echo << cfg.echo();
    }

    const std::filesystem::path& dir() const { return dir_; }

    template <class M>
    void write_trace(const Trajectory<M>& traj, const std::string& name) const {
        std::ofstream out(dir_ / name);
        out << "step,t,energy,sw_gap,wall_ms\n";
        for (std::size_t k = 0; k < traj.energy.size(); ++k) {
            const double gap = k == 0 ? 0.0 : traj.sw_gap[k - 1];
            const double ms = k == 0 ? 0.0 : traj.wall_ms[k - 1];
            out << k << "," << format_double(traj.time_at(k)) << ","
                << format_double(traj.energy[k]) << "," << format_double(gap) << ","
                << format_double(ms) << "\n";
        }
    }

    void write_measure(const MeasureView& m, const std::string& name,
                       std::optional<double> cell_volume = std::nullopt) const {
        write_measure_csv((dir_ / name).string(), m, cell_volume);
    }

    void write_radius_trace(const std::vector<ParticleCloud>& snapshots, double tau,
                            const VectorXd& center) const {
        std::ofstream out(dir_ / "radius_stats.csv");
        out << "step,t,mean,std,min,max,p05,p95\n";
        for (std::size_t k = 0; k < snapshots.size(); ++k) {
            const RadiusStats s = radius_stats(snapshots[k], center);
            out << k << "," << format_double(tau * static_cast<double>(k)) << ","
                << format_double(s.mean) << "," << format_double(s.std_dev) << ","
                << format_double(s.min) << "," << format_double(s.max) << ","
                << format_double(s.quantile(0.05)) << "," << format_double(s.quantile(0.95))
                << "\n";
        }
    }

    void add_summary(const std::string& key, const std::string& value) {
        summary_.emplace_back(key, value);
    }
    void add_summary(const std::string& key, double value) {
        summary_.emplace_back(key, format_double(value));
    }

    void flush_summary() const {
        std::ofstream out(dir_ / "summary.txt");
        for (const auto& [key, value] : summary_) {
            out << key << " = " << value << "\n";
            std::cout << key << " = " << value << "\n";
        }
    }

private:
    std::filesystem::path dir_;
    std::vector<std::pair<std::string, std::string>> summary_;
};

inline double hausdorff_distance(const MatrixXd& a, const MatrixXd& b) {
    auto directed = [](const MatrixXd& from, const MatrixXd& to) {
        double worst = 0.0;
        for (Eigen::Index i = 0; i < from.rows(); ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (Eigen::Index j = 0; j < to.rows(); ++j)
                best = std::min(best, (from.row(i) - to.row(j)).norm());
            worst = std::max(worst, best);
        }
        return worst;
    };
    return std::max(directed(a, b), directed(b, a));
}

inline MatrixXd random_spd_matrix(Eigen::Index d, std::uint64_t seed, double lo, double hi) {
    Rng rng(seed);
    MatrixXd gauss(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j) gauss(i, j) = rng.gaussian();
    Eigen::HouseholderQR<MatrixXd> qr(gauss);
    MatrixXd q = qr.householderQ();
    VectorXd eigs(d);
    for (Eigen::Index i = 0; i < d; ++i) eigs(i) = lo + (hi - lo) * rng.uniform01();
    MatrixXd m = q * eigs.asDiagonal() * q.transpose();
    return 0.5 * (m + m.transpose());
}

inline GridMeasure gaussian_on_grid(Eigen::Index per_axis, double lo, double hi,
                                    const GaussianMeasure& g) {
    const Eigen::Index n = per_axis * per_axis;
    const double cell = (hi - lo) / static_cast<double>(per_axis);
    MatrixXd support(n, 2);
    VectorXd w(n);
    const GaussianDensity density(g);
    Eigen::Index idx = 0;
    for (Eigen::Index i = 0; i < per_axis; ++i) {
        for (Eigen::Index j = 0; j < per_axis; ++j) {
            support(idx, 0) = lo + (static_cast<double>(i) + 0.5) * cell;
            support(idx, 1) = lo + (static_cast<double>(j) + 0.5) * cell;
            w(idx) = std::exp(density.log_density(support.row(idx).transpose()));
            ++idx;
        }
    }
    w /= w.sum();
    return GridMeasure(std::move(support), std::move(w), cell * cell);
}

template <class M>
void write_mean_trace(const Bundle& bundle, const Trajectory<M>& traj) {
    std::ofstream out(bundle.dir() / "mean_trace.csv");
    const Eigen::Index d = traj.snapshots.front().dimension();
    out << "step,t";
    for (Eigen::Index c = 0; c < d; ++c) out << ",mean_" << (c + 1);
    out << "\n";
    for (std::size_t k = 0; k < traj.snapshots.size(); ++k) {
        const VectorXd m = traj.snapshots[k].mean();
        out << k << "," << format_double(traj.time_at(k));
        for (Eigen::Index c = 0; c < d; ++c) out << "," << format_double(m(c));
        out << "\n";
    }
}

}  // namespace exp_detail

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

namespace exp_detail {

inline ParticleCloud initial_cloud(const ExperimentConfig& cfg) {
    Rng rng(derive_seed(cfg.solver.seed, 0x1417));
    const GaussianMeasure init(cfg.init_mean,
                               cfg.init_sigma * cfg.init_sigma *
                                   MatrixXd::Identity(cfg.dimension, cfg.dimension));
    return sample_gaussian(init, cfg.n_particles, rng);
}

template <class M>
int finish_flow(const ExperimentConfig& cfg, Bundle& bundle, const Trajectory<M>& traj) {
    bundle.write_trace(traj, "energy_trace.csv");
    if (traj.aborted) {
        bundle.add_summary("aborted", "true");
        bundle.add_summary("abort_reason", traj.abort_reason);
        bundle.flush_summary();
        std::cerr << "numerical abort: " << traj.abort_reason << "\n";
        return 3;
    }
    return 0;
}

inline int run_gaussian_flow(const ExperimentConfig& cfg, Bundle& bundle) {
    const Eigen::Index d = cfg.dimension;
    MatrixXd a_matrix = cfg.potential_a_iso * MatrixXd::Identity(d, d);
    VectorXd target_mean = cfg.potential_mean;
    if (cfg.potential_random_spd) {
        a_matrix = random_spd_matrix(d, cfg.potential_spd_seed, 0.8, 2.5);
        Rng mean_rng(derive_seed(cfg.potential_spd_seed, 0xb0a));
        for (Eigen::Index c = 0; c < d; ++c) target_mean(c) = 0.6 * (2.0 * mean_rng.uniform01() - 1.0);
    }
    auto potential = std::make_shared<QuadraticPotential>(a_matrix, target_mean);
    const GaussianMeasure stationary = potential->stationary();
    const GaussianDensity stationary_density(stationary);
    auto stationary_log = [&](const VectorXd& x) { return stationary_density.log_density(x); };

    if (cfg.parameterization == "grid") {
        const GridMeasure mu0 = gaussian_on_grid(
            cfg.grid_per_axis, cfg.grid_lo, cfg.grid_hi,
            GaussianMeasure(cfg.init_mean,
                            cfg.init_sigma * cfg.init_sigma * MatrixXd::Identity(d, d)));
        WeightedSumEnergy energy(
            {std::make_shared<PotentialEnergy>(potential), std::make_shared<GridEntropyEnergy>()},
            {1.0, 1.0});
        const auto traj = run_flow(mu0, energy, cfg.solver);
        const int rc = finish_flow(cfg, bundle, traj);
        write_mean_trace(bundle, traj);
        {
            std::ofstream out(bundle.dir() / "symkl_trace.csv");
            out << "step,t,symkl\n";
            for (std::size_t k = 0; k < traj.snapshots.size(); ++k)
                out << k << "," << format_double(traj.time_at(k)) << ","
                    << format_double(sym_kl_grid_density(traj.snapshots[k], stationary_log))
                    << "\n";
        }
        bundle.write_measure(traj.snapshots.front(), "initial_measure.csv",
                             mu0.cell_volume());
        bundle.write_measure(traj.snapshots.back(), "final_measure.csv", mu0.cell_volume());
        bundle.add_summary("symkl_initial",
                           sym_kl_grid_density(traj.snapshots.front(), stationary_log));
        bundle.add_summary("symkl_final",
                           sym_kl_grid_density(traj.snapshots.back(), stationary_log));
        bundle.add_summary("gap_violations",
                           static_cast<double>(energy_gap_check(traj, cfg.solver.tau).size()));
        bundle.flush_summary();
        return rc;
    }

    // particle parameterization: potential-only functional (no grid density)
    const ParticleCloud mu0 = initial_cloud(cfg);
    PotentialEnergy energy(potential);
    const auto traj = run_flow(mu0, energy, cfg.solver);
    const int rc = finish_flow(cfg, bundle, traj);
    write_mean_trace(bundle, traj);
    bundle.write_measure(traj.snapshots.front(), "initial_measure.csv");
    bundle.write_measure(traj.snapshots.back(), "final_measure.csv");

    const OuSpec ou(a_matrix, target_mean, mu0.mean(),
                    cfg.init_sigma * cfg.init_sigma * MatrixXd::Identity(d, d));
    double worst_mean_err = 0.0;
    for (std::size_t k = 0; k < traj.snapshots.size(); ++k) {
        const GaussianMeasure ref = ou_analytic(ou, traj.time_at(k));
        worst_mean_err =
            std::max(worst_mean_err, (traj.snapshots[k].mean() - ref.mean()).norm());
    }
    bundle.add_summary("max_mean_error_vs_ou", worst_mean_err);
    bundle.add_summary("gap_violations",
                       static_cast<double>(energy_gap_check(traj, cfg.solver.tau).size()));
    bundle.flush_summary();
    return rc;
}

inline int run_aggregation_family(const ExperimentConfig& cfg, Bundle& bundle) {
    std::vector<std::shared_ptr<Energy>> components;
    std::vector<double> coefficients;
    components.push_back(std::make_shared<InteractionEnergy>(
        PowerKernel(cfg.kernel_a, cfg.kernel_b)));
    coefficients.push_back(1.0);
    if (cfg.experiment == "aggregation-drift") {
        components.push_back(std::make_shared<PotentialEnergy>(
            std::make_shared<LogRadialDrift>(cfg.drift_alpha, cfg.drift_beta)));
        coefficients.push_back(1.0);
    }
    WeightedSumEnergy energy(std::move(components), std::move(coefficients));

    if (cfg.parameterization == "grid") {
        const GridMeasure mu0 = gaussian_on_grid(
            cfg.grid_per_axis, cfg.grid_lo, cfg.grid_hi,
            GaussianMeasure(cfg.init_mean, cfg.init_sigma * cfg.init_sigma *
                                               MatrixXd::Identity(cfg.dimension, cfg.dimension)));
        const auto traj = run_flow(mu0, energy, cfg.solver);
        const int rc = finish_flow(cfg, bundle, traj);
        bundle.write_measure(traj.snapshots.front(), "initial_measure.csv", mu0.cell_volume());
        bundle.write_measure(traj.snapshots.back(), "final_measure.csv", mu0.cell_volume());
        bundle.flush_summary();
        return rc;
    }

    const ParticleCloud mu0 = initial_cloud(cfg);
    const auto traj = run_flow(mu0, energy, cfg.solver);
    const int rc = finish_flow(cfg, bundle, traj);
    bundle.write_measure(traj.snapshots.front(), "initial_measure.csv");
    bundle.write_measure(traj.snapshots.back(), "final_measure.csv");
    bundle.write_radius_trace(traj.snapshots, cfg.solver.tau, VectorXd::Zero(cfg.dimension));

    const RadiusStats stats = radius_stats(traj.snapshots.back(), VectorXd::Zero(cfg.dimension));
    bundle.add_summary("radius_mean", stats.mean);
    bundle.add_summary("radius_std", stats.std_dev);
    bundle.add_summary("radius_min", stats.min);
    bundle.add_summary("radius_max", stats.max);
    bundle.add_summary("radius_p05", stats.quantile(0.05));
    bundle.add_summary("radius_p95", stats.quantile(0.95));
    bundle.add_summary("gap_violations",
                       static_cast<double>(energy_gap_check(traj, cfg.solver.tau).size()));
    bundle.flush_summary();
    return rc;
}

inline int run_compare_trajectories(const ExperimentConfig& cfg, Bundle& bundle) {
    Rng target_rng(cfg.target_seed);
    MatrixXd target_pts(cfg.n_particles, cfg.dimension);
    for (Eigen::Index i = 0; i < cfg.n_particles; ++i)
        for (Eigen::Index c = 0; c < cfg.dimension; ++c)
            target_pts(i, c) = 2.0 * target_rng.uniform01() - 1.0;
    const ParticleCloud target(target_pts);
    ExactW2Energy energy_flow(target);
    ExactW2Energy energy_direct(target);

    const ParticleCloud mu0 = initial_cloud(cfg);
    const auto flow = run_flow(mu0, energy_flow, cfg.solver);
    const auto direct = direct_minimize(mu0, energy_direct, cfg.solver);

    bundle.write_trace(flow, "energy_trace.csv");
    bundle.write_trace(direct, "energy_trace_direct.csv");
    bundle.write_measure(target, "target_measure.csv");
    bundle.write_measure(mu0, "initial_measure.csv");
    bundle.write_measure(flow.snapshots.back(), "final_measure.csv");
    bundle.write_measure(direct.snapshots.back(), "final_measure_direct.csv");

    if (flow.aborted || direct.aborted) {
        bundle.add_summary("aborted", "true");
        bundle.add_summary("abort_reason",
                           flow.aborted ? flow.abort_reason : direct.abort_reason);
        bundle.flush_summary();
        return 3;
    }
    bundle.add_summary("f_initial", flow.energy.front());
    bundle.add_summary("f_final_swjko", flow.energy.back());
    bundle.add_summary("f_final_direct", direct.energy.back());
    bundle.add_summary("hausdorff_swjko",
                       hausdorff_distance(flow.snapshots.back().points(), target.points()));
    bundle.add_summary("hausdorff_direct",
                       hausdorff_distance(direct.snapshots.back().points(), target.points()));
    bundle.flush_summary();
    return 0;
}

inline int run_sw_estimate(const ExperimentConfig& cfg, Bundle& bundle) {
    LoadedMeasure a, b;
    try {
        a = read_measure_csv(cfg.file_a);
        b = read_measure_csv(cfg.file_b);
    } catch (const std::runtime_error& e) {
        throw config_error(e.what());
    }
    if (a.points.cols() != b.points.cols())
        throw config_error("sw-estimate: dimension mismatch between input files");
    for (const LoadedMeasure* m : {&a, &b}) {
        if (!m->points.allFinite())
            throw config_error("sw-estimate: non-finite coordinates in input");
        if (m->has_weights() &&
            ((m->weights.array() < 0.0).any() || std::abs(m->weights.sum() - 1.0) > 1e-9))
            throw config_error("sw-estimate: weight column must lie on the simplex");
    }

    const ProjectionSet p =
        sample_unit_sphere(cfg.solver.n_projections, a.points.cols(), cfg.solver.seed);
    const QuantileGrid q(cfg.solver.quantile_m);
    const MeasureView va(a.points, a.has_weights() ? &a.weights : nullptr);
    const MeasureView vb(b.points, b.has_weights() ? &b.weights : nullptr);
    const SwEstimate est = sw2_mc(va, vb, p, q);

    bundle.add_summary("sw2", est.value);
    bundle.add_summary("std_error", est.std_error);
    bundle.add_summary("n_projections", static_cast<double>(est.n_projections));
    bundle.add_summary("projection_seed", std::to_string(est.seed));
    bundle.flush_summary();
    return 0;
}

inline int run_ula_baseline(const ExperimentConfig& cfg, Bundle& bundle) {
    const Eigen::Index d = cfg.dimension;
    const MatrixXd a_matrix = cfg.potential_a_iso * MatrixXd::Identity(d, d);
    const QuadraticPotential potential(a_matrix, cfg.potential_mean);

    const ParticleCloud init = initial_cloud(cfg);
    std::vector<double> checkpoints;
    const int n_checks = 16;
    for (int c = 1; c <= n_checks; ++c)
        checkpoints.push_back(cfg.ula_horizon * static_cast<double>(c) / n_checks);

    Rng rng(derive_seed(cfg.solver.seed, 0x01a));
    UlaTrajectory traj;
    try {
        traj = euler_maruyama(potential, init, cfg.ula_step, cfg.ula_horizon, checkpoints, rng);
    } catch (const numeric_error& e) {
        bundle.add_summary("aborted", "true");
        bundle.add_summary("abort_reason", e.what());
        bundle.flush_summary();
        std::cerr << "numerical abort: " << e.what() << "\n";
        return 3;
    }

    {
        std::ofstream out(bundle.dir() / "moments_trace.csv");
        out << "t";
        for (Eigen::Index c = 0; c < d; ++c) out << ",mean_" << (c + 1);
        for (Eigen::Index r = 0; r < d; ++r)
            for (Eigen::Index c = r; c < d; ++c) out << ",cov_" << (r + 1) << (c + 1);
        out << "\n";
        for (std::size_t k = 0; k < traj.clouds.size(); ++k) {
            const VectorXd m = traj.clouds[k].mean();
            const MatrixXd centered = traj.clouds[k].points().rowwise() - m.transpose();
            const MatrixXd cov =
                centered.transpose() * centered / (traj.clouds[k].size() - 1.0);
            out << format_double(traj.times[k]);
            for (Eigen::Index c = 0; c < d; ++c) out << "," << format_double(m(c));
            for (Eigen::Index r = 0; r < d; ++r)
                for (Eigen::Index c = r; c < d; ++c) out << "," << format_double(cov(r, c));
            out << "\n";
        }
    }
    bundle.write_measure(traj.clouds.back(), "final_measure.csv");

    const ParticleCloud& final_cloud = traj.clouds.back();
    const VectorXd m = final_cloud.mean();
    const MatrixXd centered = final_cloud.points().rowwise() - m.transpose();
    const MatrixXd cov = centered.transpose() * centered / (final_cloud.size() - 1.0);
    const MatrixXd target_cov = a_matrix.inverse();
    bundle.add_summary("mean_error", (m - cfg.potential_mean).cwiseAbs().maxCoeff());
    bundle.add_summary("cov_rel_error",
                       ((cov - target_cov).cwiseAbs().maxCoeff()) /
                           target_cov.cwiseAbs().maxCoeff());
    bundle.flush_summary();
    return 0;
}

}  // namespace exp_detail

/// Runs a resolved config, writing the result bundle into cfg.out_dir.
/// Returns 0 on success or 3 on a numerical abort (partial traces flushed).
/// Config problems throw config_error before anything is written.
inline int run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    if (cfg.experiment == "sw-estimate") {
        // validate inputs before creating the output directory
        if (!std::filesystem::exists(cfg.file_a) || !std::filesystem::exists(cfg.file_b))
            throw config_error("sw-estimate: input file missing");
    }
    set_max_threads(cfg.threads);
    exp_detail::Bundle bundle(cfg);
    if (cfg.experiment == "gaussian-flow") return exp_detail::run_gaussian_flow(cfg, bundle);
    if (cfg.experiment == "aggregation" || cfg.experiment == "aggregation-drift" ||
        cfg.experiment == "disk")
        return exp_detail::run_aggregation_family(cfg, bundle);
    if (cfg.experiment == "compare-trajectories")
        return exp_detail::run_compare_trajectories(cfg, bundle);
    if (cfg.experiment == "sw-estimate") return exp_detail::run_sw_estimate(cfg, bundle);
    if (cfg.experiment == "ula-baseline") return exp_detail::run_ula_baseline(cfg, bundle);
    throw config_error("unknown experiment '" + cfg.experiment + "'");
}

}  // namespace swflow
