// Acceptance suite: one pass/fail line per criterion, exit code = failures.
//
// Flows run through the experiment driver so every criterion also exercises
// the config -> solver -> CSV pipeline end to end. Bundles land under the
// system temp directory.

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "swflow/swflow.hpp"
#include "test_helpers.hpp"

using namespace swflow;
namespace fs = std::filesystem;

namespace {

struct CriterionResult {
    int id;
    std::string name;
    bool pass = true;
    std::string detail;
};

std::vector<CriterionResult> g_results;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
    g_results.push_back({id, name, pass, detail});
    std::cout << (pass ? "[PASS] " : "[FAIL] ") << "criterion " << id << ": " << name << " — "
              << detail << std::endl;
}

class Timer {
public:
    Timer() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

std::string fmt(double v) {
    std::ostringstream out;
    out.precision(4);
    out << v;
    return out.str();
}

// ---------------------------------------------------------------------------
// Bundle parsing
// ---------------------------------------------------------------------------

struct TraceRow {
    double t = 0.0;
    double energy = 0.0;
    double sw_gap = 0.0;
};

std::vector<TraceRow> read_trace(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("missing trace " + path.string());
    std::vector<TraceRow> rows;
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        TraceRow row;
        int step;
        double wall;
        if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%lf", &step, &row.t, &row.energy,
                        &row.sw_gap, &wall) == 5)
            rows.push_back(row);
    }
    return rows;
}

std::map<std::string, std::string> read_summary(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("missing summary " + path.string());
    std::map<std::string, std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find(" = ");
        if (eq != std::string::npos) out[line.substr(0, eq)] = line.substr(eq + 3);
    }
    return out;
}

double summary_value(const std::map<std::string, std::string>& summary, const std::string& key) {
    auto it = summary.find(key);
    if (it == summary.end()) throw std::runtime_error("summary key missing: " + key);
    return std::strtod(it->second.c_str(), nullptr);
}

std::string file_without_wall_column(const fs::path& path) {
    std::ifstream in(path);
    std::ostringstream out;
    std::string line;
    bool trace = path.filename().string().rfind("energy_trace", 0) == 0;
    while (std::getline(in, line)) {
        if (trace) {
            const auto last = line.rfind(',');
            out << line.substr(0, last) << "\n";
        } else {
            out << line << "\n";
        }
    }
    return out.str();
}

// flows collected for the monotonicity / optimality-gap criteria
struct FlowRecord {
    std::string name;
    double tau;
    std::vector<TraceRow> trace;
};

std::vector<FlowRecord> g_flows;

int run_bundle(const std::string& config_text, const fs::path& out_dir) {
    ExperimentConfig cfg = ExperimentConfig::from_text(config_text);
    cfg.out_dir = out_dir.string();
    return run_experiment(cfg);
}

// ---------------------------------------------------------------------------
// Criteria 1-3: estimator closed forms
// ---------------------------------------------------------------------------

void criterion_1_closed_form_sw() {
    Timer timer;
    Rng ra(1001), rb(1002);
    const GaussianMeasure a(VectorXd::Zero(2), MatrixXd::Identity(2, 2));
    VectorXd shifted(2);
    shifted << 1, 0;
    const GaussianMeasure b(shifted, MatrixXd::Identity(2, 2));
    const ParticleCloud sa = sample_gaussian(a, 10000, ra);
    const ParticleCloud sb = sample_gaussian(b, 10000, rb);
    const ProjectionSet p = sample_unit_sphere(2000, 2, 1003);
    const SwEstimate est = sw2_mc(sa, sb, p);
    const double elapsed = timer.seconds();
    const bool pass = std::abs(est.value - 0.5) <= 0.05 && elapsed < 10.0;
    report(1, "closed-form SW agreement", pass,
           "sw2=" + fmt(est.value) + " (target 0.5 +/- 0.05), " + fmt(elapsed) + " s");
}

void criterion_2_line_identity() {
    Timer timer;
    const Eigen::Index d = 5;
    bool pass = true;
    std::string detail;
    for (std::uint64_t seed : {11u, 12u, 13u}) {
        Rng local(seed);
        VectorXd u = swtest::random_vector(d, local);
        u /= u.norm();
        const VectorXd c = swtest::random_vector(d, local);
        const VectorXd ta = swtest::random_vector(80, local, 2.0);
        const VectorXd tb = swtest::random_vector(80, local, 1.3);
        const MatrixXd pa = VectorXd::Ones(80) * c.transpose() + ta * u.transpose();
        const MatrixXd pb = VectorXd::Ones(80) * c.transpose() + tb * u.transpose();
        const ProjectionSet p = sample_unit_sphere(5000, d, seed * 17);
        const SwEstimate est = sw2_mc(ParticleCloud(pa), ParticleCloud(pb), p);
        const double w2_line = w2_1d_uniform_sorted(ta, tb);
        const double err = std::abs(est.value * static_cast<double>(d) - w2_line);
        const double band = 3.0 * static_cast<double>(d) * est.std_error;
        if (err > band) pass = false;
        detail += fmt(err) + "<=" + fmt(band) + " ";
    }
    const double elapsed = timer.seconds();
    pass = pass && elapsed < 10.0;
    report(2, "line-supported identity d*SW2 = W2", pass, detail + fmt(elapsed) + " s");
}

void criterion_3_sphere_moment() {
    const ProjectionSet p = sample_unit_sphere(100000, 3, 2024);
    const MatrixXd second = p.directions().transpose() * p.directions() / 100000.0;
    const double err = (second - MatrixXd::Identity(3, 3) / 3.0).cwiseAbs().maxCoeff();
    report(3, "sphere second moment I/d", err < 0.01, "max entry error " + fmt(err));
}

// ---------------------------------------------------------------------------
// Criterion 4: gradient oracles
// ---------------------------------------------------------------------------

struct GradCheck {
    int count = 0;
    double worst = 0.0;
    bool pass = true;

    void add(double rel) {
        ++count;
        worst = std::max(worst, rel);
        if (!(rel <= 1e-5)) pass = false;
    }
};

void criterion_4_gradient_oracles() {
    Timer timer;
    GradCheck check;

    auto flat_rel = [](const MatrixXd& analytic, const VectorXd& fd) {
        const VectorXd a = Eigen::Map<const VectorXd>(analytic.data(), analytic.size());
        return (a - fd).norm() / std::max(fd.norm(), 1e-12);
    };

    // SW gradient w.r.t. positions, equal-size uniform path
    for (std::uint64_t seed : {21u, 22u, 23u, 24u, 25u}) {
        Rng rng(seed);
        const Eigen::Index n = 4 + static_cast<Eigen::Index>(seed % 3);
        const Eigen::Index d = 2 + static_cast<Eigen::Index>(seed % 2);
        const MatrixXd x0 = swtest::random_matrix(n, d, rng);
        const ParticleCloud target(swtest::random_matrix(n, d, rng));
        const ProjectionSet p = sample_unit_sphere(8, d, seed + 100);
        MatrixXd grad;
        sw2_value_and_grad_positions(ParticleCloud(x0), target, p, QuantileGrid(), grad);
        auto f = [&](const VectorXd& flat) {
            MatrixXd pts = Eigen::Map<const MatrixXd>(flat.data(), n, d);
            return sw2_mc(ParticleCloud(pts), target, p).value;
        };
        check.add(flat_rel(grad, finite_diff_grad(
                                     f, Eigen::Map<const VectorXd>(x0.data(), x0.size()), 1e-5)));
    }

    // SW gradient w.r.t. positions through the rectangle method (grid target)
    for (std::uint64_t seed : {31u, 32u, 33u, 34u}) {
        Rng rng(seed);
        const Eigen::Index n = 5;
        const MatrixXd x0 = swtest::random_matrix(n, 2, rng);
        const GridMeasure target(swtest::random_matrix(4, 2, rng),
                                 swtest::random_interior_simplex(4, rng), 1.0);
        const ProjectionSet p = sample_unit_sphere(8, 2, seed + 200);
        const QuantileGrid q(64);
        MatrixXd grad;
        sw2_value_and_grad_positions(ParticleCloud(x0), target, p, q, grad);
        auto f = [&](const VectorXd& flat) {
            MatrixXd pts = Eigen::Map<const MatrixXd>(flat.data(), n, 2);
            return sw2_mc(ParticleCloud(pts), target, p, q).value;
        };
        check.add(flat_rel(grad, finite_diff_grad(
                                     f, Eigen::Map<const VectorXd>(x0.data(), x0.size()), 1e-6)));
    }

    // SW gradient w.r.t. grid weights on simplex-tangent directions, against
    // the exact-integral oracle
    {
        int done = 0;
        for (std::uint64_t attempt = 41; done < 4 && attempt < 90; ++attempt) {
            Rng rng(attempt);
            const Eigen::Index n = 3 + static_cast<Eigen::Index>(attempt % 3);
            const MatrixXd support = swtest::random_matrix(n, 1, rng, 2.0);
            const VectorXd w = swtest::random_interior_simplex(n, rng);
            const MatrixXd tgt = swtest::random_matrix(2, 1, rng, 2.0);
            const VectorXd tw = swtest::random_interior_simplex(2, rng);
            double margin = 1.0;
            double ca = 0.0;
            for (Eigen::Index i = 0; i + 1 < n; ++i) {
                ca += w(i);
                margin = std::min(margin, std::abs(ca - tw(0)));
            }
            if (margin < 1e-3) continue;
            ++done;
            const ProjectionSet p = sample_unit_sphere(4, 1, attempt + 300);
            const GridMeasure grid(support, w, 1.0);
            const GridMeasure target(tgt, tw, 1.0);
            const VectorXd analytic = grad_sw2_weights(grid, target, p);
            auto f = [&](const VectorXd& weights) {
                return swtest::exact_sw2_weighted(support, weights, tgt, tw, p);
            };
            VectorXd dir = swtest::random_vector(n, rng);
            dir.array() -= dir.mean();
            dir /= dir.norm();
            const double h = 1e-6;
            const double fd = (f(w + h * dir) - f(w - h * dir)) / (2.0 * h);
            check.add(std::abs(analytic.dot(dir) - fd) / std::max(std::abs(fd), 1e-6));
        }
    }

    // potential energy (cloud and grid-tangent)
    for (std::uint64_t seed : {51u, 52u}) {
        Rng rng(seed);
        const QuadraticPotential v(swtest::random_spd(3, rng), swtest::random_vector(3, rng));
        const MatrixXd x0 = swtest::random_matrix(5, 3, rng);
        const MatrixXd grad = potential_grad_positions(v, ParticleCloud(x0));
        auto f = [&](const VectorXd& flat) {
            MatrixXd pts = Eigen::Map<const MatrixXd>(flat.data(), 5, 3);
            return potential_value(v, ParticleCloud(pts));
        };
        check.add(flat_rel(grad, finite_diff_grad(
                                     f, Eigen::Map<const VectorXd>(x0.data(), x0.size()))));
    }
    {
        Rng rng(53);
        const QuadraticPotential v(swtest::random_spd(2, rng), swtest::random_vector(2, rng));
        const MatrixXd support = swtest::random_matrix(6, 2, rng);
        const VectorXd w = swtest::random_interior_simplex(6, rng);
        const VectorXd grad = potential_grad_weights(v, GridMeasure(support, w, 1.0));
        VectorXd dir = swtest::random_vector(6, rng);
        dir.array() -= dir.mean();
        dir /= dir.norm();
        const double h = 1e-6;
        const double fd = (potential_value(v, GridMeasure(support, w + h * dir, 1.0)) -
                           potential_value(v, GridMeasure(support, w - h * dir, 1.0))) /
                          (2.0 * h);
        check.add(std::abs(grad.dot(dir) - fd) / std::max(std::abs(fd), 1e-6));
    }

    // interaction energy, smooth and singular kernels
    for (const auto& [seed, kernel] :
         std::vector<std::pair<std::uint64_t, PowerKernel>>{{61u, PowerKernel(4.0, 2.0)},
                                                            {62u, PowerKernel(2.0, 0.0)}}) {
        Rng rng(seed);
        const MatrixXd x0 = swtest::random_matrix(5, 2, rng);
        const MatrixXd grad = interaction_grad_positions(kernel, ParticleCloud(x0));
        auto f = [&](const VectorXd& flat) {
            MatrixXd pts = Eigen::Map<const MatrixXd>(flat.data(), 5, 2);
            return interaction_value(kernel, ParticleCloud(pts));
        };
        check.add(flat_rel(grad, finite_diff_grad(
                                     f, Eigen::Map<const VectorXd>(x0.data(), x0.size()))));
    }
    {
        Rng rng(63);
        const PowerKernel kernel(4.0, 2.0);
        const MatrixXd support = swtest::random_matrix(5, 2, rng);
        const VectorXd w = swtest::random_interior_simplex(5, rng);
        const VectorXd grad = interaction_grad_weights(kernel, GridMeasure(support, w, 1.0));
        VectorXd dir = swtest::random_vector(5, rng);
        dir.array() -= dir.mean();
        dir /= dir.norm();
        const double h = 1e-6;
        const double fd =
            (interaction_value(kernel, GridMeasure(support, w + h * dir, 1.0)) -
             interaction_value(kernel, GridMeasure(support, w - h * dir, 1.0))) /
            (2.0 * h);
        check.add(std::abs(grad.dot(dir) - fd) / std::max(std::abs(fd), 1e-6));
    }

    // grid entropy
    {
        Rng rng(64);
        MatrixXd support(4, 1);
        support << 0, 1, 2, 3;
        const VectorXd w = swtest::random_interior_simplex(4, rng);
        const double l = 0.4;
        const VectorXd grad = entropy_grid_grad(GridMeasure(support, w, l));
        VectorXd dir = swtest::random_vector(4, rng);
        dir.array() -= dir.mean();
        dir /= dir.norm();
        const double h = 1e-6;
        const double fd = (entropy_grid_value(GridMeasure(support, w + h * dir, l)) -
                           entropy_grid_value(GridMeasure(support, w - h * dir, l))) /
                          (2.0 * h);
        check.add(std::abs(grad.dot(dir) - fd) / std::max(std::abs(fd), 1e-6));
    }

    // SW-to-target functional, cloud (lambda = 0) and grid (lambda > 0)
    {
        Rng rng(65);
        const ParticleCloud target(swtest::random_matrix(6, 2, rng));
        const MatrixXd x0 = swtest::random_matrix(6, 2, rng);
        const ProjectionSet p = sample_unit_sphere(8, 2, 365);
        const MatrixXd grad = sw_to_target_grad_positions(target, 0.0, ParticleCloud(x0), p);
        auto f = [&](const VectorXd& flat) {
            MatrixXd pts = Eigen::Map<const MatrixXd>(flat.data(), 6, 2);
            return sw_to_target_value(target, 0.0, ParticleCloud(pts), p);
        };
        check.add(flat_rel(grad, finite_diff_grad(
                                     f, Eigen::Map<const VectorXd>(x0.data(), x0.size()), 1e-5)));
    }
    {
        Rng rng(66);
        MatrixXd support(4, 1);
        support << -1.5, -0.5, 0.5, 1.5;
        const VectorXd w = swtest::random_interior_simplex(4, rng);
        MatrixXd tgt(2, 1);
        tgt << -0.8, 0.9;
        VectorXd tw(2);
        tw << 0.45, 0.55;
        const double lambda = 0.3, l = 0.5;
        const ProjectionSet p = sample_unit_sphere(4, 1, 366);
        const GridMeasure target(tgt, tw, l);
        const VectorXd grad =
            sw_to_target_grad_weights(target, lambda, GridMeasure(support, w, l), p);
        auto f = [&](const VectorXd& weights) {
            return 0.5 * swtest::exact_sw2_weighted(support, weights, tgt, tw, p) +
                   lambda * entropy_grid_value(GridMeasure(support, weights, l));
        };
        VectorXd dir = swtest::random_vector(4, rng);
        dir.array() -= dir.mean();
        dir /= dir.norm();
        const double h = 1e-6;
        const double fd = (f(w + h * dir) - f(w - h * dir)) / (2.0 * h);
        check.add(std::abs(grad.dot(dir) - fd) / std::max(std::abs(fd), 1e-6));
    }

    // exact W2 functional
    {
        Rng rng(67);
        const MatrixXd x0 = swtest::random_matrix(5, 2, rng);
        const ParticleCloud target(swtest::random_matrix(5, 2, rng));
        const MatrixXd grad = w2_to_target_exact_grad_positions(ParticleCloud(x0), target);
        auto f = [&](const VectorXd& flat) {
            MatrixXd pts = Eigen::Map<const MatrixXd>(flat.data(), 5, 2);
            return w2_to_target_exact_value(ParticleCloud(pts), target);
        };
        check.add(flat_rel(grad, finite_diff_grad(
                                     f, Eigen::Map<const VectorXd>(x0.data(), x0.size()))));
    }

    const double elapsed = timer.seconds();
    const bool pass = check.pass && check.count >= 20 && elapsed < 30.0;
    report(4, "analytic gradients match finite differences", pass,
           std::to_string(check.count) + " instances, worst rel err " + fmt(check.worst) +
               ", " + fmt(elapsed) + " s");
}

// ---------------------------------------------------------------------------
// Criteria 7-12: flows through the experiment driver
// ---------------------------------------------------------------------------

void criterion_7_gaussian_stationary(const fs::path& base) {
    bool pass = true;
    std::string detail;
    for (std::uint64_t spd_seed : {1u, 2u, 3u}) {
        Timer timer;
        const fs::path dir = base / ("gaussian_grid_" + std::to_string(spd_seed));
        const std::string config =
            "experiment = gaussian-flow\n"
            "potential_spd_seed = " + std::to_string(spd_seed) + "\n" +
            "seed = " + std::to_string(42 + spd_seed) + "\n";
        const int rc = run_bundle(config, dir);
        const double elapsed = timer.seconds();
        if (rc != 0) {
            pass = false;
            detail += "seed " + std::to_string(spd_seed) + ": abort; ";
            continue;
        }
        const auto summary = read_summary(dir / "summary.txt");
        const double initial = summary_value(summary, "symkl_initial");
        const double final_kl = summary_value(summary, "symkl_final");
        g_flows.push_back({"gaussian-grid-" + std::to_string(spd_seed), 0.1,
                           read_trace(dir / "energy_trace.csv")});
        const bool ok = final_kl < 0.1 && final_kl < 0.1 * initial && elapsed < 300.0;
        if (!ok) pass = false;
        detail += "seed " + std::to_string(spd_seed) + ": " + fmt(initial) + "->" +
                  fmt(final_kl) + " (" + fmt(elapsed) + " s); ";
    }
    report(7, "grid Fokker-Planck flow reaches the stationary Gaussian", pass, detail);
}

void criterion_8_ou_mean(const fs::path& base) {
    Timer timer;
    const fs::path dir = base / "ou_particles";
    const std::string config =
        "experiment = gaussian-flow\n"
        "parameterization = particles\n"
        "n_particles = 500\n"
        "potential_a_iso = 1\n"
        "potential_mean = -0.4 0.7\n"
        "init_mean = 1 -0.5\n"
        "seed = 77\n";
    const int rc = run_bundle(config, dir);
    const double elapsed = timer.seconds();
    if (rc != 0) {
        report(8, "dilated OU mean dynamics", false, "numerical abort");
        return;
    }
    const auto summary = read_summary(dir / "summary.txt");
    const double worst = summary_value(summary, "max_mean_error_vs_ou");
    g_flows.push_back({"ou-particles", 0.05, read_trace(dir / "energy_trace.csv")});
    const bool pass = worst < 0.05 && elapsed < 120.0;
    report(8, "dilated OU mean dynamics", pass,
           "max mean error " + fmt(worst) + " (< 0.05), " + fmt(elapsed) + " s");
}

void criterion_9_aggregation_ring(const fs::path& base) {
    Timer timer;
    const fs::path dir = base / "ring";
    const int rc = run_bundle("experiment = aggregation\nseed = 77\n", dir);
    const double elapsed = timer.seconds();
    if (rc != 0) {
        report(9, "aggregation ring radius", false, "numerical abort");
        return;
    }
    const auto summary = read_summary(dir / "summary.txt");
    const double mean = summary_value(summary, "radius_mean");
    const double stdev = summary_value(summary, "radius_std");
    g_flows.push_back({"ring", 0.05, read_trace(dir / "energy_trace.csv")});
    const bool pass = mean >= 0.45 && mean <= 0.55 && stdev < 0.05 && elapsed < 600.0;
    // The kernel's uniform ring balances at 3R^3 = R, i.e. R = 0.5774; the
    // quoted 0.5 band cannot be met by a faithful implementation.
    report(9, "aggregation ring radius", pass,
           "mean " + fmt(mean) + " (band [0.45,0.55]; force balance gives 1/sqrt(3)=" +
               fmt(1.0 / std::sqrt(3.0)) + "), std " + fmt(stdev) + " (< 0.05), " +
               fmt(elapsed) + " s");
}

void criterion_10_torus(const fs::path& base) {
    Timer timer;
    const fs::path dir = base / "torus";
    const int rc = run_bundle("experiment = aggregation-drift\nseed = 77\n", dir);
    const double elapsed = timer.seconds();
    if (rc != 0) {
        report(10, "aggregation-drift torus radii", false, "numerical abort");
        return;
    }
    const auto summary = read_summary(dir / "summary.txt");
    const double p05 = summary_value(summary, "radius_p05");
    const double p95 = summary_value(summary, "radius_p95");
    g_flows.push_back({"torus", 0.05, read_trace(dir / "energy_trace.csv")});
    const bool pass =
        p05 >= 0.45 && p05 <= 0.58 && p95 >= 1.05 && p95 <= 1.18 && elapsed < 600.0;
    report(10, "aggregation-drift torus radii", pass,
           "p05 " + fmt(p05) + " in [0.45,0.58], p95 " + fmt(p95) + " in [1.05,1.18], " +
               fmt(elapsed) + " s");
}

void criterion_11_disk(const fs::path& base) {
    Timer timer;
    const fs::path dir = base / "disk";
    const int rc = run_bundle("experiment = disk\nseed = 77\n", dir);
    const double elapsed = timer.seconds();
    if (rc != 0) {
        report(11, "disk steady state", false, "numerical abort");
        return;
    }
    const auto summary = read_summary(dir / "summary.txt");
    const double max_radius = summary_value(summary, "radius_max");
    g_flows.push_back({"disk", 0.05, read_trace(dir / "energy_trace.csv")});
    const bool pass = max_radius >= 0.95 && max_radius <= 1.1;
    report(11, "disk steady state", pass,
           "max radius " + fmt(max_radius) + " in [0.95,1.1], " + fmt(elapsed) + " s");
}

void criterion_12_exact_w2_trajectories(const fs::path& base) {
    Timer timer;
    const fs::path dir = base / "compare";
    const std::string config =
        "experiment = compare-trajectories\n"
        "init_mean = 2 2\n"
        "seed = 6\n"
        "target_seed = 1\n";
    const int rc = run_bundle(config, dir);
    const double elapsed = timer.seconds();
    if (rc != 0) {
        report(12, "exact-W2 trajectory experiment", false, "numerical abort");
        return;
    }
    const auto summary = read_summary(dir / "summary.txt");
    const double f0 = summary_value(summary, "f_initial");
    const double f_flow = summary_value(summary, "f_final_swjko");
    const double f_direct = summary_value(summary, "f_final_direct");
    const double h_flow = summary_value(summary, "hausdorff_swjko");
    const double h_direct = summary_value(summary, "hausdorff_direct");
    g_flows.push_back({"compare-swjko", 0.1, read_trace(dir / "energy_trace.csv")});
    const bool pass = f_flow <= 1e-3 * f0 && f_direct <= 1e-3 * f0 && h_flow < 0.05 &&
                      h_direct < 0.05;
    report(12, "exact-W2 trajectory experiment", pass,
           "F: " + fmt(f0) + " -> " + fmt(f_flow) + " (jko) / " + fmt(f_direct) +
               " (direct); Hausdorff " + fmt(h_flow) + " / " + fmt(h_direct) + ", " +
               fmt(elapsed) + " s");
}

void criterion_5_monotonicity() {
    bool pass = true;
    double worst = -1e300;
    std::string worst_flow;
    for (const auto& flow : g_flows) {
        for (std::size_t k = 0; k + 1 < flow.trace.size(); ++k) {
            const double delta = flow.trace[k + 1].energy - flow.trace[k].energy;
            if (delta > worst) {
                worst = delta;
                worst_flow = flow.name;
            }
            if (delta > 1e-6) pass = false;
        }
    }
    report(5, "energy monotone along every acceptance flow", pass,
           std::to_string(g_flows.size()) + " flows, worst step delta " + fmt(worst) + " (" +
               worst_flow + ")");
}

void criterion_6_optimality_gap() {
    bool pass = true;
    int violations = 0;
    for (const auto& flow : g_flows) {
        for (std::size_t k = 0; k + 1 < flow.trace.size(); ++k) {
            const double decrease = flow.trace[k].energy - flow.trace[k + 1].energy;
            const double slack = 1e-4 * (1.0 + std::abs(flow.trace[k].energy));
            if (flow.trace[k + 1].sw_gap > 2.0 * flow.tau * decrease + slack) {
                pass = false;
                ++violations;
            }
        }
    }
    report(6, "optimality-gap inequality along every acceptance flow", pass,
           std::to_string(violations) + " violations across " +
               std::to_string(g_flows.size()) + " flows");
}

// ---------------------------------------------------------------------------
// Criterion 13: brute-force cross-checks
// ---------------------------------------------------------------------------

void criterion_13_oracle_crosschecks() {
    Rng rng(1313);
    double worst_simplex = 0.0;
    bool assignment_ok = true;
    for (int trial = 0; trial < 100; ++trial) {
        const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng.next_u64() % 7);
        const VectorXd v = swtest::random_vector(n, rng, 2.0);
        worst_simplex = std::max(
            worst_simplex,
            (simplex_project(v) - simplex_project_bruteforce(v)).cwiseAbs().maxCoeff());
    }
    for (int trial = 0; trial < 100; ++trial) {
        const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng.next_u64() % 6);
        const MatrixXd cost = swtest::random_matrix(n, n, rng);
        const AssignmentResult fast = solve_assignment(cost);
        const AssignmentResult brute = assignment_bruteforce(cost);
        if (std::abs(fast.cost - brute.cost) > 1e-12 * std::max(1.0, std::abs(brute.cost)))
            assignment_ok = false;
    }
    const bool pass = worst_simplex <= 1e-10 && assignment_ok;
    report(13, "simplex projection and assignment vs brute force", pass,
           "worst simplex deviation " + fmt(worst_simplex) + ", assignment exact: " +
               (assignment_ok ? "yes" : "no"));
}

// ---------------------------------------------------------------------------
// Criterion 14: ULA baseline
// ---------------------------------------------------------------------------

void criterion_14_ula(const fs::path& base) {
    Timer timer;
    const fs::path dir = base / "ula";
    const std::string config =
        "experiment = ula-baseline\n"
        "potential_a_iso = 1\n"
        "potential_mean = 0.3 -0.2\n"
        "seed = 5\n";
    const int rc = run_bundle(config, dir);
    const double elapsed = timer.seconds();
    if (rc != 0) {
        report(14, "ULA equilibrates to N(b, A^{-1})", false, "numerical abort");
        return;
    }
    const auto summary = read_summary(dir / "summary.txt");
    const double mean_err = summary_value(summary, "mean_error");
    const double cov_err = summary_value(summary, "cov_rel_error");
    const bool pass = mean_err < 0.05 && cov_err < 0.10;
    report(14, "ULA equilibrates to N(b, A^{-1})", pass,
           "mean error " + fmt(mean_err) + " (< 0.05), cov rel error " + fmt(cov_err) +
               " (< 0.10), " + fmt(elapsed) + " s");
}

// ---------------------------------------------------------------------------
// Criterion 15: determinism
// ---------------------------------------------------------------------------

void criterion_15_determinism(const fs::path& base) {
    const std::string config =
        "experiment = compare-trajectories\n"
        "init_mean = 2 2\n"
        "seed = 6\n"
        "target_seed = 1\n";
    const fs::path cfg_path = base / "determinism.cfg";
    {
        std::ofstream out(cfg_path);
        out << config;
    }
    const fs::path dir1 = base / "det1";
    const fs::path dir2 = base / "det2";

    bool ran_via_cli = false;
    const char* cli = std::getenv("SWFLOW_CLI");
    if (cli && *cli) {
        const std::string cmd1 = std::string("\"") + cli + "\" run --config " +
                                 cfg_path.string() + " --out " + dir1.string() +
                                 " > /dev/null";
        const std::string cmd2 = std::string("\"") + cli + "\" run --config " +
                                 cfg_path.string() + " --out " + dir2.string() +
                                 " > /dev/null";
        ran_via_cli = std::system(cmd1.c_str()) == 0 && std::system(cmd2.c_str()) == 0;
    }
    if (!ran_via_cli) {
        run_bundle(config, dir1);
        run_bundle(config, dir2);
    }

    bool pass = true;
    std::string mismatch;
    for (const char* name : {"energy_trace.csv", "energy_trace_direct.csv",
                             "final_measure.csv", "final_measure_direct.csv",
                             "target_measure.csv", "summary.txt", "config_echo.txt"}) {
        if (file_without_wall_column(dir1 / name) != file_without_wall_column(dir2 / name)) {
            pass = false;
            mismatch += std::string(name) + " ";
        }
    }
    report(15, "same seed reproduces traces byte-identically", pass,
           std::string(ran_via_cli ? "via CLI binary" : "via library") +
               (pass ? ", all files identical (wall-clock column excluded)"
                     : ", mismatch in: " + mismatch));
}

}  // namespace

int main() {
    const fs::path base = fs::temp_directory_path() / "swflow_acceptance";
    fs::remove_all(base);
    fs::create_directories(base);

    criterion_1_closed_form_sw();
    criterion_2_line_identity();
    criterion_3_sphere_moment();
    criterion_4_gradient_oracles();
    criterion_7_gaussian_stationary(base);
    criterion_8_ou_mean(base);
    criterion_9_aggregation_ring(base);
    criterion_10_torus(base);
    criterion_11_disk(base);
    criterion_12_exact_w2_trajectories(base);
    criterion_5_monotonicity();
    criterion_6_optimality_gap();
    criterion_13_oracle_crosschecks();
    criterion_14_ula(base);
    criterion_15_determinism(base);

    std::sort(g_results.begin(), g_results.end(),
              [](const CriterionResult& a, const CriterionResult& b) { return a.id < b.id; });
    int failures = 0;
    std::cout << "\n=== acceptance summary ===\n";
    for (const auto& r : g_results) {
        std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << "criterion " << r.id << ": " << r.name
                  << "\n";
        if (!r.pass) ++failures;
    }
    std::cout << failures << " of " << g_results.size() << " criteria failing\n";
    return failures;
}
