#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "swflow/errors.hpp"
#include "swflow/functionals.hpp"
#include "swflow/measures.hpp"
#include "swflow/rng.hpp"
#include "swflow/sliced_wasserstein.hpp"

namespace swflow {

/// Euclidean projection onto the probability simplex, O(N log N).
inline VectorXd simplex_project(const VectorXd& v) {
    if (!v.allFinite()) throw std::invalid_argument("simplex_project: input must be finite");
    const Eigen::Index n = v.size();
    if (n == 0) throw std::invalid_argument("simplex_project: empty input");
    std::vector<double> u(v.data(), v.data() + n);
    std::sort(u.begin(), u.end(), std::greater<double>());
    double css = 0.0;
    double shift = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
        css += u[static_cast<std::size_t>(k)];
        const double candidate = (1.0 - css) / static_cast<double>(k + 1);
        if (u[static_cast<std::size_t>(k)] + candidate > 0.0) shift = candidate;
    }
    VectorXd out = (v.array() + shift).cwiseMax(0.0);
    out /= out.sum();
    return out;
}

enum class InnerMethod { plain, momentum, adaptive };

inline InnerMethod inner_method_from_string(const std::string& s) {
    if (s == "plain") return InnerMethod::plain;
    if (s == "momentum") return InnerMethod::momentum;
    if (s == "adaptive") return InnerMethod::adaptive;
    throw std::invalid_argument("unknown inner method: " + s);
}

inline const char* to_string(InnerMethod m) {
    switch (m) {
        case InnerMethod::plain: return "plain";
        case InnerMethod::momentum: return "momentum";
        default: return "adaptive";
    }
}

struct SolverConfig {
    double tau = 0.1;                   // proximal step size
    int n_outer = 10;                   // K
    int n_inner = 100;                  // N_e epochs per step
    Eigen::Index n_projections = 64;    // L
    Eigen::Index quantile_m = 100;      // M
    double inner_step = 1e-2;
    double inner_step_decay = 1.0;  // per-epoch multiplier; < 1 settles each step
    InnerMethod inner_method = InnerMethod::adaptive;
    double momentum_beta = 0.9;
    bool dilation = false;              // multiply the SW term by d
    bool warm_start = true;
    bool freeze_projections = false;    // one projection set per outer step
    std::uint64_t seed = 0;

    void validate() const {
        if (!(tau > 0.0)) throw std::invalid_argument("SolverConfig: tau must be > 0");
        if (n_outer < 0) throw std::invalid_argument("SolverConfig: n_outer must be >= 0");
        if (n_inner < 1) throw std::invalid_argument("SolverConfig: n_inner must be >= 1");
        if (n_projections < 1)
            throw std::invalid_argument("SolverConfig: n_projections must be >= 1");
        if (quantile_m < 1) throw std::invalid_argument("SolverConfig: quantile_m must be >= 1");
        if (!(inner_step > 0.0))
            throw std::invalid_argument("SolverConfig: inner_step must be > 0");
        if (!(inner_step_decay > 0.0 && inner_step_decay <= 1.0))
            throw std::invalid_argument("SolverConfig: inner_step_decay must be in (0,1]");
        if (!(momentum_beta >= 0.0 && momentum_beta < 1.0))
            throw std::invalid_argument("SolverConfig: momentum_beta must be in [0,1)");
    }
};

/// Discrete flow: K+1 snapshots with per-step energy, SW gap, and timing.
template <class M>
struct Trajectory {
    std::vector<M> snapshots;
    std::vector<double> energy;    // F(mu_k)
    std::vector<double> sw_gap;    // SW_2^2(mu_k, mu_{k+1})
    std::vector<double> wall_ms;   // per completed step
    double tau = 0.0;
    bool dilated = false;
    std::uint64_t seed = 0;
    std::string mode;              // "sw-jko" or "direct"
    bool aborted = false;
    std::string abort_reason;

    double time_at(std::size_t k) const { return tau * static_cast<double>(k); }
};

namespace detail {

template <class State>
struct FirstOrderUpdater {
    InnerMethod method;
    double lr;
    double beta;
    int t = 0;
    State m;
    State v;

    FirstOrderUpdater(InnerMethod method_, double lr_, double beta_, const State& shape)
        : method(method_), lr(lr_), beta(beta_),
          m(State::Zero(shape.rows(), shape.cols())),
          v(State::Zero(shape.rows(), shape.cols())) {}

    void step(State& x, const State& g) {
        switch (method) {
            case InnerMethod::plain:
                x -= lr * g;
                break;
            case InnerMethod::momentum:
                m = beta * m + g;
                x -= lr * m;
                break;
            case InnerMethod::adaptive: {
                constexpr double beta2 = 0.999;
                constexpr double eps = 1e-8;
                ++t;
                m = beta * m + (1.0 - beta) * g;
                v = beta2 * v + (1.0 - beta2) * g.cwiseProduct(g);
                const double c1 = 1.0 / (1.0 - std::pow(beta, t));
                const double c2 = 1.0 / (1.0 - std::pow(beta2, t));
                x.array() -= lr * (c1 * m.array()) / ((c2 * v.array()).sqrt() + eps);
                break;
            }
        }
    }
};

// Parameterization adapters: what the inner loop optimizes and how a state
// turns back into a measure.
struct CloudParam {
    using Measure = ParticleCloud;
    using State = MatrixXd;

    static State initial_state(const Measure& prev, bool /*warm_start*/) {
        // A copy of mu_k is the only sensible initialization for particles.
        return prev.points();
    }
    static Measure to_measure(const State& s, const Measure& /*proto*/) {
        return ParticleCloud(s);
    }
    static double sw_value_and_grad(const Measure& current, const Measure& prev,
                                    const ProjectionSet& p, const QuantileGrid& q,
                                    State& grad) {
        return sw2_value_and_grad_positions(current, prev, p, q, grad);
    }
    static double energy_value_and_grad(const Energy& f, const Measure& current, State& grad) {
        return f.value_and_grad_positions(current, grad);
    }
    static void post_update(State& /*s*/) {}
    static bool supported(const Energy& f) { return f.supports_clouds(); }
};

struct GridParam {
    using Measure = GridMeasure;
    using State = VectorXd;

    static State initial_state(const Measure& prev, bool warm_start) {
        if (warm_start) return prev.weights();
        return VectorXd::Constant(prev.size(), 1.0 / static_cast<double>(prev.size()));
    }
    static Measure to_measure(const State& s, const Measure& proto) {
        return proto.with_weights(s);
    }
    static double sw_value_and_grad(const Measure& current, const Measure& prev,
                                    const ProjectionSet& p, const QuantileGrid& q,
                                    State& grad) {
        return sw2_value_and_grad_weights(current, prev, p, q, grad);
    }
    static double energy_value_and_grad(const Energy& f, const Measure& current, State& grad) {
        return f.value_and_grad_weights(current, grad);
    }
    static void post_update(State& s) { s = simplex_project(s); }
    static bool supported(const Energy& f) { return f.supports_grids(); }
};

template <class M> struct param_of;
template <> struct param_of<ParticleCloud> { using type = CloudParam; };
template <> struct param_of<GridMeasure> { using type = GridParam; };

struct StepStatus {
    bool ok = true;
    std::string reason;
};

/// One inner optimization: minimize  prox_weight * SW_2^2(mu, prev) + F(mu)
/// (prox_weight = 0 drops the proximal term, i.e. direct minimization).
template <class Param>
StepStatus inner_solve(const typename Param::Measure& prev, Energy& f, const SolverConfig& cfg,
                       std::uint64_t step_seed, bool with_prox,
                       typename Param::Measure& out) {
    using State = typename Param::State;
    const Eigen::Index d = prev.dimension();
    const double prox_weight =
        with_prox ? (cfg.dilation ? static_cast<double>(d) : 1.0) / (2.0 * cfg.tau) : 0.0;
    const QuantileGrid q(cfg.quantile_m);

    State state = Param::initial_state(prev, cfg.warm_start);
    FirstOrderUpdater<State> updater(cfg.inner_method, cfg.inner_step, cfg.momentum_beta, state);
    typename Param::Measure current = Param::to_measure(state, prev);
    typename Param::Measure last_good = current;

    auto abort = [&](int epoch, const std::string& why) {
        out = last_good;
        StepStatus status;
        status.ok = false;
        status.reason = why + " at epoch " + std::to_string(epoch);
        return status;
    };

    for (int e = 0; e < cfg.n_inner; ++e) {
        const std::uint64_t epoch_seed =
            derive_seed(step_seed, cfg.freeze_projections ? 0 : static_cast<std::uint64_t>(e) + 1);

        State grad = State::Zero(state.rows(), state.cols());
        double j_value = 0.0;
        try {
            if (with_prox) {
                const ProjectionSet p = sample_unit_sphere(cfg.n_projections, d, epoch_seed);
                State sw_grad;
                const double sw_val = Param::sw_value_and_grad(current, prev, p, q, sw_grad);
                j_value += prox_weight * sw_val;
                grad += prox_weight * sw_grad;
            }
            f.resample(derive_seed(epoch_seed, 0x5AF));
            State f_grad;
            j_value += Param::energy_value_and_grad(f, current, f_grad);
            grad += f_grad;
        } catch (const numeric_error& e_num) {
            return abort(e, std::string("inner objective failed (") + e_num.what() + ")");
        }
        if (!std::isfinite(j_value) || !grad.allFinite())
            return abort(e, "non-finite inner objective");
        last_good = current;  // J is finite here

        updater.lr = cfg.inner_step * std::pow(cfg.inner_step_decay, e);
        updater.step(state, grad);
        Param::post_update(state);
        if (!state.allFinite()) return abort(e, "non-finite iterate");
        current = Param::to_measure(state, prev);
    }
    out = current;
    return StepStatus{};
}

template <class M>
Trajectory<M> run_loop(const M& mu0, Energy& f, const SolverConfig& cfg, bool with_prox) {
    using Param = typename param_of<M>::type;
    cfg.validate();
    if (!Param::supported(f))
        throw capability_error("run_flow: energy does not support this parameterization");

    Trajectory<M> traj;
    traj.tau = cfg.tau;
    traj.dilated = cfg.dilation;
    traj.seed = cfg.seed;
    traj.mode = with_prox ? "sw-jko" : "direct";
    traj.snapshots.push_back(mu0);

    const QuantileGrid q(cfg.quantile_m);
    auto trace_energy = [&](const M& m, int k) {
        f.resample(derive_seed(cfg.seed, 0x7ace0000ULL + static_cast<std::uint64_t>(k)));
        return f.value(m);
    };
    traj.energy.push_back(trace_energy(mu0, 0));

    for (int k = 0; k < cfg.n_outer; ++k) {
        const auto start = std::chrono::steady_clock::now();
        const std::uint64_t step_seed =
            derive_seed(cfg.seed, static_cast<std::uint64_t>(k) + 1);
        M next = traj.snapshots.back();
        const StepStatus status =
            inner_solve<Param>(traj.snapshots.back(), f, cfg, step_seed, with_prox, next);
        const auto stop = std::chrono::steady_clock::now();
        const double ms =
            std::chrono::duration_cast<std::chrono::duration<double, std::milli>>(stop - start)
                .count();

        if (!status.ok) {
            traj.aborted = true;
            traj.abort_reason = "step " + std::to_string(k) + ": " + status.reason;
            break;
        }

        const ProjectionSet gap_p = sample_unit_sphere(
            cfg.n_projections, mu0.dimension(),
            derive_seed(cfg.seed, 0x6a900000ULL + static_cast<std::uint64_t>(k)));
        traj.sw_gap.push_back(sw2_mc(traj.snapshots.back(), next, gap_p, q).value);
        traj.snapshots.push_back(next);
        traj.energy.push_back(trace_energy(next, k + 1));
        traj.wall_ms.push_back(ms);
    }
    return traj;
}

}  // namespace detail

/// One SW-JKO step: inner-optimize  SW_2^2(mu, mu_k)/(2 tau) + F(mu)
/// (the SW term scaled by d when cfg.dilation is set), warm-started from a
/// copy of mu_k. Throws numeric_error if the inner loop diverges.
template <class M>
M sw_jko_step(const M& mu_k, Energy& f, const SolverConfig& cfg, std::uint64_t step_seed) {
    using Param = typename detail::param_of<M>::type;
    cfg.validate();
    if (!Param::supported(f))
        throw capability_error("sw_jko_step: energy does not support this parameterization");
    M out = mu_k;
    const detail::StepStatus status =
        detail::inner_solve<Param>(mu_k, f, cfg, step_seed, /*with_prox=*/true, out);
    if (!status.ok) throw numeric_error("sw_jko_step: " + status.reason);
    return out;
}

template <class M>
M sw_jko_step(const M& mu_k, Energy& f, const SolverConfig& cfg) {
    return sw_jko_step(mu_k, f, cfg, derive_seed(cfg.seed, 1));
}

/// Full SW-JKO flow. A diverging step truncates the trajectory and sets the
/// aborted flag instead of propagating garbage.
template <class M>
Trajectory<M> run_flow(const M& mu0, Energy& f, const SolverConfig& cfg) {
    return detail::run_loop(mu0, f, cfg, /*with_prox=*/true);
}

/// Plain gradient descent on F with the same inner machinery and epoch seeds
/// (no proximal term). Not a gradient flow; kept as a baseline.
template <class M>
Trajectory<M> direct_minimize(const M& mu0, Energy& f, const SolverConfig& cfg) {
    return detail::run_loop(mu0, f, cfg, /*with_prox=*/false);
}

/// Steps violating SW_2^2(mu_k, mu_{k+1}) <= 2 tau (F(mu_k) - F(mu_{k+1}))
/// up to slack 1e-4 (1 + |F(mu_k)|). Violations indicate an inner solver
/// that failed to make the proximal objective competitive with staying put.
template <class M>
std::vector<int> energy_gap_check(const Trajectory<M>& traj, double tau) {
    std::vector<int> violations;
    for (std::size_t k = 0; k < traj.sw_gap.size(); ++k) {
        const double decrease = traj.energy[k] - traj.energy[k + 1];
        const double slack = 1e-4 * (1.0 + std::abs(traj.energy[k]));
        if (traj.sw_gap[k] > 2.0 * tau * decrease + slack)
            violations.push_back(static_cast<int>(k));
    }
    return violations;
}

}  // namespace swflow
