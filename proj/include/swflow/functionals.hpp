#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cmath>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "swflow/assignment.hpp"
#include "swflow/errors.hpp"
#include "swflow/measures.hpp"
#include "swflow/sliced_wasserstein.hpp"

namespace swflow {

// ---------------------------------------------------------------------------
// Potentials
// ---------------------------------------------------------------------------

/// Differentiable potential V: R^d -> R.
class Potential {
public:
    virtual ~Potential() = default;
    virtual double value(const VectorXd& x) const = 0;
    virtual VectorXd gradient(const VectorXd& x) const = 0;
};

/// V(x) = (1/2) (x-b)^T A (x-b) with A symmetric positive-definite.
/// The Fokker-Planck flow of V + entropy is stationary at N(b, A^{-1}).
class QuadraticPotential final : public Potential {
public:
    QuadraticPotential(MatrixXd a, VectorXd center)
        : a_(std::move(a)), center_(std::move(center)) {
        if (a_.rows() != a_.cols() || a_.rows() != center_.size())
            throw std::invalid_argument("QuadraticPotential: shape mismatch");
        const double scale = std::max(1.0, a_.cwiseAbs().maxCoeff());
        if ((a_ - a_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
            throw std::invalid_argument("QuadraticPotential: A must be symmetric");
        Eigen::LLT<MatrixXd> llt(a_);
        if (llt.info() != Eigen::Success)
            throw std::invalid_argument("QuadraticPotential: A must be positive-definite");
    }

    double value(const VectorXd& x) const override {
        const VectorXd r = x - center_;
        return 0.5 * r.dot(a_ * r);
    }
    VectorXd gradient(const VectorXd& x) const override { return a_ * (x - center_); }

    const MatrixXd& matrix() const { return a_; }
    const VectorXd& center() const { return center_; }

    GaussianMeasure stationary() const {
        return GaussianMeasure(center_, a_.inverse());
    }

private:
    MatrixXd a_;
    VectorXd center_;
};

/// Radial log drift V(x) = -(alpha/beta) log ||x||, singular at the origin.
class LogRadialDrift final : public Potential {
public:
    LogRadialDrift(double alpha, double beta) : coeff_(alpha / beta) {
        if (!(beta != 0.0)) throw std::invalid_argument("LogRadialDrift: beta must be nonzero");
    }

    double value(const VectorXd& x) const override {
        const double r2 = x.squaredNorm();
        if (r2 == 0.0) throw numeric_error("LogRadialDrift: potential singular at the origin");
        return -0.5 * coeff_ * std::log(r2);
    }
    VectorXd gradient(const VectorXd& x) const override {
        const double r2 = x.squaredNorm();
        if (r2 == 0.0) throw numeric_error("LogRadialDrift: gradient singular at the origin");
        return (-coeff_ / r2) * x;
    }

private:
    double coeff_;
};

// ---------------------------------------------------------------------------
// Interaction kernels
// ---------------------------------------------------------------------------

/// Repulsive-attractive kernel W(x) = ||x||^a / a - ||x||^b / b for a > b >= 0,
/// with the convention ||x||^0 / 0 = log ||x||. The quartic (4,2) and log
/// (2,0) kernels of the experiments evaluate without pow() in the pair loops.
class PowerKernel {
public:
    PowerKernel(double a, double b) : a_(a), b_(b) {
        if (!(a > b) || b < 0.0)
            throw std::invalid_argument("PowerKernel: need exponents a > b >= 0");
        if (a <= 0.0) throw std::invalid_argument("PowerKernel: need a > 0");
        quartic_ = a_ == 4.0 && b_ == 2.0;
        log_ = a_ == 2.0 && b_ == 0.0;
    }

    double exponent_a() const { return a_; }
    double exponent_b() const { return b_; }
    bool singular_at_zero() const { return b_ == 0.0; }

    /// W at distance r > 0 (r = 0 allowed for nonsingular kernels).
    double value(double r) const { return value_from_r2(r * r); }

    /// W from the squared distance.
    double value_from_r2(double r2) const {
        if (quartic_) return 0.25 * r2 * r2 - 0.5 * r2;
        if (log_) return 0.5 * r2 - 0.5 * std::log(r2);
        return term(a_, r2) - term(b_, r2);
    }

    /// grad W(x) = factor(||x||) * x.
    double gradient_factor(double r) const { return gradient_factor_from_r2(r * r); }

    double gradient_factor_from_r2(double r2) const {
        if (quartic_) return r2 - 1.0;
        if (log_) return 1.0 - 1.0 / r2;
        return std::pow(r2, 0.5 * a_ - 1.0) - std::pow(r2, 0.5 * b_ - 1.0);
    }

private:
    static double term(double p, double r2) {
        if (p == 0.0) return 0.5 * std::log(r2);
        return std::pow(r2, 0.5 * p) / p;
    }

    double a_;
    double b_;
    bool quartic_ = false;
    bool log_ = false;
};

// ---------------------------------------------------------------------------
// Potential energy  V(mu) = integral of V d(mu)
// ---------------------------------------------------------------------------

namespace detail {

inline void check_potential_finite(double v, Eigen::Index i) {
    if (!std::isfinite(v)) {
        std::ostringstream msg;
        msg << "potential: non-finite value at support point " << i;
        throw numeric_error(msg.str());
    }
}

}  // namespace detail

inline double potential_value(const Potential& v, const ParticleCloud& mu) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < mu.size(); ++i) {
        const double vi = v.value(mu.points().row(i).transpose());
        detail::check_potential_finite(vi, i);
        acc += vi;
    }
    return acc / static_cast<double>(mu.size());
}

inline double potential_value(const Potential& v, const GridMeasure& mu) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < mu.size(); ++i) {
        const double vi = v.value(mu.support().row(i).transpose());
        detail::check_potential_finite(vi, i);
        acc += vi * mu.weights()(i);
    }
    return acc;
}

inline MatrixXd potential_grad_positions(const Potential& v, const ParticleCloud& mu) {
    MatrixXd grad(mu.size(), mu.dimension());
    const double inv_n = 1.0 / static_cast<double>(mu.size());
    for (Eigen::Index i = 0; i < mu.size(); ++i) {
        VectorXd g = v.gradient(mu.points().row(i).transpose());
        if (!g.allFinite()) {
            std::ostringstream msg;
            msg << "potential: non-finite gradient at support point " << i;
            throw numeric_error(msg.str());
        }
        grad.row(i) = inv_n * g.transpose();
    }
    return grad;
}

inline VectorXd potential_grad_weights(const Potential& v, const GridMeasure& mu) {
    VectorXd grad(mu.size());
    for (Eigen::Index i = 0; i < mu.size(); ++i) {
        grad(i) = v.value(mu.support().row(i).transpose());
        detail::check_potential_finite(grad(i), i);
    }
    return grad;
}

// ---------------------------------------------------------------------------
// Grid entropy  H(mu) = sum_i log(rho_i / l) rho_i
// ---------------------------------------------------------------------------

/// Negative entropy against the grid's Lebesgue surrogate l * sum_i delta_i,
/// with the 0 log 0 = 0 convention.
inline double entropy_grid_value(const GridMeasure& mu) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < mu.size(); ++i) {
        const double rho = mu.weights()(i);
        if (rho > 0.0) acc += rho * std::log(rho / mu.cell_volume());
    }
    return acc;
}

/// d/d rho_i = log(rho_i / l) + 1 for rho_i > 0; zero-weight entries return
/// -infinity (the one-sided limit).
inline VectorXd entropy_grid_grad(const GridMeasure& mu) {
    VectorXd grad(mu.size());
    for (Eigen::Index i = 0; i < mu.size(); ++i) {
        const double rho = mu.weights()(i);
        grad(i) = std::log(rho / mu.cell_volume()) + 1.0;
    }
    return grad;
}

// ---------------------------------------------------------------------------
// Interaction energy  W(mu) = 1/2 double-integral of W(x - y)
// ---------------------------------------------------------------------------

namespace detail {

inline void throw_coincident(Eigen::Index i, Eigen::Index j) {
    std::ostringstream msg;
    msg << "interaction: coincident particles " << i << " and " << j
        << " under a kernel singular at zero";
    throw numeric_error(msg.str());
}

}  // namespace detail

/// Self-pairs are excluded: their contribution is zero for the smooth power
/// kernels and undefined for the log kernel.
inline double interaction_value(const PowerKernel& k, const MeasureView& mu) {
    const Eigen::Index n = mu.size();
    const Eigen::Index d = mu.dimension();
    const MatrixXd& pts = *mu.points;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            double r2 = 0.0;
            for (Eigen::Index c = 0; c < d; ++c) {
                const double dc = pts(i, c) - pts(j, c);
                r2 += dc * dc;
            }
            if (r2 == 0.0) {
                if (k.singular_at_zero()) detail::throw_coincident(i, j);
                continue;
            }
            acc += mu.weight_at(i) * mu.weight_at(j) * k.value_from_r2(r2);
        }
    }
    return acc;
}

inline double interaction_value_and_grad_positions(const PowerKernel& k,
                                                   const ParticleCloud& mu, MatrixXd& grad) {
    const Eigen::Index n = mu.size();
    const Eigen::Index d = mu.dimension();
    const MatrixXd& pts = mu.points();
    const double w2 = 1.0 / (static_cast<double>(n) * static_cast<double>(n));
    grad = MatrixXd::Zero(n, d);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            double r2 = 0.0;
            for (Eigen::Index c = 0; c < d; ++c) {
                const double dc = pts(i, c) - pts(j, c);
                r2 += dc * dc;
            }
            if (r2 == 0.0) {
                if (k.singular_at_zero()) detail::throw_coincident(i, j);
                continue;  // grad W(0) taken as 0 for smooth kernels
            }
            acc += w2 * k.value_from_r2(r2);
            const double factor = w2 * k.gradient_factor_from_r2(r2);
            for (Eigen::Index c = 0; c < d; ++c) {
                const double g = factor * (pts(i, c) - pts(j, c));
                grad(i, c) += g;
                grad(j, c) -= g;
            }
        }
    }
    return acc;
}

inline MatrixXd interaction_grad_positions(const PowerKernel& k, const ParticleCloud& mu) {
    MatrixXd grad;
    interaction_value_and_grad_positions(k, mu, grad);
    return grad;
}

inline VectorXd interaction_grad_weights(const PowerKernel& k, const GridMeasure& mu) {
    const Eigen::Index n = mu.size();
    const Eigen::Index d = mu.dimension();
    const MatrixXd& pts = mu.support();
    VectorXd grad = VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            double r2 = 0.0;
            for (Eigen::Index c = 0; c < d; ++c) {
                const double dc = pts(i, c) - pts(j, c);
                r2 += dc * dc;
            }
            if (r2 == 0.0) {
                if (k.singular_at_zero()) detail::throw_coincident(i, j);
                continue;
            }
            const double w = k.value_from_r2(r2);
            grad(i) += mu.weights()(j) * w;
            grad(j) += mu.weights()(i) * w;
        }
    }
    return grad;
}

// ---------------------------------------------------------------------------
// SW distance to a fixed target as a functional (optionally entropy-regularized)
// ---------------------------------------------------------------------------

inline double sw_to_target_value(const MeasureView& target, double lambda,
                                 const ParticleCloud& mu, const ProjectionSet& projections,
                                 const QuantileGrid& q = QuantileGrid()) {
    if (lambda != 0.0)
        throw capability_error("sw_to_target: entropy term requires a grid measure");
    return 0.5 * sw2_mc(mu, target, projections, q).value;
}

inline double sw_to_target_value(const MeasureView& target, double lambda,
                                 const GridMeasure& mu, const ProjectionSet& projections,
                                 const QuantileGrid& q = QuantileGrid()) {
    if (lambda < 0.0) throw std::invalid_argument("sw_to_target: lambda must be >= 0");
    double v = 0.5 * sw2_mc(mu, target, projections, q).value;
    if (lambda > 0.0) v += lambda * entropy_grid_value(mu);
    return v;
}

inline MatrixXd sw_to_target_grad_positions(const MeasureView& target, double lambda,
                                            const ParticleCloud& mu,
                                            const ProjectionSet& projections,
                                            const QuantileGrid& q = QuantileGrid()) {
    if (lambda != 0.0)
        throw capability_error("sw_to_target: entropy term requires a grid measure");
    return 0.5 * grad_sw2_positions(mu, target, projections, q);
}

inline VectorXd sw_to_target_grad_weights(const MeasureView& target, double lambda,
                                          const GridMeasure& mu,
                                          const ProjectionSet& projections,
                                          const QuantileGrid& q = QuantileGrid()) {
    if (lambda < 0.0) throw std::invalid_argument("sw_to_target: lambda must be >= 0");
    VectorXd grad = 0.5 * grad_sw2_weights(mu, target, projections, q);
    if (lambda > 0.0) grad += lambda * entropy_grid_grad(mu);
    return grad;
}

// ---------------------------------------------------------------------------
// Exact W_2^2 to an equal-size uniform target via minimum-cost assignment
// ---------------------------------------------------------------------------

namespace detail {

inline AssignmentResult w2_exact_assignment(const ParticleCloud& mu, const ParticleCloud& target) {
    if (mu.size() != target.size())
        throw std::invalid_argument("w2_to_target_exact: particle counts must match");
    if (mu.dimension() != target.dimension())
        throw std::invalid_argument("w2_to_target_exact: dimension mismatch");
    if (mu.size() > 500)
        throw std::invalid_argument("w2_to_target_exact: desk-scale limit n <= 500");
    const Eigen::Index n = mu.size();
    MatrixXd cost(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            cost(i, j) = (mu.points().row(i) - target.points().row(j)).squaredNorm();
    return solve_assignment(cost);
}

}  // namespace detail

inline double w2_to_target_exact_value(const ParticleCloud& mu, const ParticleCloud& target) {
    return detail::w2_exact_assignment(mu, target).cost / static_cast<double>(mu.size());
}

/// Gradient with the optimal assignment held fixed: (2/n)(x_i - y_{sigma(i)}).
inline MatrixXd w2_to_target_exact_grad_positions(const ParticleCloud& mu,
                                                  const ParticleCloud& target) {
    const AssignmentResult match = detail::w2_exact_assignment(mu, target);
    const Eigen::Index n = mu.size();
    MatrixXd grad(n, mu.dimension());
    const double c = 2.0 / static_cast<double>(n);
    for (Eigen::Index i = 0; i < n; ++i)
        grad.row(i) =
            c * (mu.points().row(i) - target.points().row(match.row_to_col[static_cast<std::size_t>(i)]));
    return grad;
}

// ---------------------------------------------------------------------------
// Energy interface used by the JKO solver
// ---------------------------------------------------------------------------

/// A functional F(mu) with values and gradients per parameterization.
/// Implementations declare which parameterizations they support; calling an
/// unsupported surface raises capability_error. resample() refreshes any
/// internal Monte-Carlo state (fresh projections per inner epoch).
class Energy {
public:
    virtual ~Energy() = default;

    virtual bool supports_clouds() const { return false; }
    virtual bool supports_grids() const { return false; }

    virtual double value(const ParticleCloud&) const {
        throw capability_error("energy: particle clouds not supported");
    }
    virtual double value(const GridMeasure&) const {
        throw capability_error("energy: grid measures not supported");
    }
    virtual MatrixXd grad_positions(const ParticleCloud&) const {
        throw capability_error("energy: particle clouds not supported");
    }
    virtual VectorXd grad_weights(const GridMeasure&) const {
        throw capability_error("energy: grid measures not supported");
    }

    virtual double value_and_grad_positions(const ParticleCloud& mu, MatrixXd& grad) const {
        grad = grad_positions(mu);
        return value(mu);
    }
    virtual double value_and_grad_weights(const GridMeasure& mu, VectorXd& grad) const {
        grad = grad_weights(mu);
        return value(mu);
    }

    virtual void resample(std::uint64_t /*seed*/) {}
};

class PotentialEnergy final : public Energy {
public:
    explicit PotentialEnergy(std::shared_ptr<const Potential> v) : v_(std::move(v)) {}

    bool supports_clouds() const override { return true; }
    bool supports_grids() const override { return true; }

    double value(const ParticleCloud& mu) const override { return potential_value(*v_, mu); }
    double value(const GridMeasure& mu) const override { return potential_value(*v_, mu); }
    MatrixXd grad_positions(const ParticleCloud& mu) const override {
        return potential_grad_positions(*v_, mu);
    }
    VectorXd grad_weights(const GridMeasure& mu) const override {
        return potential_grad_weights(*v_, mu);
    }

private:
    std::shared_ptr<const Potential> v_;
};

/// Grid negative entropy. The gradient clamps log densities below
/// `log_density_floor` so weights zeroed by the simplex projection re-enter
/// with a bounded pull instead of -infinity.
class GridEntropyEnergy final : public Energy {
public:
    explicit GridEntropyEnergy(double log_density_floor = -16.0)
        : floor_(log_density_floor) {}

    using Energy::grad_positions;
    using Energy::value;

    bool supports_grids() const override { return true; }

    double value(const GridMeasure& mu) const override { return entropy_grid_value(mu); }
    VectorXd grad_weights(const GridMeasure& mu) const override {
        VectorXd grad(mu.size());
        for (Eigen::Index i = 0; i < mu.size(); ++i) {
            const double rho = mu.weights()(i);
            const double log_density =
                rho > 0.0 ? std::log(rho / mu.cell_volume())
                          : -std::numeric_limits<double>::infinity();
            grad(i) = std::max(log_density, floor_) + 1.0;
        }
        return grad;
    }

private:
    double floor_;
};

class InteractionEnergy final : public Energy {
public:
    explicit InteractionEnergy(PowerKernel kernel) : kernel_(kernel) {}

    bool supports_clouds() const override { return true; }
    bool supports_grids() const override { return true; }

    double value(const ParticleCloud& mu) const override {
        return interaction_value(kernel_, mu);
    }
    double value(const GridMeasure& mu) const override { return interaction_value(kernel_, mu); }
    MatrixXd grad_positions(const ParticleCloud& mu) const override {
        return interaction_grad_positions(kernel_, mu);
    }
    VectorXd grad_weights(const GridMeasure& mu) const override {
        return interaction_grad_weights(kernel_, mu);
    }
    double value_and_grad_positions(const ParticleCloud& mu, MatrixXd& grad) const override {
        return interaction_value_and_grad_positions(kernel_, mu, grad);
    }

private:
    PowerKernel kernel_;
};

/// F(mu) = 1/2 SW_2^2(mu, target) + lambda H(mu), with per-call-site control
/// of the projection budget; resample() redraws the projections.
class SwDistanceEnergy final : public Energy {
public:
    SwDistanceEnergy(ParticleCloud target, double lambda, Eigen::Index n_projections,
                     QuantileGrid q, std::uint64_t seed)
        : target_(std::move(target)), lambda_(lambda), q_(q),
          projections_(sample_unit_sphere(n_projections, target_.dimension(), seed)) {
        if (lambda_ < 0.0) throw std::invalid_argument("SwDistanceEnergy: lambda must be >= 0");
    }

    bool supports_clouds() const override { return lambda_ == 0.0; }
    bool supports_grids() const override { return true; }

    double value(const ParticleCloud& mu) const override {
        return sw_to_target_value(target_, lambda_, mu, projections_, q_);
    }
    double value(const GridMeasure& mu) const override {
        return sw_to_target_value(target_, lambda_, mu, projections_, q_);
    }
    MatrixXd grad_positions(const ParticleCloud& mu) const override {
        return sw_to_target_grad_positions(target_, lambda_, mu, projections_, q_);
    }
    VectorXd grad_weights(const GridMeasure& mu) const override {
        return sw_to_target_grad_weights(target_, lambda_, mu, projections_, q_);
    }

    void resample(std::uint64_t seed) override {
        projections_ = sample_unit_sphere(projections_.count(), target_.dimension(), seed);
    }

    const ProjectionSet& projections() const { return projections_; }

private:
    ParticleCloud target_;
    double lambda_;
    QuantileGrid q_;
    ProjectionSet projections_;
};

class ExactW2Energy final : public Energy {
public:
    explicit ExactW2Energy(ParticleCloud target) : target_(std::move(target)) {}

    using Energy::grad_weights;
    using Energy::value;

    bool supports_clouds() const override { return true; }

    double value(const ParticleCloud& mu) const override {
        return w2_to_target_exact_value(mu, target_);
    }
    MatrixXd grad_positions(const ParticleCloud& mu) const override {
        return w2_to_target_exact_grad_positions(mu, target_);
    }

private:
    ParticleCloud target_;
};

/// Linear combination of component energies; capability is the intersection.
class WeightedSumEnergy final : public Energy {
public:
    WeightedSumEnergy(std::vector<std::shared_ptr<Energy>> components,
                      std::vector<double> coefficients)
        : components_(std::move(components)), coefficients_(std::move(coefficients)) {
        if (components_.empty() || components_.size() != coefficients_.size())
            throw std::invalid_argument("WeightedSumEnergy: component/coefficient mismatch");
        for (double c : coefficients_)
            if (!std::isfinite(c))
                throw std::invalid_argument("WeightedSumEnergy: coefficients must be finite");
    }

    bool supports_clouds() const override {
        for (const auto& c : components_)
            if (!c->supports_clouds()) return false;
        return true;
    }
    bool supports_grids() const override {
        for (const auto& c : components_)
            if (!c->supports_grids()) return false;
        return true;
    }

    double value(const ParticleCloud& mu) const override {
        double acc = 0.0;
        for (std::size_t i = 0; i < components_.size(); ++i)
            acc += coefficients_[i] * components_[i]->value(mu);
        return acc;
    }
    double value(const GridMeasure& mu) const override {
        double acc = 0.0;
        for (std::size_t i = 0; i < components_.size(); ++i)
            acc += coefficients_[i] * components_[i]->value(mu);
        return acc;
    }
    MatrixXd grad_positions(const ParticleCloud& mu) const override {
        MatrixXd acc = MatrixXd::Zero(mu.size(), mu.dimension());
        for (std::size_t i = 0; i < components_.size(); ++i)
            acc += coefficients_[i] * components_[i]->grad_positions(mu);
        return acc;
    }
    VectorXd grad_weights(const GridMeasure& mu) const override {
        VectorXd acc = VectorXd::Zero(mu.size());
        for (std::size_t i = 0; i < components_.size(); ++i)
            acc += coefficients_[i] * components_[i]->grad_weights(mu);
        return acc;
    }
    double value_and_grad_positions(const ParticleCloud& mu, MatrixXd& grad) const override {
        grad = MatrixXd::Zero(mu.size(), mu.dimension());
        double acc = 0.0;
        MatrixXd g;
        for (std::size_t i = 0; i < components_.size(); ++i) {
            acc += coefficients_[i] * components_[i]->value_and_grad_positions(mu, g);
            grad += coefficients_[i] * g;
        }
        return acc;
    }
    double value_and_grad_weights(const GridMeasure& mu, VectorXd& grad) const override {
        grad = VectorXd::Zero(mu.size());
        double acc = 0.0;
        VectorXd g;
        for (std::size_t i = 0; i < components_.size(); ++i) {
            acc += coefficients_[i] * components_[i]->value_and_grad_weights(mu, g);
            grad += coefficients_[i] * g;
        }
        return acc;
    }

    void resample(std::uint64_t seed) override {
        for (std::size_t i = 0; i < components_.size(); ++i)
            components_[i]->resample(derive_seed(seed, i));
    }

private:
    std::vector<std::shared_ptr<Energy>> components_;
    std::vector<double> coefficients_;
};

}  // namespace swflow
