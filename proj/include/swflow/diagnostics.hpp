#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "swflow/errors.hpp"
#include "swflow/measures.hpp"

namespace swflow {

// ---------------------------------------------------------------------------
// Gaussian log density
// ---------------------------------------------------------------------------

/// Log density of a Gaussian with positive-definite covariance, with the
/// Cholesky factor cached across evaluations.
class GaussianDensity {
public:
    explicit GaussianDensity(GaussianMeasure g) : g_(std::move(g)), llt_(g_.covariance()) {
        if (llt_.info() != Eigen::Success)
            throw numeric_error("GaussianDensity: covariance must be positive-definite");
        const MatrixXd l = llt_.matrixL();
        log_det_ = 2.0 * l.diagonal().array().log().sum();
    }

    double log_density(const VectorXd& x) const {
        const VectorXd diff = x - g_.mean();
        const double mahal = diff.dot(llt_.solve(diff));
        const double d = static_cast<double>(g_.dimension());
        return -0.5 * (d * std::log(2.0 * M_PI) + log_det_ + mahal);
    }

    const GaussianMeasure& measure() const { return g_; }

private:
    GaussianMeasure g_;
    Eigen::LLT<MatrixXd> llt_;
    double log_det_ = 0.0;
};

// ---------------------------------------------------------------------------
// Kernel density estimation (Scott's rule)
// ---------------------------------------------------------------------------

/// Gaussian-kernel KDE with the full-covariance Scott bandwidth
/// H = n^{-2/(d+4)} * Cov(samples), floored at 1e-6 * (tr Cov / d) * I to
/// keep near-degenerate clouds (rings, converged flows) usable.
class KdeModel {
public:
    explicit KdeModel(MatrixXd samples) : samples_(std::move(samples)) {
        const Eigen::Index n = samples_.rows();
        const Eigen::Index d = samples_.cols();
        if (n < 2) throw std::invalid_argument("KdeModel: need at least 2 samples");

        const Eigen::RowVectorXd mean = samples_.colwise().mean();
        const MatrixXd centered = samples_.rowwise() - mean;
        MatrixXd cov = centered.transpose() * centered / static_cast<double>(n - 1);

        const double scott2 =
            std::pow(static_cast<double>(n), -2.0 / (static_cast<double>(d) + 4.0));
        bandwidth_ = scott2 * cov;
        const double floor = 1e-6 * cov.trace() / static_cast<double>(d);
        bandwidth_ += floor * MatrixXd::Identity(d, d);

        llt_.compute(bandwidth_);
        if (llt_.info() != Eigen::Success || !(bandwidth_.trace() > 0.0))
            throw numeric_error(
                "KdeModel: degenerate sample covariance; raise the bandwidth floor");
        const MatrixXd l = llt_.matrixL();
        log_norm_ = -0.5 * (static_cast<double>(d) * std::log(2.0 * M_PI) +
                            2.0 * l.diagonal().array().log().sum());
    }

    explicit KdeModel(const ParticleCloud& cloud) : KdeModel(cloud.points()) {}

    const MatrixXd& bandwidth_matrix() const { return bandwidth_; }
    Eigen::Index sample_count() const { return samples_.rows(); }

    /// log of the mixture density (1/n) sum_i N(x; x_i, H), via log-sum-exp.
    double log_density(const VectorXd& x) const {
        const Eigen::Index n = samples_.rows();
        double max_exp = -std::numeric_limits<double>::infinity();
        std::vector<double> exps(static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i) {
            const VectorXd diff = x - samples_.row(i).transpose();
            const double e = -0.5 * diff.dot(llt_.solve(diff));
            exps[static_cast<std::size_t>(i)] = e;
            max_exp = std::max(max_exp, e);
        }
        double acc = 0.0;
        for (double e : exps) acc += std::exp(e - max_exp);
        return max_exp + std::log(acc) + log_norm_ - std::log(static_cast<double>(n));
    }

private:
    MatrixXd samples_;
    MatrixXd bandwidth_;
    Eigen::LLT<MatrixXd> llt_;
    double log_norm_ = 0.0;
};

inline double kde_log_density(const KdeModel& model, const VectorXd& x) {
    return model.log_density(x);
}

// ---------------------------------------------------------------------------
// Symmetric KL
// ---------------------------------------------------------------------------

/// SymKL = KL(g1 || g2) + KL(g2 || g1), closed form for Gaussians.
inline double sym_kl_gaussians(const GaussianMeasure& g1, const GaussianMeasure& g2) {
    if (g1.dimension() != g2.dimension())
        throw std::invalid_argument("sym_kl_gaussians: dimension mismatch");
    const Eigen::Index d = g1.dimension();

    auto kl = [d](const GaussianMeasure& a, const GaussianMeasure& b) {
        Eigen::LLT<MatrixXd> llt_b(b.covariance());
        Eigen::LLT<MatrixXd> llt_a(a.covariance());
        if (llt_b.info() != Eigen::Success || llt_a.info() != Eigen::Success)
            throw numeric_error("sym_kl_gaussians: covariances must be positive-definite");
        const MatrixXd la = llt_a.matrixL();
        const MatrixXd lb = llt_b.matrixL();
        const double log_det_a = 2.0 * la.diagonal().array().log().sum();
        const double log_det_b = 2.0 * lb.diagonal().array().log().sum();
        const double trace = llt_b.solve(a.covariance()).trace();
        const VectorXd diff = b.mean() - a.mean();
        const double mahal = diff.dot(llt_b.solve(diff));
        return 0.5 * (trace + mahal - static_cast<double>(d) + log_det_b - log_det_a);
    };
    return kl(g1, g2) + kl(g2, g1);
}

/// Monte-Carlo SymKL between an analytic density p and a sample-only side q:
/// q is replaced by its KDE, KL(p||q^) is averaged over p_samples and
/// KL(q^||p) over q_samples.
inline double sym_kl_samples(const std::function<double(const VectorXd&)>& p_log_density,
                             const ParticleCloud& q_samples, const ParticleCloud& p_samples) {
    if (q_samples.dimension() != p_samples.dimension())
        throw std::invalid_argument("sym_kl_samples: dimension mismatch");
    const KdeModel q_hat(q_samples);

    double kl_pq = 0.0;
    for (Eigen::Index i = 0; i < p_samples.size(); ++i) {
        const VectorXd x = p_samples.points().row(i).transpose();
        kl_pq += p_log_density(x) - q_hat.log_density(x);
    }
    kl_pq /= static_cast<double>(p_samples.size());

    double kl_qp = 0.0;
    for (Eigen::Index i = 0; i < q_samples.size(); ++i) {
        const VectorXd x = q_samples.points().row(i).transpose();
        kl_qp += q_hat.log_density(x) - p_log_density(x);
    }
    kl_qp /= static_cast<double>(q_samples.size());

    return kl_pq + kl_qp;
}

/// SymKL between a grid measure (density rho_i / l) and an analytic density,
/// both integrals taken as quadrature on the grid support. Grid densities are
/// floored at exp(log_density_floor) inside logs so empty cells contribute a
/// bounded penalty instead of infinity.
inline double sym_kl_grid_density(const GridMeasure& grid,
                                  const std::function<double(const VectorXd&)>& log_density,
                                  double log_density_floor = -30.0) {
    const double l = grid.cell_volume();
    double kl_grid_p = 0.0;  // KL(grid || p)
    double kl_p_grid = 0.0;  // KL(p || grid), quadrature on the support
    for (Eigen::Index i = 0; i < grid.size(); ++i) {
        const VectorXd x = grid.support().row(i).transpose();
        const double lp = log_density(x);
        const double rho = grid.weights()(i);
        const double log_grid =
            std::max(rho > 0.0 ? std::log(rho / l) : -std::numeric_limits<double>::infinity(),
                     log_density_floor);
        if (rho > 0.0) kl_grid_p += rho * (log_grid - lp);
        const double p_mass = l * std::exp(lp);
        kl_p_grid += p_mass * (lp - log_grid);
    }
    return kl_grid_p + kl_p_grid;
}

// ---------------------------------------------------------------------------
// Radial summaries
// ---------------------------------------------------------------------------

/// Order statistics of particle distances to a center; quantiles use linear
/// interpolation between order statistics.
struct RadiusStats {
    double mean = 0.0;
    double std_dev = 0.0;
    double min = 0.0;
    double max = 0.0;
    std::vector<double> sorted_radii;

    double quantile(double p) const {
        if (!(p >= 0.0 && p <= 1.0))
            throw std::invalid_argument("RadiusStats::quantile: p must be in [0,1]");
        const std::size_t n = sorted_radii.size();
        if (n == 1) return sorted_radii[0];
        const double h = p * static_cast<double>(n - 1);
        const std::size_t lo = static_cast<std::size_t>(h);
        const std::size_t hi = std::min(lo + 1, n - 1);
        const double frac = h - static_cast<double>(lo);
        return sorted_radii[lo] * (1.0 - frac) + sorted_radii[hi] * frac;
    }
};

inline RadiusStats radius_stats(const ParticleCloud& cloud, const VectorXd& center) {
    if (center.size() != cloud.dimension())
        throw std::invalid_argument("radius_stats: center dimension mismatch");
    RadiusStats stats;
    const Eigen::Index n = cloud.size();
    stats.sorted_radii.resize(static_cast<std::size_t>(n));
    double sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double r = (cloud.points().row(i).transpose() - center).norm();
        stats.sorted_radii[static_cast<std::size_t>(i)] = r;
        sum += r;
    }
    std::sort(stats.sorted_radii.begin(), stats.sorted_radii.end());
    stats.mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (double r : stats.sorted_radii) ss += (r - stats.mean) * (r - stats.mean);
    stats.std_dev = std::sqrt(ss / static_cast<double>(n));
    stats.min = stats.sorted_radii.front();
    stats.max = stats.sorted_radii.back();
    return stats;
}

}  // namespace swflow
