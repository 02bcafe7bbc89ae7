#pragma once

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <utility>
#include <vector>

#include "swflow/errors.hpp"
#include "swflow/functionals.hpp"
#include "swflow/measures.hpp"
#include "swflow/rng.hpp"

namespace swflow {

// ---------------------------------------------------------------------------
// Ornstein-Uhlenbeck analytic flow
// ---------------------------------------------------------------------------

/// Langevin dynamics under V(x) = 1/2 (x-m)^T A (x-m) started from
/// N(m0, Sigma0); the marginal at time t is Gaussian in closed form.
struct OuSpec {
    MatrixXd a;
    VectorXd m;
    VectorXd m0;
    MatrixXd sigma0;

    OuSpec(MatrixXd a_, VectorXd m_, VectorXd m0_, MatrixXd sigma0_)
        : a(std::move(a_)), m(std::move(m_)), m0(std::move(m0_)), sigma0(std::move(sigma0_)) {
        const Eigen::Index d = m.size();
        if (a.rows() != d || a.cols() != d || m0.size() != d || sigma0.rows() != d ||
            sigma0.cols() != d)
            throw std::invalid_argument("OuSpec: shape mismatch");
        const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
        if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
            throw std::invalid_argument("OuSpec: A must be symmetric");
    }
};

/// m_t = m + e^{-tA}(m0 - m),
/// Sigma_t = e^{-tA} Sigma0 e^{-tA} + A^{-1/2}(I - e^{-2tA})A^{-1/2},
/// all matrix functions via the symmetric eigendecomposition of A.
inline GaussianMeasure ou_analytic(const OuSpec& spec, double t) {
    if (!(t >= 0.0)) throw std::invalid_argument("ou_analytic: need t >= 0");
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(spec.a);
    if (es.info() != Eigen::Success)
        throw numeric_error("ou_analytic: eigendecomposition failed");
    if (es.eigenvalues().minCoeff() <= 0.0)
        throw numeric_error("ou_analytic: A must be positive-definite");

    const VectorXd lam = es.eigenvalues();
    const MatrixXd& qmat = es.eigenvectors();
    const VectorXd decay = (-t * lam.array()).exp();
    const MatrixXd e_ta = qmat * decay.asDiagonal() * qmat.transpose();
    const VectorXd stat = ((1.0 - (-2.0 * t * lam.array()).exp()) / lam.array()).matrix();

    VectorXd mean = spec.m + e_ta * (spec.m0 - spec.m);
    MatrixXd cov = e_ta * spec.sigma0 * e_ta + qmat * stat.asDiagonal() * qmat.transpose();
    cov = 0.5 * (cov + cov.transpose());
    return GaussianMeasure(std::move(mean), std::move(cov));
}

// ---------------------------------------------------------------------------
// Unadjusted Langevin / Euler-Maruyama particle baseline
// ---------------------------------------------------------------------------

struct UlaTrajectory {
    std::vector<double> times;
    std::vector<ParticleCloud> clouds;
};

/// X_{t+h} = X_t - h grad V(X_t) + sqrt(2h) xi, xi ~ N(0, I); unit diffusion.
/// Snapshots are taken at the steps nearest each requested checkpoint.
/// `diffusion` scales the noise; 0 reduces to gradient descent (test hook).
inline UlaTrajectory euler_maruyama(const Potential& v, const ParticleCloud& init, double h,
                                    double horizon, const std::vector<double>& checkpoints,
                                    Rng& rng, double diffusion = 1.0) {
    if (!(h > 0.0)) throw std::invalid_argument("euler_maruyama: need h > 0");
    if (!(horizon >= 0.0)) throw std::invalid_argument("euler_maruyama: need T >= 0");
    const Eigen::Index n = init.size();
    const Eigen::Index d = init.dimension();
    const long n_steps = std::lround(horizon / h);

    std::vector<long> snap_steps;
    snap_steps.reserve(checkpoints.size());
    for (double t : checkpoints) {
        if (t < 0.0 || t > horizon + 0.5 * h)
            throw std::invalid_argument("euler_maruyama: checkpoint outside [0, T]");
        snap_steps.push_back(std::min(n_steps, std::lround(t / h)));
    }

    const double noise = diffusion * std::sqrt(2.0 * h);
    MatrixXd x = init.points();
    UlaTrajectory out;

    auto maybe_snapshot = [&](long step) {
        for (std::size_t c = 0; c < snap_steps.size(); ++c) {
            if (snap_steps[c] == step) {
                out.times.push_back(static_cast<double>(step) * h);
                out.clouds.emplace_back(x);
            }
        }
    };

    maybe_snapshot(0);
    for (long step = 1; step <= n_steps; ++step) {
        for (Eigen::Index i = 0; i < n; ++i) {
            const VectorXd g = v.gradient(x.row(i).transpose());
            if (!g.allFinite()) {
                std::ostringstream msg;
                msg << "euler_maruyama: non-finite gradient for particle " << i << " at step "
                    << step;
                throw numeric_error(msg.str());
            }
            for (Eigen::Index c = 0; c < d; ++c)
                x(i, c) += -h * g(c) + noise * rng.gaussian();
        }
        maybe_snapshot(step);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

/// Central finite differences (f(x + h e_i) - f(x - h e_i)) / 2h.
template <class F>
VectorXd finite_diff_grad(F&& f, const VectorXd& x, double step = 1e-6) {
    if (!(step > 0.0)) throw std::invalid_argument("finite_diff_grad: need step > 0");
    VectorXd grad(x.size());
    VectorXd probe = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        probe(i) = x(i) + step;
        const double up = f(probe);
        probe(i) = x(i) - step;
        const double down = f(probe);
        probe(i) = x(i);
        if (!std::isfinite(up) || !std::isfinite(down)) {
            std::ostringstream msg;
            msg << "finite_diff_grad: non-finite evaluation at coordinate " << i;
            throw numeric_error(msg.str());
        }
        grad(i) = (up - down) / (2.0 * step);
    }
    return grad;
}

// ---------------------------------------------------------------------------
// Brute-force oracles
// ---------------------------------------------------------------------------

/// Exhaustive minimum over all n! assignments, n <= 7.
inline AssignmentResult assignment_bruteforce(const MatrixXd& cost) {
    const Eigen::Index n = cost.rows();
    if (n == 0 || cost.cols() != n)
        throw std::invalid_argument("assignment_bruteforce: need a nonempty square matrix");
    if (n > 7) throw std::invalid_argument("assignment_bruteforce: refuses n > 7");

    std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    AssignmentResult best;
    best.cost = std::numeric_limits<double>::infinity();
    do {
        double c = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) c += cost(i, perm[static_cast<std::size_t>(i)]);
        if (c < best.cost) {
            best.cost = c;
            best.row_to_col = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

/// Exact simplex projection by enumerating KKT active sets, N <= 8.
inline VectorXd simplex_project_bruteforce(const VectorXd& v) {
    const Eigen::Index n = v.size();
    if (n == 0) throw std::invalid_argument("simplex_project_bruteforce: empty input");
    if (n > 8) throw std::invalid_argument("simplex_project_bruteforce: refuses N > 8");
    if (!v.allFinite())
        throw std::invalid_argument("simplex_project_bruteforce: input must be finite");

    VectorXd best;
    double best_dist = std::numeric_limits<double>::infinity();
    for (unsigned mask = 1; mask < (1u << n); ++mask) {
        double sum = 0.0;
        int count = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (mask & (1u << i)) {
                sum += v(i);
                ++count;
            }
        }
        const double lambda = (1.0 - sum) / count;
        VectorXd candidate = VectorXd::Zero(n);
        bool feasible = true;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (mask & (1u << i)) {
                candidate(i) = v(i) + lambda;
                if (candidate(i) < 0.0) feasible = false;
            } else if (v(i) + lambda > 0.0) {
                feasible = false;  // KKT: inactive coordinates must not want in
            }
        }
        if (!feasible) continue;
        const double dist = (candidate - v).squaredNorm();
        if (dist < best_dist) {
            best_dist = dist;
            best = candidate;
        }
    }
    return best;
}

}  // namespace swflow
