#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <thread>
#include <vector>

#include "swflow/errors.hpp"
#include "swflow/measures.hpp"

namespace swflow {

/// Midpoint (rectangle-method) discretization of the quantile integral:
/// levels u_j = (j + 1/2) / M, j = 0..M-1.
class QuantileGrid {
public:
    explicit QuantileGrid(Eigen::Index m = 100) : m_(m) {
        if (m_ < 1) throw std::invalid_argument("QuantileGrid: need M >= 1");
    }
    Eigen::Index count() const { return m_; }
    double level(Eigen::Index j) const {
        return (static_cast<double>(j) + 0.5) / static_cast<double>(m_);
    }

private:
    Eigen::Index m_;
};

/// Monte-Carlo SW_2^2 estimate together with the data needed to reproduce
/// and band it: projection count, the seed the directions were drawn from,
/// and the per-projection standard error.
struct SwEstimate {
    double value = 0.0;
    Eigen::Index n_projections = 0;
    std::uint64_t seed = 0;
    double std_error = 0.0;
};

/// Caps the number of worker threads used by per-projection loops.
/// Results are bitwise identical for any setting: each projection writes its
/// own slot and the reduction always runs in projection order.
inline void set_max_threads(int threads);
inline int max_threads();

namespace detail {

inline std::atomic<int>& max_threads_ref() {
    static std::atomic<int> t{1};
    return t;
}

template <class Fn>
void parallel_projections(Eigen::Index count, Fn&& fn) {
    const int threads = std::min<int>(max_threads(), static_cast<int>(count));
    if (threads <= 1) {
        for (Eigen::Index l = 0; l < count; ++l) fn(l);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) {
        const Eigen::Index begin = count * t / threads;
        const Eigen::Index end = count * (t + 1) / threads;
        pool.emplace_back([begin, end, &fn] {
            for (Eigen::Index l = begin; l < end; ++l) fn(l);
        });
    }
    for (auto& th : pool) th.join();
}

// Atoms of a 1D measure in ascending order with cumulative weights.
struct Sorted1d {
    std::vector<double> values;
    std::vector<double> cum;

    Sorted1d() = default;

    Sorted1d(const VectorXd& atoms, const VectorXd& weights) {
        const auto n = static_cast<std::size_t>(atoms.size());
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return atoms(static_cast<Eigen::Index>(a)) < atoms(static_cast<Eigen::Index>(b)); });
        values.resize(n);
        cum.resize(n);
        double running = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            values[k] = atoms(static_cast<Eigen::Index>(order[k]));
            running += weights(static_cast<Eigen::Index>(order[k]));
            cum[k] = running;
        }
    }

    // F^{-1}(u): smallest atom whose cumulative weight reaches u.
    double quantile(double u) const {
        auto it = std::lower_bound(cum.begin(), cum.end(), u);
        if (it == cum.end()) --it;
        return values[static_cast<std::size_t>(it - cum.begin())];
    }

    // Quantile with exact-tie handling: when u coincides with a cumulative
    // breakpoint the function jumps, and the jump midpoint is returned (the
    // centered element of the subdifferential). Elsewhere this equals
    // quantile(u).
    double quantile_mid(double u, double tie_eps = 1e-12) const {
        auto lo = std::lower_bound(cum.begin(), cum.end(), u - tie_eps);
        auto hi = std::upper_bound(cum.begin(), cum.end(), u + tie_eps);
        if (lo == cum.end()) --lo;
        if (hi == cum.end()) --hi;
        const double left = values[static_cast<std::size_t>(lo - cum.begin())];
        const double right = values[static_cast<std::size_t>(hi - cum.begin())];
        return 0.5 * (left + right);
    }
};

inline void check_simplex_weights(const VectorXd& w, const char* who) {
    if ((w.array() < 0.0).any())
        throw std::invalid_argument(std::string(who) + ": weights must be nonnegative");
    if (std::abs(w.sum() - 1.0) > 1e-9)
        throw std::invalid_argument(std::string(who) + ": weights must sum to 1 within 1e-9");
}

inline void check_pair_dimensions(const MeasureView& a, const MeasureView& b,
                                  const ProjectionSet& projections, const char* who) {
    if (a.dimension() != b.dimension() || a.dimension() != projections.dimension())
        throw std::invalid_argument(std::string(who) + ": dimension mismatch");
}

// Rectangle-method value between two pre-sorted 1D measures.
inline double w2_1d_rectangle(const Sorted1d& a, const Sorted1d& b, const QuantileGrid& q) {
    const auto na = a.values.size();
    const auto nb = b.values.size();
    std::size_t ia = 0, ib = 0;
    double acc = 0.0;
    for (Eigen::Index j = 0; j < q.count(); ++j) {
        const double u = q.level(j);
        while (ia + 1 < na && a.cum[ia] < u) ++ia;
        while (ib + 1 < nb && b.cum[ib] < u) ++ib;
        const double diff = a.values[ia] - b.values[ib];
        acc += diff * diff;
    }
    return acc / static_cast<double>(q.count());
}

inline bool both_equal_size_uniform(const MeasureView& a, const MeasureView& b) {
    return a.uniform() && b.uniform() && a.size() == b.size();
}

}  // namespace detail

inline void set_max_threads(int threads) {
    detail::max_threads_ref().store(std::max(1, threads));
}

inline int max_threads() { return detail::max_threads_ref().load(); }

/// Exact 1D W_2^2 between two uniform empirical measures of equal size:
/// sorted values match rank by rank.
inline double w2_1d_uniform_sorted(const VectorXd& xs, const VectorXd& ys) {
    if (xs.size() == 0 || ys.size() == 0)
        throw std::invalid_argument("w2_1d_uniform_sorted: empty input");
    if (xs.size() != ys.size())
        throw std::invalid_argument("w2_1d_uniform_sorted: lengths must match");
    std::vector<double> a(xs.data(), xs.data() + xs.size());
    std::vector<double> b(ys.data(), ys.data() + ys.size());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double diff = a[i] - b[i];
        acc += diff * diff;
    }
    return acc / static_cast<double>(a.size());
}

/// Rectangle-method 1D W_2^2 between weighted atomic measures.
inline double w2_1d_quantile(const VectorXd& a_atoms, const VectorXd& a_weights,
                             const VectorXd& b_atoms, const VectorXd& b_weights,
                             const QuantileGrid& q = QuantileGrid()) {
    if (a_atoms.size() == 0 || b_atoms.size() == 0)
        throw std::invalid_argument("w2_1d_quantile: empty input");
    if (a_atoms.size() != a_weights.size() || b_atoms.size() != b_weights.size())
        throw std::invalid_argument("w2_1d_quantile: atom/weight length mismatch");
    if (!a_atoms.allFinite() || !b_atoms.allFinite())
        throw std::invalid_argument("w2_1d_quantile: atoms must be finite");
    detail::check_simplex_weights(a_weights, "w2_1d_quantile");
    detail::check_simplex_weights(b_weights, "w2_1d_quantile");
    detail::Sorted1d a(a_atoms, a_weights);
    detail::Sorted1d b(b_atoms, b_weights);
    return detail::w2_1d_rectangle(a, b, q);
}

/// Monte-Carlo SW_2^2: mean over the projection set of the 1D distances of
/// the pushforwards. Equal-size uniform clouds take the exact sorted path;
/// anything weighted goes through the rectangle method.
inline SwEstimate sw2_mc(const MeasureView& mu, const MeasureView& nu,
                         const ProjectionSet& projections,
                         const QuantileGrid& q = QuantileGrid()) {
    detail::check_pair_dimensions(mu, nu, projections, "sw2_mc");
    const Eigen::Index L = projections.count();
    std::vector<double> per_projection(static_cast<std::size_t>(L), 0.0);

    const bool sorted_path = detail::both_equal_size_uniform(mu, nu);
    const VectorXd uniform_mu = VectorXd::Constant(mu.size(), 1.0 / static_cast<double>(mu.size()));
    const VectorXd uniform_nu = VectorXd::Constant(nu.size(), 1.0 / static_cast<double>(nu.size()));

    detail::parallel_projections(L, [&](Eigen::Index l) {
        const VectorXd theta = projections.directions().row(l).transpose();
        const VectorXd xs = (*mu.points) * theta;
        const VectorXd ys = (*nu.points) * theta;
        if (sorted_path) {
            per_projection[static_cast<std::size_t>(l)] = w2_1d_uniform_sorted(xs, ys);
        } else {
            detail::Sorted1d a(xs, mu.uniform() ? uniform_mu : *mu.weights);
            detail::Sorted1d b(ys, nu.uniform() ? uniform_nu : *nu.weights);
            per_projection[static_cast<std::size_t>(l)] = detail::w2_1d_rectangle(a, b, q);
        }
    });

    SwEstimate est;
    est.n_projections = L;
    est.seed = projections.seed();
    double sum = 0.0;
    for (double v : per_projection) sum += v;
    est.value = sum / static_cast<double>(L);
    if (L > 1) {
        double ss = 0.0;
        for (double v : per_projection) ss += (v - est.value) * (v - est.value);
        est.std_error = std::sqrt(ss / static_cast<double>(L - 1)) /
                        std::sqrt(static_cast<double>(L));
    }
    return est;
}

/// SW_2^2 value and its gradient with respect to the particle positions of
/// `mu` (`nu` held fixed), in one pass over the projections.
inline double sw2_value_and_grad_positions(const ParticleCloud& mu, const MeasureView& nu,
                                           const ProjectionSet& projections,
                                           const QuantileGrid& q, MatrixXd& grad) {
    const MeasureView mv(mu);
    detail::check_pair_dimensions(mv, nu, projections, "grad_sw2_positions");
    const Eigen::Index n = mu.size();
    const Eigen::Index d = mu.dimension();
    const Eigen::Index L = projections.count();
    const bool sorted_path = detail::both_equal_size_uniform(mv, nu);
    const VectorXd uniform_nu = VectorXd::Constant(nu.size(), 1.0 / static_cast<double>(nu.size()));

    std::vector<double> values(static_cast<std::size_t>(L), 0.0);
    // Per-projection gradient slots keep the reduction order fixed so the
    // result does not depend on the thread count.
    std::vector<MatrixXd> slots(static_cast<std::size_t>(L));

    detail::parallel_projections(L, [&](Eigen::Index l) {
        const VectorXd theta = projections.directions().row(l).transpose();
        const VectorXd xs = mu.points() * theta;

        std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](Eigen::Index a, Eigen::Index b) { return xs(a) < xs(b); });

        VectorXd coeff = VectorXd::Zero(n);  // dW^2/d(projected value), sorted order
        double value = 0.0;

        if (sorted_path) {
            VectorXd ys = (*nu.points) * theta;
            std::sort(ys.data(), ys.data() + ys.size());
            const double inv_n = 1.0 / static_cast<double>(n);
            for (Eigen::Index r = 0; r < n; ++r) {
                const double diff = xs(order[static_cast<std::size_t>(r)]) - ys(r);
                value += diff * diff * inv_n;
                coeff(r) = 2.0 * inv_n * diff;
            }
        } else {
            const VectorXd ys = (*nu.points) * theta;
            detail::Sorted1d b(ys, nu.uniform() ? uniform_nu : *nu.weights);
            const double inv_m = 1.0 / static_cast<double>(q.count());
            const double inv_n = 1.0 / static_cast<double>(n);
            std::size_t ia = 0, ib = 0;
            for (Eigen::Index j = 0; j < q.count(); ++j) {
                const double u = q.level(j);
                while (ia + 1 < static_cast<std::size_t>(n) &&
                       static_cast<double>(ia + 1) * inv_n < u)
                    ++ia;
                while (ib + 1 < b.cum.size() && b.cum[ib] < u) ++ib;
                const double diff = xs(order[ia]) - b.values[ib];
                value += diff * diff * inv_m;
                coeff(static_cast<Eigen::Index>(ia)) += 2.0 * inv_m * diff;
            }
        }

        MatrixXd g = MatrixXd::Zero(n, d);
        for (Eigen::Index r = 0; r < n; ++r) {
            if (coeff(r) != 0.0)
                g.row(order[static_cast<std::size_t>(r)]) += coeff(r) * theta.transpose();
        }
        slots[static_cast<std::size_t>(l)] = std::move(g);
        values[static_cast<std::size_t>(l)] = value;
    });

    grad = MatrixXd::Zero(n, d);
    double total = 0.0;
    for (Eigen::Index l = 0; l < L; ++l) {
        grad += slots[static_cast<std::size_t>(l)];
        total += values[static_cast<std::size_t>(l)];
    }
    const double inv_L = 1.0 / static_cast<double>(L);
    grad *= inv_L;
    return total * inv_L;
}

inline MatrixXd grad_sw2_positions(const ParticleCloud& mu, const MeasureView& nu,
                                   const ProjectionSet& projections,
                                   const QuantileGrid& q = QuantileGrid()) {
    MatrixXd grad;
    sw2_value_and_grad_positions(mu, nu, projections, q, grad);
    return grad;
}

/// SW_2^2 value (rectangle method) and its gradient with respect to the grid
/// weights of `mu`. The gradient is the chain rule through the cumulative
/// breakpoints c_k of the exact quantile integral,
///     dW^2/dc_k = (a_k - b(c_k))^2 - (a_{k+1} - b(c_k))^2,
/// with the target quantile b evaluated at jump midpoints when c_k lands
/// exactly on one of its breakpoints (so the gradient vanishes, up to an
/// additive constant, when both measures coincide). On the simplex the
/// gradient is defined up to an additive constant.
inline double sw2_value_and_grad_weights(const GridMeasure& mu, const MeasureView& nu,
                                         const ProjectionSet& projections,
                                         const QuantileGrid& q, VectorXd& grad) {
    const MeasureView mv(mu);
    detail::check_pair_dimensions(mv, nu, projections, "grad_sw2_weights");
    detail::check_simplex_weights(mu.weights(), "grad_sw2_weights");
    if (!nu.uniform()) detail::check_simplex_weights(*nu.weights, "grad_sw2_weights");
    const Eigen::Index n = mu.size();
    const Eigen::Index L = projections.count();
    const VectorXd uniform_nu = VectorXd::Constant(nu.size(), 1.0 / static_cast<double>(nu.size()));

    std::vector<double> values(static_cast<std::size_t>(L), 0.0);
    std::vector<VectorXd> slots(static_cast<std::size_t>(L));

    detail::parallel_projections(L, [&](Eigen::Index l) {
        const VectorXd theta = projections.directions().row(l).transpose();
        const VectorXd xs = mu.support() * theta;
        const VectorXd ys = (*nu.points) * theta;

        std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](Eigen::Index a, Eigen::Index b) { return xs(a) < xs(b); });

        std::vector<double> a(static_cast<std::size_t>(n)), c(static_cast<std::size_t>(n));
        double running = 0.0;
        for (Eigen::Index k = 0; k < n; ++k) {
            a[static_cast<std::size_t>(k)] = xs(order[static_cast<std::size_t>(k)]);
            running += mu.weights()(order[static_cast<std::size_t>(k)]);
            c[static_cast<std::size_t>(k)] = running;
        }
        detail::Sorted1d b(ys, nu.uniform() ? uniform_nu : *nu.weights);

        // Rectangle-method value, consistent with w2_1d_quantile.
        double value = 0.0;
        {
            std::size_t ia = 0, ib = 0;
            for (Eigen::Index j = 0; j < q.count(); ++j) {
                const double u = q.level(j);
                while (ia + 1 < c.size() && c[ia] < u) ++ia;
                while (ib + 1 < b.cum.size() && b.cum[ib] < u) ++ib;
                const double diff = a[ia] - b.values[ib];
                value += diff * diff;
            }
            value /= static_cast<double>(q.count());
        }

        // Breakpoint derivatives, then suffix sums: d/d rho_(i) = sum_{k>=i}.
        VectorXd g = VectorXd::Zero(n);
        double suffix = 0.0;
        for (Eigen::Index k = n - 1; k >= 0; --k) {
            const std::size_t ks = static_cast<std::size_t>(k);
            const double bval = b.quantile_mid(c[ks]);
            const double lead = a[ks] - bval;
            double dW = lead * lead;
            if (ks + 1 < a.size()) {
                const double next = a[ks + 1] - bval;
                dW -= next * next;
            }
            suffix += dW;
            g(order[ks]) = suffix;
        }
        slots[static_cast<std::size_t>(l)] = std::move(g);
        values[static_cast<std::size_t>(l)] = value;
    });

    grad = VectorXd::Zero(n);
    double total = 0.0;
    for (Eigen::Index l = 0; l < L; ++l) {
        grad += slots[static_cast<std::size_t>(l)];
        total += values[static_cast<std::size_t>(l)];
    }
    const double inv_L = 1.0 / static_cast<double>(L);
    grad *= inv_L;
    return total * inv_L;
}

inline VectorXd grad_sw2_weights(const GridMeasure& mu, const MeasureView& nu,
                                 const ProjectionSet& projections,
                                 const QuantileGrid& q = QuantileGrid()) {
    VectorXd grad;
    sw2_value_and_grad_weights(mu, nu, projections, q, grad);
    return grad;
}

/// Closed form for isotropic Gaussians sigma^2 I and s^2 I:
/// SW_2^2 = ||mu - m||^2 / d + (sigma - s)^2.
inline double sw2_gaussian_isotropic(const GaussianMeasure& g1, const GaussianMeasure& g2) {
    if (g1.dimension() != g2.dimension())
        throw std::invalid_argument("sw2_gaussian_isotropic: dimension mismatch");
    if (!g1.is_isotropic() || !g2.is_isotropic())
        throw std::invalid_argument("sw2_gaussian_isotropic: covariances must be isotropic");
    const double v1 = g1.covariance()(0, 0);
    const double v2 = g2.covariance()(0, 0);
    if (v1 < 0.0 || v2 < 0.0)
        throw numeric_error("sw2_gaussian_isotropic: negative variance");
    const double sigma = std::sqrt(v1);
    const double s = std::sqrt(v2);
    const double mean_term =
        (g1.mean() - g2.mean()).squaredNorm() / static_cast<double>(g1.dimension());
    return mean_term + (sigma - s) * (sigma - s);
}

namespace detail {

// Symmetric PSD square root; throws numeric_error beyond -1e-10 * scale.
inline MatrixXd psd_sqrt(const MatrixXd& m, const char* who) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(m);
    if (es.info() != Eigen::Success)
        throw numeric_error(std::string(who) + ": eigendecomposition failed");
    const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
    if (es.eigenvalues().minCoeff() < -1e-10 * scale)
        throw numeric_error(std::string(who) + ": matrix is not PSD");
    return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
           es.eigenvectors().transpose();
}

}  // namespace detail

/// Gaussian W_2^2 (Bures): ||m - mu||^2 + Tr(S + L - 2 (S^{1/2} L S^{1/2})^{1/2}).
inline double w2_gaussian_bures(const GaussianMeasure& g1, const GaussianMeasure& g2) {
    if (g1.dimension() != g2.dimension())
        throw std::invalid_argument("w2_gaussian_bures: dimension mismatch");
    const MatrixXd s_half = detail::psd_sqrt(g1.covariance(), "w2_gaussian_bures");
    MatrixXd cross = s_half * g2.covariance() * s_half;
    cross = 0.5 * (cross + cross.transpose());
    const MatrixXd cross_half = detail::psd_sqrt(cross, "w2_gaussian_bures");
    const double trace_term =
        g1.covariance().trace() + g2.covariance().trace() - 2.0 * cross_half.trace();
    const double value = (g1.mean() - g2.mean()).squaredNorm() + trace_term;
    return std::max(0.0, value);
}

}  // namespace swflow
