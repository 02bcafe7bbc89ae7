#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <utility>
#include <vector>

#include "swflow/errors.hpp"
#include "swflow/rng.hpp"

namespace swflow {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Empirical measure (1/n) sum of Diracs at the rows of `points`.
/// Weights are uniform by construction and not stored.
class ParticleCloud {
public:
    explicit ParticleCloud(MatrixXd points) : points_(std::move(points)) {
        if (points_.rows() < 1 || points_.cols() < 1)
            throw std::invalid_argument("ParticleCloud: need n >= 1 points in d >= 1");
        if (!points_.allFinite())
            throw std::invalid_argument("ParticleCloud: coordinates must be finite");
    }

    Eigen::Index size() const { return points_.rows(); }
    Eigen::Index dimension() const { return points_.cols(); }
    const MatrixXd& points() const { return points_; }
    double weight() const { return 1.0 / static_cast<double>(points_.rows()); }

    VectorXd mean() const { return points_.colwise().mean(); }

private:
    MatrixXd points_;
};

/// Discrete measure on a fixed support with simplex weights; `cell_volume`
/// is the volume element each support point represents, used to approximate
/// Lebesgue densities as rho_i / l.
class GridMeasure {
public:
    GridMeasure(MatrixXd support, VectorXd weights, double cell_volume)
        : support_(std::move(support)), weights_(std::move(weights)), cell_volume_(cell_volume) {
        if (support_.rows() < 1 || support_.cols() < 1)
            throw std::invalid_argument("GridMeasure: need N >= 1 support points in d >= 1");
        if (weights_.size() != support_.rows())
            throw std::invalid_argument("GridMeasure: weight count must match support");
        if (!(cell_volume_ > 0.0))
            throw std::invalid_argument("GridMeasure: cell volume must be positive");
        if (!support_.allFinite() || !weights_.allFinite())
            throw std::invalid_argument("GridMeasure: entries must be finite");
        if ((weights_.array() < 0.0).any())
            throw std::invalid_argument("GridMeasure: weights must be nonnegative");
        if (std::abs(weights_.sum() - 1.0) > 1e-12)
            throw std::invalid_argument("GridMeasure: weights must sum to 1 within 1e-12");
        check_distinct_support();
    }

    Eigen::Index size() const { return support_.rows(); }
    Eigen::Index dimension() const { return support_.cols(); }
    const MatrixXd& support() const { return support_; }
    const VectorXd& weights() const { return weights_; }
    double cell_volume() const { return cell_volume_; }

    /// Same support and volume, new simplex weights.
    GridMeasure with_weights(VectorXd weights) const {
        GridMeasure out(*this);
        if (weights.size() != out.weights_.size())
            throw std::invalid_argument("GridMeasure: weight count must match support");
        if ((weights.array() < 0.0).any() || std::abs(weights.sum() - 1.0) > 1e-12)
            throw std::invalid_argument("GridMeasure: weights must lie on the simplex");
        out.weights_ = std::move(weights);
        return out;
    }

    VectorXd mean() const { return support_.transpose() * weights_; }

private:
    void check_distinct_support() const {
        const Eigen::Index n = support_.rows();
        std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
            for (Eigen::Index c = 0; c < support_.cols(); ++c) {
                if (support_(a, c) != support_(b, c)) return support_(a, c) < support_(b, c);
            }
            return false;
        });
        for (Eigen::Index i = 0; i + 1 < n; ++i) {
            if (support_.row(order[static_cast<std::size_t>(i)]) ==
                support_.row(order[static_cast<std::size_t>(i + 1)]))
                throw std::invalid_argument("GridMeasure: support points must be pairwise distinct");
        }
    }

    MatrixXd support_;
    VectorXd weights_;
    double cell_volume_;
};

/// Gaussian N(mean, covariance) with symmetric PSD covariance. Symmetry is
/// checked at construction; positive semi-definiteness is enforced where it
/// is actually needed (sampling, closed-form distances).
class GaussianMeasure {
public:
    GaussianMeasure(VectorXd mean, MatrixXd covariance)
        : mean_(std::move(mean)), covariance_(std::move(covariance)) {
        if (mean_.size() < 1) throw std::invalid_argument("GaussianMeasure: need d >= 1");
        if (covariance_.rows() != mean_.size() || covariance_.cols() != mean_.size())
            throw std::invalid_argument("GaussianMeasure: covariance shape must match mean");
        if (!mean_.allFinite() || !covariance_.allFinite())
            throw std::invalid_argument("GaussianMeasure: entries must be finite");
        const double scale = std::max(1.0, covariance_.cwiseAbs().maxCoeff());
        if ((covariance_ - covariance_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
            throw std::invalid_argument("GaussianMeasure: covariance must be symmetric within 1e-12");
    }

    static GaussianMeasure isotropic(VectorXd mean, double variance) {
        const Eigen::Index d = mean.size();
        return GaussianMeasure(std::move(mean),
                               MatrixXd::Identity(d, d) * variance);
    }

    Eigen::Index dimension() const { return mean_.size(); }
    const VectorXd& mean() const { return mean_; }
    const MatrixXd& covariance() const { return covariance_; }

    /// True when the covariance is variance * I within `tol`.
    bool is_isotropic(double tol = 1e-12) const {
        const double v = covariance_(0, 0);
        const double scale = std::max(1.0, std::abs(v));
        MatrixXd diff = covariance_ - v * MatrixXd::Identity(dimension(), dimension());
        return diff.cwiseAbs().maxCoeff() <= tol * scale;
    }

private:
    VectorXd mean_;
    MatrixXd covariance_;
};

/// L unit directions on S^{d-1}, drawn once and reused so Monte-Carlo
/// estimates are reproducible from the recorded seed alone.
class ProjectionSet {
public:
    ProjectionSet(MatrixXd directions, std::uint64_t seed)
        : directions_(std::move(directions)), seed_(seed) {
        if (directions_.rows() < 1 || directions_.cols() < 1)
            throw std::invalid_argument("ProjectionSet: need L >= 1 directions in d >= 1");
        for (Eigen::Index i = 0; i < directions_.rows(); ++i) {
            if (std::abs(directions_.row(i).norm() - 1.0) > 1e-12)
                throw std::invalid_argument("ProjectionSet: rows must be unit-norm");
        }
    }

    Eigen::Index count() const { return directions_.rows(); }
    Eigen::Index dimension() const { return directions_.cols(); }
    const MatrixXd& directions() const { return directions_; }
    std::uint64_t seed() const { return seed_; }

private:
    MatrixXd directions_;
    std::uint64_t seed_;
};

/// Non-owning view of a discrete measure: atom locations plus weights
/// (nullptr means uniform). Lets estimators accept clouds and grids through
/// one signature.
struct MeasureView {
    const MatrixXd* points = nullptr;
    const VectorXd* weights = nullptr;  // nullptr -> uniform 1/n

    MeasureView(const ParticleCloud& cloud) : points(&cloud.points()) {}
    MeasureView(const GridMeasure& grid) : points(&grid.support()), weights(&grid.weights()) {}
    MeasureView(const MatrixXd& pts, const VectorXd* w) : points(&pts), weights(w) {}

    Eigen::Index size() const { return points->rows(); }
    Eigen::Index dimension() const { return points->cols(); }
    bool uniform() const { return weights == nullptr; }
    double weight_at(Eigen::Index i) const {
        return uniform() ? 1.0 / static_cast<double>(size()) : (*weights)(i);
    }
};

/// Uniform directions on S^{d-1}: normalized standard Gaussian draws.
/// Same (L, d, seed) always yields the same set.
inline ProjectionSet sample_unit_sphere(Eigen::Index L, Eigen::Index d, std::uint64_t seed) {
    if (L < 1 || d < 1) throw std::invalid_argument("sample_unit_sphere: need L >= 1 and d >= 1");
    Rng rng(seed);
    MatrixXd dirs(L, d);
    for (Eigen::Index i = 0; i < L; ++i) {
        double norm2 = 0.0;
        do {
            for (Eigen::Index j = 0; j < d; ++j) {
                const double z = rng.gaussian();
                dirs(i, j) = z;
            }
            norm2 = dirs.row(i).squaredNorm();
        } while (norm2 == 0.0);
        dirs.row(i) /= std::sqrt(norm2);
    }
    return ProjectionSet(std::move(dirs), seed);
}

/// 1D pushforward by x -> <x, direction>. Returns atom values and weights.
inline std::pair<VectorXd, VectorXd> project_1d(const MeasureView& measure,
                                                const VectorXd& direction) {
    if (direction.size() != measure.dimension())
        throw std::invalid_argument("project_1d: direction dimension mismatch");
    VectorXd values = (*measure.points) * direction;
    VectorXd weights;
    if (measure.uniform()) {
        weights = VectorXd::Constant(measure.size(),
                                     1.0 / static_cast<double>(measure.size()));
    } else {
        weights = *measure.weights;
    }
    return {std::move(values), std::move(weights)};
}

/// i.i.d. Gaussian draws via the lower-triangular Cholesky factor. Near-PSD
/// covariances (eigenvalues >= -1e-10 * scale) fall back to an eigenvalue
/// square root with negatives clamped to zero.
inline ParticleCloud sample_gaussian(const GaussianMeasure& g, Eigen::Index n, Rng& rng) {
    if (n < 1) throw std::invalid_argument("sample_gaussian: need n >= 1");
    const Eigen::Index d = g.dimension();

    MatrixXd factor;
    Eigen::LLT<MatrixXd> llt(g.covariance());
    if (llt.info() == Eigen::Success) {
        factor = llt.matrixL();
    } else {
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(g.covariance());
        if (es.info() != Eigen::Success)
            throw numeric_error("sample_gaussian: eigendecomposition failed");
        const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
        if (es.eigenvalues().minCoeff() < -1e-10 * scale)
            throw numeric_error("sample_gaussian: covariance is not PSD");
        factor = es.eigenvectors() *
                 es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
    }

    MatrixXd z(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < d; ++j) z(i, j) = rng.gaussian();
    MatrixXd pts = z * factor.transpose();
    pts.rowwise() += g.mean().transpose();
    return ParticleCloud(std::move(pts));
}

}  // namespace swflow
