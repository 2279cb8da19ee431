#include "gaitdex/fpca.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

#include "gaitdex/errors.hpp"

namespace gaitdex {

namespace {

constexpr double kCumulativeSlack = 1e-12;

/// Smallest K whose cumulative share of `total` reaches omega.
std::size_t truncation_for(const Eigen::VectorXd& positive, double total, double omega) {
    double cumulative = 0.0;
    for (Eigen::Index k = 0; k < positive.size(); ++k) {
        cumulative += positive[k];
        if (cumulative / total >= omega - kCumulativeSlack) return static_cast<std::size_t>(k + 1);
    }
    return static_cast<std::size_t>(positive.size());
}

struct SmoothedCovariance {
    Eigen::MatrixXd covariance;
    double penalty = 0.0;
};

// Tensor-product Whittaker smoother S C S with S = (I + lambda D2'D2)^-1, the
// penalty weight minimising generalised cross-validation over a log grid.
SmoothedCovariance smooth_covariance(const Eigen::MatrixXd& raw) {
    const Eigen::Index t = raw.rows();
    if (t < 3) return {raw, 0.0};

    Eigen::MatrixXd d2 = Eigen::MatrixXd::Zero(t - 2, t);
    for (Eigen::Index r = 0; r < t - 2; ++r) {
        d2(r, r) = 1.0;
        d2(r, r + 1) = -2.0;
        d2(r, r + 2) = 1.0;
    }
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> penalty_eig(d2.transpose() * d2);
    const Eigen::MatrixXd& q = penalty_eig.eigenvectors();
    const Eigen::VectorXd lambda = penalty_eig.eigenvalues().cwiseMax(0.0);
    const Eigen::MatrixXd rotated = q.transpose() * raw * q;

    const double n2 = static_cast<double>(t) * static_cast<double>(t);
    double best_gcv = std::numeric_limits<double>::infinity();
    double best_penalty = 0.0;
    Eigen::VectorXd best_shrink = Eigen::VectorXd::Ones(t);
    for (int step = 0; step <= 60; ++step) {
        const double penalty = std::pow(10.0, -6.0 + 0.2 * step);
        const Eigen::VectorXd shrink = (1.0 + penalty * lambda.array()).inverse().matrix();
        const double trace = shrink.sum() * shrink.sum();
        const Eigen::MatrixXd residual =
            rotated.array() * (1.0 - (shrink * shrink.transpose()).array());
        const double denom = 1.0 - trace / n2;
        if (denom <= 0.0) continue;
        const double gcv = (residual.squaredNorm() / n2) / (denom * denom);
        if (gcv < best_gcv) {
            best_gcv = gcv;
            best_penalty = penalty;
            best_shrink = shrink;
        }
    }
    Eigen::MatrixXd smoothed = q * (best_shrink.asDiagonal() * rotated * best_shrink.asDiagonal()) * q.transpose();
    smoothed = 0.5 * (smoothed + smoothed.transpose());
    return {smoothed, best_penalty};
}

}  // namespace

std::string_view smoothing_name(Smoothing smoothing) {
    return smoothing == Smoothing::none ? "none" : "penalized";
}

std::optional<Smoothing> parse_smoothing(std::string_view name) {
    if (name == "none") return Smoothing::none;
    if (name == "penalized") return Smoothing::penalized;
    return std::nullopt;
}

Eigen::VectorXd quadrature_weights(const GridSpec& grid) {
    const auto t = static_cast<Eigen::Index>(grid.size());
    const double h = 1.0 / static_cast<double>(t - 1);
    Eigen::VectorXd w = Eigen::VectorXd::Constant(t, h);
    w[0] = 0.5 * h;
    w[t - 1] = 0.5 * h;
    return w;
}

double inner_product(const Eigen::VectorXd& weights, const Eigen::VectorXd& f, const Eigen::VectorXd& g) {
    return (weights.array() * f.array() * g.array()).sum();
}

CenteredCurves center(const Eigen::MatrixXd& curves) {
    if (curves.rows() < 2) throw ArgumentError("centering needs at least 2 curves");
    CenteredCurves out;
    out.mean = curves.colwise().mean().transpose();
    out.centered = curves.rowwise() - out.mean.transpose();
    return out;
}

void apply_sign_convention(Eigen::Ref<Eigen::VectorXd> vector) {
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index l = 0; l < vector.size(); ++l) {
        if (std::abs(vector[l]) > best) {
            best = std::abs(vector[l]);
            arg = l;
        }
    }
    if (vector.size() > 0 && vector[arg] < 0.0) vector = -vector;
}

FpcaModel fit_univariate_fpca(const Eigen::MatrixXd& curves, const GridSpec& grid, const FpcaOptions& options,
                              VariableId variable) {
    if (!(options.omega > 0.0 && options.omega <= 1.0)) throw ArgumentError("omega must lie in (0, 1]");
    if (curves.rows() < 2) throw ArgumentError("FPCA needs at least 2 curves");
    if (static_cast<std::size_t>(curves.cols()) != grid.size()) {
        throw ArgumentError("curve length does not match the grid");
    }

    const auto [mean, centered] = center(curves);
    const auto n = static_cast<double>(curves.rows());
    const Eigen::MatrixXd raw_cov = (centered.transpose() * centered) / (n - 1.0);

    const double scale = 1.0 + curves.squaredNorm() / static_cast<double>(curves.size());
    const Eigen::VectorXd weights = quadrature_weights(grid);
    if ((raw_cov.diagonal().array() * weights.array()).sum() <= 1e-24 * scale) {
        throw DegenerateError("variable " + variable.label() + ": all curves are identical (zero covariance)");
    }

    FpcaModel model;
    model.variable = variable;
    model.grid = grid;
    model.mean = mean;
    model.omega = options.omega;
    model.smoothing = options.smoothing;

    Eigen::MatrixXd cov = raw_cov;
    if (options.smoothing == Smoothing::penalized) {
        auto smoothed = smooth_covariance(raw_cov);
        cov = std::move(smoothed.covariance);
        model.smoothing_penalty = smoothed.penalty;
    }

    // Integral operator on the grid: C W phi = lambda phi. Symmetrised as
    // W^1/2 C W^1/2 u = lambda u with phi = W^-1/2 u.
    const Eigen::VectorXd sqrt_w = weights.cwiseSqrt();
    const Eigen::MatrixXd op = sqrt_w.asDiagonal() * cov * sqrt_w.asDiagonal();
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(op);
    if (eig.info() != Eigen::Success) throw DegenerateError("eigendecomposition failed for " + variable.label());

    const Eigen::Index t = op.rows();
    const Eigen::VectorXd values = eig.eigenvalues().reverse();
    const Eigen::MatrixXd vectors = eig.eigenvectors().rowwise().reverse();

    const double trace = op.trace();
    const double tol = 1e-12 * std::max(trace, std::numeric_limits<double>::min());
    Eigen::Index positive = 0;
    while (positive < t && values[positive] > tol) ++positive;
    if (positive == 0) {
        throw DegenerateError("variable " + variable.label() + ": covariance has no positive eigenvalue");
    }
    const Eigen::VectorXd spectrum = values.head(positive);
    model.total_variance = spectrum.sum();
    model.available_components = static_cast<std::size_t>(positive);

    std::size_t k = truncation_for(spectrum, model.total_variance, options.omega);
    if (options.num_components) {
        if (*options.num_components < 1 || *options.num_components > model.available_components) {
            throw ArgumentError("variable " + variable.label() + ": requested " +
                                std::to_string(*options.num_components) + " components, " +
                                std::to_string(model.available_components) + " available");
        }
        k = *options.num_components;
    }
    const auto kk = static_cast<Eigen::Index>(k);

    model.eigenvalues = spectrum.head(kk);
    model.eigenfunctions = sqrt_w.cwiseInverse().asDiagonal() * vectors.leftCols(kk);
    for (Eigen::Index c = 0; c < kk; ++c) apply_sign_convention(model.eigenfunctions.col(c));

    model.pve.resize(kk);
    double cumulative = 0.0;
    for (Eigen::Index c = 0; c < kk; ++c) {
        cumulative += spectrum[c];
        model.pve[c] = cumulative / model.total_variance;
    }

    if (options.smoothing == Smoothing::penalized) {
        model.noise_variance = std::max(0.0, (raw_cov.diagonal() - cov.diagonal()).mean());
    } else if (kk < t) {
        // White noise of variance s2 adds about s2 * h to every eigenvalue of the
        // weighted operator, h the grid spacing.
        const double residual = values.tail(t - kk).cwiseMax(0.0).sum();
        const double spacing = 1.0 / static_cast<double>(t - 1);
        model.noise_variance = residual / (static_cast<double>(t - kk) * spacing);
    }

    model.scores = project_scores(model, curves);
    return model;
}

Eigen::MatrixXd project_scores(const FpcaModel& model, const Eigen::MatrixXd& curves) {
    if (curves.cols() != model.mean.size()) throw ArgumentError("curve length does not match the model grid");
    const Eigen::VectorXd weights = quadrature_weights(model.grid);
    const Eigen::MatrixXd centered = curves.rowwise() - model.mean.transpose();
    return centered * weights.asDiagonal() * model.eigenfunctions;
}

Eigen::VectorXd reconstruct_from_scores(const FpcaModel& model, const Eigen::VectorXd& scores,
                                        std::size_t num_components) {
    if (num_components < 1 || num_components > model.components()) {
        throw ArgumentError("num_components must lie in [1, " + std::to_string(model.components()) + "]");
    }
    const auto k = static_cast<Eigen::Index>(num_components);
    return model.mean + model.eigenfunctions.leftCols(k) * scores.head(k);
}

Eigen::VectorXd reconstruct(const FpcaModel& model, std::size_t subject_index, std::size_t num_components) {
    if (subject_index >= static_cast<std::size_t>(model.scores.rows())) {
        throw ArgumentError("subject index " + std::to_string(subject_index) + " out of range");
    }
    return reconstruct_from_scores(model, model.scores.row(static_cast<Eigen::Index>(subject_index)).transpose(),
                                   num_components);
}

double rmse(std::span<const double> observed, std::span<const double> approx) {
    if (observed.size() != approx.size()) throw ArgumentError("rmse: length mismatch");
    if (observed.empty()) throw ArgumentError("rmse: empty input");
    double sum = 0.0;
    for (std::size_t l = 0; l < observed.size(); ++l) {
        const double d = observed[l] - approx[l];
        sum += d * d;
    }
    return std::sqrt(sum / static_cast<double>(observed.size()));
}

double rmse(const Eigen::VectorXd& observed, const Eigen::VectorXd& approx) {
    return rmse(std::span<const double>(observed.data(), static_cast<std::size_t>(observed.size())),
                std::span<const double>(approx.data(), static_cast<std::size_t>(approx.size())));
}

double mean_rmse(std::span<const double> per_variable) {
    if (per_variable.empty()) throw ArgumentError("mean_rmse: no variables");
    double sum = 0.0;
    for (double v : per_variable) sum += v;
    return sum / static_cast<double>(per_variable.size());
}

}  // namespace gaitdex
