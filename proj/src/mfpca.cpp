#include "gaitdex/mfpca.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

#include "gaitdex/errors.hpp"

namespace gaitdex {

ScoreStack stack_scores(const std::vector<const FpcaModel*>& models) {
    std::vector<Eigen::MatrixXd> scores;
    scores.reserve(models.size());
    for (const auto* m : models) scores.push_back(m->scores);
    return stack_scores(models, scores);
}

ScoreStack stack_scores(const std::vector<const FpcaModel*>& models, const std::vector<Eigen::MatrixXd>& scores) {
    if (models.empty()) throw ArgumentError("stack_scores: no models");
    if (models.size() != scores.size()) throw ArgumentError("stack_scores: one score matrix per model required");
    const Eigen::Index n = scores.front().rows();
    Eigen::Index total = 0;
    for (std::size_t u = 0; u < models.size(); ++u) {
        if (scores[u].rows() != n) {
            throw ArgumentError("stack_scores: variable " + models[u]->variable.label() + " has " +
                                std::to_string(scores[u].rows()) + " subjects, expected " + std::to_string(n));
        }
        if (scores[u].cols() != static_cast<Eigen::Index>(models[u]->components())) {
            throw ArgumentError("stack_scores: score width does not match the model truncation");
        }
        total += scores[u].cols();
    }

    ScoreStack stack;
    stack.matrix.resize(n, total);
    Eigen::Index col = 0;
    for (std::size_t u = 0; u < models.size(); ++u) {
        const Eigen::Index k = scores[u].cols();
        stack.matrix.middleCols(col, k) = scores[u];
        stack.blocks.push_back({models[u]->variable, static_cast<std::size_t>(col), static_cast<std::size_t>(col + k)});
        col += k;
    }
    return stack;
}

Eigen::MatrixXd joint_covariance(const ScoreStack& stack) {
    const Eigen::Index n = stack.matrix.rows();
    if (n < 2) throw ArgumentError("joint covariance needs at least 2 subjects");
    Eigen::MatrixXd z = stack.matrix.transpose() * stack.matrix / static_cast<double>(n - 1);
    return 0.5 * (z + z.transpose());
}

MfpcaModel fit_mfpca(const ScoreStack& stack, const MfpcaOptions& options) {
    if (!(options.omega > 0.0 && options.omega <= 1.0)) throw ArgumentError("omega must lie in (0, 1]");
    const Eigen::MatrixXd z = joint_covariance(stack);
    const Eigen::Index k_plus = z.rows();

    const double trace = z.trace();
    if (!(trace > 0.0)) throw DegenerateError("joint score covariance is numerically zero");
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(z);
    if (eig.info() != Eigen::Success) throw DegenerateError("eigendecomposition of the joint covariance failed");
    const Eigen::VectorXd values = eig.eigenvalues().reverse();
    const Eigen::MatrixXd vectors = eig.eigenvectors().rowwise().reverse();

    const double tol = 1e-12 * trace;
    Eigen::Index positive = 0;
    while (positive < k_plus && values[positive] > tol) ++positive;
    if (positive == 0) throw DegenerateError("joint score covariance is numerically zero");

    MfpcaModel model;
    model.source = stack;
    model.omega = options.omega;
    model.total_variance = values.head(positive).sum();
    model.available_components = static_cast<std::size_t>(positive);

    Eigen::Index w = 0;
    if (options.num_components) {
        w = static_cast<Eigen::Index>(*options.num_components);
        if (w < 1 || w > positive) {
            throw ArgumentError("requested " + std::to_string(w) + " multivariate components, " +
                                std::to_string(positive) + " available");
        }
    } else {
        double cumulative = 0.0;
        for (w = 0; w < positive;) {
            cumulative += values[w];
            ++w;
            if (cumulative / model.total_variance >= options.omega - 1e-12) break;
        }
    }
    if (w >= k_plus && k_plus > 1) {
        w = k_plus - 1;
        model.warnings.push_back("omega " + std::to_string(options.omega) + " requires all " +
                                 std::to_string(k_plus) + " components; keeping W = " + std::to_string(w) +
                                 " < K+");
    }

    model.eigenvalues = values.head(w);
    model.eigenvectors = vectors.leftCols(w);
    for (Eigen::Index c = 0; c < w; ++c) apply_sign_convention(model.eigenvectors.col(c));

    model.pve.resize(w);
    double cumulative = 0.0;
    for (Eigen::Index c = 0; c < w; ++c) {
        cumulative += values[c];
        model.pve[c] = cumulative / model.total_variance;
    }

    const Eigen::MatrixXd projected = stack.matrix * model.eigenvectors;
    model.projection_norms = projected.colwise().norm().transpose();
    model.mscores = project_mscores(model, stack.matrix);
    return model;
}

Eigen::MatrixXd project_mscores(const MfpcaModel& model, const Eigen::MatrixXd& xi) {
    if (xi.cols() != model.eigenvectors.rows()) throw ArgumentError("score stack width does not match the model");
    const auto n = static_cast<double>(model.source.matrix.rows());
    Eigen::VectorXd prefactor(model.eigenvalues.size());
    for (Eigen::Index w = 0; w < prefactor.size(); ++w) {
        prefactor[w] = std::sqrt((n - 1.0) * model.eigenvalues[w]) / model.projection_norms[w];
    }
    return (xi * model.eigenvectors) * prefactor.asDiagonal();
}

}  // namespace gaitdex
