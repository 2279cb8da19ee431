#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gaitdex/fpca.hpp"

namespace gaitdex {

struct ScoreBlock {
    VariableId variable;
    std::size_t begin = 0;  ///< first column of the block in the stacked matrix
    std::size_t end = 0;    ///< one past the last column
};

/// Univariate scores of several variables laid side by side (N x K+).
struct ScoreStack {
    Eigen::MatrixXd matrix;
    std::vector<ScoreBlock> blocks;

    std::size_t k_plus() const { return static_cast<std::size_t>(matrix.cols()); }
};

/// Concatenates the fitted score matrices in the given (canonical) order.
ScoreStack stack_scores(const std::vector<const FpcaModel*>& models);
/// Same layout with caller-provided score matrices, e.g. projections of new subjects.
ScoreStack stack_scores(const std::vector<const FpcaModel*>& models, const std::vector<Eigen::MatrixXd>& scores);

/// Z = Xi' Xi / (N - 1).
Eigen::MatrixXd joint_covariance(const ScoreStack& stack);

struct MfpcaOptions {
    double omega = 0.99;
    /// Fixed W instead of the omega rule (stability analysis). Still capped below K+.
    std::optional<std::size_t> num_components;
};

struct MfpcaModel {
    ScoreStack source;
    Eigen::MatrixXd eigenvectors;  ///< K+ x W, unit columns
    Eigen::VectorXd eigenvalues;   ///< W, descending
    /// (kappa' Xi' Xi kappa)^(1/2) per component, from the fitted stack.
    Eigen::VectorXd projection_norms;
    Eigen::MatrixXd mscores;  ///< N x W
    Eigen::VectorXd pve;      ///< cumulative, length W
    double omega = 0.99;
    double total_variance = 0.0;
    std::size_t available_components = 0;
    std::vector<std::string> warnings;

    std::size_t components() const { return static_cast<std::size_t>(eigenvalues.size()); }
};

/// Eigen-analysis of the joint score covariance. W is the smallest count
/// reaching omega over the positive spectrum, kept strictly below K+.
MfpcaModel fit_mfpca(const ScoreStack& stack, const MfpcaOptions& options);

/// rho_i,w = ((N-1) nu_w)^(1/2) (kappa_w' Xi' Xi kappa_w)^(-1/2) Xi_i kappa_w,
/// with N, Xi from the fitted stack and Xi_i rows of `xi`.
Eigen::MatrixXd project_mscores(const MfpcaModel& model, const Eigen::MatrixXd& xi);

}  // namespace gaitdex
