#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>

#include <Eigen/Core>

#include "gaitdex/gait_data.hpp"

namespace gaitdex {

enum class Smoothing { none, penalized };

std::string_view smoothing_name(Smoothing smoothing);
std::optional<Smoothing> parse_smoothing(std::string_view name);

/// Trapezoidal weights on the grid with the cycle rescaled to unit length.
Eigen::VectorXd quadrature_weights(const GridSpec& grid);

/// Quadrature inner product <f, g> = sum_l w_l f_l g_l.
double inner_product(const Eigen::VectorXd& weights, const Eigen::VectorXd& f, const Eigen::VectorXd& g);

struct CenteredCurves {
    Eigen::VectorXd mean;      ///< pointwise sample mean, length T
    Eigen::MatrixXd centered;  ///< N x T, rows sum pointwise to zero
};

/// Subtracts the pointwise mean over all rows. Requires N >= 2.
CenteredCurves center(const Eigen::MatrixXd& curves);

struct FpcaOptions {
    /// Target cumulative proportion of variance explained, in (0, 1].
    double omega = 0.99;
    Smoothing smoothing = Smoothing::none;
    /// Overrides the omega rule with a fixed component count (stability analysis).
    std::optional<std::size_t> num_components;
};

/// Univariate functional PCA of one kinematic variable.
struct FpcaModel {
    VariableId variable;
    GridSpec grid;
    Eigen::VectorXd mean;            ///< length T
    Eigen::MatrixXd eigenfunctions;  ///< T x K, orthonormal under the quadrature inner product
    Eigen::VectorXd eigenvalues;     ///< K, descending
    Eigen::MatrixXd scores;          ///< N x K
    Eigen::VectorXd pve;             ///< K, cumulative proportion of variance explained
    double omega = 0.99;
    double noise_variance = 0.0;
    /// Sum of all positive eigenvalues; the PVE denominator.
    double total_variance = 0.0;
    /// Number of positive eigenvalues of the estimated covariance.
    std::size_t available_components = 0;
    Smoothing smoothing = Smoothing::none;
    /// Roughness penalty picked by GCV; zero when smoothing is none.
    double smoothing_penalty = 0.0;

    std::size_t components() const { return static_cast<std::size_t>(eigenvalues.size()); }
};

/// Fits the model to N x T curves sampled on `grid`.
///
/// Throws DegenerateError when every curve is identical and ArgumentError for
/// omega outside (0, 1], N < 2 or a component override outside
/// [1, available_components].
FpcaModel fit_univariate_fpca(const Eigen::MatrixXd& curves, const GridSpec& grid, const FpcaOptions& options,
                              VariableId variable = {});

/// Scores of arbitrary curves: quadrature inner products of (curve - mean)
/// with each retained eigenfunction. Fitted scores are produced by this
/// same routine.
Eigen::MatrixXd project_scores(const FpcaModel& model, const Eigen::MatrixXd& curves);

/// Truncated Karhunen-Loeve approximation mean + sum_{k<n} score_k * phi_k.
Eigen::VectorXd reconstruct(const FpcaModel& model, std::size_t subject_index, std::size_t num_components);
Eigen::VectorXd reconstruct_from_scores(const FpcaModel& model, const Eigen::VectorXd& scores,
                                        std::size_t num_components);

double rmse(std::span<const double> observed, std::span<const double> approx);
double rmse(const Eigen::VectorXd& observed, const Eigen::VectorXd& approx);
/// Mean of per-variable RMSE values.
double mean_rmse(std::span<const double> per_variable);

/// Flips `vector` so that its largest-magnitude entry is positive, ties to the
/// earliest index.
void apply_sign_convention(Eigen::Ref<Eigen::VectorXd> vector);

}  // namespace gaitdex
