#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "gaitdex/gait_data.hpp"
#include "gaitdex/pipeline.hpp"

namespace gaitdex {

/// Floor applied to a zero score distance before taking the logarithm.
inline constexpr double kZeroDistanceFloor = 1e-12;

// --- FGDI -------------------------------------------------------------------

/// N x P principal component scores feeding an FGDI computation.
struct ScoreSource {
    enum class Kind { joint_specific, multi };

    Kind kind = Kind::multi;
    Eigen::MatrixXd scores;

    static ScoreSource joint_specific(const FpcaModel& model) { return {Kind::joint_specific, model.scores}; }
    static ScoreSource multi(const MfpcaModel& model) { return {Kind::multi, model.mscores}; }
};

struct DistanceIndex {
    std::vector<double> values;
    /// True where the distance fell below kZeroDistanceFloor and was floored.
    std::vector<bool> clamped;
};

/// FGDI_i = log(sqrt(sum_p (score_ip - healthy_mean_p)^2)).
DistanceIndex fgdi(const Eigen::MatrixXd& scores, const std::vector<bool>& healthy);
inline DistanceIndex fgdi(const ScoreSource& source, const std::vector<bool>& healthy) {
    return fgdi(source.scores, healthy);
}

/// z-score against the healthy subjects (sample sd, N_H - 1 denominator).
std::vector<double> sfgdi(std::span<const double> fgdi_values, const std::vector<bool>& healthy);

// --- Movement Analysis Profile -----------------------------------------------

struct MapProfile {
    std::vector<VariableId> variables;
    Eigen::MatrixXd values;  ///< N x V joint-specific sFGDI
    std::vector<std::vector<bool>> clamped;  ///< per variable, per subject
};

/// Fits a univariate FPCA per combined15 variable and scores each one alone.
MapProfile map_profile(const Cohort& cohort, double omega, Side pelvis_side = Side::left,
                       Smoothing smoothing = Smoothing::none);
/// Same, from already projected univariate scores.
MapProfile map_profile_from_scores(const std::vector<VariableId>& variables,
                                   const std::vector<Eigen::MatrixXd>& scores, const std::vector<bool>& healthy);

// --- GVS / GPS --------------------------------------------------------------

struct GvsGps {
    std::vector<VariableId> variables;
    Eigen::MatrixXd gvs;      ///< N x V root-mean-square deviation from the healthy mean curve
    std::vector<double> gps;  ///< N, RMS of the GVS over the set
};

GvsGps gvs_gps(const Cohort& cohort, const VariableSet& set);

// --- GDI --------------------------------------------------------------------

enum class BasisSource { published_supplement, surrogate_svd };
std::string_view basis_source_name(BasisSource source);

/// M x F orthonormal gait features (M = 9 variables x T points, F = 15).
struct GdiFeatureBasis {
    Eigen::MatrixXd features;
    BasisSource source = BasisSource::published_supplement;

    std::size_t grid_points() const { return static_cast<std::size_t>(features.rows()) / kJointCount; }
};

/// Plain CSV, no header, one row per stacked sample, one column per feature.
GdiFeatureBasis load_gdi_basis(const std::filesystem::path& path);
GdiFeatureBasis parse_gdi_basis(std::istream& in);
/// Left singular vectors of the healthy subjects' stacked left and right leg vectors.
GdiFeatureBasis surrogate_gdi_basis(const Cohort& cohort, std::size_t num_features = 15);
/// Throws DataError when the columns are not orthonormal within 1e-6.
void validate_gdi_basis(const GdiFeatureBasis& basis);

struct GdiResult {
    std::vector<double> gdi;
    std::vector<double> sgdi;  ///< 100 - 10 z
    std::vector<bool> clamped;
};

GdiResult gdi(const Cohort& cohort, Side side, const GdiFeatureBasis& basis);

// --- Overall Abnormality ----------------------------------------------------

/// PCA feature space built from the healthy subjects only.
struct OaModel {
    std::vector<VariableId> variables;
    std::size_t grid_points = 0;
    Eigen::VectorXd column_mean;      ///< M
    Eigen::VectorXd column_sd;        ///< M, zero-variance columns set to 1
    Eigen::MatrixXd eigenvectors;     ///< M x K
    Eigen::VectorXd eigenvalues;      ///< K, all >= 1
    Eigen::VectorXd healthy_mean;     ///< K, mean healthy projection
    Eigen::VectorXd healthy_sd;       ///< K, sample sd of healthy projections
    std::vector<std::string> warnings;

    std::size_t components() const { return static_cast<std::size_t>(eigenvalues.size()); }
};

OaModel fit_oa(const Cohort& cohort, const VariableSet& set);
/// N x K feature components of raw stacked gait vectors (N x M).
Eigen::MatrixXd oa_feature_scores(const OaModel& model, const Eigen::MatrixXd& stacked);
std::vector<double> oa_values(const OaModel& model, const Eigen::MatrixXd& stacked);
/// Inverse transform of feature components back to raw stacked vectors.
Eigen::MatrixXd oa_reconstruct(const OaModel& model, const Eigen::MatrixXd& feature_scores);

struct OaResult {
    std::vector<double> values;
    std::size_t components = 0;
    std::vector<std::string> warnings;
};

OaResult oa(const Cohort& cohort, const VariableSet& set);

// --- Approximation error ----------------------------------------------------

struct ApproximationError {
    std::vector<VariableId> variables;
    Eigen::MatrixXd per_variable;     ///< N x V RMSE
    std::vector<double> per_subject;  ///< mean over variables
};

/// Karhunen-Loeve reconstruction with every retained component of each variable.
ApproximationError fgdi_approximation_error(const Cohort& cohort, const PipelineModel& model,
                                            const VariableSet& set);
/// Reconstruction through the OA feature space (K Kaiser components).
ApproximationError oa_approximation_error(const Cohort& cohort, const VariableSet& set);

// --- Stability --------------------------------------------------------------

struct StabilityRow {
    std::string label;
    std::size_t optimal_components = 0;
    /// 100 x mean_i (FGDI_opt - FGDI_{opt+j}); nullopt when opt+j is out of range.
    std::vector<std::optional<double>> deltas;
};

struct StabilityTable {
    Mode mode = Mode::per_joint;
    std::vector<int> deltas;
    std::vector<StabilityRow> rows;
    std::vector<std::string> warnings;
};

/// per_joint varies K_u of each variable; combined/left/right vary W.
StabilityTable stability_analysis(const Cohort& cohort, Mode mode, const PipelineOptions& options,
                                  std::span<const int> deltas);

}  // namespace gaitdex
