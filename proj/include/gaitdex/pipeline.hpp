#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "gaitdex/fpca.hpp"
#include "gaitdex/gait_data.hpp"
#include "gaitdex/mfpca.hpp"

namespace gaitdex {

/// Which variables an index summarises: both legs, one leg, or each variable alone.
enum class Mode { combined, left, right, per_joint };

std::string_view mode_name(Mode mode);
std::optional<Mode> parse_mode(std::string_view name);

/// combined -> combined15, left/right -> leg9, per_joint -> the combined15
/// variables, each scored on its own.
VariableSet variable_set_for(Mode mode, Side pelvis_side);

struct PipelineOptions {
    double omega = 0.99;
    Side pelvis_side = Side::left;
    Smoothing smoothing = Smoothing::none;
    std::vector<Mode> modes = {Mode::combined};
};

/// Everything fitted from one cohort: univariate FPCA per variable used by any
/// requested mode and one MFPCA per multi-variable mode.
struct PipelineModel {
    GridSpec grid;
    PipelineOptions options;
    std::vector<std::string> subject_ids;
    std::vector<bool> healthy;
    std::map<VariableId, FpcaModel> univariate;
    std::map<Mode, MfpcaModel> multivariate;
    std::vector<std::string> warnings;

    bool has_mode(Mode mode) const;
    const FpcaModel& fpca(VariableId variable) const;
    const MfpcaModel& mfpca(Mode mode) const;
    std::vector<const FpcaModel*> fpca_models(const VariableSet& set) const;
};

/// Fits every requested mode. Throws ArgumentError for an empty mode list or
/// fewer than two healthy subjects.
PipelineModel fit_pipeline(const Cohort& cohort, const PipelineOptions& options);

/// Scores of a cohort in a fitted model's feature space.
struct ProjectedScores {
    std::map<VariableId, Eigen::MatrixXd> univariate;
    std::map<Mode, Eigen::MatrixXd> multivariate;
};

/// Projects `cohort` (which must share the model grid) through the fitted
/// eigenfunctions and eigenvectors. For the training cohort this reproduces
/// the fitted scores exactly.
ProjectedScores project_cohort(const PipelineModel& model, const Cohort& cohort);

/// Per-mode component counts, e.g. {"combined": 50}; per_joint lists K_u.
std::vector<std::string> component_summary(const PipelineModel& model);

void save_pipeline(const PipelineModel& model, const std::filesystem::path& path);
PipelineModel load_pipeline(const std::filesystem::path& path);

}  // namespace gaitdex
