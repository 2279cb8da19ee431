#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "gaitdex/gait_data.hpp"
#include "gaitdex/indices.hpp"
#include "gaitdex/pipeline.hpp"

namespace gaitdex {

struct IndexSelection {
    bool fgdi = true;
    bool gps = false;
    bool oa = false;
    bool gdi = false;
};

/// Comma separated subset of {fgdi, gdi, gps, oa}. Throws ArgumentError on unknown names.
IndexSelection parse_index_selection(std::string_view list);

struct ReportOptions {
    IndexSelection indices;
    /// Required when indices.gdi is set. The cohort is resampled to its grid when needed.
    std::optional<GdiFeatureBasis> gdi_basis;
};

/// Per-subject index values for one scored cohort.
struct IndexReport {
    std::vector<std::string> subject_ids;
    std::vector<bool> healthy;
    std::vector<ClinicalMetadata> metadata;

    /// Named index columns in output order, e.g. fgdi_combined, sfgdi_combined, gps_left.
    std::vector<std::string> column_names;
    std::vector<std::vector<double>> columns;

    std::vector<VariableId> map_variables;
    Eigen::MatrixXd map;  ///< N x map_variables
    std::vector<VariableId> gvs_variables;
    Eigen::MatrixXd gvs;  ///< N x gvs_variables

    std::vector<std::vector<std::string>> flags;  ///< per subject
    std::vector<std::string> notices;
    std::optional<BasisSource> gdi_basis;

    std::size_t size() const { return subject_ids.size(); }
    const std::vector<double>* column(std::string_view name) const;
    std::optional<std::size_t> find_subject(std::string_view subject_id) const;
};

/// Scores `cohort` in the feature space of `model`. Healthy reference
/// statistics come from the cohort's own healthy subjects; with fewer than two
/// of those the model's training healthy subjects are used instead.
IndexReport build_report(const PipelineModel& model, const Cohort& cohort, const ReportOptions& options);

/// subject_id, healthy, index columns, gvs_<variable>, map_<variable>, flags (';' separated).
void write_report_csv(const IndexReport& report, std::ostream& out);
IndexReport read_report_csv(std::istream& in);
IndexReport read_report_csv(const std::filesystem::path& path);

nlohmann::json metadata_to_json(const ClinicalMetadata& metadata);
nlohmann::json report_to_json(const IndexReport& report);

/// One subject's view of the report restricted to `mode`: the mode's FGDI/sFGDI
/// (absent for per_joint), the MAP over the mode's variables and the matching
/// GPS, OA and GDI values when present.
nlohmann::json subject_report_json(const IndexReport& report, const PipelineModel& model, std::size_t subject,
                                   Mode mode);

/// Kendall tau between the index columns of two reports over the subjects they
/// share, plus a healthy vs patient rank-sum test per column of `a`.
nlohmann::json compare_reports(const IndexReport& a, const IndexReport& b);

}  // namespace gaitdex
