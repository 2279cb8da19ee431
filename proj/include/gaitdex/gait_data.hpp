#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace gaitdex {

enum class Joint : std::uint8_t {
    pelvic_tilt,
    pelvic_obliquity,
    pelvic_rotation,
    hip_flexion,
    hip_abduction,
    hip_rotation,
    knee_flexion,
    ankle_dorsiflexion,
    foot_rotation,
};

inline constexpr std::size_t kJointCount = 9;
inline constexpr std::size_t kVariableCount = 18;

enum class Side : std::uint8_t { left, right };

std::string_view joint_name(Joint joint);
std::optional<Joint> parse_joint(std::string_view name);
bool is_pelvis(Joint joint);

/// "L" / "R".
std::string_view side_code(Side side);
std::optional<Side> parse_side(std::string_view code);
Side other_side(Side side);

/// One of the 18 joint/plane angle trajectories recorded in a gait lab.
///
/// Ordering is the canonical variable order: every left-side variable precedes
/// every right-side one, and within a side the joints follow the Joint enum
/// (pelvis tilt/obliquity/rotation, hip, knee, ankle, foot).
struct VariableId {
    Joint joint = Joint::pelvic_tilt;
    Side side = Side::left;

    std::size_t index() const {
        return static_cast<std::size_t>(side) * kJointCount + static_cast<std::size_t>(joint);
    }
    static VariableId from_index(std::size_t index);

    /// Machine label, e.g. "L_knee_flexion". Used as JSON key and CSV column suffix.
    std::string label() const;
    /// Human label, e.g. "LHS knee flexion/extension".
    std::string display_name() const;

    friend auto operator<=>(const VariableId& a, const VariableId& b) {
        return a.index() <=> b.index();
    }
    friend bool operator==(const VariableId& a, const VariableId& b) = default;
};

std::optional<VariableId> parse_variable_label(std::string_view label);
const std::array<VariableId, kVariableCount>& all_variables();

/// Equally spaced samples over one gait cycle, expressed in percent (0 .. 100).
class GridSpec {
public:
    GridSpec() = default;
    /// Throws ArgumentError for fewer than two points.
    explicit GridSpec(std::size_t num_points);

    std::size_t size() const { return num_points_; }
    double position(std::size_t l) const;
    std::vector<double> positions() const;

    friend bool operator==(const GridSpec&, const GridSpec&) = default;

private:
    std::size_t num_points_ = 101;
};

enum class SetMode { combined15, leg9, single };

/// The variables entering one index computation.
class VariableSet {
public:
    /// Nine variables of each leg with the pelvis taken from `pelvis_side` only.
    static VariableSet combined15(Side pelvis_side = Side::left);
    static VariableSet leg9(Side side);
    static VariableSet single(VariableId variable);

    SetMode mode() const { return mode_; }
    const std::vector<VariableId>& members() const& { return members_; }
    std::vector<VariableId> members() && { return std::move(members_); }
    std::size_t size() const { return members_.size(); }

private:
    VariableSet(SetMode mode, std::vector<VariableId> members)
        : mode_(mode), members_(std::move(members)) {}

    SetMode mode_;
    std::vector<VariableId> members_;
};

struct ClinicalMetadata {
    std::optional<int> hoehn_yahr;
    std::optional<bool> freezer;
    std::optional<int> updrs_ii;
    std::optional<int> updrs_iii;
    std::optional<int> k_level;
    std::optional<Side> amputated_side;

    bool empty() const {
        return !hoehn_yahr && !freezer && !updrs_ii && !updrs_iii && !k_level && !amputated_side;
    }
};

using CurveMap = std::map<VariableId, std::vector<double>>;

struct SubjectRecord {
    std::string subject_id;
    bool healthy = false;
    CurveMap curves;
    ClinicalMetadata metadata;

    bool has(VariableId variable) const { return curves.contains(variable); }
    /// Throws DataError naming the subject and variable when absent.
    std::span<const double> curve(VariableId variable) const;
};

/// Subjects sharing one percent-of-cycle grid. Immutable once constructed.
class Cohort {
public:
    Cohort() = default;
    /// Validates curve lengths, finiteness and subject_id uniqueness.
    Cohort(GridSpec grid, std::vector<SubjectRecord> subjects);

    const GridSpec& grid() const { return grid_; }
    const std::vector<SubjectRecord>& subjects() const { return subjects_; }
    std::size_t size() const { return subjects_.size(); }
    const SubjectRecord& subject(std::size_t i) const { return subjects_.at(i); }

    std::optional<std::size_t> find(std::string_view subject_id) const;
    std::vector<bool> healthy_mask() const;
    std::size_t healthy_count() const;

private:
    GridSpec grid_;
    std::vector<SubjectRecord> subjects_;
};

/// Read-only projection of a cohort onto a variable set. Holds a reference:
/// the cohort must outlive the view.
class CohortView {
public:
    CohortView(const Cohort& cohort, std::vector<VariableId> members)
        : cohort_(&cohort), members_(std::move(members)) {}

    const Cohort& cohort() const { return *cohort_; }
    const std::vector<VariableId>& members() const { return members_; }
    std::size_t subject_count() const { return cohort_->size(); }

    std::span<const double> curve(std::size_t subject, std::size_t member) const {
        return cohort_->subject(subject).curve(members_.at(member));
    }
    /// N x T copy of one member's curves, subjects in cohort order.
    Eigen::MatrixXd curve_matrix(std::size_t member) const;
    /// N x (members * T) matrix, each row the member curves laid end to end.
    Eigen::MatrixXd stacked_matrix() const;

private:
    const Cohort* cohort_;
    std::vector<VariableId> members_;
};

/// Parses the wide CSV cohort schema; the optional second stream is the
/// clinical metadata CSV.
Cohort parse_cohort(std::istream& data, std::istream* metadata = nullptr);
Cohort load_cohort(const std::filesystem::path& path,
                   const std::optional<std::filesystem::path>& metadata_path = std::nullopt);

void save_cohort(const Cohort& cohort, std::ostream& out);
void save_cohort(const Cohort& cohort, const std::filesystem::path& path);
/// Writes nothing but the header when no subject carries metadata.
void save_metadata(const Cohort& cohort, std::ostream& out);

/// Linear interpolation of every curve onto `target_points` equally spaced positions.
Cohort resample(const Cohort& cohort, std::size_t target_points);

CohortView select_variables(const Cohort& cohort, const VariableSet& set);

struct SynthOptions {
    /// Standard deviation of the white measurement noise, degrees.
    double measurement_noise = 0.1;
};

/// Deterministic synthetic cohort: healthy subjects first, then patients.
Cohort synth_cohort(std::uint64_t seed, std::size_t n_healthy, std::size_t n_patient,
                    const GridSpec& grid, double deviation_scale, const SynthOptions& options = {});

/// Pointwise mean curve of one variable over the healthy subjects.
Eigen::VectorXd healthy_mean_curve(const Cohort& cohort, VariableId variable);

}  // namespace gaitdex
