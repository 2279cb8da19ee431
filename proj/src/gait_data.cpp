#include "gaitdex/gait_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "gaitdex/errors.hpp"
#include "gaitdex/text.hpp"

namespace gaitdex {

namespace {

constexpr std::array<std::string_view, kJointCount> kJointNames = {
    "pelvic_tilt",   "pelvic_obliquity", "pelvic_rotation",    "hip_flexion",   "hip_abduction",
    "hip_rotation",  "knee_flexion",     "ankle_dorsiflexion", "foot_rotation",
};

constexpr std::array<std::string_view, kJointCount> kJointDisplay = {
    "pelvic tilt",
    "pelvic obliquity",
    "pelvic rotation",
    "hip flexion/extension",
    "hip abduction/adduction",
    "hip rotation",
    "knee flexion/extension",
    "ankle dorsiflexion/plantarflexion",
    "foot int/external rotation",
};

std::string column_name(std::size_t l, std::size_t num_points) {
    std::string digits = std::to_string(l);
    const std::size_t width = std::max<std::size_t>(3, std::to_string(num_points - 1).size());
    return "t" + std::string(width - digits.size(), '0') + digits;
}

std::string where(std::size_t line, std::string_view column) {
    std::ostringstream os;
    os << "row " << line << ", column " << column;
    return os.str();
}

}  // namespace

std::string_view joint_name(Joint joint) { return kJointNames.at(static_cast<std::size_t>(joint)); }

std::optional<Joint> parse_joint(std::string_view name) {
    for (std::size_t j = 0; j < kJointCount; ++j) {
        if (kJointNames[j] == name) return static_cast<Joint>(j);
    }
    return std::nullopt;
}

bool is_pelvis(Joint joint) {
    return joint == Joint::pelvic_tilt || joint == Joint::pelvic_obliquity || joint == Joint::pelvic_rotation;
}

std::string_view side_code(Side side) { return side == Side::left ? "L" : "R"; }

std::optional<Side> parse_side(std::string_view code) {
    if (code == "L" || code == "l" || code == "left") return Side::left;
    if (code == "R" || code == "r" || code == "right") return Side::right;
    return std::nullopt;
}

Side other_side(Side side) { return side == Side::left ? Side::right : Side::left; }

VariableId VariableId::from_index(std::size_t index) {
    if (index >= kVariableCount) throw ArgumentError("variable index out of range: " + std::to_string(index));
    return {static_cast<Joint>(index % kJointCount), static_cast<Side>(index / kJointCount)};
}

std::string VariableId::label() const {
    return std::string(side_code(side)) + "_" + std::string(joint_name(joint));
}

std::string VariableId::display_name() const {
    return std::string(side == Side::left ? "LHS " : "RHS ") +
           std::string(kJointDisplay.at(static_cast<std::size_t>(joint)));
}

std::optional<VariableId> parse_variable_label(std::string_view label) {
    const auto underscore = label.find('_');
    if (underscore == std::string_view::npos) return std::nullopt;
    const auto side = parse_side(label.substr(0, underscore));
    const auto joint = parse_joint(label.substr(underscore + 1));
    if (!side || !joint) return std::nullopt;
    return VariableId{*joint, *side};
}

const std::array<VariableId, kVariableCount>& all_variables() {
    static const auto variables = [] {
        std::array<VariableId, kVariableCount> out{};
        for (std::size_t i = 0; i < kVariableCount; ++i) out[i] = VariableId::from_index(i);
        return out;
    }();
    return variables;
}

// ---------------------------------------------------------------------------

GridSpec::GridSpec(std::size_t num_points) : num_points_(num_points) {
    if (num_points < 2) throw ArgumentError("a gait-cycle grid needs at least 2 points");
}

double GridSpec::position(std::size_t l) const {
    if (l + 1 == num_points_) return 100.0;
    return 100.0 * static_cast<double>(l) / static_cast<double>(num_points_ - 1);
}

std::vector<double> GridSpec::positions() const {
    std::vector<double> out(num_points_);
    for (std::size_t l = 0; l < num_points_; ++l) out[l] = position(l);
    return out;
}

// ---------------------------------------------------------------------------

VariableSet VariableSet::combined15(Side pelvis_side) {
    std::vector<VariableId> members;
    for (const auto& v : all_variables()) {
        if (is_pelvis(v.joint) && v.side != pelvis_side) continue;
        members.push_back(v);
    }
    return {SetMode::combined15, std::move(members)};
}

VariableSet VariableSet::leg9(Side side) {
    std::vector<VariableId> members;
    for (const auto& v : all_variables()) {
        if (v.side == side) members.push_back(v);
    }
    return {SetMode::leg9, std::move(members)};
}

VariableSet VariableSet::single(VariableId variable) { return {SetMode::single, {variable}}; }

// ---------------------------------------------------------------------------

std::span<const double> SubjectRecord::curve(VariableId variable) const {
    const auto it = curves.find(variable);
    if (it == curves.end()) {
        throw DataError("subject '" + subject_id + "' has no curve for variable " + variable.label());
    }
    return it->second;
}

Cohort::Cohort(GridSpec grid, std::vector<SubjectRecord> subjects)
    : grid_(grid), subjects_(std::move(subjects)) {
    std::unordered_set<std::string> seen;
    for (const auto& s : subjects_) {
        if (!seen.insert(s.subject_id).second) throw DataError("duplicate subject_id '" + s.subject_id + "'");
        for (const auto& [variable, values] : s.curves) {
            if (values.size() != grid_.size()) {
                throw DataError("subject '" + s.subject_id + "' variable " + variable.label() + " has " +
                                std::to_string(values.size()) + " points, grid has " +
                                std::to_string(grid_.size()));
            }
            for (std::size_t l = 0; l < values.size(); ++l) {
                if (!std::isfinite(values[l])) {
                    throw DataError("subject '" + s.subject_id + "' variable " + variable.label() +
                                    " has a non-finite value at point " + std::to_string(l));
                }
            }
        }
    }
}

std::optional<std::size_t> Cohort::find(std::string_view subject_id) const {
    for (std::size_t i = 0; i < subjects_.size(); ++i) {
        if (subjects_[i].subject_id == subject_id) return i;
    }
    return std::nullopt;
}

std::vector<bool> Cohort::healthy_mask() const {
    std::vector<bool> mask(subjects_.size());
    for (std::size_t i = 0; i < subjects_.size(); ++i) mask[i] = subjects_[i].healthy;
    return mask;
}

std::size_t Cohort::healthy_count() const {
    return static_cast<std::size_t>(
        std::count_if(subjects_.begin(), subjects_.end(), [](const auto& s) { return s.healthy; }));
}

Eigen::MatrixXd CohortView::curve_matrix(std::size_t member) const {
    const std::size_t n = subject_count();
    const std::size_t t = cohort_->grid().size();
    Eigen::MatrixXd out(n, t);
    for (std::size_t i = 0; i < n; ++i) {
        const auto c = curve(i, member);
        for (std::size_t l = 0; l < t; ++l) out(i, l) = c[l];
    }
    return out;
}

Eigen::MatrixXd CohortView::stacked_matrix() const {
    const std::size_t n = subject_count();
    const std::size_t t = cohort_->grid().size();
    Eigen::MatrixXd out(n, t * members_.size());
    for (std::size_t m = 0; m < members_.size(); ++m) {
        out.middleCols(m * t, t) = curve_matrix(m);
    }
    return out;
}

// ---------------------------------------------------------------------------

namespace {

void apply_metadata(std::vector<SubjectRecord>& subjects, std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        header = text::split_csv_line(line);
        break;
    }
    if (header.empty()) return;
    if (header.front() != "subject_id") throw ParseError("metadata header must start with subject_id");
    static const std::set<std::string> known = {"hoehn_yahr", "freezer",  "updrs_ii",
                                                "updrs_iii",  "k_level", "amputated_side"};
    for (std::size_t c = 1; c < header.size(); ++c) {
        if (!known.contains(header[c])) throw ParseError("unknown metadata column '" + header[c] + "'");
    }

    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < subjects.size(); ++i) index.emplace(subjects[i].subject_id, i);

    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        const auto fields = text::split_csv_line(line);
        if (fields.size() != header.size()) {
            throw DataError("metadata row " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                            " fields, header has " + std::to_string(header.size()));
        }
        const auto it = index.find(fields[0]);
        if (it == index.end()) {
            throw DataError("metadata row " + std::to_string(line_no) + " names unknown subject '" + fields[0] +
                            "'");
        }
        auto& meta = subjects[it->second].metadata;
        for (std::size_t c = 1; c < header.size(); ++c) {
            const auto& cell = fields[c];
            if (cell.empty() || cell == "NA") continue;
            const auto& col = header[c];
            if (col == "amputated_side") {
                meta.amputated_side = parse_side(cell);
                if (!meta.amputated_side) throw DataError(where(line_no, col) + ": expected L or R");
                continue;
            }
            const auto value = text::parse_int(cell);
            if (!value) throw DataError(where(line_no, col) + ": expected an integer, got '" + cell + "'");
            const int v = static_cast<int>(*value);
            if (col == "hoehn_yahr") {
                if (v < 1 || v > 4) throw DataError(where(line_no, col) + ": Hoehn-Yahr stage must be 1-4");
                meta.hoehn_yahr = v;
            } else if (col == "freezer") {
                if (v != 0 && v != 1) throw DataError(where(line_no, col) + ": expected 0 or 1");
                meta.freezer = v == 1;
            } else if (col == "updrs_ii") {
                meta.updrs_ii = v;
            } else if (col == "updrs_iii") {
                meta.updrs_iii = v;
            } else if (col == "k_level") {
                if (v < 2 || v > 3) throw DataError(where(line_no, col) + ": K-level must be 2 or 3");
                meta.k_level = v;
            }
        }
    }
}

}  // namespace

Cohort parse_cohort(std::istream& data, std::istream* metadata) {
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    while (std::getline(data, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        header = text::split_csv_line(line);
        break;
    }
    if (header.empty()) throw ParseError("cohort file is empty: missing header");
    if (header.size() < 6 || header[0] != "subject_id" || header[1] != "healthy" || header[2] != "side" ||
        header[3] != "variable") {
        throw ParseError("malformed header: expected 'subject_id,healthy,side,variable,t000,...'");
    }
    const std::size_t num_points = header.size() - 4;
    for (std::size_t l = 0; l < num_points; ++l) {
        if (header[4 + l] != column_name(l, num_points)) {
            throw ParseError("malformed header: column " + std::to_string(5 + l) + " is '" + header[4 + l] +
                             "', expected '" + column_name(l, num_points) + "'");
        }
    }
    const GridSpec grid(num_points);

    std::vector<SubjectRecord> subjects;
    std::unordered_map<std::string, std::size_t> index;
    while (std::getline(data, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        const auto fields = text::split_csv_line(line);
        if (fields.size() != header.size()) {
            throw DataError("row " + std::to_string(line_no) + " has " + std::to_string(fields.size() - 4) +
                            " time points, header declares " + std::to_string(num_points));
        }
        const auto& id = fields[0];
        if (id.empty()) throw DataError(where(line_no, "subject_id") + ": empty subject_id");
        if (fields[1] != "0" && fields[1] != "1") {
            throw DataError(where(line_no, "healthy") + ": expected 0 or 1, got '" + fields[1] + "'");
        }
        const bool healthy = fields[1] == "1";
        const auto side = parse_side(fields[2]);
        if (!side) throw DataError(where(line_no, "side") + ": expected L or R, got '" + fields[2] + "'");
        const auto joint = parse_joint(fields[3]);
        if (!joint) throw DataError(where(line_no, "variable") + ": unknown variable '" + fields[3] + "'");
        const VariableId variable{*joint, *side};

        std::vector<double> values(num_points);
        for (std::size_t l = 0; l < num_points; ++l) {
            const auto& cell = fields[4 + l];
            const auto v = text::parse_double(cell);
            if (!v) throw DataError(where(line_no, header[4 + l]) + ": not a number: '" + cell + "'");
            if (!std::isfinite(*v)) {
                throw DataError(where(line_no, header[4 + l]) + ": non-finite angle '" + cell + "'");
            }
            values[l] = *v;
        }

        auto [it, inserted] = index.try_emplace(id, subjects.size());
        if (inserted) {
            subjects.push_back(SubjectRecord{id, healthy, {}, {}});
        }
        auto& subject = subjects[it->second];
        if (subject.healthy != healthy) {
            throw DataError(where(line_no, "healthy") + ": subject '" + id + "' has conflicting healthy flags");
        }
        if (!subject.curves.emplace(variable, std::move(values)).second) {
            throw DataError("row " + std::to_string(line_no) + ": duplicate subject_id '" + id +
                            "' for variable " + variable.label());
        }
    }

    if (metadata != nullptr) apply_metadata(subjects, *metadata);
    return Cohort(grid, std::move(subjects));
}

Cohort load_cohort(const std::filesystem::path& path, const std::optional<std::filesystem::path>& metadata_path) {
    std::ifstream in(path);
    if (!in) throw ArgumentError("cannot open cohort file " + path.string());
    if (metadata_path) {
        std::ifstream meta(*metadata_path);
        if (!meta) throw ArgumentError("cannot open metadata file " + metadata_path->string());
        return parse_cohort(in, &meta);
    }
    return parse_cohort(in);
}

void save_cohort(const Cohort& cohort, std::ostream& out) {
    const std::size_t t = cohort.grid().size();
    out << "subject_id,healthy,side,variable";
    for (std::size_t l = 0; l < t; ++l) out << ',' << column_name(l, t);
    out << '\n';
    for (const auto& s : cohort.subjects()) {
        for (const auto& [variable, values] : s.curves) {
            out << s.subject_id << ',' << (s.healthy ? '1' : '0') << ',' << side_code(variable.side) << ','
                << joint_name(variable.joint);
            for (double v : values) out << ',' << text::format_double(v);
            out << '\n';
        }
    }
}

void save_cohort(const Cohort& cohort, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw ArgumentError("cannot write cohort file " + path.string());
    save_cohort(cohort, out);
}

void save_metadata(const Cohort& cohort, std::ostream& out) {
    out << "subject_id,hoehn_yahr,freezer,updrs_ii,updrs_iii,k_level,amputated_side\n";
    const auto opt = [&](const std::optional<int>& v) {
        out << ',';
        if (v) out << *v;
    };
    for (const auto& s : cohort.subjects()) {
        const auto& m = s.metadata;
        if (m.empty()) continue;
        out << s.subject_id;
        opt(m.hoehn_yahr);
        opt(m.freezer ? std::optional<int>(*m.freezer ? 1 : 0) : std::nullopt);
        opt(m.updrs_ii);
        opt(m.updrs_iii);
        opt(m.k_level);
        out << ',';
        if (m.amputated_side) out << side_code(*m.amputated_side);
        out << '\n';
    }
}

// ---------------------------------------------------------------------------

Cohort resample(const Cohort& cohort, std::size_t target_points) {
    if (target_points < 2) throw ArgumentError("resample target must have at least 2 points");
    const std::size_t source_points = cohort.grid().size();
    if (target_points == source_points) return cohort;

    // Target point l sits at source index l * (S-1) / (T-1); integer arithmetic
    // keeps grid-aligned samples exact.
    const std::size_t num_scale = source_points - 1;
    const std::size_t den = target_points - 1;
    std::vector<SubjectRecord> subjects = cohort.subjects();
    for (auto& s : subjects) {
        for (auto& [variable, values] : s.curves) {
            std::vector<double> out(target_points);
            for (std::size_t l = 0; l < target_points; ++l) {
                const std::size_t num = l * num_scale;
                const std::size_t idx = num / den;
                const std::size_t rem = num % den;
                if (rem == 0) {
                    out[l] = values[idx];
                } else {
                    const double frac = static_cast<double>(rem) / static_cast<double>(den);
                    out[l] = values[idx] + frac * (values[idx + 1] - values[idx]);
                }
            }
            values = std::move(out);
        }
    }
    return Cohort(GridSpec(target_points), std::move(subjects));
}

CohortView select_variables(const Cohort& cohort, const VariableSet& set) {
    for (const auto& s : cohort.subjects()) {
        for (const auto& v : set.members()) {
            if (!s.has(v)) {
                throw DataError("subject '" + s.subject_id + "' is missing variable " + v.label());
            }
        }
    }
    return CohortView(cohort, set.members());
}

Eigen::VectorXd healthy_mean_curve(const Cohort& cohort, VariableId variable) {
    const std::size_t t = cohort.grid().size();
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(t);
    std::size_t count = 0;
    for (const auto& s : cohort.subjects()) {
        if (!s.healthy) continue;
        const auto c = s.curve(variable);
        for (std::size_t l = 0; l < t; ++l) mean[l] += c[l];
        ++count;
    }
    if (count == 0) throw ArgumentError("cohort has no healthy subjects");
    return mean / static_cast<double>(count);
}

// ---------------------------------------------------------------------------

namespace {

struct Harmonic {
    double amplitude;
    double frequency;  // cycles per stride
    double phase;
};

struct Template {
    double offset;
    std::array<Harmonic, 3> harmonics;
};

// Rough shapes of adult sagittal/frontal/transverse kinematics, degrees.
constexpr std::array<Template, kJointCount> kTemplates = {{
    {10.0, {{{1.5, 2.0, 0.3}, {0.8, 1.0, 1.1}, {0.0, 3.0, 0.0}}}},
    {0.0, {{{5.0, 1.0, 0.5}, {1.5, 2.0, 2.0}, {0.5, 3.0, 0.7}}}},
    {0.0, {{{6.0, 1.0, 1.7}, {1.0, 2.0, 0.4}, {0.0, 3.0, 0.0}}}},
    {15.0, {{{24.0, 1.0, 1.6}, {4.0, 2.0, 0.9}, {1.5, 3.0, 2.2}}}},
    {-1.0, {{{5.0, 1.0, 0.3}, {2.5, 2.0, 2.6}, {0.8, 3.0, 1.3}}}},
    {2.0, {{{5.0, 1.0, 1.0}, {2.0, 2.0, 0.2}, {0.0, 3.0, 0.0}}}},
    {28.0, {{{24.0, 1.0, 4.3}, {9.0, 2.0, 1.2}, {4.0, 3.0, 3.1}}}},
    {3.0, {{{9.0, 1.0, 5.8}, {5.0, 2.0, 1.0}, {2.0, 3.0, 2.7}}}},
    {-10.0, {{{4.0, 1.0, 0.0}, {1.5, 2.0, 1.9}, {0.0, 3.0, 0.0}}}},
}};

constexpr std::size_t kWobbleHarmonics = 8;
constexpr double kWobbleDecay = 0.7;

double evaluate(const Template& tpl, double t, double gain, double shift) {
    double value = tpl.offset;
    for (const auto& h : tpl.harmonics) {
        value += gain * h.amplitude * std::sin(2.0 * std::numbers::pi * h.frequency * (t - shift) + h.phase);
    }
    return value;
}

}  // namespace

Cohort synth_cohort(std::uint64_t seed, std::size_t n_healthy, std::size_t n_patient, const GridSpec& grid,
                    double deviation_scale, const SynthOptions& options) {
    if (deviation_scale < 0.0 || !std::isfinite(deviation_scale)) {
        throw ArgumentError("deviation_scale must be a non-negative finite number");
    }
    if (options.measurement_noise < 0.0) throw ArgumentError("measurement_noise must be non-negative");

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    const auto positions = grid.positions();

    std::vector<SubjectRecord> subjects;
    subjects.reserve(n_healthy + n_patient);
    for (std::size_t i = 0; i < n_healthy + n_patient; ++i) {
        const bool healthy = i < n_healthy;
        SubjectRecord record;
        record.healthy = healthy;
        record.subject_id = (healthy ? "H" : "P") + std::to_string(healthy ? i + 1 : i - n_healthy + 1);

        // Subject-level factors shared across variables (walking speed, stride timing).
        const double speed = gauss(rng);
        const double timing = gauss(rng);
        const double severity = healthy ? 0.0 : deviation_scale * (0.5 + uniform(rng));

        for (const auto& variable : all_variables()) {
            const auto& tpl = kTemplates[static_cast<std::size_t>(variable.joint)];
            double gain = 1.0 + 0.05 * speed + 0.05 * gauss(rng);
            double shift = 0.005 * timing + 0.008 * gauss(rng);
            double offset = 2.0 * gauss(rng);
            // Smooth subject-specific deviations with a decaying harmonic spectrum.
            std::array<double, kWobbleHarmonics> wobble_sin{}, wobble_cos{};
            for (std::size_t k = 0; k < kWobbleHarmonics; ++k) {
                const double sd = 0.9 * std::pow(kWobbleDecay, static_cast<double>(k));
                wobble_sin[k] = sd * gauss(rng);
                wobble_cos[k] = sd * gauss(rng);
            }

            // Patients: reduced range, delayed timing and level shifts, all scaled
            // by the subject's severity.
            if (!healthy) {
                gain *= std::max(0.2, 1.0 - 0.15 * severity + 0.1 * severity * gauss(rng));
                shift += severity * (0.01 + 0.015 * gauss(rng));
                offset += severity * 2.5 * gauss(rng);
                for (std::size_t k = 0; k < kWobbleHarmonics; ++k) {
                    const double sd = 1.5 * severity * std::pow(kWobbleDecay, static_cast<double>(k));
                    wobble_sin[k] += sd * gauss(rng);
                    wobble_cos[k] += sd * gauss(rng);
                }
            }

            std::vector<double> values(grid.size());
            for (std::size_t l = 0; l < grid.size(); ++l) {
                const double t = positions[l] / 100.0;
                double wobble = 0.0;
                for (std::size_t k = 0; k < kWobbleHarmonics; ++k) {
                    const double arg = 2.0 * std::numbers::pi * static_cast<double>(k + 1) * t;
                    wobble += wobble_sin[k] * std::sin(arg) + wobble_cos[k] * std::cos(arg);
                }
                values[l] = evaluate(tpl, t, gain, shift) + offset + wobble + options.measurement_noise * gauss(rng);
            }
            record.curves.emplace(variable, std::move(values));
        }
        subjects.push_back(std::move(record));
    }
    return Cohort(grid, std::move(subjects));
}

}  // namespace gaitdex
