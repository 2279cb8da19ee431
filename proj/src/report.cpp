#include "gaitdex/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "gaitdex/errors.hpp"
#include "gaitdex/stats.hpp"
#include "gaitdex/text.hpp"

namespace gaitdex {

using nlohmann::json;

IndexSelection parse_index_selection(std::string_view list) {
    IndexSelection sel{false, false, false, false};
    for (const auto& raw : text::split(list, ',')) {
        const auto name = text::trim(raw);
        if (name == "fgdi") {
            sel.fgdi = true;
        } else if (name == "gps") {
            sel.gps = true;
        } else if (name == "oa") {
            sel.oa = true;
        } else if (name == "gdi") {
            sel.gdi = true;
        } else if (!name.empty()) {
            throw ArgumentError("unknown index '" + std::string(name) + "' (expected fgdi, gdi, gps, oa)");
        }
    }
    if (!sel.fgdi && !sel.gps && !sel.oa && !sel.gdi) throw ArgumentError("no indices requested");
    return sel;
}

const std::vector<double>* IndexReport::column(std::string_view name) const {
    for (std::size_t c = 0; c < column_names.size(); ++c) {
        if (column_names[c] == name) return &columns[c];
    }
    return nullptr;
}

std::optional<std::size_t> IndexReport::find_subject(std::string_view subject_id) const {
    for (std::size_t i = 0; i < subject_ids.size(); ++i) {
        if (subject_ids[i] == subject_id) return i;
    }
    return std::nullopt;
}

namespace {

struct ScaledIndex {
    std::vector<double> raw;
    std::vector<double> scaled;
    std::vector<bool> clamped;
};

/// FGDI and sFGDI of `scores`, referenced to the cohort's healthy rows or,
/// when there are fewer than two, to the training healthy rows in `training`.
ScaledIndex scaled_fgdi(const Eigen::MatrixXd& scores, const std::vector<bool>& healthy,
                        const Eigen::MatrixXd& training, const std::vector<bool>& training_healthy) {
    const auto n = static_cast<std::size_t>(scores.rows());
    if (std::count(healthy.begin(), healthy.end(), true) >= 2) {
        auto f = fgdi(scores, healthy);
        auto z = sfgdi(f.values, healthy);
        return {std::move(f.values), std::move(z), std::move(f.clamped)};
    }
    Eigen::MatrixXd joined(scores.rows() + training.rows(), scores.cols());
    joined << scores, training;
    std::vector<bool> mask(n, false);
    mask.insert(mask.end(), training_healthy.begin(), training_healthy.end());
    auto f = fgdi(joined, mask);
    auto z = sfgdi(f.values, mask);
    ScaledIndex out;
    out.raw.assign(f.values.begin(), f.values.begin() + static_cast<std::ptrdiff_t>(n));
    out.scaled.assign(z.begin(), z.begin() + static_cast<std::ptrdiff_t>(n));
    out.clamped.assign(f.clamped.begin(), f.clamped.begin() + static_cast<std::ptrdiff_t>(n));
    return out;
}

bool has_all(const Cohort& cohort, const VariableSet& set) {
    for (const auto& s : cohort.subjects()) {
        for (const auto& v : set.members()) {
            if (!s.has(v)) return false;
        }
    }
    return true;
}

void add_column(IndexReport& report, std::string name, std::vector<double> values) {
    report.column_names.push_back(std::move(name));
    report.columns.push_back(std::move(values));
}

void add_flags(IndexReport& report, const std::vector<bool>& clamped, const std::string& what) {
    for (std::size_t i = 0; i < clamped.size(); ++i) {
        if (clamped[i]) report.flags[i].push_back("clamped:" + what);
    }
}

}  // namespace

IndexReport build_report(const PipelineModel& model, const Cohort& cohort, const ReportOptions& options) {
    IndexReport report;
    for (const auto& s : cohort.subjects()) {
        report.subject_ids.push_back(s.subject_id);
        report.healthy.push_back(s.healthy);
        report.metadata.push_back(s.metadata);
    }
    report.flags.resize(cohort.size());
    const auto healthy = cohort.healthy_mask();
    const std::size_t nh = cohort.healthy_count();
    const auto n = static_cast<Eigen::Index>(cohort.size());
    const Side pelvis = model.options.pelvis_side;

    if (options.indices.fgdi) {
        const auto projected = project_cohort(model, cohort);
        if (nh < 2) {
            report.notices.push_back("scored cohort has fewer than 2 healthy subjects; "
                                     "sFGDI is referenced to the model's training healthy subjects");
        }
        for (Mode m : model.options.modes) {
            if (m == Mode::per_joint) continue;
            const auto name = std::string(mode_name(m));
            const auto r = scaled_fgdi(projected.multivariate.at(m), healthy, model.mfpca(m).mscores, model.healthy);
            add_column(report, "fgdi_" + name, r.raw);
            add_column(report, "sfgdi_" + name, r.scaled);
            add_flags(report, r.clamped, "fgdi_" + name);
        }
        report.map.resize(n, static_cast<Eigen::Index>(model.univariate.size()));
        Eigen::Index col = 0;
        for (const auto& [v, fpca] : model.univariate) {
            const auto r = scaled_fgdi(projected.univariate.at(v), healthy, fpca.scores, model.healthy);
            report.map_variables.push_back(v);
            for (Eigen::Index i = 0; i < n; ++i) report.map(i, col) = r.scaled[static_cast<std::size_t>(i)];
            add_flags(report, r.clamped, "map_" + v.label());
            ++col;
        }
    }

    const std::pair<Mode, VariableSet> reference_sets[] = {
        {Mode::combined, VariableSet::combined15(pelvis)},
        {Mode::left, VariableSet::leg9(Side::left)},
        {Mode::right, VariableSet::leg9(Side::right)},
    };

    if (options.indices.gps) {
        if (nh == 0) {
            report.notices.push_back("GPS skipped: the scored cohort has no healthy subjects");
        } else {
            std::set<VariableId> gvs_vars;
            std::vector<std::pair<std::string, GvsGps>> results;
            for (const auto& [m, set] : reference_sets) {
                if (!has_all(cohort, set)) {
                    report.notices.push_back("GPS " + std::string(mode_name(m)) + " skipped: variables missing");
                    continue;
                }
                results.emplace_back(std::string(mode_name(m)), gvs_gps(cohort, set));
                gvs_vars.insert(set.members().begin(), set.members().end());
            }
            report.gvs_variables.assign(gvs_vars.begin(), gvs_vars.end());
            report.gvs.resize(n, static_cast<Eigen::Index>(gvs_vars.size()));
            for (auto& [name, r] : results) {
                add_column(report, "gps_" + name, r.gps);
                for (std::size_t u = 0; u < r.variables.size(); ++u) {
                    const auto pos = std::find(report.gvs_variables.begin(), report.gvs_variables.end(),
                                               r.variables[u]) - report.gvs_variables.begin();
                    report.gvs.col(pos) = r.gvs.col(static_cast<Eigen::Index>(u));
                }
            }
        }
    }

    if (options.indices.oa) {
        if (nh < 2) {
            report.notices.push_back("OA skipped: the scored cohort has fewer than 2 healthy subjects");
        } else {
            for (const auto& [m, set] : reference_sets) {
                if (!has_all(cohort, set)) {
                    report.notices.push_back("OA " + std::string(mode_name(m)) + " skipped: variables missing");
                    continue;
                }
                auto r = oa(cohort, set);
                add_column(report, "oa_" + std::string(mode_name(m)), std::move(r.values));
                for (const auto& w : r.warnings) report.notices.push_back("OA " + std::string(mode_name(m)) + ": " + w);
            }
        }
    }

    if (options.indices.gdi) {
        if (!options.gdi_basis) throw ArgumentError("GDI requested without a feature basis");
        const auto& basis = *options.gdi_basis;
        report.gdi_basis = basis.source;
        if (nh < 2) {
            report.notices.push_back("GDI skipped: the scored cohort has fewer than 2 healthy subjects");
        } else {
            const std::size_t t = basis.grid_points();
            const Cohort* source = &cohort;
            Cohort resampled;
            if (cohort.grid().size() != t) {
                resampled = resample(cohort, t);
                source = &resampled;
                report.notices.push_back("GDI: cohort resampled from T=" + std::to_string(cohort.grid().size()) +
                                         " to T=" + std::to_string(t));
            }
            for (Side side : {Side::left, Side::right}) {
                const auto name = std::string(side == Side::left ? "left" : "right");
                if (!has_all(*source, VariableSet::leg9(side))) {
                    report.notices.push_back("GDI " + name + " skipped: variables missing");
                    continue;
                }
                auto r = gdi(*source, side, basis);
                add_column(report, "gdi_" + name, std::move(r.gdi));
                add_column(report, "sgdi_" + name, std::move(r.sgdi));
                add_flags(report, r.clamped, "gdi_" + name);
            }
        }
    }
    return report;
}

// ---------------------------------------------------------------------------

void write_report_csv(const IndexReport& report, std::ostream& out) {
    out << "subject_id,healthy";
    for (const auto& name : report.column_names) out << ',' << name;
    for (const auto& v : report.gvs_variables) out << ",gvs_" << v.label();
    for (const auto& v : report.map_variables) out << ",map_" << v.label();
    out << ",flags\n";
    for (std::size_t i = 0; i < report.size(); ++i) {
        out << report.subject_ids[i] << ',' << (report.healthy[i] ? 1 : 0);
        for (const auto& col : report.columns) out << ',' << text::format_double(col[i]);
        const auto row = static_cast<Eigen::Index>(i);
        for (Eigen::Index c = 0; c < report.gvs.cols(); ++c) out << ',' << text::format_double(report.gvs(row, c));
        for (Eigen::Index c = 0; c < report.map.cols(); ++c) out << ',' << text::format_double(report.map(row, c));
        out << ',';
        for (std::size_t f = 0; f < report.flags[i].size(); ++f) out << (f ? ";" : "") << report.flags[i][f];
        out << '\n';
    }
}

IndexReport read_report_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError("report CSV is empty");
    const auto header = text::split_csv_line(line);
    if (header.size() < 3 || header[0] != "subject_id" || header[1] != "healthy" || header.back() != "flags") {
        throw ParseError("report CSV header must start with subject_id,healthy and end with flags");
    }
    enum class Kind { index, gvs, map };
    std::vector<Kind> kinds;
    IndexReport report;
    for (std::size_t c = 2; c + 1 < header.size(); ++c) {
        const auto& name = header[c];
        const bool is_gvs = name.starts_with("gvs_");
        const bool is_map = name.starts_with("map_");
        if (is_gvs || is_map) {
            const auto v = parse_variable_label(std::string_view(name).substr(4));
            if (!v) throw ParseError("report CSV: unknown variable column '" + name + "'");
            (is_gvs ? report.gvs_variables : report.map_variables).push_back(*v);
            kinds.push_back(is_gvs ? Kind::gvs : Kind::map);
        } else {
            report.column_names.push_back(name);
            kinds.push_back(Kind::index);
        }
    }
    report.columns.resize(report.column_names.size());

    std::vector<std::vector<double>> gvs_rows, map_rows;
    std::size_t row_no = 1;
    while (std::getline(in, line)) {
        ++row_no;
        if (text::trim(line).empty()) continue;
        const auto fields = text::split_csv_line(line);
        if (fields.size() != header.size()) {
            throw ParseError("report CSV row " + std::to_string(row_no) + " has " + std::to_string(fields.size()) +
                             " fields, expected " + std::to_string(header.size()));
        }
        report.subject_ids.push_back(fields[0]);
        if (fields[1] != "0" && fields[1] != "1") {
            throw ParseError("report CSV row " + std::to_string(row_no) + ": healthy must be 0 or 1");
        }
        report.healthy.push_back(fields[1] == "1");
        report.metadata.emplace_back();
        std::size_t idx = 0;
        gvs_rows.emplace_back();
        map_rows.emplace_back();
        for (std::size_t c = 2; c + 1 < fields.size(); ++c) {
            double value = std::numeric_limits<double>::quiet_NaN();
            if (!fields[c].empty()) {
                const auto parsed = text::parse_double(fields[c]);
                if (!parsed) {
                    throw ParseError("report CSV row " + std::to_string(row_no) + ", column " + header[c] +
                                     ": bad number '" + fields[c] + "'");
                }
                value = *parsed;
            }
            switch (kinds[c - 2]) {
                case Kind::index: report.columns[idx++].push_back(value); break;
                case Kind::gvs: gvs_rows.back().push_back(value); break;
                case Kind::map: map_rows.back().push_back(value); break;
            }
        }
        report.flags.push_back(fields.back().empty() ? std::vector<std::string>{} : text::split(fields.back(), ';'));
    }

    const auto to_matrix = [](const std::vector<std::vector<double>>& rows, std::size_t cols) {
        Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
        for (std::size_t r = 0; r < rows.size(); ++r) {
            for (std::size_t c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
        }
        return m;
    };
    report.gvs = to_matrix(gvs_rows, report.gvs_variables.size());
    report.map = to_matrix(map_rows, report.map_variables.size());
    return report;
}

IndexReport read_report_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ArgumentError("cannot open report file " + path.string());
    return read_report_csv(in);
}

// ---------------------------------------------------------------------------

json metadata_to_json(const ClinicalMetadata& m) {
    json out = json::object();
    if (m.hoehn_yahr) out["hoehn_yahr"] = *m.hoehn_yahr;
    if (m.freezer) out["freezer"] = *m.freezer;
    if (m.updrs_ii) out["updrs_ii"] = *m.updrs_ii;
    if (m.updrs_iii) out["updrs_iii"] = *m.updrs_iii;
    if (m.k_level) out["k_level"] = *m.k_level;
    if (m.amputated_side) out["amputated_side"] = std::string(side_code(*m.amputated_side));
    return out;
}

json report_to_json(const IndexReport& report) {
    json subjects = json::array();
    for (std::size_t i = 0; i < report.size(); ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        json indices = json::object();
        for (std::size_t c = 0; c < report.columns.size(); ++c) indices[report.column_names[c]] = report.columns[c][i];
        json gvs = json::object();
        for (std::size_t c = 0; c < report.gvs_variables.size(); ++c) {
            gvs[report.gvs_variables[c].label()] = report.gvs(row, static_cast<Eigen::Index>(c));
        }
        json map = json::object();
        for (std::size_t c = 0; c < report.map_variables.size(); ++c) {
            map[report.map_variables[c].label()] = report.map(row, static_cast<Eigen::Index>(c));
        }
        subjects.push_back({
            {"subject_id", report.subject_ids[i]},
            {"healthy", static_cast<bool>(report.healthy[i])},
            {"metadata", metadata_to_json(report.metadata[i])},
            {"indices", indices},
            {"gvs", gvs},
            {"map", map},
            {"flags", report.flags[i]},
        });
    }
    return json{
        {"columns", report.column_names},
        {"gdi_basis", report.gdi_basis ? json(std::string(basis_source_name(*report.gdi_basis))) : json(nullptr)},
        {"notices", report.notices},
        {"subjects", subjects},
    };
}

json subject_report_json(const IndexReport& report, const PipelineModel& model, std::size_t subject, Mode mode) {
    if (subject >= report.size()) throw ArgumentError("subject index out of range");
    if (!model.has_mode(mode)) throw ArgumentError("mode " + std::string(mode_name(mode)) + " is not fitted");
    const auto row = static_cast<Eigen::Index>(subject);
    const auto value_of = [&](const std::string& name) -> json {
        const auto* col = report.column(name);
        return col ? json((*col)[subject]) : json(nullptr);
    };
    const std::string name(mode_name(mode));
    const std::string summary = mode == Mode::per_joint ? "combined" : name;

    json map = json::object();
    json map_variables = json::array();
    for (const auto& v : variable_set_for(mode, model.options.pelvis_side).members()) {
        const auto it = std::find(report.map_variables.begin(), report.map_variables.end(), v);
        if (it == report.map_variables.end()) continue;
        map_variables.push_back(v.label());
        map[v.label()] = report.map(row, it - report.map_variables.begin());
    }

    json gdi = json::object();
    for (const char* side : {"left", "right"}) {
        if ((mode == Mode::left && side != std::string("left")) ||
            (mode == Mode::right && side != std::string("right"))) {
            continue;
        }
        if (report.column(std::string("gdi_") + side)) {
            gdi[side] = {{"gdi", value_of(std::string("gdi_") + side)},
                         {"sgdi", value_of(std::string("sgdi_") + side)}};
        }
    }

    return json{
        {"subject_id", report.subject_ids[subject]},
        {"healthy", static_cast<bool>(report.healthy[subject])},
        {"mode", name},
        {"metadata", metadata_to_json(report.metadata[subject])},
        {"fgdi", mode == Mode::per_joint ? json(nullptr) : value_of("fgdi_" + name)},
        {"sfgdi", mode == Mode::per_joint ? json(nullptr) : value_of("sfgdi_" + name)},
        {"map_variables", map_variables},
        {"map", map},
        {"gps", value_of("gps_" + summary)},
        {"oa", value_of("oa_" + summary)},
        {"gdi", gdi},
        {"gdi_basis", report.gdi_basis ? json(std::string(basis_source_name(*report.gdi_basis))) : json(nullptr)},
        {"flags", report.flags[subject]},
    };
}

json compare_reports(const IndexReport& a, const IndexReport& b) {
    std::vector<std::size_t> rows_a, rows_b;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (const auto j = b.find_subject(a.subject_ids[i])) {
            rows_a.push_back(i);
            rows_b.push_back(*j);
        }
    }
    const auto gather = [](const std::vector<double>& col, const std::vector<std::size_t>& rows) {
        std::vector<double> out;
        out.reserve(rows.size());
        for (auto r : rows) out.push_back(col[r]);
        return out;
    };
    const auto tau = [](const std::vector<double>& x, const std::vector<double>& y) -> json {
        if (x.size() < 2) return nullptr;
        try {
            return stats::kendall_tau(x, y);
        } catch (const DegenerateError&) {
            return nullptr;
        }
    };

    json matched = json::object();
    json cross = json::object();
    for (std::size_t ca = 0; ca < a.column_names.size(); ++ca) {
        const auto x = gather(a.columns[ca], rows_a);
        json row = json::object();
        for (std::size_t cb = 0; cb < b.column_names.size(); ++cb) {
            const auto t = tau(x, gather(b.columns[cb], rows_b));
            row[b.column_names[cb]] = t;
            if (a.column_names[ca] == b.column_names[cb]) matched[a.column_names[ca]] = t;
        }
        cross[a.column_names[ca]] = row;
    }

    json tests = json::object();
    for (std::size_t ca = 0; ca < a.column_names.size(); ++ca) {
        std::vector<double> patients, healthy;
        for (std::size_t i = 0; i < a.size(); ++i) (a.healthy[i] ? healthy : patients).push_back(a.columns[ca][i]);
        if (patients.empty() || healthy.empty()) continue;
        const auto r = stats::wilcoxon_rank_sum(patients, healthy);
        tests[a.column_names[ca]] = {{"statistic", r.statistic}, {"p_value", r.p_value}, {"method", r.method},
                                     {"n_patients", patients.size()}, {"n_healthy", healthy.size()}};
    }

    return json{
        {"shared_subjects", rows_a.size()},
        {"kendall_tau", matched},
        {"kendall_tau_cross", cross},
        {"patients_vs_healthy", tests},
    };
}

}  // namespace gaitdex
