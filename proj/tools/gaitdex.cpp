// gaitdex: batch front end. Data goes to files or stdout, diagnostics to stderr.
//
// Exit codes: 0 success, 1 data or model error, 2 usage error, 3 GDI basis unavailable.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gaitdex/errors.hpp"
#include "gaitdex/gait_data.hpp"
#include "gaitdex/indices.hpp"
#include "gaitdex/pipeline.hpp"
#include "gaitdex/report.hpp"
#include "gaitdex/text.hpp"

namespace fs = std::filesystem;
using namespace gaitdex;

namespace {

constexpr int kExitError = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNoBasis = 3;
constexpr const char* kBasisFile = "gdi_features_51x9.csv";

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct MissingBasis : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::vector<Mode> parse_modes(const std::string& list) {
    std::vector<Mode> modes;
    for (const auto& raw : text::split(list, ',')) {
        const auto name = text::trim(raw);
        if (name.empty()) continue;
        const auto m = parse_mode(name);
        if (!m) throw UsageError("unknown mode '" + std::string(name) + "' (combined, left, right, per_joint)");
        modes.push_back(*m);
    }
    if (modes.empty()) throw UsageError("no modes requested");
    return modes;
}

Side parse_side_flag(const std::string& value) {
    if (value == "L" || value == "left") return Side::left;
    if (value == "R" || value == "right") return Side::right;
    throw UsageError("pelvis side must be left or right");
}

/// Writes through a temporary file so a failed run never leaves a partial output.
template <typename Writer>
void write_output(const std::string& path, Writer&& writer) {
    if (path.empty() || path == "-") {
        writer(std::cout);
        return;
    }
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw ArgumentError("cannot write " + path);
        writer(out);
        if (!out) throw ArgumentError("write failed for " + path);
    }
    fs::rename(tmp, path);
}

Cohort read_cohort(const std::string& path, const std::string& metadata) {
    if (!fs::exists(path)) throw UsageError("cohort file not found: " + path);
    if (!metadata.empty() && !fs::exists(metadata)) throw UsageError("metadata file not found: " + metadata);
    return load_cohort(path, metadata.empty() ? std::nullopt : std::optional<fs::path>(metadata));
}

PipelineModel read_model(const std::string& path) {
    if (!fs::exists(path)) throw UsageError("model file not found: " + path);
    return load_pipeline(path);
}

GdiFeatureBasis resolve_basis(const std::string& explicit_path, bool allow_surrogate, const Cohort& cohort) {
    if (!explicit_path.empty()) {
        if (!fs::exists(explicit_path)) throw MissingBasis("GDI basis file not found: " + explicit_path);
        return load_gdi_basis(explicit_path);
    }
    if (const char* dir = std::getenv("DATA_DIR"); dir && *dir) {
        const fs::path candidate = fs::path(dir) / kBasisFile;
        if (fs::exists(candidate)) {
            std::cerr << "gdi: using feature basis " << candidate.string() << '\n';
            return load_gdi_basis(candidate);
        }
    }
    if (!allow_surrogate) {
        throw MissingBasis(std::string("GDI requested but no feature basis was found. Pass --gdi-basis <file>, or put ") +
                           kBasisFile + " (459 rows x 15 columns, no header) in $DATA_DIR, or drop --no-surrogate "
                           "to derive a surrogate basis from the healthy subjects");
    }
    std::cerr << "gdi: no published basis found; using a surrogate basis from the healthy subjects (tagged surrogate_svd)\n";
    const std::size_t t = 51;
    return surrogate_gdi_basis(cohort.grid().size() == t ? cohort : resample(cohort, t), 15);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Functional gait deviation indices"};
    app.set_config("--config", "", "key=value defaults, one [subcommand] section per command");
    app.require_subcommand(1);

    // fit
    std::string fit_cohort, fit_metadata, fit_out, fit_modes = "combined", fit_side = "left", fit_smoothing = "none";
    double fit_omega = 0.99;
    auto* fit = app.add_subcommand("fit", "Fit univariate FPCA and MFPCA models to a cohort");
    fit->add_option("cohort", fit_cohort, "Wide CSV cohort")->required();
    fit->add_option("--metadata", fit_metadata, "Clinical metadata CSV");
    fit->add_option("--omega", fit_omega, "Target proportion of variance explained, in (0, 1]");
    fit->add_option("--modes", fit_modes, "Comma separated: combined, left, right, per_joint");
    fit->add_option("--pelvis-side", fit_side, "Pelvis side for the 15-variable set");
    fit->add_option("--smoothing", fit_smoothing, "none or penalized");
    fit->add_option("--out", fit_out, "Model JSON path")->required();

    // score
    std::string sc_model, sc_cohort, sc_metadata, sc_out, sc_indices = "fgdi", sc_basis, sc_format = "csv";
    bool sc_no_surrogate = false;
    auto* score = app.add_subcommand("score", "Compute the index report of a cohort under a fitted model");
    score->add_option("model", sc_model, "Model JSON")->required();
    score->add_option("cohort", sc_cohort, "Wide CSV cohort on the model grid")->required();
    score->add_option("--metadata", sc_metadata, "Clinical metadata CSV");
    score->add_option("--indices", sc_indices, "Comma separated: fgdi, gdi, gps, oa");
    score->add_option("--gdi-basis", sc_basis, "459 x 15 GDI feature CSV");
    score->add_flag("--no-surrogate", sc_no_surrogate, "Fail instead of deriving a surrogate GDI basis");
    score->add_option("--format", sc_format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
    score->add_option("--out", sc_out, "Report path (default stdout)");

    // stability
    std::string st_model, st_cohort, st_out, st_deltas = "-2,-1,1,2", st_mode = "per_joint";
    auto* stability = app.add_subcommand("stability", "FGDI sensitivity to the number of retained components");
    stability->add_option("model", st_model, "Model JSON (supplies omega, pelvis side, smoothing)")->required();
    stability->add_option("cohort", st_cohort, "Wide CSV cohort")->required();
    stability->add_option("--deltas", st_deltas, "Comma separated component offsets, e.g. -2,-1,1,2");
    stability->add_option("--mode", st_mode, "per_joint, combined, left or right");
    stability->add_option("--out", st_out, "Table CSV path (default stdout)");

    // compare
    std::string cmp_a, cmp_b, cmp_out;
    auto* compare = app.add_subcommand("compare", "Rank agreement between the index columns of two reports");
    compare->add_option("report_a", cmp_a, "Report CSV")->required();
    compare->add_option("report_b", cmp_b, "Report CSV")->required();
    compare->add_option("--out", cmp_out, "Summary JSON path (default stdout)");

    // synth
    std::uint64_t sy_seed = 1;
    std::size_t sy_healthy = 40, sy_patients = 20, sy_points = 101;
    double sy_scale = 1.0, sy_noise = 0.1;
    std::string sy_out;
    auto* synth = app.add_subcommand("synth", "Write a deterministic synthetic cohort");
    synth->add_option("--seed", sy_seed);
    synth->add_option("--healthy", sy_healthy);
    synth->add_option("--patients", sy_patients);
    synth->add_option("--points", sy_points)->check(CLI::Range(std::size_t{2}, std::size_t{100000}));
    synth->add_option("--scale", sy_scale, "Patient deviation scale")->check(CLI::NonNegativeNumber);
    synth->add_option("--noise", sy_noise, "Measurement noise sd, degrees")->check(CLI::NonNegativeNumber);
    synth->add_option("--out", sy_out, "Cohort CSV path (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e, std::cerr, std::cerr);
        return kExitUsage;
    }

    try {
        if (fit->parsed()) {
            if (!(fit_omega > 0.0 && fit_omega <= 1.0)) throw UsageError("--omega must lie in (0, 1]");
            PipelineOptions options;
            options.omega = fit_omega;
            options.modes = parse_modes(fit_modes);
            options.pelvis_side = parse_side_flag(fit_side);
            const auto smoothing = parse_smoothing(fit_smoothing);
            if (!smoothing) throw UsageError("--smoothing must be none or penalized");
            options.smoothing = *smoothing;
            const auto cohort = read_cohort(fit_cohort, fit_metadata);
            const auto model = fit_pipeline(cohort, options);
            for (const auto& w : model.warnings) std::cerr << "warning: " << w << '\n';
            save_pipeline(model, fit_out);
            for (const auto& line : component_summary(model)) std::cout << line << '\n';
        } else if (score->parsed()) {
            const auto selection = parse_index_selection(sc_indices);
            const auto model = read_model(sc_model);
            const auto cohort = read_cohort(sc_cohort, sc_metadata);
            ReportOptions options;
            options.indices = selection;
            if (selection.gdi) options.gdi_basis = resolve_basis(sc_basis, !sc_no_surrogate, cohort);
            const auto report = build_report(model, cohort, options);
            for (const auto& n : report.notices) std::cerr << "notice: " << n << '\n';
            write_output(sc_out, [&](std::ostream& out) {
                if (sc_format == "json") {
                    out << report_to_json(report).dump(1) << '\n';
                } else {
                    write_report_csv(report, out);
                }
            });
        } else if (stability->parsed()) {
            std::vector<int> deltas;
            for (const auto& raw : text::split(st_deltas, ',')) {
                const auto v = text::parse_int(text::trim(raw));
                if (!v) throw UsageError("--deltas must be comma separated integers");
                deltas.push_back(static_cast<int>(*v));
            }
            const auto mode = parse_mode(st_mode);
            if (!mode) throw UsageError("unknown mode '" + st_mode + "'");
            const auto model = read_model(st_model);
            const auto cohort = read_cohort(st_cohort, "");
            if (!(cohort.grid() == model.grid)) throw ArgumentError("cohort grid does not match the model grid");
            const auto table = stability_analysis(cohort, *mode, model.options, deltas);
            for (const auto& w : table.warnings) std::cerr << "warning: " << w << '\n';
            write_output(st_out, [&](std::ostream& out) {
                out << "variable,optimal_components";
                for (int d : table.deltas) out << ",delta_" << (d > 0 ? "+" : "") << d;
                out << '\n';
                for (const auto& row : table.rows) {
                    out << row.label << ',' << row.optimal_components;
                    for (const auto& d : row.deltas) out << ',' << (d ? text::format_double(*d) : "");
                    out << '\n';
                }
            });
        } else if (compare->parsed()) {
            const auto a = read_report_csv(fs::path(cmp_a));
            const auto b = read_report_csv(fs::path(cmp_b));
            const auto summary = compare_reports(a, b);
            write_output(cmp_out, [&](std::ostream& out) { out << summary.dump(1) << '\n'; });
        } else if (synth->parsed()) {
            const auto cohort = synth_cohort(sy_seed, sy_healthy, sy_patients, GridSpec(sy_points), sy_scale,
                                             SynthOptions{sy_noise});
            write_output(sy_out, [&](std::ostream& out) { save_cohort(cohort, out); });
        }
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const MissingBasis& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitNoBasis;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitError;
    }
    return 0;
}
