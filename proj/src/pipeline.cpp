#include "gaitdex/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <future>
#include <set>

#include "gaitdex/errors.hpp"
#include "gaitdex/serialization.hpp"

namespace gaitdex {

std::string_view mode_name(Mode mode) {
    switch (mode) {
        case Mode::combined: return "combined";
        case Mode::left: return "left";
        case Mode::right: return "right";
        case Mode::per_joint: return "per_joint";
    }
    return "unknown";
}

std::optional<Mode> parse_mode(std::string_view name) {
    if (name == "combined") return Mode::combined;
    if (name == "left") return Mode::left;
    if (name == "right") return Mode::right;
    if (name == "per_joint") return Mode::per_joint;
    return std::nullopt;
}

VariableSet variable_set_for(Mode mode, Side pelvis_side) {
    switch (mode) {
        case Mode::left: return VariableSet::leg9(Side::left);
        case Mode::right: return VariableSet::leg9(Side::right);
        case Mode::combined:
        case Mode::per_joint: return VariableSet::combined15(pelvis_side);
    }
    return VariableSet::combined15(pelvis_side);
}

bool PipelineModel::has_mode(Mode mode) const {
    return std::find(options.modes.begin(), options.modes.end(), mode) != options.modes.end();
}

const FpcaModel& PipelineModel::fpca(VariableId variable) const {
    const auto it = univariate.find(variable);
    if (it == univariate.end()) throw ArgumentError("variable " + variable.label() + " is not in the fitted model");
    return it->second;
}

const MfpcaModel& PipelineModel::mfpca(Mode mode) const {
    const auto it = multivariate.find(mode);
    if (it == multivariate.end()) {
        throw ArgumentError("mode " + std::string(mode_name(mode)) + " has no multivariate fit");
    }
    return it->second;
}

std::vector<const FpcaModel*> PipelineModel::fpca_models(const VariableSet& set) const {
    std::vector<const FpcaModel*> out;
    out.reserve(set.size());
    for (const auto& v : set.members()) out.push_back(&fpca(v));
    return out;
}

PipelineModel fit_pipeline(const Cohort& cohort, const PipelineOptions& options) {
    if (options.modes.empty()) throw ArgumentError("no modes requested");
    if (!(options.omega > 0.0 && options.omega <= 1.0)) throw ArgumentError("omega must lie in (0, 1]");
    if (cohort.healthy_count() < 2) {
        throw ArgumentError("at least 2 healthy subjects are required, cohort has " +
                            std::to_string(cohort.healthy_count()));
    }

    PipelineModel model;
    model.grid = cohort.grid();
    model.options = options;
    {
        std::vector<Mode> unique;
        for (Mode m : options.modes) {
            if (std::find(unique.begin(), unique.end(), m) == unique.end()) unique.push_back(m);
        }
        std::sort(unique.begin(), unique.end());
        model.options.modes = std::move(unique);
    }
    for (const auto& s : cohort.subjects()) {
        model.subject_ids.push_back(s.subject_id);
        model.healthy.push_back(s.healthy);
    }

    std::set<VariableId> needed;
    for (Mode m : model.options.modes) {
        const auto set = variable_set_for(m, options.pelvis_side);
        select_variables(cohort, set);  // validates presence
        needed.insert(set.members().begin(), set.members().end());
    }

    // Per-variable fits are independent; results do not depend on scheduling.
    const FpcaOptions fpca_options{options.omega, options.smoothing, std::nullopt};
    std::vector<std::pair<VariableId, std::future<FpcaModel>>> jobs;
    for (const auto& v : needed) {
        jobs.emplace_back(v, std::async(std::launch::async, [&cohort, &fpca_options, v] {
                              const CohortView view(cohort, {v});
                              return fit_univariate_fpca(view.curve_matrix(0), cohort.grid(), fpca_options, v);
                          }));
    }
    for (auto& [v, job] : jobs) model.univariate.emplace(v, job.get());

    for (Mode m : model.options.modes) {
        if (m == Mode::per_joint) continue;
        const auto set = variable_set_for(m, options.pelvis_side);
        auto mfpca = fit_mfpca(stack_scores(model.fpca_models(set)), MfpcaOptions{options.omega, std::nullopt});
        for (const auto& w : mfpca.warnings) {
            model.warnings.push_back(std::string(mode_name(m)) + ": " + w);
        }
        model.multivariate.emplace(m, std::move(mfpca));
    }
    return model;
}

ProjectedScores project_cohort(const PipelineModel& model, const Cohort& cohort) {
    if (!(cohort.grid() == model.grid)) {
        throw ArgumentError("cohort grid has " + std::to_string(cohort.grid().size()) + " points, model grid has " +
                            std::to_string(model.grid.size()));
    }
    ProjectedScores out;
    for (const auto& [v, fpca] : model.univariate) {
        const CohortView view = select_variables(cohort, VariableSet::single(v));
        out.univariate.emplace(v, project_scores(fpca, view.curve_matrix(0)));
    }
    for (const auto& [mode, mfpca] : model.multivariate) {
        const auto set = variable_set_for(mode, model.options.pelvis_side);
        const auto models = model.fpca_models(set);
        std::vector<Eigen::MatrixXd> blocks;
        for (const auto& v : set.members()) blocks.push_back(out.univariate.at(v));
        out.multivariate.emplace(mode, project_mscores(mfpca, stack_scores(models, blocks).matrix));
    }
    return out;
}

std::vector<std::string> component_summary(const PipelineModel& model) {
    std::vector<std::string> lines;
    for (Mode m : model.options.modes) {
        if (m == Mode::per_joint) {
            std::string line = "per_joint:";
            for (const auto& v : variable_set_for(m, model.options.pelvis_side).members()) {
                line += " " + v.label() + "=" + std::to_string(model.fpca(v).components());
            }
            lines.push_back(line);
        } else {
            const auto& mf = model.mfpca(m);
            lines.push_back(std::string(mode_name(m)) + ": W=" + std::to_string(mf.components()) +
                            " (K+=" + std::to_string(mf.source.k_plus()) + ")");
        }
    }
    return lines;
}

void save_pipeline(const PipelineModel& model, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw ArgumentError("cannot write model file " + path.string());
    out << to_json(model).dump(1) << '\n';
}

PipelineModel load_pipeline(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ArgumentError("cannot open model file " + path.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("model file " + path.string() + ": " + e.what());
    }
    return pipeline_from_json(doc);
}

}  // namespace gaitdex
