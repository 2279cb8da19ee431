#include "gaitdex/serialization.hpp"

#include "gaitdex/errors.hpp"

namespace gaitdex {

using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

template <typename T>
T field(const json& doc, const char* key) {
    if (!doc.is_object() || !doc.contains(key)) throw ParseError(std::string("missing field '") + key + "'");
    try {
        return doc.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ParseError(std::string("field '") + key + "': " + e.what());
    }
}

VariableId variable_field(const json& doc, const char* key) {
    const auto label = field<std::string>(doc, key);
    const auto v = parse_variable_label(label);
    if (!v) throw ParseError("unknown variable label '" + label + "'");
    return *v;
}

}  // namespace

json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd matrix_from_json(const json& doc, const char* what) {
    if (!doc.is_array()) throw ParseError(std::string(what) + ": expected an array of rows");
    const auto rows = static_cast<Eigen::Index>(doc.size());
    const Eigen::Index cols = rows == 0 ? 0 : static_cast<Eigen::Index>(doc.front().size());
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto& row = doc[static_cast<std::size_t>(r)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
            throw ParseError(std::string(what) + ": ragged matrix");
        }
        for (Eigen::Index c = 0; c < cols; ++c) {
            const auto& cell = row[static_cast<std::size_t>(c)];
            if (!cell.is_number()) throw ParseError(std::string(what) + ": non-numeric entry");
            m(r, c) = cell.get<double>();
        }
    }
    return m;
}

json vector_to_json(const Eigen::VectorXd& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
    return out;
}

Eigen::VectorXd vector_from_json(const json& doc, const char* what) {
    if (!doc.is_array()) throw ParseError(std::string(what) + ": expected an array");
    Eigen::VectorXd v(static_cast<Eigen::Index>(doc.size()));
    for (std::size_t i = 0; i < doc.size(); ++i) {
        if (!doc[i].is_number()) throw ParseError(std::string(what) + ": non-numeric entry");
        v[static_cast<Eigen::Index>(i)] = doc[i].get<double>();
    }
    return v;
}

// ---------------------------------------------------------------------------

json to_json(const FpcaModel& model) {
    return json{
        {"variable", model.variable.label()},
        {"grid", {{"num_points", model.grid.size()}}},
        {"mean", vector_to_json(model.mean)},
        // One row per component, T values each.
        {"eigenfunctions", matrix_to_json(model.eigenfunctions.transpose())},
        {"eigenvalues", vector_to_json(model.eigenvalues)},
        {"scores", matrix_to_json(model.scores)},
        {"pve", vector_to_json(model.pve)},
        {"omega", model.omega},
        {"noise_variance", model.noise_variance},
        {"total_variance", model.total_variance},
        {"available_components", model.available_components},
        {"sign_convention", "max_abs_positive"},
        {"estimator", model.smoothing == Smoothing::none ? "dense_sample_covariance" : "penalized_covariance"},
        {"smoothing_penalty", model.smoothing_penalty},
    };
}

FpcaModel fpca_from_json(const json& doc) {
    FpcaModel m;
    m.variable = variable_field(doc, "variable");
    m.grid = GridSpec(field<std::size_t>(doc.at("grid"), "num_points"));
    m.mean = vector_from_json(doc.at("mean"), "mean");
    m.eigenfunctions = matrix_from_json(doc.at("eigenfunctions"), "eigenfunctions").transpose();
    m.eigenvalues = vector_from_json(doc.at("eigenvalues"), "eigenvalues");
    m.scores = matrix_from_json(doc.at("scores"), "scores");
    m.pve = vector_from_json(doc.at("pve"), "pve");
    m.omega = field<double>(doc, "omega");
    m.noise_variance = field<double>(doc, "noise_variance");
    m.total_variance = field<double>(doc, "total_variance");
    m.available_components = field<std::size_t>(doc, "available_components");
    const auto estimator = field<std::string>(doc, "estimator");
    if (estimator == "dense_sample_covariance") {
        m.smoothing = Smoothing::none;
    } else if (estimator == "penalized_covariance") {
        m.smoothing = Smoothing::penalized;
    } else {
        throw ParseError("unknown estimator '" + estimator + "'");
    }
    m.smoothing_penalty = field<double>(doc, "smoothing_penalty");

    const auto t = static_cast<Eigen::Index>(m.grid.size());
    const auto k = m.eigenvalues.size();
    if (m.mean.size() != t || m.eigenfunctions.rows() != t || m.eigenfunctions.cols() != k || m.pve.size() != k ||
        (m.scores.size() > 0 && m.scores.cols() != k)) {
        throw ParseError("FPCA model for " + m.variable.label() + " has inconsistent dimensions");
    }
    return m;
}

json to_json(const MfpcaModel& model) {
    json blocks = json::array();
    for (const auto& b : model.source.blocks) {
        blocks.push_back({{"variable", b.variable.label()}, {"begin", b.begin}, {"end", b.end}});
    }
    return json{
        {"blocks", blocks},
        {"stacked_scores", matrix_to_json(model.source.matrix)},
        {"eigenvectors", matrix_to_json(model.eigenvectors.transpose())},
        {"eigenvalues", vector_to_json(model.eigenvalues)},
        {"projection_norms", vector_to_json(model.projection_norms)},
        {"mscores", matrix_to_json(model.mscores)},
        {"pve", vector_to_json(model.pve)},
        {"omega", model.omega},
        {"total_variance", model.total_variance},
        {"available_components", model.available_components},
        {"warnings", model.warnings},
    };
}

MfpcaModel mfpca_from_json(const json& doc) {
    MfpcaModel m;
    for (const auto& b : doc.at("blocks")) {
        m.source.blocks.push_back({variable_field(b, "variable"), field<std::size_t>(b, "begin"),
                                   field<std::size_t>(b, "end")});
    }
    m.source.matrix = matrix_from_json(doc.at("stacked_scores"), "stacked_scores");
    m.eigenvectors = matrix_from_json(doc.at("eigenvectors"), "eigenvectors").transpose();
    m.eigenvalues = vector_from_json(doc.at("eigenvalues"), "eigenvalues");
    m.projection_norms = vector_from_json(doc.at("projection_norms"), "projection_norms");
    m.mscores = matrix_from_json(doc.at("mscores"), "mscores");
    m.pve = vector_from_json(doc.at("pve"), "pve");
    m.omega = field<double>(doc, "omega");
    m.total_variance = field<double>(doc, "total_variance");
    m.available_components = field<std::size_t>(doc, "available_components");
    m.warnings = field<std::vector<std::string>>(doc, "warnings");
    const auto w = m.eigenvalues.size();
    if (m.eigenvectors.cols() != w || m.projection_norms.size() != w || m.pve.size() != w ||
        m.eigenvectors.rows() != m.source.matrix.cols()) {
        throw ParseError("MFPCA model has inconsistent dimensions");
    }
    return m;
}

json to_json(const PipelineModel& model) {
    json modes = json::array();
    for (Mode m : model.options.modes) modes.push_back(std::string(mode_name(m)));
    json subjects = json::array();
    for (std::size_t i = 0; i < model.subject_ids.size(); ++i) {
        subjects.push_back({{"subject_id", model.subject_ids[i]}, {"healthy", static_cast<bool>(model.healthy[i])}});
    }
    json univariate = json::array();
    for (const auto& [v, fpca] : model.univariate) univariate.push_back(to_json(fpca));
    json multivariate = json::object();
    for (const auto& [mode, mf] : model.multivariate) multivariate[std::string(mode_name(mode))] = to_json(mf);

    return json{
        {"format", "gaitdex-pipeline"},
        {"version", kFormatVersion},
        {"grid", {{"num_points", model.grid.size()}}},
        {"options",
         {{"omega", model.options.omega},
          {"pelvis_side", std::string(side_code(model.options.pelvis_side))},
          {"smoothing", std::string(smoothing_name(model.options.smoothing))},
          {"modes", modes}}},
        {"subjects", subjects},
        {"univariate", univariate},
        {"multivariate", multivariate},
        {"warnings", model.warnings},
    };
}

PipelineModel pipeline_from_json(const json& doc) {
    if (!doc.is_object() || doc.value("format", "") != "gaitdex-pipeline") {
        throw ParseError("not a gaitdex pipeline model document");
    }
    if (field<int>(doc, "version") != kFormatVersion) throw ParseError("unsupported model format version");

    PipelineModel m;
    try {
        m.grid = GridSpec(field<std::size_t>(doc.at("grid"), "num_points"));
        const auto& opts = doc.at("options");
        m.options.omega = field<double>(opts, "omega");
        const auto side = parse_side(field<std::string>(opts, "pelvis_side"));
        if (!side) throw ParseError("bad pelvis_side");
        m.options.pelvis_side = *side;
        const auto smoothing = parse_smoothing(field<std::string>(opts, "smoothing"));
        if (!smoothing) throw ParseError("bad smoothing");
        m.options.smoothing = *smoothing;
        m.options.modes.clear();
        for (const auto& name : field<std::vector<std::string>>(opts, "modes")) {
            const auto mode = parse_mode(name);
            if (!mode) throw ParseError("unknown mode '" + name + "'");
            m.options.modes.push_back(*mode);
        }
        for (const auto& s : doc.at("subjects")) {
            m.subject_ids.push_back(field<std::string>(s, "subject_id"));
            m.healthy.push_back(field<bool>(s, "healthy"));
        }
        for (const auto& u : doc.at("univariate")) {
            auto fpca = fpca_from_json(u);
            const auto v = fpca.variable;
            m.univariate.emplace(v, std::move(fpca));
        }
        for (const auto& [name, mf] : doc.at("multivariate").items()) {
            const auto mode = parse_mode(name);
            if (!mode) throw ParseError("unknown mode '" + name + "'");
            m.multivariate.emplace(*mode, mfpca_from_json(mf));
        }
        m.warnings = field<std::vector<std::string>>(doc, "warnings");
    } catch (const json::exception& e) {
        throw ParseError(std::string("model document: ") + e.what());
    } catch (const ArgumentError& e) {
        throw ParseError(std::string("model document: ") + e.what());
    }
    return m;
}

}  // namespace gaitdex
