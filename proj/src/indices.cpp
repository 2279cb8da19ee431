#include "gaitdex/indices.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "gaitdex/errors.hpp"
#include "gaitdex/stats.hpp"
#include "gaitdex/text.hpp"

namespace gaitdex {

namespace {

std::size_t count_true(const std::vector<bool>& mask) {
    std::size_t n = 0;
    for (bool b : mask) n += b ? 1 : 0;
    return n;
}

void check_mask(const std::vector<bool>& healthy, Eigen::Index rows) {
    if (static_cast<Eigen::Index>(healthy.size()) != rows) {
        throw ArgumentError("healthy mask length does not match the number of subjects");
    }
}

/// Row-wise log Euclidean distance to the healthy column means.
DistanceIndex log_distance(const Eigen::MatrixXd& features, const std::vector<bool>& healthy) {
    check_mask(healthy, features.rows());
    const std::size_t nh = count_true(healthy);
    if (nh == 0) throw ArgumentError("at least one healthy subject is required");

    Eigen::RowVectorXd centre = Eigen::RowVectorXd::Zero(features.cols());
    for (Eigen::Index i = 0; i < features.rows(); ++i) {
        if (healthy[static_cast<std::size_t>(i)]) centre += features.row(i);
    }
    centre /= static_cast<double>(nh);

    DistanceIndex out;
    out.values.resize(static_cast<std::size_t>(features.rows()));
    out.clamped.resize(out.values.size());
    for (Eigen::Index i = 0; i < features.rows(); ++i) {
        const double distance = std::sqrt((features.row(i) - centre).squaredNorm());
        const bool clamp = !(distance >= kZeroDistanceFloor);
        out.values[static_cast<std::size_t>(i)] = std::log(clamp ? kZeroDistanceFloor : distance);
        out.clamped[static_cast<std::size_t>(i)] = clamp;
    }
    return out;
}

std::vector<double> healthy_values(std::span<const double> values, const std::vector<bool>& healthy) {
    std::vector<double> out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (healthy[i]) out.push_back(values[i]);
    }
    return out;
}

std::vector<double> zscore(std::span<const double> values, const std::vector<bool>& healthy, const char* what) {
    if (healthy.size() != values.size()) throw ArgumentError("healthy mask length does not match the values");
    const auto ref = healthy_values(values, healthy);
    if (ref.size() < 2) throw ArgumentError(std::string(what) + ": at least 2 healthy subjects are required");
    const double mu = stats::mean(ref);
    const double sd = stats::sample_sd(ref);
    if (!(sd > 0.0)) throw DegenerateError(std::string(what) + ": healthy subjects have zero spread");
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - mu) / sd;
    return out;
}

}  // namespace

DistanceIndex fgdi(const Eigen::MatrixXd& scores, const std::vector<bool>& healthy) {
    if (scores.cols() < 1) throw ArgumentError("fgdi: score matrix has no components");
    return log_distance(scores, healthy);
}

std::vector<double> sfgdi(std::span<const double> fgdi_values, const std::vector<bool>& healthy) {
    return zscore(fgdi_values, healthy, "sFGDI");
}

// ---------------------------------------------------------------------------

MapProfile map_profile_from_scores(const std::vector<VariableId>& variables, const std::vector<Eigen::MatrixXd>& scores,
                                   const std::vector<bool>& healthy) {
    if (variables.size() != scores.size()) throw ArgumentError("map_profile: one score matrix per variable required");
    MapProfile out;
    out.variables = variables;
    out.values.resize(static_cast<Eigen::Index>(healthy.size()), static_cast<Eigen::Index>(variables.size()));
    for (std::size_t u = 0; u < variables.size(); ++u) {
        const auto f = fgdi(scores[u], healthy);
        const auto z = sfgdi(f.values, healthy);
        for (std::size_t i = 0; i < z.size(); ++i) out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(u)) = z[i];
        out.clamped.push_back(f.clamped);
    }
    return out;
}

MapProfile map_profile(const Cohort& cohort, double omega, Side pelvis_side, Smoothing smoothing) {
    const auto set = VariableSet::combined15(pelvis_side);
    const auto view = select_variables(cohort, set);
    std::vector<Eigen::MatrixXd> scores;
    for (std::size_t u = 0; u < set.size(); ++u) {
        const auto model =
            fit_univariate_fpca(view.curve_matrix(u), cohort.grid(), {omega, smoothing, std::nullopt}, set.members()[u]);
        scores.push_back(model.scores);
    }
    return map_profile_from_scores(set.members(), scores, cohort.healthy_mask());
}

// ---------------------------------------------------------------------------

GvsGps gvs_gps(const Cohort& cohort, const VariableSet& set) {
    if (cohort.healthy_count() == 0) throw ArgumentError("GVS/GPS: no healthy subjects");
    const auto view = select_variables(cohort, set);
    const auto n = static_cast<Eigen::Index>(cohort.size());
    const auto v = static_cast<Eigen::Index>(set.size());

    GvsGps out;
    out.variables = set.members();
    out.gvs.resize(n, v);
    for (Eigen::Index u = 0; u < v; ++u) {
        const Eigen::VectorXd mean = healthy_mean_curve(cohort, set.members()[static_cast<std::size_t>(u)]);
        const Eigen::MatrixXd curves = view.curve_matrix(static_cast<std::size_t>(u));
        for (Eigen::Index i = 0; i < n; ++i) out.gvs(i, u) = rmse(Eigen::VectorXd(curves.row(i).transpose()), mean);
    }
    out.gps.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        out.gps[static_cast<std::size_t>(i)] = std::sqrt(out.gvs.row(i).squaredNorm() / static_cast<double>(v));
    }
    return out;
}

// ---------------------------------------------------------------------------

std::string_view basis_source_name(BasisSource source) {
    return source == BasisSource::published_supplement ? "published_supplement" : "surrogate_svd";
}

GdiFeatureBasis parse_gdi_basis(std::istream& in) {
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        const auto fields = text::split_csv_line(line);
        std::vector<double> row;
        for (const auto& f : fields) {
            const auto v = text::parse_double(f);
            if (!v || !std::isfinite(*v)) {
                throw ParseError("GDI basis row " + std::to_string(line_no) + ": bad number '" + f + "'");
            }
            row.push_back(*v);
        }
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw ParseError("GDI basis row " + std::to_string(line_no) + " has a different column count");
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ParseError("GDI basis file is empty");
    if (rows.size() % kJointCount != 0) {
        throw DataError("GDI basis has " + std::to_string(rows.size()) + " rows, not a multiple of 9 variables");
    }
    GdiFeatureBasis basis;
    basis.source = BasisSource::published_supplement;
    basis.features.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < rows[r].size(); ++c) {
            basis.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
        }
    }
    validate_gdi_basis(basis);
    return basis;
}

GdiFeatureBasis load_gdi_basis(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ArgumentError("cannot open GDI basis file " + path.string());
    return parse_gdi_basis(in);
}

void validate_gdi_basis(const GdiFeatureBasis& basis) {
    const Eigen::MatrixXd gram = basis.features.transpose() * basis.features;
    const double err = (gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
    if (!(err <= 1e-6)) {
        std::ostringstream os;
        os << "GDI basis columns are not orthonormal (max Gram deviation " << err << ")";
        throw DataError(os.str());
    }
}

GdiFeatureBasis surrogate_gdi_basis(const Cohort& cohort, std::size_t num_features) {
    const std::size_t nh = cohort.healthy_count();
    if (nh == 0) throw ArgumentError("surrogate GDI basis: no healthy subjects");
    const auto t = static_cast<Eigen::Index>(cohort.grid().size());
    const Eigen::Index m = static_cast<Eigen::Index>(kJointCount) * t;

    Eigen::MatrixXd gait(m, static_cast<Eigen::Index>(2 * nh));
    Eigen::Index col = 0;
    for (Side side : {Side::left, Side::right}) {
        const auto view = select_variables(cohort, VariableSet::leg9(side));
        const Eigen::MatrixXd stacked = view.stacked_matrix();
        for (Eigen::Index i = 0; i < stacked.rows(); ++i) {
            if (cohort.subject(static_cast<std::size_t>(i)).healthy) gait.col(col++) = stacked.row(i).transpose();
        }
    }

    const Eigen::BDCSVD<Eigen::MatrixXd> svd(gait, Eigen::ComputeThinU);
    const Eigen::VectorXd& sv = svd.singularValues();
    Eigen::Index rank = 0;
    while (rank < sv.size() && sv[rank] > 1e-12 * sv[0]) ++rank;
    const Eigen::Index f = std::min<Eigen::Index>(static_cast<Eigen::Index>(num_features), rank);
    if (f == 0) throw DegenerateError("surrogate GDI basis: healthy gait matrix is zero");

    GdiFeatureBasis basis;
    basis.source = BasisSource::surrogate_svd;
    basis.features = svd.matrixU().leftCols(f);
    for (Eigen::Index c = 0; c < f; ++c) apply_sign_convention(basis.features.col(c));
    return basis;
}

GdiResult gdi(const Cohort& cohort, Side side, const GdiFeatureBasis& basis) {
    if (basis.features.rows() != static_cast<Eigen::Index>(kJointCount * cohort.grid().size())) {
        throw ArgumentError("GDI basis expects " + std::to_string(basis.grid_points()) +
                            " points per variable, cohort grid has " + std::to_string(cohort.grid().size()));
    }
    validate_gdi_basis(basis);
    const auto view = select_variables(cohort, VariableSet::leg9(side));
    const Eigen::MatrixXd features = view.stacked_matrix() * basis.features;
    const auto healthy = cohort.healthy_mask();
    const auto dist = log_distance(features, healthy);

    GdiResult out;
    out.gdi = dist.values;
    out.clamped = dist.clamped;
    const auto z = zscore(out.gdi, healthy, "sGDI");
    out.sgdi.resize(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) out.sgdi[i] = 100.0 - 10.0 * z[i];
    return out;
}

// ---------------------------------------------------------------------------

OaModel fit_oa(const Cohort& cohort, const VariableSet& set) {
    const std::size_t nh = cohort.healthy_count();
    if (nh < 2) throw ArgumentError("OA: at least 2 healthy subjects are required");
    const auto view = select_variables(cohort, set);
    const Eigen::MatrixXd all = view.stacked_matrix();
    const Eigen::Index m = all.cols();

    Eigen::MatrixXd g(static_cast<Eigen::Index>(nh), m);
    Eigen::Index row = 0;
    for (Eigen::Index i = 0; i < all.rows(); ++i) {
        if (cohort.subject(static_cast<std::size_t>(i)).healthy) g.row(row++) = all.row(i);
    }

    OaModel model;
    model.variables = set.members();
    model.grid_points = cohort.grid().size();
    const auto dnh = static_cast<double>(nh);
    model.column_mean = g.colwise().mean().transpose();
    Eigen::MatrixXd centered = g.rowwise() - model.column_mean.transpose();
    model.column_sd = (centered.colwise().squaredNorm() / (dnh - 1.0)).cwiseSqrt().transpose();
    std::size_t constant_columns = 0;
    for (Eigen::Index c = 0; c < m; ++c) {
        if (!(model.column_sd[c] > 0.0)) {
            model.column_sd[c] = 1.0;
            ++constant_columns;
        }
    }
    if (constant_columns > 0) {
        model.warnings.push_back(std::to_string(constant_columns) +
                                 " gait-matrix columns have zero variance among healthy subjects; scale set to 1");
    }
    const Eigen::MatrixXd scaled = centered * model.column_sd.cwiseInverse().asDiagonal();

    // Nonzero spectrum of the M x M correlation matrix via the N_H x N_H Gram matrix.
    const Eigen::MatrixXd gram = scaled * scaled.transpose() / (dnh - 1.0);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
    const Eigen::VectorXd values = eig.eigenvalues().reverse();
    const Eigen::MatrixXd vectors = eig.eigenvectors().rowwise().reverse();

    Eigen::Index k = 0;
    while (k < values.size() && values[k] >= 1.0 - 1e-10) ++k;
    if (k == 0) throw DegenerateError("OA: no principal component has eigenvalue >= 1");

    model.eigenvalues = values.head(k);
    model.eigenvectors.resize(m, k);
    for (Eigen::Index c = 0; c < k; ++c) {
        Eigen::VectorXd r = scaled.transpose() * vectors.col(c);
        r /= r.norm();
        apply_sign_convention(r);
        model.eigenvectors.col(c) = r;
    }

    const Eigen::MatrixXd healthy_scores = scaled * model.eigenvectors;
    model.healthy_mean = healthy_scores.colwise().mean().transpose();
    const Eigen::MatrixXd hc = healthy_scores.rowwise() - model.healthy_mean.transpose();
    model.healthy_sd = (hc.colwise().squaredNorm() / (dnh - 1.0)).cwiseSqrt().transpose();
    return model;
}

Eigen::MatrixXd oa_feature_scores(const OaModel& model, const Eigen::MatrixXd& stacked) {
    if (stacked.cols() != model.column_mean.size()) throw ArgumentError("OA: gait vector length mismatch");
    const Eigen::MatrixXd scaled =
        (stacked.rowwise() - model.column_mean.transpose()) * model.column_sd.cwiseInverse().asDiagonal();
    return scaled * model.eigenvectors;
}

std::vector<double> oa_values(const OaModel& model, const Eigen::MatrixXd& stacked) {
    const Eigen::MatrixXd s = oa_feature_scores(model, stacked);
    std::vector<double> out(static_cast<std::size_t>(s.rows()));
    const auto k = static_cast<double>(model.components());
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
        const Eigen::RowVectorXd z =
            (s.row(i) - model.healthy_mean.transpose()).cwiseQuotient(model.healthy_sd.transpose());
        out[static_cast<std::size_t>(i)] = z.cwiseAbs().sum() / k;
    }
    return out;
}

Eigen::MatrixXd oa_reconstruct(const OaModel& model, const Eigen::MatrixXd& feature_scores) {
    const Eigen::MatrixXd scaled = feature_scores * model.eigenvectors.transpose();
    return (scaled * model.column_sd.asDiagonal()).rowwise() + model.column_mean.transpose();
}

OaResult oa(const Cohort& cohort, const VariableSet& set) {
    const auto model = fit_oa(cohort, set);
    const auto view = select_variables(cohort, set);
    return {oa_values(model, view.stacked_matrix()), model.components(), model.warnings};
}

// ---------------------------------------------------------------------------

ApproximationError fgdi_approximation_error(const Cohort& cohort, const PipelineModel& model,
                                            const VariableSet& set) {
    const auto view = select_variables(cohort, set);
    const auto n = static_cast<Eigen::Index>(cohort.size());
    ApproximationError out;
    out.variables = set.members();
    out.per_variable.resize(n, static_cast<Eigen::Index>(set.size()));
    for (std::size_t u = 0; u < set.size(); ++u) {
        const auto& fpca = model.fpca(set.members()[u]);
        const Eigen::MatrixXd curves = view.curve_matrix(u);
        const Eigen::MatrixXd scores = project_scores(fpca, curves);
        for (Eigen::Index i = 0; i < n; ++i) {
            const Eigen::VectorXd approx = reconstruct_from_scores(fpca, scores.row(i).transpose(), fpca.components());
            out.per_variable(i, static_cast<Eigen::Index>(u)) = rmse(Eigen::VectorXd(curves.row(i).transpose()), approx);
        }
    }
    for (Eigen::Index i = 0; i < n; ++i) out.per_subject.push_back(out.per_variable.row(i).mean());
    return out;
}

ApproximationError oa_approximation_error(const Cohort& cohort, const VariableSet& set) {
    const auto model = fit_oa(cohort, set);
    const auto view = select_variables(cohort, set);
    const Eigen::MatrixXd stacked = view.stacked_matrix();
    const Eigen::MatrixXd approx = oa_reconstruct(model, oa_feature_scores(model, stacked));
    const auto t = static_cast<Eigen::Index>(cohort.grid().size());
    const auto n = stacked.rows();

    ApproximationError out;
    out.variables = set.members();
    out.per_variable.resize(n, static_cast<Eigen::Index>(set.size()));
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index u = 0; u < static_cast<Eigen::Index>(set.size()); ++u) {
            out.per_variable(i, u) = rmse(Eigen::VectorXd(stacked.row(i).segment(u * t, t).transpose()),
                                          Eigen::VectorXd(approx.row(i).segment(u * t, t).transpose()));
        }
        out.per_subject.push_back(out.per_variable.row(i).mean());
    }
    return out;
}

// ---------------------------------------------------------------------------

namespace {

double mean_difference_x100(const std::vector<double>& reference, const std::vector<double>& other) {
    double sum = 0.0;
    for (std::size_t i = 0; i < reference.size(); ++i) sum += reference[i] - other[i];
    return 100.0 * sum / static_cast<double>(reference.size());
}

}  // namespace

StabilityTable stability_analysis(const Cohort& cohort, Mode mode, const PipelineOptions& options,
                                  std::span<const int> deltas) {
    StabilityTable table;
    table.mode = mode;
    table.deltas.assign(deltas.begin(), deltas.end());
    const auto healthy = cohort.healthy_mask();
    const auto set = variable_set_for(mode, options.pelvis_side);
    const auto view = select_variables(cohort, set);
    const FpcaOptions base{options.omega, options.smoothing, std::nullopt};

    if (mode == Mode::per_joint) {
        for (std::size_t u = 0; u < set.size(); ++u) {
            const VariableId variable = set.members()[u];
            const Eigen::MatrixXd curves = view.curve_matrix(u);
            const auto optimal = fit_univariate_fpca(curves, cohort.grid(), base, variable);
            const auto reference = fgdi(optimal.scores, healthy).values;

            StabilityRow row{variable.display_name(), optimal.components(), {}};
            for (int j : deltas) {
                const long long k = static_cast<long long>(optimal.components()) + j;
                if (j == 0) {
                    row.deltas.emplace_back(0.0);
                } else if (k < 1 || k > static_cast<long long>(optimal.available_components)) {
                    row.deltas.emplace_back(std::nullopt);
                    table.warnings.push_back(variable.label() + ": K" + (j > 0 ? "+" : "") + std::to_string(j) +
                                             " = " + std::to_string(k) + " is out of range; skipped");
                } else {
                    auto opts = base;
                    opts.num_components = static_cast<std::size_t>(k);
                    const auto adjusted = fit_univariate_fpca(curves, cohort.grid(), opts, variable);
                    row.deltas.emplace_back(mean_difference_x100(reference, fgdi(adjusted.scores, healthy).values));
                }
            }
            table.rows.push_back(std::move(row));
        }
        return table;
    }

    std::vector<FpcaModel> fits;
    for (std::size_t u = 0; u < set.size(); ++u) {
        fits.push_back(fit_univariate_fpca(view.curve_matrix(u), cohort.grid(), base, set.members()[u]));
    }
    std::vector<const FpcaModel*> pointers;
    for (const auto& f : fits) pointers.push_back(&f);
    const auto stack = stack_scores(pointers);
    const auto optimal = fit_mfpca(stack, {options.omega, std::nullopt});
    const auto reference = fgdi(optimal.mscores, healthy).values;

    StabilityRow row{std::string(mode_name(mode)), optimal.components(), {}};
    const auto limit = static_cast<long long>(std::min(optimal.available_components, stack.k_plus() - 1));
    for (int j : deltas) {
        const long long w = static_cast<long long>(optimal.components()) + j;
        if (j == 0) {
            row.deltas.emplace_back(0.0);
        } else if (w < 1 || w > limit) {
            row.deltas.emplace_back(std::nullopt);
            table.warnings.push_back(std::string(mode_name(mode)) + ": W" + (j > 0 ? "+" : "") + std::to_string(j) +
                                     " = " + std::to_string(w) + " is out of range; skipped");
        } else {
            const auto adjusted = fit_mfpca(stack, {options.omega, static_cast<std::size_t>(w)});
            row.deltas.emplace_back(mean_difference_x100(reference, fgdi(adjusted.mscores, healthy).values));
        }
    }
    table.rows.push_back(std::move(row));
    return table;
}

}  // namespace gaitdex
