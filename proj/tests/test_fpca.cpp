#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gaitdex/errors.hpp"
#include "gaitdex/fpca.hpp"
#include "oracles.hpp"

using namespace gaitdex;

namespace {

Eigen::MatrixXd rank_one(const GridSpec& grid, const std::vector<double>& c, Eigen::VectorXd* phi_out = nullptr) {
    const auto t = static_cast<Eigen::Index>(grid.size());
    const auto w = oracle::trapezoid(grid.size());
    Eigen::VectorXd phi(t), mu(t);
    for (Eigen::Index l = 0; l < t; ++l) {
        const double s = static_cast<double>(l) / static_cast<double>(t - 1);
        phi[l] = std::sin(2.0 * M_PI * s) + 0.3;
        mu[l] = 20.0 * std::cos(2.0 * M_PI * s);
    }
    double norm = 0;
    for (Eigen::Index l = 0; l < t; ++l) norm += w[static_cast<std::size_t>(l)] * phi[l] * phi[l];
    phi /= std::sqrt(norm);
    if (phi_out) *phi_out = phi;
    Eigen::MatrixXd m(static_cast<Eigen::Index>(c.size()), t);
    for (std::size_t i = 0; i < c.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = (mu + c[i] * phi).transpose();
    return m;
}

double quad(const std::vector<double>& w, const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    double s = 0;
    for (std::size_t l = 0; l < w.size(); ++l) s += w[l] * a[static_cast<Eigen::Index>(l)] * b[static_cast<Eigen::Index>(l)];
    return s;
}

}  // namespace

TEST(Quadrature, TrapezoidOnUnitInterval) {
    const auto w = quadrature_weights(GridSpec(5));
    const auto expected = oracle::trapezoid(5);
    for (int l = 0; l < 5; ++l) EXPECT_DOUBLE_EQ(w[l], expected[static_cast<std::size_t>(l)]);
    EXPECT_NEAR(w.sum(), 1.0, 1e-15);
}

TEST(Center, Examples) {
    Eigen::MatrixXd sym(2, 4);
    sym << 1, -2, 3, 0.5, -1, 2, -3, -0.5;
    const auto a = center(sym);
    EXPECT_NEAR(a.mean.cwiseAbs().maxCoeff(), 0.0, 1e-15);
    EXPECT_EQ(a.centered, sym);

    Eigen::MatrixXd same = Eigen::MatrixXd::Constant(4, 3, 2.5);
    EXPECT_EQ(center(same).centered.cwiseAbs().maxCoeff(), 0.0);

    std::mt19937_64 rng(5);
    const auto r = oracle::random_matrix(rng, 5, 9);
    const auto c = center(r);
    for (int l : {0, 4, 8}) {
        double s = 0;
        for (int i = 0; i < 5; ++i) s += r(i, l);
        EXPECT_NEAR(c.mean[l], s / 5.0, 1e-14);
    }
    EXPECT_LT(c.centered.colwise().sum().cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_THROW(center(Eigen::MatrixXd::Zero(1, 3)), ArgumentError);
}

TEST(Fpca, RankOneCohort) {
    const GridSpec grid(41);
    const std::vector<double> c = {-3, -1, 0.5, 1.5, 2};
    Eigen::VectorXd phi;
    const auto curves = rank_one(grid, c, &phi);
    const auto m = fit_univariate_fpca(curves, grid, {0.99, Smoothing::none, std::nullopt});
    ASSERT_EQ(m.components(), 1u);
    EXPECT_NEAR(m.pve[0], 1.0, 1e-12);
    const double sign = m.eigenfunctions.col(0).dot(phi) > 0 ? 1.0 : -1.0;
    EXPECT_LT((m.eigenfunctions.col(0) - sign * phi).cwiseAbs().maxCoeff(), 1e-8);
    for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(m.scores(static_cast<Eigen::Index>(i), 0), sign * c[i], 1e-8);
    for (std::size_t i = 0; i < c.size(); ++i) {
        const Eigen::VectorXd r = reconstruct(m, i, 1);
        EXPECT_LT(rmse(Eigen::VectorXd(curves.row(static_cast<Eigen::Index>(i)).transpose()), r), 1e-10);
    }
}

TEST(Fpca, MatchesDenseEigenOracle) {
    std::mt19937_64 rng(12);
    const GridSpec grid(25);
    const Eigen::MatrixXd curves = oracle::random_curves(rng, 12, 25) + 0.3 * oracle::random_matrix(rng, 12, 25);
    const auto m = fit_univariate_fpca(curves, grid, {0.999999, Smoothing::none, std::nullopt});

    const auto w = oracle::trapezoid(25);
    const auto c = oracle::covariance(curves);
    Eigen::MatrixXd a(25, 25);
    for (int i = 0; i < 25; ++i) {
        for (int j = 0; j < 25; ++j) a(i, j) = std::sqrt(w[static_cast<std::size_t>(i)]) * c(i, j) * std::sqrt(w[static_cast<std::size_t>(j)]);
    }
    const auto ref = oracle::jacobi_eigen(a);
    const double scale = std::max(1.0, ref.values[0]);
    const auto centered = center(curves).centered;
    for (std::size_t k = 0; k < m.components(); ++k) {
        EXPECT_NEAR(m.eigenvalues[static_cast<Eigen::Index>(k)], ref.values[k], 1e-8 * scale) << "k=" << k;
        Eigen::VectorXd phi(25);
        for (int l = 0; l < 25; ++l) phi[l] = ref.vectors[k][static_cast<std::size_t>(l)] / std::sqrt(w[static_cast<std::size_t>(l)]);
        for (int i = 0; i < 12; ++i) {
            const double score = quad(w, centered.row(i).transpose(), phi);
            EXPECT_NEAR(std::abs(m.scores(i, static_cast<Eigen::Index>(k))), std::abs(score), 1e-7 * std::sqrt(scale));
        }
    }
}

TEST(Fpca, InvariantsOnRandomCohorts) {
    std::mt19937_64 rng(99);
    for (int rep = 0; rep < 10; ++rep) {
        const Eigen::Index n = 5 + static_cast<Eigen::Index>(rng() % 30);
        const Eigen::Index t = 11 + static_cast<Eigen::Index>(rng() % 60);
        const GridSpec grid(static_cast<std::size_t>(t));
        const Eigen::MatrixXd curves = oracle::random_curves(rng, n, t);
        const auto m = fit_univariate_fpca(curves, grid, {0.99, Smoothing::none, std::nullopt});
        const auto w = oracle::trapezoid(static_cast<std::size_t>(t));
        const auto k = static_cast<Eigen::Index>(m.components());
        for (Eigen::Index a = 0; a < k; ++a) {
            for (Eigen::Index b = 0; b < k; ++b) {
                EXPECT_NEAR(quad(w, m.eigenfunctions.col(a), m.eigenfunctions.col(b)), a == b ? 1.0 : 0.0, 1e-8);
            }
            EXPECT_LT(std::abs(m.scores.col(a).mean()), 1e-8);
            if (a > 0) {
                EXPECT_GE(m.eigenvalues[a - 1], m.eigenvalues[a]);
            }
            // Score variance equals the eigenvalue exactly for the pooled fit.
            const double var = m.scores.col(a).squaredNorm() / static_cast<double>(n - 1);
            EXPECT_NEAR(var, m.eigenvalues[a], 1e-8 * std::max(1.0, m.eigenvalues[0]));
        }
        EXPECT_GE(m.pve[k - 1], 0.99 - 1e-12);
        if (k > 1) EXPECT_LT(m.pve[k - 2], 0.99);
        for (Eigen::Index i = 0; i < n; ++i) {
            double prev = std::numeric_limits<double>::infinity();
            const Eigen::VectorXd obs = curves.row(i).transpose();
            for (std::size_t j = 1; j <= m.components(); ++j) {
                const Eigen::VectorXd r = obs - reconstruct(m, static_cast<std::size_t>(i), j);
                const double e = std::sqrt(quad(w, r, r));
                EXPECT_LE(e, prev + 1e-10);
                prev = e;
            }
        }
    }
}

TEST(Fpca, SignConventionAndDeterminism) {
    std::mt19937_64 rng(3);
    const GridSpec grid(31);
    const auto curves = oracle::random_curves(rng, 20, 31);
    const auto a = fit_univariate_fpca(curves, grid, {0.95, Smoothing::none, std::nullopt});
    const auto b = fit_univariate_fpca(curves, grid, {0.95, Smoothing::none, std::nullopt});
    EXPECT_EQ(a.eigenfunctions, b.eigenfunctions);
    EXPECT_EQ(a.scores, b.scores);
    for (Eigen::Index k = 0; k < a.eigenfunctions.cols(); ++k) {
        Eigen::Index arg = 0;
        a.eigenfunctions.col(k).cwiseAbs().maxCoeff(&arg);
        EXPECT_GT(a.eigenfunctions(arg, k), 0.0);
    }
    Eigen::VectorXd v(4);
    v << 1, -3, 3, 0;
    apply_sign_convention(v);
    EXPECT_EQ(v[1], 3.0);  // tie goes to the earliest index, made positive
}

TEST(Fpca, Errors) {
    const GridSpec grid(5);
    EXPECT_THROW(fit_univariate_fpca(Eigen::MatrixXd::Constant(4, 5, 1.0), grid, {}), DegenerateError);
    std::mt19937_64 rng(1);
    const auto curves = oracle::random_curves(rng, 6, 5);
    EXPECT_THROW(fit_univariate_fpca(curves, grid, {0.0, Smoothing::none, std::nullopt}), ArgumentError);
    EXPECT_THROW(fit_univariate_fpca(curves, grid, {1.5, Smoothing::none, std::nullopt}), ArgumentError);
    EXPECT_THROW(fit_univariate_fpca(curves.topRows(1), grid, {}), ArgumentError);
    const auto m = fit_univariate_fpca(curves, grid, {});
    EXPECT_THROW(reconstruct(m, 0, 0), ArgumentError);
    EXPECT_THROW(reconstruct(m, 0, m.components() + 1), ArgumentError);
    EXPECT_THROW(reconstruct(m, 6, 1), ArgumentError);
    EXPECT_THROW(fit_univariate_fpca(curves, grid, {0.99, Smoothing::none, std::size_t{0}}), ArgumentError);
}

TEST(Fpca, OmegaOneKeepsWholeSpectrum) {
    std::mt19937_64 rng(8);
    const auto curves = oracle::random_curves(rng, 10, 15);
    const auto m = fit_univariate_fpca(curves, GridSpec(15), {1.0, Smoothing::none, std::nullopt});
    EXPECT_EQ(m.components(), m.available_components);
    EXPECT_NEAR(m.pve[m.pve.size() - 1], 1.0, 1e-12);
}

TEST(Fpca, FixedComponentCount) {
    std::mt19937_64 rng(9);
    const auto curves = oracle::random_curves(rng, 15, 21);
    const auto base = fit_univariate_fpca(curves, GridSpec(21), {0.9, Smoothing::none, std::nullopt});
    const auto fixed = fit_univariate_fpca(curves, GridSpec(21), {0.9, Smoothing::none, base.components() + 1});
    EXPECT_EQ(fixed.components(), base.components() + 1);
    EXPECT_EQ(fixed.scores.leftCols(static_cast<Eigen::Index>(base.components())), base.scores);
}

TEST(Fpca, NoiseVarianceNonNegativeAndSmall) {
    std::mt19937_64 rng(10);
    const auto curves = oracle::random_curves(rng, 40, 51);
    const auto m = fit_univariate_fpca(curves, GridSpec(51), {0.99, Smoothing::none, std::nullopt});
    EXPECT_GE(m.noise_variance, 0.0);
    EXPECT_LT(m.noise_variance, 1.0);
}

TEST(Fpca, PenalizedMode) {
    std::mt19937_64 rng(11);
    const GridSpec grid(41);
    const auto curves = oracle::random_curves(rng, 30, 41);
    const auto m = fit_univariate_fpca(curves, grid, {0.99, Smoothing::penalized, std::nullopt});
    EXPECT_EQ(m.smoothing, Smoothing::penalized);
    EXPECT_GT(m.smoothing_penalty, 0.0);
    EXPECT_GE(m.noise_variance, 0.0);
    const auto w = oracle::trapezoid(41);
    for (Eigen::Index a = 0; a < m.eigenfunctions.cols(); ++a) {
        EXPECT_NEAR(quad(w, m.eigenfunctions.col(a), m.eigenfunctions.col(a)), 1.0, 1e-8);
    }
    const auto exact = fit_univariate_fpca(curves, grid, {0.99, Smoothing::none, std::nullopt});
    // Smoothing removes white noise, so the leading structure needs no more components.
    EXPECT_LE(m.components(), exact.components());
}

TEST(Rmse, Examples) {
    const std::vector<double> a = {1, 2, 3}, b = {1, 2, 5}, c = {3, 4, 5};
    EXPECT_EQ(rmse(a, a), 0.0);
    EXPECT_NEAR(rmse(c, a), 2.0, 1e-15);
    EXPECT_NEAR(rmse(a, b), std::sqrt(4.0 / 3.0), 1e-15);
    EXPECT_THROW(rmse(a, std::vector<double>{1, 2}), ArgumentError);
    EXPECT_NEAR(mean_rmse(std::vector<double>{1, 2, 3}), 2.0, 1e-15);
}
