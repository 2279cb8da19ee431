#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "gaitdex/errors.hpp"
#include "gaitdex/mfpca.hpp"
#include "oracles.hpp"

using namespace gaitdex;

namespace {

std::vector<FpcaModel> fixed_models(std::mt19937_64& rng, Eigen::Index n, const std::vector<std::size_t>& ks) {
    std::vector<FpcaModel> out;
    for (std::size_t u = 0; u < ks.size(); ++u) {
        const Eigen::MatrixXd curves = oracle::random_curves(rng, n, 21) + 0.5 * oracle::random_matrix(rng, n, 21);
        out.push_back(fit_univariate_fpca(curves, GridSpec(21), {0.99, Smoothing::none, ks[u]},
                                          VariableId::from_index(u)));
    }
    return out;
}

std::vector<const FpcaModel*> pointers(const std::vector<FpcaModel>& models) {
    std::vector<const FpcaModel*> p;
    for (const auto& m : models) p.push_back(&m);
    return p;
}

ScoreStack raw_stack(const Eigen::MatrixXd& xi) {
    ScoreStack s;
    s.matrix = xi;
    s.blocks.push_back({VariableId{}, 0, static_cast<std::size_t>(xi.cols())});
    return s;
}

}  // namespace

TEST(StackScores, Layout) {
    std::mt19937_64 rng(1);
    const auto models = fixed_models(rng, 12, {2, 3});
    const auto s = stack_scores(pointers(models));
    EXPECT_EQ(s.k_plus(), 5u);
    ASSERT_EQ(s.blocks.size(), 2u);
    EXPECT_EQ(s.blocks[0].begin, 0u);
    EXPECT_EQ(s.blocks[0].end, 2u);
    EXPECT_EQ(s.blocks[1].begin, 2u);
    EXPECT_EQ(s.blocks[1].end, 5u);
    EXPECT_EQ(s.matrix.leftCols(2), models[0].scores);
    EXPECT_EQ(s.matrix.rightCols(3), models[1].scores);
    EXPECT_LT(s.matrix.colwise().mean().cwiseAbs().maxCoeff(), 1e-8);

    const auto single = stack_scores({&models[0]});
    EXPECT_EQ(single.matrix, models[0].scores);
}

TEST(StackScores, PublishedComponentCountsSumTo99) {
    std::mt19937_64 rng(2);
    const std::vector<std::size_t> ks = {10, 8, 7, 4, 5, 7, 7, 7, 3, 10, 8, 7, 4, 5, 7};
    const auto models = fixed_models(rng, 30, ks);
    EXPECT_EQ(stack_scores(pointers(models)).k_plus(), 99u);
}

TEST(StackScores, MismatchedSubjects) {
    std::mt19937_64 rng(3);
    auto a = fixed_models(rng, 10, {2});
    auto b = fixed_models(rng, 11, {2});
    EXPECT_THROW(stack_scores({&a[0], &b[0]}), ArgumentError);
}

TEST(JointCovariance, Examples) {
    Eigen::MatrixXd toy(2, 2);
    toy << 1, 0, -1, 0;
    Eigen::MatrixXd expected(2, 2);
    expected << 2, 0, 0, 0;
    EXPECT_EQ(joint_covariance(raw_stack(toy)), expected);

    std::mt19937_64 rng(4);
    const auto xi = oracle::random_matrix(rng, 6, 4);
    const auto z = joint_covariance(raw_stack(xi));
    EXPECT_LT((z - oracle::cross_product(xi)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((z - z.transpose()).cwiseAbs().maxCoeff(), 1e-12);

    // Orthogonal columns with squared norm (N-1) lambda give a diagonal Z.
    Eigen::MatrixXd orth = Eigen::MatrixXd::Zero(4, 2);
    orth(0, 0) = std::sqrt(3.0 * 2.0);
    orth(1, 1) = std::sqrt(3.0 * 5.0);
    const auto zd = joint_covariance(raw_stack(orth));
    EXPECT_NEAR(zd(0, 0), 2.0, 1e-12);
    EXPECT_NEAR(zd(1, 1), 5.0, 1e-12);
    EXPECT_EQ(zd(0, 1), 0.0);

    EXPECT_THROW(joint_covariance(raw_stack(Eigen::MatrixXd::Ones(1, 3))), ArgumentError);
}

TEST(Mfpca, MatchesOracleAndIdentities) {
    std::mt19937_64 rng(5);
    const auto models = fixed_models(rng, 25, {4, 3, 5});
    const auto stack = stack_scores(pointers(models));
    const auto m = fit_mfpca(stack, {0.95, std::nullopt});
    const auto n = static_cast<double>(stack.matrix.rows());

    const auto ref = oracle::jacobi_eigen(oracle::cross_product(stack.matrix));
    const double scale = std::max(1.0, ref.values[0]);
    const auto w = static_cast<Eigen::Index>(m.components());
    ASSERT_GE(w, 1);
    EXPECT_LT(static_cast<std::size_t>(w), stack.k_plus());
    for (Eigen::Index k = 0; k < w; ++k) EXPECT_NEAR(m.eigenvalues[k], ref.values[static_cast<std::size_t>(k)], 1e-8 * scale);

    const Eigen::MatrixXd gram = m.eigenvectors.transpose() * m.eigenvectors;
    EXPECT_LT((gram - Eigen::MatrixXd::Identity(w, w)).cwiseAbs().maxCoeff(), 1e-8);

    // Full prefactor formula vs the simplified projection for unit eigenvectors.
    const Eigen::MatrixXd simple = stack.matrix * m.eigenvectors;
    EXPECT_LT((m.mscores - simple).cwiseAbs().maxCoeff(), 1e-10 * std::max(1.0, simple.cwiseAbs().maxCoeff()));

    const Eigen::MatrixXd cov = m.mscores.transpose() * m.mscores / (n - 1.0);
    for (Eigen::Index a = 0; a < w; ++a) {
        EXPECT_NEAR(cov(a, a), m.eigenvalues[a], 1e-8 * scale);
        for (Eigen::Index b = 0; b < w; ++b) {
            if (a != b) EXPECT_LT(std::abs(cov(a, b)), 1e-8 * cov.diagonal().maxCoeff());
        }
        if (a > 0) {
            EXPECT_GT(m.pve[a], m.pve[a - 1]);
        }
    }
    EXPECT_GE(m.pve[w - 1], 0.95 - 1e-12);
    if (w > 1) EXPECT_LT(m.pve[w - 2], 0.95);

    // Projection of the training stack reproduces the fitted scores.
    EXPECT_LT((project_mscores(m, stack.matrix) - m.mscores).cwiseAbs().maxCoeff(), 1e-10 * scale);
}

TEST(Mfpca, CapBelowKPlus) {
    std::mt19937_64 rng(6);
    const auto models = fixed_models(rng, 30, {2, 2});
    const auto stack = stack_scores(pointers(models));
    const auto m = fit_mfpca(stack, {1.0, std::nullopt});
    EXPECT_EQ(m.components(), 3u);
    EXPECT_FALSE(m.warnings.empty());
}

TEST(Mfpca, PermutationEquivariance) {
    std::mt19937_64 rng(7);
    const auto models = fixed_models(rng, 15, {3, 2});
    const auto stack = stack_scores(pointers(models));
    std::vector<int> perm(15);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    ScoreStack permuted = stack;
    for (int i = 0; i < 15; ++i) permuted.matrix.row(i) = stack.matrix.row(perm[static_cast<std::size_t>(i)]);
    const auto a = fit_mfpca(stack, {0.9, std::nullopt});
    const auto b = fit_mfpca(permuted, {0.9, std::nullopt});
    ASSERT_EQ(a.components(), b.components());
    for (int i = 0; i < 15; ++i) {
        for (Eigen::Index k = 0; k < b.mscores.cols(); ++k) {
            EXPECT_NEAR(b.mscores(i, k), a.mscores(perm[static_cast<std::size_t>(i)], k), 1e-8);
        }
    }
}

TEST(Mfpca, FixedComponentCountAndErrors) {
    std::mt19937_64 rng(8);
    const auto models = fixed_models(rng, 20, {3, 3});
    const auto stack = stack_scores(pointers(models));
    const auto m = fit_mfpca(stack, {0.9, std::size_t{4}});
    EXPECT_EQ(m.components(), 4u);
    EXPECT_THROW(fit_mfpca(stack, {0.0, std::nullopt}), ArgumentError);
    EXPECT_THROW(fit_mfpca(raw_stack(Eigen::MatrixXd::Zero(5, 3)), {0.9, std::nullopt}), DegenerateError);
}
