#pragma once

#include <span>
#include <string>
#include <vector>

namespace gaitdex::stats {

struct RankTestResult {
    double statistic = 0.0;
    double p_value = 1.0;
    std::string method;
};

/// Mid-ranks (1-based), ties receive the average of the ranks they span.
std::vector<double> ranks(std::span<const double> values);

/// Kendall tau-b. O(n log n) (Knight's merge-sort algorithm).
/// Throws DegenerateError when either argument is entirely tied.
double kendall_tau(std::span<const double> x, std::span<const double> y);

enum class Alternative { two_sided, less, greater };

enum class WilcoxonMethod {
    automatic,  ///< exact for combined n <= 20 without ties, otherwise normal
    exact,
    normal,
};

/// Wilcoxon rank-sum (Mann-Whitney) test of `a` against `b`.
/// The statistic is W = (rank sum of a) - n_a (n_a + 1) / 2. `less` tests
/// whether a tends to be smaller than b.
RankTestResult wilcoxon_rank_sum(std::span<const double> a, std::span<const double> b, bool continuity = true,
                                 Alternative alternative = Alternative::two_sided,
                                 WilcoxonMethod method = WilcoxonMethod::automatic);

/// Kruskal-Wallis H with tie correction; chi-squared p-value on groups-1 df.
RankTestResult kruskal_wallis(const std::vector<std::vector<double>>& groups);

struct LinearTrend {
    double slope = 0.0;
    double intercept = 0.0;
    double standard_error = 0.0;
    double p_value = 1.0;  ///< two-sided t-test of slope = 0, n-2 df
};

LinearTrend linear_trend(std::span<const double> x, std::span<const double> y);

/// (x - min) / (max - min) over the whole vector.
std::vector<double> minmax_rescale(std::span<const double> values);

double mean(std::span<const double> values);
/// Sample standard deviation (n - 1 denominator).
double sample_sd(std::span<const double> values);

}  // namespace gaitdex::stats
