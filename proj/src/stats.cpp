#include "gaitdex/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "gaitdex/errors.hpp"

namespace gaitdex::stats {

namespace {

// Sum over tie groups of t(t-1)/2 for a sorted range, compared with `eq`.
template <typename It, typename Eq>
double tied_pairs(It first, It last, Eq eq) {
    double total = 0.0;
    while (first != last) {
        auto next = first + 1;
        while (next != last && eq(*first, *next)) ++next;
        const auto t = static_cast<double>(next - first);
        total += t * (t - 1.0) / 2.0;
        first = next;
    }
    return total;
}

// Sum of (t^3 - t) over tie groups, for rank-test variance corrections.
double tie_cubes(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    double total = 0.0;
    std::size_t i = 0;
    while (i < values.size()) {
        std::size_t j = i + 1;
        while (j < values.size() && values[j] == values[i]) ++j;
        const auto t = static_cast<double>(j - i);
        total += t * t * t - t;
        i = j;
    }
    return total;
}

bool has_ties(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    return std::adjacent_find(values.begin(), values.end()) != values.end();
}

// Merge sort on y counting inversions (discordant pairs among x-sorted data).
double count_swaps(std::vector<double>& y, std::vector<double>& buffer, std::size_t lo, std::size_t hi) {
    if (hi - lo < 2) return 0.0;
    const std::size_t mid = lo + (hi - lo) / 2;
    double swaps = count_swaps(y, buffer, lo, mid) + count_swaps(y, buffer, mid, hi);
    std::size_t i = lo, j = mid, k = lo;
    while (i < mid && j < hi) {
        if (y[j] < y[i]) {
            swaps += static_cast<double>(mid - i);
            buffer[k++] = y[j++];
        } else {
            buffer[k++] = y[i++];
        }
    }
    while (i < mid) buffer[k++] = y[i++];
    while (j < hi) buffer[k++] = y[j++];
    std::copy(buffer.begin() + static_cast<std::ptrdiff_t>(lo), buffer.begin() + static_cast<std::ptrdiff_t>(hi),
              y.begin() + static_cast<std::ptrdiff_t>(lo));
    return swaps;
}

double normal_cdf(double z) { return boost::math::cdf(boost::math::normal_distribution<double>(), z); }

}  // namespace

std::vector<double> ranks(std::span<const double> values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> out(values.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i + 1;
        while (j < order.size() && values[order[j]] == values[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) out[order[k]] = avg;
        i = j;
    }
    return out;
}

double kendall_tau(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw ArgumentError("kendall_tau: length mismatch");
    if (x.size() < 2) throw ArgumentError("kendall_tau: need at least 2 observations");
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!std::isfinite(x[i]) || !std::isfinite(y[i])) throw ArgumentError("kendall_tau: non-finite value");
    }

    std::vector<std::pair<double, double>> pairs(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) pairs[i] = {x[i], y[i]};
    std::sort(pairs.begin(), pairs.end());

    const auto n = static_cast<double>(x.size());
    const double total = n * (n - 1.0) / 2.0;
    const double x_ties =
        tied_pairs(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) { return a.first == b.first; });
    const double joint_ties = tied_pairs(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) { return a == b; });

    std::vector<double> ys(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) ys[i] = pairs[i].second;
    std::vector<double> buffer(ys.size());
    const double swaps = count_swaps(ys, buffer, 0, ys.size());
    const double y_ties = tied_pairs(ys.begin(), ys.end(), [](double a, double b) { return a == b; });

    if (x_ties == total || y_ties == total) throw DegenerateError("kendall_tau: an argument is entirely tied");
    const double numerator = total - x_ties - y_ties + joint_ties - 2.0 * swaps;
    const double tau = numerator / std::sqrt((total - x_ties) * (total - y_ties));
    return std::clamp(tau, -1.0, 1.0);
}

RankTestResult wilcoxon_rank_sum(std::span<const double> a, std::span<const double> b, bool continuity,
                                 Alternative alternative, WilcoxonMethod method) {
    if (a.empty() || b.empty()) throw ArgumentError("wilcoxon_rank_sum: both groups must be non-empty");
    std::vector<double> pooled(a.begin(), a.end());
    pooled.insert(pooled.end(), b.begin(), b.end());
    for (double v : pooled) {
        if (!std::isfinite(v)) throw ArgumentError("wilcoxon_rank_sum: non-finite value");
    }
    const auto r = ranks(pooled);
    const std::size_t na = a.size();
    const std::size_t nb = b.size();
    const std::size_t n = na + nb;
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < na; ++i) rank_sum += r[i];
    const double u = rank_sum - static_cast<double>(na * (na + 1)) / 2.0;

    const bool ties = has_ties(pooled);
    bool exact = false;
    switch (method) {
        case WilcoxonMethod::automatic: exact = n <= 20 && !ties; break;
        case WilcoxonMethod::exact:
            if (ties) throw ArgumentError("wilcoxon_rank_sum: exact distribution unavailable with ties");
            exact = true;
            break;
        case WilcoxonMethod::normal: exact = false; break;
    }

    RankTestResult result;
    result.statistic = u;
    if (exact) {
        // sums[k][s]: number of size-k subsets of ranks 1..n with rank sum s.
        const std::size_t max_u = na * nb;
        const std::size_t max_sum = n * (n + 1) / 2;
        std::vector<std::vector<double>> sums(na + 1, std::vector<double>(max_sum + 1, 0.0));
        sums[0][0] = 1.0;
        for (std::size_t rank = 1; rank <= n; ++rank) {
            for (std::size_t k = std::min(rank, na); k >= 1; --k) {
                for (std::size_t s = max_sum; s >= rank; --s) sums[k][s] += sums[k - 1][s - rank];
            }
        }
        const std::size_t offset = na * (na + 1) / 2;
        const auto q = static_cast<std::size_t>(std::llround(u));
        double total = 0.0, lower = 0.0, upper = 0.0;
        for (std::size_t s = 0; s <= max_u; ++s) {
            const double c = sums[na][s + offset];
            total += c;
            if (s <= q) lower += c;
            if (s >= q) upper += c;
        }
        lower /= total;
        upper /= total;
        switch (alternative) {
            case Alternative::less: result.p_value = lower; break;
            case Alternative::greater: result.p_value = upper; break;
            case Alternative::two_sided:
                result.p_value = std::min(1.0, 2.0 * (u > static_cast<double>(max_u) / 2.0 ? upper : lower));
                break;
        }
        result.method = "Wilcoxon rank sum exact test";
        return result;
    }

    const double dn = static_cast<double>(n);
    const double dna = static_cast<double>(na);
    const double dnb = static_cast<double>(nb);
    const double z0 = u - dna * dnb / 2.0;
    const double sigma = std::sqrt(dna * dnb / 12.0 * ((dn + 1.0) - tie_cubes(pooled) / (dn * (dn - 1.0))));
    result.method = continuity ? "Wilcoxon rank sum test with continuity correction" : "Wilcoxon rank sum test";
    if (!(sigma > 0.0)) {
        result.p_value = 1.0;
        return result;
    }
    double correction = 0.0;
    if (continuity) {
        switch (alternative) {
            case Alternative::two_sided: correction = z0 > 0.0 ? 0.5 : (z0 < 0.0 ? -0.5 : 0.0); break;
            case Alternative::greater: correction = 0.5; break;
            case Alternative::less: correction = -0.5; break;
        }
    }
    const double z = (z0 - correction) / sigma;
    switch (alternative) {
        case Alternative::less: result.p_value = normal_cdf(z); break;
        case Alternative::greater: result.p_value = normal_cdf(-z); break;
        case Alternative::two_sided: result.p_value = 2.0 * std::min(normal_cdf(z), normal_cdf(-z)); break;
    }
    result.p_value = std::clamp(result.p_value, 0.0, 1.0);
    return result;
}

RankTestResult kruskal_wallis(const std::vector<std::vector<double>>& groups) {
    if (groups.size() < 2) throw ArgumentError("kruskal_wallis: need at least 2 groups");
    std::vector<double> pooled;
    for (const auto& g : groups) {
        if (g.empty()) throw ArgumentError("kruskal_wallis: empty group");
        pooled.insert(pooled.end(), g.begin(), g.end());
    }
    const auto r = ranks(pooled);
    const auto n = static_cast<double>(pooled.size());
    double h = 0.0;
    std::size_t pos = 0;
    for (const auto& g : groups) {
        double sum = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) sum += r[pos + i];
        pos += g.size();
        h += sum * sum / static_cast<double>(g.size());
    }
    h = 12.0 / (n * (n + 1.0)) * h - 3.0 * (n + 1.0);
    const double tie_factor = 1.0 - tie_cubes(pooled) / (n * n * n - n);
    if (!(tie_factor > 0.0)) throw DegenerateError("kruskal_wallis: all observations are tied");
    h = std::max(0.0, h / tie_factor);

    const boost::math::chi_squared_distribution<double> chi2(static_cast<double>(groups.size() - 1));
    RankTestResult result;
    result.statistic = h;
    result.p_value = std::clamp(boost::math::cdf(boost::math::complement(chi2, h)), 0.0, 1.0);
    result.method = "Kruskal-Wallis rank sum test (chi-squared approximation)";
    return result;
}

LinearTrend linear_trend(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw ArgumentError("linear_trend: length mismatch");
    if (x.size() < 3) throw ArgumentError("linear_trend: need at least 3 observations");
    const double mx = mean(x);
    const double my = mean(y);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (!(sxx > 0.0)) throw DegenerateError("linear_trend: x is constant");

    LinearTrend fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double rss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double e = y[i] - fit.intercept - fit.slope * x[i];
        rss += e * e;
    }
    const double df = static_cast<double>(x.size()) - 2.0;
    fit.standard_error = std::sqrt(rss / df / sxx);
    if (fit.standard_error == 0.0) {
        fit.p_value = fit.slope == 0.0 ? 1.0 : 0.0;
        return fit;
    }
    const double t = std::abs(fit.slope / fit.standard_error);
    const boost::math::students_t_distribution<double> dist(df);
    fit.p_value = std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, t)), 0.0, 1.0);
    return fit;
}

std::vector<double> minmax_rescale(std::span<const double> values) {
    if (values.empty()) return {};
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    const double range = *hi - *lo;
    if (!(range > 0.0)) throw DegenerateError("minmax_rescale: all values are equal");
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - *lo) / range;
    return out;
}

double mean(std::span<const double> values) {
    if (values.empty()) throw ArgumentError("mean of an empty sample");
    return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double sample_sd(std::span<const double> values) {
    if (values.size() < 2) throw ArgumentError("sample standard deviation needs at least 2 values");
    const double m = mean(values);
    double ss = 0.0;
    for (double v : values) ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

}  // namespace gaitdex::stats
