#include "emospace/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

namespace emospace::stats {

double mean(std::span<const double> x) noexcept {
    if (x.empty()) return 0.0;
    double s = 0.0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
}

double stddev(std::span<const double> x) noexcept {
    if (x.size() < 2) return 0.0;
    const double m = mean(x);
    double ss = 0.0;
    for (double v : x) ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

double quantile(std::vector<double> values, double q) {
    if (values.empty()) fail(ErrorCode::InsufficientData, "quantile of an empty sample");
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * std::clamp(q, 0.0, 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

double normal_cdf(double z) noexcept { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double student_t_sf(double t, double df) {
    const boost::math::students_t dist(df);
    return boost::math::cdf(boost::math::complement(dist, t));
}

namespace {

struct Moments {
    double sxx = 0.0;
    double syy = 0.0;
    double sxy = 0.0;
};

Moments centered_moments(std::span<const double> x, std::span<const double> y) noexcept {
    const double mx = mean(x);
    const double my = mean(y);
    Moments m;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        m.sxx += dx * dx;
        m.syy += dy * dy;
        m.sxy += dx * dy;
    }
    return m;
}

}  // namespace

double pearson_r(std::span<const double> x, std::span<const double> y) noexcept {
    if (x.size() != y.size() || x.size() < 2) return 0.0;
    const Moments m = centered_moments(x, y);
    if (m.sxx <= 0.0 || m.syy <= 0.0) return 0.0;
    return std::clamp(m.sxy / std::sqrt(m.sxx * m.syy), -1.0, 1.0);
}

Correlation pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) fail(ErrorCode::Shape, "pearson: samples differ in length");
    if (x.size() < 3) fail(ErrorCode::InsufficientData, "pearson requires n >= 3");
    const Moments m = centered_moments(x, y);
    if (m.sxx <= 0.0 || m.syy <= 0.0) fail(ErrorCode::Degenerate, "pearson: constant input");
    Correlation c;
    c.n = x.size();
    c.r = std::clamp(m.sxy / std::sqrt(m.sxx * m.syy), -1.0, 1.0);
    const double df = static_cast<double>(c.n) - 2.0;
    const double one_minus = 1.0 - c.r * c.r;
    if (one_minus <= 0.0) {
        c.p = 0.0;
    } else {
        const double t = std::abs(c.r) * std::sqrt(df / one_minus);
        c.p = std::min(1.0, 2.0 * student_t_sf(t, df));
    }
    return c;
}

std::vector<double> midranks(std::span<const double> values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
        const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
        i = j + 1;
    }
    return ranks;
}

namespace {

constexpr std::size_t kExactLimit = 10;

/// Exact p-value by enumerating every split of the pooled midranks. Midranks are
/// multiples of 1/2, so doubled ranks are integers and the DP runs over integer sums.
double exact_rank_sum_p(const std::vector<double>& ranks, std::size_t n1, double observed, Alternative alt) {
    std::vector<int> doubled(ranks.size());
    int total = 0;
    for (std::size_t i = 0; i < ranks.size(); ++i) {
        doubled[i] = static_cast<int>(std::lround(2.0 * ranks[i]));
        total += doubled[i];
    }
    // ways[j][s]: number of j-subsets with doubled rank sum s.
    std::vector<std::vector<double>> ways(n1 + 1, std::vector<double>(static_cast<std::size_t>(total) + 1, 0.0));
    ways[0][0] = 1.0;
    for (int r : doubled) {
        for (std::size_t j = n1; j >= 1; --j) {
            auto& dst = ways[j];
            const auto& src = ways[j - 1];
            for (int s = total; s >= r; --s) dst[static_cast<std::size_t>(s)] += src[static_cast<std::size_t>(s - r)];
        }
    }
    const auto obs = static_cast<long>(std::lround(2.0 * observed));
    const long centre2 = static_cast<long>(n1) * static_cast<long>(ranks.size() + 1);  // 2 * mean
    double hits = 0.0;
    double all = 0.0;
    for (long s = 0; s <= total; ++s) {
        const double w = ways[n1][static_cast<std::size_t>(s)];
        if (w == 0.0) continue;
        all += w;
        bool extreme = false;
        switch (alt) {
            case Alternative::Less: extreme = s <= obs; break;
            case Alternative::Greater: extreme = s >= obs; break;
            case Alternative::TwoSided: extreme = std::labs(s - centre2) >= std::labs(obs - centre2); break;
        }
        if (extreme) hits += w;
    }
    return std::min(1.0, hits / all);
}

}  // namespace

RankSumResult wilcoxon_rank_sum(std::span<const double> a, std::span<const double> b, Alternative alternative) {
    if (a.empty() || b.empty()) fail(ErrorCode::InsufficientData, "rank-sum test requires non-empty samples");
    std::vector<double> pooled(a.begin(), a.end());
    pooled.insert(pooled.end(), b.begin(), b.end());
    const std::vector<double> ranks = midranks(pooled);
    const std::size_t n1 = a.size();
    const std::size_t n2 = b.size();
    const double n = static_cast<double>(n1 + n2);

    RankSumResult res;
    for (std::size_t i = 0; i < n1; ++i) res.rank_sum += ranks[i];
    res.u = res.rank_sum - static_cast<double>(n1) * (static_cast<double>(n1) + 1.0) / 2.0;

    if (n1 <= kExactLimit && n2 <= kExactLimit) {
        res.exact = true;
        res.p = exact_rank_sum_p(ranks, n1, res.rank_sum, alternative);
        return res;
    }

    std::vector<double> sorted = pooled;
    std::sort(sorted.begin(), sorted.end());
    double tie_term = 0.0;
    for (std::size_t i = 0; i < sorted.size();) {
        std::size_t j = i;
        while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
        const double t = static_cast<double>(j - i);
        tie_term += t * t * t - t;
        i = j;
    }
    const double mu = static_cast<double>(n1) * (n + 1.0) / 2.0;
    const double var = static_cast<double>(n1) * static_cast<double>(n2) / 12.0 *
                       ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if (var <= 0.0) {
        res.p = 1.0;
        return res;
    }
    const double sd = std::sqrt(var);
    const double diff = res.rank_sum - mu;
    switch (alternative) {
        case Alternative::TwoSided: {
            const double z = std::max(std::abs(diff) - 0.5, 0.0) / sd;
            res.p = std::min(1.0, 2.0 * normal_cdf(-z));
            break;
        }
        case Alternative::Less: res.p = normal_cdf((diff + 0.5) / sd); break;
        case Alternative::Greater: res.p = normal_cdf((0.5 - diff) / sd); break;
    }
    return res;
}

double bonferroni(double p, std::size_t m) {
    if (m < 1) fail(ErrorCode::InvalidArgument, "Bonferroni requires m >= 1");
    return std::min(1.0, static_cast<double>(m) * p);
}

std::vector<double> bonferroni(std::span<const double> pvalues, std::size_t m) {
    if (m < 1) fail(ErrorCode::InvalidArgument, "Bonferroni requires m >= 1");
    if (m < pvalues.size()) fail(ErrorCode::InvalidArgument, "Bonferroni m is smaller than the number of tests");
    std::vector<double> out;
    out.reserve(pvalues.size());
    for (double p : pvalues) out.push_back(bonferroni(p, m));
    return out;
}

bool at_least_as_extreme(double candidate, double observed, Tail tail) noexcept {
    // Relative slack so that numerically identical statistics count as ties.
    const auto slack = [](double v) { return 1e-12 * std::max(1.0, std::abs(v)); };
    switch (tail) {
        case Tail::Greater: return candidate >= observed - slack(observed);
        case Tail::Less: return candidate <= observed + slack(observed);
        case Tail::TwoSided: return std::abs(candidate) >= std::abs(observed) - slack(observed);
    }
    return false;
}

PermutationResult summarize_permutations(double observed, std::vector<double> null_values,
                                         const PermutationOptions& options) {
    PermutationResult res;
    res.observed = observed;
    res.n_perm = null_values.size();
    res.seed = options.seed;
    res.null_mean = mean(null_values);
    res.null_sd = stddev(null_values);
    for (double v : null_values) {
        if (at_least_as_extreme(v, observed, options.tail)) ++res.extreme_count;
    }
    res.p = (static_cast<double>(res.extreme_count) + 1.0) / (static_cast<double>(res.n_perm) + 1.0);
    if (options.keep_null) res.null_values = std::move(null_values);
    return res;
}

double PermutationResult::null_quantile(double q) const {
    if (null_values.empty()) fail(ErrorCode::InsufficientData, "null distribution was not retained");
    return quantile(null_values, q);
}

}  // namespace emospace::stats
