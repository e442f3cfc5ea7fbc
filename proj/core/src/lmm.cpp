#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <string>

#include "emospace/stats.hpp"

namespace emospace::stats {

LmmData make_lmm_data(std::span<const double> y, std::span<const double> x, std::span<const std::string> group_keys) {
    if (y.size() != x.size() || y.size() != group_keys.size()) {
        fail(ErrorCode::Shape, "LMM inputs differ in length");
    }
    LmmData data;
    data.y.assign(y.begin(), y.end());
    data.x.assign(x.begin(), x.end());
    std::map<std::string, std::uint32_t, std::less<>> ids;
    data.group.reserve(group_keys.size());
    for (const auto& key : group_keys) {
        const auto [it, inserted] = ids.emplace(key, static_cast<std::uint32_t>(ids.size()));
        data.group.push_back(it->second);
    }
    data.groups = ids.size();
    return data;
}

namespace {

struct GroupSums {
    double n = 0.0;
    double sx = 0.0;
    double sy = 0.0;
    double sxx = 0.0;
    double sxy = 0.0;
    double syy = 0.0;
};

struct Profile {
    double b0 = 0.0;  // on centred data
    double b1 = 0.0;
    double quad = 0.0;  // sum_i r_i' (I - w_i 11') r_i
    double loglik = -std::numeric_limits<double>::infinity();
};

class ProfiledLikelihood {
public:
    ProfiledLikelihood(const LmmData& data) {
        const std::size_t n = data.y.size();
        double mx = 0.0;
        double my = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            mx += data.x[i];
            my += data.y[i];
        }
        mx /= static_cast<double>(n);
        my /= static_cast<double>(n);
        x_mean_ = mx;
        y_mean_ = my;
        sums_.assign(data.groups, GroupSums{});
        for (std::size_t i = 0; i < n; ++i) {
            const double x = data.x[i] - mx;
            const double y = data.y[i] - my;
            auto& g = sums_[data.group[i]];
            g.n += 1.0;
            g.sx += x;
            g.sy += y;
            g.sxx += x * x;
            g.sxy += x * y;
            g.syy += y * y;
        }
        n_ = static_cast<double>(n);
    }

    Profile evaluate(double lambda) const {
        double a00 = 0.0, a01 = 0.0, a11 = 0.0, c0 = 0.0, c1 = 0.0;
        for (const auto& g : sums_) {
            if (g.n == 0.0) continue;
            const double w = lambda / (1.0 + g.n * lambda);
            a00 += g.n - w * g.n * g.n;
            a01 += g.sx - w * g.n * g.sx;
            a11 += g.sxx - w * g.sx * g.sx;
            c0 += g.sy - w * g.n * g.sy;
            c1 += g.sxy - w * g.sx * g.sy;
        }
        const double det = a00 * a11 - a01 * a01;
        if (!(std::abs(det) > 1e-12 * std::max(1.0, std::abs(a00 * a11)))) {
            fail(ErrorCode::Degenerate, "LMM design matrix is singular");
        }
        Profile p;
        p.b0 = (a11 * c0 - a01 * c1) / det;
        p.b1 = (a00 * c1 - a01 * c0) / det;
        double quad = 0.0;
        double logdet = 0.0;
        for (const auto& g : sums_) {
            if (g.n == 0.0) continue;
            const double w = lambda / (1.0 + g.n * lambda);
            const double rr = g.syy - 2.0 * p.b0 * g.sy - 2.0 * p.b1 * g.sxy + p.b0 * p.b0 * g.n +
                              2.0 * p.b0 * p.b1 * g.sx + p.b1 * p.b1 * g.sxx;
            const double s = g.sy - p.b0 * g.n - p.b1 * g.sx;
            quad += rr - w * s * s;
            logdet += std::log1p(g.n * lambda);
        }
        p.quad = quad;
        if (quad > 0.0) {
            const double sigma2 = quad / n_;
            p.loglik = -0.5 * n_ * (std::log(2.0 * std::numbers::pi * sigma2) + 1.0) - 0.5 * logdet;
        }
        return p;
    }

    /// Sign of d loglik / d lambda at lambda = 0 (up to the positive factor n/2).
    double boundary_slope() const {
        const Profile p = evaluate(0.0);
        double s2 = 0.0;
        for (const auto& g : sums_) {
            if (g.n == 0.0) continue;
            const double s = g.sy - p.b0 * g.n - p.b1 * g.sx;
            s2 += s * s;
        }
        return s2 / p.quad - 1.0;
    }

    double x_mean() const noexcept { return x_mean_; }
    double y_mean() const noexcept { return y_mean_; }
    double n() const noexcept { return n_; }

private:
    std::vector<GroupSums> sums_;
    double n_ = 0.0;
    double x_mean_ = 0.0;
    double y_mean_ = 0.0;
};

constexpr double kLogLambdaMin = -12.0;
constexpr double kLogLambdaMax = 8.0;
constexpr double kGridStep = 0.5;
constexpr double kTolerance = 1e-8;

}  // namespace

LmmFit fit_lmm_random_intercept(const LmmData& data) {
    const std::size_t n = data.y.size();
    if (data.x.size() != n || data.group.size() != n) fail(ErrorCode::Shape, "LMM inputs differ in length");
    std::set<std::uint32_t> groups(data.group.begin(), data.group.end());
    if (groups.size() < 2) fail(ErrorCode::InsufficientData, "LMM requires at least 2 groups");
    if (std::set<double>(data.x.begin(), data.x.end()).size() < 2) {
        fail(ErrorCode::Degenerate, "LMM requires at least 2 distinct covariate values");
    }
    for (auto g : data.group) {
        if (g >= data.groups) fail(ErrorCode::Range, "LMM group id out of range");
    }

    const ProfiledLikelihood profile(data);
    const Profile at_zero = profile.evaluate(0.0);
    if (!(at_zero.quad > 0.0)) fail(ErrorCode::Degenerate, "LMM residual variance is zero");

    double best_lambda = 0.0;
    Profile best = at_zero;

    // Coarse grid on log(lambda), then golden-section refinement around the best point.
    double best_t = kLogLambdaMin;
    Profile best_interior;
    for (double t = kLogLambdaMin; t <= kLogLambdaMax + 1e-12; t += kGridStep) {
        const Profile p = profile.evaluate(std::exp(t));
        if (p.loglik > best_interior.loglik) {
            best_interior = p;
            best_t = t;
        }
    }
    double lo = std::max(kLogLambdaMin, best_t - kGridStep);
    double hi = std::min(kLogLambdaMax, best_t + kGridStep);
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double t1 = hi - inv_phi * (hi - lo);
    double t2 = lo + inv_phi * (hi - lo);
    Profile p1 = profile.evaluate(std::exp(t1));
    Profile p2 = profile.evaluate(std::exp(t2));
    double previous = std::max(p1.loglik, p2.loglik);
    for (int iter = 0; iter < 200; ++iter) {
        if (p1.loglik >= p2.loglik) {
            hi = t2;
            t2 = t1;
            p2 = p1;
            t1 = hi - inv_phi * (hi - lo);
            p1 = profile.evaluate(std::exp(t1));
        } else {
            lo = t1;
            t1 = t2;
            p1 = p2;
            t2 = lo + inv_phi * (hi - lo);
            p2 = profile.evaluate(std::exp(t2));
        }
        const double current = std::max(p1.loglik, p2.loglik);
        if (hi - lo < 1e-10 || (iter > 4 && std::abs(current - previous) < kTolerance)) break;
        previous = current;
    }
    const double refined_t = p1.loglik >= p2.loglik ? t1 : t2;
    const Profile refined = p1.loglik >= p2.loglik ? p1 : p2;
    if (refined.loglik > best_interior.loglik) {
        best_interior = refined;
        best_t = refined_t;
    }

    // Stay on the boundary unless the interior optimum is a genuine improvement.
    const bool boundary = profile.boundary_slope() <= 0.0 && best_interior.loglik <= at_zero.loglik + kTolerance;
    if (!boundary && best_interior.loglik > at_zero.loglik) {
        best = best_interior;
        best_lambda = std::exp(best_t);
    }

    LmmFit fit;
    fit.slope = best.b1;
    fit.intercept = best.b0 + profile.y_mean() - best.b1 * profile.x_mean();
    fit.sigma_e2 = best.quad / profile.n();
    fit.variance_ratio = best_lambda;
    fit.sigma_u2 = best_lambda * fit.sigma_e2;
    fit.log_likelihood = best.loglik;
    fit.groups = groups.size();
    fit.observations = n;
    fit.boundary = best_lambda == 0.0;
    return fit;
}

}  // namespace emospace::stats
