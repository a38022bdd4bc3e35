#pragma once

// Nonparametric statistics: Shapiro-Wilk (Royston AS R94), Mann-Whitney U,
// Wilcoxon signed-rank, Benjamini-Hochberg, and the summary formatting rule
// (mean +/- sd when normal, median (IQR) otherwise).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "qct/core.hpp"
#include "qct/text.hpp"

namespace qct::stats {

enum class method { exact, normal_approximation };

struct test_result {
    double statistic = 0.0;
    double p_two_sided = 1.0;
    method how = method::exact;
    std::size_t n1 = 0;
    std::size_t n2 = 0; // 0 for one-sample tests
};

inline double clamp_p(double p) { return std::clamp(p, 0.0, 1.0); }

inline double normal_upper_tail(double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); }

inline double normal_quantile(double p)
{
    return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

inline double mean(std::span<const double> xs)
{
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

/// Standard deviation dividing by (n - ddof).
inline double stddev(std::span<const double> xs, int ddof)
{
    const double m = mean(xs);
    double ss = 0.0;
    for (const double x : xs)
        ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(xs.size() - static_cast<std::size_t>(ddof)));
}

/// Linear interpolation between order statistics: h = (n-1)p on 0-based ranks.
inline double quantile_sorted(std::span<const double> sorted, double p)
{
    if (sorted.empty())
        throw error(error_kind::invalid_argument, "quantile of empty sample");
    const double h = static_cast<double>(sorted.size() - 1) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline double quantile(std::vector<double> xs, double p)
{
    std::sort(xs.begin(), xs.end());
    return quantile_sorted(xs, p);
}

inline double median(std::vector<double> xs) { return quantile(std::move(xs), 0.5); }

struct quartiles {
    double q25 = 0.0;
    double median = 0.0;
    double q75 = 0.0;

    double iqr() const { return q75 - q25; }
};

inline quartiles compute_quartiles(std::vector<double> xs)
{
    std::sort(xs.begin(), xs.end());
    return {quantile_sorted(xs, 0.25), quantile_sorted(xs, 0.5), quantile_sorted(xs, 0.75)};
}

/// Average ranks (1-based) of `xs`; `tie_term` receives sum(t^3 - t) over tie groups.
inline std::vector<double> average_ranks(std::span<const double> xs, double* tie_term = nullptr)
{
    std::vector<std::size_t> order(xs.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
    std::vector<double> ranks(xs.size());
    double ties = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]])
            ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k)
            ranks[order[k]] = r;
        const auto t = static_cast<double>(j - i + 1);
        ties += t * t * t - t;
        i = j + 1;
    }
    if (tie_term)
        *tie_term = ties;
    return ranks;
}

// ---------------------------------------------------------------------------
// Shapiro-Wilk

namespace detail {

inline double poly(std::span<const double> c, double x)
{
    double r = 0.0;
    for (std::size_t i = c.size(); i-- > 0;)
        r = r * x + c[i];
    return r;
}

/// Royston's approximation of the Shapiro-Wilk coefficients (upper half, a[0] largest).
inline std::vector<double> swilk_coefficients(std::size_t n)
{
    const std::size_t half = n / 2;
    std::vector<double> a(half);
    if (n == 3) {
        a[0] = std::sqrt(0.5);
        return a;
    }
    static constexpr double c1[] = {0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056};
    static constexpr double c2[] = {0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633};
    const double an = static_cast<double>(n);
    std::vector<double> m(half);
    double summ2 = 0.0;
    for (std::size_t i = 0; i < half; ++i) {
        m[i] = normal_quantile((static_cast<double>(i + 1) - 0.375) / (an + 0.25));
        summ2 += m[i] * m[i];
    }
    summ2 *= 2.0;
    const double ssumm2 = std::sqrt(summ2);
    const double rsn = 1.0 / std::sqrt(an);
    const double a1 = poly(c1, rsn) - m[0] / ssumm2;

    std::size_t first = 1;
    double fac = 0.0;
    if (n > 5) {
        first = 2;
        const double a2 = -m[1] / ssumm2 + poly(c2, rsn);
        fac = std::sqrt((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1]) /
                        (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2));
        a[1] = a2;
    } else {
        fac = std::sqrt((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1));
    }
    a[0] = a1;
    for (std::size_t i = first; i < half; ++i)
        a[i] = -m[i] / fac;
    return a;
}

inline double swilk_p_value(double w, std::size_t n)
{
    if (n == 3) {
        constexpr double six_over_pi = 1.90985931710274;
        constexpr double asin_sqrt_3_4 = 1.04719755119660;
        return clamp_p(six_over_pi * (std::asin(std::sqrt(std::min(w, 1.0))) - asin_sqrt_3_4));
    }
    if (w >= 1.0)
        return 1.0;
    static constexpr double g[] = {-2.273, 0.459};
    static constexpr double c3[] = {0.544, -0.39978, 0.025054, -6.714e-4};
    static constexpr double c4[] = {1.3822, -0.77857, 0.062767, -0.0020322};
    static constexpr double c5[] = {-1.5861, -0.31082, -0.083751, 0.0038915};
    static constexpr double c6[] = {-0.4803, -0.082676, 0.0030302};
    const double an = static_cast<double>(n);
    double y = std::log(1.0 - w);
    double m = 0.0, s = 1.0;
    if (n <= 11) {
        const double gamma = poly(g, an);
        if (y >= gamma)
            return 1e-99;
        y = -std::log(gamma - y);
        m = poly(c3, an);
        s = std::exp(poly(c4, an));
    } else {
        const double xx = std::log(an);
        m = poly(c5, xx);
        s = std::exp(poly(c6, xx));
    }
    return clamp_p(normal_upper_tail((y - m) / s));
}

} // namespace detail

/// W statistic and p-value, 3 <= n <= 5000.
inline test_result shapiro_wilk(std::span<const double> xs)
{
    const std::size_t n = xs.size();
    if (n < 3 || n > 5000)
        throw error(error_kind::invalid_argument, "shapiro_wilk: n must be in [3, 5000]");
    std::vector<double> x(xs.begin(), xs.end());
    std::sort(x.begin(), x.end());
    if (x.front() == x.back())
        throw error(error_kind::invalid_argument, "shapiro_wilk: zero variance");

    const auto a = detail::swilk_coefficients(n);
    double num = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        num += a[i] * (x[n - 1 - i] - x[i]);
    const double m = mean(x);
    double ss = 0.0;
    for (const double v : x)
        ss += (v - m) * (v - m);
    const double w = std::min(1.0, num * num / ss);
    return {w, detail::swilk_p_value(w, n), method::normal_approximation, n, 0};
}

// ---------------------------------------------------------------------------
// Mann-Whitney U

namespace detail {

/// Number of rank arrangements with each U value, for U in [0, n1*n2].
inline std::vector<double> mann_whitney_counts(std::size_t n1, std::size_t n2)
{
    // counts[a][b][u] built incrementally over a; table indexed [b][u].
    const std::size_t umax = n1 * n2;
    std::vector<std::vector<double>> prev(n2 + 1, std::vector<double>(umax + 1, 0.0));
    for (std::size_t b = 0; b <= n2; ++b)
        prev[b][0] = 1.0; // a = 0: U = 0 only
    for (std::size_t a = 1; a <= n1; ++a) {
        std::vector<std::vector<double>> cur(n2 + 1, std::vector<double>(umax + 1, 0.0));
        cur[0][0] = 1.0;
        for (std::size_t b = 1; b <= n2; ++b)
            for (std::size_t u = 0; u <= a * b; ++u) {
                // largest element belongs to x (adds b to U) or to y
                double c = cur[b - 1][u];
                if (u >= b)
                    c += prev[b][u - b];
                cur[b][u] = c;
            }
        prev = std::move(cur);
    }
    return prev[n2];
}

} // namespace detail

inline constexpr std::size_t exact_limit = 20;

/// U = #{x > y} + 0.5 #{x = y}; two-sided p, exact when n1 + n2 <= 20 without ties.
inline test_result mann_whitney_u(std::span<const double> xs, std::span<const double> ys)
{
    const std::size_t n1 = xs.size(), n2 = ys.size();
    if (n1 == 0 || n2 == 0)
        throw error(error_kind::invalid_argument, "mann_whitney_u: empty sample");

    std::vector<double> pooled(xs.begin(), xs.end());
    pooled.insert(pooled.end(), ys.begin(), ys.end());
    double tie_term = 0.0;
    const auto ranks = average_ranks(pooled, &tie_term);
    double rank_sum_x = 0.0;
    for (std::size_t i = 0; i < n1; ++i)
        rank_sum_x += ranks[i];
    const double dn1 = static_cast<double>(n1), dn2 = static_cast<double>(n2);
    const double u = rank_sum_x - dn1 * (dn1 + 1.0) / 2.0;

    test_result r;
    r.statistic = u;
    r.n1 = n1;
    r.n2 = n2;
    if (n1 + n2 <= exact_limit && tie_term == 0.0) {
        const auto counts = detail::mann_whitney_counts(n1, n2);
        const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
        const auto k = static_cast<std::size_t>(std::llround(u));
        double lower = 0.0, upper = 0.0;
        for (std::size_t i = 0; i < counts.size(); ++i) {
            if (i <= k)
                lower += counts[i];
            if (i >= k)
                upper += counts[i];
        }
        r.how = method::exact;
        r.p_two_sided = clamp_p(2.0 * std::min(lower, upper) / total);
        return r;
    }

    const double n = dn1 + dn2;
    const double mu = dn1 * dn2 / 2.0;
    const double var = dn1 * dn2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    r.how = method::normal_approximation;
    if (var <= 0.0) {
        r.p_two_sided = 1.0;
        return r;
    }
    const double z = std::max(0.0, std::abs(u - mu) - 0.5) / std::sqrt(var);
    r.p_two_sided = clamp_p(2.0 * normal_upper_tail(z));
    return r;
}

// ---------------------------------------------------------------------------
// Wilcoxon signed-rank

/// Paired differences; zeros dropped, W = min(W+, W-); exact for n <= 20.
inline test_result wilcoxon_signed_rank(std::span<const double> differences)
{
    std::vector<double> d;
    for (const double v : differences)
        if (v != 0.0)
            d.push_back(v);
    if (d.empty())
        throw error(error_kind::invalid_argument, "wilcoxon_signed_rank: all differences are zero");

    std::vector<double> mags(d.size());
    std::transform(d.begin(), d.end(), mags.begin(), [](double v) { return std::abs(v); });
    double tie_term = 0.0;
    const auto ranks = average_ranks(mags, &tie_term);
    double w_plus = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i)
        if (d[i] > 0.0)
            w_plus += ranks[i];
    const std::size_t n = d.size();
    const double dn = static_cast<double>(n);
    const double total = dn * (dn + 1.0) / 2.0;
    const double w_minus = total - w_plus;

    test_result r;
    r.statistic = std::min(w_plus, w_minus);
    r.n1 = n;
    if (n <= exact_limit) {
        // Doubled ranks are integers even with average-rank ties.
        const auto max_sum = static_cast<std::size_t>(std::llround(2.0 * total));
        std::vector<double> counts(max_sum + 1, 0.0);
        counts[0] = 1.0;
        std::size_t reach = 0;
        for (const double rank : ranks) {
            const auto step = static_cast<std::size_t>(std::llround(2.0 * rank));
            for (std::size_t s = reach + 1; s-- > 0;)
                if (counts[s] != 0.0)
                    counts[s + step] += counts[s];
            reach += step;
        }
        const auto k = static_cast<std::size_t>(std::llround(2.0 * r.statistic));
        double tail = 0.0;
        for (std::size_t s = 0; s <= k; ++s)
            tail += counts[s];
        r.how = method::exact;
        r.p_two_sided = clamp_p(2.0 * tail / std::ldexp(1.0, static_cast<int>(n)));
        return r;
    }

    const double mu = total / 2.0;
    const double var = dn * (dn + 1.0) * (2.0 * dn + 1.0) / 24.0 - tie_term / 48.0;
    const double z = std::max(0.0, std::abs(w_plus - mu) - 0.5) / std::sqrt(var);
    r.how = method::normal_approximation;
    r.p_two_sided = clamp_p(2.0 * normal_upper_tail(z));
    return r;
}

// ---------------------------------------------------------------------------
// Benjamini-Hochberg

/// Step-up adjusted p-values, returned in input order.
inline std::vector<double> bh_adjust(std::span<const double> ps)
{
    for (const double p : ps)
        if (!(p >= 0.0 && p <= 1.0))
            throw error(error_kind::invalid_argument, "bh_adjust: p-value outside [0, 1]");
    const std::size_t m = ps.size();
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ps[a] < ps[b]; });
    std::vector<double> adjusted(m);
    double running = 1.0;
    for (std::size_t k = m; k-- > 0;) {
        const double candidate = static_cast<double>(m) * ps[order[k]] / static_cast<double>(k + 1);
        running = std::min(running, candidate);
        // m p / k can round below p itself
        adjusted[order[k]] = std::max(ps[order[k]], std::min(1.0, running));
    }
    return adjusted;
}

// ---------------------------------------------------------------------------
// Summary rule

struct summary {
    bool normal = false;
    double center = 0.0; // mean or median
    double spread = 0.0; // sample sd or IQR
    test_result normality;
    std::string text;
};

/// "mean ± sd" when Shapiro-Wilk does not reject at 0.05, otherwise "median (IQR)".
inline summary summarize(std::span<const double> xs, int precision = 3)
{
    if (xs.size() < 3)
        throw error(error_kind::invalid_argument, "summarize: need at least 3 values");
    summary s;
    std::vector<double> v(xs.begin(), xs.end());
    const bool constant = std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
    // A constant sample has no spread to test; report it non-parametrically.
    s.normal = !constant && (s.normality = shapiro_wilk(v)).p_two_sided >= 0.05;
    if (s.normal) {
        s.center = mean(v);
        s.spread = stddev(v, 1);
        s.text = text::format_fixed(s.center, precision) + " ± " +
                 text::format_fixed(s.spread, precision);
    } else {
        const auto q = compute_quartiles(v);
        s.center = q.median;
        s.spread = q.iqr();
        s.text = text::format_fixed(s.center, precision) + " (" +
                 text::format_fixed(s.spread, precision) + ")";
    }
    return s;
}

} // namespace qct::stats
