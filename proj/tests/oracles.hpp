#pragma once

// Straightforward reference implementations used to check the optimized code.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "qct/core.hpp"

namespace oracle {

using qct::label_map;

/// Erosion straight from the set definition: keep a voxel iff all offsets with
/// dx^2 + dy^2 <= r^2 stay inside the slice and carry the same label.
inline label_map erode(const label_map& m, int r)
{
    const auto& g = m.grid();
    label_map out(g, 0);
    const auto nx = static_cast<long>(g.dims.x), ny = static_cast<long>(g.dims.y);
    for (std::size_t z = 0; z < g.dims.z; ++z)
        for (long y = 0; y < ny; ++y)
            for (long x = 0; x < nx; ++x) {
                const std::uint8_t c = m.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y), z);
                if (c == 0)
                    continue;
                bool keep = true;
                for (long dy = -r; dy <= r && keep; ++dy)
                    for (long dx = -r; dx <= r && keep; ++dx) {
                        if (dx * dx + dy * dy > static_cast<long>(r) * r)
                            continue;
                        const long xx = x + dx, yy = y + dy;
                        if (xx < 0 || yy < 0 || xx >= nx || yy >= ny ||
                            m.at(static_cast<std::size_t>(xx), static_cast<std::size_t>(yy), z) != c)
                            keep = false;
                    }
                if (keep)
                    out.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y), z) = c;
            }
    return out;
}

inline double dice(const label_map& a, const label_map& b)
{
    long inter = 0, sa = 0, sb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sa += a[i] != 0;
        sb += b[i] != 0;
        inter += a[i] != 0 && b[i] != 0;
    }
    if (sa + sb == 0)
        return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(sa + sb);
}

struct point {
    double x, y, z;
};

inline std::vector<point> surface(const label_map& m, const qct::vec3& sp)
{
    const auto& g = m.grid();
    const auto inside = [&](long x, long y, long z) {
        if (x < 0 || y < 0 || z < 0 || x >= static_cast<long>(g.dims.x) || y >= static_cast<long>(g.dims.y) ||
            z >= static_cast<long>(g.dims.z))
            return false;
        return m.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y), static_cast<std::size_t>(z)) != 0;
    };
    std::vector<point> out;
    for (long z = 0; z < static_cast<long>(g.dims.z); ++z)
        for (long y = 0; y < static_cast<long>(g.dims.y); ++y)
            for (long x = 0; x < static_cast<long>(g.dims.x); ++x) {
                if (!inside(x, y, z))
                    continue;
                if (!inside(x - 1, y, z) || !inside(x + 1, y, z) || !inside(x, y - 1, z) || !inside(x, y + 1, z) ||
                    !inside(x, y, z - 1) || !inside(x, y, z + 1))
                    out.push_back({x * sp.x, y * sp.y, z * sp.z});
            }
    return out;
}

/// Double loop over surface voxels.
inline double asd(const label_map& a, const label_map& b, const qct::vec3& sp)
{
    const auto sa = surface(a, sp), sb = surface(b, sp);
    const auto nearest = [](const point& p, const std::vector<point>& to) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& q : to)
            best = std::min(best, std::sqrt((p.x - q.x) * (p.x - q.x) + (p.y - q.y) * (p.y - q.y) +
                                            (p.z - q.z) * (p.z - q.z)));
        return best;
    };
    double total = 0.0;
    for (const auto& p : sa)
        total += nearest(p, sb);
    for (const auto& q : sb)
        total += nearest(q, sa);
    return total / static_cast<double>(sa.size() + sb.size());
}

/// Two-sided exact Mann-Whitney p for sample x of size n1 among ranks 1..n1+n2,
/// by listing every subset of ranks that x could have occupied.
inline double mann_whitney_p(const std::vector<int>& x_ranks, int n1, int n2)
{
    const int n = n1 + n2;
    const auto u_of = [&](const std::vector<int>& ranks) {
        int s = 0;
        for (const int r : ranks)
            s += r;
        return s - n1 * (n1 + 1) / 2;
    };
    const int u_obs = u_of(x_ranks);
    long lower = 0, upper = 0, total = 0;
    std::vector<bool> pick(static_cast<std::size_t>(n), false);
    std::fill(pick.begin(), pick.begin() + n1, true);
    do {
        std::vector<int> ranks;
        for (int i = 0; i < n; ++i)
            if (pick[static_cast<std::size_t>(i)])
                ranks.push_back(i + 1);
        const int u = u_of(ranks);
        lower += u <= u_obs;
        upper += u >= u_obs;
        ++total;
    } while (std::prev_permutation(pick.begin(), pick.end()));
    return std::min(1.0, 2.0 * static_cast<double>(std::min(lower, upper)) / static_cast<double>(total));
}

/// Two-sided exact signed-rank p for the given ranks and signs by listing all
/// 2^n sign patterns.
inline double wilcoxon_p(const std::vector<double>& ranks, const std::vector<bool>& positive)
{
    const std::size_t n = ranks.size();
    double w_plus = 0.0, total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        total += ranks[i];
        if (positive[i])
            w_plus += ranks[i];
    }
    const double w = std::min(w_plus, total - w_plus);
    long hits = 0;
    const long patterns = 1L << n;
    for (long mask = 0; mask < patterns; ++mask) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            if (mask & (1L << i))
                s += ranks[i];
        hits += s <= w + 1e-9;
    }
    return std::min(1.0, 2.0 * static_cast<double>(hits) / static_cast<double>(patterns));
}

/// Step-up adjustment read literally: p_(i) -> min(1, min_{j>=i} m p_(j) / j).
inline std::vector<double> bh(const std::vector<double>& ps)
{
    const std::size_t m = ps.size();
    std::vector<std::size_t> idx(m);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return ps[a] < ps[b]; });
    std::vector<double> out(m);
    for (std::size_t i = 0; i < m; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = i; j < m; ++j)
            best = std::min(best, static_cast<double>(m) * ps[idx[j]] / static_cast<double>(j + 1));
        out[idx[i]] = std::min(1.0, best);
    }
    return out;
}

/// W for n = 3: (a1 (x(3) - x(1)))^2 / sum (x - mean)^2 with a1 = sqrt(1/2).
inline double shapiro_w3(std::vector<double> x)
{
    std::sort(x.begin(), x.end());
    const double mean = (x[0] + x[1] + x[2]) / 3.0;
    double ss = 0.0;
    for (const double v : x)
        ss += (v - mean) * (v - mean);
    const double a1 = std::sqrt(0.5);
    return (a1 * (x[2] - x[0])) * (a1 * (x[2] - x[0])) / ss;
}

/// Line through points by the textbook closed form with long double sums.
struct line {
    double slope, intercept, r;
};

inline line least_squares(const std::vector<double>& x, const std::vector<double>& y)
{
    const auto n = static_cast<long double>(x.size());
    long double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += static_cast<long double>(x[i]) * x[i];
        sxy += static_cast<long double>(x[i]) * y[i];
        syy += static_cast<long double>(y[i]) * y[i];
    }
    const long double den = n * sxx - sx * sx;
    const long double slope = (n * sxy - sx * sy) / den;
    const long double intercept = (sy - slope * sx) / n;
    const long double r = (n * sxy - sx * sy) / std::sqrt(den * (n * syy - sy * sy));
    return {static_cast<double>(slope), static_cast<double>(intercept), static_cast<double>(r)};
}

inline label_map random_labels(const qct::image_grid& g, std::mt19937_64& gen, double fill, int max_code)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> code(1, max_code);
    label_map m(g, 0);
    for (auto& v : m.data())
        v = u(gen) < fill ? static_cast<std::uint8_t>(code(gen)) : 0;
    return m;
}

/// Random blobby mask: union of a few boxes, so surfaces are non-trivial.
inline label_map random_blobs(const qct::image_grid& g, std::mt19937_64& gen, int boxes)
{
    label_map m(g, 0);
    std::uniform_int_distribution<int> pos(0, static_cast<int>(g.dims.x) - 1);
    std::uniform_int_distribution<int> ext(1, static_cast<int>(g.dims.x) / 2);
    for (int b = 0; b < boxes; ++b) {
        const int x0 = pos(gen), y0 = pos(gen), z0 = pos(gen);
        const int ex = ext(gen), ey = ext(gen), ez = ext(gen);
        for (int z = z0; z < std::min<int>(z0 + ez, static_cast<int>(g.dims.z)); ++z)
            for (int y = y0; y < std::min<int>(y0 + ey, static_cast<int>(g.dims.y)); ++y)
                for (int x = x0; x < std::min<int>(x0 + ex, static_cast<int>(g.dims.x)); ++x)
                    m.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y), static_cast<std::size_t>(z)) = 1;
    }
    return m;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name)
{
    const auto dir = std::filesystem::temp_directory_path() / ("qct_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace oracle
