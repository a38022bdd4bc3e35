#pragma once

// HU -> density calibration: per-region radiodensity statistics, the
// five-point least-squares line, the three-slice circular-ROI method, and the
// per-HU comparison of two sites' calibration models.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qct/core.hpp"
#include "qct/stats.hpp"
#include "qct/text.hpp"

namespace qct {

struct histogram {
    long long first_bin = 0;          // HU of counts[0]; bin k covers [first_bin + k, first_bin + k + 1)
    std::vector<std::size_t> counts;
};

struct region_summary {
    std::size_t voxel_count = 0;
    double mean = 0.0;
    double median = 0.0;
    double sd = 0.0; // population
    histogram hist;
};

/// Statistics for labels 1..5 (index label - 1).
struct region_stats {
    std::array<region_summary, 5> regions;
};

enum class statistic { mean, median };

/// Per-label HU statistics; every label 1-5 must be non-empty.
template <typename T>
region_stats region_statistics(const volume<T>& v, const label_map& m)
{
    require_compatible(v.grid(), m.grid(), "region_statistics");
    std::array<std::vector<double>, 5> samples;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const std::uint8_t c = m[i];
        if (c >= 1 && c <= max_label)
            samples[c - 1].push_back(static_cast<double>(v[i]));
    }
    std::string missing;
    for (int c = 0; c < 5; ++c)
        if (samples[c].empty())
            missing += (missing.empty() ? "" : ", ") + std::to_string(c + 1);
    if (!missing.empty())
        throw error(error_kind::calibration, "region vanished: labels " + missing);

    region_stats out;
    for (int c = 0; c < 5; ++c) {
        auto& xs = samples[c];
        auto& r = out.regions[c];
        r.voxel_count = xs.size();
        r.mean = stats::mean(xs);
        r.sd = stats::stddev(xs, 0);
        std::sort(xs.begin(), xs.end());
        r.median = stats::quantile_sorted(xs, 0.5);
        r.hist.first_bin = static_cast<long long>(std::floor(xs.front()));
        const auto last = static_cast<long long>(std::floor(xs.back()));
        r.hist.counts.assign(static_cast<std::size_t>(last - r.hist.first_bin + 1), 0);
        for (const double x : xs)
            ++r.hist.counts[static_cast<std::size_t>(static_cast<long long>(std::floor(x)) - r.hist.first_bin)];
    }
    return out;
}

struct calibration_point {
    double hu = 0.0;
    double density = 0.0;
};

/// density = slope * HU + intercept for one scan.
struct calibration_model {
    double slope = 0.0;
    double intercept = 0.0;
    double r = 0.0;
    std::vector<calibration_point> points;
    std::vector<double> residuals; // density - predicted
    std::string case_id;

    double density_at(double hu) const { return slope * hu + intercept; }
};

/// Ordinary least squares of density on HU over the given points.
inline calibration_model fit_points(std::span<const calibration_point> pts)
{
    if (pts.size() < 2)
        throw error(error_kind::calibration, "degenerate fit: need at least two points");
    const auto n = static_cast<double>(pts.size());
    double mx = 0.0, my = 0.0;
    for (const auto& p : pts) {
        mx += p.hu;
        my += p.density;
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (const auto& p : pts) {
        sxx += (p.hu - mx) * (p.hu - mx);
        sxy += (p.hu - mx) * (p.density - my);
        syy += (p.density - my) * (p.density - my);
    }
    if (sxx <= 0.0)
        throw error(error_kind::calibration, "degenerate fit: HU values are all equal");

    calibration_model m;
    m.slope = sxy / sxx;
    m.intercept = my - m.slope * mx;
    m.r = syy > 0.0 ? std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0) : 0.0;
    m.points.assign(pts.begin(), pts.end());
    for (const auto& p : pts)
        m.residuals.push_back(p.density - m.density_at(p.hu));
    return m;
}

inline calibration_model fit_calibration(const region_stats& s,
                                         const std::array<double, 5>& densities = phantom_densities,
                                         statistic which = statistic::mean)
{
    std::array<calibration_point, 5> pts;
    for (int c = 0; c < 5; ++c) {
        if (s.regions[c].voxel_count == 0)
            throw error(error_kind::calibration, "region vanished: label " + std::to_string(c + 1));
        pts[c] = {which == statistic::mean ? s.regions[c].mean : s.regions[c].median, densities[c]};
    }
    return fit_points(pts);
}

// ---------------------------------------------------------------------------
// Manual three-slice ROI method

struct roi_circle {
    double x = 0.0; // world mm
    double y = 0.0;
    double radius = 0.0;
};

/// Circles on three axial slices, one per rod (ascending density).
struct roi_spec {
    std::array<std::size_t, 3> slices{};
    std::array<roi_circle, 4> rods{};

    /// Base-material circle: midway between the first two rods.
    roi_circle base_circle() const
    {
        return {(rods[0].x + rods[1].x) / 2.0, (rods[0].y + rods[1].y) / 2.0, rods[0].radius};
    }
};

namespace detail {

template <typename T>
double circle_mean(const volume<T>& v, std::size_t z, const roi_circle& c)
{
    const image_grid& g = v.grid();
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t y = 0; y < g.dims.y; ++y)
        for (std::size_t x = 0; x < g.dims.x; ++x) {
            const vec3 w = g.world(x, y, z);
            if ((w.x - c.x) * (w.x - c.x) + (w.y - c.y) * (w.y - c.y) <= c.radius * c.radius) {
                sum += static_cast<double>(v.at(x, y, z));
                ++n;
            }
        }
    if (n == 0)
        throw error(error_kind::calibration, "ROI circle on slice " + std::to_string(z) + " covers no voxels");
    return sum / static_cast<double>(n);
}

} // namespace detail

/// Mean HU inside each circle per slice, averaged over the three slices, then fitted.
template <typename T>
calibration_model manual_roi_calibration(const volume<T>& v, const roi_spec& roi,
                                         const std::array<double, 5>& densities = phantom_densities)
{
    const image_grid& g = v.grid();
    for (std::size_t i = 0; i < 3; ++i) {
        if (roi.slices[i] >= g.dims.z)
            throw error(error_kind::calibration, "ROI slice " + std::to_string(roi.slices[i]) + " out of range");
        for (std::size_t j = 0; j < i; ++j)
            if (roi.slices[i] == roi.slices[j])
                throw error(error_kind::invalid_argument, "ROI slices must be distinct");
    }
    for (const auto& c : roi.rods)
        if (!(c.radius > 0.0))
            throw error(error_kind::invalid_argument, "ROI radius must be > 0");

    std::array<roi_circle, 5> circles{roi.base_circle(), roi.rods[0], roi.rods[1], roi.rods[2], roi.rods[3]};
    std::array<calibration_point, 5> pts;
    for (int c = 0; c < 5; ++c) {
        double acc = 0.0;
        for (const std::size_t z : roi.slices)
            acc += detail::circle_mean(v, z, circles[c]);
        pts[c] = {acc / 3.0, densities[c]};
    }
    return fit_points(pts);
}

/// Places the manual ROIs from a label map: three slices spread over the range
/// where all four rods are labeled, circles of `radius_mm` on the rod centroids.
inline roi_spec roi_from_labels(const label_map& m, double radius_mm)
{
    const image_grid& g = m.grid();
    std::vector<std::size_t> candidates;
    for (std::size_t z = 0; z < g.dims.z; ++z) {
        std::array<bool, 4> seen{};
        const std::uint8_t* s = m.data().data() + z * g.slice_size();
        for (std::size_t i = 0; i < g.slice_size(); ++i)
            if (s[i] >= 2 && s[i] <= 5)
                seen[s[i] - 2] = true;
        if (std::all_of(seen.begin(), seen.end(), [](bool b) { return b; }))
            candidates.push_back(z);
    }
    if (candidates.size() < 3)
        throw error(error_kind::calibration, "fewer than three slices show all rods");

    roi_spec roi;
    const std::size_t n = candidates.size();
    roi.slices = {candidates[n / 4], candidates[n / 2], candidates[(3 * n) / 4]};
    if (roi.slices[0] == roi.slices[1] || roi.slices[1] == roi.slices[2])
        roi.slices = {candidates[0], candidates[n / 2], candidates[n - 1]};

    for (int r = 0; r < 4; ++r) {
        double sx = 0.0, sy = 0.0;
        std::size_t cnt = 0;
        for (const std::size_t z : roi.slices)
            for (std::size_t y = 0; y < g.dims.y; ++y)
                for (std::size_t x = 0; x < g.dims.x; ++x)
                    if (m.at(x, y, z) == 2 + r) {
                        const vec3 w = g.world(x, y, z);
                        sx += w.x;
                        sy += w.y;
                        ++cnt;
                    }
        roi.rods[r] = {sx / static_cast<double>(cnt), sy / static_cast<double>(cnt), radius_mm};
    }
    return roi;
}

/// density = slope * HU + intercept per voxel, unclamped.
template <typename T>
density_volume apply_calibration(const volume<T>& v, const calibration_model& model)
{
    density_volume out(v.grid(), 0.0f);
    for (std::size_t i = 0; i < v.size(); ++i)
        out[i] = static_cast<float>(model.density_at(static_cast<double>(v[i])));
    return out;
}

// ---------------------------------------------------------------------------
// Cross-site comparison

struct comparison_row {
    int hu = 0;
    stats::quartiles a;
    stats::quartiles b;
    double diff = 0.0; // median_a - median_b
    double p = 1.0;
    double p_adj = 1.0;
    bool significant = false;
};

struct model_comparison {
    int lo = 0;
    int hi = 0;
    double alpha_level = 0.05;
    std::vector<comparison_row> rows;

    const comparison_row& at(int hu) const
    {
        if (hu < lo || hu > hi)
            throw error(error_kind::invalid_argument, "HU outside the comparison range");
        return rows[static_cast<std::size_t>(hu - lo)];
    }

    /// Rows at 0/200/400/600 HU that fall inside the range.
    std::vector<comparison_row> summary_table() const
    {
        std::vector<comparison_row> out;
        for (const int h : {0, 200, 400, 600})
            if (h >= lo && h <= hi)
                out.push_back(at(h));
        return out;
    }

    /// Maximal runs of consecutive significant HU values.
    std::vector<std::pair<int, int>> significant_ranges() const
    {
        std::vector<std::pair<int, int>> out;
        for (const auto& r : rows) {
            if (!r.significant)
                continue;
            if (!out.empty() && out.back().second == r.hu - 1)
                out.back().second = r.hu;
            else
                out.emplace_back(r.hu, r.hu);
        }
        return out;
    }
};

/// Evaluates every case model at each integer HU in [lo, hi] and tests the two
/// sites per HU (Mann-Whitney), with Benjamini-Hochberg across the whole grid.
inline model_comparison compare_models(std::span<const calibration_model> site_a,
                                       std::span<const calibration_model> site_b, int lo, int hi,
                                       double alpha_level = 0.05)
{
    if (lo > hi)
        throw error(error_kind::config, "comparison range needs lo <= hi");
    if (site_a.empty() || site_b.empty())
        throw error(error_kind::config, "each site needs at least one model");

    model_comparison out;
    out.lo = lo;
    out.hi = hi;
    out.alpha_level = alpha_level;
    std::vector<double> ps;
    std::vector<double> da(site_a.size()), db(site_b.size());
    for (int h = lo; h <= hi; ++h) {
        for (std::size_t i = 0; i < site_a.size(); ++i)
            da[i] = site_a[i].density_at(h);
        for (std::size_t i = 0; i < site_b.size(); ++i)
            db[i] = site_b[i].density_at(h);
        comparison_row row;
        row.hu = h;
        row.a = stats::compute_quartiles(da);
        row.b = stats::compute_quartiles(db);
        row.diff = row.a.median - row.b.median;
        row.p = stats::mann_whitney_u(da, db).p_two_sided;
        ps.push_back(row.p);
        out.rows.push_back(row);
    }
    const auto adjusted = stats::bh_adjust(ps);
    for (std::size_t i = 0; i < out.rows.size(); ++i) {
        out.rows[i].p_adj = adjusted[i];
        out.rows[i].significant = adjusted[i] < alpha_level;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Records

inline void write_model(const calibration_model& m, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw error(error_kind::io, "cannot write " + path.string());
    const auto num = text::format_number;
    out << "source_case_id = " << m.case_id << "\n"
        << "slope = " << num(m.slope) << "\n"
        << "intercept = " << num(m.intercept) << "\n"
        << "r = " << num(m.r) << "\n"
        << "points =";
    for (const auto& p : m.points)
        out << " " << num(p.hu) << ":" << num(p.density);
    out << "\nresiduals =";
    for (const double r : m.residuals)
        out << " " << num(r);
    out << "\n";
    if (!out)
        throw error(error_kind::io, "write failed: " + path.string());
}

inline calibration_model read_model(const std::filesystem::path& path)
{
    const auto kv = text::read_key_values(path.string(), error_kind::io);
    const auto number = [&](const char* key) {
        const auto v = text::parse_double(kv.require(key, error_kind::io));
        if (!v)
            throw error(error_kind::io, path.string() + ": bad number for " + key);
        return *v;
    };
    calibration_model m;
    if (const auto* id = kv.find("source_case_id"))
        m.case_id = *id;
    m.slope = number("slope");
    m.intercept = number("intercept");
    m.r = number("r");
    if (const auto* pts = kv.find("points"))
        for (const auto& tok : text::split_ws(*pts)) {
            const auto parts = text::split(tok, ':');
            const auto hu = parts.size() == 2 ? text::parse_double(parts[0]) : std::nullopt;
            const auto d = parts.size() == 2 ? text::parse_double(parts[1]) : std::nullopt;
            if (!hu || !d)
                throw error(error_kind::io, path.string() + ": bad point '" + tok + "'");
            m.points.push_back({*hu, *d});
        }
    if (const auto* res = kv.find("residuals"))
        for (const auto& tok : text::split_ws(*res)) {
            const auto v = text::parse_double(tok);
            if (!v)
                throw error(error_kind::io, path.string() + ": bad residual '" + tok + "'");
            m.residuals.push_back(*v);
        }
    return m;
}

inline void write_comparison_csv(const model_comparison& c, std::ostream& out)
{
    const auto num = text::format_number;
    out << "hu,median_a,iqr_a_lo,iqr_a_hi,median_b,iqr_b_lo,iqr_b_hi,diff,p,p_adj,significant\n";
    for (const auto& r : c.rows)
        out << r.hu << ',' << num(r.a.median) << ',' << num(r.a.q25) << ',' << num(r.a.q75) << ','
            << num(r.b.median) << ',' << num(r.b.q25) << ',' << num(r.b.q75) << ',' << num(r.diff) << ','
            << num(r.p) << ',' << num(r.p_adj) << ',' << (r.significant ? 1 : 0) << '\n';
}

} // namespace qct
