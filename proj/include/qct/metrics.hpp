#pragma once

// Segmentation accuracy: Dice, average symmetric surface distance, absolute
// region-mean HU difference, the stratified k-fold splitter, and median (IQR)
// aggregation of per-case reports.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "qct/core.hpp"
#include "qct/morphology.hpp"
#include "qct/rng.hpp"
#include "qct/stats.hpp"
#include "qct/text.hpp"

namespace qct::metrics {

/// 2|A n B| / (|A| + |B|) over nonzero voxels; 1 when both are empty.
inline double dice(const label_map& a, const label_map& b)
{
    require_compatible(a.grid(), b.grid(), "dice");
    std::size_t na = 0, nb = 0, both = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const bool in_a = a[i] != 0, in_b = b[i] != 0;
        na += in_a;
        nb += in_b;
        both += in_a && in_b;
    }
    if (na + nb == 0)
        return 1.0;
    return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

/// Mask voxels with at least one of the 6 face neighbours outside the mask or the grid.
inline std::vector<std::size_t> surface_voxels(const label_map& m)
{
    const image_grid& g = m.grid();
    std::vector<std::size_t> out;
    for (std::size_t z = 0; z < g.dims.z; ++z)
        for (std::size_t y = 0; y < g.dims.y; ++y)
            for (std::size_t x = 0; x < g.dims.x; ++x) {
                if (!m.at(x, y, z))
                    continue;
                const bool border = x == 0 || y == 0 || z == 0 || x + 1 == g.dims.x ||
                                    y + 1 == g.dims.y || z + 1 == g.dims.z;
                if (border || !m.at(x - 1, y, z) || !m.at(x + 1, y, z) || !m.at(x, y - 1, z) ||
                    !m.at(x, y + 1, z) || !m.at(x, y, z - 1) || !m.at(x, y, z + 1))
                    out.push_back(g.index(x, y, z));
            }
    return out;
}

namespace detail {

inline constexpr double inf = std::numeric_limits<double>::infinity();

/// Lower envelope of parabolas along one line (Felzenszwalb-Huttenlocher),
/// positions scaled by `spacing`. Infinite entries are not sites.
inline void edt_line(std::vector<double>& f, std::size_t start, std::size_t stride, std::size_t n,
                     double spacing, std::vector<std::size_t>& v, std::vector<double>& zb,
                     std::vector<double>& out)
{
    const auto val = [&](std::size_t q) { return f[start + q * stride]; };
    const auto pos = [&](std::size_t q) { return static_cast<double>(q) * spacing; };
    const auto meet = [&](std::size_t q, std::size_t p) {
        return ((val(q) + pos(q) * pos(q)) - (val(p) + pos(p) * pos(p))) / (2.0 * (pos(q) - pos(p)));
    };

    std::ptrdiff_t k = -1;
    for (std::size_t q = 0; q < n; ++q) {
        if (val(q) == inf)
            continue;
        if (k < 0) {
            k = 0;
            v[0] = q;
            zb[0] = -inf;
            zb[1] = inf;
            continue;
        }
        double s = meet(q, v[static_cast<std::size_t>(k)]);
        while (s <= zb[static_cast<std::size_t>(k)]) {
            --k;
            s = meet(q, v[static_cast<std::size_t>(k)]);
        }
        ++k;
        v[static_cast<std::size_t>(k)] = q;
        zb[static_cast<std::size_t>(k)] = s;
        zb[static_cast<std::size_t>(k) + 1] = inf;
    }
    if (k < 0)
        return; // no sites on this line: stays infinite
    std::size_t j = 0;
    for (std::size_t q = 0; q < n; ++q) {
        while (zb[j + 1] < pos(q))
            ++j;
        const double d = pos(q) - pos(v[j]);
        out[q] = d * d + val(v[j]);
    }
    for (std::size_t q = 0; q < n; ++q)
        f[start + q * stride] = out[q];
}

/// Exact squared Euclidean distance (mm^2) to the nearest site, in place.
inline void squared_edt(std::vector<double>& f, const index3& dims, const vec3& spacing)
{
    const std::size_t n[3] = {dims.x, dims.y, dims.z};
    const std::size_t stride[3] = {1, dims.x, dims.x * dims.y};
    const double sp[3] = {spacing.x, spacing.y, spacing.z};
    const std::size_t longest = std::max({dims.x, dims.y, dims.z});
    std::vector<std::size_t> v(longest);
    std::vector<double> zb(longest + 1), out(longest);
    for (int axis = 0; axis < 3; ++axis)
        for (std::size_t start = 0; start < f.size(); ++start)
            if ((start / stride[axis]) % n[axis] == 0)
                edt_line(f, start, stride[axis], n[axis], sp[axis], v, zb, out);
}

/// Sum of distances from each `from` voxel to its nearest `to` voxel, computed on
/// the bounding box of both sets (indices are into `g`).
inline double sum_nearest(const std::vector<std::size_t>& from, const std::vector<std::size_t>& to,
                          const image_grid& g, const vec3& spacing)
{
    index3 lo{g.dims.x, g.dims.y, g.dims.z}, hi{0, 0, 0};
    for (const auto* set : {&from, &to})
        for (const std::size_t i : *set) {
            const index3 c = g.coords(i);
            lo = {std::min(lo.x, c.x), std::min(lo.y, c.y), std::min(lo.z, c.z)};
            hi = {std::max(hi.x, c.x), std::max(hi.y, c.y), std::max(hi.z, c.z)};
        }
    const index3 dims{hi.x - lo.x + 1, hi.y - lo.y + 1, hi.z - lo.z + 1};
    const auto local = [&](std::size_t i) {
        const index3 c = g.coords(i);
        return (c.x - lo.x) + dims.x * ((c.y - lo.y) + dims.y * (c.z - lo.z));
    };
    std::vector<double> f(dims.x * dims.y * dims.z, inf);
    for (const std::size_t i : to)
        f[local(i)] = 0.0;
    squared_edt(f, dims, spacing);
    double sum = 0.0;
    for (const std::size_t i : from)
        sum += std::sqrt(f[local(i)]);
    return sum;
}

} // namespace detail

/// Average symmetric surface distance in mm; both masks must be non-empty.
inline double asd(const label_map& a, const label_map& b, const vec3& spacing)
{
    require_compatible(a.grid(), b.grid(), "asd");
    const auto sa = surface_voxels(a);
    const auto sb = surface_voxels(b);
    if (sa.empty() || sb.empty())
        throw error(error_kind::calibration, "asd: region vanished (empty mask)");
    const double total = detail::sum_nearest(sa, sb, a.grid(), spacing) +
                         detail::sum_nearest(sb, sa, a.grid(), spacing);
    return total / static_cast<double>(sa.size() + sb.size());
}

inline double asd(const label_map& a, const label_map& b) { return asd(a, b, a.grid().spacing); }

/// |mean HU over a's region - mean HU over b's region| for labels 1..5.
template <typename T>
std::array<double, 5> region_hu_abs_diff(const volume<T>& v, const label_map& a, const label_map& b)
{
    require_compatible(v.grid(), a.grid(), "region_hu_abs_diff");
    require_compatible(v.grid(), b.grid(), "region_hu_abs_diff");
    std::array<double, 5> sum_a{}, sum_b{};
    std::array<std::size_t, 5> n_a{}, n_b{};
    for (std::size_t i = 0; i < v.size(); ++i) {
        const auto h = static_cast<double>(v[i]);
        if (a[i] >= 1 && a[i] <= max_label) {
            sum_a[a[i] - 1] += h;
            ++n_a[a[i] - 1];
        }
        if (b[i] >= 1 && b[i] <= max_label) {
            sum_b[b[i] - 1] += h;
            ++n_b[b[i] - 1];
        }
    }
    std::array<double, 5> out{};
    for (int c = 0; c < 5; ++c) {
        if (n_a[c] == 0 || n_b[c] == 0)
            throw error(error_kind::calibration, "region_hu_abs_diff: label " + std::to_string(c + 1) +
                                                     " is empty");
        out[c] = std::abs(sum_a[c] / static_cast<double>(n_a[c]) - sum_b[c] / static_cast<double>(n_b[c]));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Per-case reports

inline constexpr double undefined = std::numeric_limits<double>::quiet_NaN();

struct label_metrics {
    double dice = undefined;
    double asd_mm = undefined;
    double abs_hu_diff = undefined;
};

struct metrics_report {
    std::string case_id;
    std::string site;
    std::array<label_metrics, 5> labels;
    double pooled_dice = undefined;
    double pooled_asd_mm = undefined;
};

/// Dice and ASD on the label maps as given; |dHU| between the regions after
/// eroding both maps by `erosion_radius`. Undefined entries stay NaN.
template <typename T>
metrics_report evaluate_case(const volume<T>& v, const label_map& predicted, const label_map& reference,
                             int erosion_radius, std::string case_id = {}, std::string site = {})
{
    require_compatible(predicted.grid(), reference.grid(), "evaluate");
    require_compatible(v.grid(), reference.grid(), "evaluate");
    metrics_report r;
    r.case_id = std::move(case_id);
    r.site = std::move(site);
    for (std::uint8_t c = 1; c <= max_label; ++c) {
        const auto pa = binary_mask(predicted, c), rb = binary_mask(reference, c);
        auto& m = r.labels[c - 1];
        m.dice = dice(pa, rb);
        if (count_nonzero(pa) > 0 && count_nonzero(rb) > 0)
            m.asd_mm = asd(pa, rb);
    }
    label_map pf(predicted.grid(), 0), rf(reference.grid(), 0);
    for (std::size_t i = 0; i < pf.size(); ++i) {
        pf[i] = predicted[i] != 0;
        rf[i] = reference[i] != 0;
    }
    r.pooled_dice = dice(pf, rf);
    if (count_nonzero(pf) > 0 && count_nonzero(rf) > 0)
        r.pooled_asd_mm = asd(pf, rf);

    const auto pe = erode_labels(predicted, erosion_radius);
    const auto re = erode_labels(reference, erosion_radius);
    std::array<double, 5> sum_p{}, sum_r{};
    std::array<std::size_t, 5> n_p{}, n_r{};
    for (std::size_t i = 0; i < v.size(); ++i) {
        const auto h = static_cast<double>(v[i]);
        if (pe[i]) {
            sum_p[pe[i] - 1] += h;
            ++n_p[pe[i] - 1];
        }
        if (re[i]) {
            sum_r[re[i] - 1] += h;
            ++n_r[re[i] - 1];
        }
    }
    for (int c = 0; c < 5; ++c)
        if (n_p[c] > 0 && n_r[c] > 0)
            r.labels[c].abs_hu_diff = std::abs(sum_p[c] / static_cast<double>(n_p[c]) -
                                               sum_r[c] / static_cast<double>(n_r[c]));
    return r;
}

inline std::string csv_number(double v) { return std::isnan(v) ? "nan" : text::format_number(v); }

/// `case_id,site,label,dice,asd_mm,abs_hu_diff`; label "fg" rows carry pooled foreground values.
inline void write_metrics_csv(const std::vector<metrics_report>& reports, std::ostream& out)
{
    out << "case_id,site,label,dice,asd_mm,abs_hu_diff\n";
    for (const auto& r : reports) {
        for (int c = 0; c < 5; ++c) {
            const auto& m = r.labels[c];
            out << r.case_id << ',' << r.site << ',' << c + 1 << ',' << csv_number(m.dice) << ','
                << csv_number(m.asd_mm) << ',' << csv_number(m.abs_hu_diff) << '\n';
        }
        out << r.case_id << ',' << r.site << ",fg," << csv_number(r.pooled_dice) << ','
            << csv_number(r.pooled_asd_mm) << ",nan\n";
    }
}

// ---------------------------------------------------------------------------
// Aggregation

struct summary_row {
    std::string metric;
    std::string scope;
    double median = 0.0;
    double iqr = 0.0;
    std::size_t n = 0;
};

/// Median and IQR of each metric over all (case, label) observations of `reports`.
/// NaN observations are skipped; metrics with no observations are omitted.
inline std::vector<summary_row> aggregate_report(const std::vector<metrics_report>& reports,
                                                 const std::string& scope)
{
    std::vector<double> dices, asds, hus, pooled;
    for (const auto& r : reports) {
        for (const auto& m : r.labels) {
            if (!std::isnan(m.dice))
                dices.push_back(m.dice);
            if (!std::isnan(m.asd_mm))
                asds.push_back(m.asd_mm);
            if (!std::isnan(m.abs_hu_diff))
                hus.push_back(m.abs_hu_diff);
        }
        if (!std::isnan(r.pooled_dice))
            pooled.push_back(r.pooled_dice);
    }
    std::vector<summary_row> out;
    const auto add = [&](const char* name, const std::vector<double>& xs) {
        if (xs.empty())
            return;
        const auto q = stats::compute_quartiles(xs);
        out.push_back({name, scope, q.median, q.iqr(), xs.size()});
    };
    add("dice", dices);
    add("asd_mm", asds);
    add("abs_hu_diff", hus);
    add("dice_fg", pooled);
    return out;
}

/// Overall summary followed by one block per site (sites in first-seen order).
inline std::vector<summary_row> aggregate_by_site(const std::vector<metrics_report>& reports)
{
    auto out = aggregate_report(reports, "overall");
    std::vector<std::string> sites;
    for (const auto& r : reports)
        if (std::find(sites.begin(), sites.end(), r.site) == sites.end())
            sites.push_back(r.site);
    for (const auto& s : sites) {
        std::vector<metrics_report> subset;
        std::copy_if(reports.begin(), reports.end(), std::back_inserter(subset),
                     [&](const metrics_report& r) { return r.site == s; });
        const auto rows = aggregate_report(subset, "site:" + s);
        out.insert(out.end(), rows.begin(), rows.end());
    }
    return out;
}

inline void write_summary_csv(const std::vector<summary_row>& rows, std::ostream& out)
{
    out << "metric,scope,median,iqr\n";
    for (const auto& r : rows)
        out << r.metric << ',' << r.scope << ',' << text::format_number(r.median) << ','
            << text::format_number(r.iqr) << '\n';
}

// ---------------------------------------------------------------------------
// Cross-validation

struct site_cases {
    std::string site;
    std::vector<std::string> case_ids;
};

struct fold_member {
    std::string case_id;
    std::string site;

    friend bool operator==(const fold_member&, const fold_member&) = default;
};

struct fold {
    std::vector<fold_member> training;
    std::vector<fold_member> validation;
};

struct fold_plan {
    std::size_t k = 0;
    std::vector<fold> folds;
};

/// Seeded per-site shuffle; fold f validates the f-th shard of every site and
/// trains on everything else.
inline fold_plan crossval_split(const std::vector<site_cases>& sites, std::size_t k, std::uint64_t seed)
{
    if (k < 2)
        throw error(error_kind::config, "cross-validation needs at least 2 folds");
    for (const auto& s : sites)
        if (s.case_ids.size() % k != 0)
            throw error(error_kind::config, "site " + s.site + " has " + std::to_string(s.case_ids.size()) +
                                                " cases, not divisible by " + std::to_string(k));
    fold_plan plan;
    plan.k = k;
    plan.folds.resize(k);
    for (const auto& s : sites) {
        std::vector<std::string> ids = s.case_ids;
        rng r(derive_seed(seed, "site:" + s.site));
        r.shuffle(ids);
        const std::size_t shard = ids.size() / k;
        for (std::size_t f = 0; f < k; ++f)
            for (std::size_t i = 0; i < ids.size(); ++i) {
                const fold_member m{ids[i], s.site};
                if (i / shard == f)
                    plan.folds[f].validation.push_back(m);
                else
                    plan.folds[f].training.push_back(m);
            }
    }
    return plan;
}

/// One line per membership: `fold<TAB>role<TAB>site<TAB>case_id`, folds numbered from 1.
inline void write_fold_plan(const fold_plan& plan, std::ostream& out)
{
    for (std::size_t f = 0; f < plan.folds.size(); ++f) {
        for (const auto& m : plan.folds[f].training)
            out << f + 1 << "\ttrain\t" << m.site << '\t' << m.case_id << '\n';
        for (const auto& m : plan.folds[f].validation)
            out << f + 1 << "\tvalidate\t" << m.site << '\t' << m.case_id << '\n';
    }
}

} // namespace qct::metrics
