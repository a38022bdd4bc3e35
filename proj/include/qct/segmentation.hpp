#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <optional>
#include <vector>

#include "qct/core.hpp"
#include "qct/metaimage.hpp"
#include "qct/morphology.hpp"
#include "qct/synth.hpp"

namespace qct {

/// Parameters of the slice-wise geometric phantom detector.
struct detector_params {
    synth::phantom_geometry geometry;
    double base_hu_lo = -30.0;
    double base_hu_hi = 30.0;
    double rod_hu_margin = 30.0;
    double search_region = 0.5;      // fraction of image height, measured from the bottom row
    std::size_t min_component_voxels = 1000;
    double rod_area_tolerance = 0.5; // accepted relative deviation from the nominal disk area

    void validate() const
    {
        if (!(base_hu_lo < base_hu_hi))
            throw error(error_kind::config, "base HU window needs lo < hi");
        if (!(rod_hu_margin > 0.0))
            throw error(error_kind::config, "rod HU margin must be > 0");
        if (!(search_region > 0.0 && search_region <= 1.0))
            throw error(error_kind::config, "search region must be in (0, 1]");
    }
};

/// Rod cross-section found on one slice.
struct rod_detection {
    double cx = 0.0; // centroid, voxel units
    double cy = 0.0;
    std::vector<std::size_t> pixels; // in-slice linear indices
};

struct slice_detection {
    std::vector<std::uint8_t> slab; // filled slab cross-section mask
    std::array<rod_detection, 4> rods;
};

namespace detail {

/// Moves the slab outline to the half-way level between the slab and what
/// surrounds it, within two pixels of the window-based outline.
inline std::vector<std::uint8_t> refine_edge(const std::int16_t* hu, std::vector<std::uint8_t> filled,
                                             double inside, std::size_t nx, std::size_t ny)
{
    const auto near = [&](std::size_t x, std::size_t y) {
        const std::size_t x0 = x >= 2 ? x - 2 : 0, y0 = y >= 2 ? y - 2 : 0;
        for (std::size_t yy = y0; yy <= std::min(ny - 1, y + 2); ++yy)
            for (std::size_t xx = x0; xx <= std::min(nx - 1, x + 2); ++xx)
                if (filled[yy * nx + xx])
                    return true;
        return false;
    };
    std::vector<std::size_t> ring;
    std::vector<double> outside;
    for (std::size_t y = 0; y < ny; ++y)
        for (std::size_t x = 0; x < nx; ++x)
            if (!filled[y * nx + x] && near(x, y)) {
                ring.push_back(y * nx + x);
                outside.push_back(hu[y * nx + x]);
            }
    if (outside.empty())
        return filled;
    std::nth_element(outside.begin(), outside.begin() + outside.size() / 2, outside.end());
    const double level = 0.5 * (inside + outside[outside.size() / 2]);

    std::vector<std::uint8_t> grown = filled;
    for (const std::size_t i : ring)
        if (hu[i] >= level)
            grown[i] = 1;
    // Keep only what is connected to the original outline.
    const auto cc = label_components(grown, nx, ny, true);
    std::vector<std::uint8_t> keep(cc.sizes.size() + 1, 0);
    for (std::size_t i = 0; i < filled.size(); ++i)
        if (filled[i])
            keep[static_cast<std::size_t>(cc.ids[i])] = 1;
    for (std::size_t i = 0; i < grown.size(); ++i)
        grown[i] = grown[i] && keep[static_cast<std::size_t>(cc.ids[i])];
    return fill_holes(grown, nx, ny);
}

/// In-slice pixels of `mask` whose centers lie within `radius` mm of (cx, cy).
inline std::vector<std::size_t> disk_pixels(const std::vector<std::uint8_t>& mask, double cx, double cy,
                                            double radius, const image_grid& g)
{
    const std::size_t nx = g.dims.x, ny = g.dims.y;
    const double rx = radius / g.spacing.x, ry = radius / g.spacing.y;
    const auto lo = [](double v) { return static_cast<std::size_t>(std::max(0.0, std::floor(v))); };
    std::vector<std::size_t> out;
    for (std::size_t y = lo(cy - ry); y < ny && static_cast<double>(y) <= cy + ry; ++y)
        for (std::size_t x = lo(cx - rx); x < nx && static_cast<double>(x) <= cx + rx; ++x) {
            const double dx = (static_cast<double>(x) - cx) * g.spacing.x;
            const double dy = (static_cast<double>(y) - cy) * g.spacing.y;
            if (dx * dx + dy * dy <= radius * radius && mask[y * nx + x])
                out.push_back(y * nx + x);
        }
    return out;
}

/// Steps 1-4 of the detector for a single axial slice.
inline std::optional<slice_detection> detect_slice(const hu_volume& v, std::size_t z,
                                                   const detector_params& p)
{
    const image_grid& g = v.grid();
    const std::size_t nx = g.dims.x, ny = g.dims.y;
    const std::int16_t* hu = v.data().data() + z * g.slice_size();

    const auto first_row = static_cast<std::size_t>(
        std::floor((1.0 - p.search_region) * static_cast<double>(ny)));
    std::vector<std::uint8_t> window(nx * ny, 0);
    for (std::size_t y = first_row; y < ny; ++y)
        for (std::size_t x = 0; x < nx; ++x) {
            const double h = hu[y * nx + x];
            window[y * nx + x] = h >= p.base_hu_lo && h <= p.base_hu_hi;
        }

    const auto cc = label_components(window, nx, ny, true);
    if (cc.count() == 0)
        return std::nullopt;
    const auto largest = static_cast<std::size_t>(
        std::max_element(cc.sizes.begin(), cc.sizes.end()) - cc.sizes.begin());
    if (cc.sizes[largest] < p.min_component_voxels)
        return std::nullopt;
    const auto slab_id = static_cast<std::int32_t>(largest + 1);

    std::vector<std::uint8_t> slab(nx * ny, 0);
    std::vector<double> base_values;
    for (std::size_t i = 0; i < slab.size(); ++i)
        if (cc.ids[i] == slab_id) {
            slab[i] = 1;
            base_values.push_back(hu[i]);
        }
    std::nth_element(base_values.begin(), base_values.begin() + base_values.size() / 2, base_values.end());
    const double slab_median = base_values[base_values.size() / 2];

    // Rods are enclosed by the slab, so only look inside its filled outline.
    auto filled = fill_holes(slab, nx, ny);
    filled = refine_edge(hu, std::move(filled), slab_median, nx, ny);
    std::vector<std::uint8_t> bright(nx * ny, 0);
    for (std::size_t i = 0; i < bright.size(); ++i)
        bright[i] = filled[i] && hu[i] > slab_median + p.rod_hu_margin;
    const auto rods = label_components(bright, nx, ny, true);

    const double nominal_area = std::numbers::pi * p.geometry.rod_radius * p.geometry.rod_radius /
                                (g.spacing.x * g.spacing.y);
    const double reach = p.geometry.rod_radius + std::hypot(g.spacing.x, g.spacing.y);

    std::vector<rod_detection> found(rods.count());
    for (std::size_t i = 0; i < bright.size(); ++i)
        if (rods.ids[i] > 0) {
            auto& r = found[static_cast<std::size_t>(rods.ids[i] - 1)];
            r.pixels.push_back(i);
            r.cx += static_cast<double>(i % nx);
            r.cy += static_cast<double>(i / nx);
        }
    std::vector<rod_detection> accepted;
    for (auto& r : found) {
        const auto n = static_cast<double>(r.pixels.size());
        if (std::abs(n - nominal_area) > p.rod_area_tolerance * nominal_area)
            continue;
        r.cx /= n;
        r.cy /= n;
        // Disk test: every pixel lies within one rod radius (plus a voxel) of the centroid.
        const bool compact = std::all_of(r.pixels.begin(), r.pixels.end(), [&](std::size_t i) {
            const double dx = (static_cast<double>(i % nx) - r.cx) * g.spacing.x;
            const double dy = (static_cast<double>(i / nx) - r.cy) * g.spacing.y;
            return std::hypot(dx, dy) <= reach;
        });
        if (compact)
            accepted.push_back(std::move(r));
    }
    if (accepted.size() != 4)
        return std::nullopt;
    std::sort(accepted.begin(), accepted.end(),
              [](const rod_detection& a, const rod_detection& b) { return a.cx < b.cx; });

    slice_detection det;
    for (std::size_t r = 0; r < 4; ++r) {
        det.rods[r].cx = accepted[r].cx;
        det.rods[r].cy = accepted[r].cy;
        det.rods[r].pixels = disk_pixels(filled, accepted[r].cx, accepted[r].cy, p.geometry.rod_radius, g);
    }
    det.slab = std::move(filled);
    return det;
}

} // namespace detail

/// Classical five-region segmentation of the calibration phantom.
///
/// Each axial slice is searched independently: the largest base-window
/// component near the bottom of the image is the slab, the four bright disks
/// it encloses are the rods (labels 2-5 by ascending x), and the rest of the
/// slab is label 1. The slab outline is then moved to the half-way HU level and
/// each rod is labeled as the rod-radius disk around its detected centroid. Slices whose rod centroids stray more than two rod radii
/// from the per-rod median along z are then dropped.
inline label_map segment_classical(const hu_volume& v, const detector_params& p)
{
    p.validate();
    const image_grid& g = v.grid();
    std::vector<std::optional<slice_detection>> slices(g.dims.z);
    for (std::size_t z = 0; z < g.dims.z; ++z)
        slices[z] = detail::detect_slice(v, z, p);

    std::array<std::vector<double>, 4> xs, ys;
    for (const auto& s : slices)
        if (s)
            for (int r = 0; r < 4; ++r) {
                xs[r].push_back(s->rods[r].cx * g.spacing.x);
                ys[r].push_back(s->rods[r].cy * g.spacing.y);
            }
    if (xs[0].empty())
        throw error(error_kind::segmentation, "phantom not found");

    const auto median_of = [](std::vector<double> a) {
        std::sort(a.begin(), a.end());
        const std::size_t n = a.size();
        return n % 2 ? a[n / 2] : 0.5 * (a[n / 2 - 1] + a[n / 2]);
    };
    std::array<double, 4> mx{}, my{};
    for (int r = 0; r < 4; ++r) {
        mx[r] = median_of(xs[r]);
        my[r] = median_of(ys[r]);
    }

    std::size_t kept = 0;
    for (auto& s : slices) {
        if (!s)
            continue;
        for (int r = 0; r < 4; ++r) {
            const double dx = s->rods[r].cx * g.spacing.x - mx[r];
            const double dy = s->rods[r].cy * g.spacing.y - my[r];
            if (std::hypot(dx, dy) > 2.0 * p.geometry.rod_radius) {
                s.reset();
                break;
            }
        }
        kept += s.has_value();
    }
    if (kept == 0)
        throw error(error_kind::segmentation, "phantom not found");
    for (int r = 1; r < 4; ++r)
        if (!(mx[r] > mx[r - 1]))
            throw error(error_kind::segmentation, "ambiguous rod assignment");

    label_map out(g, label_background);
    for (std::size_t z = 0; z < g.dims.z; ++z) {
        if (!slices[z])
            continue;
        std::uint8_t* dst = out.data().data() + z * g.slice_size();
        for (std::size_t i = 0; i < g.slice_size(); ++i)
            if (slices[z]->slab[i])
                dst[i] = label_base;
        for (int r = 0; r < 4; ++r)
            for (const std::size_t i : slices[z]->rods[r].pixels)
                dst[i] = static_cast<std::uint8_t>(2 + r);
    }
    return out;
}

/// Reads an externally produced label map and checks it against `target`.
inline label_map import_mask(const std::filesystem::path& path, const image_grid& target)
{
    label_map m = io::read_labels(path);
    require_compatible(m.grid(), target, "import_mask");
    return m;
}

/// Mean world position (mm) of each label 1..5; empty labels are nullopt.
inline std::array<std::optional<vec3>, 5> rod_centroids(const label_map& m)
{
    std::array<vec3, 5> sum{};
    std::array<std::size_t, 5> count{};
    const image_grid& g = m.grid();
    for (std::size_t z = 0; z < g.dims.z; ++z)
        for (std::size_t y = 0; y < g.dims.y; ++y)
            for (std::size_t x = 0; x < g.dims.x; ++x) {
                const std::uint8_t c = m.at(x, y, z);
                if (c == label_background || c > max_label)
                    continue;
                const vec3 w = g.world(x, y, z);
                auto& s = sum[c - 1];
                s.x += w.x;
                s.y += w.y;
                s.z += w.z;
                ++count[c - 1];
            }
    std::array<std::optional<vec3>, 5> out;
    for (std::size_t i = 0; i < 5; ++i)
        if (count[i] > 0) {
            const auto n = static_cast<double>(count[i]);
            out[i] = vec3{sum[i].x / n, sum[i].y / n, sum[i].z / n};
        }
    return out;
}

} // namespace qct
