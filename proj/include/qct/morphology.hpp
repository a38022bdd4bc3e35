#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "qct/core.hpp"

namespace qct {

/// Half-widths of the disk {(dx,dy) : dx^2 + dy^2 <= r^2}, indexed by dy + r.
inline std::vector<int> disk_half_widths(int radius)
{
    std::vector<int> widths;
    for (int dy = -radius; dy <= radius; ++dy) {
        int w = 0;
        while ((w + 1) * (w + 1) + dy * dy <= radius * radius)
            ++w;
        widths.push_back(w);
    }
    return widths;
}

/// Per-label, per-axial-slice erosion by a disk of `radius_px`.
///
/// A voxel keeps its label iff every disk offset lands inside the slice on the
/// same label; everything else becomes background. Labels are eroded
/// independently of each other.
///
/// Works row-wise: for every voxel the length of the same-label run to its
/// left and right is precomputed, so each disk row is a single span check.
inline label_map erode_labels(const label_map& m, int radius_px)
{
    if (radius_px < 0)
        throw error(error_kind::invalid_argument, "erosion radius must be >= 0");
    if (radius_px == 0)
        return m;

    const image_grid& g = m.grid();
    const auto nx = static_cast<std::ptrdiff_t>(g.dims.x);
    const auto ny = static_cast<std::ptrdiff_t>(g.dims.y);
    const auto widths = disk_half_widths(radius_px);

    // run_left[i]: number of same-label voxels strictly left of i in its row.
    std::vector<std::int32_t> run_left(g.slice_size()), run_right(g.slice_size());
    label_map out(g, label_background);

    for (std::size_t z = 0; z < g.dims.z; ++z) {
        const std::uint8_t* slice = m.data().data() + z * g.slice_size();
        for (std::ptrdiff_t y = 0; y < ny; ++y) {
            const std::uint8_t* row = slice + y * nx;
            std::int32_t* left = run_left.data() + y * nx;
            std::int32_t* right = run_right.data() + y * nx;
            left[0] = 0;
            for (std::ptrdiff_t x = 1; x < nx; ++x)
                left[x] = row[x] == row[x - 1] ? left[x - 1] + 1 : 0;
            right[nx - 1] = 0;
            for (std::ptrdiff_t x = nx - 2; x >= 0; --x)
                right[x] = row[x] == row[x + 1] ? right[x + 1] + 1 : 0;
        }

        std::uint8_t* dst = out.data().data() + z * g.slice_size();
        for (std::ptrdiff_t y = 0; y < ny; ++y) {
            for (std::ptrdiff_t x = 0; x < nx; ++x) {
                const std::uint8_t c = slice[y * nx + x];
                if (c == label_background)
                    continue;
                bool keep = true;
                for (int dy = -radius_px; dy <= radius_px && keep; ++dy) {
                    const std::ptrdiff_t yy = y + dy;
                    if (yy < 0 || yy >= ny) {
                        keep = false;
                        break;
                    }
                    const std::size_t k = static_cast<std::size_t>(yy * nx + x);
                    const int w = widths[static_cast<std::size_t>(dy + radius_px)];
                    keep = slice[k] == c && run_left[k] >= w && run_right[k] >= w;
                }
                if (keep)
                    dst[y * nx + x] = c;
            }
        }
    }
    return out;
}

/// Result of 2D component labeling: ids are 1-based, 0 means "not in mask".
struct components_2d {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::int32_t> ids;
    std::vector<std::size_t> sizes; // sizes[id - 1]

    std::size_t count() const { return sizes.size(); }
};

/// Connected components of a 2D mask (row-major, width x height).
/// `eight` selects 8-connectivity, otherwise 4-connectivity.
inline components_2d label_components(const std::vector<std::uint8_t>& mask, std::size_t width,
                                      std::size_t height, bool eight = true)
{
    components_2d cc;
    cc.width = width;
    cc.height = height;
    cc.ids.assign(width * height, 0);
    std::vector<std::size_t> stack;
    const auto w = static_cast<std::ptrdiff_t>(width);
    const auto h = static_cast<std::ptrdiff_t>(height);

    for (std::size_t start = 0; start < mask.size(); ++start) {
        if (!mask[start] || cc.ids[start] != 0)
            continue;
        const auto id = static_cast<std::int32_t>(cc.sizes.size() + 1);
        std::size_t size = 0;
        stack.push_back(start);
        cc.ids[start] = id;
        while (!stack.empty()) {
            const std::size_t p = stack.back();
            stack.pop_back();
            ++size;
            const auto px = static_cast<std::ptrdiff_t>(p % width);
            const auto py = static_cast<std::ptrdiff_t>(p / width);
            for (std::ptrdiff_t dy = -1; dy <= 1; ++dy) {
                for (std::ptrdiff_t dx = -1; dx <= 1; ++dx) {
                    if ((dx == 0 && dy == 0) || (!eight && dx != 0 && dy != 0))
                        continue;
                    const std::ptrdiff_t qx = px + dx, qy = py + dy;
                    if (qx < 0 || qy < 0 || qx >= w || qy >= h)
                        continue;
                    const auto q = static_cast<std::size_t>(qy * w + qx);
                    if (mask[q] && cc.ids[q] == 0) {
                        cc.ids[q] = id;
                        stack.push_back(q);
                    }
                }
            }
        }
        cc.sizes.push_back(size);
    }
    return cc;
}

/// Mask plus every pixel it encloses (background not 4-connected to the border).
inline std::vector<std::uint8_t> fill_holes(const std::vector<std::uint8_t>& mask, std::size_t width,
                                            std::size_t height)
{
    std::vector<std::uint8_t> outside(mask.size(), 0);
    std::vector<std::size_t> stack;
    const auto seed = [&](std::size_t p) {
        if (!mask[p] && !outside[p]) {
            outside[p] = 1;
            stack.push_back(p);
        }
    };
    for (std::size_t x = 0; x < width; ++x) {
        seed(x);
        seed((height - 1) * width + x);
    }
    for (std::size_t y = 0; y < height; ++y) {
        seed(y * width);
        seed(y * width + width - 1);
    }
    while (!stack.empty()) {
        const std::size_t p = stack.back();
        stack.pop_back();
        const std::size_t x = p % width, y = p / width;
        if (x > 0)
            seed(p - 1);
        if (x + 1 < width)
            seed(p + 1);
        if (y > 0)
            seed(p - width);
        if (y + 1 < height)
            seed(p + width);
    }
    std::vector<std::uint8_t> filled(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i)
        filled[i] = outside[i] ? 0 : 1;
    return filled;
}

} // namespace qct
