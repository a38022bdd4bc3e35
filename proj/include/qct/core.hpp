#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace qct {

/// Error category; the CLI maps each kind to its exit code.
enum class error_kind {
    config,           // invalid parameters or usage
    io,               // file missing, unreadable, malformed
    segmentation,     // phantom not found / ambiguous rods
    calibration,      // region vanished / degenerate fit
    grid_mismatch,    // incompatible image grids
    invalid_argument, // precondition violated in a library call
};

class error : public std::runtime_error {
public:
    error(error_kind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    error_kind kind() const noexcept { return kind_; }

private:
    error_kind kind_;
};

struct vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    friend bool operator==(const vec3&, const vec3&) = default;
};

struct index3 {
    std::size_t x = 0;
    std::size_t y = 0;
    std::size_t z = 0;

    friend bool operator==(const index3&, const index3&) = default;
};

/// Voxel lattice: dims, spacing (mm) and the world position of voxel (0,0,0).
struct image_grid {
    index3 dims{1, 1, 1};
    vec3 spacing{1.0, 1.0, 1.0};
    vec3 origin{};

    std::size_t voxel_count() const { return dims.x * dims.y * dims.z; }
    std::size_t slice_size() const { return dims.x * dims.y; }

    /// x-fastest, z-slowest linear index.
    std::size_t index(std::size_t x, std::size_t y, std::size_t z) const
    {
        return x + dims.x * (y + dims.y * z);
    }

    index3 coords(std::size_t linear) const
    {
        const std::size_t x = linear % dims.x;
        const std::size_t rest = linear / dims.x;
        return {x, rest % dims.y, rest / dims.y};
    }

    vec3 world(std::size_t x, std::size_t y, std::size_t z) const
    {
        return {origin.x + static_cast<double>(x) * spacing.x,
                origin.y + static_cast<double>(y) * spacing.y,
                origin.z + static_cast<double>(z) * spacing.z};
    }

    bool valid() const
    {
        return dims.x >= 1 && dims.y >= 1 && dims.z >= 1 && spacing.x > 0.0 &&
               spacing.y > 0.0 && spacing.z > 0.0;
    }

    void validate() const
    {
        if (!valid())
            throw error(error_kind::invalid_argument,
                        "image grid needs dims >= 1 and spacing > 0");
    }
};

inline constexpr double spacing_tolerance_mm = 1e-6;

/// Dims equal and spacings equal within 1e-6 mm. Origin is not compared.
inline bool compatible(const image_grid& a, const image_grid& b)
{
    return a.dims == b.dims &&
           std::abs(a.spacing.x - b.spacing.x) <= spacing_tolerance_mm &&
           std::abs(a.spacing.y - b.spacing.y) <= spacing_tolerance_mm &&
           std::abs(a.spacing.z - b.spacing.z) <= spacing_tolerance_mm;
}

inline void require_compatible(const image_grid& a, const image_grid& b,
                               const char* context)
{
    if (!compatible(a, b))
        throw error(error_kind::grid_mismatch,
                    std::string(context) + ": image grids are not compatible");
}

/// Dense voxel array over a grid, x-fastest.
template <typename T>
class volume {
public:
    using value_type = T;

    volume() = default;

    explicit volume(const image_grid& grid, T fill = T{})
        : grid_(grid)
    {
        grid_.validate();
        data_.assign(grid_.voxel_count(), fill);
    }

    volume(const image_grid& grid, std::vector<T> data)
        : grid_(grid), data_(std::move(data))
    {
        grid_.validate();
        if (data_.size() != grid_.voxel_count())
            throw error(error_kind::invalid_argument,
                        "voxel count does not match grid dims");
    }

    const image_grid& grid() const { return grid_; }
    std::size_t size() const { return data_.size(); }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T& at(std::size_t x, std::size_t y, std::size_t z) { return data_[grid_.index(x, y, z)]; }
    const T& at(std::size_t x, std::size_t y, std::size_t z) const
    {
        return data_[grid_.index(x, y, z)];
    }

    std::vector<T>& data() { return data_; }
    const std::vector<T>& data() const { return data_; }

    friend bool operator==(const volume& a, const volume& b)
    {
        return a.grid_.dims == b.grid_.dims && a.grid_.spacing == b.grid_.spacing &&
               a.grid_.origin == b.grid_.origin && a.data_ == b.data_;
    }

private:
    image_grid grid_{};
    std::vector<T> data_;
};

/// Radiodensity samples in HU.
using hu_volume = volume<std::int16_t>;
/// Real-valued HU field (synthesis before quantization).
using hu_field = volume<float>;
/// 0 = background, 1 = urethane base, 2..5 = rods 50/100/150/200 mg/cm3.
using label_map = volume<std::uint8_t>;
/// Equivalent bone density in mg/cm3.
using density_volume = volume<float>;

inline constexpr std::uint8_t label_background = 0;
inline constexpr std::uint8_t label_base = 1;
inline constexpr std::uint8_t max_label = 5;
inline constexpr int phantom_label_count = 5;

/// Nominal phantom densities (mg/cm3) for labels 1..5.
inline constexpr std::array<double, 5> phantom_densities{0.0, 50.0, 100.0, 150.0, 200.0};

inline constexpr std::int16_t hu_min = -1024;
inline constexpr std::int16_t hu_max = 3071;

inline void require_label_range(const label_map& m)
{
    for (const std::uint8_t v : m.data())
        if (v > max_label)
            throw error(error_kind::io, "label code " + std::to_string(v) +
                                            " outside 0-5");
}

/// 1 where m == code, 0 elsewhere.
inline label_map binary_mask(const label_map& m, std::uint8_t code)
{
    if (code == 0 || code > max_label)
        throw error(error_kind::invalid_argument, "binary_mask: code must be 1-5");
    label_map out(m.grid(), 0);
    for (std::size_t i = 0; i < m.size(); ++i)
        out[i] = m[i] == code ? 1 : 0;
    return out;
}

inline std::size_t count_nonzero(const label_map& m)
{
    std::size_t n = 0;
    for (const std::uint8_t v : m.data())
        n += v != 0;
    return n;
}

} // namespace qct
