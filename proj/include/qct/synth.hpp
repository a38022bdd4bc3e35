#pragma once

// Synthetic phantom CT generator: rasterizes the deformable calibration phantom
// under a body cross-section, renders HU through an affine scanner law with
// blur, noise and optional artifacts, and writes whole multi-site datasets.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "qct/core.hpp"
#include "qct/metaimage.hpp"
#include "qct/rng.hpp"
#include "qct/text.hpp"

namespace qct::synth {

namespace fs = std::filesystem;

/// Phantom shape in mm. Defaults are placeholders for an unpublished geometry.
struct phantom_geometry {
    double slab_width = 240.0;
    double slab_height = 40.0;
    double slab_length = 200.0;
    double rod_radius = 6.0;
    double rod_pitch = 40.0;
    std::array<double, 4> rod_densities{50.0, 100.0, 150.0, 200.0};
    double base_density = 0.0;

    /// Density (mg/cm3) of label 1..5.
    double density_of(std::uint8_t label) const
    {
        return label == label_base ? base_density : rod_densities[label - 2];
    }

    /// Rod center along the slab width, relative to the slab center (mm).
    double rod_offset(int rod) const { return (rod - 1.5) * rod_pitch; }

    void validate() const
    {
        const auto fail = [](const char* what) { throw error(error_kind::config, what); };
        if (!(slab_width > 0 && slab_height > 0 && slab_length > 0 && rod_radius > 0 && rod_pitch > 0))
            fail("phantom dimensions must be positive");
        if (!(4.0 * rod_pitch + 2.0 * rod_radius < slab_width))
            fail("rods do not fit inside the slab width");
        if (!(2.0 * rod_radius < slab_height))
            fail("rods do not fit inside the slab height");
        if (!(rod_densities[0] > base_density))
            fail("rod densities must exceed the base density");
        for (std::size_t i = 1; i < rod_densities.size(); ++i)
            if (!(rod_densities[i] > rod_densities[i - 1]))
                fail("rod densities must be strictly increasing");
    }
};

/// Parabolic vertical bow of the slab midline plus in-plane rotation.
struct deformation_spec {
    double sagitta = 0.0;    // mm, +y (posterior) at mid-width
    double axial_tilt = 0.0; // degrees about z

    void validate(const phantom_geometry& g) const
    {
        if (std::abs(sagitta) > g.slab_height)
            throw error(error_kind::config, "|sagitta| must not exceed slab height");
        if (std::abs(axial_tilt) > 15.0)
            throw error(error_kind::config, "|axial_tilt| must be <= 15 degrees");
    }
};

/// Rendering law HU = alpha * density + beta, then blur, then noise.
struct scanner_model {
    double alpha = 1.0;
    double beta = 0.0;
    double noise_sd = 0.0;
    double kernel_blur_sd = 0.0;
    std::uint64_t seed = 0;

    /// Calibration line that inverts this law.
    double true_slope() const { return 1.0 / alpha; }
    double true_intercept() const { return -beta / alpha; }

    void validate() const
    {
        if (!(alpha > 0.0))
            throw error(error_kind::config, "scanner alpha must be > 0");
        if (!(noise_sd >= 0.0) || !(kernel_blur_sd >= 0.0))
            throw error(error_kind::config, "noise and blur must be >= 0");
    }
};

struct metal_streaks {
    int count = 4;
    double amplitude = 800.0;
    double width = 3.0;
    std::size_t z_begin = 0; // half-open slice interval
    std::size_t z_end = 0;
};

struct partial_fov {
    double crop_fraction = 0.2;
};

struct halation_patches {
    int count = 3;
    double amplitude = 300.0;
    double radius = 8.0;
};

struct artifact_spec {
    std::optional<metal_streaks> streaks;
    std::optional<partial_fov> fov;
    std::optional<halation_patches> halation;

    void validate() const
    {
        if (streaks && (streaks->amplitude < 0 || streaks->count < 0 || streaks->width <= 0))
            throw error(error_kind::config, "metal streaks need amplitude >= 0 and width > 0");
        if (fov && !(fov->crop_fraction >= 0.0 && fov->crop_fraction < 0.5))
            throw error(error_kind::config, "crop_fraction must be in [0, 0.5)");
        if (halation && (halation->amplitude < 0 || halation->count < 0 || halation->radius <= 0))
            throw error(error_kind::config, "halation needs amplitude >= 0 and radius > 0");
    }
};

/// Soft-tissue ellipse resting above the phantom with one ellipsoidal bone insert.
struct body_model {
    bool enabled = true;
    double semi_x = 110.0;
    double semi_y = 60.0;
    double gap = 4.0; // air between the body and the slab top
    double soft_tissue_hu = 40.0;
    double bone_hu = 700.0;
    vec3 bone_offset{-45.0, 10.0, 0.0}; // from the body center
    vec3 bone_semi{18.0, 14.0, 60.0};
};

/// Position of the slab center in world mm.
struct placement {
    vec3 center{};
};

struct case_spec {
    image_grid grid;
    phantom_geometry geometry;
    deformation_spec deformation;
    placement pose;
    scanner_model scanner;
    artifact_spec artifacts;
    body_model body;

    void validate() const
    {
        grid.validate();
        geometry.validate();
        deformation.validate(geometry);
        scanner.validate();
        artifacts.validate();
    }
};

inline image_grid default_grid()
{
    image_grid g;
    g.dims = {320, 224, 8};
    g.spacing = {0.8, 0.8, 2.0};
    return g;
}

/// Slab centered left-right and along z, 10 mm above the bottom edge of the grid.
inline placement default_placement(const image_grid& grid, const phantom_geometry& geom)
{
    const double width = static_cast<double>(grid.dims.x - 1) * grid.spacing.x;
    const double height = static_cast<double>(grid.dims.y - 1) * grid.spacing.y;
    const double depth = static_cast<double>(grid.dims.z - 1) * grid.spacing.z;
    return {{grid.origin.x + width / 2.0, grid.origin.y + height - 10.0 - geom.slab_height / 2.0,
             grid.origin.z + depth / 2.0}};
}

// ---------------------------------------------------------------------------
// Geometry

/// Maps world points into the undeformed slab frame.
class phantom_frame {
public:
    phantom_frame(const phantom_geometry& g, const deformation_spec& d, const placement& p)
        : geom_(g), def_(d), center_(p.center)
    {
        const double t = d.axial_tilt * std::numbers::pi / 180.0;
        cos_ = std::cos(t);
        sin_ = std::sin(t);
    }

    /// Label (0-5) of the phantom material containing world point `w`.
    std::uint8_t classify(const vec3& w) const
    {
        if (std::abs(w.z - center_.z) > geom_.slab_length / 2.0)
            return label_background;
        const double px = w.x - center_.x, py = w.y - center_.y;
        const double lx = cos_ * px + sin_ * py;
        const double ly = -sin_ * px + cos_ * py;
        const double u = (lx + geom_.slab_width / 2.0) / geom_.slab_width;
        if (u < 0.0 || u > 1.0)
            return label_background;
        const double bow = def_.sagitta * (1.0 - (2.0 * u - 1.0) * (2.0 * u - 1.0));
        const double v = ly - bow;
        if (std::abs(v) > geom_.slab_height / 2.0)
            return label_background;
        const double r2 = geom_.rod_radius * geom_.rod_radius;
        for (int rod = 0; rod < 4; ++rod) {
            const double dx = lx - geom_.rod_offset(rod);
            if (dx * dx + v * v <= r2)
                return static_cast<std::uint8_t>(2 + rod);
        }
        return label_base;
    }

    /// World position of a point given in the deformed slab frame.
    vec3 to_world(double lx, double ly) const
    {
        const double u = (lx + geom_.slab_width / 2.0) / geom_.slab_width;
        const double v = ly + def_.sagitta * (1.0 - (2.0 * u - 1.0) * (2.0 * u - 1.0));
        return {center_.x + cos_ * lx - sin_ * v, center_.y + sin_ * lx + cos_ * v, center_.z};
    }

private:
    phantom_geometry geom_;
    deformation_spec def_;
    vec3 center_;
    double cos_ = 1.0;
    double sin_ = 0.0;
};

/// Ground-truth label map: each voxel takes the material containing its center.
inline label_map rasterize_phantom(const phantom_geometry& geometry,
                                   const deformation_spec& deformation,
                                   const image_grid& grid, const placement& pose)
{
    geometry.validate();
    deformation.validate(geometry);
    const phantom_frame frame(geometry, deformation, pose);
    label_map out(grid, label_background);
    bool any = false;
    for (std::size_t z = 0; z < grid.dims.z; ++z)
        for (std::size_t y = 0; y < grid.dims.y; ++y)
            for (std::size_t x = 0; x < grid.dims.x; ++x) {
                const auto c = frame.classify(grid.world(x, y, z));
                out.at(x, y, z) = c;
                any = any || c != label_background;
            }
    if (!any)
        throw error(error_kind::config, "phantom slab lies entirely outside the grid");
    return out;
}

/// World x beyond which the partial-FOV artifact removes the image.
inline double fov_cut_x(const case_spec& spec)
{
    const double crop = spec.artifacts.fov ? spec.artifacts.fov->crop_fraction : 0.0;
    return spec.pose.center.x + spec.geometry.slab_width / 2.0 - crop * spec.geometry.slab_width;
}

/// Clears labels outside the field of view (no-op without a partial_fov artifact).
inline void apply_fov_crop(label_map& labels, const case_spec& spec)
{
    if (!spec.artifacts.fov)
        return;
    const double cut = fov_cut_x(spec);
    const image_grid& g = labels.grid();
    for (std::size_t z = 0; z < g.dims.z; ++z)
        for (std::size_t y = 0; y < g.dims.y; ++y)
            for (std::size_t x = 0; x < g.dims.x; ++x)
                if (g.world(x, y, z).x > cut)
                    labels.at(x, y, z) = label_background;
}

/// Ground truth as the generator writes it: rasterized phantom minus cropped FOV.
inline label_map ground_truth(const case_spec& spec)
{
    auto labels = rasterize_phantom(spec.geometry, spec.deformation, spec.grid, spec.pose);
    apply_fov_crop(labels, spec);
    return labels;
}

inline vec3 body_center(const case_spec& spec)
{
    const double slab_top = spec.pose.center.y - spec.geometry.slab_height / 2.0;
    return {spec.pose.center.x, slab_top - spec.body.gap - spec.body.semi_y, spec.pose.center.z};
}

/// Metal source of the streak artifact: the bone insert center.
inline vec3 metal_center(const case_spec& spec)
{
    const vec3 c = body_center(spec);
    return {c.x + spec.body.bone_offset.x, c.y + spec.body.bone_offset.y, c.z + spec.body.bone_offset.z};
}

/// True when world point `w` on slice `z` lies inside a metal streak band.
inline bool in_streak(const case_spec& spec, const vec3& w, std::size_t z)
{
    const auto& s = spec.artifacts.streaks;
    if (!s || s->count <= 0 || z < s->z_begin || z >= s->z_end)
        return false;
    const vec3 m = metal_center(spec);
    for (int i = 0; i < s->count; ++i) {
        const double theta = std::numbers::pi * (static_cast<double>(i) + 0.25) / s->count;
        const double dist = std::abs(-(w.x - m.x) * std::sin(theta) + (w.y - m.y) * std::cos(theta));
        if (dist <= s->width / 2.0)
            return true;
    }
    return false;
}

// ---------------------------------------------------------------------------
// Rendering

namespace detail {

/// Separable Gaussian along one axis; edges replicate.
inline void blur_axis(std::vector<float>& data, const image_grid& g, int axis, double sigma_vox)
{
    if (sigma_vox < 1e-6)
        return;
    const int radius = static_cast<int>(std::ceil(3.0 * sigma_vox));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int k = -radius; k <= radius; ++k) {
        const double w = std::exp(-0.5 * k * k / (sigma_vox * sigma_vox));
        kernel[static_cast<std::size_t>(k + radius)] = w;
        sum += w;
    }
    for (auto& w : kernel)
        w /= sum;

    const std::size_t n[3] = {g.dims.x, g.dims.y, g.dims.z};
    const std::size_t stride[3] = {1, g.dims.x, g.dims.x * g.dims.y};
    const std::size_t len = n[axis];
    const std::size_t step = stride[axis];
    std::vector<double> line(len);
    const std::vector<float> src = data;
    for (std::size_t start = 0; start < data.size(); ++start) {
        if ((start / step) % len != 0)
            continue; // only line starts
        for (std::size_t i = 0; i < len; ++i) {
            double acc = 0.0;
            for (int k = -radius; k <= radius; ++k) {
                const auto j = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(i) + k, 0,
                                                          static_cast<std::ptrdiff_t>(len) - 1);
                acc += kernel[static_cast<std::size_t>(k + radius)] *
                       src[start + static_cast<std::size_t>(j) * step];
            }
            line[i] = acc;
        }
        for (std::size_t i = 0; i < len; ++i)
            data[start + i * step] = static_cast<float>(line[i]);
    }
}

inline bool inside_ellipse(double dx, double dy, double ax, double ay)
{
    return (dx * dx) / (ax * ax) + (dy * dy) / (ay * ay) <= 1.0;
}

} // namespace detail

inline constexpr double air_hu = -1000.0;

/// Real-valued HU image: materials through the scanner law, body, blur, noise,
/// artifacts, then clamping to [-1024, 3071].
inline hu_field render_hu_field(const label_map& gt, const case_spec& spec)
{
    require_compatible(gt.grid(), spec.grid, "render_ct");
    spec.validate();
    const image_grid& g = gt.grid();
    const scanner_model& sc = spec.scanner;
    hu_field out(g, 0.0f);

    const vec3 bc = body_center(spec);
    const vec3 bone = metal_center(spec);
    for (std::size_t z = 0; z < g.dims.z; ++z)
        for (std::size_t y = 0; y < g.dims.y; ++y)
            for (std::size_t x = 0; x < g.dims.x; ++x) {
                const std::size_t i = g.index(x, y, z);
                const std::uint8_t label = gt[i];
                double hu = air_hu;
                if (label != label_background) {
                    hu = sc.alpha * spec.geometry.density_of(label) + sc.beta;
                } else if (spec.body.enabled) {
                    // Body tissues are specified by their HU equivalent under this scanner.
                    const vec3 w = g.world(x, y, z);
                    const vec3 d{w.x - bone.x, w.y - bone.y, w.z - bone.z};
                    const vec3& s = spec.body.bone_semi;
                    if (d.x * d.x / (s.x * s.x) + d.y * d.y / (s.y * s.y) + d.z * d.z / (s.z * s.z) <= 1.0)
                        hu = spec.body.bone_hu;
                    else if (detail::inside_ellipse(w.x - bc.x, w.y - bc.y, spec.body.semi_x, spec.body.semi_y))
                        hu = spec.body.soft_tissue_hu;
                }
                out[i] = static_cast<float>(hu);
            }

    detail::blur_axis(out.data(), g, 0, sc.kernel_blur_sd / g.spacing.x);
    detail::blur_axis(out.data(), g, 1, sc.kernel_blur_sd / g.spacing.y);
    detail::blur_axis(out.data(), g, 2, sc.kernel_blur_sd / g.spacing.z);

    if (sc.noise_sd > 0.0) {
        rng noise(sc.seed);
        for (auto& v : out.data())
            v = static_cast<float>(v + noise.normal(0.0, sc.noise_sd));
    }

    if (spec.artifacts.streaks) {
        const auto& s = *spec.artifacts.streaks;
        for (std::size_t z = s.z_begin; z < std::min(s.z_end, g.dims.z); ++z)
            for (std::size_t y = 0; y < g.dims.y; ++y)
                for (std::size_t x = 0; x < g.dims.x; ++x)
                    if (in_streak(spec, g.world(x, y, z), z))
                        out.at(x, y, z) += static_cast<float>(s.amplitude);
    }

    if (spec.artifacts.halation) {
        const auto& h = *spec.artifacts.halation;
        rng where(derive_seed(sc.seed, "halation"));
        const double zlo = g.origin.z, zhi = g.world(0, 0, g.dims.z - 1).z;
        for (int k = 0; k < h.count; ++k) {
            const vec3 c{spec.pose.center.x + where.uniform(-0.5, 0.5) * spec.geometry.slab_width,
                         spec.pose.center.y + where.uniform(-0.5, 0.5) * spec.geometry.slab_height,
                         where.uniform(zlo, zhi)};
            for (std::size_t z = 0; z < g.dims.z; ++z)
                for (std::size_t y = 0; y < g.dims.y; ++y)
                    for (std::size_t x = 0; x < g.dims.x; ++x) {
                        const vec3 w = g.world(x, y, z);
                        const double d2 = (w.x - c.x) * (w.x - c.x) + (w.y - c.y) * (w.y - c.y) +
                                          (w.z - c.z) * (w.z - c.z);
                        const double r2 = h.radius * h.radius;
                        if (d2 < r2)
                            out.at(x, y, z) += static_cast<float>(h.amplitude * (1.0 - d2 / r2));
                    }
        }
    }

    if (spec.artifacts.fov) {
        const double cut = fov_cut_x(spec);
        for (std::size_t z = 0; z < g.dims.z; ++z)
            for (std::size_t y = 0; y < g.dims.y; ++y)
                for (std::size_t x = 0; x < g.dims.x; ++x)
                    if (g.world(x, y, z).x > cut)
                        out.at(x, y, z) = static_cast<float>(hu_min);
    }

    for (auto& v : out.data())
        v = std::clamp(v, static_cast<float>(hu_min), static_cast<float>(hu_max));
    return out;
}

/// Rounds (half away from zero) a real HU field to 16-bit samples.
inline hu_volume quantize(const hu_field& field)
{
    hu_volume out(field.grid(), 0);
    for (std::size_t i = 0; i < field.size(); ++i) {
        const double v = std::clamp<double>(std::round(field[i]), hu_min, hu_max);
        out[i] = static_cast<std::int16_t>(v);
    }
    return out;
}

inline hu_volume render_ct(const label_map& gt, const case_spec& spec)
{
    return quantize(render_hu_field(gt, spec));
}

// ---------------------------------------------------------------------------
// Datasets

/// Per-case random variation applied to a site template.
struct jitter_spec {
    double alpha_rel_sd = 0.003;
    double beta_sd = 0.3;
    double sagitta_min = 0.0;
    double sagitta_max = 6.0;
    double tilt_max_deg = 3.0;
    double shift_mm = 4.0;
};

struct site_template {
    std::string tag;
    case_spec spec;
    jitter_spec jitter;
    std::size_t count = 0;
};

/// Hospital A-like scanner: calibration slope 0.841, intercept 0.6 mg/cm3.
inline scanner_model site_a_scanner()
{
    scanner_model s;
    s.alpha = 1.0 / 0.841;
    s.beta = -0.6 * s.alpha;
    s.noise_sd = 5.0;
    s.kernel_blur_sd = 0.4;
    return s;
}

/// Hospital B-like scanner: calibration slope 0.744, intercept 0.
inline scanner_model site_b_scanner()
{
    scanner_model s;
    s.alpha = 1.0 / 0.744;
    s.beta = 0.0;
    s.noise_sd = 5.0;
    s.kernel_blur_sd = 0.6;
    return s;
}

inline case_spec default_case(const scanner_model& scanner)
{
    case_spec c;
    c.grid = default_grid();
    c.pose = default_placement(c.grid, c.geometry);
    c.scanner = scanner;
    return c;
}

inline site_template default_site(const std::string& tag, std::size_t count)
{
    site_template t;
    t.tag = tag;
    t.count = count;
    t.spec = default_case(tag == "B" ? site_b_scanner() : site_a_scanner());
    return t;
}

struct manifest_entry {
    std::string case_id;
    std::string site;
    fs::path volume_path; // as written in the manifest (relative to its directory)
    fs::path label_path;
    double alpha = 0.0;
    double beta = 0.0;
    double noise_sd = 0.0;
    double sagitta = 0.0;
};

struct dataset_manifest {
    fs::path directory; // paths resolve against this
    std::vector<manifest_entry> entries;

    fs::path volume_file(const manifest_entry& e) const { return directory / e.volume_path; }
    fs::path label_file(const manifest_entry& e) const { return directory / e.label_path; }
};

inline std::string case_id_for(const std::string& site, std::size_t index)
{
    std::string n = std::to_string(index + 1);
    while (n.size() < 3)
        n.insert(n.begin(), '0');
    return site + n;
}

/// Draws the per-case parameters for `case_id` from the site template.
inline case_spec jittered_case(const site_template& site, const std::string& case_id,
                               std::uint64_t master_seed)
{
    const std::uint64_t sub = derive_seed(master_seed, case_id);
    rng r(sub);
    case_spec c = site.spec;
    const jitter_spec& j = site.jitter;
    c.scanner.alpha *= 1.0 + j.alpha_rel_sd * r.normal();
    c.scanner.beta += j.beta_sd * r.normal();
    c.deformation.sagitta = r.uniform(j.sagitta_min, j.sagitta_max);
    c.deformation.axial_tilt = r.uniform(-j.tilt_max_deg, j.tilt_max_deg);
    c.pose.center.x += r.uniform(-j.shift_mm, j.shift_mm);
    c.pose.center.y += r.uniform(-j.shift_mm, j.shift_mm);
    c.scanner.seed = splitmix64(sub);
    return c;
}

inline void write_case_record(const fs::path& path, const std::string& case_id,
                              const std::string& site, const case_spec& c)
{
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw error(error_kind::io, "cannot write " + path.string());
    const auto num = text::format_number;
    out << "case_id = " << case_id << "\n"
        << "site = " << site << "\n"
        << "alpha = " << num(c.scanner.alpha) << "\n"
        << "beta = " << num(c.scanner.beta) << "\n"
        << "noise_sd = " << num(c.scanner.noise_sd) << "\n"
        << "kernel_blur_sd = " << num(c.scanner.kernel_blur_sd) << "\n"
        << "seed = " << c.scanner.seed << "\n"
        << "sagitta = " << num(c.deformation.sagitta) << "\n"
        << "axial_tilt = " << num(c.deformation.axial_tilt) << "\n"
        << "center = " << num(c.pose.center.x) << " " << num(c.pose.center.y) << " "
        << num(c.pose.center.z) << "\n"
        << "true_slope = " << num(c.scanner.true_slope()) << "\n"
        << "true_intercept = " << num(c.scanner.true_intercept()) << "\n";
    if (!out)
        throw error(error_kind::io, "write failed: " + path.string());
}

inline void write_manifest(const dataset_manifest& m, const fs::path& path)
{
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw error(error_kind::io, "cannot write " + path.string());
    const auto num = text::format_number;
    for (const auto& e : m.entries)
        out << e.case_id << '\t' << e.site << '\t' << e.volume_path.generic_string() << '\t'
            << e.label_path.generic_string() << '\t' << num(e.alpha) << '\t' << num(e.beta) << '\t'
            << num(e.noise_sd) << '\t' << num(e.sagitta) << '\n';
    if (!out)
        throw error(error_kind::io, "write failed: " + path.string());
}

inline dataset_manifest read_manifest(const fs::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw error(error_kind::io, "cannot open manifest " + path.string());
    dataset_manifest m;
    m.directory = path.parent_path();
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty())
            continue;
        const auto f = text::split(line, '\t');
        const auto bad = [&] {
            return error(error_kind::io, path.string() + ":" + std::to_string(lineno) + ": malformed record");
        };
        if (f.size() != 8)
            throw bad();
        manifest_entry e;
        e.case_id = f[0];
        e.site = f[1];
        e.volume_path = f[2];
        e.label_path = f[3];
        const auto a = text::parse_double(f[4]), b = text::parse_double(f[5]);
        const auto n = text::parse_double(f[6]), s = text::parse_double(f[7]);
        if (!a || !b || !n || !s)
            throw bad();
        e.alpha = *a;
        e.beta = *b;
        e.noise_sd = *n;
        e.sagitta = *s;
        m.entries.push_back(std::move(e));
    }
    return m;
}

inline constexpr const char* manifest_name = "manifest.tsv";

/// Writes every case (HU volume, ground truth, parameter record) and the manifest.
inline dataset_manifest generate_dataset(const std::vector<site_template>& sites, const fs::path& out_dir,
                                         std::uint64_t master_seed)
{
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec)
        throw error(error_kind::io, "cannot create " + out_dir.string() + ": " + ec.message());

    dataset_manifest manifest;
    manifest.directory = out_dir;
    for (const auto& site : sites) {
        for (std::size_t i = 0; i < site.count; ++i) {
            const std::string id = case_id_for(site.tag, i);
            for (const auto& e : manifest.entries)
                if (e.case_id == id)
                    throw error(error_kind::config, "duplicate case id " + id);
            const case_spec c = jittered_case(site, id, master_seed);
            const label_map gt = ground_truth(c);
            const hu_volume ct = render_ct(gt, c);

            manifest_entry e;
            e.case_id = id;
            e.site = site.tag;
            e.volume_path = id + "_ct.mhd";
            e.label_path = id + "_gt.mhd";
            e.alpha = c.scanner.alpha;
            e.beta = c.scanner.beta;
            e.noise_sd = c.scanner.noise_sd;
            e.sagitta = c.deformation.sagitta;
            io::write_volume(ct, out_dir / e.volume_path);
            io::write_volume(gt, out_dir / e.label_path);
            write_case_record(out_dir / (id + ".params"), id, site.tag, c);
            manifest.entries.push_back(std::move(e));
        }
    }
    write_manifest(manifest, out_dir / manifest_name);
    return manifest;
}

} // namespace qct::synth
