#pragma once

// Command-line front end: gen, segment, calibrate, evaluate, compare.
//
// Exit codes: 0 ok, 2 config, 3 I/O, 4 segmentation, 5 calibration,
// 6 grid mismatch. Options may also come from a `key = value` file given with
// --config; keys are the long option names (flags on the command line win),
// plus the dataset/detector template keys listed in README.md.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qct/calibration.hpp"
#include "qct/core.hpp"
#include "qct/metaimage.hpp"
#include "qct/metrics.hpp"
#include "qct/morphology.hpp"
#include "qct/segmentation.hpp"
#include "qct/svg.hpp"
#include "qct/synth.hpp"
#include "qct/text.hpp"

namespace qct::cli {

namespace fs = std::filesystem;

enum exit_code : int {
    ok = 0,
    config_error = 2,
    io_error = 3,
    segmentation_error = 4,
    calibration_error = 5,
    grid_mismatch_error = 6,
};

inline int exit_code_for(error_kind k)
{
    switch (k) {
    case error_kind::io: return io_error;
    case error_kind::segmentation: return segmentation_error;
    case error_kind::calibration: return calibration_error;
    case error_kind::grid_mismatch: return grid_mismatch_error;
    case error_kind::config:
    case error_kind::invalid_argument: break;
    }
    return config_error;
}

// ---------------------------------------------------------------------------
// Configuration file keys that are not command-line options

namespace detail {

inline const std::set<std::string>& template_keys()
{
    static const std::set<std::string> keys = {
        "grid.dims", "grid.spacing",
        "phantom.slab_width", "phantom.slab_height", "phantom.slab_length", "phantom.rod_radius",
        "phantom.rod_pitch",
        "site.A.alpha", "site.A.beta", "site.A.noise_sd", "site.A.blur_sd",
        "site.B.alpha", "site.B.beta", "site.B.noise_sd", "site.B.blur_sd",
        "jitter.alpha_rel_sd", "jitter.beta_sd", "jitter.sagitta_min", "jitter.sagitta_max",
        "jitter.tilt_max", "jitter.shift",
        "artifact.partial_fov", "artifact.metal_streaks", "artifact.halation",
        "body.enabled",
        "detector.base_hu_lo", "detector.base_hu_hi", "detector.rod_hu_margin",
        "detector.search_region", "detector.min_component_voxels",
    };
    return keys;
}

inline double number_of(const text::key_values& kv, const std::string& key, double fallback)
{
    const auto* v = kv.find(key);
    if (!v)
        return fallback;
    const auto d = text::parse_double(*v);
    if (!d)
        throw error(error_kind::config, "config key " + key + ": bad number '" + *v + "'");
    return *d;
}

inline std::vector<double> numbers_of(const text::key_values& kv, const std::string& key, std::size_t count)
{
    const auto* v = kv.find(key);
    if (!v)
        return {};
    const auto toks = text::split_ws(*v);
    if (toks.size() != count)
        throw error(error_kind::config, "config key " + key + " needs " + std::to_string(count) + " values");
    std::vector<double> out;
    for (const auto& t : toks) {
        const auto d = text::parse_double(t);
        if (!d)
            throw error(error_kind::config, "config key " + key + ": bad number '" + t + "'");
        out.push_back(*d);
    }
    return out;
}

inline synth::site_template site_from_config(const std::string& tag, std::size_t count,
                                             const text::key_values& kv)
{
    auto site = synth::default_site(tag, count);
    auto& c = site.spec;
    if (const auto dims = numbers_of(kv, "grid.dims", 3); !dims.empty()) {
        for (const double d : dims)
            if (!(d >= 1.0) || d != std::floor(d))
                throw error(error_kind::config, "grid.dims must be positive integers");
        c.grid.dims = {static_cast<std::size_t>(dims[0]), static_cast<std::size_t>(dims[1]),
                       static_cast<std::size_t>(dims[2])};
    }
    if (const auto sp = numbers_of(kv, "grid.spacing", 3); !sp.empty())
        c.grid.spacing = {sp[0], sp[1], sp[2]};
    c.grid.validate();

    auto& g = c.geometry;
    g.slab_width = number_of(kv, "phantom.slab_width", g.slab_width);
    g.slab_height = number_of(kv, "phantom.slab_height", g.slab_height);
    g.slab_length = number_of(kv, "phantom.slab_length", g.slab_length);
    g.rod_radius = number_of(kv, "phantom.rod_radius", g.rod_radius);
    g.rod_pitch = number_of(kv, "phantom.rod_pitch", g.rod_pitch);
    c.pose = synth::default_placement(c.grid, g);

    const std::string prefix = "site." + tag + ".";
    c.scanner.alpha = number_of(kv, prefix + "alpha", c.scanner.alpha);
    c.scanner.beta = number_of(kv, prefix + "beta", c.scanner.beta);
    c.scanner.noise_sd = number_of(kv, prefix + "noise_sd", c.scanner.noise_sd);
    c.scanner.kernel_blur_sd = number_of(kv, prefix + "blur_sd", c.scanner.kernel_blur_sd);

    auto& j = site.jitter;
    j.alpha_rel_sd = number_of(kv, "jitter.alpha_rel_sd", j.alpha_rel_sd);
    j.beta_sd = number_of(kv, "jitter.beta_sd", j.beta_sd);
    j.sagitta_min = number_of(kv, "jitter.sagitta_min", j.sagitta_min);
    j.sagitta_max = number_of(kv, "jitter.sagitta_max", j.sagitta_max);
    j.tilt_max_deg = number_of(kv, "jitter.tilt_max", j.tilt_max_deg);
    j.shift_mm = number_of(kv, "jitter.shift", j.shift_mm);
    if (j.sagitta_min > j.sagitta_max || j.alpha_rel_sd < 0 || j.beta_sd < 0 || j.tilt_max_deg < 0 ||
        j.shift_mm < 0)
        throw error(error_kind::config, "invalid jitter settings");

    if (kv.find("artifact.partial_fov"))
        c.artifacts.fov = synth::partial_fov{number_of(kv, "artifact.partial_fov", 0.0)};
    if (const auto m = numbers_of(kv, "artifact.metal_streaks", 5); !m.empty())
        c.artifacts.streaks = synth::metal_streaks{static_cast<int>(m[0]), m[1], m[2],
                                                   static_cast<std::size_t>(m[3]),
                                                   static_cast<std::size_t>(m[4])};
    if (const auto h = numbers_of(kv, "artifact.halation", 3); !h.empty())
        c.artifacts.halation = synth::halation_patches{static_cast<int>(h[0]), h[1], h[2]};
    if (const auto* b = kv.find("body.enabled"))
        c.body.enabled = *b == "true" || *b == "1" || *b == "True";
    c.validate();
    return site;
}

inline detector_params detector_from_config(const text::key_values& kv)
{
    detector_params p;
    p.base_hu_lo = number_of(kv, "detector.base_hu_lo", p.base_hu_lo);
    p.base_hu_hi = number_of(kv, "detector.base_hu_hi", p.base_hu_hi);
    p.rod_hu_margin = number_of(kv, "detector.rod_hu_margin", p.rod_hu_margin);
    p.search_region = number_of(kv, "detector.search_region", p.search_region);
    const double min_vox = number_of(kv, "detector.min_component_voxels",
                                     static_cast<double>(p.min_component_voxels));
    if (min_vox < 1)
        throw error(error_kind::config, "detector.min_component_voxels must be >= 1");
    p.min_component_voxels = static_cast<std::size_t>(min_vox);
    auto& g = p.geometry;
    g.slab_width = number_of(kv, "phantom.slab_width", g.slab_width);
    g.slab_height = number_of(kv, "phantom.slab_height", g.slab_height);
    g.slab_length = number_of(kv, "phantom.slab_length", g.slab_length);
    g.rod_radius = number_of(kv, "phantom.rod_radius", g.rod_radius);
    g.rod_pitch = number_of(kv, "phantom.rod_pitch", g.rod_pitch);
    g.validate();
    p.validate();
    return p;
}

/// Parses "A:10,B:10".
inline std::vector<std::pair<std::string, std::size_t>> parse_sites(const std::string& spec)
{
    std::vector<std::pair<std::string, std::size_t>> out;
    for (const auto& item : text::split(spec, ',')) {
        const auto parts = text::split(text::trim(item), ':');
        const auto n = parts.size() == 2 ? text::parse_int<std::size_t>(parts[1]) : std::nullopt;
        if (!n || (parts[0] != "A" && parts[0] != "B"))
            throw error(error_kind::config, "--sites expects e.g. A:10,B:10 (sites A and B)");
        for (const auto& [tag, _] : out)
            if (tag == parts[0])
                throw error(error_kind::config, "site " + tag + " listed twice");
        out.emplace_back(parts[0], *n);
    }
    return out;
}

/// Parses "lo:hi" HU ranges.
inline std::pair<int, int> parse_range(const std::string& s)
{
    const auto colon = s.find(':', 1);
    if (colon == std::string::npos)
        throw error(error_kind::config, "--range expects lo:hi");
    const auto lo = text::parse_int<int>(s.substr(0, colon));
    const auto hi = text::parse_int<int>(s.substr(colon + 1));
    if (!lo || !hi)
        throw error(error_kind::config, "--range expects integer lo:hi");
    if (*lo > *hi)
        throw error(error_kind::config, "--range needs lo <= hi");
    return {*lo, *hi};
}

inline statistic parse_statistic(const std::string& s)
{
    if (s == "mean")
        return statistic::mean;
    if (s == "median")
        return statistic::median;
    throw error(error_kind::config, "--stat must be mean or median");
}

inline void ensure_dir(const fs::path& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        throw error(error_kind::io, "cannot create " + dir.string() + ": " + ec.message());
}

inline std::string stem_of(const fs::path& p) { return p.stem().string(); }

/// Console output that respects --quiet for progress lines.
struct console {
    std::ostream& out;
    std::ostream& err;
    bool quiet = false;

    void info(const std::string& line) const
    {
        if (!quiet)
            out << line << '\n';
    }
    void result(const std::string& line) const { out << line << '\n'; }
    void fail(const std::string& line) const { err << line << '\n'; }
};

/// Keeps the first failing exit code of a batch.
struct batch_status {
    int code = ok;
    std::size_t failures = 0;

    void record(int c)
    {
        if (c == ok)
            return;
        ++failures;
        if (code == ok)
            code = c;
    }
};

} // namespace detail

// ---------------------------------------------------------------------------
// Settings per subcommand

struct global_settings {
    std::string config_path;
    std::uint64_t seed = 0;
    std::string out;
    bool quiet = false;
    text::key_values config;
};

struct gen_settings {
    std::string sites = "A:20,B:20";
    std::optional<double> noise_sd;
    std::optional<double> blur_sd;
};

struct segment_settings {
    std::string input;
    std::string manifest;
    std::string backend = "classical";
    std::string mask;
};

struct calibrate_settings {
    std::string volume;
    std::string labels;
    std::string manifest;
    std::string labels_dir;
    bool use_gt = false;
    std::string case_id;
    int erode = 3;
    std::string stat = "mean";
    std::string method = "auto";
    double roi_radius = 3.6;
};

struct evaluate_settings {
    std::string pred;
    std::string ref;
    std::string volume;
    std::string manifest;
    std::string pred_dir;
    std::string case_id = "case";
    std::string site;
    int erode = 3;
    std::size_t crossval = 0;
};

struct compare_settings {
    std::string site_a;
    std::string site_b;
    std::string range = "-100:700";
    double alpha = 0.05;
};

// ---------------------------------------------------------------------------
// gen

inline int cmd_gen(const global_settings& g, const gen_settings& s, const detail::console& io)
{
    if (g.out.empty())
        throw error(error_kind::config, "gen: --out is required");
    std::vector<synth::site_template> sites;
    for (const auto& [tag, count] : detail::parse_sites(s.sites)) {
        auto site = detail::site_from_config(tag, count, g.config);
        if (s.noise_sd)
            site.spec.scanner.noise_sd = *s.noise_sd;
        if (s.blur_sd)
            site.spec.scanner.kernel_blur_sd = *s.blur_sd;
        site.spec.validate();
        sites.push_back(std::move(site));
    }
    const auto manifest = synth::generate_dataset(sites, g.out, g.seed);
    io.info("generated " + std::to_string(manifest.entries.size()) + " cases");
    io.result((fs::path(g.out) / synth::manifest_name).string());
    return ok;
}

// ---------------------------------------------------------------------------
// segment

inline int cmd_segment(const global_settings& g, const segment_settings& s, const detail::console& io)
{
    if (s.input.empty() == s.manifest.empty())
        throw error(error_kind::config, "segment: give exactly one of --input or --manifest");
    if (s.backend != "classical" && s.backend != "mask")
        throw error(error_kind::config, "segment: --backend must be classical or mask");
    if (s.backend == "mask" && s.mask.empty())
        throw error(error_kind::config, "segment: --backend mask needs --mask");
    const detector_params params = detail::detector_from_config(g.config);

    struct job {
        std::string id;
        fs::path volume;
        fs::path mask;
        fs::path output;
    };
    std::vector<job> jobs;
    if (!s.input.empty()) {
        const fs::path in = s.input;
        const fs::path dir = g.out.empty() ? in.parent_path() : fs::path(g.out);
        jobs.push_back({detail::stem_of(in), in, s.mask, dir / (detail::stem_of(in) + "_pred.mhd")});
    } else {
        const auto m = synth::read_manifest(s.manifest);
        const fs::path dir = g.out.empty() ? m.directory : fs::path(g.out);
        for (const auto& e : m.entries)
            jobs.push_back({e.case_id, m.volume_file(e),
                            s.mask.empty() ? fs::path() : fs::path(s.mask) / (e.case_id + "_mask.mhd"),
                            dir / (e.case_id + "_pred.mhd")});
    }
    if (!g.out.empty())
        detail::ensure_dir(g.out);

    detail::batch_status status;
    for (const auto& j : jobs) {
        try {
            const hu_volume v = io::read_hu(j.volume);
            const label_map labels = s.backend == "classical" ? segment_classical(v, params)
                                                              : import_mask(j.mask, v.grid());
            io::write_volume(labels, j.output);
            io.result(j.id + ": ok -> " + j.output.string());
        } catch (const error& e) {
            io.result(j.id + ": failed: " + e.what());
            status.record(exit_code_for(e.kind()));
        }
    }
    if (jobs.size() > 1)
        io.info("segmented " + std::to_string(jobs.size() - status.failures) + "/" +
                std::to_string(jobs.size()) + " cases");
    return status.code;
}

// ---------------------------------------------------------------------------
// calibrate

namespace detail {

inline void write_regression_outputs(const calibration_model& m, const fs::path& dir, const std::string& id)
{
    {
        std::ofstream csv(dir / (id + "_regression.csv"), std::ios::trunc);
        if (!csv)
            throw error(error_kind::io, "cannot write regression CSV in " + dir.string());
        csv << "label,density,hu,predicted,residual\n";
        for (std::size_t i = 0; i < m.points.size(); ++i)
            csv << i + 1 << ',' << text::format_number(m.points[i].density) << ','
                << text::format_number(m.points[i].hu) << ','
                << text::format_number(m.density_at(m.points[i].hu)) << ','
                << text::format_number(m.residuals[i]) << '\n';
    }
    svg::chart c;
    c.title = id + ": density = " + text::format_fixed(m.slope, 4) + " HU + " +
              text::format_fixed(m.intercept, 2) + ", r = " + text::format_fixed(m.r, 6);
    c.x_label = "Radiodensity (HU)";
    c.y_label = "Density (mg/cm3)";
    svg::series pts{"regions", {}, "#d62728", true, false};
    double lo = 0.0, hi = 0.0;
    for (const auto& p : m.points) {
        pts.points.emplace_back(p.hu, p.density);
        lo = std::min(lo, p.hu);
        hi = std::max(hi, p.hu);
    }
    svg::series line{"fit", {{lo, m.density_at(lo)}, {hi, m.density_at(hi)}}, "#1f77b4", false, false};
    c.data = {line, pts};
    svg::write(c, (dir / (id + "_regression.svg")).string());
}

} // namespace detail

inline int cmd_calibrate(const global_settings& g, const calibrate_settings& s, const detail::console& io)
{
    if (g.out.empty())
        throw error(error_kind::config, "calibrate: --out is required");
    const bool single = !s.volume.empty();
    if (single == !s.manifest.empty())
        throw error(error_kind::config, "calibrate: give exactly one of --volume or --manifest");
    if (single && s.labels.empty())
        throw error(error_kind::config, "calibrate: --volume needs --labels");
    if (!single && s.labels_dir.empty() && !s.use_gt)
        throw error(error_kind::config, "calibrate: --manifest needs --labels-dir or --use-gt");
    if (s.erode < 0)
        throw error(error_kind::config, "calibrate: --erode must be >= 0");
    if (s.method != "auto" && s.method != "manual")
        throw error(error_kind::config, "calibrate: --method must be auto or manual");
    if (!(s.roi_radius > 0))
        throw error(error_kind::config, "calibrate: --roi-radius must be > 0");
    const statistic stat = detail::parse_statistic(s.stat);

    struct job {
        std::string id;
        fs::path volume;
        fs::path labels;
        fs::path out_dir;
    };
    std::vector<job> jobs;
    if (single) {
        const std::string id = s.case_id.empty() ? detail::stem_of(s.volume) : s.case_id;
        jobs.push_back({id, s.volume, s.labels, g.out});
    } else {
        const auto m = synth::read_manifest(s.manifest);
        for (const auto& e : m.entries)
            jobs.push_back({e.case_id, m.volume_file(e),
                            s.use_gt ? m.label_file(e) : fs::path(s.labels_dir) / (e.case_id + "_pred.mhd"),
                            fs::path(g.out) / e.site});
    }

    detail::batch_status status;
    for (const auto& j : jobs) {
        try {
            const hu_volume v = io::read_hu(j.volume);
            const label_map labels = io::read_labels(j.labels);
            require_compatible(v.grid(), labels.grid(), "calibrate");
            calibration_model model;
            if (s.method == "manual") {
                model = manual_roi_calibration(v, roi_from_labels(labels, s.roi_radius));
            } else {
                const auto eroded = erode_labels(labels, s.erode);
                model = fit_calibration(region_statistics(v, eroded), phantom_densities, stat);
            }
            model.case_id = j.id;
            detail::ensure_dir(j.out_dir);
            write_model(model, j.out_dir / (j.id + ".model"));
            detail::write_regression_outputs(model, j.out_dir, j.id);
            io.result(j.id + " slope=" + text::format_number(model.slope) +
                      " intercept=" + text::format_number(model.intercept) + " r=" + text::format_number(model.r));
        } catch (const error& e) {
            io.result(j.id + ": failed: " + e.what());
            status.record(exit_code_for(e.kind()));
        }
    }
    return status.code;
}

// ---------------------------------------------------------------------------
// evaluate

inline int cmd_evaluate(const global_settings& g, const evaluate_settings& s, const detail::console& io)
{
    if (g.out.empty())
        throw error(error_kind::config, "evaluate: --out is required");
    const bool single = !s.pred.empty();
    if (single == !s.manifest.empty())
        throw error(error_kind::config, "evaluate: give exactly one of --pred or --manifest");
    if (single && (s.ref.empty() || s.volume.empty()))
        throw error(error_kind::config, "evaluate: --pred needs --ref and --volume");
    if (!single && s.pred_dir.empty())
        throw error(error_kind::config, "evaluate: --manifest needs --pred-dir");
    if (s.erode < 0)
        throw error(error_kind::config, "evaluate: --erode must be >= 0");
    if (s.crossval == 1)
        throw error(error_kind::config, "evaluate: --crossval needs at least 2 folds");

    struct job {
        std::string id, site;
        fs::path volume, pred, ref;
    };
    std::vector<job> jobs;
    if (single) {
        jobs.push_back({s.case_id, s.site, s.volume, s.pred, s.ref});
    } else {
        const auto m = synth::read_manifest(s.manifest);
        for (const auto& e : m.entries)
            jobs.push_back({e.case_id, e.site, m.volume_file(e),
                            fs::path(s.pred_dir) / (e.case_id + "_pred.mhd"), m.label_file(e)});
    }

    std::optional<metrics::fold_plan> plan;
    if (s.crossval >= 2) {
        std::vector<metrics::site_cases> sites;
        for (const auto& j : jobs) {
            auto it = std::find_if(sites.begin(), sites.end(), [&](const auto& sc) { return sc.site == j.site; });
            if (it == sites.end()) {
                sites.push_back({j.site, {}});
                it = sites.end() - 1;
            }
            it->case_ids.push_back(j.id);
        }
        plan = metrics::crossval_split(sites, s.crossval, g.seed);
    }
    detail::ensure_dir(g.out);

    std::vector<metrics::metrics_report> reports;
    detail::batch_status status;
    for (const auto& j : jobs) {
        try {
            const hu_volume v = io::read_hu(j.volume);
            const label_map pred = io::read_labels(j.pred);
            const label_map ref = io::read_labels(j.ref);
            reports.push_back(metrics::evaluate_case(v, pred, ref, s.erode, j.id, j.site));
            const auto& r = reports.back();
            io.info(j.id + ": dice_fg=" + text::format_fixed(r.pooled_dice, 4));
        } catch (const error& e) {
            io.result(j.id + ": failed: " + e.what());
            status.record(exit_code_for(e.kind()));
        }
    }

    {
        std::ofstream csv(fs::path(g.out) / "metrics.csv", std::ios::trunc);
        if (!csv)
            throw error(error_kind::io, "cannot write metrics.csv");
        metrics::write_metrics_csv(reports, csv);
    }
    auto rows = metrics::aggregate_by_site(reports);
    if (plan) {
        std::ofstream folds(fs::path(g.out) / "folds.tsv", std::ios::trunc);
        if (!folds)
            throw error(error_kind::io, "cannot write folds.tsv");
        metrics::write_fold_plan(*plan, folds);
        for (std::size_t f = 0; f < plan->folds.size(); ++f) {
            std::vector<metrics::metrics_report> subset;
            for (const auto& m : plan->folds[f].validation)
                for (const auto& r : reports)
                    if (r.case_id == m.case_id)
                        subset.push_back(r);
            const auto fold_rows = metrics::aggregate_report(subset, "fold:" + std::to_string(f + 1));
            rows.insert(rows.end(), fold_rows.begin(), fold_rows.end());
        }
    }
    {
        std::ofstream csv(fs::path(g.out) / "summary.csv", std::ios::trunc);
        if (!csv)
            throw error(error_kind::io, "cannot write summary.csv");
        metrics::write_summary_csv(rows, csv);
    }
    for (const auto& r : rows)
        io.result(r.metric + " [" + r.scope + "]: " + text::format_fixed(r.median, 4) + " (" +
                  text::format_fixed(r.iqr, 4) + ")");
    return status.code;
}

// ---------------------------------------------------------------------------
// compare

namespace detail {

inline std::vector<calibration_model> load_models(const fs::path& dir)
{
    if (!fs::is_directory(dir))
        throw error(error_kind::config, "not a directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".model")
            files.push_back(entry.path());
    if (files.empty())
        throw error(error_kind::config, "no .model records in " + dir.string());
    std::sort(files.begin(), files.end());
    std::vector<calibration_model> out;
    for (const auto& f : files)
        out.push_back(read_model(f));
    return out;
}

} // namespace detail

inline int cmd_compare(const global_settings& g, const compare_settings& s, const detail::console& io)
{
    if (g.out.empty())
        throw error(error_kind::config, "compare: --out is required");
    if (s.site_a.empty() || s.site_b.empty())
        throw error(error_kind::config, "compare: --site-a and --site-b are required");
    if (!(s.alpha > 0.0 && s.alpha < 1.0))
        throw error(error_kind::config, "compare: --alpha must be in (0, 1)");
    const auto [lo, hi] = detail::parse_range(s.range);
    const auto a = detail::load_models(s.site_a);
    const auto b = detail::load_models(s.site_b);
    const auto cmp = compare_models(a, b, lo, hi, s.alpha);

    detail::ensure_dir(g.out);
    const fs::path out = g.out;
    {
        std::ofstream csv(out / "comparison.csv", std::ios::trunc);
        if (!csv)
            throw error(error_kind::io, "cannot write comparison.csv");
        write_comparison_csv(cmp, csv);
    }
    {
        std::ofstream csv(out / "summary_table.csv", std::ios::trunc);
        if (!csv)
            throw error(error_kind::io, "cannot write summary_table.csv");
        csv << "hu,median_a,median_b,diff,p_adj,significant\n";
        for (const auto& r : cmp.summary_table())
            csv << r.hu << ',' << text::format_number(r.a.median) << ',' << text::format_number(r.b.median)
                << ',' << text::format_number(r.diff) << ',' << text::format_number(r.p_adj) << ','
                << (r.significant ? 1 : 0) << '\n';
    }

    svg::chart c;
    c.title = "Density from each site's calibration models";
    c.x_label = "Radiodensity (HU)";
    c.y_label = "Density (mg/cm3)";
    svg::series ma{"site A median", {}, "#d62728", false, false}, mb{"site B median", {}, "#1f77b4", false, false};
    svg::series la{"", {}, "#d62728", false, true}, ua{"", {}, "#d62728", false, true};
    svg::series lb{"", {}, "#1f77b4", false, true}, ub{"", {}, "#1f77b4", false, true};
    for (const auto& r : cmp.rows) {
        ma.points.emplace_back(r.hu, r.a.median);
        mb.points.emplace_back(r.hu, r.b.median);
        la.points.emplace_back(r.hu, r.a.q25);
        ua.points.emplace_back(r.hu, r.a.q75);
        lb.points.emplace_back(r.hu, r.b.q25);
        ub.points.emplace_back(r.hu, r.b.q75);
    }
    c.data = {ma, mb, la, ua, lb, ub};
    svg::write(c, (out / "comparison.svg").string());

    for (const auto& r : cmp.summary_table())
        io.result("HU " + std::to_string(r.hu) + ": A " + text::format_fixed(r.a.median, 1) + ", B " +
                  text::format_fixed(r.b.median, 1) + ", difference " + text::format_fixed(r.diff, 1) +
                  " mg/cm3" + (r.significant ? " (significant)" : ""));
    const auto ranges = cmp.significant_ranges();
    if (ranges.empty()) {
        io.result("no significant HU");
    } else {
        std::string line = "significant HU ranges:";
        for (const auto& [from, to] : ranges)
            line += " [" + std::to_string(from) + ", " + std::to_string(to) + "]";
        io.result(line);
    }
    return ok;
}

// ---------------------------------------------------------------------------
// Entry point

namespace detail {

/// Fills options not given on the command line from the config file.
inline void apply_config(CLI::App& app, const text::key_values& kv, std::set<std::string>& known)
{
    for (CLI::Option* opt : app.get_options()) {
        const std::string name = opt->get_single_name();
        if (name.empty() || name == "help" || name == "config")
            continue;
        known.insert(name);
        if (opt->count() > 0)
            continue;
        if (const auto* v = kv.find(name)) {
            if (opt->get_type_size() == 0)
                opt->add_result(*v == "true" || *v == "1" || *v == "True" ? "true" : "false");
            else
                opt->add_result(*v);
            opt->run_callback();
        }
    }
}

} // namespace detail

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    CLI::App app{"Calibration phantom segmentation and HU-to-density calibration toolkit", "qct"};
    app.require_subcommand(1);
    app.fallthrough();

    global_settings g;
    app.add_option("--config", g.config_path, "key = value configuration file (flags win)");
    app.add_option("--seed", g.seed, "random seed");
    app.add_option("--out", g.out, "output directory");
    app.add_flag("--quiet", g.quiet, "only print results");

    gen_settings gs;
    auto* gen = app.add_subcommand("gen", "generate a synthetic multi-site dataset");
    gen->add_option("--sites", gs.sites, "cases per site, e.g. A:20,B:20");
    gen->add_option("--noise-sd", gs.noise_sd, "override noise sd (HU) for all sites");
    gen->add_option("--blur-sd", gs.blur_sd, "override blur sd (mm) for all sites");

    segment_settings ss;
    auto* seg = app.add_subcommand("segment", "segment the phantom regions");
    seg->add_option("--input", ss.input, "HU volume (.mhd)");
    seg->add_option("--manifest", ss.manifest, "dataset manifest for batch mode");
    seg->add_option("--backend", ss.backend, "classical or mask");
    seg->add_option("--mask", ss.mask, "mask file (single) or directory of <case>_mask.mhd (batch)");

    calibrate_settings cs;
    auto* cal = app.add_subcommand("calibrate", "fit HU-to-density calibration models");
    cal->add_option("--volume", cs.volume, "HU volume (.mhd)");
    cal->add_option("--labels", cs.labels, "label map (.mhd)");
    cal->add_option("--manifest", cs.manifest, "dataset manifest for batch mode");
    cal->add_option("--labels-dir", cs.labels_dir, "directory of <case>_pred.mhd label maps");
    cal->add_flag("--use-gt", cs.use_gt, "use the manifest's ground-truth label maps");
    cal->add_option("--case-id", cs.case_id, "case id for single mode");
    cal->add_option("--erode", cs.erode, "erosion disk radius in pixels");
    cal->add_option("--stat", cs.stat, "mean or median");
    cal->add_option("--method", cs.method, "auto (segmented regions) or manual (three-slice ROIs)");
    cal->add_option("--roi-radius", cs.roi_radius, "manual ROI circle radius (mm)");

    evaluate_settings es;
    auto* ev = app.add_subcommand("evaluate", "segmentation accuracy against reference label maps");
    ev->add_option("--pred", es.pred, "predicted label map");
    ev->add_option("--ref", es.ref, "reference label map");
    ev->add_option("--volume", es.volume, "HU volume");
    ev->add_option("--manifest", es.manifest, "dataset manifest for batch mode");
    ev->add_option("--pred-dir", es.pred_dir, "directory of <case>_pred.mhd label maps");
    ev->add_option("--case-id", es.case_id, "case id for single mode");
    ev->add_option("--site", es.site, "site tag for single mode");
    ev->add_option("--erode", es.erode, "erosion radius before the HU comparison");
    ev->add_option("--crossval", es.crossval, "number of cross-validation folds");

    compare_settings cps;
    auto* cmp = app.add_subcommand("compare", "compare two sites' calibration models per HU");
    cmp->add_option("--site-a", cps.site_a, "directory of site A .model records");
    cmp->add_option("--site-b", cps.site_b, "directory of site B .model records");
    cmp->add_option("--range", cps.range, "HU range lo:hi");
    cmp->add_option("--alpha", cps.alpha, "significance level");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return ok;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return ok;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n" << app.help();
        return config_error;
    }

    detail::console io{out, err, false};
    try {
        if (!g.config_path.empty()) {
            g.config = text::read_key_values(g.config_path, error_kind::config);
            std::set<std::string> known = detail::template_keys();
            detail::apply_config(app, g.config, known);
            CLI::App* sub = app.get_subcommands().front();
            detail::apply_config(*sub, g.config, known);
            for (CLI::App* other : app.get_subcommands({}))
                if (other != sub)
                    for (CLI::Option* opt : other->get_options())
                        known.insert(opt->get_single_name());
            for (const auto& [key, value] : g.config.entries)
                if (!known.count(key))
                    throw error(error_kind::config, "unknown config key '" + key + "'");
        }
        io.quiet = g.quiet;

        CLI::App* sub = app.get_subcommands().front();
        const std::string name = sub->get_name();
        if (name == "gen")
            return cmd_gen(g, gs, io);
        if (name == "segment")
            return cmd_segment(g, ss, io);
        if (name == "calibrate")
            return cmd_calibrate(g, cs, io);
        if (name == "evaluate")
            return cmd_evaluate(g, es, io);
        return cmd_compare(g, cps, io);
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return config_error;
    } catch (const error& e) {
        err << "error: " << e.what() << "\n";
        if (e.kind() == error_kind::config)
            err << app.get_subcommands().front()->help();
        return exit_code_for(e.kind());
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return io_error;
    }
}

} // namespace qct::cli
