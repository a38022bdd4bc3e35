#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "qct/metrics.hpp"
#include "qct/morphology.hpp"

using namespace qct;

namespace {

image_grid grid_of(std::size_t x, std::size_t y, std::size_t z, vec3 sp = {1, 1, 1})
{
    image_grid g;
    g.dims = {x, y, z};
    g.spacing = sp;
    return g;
}

metrics::metrics_report report_with(const std::string& id, const std::string& site, double dice_value)
{
    metrics::metrics_report r;
    r.case_id = id;
    r.site = site;
    for (auto& l : r.labels) {
        l.dice = dice_value;
        l.asd_mm = 1.0 - dice_value;
        l.abs_hu_diff = 0.5;
    }
    r.pooled_dice = dice_value;
    return r;
}

} // namespace

TEST(Dice, Examples)
{
    const auto g = grid_of(4, 4, 1);
    label_map a(g, 0), b(g, 0);
    EXPECT_EQ(metrics::dice(a, b), 1.0);
    a.at(0, 0, 0) = a.at(1, 0, 0) = a.at(0, 1, 0) = a.at(1, 1, 0) = 1;
    EXPECT_EQ(metrics::dice(a, a), 1.0);
    EXPECT_EQ(metrics::dice(a, b), 0.0);
    b.at(1, 0, 0) = b.at(2, 0, 0) = b.at(1, 1, 0) = b.at(2, 1, 0) = 1;
    EXPECT_EQ(metrics::dice(a, b), 0.5);
    label_map far(g, 0);
    far.at(3, 3, 0) = 1;
    EXPECT_EQ(metrics::dice(a, far), 0.0);
    EXPECT_THROW(metrics::dice(a, label_map(grid_of(4, 4, 2), 0)), error);
}

TEST(Asd, Examples)
{
    const auto g = grid_of(5, 5, 5, {0.8, 0.8, 1.0});
    label_map a(g, 0), b(g, 0);
    a.at(2, 2, 2) = 1;
    b.at(3, 2, 2) = 1;
    EXPECT_NEAR(metrics::asd(a, b), 0.8, 1e-12);
    EXPECT_EQ(metrics::asd(a, a), 0.0);
    label_map empty(g, 0);
    EXPECT_THROW(metrics::asd(a, empty), error);
}

TEST(Surface, FaceNeighbourRuleWithGridBorder)
{
    label_map full(grid_of(3, 3, 3), 1);
    // Only the center voxel has all six neighbours inside.
    EXPECT_EQ(metrics::surface_voxels(full).size(), 26u);
    label_map cube(grid_of(5, 5, 5), 0);
    for (std::size_t z = 1; z < 4; ++z)
        for (std::size_t y = 1; y < 4; ++y)
            for (std::size_t x = 1; x < 4; ++x)
                cube.at(x, y, z) = 1;
    EXPECT_EQ(metrics::surface_voxels(cube).size(), 26u);
}

TEST(MetricOracle, DiceAndAsdOnRandomMasks)
{
    std::mt19937_64 gen(404);
    std::uniform_real_distribution<double> sp(0.3, 2.5);
    for (int t = 0; t < 100; ++t) {
        const auto g = grid_of(16, 16, 16, {sp(gen), sp(gen), sp(gen)});
        label_map a, b;
        if (t % 2 == 0) {
            a = oracle::random_blobs(g, gen, 1 + t % 5);
            b = oracle::random_blobs(g, gen, 1 + (t / 2) % 5);
        } else {
            a = oracle::random_labels(g, gen, 0.05 + 0.009 * t, 1);
            b = oracle::random_labels(g, gen, 0.5 - 0.004 * t, 1);
        }
        if (count_nonzero(a) == 0)
            a.at(0, 0, 0) = 1;
        if (count_nonzero(b) == 0)
            b.at(15, 15, 15) = 1;
        EXPECT_EQ(metrics::dice(a, b), oracle::dice(a, b)) << t;
        EXPECT_NEAR(metrics::asd(a, b), oracle::asd(a, b, g.spacing), 1e-9) << t;
    }
}

TEST(MetricProperty, DiceSymmetryAndRange)
{
    std::mt19937_64 gen(405);
    std::uniform_real_distribution<double> fill(0.0, 1.0);
    const auto g = grid_of(8, 8, 8);
    for (int t = 0; t < 1000; ++t) {
        const auto a = oracle::random_labels(g, gen, fill(gen), 5);
        const auto b = oracle::random_labels(g, gen, fill(gen), 5);
        const double d = metrics::dice(a, b);
        EXPECT_EQ(d, metrics::dice(b, a));
        EXPECT_GE(d, 0.0);
        EXPECT_LE(d, 1.0);
        EXPECT_EQ(metrics::dice(a, a), 1.0);
    }
}

TEST(MetricProperty, AsdSymmetryScaleAndIdentity)
{
    std::mt19937_64 gen(406);
    for (int t = 0; t < 50; ++t) {
        const auto g = grid_of(12, 12, 12, {0.7, 0.9, 1.3});
        auto a = oracle::random_blobs(g, gen, 3), b = oracle::random_blobs(g, gen, 3);
        if (count_nonzero(a) == 0 || count_nonzero(b) == 0)
            continue;
        const double d = metrics::asd(a, b);
        EXPECT_NEAR(d, metrics::asd(b, a), 1e-12);
        const double k = 2.5;
        EXPECT_NEAR(metrics::asd(a, b, {0.7 * k, 0.9 * k, 1.3 * k}), k * d, 1e-9);
        EXPECT_GE(d, 0.0);
        if (metrics::dice(a, b) == 1.0) {
            EXPECT_EQ(d, 0.0);
        }
        EXPECT_EQ(metrics::asd(a, a), 0.0);
    }
}

TEST(RegionHu, Examples)
{
    const auto g = grid_of(10, 1, 1);
    std::vector<std::int16_t> hu(10, 0);
    hu[9] = 10;
    hu_volume v(g, hu);
    label_map a(g, std::vector<std::uint8_t>{1, 1, 1, 1, 1, 1, 1, 1, 1, 0});
    label_map b(g, std::vector<std::uint8_t>{1, 1, 1, 1, 1, 1, 1, 1, 1, 1});
    // Only label 1 is compared here; give the others a voxel via a wider map.
    const auto g2 = grid_of(14, 1, 1);
    std::vector<std::int16_t> hu2(hu);
    hu2.insert(hu2.end(), {5, 5, 5, 5});
    std::vector<std::uint8_t> la(a.data()), lb(b.data());
    la.insert(la.end(), {2, 3, 4, 5});
    lb.insert(lb.end(), {2, 3, 4, 5});
    const auto d = metrics::region_hu_abs_diff(hu_volume(g2, hu2), label_map(g2, la), label_map(g2, lb));
    EXPECT_NEAR(d[0], 1.0, 1e-12);
    for (int c = 1; c < 5; ++c)
        EXPECT_EQ(d[c], 0.0);
    const auto same = metrics::region_hu_abs_diff(hu_volume(g2, hu2), label_map(g2, la), label_map(g2, la));
    for (const double x : same)
        EXPECT_EQ(x, 0.0);
    EXPECT_THROW(metrics::region_hu_abs_diff(v, a, b), error);
}

TEST(RegionHu, ErodedConstantRegionHasNoDifference)
{
    const auto g = grid_of(40, 40, 1);
    label_map m(g, 0);
    for (std::size_t y = 0; y < 40; ++y)
        for (std::size_t x = 0; x < 40; ++x)
            m.at(x, y, 0) = static_cast<std::uint8_t>(1 + (x / 8));
    hu_volume v(g, std::int16_t{0});
    for (std::size_t i = 0; i < v.size(); ++i)
        v[i] = static_cast<std::int16_t>(m[i] * 17);
    const auto d = metrics::region_hu_abs_diff(v, m, erode_labels(m, 1));
    for (const double x : d)
        EXPECT_EQ(x, 0.0);
}

TEST(Evaluate, IdenticalMapsArePerfect)
{
    const auto g = grid_of(40, 40, 2);
    label_map m(g, 0);
    for (std::size_t z = 0; z < 2; ++z)
        for (std::size_t y = 5; y < 35; ++y)
            for (std::size_t x = 0; x < 40; ++x)
                m.at(x, y, z) = static_cast<std::uint8_t>(1 + (x / 8));
    hu_volume v(g, std::int16_t{3});
    const auto r = metrics::evaluate_case(v, m, m, 1, "c", "A");
    for (const auto& l : r.labels) {
        EXPECT_EQ(l.dice, 1.0);
        EXPECT_EQ(l.asd_mm, 0.0);
        EXPECT_EQ(l.abs_hu_diff, 0.0);
    }
    EXPECT_EQ(r.pooled_dice, 1.0);
    std::ostringstream csv;
    metrics::write_metrics_csv({r}, csv);
    EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')), "case_id,site,label,dice,asd_mm,abs_hu_diff");
    EXPECT_NE(csv.str().find("c,A,1,1,0,0\n"), std::string::npos);
}

TEST(Evaluate, GridMismatch)
{
    label_map a(grid_of(4, 4, 4), 1), b(grid_of(4, 4, 5), 1);
    hu_volume v(grid_of(4, 4, 4), std::int16_t{0});
    try {
        metrics::evaluate_case(v, a, b, 0);
        FAIL();
    } catch (const error& e) {
        EXPECT_EQ(e.kind(), error_kind::grid_mismatch);
    }
}

TEST(Aggregate, MedianAndIqr)
{
    std::vector<metrics::metrics_report> reports{report_with("a", "A", 0.7)};
    auto rows = metrics::aggregate_report(reports, "overall");
    const auto find = [&](const std::string& metric) {
        for (const auto& r : rows)
            if (r.metric == metric)
                return r;
        return metrics::summary_row{};
    };
    EXPECT_DOUBLE_EQ(find("dice").median, 0.7);
    EXPECT_EQ(find("dice").iqr, 0.0);

    // Per-label values 1, 2, 3, 4 spread over four reports of one label each.
    reports.clear();
    for (int i = 1; i <= 4; ++i) {
        metrics::metrics_report r;
        r.case_id = std::to_string(i);
        r.site = "A";
        r.labels[0].dice = i;
        reports.push_back(r);
    }
    rows = metrics::aggregate_report(reports, "overall");
    EXPECT_DOUBLE_EQ(find("dice").median, 2.5);
    EXPECT_DOUBLE_EQ(find("dice").iqr, 1.5);
}

TEST(Aggregate, PerSiteScopes)
{
    std::vector<metrics::metrics_report> reports{report_with("a1", "A", 0.9), report_with("a2", "A", 0.8),
                                                 report_with("b1", "B", 0.6)};
    const auto rows = metrics::aggregate_by_site(reports);
    std::set<std::string> scopes;
    for (const auto& r : rows)
        scopes.insert(r.scope);
    EXPECT_EQ(scopes, (std::set<std::string>{"overall", "site:A", "site:B"}));
    for (const auto& r : rows)
        if (r.metric == "dice" && r.scope == "site:A") {
            EXPECT_DOUBLE_EQ(r.median, 0.85);
        }
    std::ostringstream csv;
    metrics::write_summary_csv(rows, csv);
    EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')), "metric,scope,median,iqr");

    EXPECT_TRUE(metrics::aggregate_report({}, "site:C").empty());
}

TEST(CrossVal, TwentyPerSiteFourFolds)
{
    std::vector<metrics::site_cases> sites(2);
    sites[0].site = "A";
    sites[1].site = "B";
    for (int i = 0; i < 20; ++i) {
        sites[0].case_ids.push_back("A" + std::to_string(i));
        sites[1].case_ids.push_back("B" + std::to_string(i));
    }
    const auto plan = metrics::crossval_split(sites, 4, 99);
    ASSERT_EQ(plan.folds.size(), 4u);
    for (const auto& f : plan.folds) {
        EXPECT_EQ(f.training.size(), 30u);
        EXPECT_EQ(f.validation.size(), 10u);
        int a = 0;
        for (const auto& m : f.validation)
            a += m.site == "A";
        EXPECT_EQ(a, 5);
    }
    const auto again = metrics::crossval_split(sites, 4, 99);
    for (std::size_t f = 0; f < 4; ++f) {
        EXPECT_EQ(plan.folds[f].validation, again.folds[f].validation);
        EXPECT_EQ(plan.folds[f].training, again.folds[f].training);
    }
    EXPECT_THROW(metrics::crossval_split(sites, 1, 99), error);
    EXPECT_THROW(metrics::crossval_split(sites, 3, 99), error);
}

TEST(CrossValProperty, ValidationSetsPartitionCases)
{
    std::mt19937_64 gen(7);
    for (int t = 0; t < 100; ++t) {
        const std::size_t k = 2 + gen() % 4;
        std::vector<metrics::site_cases> sites(2);
        sites[0].site = "A";
        sites[1].site = "B";
        const std::size_t na = k * (1 + gen() % 4), nb = k * (1 + gen() % 4);
        for (std::size_t i = 0; i < na; ++i)
            sites[0].case_ids.push_back("A" + std::to_string(i));
        for (std::size_t i = 0; i < nb; ++i)
            sites[1].case_ids.push_back("B" + std::to_string(i));
        const auto plan = metrics::crossval_split(sites, k, gen());
        std::multiset<std::string> validated;
        for (const auto& f : plan.folds) {
            std::set<std::string> v, tr;
            for (const auto& m : f.validation) {
                validated.insert(m.case_id);
                v.insert(m.case_id);
                EXPECT_EQ(m.case_id[0], m.site[0]);
            }
            for (const auto& m : f.training)
                tr.insert(m.case_id);
            for (const auto& id : v)
                EXPECT_EQ(tr.count(id), 0u);
            EXPECT_EQ(v.size() + tr.size(), sites[0].case_ids.size() + sites[1].case_ids.size());
        }
        for (const auto& s : sites)
            for (const auto& id : s.case_ids)
                EXPECT_EQ(validated.count(id), 1u);
    }
}
