#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "qct/stats.hpp"

using namespace qct;

namespace {

const std::vector<double> n60{
    -0.801931, -1.324359, -0.248362, 0.420445,  1.136047,  0.109706,  -0.552647, -0.78478,  0.748746,
    1.634783,  0.272769,  -1.233329, -0.958265, 1.600019,  0.202882,  -1.732135, -0.083696, -1.163226,
    -0.629288, -0.488006, -0.713313, 0.553378,  -0.063086, -0.589431, 0.409638,  0.829855,  -1.643023,
    -0.25673,  -0.980747, -0.173155, -1.289419, 0.02069,   -0.037886, -0.304338, -1.047927, -0.39619,
    -1.091329, -1.355209, 0.224786,  -1.10935,  1.170296,  0.716588,  -1.997817, 0.272129,  -1.101717,
    0.033057,  0.043632,  -1.98843,  -0.233423, -0.25579,  0.962001,  -1.181447, 0.738042,  -1.098973,
    -0.331291, -0.840473, 1.448731,  0.568213,  2.431733,  0.641916};

} // namespace

TEST(Quantiles, LinearInterpolation)
{
    const auto q = stats::compute_quartiles({4, 1, 3, 2});
    EXPECT_DOUBLE_EQ(q.median, 2.5);
    EXPECT_DOUBLE_EQ(q.q25, 1.75);
    EXPECT_DOUBLE_EQ(q.q75, 3.25);
    EXPECT_DOUBLE_EQ(q.iqr(), 1.5);
    EXPECT_EQ(stats::median({7}), 7.0);
    EXPECT_THROW(stats::median({}), error);
}

TEST(MannWhitney, Examples)
{
    const std::vector<double> x{1, 2}, y{3, 4};
    const auto r = stats::mann_whitney_u(x, y);
    EXPECT_EQ(r.statistic, 0.0);
    EXPECT_NEAR(r.p_two_sided, 1.0 / 3.0, 1e-15);
    EXPECT_EQ(r.how, stats::method::exact);
    EXPECT_EQ(stats::mann_whitney_u(y, x).statistic, 4.0);
    EXPECT_THROW(stats::mann_whitney_u(x, std::vector<double>{}), error);
}

TEST(MannWhitney, ReferenceValues)
{
    const std::vector<double> x{1, 2, 5}, y{3, 4, 6, 7};
    auto r = stats::mann_whitney_u(x, y);
    EXPECT_EQ(r.statistic, 2.0);
    EXPECT_NEAR(r.p_two_sided, 0.22857142857142856, 1e-12);

    const std::vector<double> tx{1, 2, 2, 3, 4, 4, 4, 5, 6, 7, 8}, ty{3, 3, 5, 6, 6, 7, 9, 9, 10, 11, 12, 12};
    r = stats::mann_whitney_u(tx, ty);
    EXPECT_EQ(r.statistic, 25.0);
    EXPECT_EQ(r.how, stats::method::normal_approximation);
    EXPECT_NEAR(r.p_two_sided, 0.012309786804712026, 1e-9);

    std::vector<double> lx(12), ly(12);
    std::iota(lx.begin(), lx.end(), 1.0);
    std::iota(ly.begin(), ly.end(), 6.5);
    r = stats::mann_whitney_u(lx, ly);
    EXPECT_EQ(r.statistic, 21.0);
    EXPECT_NEAR(r.p_two_sided, 0.003549838634913565, 1e-9);
}

TEST(MannWhitneyOracle, ExactAgainstEnumeration)
{
    std::mt19937_64 gen(11);
    for (int n1 = 1; n1 <= 8; ++n1)
        for (int n2 = 1; n2 <= 8; ++n2)
            for (int t = 0; t < 4; ++t) {
                std::vector<int> ranks(static_cast<std::size_t>(n1 + n2));
                std::iota(ranks.begin(), ranks.end(), 1);
                std::shuffle(ranks.begin(), ranks.end(), gen);
                std::vector<double> x, y;
                std::vector<int> xr(ranks.begin(), ranks.begin() + n1);
                for (int i = 0; i < n1 + n2; ++i)
                    (i < n1 ? x : y).push_back(ranks[static_cast<std::size_t>(i)] * 1.5 - 3.0);
                const auto r = stats::mann_whitney_u(x, y);
                EXPECT_NEAR(r.p_two_sided, oracle::mann_whitney_p(xr, n1, n2), 1e-12) << n1 << ' ' << n2;
            }
}

TEST(MannWhitneyProperty, ComplementAndPermutation)
{
    std::mt19937_64 gen(12);
    std::normal_distribution<double> nd;
    for (int t = 0; t < 300; ++t) {
        std::vector<double> x(1 + gen() % 15), y(1 + gen() % 15);
        for (auto& v : x)
            v = std::round(nd(gen) * 3);
        for (auto& v : y)
            v = std::round(nd(gen) * 3 + 1);
        const auto a = stats::mann_whitney_u(x, y), b = stats::mann_whitney_u(y, x);
        EXPECT_NEAR(a.statistic + b.statistic, static_cast<double>(x.size() * y.size()), 1e-9);
        EXPECT_NEAR(a.p_two_sided, b.p_two_sided, 1e-12);
        EXPECT_GE(a.p_two_sided, 0.0);
        EXPECT_LE(a.p_two_sided, 1.0);
        std::shuffle(x.begin(), x.end(), gen);
        std::shuffle(y.begin(), y.end(), gen);
        const auto c = stats::mann_whitney_u(x, y);
        EXPECT_EQ(c.statistic, a.statistic);
        EXPECT_EQ(c.p_two_sided, a.p_two_sided);
    }
}

TEST(Wilcoxon, Examples)
{
    const std::vector<double> three{1, 2, 3};
    auto r = stats::wilcoxon_signed_rank(three);
    EXPECT_EQ(r.statistic, 0.0);
    EXPECT_DOUBLE_EQ(r.p_two_sided, 0.25);
    r = stats::wilcoxon_signed_rank(std::vector<double>{5});
    EXPECT_DOUBLE_EQ(r.p_two_sided, 1.0);
    r = stats::wilcoxon_signed_rank(std::vector<double>{0, 0, 1, 2, 3});
    EXPECT_EQ(r.n1, 3u);
    EXPECT_DOUBLE_EQ(r.p_two_sided, 0.25);
    EXPECT_THROW(stats::wilcoxon_signed_rank(std::vector<double>{0, 0}), error);
}

TEST(Wilcoxon, ReferenceValues)
{
    const std::vector<double> d{1.5, -2, 3, 4.5, -5, 6, 7, 8.5, 9, 10, -11, 12, 13, 14, 15, 16, 17, -18, 19, 20, 21, 22};
    auto r = stats::wilcoxon_signed_rank(d);
    EXPECT_EQ(r.statistic, 36.0);
    EXPECT_EQ(r.how, stats::method::normal_approximation);
    EXPECT_NEAR(r.p_two_sided, 0.003478937041767551, 1e-9);

    // Tied magnitudes: the exact null counts sign patterns over the average ranks.
    const std::vector<double> tied{1, 2, 2, -3, 4, 4, 5, -6};
    r = stats::wilcoxon_signed_rank(tied);
    EXPECT_EQ(r.statistic, 12.0);
    EXPECT_EQ(r.how, stats::method::exact);
    EXPECT_NEAR(r.p_two_sided, oracle::wilcoxon_p({1, 2.5, 2.5, 4, 5.5, 5.5, 7, 8}, {true, true, true, false, true, true, true, false}),
                1e-15);
}

TEST(WilcoxonOracle, ExactAgainstEnumeration)
{
    std::mt19937_64 gen(13);
    std::uniform_int_distribution<int> mag(1, 6);
    for (int n = 1; n <= 10; ++n)
        for (int t = 0; t < 20; ++t) {
            std::vector<double> d(static_cast<std::size_t>(n));
            for (auto& v : d)
                v = (gen() % 2 ? 1.0 : -1.0) * (t % 2 ? mag(gen) : static_cast<double>(gen() % 1000 + 1) / 7.0);
            std::vector<double> mags(d.size());
            std::transform(d.begin(), d.end(), mags.begin(), [](double v) { return std::abs(v); });
            const auto ranks = stats::average_ranks(mags);
            std::vector<bool> positive(d.size());
            for (std::size_t i = 0; i < d.size(); ++i)
                positive[i] = d[i] > 0;
            const auto r = stats::wilcoxon_signed_rank(d);
            EXPECT_NEAR(r.p_two_sided, oracle::wilcoxon_p(ranks, positive), 1e-12) << n;
        }
}

TEST(WilcoxonProperty, SignFlipAndRange)
{
    std::mt19937_64 gen(14);
    std::normal_distribution<double> nd(0.3, 1.0);
    for (int t = 0; t < 300; ++t) {
        std::vector<double> d(1 + gen() % 30);
        for (auto& v : d)
            v = nd(gen);
        std::vector<double> flipped(d);
        for (auto& v : flipped)
            v = -v;
        const auto a = stats::wilcoxon_signed_rank(d), b = stats::wilcoxon_signed_rank(flipped);
        EXPECT_EQ(a.statistic, b.statistic);
        EXPECT_NEAR(a.p_two_sided, b.p_two_sided, 1e-12);
        EXPECT_GE(a.p_two_sided, 0.0);
        EXPECT_LE(a.p_two_sided, 1.0);
    }
}

TEST(BenjaminiHochberg, Examples)
{
    const auto a = stats::bh_adjust(std::vector<double>{0.01, 0.02, 0.04});
    EXPECT_NEAR(a[0], 0.03, 1e-15);
    EXPECT_NEAR(a[1], 0.03, 1e-15);
    EXPECT_NEAR(a[2], 0.04, 1e-15);
    EXPECT_TRUE(stats::bh_adjust(std::vector<double>{}).empty());
    EXPECT_THROW(stats::bh_adjust(std::vector<double>{0.5, 1.5}), error);
}

TEST(BenjaminiHochbergOracle, RandomVectors)
{
    std::mt19937_64 gen(15);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 1000; ++t) {
        std::vector<double> p(1 + gen() % 40);
        for (auto& v : p)
            v = t % 3 ? u(gen) : std::round(u(gen) * 10) / 10;
        const auto got = stats::bh_adjust(p);
        const auto want = oracle::bh(p);
        for (std::size_t i = 0; i < p.size(); ++i) {
            EXPECT_NEAR(got[i], want[i], 1e-12);
            EXPECT_GE(got[i], p[i]);
            EXPECT_LE(got[i], 1.0);
            for (std::size_t j = 0; j < p.size(); ++j)
                if (p[i] <= p[j]) {
                    EXPECT_LE(got[i], got[j] + 1e-15);
                }
        }
    }
}

TEST(ShapiroWilk, ReferenceValues)
{
    const auto check = [](const std::vector<double>& x, double w, double p) {
        const auto r = stats::shapiro_wilk(x);
        EXPECT_NEAR(r.statistic, w, 1e-6);
        EXPECT_NEAR(r.p_two_sided, p, std::max(1e-6, 1e-3 * p));
    };
    check({2.1, 3.4, 1.9, 5.6, 4.4, 3.3, 2.8, 4.9, 3.7, 4.1}, 0.9786775883672248, 0.9576993391781758);
    check({1, 1, 1, 1, 100}, 0.552181683501241, 0.00013097817774592973);
    check({0.5, 1.2, 3.3, 0.1, 7.8, 2.2, 0.9, 1.7, 4.5, 0.3, 2.8, 1.1, 6.2, 0.8, 1.9, 3.1, 0.4, 2.5, 5.0, 1.4},
          0.8820151556713065, 0.01923575542823734);
    check({3.1, 4.7, 2.2}, 0.9745322245322245, 0.6939039235311406);
    check(n60, 0.9834942660883099, 0.592429451061208);
}

TEST(ShapiroWilk, ThreePointClosedForm)
{
    std::mt19937_64 gen(16);
    std::normal_distribution<double> nd;
    for (int t = 0; t < 200; ++t) {
        std::vector<double> x{nd(gen), nd(gen), nd(gen)};
        const auto r = stats::shapiro_wilk(x);
        EXPECT_NEAR(r.statistic, oracle::shapiro_w3(x), 1e-9);
        EXPECT_GE(r.p_two_sided, 0.0);
        EXPECT_LE(r.p_two_sided, 1.0);
    }
}

TEST(ShapiroWilk, Errors)
{
    EXPECT_THROW(stats::shapiro_wilk(std::vector<double>{1, 2}), error);
    EXPECT_THROW(stats::shapiro_wilk(std::vector<double>{2, 2, 2, 2}), error);
}

TEST(Summarize, ChoosesFormByNormality)
{
    const auto normal = stats::summarize(n60);
    EXPECT_TRUE(normal.normal);
    EXPECT_NE(normal.text.find(" ± "), std::string::npos);
    EXPECT_NEAR(normal.center, stats::mean(n60), 1e-15);

    const auto skewed = stats::summarize(std::vector<double>{1, 1, 1, 1, 100});
    EXPECT_FALSE(skewed.normal);
    EXPECT_EQ(skewed.text, "1.000 (0.000)");

    const auto constant = stats::summarize(std::vector<double>{4, 4, 4});
    EXPECT_FALSE(constant.normal);
    EXPECT_EQ(constant.center, 4.0);
    EXPECT_THROW(stats::summarize(std::vector<double>{1, 2}), error);
}
