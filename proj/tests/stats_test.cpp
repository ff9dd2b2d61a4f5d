#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "nback/rng.hpp"
#include "nback/scoring.hpp"
#include "nback/stats.hpp"
#include "oracles.hpp"

#ifdef NBACK_HAVE_BOOST_MATH
#include <boost/math/special_functions/gamma.hpp>
#endif

namespace {

using namespace nback;

struct KwRow {
  double h;
  double p;
  double eps;
};

// (H, p, epsilon squared) for k = 3 groups of 50 blocks.
const std::vector<KwRow> kPublishedKw = {
    {97.5376, 6.60666e-22, 0.649916}, {3.91569, 0.141162, 0.0130319},
    {99.4143, 2.58493e-22, 0.662683}, {94.9077, 2.46072e-21, 0.632025},
    {84.9206, 3.62842e-19, 0.564086}, {0.63338, 0.728557, -0.00929674},
    {88.4591, 6.18527e-20, 0.588157}, {21.4206, 2.23139e-05, 0.132113},
    {4.06941, 0.130719, 0.0140776},   {7.19739, 0.0273595, 0.0353564},
    {93.9609, 3.95043e-21, 0.625585}, {73.0433, 1.37675e-16, 0.483288},
    {53.6315, 2.25977e-12, 0.351235},
};

// (U, rank-biserial) for 50 vs 50 blocks.
const std::vector<std::pair<double, double>> kPublishedMw = {
    {2451.5, -0.9612}, {2487, -0.9896},   {1566, -0.2528},  {1444.5, -0.1556},
    {1513.5, -0.2108}, {1309, -0.0472},   {2443, -0.9544},  {2473, -0.9784},
    {1778, -0.4224},   {2468.5, -0.9748}, {2460.5, -0.9684}, {1404, -0.1232},
    {2392, -0.9136},   {2415.5, -0.9324}, {1310, -0.048},   {1250, 0},
    {1142, 0.0864},    {1159, 0.0728},    {2410, -0.928},   {2431, -0.9448},
    {1472.5, -0.178},  {1804, -0.4432},   {1847, -0.4776},  {1353, -0.0824},
    {1363, -0.0904},   {1512, -0.2096},   {1469, -0.1752},  {1547, -0.2376},
    {1204.5, 0.0364},  {881.5, 0.2948},   {2442.5, -0.954}, {2470.5, -0.9764},
    {1477, -0.1816},   {2298.5, -0.8388}, {2325.5, -0.8604}, {1477.5, -0.182},
    {1897, -0.5176},   {2209, -0.7672},   {1863, -0.4904},
};

TEST(Stats, PublishedKruskalRowsAreConsistent) {
  for (const KwRow& r : kPublishedKw) {
    EXPECT_NEAR(chi_squared_sf(r.h, 2) / r.p, 1.0, 1e-4) << r.h;
    EXPECT_NEAR(epsilon_squared(r.h, 3, 150), r.eps, 1e-5) << r.h;
  }
}

TEST(Stats, PublishedRankBiserialRows) {
  for (const auto& [u, r] : kPublishedMw) {
    EXPECT_NEAR(rank_biserial(u, 50, 50), r, 1e-12) << u;
  }
}

TEST(Stats, EpsilonSquaredDegenerate) {
  EXPECT_TRUE(std::isnan(epsilon_squared(1.0, 3, 3)));
}

TEST(Stats, RanksWithTies) {
  const std::vector<double> v{3, 1, 4, 1, 5, 9, 2, 6, 5};
  const RankResult r = rank_with_ties(v);
  EXPECT_EQ(r.ranks, (std::vector<double>{4, 1.5, 5, 1.5, 6.5, 9, 3, 8, 6.5}));
  EXPECT_EQ(r.tie_sizes, (std::vector<std::size_t>{2, 2}));
  EXPECT_DOUBLE_EQ(tie_term(r.tie_sizes), 12.0);
}

TEST(Stats, KruskalTextbookExample) {
  const std::vector<std::vector<double>> g{{1, 2, 3}, {4, 5, 6}, {7, 8, 9}};
  const KruskalResult r = kruskal_wallis(g);
  EXPECT_NEAR(r.h, 7.2, 1e-12);
  EXPECT_NEAR(r.p, std::exp(-3.6), 1e-14);
  EXPECT_NEAR(r.epsilon_sq, (7.2 - 2) / 6, 1e-12);
  EXPECT_EQ(r.k, 3u);
  EXPECT_EQ(r.total, 9u);
}

TEST(Stats, KruskalAllIdenticalValues) {
  const std::vector<std::vector<double>> g{{4.65, 4.65}, {4.65, 4.65, 4.65}};
  const KruskalResult r = kruskal_wallis(g);
  EXPECT_EQ(r.h, 0.0);
  EXPECT_EQ(r.p, 1.0);
}

TEST(Stats, KruskalRejectsBadInput) {
  const std::vector<std::vector<double>> one{{1, 2}};
  EXPECT_THROW(kruskal_wallis(one), std::invalid_argument);
  const std::vector<std::vector<double>> empty{{1, 2}, {}};
  EXPECT_THROW(kruskal_wallis(empty), std::invalid_argument);
}

// Values on a coarse lattice so ties are common.
std::vector<double> random_sample(std::mt19937_64& gen, std::size_t size) {
  std::uniform_int_distribution<int> v(0, 6);
  std::vector<double> out(size);
  for (auto& x : out) x = v(gen) * 0.5;
  return out;
}

TEST(Stats, KruskalMatchesNaiveImplementation) {
  std::mt19937_64 gen(1);
  std::uniform_int_distribution<int> k_dist(2, 5), n_dist(1, 12);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<std::vector<double>> groups(static_cast<std::size_t>(k_dist(gen)));
    for (auto& g : groups) g = random_sample(gen, static_cast<std::size_t>(n_dist(gen)));
    EXPECT_NEAR(kruskal_wallis(groups).h, oracle::kruskal_h(groups), 1e-10);
  }
}

TEST(Stats, KruskalIsInvariantUnderMonotoneTransforms) {
  std::mt19937_64 gen(2);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::vector<double>> groups(3), moved(3);
    for (std::size_t g = 0; g < 3; ++g) {
      groups[g] = random_sample(gen, 10);
      for (double x : groups[g]) moved[g].push_back(std::exp(x) * 7 - 2);
    }
    EXPECT_NEAR(kruskal_wallis(groups).h, kruskal_wallis(moved).h, 1e-9);
  }
}

TEST(Stats, TwoGroupKruskalEqualsUncorrectedMannWhitney) {
  std::mt19937_64 gen(3);
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = random_sample(gen, 8);
    const auto b = random_sample(gen, 11);
    const std::vector<std::vector<double>> groups{a, b};
    const KruskalResult kw = kruskal_wallis(groups);
    const MannWhitneyResult mw = mann_whitney(a, b, {.continuity_correction = false});
    if (kw.h == 0.0) continue;
    EXPECT_NEAR(kw.p, mw.p_raw, 1e-10);
  }
}

TEST(Stats, MannWhitneyUMatchesPairCount) {
  std::mt19937_64 gen(4);
  std::uniform_int_distribution<int> size(1, 6);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto a = random_sample(gen, static_cast<std::size_t>(size(gen)));
    const auto b = random_sample(gen, static_cast<std::size_t>(size(gen)));
    const MannWhitneyResult r = mann_whitney(a, b);
    EXPECT_DOUBLE_EQ(r.u, oracle::pair_count_u(a, b));
    EXPECT_DOUBLE_EQ(r.rank_biserial,
                     1 - 2 * r.u / static_cast<double>(a.size() * b.size()));
  }
}

TEST(Stats, MannWhitneyNoTiesNormalApproximation) {
  const std::vector<double> a{1, 2, 3, 4, 5};
  const std::vector<double> b{6, 7, 8, 9, 10};
  const MannWhitneyResult r = mann_whitney(a, b);
  EXPECT_EQ(r.u, 0.0);
  EXPECT_EQ(r.rank_biserial, 1.0);
  // mean 12.5, variance 25*11/12, continuity 0.5
  const double z = (12.5 - 0.5) / std::sqrt(25.0 * 11 / 12);
  EXPECT_NEAR(r.p_raw, std::erfc(z / std::sqrt(2.0)), 1e-14);
  EXPECT_EQ(r.p_bonferroni, r.p_raw);
}

TEST(Stats, MannWhitneyIdenticalSamples) {
  const std::vector<double> a{1, 1, 1};
  const MannWhitneyResult r = mann_whitney(a, a);
  EXPECT_EQ(r.u, 4.5);
  EXPECT_EQ(r.p_raw, 1.0);
  EXPECT_EQ(r.rank_biserial, 0.0);
}

TEST(Stats, BonferroniMultipliesAndClamps) {
  const std::vector<double> p{0.01, 0.2, 0.5};
  EXPECT_EQ(bonferroni(p, 3), (std::vector<double>{0.03, 0.6000000000000001, 1.0}));
  EXPECT_THROW(bonferroni(p, 2), std::invalid_argument);
  const std::vector<double> a{1, 2, 3, 4, 5, 6};
  const std::vector<double> b{4, 5, 6, 7, 8, 9};
  const auto r = mann_whitney(a, b, {.comparisons = 3});
  EXPECT_DOUBLE_EQ(r.p_bonferroni, std::min(1.0, 3 * r.p_raw));
}

// Two-sided exact p by enumerating every relabelling of the pooled sample.
double exact_p_oracle(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> pooled = a;
  pooled.insert(pooled.end(), b.begin(), b.end());
  const auto ranks = oracle::midranks(pooled);
  const std::size_t n = pooled.size(), na = a.size();
  const double centre = na * (n + 1) / 2.0;
  double observed = 0;
  for (std::size_t i = 0; i < na; ++i) observed += ranks[i];
  const double dev = std::abs(observed - centre);
  double hit = 0, all = 0;
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    if (static_cast<std::size_t>(__builtin_popcount(mask)) != na) continue;
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (1u << i)) s += ranks[i];
    }
    all += 1;
    if (std::abs(s - centre) >= dev - 1e-9) hit += 1;
  }
  return hit / all;
}

TEST(Stats, ExactPMatchesEnumeration) {
  std::mt19937_64 gen(5);
  std::uniform_int_distribution<int> size(1, 7);
  for (int trial = 0; trial < 300; ++trial) {
    const auto a = random_sample(gen, static_cast<std::size_t>(size(gen)));
    const auto b = random_sample(gen, static_cast<std::size_t>(size(gen)));
    EXPECT_NEAR(mann_whitney_exact_p(a, b), exact_p_oracle(a, b), 1e-12);
  }
  const std::vector<double> big(11, 1.0);
  EXPECT_THROW(mann_whitney_exact_p(big, big), std::invalid_argument);
}

TEST(Stats, ChiSquaredTwoDegreesIsExponential) {
  for (double x : {0.0, 0.1, 1.0, 5.0, 50.0, 300.0}) {
    EXPECT_NEAR(chi_squared_sf(x, 2) / std::exp(-x / 2), 1.0, 1e-13) << x;
  }
}

TEST(Stats, ChiSquaredOneDegreeIsNormalTail) {
  for (double z : {0.1, 1.0, 1.959963984540054, 4.0, 9.0}) {
    EXPECT_NEAR(chi_squared_sf(z * z, 1) / (2 * normal_sf(z)), 1.0, 1e-12) << z;
  }
}

#ifdef NBACK_HAVE_BOOST_MATH
TEST(Stats, RegularizedGammaMatchesBoost) {
  for (double a : {0.5, 1.0, 1.5, 2.0, 3.5, 10.0, 40.0}) {
    for (double x : {0.0, 0.01, 0.5, 1.0, 2.5, 7.0, 20.0, 60.0, 120.0}) {
      const double want = boost::math::gamma_q(a, x);
      const double got = regularized_gamma_q(a, x);
      if (want < 1e-300) continue;
      EXPECT_NEAR(got / want, 1.0, 1e-12) << "a=" << a << " x=" << x;
    }
  }
}
#endif

TEST(Stats, NormalSfTail) {
  EXPECT_NEAR(normal_sf(0.0), 0.5, 1e-16);
  EXPECT_NEAR(normal_sf(8.0) / 6.220960574271785e-16, 1.0, 1e-12);
}

}  // namespace
