#pragma once

// Rank-based tests used to compare d' across n: Kruskal-Wallis with epsilon
// squared, and pairwise Mann-Whitney U with Bonferroni correction and
// rank-biserial correlation.

#include <cstddef>
#include <span>
#include <vector>

namespace nback {

struct RankResult {
  std::vector<double> ranks;           // midranks, same order as input
  std::vector<std::size_t> tie_sizes;  // sizes of tie groups with t >= 2
};

struct KruskalResult {
  double h = 0.0;
  double p = 1.0;
  double epsilon_sq = 0.0;
  std::size_t k = 0;
  std::size_t total = 0;
};

struct MannWhitneyResult {
  double u = 0.0;  // statistic of the first sample
  double p_raw = 1.0;
  double p_bonferroni = 1.0;
  double rank_biserial = 0.0;
};

struct MannWhitneyOptions {
  bool continuity_correction = true;
  // Number of comparisons used for p_bonferroni.
  int comparisons = 1;
};

RankResult rank_with_ties(std::span<const double> values);

/// sum(t^3 - t) over tie groups.
double tie_term(std::span<const std::size_t> tie_sizes);

/// Survival function of the chi-squared distribution, Q(df/2, x/2).
double chi_squared_sf(double x, int df);

/// Regularized upper incomplete gamma function Q(a, x), a > 0, x >= 0.
double regularized_gamma_q(double a, double x);

/// 1 - Phi(z) computed through erfc.
double normal_sf(double z);

double epsilon_squared(double h, std::size_t k, std::size_t total);

KruskalResult kruskal_wallis(std::span<const std::vector<double>> groups);

/// 1 - 2U / (n_a n_b).
double rank_biserial(double u, std::size_t n_a, std::size_t n_b);

/// Two-sided normal-approximation p for U with tie-corrected variance.
double mann_whitney_normal_p(double u, std::size_t n_a, std::size_t n_b,
                             double ties, bool continuity_correction);

MannWhitneyResult mann_whitney(std::span<const double> a,
                               std::span<const double> b,
                               const MannWhitneyOptions& options = {});

/// Two-sided exact permutation p for U; enumerates all splits so it is
/// limited to n_a + n_b <= 20.
double mann_whitney_exact_p(std::span<const double> a,
                            std::span<const double> b);

/// Each p multiplied by m and clamped to 1.
std::vector<double> bonferroni(std::span<const double> p_values, int m);

}  // namespace nback
