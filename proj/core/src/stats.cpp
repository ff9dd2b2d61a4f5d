#include "nback/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace nback {

RankResult rank_with_ties(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("rank_with_ties: empty input");
  const std::size_t n = values.size();
  std::vector<std::pair<double, std::size_t>> sorted(n);
  for (std::size_t i = 0; i < n; ++i) sorted[i] = {values[i], i};
  std::sort(sorted.begin(), sorted.end());
  RankResult out;
  out.ranks.assign(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && sorted[j].first == sorted[i].first) ++j;
    // positions i..j-1 share the average of ranks i+1..j
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) out.ranks[sorted[k].second] = midrank;
    if (j - i > 1) out.tie_sizes.push_back(j - i);
    i = j;
  }
  return out;
}

double tie_term(std::span<const std::size_t> tie_sizes) {
  double sum = 0.0;
  for (std::size_t t : tie_sizes) {
    const auto d = static_cast<double>(t);
    sum += d * d * d - d;
  }
  return sum;
}

namespace {

constexpr int kMaxIterations = 1000;
constexpr double kEps = 1e-16;

// Lower series for P(a, x), valid and fast for x < a + 1.
double gamma_p_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  double ap = a;
  for (int i = 0; i < kMaxIterations; ++i) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::fabs(term) < std::fabs(sum) * kEps) break;
  }
  return sum * std::exp(a * std::log(x) - x - std::lgamma(a));
}

// Continued fraction for Q(a, x) (modified Lentz), for x >= a + 1.
double gamma_q_continued_fraction(double a, double x) {
  constexpr double kTiny = std::numeric_limits<double>::min() / kEps;
  double b = x + 1.0 - a;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= kMaxIterations; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < kEps) break;
  }
  return std::exp(a * std::log(x) - x - std::lgamma(a)) * h;
}

}  // namespace

double regularized_gamma_q(double a, double x) {
  if (!(a > 0.0) || !(x >= 0.0)) {
    throw std::domain_error("regularized_gamma_q: need a > 0 and x >= 0");
  }
  if (x == 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
  return gamma_q_continued_fraction(a, x);
}

double chi_squared_sf(double x, int df) {
  if (df < 1) throw std::domain_error("chi_squared_sf: df must be >= 1");
  if (!(x >= 0.0)) throw std::domain_error("chi_squared_sf: x must be >= 0");
  return regularized_gamma_q(0.5 * df, 0.5 * x);
}

double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

double epsilon_squared(double h, std::size_t k, std::size_t total) {
  if (total <= k) return std::numeric_limits<double>::quiet_NaN();
  return (h - static_cast<double>(k) + 1.0) / static_cast<double>(total - k);
}

KruskalResult kruskal_wallis(std::span<const std::vector<double>> groups) {
  if (groups.size() < 2) {
    throw std::invalid_argument("kruskal_wallis: need at least 2 groups");
  }
  std::vector<double> pooled;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].empty()) {
      throw std::invalid_argument("kruskal_wallis: group " + std::to_string(g) +
                                  " is empty");
    }
    pooled.insert(pooled.end(), groups[g].begin(), groups[g].end());
  }
  KruskalResult out;
  out.k = groups.size();
  out.total = pooled.size();
  const auto n = static_cast<double>(out.total);

  const RankResult ranked = rank_with_ties(pooled);
  const double correction = 1.0 - tie_term(ranked.tie_sizes) / (n * n * n - n);
  if (correction <= 0.0) {
    // every pooled value identical
    out.h = 0.0;
    out.p = 1.0;
    out.epsilon_sq = epsilon_squared(0.0, out.k, out.total);
    return out;
  }
  double sum = 0.0;
  std::size_t offset = 0;
  for (const auto& g : groups) {
    double r = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) r += ranked.ranks[offset + i];
    sum += r * r / static_cast<double>(g.size());
    offset += g.size();
  }
  const double h_raw = 12.0 / (n * (n + 1.0)) * sum - 3.0 * (n + 1.0);
  out.h = std::max(0.0, h_raw / correction);
  out.p = chi_squared_sf(out.h, static_cast<int>(out.k) - 1);
  out.epsilon_sq = epsilon_squared(out.h, out.k, out.total);
  return out;
}

double rank_biserial(double u, std::size_t n_a, std::size_t n_b) {
  return 1.0 - 2.0 * u / (static_cast<double>(n_a) * static_cast<double>(n_b));
}

double mann_whitney_normal_p(double u, std::size_t n_a, std::size_t n_b,
                             double ties, bool continuity_correction) {
  const auto na = static_cast<double>(n_a);
  const auto nb = static_cast<double>(n_b);
  const double total = na + nb;
  const double mu = na * nb / 2.0;
  const double var =
      na * nb / 12.0 * ((total + 1.0) - ties / (total * (total - 1.0)));
  if (!(var > 0.0)) return 1.0;
  const double cc = continuity_correction ? 0.5 : 0.0;
  const double z = (std::fabs(u - mu) - cc) / std::sqrt(var);
  return std::clamp(2.0 * normal_sf(z), 0.0, 1.0);
}

MannWhitneyResult mann_whitney(std::span<const double> a,
                               std::span<const double> b,
                               const MannWhitneyOptions& options) {
  if (a.empty() || b.empty()) {
    throw std::invalid_argument("mann_whitney: both samples must be nonempty");
  }
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  const RankResult ranked = rank_with_ties(pooled);
  const double r_a =
      std::accumulate(ranked.ranks.begin(),
                      ranked.ranks.begin() + static_cast<std::ptrdiff_t>(a.size()),
                      0.0);
  const auto na = static_cast<double>(a.size());

  MannWhitneyResult out;
  out.u = r_a - na * (na + 1.0) / 2.0;
  out.rank_biserial = rank_biserial(out.u, a.size(), b.size());
  out.p_raw = mann_whitney_normal_p(out.u, a.size(), b.size(),
                                    tie_term(ranked.tie_sizes),
                                    options.continuity_correction);
  out.p_bonferroni = std::min(1.0, out.p_raw * options.comparisons);
  return out;
}

double mann_whitney_exact_p(std::span<const double> a,
                            std::span<const double> b) {
  const std::size_t na = a.size();
  const std::size_t total = a.size() + b.size();
  if (na == 0 || b.empty()) {
    throw std::invalid_argument("mann_whitney_exact_p: empty sample");
  }
  if (total > 20) {
    throw std::invalid_argument("mann_whitney_exact_p: n_a + n_b must be <= 20");
  }
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  const RankResult ranked = rank_with_ties(pooled);
  // Doubled midranks are integers.
  std::vector<int> r2(total);
  for (std::size_t i = 0; i < total; ++i) {
    r2[i] = static_cast<int>(std::lround(2.0 * ranked.ranks[i]));
  }
  const int max_sum = std::accumulate(r2.begin(), r2.end(), 0);
  // ways[k][s]: subsets of size k with doubled rank sum s
  std::vector<std::vector<double>> ways(
      na + 1, std::vector<double>(static_cast<std::size_t>(max_sum) + 1, 0.0));
  ways[0][0] = 1.0;
  for (std::size_t i = 0; i < total; ++i) {
    for (std::size_t k = std::min(na, i + 1); k >= 1; --k) {
      for (int s = max_sum; s >= r2[i]; --s) {
        ways[k][static_cast<std::size_t>(s)] +=
            ways[k - 1][static_cast<std::size_t>(s - r2[i])];
      }
    }
  }
  int observed = 0;
  for (std::size_t i = 0; i < na; ++i) observed += r2[i];
  // Rank sum mean, doubled: na (N + 1)
  const int centre2 = static_cast<int>(na * (total + 1));
  const int dev_obs = std::abs(observed - centre2);
  double extreme = 0.0;
  double all = 0.0;
  for (int s = 0; s <= max_sum; ++s) {
    const double w = ways[na][static_cast<std::size_t>(s)];
    all += w;
    if (std::abs(s - centre2) >= dev_obs) extreme += w;
  }
  return std::min(1.0, extreme / all);
}

std::vector<double> bonferroni(std::span<const double> p_values, int m) {
  if (m < static_cast<int>(p_values.size())) {
    throw std::invalid_argument("bonferroni: m is smaller than the number of "
                                "comparisons");
  }
  std::vector<double> out;
  out.reserve(p_values.size());
  for (double p : p_values) out.push_back(std::min(1.0, p * m));
  return out;
}

}  // namespace nback
