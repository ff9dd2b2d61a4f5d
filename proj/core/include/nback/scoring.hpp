#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "nback/prompts.hpp"
#include "nback/task.hpp"

namespace nback {

/// Rates of exactly 0 or 1 are replaced (not shifted) by these before the
/// z-transform.
inline constexpr double kRateFloor = 0.01;
inline constexpr double kRateCeiling = 0.99;

struct BlockScore {
  int hits = 0;
  int false_alarms = 0;
  int targets = 0;
  int nontargets = 0;
  double hit_rate = 0.0;
  double fa_rate = 0.0;
  double accuracy = 0.0;
  double dprime = 0.0;
  int invalid_count = 0;

  bool operator==(const BlockScore&) const = default;
};

struct MetricSummary {
  double mean = 0.0;
  double sd = 0.0;   // sample sd, divisor m - 1
  double sem = 0.0;  // sd / sqrt(m)
};

struct ConditionSummary {
  std::size_t blocks = 0;
  MetricSummary hit_rate;
  MetricSummary fa_rate;
  MetricSummary accuracy;
  MetricSummary dprime;
};

/// Standard normal CDF via erfc (accurate in both tails).
double normal_cdf(double z);

/// Standard normal quantile, Wichura's AS241 (PPND16) rational
/// approximations; about 1e-16 relative accuracy on (0, 1). Throws
/// std::domain_error outside the open interval.
double inverse_normal_cdf(double p);

/// Replaces 0 by kRateFloor and 1 by kRateCeiling; other values pass through.
double adjust_rate(double rate);

/// z(HR) - z(FAR) after adjust_rate.
double dprime(double hit_rate, double fa_rate);

/// Invalid verdicts count as nonmatch responses and are tallied in
/// invalid_count. Throws std::invalid_argument on length mismatch.
BlockScore score_block(std::span<const Label> labels,
                       std::span<const Verdict> verdicts);

MetricSummary summarize(std::span<const double> values);

/// Needs at least two blocks (SEM is undefined otherwise).
ConditionSummary summarize_condition(std::span<const BlockScore> scores);

}  // namespace nback
