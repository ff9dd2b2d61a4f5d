#pragma once

// Aggregation of stored results into plot-ready curves, d' histograms and
// statistics tables.
//
// Report directory:
//   curves.csv      condition,variant,n,metric,mean,sd,sem,blocks,
//                   overlay_mean,overlay_sd
//   histograms.csv  condition,n,bin_lo,bin_hi,count
//   stats.md        Kruskal-Wallis table (Task | H | p | ε²) and post-hoc
//                   table (Task | Test | U | Bonferroni-corrected p |
//                   rank-biserial correlation)
//   stats.json      the same numbers at full precision
//   manifest.json   conditions, block counts, excluded blocks
// None of the files carry timestamps, so rerunning over the same results is
// byte-identical.

#include <filesystem>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "nback/runner.hpp"
#include "nback/scoring.hpp"
#include "nback/stats.hpp"

namespace nback {

enum class Metric { kHitRate, kFaRate, kAccuracy, kDprime };

std::string_view to_string(Metric m);
double metric_value(const BlockScore& s, Metric m);

inline constexpr double kHistogramHalfRange = 4.66;
inline constexpr double kDefaultBinWidth = 0.5;

/// Complete blocks of one condition, grouped by n.
struct ConditionData {
  std::string condition;
  TaskConfig task;
  std::vector<int> n_levels;
  std::vector<ScoredBlock> scores;
  std::size_t excluded_blocks = 0;
};

ConditionData condition_from_result(const ExperimentResult& result);

/// Reads every experiment under results_dir (the directory itself, or its
/// immediate subdirectories, when they hold a manifest.json). Incomplete
/// transcripts are excluded and counted.
std::vector<ConditionData> load_results(const std::filesystem::path& results_dir);

struct CurvePoint {
  int n = 0;
  double mean = 0.0;
  double sd = 0.0;
  double sem = 0.0;
  std::size_t blocks = 0;
};

struct CurveData {
  std::string condition;
  Variant variant = Variant::kBase;
  std::map<Metric, std::vector<CurvePoint>> metrics;
};

/// Throws std::invalid_argument if some n has fewer than two blocks.
CurveData build_curves(const ConditionData& data);

struct HistogramData {
  std::string condition;
  int n = 0;
  std::vector<double> edges;  // counts.size() + 1 edges
  std::vector<std::size_t> counts;
  std::size_t total = 0;
};

/// Fixed-width bins starting at -4.66, as many as needed to reach +4.66.
/// Values outside the range go to the end bins.
HistogramData histogram(std::span<const double> values, double bin_width);

std::vector<HistogramData> build_histograms(const ConditionData& data,
                                            double bin_width = kDefaultBinWidth);

struct KruskalRow {
  std::string task;
  KruskalResult result;
};

struct PosthocRow {
  std::string task;
  int n_a = 0;
  int n_b = 0;
  MannWhitneyResult result;

  std::string test() const;
};

struct ConditionStats {
  KruskalRow kruskal;
  std::vector<PosthocRow> posthoc;
};

/// Kruskal-Wallis on d' across n, then every pairwise Mann-Whitney U with
/// Bonferroni over the number of pairs.
ConditionStats analyze_condition(const ConditionData& data);

std::string emit_stats_markdown(const std::vector<KruskalRow>& kruskal,
                                const std::vector<PosthocRow>& posthoc);
nlohmann::json emit_stats_json(const std::vector<KruskalRow>& kruskal,
                               const std::vector<PosthocRow>& posthoc);

/// Six significant digits, trailing zeros dropped ("97.5376", "6.60666e-22").
std::string format_sig6(double v);

struct OverlayPoint {
  std::string metric = "accuracy";
  int n = 0;
  double mean = 0.0;
  double sd = 0.0;
};

/// CSV with header n,mean,sd and an optional metric column.
std::vector<OverlayPoint> read_overlay_csv(const std::filesystem::path& path);

struct ReportOptions {
  double bin_width = kDefaultBinWidth;
  std::vector<OverlayPoint> overlay;
};

void write_curves_csv(std::ostream& out, const std::vector<CurveData>& curves,
                      const std::vector<OverlayPoint>& overlay);
void write_histograms_csv(std::ostream& out,
                          const std::vector<HistogramData>& histograms);

/// Writes all report artifacts into out_dir (created if needed).
void write_report(const std::filesystem::path& out_dir,
                  const std::vector<ConditionData>& conditions,
                  const ReportOptions& options = {});

}  // namespace nback
