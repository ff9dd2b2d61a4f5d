#include "nback/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace nback {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr Metric kMetrics[] = {Metric::kHitRate, Metric::kFaRate,
                               Metric::kAccuracy, Metric::kDprime};

std::vector<double> metric_column(const ConditionData& data, int n, Metric m) {
  std::vector<double> out;
  for (const auto& s : data.scores) {
    if (s.n == n) out.push_back(metric_value(s.score, m));
  }
  return out;
}

json number_or_null(double v) {
  return std::isfinite(v) ? json(v) : json(nullptr);
}

}  // namespace

std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::kHitRate: return "hit_rate";
    case Metric::kFaRate: return "fa_rate";
    case Metric::kAccuracy: return "accuracy";
    case Metric::kDprime: return "dprime";
  }
  return "?";
}

double metric_value(const BlockScore& s, Metric m) {
  switch (m) {
    case Metric::kHitRate: return s.hit_rate;
    case Metric::kFaRate: return s.fa_rate;
    case Metric::kAccuracy: return s.accuracy;
    case Metric::kDprime: return s.dprime;
  }
  return 0.0;
}

ConditionData condition_from_result(const ExperimentResult& result) {
  ConditionData d;
  d.condition = result.experiment.id;
  d.task = result.experiment.task;
  d.n_levels = result.experiment.n_levels;
  d.scores = result.scores;
  d.excluded_blocks = result.failures.size();
  return d;
}

namespace {

// Report directories also hold a manifest.json; only run manifests count.
bool is_run_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) return false;
  const json j = json::parse(in, nullptr, false);
  return j.is_object() && j.value("schema", "") == kManifestSchema;
}

}  // namespace

std::vector<ConditionData> load_results(const fs::path& results_dir) {
  if (!fs::is_directory(results_dir)) {
    throw std::runtime_error(results_dir.string() + " is not a directory");
  }
  std::vector<fs::path> experiments;
  if (fs::exists(results_dir / "manifest.json")) {
    experiments.push_back(results_dir);
  } else {
    for (const auto& entry : fs::directory_iterator(results_dir)) {
      if (entry.is_directory() && is_run_manifest(entry.path() / "manifest.json")) {
        experiments.push_back(entry.path());
      }
    }
    std::sort(experiments.begin(), experiments.end());
  }
  if (experiments.empty()) {
    throw std::runtime_error("no experiment manifests under " +
                             results_dir.string());
  }

  std::vector<ConditionData> out;
  for (const auto& dir : experiments) {
    std::ifstream in(dir / "manifest.json");
    const json manifest = json::parse(in, nullptr, false);
    if (manifest.is_discarded() ||
        manifest.value("schema", "") != kManifestSchema) {
      throw SchemaError((dir / "manifest.json").string() +
                        ": unreadable or unsupported manifest");
    }
    ConditionData d;
    d.condition = manifest.at("experiment").get<std::string>();
    d.task = task_config_from_json(manifest.at("task"));
    d.n_levels = manifest.at("n_levels").get<std::vector<int>>();
    for (int n : d.n_levels) {
      for (int b = 0; b < d.task.blocks; ++b) {
        const fs::path path =
            dir / std::to_string(n) /
            transcript_file_name(static_cast<std::size_t>(b));
        if (!fs::exists(path)) {
          ++d.excluded_blocks;
          continue;
        }
        const BlockTranscript tr = read_transcript(path);
        if (!tr.complete()) {
          ++d.excluded_blocks;
          continue;
        }
        d.scores.push_back(ScoredBlock{d.condition, d.task.variant, n,
                                       static_cast<std::size_t>(b),
                                       score_transcript(tr)});
      }
    }
    out.push_back(std::move(d));
  }
  return out;
}

CurveData build_curves(const ConditionData& data) {
  CurveData out;
  out.condition = data.condition;
  out.variant = data.task.variant;
  for (Metric m : kMetrics) {
    auto& points = out.metrics[m];
    for (int n : data.n_levels) {
      const auto values = metric_column(data, n, m);
      if (values.size() < 2) {
        throw std::invalid_argument(
            data.condition + ": need at least 2 complete blocks for n=" +
            std::to_string(n) + ", have " + std::to_string(values.size()));
      }
      const MetricSummary s = summarize(values);
      points.push_back(CurvePoint{n, s.mean, s.sd, s.sem, values.size()});
    }
  }
  return out;
}

HistogramData histogram(std::span<const double> values, double bin_width) {
  if (!(bin_width > 0.0)) {
    throw std::invalid_argument("histogram: bin width must be positive");
  }
  HistogramData h;
  const double lo = -kHistogramHalfRange;
  const auto bins = static_cast<std::size_t>(
      std::ceil(2.0 * kHistogramHalfRange / bin_width - 1e-9));
  for (std::size_t i = 0; i <= bins; ++i) {
    h.edges.push_back(lo + static_cast<double>(i) * bin_width);
  }
  h.counts.assign(bins, 0);
  for (double v : values) {
    auto idx = static_cast<std::ptrdiff_t>(std::floor((v - lo) / bin_width));
    idx = std::clamp<std::ptrdiff_t>(idx, 0, static_cast<std::ptrdiff_t>(bins) - 1);
    ++h.counts[static_cast<std::size_t>(idx)];
  }
  h.total = values.size();
  return h;
}

std::vector<HistogramData> build_histograms(const ConditionData& data,
                                            double bin_width) {
  std::vector<HistogramData> out;
  for (int n : data.n_levels) {
    const auto values = metric_column(data, n, Metric::kDprime);
    if (values.empty()) {
      throw std::invalid_argument(data.condition + ": no blocks for n=" +
                                  std::to_string(n));
    }
    HistogramData h = histogram(values, bin_width);
    h.condition = data.condition;
    h.n = n;
    out.push_back(std::move(h));
  }
  return out;
}

std::string PosthocRow::test() const {
  return std::to_string(n_a) + "-back vs " + std::to_string(n_b) + "-back";
}

ConditionStats analyze_condition(const ConditionData& data) {
  std::vector<std::vector<double>> groups;
  for (int n : data.n_levels) {
    groups.push_back(metric_column(data, n, Metric::kDprime));
    if (groups.back().size() < 2) {
      throw std::invalid_argument(
          data.condition + ": need at least 2 complete blocks for n=" +
          std::to_string(n));
    }
  }
  ConditionStats out;
  out.kruskal = KruskalRow{data.condition, kruskal_wallis(groups)};
  const int pairs =
      static_cast<int>(groups.size() * (groups.size() - 1) / 2);
  MannWhitneyOptions opts;
  opts.comparisons = pairs;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    for (std::size_t j = i + 1; j < groups.size(); ++j) {
      out.posthoc.push_back(PosthocRow{data.condition, data.n_levels[i],
                                       data.n_levels[j],
                                       mann_whitney(groups[i], groups[j], opts)});
    }
  }
  return out;
}

std::string format_sig6(double v) {
  if (!std::isfinite(v)) return "nan";
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string emit_stats_markdown(const std::vector<KruskalRow>& kruskal,
                                const std::vector<PosthocRow>& posthoc) {
  std::ostringstream os;
  os << "## Kruskal-Wallis H tests on d'\n\n";
  os << "| Task | H | p | ε² |\n";
  os << "|:-----|--:|--:|---:|\n";
  for (const auto& r : kruskal) {
    os << "| " << r.task << " | " << format_sig6(r.result.h) << " | "
       << format_sig6(r.result.p) << " | " << format_sig6(r.result.epsilon_sq)
       << " |\n";
  }
  os << "\n## Mann-Whitney U tests on d'\n\n";
  os << "| Task | Test | U | Bonferroni-corrected p | rank-biserial correlation |\n";
  os << "|:-----|:-----|--:|--:|--:|\n";
  for (const auto& r : posthoc) {
    os << "| " << r.task << " | " << r.test() << " | "
       << format_sig6(r.result.u) << " | "
       << format_sig6(r.result.p_bonferroni) << " | "
       << format_sig6(r.result.rank_biserial) << " |\n";
  }
  os << "\nU is the statistic of the first-listed group. p values use the "
        "normal approximation with tie and continuity corrections.\n";
  return os.str();
}

json emit_stats_json(const std::vector<KruskalRow>& kruskal,
                     const std::vector<PosthocRow>& posthoc) {
  json k = json::array();
  for (const auto& r : kruskal) {
    k.push_back(json{{"task", r.task},
                     {"H", r.result.h},
                     {"p", r.result.p},
                     {"epsilon_sq", number_or_null(r.result.epsilon_sq)},
                     {"k", r.result.k},
                     {"N", r.result.total}});
  }
  json m = json::array();
  for (const auto& r : posthoc) {
    m.push_back(json{{"task", r.task},
                     {"test", r.test()},
                     {"U", r.result.u},
                     {"p_raw", r.result.p_raw},
                     {"p_bonferroni", r.result.p_bonferroni},
                     {"rank_biserial", r.result.rank_biserial}});
  }
  return json{{"kruskal_wallis", std::move(k)}, {"mann_whitney", std::move(m)},
              {"p_method", "normal approximation, tie-corrected variance, "
                           "continuity correction 0.5"}};
}

std::vector<OverlayPoint> read_overlay_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) {
        cell.pop_back();
      }
      while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
      cells.push_back(cell);
    }
    return cells;
  };
  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error(path.string() + ": empty overlay file");
  }
  const auto header = split(line);
  auto column = [&](const std::string& name) -> std::optional<std::size_t> {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - header.begin());
  };
  const auto n_col = column("n");
  const auto mean_col = column("mean");
  const auto sd_col = column("sd");
  const auto metric_col = column("metric");
  if (!n_col || !mean_col || !sd_col) {
    throw std::runtime_error(path.string() + ": header must contain n,mean,sd");
  }
  std::vector<OverlayPoint> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split(line);
    try {
      OverlayPoint p;
      p.n = std::stoi(cells.at(*n_col));
      p.mean = std::stod(cells.at(*mean_col));
      p.sd = std::stod(cells.at(*sd_col));
      if (metric_col) p.metric = cells.at(*metric_col);
      out.push_back(p);
    } catch (const std::exception&) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": malformed overlay row");
    }
  }
  return out;
}

void write_curves_csv(std::ostream& out, const std::vector<CurveData>& curves,
                      const std::vector<OverlayPoint>& overlay) {
  out << "condition,variant,n,metric,mean,sd,sem,blocks,overlay_mean,overlay_sd\n";
  for (const auto& c : curves) {
    for (Metric m : kMetrics) {
      for (const auto& p : c.metrics.at(m)) {
        out << c.condition << ',' << to_string(c.variant) << ',' << p.n << ','
            << to_string(m) << ',' << format_double(p.mean) << ','
            << format_double(p.sd) << ',' << format_double(p.sem) << ','
            << p.blocks << ',';
        auto it = std::find_if(overlay.begin(), overlay.end(), [&](const auto& o) {
          return o.n == p.n && o.metric == to_string(m);
        });
        if (it != overlay.end()) {
          out << format_double(it->mean) << ',' << format_double(it->sd);
        } else {
          out << ',';
        }
        out << '\n';
      }
    }
  }
}

void write_histograms_csv(std::ostream& out,
                          const std::vector<HistogramData>& histograms) {
  out << "condition,n,bin_lo,bin_hi,count\n";
  for (const auto& h : histograms) {
    for (std::size_t i = 0; i < h.counts.size(); ++i) {
      out << h.condition << ',' << h.n << ',' << format_double(h.edges[i]) << ','
          << format_double(h.edges[i + 1]) << ',' << h.counts[i] << '\n';
    }
  }
}

void write_report(const fs::path& out_dir,
                  const std::vector<ConditionData>& conditions,
                  const ReportOptions& options) {
  std::set<std::string> seen;
  for (const auto& c : conditions) {
    if (!seen.insert(c.condition).second) {
      throw std::invalid_argument("duplicate condition label " + c.condition);
    }
  }
  std::vector<CurveData> curves;
  std::vector<HistogramData> histograms;
  std::vector<KruskalRow> kruskal;
  std::vector<PosthocRow> posthoc;
  json manifest_conditions = json::array();
  for (const auto& c : conditions) {
    curves.push_back(build_curves(c));
    for (auto& h : build_histograms(c, options.bin_width)) {
      histograms.push_back(std::move(h));
    }
    ConditionStats s = analyze_condition(c);
    kruskal.push_back(s.kruskal);
    posthoc.insert(posthoc.end(), s.posthoc.begin(), s.posthoc.end());
    json counts = json::object();
    for (int n : c.n_levels) {
      counts[std::to_string(n)] = metric_column(c, n, Metric::kDprime).size();
    }
    manifest_conditions.push_back(json{{"condition", c.condition},
                                       {"variant", to_string(c.task.variant)},
                                       {"family", to_string(c.task.family)},
                                       {"grid_size", c.task.grid_size},
                                       {"n_levels", c.n_levels},
                                       {"complete_blocks", counts},
                                       {"excluded_blocks", c.excluded_blocks}});
  }

  fs::create_directories(out_dir);
  auto open = [&](const char* name) {
    std::ofstream f(out_dir / name, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + (out_dir / name).string());
    return f;
  };
  {
    auto f = open("curves.csv");
    write_curves_csv(f, curves, options.overlay);
  }
  {
    auto f = open("histograms.csv");
    write_histograms_csv(f, histograms);
  }
  {
    auto f = open("stats.md");
    f << emit_stats_markdown(kruskal, posthoc);
  }
  {
    auto f = open("stats.json");
    f << emit_stats_json(kruskal, posthoc).dump(2) << '\n';
  }
  {
    auto f = open("manifest.json");
    json m{{"schema", "nback.report/1"},
           {"bin_width", options.bin_width},
           {"histogram_range", {-kHistogramHalfRange, kHistogramHalfRange}},
           {"overlay", !options.overlay.empty()},
           {"conditions", std::move(manifest_conditions)}};
    f << m.dump(2) << '\n';
  }
}

}  // namespace nback
