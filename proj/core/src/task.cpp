#include "nback/task.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>

namespace nback {

namespace {

std::string join_problems(const std::vector<std::string>& problems) {
  std::ostringstream os;
  os << "invalid task config";
  for (const auto& p : problems) os << "\n  " << p;
  return os.str();
}

constexpr std::string_view kReservedGridChars = "X_|";

template <typename T>
const T& pick(const std::vector<T>& items, Rng& rng) {
  return items[rng.uniform_below(items.size())];
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::invalid_argument(join_problems(problems)),
      problems_(std::move(problems)) {}

std::string_view to_string(Family f) {
  switch (f) {
    case Family::kVerbal: return "verbal";
    case Family::kSpatial: return "spatial";
  }
  return "?";
}

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::kBase: return "base";
    case Variant::kNoise: return "noise";
    case Variant::kFeedback: return "feedback";
    case Variant::kCotReasoning: return "cot_reasoning";
    case Variant::kAbstractInclIdentical: return "abstract_incl_identical";
    case Variant::kAbstractExclIdentical: return "abstract_excl_identical";
  }
  return "?";
}

std::string_view to_string(MatchRule r) {
  switch (r) {
    case MatchRule::kExactVerbal: return "exact_verbal";
    case MatchRule::kExactPosition: return "exact_position";
    case MatchRule::kRowOrColInclIdentical: return "row_or_col_incl_identical";
    case MatchRule::kRowOrColExclIdentical: return "row_or_col_excl_identical";
  }
  return "?";
}

std::string_view to_string(Label l) {
  return l == Label::kMatch ? "match" : "nonmatch";
}

std::optional<Family> parse_family(std::string_view s) {
  if (s == "verbal") return Family::kVerbal;
  if (s == "spatial") return Family::kSpatial;
  return std::nullopt;
}

std::optional<Variant> parse_variant(std::string_view s) {
  for (Variant v : {Variant::kBase, Variant::kNoise, Variant::kFeedback,
                    Variant::kCotReasoning, Variant::kAbstractInclIdentical,
                    Variant::kAbstractExclIdentical}) {
    if (to_string(v) == s) return v;
  }
  return std::nullopt;
}

std::optional<Label> parse_label(std::string_view s) {
  if (s == "match") return Label::kMatch;
  if (s == "nonmatch") return Label::kNonmatch;
  return std::nullopt;
}

bool has_noise(Variant v) { return v == Variant::kNoise; }

bool is_abstract(Variant v) {
  return v == Variant::kAbstractInclIdentical ||
         v == Variant::kAbstractExclIdentical;
}

std::vector<std::string> validate(const TaskConfig& c) {
  std::vector<std::string> out;
  if (c.n < 1) out.push_back("n: must be >= 1");
  if (c.block_length < 1) out.push_back("block_length: must be >= 1");
  if (c.target_count < 0) out.push_back("target_count: must be >= 0");
  if (c.n >= 1 && c.target_count > c.block_length - c.n) {
    out.push_back("target_count: " + std::to_string(c.target_count) +
                  " exceeds block_length - n = " +
                  std::to_string(c.block_length - c.n));
  }
  if (c.blocks < 1) out.push_back("blocks: must be >= 1");
  if (c.family == Family::kSpatial && c.grid_size < 2) {
    out.push_back("grid_size: must be >= 2");
  }
  if (is_abstract(c.variant)) {
    if (c.family != Family::kSpatial) {
      out.push_back("variant: abstract variants require family spatial");
    }
    if (c.grid_size != 3) {
      out.push_back("grid_size: abstract variants require grid_size 3");
    }
  }
  if (c.alphabet.empty()) out.push_back("alphabet: must be nonempty");
  if (c.noise_charset.empty()) out.push_back("noise_charset: must be nonempty");
  std::set<char> letters(c.alphabet.begin(), c.alphabet.end());
  if (letters.size() != c.alphabet.size()) {
    out.push_back("alphabet: characters must be distinct");
  }
  for (char ch : c.noise_charset) {
    if (letters.count(ch) != 0) {
      out.push_back(std::string("noise_charset: '") + ch +
                    "' also appears in alphabet");
    }
    if (kReservedGridChars.find(ch) != std::string_view::npos) {
      out.push_back(std::string("noise_charset: '") + ch +
                    "' is reserved for grid rendering");
    }
  }
  for (char ch : c.alphabet) {
    if (ch == ' ' || ch == '\n' || ch == '\t' || ch == '\r' || ch == ':') {
      out.push_back("alphabet: whitespace and ':' are not allowed");
      break;
    }
  }
  return out;
}

void require_valid(const TaskConfig& config) {
  auto problems = validate(config);
  if (!problems.empty()) throw ConfigError(std::move(problems));
}

MatchRule rule_for(const TaskConfig& config) {
  if (config.family == Family::kVerbal) return MatchRule::kExactVerbal;
  switch (config.variant) {
    case Variant::kAbstractInclIdentical:
      return MatchRule::kRowOrColInclIdentical;
    case Variant::kAbstractExclIdentical:
      return MatchRule::kRowOrColExclIdentical;
    default:
      return MatchRule::kExactPosition;
  }
}

bool cells_match(MatchRule rule, Cell current, Cell reference) {
  const bool same_row = current.row == reference.row;
  const bool same_col = current.col == reference.col;
  switch (rule) {
    case MatchRule::kExactPosition: return same_row && same_col;
    case MatchRule::kRowOrColInclIdentical: return same_row || same_col;
    case MatchRule::kRowOrColExclIdentical: return same_row != same_col;
    case MatchRule::kExactVerbal: break;
  }
  throw std::invalid_argument("cells_match: verbal rule applied to cells");
}

bool evaluate_match(MatchRule rule, const Stimulus& current,
                    const Stimulus& reference) {
  if (current.index() != reference.index()) {
    throw std::invalid_argument("evaluate_match: stimulus families differ");
  }
  if (const auto* cur = std::get_if<VerbalStimulus>(&current)) {
    if (rule != MatchRule::kExactVerbal) {
      throw std::invalid_argument("evaluate_match: spatial rule on letters");
    }
    return cur->letter == std::get<VerbalStimulus>(reference).letter;
  }
  const auto& cur = std::get<SpatialStimulus>(current);
  const auto& ref = std::get<SpatialStimulus>(reference);
  if (cur.grid_size != ref.grid_size) {
    throw std::invalid_argument("evaluate_match: grid sizes differ");
  }
  return cells_match(rule, cur.occupied, ref.occupied);
}

std::vector<Cell> candidate_cells(MatchRule rule, Cell reference, int grid_size,
                                  bool want_match) {
  std::vector<Cell> out;
  for (int r = 0; r < grid_size; ++r) {
    for (int c = 0; c < grid_size; ++c) {
      if (cells_match(rule, Cell{r, c}, reference) == want_match) {
        out.push_back(Cell{r, c});
      }
    }
  }
  return out;
}

VerbalStimulus apply_verbal_noise(char letter, std::string_view noise_charset,
                                  Rng& rng, std::optional<int> forced_count) {
  const int count = forced_count ? *forced_count
                                 : static_cast<int>(rng.uniform_int(3, 6));
  std::string text;
  text.reserve(static_cast<std::size_t>(count) + 1);
  for (int i = 0; i < count; ++i) {
    text.push_back(noise_charset[rng.uniform_below(noise_charset.size())]);
  }
  const auto pos = static_cast<std::size_t>(rng.uniform_below(text.size() + 1));
  text.insert(text.begin() + static_cast<std::ptrdiff_t>(pos), letter);
  return VerbalStimulus{letter, std::move(text), pos};
}

std::map<Cell, char> place_spatial_noise(Cell occupied, int grid_size,
                                         std::string_view noise_charset,
                                         Rng& rng) {
  std::vector<Cell> free;
  for (int r = 0; r < grid_size; ++r) {
    for (int c = 0; c < grid_size; ++c) {
      if (Cell{r, c} != occupied) free.push_back(Cell{r, c});
    }
  }
  const auto count = static_cast<std::size_t>(rng.uniform_int(1, 3));
  // partial Fisher-Yates
  std::map<Cell, char> noise;
  for (std::size_t i = 0; i < count && i < free.size(); ++i) {
    const auto j = i + rng.uniform_below(free.size() - i);
    std::swap(free[i], free[j]);
    noise.emplace(free[i],
                  noise_charset[rng.uniform_below(noise_charset.size())]);
  }
  return noise;
}

std::uint64_t block_stream_seed(const TaskConfig& config,
                                std::size_t block_index) {
  return derive_stream_seed(config.seed, StreamPurpose::kTask,
                            {static_cast<std::uint64_t>(config.n),
                             static_cast<std::uint64_t>(block_index)});
}

namespace {

// Core items are represented as small integers while generating: a letter
// index for verbal blocks, row * g + col for spatial blocks.
struct ItemSpace {
  Family family;
  MatchRule rule;
  int grid_size;
  int size;

  Cell cell(int item) const { return Cell{item / grid_size, item % grid_size}; }

  bool match(int current, int reference) const {
    if (family == Family::kVerbal) return current == reference;
    return cells_match(rule, cell(current), cell(reference));
  }
};

}  // namespace

Block generate_block(const TaskConfig& config, std::size_t block_index) {
  require_valid(config);
  if (block_index >= static_cast<std::size_t>(config.blocks)) {
    throw std::out_of_range("generate_block: block_index >= blocks");
  }

  const ItemSpace space{
      config.family, rule_for(config), config.grid_size,
      config.family == Family::kVerbal
          ? static_cast<int>(config.alphabet.size())
          : config.grid_size * config.grid_size};

  Block block;
  block.config = config;
  block.block_index = block_index;
  block.stream_seed = block_stream_seed(config, block_index);
  Rng rng(block.stream_seed);

  const int length = config.block_length;
  const int n = config.n;

  std::vector<int> positions(static_cast<std::size_t>(length - n));
  std::iota(positions.begin(), positions.end(), n);
  std::vector<bool> is_match(static_cast<std::size_t>(length), false);
  for (int i = 0; i < config.target_count; ++i) {
    const auto j = static_cast<std::size_t>(i) +
                   rng.uniform_below(positions.size() - static_cast<std::size_t>(i));
    std::swap(positions[static_cast<std::size_t>(i)], positions[j]);
    is_match[static_cast<std::size_t>(positions[static_cast<std::size_t>(i)])] =
        true;
  }

  std::vector<int> items;
  items.reserve(static_cast<std::size_t>(length));
  std::vector<int> candidates;
  std::vector<int> filtered;
  for (int t = 0; t < length; ++t) {
    const bool want = is_match[static_cast<std::size_t>(t)];
    candidates.clear();
    if (t < n) {
      for (int x = 0; x < space.size; ++x) candidates.push_back(x);
    } else {
      const int ref = items[static_cast<std::size_t>(t - n)];
      for (int x = 0; x < space.size; ++x) {
        if (space.match(x, ref) == want) candidates.push_back(x);
      }
    }
    if (config.strict_lures && !want) {
      filtered.clear();
      for (int x : candidates) {
        bool lure = false;
        if (n >= 2 && t >= n - 1) {
          lure = lure || space.match(x, items[static_cast<std::size_t>(t - n + 1)]);
        }
        if (t >= n + 1) {
          lure = lure || space.match(x, items[static_cast<std::size_t>(t - n - 1)]);
        }
        if (!lure) filtered.push_back(x);
      }
      if (!filtered.empty()) candidates.swap(filtered);
    }
    if (candidates.empty()) {
      throw GenerationError("generate_block: no admissible " +
                            std::string(want ? "match" : "nonmatch") +
                            " stimulus at trial " + std::to_string(t));
    }
    const int item = pick(candidates, rng);
    items.push_back(item);

    Trial trial;
    trial.label = want ? Label::kMatch : Label::kNonmatch;
    if (config.family == Family::kVerbal) {
      const char letter = config.alphabet[static_cast<std::size_t>(item)];
      if (has_noise(config.variant)) {
        trial.stimulus = apply_verbal_noise(letter, config.noise_charset, rng);
      } else {
        trial.stimulus = VerbalStimulus{letter, std::string(1, letter), 0};
      }
    } else {
      SpatialStimulus s;
      s.grid_size = config.grid_size;
      s.occupied = space.cell(item);
      if (has_noise(config.variant)) {
        s.noise = place_spatial_noise(s.occupied, config.grid_size,
                                      config.noise_charset, rng);
      }
      trial.stimulus = std::move(s);
    }
    block.trials.push_back(std::move(trial));
  }
  return block;
}

std::vector<Label> relabel(const Block& block) {
  const MatchRule rule = rule_for(block.config);
  const auto n = static_cast<std::size_t>(block.config.n);
  std::vector<Label> out;
  out.reserve(block.trials.size());
  for (std::size_t t = 0; t < block.trials.size(); ++t) {
    const bool m = t >= n && evaluate_match(rule, block.trials[t].stimulus,
                                            block.trials[t - n].stimulus);
    out.push_back(m ? Label::kMatch : Label::kNonmatch);
  }
  return out;
}

}  // namespace nback
