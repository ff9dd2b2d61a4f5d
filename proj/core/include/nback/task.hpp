#pragma once

// Seeded generation of verbal and spatial n-back blocks.
//
// A block is generated left to right from a single stream derived from
// (config.seed, config.n, block_index):
//   1. match positions: a uniform subset of {n, ..., block_length-1} of size
//      target_count (partial Fisher-Yates over the ascending position list);
//   2. per trial, the core item (letter or occupied cell), drawn uniformly
//      from the rule-satisfying or rule-violating set relative to trial t-n;
//   3. per trial, noise (noise variants only), immediately after its item.
// Only the lag-n relationship is constrained; other lags are left to chance
// unless strict_lures is set.

#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "nback/rng.hpp"

namespace nback {

enum class Family { kVerbal, kSpatial };

enum class Variant {
  kBase,
  kNoise,
  kFeedback,
  kCotReasoning,
  kAbstractInclIdentical,
  kAbstractExclIdentical,
};

enum class MatchRule {
  kExactVerbal,
  kExactPosition,
  kRowOrColInclIdentical,
  kRowOrColExclIdentical,
};

enum class Label { kNonmatch, kMatch };

inline constexpr std::string_view kDefaultAlphabet = "bcdfghjklnpqrstvwxyz";
inline constexpr std::string_view kDefaultNoiseCharset = "#$%&@^~";

struct TaskConfig {
  Family family = Family::kVerbal;
  Variant variant = Variant::kBase;
  int n = 1;
  int grid_size = 3;
  int block_length = 24;
  int target_count = 8;
  int blocks = 50;
  std::uint64_t seed = 0;
  std::string alphabet{kDefaultAlphabet};
  std::string noise_charset{kDefaultNoiseCharset};
  // Exclude lag n-1 and n+1 lures on nonmatch trials when possible.
  bool strict_lures = false;

  bool operator==(const TaskConfig&) const = default;
};

struct Cell {
  int row = 0;
  int col = 0;

  auto operator<=>(const Cell&) const = default;
};

struct VerbalStimulus {
  char letter = 'b';
  std::string text;  // letter embedded among noise characters
  std::size_t letter_index = 0;

  bool operator==(const VerbalStimulus&) const = default;
};

struct SpatialStimulus {
  int grid_size = 3;
  Cell occupied;
  std::map<Cell, char> noise;

  bool operator==(const SpatialStimulus&) const = default;
};

using Stimulus = std::variant<VerbalStimulus, SpatialStimulus>;

struct Trial {
  Stimulus stimulus;
  Label label = Label::kNonmatch;

  bool operator==(const Trial&) const = default;
};

struct Block {
  TaskConfig config;
  std::size_t block_index = 0;
  std::uint64_t stream_seed = 0;
  std::vector<Trial> trials;

  bool operator==(const Block&) const = default;
};

class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

/// Raised when a trial has no admissible stimulus (degenerate grids).
class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string_view to_string(Family f);
std::string_view to_string(Variant v);
std::string_view to_string(MatchRule r);
std::string_view to_string(Label l);
std::optional<Family> parse_family(std::string_view s);
std::optional<Variant> parse_variant(std::string_view s);
std::optional<Label> parse_label(std::string_view s);

bool has_noise(Variant v);
bool is_abstract(Variant v);

/// Field-level problems with a config; empty when valid.
std::vector<std::string> validate(const TaskConfig& config);
/// Throws ConfigError listing every problem.
void require_valid(const TaskConfig& config);

MatchRule rule_for(const TaskConfig& config);

bool cells_match(MatchRule rule, Cell current, Cell reference);

/// Noise is ignored. Mixing families or grid sizes throws
/// std::invalid_argument.
bool evaluate_match(MatchRule rule, const Stimulus& current,
                    const Stimulus& reference);

/// Cells c of a g-by-g grid with cells_match(rule, c, reference) ==
/// want_match, in row-major order.
std::vector<Cell> candidate_cells(MatchRule rule, Cell reference, int grid_size,
                                  bool want_match);

/// Embeds letter at a uniform position among 3-6 noise characters
/// (or exactly forced_count when given).
VerbalStimulus apply_verbal_noise(char letter, std::string_view noise_charset,
                                  Rng& rng,
                                  std::optional<int> forced_count = std::nullopt);

/// Picks 1-3 distinct unoccupied cells, each with an independent noise
/// character.
std::map<Cell, char> place_spatial_noise(Cell occupied, int grid_size,
                                         std::string_view noise_charset,
                                         Rng& rng);

std::uint64_t block_stream_seed(const TaskConfig& config,
                                std::size_t block_index);

Block generate_block(const TaskConfig& config, std::size_t block_index);

/// Labels recomputed from the stimuli alone.
std::vector<Label> relabel(const Block& block);

}  // namespace nback
