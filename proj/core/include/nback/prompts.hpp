#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "nback/task.hpp"

namespace nback {

enum class Verdict { kMatch, kNonmatch, kInvalid };

std::string_view to_string(Verdict v);
std::optional<Verdict> parse_verdict_name(std::string_view s);

struct ParsedResponse {
  Verdict verdict = Verdict::kInvalid;
  std::optional<std::string> rationale;
  std::string raw;
};

struct RenderOptions {
  // Put grid rows on one line separated by spaces instead of newlines.
  bool single_line_grid = false;
};

/// The system instruction for a config. Throws std::invalid_argument for
/// combinations with no template (abstract rules on letters, or abstract
/// rules on grids other than 3x3).
std::string build_instruction(const TaskConfig& config);

std::string render_stimulus(const Stimulus& stimulus,
                            const RenderOptions& options = {});

std::string render_feedback(bool previous_correct);

/// The user message for one trial; feedback, when present, is its own first
/// line.
std::string render_trial_message(const Stimulus& stimulus,
                                 std::optional<bool> previous_correct,
                                 const RenderOptions& options = {});

/// Never throws; anything unrecognized is Verdict::kInvalid.
ParsedResponse parse_response(std::string_view raw, Variant variant);

/// Inverse of render_trial_message for a given config. Returns nullopt if the
/// text is not a well-formed stimulus of that config.
std::optional<Stimulus> decode_stimulus(std::string_view message,
                                        const TaskConfig& config);

/// English words for a non-negative integer ("forty-nine").
std::string number_to_words(int value);

}  // namespace nback
