#include "nback/prompts.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <stdexcept>
#include <vector>

namespace nback {

namespace {

constexpr std::string_view kCorrectFeedback = "Your last response was correct.";
constexpr std::string_view kWrongFeedback = "Your last response was wrong.";

constexpr std::string_view kRespondM =
    "\"m\" (no quotation marks, just the letter m)";
constexpr std::string_view kRespondDash =
    "\"-\" (no quotation marks, just the dash sign)";
constexpr std::string_view kAllowedOnly =
    "Only \"m\" and \"-\" are allowed responses. ";
constexpr std::string_view kNoExplanations =
    "No explanations needed: please don't output any extra words!! ";
constexpr std::string_view kFeedbackNote =
    "Feedback on whether your last response was correct or wrong will also be "
    "presented. Please take advantage of feedback information to improve your "
    "performance. ";
constexpr std::string_view kThinkStepByStep =
    "Please think step by step and provide your thinking steps after "
    "responding with \"m\" or \"-\".";
constexpr std::string_view kFormatExamplesIntro =
    "Here are examples of how to format your response:\n";
constexpr std::string_view kFirstTrialExample =
    "1.\"-:this is the first trial, so my response is -\".\n";
constexpr std::string_view kBegin = "Now begins the task.";

std::string plural(int n, std::string_view noun) {
  std::string out(noun);
  if (n != 1) out += 's';
  return out;
}

std::string back_task(int n) {
  return "You are asked to perform a " + std::to_string(n) + "-back task. ";
}

// "the previous trial" / "two trials ago" / "three trials ago"
std::string spatial_lag(int n) {
  if (n == 1) return "the previous trial";
  return number_to_words(n) + " trials ago";
}

std::string grid_rows(int g, Cell x, std::string_view sep) {
  std::string out;
  for (int r = 0; r < g; ++r) {
    if (r > 0) out += sep;
    out += '|';
    for (int c = 0; c < g; ++c) {
      out += (Cell{r, c} == x) ? 'X' : '_';
      out += '|';
    }
  }
  return out;
}

std::string fenced_grid(int g, Cell x) {
  return "``` " + grid_rows(g, x, " ") + " ```";
}

std::string grid_intro(const TaskConfig& c) {
  const int g = c.grid_size;
  return "You will see a sequence of " + std::to_string(g) + "*" +
         std::to_string(g) + " grids. Each grid has a letter X in one of the " +
         number_to_words(g * g) + " positions.";
}

std::string verbal_instruction(const TaskConfig& c) {
  const std::string words = number_to_words(c.n);
  std::string s = back_task(c.n);
  s += "You will see a sequence of letters. "
       "The sequence will be presented one letter at a time";
  if (c.variant == Variant::kCotReasoning) {
    s += ".\nYour task is to respond with ";
    s += kRespondM;
    s += " whenever the current letter is the same as the letter " + words +
         " " + plural(c.n, "letter") + " ago, and ";
    s += kRespondDash;
    s += " otherwise. ";
    s += kThinkStepByStep;
    s += '\n';
    s += kFormatExamplesIntro;
    s += kFirstTrialExample;
    s += "2.\"m:the letter " + words + " " + plural(c.n, "trial") +
         " ago was a, the current letter is a, so my response is m\".\n";
    s += "3.\"-:the letter " + words + " " + plural(c.n, "letter") +
         " ago was a, the current letter is b, so my response is -\".\n";
    s += kBegin;
    return s;
  }
  if (c.variant == Variant::kNoise) {
    s += ", accompanied with random noise symbols chosen from \"" +
         c.noise_charset +
         "\". Please ignore the noise symbols and focus on the letter only";
  }
  s += ". Your task is to respond with ";
  s += kRespondM;
  s += " whenever the current letter is the same as the previous " + words +
       " " + plural(c.n, "letter") + " ago, and ";
  s += kRespondDash;
  s += " otherwise. ";
  if (c.variant == Variant::kFeedback) s += kFeedbackNote;
  s += kAllowedOnly;
  s += kNoExplanations;
  s += "The sequence will be presented one letter at a time. ";
  s += kBegin;
  return s;
}

std::string spatial_instruction(const TaskConfig& c) {
  const int g = c.grid_size;
  const std::string example = fenced_grid(g, Cell{0, 0});
  std::string s = back_task(c.n) + grid_intro(c) +
                  " For example, a grid with X at top left corner would be " +
                  example + ".";
  if (c.variant == Variant::kCotReasoning) {
    const std::string ago = number_to_words(c.n) + " " + plural(c.n, "trial") +
                            " ago";
    s += " The sequence will be presented one grid at a time.\n";
    s += "Your task is to respond with ";
    s += kRespondM;
    s += " whenever the X is in the same position as " + spatial_lag(c.n) +
         ", and ";
    s += kRespondDash;
    s += " otherwise. ";
    s += kThinkStepByStep;
    s += '\n';
    s += kFormatExamplesIntro;
    s += kFirstTrialExample;
    s += "2.\"m:the X " + ago +
         " was in row 1, column 1, the current X is in row 1, column 1, so my "
         "response is m\".\n";
    s += "3.\"-:the X " + ago +
         " was in row 1, column 1, the current X is in row 2, column 2, so my "
         "response is -\".\n";
    s += kBegin;
    return s;
  }
  if (c.variant == Variant::kNoise) {
    s += " The grids will be accompanied with random noise symbols chosen "
         "from \"" +
         c.noise_charset +
         "\" in some of the empty positions. Please ignore the noise symbols "
         "and focus on the X only.";
  }
  s += " Your task is to respond with ";
  s += kRespondM;
  s += " whenever the X is in the same position as " + spatial_lag(c.n) +
       ", and respond with ";
  s += kRespondDash;
  s += " otherwise. ";
  if (c.variant == Variant::kFeedback) s += kFeedbackNote;
  s += kAllowedOnly;
  s += kNoExplanations;
  s += "The sequence will be presented one grid at a time. ";
  s += kBegin;
  return s;
}

std::string abstract_instruction(const TaskConfig& c) {
  const int g = c.grid_size;
  const std::string top_left = fenced_grid(g, Cell{0, 0});
  std::string s = back_task(c.n) + grid_intro(c) +
                  "\nFor example, a grid with X at top left corner would be " +
                  top_left + ". Your task is to respond with ";
  s += kRespondM;
  s += " whenever the X in the current grid is in the same row or column as "
       "the X in " +
       spatial_lag(c.n) + ", and ";
  s += kRespondDash;
  s += " otherwise. For example, the X in " + top_left +
       " is in the same row as the X in " + fenced_grid(g, Cell{0, 1}) +
       " and " + fenced_grid(g, Cell{0, 2}) +
       ", and in the same column as the X in " + fenced_grid(g, Cell{1, 0}) +
       " and " + fenced_grid(g, Cell{2, 0}) + ". ";
  if (c.variant == Variant::kAbstractInclIdentical) {
    s += "Note that " + top_left + " is also in the same row and column as " +
         top_left + " itself. ";
  } else {
    s += "Note that if the X in " + spatial_lag(c.n) +
         " was at the identical location to the X in the current grid, that "
         "does not count as a match: for example, " +
         top_left + " is not a match to " + top_left + " itself. ";
  }
  s += "The sequence will be presented one grid at a time. Note that you are "
       "only allowed to respond with \"m\" or \"-\". ";
  s += kNoExplanations;
  s += kBegin;
  return s;
}

std::string_view trim(std::string_view s) {
  const auto is_space = [](unsigned char ch) { return std::isspace(ch) != 0; };
  while (!s.empty() && is_space(static_cast<unsigned char>(s.front()))) {
    s.remove_prefix(1);
  }
  while (!s.empty() && is_space(static_cast<unsigned char>(s.back()))) {
    s.remove_suffix(1);
  }
  return s;
}

std::optional<Verdict> token_verdict(std::string_view token) {
  if (token.size() != 1) return std::nullopt;
  const auto ch = static_cast<char>(
      std::tolower(static_cast<unsigned char>(token.front())));
  if (ch == 'm') return Verdict::kMatch;
  if (ch == '-') return Verdict::kNonmatch;
  return std::nullopt;
}

std::string_view strip_feedback(std::string_view message) {
  for (std::string_view fb : {kCorrectFeedback, kWrongFeedback}) {
    if (message.substr(0, fb.size()) == fb) {
      message.remove_prefix(fb.size());
      if (!message.empty() && message.front() == '\n') message.remove_prefix(1);
      return message;
    }
  }
  return message;
}

}  // namespace

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::kMatch: return "match";
    case Verdict::kNonmatch: return "nonmatch";
    case Verdict::kInvalid: return "invalid";
  }
  return "?";
}

std::optional<Verdict> parse_verdict_name(std::string_view s) {
  if (s == "match") return Verdict::kMatch;
  if (s == "nonmatch") return Verdict::kNonmatch;
  if (s == "invalid") return Verdict::kInvalid;
  return std::nullopt;
}

std::string number_to_words(int value) {
  static constexpr std::array<std::string_view, 20> kOnes = {
      "zero",    "one",     "two",       "three",    "four",
      "five",    "six",     "seven",     "eight",    "nine",
      "ten",     "eleven",  "twelve",    "thirteen", "fourteen",
      "fifteen", "sixteen", "seventeen", "eighteen", "nineteen"};
  static constexpr std::array<std::string_view, 10> kTens = {
      "", "", "twenty", "thirty", "forty", "fifty",
      "sixty", "seventy", "eighty", "ninety"};
  if (value < 0) return "minus " + number_to_words(-value);
  if (value < 20) return std::string(kOnes[static_cast<std::size_t>(value)]);
  if (value < 100) {
    std::string out(kTens[static_cast<std::size_t>(value / 10)]);
    if (value % 10 != 0) {
      out += '-';
      out += kOnes[static_cast<std::size_t>(value % 10)];
    }
    return out;
  }
  if (value < 1000) {
    std::string out = number_to_words(value / 100) + " hundred";
    if (value % 100 != 0) out += " " + number_to_words(value % 100);
    return out;
  }
  std::string out = number_to_words(value / 1000) + " thousand";
  if (value % 1000 != 0) out += " " + number_to_words(value % 1000);
  return out;
}

std::string build_instruction(const TaskConfig& config) {
  if (is_abstract(config.variant)) {
    if (config.family != Family::kSpatial || config.grid_size != 3) {
      throw std::invalid_argument(
          "build_instruction: abstract variants exist only for 3x3 spatial "
          "tasks");
    }
    return abstract_instruction(config);
  }
  if (config.n < 1) throw std::invalid_argument("build_instruction: n < 1");
  return config.family == Family::kVerbal ? verbal_instruction(config)
                                          : spatial_instruction(config);
}

std::string render_stimulus(const Stimulus& stimulus,
                            const RenderOptions& options) {
  if (const auto* v = std::get_if<VerbalStimulus>(&stimulus)) return v->text;
  const auto& s = std::get<SpatialStimulus>(stimulus);
  std::string out;
  for (int r = 0; r < s.grid_size; ++r) {
    if (r > 0) out += options.single_line_grid ? ' ' : '\n';
    out += '|';
    for (int c = 0; c < s.grid_size; ++c) {
      const Cell cell{r, c};
      if (cell == s.occupied) {
        out += 'X';
      } else if (auto it = s.noise.find(cell); it != s.noise.end()) {
        out += it->second;
      } else {
        out += '_';
      }
      out += '|';
    }
  }
  return out;
}

std::string render_feedback(bool previous_correct) {
  return std::string(previous_correct ? kCorrectFeedback : kWrongFeedback);
}

std::string render_trial_message(const Stimulus& stimulus,
                                 std::optional<bool> previous_correct,
                                 const RenderOptions& options) {
  std::string out;
  if (previous_correct) {
    out = render_feedback(*previous_correct);
    out += '\n';
  }
  out += render_stimulus(stimulus, options);
  return out;
}

ParsedResponse parse_response(std::string_view raw, Variant variant) {
  ParsedResponse out;
  out.raw = std::string(raw);
  const std::string_view text = trim(raw);
  if (auto v = token_verdict(text)) {
    out.verdict = *v;
    return out;
  }
  if (variant != Variant::kCotReasoning) return out;
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) return out;
  if (auto v = token_verdict(trim(text.substr(0, colon)))) {
    out.verdict = *v;
    out.rationale = std::string(trim(text.substr(colon + 1)));
  }
  return out;
}

std::optional<Stimulus> decode_stimulus(std::string_view message,
                                        const TaskConfig& config) {
  const std::string_view body = strip_feedback(message);
  if (config.family == Family::kVerbal) {
    std::optional<std::size_t> found;
    for (std::size_t i = 0; i < body.size(); ++i) {
      if (config.alphabet.find(body[i]) != std::string::npos) {
        if (found) return std::nullopt;
        found = i;
      } else if (config.noise_charset.find(body[i]) == std::string::npos) {
        return std::nullopt;
      }
    }
    if (!found) return std::nullopt;
    return VerbalStimulus{body[*found], std::string(body), *found};
  }

  const int g = config.grid_size;
  std::vector<std::string_view> rows;
  std::size_t pos = 0;
  while (pos < body.size()) {
    const auto end = body.find_first_of(" \n", pos);
    const auto row = body.substr(pos, end == std::string_view::npos
                                          ? std::string_view::npos
                                          : end - pos);
    if (!row.empty()) rows.push_back(row);
    if (end == std::string_view::npos) break;
    pos = end + 1;
  }
  if (rows.size() != static_cast<std::size_t>(g)) return std::nullopt;
  SpatialStimulus s;
  s.grid_size = g;
  bool have_x = false;
  for (int r = 0; r < g; ++r) {
    const auto row = rows[static_cast<std::size_t>(r)];
    if (row.size() != static_cast<std::size_t>(2 * g + 1)) return std::nullopt;
    for (int c = 0; c <= g; ++c) {
      if (row[static_cast<std::size_t>(2 * c)] != '|') return std::nullopt;
    }
    for (int c = 0; c < g; ++c) {
      const char ch = row[static_cast<std::size_t>(2 * c + 1)];
      if (ch == 'X') {
        if (have_x) return std::nullopt;
        have_x = true;
        s.occupied = Cell{r, c};
      } else if (ch != '_') {
        if (config.noise_charset.find(ch) == std::string::npos) {
          return std::nullopt;
        }
        s.noise.emplace(Cell{r, c}, ch);
      }
    }
  }
  if (!have_x) return std::nullopt;
  return s;
}

}  // namespace nback
