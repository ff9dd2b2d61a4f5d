#include <gtest/gtest.h>

#include <set>

#include "nback/prompts.hpp"
#include "oracles.hpp"

namespace {

using namespace nback;

std::string golden(const std::string& name) {
  return oracle::read_file(std::string(NBACK_GOLDEN_DIR) + "/instructions/" +
                           name + ".txt");
}

struct GoldenCase {
  Family family;
  Variant variant;
  int grid_size;
};

class InstructionGolden : public ::testing::TestWithParam<GoldenCase> {};

TEST_P(InstructionGolden, MatchesByteForByte) {
  const GoldenCase c = GetParam();
  for (int n = 1; n <= 3; ++n) {
    TaskConfig cfg;
    cfg.family = c.family;
    cfg.variant = c.variant;
    cfg.grid_size = c.grid_size;
    cfg.n = n;
    std::string name = std::string(to_string(c.family)) + "_" +
                       std::string(to_string(c.variant));
    if (c.grid_size != 3) name += "_g" + std::to_string(c.grid_size);
    name += "_n" + std::to_string(n);
    const std::string expected = golden(name);
    ASSERT_FALSE(expected.empty()) << name;
    EXPECT_EQ(build_instruction(cfg), expected) << name;
  }
}

INSTANTIATE_TEST_SUITE_P(
    AllTemplates, InstructionGolden,
    ::testing::Values(
        GoldenCase{Family::kVerbal, Variant::kBase, 3},
        GoldenCase{Family::kVerbal, Variant::kNoise, 3},
        GoldenCase{Family::kVerbal, Variant::kFeedback, 3},
        GoldenCase{Family::kVerbal, Variant::kCotReasoning, 3},
        GoldenCase{Family::kSpatial, Variant::kBase, 3},
        GoldenCase{Family::kSpatial, Variant::kNoise, 3},
        GoldenCase{Family::kSpatial, Variant::kFeedback, 3},
        GoldenCase{Family::kSpatial, Variant::kCotReasoning, 3},
        GoldenCase{Family::kSpatial, Variant::kAbstractInclIdentical, 3},
        GoldenCase{Family::kSpatial, Variant::kAbstractExclIdentical, 3},
        GoldenCase{Family::kSpatial, Variant::kBase, 4},
        GoldenCase{Family::kSpatial, Variant::kBase, 5},
        GoldenCase{Family::kSpatial, Variant::kBase, 7}));

TEST(Prompts, SpatialInstructionsContainTheGridLiteral) {
  TaskConfig cfg;
  cfg.family = Family::kSpatial;
  for (Variant v : {Variant::kBase, Variant::kAbstractInclIdentical}) {
    cfg.variant = v;
    EXPECT_NE(build_instruction(cfg).find("|X|_|_| |_|_|_| |_|_|_|"),
              std::string::npos);
  }
}

TEST(Prompts, NoiseInstructionUsesConfiguredCharset) {
  TaskConfig cfg;
  cfg.variant = Variant::kNoise;
  cfg.noise_charset = "*+";
  EXPECT_NE(build_instruction(cfg).find("chosen from \"*+\""), std::string::npos);
}

TEST(Prompts, AbstractTemplatesNeedThreeByThreeGrids) {
  TaskConfig cfg;
  cfg.variant = Variant::kAbstractExclIdentical;
  EXPECT_THROW(build_instruction(cfg), std::invalid_argument);
  cfg.family = Family::kSpatial;
  cfg.grid_size = 4;
  EXPECT_THROW(build_instruction(cfg), std::invalid_argument);
}

TEST(Prompts, RenderGrid) {
  SpatialStimulus s{3, {1, 2}, {{{0, 0}, '#'}}};
  EXPECT_EQ(render_stimulus(s), "|#|_|_|\n|_|_|X|\n|_|_|_|");
  EXPECT_EQ(render_stimulus(s, {.single_line_grid = true}),
            "|#|_|_| |_|_|X| |_|_|_|");
}

TEST(Prompts, TrialMessagePutsFeedbackOnItsOwnLine) {
  const Stimulus v = VerbalStimulus{'k', "%k", 1};
  EXPECT_EQ(render_trial_message(v, std::nullopt), "%k");
  EXPECT_EQ(render_trial_message(v, true), "Your last response was correct.\n%k");
  EXPECT_EQ(render_trial_message(v, false), "Your last response was wrong.\n%k");
}

TEST(Prompts, ParseResponse) {
  const auto base = Variant::kBase;
  EXPECT_EQ(parse_response("m", base).verdict, Verdict::kMatch);
  EXPECT_EQ(parse_response("  M\n", base).verdict, Verdict::kMatch);
  EXPECT_EQ(parse_response("-", base).verdict, Verdict::kNonmatch);
  EXPECT_EQ(parse_response("", base).verdict, Verdict::kInvalid);
  EXPECT_EQ(parse_response("match", base).verdict, Verdict::kInvalid);
  EXPECT_EQ(parse_response("m:because", base).verdict, Verdict::kInvalid);
  EXPECT_EQ(parse_response("m -", base).verdict, Verdict::kInvalid);

  const auto cot = Variant::kCotReasoning;
  const auto r = parse_response("m:the letter one letter ago was a, so m", cot);
  EXPECT_EQ(r.verdict, Verdict::kMatch);
  ASSERT_TRUE(r.rationale.has_value());
  EXPECT_EQ(*r.rationale, "the letter one letter ago was a, so m");
  EXPECT_EQ(parse_response("-:first trial", cot).verdict, Verdict::kNonmatch);
  EXPECT_EQ(parse_response("-", cot).verdict, Verdict::kNonmatch);
  EXPECT_EQ(parse_response("x:nope", cot).verdict, Verdict::kInvalid);
  EXPECT_EQ(parse_response("maybe: m", cot).verdict, Verdict::kInvalid);
}

TEST(Prompts, DecodeInvertsRenderForEveryVariant) {
  for (Family f : {Family::kVerbal, Family::kSpatial}) {
    for (Variant v : {Variant::kBase, Variant::kNoise, Variant::kFeedback}) {
      for (bool single : {false, true}) {
        TaskConfig cfg;
        cfg.family = f;
        cfg.variant = v;
        cfg.grid_size = 4;
        cfg.seed = 3;
        std::set<std::string> texts;
        for (std::size_t b = 0; b < 10; ++b) {
          for (const Trial& t : generate_block(cfg, b).trials) {
            const std::string msg =
                render_trial_message(t.stimulus, b % 2 == 0, {single});
            const auto back = decode_stimulus(msg, cfg);
            ASSERT_TRUE(back.has_value()) << msg;
            EXPECT_EQ(*back, t.stimulus);
          }
        }
      }
    }
  }
}

TEST(Prompts, DecodeRejectsMalformedText) {
  TaskConfig verbal;
  EXPECT_FALSE(decode_stimulus("bc", verbal).has_value());
  EXPECT_FALSE(decode_stimulus("#!", verbal).has_value());
  TaskConfig spatial;
  spatial.family = Family::kSpatial;
  EXPECT_FALSE(decode_stimulus("|_|_|_|\n|_|_|_|\n|_|_|_|", spatial).has_value());
  EXPECT_FALSE(decode_stimulus("|X|_|\n|_|_|", spatial).has_value());
  EXPECT_FALSE(decode_stimulus("|X|X|_|\n|_|_|_|\n|_|_|_|", spatial).has_value());
}

TEST(Prompts, NumberWords) {
  EXPECT_EQ(number_to_words(9), "nine");
  EXPECT_EQ(number_to_words(16), "sixteen");
  EXPECT_EQ(number_to_words(25), "twenty-five");
  EXPECT_EQ(number_to_words(49), "forty-nine");
  EXPECT_EQ(number_to_words(100), "one hundred");
  EXPECT_EQ(number_to_words(121), "one hundred twenty-one");
}

}  // namespace
