#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "nback/prompts.hpp"
#include "nback/rng.hpp"
#include "nback/task.hpp"

namespace nback {

enum class Role { kSystem, kUser, kAssistant };

std::string_view to_string(Role r);

struct Message {
  Role role = Role::kUser;
  std::string content;

  bool operator==(const Message&) const = default;
};

enum class AgentKind {
  kRemoteChat,
  kPerfect,
  kRandom,
  kLimitedMemory,
  kLastStimulus,
  kHumanTerminal,
};

std::string_view to_string(AgentKind k);
std::optional<AgentKind> parse_agent_kind(std::string_view s);

struct AgentSpec {
  AgentKind kind = AgentKind::kPerfect;

  // remote_chat
  std::string endpoint;  // scheme://host[:port]
  std::string path = "/v1/chat/completions";
  std::string model;
  std::optional<double> temperature;  // unset: endpoint default
  std::optional<int> max_tokens;
  std::string api_key_env = "OPENAI_API_KEY";
  double timeout_seconds = 60.0;
  int max_attempts = 5;
  int backoff_base_ms = 500;
  int backoff_max_ms = 30000;

  // random
  double respond_probability = 1.0 / 3.0;

  // limited_memory
  double forget_rate = 0.2;
  double guess_probability = 1.0 / 3.0;
};

std::vector<std::string> validate(const AgentSpec& spec);

/// Provenance recorded in transcripts.
struct AgentMetadata {
  std::string kind;
  std::string model;
  std::optional<double> temperature;
  std::string endpoint;
};

AgentMetadata metadata_for(const AgentSpec& spec);

/// The parameters that matter for the agent's kind, for manifests.
nlohmann::json agent_spec_to_json(const AgentSpec& spec);

/// Transport failure after the retry budget is spent (or a non-retryable
/// response).
class TransportError : public std::runtime_error {
 public:
  TransportError(const std::string& what, int attempts,
                 std::optional<int> http_status)
      : std::runtime_error(what), attempts_(attempts), status_(http_status) {}
  int attempts() const { return attempts_; }
  std::optional<int> http_status() const { return status_; }

 private:
  int attempts_;
  std::optional<int> status_;
};

/// The interactive session ended (EOF on the terminal).
class SessionAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One agent instance serves one conversation (one block). respond() is
/// called once per trial with the full history, which ends with the current
/// trial's user message.
class Agent {
 public:
  virtual ~Agent() = default;
  virtual std::string respond(std::span<const Message> history) = 0;
};

/// Global request pacing shared by every remote conversation.
class RateLimiter {
 public:
  explicit RateLimiter(double requests_per_second);
  void acquire();

 private:
  std::chrono::steady_clock::duration interval_;
  std::chrono::steady_clock::time_point next_;
  std::mutex mu_;
};

/// Working memory that forgets: each stored item survives each later trial
/// with probability 1 - forget_rate. If the lag-n item is still held the
/// answer follows the rule, otherwise "m" is guessed with guess_probability.
class LimitedMemoryPolicy {
 public:
  LimitedMemoryPolicy(double forget_rate, int n, MatchRule rule,
                      double guess_probability = 1.0 / 3.0);

  Verdict step(const Stimulus& current, Rng& rng);

 private:
  struct Slot {
    Stimulus stimulus;
    bool alive = true;
  };
  double forget_rate_;
  std::size_t n_;
  MatchRule rule_;
  double guess_probability_;
  std::deque<Slot> memory_;
};

/// "m"/"-" or, for the reasoning variant, "m:<rationale>".
std::string format_reply(Verdict verdict, Variant variant,
                         std::string_view rationale);

struct AgentContext {
  TaskConfig config;
  std::uint64_t seed = 0;  // per-block agent stream
  RateLimiter* rate_limiter = nullptr;
  std::istream* input = nullptr;    // human_terminal
  std::ostream* output = nullptr;   // human_terminal
};

std::unique_ptr<Agent> make_agent(const AgentSpec& spec,
                                  const AgentContext& context);

/// Request body for a chat-completions endpoint.
std::string build_chat_request(const AgentSpec& spec,
                               std::span<const Message> history);

/// choices[0].message.content; throws std::runtime_error on malformed bodies.
std::string extract_chat_reply(std::string_view body);

}  // namespace nback
