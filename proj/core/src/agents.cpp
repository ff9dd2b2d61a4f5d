#include "nback/agents.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <istream>
#include <nlohmann/json.hpp>
#include <ostream>
#include <thread>

#include "httplib.h"

namespace nback {

using nlohmann::json;

std::string_view to_string(Role r) {
  switch (r) {
    case Role::kSystem: return "system";
    case Role::kUser: return "user";
    case Role::kAssistant: return "assistant";
  }
  return "?";
}

std::string_view to_string(AgentKind k) {
  switch (k) {
    case AgentKind::kRemoteChat: return "remote_chat";
    case AgentKind::kPerfect: return "perfect";
    case AgentKind::kRandom: return "random";
    case AgentKind::kLimitedMemory: return "limited_memory";
    case AgentKind::kLastStimulus: return "last_stimulus";
    case AgentKind::kHumanTerminal: return "human_terminal";
  }
  return "?";
}

std::optional<AgentKind> parse_agent_kind(std::string_view s) {
  for (AgentKind k : {AgentKind::kRemoteChat, AgentKind::kPerfect,
                      AgentKind::kRandom, AgentKind::kLimitedMemory,
                      AgentKind::kLastStimulus, AgentKind::kHumanTerminal}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

std::vector<std::string> validate(const AgentSpec& spec) {
  std::vector<std::string> out;
  auto probability = [&](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) {
      out.push_back(std::string(name) + ": must lie in [0, 1]");
    }
  };
  probability(spec.respond_probability, "agent.respond_probability");
  probability(spec.forget_rate, "agent.forget_rate");
  probability(spec.guess_probability, "agent.guess_probability");
  if (spec.kind == AgentKind::kRemoteChat) {
    if (spec.endpoint.empty()) out.push_back("agent.endpoint: required");
    if (spec.model.empty()) out.push_back("agent.model: required");
    if (spec.max_attempts < 1) out.push_back("agent.max_attempts: must be >= 1");
    if (spec.timeout_seconds <= 0) {
      out.push_back("agent.timeout_seconds: must be > 0");
    }
    if (spec.backoff_base_ms < 0 || spec.backoff_max_ms < spec.backoff_base_ms) {
      out.push_back("agent.backoff_*: need 0 <= base <= max");
    }
    if (spec.max_tokens && *spec.max_tokens < 1) {
      out.push_back("agent.max_tokens: must be >= 1");
    }
  }
  return out;
}

AgentMetadata metadata_for(const AgentSpec& spec) {
  AgentMetadata m;
  m.kind = std::string(to_string(spec.kind));
  if (spec.kind == AgentKind::kRemoteChat) {
    m.model = spec.model;
    m.temperature = spec.temperature;
    m.endpoint = spec.endpoint + spec.path;
  }
  return m;
}

nlohmann::json agent_spec_to_json(const AgentSpec& s) {
  json j{{"kind", to_string(s.kind)}};
  switch (s.kind) {
    case AgentKind::kRandom:
      j["respond_probability"] = s.respond_probability;
      break;
    case AgentKind::kLimitedMemory:
      j["forget_rate"] = s.forget_rate;
      j["guess_probability"] = s.guess_probability;
      break;
    case AgentKind::kRemoteChat:
      j["endpoint"] = s.endpoint;
      j["path"] = s.path;
      j["model"] = s.model;
      if (s.temperature) j["temperature"] = *s.temperature;
      if (s.max_tokens) j["max_tokens"] = *s.max_tokens;
      j["api_key_env"] = s.api_key_env;
      j["timeout_seconds"] = s.timeout_seconds;
      j["max_attempts"] = s.max_attempts;
      j["backoff_base_ms"] = s.backoff_base_ms;
      j["backoff_max_ms"] = s.backoff_max_ms;
      break;
    default:
      break;
  }
  return j;
}

RateLimiter::RateLimiter(double requests_per_second)
    : interval_(requests_per_second > 0
                    ? std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                          std::chrono::duration<double>(1.0 / requests_per_second))
                    : std::chrono::steady_clock::duration::zero()),
      next_(std::chrono::steady_clock::now()) {}

void RateLimiter::acquire() {
  if (interval_ == std::chrono::steady_clock::duration::zero()) return;
  std::chrono::steady_clock::time_point slot;
  {
    std::lock_guard lock(mu_);
    slot = std::max(next_, std::chrono::steady_clock::now());
    next_ = slot + interval_;
  }
  std::this_thread::sleep_until(slot);
}

LimitedMemoryPolicy::LimitedMemoryPolicy(double forget_rate, int n,
                                         MatchRule rule,
                                         double guess_probability)
    : forget_rate_(forget_rate),
      n_(static_cast<std::size_t>(n)),
      rule_(rule),
      guess_probability_(guess_probability) {
  if (!(forget_rate >= 0.0 && forget_rate <= 1.0)) {
    throw std::invalid_argument("LimitedMemoryPolicy: forget_rate not in [0,1]");
  }
  if (n < 1) throw std::invalid_argument("LimitedMemoryPolicy: n < 1");
}

Verdict LimitedMemoryPolicy::step(const Stimulus& current, Rng& rng) {
  // Arrival of a new trial is one more chance to forget for everything held.
  for (auto& slot : memory_) {
    if (slot.alive && rng.bernoulli(forget_rate_)) slot.alive = false;
  }
  Verdict v = Verdict::kNonmatch;
  if (memory_.size() == n_) {
    const Slot& ref = memory_.front();
    if (ref.alive) {
      v = evaluate_match(rule_, current, ref.stimulus) ? Verdict::kMatch
                                                       : Verdict::kNonmatch;
    } else {
      v = rng.bernoulli(guess_probability_) ? Verdict::kMatch
                                             : Verdict::kNonmatch;
    }
  }
  memory_.push_back(Slot{current, true});
  if (memory_.size() > n_) memory_.pop_front();
  return v;
}

std::string format_reply(Verdict verdict, Variant variant,
                         std::string_view rationale) {
  std::string token = verdict == Verdict::kMatch ? "m" : "-";
  if (variant != Variant::kCotReasoning) return token;
  return token + ":" + std::string(rationale);
}

namespace {

std::vector<std::size_t> user_indices(std::span<const Message> history) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < history.size(); ++i) {
    if (history[i].role == Role::kUser) out.push_back(i);
  }
  if (out.empty() || history.back().role != Role::kUser) {
    throw std::logic_error("agent: history must end with a user message");
  }
  return out;
}

Stimulus decode_or_throw(const Message& m, const TaskConfig& config) {
  auto s = decode_stimulus(m.content, config);
  if (!s) {
    throw std::logic_error("agent: cannot decode stimulus from \"" + m.content +
                           "\"");
  }
  return *s;
}

bool same_item(const Stimulus& a, const Stimulus& b) {
  if (const auto* va = std::get_if<VerbalStimulus>(&a)) {
    return va->letter == std::get<VerbalStimulus>(b).letter;
  }
  return std::get<SpatialStimulus>(a).occupied ==
         std::get<SpatialStimulus>(b).occupied;
}

std::string describe(const Stimulus& s) {
  if (const auto* v = std::get_if<VerbalStimulus>(&s)) {
    return "the letter " + std::string(1, v->letter);
  }
  const auto& sp = std::get<SpatialStimulus>(s);
  return "the X in row " + std::to_string(sp.occupied.row + 1) + ", column " +
         std::to_string(sp.occupied.col + 1);
}

class PerfectAgent final : public Agent {
 public:
  explicit PerfectAgent(TaskConfig config)
      : config_(std::move(config)), rule_(rule_for(config_)) {}

  std::string respond(std::span<const Message> history) override {
    const auto users = user_indices(history);
    const std::size_t t = users.size() - 1;
    const auto n = static_cast<std::size_t>(config_.n);
    const Stimulus current = decode_or_throw(history[users[t]], config_);
    if (t < n) {
      return format_reply(Verdict::kNonmatch, config_.variant,
                          "there is no trial " + std::to_string(n) +
                              " back yet, so my response is -");
    }
    const Stimulus reference = decode_or_throw(history[users[t - n]], config_);
    const bool m = evaluate_match(rule_, current, reference);
    return format_reply(m ? Verdict::kMatch : Verdict::kNonmatch,
                        config_.variant,
                        std::to_string(n) + " back was " + describe(reference) +
                            ", now " + describe(current) + ", so my response is " +
                            (m ? "m" : "-"));
  }

 private:
  TaskConfig config_;
  MatchRule rule_;
};

class RandomAgent final : public Agent {
 public:
  RandomAgent(double p, Variant variant, std::uint64_t seed)
      : p_(p), variant_(variant), rng_(seed) {}

  std::string respond(std::span<const Message> history) override {
    user_indices(history);
    const Verdict v = rng_.bernoulli(p_) ? Verdict::kMatch : Verdict::kNonmatch;
    return format_reply(v, variant_, "guessing");
  }

 private:
  double p_;
  Variant variant_;
  Rng rng_;
};

class LastStimulusAgent final : public Agent {
 public:
  explicit LastStimulusAgent(TaskConfig config) : config_(std::move(config)) {}

  std::string respond(std::span<const Message> history) override {
    const auto users = user_indices(history);
    const std::size_t t = users.size() - 1;
    bool m = false;
    if (t >= 1) {
      m = same_item(decode_or_throw(history[users[t]], config_),
                    decode_or_throw(history[users[t - 1]], config_));
    }
    return format_reply(m ? Verdict::kMatch : Verdict::kNonmatch,
                        config_.variant, "compared with the previous trial");
  }

 private:
  TaskConfig config_;
};

class LimitedMemoryAgent final : public Agent {
 public:
  LimitedMemoryAgent(TaskConfig config, double forget_rate,
                     double guess_probability, std::uint64_t seed)
      : config_(std::move(config)),
        policy_(forget_rate, config_.n, rule_for(config_), guess_probability),
        rng_(seed) {}

  std::string respond(std::span<const Message> history) override {
    const auto users = user_indices(history);
    if (users.size() != seen_ + 1) {
      throw std::logic_error("limited_memory agent: history skipped a trial");
    }
    ++seen_;
    const Verdict v =
        policy_.step(decode_or_throw(history[users.back()], config_), rng_);
    return format_reply(v, config_.variant, "from memory");
  }

 private:
  TaskConfig config_;
  LimitedMemoryPolicy policy_;
  Rng rng_;
  std::size_t seen_ = 0;
};

class HumanTerminalAgent final : public Agent {
 public:
  HumanTerminalAgent(std::istream& in, std::ostream& out) : in_(in), out_(out) {}

  std::string respond(std::span<const Message> history) override {
    user_indices(history);
    if (!shown_instruction_ && !history.empty() &&
        history.front().role == Role::kSystem) {
      out_ << history.front().content << "\n\n";
      shown_instruction_ = true;
    }
    out_ << history.back().content << "\n> " << std::flush;
    std::string line;
    if (!std::getline(in_, line)) {
      throw SessionAborted("terminal input closed");
    }
    return line;
  }

 private:
  std::istream& in_;
  std::ostream& out_;
  bool shown_instruction_ = false;
};

bool retryable_status(int status) {
  return status == 408 || status == 429 || status >= 500;
}

class RemoteChatAgent final : public Agent {
 public:
  RemoteChatAgent(AgentSpec spec, const AgentContext& ctx)
      : spec_(std::move(spec)),
        client_(spec_.endpoint),
        limiter_(ctx.rate_limiter),
        jitter_(derive_stream_seed(ctx.seed, StreamPurpose::kRetry, {})) {
    if (!client_.is_valid()) {
      throw std::invalid_argument("remote_chat: unsupported endpoint \"" +
                                  spec_.endpoint + "\"");
    }
    const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
        std::chrono::duration<double>(spec_.timeout_seconds));
    client_.set_connection_timeout(timeout);
    client_.set_read_timeout(timeout);
    client_.set_write_timeout(timeout);
    if (!spec_.api_key_env.empty()) {
      const char* key = std::getenv(spec_.api_key_env.c_str());
      if (key == nullptr || *key == '\0') {
        throw std::invalid_argument("remote_chat: environment variable " +
                                    spec_.api_key_env + " is not set");
      }
      headers_.emplace("Authorization", std::string("Bearer ") + key);
    }
  }

  std::string respond(std::span<const Message> history) override {
    user_indices(history);
    const std::string body = build_chat_request(spec_, history);
    std::string last_error;
    std::optional<int> last_status;
    for (int attempt = 1; attempt <= spec_.max_attempts; ++attempt) {
      if (attempt > 1) backoff(attempt - 1);
      if (limiter_ != nullptr) limiter_->acquire();
      auto res = client_.Post(spec_.path, headers_, body, "application/json");
      if (!res) {
        last_error = "transport: " + httplib::to_string(res.error());
        last_status.reset();
        continue;
      }
      last_status = res->status;
      if (res->status >= 200 && res->status < 300) {
        try {
          return extract_chat_reply(res->body);
        } catch (const std::exception& e) {
          last_error = std::string("malformed body: ") + e.what();
          continue;
        }
      }
      last_error = "HTTP " + std::to_string(res->status);
      if (!retryable_status(res->status)) {
        throw TransportError(last_error, attempt, last_status);
      }
    }
    throw TransportError(last_error + " after " +
                             std::to_string(spec_.max_attempts) + " attempts",
                         spec_.max_attempts, last_status);
  }

 private:
  // Full jitter: uniform in [0, min(cap, base * 2^(k-1))].
  void backoff(int retry) {
    const double ceiling =
        std::min<double>(spec_.backoff_max_ms,
                         spec_.backoff_base_ms * std::ldexp(1.0, retry - 1));
    const auto ms = ceiling * jitter_.uniform01();
    std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(ms));
  }

  AgentSpec spec_;
  httplib::Client client_;
  httplib::Headers headers_;
  RateLimiter* limiter_;
  Rng jitter_;
};

}  // namespace

std::string build_chat_request(const AgentSpec& spec,
                               std::span<const Message> history) {
  json messages = json::array();
  for (const auto& m : history) {
    messages.push_back(json{{"role", to_string(m.role)}, {"content", m.content}});
  }
  json req{{"model", spec.model}, {"messages", std::move(messages)}};
  if (spec.temperature) req["temperature"] = *spec.temperature;
  if (spec.max_tokens) req["max_tokens"] = *spec.max_tokens;
  return req.dump();
}

std::string extract_chat_reply(std::string_view body) {
  const json j = json::parse(body, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw std::runtime_error("response is not JSON");
  try {
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("no choices[0].message.content: ") +
                             e.what());
  }
}

std::unique_ptr<Agent> make_agent(const AgentSpec& spec,
                                  const AgentContext& context) {
  switch (spec.kind) {
    case AgentKind::kPerfect:
      return std::make_unique<PerfectAgent>(context.config);
    case AgentKind::kRandom:
      return std::make_unique<RandomAgent>(spec.respond_probability,
                                           context.config.variant, context.seed);
    case AgentKind::kLastStimulus:
      return std::make_unique<LastStimulusAgent>(context.config);
    case AgentKind::kLimitedMemory:
      return std::make_unique<LimitedMemoryAgent>(
          context.config, spec.forget_rate, spec.guess_probability,
          context.seed);
    case AgentKind::kHumanTerminal:
      if (context.input == nullptr || context.output == nullptr) {
        throw std::invalid_argument("human_terminal agent needs a terminal");
      }
      return std::make_unique<HumanTerminalAgent>(*context.input,
                                                  *context.output);
    case AgentKind::kRemoteChat:
      return std::make_unique<RemoteChatAgent>(spec, context);
  }
  throw std::invalid_argument("make_agent: unknown kind");
}

}  // namespace nback
