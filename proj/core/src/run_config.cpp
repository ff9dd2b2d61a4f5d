#include "nback/run_config.hpp"

#include <fstream>
#include <set>

namespace nback {

using nlohmann::json;

namespace {

// Reads typed fields out of one JSON object, recording problems instead of
// stopping at the first one.
class FieldReader {
 public:
  FieldReader(const json& j, std::string prefix, std::vector<std::string>& problems)
      : j_(j), prefix_(std::move(prefix)), problems_(problems) {
    if (!j_.is_object()) {
      problems_.push_back(where("") + "expected an object");
      ok_ = false;
    }
  }

  void allow(std::initializer_list<const char*> keys) {
    if (!ok_) return;
    std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& [key, _] : j_.items()) {
      if (allowed.count(key) == 0) problems_.push_back(where(key) + "unknown key");
    }
  }

  template <typename T>
  void read(const char* key, T& out) {
    if (!ok_ || !j_.contains(key)) return;
    const json& v = j_.at(key);
    bool type_ok;
    if constexpr (std::is_same_v<T, bool>) {
      type_ok = v.is_boolean();
    } else if constexpr (std::is_integral_v<T>) {
      type_ok = v.is_number_integer();
    } else if constexpr (std::is_floating_point_v<T>) {
      type_ok = v.is_number();
    } else {
      type_ok = v.is_string();
    }
    if (!type_ok) {
      problems_.push_back(where(key) + "wrong type (" + v.type_name() + ")");
      return;
    }
    out = v.get<T>();
  }

  template <typename T>
  void read_optional(const char* key, std::optional<T>& out) {
    if (!ok_ || !j_.contains(key) || j_.at(key).is_null()) return;
    T value{};
    read(key, value);
    out = value;
  }

  bool has(const char* key) const { return ok_ && j_.contains(key); }
  const json& at(const char* key) const { return j_.at(key); }
  std::string where(const std::string& key) const {
    return prefix_ + (key.empty() ? "" : (prefix_.empty() ? "" : ".") + key) +
           ": ";
  }

 private:
  const json& j_;
  std::string prefix_;
  std::vector<std::string>& problems_;
  bool ok_ = true;
};

}  // namespace

RunConfig parse_run_config(const json& j) {
  std::vector<std::string> problems;
  RunConfig rc;
  FieldReader top(j, "", problems);
  top.allow({"experiment", "task", "n_levels", "agent", "parallelism",
             "rate_limit_per_second", "output_dir", "single_line_grid"});

  if (top.has("task")) {
    FieldReader task(top.at("task"), "task", problems);
    task.allow({"family", "variant", "grid_size", "block_length",
                "target_count", "blocks", "seed", "alphabet", "noise_charset",
                "strict_lures"});
    TaskConfig& t = rc.experiment.task;
    std::string family(to_string(t.family));
    std::string variant(to_string(t.variant));
    task.read("family", family);
    task.read("variant", variant);
    if (auto f = parse_family(family)) {
      t.family = *f;
    } else {
      problems.push_back("task.family: unknown value \"" + family + "\"");
    }
    if (auto v = parse_variant(variant)) {
      t.variant = *v;
    } else {
      problems.push_back("task.variant: unknown value \"" + variant + "\"");
    }
    task.read("grid_size", t.grid_size);
    task.read("block_length", t.block_length);
    task.read("target_count", t.target_count);
    task.read("blocks", t.blocks);
    if (task.has("seed")) {
      try {
        t.seed = parse_u64(task.at("seed"));
      } catch (const std::exception& e) {
        problems.push_back(std::string("task.seed: ") + e.what());
      }
    }
    task.read("alphabet", t.alphabet);
    task.read("noise_charset", t.noise_charset);
    task.read("strict_lures", t.strict_lures);
  } else {
    problems.push_back("task: required");
  }

  if (top.has("n_levels")) {
    const json& levels = top.at("n_levels");
    if (!levels.is_array() || levels.empty()) {
      problems.push_back("n_levels: expected a nonempty array of integers");
    } else {
      rc.experiment.n_levels.clear();
      std::set<int> seen;
      for (const auto& v : levels) {
        if (!v.is_number_integer() || v.get<int>() < 1) {
          problems.push_back("n_levels: entries must be integers >= 1");
          break;
        }
        if (!seen.insert(v.get<int>()).second) {
          problems.push_back("n_levels: duplicate entry " + v.dump());
          break;
        }
        rc.experiment.n_levels.push_back(v.get<int>());
      }
    }
  }

  if (top.has("agent")) {
    FieldReader agent(top.at("agent"), "agent", problems);
    agent.allow({"kind", "endpoint", "path", "model", "temperature",
                 "max_tokens", "api_key_env", "timeout_seconds",
                 "max_attempts", "backoff_base_ms", "backoff_max_ms",
                 "respond_probability", "forget_rate", "guess_probability"});
    AgentSpec& a = rc.agent;
    std::string kind(to_string(a.kind));
    agent.read("kind", kind);
    if (auto k = parse_agent_kind(kind)) {
      a.kind = *k;
    } else {
      problems.push_back("agent.kind: unknown value \"" + kind + "\"");
    }
    agent.read("endpoint", a.endpoint);
    agent.read("path", a.path);
    agent.read("model", a.model);
    agent.read_optional("temperature", a.temperature);
    agent.read_optional("max_tokens", a.max_tokens);
    agent.read("api_key_env", a.api_key_env);
    agent.read("timeout_seconds", a.timeout_seconds);
    agent.read("max_attempts", a.max_attempts);
    agent.read("backoff_base_ms", a.backoff_base_ms);
    agent.read("backoff_max_ms", a.backoff_max_ms);
    agent.read("respond_probability", a.respond_probability);
    agent.read("forget_rate", a.forget_rate);
    agent.read("guess_probability", a.guess_probability);
    for (auto& p : validate(a)) problems.push_back(std::move(p));
  }

  top.read("parallelism", rc.parallelism);
  top.read("rate_limit_per_second", rc.rate_limit_per_second);
  std::string output_dir = rc.output_dir.string();
  top.read("output_dir", output_dir);
  rc.output_dir = output_dir;
  top.read("single_line_grid", rc.render.single_line_grid);
  if (rc.parallelism < 1) problems.push_back("parallelism: must be >= 1");
  if (rc.rate_limit_per_second < 0) {
    problems.push_back("rate_limit_per_second: must be >= 0");
  }

  for (int n : rc.experiment.n_levels) {
    for (auto& p : validate(config_for_n(rc.experiment, n))) {
      problems.push_back("task (n=" + std::to_string(n) + ") " + p);
    }
  }

  std::string id;
  top.read("experiment", id);
  rc.experiment.id = id.empty() ? condition_label(rc.experiment.task) : id;
  if (rc.experiment.id.find_first_of("/\\") != std::string::npos ||
      rc.experiment.id == "." || rc.experiment.id == "..") {
    problems.push_back("experiment: must be a plain directory name");
  }

  if (!problems.empty()) throw ConfigError(std::move(problems));
  return rc;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({path.string() + ": cannot open"});
  const json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError({path.string() + ": not valid JSON"});
  return parse_run_config(j);
}

}  // namespace nback
