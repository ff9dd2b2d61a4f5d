#include "nback/serialize.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>

namespace nback {

using nlohmann::json;

std::string to_hex(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t parse_u64(const json& j) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  if (j.is_number_integer()) {
    const auto v = j.get<std::int64_t>();
    if (v < 0) throw SchemaError("expected a non-negative integer");
    return static_cast<std::uint64_t>(v);
  }
  if (j.is_string()) {
    std::string s = j.get<std::string>();
    int base = 10;
    std::size_t offset = 0;
    if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
      base = 16;
      offset = 2;
    }
    std::uint64_t v = 0;
    const char* first = s.data() + offset;
    const char* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, v, base);
    if (ec != std::errc{} || ptr != last || first == last) {
      throw SchemaError("not a 64-bit integer: \"" + s + "\"");
    }
    return v;
  }
  throw SchemaError("expected an integer or integer string");
}

json to_json(const TaskConfig& c) {
  return json{{"family", to_string(c.family)},
              {"variant", to_string(c.variant)},
              {"n", c.n},
              {"grid_size", c.grid_size},
              {"block_length", c.block_length},
              {"target_count", c.target_count},
              {"blocks", c.blocks},
              {"seed", to_hex(c.seed)},
              {"alphabet", c.alphabet},
              {"noise_charset", c.noise_charset},
              {"strict_lures", c.strict_lures}};
}

namespace {

template <typename T>
T get_field(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw SchemaError(std::string(key) + ": " + e.what());
  }
}

void reject_unknown(const json& j, std::initializer_list<const char*> allowed,
                    std::string_view where) {
  std::set<std::string> names(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items()) {
    if (names.count(key) == 0) {
      throw SchemaError(std::string(where) + ": unknown key \"" + key + "\"");
    }
  }
}

Cell cell_from_json(const json& j) {
  if (!j.is_array() || j.size() != 2) {
    throw SchemaError("cell: expected [row, col]");
  }
  return Cell{j[0].get<int>(), j[1].get<int>()};
}

}  // namespace

TaskConfig task_config_from_json(const json& j) {
  if (!j.is_object()) throw SchemaError("config: expected an object");
  reject_unknown(j,
                 {"family", "variant", "n", "grid_size", "block_length",
                  "target_count", "blocks", "seed", "alphabet",
                  "noise_charset", "strict_lures"},
                 "config");
  TaskConfig c;
  if (j.contains("family")) {
    auto f = parse_family(get_field<std::string>(j, "family"));
    if (!f) throw SchemaError("family: unknown value");
    c.family = *f;
  }
  if (j.contains("variant")) {
    auto v = parse_variant(get_field<std::string>(j, "variant"));
    if (!v) throw SchemaError("variant: unknown value");
    c.variant = *v;
  }
  if (j.contains("n")) c.n = get_field<int>(j, "n");
  if (j.contains("grid_size")) c.grid_size = get_field<int>(j, "grid_size");
  if (j.contains("block_length")) {
    c.block_length = get_field<int>(j, "block_length");
  }
  if (j.contains("target_count")) {
    c.target_count = get_field<int>(j, "target_count");
  }
  if (j.contains("blocks")) c.blocks = get_field<int>(j, "blocks");
  if (j.contains("seed")) c.seed = parse_u64(j.at("seed"));
  if (j.contains("alphabet")) c.alphabet = get_field<std::string>(j, "alphabet");
  if (j.contains("noise_charset")) {
    c.noise_charset = get_field<std::string>(j, "noise_charset");
  }
  if (j.contains("strict_lures")) {
    c.strict_lures = get_field<bool>(j, "strict_lures");
  }
  return c;
}

json to_json(const Stimulus& stimulus) {
  if (const auto* v = std::get_if<VerbalStimulus>(&stimulus)) {
    return json{{"letter", std::string(1, v->letter)},
                {"text", v->text},
                {"letter_index", v->letter_index}};
  }
  const auto& s = std::get<SpatialStimulus>(stimulus);
  json noise = json::array();
  for (const auto& [cell, ch] : s.noise) {
    noise.push_back(
        json{{"cell", {cell.row, cell.col}}, {"char", std::string(1, ch)}});
  }
  return json{{"grid_size", s.grid_size},
              {"cell", {s.occupied.row, s.occupied.col}},
              {"noise", std::move(noise)}};
}

Stimulus stimulus_from_json(const json& j, Family family) {
  try {
    if (family == Family::kVerbal) {
      const auto letter = j.at("letter").get<std::string>();
      if (letter.size() != 1) throw SchemaError("letter: expected one char");
      VerbalStimulus v{letter[0], j.at("text").get<std::string>(),
                       j.at("letter_index").get<std::size_t>()};
      if (v.letter_index >= v.text.size() || v.text[v.letter_index] != v.letter) {
        throw SchemaError("letter_index does not point at letter");
      }
      return v;
    }
    SpatialStimulus s;
    s.grid_size = j.at("grid_size").get<int>();
    s.occupied = cell_from_json(j.at("cell"));
    for (const auto& e : j.at("noise")) {
      const auto ch = e.at("char").get<std::string>();
      if (ch.size() != 1) throw SchemaError("noise char: expected one char");
      s.noise.emplace(cell_from_json(e.at("cell")), ch[0]);
    }
    return s;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("stimulus: ") + e.what());
  }
}

json to_json(const Block& block) {
  json trials = json::array();
  for (const auto& t : block.trials) {
    trials.push_back(
        json{{"label", to_string(t.label)}, {"stimulus", to_json(t.stimulus)}});
  }
  return json{{"schema", kBlockSchema},
              {"config", to_json(block.config)},
              {"block_index", block.block_index},
              {"stream_seed", to_hex(block.stream_seed)},
              {"trials", std::move(trials)}};
}

Block block_from_json(const json& j) {
  if (!j.is_object() || j.value("schema", "") != kBlockSchema) {
    throw SchemaError("block: missing or unsupported schema tag");
  }
  Block b;
  b.config = task_config_from_json(j.at("config"));
  b.block_index = get_field<std::size_t>(j, "block_index");
  b.stream_seed = parse_u64(j.at("stream_seed"));
  for (const auto& t : j.at("trials")) {
    auto label = parse_label(get_field<std::string>(t, "label"));
    if (!label) throw SchemaError("label: unknown value");
    b.trials.push_back(
        Trial{stimulus_from_json(t.at("stimulus"), b.config.family), *label});
  }
  if (b.trials.size() != static_cast<std::size_t>(b.config.block_length)) {
    throw SchemaError("trials: expected block_length entries");
  }
  std::vector<Label> stored;
  for (const Trial& t : b.trials) stored.push_back(t.label);
  try {
    if (relabel(b) != stored) {
      throw SchemaError("trials: labels disagree with the stimuli");
    }
  } catch (const std::invalid_argument& e) {
    throw SchemaError(std::string("trials: ") + e.what());
  }
  return b;
}

void write_block_file(const std::filesystem::path& path, const Block& block) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json(block).dump(2) << '\n';
}

Block read_block_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
  return block_from_json(j);
}

}  // namespace nback
