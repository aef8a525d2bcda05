#include "urw/corpus/dialogue.hpp"

#include <algorithm>
#include <fstream>
#include <nlohmann/json.hpp>
#include <random>
#include <string>

#include "urw/error.hpp"

namespace urw::corpus {
namespace {

using nlohmann::json;

std::string where(std::size_t line) {
  return line ? "line " + std::to_string(line) + ": " : std::string();
}

Tokens token_list(const json& j, const std::string& field, std::size_t line) {
  if (!j.is_array()) throw SchemaError(field, where(line) + "expected an array of strings");
  Tokens out;
  out.reserve(j.size());
  for (const auto& t : j) {
    if (!t.is_string()) throw SchemaError(field, where(line) + "expected an array of strings");
    out.push_back(t.get<std::string>());
  }
  return out;
}

const json& require(const json& j, const char* field, std::size_t line) {
  auto it = j.find(field);
  if (it == j.end()) throw SchemaError(field, where(line) + "missing");
  return *it;
}

std::size_t index_value(const json& j, const std::string& field, std::size_t line) {
  if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<long long>() >= 0)) {
    throw SchemaError(field, where(line) + "expected a non-negative integer");
  }
  return j.get<std::size_t>();
}

}  // namespace

bool occurs_in_history(const DialogueSample& sample, std::span<const std::string> needle) {
  if (needle.empty()) return false;
  for (const auto& turn : sample.history) {
    if (std::search(turn.begin(), turn.end(), needle.begin(), needle.end()) != turn.end()) {
      return true;
    }
  }
  return false;
}

void validate(const DialogueSample& s) {
  if (s.corefs) {
    for (const auto& c : *s.corefs) {
      if (c.begin >= c.end || c.end > s.utterance.size()) {
        throw SchemaError("corefs.span", "span [" + std::to_string(c.begin) + "," +
                                             std::to_string(c.end) + ") outside utterance of " +
                                             std::to_string(s.utterance.size()) + " tokens");
      }
      if (!occurs_in_history(s, c.antecedent)) {
        throw SchemaError("corefs.antecedent", "antecedent does not occur in the history");
      }
    }
  }
  if (s.omissions) {
    for (const auto& o : *s.omissions) {
      if (o.position > s.utterance.size()) {
        throw SchemaError("omissions.pos", "insertion point " + std::to_string(o.position) +
                                               " beyond utterance end");
      }
      if (!occurs_in_history(s, o.tokens)) {
        throw SchemaError("omissions.tokens", "omitted tokens do not occur in the history");
      }
    }
  }
}

json to_json(const DialogueSample& s) {
  json j;
  j["history"] = s.history;
  j["utterance"] = s.utterance;
  j["reference"] = s.reference;
  if (s.corefs) {
    json arr = json::array();
    for (const auto& c : *s.corefs) {
      arr.push_back({{"span", {c.begin, c.end}}, {"antecedent", c.antecedent}});
    }
    j["corefs"] = std::move(arr);
  }
  if (s.omissions) {
    json arr = json::array();
    for (const auto& o : *s.omissions) arr.push_back({{"pos", o.position}, {"tokens", o.tokens}});
    j["omissions"] = std::move(arr);
  }
  return j;
}

DialogueSample sample_from_json(const json& j, std::size_t line) {
  if (!j.is_object()) throw DataError(where(line) + "expected a JSON object");
  DialogueSample s;
  const auto& hist = require(j, "history", line);
  if (!hist.is_array()) throw SchemaError("history", where(line) + "expected an array of turns");
  for (const auto& turn : hist) s.history.push_back(token_list(turn, "history", line));
  s.utterance = token_list(require(j, "utterance", line), "utterance", line);
  s.reference = token_list(require(j, "reference", line), "reference", line);
  if (auto it = j.find("corefs"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw SchemaError("corefs", where(line) + "expected an array");
    s.corefs.emplace();
    for (const auto& c : *it) {
      const auto& span = require(c, "span", line);
      if (!span.is_array() || span.size() != 2) {
        throw SchemaError("corefs.span", where(line) + "expected [start, end]");
      }
      s.corefs->push_back({index_value(span[0], "corefs.span", line),
                           index_value(span[1], "corefs.span", line),
                           token_list(require(c, "antecedent", line), "corefs.antecedent", line)});
    }
  }
  if (auto it = j.find("omissions"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw SchemaError("omissions", where(line) + "expected an array");
    s.omissions.emplace();
    for (const auto& o : *it) {
      s.omissions->push_back({index_value(require(o, "pos", line), "omissions.pos", line),
                              token_list(require(o, "tokens", line), "omissions.tokens", line)});
    }
  }
  try {
    validate(s);
  } catch (const SchemaError& e) {
    throw SchemaError(e.field(), where(line) + e.detail());
  }
  return s;
}

std::vector<DialogueSample> load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<DialogueSample> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw DataError(path.string() + ": line " + std::to_string(line) + ": malformed JSON (" +
                      e.what() + ")");
    }
    out.push_back(sample_from_json(j, line));
  }
  return out;
}

void save_jsonl(std::span<const DialogueSample> samples, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& s : samples) out << to_json(s).dump() << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

CorpusSplit split_corpus(std::span<const DialogueSample> samples, std::uint64_t seed) {
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    (samples[i].is_positive() ? pos : neg).push_back(i);
  }
  std::mt19937_64 rng(seed);
  CorpusSplit split;
  for (auto* stratum : {&pos, &neg}) {
    std::shuffle(stratum->begin(), stratum->end(), rng);
    const std::size_t n = stratum->size();
    const std::size_t n_train = n * 8 / 10;
    const std::size_t n_valid = n / 10;
    for (std::size_t k = 0; k < n; ++k) {
      auto& dst = k < n_train ? split.train : (k < n_train + n_valid ? split.valid : split.test);
      dst.push_back(samples[(*stratum)[k]]);
    }
  }
  return split;
}

}  // namespace urw::corpus
