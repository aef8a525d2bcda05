#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "urw/corpus/tokenizer.hpp"

namespace urw::corpus {

// Pronoun occupying utterance[begin, end) that refers to `antecedent` in the history.
struct CorefAnnotation {
  std::size_t begin = 0;
  std::size_t end = 0;
  Tokens antecedent;
  bool operator==(const CorefAnnotation&) const = default;
};

// `tokens` from the history belong before utterance[position].
struct OmissionAnnotation {
  std::size_t position = 0;
  Tokens tokens;
  bool operator==(const OmissionAnnotation&) const = default;
};

// One (H, U_n -> R) training example.
struct DialogueSample {
  std::vector<Tokens> history;
  Tokens utterance;
  Tokens reference;
  std::optional<std::vector<CorefAnnotation>> corefs;
  std::optional<std::vector<OmissionAnnotation>> omissions;

  // Positive samples need rewriting; negatives are copied verbatim.
  bool is_positive() const { return reference != utterance; }
  bool operator==(const DialogueSample&) const = default;
};

// True when `needle` occurs as a contiguous run inside one of the history turns.
bool occurs_in_history(const DialogueSample& sample, std::span<const std::string> needle);

// Throws SchemaError when annotation spans fall outside the utterance or an
// antecedent / omitted sequence is not found verbatim in the history.
void validate(const DialogueSample& sample);

nlohmann::json to_json(const DialogueSample& sample);
// `line` is only used to prefix error messages (0 = unknown).
DialogueSample sample_from_json(const nlohmann::json& j, std::size_t line = 0);

std::vector<DialogueSample> load_jsonl(const std::filesystem::path& path);
void save_jsonl(std::span<const DialogueSample> samples, const std::filesystem::path& path);

struct CorpusSplit {
  std::vector<DialogueSample> train;
  std::vector<DialogueSample> valid;
  std::vector<DialogueSample> test;
};

// 80/10/10 split, stratified on is_positive(), deterministic in `seed`.
CorpusSplit split_corpus(std::span<const DialogueSample> samples, std::uint64_t seed);

}  // namespace urw::corpus
