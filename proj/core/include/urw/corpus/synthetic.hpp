#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "urw/corpus/dialogue.hpp"

namespace urw::corpus {

// Parameters of the template-driven dialogue generator. Rates are the
// fraction of samples that contain at least one coreference / omission /
// neither; coreference and omission may overlap, so the three rates may sum
// past 1 and the overlap is coref + omission + neither - 1.
struct SyntheticSpec {
  std::size_t num_samples = 2000;
  // Distinct CJK characters available for entity names.
  std::size_t vocab_budget = 120;
  // Total turns per dialogue including the utterance to rewrite.
  std::size_t min_turns = 3;
  std::size_t max_turns = 4;
  double coref_rate = 0.335;
  double omission_rate = 0.524;
  double neither_rate = 0.297;
  std::uint64_t seed = 7;

  bool operator==(const SyntheticSpec&) const = default;
};

void validate(const SyntheticSpec& spec);

// Number of distinct dialogue templates the generator draws from.
std::size_t template_count();

std::vector<DialogueSample> generate_synthetic(const SyntheticSpec& spec);

struct CorpusStats {
  std::size_t samples = 0;
  double coref_rate = 0.0;
  double omission_rate = 0.0;
  double neither_rate = 0.0;
  double both_rate = 0.0;
  double positive_rate = 0.0;
  double avg_reference_length = 0.0;
  double avg_utterance_length = 0.0;
  // History plus utterance tokens, delimiters excluded.
  double avg_conversation_length = 0.0;
  double avg_turns = 0.0;
};

CorpusStats corpus_stats(std::span<const DialogueSample> samples);
nlohmann::json to_json(const CorpusStats& stats);

nlohmann::json to_json(const SyntheticSpec& spec);
SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j, SyntheticSpec base = {});

}  // namespace urw::corpus
