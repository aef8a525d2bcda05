#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "urw/corpus/dialogue.hpp"

namespace urw::metrics {

using corpus::Tokens;

// Sentence BLEU-n: geometric mean of clipped precisions for orders 1..n times
// the brevity penalty. Orders >= 2 use add-one smoothing. Empty candidate -> 0.
double bleu_n(std::span<const std::string> candidate, std::span<const std::string> reference, std::size_t n);

// Corpus BLEU-n from n-gram counts pooled over all pairs, no smoothing.
// Orders with no candidate and no reference n-grams anywhere are skipped.
double corpus_bleu(std::span<const Tokens> candidates, std::span<const Tokens> references, std::size_t n);

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};
PRF make_prf(double precision, double recall);

// ContractError on an empty reference. A reference shorter than n scores by
// exact equality.
PRF rouge_n(std::span<const std::string> candidate, std::span<const std::string> reference, std::size_t n);
PRF rouge_l(std::span<const std::string> candidate, std::span<const std::string> reference);

struct ExactMatch {
  double em_positive = 0.0;
  double em_negative = 0.0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};
ExactMatch exact_match_split(std::span<const Tokens> outputs, std::span<const Tokens> references,
                             std::span<const bool> is_positive);

struct AnnotationScore {
  PRF prf;
  std::size_t gold = 0;       // gold annotations considered
  std::size_t hits = 0;       // gold annotations recovered
  std::size_t predicted = 0;  // history-sourced edits of the matching kind
  std::size_t matched = 0;    // predicted edits that match a gold annotation
  std::size_t excluded = 0;   // samples without annotations
};

// Coreference: a gold case is recovered when the output holds more copies of
// the antecedent and fewer of the pronoun than U_n does. Predictions are
// history-sourced substitution hunks of the diff U_n -> output.
AnnotationScore coref_score(std::span<const corpus::DialogueSample> samples, std::span<const Tokens> outputs);
// Completion: a gold omission is recovered when every omitted token gained
// at least its multiplicity over U_n. Predictions are history-sourced
// pure-insertion hunks.
AnnotationScore completion_score(std::span<const corpus::DialogueSample> samples, std::span<const Tokens> outputs);

struct MetricCounts {
  std::size_t samples = 0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::size_t coref_gold = 0, coref_hits = 0, coref_predicted = 0, coref_matched = 0, coref_excluded = 0;
  std::size_t compl_gold = 0, compl_hits = 0, compl_predicted = 0, compl_matched = 0, compl_excluded = 0;
};

// All scores in [0, 1].
struct MetricReport {
  double bleu1 = 0, bleu2 = 0, bleu4 = 0;
  double sentence_bleu1 = 0, sentence_bleu2 = 0, sentence_bleu4 = 0;
  double rouge1_f = 0, rouge2_f = 0, rougeL_f = 0;
  double em_positive = 0, em_negative = 0;
  double coref_p = 0, coref_r = 0, coref_f1 = 0;
  double compl_p = 0, compl_r = 0, compl_f1 = 0;
  MetricCounts counts;
};

// outputs[i] is the system rewrite of samples[i].
MetricReport evaluate(std::span<const corpus::DialogueSample> samples, std::span<const Tokens> outputs);

nlohmann::json to_json(const MetricReport& report);
// Human-readable table with scores scaled by 100.
std::string format_table(const MetricReport& report);

}  // namespace urw::metrics
