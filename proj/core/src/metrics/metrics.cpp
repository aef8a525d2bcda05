#include "urw/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <nlohmann/json.hpp>
#include <sstream>

#include "urw/error.hpp"
#include "urw/metrics/ngram.hpp"

namespace urw::metrics {
namespace {

double brevity_penalty(double cand_len, double ref_len) {
  if (cand_len <= 0.0) return 0.0;
  return cand_len > ref_len ? 1.0 : std::exp(1.0 - ref_len / cand_len);
}

void require_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw ContractError(std::string(what) + ": " + std::to_string(a) + " outputs for " + std::to_string(b) + " references");
}

std::map<std::string, std::size_t> type_counts(std::span<const std::string> tokens) {
  std::map<std::string, std::size_t> c;
  for (const auto& t : tokens) ++c[t];
  return c;
}

bool history_sourced(const corpus::DialogueSample& s, std::span<const std::string> inserted) {
  return !inserted.empty() && corpus::occurs_in_history(s, inserted);
}

bool contains_run(std::span<const std::string> hay, std::span<const std::string> needle) {
  return count_occurrences(hay, needle) > 0;
}

PRF finish(AnnotationScore& s) {
  const double p = s.predicted ? static_cast<double>(s.matched) / static_cast<double>(s.predicted) : 0.0;
  const double r = s.gold ? static_cast<double>(s.hits) / static_cast<double>(s.gold) : 0.0;
  return make_prf(p, r);
}

}  // namespace

PRF make_prf(double precision, double recall) {
  PRF out{precision, recall, 0.0};
  if (precision + recall > 0.0) out.f1 = 2.0 * precision * recall / (precision + recall);
  return out;
}

double bleu_n(std::span<const std::string> cand, std::span<const std::string> ref, std::size_t n) {
  if (n == 0) throw ContractError("bleu_n: n must be at least 1");
  if (cand.empty()) return 0.0;
  double log_sum = 0.0;
  std::size_t orders = 0;
  for (std::size_t k = 1; k <= n; ++k) {
    const auto m = static_cast<double>(clipped_matches(count_ngrams(cand, k), count_ngrams(ref, k)));
    const auto c = static_cast<double>(ngram_total(cand.size(), k));
    const double p = k == 1 ? m / c : (m + 1.0) / (c + 1.0);
    if (p == 0.0) return 0.0;
    log_sum += std::log(p);
    ++orders;
  }
  return brevity_penalty(static_cast<double>(cand.size()), static_cast<double>(ref.size())) *
         std::exp(log_sum / static_cast<double>(orders));
}

double corpus_bleu(std::span<const Tokens> cands, std::span<const Tokens> refs, std::size_t n) {
  if (n == 0) throw ContractError("corpus_bleu: n must be at least 1");
  require_same_size(cands.size(), refs.size(), "corpus_bleu");
  std::vector<double> matches(n + 1, 0.0), totals(n + 1, 0.0), ref_totals(n + 1, 0.0);
  double cand_len = 0.0, ref_len = 0.0;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    cand_len += static_cast<double>(cands[i].size());
    ref_len += static_cast<double>(refs[i].size());
    for (std::size_t k = 1; k <= n; ++k) {
      matches[k] += static_cast<double>(clipped_matches(count_ngrams(cands[i], k), count_ngrams(refs[i], k)));
      totals[k] += static_cast<double>(ngram_total(cands[i].size(), k));
      ref_totals[k] += static_cast<double>(ngram_total(refs[i].size(), k));
    }
  }
  if (cand_len == 0.0) return 0.0;
  double log_sum = 0.0;
  std::size_t orders = 0;
  for (std::size_t k = 1; k <= n; ++k) {
    if (totals[k] == 0.0 && ref_totals[k] == 0.0) continue;
    if (matches[k] == 0.0) return 0.0;
    log_sum += std::log(matches[k] / totals[k]);
    ++orders;
  }
  return brevity_penalty(cand_len, ref_len) * std::exp(log_sum / static_cast<double>(orders));
}

PRF rouge_n(std::span<const std::string> cand, std::span<const std::string> ref, std::size_t n) {
  if (ref.empty()) throw ContractError("rouge_n: empty reference");
  if (n == 0) throw ContractError("rouge_n: n must be at least 1");
  if (ref.size() < n) {
    const bool same = std::equal(cand.begin(), cand.end(), ref.begin(), ref.end());
    return make_prf(same ? 1.0 : 0.0, same ? 1.0 : 0.0);
  }
  const auto c = ngram_total(cand.size(), n);
  if (c == 0) return {};
  const auto m = static_cast<double>(clipped_matches(count_ngrams(cand, n), count_ngrams(ref, n)));
  return make_prf(m / static_cast<double>(c), m / static_cast<double>(ngram_total(ref.size(), n)));
}

PRF rouge_l(std::span<const std::string> cand, std::span<const std::string> ref) {
  if (ref.empty()) throw ContractError("rouge_l: empty reference");
  if (cand.empty()) return {};
  const auto l = static_cast<double>(lcs_length(cand, ref));
  return make_prf(l / static_cast<double>(cand.size()), l / static_cast<double>(ref.size()));
}

ExactMatch exact_match_split(std::span<const Tokens> outputs, std::span<const Tokens> refs,
                             std::span<const bool> is_positive) {
  require_same_size(outputs.size(), refs.size(), "exact_match_split");
  require_same_size(is_positive.size(), refs.size(), "exact_match_split labels");
  ExactMatch em;
  std::size_t hit_pos = 0, hit_neg = 0;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const bool hit = outputs[i] == refs[i];
    if (is_positive[i]) {
      ++em.positives;
      hit_pos += hit;
    } else {
      ++em.negatives;
      hit_neg += hit;
    }
  }
  if (em.positives) em.em_positive = static_cast<double>(hit_pos) / static_cast<double>(em.positives);
  if (em.negatives) em.em_negative = static_cast<double>(hit_neg) / static_cast<double>(em.negatives);
  return em;
}

AnnotationScore coref_score(std::span<const corpus::DialogueSample> samples, std::span<const Tokens> outputs) {
  require_same_size(outputs.size(), samples.size(), "coref_score");
  AnnotationScore s;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& smp = samples[i];
    if (!smp.corefs) {
      ++s.excluded;
      continue;
    }
    const auto& out = outputs[i];
    const auto& u = smp.utterance;
    for (const auto& g : *smp.corefs) {
      ++s.gold;
      std::span<const std::string> pron(u.begin() + static_cast<std::ptrdiff_t>(g.begin),
                                        u.begin() + static_cast<std::ptrdiff_t>(g.end));
      const bool antecedent_gained = count_occurrences(out, g.antecedent) > count_occurrences(u, g.antecedent);
      const bool pronoun_dropped = count_occurrences(out, pron) < count_occurrences(u, pron);
      s.hits += antecedent_gained && pronoun_dropped;
    }
    for (const auto& h : diff(u, out)) {
      if (h.src_begin == h.src_end || !history_sourced(smp, h.inserted)) continue;
      ++s.predicted;
      const bool match = std::any_of(smp.corefs->begin(), smp.corefs->end(), [&](const auto& g) {
        return h.src_begin < g.end && g.begin < h.src_end && contains_run(h.inserted, g.antecedent);
      });
      s.matched += match;
    }
  }
  s.prf = finish(s);
  return s;
}

AnnotationScore completion_score(std::span<const corpus::DialogueSample> samples, std::span<const Tokens> outputs) {
  require_same_size(outputs.size(), samples.size(), "completion_score");
  AnnotationScore s;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& smp = samples[i];
    if (!smp.omissions) {
      ++s.excluded;
      continue;
    }
    const auto& out = outputs[i];
    const auto& u = smp.utterance;
    const auto out_counts = type_counts(out);
    const auto u_counts = type_counts(u);
    auto count = [](const auto& m, const std::string& t) {
      auto it = m.find(t);
      return it == m.end() ? std::size_t{0} : it->second;
    };
    for (const auto& g : *smp.omissions) {
      ++s.gold;
      bool ok = true;
      for (const auto& [tok, need] : type_counts(g.tokens)) {
        const auto have = count(out_counts, tok);
        const auto base = count(u_counts, tok);
        ok = ok && have >= base && have - base >= need;
      }
      s.hits += ok;
    }
    for (const auto& h : diff(u, out)) {
      if (h.src_begin != h.src_end || !history_sourced(smp, h.inserted)) continue;
      ++s.predicted;
      const bool match = std::any_of(smp.omissions->begin(), smp.omissions->end(), [&](const auto& g) {
        return h.src_begin == g.position && contains_run(h.inserted, g.tokens);
      });
      s.matched += match;
    }
  }
  s.prf = finish(s);
  return s;
}

MetricReport evaluate(std::span<const corpus::DialogueSample> samples, std::span<const Tokens> outputs) {
  require_same_size(outputs.size(), samples.size(), "evaluate");
  MetricReport r;
  std::vector<Tokens> refs;
  std::vector<bool> labels;
  for (const auto& s : samples) {
    refs.push_back(s.reference);
    labels.push_back(s.is_positive());
  }
  r.bleu1 = corpus_bleu(outputs, refs, 1);
  r.bleu2 = corpus_bleu(outputs, refs, 2);
  r.bleu4 = corpus_bleu(outputs, refs, 4);
  const double n = samples.empty() ? 1.0 : static_cast<double>(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    r.sentence_bleu1 += bleu_n(outputs[i], refs[i], 1) / n;
    r.sentence_bleu2 += bleu_n(outputs[i], refs[i], 2) / n;
    r.sentence_bleu4 += bleu_n(outputs[i], refs[i], 4) / n;
    r.rouge1_f += rouge_n(outputs[i], refs[i], 1).f1 / n;
    r.rouge2_f += rouge_n(outputs[i], refs[i], 2).f1 / n;
    r.rougeL_f += rouge_l(outputs[i], refs[i]).f1 / n;
  }
  auto flags = std::make_unique<bool[]>(labels.size());
  std::copy(labels.begin(), labels.end(), flags.get());
  const auto em = exact_match_split(outputs, refs, std::span<const bool>(flags.get(), labels.size()));
  r.em_positive = em.em_positive;
  r.em_negative = em.em_negative;
  const auto co = coref_score(samples, outputs);
  const auto cp = completion_score(samples, outputs);
  r.coref_p = co.prf.precision;
  r.coref_r = co.prf.recall;
  r.coref_f1 = co.prf.f1;
  r.compl_p = cp.prf.precision;
  r.compl_r = cp.prf.recall;
  r.compl_f1 = cp.prf.f1;
  r.counts = {samples.size(), em.positives, em.negatives,
              co.gold,        co.hits,      co.predicted, co.matched, co.excluded,
              cp.gold,        cp.hits,      cp.predicted, cp.matched, cp.excluded};
  return r;
}

nlohmann::json to_json(const MetricReport& r) {
  const auto& c = r.counts;
  return {{"bleu1", r.bleu1},
          {"bleu2", r.bleu2},
          {"bleu4", r.bleu4},
          {"sentence_bleu1", r.sentence_bleu1},
          {"sentence_bleu2", r.sentence_bleu2},
          {"sentence_bleu4", r.sentence_bleu4},
          {"rouge1_f", r.rouge1_f},
          {"rouge2_f", r.rouge2_f},
          {"rougeL_f", r.rougeL_f},
          {"em_positive", r.em_positive},
          {"em_negative", r.em_negative},
          {"coref_p", r.coref_p},
          {"coref_r", r.coref_r},
          {"coref_f1", r.coref_f1},
          {"compl_p", r.compl_p},
          {"compl_r", r.compl_r},
          {"compl_f1", r.compl_f1},
          {"counts",
           {{"samples", c.samples},
            {"positives", c.positives},
            {"negatives", c.negatives},
            {"coref_gold", c.coref_gold},
            {"coref_hits", c.coref_hits},
            {"coref_predicted", c.coref_predicted},
            {"coref_matched", c.coref_matched},
            {"coref_excluded", c.coref_excluded},
            {"compl_gold", c.compl_gold},
            {"compl_hits", c.compl_hits},
            {"compl_predicted", c.compl_predicted},
            {"compl_matched", c.compl_matched},
            {"compl_excluded", c.compl_excluded}}}};
}

std::string format_table(const MetricReport& r) {
  std::ostringstream os;
  char buf[160];
  auto row = [&](const char* name, double v) {
    std::snprintf(buf, sizeof buf, "%-16s %7.2f\n", name, 100.0 * v);
    os << buf;
  };
  row("BLEU-1", r.bleu1);
  row("BLEU-2", r.bleu2);
  row("BLEU-4", r.bleu4);
  row("sent. BLEU-1", r.sentence_bleu1);
  row("sent. BLEU-2", r.sentence_bleu2);
  row("sent. BLEU-4", r.sentence_bleu4);
  row("ROUGE-1 F", r.rouge1_f);
  row("ROUGE-2 F", r.rouge2_f);
  row("ROUGE-L F", r.rougeL_f);
  std::snprintf(buf, sizeof buf, "%-16s %7.2f | %.2f  (%zu pos / %zu neg)\n", "EM pos|neg", 100.0 * r.em_positive,
                100.0 * r.em_negative, r.counts.positives, r.counts.negatives);
  os << buf;
  std::snprintf(buf, sizeof buf, "%-16s P %.2f  R %.2f  F1 %.2f  (%zu gold)\n", "coreference", r.coref_p, r.coref_r,
                r.coref_f1, r.counts.coref_gold);
  os << buf;
  std::snprintf(buf, sizeof buf, "%-16s P %.2f  R %.2f  F1 %.2f  (%zu gold)\n", "completion", r.compl_p, r.compl_r,
                r.compl_f1, r.counts.compl_gold);
  os << buf;
  if (r.counts.coref_excluded || r.counts.compl_excluded) {
    std::snprintf(buf, sizeof buf, "warning: %zu / %zu samples lack coref / omission annotations\n",
                  r.counts.coref_excluded, r.counts.compl_excluded);
    os << buf;
  }
  return os.str();
}

}  // namespace urw::metrics
