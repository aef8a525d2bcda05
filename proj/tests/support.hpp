#pragma once

// Independent oracles shared by the unit tests and the acceptance suite.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "urw/corpus/dialogue.hpp"
#include "urw/corpus/vocabulary.hpp"
#include "urw/decoding/beam_search.hpp"
#include "urw/model/rewriter.hpp"
#include "urw/numerics/ops.hpp"

namespace urw::testing {

// ---- finite differences -------------------------------------------------

struct GradCheck {
  double max_rel = 0.0;
  std::string worst;
  std::size_t checked = 0;
};

// Relative error with a small floor so that gradients that are zero up to
// rounding do not divide by ~0.
inline double rel_error(double a, double n, double floor = 1e-6) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

// Compares backward() against central differences for every element of the
// named inputs. `f` must rebuild the loss from scratch on the given tape.
inline GradCheck grad_check(const std::function<num::Tensor(num::Tape&)>& f,
                            const std::vector<std::pair<std::string, num::Tensor>>& inputs, double h = 1e-3,
                            double floor = 1e-6) {
  for (auto [name, t] : inputs) t.zero_grad();
  num::Tape tape;
  auto loss = f(tape);
  num::backward(loss, tape);
  GradCheck out;
  for (auto [name, t] : inputs) {
    std::vector<double> analytic(t.grad().begin(), t.grad().end());
    auto data = t.data_mut();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + h;
      num::Tape p(false);
      const double up = f(p).item();
      data[i] = saved - h;
      num::Tape q(false);
      const double down = f(q).item();
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double r = rel_error(analytic[i], numeric, floor);
      ++out.checked;
      if (r > out.max_rel) {
        out.max_rel = r;
        out.worst = name + "[" + std::to_string(i) + "] analytic " + std::to_string(analytic[i]) + " numeric " +
                    std::to_string(numeric);
      }
    }
  }
  return out;
}

inline num::Tensor random_tensor(num::Shape shape, std::mt19937_64& rng, bool grad = true, double lo = -2.0,
                                 double hi = 2.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(num::numel(shape));
  for (auto& x : v) x = u(rng);
  return num::Tensor::from_data(std::move(shape), std::move(v), grad);
}

// ---- brute-force n-gram / LCS counting ----------------------------------

inline std::map<std::string, int> ngram_bag(const std::vector<std::string>& toks, std::size_t n) {
  std::map<std::string, int> bag;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) {
    std::string key;
    for (std::size_t k = 0; k < n; ++k) key += toks[i + k] + '\x1f';
    bag[key] += 1;
  }
  return bag;
}

// Clipped matches by consuming reference n-grams one at a time.
inline int brute_matches(const std::vector<std::string>& c, const std::vector<std::string>& r, std::size_t n) {
  auto pool = ngram_bag(r, n);
  int m = 0;
  for (std::size_t i = 0; i + n <= c.size(); ++i) {
    std::string key;
    for (std::size_t k = 0; k < n; ++k) key += c[i + k] + '\x1f';
    if (pool[key] > 0) {
      --pool[key];
      ++m;
    }
  }
  return m;
}

inline int brute_total(const std::vector<std::string>& t, std::size_t n) {
  return t.size() >= n ? static_cast<int>(t.size() - n + 1) : 0;
}

inline double brute_bp(double c, double r) { return c > r ? 1.0 : std::exp(1.0 - r / c); }

inline double brute_sentence_bleu(const std::vector<std::string>& c, const std::vector<std::string>& r,
                                  std::size_t n) {
  if (c.empty()) return 0.0;
  double prod = 1.0;
  for (std::size_t k = 1; k <= n; ++k) {
    const double m = brute_matches(c, r, k), tot = brute_total(c, k);
    prod *= k == 1 ? m / tot : (m + 1.0) / (tot + 1.0);
  }
  if (prod == 0.0) return 0.0;
  return brute_bp(static_cast<double>(c.size()), static_cast<double>(r.size())) *
         std::pow(prod, 1.0 / static_cast<double>(n));
}

inline double brute_corpus_bleu(const std::vector<std::vector<std::string>>& cs,
                                const std::vector<std::vector<std::string>>& rs, std::size_t n) {
  double clen = 0, rlen = 0;
  std::vector<double> m(n + 1), t(n + 1), rt(n + 1);
  for (std::size_t i = 0; i < cs.size(); ++i) {
    clen += cs[i].size();
    rlen += rs[i].size();
    for (std::size_t k = 1; k <= n; ++k) {
      m[k] += brute_matches(cs[i], rs[i], k);
      t[k] += brute_total(cs[i], k);
      rt[k] += brute_total(rs[i], k);
    }
  }
  if (clen == 0) return 0.0;
  double prod = 1.0;
  int orders = 0;
  for (std::size_t k = 1; k <= n; ++k) {
    if (t[k] == 0 && rt[k] == 0) continue;
    prod *= m[k] / t[k];
    ++orders;
  }
  if (prod == 0.0) return 0.0;
  return brute_bp(clen, rlen) * std::pow(prod, 1.0 / orders);
}

inline double brute_f1(double p, double r) { return p + r > 0 ? 2 * p * r / (p + r) : 0.0; }

inline double brute_rouge_n(const std::vector<std::string>& c, const std::vector<std::string>& r, std::size_t n) {
  if (r.size() < n) return c == r ? 1.0 : 0.0;
  if (c.size() < n) return 0.0;
  const double m = brute_matches(c, r, n);
  return brute_f1(m / brute_total(c, n), m / brute_total(r, n));
}

// Longest common subsequence by trying every subsequence of the shorter side.
inline std::size_t brute_lcs(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  const auto& s = a.size() <= b.size() ? a : b;
  const auto& l = a.size() <= b.size() ? b : a;
  std::size_t best = 0;
  for (std::uint32_t mask = 0; mask < (1u << s.size()); ++mask) {
    const auto bits = static_cast<std::size_t>(__builtin_popcount(mask));
    if (bits <= best) continue;
    std::size_t j = 0;
    bool ok = true;
    for (std::size_t i = 0; i < s.size() && ok; ++i) {
      if (!(mask >> i & 1u)) continue;
      while (j < l.size() && l[j] != s[i]) ++j;
      if (j == l.size()) ok = false;
      else ++j;
    }
    if (ok) best = bits;
  }
  return best;
}

inline double brute_rouge_l(const std::vector<std::string>& c, const std::vector<std::string>& r) {
  if (c.empty()) return 0.0;
  const double l = static_cast<double>(brute_lcs(c, r));
  return brute_f1(l / c.size(), l / r.size());
}

// ---- exhaustive decoding ------------------------------------------------

struct Enumerated {
  std::vector<std::size_t> tokens;
  double score = -std::numeric_limits<double>::infinity();
};

// Best sequence among all that end in EOS within max_len tokens or reach
// max_len without EOS; ties go to the lexicographically smaller sequence.
inline Enumerated enumerate_best(const decoding::StepFn& step, std::size_t max_len, std::size_t eos,
                                 std::size_t* visited = nullptr) {
  Enumerated best;
  std::function<void(std::vector<std::size_t>&, double)> dfs = [&](std::vector<std::size_t>& prefix, double score) {
    const bool done = (!prefix.empty() && prefix.back() == eos) || prefix.size() == max_len;
    if (done) {
      if (score > best.score || (score == best.score && prefix < best.tokens)) best = {prefix, score};
      if (visited) ++*visited;
      return;
    }
    std::vector<std::vector<std::size_t>> one{prefix};
    const auto probs = step(one).at(0).probs;
    for (std::size_t id = 0; id < probs.size(); ++id) {
      if (probs[id] <= 0.0) continue;
      prefix.push_back(id);
      dfs(prefix, score + std::log(probs[id]));
      prefix.pop_back();
    }
  };
  std::vector<std::size_t> start;
  dfs(start, 0.0);
  return best;
}

// Deterministic random next-token distributions over `n_tokens` ids, keyed by
// the prefix, so repeated queries of a prefix agree.
inline decoding::StepFn toy_step_fn(std::uint64_t seed, std::size_t n_tokens) {
  return [seed, n_tokens](std::span<const std::vector<std::size_t>> prefixes) {
    std::vector<decoding::StepResult> out;
    for (const auto& p : prefixes) {
      std::uint64_t h = seed * 0x9E3779B97F4A7C15ULL + 1;
      for (auto t : p) h = (h ^ (t + 0x51ED27ULL)) * 0x100000001B3ULL;
      std::mt19937_64 rng(h);
      std::exponential_distribution<double> e(1.0);
      decoding::StepResult r;
      r.probs.resize(n_tokens);
      double sum = 0;
      for (auto& x : r.probs) sum += (x = e(rng));
      for (auto& x : r.probs) x /= sum;
      out.push_back(std::move(r));
    }
    return out;
  };
}

// ---- small fixtures -----------------------------------------------------

inline corpus::DialogueSample make_sample(std::vector<corpus::Tokens> h, corpus::Tokens u, corpus::Tokens r) {
  corpus::DialogueSample s;
  s.history = std::move(h);
  s.utterance = std::move(u);
  s.reference = std::move(r);
  return s;
}

inline model::ModelConfig tiny_config(model::OutputHead head, std::size_t vocab_size, std::size_t d = 8,
                                      std::size_t layers = 2, std::size_t heads = 2) {
  model::ModelConfig c;
  c.d_model = d;
  c.n_heads = heads;
  c.n_layers = layers;
  c.d_ff = 2 * d;
  c.max_positions = 48;
  c.max_turns = 4;
  c.head = head;
  c.vocab_size = vocab_size;
  c.dropout_rate = 0.0;
  return c;
}

// Gives every parameter small random values so gates and biases are not
// stuck at their zero initialisation during checks.
inline void randomize(const model::RewriterModel& m, std::uint64_t seed, double scale = 0.5) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  for (const auto& p : m.parameters()) {
    auto t = p.value;
    for (auto& v : t.data_mut()) v += u(rng);
  }
}

}  // namespace urw::testing
