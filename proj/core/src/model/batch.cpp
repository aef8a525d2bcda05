#include "urw/model/batch.hpp"

#include <algorithm>

#include "urw/error.hpp"

namespace urw::model {

using corpus::kBos;
using corpus::kEos;
using corpus::kEot;
using corpus::kUnk;

std::size_t EncodedInput::ext_id(const corpus::Vocabulary& vocab, const std::string& token) const {
  if (vocab.contains(token)) return vocab.id(token);
  auto it = std::find(oov.begin(), oov.end(), token);
  if (it == oov.end()) return kUnk;
  return vocab.size() + static_cast<std::size_t>(it - oov.begin());
}

const std::string& EncodedInput::ext_token(const corpus::Vocabulary& vocab, std::size_t ext) const {
  if (ext < vocab.size()) return vocab.token(ext);
  if (ext - vocab.size() >= oov.size()) {
    throw IndexError("extended id " + std::to_string(ext) + " out of range");
  }
  return oov[ext - vocab.size()];
}

EncodedInput encode_input(const corpus::Vocabulary& vocab, std::span<const corpus::Tokens> history,
                          const corpus::Tokens& utterance, const ModelConfig& config) {
  if (utterance.empty()) throw ContractError("cannot rewrite an empty utterance");
  EncodedInput in;
  auto push = [&](const std::string& tok, std::size_t id, std::size_t turn, bool hist) {
    std::size_t ext = id;
    if (id == kUnk && tok != corpus::kUnkToken) {
      auto it = std::find(in.oov.begin(), in.oov.end(), tok);
      if (it == in.oov.end()) {
        in.oov.push_back(tok);
        it = in.oov.end() - 1;
      }
      ext = vocab.size() + static_cast<std::size_t>(it - in.oov.begin());
    }
    in.tokens.push_back(tok);
    in.ids.push_back(id);
    in.ext_ids.push_back(ext);
    in.positions.push_back(in.positions.size());
    in.turns.push_back(std::min(turn, config.max_turns - 1));
    in.is_history.push_back(hist ? 1 : 0);
  };
  for (std::size_t t = 0; t < history.size(); ++t) {
    for (const auto& tok : history[t]) push(tok, vocab.id(tok), t, true);
    push(corpus::kEotToken, kEot, t, true);
  }
  for (const auto& tok : utterance) push(tok, vocab.id(tok), history.size(), false);
  push(corpus::kEosToken, kEos, history.size(), false);
  if (in.size() > config.max_positions) {
    throw DimensionError("unfolded input has " + std::to_string(in.size()) +
                         " tokens, more than max_positions " + std::to_string(config.max_positions));
  }
  return in;
}

std::size_t Batch::target_tokens() const {
  return static_cast<std::size_t>(std::count(tgt_valid.begin(), tgt_valid.end(), 1));
}

TrainingExample make_example(const corpus::Vocabulary& vocab, const corpus::DialogueSample& sample,
                             const ModelConfig& config, std::size_t sample_id) {
  TrainingExample ex;
  ex.input = encode_input(vocab, sample.history, sample.utterance, config);
  ex.sample_id = sample_id;
  for (const auto& tok : sample.reference) ex.target_ext.push_back(ex.input.ext_id(vocab, tok));
  return ex;
}

namespace {

void fill_source(Batch& b, std::size_t row, const EncodedInput& in) {
  const std::size_t off = row * b.src_len;
  for (std::size_t i = 0; i < in.size(); ++i) {
    b.src_ids[off + i] = in.ids[i];
    b.src_ext[off + i] = in.ext_ids[i];
    b.src_pos[off + i] = in.positions[i];
    b.src_turn[off + i] = in.turns[i];
    b.src_valid[off + i] = 1;
    b.src_hist[off + i] = in.is_history[i];
  }
}

void allocate(Batch& b) {
  const std::size_t ns = b.batch * b.src_len, nt = b.batch * b.tgt_len;
  b.src_ids.assign(ns, corpus::kPad);
  b.src_ext.assign(ns, corpus::kPad);
  b.src_pos.assign(ns, 0);
  b.src_turn.assign(ns, 0);
  b.src_valid.assign(ns, 0);
  b.src_hist.assign(ns, 0);
  b.dec_ids.assign(nt, corpus::kPad);
  b.dec_pos.assign(nt, 0);
  b.targets.assign(nt, corpus::kPad);
  b.tgt_valid.assign(nt, 0);
}

}  // namespace

Batch make_batch(std::span<const TrainingExample* const> examples, std::size_t vocab_size) {
  if (examples.empty()) throw ContractError("make_batch: no examples");
  Batch b;
  b.batch = examples.size();
  for (const auto* ex : examples) {
    b.src_len = std::max(b.src_len, ex->input.size());
    b.tgt_len = std::max(b.tgt_len, ex->target_ext.size() + 1);
    b.ext_size = std::max(b.ext_size, ex->input.ext_size(vocab_size));
  }
  allocate(b);
  for (std::size_t r = 0; r < b.batch; ++r) {
    const auto& ex = *examples[r];
    fill_source(b, r, ex.input);
    b.sample_ids.push_back(ex.sample_id);
    const std::size_t off = r * b.tgt_len;
    for (std::size_t t = 0; t <= ex.target_ext.size(); ++t) {
      const std::size_t prev = t == 0 ? kBos : ex.target_ext[t - 1];
      b.dec_ids[off + t] = prev < vocab_size ? prev : kUnk;
      b.dec_pos[off + t] = t;
      b.targets[off + t] = t < ex.target_ext.size() ? ex.target_ext[t] : kEos;
      b.tgt_valid[off + t] = 1;
    }
  }
  return b;
}

Batch make_prefix_batch(const EncodedInput& input, std::span<const std::vector<std::size_t>> prefixes,
                        std::size_t vocab_size) {
  if (prefixes.empty()) throw ContractError("make_prefix_batch: no prefixes");
  Batch b;
  b.batch = prefixes.size();
  b.src_len = input.size();
  b.tgt_len = prefixes.front().size() + 1;
  b.ext_size = input.ext_size(vocab_size);
  allocate(b);
  for (std::size_t r = 0; r < b.batch; ++r) {
    if (prefixes[r].size() + 1 != b.tgt_len) {
      throw ContractError("make_prefix_batch: prefixes differ in length");
    }
    fill_source(b, r, input);
    b.sample_ids.push_back(r);
    const std::size_t off = r * b.tgt_len;
    for (std::size_t t = 0; t < b.tgt_len; ++t) {
      const std::size_t prev = t == 0 ? kBos : prefixes[r][t - 1];
      b.dec_ids[off + t] = prev < vocab_size ? prev : kUnk;
      b.dec_pos[off + t] = t;
      b.tgt_valid[off + t] = 1;
    }
  }
  return b;
}

}  // namespace urw::model
