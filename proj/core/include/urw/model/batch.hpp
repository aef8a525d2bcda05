#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "urw/corpus/dialogue.hpp"
#include "urw/corpus/vocabulary.hpp"
#include "urw/model/config.hpp"

namespace urw::model {

// One unfolded (H, U_n) input. Every history turn is followed by an EOT
// delimiter that belongs to that turn; U_n is followed by an EOS so pointer
// heads can copy the terminator.
struct EncodedInput {
  std::vector<std::string> tokens;  // surface form per position
  std::vector<std::size_t> ids;     // vocabulary ids, UNK for out-of-vocabulary
  // Extended ids: out-of-vocabulary tokens get V + k, k = first-seen order,
  // so pointer heads can copy words the vocabulary lacks.
  std::vector<std::size_t> ext_ids;
  std::vector<std::size_t> positions;
  std::vector<std::size_t> turns;
  std::vector<std::uint8_t> is_history;
  std::vector<std::string> oov;  // oov[k] has extended id V + k

  std::size_t size() const { return ids.size(); }
  std::size_t ext_size(std::size_t vocab_size) const { return vocab_size + oov.size(); }
  // Extended id of `token` for this input, or UNK when it is neither in the
  // vocabulary nor in the input.
  std::size_t ext_id(const corpus::Vocabulary& vocab, const std::string& token) const;
  // Inverse of ext_id.
  const std::string& ext_token(const corpus::Vocabulary& vocab, std::size_t ext) const;
};

// Throws ContractError on an empty utterance and DimensionError when the
// unfolded length exceeds config.max_positions.
EncodedInput encode_input(const corpus::Vocabulary& vocab, std::span<const corpus::Tokens> history,
                          const corpus::Tokens& utterance, const ModelConfig& config);

// Padded mini-batch. Sources are [B, m], decoder streams are [B, T].
struct Batch {
  std::size_t batch = 0;
  std::size_t src_len = 0;
  std::size_t tgt_len = 0;
  std::size_t ext_size = 0;  // vocabulary size plus the largest per-sample OOV count

  std::vector<std::size_t> src_ids, src_ext, src_pos, src_turn;
  std::vector<std::uint8_t> src_valid, src_hist;

  // Decoder input: BOS followed by the reference (vocabulary ids).
  std::vector<std::size_t> dec_ids, dec_pos;
  // Gold next token in extended ids: reference followed by EOS.
  std::vector<std::size_t> targets;
  std::vector<std::uint8_t> tgt_valid;

  std::vector<std::size_t> sample_ids;  // caller-supplied ids for error messages
  std::size_t target_tokens() const;
};

struct TrainingExample {
  EncodedInput input;
  std::vector<std::size_t> target_ext;  // reference in extended ids, without EOS
  std::size_t sample_id = 0;
};

TrainingExample make_example(const corpus::Vocabulary& vocab, const corpus::DialogueSample& sample,
                             const ModelConfig& config, std::size_t sample_id = 0);

// Pads to the batch maxima. PAD positions are flagged invalid and carry id 0.
Batch make_batch(std::span<const TrainingExample* const> examples, std::size_t vocab_size);

// Decoder-only batch for inference: one row per prefix, all sharing `input`.
// Prefixes are in extended ids and must all have the same length.
Batch make_prefix_batch(const EncodedInput& input, std::span<const std::vector<std::size_t>> prefixes,
                        std::size_t vocab_size);

}  // namespace urw::model
