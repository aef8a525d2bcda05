#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "urw/corpus/dialogue.hpp"

namespace urw::corpus {

// Fixed ids of the special tokens; they always occupy the first five slots.
enum SpecialId : std::size_t { kPad = 0, kUnk = 1, kEot = 2, kBos = 3, kEos = 4 };
inline constexpr std::size_t kNumSpecials = 5;

inline constexpr const char* kPadToken = "<pad>";
inline constexpr const char* kUnkToken = "<unk>";
inline constexpr const char* kEotToken = "<eot>";
inline constexpr const char* kBosToken = "<bos>";
inline constexpr const char* kEosToken = "<eos>";

class Vocabulary {
 public:
  // Specials only.
  Vocabulary();
  // `tokens` must start with the five specials in id order.
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t size() const noexcept { return tokens_.size(); }
  bool contains(const std::string& token) const { return ids_.contains(token); }
  std::size_t id(const std::string& token) const;  // kUnk when unknown
  const std::string& token(std::size_t id) const;

  std::vector<std::size_t> encode(std::span<const std::string> tokens) const;
  Tokens decode(std::span<const std::size_t> ids) const;

  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  // FNV-1a over the newline-joined token list; pinned into checkpoints.
  std::uint64_t hash() const;

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> ids_;
};

// Every CJK character token is kept; other tokens need at least
// `min_count_noncjk` occurrences across history, utterance and reference.
// Regular tokens follow the specials in byte-lexicographic order.
Vocabulary build_vocab(std::span<const DialogueSample> corpus, std::size_t min_count_noncjk = 3);

}  // namespace urw::corpus
