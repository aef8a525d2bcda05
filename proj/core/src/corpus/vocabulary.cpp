#include "urw/corpus/vocabulary.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "urw/error.hpp"

namespace urw::corpus {
namespace {

const std::vector<std::string>& special_tokens() {
  static const std::vector<std::string> s = {kPadToken, kUnkToken, kEotToken, kBosToken, kEosToken};
  return s;
}

}  // namespace

Vocabulary::Vocabulary() : Vocabulary(special_tokens()) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  const auto& specials = special_tokens();
  if (tokens_.size() < kNumSpecials ||
      !std::equal(specials.begin(), specials.end(), tokens_.begin())) {
    throw DataError("vocabulary must begin with <pad> <unk> <eot> <bos> <eos>");
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].empty()) throw DataError("vocabulary entry " + std::to_string(i) + " is empty");
    if (!ids_.emplace(tokens_[i], i).second) {
      throw DataError("duplicate vocabulary entry '" + tokens_[i] + "'");
    }
  }
}

std::size_t Vocabulary::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(std::size_t id) const {
  if (id >= tokens_.size()) {
    throw IndexError("vocabulary id " + std::to_string(id) + " out of range");
  }
  return tokens_[id];
}

std::vector<std::size_t> Vocabulary::encode(std::span<const std::string> tokens) const {
  std::vector<std::size_t> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

Tokens Vocabulary::decode(std::span<const std::size_t> ids) const {
  Tokens out;
  out.reserve(ids.size());
  for (auto i : ids) out.push_back(token(i));
  return out;
}

std::uint64_t Vocabulary::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](unsigned char c) {
    h ^= c;
    h *= 1099511628211ULL;
  };
  for (const auto& t : tokens_) {
    for (unsigned char c : t) mix(c);
    mix('\n');
  }
  return h;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return Vocabulary(std::move(tokens));
}

Vocabulary build_vocab(std::span<const DialogueSample> corpus, std::size_t min_count_noncjk) {
  if (corpus.empty()) throw DataError("cannot build a vocabulary from an empty corpus");
  std::map<std::string, std::size_t> counts;
  auto count = [&](const Tokens& ts) {
    for (const auto& t : ts) ++counts[t];
  };
  for (const auto& s : corpus) {
    for (const auto& turn : s.history) count(turn);
    count(s.utterance);
    count(s.reference);
  }
  std::vector<std::string> tokens = special_tokens();
  for (const auto& [tok, n] : counts) {
    if (std::find(tokens.begin(), tokens.begin() + kNumSpecials, tok) !=
        tokens.begin() + kNumSpecials) {
      continue;
    }
    if (is_cjk_token(tok) || n >= min_count_noncjk) tokens.push_back(tok);
  }
  return Vocabulary(std::move(tokens));
}

}  // namespace urw::corpus
