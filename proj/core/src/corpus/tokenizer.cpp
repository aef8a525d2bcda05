#include "urw/corpus/tokenizer.hpp"

namespace urw::corpus {
namespace {

struct Decoded {
  char32_t cp;
  std::size_t len;
};

// Minimal UTF-8 decoder; an invalid lead or continuation byte decodes as a
// one-byte non-CJK unit so the tokenizer never drops input.
Decoded decode_one(std::string_view s, std::size_t i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  auto cont = [&](std::size_t k) -> int {
    if (i + k >= s.size()) return -1;
    const auto b = static_cast<unsigned char>(s[i + k]);
    return (b & 0xC0) == 0x80 ? (b & 0x3F) : -1;
  };
  if (b0 < 0x80) return {b0, 1};
  if ((b0 & 0xE0) == 0xC0) {
    const int c1 = cont(1);
    if (c1 >= 0) return {static_cast<char32_t>(((b0 & 0x1F) << 6) | c1), 2};
  } else if ((b0 & 0xF0) == 0xE0) {
    const int c1 = cont(1), c2 = cont(2);
    if (c1 >= 0 && c2 >= 0) return {static_cast<char32_t>(((b0 & 0x0F) << 12) | (c1 << 6) | c2), 3};
  } else if ((b0 & 0xF8) == 0xF0) {
    const int c1 = cont(1), c2 = cont(2), c3 = cont(3);
    if (c1 >= 0 && c2 >= 0 && c3 >= 0) {
      return {static_cast<char32_t>(((b0 & 0x07) << 18) | (c1 << 12) | (c2 << 6) | c3), 4};
    }
  }
  return {0xFFFD, 1};
}

bool is_space(char32_t cp) {
  return cp == U' ' || cp == U'\t' || cp == U'\n' || cp == U'\r' || cp == U'\f' || cp == U'\v' ||
         cp == 0x3000 || cp == 0x00A0;
}

}  // namespace

bool is_cjk(char32_t cp) noexcept {
  return (cp >= 0x4E00 && cp <= 0x9FFF) ||    // CJK Unified Ideographs
         (cp >= 0x3400 && cp <= 0x4DBF) ||    // Extension A
         (cp >= 0x20000 && cp <= 0x2A6DF) ||  // Extension B
         (cp >= 0x2A700 && cp <= 0x2EBEF) ||  // Extensions C-F
         (cp >= 0x30000 && cp <= 0x323AF) ||  // Extensions G-H
         (cp >= 0xF900 && cp <= 0xFAFF) ||    // Compatibility Ideographs
         (cp >= 0x2F800 && cp <= 0x2FA1F);    // Compatibility Supplement
}

bool is_cjk_token(std::string_view token) {
  if (token.empty()) return false;
  const auto d = decode_one(token, 0);
  return d.len == token.size() && is_cjk(d.cp);
}

Tokens tokenize(std::string_view text) {
  Tokens out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) out.push_back(std::move(word));
    word.clear();
  };
  for (std::size_t i = 0; i < text.size();) {
    const auto d = decode_one(text, i);
    const auto unit = text.substr(i, d.len);
    if (is_cjk(d.cp)) {
      flush();
      out.emplace_back(unit);
    } else if (is_space(d.cp)) {
      flush();
    } else {
      word.append(unit);
    }
    i += d.len;
  }
  flush();
  return out;
}

std::string detokenize(std::span<const std::string> tokens) {
  std::string out;
  bool prev_word = false;
  for (const auto& t : tokens) {
    const bool word = !is_cjk_token(t);
    if (word && prev_word) out.push_back(' ');
    out += t;
    prev_word = word;
  }
  return out;
}

}  // namespace urw::corpus
