#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace urw::corpus {

using Tokens = std::vector<std::string>;

// True for codepoints in the CJK Unified Ideographs blocks (base, extensions
// A through H) and the two compatibility ideograph blocks.
bool is_cjk(char32_t cp) noexcept;

// True when the token is a single CJK ideograph.
bool is_cjk_token(std::string_view token);

// Splits UTF-8 text into tokens: every CJK ideograph is its own token and
// each maximal non-CJK run is split on whitespace. Malformed UTF-8 bytes are
// treated as opaque non-CJK characters.
Tokens tokenize(std::string_view text);

// Inverse of tokenize up to whitespace: adjacent non-CJK tokens are joined
// with a single space, everything else is concatenated.
std::string detokenize(std::span<const std::string> tokens);

}  // namespace urw::corpus
