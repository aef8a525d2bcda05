#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace urw::metrics {

using Ngram = std::vector<std::string>;
using NgramCounts = std::map<Ngram, std::size_t>;

NgramCounts count_ngrams(std::span<const std::string> tokens, std::size_t n);
// Number of n-grams of length n in a sequence of `len` tokens.
std::size_t ngram_total(std::size_t len, std::size_t n);
// Sum over candidate n-grams of min(candidate count, reference count).
std::size_t clipped_matches(const NgramCounts& candidate, const NgramCounts& reference);

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

// Occurrences of `needle` as a contiguous run in `hay` (overlaps counted).
std::size_t count_occurrences(std::span<const std::string> hay, std::span<const std::string> needle);

// Edit script between a source and a target from a longest common
// subsequence alignment. Each hunk replaces source[src_begin, src_end) by
// `inserted`; pure insertions have src_begin == src_end.
struct DiffHunk {
  std::size_t src_begin = 0;
  std::size_t src_end = 0;
  std::vector<std::string> inserted;
};
std::vector<DiffHunk> diff(std::span<const std::string> source, std::span<const std::string> target);

}  // namespace urw::metrics
