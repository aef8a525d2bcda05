#include "urw/metrics/ngram.hpp"

#include <algorithm>

namespace urw::metrics {

NgramCounts count_ngrams(std::span<const std::string> tokens, std::size_t n) {
  NgramCounts counts;
  if (n == 0 || tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[Ngram(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                   tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

std::size_t ngram_total(std::size_t len, std::size_t n) { return len >= n ? len - n + 1 : 0; }

std::size_t clipped_matches(const NgramCounts& candidate, const NgramCounts& reference) {
  std::size_t m = 0;
  for (const auto& [g, c] : candidate) {
    auto it = reference.find(g);
    if (it != reference.end()) m += std::min(c, it->second);
  }
  return m;
}

namespace {

std::vector<std::vector<std::size_t>> lcs_table(std::span<const std::string> a, std::span<const std::string> b) {
  // table[i][j] = LCS of a[i..] and b[j..]
  std::vector<std::vector<std::size_t>> t(a.size() + 1, std::vector<std::size_t>(b.size() + 1, 0));
  for (std::size_t i = a.size(); i-- > 0;) {
    for (std::size_t j = b.size(); j-- > 0;) {
      t[i][j] = a[i] == b[j] ? t[i + 1][j + 1] + 1 : std::max(t[i + 1][j], t[i][j + 1]);
    }
  }
  return t;
}

}  // namespace

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  return lcs_table(a, b)[0][0];
}

std::size_t count_occurrences(std::span<const std::string> hay, std::span<const std::string> needle) {
  if (needle.empty() || needle.size() > hay.size()) return 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i + needle.size() <= hay.size(); ++i) {
    if (std::equal(needle.begin(), needle.end(), hay.begin() + static_cast<std::ptrdiff_t>(i))) ++n;
  }
  return n;
}

std::vector<DiffHunk> diff(std::span<const std::string> source, std::span<const std::string> target) {
  const auto t = lcs_table(source, target);
  std::vector<DiffHunk> hunks;
  DiffHunk cur;
  bool open = false;
  auto close = [&] {
    if (open) hunks.push_back(std::move(cur));
    cur = {};
    open = false;
  };
  std::size_t i = 0, j = 0;
  while (i < source.size() || j < target.size()) {
    if (i < source.size() && j < target.size() && source[i] == target[j]) {
      close();
      ++i;
      ++j;
      continue;
    }
    if (!open) {
      cur.src_begin = cur.src_end = i;
      open = true;
    }
    // Prefer deleting from the source first so substitutions group as
    // delete-then-insert within one hunk.
    if (i < source.size() && (j == target.size() || t[i + 1][j] >= t[i][j + 1])) {
      cur.src_end = ++i;
    } else {
      cur.inserted.push_back(target[j++]);
    }
  }
  close();
  return hunks;
}

}  // namespace urw::metrics
