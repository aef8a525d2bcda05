#include "urw/decoding/trace.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "urw/error.hpp"

namespace urw::decoding {
namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::size_t argmax_position(const Hypothesis& hyp, std::size_t step) {
  const auto& row = hyp.attention.at(step);
  if (row.empty()) throw ContractError("no attention recorded for this head");
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

std::string trace_csv(const model::EncodedInput& input, const Hypothesis& hyp) {
  std::ostringstream os;
  for (const auto& tok : input.tokens) os << csv_field(tok) << ',';
  os << "lambda\n";
  for (std::size_t t = 0; t < hyp.attention.size(); ++t) {
    const auto& row = hyp.attention[t];
    for (std::size_t j = 0; j < input.size(); ++j) os << (j < row.size() ? fmt(row[j]) : std::string()) << ',';
    if (t < hyp.lambdas.size()) os << fmt(hyp.lambdas[t]);
    os << '\n';
  }
  return os.str();
}

std::string render_heatmap(const model::EncodedInput& input, const Hypothesis& hyp,
                           const corpus::Vocabulary& vocab) {
  static constexpr char kShades[] = " .:-=+*#%@";
  std::ostringstream os;
  os << "input:";
  for (std::size_t j = 0; j < input.size(); ++j) os << ' ' << j << ':' << input.tokens[j];
  os << '\n';
  for (std::size_t t = 0; t < hyp.tokens.size(); ++t) {
    os << "step " << t << " emit " << input.ext_token(vocab, hyp.tokens[t]);
    if (t < hyp.lambdas.size()) os << " lambda " << fmt(hyp.lambdas[t]);
    const auto& row = hyp.attention.at(t);
    if (!row.empty()) {
      const double peak = *std::max_element(row.begin(), row.end());
      os << " |";
      for (double w : row) {
        const auto level = peak > 0.0 ? static_cast<std::size_t>(w / peak * 9.0 + 0.5) : 0;
        os << kShades[std::min<std::size_t>(level, 9)];
      }
      const auto j = argmax_position(hyp, t);
      os << "| max " << j << ':' << input.tokens[j] << ' ' << fmt(row[j]);
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace urw::decoding
