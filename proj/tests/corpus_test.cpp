#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "support.hpp"
#include "urw/corpus/dialogue.hpp"
#include "urw/corpus/synthetic.hpp"
#include "urw/corpus/tokenizer.hpp"
#include "urw/corpus/vocabulary.hpp"
#include "urw/error.hpp"

using namespace urw;
using namespace urw::corpus;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("urw_corpus_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string strip_ws(std::string s) {
  std::string out;
  for (char c : s) {
    if (c != ' ' && c != '\t' && c != '\n') out += c;
  }
  return out;
}

}  // namespace

TEST_CASE("tokenize splits CJK per character and other text on whitespace") {
  CHECK(tokenize("梅西有多高") == Tokens{"梅", "西", "有", "多", "高"});
  CHECK(tokenize("NBA") == Tokens{"NBA"});
  CHECK(tokenize("").empty());
  CHECK(tokenize("他和C罗谁是最好的球员？") ==
        Tokens{"他", "和", "C", "罗", "谁", "是", "最", "好", "的", "球", "员", "？"});
  CHECK(tokenize("Kobe 在 NBA  打球") == Tokens{"Kobe", "在", "NBA", "打", "球"});
  CHECK(tokenize("a　b") == Tokens{"a", "b"});
  CHECK(is_cjk(U'\U00020000'));  // extension B
  CHECK_FALSE(is_cjk(U'A'));
}

TEST_CASE("detokenize reconstructs the input modulo whitespace") {
  const std::vector<std::string> texts = {"梅西有多高", "Kobe 在 NBA 打球", "hello world", "我喜欢 C++ 和 Rust 语言",
                                          "  leading and trailing  "};
  for (const auto& t : texts) {
    const auto toks = tokenize(t);
    CHECK(tokenize(detokenize(toks)) == toks);
    CHECK(strip_ws(detokenize(toks)) == strip_ws(t));
  }
  CHECK(detokenize(Tokens{"Kobe", "在", "NBA"}) == "Kobe在NBA");
  CHECK(detokenize(Tokens{"a", "b", "梅"}) == "a b梅");
}

TEST_CASE("build_vocab keeps CJK tokens and frequent words") {
  auto s = urw::testing::make_sample({{"abc", "梅"}}, {"abc", "xyz", "xyz"}, {"xyz", "西"});
  auto v = build_vocab(std::vector<DialogueSample>{s});
  CHECK(v.token(kPad) == "<pad>");
  CHECK(v.token(kUnk) == "<unk>");
  CHECK(v.token(kEot) == "<eot>");
  CHECK(v.token(kBos) == "<bos>");
  CHECK(v.token(kEos) == "<eos>");
  CHECK(v.contains("梅"));
  CHECK(v.contains("西"));
  CHECK(v.contains("xyz"));       // three occurrences
  CHECK_FALSE(v.contains("abc"));  // only twice
  CHECK(v.id("abc") == kUnk);
  CHECK_THROWS_AS(build_vocab(std::vector<DialogueSample>{}), DataError);
}

TEST_CASE("vocabulary ids round-trip and the file format is one token per line") {
  SyntheticSpec spec;
  spec.num_samples = 300;
  const auto data = generate_synthetic(spec);
  const auto v = build_vocab(data);
  std::vector<std::size_t> ids(v.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
  CHECK(v.encode(v.decode(ids)) == ids);
  const auto dir = temp_dir("vocab");
  v.save(dir / "vocab.txt");
  const auto back = Vocabulary::load(dir / "vocab.txt");
  CHECK(back.tokens() == v.tokens());
  CHECK(back.hash() == v.hash());
  std::ifstream in(dir / "vocab.txt");
  std::string first;
  std::getline(in, first);
  CHECK(first == "<pad>");
}

TEST_CASE("vocabulary size matches an independent frequency count") {
  const auto data = generate_synthetic(SyntheticSpec{});
  std::map<std::string, int> freq;
  auto add = [&](const Tokens& t) {
    for (const auto& w : t) freq[w] += 1;
  };
  for (const auto& s : data) {
    for (const auto& h : s.history) add(h);
    add(s.utterance);
    add(s.reference);
  }
  std::size_t expected = 5;
  for (const auto& [w, c] : freq) {
    const bool cjk = tokenize(w).size() == 1 && is_cjk_token(w);
    if (cjk || c >= 3) ++expected;
  }
  CHECK(build_vocab(data).size() == expected);
}

TEST_CASE("jsonl round-trip") {
  SyntheticSpec spec;
  spec.num_samples = 100;
  spec.seed = 11;
  const auto data = generate_synthetic(spec);
  const auto dir = temp_dir("jsonl");
  save_jsonl(data, dir / "d.jsonl");
  CHECK(load_jsonl(dir / "d.jsonl") == data);

  DialogueSample bare = urw::testing::make_sample({{"a"}}, {"b"}, {"b"});
  save_jsonl(std::vector<DialogueSample>{bare}, dir / "bare.jsonl");
  const auto back = load_jsonl(dir / "bare.jsonl");
  CHECK_FALSE(back[0].corefs.has_value());
  CHECK(back[0] == bare);
}

TEST_CASE("jsonl errors name the line and the field") {
  const auto dir = temp_dir("jsonl_err");
  {
    std::ofstream out(dir / "missing.jsonl");
    out << R"({"history":[["a"]],"utterance":["b"],"reference":["b"]})" << '\n';
    out << R"({"history":[["a"]],"reference":["b"]})" << '\n';
  }
  try {
    load_jsonl(dir / "missing.jsonl");
    FAIL("expected SchemaError");
  } catch (const SchemaError& e) {
    CHECK(e.field() == "utterance");
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  {
    std::ofstream out(dir / "bad.jsonl");
    out << R"({"history":[["a"]],"utterance":["b"],"reference":["b"]})" << '\n' << "{not json\n";
  }
  try {
    load_jsonl(dir / "bad.jsonl");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  {
    std::ofstream out(dir / "span.jsonl");
    out << R"({"history":[["a"]],"utterance":["b"],"reference":["a"],"corefs":[{"span":[0,3],"antecedent":["a"]}]})"
        << '\n';
  }
  CHECK_THROWS_AS(load_jsonl(dir / "span.jsonl"), SchemaError);
}

TEST_CASE("a coreference record with a pronoun span loads as (H, U_n -> R)") {
  const auto dir = temp_dir("context1");
  {
    std::ofstream out(dir / "c1.jsonl");
    nlohmann::json j = {{"history", {tokenize("梅西有多高？"), tokenize("官方说法他的身高是5英尺7英寸。")}},
                        {"utterance", tokenize("他和C罗谁是最好的球员？")},
                        {"reference", tokenize("梅西和C罗谁是最好的球员？")},
                        {"corefs", {{{"span", {0, 1}}, {"antecedent", {"梅", "西"}}}}}};
    out << j.dump() << '\n';
  }
  const auto s = load_jsonl(dir / "c1.jsonl").at(0);
  REQUIRE(s.history.size() == 2);
  CHECK(s.history[0] == tokenize("梅西有多高？"));
  CHECK(s.utterance.front() == "他");
  CHECK(s.reference.front() == "梅");
  CHECK(s.is_positive());
}

TEST_CASE("synthetic generator hits the target rates and length") {
  SyntheticSpec spec;
  spec.num_samples = 10000;
  const auto data = generate_synthetic(spec);
  const auto st = corpus_stats(data);
  CHECK(std::abs(st.coref_rate - 0.335) <= 0.03);
  CHECK(std::abs(st.omission_rate - 0.524) <= 0.03);
  CHECK(std::abs(st.neither_rate - 0.297) <= 0.03);
  CHECK(std::abs(st.avg_reference_length - 10.5) <= 3.0);
  CHECK(template_count() >= 20);
}

TEST_CASE("synthetic samples satisfy the corpus contracts") {
  const auto data = generate_synthetic(SyntheticSpec{});
  for (const auto& s : data) {
    REQUIRE(s.corefs.has_value());
    REQUIRE(s.omissions.has_value());
    CHECK_NOTHROW(validate(s));
    const bool neither = s.corefs->empty() && s.omissions->empty();
    CHECK(neither == !s.is_positive());
    if (neither) CHECK(s.reference == s.utterance);
    std::set<std::string> source(s.utterance.begin(), s.utterance.end());
    for (const auto& h : s.history) source.insert(h.begin(), h.end());
    for (const auto& t : s.reference) CHECK(source.contains(t));
    // R is U_n with pronoun spans replaced by antecedents and omissions re-inserted.
    Tokens rebuilt;
    for (std::size_t i = 0; i <= s.utterance.size(); ++i) {
      for (const auto& o : *s.omissions) {
        if (o.position == i) rebuilt.insert(rebuilt.end(), o.tokens.begin(), o.tokens.end());
      }
      if (i == s.utterance.size()) break;
      bool replaced = false;
      for (const auto& c : *s.corefs) {
        if (c.begin == i) rebuilt.insert(rebuilt.end(), c.antecedent.begin(), c.antecedent.end());
        replaced = replaced || (i >= c.begin && i < c.end);
      }
      if (!replaced) rebuilt.push_back(s.utterance[i]);
    }
    CHECK(rebuilt == s.reference);
    CHECK(s.history.size() + 1 >= 3);
    CHECK(s.history.size() + 1 <= 4);
  }
}

TEST_CASE("synthetic generator is byte-reproducible and seed-sensitive") {
  SyntheticSpec spec;
  spec.num_samples = 400;
  const auto dir = temp_dir("repro");
  save_jsonl(generate_synthetic(spec), dir / "a.jsonl");
  save_jsonl(generate_synthetic(spec), dir / "b.jsonl");
  CHECK(slurp(dir / "a.jsonl") == slurp(dir / "b.jsonl"));
  spec.seed = 8;
  save_jsonl(generate_synthetic(spec), dir / "c.jsonl");
  CHECK(slurp(dir / "a.jsonl") != slurp(dir / "c.jsonl"));
}

TEST_CASE("synthetic spec validation") {
  SyntheticSpec s;
  s.vocab_budget = 5;
  CHECK_THROWS_AS(generate_synthetic(s), ConfigError);
  s = {};
  s.neither_rate = 0.9;  // overlap would exceed the smaller rate
  CHECK_THROWS_AS(validate(s), ConfigError);
  s = {};
  s.coref_rate = 1.5;
  CHECK_THROWS_AS(validate(s), ConfigError);
  s = {};
  s.min_turns = 2;
  CHECK_THROWS_AS(validate(s), ConfigError);
  s = {};
  s.min_turns = 5;
  s.max_turns = 7;
  s.num_samples = 200;
  for (const auto& d : generate_synthetic(s)) CHECK(d.history.size() + 1 >= 5);
  const auto j = to_json(SyntheticSpec{});
  CHECK(synthetic_spec_from_json(j) == SyntheticSpec{});
}

TEST_CASE("split is 80/10/10, stratified and deterministic") {
  const auto data = generate_synthetic(SyntheticSpec{});
  const auto a = split_corpus(data, 3), b = split_corpus(data, 3);
  CHECK(a.train == b.train);
  CHECK(a.train.size() + a.valid.size() + a.test.size() == data.size());
  CHECK(std::abs(static_cast<double>(a.train.size()) - 1600.0) <= 2.0);
  auto pos_rate = [](const std::vector<DialogueSample>& v) {
    double p = 0;
    for (const auto& s : v) p += s.is_positive();
    return p / static_cast<double>(v.size());
  };
  CHECK(std::abs(pos_rate(a.test) - pos_rate(data)) < 0.02);
  CHECK(std::abs(pos_rate(a.valid) - pos_rate(data)) < 0.02);
}
