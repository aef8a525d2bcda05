#include "urw/corpus/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>
#include <random>
#include <set>
#include <string>

#include "urw/error.hpp"

namespace urw::corpus {
namespace {

// Template markup: {X} {Y} person, {T} title of a work, {C} city, {F} food,
// {G} team; {P:X} renders the pronoun of slot X. <c>..</c> wraps the mention
// that a coreference sample replaces with its pronoun, <o>..</o> wraps the
// phrase an omission sample drops. Both must be recoverable from the history.
struct TemplateText {
  std::array<const char*, 2> history;
  const char* utterance;
};

constexpr TemplateText kTemplates[] = {
    {{"{X}有多高", "官方说法{P:X}的身高是一米七"}, "<c>{X}</c>和{Y}谁是最好的球员"},
    {{"你最喜欢什么电影", "我最喜欢{T}"}, "为什么<o>最喜欢{T}</o>"},
    {{"你看{X}的比赛吗", "我看过{X}在{G}的比赛"}, "<c>{X}</c>现在还在<o>{G}</o>吗"},
    {{"{X}演过{T}吗", "{X}在{T}里演得很出色"}, "<c>{X}</c>在<o>{T}</o>里演的是谁"},
    {{"你玩{T}吗", "是的"}, "什么时候开始玩<o>{T}</o>的"},
    {{"你喜欢{X}吗", "{P:X}唱歌很好听"}, "<c>{X}</c>最近有新歌吗"},
    {{"{C}的天气怎么样", "{C}今天天气晴朗"}, "<c>{C}</c>明天<o>天气</o>怎么样"},
    {{"你去过{C}吗", "去过{C}的{F}很好吃"}, "我也想吃<o>{C}的{F}</o>"},
    {{"{X}是哪里人", "{P:X}是{C}人"}, "<c>{X}</c>在<o>{C}</o>住了多久"},
    {{"你读过{T}吗", "读过作者是{X}"}, "<c>{X}</c>还写过别的书吗"},
    {{"{G}今年又是冠军", "是的{G}很厉害"}, "我也觉得<o>{G}今年又是冠军</o>"},
    {{"{X}加入{G}了吗", "{X}已经加入{G}了"}, "<c>{X}</c>为什么要加入<o>{G}</o>"},
    {{"你认识{X}吗", "认识{P:X}是我的同学"}, "<c>{X}</c>现在在哪里工作"},
    {{"你喜欢吃{F}吗", "很喜欢吃{F}"}, "哪里的<o>{F}</o>最好吃"},
    {{"{T}这部电影是谁导演的", "是{X}导演的"}, "<c>{X}</c>还导演过什么<o>电影</o>"},
    {{"{X}和{Y}谁更高", "{X}更高一些"}, "<c>{X}</c>的体重是多少呢"},
    {{"明天去{C}吗", "明天去{C}"}, "几点出发去<o>{C}</o>"},
    {{"你听过{X}的{T}吗", "听过{X}的{T}"}, "<c>{X}</c>是什么时候写的<o>{T}</o>"},
    {{"你最喜欢哪个球队", "我最喜欢{G}"}, "为什么<o>最喜欢{G}</o>呢"},
    {{"{X}在{C}开演唱会吗", "{X}下个月在{C}开演唱会"}, "<c>{X}</c>的门票<o>在{C}</o>贵吗"},
    {{"{T}好看吗", "{T}非常好看"}, "<c>{T}</c>讲的是什么故事"},
    {{"你会做{F}吗", "我会做{F}"}, "可以教我做<o>{F}</o>吗"},
    {{"{Y}是{X}的朋友吗", "是的{X}和{Y}是朋友"}, "<c>{X}</c>和<o>{Y}</o>认识多久了"},
    {{"你知道{G}的教练吗", "{G}的教练是{X}"}, "<c>{X}</c>执教<o>{G}</o>几年了"},
};

constexpr const char* kFillers[] = {
    "你好",       "你好呀",     "在吗",     "在的",     "最近忙吗",   "还好不忙",
    "今天过得怎么样", "还不错",   "吃饭了吗", "刚吃完",   "周末有空吗", "有空",
    "我们聊聊天吧", "好啊",     "早上好",   "早",       "你在做什么", "随便看看",
};

constexpr const char* kSyllables[] = {"ka", "lo", "mi", "ta", "ne", "ro", "su", "vi",
                                      "de", "po", "ri", "ga", "zu", "be", "fa", "yo"};

constexpr std::size_t kMinBudget = 12;

enum class PieceKind { kLiteral, kSlot, kPronoun, kCorefOpen, kCorefClose, kOmitOpen, kOmitClose };

struct Piece {
  PieceKind kind;
  Tokens literal;
  char slot = 0;
};

struct Template {
  std::vector<std::vector<Piece>> history;
  std::vector<Piece> utterance;
  bool has_coref = false;
  bool has_omission = false;
};

std::vector<Piece> parse(std::string_view text) {
  std::vector<Piece> out;
  std::string lit;
  auto flush = [&] {
    if (!lit.empty()) out.push_back({PieceKind::kLiteral, tokenize(lit), 0});
    lit.clear();
  };
  for (std::size_t i = 0; i < text.size();) {
    if (text[i] == '{') {
      flush();
      const auto close = text.find('}', i);
      const auto body = text.substr(i + 1, close - i - 1);
      if (body.size() == 3 && body.substr(0, 2) == "P:") {
        out.push_back({PieceKind::kPronoun, {}, body[2]});
      } else {
        out.push_back({PieceKind::kSlot, {}, body[0]});
      }
      i = close + 1;
    } else if (text.substr(i, 3) == "<c>") {
      flush();
      out.push_back({PieceKind::kCorefOpen, {}, 0});
      i += 3;
    } else if (text.substr(i, 4) == "</c>") {
      flush();
      out.push_back({PieceKind::kCorefClose, {}, 0});
      i += 4;
    } else if (text.substr(i, 3) == "<o>") {
      flush();
      out.push_back({PieceKind::kOmitOpen, {}, 0});
      i += 3;
    } else if (text.substr(i, 4) == "</o>") {
      flush();
      out.push_back({PieceKind::kOmitClose, {}, 0});
      i += 4;
    } else {
      lit.push_back(text[i]);
      ++i;
    }
  }
  flush();
  return out;
}

const std::vector<Template>& templates() {
  static const std::vector<Template> all = [] {
    std::vector<Template> v;
    for (const auto& t : kTemplates) {
      Template tpl;
      for (const auto* h : t.history) tpl.history.push_back(parse(h));
      tpl.utterance = parse(t.utterance);
      for (const auto& p : tpl.utterance) {
        tpl.has_coref |= p.kind == PieceKind::kCorefOpen;
        tpl.has_omission |= p.kind == PieceKind::kOmitOpen;
      }
      v.push_back(std::move(tpl));
    }
    return v;
  }();
  return all;
}

std::string utf8(char32_t cp) {
  std::string s;
  if (cp < 0x80) {
    s.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    s.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    s.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    s.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    s.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    s.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    s.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    s.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    s.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    s.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
  return s;
}

// Characters for entity names, disjoint from every character the templates,
// fillers and pronouns use so that a name never collides with frame text.
std::vector<std::string> name_pool(std::size_t budget) {
  std::set<std::string> reserved;
  auto reserve = [&](std::string_view text) {
    for (auto& t : tokenize(text)) {
      if (is_cjk_token(t)) reserved.insert(t);
    }
  };
  for (const auto& t : kTemplates) {
    reserve(t.history[0]);
    reserve(t.history[1]);
    reserve(t.utterance);
  }
  for (const auto* f : kFillers) reserve(f);
  reserve("他她它那里们");
  std::vector<std::string> pool;
  for (char32_t cp = 0x5A00; cp <= 0x9FFF && pool.size() < budget; cp += 3) {
    auto s = utf8(cp);
    if (!reserved.contains(s)) pool.push_back(std::move(s));
  }
  if (pool.size() < budget) {
    throw ConfigError("vocab_budget " + std::to_string(budget) + " exceeds the " +
                      std::to_string(pool.size()) + " available name characters");
  }
  return pool;
}

struct Entity {
  Tokens surface;
  Tokens pronoun;
};

class Generator {
 public:
  Generator(const SyntheticSpec& spec) : spec_(spec), rng_(spec.seed), pool_(name_pool(spec.vocab_budget)) {}

  std::size_t pick(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }

  Tokens name(std::size_t min_len, std::size_t max_len) {
    const std::size_t len = min_len + pick(max_len - min_len + 1);
    Tokens out;
    while (out.size() < len) {
      auto& c = pool_[pick(pool_.size())];
      if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
    }
    return out;
  }

  Entity entity(char slot) {
    switch (slot) {
      case 'X':
      case 'Y':
        return {name(2, 3), {pick(2) ? "他" : "她"}};
      case 'T':
        return {name(3, 4), {"它"}};
      case 'C':
        return {name(2, 2), {"那", "里"}};
      case 'F':
        return {name(2, 2), {"它"}};
      case 'G': {
        // Latin team names exercise the whitespace-split path of the tokenizer.
        const std::size_t n_syll = std::size(kSyllables);
        const std::size_t teams = std::min(spec_.vocab_budget * 2, n_syll * n_syll);
        const std::size_t k = pick(teams);
        std::string s = std::string(kSyllables[k / n_syll]) + kSyllables[k % n_syll];
        s[0] = static_cast<char>(s[0] - 'a' + 'A');
        return {{s}, {"他", "们"}};
      }
      default:
        throw std::logic_error(std::string("unknown template slot ") + slot);
    }
  }

  DialogueSample sample(const Template& tpl, bool coref, bool omit) {
    std::array<Entity, 128> ents;
    std::set<char> used;
    auto collect = [&](const std::vector<Piece>& ps) {
      for (const auto& p : ps) {
        if (p.kind == PieceKind::kSlot || p.kind == PieceKind::kPronoun) used.insert(p.slot);
      }
    };
    for (const auto& h : tpl.history) collect(h);
    collect(tpl.utterance);
    for (char s : used) ents[static_cast<unsigned char>(s)] = entity(s);
    if (used.contains('X') && used.contains('Y')) {
      while (ents['Y'].surface == ents['X'].surface) ents['Y'] = entity('Y');
    }

    DialogueSample out;
    const std::size_t turns = spec_.min_turns + pick(spec_.max_turns - spec_.min_turns + 1);
    for (std::size_t i = 3; i < turns; ++i) out.history.push_back(tokenize(kFillers[pick(std::size(kFillers))]));
    for (const auto& h : tpl.history) {
      Tokens turn;
      for (const auto& p : h) {
        const auto& add = p.kind == PieceKind::kLiteral ? p.literal
                          : p.kind == PieceKind::kPronoun ? ents[static_cast<unsigned char>(p.slot)].pronoun
                                                          : ents[static_cast<unsigned char>(p.slot)].surface;
        turn.insert(turn.end(), add.begin(), add.end());
      }
      out.history.push_back(std::move(turn));
    }

    out.corefs.emplace();
    out.omissions.emplace();
    bool in_c = false;
    bool in_o = false;
    Tokens dropped;
    std::size_t drop_at = 0;
    for (const auto& p : tpl.utterance) {
      switch (p.kind) {
        case PieceKind::kCorefOpen: in_c = true; break;
        case PieceKind::kCorefClose: in_c = false; break;
        case PieceKind::kOmitOpen:
          in_o = true;
          dropped.clear();
          drop_at = out.utterance.size();
          break;
        case PieceKind::kOmitClose:
          in_o = false;
          if (omit) out.omissions->push_back({drop_at, dropped});
          break;
        default: {
          const auto& e = ents[static_cast<unsigned char>(p.slot)];
          const Tokens& full = p.kind == PieceKind::kLiteral ? p.literal
                               : p.kind == PieceKind::kPronoun ? e.pronoun
                                                               : e.surface;
          out.reference.insert(out.reference.end(), full.begin(), full.end());
          if (in_o && omit) {
            dropped.insert(dropped.end(), full.begin(), full.end());
          } else if (in_c && coref) {
            const std::size_t begin = out.utterance.size();
            out.utterance.insert(out.utterance.end(), e.pronoun.begin(), e.pronoun.end());
            out.corefs->push_back({begin, out.utterance.size(), e.surface});
          } else {
            out.utterance.insert(out.utterance.end(), full.begin(), full.end());
          }
        }
      }
    }
    validate(out);
    return out;
  }

 private:
  const SyntheticSpec& spec_;
  std::mt19937_64 rng_;
  std::vector<std::string> pool_;
};

// Largest-remainder apportionment of n items over the given fractions.
std::vector<std::size_t> apportion(std::size_t n, const std::vector<double>& fractions) {
  std::vector<std::size_t> counts(fractions.size());
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t total = 0;
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    const double exact = fractions[i] * static_cast<double>(n);
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    total += counts[i];
    rem.push_back({exact - std::floor(exact), i});
  }
  std::stable_sort(rem.begin(), rem.end(), [](auto& a, auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; total < n; ++k, ++total) ++counts[rem[k % rem.size()].second];
  return counts;
}

}  // namespace

void validate(const SyntheticSpec& spec) {
  if (spec.num_samples == 0) throw ConfigError("num_samples must be positive");
  for (double r : {spec.coref_rate, spec.omission_rate, spec.neither_rate}) {
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("synthetic rates must lie in [0, 1]");
  }
  const double both = spec.coref_rate + spec.omission_rate + spec.neither_rate - 1.0;
  if (both < -1e-9 || both > std::min(spec.coref_rate, spec.omission_rate) + 1e-9) {
    throw ConfigError("rates are inconsistent: coref + omission + neither - 1 must lie in "
                      "[0, min(coref, omission)]");
  }
  if (spec.min_turns < 3) throw ConfigError("min_turns must be at least 3");
  if (spec.max_turns < spec.min_turns) throw ConfigError("max_turns must be >= min_turns");
  if (spec.vocab_budget < kMinBudget) {
    throw ConfigError("vocab_budget " + std::to_string(spec.vocab_budget) +
                      " is too small for the templates (need at least " +
                      std::to_string(kMinBudget) + ")");
  }
}

std::size_t template_count() { return templates().size(); }

std::vector<DialogueSample> generate_synthetic(const SyntheticSpec& spec) {
  validate(spec);
  const double both = std::max(0.0, spec.coref_rate + spec.omission_rate + spec.neither_rate - 1.0);
  const auto counts = apportion(spec.num_samples, {spec.coref_rate - both, spec.omission_rate - both,
                                                   both, spec.neither_rate});
  // 0 coref only, 1 omission only, 2 both, 3 neither
  std::vector<int> kinds;
  for (int k = 0; k < 4; ++k) kinds.insert(kinds.end(), counts[k], k);

  Generator gen(spec);
  std::shuffle(kinds.begin(), kinds.end(), std::mt19937_64(spec.seed ^ 0x9E3779B97F4A7C15ULL));

  std::array<std::vector<std::size_t>, 4> eligible;
  const auto& tpls = templates();
  for (std::size_t i = 0; i < tpls.size(); ++i) {
    if (tpls[i].has_coref) eligible[0].push_back(i);
    if (tpls[i].has_omission) eligible[1].push_back(i);
    if (tpls[i].has_coref && tpls[i].has_omission) eligible[2].push_back(i);
    eligible[3].push_back(i);
  }

  std::vector<DialogueSample> out;
  out.reserve(kinds.size());
  for (int k : kinds) {
    const auto& choices = eligible[k];
    const auto& tpl = tpls[choices[gen.pick(choices.size())]];
    out.push_back(gen.sample(tpl, k == 0 || k == 2, k == 1 || k == 2));
  }
  return out;
}

CorpusStats corpus_stats(std::span<const DialogueSample> samples) {
  CorpusStats s;
  s.samples = samples.size();
  if (samples.empty()) return s;
  double coref = 0, omit = 0, neither = 0, both = 0, pos = 0, rlen = 0, ulen = 0, clen = 0, turns = 0;
  for (const auto& d : samples) {
    const bool c = d.corefs && !d.corefs->empty();
    const bool o = d.omissions && !d.omissions->empty();
    coref += c;
    omit += o;
    both += c && o;
    neither += !c && !o;
    pos += d.is_positive();
    rlen += static_cast<double>(d.reference.size());
    ulen += static_cast<double>(d.utterance.size());
    double conv = static_cast<double>(d.utterance.size());
    for (const auto& t : d.history) conv += static_cast<double>(t.size());
    clen += conv;
    turns += static_cast<double>(d.history.size() + 1);
  }
  const double n = static_cast<double>(samples.size());
  s.coref_rate = coref / n;
  s.omission_rate = omit / n;
  s.neither_rate = neither / n;
  s.both_rate = both / n;
  s.positive_rate = pos / n;
  s.avg_reference_length = rlen / n;
  s.avg_utterance_length = ulen / n;
  s.avg_conversation_length = clen / n;
  s.avg_turns = turns / n;
  return s;
}

nlohmann::json to_json(const CorpusStats& s) {
  return {{"samples", s.samples},
          {"coref_rate", s.coref_rate},
          {"omission_rate", s.omission_rate},
          {"neither_rate", s.neither_rate},
          {"both_rate", s.both_rate},
          {"positive_rate", s.positive_rate},
          {"avg_reference_length", s.avg_reference_length},
          {"avg_utterance_length", s.avg_utterance_length},
          {"avg_conversation_length", s.avg_conversation_length},
          {"avg_turns", s.avg_turns}};
}

nlohmann::json to_json(const SyntheticSpec& s) {
  return {{"num_samples", s.num_samples}, {"vocab_budget", s.vocab_budget},
          {"min_turns", s.min_turns},     {"max_turns", s.max_turns},
          {"coref_rate", s.coref_rate},   {"omission_rate", s.omission_rate},
          {"neither_rate", s.neither_rate}, {"seed", s.seed}};
}

SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j, SyntheticSpec s) {
  if (!j.is_object()) throw ConfigError("synthetic section must be an object");
  try {
    s.num_samples = j.value("num_samples", s.num_samples);
    s.vocab_budget = j.value("vocab_budget", s.vocab_budget);
    s.min_turns = j.value("min_turns", s.min_turns);
    s.max_turns = j.value("max_turns", s.max_turns);
    s.coref_rate = j.value("coref_rate", s.coref_rate);
    s.omission_rate = j.value("omission_rate", s.omission_rate);
    s.neither_rate = j.value("neither_rate", s.neither_rate);
    s.seed = j.value("seed", s.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synthetic section: ") + e.what());
  }
  return s;
}

}  // namespace urw::corpus
