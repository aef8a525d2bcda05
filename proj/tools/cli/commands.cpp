#include "commands.hpp"

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "run_config.hpp"
#include "urw/corpus/dialogue.hpp"
#include "urw/corpus/synthetic.hpp"
#include "urw/corpus/tokenizer.hpp"
#include "urw/corpus/vocabulary.hpp"
#include "urw/decoding/beam_search.hpp"
#include "urw/decoding/trace.hpp"
#include "urw/error.hpp"
#include "urw/metrics/metrics.hpp"
#include "urw/model/checkpoint.hpp"
#include "urw/training/trainer.hpp"

namespace urw::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kRunDirEnv = "URW_RUN_DIR";

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

// Flags shared by every subcommand that reads a config file.
struct Common {
  std::string config_file;
  RunConfig cfg;

  void add(CLI::App* app) { app->add_option("--config", config_file, "JSON run configuration"); }
  void load() {
    if (!config_file.empty()) cfg = load_run_config(config_file, cfg);
  }
};

// Applies `value` to `target` when the flag was given on the command line.
template <typename T>
void override_if(const CLI::Option* opt, const T& value, T& target) {
  if (opt->count() > 0) target = value;
}

// ---- gen-data -------------------------------------------------------------

struct GenData {
  Common common;
  std::string out;
  std::size_t num_samples = 0, vocab_budget = 0, min_turns = 0, max_turns = 0;
  std::uint64_t seed = 0;
  double coref = 0, omission = 0, neither = 0;
  CLI::Option *o_out, *o_n, *o_budget, *o_min, *o_max, *o_seed, *o_coref, *o_omit, *o_neither;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("gen-data", "Generate a synthetic rewrite corpus");
    common.add(app);
    o_out = app->add_option("--out", out, "Output directory");
    o_n = app->add_option("--num-samples", num_samples);
    o_budget = app->add_option("--vocab-budget", vocab_budget, "Distinct characters for entity names");
    o_min = app->add_option("--min-turns", min_turns);
    o_max = app->add_option("--max-turns", max_turns);
    o_seed = app->add_option("--seed", seed);
    o_coref = app->add_option("--coref-rate", coref);
    o_omit = app->add_option("--omission-rate", omission);
    o_neither = app->add_option("--neither-rate", neither);
  }

  int execute(std::ostream& os) {
    common.load();
    auto& c = common.cfg;
    override_if(o_out, out, c.paths.data);
    override_if(o_n, num_samples, c.synthetic.num_samples);
    override_if(o_budget, vocab_budget, c.synthetic.vocab_budget);
    override_if(o_min, min_turns, c.synthetic.min_turns);
    override_if(o_max, max_turns, c.synthetic.max_turns);
    override_if(o_seed, seed, c.synthetic.seed);
    override_if(o_coref, coref, c.synthetic.coref_rate);
    override_if(o_omit, omission, c.synthetic.omission_rate);
    override_if(o_neither, neither, c.synthetic.neither_rate);
    if (c.paths.data.empty()) throw ConfigError("gen-data needs --out or paths.data");

    const auto data = corpus::generate_synthetic(c.synthetic);
    const auto split = corpus::split_corpus(data, c.synthetic.seed);
    const auto vocab = corpus::build_vocab(split.train);
    const fs::path dir = c.paths.data;
    fs::create_directories(dir);
    corpus::save_jsonl(split.train, dir / "train.jsonl");
    corpus::save_jsonl(split.valid, dir / "valid.jsonl");
    corpus::save_jsonl(split.test, dir / "test.jsonl");
    vocab.save(dir / "vocab.txt");
    const json stats = {{"all", corpus::to_json(corpus::corpus_stats(data))},
                        {"train", corpus::to_json(corpus::corpus_stats(split.train))},
                        {"valid", corpus::to_json(corpus::corpus_stats(split.valid))},
                        {"test", corpus::to_json(corpus::corpus_stats(split.test))},
                        {"vocab_size", vocab.size()}};
    write_text(dir / "stats.json", stats.dump(2) + "\n");
    write_run_config(c, dir);
    const auto& all = stats["all"];
    os << "wrote " << data.size() << " samples (" << split.train.size() << "/" << split.valid.size() << "/"
       << split.test.size() << ") to " << dir.string() << "\n"
       << "coref " << all["coref_rate"].get<double>() << " omission " << all["omission_rate"].get<double>()
       << " neither " << all["neither_rate"].get<double>() << " avg rewrite length "
       << all["avg_reference_length"].get<double>() << " vocab " << vocab.size() << "\n";
    return kOk;
  }
};

// ---- shared model flags ---------------------------------------------------

struct ModelFlags {
  std::string head, position_encoding;
  std::size_t d_model = 0, heads = 0, layers = 0, d_ff = 0, max_positions = 0, max_turns = 0, copy_heads = 0;
  double dropout = 0;
  bool scale_embeddings = false;
  CLI::Option *o_head, *o_d, *o_heads, *o_layers, *o_ff, *o_pos, *o_turns, *o_drop, *o_pe, *o_copy, *o_scale;

  void add(CLI::App* app) {
    o_head = app->add_option("--head", head, "gen, ptr-net, ptr-gen or ptr-lambda");
    o_d = app->add_option("--d-model", d_model);
    o_heads = app->add_option("--heads", heads);
    o_layers = app->add_option("--layers", layers);
    o_ff = app->add_option("--d-ff", d_ff);
    o_pos = app->add_option("--max-positions", max_positions);
    o_turns = app->add_option("--max-turns", max_turns);
    o_drop = app->add_option("--dropout", dropout);
    o_pe = app->add_option("--position-encoding", position_encoding, "learned or sinusoidal");
    o_scale = app->add_flag("--scale-embeddings", scale_embeddings, "Multiply word embeddings by sqrt(d_model)");
    o_copy = app->add_option("--copy-heads", copy_heads, "Cross-attention heads forming the copy distribution, 0 = all");
  }

  void apply(model::ModelConfig& m) const {
    if (o_head->count()) m.head = model::parse_head(head);
    if (o_pe->count()) m.position_encoding = model::parse_position_encoding(position_encoding);
    override_if(o_d, d_model, m.d_model);
    override_if(o_heads, heads, m.n_heads);
    override_if(o_layers, layers, m.n_layers);
    override_if(o_ff, d_ff, m.d_ff);
    override_if(o_pos, max_positions, m.max_positions);
    override_if(o_turns, max_turns, m.max_turns);
    override_if(o_drop, dropout, m.dropout_rate);
    override_if(o_copy, copy_heads, m.copy_heads);
    override_if(o_scale, scale_embeddings, m.scale_word_embeddings);
  }
};

std::string resolve_run_dir(const std::string& configured) {
  if (!configured.empty()) return configured;
  if (const char* env = std::getenv(kRunDirEnv); env && *env) return env;
  return {};
}

// ---- train ----------------------------------------------------------------

struct Train {
  Common common;
  ModelFlags model_flags;
  std::string data, run_dir;
  double lr = 0, clip = 0;
  std::size_t batch = 0, epochs = 0, patience = 0;
  std::uint64_t seed = 0;
  bool resume = false;
  CLI::Option *o_data, *o_run, *o_lr, *o_clip, *o_batch, *o_epochs, *o_patience, *o_seed;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("train", "Train a rewriter on a generated or prepared corpus");
    common.add(app);
    model_flags.add(app);
    o_data = app->add_option("--data", data, "Directory with train.jsonl, valid.jsonl and vocab.txt");
    o_run = app->add_option("--run-dir", run_dir, "Output directory (default: $URW_RUN_DIR)");
    o_lr = app->add_option("--lr", lr);
    o_clip = app->add_option("--clip", clip, "Global gradient norm bound, 0 disables");
    o_batch = app->add_option("--batch-size", batch);
    o_epochs = app->add_option("--epochs", epochs);
    o_patience = app->add_option("--patience", patience);
    o_seed = app->add_option("--seed", seed);
    app->add_flag("--resume", resume, "Continue from last.ckpt in the run directory");
  }

  int execute(std::ostream& os) {
    common.load();
    auto& c = common.cfg;
    model_flags.apply(c.model);
    override_if(o_data, data, c.paths.data);
    override_if(o_run, run_dir, c.paths.run_dir);
    override_if(o_lr, lr, c.train.learning_rate);
    override_if(o_clip, clip, c.train.grad_clip_norm);
    override_if(o_batch, batch, c.train.batch_size);
    override_if(o_epochs, epochs, c.train.max_epochs);
    override_if(o_patience, patience, c.train.early_stop_patience);
    override_if(o_seed, seed, c.train.seed);
    c.paths.run_dir = resolve_run_dir(c.paths.run_dir);
    if (c.paths.data.empty()) throw ConfigError("train needs --data or paths.data");
    if (c.paths.run_dir.empty()) throw ConfigError("train needs --run-dir, paths.run_dir or $URW_RUN_DIR");
    training::validate(c.train);

    const fs::path data_dir = c.paths.data, dir = c.paths.run_dir;
    const auto vocab = corpus::Vocabulary::load(c.paths.vocab.empty() ? data_dir / "vocab.txt" : fs::path(c.paths.vocab));
    const auto train_set = corpus::load_jsonl(data_dir / "train.jsonl");
    const auto valid_set = corpus::load_jsonl(data_dir / "valid.jsonl");
    c.model.vocab_size = vocab.size();
    model::validate(c.model);

    fs::create_directories(dir);
    write_run_config(c, dir);
    vocab.save(dir / "vocab.txt");

    training::TrainOptions opt;
    opt.run_dir = dir;
    opt.on_epoch = [&os](const training::EpochRecord& r) { os << training::format_log_line(r) << std::endl; };
    std::optional<model::LoadedCheckpoint> loaded;
    if (resume) {
      loaded.emplace(model::load_checkpoint(dir / "last.ckpt", vocab.hash(), c.model));
      opt.resume = &loaded->info;
      os << "resuming after epoch " << loaded->info.epoch << " (step " << loaded->info.step << ")\n";
    }
    model::RewriterModel fresh = loaded ? std::move(loaded->model) : model::RewriterModel(c.model, c.train.seed);
    os << training::kLogHeader << "\n";
    const auto result = training::train(fresh, vocab, train_set, valid_set, c.train, opt);
    os << "best epoch " << result.best_epoch << " valid loss " << result.best_valid_loss << " steps "
       << result.steps << (result.early_stopped ? " (early stop)" : "") << "\n";
    return kOk;
  }
};

// ---- checkpoint-consuming commands ----------------------------------------

struct ModelSource {
  std::string checkpoint, run_dir, vocab;
  CLI::Option *o_ckpt, *o_run, *o_vocab;

  void add(CLI::App* app) {
    o_ckpt = app->add_option("--checkpoint", checkpoint, "Checkpoint file");
    o_run = app->add_option("--run-dir", run_dir, "Run directory; uses its best.ckpt");
    o_vocab = app->add_option("--vocab", vocab, "Vocabulary file (default: next to the checkpoint)");
  }

  void apply(RunConfig& c) const {
    override_if(o_ckpt, checkpoint, c.paths.checkpoint);
    override_if(o_run, run_dir, c.paths.run_dir);
    override_if(o_vocab, vocab, c.paths.vocab);
    c.paths.run_dir = resolve_run_dir(c.paths.run_dir);
  }

  static fs::path checkpoint_path(const RunConfig& c) {
    if (!c.paths.checkpoint.empty()) return c.paths.checkpoint;
    if (!c.paths.run_dir.empty()) return fs::path(c.paths.run_dir) / "best.ckpt";
    throw ConfigError("no checkpoint: pass --checkpoint or --run-dir");
  }

  static fs::path vocab_path(const RunConfig& c) {
    if (!c.paths.vocab.empty()) return c.paths.vocab;
    return checkpoint_path(c).parent_path() / "vocab.txt";
  }

  struct Loaded {
    corpus::Vocabulary vocab;
    model::LoadedCheckpoint ckpt;
  };
  static Loaded load(const RunConfig& c) {
    const auto ckpt_path = checkpoint_path(c);
    if (!fs::exists(ckpt_path)) throw IoError("checkpoint not found: " + ckpt_path.string());
    auto vocab = corpus::Vocabulary::load(vocab_path(c));
    auto ckpt = model::load_checkpoint(ckpt_path, vocab.hash());
    return {std::move(vocab), std::move(ckpt)};
  }
};

struct Eval {
  Common common;
  ModelSource source;
  std::string data, test, out;
  std::size_t beam = 0;
  bool oracle = false;
  CLI::Option *o_data, *o_test, *o_out, *o_beam;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("eval", "Decode a test set and report BLEU, ROUGE, EM and edit scores");
    common.add(app);
    source.add(app);
    o_data = app->add_option("--data", data, "Directory holding test.jsonl");
    o_test = app->add_option("--test", test, "Test file (overrides --data)");
    o_out = app->add_option("--out", out, "Report directory (default: the checkpoint's directory)");
    o_beam = app->add_option("--beam", beam);
    app->add_flag("--oracle", oracle, "Score the references against themselves");
  }

  int execute(std::ostream& os) {
    common.load();
    auto& c = common.cfg;
    source.apply(c);
    override_if(o_data, data, c.paths.data);
    override_if(o_test, test, c.paths.input);
    override_if(o_out, out, c.paths.output);
    override_if(o_beam, beam, c.beam_size);
    if (c.beam_size == 0) throw ConfigError("beam size must be at least 1");
    fs::path test_file = c.paths.input;
    if (test_file.empty()) {
      if (c.paths.data.empty()) throw ConfigError("eval needs --test or --data");
      test_file = fs::path(c.paths.data) / "test.jsonl";
    }
    const auto samples = corpus::load_jsonl(test_file);
    if (samples.empty()) throw DataError(test_file.string() + " holds no samples");

    std::vector<corpus::Tokens> outputs;
    fs::path out_dir = c.paths.output;
    if (oracle) {
      for (const auto& s : samples) outputs.push_back(s.reference);
      if (out_dir.empty()) out_dir = test_file.parent_path();
    } else {
      const auto loaded = ModelSource::load(c);
      for (const auto& s : samples) {
        outputs.push_back(decoding::rewrite(loaded.ckpt.model, loaded.vocab, s.history, s.utterance, c.beam_size).tokens);
      }
      if (out_dir.empty()) out_dir = ModelSource::checkpoint_path(c).parent_path();
    }
    const auto report = metrics::evaluate(samples, outputs);
    const auto table = metrics::format_table(report);
    write_text(out_dir / "report.json", metrics::to_json(report).dump(2) + "\n");
    write_text(out_dir / "report.txt", table);
    std::ostringstream lines;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      lines << json{{"output", outputs[i]}, {"reference", samples[i].reference}}.dump() << '\n';
    }
    write_text(out_dir / "outputs.jsonl", lines.str());
    os << table;
    return kOk;
  }
};

// One line of rewrite input: a JSON object with "history" and "utterance"
// (token arrays or raw strings), or tab-separated turns ending with U_n.
struct RewriteInput {
  std::vector<corpus::Tokens> history;
  corpus::Tokens utterance;
};

corpus::Tokens tokens_field(const json& j, const std::string& field, std::size_t line) {
  if (j.is_string()) return corpus::tokenize(j.get<std::string>());
  if (j.is_array()) {
    corpus::Tokens t;
    for (const auto& x : j) {
      if (!x.is_string()) throw SchemaError(field, "line " + std::to_string(line) + ": expected strings");
      t.push_back(x.get<std::string>());
    }
    return t;
  }
  throw SchemaError(field, "line " + std::to_string(line) + ": expected a string or an array of tokens");
}

std::vector<RewriteInput> read_rewrite_input(std::istream& in, const std::string& name) {
  std::vector<RewriteInput> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (text.find_first_not_of(" \t") == std::string::npos) continue;
    RewriteInput r;
    if (text.front() == '{') {
      json j;
      try {
        j = json::parse(text);
      } catch (const json::parse_error& e) {
        throw DataError(name + ": line " + std::to_string(line) + ": malformed JSON (" + e.what() + ")");
      }
      if (!j.contains("utterance")) throw SchemaError("utterance", "line " + std::to_string(line) + ": missing");
      r.utterance = tokens_field(j.at("utterance"), "utterance", line);
      if (j.contains("history")) {
        if (!j.at("history").is_array()) throw SchemaError("history", "line " + std::to_string(line) + ": expected an array");
        for (const auto& t : j.at("history")) r.history.push_back(tokens_field(t, "history", line));
      }
    } else {
      std::vector<std::string> fields;
      std::stringstream ss(text);
      for (std::string f; std::getline(ss, f, '\t');) fields.push_back(f);
      r.utterance = corpus::tokenize(fields.back());
      fields.pop_back();
      for (const auto& f : fields) r.history.push_back(corpus::tokenize(f));
    }
    if (r.utterance.empty()) throw DataError(name + ": line " + std::to_string(line) + ": empty utterance");
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<RewriteInput> read_rewrite_file(const std::string& path) {
  if (path.empty()) throw ConfigError("no input: pass --input (use - for stdin)");
  if (path == "-") return read_rewrite_input(std::cin, "stdin");
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return read_rewrite_input(in, path);
}

struct Rewrite {
  Common common;
  ModelSource source;
  std::string input, output, trace;
  std::size_t beam = 0;
  CLI::Option *o_in, *o_out, *o_beam;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("rewrite", "Rewrite utterances from a JSONL or tab-separated file");
    common.add(app);
    source.add(app);
    o_in = app->add_option("--input", input, "Input file, - for stdin");
    o_out = app->add_option("--output", output, "Output file (default: stdout)");
    app->add_option("--trace", trace, "Directory for per-sample trace CSV files");
    o_beam = app->add_option("--beam", beam);
  }

  int execute(std::ostream& os) {
    common.load();
    auto& c = common.cfg;
    source.apply(c);
    override_if(o_in, input, c.paths.input);
    override_if(o_out, output, c.paths.output);
    override_if(o_beam, beam, c.beam_size);
    if (c.beam_size == 0) throw ConfigError("beam size must be at least 1");
    const auto inputs = read_rewrite_file(c.paths.input);
    const auto loaded = ModelSource::load(c);
    std::ostringstream text;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const auto r = decoding::rewrite(loaded.ckpt.model, loaded.vocab, inputs[i].history, inputs[i].utterance,
                                       c.beam_size);
      text << corpus::detokenize(r.tokens) << '\n';
      if (!trace.empty()) {
        write_text(fs::path(trace) / ("trace_" + std::to_string(i) + ".csv"), decoding::trace_csv(r.input, r.best));
      }
    }
    if (c.paths.output.empty()) os << text.str();
    else write_text(c.paths.output, text.str());
    return kOk;
  }
};

struct AttnDump {
  Common common;
  ModelSource source;
  std::string input, out = ".";
  std::size_t index = 0, beam = 0;
  CLI::Option *o_in, *o_beam;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("attn-dump", "Dump the copy attention and gate of one rewrite");
    common.add(app);
    source.add(app);
    o_in = app->add_option("--input", input, "Input file, - for stdin");
    app->add_option("--index", index, "Sample to dump (0-based)");
    app->add_option("--out", out, "Directory for attn.csv and heatmap.txt");
    o_beam = app->add_option("--beam", beam);
  }

  int execute(std::ostream& os) {
    common.load();
    auto& c = common.cfg;
    source.apply(c);
    override_if(o_in, input, c.paths.input);
    override_if(o_beam, beam, c.beam_size);
    if (c.beam_size == 0) throw ConfigError("beam size must be at least 1");
    const auto inputs = read_rewrite_file(c.paths.input);
    if (index >= inputs.size()) {
      throw DataError("--index " + std::to_string(index) + " but the input holds " + std::to_string(inputs.size()) +
                      " samples");
    }
    const auto loaded = ModelSource::load(c);
    const auto r = decoding::rewrite(loaded.ckpt.model, loaded.vocab, inputs[index].history, inputs[index].utterance,
                                     c.beam_size);
    const auto heat = decoding::render_heatmap(r.input, r.best, loaded.vocab);
    write_text(fs::path(out) / "attn.csv", decoding::trace_csv(r.input, r.best));
    write_text(fs::path(out) / "heatmap.txt", heat);
    os << heat << "rewrite: " << corpus::detokenize(r.tokens) << '\n';
    return kOk;
  }
};

}  // namespace

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kConfigFailure;
  if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const IoError*>(&e)) return kDataFailure;
  if (dynamic_cast<const NumericError*>(&e)) return kNumericFailure;
  if (dynamic_cast<const std::filesystem::filesystem_error*>(&e)) return kDataFailure;
  return kFailure;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Incomplete-utterance rewriting with pointer transformers", "urw"};
  app.require_subcommand(1);
  GenData gen;
  Train train;
  Eval eval;
  Rewrite rewrite;
  AttnDump dump;
  gen.add(app);
  train.add(app);
  eval.add(app);
  rewrite.add(app);
  dump.add(app);
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "urw: " << e.what() << "\n";
    return kConfigFailure;
  }
  try {
    const auto* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    if (name == "gen-data") return gen.execute(out);
    if (name == "train") return train.execute(out);
    if (name == "eval") return eval.execute(out);
    if (name == "rewrite") return rewrite.execute(out);
    return dump.execute(out);
  } catch (const std::exception& e) {
    err << "urw: " << e.what() << "\n";
    return exit_code_for(e);
  }
}

}  // namespace urw::cli
