#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "commands.hpp"
#include "urw/corpus/dialogue.hpp"
#include "urw/corpus/vocabulary.hpp"
#include "urw/model/checkpoint.hpp"
#include "urw/training/trainer.hpp"

using namespace urw;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run urw_run(std::initializer_list<std::string> args) {
  std::vector<std::string> owned{"urw"};
  owned.insert(owned.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : owned) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE_MESSAGE(in, "missing " << p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("urw_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string l; std::getline(ss, l);) out.push_back(l);
  return out;
}

// Shared across cases: one small corpus and one short training run.
struct Fixture {
  fs::path root, data, run;
  Run train;

  Fixture() : root(temp_dir("fixture")), data(root / "data"), run(root / "run") {
    const auto g = urw_run({"gen-data", "--out", data.string(), "--num-samples", "200", "--seed", "3"});
    REQUIRE_MESSAGE(g.code == 0, g.err);
    train = urw_run({"train", "--data", data.string(), "--run-dir", run.string(), "--head", "ptr-lambda",
                     "--d-model", "32", "--heads", "2", "--layers", "2", "--d-ff", "64", "--dropout", "0",
                     "--lr", "1e-3", "--batch-size", "16", "--epochs", "3", "--seed", "5"});
    REQUIRE_MESSAGE(train.code == 0, train.err);
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

}  // namespace

TEST_CASE("gen-data writes the splits, vocabulary and stats deterministically") {
  const auto dir = temp_dir("gen");
  const auto a = urw_run({"gen-data", "--out", (dir / "a").string(), "--num-samples", "300", "--seed", "11"});
  const auto b = urw_run({"gen-data", "--out", (dir / "b").string(), "--num-samples", "300", "--seed", "11"});
  REQUIRE_MESSAGE(a.code == 0, a.err);
  REQUIRE(b.code == 0);
  for (const char* f : {"train.jsonl", "valid.jsonl", "test.jsonl", "vocab.txt", "stats.json"}) {
    CHECK_MESSAGE(slurp(dir / "a" / f) == slurp(dir / "b" / f), f);
  }
  const auto n = corpus::load_jsonl(dir / "a" / "train.jsonl").size() +
                 corpus::load_jsonl(dir / "a" / "valid.jsonl").size() +
                 corpus::load_jsonl(dir / "a" / "test.jsonl").size();
  CHECK(n == 300);
  const auto stats = json::parse(slurp(dir / "a" / "stats.json"));
  CHECK(stats["all"]["samples"] == 300);
  CHECK(stats["vocab_size"].get<std::size_t>() ==
        corpus::Vocabulary::load(dir / "a" / "vocab.txt").size());
  const auto cfg = json::parse(slurp(dir / "a" / "config.json"));
  CHECK(cfg["synthetic"]["seed"] == 11);
  CHECK(cfg["synthetic"]["num_samples"] == 300);

  const auto c = urw_run({"gen-data", "--out", (dir / "c").string(), "--num-samples", "300", "--seed", "12"});
  REQUIRE(c.code == 0);
  CHECK(slurp(dir / "a" / "train.jsonl") != slurp(dir / "c" / "train.jsonl"));
}

TEST_CASE("train writes the run directory and lowers the validation loss") {
  const auto& f = fixture();
  for (const char* name : {"train.log", "last.ckpt", "best.ckpt", "best", "config.json", "vocab.txt"}) {
    CHECK_MESSAGE(fs::exists(f.run / name), name);
  }
  const auto log = lines_of(slurp(f.run / "train.log"));
  REQUIRE(log.size() == 4);
  CHECK(log[0] == training::kLogHeader);
  const auto valid_loss = [&](std::size_t row) {
    std::stringstream ss(log[row]);
    std::string field;
    for (int i = 0; i < 3; ++i) std::getline(ss, field, ',');
    return std::stod(field);
  };
  CHECK(valid_loss(3) < valid_loss(1));
  const auto cfg = json::parse(slurp(f.run / "config.json"));
  CHECK(cfg["model"]["d_model"] == 32);
  CHECK(cfg["model"]["head"] == "ptr-lambda");
  CHECK(cfg["train"]["batch_size"] == 16);
  CHECK(slurp(f.run / "vocab.txt") == slurp(f.data / "vocab.txt"));
}

TEST_CASE("train --resume continues from last.ckpt") {
  const auto& f = fixture();
  const auto run = temp_dir("resume") / "run";
  fs::copy(f.run, run, fs::copy_options::recursive);
  const auto r = urw_run({"train", "--config", (run / "config.json").string(), "--data", f.data.string(),
                          "--run-dir", run.string(), "--epochs", "4", "--resume"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(r.out.find("resuming after epoch 3") != std::string::npos);
  const auto log = lines_of(slurp(run / "train.log"));
  REQUIRE(log.size() == 5);
  CHECK(log[4].rfind("4,", 0) == 0);
  const auto vocab = corpus::Vocabulary::load(run / "vocab.txt");
  CHECK(model::load_checkpoint(run / "last.ckpt", vocab.hash()).info.epoch == 4);
}

TEST_CASE("train rejects a resume that changes the architecture") {
  const auto& f = fixture();
  const auto run = temp_dir("resume_bad") / "run";
  fs::copy(f.run, run, fs::copy_options::recursive);
  const auto r = urw_run({"train", "--config", (run / "config.json").string(), "--data", f.data.string(),
                          "--run-dir", run.string(), "--d-model", "16", "--epochs", "4", "--resume"});
  CHECK(r.code == cli::kConfigFailure);
}

TEST_CASE("URW_RUN_DIR supplies the run directory and ptr-net has no gate") {
  const auto& f = fixture();
  const auto run = temp_dir("env") / "run";
  ::setenv("URW_RUN_DIR", run.string().c_str(), 1);
  const auto r = urw_run({"train", "--data", f.data.string(), "--head", "ptr-net", "--d-model", "16", "--heads",
                          "2", "--layers", "1", "--d-ff", "32", "--epochs", "1", "--batch-size", "32"});
  ::unsetenv("URW_RUN_DIR");
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto vocab = corpus::Vocabulary::load(run / "vocab.txt");
  const auto loaded = model::load_checkpoint(run / "best.ckpt", vocab.hash());
  CHECK(loaded.model.config().head == model::OutputHead::kPtrNet);
  for (const auto& p : loaded.model.parameters()) {
    CHECK_MESSAGE(p.name.rfind("gate", 0) != 0, p.name);
    CHECK_MESSAGE(p.name.rfind("output", 0) != 0, p.name);
    CHECK_MESSAGE(p.name.rfind("p_gen", 0) != 0, p.name);
  }
}

TEST_CASE("eval --oracle scores 1 and reports are byte-identical across runs") {
  const auto& f = fixture();
  const auto dir = temp_dir("eval");
  const auto o = urw_run({"eval", "--data", f.data.string(), "--oracle", "--out", (dir / "oracle").string()});
  REQUIRE_MESSAGE(o.code == 0, o.err);
  const auto rep = json::parse(slurp(dir / "oracle" / "report.json"));
  for (const char* k : {"bleu1", "bleu2", "bleu4", "rouge1_f", "rouge2_f", "rougeL_f", "em_positive", "em_negative"}) {
    REQUIRE_MESSAGE(rep.contains(k), k);
    CHECK_MESSAGE(rep[k].get<double>() == doctest::Approx(1.0).epsilon(1e-12), k);
  }

  const auto a = urw_run({"eval", "--run-dir", f.run.string(), "--data", f.data.string(), "--beam", "2", "--out",
                          (dir / "a").string()});
  const auto b = urw_run({"eval", "--run-dir", f.run.string(), "--data", f.data.string(), "--beam", "2", "--out",
                          (dir / "b").string()});
  REQUIRE_MESSAGE(a.code == 0, a.err);
  REQUIRE(b.code == 0);
  for (const char* file : {"report.json", "report.txt", "outputs.jsonl"}) {
    CHECK_MESSAGE(slurp(dir / "a" / file) == slurp(dir / "b" / file), file);
  }
  CHECK(lines_of(slurp(dir / "a" / "outputs.jsonl")).size() ==
        corpus::load_jsonl(f.data / "test.jsonl").size());
  CHECK(a.out == slurp(dir / "a" / "report.txt"));
}

TEST_CASE("rewrite emits one line per input and trace files with a gate column") {
  const auto& f = fixture();
  const auto dir = temp_dir("rewrite");
  {
    std::ofstream in(dir / "in.txt");
    in << "{\"history\": [\"你认识梅西吗\", \"认识\"], \"utterance\": \"他在哪里踢球\"}\n";
    in << "你好\t我也想吃\n";
    in << "\n";
    in << "{\"history\": [[\"你\", \"好\"]], \"utterance\": [\"早\"]}\n";
  }
  const auto r = urw_run({"rewrite", "--run-dir", f.run.string(), "--input", (dir / "in.txt").string(), "--output",
                          (dir / "out.txt").string(), "--trace", (dir / "trace").string(), "--beam", "2"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(lines_of(slurp(dir / "out.txt")).size() == 3);
  for (int i = 0; i < 3; ++i) {
    const auto csv = lines_of(slurp(dir / "trace" / ("trace_" + std::to_string(i) + ".csv")));
    REQUIRE(!csv.empty());
    CHECK(csv[0].substr(csv[0].rfind(',') + 1) == "lambda");
    const auto cols = std::count(csv[0].begin(), csv[0].end(), ',');
    for (const auto& row : csv) CHECK(std::count(row.begin(), row.end(), ',') == cols);
  }
  // The first input unfolds to 6 + 1 + 2 + 1 + 6 + 1 positions, plus the gate column.
  const auto header = lines_of(slurp(dir / "trace" / "trace_0.csv"))[0];
  CHECK(std::count(header.begin(), header.end(), ',') == 17);
}

TEST_CASE("attn-dump writes a CSV matrix and a heatmap") {
  const auto& f = fixture();
  const auto dir = temp_dir("dump");
  {
    std::ofstream in(dir / "in.txt");
    in << "早\n你认识梅西吗\t他是谁\n";
  }
  const auto r = urw_run({"attn-dump", "--run-dir", f.run.string(), "--input", (dir / "in.txt").string(), "--index",
                          "1", "--out", (dir / "out").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto heat = slurp(dir / "out" / "heatmap.txt");
  CHECK(heat.rfind("input: 0:你 1:认 2:识 3:梅 4:西 5:吗 6:<eot> 7:他 8:是 9:谁 10:<eos>", 0) == 0);
  CHECK(r.out.find(heat) == 0);
  CHECK(r.out.find("rewrite: ") != std::string::npos);
  const auto csv = lines_of(slurp(dir / "out" / "attn.csv"));
  REQUIRE(csv.size() >= 2);
  CHECK(csv[0] == "你,认,识,梅,西,吗,<eot>,他,是,谁,<eos>,lambda");

  const auto bad = urw_run({"attn-dump", "--run-dir", f.run.string(), "--input", (dir / "in.txt").string(),
                            "--index", "2"});
  CHECK(bad.code == cli::kDataFailure);
  CHECK(bad.err.find("--index 2") != std::string::npos);
}

TEST_CASE("exit codes separate configuration, data and usage errors") {
  const auto dir = temp_dir("codes");
  CHECK(urw_run({}).code == cli::kConfigFailure);
  CHECK(urw_run({"frobnicate"}).code == cli::kConfigFailure);
  CHECK(urw_run({"train", "--bogus"}).code == cli::kConfigFailure);
  CHECK(urw_run({"gen-data"}).code == cli::kConfigFailure);
  CHECK(urw_run({"train", "--data", dir.string()}).code == cli::kConfigFailure);
  CHECK(urw_run({"gen-data", "--out", (dir / "g").string(), "--coref-rate", "1.5"}).code == cli::kConfigFailure);
  CHECK(urw_run({"train", "--data", fixture().data.string(), "--run-dir", (dir / "r").string(), "--head", "gpt"})
            .code == cli::kConfigFailure);
  {
    std::ofstream cfg(dir / "bad.json");
    cfg << "{\"modle\": {}}";
  }
  CHECK(urw_run({"gen-data", "--config", (dir / "bad.json").string(), "--out", (dir / "g").string()}).code ==
        cli::kConfigFailure);

  const auto missing =
      urw_run({"eval", "--checkpoint", (dir / "none.ckpt").string(), "--data", fixture().data.string()});
  CHECK(missing.code == cli::kDataFailure);
  CHECK(missing.err.find("none.ckpt") != std::string::npos);
  {
    std::ofstream bad(dir / "test.jsonl");
    bad << "{\"history\": [], \"utterance\": [\"a\"], \"reference\": [\"a\"]}\nnot json\n";
  }
  const auto malformed = urw_run({"eval", "--data", dir.string(), "--oracle"});
  CHECK(malformed.code == cli::kDataFailure);
  CHECK(malformed.err.find("line 2") != std::string::npos);

  CHECK(urw_run({"--help"}).code == cli::kOk);
}

TEST_CASE("the installed binary reports exit codes to the shell") {
  const std::string exe = URW_EXE;
  const auto status = [](const std::string& cmd) {
    const int s = std::system((cmd + " > /dev/null 2>&1").c_str());
    return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
  };
  CHECK(status(exe + " --help") == 0);
  CHECK(status(exe + " train --bogus") == 2);
  CHECK(status(exe + " eval --checkpoint /nonexistent/x.ckpt --data /nonexistent") == 3);
}
