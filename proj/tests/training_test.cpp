#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "support.hpp"
#include "urw/corpus/synthetic.hpp"
#include "urw/decoding/beam_search.hpp"
#include "urw/error.hpp"
#include "urw/training/adam.hpp"
#include "urw/training/trainer.hpp"

using namespace urw;
using namespace urw::training;
using urw::testing::make_sample;
using urw::testing::tiny_config;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("urw_training_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<model::NamedParameter> scalar_param(double value) {
  return {{"x", num::Tensor::from_data({1}, {value}, true)}};
}

struct SmallCorpus {
  std::vector<corpus::DialogueSample> train, valid;
  corpus::Vocabulary vocab;
};

SmallCorpus small_corpus(std::size_t n = 60) {
  corpus::SyntheticSpec spec;
  spec.num_samples = n;
  spec.seed = 5;
  spec.vocab_budget = 20;
  auto data = corpus::generate_synthetic(spec);
  SmallCorpus c;
  c.train.assign(data.begin(), data.begin() + static_cast<std::ptrdiff_t>(n * 2 / 3));
  c.valid.assign(data.begin() + static_cast<std::ptrdiff_t>(n * 2 / 3), data.end());
  c.vocab = corpus::build_vocab(c.train);
  return c;
}

model::ModelConfig small_model(const corpus::Vocabulary& v, model::OutputHead head = model::OutputHead::kPtrLambda) {
  auto cfg = tiny_config(head, v.size(), 16, 1, 2);
  cfg.max_positions = 64;
  cfg.max_turns = 8;
  return cfg;
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

// Drops the wall-clock column.
std::string loss_columns(const std::string& line) { return line.substr(0, line.rfind(',')); }

}  // namespace

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  auto params = scalar_param(0.7);
  AdamState st(params);
  params[0].value.zero_grad();
  adam_step(params, st, 0.1);
  CHECK(params[0].value.item() == 0.7);
  CHECK(st.step == 1);
}

TEST_CASE("adam: first step with unit gradient moves by the learning rate") {
  auto params = scalar_param(0.0);
  AdamState st(params);
  params[0].value.zero_grad();
  params[0].value.grad_mut()[0] = 1.0;
  adam_step(params, st, 0.1);
  CHECK(params[0].value.item() == doctest::Approx(-0.1).epsilon(1e-6));
}

TEST_CASE("adam minimises x^2") {
  auto params = scalar_param(1.0);
  AdamState st(params);
  for (int i = 0; i < 100; ++i) {
    params[0].value.zero_grad();
    params[0].value.grad_mut()[0] = 2.0 * params[0].value.item();
    adam_step(params, st, 0.1);
  }
  CHECK(std::abs(params[0].value.item()) < 0.1);
}

TEST_CASE("adam rejects non-finite gradients by name") {
  auto params = scalar_param(1.0);
  AdamState st(params);
  params[0].value.zero_grad();
  params[0].value.grad_mut()[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    adam_step(params, st, 0.1);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("parameter x") != std::string::npos);
  }
}

TEST_CASE("adam state round-trips through blobs") {
  auto params = scalar_param(1.0);
  AdamState st(params);
  params[0].value.zero_grad();
  params[0].value.grad_mut()[0] = 0.5;
  adam_step(params, st, 0.1);
  AdamState back(params);
  CHECK(back.from_blobs(st.to_blobs(params), params));
  CHECK(back.step == st.step);
  CHECK(back.m == st.m);
  CHECK(back.v == st.v);
  AdamState empty(params);
  CHECK_FALSE(empty.from_blobs({}, params));
}

TEST_CASE("global norm clipping") {
  std::vector<model::NamedParameter> ps = {{"a", num::Tensor::from_data({2}, {0, 0}, true)},
                                           {"b", num::Tensor::from_data({1}, {0}, true)}};
  for (auto& p : ps) p.value.zero_grad();
  ps[0].value.grad_mut()[0] = 3.0;
  ps[0].value.grad_mut()[1] = 0.0;
  ps[1].value.grad_mut()[0] = 4.0;
  CHECK(clip_grad_norm(ps, 1.0) == doctest::Approx(5.0));
  CHECK(ps[0].value.grad()[0] == doctest::Approx(0.6));
  CHECK(ps[1].value.grad()[0] == doctest::Approx(0.8));
  CHECK(clip_grad_norm(ps, 10.0) == doctest::Approx(1.0));
  CHECK(ps[1].value.grad()[0] == doctest::Approx(0.8));
}

TEST_CASE("batched loss and gradients equal the token-weighted unbatched ones") {
  const auto c = small_corpus(12);
  for (auto head : {model::OutputHead::kPtrLambda, model::OutputHead::kGen, model::OutputHead::kPtrGen}) {
    const auto cfg = small_model(c.vocab, head);
    model::RewriterModel m(cfg, 3);
    urw::testing::randomize(m, 3, 0.2);
    std::vector<model::TrainingExample> ex;
    for (std::size_t i = 0; i < 6; ++i) ex.push_back(model::make_example(c.vocab, c.train[i], cfg, i));

    std::vector<const model::TrainingExample*> all;
    for (const auto& e : ex) all.push_back(&e);
    const auto batch = model::make_batch(all, c.vocab.size());
    num::Tape tape;
    m.zero_grad();
    auto loss = m.nll_loss(tape, batch);
    num::backward(loss, tape);
    std::vector<std::vector<double>> batched;
    for (const auto& p : m.parameters()) batched.emplace_back(p.value.grad().begin(), p.value.grad().end());

    double weighted = 0.0;
    std::size_t tokens = 0;
    std::vector<std::vector<double>> summed(batched.size());
    for (std::size_t i = 0; i < batched.size(); ++i) summed[i].assign(batched[i].size(), 0.0);
    for (const auto& e : ex) {
      const model::TrainingExample* one[] = {&e};
      const auto b = model::make_batch(one, c.vocab.size());
      num::Tape t;
      m.zero_grad();
      auto l = m.nll_loss(t, b);
      num::backward(l, t);
      const double n = static_cast<double>(b.target_tokens());
      weighted += l.item() * n;
      tokens += b.target_tokens();
      const auto params = m.parameters();
      for (std::size_t i = 0; i < params.size(); ++i) {
        for (std::size_t k = 0; k < summed[i].size(); ++k) summed[i][k] += params[i].value.grad()[k] * n;
      }
    }
    CHECK(std::abs(loss.item() - weighted / static_cast<double>(tokens)) <= 1e-9);
    double worst = 0;
    for (std::size_t i = 0; i < summed.size(); ++i) {
      for (std::size_t k = 0; k < summed[i].size(); ++k) {
        worst = std::max(worst, std::abs(batched[i][k] - summed[i][k] / static_cast<double>(tokens)));
      }
    }
    CHECK(worst <= 1e-9);
  }
}

TEST_CASE("a single positive sample can be overfit") {
  auto s = make_sample({{"梅", "西", "有", "多", "高"}, {"他", "一", "米", "七"}}, {"他", "和", "C", "罗", "谁", "好"},
                       {"梅", "西", "和", "C", "罗", "谁", "好"});
  const std::vector<corpus::DialogueSample> one = {s};
  const auto vocab = corpus::build_vocab(one, 1);
  auto cfg = small_model(vocab);
  model::RewriterModel m(cfg, 1);
  TrainConfig tc;
  tc.learning_rate = 1e-2;
  tc.batch_size = 1;
  tc.max_epochs = 50;
  tc.early_stop_patience = 50;
  const auto r = train(m, vocab, one, one, tc);
  CHECK(r.steps == 50);
  CHECK(r.best_valid_loss < 0.05);
  const auto input = model::encode_input(vocab, s.history, s.utterance, cfg);
  const auto hyp = decoding::greedy(m, input);
  std::vector<std::size_t> expected;
  for (const auto& t : s.reference) expected.push_back(input.ext_id(vocab, t));
  expected.push_back(corpus::kEos);
  CHECK(hyp.tokens == expected);
}

TEST_CASE("a zero learning rate leaves the model and the loss untouched") {
  const auto c = small_corpus();
  const auto cfg = small_model(c.vocab);
  model::RewriterModel m(cfg, 2);
  const double before_valid = evaluate_loss(m, c.vocab, c.valid);
  const double before_train = evaluate_loss(m, c.vocab, c.train, 1000);
  const auto w = std::vector<double>(m.parameter("embed.word").data().begin(), m.parameter("embed.word").data().end());
  TrainConfig tc;
  tc.learning_rate = 0.0;
  tc.batch_size = 1000;
  tc.max_epochs = 4;
  tc.early_stop_patience = 2;
  const auto r = train(m, c.vocab, c.train, c.valid, tc);
  CHECK(r.epochs[0].valid_loss == doctest::Approx(before_valid).epsilon(1e-12));
  CHECK(r.epochs[0].train_loss == doctest::Approx(before_train).epsilon(1e-12));
  CHECK(std::equal(w.begin(), w.end(), m.parameter("embed.word").data().begin()));
  // Flat validation loss: epoch 1 is best, then patience runs out.
  CHECK(r.early_stopped);
  CHECK(r.epochs.size() == 3);
  CHECK(r.best_epoch == 1);
}

TEST_CASE("training writes the run directory and keeps the best checkpoint") {
  const auto c = small_corpus();
  const auto cfg = small_model(c.vocab);
  const auto dir = temp_dir("run");
  model::RewriterModel m(cfg, 4);
  TrainConfig tc;
  tc.learning_rate = 3e-3;
  tc.batch_size = 8;
  tc.max_epochs = 4;
  TrainOptions opt;
  opt.run_dir = dir;
  std::vector<EpochRecord> seen;
  opt.on_epoch = [&](const EpochRecord& r) { seen.push_back(r); };
  const auto r = train(m, c.vocab, c.train, c.valid, tc, opt);
  CHECK(seen.size() == r.epochs.size());

  const auto log = read_lines(dir / "train.log");
  REQUIRE(log.size() == r.epochs.size() + 1);
  CHECK(log[0] == kLogHeader);
  CHECK(log[1] == format_log_line(r.epochs[0]));
  for (const auto& e : r.epochs) CHECK(r.best_valid_loss <= e.valid_loss);

  CHECK(fs::exists(dir / "last.ckpt"));
  const auto best = model::load_checkpoint(dir / "best.ckpt", c.vocab.hash(), cfg);
  CHECK(best.info.epoch == r.best_epoch);
  CHECK(best.info.valid_loss == r.best_valid_loss);
  const auto marker = read_lines(dir / "best");
  REQUIRE(marker.size() == 2);
  CHECK(marker[0] == "best.ckpt");
  CHECK(marker[1] == "epoch " + std::to_string(r.best_epoch));
  // The model returned holds the best parameters.
  CHECK(evaluate_loss(m, c.vocab, c.valid) == doctest::Approx(r.best_valid_loss).epsilon(1e-12));
}

TEST_CASE("fixed seed gives identical logs and resume continues the same trajectory") {
  const auto c = small_corpus();
  auto cfg = small_model(c.vocab);
  cfg.dropout_rate = 0.1;
  TrainConfig tc;
  tc.learning_rate = 3e-3;
  tc.batch_size = 8;
  tc.max_epochs = 4;
  tc.early_stop_patience = 10;

  auto run = [&](const fs::path& dir, std::size_t epochs, const model::CheckpointInfo* resume,
                 model::RewriterModel& m) {
    auto t = tc;
    t.max_epochs = epochs;
    TrainOptions opt;
    opt.run_dir = dir;
    opt.resume = resume;
    return train(m, c.vocab, c.train, c.valid, t, opt);
  };

  const auto a = temp_dir("det_a"), b = temp_dir("det_b"), r = temp_dir("det_resume");
  model::RewriterModel ma(cfg, 9), mb(cfg, 9), mr(cfg, 9);
  run(a, 4, nullptr, ma);
  run(b, 4, nullptr, mb);
  const auto la = read_lines(a / "train.log"), lb = read_lines(b / "train.log");
  REQUIRE(la.size() == lb.size());
  for (std::size_t i = 1; i < la.size(); ++i) CHECK(loss_columns(la[i]) == loss_columns(lb[i]));

  run(r, 2, nullptr, mr);
  auto last = model::load_checkpoint(r / "last.ckpt", c.vocab.hash(), cfg);
  CHECK(last.info.epoch == 2);
  const auto res = run(r, 4, &last.info, last.model);
  CHECK(res.epochs.size() == 2);
  CHECK(res.epochs.front().epoch == 3);
  const auto lr_lines = read_lines(r / "train.log");
  REQUIRE(lr_lines.size() == la.size());
  for (std::size_t i = 1; i < la.size(); ++i) CHECK(loss_columns(lr_lines[i]) == loss_columns(la[i]));
}

TEST_CASE("training input validation") {
  const auto c = small_corpus(30);
  const auto cfg = small_model(c.vocab);
  model::RewriterModel m(cfg, 1);
  TrainConfig tc;
  tc.max_epochs = 1;
  CHECK_THROWS_AS(train(m, c.vocab, {}, c.valid, tc), DataError);
  CHECK_THROWS_AS(train(m, c.vocab, c.train, {}, tc), DataError);
  CHECK_THROWS_AS(evaluate_loss(m, c.vocab, {}), DataError);
  auto other = cfg;
  other.vocab_size += 1;
  model::RewriterModel wrong(other, 1);
  CHECK_THROWS_AS(train(wrong, c.vocab, c.train, c.valid, tc), ConfigError);

  auto bad = tc;
  bad.batch_size = 0;
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = tc;
  bad.learning_rate = -1;
  CHECK_THROWS_AS(validate(bad), ConfigError);
  CHECK(train_config_from_json(to_json(tc)) == tc);
  CHECK(format_log_line({3, 1.25, 0.5, 2.0}) == "3,1.250000,0.500000,2.00");

  for (auto& v : m.parameter("embed.word").data_mut()) v = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(train(m, c.vocab, c.train, c.valid, tc), NumericError);
}
