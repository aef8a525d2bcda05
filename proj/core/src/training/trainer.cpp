#include "urw/training/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <nlohmann/json.hpp>
#include <random>

#include "urw/error.hpp"
#include "urw/numerics/ops.hpp"
#include "urw/training/adam.hpp"

namespace urw::training {

void validate(const TrainConfig& c) {
  if (!(c.learning_rate >= 0.0) || !std::isfinite(c.learning_rate)) {
    throw ConfigError("learning_rate must be a finite non-negative number");
  }
  if (c.batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (c.grad_clip_norm < 0.0) throw ConfigError("grad_clip_norm must be >= 0");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},   {"batch_size", c.batch_size},
          {"max_epochs", c.max_epochs},         {"grad_clip_norm", c.grad_clip_norm},
          {"seed", c.seed},                     {"early_stop_patience", c.early_stop_patience}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
  if (!j.is_object()) throw ConfigError("train section must be an object");
  try {
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.grad_clip_norm = j.value("grad_clip_norm", c.grad_clip_norm);
    c.seed = j.value("seed", c.seed);
    c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train section: ") + e.what());
  }
  return c;
}

std::string format_log_line(const EpochRecord& r) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,%.2f", r.epoch, r.train_loss, r.valid_loss, r.seconds);
  return buf;
}

std::vector<model::Batch> make_batches(std::span<const model::TrainingExample> examples,
                                       std::span<const std::size_t> order, std::size_t batch_size,
                                       std::size_t vocab_size) {
  std::vector<model::Batch> out;
  for (std::size_t s = 0; s < order.size(); s += batch_size) {
    std::vector<const model::TrainingExample*> group;
    for (std::size_t i = s; i < std::min(order.size(), s + batch_size); ++i) group.push_back(&examples[order[i]]);
    out.push_back(model::make_batch(group, vocab_size));
  }
  return out;
}

namespace {

std::vector<model::TrainingExample> build_examples(const model::RewriterModel& model,
                                                   const corpus::Vocabulary& vocab,
                                                   std::span<const corpus::DialogueSample> samples) {
  std::vector<model::TrainingExample> out;
  out.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out.push_back(model::make_example(vocab, samples[i], model.config(), i));
  }
  return out;
}

double batches_loss(const model::RewriterModel& model, std::span<const model::Batch> batches) {
  double total = 0.0;
  std::size_t tokens = 0;
  for (const auto& b : batches) {
    num::Tape tape(false);
    const std::size_t n = b.target_tokens();
    total += model.nll_loss(tape, b).item() * static_cast<double>(n);
    tokens += n;
  }
  return total / static_cast<double>(tokens);
}

// Trainer bookkeeping persisted in last.ckpt for resume.
constexpr const char* kTrainerBlob = "trainer.state";

struct Snapshot {
  std::vector<std::vector<double>> values;
};

Snapshot snapshot(const model::RewriterModel& model) {
  Snapshot s;
  for (const auto& p : model.parameters()) s.values.emplace_back(p.value.data().begin(), p.value.data().end());
  return s;
}

void restore(const model::RewriterModel& model, const Snapshot& s) {
  const auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto t = params[i].value;
    std::copy(s.values[i].begin(), s.values[i].end(), t.data_mut().begin());
  }
}

}  // namespace

double evaluate_loss(const model::RewriterModel& model, const corpus::Vocabulary& vocab,
                     std::span<const corpus::DialogueSample> samples, std::size_t batch_size) {
  if (samples.empty()) throw DataError("cannot evaluate loss on an empty set");
  const auto examples = build_examples(model, vocab, samples);
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  return batches_loss(model, make_batches(examples, order, batch_size, vocab.size()));
}

TrainResult train(model::RewriterModel& model, const corpus::Vocabulary& vocab,
                  std::span<const corpus::DialogueSample> train_set,
                  std::span<const corpus::DialogueSample> valid_set, const TrainConfig& config,
                  const TrainOptions& options) {
  validate(config);
  if (train_set.empty()) throw DataError("training split is empty");
  if (valid_set.empty()) throw DataError("validation split is empty");
  if (model.config().vocab_size != vocab.size()) {
    throw ConfigError("model vocab_size " + std::to_string(model.config().vocab_size) +
                      " does not match vocabulary size " + std::to_string(vocab.size()));
  }
  const auto params = model.parameters();
  const auto train_examples = build_examples(model, vocab, train_set);
  const auto valid_examples = build_examples(model, vocab, valid_set);
  std::vector<std::size_t> valid_order(valid_examples.size());
  std::iota(valid_order.begin(), valid_order.end(), 0);
  const auto valid_batches = make_batches(valid_examples, valid_order, config.batch_size, vocab.size());

  AdamState adam(params);
  TrainResult result;
  std::size_t start_epoch = 1;
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0, bad_epochs = 0;
  if (options.resume != nullptr) {
    adam.from_blobs(options.resume->extra, params);
    start_epoch = options.resume->epoch + 1;
    for (const auto& b : options.resume->extra) {
      if (b.name == kTrainerBlob && b.values.size() == 3) {
        best = b.values[0];
        best_epoch = static_cast<std::size_t>(b.values[1]);
        bad_epochs = static_cast<std::size_t>(b.values[2]);
      }
    }
  }
  Snapshot best_params;
  bool have_snapshot = false;

  std::ofstream log;
  if (options.run_dir) {
    std::filesystem::create_directories(*options.run_dir);
    const auto log_path = *options.run_dir / "train.log";
    const bool fresh = options.resume == nullptr || !std::filesystem::exists(log_path);
    log.open(log_path, fresh ? std::ios::trunc : std::ios::app);
    if (!log) throw IoError("cannot write " + log_path.string());
    if (fresh) log << kLogHeader << '\n' << std::flush;
  }

  auto save = [&](const std::filesystem::path& path, std::size_t epoch, double valid) {
    model::CheckpointInfo info;
    info.vocab_hash = vocab.hash();
    info.step = adam.step;
    info.epoch = epoch;
    info.valid_loss = valid;
    info.extra = adam.to_blobs(params);
    info.extra.push_back({kTrainerBlob, {best, static_cast<double>(best_epoch), static_cast<double>(bad_epochs)}});
    model::save_checkpoint(path, model, info);
  };

  for (std::size_t epoch = start_epoch; epoch <= config.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    // Per-epoch streams keep resumed runs on the same trajectory.
    std::mt19937_64 shuffle_rng(config.seed * 1000003ULL + epoch);
    std::mt19937_64 dropout_rng(config.seed * 7919ULL + epoch * 104729ULL);
    std::vector<std::size_t> order(train_examples.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    const model::ForwardOptions opts{true, &dropout_rng};

    double loss_sum = 0.0;
    std::size_t tokens = 0;
    for (std::size_t s = 0, batch_id = 0; s < order.size(); s += config.batch_size, ++batch_id) {
      std::vector<const model::TrainingExample*> group;
      for (std::size_t i = s; i < std::min(order.size(), s + config.batch_size); ++i) {
        group.push_back(&train_examples[order[i]]);
      }
      const auto batch = model::make_batch(group, vocab.size());
      num::Tape tape;
      model.zero_grad();
      auto loss = model.nll_loss(tape, batch, opts);
      if (!std::isfinite(loss.item())) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + " batch " + std::to_string(batch_id));
      }
      num::backward(loss, tape);
      clip_grad_norm(params, config.grad_clip_norm);
      adam_step(params, adam, config.learning_rate);
      const std::size_t n = batch.target_tokens();
      loss_sum += loss.item() * static_cast<double>(n);
      tokens += n;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(tokens);
    rec.valid_loss = batches_loss(model, valid_batches);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.epochs.push_back(rec);

    const bool improved = rec.valid_loss < best;
    if (improved) {
      best = rec.valid_loss;
      best_epoch = epoch;
      bad_epochs = 0;
      best_params = snapshot(model);
      have_snapshot = true;
    } else {
      ++bad_epochs;
    }
    if (options.run_dir) {
      log << format_log_line(rec) << '\n' << std::flush;
      save(*options.run_dir / "last.ckpt", epoch, rec.valid_loss);
      if (improved) {
        save(*options.run_dir / "best.ckpt", epoch, rec.valid_loss);
        std::ofstream marker(*options.run_dir / "best", std::ios::trunc);
        marker << "best.ckpt\nepoch " << epoch << '\n';
      }
    }
    if (options.on_epoch) options.on_epoch(rec);
    if (config.early_stop_patience > 0 && bad_epochs >= config.early_stop_patience) {
      result.early_stopped = true;
      break;
    }
  }

  if (options.restore_best) {
    if (have_snapshot) {
      restore(model, best_params);
    } else if (options.run_dir && std::filesystem::exists(*options.run_dir / "best.ckpt")) {
      restore(model, snapshot(model::load_checkpoint(*options.run_dir / "best.ckpt", vocab.hash()).model));
    }
  }
  result.best_epoch = best_epoch;
  result.best_valid_loss = best;
  result.steps = adam.step;
  return result;
}

}  // namespace urw::training
