#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "urw/corpus/dialogue.hpp"
#include "urw/corpus/vocabulary.hpp"
#include "urw/model/batch.hpp"
#include "urw/model/checkpoint.hpp"
#include "urw/model/rewriter.hpp"

namespace urw::training {

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 50;
  double grad_clip_norm = 1.0;
  std::uint64_t seed = 1;
  std::size_t early_stop_patience = 5;

  bool operator==(const TrainConfig&) const = default;
};

void validate(const TrainConfig& config);
nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double valid_loss = 0.0;
  double seconds = 0.0;
};

// "epoch,train_loss,valid_loss,seconds" with six decimals for the losses.
std::string format_log_line(const EpochRecord& r);
inline constexpr const char* kLogHeader = "epoch,train_loss,valid_loss,seconds";

struct TrainResult {
  std::vector<EpochRecord> epochs;  // epochs run by this call
  std::size_t best_epoch = 0;
  double best_valid_loss = 0.0;
  std::size_t steps = 0;  // optimizer steps after this call
  bool early_stopped = false;
};

struct TrainOptions {
  // When set, the log (train.log), last.ckpt, best.ckpt and a "best" marker
  // are maintained in this directory.
  std::optional<std::filesystem::path> run_dir;
  // State from a previous run's last.ckpt; training continues after its epoch.
  const model::CheckpointInfo* resume = nullptr;
  // Restore the best-validation parameters into the model before returning.
  bool restore_best = true;
  std::function<void(const EpochRecord&)> on_epoch;
};

// Mini-batch Adam on the token-averaged NLL with per-epoch validation and
// patience-based early stopping. DataError on an empty split; NumericError
// naming the epoch and batch on a non-finite loss.
TrainResult train(model::RewriterModel& model, const corpus::Vocabulary& vocab,
                  std::span<const corpus::DialogueSample> train_set,
                  std::span<const corpus::DialogueSample> valid_set, const TrainConfig& config,
                  const TrainOptions& options = {});

// Token-weighted mean NLL over `samples` with dropout off.
double evaluate_loss(const model::RewriterModel& model, const corpus::Vocabulary& vocab,
                     std::span<const corpus::DialogueSample> samples, std::size_t batch_size = 64);

// Builds padded batches of consecutive examples in `order`.
std::vector<model::Batch> make_batches(std::span<const model::TrainingExample> examples,
                                       std::span<const std::size_t> order, std::size_t batch_size,
                                       std::size_t vocab_size);

}  // namespace urw::training
