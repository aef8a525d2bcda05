#pragma once

#include <cstddef>
#include <filesystem>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "urw/corpus/synthetic.hpp"
#include "urw/model/config.hpp"
#include "urw/training/trainer.hpp"

namespace urw::cli {

struct Paths {
  std::string data;        // directory with train/valid/test.jsonl and vocab.txt
  std::string run_dir;     // training output directory
  std::string checkpoint;  // explicit checkpoint file
  std::string vocab;       // explicit vocabulary file
  std::string input;
  std::string output;
};

// Everything a command needs, resolved from defaults, a JSON config file and
// command line flags, in that order of precedence.
struct RunConfig {
  corpus::SyntheticSpec synthetic;
  model::ModelConfig model;
  training::TrainConfig train;
  std::size_t beam_size = 4;
  Paths paths;
};

// ConfigError when the file cannot be parsed or a section is malformed.
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});
RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {});
nlohmann::json to_json(const RunConfig& config);

// Writes `dir`/config.json.
void write_run_config(const RunConfig& config, const std::filesystem::path& dir);

}  // namespace urw::cli
