#include "run_config.hpp"

#include <fstream>
#include <nlohmann/json.hpp>

#include "urw/error.hpp"

namespace urw::cli {

using nlohmann::json;

RunConfig run_config_from_json(const json& j, RunConfig c) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key != "synthetic" && key != "model" && key != "train" && key != "beam_size" && key != "paths") {
      throw ConfigError("unknown config section '" + key + "'");
    }
  }
  if (j.contains("synthetic")) c.synthetic = corpus::synthetic_spec_from_json(j.at("synthetic"), c.synthetic);
  if (j.contains("model")) c.model = model::model_config_from_json(j.at("model"), c.model);
  if (j.contains("train")) c.train = training::train_config_from_json(j.at("train"), c.train);
  try {
    c.beam_size = j.value("beam_size", c.beam_size);
    if (j.contains("paths")) {
      const auto& p = j.at("paths");
      if (!p.is_object()) throw ConfigError("paths section must be an object");
      c.paths.data = p.value("data", c.paths.data);
      c.paths.run_dir = p.value("run_dir", c.paths.run_dir);
      c.paths.checkpoint = p.value("checkpoint", c.paths.checkpoint);
      c.paths.vocab = p.value("vocab", c.paths.vocab);
      c.paths.input = p.value("input", c.paths.input);
      c.paths.output = p.value("output", c.paths.output);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return run_config_from_json(j, std::move(base));
}

json to_json(const RunConfig& c) {
  return {{"synthetic", corpus::to_json(c.synthetic)},
          {"model", model::to_json(c.model)},
          {"train", training::to_json(c.train)},
          {"beam_size", c.beam_size},
          {"paths",
           {{"data", c.paths.data},
            {"run_dir", c.paths.run_dir},
            {"checkpoint", c.paths.checkpoint},
            {"vocab", c.paths.vocab},
            {"input", c.paths.input},
            {"output", c.paths.output}}}};
}

void write_run_config(const RunConfig& config, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "config.json");
  if (!out) throw IoError("cannot write " + (dir / "config.json").string());
  out << to_json(config).dump(2) << '\n';
}

}  // namespace urw::cli
