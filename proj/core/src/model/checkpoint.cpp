#include "urw/model/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

#include "urw/error.hpp"

namespace urw::model {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

constexpr char kMagic[8] = {'U', 'T', 'R', 'W', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const std::filesystem::path& path) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw IoError(path.string() + ": truncated checkpoint");
  return v;
}

struct Parsed {
  nlohmann::json header;
  std::vector<std::vector<double>> blobs;
};

Parsed parse(const std::filesystem::path& path, bool with_blobs) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw IoError(path.string() + ": not a checkpoint file");
  }
  const auto version = read_pod<std::uint32_t>(is, path);
  if (version != kVersion) {
    throw IoError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto header_size = read_pod<std::uint64_t>(is, path);
  std::string text(header_size, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(header_size))) {
    throw IoError(path.string() + ": truncated header");
  }
  Parsed p;
  try {
    p.header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": corrupt header: " + e.what());
  }
  if (!with_blobs) return p;
  for (const auto& entry : p.header.at("blobs")) {
    const auto n = entry.at("size").get<std::size_t>();
    std::vector<double> v(n);
    if (!is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)))) {
      throw IoError(path.string() + ": truncated blob " + entry.at("name").get<std::string>());
    }
    p.blobs.push_back(std::move(v));
  }
  return p;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const RewriterModel& model,
                     const CheckpointInfo& info) {
  nlohmann::json blobs = nlohmann::json::array();
  for (const auto& p : model.parameters()) {
    blobs.push_back({{"name", p.name}, {"kind", "param"}, {"shape", p.value.shape()}, {"size", p.value.size()}});
  }
  for (const auto& b : info.extra) {
    blobs.push_back({{"name", b.name}, {"kind", "extra"}, {"size", b.values.size()}});
  }
  nlohmann::json header = {{"config", to_json(model.config())},
                           {"vocab_hash", info.vocab_hash},
                           {"step", info.step},
                           {"epoch", info.epoch},
                           {"blobs", blobs}};
  if (std::isfinite(info.valid_loss)) header["valid_loss"] = info.valid_loss;
  const std::string text = header.dump();

  // Write to a sibling file first so an interrupted save never clobbers the
  // previous checkpoint.
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write checkpoint " + tmp.string());
    os.write(kMagic, 8);
    write_pod(os, kVersion);
    write_pod(os, static_cast<std::uint64_t>(text.size()));
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& p : model.parameters()) {
      auto d = p.value.data();
      os.write(reinterpret_cast<const char*>(d.data()), static_cast<std::streamsize>(d.size() * sizeof(double)));
    }
    for (const auto& b : info.extra) {
      os.write(reinterpret_cast<const char*>(b.values.data()),
               static_cast<std::streamsize>(b.values.size() * sizeof(double)));
    }
    if (!os) throw IoError("failed writing checkpoint " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

ModelConfig read_checkpoint_config(const std::filesystem::path& path) {
  return model_config_from_json(parse(path, false).header.at("config"));
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, std::uint64_t vocab_hash) {
  auto parsed = parse(path, true);
  const auto& h = parsed.header;
  const auto stored_hash = h.at("vocab_hash").get<std::uint64_t>();
  if (stored_hash != vocab_hash) {
    throw DataError(path.string() + ": vocabulary hash mismatch (checkpoint " + std::to_string(stored_hash) +
                    ", vocabulary " + std::to_string(vocab_hash) + ")");
  }
  LoadedCheckpoint out{RewriterModel(model_config_from_json(h.at("config")), 0), {}};
  out.info.vocab_hash = stored_hash;
  out.info.step = h.at("step").get<std::size_t>();
  out.info.epoch = h.at("epoch").get<std::size_t>();
  if (h.contains("valid_loss")) out.info.valid_loss = h.at("valid_loss").get<double>();

  const auto params = out.model.parameters();
  std::size_t next_param = 0;
  const auto& index = h.at("blobs");
  for (std::size_t i = 0; i < index.size(); ++i) {
    const auto name = index[i].at("name").get<std::string>();
    if (index[i].at("kind") == "extra") {
      out.info.extra.push_back({name, std::move(parsed.blobs[i])});
      continue;
    }
    if (next_param >= params.size() || params[next_param].name != name) {
      throw IoError(path.string() + ": unexpected parameter " + name);
    }
    auto t = params[next_param++].value;
    if (index[i].at("shape").get<num::Shape>() != t.shape()) {
      throw IoError(path.string() + ": shape mismatch for " + name);
    }
    std::copy(parsed.blobs[i].begin(), parsed.blobs[i].end(), t.data_mut().begin());
  }
  if (next_param != params.size()) throw IoError(path.string() + ": missing parameters");
  return out;
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, std::uint64_t vocab_hash,
                                 const ModelConfig& expected) {
  auto stored = read_checkpoint_config(path);
  auto a = stored;
  auto b = expected;
  a.dropout_rate = b.dropout_rate = 0.0;
  if (a != b) {
    throw ConfigError(path.string() + ": checkpoint config " + to_json(stored).dump() +
                      " does not match requested " + to_json(expected).dump());
  }
  return load_checkpoint(path, vocab_hash);
}

}  // namespace urw::model
