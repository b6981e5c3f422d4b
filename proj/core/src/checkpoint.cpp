#include "creep/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include <nlohmann/json.hpp>

#include "creep/error.hpp"

namespace creep {

namespace {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");
static_assert(sizeof(float) == 4);

json scaler_json(const MinMaxScaler& s) { return {{"min", s.min_val}, {"max", s.max_val}}; }
MinMaxScaler scaler_from(const json& j) { return {j.at("min").get<double>(), j.at("max").get<double>()}; }

json model_config_json(const ModelConfig& c) {
  return {{"kind", std::string(to_string(c.kind))},
          {"input_dim", c.input_dim},
          {"hidden_dim", c.hidden_dim},
          {"dropout", c.dropout},
          {"latent_dim", c.latent_dim},
          {"encoder_heads", c.encoder_heads},
          {"ff_dim", c.ff_dim},
          {"max_length", c.max_length},
          {"channel_attention", c.channel_attention},
          {"attention_block_rows", c.attention_block_rows}};
}

ModelConfig model_config_from(const json& j) {
  ModelConfig c;
  c.kind = parse_model_kind(j.at("kind").get<std::string>());
  c.input_dim = j.at("input_dim").get<std::size_t>();
  c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.latent_dim = j.at("latent_dim").get<std::size_t>();
  c.encoder_heads = j.at("encoder_heads").get<std::size_t>();
  c.ff_dim = j.at("ff_dim").get<std::size_t>();
  c.max_length = j.at("max_length").get<std::size_t>();
  c.channel_attention = j.at("channel_attention").get<bool>();
  c.attention_block_rows = j.at("attention_block_rows").get<std::size_t>();
  return c;
}

json training_config_json(const TrainingConfig& c) {
  return {{"model", model_config_json(c.model)},
          {"epochs", c.epochs},
          {"lr", c.lr},
          {"beta", c.beta},
          {"clip_norm", c.clip_norm ? json(*c.clip_norm) : json(nullptr)},
          {"use_scheduler", c.use_scheduler},
          {"scheduler_factor", c.scheduler_factor},
          {"scheduler_patience", c.scheduler_patience},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"record_timing", c.record_timing}};
}

TrainingConfig training_config_from(const json& j) {
  TrainingConfig c;
  c.model = model_config_from(j.at("model"));
  c.epochs = j.at("epochs").get<std::size_t>();
  c.lr = j.at("lr").get<double>();
  c.beta = j.at("beta").get<double>();
  if (!j.at("clip_norm").is_null()) c.clip_norm = j.at("clip_norm").get<double>();
  c.use_scheduler = j.at("use_scheduler").get<bool>();
  c.scheduler_factor = j.at("scheduler_factor").get<double>();
  c.scheduler_patience = j.at("scheduler_patience").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.record_timing = j.at("record_timing").get<bool>();
  return c;
}

void put_u64(std::ostream& out, std::uint64_t v) {
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(bytes, 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char bytes[8];
  if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw Error(ErrorKind::FormatError, "truncated checkpoint header");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | bytes[i];
  return v;
}

}  // namespace

void write_checkpoint(const ModelCheckpoint& ckpt, std::ostream& out) {
  json tensors = json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : ckpt.parameters) {
    const std::uint64_t bytes = t.numel() * sizeof(float);
    tensors.push_back({{"name", name}, {"shape", t.shape()}, {"dtype", "f32"}, {"offset", offset}, {"bytes", bytes}});
    offset += bytes;
  }
  json keys = json::array();
  for (const auto& k : ckpt.validation_keys) keys.push_back({k.temperature_c, k.stress_mpa});
  const json header = {
      {"format_version", kCheckpointFormatVersion},
      {"kind", std::string(to_string(ckpt.kind()))},
      {"tensors", tensors},
      {"config", training_config_json(ckpt.config)},
      {"scalers",
       {{"temperature", scaler_json(ckpt.feature_scalers[kTemperature])},
        {"stress", scaler_json(ckpt.feature_scalers[kStress])},
        {"time", scaler_json(ckpt.feature_scalers[kTime])},
        {"target", scaler_json(ckpt.target_scaler)},
        {"target_transform", "log1p"}}},
      {"unit_convention", std::string(to_string(ckpt.units))},
      {"validation_keys", keys},
      {"sequence_length", ckpt.sequence_length},
      {"best_epoch", ckpt.best_epoch},
      {"best_train_r2", ckpt.best_train_r2},
      {"payload_bytes", offset},
  };
  const std::string text = header.dump();
  put_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, t] : ckpt.parameters) {
    const auto data = t.data();
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size_bytes()));
  }
}

void save_checkpoint(const ModelCheckpoint& checkpoint, const std::filesystem::path& destination) {
  std::ofstream out(destination, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoFailure, "cannot open " + destination.string() + " for writing");
  write_checkpoint(checkpoint, out);
  out.flush();
  if (!out) throw Error(ErrorKind::IoFailure, "write failed for " + destination.string());
}

ModelCheckpoint read_checkpoint(std::istream& in) {
  const std::uint64_t header_len = get_u64(in);
  if (header_len == 0 || header_len > (std::uint64_t{1} << 30)) {
    throw Error(ErrorKind::FormatError, "implausible checkpoint header length " + std::to_string(header_len));
  }
  std::string text(header_len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(header_len))) {
    throw Error(ErrorKind::FormatError, "truncated checkpoint header");
  }
  ModelCheckpoint ckpt;
  try {
    const json header = json::parse(text);
    const int version = header.at("format_version").get<int>();
    if (version != kCheckpointFormatVersion) {
      throw Error(ErrorKind::FormatError, "unsupported checkpoint format version " + std::to_string(version));
    }
    ckpt.config = training_config_from(header.at("config"));
    if (header.at("kind").get<std::string>() != to_string(ckpt.kind())) {
      throw Error(ErrorKind::FormatError, "checkpoint kind disagrees with its config");
    }
    const auto& scalers = header.at("scalers");
    ckpt.feature_scalers[kTemperature] = scaler_from(scalers.at("temperature"));
    ckpt.feature_scalers[kStress] = scaler_from(scalers.at("stress"));
    ckpt.feature_scalers[kTime] = scaler_from(scalers.at("time"));
    ckpt.target_scaler = scaler_from(scalers.at("target"));
    ckpt.units = parse_unit_convention(header.at("unit_convention").get<std::string>());
    for (const auto& k : header.at("validation_keys")) {
      ckpt.validation_keys.push_back({k.at(0).get<double>(), k.at(1).get<double>()});
    }
    ckpt.sequence_length = header.at("sequence_length").get<std::size_t>();
    ckpt.best_epoch = header.at("best_epoch").get<std::size_t>();
    ckpt.best_train_r2 = header.at("best_train_r2").get<double>();

    std::uint64_t expected_offset = 0;
    for (const auto& entry : header.at("tensors")) {
      const auto name = entry.at("name").get<std::string>();
      const auto shape = entry.at("shape").get<Shape>();
      if (entry.at("dtype").get<std::string>() != "f32") {
        throw Error(ErrorKind::FormatError, "tensor '" + name + "' has unsupported dtype");
      }
      const auto offset = entry.at("offset").get<std::uint64_t>();
      const auto bytes = entry.at("bytes").get<std::uint64_t>();
      if (offset != expected_offset || bytes != shape_numel(shape) * sizeof(float)) {
        throw Error(ErrorKind::FormatError, "tensor '" + name + "' has an inconsistent table entry");
      }
      std::vector<float> values(shape_numel(shape));
      if (!in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(bytes))) {
        throw Error(ErrorKind::FormatError, "truncated payload for tensor '" + name + "'");
      }
      ckpt.parameters.emplace_back(name, Tensor<float>(shape, std::move(values)));
      expected_offset += bytes;
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::FormatError, std::string("bad checkpoint header: ") + e.what());
  }
  return ckpt;
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& source) {
  std::ifstream in(source, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + source.string());
  return read_checkpoint(in);
}

}  // namespace creep
