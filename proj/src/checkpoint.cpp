/*
 * Copyright 2026 The dmasum Authors.
 * Licensed under the terms of the Apache 2.0 License.
 * See LICENSE file in the project root for terms.
 */

#include "dmasum/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>
#include <set>

#include "dmasum/dataset.hpp"
#include "dmasum/errors.hpp"

namespace dmasum {

namespace {

const std::set<std::string> kModelKeys = {
    "feature_dim",   "attention_width",   "lstm_hidden", "lstm_layers",   "head_hidden",
    "visual_layers", "sequential_layers", "dropout",     "channel",       "plain_softmax",
    "renormalize_rows"};

}  // namespace

nlohmann::json model_config_to_json(const ModelConfig& config) {
  return {{"feature_dim", config.feature_dim},
          {"attention_width", config.attention_width},
          {"lstm_hidden", config.lstm_hidden},
          {"lstm_layers", config.lstm_layers},
          {"head_hidden", config.head_hidden},
          {"visual_layers", config.visual_layers},
          {"sequential_layers", config.sequential_layers},
          {"dropout", config.dropout},
          {"channel", std::string(channel_name(config.channel))},
          {"plain_softmax", config.plain_softmax},
          {"renormalize_rows", config.renormalize_rows}};
}

ModelConfig model_config_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw InputError("model config must be a JSON object");
  for (const auto& [key, _] : doc.items()) {
    if (!kModelKeys.contains(key)) throw InputError("model config: unknown key '" + key + "'");
  }
  ModelConfig c = ModelConfig::desk_scale();
  try {
    c.feature_dim = doc.value("feature_dim", c.feature_dim);
    c.attention_width = doc.value("attention_width", c.attention_width);
    c.lstm_hidden = doc.value("lstm_hidden", c.lstm_hidden);
    c.lstm_layers = doc.value("lstm_layers", c.lstm_layers);
    c.head_hidden = doc.value("head_hidden", c.head_hidden);
    c.visual_layers = doc.value("visual_layers", c.visual_layers);
    c.sequential_layers = doc.value("sequential_layers", c.sequential_layers);
    c.dropout = doc.value("dropout", c.dropout);
    c.channel = parse_channel(doc.value("channel", std::string(channel_name(c.channel))));
    c.plain_softmax = doc.value("plain_softmax", c.plain_softmax);
    c.renormalize_rows = doc.value("renormalize_rows", c.renormalize_rows);
  } catch (const nlohmann::json::exception& ex) {
    throw InputError(std::string("model config: ") + ex.what());
  }
  return c;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint) {
  nlohmann::json header;
  header["config"] = model_config_to_json(checkpoint.config);
  header["echo"] = checkpoint.echo;
  header["parameters"] = nlohmann::json::array();
  for (std::size_t i = 0; i < checkpoint.params.count(); ++i) {
    const Matrix& m = checkpoint.params[i];
    header["parameters"].push_back(
        {{"name", checkpoint.params.name(i)}, {"rows", m.rows()}, {"cols", m.cols()}});
  }
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(kCheckpointMagic.begin(), kCheckpointMagic.end());
  out.reserve(16 + text.size() + checkpoint.params.element_count() * 8);
  const std::uint64_t length = text.size();
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(length >> (8 * i)));
  out.insert(out.end(), text.begin(), text.end());
  for (std::size_t i = 0; i < checkpoint.params.count(); ++i) {
    for (double v : checkpoint.params[i].data()) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      for (int b = 0; b < 8; ++b) out.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
    }
  }
  return out;
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 16) throw LoadError("checkpoint: truncated header");
  if (!std::equal(kCheckpointMagic.begin(), kCheckpointMagic.end(), bytes.begin())) {
    throw LoadError("checkpoint: bad magic");
  }
  std::uint64_t length = 0;
  for (int i = 0; i < 8; ++i) length |= static_cast<std::uint64_t>(bytes[8 + i]) << (8 * i);
  if (length > bytes.size() - 16) throw LoadError("checkpoint: header length exceeds file size");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<long>(length));
  } catch (const nlohmann::json::exception& ex) {
    throw LoadError(std::string("checkpoint: malformed header: ") + ex.what());
  }

  Checkpoint cp;
  std::size_t offset = 16 + length;
  try {
    cp.config = model_config_from_json(header.at("config"));
    cp.echo = header.value("echo", nlohmann::json::object());
    for (const auto& entry : header.at("parameters")) {
      const auto rows = entry.at("rows").get<std::size_t>();
      const auto cols = entry.at("cols").get<std::size_t>();
      if (rows * cols * 8 > bytes.size() - offset) {
        throw LoadError("checkpoint: truncated payload in " + entry.at("name").get<std::string>());
      }
      Matrix m(rows, cols);
      for (double& v : m.data()) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[offset + b]) << (8 * b);
        v = std::bit_cast<double>(bits);
        offset += 8;
      }
      cp.params.add(entry.at("name").get<std::string>(), std::move(m));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw LoadError(std::string("checkpoint: ") + ex.what());
  } catch (const InputError& ex) {
    throw LoadError(std::string("checkpoint: ") + ex.what());
  }
  if (offset != bytes.size()) throw LoadError("checkpoint: trailing bytes after payload");
  return cp;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  write_file_synced(path, encode_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in),
                                        std::istreambuf_iterator<char>()};
  try {
    return decode_checkpoint(bytes);
  } catch (const LoadError& ex) {
    throw LoadError(path.string() + ": " + ex.what());
  }
}

}  // namespace dmasum
