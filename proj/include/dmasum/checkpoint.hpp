/*
 * Copyright 2026 The dmasum Authors.
 * Licensed under the terms of the Apache 2.0 License.
 * See LICENSE file in the project root for terms.
 */

#pragma once

#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dmasum/autodiff.hpp"
#include "dmasum/model.hpp"

namespace dmasum {

// "DMASUM01", u64 little-endian header length, UTF-8 JSON header, then every
// parameter's values as little-endian doubles in header order.
inline constexpr std::string_view kCheckpointMagic = "DMASUM01";

nlohmann::json model_config_to_json(const ModelConfig& config);
// Missing keys keep their desk-scale defaults; unknown keys throw InputError.
ModelConfig model_config_from_json(const nlohmann::json& doc);

struct Checkpoint {
  ModelConfig config;
  ParameterVector params;
  nlohmann::json echo;  // run configuration and seed, stored verbatim
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint);
// Throws LoadError on bad magic, truncation, or a header/payload mismatch.
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dmasum
