#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "relcap/config.hpp"
#include "relcap/model.hpp"
#include "relcap/text.hpp"

namespace relcap {

/// Container layout: the magic line "RELCAP1\n", one line of JSON header
/// (format version, run config, vocabulary, tensor manifest of
/// name/shape/byte offset/byte length), then the payload of little-endian
/// IEEE-754 doubles. Offsets are relative to the payload start.
inline constexpr std::string_view kCheckpointMagic = "RELCAP1\n";
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  RunConfig config;
  text::Vocabulary vocab;
  model::ModelParams params;
};

std::string serialize_checkpoint(const RunConfig& config, const text::Vocabulary& vocab,
                                 const model::ModelParams& params);
/// Throws FormatError naming the offending field or manifest entry.
Checkpoint deserialize_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const RunConfig& config, const text::Vocabulary& vocab,
                     const model::ModelParams& params);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace relcap
