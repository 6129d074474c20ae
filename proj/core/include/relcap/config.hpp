#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "relcap/model.hpp"

namespace relcap {

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 4;  // scenes per optimizer step
  std::size_t max_steps = 0;   // 0: no limit
  double learning_rate = 1e-3;
  std::uint64_t seed = 1;
  std::size_t vocab_min_count = 1;
};

struct EvalConfig {
  std::size_t n_before_nms = model::kDefaultProposalsBeforeNms;
  double nms_iou = geometry::kDefaultNmsIou;
  std::size_t max_pairs = 0;  // 0: keep every decoded pair
  std::size_t jobs = 1;
};

struct RunConfig {
  model::ModelConfig model;
  TrainConfig train;
  EvalConfig eval;

  void validate() const;  // throws ConfigError
};

/// Compact JSON object with every field.
std::string to_json(const RunConfig& config);

/// Applies the keys present in a JSON object on top of `base`. Unknown keys
/// are rejected with ConfigError.
RunConfig merge_json(const RunConfig& base, std::string_view json_text);
RunConfig load_run_config(const std::filesystem::path& path, const RunConfig& base = {});

}  // namespace relcap
