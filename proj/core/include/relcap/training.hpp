#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "relcap/config.hpp"
#include "relcap/data.hpp"
#include "relcap/metrics.hpp"
#include "relcap/model.hpp"
#include "relcap/text.hpp"

namespace relcap {

/// Mean of each loss term over the optimizer steps of one epoch.
struct EpochLoss {
  std::size_t epoch = 0;  // 1-based
  double caption = 0.0;
  double pos = 0.0;
  double det = 0.0;
  double box = 0.0;
  double total = 0.0;
};

/// {"epoch":i,"cap":...,"pos":...,"det":...,"box":...,"total":...}
std::string to_json_line(const EpochLoss& loss);

/// Vocabulary over every ground-truth caption of the dataset.
text::Vocabulary dataset_vocab(std::span<const data::Scene> scenes, std::size_t min_count = 1);

/// Throws ConfigError if any scene's feature width differs from the model's.
void check_compatible(std::span<const data::Scene> scenes, const model::ModelConfig& config);

struct TrainResult {
  model::ModelParams params;
  std::vector<EpochLoss> log;
  std::size_t steps = 0;
};

using EpochCallback = std::function<void(const EpochLoss&)>;

/// Adam over mini-batches of scenes, reshuffled each epoch. Parameters start
/// from `init` when given, else from a fresh initialization seeded by
/// config.train.seed. Stops early once config.train.max_steps is reached.
TrainResult train(std::span<const data::Scene> scenes, const text::Vocabulary& vocab, const RunConfig& config,
                  const EpochCallback& on_epoch = {}, std::optional<model::ModelParams> init = std::nullopt);

std::vector<std::string> caption_words(const text::Vocabulary& vocab, const model::DecodeOutput& decoded);

/// Captioned pairs of one scene, descending score, truncated to
/// config.max_pairs when that is non-zero.
metrics::ImageResult predict(const data::Scene& scene, const model::ModelParams& params,
                             const text::Vocabulary& vocab, const EvalConfig& config);

std::vector<metrics::GroundTruth> ground_truth(const data::Scene& scene);

/// predict() on every scene (config.jobs worker threads) then the metrics
/// report against the scenes' own records.
metrics::EvalReport evaluate_dataset(std::span<const data::Scene> scenes, const model::ModelParams& params,
                                     const text::Vocabulary& vocab, const EvalConfig& config);

}  // namespace relcap
