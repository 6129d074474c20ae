#pragma once

// Straightforward re-derivations of the evaluation metrics, written without
// reusing library code, for equivalence testing.

#include <span>
#include <string>
#include <vector>

#include "relcap/metrics.hpp"

namespace relcap::testkit {

double ref_iou(const geometry::Box& a, const geometry::Box& b);
double ref_meteor(const std::vector<std::string>& cand, const std::vector<std::string>& ref);

double ref_relational_map(const std::vector<std::vector<metrics::Prediction>>& preds,
                          const std::vector<std::vector<metrics::GroundTruth>>& gt,
                          const metrics::EvalThresholds& th = {});
double ref_image_level_recall(const std::vector<std::vector<metrics::Prediction>>& preds,
                              const std::vector<std::vector<metrics::GroundTruth>>& gt,
                              const std::vector<double>& thresholds);
double ref_average_meteor(const std::vector<std::vector<metrics::Prediction>>& preds,
                          const std::vector<std::vector<metrics::GroundTruth>>& gt);
metrics::VocabStats ref_vocab_stats(const std::vector<metrics::ImageResult>& results);
metrics::CaptionCounts ref_caption_counts(const std::vector<metrics::ImageResult>& results);

/// Random evaluation instance: 1-3 images, <= 5 ground truths and <= 5
/// predictions per image, boxes on a coarse grid and captions over a tiny
/// vocabulary so that thresholds, score ties and overlaps all occur.
struct EvalInstance {
  std::vector<std::vector<metrics::Prediction>> predictions;
  std::vector<std::vector<metrics::GroundTruth>> ground_truth;
  std::vector<metrics::ImageResult> results;
};
EvalInstance random_eval_instance(unsigned seed);

}  // namespace relcap::testkit
