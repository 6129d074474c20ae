#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "relcap/geometry.hpp"

namespace relcap::metrics {

using geometry::Box;
using Words = std::vector<std::string>;

/// Pluggable caption similarity in [0, 1].
class CaptionScorer {
 public:
  virtual ~CaptionScorer() = default;
  virtual double score(std::span<const std::string> candidate, std::span<const std::string> reference) const = 0;
};

/// METEOR restricted to exact unigram matches: greedy left-to-right alignment
/// (each reference word used once), Fmean = 10PR / (R + 9P), fragmentation
/// penalty 0.5 (chunks / matches)^3. Empty candidate or reference scores 0.
double meteor_lite(std::span<const std::string> candidate, std::span<const std::string> reference);

class MeteorLite final : public CaptionScorer {
 public:
  double score(std::span<const std::string> candidate, std::span<const std::string> reference) const override {
    return meteor_lite(candidate, reference);
  }
};

const CaptionScorer& default_scorer();

struct EvalThresholds {
  std::vector<double> language{0.0, 0.05, 0.1, 0.15, 0.2, 0.25};
  std::vector<double> localization{0.2, 0.3, 0.4, 0.5, 0.6};

  void validate() const;  // ascending, non-empty
};

struct Prediction {
  Box subject_box;
  Box object_box;
  Words caption;
  double score = 0.0;
  std::size_t subject_id = 0;  // proposal ids, for per-box statistics
  std::size_t object_id = 0;
};

struct GroundTruth {
  Box subject_box;
  Box object_box;
  Words caption;
};

/// Predictions of one image plus the number of boxes that survived NMS.
struct ImageResult {
  std::vector<Prediction> predictions;
  std::size_t n_boxes = 0;
};

/// Mean AP (percent) over every (language, localization) threshold pair.
/// Predictions from all images are ranked by descending score (ties keep
/// input order). A prediction claims the unclaimed ground truth in its image
/// with IoU(subject) > loc, IoU(object) > loc and caption score >= lang,
/// preferring the largest min(IoU(subject), IoU(object)), then the lower
/// index. AP integrates the interpolated precision-recall curve at every
/// point. Throws ContractError when there is no ground truth.
double relational_map(std::span<const std::vector<Prediction>> predictions,
                      std::span<const std::vector<GroundTruth>> ground_truth, const EvalThresholds& thresholds = {},
                      const CaptionScorer& scorer = default_scorer());

/// Box-free recall (percent): a ground-truth caption counts as recalled at a
/// language threshold when any prediction of its image scores >= threshold.
double image_level_recall(std::span<const std::vector<Prediction>> predictions,
                          std::span<const std::vector<GroundTruth>> ground_truth,
                          std::span<const double> language_thresholds = EvalThresholds{}.language,
                          const CaptionScorer& scorer = default_scorer());

/// Mean (percent) over predictions of the best score against any ground
/// truth caption of the same image.
double average_meteor(std::span<const std::vector<Prediction>> predictions,
                      std::span<const std::vector<GroundTruth>> ground_truth,
                      const CaptionScorer& scorer = default_scorer());

struct VocabStats {
  double words_per_image = 0.0;
  double words_per_box = 0.0;
};

VocabStats vocab_stats(std::span<const ImageResult> results);

struct CaptionCounts {
  double captions_per_image = 0.0;
  double captions_per_box = 0.0;
};

CaptionCounts caption_counts(std::span<const ImageResult> results);

struct EvalReport {
  double map = 0.0;
  double img_recall = 0.0;
  double meteor = 0.0;
  double words_per_img = 0.0;
  double words_per_box = 0.0;
  double n_caption = 0.0;
  double caption_per_box = 0.0;
};

EvalReport evaluate(std::span<const ImageResult> results, std::span<const std::vector<GroundTruth>> ground_truth,
                    const EvalThresholds& thresholds = {});

std::string to_json(const EvalReport& report);

}  // namespace relcap::metrics
