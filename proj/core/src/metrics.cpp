#include "relcap/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <map>
#include <numeric>
#include <set>

#include "relcap/errors.hpp"

namespace relcap::metrics {

namespace {

struct RankedPrediction {
  std::size_t image;
  const Prediction* prediction;
};

std::size_t total_ground_truth(std::span<const std::vector<GroundTruth>> gt) {
  std::size_t n = 0;
  for (const auto& img : gt) n += img.size();
  return n;
}

void check_image_counts(std::size_t predictions, std::size_t ground_truth) {
  if (predictions != ground_truth) {
    throw ContractError("evaluation needs one prediction list per ground-truth image (" + std::to_string(predictions) +
                        " vs " + std::to_string(ground_truth) + ")");
  }
}

// All-points interpolated AP of a ranked hit list.
double average_precision(const std::vector<bool>& hits, std::size_t n_ground_truth) {
  const std::size_t n = hits.size();
  std::vector<double> precision(n);
  std::size_t tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (hits[i]) ++tp;
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
  }
  for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (hits[i]) ap += precision[i] / static_cast<double>(n_ground_truth);
  }
  return ap;
}

}  // namespace

double meteor_lite(std::span<const std::string> candidate, std::span<const std::string> reference) {
  if (candidate.empty() || reference.empty()) return 0.0;
  std::vector<bool> used(reference.size(), false);
  // alignment[i] = matched reference position of candidate word i, or -1
  std::vector<long> alignment(candidate.size(), -1);
  std::size_t matches = 0;
  for (std::size_t i = 0; i < candidate.size(); ++i) {
    for (std::size_t j = 0; j < reference.size(); ++j) {
      if (!used[j] && candidate[i] == reference[j]) {
        used[j] = true;
        alignment[i] = static_cast<long>(j);
        ++matches;
        break;
      }
    }
  }
  if (matches == 0) return 0.0;
  std::size_t chunks = 0;
  long prev_ref = -2;
  bool prev_matched = false;
  for (std::size_t i = 0; i < candidate.size(); ++i) {
    if (alignment[i] < 0) {
      prev_matched = false;
      continue;
    }
    if (!prev_matched || alignment[i] != prev_ref + 1) ++chunks;
    prev_ref = alignment[i];
    prev_matched = true;
  }
  const double p = static_cast<double>(matches) / static_cast<double>(candidate.size());
  const double r = static_cast<double>(matches) / static_cast<double>(reference.size());
  const double fmean = 10.0 * p * r / (r + 9.0 * p);
  const double frag = static_cast<double>(chunks) / static_cast<double>(matches);
  const double penalty = 0.5 * frag * frag * frag;
  return fmean * (1.0 - penalty);
}

const CaptionScorer& default_scorer() {
  static const MeteorLite scorer;
  return scorer;
}

void EvalThresholds::validate() const {
  if (language.empty() || localization.empty()) throw ConfigError("evaluation thresholds must be non-empty");
  if (!std::is_sorted(language.begin(), language.end()) ||
      !std::is_sorted(localization.begin(), localization.end())) {
    throw ConfigError("evaluation thresholds must be sorted ascending");
  }
}

double relational_map(std::span<const std::vector<Prediction>> predictions,
                      std::span<const std::vector<GroundTruth>> ground_truth, const EvalThresholds& thresholds,
                      const CaptionScorer& scorer) {
  thresholds.validate();
  check_image_counts(predictions.size(), ground_truth.size());
  const std::size_t n_gt = total_ground_truth(ground_truth);
  if (n_gt == 0) throw ContractError("relational mAP is undefined without ground-truth records");

  std::vector<RankedPrediction> ranked;
  for (std::size_t img = 0; img < predictions.size(); ++img) {
    for (const auto& p : predictions[img]) {
      if (!std::isfinite(p.score)) throw ContractError("prediction score must be finite");
      ranked.push_back({img, &p});
    }
  }
  if (ranked.empty()) return 0.0;
  std::stable_sort(ranked.begin(), ranked.end(), [](const RankedPrediction& a, const RankedPrediction& b) {
    return a.prediction->score > b.prediction->score;
  });

  // Per prediction and image-local gt: language score and the smaller IoU.
  struct Pairing {
    double language;
    double iou_subject;
    double iou_object;
  };
  std::vector<std::vector<Pairing>> pairings(ranked.size());
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    const auto& p = *ranked[r].prediction;
    for (const auto& g : ground_truth[ranked[r].image]) {
      pairings[r].push_back({scorer.score(p.caption, g.caption), geometry::iou(p.subject_box, g.subject_box),
                             geometry::iou(p.object_box, g.object_box)});
    }
  }

  double ap_sum = 0.0;
  for (double lang : thresholds.language) {
    for (double loc : thresholds.localization) {
      std::vector<std::vector<bool>> claimed(ground_truth.size());
      for (std::size_t img = 0; img < ground_truth.size(); ++img) claimed[img].assign(ground_truth[img].size(), false);
      std::vector<bool> hits(ranked.size(), false);
      for (std::size_t r = 0; r < ranked.size(); ++r) {
        auto& img_claimed = claimed[ranked[r].image];
        double best_overlap = -1.0;
        std::size_t best = img_claimed.size();
        for (std::size_t g = 0; g < img_claimed.size(); ++g) {
          const auto& pr = pairings[r][g];
          if (img_claimed[g] || !(pr.iou_subject > loc) || !(pr.iou_object > loc) || !(pr.language >= lang)) continue;
          double overlap = std::min(pr.iou_subject, pr.iou_object);
          if (overlap > best_overlap) {
            best_overlap = overlap;
            best = g;
          }
        }
        if (best < img_claimed.size()) {
          img_claimed[best] = true;
          hits[r] = true;
        }
      }
      ap_sum += average_precision(hits, n_gt);
    }
  }
  const double pairs = static_cast<double>(thresholds.language.size() * thresholds.localization.size());
  return 100.0 * ap_sum / pairs;
}

double image_level_recall(std::span<const std::vector<Prediction>> predictions,
                          std::span<const std::vector<GroundTruth>> ground_truth,
                          std::span<const double> language_thresholds, const CaptionScorer& scorer) {
  check_image_counts(predictions.size(), ground_truth.size());
  const std::size_t n_gt = total_ground_truth(ground_truth);
  if (n_gt == 0) throw ContractError("image-level recall is undefined without ground-truth captions");
  if (language_thresholds.empty()) throw ConfigError("image-level recall needs at least one threshold");
  // Best caption score per gt over the predictions of its image.
  std::vector<double> best;
  for (std::size_t img = 0; img < ground_truth.size(); ++img) {
    for (const auto& g : ground_truth[img]) {
      double b = -1.0;
      for (const auto& p : predictions[img]) b = std::max(b, scorer.score(p.caption, g.caption));
      best.push_back(b);
    }
  }
  double sum = 0.0;
  for (double thr : language_thresholds) {
    auto recalled = std::count_if(best.begin(), best.end(), [thr](double b) { return b >= thr; });
    sum += static_cast<double>(recalled) / static_cast<double>(n_gt);
  }
  return 100.0 * sum / static_cast<double>(language_thresholds.size());
}

double average_meteor(std::span<const std::vector<Prediction>> predictions,
                      std::span<const std::vector<GroundTruth>> ground_truth, const CaptionScorer& scorer) {
  check_image_counts(predictions.size(), ground_truth.size());
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t img = 0; img < predictions.size(); ++img) {
    for (const auto& p : predictions[img]) {
      double b = 0.0;
      for (const auto& g : ground_truth[img]) b = std::max(b, scorer.score(p.caption, g.caption));
      sum += b;
      ++count;
    }
  }
  return count == 0 ? 0.0 : 100.0 * sum / static_cast<double>(count);
}

VocabStats vocab_stats(std::span<const ImageResult> results) {
  VocabStats stats;
  if (results.empty()) return stats;
  double image_sum = 0.0;
  double box_sum = 0.0;
  std::size_t boxes = 0;
  for (const auto& img : results) {
    std::set<std::string> image_words;
    std::map<std::size_t, std::set<std::string>> box_words;
    for (const auto& p : img.predictions) {
      for (const auto& w : p.caption) {
        image_words.insert(w);
        box_words[p.subject_id].insert(w);
        box_words[p.object_id].insert(w);
      }
      // Boxes with only empty captions still count as participating.
      box_words.try_emplace(p.subject_id);
      box_words.try_emplace(p.object_id);
    }
    image_sum += static_cast<double>(image_words.size());
    for (const auto& [id, words] : box_words) box_sum += static_cast<double>(words.size());
    boxes += box_words.size();
  }
  stats.words_per_image = image_sum / static_cast<double>(results.size());
  stats.words_per_box = boxes == 0 ? 0.0 : box_sum / static_cast<double>(boxes);
  return stats;
}

CaptionCounts caption_counts(std::span<const ImageResult> results) {
  CaptionCounts counts;
  if (results.empty()) return counts;
  double caption_sum = 0.0, ratio_sum = 0.0;
  std::size_t ratio_images = 0;
  for (const auto& img : results) {
    caption_sum += static_cast<double>(img.predictions.size());
    if (img.n_boxes == 0) continue;
    ratio_sum += static_cast<double>(img.predictions.size()) / static_cast<double>(img.n_boxes);
    ++ratio_images;
  }
  counts.captions_per_image = caption_sum / static_cast<double>(results.size());
  counts.captions_per_box = ratio_images == 0 ? 0.0 : ratio_sum / static_cast<double>(ratio_images);
  return counts;
}

EvalReport evaluate(std::span<const ImageResult> results, std::span<const std::vector<GroundTruth>> ground_truth,
                    const EvalThresholds& thresholds) {
  std::vector<std::vector<Prediction>> predictions;
  for (const auto& r : results) predictions.push_back(r.predictions);
  EvalReport report;
  report.map = relational_map(predictions, ground_truth, thresholds);
  report.img_recall = image_level_recall(predictions, ground_truth, thresholds.language);
  report.meteor = average_meteor(predictions, ground_truth);
  auto vs = vocab_stats(results);
  report.words_per_img = vs.words_per_image;
  report.words_per_box = vs.words_per_box;
  auto cc = caption_counts(results);
  report.n_caption = cc.captions_per_image;
  report.caption_per_box = cc.captions_per_box;
  return report;
}

std::string to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["map"] = r.map;
  j["img_recall"] = r.img_recall;
  j["meteor"] = r.meteor;
  j["words_per_img"] = r.words_per_img;
  j["words_per_box"] = r.words_per_box;
  j["n_caption"] = r.n_caption;
  j["caption_per_box"] = r.caption_per_box;
  return j.dump(2);
}

}  // namespace relcap::metrics
