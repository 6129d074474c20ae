#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "relcap/data.hpp"
#include "relcap/geometry.hpp"
#include "relcap/tensor.hpp"
#include "relcap/text.hpp"

namespace relcap::model {

using autodiff::Tensor;
using geometry::Box;
using text::PosTag;
using text::TaggedCaption;
using text::TokenId;

/// Decoder architecture. kTripleStream is the late-fusion model; the rest are
/// single-LSTM early-fusion baselines differing in which codes they see.
enum class FusionMode {
  kTripleStream,
  kEarlyFusion,    // subj + union + obj codes concatenated
  kUnionOnly,      // union code (which already carries the pair geometry)
  kSubjObj,        // subj + obj codes
  kSubjObjCoord,   // subj + obj codes + embedded geometric feature
  kSubjObjUnion,   // subj + obj + union codes
};

std::string_view to_string(FusionMode mode);
FusionMode fusion_mode_from_string(std::string_view name);  // throws ConfigError

struct ModelConfig {
  std::size_t feature_dim = 64;  // F, width of region features
  std::size_t code_dim = 64;     // D, region code width
  std::size_t hidden = 128;
  std::size_t embed = 64;
  std::size_t geo_dim = 64;
  FusionMode fusion = FusionMode::kTripleStream;
  bool use_pos_loss = true;
  double alpha = 0.1;  // POS
  double beta = 0.1;   // objectness
  double gamma = 0.1;  // box regression
  std::size_t max_caption_len = 12;

  void validate() const;  // throws ConfigError

  /// Large configuration with 512-wide region codes.
  static ModelConfig large_preset();
};

std::size_t stream_count(FusionMode mode);
/// Width of the region-code part of each stream's LSTM input.
std::size_t context_width(const ModelConfig& config);
/// Full LSTM input width (word embedding + codes).
std::size_t lstm_input_width(const ModelConfig& config);

struct Linear {
  Tensor weight;  // [in x out]
  Tensor bias;    // [out]

  Tensor operator()(const Tensor& x) const;
};

/// LSTM whose input is [word embedding, region codes]. The input projection
/// is split by input part so the constant code part is computed once per
/// sequence.
struct LstmParams {
  Tensor word_weight;       // [embed x 4H]
  Tensor context_weight;    // [context x 4H]
  Tensor recurrent_weight;  // [H x 4H]
  Tensor bias;              // [4H], gate order i, f, g, o
};

struct ModelParams {
  ModelConfig config;
  std::size_t vocab_size = 0;

  Tensor embedding;  // [V x embed]
  Linear region_fc1;  // shared by the subject and object streams
  Linear subject_fc2;
  Linear object_fc2;
  Linear union_feature_fc;
  Linear geometry_fc;  // [6 x geo_dim]
  Linear union_fc;     // [(D + geo_dim) x D]
  std::vector<LstmParams> streams;
  Linear word_head;
  Linear pos_head;
  Linear objectness;  // [F x 1]
  Linear box_deltas;  // [F x 4]

  static ModelParams initialize(const ModelConfig& config, std::size_t vocab_size, std::uint64_t seed);
  static ModelParams zeros(const ModelConfig& config, std::size_t vocab_size);

  const Tensor& subject_fc1_weight() const { return region_fc1.weight; }
  const Tensor& object_fc1_weight() const { return region_fc1.weight; }

  /// Every tensor under a stable name, in a fixed order.
  std::vector<std::pair<std::string, Tensor>> named_tensors() const;
  std::vector<Tensor> tensors() const;
  void zero_grad() const;
};

/// Ordered (subject, object) index pairs over n proposals, lexicographic.
std::vector<std::pair<std::size_t, std::size_t>> pair_combinations(std::size_t n);

/// Inputs for one region pair.
struct PairInput {
  std::vector<double> subject_feature;
  std::vector<double> object_feature;
  std::vector<double> union_feature;
  Box subject_box;
  Box object_box;
};

struct PairBatch {
  Tensor subject_features;  // [B x F]
  Tensor object_features;   // [B x F]
  Tensor union_features;    // [B x F]
  Tensor geometry;          // [B x 6], constant
  std::size_t size() const { return subject_features.rows(); }
};

PairBatch make_pair_batch(std::span<const PairInput> pairs);

struct RegionCodes {
  Tensor subject;
  Tensor object;
};

/// subject = FC2_s(relu(FC1(f_s))), object = FC2_o(relu(FC1(f_o))).
RegionCodes encode_regions(const Tensor& subject_features, const Tensor& object_features,
                           const ModelParams& params);

/// Embedded geometric feature relu(FC_geo(r)), [B x geo_dim].
Tensor encode_geometry(const Tensor& geometry, const ModelParams& params);

/// FC_u(concat(relu(FC_feat(union)), relu(FC_geo(r)))), reduced back to D.
Tensor encode_union(const Tensor& union_features, const Tensor& geometry, const ModelParams& params);

struct PairCodes {
  Tensor subject;
  Tensor object;
  Tensor union_code;
  Tensor geometry;  // embedded geometric feature
  std::size_t size() const { return (subject.defined() ? subject : union_code).rows(); }
};

PairCodes encode_pairs(const PairBatch& batch, const ModelParams& params);

/// Per-stream gate pre-activations contributed by the region codes.
struct DecoderContext {
  std::vector<Tensor> stream_gates;  // one [B x 4H] per stream
  std::size_t size() const { return stream_gates.front().rows(); }
};

DecoderContext prepare_context(const PairCodes& codes, const ModelParams& params);
/// Row selection, e.g. to score several queries against the same pairs.
DecoderContext select_rows(const DecoderContext& context, std::span<const std::size_t> rows);

struct DecoderState {
  std::vector<Tensor> h;
  std::vector<Tensor> c;
};

DecoderState initial_state(const ModelParams& params, std::size_t batch);

struct StepOutput {
  Tensor word_logits;  // [B x V]
  Tensor pos_logits;   // [B x 3]
  DecoderState state;
};

/// One decoding step of any architecture.
StepOutput decode_step(std::span<const TokenId> words, const DecoderState& state, const DecoderContext& context,
                       const ModelParams& params);

/// Three LSTMs (subj, union, obj) all fed the word embedding; their hidden
/// states are concatenated before the word and POS heads.
StepOutput triple_stream_decode_step(std::span<const TokenId> words, const DecoderState& state,
                                     const DecoderContext& context, const ModelParams& params);

/// Single LSTM over [embedding, fused codes]. Throws ConfigError for the
/// triple-stream mode.
StepOutput early_fusion_decode_step(std::span<const TokenId> words, const DecoderState& state,
                                    const DecoderContext& context, const ModelParams& params);

struct CaptionLosses {
  Tensor caption;  // mean over captions of mean per-step word cross entropy (tokens + EOS)
  Tensor pos;      // mean over captions of mean per-token 3-class cross entropy
};

/// Teacher forcing: step inputs are SOS then the ground-truth words.
CaptionLosses teacher_forced_loss(const DecoderContext& context, std::span<const TaggedCaption> captions,
                                  const ModelParams& params);

/// Fast R-CNN style offsets of `target` relative to `proposal`:
/// ((gx-px)/pw, (gy-py)/ph, log(gw/pw), log(gh/ph)).
std::array<double, 4> box_deltas(const Box& proposal, const Box& target);
Box apply_deltas(const Box& proposal, std::span<const double> deltas);

inline constexpr double kForegroundIou = 0.5;

struct DetectionTargets {
  std::vector<double> labels;   // 1 foreground, 0 background
  std::vector<double> deltas;   // [P x 4], zero rows for background
};

/// Labels each proposal by its best IoU with the ground truth (fg >= 0.5)
/// and computes regression targets for foreground proposals.
DetectionTargets assign_detection_targets(std::span<const Box> proposals, std::span<const Box> gt_boxes);

struct DetectionLosses {
  Tensor objectness;  // mean binary logistic loss over proposals
  Tensor box;         // mean over fg proposals of the 4-coordinate smooth-L1 sum
};

DetectionLosses detection_loss(const Tensor& proposal_features, const DetectionTargets& targets,
                               const ModelParams& params);
DetectionLosses detection_loss(const Tensor& proposal_features, std::span<const Box> proposals,
                               std::span<const Box> gt_boxes, const ModelParams& params);

struct TrainingBatch {
  PairBatch pairs;
  std::vector<TaggedCaption> captions;
  Tensor proposal_features;  // [P x F]; undefined when there are no proposals
  DetectionTargets detection;
};

struct LossBreakdown {
  Tensor caption;
  Tensor pos;
  Tensor objectness;
  Tensor box;
  Tensor total;
};

/// L = L_cap + alpha L_POS + beta L_det + gamma L_box, with the POS term
/// dropped when config.use_pos_loss is false.
Tensor combine_losses(const Tensor& caption, const Tensor& pos, const Tensor& objectness, const Tensor& box,
                      const ModelConfig& config);
LossBreakdown total_loss(const TrainingBatch& batch, const ModelParams& params);

/// Pair inputs for every ground-truth record of a scene.
std::vector<PairInput> record_pair_inputs(const data::Scene& scene);

/// Detection proposals for training: each ground-truth box, one jittered
/// copy per object and `background` boxes, deterministic in seed.
struct Proposal {
  Box box;
  std::vector<double> feature;
};
std::vector<Proposal> sample_training_proposals(const data::Scene& scene, std::uint64_t seed,
                                                std::size_t background = 2);

TrainingBatch build_training_batch(std::span<const data::Scene* const> scenes, const text::Vocabulary& vocab,
                                   std::uint64_t proposal_seed);

struct DecodeOutput {
  std::vector<TokenId> tokens;   // emitted words, EOS excluded
  std::vector<PosTag> pos_tags;  // argmax POS per emitted word
  std::vector<double> log_probs; // per step, including the EOS step when reached
  bool terminated = false;       // EOS was produced
};

/// Argmax decoding (ties to the lower id) from SOS for at most max_len steps.
std::vector<DecodeOutput> greedy_decode(const DecoderContext& context, const ModelParams& params,
                                        std::size_t max_len);

/// Mean per-token word log-probability of each sequence (EOS included),
/// teacher-forced. Row i of the context scores sequences[i].
std::vector<double> sequence_log_likelihood(const DecoderContext& context,
                                            std::span<const std::vector<TokenId>> sequences,
                                            const ModelParams& params);

struct CaptionedPair {
  std::size_t subject = 0;  // index into the scene's objects
  std::size_t object = 0;
  Box subject_box;          // refined
  Box object_box;
  DecodeOutput caption;
  double score = 0.0;       // subject objectness * object objectness
};

struct SceneCaptions {
  std::vector<std::size_t> kept;     // surviving proposals, descending score
  std::vector<Box> kept_boxes;       // refined boxes of kept proposals
  std::vector<double> kept_scores;
  std::vector<CaptionedPair> pairs;  // all ordered pairs of kept proposals
};

inline constexpr std::size_t kDefaultProposalsBeforeNms = 50;

struct ProposalSet {
  std::vector<Box> boxes;
  std::vector<double> scores;
};

/// Scene objects as proposals, refined and scored by the detection head.
ProposalSet score_proposals(const data::Scene& scene, const ModelParams& params);

/// Keeps the top n_before_nms proposals, applies NMS and decodes every
/// ordered pair of survivors.
SceneCaptions caption_scene(const data::Scene& scene, const ModelParams& params,
                            std::size_t n_before_nms = kDefaultProposalsBeforeNms,
                            double nms_iou = geometry::kDefaultNmsIou);

/// Kept proposal indices after truncation and NMS.
std::vector<std::size_t> surviving_proposals(const ProposalSet& proposals, std::size_t n_before_nms,
                                             double nms_iou);

/// Pair inputs for ordered pairs of (refined) proposals.
std::vector<PairInput> proposal_pair_inputs(const data::Scene& scene, std::span<const std::size_t> kept,
                                            std::span<const Box> boxes);

}  // namespace relcap::model
