#include "relcap/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "relcap/errors.hpp"
#include "relcap/ops.hpp"

namespace relcap::model {

namespace ad = relcap::autodiff;

namespace {

constexpr std::size_t kGeometryDims = 6;

struct ModeInfo {
  FusionMode mode;
  std::string_view name;
};

constexpr ModeInfo kModes[] = {
    {FusionMode::kTripleStream, "triple_stream"}, {FusionMode::kEarlyFusion, "early_fusion"},
    {FusionMode::kUnionOnly, "union_only"},       {FusionMode::kSubjObj, "subj_obj"},
    {FusionMode::kSubjObjCoord, "subj_obj_coord"}, {FusionMode::kSubjObjUnion, "subj_obj_union"},
};

bool uses_subject_object(FusionMode m) { return m != FusionMode::kUnionOnly; }
bool uses_union(FusionMode m) {
  return m == FusionMode::kTripleStream || m == FusionMode::kEarlyFusion || m == FusionMode::kUnionOnly ||
         m == FusionMode::kSubjObjUnion;
}

Tensor uniform_tensor(std::mt19937_64& rng, autodiff::Shape shape, double bound) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> values(autodiff::numel(shape));
  for (auto& v : values) v = dist(rng);
  return Tensor::from(std::move(shape), std::move(values), true);
}

Linear make_linear(std::mt19937_64* rng, std::size_t in, std::size_t out) {
  if (!rng) return Linear{Tensor::zeros({in, out}, true), Tensor::zeros({out}, true)};
  double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  return Linear{uniform_tensor(*rng, {in, out}, bound), Tensor::zeros({out}, true)};
}

LstmParams make_lstm(std::mt19937_64* rng, std::size_t embed, std::size_t context, std::size_t hidden) {
  const std::size_t g = 4 * hidden;
  LstmParams p;
  if (!rng) {
    p.word_weight = Tensor::zeros({embed, g}, true);
    p.context_weight = Tensor::zeros({context, g}, true);
    p.recurrent_weight = Tensor::zeros({hidden, g}, true);
    p.bias = Tensor::zeros({g}, true);
    return p;
  }
  double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  p.word_weight = uniform_tensor(*rng, {embed, g}, bound);
  p.context_weight = uniform_tensor(*rng, {context, g}, bound);
  p.recurrent_weight = uniform_tensor(*rng, {hidden, g}, bound);
  std::vector<double> bias(g, 0.0);
  // Forget-gate bias of 1.
  for (std::size_t i = hidden; i < 2 * hidden; ++i) bias[i] = 1.0;
  p.bias = Tensor::from({g}, std::move(bias), true);
  return p;
}

ModelParams build_params(const ModelConfig& config, std::size_t vocab_size, std::mt19937_64* rng) {
  config.validate();
  if (vocab_size <= text::Vocabulary::kNumReserved) {
    throw ConfigError("vocabulary must contain at least one non-reserved token");
  }
  const std::size_t D = config.code_dim, F = config.feature_dim, H = config.hidden, E = config.embed;
  ModelParams p;
  p.config = config;
  p.vocab_size = vocab_size;
  p.embedding = rng ? uniform_tensor(*rng, {vocab_size, E}, 0.1) : Tensor::zeros({vocab_size, E}, true);
  p.region_fc1 = make_linear(rng, F, D);
  p.subject_fc2 = make_linear(rng, D, D);
  p.object_fc2 = make_linear(rng, D, D);
  p.union_feature_fc = make_linear(rng, F, D);
  p.geometry_fc = make_linear(rng, kGeometryDims, config.geo_dim);
  p.union_fc = make_linear(rng, D + config.geo_dim, D);
  const std::size_t streams = stream_count(config.fusion);
  for (std::size_t s = 0; s < streams; ++s) p.streams.push_back(make_lstm(rng, E, context_width(config), H));
  p.word_head = make_linear(rng, streams * H, vocab_size);
  p.pos_head = make_linear(rng, streams * H, text::kNumPosTags);
  // Detection head starts at the identity refinement with score 0.5.
  p.objectness = make_linear(nullptr, F, 1);
  p.box_deltas = make_linear(nullptr, F, 4);
  return p;
}

Tensor zero_scalar() { return Tensor::scalar(0.0); }

void check_feature_width(const Tensor& t, std::size_t width, const char* what) {
  if (t.rank() != 2 || t.cols() != width) {
    throw ShapeError(std::string(what) + ": expected [B x " + std::to_string(width) + "], got " +
                     autodiff::to_string(t.shape()));
  }
}

StepOutput lstm_streams(std::span<const TokenId> words, const DecoderState& state, const DecoderContext& context,
                        const ModelParams& params) {
  const std::size_t B = words.size();
  const std::size_t H = params.config.hidden;
  if (context.stream_gates.size() != params.streams.size() || state.h.size() != params.streams.size()) {
    throw ShapeError("decode_step: stream count mismatch");
  }
  if (context.size() != B) throw ShapeError("decode_step: batch size mismatch between words and context");
  for (TokenId w : words) {
    if (w >= params.vocab_size) {
      throw IndexError("word id " + std::to_string(w) + " out of vocabulary of " + std::to_string(params.vocab_size));
    }
  }
  Tensor emb = ad::gather_rows(params.embedding, words);
  StepOutput out;
  std::vector<Tensor> hidden;
  for (std::size_t s = 0; s < params.streams.size(); ++s) {
    const auto& lstm = params.streams[s];
    if (state.h[s].rows() != B || state.h[s].cols() != H) throw ShapeError("decode_step: state shape mismatch");
    Tensor gates = ad::add(ad::add(ad::matmul(emb, lstm.word_weight), ad::matmul(state.h[s], lstm.recurrent_weight)),
                           context.stream_gates[s]);
    Tensor i = ad::sigmoid(ad::slice(gates, 0, H));
    Tensor f = ad::sigmoid(ad::slice(gates, H, 2 * H));
    Tensor g = ad::tanh(ad::slice(gates, 2 * H, 3 * H));
    Tensor o = ad::sigmoid(ad::slice(gates, 3 * H, 4 * H));
    Tensor c = ad::add(ad::mul(f, state.c[s]), ad::mul(i, g));
    Tensor h = ad::mul(o, ad::tanh(c));
    out.state.h.push_back(h);
    out.state.c.push_back(c);
    hidden.push_back(h);
  }
  Tensor fused = hidden.size() == 1 ? hidden.front() : ad::concat(hidden);
  out.word_logits = params.word_head(fused);
  out.pos_logits = params.pos_head(fused);
  return out;
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::vector<double> flatten_rows(std::span<const std::vector<double>> rows, std::size_t width) {
  std::vector<double> out;
  out.reserve(rows.size() * width);
  for (const auto& r : rows) {
    if (r.size() != width) throw ShapeError("feature width mismatch in batch");
    out.insert(out.end(), r.begin(), r.end());
  }
  return out;
}

}  // namespace

std::string_view to_string(FusionMode mode) {
  for (const auto& m : kModes) {
    if (m.mode == mode) return m.name;
  }
  return "unknown";
}

FusionMode fusion_mode_from_string(std::string_view name) {
  for (const auto& m : kModes) {
    if (m.name == name) return m.mode;
  }
  throw ConfigError("unknown fusion mode '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
  if (feature_dim == 0 || code_dim == 0 || hidden == 0 || embed == 0 || geo_dim == 0) {
    throw ConfigError("model dimensions must be positive");
  }
  for (double w : {alpha, beta, gamma}) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("loss weights must be finite and >= 0");
  }
}

ModelConfig ModelConfig::large_preset() {
  ModelConfig c;
  c.code_dim = 512;
  return c;
}

std::size_t stream_count(FusionMode mode) { return mode == FusionMode::kTripleStream ? 3 : 1; }

std::size_t context_width(const ModelConfig& config) {
  const std::size_t D = config.code_dim;
  switch (config.fusion) {
    case FusionMode::kTripleStream:
    case FusionMode::kUnionOnly:
      return D;
    case FusionMode::kSubjObj:
      return 2 * D;
    case FusionMode::kSubjObjCoord:
      return 2 * D + config.geo_dim;
    case FusionMode::kEarlyFusion:
    case FusionMode::kSubjObjUnion:
      return 3 * D;
  }
  throw ConfigError("unknown fusion mode");
}

std::size_t lstm_input_width(const ModelConfig& config) { return config.embed + context_width(config); }

Tensor Linear::operator()(const Tensor& x) const { return ad::add_bias(ad::matmul(x, weight), bias); }

ModelParams ModelParams::initialize(const ModelConfig& config, std::size_t vocab_size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return build_params(config, vocab_size, &rng);
}

ModelParams ModelParams::zeros(const ModelConfig& config, std::size_t vocab_size) {
  return build_params(config, vocab_size, nullptr);
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named_tensors() const {
  std::vector<std::pair<std::string, Tensor>> out;
  auto linear = [&](const std::string& name, const Linear& l) {
    out.emplace_back(name + ".weight", l.weight);
    out.emplace_back(name + ".bias", l.bias);
  };
  out.emplace_back("embedding", embedding);
  linear("region_fc1", region_fc1);
  linear("subject_fc2", subject_fc2);
  linear("object_fc2", object_fc2);
  linear("union_feature_fc", union_feature_fc);
  linear("geometry_fc", geometry_fc);
  linear("union_fc", union_fc);
  for (std::size_t s = 0; s < streams.size(); ++s) {
    const std::string prefix = "stream" + std::to_string(s);
    out.emplace_back(prefix + ".word_weight", streams[s].word_weight);
    out.emplace_back(prefix + ".context_weight", streams[s].context_weight);
    out.emplace_back(prefix + ".recurrent_weight", streams[s].recurrent_weight);
    out.emplace_back(prefix + ".bias", streams[s].bias);
  }
  linear("word_head", word_head);
  linear("pos_head", pos_head);
  linear("objectness", objectness);
  linear("box_deltas", box_deltas);
  return out;
}

std::vector<Tensor> ModelParams::tensors() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_tensors()) out.push_back(t);
  return out;
}

void ModelParams::zero_grad() const {
  for (auto t : tensors()) t.zero_grad();
}

std::vector<std::pair<std::size_t, std::size_t>> pair_combinations(std::size_t n) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  if (n < 2) return pairs;
  pairs.reserve(n * (n - 1));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j) pairs.emplace_back(i, j);
    }
  }
  return pairs;
}

PairBatch make_pair_batch(std::span<const PairInput> pairs) {
  if (pairs.empty()) throw ShapeError("make_pair_batch: empty batch");
  const std::size_t F = pairs.front().subject_feature.size();
  std::vector<std::vector<double>> subj, obj, uni;
  std::vector<double> geo;
  for (const auto& p : pairs) {
    subj.push_back(p.subject_feature);
    obj.push_back(p.object_feature);
    uni.push_back(p.union_feature);
    auto r = geometry::geometric_feature(p.subject_box, p.object_box);
    geo.insert(geo.end(), r.begin(), r.end());
  }
  const std::size_t B = pairs.size();
  return PairBatch{Tensor::from({B, F}, flatten_rows(subj, F)), Tensor::from({B, F}, flatten_rows(obj, F)),
                   Tensor::from({B, F}, flatten_rows(uni, F)), Tensor::from({B, kGeometryDims}, std::move(geo))};
}

RegionCodes encode_regions(const Tensor& subject_features, const Tensor& object_features,
                           const ModelParams& params) {
  check_feature_width(subject_features, params.config.feature_dim, "encode_regions subject");
  check_feature_width(object_features, params.config.feature_dim, "encode_regions object");
  Tensor s = params.subject_fc2(ad::relu(params.region_fc1(subject_features)));
  Tensor o = params.object_fc2(ad::relu(params.region_fc1(object_features)));
  return RegionCodes{s, o};
}

Tensor encode_geometry(const Tensor& geometry, const ModelParams& params) {
  check_feature_width(geometry, kGeometryDims, "encode_geometry");
  return ad::relu(params.geometry_fc(geometry));
}

Tensor encode_union(const Tensor& union_features, const Tensor& geometry, const ModelParams& params) {
  check_feature_width(union_features, params.config.feature_dim, "encode_union");
  Tensor appearance = ad::relu(params.union_feature_fc(union_features));
  return params.union_fc(ad::concat({appearance, encode_geometry(geometry, params)}));
}

PairCodes encode_pairs(const PairBatch& batch, const ModelParams& params) {
  PairCodes codes;
  const FusionMode mode = params.config.fusion;
  if (uses_subject_object(mode)) {
    auto rc = encode_regions(batch.subject_features, batch.object_features, params);
    codes.subject = rc.subject;
    codes.object = rc.object;
  }
  if (uses_union(mode)) codes.union_code = encode_union(batch.union_features, batch.geometry, params);
  if (mode == FusionMode::kSubjObjCoord) codes.geometry = encode_geometry(batch.geometry, params);
  return codes;
}

DecoderContext prepare_context(const PairCodes& codes, const ModelParams& params) {
  DecoderContext ctx;
  auto project = [&](const Tensor& input, const LstmParams& lstm) {
    return ad::add_bias(ad::matmul(input, lstm.context_weight), lstm.bias);
  };
  switch (params.config.fusion) {
    case FusionMode::kTripleStream:
      ctx.stream_gates.push_back(project(codes.subject, params.streams[0]));
      ctx.stream_gates.push_back(project(codes.union_code, params.streams[1]));
      ctx.stream_gates.push_back(project(codes.object, params.streams[2]));
      break;
    case FusionMode::kUnionOnly:
      ctx.stream_gates.push_back(project(codes.union_code, params.streams[0]));
      break;
    case FusionMode::kSubjObj:
      ctx.stream_gates.push_back(project(ad::concat({codes.subject, codes.object}), params.streams[0]));
      break;
    case FusionMode::kSubjObjCoord:
      ctx.stream_gates.push_back(
          project(ad::concat({codes.subject, codes.object, codes.geometry}), params.streams[0]));
      break;
    case FusionMode::kEarlyFusion:
    case FusionMode::kSubjObjUnion:
      ctx.stream_gates.push_back(
          project(ad::concat({codes.subject, codes.union_code, codes.object}), params.streams[0]));
      break;
  }
  return ctx;
}

DecoderContext select_rows(const DecoderContext& context, std::span<const std::size_t> rows) {
  DecoderContext out;
  for (const auto& g : context.stream_gates) out.stream_gates.push_back(ad::gather_rows(g, rows));
  return out;
}

DecoderState initial_state(const ModelParams& params, std::size_t batch) {
  DecoderState s;
  for (std::size_t i = 0; i < params.streams.size(); ++i) {
    s.h.push_back(Tensor::zeros({batch, params.config.hidden}));
    s.c.push_back(Tensor::zeros({batch, params.config.hidden}));
  }
  return s;
}

StepOutput decode_step(std::span<const TokenId> words, const DecoderState& state, const DecoderContext& context,
                       const ModelParams& params) {
  if (params.config.fusion == FusionMode::kTripleStream) {
    return triple_stream_decode_step(words, state, context, params);
  }
  return early_fusion_decode_step(words, state, context, params);
}

StepOutput triple_stream_decode_step(std::span<const TokenId> words, const DecoderState& state,
                                     const DecoderContext& context, const ModelParams& params) {
  if (params.config.fusion != FusionMode::kTripleStream) {
    throw ConfigError("triple_stream_decode_step called for fusion mode " + std::string(to_string(params.config.fusion)));
  }
  return lstm_streams(words, state, context, params);
}

StepOutput early_fusion_decode_step(std::span<const TokenId> words, const DecoderState& state,
                                    const DecoderContext& context, const ModelParams& params) {
  if (params.config.fusion == FusionMode::kTripleStream) {
    throw ConfigError("early_fusion_decode_step requires an early-fusion mode");
  }
  return lstm_streams(words, state, context, params);
}

CaptionLosses teacher_forced_loss(const DecoderContext& context, std::span<const TaggedCaption> captions,
                                  const ModelParams& params) {
  const std::size_t B = captions.size();
  if (B == 0) throw ContractError("teacher_forced_loss: no captions");
  if (context.size() != B) throw ShapeError("teacher_forced_loss: context rows do not match captions");
  std::size_t longest = 0;
  for (const auto& c : captions) {
    if (c.tokens.empty()) throw ContractError("teacher_forced_loss: empty ground-truth caption");
    if (c.tokens.size() != c.tags.size()) throw ContractError("teacher_forced_loss: token/tag length mismatch");
    for (TokenId t : c.tokens) {
      if (t >= params.vocab_size) throw IndexError("caption token id out of vocabulary");
    }
    longest = std::max(longest, c.tokens.size());
  }
  const double inv_b = 1.0 / static_cast<double>(B);
  DecoderState state = initial_state(params, B);
  Tensor caption_loss, pos_loss;
  std::vector<TokenId> inputs(B), word_targets(B), pos_targets(B);
  std::vector<double> word_weights(B), pos_weights(B);
  for (std::size_t t = 0; t <= longest; ++t) {
    bool any_pos = false;
    for (std::size_t b = 0; b < B; ++b) {
      const auto& cap = captions[b];
      const std::size_t len = cap.tokens.size();
      inputs[b] = t == 0 ? text::Vocabulary::kSos : (t - 1 < len ? cap.tokens[t - 1] : text::Vocabulary::kPad);
      if (t < len) {
        word_targets[b] = cap.tokens[t];
        word_weights[b] = inv_b / static_cast<double>(len + 1);
        pos_targets[b] = static_cast<std::size_t>(cap.tags[t]);
        pos_weights[b] = inv_b / static_cast<double>(len);
        any_pos = true;
      } else if (t == len) {
        word_targets[b] = text::Vocabulary::kEos;
        word_weights[b] = inv_b / static_cast<double>(len + 1);
        pos_targets[b] = 0;
        pos_weights[b] = 0.0;
      } else {
        word_targets[b] = 0;
        word_weights[b] = 0.0;
        pos_targets[b] = 0;
        pos_weights[b] = 0.0;
      }
    }
    StepOutput step = decode_step(inputs, state, context, params);
    Tensor ce = ad::cross_entropy_rows(step.word_logits, word_targets, word_weights);
    caption_loss = caption_loss.defined() ? ad::add(caption_loss, ce) : ce;
    if (any_pos) {
      Tensor pce = ad::cross_entropy_rows(step.pos_logits, pos_targets, pos_weights);
      pos_loss = pos_loss.defined() ? ad::add(pos_loss, pce) : pce;
    }
    state = std::move(step.state);
  }
  return CaptionLosses{caption_loss, pos_loss};
}

std::array<double, 4> box_deltas(const Box& p, const Box& g) {
  return {(g.x() - p.x()) / p.w(), (g.y() - p.y()) / p.h(), std::log(g.w() / p.w()), std::log(g.h() / p.h())};
}

Box apply_deltas(const Box& p, std::span<const double> d) {
  if (d.size() != 4) throw ShapeError("apply_deltas expects 4 offsets");
  return Box(p.x() + d[0] * p.w(), p.y() + d[1] * p.h(), p.w() * std::exp(d[2]), p.h() * std::exp(d[3]));
}

DetectionTargets assign_detection_targets(std::span<const Box> proposals, std::span<const Box> gt_boxes) {
  DetectionTargets t;
  t.labels.assign(proposals.size(), 0.0);
  t.deltas.assign(proposals.size() * 4, 0.0);
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    double best = -1.0;
    std::size_t best_j = 0;
    for (std::size_t j = 0; j < gt_boxes.size(); ++j) {
      double overlap = geometry::iou(proposals[i], gt_boxes[j]);
      if (overlap > best) {
        best = overlap;
        best_j = j;
      }
    }
    if (best >= kForegroundIou) {
      t.labels[i] = 1.0;
      auto d = box_deltas(proposals[i], gt_boxes[best_j]);
      std::copy(d.begin(), d.end(), t.deltas.begin() + static_cast<std::ptrdiff_t>(i * 4));
    }
  }
  return t;
}

DetectionLosses detection_loss(const Tensor& proposal_features, const DetectionTargets& targets,
                               const ModelParams& params) {
  const std::size_t P = targets.labels.size();
  if (P == 0) return DetectionLosses{zero_scalar(), zero_scalar()};
  check_feature_width(proposal_features, params.config.feature_dim, "detection_loss");
  if (proposal_features.rows() != P || targets.deltas.size() != 4 * P) {
    throw ShapeError("detection_loss: proposal count mismatch");
  }
  std::vector<double> det_weights(P, 1.0 / static_cast<double>(P));
  Tensor logits = params.objectness(proposal_features);
  Tensor l_det = ad::logistic_loss(logits, targets.labels, det_weights);
  const double n_fg = std::accumulate(targets.labels.begin(), targets.labels.end(), 0.0);
  if (n_fg == 0.0) return DetectionLosses{l_det, zero_scalar()};
  std::vector<double> box_weights(P);
  for (std::size_t i = 0; i < P; ++i) box_weights[i] = targets.labels[i] / n_fg;
  Tensor l_box = ad::smooth_l1(params.box_deltas(proposal_features), targets.deltas, box_weights);
  return DetectionLosses{l_det, l_box};
}

DetectionLosses detection_loss(const Tensor& proposal_features, std::span<const Box> proposals,
                               std::span<const Box> gt_boxes, const ModelParams& params) {
  return detection_loss(proposal_features, assign_detection_targets(proposals, gt_boxes), params);
}

Tensor combine_losses(const Tensor& caption, const Tensor& pos, const Tensor& objectness, const Tensor& box,
                      const ModelConfig& config) {
  Tensor total = caption;
  if (config.use_pos_loss && pos.defined()) total = ad::add(total, ad::scale(pos, config.alpha));
  total = ad::add(total, ad::scale(objectness, config.beta));
  total = ad::add(total, ad::scale(box, config.gamma));
  return total;
}

LossBreakdown total_loss(const TrainingBatch& batch, const ModelParams& params) {
  LossBreakdown out;
  PairCodes codes = encode_pairs(batch.pairs, params);
  DecoderContext ctx = prepare_context(codes, params);
  auto cap = teacher_forced_loss(ctx, batch.captions, params);
  out.caption = cap.caption;
  out.pos = cap.pos.defined() ? cap.pos : zero_scalar();
  if (batch.proposal_features.defined()) {
    auto det = detection_loss(batch.proposal_features, batch.detection, params);
    out.objectness = det.objectness;
    out.box = det.box;
  } else {
    out.objectness = zero_scalar();
    out.box = zero_scalar();
  }
  out.total = combine_losses(out.caption, out.pos, out.objectness, out.box, params.config);
  return out;
}

std::vector<PairInput> record_pair_inputs(const data::Scene& scene) {
  std::vector<PairInput> out;
  out.reserve(scene.records.size());
  for (const auto& rec : scene.records) {
    const auto& s = scene.objects.at(rec.subject);
    const auto& o = scene.objects.at(rec.object);
    out.push_back(PairInput{s.feature, o.feature, data::region_feature(scene, geometry::union_box(s.box, o.box)),
                            s.box, o.box});
  }
  return out;
}

std::vector<Proposal> sample_training_proposals(const data::Scene& scene, std::uint64_t seed,
                                                std::size_t background) {
  std::mt19937_64 rng(seed ^ fnv1a(scene.id));
  std::normal_distribution<double> jitter(0.0, 0.1);
  std::vector<Proposal> out;
  for (const auto& obj : scene.objects) out.push_back(Proposal{obj.box, obj.feature});
  for (const auto& obj : scene.objects) {
    const Box& b = obj.box;
    Box j(b.x() + jitter(rng) * b.w(), b.y() + jitter(rng) * b.h(), b.w() * std::exp(jitter(rng)),
          b.h() * std::exp(jitter(rng)));
    out.push_back(Proposal{j, data::region_feature(scene, j)});
  }
  std::uniform_real_distribution<double> extent(0.1, 0.4);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t n = 0; n < background; ++n) {
    for (int attempt = 0; attempt < 50; ++attempt) {
      double w = extent(rng), h = extent(rng);
      Box b(0.5 * w + unit(rng) * (1.0 - w), 0.5 * h + unit(rng) * (1.0 - h), w, h);
      bool clear = std::all_of(scene.objects.begin(), scene.objects.end(),
                               [&](const data::SceneObject& o) { return geometry::iou(b, o.box) < 0.3; });
      if (clear) {
        out.push_back(Proposal{b, data::region_feature(scene, b)});
        break;
      }
    }
  }
  return out;
}

TrainingBatch build_training_batch(std::span<const data::Scene* const> scenes, const text::Vocabulary& vocab,
                                   std::uint64_t proposal_seed) {
  std::vector<PairInput> pairs;
  TrainingBatch batch;
  std::vector<std::vector<double>> proposal_features;
  for (const data::Scene* scene : scenes) {
    auto inputs = record_pair_inputs(*scene);
    pairs.insert(pairs.end(), inputs.begin(), inputs.end());
    for (const auto& rec : scene->records) batch.captions.push_back(vocab.encode(rec.caption));

    auto proposals = sample_training_proposals(*scene, proposal_seed);
    std::vector<Box> boxes, gt;
    for (const auto& p : proposals) {
      boxes.push_back(p.box);
      proposal_features.push_back(p.feature);
    }
    for (const auto& o : scene->objects) gt.push_back(o.box);
    auto targets = assign_detection_targets(boxes, gt);
    batch.detection.labels.insert(batch.detection.labels.end(), targets.labels.begin(), targets.labels.end());
    batch.detection.deltas.insert(batch.detection.deltas.end(), targets.deltas.begin(), targets.deltas.end());
  }
  if (pairs.empty()) throw ContractError("build_training_batch: scenes carry no relation records");
  batch.pairs = make_pair_batch(pairs);
  if (!proposal_features.empty()) {
    const std::size_t F = proposal_features.front().size();
    batch.proposal_features = Tensor::from({proposal_features.size(), F}, flatten_rows(proposal_features, F));
  }
  return batch;
}

std::vector<DecodeOutput> greedy_decode(const DecoderContext& context, const ModelParams& params,
                                        std::size_t max_len) {
  autodiff::NoGradGuard no_grad;
  const std::size_t B = context.size();
  std::vector<DecodeOutput> out(B);
  if (max_len == 0) return out;
  DecoderState state = initial_state(params, B);
  std::vector<TokenId> inputs(B, text::Vocabulary::kSos);
  std::vector<bool> done(B, false);
  const std::size_t V = params.vocab_size;
  for (std::size_t t = 0; t < max_len; ++t) {
    StepOutput step = decode_step(inputs, state, context, params);
    auto logits = step.word_logits.data();
    auto pos = step.pos_logits.data();
    bool all_done = true;
    for (std::size_t b = 0; b < B; ++b) {
      if (done[b]) {
        inputs[b] = text::Vocabulary::kEos;
        continue;
      }
      auto row = logits.subspan(b * V, V);
      auto word = static_cast<TokenId>(std::max_element(row.begin(), row.end()) - row.begin());
      auto logp = autodiff::log_softmax(row);
      out[b].log_probs.push_back(logp[word]);
      inputs[b] = word;
      if (word == text::Vocabulary::kEos) {
        out[b].terminated = true;
        done[b] = true;
        continue;
      }
      auto prow = pos.subspan(b * text::kNumPosTags, text::kNumPosTags);
      auto tag = static_cast<std::size_t>(std::max_element(prow.begin(), prow.end()) - prow.begin());
      out[b].tokens.push_back(word);
      out[b].pos_tags.push_back(text::pos_tag_from_index(tag));
      all_done = false;
    }
    if (all_done) break;
    state = std::move(step.state);
  }
  return out;
}

std::vector<double> sequence_log_likelihood(const DecoderContext& context,
                                            std::span<const std::vector<TokenId>> sequences,
                                            const ModelParams& params) {
  autodiff::NoGradGuard no_grad;
  const std::size_t B = sequences.size();
  if (context.size() != B) throw ShapeError("sequence_log_likelihood: context rows do not match sequences");
  std::size_t longest = 0;
  for (const auto& s : sequences) longest = std::max(longest, s.size());
  std::vector<double> total(B, 0.0);
  DecoderState state = initial_state(params, B);
  std::vector<TokenId> inputs(B);
  const std::size_t V = params.vocab_size;
  for (std::size_t t = 0; t <= longest; ++t) {
    for (std::size_t b = 0; b < B; ++b) {
      const auto& seq = sequences[b];
      inputs[b] = t == 0 ? text::Vocabulary::kSos : (t - 1 < seq.size() ? seq[t - 1] : text::Vocabulary::kPad);
    }
    StepOutput step = decode_step(inputs, state, context, params);
    auto logits = step.word_logits.data();
    for (std::size_t b = 0; b < B; ++b) {
      const auto& seq = sequences[b];
      if (t > seq.size()) continue;
      TokenId target = t < seq.size() ? seq[t] : text::Vocabulary::kEos;
      auto logp = autodiff::log_softmax(logits.subspan(b * V, V));
      total[b] += logp[target];
    }
    state = std::move(step.state);
  }
  for (std::size_t b = 0; b < B; ++b) total[b] /= static_cast<double>(sequences[b].size() + 1);
  return total;
}

ProposalSet score_proposals(const data::Scene& scene, const ModelParams& params) {
  autodiff::NoGradGuard no_grad;
  const std::size_t K = scene.objects.size();
  const std::size_t F = params.config.feature_dim;
  std::vector<double> feats;
  for (const auto& o : scene.objects) {
    if (o.feature.size() != F) {
      throw ShapeError("scene '" + scene.id + "' feature width " + std::to_string(o.feature.size()) +
                       " does not match model feature_dim " + std::to_string(F));
    }
    feats.insert(feats.end(), o.feature.begin(), o.feature.end());
  }
  Tensor features = Tensor::from({K, F}, std::move(feats));
  const Tensor logit_tensor = params.objectness(features);
  const Tensor delta_tensor = params.box_deltas(features);
  auto logits = logit_tensor.data();
  auto deltas = delta_tensor.data();
  ProposalSet out;
  for (std::size_t i = 0; i < K; ++i) {
    out.boxes.push_back(apply_deltas(scene.objects[i].box, deltas.subspan(i * 4, 4)));
    out.scores.push_back(1.0 / (1.0 + std::exp(-logits[i])));
  }
  return out;
}

std::vector<std::size_t> surviving_proposals(const ProposalSet& proposals, std::size_t n_before_nms,
                                             double nms_iou) {
  std::vector<std::size_t> order(proposals.boxes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return proposals.scores[a] > proposals.scores[b]; });
  if (order.size() > n_before_nms) order.resize(n_before_nms);
  std::vector<geometry::ScoredBox> candidates;
  for (std::size_t idx : order) candidates.push_back({proposals.boxes[idx], proposals.scores[idx]});
  std::vector<std::size_t> kept;
  for (std::size_t k : geometry::nms(candidates, nms_iou)) kept.push_back(order[k]);
  return kept;
}

std::vector<PairInput> proposal_pair_inputs(const data::Scene& scene, std::span<const std::size_t> kept,
                                            std::span<const Box> boxes) {
  std::vector<PairInput> out;
  for (auto [a, b] : pair_combinations(kept.size())) {
    const std::size_t s = kept[a], o = kept[b];
    out.push_back(PairInput{scene.objects[s].feature, scene.objects[o].feature,
                            data::region_feature(scene, geometry::union_box(boxes[s], boxes[o])), boxes[s],
                            boxes[o]});
  }
  return out;
}

SceneCaptions caption_scene(const data::Scene& scene, const ModelParams& params, std::size_t n_before_nms,
                            double nms_iou) {
  autodiff::NoGradGuard no_grad;
  SceneCaptions out;
  ProposalSet proposals = score_proposals(scene, params);
  out.kept = surviving_proposals(proposals, n_before_nms, nms_iou);
  for (std::size_t k : out.kept) {
    out.kept_boxes.push_back(proposals.boxes[k]);
    out.kept_scores.push_back(proposals.scores[k]);
  }
  if (out.kept.size() < 2) return out;
  auto inputs = proposal_pair_inputs(scene, out.kept, proposals.boxes);
  PairBatch batch = make_pair_batch(inputs);
  DecoderContext ctx = prepare_context(encode_pairs(batch, params), params);
  auto decoded = greedy_decode(ctx, params, params.config.max_caption_len);
  auto pairs = pair_combinations(out.kept.size());
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const std::size_t s = out.kept[pairs[p].first], o = out.kept[pairs[p].second];
    out.pairs.push_back(CaptionedPair{s, o, proposals.boxes[s], proposals.boxes[o], std::move(decoded[p]),
                                      proposals.scores[s] * proposals.scores[o]});
  }
  return out;
}

}  // namespace relcap::model
