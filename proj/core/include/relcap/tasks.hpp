#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "relcap/data.hpp"
#include "relcap/model.hpp"
#include "relcap/text.hpp"

namespace relcap::tasks {

using geometry::Box;

struct GraphNode {
  std::size_t object = 0;  // index into the scene's objects
  Box box;
  std::string label;
  double label_score = 0.0;                // pair score of the caption the label came from
  std::vector<std::string> alternatives;   // other labels decoded for this box
};

struct GraphEdge {
  std::size_t from = 0;  // node indices
  std::size_t to = 0;
  std::string label;
  double score = 0.0;
};

struct CaptionGraph {
  std::vector<GraphNode> nodes;
  std::vector<GraphEdge> edges;
};

/// Decodes every ordered pair of ground-truth boxes and assembles the
/// subject/object spans into labeled nodes and the predicate spans into
/// directed edges. A box labeled by several captions keeps the span of its
/// highest-scoring caption. Empty spans become "unk".
CaptionGraph build_caption_graph(const data::Scene& scene, const model::ModelParams& params,
                                 const text::Vocabulary& vocab);

/// Graphviz DOT text with nodes n0..n{k-1} in node order.
std::string emit_dot(const CaptionGraph& graph);

struct RetrievalQuery {
  std::vector<std::string> tokens;
  std::size_t source_image = 0;  // index into the retrieval pool
};

/// Mean per-token log-likelihood (EOS included) of the query under every
/// region pair of the context.
std::vector<double> retrieval_score(std::span<const text::TokenId> query, const model::DecoderContext& pairs,
                                    const model::ModelParams& params);

struct RetrievalOptions {
  std::size_t n_before_nms = 100;
  double nms_iou = geometry::kDefaultNmsIou;
  std::size_t jobs = 1;
};

struct RetrievalResult {
  double r1 = 0.0;
  double r5 = 0.0;
  double r10 = 0.0;
  double median_rank = 0.0;
  std::vector<std::size_t> ranks;  // 1-based rank of each query's source image
};

/// Ranks of the source images given a [query][image] score matrix. Higher is
/// better; ties go to the lower image index.
RetrievalResult rank_images(const std::vector<std::vector<double>>& scores, std::span<const RetrievalQuery> queries);

/// Image score = max over its region pairs of retrieval_score.
std::vector<std::vector<double>> image_scores(std::span<const RetrievalQuery> queries,
                                              std::span<const data::Scene> pool, const model::ModelParams& params,
                                              const text::Vocabulary& vocab, const RetrievalOptions& options = {});

RetrievalResult retrieve(std::span<const RetrievalQuery> queries, std::span<const data::Scene> pool,
                         const model::ModelParams& params, const text::Vocabulary& vocab,
                         const RetrievalOptions& options = {});

/// Samples up to n_queries ground-truth captions, per_image from each of
/// randomly chosen pool images, deterministic in seed.
std::vector<RetrievalQuery> sample_queries(std::span<const data::Scene> pool, std::size_t n_queries,
                                           std::size_t per_image, std::uint64_t seed);

std::string to_json(const RetrievalResult& result);

}  // namespace relcap::tasks
