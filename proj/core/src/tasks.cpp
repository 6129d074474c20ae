#include "relcap/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <json.hpp>
#include <limits>
#include <numeric>
#include <random>
#include <thread>

#include "relcap/errors.hpp"

namespace relcap::tasks {

namespace {

using text::PosTag;

std::string span_label(const text::Vocabulary& vocab, const model::DecodeOutput& out, PosTag tag) {
  std::vector<std::string> words;
  for (std::size_t i = 0; i < out.tokens.size(); ++i) {
    if (out.pos_tags[i] == tag) words.push_back(vocab.token(out.tokens[i]));
  }
  return words.empty() ? std::string("unk") : text::join(words);
}

std::string escape_dot(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out.push_back(c);
  }
  return out;
}

void offer_label(GraphNode& node, const std::string& label, double score) {
  if (node.label.empty() || score > node.label_score) {
    if (!node.label.empty() && node.label != label) node.alternatives.push_back(node.label);
    node.label = label;
    node.label_score = score;
  } else if (label != node.label) {
    node.alternatives.push_back(label);
  }
}

}  // namespace

CaptionGraph build_caption_graph(const data::Scene& scene, const model::ModelParams& params,
                                 const text::Vocabulary& vocab) {
  CaptionGraph graph;
  const std::size_t k = scene.objects.size();
  if (k < 2) return graph;
  autodiff::NoGradGuard no_grad;
  auto proposals = model::score_proposals(scene, params);
  std::vector<std::size_t> all(k);
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<Box> gt_boxes;
  for (const auto& o : scene.objects) gt_boxes.push_back(o.box);
  auto inputs = model::proposal_pair_inputs(scene, all, gt_boxes);
  auto batch = model::make_pair_batch(inputs);
  auto ctx = model::prepare_context(model::encode_pairs(batch, params), params);
  auto decoded = model::greedy_decode(ctx, params, params.config.max_caption_len);

  for (std::size_t i = 0; i < k; ++i) graph.nodes.push_back(GraphNode{i, scene.objects[i].box, "", 0.0, {}});
  auto pairs = model::pair_combinations(k);
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    auto [s, o] = pairs[p];
    const double score = proposals.scores[s] * proposals.scores[o];
    offer_label(graph.nodes[s], span_label(vocab, decoded[p], PosTag::kSubject), score);
    offer_label(graph.nodes[o], span_label(vocab, decoded[p], PosTag::kObject), score);
    graph.edges.push_back(GraphEdge{s, o, span_label(vocab, decoded[p], PosTag::kPredicate), score});
  }
  for (auto& node : graph.nodes) {
    std::sort(node.alternatives.begin(), node.alternatives.end());
    node.alternatives.erase(std::unique(node.alternatives.begin(), node.alternatives.end()), node.alternatives.end());
  }
  return graph;
}

std::string emit_dot(const CaptionGraph& graph) {
  if (graph.nodes.empty() && graph.edges.empty()) return "digraph g { }\n";
  std::string out = "digraph g {\n";
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    out += "  n" + std::to_string(i) + " [label=\"" + escape_dot(graph.nodes[i].label) + "\"];\n";
  }
  for (const auto& e : graph.edges) {
    out += "  n" + std::to_string(e.from) + " -> n" + std::to_string(e.to) + " [label=\"" + escape_dot(e.label) +
           "\"];\n";
  }
  out += "}\n";
  return out;
}

std::vector<double> retrieval_score(std::span<const text::TokenId> query, const model::DecoderContext& pairs,
                                    const model::ModelParams& params) {
  if (query.empty()) throw ContractError("retrieval query must be non-empty");
  std::vector<std::vector<text::TokenId>> sequences(pairs.size(), std::vector<text::TokenId>(query.begin(), query.end()));
  return model::sequence_log_likelihood(pairs, sequences, params);
}

RetrievalResult rank_images(const std::vector<std::vector<double>>& scores, std::span<const RetrievalQuery> queries) {
  RetrievalResult result;
  if (queries.empty()) return result;
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const auto& row = scores.at(q);
    const std::size_t src = queries[q].source_image;
    if (src >= row.size()) throw ContractError("query source image is not in the retrieval pool");
    std::size_t rank = 1;
    for (std::size_t img = 0; img < row.size(); ++img) {
      if (img == src) continue;
      if (row[img] > row[src] || (row[img] == row[src] && img < src)) ++rank;
    }
    result.ranks.push_back(rank);
  }
  const double n = static_cast<double>(queries.size());
  auto recall_at = [&](std::size_t k) {
    return static_cast<double>(std::count_if(result.ranks.begin(), result.ranks.end(),
                                             [k](std::size_t r) { return r <= k; })) /
           n;
  };
  result.r1 = recall_at(1);
  result.r5 = recall_at(5);
  result.r10 = recall_at(10);
  std::vector<std::size_t> sorted = result.ranks;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t mid = sorted.size() / 2;
  result.median_rank = sorted.size() % 2 == 1 ? static_cast<double>(sorted[mid])
                                              : 0.5 * static_cast<double>(sorted[mid - 1] + sorted[mid]);
  return result;
}

std::vector<std::vector<double>> image_scores(std::span<const RetrievalQuery> queries,
                                              std::span<const data::Scene> pool, const model::ModelParams& params,
                                              const text::Vocabulary& vocab, const RetrievalOptions& options) {
  const std::size_t Q = queries.size();
  std::vector<std::vector<text::TokenId>> encoded;
  for (const auto& q : queries) {
    if (q.tokens.empty()) throw ContractError("retrieval query must be non-empty");
    encoded.push_back(vocab.encode(q.tokens));
  }
  std::vector<std::vector<double>> scores(Q, std::vector<double>(pool.size(), -std::numeric_limits<double>::infinity()));

  auto score_image = [&](std::size_t img) {
    autodiff::NoGradGuard no_grad;
    const auto& scene = pool[img];
    auto proposals = model::score_proposals(scene, params);
    auto kept = model::surviving_proposals(proposals, options.n_before_nms, options.nms_iou);
    if (kept.size() < 2) return;
    auto inputs = model::proposal_pair_inputs(scene, kept, proposals.boxes);
    auto batch = model::make_pair_batch(inputs);
    auto ctx = model::prepare_context(model::encode_pairs(batch, params), params);
    const std::size_t P = inputs.size();
    std::vector<std::size_t> rows;
    std::vector<std::vector<text::TokenId>> sequences;
    rows.reserve(P * Q);
    for (std::size_t q = 0; q < Q; ++q) {
      for (std::size_t p = 0; p < P; ++p) {
        rows.push_back(p);
        sequences.push_back(encoded[q]);
      }
    }
    auto ll = model::sequence_log_likelihood(model::select_rows(ctx, rows), sequences, params);
    for (std::size_t q = 0; q < Q; ++q) {
      scores[q][img] = *std::max_element(ll.begin() + static_cast<std::ptrdiff_t>(q * P),
                                         ll.begin() + static_cast<std::ptrdiff_t>((q + 1) * P));
    }
  };

  if (Q == 0) return scores;
  const std::size_t jobs = std::max<std::size_t>(1, std::min(options.jobs, pool.size()));
  if (jobs == 1) {
    for (std::size_t img = 0; img < pool.size(); ++img) score_image(img);
    return scores;
  }
  std::vector<std::exception_ptr> errors(jobs);
  std::vector<std::thread> workers;
  for (std::size_t j = 0; j < jobs; ++j) {
    workers.emplace_back([&, j] {
      try {
        for (std::size_t img = j; img < pool.size(); img += jobs) score_image(img);
      } catch (...) {
        errors[j] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return scores;
}

RetrievalResult retrieve(std::span<const RetrievalQuery> queries, std::span<const data::Scene> pool,
                         const model::ModelParams& params, const text::Vocabulary& vocab,
                         const RetrievalOptions& options) {
  for (const auto& q : queries) {
    if (q.source_image >= pool.size()) throw ContractError("query source image is not in the retrieval pool");
  }
  return rank_images(image_scores(queries, pool, params, vocab, options), queries);
}

std::vector<RetrievalQuery> sample_queries(std::span<const data::Scene> pool, std::size_t n_queries,
                                           std::size_t per_image, std::uint64_t seed) {
  if (per_image == 0) throw ConfigError("sample_queries: per_image must be >= 1");
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> images(pool.size());
  std::iota(images.begin(), images.end(), std::size_t{0});
  std::shuffle(images.begin(), images.end(), rng);
  std::vector<RetrievalQuery> queries;
  for (std::size_t img : images) {
    if (queries.size() >= n_queries) break;
    const auto& records = pool[img].records;
    if (records.empty()) continue;
    std::vector<std::size_t> picks(records.size());
    std::iota(picks.begin(), picks.end(), std::size_t{0});
    std::shuffle(picks.begin(), picks.end(), rng);
    for (std::size_t i = 0; i < std::min(per_image, picks.size()) && queries.size() < n_queries; ++i) {
      queries.push_back(RetrievalQuery{records[picks[i]].caption.words, img});
    }
  }
  return queries;
}

std::string to_json(const RetrievalResult& r) {
  nlohmann::ordered_json j;
  j["r1"] = r.r1;
  j["r5"] = r.r5;
  j["r10"] = r.r10;
  j["median"] = r.median_rank;
  return j.dump(2);
}

}  // namespace relcap::tasks
