#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "dot_parser.hpp"
#include "fixtures.hpp"
#include "relcap/errors.hpp"
#include "relcap/tasks.hpp"
#include "relcap/training.hpp"

using namespace relcap;
using namespace relcap::tasks;
using geometry::Box;

namespace {

struct World {
  std::vector<data::Scene> scenes;
  text::Vocabulary vocab;
  model::ModelParams params;
};

World untrained_world(std::size_t n, std::uint64_t seed, bool zero = false) {
  World w;
  w.scenes = data::generate_world(seed, n, testkit::small_world(8));
  w.vocab = dataset_vocab(w.scenes);
  auto rc = testkit::small_run_config(8, 8);
  w.params = zero ? model::ModelParams::zeros(rc.model, w.vocab.size())
                  : model::ModelParams::initialize(rc.model, w.vocab.size(), seed);
  return w;
}

}  // namespace

TEST(CaptionGraph, CountsMatchBoxes) {
  auto w = untrained_world(20, 1);
  for (const auto& s : w.scenes) {
    auto g = build_caption_graph(s, w.params, w.vocab);
    const std::size_t k = s.objects.size();
    ASSERT_EQ(g.nodes.size(), k);
    ASSERT_EQ(g.edges.size(), k * (k - 1));
    for (const auto& e : g.edges) {
      EXPECT_LT(e.from, k);
      EXPECT_LT(e.to, k);
      EXPECT_NE(e.from, e.to);
      EXPECT_FALSE(e.label.empty());
    }
    for (std::size_t i = 0; i < k; ++i) {
      EXPECT_FALSE(g.nodes[i].label.empty());
      EXPECT_EQ(g.nodes[i].box, s.objects[i].box);
    }
  }
}

TEST(CaptionGraph, FewerThanTwoBoxesIsEmpty) {
  auto w = untrained_world(1, 2);
  auto s = w.scenes[0];
  s.objects.erase(s.objects.begin() + 1, s.objects.end());
  s.records.clear();
  auto g = build_caption_graph(s, w.params, w.vocab);
  EXPECT_TRUE(g.nodes.empty());
  EXPECT_TRUE(g.edges.empty());
}

TEST(CaptionGraph, Deterministic) {
  auto w = untrained_world(3, 3);
  for (const auto& s : w.scenes) {
    EXPECT_EQ(emit_dot(build_caption_graph(s, w.params, w.vocab)), emit_dot(build_caption_graph(s, w.params, w.vocab)));
  }
}

TEST(CaptionGraph, EmptySpansFallBackToUnk) {
  // Zero parameters decode PAD forever; every POS argmax is the subject tag.
  auto w = untrained_world(2, 4, true);
  auto g = build_caption_graph(w.scenes[0], w.params, w.vocab);
  for (const auto& e : g.edges) EXPECT_EQ(e.label, "unk");
}

TEST(EmitDot, Examples) {
  EXPECT_EQ(emit_dot({}), "digraph g { }\n");
  CaptionGraph g;
  g.nodes.push_back({0, Box(0.3, 0.3, 0.1, 0.1), "man", 0.5, {}});
  g.nodes.push_back({1, Box(0.6, 0.6, 0.1, 0.1), "red \"cup\"", 0.5, {}});
  g.edges.push_back({0, 1, "left of", 0.25});
  const auto dot = emit_dot(g);
  std::size_t arrows = 0;
  for (std::size_t pos = dot.find("->"); pos != std::string::npos; pos = dot.find("->", pos + 1)) ++arrows;
  EXPECT_EQ(arrows, 1u);
  EXPECT_NE(dot.find("n0 -> n1 [label=\"left of\"]"), std::string::npos);

  auto parsed = testkit::parse_dot(dot);
  EXPECT_TRUE(parsed.directed);
  ASSERT_EQ(parsed.nodes.size(), 2u);
  EXPECT_EQ(parsed.node_attrs["n1"]["label"], "red \"cup\"");
  ASSERT_EQ(parsed.edges.size(), 1u);
  EXPECT_EQ(parsed.edges[0].attrs["label"], "left of");
}

TEST(EmitDot, ParsesForRandomGraphs) {
  auto w = untrained_world(10, 5);
  for (const auto& s : w.scenes) {
    auto g = build_caption_graph(s, w.params, w.vocab);
    auto parsed = testkit::parse_dot(emit_dot(g));
    EXPECT_TRUE(parsed.directed);
    EXPECT_EQ(parsed.nodes.size(), g.nodes.size());
    ASSERT_EQ(parsed.edges.size(), g.edges.size());
    for (std::size_t i = 0; i < g.edges.size(); ++i) EXPECT_EQ(parsed.edges[i].attrs["label"], g.edges[i].label);
  }
}

TEST(RetrievalScore, UniformModelGivesMinusLnV) {
  auto w = untrained_world(2, 6, true);
  std::mt19937_64 rng(6);
  std::vector<model::PairInput> in{testkit::random_pair_input(rng, 8), testkit::random_pair_input(rng, 8)};
  autodiff::NoGradGuard g;
  auto ctx = model::prepare_context(model::encode_pairs(model::make_pair_batch(in), w.params), w.params);
  for (std::size_t len = 1; len <= 5; ++len) {
    std::vector<text::TokenId> q(len, 5);
    for (double s : retrieval_score(q, ctx, w.params)) {
      EXPECT_NEAR(s, -std::log(static_cast<double>(w.vocab.size())), 1e-12);
    }
  }
  EXPECT_THROW(retrieval_score(std::vector<text::TokenId>{}, ctx, w.params), ContractError);
}

TEST(RetrievalScore, DeterministicAndUnkForOov) {
  auto w = untrained_world(3, 7);
  std::vector<RetrievalQuery> q{{{"red", "cup", "zzzz"}, 0}};
  std::vector<RetrievalQuery> q_unk{{{"red", "cup", "<unk>"}, 0}};
  auto a = image_scores(q, w.scenes, w.params, w.vocab);
  auto b = image_scores(q, w.scenes, w.params, w.vocab);
  auto c = image_scores(q_unk, w.scenes, w.params, w.vocab);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, c);
}

TEST(Retrieve, SingleImagePool) {
  auto w = untrained_world(1, 8);
  auto q = sample_queries(w.scenes, 4, 4, 1);
  ASSERT_FALSE(q.empty());
  auto r = retrieve(q, w.scenes, w.params, w.vocab);
  EXPECT_EQ(r.r1, 1.0);
  EXPECT_EQ(r.median_rank, 1.0);
}

TEST(Retrieve, ParallelMatchesSerial) {
  auto w = untrained_world(12, 9);
  auto q = sample_queries(w.scenes, 6, 1, 2);
  RetrievalOptions serial, parallel;
  parallel.jobs = 4;
  EXPECT_EQ(image_scores(q, w.scenes, w.params, w.vocab, serial),
            image_scores(q, w.scenes, w.params, w.vocab, parallel));
}

TEST(Retrieve, SourceOutsidePoolRejected) {
  auto w = untrained_world(2, 10);
  std::vector<RetrievalQuery> q{{{"cup"}, 5}};
  EXPECT_THROW(retrieve(q, w.scenes, w.params, w.vocab), ContractError);
}

TEST(RankImages, TiesGoToLowerIndex) {
  std::vector<std::vector<double>> scores{{1.0, 1.0, 1.0}, {1.0, 1.0, 1.0}, {0.0, 2.0, 2.0}};
  std::vector<RetrievalQuery> q{{{"a"}, 0}, {{"a"}, 2}, {{"a"}, 2}};
  auto r = rank_images(scores, q);
  EXPECT_EQ(r.ranks, (std::vector<std::size_t>{1, 3, 2}));
  EXPECT_NEAR(r.r1, 1.0 / 3.0, 1e-15);
  EXPECT_EQ(r.median_rank, 2.0);
}

TEST(RankImages, PermutationOrderedRecallAndMonotoneInvariance) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + trial % 17;
    std::vector<std::vector<double>> scores(n, std::vector<double>(n));
    for (auto& row : scores) {
      for (auto& v : row) v = std::round(nd(rng) * 2) / 2;  // coarse, so ties occur
    }
    std::vector<RetrievalQuery> q;
    for (std::size_t i = 0; i < n; ++i) q.push_back({{"a"}, i});
    auto r = rank_images(scores, q);
    EXPECT_LE(r.r1, r.r5);
    EXPECT_LE(r.r5, r.r10);
    // Ranks of all images under one query form a permutation of 1..n.
    for (std::size_t qi = 0; qi < n; ++qi) {
      std::vector<RetrievalQuery> every;
      for (std::size_t img = 0; img < n; ++img) every.push_back({{"a"}, img});
      std::vector<std::vector<double>> same(n, scores[qi]);
      auto ranks = rank_images(same, every).ranks;
      std::sort(ranks.begin(), ranks.end());
      for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(ranks[i], i + 1);
    }
    auto transformed = scores;
    for (auto& row : transformed) {
      for (auto& v : row) v = std::exp(3 * v) - 7;
    }
    auto t = rank_images(transformed, q);
    EXPECT_EQ(t.ranks, r.ranks);
    EXPECT_EQ(t.median_rank, r.median_rank);
  }
}

TEST(SampleQueries, DeterministicAndCapped) {
  auto w = untrained_world(30, 12);
  auto a = sample_queries(w.scenes, 20, 4, 3);
  auto b = sample_queries(w.scenes, 20, 4, 3);
  ASSERT_EQ(a.size(), 20u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].tokens, b[i].tokens);
    EXPECT_EQ(a[i].source_image, b[i].source_image);
    EXPECT_FALSE(a[i].tokens.empty());
  }
  std::map<std::size_t, std::size_t> per_image;
  for (const auto& q : a) ++per_image[q.source_image];
  for (const auto& [img, count] : per_image) EXPECT_LE(count, 4u);
  EXPECT_THROW(sample_queries(w.scenes, 1, 0, 1), ConfigError);
}

TEST(RetrievalJson, Keys) {
  RetrievalResult r;
  r.r1 = 0.5;
  const auto json = to_json(r);
  for (const char* key : {"\"r1\"", "\"r5\"", "\"r10\"", "\"median\""}) EXPECT_NE(json.find(key), std::string::npos);
}
