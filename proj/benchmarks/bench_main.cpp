#include <benchmark/benchmark.h>

#include <random>

#include "relcap/geometry.hpp"
#include "relcap/metrics.hpp"
#include "relcap/model.hpp"
#include "relcap/ops.hpp"

using namespace relcap;

namespace {

std::vector<double> normal(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> nd;
  std::vector<double> v(n);
  for (auto& x : v) x = nd(rng);
  return v;
}

geometry::Box random_box(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> pos(0.1, 0.9), ext(0.05, 0.4);
  return geometry::Box(pos(rng), pos(rng), ext(rng), ext(rng));
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(1);
  auto a = autodiff::Tensor::from({n, n}, normal(rng, n * n));
  auto b = autodiff::Tensor::from({n, n}, normal(rng, n * n));
  autodiff::NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(autodiff::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(128)->Arg(512);

void BM_DecodeStep(benchmark::State& state) {
  model::ModelConfig c;
  c.feature_dim = 64;
  c.fusion = state.range(1) == 0 ? model::FusionMode::kTripleStream : model::FusionMode::kSubjObjUnion;
  auto params = model::ModelParams::initialize(c, 200, 1);
  std::mt19937_64 rng(2);
  std::vector<model::PairInput> inputs;
  for (std::int64_t i = 0; i < state.range(0); ++i) {
    inputs.push_back({normal(rng, 64), normal(rng, 64), normal(rng, 64), random_box(rng), random_box(rng)});
  }
  autodiff::NoGradGuard no_grad;
  auto ctx = model::prepare_context(model::encode_pairs(model::make_pair_batch(inputs), params), params);
  auto state0 = model::initial_state(params, inputs.size());
  std::vector<text::TokenId> words(inputs.size(), text::Vocabulary::kSos);
  for (auto _ : state) benchmark::DoNotOptimize(model::decode_step(words, state0, ctx, params));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_DecodeStep)->Args({1, 0})->Args({30, 0})->Args({30, 1});

void BM_Nms(benchmark::State& state) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u;
  std::vector<geometry::ScoredBox> boxes;
  for (std::int64_t i = 0; i < state.range(0); ++i) boxes.push_back({random_box(rng), u(rng)});
  for (auto _ : state) benchmark::DoNotOptimize(geometry::nms(boxes));
}
BENCHMARK(BM_Nms)->Arg(50)->Arg(300);

void BM_RelationalMap(benchmark::State& state) {
  std::mt19937_64 rng(4);
  const std::vector<std::string> words{"red", "cup", "on", "table", "dog", "left", "of", "man", "above"};
  std::uniform_int_distribution<std::size_t> w(0, words.size() - 1);
  auto caption = [&] {
    metrics::Words c;
    for (int i = 0; i < 5; ++i) c.push_back(words[w(rng)]);
    return c;
  };
  std::uniform_real_distribution<double> u;
  std::vector<std::vector<metrics::Prediction>> preds(static_cast<std::size_t>(state.range(0)));
  std::vector<std::vector<metrics::GroundTruth>> gt(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    for (int k = 0; k < 12; ++k) gt[i].push_back({random_box(rng), random_box(rng), caption()});
    for (int k = 0; k < 30; ++k) {
      const auto& g = gt[i][static_cast<std::size_t>(k) % gt[i].size()];
      preds[i].push_back({k % 2 == 0 ? g.subject_box : random_box(rng), g.object_box, caption(), u(rng)});
    }
  }
  for (auto _ : state) benchmark::DoNotOptimize(metrics::relational_map(preds, gt));
}
BENCHMARK(BM_RelationalMap)->Arg(10)->Arg(100)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
