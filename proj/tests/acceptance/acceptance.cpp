// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include "cli.hpp"
#include "dot_parser.hpp"
#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "reference_metrics.hpp"
#include "relcap/checkpoint.hpp"
#include "relcap/ops.hpp"
#include "relcap/tasks.hpp"
#include "relcap/training.hpp"

using namespace relcap;
using autodiff::Tensor;
using model::FusionMode;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

constexpr FusionMode kModes[] = {FusionMode::kTripleStream, FusionMode::kEarlyFusion,  FusionMode::kUnionOnly,
                                 FusionMode::kSubjObj,      FusionMode::kSubjObjCoord, FusionMode::kSubjObjUnion};

// ---------------------------------------------------------------- 1

Tensor random_tensor(std::mt19937_64& rng, autodiff::Shape shape, bool grad = true) {
  const std::size_t n = autodiff::numel(shape);
  return Tensor::from(std::move(shape), testkit::random_vector(rng, n), grad);
}

// Contracts each op output with a fixed random tensor so every output
// coordinate contributes to the scalar being differentiated.
Tensor contract(const Tensor& y, const Tensor& w) { return autodiff::sum(autodiff::mul(y, w)); }

double op_gradchecks(std::mt19937_64& rng, std::string& worst) {
  std::uniform_int_distribution<std::size_t> dim(1, 4);
  const std::size_t m = dim(rng), k = dim(rng), n = dim(rng);
  double max_err = 0;
  auto check = [&](const std::string& name, const std::function<Tensor()>& f, std::vector<Tensor> in) {
    auto r = testkit::gradcheck(f, std::move(in), rng);
    if (r.max_relative_error > max_err) {
      max_err = r.max_relative_error;
      worst = name + " " + r.worst;
    }
  };

  auto a = random_tensor(rng, {m, k}), b = random_tensor(rng, {k, n});
  auto c = random_tensor(rng, {m, k}), bias = random_tensor(rng, {k});
  auto wmn = random_tensor(rng, {m, n}, false), wmk = random_tensor(rng, {m, k}, false);
  check("matmul", [&] { return contract(autodiff::matmul(a, b), wmn); }, {a, b});
  check("add", [&] { return contract(autodiff::add(a, c), wmk); }, {a, c});
  check("sub", [&] { return contract(autodiff::sub(a, c), wmk); }, {a, c});
  check("mul", [&] { return contract(autodiff::mul(a, c), wmk); }, {a, c});
  check("scale", [&] { return contract(autodiff::scale(a, -1.7), wmk); }, {a});
  check("add_bias", [&] { return contract(autodiff::add_bias(a, bias), wmk); }, {a, bias});
  check("sigmoid", [&] { return contract(autodiff::sigmoid(a), wmk); }, {a});
  check("tanh", [&] { return contract(autodiff::tanh(a), wmk); }, {a});
  check("relu", [&] { return contract(autodiff::relu(a), wmk); }, {a});
  check("sum", [&] { return autodiff::scale(autodiff::sum(a), 0.3); }, {a});

  auto d = random_tensor(rng, {m, n});
  auto wcat = random_tensor(rng, {m, k + n}, false);
  check("concat", [&] { return contract(autodiff::concat({a, d}), wcat); }, {a, d});
  std::uniform_int_distribution<std::size_t> cut(0, k - 1);
  const std::size_t lo = cut(rng), hi = lo + 1 + cut(rng) % (k - lo);
  auto wslice = random_tensor(rng, {m, hi - lo}, false);
  check("slice", [&] { return contract(autodiff::slice(a, lo, hi), wslice); }, {a});

  std::uniform_int_distribution<std::size_t> row(0, m - 1);
  std::vector<std::size_t> ids(n + 1);
  for (auto& id : ids) id = row(rng);
  auto wgather = random_tensor(rng, {ids.size(), k}, false);
  check("gather_rows", [&] { return contract(autodiff::gather_rows(a, ids), wgather); }, {a});

  auto logits = random_tensor(rng, {m, k + 1});
  std::uniform_int_distribution<std::size_t> cls(0, k);
  std::vector<std::size_t> targets(m);
  std::vector<double> weights(m);
  for (std::size_t i = 0; i < m; ++i) {
    targets[i] = cls(rng);
    weights[i] = (i % 3 == 2) ? 0.0 : std::uniform_real_distribution<double>(0.1, 2.0)(rng);
  }
  auto vec = random_tensor(rng, {k + 1});
  const std::size_t t0 = cls(rng);
  check("softmax_cross_entropy", [&] { return autodiff::softmax_cross_entropy(vec, t0); }, {vec});
  check("cross_entropy_rows", [&] { return autodiff::cross_entropy_rows(logits, targets, weights); }, {logits});

  auto z = random_tensor(rng, {m});
  std::vector<double> labels(m);
  for (std::size_t i = 0; i < m; ++i) labels[i] = static_cast<double>(i % 2);
  check("logistic_loss", [&] { return autodiff::logistic_loss(z, labels, weights); }, {z});

  auto pred = random_tensor(rng, {m, 4});
  auto target = testkit::random_vector(rng, m * 4, 1.5);
  check("smooth_l1", [&] { return autodiff::smooth_l1(pred, target, weights); }, {pred});
  return max_err;
}

Outcome criterion_gradients() {
  Stopwatch clock;
  double max_err = 0;
  std::string worst;
  std::size_t checked_total = 0;
  for (int config = 0; config < 100; ++config) {
    std::mt19937_64 rng(1000 + static_cast<std::uint64_t>(config));
    std::string op_worst;
    const double op_err = op_gradchecks(rng, op_worst);
    if (op_err > max_err) {
      max_err = op_err;
      worst = "config " + std::to_string(config) + " " + op_worst;
    }

    model::ModelConfig mc;
    mc.feature_dim = 8;
    mc.code_dim = 8;
    mc.hidden = 8;
    mc.embed = 8;
    mc.geo_dim = 8;
    mc.fusion = kModes[rng() % 6];
    mc.use_pos_loss = rng() % 2 == 0;
    std::uniform_real_distribution<double> weight(0.0, 0.5);
    mc.alpha = weight(rng);
    mc.beta = weight(rng);
    mc.gamma = weight(rng);
    const auto vocab = testkit::synthetic_vocab(8);
    auto params = model::ModelParams::initialize(mc, vocab.size(), rng());
    // Give the zero-initialized heads non-trivial values too.
    std::normal_distribution<double> nd(0.0, 0.2);
    for (auto t : params.tensors()) {
      for (auto& v : t.mutable_data()) v += nd(rng);
    }
    auto batch = testkit::random_training_batch(rng, mc, vocab.size(), 1 + rng() % 3);
    auto r = testkit::gradcheck([&] { return model::total_loss(batch, params).total; }, params.tensors(), rng, 4);
    checked_total += r.checked;
    if (r.max_relative_error > max_err) {
      max_err = r.max_relative_error;
      worst = "config " + std::to_string(config) + " total_loss(" + std::string(model::to_string(mc.fusion)) + ") " +
              r.worst;
    }
  }
  const double secs = clock.seconds();
  return {max_err < 1e-4 && secs < 60.0, "max rel err " + fmt(max_err, 3) + " (" + worst + "), " +
                                             std::to_string(checked_total) + " total_loss coords, " +
                                             fmt(secs, 3) + " s"};
}

// ---------------------------------------------------------------- 2, 8

struct OverfitWorld {
  std::vector<data::Scene> scenes;
  text::Vocabulary vocab;
  RunConfig config;
  model::ModelParams params;
  std::size_t steps = 0;
  double train_seconds = 0;
};

OverfitWorld overfit(std::uint64_t world_seed, std::size_t n_scenes, std::size_t epochs) {
  OverfitWorld w;
  w.scenes = data::generate_world(world_seed, n_scenes, testkit::small_world(32));
  w.vocab = dataset_vocab(w.scenes);
  w.config = testkit::small_run_config(32, 32);
  w.config.train.epochs = epochs;
  w.config.train.max_steps = 2000;
  Stopwatch clock;
  auto result = train(w.scenes, w.vocab, w.config);
  w.train_seconds = clock.seconds();
  w.params = std::move(result.params);
  w.steps = result.steps;
  return w;
}

const OverfitWorld& overfit_20() {
  static const OverfitWorld w = overfit(2024, 20, 100);
  return w;
}

Outcome criterion_overfit() {
  Stopwatch clock;
  const auto& w = overfit_20();
  autodiff::NoGradGuard no_grad;
  double cap_sum = 0;
  std::size_t captions = 0, exact = 0;
  for (const auto& scene : w.scenes) {
    auto inputs = model::record_pair_inputs(scene);
    auto ctx = model::prepare_context(model::encode_pairs(model::make_pair_batch(inputs), w.params), w.params);
    std::vector<text::TaggedCaption> gt;
    for (const auto& r : scene.records) gt.push_back(w.vocab.encode(r.caption));
    cap_sum += model::teacher_forced_loss(ctx, gt, w.params).caption.item() * static_cast<double>(gt.size());
    auto decoded = model::greedy_decode(ctx, w.params, w.config.model.max_caption_len);
    for (std::size_t i = 0; i < gt.size(); ++i) {
      exact += decoded[i].terminated && decoded[i].tokens == gt[i].tokens ? 1 : 0;
    }
    captions += gt.size();
  }
  const double mean_cap = cap_sum / static_cast<double>(captions);
  const double frac = static_cast<double>(exact) / static_cast<double>(captions);
  const double secs = clock.seconds();
  const bool pass = w.steps <= 2000 && mean_cap < 0.05 && frac >= 0.9 && secs < 300.0;
  return {pass, "steps " + std::to_string(w.steps) + ", mean L_cap " + fmt(mean_cap) + ", exact " +
                    std::to_string(exact) + "/" + std::to_string(captions) + " (" + fmt(100 * frac, 4) + "%), " +
                    fmt(secs, 3) + " s"};
}

Outcome criterion_caption_graph() {
  const auto& w = overfit_20();
  std::size_t nodes = 0, correct = 0;
  std::string problem;
  for (const auto& scene : w.scenes) {
    auto g = tasks::build_caption_graph(scene, w.params, w.vocab);
    const std::size_t k = scene.objects.size();
    if (g.nodes.size() != k || g.edges.size() != k * (k - 1)) problem = "count mismatch in " + scene.id;
    auto parsed = testkit::parse_dot(tasks::emit_dot(g));
    if (!parsed.directed || parsed.nodes.size() != k || parsed.edges.size() != k * (k - 1)) {
      problem = "DOT mismatch in " + scene.id;
    }
    std::vector<std::set<std::string>> spans(k);
    for (const auto& r : scene.records) {
      spans[r.subject].insert(text::join(text::span_words(r.caption, text::PosTag::kSubject)));
      spans[r.object].insert(text::join(text::span_words(r.caption, text::PosTag::kObject)));
    }
    for (std::size_t i = 0; i < g.nodes.size() && i < k; ++i) {
      ++nodes;
      if (spans[i].count(g.nodes[i].label) != 0) ++correct;
      if (parsed.node_attrs["n" + std::to_string(i)]["label"] != g.nodes[i].label) problem = "label lost in DOT";
    }
  }
  const double frac = static_cast<double>(correct) / static_cast<double>(nodes);
  return {problem.empty() && frac >= 0.9, "k nodes / k(k-1) edges in all " + std::to_string(w.scenes.size()) +
                                              " graphs" + (problem.empty() ? "" : " except: " + problem) +
                                              ", labels correct " + std::to_string(correct) + "/" +
                                              std::to_string(nodes) + " (" + fmt(100 * frac, 4) + "%)"};
}

// ---------------------------------------------------------------- 3

double ablation_map(const std::vector<data::Scene>& train_set, const std::vector<data::Scene>& test_set,
                    const text::Vocabulary& vocab, FusionMode mode, bool pos, std::uint64_t seed) {
  RunConfig rc = testkit::small_run_config(24, 32);
  rc.model.fusion = mode;
  rc.model.use_pos_loss = pos;
  rc.train.epochs = 6;
  rc.train.batch_size = 4;
  rc.train.learning_rate = 5e-3;
  rc.train.seed = seed;
  auto result = train(train_set, vocab, rc);
  return evaluate_dataset(test_set, result.params, vocab, rc.eval).map;
}

Outcome criterion_ablation() {
  Stopwatch clock;
  const auto world = testkit::small_world(32);
  const auto train_set = data::generate_world(500, 500, world);
  const auto test_set = data::generate_world(501, 100, world);
  const auto vocab = dataset_vocab(train_set);
  double mtts = 0, ts = 0, union_only = 0;
  double worst_pos_drop = -1e9;
  std::string per_seed;
  for (std::uint64_t seed : {1, 2, 3}) {
    const double a = ablation_map(train_set, test_set, vocab, FusionMode::kTripleStream, true, seed);
    const double b = ablation_map(train_set, test_set, vocab, FusionMode::kTripleStream, false, seed);
    const double c = ablation_map(train_set, test_set, vocab, FusionMode::kUnionOnly, false, seed);
    mtts += a / 3;
    ts += b / 3;
    union_only += c / 3;
    worst_pos_drop = std::max(worst_pos_drop, b - a);
    per_seed += " [" + fmt(a) + " " + fmt(b) + " " + fmt(c) + "]";
  }
  const bool pass = mtts >= ts && ts >= union_only && worst_pos_drop <= 1.0;
  return {pass, "mean mAP MTTSNet " + fmt(mtts) + " >= TSNet " + fmt(ts) + (mtts == ts ? " (tie)" : "") +
                    " >= UNION_ONLY " + fmt(union_only) +
                    "; max POS drop " + fmt(worst_pos_drop) + "; per seed" + per_seed + ", " + fmt(clock.seconds(), 3) +
                    " s"};
}

// ---------------------------------------------------------------- 4

Outcome criterion_metric_oracles() {
  Stopwatch clock;
  double max_diff = 0;
  std::string worst;
  auto track = [&](double a, double b, const std::string& name, unsigned seed) {
    const double d = std::abs(a - b);
    if (d > max_diff || std::isnan(d)) {
      max_diff = std::isnan(d) ? INFINITY : d;
      worst = name + " seed " + std::to_string(seed);
    }
  };
  for (unsigned seed = 0; seed < 200; ++seed) {
    auto inst = testkit::random_eval_instance(seed);
    const auto lang = metrics::EvalThresholds{}.language;
    track(metrics::relational_map(inst.predictions, inst.ground_truth),
          testkit::ref_relational_map(inst.predictions, inst.ground_truth), "relational_map", seed);
    track(metrics::image_level_recall(inst.predictions, inst.ground_truth),
          testkit::ref_image_level_recall(inst.predictions, inst.ground_truth, lang), "image_level_recall", seed);
    track(metrics::average_meteor(inst.predictions, inst.ground_truth),
          testkit::ref_average_meteor(inst.predictions, inst.ground_truth), "average_meteor", seed);
    auto v = metrics::vocab_stats(inst.results), rv = testkit::ref_vocab_stats(inst.results);
    track(v.words_per_image, rv.words_per_image, "words_per_img", seed);
    track(v.words_per_box, rv.words_per_box, "words_per_box", seed);
    auto c = metrics::caption_counts(inst.results), rc = testkit::ref_caption_counts(inst.results);
    track(c.captions_per_image, rc.captions_per_image, "n_caption", seed);
    track(c.captions_per_box, rc.captions_per_box, "caption_per_box", seed);
  }
  const double secs = clock.seconds();
  return {max_diff <= 1e-9 && secs < 30.0, "200 seeds, max |diff| " + fmt(max_diff, 3) +
                                               (worst.empty() ? "" : " (" + worst + ")") + ", " + fmt(secs, 3) + " s"};
}

// ---------------------------------------------------------------- 5

Outcome criterion_combinatorics() {
  std::string problem;
  for (std::size_t n = 0; n <= 10; ++n) {
    auto pairs = model::pair_combinations(n);
    std::set<std::pair<std::size_t, std::size_t>> expected;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i != j) expected.insert({i, j});
      }
    }
    std::set<std::pair<std::size_t, std::size_t>> got(pairs.begin(), pairs.end());
    if (pairs.size() != n * (n > 0 ? n - 1 : 0) || got != expected || !std::is_sorted(pairs.begin(), pairs.end())) {
      problem = "pair_combinations(" + std::to_string(n) + ")";
    }
  }

  auto world = testkit::small_world(8);
  world.objects_min = 2;
  world.objects_max = 7;
  const auto scenes = data::generate_world(55, 40, world);
  auto rc = testkit::small_run_config(8, 8);
  const auto vocab = dataset_vocab(scenes);
  auto params = model::ModelParams::initialize(rc.model, vocab.size(), 9);
  // Non-zero detection head so refined boxes and scores differ per proposal.
  std::mt19937_64 rng(9);
  for (auto t : {params.objectness.weight, params.box_deltas.weight}) {
    for (auto& v : t.mutable_data()) v = std::normal_distribution<double>(0.0, 0.3)(rng);
  }
  std::size_t cases = 0;
  for (const auto& scene : scenes) {
    for (std::size_t before = 1; before <= scene.objects.size() + 1; ++before) {
      for (double thr : {0.0, 0.1, 0.3, 0.5, 0.7, 1.0}) {
        auto out = model::caption_scene(scene, params, before, thr);
        const std::size_t k = out.kept.size();
        ++cases;
        if (out.pairs.size() != k * (k > 0 ? k - 1 : 0) || k > before || k == 0) {
          problem = "caption_scene on " + scene.id;
        }
      }
    }
  }
  return {problem.empty(), "n(n-1) pairs for n in 0..10; k(k-1) captions in " + std::to_string(cases) +
                               " caption_scene cases" + (problem.empty() ? "" : "; failed: " + problem)};
}

// ---------------------------------------------------------------- 6

Outcome criterion_geometric_feature() {
  using geometry::Box;
  struct Case {
    Box s, o;
    geometry::GeometricFeature expected;
  };
  const Case cases[] = {
      {Box(0, 0, 2, 2), Box(0, 0, 2, 2), {0, 0, 1, 1, 1, 1}},
      {Box(0, 0, 2, 2), Box(0, 0, 4, 4), {0, 0, 2, 1, 1, 0.25}},
      {Box(0, 0, 2, 2), Box(2, 2, 2, 2), {1, 1, 1, 1, 1, 0}},
  };
  double case_err = 0;
  for (const auto& c : cases) {
    auto r = geometry::geometric_feature(c.s, c.o);
    for (std::size_t i = 0; i < 6; ++i) case_err = std::max(case_err, std::abs(r[i] - c.expected[i]));
  }

  std::mt19937_64 rng(6);
  double swap_err = 0, equal_area_err = 0;
  std::size_t literal_violations = 0;
  for (int i = 0; i < 1000; ++i) {
    auto s = testkit::random_box(rng), o = testkit::random_box(rng);
    auto r = geometry::geometric_feature(s, o), q = geometry::geometric_feature(o, s);
    swap_err = std::max({swap_err, std::abs(q[0] + r[0] / r[2]), std::abs(q[1] + r[1] / r[2]),
                         std::abs(q[2] - 1 / r[2]), std::abs(q[3] - r[4]), std::abs(q[4] - r[3]),
                         std::abs(q[5] - r[5])});
    if (std::abs(q[0] + r[0]) > 1e-12 || std::abs(q[1] + r[1]) > 1e-12) ++literal_violations;

    const double w = std::uniform_real_distribution<double>(0.05, 0.45)(rng);
    Box e(std::uniform_real_distribution<double>(0.1, 0.9)(rng), std::uniform_real_distribution<double>(0.1, 0.9)(rng),
          w, s.area() / w);
    auto re = geometry::geometric_feature(s, e), qe = geometry::geometric_feature(e, s);
    equal_area_err = std::max({equal_area_err, std::abs(qe[0] + re[0]), std::abs(qe[1] + re[1]),
                               std::abs(qe[2] - 1 / re[2]), std::abs(qe[5] - re[5])});
  }
  const bool pass = case_err <= 1e-12 && swap_err <= 1e-12 && equal_area_err <= 1e-12;
  return {pass, "hand cases err " + fmt(case_err, 3) + "; swap on 1000 pairs: r'3=1/r3, r'6=r6, r'1,2=-r1,2/r3 err " +
                    fmt(swap_err, 3) + "; plain negation exact on 1000 equal-area pairs (err " +
                    fmt(equal_area_err, 3) + "), off by the area ratio on " + std::to_string(literal_violations) +
                    "/1000 unequal pairs"};
}

// ---------------------------------------------------------------- 7

Outcome criterion_retrieval() {
  Stopwatch clock;
  const auto pool = data::generate_world(7000, 1000, testkit::small_world(16));
  const auto vocab = dataset_vocab(pool);
  auto rc = testkit::small_run_config(16, 16);
  auto untrained = model::ModelParams::initialize(rc.model, vocab.size(), 7);
  auto queries = tasks::sample_queries(pool, 100, 1, 7);
  auto chance = tasks::retrieve(queries, pool, untrained, vocab);
  const double untrained_secs = clock.seconds();

  auto w = overfit(7050, 50, 30);
  auto q50 = tasks::sample_queries(w.scenes, 20, 1, 8);
  auto fit = tasks::retrieve(q50, w.scenes, w.params, w.vocab);
  const bool pass = chance.r1 >= 0.0 && chance.r1 <= 0.01 && q50.size() == 20 && fit.median_rank <= 2.0;
  return {pass, "untrained 1000-image pool: R@1 " + fmt(chance.r1) + " R@5 " + fmt(chance.r5) + " R@10 " +
                    fmt(chance.r10) + " (" + fmt(untrained_secs, 3) + " s); overfit 50-image pool, 20 queries: median " +
                    fmt(fit.median_rank) + ", R@1 " + fmt(fit.r1) + " (" + std::to_string(w.steps) + " steps)"};
}

// ---------------------------------------------------------------- 9

Outcome criterion_determinism() {
  testkit::TempDir dir;
  auto path = [&](const std::string& name) { return (dir / name).string(); };
  std::ostringstream sink;
  auto run = [&](std::vector<std::string> args) {
    std::ostringstream out;
    const int code = cli::run(args, out, sink);
    if (code != 0) throw std::runtime_error("relcap " + args.front() + " exited " + std::to_string(code) + ": " + sink.str());
    return out.str();
  };
  std::ofstream(path("config.json"))
      << R"({"model":{"feature_dim":16,"code_dim":16,"hidden":16,"embed":16,"geo_dim":16},"train":{"epochs":3,"batch_size":2,"seed":5}})";

  std::string problems;
  for (const char* name : {"a.jsonl", "b.jsonl"}) {
    run({"gen-data", "--seed", "11", "--scenes", "16", "--feature-dim", "16", "--out", path(name)});
  }
  if (testkit::read_file(path("a.jsonl")) != testkit::read_file(path("b.jsonl"))) problems += " dataset";
  for (const char* name : {"a.ckpt", "b.ckpt"}) {
    run({"train", "--data", path("a.jsonl"), "--config", path("config.json"), "--out", path(name)});
  }
  const auto log_a = testkit::read_file(path("a.ckpt.loss.jsonl"));
  if (log_a.empty() || log_a != testkit::read_file(path("b.ckpt.loss.jsonl"))) problems += " loss-log";
  if (testkit::read_file(path("a.ckpt")) != testkit::read_file(path("b.ckpt"))) problems += " checkpoint";
  const auto eval_a = run({"eval", "--data", path("a.jsonl"), "--ckpt", path("a.ckpt")});
  const auto eval_b = run({"eval", "--data", path("a.jsonl"), "--ckpt", path("b.ckpt")});
  if (eval_a.empty() || eval_a != eval_b) problems += " eval-json";

  const auto bytes = testkit::read_file(path("a.ckpt"));
  auto loaded = load_checkpoint(path("a.ckpt"));
  save_checkpoint(path("c.ckpt"), loaded.config, loaded.vocab, loaded.params);
  if (testkit::read_file(path("c.ckpt")) != bytes) problems += " checkpoint-roundtrip";
  // Independent check: every tensor in the payload equals the loaded values bit for bit.
  const std::size_t payload = bytes.find('\n', kCheckpointMagic.size()) + 1;
  std::size_t offset = payload;
  for (const auto& [name, t] : loaded.params.named_tensors()) {
    const std::size_t n = t.size() * sizeof(double);
    if (std::memcmp(bytes.data() + offset, t.data().data(), n) != 0) problems += " tensor:" + name;
    offset += n;
  }
  if (offset != bytes.size()) problems += " payload-size";
  return {problems.empty(), problems.empty() ? "dataset, loss log, checkpoint and eval JSON byte-identical; "
                                               "checkpoint round-trip bit-exact (" +
                                                   std::to_string(bytes.size()) + " bytes)"
                                             : "differs:" + problems};
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<int, std::pair<std::string, std::function<Outcome()>>> criteria = {
      {1, {"gradient integrity", criterion_gradients}},
      {2, {"overfit oracle", criterion_overfit}},
      {3, {"directional ablation", criterion_ablation}},
      {4, {"metric oracle equivalence", criterion_metric_oracles}},
      {5, {"combinatorics", criterion_combinatorics}},
      {6, {"geometric feature", criterion_geometric_feature}},
      {7, {"retrieval sanity", criterion_retrieval}},
      {8, {"caption-graph structure", criterion_caption_graph}},
      {9, {"determinism & persistence", criterion_determinism}},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::stoi(argv[i]));

  int failures = 0;
  for (const auto& [id, entry] : criteria) {
    if (!selected.empty() && selected.count(id) == 0) continue;
    Outcome outcome;
    try {
      outcome = entry.second();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    if (!outcome.pass) ++failures;
    std::cout << (outcome.pass ? "PASS" : "FAIL") << " [" << id << "] " << entry.first << ": " << outcome.detail
              << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
