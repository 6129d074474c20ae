#include "relcap/training.hpp"

#include <algorithm>
#include <exception>
#include <json.hpp>
#include <numeric>
#include <random>
#include <thread>

#include "relcap/errors.hpp"
#include "relcap/optim.hpp"

namespace relcap {

std::string to_json_line(const EpochLoss& loss) {
  nlohmann::ordered_json j;
  j["epoch"] = loss.epoch;
  j["cap"] = loss.caption;
  j["pos"] = loss.pos;
  j["det"] = loss.det;
  j["box"] = loss.box;
  j["total"] = loss.total;
  return j.dump();
}

text::Vocabulary dataset_vocab(std::span<const data::Scene> scenes, std::size_t min_count) {
  std::vector<std::vector<std::string>> corpus;
  for (const auto& scene : scenes) {
    for (const auto& r : scene.records) corpus.push_back(r.caption.words);
  }
  return text::build_vocab(corpus, min_count);
}

void check_compatible(std::span<const data::Scene> scenes, const model::ModelConfig& config) {
  for (const auto& scene : scenes) {
    for (const auto& o : scene.objects) {
      if (o.feature.size() != config.feature_dim) {
        throw ConfigError("scene '" + scene.id + "' has feature width " + std::to_string(o.feature.size()) +
                          ", model expects " + std::to_string(config.feature_dim));
      }
    }
  }
}

TrainResult train(std::span<const data::Scene> scenes, const text::Vocabulary& vocab, const RunConfig& config,
                  const EpochCallback& on_epoch, std::optional<model::ModelParams> init) {
  config.validate();
  check_compatible(scenes, config.model);
  TrainResult result{init ? std::move(*init) : model::ModelParams::initialize(config.model, vocab.size(), config.train.seed),
                     {},
                     0};
  if (result.params.vocab_size != vocab.size()) throw ConfigError("initial parameters do not match the vocabulary size");
  auto params = result.params.tensors();
  autodiff::OptimizerState state =
      autodiff::make_optimizer_state(params, autodiff::AdamOptions{.learning_rate = config.train.learning_rate});

  std::vector<std::size_t> order(scenes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(config.train.seed);
  const std::size_t batch = std::max<std::size_t>(1, config.train.batch_size);
  const auto limit_reached = [&] { return config.train.max_steps != 0 && result.steps >= config.train.max_steps; };

  for (std::size_t epoch = 1; epoch <= config.train.epochs && !limit_reached() && !scenes.empty(); ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochLoss sum{epoch};
    std::size_t steps = 0;
    for (std::size_t begin = 0; begin < order.size() && !limit_reached(); begin += batch) {
      std::vector<const data::Scene*> chunk;
      for (std::size_t i = begin; i < std::min(order.size(), begin + batch); ++i) chunk.push_back(&scenes[order[i]]);
      auto tb = model::build_training_batch(chunk, vocab, config.train.seed ^ (result.steps * 0x9e3779b97f4a7c15ULL));
      result.params.zero_grad();
      auto losses = model::total_loss(tb, result.params);
      autodiff::backward(losses.total);
      autodiff::optimizer_step(params, state);
      sum.caption += losses.caption.item();
      sum.pos += losses.pos.item();
      sum.det += losses.objectness.item();
      sum.box += losses.box.item();
      sum.total += losses.total.item();
      ++steps;
      ++result.steps;
    }
    if (steps == 0) break;
    const double n = static_cast<double>(steps);
    EpochLoss mean{epoch, sum.caption / n, sum.pos / n, sum.det / n, sum.box / n, sum.total / n};
    result.log.push_back(mean);
    if (on_epoch) on_epoch(mean);
  }
  result.params.zero_grad();
  return result;
}

std::vector<std::string> caption_words(const text::Vocabulary& vocab, const model::DecodeOutput& decoded) {
  std::vector<std::string> words;
  for (auto id : decoded.tokens) words.push_back(vocab.token(id));
  return words;
}

metrics::ImageResult predict(const data::Scene& scene, const model::ModelParams& params,
                             const text::Vocabulary& vocab, const EvalConfig& config) {
  auto captions = model::caption_scene(scene, params, config.n_before_nms, config.nms_iou);
  metrics::ImageResult result;
  result.n_boxes = captions.kept.size();
  for (const auto& pair : captions.pairs) {
    result.predictions.push_back(metrics::Prediction{pair.subject_box, pair.object_box,
                                                     caption_words(vocab, pair.caption), pair.score, pair.subject,
                                                     pair.object});
  }
  std::stable_sort(result.predictions.begin(), result.predictions.end(),
                   [](const auto& a, const auto& b) { return a.score > b.score; });
  if (config.max_pairs != 0 && result.predictions.size() > config.max_pairs) {
    result.predictions.erase(result.predictions.begin() + static_cast<std::ptrdiff_t>(config.max_pairs),
                             result.predictions.end());
  }
  return result;
}

std::vector<metrics::GroundTruth> ground_truth(const data::Scene& scene) {
  std::vector<metrics::GroundTruth> gt;
  for (const auto& r : scene.records) {
    gt.push_back(metrics::GroundTruth{scene.objects.at(r.subject).box, scene.objects.at(r.object).box,
                                      r.caption.words});
  }
  return gt;
}

metrics::EvalReport evaluate_dataset(std::span<const data::Scene> scenes, const model::ModelParams& params,
                                     const text::Vocabulary& vocab, const EvalConfig& config) {
  check_compatible(scenes, params.config);
  std::vector<metrics::ImageResult> results(scenes.size());
  std::vector<std::vector<metrics::GroundTruth>> gt(scenes.size());
  auto work = [&](std::size_t i) {
    results[i] = predict(scenes[i], params, vocab, config);
    gt[i] = ground_truth(scenes[i]);
  };
  const std::size_t jobs = std::max<std::size_t>(1, std::min(config.jobs, scenes.size()));
  if (jobs == 1) {
    for (std::size_t i = 0; i < scenes.size(); ++i) work(i);
  } else {
    std::vector<std::exception_ptr> errors(jobs);
    std::vector<std::thread> workers;
    for (std::size_t j = 0; j < jobs; ++j) {
      workers.emplace_back([&, j] {
        try {
          for (std::size_t i = j; i < scenes.size(); i += jobs) work(i);
        } catch (...) {
          errors[j] = std::current_exception();
        }
      });
    }
    for (auto& w : workers) w.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  return metrics::evaluate(results, gt);
}

}  // namespace relcap
