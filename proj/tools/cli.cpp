#include "cli.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include "relcap/checkpoint.hpp"
#include "relcap/errors.hpp"
#include "relcap/tasks.hpp"
#include "relcap/training.hpp"

namespace relcap::cli {

namespace {

namespace fs = std::filesystem;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::shared_ptr<spdlog::logger> make_logger(std::ostream& err) {
  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
  auto logger = std::make_shared<spdlog::logger>("relcap", sink);
  logger->set_pattern("[%l] %v");
  logger->set_level(spdlog::level::warn);
  if (const char* level = std::getenv("RELCAP_LOG")) {
    std::string l(level);
    if (l == "error") logger->set_level(spdlog::level::err);
    else if (l == "info") logger->set_level(spdlog::level::info);
    else if (l == "debug") logger->set_level(spdlog::level::debug);
  }
  return logger;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

std::string format_box(const geometry::Box& b) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "[%.4f, %.4f, %.4f, %.4f]", b.x(), b.y(), b.w(), b.h());
  return buf;
}

const data::Scene& find_scene(std::span<const data::Scene> scenes, const std::string& id) {
  auto it = std::find_if(scenes.begin(), scenes.end(), [&](const data::Scene& s) { return s.id == id; });
  if (it == scenes.end()) throw LookupError("scene '" + id + "' not found");
  return *it;
}

struct EvalFlags {
  std::optional<std::size_t> n_before_nms;
  std::optional<double> nms_iou;
  std::optional<std::size_t> jobs;
  std::optional<std::size_t> max_pairs;

  void add_to(CLI::App* cmd, bool with_jobs) {
    cmd->add_option("--n-before-nms", n_before_nms, "Proposals kept before NMS")->check(CLI::PositiveNumber);
    cmd->add_option("--nms-iou", nms_iou, "NMS IoU threshold")->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--max-pairs", max_pairs, "Keep at most this many captions per image (0: all)");
    if (with_jobs) cmd->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  }
  EvalConfig apply(EvalConfig c) const {
    if (n_before_nms) c.n_before_nms = *n_before_nms;
    if (nms_iou) c.nms_iou = *nms_iou;
    if (jobs) c.jobs = *jobs;
    if (max_pairs) c.max_pairs = *max_pairs;
    return c;
  }
};

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  auto log = make_logger(err);
  CLI::App app{"Relational dense captioning toolkit", "relcap"};
  app.require_subcommand(1);

  // gen-data
  std::uint64_t seed = 1;
  std::size_t n_scenes = 0;
  std::string out_path;
  data::WorldConfig world;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic scene dataset (JSONL)");
  gen->add_option("--seed", seed, "World seed");
  gen->add_option("--scenes", n_scenes, "Number of scenes")->required()->check(CLI::PositiveNumber);
  gen->add_option("--out", out_path, "Output JSONL path")->required();
  gen->add_option("--noise", world.noise_sigma, "Feature noise sigma")->check(CLI::NonNegativeNumber);
  gen->add_option("--objects-min", world.objects_min, "Minimum objects per scene");
  gen->add_option("--objects-max", world.objects_max, "Maximum objects per scene");
  gen->add_option("--feature-dim", world.feature_dim, "Region feature width")->check(CLI::PositiveNumber);

  // train
  std::string data_path, config_path, log_path;
  std::optional<std::size_t> epochs, max_steps, batch_size;
  std::optional<double> lr;
  std::optional<std::string> fusion;
  std::optional<std::uint64_t> train_seed;
  bool no_pos_loss = false;
  auto* tr = app.add_subcommand("train", "Train a model and write a checkpoint");
  tr->add_option("--data", data_path, "Training JSONL")->required();
  tr->add_option("--config", config_path, "JSON run config (flags override it)");
  tr->add_option("--out", out_path, "Checkpoint path")->required();
  tr->add_option("--log", log_path, "Loss log JSONL (default: <out>.loss.jsonl)");
  tr->add_option("--epochs", epochs, "Training epochs");
  tr->add_option("--max-steps", max_steps, "Stop after this many optimizer steps (0: no limit)");
  tr->add_option("--batch-size", batch_size, "Scenes per optimizer step")->check(CLI::PositiveNumber);
  tr->add_option("--lr", lr, "Learning rate")->check(CLI::PositiveNumber);
  tr->add_option("--fusion", fusion, "Decoder architecture")
      ->check(CLI::IsMember({"triple_stream", "early_fusion", "union_only", "subj_obj", "subj_obj_coord",
                             "subj_obj_union"}));
  tr->add_option("--seed", train_seed, "Training seed");
  tr->add_flag("--no-pos-loss", no_pos_loss, "Disable the POS loss");

  // eval / caption / graph / retrieve
  std::string ckpt_path, scene_id;
  EvalFlags eval_flags;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint and print the metrics JSON");
  ev->add_option("--data", data_path, "Evaluation JSONL")->required();
  ev->add_option("--ckpt", ckpt_path, "Checkpoint")->required();
  ev->add_option("--out", out_path, "Write the JSON here instead of stdout");
  eval_flags.add_to(ev, true);

  auto* cap = app.add_subcommand("caption", "Print captions of every region pair of a scene");
  cap->add_option("--data", data_path, "Scene JSONL")->required();
  cap->add_option("--ckpt", ckpt_path, "Checkpoint")->required();
  cap->add_option("--scene", scene_id, "Scene id")->required();
  eval_flags.add_to(cap, false);

  auto* gr = app.add_subcommand("graph", "Write caption graphs as DOT");
  gr->add_option("--data", data_path, "Scene JSONL")->required();
  gr->add_option("--ckpt", ckpt_path, "Checkpoint")->required();
  gr->add_option("--scene", scene_id, "Scene id (default: every scene)");
  gr->add_option("--out", out_path,
                 "Output file with --scene, else a directory receiving <id>.dot (default: stdout)");

  std::size_t n_queries = 100, pool_size = 1000, per_image = 1;
  std::uint64_t query_seed = 1;
  auto* rt = app.add_subcommand("retrieve", "Caption-to-image retrieval over the first --pool scenes");
  rt->add_option("--data", data_path, "Scene JSONL")->required();
  rt->add_option("--ckpt", ckpt_path, "Checkpoint")->required();
  rt->add_option("--queries", n_queries, "Number of query captions")->check(CLI::PositiveNumber);
  rt->add_option("--pool", pool_size, "Images in the retrieval pool")->check(CLI::PositiveNumber);
  rt->add_option("--per-image", per_image, "Queries drawn per image")->check(CLI::PositiveNumber);
  rt->add_option("--seed", query_seed, "Query sampling seed");
  rt->add_option("--out", out_path, "Write the JSON here instead of stdout");
  eval_flags.add_to(rt, true);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    std::ostringstream help, error;
    const int code = app.exit(e, help, error);
    out << help.str();
    err << error.str();
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) {
      if (world.objects_min > world.objects_max) throw UsageError("--objects-min exceeds --objects-max");
      world.validate();
      auto scenes = data::generate_world(seed, n_scenes, world);
      data::save_jsonl(out_path, scenes);
      log->info("wrote {} scenes to {}", scenes.size(), out_path);
      return kOk;
    }

    auto scenes = data::load_jsonl(data_path);
    log->info("loaded {} scenes from {}", scenes.size(), data_path);

    if (*tr) {
      RunConfig rc = config_path.empty() ? RunConfig{} : load_run_config(config_path);
      if (epochs) rc.train.epochs = *epochs;
      if (max_steps) rc.train.max_steps = *max_steps;
      if (batch_size) rc.train.batch_size = *batch_size;
      if (lr) rc.train.learning_rate = *lr;
      if (fusion) rc.model.fusion = model::fusion_mode_from_string(*fusion);
      if (train_seed) rc.train.seed = *train_seed;
      if (no_pos_loss) rc.model.use_pos_loss = false;
      rc.validate();
      check_compatible(scenes, rc.model);
      auto vocab = dataset_vocab(scenes, rc.train.vocab_min_count);
      if (log_path.empty()) log_path = out_path + ".loss.jsonl";
      auto loss_log = open_output(log_path);
      auto result = train(scenes, vocab, rc, [&](const EpochLoss& l) {
        loss_log << to_json_line(l) << '\n';
        loss_log.flush();
        log->info("epoch {} cap={:.6f} pos={:.6f} det={:.6f} box={:.6f} total={:.6f}", l.epoch, l.caption, l.pos,
                  l.det, l.box, l.total);
      });
      save_checkpoint(out_path, rc, vocab, result.params);
      log->info("saved checkpoint to {} after {} steps", out_path, result.steps);
      return kOk;
    }

    auto ck = load_checkpoint(ckpt_path);
    const EvalConfig ec = eval_flags.apply(ck.config.eval);
    check_compatible(scenes, ck.config.model);

    if (*ev) {
      auto json = metrics::to_json(evaluate_dataset(scenes, ck.params, ck.vocab, ec)) + "\n";
      if (out_path.empty()) out << json;
      else open_output(out_path) << json;
      return kOk;
    }
    if (*cap) {
      auto captions = model::caption_scene(find_scene(scenes, scene_id), ck.params, ec.n_before_nms, ec.nms_iou);
      std::vector<const model::CaptionedPair*> order;
      for (const auto& p : captions.pairs) order.push_back(&p);
      std::stable_sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->score > b->score; });
      if (ec.max_pairs != 0 && order.size() > ec.max_pairs) order.resize(ec.max_pairs);
      for (const auto* p : order) {
        std::vector<std::string> tags;
        for (auto t : p->caption.pos_tags) tags.emplace_back(text::to_string(t));
        char score[32];
        std::snprintf(score, sizeof score, "%.6f", p->score);
        out << score << '\t' << format_box(p->subject_box) << '\t' << format_box(p->object_box) << '\t'
            << text::join(caption_words(ck.vocab, p->caption)) << '\t' << text::join(tags) << '\n';
      }
      return kOk;
    }
    if (*gr) {
      if (!scene_id.empty()) {
        auto dot = tasks::emit_dot(tasks::build_caption_graph(find_scene(scenes, scene_id), ck.params, ck.vocab));
        if (out_path.empty()) out << dot;
        else open_output(out_path) << dot;
        return kOk;
      }
      if (!out_path.empty()) fs::create_directories(out_path);
      for (const auto& scene : scenes) {
        auto dot = tasks::emit_dot(tasks::build_caption_graph(scene, ck.params, ck.vocab));
        if (out_path.empty()) out << dot;
        else open_output(fs::path(out_path) / (scene.id + ".dot")) << dot;
      }
      return kOk;
    }
    if (*rt) {
      if (pool_size > scenes.size()) {
        throw UsageError("--pool " + std::to_string(pool_size) + " exceeds the " + std::to_string(scenes.size()) +
                         " scenes in " + data_path);
      }
      std::span<const data::Scene> pool(scenes.data(), pool_size);
      auto queries = tasks::sample_queries(pool, n_queries, per_image, query_seed);
      if (queries.empty()) throw UsageError("the retrieval pool has no captions to query");
      tasks::RetrievalOptions opts{ec.n_before_nms, ec.nms_iou, ec.jobs};
      auto json = tasks::to_json(tasks::retrieve(queries, pool, ck.params, ck.vocab, opts)) + "\n";
      if (out_path.empty()) out << json;
      else open_output(out_path) << json;
      return kOk;
    }
  } catch (const UsageError& e) {
    log->error("{}", e.what());
    return kUsage;
  } catch (const NumericError& e) {
    log->error("numeric failure: {}", e.what());
    return kNumericError;
  } catch (const std::exception& e) {
    log->error("{}", e.what());
    return kDataError;
  }
  return kUsage;
}

}  // namespace relcap::cli
