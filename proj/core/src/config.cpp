#include "relcap/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "relcap/errors.hpp"

namespace relcap {

namespace {

using json = nlohmann::ordered_json;

template <typename T>
void read_field(const json& obj, const char* key, T& out) {
  if (auto it = obj.find(key); it != obj.end()) out = it->get<T>();
}

void reject_unknown(const json& obj, std::initializer_list<std::string_view> known, const char* section) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find(known.begin(), known.end(), it.key()) == known.end()) {
      throw ConfigError(std::string("unknown ") + section + " config key '" + it.key() + "'");
    }
  }
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  if (train.batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (!(train.learning_rate > 0.0) || !std::isfinite(train.learning_rate)) {
    throw ConfigError("learning rate must be positive");
  }
  if (train.vocab_min_count == 0) throw ConfigError("vocab_min_count must be >= 1");
  if (eval.n_before_nms == 0) throw ConfigError("n_before_nms must be >= 1");
  if (!(eval.nms_iou >= 0.0 && eval.nms_iou <= 1.0)) throw ConfigError("nms_iou must lie in [0, 1]");
  if (eval.jobs == 0) throw ConfigError("jobs must be >= 1");
}

std::string to_json(const RunConfig& c) {
  json j;
  j["model"] = {{"feature_dim", c.model.feature_dim},
                {"code_dim", c.model.code_dim},
                {"hidden", c.model.hidden},
                {"embed", c.model.embed},
                {"geo_dim", c.model.geo_dim},
                {"fusion", std::string(model::to_string(c.model.fusion))},
                {"use_pos_loss", c.model.use_pos_loss},
                {"alpha", c.model.alpha},
                {"beta", c.model.beta},
                {"gamma", c.model.gamma},
                {"max_caption_len", c.model.max_caption_len}};
  j["train"] = {{"epochs", c.train.epochs},
                {"batch_size", c.train.batch_size},
                {"max_steps", c.train.max_steps},
                {"lr", c.train.learning_rate},
                {"seed", c.train.seed},
                {"vocab_min_count", c.train.vocab_min_count}};
  j["eval"] = {{"n_before_nms", c.eval.n_before_nms},
               {"nms_iou", c.eval.nms_iou},
               {"max_pairs", c.eval.max_pairs},
               {"jobs", c.eval.jobs}};
  return j.dump();
}

RunConfig merge_json(const RunConfig& base, std::string_view json_text) {
  RunConfig c = base;
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  try {
    reject_unknown(j, {"model", "train", "eval"}, "top-level");
    if (auto it = j.find("model"); it != j.end()) {
      const auto& m = *it;
      reject_unknown(m,
                     {"feature_dim", "code_dim", "hidden", "embed", "geo_dim", "fusion", "use_pos_loss", "alpha",
                      "beta", "gamma", "max_caption_len", "preset"},
                     "model");
      if (auto p = m.find("preset"); p != m.end()) {
        if (p->get<std::string>() != "large") throw ConfigError("unknown model preset '" + p->get<std::string>() + "'");
        c.model.code_dim = model::ModelConfig::large_preset().code_dim;
      }
      read_field(m, "feature_dim", c.model.feature_dim);
      read_field(m, "code_dim", c.model.code_dim);
      read_field(m, "hidden", c.model.hidden);
      read_field(m, "embed", c.model.embed);
      read_field(m, "geo_dim", c.model.geo_dim);
      if (auto f = m.find("fusion"); f != m.end()) c.model.fusion = model::fusion_mode_from_string(f->get<std::string>());
      read_field(m, "use_pos_loss", c.model.use_pos_loss);
      read_field(m, "alpha", c.model.alpha);
      read_field(m, "beta", c.model.beta);
      read_field(m, "gamma", c.model.gamma);
      read_field(m, "max_caption_len", c.model.max_caption_len);
    }
    if (auto it = j.find("train"); it != j.end()) {
      const auto& t = *it;
      reject_unknown(t, {"epochs", "batch_size", "max_steps", "lr", "seed", "vocab_min_count"}, "train");
      read_field(t, "epochs", c.train.epochs);
      read_field(t, "batch_size", c.train.batch_size);
      read_field(t, "max_steps", c.train.max_steps);
      read_field(t, "lr", c.train.learning_rate);
      read_field(t, "seed", c.train.seed);
      read_field(t, "vocab_min_count", c.train.vocab_min_count);
    }
    if (auto it = j.find("eval"); it != j.end()) {
      const auto& e = *it;
      reject_unknown(e, {"n_before_nms", "nms_iou", "max_pairs", "jobs"}, "eval");
      read_field(e, "n_before_nms", c.eval.n_before_nms);
      read_field(e, "nms_iou", c.eval.nms_iou);
      read_field(e, "max_pairs", c.eval.max_pairs);
      read_field(e, "jobs", c.eval.jobs);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config value: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path, const RunConfig& base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return merge_json(base, ss.str());
}

}  // namespace relcap
