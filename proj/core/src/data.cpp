#include "relcap/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <random>
#include <sstream>

#include "relcap/errors.hpp"

namespace relcap::data {

namespace {

using json = nlohmann::json;
using text::PosTag;

constexpr std::size_t kBoxDims = 4;

std::vector<double> projection_matrix(const WorldConfig& config) {
  std::mt19937_64 rng(config.projection_seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(raw_feature_dim())));
  std::vector<double> proj(raw_feature_dim() * config.feature_dim);
  for (auto& v : proj) v = normal(rng);
  return proj;
}

std::size_t index_of(std::span<const std::string_view> names, std::string_view name) {
  auto it = std::find(names.begin(), names.end(), name);
  return it == names.end() ? names.size() : static_cast<std::size_t>(it - names.begin());
}

Box sample_box(std::mt19937_64& rng, const WorldConfig& config) {
  std::uniform_real_distribution<double> extent(config.min_extent, config.max_extent);
  double w = extent(rng);
  double h = extent(rng);
  std::uniform_real_distribution<double> cx(0.5 * w, 1.0 - 0.5 * w);
  std::uniform_real_distribution<double> cy(0.5 * h, 1.0 - 0.5 * h);
  double x = cx(rng);
  double y = cy(rng);
  return Box(x, y, w, h);
}

std::vector<Box> place_boxes(std::mt19937_64& rng, std::size_t count, const WorldConfig& config) {
  constexpr int kMaxAttempts = 200;
  while (true) {
    std::vector<Box> boxes;
    int attempts = 0;
    while (boxes.size() < count && attempts < kMaxAttempts) {
      ++attempts;
      Box candidate = sample_box(rng, config);
      bool ok = std::all_of(boxes.begin(), boxes.end(),
                            [&](const Box& b) { return geometry::iou(candidate, b) <= config.max_pair_iou; });
      if (ok) boxes.push_back(candidate);
    }
    if (boxes.size() == count) return boxes;
  }
}

// Head noun of a span is its last word.
const std::string* head_noun(const TaggedWords& caption, PosTag tag) {
  const std::string* head = nullptr;
  for (std::size_t i = 0; i < caption.words.size(); ++i) {
    if (caption.tags[i] == tag) head = &caption.words[i];
  }
  return head;
}

void prepend_to_span(TaggedWords& caption, PosTag tag, std::span<const std::string> words) {
  auto pos = std::find(caption.tags.begin(), caption.tags.end(), tag);
  auto offset = pos - caption.tags.begin();
  caption.words.insert(caption.words.begin() + offset, words.begin(), words.end());
  caption.tags.insert(caption.tags.begin() + offset, words.size(), tag);
}

const AttributeRecord* best_match(const Box& endpoint, const std::string& noun,
                                  std::span<const AttributeRecord> attributes, double threshold) {
  const AttributeRecord* best = nullptr;
  double best_iou = -1.0;
  for (const auto& rec : attributes) {
    if (rec.noun != noun || rec.attributes.empty()) continue;
    double overlap = geometry::iou(endpoint, rec.box);
    if (overlap >= threshold && overlap > best_iou) {
      best = &rec;
      best_iou = overlap;
    }
  }
  return best;
}

}  // namespace

void validate(const Scene& scene) {
  if (scene.objects.size() < 2) {
    throw ContractError("scene '" + scene.id + "' has " + std::to_string(scene.objects.size()) +
                        " objects; at least 2 are required");
  }
  const std::size_t dim = scene.feature_dim();
  for (const auto& obj : scene.objects) {
    if (obj.feature.size() != dim || dim == 0) {
      throw ContractError("scene '" + scene.id + "' has inconsistent feature dimensions");
    }
    if (!std::all_of(obj.feature.begin(), obj.feature.end(), [](double v) { return std::isfinite(v); })) {
      throw ContractError("scene '" + scene.id + "' has a non-finite feature value");
    }
  }
  for (const auto& rec : scene.records) {
    if (rec.subject >= scene.objects.size() || rec.object >= scene.objects.size()) {
      throw ContractError("scene '" + scene.id + "' record references a missing object");
    }
    if (rec.subject == rec.object) throw ContractError("scene '" + scene.id + "' record relates an object to itself");
    text::validate(rec.caption);
    for (PosTag tag : {PosTag::kSubject, PosTag::kPredicate, PosTag::kObject}) {
      if (std::find(rec.caption.tags.begin(), rec.caption.tags.end(), tag) == rec.caption.tags.end()) {
        throw ContractError("scene '" + scene.id + "' record caption lacks a " + std::string(text::to_string(tag)) +
                            " span");
      }
    }
  }
}

void WorldConfig::validate() const {
  if (feature_dim == 0) throw ConfigError("feature_dim must be positive");
  if (objects_min < 2 || objects_max < objects_min) {
    throw ConfigError("object count range must satisfy 2 <= min <= max");
  }
  if (objects_max > 12) throw ConfigError("at most 12 objects per scene are supported");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw ConfigError("noise sigma must be >= 0");
  if (!(attribute_probability >= 0.0 && attribute_probability <= 1.0)) {
    throw ConfigError("attribute probability must lie in [0, 1]");
  }
  if (!(min_extent > 0.0 && min_extent <= max_extent && max_extent < 1.0)) {
    throw ConfigError("box extents must satisfy 0 < min <= max < 1");
  }
  if (!(max_pair_iou > 0.0 && max_pair_iou < 1.0)) throw ConfigError("max_pair_iou must lie in (0, 1)");
}

std::size_t raw_feature_dim() { return kNouns.size() + kAttributes.size() + kBoxDims; }

std::vector<double> object_feature(std::string_view category, std::span<const std::string> attributes,
                                   const Box& box, std::span<const double> noise, const WorldConfig& config) {
  const std::size_t raw_dim = raw_feature_dim();
  if (noise.size() != raw_dim) throw ShapeError("object_feature: noise must have raw_feature_dim entries");
  std::vector<double> raw(raw_dim, 0.0);
  std::size_t cat = index_of(kNouns, category);
  if (cat == kNouns.size()) throw ConfigError("unknown category '" + std::string(category) + "'");
  raw[cat] = 1.0;
  for (const auto& a : attributes) {
    std::size_t idx = index_of(kAttributes, a);
    if (idx == kAttributes.size()) throw ConfigError("unknown attribute '" + a + "'");
    raw[kNouns.size() + idx] = 1.0;
  }
  auto coords = box.to_array();
  for (std::size_t i = 0; i < kBoxDims; ++i) raw[kNouns.size() + kAttributes.size() + i] = coords[i];
  for (std::size_t i = 0; i < raw_dim; ++i) raw[i] += noise[i];

  const auto proj = projection_matrix(config);
  std::vector<double> feature(config.feature_dim, 0.0);
  for (std::size_t r = 0; r < raw_dim; ++r) {
    for (std::size_t c = 0; c < config.feature_dim; ++c) feature[c] += raw[r] * proj[r * config.feature_dim + c];
  }
  return feature;
}

std::vector<double> region_feature(const Scene& scene, const Box& region) {
  std::vector<double> feature(scene.feature_dim(), 0.0);
  for (const auto& obj : scene.objects) {
    double w = geometry::iou(region, obj.box);
    if (w == 0.0) continue;
    for (std::size_t i = 0; i < feature.size(); ++i) feature[i] += w * obj.feature[i];
  }
  return feature;
}

std::vector<std::string> derive_predicate(const Box& subject, const Box& object) {
  if (object.contains(subject) && subject.area() < object.area()) return {"inside"};
  if (geometry::iou(subject, object) > 0.3) return {"overlapping"};
  const double dx = object.x() - subject.x();
  const double dy = object.y() - subject.y();
  if (std::abs(dx) >= std::abs(dy)) {
    return dx >= 0.0 ? std::vector<std::string>{"left", "of"} : std::vector<std::string>{"right", "of"};
  }
  // Canvas y grows downwards: a subject with smaller y sits above the object.
  return dy > 0.0 ? std::vector<std::string>{"above"} : std::vector<std::string>{"below"};
}

std::vector<RelationLabel> attribute_augment(std::span<const RelationLabel> relations,
                                             std::span<const AttributeRecord> attributes, double iou_threshold) {
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) throw ConfigError("attribute IoU threshold must lie in (0, 1]");
  std::vector<RelationLabel> out;
  out.reserve(relations.size());
  for (const auto& rel : relations) {
    text::validate(rel.caption);
    RelationLabel augmented = rel;
    // Resolve both matches against the original caption, then edit.
    const AttributeRecord* subj_match = nullptr;
    const AttributeRecord* obj_match = nullptr;
    if (const auto* noun = head_noun(rel.caption, PosTag::kSubject)) {
      subj_match = best_match(rel.subject_box, *noun, attributes, iou_threshold);
    }
    if (const auto* noun = head_noun(rel.caption, PosTag::kObject)) {
      obj_match = best_match(rel.object_box, *noun, attributes, iou_threshold);
    }
    if (obj_match) prepend_to_span(augmented.caption, PosTag::kObject, obj_match->attributes);
    if (subj_match) prepend_to_span(augmented.caption, PosTag::kSubject, subj_match->attributes);
    out.push_back(std::move(augmented));
  }
  return out;
}

std::vector<Scene> generate_world(std::uint64_t seed, std::size_t n_scenes, const WorldConfig& config) {
  if (n_scenes == 0) throw ConfigError("generate_world: n_scenes must be >= 1");
  config.validate();
  const std::size_t raw_dim = raw_feature_dim();
  std::mt19937_64 rng(seed);
  std::vector<Scene> scenes;
  scenes.reserve(n_scenes);
  for (std::size_t s = 0; s < n_scenes; ++s) {
    Scene scene;
    scene.id = "scene_" + std::to_string(seed) + "_" + std::to_string(s);
    std::uniform_int_distribution<std::size_t> count_dist(config.objects_min, config.objects_max);
    const std::size_t k = count_dist(rng);
    auto boxes = place_boxes(rng, k, config);

    std::uniform_int_distribution<std::size_t> noun_dist(0, kNouns.size() - 1);
    std::uniform_int_distribution<std::size_t> attr_dist(0, kAttributes.size() - 1);
    std::bernoulli_distribution has_attr(config.attribute_probability);
    std::normal_distribution<double> noise_dist(0.0, 1.0);

    std::vector<AttributeRecord> attribute_labels;
    for (std::size_t i = 0; i < k; ++i) {
      std::string category(kNouns[noun_dist(rng)]);
      std::vector<std::string> attrs;
      if (has_attr(rng)) attrs.emplace_back(kAttributes[attr_dist(rng)]);
      std::vector<double> noise(raw_dim);
      for (auto& v : noise) v = config.noise_sigma * noise_dist(rng);
      auto feature = object_feature(category, attrs, boxes[i], noise, config);
      if (!attrs.empty()) attribute_labels.push_back(AttributeRecord{boxes[i], category, attrs});
      scene.objects.push_back(SceneObject{boxes[i], std::move(category), std::move(attrs), std::move(feature)});
    }

    std::vector<RelationLabel> labels;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        if (i == j) continue;
        TaggedWords caption;
        caption.words.push_back(scene.objects[i].category);
        caption.tags.push_back(PosTag::kSubject);
        for (auto& w : derive_predicate(boxes[i], boxes[j])) {
          caption.words.push_back(std::move(w));
          caption.tags.push_back(PosTag::kPredicate);
        }
        caption.words.push_back(scene.objects[j].category);
        caption.tags.push_back(PosTag::kObject);
        labels.push_back(RelationLabel{boxes[i], boxes[j], std::move(caption)});
        pairs.emplace_back(i, j);
      }
    }
    auto augmented = attribute_augment(labels, attribute_labels, kDefaultAttributeIou);
    for (std::size_t r = 0; r < augmented.size(); ++r) {
      scene.records.push_back(RelationRecord{pairs[r].first, pairs[r].second, std::move(augmented[r].caption)});
    }
    scenes.push_back(std::move(scene));
  }
  return scenes;
}

std::string to_json_line(const Scene& scene) {
  json j;
  j["id"] = scene.id;
  j["objects"] = json::array();
  for (const auto& obj : scene.objects) {
    j["objects"].push_back({{"box", obj.box.to_array()},
                            {"category", obj.category},
                            {"attributes", obj.attributes},
                            {"feature", obj.feature}});
  }
  j["records"] = json::array();
  for (const auto& rec : scene.records) {
    std::vector<int> tags;
    for (auto t : rec.caption.tags) tags.push_back(static_cast<int>(t));
    j["records"].push_back({{"s", rec.subject}, {"o", rec.object}, {"tokens", rec.caption.words}, {"tags", tags}});
  }
  return j.dump();
}

Scene scene_from_json_line(std::string_view line) {
  json j = json::parse(line);
  Scene scene;
  scene.id = j.at("id").get<std::string>();
  for (const auto& o : j.at("objects")) {
    auto b = o.at("box").get<std::vector<double>>();
    if (b.size() != 4) throw FormatError("box must have 4 entries");
    scene.objects.push_back(SceneObject{Box(b[0], b[1], b[2], b[3]), o.at("category").get<std::string>(),
                                        o.at("attributes").get<std::vector<std::string>>(),
                                        o.at("feature").get<std::vector<double>>()});
  }
  for (const auto& r : j.at("records")) {
    RelationRecord rec;
    rec.subject = r.at("s").get<std::size_t>();
    rec.object = r.at("o").get<std::size_t>();
    rec.caption.words = r.at("tokens").get<std::vector<std::string>>();
    for (int t : r.at("tags").get<std::vector<int>>()) {
      if (t < 0) throw FormatError("negative POS tag");
      rec.caption.tags.push_back(text::pos_tag_from_index(static_cast<std::size_t>(t)));
    }
    scene.records.push_back(std::move(rec));
  }
  validate(scene);
  return scene;
}

void write_jsonl(std::ostream& out, std::span<const Scene> scenes) {
  for (const auto& s : scenes) out << to_json_line(s) << '\n';
}

void save_jsonl(const std::filesystem::path& path, std::span<const Scene> scenes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  write_jsonl(out, scenes);
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::vector<Scene> load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<Scene> scenes;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) continue;
    try {
      scenes.push_back(scene_from_json_line(line));
    } catch (const std::exception& e) {
      throw ParseError(path.string(), line_no, e.what());
    }
  }
  return scenes;
}

}  // namespace relcap::data
