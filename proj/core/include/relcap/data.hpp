#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "relcap/geometry.hpp"
#include "relcap/text.hpp"

namespace relcap::data {

using geometry::Box;
using text::TaggedWords;

inline constexpr std::array<std::string_view, 12> kNouns = {
    "man", "woman", "dog", "cat", "cup", "table", "chair", "car", "tree", "ball", "lamp", "book"};
inline constexpr std::array<std::string_view, 8> kAttributes = {
    "red", "blue", "green", "small", "large", "wooden", "white", "black"};

struct SceneObject {
  Box box;
  std::string category;
  std::vector<std::string> attributes;
  std::vector<double> feature;

  friend bool operator==(const SceneObject&, const SceneObject&) = default;
};

struct RelationRecord {
  std::size_t subject = 0;
  std::size_t object = 0;
  TaggedWords caption;

  friend bool operator==(const RelationRecord&, const RelationRecord&) = default;
};

struct Scene {
  std::string id;
  std::vector<SceneObject> objects;
  std::vector<RelationRecord> records;

  std::size_t feature_dim() const { return objects.empty() ? 0 : objects.front().feature.size(); }

  friend bool operator==(const Scene&, const Scene&) = default;
};

/// Throws ContractError describing the first violated invariant.
void validate(const Scene& scene);

struct WorldConfig {
  std::size_t feature_dim = 64;
  std::size_t objects_min = 2;
  std::size_t objects_max = 6;
  double noise_sigma = 0.05;
  double attribute_probability = 0.5;
  double min_extent = 0.12;
  double max_extent = 0.45;
  double max_pair_iou = 0.4;  // placement rejects boxes overlapping more
  std::uint64_t projection_seed = 0x5eedf00dULL;

  void validate() const;  // throws ConfigError
};

/// Deterministic in (seed, config). Every ordered object pair gets one record.
std::vector<Scene> generate_world(std::uint64_t seed, std::size_t n_scenes, const WorldConfig& config = {});

/// Predicate words for an ordered (subject, object) box pair.
std::vector<std::string> derive_predicate(const Box& subject, const Box& object);

/// Synthetic backbone: feature of an object given its content and box.
/// `noise` has one entry per raw dimension (raw_feature_dim()).
std::size_t raw_feature_dim();
std::vector<double> object_feature(std::string_view category, std::span<const std::string> attributes,
                                   const Box& box, std::span<const double> noise, const WorldConfig& config);

/// Feature of an arbitrary region: sum over scene objects of
/// IoU(region, object) * object feature.
std::vector<double> region_feature(const Scene& scene, const Box& region);

struct AttributeRecord {
  Box box;
  std::string noun;
  std::vector<std::string> attributes;
};

/// A relationship label with the boxes of its two endpoints.
struct RelationLabel {
  Box subject_box;
  Box object_box;
  TaggedWords caption;
};

inline constexpr double kDefaultAttributeIou = 0.5;

/// Attaches attribute words to relation endpoints. An attribute record matches
/// an endpoint when its noun equals the endpoint's head noun (last word of the
/// span) and its box IoU with the endpoint box is >= iou_threshold; the
/// highest-IoU match wins and its words are prepended to the span with the
/// span's tag.
std::vector<RelationLabel> attribute_augment(std::span<const RelationLabel> relations,
                                             std::span<const AttributeRecord> attributes,
                                             double iou_threshold = kDefaultAttributeIou);

/// One scene per line: {"id", "objects":[{"box","category","attributes",
/// "feature"}], "records":[{"s","o","tokens","tags"}]}.
std::string to_json_line(const Scene& scene);
Scene scene_from_json_line(std::string_view line);  // throws std::exception on bad input

void save_jsonl(const std::filesystem::path& path, std::span<const Scene> scenes);
void write_jsonl(std::ostream& out, std::span<const Scene> scenes);
/// Throws ParseError naming the 1-based line of the first bad record.
std::vector<Scene> load_jsonl(const std::filesystem::path& path);

}  // namespace relcap::data
