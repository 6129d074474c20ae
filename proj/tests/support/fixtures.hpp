#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include "relcap/config.hpp"
#include "relcap/data.hpp"
#include "relcap/model.hpp"
#include "relcap/text.hpp"

namespace relcap::testkit {

/// Small widths keep single-core training in the seconds range.
inline RunConfig small_run_config(std::size_t width = 32, std::size_t feature_dim = 32) {
  RunConfig rc;
  rc.model.feature_dim = feature_dim;
  rc.model.code_dim = width;
  rc.model.hidden = width;
  rc.model.embed = width;
  rc.model.geo_dim = width;
  rc.train.batch_size = 1;
  rc.train.learning_rate = 1e-2;
  return rc;
}

inline data::WorldConfig small_world(std::size_t feature_dim = 32) {
  data::WorldConfig wc;
  wc.feature_dim = feature_dim;
  return wc;
}

/// Vocabulary of the four reserved tokens plus w0..w{n-1}.
inline text::Vocabulary synthetic_vocab(std::size_t real_words) {
  std::vector<std::string> tokens{"<pad>", "<sos>", "<eos>", "<unk>"};
  for (std::size_t i = 0; i < real_words; ++i) tokens.push_back("w" + std::to_string(i));
  return text::Vocabulary::from_tokens(tokens);
}

inline geometry::Box random_box(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> pos(0.1, 0.9), ext(0.05, 0.5);
  return geometry::Box(pos(rng), pos(rng), ext(rng), ext(rng));
}

inline std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = nd(rng);
  return v;
}

/// Caption of 1-2 words per POS class drawn from ids [first_id, vocab_size).
inline text::TaggedCaption random_caption(std::mt19937_64& rng, std::size_t vocab_size) {
  std::uniform_int_distribution<std::size_t> word(text::Vocabulary::kNumReserved, vocab_size - 1), len(1, 2);
  text::TaggedCaption c;
  for (auto tag : {text::PosTag::kSubject, text::PosTag::kPredicate, text::PosTag::kObject}) {
    const std::size_t n = len(rng);
    for (std::size_t i = 0; i < n; ++i) {
      c.tokens.push_back(static_cast<text::TokenId>(word(rng)));
      c.tags.push_back(tag);
    }
  }
  return c;
}

inline model::PairInput random_pair_input(std::mt19937_64& rng, std::size_t feature_dim) {
  return {random_vector(rng, feature_dim), random_vector(rng, feature_dim), random_vector(rng, feature_dim),
          random_box(rng), random_box(rng)};
}

/// Random pairs and captions plus a small proposal set with detection targets.
inline model::TrainingBatch random_training_batch(std::mt19937_64& rng, const model::ModelConfig& c, std::size_t vocab,
                                                  std::size_t pairs) {
  std::vector<model::PairInput> inputs;
  model::TrainingBatch b;
  for (std::size_t i = 0; i < pairs; ++i) {
    inputs.push_back(random_pair_input(rng, c.feature_dim));
    b.captions.push_back(random_caption(rng, vocab));
  }
  b.pairs = model::make_pair_batch(inputs);
  std::vector<geometry::Box> proposals, gt;
  std::vector<double> feats;
  for (int i = 0; i < 2; ++i) gt.push_back(random_box(rng));
  for (const auto& g : gt) {
    proposals.push_back(g);
    proposals.push_back(geometry::Box(g.x() + 0.02, g.y() - 0.01, g.w() * 1.1, g.h() * 0.95));
  }
  proposals.push_back(geometry::Box(0.05, 0.05, 0.05, 0.05));
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    auto f = random_vector(rng, c.feature_dim);
    feats.insert(feats.end(), f.begin(), f.end());
  }
  b.proposal_features = autodiff::Tensor::from({proposals.size(), c.feature_dim}, feats);
  b.detection = model::assign_detection_targets(proposals, gt);
  return b;
}

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("relcap-test-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace relcap::testkit
