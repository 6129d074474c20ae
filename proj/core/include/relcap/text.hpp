#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace relcap::text {

/// Part-of-speech role of a caption word within a subj-pred-obj expression.
enum class PosTag : std::uint8_t { kSubject = 0, kPredicate = 1, kObject = 2 };

inline constexpr std::size_t kNumPosTags = 3;

std::string_view to_string(PosTag tag);
PosTag pos_tag_from_index(std::size_t index);

using TokenId = std::size_t;

/// Caption as vocabulary ids with one POS tag per id. Never contains
/// reserved ids.
struct TaggedCaption {
  std::vector<TokenId> tokens;
  std::vector<PosTag> tags;

  friend bool operator==(const TaggedCaption&, const TaggedCaption&) = default;
};

/// Caption as surface words with one POS tag per word.
struct TaggedWords {
  std::vector<std::string> words;
  std::vector<PosTag> tags;

  std::size_t size() const { return words.size(); }
  friend bool operator==(const TaggedWords&, const TaggedWords&) = default;
};

/// Throws ContractError unless lengths agree.
void validate(const TaggedWords& caption);

/// True when tags never move backwards in SUBJ < PRED < OBJ order.
bool tags_monotone(std::span<const PosTag> tags);

/// Words of the caption carrying `tag`, in order.
std::vector<std::string> span_words(const TaggedWords& caption, PosTag tag);

/// Lowercase, split on whitespace, drop ASCII punctuation.
std::vector<std::string> tokenize(std::string_view text);

std::string join(std::span<const std::string> words, std::string_view sep = " ");

class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kSos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr TokenId kUnk = 3;
  static constexpr std::size_t kNumReserved = 4;

  /// Reserved entries only.
  Vocabulary();

  /// Rebuild from an id-ordered token list, as stored in checkpoints. The
  /// first four entries must be the reserved tokens.
  static Vocabulary from_tokens(std::vector<std::string> id_to_token);

  std::size_t size() const { return id_to_token_.size(); }
  bool contains(std::string_view token) const;
  TokenId id(std::string_view token) const;  // kUnk when absent
  const std::string& token(TokenId id) const;
  const std::vector<std::string>& tokens() const { return id_to_token_; }
  static bool is_reserved(TokenId id) { return id < kNumReserved; }

  std::vector<TokenId> encode(std::span<const std::string> words) const;
  std::vector<TokenId> encode(std::string_view text) const;
  TaggedCaption encode(const TaggedWords& caption) const;

  /// Words up to (not including) the first EOS. PAD and SOS are skipped.
  std::vector<std::string> decode_words(std::span<const TokenId> ids) const;
  std::string decode(std::span<const TokenId> ids) const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.id_to_token_ == b.id_to_token_; }

 private:
  void add(std::string token);

  std::vector<std::string> id_to_token_;
  std::map<std::string, TokenId, std::less<>> token_to_id_;
};

/// Deterministic vocabulary: tokens with count >= min_count, ordered by
/// descending frequency then lexicographically. Independent of corpus order.
Vocabulary build_vocab(std::span<const std::vector<std::string>> corpus, std::size_t min_count = 1);

}  // namespace relcap::text
