#include "relcap/text.hpp"

#include <algorithm>
#include <cctype>
#include <unordered_map>

#include "relcap/errors.hpp"

namespace relcap::text {

namespace {
constexpr const char* kReservedTokens[] = {"<pad>", "<sos>", "<eos>", "<unk>"};
}

std::string_view to_string(PosTag tag) {
  switch (tag) {
    case PosTag::kSubject:
      return "subj";
    case PosTag::kPredicate:
      return "pred";
    case PosTag::kObject:
      return "obj";
  }
  return "?";
}

PosTag pos_tag_from_index(std::size_t index) {
  if (index >= kNumPosTags) throw IndexError("POS tag index " + std::to_string(index) + " out of range");
  return static_cast<PosTag>(index);
}

void validate(const TaggedWords& caption) {
  if (caption.words.size() != caption.tags.size()) {
    throw ContractError("caption has " + std::to_string(caption.words.size()) + " words but " +
                        std::to_string(caption.tags.size()) + " tags");
  }
}

bool tags_monotone(std::span<const PosTag> tags) {
  return std::is_sorted(tags.begin(), tags.end());
}

std::vector<std::string> span_words(const TaggedWords& caption, PosTag tag) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < caption.words.size(); ++i) {
    if (caption.tags[i] == tag) out.push_back(caption.words[i]);
  }
  return out;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) out.push_back(std::move(current));
    current.clear();
  };
  for (char ch : text) {
    auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (!std::ispunct(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return out;
}

std::string join(std::span<const std::string> words, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += sep;
    out += words[i];
  }
  return out;
}

Vocabulary::Vocabulary() {
  for (const char* t : kReservedTokens) add(t);
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> id_to_token) {
  if (id_to_token.size() < kNumReserved) throw FormatError("vocabulary is missing reserved tokens");
  for (std::size_t i = 0; i < kNumReserved; ++i) {
    if (id_to_token[i] != kReservedTokens[i]) {
      throw FormatError("vocabulary reserved id " + std::to_string(i) + " is '" + id_to_token[i] + "'");
    }
  }
  Vocabulary vocab;
  for (std::size_t i = kNumReserved; i < id_to_token.size(); ++i) {
    if (vocab.contains(id_to_token[i])) throw FormatError("duplicate vocabulary token '" + id_to_token[i] + "'");
    vocab.add(std::move(id_to_token[i]));
  }
  return vocab;
}

void Vocabulary::add(std::string token) {
  token_to_id_.emplace(token, id_to_token_.size());
  id_to_token_.push_back(std::move(token));
}

bool Vocabulary::contains(std::string_view token) const { return token_to_id_.find(token) != token_to_id_.end(); }

TokenId Vocabulary::id(std::string_view token) const {
  auto it = token_to_id_.find(token);
  if (it == token_to_id_.end() || is_reserved(it->second)) return kUnk;
  return it->second;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id >= id_to_token_.size()) {
    throw IndexError("token id " + std::to_string(id) + " out of range for vocabulary of " +
                     std::to_string(id_to_token_.size()));
  }
  return id_to_token_[id];
}

std::vector<TokenId> Vocabulary::encode(std::span<const std::string> words) const {
  std::vector<TokenId> ids;
  ids.reserve(words.size());
  for (const auto& w : words) ids.push_back(id(w));
  return ids;
}

std::vector<TokenId> Vocabulary::encode(std::string_view text) const {
  auto words = tokenize(text);
  return encode(words);
}

TaggedCaption Vocabulary::encode(const TaggedWords& caption) const {
  validate(caption);
  return TaggedCaption{encode(caption.words), caption.tags};
}

std::vector<std::string> Vocabulary::decode_words(std::span<const TokenId> ids) const {
  std::vector<std::string> words;
  for (TokenId t : ids) {
    const auto& tok = token(t);
    if (t == kEos) break;
    if (t == kPad || t == kSos) continue;
    words.push_back(tok);
  }
  return words;
}

std::string Vocabulary::decode(std::span<const TokenId> ids) const {
  auto words = decode_words(ids);
  return join(words);
}

Vocabulary build_vocab(std::span<const std::vector<std::string>> corpus, std::size_t min_count) {
  if (min_count == 0) throw ConfigError("build_vocab: min_count must be >= 1");
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& sentence : corpus) {
    for (const auto& w : sentence) ++counts[w];
  }
  std::vector<std::pair<std::string, std::size_t>> entries;
  for (auto& [word, count] : counts) {
    if (count >= min_count) entries.emplace_back(word, count);
  }
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> tokens(std::begin(kReservedTokens), std::end(kReservedTokens));
  for (auto& [word, count] : entries) {
    if (std::find(tokens.begin(), tokens.end(), word) != tokens.end()) continue;
    tokens.push_back(word);
  }
  return Vocabulary::from_tokens(std::move(tokens));
}

}  // namespace relcap::text
