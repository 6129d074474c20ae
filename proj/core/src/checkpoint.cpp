#include "relcap/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <map>
#include <sstream>

#include "relcap/errors.hpp"

namespace relcap {

namespace {

using json = nlohmann::ordered_json;

void put_le64(std::string& out, double value) {
  auto bits = std::bit_cast<std::uint64_t>(value);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

double get_le64(std::string_view in, std::size_t offset) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) {
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[offset + static_cast<std::size_t>(i)])) << (8 * i);
  }
  return std::bit_cast<double>(bits);
}

}  // namespace

std::string serialize_checkpoint(const RunConfig& config, const text::Vocabulary& vocab,
                                 const model::ModelParams& params) {
  json header;
  header["format_version"] = kCheckpointVersion;
  header["config"] = json::parse(to_json(config));
  header["vocabulary"] = vocab.tokens();
  header["tensors"] = json::array();
  std::string payload;
  for (const auto& [name, tensor] : params.named_tensors()) {
    const std::size_t offset = payload.size();
    for (double v : tensor.data()) put_le64(payload, v);
    header["tensors"].push_back(
        {{"name", name}, {"shape", tensor.shape()}, {"offset", offset}, {"bytes", payload.size() - offset}});
  }
  header["payload_bytes"] = payload.size();
  std::string out(kCheckpointMagic);
  out += header.dump();
  out.push_back('\n');
  out += payload;
  return out;
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
  if (bytes.substr(0, kCheckpointMagic.size()) != kCheckpointMagic) {
    throw FormatError("not a relcap checkpoint (bad magic)");
  }
  const std::size_t header_begin = kCheckpointMagic.size();
  const std::size_t header_end = bytes.find('\n', header_begin);
  if (header_end == std::string_view::npos) throw FormatError("checkpoint header is truncated");
  json header;
  try {
    header = json::parse(bytes.substr(header_begin, header_end - header_begin));
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  const std::string_view payload = bytes.substr(header_end + 1);

  try {
    const int version = header.at("format_version").get<int>();
    if (version != kCheckpointVersion) {
      throw FormatError("checkpoint format version " + std::to_string(version) + " is not supported (expected " +
                        std::to_string(kCheckpointVersion) + ")");
    }
    if (header.at("payload_bytes").get<std::size_t>() != payload.size()) {
      throw FormatError("checkpoint payload is " + std::to_string(payload.size()) + " bytes, header declares " +
                        std::to_string(header.at("payload_bytes").get<std::size_t>()));
    }
    Checkpoint ck{merge_json(RunConfig{}, header.at("config").dump()),
                  text::Vocabulary::from_tokens(header.at("vocabulary").get<std::vector<std::string>>()),
                  {}};
    ck.params = model::ModelParams::zeros(ck.config.model, ck.vocab.size());

    std::map<std::string, autodiff::Tensor> expected;
    for (auto& [name, t] : ck.params.named_tensors()) expected.emplace(name, t);

    std::vector<std::pair<std::size_t, std::size_t>> ranges;
    std::size_t seen = 0;
    for (const auto& entry : header.at("tensors")) {
      const auto name = entry.at("name").get<std::string>();
      auto it = expected.find(name);
      if (it == expected.end()) throw FormatError("manifest entry '" + name + "' is not a parameter of this model");
      auto shape = entry.at("shape").get<autodiff::Shape>();
      if (shape != it->second.shape()) {
        throw FormatError("manifest entry '" + name + "' has shape " + autodiff::to_string(shape) + ", model expects " +
                          autodiff::to_string(it->second.shape()));
      }
      const auto offset = entry.at("offset").get<std::size_t>();
      const auto length = entry.at("bytes").get<std::size_t>();
      if (length != 8 * it->second.size() || offset % 8 != 0 || offset > payload.size() ||
          length > payload.size() - offset) {
        throw FormatError("manifest entry '" + name + "' has an out-of-bounds byte range");
      }
      ranges.emplace_back(offset, offset + length);
      auto dst = it->second.mutable_data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = get_le64(payload, offset + 8 * i);
      ++seen;
      expected.erase(it);
    }
    if (!expected.empty()) throw FormatError("checkpoint is missing tensor '" + expected.begin()->first + "'");
    std::sort(ranges.begin(), ranges.end());
    for (std::size_t i = 1; i < ranges.size(); ++i) {
      if (ranges[i].first < ranges[i - 1].second) throw FormatError("checkpoint manifest has overlapping tensors");
    }
    (void)seen;
    return ck;
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint header is malformed: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint config is invalid: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const RunConfig& config, const text::Vocabulary& vocab,
                     const model::ModelParams& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  const auto bytes = serialize_checkpoint(config, vocab, params);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace relcap
