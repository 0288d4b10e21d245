#include "jointsel/embed_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "jointsel/error.hpp"

namespace jointsel {

using nlohmann::json;

namespace {

constexpr unsigned char kMagic[4] = {'C', 'S', 'E', 'B'};
constexpr std::size_t kPreambleBytes = 16;

std::uint64_t read_le(const unsigned char* p, std::size_t n) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

void append_le(std::vector<unsigned char>& out, std::uint64_t v, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

EmbeddingKind parse_kind(const json& j) {
  if (!j.is_string()) throw Error(ErrorCode::HeaderMalformed, "field 'kind' must be a string");
  const auto& s = j.get_ref<const std::string&>();
  if (s == "vocab") return EmbeddingKind::Vocab;
  if (s == "instance") return EmbeddingKind::Instance;
  throw Error(ErrorCode::HeaderMalformed, "unknown kind '" + s + "'");
}

const json& require(const json& header, const char* key) {
  auto it = header.find(key);
  if (it == header.end()) throw Error(ErrorCode::HeaderMalformed, std::string("missing field '") + key + "'");
  return *it;
}

void check_unique(const std::vector<std::string>& ids) {
  std::unordered_set<std::string> seen;
  seen.reserve(ids.size());
  for (const auto& id : ids) {
    if (!seen.insert(id).second) throw Error(ErrorCode::DuplicateId, "id '" + id + "' appears more than once");
  }
}

void check_finite(const EmbeddingSet& set) {
  for (std::size_t i = 0; i < set.values.size(); ++i) {
    if (!std::isfinite(set.values[i])) {
      std::size_t row = i / set.dim;
      throw Error(ErrorCode::NonFiniteValue,
                  "row " + std::to_string(row) + " (id '" + set.ids[row] + "') holds a non-finite value");
    }
  }
}

std::string trim_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace

std::string_view to_string(EmbeddingKind kind) noexcept {
  return kind == EmbeddingKind::Vocab ? "vocab" : "instance";
}

void validate(const EmbeddingSet& set) {
  if (set.dim == 0) throw Error(ErrorCode::HeaderMalformed, "dim must be positive");
  if (set.values.size() != set.ids.size() * set.dim) {
    throw Error(ErrorCode::SizeMismatch, "matrix holds " + std::to_string(set.values.size()) + " values, expected " +
                                             std::to_string(set.ids.size() * set.dim));
  }
  check_unique(set.ids);
  check_finite(set);
}

bool bit_identical(const EmbeddingSet& a, const EmbeddingSet& b) noexcept {
  if (a.kind != b.kind || a.dim != b.dim || a.ids != b.ids || a.values.size() != b.values.size()) return false;
  return a.values.empty() || std::memcmp(a.values.data(), b.values.data(), a.values.size() * sizeof(float)) == 0;
}

EmbeddingSet parse_embedding_set(std::span<const unsigned char> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw Error(ErrorCode::MagicMismatch, "file does not start with \"CSEB\"");
  }
  if (bytes.size() < kPreambleBytes) throw Error(ErrorCode::HeaderMalformed, "truncated preamble");
  auto version = static_cast<std::uint32_t>(read_le(bytes.data() + 4, 4));
  if (version != kCsebVersion) throw Error(ErrorCode::VersionUnsupported, "version " + std::to_string(version));
  std::uint64_t header_len = read_le(bytes.data() + 8, 8);
  if (header_len > bytes.size() - kPreambleBytes) {
    throw Error(ErrorCode::HeaderMalformed, "header length " + std::to_string(header_len) + " exceeds file size");
  }

  json header;
  try {
    auto begin = reinterpret_cast<const char*>(bytes.data() + kPreambleBytes);
    header = json::parse(begin, begin + header_len);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::HeaderMalformed, e.what());
  }
  if (!header.is_object()) throw Error(ErrorCode::HeaderMalformed, "header is not a JSON object");

  EmbeddingSet set;
  set.kind = parse_kind(require(header, "kind"));
  const auto& count_j = require(header, "count");
  const auto& dim_j = require(header, "dim");
  if (!count_j.is_number_unsigned()) throw Error(ErrorCode::HeaderMalformed, "count must be a non-negative integer");
  if (!dim_j.is_number_unsigned() || dim_j.get<std::uint64_t>() == 0) {
    throw Error(ErrorCode::HeaderMalformed, "dim must be a positive integer");
  }
  auto count = count_j.get<std::uint64_t>();
  set.dim = dim_j.get<std::size_t>();
  const auto& ids_j = require(header, "ids");
  if (!ids_j.is_array() || ids_j.size() != count) {
    throw Error(ErrorCode::HeaderMalformed, "ids must be an array of length count");
  }
  set.ids.reserve(count);
  for (const auto& id : ids_j) {
    if (!id.is_string()) throw Error(ErrorCode::HeaderMalformed, "ids must be strings");
    set.ids.push_back(id.get<std::string>());
  }

  std::size_t payload = bytes.size() - kPreambleBytes - header_len;
  std::size_t expected = count * set.dim * 4;
  if (payload != expected) {
    throw Error(ErrorCode::SizeMismatch,
                "payload is " + std::to_string(payload) + " bytes, expected " + std::to_string(expected));
  }
  set.values.resize(count * set.dim);
  const unsigned char* p = bytes.data() + kPreambleBytes + header_len;
  for (std::size_t i = 0; i < set.values.size(); ++i, p += 4) {
    set.values[i] = std::bit_cast<float>(static_cast<std::uint32_t>(read_le(p, 4)));
  }
  check_finite(set);
  check_unique(set.ids);
  return set;
}

std::vector<unsigned char> serialize_embedding_set(const EmbeddingSet& set) {
  validate(set);
  std::string header;
  try {
    header = json{{"kind", to_string(set.kind)}, {"count", set.count()}, {"dim", set.dim}, {"ids", set.ids}}.dump();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::HeaderMalformed, e.what());
  }
  std::vector<unsigned char> out(kMagic, kMagic + 4);
  out.reserve(kPreambleBytes + header.size() + set.values.size() * 4);
  append_le(out, kCsebVersion, 4);
  append_le(out, header.size(), 8);
  out.insert(out.end(), header.begin(), header.end());
  for (float v : set.values) append_le(out, std::bit_cast<std::uint32_t>(v), 4);
  return out;
}

EmbeddingSet load_embedding_set(const std::filesystem::path& path) {
  auto bytes = read_file_bytes(path);
  try {
    return parse_embedding_set(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.detail());
  }
}

void write_embedding_set(const EmbeddingSet& set, const std::filesystem::path& path) {
  write_file_bytes(serialize_embedding_set(set), path);
}

std::vector<InstanceText> load_instance_texts(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::vector<InstanceText> out;
  std::unordered_set<std::string> seen;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    line = trim_cr(std::move(line));
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception&) {
      throw Error(ErrorCode::MalformedLine, path.string() + ":" + std::to_string(lineno) + ": invalid JSON");
    }
    if (!j.is_object() || !j.contains("id") || !j["id"].is_string() || j["id"].get_ref<const std::string&>().empty() ||
        !j.contains("text") || !j["text"].is_string()) {
      throw Error(ErrorCode::MalformedLine,
                  path.string() + ":" + std::to_string(lineno) + ": expected {\"id\": string, \"text\": string}");
    }
    InstanceText t{j["id"].get<std::string>(), j["text"].get<std::string>()};
    if (!seen.insert(t.id).second) {
      throw Error(ErrorCode::DuplicateId, path.string() + ":" + std::to_string(lineno) + ": id '" + t.id + "'");
    }
    out.push_back(std::move(t));
  }
  return out;
}

void write_instance_texts(const std::vector<InstanceText>& texts, const std::filesystem::path& path) {
  std::string out;
  for (const auto& t : texts) out += json{{"id", t.id}, {"text", t.text}}.dump() + "\n";
  write_text_file(out, path);
}

std::map<std::string, std::string> load_label_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    line = trim_cr(std::move(line));
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception&) {
      throw Error(ErrorCode::MalformedLine, path.string() + ":" + std::to_string(lineno) + ": invalid JSON");
    }
    if (!j.is_object() || !j.contains("id") || !j["id"].is_string() || !j.contains("label") ||
        !j["label"].is_string()) {
      throw Error(ErrorCode::MalformedLine,
                  path.string() + ":" + std::to_string(lineno) + ": expected {\"id\": string, \"label\": string}");
    }
    auto id = j["id"].get<std::string>();
    if (!out.emplace(id, j["label"].get<std::string>()).second) {
      throw Error(ErrorCode::DuplicateId, path.string() + ":" + std::to_string(lineno) + ": id '" + id + "'");
    }
  }
  return out;
}

void write_label_file(const std::vector<std::pair<std::string, std::string>>& labels,
                      const std::filesystem::path& path) {
  std::string out;
  for (const auto& [id, label] : labels) out += json{{"id", id}, {"label", label}}.dump() + "\n";
  write_text_file(out, path);
}

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(std::span<const unsigned char> bytes, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoFailure, "short write to " + path.string());
}

void write_text_file(const std::string& text, const std::filesystem::path& path) {
  write_file_bytes({reinterpret_cast<const unsigned char*>(text.data()), text.size()}, path);
}

}  // namespace jointsel
