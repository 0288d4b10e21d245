#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace jointsel {

enum class EmbeddingKind { Vocab, Instance };

std::string_view to_string(EmbeddingKind kind) noexcept;

/// A matrix of vocabulary-token or instance embeddings, one row per id.
struct EmbeddingSet {
  EmbeddingKind kind = EmbeddingKind::Vocab;
  std::size_t dim = 1;
  std::vector<std::string> ids;
  std::vector<float> values;  // row-major, ids.size() x dim

  std::size_t count() const noexcept { return ids.size(); }
  std::span<const float> row(std::size_t i) const { return {values.data() + i * dim, dim}; }
};

/// Throws Error(DuplicateId | SizeMismatch | NonFiniteValue | HeaderMalformed)
/// if an invariant does not hold.
void validate(const EmbeddingSet& set);

/// Same kind, dim, ids and float bit patterns.
bool bit_identical(const EmbeddingSet& a, const EmbeddingSet& b) noexcept;

struct InstanceText {
  std::string id;
  std::string text;
};

// .cseb layout: "CSEB" | u32 version (LE) | u64 header length (LE) |
// UTF-8 JSON header | count*dim float32 (LE).
inline constexpr std::uint32_t kCsebVersion = 1;

EmbeddingSet load_embedding_set(const std::filesystem::path& path);
void write_embedding_set(const EmbeddingSet& set, const std::filesystem::path& path);

/// Decode from an in-memory image of a .cseb file.
EmbeddingSet parse_embedding_set(std::span<const unsigned char> bytes);
std::vector<unsigned char> serialize_embedding_set(const EmbeddingSet& set);

std::vector<InstanceText> load_instance_texts(const std::filesystem::path& path);
void write_instance_texts(const std::vector<InstanceText>& texts, const std::filesystem::path& path);

/// Label files are JSONL with one {"id": ..., "label": ...} per line.
std::map<std::string, std::string> load_label_file(const std::filesystem::path& path);
void write_label_file(const std::vector<std::pair<std::string, std::string>>& labels,
                      const std::filesystem::path& path);

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(std::span<const unsigned char> bytes, const std::filesystem::path& path);
void write_text_file(const std::string& text, const std::filesystem::path& path);

}  // namespace jointsel
