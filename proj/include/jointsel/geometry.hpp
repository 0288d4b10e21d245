#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "jointsel/embed_io.hpp"
#include "jointsel/matrix.hpp"

namespace jointsel {

/// (a.b) / (|a||b|), clamped to [-1, 1]. Throws ZeroNormVector / DimensionMismatch.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

struct PcaModel {
  std::vector<double> mean;                 // original dim
  Matrix components;                        // reduced_dim x dim, orthonormal rows
  std::vector<double> explained_variance;   // non-increasing
  bool rank_deficient = false;              // fewer than reduced_dim nonzero variances

  std::size_t input_dim() const noexcept { return mean.size(); }
  std::size_t output_dim() const noexcept { return components.rows; }
};

enum class PcaSolver {
  Auto,            // exact for dim <= kExactPcaMaxDim, power iteration above
  Exact,           // symmetric eigendecomposition of the covariance
  PowerIteration,  // deflated power iteration on the centred data
};

inline constexpr std::size_t kExactPcaMaxDim = 1024;
inline constexpr std::size_t kPowerIterationCap = 1000;
inline constexpr double kPowerIterationTolerance = 1e-10;

/// Principal directions of the centred rows, ordered by descending variance
/// (sample covariance, n-1 denominator). Each component's first nonzero
/// coordinate is positive.
PcaModel fit_pca(const Matrix& stacked, std::size_t reduced_dim, PcaSolver solver = PcaSolver::Auto);

/// (rows - mean) * components^T.
Matrix transform(const PcaModel& model, const Matrix& rows);

/// Scales every row to unit length. Returns the index of the first row whose
/// norm is below min_norm (left untouched), if any.
std::optional<std::size_t> normalize_rows(Matrix& rows, double min_norm = 1e-12);

enum class ItemKind { Token, Instance };

struct ItemRef {
  std::size_t index = 0;
  ItemKind kind = ItemKind::Token;
  std::string id;
};

/// Tokens and instances projected into one reduced, unit-normalised space.
/// Rows [0, token_count) are tokens, the rest instances.
struct SharedSpace {
  std::vector<ItemRef> items;
  std::size_t reduced_dim = 0;
  Matrix vectors;
  PcaModel pca;
  std::size_t token_count = 0;

  std::size_t size() const noexcept { return items.size(); }
  bool is_token(std::size_t i) const noexcept { return i < token_count; }
  std::span<const double> vector(std::size_t i) const { return vectors.row(i); }
  std::optional<std::size_t> find(ItemKind kind, const std::string& id) const;
};

Matrix to_matrix(const EmbeddingSet& set);

SharedSpace build_shared_space(const EmbeddingSet& vocab, const EmbeddingSet& instances, std::size_t reduced_dim,
                               PcaSolver solver = PcaSolver::Auto);

/// Projects raw embeddings with an already-fitted model and normalises them.
/// Throws DimensionMismatch or DegenerateRow.
Matrix project(const PcaModel& model, const EmbeddingSet& set);

}  // namespace jointsel
