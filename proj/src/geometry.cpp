#include "jointsel/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "jointsel/error.hpp"
#include "jointsel/rng.hpp"

namespace jointsel {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// First coordinate with |x| above this counts as "nonzero" for sign fixing.
constexpr double kSignEpsilon = 1e-12;

void fix_sign(std::span<double> v) {
  for (double x : v) {
    if (std::abs(x) > kSignEpsilon) {
      if (x < 0) {
        for (double& y : v) y = -y;
      }
      return;
    }
  }
}

RowMajor centered(const Matrix& x, const std::vector<double>& mean) {
  RowMajor c(x.rows, x.cols);
  for (std::size_t i = 0; i < x.rows; ++i) {
    for (std::size_t j = 0; j < x.cols; ++j) c(i, j) = x(i, j) - mean[j];
  }
  return c;
}

void solve_exact(const RowMajor& xc, double denom, PcaModel& model, std::size_t r) {
  Eigen::MatrixXd cov = (xc.transpose() * xc) / denom;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const auto& values = eig.eigenvalues();   // ascending
  const auto& vectors = eig.eigenvectors();
  const auto d = static_cast<Eigen::Index>(xc.cols());
  for (std::size_t k = 0; k < r; ++k) {
    Eigen::Index src = d - 1 - static_cast<Eigen::Index>(k);
    model.explained_variance[k] = std::max(0.0, values(src));
    auto row = model.components.row(k);
    for (Eigen::Index j = 0; j < d; ++j) row[static_cast<std::size_t>(j)] = vectors(j, src);
  }
}

// Deflated power iteration on C = Xc^T Xc / denom without forming C.
void solve_power(const RowMajor& xc, double denom, PcaModel& model, std::size_t r) {
  const auto d = static_cast<Eigen::Index>(xc.cols());
  Rng rng(0x5eedULL);
  std::vector<Eigen::VectorXd> found;
  for (std::size_t k = 0; k < r; ++k) {
    Eigen::VectorXd v(d);
    for (Eigen::Index j = 0; j < d; ++j) v(j) = rng.normal();
    auto orthogonalize = [&](Eigen::VectorXd& w) {
      for (int pass = 0; pass < 2; ++pass) {
        for (const auto& u : found) w -= u.dot(w) * u;
      }
    };
    orthogonalize(v);
    v.normalize();
    double lambda = 0.0;
    for (std::size_t it = 0; it < kPowerIterationCap; ++it) {
      Eigen::VectorXd w = xc.transpose() * (xc * v) / denom;
      orthogonalize(w);
      double norm = w.norm();
      if (norm == 0.0) {
        lambda = 0.0;
        break;
      }
      w /= norm;
      if (w.dot(v) < 0) w = -w;
      double change = (w - v).norm();
      v = w;
      lambda = norm;
      if (change < kPowerIterationTolerance) break;
    }
    // Rayleigh quotient is more accurate than the last norm.
    Eigen::VectorXd cv = xc.transpose() * (xc * v) / denom;
    lambda = std::max(0.0, v.dot(cv));
    model.explained_variance[k] = lambda;
    auto row = model.components.row(k);
    for (Eigen::Index j = 0; j < d; ++j) row[static_cast<std::size_t>(j)] = v(j);
    found.push_back(v);
  }
}

}  // namespace

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::DimensionMismatch,
                "vectors of length " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  double aa = dot(a, a), bb = dot(b, b), ab = dot(a, b);
  auto unsafe = [](double x) { return !(x > 1e-280 && x < 1e280); };
  if (unsafe(aa) || unsafe(bb) || !std::isfinite(ab)) {
    double sa = 0.0, sb = 0.0;
    for (double x : a) sa = std::max(sa, std::abs(x));
    for (double x : b) sb = std::max(sb, std::abs(x));
    if (sa == 0.0 || sb == 0.0) throw Error(ErrorCode::ZeroNormVector, "cosine similarity of a zero vector");
    aa = bb = ab = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      aa += (a[i] / sa) * (a[i] / sa);
      bb += (b[i] / sb) * (b[i] / sb);
      ab += (a[i] / sa) * (b[i] / sb);
    }
  }
  return std::clamp(ab / (std::sqrt(aa) * std::sqrt(bb)), -1.0, 1.0);
}

PcaModel fit_pca(const Matrix& stacked, std::size_t reduced_dim, PcaSolver solver) {
  const std::size_t n = stacked.rows;
  const std::size_t d = stacked.cols;
  if (reduced_dim == 0 || reduced_dim > n || reduced_dim > d) {
    throw Error(ErrorCode::DimensionTooLarge, "reduced_dim " + std::to_string(reduced_dim) + " with " +
                                                  std::to_string(n) + " rows of dim " + std::to_string(d));
  }
  for (std::size_t i = 0; i < stacked.data.size(); ++i) {
    if (!std::isfinite(stacked.data[i])) {
      throw Error(ErrorCode::NonFiniteValue, "row " + std::to_string(i / d) + " holds a non-finite value");
    }
  }

  PcaModel model;
  model.mean.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) model.mean[j] += stacked(i, j);
  }
  for (double& m : model.mean) m /= static_cast<double>(n);
  model.components = Matrix(reduced_dim, d);
  model.explained_variance.assign(reduced_dim, 0.0);

  RowMajor xc = centered(stacked, model.mean);
  double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;
  if (solver == PcaSolver::Auto) solver = d <= kExactPcaMaxDim ? PcaSolver::Exact : PcaSolver::PowerIteration;
  if (solver == PcaSolver::Exact) {
    solve_exact(xc, denom, model, reduced_dim);
  } else {
    solve_power(xc, denom, model, reduced_dim);
  }
  for (std::size_t k = 0; k < reduced_dim; ++k) fix_sign(model.components.row(k));

  double top = model.explained_variance.front();
  double tol = std::max(top, 1.0) * 1e-12;
  std::size_t nonzero = static_cast<std::size_t>(
      std::count_if(model.explained_variance.begin(), model.explained_variance.end(), [&](double v) { return v > tol; }));
  model.rank_deficient = nonzero < reduced_dim;
  return model;
}

Matrix transform(const PcaModel& model, const Matrix& rows) {
  if (rows.cols != model.input_dim()) {
    throw Error(ErrorCode::DimensionMismatch, "rows have " + std::to_string(rows.cols) + " columns, model expects " +
                                                  std::to_string(model.input_dim()));
  }
  const std::size_t r = model.output_dim();
  Matrix out(rows.rows, r);
  std::vector<double> c(rows.cols);
  for (std::size_t i = 0; i < rows.rows; ++i) {
    auto src = rows.row(i);
    for (std::size_t j = 0; j < rows.cols; ++j) c[j] = src[j] - model.mean[j];
    for (std::size_t k = 0; k < r; ++k) out(i, k) = dot(c, model.components.row(k));
  }
  return out;
}

std::optional<std::size_t> normalize_rows(Matrix& rows, double min_norm) {
  std::optional<std::size_t> degenerate;
  for (std::size_t i = 0; i < rows.rows; ++i) {
    auto r = rows.row(i);
    double norm = std::sqrt(dot(r, r));
    if (norm < min_norm) {
      if (!degenerate) degenerate = i;
      continue;
    }
    for (double& x : r) x /= norm;
  }
  return degenerate;
}

std::optional<std::size_t> SharedSpace::find(ItemKind kind, const std::string& id) const {
  std::size_t begin = kind == ItemKind::Token ? 0 : token_count;
  std::size_t end = kind == ItemKind::Token ? token_count : items.size();
  for (std::size_t i = begin; i < end; ++i) {
    if (items[i].id == id) return i;
  }
  return std::nullopt;
}

Matrix to_matrix(const EmbeddingSet& set) {
  Matrix m(set.count(), set.dim);
  std::copy(set.values.begin(), set.values.end(), m.data.begin());
  return m;
}

SharedSpace build_shared_space(const EmbeddingSet& vocab, const EmbeddingSet& instances, std::size_t reduced_dim,
                               PcaSolver solver) {
  if (vocab.kind != EmbeddingKind::Vocab || instances.kind != EmbeddingKind::Instance) {
    throw Error(ErrorCode::KindMismatch, "expected a vocab set and an instance set");
  }
  if (vocab.dim != instances.dim) {
    throw Error(ErrorCode::DimensionMismatch,
                "vocab dim " + std::to_string(vocab.dim) + " != instance dim " + std::to_string(instances.dim));
  }
  Matrix stacked(vocab.count() + instances.count(), vocab.dim);
  std::copy(vocab.values.begin(), vocab.values.end(), stacked.data.begin());
  std::copy(instances.values.begin(), instances.values.end(),
            stacked.data.begin() + static_cast<std::ptrdiff_t>(vocab.values.size()));

  SharedSpace space;
  space.pca = fit_pca(stacked, reduced_dim, solver);
  space.reduced_dim = reduced_dim;
  space.token_count = vocab.count();
  space.vectors = transform(space.pca, stacked);
  space.items.reserve(stacked.rows);
  for (std::size_t i = 0; i < vocab.count(); ++i) space.items.push_back({i, ItemKind::Token, vocab.ids[i]});
  for (std::size_t i = 0; i < instances.count(); ++i) {
    space.items.push_back({vocab.count() + i, ItemKind::Instance, instances.ids[i]});
  }
  if (auto bad = normalize_rows(space.vectors)) {
    const auto& item = space.items[*bad];
    throw Error(ErrorCode::DegenerateRow, std::string(item.kind == ItemKind::Token ? "token" : "instance") + " '" +
                                              item.id + "' projects to a near-zero vector");
  }
  return space;
}

Matrix project(const PcaModel& model, const EmbeddingSet& set) {
  if (set.dim != model.input_dim()) {
    throw Error(ErrorCode::DimensionMismatch,
                "embedding dim " + std::to_string(set.dim) + " != model dim " + std::to_string(model.input_dim()));
  }
  Matrix out = transform(model, to_matrix(set));
  if (auto bad = normalize_rows(out)) {
    throw Error(ErrorCode::DegenerateRow, "'" + set.ids[*bad] + "' projects to a near-zero vector");
  }
  return out;
}

}  // namespace jointsel
