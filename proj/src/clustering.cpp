#include "jointsel/clustering.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "jointsel/error.hpp"
#include "jointsel/rng.hpp"

namespace jointsel {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kZeroMean = 1e-12;

double sqdist(std::span<const double> a, std::span<const double> b) noexcept {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double t = a[i] - b[i];
    s += t * t;
  }
  return s;
}

// Cosine distance between unit rows.
double cos_dist(const SharedSpace& space, std::size_t i, std::size_t j) noexcept {
  return 1.0 - std::clamp(dot(space.vector(i), space.vector(j)), -1.0, 1.0);
}

double silhouette_from(double a, double b) noexcept {
  double m = std::max(a, b);
  return m > 0.0 ? (b - a) / m : 0.0;
}

// ---- kmeans -------------------------------------------------------------

struct LloydRun {
  std::vector<int> assignment;
  Matrix centroids;
  std::vector<double> losses;
};

std::vector<std::size_t> kmeanspp_seeds(const SharedSpace& space, std::size_t k, Rng& rng) {
  const std::size_t n = space.size();
  std::vector<std::size_t> centers;
  std::vector<bool> chosen(n, false);
  centers.push_back(static_cast<std::size_t>(rng.uniform_index(n)));
  chosen[centers[0]] = true;
  std::vector<double> closest(n);
  for (std::size_t i = 0; i < n; ++i) closest[i] = sqdist(space.vector(i), space.vector(centers[0]));

  const std::size_t trials = 2 + static_cast<std::size_t>(std::log(static_cast<double>(k)));
  std::vector<double> trial(n);
  std::vector<double> best_closest(n);
  while (centers.size() < k) {
    double potential = 0.0;
    for (double c : closest) potential += c;
    std::size_t pick = n;
    if (potential <= 0.0) {
      // Every remaining row duplicates a center.
      for (std::size_t i = 0; i < n && pick == n; ++i) {
        if (!chosen[i]) pick = i;
      }
      best_closest = closest;
    } else {
      double best_potential = kInf;
      for (std::size_t t = 0; t < trials; ++t) {
        double target = rng.uniform01() * potential;
        std::size_t cand = n;
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          if (closest[i] <= 0.0) continue;
          acc += closest[i];
          cand = i;
          if (acc > target) break;
        }
        double pot = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          trial[i] = std::min(closest[i], sqdist(space.vector(i), space.vector(cand)));
          pot += trial[i];
        }
        if (pot < best_potential) {
          best_potential = pot;
          pick = cand;
          best_closest = trial;
        }
      }
    }
    centers.push_back(pick);
    chosen[pick] = true;
    closest = best_closest;
  }
  return centers;
}

LloydRun lloyd(const SharedSpace& space, std::size_t k, Rng& rng, std::size_t max_iterations) {
  const std::size_t n = space.size();
  const std::size_t dim = space.reduced_dim;
  LloydRun run;
  run.centroids = Matrix(k, dim);
  auto seeds = kmeanspp_seeds(space, k, rng);
  for (std::size_t c = 0; c < k; ++c) {
    std::copy_n(space.vector(seeds[c]).begin(), dim, run.centroids.row(c).begin());
  }
  run.assignment.assign(n, -1);
  std::vector<std::size_t> counts(k);
  std::vector<double> sums(dim);

  for (std::size_t it = 0; it < max_iterations; ++it) {
    bool changed = false;
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_d = kInf;
      for (std::size_t c = 0; c < k; ++c) {
        double d = sqdist(space.vector(i), run.centroids.row(c));
        if (d < best_d) {
          best_d = d;
          best = static_cast<int>(c);
        }
      }
      if (run.assignment[i] != best) changed = true;
      run.assignment[i] = best;
      ++counts[static_cast<std::size_t>(best)];
    }
    if (!changed) break;

    // Empty clusters seize the row farthest from its centroid.
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      std::size_t far = n;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        auto own = static_cast<std::size_t>(run.assignment[i]);
        if (counts[own] < 2) continue;
        double d = sqdist(space.vector(i), run.centroids.row(own));
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      --counts[static_cast<std::size_t>(run.assignment[far])];
      run.assignment[far] = static_cast<int>(c);
      counts[c] = 1;
      std::copy_n(space.vector(far).begin(), dim, run.centroids.row(c).begin());
    }

    for (std::size_t c = 0; c < k; ++c) {
      std::fill(sums.begin(), sums.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        if (run.assignment[i] != static_cast<int>(c)) continue;
        auto v = space.vector(i);
        for (std::size_t j = 0; j < dim; ++j) sums[j] += v[j];
      }
      double norm = std::sqrt(dot(sums, sums));
      if (norm < kZeroMean) continue;
      auto row = run.centroids.row(c);
      for (std::size_t j = 0; j < dim; ++j) row[j] = sums[j] / norm;
    }

    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      loss += sqdist(space.vector(i), run.centroids.row(static_cast<std::size_t>(run.assignment[i])));
    }
    run.losses.push_back(loss);
  }
  return run;
}

// ---- silhouette helpers -------------------------------------------------

std::vector<std::size_t> clustered_rows(const Clustering& clustering) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < clustering.assignment.size(); ++i) {
    if (clustering.assignment[i] != kDiscarded) rows.push_back(i);
  }
  return rows;
}

// Reference rows for b(i): all clustered rows, or a fixed seeded sample of
// kSilhouetteExactLimit rows when there are more.
std::vector<std::size_t> reference_rows(const Clustering& clustering) {
  auto rows = clustered_rows(clustering);
  if (rows.size() <= kSilhouetteExactLimit) return rows;
  Rng rng = Rng::stream(0, "silhouette");
  shuffle(rows, rng);
  rows.resize(kSilhouetteExactLimit);
  std::sort(rows.begin(), rows.end());
  return rows;
}

double silhouette_with(const SharedSpace& space, const Clustering& clustering, std::size_t index,
                       const std::vector<std::size_t>& refs, bool exact) {
  const std::size_t k = clustering.clusters.size();
  const int own = clustering.assignment[index];
  std::vector<double> sums(k, 0.0);
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t j : refs) {
    if (j == index) continue;
    auto c = static_cast<std::size_t>(clustering.assignment[j]);
    sums[c] += cos_dist(space, index, j);
    ++counts[c];
  }
  // a(i) always uses the full own cluster.
  if (!exact) {
    sums[static_cast<std::size_t>(own)] = 0.0;
    counts[static_cast<std::size_t>(own)] = 0;
    for (std::size_t j : clustering.clusters[static_cast<std::size_t>(own)].members) {
      if (j == index) continue;
      sums[static_cast<std::size_t>(own)] += cos_dist(space, index, j);
      ++counts[static_cast<std::size_t>(own)];
    }
  }
  if (counts[static_cast<std::size_t>(own)] == 0) return 0.0;  // singleton
  double a = sums[static_cast<std::size_t>(own)] / static_cast<double>(counts[static_cast<std::size_t>(own)]);
  double b = kInf;
  for (std::size_t c = 0; c < k; ++c) {
    if (static_cast<int>(c) == own || counts[c] == 0) continue;
    b = std::min(b, sums[c] / static_cast<double>(counts[c]));
  }
  if (b == kInf) return 0.0;
  return silhouette_from(a, b);
}

// ---- silhouette refinement ----------------------------------------------

struct Nearest {
  double value;
  int cluster;
};

class RefinementState {
 public:
  RefinementState(const SharedSpace& space, std::vector<int>& assignment, std::size_t k)
      : space_(space), assign_(assignment), k_(k), rows_(), size_(k, 0) {
    for (std::size_t i = 0; i < assign_.size(); ++i) {
      if (assign_[i] != kDiscarded) rows_.push_back(i);
    }
    n_ = assign_.size();
    sums_.assign(n_ * k_, 0.0);
    top_.assign(n_, {});
    dm_.assign(n_, 0.0);
    for (std::size_t a = 0; a < rows_.size(); ++a) {
      std::size_t i = rows_[a];
      ++size_[static_cast<std::size_t>(assign_[i])];
      for (std::size_t b = a + 1; b < rows_.size(); ++b) {
        std::size_t j = rows_[b];
        double d = cos_dist(space_, i, j);
        sums_[i * k_ + static_cast<std::size_t>(assign_[j])] += d;
        sums_[j * k_ + static_cast<std::size_t>(assign_[i])] += d;
      }
    }
    for (std::size_t i : rows_) refresh_top(i);
  }

  // Runs one pass; returns the number of moves made. Each row goes to the
  // cluster that maximises its own silhouette; the move is kept only if the
  // exact global sum improves too.
  std::size_t pass() {
    std::size_t moves = 0;
    const double margin = 1e-12 * std::max<double>(1.0, static_cast<double>(rows_.size()));
    for (std::size_t m : rows_) {
      auto p = static_cast<std::size_t>(assign_[m]);
      if (size_[p] <= 1) continue;  // may not empty a cluster
      double own = moved_silhouette(m, p, p);
      double best = own;
      std::size_t best_q = p;
      for (std::size_t q = 0; q < k_; ++q) {
        if (q == p) continue;
        double s = moved_silhouette(m, p, q);
        if (s > best + 1e-12) {
          best = s;
          best_q = q;
        }
      }
      if (best_q == p) continue;
      for (std::size_t i : rows_) dm_[i] = i == m ? 0.0 : cos_dist(space_, i, m);
      if (total_after(m, p, best_q) > total_after(m, p, p) + margin) {
        apply(m, p, best_q);
        ++moves;
      }
    }
    return moves;
  }

 private:
  void refresh_top(std::size_t i) {
    std::array<Nearest, 3> top{{{kInf, -1}, {kInf, -1}, {kInf, -1}}};
    int own = assign_[i];
    for (std::size_t c = 0; c < k_; ++c) {
      if (static_cast<int>(c) == own || size_[c] == 0) continue;
      Nearest cand{sums_[i * k_ + c] / static_cast<double>(size_[c]), static_cast<int>(c)};
      for (std::size_t t = 0; t < 3; ++t) {
        if (cand.value < top[t].value) {
          std::swap(cand, top[t]);
        }
      }
    }
    top_[i] = top;
  }

  // Sum of silhouettes if row m moved from p to q (q == p: no move).
  double total_after(std::size_t m, std::size_t p, std::size_t q) const {
    double total = 0.0;
    for (std::size_t i : rows_) {
      total += i == m ? moved_silhouette(m, p, q) : silhouette_after(i, p, q);
    }
    return total;
  }

  double silhouette_after(std::size_t i, std::size_t p, std::size_t q) const {
    auto o = static_cast<std::size_t>(assign_[i]);
    const double* s = &sums_[i * k_];
    auto size_after = [&](std::size_t c) { return size_[c] - (c == p ? 1 : 0) + (c == q ? 1 : 0); };
    auto sum_after = [&](std::size_t c) { return s[c] - (c == p ? dm_[i] : 0.0) + (c == q ? dm_[i] : 0.0); };
    std::size_t so = size_after(o);
    if (so <= 1) return 0.0;
    double a = sum_after(o) / static_cast<double>(so - 1);
    double b = kInf;
    if (p != q) {
      if (p != o) b = std::min(b, sum_after(p) / static_cast<double>(size_after(p)));
      if (q != o) b = std::min(b, sum_after(q) / static_cast<double>(size_after(q)));
      for (const auto& t : top_[i]) {
        if (t.cluster < 0) break;
        if (static_cast<std::size_t>(t.cluster) == p || static_cast<std::size_t>(t.cluster) == q) continue;
        b = std::min(b, t.value);
        break;
      }
    } else if (top_[i][0].cluster >= 0) {
      b = top_[i][0].value;
    }
    if (b == kInf) return 0.0;
    return silhouette_from(a, b);
  }

  double moved_silhouette(std::size_t m, std::size_t p, std::size_t q) const {
    const double* s = &sums_[m * k_];
    if (q == p) {
      double a = s[p] / static_cast<double>(size_[p] - 1);
      if (top_[m][0].cluster < 0) return 0.0;
      return silhouette_from(a, top_[m][0].value);
    }
    if (size_[q] == 0) return 0.0;  // becomes a singleton
    double a = s[q] / static_cast<double>(size_[q]);
    double b = s[p] / static_cast<double>(size_[p] - 1);
    for (const auto& t : top_[m]) {
      if (t.cluster < 0) break;
      if (static_cast<std::size_t>(t.cluster) == q) continue;
      b = std::min(b, t.value);
      break;
    }
    return silhouette_from(a, b);
  }

  void apply(std::size_t m, std::size_t p, std::size_t q) {
    for (std::size_t i : rows_) {
      sums_[i * k_ + p] -= dm_[i];
      sums_[i * k_ + q] += dm_[i];
    }
    --size_[p];
    ++size_[q];
    assign_[m] = static_cast<int>(q);
    for (std::size_t i : rows_) refresh_top(i);
  }

  const SharedSpace& space_;
  std::vector<int>& assign_;
  std::size_t k_;
  std::size_t n_ = 0;
  std::vector<std::size_t> rows_;
  std::vector<std::size_t> size_;
  std::vector<double> sums_;  // sums_[i*k + c] = sum of distances from i to members of c (excluding i)
  std::vector<std::array<Nearest, 3>> top_;
  std::vector<double> dm_;
};

std::string_view stage_name(LossStage s) { return s == LossStage::KMeans ? "kmeans" : "silhouette"; }

}  // namespace

Clustering kmeans(const SharedSpace& space, std::size_t k, std::uint64_t seed, const KMeansOptions& options) {
  const std::size_t n = space.size();
  if (k == 0 || k > n) {
    throw Error(ErrorCode::KTooLarge, "k=" + std::to_string(k) + " with " + std::to_string(n) + " items");
  }
  Rng base = Rng::stream(seed, "kmeans");
  LloydRun best;
  bool have_best = false;
  for (std::size_t r = 0; r < std::max<std::size_t>(1, options.restarts); ++r) {
    Rng rng = base.fork(r);
    LloydRun run = lloyd(space, k, rng, options.max_iterations);
    if (!have_best || run.losses.back() < best.losses.back()) {
      best = std::move(run);
      have_best = true;
    }
  }

  Clustering out;
  out.assignment = std::move(best.assignment);
  out.clusters.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    out.clusters[c].id = static_cast<int>(c);
    auto row = best.centroids.row(c);
    out.clusters[c].centroid.assign(row.begin(), row.end());
  }
  rebuild_clusters(space, out);
  for (std::size_t it = 0; it < best.losses.size(); ++it) {
    out.loss_history.push_back({LossStage::KMeans, it, best.losses[it]});
  }
  return out;
}

double kmeans_loss(const SharedSpace& space, const Clustering& clustering) {
  double loss = 0.0;
  for (std::size_t i = 0; i < clustering.assignment.size(); ++i) {
    int c = clustering.assignment[i];
    if (c == kDiscarded) continue;
    loss += sqdist(space.vector(i), clustering.clusters[static_cast<std::size_t>(c)].centroid);
  }
  return loss;
}

void rebuild_clusters(const SharedSpace& space, Clustering& clustering) {
  const std::size_t dim = space.reduced_dim;
  for (auto& c : clustering.clusters) {
    c.members.clear();
    c.token_count = 0;
    c.instance_count = 0;
  }
  for (std::size_t i = 0; i < clustering.assignment.size(); ++i) {
    int c = clustering.assignment[i];
    if (c == kDiscarded) continue;
    auto& cl = clustering.clusters.at(static_cast<std::size_t>(c));
    cl.members.push_back(i);
    if (space.is_token(i)) {
      ++cl.token_count;
    } else {
      ++cl.instance_count;
    }
  }
  std::vector<double> sums(dim);
  for (auto& cl : clustering.clusters) {
    if (cl.members.empty()) continue;
    std::fill(sums.begin(), sums.end(), 0.0);
    for (std::size_t i : cl.members) {
      auto v = space.vector(i);
      for (std::size_t j = 0; j < dim; ++j) sums[j] += v[j];
    }
    double norm = std::sqrt(dot(sums, sums));
    if (norm < kZeroMean) {
      if (cl.centroid.size() != dim) {
        auto v = space.vector(cl.members.front());
        cl.centroid.assign(v.begin(), v.end());
      }
      continue;
    }
    cl.centroid.resize(dim);
    for (std::size_t j = 0; j < dim; ++j) cl.centroid[j] = sums[j] / norm;
  }
}

double silhouette_score(const SharedSpace& space, const Clustering& clustering, std::size_t index) {
  if (index >= clustering.assignment.size() || clustering.assignment[index] == kDiscarded) {
    throw Error(ErrorCode::IndexOutOfRange, "row " + std::to_string(index) + " is not clustered");
  }
  auto refs = reference_rows(clustering);
  return silhouette_with(space, clustering, index, refs, refs.size() == clustered_rows(clustering).size());
}

double negative_silhouette_loss(const SharedSpace& space, const Clustering& clustering) {
  auto rows = clustered_rows(clustering);
  if (rows.empty()) return 0.0;
  auto refs = reference_rows(clustering);
  bool exact = refs.size() == rows.size();
  double total = 0.0;
  for (std::size_t i : rows) total += silhouette_with(space, clustering, i, refs, exact);
  return -total / static_cast<double>(rows.size());
}

Clustering refine_by_silhouette(const SharedSpace& space, Clustering clustering, std::size_t iterations) {
  if (iterations == 0) return clustering;
  std::size_t next_iteration = 0;
  for (const auto& rec : clustering.loss_history) {
    if (rec.stage == LossStage::Silhouette) next_iteration = rec.iteration + 1;
  }
  const std::size_t k = clustering.clusters.size();
  bool settled = false;
  double last_loss = 0.0;
  for (std::size_t pass = 0; pass < iterations; ++pass) {
    if (!settled) {
      RefinementState state(space, clustering.assignment, k);
      std::size_t moves = state.pass();
      rebuild_clusters(space, clustering);
      last_loss = negative_silhouette_loss(space, clustering);
      settled = moves == 0;
    }
    clustering.loss_history.push_back({LossStage::Silhouette, next_iteration + pass, last_loss});
  }
  return clustering;
}

Clustering refine_clusters(const SharedSpace& space, Clustering clustering) {
  std::vector<int> mixed;
  for (const auto& c : clustering.clusters) {
    if (c.mixed()) mixed.push_back(c.id);
  }
  if (mixed.empty()) {
    throw Error(ErrorCode::NoMixedCluster, "no cluster holds both tokens and instances; change k or reduced_dim");
  }
  for (const auto& c : clustering.clusters) {
    if (c.mixed()) continue;
    for (std::size_t i : c.members) {
      if (c.instance_count == 0) {
        clustering.assignment[i] = kDiscarded;
        continue;
      }
      int best = mixed.front();
      double best_sim = -kInf;
      for (int k : mixed) {
        double sim = cosine_similarity(clustering.clusters[static_cast<std::size_t>(k)].centroid, space.vector(i));
        if (sim > best_sim) {
          best_sim = sim;
          best = k;
        }
      }
      clustering.assignment[i] = best;
    }
  }
  std::vector<int> remap(clustering.clusters.size(), kDiscarded);
  std::vector<Cluster> kept;
  for (int old : mixed) {
    remap[static_cast<std::size_t>(old)] = static_cast<int>(kept.size());
    Cluster c = clustering.clusters[static_cast<std::size_t>(old)];
    c.id = static_cast<int>(kept.size());
    kept.push_back(std::move(c));
  }
  for (int& a : clustering.assignment) {
    if (a != kDiscarded) a = remap[static_cast<std::size_t>(a)];
  }
  clustering.clusters = std::move(kept);
  rebuild_clusters(space, clustering);
  return clustering;
}

nlohmann::json clustering_to_json(const SharedSpace& space, const Clustering& clustering) {
  using nlohmann::json;
  json clusters = json::array();
  for (const auto& c : clustering.clusters) {
    json ids = json::array();
    for (std::size_t i : c.members) ids.push_back(space.items[i].id);
    clusters.push_back({{"id", c.id},
                        {"members", c.members},
                        {"member_ids", std::move(ids)},
                        {"centroid", c.centroid},
                        {"token_count", c.token_count},
                        {"instance_count", c.instance_count}});
  }
  json discarded = json::array();
  json discarded_idx = json::array();
  for (std::size_t i = 0; i < clustering.assignment.size(); ++i) {
    if (clustering.assignment[i] != kDiscarded) continue;
    discarded.push_back(space.items[i].id);
    discarded_idx.push_back(i);
  }
  json history = json::array();
  for (const auto& rec : clustering.loss_history) {
    history.push_back({{"stage", stage_name(rec.stage)}, {"iteration", rec.iteration}, {"value", rec.value}});
  }
  return {{"clusters", std::move(clusters)},
          {"discarded", std::move(discarded)},
          {"discarded_indices", std::move(discarded_idx)},
          {"loss_history", std::move(history)}};
}

Clustering clustering_from_json(const SharedSpace& space, const nlohmann::json& j) {
  Clustering out;
  try {
    out.assignment.assign(space.size(), kDiscarded);
    for (const auto& cj : j.at("clusters")) {
      Cluster c;
      c.id = cj.at("id").get<int>();
      if (c.id != static_cast<int>(out.clusters.size())) {
        throw Error(ErrorCode::HeaderMalformed, "cluster ids must be 0..K-1 in order");
      }
      c.centroid = cj.at("centroid").get<std::vector<double>>();
      for (std::size_t i : cj.at("members").get<std::vector<std::size_t>>()) {
        if (i >= space.size()) throw Error(ErrorCode::IndexOutOfRange, "member row " + std::to_string(i));
        out.assignment[i] = c.id;
      }
      out.clusters.push_back(std::move(c));
    }
    for (const auto& rec : j.at("loss_history")) {
      auto stage = rec.at("stage").get<std::string>() == "kmeans" ? LossStage::KMeans : LossStage::Silhouette;
      out.loss_history.push_back({stage, rec.at("iteration").get<std::size_t>(), rec.at("value").get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::HeaderMalformed, std::string("clustering dump: ") + e.what());
  }
  // Members and counts are derived; stored centroids are kept as-is.
  auto centroids = out.clusters;
  rebuild_clusters(space, out);
  for (std::size_t c = 0; c < out.clusters.size(); ++c) out.clusters[c].centroid = centroids[c].centroid;
  return out;
}

}  // namespace jointsel
