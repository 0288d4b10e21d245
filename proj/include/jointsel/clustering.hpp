#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "jointsel/geometry.hpp"

namespace jointsel {

inline constexpr int kDiscarded = -1;

struct Cluster {
  int id = 0;
  std::vector<std::size_t> members;  // ascending SharedSpace rows
  std::vector<double> centroid;      // unit length
  std::size_t token_count = 0;
  std::size_t instance_count = 0;

  bool mixed() const noexcept { return token_count > 0 && instance_count > 0; }
};

enum class LossStage { KMeans, Silhouette };

struct LossRecord {
  LossStage stage;
  std::size_t iteration;
  double value;
};

/// clusters[c].id == c for every c; assignment holds a cluster id or
/// kDiscarded per SharedSpace row.
struct Clustering {
  std::vector<int> assignment;
  std::vector<Cluster> clusters;
  std::vector<LossRecord> loss_history;
};

struct KMeansOptions {
  std::size_t max_iterations = 300;
  /// Independent kmeans++ restarts; the lowest final loss wins.
  std::size_t restarts = 10;
};

/// Spherical Lloyd iterations (squared Euclidean distance to unit centroids)
/// from greedy kmeans++ seeding. Throws KTooLarge.
Clustering kmeans(const SharedSpace& space, std::size_t k, std::uint64_t seed, const KMeansOptions& options = {});

/// Sum over clustered rows of |x - mu|^2 with the stored centroids.
double kmeans_loss(const SharedSpace& space, const Clustering& clustering);

/// Silhouette with cosine distance 1 - cos; singletons score 0.
double silhouette_score(const SharedSpace& space, const Clustering& clustering, std::size_t index);

/// Above this many clustered rows, b(i) is estimated from a seeded uniform sample.
inline constexpr std::size_t kSilhouetteExactLimit = 20000;

/// -(1/N) sum_i S(i) over clustered rows.
double negative_silhouette_loss(const SharedSpace& space, const Clustering& clustering);

/// Greedy single-row reassignment passes: each row, in index order, moves to
/// the cluster maximising its own silhouette, provided the total loss drops.
/// A pass ends with centroid recomputation and a loss_history entry.
Clustering refine_by_silhouette(const SharedSpace& space, Clustering clustering, std::size_t iterations);

/// Drops token-only clusters (their tokens become discarded) and moves the
/// instances of instance-only clusters to the mixed cluster with the most
/// similar centroid. Surviving clusters are renumbered in their original
/// order. Throws NoMixedCluster.
Clustering refine_clusters(const SharedSpace& space, Clustering clustering);

/// Recomputes members, counts and centroids from `assignment`. A cluster
/// whose member mean is (numerically) zero keeps its previous centroid.
void rebuild_clusters(const SharedSpace& space, Clustering& clustering);

/// Debug dump: {clusters:[{id, members, member_ids, centroid, token_count,
/// instance_count}], discarded, discarded_indices, loss_history}.
nlohmann::json clustering_to_json(const SharedSpace& space, const Clustering& clustering);
Clustering clustering_from_json(const SharedSpace& space, const nlohmann::json& j);

}  // namespace jointsel
