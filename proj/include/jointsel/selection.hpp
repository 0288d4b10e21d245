#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "jointsel/clustering.hpp"
#include "jointsel/geometry.hpp"

namespace jointsel {

// ---- configuration ------------------------------------------------------

/// Literal: separation is the max similarity to other centroids/tokens, as
/// the formulas are printed. Negated: 1 - that max, rewarding distance.
enum class SeparationMode { Literal, Negated };

/// Denominator of the impurity ratio: every instance in the cluster, or
/// only its labeled instances.
enum class ImpurityDenominator { AllInstances, LabeledOnly };

enum class StrategyName { ColdSelect, Random, RandomG };

std::string_view to_string(SeparationMode m) noexcept;
std::string_view to_string(ImpurityDenominator d) noexcept;
std::string_view to_string(StrategyName s) noexcept;
SeparationMode parse_separation_mode(std::string_view s);
ImpurityDenominator parse_impurity_denominator(std::string_view s);
StrategyName parse_strategy(std::string_view s);

struct Ablation {
  bool cohesion = true;
  bool separation = true;
  bool impurity = true;

  bool operator==(const Ablation&) const = default;
};

/// Parses "cohesion,separation,impurity" (any subset, order-free).
Ablation parse_ablation(std::string_view s);
std::string to_string(const Ablation& a);

struct SessionConfig {
  std::size_t budget = 1;
  std::vector<std::string> label_space;
  Ablation ablation;
  SeparationMode separation_mode = SeparationMode::Literal;
  ImpurityDenominator impurity_denominator = ImpurityDenominator::AllInstances;
  /// Labeled-cluster rule: false picks the candidate least similar to its
  /// most similar labeled instance (farthest); true uses argmax of min
  /// similarity instead.
  bool eq16_literal = false;
  std::uint64_t seed = 42;
  StrategyName strategy = StrategyName::ColdSelect;
};

/// Canonicalises labels and checks invariants; throws InvalidConfig.
SessionConfig validated(SessionConfig config);

/// Unicode NFC of the trimmed string.
std::string canonical_label(std::string_view label);

// ---- session data -------------------------------------------------------

struct VerbalizerEntry {
  std::string token_id;
  std::size_t token_index = 0;
  std::string label;
  std::size_t acquired_at = 0;

  bool operator==(const VerbalizerEntry&) const = default;
};

class VerbalizerSet {
 public:
  const std::vector<VerbalizerEntry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  bool contains(std::size_t token_index) const noexcept;
  /// Throws DuplicateId if the token is already present.
  void add(VerbalizerEntry entry);

 private:
  std::vector<VerbalizerEntry> entries_;
};

/// instance id -> class name
using LabelMap = std::map<std::string, std::string>;

struct ClusterMetrics {
  double cohesion = 0.0;
  double separation = 0.0;
  double impurity = 0.0;
  double score = 0.0;  // sum of the enabled terms

  bool operator==(const ClusterMetrics&) const = default;
};

struct SelectionEvent {
  std::size_t timestamp = 0;
  int cluster_id = 0;
  std::string instance_id;
  std::size_t instance_index = 0;
  std::string label;
  std::optional<std::string> token_id;
  ClusterMetrics scores;

  bool operator==(const SelectionEvent&) const = default;
};

struct SessionState {
  std::size_t timestamp = 0;
  LabelMap labels;
  VerbalizerSet verbalizers;
  std::vector<ClusterMetrics> cluster_metrics;
  std::size_t remaining_budget = 0;
  std::vector<SelectionEvent> events;
};

// ---- metrics ------------------------------------------------------------

/// Mean cosine of the members to the centroid.
double cohesion_static(const Cluster& cluster, const SharedSpace& space);

/// Max cosine between this centroid and any other (Literal), or 1 - that.
double separation_static(const Cluster& cluster, const std::vector<Cluster>& all_clusters,
                         SeparationMode mode = SeparationMode::Literal);

/// 0 when no member is labeled, else 1 - majority count / denominator.
double impurity(const Cluster& cluster, const SharedSpace& space, const LabelMap& labels,
                ImpurityDenominator denominator = ImpurityDenominator::AllInstances);

/// Mean over members of the best cosine to a verbalizer token inside the
/// cluster; falls back to cohesion_static when the cluster has none.
double cohesion_dynamic(const Cluster& cluster, const SharedSpace& space, const VerbalizerSet& verbalizers);

/// Max cosine between the centroid and verbalizer tokens outside the
/// cluster; falls back to separation_static when there are none.
double separation_dynamic(const Cluster& cluster, const std::vector<Cluster>& all_clusters, const SharedSpace& space,
                          const VerbalizerSet& verbalizers, const std::vector<int>& assignment,
                          SeparationMode mode = SeparationMode::Literal);

/// All three raw terms plus the ablation-weighted sum. Throws
/// IneligibleCluster if the cluster has no unlabeled instance.
ClusterMetrics score_cluster(const Cluster& cluster, const Clustering& clustering, const SharedSpace& space,
                             const LabelMap& labels, const VerbalizerSet& verbalizers, const SessionConfig& config);

bool has_unlabeled_instance(const Cluster& cluster, const SharedSpace& space, const LabelMap& labels);

/// Highest-scoring eligible cluster, ties to the lowest id. Throws NoEligibleCluster.
int select_cluster(const Clustering& clustering, const SharedSpace& space, const LabelMap& labels,
                   const VerbalizerSet& verbalizers, const SessionConfig& config);

/// Nearest-to-centroid instance for an unlabeled cluster, farthest from the
/// cluster's labeled instances otherwise. Throws NoUnlabeledInstance.
std::size_t select_instance(const Cluster& cluster, const SharedSpace& space, const LabelMap& labels,
                            bool eq16_literal = false);

/// Most similar cluster token not yet a verbalizer, if any.
std::optional<std::size_t> select_verbalizer_token(const Cluster& cluster, const SharedSpace& space,
                                                   std::size_t instance_index, const VerbalizerSet& verbalizers);

// ---- session ------------------------------------------------------------

/// Returns the class for an instance id; throwing or returning an unknown
/// class surfaces as ProviderFailure.
using LabelProvider = std::function<std::string(const std::string& instance_id)>;

struct Proposal {
  int cluster_id = 0;
  std::size_t instance_index = 0;
  ClusterMetrics scores;
};

/// Single-writer annotation session over a refined clustering. Cluster
/// metrics are cached; only clusters touched by a step are recomputed
/// (separation of every cluster when the verbalizer set grows).
class Session {
 public:
  Session(const SharedSpace& space, const Clustering& clustering, SessionConfig config);

  const SessionState& state() const noexcept { return state_; }
  const SessionConfig& config() const noexcept { return config_; }
  const SharedSpace& space() const noexcept { return space_; }
  const Clustering& clustering() const noexcept { return clustering_; }

  bool exhausted() const noexcept { return state_.remaining_budget == 0; }
  std::vector<int> eligible_clusters() const;
  std::vector<std::size_t> unlabeled_instances() const;
  bool is_labeled(std::size_t row) const noexcept { return row_label_[row] >= 0; }
  std::size_t labeled_count(int cluster_id) const { return cluster_labeled_[static_cast<std::size_t>(cluster_id)]; }

  /// Cluster and instance the score-driven policy would pick next.
  Proposal propose() const;
  /// Instance the labeling policy picks inside a given cluster.
  Proposal propose_in_cluster(int cluster_id) const;

  /// Records the label, assigns a verbalizer token (if any remains in the
  /// cluster) and advances time. Throws UnknownClass or BudgetExhausted.
  const SelectionEvent& commit(const Proposal& proposal, std::string_view label);
  /// Same, without acquiring a verbalizer token.
  const SelectionEvent& commit_without_token(std::size_t instance_index, std::string_view label);

  /// propose -> provider -> commit.
  const SelectionEvent& step(const LabelProvider& provider);

  /// Re-applies a recorded event (crash recovery). Throws InvariantViolation
  /// if the event does not match what the policy chose.
  void replay(const SelectionEvent& event);

 private:
  const SelectionEvent& record(int cluster_id, std::size_t instance_index, std::string_view label,
                               const ClusterMetrics& scores, bool acquire_token);
  std::string checked_label(std::string_view label) const;
  void refresh_metrics(int touched_cluster, bool verbalizers_changed);

  const SharedSpace& space_;
  const Clustering& clustering_;
  SessionConfig config_;
  SessionState state_;
  std::vector<int> row_label_;              // class index per row, -1 if unlabeled
  std::vector<std::size_t> cluster_labeled_;
  std::vector<double> cohesion_static_;
  std::vector<double> separation_static_;
};

/// Runs `step` until the budget is spent or no cluster is eligible.
SessionState run_session(const SharedSpace& space, const Clustering& clustering, const SessionConfig& config,
                         const LabelProvider& provider);

}  // namespace jointsel
