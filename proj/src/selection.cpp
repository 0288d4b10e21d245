#include "jointsel/selection.hpp"

#include <algorithm>
#include <limits>
#include <set>

#include <unicode/normalizer2.h>
#include <unicode/unistr.h>

#include "jointsel/error.hpp"

namespace jointsel {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool is_member(const Cluster& cluster, std::size_t row) {
  return std::binary_search(cluster.members.begin(), cluster.members.end(), row);
}

std::string trim(std::string_view s) {
  constexpr std::string_view ws = " \t\r\n\f\v";
  auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(ws);
  return std::string(s.substr(b, e - b + 1));
}

double weighted_score(const ClusterMetrics& m, const Ablation& a) {
  return (a.cohesion ? m.cohesion : 0.0) + (a.separation ? m.separation : 0.0) + (a.impurity ? m.impurity : 0.0);
}

ClusterMetrics metrics_for(const Cluster& cluster, const Clustering& clustering, const SharedSpace& space,
                           const LabelMap& labels, const VerbalizerSet& verbalizers, const SessionConfig& config) {
  ClusterMetrics m;
  m.cohesion = cohesion_dynamic(cluster, space, verbalizers);
  m.separation = clustering.clusters.size() < 2
                     ? 0.0
                     : separation_dynamic(cluster, clustering.clusters, space, verbalizers, clustering.assignment,
                                          config.separation_mode);
  m.impurity = impurity(cluster, space, labels, config.impurity_denominator);
  m.score = weighted_score(m, config.ablation);
  return m;
}

}  // namespace

// ---- configuration ------------------------------------------------------

std::string_view to_string(SeparationMode m) noexcept { return m == SeparationMode::Literal ? "literal" : "negated"; }

std::string_view to_string(ImpurityDenominator d) noexcept {
  return d == ImpurityDenominator::AllInstances ? "all-instances" : "labeled-only";
}

std::string_view to_string(StrategyName s) noexcept {
  switch (s) {
    case StrategyName::ColdSelect: return "coldselect";
    case StrategyName::Random: return "random";
    case StrategyName::RandomG: return "random-g";
  }
  return "coldselect";
}

SeparationMode parse_separation_mode(std::string_view s) {
  if (s == "literal") return SeparationMode::Literal;
  if (s == "negated") return SeparationMode::Negated;
  throw Error(ErrorCode::InvalidConfig, "separation_mode must be literal|negated, got '" + std::string(s) + "'");
}

ImpurityDenominator parse_impurity_denominator(std::string_view s) {
  if (s == "all-instances") return ImpurityDenominator::AllInstances;
  if (s == "labeled-only") return ImpurityDenominator::LabeledOnly;
  throw Error(ErrorCode::InvalidConfig,
              "impurity_denominator must be all-instances|labeled-only, got '" + std::string(s) + "'");
}

StrategyName parse_strategy(std::string_view s) {
  if (s == "coldselect") return StrategyName::ColdSelect;
  if (s == "random") return StrategyName::Random;
  if (s == "random-g") return StrategyName::RandomG;
  throw Error(ErrorCode::InvalidConfig, "strategy must be coldselect|random|random-g, got '" + std::string(s) + "'");
}

Ablation parse_ablation(std::string_view s) {
  Ablation a{false, false, false};
  std::size_t pos = 0;
  while (pos <= s.size()) {
    auto next = s.find(',', pos);
    auto term = trim(s.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
    if (term == "cohesion") {
      a.cohesion = true;
    } else if (term == "separation") {
      a.separation = true;
    } else if (term == "impurity") {
      a.impurity = true;
    } else if (!term.empty()) {
      throw Error(ErrorCode::InvalidConfig, "unknown ablation term '" + term + "'");
    }
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return a;
}

std::string to_string(const Ablation& a) {
  std::string out;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += ",";
    out += name;
  };
  add(a.cohesion, "cohesion");
  add(a.separation, "separation");
  add(a.impurity, "impurity");
  return out;
}

std::string canonical_label(std::string_view label) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw Error(ErrorCode::InvariantViolation, "ICU NFC normalizer unavailable");
  icu::UnicodeString src = icu::UnicodeString::fromUTF8(icu::StringPiece(label.data(), static_cast<int32_t>(label.size())));
  icu::UnicodeString dst = nfc->normalize(src, status);
  if (U_FAILURE(status)) throw Error(ErrorCode::InvalidConfig, "label is not valid UTF-8");
  std::string out;
  dst.toUTF8String(out);
  return trim(out);
}

SessionConfig validated(SessionConfig config) {
  if (config.budget < 1) throw Error(ErrorCode::InvalidConfig, "budget must be >= 1");
  if (config.label_space.empty()) throw Error(ErrorCode::InvalidConfig, "label_space must not be empty");
  if (!config.ablation.cohesion) throw Error(ErrorCode::InvalidConfig, "ablation must include cohesion");
  std::set<std::string> seen;
  for (auto& name : config.label_space) {
    name = canonical_label(name);
    if (name.empty()) throw Error(ErrorCode::InvalidConfig, "empty class name");
    if (!seen.insert(name).second) throw Error(ErrorCode::InvalidConfig, "duplicate class '" + name + "'");
  }
  return config;
}

// ---- verbalizer set -----------------------------------------------------

bool VerbalizerSet::contains(std::size_t token_index) const noexcept {
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.token_index == token_index; });
}

void VerbalizerSet::add(VerbalizerEntry entry) {
  for (const auto& e : entries_) {
    if (e.token_index == entry.token_index || e.token_id == entry.token_id) {
      throw Error(ErrorCode::DuplicateId, "token '" + entry.token_id + "' is already a verbalizer");
    }
  }
  entries_.push_back(std::move(entry));
}

// ---- metrics ------------------------------------------------------------

double cohesion_static(const Cluster& cluster, const SharedSpace& space) {
  if (cluster.members.empty()) throw Error(ErrorCode::EmptyCluster, "cluster " + std::to_string(cluster.id));
  double sum = 0.0;
  for (std::size_t i : cluster.members) sum += cosine_similarity(space.vector(i), cluster.centroid);
  return sum / static_cast<double>(cluster.members.size());
}

double separation_static(const Cluster& cluster, const std::vector<Cluster>& all_clusters, SeparationMode mode) {
  if (all_clusters.size() < 2) throw Error(ErrorCode::SingleCluster, "separation needs at least two clusters");
  double best = -kInf;
  for (const auto& other : all_clusters) {
    if (other.id == cluster.id) continue;
    best = std::max(best, cosine_similarity(cluster.centroid, other.centroid));
  }
  return mode == SeparationMode::Literal ? best : 1.0 - best;
}

double impurity(const Cluster& cluster, const SharedSpace& space, const LabelMap& labels,
                ImpurityDenominator denominator) {
  if (cluster.members.empty()) throw Error(ErrorCode::EmptyCluster, "cluster " + std::to_string(cluster.id));
  std::map<std::string, std::size_t> counts;
  std::size_t labeled = 0;
  for (std::size_t i : cluster.members) {
    if (space.is_token(i)) continue;
    auto it = labels.find(space.items[i].id);
    if (it == labels.end()) continue;
    ++counts[it->second];
    ++labeled;
  }
  if (labeled == 0) return 0.0;
  std::size_t majority = 0;
  for (const auto& [_, n] : counts) majority = std::max(majority, n);
  std::size_t total = denominator == ImpurityDenominator::AllInstances ? cluster.instance_count : labeled;
  return 1.0 - static_cast<double>(majority) / static_cast<double>(total);
}

double cohesion_dynamic(const Cluster& cluster, const SharedSpace& space, const VerbalizerSet& verbalizers) {
  if (cluster.members.empty()) throw Error(ErrorCode::EmptyCluster, "cluster " + std::to_string(cluster.id));
  std::vector<std::size_t> inside;
  for (const auto& v : verbalizers.entries()) {
    if (is_member(cluster, v.token_index)) inside.push_back(v.token_index);
  }
  if (inside.empty()) return cohesion_static(cluster, space);
  double sum = 0.0;
  for (std::size_t i : cluster.members) {
    double best = -kInf;
    for (std::size_t t : inside) best = std::max(best, cosine_similarity(space.vector(i), space.vector(t)));
    sum += best;
  }
  return sum / static_cast<double>(cluster.members.size());
}

double separation_dynamic(const Cluster& cluster, const std::vector<Cluster>& all_clusters, const SharedSpace& space,
                          const VerbalizerSet& verbalizers, const std::vector<int>& assignment, SeparationMode mode) {
  double best = -kInf;
  bool any = false;
  for (const auto& v : verbalizers.entries()) {
    if (assignment[v.token_index] == cluster.id) continue;
    any = true;
    best = std::max(best, cosine_similarity(cluster.centroid, space.vector(v.token_index)));
  }
  if (!any) return separation_static(cluster, all_clusters, mode);
  return mode == SeparationMode::Literal ? best : 1.0 - best;
}

bool has_unlabeled_instance(const Cluster& cluster, const SharedSpace& space, const LabelMap& labels) {
  return std::any_of(cluster.members.begin(), cluster.members.end(), [&](std::size_t i) {
    return !space.is_token(i) && !labels.contains(space.items[i].id);
  });
}

ClusterMetrics score_cluster(const Cluster& cluster, const Clustering& clustering, const SharedSpace& space,
                             const LabelMap& labels, const VerbalizerSet& verbalizers, const SessionConfig& config) {
  if (!has_unlabeled_instance(cluster, space, labels)) {
    throw Error(ErrorCode::IneligibleCluster, "cluster " + std::to_string(cluster.id) + " has no unlabeled instance");
  }
  return metrics_for(cluster, clustering, space, labels, verbalizers, config);
}

int select_cluster(const Clustering& clustering, const SharedSpace& space, const LabelMap& labels,
                   const VerbalizerSet& verbalizers, const SessionConfig& config) {
  int best = -1;
  double best_score = -kInf;
  for (const auto& c : clustering.clusters) {
    if (!has_unlabeled_instance(c, space, labels)) continue;
    double s = metrics_for(c, clustering, space, labels, verbalizers, config).score;
    if (best < 0 || s > best_score) {
      best = c.id;
      best_score = s;
    }
  }
  if (best < 0) throw Error(ErrorCode::NoEligibleCluster, "every instance is labeled");
  return best;
}

std::size_t select_instance(const Cluster& cluster, const SharedSpace& space, const LabelMap& labels,
                            bool eq16_literal) {
  std::vector<std::size_t> unlabeled;
  std::vector<std::size_t> labeled;
  for (std::size_t i : cluster.members) {
    if (space.is_token(i)) continue;
    (labels.contains(space.items[i].id) ? labeled : unlabeled).push_back(i);
  }
  if (unlabeled.empty()) {
    throw Error(ErrorCode::NoUnlabeledInstance, "cluster " + std::to_string(cluster.id) + " is fully labeled");
  }

  std::size_t pick = unlabeled.front();
  if (labeled.empty()) {
    double best = -kInf;
    for (std::size_t i : unlabeled) {
      double s = cosine_similarity(space.vector(i), cluster.centroid);
      if (s > best) {
        best = s;
        pick = i;
      }
    }
    return pick;
  }

  double best = eq16_literal ? -kInf : kInf;
  for (std::size_t i : unlabeled) {
    double nearest = -kInf;
    double farthest = kInf;
    for (std::size_t j : labeled) {
      double s = cosine_similarity(space.vector(i), space.vector(j));
      nearest = std::max(nearest, s);
      farthest = std::min(farthest, s);
    }
    if (eq16_literal ? farthest > best : nearest < best) {
      best = eq16_literal ? farthest : nearest;
      pick = i;
    }
  }
  return pick;
}

std::optional<std::size_t> select_verbalizer_token(const Cluster& cluster, const SharedSpace& space,
                                                   std::size_t instance_index, const VerbalizerSet& verbalizers) {
  std::optional<std::size_t> pick;
  double best = -kInf;
  for (std::size_t t : cluster.members) {
    if (!space.is_token(t) || verbalizers.contains(t)) continue;
    double s = cosine_similarity(space.vector(t), space.vector(instance_index));
    if (s > best) {
      best = s;
      pick = t;
    }
  }
  return pick;
}

// ---- session ------------------------------------------------------------

Session::Session(const SharedSpace& space, const Clustering& clustering, SessionConfig config)
    : space_(space), clustering_(clustering), config_(validated(std::move(config))) {
  if (clustering_.assignment.size() != space_.size()) {
    throw Error(ErrorCode::InvariantViolation, "clustering does not match the shared space");
  }
  for (const auto& c : clustering_.clusters) {
    if (c.members.empty()) throw Error(ErrorCode::EmptyCluster, "cluster " + std::to_string(c.id));
  }
  state_.remaining_budget = config_.budget;
  row_label_.assign(space_.size(), -1);
  cluster_labeled_.assign(clustering_.clusters.size(), 0);
  state_.cluster_metrics.resize(clustering_.clusters.size());
  for (const auto& c : clustering_.clusters) {
    state_.cluster_metrics[static_cast<std::size_t>(c.id)] =
        metrics_for(c, clustering_, space_, state_.labels, state_.verbalizers, config_);
  }
}

std::vector<int> Session::eligible_clusters() const {
  std::vector<int> out;
  for (const auto& c : clustering_.clusters) {
    if (cluster_labeled_[static_cast<std::size_t>(c.id)] < c.instance_count) out.push_back(c.id);
  }
  return out;
}

std::vector<std::size_t> Session::unlabeled_instances() const {
  std::vector<std::size_t> out;
  for (std::size_t i = space_.token_count; i < space_.size(); ++i) {
    if (row_label_[i] < 0 && clustering_.assignment[i] != kDiscarded) out.push_back(i);
  }
  return out;
}

Proposal Session::propose() const {
  if (exhausted()) throw Error(ErrorCode::BudgetExhausted, "labeling budget is spent");
  int best = -1;
  double best_score = -kInf;
  for (int c : eligible_clusters()) {
    double s = state_.cluster_metrics[static_cast<std::size_t>(c)].score;
    if (best < 0 || s > best_score) {
      best = c;
      best_score = s;
    }
  }
  if (best < 0) throw Error(ErrorCode::NoEligibleCluster, "every instance is labeled");
  return propose_in_cluster(best);
}

Proposal Session::propose_in_cluster(int cluster_id) const {
  if (cluster_id < 0 || static_cast<std::size_t>(cluster_id) >= clustering_.clusters.size()) {
    throw Error(ErrorCode::IndexOutOfRange, "cluster " + std::to_string(cluster_id));
  }
  const auto& cluster = clustering_.clusters[static_cast<std::size_t>(cluster_id)];
  Proposal p;
  p.cluster_id = cluster_id;
  p.instance_index = select_instance(cluster, space_, state_.labels, config_.eq16_literal);
  p.scores = state_.cluster_metrics[static_cast<std::size_t>(cluster_id)];
  return p;
}

std::string Session::checked_label(std::string_view label) const {
  std::string canon = canonical_label(label);
  if (std::find(config_.label_space.begin(), config_.label_space.end(), canon) == config_.label_space.end()) {
    throw Error(ErrorCode::UnknownClass, "class '" + canon + "' is not in the label space");
  }
  return canon;
}

const SelectionEvent& Session::commit(const Proposal& proposal, std::string_view label) {
  if (exhausted()) throw Error(ErrorCode::BudgetExhausted, "labeling budget is spent");
  std::string canon = checked_label(label);
  if (proposal.instance_index >= space_.size() || space_.is_token(proposal.instance_index) ||
      clustering_.assignment[proposal.instance_index] != proposal.cluster_id ||
      is_labeled(proposal.instance_index)) {
    throw Error(ErrorCode::InvariantViolation, "proposal does not name an unlabeled instance of its cluster");
  }
  return record(proposal.cluster_id, proposal.instance_index, canon, proposal.scores, true);
}

const SelectionEvent& Session::commit_without_token(std::size_t instance_index, std::string_view label) {
  if (exhausted()) throw Error(ErrorCode::BudgetExhausted, "labeling budget is spent");
  std::string canon = checked_label(label);
  if (instance_index >= space_.size() || space_.is_token(instance_index) || is_labeled(instance_index) ||
      clustering_.assignment[instance_index] == kDiscarded) {
    throw Error(ErrorCode::InvariantViolation, "row " + std::to_string(instance_index) + " is not an unlabeled instance");
  }
  int cluster = clustering_.assignment[instance_index];
  return record(cluster, instance_index, canon, state_.cluster_metrics[static_cast<std::size_t>(cluster)], false);
}

const SelectionEvent& Session::step(const LabelProvider& provider) {
  Proposal p = propose();
  const std::string& id = space_.items[p.instance_index].id;
  std::string answer;
  try {
    answer = provider(id);
  } catch (const std::exception& e) {
    throw Error(ErrorCode::ProviderFailure, "label provider failed for '" + id + "': " + e.what());
  }
  try {
    return commit(p, answer);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::UnknownClass) {
      throw Error(ErrorCode::ProviderFailure, "label provider returned an unknown class for '" + id + "'");
    }
    throw;
  }
}

void Session::replay(const SelectionEvent& event) {
  auto row = space_.find(ItemKind::Instance, event.instance_id);
  if (!row || clustering_.assignment[*row] != event.cluster_id) {
    throw Error(ErrorCode::InvariantViolation, "event for '" + event.instance_id + "' does not match the clustering");
  }
  if (config_.strategy == StrategyName::ColdSelect) {
    Proposal p = propose();
    if (p.instance_index != *row) {
      throw Error(ErrorCode::InvariantViolation, "event " + std::to_string(event.timestamp) + " labels '" +
                                                     event.instance_id + "' but the policy picks '" +
                                                     space_.items[p.instance_index].id + "'");
    }
  }
  const SelectionEvent& applied =
      config_.strategy == StrategyName::Random
          ? commit_without_token(*row, event.label)
          : commit({event.cluster_id, *row, state_.cluster_metrics[static_cast<std::size_t>(event.cluster_id)]}, event.label);
  if (applied.token_id != event.token_id || applied.timestamp != event.timestamp) {
    throw Error(ErrorCode::InvariantViolation, "replayed event " + std::to_string(event.timestamp) + " diverges");
  }
}

const SelectionEvent& Session::record(int cluster_id, std::size_t instance_index, std::string_view label,
                                      const ClusterMetrics& scores, bool acquire_token) {
  const auto& cluster = clustering_.clusters[static_cast<std::size_t>(cluster_id)];
  std::optional<std::size_t> token;
  if (acquire_token) token = select_verbalizer_token(cluster, space_, instance_index, state_.verbalizers);

  const std::string& id = space_.items[instance_index].id;
  state_.labels[id] = std::string(label);
  auto cls = std::find(config_.label_space.begin(), config_.label_space.end(), label) - config_.label_space.begin();
  row_label_[instance_index] = static_cast<int>(cls);
  ++cluster_labeled_[static_cast<std::size_t>(cluster_id)];

  SelectionEvent ev;
  ev.timestamp = state_.timestamp;
  ev.cluster_id = cluster_id;
  ev.instance_id = id;
  ev.instance_index = instance_index;
  ev.label = std::string(label);
  ev.scores = scores;
  if (token) {
    ev.token_id = space_.items[*token].id;
    state_.verbalizers.add({*ev.token_id, *token, std::string(label), state_.timestamp});
  }
  state_.events.push_back(std::move(ev));
  --state_.remaining_budget;
  ++state_.timestamp;
  refresh_metrics(cluster_id, token.has_value());
  return state_.events.back();
}

void Session::refresh_metrics(int touched_cluster, bool verbalizers_changed) {
  if (!verbalizers_changed) {
    // Only the labeled cluster's impurity moved.
    const auto& c = clustering_.clusters[static_cast<std::size_t>(touched_cluster)];
    auto& m = state_.cluster_metrics[static_cast<std::size_t>(touched_cluster)];
    m.impurity = impurity(c, space_, state_.labels, config_.impurity_denominator);
    m.score = weighted_score(m, config_.ablation);
    return;
  }
  for (const auto& c : clustering_.clusters) {
    auto& m = state_.cluster_metrics[static_cast<std::size_t>(c.id)];
    if (c.id == touched_cluster) {
      m = metrics_for(c, clustering_, space_, state_.labels, state_.verbalizers, config_);
      continue;
    }
    m.separation = clustering_.clusters.size() < 2
                       ? 0.0
                       : separation_dynamic(c, clustering_.clusters, space_, state_.verbalizers,
                                            clustering_.assignment, config_.separation_mode);
    m.score = weighted_score(m, config_.ablation);
  }
}

SessionState run_session(const SharedSpace& space, const Clustering& clustering, const SessionConfig& config,
                         const LabelProvider& provider) {
  Session session(space, clustering, config);
  while (!session.exhausted() && !session.eligible_clusters().empty()) session.step(provider);
  return session.state();
}

}  // namespace jointsel
