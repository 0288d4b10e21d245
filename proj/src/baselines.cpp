#include "jointsel/baselines.hpp"

#include <limits>

#include "jointsel/error.hpp"

namespace jointsel {

namespace {

std::string ask(const LabelProvider& provider, const std::string& id) {
  try {
    return provider(id);
  } catch (const std::exception& e) {
    throw Error(ErrorCode::ProviderFailure, "label provider failed for '" + id + "': " + e.what());
  }
}

template <typename Commit>
const SelectionEvent& commit_answer(const std::string& id, Commit&& commit) {
  try {
    return commit();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::UnknownClass) {
      throw Error(ErrorCode::ProviderFailure, "label provider returned an unknown class for '" + id + "'");
    }
    throw;
  }
}

}  // namespace

const SelectionEvent& random_step(Session& session, const LabelProvider& provider, Rng& rng) {
  if (session.exhausted()) throw Error(ErrorCode::BudgetExhausted, "labeling budget is spent");
  auto pool = session.unlabeled_instances();
  if (pool.empty()) throw Error(ErrorCode::NoUnlabeledInstance, "every instance is labeled");
  std::size_t row = pool[static_cast<std::size_t>(rng.uniform_index(pool.size()))];
  const std::string& id = session.space().items[row].id;
  std::string answer = ask(provider, id);
  return commit_answer(id, [&]() -> const SelectionEvent& { return session.commit_without_token(row, answer); });
}

const SelectionEvent& random_g_step(Session& session, const LabelProvider& provider, Rng& rng) {
  if (session.exhausted()) throw Error(ErrorCode::BudgetExhausted, "labeling budget is spent");
  auto eligible = session.eligible_clusters();
  if (eligible.empty()) throw Error(ErrorCode::NoEligibleCluster, "every instance is labeled");
  int cluster = eligible[static_cast<std::size_t>(rng.uniform_index(eligible.size()))];
  Proposal p = session.propose_in_cluster(cluster);
  const std::string& id = session.space().items[p.instance_index].id;
  std::string answer = ask(provider, id);
  return commit_answer(id, [&]() -> const SelectionEvent& { return session.commit(p, answer); });
}

const SelectionEvent& strategy_step(Session& session, const LabelProvider& provider, Rng& rng) {
  switch (session.config().strategy) {
    case StrategyName::Random: return random_step(session, provider, rng);
    case StrategyName::RandomG: return random_g_step(session, provider, rng);
    case StrategyName::ColdSelect: break;
  }
  return session.step(provider);
}

SessionState run_strategy(const SharedSpace& space, const Clustering& clustering, const SessionConfig& config,
                          const LabelProvider& provider) {
  Session session(space, clustering, config);
  Rng rng = Rng::stream(session.config().seed, "strategy");
  while (!session.exhausted() && !session.eligible_clusters().empty()) strategy_step(session, provider, rng);
  return session.state();
}

VerbalizerSet derive_verbalizers(const SharedSpace& space, const Clustering& clustering,
                                 const std::vector<SelectionEvent>& events) {
  VerbalizerSet out;
  for (const auto& ev : events) {
    std::optional<std::size_t> pick;
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < space.token_count; ++t) {
      if (clustering.assignment[t] == kDiscarded || out.contains(t)) continue;
      double s = cosine_similarity(space.vector(t), space.vector(ev.instance_index));
      if (s > best) {
        best = s;
        pick = t;
      }
    }
    if (pick) out.add({space.items[*pick].id, *pick, ev.label, ev.timestamp});
  }
  return out;
}

}  // namespace jointsel
