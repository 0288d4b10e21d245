#pragma once

#include "jointsel/rng.hpp"
#include "jointsel/selection.hpp"

namespace jointsel {

/// Labels a uniformly drawn unlabeled instance; no verbalizer token is
/// acquired. Throws NoUnlabeledInstance.
const SelectionEvent& random_step(Session& session, const LabelProvider& provider, Rng& rng);

/// Draws a cluster uniformly among the eligible ones, then follows the same
/// instance/token policy as the score-driven step. Throws NoEligibleCluster.
const SelectionEvent& random_g_step(Session& session, const LabelProvider& provider, Rng& rng);

/// One step of whichever strategy the session config names.
const SelectionEvent& strategy_step(Session& session, const LabelProvider& provider, Rng& rng);

/// Runs the configured strategy until the budget is spent or nothing is
/// left to label. The strategy generator is the "strategy" sub-stream of
/// config.seed.
SessionState run_strategy(const SharedSpace& space, const Clustering& clustering, const SessionConfig& config,
                          const LabelProvider& provider);

/// Nearest unused token (over all non-discarded tokens) for each labeled
/// instance, in labeling order. Gives instance-only baselines a verbalizer
/// set derived from their labeled examples.
VerbalizerSet derive_verbalizers(const SharedSpace& space, const Clustering& clustering,
                                 const std::vector<SelectionEvent>& events);

}  // namespace jointsel
