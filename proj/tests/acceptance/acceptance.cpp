// Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned below.
// Exit status is non-zero when any criterion fails; --allow-benchmark-fail
// excludes the three directional benchmark criteria from the exit status
// (their lines are still printed as PASS or FAIL).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "jointsel/baselines.hpp"
#include "jointsel/error.hpp"
#include "jointsel/pipeline.hpp"
#include "jointsel/session_io.hpp"
#include "oracle/oracle.hpp"
#include "support.hpp"

using namespace jointsel;

namespace {

constexpr double kMetricTol = 1e-9;
constexpr double kKMeansTol = 1e-9;
constexpr double kProbTol = 1e-9;
constexpr double kMonotoneSlack = 1e-12;
constexpr std::size_t kMetricFixtures = 60;
constexpr std::size_t kKMeansSeeds = 100;
constexpr std::size_t kKMeansRequired = 95;
constexpr std::size_t kMonotoneFixtures = 100;
constexpr std::size_t kRefineFixtures = 100;
constexpr std::size_t kDeterminismSeeds = 20;
constexpr std::size_t kEvalInstances = 1000;
constexpr std::size_t kBenchSeeds = 20;
constexpr std::size_t kCoverSeeds = 50;
constexpr double kMetricsSeconds = 10, kKMeansSeconds = 30, kBenchSeconds = 300;

const std::filesystem::path kFixture = std::filesystem::path(JOINTSEL_TEST_DATA) / "two_class";

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

std::string sci(double v) {
  std::ostringstream os;
  os << std::scientific << std::setprecision(2) << v;
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

// ---- fixtures -------------------------------------------------------------

struct RandomFixture {
  SharedSpace space;
  Clustering clustering;
  LabelMap labels;
  VerbalizerSet verbalizers;
};

/// At most 20 items, every cluster non-empty; random labels and verbalizers.
RandomFixture random_fixture(std::uint64_t seed) {
  Rng rng(seed);
  std::size_t dim = 2 + rng.uniform_index(5);
  std::size_t n_tok = 2 + rng.uniform_index(7);
  std::size_t n_inst = 3 + rng.uniform_index(20 - n_tok - 2);
  std::size_t k = 2 + rng.uniform_index(3);
  std::vector<oracle::Vec> toks, inst;
  for (std::size_t i = 0; i < n_tok; ++i) toks.push_back(testsupport::random_vec(rng, dim));
  for (std::size_t i = 0; i < n_inst; ++i) inst.push_back(testsupport::random_vec(rng, dim));
  RandomFixture f;
  f.space = testsupport::make_space(toks, inst);
  std::size_t n = f.space.size();
  k = std::min(k, n);
  std::vector<int> assign(n);
  for (std::size_t i = 0; i < n; ++i) assign[i] = i < k ? static_cast<int>(i) : static_cast<int>(rng.uniform_index(k));
  shuffle(assign, rng);
  f.clustering = testsupport::make_clustering(f.space, assign);
  for (std::size_t i = n_tok; i < n; ++i) {
    if (rng.uniform01() < 0.5) f.labels[f.space.items[i].id] = rng.uniform01() < 0.5 ? "a" : "b";
  }
  for (std::size_t t = 0; t < n_tok; ++t) {
    if (rng.uniform01() < 0.4) f.verbalizers.add({f.space.items[t].id, t, rng.uniform01() < 0.5 ? "a" : "b", 0});
  }
  return f;
}

oracle::World world_of(const RandomFixture& f) {
  oracle::World w = testsupport::world_of(f.space, f.clustering);
  for (const auto& [id, label] : f.labels) w.labels[*f.space.find(ItemKind::Instance, id)] = label;
  for (const auto& v : f.verbalizers.entries()) w.verbalizers.push_back(v.token_index);
  return w;
}

MixtureSpec outlier_spec(std::uint64_t seed) {
  MixtureSpec s;
  s.n_classes = 2 + seed % 3;
  s.instances_per_class = 20;
  s.tokens_per_class = 4;
  s.outlier_tokens = 6;
  s.dim = 24;
  s.test_instances_per_class = 0;
  s.seed = seed;
  return s;
}

// ---- criteria -------------------------------------------------------------

Outcome metrics_oracle() {
  auto start = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::size_t checks = 0;
  auto compare = [&](double got, double want) {
    worst = std::max(worst, std::abs(got - want));
    ++checks;
  };
  for (std::uint64_t seed = 0; seed < kMetricFixtures; ++seed) {
    RandomFixture f = random_fixture(1000 + seed);
    oracle::World w = world_of(f);
    for (std::size_t a = 0; a < f.space.size(); ++a) {
      for (std::size_t b = 0; b < f.space.size(); ++b) {
        compare(cosine_similarity(f.space.vector(a), f.space.vector(b)), oracle::cos(w.pts[a], w.pts[b]));
      }
      compare(silhouette_score(f.space, f.clustering, a), oracle::silhouette(w.pts, w.assign, a));
    }
    compare(negative_silhouette_loss(f.space, f.clustering), oracle::negative_silhouette_loss(w.pts, w.assign));
    for (const auto& c : f.clustering.clusters) {
      compare(cohesion_static(c, f.space), oracle::cohesion_static(w, c.id));
      compare(cohesion_dynamic(c, f.space, f.verbalizers), oracle::cohesion_dynamic(w, c.id));
      for (bool negated : {false, true}) {
        SeparationMode m = negated ? SeparationMode::Negated : SeparationMode::Literal;
        compare(separation_static(c, f.clustering.clusters, m), oracle::separation_static(w, c.id, negated));
        compare(separation_dynamic(c, f.clustering.clusters, f.space, f.verbalizers, f.clustering.assignment, m),
                oracle::separation_dynamic(w, c.id, negated));
      }
      for (bool labeled_only : {false, true}) {
        auto d = labeled_only ? ImpurityDenominator::LabeledOnly : ImpurityDenominator::AllInstances;
        compare(impurity(c, f.space, f.labels, d), oracle::impurity(w, c.id, labeled_only));
      }
    }
  }
  double secs = seconds_since(start);
  return {worst <= kMetricTol && secs < kMetricsSeconds,
          std::to_string(kMetricFixtures) + " fixtures, " + std::to_string(checks) + " comparisons, max |diff| " +
              sci(worst) + ", " + fmt(secs, 2) + " s"};
}

Outcome kmeans_oracle() {
  auto start = std::chrono::steady_clock::now();
  std::size_t hits = 0;
  for (std::uint64_t seed = 0; seed < kKMeansSeeds; ++seed) {
    Rng rng(5000 + seed);
    std::size_t n = 4 + rng.uniform_index(7);
    std::size_t k = 2 + rng.uniform_index(2);
    std::size_t n_tok = 1 + rng.uniform_index(n - 1);
    std::vector<oracle::Vec> toks, inst;
    for (std::size_t i = 0; i < n; ++i) (i < n_tok ? toks : inst).push_back(testsupport::random_vec(rng, 3));
    SharedSpace s = testsupport::make_space(toks, inst);
    Clustering c = kmeans(s, k, seed);
    double best = oracle::exhaustive_kmeans_optimum(testsupport::rows_of(s), static_cast<int>(k));
    hits += kmeans_loss(s, c) <= best + kKMeansTol;
  }
  double secs = seconds_since(start);
  return {hits >= kKMeansRequired && secs < kKMeansSeconds,
          std::to_string(hits) + "/" + std::to_string(kKMeansSeeds) + " seeds at the exhaustive optimum, " +
              fmt(secs, 2) + " s"};
}

Outcome monotonicity() {
  std::size_t violations = 0, lloyd_steps = 0, refine_passes = 0;
  for (std::uint64_t seed = 0; seed < kMonotoneFixtures; ++seed) {
    Rng rng(9000 + seed);
    std::vector<oracle::Vec> toks, inst;
    std::size_t dim = 2 + rng.uniform_index(6);
    std::size_t n_tok = 10 + rng.uniform_index(10), n_inst = 20 + rng.uniform_index(40);
    for (std::size_t i = 0; i < n_tok; ++i) toks.push_back(testsupport::random_vec(rng, dim));
    for (std::size_t i = 0; i < n_inst; ++i) inst.push_back(testsupport::random_vec(rng, dim));
    SharedSpace s = testsupport::make_space(toks, inst);
    Clustering c = kmeans(s, 3 + rng.uniform_index(6), seed);
    for (std::size_t i = 1; i < c.loss_history.size(); ++i, ++lloyd_steps) {
      violations += c.loss_history[i].value > c.loss_history[i - 1].value + kMonotoneSlack;
    }
    double prev = negative_silhouette_loss(s, c);
    std::size_t before = c.loss_history.size();
    Clustering r = refine_by_silhouette(s, c, 5);
    for (std::size_t i = before; i < r.loss_history.size(); ++i, ++refine_passes) {
      violations += r.loss_history[i].value > prev + kMonotoneSlack;
      prev = r.loss_history[i].value;
    }
  }
  return {violations == 0, std::to_string(violations) + " violations over " + std::to_string(lloyd_steps) +
                               " Lloyd iterations and " + std::to_string(refine_passes) + " refinement passes"};
}

Outcome refine_postconditions() {
  std::size_t token_only = 0, instance_only = 0, failures = 0, with_discards = 0;
  for (std::uint64_t seed = 0; seed < kRefineFixtures; ++seed) {
    auto c = generate(outlier_spec(seed));
    try {
      Prepared p = prepare_space(c.vocab, c.instances, 12, 10, seed, 3, 3);
      bool discarded = false;
      for (int a : p.clustering.assignment) discarded |= a == kDiscarded;
      with_discards += discarded;
      for (const auto& cl : p.clustering.clusters) {
        token_only += cl.instance_count == 0;
        instance_only += cl.token_count == 0;
      }
    } catch (const Error&) {
      ++failures;
    }
  }
  return {token_only == 0 && instance_only == 0 && failures == 0,
          std::to_string(token_only) + " token-only, " + std::to_string(instance_only) + " instance-only, " +
              std::to_string(failures) + " errors; " + std::to_string(with_discards) + "/" +
              std::to_string(kRefineFixtures) + " fixtures discarded tokens"};
}

Outcome trace_equivalence() {
  EmbeddingSet vocab = load_embedding_set(kFixture / "vocab.cseb");
  EmbeddingSet instances = load_embedding_set(kFixture / "instances.cseb");
  auto gold_file = load_label_file(kFixture / "gold.jsonl");
  Prepared p = prepare_space(vocab, instances, 8, 6, 42, 5);
  SessionConfig cfg = testsupport::config_for(4, {"class_0", "class_1"});
  SessionState st = run_session(p.space, p.clustering, validated(cfg), [&](const std::string& id) { return gold_file.at(id); });

  oracle::World w = testsupport::world_of(p.space, p.clustering);
  std::map<std::size_t, std::string> gold;
  for (const auto& [id, label] : gold_file) gold[*p.space.find(ItemKind::Instance, id)] = label;
  oracle::TraceConfig tc;
  tc.budget = 4;
  auto expect = oracle::run_trace(w, gold, tc);

  std::size_t mismatches = 0;
  double worst = 0.0;
  if (expect.size() != st.events.size()) ++mismatches;
  for (std::size_t t = 0; t < std::min(expect.size(), st.events.size()); ++t) {
    const auto& e = st.events[t];
    std::optional<std::string> token;
    if (expect[t].token) token = p.space.items[*expect[t].token].id;
    mismatches += e.cluster_id != expect[t].cluster || e.instance_index != expect[t].instance || e.token_id != token ||
                  e.label != expect[t].label;
    for (auto [a, b] : {std::pair{e.scores.cohesion, expect[t].cohesion}, {e.scores.separation, expect[t].separation},
                        {e.scores.impurity, expect[t].impurity}, {e.scores.score, expect[t].score}}) {
      worst = std::max(worst, std::abs(a - b));
    }
  }
  return {mismatches == 0 && worst <= kMetricTol,
          std::to_string(st.events.size()) + " events, " + std::to_string(mismatches) + " mismatches, max score |diff| " +
              sci(worst)};
}

Outcome budget_determinism() {
  std::size_t runs = 0, bad_counts = 0, bad_bytes = 0;
  for (std::uint64_t seed = 0; seed < kDeterminismSeeds; ++seed) {
    MixtureSpec spec = outlier_spec(seed);
    spec.n_classes = 2;
    spec.instances_per_class = 12;
    auto corpus = generate(spec);
    Prepared p = prepare_space(corpus.vocab, corpus.instances, 8, 6, seed, 3, 3);
    std::size_t n = corpus.instances.count();
    auto provider = [&](const std::string& id) { return corpus.gold.at(id); };
    for (StrategyName strategy : {StrategyName::ColdSelect, StrategyName::Random, StrategyName::RandomG}) {
      for (std::size_t budget : {std::size_t{1}, std::size_t{8}, n, n + 5}) {
        SessionConfig cfg = testsupport::config_for(budget, corpus.label_space);
        cfg.strategy = strategy;
        cfg.seed = seed;
        cfg = validated(cfg);
        SessionState a = run_strategy(p.space, p.clustering, cfg, provider);
        SessionState b = run_strategy(p.space, p.clustering, cfg, provider);
        ++runs;
        bad_counts += a.labels.size() != std::min(budget, n) || a.events.size() != a.labels.size();
        bad_bytes += session_export_text(cfg, a) != session_export_text(cfg, b);
      }
    }
  }
  return {bad_counts == 0 && bad_bytes == 0, std::to_string(runs) + " run pairs, " + std::to_string(bad_counts) +
                                                 " wrong label counts, " + std::to_string(bad_bytes) + " export diffs"};
}

Outcome cold_start() {
  std::size_t clusters = 0, unequal = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto corpus = generate(outlier_spec(seed));
    Prepared p = prepare_space(corpus.vocab, corpus.instances, 12, 10, seed, 3, 3);
    for (SeparationMode mode : {SeparationMode::Literal, SeparationMode::Negated}) {
      SessionConfig cfg = testsupport::config_for(4, corpus.label_space);
      cfg.separation_mode = mode;
      Session s(p.space, p.clustering, validated(cfg));
      for (const auto& c : p.clustering.clusters) {
        const ClusterMetrics& m = s.state().cluster_metrics[static_cast<std::size_t>(c.id)];
        double expect = cohesion_static(c, p.space) + separation_static(c, p.clustering.clusters, mode);
        ++clusters;
        unequal += m.score != expect || m.impurity != 0.0;
      }
    }
  }
  return {unequal == 0, std::to_string(clusters) + " cluster scores at T=0, " + std::to_string(unequal) + " differ"};
}

Outcome evaluator() {
  Rng rng(2024);
  const std::size_t classes = 4, dim = 8;
  std::vector<oracle::Vec> toks;
  std::vector<std::string> labels;
  for (std::size_t c = 0; c < classes; ++c) {
    oracle::Vec e(dim, 0.0);
    e[c] = 1.0;
    toks.push_back(e);
    labels.push_back("c" + std::to_string(c));
  }
  SharedSpace s = testsupport::make_space(toks, {});
  VerbalizerSet v;
  for (std::size_t c = 0; c < classes; ++c) v.add({s.items[c].id, c, labels[c], c});
  double worst_sum = 0.0;
  std::size_t violations = 0;
  for (std::size_t i = 0; i < kEvalInstances; ++i) {
    oracle::Vec h = oracle::unit(testsupport::random_vec(rng, dim));
    auto p = class_probabilities(h, v, s, labels);
    double sum = 0.0;
    for (double x : p) sum += x;
    worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
    std::size_t want = static_cast<std::size_t>(std::max_element(h.begin(), h.begin() + classes) - h.begin());
    std::size_t got = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
    violations += want != got;
  }
  return {worst_sum <= kProbTol && violations == 0, std::to_string(kEvalInstances) + " instances, max |sum-1| " +
                                                        sci(worst_sum) + ", " + std::to_string(violations) +
                                                        " argmax violations"};
}

using Means = std::map<std::pair<StrategyName, std::size_t>, double>;

Means mean_accuracy(const std::vector<SimRow>& rows) {
  Means sum;
  std::map<std::pair<StrategyName, std::size_t>, std::size_t> n;
  for (const auto& r : rows) {
    sum[{r.strategy, r.budget}] += r.accuracy;
    ++n[{r.strategy, r.budget}];
  }
  for (auto& [key, v] : sum) v /= static_cast<double>(n[key]);
  return sum;
}

PipelineConfig bench_config() {
  PipelineConfig c;
  c.n_seeds = kBenchSeeds;
  c.timing = false;
  return c;
}

void benchmark_modes() {
  for (auto [sep, imp] : {std::pair{SeparationMode::Literal, ImpurityDenominator::LabeledOnly},
                          {SeparationMode::Negated, ImpurityDenominator::AllInstances},
                          {SeparationMode::Negated, ImpurityDenominator::LabeledOnly}}) {
    PipelineConfig cfg = bench_config();
    cfg.strategies = {StrategyName::ColdSelect};
    cfg.separation_mode = sep;
    cfg.impurity_denominator = imp;
    Means m = mean_accuracy(cmd_simulate(cfg));
    std::string line;
    for (std::size_t b : cfg.budgets) line += " B=" + std::to_string(b) + " " + fmt(m[{StrategyName::ColdSelect, b}]);
    std::cout << "INFO  coldselect separation=" << to_string(sep) << " impurity=" << to_string(imp) << ":" << line
              << std::endl;
  }
}

Outcome benchmark() {
  auto start = std::chrono::steady_clock::now();
  PipelineConfig cfg = bench_config();
  Means m = mean_accuracy(cmd_simulate(cfg));
  double secs = seconds_since(start);
  bool ok = secs < kBenchSeconds;
  std::size_t strict = 0;
  std::string detail;
  for (std::size_t b : cfg.budgets) {
    double cs = m[{StrategyName::ColdSelect, b}], r = m[{StrategyName::Random, b}], g = m[{StrategyName::RandomG, b}];
    ok = ok && cs >= r && cs >= g;
    strict += cs > r && cs > g;
    detail += "B=" + std::to_string(b) + " coldselect " + fmt(cs) + " random " + fmt(r) + " random-g " + fmt(g) + "; ";
  }
  ok = ok && strict >= 2;
  benchmark_modes();
  return {ok, detail + "strictly better at " + std::to_string(strict) + "/3, " + fmt(secs, 1) + " s"};
}

double coldselect_mean(const Ablation& ablation) {
  PipelineConfig cfg = bench_config();
  cfg.strategies = {StrategyName::ColdSelect};
  cfg.ablation = ablation;
  auto rows = cmd_simulate(cfg);
  double sum = 0.0;
  for (const auto& r : rows) sum += r.accuracy;
  return sum / static_cast<double>(rows.size());
}

Outcome ablation() {
  double full = coldselect_mean(parse_ablation("cohesion,separation,impurity"));
  bool ok = true;
  std::string detail = "full " + fmt(full);
  for (const char* variant : {"cohesion", "cohesion,separation", "cohesion,impurity"}) {
    double v = coldselect_mean(parse_ablation(variant));
    ok = ok && full >= v;
    detail += ", {" + std::string(variant) + "} " + fmt(v);
  }
  return {ok, detail + " (mean over budgets 8/16/32 and " + std::to_string(kBenchSeeds) + " seeds)"};
}

/// Steps until every class owns a verbalizer token; n + 1 if never.
std::size_t steps_to_cover(const Prepared& p, const SyntheticCorpus& corpus, StrategyName strategy, std::uint64_t seed,
                           bool& covered) {
  std::size_t n = corpus.instances.count();
  SessionConfig cfg = testsupport::config_for(n, corpus.label_space);
  cfg.strategy = strategy;
  cfg.seed = seed;
  cfg = validated(cfg);
  Session s(p.space, p.clustering, cfg);
  Rng rng = Rng::stream(seed, "strategy");
  auto provider = [&](const std::string& id) { return corpus.gold.at(id); };
  std::set<std::string> owned;
  while (!s.exhausted() && !s.eligible_clusters().empty()) {
    const SelectionEvent& e = strategy_step(s, provider, rng);
    if (e.token_id) owned.insert(e.label);
    if (owned.size() == corpus.label_space.size()) {
      covered = true;
      return s.state().events.size();
    }
  }
  covered = false;
  return n + 1;
}

Outcome budget_efficiency() {
  double cs_sum = 0.0, g_sum = 0.0;
  std::size_t cs_uncovered = 0, g_uncovered = 0;
  for (std::uint64_t i = 0; i < kCoverSeeds; ++i) {
    std::uint64_t seed = 42 + i;
    MixtureSpec spec;
    spec.seed = seed;
    auto corpus = generate(spec);
    Prepared p = prepare_space(corpus.vocab, corpus.instances, 64, 40, seed, 5);
    bool covered = false;
    cs_sum += static_cast<double>(steps_to_cover(p, corpus, StrategyName::ColdSelect, seed, covered));
    cs_uncovered += !covered;
    g_sum += static_cast<double>(steps_to_cover(p, corpus, StrategyName::RandomG, seed, covered));
    g_uncovered += !covered;
  }
  double cs = cs_sum / kCoverSeeds, g = g_sum / kCoverSeeds;
  return {cs <= g, "mean steps coldselect " + fmt(cs, 2) + " (" + std::to_string(cs_uncovered) + " uncovered), random-g " +
                       fmt(g, 2) + " (" + std::to_string(g_uncovered) + " uncovered); uncovered runs count as N+1"};
}

}  // namespace

int main(int argc, char** argv) {
  bool allow_benchmark_fail = false;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--allow-benchmark-fail") == 0) {
      allow_benchmark_fail = true;
    } else {
      std::cerr << "usage: jointsel_acceptance [--allow-benchmark-fail]\n";
      return 1;
    }
  }
  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
    bool benchmark;
  };
  const std::vector<Criterion> criteria{
      {"metrics match brute-force oracles", metrics_oracle, false},
      {"kmeans reaches the exhaustive optimum", kmeans_oracle, false},
      {"kmeans and silhouette losses are monotone", monotonicity, false},
      {"refinement leaves only mixed clusters", refine_postconditions, false},
      {"frozen 2-class trace matches the step-by-step oracle", trace_equivalence, false},
      {"budget exactness and byte-identical exports", budget_determinism, false},
      {"cold-start score is static cohesion plus separation", cold_start, false},
      {"evaluator probabilities and planted alignment", evaluator, false},
      {"desk-scale benchmark: coldselect vs baselines", benchmark, true},
      {"ablation: full metric set is best", ablation, true},
      {"budget efficiency: steps until every class has a token", budget_efficiency, true},
  };
  std::size_t failed = 0, counted = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << "  [" << (i + 1) << "] " << criteria[i].name << ": " << o.detail
              << "  (" << fmt(seconds_since(start), 1) << " s)" << std::endl;
    if (!o.pass) {
      ++failed;
      if (!(criteria[i].benchmark && allow_benchmark_fail)) ++counted;
    }
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return counted == 0 ? 0 : 1;
}
