#include <doctest.h>

#include <cmath>
#include <set>

#include "jointsel/baselines.hpp"
#include "jointsel/error.hpp"
#include "jointsel/pipeline.hpp"
#include "jointsel/synthetic.hpp"

using namespace jointsel;

namespace {

MixtureSpec small_spec() {
  MixtureSpec s;
  s.n_classes = 2;
  s.instances_per_class = 10;
  s.tokens_per_class = 2;
  s.outlier_tokens = 0;
  s.dim = 8;
  s.class_separation = 4.0;
  s.test_instances_per_class = 5;
  return s;
}

std::vector<double> mean_of(const EmbeddingSet& set, const std::map<std::string, std::string>& gold,
                            const std::string& cls) {
  std::vector<double> m(set.dim, 0.0);
  std::size_t n = 0;
  for (std::size_t i = 0; i < set.count(); ++i) {
    if (gold.at(set.ids[i]) != cls) continue;
    auto r = set.row(i);
    for (std::size_t j = 0; j < set.dim; ++j) m[j] += r[j];
    ++n;
  }
  for (double& x : m) x /= static_cast<double>(n);
  return m;
}

double distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("counts follow the spec") {
  auto c = generate(small_spec());
  CHECK(c.instances.count() == 20);
  CHECK(c.vocab.count() == 4);
  CHECK(c.gold.size() == 20);
  CHECK(c.planted_verbalizers.size() == 4);
  CHECK(c.test_instances.count() == 10);
  CHECK(c.test_gold.size() == 10);
  CHECK(c.label_space.size() == 2);
  CHECK(c.vocab.dim == 8);
  CHECK(c.instances.dim == 8);
}

TEST_CASE("generation is deterministic in the spec") {
  auto a = generate(small_spec()), b = generate(small_spec());
  CHECK(a.vocab.values == b.vocab.values);
  CHECK(a.instances.values == b.instances.values);
  CHECK(a.test_instances.values == b.test_instances.values);
  CHECK(a.gold == b.gold);
  MixtureSpec other = small_spec();
  other.seed = 43;
  CHECK(generate(other).instances.values != a.instances.values);
}

TEST_CASE("infeasible specs are rejected") {
  MixtureSpec s = small_spec();
  s.n_classes = 9;
  CHECK_THROWS_AS(generate(s), Error);
  s = small_spec();
  s.n_classes = 8;
  s.outlier_tokens = 1;
  try {
    generate(s);
    FAIL("expected InfeasibleSpec");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InfeasibleSpec);
  }
  s = small_spec();
  s.dim = 1;
  CHECK_THROWS_AS(check_feasible(s), Error);
  s = small_spec();
  s.class_separation = -1.0;
  CHECK_THROWS_AS(check_feasible(s), Error);
}

TEST_CASE("class means sit at the requested separation; planted tokens are closer than the noise") {
  MixtureSpec s = small_spec();
  s.instances_per_class = 400;
  s.dim = 16;
  s.class_separation = 6.0;
  auto c = generate(s);
  auto m0 = mean_of(c.instances, c.gold, "class_0");
  auto m1 = mean_of(c.instances, c.gold, "class_1");
  CHECK(std::abs(distance(m0, m1) - 6.0) < 0.3);
  for (std::size_t t = 0; t < c.vocab.count(); ++t) {
    auto r = c.vocab.row(t);
    std::vector<double> v(r.begin(), r.end());
    const auto& mine = c.planted_verbalizers.at(c.vocab.ids[t]) == "class_0" ? m0 : m1;
    CHECK(distance(v, mine) < 1.0);
  }
}

TEST_CASE("separation 0 makes the classes coincide") {
  MixtureSpec s = small_spec();
  s.class_separation = 0.0;
  s.instances_per_class = 400;
  auto c = generate(s);
  CHECK(distance(mean_of(c.instances, c.gold, "class_0"), mean_of(c.instances, c.gold, "class_1")) < 0.2);
}

TEST_CASE("files round-trip through the standard formats") {
  auto dir = std::filesystem::temp_directory_path() / "jointsel_test_synthetic_files";
  std::filesystem::remove_all(dir);
  auto c = generate(small_spec());
  write_corpus(c, dir);
  CHECK(load_embedding_set(dir / "vocab.cseb").values == c.vocab.values);
  CHECK(load_embedding_set(dir / "instances.cseb").ids == c.instances.ids);
  CHECK(load_label_file(dir / "gold.jsonl") == c.gold);
  CHECK(load_label_file(dir / "test_gold.jsonl") == c.test_gold);
  CHECK(load_instance_texts(dir / "texts.jsonl").size() == 20);
  CHECK(std::filesystem::exists(dir / "planted_verbalizers.json"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("sep 6: refine_clusters never hits NoMixedCluster over 100 seeds") {
  MixtureSpec s;
  s.instances_per_class = 30;
  s.tokens_per_class = 4;
  s.outlier_tokens = 6;
  s.dim = 32;
  s.test_instances_per_class = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    s.seed = seed;
    auto c = generate(s);
    CHECK_NOTHROW(prepare_space(c.vocab, c.instances, 16, 12, seed, 2, 3));
  }
}

// Every acquired token carries its planted class in >= 95/100 seeds. Full
// per-class coverage at this budget is only reported: the score-driven loop
// stays in its first cluster (measured 0/100 on the default spec).
TEST_CASE("sep 6: tokens acquired by a 2n-budget session match their planted class") {
  MixtureSpec s;
  std::size_t aligned = 0, covered_all = 0;
  for (std::uint64_t seed = 42; seed < 142; ++seed) {
    s.seed = seed;
    auto c = generate(s);
    Prepared p = prepare_space(c.vocab, c.instances, 64, 40, seed, 5);
    SessionConfig cfg;
    cfg.budget = 2 * s.n_classes;
    cfg.label_space = c.label_space;
    cfg.seed = seed;
    SessionState st = run_strategy(p.space, p.clustering, validated(cfg), [&](const std::string& id) { return c.gold.at(id); });
    std::set<std::string> covered;
    bool ok = !st.verbalizers.empty();
    for (const auto& v : st.verbalizers.entries()) {
      auto it = c.planted_verbalizers.find(v.token_id);
      if (it != c.planted_verbalizers.end() && it->second == v.label) {
        covered.insert(v.label);
      } else {
        ok = false;
      }
    }
    aligned += ok;
    covered_all += covered.size() == s.n_classes;
  }
  MESSAGE("seeds with every class covered: " << covered_all << "/100");
  CHECK(aligned >= 95);
}
