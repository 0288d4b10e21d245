#include <doctest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "jointsel/error.hpp"
#include "jointsel/pipeline.hpp"
#include "jointsel/session_io.hpp"
#include "support.hpp"

using namespace jointsel;
using nlohmann::json;

namespace {

const std::filesystem::path kFixture = std::filesystem::path(JOINTSEL_TEST_DATA) / "two_class";

PipelineConfig fixture_config(const std::string& scratch) {
  PipelineConfig c;
  c.vocab = kFixture / "vocab.cseb";
  c.instances = kFixture / "instances.cseb";
  c.texts = kFixture / "texts.jsonl";
  c.gold = kFixture / "gold.jsonl";
  c.test_instances = kFixture / "test_instances.cseb";
  c.test_gold = kFixture / "test_gold.jsonl";
  c.output_dir = testsupport::scratch_dir(scratch);
  c.reduced_dim = 8;
  c.k = 6;
  c.budget = 8;
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("prepare writes three hashed artifacts, identically on rerun") {
  PipelineConfig c = fixture_config("prepare");
  json m = cmd_prepare(c);
  REQUIRE(m["artifacts"].size() == 3);
  std::set<std::string> names;
  for (const auto& a : m["artifacts"]) {
    names.insert(a["name"].get<std::string>());
    CHECK(a["sha256"].get<std::string>().size() == 64);
    auto bytes = slurp(c.output_dir / a["name"].get<std::string>());
    CHECK(a["sha256"] == sha256_hex({reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size()}));
  }
  CHECK(names == std::set<std::string>{kSpaceFile, kPcaFile, kClustersFile});
  CHECK(json::parse(slurp(c.output_dir / kManifestFile)) == m);
  CHECK(cmd_prepare(c) == m);

  Prepared p = load_prepared(c.output_dir);
  for (const auto& cl : p.clustering.clusters) CHECK(cl.mixed());
}

TEST_CASE("sha256 of known strings") {
  std::string abc = "abc";
  CHECK(sha256_hex({reinterpret_cast<const unsigned char*>(abc.data()), abc.size()}) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex({}) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("space artifact round trip and parse errors") {
  SharedSpace s = testsupport::make_space({{1, 0}, {0, 1}}, {{1, 1}});
  auto bytes = serialize_space(s);
  SharedSpace back = parse_space(bytes);
  CHECK(back.vectors == s.vectors);
  CHECK(back.token_count == 2);
  CHECK(back.items[2].id == "i0");
  CHECK(back.items[2].kind == ItemKind::Instance);

  auto expect = [](std::vector<unsigned char> b, ErrorCode code) {
    try {
      parse_space(b);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == code);
    }
  };
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  expect(bad_magic, ErrorCode::MagicMismatch);
  auto bad_version = bytes;
  bad_version[4] = 9;
  expect(bad_version, ErrorCode::VersionUnsupported);
  auto short_payload = bytes;
  short_payload.pop_back();
  expect(short_payload, ErrorCode::SizeMismatch);
  expect({'C', 'S', 'S', 'P', 1}, ErrorCode::HeaderMalformed);

  PcaModel m;
  m.mean = {1, 2};
  m.components = Matrix(1, 2);
  m.components(0, 0) = 0.6;
  m.components(0, 1) = 0.8;
  m.explained_variance = {3.5};
  PcaModel mb = pca_from_json(json::parse(pca_to_json(m).dump()));
  CHECK(mb.components == m.components);
  CHECK(mb.mean == m.mean);
  CHECK_THROWS_AS(pca_from_json(json::object()), Error);
}

TEST_CASE("select: budget 8 gives 8 events; random-g is reproducible") {
  PipelineConfig c = fixture_config("select");
  cmd_prepare(c);
  SessionState st = cmd_select(c);
  CHECK(st.events.size() == 8);
  SessionExport e = load_session_export(c.session_path());
  CHECK(e.events.size() == 8);
  CHECK(e.config.label_space == std::vector<std::string>{"class_0", "class_1"});

  c.strategy = StrategyName::RandomG;
  cmd_select(c);
  std::string first = slurp(c.session_path());
  cmd_select(c);
  CHECK(slurp(c.session_path()) == first);
}

TEST_CASE("select names the instances the oracle file misses") {
  PipelineConfig c = fixture_config("select_missing");
  cmd_prepare(c);
  {
    std::ofstream out(c.output_dir / "partial.jsonl");
    out << "{\"id\": \"inst_00000\", \"label\": \"class_0\"}\n";
  }
  c.gold = c.output_dir / "partial.jsonl";
  try {
    cmd_select(c);
    FAIL("expected MissingOracleLabel");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingOracleLabel);
    CHECK(std::string(e.what()).find("inst_00001") != std::string::npos);
  }
}

TEST_CASE("eval: planted verbalizers, skipped classes, internal consistency") {
  PipelineConfig c = fixture_config("eval");
  cmd_prepare(c);
  c.budget = 1;
  cmd_select(c);

  EvalReport partial = cmd_eval(c);
  CHECK(partial.n_skipped > 0);
  std::size_t diag = 0, total = 0;
  for (std::size_t g = 0; g < partial.confusion.size(); ++g) {
    for (std::size_t p = 0; p < partial.confusion[g].size(); ++p) total += partial.confusion[g][p];
    diag += partial.confusion[g][g];
  }
  CHECK(total == partial.n_evaluated);
  CHECK(partial.accuracy == doctest::Approx(static_cast<double>(diag) / static_cast<double>(partial.n_evaluated)));
  CHECK(json::parse(slurp(c.output_dir / "eval.json"))["n_skipped"] == partial.n_skipped);
  CHECK(std::filesystem::exists(c.output_dir / "eval.txt"));

  c.verbalizers = kFixture / "planted_verbalizers.json";
  EvalReport planted = cmd_eval(c);
  CHECK(planted.n_skipped == 0);
  CHECK(planted.accuracy >= 0.9);
}

TEST_CASE("strategy matrix over budgets gives 9 accuracy rows") {
  PipelineConfig c = fixture_config("matrix");
  cmd_prepare(c);
  c.test_instances = kFixture / "test_instances.cseb";
  std::vector<std::string> rows;
  for (StrategyName s : {StrategyName::ColdSelect, StrategyName::Random, StrategyName::RandomG}) {
    for (std::size_t b : {8, 16, 32}) {
      c.strategy = s;
      c.budget = b;
      cmd_select(c);
      EvalReport r = cmd_eval(c);
      CHECK(r.accuracy >= 0.0);
      CHECK(r.accuracy <= 1.0);
      rows.push_back(std::string(to_string(s)) + "," + std::to_string(b));
    }
  }
  CHECK(rows.size() == 9);
}

TEST_CASE("simulate: shape and reproducibility") {
  PipelineConfig c;
  c.mixture.n_classes = 2;
  c.mixture.instances_per_class = 15;
  c.mixture.tokens_per_class = 3;
  c.mixture.outlier_tokens = 3;
  c.mixture.dim = 12;
  c.mixture.test_instances_per_class = 10;
  c.reduced_dim = 6;
  c.k = 5;
  c.kmeans_restarts = 2;
  c.n_seeds = 20;
  c.timing = false;
  auto rows = cmd_simulate(c);
  CHECK(rows.size() == 180);
  std::string csv = simulate_csv(rows);
  std::size_t lines = std::count(csv.begin(), csv.end(), '\n');
  CHECK(lines == 1 + 180 + 9);
  CHECK(csv.rfind("strategy,budget,seed,accuracy,n_labeled,n_verbalizers,wall_ms\n", 0) == 0);

  c.threads = 3;
  CHECK(simulate_csv(cmd_simulate(c)) == csv);

  auto one = simulate_seed(c, 45);
  for (const auto& r : one) {
    auto it = std::find_if(rows.begin(), rows.end(), [&](const SimRow& x) {
      return x.seed == 45 && x.strategy == r.strategy && x.budget == r.budget;
    });
    REQUIRE(it != rows.end());
    CHECK(it->accuracy == r.accuracy);
  }

  c.mixture.dim = 1;
  CHECK_THROWS_AS(cmd_simulate(c), Error);
}

TEST_CASE("pipeline config from a flat JSON object") {
  PipelineConfig c = pipeline_config_from_json(json{{"budget", 12},
                                                    {"label_space", "neg,pos"},
                                                    {"strategy", "random-g"},
                                                    {"ablation", json::array({"cohesion", "impurity"})},
                                                    {"separation_mode", "negated"},
                                                    {"n_classes", 3},
                                                    {"strategies", "coldselect,random"},
                                                    {"output_dir", "somewhere"}});
  CHECK(c.budget == 12);
  CHECK(c.label_space == std::vector<std::string>{"neg", "pos"});
  CHECK(c.strategy == StrategyName::RandomG);
  CHECK_FALSE(c.ablation.separation);
  CHECK(c.separation_mode == SeparationMode::Negated);
  CHECK(c.mixture.n_classes == 3);
  CHECK(c.strategies.size() == 2);
  CHECK(c.session_path() == std::filesystem::path("somewhere") / "session.json");
  CHECK(c.k == 40);
  CHECK(c.reduced_dim == 64);
  CHECK(c.refine_iterations == 5);
  CHECK(c.seed == 42);

  auto code = [](const json& j) {
    try {
      pipeline_config_from_json(j);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::Usage;
  };
  CHECK(code(json{{"bogus", 1}}) == ErrorCode::InvalidConfig);
  CHECK(code(json{{"budget", "many"}}) == ErrorCode::InvalidConfig);
  CHECK(code(json::array()) == ErrorCode::InvalidConfig);
  CHECK(code(json{{"strategy", "greedy"}}) == ErrorCode::InvalidConfig);
}
