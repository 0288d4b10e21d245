#include <doctest.h>

#include <fstream>

#include "jointsel/baselines.hpp"
#include "jointsel/error.hpp"
#include "jointsel/session_io.hpp"
#include "support.hpp"

using namespace jointsel;
using nlohmann::json;

namespace {

struct Fixture {
  SharedSpace space;
  Clustering clustering;
  SessionConfig config;
  SessionState state;
};

Fixture run(std::size_t budget) {
  Fixture f;
  f.space = testsupport::make_space({{1, 0, 0}, {0.9, 0.1, 0}, {0, 1, 0}, {0.1, 0.9, 0}},
                                    {{1, 0.05, 0}, {0.95, 0, 0.1}, {0, 1, 0.1}, {0.05, 0.9, 0}, {0.5, 0.5, 0.1}});
  f.clustering = testsupport::make_clustering(f.space, {0, 0, 1, 1, 0, 0, 1, 1, 0});
  f.config = validated(testsupport::config_for(budget, {"neg", "pos"}));
  f.state = run_session(f.space, f.clustering, f.config,
                        [](const std::string& id) { return id == "i0" || id == "i1" || id == "i4" ? "pos" : "neg"; });
  return f;
}

}  // namespace

TEST_CASE("config round trip") {
  SessionConfig c = testsupport::config_for(7, {"x", "y"});
  c.ablation.separation = false;
  c.separation_mode = SeparationMode::Negated;
  c.impurity_denominator = ImpurityDenominator::LabeledOnly;
  c.eq16_literal = true;
  c.seed = 99;
  c.strategy = StrategyName::RandomG;
  SessionConfig back = config_from_json(config_to_json(c));
  CHECK(config_to_json(back) == config_to_json(c));
  CHECK(back.ablation == c.ablation);
  CHECK(back.strategy == StrategyName::RandomG);
}

TEST_CASE("export round trip preserves events, labels and verbalizers") {
  Fixture f = run(4);
  json j = session_to_json(f.config, f.state);
  for (const char* key : {"config", "events", "labels", "verbalizers", "final_cluster_metrics"}) CHECK(j.contains(key));
  SessionExport back = session_from_json(j);
  CHECK(back.events == f.state.events);
  CHECK(back.labels == f.state.labels);
  REQUIRE(back.verbalizers.size() == f.state.verbalizers.size());
  VerbalizerSet resolved = resolve_verbalizers(back.verbalizers, f.space);
  CHECK(resolved.entries() == f.state.verbalizers.entries());
  CHECK(session_export_text(back.config, f.state) == session_export_text(f.config, f.state));

  std::string text = session_export_text(f.config, f.state);
  CHECK(text.back() == '\n');
  CHECK(json::parse(text) == j);
}

TEST_CASE("export file loads; structural errors are HeaderMalformed") {
  Fixture f = run(3);
  auto dir = testsupport::scratch_dir("session_io");
  {
    std::ofstream(dir / "s.json") << session_export_text(f.config, f.state);
  }
  CHECK(load_session_export(dir / "s.json").events == f.state.events);

  auto expect_malformed = [](const json& j) {
    try {
      session_from_json(j);
      FAIL("expected HeaderMalformed");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::HeaderMalformed);
    }
  };
  json good = session_to_json(f.config, f.state);
  expect_malformed(json::array());
  json no_events = good;
  no_events.erase("events");
  expect_malformed(no_events);
  json bad_event = good;
  bad_event["events"][0]["timestamp"] = "soon";
  expect_malformed(bad_event);

  {
    std::ofstream(dir / "broken.json") << "{ not json";
  }
  CHECK_THROWS_AS(load_session_export(dir / "broken.json"), Error);
  CHECK_THROWS_AS(load_session_export(dir / "missing.json"), Error);
}

TEST_CASE("resolving an unknown token id fails") {
  Fixture f = run(2);
  std::vector<VerbalizerEntry> entries{{"t99", 0, "pos", 0}};
  try {
    resolve_verbalizers(entries, f.space);
    FAIL("expected IndexOutOfRange");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::IndexOutOfRange);
  }
}
