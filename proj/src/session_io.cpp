#include "jointsel/session_io.hpp"

#include "jointsel/embed_io.hpp"
#include "jointsel/error.hpp"

namespace jointsel {

using nlohmann::json;

json config_to_json(const SessionConfig& config) {
  return {{"budget", config.budget},
          {"label_space", config.label_space},
          {"ablation", to_string(config.ablation)},
          {"separation_mode", to_string(config.separation_mode)},
          {"impurity_denominator", to_string(config.impurity_denominator)},
          {"eq16_literal", config.eq16_literal},
          {"seed", config.seed},
          {"strategy", to_string(config.strategy)}};
}

SessionConfig config_from_json(const json& j) {
  SessionConfig c;
  c.budget = j.at("budget").get<std::size_t>();
  c.label_space = j.at("label_space").get<std::vector<std::string>>();
  c.ablation = parse_ablation(j.at("ablation").get<std::string>());
  c.separation_mode = parse_separation_mode(j.at("separation_mode").get<std::string>());
  c.impurity_denominator = parse_impurity_denominator(j.at("impurity_denominator").get<std::string>());
  c.eq16_literal = j.at("eq16_literal").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.strategy = parse_strategy(j.at("strategy").get<std::string>());
  return c;
}

json metrics_to_json(const ClusterMetrics& m) {
  return {{"cohesion", m.cohesion}, {"separation", m.separation}, {"impurity", m.impurity}, {"score", m.score}};
}

namespace {

ClusterMetrics metrics_from_json(const json& j) {
  return {j.at("cohesion").get<double>(), j.at("separation").get<double>(), j.at("impurity").get<double>(),
          j.at("score").get<double>()};
}

}  // namespace

json event_to_json(const SelectionEvent& ev) {
  return {{"timestamp", ev.timestamp},
          {"cluster_id", ev.cluster_id},
          {"instance_id", ev.instance_id},
          {"instance_index", ev.instance_index},
          {"label", ev.label},
          {"token_id", ev.token_id ? json(*ev.token_id) : json(nullptr)},
          {"scores", metrics_to_json(ev.scores)}};
}

SelectionEvent event_from_json(const json& j) {
  SelectionEvent ev;
  ev.timestamp = j.at("timestamp").get<std::size_t>();
  ev.cluster_id = j.at("cluster_id").get<int>();
  ev.instance_id = j.at("instance_id").get<std::string>();
  ev.instance_index = j.at("instance_index").get<std::size_t>();
  ev.label = j.at("label").get<std::string>();
  if (!j.at("token_id").is_null()) ev.token_id = j.at("token_id").get<std::string>();
  ev.scores = metrics_from_json(j.at("scores"));
  return ev;
}

json session_to_json(const SessionConfig& config, const SessionState& state) {
  json events = json::array();
  for (const auto& ev : state.events) events.push_back(event_to_json(ev));
  json verbalizers = json::array();
  for (const auto& v : state.verbalizers.entries()) {
    verbalizers.push_back({{"token_id", v.token_id}, {"class", v.label}, {"acquired_at", v.acquired_at}});
  }
  json metrics = json::object();
  for (std::size_t c = 0; c < state.cluster_metrics.size(); ++c) {
    metrics[std::to_string(c)] = metrics_to_json(state.cluster_metrics[c]);
  }
  return {{"config", config_to_json(config)},
          {"events", std::move(events)},
          {"labels", state.labels},
          {"verbalizers", std::move(verbalizers)},
          {"final_cluster_metrics", std::move(metrics)}};
}

std::string session_export_text(const SessionConfig& config, const SessionState& state) {
  return session_to_json(config, state).dump(2) + "\n";
}

SessionExport session_from_json(const json& j) {
  try {
    SessionExport out;
    out.config = config_from_json(j.at("config"));
    for (const auto& e : j.at("events")) out.events.push_back(event_from_json(e));
    out.labels = j.at("labels").get<LabelMap>();
    for (const auto& v : j.at("verbalizers")) {
      out.verbalizers.push_back(
          {v.at("token_id").get<std::string>(), 0, v.at("class").get<std::string>(), v.at("acquired_at").get<std::size_t>()});
    }
    for (const auto& [key, m] : j.at("final_cluster_metrics").items()) {
      out.final_cluster_metrics[std::stoi(key)] = metrics_from_json(m);
    }
    return out;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::HeaderMalformed, std::string("session export: ") + e.what());
  }
}

SessionExport load_session_export(const std::filesystem::path& path) {
  auto bytes = read_file_bytes(path);
  json j = json::parse(bytes.begin(), bytes.end(), nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::HeaderMalformed, path.string() + ": not valid JSON");
  try {
    return session_from_json(j);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.detail());
  }
}

VerbalizerSet resolve_verbalizers(const std::vector<VerbalizerEntry>& entries, const SharedSpace& space) {
  VerbalizerSet out;
  for (auto v : entries) {
    auto row = space.find(ItemKind::Token, v.token_id);
    if (!row) throw Error(ErrorCode::IndexOutOfRange, "verbalizer token '" + v.token_id + "' is not in the space");
    v.token_index = *row;
    out.add(std::move(v));
  }
  return out;
}

}  // namespace jointsel
