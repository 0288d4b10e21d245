#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "jointsel/selection.hpp"

namespace jointsel {

nlohmann::json config_to_json(const SessionConfig& config);
SessionConfig config_from_json(const nlohmann::json& j);

nlohmann::json metrics_to_json(const ClusterMetrics& m);
nlohmann::json event_to_json(const SelectionEvent& ev);
SelectionEvent event_from_json(const nlohmann::json& j);

/// {config, events[], labels{}, verbalizers[], final_cluster_metrics{}}.
nlohmann::json session_to_json(const SessionConfig& config, const SessionState& state);
/// Canonical bytes of the export (sorted keys, two-space indent, trailing newline).
std::string session_export_text(const SessionConfig& config, const SessionState& state);

struct SessionExport {
  SessionConfig config;
  std::vector<SelectionEvent> events;
  LabelMap labels;
  std::vector<VerbalizerEntry> verbalizers;  // token_index unresolved (0)
  std::map<int, ClusterMetrics> final_cluster_metrics;
};

/// Throws HeaderMalformed on a structurally invalid export.
SessionExport session_from_json(const nlohmann::json& j);
SessionExport load_session_export(const std::filesystem::path& path);

/// Resolves token ids against the space. Throws IndexOutOfRange.
VerbalizerSet resolve_verbalizers(const std::vector<VerbalizerEntry>& entries, const SharedSpace& space);

}  // namespace jointsel
