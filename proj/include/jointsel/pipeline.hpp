#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "jointsel/clustering.hpp"
#include "jointsel/selection.hpp"
#include "jointsel/synthetic.hpp"
#include "jointsel/verbalizer_eval.hpp"

namespace jointsel {

/// Everything the commands read. Keys of the config file are the member
/// names below.
struct PipelineConfig {
  std::filesystem::path vocab;
  std::filesystem::path instances;
  std::filesystem::path texts;
  std::filesystem::path gold;  // oracle labels for select
  std::filesystem::path output_dir = "out";
  std::filesystem::path session;  // defaults to output_dir/session.json
  std::filesystem::path test_instances;
  std::filesystem::path test_gold;
  std::filesystem::path verbalizers;  // optional {class: [token ids]} for eval

  std::size_t reduced_dim = 64;
  std::size_t k = 40;
  std::uint64_t seed = 42;
  std::size_t refine_iterations = 5;
  std::size_t kmeans_restarts = 10;

  std::size_t budget = 32;
  std::vector<std::string> label_space;
  StrategyName strategy = StrategyName::ColdSelect;
  Ablation ablation;
  SeparationMode separation_mode = SeparationMode::Literal;
  ImpurityDenominator impurity_denominator = ImpurityDenominator::AllInstances;
  bool eq16_literal = false;

  MixtureSpec mixture;
  std::vector<std::size_t> budgets{8, 16, 32};
  std::vector<StrategyName> strategies{StrategyName::ColdSelect, StrategyName::Random, StrategyName::RandomG};
  std::size_t n_seeds = 20;
  bool timing = true;
  std::size_t threads = 1;

  std::string host = "127.0.0.1";
  int port = 8642;

  std::filesystem::path session_path() const { return session.empty() ? output_dir / "session.json" : session; }
};

/// Overrides the defaults with the keys of a flat JSON object (mixture keys
/// included, list values as arrays or comma-separated strings). Throws
/// InvalidConfig on an unknown key or a wrongly typed value.
PipelineConfig pipeline_config_from_json(const nlohmann::json& j, PipelineConfig base = {});

SessionConfig session_config(const PipelineConfig& config, std::vector<std::string> label_space);

struct Prepared {
  SharedSpace space;
  Clustering clustering;
};

/// PCA, kmeans, silhouette refinement and cluster filtering.
Prepared prepare_space(const EmbeddingSet& vocab, const EmbeddingSet& instances, std::size_t reduced_dim,
                       std::size_t k, std::uint64_t seed, std::size_t refine_iterations,
                       std::size_t kmeans_restarts = KMeansOptions{}.restarts);

inline constexpr const char* kSpaceFile = "space.cssp";
inline constexpr const char* kPcaFile = "pca.json";
inline constexpr const char* kClustersFile = "clusters.json";
inline constexpr const char* kManifestFile = "manifest.json";

// space.cssp: "CSSP" | u32 version (LE) | u64 header length (LE) | JSON
// header {reduced_dim, token_count, items: [[kind, id], ...]} | float64 rows (LE).
std::vector<unsigned char> serialize_space(const SharedSpace& space);
/// Vectors and items only; the PCA model lives in pca.json.
SharedSpace parse_space(std::span<const unsigned char> bytes);

nlohmann::json pca_to_json(const PcaModel& model);
PcaModel pca_from_json(const nlohmann::json& j);

/// Writes the three artifacts and manifest.json into dir; returns the manifest.
nlohmann::json write_prepared(const Prepared& prepared, const std::filesystem::path& dir,
                              const nlohmann::json& provenance);
Prepared load_prepared(const std::filesystem::path& dir);

std::string sha256_hex(std::span<const unsigned char> bytes);

// ---- commands -------------------------------------------------------------

nlohmann::json cmd_prepare(const PipelineConfig& config);
/// Oracle-mode session; writes the export to config.session_path().
SessionState cmd_select(const PipelineConfig& config);
/// Writes eval.json and eval.txt into output_dir.
EvalReport cmd_eval(const PipelineConfig& config);

struct SimRow {
  StrategyName strategy = StrategyName::ColdSelect;
  std::size_t budget = 0;
  std::uint64_t seed = 0;
  double accuracy = 0.0;  // skipped instances count as errors
  std::size_t n_labeled = 0;
  std::size_t n_verbalizers = 0;
  double wall_ms = 0.0;
};

/// Verbalizers used to score a finished session: its own tokens, or tokens
/// derived from its labeled instances when the strategy acquires none.
VerbalizerSet scoring_verbalizers(const Prepared& prepared, const SessionConfig& config, const SessionState& state);

/// One synthetic seed: generate, prepare, run every (strategy, budget) cell.
std::vector<SimRow> simulate_seed(const PipelineConfig& config, std::uint64_t seed);
/// Seeds config.seed .. config.seed + n_seeds - 1, canonically sorted.
std::vector<SimRow> cmd_simulate(const PipelineConfig& config);
/// Header, per-seed rows, then one mean row per (strategy, budget).
std::string simulate_csv(const std::vector<SimRow>& rows);

}  // namespace jointsel
