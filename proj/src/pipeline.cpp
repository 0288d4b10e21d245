#include "jointsel/pipeline.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "jointsel/baselines.hpp"
#include "jointsel/error.hpp"
#include "jointsel/session_io.hpp"

namespace jointsel {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "artifact I/O assumes a little-endian host");

namespace {

constexpr unsigned char kSpaceMagic[4] = {'C', 'S', 'S', 'P'};
constexpr std::uint32_t kSpaceVersion = 1;
constexpr std::size_t kSpacePreamble = 16;

template <typename T>
void append_raw(std::vector<unsigned char>& out, T value) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

template <typename T>
T read_raw(const unsigned char* p) {
  T value;
  std::memcpy(&value, p, sizeof(T));
  return value;
}

json read_json_file(const std::filesystem::path& path) {
  auto bytes = read_file_bytes(path);
  json j = json::parse(bytes.begin(), bytes.end(), nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::HeaderMalformed, path.string() + ": not valid JSON");
  return j;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

std::vector<unsigned char> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

json artifact_entry(const std::string& name, std::span<const unsigned char> bytes) {
  return {{"name", name}, {"bytes", bytes.size()}, {"sha256", sha256_hex(bytes)}};
}

json file_fingerprint(const std::filesystem::path& path) {
  auto bytes = read_file_bytes(path);
  return {{"file", path.filename().string()}, {"sha256", sha256_hex(bytes)}};
}

LabelProvider oracle_provider(const std::map<std::string, std::string>& oracle) {
  return [&oracle](const std::string& id) -> std::string {
    auto it = oracle.find(id);
    if (it == oracle.end()) throw Error(ErrorCode::MissingOracleLabel, "no oracle label for '" + id + "'");
    return it->second;
  };
}

void require_oracle_coverage(const SharedSpace& space, const std::map<std::string, std::string>& oracle) {
  std::vector<std::string> missing;
  for (const auto& item : space.items) {
    if (item.kind == ItemKind::Instance && !oracle.count(item.id)) missing.push_back(item.id);
  }
  if (missing.empty()) return;
  std::string list;
  for (std::size_t i = 0; i < missing.size() && i < 10; ++i) list += (i ? ", " : "") + missing[i];
  if (missing.size() > 10) list += ", ... (" + std::to_string(missing.size()) + " total)";
  throw Error(ErrorCode::MissingOracleLabel, "oracle file has no label for: " + list);
}

std::string format_double(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

}  // namespace

namespace {

std::vector<std::string> string_list(const json& v) {
  if (v.is_array()) return v.get<std::vector<std::string>>();
  std::vector<std::string> out;
  std::string s = v.get<std::string>();
  std::size_t start = 0;
  while (start <= s.size()) {
    std::size_t comma = s.find(',', start);
    if (comma == std::string::npos) comma = s.size();
    if (comma > start) out.push_back(s.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

}  // namespace

PipelineConfig pipeline_config_from_json(const json& j, PipelineConfig c) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "config must be a JSON object");
  using Setter = std::function<void(const json&)>;
  auto path = [](std::filesystem::path& p) { return Setter([&p](const json& v) { p = v.get<std::string>(); }); };
  auto size = [](std::size_t& n) { return Setter([&n](const json& v) { n = v.get<std::size_t>(); }); };
  const std::map<std::string, Setter> setters{
      {"vocab", path(c.vocab)},
      {"instances", path(c.instances)},
      {"texts", path(c.texts)},
      {"gold", path(c.gold)},
      {"output_dir", path(c.output_dir)},
      {"session", path(c.session)},
      {"test_instances", path(c.test_instances)},
      {"test_gold", path(c.test_gold)},
      {"verbalizers", path(c.verbalizers)},
      {"reduced_dim", size(c.reduced_dim)},
      {"k", size(c.k)},
      {"seed", [&](const json& v) { c.seed = v.get<std::uint64_t>(); }},
      {"refine_iterations", size(c.refine_iterations)},
      {"kmeans_restarts", size(c.kmeans_restarts)},
      {"budget", size(c.budget)},
      {"label_space", [&](const json& v) { c.label_space = string_list(v); }},
      {"strategy", [&](const json& v) { c.strategy = parse_strategy(v.get<std::string>()); }},
      {"ablation",
       [&](const json& v) {
         auto parts = string_list(v);
         std::string joined;
         for (const auto& p : parts) joined += (joined.empty() ? "" : ",") + p;
         c.ablation = parse_ablation(joined);
       }},
      {"separation_mode", [&](const json& v) { c.separation_mode = parse_separation_mode(v.get<std::string>()); }},
      {"impurity_denominator",
       [&](const json& v) { c.impurity_denominator = parse_impurity_denominator(v.get<std::string>()); }},
      {"eq16_literal", [&](const json& v) { c.eq16_literal = v.get<bool>(); }},
      {"n_classes", size(c.mixture.n_classes)},
      {"instances_per_class", size(c.mixture.instances_per_class)},
      {"test_instances_per_class", size(c.mixture.test_instances_per_class)},
      {"tokens_per_class", size(c.mixture.tokens_per_class)},
      {"outlier_tokens", size(c.mixture.outlier_tokens)},
      {"dim", size(c.mixture.dim)},
      {"class_separation", [&](const json& v) { c.mixture.class_separation = v.get<double>(); }},
      {"token_spread", [&](const json& v) { c.mixture.token_spread = v.get<double>(); }},
      {"budgets", [&](const json& v) { c.budgets = v.get<std::vector<std::size_t>>(); }},
      {"strategies",
       [&](const json& v) {
         c.strategies.clear();
         for (const auto& s : string_list(v)) c.strategies.push_back(parse_strategy(s));
       }},
      {"n_seeds", size(c.n_seeds)},
      {"timing", [&](const json& v) { c.timing = v.get<bool>(); }},
      {"threads", size(c.threads)},
      {"host", [&](const json& v) { c.host = v.get<std::string>(); }},
      {"port", [&](const json& v) { c.port = v.get<int>(); }},
  };
  for (const auto& [key, value] : j.items()) {
    auto it = setters.find(key);
    if (it == setters.end()) throw Error(ErrorCode::InvalidConfig, "unknown config key '" + key + "'");
    try {
      it->second(value);
    } catch (const json::exception&) {
      throw Error(ErrorCode::InvalidConfig, "config key '" + key + "' has the wrong type");
    }
  }
  return c;
}

SessionConfig session_config(const PipelineConfig& config, std::vector<std::string> label_space) {
  SessionConfig s;
  s.budget = config.budget;
  s.label_space = std::move(label_space);
  s.ablation = config.ablation;
  s.separation_mode = config.separation_mode;
  s.impurity_denominator = config.impurity_denominator;
  s.eq16_literal = config.eq16_literal;
  s.seed = config.seed;
  s.strategy = config.strategy;
  return validated(std::move(s));
}

Prepared prepare_space(const EmbeddingSet& vocab, const EmbeddingSet& instances, std::size_t reduced_dim,
                       std::size_t k, std::uint64_t seed, std::size_t refine_iterations, std::size_t kmeans_restarts) {
  Prepared out;
  out.space = build_shared_space(vocab, instances, reduced_dim);
  KMeansOptions options;
  options.restarts = kmeans_restarts;
  Clustering c = kmeans(out.space, k, seed, options);
  c = refine_by_silhouette(out.space, std::move(c), refine_iterations);
  out.clustering = refine_clusters(out.space, std::move(c));
  return out;
}

std::vector<unsigned char> serialize_space(const SharedSpace& space) {
  json items = json::array();
  for (const auto& item : space.items) items.push_back({item.kind == ItemKind::Token ? "token" : "instance", item.id});
  std::string header =
      json{{"reduced_dim", space.reduced_dim}, {"token_count", space.token_count}, {"items", std::move(items)}}.dump();
  std::vector<unsigned char> out(kSpaceMagic, kSpaceMagic + 4);
  append_raw<std::uint32_t>(out, kSpaceVersion);
  append_raw<std::uint64_t>(out, header.size());
  out.insert(out.end(), header.begin(), header.end());
  for (double v : space.vectors.data) append_raw(out, v);
  return out;
}

SharedSpace parse_space(std::span<const unsigned char> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kSpaceMagic, 4) != 0) {
    throw Error(ErrorCode::MagicMismatch, "file does not start with \"CSSP\"");
  }
  if (bytes.size() < kSpacePreamble) throw Error(ErrorCode::HeaderMalformed, "truncated preamble");
  auto version = read_raw<std::uint32_t>(bytes.data() + 4);
  if (version != kSpaceVersion) throw Error(ErrorCode::VersionUnsupported, "version " + std::to_string(version));
  auto header_len = read_raw<std::uint64_t>(bytes.data() + 8);
  if (header_len > bytes.size() - kSpacePreamble) throw Error(ErrorCode::HeaderMalformed, "header overruns file");
  SharedSpace space;
  try {
    auto begin = reinterpret_cast<const char*>(bytes.data() + kSpacePreamble);
    json h = json::parse(begin, begin + header_len);
    space.reduced_dim = h.at("reduced_dim").get<std::size_t>();
    space.token_count = h.at("token_count").get<std::size_t>();
    for (const auto& item : h.at("items")) {
      auto kind = item.at(0).get<std::string>();
      if (kind != "token" && kind != "instance") throw Error(ErrorCode::HeaderMalformed, "item kind '" + kind + "'");
      space.items.push_back({space.items.size(), kind == "token" ? ItemKind::Token : ItemKind::Instance,
                             item.at(1).get<std::string>()});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::HeaderMalformed, e.what());
  }
  std::size_t n = space.items.size();
  std::size_t payload = bytes.size() - kSpacePreamble - header_len;
  if (payload != n * space.reduced_dim * sizeof(double)) {
    throw Error(ErrorCode::SizeMismatch, "payload is " + std::to_string(payload) + " bytes, expected " +
                                             std::to_string(n * space.reduced_dim * sizeof(double)));
  }
  space.vectors = Matrix(n, space.reduced_dim);
  const unsigned char* p = bytes.data() + kSpacePreamble + header_len;
  for (std::size_t i = 0; i < space.vectors.data.size(); ++i) space.vectors.data[i] = read_raw<double>(p + 8 * i);
  return space;
}

json pca_to_json(const PcaModel& model) {
  json components = json::array();
  for (std::size_t r = 0; r < model.components.rows; ++r) {
    auto row = model.components.row(r);
    components.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return {{"mean", model.mean},
          {"components", std::move(components)},
          {"explained_variance", model.explained_variance},
          {"rank_deficient", model.rank_deficient}};
}

PcaModel pca_from_json(const json& j) {
  PcaModel m;
  try {
    m.mean = j.at("mean").get<std::vector<double>>();
    const auto& comps = j.at("components");
    m.components = Matrix(comps.size(), m.mean.size());
    for (std::size_t r = 0; r < comps.size(); ++r) {
      auto row = comps[r].get<std::vector<double>>();
      if (row.size() != m.mean.size()) throw Error(ErrorCode::SizeMismatch, "PCA component width");
      std::copy(row.begin(), row.end(), m.components.data.begin() + static_cast<std::ptrdiff_t>(r * m.mean.size()));
    }
    m.explained_variance = j.at("explained_variance").get<std::vector<double>>();
    m.rank_deficient = j.at("rank_deficient").get<bool>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::HeaderMalformed, std::string("PCA model: ") + e.what());
  }
  return m;
}

json write_prepared(const Prepared& prepared, const std::filesystem::path& dir, const json& provenance) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + dir.string() + ": " + ec.message());
  auto space = serialize_space(prepared.space);
  auto pca = bytes_of(dump(pca_to_json(prepared.space.pca)));
  auto clusters = bytes_of(dump(clustering_to_json(prepared.space, prepared.clustering)));
  write_file_bytes(space, dir / kSpaceFile);
  write_file_bytes(pca, dir / kPcaFile);
  write_file_bytes(clusters, dir / kClustersFile);
  json manifest = {
      {"artifacts",
       {artifact_entry(kSpaceFile, space), artifact_entry(kPcaFile, pca), artifact_entry(kClustersFile, clusters)}},
      {"provenance", provenance}};
  write_text_file(dump(manifest), dir / kManifestFile);
  return manifest;
}

Prepared load_prepared(const std::filesystem::path& dir) {
  Prepared out;
  auto path = dir / kSpaceFile;
  try {
    out.space = parse_space(read_file_bytes(path));
    path = dir / kPcaFile;
    out.space.pca = pca_from_json(read_json_file(path));
    if (out.space.pca.output_dim() != out.space.reduced_dim) {
      throw Error(ErrorCode::DimensionMismatch, "PCA output dim does not match the space");
    }
    path = dir / kClustersFile;
    out.clustering = clustering_from_json(out.space, read_json_file(path));
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.detail());
  }
  return out;
}

std::string sha256_hex(std::span<const unsigned char> bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::InvariantViolation, "SHA-256 failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

// ---- commands -------------------------------------------------------------

json cmd_prepare(const PipelineConfig& config) {
  if (config.vocab.empty() || config.instances.empty()) {
    throw Error(ErrorCode::Usage, "prepare needs vocab and instances");
  }
  EmbeddingSet vocab = load_embedding_set(config.vocab);
  EmbeddingSet instances = load_embedding_set(config.instances);
  Prepared prepared = prepare_space(vocab, instances, config.reduced_dim, config.k, config.seed,
                                    config.refine_iterations, config.kmeans_restarts);
  json provenance = {{"inputs", {{"vocab", file_fingerprint(config.vocab)},
                                 {"instances", file_fingerprint(config.instances)}}},
                     {"reduced_dim", config.reduced_dim},
                     {"k", config.k},
                     {"seed", config.seed},
                     {"refine_iterations", config.refine_iterations},
                     {"kmeans_restarts", config.kmeans_restarts}};
  return write_prepared(prepared, config.output_dir, provenance);
}

SessionState cmd_select(const PipelineConfig& config) {
  if (config.gold.empty()) throw Error(ErrorCode::Usage, "select needs an oracle labels file (gold)");
  Prepared prepared = load_prepared(config.output_dir);
  auto oracle = load_label_file(config.gold);
  require_oracle_coverage(prepared.space, oracle);
  std::vector<std::string> space_labels = config.label_space;
  if (space_labels.empty()) {
    std::set<std::string> seen;
    for (const auto& [_, label] : oracle) seen.insert(canonical_label(label));
    space_labels.assign(seen.begin(), seen.end());
  }
  SessionConfig session = session_config(config, space_labels);
  SessionState state = run_strategy(prepared.space, prepared.clustering, session, oracle_provider(oracle));
  write_text_file(session_export_text(session, state), config.session_path());
  return state;
}

VerbalizerSet scoring_verbalizers(const Prepared& prepared, const SessionConfig& config, const SessionState& state) {
  if (config.strategy == StrategyName::Random) {
    return derive_verbalizers(prepared.space, prepared.clustering, state.events);
  }
  return state.verbalizers;
}

EvalReport cmd_eval(const PipelineConfig& config) {
  if (config.test_instances.empty() || config.test_gold.empty()) {
    throw Error(ErrorCode::Usage, "eval needs test_instances and test_gold");
  }
  Prepared prepared = load_prepared(config.output_dir);
  SessionExport exported = load_session_export(config.session_path());
  VerbalizerSet verbalizers;
  if (!config.verbalizers.empty()) {
    json j = read_json_file(config.verbalizers);
    std::map<std::string, std::vector<std::string>> mapping;
    try {
      mapping = j.get<std::map<std::string, std::vector<std::string>>>();
    } catch (const json::exception& e) {
      throw Error(ErrorCode::HeaderMalformed, config.verbalizers.string() + ": expected {class: [token ids]}");
    }
    verbalizers = manual_verbalizers(mapping, prepared.space, exported.config.label_space);
  } else {
    SessionState state;
    state.events = exported.events;
    state.verbalizers = resolve_verbalizers(exported.verbalizers, prepared.space);
    verbalizers = scoring_verbalizers(prepared, exported.config, state);
  }
  EvalReport report = evaluate(load_embedding_set(config.test_instances), load_label_file(config.test_gold),
                               verbalizers, prepared.space, exported.config.label_space);
  std::error_code ec;
  std::filesystem::create_directories(config.output_dir, ec);
  write_text_file(dump(report_to_json(report)), config.output_dir / "eval.json");
  write_text_file(report_to_text(report), config.output_dir / "eval.txt");
  return report;
}

std::vector<SimRow> simulate_seed(const PipelineConfig& config, std::uint64_t seed) {
  MixtureSpec spec = config.mixture;
  spec.seed = seed;
  SyntheticCorpus corpus = generate(spec);
  Prepared prepared = prepare_space(corpus.vocab, corpus.instances, config.reduced_dim, config.k, seed,
                                    config.refine_iterations, config.kmeans_restarts);
  Matrix test_rows = project(prepared.space.pca, corpus.test_instances);
  std::vector<std::string> test_gold;
  for (const auto& id : corpus.test_instances.ids) test_gold.push_back(corpus.test_gold.at(id));
  LabelProvider oracle = oracle_provider(corpus.gold);

  std::vector<SimRow> rows;
  for (StrategyName strategy : config.strategies) {
    for (std::size_t budget : config.budgets) {
      auto start = std::chrono::steady_clock::now();
      PipelineConfig cell = config;
      cell.seed = seed;
      cell.strategy = strategy;
      cell.budget = budget;
      SessionConfig session = session_config(cell, corpus.label_space);
      SessionState state = run_strategy(prepared.space, prepared.clustering, session, oracle);
      VerbalizerSet verbalizers = scoring_verbalizers(prepared, session, state);
      EvalReport report = evaluate_rows(test_rows, test_gold, verbalizers, prepared.space, corpus.label_space);
      auto elapsed = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      rows.push_back({strategy, budget, seed, report.accuracy_over_all(), state.labels.size(), verbalizers.size(),
                      config.timing ? elapsed : 0.0});
    }
  }
  return rows;
}

std::vector<SimRow> cmd_simulate(const PipelineConfig& config) {
  if (config.n_seeds == 0) throw Error(ErrorCode::InvalidConfig, "n_seeds must be >= 1");
  check_feasible(config.mixture);

  std::vector<std::vector<SimRow>> per_seed(config.n_seeds);
  std::vector<std::exception_ptr> failures(config.n_seeds);
  std::size_t next = 0;
  std::mutex mutex;
  auto worker = [&] {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard lock(mutex);
        if (next == config.n_seeds) return;
        i = next++;
      }
      try {
        per_seed[i] = simulate_seed(config, config.seed + i);
      } catch (...) {
        failures[i] = std::current_exception();
      }
    }
  };
  std::size_t threads = std::clamp<std::size_t>(config.threads, 1, config.n_seeds);
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }

  std::vector<SimRow> rows;
  for (auto& r : per_seed) rows.insert(rows.end(), r.begin(), r.end());
  std::sort(rows.begin(), rows.end(), [](const SimRow& a, const SimRow& b) {
    return std::tuple(to_string(a.strategy), a.budget, a.seed) < std::tuple(to_string(b.strategy), b.budget, b.seed);
  });
  return rows;
}

std::string simulate_csv(const std::vector<SimRow>& rows) {
  std::string out = "strategy,budget,seed,accuracy,n_labeled,n_verbalizers,wall_ms\n";
  struct Sum {
    double accuracy = 0, labeled = 0, verbalizers = 0, wall = 0;
    std::size_t n = 0;
  };
  std::map<std::pair<std::string, std::size_t>, Sum> sums;
  for (const auto& r : rows) {
    std::string name(to_string(r.strategy));
    out += name + "," + std::to_string(r.budget) + "," + std::to_string(r.seed) + "," +
           format_double("%.6f", r.accuracy) + "," + std::to_string(r.n_labeled) + "," +
           std::to_string(r.n_verbalizers) + "," + format_double("%.3f", r.wall_ms) + "\n";
    auto& s = sums[{name, r.budget}];
    s.accuracy += r.accuracy;
    s.labeled += static_cast<double>(r.n_labeled);
    s.verbalizers += static_cast<double>(r.n_verbalizers);
    s.wall += r.wall_ms;
    ++s.n;
  }
  for (const auto& [key, s] : sums) {
    double n = static_cast<double>(s.n);
    out += key.first + "," + std::to_string(key.second) + ",mean," + format_double("%.6f", s.accuracy / n) + "," +
           format_double("%.2f", s.labeled / n) + "," + format_double("%.2f", s.verbalizers / n) + "," +
           format_double("%.3f", s.wall / n) + "\n";
  }
  return out;
}

}  // namespace jointsel
