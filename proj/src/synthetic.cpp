#include "jointsel/synthetic.hpp"

#include <cmath>
#include <cstdio>

#include <nlohmann/json.hpp>

#include "jointsel/error.hpp"
#include "jointsel/rng.hpp"

namespace jointsel {

namespace {

using Vec = std::vector<double>;

Vec gaussian(Rng& rng, std::size_t dim) {
  Vec v(dim);
  for (double& x : v) x = rng.normal();
  return v;
}

double norm(const Vec& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// Removes the components along `basis` (orthonormal) and normalises.
Vec orthonormal_to(Vec v, const std::vector<Vec>& basis) {
  for (int pass = 0; pass < 2; ++pass) {
    for (const auto& b : basis) {
      double d = 0.0;
      for (std::size_t i = 0; i < v.size(); ++i) d += v[i] * b[i];
      for (std::size_t i = 0; i < v.size(); ++i) v[i] -= d * b[i];
    }
  }
  double n = norm(v);
  for (double& x : v) x /= n;
  return v;
}

void append_point(EmbeddingSet& set, const Vec& center, double noise, Rng& rng) {
  for (double c : center) set.values.push_back(static_cast<float>(c + noise * rng.normal()));
}

std::string numbered(const char* prefix, std::size_t i) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s%05zu", prefix, i);
  return buf;
}

// Instances of every class, shuffled so row order carries no class signal.
void sample_instances(const std::vector<Vec>& means, std::size_t per_class, double sigma, const char* prefix,
                      const std::vector<std::string>& label_space, Rng& rng, EmbeddingSet& out,
                      std::map<std::string, std::string>& gold) {
  std::vector<std::size_t> classes;
  for (std::size_t c = 0; c < means.size(); ++c) classes.insert(classes.end(), per_class, c);
  shuffle(classes, rng);
  out.kind = EmbeddingKind::Instance;
  out.dim = means.empty() ? 2 : means.front().size();
  for (std::size_t i = 0; i < classes.size(); ++i) {
    out.ids.push_back(numbered(prefix, i));
    gold[out.ids.back()] = label_space[classes[i]];
    append_point(out, means[classes[i]], sigma, rng);
  }
}

}  // namespace

void check_feasible(const MixtureSpec& spec) {
  if (spec.dim < 2) throw Error(ErrorCode::InfeasibleSpec, "dim must be >= 2");
  if (!(spec.class_separation >= 0.0) || !std::isfinite(spec.class_separation)) {
    throw Error(ErrorCode::InfeasibleSpec, "class_separation must be a finite value >= 0");
  }
  if (spec.n_classes == 0) throw Error(ErrorCode::InfeasibleSpec, "n_classes must be >= 1");
  if (!(spec.token_spread >= 0.0 && spec.token_spread < 1.0)) {
    throw Error(ErrorCode::InfeasibleSpec, "token_spread must lie in [0, 1)");
  }
  std::size_t directions = spec.n_classes + (spec.outlier_tokens > 0 ? 1 : 0);
  if (directions > spec.dim) {
    throw Error(ErrorCode::InfeasibleSpec, std::to_string(spec.n_classes) + " mutually orthogonal class means" +
                                               (spec.outlier_tokens > 0 ? " plus an outlier direction" : "") +
                                               " do not fit in dim " + std::to_string(spec.dim));
  }
}

SyntheticCorpus generate(const MixtureSpec& spec) {
  check_feasible(spec);
  Rng rng = Rng::stream(spec.seed, "synthetic");
  const std::size_t dim = spec.dim;
  const double sigma = 1.0 / std::sqrt(static_cast<double>(dim));
  // |mu_a - mu_b| = sqrt(2) * radius for orthonormal directions.
  const double radius = spec.class_separation / std::sqrt(2.0);
  const double outlier_radius = 2.0 * radius + 3.0;

  SyntheticCorpus corpus;
  for (std::size_t c = 0; c < spec.n_classes; ++c) corpus.label_space.push_back("class_" + std::to_string(c));

  std::vector<Vec> basis;
  std::vector<Vec> means;
  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    basis.push_back(orthonormal_to(gaussian(rng, dim), basis));
    Vec m = basis.back();
    for (double& x : m) x *= radius;
    means.push_back(std::move(m));
  }

  corpus.vocab.kind = EmbeddingKind::Vocab;
  corpus.vocab.dim = dim;
  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    for (std::size_t j = 0; j < spec.tokens_per_class; ++j) {
      corpus.vocab.ids.push_back("tok_c" + std::to_string(c) + "_" + std::to_string(j));
      corpus.planted_verbalizers[corpus.vocab.ids.back()] = corpus.label_space[c];
      append_point(corpus.vocab, means[c], spec.token_spread * sigma, rng);
    }
  }
  if (spec.outlier_tokens > 0) {
    Vec center = orthonormal_to(gaussian(rng, dim), basis);
    for (double& x : center) x *= outlier_radius;
    for (std::size_t j = 0; j < spec.outlier_tokens; ++j) {
      corpus.vocab.ids.push_back("tok_outlier_" + std::to_string(j));
      append_point(corpus.vocab, center, sigma, rng);
    }
  }

  sample_instances(means, spec.instances_per_class, sigma, "inst_", corpus.label_space, rng, corpus.instances,
                   corpus.gold);
  corpus.instances.dim = dim;
  sample_instances(means, spec.test_instances_per_class, sigma, "test_", corpus.label_space, rng,
                   corpus.test_instances, corpus.test_gold);
  corpus.test_instances.dim = dim;
  return corpus;
}

void write_corpus(const SyntheticCorpus& corpus, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + dir.string() + ": " + ec.message());
  write_embedding_set(corpus.vocab, dir / "vocab.cseb");
  write_embedding_set(corpus.instances, dir / "instances.cseb");
  write_embedding_set(corpus.test_instances, dir / "test_instances.cseb");

  std::vector<InstanceText> texts;
  std::vector<std::pair<std::string, std::string>> gold;
  for (const auto& id : corpus.instances.ids) {
    texts.push_back({id, "synthetic sample " + id});
    gold.emplace_back(id, corpus.gold.at(id));
  }
  write_instance_texts(texts, dir / "texts.jsonl");
  write_label_file(gold, dir / "gold.jsonl");

  std::vector<std::pair<std::string, std::string>> test_gold;
  for (const auto& id : corpus.test_instances.ids) test_gold.emplace_back(id, corpus.test_gold.at(id));
  write_label_file(test_gold, dir / "test_gold.jsonl");

  nlohmann::json planted = nlohmann::json::object();
  for (const auto& cls : corpus.label_space) planted[cls] = nlohmann::json::array();
  for (const auto& [token, cls] : corpus.planted_verbalizers) planted[cls].push_back(token);
  write_text_file(planted.dump(2) + "\n", dir / "planted_verbalizers.json");
}

}  // namespace jointsel
