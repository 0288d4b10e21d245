#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "jointsel/embed_io.hpp"

namespace jointsel {

/// Gaussian mixture with planted token populations. Noise is isotropic with
/// per-coordinate std 1/sqrt(dim), so a component's RMS radius is 1;
/// class_separation is the pairwise distance between class means in those
/// units. Class tokens scatter around their mean with token_spread times the
/// instance noise; outlier tokens share one far centre, orthogonal to every
/// class mean, with instance-sized noise.
struct MixtureSpec {
  std::size_t n_classes = 4;
  std::size_t instances_per_class = 100;
  std::size_t tokens_per_class = 10;
  std::size_t outlier_tokens = 20;
  std::size_t dim = 128;
  double class_separation = 6.0;
  std::uint64_t seed = 42;
  std::size_t test_instances_per_class = 100;
  double token_spread = 0.25;
};

struct SyntheticCorpus {
  EmbeddingSet vocab;
  EmbeddingSet instances;
  std::map<std::string, std::string> gold;  // instance id -> class
  std::map<std::string, std::string> planted_verbalizers;  // token id -> class
  std::vector<std::string> label_space;
  EmbeddingSet test_instances;
  std::map<std::string, std::string> test_gold;
};

/// Throws InfeasibleSpec.
void check_feasible(const MixtureSpec& spec);

/// Deterministic in spec (including seed). Throws InfeasibleSpec.
SyntheticCorpus generate(const MixtureSpec& spec);

/// Writes vocab.cseb, instances.cseb, texts.jsonl, gold.jsonl,
/// test_instances.cseb, test_gold.jsonl and planted_verbalizers.json.
void write_corpus(const SyntheticCorpus& corpus, const std::filesystem::path& dir);

}  // namespace jointsel
