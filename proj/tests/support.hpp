#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "jointsel/clustering.hpp"
#include "jointsel/rng.hpp"
#include "jointsel/selection.hpp"
#include "oracle/oracle.hpp"

namespace testsupport {

using namespace jointsel;

/// Normalised rows, tokens first; ids t0.., i0...
inline SharedSpace make_space(const std::vector<oracle::Vec>& tokens, const std::vector<oracle::Vec>& instances) {
  SharedSpace s;
  s.reduced_dim = (tokens.empty() ? instances : tokens).front().size();
  s.token_count = tokens.size();
  s.vectors = Matrix(tokens.size() + instances.size(), s.reduced_dim);
  std::size_t r = 0;
  auto add = [&](const oracle::Vec& v, ItemKind kind, const std::string& id) {
    oracle::Vec u = oracle::unit(v);
    for (std::size_t j = 0; j < u.size(); ++j) s.vectors(r, j) = u[j];
    s.items.push_back({r, kind, id});
    ++r;
  };
  for (std::size_t i = 0; i < tokens.size(); ++i) add(tokens[i], ItemKind::Token, "t" + std::to_string(i));
  for (std::size_t i = 0; i < instances.size(); ++i) add(instances[i], ItemKind::Instance, "i" + std::to_string(i));
  return s;
}

inline Clustering make_clustering(const SharedSpace& space, const std::vector<int>& assignment) {
  Clustering c;
  c.assignment = assignment;
  int k = oracle::cluster_count(assignment);
  c.clusters.resize(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) c.clusters[static_cast<std::size_t>(i)].id = i;
  rebuild_clusters(space, c);
  return c;
}

inline std::vector<oracle::Vec> rows_of(const SharedSpace& space) {
  std::vector<oracle::Vec> out;
  for (std::size_t i = 0; i < space.size(); ++i) {
    auto r = space.vector(i);
    out.emplace_back(r.begin(), r.end());
  }
  return out;
}

inline oracle::Vec random_vec(Rng& rng, std::size_t dim) {
  oracle::Vec v(dim);
  for (double& x : v) x = rng.normal();
  return v;
}

/// Oracle view of a space + clustering; centroids recomputed independently.
inline oracle::World world_of(const SharedSpace& space, const Clustering& clustering) {
  oracle::World w;
  w.pts = rows_of(space);
  w.token_count = space.token_count;
  w.assign = clustering.assignment;
  for (const auto& c : clustering.clusters) w.centroids.push_back(oracle::normalized_mean(w.pts, w.members(c.id)));
  return w;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("jointsel_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline SessionConfig config_for(std::size_t budget, std::vector<std::string> labels) {
  SessionConfig c;
  c.budget = budget;
  c.label_space = std::move(labels);
  return c;
}

}  // namespace testsupport
