#pragma once

// Brute-force reference implementations used as test oracles. They share no
// code with the library beyond the plain data types.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "prx/model.hpp"
#include "prx/rng.hpp"
#include "prx/vector_index.hpp"

namespace prx::oracle {

inline double cosine(const std::vector<float>& a, const std::vector<float>& b) {
  double d = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  for (float x : a) na += static_cast<double>(x) * x;
  for (float x : b) nb += static_cast<double>(x) * x;
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  if (na == 0 || nb == 0) return 0.0;
  return std::clamp(d / (na * nb), -1.0, 1.0);
}

struct Hit {
  std::string id;
  double sim;
};

// Score everything, keep sim >= tau, full sort, cut at k.
inline std::vector<Hit> search(const std::vector<index::IndexEntry>& entries, const Embedding& q, std::size_t k,
                               double tau) {
  std::vector<Hit> all;
  for (const auto& e : entries) {
    const double s = cosine(q.values, e.case_embedding.values);
    if (s >= tau) all.push_back({e.record_id, s});
  }
  std::sort(all.begin(), all.end(), [](const Hit& a, const Hit& b) {
    if (a.sim != b.sim) return a.sim > b.sim;
    return a.id < b.id;
  });
  if (all.size() > k) all.resize(k);
  return all;
}

// All positive/negative pairs, ties worth one half.
inline double auroc(const std::vector<double>& scores, const std::vector<bool>& labels) {
  double wins = 0;
  double pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      pairs += 1;
      if (scores[i] > scores[j]) wins += 1;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

// Random unit-ish vectors; a share of them are clustered around a few
// centroids so that high-similarity neighbours exist.
inline std::vector<float> random_vector(Rng& rng, std::size_t dim, const std::vector<std::vector<float>>& centroids) {
  std::vector<float> v(dim);
  const bool clustered = !centroids.empty() && rng.bernoulli(0.7);
  const auto* c = clustered ? &centroids[rng.below(centroids.size())] : nullptr;
  const double spread = clustered ? rng.uniform(0.05, 0.6) : 1.0;
  for (std::size_t i = 0; i < dim; ++i) {
    const double noise = rng.uniform(-1.0, 1.0);
    v[i] = static_cast<float>((c ? (*c)[i] : 0.0) + spread * noise);
  }
  return v;
}

inline std::vector<std::vector<float>> centroids(Rng& rng, std::size_t n, std::size_t dim) {
  std::vector<std::vector<float>> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(random_vector(rng, dim, {}));
  return out;
}

inline std::vector<index::IndexEntry> random_entries(std::size_t n, std::size_t dim, std::uint64_t seed,
                                                     std::size_t chunks_per_entry = 0) {
  Rng rng(seed);
  const auto cs = centroids(rng, 8, dim);
  std::vector<index::IndexEntry> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& e = out[i];
    char id[32];
    std::snprintf(id, sizeof id, "E%06zu", i);
    e.record_id = id;
    e.case_embedding.values = random_vector(rng, dim, cs);
    for (std::size_t c = 0; c < chunks_per_entry; ++c) {
      e.chunk_embeddings.push_back({e.record_id + "#c" + std::to_string(c), {random_vector(rng, dim, cs)}});
    }
    e.metadata.treatments = {rng.bernoulli(0.5) ? "ibuprofen:standard" : "oxycodone:standard"};
    e.metadata.labels = {true, false, false};
    e.metadata.encounter_time = Timestamp{static_cast<std::int64_t>(rng.below(400)) * kSecondsPerDay};
  }
  // A few exact duplicates so ties are exercised.
  for (std::size_t i = 0; i + 1 < n && i < 20; i += 2) out[i + 1].case_embedding = out[i].case_embedding;
  return out;
}

}  // namespace prx::oracle
