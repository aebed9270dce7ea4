#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "prx/model.hpp"

namespace prx::index {

struct EntryMetadata {
  std::set<std::string> diagnoses;
  Timestamp encounter_time;
  std::set<std::string> treatments;
  OutcomeLabels labels;
  std::set<std::string> medication_classes;

  bool operator==(const EntryMetadata&) const = default;
};

struct ChunkEmbedding {
  std::string chunk_id;
  Embedding embedding;

  bool operator==(const ChunkEmbedding&) const = default;
};

struct IndexEntry {
  std::string record_id;
  Embedding case_embedding;
  std::vector<ChunkEmbedding> chunk_embeddings;
  Embedding profile_embedding;  // empty when the corpus was indexed without profiles
  EntryMetadata metadata;
  std::shared_ptr<const CaseRecord> case_record;
};

struct QueryMetadata {
  std::set<std::string> diagnoses;
  Timestamp encounter_time;
};

inline constexpr std::size_t kMatchedChunks = 3;
inline constexpr std::uint32_t kFormatVersion = 1;

// dot(a, b) / (|a| |b|) clamped to [-1, 1]; 0 when either norm is 0.
double cosine(const Embedding& a, const Embedding& b);

// Exact flat index over case embeddings; immutable once built.
class Index {
 public:
  Index() = default;

  // Throws DuplicateId or DimensionMismatch.
  static Index build(std::vector<IndexEntry> entries, std::size_t dim);

  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  const std::vector<IndexEntry>& entries() const noexcept { return entries_; }
  const IndexEntry* find(std::string_view record_id) const;

  // Threshold at cfg.tau, then top cfg.k by (similarity desc, record_id asc).
  RetrievalSet search(const Embedding& query, const RetrievalConfig& cfg,
                      unsigned threads = 1) const;

  // Drops entries failing the hard filters, then reranks by
  // (diagnosis overlap desc, similarity desc, encounter time desc, id asc).
  RetrievalSet filter_rerank(const RetrievalSet& results, const QueryMetadata& query,
                             const RetrievalFilters& filters) const;

  // Fills profile_similarity for every case whose entry carries a profile.
  void attach_profile_similarity(RetrievalSet& results, const Embedding& query_profile) const;

  void save(const std::filesystem::path& path) const;
  static Index load(const std::filesystem::path& path);

 private:
  RetrievedCase make_result(std::size_t entry, double similarity, int rank,
                            const Embedding& query) const;

  std::size_t dim_ = 0;
  std::vector<IndexEntry> entries_;
  std::vector<float> matrix_;  // row-major case embeddings
  std::vector<double> norms_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

}  // namespace prx::index
