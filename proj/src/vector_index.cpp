#include "prx/vector_index.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <thread>

#include "prx/errors.hpp"
#include "prx/hashing.hpp"
#include "prx/json_io.hpp"

namespace prx::index {

namespace {

constexpr char kMagic[8] = {'P', 'R', 'X', 'I', 'N', 'D', 'E', 'X'};
constexpr std::size_t kHeaderSize = 8 + 4 + 4 + 8 + 8 + 8;

double dot(const float* a, const float* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}

double norm_of(const float* a, std::size_t n) { return std::sqrt(dot(a, a, n)); }

double clamp_cos(double d, double na, double nb) {
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(d / (na * nb), -1.0, 1.0);
}

bool ranks_before(double sa, const std::string& ia, double sb, const std::string& ib) {
  if (sa != sb) return sa > sb;
  return ia < ib;
}

void check_dim(const Embedding& e, std::size_t dim, const std::string& what) {
  if (e.dim() != dim) {
    throw Error(ErrorCode::DimensionMismatch,
                what + " has dim " + std::to_string(e.dim()) + ", index dim is " + std::to_string(dim));
  }
  for (float x : e.values) {
    if (!std::isfinite(x)) throw Error(ErrorCode::InvalidArgument, what + " has non-finite values");
  }
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::string& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

struct Reader {
  std::string_view data;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (n > data.size() - pos) throw Error(ErrorCode::IoError, "index file is truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(data[pos + static_cast<std::size_t>(i)]);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(data[pos + static_cast<std::size_t>(i)]);
    pos += 8;
    return v;
  }
  Embedding vec(std::size_t dim) {
    Embedding e;
    e.values.resize(dim);
    for (std::size_t i = 0; i < dim; ++i) {
      std::uint32_t bits = u32();
      std::memcpy(&e.values[i], &bits, 4);
    }
    return e;
  }
};

nlohmann::json encode_metadata(const EntryMetadata& m) {
  return {{"diagnoses", m.diagnoses},
          {"encounter_time", m.encounter_time.to_iso()},
          {"treatments", m.treatments},
          {"labels", json_io::encode(m.labels)},
          {"medication_classes", m.medication_classes}};
}

EntryMetadata decode_metadata(const nlohmann::json& j) {
  EntryMetadata m;
  for (auto& d : j.at("diagnoses")) m.diagnoses.insert(d.get<std::string>());
  m.encounter_time = Timestamp::parse(j.at("encounter_time").get<std::string>());
  for (auto& t : j.at("treatments")) m.treatments.insert(t.get<std::string>());
  m.labels = json_io::decode_labels(j.at("labels"));
  for (auto& c : j.at("medication_classes")) m.medication_classes.insert(c.get<std::string>());
  return m;
}

}  // namespace

double cosine(const Embedding& a, const Embedding& b) {
  if (a.dim() != b.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "cosine over vectors of dim " + std::to_string(a.dim()) +
                                                  " and " + std::to_string(b.dim()));
  }
  const std::size_t n = a.dim();
  return clamp_cos(dot(a.values.data(), b.values.data(), n), norm_of(a.values.data(), n),
                   norm_of(b.values.data(), n));
}

Index Index::build(std::vector<IndexEntry> entries, std::size_t dim) {
  if (dim == 0) throw Error(ErrorCode::InvalidArgument, "index dim must be positive");
  Index idx;
  idx.dim_ = dim;
  idx.matrix_.reserve(entries.size() * dim);
  idx.norms_.reserve(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& e = entries[i];
    if (e.record_id.empty()) throw Error(ErrorCode::InvalidArgument, "index entry without record_id");
    if (!idx.by_id_.emplace(e.record_id, i).second) {
      throw Error(ErrorCode::DuplicateId, "duplicate record_id '" + e.record_id + "'", e.record_id);
    }
    check_dim(e.case_embedding, dim, "case embedding of " + e.record_id);
    for (auto& c : e.chunk_embeddings) check_dim(c.embedding, dim, "chunk " + c.chunk_id);
    if (!e.profile_embedding.values.empty()) {
      check_dim(e.profile_embedding, dim, "profile embedding of " + e.record_id);
    }
    idx.matrix_.insert(idx.matrix_.end(), e.case_embedding.values.begin(), e.case_embedding.values.end());
    idx.norms_.push_back(norm_of(e.case_embedding.values.data(), dim));
  }
  idx.entries_ = std::move(entries);
  return idx;
}

const IndexEntry* Index::find(std::string_view record_id) const {
  auto it = by_id_.find(std::string(record_id));
  return it == by_id_.end() ? nullptr : &entries_[it->second];
}

RetrievedCase Index::make_result(std::size_t i, double similarity, int rank,
                                 const Embedding& query) const {
  const IndexEntry& e = entries_[i];
  RetrievedCase rc;
  rc.record_id = e.record_id;
  rc.treatments = e.metadata.treatments;
  rc.labels = e.metadata.labels;
  rc.similarity = similarity;
  rc.rank = rank;
  rc.case_record = e.case_record;
  std::vector<ChunkMatch> matches;
  matches.reserve(e.chunk_embeddings.size());
  for (const auto& c : e.chunk_embeddings) matches.push_back({c.chunk_id, cosine(query, c.embedding)});
  const std::size_t keep = std::min(kMatchedChunks, matches.size());
  std::partial_sort(matches.begin(), matches.begin() + static_cast<std::ptrdiff_t>(keep), matches.end(),
                    [](const ChunkMatch& a, const ChunkMatch& b) {
                      return ranks_before(a.similarity, a.chunk_id, b.similarity, b.chunk_id);
                    });
  matches.resize(keep);
  rc.matched_chunks = std::move(matches);
  return rc;
}

RetrievalSet Index::search(const Embedding& query, const RetrievalConfig& cfg, unsigned threads) const {
  cfg.validate();
  if (query.dim() != dim_) {
    throw Error(ErrorCode::DimensionMismatch,
                "query dim " + std::to_string(query.dim()) + " does not match index dim " +
                    std::to_string(dim_));
  }
  const std::size_t n = entries_.size();
  const double qn = norm_of(query.values.data(), dim_);
  std::vector<double> sims(n);
  auto score = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      sims[i] = clamp_cos(dot(query.values.data(), matrix_.data() + i * dim_, dim_), qn, norms_[i]);
    }
  };
  if (threads > 1 && n >= 4096) {
    std::vector<std::thread> pool;
    const std::size_t step = (n + threads - 1) / threads;
    for (std::size_t lo = 0; lo < n; lo += step) pool.emplace_back(score, lo, std::min(n, lo + step));
    for (auto& t : pool) t.join();
  } else {
    score(0, n);
  }

  std::vector<std::size_t> hits;
  for (std::size_t i = 0; i < n; ++i) {
    if (sims[i] >= cfg.tau) hits.push_back(i);
  }
  const std::size_t keep = std::min(cfg.k, hits.size());
  auto before = [&](std::size_t a, std::size_t b) {
    return ranks_before(sims[a], entries_[a].record_id, sims[b], entries_[b].record_id);
  };
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(keep), hits.end(), before);

  RetrievalSet out;
  out.k = cfg.k;
  out.tau = cfg.tau;
  out.ordering = RankingKey::similarity;
  for (std::size_t r = 0; r < keep; ++r) {
    out.cases.push_back(make_result(hits[r], sims[hits[r]], static_cast<int>(r + 1), query));
  }
  return out;
}

RetrievalSet Index::filter_rerank(const RetrievalSet& results, const QueryMetadata& query,
                                  const RetrievalFilters& filters) const {
  if (filters.empty()) return results;
  struct Scored {
    RetrievedCase rc;
    std::size_t overlap;
    Timestamp time;
  };
  std::vector<Scored> kept;
  for (const auto& rc : results.cases) {
    const IndexEntry* e = find(rc.record_id);
    if (!e) continue;
    const auto& m = e->metadata;
    std::size_t overlap = 0;
    for (const auto& d : query.diagnoses) overlap += m.diagnoses.count(d);
    if (filters.diagnosis_overlap_min &&
        static_cast<long long>(overlap) < static_cast<long long>(*filters.diagnosis_overlap_min)) {
      continue;
    }
    if (filters.recency_window_days) {
      const std::int64_t dt = std::llabs(m.encounter_time.seconds - query.encounter_time.seconds);
      if (dt > static_cast<std::int64_t>(*filters.recency_window_days) * kSecondsPerDay) continue;
    }
    if (filters.medication_class && !m.medication_classes.count(*filters.medication_class)) continue;
    kept.push_back({rc, overlap, m.encounter_time});
  }
  std::stable_sort(kept.begin(), kept.end(), [](const Scored& a, const Scored& b) {
    if (a.overlap != b.overlap) return a.overlap > b.overlap;
    if (a.rc.similarity != b.rc.similarity) return a.rc.similarity > b.rc.similarity;
    if (a.time != b.time) return a.time > b.time;
    return a.rc.record_id < b.rc.record_id;
  });
  RetrievalSet out;
  out.k = results.k;
  out.tau = results.tau;
  out.ordering = RankingKey::overlap_similarity_recency;
  for (std::size_t i = 0; i < kept.size(); ++i) {
    kept[i].rc.rank = static_cast<int>(i + 1);
    out.cases.push_back(std::move(kept[i].rc));
  }
  return out;
}

void Index::attach_profile_similarity(RetrievalSet& results, const Embedding& query_profile) const {
  for (auto& rc : results.cases) {
    const IndexEntry* e = find(rc.record_id);
    if (e && !e->profile_embedding.values.empty() && e->profile_embedding.dim() == query_profile.dim()) {
      rc.profile_similarity = cosine(query_profile, e->profile_embedding);
    }
  }
}

void Index::save(const std::filesystem::path& path) const {
  std::uint64_t chunk_count = 0, profile_count = 0;
  for (const auto& e : entries_) {
    chunk_count += e.chunk_embeddings.size();
    profile_count += e.profile_embedding.values.empty() ? 0 : 1;
  }
  if (profile_count != 0 && profile_count != entries_.size()) {
    throw Error(ErrorCode::InvalidArgument, "either every entry or none must carry a profile");
  }
  std::string out;
  out.append(kMagic, 8);
  put_u32(out, kFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(dim_));
  put_u64(out, entries_.size());
  put_u64(out, chunk_count);
  put_u64(out, profile_count);
  for (const auto& e : entries_) for (float f : e.case_embedding.values) put_f32(out, f);
  for (const auto& e : entries_) {
    for (const auto& c : e.chunk_embeddings) for (float f : c.embedding.values) put_f32(out, f);
  }
  for (const auto& e : entries_) for (float f : e.profile_embedding.values) put_f32(out, f);

  nlohmann::json meta = nlohmann::json::array();
  for (const auto& e : entries_) {
    nlohmann::json chunk_ids = nlohmann::json::array();
    for (const auto& c : e.chunk_embeddings) chunk_ids.push_back(c.chunk_id);
    meta.push_back({{"record_id", e.record_id},
                    {"chunk_ids", chunk_ids},
                    {"metadata", encode_metadata(e.metadata)},
                    {"case", e.case_record ? json_io::encode(*e.case_record) : nlohmann::json()}});
  }
  const std::string meta_text = json_io::dump({{"entries", meta}});
  put_u64(out, meta_text.size());
  out += meta_text;
  const auto digest = hashing::sha256(out);
  out.append(reinterpret_cast<const char*>(digest.data()), digest.size());

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorCode::IoError, "cannot write index to " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f.flush()) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw Error(ErrorCode::IoError, "write failed for " + path.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorCode::IoError, "cannot replace " + path.string());
  }
}

Index Index::load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::IoError, "cannot open index " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  const std::string data = ss.str();
  if (data.size() < 8) throw Error(ErrorCode::IoError, "index file is truncated");
  if (std::memcmp(data.data(), kMagic, 8) != 0) {
    throw Error(ErrorCode::FormatVersionMismatch, "not an index file (bad magic)");
  }
  Reader r{data, 8};
  const std::uint32_t version = r.u32();
  if (version != kFormatVersion) {
    throw Error(ErrorCode::FormatVersionMismatch,
                "index format version " + std::to_string(version) + " is not supported");
  }
  if (data.size() < kHeaderSize + 8 + 32) throw Error(ErrorCode::IoError, "index file is truncated");
  const std::string_view body(data.data(), data.size() - 32);
  const auto digest = hashing::sha256(body);
  if (std::memcmp(digest.data(), data.data() + body.size(), 32) != 0) {
    throw Error(ErrorCode::IoError, "index checksum mismatch (truncated or corrupt file)");
  }
  r.data = body;
  const std::size_t dim = r.u32();
  const std::uint64_t count = r.u64();
  const std::uint64_t chunk_count = r.u64();
  const std::uint64_t profile_count = r.u64();
  if (dim == 0 || (profile_count != 0 && profile_count != count)) {
    throw Error(ErrorCode::IoError, "index header is inconsistent");
  }
  const std::uint64_t floats = (count + chunk_count + profile_count) * dim;
  if (floats > body.size() / 4) throw Error(ErrorCode::IoError, "index file is truncated");

  std::vector<Embedding> cases, chunks, profiles;
  for (std::uint64_t i = 0; i < count; ++i) cases.push_back(r.vec(dim));
  for (std::uint64_t i = 0; i < chunk_count; ++i) chunks.push_back(r.vec(dim));
  for (std::uint64_t i = 0; i < profile_count; ++i) profiles.push_back(r.vec(dim));
  const std::uint64_t meta_len = r.u64();
  r.need(meta_len);
  if (r.pos + meta_len != body.size()) throw Error(ErrorCode::IoError, "index metadata length mismatch");

  std::vector<IndexEntry> entries;
  try {
    const auto meta = nlohmann::json::parse(body.substr(r.pos, meta_len));
    const auto& list = meta.at("entries");
    if (list.size() != count) throw Error(ErrorCode::IoError, "index entry count mismatch");
    std::size_t next_chunk = 0;
    for (std::size_t i = 0; i < count; ++i) {
      const auto& m = list[i];
      IndexEntry e;
      e.record_id = m.at("record_id").get<std::string>();
      e.case_embedding = std::move(cases[i]);
      for (const auto& id : m.at("chunk_ids")) {
        if (next_chunk >= chunks.size()) throw Error(ErrorCode::IoError, "index chunk count mismatch");
        e.chunk_embeddings.push_back({id.get<std::string>(), std::move(chunks[next_chunk++])});
      }
      if (profile_count) e.profile_embedding = std::move(profiles[i]);
      e.metadata = decode_metadata(m.at("metadata"));
      if (!m.at("case").is_null()) {
        e.case_record = std::make_shared<const CaseRecord>(json_io::decode_case(m.at("case")));
      }
      entries.push_back(std::move(e));
    }
    if (next_chunk != chunks.size()) throw Error(ErrorCode::IoError, "index chunk count mismatch");
  } catch (const Error& e) {
    if (e.code() == ErrorCode::IoError) throw;
    throw Error(ErrorCode::IoError, std::string("index metadata is corrupt: ") + e.what());
  } catch (const std::exception& e) {
    throw Error(ErrorCode::IoError, std::string("index metadata is corrupt: ") + e.what());
  }
  return build(std::move(entries), dim);
}

}  // namespace prx::index
