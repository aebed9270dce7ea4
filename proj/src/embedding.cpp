#include "prx/embedding.hpp"

#include <cmath>
#include <unordered_map>

#include "http_clients.hpp"
#include "prx/hashing.hpp"
#include "prx/text.hpp"

namespace prx::embedding {

void EmbedderSpec::validate() const {
  if (dim == 0) throw Error(ErrorCode::InvalidArgument, "embedding dim must be positive", "dim");
  if (kind == EmbedderKind::external_http && endpoint.empty()) {
    throw Error(ErrorCode::InvalidArgument, "external embedder requires an endpoint", "endpoint");
  }
  if (http.max_in_flight < 1 || http.timeout_ms < 1 || http.max_retries < 0 ||
      http.max_retries > 3 || http.batch_size == 0) {
    throw Error(ErrorCode::InvalidArgument, "invalid embedder client options", "http");
  }
}

EmbedderSpec EmbedderSpec::parse(std::string_view flag, std::size_t dim) {
  EmbedderSpec spec;
  spec.dim = dim;
  if (flag == "reference" || flag == "reference_hash") {
    spec.kind = EmbedderKind::reference_hash;
  } else if (flag.substr(0, 5) == "http:" && flag.size() > 5) {
    spec.kind = EmbedderKind::external_http;
    spec.endpoint = std::string(flag.substr(5));
  } else {
    throw Error(ErrorCode::InvalidArgument,
                "embedder must be 'reference' or 'http:<url>', got '" + std::string(flag) + "'",
                "embedder");
  }
  spec.validate();
  return spec;
}

ReferenceEmbedder::ReferenceEmbedder(std::size_t dim) : dim_(dim) {
  if (dim == 0) throw Error(ErrorCode::InvalidArgument, "embedding dim must be positive");
}

std::size_t ReferenceEmbedder::bucket(std::string_view token, std::size_t dim) {
  return static_cast<std::size_t>(hashing::fnv1a64(token) % dim);
}

int ReferenceEmbedder::sign(std::string_view token) {
  return (hashing::mix64(hashing::fnv1a64(token, 0x84222325cbf29ce4ull)) >> 63) ? -1 : 1;
}

Embedding ReferenceEmbedder::embed_one(std::string_view input) const {
  const auto tokens = text::tokenize(input);
  if (tokens.empty()) throw Error(ErrorCode::InvalidArgument, "cannot embed empty text");
  bool any_word = false;
  for (const auto& t : tokens) any_word = any_word || !t.punctuation;
  std::unordered_map<std::string, int> counts;
  for (const auto& t : tokens) {
    if (any_word && t.punctuation) continue;
    ++counts[text::to_lower_ascii(input.substr(t.start, t.end - t.start))];
  }
  std::vector<double> v(dim_, 0.0);
  for (const auto& [tok, n] : counts) v[bucket(tok, dim_)] += sign(tok) * n;
  double norm = 0.0;
  for (double x : v) norm += x * x;
  if (norm == 0.0) {
    const std::string whole = text::to_lower_ascii(input);
    v[bucket(whole, dim_)] = 1.0;
  }
  return normalize(v);
}

std::vector<Embedding> ReferenceEmbedder::embed(const std::vector<std::string>& texts) const {
  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed_one(t));
  return out;
}

std::unique_ptr<Encoder> make_encoder(const EmbedderSpec& spec) {
  spec.validate();
  if (spec.kind == EmbedderKind::reference_hash) return std::make_unique<ReferenceEmbedder>(spec.dim);
  return detail::make_http_encoder(spec);
}

std::vector<Embedding> embed_texts(const EmbedderSpec& spec, const std::vector<std::string>& texts) {
  if (texts.empty()) throw Error(ErrorCode::InvalidArgument, "texts must be non-empty");
  for (const auto& t : texts) {
    if (t.empty()) throw Error(ErrorCode::InvalidArgument, "texts must be non-empty strings");
  }
  return make_encoder(spec)->embed(texts);
}

Embedding normalize(std::span<const double> values) {
  double norm = 0.0;
  for (double x : values) {
    if (!std::isfinite(x)) throw Error(ErrorCode::InvalidArgument, "non-finite embedding value");
    norm += x * x;
  }
  norm = std::sqrt(norm);
  if (norm == 0.0) throw Error(ErrorCode::InvalidArgument, "cannot normalize a zero vector");
  Embedding e;
  e.values.reserve(values.size());
  for (double x : values) e.values.push_back(static_cast<float>(x / norm));
  return e;
}

Embedding aggregate(std::span<const Embedding> embeddings) {
  if (embeddings.empty()) throw Error(ErrorCode::EmptyCase, "case has no chunk embeddings");
  const std::size_t dim = embeddings.front().dim();
  std::vector<double> sum(dim, 0.0);
  for (const auto& e : embeddings) {
    if (e.dim() != dim) throw Error(ErrorCode::DimensionMismatch, "chunk embeddings differ in dim");
    for (std::size_t i = 0; i < dim; ++i) sum[i] += e.values[i];
  }
  for (double& x : sum) x /= static_cast<double>(embeddings.size());
  return normalize(sum);
}

Embedding aggregate_case(std::span<const EmbeddedChunk> chunks) {
  std::vector<Embedding> es;
  es.reserve(chunks.size());
  for (const auto& c : chunks) es.push_back(c.embedding);
  return aggregate(es);
}

EmbeddedRecord embed_record(const PatientRecord& record, const Encoder& encoder,
                            const Resources& resources) {
  auto chunks = ingest::chunk_record(record, resources);
  std::vector<std::string> texts;
  texts.reserve(chunks.size());
  for (const auto& c : chunks) texts.push_back(c.text);
  auto vectors = encoder.embed(texts);
  if (vectors.size() != chunks.size()) {
    throw Error(ErrorCode::EmbedServiceError, "encoder returned the wrong number of vectors");
  }
  EmbeddedRecord out;
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    if (vectors[i].dim() != encoder.dim()) {
      throw Error(ErrorCode::DimensionMismatch, "encoder returned a vector of the wrong dim");
    }
    out.chunks.push_back({std::move(chunks[i]), std::move(vectors[i])});
  }
  out.case_embedding = aggregate_case(out.chunks);
  return out;
}

Embedding profile_embedding(const EmbeddedRecord& record) {
  std::vector<Embedding> parts;
  for (const auto& c : record.chunks) {
    const auto& d = c.chunk.source_detail;
    const bool complaint = c.chunk.source_type == ChunkSource::note_section &&
                           d.size() >= 16 && d.compare(d.size() - 16, 16, "/chief_complaint") == 0;
    if (c.chunk.source_type == ChunkSource::demographic_summary || complaint) {
      parts.push_back(c.embedding);
    }
  }
  if (parts.empty()) return record.case_embedding;
  return aggregate(parts);
}

}  // namespace prx::embedding
