#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "prx/ingest.hpp"
#include "prx/model.hpp"
#include "prx/resources.hpp"

namespace prx::embedding {

enum class EmbedderKind { reference_hash, external_http };

struct HttpClientOptions {
  int timeout_ms = 10000;
  int max_retries = 3;
  int backoff_ms = 100;  // doubled after each failed attempt
  int max_in_flight = 4;
  std::size_t batch_size = 64;
};

struct EmbedderSpec {
  EmbedderKind kind = EmbedderKind::reference_hash;
  std::size_t dim = 384;
  std::string endpoint;
  std::string model_name;
  HttpClientOptions http;

  void validate() const;
  // "reference" or "http:<url>".
  static EmbedderSpec parse(std::string_view flag, std::size_t dim = 384);
};

class Encoder {
 public:
  virtual ~Encoder() = default;
  virtual std::vector<Embedding> embed(const std::vector<std::string>& texts) const = 0;
  virtual std::size_t dim() const = 0;
};

// Signed feature hashing over lowercased non-punctuation tokens, weighted by
// token frequency and L2-normalized. Pure function of (text, dim).
class ReferenceEmbedder final : public Encoder {
 public:
  explicit ReferenceEmbedder(std::size_t dim = 384);

  std::vector<Embedding> embed(const std::vector<std::string>& texts) const override;
  std::size_t dim() const override { return dim_; }
  Embedding embed_one(std::string_view text) const;

  static std::size_t bucket(std::string_view lowered_token, std::size_t dim);
  static int sign(std::string_view lowered_token);

 private:
  std::size_t dim_;
};

std::unique_ptr<Encoder> make_encoder(const EmbedderSpec& spec);
std::vector<Embedding> embed_texts(const EmbedderSpec& spec, const std::vector<std::string>& texts);

// Throws InvalidArgument for non-finite or all-zero input.
Embedding normalize(std::span<const double> values);

struct EmbeddedChunk {
  Chunk chunk;
  Embedding embedding;
};

// Normalized arithmetic mean. Throws EmptyCase for an empty list.
Embedding aggregate_case(std::span<const EmbeddedChunk> chunks);
Embedding aggregate(std::span<const Embedding> embeddings);

struct EmbeddedRecord {
  std::vector<EmbeddedChunk> chunks;
  Embedding case_embedding;
};

// Chunk -> embed -> aggregate; used for corpus cases and queries alike.
EmbeddedRecord embed_record(const PatientRecord& record, const Encoder& encoder,
                            const Resources& resources = Resources::bundled());

// Mean over the demographic summary and chief-complaint chunks only.
Embedding profile_embedding(const EmbeddedRecord& record);

}  // namespace prx::embedding
