#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "prx/embedding.hpp"
#include "prx/model.hpp"
#include "prx/resources.hpp"
#include "prx/vector_index.hpp"

namespace prx::rag {

inline constexpr std::size_t kMinPromptBudget = 256;
inline constexpr std::string_view kInstruction =
    "Suggest a pain management plan for the following patient based on similar historical "
    "cases. List one treatment per line as \"- <treatment> [Case i, ...]\" citing the "
    "supporting cases.";
inline constexpr std::string_view kNoPrecedentNote = "No precedent cases found.";

struct ContextBlock {
  int case_rank = 0;
  std::string text;

  bool operator==(const ContextBlock&) const = default;
};

struct Prompt {
  std::string instruction;
  std::string query_block;
  std::vector<ContextBlock> context_blocks;
  std::string rendered;
  std::size_t token_count = 0;
  std::size_t budget = 0;

  std::string hash() const;
};

std::string render_patient(const PatientRecord& record,
                           const Resources& resources = Resources::bundled());
// render_patient plus a "Treatments:" line.
std::string render_case(const CaseRecord& record,
                        const Resources& resources = Resources::bundled());
std::string treatment_statement(std::string_view treatment,
                                const Resources& resources = Resources::bundled());

// Throws BudgetTooSmall when budget < kMinPromptBudget.
Prompt build_prompt(const PatientRecord& record, const RetrievalSet& retrieved, std::size_t budget,
                    const Resources& resources = Resources::bundled());

enum class GeneratorKind { stub_majority, external_http };
std::string_view to_string(GeneratorKind kind);

struct GeneratorSpec {
  GeneratorKind kind = GeneratorKind::stub_majority;
  std::string endpoint;
  std::string model_name;
  int max_output_tokens = 256;
  embedding::HttpClientOptions http;

  void validate() const;
  // "stub" or "http:<url>".
  static GeneratorSpec parse(std::string_view flag);
};

class Generator {
 public:
  virtual ~Generator() = default;
  virtual Recommendation generate(const Prompt& prompt, const RetrievalSet& retrieved) const = 0;
  virtual GeneratorKind kind() const = 0;
};

// Precedent majority vote: treatments ranked by (votes desc, total supporting
// similarity desc, name asc); confidence = votes / k.
class StubMajorityGenerator final : public Generator {
 public:
  explicit StubMajorityGenerator(const Resources& resources = Resources::bundled())
      : resources_(resources) {}
  Recommendation generate(const Prompt& prompt, const RetrievalSet& retrieved) const override;
  GeneratorKind kind() const override { return GeneratorKind::stub_majority; }

 private:
  const Resources& resources_;
};

std::unique_ptr<Generator> make_generator(const GeneratorSpec& spec,
                                          const Resources& resources = Resources::bundled());
Recommendation generate(const GeneratorSpec& spec, const Prompt& prompt,
                        const RetrievalSet& retrieved,
                        const Resources& resources = Resources::bundled());

// Line grammar "- <treatment> [Case 1, Case 3]"; other lines are ignored.
// Throws GeneratorParseError (message carries the raw text) when no line parses.
Recommendation parse_generator_output(std::string_view text, const RetrievalSet& retrieved,
                                      std::string prompt_hash);

// Vote share per task, sum(conf * label) / sum(conf), with treatment labels
// looked up in the treatment vocabulary.
double task_score(const Recommendation& rec, Task task,
                  const Resources& resources = Resources::bundled());

struct AuditRecord {
  Timestamp ts;
  std::string record_id;
  std::string prompt_hash;
  std::size_t k = 0;
  double tau = 0.0;
  std::vector<std::string> retrieved_ids;
  GeneratorKind generator_kind = GeneratorKind::stub_majority;

  nlohmann::json to_json() const;
};

class AuditSink {
 public:
  virtual ~AuditSink() = default;
  virtual void append(const std::string& line) = 0;
};

// Appends JSONL under a single-writer lock, flushing each line.
class FileAuditLog final : public AuditSink {
 public:
  explicit FileAuditLog(std::filesystem::path path);
  void append(const std::string& line) override;

 private:
  std::filesystem::path path_;
  std::mutex mu_;
};

class MemoryAuditLog final : public AuditSink {
 public:
  void append(const std::string& line) override;
  std::vector<std::string> lines() const;

 private:
  mutable std::mutex mu_;
  std::vector<std::string> lines_;
};

using Clock = std::function<Timestamp()>;
Timestamp system_now();

struct RecommendOptions {
  RetrievalConfig retrieval;
  std::size_t budget = 2048;
  Clock clock = system_now;
  AuditSink* audit = nullptr;
};

struct RecommendResult {
  Recommendation recommendation;
  RetrievalSet retrieval;
  Prompt prompt;
  Embedding query_embedding;
  std::string audit_line;
};

// Patient embedding, case retrieval, prompt construction and generation over
// one immutable index snapshot.
class Engine {
 public:
  Engine(std::shared_ptr<const index::Index> index, std::shared_ptr<const embedding::Encoder> encoder,
         std::shared_ptr<const Generator> generator,
         const Resources& resources = Resources::bundled());

  // Throws EmptyPrecedent for the stub generator when nothing is retrieved.
  RecommendResult recommend(const PatientRecord& record, const RecommendOptions& options) const;

  const index::Index& index() const { return *index_; }
  const embedding::Encoder& encoder() const { return *encoder_; }
  const Generator& generator() const { return *generator_; }

 private:
  std::shared_ptr<const index::Index> index_;
  std::shared_ptr<const embedding::Encoder> encoder_;
  std::shared_ptr<const Generator> generator_;
  const Resources& resources_;
};

RecommendResult recommend(const PatientRecord& record, std::shared_ptr<const index::Index> index,
                          const embedding::EmbedderSpec& embedder, const GeneratorSpec& generator,
                          const RetrievalConfig& cfg, std::size_t budget);

// Index entries for preprocessed cases.
std::vector<index::IndexEntry> make_entries(const std::vector<CaseRecord>& cases,
                                            const embedding::Encoder& encoder,
                                            const Resources& resources = Resources::bundled(),
                                            unsigned threads = 0);
index::Index build_case_index(const std::vector<CaseRecord>& cases,
                              const embedding::Encoder& encoder,
                              const Resources& resources = Resources::bundled(),
                              unsigned threads = 0);

}  // namespace prx::rag
