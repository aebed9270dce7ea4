#pragma once

#include <functional>
#include <string_view>
#include <vector>

#include "prx/embedding.hpp"
#include "prx/evaluation.hpp"
#include "prx/rag.hpp"

// The full held-out evaluation run: split, index the training split, answer
// every test query with the RAG engine, fit the logistic baseline, and
// assemble the three report tables.
namespace prx::eval {

struct ProtocolConfig {
  SplitSpec split;
  embedding::EmbedderSpec embedder;
  rag::GeneratorSpec generator;
  RetrievalConfig retrieval;
  std::size_t budget = 2048;
  std::vector<std::size_t> ks{3, 5, 10};
  double threshold = 0.5;
  bool run_baseline = true;
  unsigned threads = 0;
  std::function<void(std::string_view)> progress;
};

struct ProtocolResult {
  EvaluationReport report;
  std::vector<PredictionRecord> rag_predictions;       // all three tasks
  std::vector<PredictionRecord> baseline_predictions;  // all three tasks
  CcrResult rag_ccr;
  std::size_t train_size = 0, val_size = 0, test_size = 0;
  std::size_t empty_precedent = 0;
};

// `corpus` must already be preprocessed.
ProtocolResult run_protocol(const std::vector<CaseRecord>& corpus, const ProtocolConfig& cfg,
                            const Resources& resources = Resources::bundled());

std::string rag_model_name(rag::GeneratorKind kind);

}  // namespace prx::eval
