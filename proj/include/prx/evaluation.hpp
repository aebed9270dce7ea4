#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prx/model.hpp"

namespace prx::eval {

struct SplitSpec {
  std::array<double, 3> fractions{0.70, 0.15, 0.15};
  std::uint64_t seed = 7;
  std::size_t min_stratum = 3;

  void validate() const;
};

struct SplitResult {
  std::vector<CaseRecord> train;
  std::vector<CaseRecord> val;
  std::vector<CaseRecord> test;
  std::vector<std::string> warnings;
};

// Stratified on (insurance status, three labels). Records sharing a
// record_id stay together. Strata smaller than min_stratum are merged into
// a fallback stratum with a warning.
SplitResult split(const std::vector<CaseRecord>& corpus, const SplitSpec& spec);
std::string stratum_key(const CaseRecord& c);

struct PredictionRecord {
  std::string record_id;
  Task task = Task::non_opioid;
  double score = 0.0;
  bool predicted_label = false;
  bool true_label = false;
  double threshold = 0.5;
  std::optional<std::string> predicted_treatment;
  std::set<std::string> true_treatments;
  std::optional<RetrievalSet> retrieval;

  nlohmann::json to_json() const;
  static PredictionRecord from_json(const nlohmann::json& j);
};

struct ClassificationMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  // Metric names whose denominator was zero and were reported as 0.
  std::vector<std::string> zero_denominator;
};

// Throws InvalidArgument on empty input, MixedTasks on more than one task.
ClassificationMetrics classification_metrics(const std::vector<PredictionRecord>& preds);
// Mann-Whitney formulation with half credit for ties. Throws SingleClass.
double auroc(const std::vector<PredictionRecord>& preds);
double auroc(const std::vector<double>& scores, const std::vector<bool>& labels);

enum class Criterion { exact_match, justified_deviation, none };

struct CcrAudit {
  std::string record_id;
  bool consistent = false;
  Criterion criterion = Criterion::none;
  std::string justifying_case_id;
  std::optional<double> retrieval_similarity;
  std::optional<double> profile_similarity;
};

struct CcrResult {
  double ccr_pct = 0.0;
  double exact_match_pct = 0.0;
  std::size_t total = 0;
  std::vector<CcrAudit> per_case;
};

// Justified deviation uses a retrieved case's profile similarity when set,
// its retrieval similarity otherwise.
CcrResult ccr(const std::vector<PredictionRecord>& preds, double tau = 0.80);

struct RankedQuery {
  OutcomeLabels true_class;
  RetrievalSet retrieved;
};

struct AtKResult {
  double value = 0.0;
  std::size_t padded = 0;  // missing slots counted as misses / zero similarity
};

AtKResult precision_at_k(const std::vector<RankedQuery>& queries, std::size_t k);
AtKResult mean_sim_at_k(const std::vector<RetrievalSet>& queries, std::size_t k);

// Binned / one-hot structured features only.
struct FeatureEncoder {
  std::vector<std::string> names;
  std::vector<std::string> races;  // fitted vocabulary

  static FeatureEncoder fit(const std::vector<CaseRecord>& train);
  std::vector<double> encode(const CaseRecord& c) const;
};

struct LogisticOptions {
  double l2 = 1e-3;
  double learning_rate = 0.5;
  std::size_t max_iterations = 5000;
  double tolerance = 1e-6;
};

struct LogisticModel {
  std::vector<double> weights;
  double bias = 0.0;
  std::size_t iterations = 0;
  double gradient_norm = 0.0;
  bool converged = false;

  double predict(const std::vector<double>& x) const;
};

// Minimizes mean log-loss + (l2 / 2) |w|^2 by batch gradient descent.
LogisticModel fit_logistic(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                           const LogisticOptions& options = {});

struct BaselineResult {
  std::vector<PredictionRecord> predictions;  // all three tasks
  std::vector<std::string> warnings;          // NonConvergence notices
};

BaselineResult logistic_baseline(const std::vector<CaseRecord>& train,
                                 const std::vector<CaseRecord>& test,
                                 const LogisticOptions& options = {}, double threshold = 0.5);

struct PerformanceRow {
  std::string task;
  std::string model;
  ClassificationMetrics metrics;
  std::optional<double> auroc;
};

struct CcrRow {
  std::string model;
  double ccr_pct = 0.0;
  double exact_match_pct = 0.0;
};

struct RetrievalRow {
  std::size_t k = 0;
  AtKResult precision;
  AtKResult mean_sim;
};

struct EvaluationReport {
  std::vector<PerformanceRow> performance;
  std::vector<CcrRow> consistency;
  std::vector<RetrievalRow> retrieval;
  double decision_threshold = 0.5;
  double tau = 0.80;
  std::vector<std::string> notes;

  bool empty() const { return performance.empty() && consistency.empty() && retrieval.empty(); }
  nlohmann::json to_json() const;
};

std::string task_display_name(Task task);
std::string performance_csv(const EvaluationReport& report);
std::string ccr_csv(const EvaluationReport& report);
std::string retrieval_csv(const EvaluationReport& report);

// Writes performance.csv, ccr.csv, retrieval.csv and report.json. Throws
// InvalidArgument for an empty report and IoError on write failure.
void write_report(const EvaluationReport& report, const std::filesystem::path& out_dir);

// Builds a report from scored predictions alone (no baseline, no retrieval
// recomputation beyond what the records carry).
EvaluationReport report_from_predictions(const std::vector<PredictionRecord>& preds,
                                         const std::string& model, double tau,
                                         const std::vector<std::size_t>& ks = {3, 5, 10});

}  // namespace prx::eval
