#include "prx/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "prx/errors.hpp"
#include "prx/hashing.hpp"
#include "prx/json_io.hpp"
#include "prx/resources.hpp"
#include "prx/rng.hpp"

namespace prx::eval {

using nlohmann::json;

void SplitSpec::validate() const {
  double sum = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0)) throw Error(ErrorCode::InvalidArgument, "split fractions must be non-negative", "fractions");
    sum += f;
  }
  if (std::fabs(sum - 1.0) > 1e-9) throw Error(ErrorCode::InvalidArgument, "split fractions must sum to 1", "fractions");
}

std::string stratum_key(const CaseRecord& c) {
  std::string key(to_string(c.patient.demographics.insurance_status));
  for (Task t : kAllTasks) key += c.labels.get(t) ? "|1" : "|0";
  return key;
}

SplitResult split(const std::vector<CaseRecord>& corpus, const SplitSpec& spec) {
  spec.validate();
  if (corpus.size() < 20) {
    throw Error(ErrorCode::InvalidArgument, "split needs at least 20 records, got " + std::to_string(corpus.size()));
  }
  // Group by record_id so repeated encounters stay in one split.
  std::map<std::string, std::vector<std::size_t>> groups;
  std::vector<std::string> group_order;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    auto [it, fresh] = groups.try_emplace(corpus[i].patient.record_id);
    if (fresh) group_order.push_back(it->first);
    it->second.push_back(i);
  }
  std::map<std::string, std::vector<std::string>> strata;
  for (const auto& id : group_order) strata[stratum_key(corpus[groups[id].front()])].push_back(id);

  SplitResult out;
  std::vector<std::string> fallback;
  for (auto it = strata.begin(); it != strata.end();) {
    if (it->second.size() < spec.min_stratum) {
      out.warnings.push_back("StratumTooSmall: stratum " + it->first + " has " + std::to_string(it->second.size()) +
                             " record(s), merged into the fallback stratum");
      fallback.insert(fallback.end(), it->second.begin(), it->second.end());
      it = strata.erase(it);
    } else {
      ++it;
    }
  }
  if (!fallback.empty()) strata["~fallback"] = std::move(fallback);

  std::array<std::size_t, 3> assigned{0, 0, 0};
  std::size_t seen = 0;
  std::array<std::vector<CaseRecord>*, 3> dest{&out.train, &out.val, &out.test};
  for (auto& [key, ids] : strata) {
    std::sort(ids.begin(), ids.end());
    Rng rng(derive_seed(spec.seed, hashing::fnv1a64(key)));
    rng.shuffle(ids);
    const std::size_t n = ids.size();
    seen += n;
    std::array<std::size_t, 3> counts{};
    std::size_t used = 0;
    for (int s = 0; s < 3; ++s) {
      counts[s] = static_cast<std::size_t>(std::floor(spec.fractions[s] * static_cast<double>(n) + 1e-9));
      used += counts[s];
    }
    // Remaining slots go to the split furthest below its running target.
    while (used < n) {
      int best = 0;
      double best_gap = -1e300;
      for (int s = 0; s < 3; ++s) {
        if (spec.fractions[s] <= 0.0) continue;
        const double exact = spec.fractions[s] * static_cast<double>(n);
        if (static_cast<double>(counts[s]) >= exact) continue;
        const double gap = spec.fractions[s] * static_cast<double>(seen) -
                           static_cast<double>(assigned[s] + counts[s]);
        if (gap > best_gap) {
          best_gap = gap;
          best = s;
        }
      }
      ++counts[best];
      ++used;
    }
    std::size_t pos = 0;
    for (int s = 0; s < 3; ++s) {
      for (std::size_t j = 0; j < counts[s]; ++j, ++pos) {
        for (std::size_t idx : groups[ids[pos]]) dest[s]->push_back(corpus[idx]);
      }
      assigned[s] += counts[s];
    }
  }
  return out;
}

json PredictionRecord::to_json() const {
  json j = {{"record_id", record_id},
            {"task", std::string(to_string(task))},
            {"score", score},
            {"predicted_label", predicted_label},
            {"true_label", true_label},
            {"threshold", threshold},
            {"true_treatments", true_treatments}};
  if (predicted_treatment) j["predicted_treatment"] = *predicted_treatment;
  if (retrieval) j["retrieval"] = json_io::encode(*retrieval);
  return j;
}

PredictionRecord PredictionRecord::from_json(const json& j) {
  PredictionRecord p;
  try {
    p.record_id = j.at("record_id").get<std::string>();
    const auto task = parse_task(j.at("task").get<std::string>());
    if (!task) throw Error(ErrorCode::SchemaError, "unknown task", "task");
    p.task = *task;
    p.score = j.at("score").get<double>();
    p.threshold = j.value("threshold", 0.5);
    p.predicted_label = j.contains("predicted_label") ? j["predicted_label"].get<bool>() : p.score >= p.threshold;
    p.true_label = j.at("true_label").get<bool>();
    if (auto it = j.find("predicted_treatment"); it != j.end() && !it->is_null()) {
      p.predicted_treatment = it->get<std::string>();
    }
    if (auto it = j.find("true_treatments"); it != j.end()) {
      for (const auto& t : *it) p.true_treatments.insert(t.get<std::string>());
    }
    if (auto it = j.find("retrieval"); it != j.end() && !it->is_null()) {
      p.retrieval = json_io::decode_retrieval_set(*it, "retrieval");
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaError, std::string("prediction record: ") + e.what());
  }
  return p;
}

namespace {

void require_single_task(const std::vector<PredictionRecord>& preds) {
  if (preds.empty()) throw Error(ErrorCode::InvalidArgument, "no predictions");
  for (const auto& p : preds) {
    if (p.task != preds.front().task) {
      throw Error(ErrorCode::MixedTasks, "predictions mix tasks " + std::string(to_string(preds.front().task)) +
                                             " and " + std::string(to_string(p.task)));
    }
  }
}

double ratio(std::size_t num, std::size_t den, const char* name, std::vector<std::string>& zero) {
  if (den == 0) {
    zero.emplace_back(name);
    return 0.0;
  }
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

ClassificationMetrics classification_metrics(const std::vector<PredictionRecord>& preds) {
  require_single_task(preds);
  ClassificationMetrics m;
  for (const auto& p : preds) {
    if (p.predicted_label && p.true_label) ++m.tp;
    else if (p.predicted_label) ++m.fp;
    else if (p.true_label) ++m.fn;
    else ++m.tn;
  }
  m.accuracy = static_cast<double>(m.tp + m.tn) / static_cast<double>(preds.size());
  m.precision = ratio(m.tp, m.tp + m.fp, "precision", m.zero_denominator);
  m.recall = ratio(m.tp, m.tp + m.fn, "recall", m.zero_denominator);
  if (m.precision + m.recall > 0.0) {
    m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  } else {
    m.f1 = 0.0;
    m.zero_denominator.emplace_back("f1");
  }
  return m;
}

double auroc(const std::vector<double>& scores, const std::vector<bool>& labels) {
  if (scores.size() != labels.size()) throw Error(ErrorCode::InvalidArgument, "scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::size_t pos = 0, neg = 0;
  double rank_sum = 0.0;  // twice the midrank sum of positives, kept integral
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double twice_mid = static_cast<double>(i + 1 + j);  // 2 * mean of ranks i+1..j
    for (std::size_t q = i; q < j; ++q) {
      if (labels[order[q]]) {
        ++pos;
        rank_sum += twice_mid;
      } else {
        ++neg;
      }
    }
    i = j;
  }
  if (pos == 0 || neg == 0) throw Error(ErrorCode::SingleClass, "AUROC needs at least one positive and one negative");
  const double p = static_cast<double>(pos), n = static_cast<double>(neg);
  return (rank_sum / 2.0 - p * (p + 1.0) / 2.0) / (p * n);
}

double auroc(const std::vector<PredictionRecord>& preds) {
  require_single_task(preds);
  std::vector<double> s;
  std::vector<bool> y;
  for (const auto& p : preds) {
    s.push_back(p.score);
    y.push_back(p.true_label);
  }
  return auroc(s, y);
}

CcrResult ccr(const std::vector<PredictionRecord>& preds, double tau) {
  CcrResult out;
  std::set<std::string> seen;
  std::size_t consistent = 0, exact = 0;
  for (const auto& p : preds) {
    if (!seen.insert(p.record_id).second) continue;
    CcrAudit a;
    a.record_id = p.record_id;
    if (p.predicted_treatment && p.true_treatments.count(*p.predicted_treatment)) {
      a.consistent = true;
      a.criterion = Criterion::exact_match;
      ++exact;
    } else {
      if (!p.retrieval) throw Error(ErrorCode::MissingRetrieval, "prediction " + p.record_id + " has no retrieval set");
      if (p.predicted_treatment) {
        double best = -1.0;
        for (const auto& d : p.retrieval->cases) {
          if (!d.treatments.count(*p.predicted_treatment)) continue;
          const double sim = d.profile_similarity.value_or(d.similarity);
          if (sim >= tau && sim > best) {
            best = sim;
            a.consistent = true;
            a.criterion = Criterion::justified_deviation;
            a.justifying_case_id = d.record_id;
            a.retrieval_similarity = d.similarity;
            a.profile_similarity = d.profile_similarity;
          }
        }
      }
    }
    if (a.consistent) ++consistent;
    out.per_case.push_back(std::move(a));
  }
  out.total = out.per_case.size();
  if (out.total > 0) {
    out.ccr_pct = 100.0 * static_cast<double>(consistent) / static_cast<double>(out.total);
    out.exact_match_pct = 100.0 * static_cast<double>(exact) / static_cast<double>(out.total);
  }
  return out;
}

AtKResult precision_at_k(const std::vector<RankedQuery>& queries, std::size_t k) {
  if (k == 0) throw Error(ErrorCode::InvalidArgument, "k must be positive", "k");
  AtKResult r;
  if (queries.empty()) return r;
  double sum = 0.0;
  for (const auto& q : queries) {
    const std::size_t m = std::min(k, q.retrieved.cases.size());
    std::size_t hits = 0;
    for (std::size_t i = 0; i < m; ++i) hits += q.retrieved.cases[i].labels == q.true_class;
    r.padded += k - m;
    sum += static_cast<double>(hits) / static_cast<double>(k);
  }
  r.value = sum / static_cast<double>(queries.size());
  return r;
}

AtKResult mean_sim_at_k(const std::vector<RetrievalSet>& queries, std::size_t k) {
  if (k == 0) throw Error(ErrorCode::InvalidArgument, "k must be positive", "k");
  AtKResult r;
  if (queries.empty()) return r;
  double sum = 0.0;
  for (const auto& q : queries) {
    const std::size_t m = std::min(k, q.cases.size());
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += q.cases[i].similarity;
    r.padded += k - m;
    sum += s / static_cast<double>(k);
  }
  r.value = sum / static_cast<double>(queries.size());
  return r;
}

namespace {

const char* const kSexes[] = {"male", "female", "other_unknown"};
const char* const kHousing[] = {"housed", "homeless", "unknown"};
const char* const kInsurance[] = {"insured", "uninsured", "unknown"};
const char* const kClasses[] = {"opioid", "nsaid", "acetaminophen"};

int latest_pain(const PatientRecord& p) {
  int pain = -1;
  std::optional<Timestamp> at;
  for (const auto& v : p.vitals) {
    if (v.code != "72514-3") continue;
    if (!at || !(v.timestamp < *at)) {
      at = v.timestamp;
      pain = static_cast<int>(std::lround(v.value));
    }
  }
  return pain;
}

}  // namespace

FeatureEncoder FeatureEncoder::fit(const std::vector<CaseRecord>& train) {
  FeatureEncoder f;
  std::set<std::string> races;
  for (const auto& c : train) races.insert(c.patient.demographics.race);
  f.races.assign(races.begin(), races.end());
  for (const char* s : {"age<30", "age30-44", "age45-59", "age60-74", "age75+"}) f.names.emplace_back(s);
  for (const char* s : kSexes) f.names.push_back(std::string("sex=") + s);
  for (const auto& r : f.races) f.names.push_back("race=" + r);
  for (const char* s : kHousing) f.names.push_back(std::string("housing=") + s);
  for (const char* s : kInsurance) f.names.push_back(std::string("insurance=") + s);
  for (int e = 1; e <= 5; ++e) f.names.push_back("esi=" + std::to_string(e));
  for (const char* s : {"comorbid=0", "comorbid=1", "comorbid=2", "comorbid3+"}) f.names.emplace_back(s);
  for (const char* s : {"visits=1", "visits2-3", "visits4+"}) f.names.emplace_back(s);
  for (const char* s : {"pain=none", "pain0-3", "pain4-6", "pain7-10"}) f.names.emplace_back(s);
  for (const char* s : kClasses) f.names.push_back(std::string("active_med=") + s);
  for (char ch = 'A'; ch <= 'Z'; ++ch) f.names.push_back(std::string("dx_chapter=") + ch);
  f.names.emplace_back("allergy_any");
  return f;
}

std::vector<double> FeatureEncoder::encode(const CaseRecord& c) const {
  const auto& p = c.patient;
  const auto& d = p.demographics;
  std::vector<double> x;
  x.reserve(names.size());
  auto onehot = [&](std::size_t n, std::size_t hot) {
    for (std::size_t i = 0; i < n; ++i) x.push_back(i == hot ? 1.0 : 0.0);
  };
  onehot(5, d.age < 30 ? 0 : d.age < 45 ? 1 : d.age < 60 ? 2 : d.age < 75 ? 3 : 4);
  onehot(3, static_cast<std::size_t>(d.sex));
  const auto race = std::find(races.begin(), races.end(), d.race);
  onehot(races.size(), static_cast<std::size_t>(race - races.begin()));
  onehot(3, static_cast<std::size_t>(d.housing_status));
  onehot(3, static_cast<std::size_t>(d.insurance_status));
  onehot(5, static_cast<std::size_t>(std::clamp(p.esi, 1, 5) - 1));
  onehot(4, static_cast<std::size_t>(std::clamp(p.comorbidity_count, 0, 3)));
  onehot(3, p.recidivism <= 1 ? 0 : p.recidivism <= 3 ? 1 : 2);
  const int pain = latest_pain(p);
  onehot(4, pain < 0 ? 0 : pain <= 3 ? 1 : pain <= 6 ? 2 : 3);
  const auto& res = Resources::bundled();
  std::set<std::string> active;
  for (const auto& m : p.medications) {
    if (!m.active) continue;
    if (auto cls = res.drug_class_of(m.name)) active.insert(*cls);
  }
  for (const char* cls : kClasses) x.push_back(active.count(cls) ? 1.0 : 0.0);
  std::array<double, 26> chapters{};
  for (const auto& dx : p.diagnoses) {
    if (!dx.empty() && dx[0] >= 'A' && dx[0] <= 'Z') chapters[static_cast<std::size_t>(dx[0] - 'A')] = 1.0;
  }
  x.insert(x.end(), chapters.begin(), chapters.end());
  x.push_back(p.allergies.empty() ? 0.0 : 1.0);
  return x;
}

double LogisticModel::predict(const std::vector<double>& x) const {
  double z = bias;
  for (std::size_t i = 0; i < weights.size() && i < x.size(); ++i) z += weights[i] * x[i];
  return 1.0 / (1.0 + std::exp(-z));
}

LogisticModel fit_logistic(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                           const LogisticOptions& opt) {
  if (x.empty() || x.size() != y.size()) throw Error(ErrorCode::InvalidArgument, "logistic fit needs matching non-empty x and y");
  const std::size_t dim = x.front().size();
  const double n = static_cast<double>(x.size());
  LogisticModel m;
  m.weights.assign(dim, 0.0);
  std::vector<double> grad(dim);
  for (m.iterations = 0; m.iterations < opt.max_iterations; ++m.iterations) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double gb = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double r = m.predict(x[i]) - static_cast<double>(y[i]);
      for (std::size_t j = 0; j < dim; ++j) grad[j] += r * x[i][j];
      gb += r;
    }
    double norm2 = (gb / n) * (gb / n);
    for (std::size_t j = 0; j < dim; ++j) {
      grad[j] = grad[j] / n + opt.l2 * m.weights[j];
      norm2 += grad[j] * grad[j];
    }
    m.gradient_norm = std::sqrt(norm2);
    if (m.gradient_norm < opt.tolerance) {
      m.converged = true;
      break;
    }
    for (std::size_t j = 0; j < dim; ++j) m.weights[j] -= opt.learning_rate * grad[j];
    m.bias -= opt.learning_rate * gb / n;
  }
  return m;
}

BaselineResult logistic_baseline(const std::vector<CaseRecord>& train, const std::vector<CaseRecord>& test,
                                 const LogisticOptions& options, double threshold) {
  if (train.empty()) throw Error(ErrorCode::InvalidArgument, "empty training split");
  const auto enc = FeatureEncoder::fit(train);
  std::vector<std::vector<double>> xtr, xte;
  for (const auto& c : train) xtr.push_back(enc.encode(c));
  for (const auto& c : test) xte.push_back(enc.encode(c));
  BaselineResult out;
  for (Task task : kAllTasks) {
    std::vector<int> y;
    for (const auto& c : train) y.push_back(c.labels.get(task) ? 1 : 0);
    const auto model = fit_logistic(xtr, y, options);
    if (!model.converged) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "NonConvergence: %s stopped after %zu iterations, gradient norm %.3g",
                    std::string(to_string(task)).c_str(), model.iterations, model.gradient_norm);
      out.warnings.emplace_back(buf);
    }
    for (std::size_t i = 0; i < test.size(); ++i) {
      PredictionRecord p;
      p.record_id = test[i].patient.record_id;
      p.task = task;
      p.score = model.predict(xte[i]);
      p.threshold = threshold;
      p.predicted_label = p.score >= threshold;
      p.true_label = test[i].labels.get(task);
      p.true_treatments = test[i].treatments;
      out.predictions.push_back(std::move(p));
    }
  }
  return out;
}

std::string task_display_name(Task task) {
  switch (task) {
    case Task::non_opioid: return "Non-opioid analgesic";
    case Task::opioid_any: return "Any opioid";
    case Task::opioid_standard_dose: return "Opioid at standard dose";
  }
  return "unknown";
}

namespace {

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out << content;
    if (!out.flush()) throw Error(ErrorCode::IoError, "write failed for " + path.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot rename " + tmp.string() + ": " + ec.message());
}

}  // namespace

std::string performance_csv(const EvaluationReport& r) {
  std::string out = "task,model,accuracy,precision,recall,f1,auroc\n";
  for (const auto& row : r.performance) {
    out += csv_cell(row.task) + "," + csv_cell(row.model) + "," + fmt(row.metrics.accuracy) + "," +
           fmt(row.metrics.precision) + "," + fmt(row.metrics.recall) + "," + fmt(row.metrics.f1) + "," +
           (row.auroc ? fmt(*row.auroc) : std::string()) + "\n";
  }
  return out;
}

std::string ccr_csv(const EvaluationReport& r) {
  std::string out = "model,ccr_pct,exact_match_pct\n";
  for (const auto& row : r.consistency) {
    out += csv_cell(row.model) + "," + fmt(row.ccr_pct, 1) + "," + fmt(row.exact_match_pct, 1) + "\n";
  }
  return out;
}

std::string retrieval_csv(const EvaluationReport& r) {
  std::string out = "metric";
  for (const auto& row : r.retrieval) out += ",top_" + std::to_string(row.k);
  out += "\nprecision_at_k_pct";
  for (const auto& row : r.retrieval) out += "," + fmt(100.0 * row.precision.value, 1);
  out += "\nmean_sim_at_k";
  for (const auto& row : r.retrieval) out += "," + fmt(row.mean_sim.value, 3);
  return out + "\n";
}

json EvaluationReport::to_json() const {
  json perf = json::array(), cons = json::array(), retr = json::array();
  for (const auto& row : performance) {
    json m = {{"task", row.task},
              {"model", row.model},
              {"accuracy", row.metrics.accuracy},
              {"precision", row.metrics.precision},
              {"recall", row.metrics.recall},
              {"f1", row.metrics.f1},
              {"confusion", {{"tp", row.metrics.tp}, {"fp", row.metrics.fp}, {"fn", row.metrics.fn}, {"tn", row.metrics.tn}}},
              {"zero_denominator", row.metrics.zero_denominator}};
    m["auroc"] = row.auroc ? json(*row.auroc) : json(nullptr);
    perf.push_back(std::move(m));
  }
  for (const auto& row : consistency) {
    cons.push_back({{"model", row.model}, {"ccr_pct", row.ccr_pct}, {"exact_match_pct", row.exact_match_pct}});
  }
  for (const auto& row : retrieval) {
    retr.push_back({{"k", row.k},
                    {"precision_at_k", row.precision.value},
                    {"precision_padded", row.precision.padded},
                    {"mean_sim_at_k", row.mean_sim.value},
                    {"mean_sim_padded", row.mean_sim.padded}});
  }
  return {{"performance", perf},
          {"consistency", cons},
          {"retrieval", retr},
          {"decision_threshold", decision_threshold},
          {"tau", tau},
          {"zero_denominator_convention", "precision, recall and f1 are 0 when their denominator is 0"},
          {"notes", notes}};
}

void write_report(const EvaluationReport& report, const std::filesystem::path& out_dir) {
  if (report.empty()) throw Error(ErrorCode::InvalidArgument, "refusing to write an empty evaluation report");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + out_dir.string() + ": " + ec.message());
  write_file(out_dir / "performance.csv", performance_csv(report));
  write_file(out_dir / "ccr.csv", ccr_csv(report));
  write_file(out_dir / "retrieval.csv", retrieval_csv(report));
  write_file(out_dir / "report.json", report.to_json().dump(2) + "\n");
}

EvaluationReport report_from_predictions(const std::vector<PredictionRecord>& preds, const std::string& model,
                                         double tau, const std::vector<std::size_t>& ks) {
  if (preds.empty()) throw Error(ErrorCode::InvalidArgument, "no predictions");
  EvaluationReport r;
  r.tau = tau;
  r.decision_threshold = preds.front().threshold;
  for (Task task : kAllTasks) {
    std::vector<PredictionRecord> sub;
    for (const auto& p : preds) {
      if (p.task == task) sub.push_back(p);
    }
    if (sub.empty()) continue;
    PerformanceRow row{task_display_name(task), model, classification_metrics(sub), std::nullopt};
    try {
      row.auroc = auroc(sub);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::SingleClass) throw;
      r.notes.push_back("AUROC undefined for " + row.task + ": single class");
    }
    r.performance.push_back(std::move(row));
  }
  const bool has_treatments = std::all_of(preds.begin(), preds.end(), [](const PredictionRecord& p) {
    return p.predicted_treatment.has_value();
  });
  if (has_treatments) {
    const auto c = ccr(preds, tau);
    r.consistency.push_back({model, c.ccr_pct, c.exact_match_pct});
  }
  // Retrieval metrics need one query per record and its true label class.
  std::map<std::string, RankedQuery> queries;
  for (const auto& p : preds) {
    if (!p.retrieval) continue;
    auto& q = queries[p.record_id];
    q.retrieved = *p.retrieval;
    switch (p.task) {
      case Task::non_opioid: q.true_class.non_opioid = p.true_label; break;
      case Task::opioid_any: q.true_class.opioid_any = p.true_label; break;
      case Task::opioid_standard_dose: q.true_class.opioid_standard_dose = p.true_label; break;
    }
  }
  if (!queries.empty()) {
    std::vector<RankedQuery> rq;
    std::vector<RetrievalSet> rs;
    for (auto& [id, q] : queries) {
      rq.push_back(q);
      rs.push_back(q.retrieved);
    }
    for (std::size_t k : ks) r.retrieval.push_back({k, precision_at_k(rq, k), mean_sim_at_k(rs, k)});
  }
  return r;
}

}  // namespace prx::eval
