#include "prx/resources.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "prx/errors.hpp"
#include "prx/text.hpp"

namespace prx {

namespace detail {
const std::map<std::string, std::string_view>& bundled_files();
}

std::vector<std::vector<std::string>> parse_tsv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t nl = text.find('\n', start);
    std::string_view line =
        text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty() && line.front() != '#' && !text::trim(line).empty()) {
      auto cols = text::split(line, '\t');
      for (auto& c : cols) c = text::trim(c);
      rows.push_back(std::move(cols));
    }
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  return rows;
}

namespace {

const std::vector<std::string> kFiles = {
    "loinc_names.tsv", "rxnorm_brands.tsv", "panels.tsv",     "headers.txt",
    "abbreviations.tsv", "icd10_names.tsv", "treatments.tsv", "deid_names.txt",
    "deid_locations.txt", "rules/default.json"};

void require_columns(const std::vector<std::string>& row, std::size_t n, const std::string& file) {
  if (row.size() < n) {
    throw Error(ErrorCode::SchemaError,
                file + ": expected " + std::to_string(n) + " columns, got " +
                    std::to_string(row.size()),
                file);
  }
}

double to_double(const std::string& s, const std::string& file) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::SchemaError, file + ": not a number: '" + s + "'", file);
  }
}

bool to_flag(const std::string& s, const std::string& file) {
  if (s == "1") return true;
  if (s == "0") return false;
  throw Error(ErrorCode::SchemaError, file + ": expected 0/1, got '" + s + "'", file);
}

std::vector<std::string> word_list(std::string_view text) {
  std::vector<std::string> out;
  for (auto& row : parse_tsv(text)) out.push_back(row[0]);
  return out;
}

}  // namespace

Resources Resources::from_files(const std::map<std::string, std::string>& files) {
  auto get = [&](const std::string& name) -> const std::string& {
    auto it = files.find(name);
    if (it == files.end()) throw Error(ErrorCode::IoError, "missing resource file " + name, name);
    return it->second;
  };
  Resources r;
  for (auto& row : parse_tsv(get("loinc_names.tsv"))) {
    require_columns(row, 6, "loinc_names.tsv");
    LoincEntry e{row[1], row[2], to_double(row[3], "loinc_names.tsv"),
                 to_double(row[4], "loinc_names.tsv"), row[5]};
    r.loinc_by_name_[text::to_lower_ascii(row[0])] = e;
    r.loinc_by_name_.emplace(text::to_lower_ascii(row[2]), e);
    r.loinc_by_name_.emplace(text::to_lower_ascii(row[1]), e);
    r.loinc_by_code_.emplace(row[1], e);
  }
  for (auto& row : parse_tsv(get("rxnorm_brands.tsv"))) {
    require_columns(row, 4, "rxnorm_brands.tsv");
    RxEntry e{text::to_lower_ascii(row[1]), row[2], row[3]};
    r.rx_by_name_[text::to_lower_ascii(row[0])] = e;
    r.rx_by_name_.emplace(e.ingredient, e);
  }
  for (auto& row : parse_tsv(get("panels.tsv"))) {
    require_columns(row, 2, "panels.tsv");
    r.panels_[row[0]] = row[1];
  }
  for (auto& row : parse_tsv(get("headers.txt"))) {
    require_columns(row, 2, "headers.txt");
    auto label = parse_section_label(row[1]);
    if (!label) throw Error(ErrorCode::SchemaError, "headers.txt: unknown label " + row[1]);
    r.headers_.push_back({text::to_lower_ascii(row[0]), *label});
  }
  std::stable_sort(r.headers_.begin(), r.headers_.end(), [](const auto& a, const auto& b) {
    return a.phrase.size() > b.phrase.size();
  });
  for (auto& row : parse_tsv(get("abbreviations.tsv"))) {
    require_columns(row, 2, "abbreviations.tsv");
    r.abbreviations_[row[0]] = row[1];
  }
  for (auto& row : parse_tsv(get("icd10_names.tsv"))) {
    require_columns(row, 2, "icd10_names.tsv");
    r.icd10_[row[0]] = row[1];
  }
  for (auto& row : parse_tsv(get("treatments.tsv"))) {
    require_columns(row, 6, "treatments.tsv");
    TreatmentEntry e{row[0], row[1], row[2],
                     {to_flag(row[3], "treatments.tsv"), to_flag(row[4], "treatments.tsv"),
                      to_flag(row[5], "treatments.tsv")}};
    r.treatments_[row[0]] = e;
  }
  for (auto& w : word_list(get("deid_names.txt"))) r.deid_names_.insert(w);
  r.deid_locations_ = word_list(get("deid_locations.txt"));
  std::stable_sort(r.deid_locations_.begin(), r.deid_locations_.end(),
                   [](const auto& a, const auto& b) { return a.size() > b.size(); });
  r.default_rules_ = get("rules/default.json");
  return r;
}

const Resources& Resources::bundled() {
  static const Resources instance = [] {
    std::map<std::string, std::string> files;
    for (auto& [name, content] : detail::bundled_files()) files[name] = std::string(content);
    return from_files(files);
  }();
  return instance;
}

Resources Resources::load(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw Error(ErrorCode::IoError, "data directory not found: " + dir.string());
  }
  std::map<std::string, std::string> files;
  for (auto& [name, content] : detail::bundled_files()) files[name] = std::string(content);
  for (const auto& name : kFiles) {
    auto path = dir / name;
    if (!std::filesystem::exists(path)) continue;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    files[name] = ss.str();
  }
  return from_files(files);
}

const LoincEntry* Resources::loinc_by_name(std::string_view name) const {
  auto it = loinc_by_name_.find(text::to_lower_ascii(text::trim(name)));
  return it == loinc_by_name_.end() ? nullptr : &it->second;
}

const LoincEntry* Resources::loinc_by_code(std::string_view code) const {
  auto it = loinc_by_code_.find(std::string(code));
  return it == loinc_by_code_.end() ? nullptr : &it->second;
}

const RxEntry* Resources::rx_by_name(std::string_view name) const {
  auto it = rx_by_name_.find(text::to_lower_ascii(text::trim(name)));
  return it == rx_by_name_.end() ? nullptr : &it->second;
}

std::optional<std::string> Resources::drug_class_of(std::string_view ingredient) const {
  if (auto* e = rx_by_name(ingredient)) return e->drug_class;
  return std::nullopt;
}

bool Resources::is_known_ingredient(std::string_view name) const {
  auto* e = rx_by_name(name);
  return e && e->ingredient == text::to_lower_ascii(text::trim(name));
}

std::optional<std::string> Resources::panel_for(std::string_view loinc_code) const {
  auto it = panels_.find(std::string(loinc_code));
  if (it == panels_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::string> Resources::diagnosis_display(std::string_view icd10) const {
  auto it = icd10_.find(std::string(icd10));
  if (it == icd10_.end()) return std::nullopt;
  return it->second;
}

const TreatmentEntry* Resources::treatment(std::string_view label) const {
  auto it = treatments_.find(std::string(label));
  return it == treatments_.end() ? nullptr : &it->second;
}

std::vector<std::string> Resources::treatment_labels() const {
  std::vector<std::string> out;
  for (const auto& [label, e] : treatments_) out.push_back(label);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace prx
