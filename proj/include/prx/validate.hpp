#pragma once

#include <string>
#include <vector>

#include "prx/model.hpp"

namespace prx {

struct Violation {
  std::string path;
  std::string message;

  bool operator==(const Violation&) const = default;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const noexcept { return violations.empty(); }
};

ValidationReport validate(const PatientRecord& record);
ValidationReport validate(const CaseRecord& record);

}  // namespace prx
