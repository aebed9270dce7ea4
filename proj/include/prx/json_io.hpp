#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <string_view>

#include "prx/model.hpp"

// JSON encoding of the domain types. Field names follow the type
// definitions; decoding reports the offending field path in SchemaError.
namespace prx::json_io {

using nlohmann::json;

json encode(const Demographics& v);
json encode(const ObservationEvent& v);
json encode(const MedicationEvent& v);
json encode(const NoteSection& v);
json encode(const ClinicalNote& v);
json encode(const PatientRecord& v);
json encode(const OutcomeLabels& v);
json encode(const CaseRecord& v);
json encode(const Chunk& v);
json encode(const RetrievalFilters& v);
json encode(const RetrievedCase& v);
json encode(const RetrievalSet& v);
json encode(const Recommendation& v);

PatientRecord decode_patient(const json& j, const std::string& path = "");
CaseRecord decode_case(const json& j, const std::string& path = "");
OutcomeLabels decode_labels(const json& j, const std::string& path = "labels");
RetrievalFilters decode_filters(const json& j, const std::string& path = "filters");
RetrievedCase decode_retrieved_case(const json& j, const std::string& path = "");
RetrievalSet decode_retrieval_set(const json& j, const std::string& path = "");
Recommendation decode_recommendation(const json& j, const std::string& path = "");

// Parses text as JSON; malformed text raises SchemaError.
json parse(std::string_view text);

// Canonical single-line serialization (sorted keys, shortest round-trip floats).
std::string dump(const json& j);

}  // namespace prx::json_io
