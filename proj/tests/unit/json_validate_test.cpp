#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "prx/errors.hpp"
#include "prx/json_io.hpp"
#include "prx/validate.hpp"

using namespace prx;
using prx::testing::sample_case;
using prx::testing::sample_patient;

TEST(JsonIo, CaseRoundTrip) {
  const auto c = sample_case();
  const auto j = json_io::encode(c);
  EXPECT_EQ(json_io::decode_case(j), c);
  EXPECT_EQ(json_io::dump(j), json_io::dump(json_io::encode(json_io::decode_case(j))));
}

TEST(JsonIo, MissingDemographicsReportsPath) {
  auto j = json_io::encode(sample_patient());
  j.erase("demographics");
  try {
    json_io::decode_patient(j);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SchemaError);
    EXPECT_EQ(e.path(), "demographics");
  }
}

TEST(JsonIo, NestedFieldPathAndTimestampCode) {
  auto j = json_io::encode(sample_patient());
  j["vitals"][0]["timestamp"] = "not a time";
  try {
    json_io::decode_patient(j);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnparseableTimestamp);
    EXPECT_EQ(e.path(), "vitals[0].timestamp");
  }
  j = json_io::encode(sample_patient());
  j["demographics"]["sex"] = "x";
  try {
    json_io::decode_patient(j);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.path(), "demographics.sex");
  }
}

TEST(JsonIo, DefaultsForOptionalLists) {
  const auto j = nlohmann::json::parse(
      R"({"record_id":"X","demographics":{"age":30,"sex":"male"},"vitals":[{"name":"heart rate","value":80,"timestamp":"2023-01-02"}]})");
  const auto p = json_io::decode_patient(j);
  EXPECT_TRUE(p.labs.empty());
  EXPECT_TRUE(p.notes.empty());
  EXPECT_EQ(p.encounter_time, Timestamp::parse("2023-01-02"));
  EXPECT_EQ(p.demographics.insurance_status, InsuranceStatus::unknown);
}

TEST(JsonIo, MalformedTextIsSchemaError) {
  try {
    json_io::parse("{not json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SchemaError);
  }
}

TEST(JsonIo, DumpIsCanonical) {
  const auto a = nlohmann::json::parse(R"({"b":1,"a":[0.1,2]})");
  EXPECT_EQ(json_io::dump(a), R"({"a":[0.1,2],"b":1})");
}

TEST(Validate, AcceptsNormalizedSample) {
  auto c = sample_case();
  for (auto& v : c.patient.vitals) v.code = "72514-3";
  for (auto& l : c.patient.labs) l.code = "2160-0";
  EXPECT_TRUE(validate(c).ok());
}

TEST(Validate, ReportsEveryViolation) {
  auto c = sample_case();
  c.patient.record_id = "";
  c.patient.esi = 0;
  c.patient.demographics.age = 131;
  c.patient.recidivism = 0;
  c.treatments.clear();
  const auto rep = validate(c);
  std::set<std::string> paths;
  for (const auto& v : rep.violations) paths.insert(v.path);
  for (const char* p : {"patient.record_id", "patient.esi", "patient.demographics.age", "patient.recidivism", "treatments"}) {
    EXPECT_TRUE(paths.count(p)) << p;
  }
}

TEST(Validate, LabelSubsetInvariant) {
  auto c = sample_case();
  for (auto& v : c.patient.vitals) v.code = "72514-3";
  for (auto& l : c.patient.labs) l.code = "2160-0";
  c.labels = {false, false, true};
  const auto rep = validate(c);
  ASSERT_FALSE(rep.ok());
  EXPECT_EQ(rep.violations.front().path, "labels");
}

TEST(Validate, EsiBounds) {
  auto p = sample_patient();
  for (auto& v : p.vitals) v.code = "72514-3";
  for (auto& l : p.labs) l.code = "2160-0";
  for (int esi : {1, 5}) {
    p.esi = esi;
    EXPECT_TRUE(validate(p).ok()) << esi;
  }
  for (int esi : {0, 6}) {
    p.esi = esi;
    EXPECT_FALSE(validate(p).ok()) << esi;
  }
}
