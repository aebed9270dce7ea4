#include <algorithm>

#include "prx/ingest.hpp"

namespace prx::ingest {

namespace {

template <class T>
void sort_by_time(std::vector<T>& v) {
  std::stable_sort(v.begin(), v.end(),
                   [](const T& a, const T& b) { return a.timestamp < b.timestamp; });
}

template <class T>
void drop_before(std::vector<T>& v, Timestamp cutoff) {
  v.erase(std::remove_if(v.begin(), v.end(), [&](const T& e) { return e.timestamp < cutoff; }),
          v.end());
}

}  // namespace

PatientRecord temporal_order(PatientRecord r) {
  sort_by_time(r.vitals);
  sort_by_time(r.labs);
  sort_by_time(r.medications);
  sort_by_time(r.notes);
  return r;
}

PatientRecord apply_window(PatientRecord r, const WindowConfig& cfg) {
  if (!cfg.enabled) return r;
  if (cfg.window_days < 1) throw Error(ErrorCode::InvalidArgument, "window_days must be >= 1");
  Timestamp anchor = r.encounter_time;
  if (cfg.anchor == WindowAnchor::latest_event) {
    std::optional<Timestamp> latest;
    auto see = [&](Timestamp t) {
      if (!latest || t > *latest) latest = t;
    };
    for (auto& e : r.vitals) see(e.timestamp);
    for (auto& e : r.labs) see(e.timestamp);
    for (auto& m : r.medications) see(m.timestamp);
    for (auto& n : r.notes) see(n.timestamp);
    if (!latest) return r;
    anchor = *latest;
  }
  const Timestamp cutoff = anchor.plus_days(-cfg.window_days);
  drop_before(r.vitals, cutoff);
  drop_before(r.labs, cutoff);
  drop_before(r.medications, cutoff);
  drop_before(r.notes, cutoff);
  return r;
}

}  // namespace prx::ingest
