#include "abase/trace.hpp"

namespace abase {

const char* to_string(EventKind k) noexcept {
  switch (k) {
    case EventKind::scheduled: return "scheduled";
    case EventKind::started: return "started";
    case EventKind::status: return "status";
    case EventKind::failed: return "failed";
    case EventKind::rescheduled: return "rescheduled";
    case EventKind::completed: return "completed";
  }
  return "?";
}

std::optional<EventKind> parse_event_kind(std::string_view s) noexcept {
  if (s == "scheduled") return EventKind::scheduled;
  if (s == "started") return EventKind::started;
  if (s == "status") return EventKind::status;
  if (s == "failed") return EventKind::failed;
  if (s == "rescheduled") return EventKind::rescheduled;
  if (s == "completed") return EventKind::completed;
  return std::nullopt;
}

const AlgorithmRecord* PipelineSnapshot::algorithm(const Id& id) const noexcept {
  for (const auto& a : algorithms) {
    if (a.algorithm_id == id) return &a;
  }
  return nullptr;
}

const PipelineStep* PipelineSnapshot::step(const std::string& step_id) const noexcept {
  for (const auto& s : steps) {
    if (s.step_id == step_id) return &s;
  }
  return nullptr;
}

}  // namespace abase
