#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "abase/model.hpp"

namespace abase {

enum class EventKind { scheduled, started, status, failed, rescheduled, completed };

const char* to_string(EventKind k) noexcept;
std::optional<EventKind> parse_event_kind(std::string_view s) noexcept;

/// Maximum execution attempts per step before the step is given up.
inline constexpr int kMaxAttempts = 3;

struct ExecutionEvent {
  std::uint64_t seq = 0;
  std::string step_id;
  int attempt = 1;
  EventKind kind = EventKind::scheduled;
  std::string resource_id;
  Timestamp timestamp;
  std::map<std::string, std::string> payload;

  bool operator==(const ExecutionEvent&) const = default;
};

/// Deep copy of what an analysis ran against, taken when its trace opens.
struct PipelineSnapshot {
  Id pipeline_id;
  std::string name;
  Id author;
  PipelineVersion version;
  std::vector<PipelineStep> steps;
  std::vector<AlgorithmRecord> algorithms;

  const AlgorithmRecord* algorithm(const Id& id) const noexcept;
  const PipelineStep* step(const std::string& step_id) const noexcept;
  bool operator==(const PipelineSnapshot&) const = default;
};

struct ProvenanceTrace {
  Id analysis_id;
  Id user;
  Timestamp submitted_at;
  PipelineSnapshot snapshot;
  std::vector<InputValue> inputs;
  std::vector<ExecutionEvent> events;
  bool closed = false;
  std::optional<AnalysisStatus> final_status;

  bool operator==(const ProvenanceTrace&) const = default;
};

}  // namespace abase
