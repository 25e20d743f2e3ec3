#pragma once

// Provenance capture. A trace is opened when an analysis is submitted and
// holds a deep copy of the pipeline version it runs against, the inputs it
// was given, every execution event, and on close the outputs or errors.

#include <optional>
#include <string>
#include <vector>

#include "abase/persistency.hpp"
#include "abase/trace.hpp"

namespace abase {

struct AttemptReport {
  int attempt = 1;
  std::string resource_id;
  std::optional<Timestamp> scheduled_at;
  std::optional<Timestamp> started_at;
  std::optional<Timestamp> ended_at;
  std::string outcome;  // completed, failed, running, pending
  std::string error;
  std::int64_t duration_ms = 0;  // ended_at - started_at when both are known
  std::vector<std::string> notes;
};

struct StepReport {
  std::string step_id;
  std::string algorithm;
  std::set<std::string> depends_on;
  std::vector<InputValue> supplied_inputs;
  std::vector<std::pair<std::string, PortRef>> upstream_inputs;
  std::vector<AttemptReport> attempts;
  std::string state;  // completed, failed, not-run, running
  std::int64_t duration_ms = 0;
  std::vector<OutputValue> outputs;
};

/// Self-contained account of one analysis: who ran what, when, on which
/// inputs, where each attempt ran, and what came out.
struct ProvenanceGraph {
  Id analysis_id;
  UserRecord executor;
  UserRecord author;
  Timestamp submitted_at;
  AnalysisStatus status = AnalysisStatus::submitted;
  bool closed = false;
  std::optional<Timestamp> execution_started;
  std::optional<Timestamp> execution_finished;
  PipelineSnapshot pipeline;
  std::vector<InputValue> inputs;
  std::vector<StepReport> steps;
  std::vector<OutputValue> outputs;
  std::vector<FileRef> log_refs;
  std::vector<std::string> errors;
  std::vector<AnnotationRecord> annotations;
  std::size_t event_count = 0;
};

/// Inputs for a fresh analysis derived from a past one.
struct SubmissionSpec {
  Id user;
  Id pipeline_id;
  int version = 0;
  std::vector<InputValue> inputs;

  bool operator==(const SubmissionSpec&) const = default;
};

class Provenance {
 public:
  explicit Provenance(Persistency& persistency);

  ProvenanceTrace open_trace(const AnalysisRecord& analysis);

  /// Validates `event` against the per-attempt state machine and appends it;
  /// the returned copy carries the assigned sequence number.
  ExecutionEvent record_event(const Id& analysis_id, ExecutionEvent event);

  void close_trace(const Id& analysis_id, std::vector<OutputValue> outputs,
                   std::vector<FileRef> log_refs, AnalysisStatus final_status);

  ProvenanceTrace trace(const Id& analysis_id) const;
  ProvenanceGraph reconstruct(const Id& analysis_id) const;

  /// Same pipeline version, inputs with `overrides` applied per (step, port).
  SubmissionSpec derive_rerun(const Id& analysis_id, const std::vector<InputValue>& overrides) const;

 private:
  Persistency& persistency_;
};

/// Throws Error(state) if `event` is not a legal next event for `trace`.
void check_event(const ProvenanceTrace& trace, const ExecutionEvent& event);

json to_json(const ProvenanceGraph& g);
std::string render_text(const ProvenanceGraph& g);

}  // namespace abase
