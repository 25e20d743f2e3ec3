#pragma once

// Simulated execution grid. Pipelines are written in a line-oriented text
// format:
//
//   pipeline <name>
//   step <id> uses <algorithm> [after <id>,<id>] [in <port>:<kind>[=<step>.<port>],...] out <port>,...
//
// '#' starts a comment. Steps run one at a time on simulated resources with a
// virtual clock; injected failures are retried on the next resource.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "abase/persistency.hpp"
#include "abase/provenance.hpp"
#include "abase/trace.hpp"

namespace abase {

struct StepDef {
  std::string step_id;
  std::string algorithm;
  std::set<std::string> depends_on;
  std::vector<InputPort> inputs;
  std::vector<std::string> outputs;
  int line = 0;

  bool operator==(const StepDef&) const = default;
};

struct PipelineDefinition {
  std::string name;
  std::vector<StepDef> steps;  // in file order

  const StepDef* step(const std::string& id) const noexcept;
  bool operator==(const PipelineDefinition&) const = default;
};

struct ParseViolation {
  int line = 0;  // 1-based; 0 when the problem is not tied to one line
  std::string message;

  bool operator==(const ParseViolation&) const = default;
};

using ParseResult = std::variant<PipelineDefinition, std::vector<ParseViolation>>;

/// `known_algorithms` holds the algorithm names a step may use.
ParseResult parse_pipeline(std::string_view text, const std::set<std::string>& known_algorithms);
std::string format_pipeline(const PipelineDefinition& def);

/// Catalog steps for `def`; `algorithm_ids` maps algorithm names to ids.
std::vector<PipelineStep> to_steps(const PipelineDefinition& def,
                                   const std::map<std::string, Id>& algorithm_ids);
PipelineDefinition from_snapshot(const PipelineSnapshot& snapshot);

// ---------------------------------------------------------------------------
// Toy algorithms

struct AlgorithmInput {
  std::string port;
  std::string filename;
  std::string content;
};

struct AlgorithmCall {
  std::vector<AlgorithmInput> files;  // port declaration order, then supply order
  std::map<std::string, AttrValue> scalars;
};

/// Deterministic transform; the result is written to every output port.
using ToyAlgorithm = std::function<std::string(const AlgorithmCall&)>;

/// line-count, concatenate, checksum-stamp, threshold-filter.
const std::map<std::string, ToyAlgorithm>& toy_algorithms();

// ---------------------------------------------------------------------------
// Resources, planning, execution

struct SimResource {
  std::string resource_id;
  double speed_factor = 1.0;
  std::set<std::pair<std::string, int>> failure_plan;  // (step_id, attempt)

  bool operator==(const SimResource&) const = default;
};

/// Resources r1..rn whose speeds and failure plans are drawn from `seed`.
/// Each (step, attempt) fails on a resource with probability `failure_rate`.
std::vector<SimResource> make_resources(std::size_t n, std::uint64_t seed,
                                        const std::vector<std::string>& step_ids,
                                        double failure_rate);

struct SchedulePlan {
  std::vector<std::pair<std::string, std::string>> assignments;  // (step_id, resource_id)

  bool operator==(const SchedulePlan&) const = default;
};

/// Lexicographically smallest topological order; resources assigned
/// round-robin in resource id order.
SchedulePlan make_plan(const PipelineDefinition& def, const std::vector<SimResource>& resources);

/// Virtual run time of one attempt.
std::int64_t attempt_duration_ms(std::uint64_t input_bytes, double speed_factor);

using EventSink = std::function<void(const ExecutionEvent&)>;
using FileLoader = std::function<std::string(const FileRef&)>;
using DatasetResolver = std::function<std::vector<FileRef>(const DatasetSelection&)>;

/// Reads file:// locations from the local filesystem.
std::string load_local(const FileRef& ref);

struct ExecutionContext {
  std::filesystem::path work_dir;  // outputs land in work_dir/<step>/<port>
  Id analysis_id;
  Timestamp origin;
  FileLoader loader = load_local;
  DatasetResolver datasets;
};

struct ExecutionResult {
  AnalysisStatus status = AnalysisStatus::completed;
  std::string error;
  std::vector<OutputValue> outputs;       // every completed step
  std::vector<OutputValue> sink_outputs;  // steps nothing depends on
  std::vector<ExecutionEvent> events;
  std::vector<FileRef> log_refs;
  std::set<std::string> skipped;  // never ran because an upstream step failed
};

ExecutionResult execute(const SchedulePlan& plan, const PipelineDefinition& def,
                        const std::vector<InputValue>& inputs,
                        const std::vector<SimResource>& resources, const EventSink& sink,
                        const ExecutionContext& ctx);

// ---------------------------------------------------------------------------
// Orchestration

struct RunOptions {
  std::size_t resources = 2;
  std::uint64_t seed = 0;
  double failure_rate = 0.1;
  /// Used instead of generated resources when non-empty.
  std::vector<SimResource> explicit_resources;
};

class PipelineService {
 public:
  PipelineService(Persistency& persistency, Provenance& provenance,
                  std::filesystem::path work_root);

  /// Records the analysis, runs it, and closes its trace. Returns the final
  /// record; a failed run is a result, not an exception.
  AnalysisRecord submit_analysis(const Id& caller, const Id& pipeline_id, int version,
                                 std::vector<InputValue> inputs, const RunOptions& options);

  const std::filesystem::path& work_root() const noexcept { return work_root_; }

 private:
  /// Fills in catalog details for file inputs given by lfn alone.
  void resolve_file_inputs(std::vector<InputValue>& inputs) const;

  Persistency& persistency_;
  Provenance& provenance_;
  std::filesystem::path work_root_;
};

}  // namespace abase
