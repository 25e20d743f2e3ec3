#pragma once

// Cohort filtering over indexed data items and the provenance question
// templates (who, when, outputs, inputs, correctness).

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "abase/codec.hpp"
#include "abase/persistency.hpp"

namespace abase {

enum class Comparator { eq, ne, lt, le, gt, ge };

const char* to_string(Comparator c) noexcept;

struct Predicate {
  std::string attribute;
  Comparator op = Comparator::eq;
  AttrValue literal;

  bool operator==(const Predicate&) const = default;
};

/// Conjunction of predicates; empty matches everything.
struct FilterExpr {
  std::vector<Predicate> predicates;

  bool operator==(const FilterExpr&) const = default;
};

/// Parses `attr op value` terms joined by '&'. Accepts =, !=, <, <=, >, >=
/// and the symbols ≠ ≤ ≥. Throws Error(validation).
FilterExpr parse_filter(std::string_view wire);
std::string format_filter(const FilterExpr& f);

enum class Verdict : std::uint8_t { reject, accept, type_error };

/// An absent attribute rejects. An ordered comparison against a text value
/// is a type error.
Verdict evaluate(const Predicate& p, const AttrMap& attrs);
Verdict evaluate(const FilterExpr& f, const AttrMap& attrs);

/// Reference scan, one verdict per row.
std::vector<Verdict> filter_serial(const std::vector<const AttrMap*>& rows, const FilterExpr& f);
/// OpenMP scan; identical output to filter_serial.
std::vector<Verdict> filter_parallel(const std::vector<const AttrMap*>& rows, const FilterExpr& f);

struct ItemHit {
  Id dataset_id;
  DataItemRecord item;

  bool operator==(const ItemHit&) const = default;
};

struct PipelineQuery {
  std::optional<std::string> name_contains;
  std::optional<Id> uses_algorithm;
  std::optional<Id> author;
};

struct ExecutionRow {
  UserRecord executor;
  Id analysis_id;
  int version = 0;
  Timestamp submitted_at;
  AnalysisStatus status = AnalysisStatus::submitted;
};

struct AuthorshipReport {
  Id pipeline_id;
  std::string pipeline_name;
  UserRecord author;
  std::vector<ExecutionRow> executions;
};

struct StepTiming {
  std::string step_id;
  int attempts = 0;
  std::int64_t duration_ms = 0;
};

struct TimingReport {
  Id analysis_id;
  Timestamp submitted_at;
  std::optional<Timestamp> started;
  std::optional<Timestamp> finished;
  std::int64_t total_ms = 0;
  std::vector<StepTiming> steps;
};

struct LineageAnswer {
  std::string lfn;
  Id analysis_id;
  Id pipeline_id;
  int version = 0;
  std::string step_id;
  std::string port;
  std::vector<InputValue> inputs;
};

struct StepAttempts {
  std::string step_id;
  int attempts = 0;
  std::string outcome;  // completed, failed, not-run
  std::vector<std::string> resources;
};

struct CorrectnessRow {
  Id analysis_id;
  Id executor;
  AnalysisStatus status = AnalysisStatus::submitted;
  std::vector<StepAttempts> steps;
  std::vector<OutputValue> produced;
  std::vector<std::string> errors;
};

class QueryService {
 public:
  explicit QueryService(const Persistency& persistency);

  /// Items visible to `caller` matching `f`, ordered by (dataset_id, item_id).
  std::vector<ItemHit> query_data_items(const Id& caller, const std::optional<Id>& dataset,
                                        const FilterExpr& f, bool parallel = true) const;

  std::vector<PipelineRecord> query_pipelines(const PipelineQuery& q) const;

  AuthorshipReport who_authored_and_executed(const Id& pipeline_id) const;
  TimingReport when_executed(const Id& analysis_id) const;
  std::vector<OutputValue> outputs_of(const Id& analysis_id) const;
  LineageAnswer inputs_for_output(const std::string& lfn) const;
  std::vector<CorrectnessRow> execution_correctness(const Id& pipeline_id, int version) const;

 private:
  const Persistency& persistency_;
};

json to_json(const ItemHit& h);
json to_json(const AuthorshipReport& r);
json to_json(const TimingReport& r);
json to_json(const LineageAnswer& r);
json to_json(const CorrectnessRow& r);

}  // namespace abase
