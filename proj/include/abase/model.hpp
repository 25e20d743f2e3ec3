#pragma once

// Catalog entities: users, pipelines and their versions, algorithms,
// datasets indexed by reference, analyses, and annotations. Pure values;
// nothing in here touches storage or execution state.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "abase/ids.hpp"

namespace abase {

/// Typed attribute value: text, integer, or decimal.
using AttrValue = std::variant<std::string, std::int64_t, double>;
using AttrMap = std::map<std::string, AttrValue>;

/// "string", "int" or "decimal".
const char* type_name(const AttrValue& v) noexcept;
std::string render(const AttrValue& v);
/// Parses `text` as the named type; nullopt when it does not fit.
std::optional<AttrValue> parse_typed(std::string_view type, std::string_view text);
/// Integer if it parses as one, then decimal, else text.
AttrValue auto_typed(std::string_view text);
bool is_numeric(const AttrValue& v) noexcept;
double as_double(const AttrValue& v);

enum class Role { neuroscientist, data_provider, admin };

const char* to_string(Role r) noexcept;
std::optional<Role> parse_role(std::string_view s) noexcept;

struct UserRecord {
  Id user_id;
  std::string name;
  std::string organisation;
  Role role = Role::neuroscientist;
  bool active = true;

  bool operator==(const UserRecord&) const = default;
};

struct PipelineVersion {
  int version = 0;
  std::string lfn;
  Timestamp created_at;
  std::string description;

  bool operator==(const PipelineVersion&) const = default;
};

struct PipelineRecord {
  Id pipeline_id;
  std::string name;
  Id author;
  std::vector<PipelineVersion> versions;

  const PipelineVersion* find_version(int v) const noexcept;
  bool operator==(const PipelineRecord&) const = default;
};

struct AlgorithmRecord {
  Id algorithm_id;
  std::string name;
  std::string toolkit;
  std::string executable_lfn;

  bool operator==(const AlgorithmRecord&) const = default;
};

enum class PortKind { file, dataset, scalar };

const char* to_string(PortKind k) noexcept;
std::optional<PortKind> parse_port_kind(std::string_view s) noexcept;

/// Output port of an upstream step feeding an input port.
struct PortRef {
  std::string step_id;
  std::string port;

  bool operator==(const PortRef&) const = default;
};

struct InputPort {
  std::string name;
  PortKind kind = PortKind::file;
  std::optional<PortRef> source;  // unset: supplied by the analysis inputs

  bool operator==(const InputPort&) const = default;
};

struct PipelineStep {
  Id pipeline_id;
  int version = 0;
  std::string step_id;
  Id algorithm_id;
  int step_order = 0;
  std::set<std::string> depends_on;
  std::vector<InputPort> input_ports;
  std::vector<std::string> output_ports;

  bool operator==(const PipelineStep&) const = default;
};

enum class FileKind { image, data };

const char* to_string(FileKind k) noexcept;

struct FileRef {
  std::string lfn;
  std::string filename;
  std::string location;
  FileKind kind = FileKind::data;
  std::uint64_t size_bytes = 0;
  std::optional<std::string> checksum;

  bool operator==(const FileRef&) const = default;
};

struct Visibility {
  enum class Kind { private_, public_, shared };
  Kind kind = Kind::private_;
  std::set<Id> shared_with;

  static Visibility private_only() { return {}; }
  static Visibility public_all() { return {Kind::public_, {}}; }
  static Visibility shared(std::set<Id> users) { return {Kind::shared, std::move(users)}; }

  /// "private", "public", or "shared:<id>,<id>".
  std::string str() const;
  static std::optional<Visibility> parse(std::string_view s);

  bool operator==(const Visibility&) const = default;
};

struct DataItemRecord {
  Id item_id;
  Id dataset_id;
  std::string source_subfolder;
  std::vector<FileRef> image_files;
  std::vector<FileRef> data_files;
  AttrMap attributes;

  bool operator==(const DataItemRecord&) const = default;
};

struct DatasetRecord {
  Id dataset_id;
  std::string name;
  Id owner;
  Visibility visibility;
  std::vector<DataItemRecord> items;
  Timestamp indexed_at;
  std::string source_metadata_ref;

  bool operator==(const DatasetRecord&) const = default;
};

enum class AnalysisStatus { submitted, running, completed, failed };

const char* to_string(AnalysisStatus s) noexcept;
std::optional<AnalysisStatus> parse_status(std::string_view s) noexcept;
/// submitted -> running -> {completed, failed}.
bool legal_transition(AnalysisStatus from, AnalysisStatus to) noexcept;

/// Items of one dataset; an empty selection means every item.
struct DatasetSelection {
  Id dataset_id;
  std::vector<Id> item_ids;

  bool operator==(const DatasetSelection&) const = default;
};

using InputPayload = std::variant<FileRef, DatasetSelection, AttrValue>;

struct InputValue {
  std::string step_id;
  std::string port;
  InputPayload value;

  bool operator==(const InputValue&) const = default;
};

using OutputPayload = std::variant<FileRef, AttrValue>;

struct OutputValue {
  std::string step_id;
  std::string port;
  int attempt = 1;
  OutputPayload value;
  Timestamp produced_at;

  bool operator==(const OutputValue&) const = default;
};

struct AnalysisRecord {
  Id analysis_id;
  Id user;
  Id pipeline_id;
  int version = 0;
  Timestamp submitted_at;
  AnalysisStatus status = AnalysisStatus::submitted;
  std::vector<InputValue> input_values;
  std::vector<OutputValue> outputs;
  std::vector<FileRef> log_refs;

  bool operator==(const AnalysisRecord&) const = default;
};

enum class TargetKind { analysis, pipeline_version, dataset };

const char* to_string(TargetKind k) noexcept;
std::optional<TargetKind> parse_target_kind(std::string_view s) noexcept;

struct AnnotationRecord {
  Id annotation_id;
  Id author;
  TargetKind target_kind = TargetKind::analysis;
  /// analysis or dataset id; "<pipeline_id>@<version>" for pipeline versions.
  std::string target;
  std::string text;
  Timestamp created_at;

  bool operator==(const AnnotationRecord&) const = default;
};

// ---------------------------------------------------------------------------

bool can_access(const UserRecord& user, const DatasetRecord& dataset) noexcept;

int next_version(const PipelineRecord& pipeline) noexcept;

struct StepViolation {
  std::string step_id;
  std::string rule;
  std::string detail;

  std::string str() const;
  bool operator==(const StepViolation&) const = default;
};

/// Empty result means the step list is a consistent DAG.
std::vector<StepViolation> validate_steps(const std::vector<PipelineStep>& steps);

/// Input ports with no upstream producer, as (step_id, port) pairs.
std::vector<std::pair<std::string, std::string>> unbound_ports(
    const std::vector<PipelineStep>& steps);

// LFNs take the form lfn://<namespace>/<relative-path>.
std::string make_lfn(std::string_view ns, std::string_view relative_path);
bool is_lfn(std::string_view s) noexcept;

}  // namespace abase
