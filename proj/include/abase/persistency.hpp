#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "abase/crawler.hpp"
#include "abase/ids.hpp"
#include "abase/model.hpp"
#include "abase/store.hpp"

namespace abase {

struct PersistencyConfig {
  /// Prefix substituted for a dataset file's relative path to form its
  /// location URL. Empty means "file://<crawl root>/".
  std::string storage_url_prefix;
};

/// Indexes datasets, pipelines and algorithms into the store and records
/// analyses, their derived outputs and annotations. Every write checks the
/// caller is an active user.
class Persistency {
 public:
  Persistency(Store& store, IdGenerator& ids, Clock clock, PersistencyConfig config = {});

  UserRecord register_user(const std::string& name, const std::string& organisation, Role role);
  UserRecord set_user_active(const Id& user_id, bool active);

  DatasetRecord index_dataset(const Id& caller, const DatasetDescriptor& metadata,
                              const Visibility& visibility,
                              const std::string& source_metadata_ref = {},
                              const std::optional<std::string>& url_prefix = std::nullopt);

  /// `steps` need only step-level fields; pipeline id and version are filled in.
  std::pair<PipelineRecord, PipelineVersion> register_pipeline(const Id& caller,
                                                               const std::string& name,
                                                               const std::string& lfn,
                                                               const std::string& description,
                                                               std::vector<PipelineStep> steps);
  PipelineVersion update_pipeline(const Id& caller, const Id& pipeline_id, const std::string& lfn,
                                  const std::string& description, std::vector<PipelineStep> steps);

  AlgorithmRecord register_algorithm(const Id& caller, const std::string& name,
                                     const std::string& toolkit, const std::string& executable_lfn);

  /// Assigns id, submission time and status=submitted; checks access to every
  /// referenced dataset and coverage of every unbound input port.
  AnalysisRecord store_analysis(AnalysisRecord record);
  AnalysisRecord update_analysis_status(const Id& analysis_id, AnalysisStatus status);

  /// Derived file outputs without an lfn get lfn://derived/<analysis>/<step>/<port>.
  void store_derived_output(const Id& analysis_id, std::vector<OutputValue> outputs,
                            std::vector<FileRef> log_refs);

  AnnotationRecord store_annotation(AnnotationRecord annotation);

  // Reads. Unknown ids throw Error(not_found).
  UserRecord user(const Id& id) const;
  std::vector<UserRecord> users() const;
  DatasetRecord dataset(const Id& id) const;
  std::vector<DatasetRecord> datasets() const;
  PipelineRecord pipeline(const Id& id) const;
  std::vector<PipelineStep> steps(const Id& pipeline_id, int version) const;
  AlgorithmRecord algorithm(const Id& id) const;
  std::vector<AlgorithmRecord> algorithms() const;
  AnalysisRecord analysis(const Id& id) const;
  std::vector<AnnotationRecord> annotations_of(TargetKind kind, const std::string& target) const;

  /// Referential integrity and structural invariants over the whole store.
  /// Empty means healthy.
  std::vector<std::string> audit() const;

  Store& store() noexcept { return store_; }
  const Store& store() const noexcept { return store_; }
  IdGenerator& ids() noexcept { return ids_; }
  Timestamp now() const { return clock_(); }
  const PersistencyConfig& config() const noexcept { return config_; }

 private:
  Store& store_;
  IdGenerator& ids_;
  Clock clock_;
  PersistencyConfig config_;
};

/// Throws Error(not_found / permission) unless `id` names an active user.
const UserRecord& require_active(const Catalog& c, const Id& id);

/// Dataset a dataset-file lfn (lfn://<dataset_id>/...) belongs to, if any.
std::optional<Id> dataset_of_lfn(std::string_view lfn);

/// Checks every input value of `inputs` against the step declarations and
/// the caller's dataset permissions. Throws on the first problem.
void check_inputs(const Catalog& c, const UserRecord& caller, const std::vector<PipelineStep>& steps,
                  const std::vector<InputValue>& inputs);

/// Queues output rows for `analysis_id` into `txn` and returns the analysis
/// head with `log_refs` appended; the caller decides whether to write it.
AnalysisRecord stage_derived_output(const Catalog& c, Txn& txn, const Id& analysis_id,
                                    std::vector<OutputValue> outputs, std::vector<FileRef> log_refs);

/// Analysis record as stored in the analyses table (inputs and outputs live
/// in their own tables).
json analysis_head(const AnalysisRecord& a);

std::vector<std::string> audit_catalog(const Catalog& c);

}  // namespace abase
