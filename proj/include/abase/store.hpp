#pragma once

// Durable catalog store. One append-only log per table under
// <root>/tables/<table>.log; each line is
//
//   <payload length>\t<crc32 hex>\t<payload>\n
//
// where the payload is a key-ordered JSON object {"txn":N,"i":k,"rec":{...}}.
// A mutation batch becomes visible only once tables/commits.log holds its
// commit line; on open, uncommitted or corrupt tails are truncated and the
// surviving records are replayed in (txn, i) order. Later records with the
// same id supersede earlier ones.

#include <array>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include "abase/codec.hpp"
#include "abase/model.hpp"
#include "abase/trace.hpp"

namespace abase {

enum class Table {
  users,
  pipelines,
  algorithms,
  steps,
  datasets,
  items,
  analyses,
  input_values,
  outputs,
  annotations,
  provenance_events,
};

inline constexpr std::array kAllTables = {
    Table::users,    Table::pipelines, Table::algorithms,   Table::steps,
    Table::datasets, Table::items,     Table::analyses,     Table::input_values,
    Table::outputs,  Table::annotations, Table::provenance_events};

const char* to_string(Table t) noexcept;

/// In-memory state rebuilt from the logs. Readers get it by const reference
/// under the store's shared lock.
struct Catalog {
  std::map<Id, UserRecord> users;
  std::map<Id, PipelineRecord> pipelines;
  std::map<Id, AlgorithmRecord> algorithms;
  std::map<std::pair<Id, int>, std::vector<PipelineStep>> steps;  // sorted by step_order
  std::map<Id, DatasetRecord> datasets;                           // items inline
  std::map<Id, std::pair<Id, std::size_t>> item_index;            // item -> (dataset, pos)
  std::map<Id, AnalysisRecord> analyses;
  std::map<std::string, std::pair<Id, std::size_t>> output_by_lfn;
  std::map<Id, AnnotationRecord> annotations;
  std::map<std::string, std::vector<Id>> annotations_by_target;  // creation order
  std::map<Id, ProvenanceTrace> traces;

  /// Latest raw record per (table, id); the canonical state dump.
  std::map<std::string, std::map<std::string, json>> raw;

  const UserRecord* user(const Id& id) const;
  const DatasetRecord* dataset(const Id& id) const;
  const DataItemRecord* item(const Id& id) const;
  const std::vector<PipelineStep>* steps_of(const Id& pipeline, int version) const;
  const DatasetRecord* dataset_by_owner_name(const Id& owner, const std::string& name) const;

  void apply(Table table, const json& record);
  json dump() const;
};

/// A batch of records committed atomically.
class Txn {
 public:
  void put(Table table, json record) { records_.emplace_back(table, std::move(record)); }
  bool empty() const noexcept { return records_.empty(); }
  const std::vector<std::pair<Table, json>>& records() const noexcept { return records_; }

 private:
  std::vector<std::pair<Table, json>> records_;
};

struct StoreOptions {
  bool sync = true;  // fdatasync every touched log on commit
  /// Fault injection: terminate the process (std::_Exit) once this many
  /// bytes of log data have been written in this session, leaving the
  /// last write torn.
  std::optional<std::uint64_t> crash_after_bytes;
  /// Called under the writer lock after each commit is applied.
  std::function<void(const Catalog&, std::uint64_t txn)> after_commit;
};

class Store {
 public:
  static constexpr std::string_view kManifestHeader = "abase-store v1";

  /// Opens (creating if needed) and locks the store; throws
  /// Error(state) if another process or handle holds the lock.
  explicit Store(std::filesystem::path root, StoreOptions options = {});
  ~Store();

  Store(const Store&) = delete;
  Store& operator=(const Store&) = delete;

  const std::filesystem::path& root() const noexcept { return root_; }
  const std::vector<std::string>& open_warnings() const noexcept { return warnings_; }

  /// Runs `fn(catalog, txn)` under the writer lock, then persists and applies
  /// whatever it put in `txn`. Throwing from `fn` discards the batch.
  template <class F>
  auto write(F&& fn) {
    std::unique_lock lock(mu_);
    Txn txn;
    if constexpr (std::is_void_v<decltype(fn(std::as_const(catalog_), txn))>) {
      fn(std::as_const(catalog_), txn);
      commit(txn);
    } else {
      auto result = fn(std::as_const(catalog_), txn);
      commit(txn);
      return result;
    }
  }

  template <class F>
  auto read(F&& fn) const {
    std::shared_lock lock(mu_);
    return fn(catalog_);
  }

  /// Total bytes across table logs, commit log and manifest.
  std::uint64_t disk_bytes() const;

  /// Flushes and releases file handles; further writes are an error.
  void close();

 private:
  void commit(const Txn& txn);
  void append(int fd, std::string_view bytes);
  void load();

  std::filesystem::path root_;
  StoreOptions options_;
  mutable std::shared_mutex mu_;
  Catalog catalog_;
  std::vector<std::string> warnings_;
  std::map<Table, int> fds_;
  int commit_fd_ = -1;
  int lock_fd_ = -1;
  std::uint64_t next_txn_ = 1;
  std::uint64_t bytes_written_ = 0;
};

/// Encodes one log line (including the trailing newline).
std::string encode_log_line(std::string_view payload);
/// Decodes one line without its newline; nullopt when corrupt.
std::optional<std::string> decode_log_line(std::string_view line);

}  // namespace abase
