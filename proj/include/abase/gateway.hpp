#pragma once

// One facade over all services. Every operation takes and returns JSON so
// the HTTP API and the CLI produce the same documents for the same request.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "abase/codec.hpp"
#include "abase/error.hpp"
#include "abase/harness.hpp"
#include "abase/persistency.hpp"
#include "abase/provenance.hpp"
#include "abase/query.hpp"
#include "abase/store.hpp"

namespace abase {

struct Config {
  std::filesystem::path store_root = "abase-store";
  std::string storage_url_prefix;  // empty: file://<dataset root>/
  std::string listen = "127.0.0.1:8080";
  std::uint64_t default_seed = 42;
  std::string log_level = "info";
  std::size_t resources = 2;
  double failure_rate = 0.1;
  /// Derived outputs go under work_root/<analysis_id>; empty means
  /// <store_root>/work.
  std::filesystem::path work_root;

  std::filesystem::path effective_work_root() const;
};

/// Unknown keys are rejected; missing keys keep their defaults.
Config config_from_json(const json& j);
json to_json(const Config& c);
Config load_config(const std::filesystem::path& file);

/// Parses an analysis input value:
///   dataset:<id>[:<item>,<item>...]   lfn://...   file:///path   text:<string>
/// anything else is an auto-typed scalar.
InputPayload parse_input_value(std::string_view text);
/// "<step>.<port>=<value>".
InputValue parse_input_binding(std::string_view text);

/// {"error": {"kind", "message", "details"}}
json error_json(const Error& e);

using Params = std::map<std::string, std::string>;

class AnalysisBase {
 public:
  explicit AnalysisBase(Config config, StoreOptions store_options = {},
                        std::optional<std::uint64_t> id_seed = std::nullopt,
                        Clock clock = system_clock());

  const Config& config() const noexcept { return config_; }
  Store& store() noexcept { return *store_; }
  Persistency& persistency() noexcept { return *persistency_; }
  Provenance& provenance() noexcept { return *provenance_; }
  PipelineService& pipelines() noexcept { return *pipelines_; }
  QueryService& queries() noexcept { return *queries_; }

  // Each operation below backs one HTTP endpoint and one CLI subcommand.
  // `caller` is the acting user id as given (empty when absent).

  json register_user(const std::string& caller, const json& body);
  json set_user_active(const std::string& caller, const std::string& user_id, const json& body);
  json import_dataset(const std::string& caller, const std::string& metadata_xml,
                      const Params& params);
  json get_dataset(const std::string& caller, const std::string& dataset_id);
  json register_algorithm(const std::string& caller, const json& body);
  json register_pipeline(const std::string& caller, const json& body);
  json update_pipeline(const std::string& caller, const std::string& pipeline_id,
                       const json& body);
  json run_analysis(const std::string& caller, const json& body);
  json rerun_analysis(const std::string& caller, const std::string& analysis_id,
                      const json& body);
  json get_analysis(const std::string& analysis_id);
  json provenance_of(const std::string& analysis_id);
  std::string provenance_text(const std::string& analysis_id);
  json annotate(const std::string& caller, const json& body);
  json query_items(const std::string& caller, const Params& params);
  json query_pipelines(const Params& params);
  json query_template(const std::string& name, const Params& params);
  json audit();
  json health();

  void close();

 private:
  Id require_caller(const std::string& caller) const;
  json run(const Id& caller, const Id& pipeline_id, int version, std::vector<InputValue> inputs,
           const json& body);

  Config config_;
  std::unique_ptr<Store> store_;
  std::unique_ptr<IdGenerator> ids_;
  std::unique_ptr<Persistency> persistency_;
  std::unique_ptr<Provenance> provenance_;
  std::unique_ptr<PipelineService> pipelines_;
  std::unique_ptr<QueryService> queries_;
};

/// "<id>@<version>".
std::pair<Id, int> parse_pipeline_ref(std::string_view text);

}  // namespace abase
