#include "abase/gateway.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "abase/digest.hpp"
#include "abase/error.hpp"
#include "abase/metadata_xml.hpp"

namespace abase {

namespace fs = std::filesystem;

fs::path Config::effective_work_root() const {
  return work_root.empty() ? store_root / "work" : work_root;
}

Config config_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorKind::validation, "config must be a JSON object");
  Config c;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "store_root") {
        c.store_root = value.get<std::string>();
      } else if (key == "storage_url_prefix") {
        c.storage_url_prefix = value.get<std::string>();
      } else if (key == "listen") {
        c.listen = value.get<std::string>();
      } else if (key == "default_seed") {
        c.default_seed = value.get<std::uint64_t>();
      } else if (key == "log_level") {
        c.log_level = value.get<std::string>();
      } else if (key == "resources") {
        c.resources = value.get<std::size_t>();
      } else if (key == "failure_rate") {
        c.failure_rate = value.get<double>();
      } else if (key == "work_root") {
        c.work_root = value.get<std::string>();
      } else {
        throw Error(ErrorKind::validation, "unknown config key '" + key + "'");
      }
    } catch (const json::exception& e) {
      throw Error(ErrorKind::validation, "config key '" + key + "': " + e.what());
    }
  }
  if (c.resources == 0) throw Error(ErrorKind::validation, "config: resources must be >= 1");
  if (c.failure_rate < 0 || c.failure_rate >= 1) {
    throw Error(ErrorKind::validation, "config: failure_rate must be in [0, 1)");
  }
  static const std::set<std::string> levels = {"trace", "debug", "info", "warn", "error", "off"};
  if (!levels.contains(c.log_level)) {
    throw Error(ErrorKind::validation, "config: unknown log_level '" + c.log_level + "'");
  }
  return c;
}

json to_json(const Config& c) {
  return {{"store_root", c.store_root.string()},
          {"storage_url_prefix", c.storage_url_prefix},
          {"listen", c.listen},
          {"default_seed", c.default_seed},
          {"log_level", c.log_level},
          {"resources", c.resources},
          {"failure_rate", c.failure_rate},
          {"work_root", c.effective_work_root().string()}};
}

Config load_config(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorKind::io, "cannot read config " + file.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::validation, "config " + file.string() + " is not JSON: " + e.what());
  }
  return config_from_json(j);
}

// ---------------------------------------------------------------------------
// Input values

namespace {

Id parse_id(std::string_view s, const char* what) {
  if (!Id::well_formed(s)) {
    throw Error(ErrorKind::validation, std::string("malformed ") + what + " id '" +
                                           std::string(s) + "'");
  }
  return Id(std::string(s));
}

std::string basename_of(std::string_view path) {
  auto slash = path.find_last_of('/');
  return std::string(slash == std::string_view::npos ? path : path.substr(slash + 1));
}

}  // namespace

InputPayload parse_input_value(std::string_view text) {
  if (text.rfind("dataset:", 0) == 0) {
    auto rest = text.substr(8);
    auto colon = rest.find(':');
    DatasetSelection sel;
    sel.dataset_id = parse_id(rest.substr(0, colon), "dataset");
    if (colon != std::string_view::npos) {
      auto list = rest.substr(colon + 1);
      std::size_t pos = 0;
      while (pos <= list.size()) {
        auto comma = list.find(',', pos);
        auto tok = list.substr(pos, comma == std::string_view::npos ? std::string_view::npos
                                                                     : comma - pos);
        sel.item_ids.push_back(parse_id(tok, "item"));
        if (comma == std::string_view::npos) break;
        pos = comma + 1;
      }
    }
    return sel;
  }
  if (text.rfind("lfn://", 0) == 0) {
    if (!is_lfn(text)) throw Error(ErrorKind::validation, "malformed lfn '" + std::string(text) + "'");
    FileRef f;
    f.lfn = std::string(text);
    f.filename = basename_of(text);
    return f;
  }
  if (text.rfind("file://", 0) == 0) {
    FileRef f;
    f.location = std::string(text);
    f.filename = basename_of(text);
    fs::path p(std::string(text.substr(7)));
    std::error_code ec;
    if (fs::is_regular_file(p, ec)) {
      f.size_bytes = fs::file_size(p, ec);
      f.checksum = sha256_file(p);
    }
    return f;
  }
  if (text.rfind("text:", 0) == 0) return AttrValue(std::string(text.substr(5)));
  return auto_typed(text);
}

InputValue parse_input_binding(std::string_view text) {
  auto eq = text.find('=');
  auto dot = text.substr(0, eq).find('.');
  if (eq == std::string_view::npos || dot == std::string_view::npos || dot == 0 ||
      dot + 1 == eq) {
    throw Error(ErrorKind::validation,
                "input '" + std::string(text) + "' must be <step>.<port>=<value>");
  }
  return {std::string(text.substr(0, dot)), std::string(text.substr(dot + 1, eq - dot - 1)),
          parse_input_value(text.substr(eq + 1))};
}

std::pair<Id, int> parse_pipeline_ref(std::string_view text) {
  auto at = text.find('@');
  if (at == std::string_view::npos) {
    throw Error(ErrorKind::validation, "pipeline reference must be <id>@<version>");
  }
  auto v = parse_typed("int", text.substr(at + 1));
  if (!v || std::get<std::int64_t>(*v) < 1) {
    throw Error(ErrorKind::validation, "pipeline version must be a positive integer");
  }
  return {parse_id(text.substr(0, at), "pipeline"), static_cast<int>(std::get<std::int64_t>(*v))};
}

json error_json(const Error& e) {
  return {{"error",
           {{"kind", to_string(e.kind())}, {"message", e.what()}, {"details", e.details()}}}};
}

// ---------------------------------------------------------------------------
// Body helpers

namespace {

template <class T>
T field(const json& body, const char* key) {
  if (!body.is_object()) throw Error(ErrorKind::validation, "request body must be a JSON object");
  auto it = body.find(key);
  if (it == body.end()) throw Error(ErrorKind::validation, std::string("missing field '") + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::validation, std::string("field '") + key + "' has the wrong type");
  }
}

template <class T>
T field_or(const json& body, const char* key, T fallback) {
  if (!body.is_object() || !body.contains(key) || body.at(key).is_null()) return fallback;
  return field<T>(body, key);
}

std::string param_or(const Params& p, const std::string& key, const std::string& fallback = {}) {
  auto it = p.find(key);
  return it == p.end() ? fallback : it->second;
}

std::vector<InputValue> parse_bindings(const json& body, const char* key) {
  std::vector<InputValue> out;
  if (!body.is_object() || !body.contains(key)) return out;
  const auto& list = body.at(key);
  if (!list.is_array()) throw Error(ErrorKind::validation, std::string("'") + key + "' must be a list");
  for (const auto& v : list) {
    if (!v.is_string()) {
      throw Error(ErrorKind::validation,
                  std::string("'") + key + "' entries are strings <step>.<port>=<value>");
    }
    out.push_back(parse_input_binding(v.get<std::string>()));
  }
  return out;
}

json dataset_summary(const DatasetRecord& d) {
  std::size_t images = 0, data = 0;
  for (const auto& it : d.items) {
    images += it.image_files.size();
    data += it.data_files.size();
  }
  return {{"dataset_id", d.dataset_id},
          {"name", d.name},
          {"owner", d.owner},
          {"visibility", d.visibility.str()},
          {"indexed_at", d.indexed_at},
          {"source_metadata_ref", d.source_metadata_ref},
          {"item_count", d.items.size()},
          {"image_file_count", images},
          {"data_file_count", data}};
}

}  // namespace

// ---------------------------------------------------------------------------

AnalysisBase::AnalysisBase(Config config, StoreOptions store_options,
                           std::optional<std::uint64_t> id_seed, Clock clock)
    : config_(std::move(config)) {
  std::error_code ec;
  fs::create_directories(config_.store_root, ec);
  if (ec) {
    throw Error(ErrorKind::io,
                "cannot create store root " + config_.store_root.string() + ": " + ec.message());
  }
  store_ = std::make_unique<Store>(config_.store_root, store_options);
  ids_ = id_seed ? std::make_unique<IdGenerator>(*id_seed) : std::make_unique<IdGenerator>();
  persistency_ = std::make_unique<Persistency>(*store_, *ids_, std::move(clock),
                                               PersistencyConfig{config_.storage_url_prefix});
  provenance_ = std::make_unique<Provenance>(*persistency_);
  pipelines_ = std::make_unique<PipelineService>(*persistency_, *provenance_,
                                                 config_.effective_work_root());
  queries_ = std::make_unique<QueryService>(*persistency_);
}

void AnalysisBase::close() { store_->close(); }

Id AnalysisBase::require_caller(const std::string& caller) const {
  if (caller.empty()) throw Error(ErrorKind::permission, "a caller id is required");
  auto id = parse_id(caller, "caller");
  store_->read([&](const Catalog& c) { require_active(c, id); });
  return id;
}

json AnalysisBase::register_user(const std::string& caller, const json& body) {
  auto name = field<std::string>(body, "name");
  auto org = field_or<std::string>(body, "organisation", "");
  auto role_text = field_or<std::string>(body, "role", "neuroscientist");
  auto role = parse_role(role_text);
  if (!role) throw Error(ErrorKind::validation, "unknown role '" + role_text + "'");
  bool bootstrap = store_->read([](const Catalog& c) { return c.users.empty(); });
  if (!bootstrap) {
    auto id = require_caller(caller);
    bool admin = store_->read([&](const Catalog& c) { return c.user(id)->role == Role::admin; });
    if (!admin) throw Error(ErrorKind::permission, "only an admin may register users");
  }
  return persistency_->register_user(name, org, *role);
}

json AnalysisBase::set_user_active(const std::string& caller, const std::string& user_id,
                                   const json& body) {
  auto id = require_caller(caller);
  bool admin = store_->read([&](const Catalog& c) { return c.user(id)->role == Role::admin; });
  if (!admin) throw Error(ErrorKind::permission, "only an admin may change user state");
  return persistency_->set_user_active(parse_id(user_id, "user"), field<bool>(body, "active"));
}

json AnalysisBase::import_dataset(const std::string& caller, const std::string& metadata_xml,
                                  const Params& params) {
  auto id = require_caller(caller);
  auto desc = parse_metadata_or_throw(metadata_xml);
  auto vis_text = param_or(params, "visibility", "private");
  auto vis = Visibility::parse(vis_text);
  if (!vis) throw Error(ErrorKind::validation, "bad visibility '" + vis_text + "'");
  std::optional<std::string> prefix;
  if (params.contains("url_prefix")) prefix = params.at("url_prefix");
  auto d = persistency_->index_dataset(id, desc, *vis, param_or(params, "source_ref"), prefix);
  auto out = dataset_summary(d);
  out["warnings"] = desc.warnings;
  return out;
}

json AnalysisBase::get_dataset(const std::string& caller, const std::string& dataset_id) {
  auto id = require_caller(caller);
  auto did = parse_id(dataset_id, "dataset");
  return store_->read([&](const Catalog& c) {
    const auto* d = c.dataset(did);
    if (!d) throw Error(ErrorKind::not_found, "unknown dataset " + dataset_id);
    if (!can_access(*c.user(id), *d)) {
      throw Error(ErrorKind::permission, "no access to dataset " + dataset_id);
    }
    return json(*d);
  });
}

json AnalysisBase::register_algorithm(const std::string& caller, const json& body) {
  auto id = require_caller(caller);
  return persistency_->register_algorithm(id, field<std::string>(body, "name"),
                                          field_or<std::string>(body, "toolkit", ""),
                                          field<std::string>(body, "executable_lfn"));
}

namespace {

std::vector<PipelineStep> steps_from_definition(const Catalog& c, const std::string& text,
                                                std::string* name) {
  std::map<std::string, Id> by_name;
  std::set<std::string> ambiguous;
  for (const auto& [id, a] : c.algorithms) {
    if (!by_name.emplace(a.name, id).second) ambiguous.insert(a.name);
    by_name.emplace(id.str(), id);
  }
  std::set<std::string> known;
  for (const auto& [k, v] : by_name) known.insert(k);
  auto parsed = parse_pipeline(text, known);
  if (auto* bad = std::get_if<std::vector<ParseViolation>>(&parsed)) {
    std::vector<std::string> details;
    for (const auto& v : *bad) details.push_back("line " + std::to_string(v.line) + ": " + v.message);
    auto message = "pipeline definition rejected: " + details.front();
    throw Error(ErrorKind::validation, std::move(message), std::move(details));
  }
  const auto& def = std::get<PipelineDefinition>(parsed);
  for (const auto& s : def.steps) {
    if (ambiguous.contains(s.algorithm)) {
      throw Error(ErrorKind::validation, "algorithm name '" + s.algorithm +
                                             "' is ambiguous; use the algorithm id");
    }
  }
  if (name) *name = def.name;
  return to_steps(def, by_name);
}

}  // namespace

json AnalysisBase::register_pipeline(const std::string& caller, const json& body) {
  auto id = require_caller(caller);
  std::string name;
  auto steps = store_->read([&](const Catalog& c) {
    return steps_from_definition(c, field<std::string>(body, "definition"), &name);
  });
  auto [p, v] = persistency_->register_pipeline(
      id, field_or<std::string>(body, "name", name), field<std::string>(body, "lfn"),
      field_or<std::string>(body, "description", ""), std::move(steps));
  return {{"pipeline", p}, {"version", v.version}};
}

json AnalysisBase::update_pipeline(const std::string& caller, const std::string& pipeline_id,
                                   const json& body) {
  auto id = require_caller(caller);
  auto pid = parse_id(pipeline_id, "pipeline");
  auto steps = store_->read([&](const Catalog& c) {
    return steps_from_definition(c, field<std::string>(body, "definition"), nullptr);
  });
  auto v = persistency_->update_pipeline(id, pid, field<std::string>(body, "lfn"),
                                         field_or<std::string>(body, "description", ""),
                                         std::move(steps));
  return {{"pipeline", persistency_->pipeline(pid)}, {"version", v.version}};
}

json AnalysisBase::run(const Id& caller, const Id& pipeline_id, int version,
                       std::vector<InputValue> inputs, const json& body) {
  RunOptions opts;
  opts.resources = field_or<std::size_t>(body, "resources", config_.resources);
  opts.seed = field_or<std::uint64_t>(body, "seed", config_.default_seed);
  opts.failure_rate = field_or<double>(body, "failure_rate", config_.failure_rate);
  if (opts.resources == 0) throw Error(ErrorKind::validation, "resources must be >= 1");
  if (opts.failure_rate < 0 || opts.failure_rate >= 1) {
    throw Error(ErrorKind::validation, "failure_rate must be in [0, 1)");
  }
  auto a = pipelines_->submit_analysis(caller, pipeline_id, version, std::move(inputs), opts);
  json out = {{"analysis", a}, {"status", to_string(a.status)}};
  if (a.status == AnalysisStatus::failed) {
    auto g = provenance_->reconstruct(a.analysis_id);
    out["errors"] = g.errors;
  }
  return out;
}

json AnalysisBase::run_analysis(const std::string& caller, const json& body) {
  auto id = require_caller(caller);
  auto [pid, version] = parse_pipeline_ref(field<std::string>(body, "pipeline"));
  return run(id, pid, version, parse_bindings(body, "inputs"), body);
}

json AnalysisBase::rerun_analysis(const std::string& caller, const std::string& analysis_id,
                                  const json& body) {
  auto id = require_caller(caller);
  auto spec = provenance_->derive_rerun(parse_id(analysis_id, "analysis"),
                                        parse_bindings(body, "overrides"));
  auto out = run(id, spec.pipeline_id, spec.version, spec.inputs, body);
  out["rerun_of"] = analysis_id;
  return out;
}

json AnalysisBase::get_analysis(const std::string& analysis_id) {
  return persistency_->analysis(parse_id(analysis_id, "analysis"));
}

json AnalysisBase::provenance_of(const std::string& analysis_id) {
  return to_json(provenance_->reconstruct(parse_id(analysis_id, "analysis")));
}

std::string AnalysisBase::provenance_text(const std::string& analysis_id) {
  return render_text(provenance_->reconstruct(parse_id(analysis_id, "analysis")));
}

json AnalysisBase::annotate(const std::string& caller, const json& body) {
  auto id = require_caller(caller);
  AnnotationRecord a;
  a.author = id;
  auto kind_text = field<std::string>(body, "target_kind");
  auto kind = parse_target_kind(kind_text);
  if (!kind) throw Error(ErrorKind::validation, "unknown target kind '" + kind_text + "'");
  a.target_kind = *kind;
  a.target = field<std::string>(body, "target");
  a.text = field<std::string>(body, "text");
  return persistency_->store_annotation(std::move(a));
}

json AnalysisBase::query_items(const std::string& caller, const Params& params) {
  if (caller.empty()) throw Error(ErrorKind::permission, "a caller id is required");
  auto id = parse_id(caller, "caller");
  auto filter = parse_filter(param_or(params, "filter"));
  std::optional<Id> scope;
  if (auto d = param_or(params, "dataset"); !d.empty()) scope = parse_id(d, "dataset");
  auto number = [&](const char* key, std::int64_t fallback) {
    auto text = param_or(params, key);
    if (text.empty()) return fallback;
    auto v = parse_typed("int", text);
    if (!v || std::get<std::int64_t>(*v) < 0) {
      throw Error(ErrorKind::validation, std::string(key) + " must be a non-negative integer");
    }
    return std::get<std::int64_t>(*v);
  };
  auto offset = static_cast<std::size_t>(number("offset", 0));
  auto limit = number("limit", -1);
  auto hits = queries_->query_data_items(id, scope, filter);
  json items = json::array();
  for (std::size_t i = offset; i < hits.size(); ++i) {
    if (limit >= 0 && items.size() >= static_cast<std::size_t>(limit)) break;
    items.push_back(to_json(hits[i]));
  }
  return {{"filter", format_filter(filter)}, {"count", hits.size()}, {"items", items}};
}

json AnalysisBase::query_pipelines(const Params& params) {
  PipelineQuery q;
  if (auto v = param_or(params, "name"); !v.empty()) q.name_contains = v;
  if (auto v = param_or(params, "algorithm"); !v.empty()) q.uses_algorithm = parse_id(v, "algorithm");
  if (auto v = param_or(params, "author"); !v.empty()) q.author = parse_id(v, "author");
  return {{"pipelines", queries_->query_pipelines(q)}};
}

json AnalysisBase::query_template(const std::string& name, const Params& params) {
  auto need = [&](const char* key) {
    auto v = param_or(params, key);
    if (v.empty()) {
      throw Error(ErrorKind::validation, "template '" + name + "' needs parameter '" + key + "'");
    }
    return v;
  };
  if (name == "who" || name == "who-authored-and-executed") {
    auto ref = need("pipeline");
    ref = ref.substr(0, ref.find('@'));
    return to_json(queries_->who_authored_and_executed(parse_id(ref, "pipeline")));
  }
  if (name == "when" || name == "at-what-time") {
    return to_json(queries_->when_executed(parse_id(need("analysis"), "analysis")));
  }
  if (name == "outputs" || name == "outputs-of") {
    auto aid = need("analysis");
    return {{"analysis_id", aid}, {"outputs", queries_->outputs_of(parse_id(aid, "analysis"))}};
  }
  if (name == "inputs" || name == "inputs-for-output") {
    return to_json(queries_->inputs_for_output(need("lfn")));
  }
  if (name == "correctness" || name == "execution-correctness") {
    auto [pid, version] = parse_pipeline_ref(need("pipeline"));
    json rows = json::array();
    for (const auto& r : queries_->execution_correctness(pid, version)) rows.push_back(to_json(r));
    return {{"pipeline_id", pid}, {"version", version}, {"analyses", rows}};
  }
  throw Error(ErrorKind::not_found, "unknown query template '" + name +
                                        "' (who, when, outputs, inputs, correctness)");
}

json AnalysisBase::audit() {
  auto problems = persistency_->audit();
  return {{"healthy", problems.empty()}, {"problems", problems}};
}

json AnalysisBase::health() {
  return store_->read([](const Catalog& c) {
    return json{{"status", "ok"},
                {"users", c.users.size()},
                {"datasets", c.datasets.size()},
                {"pipelines", c.pipelines.size()},
                {"analyses", c.analyses.size()}};
  });
}

}  // namespace abase
