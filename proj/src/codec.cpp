#include "abase/codec.hpp"

#include "abase/error.hpp"

namespace abase {

namespace {

template <class T>
T req(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw Error(ErrorKind::validation, std::string("missing field: ") + key);
  return it->get<T>();
}

template <class E, class P>
E parse_enum(const json& j, const char* key, P parse) {
  auto s = req<std::string>(j, key);
  auto v = parse(s);
  if (!v) throw Error(ErrorKind::validation, std::string("bad value for ") + key + ": " + s);
  return *v;
}

}  // namespace

void to_json(json& j, const Id& v) { j = v.str(); }
void from_json(const json& j, Id& v) { v = Id(j.get<std::string>()); }

void to_json(json& j, const Timestamp& v) { j = v.iso(); }
void from_json(const json& j, Timestamp& v) {
  auto t = Timestamp::parse(j.get<std::string>());
  if (!t) throw Error(ErrorKind::validation, "bad timestamp: " + j.get<std::string>());
  v = *t;
}

json encode_attr(const AttrValue& v) { return json{{"type", type_name(v)}, {"value", render(v)}}; }

AttrValue decode_attr(const json& j) {
  auto t = req<std::string>(j, "type");
  auto text = req<std::string>(j, "value");
  auto v = parse_typed(t, text);
  if (!v) throw Error(ErrorKind::validation, "bad " + t + " value: " + text);
  return *v;
}

json encode_attrs(const AttrMap& m) {
  json j = json::object();
  for (const auto& [k, v] : m) j[k] = encode_attr(v);
  return j;
}

AttrMap decode_attrs(const json& j) {
  AttrMap m;
  for (auto it = j.begin(); it != j.end(); ++it) m.emplace(it.key(), decode_attr(it.value()));
  return m;
}

void to_json(json& j, const UserRecord& v) {
  j = {{"user_id", v.user_id},
       {"name", v.name},
       {"organisation", v.organisation},
       {"role", to_string(v.role)},
       {"active", v.active}};
}
void from_json(const json& j, UserRecord& v) {
  v.user_id = req<Id>(j, "user_id");
  v.name = req<std::string>(j, "name");
  v.organisation = req<std::string>(j, "organisation");
  v.role = parse_enum<Role>(j, "role", parse_role);
  v.active = req<bool>(j, "active");
}

void to_json(json& j, const PipelineVersion& v) {
  j = {{"version", v.version},
       {"lfn", v.lfn},
       {"created_at", v.created_at},
       {"description", v.description}};
}
void from_json(const json& j, PipelineVersion& v) {
  v.version = req<int>(j, "version");
  v.lfn = req<std::string>(j, "lfn");
  v.created_at = req<Timestamp>(j, "created_at");
  v.description = req<std::string>(j, "description");
}

void to_json(json& j, const PipelineRecord& v) {
  j = {{"pipeline_id", v.pipeline_id},
       {"name", v.name},
       {"author", v.author},
       {"versions", v.versions}};
}
void from_json(const json& j, PipelineRecord& v) {
  v.pipeline_id = req<Id>(j, "pipeline_id");
  v.name = req<std::string>(j, "name");
  v.author = req<Id>(j, "author");
  v.versions = req<std::vector<PipelineVersion>>(j, "versions");
}

void to_json(json& j, const AlgorithmRecord& v) {
  j = {{"algorithm_id", v.algorithm_id},
       {"name", v.name},
       {"toolkit", v.toolkit},
       {"executable_lfn", v.executable_lfn}};
}
void from_json(const json& j, AlgorithmRecord& v) {
  v.algorithm_id = req<Id>(j, "algorithm_id");
  v.name = req<std::string>(j, "name");
  v.toolkit = req<std::string>(j, "toolkit");
  v.executable_lfn = req<std::string>(j, "executable_lfn");
}

void to_json(json& j, const PipelineStep& v) {
  json ports = json::array();
  for (const auto& p : v.input_ports) {
    json pj = {{"name", p.name}, {"kind", to_string(p.kind)}};
    if (p.source) pj["source"] = {{"step_id", p.source->step_id}, {"port", p.source->port}};
    ports.push_back(std::move(pj));
  }
  j = {{"pipeline_id", v.pipeline_id}, {"version", v.version},
       {"step_id", v.step_id},         {"algorithm_id", v.algorithm_id},
       {"step_order", v.step_order},   {"depends_on", v.depends_on},
       {"input_ports", ports},         {"output_ports", v.output_ports}};
}
void from_json(const json& j, PipelineStep& v) {
  v.pipeline_id = req<Id>(j, "pipeline_id");
  v.version = req<int>(j, "version");
  v.step_id = req<std::string>(j, "step_id");
  v.algorithm_id = req<Id>(j, "algorithm_id");
  v.step_order = req<int>(j, "step_order");
  v.depends_on = req<std::set<std::string>>(j, "depends_on");
  v.input_ports.clear();
  for (const auto& pj : req<json>(j, "input_ports")) {
    InputPort p;
    p.name = req<std::string>(pj, "name");
    p.kind = parse_enum<PortKind>(pj, "kind", parse_port_kind);
    if (auto s = pj.find("source"); s != pj.end()) {
      p.source = PortRef{req<std::string>(*s, "step_id"), req<std::string>(*s, "port")};
    }
    v.input_ports.push_back(std::move(p));
  }
  v.output_ports = req<std::vector<std::string>>(j, "output_ports");
}

void to_json(json& j, const FileRef& v) {
  j = {{"lfn", v.lfn},
       {"filename", v.filename},
       {"location", v.location},
       {"kind", to_string(v.kind)},
       {"size_bytes", v.size_bytes}};
  if (v.checksum) j["checksum"] = *v.checksum;
}
void from_json(const json& j, FileRef& v) {
  v.lfn = req<std::string>(j, "lfn");
  v.filename = req<std::string>(j, "filename");
  v.location = req<std::string>(j, "location");
  v.kind = req<std::string>(j, "kind") == "image" ? FileKind::image : FileKind::data;
  v.size_bytes = req<std::uint64_t>(j, "size_bytes");
  if (auto c = j.find("checksum"); c != j.end()) {
    v.checksum = c->get<std::string>();
  } else {
    v.checksum.reset();
  }
}

void to_json(json& j, const DataItemRecord& v) {
  j = {{"item_id", v.item_id},
       {"dataset_id", v.dataset_id},
       {"source_subfolder", v.source_subfolder},
       {"image_files", v.image_files},
       {"data_files", v.data_files},
       {"attributes", encode_attrs(v.attributes)}};
}
void from_json(const json& j, DataItemRecord& v) {
  v.item_id = req<Id>(j, "item_id");
  v.dataset_id = req<Id>(j, "dataset_id");
  v.source_subfolder = req<std::string>(j, "source_subfolder");
  v.image_files = req<std::vector<FileRef>>(j, "image_files");
  v.data_files = req<std::vector<FileRef>>(j, "data_files");
  v.attributes = decode_attrs(req<json>(j, "attributes"));
}

void to_json(json& j, const DatasetRecord& v) {
  j = {{"dataset_id", v.dataset_id},
       {"name", v.name},
       {"owner", v.owner},
       {"visibility", v.visibility.str()},
       {"indexed_at", v.indexed_at},
       {"source_metadata_ref", v.source_metadata_ref},
       {"items", v.items}};
}
void from_json(const json& j, DatasetRecord& v) {
  v.dataset_id = req<Id>(j, "dataset_id");
  v.name = req<std::string>(j, "name");
  v.owner = req<Id>(j, "owner");
  auto vis = Visibility::parse(req<std::string>(j, "visibility"));
  if (!vis) throw Error(ErrorKind::validation, "bad visibility");
  v.visibility = *vis;
  v.indexed_at = req<Timestamp>(j, "indexed_at");
  v.source_metadata_ref = req<std::string>(j, "source_metadata_ref");
  if (auto it = j.find("items"); it != j.end()) {
    v.items = it->get<std::vector<DataItemRecord>>();
  } else {
    v.items.clear();
  }
}

json encode_input_payload(const InputPayload& v) {
  if (auto* f = std::get_if<FileRef>(&v)) return {{"file", *f}};
  if (auto* d = std::get_if<DatasetSelection>(&v)) {
    return {{"dataset", {{"dataset_id", d->dataset_id}, {"item_ids", d->item_ids}}}};
  }
  return {{"scalar", encode_attr(std::get<AttrValue>(v))}};
}

InputPayload decode_input_payload(const json& j) {
  if (auto f = j.find("file"); f != j.end()) return f->get<FileRef>();
  if (auto d = j.find("dataset"); d != j.end()) {
    return DatasetSelection{req<Id>(*d, "dataset_id"), req<std::vector<Id>>(*d, "item_ids")};
  }
  return decode_attr(req<json>(j, "scalar"));
}

void to_json(json& j, const InputValue& v) {
  j = {{"step_id", v.step_id}, {"port", v.port}, {"value", encode_input_payload(v.value)}};
}
void from_json(const json& j, InputValue& v) {
  v.step_id = req<std::string>(j, "step_id");
  v.port = req<std::string>(j, "port");
  v.value = decode_input_payload(req<json>(j, "value"));
}

void to_json(json& j, const OutputValue& v) {
  j = {{"step_id", v.step_id},
       {"port", v.port},
       {"attempt", v.attempt},
       {"produced_at", v.produced_at}};
  if (auto* f = std::get_if<FileRef>(&v.value)) {
    j["value"] = {{"file", *f}};
  } else {
    j["value"] = {{"scalar", encode_attr(std::get<AttrValue>(v.value))}};
  }
}
void from_json(const json& j, OutputValue& v) {
  v.step_id = req<std::string>(j, "step_id");
  v.port = req<std::string>(j, "port");
  v.attempt = req<int>(j, "attempt");
  v.produced_at = req<Timestamp>(j, "produced_at");
  const auto& val = req<json>(j, "value");
  if (auto f = val.find("file"); f != val.end()) {
    v.value = f->get<FileRef>();
  } else {
    v.value = decode_attr(req<json>(val, "scalar"));
  }
}

void to_json(json& j, const AnalysisRecord& v) {
  j = {{"analysis_id", v.analysis_id},
       {"user", v.user},
       {"pipeline_id", v.pipeline_id},
       {"version", v.version},
       {"submitted_at", v.submitted_at},
       {"status", to_string(v.status)},
       {"input_values", v.input_values},
       {"outputs", v.outputs},
       {"log_refs", v.log_refs}};
}
void from_json(const json& j, AnalysisRecord& v) {
  v.analysis_id = req<Id>(j, "analysis_id");
  v.user = req<Id>(j, "user");
  v.pipeline_id = req<Id>(j, "pipeline_id");
  v.version = req<int>(j, "version");
  v.submitted_at = req<Timestamp>(j, "submitted_at");
  v.status = parse_enum<AnalysisStatus>(j, "status", parse_status);
  v.input_values = j.value("input_values", std::vector<InputValue>{});
  v.outputs = j.value("outputs", std::vector<OutputValue>{});
  v.log_refs = j.value("log_refs", std::vector<FileRef>{});
}

void to_json(json& j, const AnnotationRecord& v) {
  j = {{"annotation_id", v.annotation_id},
       {"author", v.author},
       {"target_kind", to_string(v.target_kind)},
       {"target", v.target},
       {"text", v.text},
       {"created_at", v.created_at}};
}
void from_json(const json& j, AnnotationRecord& v) {
  v.annotation_id = req<Id>(j, "annotation_id");
  v.author = req<Id>(j, "author");
  v.target_kind = parse_enum<TargetKind>(j, "target_kind", parse_target_kind);
  v.target = req<std::string>(j, "target");
  v.text = req<std::string>(j, "text");
  v.created_at = req<Timestamp>(j, "created_at");
}

void to_json(json& j, const ExecutionEvent& v) {
  j = {{"seq", v.seq},
       {"step_id", v.step_id},
       {"attempt", v.attempt},
       {"kind", to_string(v.kind)},
       {"resource_id", v.resource_id},
       {"timestamp", v.timestamp},
       {"payload", v.payload}};
}
void from_json(const json& j, ExecutionEvent& v) {
  v.seq = req<std::uint64_t>(j, "seq");
  v.step_id = req<std::string>(j, "step_id");
  v.attempt = req<int>(j, "attempt");
  v.kind = parse_enum<EventKind>(j, "kind", parse_event_kind);
  v.resource_id = req<std::string>(j, "resource_id");
  v.timestamp = req<Timestamp>(j, "timestamp");
  v.payload = req<std::map<std::string, std::string>>(j, "payload");
}

void to_json(json& j, const PipelineSnapshot& v) {
  j = {{"pipeline_id", v.pipeline_id}, {"name", v.name},
       {"author", v.author},           {"version", v.version},
       {"steps", v.steps},             {"algorithms", v.algorithms}};
}
void from_json(const json& j, PipelineSnapshot& v) {
  v.pipeline_id = req<Id>(j, "pipeline_id");
  v.name = req<std::string>(j, "name");
  v.author = req<Id>(j, "author");
  v.version = req<PipelineVersion>(j, "version");
  v.steps = req<std::vector<PipelineStep>>(j, "steps");
  v.algorithms = req<std::vector<AlgorithmRecord>>(j, "algorithms");
}

void to_json(json& j, const StepViolation& v) {
  j = {{"step_id", v.step_id}, {"rule", v.rule}, {"detail", v.detail}};
}

void to_json(json& j, const ChangeSet& v) {
  j = {{"added", v.added}, {"removed", v.removed}, {"modified", v.modified}};
}

}  // namespace abase
