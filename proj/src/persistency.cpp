#include "abase/persistency.hpp"

#include <algorithm>
#include <set>

#include "abase/error.hpp"

namespace abase {

Persistency::Persistency(Store& store, IdGenerator& ids, Clock clock, PersistencyConfig config)
    : store_(store), ids_(ids), clock_(std::move(clock)), config_(std::move(config)) {}

const UserRecord& require_active(const Catalog& c, const Id& id) {
  const auto* u = c.user(id);
  if (!u) throw Error(ErrorKind::not_found, "unknown user " + id.str());
  if (!u->active) throw Error(ErrorKind::permission, "user " + id.str() + " is not active");
  return *u;
}

std::optional<Id> dataset_of_lfn(std::string_view lfn) {
  if (!is_lfn(lfn)) return std::nullopt;
  auto rest = lfn.substr(6);
  auto ns = rest.substr(0, rest.find('/'));
  if (!Id::well_formed(ns)) return std::nullopt;
  return Id(std::string(ns));
}

namespace {

std::string derived_prefix(const Id& analysis) { return "lfn://derived/" + analysis.str() + "/"; }

std::optional<Id> analysis_of_derived(std::string_view lfn) {
  constexpr std::string_view p = "lfn://derived/";
  if (lfn.rfind(p, 0) != 0) return std::nullopt;
  auto rest = lfn.substr(p.size());
  auto id = rest.substr(0, rest.find('/'));
  if (!Id::well_formed(id)) return std::nullopt;
  return Id(std::string(id));
}

void check_steps(const Catalog& c, const std::vector<PipelineStep>& steps) {
  auto violations = validate_steps(steps);
  if (!violations.empty()) {
    std::vector<std::string> details;
    for (const auto& v : violations) details.push_back(v.str());
    std::string first = details.front();
    throw Error(ErrorKind::validation, "pipeline steps are inconsistent: " + first,
                std::move(details));
  }
  if (steps.empty()) throw Error(ErrorKind::validation, "pipeline has no steps");
  for (const auto& s : steps) {
    if (!c.algorithms.contains(s.algorithm_id)) {
      throw Error(ErrorKind::not_found, "reference: step " + s.step_id +
                                            " uses unregistered algorithm " +
                                            s.algorithm_id.str());
    }
  }
}

void check_lfn(const std::string& lfn) {
  if (!is_lfn(lfn)) {
    throw Error(ErrorKind::validation, "not a logical file name (lfn://<ns>/<path>): " + lfn);
  }
}

}  // namespace

UserRecord Persistency::register_user(const std::string& name, const std::string& organisation,
                                      Role role) {
  if (name.empty()) throw Error(ErrorKind::validation, "user name must not be empty");
  return store_.write([&](const Catalog&, Txn& txn) {
    UserRecord u{ids_.next(), name, organisation, role, true};
    txn.put(Table::users, u);
    return u;
  });
}

UserRecord Persistency::set_user_active(const Id& user_id, bool active) {
  return store_.write([&](const Catalog& c, Txn& txn) {
    const auto* u = c.user(user_id);
    if (!u) throw Error(ErrorKind::not_found, "unknown user " + user_id.str());
    UserRecord next = *u;
    next.active = active;
    txn.put(Table::users, next);
    return next;
  });
}

DatasetRecord Persistency::index_dataset(const Id& caller, const DatasetDescriptor& metadata,
                                         const Visibility& visibility,
                                         const std::string& source_metadata_ref,
                                         const std::optional<std::string>& url_prefix) {
  if (metadata.dataset_name.empty()) {
    throw Error(ErrorKind::validation, "dataset name must not be empty");
  }
  return store_.write([&](const Catalog& c, Txn& txn) {
    require_active(c, caller);
    if (c.dataset_by_owner_name(caller, metadata.dataset_name)) {
      throw Error(ErrorKind::conflict, "dataset '" + metadata.dataset_name +
                                           "' already indexed by this owner");
    }
    for (const auto& u : visibility.shared_with) {
      if (!c.user(u)) throw Error(ErrorKind::not_found, "shared-with user unknown: " + u.str());
    }
    std::string prefix = url_prefix.value_or(config_.storage_url_prefix);
    if (prefix.empty()) {
      prefix = "file://" + metadata.root_path;
      if (prefix.back() != '/') prefix += '/';
    }

    DatasetRecord d;
    d.dataset_id = ids_.next();
    d.name = metadata.dataset_name;
    d.owner = caller;
    d.visibility = visibility;
    d.indexed_at = clock_();
    d.source_metadata_ref = source_metadata_ref;
    txn.put(Table::datasets, d);

    auto to_ref = [&](const FileEntry& fe) {
      FileRef r;
      r.lfn = make_lfn(d.dataset_id.str(), fe.relative_path);
      r.filename = fe.filename;
      r.location = prefix + fe.relative_path;
      r.kind = fe.kind == EntryKind::image ? FileKind::image : FileKind::data;
      r.size_bytes = fe.size_bytes;
      if (!fe.checksum.empty()) r.checksum = fe.checksum;
      return r;
    };
    for (const auto& it : metadata.items) {
      DataItemRecord item;
      item.item_id = ids_.next();
      item.dataset_id = d.dataset_id;
      item.source_subfolder = it.source_subfolder;
      for (const auto& fe : it.image_files) item.image_files.push_back(to_ref(fe));
      for (const auto& fe : it.data_files) item.data_files.push_back(to_ref(fe));
      item.attributes = it.attributes;
      txn.put(Table::items, item);
      d.items.push_back(std::move(item));
    }
    return d;
  });
}

std::pair<PipelineRecord, PipelineVersion> Persistency::register_pipeline(
    const Id& caller, const std::string& name, const std::string& lfn,
    const std::string& description, std::vector<PipelineStep> steps) {
  if (name.empty()) throw Error(ErrorKind::validation, "pipeline name must not be empty");
  check_lfn(lfn);
  return store_.write([&](const Catalog& c, Txn& txn) {
    require_active(c, caller);
    check_steps(c, steps);
    PipelineRecord p;
    p.pipeline_id = ids_.next();
    p.name = name;
    p.author = caller;
    PipelineVersion v{1, lfn, clock_(), description};
    p.versions.push_back(v);
    txn.put(Table::pipelines, p);
    for (auto& s : steps) {
      s.pipeline_id = p.pipeline_id;
      s.version = 1;
      txn.put(Table::steps, s);
    }
    return std::pair{p, v};
  });
}

PipelineVersion Persistency::update_pipeline(const Id& caller, const Id& pipeline_id,
                                             const std::string& lfn,
                                             const std::string& description,
                                             std::vector<PipelineStep> steps) {
  check_lfn(lfn);
  return store_.write([&](const Catalog& c, Txn& txn) {
    require_active(c, caller);
    auto it = c.pipelines.find(pipeline_id);
    if (it == c.pipelines.end()) {
      throw Error(ErrorKind::not_found, "unknown pipeline " + pipeline_id.str());
    }
    if (it->second.author != caller) {
      throw Error(ErrorKind::permission, "only the pipeline author may add versions");
    }
    check_steps(c, steps);
    PipelineRecord p = it->second;
    PipelineVersion v{next_version(p), lfn, clock_(), description};
    p.versions.push_back(v);
    txn.put(Table::pipelines, p);
    for (auto& s : steps) {
      s.pipeline_id = p.pipeline_id;
      s.version = v.version;
      txn.put(Table::steps, s);
    }
    return v;
  });
}

AlgorithmRecord Persistency::register_algorithm(const Id& caller, const std::string& name,
                                                const std::string& toolkit,
                                                const std::string& executable_lfn) {
  if (name.empty()) throw Error(ErrorKind::validation, "algorithm name must not be empty");
  check_lfn(executable_lfn);
  return store_.write([&](const Catalog& c, Txn& txn) {
    require_active(c, caller);
    AlgorithmRecord a{ids_.next(), name, toolkit, executable_lfn};
    txn.put(Table::algorithms, a);
    return a;
  });
}

void check_inputs(const Catalog& c, const UserRecord& caller,
                  const std::vector<PipelineStep>& steps, const std::vector<InputValue>& inputs) {
  std::set<std::pair<std::string, std::string>> supplied;
  for (const auto& in : inputs) {
    auto step = std::find_if(steps.begin(), steps.end(),
                             [&](const PipelineStep& s) { return s.step_id == in.step_id; });
    if (step == steps.end()) {
      throw Error(ErrorKind::validation, "input names unknown step " + in.step_id);
    }
    auto port = std::find_if(step->input_ports.begin(), step->input_ports.end(),
                             [&](const InputPort& p) { return p.name == in.port; });
    if (port == step->input_ports.end()) {
      throw Error(ErrorKind::validation, "input names unknown port " + in.step_id + "." + in.port);
    }
    if (port->source) {
      throw Error(ErrorKind::validation, "port " + in.step_id + "." + in.port +
                                             " is fed by step " + port->source->step_id);
    }
    const char* want = to_string(port->kind);
    bool kind_ok = (port->kind == PortKind::file && std::holds_alternative<FileRef>(in.value)) ||
                   (port->kind == PortKind::dataset &&
                    std::holds_alternative<DatasetSelection>(in.value)) ||
                   (port->kind == PortKind::scalar && std::holds_alternative<AttrValue>(in.value));
    if (!kind_ok) {
      throw Error(ErrorKind::validation,
                  "port " + in.step_id + "." + in.port + " expects a " + want + " value");
    }
    supplied.emplace(in.step_id, in.port);

    if (const auto* sel = std::get_if<DatasetSelection>(&in.value)) {
      const auto* d = c.dataset(sel->dataset_id);
      if (!d) throw Error(ErrorKind::not_found, "unknown dataset " + sel->dataset_id.str());
      if (!can_access(caller, *d)) {
        throw Error(ErrorKind::permission, "no access to dataset " + sel->dataset_id.str());
      }
      for (const auto& item : sel->item_ids) {
        const auto* rec = c.item(item);
        if (!rec || rec->dataset_id != sel->dataset_id) {
          throw Error(ErrorKind::not_found, "item " + item.str() + " is not part of dataset " +
                                                sel->dataset_id.str());
        }
      }
    } else if (const auto* f = std::get_if<FileRef>(&in.value)) {
      if (auto did = dataset_of_lfn(f->lfn)) {
        const auto* d = c.dataset(*did);
        if (!d) throw Error(ErrorKind::not_found, "unknown dataset in lfn " + f->lfn);
        if (!can_access(caller, *d)) {
          throw Error(ErrorKind::permission, "no access to dataset " + did->str());
        }
      } else if (auto aid = analysis_of_derived(f->lfn)) {
        auto out = c.output_by_lfn.find(f->lfn);
        if (out == c.output_by_lfn.end()) {
          throw Error(ErrorKind::not_found, "unknown derived file " + f->lfn);
        }
        const auto& producer = c.analyses.at(out->second.first);
        if (producer.user != caller.user_id) {
          throw Error(ErrorKind::permission, "derived file " + f->lfn + " belongs to another user");
        }
      }
    }
  }
  for (const auto& [step, port] : unbound_ports(steps)) {
    if (!supplied.contains({step, port})) {
      throw Error(ErrorKind::validation, "missing input for " + step + "." + port);
    }
  }
}

AnalysisRecord Persistency::store_analysis(AnalysisRecord record) {
  return store_.write([&](const Catalog& c, Txn& txn) {
    const auto& caller = require_active(c, record.user);
    auto pit = c.pipelines.find(record.pipeline_id);
    if (pit == c.pipelines.end()) {
      throw Error(ErrorKind::not_found, "unknown pipeline " + record.pipeline_id.str());
    }
    if (!pit->second.find_version(record.version)) {
      throw Error(ErrorKind::not_found, "pipeline " + record.pipeline_id.str() + " has no version " +
                                            std::to_string(record.version));
    }
    const auto* steps = c.steps_of(record.pipeline_id, record.version);
    check_inputs(c, caller, steps ? *steps : std::vector<PipelineStep>{}, record.input_values);

    record.analysis_id = ids_.next();
    record.submitted_at = clock_();
    record.status = AnalysisStatus::submitted;
    record.outputs.clear();
    record.log_refs.clear();
    txn.put(Table::analyses, analysis_head(record));
    for (std::size_t i = 0; i < record.input_values.size(); ++i) {
      txn.put(Table::input_values, json{{"analysis_id", record.analysis_id},
                                        {"index", i},
                                        {"value", record.input_values[i]}});
    }
    return record;
  });
}

AnalysisRecord Persistency::update_analysis_status(const Id& analysis_id, AnalysisStatus status) {
  return store_.write([&](const Catalog& c, Txn& txn) {
    auto it = c.analyses.find(analysis_id);
    if (it == c.analyses.end()) {
      throw Error(ErrorKind::not_found, "unknown analysis " + analysis_id.str());
    }
    if (!legal_transition(it->second.status, status)) {
      throw Error(ErrorKind::state, std::string("illegal status transition ") +
                                        to_string(it->second.status) + " -> " + to_string(status));
    }
    AnalysisRecord next = it->second;
    next.status = status;
    txn.put(Table::analyses, analysis_head(next));
    return next;
  });
}

json analysis_head(const AnalysisRecord& a) {
  json head = a;
  head.erase("input_values");
  head.erase("outputs");
  return head;
}

AnalysisRecord stage_derived_output(const Catalog& c, Txn& txn, const Id& analysis_id,
                                    std::vector<OutputValue> outputs, std::vector<FileRef> log_refs) {
  auto it = c.analyses.find(analysis_id);
  if (it == c.analyses.end()) {
    throw Error(ErrorKind::not_found, "unknown analysis " + analysis_id.str());
  }
  const auto prefix = derived_prefix(analysis_id);
  std::set<std::string> fresh;
  auto fix = [&](FileRef& f, const std::string& suffix) {
    if (f.lfn.empty()) f.lfn = prefix + suffix;
    if (f.lfn.rfind(prefix, 0) != 0) {
      throw Error(ErrorKind::validation, "derived file lfn must live under " + prefix);
    }
    if (c.output_by_lfn.contains(f.lfn) || !fresh.insert(f.lfn).second) {
      throw Error(ErrorKind::conflict, "derived file already recorded: " + f.lfn);
    }
  };
  std::size_t index = it->second.outputs.size();
  for (auto& o : outputs) {
    if (auto* f = std::get_if<FileRef>(&o.value)) fix(*f, o.step_id + "/" + o.port);
    txn.put(Table::outputs, json{{"analysis_id", analysis_id}, {"index", index++}, {"value", o}});
  }
  AnalysisRecord next = it->second;
  for (auto& l : log_refs) {
    if (l.lfn.empty()) l.lfn = prefix + "logs/" + l.filename;
    next.log_refs.push_back(l);
  }
  return next;
}

void Persistency::store_derived_output(const Id& analysis_id, std::vector<OutputValue> outputs,
                                       std::vector<FileRef> log_refs) {
  store_.write([&](const Catalog& c, Txn& txn) {
    bool has_logs = !log_refs.empty();
    auto head = stage_derived_output(c, txn, analysis_id, std::move(outputs), std::move(log_refs));
    if (has_logs) txn.put(Table::analyses, analysis_head(head));
  });
}

AnnotationRecord Persistency::store_annotation(AnnotationRecord a) {
  if (a.text.empty()) throw Error(ErrorKind::validation, "annotation text must not be empty");
  return store_.write([&](const Catalog& c, Txn& txn) {
    require_active(c, a.author);
    bool exists = false;
    switch (a.target_kind) {
      case TargetKind::analysis:
        exists = Id::well_formed(a.target) && c.analyses.contains(Id(a.target));
        break;
      case TargetKind::dataset:
        exists = Id::well_formed(a.target) && c.datasets.contains(Id(a.target));
        break;
      case TargetKind::pipeline_version: {
        auto at = a.target.find('@');
        if (at != std::string::npos && Id::well_formed(a.target.substr(0, at))) {
          auto p = c.pipelines.find(Id(a.target.substr(0, at)));
          auto v = parse_typed("int", a.target.substr(at + 1));
          exists = p != c.pipelines.end() && v &&
                   p->second.find_version(static_cast<int>(std::get<std::int64_t>(*v)));
        }
        break;
      }
    }
    if (!exists) {
      throw Error(ErrorKind::not_found, std::string("reference: annotation target ") +
                                            to_string(a.target_kind) + " " + a.target +
                                            " does not exist");
    }
    a.annotation_id = ids_.next();
    a.created_at = clock_();
    txn.put(Table::annotations, a);
    return a;
  });
}

// ---------------------------------------------------------------------------
// Reads

UserRecord Persistency::user(const Id& id) const {
  return store_.read([&](const Catalog& c) {
    const auto* u = c.user(id);
    if (!u) throw Error(ErrorKind::not_found, "unknown user " + id.str());
    return *u;
  });
}

std::vector<UserRecord> Persistency::users() const {
  return store_.read([](const Catalog& c) {
    std::vector<UserRecord> out;
    for (const auto& [id, u] : c.users) out.push_back(u);
    return out;
  });
}

DatasetRecord Persistency::dataset(const Id& id) const {
  return store_.read([&](const Catalog& c) {
    const auto* d = c.dataset(id);
    if (!d) throw Error(ErrorKind::not_found, "unknown dataset " + id.str());
    return *d;
  });
}

std::vector<DatasetRecord> Persistency::datasets() const {
  return store_.read([](const Catalog& c) {
    std::vector<DatasetRecord> out;
    for (const auto& [id, d] : c.datasets) out.push_back(d);
    return out;
  });
}

PipelineRecord Persistency::pipeline(const Id& id) const {
  return store_.read([&](const Catalog& c) {
    auto it = c.pipelines.find(id);
    if (it == c.pipelines.end()) throw Error(ErrorKind::not_found, "unknown pipeline " + id.str());
    return it->second;
  });
}

std::vector<PipelineStep> Persistency::steps(const Id& pipeline_id, int version) const {
  return store_.read([&](const Catalog& c) {
    const auto* s = c.steps_of(pipeline_id, version);
    if (!s) {
      throw Error(ErrorKind::not_found,
                  "unknown pipeline version " + pipeline_id.str() + "@" + std::to_string(version));
    }
    return *s;
  });
}

AlgorithmRecord Persistency::algorithm(const Id& id) const {
  return store_.read([&](const Catalog& c) {
    auto it = c.algorithms.find(id);
    if (it == c.algorithms.end()) throw Error(ErrorKind::not_found, "unknown algorithm " + id.str());
    return it->second;
  });
}

std::vector<AlgorithmRecord> Persistency::algorithms() const {
  return store_.read([](const Catalog& c) {
    std::vector<AlgorithmRecord> out;
    for (const auto& [id, a] : c.algorithms) out.push_back(a);
    return out;
  });
}

AnalysisRecord Persistency::analysis(const Id& id) const {
  return store_.read([&](const Catalog& c) {
    auto it = c.analyses.find(id);
    if (it == c.analyses.end()) throw Error(ErrorKind::not_found, "unknown analysis " + id.str());
    return it->second;
  });
}

std::vector<AnnotationRecord> Persistency::annotations_of(TargetKind kind,
                                                          const std::string& target) const {
  return store_.read([&](const Catalog& c) {
    std::vector<AnnotationRecord> out;
    auto it = c.annotations_by_target.find(std::string(to_string(kind)) + ":" + target);
    if (it == c.annotations_by_target.end()) return out;
    for (const auto& id : it->second) out.push_back(c.annotations.at(id));
    return out;
  });
}

std::vector<std::string> Persistency::audit() const {
  return store_.read([](const Catalog& c) { return audit_catalog(c); });
}

// ---------------------------------------------------------------------------
// Audit

std::vector<std::string> audit_catalog(const Catalog& c) {
  std::vector<std::string> v;
  auto bad = [&](std::string msg) { v.push_back(std::move(msg)); };

  for (const auto& [id, p] : c.pipelines) {
    if (!c.user(p.author)) bad("pipeline " + id.str() + ": author missing");
    for (std::size_t i = 0; i < p.versions.size(); ++i) {
      if (p.versions[i].version != static_cast<int>(i) + 1) {
        bad("pipeline " + id.str() + ": versions not contiguous from 1");
        break;
      }
    }
    for (const auto& pv : p.versions) {
      const auto* steps = c.steps_of(id, pv.version);
      if (!steps || steps->empty()) {
        bad("pipeline " + id.str() + "@" + std::to_string(pv.version) + ": no steps");
        continue;
      }
      if (!validate_steps(*steps).empty()) {
        bad("pipeline " + id.str() + "@" + std::to_string(pv.version) + ": invalid steps");
      }
      for (const auto& s : *steps) {
        if (!c.algorithms.contains(s.algorithm_id)) {
          bad("step " + s.step_id + " of " + id.str() + ": algorithm missing");
        }
      }
    }
  }
  for (const auto& [key, steps] : c.steps) {
    auto p = c.pipelines.find(key.first);
    if (p == c.pipelines.end() || !p->second.find_version(key.second)) {
      bad("steps for " + key.first.str() + "@" + std::to_string(key.second) +
          ": pipeline version missing");
    }
  }
  for (const auto& [id, d] : c.datasets) {
    if (!c.user(d.owner)) bad("dataset " + id.str() + ": owner missing");
    for (const auto& item : d.items) {
      if (item.dataset_id != id) bad("item " + item.item_id.str() + ": wrong dataset");
    }
  }
  for (const auto& [id, a] : c.analyses) {
    const std::string tag = "analysis " + id.str() + ": ";
    if (!c.user(a.user)) bad(tag + "user missing");
    auto p = c.pipelines.find(a.pipeline_id);
    if (p == c.pipelines.end() || !p->second.find_version(a.version)) {
      bad(tag + "pipeline version missing");
    }
    const auto* steps = c.steps_of(a.pipeline_id, a.version);
    for (const auto& in : a.input_values) {
      bool port_ok = false;
      if (steps) {
        for (const auto& s : *steps) {
          if (s.step_id != in.step_id) continue;
          for (const auto& ip : s.input_ports) port_ok |= ip.name == in.port;
        }
      }
      if (!port_ok) bad(tag + "input " + in.step_id + "." + in.port + " names no declared port");
      if (const auto* sel = std::get_if<DatasetSelection>(&in.value)) {
        if (!c.dataset(sel->dataset_id)) bad(tag + "input dataset missing");
        for (const auto& item : sel->item_ids) {
          if (!c.item(item)) bad(tag + "input item " + item.str() + " missing");
        }
      }
    }
    auto t = c.traces.find(id);
    for (const auto& o : a.outputs) {
      bool attributed = false;
      if (t != c.traces.end()) {
        for (const auto& e : t->second.events) {
          attributed |= e.kind == EventKind::completed && e.step_id == o.step_id &&
                        e.attempt == o.attempt;
        }
      }
      if (!attributed) bad(tag + "output " + o.step_id + "." + o.port + " not attributable");
    }
    bool terminal = a.status == AnalysisStatus::completed || a.status == AnalysisStatus::failed;
    if (terminal) {
      if (t == c.traces.end() || !t->second.closed) {
        bad(tag + "terminal status without closed trace");
      } else if (t->second.final_status != a.status) {
        bad(tag + "trace final status disagrees");
      }
    }
    if (a.status == AnalysisStatus::failed && t != c.traces.end()) {
      bool any_error = std::any_of(t->second.events.begin(), t->second.events.end(),
                                   [](const ExecutionEvent& e) { return e.kind == EventKind::failed; });
      if (!any_error) bad(tag + "failed without a recorded error");
    }
  }
  for (const auto& [lfn, where] : c.output_by_lfn) {
    auto a = c.analyses.find(where.first);
    if (a == c.analyses.end() || where.second >= a->second.outputs.size()) {
      bad("derived file " + lfn + ": dangling");
    }
  }
  for (const auto& [id, an] : c.annotations) {
    if (!c.user(an.author)) bad("annotation " + id.str() + ": author missing");
    bool exists = true;
    if (an.target_kind == TargetKind::analysis) exists = c.analyses.contains(Id(an.target));
    if (an.target_kind == TargetKind::dataset) exists = c.datasets.contains(Id(an.target));
    if (!exists) bad("annotation " + id.str() + ": target missing");
  }
  for (const auto& [id, t] : c.traces) {
    const std::string tag = "trace " + id.str() + ": ";
    if (!c.analyses.contains(id)) bad(tag + "analysis missing");
    if (t.snapshot.steps.empty()) bad(tag + "empty pipeline snapshot");
    for (std::size_t i = 0; i < t.events.size(); ++i) {
      if (t.events[i].seq != i + 1) {
        bad(tag + "event sequence has a gap or is out of order");
        break;
      }
    }
    if (t.closed && !t.final_status) bad(tag + "closed without final status");
    if (t.closed && t.final_status == AnalysisStatus::completed) {
      auto a = c.analyses.find(id);
      bool outputs_or_none = a != c.analyses.end();
      if (!outputs_or_none) bad(tag + "completed without analysis record");
    }
  }
  return v;
}

}  // namespace abase
