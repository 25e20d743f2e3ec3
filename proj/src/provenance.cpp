#include "abase/provenance.hpp"

#include <algorithm>
#include <sstream>

#include "abase/error.hpp"

namespace abase {

namespace {

struct AttemptState {
  bool scheduled = false;
  bool started = false;
  bool terminal = false;
  bool failed = false;
  std::string resource;
};

struct StepState {
  std::map<int, AttemptState> attempts;
  std::optional<Timestamp> last;
  bool completed = false;
};

std::map<std::string, StepState> fold(const std::vector<ExecutionEvent>& events) {
  std::map<std::string, StepState> out;
  for (const auto& e : events) {
    auto& s = out[e.step_id];
    auto& a = s.attempts[e.attempt];
    s.last = e.timestamp;
    switch (e.kind) {
      case EventKind::scheduled:
      case EventKind::rescheduled:
        a.scheduled = true;
        a.resource = e.resource_id;
        break;
      case EventKind::started: a.started = true; break;
      case EventKind::status: break;
      case EventKind::failed:
        a.terminal = a.failed = true;
        break;
      case EventKind::completed:
        a.terminal = true;
        s.completed = true;
        break;
    }
  }
  return out;
}

[[noreturn]] void illegal(const ExecutionEvent& e, const std::string& why) {
  throw Error(ErrorKind::state, std::string("illegal event ") + to_string(e.kind) + " for step " +
                                    e.step_id + " attempt " + std::to_string(e.attempt) + ": " +
                                    why);
}

const ProvenanceTrace& find_trace(const Catalog& c, const Id& aid) {
  auto it = c.traces.find(aid);
  if (it == c.traces.end()) throw Error(ErrorKind::not_found, "no trace for analysis " + aid.str());
  return it->second;
}

std::string port_key(const std::string& step, const std::string& port) { return step + "." + port; }

}  // namespace

void check_event(const ProvenanceTrace& trace, const ExecutionEvent& e) {
  if (trace.closed) {
    throw Error(ErrorKind::state, "trace of analysis " + trace.analysis_id.str() + " is closed");
  }
  const auto* step = trace.snapshot.step(e.step_id);
  if (!step) throw Error(ErrorKind::validation, "event names unknown step " + e.step_id);
  if (e.attempt < 1 || e.attempt > kMaxAttempts) illegal(e, "attempt out of range");
  if (e.resource_id.empty()) illegal(e, "no resource");

  auto states = fold(trace.events);
  auto& s = states[e.step_id];
  if (s.last && e.timestamp < *s.last) illegal(e, "timestamp goes backwards");
  auto found = s.attempts.find(e.attempt);
  const AttemptState* a = found == s.attempts.end() ? nullptr : &found->second;

  switch (e.kind) {
    case EventKind::scheduled:
      if (e.attempt != 1) illegal(e, "only the first attempt is scheduled");
      if (!s.attempts.empty()) illegal(e, "step already scheduled");
      return;
    case EventKind::rescheduled: {
      if (e.attempt < 2) illegal(e, "reschedule must start a later attempt");
      if (a) illegal(e, "attempt already exists");
      auto prev = s.attempts.find(e.attempt - 1);
      if (prev == s.attempts.end() || !prev->second.failed) {
        illegal(e, "previous attempt has not failed");
      }
      return;
    }
    case EventKind::started:
      if (!a || !a->scheduled) illegal(e, "attempt not scheduled");
      if (a->started) illegal(e, "attempt already started");
      if (a->resource != e.resource_id) illegal(e, "resource differs from schedule");
      for (const auto& dep : step->depends_on) {
        if (!states[dep].completed) illegal(e, "dependency " + dep + " has not completed");
      }
      return;
    case EventKind::status:
    case EventKind::failed:
    case EventKind::completed:
      if (!a || !a->started) illegal(e, "attempt not started");
      if (a->terminal) illegal(e, "attempt already finished");
      if (a->resource != e.resource_id) illegal(e, "resource differs from schedule");
      return;
  }
}

Provenance::Provenance(Persistency& persistency) : persistency_(persistency) {}

ProvenanceTrace Provenance::open_trace(const AnalysisRecord& analysis) {
  return persistency_.store().write([&](const Catalog& c, Txn& txn) {
    auto it = c.analyses.find(analysis.analysis_id);
    if (it == c.analyses.end()) {
      throw Error(ErrorKind::not_found, "unknown analysis " + analysis.analysis_id.str());
    }
    if (c.traces.contains(analysis.analysis_id)) {
      throw Error(ErrorKind::conflict, "trace already open for " + analysis.analysis_id.str());
    }
    const auto& a = it->second;
    if (a.status != AnalysisStatus::submitted) {
      throw Error(ErrorKind::state, "analysis " + a.analysis_id.str() + " is " +
                                        to_string(a.status) + ", not submitted");
    }
    const auto& p = c.pipelines.at(a.pipeline_id);
    ProvenanceTrace t;
    t.analysis_id = a.analysis_id;
    t.user = a.user;
    t.submitted_at = a.submitted_at;
    t.snapshot.pipeline_id = p.pipeline_id;
    t.snapshot.name = p.name;
    t.snapshot.author = p.author;
    t.snapshot.version = *p.find_version(a.version);
    t.snapshot.steps = *c.steps_of(a.pipeline_id, a.version);
    std::set<Id> algs;
    for (const auto& s : t.snapshot.steps) algs.insert(s.algorithm_id);
    for (const auto& id : algs) t.snapshot.algorithms.push_back(c.algorithms.at(id));
    t.inputs = a.input_values;
    txn.put(Table::provenance_events, json{{"analysis_id", t.analysis_id},
                                           {"kind", "open"},
                                           {"user", t.user},
                                           {"submitted_at", t.submitted_at},
                                           {"snapshot", t.snapshot},
                                           {"inputs", t.inputs}});
    return t;
  });
}

ExecutionEvent Provenance::record_event(const Id& analysis_id, ExecutionEvent event) {
  return persistency_.store().write([&](const Catalog& c, Txn& txn) {
    const auto& t = find_trace(c, analysis_id);
    check_event(t, event);
    event.seq = t.events.size() + 1;
    txn.put(Table::provenance_events,
            json{{"analysis_id", analysis_id}, {"kind", "event"}, {"event", event}});
    return event;
  });
}

void Provenance::close_trace(const Id& analysis_id, std::vector<OutputValue> outputs,
                             std::vector<FileRef> log_refs, AnalysisStatus final_status) {
  if (final_status != AnalysisStatus::completed && final_status != AnalysisStatus::failed) {
    throw Error(ErrorKind::validation, "final status must be completed or failed");
  }
  persistency_.store().write([&](const Catalog& c, Txn& txn) {
    const auto& t = find_trace(c, analysis_id);
    if (t.closed) throw Error(ErrorKind::state, "trace already closed");
    auto states = fold(t.events);
    if (final_status == AnalysisStatus::completed) {
      for (const auto& s : t.snapshot.steps) {
        if (!states[s.step_id].completed) {
          throw Error(ErrorKind::state, "step " + s.step_id + " has not completed");
        }
      }
    } else {
      bool any = std::any_of(t.events.begin(), t.events.end(),
                             [](const ExecutionEvent& e) { return e.kind == EventKind::failed; });
      if (!any) throw Error(ErrorKind::state, "failed status needs a recorded failure");
    }
    for (const auto& o : outputs) {
      auto st = states.find(o.step_id);
      bool ok = false;
      if (st != states.end()) {
        auto at = st->second.attempts.find(o.attempt);
        ok = at != st->second.attempts.end() && at->second.terminal && !at->second.failed;
      }
      if (!ok) {
        throw Error(ErrorKind::validation, "output " + port_key(o.step_id, o.port) +
                                               " has no completed attempt " +
                                               std::to_string(o.attempt));
      }
    }
    auto head =
        stage_derived_output(c, txn, analysis_id, std::move(outputs), std::move(log_refs));
    if (!legal_transition(head.status, final_status)) {
      throw Error(ErrorKind::state, std::string("illegal status transition ") +
                                        to_string(head.status) + " -> " + to_string(final_status));
    }
    head.status = final_status;
    txn.put(Table::analyses, analysis_head(head));
    txn.put(Table::provenance_events, json{{"analysis_id", analysis_id},
                                           {"kind", "close"},
                                           {"final_status", to_string(final_status)}});
  });
}

ProvenanceTrace Provenance::trace(const Id& analysis_id) const {
  return persistency_.store().read([&](const Catalog& c) { return find_trace(c, analysis_id); });
}

ProvenanceGraph Provenance::reconstruct(const Id& analysis_id) const {
  return persistency_.store().read([&](const Catalog& c) {
    auto ait = c.analyses.find(analysis_id);
    if (ait == c.analyses.end()) {
      throw Error(ErrorKind::not_found, "unknown analysis " + analysis_id.str());
    }
    const auto& a = ait->second;
    const auto& t = find_trace(c, analysis_id);

    ProvenanceGraph g;
    g.analysis_id = analysis_id;
    if (const auto* u = c.user(a.user)) g.executor = *u;
    if (const auto* u = c.user(t.snapshot.author)) g.author = *u;
    g.submitted_at = a.submitted_at;
    g.status = a.status;
    g.closed = t.closed;
    g.pipeline = t.snapshot;
    g.inputs = t.inputs;
    g.outputs = a.outputs;
    g.log_refs = a.log_refs;
    g.event_count = t.events.size();
    for (const auto& e : t.events) {
      if (!g.execution_started || e.timestamp < *g.execution_started) {
        g.execution_started = e.timestamp;
      }
      if (!g.execution_finished || e.timestamp > *g.execution_finished) {
        g.execution_finished = e.timestamp;
      }
    }

    for (const auto& s : t.snapshot.steps) {
      StepReport r;
      r.step_id = s.step_id;
      const auto* alg = t.snapshot.algorithm(s.algorithm_id);
      r.algorithm = alg ? alg->name : s.algorithm_id.str();
      r.depends_on = s.depends_on;
      for (const auto& in : t.inputs) {
        if (in.step_id == s.step_id) r.supplied_inputs.push_back(in);
      }
      for (const auto& p : s.input_ports) {
        if (p.source) r.upstream_inputs.emplace_back(p.name, *p.source);
      }
      std::map<int, AttemptReport> attempts;
      for (const auto& e : t.events) {
        if (e.step_id != s.step_id) continue;
        auto& at = attempts[e.attempt];
        at.attempt = e.attempt;
        switch (e.kind) {
          case EventKind::scheduled:
          case EventKind::rescheduled:
            at.resource_id = e.resource_id;
            at.scheduled_at = e.timestamp;
            at.outcome = "pending";
            break;
          case EventKind::started:
            at.started_at = e.timestamp;
            at.outcome = "running";
            break;
          case EventKind::status: {
            auto note = e.payload.find("note");
            if (note != e.payload.end()) at.notes.push_back(note->second);
            break;
          }
          case EventKind::failed: {
            at.ended_at = e.timestamp;
            at.outcome = "failed";
            auto err = e.payload.find("error");
            at.error = err == e.payload.end() ? "unspecified error" : err->second;
            g.errors.push_back("step " + s.step_id + " attempt " + std::to_string(e.attempt) +
                               " on " + e.resource_id + ": " + at.error);
            break;
          }
          case EventKind::completed:
            at.ended_at = e.timestamp;
            at.outcome = "completed";
            break;
        }
      }
      for (auto& [n, at] : attempts) {
        if (at.started_at && at.ended_at) at.duration_ms = at.ended_at->ms - at.started_at->ms;
        r.duration_ms += at.duration_ms;
        r.attempts.push_back(std::move(at));
      }
      if (r.attempts.empty()) {
        r.state = "not-run";
      } else {
        const auto& last = r.attempts.back().outcome;
        r.state = last == "pending" ? "running" : last;
      }
      for (const auto& o : a.outputs) {
        if (o.step_id == s.step_id) r.outputs.push_back(o);
      }
      g.steps.push_back(std::move(r));
    }

    auto collect = [&](TargetKind kind, const std::string& target) {
      auto it = c.annotations_by_target.find(std::string(to_string(kind)) + ":" + target);
      if (it == c.annotations_by_target.end()) return;
      for (const auto& id : it->second) g.annotations.push_back(c.annotations.at(id));
    };
    collect(TargetKind::analysis, analysis_id.str());
    collect(TargetKind::pipeline_version,
            t.snapshot.pipeline_id.str() + "@" + std::to_string(t.snapshot.version.version));
    return g;
  });
}

SubmissionSpec Provenance::derive_rerun(const Id& analysis_id,
                                        const std::vector<InputValue>& overrides) const {
  auto t = trace(analysis_id);
  std::set<std::pair<std::string, std::string>> unbound;
  for (const auto& u : unbound_ports(t.snapshot.steps)) unbound.insert(u);

  std::map<std::string, std::vector<InputValue>> by_port;
  for (const auto& o : overrides) {
    if (!unbound.contains({o.step_id, o.port})) {
      throw Error(ErrorKind::validation,
                  "override names no supplied input port: " + port_key(o.step_id, o.port));
    }
    by_port[port_key(o.step_id, o.port)].push_back(o);
  }

  SubmissionSpec spec{t.user, t.snapshot.pipeline_id, t.snapshot.version.version, {}};
  std::set<std::string> placed;
  for (const auto& in : t.inputs) {
    auto key = port_key(in.step_id, in.port);
    auto ov = by_port.find(key);
    if (ov == by_port.end()) {
      spec.inputs.push_back(in);
    } else if (placed.insert(key).second) {
      spec.inputs.insert(spec.inputs.end(), ov->second.begin(), ov->second.end());
    }
  }
  for (const auto& [key, values] : by_port) {
    if (!placed.contains(key)) spec.inputs.insert(spec.inputs.end(), values.begin(), values.end());
  }
  return spec;
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

json opt_ts(const std::optional<Timestamp>& t) { return t ? json(*t) : json(nullptr); }

std::string describe(const InputPayload& v) {
  if (const auto* f = std::get_if<FileRef>(&v)) return f->lfn;
  if (const auto* d = std::get_if<DatasetSelection>(&v)) {
    std::string s = "dataset " + d->dataset_id.str();
    if (d->item_ids.empty()) return s + " (all items)";
    return s + " (" + std::to_string(d->item_ids.size()) + " items)";
  }
  return render(std::get<AttrValue>(v));
}

std::string describe(const OutputPayload& v) {
  if (const auto* f = std::get_if<FileRef>(&v)) {
    return f->lfn + (f->checksum ? " sha256:" + *f->checksum : std::string());
  }
  return render(std::get<AttrValue>(v));
}

}  // namespace

json to_json(const ProvenanceGraph& g) {
  json steps = json::array();
  for (const auto& s : g.steps) {
    json attempts = json::array();
    for (const auto& a : s.attempts) {
      attempts.push_back({{"attempt", a.attempt},
                          {"resource_id", a.resource_id},
                          {"scheduled_at", opt_ts(a.scheduled_at)},
                          {"started_at", opt_ts(a.started_at)},
                          {"ended_at", opt_ts(a.ended_at)},
                          {"outcome", a.outcome},
                          {"error", a.error},
                          {"duration_ms", a.duration_ms},
                          {"notes", a.notes}});
    }
    json upstream = json::array();
    for (const auto& [port, src] : s.upstream_inputs) {
      upstream.push_back({{"port", port}, {"from_step", src.step_id}, {"from_port", src.port}});
    }
    steps.push_back({{"step_id", s.step_id},
                     {"algorithm", s.algorithm},
                     {"depends_on", s.depends_on},
                     {"supplied_inputs", s.supplied_inputs},
                     {"upstream_inputs", upstream},
                     {"attempts", attempts},
                     {"state", s.state},
                     {"duration_ms", s.duration_ms},
                     {"outputs", s.outputs}});
  }
  auto person = [](const UserRecord& u) {
    return json{{"user_id", u.user_id}, {"name", u.name}, {"organisation", u.organisation}};
  };
  return {{"analysis_id", g.analysis_id},
          {"executor", person(g.executor)},
          {"author", person(g.author)},
          {"submitted_at", g.submitted_at},
          {"status", to_string(g.status)},
          {"closed", g.closed},
          {"execution_started", opt_ts(g.execution_started)},
          {"execution_finished", opt_ts(g.execution_finished)},
          {"pipeline", g.pipeline},
          {"inputs", g.inputs},
          {"steps", steps},
          {"outputs", g.outputs},
          {"log_refs", g.log_refs},
          {"errors", g.errors},
          {"annotations", g.annotations},
          {"event_count", g.event_count}};
}

std::string render_text(const ProvenanceGraph& g) {
  std::ostringstream out;
  out << "analysis " << g.analysis_id.str() << "  status " << to_string(g.status)
      << (g.closed ? "" : " (trace open)") << "\n";
  out << "pipeline " << g.pipeline.name << " (" << g.pipeline.pipeline_id.str() << ") version "
      << g.pipeline.version.version << "  " << g.pipeline.version.lfn << "\n";
  out << "authored by " << g.author.name << " (" << g.author.user_id.str() << ")\n";
  out << "executed by " << g.executor.name << " (" << g.executor.user_id.str() << ")\n";
  out << "submitted " << g.submitted_at.iso() << "\n";
  if (g.execution_started) {
    out << "ran " << g.execution_started->iso() << " .. " << g.execution_finished->iso() << "\n";
  }
  out << "inputs:\n";
  for (const auto& in : g.inputs) {
    out << "  " << in.step_id << "." << in.port << " = " << describe(in.value) << "\n";
  }
  out << "steps:\n";
  for (const auto& s : g.steps) {
    out << "  " << s.step_id << " [" << s.algorithm << "] " << s.state << ", " << s.duration_ms
        << " ms";
    if (!s.depends_on.empty()) {
      out << ", after";
      for (const auto& d : s.depends_on) out << " " << d;
    }
    out << "\n";
    for (const auto& [port, src] : s.upstream_inputs) {
      out << "    " << port << " <- " << src.step_id << "." << src.port << "\n";
    }
    for (const auto& a : s.attempts) {
      out << "    attempt " << a.attempt << " on " << a.resource_id << ": " << a.outcome;
      if (a.started_at) out << " started " << a.started_at->iso();
      if (a.ended_at) out << " ended " << a.ended_at->iso() << " (" << a.duration_ms << " ms)";
      if (!a.error.empty()) out << " error: " << a.error;
      out << "\n";
    }
  }
  out << "outputs:\n";
  for (const auto& o : g.outputs) {
    out << "  " << o.step_id << "." << o.port << " (attempt " << o.attempt
        << ") = " << describe(o.value) << "\n";
  }
  for (const auto& l : g.log_refs) out << "log " << l.lfn << "\n";
  if (!g.errors.empty()) {
    out << "errors:\n";
    for (const auto& e : g.errors) out << "  " << e << "\n";
  }
  if (!g.annotations.empty()) {
    out << "annotations:\n";
    for (const auto& a : g.annotations) {
      out << "  [" << to_string(a.target_kind) << "] " << a.created_at.iso() << " "
          << a.author.str() << ": " << a.text << "\n";
    }
  }
  return out.str();
}

}  // namespace abase
