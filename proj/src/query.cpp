#include "abase/query.hpp"

#include <algorithm>
#include <array>

#include "abase/error.hpp"

namespace abase {

const char* to_string(Comparator c) noexcept {
  switch (c) {
    case Comparator::eq: return "=";
    case Comparator::ne: return "!=";
    case Comparator::lt: return "<";
    case Comparator::le: return "<=";
    case Comparator::gt: return ">";
    case Comparator::ge: return ">=";
  }
  return "?";
}

namespace {

std::string_view trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool ordered(Comparator c) { return c != Comparator::eq && c != Comparator::ne; }

struct OpToken {
  std::string_view text;
  Comparator op;
};

constexpr std::array<OpToken, 9> kOps = {{
    {"!=", Comparator::ne},
    {"<=", Comparator::le},
    {">=", Comparator::ge},
    {"≠", Comparator::ne},
    {"≤", Comparator::le},
    {"≥", Comparator::ge},
    {"<", Comparator::lt},
    {">", Comparator::gt},
    {"=", Comparator::eq},
}};

Predicate parse_term(std::string_view term) {
  std::size_t best = std::string_view::npos;
  const OpToken* tok = nullptr;
  for (const auto& op : kOps) {
    auto p = term.find(op.text);
    if (p == std::string_view::npos) continue;
    if (p < best || (p == best && op.text.size() > tok->text.size())) {
      best = p;
      tok = &op;
    }
  }
  if (!tok) {
    throw Error(ErrorKind::validation, "filter term '" + std::string(term) + "' has no comparator");
  }
  auto attr = trim(term.substr(0, best));
  auto value = trim(term.substr(best + tok->text.size()));
  if (attr.empty()) {
    throw Error(ErrorKind::validation, "filter term '" + std::string(term) + "' has no attribute");
  }
  if (value.empty()) {
    throw Error(ErrorKind::validation, "filter term '" + std::string(term) + "' has no value");
  }
  Predicate p{std::string(attr), tok->op, auto_typed(value)};
  if (ordered(p.op) && !is_numeric(p.literal)) {
    throw Error(ErrorKind::validation, "comparator " + std::string(to_string(p.op)) +
                                           " needs a numeric value in '" + std::string(term) + "'");
  }
  return p;
}

bool numeric_equal(const AttrValue& a, const AttrValue& b) {
  if (std::holds_alternative<std::int64_t>(a) && std::holds_alternative<std::int64_t>(b)) {
    return std::get<std::int64_t>(a) == std::get<std::int64_t>(b);
  }
  return as_double(a) == as_double(b);
}

int numeric_compare(const AttrValue& a, const AttrValue& b) {
  if (std::holds_alternative<std::int64_t>(a) && std::holds_alternative<std::int64_t>(b)) {
    auto x = std::get<std::int64_t>(a), y = std::get<std::int64_t>(b);
    return x < y ? -1 : (x > y ? 1 : 0);
  }
  double x = as_double(a), y = as_double(b);
  return x < y ? -1 : (x > y ? 1 : 0);
}

}  // namespace

FilterExpr parse_filter(std::string_view wire) {
  FilterExpr f;
  if (trim(wire).empty()) return f;
  std::size_t pos = 0;
  while (pos <= wire.size()) {
    auto amp = wire.find('&', pos);
    auto term = trim(wire.substr(pos, amp == std::string_view::npos ? std::string_view::npos
                                                                      : amp - pos));
    if (term.empty()) throw Error(ErrorKind::validation, "empty filter term");
    f.predicates.push_back(parse_term(term));
    if (amp == std::string_view::npos) break;
    pos = amp + 1;
  }
  return f;
}

std::string format_filter(const FilterExpr& f) {
  std::string out;
  for (const auto& p : f.predicates) {
    if (!out.empty()) out += '&';
    out += p.attribute + to_string(p.op) + render(p.literal);
  }
  return out;
}

Verdict evaluate(const Predicate& p, const AttrMap& attrs) {
  auto it = attrs.find(p.attribute);
  if (it == attrs.end()) return Verdict::reject;
  const auto& v = it->second;
  bool hit = false;
  if (ordered(p.op)) {
    if (!is_numeric(v) || !is_numeric(p.literal)) return Verdict::type_error;
    int c = numeric_compare(v, p.literal);
    switch (p.op) {
      case Comparator::lt: hit = c < 0; break;
      case Comparator::le: hit = c <= 0; break;
      case Comparator::gt: hit = c > 0; break;
      case Comparator::ge: hit = c >= 0; break;
      default: break;
    }
  } else {
    bool eq = is_numeric(v) && is_numeric(p.literal) ? numeric_equal(v, p.literal)
                                                     : render(v) == render(p.literal);
    hit = p.op == Comparator::eq ? eq : !eq;
  }
  return hit ? Verdict::accept : Verdict::reject;
}

Verdict evaluate(const FilterExpr& f, const AttrMap& attrs) {
  Verdict out = Verdict::accept;
  for (const auto& p : f.predicates) {
    auto v = evaluate(p, attrs);
    if (v == Verdict::type_error) return v;
    if (v == Verdict::reject) out = Verdict::reject;
  }
  return out;
}

std::vector<Verdict> filter_serial(const std::vector<const AttrMap*>& rows, const FilterExpr& f) {
  std::vector<Verdict> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) out[i] = evaluate(f, *rows[i]);
  return out;
}

std::vector<Verdict> filter_parallel(const std::vector<const AttrMap*>& rows, const FilterExpr& f) {
  std::vector<Verdict> out(rows.size());
  const auto n = static_cast<std::int64_t>(rows.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) out[i] = evaluate(f, *rows[i]);
  return out;
}

// ---------------------------------------------------------------------------

QueryService::QueryService(const Persistency& persistency) : persistency_(persistency) {}

std::vector<ItemHit> QueryService::query_data_items(const Id& caller,
                                                    const std::optional<Id>& dataset,
                                                    const FilterExpr& f, bool parallel) const {
  return persistency_.store().read([&](const Catalog& c) {
    const auto* user = c.user(caller);
    if (!user) throw Error(ErrorKind::not_found, "unknown user " + caller.str());
    std::vector<const DatasetRecord*> scope;
    if (dataset) {
      const auto* d = c.dataset(*dataset);
      if (!d) throw Error(ErrorKind::not_found, "unknown dataset " + dataset->str());
      if (can_access(*user, *d)) scope.push_back(d);
    } else {
      for (const auto& [id, d] : c.datasets) {
        if (can_access(*user, d)) scope.push_back(&d);
      }
    }
    std::vector<const DataItemRecord*> items;
    for (const auto* d : scope) {
      auto first = items.size();
      for (const auto& it : d->items) items.push_back(&it);
      std::sort(items.begin() + static_cast<std::ptrdiff_t>(first), items.end(),
                [](const DataItemRecord* a, const DataItemRecord* b) { return a->item_id < b->item_id; });
    }
    std::vector<const AttrMap*> rows;
    rows.reserve(items.size());
    for (const auto* it : items) rows.push_back(&it->attributes);
    auto verdicts = parallel ? filter_parallel(rows, f) : filter_serial(rows, f);

    std::vector<ItemHit> hits;
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (verdicts[i] == Verdict::type_error) {
        for (const auto& p : f.predicates) {
          if (evaluate(p, *rows[i]) == Verdict::type_error) {
            throw Error(ErrorKind::validation, "attribute '" + p.attribute +
                                                   "' is text; comparator " + to_string(p.op) +
                                                   " needs a number");
          }
        }
      }
      if (verdicts[i] == Verdict::accept) hits.push_back({items[i]->dataset_id, *items[i]});
    }
    return hits;
  });
}

std::vector<PipelineRecord> QueryService::query_pipelines(const PipelineQuery& q) const {
  return persistency_.store().read([&](const Catalog& c) {
    std::vector<PipelineRecord> out;
    for (const auto& [id, p] : c.pipelines) {
      if (q.name_contains && p.name.find(*q.name_contains) == std::string::npos) continue;
      if (q.author && p.author != *q.author) continue;
      if (q.uses_algorithm) {
        bool uses = false;
        for (const auto& v : p.versions) {
          const auto* steps = c.steps_of(id, v.version);
          if (!steps) continue;
          for (const auto& s : *steps) uses |= s.algorithm_id == *q.uses_algorithm;
        }
        if (!uses) continue;
      }
      out.push_back(p);
    }
    return out;
  });
}

namespace {

std::vector<const AnalysisRecord*> analyses_of(const Catalog& c, const Id& pipeline,
                                               std::optional<int> version) {
  std::vector<const AnalysisRecord*> out;
  for (const auto& [id, a] : c.analyses) {
    if (a.pipeline_id == pipeline && (!version || a.version == *version)) out.push_back(&a);
  }
  std::sort(out.begin(), out.end(), [](const AnalysisRecord* a, const AnalysisRecord* b) {
    return std::tie(a->submitted_at, a->analysis_id) < std::tie(b->submitted_at, b->analysis_id);
  });
  return out;
}

const AnalysisRecord& find_analysis(const Catalog& c, const Id& id) {
  auto it = c.analyses.find(id);
  if (it == c.analyses.end()) throw Error(ErrorKind::not_found, "unknown analysis " + id.str());
  return it->second;
}

}  // namespace

AuthorshipReport QueryService::who_authored_and_executed(const Id& pipeline_id) const {
  return persistency_.store().read([&](const Catalog& c) {
    auto it = c.pipelines.find(pipeline_id);
    if (it == c.pipelines.end()) {
      throw Error(ErrorKind::not_found, "unknown pipeline " + pipeline_id.str());
    }
    AuthorshipReport r;
    r.pipeline_id = pipeline_id;
    r.pipeline_name = it->second.name;
    if (const auto* u = c.user(it->second.author)) r.author = *u;
    for (const auto* a : analyses_of(c, pipeline_id, std::nullopt)) {
      ExecutionRow row;
      if (const auto* u = c.user(a->user)) row.executor = *u;
      row.analysis_id = a->analysis_id;
      row.version = a->version;
      row.submitted_at = a->submitted_at;
      row.status = a->status;
      r.executions.push_back(std::move(row));
    }
    return r;
  });
}

TimingReport QueryService::when_executed(const Id& analysis_id) const {
  return persistency_.store().read([&](const Catalog& c) {
    const auto& a = find_analysis(c, analysis_id);
    TimingReport r;
    r.analysis_id = analysis_id;
    r.submitted_at = a.submitted_at;
    auto t = c.traces.find(analysis_id);
    if (t == c.traces.end()) return r;
    std::map<std::string, std::map<int, std::pair<std::optional<Timestamp>, std::optional<Timestamp>>>>
        spans;
    for (const auto& e : t->second.events) {
      if (!r.started || e.timestamp < *r.started) r.started = e.timestamp;
      if (!r.finished || e.timestamp > *r.finished) r.finished = e.timestamp;
      auto& span = spans[e.step_id][e.attempt];
      if (e.kind == EventKind::started) span.first = e.timestamp;
      if (e.kind == EventKind::completed || e.kind == EventKind::failed) span.second = e.timestamp;
    }
    if (r.started && r.finished) r.total_ms = r.finished->ms - r.started->ms;
    for (const auto& s : t->second.snapshot.steps) {
      StepTiming st{s.step_id, 0, 0};
      auto it = spans.find(s.step_id);
      if (it != spans.end()) {
        st.attempts = static_cast<int>(it->second.size());
        for (const auto& [n, span] : it->second) {
          if (span.first && span.second) st.duration_ms += span.second->ms - span.first->ms;
        }
      }
      r.steps.push_back(std::move(st));
    }
    return r;
  });
}

std::vector<OutputValue> QueryService::outputs_of(const Id& analysis_id) const {
  return persistency_.store().read(
      [&](const Catalog& c) { return find_analysis(c, analysis_id).outputs; });
}

LineageAnswer QueryService::inputs_for_output(const std::string& lfn) const {
  return persistency_.store().read([&](const Catalog& c) {
    auto it = c.output_by_lfn.find(lfn);
    if (it == c.output_by_lfn.end()) {
      throw Error(ErrorKind::not_found, "no analysis produced " + lfn);
    }
    const auto& a = find_analysis(c, it->second.first);
    LineageAnswer r;
    r.lfn = lfn;
    r.analysis_id = a.analysis_id;
    r.pipeline_id = a.pipeline_id;
    r.version = a.version;
    if (it->second.second < a.outputs.size()) {
      r.step_id = a.outputs[it->second.second].step_id;
      r.port = a.outputs[it->second.second].port;
    }
    r.inputs = a.input_values;
    return r;
  });
}

std::vector<CorrectnessRow> QueryService::execution_correctness(const Id& pipeline_id,
                                                                int version) const {
  return persistency_.store().read([&](const Catalog& c) {
    auto p = c.pipelines.find(pipeline_id);
    if (p == c.pipelines.end() || !p->second.find_version(version)) {
      throw Error(ErrorKind::not_found, "unknown pipeline version " + pipeline_id.str() + "@" +
                                            std::to_string(version));
    }
    std::vector<CorrectnessRow> rows;
    for (const auto* a : analyses_of(c, pipeline_id, version)) {
      CorrectnessRow row;
      row.analysis_id = a->analysis_id;
      row.executor = a->user;
      row.status = a->status;
      row.produced = a->outputs;
      auto t = c.traces.find(a->analysis_id);
      if (t != c.traces.end()) {
        for (const auto& s : t->second.snapshot.steps) {
          StepAttempts sa{s.step_id, 0, "not-run", {}};
          for (const auto& e : t->second.events) {
            if (e.step_id != s.step_id) continue;
            if (e.kind == EventKind::scheduled || e.kind == EventKind::rescheduled) {
              ++sa.attempts;
              sa.resources.push_back(e.resource_id);
            } else if (e.kind == EventKind::completed) {
              sa.outcome = "completed";
            } else if (e.kind == EventKind::failed) {
              sa.outcome = "failed";
              auto err = e.payload.find("error");
              row.errors.push_back(s.step_id + "#" + std::to_string(e.attempt) + ": " +
                                   (err == e.payload.end() ? "unspecified error" : err->second));
            }
          }
          row.steps.push_back(std::move(sa));
        }
      }
      rows.push_back(std::move(row));
    }
    return rows;
  });
}

// ---------------------------------------------------------------------------

json to_json(const ItemHit& h) {
  return {{"dataset_id", h.dataset_id}, {"item", h.item}};
}

json to_json(const AuthorshipReport& r) {
  json rows = json::array();
  for (const auto& e : r.executions) {
    rows.push_back({{"executor", e.executor.user_id},
                    {"executor_name", e.executor.name},
                    {"analysis_id", e.analysis_id},
                    {"version", e.version},
                    {"submitted_at", e.submitted_at},
                    {"status", to_string(e.status)}});
  }
  return {{"pipeline_id", r.pipeline_id},
          {"pipeline_name", r.pipeline_name},
          {"author", r.author.user_id},
          {"author_name", r.author.name},
          {"executions", rows}};
}

json to_json(const TimingReport& r) {
  json steps = json::array();
  for (const auto& s : r.steps) {
    steps.push_back({{"step_id", s.step_id}, {"attempts", s.attempts}, {"duration_ms", s.duration_ms}});
  }
  return {{"analysis_id", r.analysis_id},
          {"submitted_at", r.submitted_at},
          {"started", r.started ? json(*r.started) : json(nullptr)},
          {"finished", r.finished ? json(*r.finished) : json(nullptr)},
          {"total_ms", r.total_ms},
          {"steps", steps}};
}

json to_json(const LineageAnswer& r) {
  return {{"lfn", r.lfn},         {"analysis_id", r.analysis_id}, {"pipeline_id", r.pipeline_id},
          {"version", r.version}, {"step_id", r.step_id},         {"port", r.port},
          {"inputs", r.inputs}};
}

json to_json(const CorrectnessRow& r) {
  json steps = json::array();
  for (const auto& s : r.steps) {
    steps.push_back({{"step_id", s.step_id},
                     {"attempts", s.attempts},
                     {"outcome", s.outcome},
                     {"resources", s.resources}});
  }
  return {{"analysis_id", r.analysis_id}, {"executor", r.executor},
          {"status", to_string(r.status)}, {"steps", steps},
          {"produced", r.produced},       {"errors", r.errors}};
}

}  // namespace abase
