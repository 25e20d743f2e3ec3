#include "abase/harness.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <queue>
#include <random>
#include <sstream>

#include "abase/digest.hpp"
#include "abase/error.hpp"

namespace abase {

namespace fs = std::filesystem;

const StepDef* PipelineDefinition::step(const std::string& id) const noexcept {
  for (const auto& s : steps) {
    if (s.step_id == id) return &s;
  }
  return nullptr;
}

// ---------------------------------------------------------------------------
// Definition text

namespace {

bool valid_ident(std::string_view s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
  });
}

std::vector<std::string> split_words(std::string_view line) {
  std::vector<std::string> out;
  std::istringstream in{std::string(line)};
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

std::vector<std::string> split_list(const std::string& joined) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : joined) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

ParseResult parse_pipeline(std::string_view text, const std::set<std::string>& known_algorithms) {
  PipelineDefinition def;
  std::vector<ParseViolation> bad;
  bool have_header = false;
  int header_line = 1;
  int line_no = 0;

  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    auto raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
    auto words = split_words(raw);
    if (words.empty()) continue;
    auto violation = [&](std::string msg) { bad.push_back({line_no, std::move(msg)}); };

    if (words[0] == "pipeline") {
      if (have_header) {
        violation("duplicate pipeline header");
      } else if (words.size() < 2) {
        violation("pipeline header needs a name");
      } else {
        std::string name = words[1];
        for (std::size_t i = 2; i < words.size(); ++i) name += " " + words[i];
        def.name = name;
        header_line = line_no;
      }
      have_header = true;
      continue;
    }
    if (words[0] != "step") {
      violation("unknown directive '" + words[0] + "'");
      continue;
    }
    if (!have_header) violation("step before pipeline header");
    if (words.size() < 4 || words[2] != "uses") {
      violation("expected 'step <id> uses <algorithm> ...'");
      continue;
    }
    StepDef s;
    s.line = line_no;
    s.step_id = words[1];
    s.algorithm = words[3];
    bool ok = true;
    if (!valid_ident(s.step_id)) {
      violation("invalid step id '" + s.step_id + "'");
      ok = false;
    }
    if (!known_algorithms.contains(s.algorithm)) {
      violation("unregistered algorithm '" + s.algorithm + "'");
      ok = false;
    }

    std::map<std::string, std::string> clauses;
    std::string current;
    for (std::size_t i = 4; i < words.size(); ++i) {
      const auto& w = words[i];
      if (w == "after" || w == "in" || w == "out") {
        if (clauses.contains(w)) {
          violation("repeated '" + w + "' clause");
          ok = false;
        }
        current = w;
        clauses[w];
        continue;
      }
      if (current.empty()) {
        violation("unexpected token '" + w + "'");
        ok = false;
        break;
      }
      clauses[current] += w;
    }
    if (clauses.contains("after")) {
      for (const auto& d : split_list(clauses["after"])) {
        if (!valid_ident(d)) {
          violation("invalid dependency '" + d + "'");
          ok = false;
        } else {
          s.depends_on.insert(d);
        }
      }
    }
    if (clauses.contains("in")) {
      for (const auto& spec : split_list(clauses["in"])) {
        auto colon = spec.find(':');
        if (colon == std::string::npos) {
          violation("input port '" + spec + "' needs a kind (<port>:<kind>)");
          ok = false;
          continue;
        }
        InputPort p;
        p.name = spec.substr(0, colon);
        auto rest = spec.substr(colon + 1);
        auto eq = rest.find('=');
        auto kind = parse_port_kind(rest.substr(0, eq));
        if (!valid_ident(p.name)) {
          violation("invalid port name '" + p.name + "'");
          ok = false;
          continue;
        }
        if (!kind) {
          violation("unknown port kind '" + rest.substr(0, eq) + "'");
          ok = false;
          continue;
        }
        p.kind = *kind;
        if (eq != std::string::npos) {
          auto src = rest.substr(eq + 1);
          auto dot = src.find('.');
          if (dot == std::string::npos || !valid_ident(src.substr(0, dot)) ||
              !valid_ident(src.substr(dot + 1))) {
            violation("binding '" + src + "' must be <step>.<port>");
            ok = false;
            continue;
          }
          if (p.kind != PortKind::file) {
            violation("bound port '" + p.name + "' must have kind file");
            ok = false;
            continue;
          }
          p.source = PortRef{src.substr(0, dot), src.substr(dot + 1)};
        }
        s.inputs.push_back(std::move(p));
      }
    }
    if (!clauses.contains("out") || clauses["out"].empty()) {
      violation("step has no outputs");
      ok = false;
    } else {
      std::set<std::string> seen;
      for (const auto& o : split_list(clauses["out"])) {
        if (!valid_ident(o)) {
          violation("invalid output port '" + o + "'");
          ok = false;
        } else if (!seen.insert(o).second) {
          violation("duplicate output port '" + o + "'");
          ok = false;
        } else {
          s.outputs.push_back(o);
        }
      }
    }
    if (ok) def.steps.push_back(std::move(s));
  }

  if (!have_header) bad.push_back({1, "missing pipeline header"});
  if (bad.empty() && def.steps.empty()) bad.push_back({header_line, "pipeline has no steps"});
  if (!bad.empty()) return bad;

  std::map<std::string, Id> placeholder;
  for (const auto& s : def.steps) placeholder.emplace(s.algorithm, Id());
  std::map<std::string, int> line_of, repeat_of;
  for (const auto& s : def.steps) {
    if (!line_of.emplace(s.step_id, s.line).second) repeat_of.emplace(s.step_id, s.line);
  }
  for (const auto& v : validate_steps(to_steps(def, placeholder))) {
    const auto& lines = v.rule == "duplicate-id" ? repeat_of : line_of;
    auto it = lines.find(v.step_id);
    bad.push_back({it == lines.end() ? 0 : it->second, v.str()});
  }
  if (!bad.empty()) {
    std::stable_sort(bad.begin(), bad.end(),
                     [](const ParseViolation& a, const ParseViolation& b) { return a.line < b.line; });
    return bad;
  }
  return def;
}

std::string format_pipeline(const PipelineDefinition& def) {
  std::ostringstream out;
  out << "pipeline " << def.name << "\n";
  for (const auto& s : def.steps) {
    out << "step " << s.step_id << " uses " << s.algorithm;
    if (!s.depends_on.empty()) {
      out << " after ";
      bool first = true;
      for (const auto& d : s.depends_on) {
        out << (first ? "" : ",") << d;
        first = false;
      }
    }
    if (!s.inputs.empty()) {
      out << " in ";
      for (std::size_t i = 0; i < s.inputs.size(); ++i) {
        const auto& p = s.inputs[i];
        out << (i ? "," : "") << p.name << ":" << to_string(p.kind);
        if (p.source) out << "=" << p.source->step_id << "." << p.source->port;
      }
    }
    out << " out ";
    for (std::size_t i = 0; i < s.outputs.size(); ++i) out << (i ? "," : "") << s.outputs[i];
    out << "\n";
  }
  return out.str();
}

std::vector<PipelineStep> to_steps(const PipelineDefinition& def,
                                   const std::map<std::string, Id>& algorithm_ids) {
  std::vector<PipelineStep> out;
  int order = 0;
  for (const auto& s : def.steps) {
    auto alg = algorithm_ids.find(s.algorithm);
    if (alg == algorithm_ids.end()) {
      throw Error(ErrorKind::not_found, "unregistered algorithm '" + s.algorithm + "'");
    }
    PipelineStep p;
    p.step_id = s.step_id;
    p.algorithm_id = alg->second;
    p.step_order = order++;
    p.depends_on = s.depends_on;
    p.input_ports = s.inputs;
    p.output_ports = s.outputs;
    out.push_back(std::move(p));
  }
  return out;
}

PipelineDefinition from_snapshot(const PipelineSnapshot& snapshot) {
  PipelineDefinition def;
  def.name = snapshot.name;
  for (const auto& p : snapshot.steps) {
    StepDef s;
    s.step_id = p.step_id;
    const auto* alg = snapshot.algorithm(p.algorithm_id);
    s.algorithm = alg ? alg->name : p.algorithm_id.str();
    s.depends_on = p.depends_on;
    s.inputs = p.input_ports;
    s.outputs = p.output_ports;
    def.steps.push_back(std::move(s));
  }
  return def;
}

// ---------------------------------------------------------------------------
// Toy algorithms

namespace {

std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) {
      out.push_back(text.substr(pos));
      break;
    }
    out.push_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  return out;
}

std::optional<double> leading_number(std::string_view line) {
  auto start = line.find_first_not_of(" \t");
  if (start == std::string_view::npos) return std::nullopt;
  line = line.substr(start);
  auto end = line.find_first_of(" \t,;");
  auto field = line.substr(0, end);
  double v = 0;
  auto [p, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || p != field.data() + field.size()) return std::nullopt;
  return v;
}

std::string line_count(const AlgorithmCall& call) {
  std::size_t n = 0;
  for (const auto& f : call.files) n += lines_of(f.content).size();
  return std::to_string(n) + "\n";
}

std::string concatenate(const AlgorithmCall& call) {
  std::string out;
  for (const auto& f : call.files) out += f.content;
  return out;
}

std::string checksum_stamp(const AlgorithmCall& call) {
  std::string out;
  for (const auto& f : call.files) out += sha256_hex(f.content) + "  " + f.filename + "\n";
  return out;
}

std::string threshold_filter(const AlgorithmCall& call) {
  auto t = call.scalars.find("threshold");
  if (t == call.scalars.end() || !is_numeric(t->second)) {
    throw Error(ErrorKind::validation, "threshold-filter needs a numeric 'threshold' input");
  }
  double threshold = as_double(t->second);
  std::string out;
  for (const auto& f : call.files) {
    for (auto line : lines_of(f.content)) {
      auto v = leading_number(line);
      if (v && *v >= threshold) {
        out += line;
        out += '\n';
      }
    }
  }
  return out;
}

}  // namespace

const std::map<std::string, ToyAlgorithm>& toy_algorithms() {
  static const std::map<std::string, ToyAlgorithm> registry = {
      {"line-count", line_count},
      {"concatenate", concatenate},
      {"checksum-stamp", checksum_stamp},
      {"threshold-filter", threshold_filter},
  };
  return registry;
}

// ---------------------------------------------------------------------------
// Resources and planning

std::vector<SimResource> make_resources(std::size_t n, std::uint64_t seed,
                                        const std::vector<std::string>& step_ids,
                                        double failure_rate) {
  static constexpr double kSpeeds[] = {0.5, 1.0, 1.5, 2.0};
  std::mt19937_64 rng(seed);
  std::vector<std::string> sorted = step_ids;
  std::sort(sorted.begin(), sorted.end());
  std::vector<SimResource> out;
  for (std::size_t i = 0; i < n; ++i) {
    SimResource r;
    r.resource_id = "r" + std::to_string(i + 1);
    r.speed_factor = kSpeeds[rng() % 4];
    for (const auto& s : sorted) {
      for (int a = 1; a <= kMaxAttempts; ++a) {
        double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        if (u < failure_rate) r.failure_plan.emplace(s, a);
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

std::vector<const SimResource*> sorted_resources(const std::vector<SimResource>& resources) {
  std::vector<const SimResource*> out;
  for (const auto& r : resources) out.push_back(&r);
  std::sort(out.begin(), out.end(), [](const SimResource* a, const SimResource* b) {
    // r2 before r10
    if (a->resource_id.size() != b->resource_id.size()) {
      return a->resource_id.size() < b->resource_id.size();
    }
    return a->resource_id < b->resource_id;
  });
  return out;
}

}  // namespace

SchedulePlan make_plan(const PipelineDefinition& def, const std::vector<SimResource>& resources) {
  if (resources.empty()) throw Error(ErrorKind::validation, "no resources to schedule on");
  auto order = sorted_resources(resources);
  std::map<std::string, int> indegree;
  std::map<std::string, std::vector<std::string>> dependents;
  for (const auto& s : def.steps) indegree[s.step_id] = 0;
  for (const auto& s : def.steps) {
    for (const auto& d : s.depends_on) {
      if (!indegree.contains(d)) {
        throw Error(ErrorKind::validation, "step " + s.step_id + " depends on unknown " + d);
      }
      ++indegree[s.step_id];
      dependents[d].push_back(s.step_id);
    }
  }
  std::priority_queue<std::string, std::vector<std::string>, std::greater<>> ready;
  for (const auto& [id, deg] : indegree) {
    if (deg == 0) ready.push(id);
  }
  SchedulePlan plan;
  while (!ready.empty()) {
    auto id = ready.top();
    ready.pop();
    plan.assignments.emplace_back(id, order[plan.assignments.size() % order.size()]->resource_id);
    for (const auto& next : dependents[id]) {
      if (--indegree[next] == 0) ready.push(next);
    }
  }
  if (plan.assignments.size() != def.steps.size()) {
    throw Error(ErrorKind::validation, "pipeline steps form a cycle");
  }
  return plan;
}

std::int64_t attempt_duration_ms(std::uint64_t input_bytes, double speed_factor) {
  return std::llround((100.0 + static_cast<double>(input_bytes) / 1024.0) / speed_factor);
}

// ---------------------------------------------------------------------------
// Execution

std::string load_local(const FileRef& ref) {
  constexpr std::string_view scheme = "file://";
  if (ref.location.rfind(scheme, 0) != 0) {
    throw Error(ErrorKind::io, "cannot fetch " + ref.location + " (only file:// is reachable)");
  }
  fs::path path = ref.location.substr(scheme.size());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

namespace {

void write_file(const fs::path& path, std::string_view bytes) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
}

std::string derived_lfn(const Id& aid, std::string_view rest) {
  return make_lfn("derived", aid.str() + "/" + std::string(rest));
}

}  // namespace

ExecutionResult execute(const SchedulePlan& plan, const PipelineDefinition& def,
                        const std::vector<InputValue>& inputs,
                        const std::vector<SimResource>& resources, const EventSink& sink,
                        const ExecutionContext& ctx) {
  if (resources.empty()) throw Error(ErrorKind::validation, "no resources to execute on");
  auto order = sorted_resources(resources);
  std::map<std::string, std::size_t> slot;
  for (std::size_t i = 0; i < order.size(); ++i) slot[order[i]->resource_id] = i;

  ExecutionResult result;
  Timestamp clock = ctx.origin;
  std::map<std::string, std::map<std::string, OutputValue>> produced;  // step -> port -> output
  std::set<std::string> completed;
  std::ostringstream log;

  auto emit = [&](ExecutionEvent e) {
    log << e.timestamp.iso() << " " << e.step_id << " #" << e.attempt << " " << to_string(e.kind)
        << " " << e.resource_id;
    for (const auto& [k, v] : e.payload) log << " " << k << "=" << v;
    log << "\n";
    result.events.push_back(e);
    if (sink) sink(e);
  };

  for (const auto& [step_id, initial_resource] : plan.assignments) {
    const auto* step = def.step(step_id);
    if (!step) throw Error(ErrorKind::validation, "plan names unknown step " + step_id);
    bool blocked = std::any_of(step->depends_on.begin(), step->depends_on.end(),
                               [&](const std::string& d) { return !completed.contains(d); });
    if (blocked) {
      result.skipped.insert(step_id);
      continue;
    }

    // Gather inputs. A load problem fails the step without retrying.
    AlgorithmCall call;
    std::string input_error;
    try {
      for (const auto& port : step->inputs) {
        if (port.source) {
          const auto& out = produced.at(port.source->step_id).at(port.source->port);
          const auto& f = std::get<FileRef>(out.value);
          call.files.push_back({port.name, f.filename, ctx.loader(f)});
          continue;
        }
        for (const auto& in : inputs) {
          if (in.step_id != step_id || in.port != port.name) continue;
          if (const auto* f = std::get_if<FileRef>(&in.value)) {
            call.files.push_back({port.name, f->filename, ctx.loader(*f)});
          } else if (const auto* d = std::get_if<DatasetSelection>(&in.value)) {
            if (!ctx.datasets) throw Error(ErrorKind::state, "no dataset resolver");
            for (const auto& f : ctx.datasets(*d)) {
              call.files.push_back({port.name, f.filename, ctx.loader(f)});
            }
          } else {
            call.scalars[port.name] = std::get<AttrValue>(in.value);
          }
        }
      }
    } catch (const std::exception& ex) {
      input_error = ex.what();
    }
    std::uint64_t bytes = 0;
    for (const auto& f : call.files) bytes += f.content.size();

    std::size_t idx = slot.at(initial_resource);
    bool done = false;
    std::string last_error;
    for (int attempt = 1; attempt <= kMaxAttempts && !done; ++attempt) {
      const auto& r = *order[idx];
      auto event = [&](EventKind kind, Timestamp at, std::map<std::string, std::string> payload) {
        emit({0, step_id, attempt, kind, r.resource_id, at, std::move(payload)});
      };
      event(attempt == 1 ? EventKind::scheduled : EventKind::rescheduled, clock, {});
      event(EventKind::started, clock, {});
      auto d = attempt_duration_ms(bytes, r.speed_factor);
      Timestamp mid{clock.ms + d / 2};
      Timestamp end{clock.ms + d};
      event(EventKind::status, mid,
            {{"note", "running " + step->algorithm + " on " + std::to_string(call.files.size()) +
                          " file(s)"}});
      clock = end;

      std::string error = input_error;
      bool retryable = false;
      std::string content;
      if (error.empty() && r.failure_plan.contains({step_id, attempt})) {
        error = "injected failure on " + r.resource_id;
        retryable = true;
      }
      if (error.empty()) {
        auto alg = toy_algorithms().find(step->algorithm);
        if (alg == toy_algorithms().end()) {
          error = "no implementation for algorithm '" + step->algorithm + "'";
        } else {
          try {
            content = alg->second(call);
          } catch (const std::exception& ex) {
            error = ex.what();
          }
        }
      }
      if (!error.empty()) {
        event(EventKind::failed, end, {{"error", error}});
        last_error = error;
        if (!retryable) break;
        idx = (idx + 1) % order.size();
        continue;
      }

      std::map<std::string, std::string> payload;
      for (const auto& port : step->outputs) {
        auto path = ctx.work_dir / step_id / port;
        write_file(path, content);
        FileRef f;
        f.lfn = derived_lfn(ctx.analysis_id, step_id + "/" + port);
        f.filename = port;
        f.location = "file://" + fs::absolute(path).lexically_normal().string();
        f.kind = FileKind::data;
        f.size_bytes = content.size();
        f.checksum = sha256_hex(content);
        OutputValue o{step_id, port, attempt, f, end};
        produced[step_id][port] = o;
        result.outputs.push_back(o);
        payload["output." + port] = f.lfn;
      }
      event(EventKind::completed, end, std::move(payload));
      completed.insert(step_id);
      done = true;
    }
    if (!done) {
      result.status = AnalysisStatus::failed;
      if (result.error.empty()) result.error = "step " + step_id + ": " + last_error;
    }
  }

  std::set<std::string> has_dependents;
  for (const auto& s : def.steps) has_dependents.insert(s.depends_on.begin(), s.depends_on.end());
  for (const auto& o : result.outputs) {
    if (!has_dependents.contains(o.step_id)) result.sink_outputs.push_back(o);
  }

  auto log_text = log.str();
  auto log_path = ctx.work_dir / "logs" / "execution.log";
  write_file(log_path, log_text);
  FileRef lr;
  lr.lfn = derived_lfn(ctx.analysis_id, "logs/execution.log");
  lr.filename = "execution.log";
  lr.location = "file://" + fs::absolute(log_path).lexically_normal().string();
  lr.size_bytes = log_text.size();
  lr.checksum = sha256_hex(log_text);
  result.log_refs.push_back(std::move(lr));
  return result;
}

// ---------------------------------------------------------------------------
// Orchestration

PipelineService::PipelineService(Persistency& persistency, Provenance& provenance,
                                 fs::path work_root)
    : persistency_(persistency), provenance_(provenance), work_root_(std::move(work_root)) {}

void PipelineService::resolve_file_inputs(std::vector<InputValue>& inputs) const {
  persistency_.store().read([&](const Catalog& c) {
    for (auto& in : inputs) {
      auto* f = std::get_if<FileRef>(&in.value);
      if (!f || !f->location.empty()) continue;
      if (auto out = c.output_by_lfn.find(f->lfn); out != c.output_by_lfn.end()) {
        const auto& a = c.analyses.at(out->second.first);
        if (out->second.second < a.outputs.size()) {
          if (const auto* known = std::get_if<FileRef>(&a.outputs[out->second.second].value)) {
            *f = *known;
          }
        }
        continue;
      }
      auto did = dataset_of_lfn(f->lfn);
      const auto* d = did ? c.dataset(*did) : nullptr;
      if (!d) continue;
      bool found = false;
      for (const auto& item : d->items) {
        for (const auto* list : {&item.image_files, &item.data_files}) {
          for (const auto& known : *list) {
            if (known.lfn == f->lfn) {
              *f = known;
              found = true;
            }
          }
        }
      }
      if (!found) throw Error(ErrorKind::not_found, "unknown dataset file " + f->lfn);
    }
  });
}

AnalysisRecord PipelineService::submit_analysis(const Id& caller, const Id& pipeline_id,
                                                int version, std::vector<InputValue> inputs,
                                                const RunOptions& options) {
  resolve_file_inputs(inputs);
  AnalysisRecord request;
  request.user = caller;
  request.pipeline_id = pipeline_id;
  request.version = version;
  request.input_values = std::move(inputs);
  auto analysis = persistency_.store_analysis(std::move(request));
  auto trace = provenance_.open_trace(analysis);
  persistency_.update_analysis_status(analysis.analysis_id, AnalysisStatus::running);

  auto def = from_snapshot(trace.snapshot);
  std::vector<std::string> ids;
  for (const auto& s : def.steps) ids.push_back(s.step_id);
  auto resources = options.explicit_resources.empty()
                       ? make_resources(std::max<std::size_t>(options.resources, 1), options.seed,
                                        ids, options.failure_rate)
                       : options.explicit_resources;
  auto plan = make_plan(def, resources);

  ExecutionContext ctx;
  ctx.work_dir = work_root_ / analysis.analysis_id.str();
  ctx.analysis_id = analysis.analysis_id;
  ctx.origin = analysis.submitted_at;
  ctx.datasets = [this](const DatasetSelection& sel) {
    return persistency_.store().read([&](const Catalog& c) {
      std::vector<FileRef> files;
      const auto* d = c.dataset(sel.dataset_id);
      if (!d) throw Error(ErrorKind::not_found, "unknown dataset " + sel.dataset_id.str());
      std::set<Id> wanted(sel.item_ids.begin(), sel.item_ids.end());
      for (const auto& item : d->items) {
        if (!wanted.empty() && !wanted.contains(item.item_id)) continue;
        files.insert(files.end(), item.image_files.begin(), item.image_files.end());
        files.insert(files.end(), item.data_files.begin(), item.data_files.end());
      }
      return files;
    });
  };
  const auto aid = analysis.analysis_id;
  auto result = execute(plan, def, analysis.input_values, resources,
                        [&](const ExecutionEvent& e) { provenance_.record_event(aid, e); }, ctx);
  provenance_.close_trace(aid, result.outputs, result.log_refs, result.status);
  return persistency_.analysis(aid);
}

}  // namespace abase
