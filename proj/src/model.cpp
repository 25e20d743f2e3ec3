#include "abase/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <unordered_map>

namespace abase {

const char* type_name(const AttrValue& v) noexcept {
  switch (v.index()) {
    case 0: return "string";
    case 1: return "int";
    default: return "decimal";
  }
}

std::string render(const AttrValue& v) {
  if (auto* s = std::get_if<std::string>(&v)) return *s;
  if (auto* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, std::get<double>(v));
  return std::string(buf, r.ptr);
}

namespace {

std::optional<std::int64_t> parse_int(std::string_view s) {
  if (s.empty()) return std::nullopt;
  std::int64_t out = 0;
  const char* b = s.data();
  if (*b == '+') ++b;
  auto r = std::from_chars(b, s.data() + s.size(), out);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) return std::nullopt;
  return out;
}

std::optional<double> parse_decimal(std::string_view s) {
  if (s.empty()) return std::nullopt;
  double out = 0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(out)) {
    return std::nullopt;
  }
  return out;
}

}  // namespace

std::optional<AttrValue> parse_typed(std::string_view type, std::string_view text) {
  if (type == "string") return AttrValue(std::string(text));
  if (type == "int") {
    if (auto i = parse_int(text)) return AttrValue(*i);
    return std::nullopt;
  }
  if (type == "decimal") {
    if (auto d = parse_decimal(text)) return AttrValue(*d);
    return std::nullopt;
  }
  return std::nullopt;
}

AttrValue auto_typed(std::string_view text) {
  if (auto i = parse_int(text)) return *i;
  if (auto d = parse_decimal(text)) return *d;
  return std::string(text);
}

bool is_numeric(const AttrValue& v) noexcept { return v.index() != 0; }

double as_double(const AttrValue& v) {
  if (auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
  return std::get<double>(v);
}

const char* to_string(Role r) noexcept {
  switch (r) {
    case Role::neuroscientist: return "neuroscientist";
    case Role::data_provider: return "data_provider";
    case Role::admin: return "admin";
  }
  return "?";
}

std::optional<Role> parse_role(std::string_view s) noexcept {
  if (s == "neuroscientist") return Role::neuroscientist;
  if (s == "data_provider") return Role::data_provider;
  if (s == "admin") return Role::admin;
  return std::nullopt;
}

const PipelineVersion* PipelineRecord::find_version(int v) const noexcept {
  for (const auto& pv : versions) {
    if (pv.version == v) return &pv;
  }
  return nullptr;
}

const char* to_string(PortKind k) noexcept {
  switch (k) {
    case PortKind::file: return "file";
    case PortKind::dataset: return "dataset";
    case PortKind::scalar: return "scalar";
  }
  return "?";
}

std::optional<PortKind> parse_port_kind(std::string_view s) noexcept {
  if (s == "file") return PortKind::file;
  if (s == "dataset") return PortKind::dataset;
  if (s == "scalar") return PortKind::scalar;
  return std::nullopt;
}

const char* to_string(FileKind k) noexcept { return k == FileKind::image ? "image" : "data"; }

std::string Visibility::str() const {
  switch (kind) {
    case Kind::private_: return "private";
    case Kind::public_: return "public";
    case Kind::shared: {
      std::string out = "shared:";
      bool first = true;
      for (const auto& id : shared_with) {
        if (!first) out += ',';
        out += id.str();
        first = false;
      }
      return out;
    }
  }
  return "private";
}

std::optional<Visibility> Visibility::parse(std::string_view s) {
  if (s == "private") return private_only();
  if (s == "public") return public_all();
  if (s.rfind("shared:", 0) != 0 && s != "shared") return std::nullopt;
  std::set<Id> users;
  if (s.size() > 7) {
    std::string_view rest = s.substr(7);
    while (!rest.empty()) {
      auto comma = rest.find(',');
      auto tok = rest.substr(0, comma);
      if (!Id::well_formed(tok)) return std::nullopt;
      users.insert(Id(std::string(tok)));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
  }
  return shared(std::move(users));
}

const char* to_string(AnalysisStatus s) noexcept {
  switch (s) {
    case AnalysisStatus::submitted: return "submitted";
    case AnalysisStatus::running: return "running";
    case AnalysisStatus::completed: return "completed";
    case AnalysisStatus::failed: return "failed";
  }
  return "?";
}

std::optional<AnalysisStatus> parse_status(std::string_view s) noexcept {
  if (s == "submitted") return AnalysisStatus::submitted;
  if (s == "running") return AnalysisStatus::running;
  if (s == "completed") return AnalysisStatus::completed;
  if (s == "failed") return AnalysisStatus::failed;
  return std::nullopt;
}

bool legal_transition(AnalysisStatus from, AnalysisStatus to) noexcept {
  if (from == AnalysisStatus::submitted) return to == AnalysisStatus::running;
  if (from == AnalysisStatus::running) {
    return to == AnalysisStatus::completed || to == AnalysisStatus::failed;
  }
  return false;
}

const char* to_string(TargetKind k) noexcept {
  switch (k) {
    case TargetKind::analysis: return "analysis";
    case TargetKind::pipeline_version: return "pipeline_version";
    case TargetKind::dataset: return "dataset";
  }
  return "?";
}

std::optional<TargetKind> parse_target_kind(std::string_view s) noexcept {
  if (s == "analysis") return TargetKind::analysis;
  if (s == "pipeline_version") return TargetKind::pipeline_version;
  if (s == "dataset") return TargetKind::dataset;
  return std::nullopt;
}

bool can_access(const UserRecord& user, const DatasetRecord& dataset) noexcept {
  // Admins get no bypass.
  switch (dataset.visibility.kind) {
    case Visibility::Kind::public_: return true;
    case Visibility::Kind::private_: return user.user_id == dataset.owner;
    case Visibility::Kind::shared:
      return user.user_id == dataset.owner || dataset.visibility.shared_with.contains(user.user_id);
  }
  return false;
}

int next_version(const PipelineRecord& pipeline) noexcept {
  int max = 0;
  for (const auto& v : pipeline.versions) max = std::max(max, v.version);
  return max + 1;
}

std::string StepViolation::str() const { return rule + ": " + detail; }

std::vector<StepViolation> validate_steps(const std::vector<PipelineStep>& steps) {
  std::vector<StepViolation> out;
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const auto& s = steps[i];
    if (s.step_id.empty()) {
      out.push_back({s.step_id, "empty-id", "step at position " + std::to_string(i)});
      continue;
    }
    if (!index.emplace(s.step_id, i).second) {
      out.push_back({s.step_id, "duplicate-id", s.step_id});
    }
  }

  // Adjacency over resolvable dependencies only (dependency -> dependent).
  std::vector<std::vector<std::size_t>> deps(steps.size());
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const auto& s = steps[i];
    if (index.count(s.step_id) && index.at(s.step_id) != i) continue;
    if (s.step_order < 0) {
      out.push_back({s.step_id, "order", s.step_id + " has negative step_order"});
    }
    for (const auto& d : s.depends_on) {
      auto it = index.find(d);
      if (it == index.end()) {
        out.push_back({s.step_id, "unresolved-dependency", s.step_id + " depends on unknown " + d});
        continue;
      }
      deps[i].push_back(it->second);
    }
    std::set<std::string> seen_ports;
    for (const auto& p : s.input_ports) {
      if (!seen_ports.insert(p.name).second) {
        out.push_back({s.step_id, "duplicate-port", s.step_id + "." + p.name});
      }
      if (!p.source) continue;
      auto src = index.find(p.source->step_id);
      if (src == index.end() || !s.depends_on.contains(p.source->step_id)) {
        out.push_back({s.step_id, "binding",
                       s.step_id + "." + p.name + " bound to " + p.source->step_id +
                           " which is not among its dependencies"});
        continue;
      }
      const auto& outs = steps[src->second].output_ports;
      if (std::find(outs.begin(), outs.end(), p.source->port) == outs.end()) {
        out.push_back({s.step_id, "binding",
                       s.step_id + "." + p.name + " bound to missing output " +
                           p.source->step_id + "." + p.source->port});
      }
    }
  }

  // Tarjan SCC; every non-trivial component (or self-loop) is one cycle.
  const std::size_t n = steps.size();
  std::vector<int> idx(n, -1), low(n, 0), comp(n, -1);
  std::vector<bool> on_stack(n, false);
  std::vector<std::size_t> stack;
  int counter = 0, comps = 0;
  std::function<void(std::size_t)> strong = [&](std::size_t v) {
    idx[v] = low[v] = counter++;
    stack.push_back(v);
    on_stack[v] = true;
    for (auto w : deps[v]) {
      if (idx[w] < 0) {
        strong(w);
        low[v] = std::min(low[v], low[w]);
      } else if (on_stack[w]) {
        low[v] = std::min(low[v], idx[w]);
      }
    }
    if (low[v] == idx[v]) {
      std::size_t w;
      do {
        w = stack.back();
        stack.pop_back();
        on_stack[w] = false;
        comp[w] = comps;
      } while (w != v);
      ++comps;
    }
  };
  for (std::size_t v = 0; v < n; ++v) {
    if (idx[v] < 0) strong(v);
  }
  std::map<int, std::vector<std::string>> members;
  for (std::size_t v = 0; v < n; ++v) members[comp[v]].push_back(steps[v].step_id);
  std::vector<bool> cyclic(comps, false);
  for (std::size_t v = 0; v < n; ++v) {
    for (auto w : deps[v]) {
      if (comp[w] == comp[v]) cyclic[comp[v]] = true;
    }
  }
  for (auto& [c, ids] : members) {
    if (!cyclic[c]) continue;
    std::sort(ids.begin(), ids.end());
    std::string detail;
    for (const auto& id : ids) detail += (detail.empty() ? "" : ",") + id;
    out.push_back({ids.front(), "cycle", detail});
  }

  // Topological order check, skipped inside cycles where it has no meaning.
  for (std::size_t v = 0; v < n; ++v) {
    for (auto w : deps[v]) {
      if (comp[w] == comp[v]) continue;
      if (steps[w].step_order >= steps[v].step_order) {
        out.push_back({steps[v].step_id, "order",
                       steps[v].step_id + " (order " + std::to_string(steps[v].step_order) +
                           ") must follow " + steps[w].step_id + " (order " +
                           std::to_string(steps[w].step_order) + ")"});
      }
    }
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> unbound_ports(
    const std::vector<PipelineStep>& steps) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& s : steps) {
    for (const auto& p : s.input_ports) {
      if (!p.source) out.emplace_back(s.step_id, p.name);
    }
  }
  return out;
}

std::string make_lfn(std::string_view ns, std::string_view relative_path) {
  while (!relative_path.empty() && relative_path.front() == '/') relative_path.remove_prefix(1);
  std::string out = "lfn://";
  out += ns;
  out += '/';
  out += relative_path;
  return out;
}

bool is_lfn(std::string_view s) noexcept {
  if (s.rfind("lfn://", 0) != 0) return false;
  auto rest = s.substr(6);
  auto slash = rest.find('/');
  return slash != std::string_view::npos && slash > 0 && slash + 1 < rest.size();
}

}  // namespace abase
