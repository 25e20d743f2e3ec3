#include "abase/store.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>
#include <zlib.h>

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <tuple>

#include "abase/error.hpp"

namespace fs = std::filesystem;

namespace abase {

const char* to_string(Table t) noexcept {
  switch (t) {
    case Table::users: return "users";
    case Table::pipelines: return "pipelines";
    case Table::algorithms: return "algorithms";
    case Table::steps: return "steps";
    case Table::datasets: return "datasets";
    case Table::items: return "items";
    case Table::analyses: return "analyses";
    case Table::input_values: return "input_values";
    case Table::outputs: return "outputs";
    case Table::annotations: return "annotations";
    case Table::provenance_events: return "provenance_events";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Catalog

const UserRecord* Catalog::user(const Id& id) const {
  auto it = users.find(id);
  return it == users.end() ? nullptr : &it->second;
}

const DatasetRecord* Catalog::dataset(const Id& id) const {
  auto it = datasets.find(id);
  return it == datasets.end() ? nullptr : &it->second;
}

const DataItemRecord* Catalog::item(const Id& id) const {
  auto it = item_index.find(id);
  if (it == item_index.end()) return nullptr;
  const auto* d = dataset(it->second.first);
  return d ? &d->items[it->second.second] : nullptr;
}

const std::vector<PipelineStep>* Catalog::steps_of(const Id& pipeline, int version) const {
  auto it = steps.find({pipeline, version});
  return it == steps.end() ? nullptr : &it->second;
}

const DatasetRecord* Catalog::dataset_by_owner_name(const Id& owner,
                                                    const std::string& name) const {
  for (const auto& [id, d] : datasets) {
    if (d.owner == owner && d.name == name) return &d;
  }
  return nullptr;
}

namespace {

std::string record_key(Table table, const json& r) {
  switch (table) {
    case Table::users: return r.at("user_id").get<std::string>();
    case Table::pipelines: return r.at("pipeline_id").get<std::string>();
    case Table::algorithms: return r.at("algorithm_id").get<std::string>();
    case Table::steps:
      return r.at("pipeline_id").get<std::string>() + "@" +
             std::to_string(r.at("version").get<int>()) + "#" + r.at("step_id").get<std::string>();
    case Table::datasets: return r.at("dataset_id").get<std::string>();
    case Table::items: return r.at("item_id").get<std::string>();
    case Table::analyses: return r.at("analysis_id").get<std::string>();
    case Table::input_values:
    case Table::outputs: {
      char buf[16];
      std::snprintf(buf, sizeof buf, "%08zu", r.at("index").get<std::size_t>());
      return r.at("analysis_id").get<std::string>() + "#" + buf;
    }
    case Table::annotations: return r.at("annotation_id").get<std::string>();
    case Table::provenance_events: {
      auto aid = r.at("analysis_id").get<std::string>();
      auto kind = r.at("kind").get<std::string>();
      if (kind == "event") {
        char buf[24];
        std::snprintf(buf, sizeof buf, "%012llu",
                      static_cast<unsigned long long>(r.at("event").at("seq").get<std::uint64_t>()));
        return aid + "/event/" + buf;
      }
      return aid + "/" + kind;
    }
  }
  return {};
}

template <class T>
void put_at(std::vector<T>& v, std::size_t index, T value) {
  if (index < v.size()) {
    v[index] = std::move(value);
  } else {
    v.resize(index);
    v.push_back(std::move(value));
  }
}

}  // namespace

void Catalog::apply(Table table, const json& r) {
  raw[to_string(table)][record_key(table, r)] = r;
  switch (table) {
    case Table::users: {
      auto u = r.get<UserRecord>();
      users[u.user_id] = std::move(u);
      break;
    }
    case Table::pipelines: {
      auto p = r.get<PipelineRecord>();
      pipelines[p.pipeline_id] = std::move(p);
      break;
    }
    case Table::algorithms: {
      auto a = r.get<AlgorithmRecord>();
      algorithms[a.algorithm_id] = std::move(a);
      break;
    }
    case Table::steps: {
      auto s = r.get<PipelineStep>();
      auto& list = steps[{s.pipeline_id, s.version}];
      auto it = std::find_if(list.begin(), list.end(),
                             [&](const PipelineStep& x) { return x.step_id == s.step_id; });
      if (it != list.end()) {
        *it = std::move(s);
      } else {
        list.push_back(std::move(s));
      }
      std::stable_sort(list.begin(), list.end(), [](const PipelineStep& a, const PipelineStep& b) {
        return std::tie(a.step_order, a.step_id) < std::tie(b.step_order, b.step_id);
      });
      break;
    }
    case Table::datasets: {
      auto d = r.get<DatasetRecord>();
      auto it = datasets.find(d.dataset_id);
      if (it != datasets.end()) d.items = std::move(it->second.items);
      datasets[d.dataset_id] = std::move(d);
      break;
    }
    case Table::items: {
      auto item = r.get<DataItemRecord>();
      auto dit = datasets.find(item.dataset_id);
      if (dit == datasets.end()) break;
      auto& items = dit->second.items;
      auto idx = item_index.find(item.item_id);
      if (idx != item_index.end() && idx->second.first == item.dataset_id) {
        items[idx->second.second] = std::move(item);
      } else {
        item_index[item.item_id] = {item.dataset_id, items.size()};
        items.push_back(std::move(item));
      }
      break;
    }
    case Table::analyses: {
      auto a = r.get<AnalysisRecord>();
      auto it = analyses.find(a.analysis_id);
      if (it != analyses.end()) {
        a.input_values = std::move(it->second.input_values);
        a.outputs = std::move(it->second.outputs);
      }
      analyses[a.analysis_id] = std::move(a);
      break;
    }
    case Table::input_values: {
      auto it = analyses.find(r.at("analysis_id").get<Id>());
      if (it == analyses.end()) break;
      put_at(it->second.input_values, r.at("index").get<std::size_t>(),
             r.at("value").get<InputValue>());
      break;
    }
    case Table::outputs: {
      auto aid = r.at("analysis_id").get<Id>();
      auto it = analyses.find(aid);
      if (it == analyses.end()) break;
      auto index = r.at("index").get<std::size_t>();
      auto ov = r.at("value").get<OutputValue>();
      if (auto* f = std::get_if<FileRef>(&ov.value)) output_by_lfn[f->lfn] = {aid, index};
      put_at(it->second.outputs, index, std::move(ov));
      break;
    }
    case Table::annotations: {
      auto a = r.get<AnnotationRecord>();
      auto key = std::string(to_string(a.target_kind)) + ":" + a.target;
      if (!annotations.contains(a.annotation_id)) {
        annotations_by_target[key].push_back(a.annotation_id);
      }
      annotations[a.annotation_id] = std::move(a);
      break;
    }
    case Table::provenance_events: {
      auto aid = r.at("analysis_id").get<Id>();
      auto kind = r.at("kind").get<std::string>();
      if (kind == "open") {
        ProvenanceTrace t;
        t.analysis_id = aid;
        t.user = r.at("user").get<Id>();
        t.submitted_at = r.at("submitted_at").get<Timestamp>();
        t.snapshot = r.at("snapshot").get<PipelineSnapshot>();
        t.inputs = r.at("inputs").get<std::vector<InputValue>>();
        traces[aid] = std::move(t);
      } else if (kind == "event") {
        auto it = traces.find(aid);
        if (it == traces.end()) break;
        auto e = r.at("event").get<ExecutionEvent>();
        auto& events = it->second.events;
        auto pos = std::find_if(events.begin(), events.end(),
                                [&](const ExecutionEvent& x) { return x.seq == e.seq; });
        if (pos != events.end()) {
          *pos = std::move(e);
        } else {
          events.push_back(std::move(e));
        }
      } else if (kind == "close") {
        auto it = traces.find(aid);
        if (it == traces.end()) break;
        it->second.closed = true;
        it->second.final_status = parse_status(r.at("final_status").get<std::string>());
      }
      break;
    }
  }
}

json Catalog::dump() const {
  json out = json::object();
  for (auto t : kAllTables) {
    auto it = raw.find(to_string(t));
    out[to_string(t)] = it == raw.end() ? json::object() : json(it->second);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Log line codec

std::string encode_log_line(std::string_view payload) {
  auto crc = crc32(0L, reinterpret_cast<const Bytef*>(payload.data()),
                   static_cast<uInt>(payload.size()));
  char head[40];
  int n = std::snprintf(head, sizeof head, "%zu\t%08lx\t", payload.size(),
                        static_cast<unsigned long>(crc));
  std::string line(head, static_cast<std::size_t>(n));
  line += payload;
  line += '\n';
  return line;
}

std::optional<std::string> decode_log_line(std::string_view line) {
  auto t1 = line.find('\t');
  if (t1 == std::string_view::npos) return std::nullopt;
  auto t2 = line.find('\t', t1 + 1);
  if (t2 == std::string_view::npos || t2 - t1 - 1 != 8) return std::nullopt;
  std::size_t len = 0;
  auto r = std::from_chars(line.data(), line.data() + t1, len);
  if (r.ec != std::errc() || r.ptr != line.data() + t1) return std::nullopt;
  unsigned long crc = 0;
  auto r2 = std::from_chars(line.data() + t1 + 1, line.data() + t2, crc, 16);
  if (r2.ec != std::errc() || r2.ptr != line.data() + t2) return std::nullopt;
  auto payload = line.substr(t2 + 1);
  if (payload.size() != len) return std::nullopt;
  auto actual = crc32(0L, reinterpret_cast<const Bytef*>(payload.data()),
                      static_cast<uInt>(payload.size()));
  if (actual != crc) return std::nullopt;
  return std::string(payload);
}

// ---------------------------------------------------------------------------
// Store

namespace {

struct ParsedLine {
  std::uint64_t offset;  // byte offset of the line start
  json payload;
};

/// Reads well-formed lines; returns the byte length of the valid prefix.
std::uint64_t read_log(const fs::path& path, std::vector<ParsedLine>& out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return 0;
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string data = ss.str();
  std::uint64_t pos = 0;
  while (pos < data.size()) {
    auto nl = data.find('\n', pos);
    if (nl == std::string::npos) break;
    auto payload = decode_log_line(std::string_view(data).substr(pos, nl - pos));
    if (!payload) break;
    auto j = json::parse(*payload, nullptr, false);
    if (j.is_discarded() || !j.is_object()) break;
    out.push_back({pos, std::move(j)});
    pos = nl + 1;
  }
  return pos;
}

int open_append(const fs::path& path) {
  int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) {
    throw Error(ErrorKind::io, "cannot open " + path.string() + ": " + std::strerror(errno));
  }
  return fd;
}

void truncate_to(const fs::path& path, std::uint64_t size) {
  std::error_code ec;
  fs::resize_file(path, size, ec);
  if (ec) throw Error(ErrorKind::io, "cannot truncate " + path.string() + ": " + ec.message());
}

}  // namespace

Store::Store(fs::path root, StoreOptions options) : root_(std::move(root)), options_(options) {
  std::error_code ec;
  fs::create_directories(root_ / "tables", ec);
  if (ec) throw Error(ErrorKind::io, "cannot create store at " + root_.string() + ": " + ec.message());

  lock_fd_ = ::open((root_ / "LOCK").c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (lock_fd_ < 0) throw Error(ErrorKind::io, "cannot open store lock: " + std::string(std::strerror(errno)));
  if (::flock(lock_fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(lock_fd_);
    lock_fd_ = -1;
    throw Error(ErrorKind::state, "store is locked by another process: " + root_.string());
  }

  auto manifest = root_ / "store.manifest";
  if (fs::exists(manifest)) {
    std::ifstream in(manifest);
    std::string header;
    std::getline(in, header);
    if (header != kManifestHeader) {
      close();
      throw Error(ErrorKind::state, "unsupported store format: '" + header + "'");
    }
  } else {
    std::ofstream out(manifest);
    out << kManifestHeader << "\n";
    out << "tables";
    for (auto t : kAllTables) out << ' ' << to_string(t);
    out << " commits\n";
  }

  try {
    load();
  } catch (...) {
    close();
    throw;
  }
  for (auto t : kAllTables) {
    fds_[t] = open_append(root_ / "tables" / (std::string(to_string(t)) + ".log"));
  }
  commit_fd_ = open_append(root_ / "tables" / "commits.log");
}

Store::~Store() { close(); }

void Store::close() {
  for (auto& [t, fd] : fds_) {
    if (fd >= 0) ::close(fd);
  }
  fds_.clear();
  if (commit_fd_ >= 0) ::close(commit_fd_);
  commit_fd_ = -1;
  if (lock_fd_ >= 0) {
    ::flock(lock_fd_, LOCK_UN);
    ::close(lock_fd_);
  }
  lock_fd_ = -1;
}

void Store::load() {
  auto commits_path = root_ / "tables" / "commits.log";
  std::vector<ParsedLine> commits;
  auto commits_valid = read_log(commits_path, commits);
  std::uint64_t committed = 0;
  std::uint64_t commits_keep = commits_valid;
  for (const auto& c : commits) {
    auto txn = c.payload.value("txn", std::uint64_t{0});
    if (txn != committed + 1) {
      commits_keep = c.offset;
      warnings_.push_back("commits.log: non-contiguous txn " + std::to_string(txn) + ", truncated");
      break;
    }
    committed = txn;
  }
  if (fs::exists(commits_path) && fs::file_size(commits_path) != commits_keep) {
    warnings_.push_back("commits.log: corrupt or torn tail truncated at byte " +
                        std::to_string(commits_keep));
    truncate_to(commits_path, commits_keep);
  }

  struct Pending {
    std::uint64_t txn, i;
    Table table;
    json rec;
  };
  std::vector<Pending> pending;
  for (auto t : kAllTables) {
    auto path = root_ / "tables" / (std::string(to_string(t)) + ".log");
    if (!fs::exists(path)) continue;
    std::vector<ParsedLine> lines;
    auto valid = read_log(path, lines);
    std::uint64_t keep = valid;
    for (const auto& l : lines) {
      auto txn = l.payload.value("txn", std::uint64_t{0});
      if (txn == 0 || txn > committed || !l.payload.contains("rec")) {
        keep = l.offset;
        break;
      }
      pending.push_back({txn, l.payload.value("i", std::uint64_t{0}), t, l.payload["rec"]});
    }
    if (fs::file_size(path) != keep) {
      warnings_.push_back(std::string(to_string(t)) +
                          ".log: uncommitted or corrupt tail truncated at byte " +
                          std::to_string(keep));
      truncate_to(path, keep);
    }
  }
  std::stable_sort(pending.begin(), pending.end(), [](const Pending& a, const Pending& b) {
    return std::tie(a.txn, a.i) < std::tie(b.txn, b.i);
  });
  for (const auto& p : pending) catalog_.apply(p.table, p.rec);
  next_txn_ = committed + 1;
}

void Store::append(int fd, std::string_view bytes) {
  if (options_.crash_after_bytes) {
    auto budget = *options_.crash_after_bytes;
    if (bytes_written_ + bytes.size() >= budget) {
      auto part = budget > bytes_written_ ? budget - bytes_written_ : 0;
      if (part > 0) {
        auto n = ::write(fd, bytes.data(), part);
        (void)n;
      }
      std::_Exit(86);
    }
  }
  while (!bytes.empty()) {
    auto n = ::write(fd, bytes.data(), bytes.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorKind::io, std::string("store write failed: ") + std::strerror(errno));
    }
    bytes.remove_prefix(static_cast<std::size_t>(n));
    bytes_written_ += static_cast<std::uint64_t>(n);
  }
}

void Store::commit(const Txn& txn) {
  if (txn.empty()) return;
  if (commit_fd_ < 0) throw Error(ErrorKind::state, "store is closed");
  const auto id = next_txn_;
  std::map<Table, std::string> batches;
  std::uint64_t i = 0;
  for (const auto& [table, rec] : txn.records()) {
    json line = {{"txn", id}, {"i", i++}, {"rec", rec}};
    batches[table] += encode_log_line(line.dump());
  }
  for (const auto& [table, bytes] : batches) append(fds_.at(table), bytes);
  if (options_.sync) {
    for (const auto& [table, bytes] : batches) ::fdatasync(fds_.at(table));
  }
  json c = {{"txn", id}, {"n", i}};
  append(commit_fd_, encode_log_line(c.dump()));
  if (options_.sync) ::fdatasync(commit_fd_);
  ++next_txn_;
  for (const auto& [table, rec] : txn.records()) catalog_.apply(table, rec);
  if (options_.after_commit) options_.after_commit(catalog_, id);
}

std::uint64_t Store::disk_bytes() const {
  std::uint64_t total = 0;
  std::error_code ec;
  for (const auto& e : fs::recursive_directory_iterator(root_, ec)) {
    if (e.is_regular_file() && e.path().filename() != "LOCK") total += e.file_size();
  }
  return total;
}

}  // namespace abase
