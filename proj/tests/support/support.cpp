#include "support.hpp"

#include <openssl/sha.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace testsupport {

TempDir::TempDir(const std::string& tag) {
  auto base = fs::temp_directory_path() / ("abase-" + tag + "-XXXXXX");
  std::string tmpl = base.string();
  if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
  path_ = tmpl;
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

void write_file(const fs::path& p, const std::string& bytes) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << bytes;
  if (!out) throw std::runtime_error("write failed: " + p.string());
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("read failed: " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[SHA256_DIGEST_LENGTH];
  SHA256(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), md);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned char c : md) {
    out += hex[c >> 4];
    out += hex[c & 15];
  }
  return out;
}

namespace {

using Rng = std::mt19937_64;

std::size_t pick(Rng& rng, std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); }
bool chance(Rng& rng, double p) { return std::bernoulli_distribution(p)(rng); }

std::string random_bytes(Rng& rng, std::size_t max_len) {
  std::string s(pick(rng, max_len + 1), '\0');
  for (auto& c : s) c = static_cast<char>(pick(rng, 256));
  return s;
}

const std::vector<std::string> kImage = {"nii", "nii.gz", "mnc", "img", "hdr", "dcm", "NII", "Nii.Gz", "DCM"};
const std::vector<std::string> kData = {"csv", "tsv", "txt", "json", "CSV", "Txt"};
const std::vector<std::string> kIgnored = {"tmp", "md", "bak", "dat", "gz", "nii.bak", "xml~", ""};

std::string subject_doc(Rng& rng, bool malformed) {
  std::string s = "<?xml version=\"1.0\"?>\n<subject>\n";
  if (malformed) {
    switch (pick(rng, 3)) {
      case 0: s += "  <sex>X</sex>\n"; break;
      case 1: s += "  <age>-4</age>\n"; break;
      default: s += "  <assessments>many</assessments>\n"; break;
    }
  } else {
    if (chance(rng, 0.9)) s += std::string("  <sex>") + (chance(rng, 0.5) ? "M" : "F") + "</sex>\n";
    if (chance(rng, 0.9)) s += "  <age>" + std::to_string(20 + pick(rng, 70)) + "</age>\n";
    if (chance(rng, 0.8)) s += "  <assessments>" + std::to_string(pick(rng, 6)) + "</assessments>\n";
    if (chance(rng, 0.7)) s += std::string("  <stage>") + (chance(rng, 0.5) ? "baseline" : "m12") + "</stage>\n";
  }
  return s + "</subject>\n";
}

std::string folder_name(Rng& rng, std::size_t i) {
  static const std::vector<std::string> stems = {"sub", "Subject", "patient A&B", "visit", "ctl"};
  return stems[pick(rng, stems.size())] + "_" + std::to_string(i);
}

}  // namespace

TreeSummary make_random_tree(const fs::path& root, std::uint64_t seed, const TreeOptions& opt) {
  Rng rng(seed);
  TreeSummary sum;
  fs::create_directories(root);
  std::size_t budget = opt.max_files;
  std::size_t counter = 0;
  auto emit = [&](const fs::path& p, const std::string& bytes) {
    if (budget == 0) return;
    --budget;
    ++sum.files;
    write_file(p, bytes);
  };

  if (opt.root_file) {
    if (chance(rng, 0.5)) emit(root / "README.txt", "dataset notes\n");
    if (chance(rng, 0.5)) emit(root / "notes.md", "ignored\n");
    if (chance(rng, 0.3)) emit(root / ".DS_Store", "x");
  }
  if (chance(rng, 0.3)) emit(root / ".hidden_dir" / "scan.nii", random_bytes(rng, 64));

  std::size_t folders = pick(rng, opt.max_folders + 1);
  for (std::size_t f = 0; f < folders && budget > 0; ++f) {
    auto name = folder_name(rng, f);
    auto dir = root / name;
    fs::create_directories(dir);
    sum.folders.insert(name);
    if (chance(rng, 0.08)) continue;  // empty folder

    std::vector<fs::path> dirs = {dir};
    std::size_t nested = pick(rng, 4);
    for (std::size_t k = 0; k < nested; ++k) {
      auto parent = dirs[pick(rng, dirs.size())];
      dirs.push_back(parent / ("level" + std::to_string(k)));
    }
    if (chance(rng, 0.2)) dirs.push_back(dir / ".snapshots");

    std::size_t nfiles = pick(rng, 12);
    for (std::size_t k = 0; k < nfiles; ++k) {
      auto where = dirs[pick(rng, dirs.size())];
      static const std::vector<const std::vector<std::string>*> tables = {&kImage, &kData, &kIgnored};
      const auto& table = *tables[pick(rng, 3)];
      auto ext = table[pick(rng, table.size())];
      std::string fname = "f" + std::to_string(counter++) + (ext.empty() ? "" : "." + ext);
      if (chance(rng, 0.05)) fname = "." + fname;
      emit(where / fname, random_bytes(rng, 2048));
    }
    if (chance(rng, 0.7)) emit(dir / "subject.xml", subject_doc(rng, false));
    if (chance(rng, 0.15)) emit(dir / "visit_2" / "subject_update.xml", subject_doc(rng, false));
    if (chance(rng, 0.1)) emit(dir / "bad_subject.xml", subject_doc(rng, true));
    if (chance(rng, 0.2)) emit(dir / "protocol.xml", "<protocol><name>T1</name></protocol>\n");
  }
  return sum;
}

void make_base_tree(const fs::path& root, std::uint64_t seed) {
  Rng rng(seed);
  fs::create_directories(root);
  std::size_t n = 4 + pick(rng, 8);
  for (std::size_t i = 0; i < n; ++i) {
    auto name = "item_" + std::to_string(i);
    write_file(root / name / "scan.nii", random_bytes(rng, 256) + name);
    write_file(root / name / "measures.csv", "a,b\n" + std::to_string(i) + "\n");
    if (chance(rng, 0.5)) write_file(root / name / "deep" / "t2.mnc", random_bytes(rng, 128));
  }
}

EditTruth edit_tree(const fs::path& root, std::uint64_t seed) {
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::string> items;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory()) items.push_back(e.path().filename().string());
  }
  std::sort(items.begin(), items.end());
  std::shuffle(items.begin(), items.end(), rng);

  EditTruth t;
  std::size_t edits = 1 + pick(rng, items.size());
  for (std::size_t i = 0; i < edits && i < items.size(); ++i) {
    const auto& name = items[i];
    auto dir = root / name;
    switch (pick(rng, 6)) {
      case 0:
        fs::remove_all(dir);
        t.removed.push_back(name);
        break;
      case 1:
        write_file(dir / "scan.nii", random_bytes(rng, 64) + "changed");
        t.modified.push_back(name);
        break;
      case 2:
        write_file(dir / "extra" / "new.json", "{}");
        t.modified.push_back(name);
        break;
      case 3:
        fs::remove(dir / "measures.csv");
        t.modified.push_back(name);
        break;
      case 4:
        write_file(dir / "scratch.tmp", "ignored");
        break;
      default:
        write_file(dir / ".cache" / "hidden.nii", "hidden");
        break;
    }
  }
  std::size_t fresh = pick(rng, 3);
  for (std::size_t i = 0; i < fresh; ++i) {
    auto name = "new_" + std::to_string(i);
    write_file(root / name / "scan.dcm", random_bytes(rng, 64));
    t.added.push_back(name);
  }
  if (chance(rng, 0.3)) fs::create_directories(root / "empty_new");
  for (auto* v : {&t.added, &t.removed, &t.modified}) std::sort(v->begin(), v->end());
  return t;
}

namespace {

std::string awkward_text(Rng& rng, std::size_t max_len, bool allow_empty = true) {
  static const std::vector<std::string> pool = {"a", "Z", "7", " ", "&", "<", ">", "\"", "'", "\t", "\n",
                                                "\r", "\xc3\xa9", "\xc2\xb5", "\xe2\x89\xa4", "/", "_", "."};
  std::size_t len = pick(rng, max_len + 1);
  if (!allow_empty && len == 0) len = 1;
  std::string s;
  for (std::size_t i = 0; i < len; ++i) s += pool[pick(rng, pool.size())];
  return s;
}

std::string hex64(Rng& rng) {
  static const char* hex = "0123456789abcdef";
  std::string s(64, '0');
  for (auto& c : s) c = hex[pick(rng, 16)];
  return s;
}

abase::FileEntry random_entry(Rng& rng, abase::EntryKind kind, std::size_t idx) {
  abase::FileEntry f;
  f.filename = awkward_text(rng, 12, false) + std::to_string(idx);
  f.relative_path = awkward_text(rng, 6, false) + "/" + f.filename;
  f.size_bytes = chance(rng, 0.1) ? (std::uint64_t{1} << 40) + pick(rng, 1000) : pick(rng, 1u << 20);
  f.checksum = chance(rng, 0.9) ? hex64(rng) : "";
  f.kind = kind;
  return f;
}

}  // namespace

abase::DatasetDescriptor random_descriptor(std::mt19937_64& rng) {
  abase::DatasetDescriptor d;
  d.dataset_name = awkward_text(rng, 16, false);
  d.root_path = chance(rng, 0.8) ? "/data/" + awkward_text(rng, 10) : "";
  d.generated_at = abase::Timestamp{static_cast<std::int64_t>(pick(rng, 4102444800000ULL))};
  std::set<std::string> seen;
  std::size_t n = pick(rng, 12);
  for (std::size_t i = 0; i < n; ++i) {
    abase::ItemDescriptor item;
    item.source_subfolder = awkward_text(rng, 10, false) + std::to_string(i);
    if (!seen.insert(item.source_subfolder).second) continue;
    for (std::size_t k = pick(rng, 5); k > 0; --k) item.image_files.push_back(random_entry(rng, abase::EntryKind::image, k));
    for (std::size_t k = pick(rng, 5); k > 0; --k) item.data_files.push_back(random_entry(rng, abase::EntryKind::data, k));
    auto by_path = [](const abase::FileEntry& a, const abase::FileEntry& b) { return a.relative_path < b.relative_path; };
    std::stable_sort(item.image_files.begin(), item.image_files.end(), by_path);
    std::stable_sort(item.data_files.begin(), item.data_files.end(), by_path);
    for (std::size_t k = pick(rng, 5); k > 0; --k) {
      auto key = awkward_text(rng, 8, false);
      switch (pick(rng, 3)) {
        case 0: item.attributes[key] = awkward_text(rng, 20); break;
        case 1: item.attributes[key] = static_cast<std::int64_t>(rng()); break;
        default: item.attributes[key] = std::uniform_real_distribution<double>(-1e9, 1e9)(rng); break;
      }
    }
    d.items.push_back(std::move(item));
  }
  std::sort(d.items.begin(), d.items.end(),
            [](const auto& a, const auto& b) { return a.source_subfolder < b.source_subfolder; });
  for (std::size_t k = pick(rng, 3); k > 0; --k) d.warnings.push_back(awkward_text(rng, 30));
  return d;
}

std::vector<abase::PipelineStep> random_dag(std::mt19937_64& rng, std::size_t n, double edge_p) {
  std::vector<abase::PipelineStep> steps(n);
  for (std::size_t i = 0; i < n; ++i) {
    char id[24];
    std::snprintf(id, sizeof id, "s%02zu", i);
    steps[i].step_id = id;
    steps[i].step_order = static_cast<int>(i);
    steps[i].output_ports = {"out"};
    for (std::size_t j = 0; j < i; ++j) {
      if (chance(rng, edge_p)) steps[i].depends_on.insert(steps[j].step_id);
    }
  }
  return steps;
}

bool inject_back_edge(std::vector<abase::PipelineStep>& steps, std::mt19937_64& rng) {
  const std::size_t n = steps.size();
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < n; ++i) index[steps[i].step_id] = i;
  // reach[u]: steps that transitively depend on u
  std::vector<std::set<std::size_t>> reach(n);
  for (std::size_t v = 0; v < n; ++v) {
    for (const auto& d : steps[v].depends_on) reach[index[d]].insert(v);
  }
  for (std::size_t u = n; u-- > 0;) {
    std::set<std::size_t> all = reach[u];
    for (auto v : reach[u]) all.insert(reach[v].begin(), reach[v].end());
    reach[u] = all;
  }
  std::vector<std::pair<std::size_t, std::size_t>> candidates;
  for (std::size_t u = 0; u < n; ++u) {
    for (auto v : reach[u]) candidates.emplace_back(u, v);
  }
  if (candidates.empty()) return false;
  auto [u, v] = candidates[pick(rng, candidates.size())];
  steps[u].depends_on.insert(steps[v].step_id);
  return true;
}

}  // namespace testsupport
