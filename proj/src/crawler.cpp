#include "abase/crawler.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <system_error>

#include "abase/digest.hpp"
#include "abase/error.hpp"
#include "abase/xml.hpp"

namespace fs = std::filesystem;

namespace abase {

const char* to_string(EntryKind k) noexcept {
  switch (k) {
    case EntryKind::image: return "image";
    case EntryKind::data: return "data";
    case EntryKind::ignored: return "ignored";
  }
  return "?";
}

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

constexpr std::string_view kImageExt[] = {".nii.gz", ".nii", ".mnc", ".img", ".hdr", ".dcm"};
constexpr std::string_view kDataExt[] = {".xml", ".csv", ".tsv", ".txt", ".json"};
constexpr std::string_view kArchiveExt[] = {".zip", ".tar", ".tgz", ".tar.gz", ".tar.bz2",
                                            ".tar.xz"};

std::string generic_relative(const fs::path& p, const fs::path& base) {
  return p.lexically_relative(base).generic_string();
}

}  // namespace

EntryKind classify_name(std::string_view filename) {
  if (filename.empty() || filename.front() == '.') return EntryKind::ignored;
  auto name = lower(filename);
  for (auto ext : kImageExt) {
    if (ends_with(name, ext) && name.size() > ext.size()) return EntryKind::image;
  }
  for (auto ext : kDataExt) {
    if (ends_with(name, ext) && name.size() > ext.size()) return EntryKind::data;
  }
  return EntryKind::ignored;
}

bool is_archive_name(std::string_view filename) {
  auto name = lower(filename);
  for (auto ext : kArchiveExt) {
    if (ends_with(name, ext)) return true;
  }
  return false;
}

EntryKind classify_file(const fs::path& path) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) {
    throw Error(ErrorKind::validation, "not a regular file: " + path.string());
  }
  return classify_name(path.filename().string());
}

DatasetDescriptor crawl_dataset(const fs::path& root, const std::string& dataset_name,
                                Timestamp generated_at) {
  std::error_code ec;
  if (fs::is_regular_file(root, ec) && is_archive_name(root.filename().string())) {
    throw Error(ErrorKind::validation,
                "archived dataset, unarchive first: " + root.string());
  }
  if (!fs::is_directory(root, ec)) {
    throw Error(ErrorKind::io, "dataset root is not a readable directory: " + root.string());
  }
  fs::directory_iterator top(root, ec);
  if (ec) throw Error(ErrorKind::io, "cannot read dataset root " + root.string() + ": " + ec.message());

  DatasetDescriptor d;
  d.dataset_name = dataset_name;
  d.root_path = root.string();
  d.generated_at = generated_at;

  std::vector<fs::path> subfolders;
  for (const auto& entry : top) {
    auto name = entry.path().filename().string();
    if (!name.empty() && name.front() == '.') continue;
    std::error_code e2;
    if (entry.is_directory(e2)) {
      subfolders.push_back(entry.path());
    } else if (entry.is_regular_file(e2)) {
      if (is_archive_name(name)) {
        throw Error(ErrorKind::validation, "archived dataset content, unarchive first: " + name);
      }
      if (classify_name(name) != EntryKind::ignored) {
        d.warnings.push_back("file at dataset root excluded: " + name);
      }
    }
  }
  std::sort(subfolders.begin(), subfolders.end(),
            [](const fs::path& a, const fs::path& b) {
              return a.filename().string() < b.filename().string();
            });

  for (const auto& folder : subfolders) {
    ItemDescriptor item;
    item.source_subfolder = folder.filename().string();
    std::vector<fs::path> files;
    fs::recursive_directory_iterator it(folder, ec), end;
    if (ec) {
      d.warnings.push_back(item.source_subfolder + ": cannot read folder: " + ec.message());
      continue;
    }
    for (; it != end; it.increment(ec)) {
      if (ec) {
        d.warnings.push_back(item.source_subfolder + ": walk error: " + ec.message());
        break;
      }
      auto name = it->path().filename().string();
      if (!name.empty() && name.front() == '.') {
        if (it->is_directory()) it.disable_recursion_pending();
        continue;
      }
      std::error_code e2;
      if (!it->is_regular_file(e2)) continue;
      if (is_archive_name(name)) {
        throw Error(ErrorKind::validation, "archived dataset content, unarchive first: " +
                                               generic_relative(it->path(), root));
      }
      if (classify_name(name) == EntryKind::ignored) continue;
      files.push_back(it->path());
    }
    for (const auto& f : files) {
      FileEntry fe;
      fe.relative_path = generic_relative(f, root);
      fe.filename = f.filename().string();
      fe.kind = classify_name(fe.filename);
      std::error_code e3;
      auto size = fs::file_size(f, e3);
      auto sum = e3 ? std::nullopt : sha256_file(f);
      if (!sum) {
        d.warnings.push_back(item.source_subfolder + ": unreadable file skipped: " +
                             fe.relative_path);
        continue;
      }
      fe.size_bytes = size;
      fe.checksum = *sum;
      (fe.kind == EntryKind::image ? item.image_files : item.data_files).push_back(std::move(fe));
    }
    if (item.image_files.empty() && item.data_files.empty()) continue;
    auto by_path = [](const FileEntry& a, const FileEntry& b) {
      return a.relative_path < b.relative_path;
    };
    std::sort(item.image_files.begin(), item.image_files.end(), by_path);
    std::sort(item.data_files.begin(), item.data_files.end(), by_path);

    FileReader reader = [&root](const FileEntry& fe) -> std::optional<std::string> {
      std::ifstream in(root / fe.relative_path, std::ios::binary);
      if (!in) return std::nullopt;
      std::ostringstream ss;
      ss << in.rdbuf();
      return ss.str();
    };
    auto extracted = extract_attributes(item, reader);
    item.attributes = std::move(extracted.attributes);
    for (auto& w : extracted.warnings) d.warnings.push_back(item.source_subfolder + ": " + w);
    d.items.push_back(std::move(item));
  }
  return d;
}

SubjectParse parse_subject(std::string_view doc, SubjectFields& out, std::string* why) {
  std::string err;
  auto root = xml::parse(doc, &err);
  if (!root) {
    if (why) *why = "not well-formed: " + err;
    return SubjectParse::malformed;
  }
  if (root->name != "subject") return SubjectParse::not_subject;
  auto bad = [&](const std::string& msg) {
    if (why) *why = msg;
    return SubjectParse::malformed;
  };
  SubjectFields f;
  for (const auto& c : root->children) {
    if (c.name == "sex") {
      if (c.text != "M" && c.text != "F") return bad("sex must be M or F, got '" + c.text + "'");
      f.sex = c.text;
    } else if (c.name == "age" || c.name == "assessments") {
      auto v = parse_typed("int", c.text);
      if (!v || std::get<std::int64_t>(*v) < 0) {
        return bad(c.name + " must be a non-negative integer, got '" + c.text + "'");
      }
      (c.name == "age" ? f.age : f.assessments) = std::get<std::int64_t>(*v);
    } else if (c.name == "stage") {
      f.stage = c.text;
    }
  }
  out = std::move(f);
  return SubjectParse::ok;
}

AttributeExtraction extract_attributes(const ItemDescriptor& item, const FileReader& reader) {
  AttributeExtraction result;
  auto merge = [&](const std::string& key, AttrValue v, const std::string& source) {
    auto [it, inserted] = result.attributes.try_emplace(key, v);
    if (!inserted && it->second != v) {
      result.warnings.push_back("attribute " + key + " overridden by " + source + " (" +
                                render(it->second) + " -> " + render(v) + ")");
      it->second = std::move(v);
    }
  };
  for (const auto& fe : item.data_files) {
    if (lower(fe.filename).size() < 4 || !ends_with(lower(fe.filename), ".xml")) continue;
    auto bytes = reader(fe);
    if (!bytes) {
      result.warnings.push_back("unreadable data file skipped: " + fe.relative_path);
      continue;
    }
    SubjectFields f;
    std::string why;
    switch (parse_subject(*bytes, f, &why)) {
      case SubjectParse::not_subject: continue;
      case SubjectParse::malformed:
        result.warnings.push_back("malformed subject file skipped: " + fe.relative_path + ": " +
                                  why);
        continue;
      case SubjectParse::ok: break;
    }
    if (f.sex) merge("subject_sex", *f.sex, fe.relative_path);
    if (f.age) merge("subject_age", *f.age, fe.relative_path);
    if (f.assessments) merge("assessment_count", *f.assessments, fe.relative_path);
    if (f.stage) merge("study_stage", *f.stage, fe.relative_path);
  }
  return result;
}

ChangeSet diff_descriptors(const DatasetDescriptor& old_d, const DatasetDescriptor& new_d) {
  if (old_d.dataset_name != new_d.dataset_name) {
    throw Error(ErrorKind::validation, "cannot diff different datasets: '" + old_d.dataset_name +
                                           "' vs '" + new_d.dataset_name + "'");
  }
  std::map<std::string, const ItemDescriptor*> before, after;
  for (const auto& i : old_d.items) before[i.source_subfolder] = &i;
  for (const auto& i : new_d.items) after[i.source_subfolder] = &i;

  auto fingerprint = [](const ItemDescriptor& i) {
    std::vector<std::pair<std::string, std::string>> fp;
    for (const auto* list : {&i.image_files, &i.data_files}) {
      for (const auto& f : *list) fp.emplace_back(f.relative_path, f.checksum);
    }
    std::sort(fp.begin(), fp.end());
    return fp;
  };

  ChangeSet cs;
  for (const auto& [key, item] : after) {
    auto it = before.find(key);
    if (it == before.end()) {
      cs.added.push_back(key);
    } else if (fingerprint(*it->second) != fingerprint(*item)) {
      cs.modified.push_back(key);
    }
  }
  for (const auto& [key, item] : before) {
    if (!after.contains(key)) cs.removed.push_back(key);
  }
  return cs;
}

}  // namespace abase
