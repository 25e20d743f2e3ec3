#pragma once

// Dataset crawler: walks an on-disk dataset tree and models it as a set of
// items, each the union of its image files and data files. Clinical
// attributes are lifted from subject XML files found among the data files.

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "abase/ids.hpp"
#include "abase/model.hpp"

namespace abase {

enum class EntryKind { image, data, ignored };

const char* to_string(EntryKind k) noexcept;

struct FileEntry {
  std::string relative_path;  // '/'-separated, relative to the dataset root
  std::string filename;
  std::uint64_t size_bytes = 0;
  EntryKind kind = EntryKind::data;
  std::string checksum;

  bool operator==(const FileEntry&) const = default;
};

struct ItemDescriptor {
  std::string source_subfolder;
  std::vector<FileEntry> image_files;  // sorted by relative_path
  std::vector<FileEntry> data_files;   // sorted by relative_path
  AttrMap attributes;

  bool operator==(const ItemDescriptor&) const = default;
};

struct DatasetDescriptor {
  std::string dataset_name;
  std::string root_path;
  std::vector<ItemDescriptor> items;  // sorted by source_subfolder
  Timestamp generated_at;
  std::vector<std::string> warnings;

  bool operator==(const DatasetDescriptor&) const = default;
};

/// Classification by file name alone (case-insensitive extension table).
EntryKind classify_name(std::string_view filename);
bool is_archive_name(std::string_view filename);

/// Throws Error(validation) if `path` is not a regular file.
EntryKind classify_file(const std::filesystem::path& path);

DatasetDescriptor crawl_dataset(const std::filesystem::path& root, const std::string& dataset_name,
                                Timestamp generated_at = Timestamp::now());

using FileReader = std::function<std::optional<std::string>(const FileEntry&)>;

struct AttributeExtraction {
  AttrMap attributes;
  std::vector<std::string> warnings;
};

AttributeExtraction extract_attributes(const ItemDescriptor& item, const FileReader& reader);

/// Subject file fields; any may be absent. nullopt if `doc` is not a subject document.
struct SubjectFields {
  std::optional<std::string> sex;
  std::optional<std::int64_t> age;
  std::optional<std::int64_t> assessments;
  std::optional<std::string> stage;
};

enum class SubjectParse { ok, not_subject, malformed };

SubjectParse parse_subject(std::string_view doc, SubjectFields& out, std::string* why = nullptr);

struct ChangeSet {
  std::vector<std::string> added;
  std::vector<std::string> removed;
  std::vector<std::string> modified;

  bool empty() const noexcept { return added.empty() && removed.empty() && modified.empty(); }
  bool operator==(const ChangeSet&) const = default;
};

/// Throws Error(validation) when the dataset names differ.
ChangeSet diff_descriptors(const DatasetDescriptor& old_d, const DatasetDescriptor& new_d);

}  // namespace abase
