#pragma once

#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "abase/crawler.hpp"

namespace abase {

struct SchemaViolation {
  std::string path;  // e.g. /dataset/items/item[2]/imageFiles/file[1]/filename
  std::string rule;

  std::string str() const { return path + ": " + rule; }
  bool operator==(const SchemaViolation&) const = default;
};

/// UTF-8 metadata document; byte-identical for equal descriptors.
std::string serialize_metadata(const DatasetDescriptor& d);

using MetadataParse = std::variant<DatasetDescriptor, std::vector<SchemaViolation>>;

MetadataParse parse_metadata(std::string_view doc);

/// Convenience: throws Error(validation) carrying the violations.
DatasetDescriptor parse_metadata_or_throw(std::string_view doc);

}  // namespace abase
