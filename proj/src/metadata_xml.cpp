#include "abase/metadata_xml.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "abase/error.hpp"
#include "abase/xml.hpp"

namespace abase {

namespace {

void write_files(std::string& out, const char* tag, const std::vector<FileEntry>& files) {
  if (files.empty()) {
    out += "      <";
    out += tag;
    out += "/>\n";
    return;
  }
  out += "      <";
  out += tag;
  out += ">\n";
  for (const auto& f : files) {
    out += "        <file>\n";
    out += "          <filename>" + xml::escape_text(f.filename) + "</filename>\n";
    out += "          <relativePath>" + xml::escape_text(f.relative_path) + "</relativePath>\n";
    out += "          <sizeBytes>" + std::to_string(f.size_bytes) + "</sizeBytes>\n";
    out += "          <checksum>" + xml::escape_text(f.checksum) + "</checksum>\n";
    out += "        </file>\n";
  }
  out += "      </";
  out += tag;
  out += ">\n";
}

bool is_hex64(const std::string& s) {
  if (s.size() != 64) return false;
  return std::all_of(s.begin(), s.end(),
                     [](char c) { return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'); });
}

class Validator {
 public:
  std::vector<SchemaViolation> violations;

  void add(const std::string& path, const std::string& rule) { violations.push_back({path, rule}); }

  /// Child paths get a 1-based index among same-named siblings.
  static std::vector<std::pair<const xml::Node*, std::string>> indexed(const xml::Node& parent,
                                                                       const std::string& path) {
    std::map<std::string, int> count;
    std::vector<std::pair<const xml::Node*, std::string>> out;
    for (const auto& c : parent.children) {
      int n = ++count[c.name];
      out.emplace_back(&c, path + "/" + c.name + "[" + std::to_string(n) + "]");
    }
    for (auto& [node, p] : out) {
      if (count[node->name] == 1) p = path + "/" + node->name;
    }
    return out;
  }

  void only(const xml::Node& node, const std::string& path, std::set<std::string> allowed,
            std::set<std::string> singletons = {}) {
    std::map<std::string, int> seen;
    for (const auto& [c, p] : indexed(node, path)) {
      if (!allowed.contains(c->name)) add(p, "unexpected element");
      if (singletons.contains(c->name) && ++seen[c->name] == 2) add(p, "duplicate element");
    }
  }

  std::vector<FileEntry> files(const xml::Node& list, const std::string& path, EntryKind kind) {
    only(list, path, {"file"});
    std::vector<FileEntry> out;
    for (const auto& [node, p] : indexed(list, path)) {
      if (node->name != "file") continue;
      only(*node, p, {"filename", "relativePath", "sizeBytes", "checksum"},
           {"filename", "relativePath", "sizeBytes", "checksum"});
      FileEntry fe;
      fe.kind = kind;
      const auto* fn = node->child("filename");
      const auto* rp = node->child("relativePath");
      if (!fn) add(p + "/filename", "required element missing");
      if (!rp) add(p + "/relativePath", "required element missing");
      if (fn) fe.filename = fn->text;
      if (rp) fe.relative_path = rp->text;
      if (fn && fn->text.empty()) add(p + "/filename", "must not be empty");
      if (rp && rp->text.empty()) add(p + "/relativePath", "must not be empty");
      if (const auto* sz = node->child("sizeBytes")) {
        auto v = parse_typed("int", sz->text);
        if (!v || std::get<std::int64_t>(*v) < 0) {
          add(p + "/sizeBytes", "must be a non-negative integer");
        } else {
          fe.size_bytes = static_cast<std::uint64_t>(std::get<std::int64_t>(*v));
        }
      }
      if (const auto* cs = node->child("checksum")) {
        if (!cs->text.empty() && !is_hex64(cs->text)) {
          add(p + "/checksum", "must be 64 lowercase hex digits");
        }
        fe.checksum = cs->text;
      }
      out.push_back(std::move(fe));
    }
    return out;
  }

  AttrMap attributes(const xml::Node& list, const std::string& path) {
    only(list, path, {"attribute"});
    AttrMap out;
    for (const auto& [node, p] : indexed(list, path)) {
      if (node->name != "attribute") continue;
      const auto* name = node->attr("name");
      const auto* type = node->attr("type");
      if (!name) add(p + "/@name", "required attribute missing");
      if (!type) {
        add(p + "/@type", "required attribute missing");
      } else if (*type != "string" && *type != "int" && *type != "decimal") {
        add(p + "/@type", "must be one of string, int, decimal");
        continue;
      }
      if (!name || !type) continue;
      auto v = parse_typed(*type, node->text);
      if (!v) {
        add(p, "value does not match type " + *type);
        continue;
      }
      if (!out.emplace(*name, std::move(*v)).second) add(p + "/@name", "duplicate attribute name");
    }
    return out;
  }
};

}  // namespace

std::string serialize_metadata(const DatasetDescriptor& d) {
  std::string out = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<dataset name=\"" + xml::escape_attr(d.dataset_name) + "\" generatedAt=\"" +
         d.generated_at.iso() + "\" rootPath=\"" + xml::escape_attr(d.root_path) + "\">\n";
  if (d.items.empty()) {
    out += "  <items/>\n";
  } else {
    out += "  <items>\n";
    for (const auto& item : d.items) {
      out += "    <item sourceSubfolder=\"" + xml::escape_attr(item.source_subfolder) + "\">\n";
      write_files(out, "imageFiles", item.image_files);
      write_files(out, "dataFiles", item.data_files);
      if (item.attributes.empty()) {
        out += "      <attributes/>\n";
      } else {
        out += "      <attributes>\n";
        for (const auto& [name, value] : item.attributes) {
          out += "        <attribute name=\"" + xml::escape_attr(name) + "\" type=\"" +
                 type_name(value) + "\">" + xml::escape_text(render(value)) + "</attribute>\n";
        }
        out += "      </attributes>\n";
      }
      out += "    </item>\n";
    }
    out += "  </items>\n";
  }
  if (!d.warnings.empty()) {
    out += "  <warnings>\n";
    for (const auto& w : d.warnings) out += "    <warning>" + xml::escape_text(w) + "</warning>\n";
    out += "  </warnings>\n";
  }
  out += "</dataset>\n";
  return out;
}

MetadataParse parse_metadata(std::string_view doc) {
  std::string err;
  auto root = xml::parse(doc, &err);
  if (!root) return std::vector<SchemaViolation>{{"/", "not well-formed"}};

  Validator v;
  if (root->name != "dataset") {
    v.add("/" + root->name, "root element must be dataset");
    return v.violations;
  }
  DatasetDescriptor d;
  if (const auto* name = root->attr("name")) {
    d.dataset_name = *name;
    if (name->empty()) v.add("/dataset/@name", "must not be empty");
  } else {
    v.add("/dataset/@name", "required attribute missing");
  }
  if (const auto* ts = root->attr("generatedAt")) {
    if (auto t = Timestamp::parse(*ts)) {
      d.generated_at = *t;
    } else {
      v.add("/dataset/@generatedAt", "must be an ISO-8601 UTC timestamp with milliseconds");
    }
  }
  if (const auto* rp = root->attr("rootPath")) d.root_path = *rp;
  v.only(*root, "/dataset", {"items", "warnings"}, {"items", "warnings"});

  const auto* items = root->child("items");
  if (!items) v.add("/dataset/items", "required element missing");
  std::set<std::string> subfolders;
  if (items) {
    v.only(*items, "/dataset/items", {"item"});
    for (const auto& [node, p] : Validator::indexed(*items, "/dataset/items")) {
      if (node->name != "item") continue;
      ItemDescriptor item;
      if (const auto* sf = node->attr("sourceSubfolder")) {
        item.source_subfolder = *sf;
        if (sf->empty()) v.add(p + "/@sourceSubfolder", "must not be empty");
        if (!subfolders.insert(*sf).second) v.add(p + "/@sourceSubfolder", "duplicate item");
      } else {
        v.add(p + "/@sourceSubfolder", "required attribute missing");
      }
      v.only(*node, p, {"imageFiles", "dataFiles", "attributes"},
             {"imageFiles", "dataFiles", "attributes"});
      if (const auto* img = node->child("imageFiles")) {
        item.image_files = v.files(*img, p + "/imageFiles", EntryKind::image);
      }
      if (const auto* dat = node->child("dataFiles")) {
        item.data_files = v.files(*dat, p + "/dataFiles", EntryKind::data);
      }
      if (const auto* attrs = node->child("attributes")) {
        item.attributes = v.attributes(*attrs, p + "/attributes");
      }
      auto by_path = [](const FileEntry& a, const FileEntry& b) {
        return a.relative_path < b.relative_path;
      };
      std::sort(item.image_files.begin(), item.image_files.end(), by_path);
      std::sort(item.data_files.begin(), item.data_files.end(), by_path);
      d.items.push_back(std::move(item));
    }
  }
  if (const auto* warnings = root->child("warnings")) {
    v.only(*warnings, "/dataset/warnings", {"warning"});
    for (const auto& w : warnings->children) {
      if (w.name == "warning") d.warnings.push_back(w.text);
    }
  }
  if (!v.violations.empty()) return v.violations;
  std::sort(d.items.begin(), d.items.end(), [](const ItemDescriptor& a, const ItemDescriptor& b) {
    return a.source_subfolder < b.source_subfolder;
  });
  return d;
}

DatasetDescriptor parse_metadata_or_throw(std::string_view doc) {
  auto r = parse_metadata(doc);
  if (auto* d = std::get_if<DatasetDescriptor>(&r)) return std::move(*d);
  std::vector<std::string> details;
  for (const auto& v : std::get<std::vector<SchemaViolation>>(r)) details.push_back(v.str());
  throw Error(ErrorKind::validation, "metadata document does not conform to the schema",
              std::move(details));
}

}  // namespace abase
