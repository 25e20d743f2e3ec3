#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "abase/crawler.hpp"
#include "abase/model.hpp"

namespace testsupport {

namespace fs = std::filesystem;

class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  fs::path path_;
};

void write_file(const fs::path& p, const std::string& bytes);
std::string read_file(const fs::path& p);
std::string sha256_hex(const std::string& bytes);

// Random dataset trees. Everything the generator decides is reproducible
// from the seed; trees stay under 200 files and 20 top-level folders.
struct TreeOptions {
  std::size_t max_files = 200;
  std::size_t max_folders = 20;
  bool root_file = true;  // may drop one classified file at the root
};

struct TreeSummary {
  std::size_t files = 0;
  std::set<std::string> folders;  // every top-level folder written
};

TreeSummary make_random_tree(const fs::path& root, std::uint64_t seed, const TreeOptions& opt = {});

// Edit scripts for diffing: each edit touches one top-level folder and the
// script records which folders it expects to show up as added, removed or
// modified.
struct EditTruth {
  std::vector<std::string> added, removed, modified;
};

/// Writes a base tree where every top-level folder is an item.
void make_base_tree(const fs::path& root, std::uint64_t seed);
/// Applies a random edit script to a tree made by make_base_tree.
EditTruth edit_tree(const fs::path& root, std::uint64_t seed);

/// Valid descriptor with awkward text: markup characters, whitespace,
/// multi-byte UTF-8, every attribute type.
abase::DatasetDescriptor random_descriptor(std::mt19937_64& rng);

// Random step DAGs. Steps are s00..sNN; depends_on only points to lower
// indexes, step_order equals the index.
std::vector<abase::PipelineStep> random_dag(std::mt19937_64& rng, std::size_t n, double edge_p);

/// Adds a dependency from a lower-index step onto a higher-index one that
/// is reachable from it, closing exactly one cycle. Returns false when the
/// graph has no path to close.
bool inject_back_edge(std::vector<abase::PipelineStep>& steps, std::mt19937_64& rng);

}  // namespace testsupport
