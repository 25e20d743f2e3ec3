#pragma once

// A full in-process service stack over a temporary store, with seeded ids
// and a stepping clock so whole sessions replay identically.

#include <map>
#include <memory>
#include <string>

#include "abase/gateway.hpp"
#include "support.hpp"

namespace testsupport {

inline constexpr std::int64_t kOrigin = 1767225600000;  // 2026-01-01T00:00:00Z

struct World {
  explicit World(std::uint64_t seed = 7, abase::StoreOptions opts = {});
  /// Closes the stack and opens it again over the same store.
  void reopen(abase::StoreOptions opts = {});

  abase::AnalysisBase& base() { return *base_; }
  abase::Persistency& persistency() { return base_->persistency(); }
  abase::Provenance& provenance() { return base_->provenance(); }
  abase::PipelineService& pipelines() { return base_->pipelines(); }
  abase::QueryService& queries() { return base_->queries(); }
  const fs::path& root() const { return dir.path(); }

  abase::Id user(const std::string& name, abase::Role role = abase::Role::neuroscientist);
  /// Registers the four toy algorithms once; returns name -> id.
  const std::map<std::string, abase::Id>& toys(const abase::Id& caller);
  /// Parses and registers a definition; returns the pipeline id (version 1).
  abase::Id pipeline(const abase::Id& caller, const std::string& definition, const std::string& name = "");
  /// Crawls `tree` and indexes it.
  abase::DatasetRecord index_tree(const abase::Id& caller, const fs::path& tree, const std::string& name,
                                  const abase::Visibility& vis = abase::Visibility::public_all());

  TempDir dir;
  std::uint64_t seed;

 private:
  std::unique_ptr<abase::AnalysisBase> base_;
  std::map<std::string, abase::Id> toys_;
};

abase::Config config_for(const fs::path& store_root);

/// A descriptor built in memory: `items` folders each with one image and
/// one data file and the given attributes on every item.
abase::DatasetDescriptor tiny_descriptor(const std::string& name, std::size_t items,
                                         const abase::AttrMap& attrs = {});

}  // namespace testsupport
