#include "world.hpp"

#include "abase/crawler.hpp"

namespace testsupport {

using namespace abase;

Config config_for(const fs::path& store_root) {
  Config c;
  c.store_root = store_root;
  c.failure_rate = 0;
  c.resources = 2;
  c.default_seed = 1;
  return c;
}

World::World(std::uint64_t s, StoreOptions opts) : dir("world"), seed(s) { reopen(std::move(opts)); }

void World::reopen(StoreOptions opts) {
  if (base_) base_->close();
  base_.reset();
  base_ = std::make_unique<AnalysisBase>(config_for(dir / "store"), std::move(opts), seed,
                                         stepping_clock(Timestamp{kOrigin}, 1000));
}

Id World::user(const std::string& name, Role role) {
  return persistency().register_user(name, "lab", role).user_id;
}

const std::map<std::string, Id>& World::toys(const Id& caller) {
  if (toys_.empty()) {
    for (const auto& [name, fn] : toy_algorithms()) {
      toys_[name] = persistency().register_algorithm(caller, name, "toy", make_lfn("bin", name)).algorithm_id;
    }
  }
  return toys_;
}

Id World::pipeline(const Id& caller, const std::string& definition, const std::string& name) {
  json body = {{"definition", definition}, {"lfn", make_lfn("pipelines", name.empty() ? "p" : name)}};
  if (!name.empty()) body["name"] = name;
  auto r = base().register_pipeline(caller.str(), body);
  return Id(r.at("pipeline").at("pipeline_id").get<std::string>());
}

DatasetRecord World::index_tree(const Id& caller, const fs::path& tree, const std::string& name,
                                const Visibility& vis) {
  auto d = crawl_dataset(tree, name, Timestamp{kOrigin});
  return persistency().index_dataset(caller, d, vis);
}

DatasetDescriptor tiny_descriptor(const std::string& name, std::size_t items, const AttrMap& attrs) {
  DatasetDescriptor d;
  d.dataset_name = name;
  d.generated_at = Timestamp{kOrigin};
  for (std::size_t i = 0; i < items; ++i) {
    ItemDescriptor it;
    it.source_subfolder = "item_" + std::to_string(i);
    it.image_files.push_back({it.source_subfolder + "/scan.nii", "scan.nii", 100 + i, EntryKind::image, ""});
    it.data_files.push_back({it.source_subfolder + "/m.csv", "m.csv", 10, EntryKind::data, ""});
    it.attributes = attrs;
    d.items.push_back(std::move(it));
  }
  return d;
}

}  // namespace testsupport
