#include "abase/synthetic.hpp"

#include <fstream>
#include <random>

#include "abase/error.hpp"

namespace abase {

namespace fs = std::filesystem;

namespace {

void put(const fs::path& path, const std::string& bytes) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << bytes;
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
}

std::string subject_xml(const SubjectTruth& s) {
  std::string x = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<subject>\n";
  if (s.sex) x += "  <sex>" + *s.sex + "</sex>\n";
  if (s.age) x += "  <age>" + std::to_string(*s.age) + "</age>\n";
  if (s.assessments) x += "  <assessments>" + std::to_string(*s.assessments) + "</assessments>\n";
  x += "  <stage>" + s.stage + "</stage>\n</subject>\n";
  return x;
}

}  // namespace

bool scenario_member(const SubjectTruth& s) noexcept {
  return s.sex == "M" && s.age && *s.age > 50 && s.assessments && *s.assessments >= 2;
}

std::set<std::string> CohortTruth::scenario_members() const {
  std::set<std::string> out;
  for (const auto& s : subjects) {
    if (scenario_member(s)) out.insert(s.folder);
  }
  return out;
}

CohortTruth generate_cohort(const fs::path& root, std::size_t subjects, std::uint64_t seed) {
  static const char* kStages[] = {"baseline", "followup", "screening"};
  std::mt19937_64 rng(seed);
  auto pick = [&](std::uint64_t lo, std::uint64_t hi) { return lo + rng() % (hi - lo + 1); };

  CohortTruth truth;
  truth.root = root;
  fs::create_directories(root);
  put(root / "README.txt", "synthetic cohort, seed " + std::to_string(seed) + "\n");
  for (std::size_t i = 1; i <= subjects; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "subject_%04zu", i);
    SubjectTruth s;
    s.folder = name;
    s.sex = pick(0, 1) ? "M" : "F";
    if (pick(0, 19) != 0) s.age = static_cast<std::int64_t>(pick(20, 90));
    s.assessments = static_cast<std::int64_t>(pick(0, 5));
    s.stage = kStages[pick(0, 2)];

    auto dir = root / s.folder;
    put(dir / "subject.xml", subject_xml(s));
    ++s.data_files;
    std::size_t visits = pick(1, 3);
    for (std::size_t v = 1; v <= visits; ++v) {
      auto vdir = dir / ("visit_" + std::to_string(v));
      std::string image = "SYNTHETIC-NIFTI " + s.folder + " visit " + std::to_string(v) + "\n";
      std::size_t voxels = pick(8, 40);
      for (std::size_t k = 0; k < voxels; ++k) image += std::to_string(pick(0, 4095)) + "\n";
      put(vdir / "t1.nii", image);
      ++s.image_files;
      std::string csv;
      std::size_t rows = pick(3, 12);
      for (std::size_t k = 0; k < rows; ++k) {
        csv += std::to_string(pick(0, 100)) + ",score_" + std::to_string(k) + "\n";
      }
      put(vdir / "measures.csv", csv);
      ++s.data_files;
    }
    put(dir / "notes.md", "free-form notes\n");
    put(dir / ".scanner_cache", "x");
    truth.subjects.push_back(std::move(s));
  }
  return truth;
}

const ToyPipeline& scenario_pipeline() {
  static const ToyPipeline p{
      "cohort-summary",
      "pipeline cohort-summary\n"
      "step stamp uses checksum-stamp in cohort:dataset out manifest\n"
      "step count uses line-count after stamp in manifest:file=stamp.manifest out count\n"
      "step report uses concatenate after stamp,count "
      "in listing:file=stamp.manifest,total:file=count.count out report\n"};
  return p;
}

std::vector<ToyPipeline> toy_pipeline_corpus() {
  return {
      scenario_pipeline(),
      {"measure-threshold",
       "pipeline measure-threshold\n"
       "step keep uses threshold-filter in data:dataset,threshold:scalar out kept\n"
       "step tally uses line-count after keep in rows:file=keep.kept out n\n"},
      {"stamp-only",
       "pipeline stamp-only\n"
       "step stamp uses checksum-stamp in files:dataset out stamps\n"},
      {"fan-in",
       "pipeline fan-in\n"
       "# two independent branches joined at the end\n"
       "step lines uses line-count in x:dataset out n\n"
       "step sums uses checksum-stamp in x:dataset out s\n"
       "step join uses concatenate after lines,sums in p:file=lines.n,q:file=sums.s out joined\n"},
  };
}

}  // namespace abase
