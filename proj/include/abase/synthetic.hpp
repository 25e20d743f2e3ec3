#pragma once

// Synthetic study cohorts with recorded ground truth, and a small corpus of
// toy pipelines. Stand-ins for real neuroimaging archives.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace abase {

struct SubjectTruth {
  std::string folder;  // item source subfolder
  std::optional<std::string> sex;
  std::optional<std::int64_t> age;
  std::optional<std::int64_t> assessments;
  std::string stage;
  std::size_t image_files = 0;
  std::size_t data_files = 0;
};

struct CohortTruth {
  std::filesystem::path root;
  std::vector<SubjectTruth> subjects;

  /// Folders of subjects that are male, older than 50, with >= 2 assessments.
  std::set<std::string> scenario_members() const;
};

inline constexpr std::string_view kScenarioFilter =
    "subject_sex=M & subject_age>50 & assessment_count>=2";

bool scenario_member(const SubjectTruth& s) noexcept;

/// Writes `subjects` subject folders under `root` (created if missing). Each
/// holds a subject.xml, per-visit image and measurement files, and some
/// files the crawler must ignore. About 1 in 20 subjects lacks an age.
CohortTruth generate_cohort(const std::filesystem::path& root, std::size_t subjects,
                            std::uint64_t seed);

struct ToyPipeline {
  std::string name;
  std::string text;  // definition in the pipeline text format
};

/// The three-step cohort summary used by the end-to-end walkthrough.
const ToyPipeline& scenario_pipeline();
std::vector<ToyPipeline> toy_pipeline_corpus();

}  // namespace abase
