#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "jobvec/common.hpp"

namespace jobvec {

struct Vacancy {
  std::string id;
  std::string title;
  std::string description;
};

struct SkillEntry {
  std::string surface;       // whitespace-collapsed
  bool case_sensitive = false;
};

/// Ordered skill list; a skill's id is its position.
struct SkillVocabulary {
  std::vector<SkillEntry> entries;
  size_t size() const { return entries.size(); }
};

/// One vacancy reduced to its training signal: the title plus the set of
/// skill ids found in the text.
struct TaggedVacancy {
  std::string title;
  std::set<int> skills;
};

struct SkillFrequencyTable {
  std::vector<int64_t> counts;
  int64_t total = 0;
};

struct VacancyLoadResult {
  std::vector<Vacancy> vacancies;
  size_t malformed = 0;
  std::vector<std::string> line_errors;  // "line N: reason"
};

/// Reads JSON-lines vacancies (keys id/title/description). Malformed lines
/// are skipped and counted; the load fails when they exceed max_malformed_fraction.
VacancyLoadResult load_vacancies(const std::string& path, double max_malformed_fraction = 0.10);

/// Reads one skill surface per line ("#" at column 0 = comment, blank lines
/// skipped). The case_sensitive flag is set when strictly more than half of a
/// surface's alphabetic characters are uppercase.
SkillVocabulary load_skill_vocabulary(const std::string& path);
SkillVocabulary skill_vocabulary_from_lines(const std::vector<std::string>& lines);
void save_skill_vocabulary(const SkillVocabulary& vocab, const std::string& path);

bool majority_uppercase(const std::string& surface);

/// Distant supervision: a skill is tagged when its surface occurs in
/// title+description as a whole token sequence on word boundaries.
/// Matching is case-insensitive unless the entry is case-sensitive.
TaggedVacancy tag_skills(const Vacancy& v, const SkillVocabulary& vocab);

SkillFrequencyTable skill_frequencies(const std::vector<TaggedVacancy>& corpus, size_t vocab_size);

/// Tagged corpus JSON-lines: {"title": ..., "skills": [ids...]}.
void save_tagged_corpus(const std::vector<TaggedVacancy>& corpus, const std::string& path);
std::vector<TaggedVacancy> load_tagged_corpus(const std::string& path, size_t vocab_size);

}  // namespace jobvec
