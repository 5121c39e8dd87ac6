#pragma once

#include <string>
#include <vector>

#include "jobvec/corpus.hpp"
#include "jobvec/eval.hpp"

namespace jobvec {

/// Deterministic desk-scale fixture: archetype job roles with disjoint skill
/// pools, vacancies whose descriptions mention at least three archetype
/// skills, location-like noise tokens uncorrelated with skills, a flat
/// taxonomy over the archetype names, and held-out titles (reserved
/// prefix/archetype combinations) for evaluation.
struct SyntheticCorpus {
  SkillVocabulary skills;
  std::vector<Vacancy> vacancies;
  Taxonomy taxonomy;
  std::vector<EvalInstance> eval_instances;
};

SyntheticCorpus generate_synthetic_corpus(int n_archetypes, int skills_per_archetype,
                                          int n_vacancies,
                                          const std::vector<std::string>& noise_tokens,
                                          uint64_t seed);

/// Default location-like noise tokens used by the tests.
const std::vector<std::string>& default_noise_tokens();

}  // namespace jobvec
