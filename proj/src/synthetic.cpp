#include "jobvec/synthetic.hpp"

#include <array>

namespace jobvec {

namespace {

constexpr std::array<const char*, 20> kFields = {
    "software", "finance",  "culinary", "electrical", "legal",
    "research", "retail",   "security", "teaching",   "medical",
    "farming",  "hotel",    "media",    "energy",     "transport",
    "mining",   "textile",  "aviation", "maritime",   "municipal"};

constexpr std::array<const char*, 20> kRoles = {
    "engineer",   "analyst",   "manager",       "technician", "specialist",
    "coordinator", "consultant", "developer",    "officer",    "supervisor",
    "planner",    "operator",  "advisor",       "scientist",  "administrator",
    "clerk",      "director",  "inspector",     "trainer",    "assistant"};

// Skill surfaces; disjoint from every word used in titles, descriptions and
// the default noise tokens, so tagging stays archetype-local.
constexpr std::array<const char*, 48> kSkillNouns = {
    "accounting",  "python",       "plumbing",    "soldering",   "nursing",
    "litigation",  "kubernetes",   "negotiation", "forecasting", "taxation",
    "scheduling",  "phlebotomy",   "autocad",     "copywriting", "payroll",
    "warehousing", "encryption",   "valuation",   "surveying",   "tutoring",
    "catering",    "diagnostics",  "prototyping", "compliance",  "recruiting",
    "translation", "ventilation",  "masonry",     "cartography", "calibration",
    "fermentation", "upholstery",  "hydraulics",  "robotics",    "winemaking",
    "fundraising", "archiving",    "stenography", "carpentry",   "brewery",
    "welding",     "auditing",     "dispatching", "irrigation",  "quarrying",
    "weaving",     "navigation",   "billing"};

// Index 0 is the empty prefix; two non-empty prefixes per archetype are
// reserved for held-out evaluation titles.
constexpr std::array<const char*, 8> kPrefixes = {"",      "senior",      "junior", "lead",
                                                  "chief", "experienced", "staff",  "trainee"};

std::string archetype_name(int a) {
  return std::string(kFields[a % kFields.size()]) + " " + kRoles[a / kFields.size()];
}

std::string skill_surface(int global_index) {
  const int n = static_cast<int>(kSkillNouns.size());
  std::string s = kSkillNouns[global_index % n];
  if (global_index >= n) s += std::to_string(global_index / n + 1);  // single word, stays unique
  return s;
}

}  // namespace

const std::vector<std::string>& default_noise_tokens() {
  static const std::vector<std::string> tokens = {"london", "ghent",  "austin", "mumbai",
                                                  "nairobi", "oslo",  "lima",   "sydney"};
  return tokens;
}

SyntheticCorpus generate_synthetic_corpus(int n_archetypes, int skills_per_archetype,
                                          int n_vacancies,
                                          const std::vector<std::string>& noise_tokens,
                                          uint64_t seed) {
  if (n_archetypes < 2) throw Error("generate_synthetic_corpus: need at least 2 archetypes");
  if (n_archetypes > static_cast<int>(kFields.size() * kRoles.size()))
    throw Error("generate_synthetic_corpus: archetype name pool exhausted");
  if (skills_per_archetype < 3)
    throw Error("generate_synthetic_corpus: skill pool too small (need >= 3 per archetype)");
  if (n_vacancies < 1) throw Error("generate_synthetic_corpus: need at least 1 vacancy");

  Rng rng = make_rng(seed, "synthetic");
  SyntheticCorpus out;

  for (int a = 0; a < n_archetypes; ++a) {
    for (int j = 0; j < skills_per_archetype; ++j) {
      SkillEntry e;
      e.surface = skill_surface(a * skills_per_archetype + j);
      e.case_sensitive = majority_uppercase(e.surface);
      out.skills.entries.push_back(std::move(e));
    }
  }

  std::vector<TaxonomyLabel> labels;
  labels.push_back({"root", "occupations", std::nullopt});
  std::vector<std::string> leaf_ids(n_archetypes);
  for (int a = 0; a < n_archetypes; ++a) {
    char id[16];
    std::snprintf(id, sizeof id, "arch_%03d", a);
    leaf_ids[a] = id;
    labels.push_back({leaf_ids[a], archetype_name(a), "root"});
  }
  out.taxonomy = make_taxonomy(std::move(labels));

  // Prefix indices reserved per archetype for held-out titles.
  const int np = static_cast<int>(kPrefixes.size()) - 1;  // non-empty prefixes
  std::vector<std::pair<int, int>> reserved(n_archetypes);
  for (int a = 0; a < n_archetypes; ++a)
    reserved[a] = {1 + a % np, 1 + (a + 3) % np};

  auto title_for = [&](int a, int prefix_ix, bool with_noise, size_t noise_ix) {
    std::string t = prefix_ix == 0 ? archetype_name(a)
                                   : std::string(kPrefixes[prefix_ix]) + " " + archetype_name(a);
    if (with_noise && !noise_tokens.empty()) t += " " + noise_tokens[noise_ix];
    return t;
  };

  for (int i = 0; i < n_vacancies; ++i) {
    const int a = static_cast<int>(rng.below(static_cast<uint64_t>(n_archetypes)));

    int prefix_ix;
    do {
      prefix_ix = static_cast<int>(rng.below(kPrefixes.size()));
    } while (prefix_ix == reserved[a].first || prefix_ix == reserved[a].second);

    const bool with_noise = rng.chance(0.5);
    const size_t noise_ix = noise_tokens.empty() ? 0 : rng.below(noise_tokens.size());

    const int pool = skills_per_archetype;
    const int mention = 3 + static_cast<int>(rng.below(static_cast<uint64_t>(pool - 2)));
    std::vector<int> local(pool);
    for (int j = 0; j < pool; ++j) local[j] = a * pool + j;
    rng.shuffle(local);

    Vacancy v;
    char id[20];
    std::snprintf(id, sizeof id, "vac_%06d", i);
    v.id = id;
    v.title = title_for(a, prefix_ix, with_noise, noise_ix);
    v.description = "Join our team as a " + archetype_name(a) + ". The role requires ";
    for (int j = 0; j < mention; ++j) {
      if (j > 0) v.description += j + 1 == mention ? " and " : ", ";
      v.description += out.skills.entries[local[j]].surface;
    }
    v.description += ". Apply today.";
    out.vacancies.push_back(std::move(v));
  }

  const int n_eval = std::max(2 * n_archetypes, n_vacancies / 10);
  for (int i = 0; i < n_eval; ++i) {
    const int a = i % n_archetypes;
    const int prefix_ix = (i / n_archetypes) % 2 == 0 ? reserved[a].first : reserved[a].second;
    const bool with_noise = rng.chance(0.5);
    const size_t noise_ix = noise_tokens.empty() ? 0 : rng.below(noise_tokens.size());
    out.eval_instances.push_back({title_for(a, prefix_ix, with_noise, noise_ix), leaf_ids[a]});
  }

  return out;
}

}  // namespace jobvec
