#include "jobvec/corpus.hpp"

#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

namespace jobvec {

VacancyLoadResult load_vacancies(const std::string& path, double max_malformed_fraction) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open vacancies file: " + path);

  VacancyLoadResult result;
  std::unordered_set<std::string> seen_ids;
  std::string line;
  size_t line_no = 0;
  size_t considered = 0;

  auto reject = [&](const std::string& why) {
    ++result.malformed;
    result.line_errors.push_back("line " + std::to_string(line_no) + ": " + why);
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    ++considered;

    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      reject("not a JSON object");
      continue;
    }
    if (!j.contains("id") || !j["id"].is_string() || !j.contains("title") ||
        !j["title"].is_string() || !j.contains("description") || !j["description"].is_string()) {
      reject("missing or non-string id/title/description");
      continue;
    }
    Vacancy v{j["id"].get<std::string>(), j["title"].get<std::string>(),
              j["description"].get<std::string>()};
    if (trim(v.title).empty()) {
      reject("empty title");
      continue;
    }
    if (!seen_ids.insert(v.id).second) {
      reject("duplicate id '" + v.id + "'");
      continue;
    }
    result.vacancies.push_back(std::move(v));
  }

  if (considered > 0 &&
      static_cast<double>(result.malformed) > max_malformed_fraction * static_cast<double>(considered)) {
    throw Error("too many malformed vacancy lines in " + path + ": " +
                std::to_string(result.malformed) + " of " + std::to_string(considered));
  }
  return result;
}

bool majority_uppercase(const std::string& surface) {
  int alpha = 0, upper = 0;
  for (char c : surface) {
    auto u = static_cast<unsigned char>(c);
    if (std::isalpha(u)) {
      ++alpha;
      if (std::isupper(u)) ++upper;
    }
  }
  return alpha > 0 && 2 * upper > alpha;  // ties stay case-insensitive
}

namespace {

SkillVocabulary build_vocab(const std::vector<std::pair<std::string, size_t>>& surfaces) {
  SkillVocabulary vocab;
  std::unordered_map<std::string, size_t> exact_seen;       // surface -> line
  std::unordered_map<std::string, size_t> folded_seen;      // lowercased, case-insensitive only
  for (const auto& [raw, line_no] : surfaces) {
    SkillEntry entry;
    entry.surface = collapse_whitespace(raw);
    if (entry.surface.empty()) continue;
    entry.case_sensitive = majority_uppercase(entry.surface);

    auto [it, fresh] = exact_seen.emplace(entry.surface, line_no);
    if (!fresh) {
      throw Error("duplicate skill surface '" + entry.surface + "' (lines " +
                  std::to_string(it->second) + " and " + std::to_string(line_no) + ")");
    }
    if (!entry.case_sensitive) {
      std::string folded = to_lower_ascii(entry.surface);
      auto [fit, ffresh] = folded_seen.emplace(folded, line_no);
      if (!ffresh) {
        throw Error("skill surfaces collide after case folding: '" + entry.surface + "' (lines " +
                    std::to_string(fit->second) + " and " + std::to_string(line_no) + ")");
      }
    }
    vocab.entries.push_back(std::move(entry));
  }
  return vocab;
}

}  // namespace

SkillVocabulary load_skill_vocabulary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open skills file: " + path);
  std::vector<std::pair<std::string, size_t>> surfaces;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (trim(line).empty()) continue;
    surfaces.emplace_back(line, line_no);
  }
  return build_vocab(surfaces);
}

SkillVocabulary skill_vocabulary_from_lines(const std::vector<std::string>& lines) {
  std::vector<std::pair<std::string, size_t>> surfaces;
  for (size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty() || lines[i][0] == '#') continue;
    if (trim(lines[i]).empty()) continue;
    surfaces.emplace_back(lines[i], i + 1);
  }
  return build_vocab(surfaces);
}

void save_skill_vocabulary(const SkillVocabulary& vocab, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write skills file: " + path);
  for (const auto& e : vocab.entries) out << e.surface << '\n';
  if (!out) throw Error("failed writing skills file: " + path);
}

namespace {

// Matches `surface` (whitespace-collapsed) at text[pos...]. A ' ' in the
// surface consumes one-or-more whitespace characters in the text.
bool match_at(const std::string& text, size_t pos, const std::string& surface, bool case_sensitive,
              size_t& end_out) {
  size_t t = pos;
  for (size_t s = 0; s < surface.size(); ++s) {
    if (surface[s] == ' ') {
      if (t >= text.size() || !is_ascii_space(text[t])) return false;
      while (t < text.size() && is_ascii_space(text[t])) ++t;
    } else {
      if (t >= text.size()) return false;
      char a = text[t], b = surface[s];
      if (case_sensitive ? (a != b) : (ascii_lower(a) != ascii_lower(b))) return false;
      ++t;
    }
  }
  end_out = t;
  return true;
}

bool occurs_on_word_boundaries(const std::string& text, const std::string& surface,
                               bool case_sensitive) {
  if (surface.empty()) return false;
  for (size_t pos = 0; pos + 1 <= text.size(); ++pos) {
    if (pos > 0 && is_word_char(text[pos - 1])) continue;
    size_t end = 0;
    if (!match_at(text, pos, surface, case_sensitive, end)) continue;
    if (end < text.size() && is_word_char(text[end])) continue;
    return true;
  }
  return false;
}

}  // namespace

TaggedVacancy tag_skills(const Vacancy& v, const SkillVocabulary& vocab) {
  TaggedVacancy tagged;
  tagged.title = v.title;
  const std::string text = v.title + "\n" + v.description;
  for (size_t i = 0; i < vocab.entries.size(); ++i) {
    const auto& e = vocab.entries[i];
    if (occurs_on_word_boundaries(text, e.surface, e.case_sensitive))
      tagged.skills.insert(static_cast<int>(i));
  }
  return tagged;
}

SkillFrequencyTable skill_frequencies(const std::vector<TaggedVacancy>& corpus, size_t vocab_size) {
  SkillFrequencyTable table;
  table.counts.assign(vocab_size, 0);
  for (const auto& tv : corpus) {
    for (int s : tv.skills) {
      if (s < 0 || static_cast<size_t>(s) >= vocab_size)
        throw Error("skill id " + std::to_string(s) + " out of range (|V| = " +
                    std::to_string(vocab_size) + ")");
      ++table.counts[s];
      ++table.total;
    }
  }
  return table;
}

void save_tagged_corpus(const std::vector<TaggedVacancy>& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write tagged corpus: " + path);
  for (const auto& tv : corpus) {
    nlohmann::ordered_json j;
    j["title"] = tv.title;
    j["skills"] = std::vector<int>(tv.skills.begin(), tv.skills.end());
    out << j.dump() << '\n';
  }
  if (!out) throw Error("failed writing tagged corpus: " + path);
}

std::vector<TaggedVacancy> load_tagged_corpus(const std::string& path, size_t vocab_size) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open tagged corpus: " + path);
  std::vector<TaggedVacancy> corpus;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("title") || !j["title"].is_string() ||
        !j.contains("skills") || !j["skills"].is_array()) {
      throw Error("tagged corpus " + path + " line " + std::to_string(line_no) + ": malformed record");
    }
    TaggedVacancy tv;
    tv.title = j["title"].get<std::string>();
    for (const auto& s : j["skills"]) {
      if (!s.is_number_integer()) throw Error("tagged corpus " + path + " line " +
                                              std::to_string(line_no) + ": non-integer skill id");
      int id = s.get<int>();
      if (id < 0 || static_cast<size_t>(id) >= vocab_size)
        throw Error("tagged corpus " + path + " line " + std::to_string(line_no) +
                    ": skill id " + std::to_string(id) + " out of range");
      tv.skills.insert(id);
    }
    corpus.push_back(std::move(tv));
  }
  return corpus;
}

}  // namespace jobvec
