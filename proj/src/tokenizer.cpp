#include "jobvec/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

namespace jobvec {

void SubwordVocabulary::rebuild_index() {
  index.clear();
  for (size_t i = 0; i < tokens.size(); ++i) {
    auto [it, fresh] = index.emplace(tokens[i], static_cast<int>(i));
    if (!fresh) throw Error("subword vocabulary: duplicate token '" + tokens[i] + "'");
  }
  auto unk = index.find(kUnkToken);
  if (unk == index.end()) throw Error("subword vocabulary: missing [UNK] token");
  unk_id = unk->second;
  auto pad = index.find(kPadToken);
  pad_id = pad == index.end() ? -1 : pad->second;
}

void SubwordVocabulary::validate() const {
  if (tokens.empty() || !contains(kUnkToken)) throw Error("subword vocabulary: missing [UNK] token");
}

namespace {

// Splits a UTF-8 string into code-point units (each unit is the byte span of
// one code point). Invalid lead bytes fall through as single bytes.
std::vector<std::string> utf8_units(const std::string& s) {
  std::vector<std::string> units;
  size_t i = 0;
  while (i < s.size()) {
    auto b = static_cast<unsigned char>(s[i]);
    size_t len = 1;
    if ((b & 0xE0) == 0xC0) len = 2;
    else if ((b & 0xF0) == 0xE0) len = 3;
    else if ((b & 0xF8) == 0xF0) len = 4;
    len = std::min(len, s.size() - i);
    units.push_back(s.substr(i, len));
    i += len;
  }
  return units;
}

// Greedy longest-match of one word. Returns false when no decomposition exists.
bool match_word(const std::string& word, const SubwordVocabulary& vocab,
                std::vector<int>& ids, std::vector<std::string>& surfaces) {
  const auto units = utf8_units(word);
  std::vector<int> word_ids;
  std::vector<std::string> word_surfaces;
  size_t start = 0;
  while (start < units.size()) {
    int found = -1;
    size_t found_end = 0;
    std::string found_surface;
    for (size_t end = units.size(); end > start; --end) {
      std::string piece;
      for (size_t k = start; k < end; ++k) piece += units[k];
      if (start == 0) {
        int id = vocab.id_of(piece);
        if (id >= 0) {
          found = id;
          found_end = end;
          found_surface = piece;
          break;
        }
      } else {
        // Prefer an explicit "##" entry; fall back to the plain token, which
        // is usable anywhere. Either way the surface carries the marker.
        int id = vocab.id_of(kContinuationPrefix + piece);
        if (id < 0) id = vocab.id_of(piece);
        if (id >= 0) {
          found = id;
          found_end = end;
          found_surface = kContinuationPrefix + piece;
          break;
        }
      }
    }
    if (found < 0) return false;
    word_ids.push_back(found);
    word_surfaces.push_back(found_surface);
    start = found_end;
  }
  ids.insert(ids.end(), word_ids.begin(), word_ids.end());
  surfaces.insert(surfaces.end(), word_surfaces.begin(), word_surfaces.end());
  return true;
}

}  // namespace

TokenSequence tokenize(const std::string& title, const SubwordVocabulary& vocab, int max_tokens) {
  vocab.validate();
  const std::string normalized = to_lower_ascii(collapse_whitespace(title));
  if (normalized.empty()) throw Error("tokenize: empty title");
  if (max_tokens < 1) throw Error("tokenize: max_tokens must be positive");

  TokenSequence seq;
  for (const auto& word : split_words(normalized)) {
    std::vector<int> ids;
    std::vector<std::string> surfaces;
    if (match_word(word, vocab, ids, surfaces)) {
      seq.ids.insert(seq.ids.end(), ids.begin(), ids.end());
      seq.surfaces.insert(seq.surfaces.end(), surfaces.begin(), surfaces.end());
    } else {
      seq.ids.push_back(vocab.unk_id);
      seq.surfaces.push_back(kUnkToken);
    }
  }
  if (static_cast<int>(seq.ids.size()) > max_tokens) {
    seq.ids.resize(max_tokens);
    seq.surfaces.resize(max_tokens);
    seq.truncated = true;
  }
  return seq;
}

SubwordVocabulary build_subword_vocab(const std::vector<std::string>& titles, size_t target_size,
                                      uint64_t /*seed*/) {
  // Word frequencies after the same normalization tokenize() applies.
  std::map<std::string, int64_t> word_freq;
  for (const auto& title : titles) {
    for (const auto& w : split_words(to_lower_ascii(collapse_whitespace(title)))) ++word_freq[w];
  }

  std::set<std::string> char_set;
  std::vector<std::pair<std::vector<std::string>, int64_t>> words;  // symbol list, freq
  words.reserve(word_freq.size());
  for (const auto& [word, freq] : word_freq) {
    auto units = utf8_units(word);
    for (const auto& u : units) char_set.insert(u);
    words.emplace_back(std::move(units), freq);
  }

  const size_t base = 2 + char_set.size();  // [UNK] + [PAD] + single characters
  if (target_size < base) {
    throw Error("build_subword_vocab: target_size " + std::to_string(target_size) +
                " below minimum " + std::to_string(base) + " (specials + distinct characters)");
  }

  SubwordVocabulary vocab;
  vocab.tokens.push_back(kUnkToken);
  vocab.tokens.push_back(kPadToken);
  vocab.tokens.insert(vocab.tokens.end(), char_set.begin(), char_set.end());

  while (vocab.tokens.size() < target_size) {
    // Count adjacent symbol pairs, weighted by word frequency. Overlapping
    // occurrences all count; merging is applied left-to-right afterwards.
    std::map<std::pair<std::string, std::string>, int64_t> pair_freq;
    for (const auto& [symbols, freq] : words) {
      for (size_t i = 0; i + 1 < symbols.size(); ++i)
        pair_freq[{symbols[i], symbols[i + 1]}] += freq;
    }
    if (pair_freq.empty()) break;

    std::pair<std::string, std::string> best;
    int64_t best_freq = -1;
    for (const auto& [pr, freq] : pair_freq) {
      if (freq > best_freq) {  // map iteration is ordered, so ties keep the
        best = pr;             // lexicographically smallest pair
        best_freq = freq;
      }
    }

    const std::string merged = best.first + best.second;
    vocab.tokens.push_back(merged);
    for (auto& [symbols, freq] : words) {
      std::vector<std::string> out;
      out.reserve(symbols.size());
      size_t i = 0;
      while (i < symbols.size()) {
        if (i + 1 < symbols.size() && symbols[i] == best.first && symbols[i + 1] == best.second) {
          out.push_back(merged);
          i += 2;
        } else {
          out.push_back(symbols[i]);
          ++i;
        }
      }
      symbols = std::move(out);
    }
  }

  vocab.rebuild_index();
  return vocab;
}

SubwordVocabulary load_subword_vocab(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open vocabulary file: " + path);
  SubwordVocabulary vocab;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    vocab.tokens.push_back(line);
  }
  while (!vocab.tokens.empty() && vocab.tokens.back().empty()) vocab.tokens.pop_back();
  if (vocab.tokens.empty() || vocab.tokens[0] != kUnkToken)
    throw Error("vocabulary file must have [UNK] on line 0: " + path);
  vocab.rebuild_index();
  return vocab;
}

void save_subword_vocab(const SubwordVocabulary& vocab, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write vocabulary file: " + path);
  for (const auto& t : vocab.tokens) out << t << '\n';
  if (!out) throw Error("failed writing vocabulary file: " + path);
}

}  // namespace jobvec
