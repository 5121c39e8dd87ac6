#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "jobvec/common.hpp"

namespace jobvec {

inline constexpr const char* kUnkToken = "[UNK]";
inline constexpr const char* kPadToken = "[PAD]";
inline constexpr const char* kContinuationPrefix = "##";
inline constexpr int kDefaultMaxTitleTokens = 32;

/// Subword vocabulary with WordPiece-style "##" continuation convention.
/// A plain token is usable at any position inside a word (its surface gains
/// the "##" prefix when matched mid-word); a token stored with a leading "##"
/// is usable only mid-word and is preferred over the plain form when both
/// exist.
struct SubwordVocabulary {
  std::vector<std::string> tokens;
  std::unordered_map<std::string, int> index;
  int unk_id = 0;
  int pad_id = 1;

  bool contains(const std::string& t) const { return index.count(t) > 0; }
  int id_of(const std::string& t) const {
    auto it = index.find(t);
    return it == index.end() ? -1 : it->second;
  }
  size_t size() const { return tokens.size(); }

  void rebuild_index();
  void validate() const;
};

struct TokenSequence {
  std::vector<int> ids;
  std::vector<std::string> surfaces;  // continuation pieces carry "##"
  bool truncated = false;

  size_t size() const { return ids.size(); }
};

/// Greedy longest-match-first subword split of a lowercased title.
/// Words with no decomposition become a single [UNK]. Sequences longer than
/// max_tokens are truncated and flagged.
TokenSequence tokenize(const std::string& title, const SubwordVocabulary& vocab,
                       int max_tokens = kDefaultMaxTitleTokens);

/// Builds a vocabulary by iterative highest-frequency adjacent-pair merging
/// over the title stream, starting from single characters. Deterministic:
/// ties break lexicographically; the seed parameter is accepted for interface
/// stability but the procedure draws nothing from it.
SubwordVocabulary build_subword_vocab(const std::vector<std::string>& titles, size_t target_size,
                                      uint64_t seed = 0);

/// Vocabulary file: one token per line, line number = id, "[UNK]" on line 0.
SubwordVocabulary load_subword_vocab(const std::string& path);
void save_subword_vocab(const SubwordVocabulary& vocab, const std::string& path);

}  // namespace jobvec
