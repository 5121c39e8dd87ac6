#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "jobvec/encoder.hpp"

namespace jobvec {

struct TaxonomyLabel {
  std::string id;
  std::string name;
  std::optional<std::string> parent;
};

/// Hierarchical label list. Ranking happens over the leaves only; leaf label
/// embeddings are cached per encoder digest.
struct Taxonomy {
  std::vector<TaxonomyLabel> labels;
  std::vector<size_t> leaf_indices;        // into labels, input order
  Mat label_embeddings;                    // |leaves| x d_out, cached
  uint64_t embedding_digest = 0;           // encoder digest the cache was built with
  std::vector<bool> zero_norm_label;       // per leaf, set during embedding

  size_t leaf_count() const { return leaf_indices.size(); }
  const TaxonomyLabel& leaf(size_t i) const { return labels[leaf_indices[i]]; }
};

struct EvalInstance {
  std::string title;
  std::string gold;  // leaf label id
};

struct ClassMetrics {
  int count = 0;
  double mrr = 0.0;
  int hits1 = 0;
  int hits5 = 0;
  int hits10 = 0;
};

struct MetricsReport {
  double mrr_macro = 0.0, mrr_micro = 0.0;
  double recall1_macro = 0.0, recall1_micro = 0.0;
  double recall5_macro = 0.0, recall5_micro = 0.0;
  double recall10_macro = 0.0, recall10_micro = 0.0;
  std::vector<std::pair<std::string, ClassMetrics>> per_class;  // first-appearance order
};

struct RankedLabel {
  std::string label_id;
  std::string name;
  double score;
};

struct InstanceRank {
  std::string title;
  std::string gold;
  int rank = 0;  // 1-based
};

struct EvalOutcome {
  MetricsReport report;
  std::vector<InstanceRank> ranks;
};

/// Builds the Taxonomy from labels, resolving leaves and rejecting cycles
/// and dangling parent references.
Taxonomy make_taxonomy(std::vector<TaxonomyLabel> labels);

/// Labels never referenced as a parent, in input order.
std::vector<std::string> reduce_to_leaves(const Taxonomy& t);

/// Per class: shuffle, then alternate instances between the two halves.
/// Odd remainders go to validation for even class indices and to test for odd
/// ones (class index = order of first appearance).
std::pair<std::vector<EvalInstance>, std::vector<EvalInstance>> stratified_split(
    const std::vector<EvalInstance>& instances, Rng& rng);

using EncodeFn = std::function<Vec(const std::string&)>;

/// Encodes every leaf name, reusing the cache when the digest matches.
void embed_taxonomy(Taxonomy& t, const EncoderParams& enc);
void embed_taxonomy_with(Taxonomy& t, const EncodeFn& encode, uint64_t digest);

/// Leaves by descending cosine similarity; ties break by ascending leaf index.
/// Zero-norm label embeddings rank last with score -1.
std::vector<RankedLabel> rank_labels(const Vec& embedding, const Taxonomy& t);

/// 1-based rank of the gold leaf for this embedding.
int gold_rank(const Vec& embedding, const Taxonomy& t, const std::string& gold_id);

MetricsReport compute_metrics(const std::vector<InstanceRank>& ranks);

EvalOutcome evaluate(const EncoderParams& enc, Taxonomy& t,
                     const std::vector<EvalInstance>& instances);
EvalOutcome evaluate_with(const EncodeFn& encode, uint64_t digest, Taxonomy& t,
                          const std::vector<EvalInstance>& instances);

/// Top-k labels for a free-form title.
std::vector<RankedLabel> normalize(const std::string& title, Taxonomy& t,
                                   const EncoderParams& enc, int top_k);

/// Taxonomy file: JSON-lines {"id": str, "label": str, "parent": str|null}.
Taxonomy load_taxonomy(const std::string& path);
void save_taxonomy(const Taxonomy& t, const std::string& path);

/// Benchmark file: CSV with header "title,label_id".
std::vector<EvalInstance> load_benchmark(const std::string& path);
void save_benchmark(const std::vector<EvalInstance>& instances, const std::string& path);

std::string metrics_to_json(const MetricsReport& report);

}  // namespace jobvec
