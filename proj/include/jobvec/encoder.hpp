#pragma once

#include <map>
#include <string>
#include <vector>

#include "jobvec/linalg.hpp"
#include "jobvec/tokenizer.hpp"

namespace jobvec {

enum class BackboneKind { TrainableTable, PrecomputedPerTitle };

/// Produces one d-dimensional vector per subword token. Either a trainable
/// lookup table over token ids (non-contextual) or per-title matrices
/// precomputed offline and keyed by the exact title string.
struct Backbone {
  BackboneKind kind = BackboneKind::TrainableTable;
  int dim = 0;
  Mat table;                             // |tokens| x dim
  std::map<std::string, Mat> per_title;  // exact title -> n x dim
  std::string per_title_path;            // provenance for checkpoints

  bool trainable() const { return kind == BackboneKind::TrainableTable; }
};

struct GatingParams {
  Vec w;      // d
  double b = 0.0;
};

struct ProjectionParams {
  Mat w1;  // h x d
  Vec b1;  // h
  Mat w2;  // d_out x h
  Vec b2;  // d_out
};

/// Everything needed to embed a title. Checkpoints add the training-only
/// state (context matrix, optimizer accumulators) on top of this.
struct EncoderParams {
  SubwordVocabulary vocab;
  Backbone backbone;
  GatingParams gating;
  ProjectionParams projection;
  int max_title_tokens = kDefaultMaxTitleTokens;

  int dim() const { return backbone.dim; }
  int out_dim() const { return static_cast<int>(projection.b2.size()); }
};

double sigmoid(double x);
/// log(sigmoid(x)), stable for large |x|.
double log_sigmoid(double x);

/// Backbone vectors for a token sequence of `title` (n x d).
Mat backbone_output(const Backbone& backbone, const TokenSequence& seq, const std::string& title);

/// Normalized sigmoid gates: c_i = sigma(w.v_i + b) / sum_j sigma(w.v_j + b).
/// Strictly positive, sums to 1.
Vec gate_coefficients(const Mat& backbone_out, const GatingParams& gating);

/// Weighted sum of token vectors with the given coefficients.
Vec aggregate(const Mat& backbone_out, const Vec& coeffs);

/// Two linear layers with a ReLU in between: w2 * relu(w1 x + b1) + b2.
Vec project(const Vec& x, const ProjectionParams& p);

/// Intermediate activations of one forward pass, kept for backpropagation.
struct EncodeTrace {
  TokenSequence tokens;
  Mat backbone_out;   // n x d
  Vec gate_logits;    // n
  Vec gate_sigma;     // n
  Vec gate_sum;       // singleton: sum of sigmas
  Vec coeffs;         // n
  Vec aggregated;     // d
  Vec preact;         // h, before ReLU
  Vec hidden;         // h
  Vec out;            // d_out
};

EncodeTrace encode_trace(const TokenSequence& seq, const std::string& title,
                         const EncoderParams& enc);

/// Full encoder: tokenize, backbone, gate, aggregate, project.
Vec encode_title(const std::string& title, const EncoderParams& enc);

/// Mean-pooling baseline: unweighted mean of backbone vectors (dimension d).
Vec encode_title_mean_baseline(const std::string& title, const SubwordVocabulary& vocab,
                               const Backbone& backbone,
                               int max_tokens = kDefaultMaxTitleTokens);

/// Content hash over the encoder's vocabulary and tensors (at checkpoint
/// binary32 precision); used to key cached taxonomy embeddings.
uint64_t encoder_digest(const EncoderParams& enc);

/// Precomputed backbone file: JSON-lines {"title": str, "vectors": [[d]...]}.
void load_precomputed_backbone(Backbone& backbone, const std::string& path);

}  // namespace jobvec
