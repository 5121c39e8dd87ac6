#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "jobvec/corpus.hpp"
#include "jobvec/encoder.hpp"
#include "jobvec/eval.hpp"

namespace jobvec {

struct TrainingConfig {
  int k_negatives = 5;
  int batch_pairs = 64;
  double lr_sgd = 0.05;
  double lr_adagrad = 0.01;
  double lr_finetune = 0.001;
  int64_t eval_every_batches = 5000;
  int patience = 3;
  uint64_t seed = 42;
  int dim = 300;       // backbone width d
  int hidden = 300;    // projection hidden width (defaults to d)
  int d_out = 300;
  int epochs = 3;
  int max_title_tokens = kDefaultMaxTitleTokens;

  void validate() const;
};

enum class Stage { Frozen, Finetuned };

inline const char* stage_name(Stage s) { return s == Stage::Frozen ? "frozen" : "finetuned"; }

/// Full trainable state: the encoder plus the per-skill context matrix and
/// Adagrad accumulators. This is exactly what checkpoints persist.
struct Model {
  uint32_t format_version = 1;
  EncoderParams enc;
  Mat context;        // |V| x d_out
  Mat adagrad_accum;  // |V| x d_out
  TrainingConfig config;
  Stage stage = Stage::Frozen;

  size_t skill_count() const { return static_cast<size_t>(context.rows); }
};

/// Uniform init for a linear layer: weights in (-sqrt(1/I), sqrt(1/I)),
/// biases in (-sqrt(1/O), sqrt(1/O)). Values land on the binary32 grid so
/// checkpoints round-trip bit-exactly.
std::pair<Mat, Vec> init_linear(int in_dim, int out_dim, Rng& rng);

/// All-zero |V| x d_out context matrix.
Mat init_context_matrix(size_t vocab_size, int d_out);

/// Fresh model with a trainable-table backbone.
Model init_model(const SubwordVocabulary& subwords, size_t skill_count,
                 const TrainingConfig& config);

/// Fresh model over a precomputed-per-title backbone loaded from `path`.
Model init_model_precomputed(const SubwordVocabulary& subwords, size_t skill_count,
                             const TrainingConfig& config, const std::string& path);

/// Negative-sampling distribution p_i proportional to f_i^(3/4).
struct NoiseTable {
  Vec probabilities;
  Vec cdf;

  /// One draw from the distribution.
  int sample(Rng& rng) const;
  size_t size() const { return probabilities.size(); }
};

NoiseTable build_noise_table(const SkillFrequencyTable& freq);

/// K i.i.d. draws; any draw equal to `positive` is resampled.
std::vector<int> sample_negatives(const NoiseTable& table, int positive, int k, Rng& rng);

/// log sigma(u_pos . h) + sum_k log sigma(-u_neg_k . h)
double pair_log_likelihood(const Vec& h, const Vec& u_positive, const std::vector<Vec>& u_negatives);

struct TrainPair {
  int title_ix = 0;  // into EncodedBatch::titles
  int positive = 0;
  std::vector<int> negatives;
};

/// A batch ready for the forward/backward pass: deduplicated tokenized
/// titles plus (title, positive, negatives) triples.
struct EncodedBatch {
  std::vector<TokenSequence> titles;
  std::vector<std::string> title_strings;  // parallel; precomputed backbone lookup
  std::vector<TrainPair> pairs;
};

/// Mean negative log-likelihood over the batch. Pure in the model parameters;
/// the finite-difference oracle perturbs against this.
double batch_loss(const EncodedBatch& batch, const Model& model);

struct BatchGradients {
  std::map<int, Vec> backbone_rows;  // token id -> d, trainable backbone only
  Vec gating_w;
  double gating_b = 0.0;
  Mat w1;
  Vec b1;
  Mat w2;
  Vec b2;
  std::map<int, Vec> context_rows;  // skill id -> d_out
  double mean_loss = 0.0;
};

/// Analytic gradients of batch_loss with respect to every parameter group.
/// Context rows not touched by the batch are absent (zero gradient).
BatchGradients compute_gradients(const EncodedBatch& batch, const Model& model);

void sgd_step(Vec& params, const Vec& grads, double lr);
void sgd_step(Mat& params, const Mat& grads, double lr);
void sgd_step(double& param, double grad, double lr);

inline constexpr double kAdagradEpsilon = 1e-10;

/// a += g*g; p -= lr * g / (sqrt(a) + eps), elementwise.
void adagrad_step(Vec& params, const Vec& grads, Vec& accum, double lr,
                  double eps = kAdagradEpsilon);

/// Applies a batch of gradients under the stage rules (frozen: gating+MLP by
/// SGD, context by Adagrad; finetune: backbone too, at the reduced rate) and
/// snaps touched parameters back onto the binary32 grid.
void apply_gradients(Model& model, const BatchGradients& grads, Stage stage);

/// Vacancy-grouped pair batches: one shuffle per call, a vacancy's pairs are
/// never split, zero-skill vacancies are dropped, and a vacancy with more
/// pairs than batch_pairs gets its own oversized batch.
struct PairBatch {
  std::vector<std::string> titles;          // deduplicated within the batch
  std::vector<std::pair<int, int>> pairs;   // (title index, skill id)
};

std::vector<PairBatch> make_batches(const std::vector<TaggedVacancy>& corpus, int batch_pairs,
                                    Rng& rng);

struct TrainLogEntry {
  int64_t batches_seen = 0;
  double val_mrr_micro = 0.0;
  double val_mrr_macro = 0.0;
  double loss_window_mean = 0.0;
};

struct TrainResult {
  Model model;  // best validation micro-MRR checkpoint
  std::vector<TrainLogEntry> log;
  std::vector<double> batch_losses;  // per-batch mean loss, in order
};

/// Runs the optimization loop with early stopping on validation micro-MRR.
/// Frozen stage with no init builds a fresh model from `subwords` and
/// `skill_count`; the finetune stage requires an init model.
TrainResult train(const std::vector<TaggedVacancy>& corpus,
                  const std::vector<EvalInstance>& validation, Taxonomy& taxonomy,
                  const TrainingConfig& config, Stage stage, std::optional<Model> init,
                  const SubwordVocabulary* subwords = nullptr, size_t skill_count = 0);

void save_training_log(const std::vector<TrainLogEntry>& log, const std::string& path);

}  // namespace jobvec
