#include "jobvec/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include <json.hpp>

namespace jobvec {

void TrainingConfig::validate() const {
  if (k_negatives < 1 || batch_pairs < 1 || lr_sgd <= 0 || lr_adagrad <= 0 || lr_finetune <= 0 ||
      eval_every_batches < 1 || patience < 1 || dim < 1 || hidden < 1 || d_out < 1 || epochs < 1 ||
      max_title_tokens < 1)
    throw UsageError("training config: all hyperparameters must be positive");
}

namespace {

double bounded_uniform(Rng& rng, double bound) {
  double x = snap32(rng.uniform(-bound, bound));
  // Snapping may land exactly on the open-interval edge; step one float ulp in.
  if (std::abs(x) >= bound) {
    float f = std::nextafterf(static_cast<float>(x), 0.0f);
    x = static_cast<double>(f);
  }
  return x;
}

}  // namespace

std::pair<Mat, Vec> init_linear(int in_dim, int out_dim, Rng& rng) {
  if (in_dim < 1 || out_dim < 1) throw Error("init_linear: dimensions must be positive");
  const double wb = std::sqrt(1.0 / in_dim);
  const double bb = std::sqrt(1.0 / out_dim);
  Mat w(out_dim, in_dim);
  for (double& v : w.a) v = bounded_uniform(rng, wb);
  Vec b(out_dim);
  for (double& v : b) v = bounded_uniform(rng, bb);
  return {std::move(w), std::move(b)};
}

Mat init_context_matrix(size_t vocab_size, int d_out) {
  return Mat(static_cast<int>(vocab_size), d_out);
}

namespace {

Model init_model_common(const SubwordVocabulary& subwords, size_t skill_count,
                        const TrainingConfig& config, Backbone backbone) {
  config.validate();
  subwords.validate();

  Model m;
  m.config = config;
  m.stage = Stage::Frozen;
  m.enc.vocab = subwords;
  m.enc.max_title_tokens = config.max_title_tokens;
  m.enc.backbone = std::move(backbone);

  Rng rng = make_rng(config.seed, "init");
  if (m.enc.backbone.kind == BackboneKind::TrainableTable) {
    // The token table stands in for a pre-trained backbone; rows follow the
    // same uniform scheme as a linear layer with input width d.
    m.enc.backbone.dim = config.dim;
    m.enc.backbone.table = init_linear(config.dim, static_cast<int>(subwords.size()), rng).first;
  } else if (m.enc.backbone.dim != config.dim) {
    throw UsageError("precomputed backbone width " + std::to_string(m.enc.backbone.dim) +
                     " does not match configured dim " + std::to_string(config.dim));
  }

  auto gate = init_linear(config.dim, 1, rng);
  m.enc.gating.w = gate.first.row_vec(0);
  m.enc.gating.b = gate.second[0];

  auto l1 = init_linear(config.dim, config.hidden, rng);
  m.enc.projection.w1 = std::move(l1.first);
  m.enc.projection.b1 = std::move(l1.second);
  auto l2 = init_linear(config.hidden, config.d_out, rng);
  m.enc.projection.w2 = std::move(l2.first);
  m.enc.projection.b2 = std::move(l2.second);

  m.context = init_context_matrix(skill_count, config.d_out);
  m.adagrad_accum = Mat(static_cast<int>(skill_count), config.d_out);
  return m;
}

}  // namespace

Model init_model(const SubwordVocabulary& subwords, size_t skill_count,
                 const TrainingConfig& config) {
  Backbone b;
  b.kind = BackboneKind::TrainableTable;
  return init_model_common(subwords, skill_count, config, std::move(b));
}

Model init_model_precomputed(const SubwordVocabulary& subwords, size_t skill_count,
                             const TrainingConfig& config, const std::string& path) {
  Backbone b;
  load_precomputed_backbone(b, path);
  return init_model_common(subwords, skill_count, config, std::move(b));
}

NoiseTable build_noise_table(const SkillFrequencyTable& freq) {
  if (freq.total <= 0) throw Error("build_noise_table: frequency table is all zero");
  NoiseTable table;
  table.probabilities.resize(freq.counts.size());
  double denom = 0.0;
  for (size_t i = 0; i < freq.counts.size(); ++i) {
    table.probabilities[i] = std::pow(static_cast<double>(freq.counts[i]), 0.75);
    denom += table.probabilities[i];
  }
  table.cdf.resize(freq.counts.size());
  double acc = 0.0;
  for (size_t i = 0; i < freq.counts.size(); ++i) {
    table.probabilities[i] /= denom;
    acc += table.probabilities[i];
    table.cdf[i] = acc;
  }
  table.cdf.back() = 1.0;
  return table;
}

int NoiseTable::sample(Rng& rng) const {
  const double u = rng.uniform();
  auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  auto ix = static_cast<size_t>(std::min<ptrdiff_t>(it - cdf.begin(),
                                                    static_cast<ptrdiff_t>(cdf.size()) - 1));
  // Zero-probability entries share their predecessor's cdf value and are
  // never selected by upper_bound, except via the final clamp; walk back.
  while (ix > 0 && probabilities[ix] == 0.0) --ix;
  return static_cast<int>(ix);
}

std::vector<int> sample_negatives(const NoiseTable& table, int positive, int k, Rng& rng) {
  int nonzero = 0;
  for (double p : table.probabilities)
    if (p > 0.0) ++nonzero;
  if (nonzero < 2)
    throw Error("sample_negatives: need at least two skills with nonzero probability");

  std::vector<int> out;
  out.reserve(k);
  while (static_cast<int>(out.size()) < k) {
    int s = table.sample(rng);
    if (s == positive) continue;
    out.push_back(s);
  }
  return out;
}

double pair_log_likelihood(const Vec& h, const Vec& u_positive,
                           const std::vector<Vec>& u_negatives) {
  double pos_dot = dot(u_positive, h);
  if (!std::isfinite(pos_dot)) throw Error("pair_log_likelihood: non-finite input");
  double ll = log_sigmoid(pos_dot);
  for (const auto& u : u_negatives) {
    double neg_dot = dot(u, h);
    if (!std::isfinite(neg_dot)) throw Error("pair_log_likelihood: non-finite input");
    ll += log_sigmoid(-neg_dot);
  }
  return ll;
}

namespace {

double pair_loss_from_context(const Vec& h, const Mat& context, const TrainPair& pair) {
  double loss = -log_sigmoid(dot(context.row(pair.positive), h));
  for (int neg : pair.negatives) loss -= log_sigmoid(-dot(context.row(neg), h));
  return loss;
}

}  // namespace

double batch_loss(const EncodedBatch& batch, const Model& model) {
  if (batch.pairs.empty()) throw Error("batch_loss: empty batch");
  std::vector<Vec> embeddings(batch.titles.size());
  for (size_t i = 0; i < batch.titles.size(); ++i)
    embeddings[i] = encode_trace(batch.titles[i], batch.title_strings[i], model.enc).out;
  double total = 0.0;
  for (const auto& pair : batch.pairs)
    total += pair_loss_from_context(embeddings[pair.title_ix], model.context, pair);
  return total / static_cast<double>(batch.pairs.size());
}

BatchGradients compute_gradients(const EncodedBatch& batch, const Model& model) {
  if (batch.pairs.empty()) throw Error("compute_gradients: empty batch");
  const auto& enc = model.enc;
  const int d = enc.dim();
  const int h_dim = static_cast<int>(enc.projection.b1.size());
  const int d_out = enc.out_dim();
  const double inv_pairs = 1.0 / static_cast<double>(batch.pairs.size());

  BatchGradients g;
  g.gating_w.assign(d, 0.0);
  g.w1 = Mat(h_dim, d);
  g.b1.assign(h_dim, 0.0);
  g.w2 = Mat(d_out, h_dim);
  g.b2.assign(d_out, 0.0);

  // Forward once per unique title.
  std::vector<EncodeTrace> traces;
  traces.reserve(batch.titles.size());
  for (size_t i = 0; i < batch.titles.size(); ++i)
    traces.push_back(encode_trace(batch.titles[i], batch.title_strings[i], enc));

  // Pair-level gradients: context rows, plus d(loss)/d(h) per unique title.
  std::vector<Vec> grad_h(batch.titles.size(), Vec(d_out, 0.0));
  double total_loss = 0.0;
  for (const auto& pair : batch.pairs) {
    const Vec& h = traces[pair.title_ix].out;
    Vec& gh = grad_h[pair.title_ix];

    const double* u_pos = model.context.row(pair.positive);
    double pos_dot = dot(u_pos, h);
    total_loss -= log_sigmoid(pos_dot);
    double pos_coef = (sigmoid(pos_dot) - 1.0) * inv_pairs;  // d(mean loss)/d(u_pos . h)
    Vec& g_pos = g.context_rows.try_emplace(pair.positive, Vec(d_out, 0.0)).first->second;
    for (int c = 0; c < d_out; ++c) {
      g_pos[c] += pos_coef * h[c];
      gh[c] += pos_coef * u_pos[c];
    }

    for (int neg : pair.negatives) {
      const double* u_neg = model.context.row(neg);
      double neg_dot = dot(u_neg, h);
      total_loss -= log_sigmoid(-neg_dot);
      double neg_coef = sigmoid(neg_dot) * inv_pairs;
      Vec& g_neg = g.context_rows.try_emplace(neg, Vec(d_out, 0.0)).first->second;
      for (int c = 0; c < d_out; ++c) {
        g_neg[c] += neg_coef * h[c];
        gh[c] += neg_coef * u_neg[c];
      }
    }
  }
  g.mean_loss = total_loss * inv_pairs;

  // Backward through the encoder, once per unique title.
  const bool trainable_backbone = enc.backbone.trainable();
  for (size_t t = 0; t < traces.size(); ++t) {
    const EncodeTrace& tr = traces[t];
    const Vec& gh = grad_h[t];
    if (norm2(gh) == 0.0) continue;  // title had no pairs (possible only via caller)

    // Projection: out = w2 * relu(w1 * agg + b1) + b2
    add_outer(g.w2, 1.0, gh, tr.hidden);
    axpy(1.0, gh, g.b2);
    Vec g_hidden = matvec_t(enc.projection.w2, gh);
    for (int i = 0; i < h_dim; ++i)
      if (tr.preact[i] <= 0.0) g_hidden[i] = 0.0;
    add_outer(g.w1, 1.0, g_hidden, tr.aggregated);
    axpy(1.0, g_hidden, g.b1);
    Vec g_agg = matvec_t(enc.projection.w1, g_hidden);

    // Gating and aggregation: agg = sum_i c_i v_i, c_i = s_i / S.
    const int n = tr.backbone_out.rows;
    const double S = tr.gate_sum[0];
    const double g_dot_agg = dot(g_agg, tr.aggregated);
    for (int i = 0; i < n; ++i) {
      const double* v = tr.backbone_out.row(i);
      const double s = tr.gate_sigma[i];
      const double g_logit = (s * (1.0 - s) / S) * (dot(v, g_agg) - g_dot_agg);
      for (int c = 0; c < d; ++c) g.gating_w[c] += g_logit * v[c];
      g.gating_b += g_logit;
      if (trainable_backbone) {
        Vec& row = g.backbone_rows.try_emplace(tr.tokens.ids[i], Vec(d, 0.0)).first->second;
        for (int c = 0; c < d; ++c) row[c] += tr.coeffs[i] * g_agg[c] + g_logit * enc.gating.w[c];
      }
    }
  }

  // Non-finite gradients point at diverged parameters; stop with diagnostics.
  auto check = [&](const Vec& v, const char* what) {
    for (double x : v)
      if (!std::isfinite(x))
        throw Error(std::string("compute_gradients: non-finite gradient in ") + what + " (batch of " +
                    std::to_string(batch.pairs.size()) + " pairs, " +
                    std::to_string(batch.titles.size()) + " titles)");
  };
  check(g.gating_w, "gating.w");
  check(Vec{g.gating_b, g.mean_loss}, "gating.b/loss");
  check(g.w1.a, "projection.w1");
  check(g.b1, "projection.b1");
  check(g.w2.a, "projection.w2");
  check(g.b2, "projection.b2");
  for (const auto& [id, row] : g.context_rows) check(row, "context row");
  for (const auto& [id, row] : g.backbone_rows) check(row, "backbone row");
  return g;
}

void sgd_step(Vec& params, const Vec& grads, double lr) {
  if (params.size() != grads.size()) throw Error("sgd_step: size mismatch");
  for (size_t i = 0; i < params.size(); ++i) params[i] -= lr * grads[i];
}

void sgd_step(Mat& params, const Mat& grads, double lr) {
  if (!params.same_shape(grads)) throw Error("sgd_step: shape mismatch");
  for (size_t i = 0; i < params.a.size(); ++i) params.a[i] -= lr * grads.a[i];
}

void sgd_step(double& param, double grad, double lr) { param -= lr * grad; }

void adagrad_step(Vec& params, const Vec& grads, Vec& accum, double lr, double eps) {
  if (params.size() != grads.size() || params.size() != accum.size())
    throw Error("adagrad_step: size mismatch");
  for (size_t i = 0; i < params.size(); ++i) {
    accum[i] += grads[i] * grads[i];
    params[i] -= lr * grads[i] / (std::sqrt(accum[i]) + eps);
  }
}

namespace {

void snap_vec(Vec& v) {
  for (double& x : v) x = snap32(x);
}

}  // namespace

void apply_gradients(Model& model, const BatchGradients& g, Stage stage) {
  const double lr_enc = stage == Stage::Frozen ? model.config.lr_sgd : model.config.lr_finetune;

  sgd_step(model.enc.gating.w, g.gating_w, lr_enc);
  sgd_step(model.enc.gating.b, g.gating_b, lr_enc);
  sgd_step(model.enc.projection.w1, g.w1, lr_enc);
  sgd_step(model.enc.projection.b1, g.b1, lr_enc);
  sgd_step(model.enc.projection.w2, g.w2, lr_enc);
  sgd_step(model.enc.projection.b2, g.b2, lr_enc);
  snap_vec(model.enc.gating.w);
  model.enc.gating.b = snap32(model.enc.gating.b);
  snap_vec(model.enc.projection.w1.a);
  snap_vec(model.enc.projection.b1);
  snap_vec(model.enc.projection.w2.a);
  snap_vec(model.enc.projection.b2);

  if (stage == Stage::Finetuned && model.enc.backbone.trainable()) {
    for (const auto& [token_id, grad] : g.backbone_rows) {
      double* row = model.enc.backbone.table.row(token_id);
      for (size_t c = 0; c < grad.size(); ++c)
        row[c] = snap32(row[c] - lr_enc * grad[c]);
    }
  }

  const int d_out = model.context.cols;
  for (const auto& [skill_id, grad] : g.context_rows) {
    double* row = model.context.row(skill_id);
    double* acc = model.adagrad_accum.row(skill_id);
    for (int c = 0; c < d_out; ++c) {
      acc[c] += grad[c] * grad[c];
      row[c] = snap32(row[c] - model.config.lr_adagrad * grad[c] / (std::sqrt(acc[c]) + kAdagradEpsilon));
    }
  }
}

std::vector<PairBatch> make_batches(const std::vector<TaggedVacancy>& corpus, int batch_pairs,
                                    Rng& rng) {
  if (batch_pairs < 1) throw Error("make_batches: batch_pairs must be positive");

  std::vector<size_t> order;
  order.reserve(corpus.size());
  for (size_t i = 0; i < corpus.size(); ++i)
    if (!corpus[i].skills.empty()) order.push_back(i);
  rng.shuffle(order);

  std::vector<PairBatch> batches;
  PairBatch current;
  std::unordered_map<std::string, int> title_ix;
  size_t pair_count = 0;

  auto flush = [&]() {
    if (!current.pairs.empty()) {
      batches.push_back(std::move(current));
      current = PairBatch{};
      title_ix.clear();
      pair_count = 0;
    }
  };

  for (size_t ix : order) {
    const TaggedVacancy& tv = corpus[ix];
    const size_t n = tv.skills.size();
    if (pair_count > 0 && pair_count + n > static_cast<size_t>(batch_pairs)) flush();

    auto [it, fresh] = title_ix.try_emplace(tv.title, static_cast<int>(current.titles.size()));
    if (fresh) current.titles.push_back(tv.title);
    for (int s : tv.skills) current.pairs.emplace_back(it->second, s);
    pair_count += n;
    if (pair_count >= static_cast<size_t>(batch_pairs)) flush();
  }
  flush();
  return batches;
}

namespace {

EncodedBatch encode_batch(const PairBatch& pb, const SubwordVocabulary& vocab, int max_tokens,
                          const NoiseTable& noise, int k, Rng& neg_rng) {
  EncodedBatch eb;
  eb.titles.reserve(pb.titles.size());
  eb.title_strings = pb.titles;
  for (const auto& t : pb.titles) eb.titles.push_back(tokenize(t, vocab, max_tokens));
  eb.pairs.reserve(pb.pairs.size());
  for (const auto& [tix, skill] : pb.pairs) {
    TrainPair p;
    p.title_ix = tix;
    p.positive = skill;
    p.negatives = sample_negatives(noise, skill, k, neg_rng);
    eb.pairs.push_back(std::move(p));
  }
  return eb;
}

}  // namespace

TrainResult train(const std::vector<TaggedVacancy>& corpus,
                  const std::vector<EvalInstance>& validation, Taxonomy& taxonomy,
                  const TrainingConfig& config, Stage stage, std::optional<Model> init,
                  const SubwordVocabulary* subwords, size_t skill_count) {
  config.validate();
  if (corpus.empty()) throw Error("train: empty corpus");
  if (validation.empty()) throw Error("train: empty validation set");
  if (stage == Stage::Finetuned && !init)
    throw UsageError("finetune stage requires an init checkpoint");

  Model model;
  if (init) {
    model = std::move(*init);
    model.config = config;
  } else {
    if (!subwords) throw UsageError("train: frozen stage without init needs a subword vocabulary");
    model = init_model(*subwords, skill_count, config);
  }
  model.stage = stage == Stage::Finetuned ? Stage::Finetuned : Stage::Frozen;

  SkillFrequencyTable freq = skill_frequencies(corpus, model.skill_count());
  NoiseTable noise = build_noise_table(freq);

  const char* tag = stage == Stage::Frozen ? "frozen" : "finetune";
  Rng neg_rng = make_rng(config.seed, std::string(tag) + "/negatives");

  TrainResult result;
  Model best;
  double best_mrr = -1.0;
  int evals_without_improvement = 0;
  int64_t batches_seen = 0;
  double window_loss = 0.0;
  int64_t window_batches = 0;
  bool stopped = false;

  auto run_eval = [&]() {
    EvalOutcome outcome = evaluate(model.enc, taxonomy, validation);
    TrainLogEntry entry;
    entry.batches_seen = batches_seen;
    entry.val_mrr_micro = outcome.report.mrr_micro;
    entry.val_mrr_macro = outcome.report.mrr_macro;
    entry.loss_window_mean = window_batches > 0 ? window_loss / window_batches : 0.0;
    result.log.push_back(entry);
    window_loss = 0.0;
    window_batches = 0;

    if (outcome.report.mrr_micro > best_mrr) {
      best_mrr = outcome.report.mrr_micro;
      best = model;
      evals_without_improvement = 0;
    } else {
      ++evals_without_improvement;
    }
    return evals_without_improvement >= config.patience;
  };

  for (int epoch = 0; epoch < config.epochs && !stopped; ++epoch) {
    Rng shuffle_rng = make_rng(config.seed, std::string(tag) + "/shuffle", epoch);
    auto batches = make_batches(corpus, config.batch_pairs, shuffle_rng);
    if (batches.empty()) throw Error("train: corpus has no vacancies with skills");

    for (const auto& pb : batches) {
      EncodedBatch eb = encode_batch(pb, model.enc.vocab, model.enc.max_title_tokens, noise,
                                     config.k_negatives, neg_rng);
      BatchGradients grads = compute_gradients(eb, model);
      apply_gradients(model, grads, stage);

      result.batch_losses.push_back(grads.mean_loss);
      window_loss += grads.mean_loss;
      ++window_batches;
      ++batches_seen;

      if (batches_seen % config.eval_every_batches == 0 && run_eval()) {
        stopped = true;
        break;
      }
    }
  }
  if (!stopped && window_batches > 0) run_eval();

  result.model = std::move(best);
  result.model.stage = model.stage;
  return result;
}

void save_training_log(const std::vector<TrainLogEntry>& log, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write training log: " + path);
  for (const auto& e : log) {
    nlohmann::ordered_json j;
    j["batches_seen"] = e.batches_seen;
    j["val_mrr_micro"] = e.val_mrr_micro;
    j["val_mrr_macro"] = e.val_mrr_macro;
    j["loss_window_mean"] = e.loss_window_mean;
    out << j.dump() << '\n';
  }
  if (!out) throw Error("failed writing training log: " + path);
}

}  // namespace jobvec
