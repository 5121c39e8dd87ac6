#include "jobvec/encoder.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

namespace jobvec {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double log_sigmoid(double x) {
  if (x >= 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

Mat backbone_output(const Backbone& backbone, const TokenSequence& seq, const std::string& title) {
  const int n = static_cast<int>(seq.size());
  if (n == 0) throw Error("backbone: empty token sequence");
  if (backbone.kind == BackboneKind::TrainableTable) {
    Mat out(n, backbone.dim);
    for (int i = 0; i < n; ++i) {
      int id = seq.ids[i];
      if (id < 0 || id >= backbone.table.rows)
        throw Error("backbone: token id " + std::to_string(id) + " outside table");
      const double* src = backbone.table.row(id);
      std::copy(src, src + backbone.dim, out.row(i));
    }
    return out;
  }
  auto it = backbone.per_title.find(title);
  if (it == backbone.per_title.end())
    throw Error("backbone: no precomputed vectors for title '" + title + "'");
  if (it->second.rows != n)
    throw Error("backbone: precomputed vectors for '" + title + "' have " +
                std::to_string(it->second.rows) + " rows, expected " + std::to_string(n));
  return it->second;
}

Vec gate_coefficients(const Mat& backbone_out, const GatingParams& gating) {
  const int n = backbone_out.rows;
  if (n < 1) throw Error("gate_coefficients: need at least one token");
  if (static_cast<int>(gating.w.size()) != backbone_out.cols)
    throw Error("gate_coefficients: gating width mismatch");
  Vec sigma(n);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    sigma[i] = sigmoid(dot(backbone_out.row(i), gating.w) + gating.b);
    sum += sigma[i];
  }
  Vec coeffs(n);
  for (int i = 0; i < n; ++i) coeffs[i] = sigma[i] / sum;
  return coeffs;
}

Vec aggregate(const Mat& backbone_out, const Vec& coeffs) {
  if (static_cast<size_t>(backbone_out.rows) != coeffs.size())
    throw Error("aggregate: coefficient count does not match token count");
  Vec out(backbone_out.cols, 0.0);
  for (int i = 0; i < backbone_out.rows; ++i) {
    const double* row = backbone_out.row(i);
    for (int c = 0; c < backbone_out.cols; ++c) out[c] += coeffs[i] * row[c];
  }
  return out;
}

Vec project(const Vec& x, const ProjectionParams& p) {
  if (static_cast<size_t>(p.w1.cols) != x.size() ||
      static_cast<size_t>(p.w1.rows) != p.b1.size() || p.w2.cols != p.w1.rows ||
      static_cast<size_t>(p.w2.rows) != p.b2.size())
    throw Error("project: shape mismatch");
  Vec z = matvec(p.w1, x);
  for (size_t i = 0; i < z.size(); ++i) z[i] = std::max(0.0, z[i] + p.b1[i]);
  Vec out = matvec(p.w2, z);
  for (size_t i = 0; i < out.size(); ++i) out[i] += p.b2[i];
  return out;
}

EncodeTrace encode_trace(const TokenSequence& seq, const std::string& title,
                         const EncoderParams& enc) {
  EncodeTrace t;
  t.tokens = seq;
  t.backbone_out = backbone_output(enc.backbone, seq, title);

  const int n = t.backbone_out.rows;
  t.gate_logits.resize(n);
  t.gate_sigma.resize(n);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    t.gate_logits[i] = dot(t.backbone_out.row(i), enc.gating.w) + enc.gating.b;
    t.gate_sigma[i] = sigmoid(t.gate_logits[i]);
    sum += t.gate_sigma[i];
  }
  t.gate_sum = {sum};
  t.coeffs.resize(n);
  for (int i = 0; i < n; ++i) t.coeffs[i] = t.gate_sigma[i] / sum;

  t.aggregated = aggregate(t.backbone_out, t.coeffs);

  t.preact = matvec(enc.projection.w1, t.aggregated);
  for (size_t i = 0; i < t.preact.size(); ++i) t.preact[i] += enc.projection.b1[i];
  t.hidden.resize(t.preact.size());
  for (size_t i = 0; i < t.preact.size(); ++i) t.hidden[i] = std::max(0.0, t.preact[i]);
  t.out = matvec(enc.projection.w2, t.hidden);
  for (size_t i = 0; i < t.out.size(); ++i) t.out[i] += enc.projection.b2[i];
  return t;
}

Vec encode_title(const std::string& title, const EncoderParams& enc) {
  TokenSequence seq = tokenize(title, enc.vocab, enc.max_title_tokens);
  return encode_trace(seq, title, enc).out;
}

Vec encode_title_mean_baseline(const std::string& title, const SubwordVocabulary& vocab,
                               const Backbone& backbone, int max_tokens) {
  TokenSequence seq = tokenize(title, vocab, max_tokens);
  Mat out = backbone_output(backbone, seq, title);
  Vec mean(out.cols, 0.0);
  for (int i = 0; i < out.rows; ++i) {
    const double* row = out.row(i);
    for (int c = 0; c < out.cols; ++c) mean[c] += row[c];
  }
  for (double& v : mean) v /= out.rows;
  return mean;
}

namespace {

uint64_t digest_f32(const Vec& v, uint64_t h) {
  for (double d : v) {
    float f = static_cast<float>(d);
    h = fnv1a64(&f, sizeof f, h);
  }
  return h;
}

uint64_t digest_f32(const Mat& m, uint64_t h) {
  h = fnv1a64(&m.rows, sizeof m.rows, h);
  h = fnv1a64(&m.cols, sizeof m.cols, h);
  return digest_f32(m.a, h);
}

}  // namespace

uint64_t encoder_digest(const EncoderParams& enc) {
  uint64_t h = fnv1a64("jobvec-encoder");
  for (const auto& t : enc.vocab.tokens) {
    h = fnv1a64(t, h);
    h = fnv1a64("\x1f", h);
  }
  int kind = static_cast<int>(enc.backbone.kind);
  h = fnv1a64(&kind, sizeof kind, h);
  h = fnv1a64(&enc.backbone.dim, sizeof enc.backbone.dim, h);
  if (enc.backbone.kind == BackboneKind::TrainableTable) {
    h = digest_f32(enc.backbone.table, h);
  } else {
    h = fnv1a64(enc.backbone.per_title_path, h);
    for (const auto& [title, mat] : enc.backbone.per_title) {
      h = fnv1a64(title, h);
      h = digest_f32(mat, h);
    }
  }
  h = digest_f32(enc.gating.w, h);
  h = digest_f32(Vec{enc.gating.b}, h);
  h = digest_f32(enc.projection.w1, h);
  h = digest_f32(enc.projection.b1, h);
  h = digest_f32(enc.projection.w2, h);
  h = digest_f32(enc.projection.b2, h);
  h = fnv1a64(&enc.max_title_tokens, sizeof enc.max_title_tokens, h);
  return h;
}

void load_precomputed_backbone(Backbone& backbone, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open precomputed backbone file: " + path);
  backbone.kind = BackboneKind::PrecomputedPerTitle;
  backbone.per_title_path = path;
  backbone.per_title.clear();

  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("title") || !j["title"].is_string() ||
        !j.contains("vectors") || !j["vectors"].is_array() || j["vectors"].empty()) {
      throw Error("precomputed backbone " + path + " line " + std::to_string(line_no) +
                  ": malformed record");
    }
    const auto& rows = j["vectors"];
    const int n = static_cast<int>(rows.size());
    const int d = static_cast<int>(rows[0].size());
    if (backbone.dim == 0) backbone.dim = d;
    if (d != backbone.dim)
      throw Error("precomputed backbone " + path + " line " + std::to_string(line_no) +
                  ": inconsistent dimension");
    Mat m(n, d);
    for (int r = 0; r < n; ++r) {
      if (static_cast<int>(rows[r].size()) != d)
        throw Error("precomputed backbone " + path + " line " + std::to_string(line_no) +
                    ": ragged vectors");
      for (int c = 0; c < d; ++c) m.at(r, c) = rows[r][c].get<double>();
    }
    backbone.per_title[j["title"].get<std::string>()] = std::move(m);
  }
  if (backbone.per_title.empty()) throw Error("precomputed backbone file is empty: " + path);
}

}  // namespace jobvec
