#include "jobvec/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

namespace jobvec {

Taxonomy make_taxonomy(std::vector<TaxonomyLabel> labels) {
  Taxonomy t;
  t.labels = std::move(labels);

  std::unordered_map<std::string, size_t> by_id;
  for (size_t i = 0; i < t.labels.size(); ++i) {
    if (!by_id.emplace(t.labels[i].id, i).second)
      throw Error("taxonomy: duplicate label id '" + t.labels[i].id + "'");
  }

  std::unordered_set<std::string> referenced_as_parent;
  for (const auto& l : t.labels) {
    if (!l.parent) continue;
    if (!by_id.count(*l.parent))
      throw Error("taxonomy: label '" + l.id + "' references unknown parent '" + *l.parent + "'");
    referenced_as_parent.insert(*l.parent);
  }

  // Any parent chain longer than the label count implies a cycle.
  for (const auto& l : t.labels) {
    const TaxonomyLabel* cur = &l;
    size_t steps = 0;
    while (cur->parent) {
      cur = &t.labels[by_id.at(*cur->parent)];
      if (++steps > t.labels.size())
        throw Error("taxonomy: cycle detected through label '" + l.id + "'");
    }
  }

  for (size_t i = 0; i < t.labels.size(); ++i) {
    if (!referenced_as_parent.count(t.labels[i].id)) t.leaf_indices.push_back(i);
  }
  return t;
}

std::vector<std::string> reduce_to_leaves(const Taxonomy& t) {
  std::vector<std::string> ids;
  ids.reserve(t.leaf_indices.size());
  for (size_t ix : t.leaf_indices) ids.push_back(t.labels[ix].id);
  return ids;
}

std::pair<std::vector<EvalInstance>, std::vector<EvalInstance>> stratified_split(
    const std::vector<EvalInstance>& instances, Rng& rng) {
  if (instances.empty()) throw Error("stratified_split: empty instance list");

  std::vector<std::string> class_order;
  std::map<std::string, std::vector<size_t>> by_class;
  for (size_t i = 0; i < instances.size(); ++i) {
    auto [it, fresh] = by_class.emplace(instances[i].gold, std::vector<size_t>());
    if (fresh || it->second.empty()) {
      if (std::find(class_order.begin(), class_order.end(), instances[i].gold) == class_order.end())
        class_order.push_back(instances[i].gold);
    }
    it->second.push_back(i);
  }

  std::vector<EvalInstance> validation, test;
  for (size_t ci = 0; ci < class_order.size(); ++ci) {
    auto members = by_class.at(class_order[ci]);
    rng.shuffle(members);
    // Alternate assignment; odd remainders land on the starting half, which
    // flips with class-index parity.
    bool to_validation = (ci % 2 == 0);
    for (size_t k = 0; k < members.size(); ++k) {
      (to_validation ? validation : test).push_back(instances[members[k]]);
      to_validation = !to_validation;
    }
  }
  return {std::move(validation), std::move(test)};
}

void embed_taxonomy_with(Taxonomy& t, const EncodeFn& encode, uint64_t digest) {
  if (t.label_embeddings.rows == static_cast<int>(t.leaf_count()) && t.embedding_digest == digest &&
      t.label_embeddings.rows > 0)
    return;

  std::vector<std::string> failures;
  Mat embeddings;
  t.zero_norm_label.assign(t.leaf_count(), false);
  for (size_t i = 0; i < t.leaf_count(); ++i) {
    const auto& leaf = t.leaf(i);
    Vec e;
    try {
      e = encode(leaf.name);
    } catch (const Error& err) {
      failures.push_back(leaf.id + " ('" + leaf.name + "'): " + err.what());
      continue;
    }
    if (embeddings.rows == 0) embeddings = Mat(static_cast<int>(t.leaf_count()), static_cast<int>(e.size()));
    if (static_cast<int>(e.size()) != embeddings.cols)
      throw Error("embed_taxonomy: inconsistent embedding width");
    std::copy(e.begin(), e.end(), embeddings.row(static_cast<int>(i)));
    if (norm2(e) == 0.0) {
      t.zero_norm_label[i] = true;
      std::cerr << "warning: label '" << leaf.id << "' embeds to a zero vector; it will rank last\n";
    }
  }
  if (!failures.empty()) {
    std::string msg = "embed_taxonomy: " + std::to_string(failures.size()) + " label(s) failed:";
    for (const auto& f : failures) msg += "\n  " + f;
    throw Error(msg);
  }
  t.label_embeddings = std::move(embeddings);
  t.embedding_digest = digest;
}

void embed_taxonomy(Taxonomy& t, const EncoderParams& enc) {
  embed_taxonomy_with(t, [&enc](const std::string& s) { return encode_title(s, enc); },
                      encoder_digest(enc));
}

namespace {

// Cosine scores against every leaf; zero-norm labels score -1.
Vec leaf_scores(const Vec& embedding, const Taxonomy& t) {
  if (t.label_embeddings.rows != static_cast<int>(t.leaf_count()) || t.leaf_count() == 0)
    throw Error("rank_labels: taxonomy has no cached label embeddings");
  if (t.label_embeddings.cols != static_cast<int>(embedding.size()))
    throw Error("rank_labels: embedding width does not match cached labels");
  const double en = std::sqrt(norm2(embedding));
  if (en == 0.0) throw Error("rank_labels: title embedding has zero norm");

  Vec scores(t.leaf_count());
  for (size_t i = 0; i < t.leaf_count(); ++i) {
    if (!t.zero_norm_label.empty() && t.zero_norm_label[i]) {
      scores[i] = -1.0;
      continue;
    }
    const double* row = t.label_embeddings.row(static_cast<int>(i));
    double d = 0.0, n = 0.0;
    for (size_t c = 0; c < embedding.size(); ++c) {
      d += row[c] * embedding[c];
      n += row[c] * row[c];
    }
    scores[i] = d / (en * std::sqrt(n));
  }
  return scores;
}

}  // namespace

std::vector<RankedLabel> rank_labels(const Vec& embedding, const Taxonomy& t) {
  Vec scores = leaf_scores(embedding, t);
  std::vector<size_t> order(t.leaf_count());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&scores](size_t a, size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  std::vector<RankedLabel> out;
  out.reserve(order.size());
  for (size_t ix : order) out.push_back({t.leaf(ix).id, t.leaf(ix).name, scores[ix]});
  return out;
}

int gold_rank(const Vec& embedding, const Taxonomy& t, const std::string& gold_id) {
  Vec scores = leaf_scores(embedding, t);
  size_t gold_ix = t.leaf_count();
  for (size_t i = 0; i < t.leaf_count(); ++i) {
    if (t.leaf(i).id == gold_id) {
      gold_ix = i;
      break;
    }
  }
  if (gold_ix == t.leaf_count())
    throw Error("gold label '" + gold_id + "' is not a leaf of the taxonomy");
  int rank = 1;
  for (size_t i = 0; i < t.leaf_count(); ++i) {
    if (scores[i] > scores[gold_ix] || (scores[i] == scores[gold_ix] && i < gold_ix)) ++rank;
  }
  return rank;
}

MetricsReport compute_metrics(const std::vector<InstanceRank>& ranks) {
  if (ranks.empty()) throw Error("compute_metrics: no instances");

  std::vector<std::string> class_order;
  std::map<std::string, ClassMetrics> per_class;
  std::map<std::string, double> class_inv_rank_sum;

  double inv_rank_sum = 0.0;
  int hits1 = 0, hits5 = 0, hits10 = 0;
  for (const auto& r : ranks) {
    if (r.rank < 1) throw Error("compute_metrics: ranks are 1-based");
    auto [it, fresh] = per_class.emplace(r.gold, ClassMetrics{});
    if (fresh) class_order.push_back(r.gold);
    ClassMetrics& cm = it->second;
    ++cm.count;
    class_inv_rank_sum[r.gold] += 1.0 / r.rank;
    inv_rank_sum += 1.0 / r.rank;
    if (r.rank <= 1) ++cm.hits1, ++hits1;
    if (r.rank <= 5) ++cm.hits5, ++hits5;
    if (r.rank <= 10) ++cm.hits10, ++hits10;
  }

  MetricsReport rep;
  const auto n = static_cast<double>(ranks.size());
  rep.mrr_micro = inv_rank_sum / n;
  rep.recall1_micro = hits1 / n;
  rep.recall5_micro = hits5 / n;
  rep.recall10_micro = hits10 / n;

  double mrr_sum = 0.0, r1_sum = 0.0, r5_sum = 0.0, r10_sum = 0.0;
  for (const auto& cls : class_order) {
    ClassMetrics& cm = per_class.at(cls);
    cm.mrr = class_inv_rank_sum.at(cls) / cm.count;
    mrr_sum += cm.mrr;
    r1_sum += static_cast<double>(cm.hits1) / cm.count;
    r5_sum += static_cast<double>(cm.hits5) / cm.count;
    r10_sum += static_cast<double>(cm.hits10) / cm.count;
    rep.per_class.emplace_back(cls, cm);
  }
  const auto c = static_cast<double>(class_order.size());
  rep.mrr_macro = mrr_sum / c;
  rep.recall1_macro = r1_sum / c;
  rep.recall5_macro = r5_sum / c;
  rep.recall10_macro = r10_sum / c;
  return rep;
}

EvalOutcome evaluate_with(const EncodeFn& encode, uint64_t digest, Taxonomy& t,
                          const std::vector<EvalInstance>& instances) {
  embed_taxonomy_with(t, encode, digest);
  std::unordered_set<std::string> leaf_ids;
  for (size_t i = 0; i < t.leaf_count(); ++i) leaf_ids.insert(t.leaf(i).id);

  EvalOutcome out;
  out.ranks.reserve(instances.size());
  for (const auto& inst : instances) {
    if (!leaf_ids.count(inst.gold))
      throw Error("evaluate: gold label '" + inst.gold + "' is not a taxonomy leaf");
    Vec e = encode(inst.title);
    out.ranks.push_back({inst.title, inst.gold, gold_rank(e, t, inst.gold)});
  }
  out.report = compute_metrics(out.ranks);
  return out;
}

EvalOutcome evaluate(const EncoderParams& enc, Taxonomy& t,
                     const std::vector<EvalInstance>& instances) {
  return evaluate_with([&enc](const std::string& s) { return encode_title(s, enc); },
                       encoder_digest(enc), t, instances);
}

std::vector<RankedLabel> normalize(const std::string& title, Taxonomy& t,
                                   const EncoderParams& enc, int top_k) {
  if (top_k < 1) throw UsageError("normalize: top_k must be at least 1");
  embed_taxonomy(t, enc);
  auto ranked = rank_labels(encode_title(title, enc), t);
  if (static_cast<size_t>(top_k) < ranked.size()) ranked.resize(top_k);
  return ranked;
}

Taxonomy load_taxonomy(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open taxonomy file: " + path);
  std::vector<TaxonomyLabel> labels;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("id") || !j["id"].is_string() ||
        !j.contains("label") || !j["label"].is_string() || !j.contains("parent") ||
        !(j["parent"].is_string() || j["parent"].is_null())) {
      throw Error("taxonomy " + path + " line " + std::to_string(line_no) + ": malformed record");
    }
    TaxonomyLabel l;
    l.id = j["id"].get<std::string>();
    l.name = j["label"].get<std::string>();
    if (j["parent"].is_string()) l.parent = j["parent"].get<std::string>();
    labels.push_back(std::move(l));
  }
  return make_taxonomy(std::move(labels));
}

void save_taxonomy(const Taxonomy& t, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write taxonomy file: " + path);
  for (const auto& l : t.labels) {
    nlohmann::ordered_json j;
    j["id"] = l.id;
    j["label"] = l.name;
    if (l.parent) j["parent"] = *l.parent;
    else j["parent"] = nullptr;
    out << j.dump() << '\n';
  }
  if (!out) throw Error("failed writing taxonomy file: " + path);
}

namespace {

std::vector<std::string> parse_csv_row(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  size_t i = 0;
  while (i < line.size()) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"' && cur.empty()) {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
    ++i;
  }
  fields.push_back(std::move(cur));
  return fields;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace

std::vector<EvalInstance> load_benchmark(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open benchmark file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw Error("benchmark file is empty: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "title,label_id")
    throw Error("benchmark file must start with header 'title,label_id': " + path);

  std::vector<EvalInstance> instances;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = parse_csv_row(line);
    if (fields.size() != 2)
      throw Error("benchmark " + path + " line " + std::to_string(line_no) +
                  ": expected 2 fields, got " + std::to_string(fields.size()));
    instances.push_back({fields[0], fields[1]});
  }
  return instances;
}

void save_benchmark(const std::vector<EvalInstance>& instances, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write benchmark file: " + path);
  out << "title,label_id\n";
  for (const auto& inst : instances) out << csv_escape(inst.title) << ',' << csv_escape(inst.gold) << '\n';
  if (!out) throw Error("failed writing benchmark file: " + path);
}

std::string metrics_to_json(const MetricsReport& rep) {
  nlohmann::ordered_json j;
  j["mrr_macro"] = rep.mrr_macro;
  j["mrr_micro"] = rep.mrr_micro;
  j["recall_at1_macro"] = rep.recall1_macro;
  j["recall_at1_micro"] = rep.recall1_micro;
  j["recall_at5_macro"] = rep.recall5_macro;
  j["recall_at5_micro"] = rep.recall5_micro;
  j["recall_at10_macro"] = rep.recall10_macro;
  j["recall_at10_micro"] = rep.recall10_micro;
  nlohmann::ordered_json per_class = nlohmann::ordered_json::object();
  for (const auto& [cls, cm] : rep.per_class) {
    nlohmann::ordered_json c;
    c["count"] = cm.count;
    c["mrr"] = cm.mrr;
    c["hits_at1"] = cm.hits1;
    c["hits_at5"] = cm.hits5;
    c["hits_at10"] = cm.hits10;
    per_class[cls] = std::move(c);
  }
  j["per_class"] = std::move(per_class);
  return j.dump(2);
}

}  // namespace jobvec
