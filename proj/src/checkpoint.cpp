#include "jobvec/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace jobvec {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

struct TensorRef {
  std::string name;
  const Vec* data;
  std::vector<int> shape;
  bool wide;  // binary64 instead of binary32
};

void append_f32(std::vector<uint8_t>& out, const Vec& v) {
  for (double d : v) {
    float f = static_cast<float>(d);
    uint8_t buf[4];
    std::memcpy(buf, &f, 4);
    out.insert(out.end(), buf, buf + 4);
  }
}

void append_f64(std::vector<uint8_t>& out, const Vec& v) {
  for (double d : v) {
    uint8_t buf[8];
    std::memcpy(buf, &d, 8);
    out.insert(out.end(), buf, buf + 8);
  }
}

Vec read_f32(const uint8_t* p, size_t count) {
  Vec v(count);
  for (size_t i = 0; i < count; ++i) {
    float f;
    std::memcpy(&f, p + 4 * i, 4);
    v[i] = static_cast<double>(f);
  }
  return v;
}

Vec read_f64(const uint8_t* p, size_t count) {
  Vec v(count);
  for (size_t i = 0; i < count; ++i) {
    double d;
    std::memcpy(&d, p + 8 * i, 8);
    v[i] = d;
  }
  return v;
}

}  // namespace

std::vector<uint8_t> serialize_checkpoint(const Model& model) {
  const Vec gating_b{model.enc.gating.b};
  std::vector<TensorRef> tensors;
  if (model.enc.backbone.trainable()) {
    tensors.push_back({"backbone.table", &model.enc.backbone.table.a,
                       {model.enc.backbone.table.rows, model.enc.backbone.table.cols}, false});
  }
  tensors.push_back({"gating.w", &model.enc.gating.w,
                     {static_cast<int>(model.enc.gating.w.size())}, false});
  tensors.push_back({"gating.b", &gating_b, {1}, false});
  tensors.push_back({"projection.w1", &model.enc.projection.w1.a,
                     {model.enc.projection.w1.rows, model.enc.projection.w1.cols}, false});
  tensors.push_back({"projection.b1", &model.enc.projection.b1,
                     {static_cast<int>(model.enc.projection.b1.size())}, false});
  tensors.push_back({"projection.w2", &model.enc.projection.w2.a,
                     {model.enc.projection.w2.rows, model.enc.projection.w2.cols}, false});
  tensors.push_back({"projection.b2", &model.enc.projection.b2,
                     {static_cast<int>(model.enc.projection.b2.size())}, false});
  tensors.push_back({"context", &model.context.a, {model.context.rows, model.context.cols}, false});
  tensors.push_back({"adagrad.context", &model.adagrad_accum.a,
                     {model.adagrad_accum.rows, model.adagrad_accum.cols}, true});

  std::vector<uint8_t> blob;
  nlohmann::ordered_json manifest;
  manifest["format_version"] = kCheckpointVersion;
  manifest["stage"] = stage_name(model.stage);

  const auto& c = model.config;
  manifest["config"] = {
      {"k_negatives", c.k_negatives},   {"batch_pairs", c.batch_pairs},
      {"lr_sgd", c.lr_sgd},             {"lr_adagrad", c.lr_adagrad},
      {"lr_finetune", c.lr_finetune},   {"eval_every_batches", c.eval_every_batches},
      {"patience", c.patience},         {"seed", c.seed},
      {"dim", c.dim},                   {"hidden", c.hidden},
      {"d_out", c.d_out},               {"epochs", c.epochs},
      {"max_title_tokens", c.max_title_tokens}};
  manifest["tokenizer"] = {{"tokens", model.enc.vocab.tokens}};
  if (model.enc.backbone.trainable()) {
    manifest["backbone"] = {{"kind", "table"}, {"dim", model.enc.backbone.dim}};
  } else {
    if (model.enc.backbone.per_title_path.empty())
      throw Error("checkpoint: precomputed backbone must be file-backed");
    manifest["backbone"] = {{"kind", "precomputed"},
                            {"dim", model.enc.backbone.dim},
                            {"path", model.enc.backbone.per_title_path}};
  }

  nlohmann::ordered_json tensor_list = nlohmann::ordered_json::array();
  for (const auto& t : tensors) {
    size_t offset = blob.size();
    if (t.wide) append_f64(blob, *t.data);
    else append_f32(blob, *t.data);
    tensor_list.push_back({{"name", t.name},
                           {"dtype", t.wide ? "f64" : "f32"},
                           {"shape", t.shape},
                           {"offset", offset},
                           {"bytes", blob.size() - offset}});
  }
  manifest["tensors"] = std::move(tensor_list);

  const std::string manifest_str = manifest.dump();
  std::vector<uint8_t> out;
  out.reserve(8 + 4 + manifest_str.size() + blob.size());
  out.insert(out.end(), kCheckpointMagic, kCheckpointMagic + 8);
  auto len = static_cast<uint32_t>(manifest_str.size());
  uint8_t len_buf[4];
  std::memcpy(len_buf, &len, 4);
  out.insert(out.end(), len_buf, len_buf + 4);
  out.insert(out.end(), manifest_str.begin(), manifest_str.end());
  out.insert(out.end(), blob.begin(), blob.end());
  return out;
}

Model deserialize_checkpoint(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0)
    throw Error("checkpoint: bad magic bytes");
  uint32_t manifest_len;
  std::memcpy(&manifest_len, bytes.data() + 8, 4);
  if (bytes.size() < 12 + static_cast<size_t>(manifest_len))
    throw Error("checkpoint: truncated manifest");

  auto manifest = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + manifest_len,
                                        nullptr, false);
  if (manifest.is_discarded()) throw Error("checkpoint: unparseable manifest");

  const uint32_t version = manifest.value("format_version", 0u);
  if (version != kCheckpointVersion)
    throw Error("checkpoint: format version " + std::to_string(version) +
                " does not match supported version " + std::to_string(kCheckpointVersion));

  Model m;
  m.format_version = version;
  const std::string stage = manifest.value("stage", "frozen");
  m.stage = stage == "finetuned" ? Stage::Finetuned : Stage::Frozen;

  const auto& jc = manifest.at("config");
  m.config.k_negatives = jc.at("k_negatives").get<int>();
  m.config.batch_pairs = jc.at("batch_pairs").get<int>();
  m.config.lr_sgd = jc.at("lr_sgd").get<double>();
  m.config.lr_adagrad = jc.at("lr_adagrad").get<double>();
  m.config.lr_finetune = jc.at("lr_finetune").get<double>();
  m.config.eval_every_batches = jc.at("eval_every_batches").get<int64_t>();
  m.config.patience = jc.at("patience").get<int>();
  m.config.seed = jc.at("seed").get<uint64_t>();
  m.config.dim = jc.at("dim").get<int>();
  m.config.hidden = jc.at("hidden").get<int>();
  m.config.d_out = jc.at("d_out").get<int>();
  m.config.epochs = jc.at("epochs").get<int>();
  m.config.max_title_tokens = jc.at("max_title_tokens").get<int>();

  m.enc.vocab.tokens = manifest.at("tokenizer").at("tokens").get<std::vector<std::string>>();
  m.enc.vocab.rebuild_index();
  m.enc.max_title_tokens = m.config.max_title_tokens;

  const auto& jb = manifest.at("backbone");
  const std::string kind = jb.at("kind").get<std::string>();
  m.enc.backbone.dim = jb.at("dim").get<int>();
  if (kind == "table") {
    m.enc.backbone.kind = BackboneKind::TrainableTable;
  } else if (kind == "precomputed") {
    load_precomputed_backbone(m.enc.backbone, jb.at("path").get<std::string>());
    if (m.enc.backbone.dim != jb.at("dim").get<int>())
      throw Error("checkpoint: precomputed backbone width changed on disk");
  } else {
    throw Error("checkpoint: unknown backbone kind '" + kind + "'");
  }

  const size_t blob_start = 12 + manifest_len;
  auto read_tensor = [&](const nlohmann::json& jt) {
    const auto offset = jt.at("offset").get<size_t>();
    const auto nbytes = jt.at("bytes").get<size_t>();
    if (blob_start + offset + nbytes > bytes.size()) throw Error("checkpoint: truncated tensor blob");
    const uint8_t* p = bytes.data() + blob_start + offset;
    const std::string dtype = jt.at("dtype").get<std::string>();
    const auto shape = jt.at("shape").get<std::vector<int>>();
    size_t count = 1;
    for (int s : shape) count *= static_cast<size_t>(s);
    const size_t unit = dtype == "f64" ? 8 : 4;
    if (count * unit != nbytes) throw Error("checkpoint: tensor size mismatch");
    Vec data = dtype == "f64" ? read_f64(p, count) : read_f32(p, count);
    return std::pair<std::vector<int>, Vec>(shape, std::move(data));
  };

  auto to_mat = [](std::pair<std::vector<int>, Vec>&& sv) {
    if (sv.first.size() != 2) throw Error("checkpoint: expected rank-2 tensor");
    Mat mat(sv.first[0], sv.first[1]);
    mat.a = std::move(sv.second);
    return mat;
  };

  bool saw_context = false, saw_accum = false;
  for (const auto& jt : manifest.at("tensors")) {
    const std::string name = jt.at("name").get<std::string>();
    if (name == "backbone.table") {
      if (!m.enc.backbone.trainable()) throw Error("checkpoint: unexpected backbone table");
      m.enc.backbone.table = to_mat(read_tensor(jt));
    } else if (name == "gating.w") {
      m.enc.gating.w = read_tensor(jt).second;
    } else if (name == "gating.b") {
      m.enc.gating.b = read_tensor(jt).second.at(0);
    } else if (name == "projection.w1") {
      m.enc.projection.w1 = to_mat(read_tensor(jt));
    } else if (name == "projection.b1") {
      m.enc.projection.b1 = read_tensor(jt).second;
    } else if (name == "projection.w2") {
      m.enc.projection.w2 = to_mat(read_tensor(jt));
    } else if (name == "projection.b2") {
      m.enc.projection.b2 = read_tensor(jt).second;
    } else if (name == "context") {
      m.context = to_mat(read_tensor(jt));
      saw_context = true;
    } else if (name == "adagrad.context") {
      m.adagrad_accum = to_mat(read_tensor(jt));
      saw_accum = true;
    } else {
      throw Error("checkpoint: unknown tensor '" + name + "'");
    }
  }
  if (m.enc.backbone.trainable() && m.enc.backbone.table.rows == 0)
    throw Error("checkpoint: missing backbone table");
  if (!saw_context || !saw_accum || m.enc.gating.w.empty() || m.enc.projection.b2.empty())
    throw Error("checkpoint: missing tensors");
  if (m.enc.backbone.trainable() &&
      m.enc.backbone.table.rows != static_cast<int>(m.enc.vocab.size()))
    throw Error("checkpoint: backbone table does not match tokenizer vocabulary");
  if (!m.context.same_shape(m.adagrad_accum))
    throw Error("checkpoint: context and accumulator shapes differ");
  return m;
}

void save_checkpoint(const Model& model, const std::string& path) {
  const auto bytes = serialize_checkpoint(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing checkpoint: " + path);
}

Model load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

uint64_t checkpoint_digest(const Model& model) {
  const auto bytes = serialize_checkpoint(model);
  return fnv1a64(bytes.data(), bytes.size());
}

}  // namespace jobvec
