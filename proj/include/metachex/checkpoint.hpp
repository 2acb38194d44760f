#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "metachex/model.hpp"

namespace metachex {

// Serialized model state: every parameter and persistent-state tensor by
// name, plus enough config to rebuild the same topology.
struct Checkpoint {
  Variant variant = Variant::chexnet;
  BackboneConfig backbone;
  int epoch = 0;
  std::optional<double> metric;  // selection metric at save time
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return &t;
    return nullptr;
  }
};

inline Checkpoint checkpoint_from_model(Model& model, int epoch = 0,
                                        std::optional<double> metric = std::nullopt) {
  Checkpoint ckpt;
  ckpt.variant = model.variant();
  ckpt.backbone = model.backbone_config();
  ckpt.epoch = epoch;
  ckpt.metric = metric;
  std::vector<ParamRef> params;
  std::vector<StateRef> state;
  model.collect(params, state);
  for (auto& p : params) ckpt.tensors.emplace_back(p.name, *p.value);
  for (auto& s : state) ckpt.tensors.emplace_back(s.name, *s.value);
  return ckpt;
}

// Copies every stored tensor back into a model of the same variant. The
// tensor sets must match exactly.
inline void restore_model(Model& model, const Checkpoint& ckpt) {
  if (model.variant() != ckpt.variant)
    fail(cat("checkpoint variant mismatch: expected ", to_string(model.variant()), ", found ",
             to_string(ckpt.variant)));
  auto dst = detail::named_tensors(model);
  require(dst.size() == ckpt.tensors.size(),
          cat("checkpoint tensor count ", ckpt.tensors.size(), " != model ", dst.size()));
  for (const auto& [name, tensor] : ckpt.tensors) {
    auto it = dst.find(name);
    if (it == dst.end()) fail(cat("checkpoint restore: unknown tensor ", name));
    require(it->second->same_shape(tensor), cat("checkpoint restore: shape mismatch at ", name));
    *it->second = tensor;
  }
}

inline Model model_from_checkpoint(const Checkpoint& ckpt, std::uint64_t seed) {
  BackboneConfig cfg = ckpt.backbone;
  cfg.pretrained_source = PretrainedSource::random;  // weights come from the checkpoint
  cfg.imagenet_weights_path.clear();
  Model model = build_model(cfg, ckpt.variant, seed);
  restore_model(model, ckpt);
  return model;
}

namespace detail {

constexpr char kCheckpointMagic[8] = {'M', 'C', 'H', 'X', 'C', 'K', 'P', '1'};

inline void append_u64(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void append_doubles(std::string& buf, const Tensor& t) {
  for (std::size_t i = 0; i < t.size(); ++i)
    append_u64(buf, std::bit_cast<std::uint64_t>(t.data()[i]));
}

class ByteReader {
 public:
  ByteReader(const std::string& bytes, const std::string& path)
      : bytes_(bytes), path_(path) {}

  const char* take(std::size_t n) {
    if (pos_ + n > bytes_.size()) fail(cat("corrupt checkpoint: ", path_));
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

  std::uint64_t take_u64() {
    const unsigned char* p = reinterpret_cast<const unsigned char*>(take(8));
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
  }

  std::size_t pos() const { return pos_; }

 private:
  const std::string& bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  nlohmann::json manifest;
  manifest["format_version"] = 1;
  manifest["variant"] = to_string(ckpt.variant);
  manifest["backbone"] = {{"family", to_string(ckpt.backbone.family)},
                          {"compression", ckpt.backbone.compression},
                          {"feature_dim", ckpt.backbone.feature_dim},
                          {"pretrained_source", to_string(ckpt.backbone.pretrained_source)}};
  manifest["epoch"] = ckpt.epoch;
  if (ckpt.metric) manifest["metric"] = *ckpt.metric;
  else manifest["metric"] = nullptr;
  nlohmann::json table = nlohmann::json::array();
  for (const auto& [name, tensor] : ckpt.tensors)
    table.push_back({{"name", name}, {"shape", tensor.shape()}});
  manifest["tensors"] = std::move(table);

  std::string buf(detail::kCheckpointMagic, sizeof(detail::kCheckpointMagic));
  const std::string manifest_text = manifest.dump();
  detail::append_u64(buf, manifest_text.size());
  buf += manifest_text;
  for (const auto& [name, tensor] : ckpt.tensors) detail::append_doubles(buf, tensor);
  detail::append_u64(buf, fnv1a64(buf.data(), buf.size()));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(cat("cannot write checkpoint: ", path));
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) fail(cat("cannot write checkpoint: ", path));
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(cat("cannot open checkpoint: ", path));
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  detail::ByteReader reader(bytes, path);
  const char* magic = reader.take(sizeof(detail::kCheckpointMagic));
  if (std::memcmp(magic, detail::kCheckpointMagic, sizeof(detail::kCheckpointMagic)) != 0)
    fail(cat("not a checkpoint file: ", path));
  const std::uint64_t manifest_len = reader.take_u64();
  std::string manifest_text(reader.take(manifest_len), manifest_len);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(manifest_text);
  } catch (const nlohmann::json::exception&) {
    fail(cat("corrupt checkpoint: ", path));
  }

  Checkpoint ckpt;
  ckpt.variant = variant_from_string(manifest.at("variant").get<std::string>());
  const auto& backbone = manifest.at("backbone");
  ckpt.backbone.family = backbone_family_from_string(backbone.at("family").get<std::string>());
  ckpt.backbone.compression = backbone.at("compression").get<double>();
  ckpt.backbone.feature_dim = backbone.at("feature_dim").get<int>();
  ckpt.backbone.pretrained_source =
      pretrained_source_from_string(backbone.at("pretrained_source").get<std::string>());
  ckpt.epoch = manifest.at("epoch").get<int>();
  if (!manifest.at("metric").is_null()) ckpt.metric = manifest.at("metric").get<double>();

  for (const auto& entry : manifest.at("tensors")) {
    const auto name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    Tensor t(shape);
    for (std::size_t i = 0; i < t.size(); ++i)
      t.data()[i] = std::bit_cast<double>(reader.take_u64());
    ckpt.tensors.emplace_back(name, std::move(t));
  }
  const std::size_t payload_end = reader.pos();
  const std::uint64_t stored = reader.take_u64();
  if (stored != fnv1a64(bytes.data(), payload_end) || payload_end + 8 != bytes.size())
    fail(cat("corrupt checkpoint: ", path));
  return ckpt;
}

// Copies the feature-extractor tensors out of a checkpoint file into a bare
// backbone; used for externally supplied starting weights.
inline void load_backbone_weights(Backbone& backbone, const std::string& path) {
  const Checkpoint ckpt = load_checkpoint(path);
  std::vector<ParamRef> params;
  std::vector<StateRef> state;
  backbone.collect(params, state);
  auto copy_into = [&](const std::string& name, Tensor* dst) {
    const Tensor* src = ckpt.find(name);
    if (!src) fail(cat("weight file ", path, " lacks tensor ", name));
    require(src->same_shape(*dst), cat("weight file ", path, ": shape mismatch at ", name));
    *dst = *src;
  };
  for (auto& p : params) copy_into(p.name, p.value);
  for (auto& s : state) copy_into(s.name, s.value);
}

}  // namespace metachex
