#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "metachex/data_ingest.hpp"
#include "metachex/layers.hpp"

namespace metachex {

enum class BackboneFamily { densenet121, tiny_test_cnn };
enum class PretrainedSource { imagenet, phase1_checkpoint, random };
enum class Variant { chexnet, metachexnet, tb };

inline const char* to_string(BackboneFamily f) {
  return f == BackboneFamily::densenet121 ? "densenet121" : "tiny_test_cnn";
}
inline const char* to_string(PretrainedSource s) {
  switch (s) {
    case PretrainedSource::imagenet: return "imagenet";
    case PretrainedSource::phase1_checkpoint: return "phase1_checkpoint";
    case PretrainedSource::random: return "random";
  }
  return "?";
}
inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::chexnet: return "chexnet";
    case Variant::metachexnet: return "metachexnet";
    case Variant::tb: return "tb";
  }
  return "?";
}

inline BackboneFamily backbone_family_from_string(const std::string& s) {
  if (s == "densenet121") return BackboneFamily::densenet121;
  if (s == "tiny_test_cnn") return BackboneFamily::tiny_test_cnn;
  fail(cat("unknown backbone family: ", s));
}
inline PretrainedSource pretrained_source_from_string(const std::string& s) {
  if (s == "imagenet") return PretrainedSource::imagenet;
  if (s == "phase1_checkpoint") return PretrainedSource::phase1_checkpoint;
  if (s == "random") return PretrainedSource::random;
  fail(cat("unknown pretrained source: ", s));
}
inline Variant variant_from_string(const std::string& s) {
  if (s == "chexnet") return Variant::chexnet;
  if (s == "metachexnet") return Variant::metachexnet;
  if (s == "tb") return Variant::tb;
  fail(cat("unknown model variant: ", s));
}

struct BackboneConfig {
  BackboneFamily family = BackboneFamily::densenet121;
  double compression = 0.5;  // transition-layer channel reduction
  PretrainedSource pretrained_source = PretrainedSource::random;
  int feature_dim = 1024;  // fixed at 1024 for densenet121; configurable for tiny_test_cnn
  std::string imagenet_weights_path;

  void validate() const {
    require(compression > 0 && compression <= 1, "backbone: compression must be in (0,1]");
    require(feature_dim > 0, "backbone: feature_dim must be positive");
    if (family == BackboneFamily::densenet121)
      require(feature_dim == 1024, "backbone: densenet121 feature_dim is 1024");
  }
};

// Per-image outputs; probabilities are sigmoid outputs and therefore lie
// strictly inside (0,1).
struct PredictionRecord {
  std::string image_id;
  std::array<double, kNumPathologies> pathology_probs{};
  double gender_prob = 0.0;    // P(male), metachexnet only
  double position_prob = 0.0;  // P(PA), metachexnet only
  double age_scaled = 0.0;     // metachexnet only
  double tb_prob = 0.0;        // tb only
};

namespace detail {

// BN-ReLU-Conv(1x1,4g)-BN-ReLU-Conv(3x3,g) with dense (concat) connectivity.
class DenseLayer : public Layer {
 public:
  DenseLayer(int in_channels, int growth_rate, Rng& rng) : in_c_(in_channels) {
    const int bottleneck = 4 * growth_rate;
    stack_.add("norm1", std::make_unique<BatchNorm2d>(in_channels));
    stack_.add("relu1", std::make_unique<ReLU>());
    stack_.add("conv1", std::make_unique<Conv2d>(in_channels, bottleneck, 1, 1, 0, false, rng));
    stack_.add("norm2", std::make_unique<BatchNorm2d>(bottleneck));
    stack_.add("relu2", std::make_unique<ReLU>());
    stack_.add("conv2", std::make_unique<Conv2d>(bottleneck, growth_rate, 3, 1, 1, false, rng));
  }

  Tensor forward(const Tensor& x, bool training) override {
    Tensor fresh = stack_.forward(x, training);
    const std::size_t N = x.dim(0), C0 = x.dim(1), C1 = fresh.dim(1);
    const std::size_t plane = x.dim(2) * x.dim(3);
    Tensor y({N, C0 + C1, x.dim(2), x.dim(3)});
    for (std::size_t n = 0; n < N; ++n) {
      std::copy(x.data() + n * C0 * plane, x.data() + (n + 1) * C0 * plane,
                y.data() + n * (C0 + C1) * plane);
      std::copy(fresh.data() + n * C1 * plane, fresh.data() + (n + 1) * C1 * plane,
                y.data() + (n * (C0 + C1) + C0) * plane);
    }
    in_shape_ = x.shape();
    fresh_channels_ = C1;
    return y;
  }

  Tensor backward(const Tensor& grad_out) override {
    const std::size_t N = in_shape_[0], C0 = in_shape_[1], C1 = fresh_channels_;
    const std::size_t plane = in_shape_[2] * in_shape_[3];
    Tensor dx(in_shape_);
    Tensor dfresh({N, C1, in_shape_[2], in_shape_[3]});
    for (std::size_t n = 0; n < N; ++n) {
      std::copy(grad_out.data() + n * (C0 + C1) * plane,
                grad_out.data() + (n * (C0 + C1) + C0) * plane,
                dx.data() + n * C0 * plane);
      std::copy(grad_out.data() + (n * (C0 + C1) + C0) * plane,
                grad_out.data() + (n + 1) * (C0 + C1) * plane,
                dfresh.data() + n * C1 * plane);
    }
    dx.add(stack_.backward(dfresh));
    return dx;
  }

  void collect(const std::string& prefix, std::vector<ParamRef>& params,
               std::vector<StateRef>& state) override {
    stack_.collect(prefix, params, state);
  }

 private:
  int in_c_;
  LayerStack stack_;
  std::vector<std::size_t> in_shape_;
  std::size_t fresh_channels_ = 0;
};

}  // namespace detail

// Feature extractor: NCHW batch in, (N, feature_dim) features out.
class Backbone {
 public:
  Backbone(BackboneConfig cfg, LayerStack stack)
      : cfg_(std::move(cfg)), stack_(std::move(stack)) {}

  Tensor forward(const Tensor& x, bool training) { return stack_.forward(x, training); }
  Tensor backward(const Tensor& grad) { return stack_.backward(grad); }

  void collect(std::vector<ParamRef>& params, std::vector<StateRef>& state) {
    stack_.collect("backbone.", params, state);
  }

  const BackboneConfig& config() const { return cfg_; }
  int feature_dim() const { return cfg_.feature_dim; }

 private:
  BackboneConfig cfg_;
  LayerStack stack_;
};

namespace detail {

inline LayerStack build_densenet121_stack(const BackboneConfig& cfg, Rng& rng) {
  constexpr int growth = 32;
  constexpr std::array<int, 4> block_layers = {6, 12, 24, 16};
  LayerStack s;
  s.add("conv0", std::make_unique<Conv2d>(3, 64, 7, 2, 3, false, rng));
  s.add("norm0", std::make_unique<BatchNorm2d>(64));
  s.add("relu0", std::make_unique<ReLU>());
  s.add("pool0", std::make_unique<MaxPool2d>(3, 2, 1));
  int channels = 64;
  for (std::size_t b = 0; b < block_layers.size(); ++b) {
    for (int l = 0; l < block_layers[b]; ++l) {
      s.add(cat("block", b + 1, ".layer", l + 1),
            std::make_unique<DenseLayer>(channels, growth, rng));
      channels += growth;
    }
    if (b + 1 < block_layers.size()) {
      const int out_channels = static_cast<int>(channels * cfg.compression);
      s.add(cat("transition", b + 1, ".norm"), std::make_unique<BatchNorm2d>(channels));
      s.add(cat("transition", b + 1, ".relu"), std::make_unique<ReLU>());
      s.add(cat("transition", b + 1, ".conv"),
            std::make_unique<Conv2d>(channels, out_channels, 1, 1, 0, false, rng));
      s.add(cat("transition", b + 1, ".pool"), std::make_unique<AvgPool2d>(2));
      channels = out_channels;
    }
  }
  s.add("norm_final", std::make_unique<BatchNorm2d>(channels));
  s.add("relu_final", std::make_unique<ReLU>());
  s.add("gap", std::make_unique<GlobalAvgPool>());
  require(channels == cfg.feature_dim,
          cat("densenet121 feature width ", channels, " != configured ", cfg.feature_dim));
  return s;
}

// Small fixed stack with the same contract as densenet121, for fast CPU runs.
// Aggressive early downsampling keeps 224x224 inputs cheap.
inline LayerStack build_tiny_cnn_stack(const BackboneConfig& cfg, Rng& rng) {
  LayerStack s;
  s.add("conv0", std::make_unique<Conv2d>(3, 8, 7, 4, 3, false, rng));
  s.add("norm0", std::make_unique<BatchNorm2d>(8));
  s.add("relu0", std::make_unique<ReLU>());
  s.add("pool0", std::make_unique<MaxPool2d>(2, 2, 0));
  s.add("conv1", std::make_unique<Conv2d>(8, 16, 3, 2, 1, false, rng));
  s.add("norm1", std::make_unique<BatchNorm2d>(16));
  s.add("relu1", std::make_unique<ReLU>());
  s.add("conv2", std::make_unique<Conv2d>(16, 32, 3, 2, 1, false, rng));
  s.add("norm2", std::make_unique<BatchNorm2d>(32));
  s.add("relu2", std::make_unique<ReLU>());
  s.add("conv3", std::make_unique<Conv2d>(32, cfg.feature_dim, 3, 1, 1, false, rng));
  s.add("relu3", std::make_unique<ReLU>());
  s.add("gap", std::make_unique<GlobalAvgPool>());
  return s;
}

}  // namespace detail

// Forward declared here; defined in checkpoint.hpp (imagenet weights ship in
// the checkpoint container format).
class Model;
inline void load_backbone_weights(Backbone& backbone, const std::string& path);

inline Backbone build_backbone(const BackboneConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng = substream(seed, "init");
  LayerStack stack = cfg.family == BackboneFamily::densenet121
                         ? detail::build_densenet121_stack(cfg, rng)
                         : detail::build_tiny_cnn_stack(cfg, rng);
  Backbone backbone(cfg, std::move(stack));
  if (cfg.pretrained_source == PretrainedSource::imagenet) {
    if (!std::filesystem::exists(cfg.imagenet_weights_path))
      fail(cat("imagenet weight file not found: ",
               cfg.imagenet_weights_path.empty() ? "(no path configured)"
                                                 : cfg.imagenet_weights_path));
    load_backbone_weights(backbone, cfg.imagenet_weights_path);
  }
  return backbone;
}

struct ModelOutput {
  Tensor features;   // (N, feature_dim)
  Tensor pathology;  // (N, 14), chexnet/metachexnet
  Tensor meta;       // (N, 2) = [P(male), P(PA)], metachexnet
  Tensor age;        // (N, 1) scaled age, metachexnet
  Tensor tb;         // (N, 1), tb
};

struct ModelOutputGrads {
  Tensor pathology;
  Tensor meta;
  Tensor age;
  Tensor tb;
};

// Backbone plus the variant's head set. Heads are flat affine+activation
// stacks on the pooled feature vector; the age head reads the 10-wide
// intermediate layer.
class Model {
 public:
  Model(Backbone backbone, Variant variant, std::uint64_t seed)
      : backbone_(std::move(backbone)), variant_(variant) {
    Rng rng = substream(seed, "init_heads");
    const int fd = backbone_.feature_dim();
    if (variant_ == Variant::chexnet || variant_ == Variant::metachexnet) {
      pathology_head_ = make_head(fd, static_cast<int>(kNumPathologies), true, rng);
    }
    if (variant_ == Variant::metachexnet) {
      meta_head_ = make_head(fd, 2, true, rng);
      intermediate_ = std::make_unique<LayerStack>();
      intermediate_->add("linear", std::make_unique<Linear>(fd, 10, rng));
      intermediate_->add("relu", std::make_unique<ReLU>());
      age_head_ = make_head(10, 1, true, rng);
    }
    if (variant_ == Variant::tb) {
      tb_head_ = make_head(fd, 1, true, rng);
    }
  }

  Variant variant() const { return variant_; }
  const BackboneConfig& backbone_config() const { return backbone_.config(); }
  int feature_dim() const { return backbone_.feature_dim(); }

  ModelOutput forward(const Tensor& batch, bool training = false) {
    ModelOutput out;
    out.features = backbone_.forward(batch, training);
    require(out.features.rank() == 2 &&
                out.features.dim(1) == static_cast<std::size_t>(feature_dim()),
            "backbone produced wrong feature width");
    if (pathology_head_) out.pathology = pathology_head_->forward(out.features, training);
    if (meta_head_) out.meta = meta_head_->forward(out.features, training);
    if (intermediate_) {
      Tensor mid = intermediate_->forward(out.features, training);
      out.age = age_head_->forward(mid, training);
    }
    if (tb_head_) out.tb = tb_head_->forward(out.features, training);
    return out;
  }

  // Routes per-output gradients through the heads and the backbone.
  void backward(const ModelOutputGrads& grads) {
    Tensor dfeat;
    auto accumulate = [&dfeat](Tensor contribution) {
      if (dfeat.empty()) dfeat = std::move(contribution);
      else dfeat.add(contribution);
    };
    if (pathology_head_ && !grads.pathology.empty())
      accumulate(pathology_head_->backward(grads.pathology));
    if (meta_head_ && !grads.meta.empty())
      accumulate(meta_head_->backward(grads.meta));
    if (intermediate_ && !grads.age.empty())
      accumulate(intermediate_->backward(age_head_->backward(grads.age)));
    if (tb_head_ && !grads.tb.empty())
      accumulate(tb_head_->backward(grads.tb));
    require(!dfeat.empty(), "model backward: no head gradients supplied");
    backbone_.backward(dfeat);
  }

  void collect(std::vector<ParamRef>& params, std::vector<StateRef>& state) {
    backbone_.collect(params, state);
    if (pathology_head_) pathology_head_->collect("heads.pathology.", params, state);
    if (meta_head_) meta_head_->collect("heads.meta.", params, state);
    if (intermediate_) intermediate_->collect("heads.intermediate.", params, state);
    if (age_head_) age_head_->collect("heads.age.", params, state);
    if (tb_head_) tb_head_->collect("heads.tb.", params, state);
  }

  std::vector<ParamRef> parameters() {
    std::vector<ParamRef> params;
    std::vector<StateRef> state;
    collect(params, state);
    return params;
  }

  std::vector<ParamRef> head_parameters() {
    std::vector<ParamRef> all;
    std::vector<StateRef> state;
    collect(all, state);
    std::vector<ParamRef> heads;
    for (auto& p : all)
      if (p.name.rfind("heads.", 0) == 0) heads.push_back(p);
    return heads;
  }

 private:
  static std::unique_ptr<LayerStack> make_head(int in, int out, bool sigmoid_out, Rng& rng) {
    auto head = std::make_unique<LayerStack>();
    head->add("linear", std::make_unique<Linear>(in, out, rng));
    if (sigmoid_out) head->add("sigmoid", std::make_unique<Sigmoid>());
    return head;
  }

  Backbone backbone_;
  Variant variant_;
  std::unique_ptr<LayerStack> pathology_head_;
  std::unique_ptr<LayerStack> meta_head_;
  std::unique_ptr<LayerStack> intermediate_;
  std::unique_ptr<LayerStack> age_head_;
  std::unique_ptr<LayerStack> tb_head_;
};

inline Model attach_heads(Backbone backbone, Variant variant, std::uint64_t seed) {
  return Model(std::move(backbone), variant, seed);
}

inline Model build_model(const BackboneConfig& cfg, Variant variant, std::uint64_t seed) {
  return attach_heads(build_backbone(cfg, seed), variant, seed);
}

namespace detail {

inline std::map<std::string, Tensor*> named_tensors(Model& model, bool params_only = false) {
  std::vector<ParamRef> params;
  std::vector<StateRef> state;
  model.collect(params, state);
  std::map<std::string, Tensor*> out;
  for (auto& p : params) out[p.name] = p.value;
  if (!params_only)
    for (auto& s : state) out[s.name] = s.value;
  return out;
}

}  // namespace detail

// Fresh TB head on the retained feature extractor; backbone parameters and
// batch-norm state carry over bit-exactly and everything stays trainable.
inline Model swap_head_for_tb(Model& phase1_model, std::uint64_t seed) {
  BackboneConfig cfg = phase1_model.backbone_config();
  cfg.pretrained_source = PretrainedSource::phase1_checkpoint;
  cfg.imagenet_weights_path.clear();
  Model tb_model(build_backbone(cfg, seed), Variant::tb, seed);
  auto src = detail::named_tensors(phase1_model);
  auto dst = detail::named_tensors(tb_model);
  for (auto& [name, tensor] : dst) {
    if (name.rfind("backbone.", 0) != 0) continue;
    auto it = src.find(name);
    require(it != src.end(), cat("head swap: missing backbone tensor ", name));
    require(it->second->same_shape(*tensor), cat("head swap: shape mismatch at ", name));
    *tensor = *it->second;
  }
  return tb_model;
}

inline std::vector<PredictionRecord> to_prediction_records(
    const std::vector<std::string>& image_ids, const ModelOutput& out, Variant variant) {
  const std::size_t n = image_ids.size();
  std::vector<PredictionRecord> records(n);
  for (std::size_t i = 0; i < n; ++i) {
    records[i].image_id = image_ids[i];
    if (variant == Variant::chexnet || variant == Variant::metachexnet)
      for (std::size_t k = 0; k < kNumPathologies; ++k)
        records[i].pathology_probs[k] = out.pathology.at(i, k);
    if (variant == Variant::metachexnet) {
      records[i].gender_prob = out.meta.at(i, 0);
      records[i].position_prob = out.meta.at(i, 1);
      records[i].age_scaled = out.age.at(i, 0);
    }
    if (variant == Variant::tb) records[i].tb_prob = out.tb.at(i, 0);
  }
  return records;
}

}  // namespace metachex
