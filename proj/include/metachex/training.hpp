#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "metachex/checkpoint.hpp"
#include "metachex/image_io.hpp"
#include "metachex/loss.hpp"
#include "metachex/metrics.hpp"
#include "metachex/model.hpp"
#include "metachex/optimizer.hpp"
#include "metachex/preprocess.hpp"
#include "metachex/schedule.hpp"

namespace metachex {

// Resolves image ids to pixel data; lets tests substitute in-memory images.
class ImageProvider {
 public:
  virtual ~ImageProvider() = default;
  virtual Image load(const std::string& image_id) const = 0;
};

class DirectoryImageProvider : public ImageProvider {
 public:
  explicit DirectoryImageProvider(std::string dir) : dir_(std::move(dir)) {}

  Image load(const std::string& image_id) const override {
    std::string name = image_id;
    if (name.size() < 4 || name.compare(name.size() - 4, 4, ".png") != 0) name += ".png";
    return read_png(dir_ + "/" + name);
  }

 private:
  std::string dir_;
};

struct TrainConfig {
  int epochs = 10;
  int batch_size = 16;
  double initial_lr = 1e-3;
  std::uint64_t seed = 0;
  LossConfig loss;
  PlateauConfig plateau;
  AugmentConfig augment;
  PreprocessConfig preprocess;

  void validate() const {
    require(epochs >= 1, "train: epochs must be >= 1");
    require(batch_size >= 1, "train: batch_size must be >= 1");
    require(initial_lr > 0, "train: initial_lr must be positive");
    loss.validate();
    plateau.validate();
    augment.validate();
    preprocess.validate();
  }
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_binary = 0.0;
  double train_age = 0.0;
  double val_loss = 0.0;
  double val_binary = 0.0;
  double val_age = 0.0;
  std::optional<double> val_auc;  // tuberculosis fine-tuning only
  double lr = 0.0;                // in effect during this epoch
  bool reduced = false;           // schedule cut the lr after this epoch
  bool stopped = false;           // early stop fired after this epoch
  bool is_best = false;
};

struct TrainResult {
  Checkpoint best;
  std::vector<EpochRecord> log;
  int best_epoch = 0;
  double best_metric = 0.0;
  bool stopped_early = false;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

inline MultitaskTargets make_multitask_targets(const std::vector<SampleRecord>& records,
                                               Variant variant, const PreprocessConfig& pre,
                                               const LossConfig& loss_cfg) {
  const std::size_t n = records.size();
  MultitaskTargets t;
  t.pathology = Tensor({n, kNumPathologies});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < kNumPathologies; ++k)
      t.pathology.at(i, k) = records[i].pathology[k];
  if (variant == Variant::metachexnet) {
    t.meta = Tensor({n, 2});
    t.age = Tensor({n, 1});
    t.age_mask = Tensor({n, 1});
    for (std::size_t i = 0; i < n; ++i) {
      t.meta.at(i, 0) = records[i].gender == Gender::Male ? 1.0 : 0.0;
      t.meta.at(i, 1) = records[i].position == ViewPosition::PA ? 1.0 : 0.0;
      t.age.at(i, 0) = scale_age(records[i].age_years, pre);
      t.age_mask.at(i, 0) = loss_cfg.drop_suspect_ages && records[i].age_suspect ? 0.0 : 1.0;
    }
  }
  return t;
}

inline Tensor make_tb_targets(const std::vector<TbSampleRecord>& records) {
  Tensor t({records.size(), 1});
  for (std::size_t i = 0; i < records.size(); ++i) t.at(i, 0) = records[i].label;
  return t;
}

namespace detail {

inline Tensor stack_images(const std::vector<Tensor>& images) {
  require(!images.empty(), "stack: empty batch");
  std::vector<std::size_t> shape = {images.size()};
  for (std::size_t d : images[0].shape()) shape.push_back(d);
  Tensor batch(shape);
  const std::size_t stride = images[0].size();
  for (std::size_t i = 0; i < images.size(); ++i) {
    require(images[i].size() == stride, "stack: ragged batch");
    std::copy(images[i].data(), images[i].data() + stride, batch.data() + i * stride);
  }
  return batch;
}

// Loads one training batch. `sample_index` values key the augmentation
// stream, so a sample's augmentation depends only on (seed, epoch, its
// manifest position), not on shuffle order or batch boundaries.
inline Tensor load_batch(const std::vector<std::string>& image_ids,
                         const std::vector<std::size_t>& sample_indices,
                         const ImageProvider& provider, const PreprocessConfig& pre,
                         const AugmentConfig* aug, std::uint64_t seed, int epoch) {
  std::vector<Tensor> images;
  images.reserve(image_ids.size());
  for (std::size_t i = 0; i < image_ids.size(); ++i) {
    Image img = resize_for_model(provider.load(image_ids[i]), pre);
    if (aug) {
      Rng rng = augment_rng(seed, epoch, sample_indices[i]);
      img = augment(img, *aug, rng);
    }
    images.push_back(normalize_image(img, pre));
  }
  return stack_images(images);
}

inline std::vector<std::vector<std::size_t>> make_batches(std::size_t n, int batch_size,
                                                          std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = substream(seed, "batch_order", static_cast<std::uint64_t>(epoch));
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size)
    batches.emplace_back(order.begin() + start,
                         order.begin() + std::min(n, start + batch_size));
  return batches;
}

template <typename Record>
std::vector<Record> gather(const std::vector<Record>& records,
                           const std::vector<std::size_t>& idx) {
  std::vector<Record> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(records[i]);
  return out;
}

inline std::vector<std::string> ids_of(const std::vector<SampleRecord>& records,
                                       const std::vector<std::size_t>& idx) {
  std::vector<std::string> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(records[i].image_id);
  return out;
}

inline std::vector<std::string> ids_of(const std::vector<TbSampleRecord>& records,
                                       const std::vector<std::size_t>& idx) {
  std::vector<std::string> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(records[i].image_id);
  return out;
}

inline std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

}  // namespace detail

// Validation metrics for the joint objective, averaged over the whole split
// (batch results are re-weighted so batch size does not matter).
struct MultitaskEval {
  double total = 0.0;
  double binary_term = 0.0;
  double age_term = 0.0;
};

inline MultitaskEval evaluate_multitask_loss(Model& model, const std::vector<SampleRecord>& records,
                                             const ImageProvider& provider,
                                             const TrainConfig& cfg) {
  require(!records.empty(), "evaluate: empty record list");
  double binary_sum = 0.0, age_sum = 0.0;
  std::size_t binary_n = 0, age_n = 0;
  const std::size_t n = records.size();
  for (std::size_t start = 0; start < n; start += cfg.batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(n, start + cfg.batch_size); ++i) idx.push_back(i);
    auto batch_records = detail::gather(records, idx);
    Tensor batch = detail::load_batch(detail::ids_of(records, idx), idx, provider,
                                      cfg.preprocess, nullptr, cfg.seed, 0);
    ModelOutput out = model.forward(batch, false);
    auto targets = make_multitask_targets(batch_records, model.variant(), cfg.preprocess, cfg.loss);
    auto res = multitask_loss(out, targets, cfg.loss);
    binary_sum += res.binary_term * static_cast<double>(idx.size());
    binary_n += idx.size();
    age_sum += res.age_term * static_cast<double>(res.age_count);
    age_n += res.age_count;
  }
  MultitaskEval ev;
  ev.binary_term = binary_sum / static_cast<double>(binary_n);
  ev.age_term = age_n ? age_sum / static_cast<double>(age_n) : 0.0;
  ev.total = cfg.loss.binary_weight * ev.binary_term + cfg.loss.age_weight * ev.age_term;
  return ev;
}

struct TbEval {
  double loss = 0.0;
  double auc = 0.0;
  std::vector<double> probs;
  std::vector<int> labels;
};

inline TbEval evaluate_tb(Model& model, const std::vector<TbSampleRecord>& records,
                          const ImageProvider& provider, const TrainConfig& cfg) {
  require(!records.empty(), "evaluate: empty record list");
  TbEval ev;
  double loss_sum = 0.0;
  const std::size_t n = records.size();
  for (std::size_t start = 0; start < n; start += cfg.batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(n, start + cfg.batch_size); ++i) idx.push_back(i);
    auto batch_records = detail::gather(records, idx);
    Tensor batch = detail::load_batch(detail::ids_of(records, idx), idx, provider,
                                      cfg.preprocess, nullptr, cfg.seed, 0);
    ModelOutput out = model.forward(batch, false);
    auto res = tb_loss(out, make_tb_targets(batch_records), cfg.loss);
    loss_sum += res.total * static_cast<double>(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      ev.probs.push_back(out.tb.at(i, 0));
      ev.labels.push_back(batch_records[i].label);
    }
  }
  ev.loss = loss_sum / static_cast<double>(n);
  ev.auc = roc_auc(ev.probs, ev.labels);
  return ev;
}

// Joint-objective training: plateau schedule and best-model selection both
// follow the validation loss.
inline TrainResult train_phase1(Model& model, const std::vector<SampleRecord>& train_records,
                                const std::vector<SampleRecord>& val_records,
                                const ImageProvider& provider, TrainConfig cfg,
                                const EpochCallback& on_epoch = {}) {
  cfg.validate();
  require(model.variant() != Variant::tb, "phase1 training expects a chexnet or metachexnet model");
  require(!train_records.empty() && !val_records.empty(), "train: empty split");
  require(cfg.augment.phase == AugmentPhase::phase1, "phase1 training expects phase1 augmentation");

  Nadam opt(cfg.initial_lr);
  PlateauScheduler sched(cfg.initial_lr, cfg.plateau);
  auto params = model.parameters();
  TrainResult result;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double train_total = 0.0, train_binary = 0.0, train_age_sum = 0.0;
    std::size_t seen = 0, age_seen = 0;
    for (const auto& idx : detail::make_batches(train_records.size(), cfg.batch_size,
                                                cfg.seed, epoch)) {
      auto batch_records = detail::gather(train_records, idx);
      Tensor batch = detail::load_batch(detail::ids_of(train_records, idx), idx, provider,
                                        cfg.preprocess, &cfg.augment, cfg.seed, epoch);
      ModelOutput out = model.forward(batch, true);
      auto targets =
          make_multitask_targets(batch_records, model.variant(), cfg.preprocess, cfg.loss);
      auto res = multitask_loss(out, targets, cfg.loss);
      zero_grads(params);
      model.backward(res.grads);
      opt.step(params);
      train_total += res.total * static_cast<double>(idx.size());
      train_binary += res.binary_term * static_cast<double>(idx.size());
      train_age_sum += res.age_term * static_cast<double>(res.age_count);
      seen += idx.size();
      age_seen += res.age_count;
    }

    MultitaskEval val = evaluate_multitask_loss(model, val_records, provider, cfg);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = train_total / static_cast<double>(seen);
    rec.train_binary = train_binary / static_cast<double>(seen);
    rec.train_age = age_seen ? train_age_sum / static_cast<double>(age_seen) : 0.0;
    rec.val_loss = val.total;
    rec.val_binary = val.binary_term;
    rec.val_age = val.age_term;
    rec.lr = opt.lr();

    if (result.log.empty() || val.total < result.best_metric) {
      result.best_metric = val.total;
      result.best_epoch = epoch;
      result.best = checkpoint_from_model(model, epoch, val.total);
      rec.is_best = true;
    }

    PlateauStep step = sched.observe(val.total);
    rec.reduced = step.reduced;
    rec.stopped = step.should_stop;
    opt.set_lr(step.lr);
    result.log.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (step.should_stop) {
      result.stopped_early = true;
      break;
    }
  }
  return result;
}

// Tuberculosis fine-tuning: the plateau schedule follows the validation
// loss, while the retained best model is the one with the highest
// validation AUC.
inline TrainResult train_phase2(Model& model, const std::vector<TbSampleRecord>& train_records,
                                const std::vector<TbSampleRecord>& val_records,
                                const ImageProvider& provider, TrainConfig cfg,
                                const EpochCallback& on_epoch = {}) {
  cfg.validate();
  require(model.variant() == Variant::tb, "phase2 training expects a tb model");
  require(!train_records.empty() && !val_records.empty(), "train: empty split");
  require(cfg.augment.phase == AugmentPhase::phase2, "phase2 training expects phase2 augmentation");

  Nadam opt(cfg.initial_lr);
  PlateauScheduler sched(cfg.initial_lr, cfg.plateau);
  auto params = model.parameters();
  TrainResult result;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double train_total = 0.0;
    std::size_t seen = 0;
    for (const auto& idx : detail::make_batches(train_records.size(), cfg.batch_size,
                                                cfg.seed, epoch)) {
      auto batch_records = detail::gather(train_records, idx);
      Tensor batch = detail::load_batch(detail::ids_of(train_records, idx), idx, provider,
                                        cfg.preprocess, &cfg.augment, cfg.seed, epoch);
      ModelOutput out = model.forward(batch, true);
      auto res = tb_loss(out, make_tb_targets(batch_records), cfg.loss);
      zero_grads(params);
      model.backward(res.grads);
      opt.step(params);
      train_total += res.total * static_cast<double>(idx.size());
      seen += idx.size();
    }

    TbEval val = evaluate_tb(model, val_records, provider, cfg);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = train_total / static_cast<double>(seen);
    rec.val_loss = val.loss;
    rec.val_auc = val.auc;
    rec.lr = opt.lr();

    if (result.log.empty() || val.auc > result.best_metric) {
      result.best_metric = val.auc;
      result.best_epoch = epoch;
      result.best = checkpoint_from_model(model, epoch, val.auc);
      rec.is_best = true;
    }

    PlateauStep step = sched.observe(val.loss);
    rec.reduced = step.reduced;
    rec.stopped = step.should_stop;
    opt.set_lr(step.lr);
    result.log.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (step.should_stop) {
      result.stopped_early = true;
      break;
    }
  }
  return result;
}

// Deterministic inference over a list of image ids, in the given order.
struct PredictionSet {
  std::vector<PredictionRecord> records;
  Tensor features;  // (N, feature_dim)
};

inline PredictionSet predict_samples(Model& model, const std::vector<std::string>& image_ids,
                                     const ImageProvider& provider, const PreprocessConfig& pre,
                                     int batch_size = 16) {
  require(!image_ids.empty(), "predict: empty id list");
  require(batch_size >= 1, "predict: batch_size must be >= 1");
  PredictionSet set;
  set.features = Tensor({image_ids.size(), static_cast<std::size_t>(model.feature_dim())});
  const std::size_t n = image_ids.size();
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t stop = std::min(n, start + batch_size);
    std::vector<std::string> ids(image_ids.begin() + start, image_ids.begin() + stop);
    std::vector<Tensor> images;
    for (const auto& id : ids)
      images.push_back(normalize_image(resize_for_model(provider.load(id), pre), pre));
    ModelOutput out = model.forward(detail::stack_images(images), false);
    auto batch_preds = to_prediction_records(ids, out, model.variant());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      set.records.push_back(std::move(batch_preds[i]));
      for (std::size_t f = 0; f < out.features.dim(1); ++f)
        set.features.at(start + i, f) = out.features.at(i, f);
    }
  }
  return set;
}

}  // namespace metachex
