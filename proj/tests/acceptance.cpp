// Acceptance gate: one verdict line per contracted behavior. Every check
// rests on an independent oracle (closed forms, brute-force recomputation,
// finite differences) or on the public command-line interface; tolerances
// and workloads are pinned constants below.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include <metachex/metachex.hpp>

namespace fs = std::filesystem;
using namespace metachex;

namespace {

constexpr int kAucInstances = 200;
constexpr double kAucOracleTol = 1e-9;
constexpr int kGradBatches = 20;
constexpr double kGradStep = 1e-4;
constexpr double kGradRelTol = 1e-4;
constexpr int kOverfitDecreases = 3;    // consecutive train-loss drops, phase 1
constexpr int kOverfitMaxEpochs = 20;   // phase 2 budget
constexpr double kOverfitAucMin = 0.95;
constexpr double kOverfitTimeLimit = 300.0;  // seconds
constexpr int kSplitSeeds = 100;
constexpr int kSplitPatients = 1000;
constexpr double kSplitTimeLimit = 10.0;  // seconds
constexpr int kLogisticInstances = 20;
constexpr double kLogisticGradTol = 1e-6;  // sup-norm of the optimality residual
constexpr double kLogisticZeroTol = 1e-12;
constexpr double kLogisticRecoveryTol = 0.1;
constexpr std::size_t kLogisticRecoveryN = 10000;
constexpr int kAgreementInstances = 50;
constexpr double kAgreementTol = 1e-12;
constexpr double kPooledAucTol = 1e-12;
constexpr double kChainTimeLimit = 600.0;  // seconds

int g_failures = 0;

void verdict(int index, const std::string& name, bool ok, const std::string& detail) {
  std::printf("[%s] %02d %s%s%s\n", ok ? "PASS" : "FAIL", index, name.c_str(),
              detail.empty() ? "" : ": ", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

struct Outcome {
  bool ok = true;
  std::string detail;
};

template <typename Body>
void criterion(int index, const std::string& name, Body&& body) {
  try {
    const Outcome out = body();
    verdict(index, name, out.ok, out.detail);
  } catch (const std::exception& e) {
    verdict(index, name, false, cat("exception: ", e.what()));
  }
}

std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

class MapProvider : public ImageProvider {
 public:
  void put(const std::string& id, Image img) { images_[id] = std::move(img); }
  Image load(const std::string& id) const override {
    auto it = images_.find(id);
    if (it == images_.end()) fail(cat("no such image: ", id));
    return it->second;
  }

 private:
  std::map<std::string, Image> images_;
};

// ---------------------------------------------------------------------------
// 1. The ranking metric equals the fraction of correctly ordered
//    positive/negative pairs (ties worth half), recomputed by brute force.

double pairwise_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  double favorable = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j]) favorable += 1.0;
      else if (scores[i] == scores[j]) favorable += 0.5;
    }
  }
  return favorable / static_cast<double>(pairs);
}

Outcome check_auc_oracle() {
  Rng rng = substream(20240901, "acceptance_auc");
  double worst = 0.0;
  for (int t = 0; t < kAucInstances; ++t) {
    const std::size_t n = 2 + rng.below(59);
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      labels[i] = rng.bernoulli(0.5) ? 1 : 0;
      // alternate continuous scores with a coarse grid full of ties
      scores[i] = t % 2 ? rng.uniform() : static_cast<double>(rng.below(5)) / 4.0;
    }
    labels[0] = 1;
    labels[n - 1] = 0;
    worst = std::max(worst, std::abs(roc_auc(scores, labels) - pairwise_auc(scores, labels)));
  }
  if (worst > kAucOracleTol)
    return {false, cat("max |auc - pairwise oracle| = ", worst)};
  return {true, cat(kAucInstances, " instances, max deviation ", worst)};
}

// ---------------------------------------------------------------------------
// 2. Analytic loss gradients agree with centered finite differences for both
//    training objectives: first at the head outputs across random batches and
//    loss weights, then for every head parameter through the full forward
//    pass against the gradients accumulated by backward().

double fd_check_head_parameters(Rng& rng, bool tb_variant, std::uint64_t seed) {
  BackboneConfig backbone;
  backbone.family = BackboneFamily::tiny_test_cnn;
  backbone.feature_dim = 16;
  Model model = build_model(backbone, tb_variant ? Variant::tb : Variant::metachexnet, seed);

  constexpr std::size_t n = 3;
  Tensor batch({n, 3, 24, 24});
  for (std::size_t i = 0; i < batch.size(); ++i) batch.data()[i] = rng.uniform(-1.0, 1.0);

  LossConfig cfg;
  cfg.binary_weight = rng.uniform(0.5, 2.0);
  cfg.age_weight = rng.uniform(0.5, 2.0);

  MultitaskTargets targets;
  Tensor tb_targets;
  {
    const ModelOutput probe = model.forward(batch, true);
    if (tb_variant) {
      tb_targets = Tensor({n, 1});
      for (std::size_t i = 0; i < n; ++i) tb_targets.at(i, 0) = rng.bernoulli(0.5) ? 1.0 : 0.0;
    } else {
      targets.pathology = Tensor({n, kNumPathologies});
      targets.meta = Tensor({n, 2});
      for (std::size_t i = 0; i < targets.pathology.size(); ++i)
        targets.pathology.data()[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
      for (std::size_t i = 0; i < targets.meta.size(); ++i)
        targets.meta.data()[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
      targets.age = Tensor({n, 1});
      targets.age_mask = Tensor({n, 1});
      for (std::size_t i = 0; i < n; ++i) {
        // keep the |error| kink well away from the probe interval
        const double pred = probe.age.at(i, 0);
        targets.age.at(i, 0) = pred > 0.5 ? pred - 0.3 : pred + 0.3;
        targets.age_mask.at(i, 0) = i + 1 < n ? 1.0 : 0.0;
      }
    }
  }

  auto loss_of = [&] {
    const ModelOutput out = model.forward(batch, true);
    return tb_variant ? tb_loss(out, tb_targets, cfg).total
                      : multitask_loss(out, targets, cfg).total;
  };

  auto params = model.head_parameters();
  zero_grads(params);
  {
    const ModelOutput out = model.forward(batch, true);
    if (tb_variant)
      model.backward(tb_loss(out, tb_targets, cfg).grads);
    else
      model.backward(multitask_loss(out, targets, cfg).grads);
  }
  std::vector<std::vector<double>> analytic;
  for (const auto& p : params)
    analytic.emplace_back(p.grad->data(), p.grad->data() + p.grad->size());

  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& value = *params[pi].value;
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double saved = value.data()[i];
      value.data()[i] = saved + kGradStep;
      const double up = loss_of();
      value.data()[i] = saved - kGradStep;
      const double down = loss_of();
      value.data()[i] = saved;
      const double numeric = (up - down) / (2.0 * kGradStep);
      const double scale = std::max({1.0, std::abs(numeric), std::abs(analytic[pi][i])});
      worst = std::max(worst, std::abs(numeric - analytic[pi][i]) / scale);
    }
  }
  return worst;
}

Outcome check_loss_gradients() {
  Rng rng = substream(20240901, "acceptance_grad");
  double worst = 0.0;

  for (int t = 0; t < kGradBatches; ++t) {
    const std::size_t n = 1 + rng.below(6);
    const bool with_meta = t % 2 == 0;

    ModelOutput out;
    MultitaskTargets targets;
    out.pathology = Tensor({n, kNumPathologies});
    targets.pathology = Tensor({n, kNumPathologies});
    for (std::size_t i = 0; i < out.pathology.size(); ++i) {
      out.pathology.data()[i] = rng.uniform(0.1, 0.9);
      targets.pathology.data()[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
    }
    if (with_meta) {
      out.meta = Tensor({n, 2});
      targets.meta = Tensor({n, 2});
      for (std::size_t i = 0; i < out.meta.size(); ++i) {
        out.meta.data()[i] = rng.uniform(0.1, 0.9);
        targets.meta.data()[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
      }
      out.age = Tensor({n, 1});
      targets.age = Tensor({n, 1});
      targets.age_mask = Tensor({n, 1});
      for (std::size_t i = 0; i < n; ++i) {
        out.age.at(i, 0) = rng.uniform(0.1, 0.9);
        // stay away from the |error| kink so finite differences are valid
        do {
          targets.age.at(i, 0) = rng.uniform(0.1, 0.9);
        } while (std::abs(targets.age.at(i, 0) - out.age.at(i, 0)) < 0.01);
        targets.age_mask.at(i, 0) = rng.bernoulli(0.7) ? 1.0 : 0.0;
      }
    }
    LossConfig cfg;
    cfg.binary_weight = rng.uniform(0.5, 2.0);
    cfg.age_weight = rng.uniform(0.5, 2.0);

    const MultitaskLossResult res = multitask_loss(out, targets, cfg);
    auto fd_field = [&](Tensor& field, const Tensor& analytic_grads) {
      for (std::size_t i = 0; i < field.size(); ++i) {
        const double saved = field.data()[i];
        field.data()[i] = saved + kGradStep;
        const double up = multitask_loss(out, targets, cfg).total;
        field.data()[i] = saved - kGradStep;
        const double down = multitask_loss(out, targets, cfg).total;
        field.data()[i] = saved;
        const double numeric = (up - down) / (2.0 * kGradStep);
        const double analytic = analytic_grads.data()[i];
        const double scale = std::max({1.0, std::abs(numeric), std::abs(analytic)});
        worst = std::max(worst, std::abs(numeric - analytic) / scale);
      }
    };
    fd_field(out.pathology, res.grads.pathology);
    if (with_meta) {
      fd_field(out.meta, res.grads.meta);
      fd_field(out.age, res.grads.age);
    }

    ModelOutput tb_out;
    tb_out.tb = Tensor({n, 1});
    Tensor tb_targets({n, 1});
    for (std::size_t i = 0; i < n; ++i) {
      tb_out.tb.at(i, 0) = rng.uniform(0.1, 0.9);
      tb_targets.at(i, 0) = rng.bernoulli(0.5) ? 1.0 : 0.0;
    }
    const TbLossResult tb_res = tb_loss(tb_out, tb_targets, cfg);
    for (std::size_t i = 0; i < n; ++i) {
      const double saved = tb_out.tb.at(i, 0);
      tb_out.tb.at(i, 0) = saved + kGradStep;
      const double up = tb_loss(tb_out, tb_targets, cfg).total;
      tb_out.tb.at(i, 0) = saved - kGradStep;
      const double down = tb_loss(tb_out, tb_targets, cfg).total;
      tb_out.tb.at(i, 0) = saved;
      const double numeric = (up - down) / (2.0 * kGradStep);
      const double analytic = tb_res.grads.tb.at(i, 0);
      const double scale = std::max({1.0, std::abs(numeric), std::abs(analytic)});
      worst = std::max(worst, std::abs(numeric - analytic) / scale);
    }
  }

  double worst_param = 0.0;
  for (int t = 0; t < 6; ++t)
    worst_param = std::max(worst_param, fd_check_head_parameters(rng, t % 2 == 1, 100 + t));

  if (worst > kGradRelTol || worst_param > kGradRelTol)
    return {false, cat("max relative error ", std::max(worst, worst_param), " at step ",
                       kGradStep)};
  return {true, cat(kGradBatches, " output batches (", worst, ") and 6 parameter sweeps (",
                    worst_param, ")")};
}

// ---------------------------------------------------------------------------
// 3. Each variant exposes exactly its contracted heads, with probability
//    outputs strictly inside (0,1) and closed-form parameter counts.

Outcome check_head_contract() {
  constexpr std::size_t fd = 32;
  BackboneConfig backbone;
  backbone.family = BackboneFamily::tiny_test_cnn;
  backbone.feature_dim = fd;

  Rng rng = substream(20240901, "acceptance_heads");
  Tensor batch({3, 3, 32, 32});
  for (std::size_t i = 0; i < batch.size(); ++i) batch.data()[i] = rng.uniform(-1.0, 1.0);

  std::vector<std::string> problems;
  auto head_params = [](Model& m) {
    std::size_t total = 0;
    for (auto& p : m.head_parameters()) total += p.value->size();
    return total;
  };
  auto expect_shape = [&](const Tensor& t, std::size_t rows, std::size_t cols,
                          const char* what) {
    if (t.rank() != 2 || t.dim(0) != rows || t.dim(1) != cols) {
      problems.push_back(cat(what, " has the wrong shape"));
      return;
    }
    for (std::size_t i = 0; i < t.size(); ++i)
      if (!(t.data()[i] > 0.0 && t.data()[i] < 1.0)) {
        problems.push_back(cat(what, " is not strictly inside (0,1)"));
        return;
      }
  };

  {
    Model m = build_model(backbone, Variant::metachexnet, 11);
    const ModelOutput out = m.forward(batch, false);
    expect_shape(out.pathology, 3, kNumPathologies, "metachexnet pathology output");
    expect_shape(out.meta, 3, 2, "metachexnet gender/view output");
    expect_shape(out.age, 3, 1, "metachexnet age output");
    if (!out.tb.empty()) problems.push_back("metachexnet produced a tb output");
    const std::size_t expected = (fd * kNumPathologies + kNumPathologies)  // pathology
                                 + (fd * 2 + 2)                           // gender/view
                                 + (fd * 10 + 10) + (10 + 1);             // age MLP
    if (head_params(m) != expected)
      problems.push_back(cat("metachexnet head parameters: ", head_params(m), " != ", expected));
  }
  {
    Model m = build_model(backbone, Variant::chexnet, 11);
    const ModelOutput out = m.forward(batch, false);
    expect_shape(out.pathology, 3, kNumPathologies, "chexnet pathology output");
    if (!out.meta.empty() || !out.age.empty() || !out.tb.empty())
      problems.push_back("chexnet produced extra head outputs");
    if (head_params(m) != fd * kNumPathologies + kNumPathologies)
      problems.push_back("chexnet head parameter count is off");
  }
  {
    Model m = build_model(backbone, Variant::tb, 11);
    const ModelOutput out = m.forward(batch, false);
    expect_shape(out.tb, 3, 1, "tb output");
    if (!out.pathology.empty() || !out.meta.empty() || !out.age.empty())
      problems.push_back("tb variant produced extra head outputs");
    if (head_params(m) != fd + 1) problems.push_back("tb head parameter count is off");
  }

  if (!problems.empty()) return {false, join(problems, "; ")};
  return {true, "3 variants, shapes, ranges and parameter counts as contracted"};
}

// ---------------------------------------------------------------------------
// 4. The whole learning stack can actually fit data: train loss falls
//    monotonically on a 32-image corpus, and tuberculosis fine-tuning
//    reaches high validation AUC within the epoch budget.

Outcome check_overfit() {
  const auto t0 = std::chrono::steady_clock::now();
  constexpr int size = 32;
  constexpr std::uint64_t seed = 17;

  MapProvider provider;
  std::vector<SampleRecord> records;
  for (int i = 0; i < 32; ++i) {
    SampleRecord rec;
    rec.image_id = cat("overfit_", i, ".png");
    rec.patient_id = cat("p", i);
    rec.gender = i % 2 ? Gender::Male : Gender::Female;
    rec.position = (i / 2) % 2 ? ViewPosition::PA : ViewPosition::AP;
    rec.age_years = 20.0 + 2.0 * i;
    for (std::size_t k = 0; k < kNumPathologies; ++k) rec.pathology[k] = (i + k) % 3 == 0;
    provider.put(rec.image_id, synthetic_chest_image(rec, seed, size));
    records.push_back(std::move(rec));
  }

  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 8;
  cfg.initial_lr = 2e-3;
  cfg.seed = seed;
  cfg.augment.phase = AugmentPhase::phase1;
  cfg.augment.flip_prob = 0.0;  // fixed inputs so the loss trace is clean
  cfg.augment.per_op_prob = 0.0;
  cfg.preprocess.target_size = size;

  BackboneConfig backbone;
  backbone.family = BackboneFamily::tiny_test_cnn;
  backbone.feature_dim = 32;
  Model model = build_model(backbone, Variant::metachexnet, seed);
  const TrainResult phase1 = train_phase1(model, records, records, provider, cfg);

  std::vector<std::string> problems;
  if (phase1.log.size() < static_cast<std::size_t>(kOverfitDecreases) + 1) {
    problems.push_back(cat("phase 1 ran only ", phase1.log.size(), " epochs"));
  } else {
    for (int i = 0; i < kOverfitDecreases; ++i)
      if (!(phase1.log[i + 1].train_loss < phase1.log[i].train_loss))
        problems.push_back(cat("phase 1 train loss did not fall at epoch ", i + 2, " (",
                               phase1.log[i].train_loss, " -> ", phase1.log[i + 1].train_loss,
                               ")"));
  }

  std::vector<TbSampleRecord> tb_train, tb_val;
  for (int i = 0; i < 48; ++i) {
    TbSampleRecord rec;
    rec.label = i % 2;
    rec.image_id = cat("tbimg_", i, "_", rec.label);
    provider.put(rec.image_id, synthetic_tb_image(rec, seed, size));
    (i < 32 ? tb_train : tb_val).push_back(std::move(rec));
  }

  Model phase1_model = model_from_checkpoint(phase1.best, seed);
  Model tb_model = swap_head_for_tb(phase1_model, seed);
  TrainConfig cfg2 = cfg;
  cfg2.epochs = kOverfitMaxEpochs;
  cfg2.augment.phase = AugmentPhase::phase2;
  const TrainResult phase2 = train_phase2(tb_model, tb_train, tb_val, provider, cfg2);

  double best_auc = 0.0;
  for (const auto& rec : phase2.log) best_auc = std::max(best_auc, rec.val_auc.value_or(0.0));
  if (best_auc < kOverfitAucMin)
    problems.push_back(cat("phase 2 val auc peaked at ", best_auc, " within ",
                           phase2.log.size(), " epochs"));
  if (phase2.best_metric != best_auc)
    problems.push_back("best-model selection did not track the highest validation auc");

  const double secs = seconds_since(t0);
  if (secs > kOverfitTimeLimit) problems.push_back(cat("took ", secs, " s"));
  if (!problems.empty()) return {false, join(problems, "; ")};
  return {true, cat("phase 2 val auc ", best_auc, " after ", phase2.log.size(), " epochs, ",
                    secs, " s total")};
}

// ---------------------------------------------------------------------------
// 5. The reduce-on-plateau schedule follows its pinned traces, including the
//    strict min_delta rule and early stopping at the lr floor.

Outcome check_plateau() {
  std::vector<std::string> problems;
  {
    PlateauScheduler s(1e-3);
    const auto a = s.observe(1.0), b = s.observe(0.9), c = s.observe(0.95);
    if (a.reduced || a.lr != 1e-3 || b.reduced || b.lr != 1e-3)
      problems.push_back("reduced while the metric was still improving");
    if (!c.reduced || c.lr != 1e-4)
      problems.push_back(cat("expected 1e-3 -> 1e-4 on the plateau epoch, got lr ", c.lr));
    if (a.should_stop || b.should_stop || c.should_stop)
      problems.push_back("stopped away from the lr floor");
  }
  {
    PlateauScheduler s(1e-3);
    s.observe(1.0);
    const auto b = s.observe(1.0), c = s.observe(1.0);
    if (!b.reduced || b.lr != 1e-4 || !c.reduced || c.lr != 1e-5)
      problems.push_back("a flat metric did not reduce on every plateau epoch");
  }
  {
    PlateauScheduler s(1e-3);
    s.observe(1.0);
    if (!s.observe(1.0 - 1e-4).reduced)
      problems.push_back("a drop of exactly min_delta counted as an improvement");
    PlateauScheduler t(1e-3);
    t.observe(1.0);
    if (t.observe(1.0 - 1.0001e-4).reduced)
      problems.push_back("a drop just past min_delta did not count as an improvement");
  }
  {
    PlateauConfig cfg;
    PlateauScheduler s(cfg.min_lr, cfg);  // already at the floor
    s.observe(1.0);
    const auto b = s.observe(1.0), c = s.observe(1.0), d = s.observe(1.0);
    if (b.should_stop || c.should_stop)
      problems.push_back("stopped before stop_patience floor epochs");
    if (!d.should_stop) problems.push_back("did not stop after stop_patience floor epochs");
    if (b.reduced || c.reduced || d.reduced || d.lr != cfg.min_lr)
      problems.push_back("lr moved while sitting at the floor");
  }
  if (!problems.empty()) return {false, join(problems, "; ")};
  return {true, "reduction, strict min_delta and floor-stop traces all as pinned"};
}

// ---------------------------------------------------------------------------
// 6. Patient-level splitting never leaks a patient across splits and always
//    covers every image exactly once, across many seeds.

Outcome check_splits() {
  const auto t0 = std::chrono::steady_clock::now();
  SyntheticCorpusSpec spec;
  spec.n_patients = kSplitPatients;
  const auto records = make_synthetic_records(spec, 99);
  std::map<std::string, std::string> patient_of;
  for (const auto& r : records) patient_of[r.image_id] = r.patient_id;

  for (std::uint64_t seed = 1; seed <= kSplitSeeds; ++seed) {
    const auto splits = partition_by_patient(records, {0.7, 0.1, 0.2}, seed);
    std::set<std::string> owners, seen_images;
    std::size_t patients = 0;
    for (const auto& m : splits) {
      for (const auto& pid : m.patient_ids) {
        if (!owners.insert(pid).second)
          return {false, cat("patient ", pid, " appears in two splits at seed ", seed)};
        ++patients;
      }
      for (const auto& id : m.entries) {
        if (!m.patient_ids.count(patient_of.at(id)))
          return {false, cat("image ", id, " landed outside its patient's split at seed ", seed)};
        if (!seen_images.insert(id).second)
          return {false, cat("image ", id, " appears twice at seed ", seed)};
      }
    }
    if (seen_images.size() != records.size() || patients != static_cast<std::size_t>(kSplitPatients))
      return {false, cat("splits are not exhaustive at seed ", seed)};
  }

  const double secs = seconds_since(t0);
  if (secs > kSplitTimeLimit)
    return {false, cat(kSplitSeeds, " seeds took ", secs, " s (limit ", kSplitTimeLimit, ")")};
  return {true, cat(kSplitSeeds, " seeds x ", kSplitPatients, " patients (", records.size(),
                    " images) in ", secs, " s")};
}

// ---------------------------------------------------------------------------
// 7. The logistic fit lands on a stationary point of the penalized
//    likelihood, zeroes out under mirror symmetry, and recovers generating
//    coefficients from a large sample.

Eigen::VectorXd ll_gradient(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                            const Eigen::VectorXd& w, double b, double l2) {
  const Eigen::Index n = X.rows(), d = X.cols();
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(d + 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double p = 1.0 / (1.0 + std::exp(-(X.row(i).dot(w) + b)));
    const double r = y[i] - p;
    grad.head(d) += r * X.row(i).transpose();
    grad[d] += r;
  }
  grad.head(d) -= l2 * w;
  return grad;
}

Outcome check_logistic() {
  std::vector<std::string> problems;
  Rng rng = substream(20240901, "acceptance_logit");
  constexpr std::size_t d = kNumPathologies;

  double worst_grad = 0.0;
  for (int t = 0; t < kLogisticInstances; ++t) {
    const std::size_t n = 40 + rng.below(60);
    const double l2 = std::array{0.1, 1.0, 5.0}[t % 3];
    std::array<double, d> w_true{};
    for (auto& wk : w_true) wk = rng.uniform(-1.0, 1.0);
    std::vector<LogOddsFeatures> data(n);
    for (auto& row : data) {
      double z = 0.3;
      for (std::size_t k = 0; k < d; ++k) {
        row.x[k] = rng.uniform(-2.0, 2.0);
        z += w_true[k] * row.x[k];
      }
      row.tb_label = rng.bernoulli(1.0 / (1.0 + std::exp(-z))) ? 1 : 0;
    }
    const LogisticModel model = fit_logistic(data, l2);
    if (!model.converged) {
      problems.push_back(cat("instance ", t, " reported non-convergence"));
      continue;
    }
    Eigen::MatrixXd X(n, d);
    Eigen::VectorXd y(n), w(d);
    for (std::size_t i = 0; i < n; ++i) {
      y[static_cast<Eigen::Index>(i)] = data[i].tb_label;
      for (std::size_t k = 0; k < d; ++k) X(static_cast<Eigen::Index>(i), k) = data[i].x[k];
    }
    for (std::size_t k = 0; k < d; ++k) w[static_cast<Eigen::Index>(k)] = model.coefficients[k];
    worst_grad = std::max(
        worst_grad, ll_gradient(X, y, w, model.intercept, l2).lpNorm<Eigen::Infinity>());
  }
  if (worst_grad > kLogisticGradTol)
    problems.push_back(cat("optimality residual up to ", worst_grad));

  {
    // mirrored rows (x, y) and (-x, y) make the likelihood even in w
    std::vector<LogOddsFeatures> data;
    for (int i = 0; i < 40; ++i) {
      LogOddsFeatures row;
      for (std::size_t k = 0; k < d; ++k) row.x[k] = rng.uniform(-2.0, 2.0);
      row.tb_label = i % 2;
      LogOddsFeatures mirror = row;
      for (std::size_t k = 0; k < d; ++k) mirror.x[k] = -mirror.x[k];
      data.push_back(row);
      data.push_back(mirror);
    }
    const LogisticModel model = fit_logistic(data, 0.5);
    for (std::size_t k = 0; k < d; ++k)
      if (std::abs(model.coefficients[k]) > kLogisticZeroTol) {
        problems.push_back(cat("mirror-symmetric data left coefficient ", k, " at ",
                               model.coefficients[k]));
        break;
      }
    if (std::abs(model.intercept) > kLogisticZeroTol)
      problems.push_back(cat("balanced mirrored data left intercept at ", model.intercept));
  }

  {
    std::array<double, d> beta{};
    beta[0] = 0.8;
    beta[1] = -0.5;
    beta[2] = 0.3;
    const double b_true = 0.2;
    std::vector<LogOddsFeatures> data(kLogisticRecoveryN);
    for (auto& row : data) {
      double z = b_true;
      for (std::size_t k = 0; k < d; ++k) {
        row.x[k] = rng.normal();
        z += beta[k] * row.x[k];
      }
      row.tb_label = rng.bernoulli(1.0 / (1.0 + std::exp(-z))) ? 1 : 0;
    }
    const LogisticModel model = fit_logistic(data, 1.0);
    double worst = std::abs(model.intercept - b_true);
    for (std::size_t k = 0; k < d; ++k)
      worst = std::max(worst, std::abs(model.coefficients[k] - beta[k]));
    if (worst > kLogisticRecoveryTol)
      problems.push_back(cat("recovered coefficients off by up to ", worst, " at n = ",
                             kLogisticRecoveryN));
  }

  if (!problems.empty()) return {false, join(problems, "; ")};
  return {true, cat(kLogisticInstances, " stationarity instances (residual <= ", worst_grad,
                    "), symmetry zeros, coefficients recovered")};
}

// ---------------------------------------------------------------------------
// 8. Agreement statistics equal their plain formulas: bias is the mean
//    signed difference, limits of agreement sit at 1.96 sample deviations.

Outcome check_agreement() {
  Rng rng = substream(20240901, "acceptance_ba");
  double worst = 0.0;
  for (int t = 0; t < kAgreementInstances; ++t) {
    const std::size_t n = 2 + rng.below(40);
    std::vector<double> pred(n), act(n);
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = rng.uniform(0.0, 80.0);
      act[i] = rng.uniform(0.0, 80.0);
    }
    const BlandAltmanResult ba = bland_altman(pred, act);
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += pred[i] - act[i];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double dev = pred[i] - act[i] - mean;
      var += dev * dev;
    }
    const double sd = std::sqrt(var / static_cast<double>(n - 1));
    worst = std::max({worst, std::abs(ba.bias - mean), std::abs(ba.sd_diff - sd),
                      std::abs(ba.loa_lower - (mean - 1.96 * sd)),
                      std::abs(ba.loa_upper - (mean + 1.96 * sd))});
  }
  if (worst > kAgreementTol)
    return {false, cat("statistics deviate from their formulas by up to ", worst)};

  // canonical trace: errors +2, 0, -2 give bias 0 and limits +-3.92
  const BlandAltmanResult ba = bland_altman({42.0, 50.0, 58.0}, {40.0, 50.0, 60.0});
  if (std::abs(ba.bias) > kAgreementTol || std::abs(ba.sd_diff - 2.0) > kAgreementTol ||
      std::abs(ba.loa_lower + 3.92) > kAgreementTol ||
      std::abs(ba.loa_upper - 3.92) > kAgreementTol)
    return {false, cat("errors {+2, 0, -2} gave bias ", ba.bias, ", limits [", ba.loa_lower,
                       ", ", ba.loa_upper, "]")};
  return {true, cat(kAgreementInstances, " random datasets (max deviation ", worst,
                    ") and the {+2,0,-2} trace")};
}

// ---------------------------------------------------------------------------
// Shared CLI plumbing for the pipeline-level criteria.

struct Cli {
  std::string exe;
  fs::path log;

  bool run(const std::string& args) const {
    if (exe.empty()) return false;
    const std::string cmd =
        cat("\"", exe, "\" ", args, " >> \"", log.string(), "\" 2>&1");
    return std::system(cmd.c_str()) == 0;
  }
};

std::string q(const fs::path& p) { return cat("\"", p.string(), "\""); }

const fs::path& work_dir() {
  static const fs::path w = fs::temp_directory_path() / "metachex_acceptance";
  return w;
}

// One shared synthetic corpus: tiny backbone, 48x48 images, 2+4 epochs.
const fs::path* ensure_corpus(const Cli& cli) {
  static std::optional<fs::path> corpus;
  static bool attempted = false;
  if (!attempted) {
    attempted = true;
    const fs::path dir = work_dir() / "corpus";
    if (cli.run(cat("synth --out-dir ", q(dir),
                    " --n-patients 30 --image-size 48 --shenzhen-per-class 24"
                    " --montgomery-per-class 8 --seed 11")))
      corpus = dir;
  }
  return corpus ? &*corpus : nullptr;
}

struct Step {
  std::string name;
  std::string args;
};

// prepare -> both training phases -> tb predictions -> projected embeddings
std::vector<Step> core_chain(const fs::path& corpus, const fs::path& out) {
  const std::string common = cat(" --config ", q(corpus / "config.json"), " --output-dir ", q(out));
  return {
      {"prepare", cat("prepare", common)},
      {"train phase 1", cat("train --phase 1", common)},
      {"train phase 2", cat("train --phase 2", common)},
      {"predict tb test",
       cat("predict", common, " --checkpoint ", q(out / "checkpoints" / "phase2_best.ckpt"),
           " --manifest ", q(out / "manifests" / "tb_test.txt"), " --out ",
           q(out / "tb_test_pred.tsv"))},
      {"embed train split",
       cat("analyze embed", common, " --checkpoint ",
           q(out / "checkpoints" / "phase1_best.ckpt"), " --manifest ",
           q(out / "manifests" / "chestxray14_train.txt"), " --project --out ",
           q(out / "embeddings.tsv"))},
  };
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) fail(cat("cannot open ", p.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// 9. Re-running the pipeline with the same configuration reproduces every
//    artifact byte for byte: splits, checkpoints, logs, predictions and
//    projected embeddings.

Outcome check_determinism(const Cli& cli) {
  if (cli.exe.empty()) return {false, "pipeline binary path not supplied as argv[1]"};
  const fs::path* corpus = ensure_corpus(cli);
  if (!corpus) return {false, "synthetic corpus generation failed (see cli.log)"};

  const std::vector<std::string> artifacts = {
      "manifests/chestxray14_train.txt", "manifests/chestxray14_validation.txt",
      "manifests/chestxray14_test.txt",  "manifests/tb_train.txt",
      "manifests/tb_validation.txt",     "manifests/tb_test.txt",
      "manifests/tb_external_test.txt",  "manifests/summary.json",
      "checkpoints/phase1_best.ckpt",    "checkpoints/phase2_best.ckpt",
      "logs/phase1_log.jsonl",           "logs/phase2_log.jsonl",
      "tb_test_pred.tsv",                "embeddings.tsv",
  };

  const fs::path out = work_dir() / "det_run";
  std::map<std::string, std::string> first;
  for (int round = 0; round < 2; ++round) {
    fs::remove_all(out);
    for (const auto& step : core_chain(*corpus, out))
      if (!cli.run(step.args))
        return {false, cat("round ", round + 1, ": step '", step.name, "' failed (see cli.log)")};
    for (const auto& rel : artifacts) {
      const std::string bytes = read_bytes(out / rel);
      if (round == 0) {
        first[rel] = bytes;
      } else if (bytes != first.at(rel)) {
        return {false, cat(rel, " differs between two identical runs")};
      }
    }
  }
  return {true, cat(artifacts.size(), " artifacts byte-identical across two full runs")};
}

// ---------------------------------------------------------------------------
// 10. Pooling prediction sets onto one score scale re-ranks across sets:
//     two perfectly ranked sets can pool to a strictly lower score.

Outcome check_pooling() {
  TbScoredSet a{"set_a", {0.2, 0.4}, {0, 1}};
  TbScoredSet b{"set_b", {0.6, 0.8}, {0, 1}};
  const TbEvalReport report = build_tb_report({a, b}, true);
  if (report.sets[0].auc != 1.0 || report.sets[1].auc != 1.0)
    return {false, cat("per-set scores ", report.sets[0].auc, ", ", report.sets[1].auc,
                       " (expected 1.0 each)")};
  if (!report.combined) return {false, "pooled evaluation missing"};
  if (std::abs(report.combined->auc - 0.75) > kPooledAucTol)
    return {false, cat("pooled score ", report.combined->auc, " (expected 0.75)")};
  return {true, "two perfect sets pool to 0.75 on a shared score scale"};
}

// ---------------------------------------------------------------------------
// 11. The full command-line pipeline runs end to end on a synthetic corpus,
//     covering every subcommand, and its outputs are well-formed.

Outcome check_cli_chain(const Cli& cli) {
  if (cli.exe.empty()) return {false, "pipeline binary path not supplied as argv[1]"};
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path* corpus = ensure_corpus(cli);
  if (!corpus) return {false, "synthetic corpus generation failed (see cli.log)"};

  const fs::path out = work_dir() / "e2e_out";
  fs::remove_all(out);
  const std::string common =
      cat(" --config ", q(*corpus / "config.json"), " --output-dir ", q(out));
  const fs::path ckpt1 = out / "checkpoints" / "phase1_best.ckpt";
  const fs::path ckpt2 = out / "checkpoints" / "phase2_best.ckpt";

  std::vector<Step> steps = core_chain(*corpus, out);
  steps.push_back({"predict tb external",
                   cat("predict", common, " --checkpoint ", q(ckpt2), " --manifest ",
                       q(out / "manifests" / "tb_external_test.txt"), " --out ",
                       q(out / "tb_external_pred.tsv"))});
  steps.push_back({"evaluate tb",
                   cat("evaluate", common, " --predictions ", q(out / "tb_test_pred.tsv"),
                       " --predictions ", q(out / "tb_external_pred.tsv"), " --manifest ",
                       q(out / "manifests" / "tb_test.txt"), " --manifest ",
                       q(out / "manifests" / "tb_external_test.txt"), " --combine --out ",
                       q(out / "tb_report.json"))});
  steps.push_back({"predict pathology scores on tb images",
                   cat("predict", common, " --checkpoint ", q(ckpt1), " --manifest ",
                       q(out / "manifests" / "tb_train.txt"), " --out ",
                       q(out / "tb_train_pathology.tsv"))});
  steps.push_back({"analyze tb-logit",
                   cat("analyze tb-logit", common, " --predictions ",
                       q(out / "tb_train_pathology.tsv"), " --out ", q(out / "tb_logit.json"))});
  steps.push_back({"predict validation split",
                   cat("predict", common, " --checkpoint ", q(ckpt1), " --manifest ",
                       q(out / "manifests" / "chestxray14_validation.txt"), " --out ",
                       q(out / "val_pred.tsv"))});
  steps.push_back({"evaluate multitask",
                   cat("evaluate", common, " --predictions ", q(out / "val_pred.tsv"),
                       " --out ", q(out / "multitask_report.json"))});
  steps.push_back({"plot roc",
                   cat("plot roc", common, " --predictions ", q(out / "tb_test_pred.tsv"),
                       " --predictions ", q(out / "tb_external_pred.tsv"), " --out ",
                       q(out / "roc.svg"))});
  steps.push_back({"plot bland-altman",
                   cat("plot bland-altman", common, " --predictions ", q(out / "val_pred.tsv"),
                       " --out ", q(out / "bland_altman.svg"))});
  steps.push_back({"plot tsne",
                   cat("plot tsne", common, " --embeddings ", q(out / "embeddings.tsv"),
                       " --color-by gender --out ", q(out / "tsne.svg"))});

  for (const auto& step : steps)
    if (!cli.run(step.args))
      return {false, cat("step '", step.name, "' failed (see cli.log)")};

  std::vector<std::string> problems;
  const auto tb_report = nlohmann::json::parse(read_bytes(out / "tb_report.json"));
  if (tb_report.at("kind") != "tb" || tb_report.at("sets").size() != 2)
    problems.push_back("tb report is malformed");
  else
    for (const auto& set : tb_report.at("sets")) {
      const double auc = set.at("auc").get<double>();
      if (!(auc >= 0.0 && auc <= 1.0))
        problems.push_back(cat("tb report auc out of range: ", auc));
    }
  if (tb_report.at("combined").is_null()) problems.push_back("tb report lacks the pooled set");

  const auto logit = nlohmann::json::parse(read_bytes(out / "tb_logit.json"));
  if (logit.at("coefficients").size() != kNumPathologies ||
      logit.at("coefficients")[0].at("pathology") != "Atelectasis")
    problems.push_back("logistic model json is malformed");

  const auto multitask = nlohmann::json::parse(read_bytes(out / "multitask_report.json"));
  if (multitask.at("kind") != "multitask" || multitask.at("n_images").get<int>() < 2)
    problems.push_back("multitask report is malformed");

  for (const char* svg : {"roc.svg", "bland_altman.svg", "tsne.svg"}) {
    const std::string body = read_bytes(out / svg);
    if (body.rfind("<svg ", 0) != 0 || body.find("config_hash=") == std::string::npos)
      problems.push_back(cat(svg, " is not a tagged svg figure"));
  }
  if (read_bytes(out / "roc.svg").find("(AUC=") == std::string::npos)
    problems.push_back("roc figure lacks its auc legend");

  const double secs = seconds_since(t0);
  if (secs > kChainTimeLimit)
    problems.push_back(cat("chain took ", secs, " s (limit ", kChainTimeLimit, ")"));
  if (!problems.empty()) return {false, join(problems, "; ")};
  return {true, cat(steps.size(), " pipeline steps in ", secs, " s, all outputs well-formed")};
}

}  // namespace

int main(int argc, char** argv) {
  fs::remove_all(work_dir());
  fs::create_directories(work_dir());
  const Cli cli{argc > 1 ? argv[1] : "", work_dir() / "cli.log"};

  criterion(1, "ranking score equals a brute-force pairwise oracle", check_auc_oracle);
  criterion(2, "loss gradients match centered finite differences", check_loss_gradients);
  criterion(3, "model heads expose the contracted shapes and parameter counts",
            check_head_contract);
  criterion(4, "a small model overfits a tiny corpus through both phases", check_overfit);
  criterion(5, "the plateau schedule follows its pinned traces", check_plateau);
  criterion(6, "patient-level splits stay disjoint and exhaustive across seeds", check_splits);
  criterion(7, "the logistic fit is a stationary penalized-likelihood optimum", check_logistic);
  criterion(8, "agreement statistics match their closed-form definitions", check_agreement);
  criterion(9, "repeated pipeline runs produce byte-identical artifacts",
            [&] { return check_determinism(cli); });
  criterion(10, "pooling perfect prediction sets lowers the shared-scale score", check_pooling);
  criterion(11, "the command-line pipeline runs end to end on a synthetic corpus",
            [&] { return check_cli_chain(cli); });

  std::printf("%d/11 criteria passed\n", 11 - g_failures);
  if (g_failures == 0) fs::remove_all(work_dir());  // keep artifacts for debugging on failure
  return g_failures == 0 ? 0 : 1;
}
