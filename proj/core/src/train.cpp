#include "stgan/train.hpp"

#include <cassert>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "stgan/metrics.hpp"
#include "stgan/ops.hpp"

namespace stgan {
namespace {

using Clock = std::chrono::steady_clock;

// Independent shuffle streams for the two domains and for pretraining.
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) { return seed * 4 + stream; }

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NonFiniteLossError(std::string("non-finite ") + what);
}

AdamConfig adam_config(const TrainConfig& c, double lr) {
  return AdamConfig{lr, c.adam_beta1, c.adam_beta2, 1e-8};
}

void require_input(const Tensor<float>& images, const ArchConfig& arch, const char* what) {
  const Shape s = images.shape();
  if (s.c != 1 || s.h != arch.image_size || s.w != arch.image_size) {
    throw ValidationError(std::string(what) + ": images " + s.str() +
                          " do not match architecture image_size " +
                          std::to_string(arch.image_size));
  }
}

void require_dataset(const Dataset& ds, const ArchConfig& arch, const char* what) {
  if (ds.empty()) throw ValidationError(std::string(what) + ": dataset is empty");
  if (ds.image_size() != arch.image_size) {
    throw ValidationError(std::string(what) + ": dataset image size " +
                          std::to_string(ds.image_size()) + " does not match architecture " +
                          std::to_string(arch.image_size));
  }
}

// One Adam step of S on cross-entropy against `masks`. Returns the loss.
double segmentor_step(Params& s, AdamState& state, const ArchConfig& arch,
                      const Tensor<float>& images, const LabelTensor& masks,
                      const AdamConfig& cfg) {
  Graph<float> g(true);
  Params grads = s.zeros_like();
  const auto p = bind(g, s, &grads);
  const Var logits = segmentor(g, arch, p, g.constant_ref(images));
  const Var ce = loss_ops::cross_entropy(g, logits, masks);
  const double loss = g.value(ce).item();
  require_finite(loss, "segmentation loss");
  g.backward(ce);
  adam_step(s, grads, state, cfg);
  return loss;
}

Tensor<float> stack_images(const std::vector<const Tensor<float>*>& parts) {
  Shape s = parts.front()->shape();
  s.n = 0;
  for (const auto* t : parts) s.n += t->shape().n;
  Tensor<float> out(s);
  float* dst = out.data();
  for (const auto* t : parts) dst = std::copy(t->data(), t->data() + t->size(), dst);
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ValidationError("train." + m); };
  if (epochs < 1) fail("epochs must be >= 1");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!std::isfinite(lr_gan) || lr_gan < 0) fail("lr_gan must be finite and >= 0");
  if (!std::isfinite(lr_seg) || lr_seg <= 0) fail("lr_seg must be finite and > 0");
  if (!std::isfinite(lr_pretrain) || lr_pretrain < 0) fail("lr_pretrain must be finite and >= 0");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1)) fail("adam_beta1 must be in [0, 1)");
  if (!(adam_beta2 >= 0 && adam_beta2 < 1)) fail("adam_beta2 must be in [0, 1)");
  if (checkpoint_every < 0) fail("checkpoint_every must be >= 0");
  if (log_every < 1) fail("log_every must be >= 1");
  if (pretrain_epochs < 0) fail("pretrain_epochs must be >= 0");
  weights.validate();
}

std::string log_csv_header() {
  return "epoch,step,l_gan1,l_gan2,l_gan,l_cyc,l_shape,l_total,wall_time_s";
}

std::string log_csv_row(const LogRow& r) {
  char buf[320];
  const LossReport& l = r.report;
  std::snprintf(buf, sizeof buf, "%d,%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.3f", r.epoch,
                static_cast<long long>(r.step), l.l_gan1, l.l_gan2, l.l_gan, l.l_cyc, l.l_shape,
                l.l_total, r.wall_time_s);
  return buf;
}

void write_log_csv(const std::vector<LogRow>& rows, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError(path, "cannot write training log");
  out << log_csv_header() << '\n';
  for (const auto& r : rows) out << log_csv_row(r) << '\n';
}

GanTrainer::GanTrainer(ModelBundle bundle, TrainConfig config, OptimizerState state)
    : bundle_(std::move(bundle)), config_(std::move(config)), state_(std::move(state)) {
  config_.validate();
  validate_bundle(bundle_);
}

LossReport GanTrainer::step(const Batch& source, const Batch& target,
                            const std::function<void(Phase, const ModelBundle&)>& observer) {
  const ArchConfig& arch = bundle_.arch;
  const LossWeights& w = config_.weights;
  if (source.domain != Domain::kSource || target.domain != Domain::kTarget) {
    throw ValidationError("gan step: expected a source batch and a target batch");
  }
  if (!source.masks) throw ValidationError("gan step: source batch carries no masks");
  require_input(source.images, arch, "gan step (source)");
  require_input(target.images, arch, "gan step (target)");
  const Tensor<float>& x = source.images;
  const Tensor<float>& y = target.images;
  const LabelTensor& mx = *source.masks;
  auto notify = [&](Phase p) {
    if (observer) observer(p, bundle_);
  };
  notify(Phase::kBeforeStep);

  // Generator forward pass; reused as fixed input by the D-step.
  Graph<float> gg(true);
  Params g1_grad = bundle_.g1.zeros_like();
  Params g2_grad = bundle_.g2.zeros_like();
  const auto g1 = bind(gg, bundle_.g1, &g1_grad);
  const auto g2 = bind(gg, bundle_.g2, &g2_grad);
  const Var xv = gg.constant_ref(x);
  const Var yv = gg.constant_ref(y);
  const Var fx = generator(gg, arch, g1, xv);   // G1(x): fake target
  const Var fy = generator(gg, arch, g2, yv);   // G2(y): fake source
  const Var rx = generator(gg, arch, g2, fx);   // G2(G1(x))
  const Var ry = generator(gg, arch, g1, fy);   // G1(G2(y))

  // D-step: maximize the log-likelihood of both discriminators.
  AdversarialTerms adv;
  {
    Graph<float> gd(true);
    Params d1_grad = bundle_.d1.zeros_like();
    Params d2_grad = bundle_.d2.zeros_like();
    const auto d1 = bind(gd, bundle_.d1, &d1_grad);
    const auto d2 = bind(gd, bundle_.d2, &d2_grad);
    const Var real1 = loss_ops::mean_log_sigmoid(gd, discriminator(gd, arch, d1, gd.constant_ref(y)));
    const Var fake1 = loss_ops::mean_log_one_minus_sigmoid(
        gd, discriminator(gd, arch, d1, gd.constant_ref(gg.value(fx))));
    const Var real2 = loss_ops::mean_log_sigmoid(gd, discriminator(gd, arch, d2, gd.constant_ref(x)));
    const Var fake2 = loss_ops::mean_log_one_minus_sigmoid(
        gd, discriminator(gd, arch, d2, gd.constant_ref(gg.value(fy))));
    adv.l_gan1 = double(gd.value(real1).item()) + double(gd.value(fake1).item());
    adv.l_gan2 = double(gd.value(real2).item()) + double(gd.value(fake2).item());
    require_finite(adv.l_gan1, "adversarial loss (D1)");
    require_finite(adv.l_gan2, "adversarial loss (D2)");
    const Var loss_d = ops::linear_combination<float>(
        gd, {{real1, -1.f}, {fake1, -1.f}, {real2, -1.f}, {fake2, -1.f}});
    gd.backward(loss_d);
    const AdamConfig cfg = adam_config(config_, config_.lr_gan);
    adam_step(bundle_.d1, d1_grad, state_.d1, cfg);
    adam_step(bundle_.d2, d2_grad, state_.d2, cfg);
  }
  notify(Phase::kAfterD);

  // G-step through the updated, frozen discriminators and segmentor.
  const auto d1 = bind(gg, bundle_.d1, static_cast<Params*>(nullptr));
  const auto d2 = bind(gg, bundle_.d2, static_cast<Params*>(nullptr));
  const Var fool1 = loss_ops::mean_log_sigmoid(gg, discriminator(gg, arch, d1, fx));
  const Var fool2 = loss_ops::mean_log_sigmoid(gg, discriminator(gg, arch, d2, fy));
  const Var cyc1 = loss_ops::mean_abs_diff(gg, rx, xv);
  const Var cyc2 = loss_ops::mean_abs_diff(gg, ry, yv);
  adv.g_adv1 = -double(gg.value(fool1).item());
  adv.g_adv2 = -double(gg.value(fool2).item());
  CycleTerms cyc;
  cyc.l_cyc1 = gg.value(cyc1).item();
  cyc.l_cyc2 = gg.value(cyc2).item();
  cyc.l_cyc = 0.5 * (cyc.l_cyc1 + cyc.l_cyc2);

  std::vector<std::pair<Var, float>> terms{{fool1, -0.5f},
                                           {fool2, -0.5f},
                                           {cyc1, float(0.5 * w.lambda_cyc)},
                                           {cyc2, float(0.5 * w.lambda_cyc)}};
  double l_shape = 0.0;
  if (w.lambda_shape > 0) {
    const auto s = bind(gg, bundle_.s, static_cast<Params*>(nullptr));
    const Var ce = loss_ops::cross_entropy(gg, segmentor(gg, arch, s, fx), mx);
    l_shape = gg.value(ce).item();
    terms.push_back({ce, float(w.lambda_shape)});
  }
  const Objective obj = total_objective(adv, cyc, l_shape, w);
  require_finite(obj.targets.generator, "generator objective");
  gg.backward(ops::linear_combination<float>(gg, terms));
  {
    const AdamConfig cfg = adam_config(config_, config_.lr_gan);
    adam_step(bundle_.g1, g1_grad, state_.g1, cfg);
    adam_step(bundle_.g2, g2_grad, state_.g2, cfg);
  }
  notify(Phase::kAfterG);

  // S-step on fresh translations from the updated G1.
  if (w.lambda_shape > 0 || config_.segmentor_joint) {
    const Tensor<float> fresh = generator_forward(bundle_.g1, arch, x);
    segmentor_step(bundle_.s, state_.s, arch, fresh, mx, adam_config(config_, config_.lr_seg));
  }
  notify(Phase::kAfterS);

  ++bundle_.step;
  assert(obj.report.consistent(w, 1e-6));
  return obj.report;
}

PretrainResult pretrain_segmentor(const Dataset& source, const ArchConfig& arch,
                                  const TrainConfig& cfg,
                                  const std::function<void(int, double)>& on_epoch) {
  cfg.validate();
  arch.validate();
  require_dataset(source, arch, "pretrain_segmentor");
  if (!source.all_masked()) throw ValidationError("pretrain_segmentor: every source sample needs a mask");

  PretrainResult result{init_bundle(arch, cfg.seed), {}, {}};
  const AdamConfig adam = adam_config(cfg, cfg.pretrain_lr());
  for (int epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
    for (const Batch& b : batch_iterator(source, cfg.batch_size, stream_seed(cfg.seed, 3),
                                         static_cast<std::uint64_t>(epoch), true)) {
      segmentor_step(result.bundle.s, result.optimizer.s, arch, b.images, *b.masks, adam);
    }
    const auto pred = segment_dataset(result.bundle, source);
    double sum = 0.0;
    for (std::size_t i = 0; i < source.size(); ++i) {
      const auto a = metrics::region(pred[i], metrics::Structure::kMyo);
      const auto b = metrics::region(source.mask(i), metrics::Structure::kMyo);
      sum += metrics::dice(a.v, b.v);
    }
    const double dice = sum / double(source.size());
    result.epoch_myo_dice.push_back(dice);
    if (on_epoch) on_epoch(epoch + 1, dice);
  }
  return result;
}

GanResult train_shape_transfer_gan(const Dataset& source, const Dataset& target,
                                   ModelBundle bundle, const TrainConfig& cfg,
                                   const TrainOptions& opts) {
  cfg.validate();
  int start_epoch = 0;
  OptimizerState state;
  if (opts.resume) {
    bundle = opts.resume->bundle;
    state = opts.resume->optimizer;
    start_epoch = opts.resume->epoch;
  }
  validate_bundle(bundle);
  require_dataset(source, bundle.arch, "train_shape_transfer_gan (source)");
  require_dataset(target, bundle.arch, "train_shape_transfer_gan (target)");
  if (!source.all_masked()) {
    throw ValidationError("train_shape_transfer_gan: every source sample needs a mask");
  }
  const int stop = opts.stop_after_epoch ? std::min(*opts.stop_after_epoch, cfg.epochs) : cfg.epochs;

  GanTrainer trainer(std::move(bundle), cfg, std::move(state));
  GanResult result;
  result.epochs_completed = start_epoch;
  const auto t0 = Clock::now();
  auto save = [&](const std::filesystem::path& name, int epoch) {
    if (!opts.checkpoint_dir) return;
    checkpoint_save(Checkpoint{trainer.bundle(), trainer.optimizer(), cfg, epoch},
                    *opts.checkpoint_dir / name);
  };

  for (int epoch = start_epoch; epoch < stop; ++epoch) {
    const auto e = static_cast<std::uint64_t>(epoch);
    const auto src = batch_indices(source.size(), cfg.batch_size, stream_seed(cfg.seed, 1), e);
    const auto tgt = batch_indices(target.size(), cfg.batch_size, stream_seed(cfg.seed, 2), e);
    for (std::size_t k = 0; k < src.size(); ++k) {
      const Batch xb = make_batch(source, src[k], true);
      const Batch yb = make_batch(target, tgt[k % tgt.size()], false);
      LossReport report;
      try {
        report = trainer.step(xb, yb, opts.observer);
      } catch (const NonFiniteLossError&) {
        save("diagnostic.ckpt", epoch);
        throw;
      }
      const std::int64_t step = trainer.bundle().step;
      if (step % cfg.log_every == 0) {
        LogRow row{epoch + 1, step, report, 0.0};
        if (!opts.deterministic) {
          row.wall_time_s = std::chrono::duration<double>(Clock::now() - t0).count();
        }
        result.log.push_back(row);
        if (opts.on_log) opts.on_log(row);
      }
    }
    if (!trainer.bundle().g1.all_finite() || !trainer.bundle().g2.all_finite() ||
        !trainer.bundle().s.all_finite()) {
      save("diagnostic.ckpt", epoch + 1);
      throw NonFiniteLossError("parameters became non-finite in epoch " + std::to_string(epoch + 1));
    }
    result.epochs_completed = epoch + 1;
    if (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%04d.ckpt", epoch + 1);
      save(name, epoch + 1);
    }
    if (opts.on_epoch_end) opts.on_epoch_end(epoch + 1, trainer.bundle());
  }
  result.bundle = trainer.bundle();
  result.optimizer = trainer.optimizer();
  return result;
}

ModelBundle train_segmentor_on_translated(const Dataset& source, ModelBundle bundle,
                                          const TrainConfig& cfg) {
  cfg.validate();
  validate_bundle(bundle);
  require_dataset(source, bundle.arch, "train_segmentor_on_translated");
  if (!source.all_masked()) {
    throw ValidationError("train_segmentor_on_translated: every source sample needs a mask");
  }
  // G1 is frozen, so every translation is computed once.
  std::vector<Tensor<float>> translated(source.size());
  for (std::size_t i = 0; i < source.size(); ++i) {
    const std::size_t idx[1] = {i};
    translated[i] = generator_forward(bundle.g1, bundle.arch, make_batch(source, idx, false).images);
  }
  AdamState state;
  const AdamConfig adam = adam_config(cfg, cfg.lr_seg);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const auto& idx : batch_indices(source.size(), cfg.batch_size, stream_seed(cfg.seed, 3),
                                         static_cast<std::uint64_t>(epoch))) {
      std::vector<const Tensor<float>*> parts;
      for (std::size_t i : idx) parts.push_back(&translated[i]);
      const Batch b = make_batch(source, idx, true);
      segmentor_step(bundle.s, state, bundle.arch, stack_images(parts), *b.masks, adam);
    }
  }
  return bundle;
}

LabelTensor argmax_labels(const Tensor<float>& logits) {
  const Shape s = logits.shape();
  if (s.c < 1) throw ValidationError("argmax_labels: no class channels");
  LabelTensor out(Shape{s.n, 1, s.h, s.w});
  const std::size_t hw = s.plane();
  for (int n = 0; n < s.n; ++n) {
    std::uint8_t* dst = out.plane(n, 0);
    for (std::size_t i = 0; i < hw; ++i) {
      int best = 0;
      float best_v = logits.plane(n, 0)[i];
      for (int c = 1; c < s.c; ++c) {
        const float v = logits.plane(n, c)[i];
        if (v > best_v) {
          best = c;
          best_v = v;
        }
      }
      dst[i] = static_cast<std::uint8_t>(best);
    }
  }
  return out;
}

LabelTensor segment(const ModelBundle& bundle, const Tensor<float>& images) {
  require_input(images, bundle.arch, "segment");
  return argmax_labels(segmentor_forward(bundle.s, bundle.arch, images));
}

std::vector<LabelMask> segment_dataset(const ModelBundle& bundle, const Dataset& ds,
                                       int batch_size) {
  if (batch_size < 1) throw ValidationError("segment_dataset: batch_size must be >= 1");
  std::vector<LabelMask> out;
  out.reserve(ds.size());
  for (std::size_t begin = 0; begin < ds.size(); begin += std::size_t(batch_size)) {
    std::vector<std::size_t> idx;
    for (std::size_t i = begin; i < std::min(ds.size(), begin + std::size_t(batch_size)); ++i) {
      idx.push_back(i);
    }
    const LabelTensor labels = segment(bundle, make_batch(ds, idx, false).images);
    const Shape s = labels.shape();
    for (int n = 0; n < s.n; ++n) {
      LabelMask m(s.h, s.w);
      std::copy(labels.plane(n, 0), labels.plane(n, 0) + s.plane(), m.v.begin());
      out.push_back(std::move(m));
    }
  }
  return out;
}

}  // namespace stgan
