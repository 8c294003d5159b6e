#include "stgan/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "stgan/nets.hpp"

namespace stgan {
namespace {

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw ValidationError(std::string(what) + ": non-finite value");
}

template <typename T>
void require_finite(const Tensor<T>& t, const char* what) {
  if (!t.all_finite()) throw ValidationError(std::string(what) + ": non-finite input");
}

double sigmoid(double s) {
  return s >= 0 ? 1.0 / (1.0 + std::exp(-s)) : std::exp(s) / (1.0 + std::exp(s));
}

double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

bool inside_clamp(double p) { return p > kProbClamp && p < 1.0 - kProbClamp; }

// Shared body of the two adversarial log terms. `fake` selects log(1 - s).
template <typename T>
Var mean_log_term(Graph<T>& g, Var scores, bool fake) {
  const Tensor<T>& s = g.value(scores);
  require_finite(s, "adversarial loss");
  double acc = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double p = sigmoid(static_cast<double>(s[i]));
    acc += std::log(clamp_prob(fake ? 1.0 - p : p));
  }
  const double n = static_cast<double>(s.size());
  return g.emit(Tensor<T>::scalar(static_cast<T>(acc / n)), {scores},
                [si = scores.id, fake, n](Graph<T>& gr, int self) {
                  const double d = gr.grad_buffer(self)[0];
                  const Tensor<T>& sv = gr.value(si);
                  Tensor<T>& ds = gr.grad_buffer(si);
                  for (std::size_t i = 0; i < sv.size(); ++i) {
                    const double p = sigmoid(static_cast<double>(sv[i]));
                    const double q = fake ? 1.0 - p : p;
                    if (!inside_clamp(q)) continue;
                    // d/ds log s(s) = 1 - p ; d/ds log(1 - s(s)) = -p
                    const double local = fake ? -p : 1.0 - p;
                    ds[i] += static_cast<T>(d * local / n);
                  }
                });
}

void check_mask(const LabelTensor& mask, const Shape& logits) {
  const Shape m = mask.shape();
  if (logits.c != kNumClasses || m.c != 1 || m.n != logits.n || m.h != logits.h ||
      m.w != logits.w) {
    throw ValidationError("shape loss: mask " + m.str() + " incompatible with logits " +
                          logits.str());
  }
  for (std::uint8_t v : mask.span()) {
    if (v >= kNumClasses) {
      throw ValidationError("shape loss: label " + std::to_string(int(v)) + " outside {0,1,2,3}");
    }
  }
}

}  // namespace

void LossWeights::validate() const {
  if (!std::isfinite(lambda_cyc) || lambda_cyc < 0) {
    throw ValidationError("weights.lambda_cyc must be finite and >= 0");
  }
  if (!std::isfinite(lambda_shape) || lambda_shape < 0) {
    throw ValidationError("weights.lambda_shape must be finite and >= 0");
  }
}

bool LossReport::consistent(const LossWeights& w, double tol) const {
  return std::abs(l_gan - 0.5 * (l_gan1 + l_gan2)) <= tol &&
         std::abs(l_cyc - 0.5 * (l_cyc1 + l_cyc2)) <= tol &&
         std::abs(l_total - (l_gan + w.lambda_cyc * l_cyc + w.lambda_shape * l_shape)) <= tol;
}

namespace loss_ops {

template <typename T>
Var mean_log_sigmoid(Graph<T>& g, Var scores) {
  return mean_log_term(g, scores, false);
}

template <typename T>
Var mean_log_one_minus_sigmoid(Graph<T>& g, Var scores) {
  return mean_log_term(g, scores, true);
}

template <typename T>
Var mean_abs_diff(Graph<T>& g, Var a, Var b) {
  const Tensor<T>& av = g.value(a);
  const Tensor<T>& bv = g.value(b);
  av.require_same_shape(bv, "cycle loss");
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    acc += std::abs(static_cast<double>(av[i]) - static_cast<double>(bv[i]));
  }
  const double n = static_cast<double>(av.size());
  return g.emit(Tensor<T>::scalar(static_cast<T>(acc / n)), {a, b},
                [ai = a.id, bi = b.id, n](Graph<T>& gr, int self) {
                  const double d = gr.grad_buffer(self)[0] / n;
                  const Tensor<T>& x = gr.value(ai);
                  const Tensor<T>& y = gr.value(bi);
                  const bool na = gr.requires_grad(ai);
                  const bool nb = gr.requires_grad(bi);
                  for (std::size_t i = 0; i < x.size(); ++i) {
                    const double sgn = x[i] > y[i] ? 1.0 : (x[i] < y[i] ? -1.0 : 0.0);
                    if (na) gr.grad_buffer(ai)[i] += static_cast<T>(d * sgn);
                    if (nb) gr.grad_buffer(bi)[i] -= static_cast<T>(d * sgn);
                  }
                });
}

template <typename T>
Var cross_entropy(Graph<T>& g, Var logits, const LabelTensor& mask) {
  const Tensor<T>& z = g.value(logits);
  const Shape s = z.shape();
  check_mask(mask, s);
  require_finite(z, "shape loss");
  const std::size_t hw = s.plane();
  double acc = 0.0;
  for (int n = 0; n < s.n; ++n) {
    for (std::size_t i = 0; i < hw; ++i) {
      double zmax = -INFINITY;
      for (int c = 0; c < s.c; ++c) zmax = std::max(zmax, double(z.plane(n, c)[i]));
      double sum = 0.0;
      for (int c = 0; c < s.c; ++c) sum += std::exp(double(z.plane(n, c)[i]) - zmax);
      const int label = mask.plane(n, 0)[i];
      acc += zmax + std::log(sum) - double(z.plane(n, label)[i]);
    }
  }
  const double count = static_cast<double>(s.n) * static_cast<double>(hw);
  // The mask is captured by value; the graph may outlive the caller's copy.
  return g.emit(Tensor<T>::scalar(static_cast<T>(acc / count)), {logits},
                [zi = logits.id, mask, count](Graph<T>& gr, int self) {
                  const double d = gr.grad_buffer(self)[0] / count;
                  const Tensor<T>& zv = gr.value(zi);
                  Tensor<T>& dz = gr.grad_buffer(zi);
                  const Shape sh = zv.shape();
                  const std::size_t plane = sh.plane();
                  for (int n = 0; n < sh.n; ++n) {
                    for (std::size_t i = 0; i < plane; ++i) {
                      double zmax = -INFINITY;
                      for (int c = 0; c < sh.c; ++c) zmax = std::max(zmax, double(zv.plane(n, c)[i]));
                      double sum = 0.0;
                      for (int c = 0; c < sh.c; ++c) sum += std::exp(double(zv.plane(n, c)[i]) - zmax);
                      const int label = mask.plane(n, 0)[i];
                      for (int c = 0; c < sh.c; ++c) {
                        const double p = std::exp(double(zv.plane(n, c)[i]) - zmax) / sum;
                        dz.plane(n, c)[i] += static_cast<T>(d * (p - (c == label ? 1.0 : 0.0)));
                      }
                    }
                  }
                });
}

}  // namespace loss_ops

template <typename T>
double adversarial_value_d(const Tensor<T>& real_scores, const Tensor<T>& fake_scores) {
  Graph<T> g(false);
  const double real = g.value(loss_ops::mean_log_sigmoid(g, g.constant_ref(real_scores))).item();
  const double fake =
      g.value(loss_ops::mean_log_one_minus_sigmoid(g, g.constant_ref(fake_scores))).item();
  return real + fake;
}

template <typename T>
double adversarial_loss_d(const Tensor<T>& real_scores, const Tensor<T>& fake_scores) {
  return -adversarial_value_d(real_scores, fake_scores);
}

template <typename T>
double adversarial_loss_g(const Tensor<T>& fake_scores) {
  Graph<T> g(false);
  return -static_cast<double>(
      g.value(loss_ops::mean_log_sigmoid(g, g.constant_ref(fake_scores))).item());
}

template <typename T>
CycleTerms cycle_loss(const Tensor<T>& x, const Tensor<T>& x_rec, const Tensor<T>& y,
                      const Tensor<T>& y_rec) {
  Graph<T> g(false);
  CycleTerms t;
  t.l_cyc1 = g.value(loss_ops::mean_abs_diff(g, g.constant_ref(x_rec), g.constant_ref(x))).item();
  t.l_cyc2 = g.value(loss_ops::mean_abs_diff(g, g.constant_ref(y_rec), g.constant_ref(y))).item();
  t.l_cyc = 0.5 * (t.l_cyc1 + t.l_cyc2);
  return t;
}

template <typename T>
double shape_loss(const LabelTensor& mask, const Tensor<T>& logits) {
  Graph<T> g(false);
  return g.value(loss_ops::cross_entropy(g, g.constant_ref(logits), mask)).item();
}

Objective total_objective(const AdversarialTerms& adv, const CycleTerms& cyc, double l_shape,
                          const LossWeights& w) {
  w.validate();
  for (double v : {adv.l_gan1, adv.l_gan2, adv.g_adv1, adv.g_adv2, cyc.l_cyc1, cyc.l_cyc2, l_shape}) {
    require_finite(v, "total objective");
  }
  Objective o;
  LossReport& r = o.report;
  r.l_gan1 = adv.l_gan1;
  r.l_gan2 = adv.l_gan2;
  r.l_gan = 0.5 * (adv.l_gan1 + adv.l_gan2);
  r.l_cyc1 = cyc.l_cyc1;
  r.l_cyc2 = cyc.l_cyc2;
  r.l_cyc = 0.5 * (cyc.l_cyc1 + cyc.l_cyc2);
  r.l_shape = l_shape;
  r.l_total = r.l_gan + w.lambda_cyc * r.l_cyc + w.lambda_shape * r.l_shape;
  o.targets.discriminator = -(adv.l_gan1 + adv.l_gan2);
  o.targets.generator = 0.5 * (adv.g_adv1 + adv.g_adv2) + w.lambda_cyc * r.l_cyc +
                        w.lambda_shape * r.l_shape;
  o.targets.segmentor = l_shape;
  return o;
}

#define STGAN_INSTANTIATE_LOSSES(T)                                                         \
  template Var loss_ops::mean_log_sigmoid<T>(Graph<T>&, Var);                               \
  template Var loss_ops::mean_log_one_minus_sigmoid<T>(Graph<T>&, Var);                     \
  template Var loss_ops::mean_abs_diff<T>(Graph<T>&, Var, Var);                             \
  template Var loss_ops::cross_entropy<T>(Graph<T>&, Var, const LabelTensor&);              \
  template double adversarial_value_d<T>(const Tensor<T>&, const Tensor<T>&);               \
  template double adversarial_loss_d<T>(const Tensor<T>&, const Tensor<T>&);                \
  template double adversarial_loss_g<T>(const Tensor<T>&);                                  \
  template CycleTerms cycle_loss<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,   \
                                    const Tensor<T>&);                                      \
  template double shape_loss<T>(const LabelTensor&, const Tensor<T>&);

STGAN_INSTANTIATE_LOSSES(float)
STGAN_INSTANTIATE_LOSSES(double)

}  // namespace stgan
