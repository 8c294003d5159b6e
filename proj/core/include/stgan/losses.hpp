#pragma once

#include <cstdint>

#include "stgan/autograd.hpp"
#include "stgan/tensor.hpp"

namespace stgan {

/// Per-pixel class labels, shape (B, 1, H, W), values in {0,1,2,3}.
using LabelTensor = Tensor<std::uint8_t>;

/// Probabilities inside the adversarial logs are clamped to
/// [kProbClamp, 1 - kProbClamp]; the clamped region has zero gradient.
inline constexpr double kProbClamp = 1e-7;

struct LossWeights {
  double lambda_cyc = 10.0;
  double lambda_shape = 1.0;
  void validate() const;
  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

struct LossReport {
  double l_gan1 = 0, l_gan2 = 0, l_gan = 0;
  double l_cyc1 = 0, l_cyc2 = 0, l_cyc = 0;
  double l_shape = 0;
  double l_total = 0;
  /// True when the aggregate fields agree with their components within `tol`.
  bool consistent(const LossWeights& w, double tol = 1e-6) const;
};

/// What each player minimizes on one step.
struct RoleTargets {
  double discriminator = 0;  // -(l_gan1 + l_gan2)
  double generator = 0;      // mean non-saturating term + lambda_cyc*l_cyc + lambda_shape*l_shape
  double segmentor = 0;      // l_shape
};

struct CycleTerms {
  double l_cyc1 = 0, l_cyc2 = 0, l_cyc = 0;
};

struct AdversarialTerms {
  double l_gan1 = 0;  // signed log-likelihood of D1 (maximized by D1)
  double l_gan2 = 0;  // signed log-likelihood of D2
  double g_adv1 = 0;  // non-saturating generator term through D1
  double g_adv2 = 0;  // non-saturating generator term through D2
};

struct Objective {
  LossReport report;
  RoleTargets targets;
};

// Tape operations; each returns a scalar node.
namespace loss_ops {
template <typename T>
Var mean_log_sigmoid(Graph<T>& g, Var scores);           // E[log s(d)]
template <typename T>
Var mean_log_one_minus_sigmoid(Graph<T>& g, Var scores);  // E[log(1 - s(d))]
template <typename T>
Var mean_abs_diff(Graph<T>& g, Var a, Var b);
template <typename T>
Var cross_entropy(Graph<T>& g, Var logits, const LabelTensor& mask);
}  // namespace loss_ops

/// Signed value E[log s(real)] + E[log(1 - s(fake))].
template <typename T>
double adversarial_value_d(const Tensor<T>& real_scores, const Tensor<T>& fake_scores);

/// Minimization form handed to the discriminator optimizer (negated value).
template <typename T>
double adversarial_loss_d(const Tensor<T>& real_scores, const Tensor<T>& fake_scores);

/// Non-saturating generator loss -E[log s(fake)].
template <typename T>
double adversarial_loss_g(const Tensor<T>& fake_scores);

template <typename T>
CycleTerms cycle_loss(const Tensor<T>& x, const Tensor<T>& x_rec, const Tensor<T>& y,
                      const Tensor<T>& y_rec);

/// Mean per-pixel cross-entropy of `logits` (B,4,H,W) against `mask`.
template <typename T>
double shape_loss(const LabelTensor& mask, const Tensor<T>& logits);

Objective total_objective(const AdversarialTerms& adv, const CycleTerms& cyc, double l_shape,
                          const LossWeights& w);

}  // namespace stgan
