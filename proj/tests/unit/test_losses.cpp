#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "grad_check.hpp"
#include "stgan/losses.hpp"
#include "stgan/nets.hpp"
#include "stgan/ops.hpp"
#include "test_util.hpp"

using namespace stgan;
using testutil::random_tensor;

namespace {

double log_sigmoid_ref(double s) {
  const double p = 1.0 / (1.0 + std::exp(-s));
  return std::log(std::clamp(p, kProbClamp, 1 - kProbClamp));
}

double log_one_minus_sigmoid_ref(double s) {
  const double p = 1.0 / (1.0 + std::exp(-s));
  return std::log(std::clamp(1 - p, kProbClamp, 1 - kProbClamp));
}

LabelTensor random_mask(Shape s, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> u(0, 3);
  LabelTensor m(s);
  for (auto& v : m.storage()) v = static_cast<std::uint8_t>(u(rng));
  return m;
}

}  // namespace

TEST_SUITE("adversarial") {
  TEST_CASE("zero scores give ln 0.5 per term") {
    const Tensord zeros(Shape{2, 1, 8, 8}, 0.0);
    CHECK(adversarial_value_d(zeros, zeros) == doctest::Approx(2 * std::log(0.5)).epsilon(1e-12));
    CHECK(std::abs(adversarial_value_d(zeros, zeros) - (-1.3863)) < 1e-4);
    CHECK(adversarial_loss_d(zeros, zeros) == doctest::Approx(-2 * std::log(0.5)));
    CHECK(std::abs(adversarial_loss_g(zeros) - 0.6931) < 1e-4);
    CHECK(std::abs(adversarial_loss_g(zeros) + std::log(0.5)) < 1e-6);
  }

  TEST_CASE("perfect discriminator approaches the supremum") {
    const Tensord real(Shape{1, 1, 4, 4}, 40.0);
    const Tensord fake(Shape{1, 1, 4, 4}, -40.0);
    const double v = adversarial_value_d(real, fake);
    CHECK(v > -0.01);
    CHECK(v <= 0.0);
    CHECK(adversarial_loss_g(real) < 0.01);
  }

  TEST_CASE("random maps match elementwise recomputation") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 10; ++trial) {
      const auto real = random_tensor<double>({2, 1, 8, 8}, rng, -4, 4);
      const auto fake = random_tensor<double>({2, 1, 8, 8}, rng, -4, 4);
      double a = 0, b = 0, c = 0;
      for (std::size_t i = 0; i < real.size(); ++i) {
        a += log_sigmoid_ref(real[i]);
        b += log_one_minus_sigmoid_ref(fake[i]);
        c += -log_sigmoid_ref(fake[i]);
      }
      const double n = double(real.size());
      CHECK(std::abs(adversarial_value_d(real, fake) - (a / n + b / n)) < 1e-9);
      CHECK(std::abs(adversarial_loss_d(real, fake) + (a / n + b / n)) < 1e-9);
      CHECK(std::abs(adversarial_loss_g(fake) - c / n) < 1e-9);
    }
  }

  TEST_CASE("non-finite scores are rejected") {
    Tensord s(Shape{1, 1, 2, 2}, 0.0);
    s[3] = std::nan("");
    CHECK_THROWS_AS(adversarial_value_d(s, s), ValidationError);
    CHECK_THROWS_AS(adversarial_loss_g(s), ValidationError);
  }
}

TEST_SUITE("cycle") {
  TEST_CASE("identity reconstruction costs nothing") {
    std::mt19937_64 rng(3);
    const auto x = random_tensor<double>({2, 1, 8, 8}, rng);
    const auto y = random_tensor<double>({2, 1, 8, 8}, rng);
    const CycleTerms t = cycle_loss(x, x, y, y);
    CHECK(t.l_cyc1 == 0.0);
    CHECK(t.l_cyc2 == 0.0);
    CHECK(t.l_cyc == 0.0);
  }

  TEST_CASE("constant shift of 0.5 on x") {
    std::mt19937_64 rng(4);
    const auto x = random_tensor<double>({2, 1, 8, 8}, rng, -0.4, 0.4);
    const auto y = random_tensor<double>({2, 1, 8, 8}, rng);
    Tensord xr = x;
    for (auto& v : xr.storage()) v += 0.5;
    const CycleTerms t = cycle_loss(x, xr, y, y);
    CHECK(std::abs(t.l_cyc1 - 0.5) < 1e-6);
    CHECK(std::abs(t.l_cyc2 - 0.0) < 1e-6);
    CHECK(std::abs(t.l_cyc - 0.25) < 1e-6);
  }

  TEST_CASE("grows linearly in the size of a constant perturbation") {
    std::mt19937_64 rng(5);
    const auto x = random_tensor<double>({1, 1, 8, 8}, rng);
    for (double c : {0.1, 0.2, 0.4, 0.8, -0.3}) {
      Tensord xr = x;
      for (auto& v : xr.storage()) v += c;
      CHECK(cycle_loss(x, xr, x, x).l_cyc1 == doctest::Approx(std::abs(c)).epsilon(1e-12));
    }
  }

  TEST_CASE("random pairs match a loop") {
    std::mt19937_64 rng(6);
    const auto x = random_tensor<double>({2, 1, 8, 8}, rng);
    const auto xr = random_tensor<double>({2, 1, 8, 8}, rng);
    const auto y = random_tensor<double>({2, 1, 8, 8}, rng);
    const auto yr = random_tensor<double>({2, 1, 8, 8}, rng);
    double a = 0, b = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      a += std::abs(xr[i] - x[i]);
      b += std::abs(yr[i] - y[i]);
    }
    a /= double(x.size());
    b /= double(y.size());
    const CycleTerms t = cycle_loss(x, xr, y, yr);
    CHECK(std::abs(t.l_cyc1 - a) < 1e-9);
    CHECK(std::abs(t.l_cyc2 - b) < 1e-9);
    CHECK(std::abs(t.l_cyc - (a + b) / 2) < 1e-9);
  }

  TEST_CASE("shape mismatch is an error") {
    const Tensord a(Shape{1, 1, 8, 8}), b(Shape{1, 1, 4, 4});
    CHECK_THROWS_AS(cycle_loss(a, b, a, a), ValidationError);
  }
}

TEST_SUITE("shape") {
  TEST_CASE("uniform logits give ln 4 for any mask") {
    std::mt19937_64 rng(7);
    const Tensord logits(Shape{2, 4, 8, 8}, 0.0);
    for (int trial = 0; trial < 3; ++trial) {
      const LabelTensor m = random_mask({2, 1, 8, 8}, rng);
      CHECK(std::abs(shape_loss(m, logits) - std::log(4.0)) < 1e-6);
      CHECK(std::abs(shape_loss(m, logits) - 1.3863) < 1e-4);
    }
  }

  TEST_CASE("confident correct logits give near-zero loss") {
    std::mt19937_64 rng(8);
    const LabelTensor m = random_mask({1, 1, 8, 8}, rng);
    Tensord logits(Shape{1, 4, 8, 8}, 0.0);
    for (int y = 0; y < 8; ++y) {
      for (int x = 0; x < 8; ++x) logits.at(0, m.at(0, 0, y, x), y, x) = 20.0;
    }
    CHECK(shape_loss(m, logits) < 1e-6);
  }

  TEST_CASE("random logits match per-pixel recomputation") {
    std::mt19937_64 rng(9);
    const auto logits = random_tensor<double>({1, 4, 4, 4}, rng, -3, 3);
    const LabelTensor m = random_mask({1, 1, 4, 4}, rng);
    double acc = 0;
    for (int y = 0; y < 4; ++y) {
      for (int x = 0; x < 4; ++x) {
        double z = 0;
        for (int c = 0; c < 4; ++c) z += std::exp(logits.at(0, c, y, x));
        acc += -(logits.at(0, m.at(0, 0, y, x), y, x) - std::log(z));
      }
    }
    CHECK(std::abs(shape_loss(m, logits) - acc / 16) < 1e-9);
  }

  TEST_CASE("identical pixel permutation of mask and logits leaves the loss unchanged") {
    std::mt19937_64 rng(10);
    const auto logits = random_tensor<double>({1, 4, 6, 6}, rng, -3, 3);
    const LabelTensor m = random_mask({1, 1, 6, 6}, rng);
    std::vector<int> perm(36);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Tensord pl(logits.shape());
    LabelTensor pm(m.shape());
    for (int i = 0; i < 36; ++i) {
      const int src = perm[i];
      pm.at(0, 0, i / 6, i % 6) = m.at(0, 0, src / 6, src % 6);
      for (int c = 0; c < 4; ++c) pl.at(0, c, i / 6, i % 6) = logits.at(0, c, src / 6, src % 6);
    }
    CHECK(shape_loss(pm, pl) == doctest::Approx(shape_loss(m, logits)).epsilon(1e-12));
  }

  TEST_CASE("bad masks are rejected") {
    const Tensord logits(Shape{1, 4, 4, 4}, 0.0);
    LabelTensor m(Shape{1, 1, 4, 4}, 0);
    m[5] = 4;
    CHECK_THROWS_AS(shape_loss(m, logits), ValidationError);
    CHECK_THROWS_AS(shape_loss(LabelTensor(Shape{1, 1, 2, 2}), logits), ValidationError);
  }
}

TEST_SUITE("objective") {
  TEST_CASE("weighted sum arithmetic") {
    const LossWeights w{10.0, 1.0};
    AdversarialTerms adv;
    adv.l_gan1 = adv.l_gan2 = -1.3863;
    Objective o = total_objective(adv, CycleTerms{}, 0.0, w);
    CHECK(std::abs(o.report.l_total - (-1.3863)) < 1e-6);
    CHECK(o.report.consistent(w));

    adv.l_gan1 = adv.l_gan2 = 0.0;
    o = total_objective(adv, CycleTerms{0.25, 0.25, 0.25}, 1.3863, w);
    CHECK(std::abs(o.report.l_total - 3.8863) < 1e-6);
    CHECK(o.targets.segmentor == doctest::Approx(1.3863));
  }

  TEST_CASE("zero weights leave the adversarial term alone") {
    AdversarialTerms adv{-0.7, -0.9, 0.4, 0.6};
    const Objective o = total_objective(adv, CycleTerms{0.3, 0.5, 0.4}, 2.0, LossWeights{0, 0});
    CHECK(o.report.l_total == o.report.l_gan);
    CHECK(o.report.l_gan == doctest::Approx(-0.8));
    CHECK(o.targets.discriminator == doctest::Approx(1.6));
    CHECK(o.targets.generator == doctest::Approx(0.5));
  }

  TEST_CASE("negative or non-finite weights are invalid") {
    CHECK_THROWS_AS((LossWeights{-1, 1}.validate()), ValidationError);
    CHECK_THROWS_AS((LossWeights{1, std::nan("")}.validate()), ValidationError);
    CHECK_NOTHROW((LossWeights{0, 0}.validate()));
  }
}

// Analytic gradients from the tape against central differences of the pure
// forwards, through the 8x8 toy networks.
TEST_SUITE("gradients") {
  using testutil::flatten;
  using testutil::unflatten;

  struct Toy {
    ArchConfig arch = testutil::toy_arch();
    ParamSet<double> g1 = init_params<double>(NetKind::kGenerator, arch, 1);
    ParamSet<double> g2 = init_params<double>(NetKind::kGenerator, arch, 2);
    ParamSet<double> d1 = init_params<double>(NetKind::kDiscriminator, arch, 3);
    ParamSet<double> s = init_params<double>(NetKind::kSegmentor, arch, 5);
    std::mt19937_64 rng{99};
    Tensord x = random_tensor<double>({2, 1, 8, 8}, rng);
    Tensord y = random_tensor<double>({2, 1, 8, 8}, rng);
    LabelTensor m = random_mask({2, 1, 8, 8}, rng);
  };

  constexpr int kProbes = 20;
  constexpr double kTol = 1e-4;

  TEST_CASE("discriminator objective w.r.t. D parameters") {
    Toy t;
    const Tensord fake = generator_forward(t.g1, t.arch, t.x);
    ParamSet<double> grads = t.d1.zeros_like();
    {
      Graph<double> g;
      const auto p = bind(g, t.d1, &grads);
      const Var real = discriminator<double>(g, t.arch, p, g.constant_ref(t.y));
      const Var fk = discriminator<double>(g, t.arch, p, g.constant_ref(fake));
      const Var v = ops::add(g, loss_ops::mean_log_sigmoid(g, real),
                             loss_ops::mean_log_one_minus_sigmoid(g, fk));
      CHECK(g.value(v).item() == doctest::Approx(adversarial_value_d(
                                     discriminator_forward(t.d1, t.arch, t.y),
                                     discriminator_forward(t.d1, t.arch, fake))));
      g.backward(v);
    }
    auto f = [&](const std::vector<double>& flat) {
      ParamSet<double> p = t.d1;
      unflatten(flat, p);
      return adversarial_value_d(discriminator_forward(p, t.arch, t.y),
                                 discriminator_forward(p, t.arch, fake));
    };
    const auto stats = testutil::probe_gradient(f, flatten(t.d1), flatten(grads), kProbes, t.rng);
    CHECK(stats.probes >= kProbes);
    CHECK(stats.worst < kTol);
  }

  TEST_CASE("generator adversarial term w.r.t. G parameters and input") {
    Toy t;
    ParamSet<double> grads = t.g1.zeros_like();
    Tensord dx;
    {
      Graph<double> g;
      const auto pg = bind(g, t.g1, &grads);
      const auto pd = bind<double>(g, t.d1, nullptr);
      const Var x = g.variable(t.x);
      const Var score = discriminator<double>(g, t.arch, pd, generator<double>(g, t.arch, pg, x));
      const Var loss = ops::linear_combination<double>(g, {{loss_ops::mean_log_sigmoid(g, score), -1.0}});
      g.backward(loss);
      dx = g.grad(x);
    }
    auto f = [&](const std::vector<double>& flat) {
      ParamSet<double> p = t.g1;
      unflatten(flat, p);
      return adversarial_loss_g(discriminator_forward(t.d1, t.arch, generator_forward(p, t.arch, t.x)));
    };
    auto stats = testutil::probe_gradient(f, flatten(t.g1), flatten(grads), kProbes, t.rng);
    CHECK(stats.worst < kTol);

    auto fx = [&](const std::vector<double>& flat) {
      Tensord x(t.x.shape(), flat);
      return adversarial_loss_g(discriminator_forward(t.d1, t.arch, generator_forward(t.g1, t.arch, x)));
    };
    stats = testutil::probe_gradient(fx, t.x.to_vector(), dx.to_vector(), kProbes, t.rng);
    CHECK(stats.worst < kTol);
  }

  TEST_CASE("cycle term w.r.t. both generators") {
    Toy t;
    ParamSet<double> grad1 = t.g1.zeros_like(), grad2 = t.g2.zeros_like();
    {
      Graph<double> g;
      const auto p1 = bind(g, t.g1, &grad1);
      const auto p2 = bind(g, t.g2, &grad2);
      const Var x = g.constant_ref(t.x);
      const Var rec = generator<double>(g, t.arch, p2, generator<double>(g, t.arch, p1, x));
      g.backward(loss_ops::mean_abs_diff(g, rec, x));
    }
    auto f1 = [&](const std::vector<double>& flat) {
      ParamSet<double> p = t.g1;
      unflatten(flat, p);
      const Tensord rec = generator_forward(t.g2, t.arch, generator_forward(p, t.arch, t.x));
      return cycle_loss(t.x, rec, t.y, t.y).l_cyc1;
    };
    auto f2 = [&](const std::vector<double>& flat) {
      ParamSet<double> p = t.g2;
      unflatten(flat, p);
      const Tensord rec = generator_forward(p, t.arch, generator_forward(t.g1, t.arch, t.x));
      return cycle_loss(t.x, rec, t.y, t.y).l_cyc1;
    };
    CHECK(testutil::probe_gradient(f1, flatten(t.g1), flatten(grad1), kProbes, t.rng).worst < kTol);
    CHECK(testutil::probe_gradient(f2, flatten(t.g2), flatten(grad2), kProbes, t.rng).worst < kTol);
  }

  TEST_CASE("shape term w.r.t. segmentor and generator") {
    Toy t;
    ParamSet<double> grad_s = t.s.zeros_like(), grad_g = t.g1.zeros_like();
    {
      Graph<double> g;
      const auto pg = bind(g, t.g1, &grad_g);
      const auto ps = bind(g, t.s, &grad_s);
      const Var fx = generator<double>(g, t.arch, pg, g.constant_ref(t.x));
      const Var loss = loss_ops::cross_entropy(g, segmentor<double>(g, t.arch, ps, fx), t.m);
      g.backward(loss);
    }
    auto fs = [&](const std::vector<double>& flat) {
      ParamSet<double> p = t.s;
      unflatten(flat, p);
      return shape_loss(t.m, segmentor_forward(p, t.arch, generator_forward(t.g1, t.arch, t.x)));
    };
    auto fg = [&](const std::vector<double>& flat) {
      ParamSet<double> p = t.g1;
      unflatten(flat, p);
      return shape_loss(t.m, segmentor_forward(t.s, t.arch, generator_forward(p, t.arch, t.x)));
    };
    CHECK(testutil::probe_gradient(fs, flatten(t.s), flatten(grad_s), kProbes, t.rng).worst < kTol);
    CHECK(testutil::probe_gradient(fg, flatten(t.g1), flatten(grad_g), kProbes, t.rng).worst < kTol);
  }
}
