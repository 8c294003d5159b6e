#pragma once

#include <cstdint>

#include "stgan/nets.hpp"

namespace stgan {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment accumulators of one parameter set.
struct AdamState {
  Params m;
  Params v;
  std::int64_t t = 0;
  friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// One bias-corrected Adam update. Moments are created on first use.
void adam_step(Params& params, const Params& grads, AdamState& state, const AdamConfig& cfg);

}  // namespace stgan
