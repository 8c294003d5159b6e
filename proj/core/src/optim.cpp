#include "stgan/optim.hpp"

#include <cmath>

namespace stgan {

void adam_step(Params& params, const Params& grads, AdamState& st, const AdamConfig& cfg) {
  if (grads.size() != params.size()) throw ValidationError("adam: gradient set does not match parameters");
  if (st.m.size() != params.size()) {
    st.m = params.zeros_like();
    st.v = params.zeros_like();
    st.t = 0;
  }
  ++st.t;
  const double bc1 = 1.0 - std::pow(cfg.beta1, double(st.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, double(st.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor<float>& p = params[k].value;
    const Tensor<float>& g = grads[k].value;
    if (g.empty()) continue;  // parameter not reached by this loss
    p.require_same_shape(g, "adam");
    float* m = st.m[k].value.data();
    float* v = st.v[k].value.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i];
      const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      p[i] = static_cast<float>(p[i] - cfg.lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg.eps));
    }
  }
}

}  // namespace stgan
