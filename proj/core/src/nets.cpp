#include "stgan/nets.hpp"

#include <cmath>
#include <cstring>
#include <random>

#include "stgan/ops.hpp"

namespace stgan {
namespace {

constexpr double kReluGain = 1.4142135623730951;

class LayoutBuilder {
 public:
  void conv(const std::string& name, int out_c, int in_c, int k, bool bias, double gain) {
    specs_.push_back({name + ".weight", Shape{out_c, in_c, k, k}, in_c * k * k, false, gain});
    if (bias) specs_.push_back({name + ".bias", Shape{1, out_c, 1, 1}, 1, true, 0.0});
  }
  void conv_transpose(const std::string& name, int in_c, int out_c, int k, bool bias) {
    specs_.push_back({name + ".weight", Shape{in_c, out_c, k, k}, in_c * k * k, false, kReluGain});
    if (bias) specs_.push_back({name + ".bias", Shape{1, out_c, 1, 1}, 1, true, 0.0});
  }
  std::vector<ParamSpec> take() { return std::move(specs_); }

 private:
  std::vector<ParamSpec> specs_;
};

// Walks bound parameters in layout order.
class Cursor {
 public:
  explicit Cursor(std::span<const Var> params) : params_(params) {}
  Var next() {
    if (pos_ >= params_.size()) throw ValidationError("parameter set too short for architecture");
    return params_[pos_++];
  }
  void finish() const {
    if (pos_ != params_.size()) throw ValidationError("parameter set too long for architecture");
  }

 private:
  std::span<const Var> params_;
  std::size_t pos_ = 0;
};

int disc_channels(const ArchConfig& a, int layer) {
  return a.base_channels * (1 << std::min(layer, 3));
}

template <typename T>
Var conv_in_relu(Graph<T>& g, Cursor& c, Var x, ops::ConvGeometry geom) {
  Var h = ops::conv2d(g, x, c.next(), Var{}, geom);
  return ops::relu(g, ops::instance_norm(g, h));
}

void check_input(const ArchConfig& arch, const Shape& s, const char* net) {
  if (s.c != 1 || s.h != arch.image_size || s.w != arch.image_size || s.n < 1) {
    throw ValidationError(std::string(net) + ": expected (B,1," + std::to_string(arch.image_size) +
                          "," + std::to_string(arch.image_size) + ") input, got " + s.str());
  }
}

}  // namespace

ArchConfig ArchConfig::for_size(int image_size) {
  ArchConfig a;
  a.image_size = image_size;
  a.n_residual_blocks = image_size > 64 ? 6 : 4;
  return a;
}

int ArchConfig::max_downsampling() const {
  return 1 << std::max({2, n_discriminator_layers, segmentor_depth});
}

void ArchConfig::validate() const {
  if (n_classes != kNumClasses) throw ValidationError("arch.n_classes must be 4");
  if (base_channels < 1) throw ValidationError("arch.base_channels must be >= 1");
  if (n_residual_blocks < 0) throw ValidationError("arch.n_residual_blocks must be >= 0");
  if (n_discriminator_layers < 1) throw ValidationError("arch.n_discriminator_layers must be >= 1");
  if (segmentor_depth < 1) throw ValidationError("arch.segmentor_depth must be >= 1");
  if (n_discriminator_layers > 12 || segmentor_depth > 12) {
    throw ValidationError("arch: network depth out of range");
  }
  if (image_size < 4 || image_size % max_downsampling() != 0) {
    throw ValidationError("arch.image_size " + std::to_string(image_size) +
                          " must be a positive multiple of " + std::to_string(max_downsampling()));
  }
}

std::vector<ParamSpec> layout(NetKind kind, const ArchConfig& a) {
  a.validate();
  const int c = a.base_channels;
  LayoutBuilder b;
  switch (kind) {
    case NetKind::kGenerator:
      b.conv("enc", c, 1, 7, false, kReluGain);
      b.conv("down1", 2 * c, c, 3, false, kReluGain);
      b.conv("down2", 4 * c, 2 * c, 3, false, kReluGain);
      for (int i = 0; i < a.n_residual_blocks; ++i) {
        const std::string r = "res" + std::to_string(i);
        b.conv(r + ".conv1", 4 * c, 4 * c, 3, false, kReluGain);
        b.conv(r + ".conv2", 4 * c, 4 * c, 3, false, 1.0);
      }
      b.conv_transpose("up1", 4 * c, 2 * c, 3, false);
      b.conv_transpose("up2", 2 * c, c, 3, false);
      b.conv("out", 1, c, 7, true, 1.0);
      break;
    case NetKind::kDiscriminator:
      b.conv("conv0", c, 1, 4, true, kReluGain);
      for (int i = 1; i < a.n_discriminator_layers; ++i) {
        b.conv("conv" + std::to_string(i), disc_channels(a, i), disc_channels(a, i - 1), 4, false,
               kReluGain);
      }
      b.conv("head", 1, disc_channels(a, a.n_discriminator_layers - 1), 3, true, 1.0);
      break;
    case NetKind::kSegmentor: {
      int in_c = 1;
      for (int l = 0; l < a.segmentor_depth; ++l) {
        const std::string e = "enc" + std::to_string(l);
        b.conv(e + ".conv1", c << l, in_c, 3, false, kReluGain);
        b.conv(e + ".conv2", c << l, c << l, 3, false, kReluGain);
        in_c = c << l;
      }
      const int bc = c << a.segmentor_depth;
      b.conv("bottleneck.conv1", bc, in_c, 3, false, kReluGain);
      b.conv("bottleneck.conv2", bc, bc, 3, false, kReluGain);
      for (int l = a.segmentor_depth - 1; l >= 0; --l) {
        const std::string d = "dec" + std::to_string(l);
        b.conv_transpose(d + ".up", c << (l + 1), c << l, 2, true);
        b.conv(d + ".conv1", c << l, c << (l + 1), 3, false, kReluGain);
        b.conv(d + ".conv2", c << l, c << l, 3, false, kReluGain);
      }
      b.conv("head", a.n_classes, c, 1, true, 1.0);
      break;
    }
  }
  return b.take();
}

template <typename T>
ParamSet<T> init_params(NetKind kind, const ArchConfig& arch, std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(kind) + 0x5eedu};
  std::mt19937_64 rng(seq);
  std::vector<NamedTensor<T>> out;
  for (const ParamSpec& spec : layout(kind, arch)) {
    Tensor<T> t(spec.shape);
    if (!spec.is_bias) {
      std::normal_distribution<double> normal(0.0, spec.gain / std::sqrt(double(spec.fan_in)));
      for (auto& v : t.span()) v = static_cast<T>(normal(rng));
    }
    out.push_back({spec.name, std::move(t)});
  }
  return ParamSet<T>(std::move(out));
}

template <typename T>
std::uint64_t ParamSet<T>::hash() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& e : entries_) {
    mix(e.name.data(), e.name.size());
    const Shape s = e.value.shape();
    mix(&s, sizeof(s));
    mix(e.value.data(), e.value.size() * sizeof(T));
  }
  return h;
}

ModelBundle init_bundle(const ArchConfig& arch, std::uint64_t seed) {
  arch.validate();
  ModelBundle b;
  b.arch = arch;
  b.rng_seed = seed;
  b.g1 = init_params<float>(NetKind::kGenerator, arch, seed * 8 + 1);
  b.g2 = init_params<float>(NetKind::kGenerator, arch, seed * 8 + 2);
  b.d1 = init_params<float>(NetKind::kDiscriminator, arch, seed * 8 + 3);
  b.d2 = init_params<float>(NetKind::kDiscriminator, arch, seed * 8 + 4);
  b.s = init_params<float>(NetKind::kSegmentor, arch, seed * 8 + 5);
  return b;
}

void validate_bundle(const ModelBundle& b, bool require_finite) {
  b.arch.validate();
  auto check = [&](const Params& p, NetKind kind, const char* name) {
    const auto specs = layout(kind, b.arch);
    if (specs.size() != p.size()) {
      throw ValidationError(std::string("bundle: ") + name + " has " + std::to_string(p.size()) +
                            " tensors, architecture expects " + std::to_string(specs.size()));
    }
    for (std::size_t i = 0; i < specs.size(); ++i) {
      if (!(specs[i].shape == p[i].value.shape()) || specs[i].name != p[i].name) {
        throw ValidationError(std::string("bundle: ") + name + "." + p[i].name +
                              " does not match architecture");
      }
    }
    if (require_finite && !p.all_finite()) throw ValidationError(std::string("bundle: ") + name + " is not finite");
  };
  check(b.g1, NetKind::kGenerator, "g1");
  check(b.g2, NetKind::kGenerator, "g2");
  check(b.d1, NetKind::kDiscriminator, "d1");
  check(b.d2, NetKind::kDiscriminator, "d2");
  check(b.s, NetKind::kSegmentor, "s");
}

template <typename T>
std::vector<Var> bind(Graph<T>& g, const ParamSet<T>& params, ParamSet<T>* grads) {
  if (grads && grads->size() != params.size()) *grads = params.zeros_like();
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    vars.push_back(grads ? g.leaf(params[i].value, &(*grads)[i].value)
                         : g.constant_ref(params[i].value));
  }
  return vars;
}

template <typename T>
Var generator(Graph<T>& g, const ArchConfig& a, std::span<const Var> params, Var x) {
  check_input(a, g.value(x).shape(), "generator");
  Cursor c(params);
  Var h = conv_in_relu(g, c, x, {7, 1, 3});
  h = conv_in_relu(g, c, h, {3, 2, 1});
  h = conv_in_relu(g, c, h, {3, 2, 1});
  for (int i = 0; i < a.n_residual_blocks; ++i) {
    Var r = conv_in_relu(g, c, h, {3, 1, 1});
    r = ops::instance_norm(g, ops::conv2d(g, r, c.next(), Var{}, {3, 1, 1}));
    h = ops::add(g, h, r);
  }
  for (int i = 0; i < 2; ++i) {
    h = ops::conv_transpose2d(g, h, c.next(), Var{}, {3, 2, 1, 1});
    h = ops::relu(g, ops::instance_norm(g, h));
  }
  Var w = c.next();
  Var b = c.next();
  h = ops::tanh(g, ops::conv2d(g, h, w, b, {7, 1, 3}));
  c.finish();
  return h;
}

template <typename T>
Var discriminator(Graph<T>& g, const ArchConfig& a, std::span<const Var> params, Var x) {
  check_input(a, g.value(x).shape(), "discriminator");
  Cursor c(params);
  Var w0 = c.next();
  Var b0 = c.next();
  Var h = ops::leaky_relu(g, ops::conv2d(g, x, w0, b0, {4, 2, 1}));
  for (int i = 1; i < a.n_discriminator_layers; ++i) {
    h = ops::conv2d(g, h, c.next(), Var{}, {4, 2, 1});
    h = ops::leaky_relu(g, ops::instance_norm(g, h));
  }
  Var wh = c.next();
  Var bh = c.next();
  h = ops::conv2d(g, h, wh, bh, {3, 1, 1});
  c.finish();
  return h;
}

template <typename T>
Var segmentor(Graph<T>& g, const ArchConfig& a, std::span<const Var> params, Var x) {
  check_input(a, g.value(x).shape(), "segmentor");
  Cursor c(params);
  std::vector<Var> skips;
  Var h = x;
  for (int l = 0; l < a.segmentor_depth; ++l) {
    h = conv_in_relu(g, c, h, {3, 1, 1});
    h = conv_in_relu(g, c, h, {3, 1, 1});
    skips.push_back(h);
    h = ops::max_pool2(g, h);
  }
  h = conv_in_relu(g, c, h, {3, 1, 1});
  h = conv_in_relu(g, c, h, {3, 1, 1});
  for (int l = a.segmentor_depth - 1; l >= 0; --l) {
    Var w = c.next();
    Var b = c.next();
    h = ops::conv_transpose2d(g, h, w, b, {2, 2, 0, 0});
    h = ops::concat_channels(g, skips[static_cast<std::size_t>(l)], h);
    h = conv_in_relu(g, c, h, {3, 1, 1});
    h = conv_in_relu(g, c, h, {3, 1, 1});
  }
  Var wh = c.next();
  Var bh = c.next();
  h = ops::conv2d(g, h, wh, bh, {1, 1, 0});
  c.finish();
  return h;
}

template <typename T>
Tensor<T> generator_forward(const ParamSet<T>& params, const ArchConfig& arch, const Tensor<T>& x) {
  Graph<T> g(false);
  const auto p = bind(g, params, static_cast<ParamSet<T>*>(nullptr));
  return g.value(generator(g, arch, p, g.constant_ref(x)));
}

template <typename T>
Tensor<T> discriminator_forward(const ParamSet<T>& params, const ArchConfig& arch,
                                const Tensor<T>& x) {
  Graph<T> g(false);
  const auto p = bind(g, params, static_cast<ParamSet<T>*>(nullptr));
  return g.value(discriminator(g, arch, p, g.constant_ref(x)));
}

template <typename T>
Tensor<T> segmentor_forward(const ParamSet<T>& params, const ArchConfig& arch, const Tensor<T>& x) {
  Graph<T> g(false);
  const auto p = bind(g, params, static_cast<ParamSet<T>*>(nullptr));
  return g.value(segmentor(g, arch, p, g.constant_ref(x)));
}

int discriminator_output_extent(const ArchConfig& a) {
  int s = a.image_size;
  for (int i = 0; i < a.n_discriminator_layers; ++i) s = ops::conv_out_extent(s, 4, 2, 1);
  return ops::conv_out_extent(s, 3, 1, 1);
}

#define STGAN_INSTANTIATE_NETS(T)                                                              \
  template class ParamSet<T>;                                                                  \
  template ParamSet<T> init_params<T>(NetKind, const ArchConfig&, std::uint64_t);              \
  template std::vector<Var> bind<T>(Graph<T>&, const ParamSet<T>&, ParamSet<T>*);              \
  template Var generator<T>(Graph<T>&, const ArchConfig&, std::span<const Var>, Var);          \
  template Var discriminator<T>(Graph<T>&, const ArchConfig&, std::span<const Var>, Var);      \
  template Var segmentor<T>(Graph<T>&, const ArchConfig&, std::span<const Var>, Var);          \
  template Tensor<T> generator_forward<T>(const ParamSet<T>&, const ArchConfig&, const Tensor<T>&); \
  template Tensor<T> discriminator_forward<T>(const ParamSet<T>&, const ArchConfig&,           \
                                              const Tensor<T>&);                               \
  template Tensor<T> segmentor_forward<T>(const ParamSet<T>&, const ArchConfig&, const Tensor<T>&);

STGAN_INSTANTIATE_NETS(float)
STGAN_INSTANTIATE_NETS(double)

}  // namespace stgan
