#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stgan/autograd.hpp"
#include "stgan/tensor.hpp"

namespace stgan {

inline constexpr int kNumClasses = 4;

/// Architecture shared by all five networks.
struct ArchConfig {
  int image_size = 64;
  int base_channels = 32;
  int n_residual_blocks = 4;
  int n_discriminator_layers = 3;
  int n_classes = kNumClasses;
  int segmentor_depth = 3;

  /// Default residual depth: 4 blocks at 64 px and below, 6 above.
  static ArchConfig for_size(int image_size);
  void validate() const;
  /// Largest power-of-two factor any network divides the input by.
  int max_downsampling() const;
  friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

struct ParamSpec {
  std::string name;
  Shape shape;
  int fan_in = 1;
  bool is_bias = false;
  double gain = 1.0;
};

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> value;
  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

/// Ordered parameter collection of one network.
template <typename T>
class ParamSet {
 public:
  ParamSet() = default;
  explicit ParamSet(std::vector<NamedTensor<T>> entries) : entries_(std::move(entries)) {}

  std::size_t size() const { return entries_.size(); }
  NamedTensor<T>& operator[](std::size_t i) { return entries_[i]; }
  const NamedTensor<T>& operator[](std::size_t i) const { return entries_[i]; }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  std::size_t num_scalars() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }

  ParamSet zeros_like() const {
    ParamSet out;
    for (const auto& e : entries_) out.entries_.push_back({e.name, Tensor<T>(e.value.shape())});
    return out;
  }

  template <typename U>
  ParamSet<U> cast() const {
    std::vector<NamedTensor<U>> out;
    for (const auto& e : entries_) out.push_back({e.name, e.value.template cast<U>()});
    return ParamSet<U>(std::move(out));
  }

  bool all_finite() const {
    for (const auto& e : entries_) {
      if (!e.value.all_finite()) return false;
    }
    return true;
  }

  /// FNV-1a over names, shapes and raw bytes.
  std::uint64_t hash() const;

  friend bool operator==(const ParamSet&, const ParamSet&) = default;

 private:
  std::vector<NamedTensor<T>> entries_;
};

using Params = ParamSet<float>;

enum class NetKind { kGenerator, kDiscriminator, kSegmentor };

std::vector<ParamSpec> layout(NetKind kind, const ArchConfig& arch);

/// Deterministic fan-in-scaled normal initialization; biases start at zero.
template <typename T>
ParamSet<T> init_params(NetKind kind, const ArchConfig& arch, std::uint64_t seed);

/// The five parameter sets trained together.
struct ModelBundle {
  Params g1;  // source -> target
  Params g2;  // target -> source
  Params d1;  // judges target-domain images
  Params d2;  // judges source-domain images
  Params s;   // segmentor
  ArchConfig arch;
  std::int64_t step = 0;
  std::uint64_t rng_seed = 0;

  friend bool operator==(const ModelBundle&, const ModelBundle&) = default;
};

ModelBundle init_bundle(const ArchConfig& arch, std::uint64_t seed);

/// Throws unless every tensor matches the layout of `arch` (and, by
/// default, is finite).
void validate_bundle(const ModelBundle& bundle, bool require_finite = true);

/// Places a parameter set on the tape. With a null `grads` the parameters
/// are constants; otherwise `grads` receives their gradients on backward().
template <typename T>
std::vector<Var> bind(Graph<T>& g, const ParamSet<T>& params, ParamSet<T>* grads);

// Graph builders. `params` must come from bind() on the matching layout.
template <typename T>
Var generator(Graph<T>& g, const ArchConfig& arch, std::span<const Var> params, Var x);
template <typename T>
Var discriminator(Graph<T>& g, const ArchConfig& arch, std::span<const Var> params, Var x);
template <typename T>
Var segmentor(Graph<T>& g, const ArchConfig& arch, std::span<const Var> params, Var x);

// Pure evaluation without a tape.
template <typename T>
Tensor<T> generator_forward(const ParamSet<T>& params, const ArchConfig& arch, const Tensor<T>& x);
template <typename T>
Tensor<T> discriminator_forward(const ParamSet<T>& params, const ArchConfig& arch,
                                const Tensor<T>& x);
template <typename T>
Tensor<T> segmentor_forward(const ParamSet<T>& params, const ArchConfig& arch, const Tensor<T>& x);

/// Spatial extent of the discriminator score map for a square input.
int discriminator_output_extent(const ArchConfig& arch);

}  // namespace stgan
