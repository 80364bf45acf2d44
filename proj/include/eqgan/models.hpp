/* Copyright 2026 The eqgan Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
        limitations under the License.
==============================================================================*/

#ifndef EQGAN_MODELS_HPP
#define EQGAN_MODELS_HPP

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "eqgan/autograd.hpp"
#include "eqgan/errors.hpp"
#include "eqgan/rng.hpp"

namespace eqgan {

enum class Role { generator, encoder, discriminator };
enum class Resolution { r28, r32, r64, toy };
enum class LayerKind { conv, deconv, dense };
enum class Norm { none, batch, spectral };
enum class Activation { none, relu, leaky_relu, tanh };
// Discriminator layers run on the image (x), the latent (z), or their concatenation (joint).
// Generator and encoder layers all sit on the x branch.
enum class Branch { x, z, joint };

std::string to_string(Role r);
std::string to_string(Resolution r);
Resolution resolution_from_string(const std::string& s);

struct LayerRecord {
  LayerKind kind = LayerKind::dense;
  int stride = 1;
  int padding = 0;
  int kernel = 1;
  int channels = 0;  // output channels / units
  Norm norm = Norm::none;
  Activation activation = Activation::none;
  Branch branch = Branch::x;

  friend bool operator==(const LayerRecord&, const LayerRecord&) = default;
};

struct NetworkSpec {
  Role role = Role::generator;
  Resolution resolution = Resolution::toy;
  int latent_dim = 256;
  Shape image_shape;  // (C, H, W)
  std::vector<LayerRecord> layers;
  double leaky_slope = 0.1;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

struct SpecSet {
  NetworkSpec generator;
  NetworkSpec encoder;
  NetworkSpec discriminator;
};

void to_json(nlohmann::json& j, const LayerRecord& r);
void from_json(const nlohmann::json& j, LayerRecord& r);
void to_json(nlohmann::json& j, const NetworkSpec& s);
void from_json(const nlohmann::json& j, NetworkSpec& s);

// Convolutional layer tables for 28/32/64 inputs (Appendix-style DCGAN/SN layout).
SpecSet conv_spec_set(Resolution resolution, int latent_dim, int image_channels);
// Fully connected toy triple over flattened images: two hidden layers of `width`.
SpecSet toy_spec_set(const Shape& image_shape, int latent_dim, int width = 64);

enum class Mode { train, eval };

// One network built from a NetworkSpec: owns its parameters and the
// non-trainable buffers (batch-norm running statistics, spectral-norm vectors).
class Network {
 public:
  Network() = default;
  Network(NetworkSpec spec, std::uint64_t seed);
  // Copies are deep: the copy owns fresh parameter nodes.
  Network(const Network& other);
  Network& operator=(const Network& other);
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  const NetworkSpec& spec() const { return spec_; }

  // Generator: z (B, latent) -> (B, C, H, W). Encoder: x (B, C, H, W) -> (B, latent).
  nn::Var forward(const nn::Var& input, Mode mode);
  // Discriminator: (x, z) -> (B) logits.
  nn::Var forward(const nn::Var& x, const nn::Var& z, Mode mode);

  std::vector<nn::Var>& parameters() { return params_; }
  const std::vector<nn::Var>& parameters() const { return params_; }
  std::int64_t parameter_count() const;
  void zero_grad();

  // Effective (normalized) weights of spectrally normalized layers, as used by the next eval forward.
  std::vector<Tensor> spectral_weights() const;

  // Buffers, in a fixed order, for checkpointing.
  std::vector<Tensor*> buffers();

  void write(std::ostream& os) const;
  void read(std::istream& is);

 private:
  struct Layer {
    LayerRecord record;
    nn::Var weight, bias;
    nn::Var gamma, beta;
    nn::BatchNormStats bn;
    nn::SpectralState sn;
    Shape in_shape;  // per-sample input shape at build time
  };

  nn::Var run_layer(Layer& layer, nn::Var h, Mode mode);
  nn::Var run_branch(Branch branch, nn::Var h, Mode mode);
  void build(Rng& rng);
  void collect_parameters();

  NetworkSpec spec_;
  std::vector<Layer> layers_;
  std::vector<nn::Var> params_;
};

struct ModelTriple {
  Network generator;
  Network encoder;
  Network discriminator;

  int latent_dim() const { return generator.spec().latent_dim; }
  const Shape& image_shape() const { return generator.spec().image_shape; }
};

ModelTriple build_triple(const SpecSet& specs, std::uint64_t seed);

struct JointLogits {
  nn::Var real;  // D(x, E(x))
  nn::Var fake;  // D(G(z), z)
};

// Runs the two discriminator passes of a BiGAN step. Validates shapes and
// throws ShapeError naming the offending tensor.
JointLogits forward_joint(ModelTriple& triple, const nn::Var& x, const nn::Var& z, Mode mode);

void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);

}  // namespace eqgan

#endif  // EQGAN_MODELS_HPP
