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

#include "eqgan/models.hpp"

#include <cmath>
#include <istream>
#include <ostream>

namespace eqgan {

namespace {

constexpr double kInitStd = 0.02;
constexpr int kSpectralWarmupIterations = 100;

NLOHMANN_JSON_SERIALIZE_ENUM(Role, {{Role::generator, "generator"},
                                    {Role::encoder, "encoder"},
                                    {Role::discriminator, "discriminator"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Resolution, {{Resolution::r28, "28"},
                                          {Resolution::r32, "32"},
                                          {Resolution::r64, "64"},
                                          {Resolution::toy, "toy"}})
NLOHMANN_JSON_SERIALIZE_ENUM(LayerKind, {{LayerKind::conv, "conv"},
                                         {LayerKind::deconv, "deconv"},
                                         {LayerKind::dense, "dense"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Norm, {{Norm::none, "none"}, {Norm::batch, "batch"}, {Norm::spectral, "spectral"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Activation, {{Activation::none, "none"},
                                          {Activation::relu, "relu"},
                                          {Activation::leaky_relu, "leaky_relu"},
                                          {Activation::tanh, "tanh"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Branch, {{Branch::x, "x"}, {Branch::z, "z"}, {Branch::joint, "joint"}})

LayerRecord conv(int stride, int pad, int kernel, int channels, Norm norm, Activation act,
                 Branch branch = Branch::x) {
  return {LayerKind::conv, stride, pad, kernel, channels, norm, act, branch};
}

LayerRecord deconv(int stride, int pad, int kernel, int channels, Norm norm, Activation act) {
  return {LayerKind::deconv, stride, pad, kernel, channels, norm, act, Branch::x};
}

LayerRecord dense(int units, Norm norm, Activation act, Branch branch = Branch::x) {
  return {LayerKind::dense, 1, 0, 1, units, norm, act, branch};
}

std::int64_t conv_out(std::int64_t in, const LayerRecord& r) {
  return (in + 2 * r.padding - r.kernel) / r.stride + 1;
}

std::int64_t deconv_out(std::int64_t in, const LayerRecord& r) {
  return (in - 1) * r.stride - 2 * r.padding + r.kernel;
}

std::string describe(const NetworkSpec& spec, std::size_t layer) {
  return to_string(spec.role) + " layer " + std::to_string(layer);
}

}  // namespace

std::string to_string(Role r) { return nlohmann::json(r).get<std::string>(); }
std::string to_string(Resolution r) { return nlohmann::json(r).get<std::string>(); }

Resolution resolution_from_string(const std::string& s) {
  if (s == "28") return Resolution::r28;
  if (s == "32") return Resolution::r32;
  if (s == "64") return Resolution::r64;
  if (s == "toy") return Resolution::toy;
  throw ConfigError("unknown resolution '" + s + "'");
}

void to_json(nlohmann::json& j, const LayerRecord& r) {
  j = {{"kind", r.kind},         {"stride", r.stride}, {"padding", r.padding},       {"kernel", r.kernel},
       {"channels", r.channels}, {"norm", r.norm},     {"activation", r.activation}, {"branch", r.branch}};
}

void from_json(const nlohmann::json& j, LayerRecord& r) {
  j.at("kind").get_to(r.kind);
  j.at("stride").get_to(r.stride);
  j.at("padding").get_to(r.padding);
  j.at("kernel").get_to(r.kernel);
  j.at("channels").get_to(r.channels);
  j.at("norm").get_to(r.norm);
  j.at("activation").get_to(r.activation);
  j.at("branch").get_to(r.branch);
}

void to_json(nlohmann::json& j, const NetworkSpec& s) {
  j = {{"role", s.role},
       {"resolution", s.resolution},
       {"latent_dim", s.latent_dim},
       {"image_shape", s.image_shape},
       {"layers", s.layers},
       {"leaky_slope", s.leaky_slope}};
}

void from_json(const nlohmann::json& j, NetworkSpec& s) {
  j.at("role").get_to(s.role);
  j.at("resolution").get_to(s.resolution);
  j.at("latent_dim").get_to(s.latent_dim);
  j.at("image_shape").get_to(s.image_shape);
  j.at("layers").get_to(s.layers);
  j.at("leaky_slope").get_to(s.leaky_slope);
}

SpecSet conv_spec_set(Resolution resolution, int latent_dim, int image_channels) {
  if (resolution == Resolution::toy) throw ConfigError("conv_spec_set: use toy_spec_set for the toy resolution");
  const bool r64 = resolution == Resolution::r64;
  const bool r28 = resolution == Resolution::r28;
  const std::int64_t side = r64 ? 64 : (r28 ? 28 : 32);
  const Shape image{image_channels, side, side};
  const auto lrelu = Activation::leaky_relu;

  SpecSet set;
  set.generator = {Role::generator, resolution, latent_dim, image, {}, 0.1};
  set.generator.layers = {
      deconv(1, 0, 4, 512, Norm::batch, Activation::relu),
      deconv(2, 1, r28 ? 3 : 4, 256, Norm::batch, Activation::relu),
      deconv(2, 1, 4, 128, Norm::batch, Activation::relu),
      deconv(2, 1, 4, 64, Norm::batch, Activation::relu),
      deconv(r64 ? 2 : 1, 1, r64 ? 4 : 3, image_channels, Norm::none, Activation::tanh),
  };

  set.encoder = {Role::encoder, resolution, latent_dim, image, {}, 0.1};
  set.encoder.layers = {
      conv(1, 1, 3, 64, Norm::none, lrelu),
      conv(2, 1, 4, 64, Norm::none, lrelu),
      conv(1, 1, 3, 128, Norm::none, lrelu),
      conv(2, 1, 4, 128, Norm::none, lrelu),
      conv(r64 ? 2 : 1, 1, 3, 256, Norm::none, lrelu),
      conv(2, 1, 4, 256, Norm::none, lrelu),
      conv(1, 1, 3, 512, Norm::none, lrelu),
      dense(latent_dim, Norm::none, Activation::none),
  };

  // A 28-pixel input leaves a 3x3 map before the last image-branch layer;
  // its kernel shrinks to 3 so the branch still ends at 1x1.
  set.discriminator = {Role::discriminator, resolution, latent_dim, image, {}, 0.1};
  set.discriminator.layers = {
      conv(1, 1, 3, 64, Norm::spectral, lrelu),
      conv(2, 1, 4, 64, Norm::spectral, lrelu),
      conv(r64 ? 2 : 1, 1, 4, 128, Norm::spectral, lrelu),
      conv(2, 1, 4, 128, Norm::spectral, lrelu),
      conv(1, 0, 4, 256, Norm::spectral, lrelu),
      conv(2, 0, r28 ? 3 : 4, 256, Norm::spectral, lrelu),
      conv(1, 0, 1, 256, Norm::spectral, lrelu, Branch::z),
      conv(1, 0, 1, 512, Norm::spectral, lrelu, Branch::joint),
      conv(1, 0, 1, 1024, Norm::spectral, lrelu, Branch::joint),
      dense(1, Norm::none, Activation::none, Branch::joint),
  };
  return set;
}

SpecSet toy_spec_set(const Shape& image_shape, int latent_dim, int width) {
  const int data_dim = static_cast<int>(shape_numel(image_shape));
  SpecSet set;
  set.generator = {Role::generator, Resolution::toy, latent_dim, image_shape, {}, 0.1};
  set.generator.layers = {dense(width, Norm::none, Activation::relu), dense(width, Norm::none, Activation::relu),
                          dense(data_dim, Norm::none, Activation::tanh)};
  set.encoder = {Role::encoder, Resolution::toy, latent_dim, image_shape, {}, 0.1};
  set.encoder.layers = {dense(width, Norm::none, Activation::leaky_relu),
                        dense(width, Norm::none, Activation::leaky_relu),
                        dense(latent_dim, Norm::none, Activation::none)};
  set.discriminator = {Role::discriminator, Resolution::toy, latent_dim, image_shape, {}, 0.1};
  set.discriminator.layers = {dense(width, Norm::spectral, Activation::leaky_relu, Branch::joint),
                              dense(width, Norm::spectral, Activation::leaky_relu, Branch::joint),
                              dense(1, Norm::none, Activation::none, Branch::joint)};
  return set;
}

// ---- Network ----------------------------------------------------------------

Network::Network(NetworkSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  if (spec_.latent_dim <= 0) throw ConfigError("latent_dim must be positive");
  if (spec_.image_shape.size() != 3) throw ConfigError("image_shape must be (C, H, W)");
  Rng rng(seed);
  build(rng);
}

Network::Network(const Network& other) : spec_(other.spec_), layers_(other.layers_) {
  auto fresh = [](nn::Var& v) {
    if (v) v = nn::Var::parameter(v.value());
  };
  for (auto& layer : layers_) {
    fresh(layer.weight);
    fresh(layer.bias);
    fresh(layer.gamma);
    fresh(layer.beta);
  }
  collect_parameters();
}

Network& Network::operator=(const Network& other) {
  if (this != &other) *this = Network(other);
  return *this;
}

void Network::collect_parameters() {
  params_.clear();
  for (auto& layer : layers_) {
    for (nn::Var* v : {&layer.weight, &layer.bias, &layer.gamma, &layer.beta}) {
      if (*v) params_.push_back(*v);
    }
  }
}

void Network::build(Rng& rng) {
  const Shape latent{spec_.latent_dim};
  Shape x_shape = spec_.role == Role::generator ? latent : spec_.image_shape;
  Shape z_shape = latent;
  bool joined = spec_.role != Role::discriminator;

  auto init_normal = [&rng](Shape shape) {
    Tensor t(std::move(shape));
    for (auto& v : t.storage()) v = kInitStd * rng.normal();
    return nn::Var::parameter(std::move(t));
  };

  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const LayerRecord& rec = spec_.layers[i];
    if (rec.channels <= 0 || rec.kernel <= 0 || rec.stride <= 0 || rec.padding < 0) {
      throw ConfigError(describe(spec_, i) + ": invalid layer record");
    }
    if (spec_.role != Role::discriminator && rec.branch != Branch::x) {
      throw ConfigError(describe(spec_, i) + ": only discriminators have z/joint branches");
    }
    Shape* cur = &x_shape;
    if (rec.branch == Branch::z) cur = &z_shape;
    if (rec.branch == Branch::joint && !joined) {
      // Concatenate image and latent branches along channels.
      if (x_shape.size() == 3 && z_shape.size() == 3) {
        if (x_shape[1] != z_shape[1] || x_shape[2] != z_shape[2]) {
          throw ShapeError(describe(spec_, i) + ": image branch ends at " + to_string(x_shape) +
                           " but latent branch at " + to_string(z_shape) + "; spatial dims must agree");
        }
        x_shape = {x_shape[0] + z_shape[0], x_shape[1], x_shape[2]};
      } else {
        x_shape = {shape_numel(x_shape) + shape_numel(z_shape)};
      }
      joined = true;
    }
    if (rec.branch == Branch::x && spec_.role == Role::discriminator && joined) {
      throw ConfigError(describe(spec_, i) + ": image-branch layer after the join");
    }

    Layer layer;
    layer.record = rec;
    Shape& s = *cur;
    if (rec.kind != LayerKind::dense && s.size() == 1) s = {s[0], 1, 1};
    layer.in_shape = s;
    std::int64_t rows = 0;
    switch (rec.kind) {
      case LayerKind::dense: {
        const std::int64_t in = shape_numel(s);
        layer.weight = init_normal({rec.channels, in});
        rows = rec.channels;
        s = {rec.channels};
        break;
      }
      case LayerKind::conv: {
        const std::int64_t h = conv_out(s[1], rec), w = conv_out(s[2], rec);
        if (h <= 0 || w <= 0) {
          throw ShapeError(describe(spec_, i) + ": conv on " + to_string(s) + " yields non-positive spatial size");
        }
        layer.weight = init_normal({rec.channels, s[0], rec.kernel, rec.kernel});
        rows = rec.channels;
        s = {rec.channels, h, w};
        break;
      }
      case LayerKind::deconv: {
        const std::int64_t h = deconv_out(s[1], rec), w = deconv_out(s[2], rec);
        if (h <= 0 || w <= 0) {
          throw ShapeError(describe(spec_, i) + ": deconv on " + to_string(s) + " yields non-positive spatial size");
        }
        layer.weight = init_normal({s[0], rec.channels, rec.kernel, rec.kernel});
        rows = s[0];
        s = {rec.channels, h, w};
        break;
      }
    }
    layer.bias = nn::Var::parameter(Tensor({rec.channels}));
    if (rec.norm == Norm::batch) {
      layer.gamma = nn::Var::parameter(Tensor({rec.channels}, 1.0));
      layer.beta = nn::Var::parameter(Tensor({rec.channels}));
      layer.bn.running_mean = Tensor({rec.channels});
      layer.bn.running_var = Tensor({rec.channels}, 1.0);
    } else if (rec.norm == Norm::spectral) {
      if (rec.kind == LayerKind::deconv) throw ConfigError(describe(spec_, i) + ": spectral norm on deconv");
      const std::int64_t cols = layer.weight.value().numel() / rows;
      layer.sn.u = Tensor({rows});
      for (auto& v : layer.sn.u.storage()) v = rng.normal();
      layer.sn.u.matrix(rows, 1).normalize();
      layer.sn.v = Tensor({cols});
      nn::power_iteration(layer.weight.value(), layer.sn, kSpectralWarmupIterations);
    }
    layers_.push_back(std::move(layer));
  }

  // Output checks.
  switch (spec_.role) {
    case Role::generator:
      if (shape_numel(x_shape) != shape_numel(spec_.image_shape) ||
          (x_shape.size() == 3 && x_shape != spec_.image_shape)) {
        throw ShapeError("generator output " + to_string(x_shape) + " does not match image shape " +
                         to_string(spec_.image_shape));
      }
      break;
    case Role::encoder:
      if (x_shape != latent) {
        throw ShapeError("encoder output " + to_string(x_shape) + " does not match latent (" +
                         std::to_string(spec_.latent_dim) + ")");
      }
      break;
    case Role::discriminator:
      if (!joined) throw ConfigError("discriminator has no joint layers");
      if (shape_numel(x_shape) != 1) throw ShapeError("discriminator output " + to_string(x_shape) + " is not scalar");
      break;
  }
  collect_parameters();
}

nn::Var Network::run_layer(Layer& layer, nn::Var h, Mode mode) {
  const LayerRecord& rec = layer.record;
  const bool training = mode == Mode::train;
  const std::int64_t batch = h.value().dim(0);
  if (rec.kind != LayerKind::dense && h.value().rank() == 2) {
    Shape s{batch};
    s.insert(s.end(), layer.in_shape.begin(), layer.in_shape.end());
    h = nn::reshape(h, s);
  }
  nn::Var w = rec.norm == Norm::spectral ? nn::spectral_normalize(layer.weight, layer.sn, training) : layer.weight;
  switch (rec.kind) {
    case LayerKind::dense: h = nn::linear(h, w, layer.bias); break;
    case LayerKind::conv: h = nn::conv2d(h, w, layer.bias, rec.stride, rec.padding); break;
    case LayerKind::deconv: h = nn::conv_transpose2d(h, w, layer.bias, rec.stride, rec.padding); break;
  }
  if (rec.norm == Norm::batch) h = nn::batch_norm(h, layer.gamma, layer.beta, layer.bn, training);
  switch (rec.activation) {
    case Activation::none: break;
    case Activation::relu: h = nn::relu(h); break;
    case Activation::leaky_relu: h = nn::leaky_relu(h, spec_.leaky_slope); break;
    case Activation::tanh: h = nn::tanh(h); break;
  }
  return h;
}

nn::Var Network::run_branch(Branch branch, nn::Var h, Mode mode) {
  for (auto& layer : layers_) {
    if (layer.record.branch == branch) h = run_layer(layer, std::move(h), mode);
  }
  return h;
}

nn::Var Network::forward(const nn::Var& input, Mode mode) {
  if (spec_.role == Role::discriminator) throw ConfigError("discriminator forward needs (x, z)");
  const std::int64_t batch = input.value().dim(0);
  nn::Var h = run_branch(Branch::x, input, mode);
  if (spec_.role == Role::generator) {
    Shape s{batch};
    s.insert(s.end(), spec_.image_shape.begin(), spec_.image_shape.end());
    if (h.shape() != s) h = nn::reshape(h, s);
  } else if (h.value().rank() != 2) {
    h = nn::reshape(h, {batch, spec_.latent_dim});
  }
  return h;
}

nn::Var Network::forward(const nn::Var& x, const nn::Var& z, Mode mode) {
  if (spec_.role != Role::discriminator) throw ConfigError("only the discriminator takes (x, z)");
  const std::int64_t batch = x.value().dim(0);
  nn::Var hx = run_branch(Branch::x, x, mode);
  nn::Var hz = run_branch(Branch::z, z, mode);
  if (hx.value().rank() != hz.value().rank() || hx.value().rank() == 2) {
    hx = nn::reshape(hx, {batch, hx.value().row_size()});
    hz = nn::reshape(hz, {batch, hz.value().row_size()});
  }
  nn::Var h = run_branch(Branch::joint, nn::concat(hx, hz), mode);
  return nn::reshape(h, {batch});
}

std::int64_t Network::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& p : params_) n += p.value().numel();
  return n;
}

void Network::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

std::vector<Tensor> Network::spectral_weights() const {
  std::vector<Tensor> out;
  for (const auto& layer : layers_) {
    if (layer.record.norm != Norm::spectral) continue;
    Tensor w = layer.weight.value();
    const double sigma = nn::spectral_sigma(w, layer.sn);
    for (auto& v : w.storage()) v /= sigma;
    out.push_back(std::move(w));
  }
  return out;
}

std::vector<Tensor*> Network::buffers() {
  std::vector<Tensor*> out;
  for (auto& layer : layers_) {
    if (layer.record.norm == Norm::batch) {
      out.push_back(&layer.bn.running_mean);
      out.push_back(&layer.bn.running_var);
    } else if (layer.record.norm == Norm::spectral) {
      out.push_back(&layer.sn.u);
      out.push_back(&layer.sn.v);
    }
  }
  return out;
}

void write_tensor(std::ostream& os, const Tensor& t) {
  const auto rank = static_cast<std::uint32_t>(t.rank());
  os.write(reinterpret_cast<const char*>(&rank), sizeof rank);
  for (auto d : t.shape()) os.write(reinterpret_cast<const char*>(&d), sizeof d);
  os.write(reinterpret_cast<const char*>(t.data().data()), static_cast<std::streamsize>(t.numel() * sizeof(double)));
}

Tensor read_tensor(std::istream& is) {
  std::uint32_t rank = 0;
  is.read(reinterpret_cast<char*>(&rank), sizeof rank);
  if (!is || rank > 8) throw std::runtime_error("corrupt tensor record");
  Shape shape(rank);
  for (auto& d : shape) is.read(reinterpret_cast<char*>(&d), sizeof d);
  Tensor t(shape);
  is.read(reinterpret_cast<char*>(t.data().data()), static_cast<std::streamsize>(t.numel() * sizeof(double)));
  if (!is) throw std::runtime_error("truncated tensor record");
  return t;
}

void Network::write(std::ostream& os) const {
  for (const auto& p : params_) write_tensor(os, p.value());
  for (Tensor* b : const_cast<Network*>(this)->buffers()) write_tensor(os, *b);
}

void Network::read(std::istream& is) {
  auto load = [&is](Tensor& dst) {
    Tensor t = read_tensor(is);
    if (t.shape() != dst.shape()) {
      throw ShapeError("checkpoint tensor " + to_string(t.shape()) + " does not match " + to_string(dst.shape()));
    }
    dst = std::move(t);
  };
  for (auto& p : params_) load(p.mutable_value());
  for (Tensor* b : buffers()) load(*b);
}

ModelTriple build_triple(const SpecSet& specs, std::uint64_t seed) {
  const auto& g = specs.generator;
  const auto& e = specs.encoder;
  const auto& d = specs.discriminator;
  if (g.role != Role::generator || e.role != Role::encoder || d.role != Role::discriminator) {
    throw ConfigError("spec set roles must be (generator, encoder, discriminator)");
  }
  if (g.latent_dim != e.latent_dim || g.latent_dim != d.latent_dim) {
    throw ConfigError("latent_dim differs across generator/encoder/discriminator specs");
  }
  if (g.resolution != e.resolution || g.resolution != d.resolution) {
    throw ConfigError("resolution differs across generator/encoder/discriminator specs");
  }
  if (g.image_shape != e.image_shape || g.image_shape != d.image_shape) {
    throw ConfigError("image shape differs across generator/encoder/discriminator specs");
  }
  return ModelTriple{Network(g, derive_seed(seed, 0)), Network(e, derive_seed(seed, 1)),
                     Network(d, derive_seed(seed, 2))};
}

JointLogits forward_joint(ModelTriple& triple, const nn::Var& x, const nn::Var& z, Mode mode) {
  const Shape& img = triple.image_shape();
  Shape expected_x{x.value().rank() ? x.value().dim(0) : 0};
  expected_x.insert(expected_x.end(), img.begin(), img.end());
  if (x.value().rank() != 4 || x.shape() != expected_x || expected_x[0] == 0) {
    throw ShapeError("x has shape " + to_string(x.shape()) + ", expected (B, " + std::to_string(img[0]) + ", " +
                     std::to_string(img[1]) + ", " + std::to_string(img[2]) + ") with B >= 1");
  }
  const std::int64_t batch = expected_x[0];
  if (z.shape() != Shape{batch, triple.latent_dim()}) {
    throw ShapeError("z has shape " + to_string(z.shape()) + ", expected (" + std::to_string(batch) + ", " +
                     std::to_string(triple.latent_dim()) + ")");
  }
  nn::Var z_enc = triple.encoder.forward(x, mode);
  nn::Var x_gen = triple.generator.forward(z, mode);
  return {triple.discriminator.forward(x, z_enc, mode), triple.discriminator.forward(x_gen, z, mode)};
}

}  // namespace eqgan
