// ===== Networks: K domain generators, shared extractor, heads, denoiser =====
//
// Generator: conv encoder -> per-channel restyling (learnable mean and
// softplus-positive std) -> transpose-conv decoder -> scalar affine output.
// Extractor: conv stem + residual blocks + global average pooling; one
// parameter set applied to every input batch. Heads are single linear layers;
// projection outputs are row-normalized at use sites.

#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "acdg/common.hpp"
#include "acdg/ops.hpp"
#include "acdg/rng.hpp"
#include "acdg/spectra.hpp"
#include "acdg/tensor.hpp"

namespace acdg {

// ===== Config =====

struct ModelConfig {
  int axis_length = 954;
  int n_classes = 9;
  int n_generators = 3;
  int gen_ch1 = 32;
  int gen_ch2 = 64;
  // 2 halves the length at the encoder bottleneck; 1 keeps full resolution,
  // which avoids the 2-periodic texture a strided transpose conv imprints on
  // flat regions.
  int gen_stride = 2;
  int stem_channels = 100;
  // (out_channels, stride) per residual block, applied after the stem.
  std::vector<std::pair<int, int>> block_plan = {{100, 1}, {100, 2}, {100, 1}, {200, 2}};
  int d_z = 64;

  int d_feat() const { return block_plan.back().first; }

  // Small preset for fast desk-scale runs.
  static ModelConfig compact(int n_classes, int axis_length = 256) {
    ModelConfig c;
    c.axis_length = axis_length;
    c.n_classes = n_classes;
    c.gen_ch1 = 16;
    c.gen_ch2 = 32;
    c.gen_stride = 1;
    c.stem_channels = 32;
    c.block_plan = {{32, 1}, {32, 2}, {32, 1}, {64, 2}};
    c.d_z = 32;
    return c;
  }

  void validate() const {
    check_config(axis_length >= 16, "axis length too short for this architecture");
    check_config(gen_stride == 1 || gen_stride == 2, "generator stride must be 1 or 2");
    check_config(gen_stride == 1 || axis_length % 2 == 0,
                 "axis length must be even: the strided encoder/decoder pair "
                 "preserves length only for even L");
    check_config(n_classes >= 2, "need at least 2 classes");
    check_config(n_generators >= 1, "need at least 1 generator");
    check_config(gen_ch1 >= 1 && gen_ch2 >= 1 && stem_channels >= 1 && d_z >= 1,
                 "channel counts must be positive");
    check_config(!block_plan.empty(), "block plan is empty");
    for (const auto& [ch, stride] : block_plan) {
      check_config(ch >= 1, "block channels must be positive");
      check_config(stride == 1 || stride == 2, "block stride must be 1 or 2");
    }
  }
};

// ===== Initialization =====

namespace detail {

template <typename T>
ArrayRef<T> init_uniform(Rng& rng, const Shape& shape, int fan_in) {
  auto a = zeros<T>(shape);
  const double bound = std::sqrt(6.0 / static_cast<double>(std::max(fan_in, 1)));
  for (auto& v : a->values) v = static_cast<T>(rng.uniform(-bound, bound));
  return a;
}

inline double softplus_inverse(double y) { return std::log(std::expm1(y)); }

}  // namespace detail

// ===== Layers =====

template <typename T>
struct Conv1dLayer {
  ArrayRef<T> w, b;
  int stride = 1, padding = 0;

  Conv1dLayer() = default;
  Conv1dLayer(ParamRegistry<T>& reg, const std::string& prefix, Rng& rng, int in_ch,
              int out_ch, int k, int stride_, int padding_, bool with_bias = true)
      : stride(stride_), padding(padding_) {
    w = detail::init_uniform<T>(rng, {out_ch, in_ch, k}, in_ch * k);
    b = zeros<T>({out_ch});
    reg.add(prefix + ".w", w);
    if (with_bias) reg.add(prefix + ".b", b);
  }

  ArrayRef<T> forward(Tape<T>& tape, const ArrayRef<T>& x) const {
    return conv1d(tape, x, w, b, stride, padding);
  }
};

template <typename T>
struct TConv1dLayer {
  ArrayRef<T> w, b;
  int stride = 1, padding = 0;

  TConv1dLayer() = default;
  TConv1dLayer(ParamRegistry<T>& reg, const std::string& prefix, Rng& rng, int in_ch,
               int out_ch, int k, int stride_, int padding_, bool with_bias = true)
      : stride(stride_), padding(padding_) {
    w = detail::init_uniform<T>(rng, {in_ch, out_ch, k}, out_ch * k);
    b = zeros<T>({out_ch});
    reg.add(prefix + ".w", w);
    if (with_bias) reg.add(prefix + ".b", b);
  }

  ArrayRef<T> forward(Tape<T>& tape, const ArrayRef<T>& x) const {
    return transpose_conv1d(tape, x, w, b, stride, padding);
  }
};

template <typename T>
struct BatchNormLayer {
  ArrayRef<T> gamma, beta, running_mean, running_var;

  BatchNormLayer() = default;
  BatchNormLayer(ParamRegistry<T>& reg, const std::string& prefix, int channels) {
    gamma = full<T>({channels}, T(1));
    beta = zeros<T>({channels});
    running_mean = zeros<T>({channels});
    running_var = full<T>({channels}, T(1));
    reg.add(prefix + ".gamma", gamma);
    reg.add(prefix + ".beta", beta);
    reg.add(prefix + ".running_mean", running_mean, false);
    reg.add(prefix + ".running_var", running_var, false);
  }

  ArrayRef<T> forward(Tape<T>& tape, const ArrayRef<T>& x, Mode mode) const {
    return batch_norm1d(tape, x, gamma, beta, running_mean, running_var, mode);
  }
};

template <typename T>
struct LinearLayer {
  ArrayRef<T> w, b;

  LinearLayer() = default;
  LinearLayer(ParamRegistry<T>& reg, const std::string& prefix, Rng& rng, int in_dim,
              int out_dim) {
    w = detail::init_uniform<T>(rng, {out_dim, in_dim}, in_dim);
    b = zeros<T>({out_dim});
    reg.add(prefix + ".w", w);
    reg.add(prefix + ".b", b);
  }

  ArrayRef<T> forward(Tape<T>& tape, const ArrayRef<T>& x) const {
    return linear(tape, x, w, b);
  }
};

// ===== Domain generator =====

template <typename T>
struct DomainGenerator {
  int axis_length = 0;
  Conv1dLayer<T> enc1, enc2;
  BatchNormLayer<T> enc_bn1, enc_bn2;
  ArrayRef<T> style_mean, style_sigma_raw;
  TConv1dLayer<T> dec1, dec2;
  BatchNormLayer<T> dec_bn1;
  ArrayRef<T> smooth_w, smooth_b;
  ArrayRef<T> out_scale, out_shift;

  DomainGenerator() = default;
  DomainGenerator(ParamRegistry<T>& reg, const std::string& prefix, Rng& rng,
                  const ModelConfig& cfg)
      : axis_length(cfg.axis_length) {
    const int c1 = cfg.gen_ch1, c2 = cfg.gen_ch2;
    // Generator convs carry no bias: every shift lives in a BN beta or in
    // out_shift, so flat input regions decode toward zero instead of a
    // bias-driven floor.
    enc1 = Conv1dLayer<T>(reg, prefix + ".enc1", rng, 1, c1, 7, 1, 3, false);
    enc_bn1 = BatchNormLayer<T>(reg, prefix + ".enc_bn1", c1);
    enc2 = Conv1dLayer<T>(reg, prefix + ".enc2", rng, c1, c2, 5, cfg.gen_stride, 2, false);
    enc_bn2 = BatchNormLayer<T>(reg, prefix + ".enc_bn2", c2);

    style_mean = zeros<T>({c2});
    style_sigma_raw = zeros<T>({c2});
    for (auto& v : style_mean->values) v = static_cast<T>(rng.normal(0.0, 0.1));
    const double raw1 = detail::softplus_inverse(1.0);
    for (auto& v : style_sigma_raw->values)
      v = static_cast<T>(raw1 + rng.normal(0.0, 0.1));
    reg.add(prefix + ".style_mean", style_mean);
    reg.add(prefix + ".style_sigma_raw", style_sigma_raw);

    // Kernel 4 on the strided transpose stage is forced by exact length
    // preservation: (L/2 - 1)*2 - 2 + 4 == L. The stride-1 variant mirrors
    // the encoder's kernel 5.
    if (cfg.gen_stride == 2)
      dec1 = TConv1dLayer<T>(reg, prefix + ".dec1", rng, c2, c1, 4, 2, 1, false);
    else
      dec1 = TConv1dLayer<T>(reg, prefix + ".dec1", rng, c2, c1, 5, 1, 2, false);
    dec_bn1 = BatchNormLayer<T>(reg, prefix + ".dec_bn1", c1);
    dec2 = TConv1dLayer<T>(reg, prefix + ".dec2", rng, c1, 1, 7, 1, 3, false);

    // Fixed binomial taper on the output head (unregistered, so it never
    // trains): pixel-scale texture carries no class information but caps
    // band SNR, and nothing in the training objective suppresses it.
    smooth_w = zeros<T>({1, 1, 5});
    const T bin[5] = {T(1) / 16, T(4) / 16, T(6) / 16, T(4) / 16, T(1) / 16};
    for (int i = 0; i < 5; ++i) smooth_w->values[static_cast<std::size_t>(i)] = bin[i];
    smooth_b = zeros<T>({1});

    out_scale = full<T>({1}, T(1));
    out_shift = zeros<T>({1});
    reg.add(prefix + ".out_scale", out_scale);
    reg.add(prefix + ".out_shift", out_shift);
  }

  ArrayRef<T> encode(Tape<T>& tape, const ArrayRef<T>& x, Mode mode) const {
    check_dim(x->shape.size() == 3 && x->shape[1] == 1 && x->shape[2] == axis_length,
              "generator input must be [batch, 1, " + std::to_string(axis_length) + "]");
    auto h = relu(tape, enc_bn1.forward(tape, enc1.forward(tape, x), mode));
    return relu(tape, enc_bn2.forward(tape, enc2.forward(tape, h), mode));
  }

  ArrayRef<T> restyle(Tape<T>& tape, const ArrayRef<T>& h) const {
    auto sigma = softplus(tape, style_sigma_raw);
    return adain(tape, h, style_mean, sigma);
  }

  ArrayRef<T> decode(Tape<T>& tape, const ArrayRef<T>& h, Mode mode) const {
    auto d = relu(tape, dec_bn1.forward(tape, dec1.forward(tape, h), mode));
    auto y = dec2.forward(tape, d);
    y = conv1d(tape, y, smooth_w, smooth_b, 1, 2);
    return scalar_affine(tape, y, out_scale, out_shift);
  }

  ArrayRef<T> generate(Tape<T>& tape, const ArrayRef<T>& x, Mode mode) const {
    return decode(tape, restyle(tape, encode(tape, x, mode)), mode);
  }
};

// ===== Residual feature extractor =====

template <typename T>
struct ResidualBlock {
  Conv1dLayer<T> conv1, conv2;
  BatchNormLayer<T> bn1, bn2;
  bool projected = false;
  Conv1dLayer<T> proj;
  BatchNormLayer<T> proj_bn;

  ResidualBlock() = default;
  ResidualBlock(ParamRegistry<T>& reg, const std::string& prefix, Rng& rng, int in_ch,
                int out_ch, int stride) {
    conv1 = Conv1dLayer<T>(reg, prefix + ".conv1", rng, in_ch, out_ch, 3, stride, 1);
    bn1 = BatchNormLayer<T>(reg, prefix + ".bn1", out_ch);
    conv2 = Conv1dLayer<T>(reg, prefix + ".conv2", rng, out_ch, out_ch, 3, 1, 1);
    bn2 = BatchNormLayer<T>(reg, prefix + ".bn2", out_ch);
    projected = (in_ch != out_ch) || (stride != 1);
    if (projected) {
      proj = Conv1dLayer<T>(reg, prefix + ".proj", rng, in_ch, out_ch, 1, stride, 0);
      proj_bn = BatchNormLayer<T>(reg, prefix + ".proj_bn", out_ch);
    }
  }

  ArrayRef<T> forward(Tape<T>& tape, const ArrayRef<T>& x, Mode mode) const {
    auto h = relu(tape, bn1.forward(tape, conv1.forward(tape, x), mode));
    h = bn2.forward(tape, conv2.forward(tape, h), mode);
    auto skip = projected ? proj_bn.forward(tape, proj.forward(tape, x), mode) : x;
    return relu(tape, add(tape, h, skip));
  }
};

template <typename T>
struct FeatureExtractor {
  int axis_length = 0;
  Conv1dLayer<T> stem;
  BatchNormLayer<T> stem_bn;
  std::vector<ResidualBlock<T>> blocks;

  FeatureExtractor() = default;
  FeatureExtractor(ParamRegistry<T>& reg, const std::string& prefix, Rng& rng,
                   const ModelConfig& cfg)
      : axis_length(cfg.axis_length) {
    stem = Conv1dLayer<T>(reg, prefix + ".stem", rng, 1, cfg.stem_channels, 7, 2, 3);
    stem_bn = BatchNormLayer<T>(reg, prefix + ".stem_bn", cfg.stem_channels);
    int in_ch = cfg.stem_channels;
    for (std::size_t i = 0; i < cfg.block_plan.size(); ++i) {
      const auto& [out_ch, stride] = cfg.block_plan[i];
      blocks.emplace_back(reg, prefix + ".block" + std::to_string(i), rng, in_ch, out_ch,
                          stride);
      in_ch = out_ch;
    }
  }

  ArrayRef<T> forward(Tape<T>& tape, const ArrayRef<T>& x, Mode mode) const {
    check_dim(x->shape.size() == 3 && x->shape[1] == 1 && x->shape[2] == axis_length,
              "extractor input must be [batch, 1, " + std::to_string(axis_length) + "]");
    auto h = relu(tape, stem_bn.forward(tape, stem.forward(tape, x), mode));
    for (const auto& b : blocks) h = b.forward(tape, h, mode);
    return global_avg_pool(tape, h);
  }
};

// ===== Bundle =====

template <typename T>
struct ModelBundle {
  ModelConfig config;
  ParamRegistry<T> params;
  std::vector<DomainGenerator<T>> generators;
  FeatureExtractor<T> extractor;
  LinearLayer<T> projection;
  LinearLayer<T> classifier;
  bool trained = false;

  explicit ModelBundle(const ModelConfig& cfg, std::uint64_t seed) : config(cfg) {
    config.validate();
    Rng rng(mix_seed(seed, 0x4D4F44454CULL));
    for (int k = 0; k < config.n_generators; ++k)
      generators.emplace_back(params, "generator" + std::to_string(k), rng, config);
    extractor = FeatureExtractor<T>(params, "extractor", rng, config);
    projection = LinearLayer<T>(params, "projection", rng, config.d_feat(), config.d_z);
    classifier = LinearLayer<T>(params, "classifier", rng, config.d_feat(),
                                config.n_classes);
  }

  ArrayRef<T> extract(Tape<T>& tape, const ArrayRef<T>& x, Mode mode) const {
    return extractor.forward(tape, x, mode);
  }
  ArrayRef<T> project(Tape<T>& tape, const ArrayRef<T>& feat) const {
    return normalize_rows(tape, projection.forward(tape, feat));
  }
  ArrayRef<T> classify(Tape<T>& tape, const ArrayRef<T>& feat) const {
    return classifier.forward(tape, feat);
  }

  // Freeze helpers implementing the alternation contract: one call flips the
  // generator side, the other everything else.
  void freeze_generators(bool frozen) { params.set_frozen("generator", frozen); }
  void freeze_task_networks(bool frozen) {
    params.set_frozen("extractor", frozen);
    params.set_frozen("projection", frozen);
    params.set_frozen("classifier", frozen);
  }

  // Mean over the K generators' outputs, eval mode, on minmax-normalized
  // inputs. Rows of `inputs` are raw intensity vectors.
  std::vector<std::vector<double>> denoise_values(
      const std::vector<std::vector<double>>& inputs) const {
    check_usage(trained, "denoise requires a trained bundle");
    const int L = config.axis_length;
    const int B = static_cast<int>(inputs.size());
    check_dim(B >= 1, "empty denoise batch");
    auto x = zeros<T>({B, 1, L});
    for (int i = 0; i < B; ++i) {
      check_dim(static_cast<int>(inputs[i].size()) == L,
                "spectrum length does not match model config");
      auto norm = normalize_minmax(inputs[i]);
      for (int j = 0; j < L; ++j)
        x->values[static_cast<std::size_t>(i) * L + j] = static_cast<T>(norm[j]);
    }
    std::vector<std::vector<double>> out(B, std::vector<double>(L, 0.0));
    for (const auto& g : generators) {
      Tape<T> tape;
      auto y = g.generate(tape, x, Mode::kEval);
      for (int i = 0; i < B; ++i)
        for (int j = 0; j < L; ++j)
          out[i][j] += static_cast<double>(y->values[static_cast<std::size_t>(i) * L + j]);
    }
    const double inv = 1.0 / static_cast<double>(generators.size());
    for (auto& row : out)
      for (auto& v : row) v *= inv;
    return out;
  }

  Spectrum denoise(const Spectrum& s) const {
    Spectrum out = s;
    out.intensities = denoise_values({s.intensities})[0];
    return out;
  }
};

}  // namespace acdg
