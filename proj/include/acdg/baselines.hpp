// ===== Classical denoisers and the plain cross-entropy baseline =====
//
// Five unsupervised filters with a shared string spec format, plus a
// generator-free classifier trained on cross entropy alone. Every filter is a
// pure function, preserves length, and handles edges by symmetric mirror
// padding (the edge sample is repeated).

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "acdg/common.hpp"
#include "acdg/training.hpp"

namespace acdg {

// ===== Shared padding helper =====

namespace detail {

// Symmetric mirror: [1,2,3] padded by 2 -> [2,1,|1,2,3|,3,2].
inline std::vector<double> mirror_pad(const std::vector<double>& x, int r) {
  const int n = static_cast<int>(x.size());
  check_config(r >= 0, "negative padding");
  check_config(r <= n, "window does not fit the sequence");
  std::vector<double> out;
  out.reserve(x.size() + 2 * static_cast<std::size_t>(r));
  for (int i = r - 1; i >= 0; --i) out.push_back(x[static_cast<std::size_t>(i)]);
  out.insert(out.end(), x.begin(), x.end());
  for (int i = 0; i < r; ++i) out.push_back(x[static_cast<std::size_t>(n - 1 - i)]);
  return out;
}

// Solves the small linear system M z = rhs in place (partial pivoting).
inline std::vector<double> solve_dense(std::vector<std::vector<double>> m,
                                       std::vector<double> rhs) {
  const int n = static_cast<int>(rhs.size());
  for (int col = 0; col < n; ++col) {
    int pivot = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(m[static_cast<std::size_t>(r)][static_cast<std::size_t>(col)]) >
          std::abs(m[static_cast<std::size_t>(pivot)][static_cast<std::size_t>(col)]))
        pivot = r;
    std::swap(m[static_cast<std::size_t>(col)], m[static_cast<std::size_t>(pivot)]);
    std::swap(rhs[static_cast<std::size_t>(col)], rhs[static_cast<std::size_t>(pivot)]);
    const double d = m[static_cast<std::size_t>(col)][static_cast<std::size_t>(col)];
    check_config(d != 0.0, "singular fit system");
    for (int r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f =
          m[static_cast<std::size_t>(r)][static_cast<std::size_t>(col)] / d;
      for (int c = col; c < n; ++c)
        m[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] -=
            f * m[static_cast<std::size_t>(col)][static_cast<std::size_t>(c)];
      rhs[static_cast<std::size_t>(r)] -= f * rhs[static_cast<std::size_t>(col)];
    }
  }
  for (int i = 0; i < n; ++i)
    rhs[static_cast<std::size_t>(i)] /=
        m[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)];
  return rhs;
}

}  // namespace detail

// ===== Savitzky-Golay =====

// Least-squares polynomial fit of the given order over each window, evaluated
// at the window center. The center-evaluation weights are precomputed once
// from the normal equations.
inline std::vector<double> savitzky_golay(const std::vector<double>& x, int window,
                                          int order) {
  const int n = static_cast<int>(x.size());
  check_config(window >= 1 && window % 2 == 1, "window must be odd and positive");
  check_config(order >= 0 && order < window, "order must satisfy 0 <= order < window");
  check_config(window <= n, "window does not fit the sequence");

  const int r = window / 2;
  const int m = order + 1;
  std::vector<std::vector<double>> gram(static_cast<std::size_t>(m),
                                        std::vector<double>(static_cast<std::size_t>(m)));
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b) {
      double acc = 0.0;
      for (int t = -r; t <= r; ++t) acc += std::pow(t, a + b);
      gram[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] = acc;
    }
  std::vector<double> e0(static_cast<std::size_t>(m), 0.0);
  e0[0] = 1.0;
  const auto z = detail::solve_dense(gram, e0);

  std::vector<double> weights(static_cast<std::size_t>(window));
  for (int t = -r; t <= r; ++t) {
    double w = 0.0;
    for (int j = 0; j < m; ++j) w += z[static_cast<std::size_t>(j)] * std::pow(t, j);
    weights[static_cast<std::size_t>(t + r)] = w;
  }

  const auto padded = detail::mirror_pad(x, r);
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int t = 0; t < window; ++t)
      acc += weights[static_cast<std::size_t>(t)] *
             padded[static_cast<std::size_t>(i + t)];
    out[static_cast<std::size_t>(i)] = acc;
  }
  return out;
}

// ===== Moving average and Wiener =====

inline std::vector<double> moving_average(const std::vector<double>& x, int window) {
  const int n = static_cast<int>(x.size());
  check_config(window >= 1 && window % 2 == 1, "window must be odd and positive");
  check_config(window <= n, "window does not fit the sequence");
  const int r = window / 2;
  const auto padded = detail::mirror_pad(x, r);
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int t = 0; t < window; ++t) acc += padded[static_cast<std::size_t>(i + t)];
    out[static_cast<std::size_t>(i)] = acc / window;
  }
  return out;
}

// Local-statistics adaptive filter. The noise power is estimated as the mean
// of the local variances; where the local variance does not exceed it, the
// output falls back to the local mean.
inline std::vector<double> wiener(const std::vector<double>& x, int window) {
  const int n = static_cast<int>(x.size());
  check_config(window >= 1 && window % 2 == 1, "window must be odd and positive");
  check_config(window <= n, "window does not fit the sequence");
  const int r = window / 2;
  const auto padded = detail::mirror_pad(x, r);

  std::vector<double> mean(static_cast<std::size_t>(n)), var(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double s = 0.0, s2 = 0.0;
    for (int t = 0; t < window; ++t) {
      const double v = padded[static_cast<std::size_t>(i + t)];
      s += v;
      s2 += v * v;
    }
    const double mu = s / window;
    mean[static_cast<std::size_t>(i)] = mu;
    var[static_cast<std::size_t>(i)] = std::max(s2 / window - mu * mu, 0.0);
  }
  double noise = 0.0;
  for (double v : var) noise += v;
  noise /= n;

  std::vector<double> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double mu = mean[static_cast<std::size_t>(i)];
    const double v = var[static_cast<std::size_t>(i)];
    out[static_cast<std::size_t>(i)] =
        v > noise ? mu + (1.0 - noise / v) * (x[static_cast<std::size_t>(i)] - mu) : mu;
  }
  return out;
}

// ===== Haar wavelet =====

enum class ThresholdRule { kUniversal, kFixed };

namespace detail {

// In-place orthonormal Haar DWT of a power-of-two buffer. Layout after the
// transform: [scaling | coarsest details | ... | finest details].
inline void haar_forward(std::vector<double>& buf, int levels) {
  const int padded_len = static_cast<int>(buf.size());
  check_config(padded_len >= 2 && (padded_len & (padded_len - 1)) == 0,
               "buffer length must be a power of two");
  check_config(levels >= 1 && (padded_len >> levels) >= 1,
               "levels exceed log2 of the padded length");
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  int len = padded_len;
  for (int lev = 0; lev < levels; ++lev) {
    const int half = len / 2;
    std::vector<double> tmp(static_cast<std::size_t>(len));
    for (int i = 0; i < half; ++i) {
      const double a = buf[static_cast<std::size_t>(2 * i)];
      const double b = buf[static_cast<std::size_t>(2 * i + 1)];
      tmp[static_cast<std::size_t>(i)] = (a + b) * inv_sqrt2;
      tmp[static_cast<std::size_t>(half + i)] = (a - b) * inv_sqrt2;
    }
    std::copy(tmp.begin(), tmp.end(), buf.begin());
    len = half;
  }
}

inline void haar_inverse(std::vector<double>& buf, int levels) {
  const int padded_len = static_cast<int>(buf.size());
  check_config(padded_len >= 2 && (padded_len & (padded_len - 1)) == 0,
               "buffer length must be a power of two");
  check_config(levels >= 1 && (padded_len >> levels) >= 1,
               "levels exceed log2 of the padded length");
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  int len = padded_len >> levels;
  while (len < padded_len) {
    std::vector<double> tmp(static_cast<std::size_t>(2 * len));
    for (int i = 0; i < len; ++i) {
      const double s = buf[static_cast<std::size_t>(i)];
      const double d = buf[static_cast<std::size_t>(len + i)];
      tmp[static_cast<std::size_t>(2 * i)] = (s + d) * inv_sqrt2;
      tmp[static_cast<std::size_t>(2 * i + 1)] = (s - d) * inv_sqrt2;
    }
    std::copy(tmp.begin(), tmp.end(), buf.begin());
    len *= 2;
  }
}

}  // namespace detail

// Orthonormal Haar DWT on a mirror-padded power-of-two buffer, soft threshold
// on every detail coefficient, inverse transform, crop. The universal
// threshold is sigma*sqrt(2 ln L) with sigma estimated from the median
// absolute value of the finest-level details and L the input length.
inline std::vector<double> haar_wavelet_denoise(const std::vector<double>& x, int levels,
                                                ThresholdRule rule,
                                                double fixed_threshold = 0.0) {
  const int n = static_cast<int>(x.size());
  check_config(n >= 2, "need at least 2 samples");
  check_config(levels >= 1, "need at least one decomposition level");
  check_config(fixed_threshold >= 0.0, "threshold must be nonnegative");

  int padded_len = 1;
  while (padded_len < n) padded_len <<= 1;
  check_config((padded_len >> levels) >= 1, "levels exceed log2 of the padded length");

  std::vector<double> buf(static_cast<std::size_t>(padded_len));
  std::copy(x.begin(), x.end(), buf.begin());
  for (int i = n; i < padded_len; ++i)
    buf[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(2 * n - 1 - i)];

  detail::haar_forward(buf, levels);

  double lambda = fixed_threshold;
  if (rule == ThresholdRule::kUniversal) {
    std::vector<double> finest(buf.begin() + padded_len / 2, buf.end());
    for (auto& v : finest) v = std::abs(v);
    std::sort(finest.begin(), finest.end());
    const std::size_t h = finest.size() / 2;
    const double med = finest.size() % 2 == 1
                           ? finest[h]
                           : 0.5 * (finest[h - 1] + finest[h]);
    const double sigma = med / 0.6745;
    lambda = sigma * std::sqrt(2.0 * std::log(static_cast<double>(n)));
  }

  const int scaling_len = padded_len >> levels;
  for (int i = scaling_len; i < padded_len; ++i) {
    double& d = buf[static_cast<std::size_t>(i)];
    const double mag = std::abs(d) - lambda;
    d = mag > 0.0 ? (d < 0.0 ? -mag : mag) : 0.0;
  }

  detail::haar_inverse(buf, levels);
  buf.resize(static_cast<std::size_t>(n));
  return buf;
}

// ===== PCA =====

// Mean-center the rows, project onto the top-k principal directions,
// reconstruct, re-add the mean.
inline std::vector<std::vector<double>> pca_denoise(
    const std::vector<std::vector<double>>& rows, int k) {
  const int n = static_cast<int>(rows.size());
  check_config(n >= 2, "PCA needs at least 2 rows");
  const int len = static_cast<int>(rows[0].size());
  for (const auto& r : rows)
    check_dim(static_cast<int>(r.size()) == len, "ragged row lengths");
  check_config(k >= 1 && k <= std::min(n, len), "component count out of range");

  Eigen::MatrixXd m(n, len);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < len; ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  const Eigen::RowVectorXd mu = m.colwise().mean();
  const Eigen::MatrixXd centered = m.rowwise() - mu;

  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const Eigen::MatrixXd v = svd.matrixV().leftCols(k);
  const Eigen::MatrixXd rec = (centered * v) * v.transpose();

  std::vector<std::vector<double>> out(static_cast<std::size_t>(n),
                                       std::vector<double>(static_cast<std::size_t>(len)));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < len; ++j)
      out[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = rec(i, j) + mu(j);
  return out;
}

// ===== Spec parsing and dispatch =====

enum class DenoiserKind {
  kSavitzkyGolay,
  kWiener,
  kMovingAverage,
  kHaarWavelet,
  kPca,
};

struct DenoiserSpec {
  DenoiserKind kind = DenoiserKind::kSavitzkyGolay;
  int window = 11;
  int order = 3;
  int levels = 4;
  int components = 10;
  ThresholdRule rule = ThresholdRule::kUniversal;
  double fixed_threshold = 0.0;
};

inline std::string denoiser_kind_name(DenoiserKind kind) {
  switch (kind) {
    case DenoiserKind::kSavitzkyGolay: return "savitzky_golay";
    case DenoiserKind::kWiener: return "wiener";
    case DenoiserKind::kMovingAverage: return "moving_average";
    case DenoiserKind::kHaarWavelet: return "haar_wavelet";
    case DenoiserKind::kPca: return "pca";
  }
  throw UsageError("unreachable denoiser kind");
}

// Format: "kind" or "kind:key=value,key=value". Keys must belong to the kind:
// savitzky_golay takes window/order, wiener and moving_average take window,
// haar_wavelet takes levels/rule/threshold (threshold implies rule=fixed),
// pca takes k.
inline DenoiserSpec parse_denoiser_spec(const std::string& text) {
  const auto colon = text.find(':');
  const std::string name = text.substr(0, colon);
  DenoiserSpec spec;
  if (name == "savitzky_golay") {
    spec.kind = DenoiserKind::kSavitzkyGolay;
    spec.window = 11;
  } else if (name == "wiener") {
    spec.kind = DenoiserKind::kWiener;
    spec.window = 11;
  } else if (name == "moving_average") {
    spec.kind = DenoiserKind::kMovingAverage;
    spec.window = 9;
  } else if (name == "haar_wavelet") {
    spec.kind = DenoiserKind::kHaarWavelet;
  } else if (name == "pca") {
    spec.kind = DenoiserKind::kPca;
  } else {
    throw ConfigError("unknown denoiser kind: " + name);
  }

  std::string rest = colon == std::string::npos ? "" : text.substr(colon + 1);
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    const std::string item = rest.substr(0, comma);
    rest = comma == std::string::npos ? "" : rest.substr(comma + 1);
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == item.size())
      throw ConfigError("denoiser option must look like key=value: " + item);
    const std::string key = item.substr(0, eq);
    const std::string value = item.substr(eq + 1);
    auto as_int = [&]() {
      std::size_t used = 0;
      int v = 0;
      try {
        v = std::stoi(value, &used);
      } catch (const std::exception&) {
        throw ConfigError("denoiser option " + key + " needs an integer, got " + value);
      }
      if (used != value.size())
        throw ConfigError("denoiser option " + key + " needs an integer, got " + value);
      return v;
    };
    const bool windowed = spec.kind == DenoiserKind::kSavitzkyGolay ||
                          spec.kind == DenoiserKind::kWiener ||
                          spec.kind == DenoiserKind::kMovingAverage;
    if (key == "window" && windowed) {
      spec.window = as_int();
    } else if (key == "order" && spec.kind == DenoiserKind::kSavitzkyGolay) {
      spec.order = as_int();
    } else if (key == "levels" && spec.kind == DenoiserKind::kHaarWavelet) {
      spec.levels = as_int();
    } else if (key == "rule" && spec.kind == DenoiserKind::kHaarWavelet) {
      if (value == "universal") {
        spec.rule = ThresholdRule::kUniversal;
      } else if (value == "fixed") {
        spec.rule = ThresholdRule::kFixed;
      } else {
        throw ConfigError("threshold rule must be universal or fixed, got " + value);
      }
    } else if (key == "threshold" && spec.kind == DenoiserKind::kHaarWavelet) {
      std::size_t used = 0;
      try {
        spec.fixed_threshold = std::stod(value, &used);
      } catch (const std::exception&) {
        throw ConfigError("denoiser option threshold needs a number, got " + value);
      }
      if (used != value.size())
        throw ConfigError("denoiser option threshold needs a number, got " + value);
      spec.rule = ThresholdRule::kFixed;
    } else if (key == "k" && spec.kind == DenoiserKind::kPca) {
      spec.components = as_int();
    } else {
      throw ConfigError("denoiser " + name + " does not take option " + key);
    }
  }
  return spec;
}

inline std::vector<DenoiserSpec> default_denoisers() {
  return {parse_denoiser_spec("savitzky_golay"), parse_denoiser_spec("wiener"),
          parse_denoiser_spec("moving_average"), parse_denoiser_spec("haar_wavelet"),
          parse_denoiser_spec("pca")};
}

// Applies one denoiser to a matrix of spectra (rows). PCA is a joint fit over
// all rows; the others map row by row.
inline std::vector<std::vector<double>> apply_denoiser(
    const DenoiserSpec& spec, const std::vector<std::vector<double>>& rows) {
  check_usage(!rows.empty(), "empty denoise batch");
  if (spec.kind == DenoiserKind::kPca)
    return pca_denoise(rows, std::min(spec.components,
                                      std::min(static_cast<int>(rows.size()),
                                               static_cast<int>(rows[0].size()))));
  std::vector<std::vector<double>> out;
  out.reserve(rows.size());
  for (const auto& row : rows) {
    switch (spec.kind) {
      case DenoiserKind::kSavitzkyGolay:
        out.push_back(savitzky_golay(row, spec.window, spec.order));
        break;
      case DenoiserKind::kWiener:
        out.push_back(wiener(row, spec.window));
        break;
      case DenoiserKind::kMovingAverage:
        out.push_back(moving_average(row, spec.window));
        break;
      case DenoiserKind::kHaarWavelet:
        out.push_back(
            haar_wavelet_denoise(row, spec.levels, spec.rule, spec.fixed_threshold));
        break;
      case DenoiserKind::kPca:
        break;  // handled above
    }
  }
  return out;
}

// ===== Plain cross-entropy baseline =====

// Same extractor and classifier architecture as the full model, no
// generators, no projection head, trained on cross entropy alone.
template <typename T>
struct ErmBundle {
  ModelConfig config;
  ParamRegistry<T> params;
  FeatureExtractor<T> extractor;
  LinearLayer<T> classifier;
  bool trained = false;

  ErmBundle(const ModelConfig& cfg, std::uint64_t seed) : config(cfg) {
    config.validate();
    Rng rng(mix_seed(seed, 0x45524DULL));
    extractor = FeatureExtractor<T>(params, "extractor", rng, config);
    classifier = LinearLayer<T>(params, "classifier", rng, config.d_feat(),
                                config.n_classes);
  }

  // Argmax class prediction on raw intensity rows, chunked to bound the
  // forward-pass working set.
  std::vector<int> predict(const std::vector<std::vector<double>>& rows) const {
    check_usage(trained, "predict requires a trained baseline");
    const int chunk = 64;
    std::vector<int> out;
    for (std::size_t base = 0; base < rows.size();
         base += static_cast<std::size_t>(chunk)) {
      const int b = static_cast<int>(
          std::min(static_cast<std::size_t>(chunk), rows.size() - base));
      auto x = zeros<T>({b, 1, config.axis_length});
      for (int i = 0; i < b; ++i) {
        const auto& row = rows[base + static_cast<std::size_t>(i)];
        check_dim(static_cast<int>(row.size()) == config.axis_length,
                  "spectrum length does not match model config");
        auto norm = normalize_minmax(row);
        std::copy(norm.begin(), norm.end(),
                  x->values.begin() +
                      static_cast<std::ptrdiff_t>(i) * config.axis_length);
      }
      Tape<T> tape;
      auto logits = classifier.forward(tape, extractor.forward(tape, x, Mode::kEval));
      const int c = logits->shape[1];
      for (int i = 0; i < b; ++i) {
        const T* rowv = logits->values.data() + static_cast<std::size_t>(i) * c;
        int best = 0;
        for (int j = 1; j < c; ++j)
          if (rowv[j] > rowv[best]) best = j;
        out.push_back(best);
      }
    }
    return out;
  }
};

struct ErmEpochLog {
  int epoch = 0;
  double l_task = 0.0;
  double train_accuracy = 0.0;
};

template <typename T>
struct ErmResult {
  ErmBundle<T> bundle;
  std::vector<ErmEpochLog> logs;
};

template <typename T>
ErmResult<T> train_erm_baseline(const std::vector<Spectrum>& train_set,
                                const TrainConfig& cfg) {
  detail::validate_training_inputs(train_set, cfg);

  ErmBundle<T> bundle(cfg.model, cfg.seed);
  AdamW<T> opt(typename AdamW<T>::Config{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
  Rng rng(mix_seed(cfg.seed, 0x545241494EULL));

  std::vector<int> labels;
  for (const auto& s : train_set) labels.push_back(s.strain_label);
  BalancedSampler sampler(labels, cfg.batch_size);
  const int n = static_cast<int>(train_set.size());
  const int batches_per_epoch = std::max(1, n / cfg.batch_size);

  std::vector<ErmEpochLog> logs;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    ErmEpochLog log;
    log.epoch = epoch;
    for (int b = 0; b < batches_per_epoch; ++b) {
      auto batch = sampler.next(rng);
      auto batch_labels = detail::batch_labels(train_set, batch, cfg.model.n_classes);
      bundle.params.zero_grad();
      Tape<T> tape;
      auto x = detail::batch_input<T>(train_set, batch, cfg.model.axis_length);
      auto logits =
          bundle.classifier.forward(tape, bundle.extractor.forward(tape, x, Mode::kTrain));
      auto ce = softmax_cross_entropy(tape, logits, batch_labels);
      tape.backward(ce);
      opt.step(bundle.params);
      log.l_task += static_cast<double>(ce->values[0]);
      log.train_accuracy += detail::block_accuracy(logits, batch_labels);
    }
    log.l_task /= batches_per_epoch;
    log.train_accuracy /= batches_per_epoch;
    logs.push_back(log);
  }
  bundle.trained = true;
  return ErmResult<T>{std::move(bundle), std::move(logs)};
}

}  // namespace acdg
