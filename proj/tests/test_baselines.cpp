#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "acdg/baselines.hpp"
#include "acdg/rng.hpp"
#include "support/oracles.hpp"

using namespace acdg;

namespace {

std::vector<double> random_sequence(Rng& rng, int n) {
  std::vector<double> x(static_cast<std::size_t>(n));
  for (auto& v : x) v = rng.uniform(-2.0, 2.0);
  return x;
}

double mse(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return acc / static_cast<double>(a.size());
}

ModelConfig tiny_model() {
  ModelConfig m;
  m.axis_length = 32;
  m.n_classes = 3;
  m.n_generators = 2;
  m.gen_ch1 = 4;
  m.gen_ch2 = 6;
  m.stem_channels = 6;
  m.block_plan = {{6, 1}, {8, 2}};
  m.d_z = 5;
  return m;
}

std::vector<Spectrum> bump_fixture(int per_class, std::uint64_t seed = 7) {
  Rng rng(seed);
  const int L = 32, n_classes = 3;
  std::vector<Spectrum> out;
  long long id = 0;
  for (int c = 0; c < n_classes; ++c) {
    const double center = (c + 1) * L / static_cast<double>(n_classes + 1);
    for (int r = 0; r < per_class; ++r) {
      Spectrum s;
      s.strain_label = c;
      s.condition_s = 1.0;
      s.sample_id = id++;
      s.intensities.resize(L);
      for (int j = 0; j < L; ++j) {
        const double d = j - center;
        s.intensities[j] = std::exp(-d * d / 18.0) * (0.9 + 0.2 * rng.uniform()) +
                           0.05 * rng.uniform();
      }
      out.push_back(std::move(s));
    }
  }
  return out;
}

}  // namespace

// ===== Savitzky-Golay =====

TEST_CASE("savitzky_golay reproduces polynomials up to its order") {
  const int n = 41, window = 11, order = 3;
  for (int degree = 0; degree <= order; ++degree) {
    std::vector<double> x(n);
    for (int i = 0; i < n; ++i) {
      const double t = (i - 20) / 10.0;
      double v = 0.0;
      for (int d = 0; d <= degree; ++d) v += (d + 1) * std::pow(t, d);
      x[static_cast<std::size_t>(i)] = v;
    }
    auto y = savitzky_golay(x, window, order);
    REQUIRE(y.size() == x.size());
    for (int i = window / 2; i < n - window / 2; ++i) {
      INFO("degree " << degree << " index " << i);
      CHECK(y[static_cast<std::size_t>(i)] ==
            Catch::Approx(x[static_cast<std::size_t>(i)]).margin(1e-9));
    }
  }

  // Constants survive the mirrored edges too.
  std::vector<double> c(17, 3.5);
  auto yc = savitzky_golay(c, 5, 2);
  for (double v : yc) CHECK(v == Catch::Approx(3.5).margin(1e-12));
}

TEST_CASE("savitzky_golay matches a per-window least-squares oracle") {
  const std::vector<double> pinned = {1, 2, 4, 8, 16, 32, 64};
  auto y = savitzky_golay(pinned, 5, 2);
  for (int i = 2; i <= 4; ++i) {
    std::vector<double> window(pinned.begin() + i - 2, pinned.begin() + i + 3);
    CHECK(y[static_cast<std::size_t>(i)] ==
          Catch::Approx(oracles::sg_window_fit(window, 2)).margin(1e-9));
  }

  Rng rng(17);
  auto x = random_sequence(rng, 25);
  auto smoothed = savitzky_golay(x, 7, 3);
  for (int i = 3; i < 22; ++i) {
    std::vector<double> window(x.begin() + i - 3, x.begin() + i + 4);
    CHECK(smoothed[static_cast<std::size_t>(i)] ==
          Catch::Approx(oracles::sg_window_fit(window, 3)).margin(1e-9));
  }
}

TEST_CASE("savitzky_golay rejects bad configurations") {
  std::vector<double> x(10, 1.0);
  CHECK_THROWS_AS(savitzky_golay(x, 4, 2), ConfigError);   // even window
  CHECK_THROWS_AS(savitzky_golay(x, 5, 5), ConfigError);   // order too high
  CHECK_THROWS_AS(savitzky_golay(x, 11, 3), ConfigError);  // window > length
  CHECK_THROWS_AS(savitzky_golay(x, -3, 1), ConfigError);
}

// ===== Moving average and Wiener =====

TEST_CASE("moving_average matches the pinned mirror-padded example") {
  auto y = moving_average({1, 2, 3}, 3);
  REQUIRE(y.size() == 3);
  CHECK(y[0] == Catch::Approx(4.0 / 3.0).margin(1e-15));
  CHECK(y[1] == Catch::Approx(2.0).margin(1e-15));
  CHECK(y[2] == Catch::Approx(8.0 / 3.0).margin(1e-15));

  std::vector<double> c(9, -2.25);
  auto yc = moving_average(c, 9);
  for (double v : yc) CHECK(v == Catch::Approx(-2.25).margin(1e-15));

  auto identity = moving_average({5, 6, 7}, 1);
  CHECK(identity == std::vector<double>{5, 6, 7});

  CHECK_THROWS_AS(moving_average({1, 2, 3}, 5), ConfigError);
  CHECK_THROWS_AS(moving_average({1, 2, 3}, 2), ConfigError);
}

TEST_CASE("wiener passes constants through and attenuates noise") {
  std::vector<double> c(21, 4.0);
  CHECK(wiener(c, 5) == c);

  Rng rng(23);
  std::vector<double> noisy(101), clean(101);
  for (int i = 0; i < 101; ++i) {
    clean[static_cast<std::size_t>(i)] = std::sin(i * 0.06);
    noisy[static_cast<std::size_t>(i)] =
        clean[static_cast<std::size_t>(i)] + 0.15 * rng.normal();
  }
  auto filtered = wiener(noisy, 11);
  REQUIRE(filtered.size() == noisy.size());
  CHECK(mse(filtered, clean) < mse(noisy, clean));
  for (double v : filtered) CHECK(std::isfinite(v));

  CHECK_THROWS_AS(wiener({1, 2}, 3), ConfigError);
  CHECK_THROWS_AS(wiener(c, 4), ConfigError);
}

// ===== Haar wavelet =====

TEST_CASE("haar transform agrees with the direct orthogonal matrix") {
  auto w = oracles::haar_matrix_8();
  // The oracle matrix is orthonormal.
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) {
      double dot = 0.0;
      for (int k = 0; k < 8; ++k) dot += w[i][k] * w[j][k];
      CHECK(dot == Catch::Approx(i == j ? 1.0 : 0.0).margin(1e-12));
    }

  Rng rng(29);
  auto x = random_sequence(rng, 8);
  std::vector<double> coeffs(8, 0.0);
  for (int i = 0; i < 8; ++i)
    for (int k = 0; k < 8; ++k) coeffs[static_cast<std::size_t>(i)] += w[i][k] * x[static_cast<std::size_t>(k)];

  auto buf = x;
  detail::haar_forward(buf, 3);
  for (int i = 0; i < 8; ++i)
    CHECK(buf[static_cast<std::size_t>(i)] ==
          Catch::Approx(coeffs[static_cast<std::size_t>(i)]).margin(1e-12));

  detail::haar_inverse(buf, 3);
  for (int i = 0; i < 8; ++i)
    CHECK(buf[static_cast<std::size_t>(i)] ==
          Catch::Approx(x[static_cast<std::size_t>(i)]).margin(1e-12));
}

TEST_CASE("haar denoising reconstructs exactly at zero threshold") {
  Rng rng(31);
  for (auto [n, levels] : std::vector<std::pair<int, int>>{{8, 3}, {11, 4}, {200, 4}, {954, 4}}) {
    auto x = random_sequence(rng, n);
    auto y = haar_wavelet_denoise(x, levels, ThresholdRule::kFixed, 0.0);
    REQUIRE(y.size() == x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
      CHECK(y[i] == Catch::Approx(x[i]).margin(1e-10));
  }
}

TEST_CASE("haar denoising leaves constants alone and shrinks noise") {
  std::vector<double> c(30, 1.75);
  auto yc = haar_wavelet_denoise(c, 4, ThresholdRule::kUniversal);
  for (double v : yc) CHECK(v == Catch::Approx(1.75).margin(1e-12));

  Rng rng(37);
  std::vector<double> clean(256), noisy(256);
  for (int i = 0; i < 256; ++i) {
    clean[static_cast<std::size_t>(i)] = std::sin(i * 0.05) + 0.5 * std::sin(i * 0.013);
    noisy[static_cast<std::size_t>(i)] =
        clean[static_cast<std::size_t>(i)] + 0.2 * rng.normal();
  }
  auto den = haar_wavelet_denoise(noisy, 4, ThresholdRule::kUniversal);
  CHECK(mse(den, clean) < mse(noisy, clean));

  // Purity: same inputs, same outputs.
  CHECK(den == haar_wavelet_denoise(noisy, 4, ThresholdRule::kUniversal));
}

TEST_CASE("haar denoising validates levels") {
  std::vector<double> x(8, 0.0);
  CHECK_THROWS_AS(haar_wavelet_denoise(x, 4, ThresholdRule::kFixed, 0.0), ConfigError);
  CHECK_THROWS_AS(haar_wavelet_denoise(x, 0, ThresholdRule::kFixed, 0.0), ConfigError);
  CHECK_THROWS_AS(haar_wavelet_denoise({1.0}, 1, ThresholdRule::kFixed, 0.0),
                  ConfigError);
  CHECK_THROWS_AS(haar_wavelet_denoise(x, 1, ThresholdRule::kFixed, -0.5), ConfigError);
  CHECK_NOTHROW(haar_wavelet_denoise(x, 3, ThresholdRule::kFixed, 0.0));
}

// ===== PCA =====

TEST_CASE("pca_denoise reconstructs exactly with enough components") {
  Rng rng(41);

  // Rank-1 data.
  std::vector<double> u(6), v(12);
  for (auto& a : u) a = rng.uniform(0.5, 2.0);
  for (auto& a : v) a = rng.uniform(-1.0, 1.0);
  std::vector<std::vector<double>> rank1(6, std::vector<double>(12));
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 12; ++j) rank1[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = u[static_cast<std::size_t>(i)] * v[static_cast<std::size_t>(j)];
  auto rec1 = pca_denoise(rank1, 1);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 12; ++j)
      CHECK(rec1[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] ==
            Catch::Approx(rank1[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]).margin(1e-10));

  // Random data: centering drops one rank, so n-1 components are exact; the
  // maximal k is also exact.
  std::vector<std::vector<double>> x(6);
  for (auto& row : x) row = random_sequence(rng, 10);
  for (int k : {5, 6}) {
    auto rec = pca_denoise(x, k);
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 10; ++j)
        CHECK(rec[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] ==
              Catch::Approx(x[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]).margin(1e-8));
  }
}

TEST_CASE("pca_denoise error decreases monotonically in k") {
  Rng rng(43);
  std::vector<std::vector<double>> x(8);
  for (auto& row : x) row = random_sequence(rng, 12);
  double prev = 1e300;
  for (int k = 1; k <= 8; ++k) {
    auto rec = pca_denoise(x, k);
    double err = 0.0;
    for (int i = 0; i < 8; ++i) err += mse(rec[static_cast<std::size_t>(i)], x[static_cast<std::size_t>(i)]);
    CHECK(err <= prev + 1e-12);
    prev = err;
  }
}

TEST_CASE("pca_denoise validates its inputs") {
  std::vector<std::vector<double>> x(4, std::vector<double>(6, 1.0));
  CHECK_THROWS_AS(pca_denoise(x, 0), ConfigError);
  CHECK_THROWS_AS(pca_denoise(x, 5), ConfigError);
  CHECK_THROWS_AS(pca_denoise({{1.0, 2.0}}, 1), ConfigError);
  auto ragged = x;
  ragged[2].pop_back();
  CHECK_THROWS_AS(pca_denoise(ragged, 2), DimensionError);
}

// ===== Spec parsing and dispatch =====

TEST_CASE("denoiser specs parse with kind-specific defaults and options") {
  auto sg = parse_denoiser_spec("savitzky_golay");
  CHECK(sg.kind == DenoiserKind::kSavitzkyGolay);
  CHECK(sg.window == 11);
  CHECK(sg.order == 3);

  auto wi = parse_denoiser_spec("wiener");
  CHECK(wi.kind == DenoiserKind::kWiener);
  CHECK(wi.window == 11);

  auto ma = parse_denoiser_spec("moving_average");
  CHECK(ma.kind == DenoiserKind::kMovingAverage);
  CHECK(ma.window == 9);

  auto hw = parse_denoiser_spec("haar_wavelet");
  CHECK(hw.kind == DenoiserKind::kHaarWavelet);
  CHECK(hw.levels == 4);
  CHECK(hw.rule == ThresholdRule::kUniversal);

  auto pc = parse_denoiser_spec("pca");
  CHECK(pc.kind == DenoiserKind::kPca);
  CHECK(pc.components == 10);

  auto custom = parse_denoiser_spec("savitzky_golay:window=7,order=2");
  CHECK(custom.window == 7);
  CHECK(custom.order == 2);

  auto fixed = parse_denoiser_spec("haar_wavelet:threshold=0.25");
  CHECK(fixed.rule == ThresholdRule::kFixed);
  CHECK(fixed.fixed_threshold == 0.25);
  CHECK(parse_denoiser_spec("haar_wavelet:rule=fixed").rule == ThresholdRule::kFixed);
  CHECK(parse_denoiser_spec("pca:k=3").components == 3);

  CHECK(default_denoisers().size() == 5);

  CHECK_THROWS_AS(parse_denoiser_spec("median"), ConfigError);
  CHECK_THROWS_AS(parse_denoiser_spec("wiener:order=3"), ConfigError);
  CHECK_THROWS_AS(parse_denoiser_spec("pca:k=ten"), ConfigError);
  CHECK_THROWS_AS(parse_denoiser_spec("savitzky_golay:window"), ConfigError);
  CHECK_THROWS_AS(parse_denoiser_spec("haar_wavelet:rule=sometimes"), ConfigError);
  CHECK_THROWS_AS(parse_denoiser_spec("pca:k=3,q=1"), ConfigError);
}

TEST_CASE("apply_denoiser dispatches per row except for the joint PCA fit") {
  Rng rng(47);
  std::vector<std::vector<double>> rows(4);
  for (auto& r : rows) r = random_sequence(rng, 33);

  for (const char* text : {"savitzky_golay", "wiener", "moving_average:window=5",
                           "haar_wavelet"}) {
    auto spec = parse_denoiser_spec(text);
    auto out = apply_denoiser(spec, rows);
    REQUIRE(out.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      REQUIRE(out[i].size() == rows[i].size());
      for (double v : out[i]) CHECK(std::isfinite(v));
      // Row independence: the same row alone produces the same output.
      auto solo = apply_denoiser(spec, {rows[i]});
      CHECK(solo[0] == out[i]);
    }
  }

  // PCA clamps the default component count to the feasible range.
  auto joint = apply_denoiser(parse_denoiser_spec("pca"), rows);
  auto direct = pca_denoise(rows, 4);
  for (std::size_t i = 0; i < rows.size(); ++i) CHECK(joint[i] == direct[i]);
}

// ===== Plain cross-entropy baseline =====

TEST_CASE("erm baseline mirrors the extractor and classifier parameters exactly") {
  auto cfg = tiny_model();
  ModelBundle<float> full(cfg, 1);
  ErmBundle<float> erm(cfg, 1);

  long long full_subset = 0;
  for (const auto& p : full.params.items())
    if (p.trainable &&
        (p.name.rfind("extractor", 0) == 0 || p.name.rfind("classifier", 0) == 0))
      full_subset += p.value->size();
  long long erm_total = 0;
  for (const auto& p : erm.params.items())
    if (p.trainable) erm_total += p.value->size();
  CHECK(full_subset == erm_total);
  for (const auto& p : erm.params.items()) {
    CHECK((p.name.rfind("extractor", 0) == 0 || p.name.rfind("classifier", 0) == 0));
    const auto* match = full.params.find(p.name);
    REQUIRE(match != nullptr);
    CHECK((*match).value->shape == p.value->shape);
  }
}

TEST_CASE("erm baseline trains deterministically and fits the fixture") {
  auto data = bump_fixture(8);
  TrainConfig cfg;
  cfg.model = tiny_model();
  cfg.lr = 3e-3;
  cfg.epochs = 25;
  cfg.seed = 11;

  auto r1 = train_erm_baseline<float>(data, cfg);
  auto r2 = train_erm_baseline<float>(data, cfg);
  CHECK(hash_params(r1.bundle.params) == hash_params(r2.bundle.params));
  REQUIRE(r1.logs.size() == 25);
  CHECK(r1.logs.back().train_accuracy >= 0.95);
  CHECK(r1.logs.back().l_task < r1.logs.front().l_task);

  cfg.seed = 12;
  auto r3 = train_erm_baseline<float>(data, cfg);
  CHECK(hash_params(r1.bundle.params) != hash_params(r3.bundle.params));

  // Predictions on the training rows recover the labels.
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  for (const auto& s : data) {
    rows.push_back(s.intensities);
    labels.push_back(s.strain_label);
  }
  auto pred = r1.bundle.predict(rows);
  REQUIRE(pred.size() == labels.size());
  int hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == labels[i] ? 1 : 0;
  CHECK(static_cast<double>(hits) / static_cast<double>(pred.size()) >= 0.9);
}

TEST_CASE("erm baseline enforces the training preconditions") {
  TrainConfig cfg;
  cfg.model = tiny_model();
  cfg.epochs = 1;
  CHECK_THROWS_AS(train_erm_baseline<float>({}, cfg), ConfigError);

  ErmBundle<float> untrained(tiny_model(), 3);
  CHECK_THROWS_AS(untrained.predict({{1.0, 2.0}}), UsageError);

  auto data = bump_fixture(4);
  auto trained = train_erm_baseline<float>(data, cfg);
  CHECK_THROWS_AS(trained.bundle.predict({{1.0, 2.0}}), DimensionError);
}
