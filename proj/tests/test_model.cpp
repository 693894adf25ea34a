#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>
#include <vector>

#include "acdg/model.hpp"
#include "support/oracles.hpp"

using namespace acdg;

namespace {

ModelConfig tiny_config(int n_classes = 3, int L = 32) {
  auto cfg = ModelConfig::compact(n_classes, L);
  cfg.gen_ch1 = 4;
  cfg.gen_ch2 = 6;
  cfg.stem_channels = 6;
  cfg.block_plan = {{6, 1}, {8, 2}};
  cfg.d_z = 5;
  return cfg;
}

ArrayRef<double> random_input(Rng& rng, int B, int L) {
  auto x = zeros<double>({B, 1, L});
  for (auto& v : x->values) v = rng.uniform(0.0, 1.0);
  return x;
}

}  // namespace

// ===== config =====

TEST_CASE("model config validation") {
  CHECK_NOTHROW(ModelConfig::compact(9).validate());
  CHECK_NOTHROW(ModelConfig{}.validate());

  auto odd = ModelConfig::compact(9, 255);
  CHECK_THROWS_AS(odd.validate(), ConfigError);
  auto tiny = ModelConfig::compact(9, 8);
  CHECK_THROWS_AS(tiny.validate(), ConfigError);
  auto one_class = ModelConfig::compact(1);
  CHECK_THROWS_AS(one_class.validate(), ConfigError);
  auto no_gen = ModelConfig::compact(9);
  no_gen.n_generators = 0;
  CHECK_THROWS_AS(no_gen.validate(), ConfigError);
  auto bad_stride = ModelConfig::compact(9);
  bad_stride.block_plan = {{32, 3}};
  CHECK_THROWS_AS(bad_stride.validate(), ConfigError);

  CHECK(ModelConfig{}.d_feat() == 200);
  CHECK(ModelConfig::compact(9).d_feat() == 64);
}

// ===== construction =====

TEST_CASE("bundle construction is deterministic and seed-sensitive") {
  auto cfg = tiny_config();
  ModelBundle<double> a(cfg, 5), b(cfg, 5), c(cfg, 6);
  REQUIRE(a.params.items().size() == b.params.items().size());
  bool all_equal = true, any_diff_seed = false;
  for (std::size_t i = 0; i < a.params.items().size(); ++i) {
    const auto& pa = a.params.items()[i];
    const auto& pb = b.params.items()[i];
    const auto& pc = c.params.items()[i];
    CHECK(pa.name == pb.name);
    if (pa.value->values != pb.value->values) all_equal = false;
    if (pa.value->values != pc.value->values) any_diff_seed = true;
  }
  CHECK(all_equal);
  CHECK(any_diff_seed);

  // Three generators start with distinct styles.
  CHECK(a.generators.size() == 3u);
  CHECK(a.generators[0].style_mean->values != a.generators[1].style_mean->values);
  CHECK(a.generators[1].style_mean->values != a.generators[2].style_mean->values);
}

// ===== generator =====

TEST_CASE("generator preserves length for every even configuration") {
  Rng rng(11);
  for (int L : {256, 954, 32}) {
    auto cfg = tiny_config(3, L);
    ModelBundle<double> bundle(cfg, 1);
    for (int B : {1, 4}) {
      auto x = random_input(rng, B, L);
      Tape<double> tape;
      auto y = bundle.generators[0].generate(tape, x, Mode::kTrain);
      REQUIRE(y->shape == Shape{B, 1, L});
    }
  }

  // Wrong length is rejected.
  ModelBundle<double> bundle(tiny_config(3, 32), 1);
  auto bad = zeros<double>({1, 1, 30});
  Tape<double> tape;
  CHECK_THROWS_AS(bundle.generators[0].generate(tape, bad, Mode::kEval), DimensionError);
}

TEST_CASE("identity style reduces the generator to decode(encode(x))") {
  auto cfg = tiny_config(3, 32);
  ModelBundle<double> bundle(cfg, 3);
  auto& g = bundle.generators[0];
  Rng rng(21);
  auto x = random_input(rng, 1, 32);

  // Measure the encoder output statistics, then pin the style to them.
  {
    Tape<double> tape;
    auto h = g.encode(tape, x, Mode::kEval);
    Tape<double> tape2;
    auto st = channel_stats(tape2, h);
    for (int c = 0; c < cfg.gen_ch2; ++c) {
      g.style_mean->values[c] = st.mean->values[c];
      g.style_sigma_raw->values[c] = std::log(std::expm1(st.stddev->values[c]));
    }
  }
  Tape<double> t1;
  auto styled = g.generate(t1, x, Mode::kEval);
  Tape<double> t2;
  auto plain = g.decode(t2, g.encode(t2, x, Mode::kEval), Mode::kEval);
  for (long long i = 0; i < styled->size(); ++i)
    CHECK(styled->values[i] == Catch::Approx(plain->values[i]).margin(1e-6));
}

TEST_CASE("generator style gradients match finite differences") {
  auto cfg = tiny_config(3, 32);
  ModelBundle<double> bundle(cfg, 7);
  auto& g = bundle.generators[0];
  Rng rng(31);
  auto x = random_input(rng, 2, 32);

  auto loss_value = [&]() {
    Tape<double> tape;
    return mean_all(tape, g.generate(tape, x, Mode::kTrain))->values[0];
  };

  // Analytic gradients in one backward pass.
  Tape<double> tape;
  auto loss = mean_all(tape, g.generate(tape, x, Mode::kTrain));
  tape.backward(loss);

  const double h = 1e-5;
  auto fd_check = [&](const ArrayRef<double>& p, const char* name) {
    REQUIRE(p->has_grad());
    for (long long i = 0; i < p->size(); ++i) {
      const double keep = p->values[i];
      p->values[i] = keep + h;
      const double up = loss_value();
      p->values[i] = keep - h;
      const double dn = loss_value();
      p->values[i] = keep;
      const double fd = (up - dn) / (2.0 * h);
      INFO(name << "[" << i << "]");
      CHECK(oracles::grad_close(p->grad[i], fd, 1e-4));
    }
  };
  fd_check(g.style_mean, "style_mean");
  fd_check(g.style_sigma_raw, "style_sigma_raw");
  fd_check(g.out_scale, "out_scale");
  fd_check(g.out_shift, "out_shift");
  fd_check(g.dec_bn1.beta, "dec_bn1.beta");
}

// ===== extractor and heads =====

TEST_CASE("extractor output shape and Siamese weight sharing") {
  auto cfg = tiny_config(4, 32);
  ModelBundle<double> bundle(cfg, 9);
  Rng rng(41);

  auto x = random_input(rng, 3, 32);
  Tape<double> tape;
  auto feat = bundle.extract(tape, x, Mode::kEval);
  REQUIRE(feat->shape == Shape{3, cfg.d_feat()});

  // Each sample's features do not depend on its batch neighbors in eval mode.
  for (int i = 0; i < 3; ++i) {
    auto xi = zeros<double>({1, 1, 32});
    for (int j = 0; j < 32; ++j) xi->values[j] = x->values[i * 32 + j];
    Tape<double> ti;
    auto fi = bundle.extract(ti, xi, Mode::kEval);
    for (int d = 0; d < cfg.d_feat(); ++d)
      CHECK(fi->values[d] == feat->values[i * cfg.d_feat() + d]);
  }

  Tape<double> tp;
  auto z = bundle.project(tp, feat);
  REQUIRE(z->shape == Shape{3, cfg.d_z});
  for (int i = 0; i < 3; ++i) {
    double sq = 0.0;
    for (int d = 0; d < cfg.d_z; ++d) sq += z->values[i * cfg.d_z + d] * z->values[i * cfg.d_z + d];
    CHECK(std::sqrt(sq) == Catch::Approx(1.0).margin(1e-6));
  }

  Tape<double> tc;
  auto logits = bundle.classify(tc, feat);
  REQUIRE(logits->shape == Shape{3, 4});
}

TEST_CASE("eval-mode forward is bitwise deterministic") {
  auto cfg = tiny_config(3, 32);
  ModelBundle<double> bundle(cfg, 13);
  Rng rng(51);
  auto x = random_input(rng, 2, 32);

  auto run = [&]() {
    Tape<double> tape;
    auto y = bundle.generators[1].generate(tape, x, Mode::kEval);
    Tape<double> t2;
    auto f = bundle.extract(t2, x, Mode::kEval);
    std::vector<double> out = y->values;
    out.insert(out.end(), f->values.begin(), f->values.end());
    return out;
  };
  auto a = run(), b = run();
  REQUIRE(a.size() == b.size());
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

// ===== freezing =====

TEST_CASE("freeze helpers split parameters into the two alternation sides") {
  ModelBundle<double> bundle(tiny_config(), 17);
  auto frozen_count = [&]() {
    std::size_t n = 0;
    for (const auto& p : bundle.params.items())
      if (p.frozen) ++n;
    return n;
  };
  CHECK(frozen_count() == 0u);

  bundle.freeze_generators(true);
  std::size_t gen_params = frozen_count();
  CHECK(gen_params > 0u);
  for (const auto& p : bundle.params.items())
    CHECK(p.frozen == (p.name.rfind("generator", 0) == 0));

  bundle.freeze_generators(false);
  bundle.freeze_task_networks(true);
  for (const auto& p : bundle.params.items())
    CHECK(p.frozen == (p.name.rfind("generator", 0) != 0));

  bundle.freeze_task_networks(false);
  CHECK(frozen_count() == 0u);
}

// ===== denoiser =====

TEST_CASE("denoise averages the generators in eval mode") {
  auto cfg = tiny_config(3, 32);

  ModelBundle<double> bundle(cfg, 23);
  std::vector<double> raw(32);
  Rng rng(61);
  for (auto& v : raw) v = rng.uniform(0.0, 3.0);

  CHECK_THROWS_AS(bundle.denoise_values({raw}), UsageError);
  bundle.trained = true;

  auto out = bundle.denoise_values({raw, raw});
  REQUIRE(out.size() == 2u);
  REQUIRE(out[0].size() == 32u);
  CHECK(out[0] == out[1]);

  // Mean over K individual generator outputs, elementwise.
  auto norm = normalize_minmax(raw);
  auto x = zeros<double>({1, 1, 32});
  for (int j = 0; j < 32; ++j) x->values[j] = norm[j];
  std::vector<double> expect(32, 0.0);
  for (const auto& g : bundle.generators) {
    Tape<double> tape;
    auto y = g.generate(tape, x, Mode::kEval);
    for (int j = 0; j < 32; ++j) expect[j] += y->values[j];
  }
  for (auto& v : expect) v /= 3.0;
  for (int j = 0; j < 32; ++j) CHECK(out[0][j] == Catch::Approx(expect[j]).margin(1e-12));

  // K = 1: denoise is exactly that generator's output.
  auto cfg1 = tiny_config(3, 32);
  cfg1.n_generators = 1;
  ModelBundle<double> single(cfg1, 23);
  single.trained = true;
  auto o1 = single.denoise_values({raw})[0];
  Tape<double> tape;
  auto y1 = single.generators[0].generate(tape, x, Mode::kEval);
  for (int j = 0; j < 32; ++j) CHECK(o1[j] == Catch::Approx(y1->values[j]).margin(1e-12));

  // Spectrum wrapper keeps metadata.
  Spectrum s;
  s.intensities = raw;
  s.strain_label = 2;
  s.condition_s = 0.1;
  s.sample_id = 77;
  auto ds = bundle.denoise(s);
  CHECK(ds.strain_label == 2);
  CHECK(ds.condition_s == 0.1);
  CHECK(ds.sample_id == 77);
  CHECK(ds.intensities == out[0]);

  std::vector<double> short_vec(31, 0.5);
  CHECK_THROWS_AS(bundle.denoise_values({short_vec}), DimensionError);
}
