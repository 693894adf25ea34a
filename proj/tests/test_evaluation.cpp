#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "acdg/evaluation.hpp"

using namespace acdg;

namespace {

ModelConfig tiny_model() {
  ModelConfig m;
  m.axis_length = 64;
  m.n_classes = 3;
  m.n_generators = 2;
  m.gen_ch1 = 4;
  m.gen_ch2 = 6;
  m.stem_channels = 6;
  m.block_plan = {{6, 1}, {8, 2}};
  m.d_z = 5;
  return m;
}

TrainConfig tiny_train(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.model = tiny_model();
  cfg.lr = 3e-3;
  cfg.batch_size = 12;
  cfg.epochs = 6;
  cfg.seed = seed;
  return cfg;
}

struct EvalFixture {
  DomainDataset ds;
  TaskSplit split;
  TrainResult<float> acdg;
  ErmResult<float> erm;
  Bands bands;
};

const EvalFixture& fixture() {
  static EvalFixture f = [] {
    const auto axis = Axis::make_default(64);
    const auto profiles = make_profiles(5, 3, axis);
    auto ds = build_dataset(profiles, axis, {0.1, 1.0, 10.0}, 8, 5);
    auto split = split_task(ds, 0.1, 0.5, 3);
    auto acdg = train<float>(split.train, tiny_train(3));
    auto erm = train_erm_baseline<float>(split.train, tiny_train(3));
    return EvalFixture{std::move(ds), std::move(split), std::move(acdg),
                       std::move(erm), Bands{}};
  }();
  return f;
}

std::string scratch_path(const std::string& leaf) {
  auto d = std::filesystem::temp_directory_path() / "acdg_eval_tests";
  std::filesystem::create_directories(d);
  return (d / leaf).string();
}

ConfusionMatrix cm_from(std::vector<std::vector<long long>> counts) {
  ConfusionMatrix cm(static_cast<int>(counts.size()));
  cm.counts = std::move(counts);
  return cm;
}

}  // namespace

// ===== Confusion matrix =====

TEST_CASE("confusion tallies predictions against labels") {
  auto perfect = confusion({0, 1, 2, 1}, {0, 1, 2, 1}, 3);
  CHECK(perfect.total() == 4);
  for (int t = 0; t < 3; ++t)
    for (int p = 0; p < 3; ++p)
      CHECK(perfect.counts[t][p] == (t == p ? (t == 1 ? 2 : 1) : 0));

  auto cm = confusion({0, 0, 0, 1}, {0, 0, 1, 1}, 2);
  CHECK(cm.counts == std::vector<std::vector<long long>>{{2, 0}, {1, 1}});
  CHECK(cm.total() == 4);

  CHECK_THROWS_AS(confusion({0, 1}, {0}, 2), DimensionError);
  CHECK_THROWS_AS(confusion({0, 2}, {0, 1}, 2), UsageError);
  CHECK_THROWS_AS(confusion({0, -1}, {0, 1}, 2), UsageError);
  CHECK_THROWS_AS(confusion({0, 1}, {0, 2}, 2), UsageError);
  CHECK_THROWS_AS(confusion({}, {}, 0), ConfigError);
}

TEST_CASE("confusion matrices add cell by cell") {
  auto a = confusion({0, 1}, {0, 0}, 2);  // [[1,1],[0,0]]
  auto b = confusion({1, 1}, {1, 0}, 2);  // [[0,1],[0,1]]
  auto sum = a;
  sum += b;
  CHECK(sum.counts == std::vector<std::vector<long long>>{{1, 2}, {0, 1}});

  ConfusionMatrix wrong(3);
  CHECK_THROWS_AS(sum += wrong, DimensionError);
}

// ===== Metrics =====

TEST_CASE("metrics match the hand-computed confusion values") {
  auto m = metrics(cm_from({{2, 0}, {1, 1}}));
  CHECK(m.accuracy == Catch::Approx(0.75).margin(1e-12));
  CHECK(m.macro_f1 == Catch::Approx(0.7333).margin(1e-4));
  CHECK(m.macro_specificity == Catch::Approx(0.75).margin(1e-12));
  CHECK(m.macro_precision == Catch::Approx(5.0 / 6.0).margin(1e-12));
  CHECK(m.macro_recall == Catch::Approx(0.75).margin(1e-12));
  CHECK(m.undefined_flags == 0);

  auto per_class = per_class_metrics(cm_from({{2, 0}, {1, 1}}));
  CHECK(per_class[0].f1 == Catch::Approx(0.8).margin(1e-12));
  CHECK(per_class[1].f1 == Catch::Approx(2.0 / 3.0).margin(1e-12));

  auto diag = metrics(cm_from({{3, 0, 0}, {0, 2, 0}, {0, 0, 5}}));
  CHECK(diag.accuracy == 1.0);
  CHECK(diag.macro_precision == 1.0);
  CHECK(diag.macro_recall == 1.0);
  CHECK(diag.macro_specificity == 1.0);
  CHECK(diag.macro_f1 == 1.0);
  CHECK(diag.undefined_flags == 0);
}

TEST_CASE("undefined metric ratios contribute zero and are counted") {
  // Only class 1 ever appears: class 0 has undefined precision, recall, F1;
  // class 1 has undefined specificity.
  auto m = metrics(cm_from({{0, 0}, {0, 4}}));
  CHECK(m.accuracy == 1.0);
  CHECK(m.undefined_flags == 4);
  CHECK(m.macro_precision == 0.5);
  CHECK(m.macro_recall == 0.5);
  CHECK(m.macro_specificity == 0.5);
  CHECK(m.macro_f1 == 0.5);

  CHECK_THROWS_AS(metrics(cm_from({{0, 0}, {0, 0}})), UsageError);
}

TEST_CASE("metrics are invariant under class relabeling and sample order") {
  auto cm = cm_from({{5, 2, 1}, {0, 7, 3}, {2, 2, 9}});
  // sigma maps class c to (c+1) mod 3.
  ConfusionMatrix permuted(3);
  for (int t = 0; t < 3; ++t)
    for (int p = 0; p < 3; ++p)
      permuted.counts[(t + 1) % 3][(p + 1) % 3] = cm.counts[t][p];

  const auto base = per_class_metrics(cm);
  const auto perm = per_class_metrics(permuted);
  for (int c = 0; c < 3; ++c) {
    CHECK(perm[(c + 1) % 3].precision == base[c].precision);
    CHECK(perm[(c + 1) % 3].recall == base[c].recall);
    CHECK(perm[(c + 1) % 3].specificity == base[c].specificity);
    CHECK(perm[(c + 1) % 3].f1 == base[c].f1);
  }
  const auto ma = metrics(cm);
  const auto mb = metrics(permuted);
  CHECK(ma.accuracy == Catch::Approx(mb.accuracy).margin(1e-12));
  CHECK(ma.macro_f1 == Catch::Approx(mb.macro_f1).margin(1e-12));
  CHECK(ma.macro_precision == Catch::Approx(mb.macro_precision).margin(1e-12));

  // Reordering (preds, labels) jointly cannot change the tally.
  std::vector<int> preds = {0, 1, 2, 2, 1, 0, 0}, labels = {0, 1, 1, 2, 1, 2, 0};
  std::vector<int> rp(preds.rbegin(), preds.rend()), rl(labels.rbegin(), labels.rend());
  CHECK(confusion(preds, labels, 3) == confusion(rp, rl, 3));
}

TEST_CASE("pooled confusion equals the sum of the per-group confusions") {
  Rng rng(11);
  std::vector<std::vector<int>> group_preds(3), group_labels(3);
  std::vector<int> all_preds, all_labels;
  for (int g = 0; g < 3; ++g) {
    for (int i = 0; i < 20; ++i) {
      group_preds[g].push_back(static_cast<int>(rng.uniform_int(0, 3)));
      group_labels[g].push_back(static_cast<int>(rng.uniform_int(0, 3)));
    }
    all_preds.insert(all_preds.end(), group_preds[g].begin(), group_preds[g].end());
    all_labels.insert(all_labels.end(), group_labels[g].begin(), group_labels[g].end());
  }
  ConfusionMatrix sum(4);
  for (int g = 0; g < 3; ++g) sum += confusion(group_preds[g], group_labels[g], 4);
  const auto pooled = confusion(all_preds, all_labels, 4);
  CHECK(pooled == sum);
  CHECK(metrics(pooled).macro_f1 == metrics(sum).macro_f1);
}

// ===== Task evaluation =====

TEST_CASE("evaluate_task fills both reports over the identical protocol") {
  const auto& f = fixture();
  const auto acdg = evaluate_task(f.acdg.bundle, f.split, f.ds.axis, f.bands);
  const auto erm = evaluate_task(f.erm.bundle, f.split, f.ds.axis, f.bands);

  CHECK(acdg.task_id == "s0.1");
  CHECK(acdg.method == "acdg");
  CHECK(erm.method == "erm");
  CHECK(acdg.source_condition == 0.1);
  CHECK(acdg.train_fraction == 0.5);

  // Identical sample counts between the two methods.
  CHECK(acdg.intra.count == erm.intra.count);
  CHECK(acdg.intra.count == 12);
  REQUIRE(acdg.inter.size() == 2);
  REQUIRE(erm.inter.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(acdg.inter[i].condition == erm.inter[i].condition);
    CHECK(acdg.inter[i].cell.count == erm.inter[i].cell.count);
    CHECK(acdg.inter[i].cell.count == 24);
  }
  CHECK(acdg.inter_pooled.count == 48);

  // Pooled cell is the concatenation: its confusion is the per-condition sum.
  ConfusionMatrix sum(3);
  for (const auto& c : acdg.inter) sum += c.cell.cm;
  CHECK(acdg.inter_pooled.cm == sum);
  CHECK(acdg.inter_pooled.metric.accuracy == metrics(sum).accuracy);

  // SNR table: one row per condition and method, every value finite.
  CHECK(acdg.snr.size() == 3 * 7);  // raw + acdg + five classical
  CHECK(erm.snr.size() == 3 * 6);   // no generative row
  int acdg_rows = 0;
  for (const auto& s : acdg.snr) {
    CHECK(std::isfinite(s.mean_snr_db));
    CHECK(s.count == (s.condition == 0.1 ? 12 : 24));
    acdg_rows += s.method == "acdg" ? 1 : 0;
  }
  CHECK(acdg_rows == 3);
  for (const auto& s : erm.snr) CHECK(s.method != "acdg");
}

TEST_CASE("evaluate_task validates model, axis, and labels") {
  const auto& f = fixture();
  CHECK_THROWS_AS(evaluate_task(f.acdg.bundle, f.split, Axis::make_default(32), f.bands),
                  DimensionError);

  ModelBundle<float> untrained(tiny_model(), 1);
  CHECK_THROWS_AS(evaluate_task(untrained, f.split, f.ds.axis, f.bands), UsageError);
  ErmBundle<float> untrained_erm(tiny_model(), 1);
  CHECK_THROWS_AS(evaluate_task(untrained_erm, f.split, f.ds.axis, f.bands), UsageError);

  auto bad = f.split;
  bad.intra_test[0].strain_label = 7;
  CHECK_THROWS_AS(evaluate_task(f.acdg.bundle, bad, f.ds.axis, f.bands), ConfigError);
}

TEST_CASE("evaluation is reproducible and independent of the worker count") {
  const auto& f = fixture();
  setenv("ACDG_THREADS", "1", 1);
  const auto serial = evaluate_task(f.acdg.bundle, f.split, f.ds.axis, f.bands);
  setenv("ACDG_THREADS", "3", 1);
  const auto threaded = evaluate_task(f.acdg.bundle, f.split, f.ds.axis, f.bands);
  unsetenv("ACDG_THREADS");
  CHECK(detail::task_report_to_json(serial).dump() ==
        detail::task_report_to_json(threaded).dump());

  setenv("ACDG_THREADS", "4", 1);
  CHECK(detail::eval_workers() == 4);
  setenv("ACDG_THREADS", "abc", 1);
  CHECK_THROWS_AS(detail::eval_workers(), ConfigError);
  setenv("ACDG_THREADS", "0", 1);
  CHECK_THROWS_AS(detail::eval_workers(), ConfigError);
  setenv("ACDG_THREADS", "2x", 1);
  CHECK_THROWS_AS(detail::eval_workers(), ConfigError);
  unsetenv("ACDG_THREADS");
  CHECK(detail::eval_workers() >= 1);
}

// ===== Protocol =====

TEST_CASE("run_protocol trains and evaluates both methods per task and seed") {
  const auto axis = Axis::make_default(64);
  const auto profiles = make_profiles(5, 3, axis);
  const auto ds = build_dataset(profiles, axis, {0.1, 1.0}, 8, 5);

  ProtocolConfig cfg;
  cfg.train = tiny_train(0);
  cfg.train.epochs = 4;
  cfg.train_fraction = 0.5;
  cfg.source_conditions = {0.1};

  const auto report = run_protocol(ds, cfg, {1, 2});
  REQUIRE(report.runs.size() == 2);
  CHECK(report.runs[0].seed == 1);
  CHECK(report.runs[1].seed == 2);
  for (const auto& run : report.runs) {
    CHECK(run.acdg.method == "acdg");
    CHECK(run.erm.method == "erm");
    CHECK(run.acdg.task_id == "s0.1");
    CHECK(run.acdg.inter_pooled.count == run.erm.inter_pooled.count);
  }

  // Aggregate mean over seeds, population deviation.
  bool found = false;
  for (const auto& row : report.aggregate) {
    if (row.task_id == "s0.1" && row.method == "acdg" && row.eval_s == "pooled" &&
        row.metric == "accuracy") {
      found = true;
      const double a = report.runs[0].acdg.inter_pooled.metric.accuracy;
      const double b = report.runs[1].acdg.inter_pooled.metric.accuracy;
      CHECK(row.mean == Catch::Approx(0.5 * (a + b)).margin(1e-12));
      CHECK(row.stddev == Catch::Approx(0.5 * std::abs(a - b)).margin(1e-12));
      CHECK(row.n == 2);
    }
  }
  CHECK(found);

  // SNR aggregates carry every method at every condition.
  int raw_rows = 0;
  for (const auto& row : report.aggregate)
    raw_rows += (row.method == "raw" && row.metric == "mean_snr_db") ? 1 : 0;
  CHECK(raw_rows == 2);

  // Deterministic given the seed list.
  const auto again = run_protocol(ds, cfg, {1, 2});
  const auto p1 = scratch_path("protocol_a.json");
  const auto p2 = scratch_path("protocol_b.json");
  save_protocol_report_json(report, p1);
  save_protocol_report_json(again, p2);
  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  const std::string s1((std::istreambuf_iterator<char>(f1)), {});
  const std::string s2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(s1 == s2);
  CHECK(!s1.empty());

  CHECK_THROWS_AS(run_protocol(ds, cfg, {}), ConfigError);
}

// ===== Serialization =====

TEST_CASE("task reports round-trip through JSON") {
  const auto& f = fixture();
  const auto rep = evaluate_task(f.acdg.bundle, f.split, f.ds.axis, f.bands);
  const auto path = scratch_path("task_report.json");
  save_task_report_json(rep, path);
  const auto back = load_task_report_json(path);

  CHECK(back.task_id == rep.task_id);
  CHECK(back.method == rep.method);
  CHECK(back.source_condition == rep.source_condition);
  CHECK(back.train_fraction == rep.train_fraction);
  CHECK(back.intra.count == rep.intra.count);
  CHECK(back.intra.cm == rep.intra.cm);
  CHECK(back.intra.metric.macro_f1 == rep.intra.metric.macro_f1);
  REQUIRE(back.inter.size() == rep.inter.size());
  for (std::size_t i = 0; i < rep.inter.size(); ++i) {
    CHECK(back.inter[i].condition == rep.inter[i].condition);
    CHECK(back.inter[i].cell.cm == rep.inter[i].cell.cm);
  }
  CHECK(back.inter_pooled.cm == rep.inter_pooled.cm);
  REQUIRE(back.snr.size() == rep.snr.size());
  for (std::size_t i = 0; i < rep.snr.size(); ++i) {
    CHECK(back.snr[i].method == rep.snr[i].method);
    CHECK(back.snr[i].mean_snr_db == rep.snr[i].mean_snr_db);
    CHECK(back.snr[i].count == rep.snr[i].count);
  }
  CHECK(detail::task_report_to_json(back).dump() ==
        detail::task_report_to_json(rep).dump());
}

TEST_CASE("report loaders reject malformed files") {
  const auto& f = fixture();
  const auto rep = evaluate_task(f.erm.bundle, f.split, f.ds.axis, f.bands);
  const auto path = scratch_path("tamper.json");

  CHECK_THROWS_AS(load_task_report_json(scratch_path("missing.json")), IoError);

  auto j = detail::task_report_to_json(rep);
  j["format"] = "something-else";
  detail::write_text_file(j.dump(), path, "test");
  CHECK_THROWS_AS(load_task_report_json(path), SchemaError);

  j = detail::task_report_to_json(rep);
  j["version"] = 2;
  detail::write_text_file(j.dump(), path, "test");
  CHECK_THROWS_AS(load_task_report_json(path), SchemaError);

  j = detail::task_report_to_json(rep);
  j["intra"]["count"] = j["intra"]["count"].get<long long>() + 1;
  detail::write_text_file(j.dump(), path, "test");
  CHECK_THROWS_AS(load_task_report_json(path), SchemaError);

  j = detail::task_report_to_json(rep);
  j["intra"]["confusion"][0].erase(0);
  detail::write_text_file(j.dump(), path, "test");
  CHECK_THROWS_AS(load_task_report_json(path), SchemaError);

  j = detail::task_report_to_json(rep);
  j["intra"].erase("metrics");
  detail::write_text_file(j.dump(), path, "test");
  CHECK_THROWS_AS(load_task_report_json(path), SchemaError);

  detail::write_text_file("not json at all", path, "test");
  CHECK_THROWS_AS(load_task_report_json(path), SchemaError);

  detail::write_text_file("{\"format\":\"acdg-protocol-report\",\"version\":1}", path,
                          "test");
  CHECK_THROWS_AS(load_protocol_report_json(path), SchemaError);
  detail::write_text_file("{}", path, "test");
  CHECK_THROWS_AS(load_protocol_report_json(path), SchemaError);
}

TEST_CASE("csv tables use the shared schema") {
  const auto& f = fixture();
  const auto rep = evaluate_task(f.acdg.bundle, f.split, f.ds.axis, f.bands);
  const auto csv = task_report_csv(rep);

  std::istringstream lines(csv);
  std::string line;
  REQUIRE(std::getline(lines, line));
  CHECK(line == "task,source_s,eval_s,method,metric,value");
  int rows = 0, snr_rows = 0, pooled_rows = 0;
  while (std::getline(lines, line)) {
    ++rows;
    CHECK(std::count(line.begin(), line.end(), ',') == 5);
    CHECK(line.rfind("s0.1,0.1,", 0) == 0);
    snr_rows += line.find(",mean_snr_db,") != std::string::npos ? 1 : 0;
    pooled_rows += line.find(",pooled,") != std::string::npos ? 1 : 0;
  }
  // 4 populated cells x 7 metric rows + 21 SNR rows.
  CHECK(rows == 4 * 7 + 21);
  CHECK(snr_rows == 21);
  CHECK(pooled_rows == 7);
  CHECK(csv.find("s0.1,0.1,pooled,acdg,accuracy,") != std::string::npos);

  ProtocolReport proto;
  proto.aggregate.push_back({"s0.1", 0.1, "acdg", "pooled", "accuracy", 0.9, 0.01, 3});
  const auto pcsv = protocol_report_csv(proto);
  CHECK(pcsv.find("task,source_s,eval_s,method,metric,value\n") == 0);
  CHECK(pcsv.find("s0.1,0.1,pooled,acdg,accuracy_mean,0.9\n") != std::string::npos);
  CHECK(pcsv.find("s0.1,0.1,pooled,acdg,accuracy_std,0.01\n") != std::string::npos);

  const auto path = scratch_path("task.csv");
  save_task_csv(rep, path);
  std::ifstream in(path, std::ios::binary);
  const std::string body((std::istreambuf_iterator<char>(in)), {});
  CHECK(body == csv);
}

// ===== SVG plots =====

TEST_CASE("svg line plots are well formed and escape their labels") {
  std::vector<PlotSeries> series = {
      {"acdg", {{0.01, 4.0}, {0.1, 8.0}, {1.0, 14.0}}},
      {"raw & friends", {{0.01, 1.0}, {0.1, 4.5}, {1.0, 12.0}}},
  };
  const auto svg = render_line_plot_svg("SNR & accuracy", "acquisition time (s)",
                                        "mean SNR (dB)", series, true);
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(svg.find("SNR &amp; accuracy") != std::string::npos);
  CHECK(svg.find("raw &amp; friends") != std::string::npos);
  std::size_t polylines = 0, pos = 0;
  while ((pos = svg.find("<polyline", pos)) != std::string::npos) {
    ++polylines;
    pos += 1;
  }
  CHECK(polylines == 2);
  // Tick labels keep the raw values on a log axis.
  CHECK(svg.find(">0.01<") != std::string::npos);

  const auto path = scratch_path("plot.svg");
  save_svg(svg, path);
  std::ifstream in(path, std::ios::binary);
  const std::string body((std::istreambuf_iterator<char>(in)), {});
  CHECK(body == svg);

  CHECK_THROWS_AS(render_line_plot_svg("t", "x", "y", {}, false), ConfigError);
  CHECK_THROWS_AS(render_line_plot_svg("t", "x", "y", {{"a", {}}}, false), ConfigError);
  CHECK_THROWS_AS(
      render_line_plot_svg("t", "x", "y", {{"a", {{0.0, 1.0}}}}, true), ConfigError);
}

TEST_CASE("mean snr helper averages the band ratio") {
  const auto axis = Axis::make_default(64);
  Bands bands;
  std::vector<std::vector<double>> rows(2, std::vector<double>(64, 0.0));
  for (int j = 0; j < 64; ++j) {
    rows[0][j] = 1.0 + 0.2 * std::sin(0.3 * j);
    rows[1][j] = 0.8 + 0.1 * std::cos(0.2 * j);
  }
  const double a = compute_snr(rows[0], axis, bands.signal, bands.noise);
  const double b = compute_snr(rows[1], axis, bands.signal, bands.noise);
  CHECK(mean_snr_db(rows, axis, bands) == Catch::Approx(0.5 * (a + b)).margin(1e-12));
  CHECK_THROWS_AS(mean_snr_db({}, axis, bands), UsageError);
}
