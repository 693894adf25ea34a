// ===== Command-line entry point =====
//
// Subcommands wire the library into reproducible runs:
//   gen-data  synthesize a multi-condition dataset (CSV + axis/bands sidecars)
//   train     fit the generative model on one source condition
//   denoise   rewrite a dataset through the trained generators
//   eval      score a checkpoint on the intra/inter-domain protocol
//   report    render SVG plots and summary tables from task reports
//
// Every command echoes its merged configuration (defaults < config file <
// flags) into <out>/run.json together with a config hash; the wall clock is
// isolated to that manifest's single timestamp key, everything else is
// byte-for-byte reproducible from the configuration and seed.
//
// Exit codes: 0 success, 2 configuration or usage errors, 3 filesystem
// trouble, 4 checkpoint violations, 5 schema or shape violations, 1 anything
// else.

#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "acdg/evaluation.hpp"

namespace {

using namespace acdg;

// ===== Run configuration =====

struct RunConfig {
  std::uint64_t seed = 0;
  std::string data;
  std::string out;
  std::string checkpoint;
  double source_condition = 0.1;
  double train_fraction = 0.2;
  int epochs = 100;
  int batch_size = 12;
  double lr = 1e-4;
  double alpha = 0.01;
  double beta = 0.1;
  double tau = 0.2;
  int generators = 3;
  std::vector<std::string> denoisers;  // spec strings; empty means the default set
  int axis_length = 256;
  std::vector<double> conditions = default_conditions();
  int per_cell = 40;
  int strains = 9;
  bool with_baseline = false;
};

nlohmann::ordered_json config_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["data"] = c.data;
  j["out"] = c.out;
  j["checkpoint"] = c.checkpoint;
  j["source_condition"] = c.source_condition;
  j["train_fraction"] = c.train_fraction;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["lr"] = c.lr;
  j["alpha"] = c.alpha;
  j["beta"] = c.beta;
  j["tau"] = c.tau;
  j["generators"] = c.generators;
  j["denoisers"] = c.denoisers;
  j["axis_length"] = c.axis_length;
  j["conditions"] = c.conditions;
  j["per_cell"] = c.per_cell;
  j["strains"] = c.strains;
  j["with_baseline"] = c.with_baseline;
  return j;
}

void apply_config_json(RunConfig& c, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const std::set<std::string> known = {
      "seed",       "data",         "out",        "checkpoint",
      "source_condition", "train_fraction", "epochs", "batch_size",
      "lr",         "alpha",        "beta",       "tau",
      "generators", "denoisers",    "axis_length", "conditions",
      "per_cell",   "strains",      "with_baseline"};
  for (const auto& [key, value] : j.items())
    if (known.find(key) == known.end())
      throw ConfigError("unknown config key: " + key);
  try {
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("data")) c.data = j.at("data").get<std::string>();
    if (j.contains("out")) c.out = j.at("out").get<std::string>();
    if (j.contains("checkpoint")) c.checkpoint = j.at("checkpoint").get<std::string>();
    if (j.contains("source_condition"))
      c.source_condition = j.at("source_condition").get<double>();
    if (j.contains("train_fraction"))
      c.train_fraction = j.at("train_fraction").get<double>();
    if (j.contains("epochs")) c.epochs = j.at("epochs").get<int>();
    if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<int>();
    if (j.contains("lr")) c.lr = j.at("lr").get<double>();
    if (j.contains("alpha")) c.alpha = j.at("alpha").get<double>();
    if (j.contains("beta")) c.beta = j.at("beta").get<double>();
    if (j.contains("tau")) c.tau = j.at("tau").get<double>();
    if (j.contains("generators")) c.generators = j.at("generators").get<int>();
    if (j.contains("denoisers"))
      c.denoisers = j.at("denoisers").get<std::vector<std::string>>();
    if (j.contains("axis_length")) c.axis_length = j.at("axis_length").get<int>();
    if (j.contains("conditions"))
      c.conditions = j.at("conditions").get<std::vector<double>>();
    if (j.contains("per_cell")) c.per_cell = j.at("per_cell").get<int>();
    if (j.contains("strains")) c.strains = j.at("strains").get<int>();
    if (j.contains("with_baseline"))
      c.with_baseline = j.at("with_baseline").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config field has the wrong type: ") + e.what());
  }
}

void apply_config_file(RunConfig& c, const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read config file: " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    throw ConfigError("config file is not valid JSON: " + std::string(e.what()));
  }
  // A run manifest written by an earlier command is accepted directly.
  if (j.is_object() && j.value("format", "") == std::string("acdg-run") &&
      j.contains("config"))
    apply_config_json(c, j.at("config"));
  else
    apply_config_json(c, j);
}

std::vector<double> parse_conditions(const std::string& text) {
  std::vector<double> out;
  std::string rest = text;
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    const std::string item = rest.substr(0, comma);
    rest = comma == std::string::npos ? "" : rest.substr(comma + 1);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      throw ConfigError("--conditions must be comma-separated numbers, got " + item);
    }
    if (used != item.size())
      throw ConfigError("--conditions must be comma-separated numbers, got " + item);
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("--conditions must list at least one value");
  return out;
}

// ===== Run manifest =====

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string config_hash(const RunConfig& rc) { return fnv1a_hex(config_json(rc).dump()); }

void ensure_out_dir(const RunConfig& rc) {
  std::error_code ec;
  std::filesystem::create_directories(rc.out, ec);
  if (ec) throw IoError("cannot create output directory: " + rc.out);
}

void write_run_manifest(const RunConfig& rc, const std::string& command) {
  nlohmann::ordered_json j;
  j["format"] = "acdg-run";
  j["version"] = 1;
  j["command"] = command;
  j["config"] = config_json(rc);
  j["config_hash"] = config_hash(rc);
  j["wall_clock_utc"] = utc_now();
  detail::write_text_file(j.dump(2) + "\n",
                          (std::filesystem::path(rc.out) / "run.json").string(),
                          "run manifest");
}

// ===== Shared loading =====

DomainDataset load_data_dir(const std::string& dir) {
  const auto d = std::filesystem::path(dir);
  const auto axis = load_axis_json((d / "axis.json").string());
  return load_dataset_csv((d / "dataset.csv").string(), axis);
}

Bands load_bands_dir(const std::string& dir) {
  return load_bands_json((std::filesystem::path(dir) / "bands.json").string());
}

std::vector<DenoiserSpec> resolve_denoisers(const RunConfig& rc) {
  if (rc.denoisers.empty()) return default_denoisers();
  std::vector<DenoiserSpec> specs;
  for (const auto& text : rc.denoisers) specs.push_back(parse_denoiser_spec(text));
  return specs;
}

TrainConfig train_config_for(const RunConfig& rc, const DomainDataset& ds) {
  TrainConfig tc;
  tc.model = ModelConfig::compact(ds.class_count, ds.axis.length);
  tc.model.n_generators = rc.generators;
  tc.lr = rc.lr;
  tc.batch_size = rc.batch_size;
  tc.epochs = rc.epochs;
  tc.tau = rc.tau;
  tc.alpha = rc.alpha;
  tc.beta = rc.beta;
  tc.seed = rc.seed;
  return tc;
}

// ===== Commands =====

void cmd_gen_data(const RunConfig& rc) {
  check_config(rc.per_cell >= 1, "--per-cell must be at least 1");
  check_config(rc.strains >= 2, "--strains must be at least 2");
  check_config(rc.axis_length >= 16, "--axis-length must be at least 16");

  const auto axis = Axis::make_default(rc.axis_length);
  const auto profiles = make_profiles(rc.seed, rc.strains, axis);
  const auto ds = build_dataset(profiles, axis, rc.conditions, rc.per_cell, rc.seed);
  const auto bands = bands_for(profiles, axis);

  ensure_out_dir(rc);
  const auto out = std::filesystem::path(rc.out);
  save_dataset_csv(ds, (out / "dataset.csv").string());
  save_axis_json(axis, (out / "axis.json").string());
  save_bands_json(bands, (out / "bands.json").string());
  write_run_manifest(rc, "gen-data");

  std::cout << "wrote " << ds.spectra.size() << " spectra ("
            << ds.class_count << " strains x " << ds.conditions.size()
            << " conditions x " << rc.per_cell << " repeats) to " << rc.out << "\n";
  for (double cond : ds.conditions) {
    std::vector<std::vector<double>> rows;
    for (const auto& s : ds.spectra)
      if (s.condition_s == cond) rows.push_back(s.intensities);
    std::printf("  s=%-6s mean SNR %7.2f dB over %zu spectra\n",
                detail::fmt_real(cond).c_str(), mean_snr_db(rows, axis, bands),
                rows.size());
  }
}

void cmd_train(const RunConfig& rc) {
  check_config(rc.epochs >= 0, "--epochs must be nonnegative");
  const auto ds = load_data_dir(rc.data);
  const auto split = split_task(ds, rc.source_condition, rc.train_fraction, rc.seed);
  TrainConfig tc = train_config_for(rc, ds);

  ensure_out_dir(rc);
  const auto out = std::filesystem::path(rc.out);
  CheckpointMeta meta;
  meta.rng_state = Rng(mix_seed(rc.seed, 0x545241494EULL)).state();

  if (rc.epochs == 0) {
    // Persist an initialized model without fitting: useful as a chance-level
    // reference. The stored epoch count stays 0.
    ModelBundle<float> bundle(tc.model, tc.seed);
    bundle.trained = true;
    meta.epoch = 0;
    save_checkpoint(bundle, tc, meta, (out / "checkpoint").string());
    save_epoch_logs((out / "epoch_logs.jsonl").string(), {});
    write_run_manifest(rc, "train");
    std::cout << "wrote an initialized (unfitted) checkpoint to "
              << (out / "checkpoint").string() << "\n";
    return;
  }

  const auto result = train<float>(split.train, tc);
  meta.epoch = rc.epochs;
  save_checkpoint(result.bundle, tc, meta, (out / "checkpoint").string());
  save_epoch_logs((out / "epoch_logs.jsonl").string(), result.logs);
  write_run_manifest(rc, "train");

  const auto& last = result.logs.back();
  std::cout << "trained " << rc.epochs << " epochs on " << split.train.size()
            << " spectra at s=" << detail::fmt_real(rc.source_condition) << "\n";
  std::printf("  final: L_DT %.4f  L_DG %.4f  train accuracy %.3f\n", last.l_dt,
              last.l_dg, last.train_accuracy);
  std::cout << "checkpoint: " << (out / "checkpoint").string() << "\n";
}

void cmd_denoise(const RunConfig& rc) {
  const auto ckpt = load_checkpoint<float>(rc.checkpoint);
  const auto ds = load_data_dir(rc.data);
  const auto bands = load_bands_dir(rc.data);
  check_dim(ckpt.bundle.config.axis_length == ds.axis.length,
            "checkpoint and dataset disagree on spectrum length");

  std::vector<std::vector<double>> rows;
  rows.reserve(ds.spectra.size());
  for (const auto& s : ds.spectra) rows.push_back(s.intensities);
  const auto denoised = detail::denoise_rows(ckpt.bundle, rows);

  ensure_out_dir(rc);
  const auto path = (std::filesystem::path(rc.out) / "denoised.csv").string();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write denoised csv: " + path);
  f << "sample_id,strain_label,condition_s";
  for (int i = 0; i < ds.axis.length; ++i) f << ",i" << i;
  f << ",snr_before,snr_after\n";
  double before = 0.0, after = 0.0;
  for (std::size_t r = 0; r < ds.spectra.size(); ++r) {
    const auto& s = ds.spectra[r];
    const double b = compute_snr(rows[r], ds.axis, bands.signal, bands.noise);
    const double a = compute_snr(denoised[r], ds.axis, bands.signal, bands.noise);
    before += b;
    after += a;
    f << s.sample_id << "," << s.strain_label << ","
      << detail::fmt_real(s.condition_s);
    for (double v : denoised[r]) f << "," << detail::fmt_real(v);
    f << "," << detail::fmt_real(b) << "," << detail::fmt_real(a) << "\n";
  }
  if (!f) throw IoError("short write: " + path);
  write_run_manifest(rc, "denoise");

  const double n = static_cast<double>(ds.spectra.size());
  std::printf("denoised %zu spectra: mean SNR %.2f dB -> %.2f dB\n",
              ds.spectra.size(), before / n, after / n);
  std::cout << "output: " << path << "\n";
}

void save_report_with_hash(const TaskReport& rep, const RunConfig& rc,
                           const std::string& path) {
  auto j = detail::task_report_to_json(rep);
  j["config_hash"] = config_hash(rc);
  detail::write_text_file(j.dump(2) + "\n", path, "task report");
}

void cmd_eval(const RunConfig& rc) {
  const auto ckpt = load_checkpoint<float>(rc.checkpoint);
  const auto ds = load_data_dir(rc.data);
  const auto bands = load_bands_dir(rc.data);
  const auto split = split_task(ds, rc.source_condition, rc.train_fraction, rc.seed);
  const auto specs = resolve_denoisers(rc);

  ensure_out_dir(rc);
  const auto out = std::filesystem::path(rc.out);
  const auto rep = evaluate_task(ckpt.bundle, split, ds.axis, bands, specs);
  save_report_with_hash(rep, rc, (out / "report.json").string());
  save_task_csv(rep, (out / "report.csv").string());
  std::printf("%s: intra accuracy %.3f, pooled inter accuracy %.3f\n",
              rep.method.c_str(), rep.intra.metric.accuracy,
              rep.inter_pooled.metric.accuracy);

  if (rc.with_baseline) {
    TrainConfig bc = ckpt.cfg;  // identical optimizer settings and seed
    const auto erm = train_erm_baseline<float>(split.train, bc);
    const auto erm_rep = evaluate_task(erm.bundle, split, ds.axis, bands, specs);
    save_report_with_hash(erm_rep, rc, (out / "report_erm.json").string());
    save_task_csv(erm_rep, (out / "report_erm.csv").string());
    std::printf("%s: intra accuracy %.3f, pooled inter accuracy %.3f\n",
                erm_rep.method.c_str(), erm_rep.intra.metric.accuracy,
                erm_rep.inter_pooled.metric.accuracy);
  }
  write_run_manifest(rc, "eval");
  std::cout << "reports written to " << rc.out << "\n";
}

void cmd_report(const RunConfig& rc) {
  std::vector<TaskReport> reps;
  std::vector<std::filesystem::path> entries;
  {
    std::error_code ec;
    std::filesystem::directory_iterator it(rc.data, ec);
    if (ec) throw IoError("cannot read report directory: " + rc.data);
    for (const auto& e : it)
      if (e.path().extension() == ".json") entries.push_back(e.path());
  }
  std::sort(entries.begin(), entries.end());
  for (const auto& p : entries) {
    try {
      reps.push_back(load_task_report_json(p.string()));
    } catch (const SchemaError&) {
      // Other JSON artifacts (axis, manifests) live alongside reports.
    }
  }
  check_config(!reps.empty(), "no task reports found in: " + rc.data);

  ensure_out_dir(rc);
  const auto out = std::filesystem::path(rc.out);

  // SNR vs condition: one series per denoising method, deduplicated across
  // reports (the baseline report repeats the classical rows).
  std::map<std::string, std::map<double, double>> snr_series;
  for (const auto& rep : reps)
    for (const auto& row : rep.snr)
      snr_series[row.method].emplace(row.condition, row.mean_snr_db);
  std::vector<PlotSeries> snr_plot;
  std::ostringstream snr_csv;
  snr_csv << kReportCsvHeader << "\n";
  for (const auto& [method, points] : snr_series) {
    PlotSeries s;
    s.label = method;
    for (const auto& [cond, v] : points) {
      s.points.push_back({cond, v});
      snr_csv << reps.front().task_id << ","
              << detail::fmt_real(reps.front().source_condition) << ","
              << detail::fmt_real(cond) << "," << method << ",mean_snr_db,"
              << detail::fmt_real(v) << "\n";
    }
    snr_plot.push_back(std::move(s));
  }
  save_svg(render_line_plot_svg("Mean SNR by acquisition time", "acquisition time (s)",
                                "mean SNR (dB)", snr_plot, true),
           (out / "snr_vs_condition.svg").string());
  detail::write_text_file(snr_csv.str(), (out / "snr_vs_condition.csv").string(),
                          "snr csv");

  // Accuracy vs evaluation condition: one series per classifier.
  std::vector<PlotSeries> acc_plot;
  std::ostringstream acc_csv;
  acc_csv << kReportCsvHeader << "\n";
  for (const auto& rep : reps) {
    PlotSeries s;
    s.label = rep.method;
    auto add = [&](double cond, const EvalCell& cell) {
      if (cell.count == 0) return;
      s.points.push_back({cond, cell.metric.accuracy});
      acc_csv << rep.task_id << "," << detail::fmt_real(rep.source_condition) << ","
              << detail::fmt_real(cond) << "," << rep.method << ",accuracy,"
              << detail::fmt_real(cell.metric.accuracy) << "\n";
    };
    add(rep.source_condition, rep.intra);
    for (const auto& c : rep.inter) add(c.condition, c.cell);
    if (!s.points.empty()) acc_plot.push_back(std::move(s));
  }
  save_svg(render_line_plot_svg("Recognition accuracy by acquisition time",
                                "acquisition time (s)", "accuracy", acc_plot, true),
           (out / "accuracy_vs_condition.svg").string());
  detail::write_text_file(acc_csv.str(), (out / "accuracy_vs_condition.csv").string(),
                          "accuracy csv");

  // Headline table.
  std::ostringstream summary;
  summary << kReportCsvHeader << "\n";
  for (const auto& rep : reps) {
    auto row = [&](const std::string& eval_s, const std::string& metric, double v) {
      summary << rep.task_id << "," << detail::fmt_real(rep.source_condition) << ","
              << eval_s << "," << rep.method << "," << metric << ","
              << detail::fmt_real(v) << "\n";
    };
    if (rep.intra.count > 0) row("intra", "accuracy", rep.intra.metric.accuracy);
    if (rep.inter_pooled.count > 0) {
      row("pooled", "accuracy", rep.inter_pooled.metric.accuracy);
      row("pooled", "macro_f1", rep.inter_pooled.metric.macro_f1);
    }
  }
  detail::write_text_file(summary.str(), (out / "summary.csv").string(), "summary csv");
  write_run_manifest(rc, "report");

  std::cout << "rendered " << reps.size() << " report(s) into " << rc.out << "\n";
}

// ===== CLI wiring =====

int run_cli(int argc, char** argv) {
  CLI::App app{"spectral denoising and cross-domain strain recognition toolkit",
               "acdg"};
  app.require_subcommand(1);

  RunConfig flags;
  std::string config_path;
  std::string conditions_text;

  auto add_common = [&](CLI::App* cmd, bool needs_out) {
    auto* out = cmd->add_option("--out", flags.out, "output directory");
    if (needs_out) out->required();
    cmd->add_option("--seed", flags.seed, "run seed")->capture_default_str();
    cmd->add_option("--config", config_path,
                    "JSON config file (defaults < file < flags)");
  };

  auto* gen = app.add_subcommand("gen-data", "synthesize a multi-condition dataset");
  add_common(gen, true);
  gen->add_option("--strains", flags.strains, "number of strain classes")
      ->capture_default_str();
  gen->add_option("--conditions", conditions_text,
                  "comma-separated acquisition times in seconds");
  gen->add_option("--per-cell", flags.per_cell,
                  "spectra per (strain, condition) cell")
      ->capture_default_str();
  gen->add_option("--axis-length", flags.axis_length, "points per spectrum")
      ->capture_default_str();

  auto* tr = app.add_subcommand("train", "fit the generative model on one condition");
  add_common(tr, true);
  tr->add_option("--data", flags.data, "dataset directory from gen-data")->required();
  tr->add_option("--source-condition", flags.source_condition,
                 "acquisition time used for training")
      ->capture_default_str();
  tr->add_option("--train-fraction", flags.train_fraction,
                 "fraction of the source condition used for training")
      ->capture_default_str();
  tr->add_option("--epochs", flags.epochs, "training epochs (0: save initialized)")
      ->capture_default_str();
  tr->add_option("--batch-size", flags.batch_size, "samples per batch")
      ->capture_default_str();
  tr->add_option("--lr", flags.lr, "learning rate")->capture_default_str();
  tr->add_option("--alpha", flags.alpha, "generation loss weight")
      ->capture_default_str();
  tr->add_option("--beta", flags.beta, "classification loss weight")
      ->capture_default_str();
  tr->add_option("--tau", flags.tau, "contrastive temperature")->capture_default_str();
  tr->add_option("--generators", flags.generators, "number of domain generators")
      ->capture_default_str();

  auto* dn = app.add_subcommand("denoise", "rewrite a dataset through the generators");
  add_common(dn, true);
  dn->add_option("--checkpoint", flags.checkpoint, "checkpoint directory")->required();
  dn->add_option("--data", flags.data, "dataset directory")->required();

  auto* ev = app.add_subcommand("eval", "score a checkpoint on the domain protocol");
  add_common(ev, true);
  ev->add_option("--checkpoint", flags.checkpoint, "checkpoint directory")->required();
  ev->add_option("--data", flags.data, "dataset directory")->required();
  ev->add_option("--source-condition", flags.source_condition,
                 "source acquisition time of the split")
      ->capture_default_str();
  ev->add_option("--train-fraction", flags.train_fraction,
                 "training fraction of the split")
      ->capture_default_str();
  ev->add_option("--denoiser", flags.denoisers,
                 "classical denoiser spec, repeatable (kind:key=value,...)");
  ev->add_flag("--with-baseline", flags.with_baseline,
               "also train and score the plain cross-entropy baseline");

  auto* rp = app.add_subcommand("report", "render plots and tables from reports");
  add_common(rp, true);
  rp->add_option("--data", flags.data, "directory holding task report JSON files")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  CLI::App* sub = app.get_subcommands().front();

  // Merge: defaults, then the config file, then explicit flags.
  RunConfig rc;
  if (!config_path.empty()) apply_config_file(rc, config_path);
  auto take = [&](const char* flag, auto member) {
    if (sub->count(flag) > 0) rc.*member = flags.*member;
  };
  take("--seed", &RunConfig::seed);
  take("--out", &RunConfig::out);
  if (sub->get_option_no_throw("--data") != nullptr) take("--data", &RunConfig::data);
  if (sub->get_option_no_throw("--checkpoint") != nullptr)
    take("--checkpoint", &RunConfig::checkpoint);
  if (sub == gen) {
    take("--strains", &RunConfig::strains);
    take("--per-cell", &RunConfig::per_cell);
    take("--axis-length", &RunConfig::axis_length);
    if (sub->count("--conditions") > 0) rc.conditions = parse_conditions(conditions_text);
  }
  if (sub == tr) {
    take("--source-condition", &RunConfig::source_condition);
    take("--train-fraction", &RunConfig::train_fraction);
    take("--epochs", &RunConfig::epochs);
    take("--batch-size", &RunConfig::batch_size);
    take("--lr", &RunConfig::lr);
    take("--alpha", &RunConfig::alpha);
    take("--beta", &RunConfig::beta);
    take("--tau", &RunConfig::tau);
    take("--generators", &RunConfig::generators);
  }
  if (sub == ev) {
    take("--source-condition", &RunConfig::source_condition);
    take("--train-fraction", &RunConfig::train_fraction);
    take("--denoiser", &RunConfig::denoisers);
    take("--with-baseline", &RunConfig::with_baseline);
  }
  check_config(!rc.out.empty(), "--out is required");

  if (sub == gen) cmd_gen_data(rc);
  if (sub == tr) cmd_train(rc);
  if (sub == dn) cmd_denoise(rc);
  if (sub == ev) cmd_eval(rc);
  if (sub == rp) cmd_report(rc);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const CheckpointError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const SchemaError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 5;
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
