// ===== Metrics, intra/inter-domain protocol, reports =====
//
// Confusion-matrix metrics with one-vs-rest macro averaging, task evaluation
// for the generative model and the plain baseline, the multi-seed protocol
// runner, and report serialization (JSON, CSV, SVG line plots). Inter-domain
// headline numbers come from the pooled confusion over all inter conditions;
// per-condition tables are emitted alongside. Undefined 0/0 metric cells
// contribute 0 and are counted, never dropped.

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include "json.hpp"

#include "acdg/baselines.hpp"

namespace acdg {

// ===== Confusion matrix =====

struct ConfusionMatrix {
  int n_classes = 0;
  std::vector<std::vector<long long>> counts;  // [true][predicted]

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(int c)
      : n_classes(c),
        counts(static_cast<std::size_t>(c),
               std::vector<long long>(static_cast<std::size_t>(c), 0)) {
    check_config(c >= 1, "confusion matrix needs at least one class");
  }

  long long total() const {
    long long t = 0;
    for (const auto& row : counts)
      for (long long v : row) t += v;
    return t;
  }

  ConfusionMatrix& operator+=(const ConfusionMatrix& other) {
    check_dim(n_classes == other.n_classes, "confusion matrices differ in class count");
    for (int t = 0; t < n_classes; ++t)
      for (int p = 0; p < n_classes; ++p)
        counts[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)] +=
            other.counts[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
    return *this;
  }

  bool operator==(const ConfusionMatrix& other) const {
    return n_classes == other.n_classes && counts == other.counts;
  }
};

inline ConfusionMatrix confusion(const std::vector<int>& preds,
                                 const std::vector<int>& labels, int n_classes) {
  check_dim(preds.size() == labels.size(), "prediction and label counts differ");
  ConfusionMatrix cm(n_classes);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    check_usage(labels[i] >= 0 && labels[i] < n_classes, "label class out of range");
    check_usage(preds[i] >= 0 && preds[i] < n_classes, "predicted class out of range");
    ++cm.counts[static_cast<std::size_t>(labels[i])][static_cast<std::size_t>(preds[i])];
  }
  return cm;
}

// ===== Metrics =====

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double specificity = 0.0;
  double f1 = 0.0;
  int undefined = 0;  // how many of the four ratios were 0/0
};

struct MetricSet {
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_specificity = 0.0;
  double macro_f1 = 0.0;
  int undefined_flags = 0;  // total 0/0 cells across classes
};

// One-vs-rest metrics per class. A 0/0 ratio contributes 0 and bumps the
// undefined counter.
inline std::vector<ClassMetrics> per_class_metrics(const ConfusionMatrix& cm) {
  const long long total = cm.total();
  check_usage(total > 0, "metrics need a nonempty confusion matrix");
  const int C = cm.n_classes;
  std::vector<ClassMetrics> out(static_cast<std::size_t>(C));
  for (int c = 0; c < C; ++c) {
    long long tp = cm.counts[static_cast<std::size_t>(c)][static_cast<std::size_t>(c)];
    long long fn = 0, fp = 0;
    for (int k = 0; k < C; ++k) {
      if (k == c) continue;
      fn += cm.counts[static_cast<std::size_t>(c)][static_cast<std::size_t>(k)];
      fp += cm.counts[static_cast<std::size_t>(k)][static_cast<std::size_t>(c)];
    }
    const long long tn = total - tp - fn - fp;
    auto& m = out[static_cast<std::size_t>(c)];
    auto ratio = [&m](long long num, long long den) {
      if (den == 0) {
        ++m.undefined;
        return 0.0;
      }
      return static_cast<double>(num) / static_cast<double>(den);
    };
    m.precision = ratio(tp, tp + fp);
    m.recall = ratio(tp, tp + fn);
    m.specificity = ratio(tn, tn + fp);
    if (m.precision + m.recall == 0.0) {
      ++m.undefined;
      m.f1 = 0.0;
    } else {
      m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    }
  }
  return out;
}

inline MetricSet metrics(const ConfusionMatrix& cm) {
  const auto per_class = per_class_metrics(cm);
  const long long total = cm.total();
  MetricSet m;
  long long diag = 0;
  for (int c = 0; c < cm.n_classes; ++c)
    diag += cm.counts[static_cast<std::size_t>(c)][static_cast<std::size_t>(c)];
  m.accuracy = static_cast<double>(diag) / static_cast<double>(total);
  for (const auto& pc : per_class) {
    m.macro_precision += pc.precision;
    m.macro_recall += pc.recall;
    m.macro_specificity += pc.specificity;
    m.macro_f1 += pc.f1;
    m.undefined_flags += pc.undefined;
  }
  const double inv = 1.0 / static_cast<double>(cm.n_classes);
  m.macro_precision *= inv;
  m.macro_recall *= inv;
  m.macro_specificity *= inv;
  m.macro_f1 *= inv;
  return m;
}

// ===== Parallel scoring =====

namespace detail {

// ACDG_THREADS caps the evaluation worker count; unset means one worker per
// hardware thread. Chunking is fixed at 64 rows so outputs do not depend on
// the worker count.
inline int eval_workers() {
  const char* env = std::getenv("ACDG_THREADS");
  if (env == nullptr || *env == '\0') {
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
  }
  const std::string text(env);
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(text, &used);
  } catch (const std::exception&) {
    throw ConfigError("ACDG_THREADS must be a positive integer, got " + text);
  }
  if (used != text.size() || v < 1)
    throw ConfigError("ACDG_THREADS must be a positive integer, got " + text);
  return v;
}

constexpr long long kEvalChunk = 64;

// Runs fn(lo, hi) over disjoint chunks, possibly from several threads. fn must
// only write state owned by its index range. The first exception wins and is
// rethrown on the caller thread.
template <typename Fn>
void for_chunks_parallel(long long n, Fn&& fn) {
  if (n <= 0) return;
  const long long n_chunks = (n + kEvalChunk - 1) / kEvalChunk;
  const int workers =
      static_cast<int>(std::min<long long>(eval_workers(), n_chunks));
  if (workers <= 1) {
    for (long long c = 0; c < n_chunks; ++c)
      fn(c * kEvalChunk, std::min(n, (c + 1) * kEvalChunk));
    return;
  }
  std::atomic<long long> next{0};
  std::mutex err_mu;
  std::exception_ptr first_error;
  auto body = [&]() {
    for (;;) {
      const long long c = next.fetch_add(1);
      if (c >= n_chunks) return;
      {
        std::lock_guard<std::mutex> lock(err_mu);
        if (first_error) return;
      }
      try {
        fn(c * kEvalChunk, std::min(n, (c + 1) * kEvalChunk));
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) pool.emplace_back(body);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

template <typename T>
std::vector<std::vector<double>> denoise_rows(const ModelBundle<T>& bundle,
                                              const std::vector<std::vector<double>>& raw) {
  std::vector<std::vector<double>> out(raw.size());
  for_chunks_parallel(static_cast<long long>(raw.size()), [&](long long lo, long long hi) {
    std::vector<std::vector<double>> part(raw.begin() + lo, raw.begin() + hi);
    auto den = bundle.denoise_values(part);
    for (long long i = lo; i < hi; ++i)
      out[static_cast<std::size_t>(i)] = std::move(den[static_cast<std::size_t>(i - lo)]);
  });
  return out;
}

// Argmax classification of rows already living in the model's input space
// (generated spectra are consumed as produced, without re-normalization).
template <typename T>
std::vector<int> classify_prepared(const ModelBundle<T>& bundle,
                                   const std::vector<std::vector<double>>& rows) {
  check_usage(bundle.trained, "classification requires a trained bundle");
  const int L = bundle.config.axis_length;
  std::vector<int> out(rows.size(), 0);
  for_chunks_parallel(static_cast<long long>(rows.size()), [&](long long lo, long long hi) {
    const int b = static_cast<int>(hi - lo);
    auto x = zeros<T>({b, 1, L});
    for (int i = 0; i < b; ++i) {
      const auto& row = rows[static_cast<std::size_t>(lo + i)];
      check_dim(static_cast<int>(row.size()) == L,
                "spectrum length does not match model config");
      for (int j = 0; j < L; ++j)
        x->values[static_cast<std::size_t>(i) * L + j] = static_cast<T>(row[static_cast<std::size_t>(j)]);
    }
    Tape<T> tape;
    auto logits = bundle.classify(tape, bundle.extract(tape, x, Mode::kEval));
    const int C = logits->shape[1];
    for (int i = 0; i < b; ++i) {
      const T* rowv = logits->values.data() + static_cast<std::size_t>(i) * C;
      int best = 0;
      for (int j = 1; j < C; ++j)
        if (rowv[j] > rowv[best]) best = j;
      out[static_cast<std::size_t>(lo + i)] = best;
    }
  });
  return out;
}

template <typename T>
std::vector<int> predict_erm(const ErmBundle<T>& baseline,
                             const std::vector<std::vector<double>>& rows) {
  check_usage(baseline.trained, "predict requires a trained baseline");
  std::vector<int> out(rows.size(), 0);
  for_chunks_parallel(static_cast<long long>(rows.size()), [&](long long lo, long long hi) {
    std::vector<std::vector<double>> part(rows.begin() + lo, rows.begin() + hi);
    auto preds = baseline.predict(part);
    for (long long i = lo; i < hi; ++i)
      out[static_cast<std::size_t>(i)] = preds[static_cast<std::size_t>(i - lo)];
  });
  return out;
}

inline std::vector<std::vector<double>> rows_of(const std::vector<Spectrum>& xs) {
  std::vector<std::vector<double>> rows;
  rows.reserve(xs.size());
  for (const auto& s : xs) rows.push_back(s.intensities);
  return rows;
}

inline std::vector<int> labels_of(const std::vector<Spectrum>& xs) {
  std::vector<int> labels;
  labels.reserve(xs.size());
  for (const auto& s : xs) labels.push_back(s.strain_label);
  return labels;
}

inline void check_split_labels(const TaskSplit& split, int n_classes) {
  auto check = [&](const std::vector<Spectrum>& xs) {
    for (const auto& s : xs)
      check_config(s.strain_label >= 0 && s.strain_label < n_classes,
                   "split labels exceed the model class count");
  };
  check(split.intra_test);
  for (const auto& [cond, xs] : split.inter_test) check(xs);
}

}  // namespace detail

// ===== Task reports =====

inline double mean_snr_db(const std::vector<std::vector<double>>& rows, const Axis& axis,
                          const Bands& bands) {
  check_usage(!rows.empty(), "mean SNR over an empty set");
  double acc = 0.0;
  for (const auto& r : rows) acc += compute_snr(r, axis, bands.signal, bands.noise);
  return acc / static_cast<double>(rows.size());
}

struct SnrEntry {
  double condition = 0.0;
  std::string method;  // "raw", "acdg", or a classical denoiser kind
  double mean_snr_db = 0.0;
  long long count = 0;
};

struct EvalCell {
  long long count = 0;
  ConfusionMatrix cm;
  MetricSet metric;
};

struct ConditionResult {
  double condition = 0.0;
  EvalCell cell;
};

struct TaskReport {
  std::string task_id;
  std::string method;  // classifier identity: "acdg" or "erm"
  double source_condition = 0.0;
  double train_fraction = 0.0;
  EvalCell intra;
  std::vector<ConditionResult> inter;
  EvalCell inter_pooled;  // metrics of the concatenated inter predictions
  std::vector<SnrEntry> snr;
};

namespace detail {

inline EvalCell make_cell(const std::vector<int>& preds, const std::vector<int>& labels,
                          int n_classes) {
  EvalCell cell;
  cell.count = static_cast<long long>(preds.size());
  cell.cm = confusion(preds, labels, n_classes);
  cell.metric = metrics(cell.cm);
  return cell;
}

inline void append_snr_rows(std::vector<SnrEntry>& out, double condition,
                            const std::vector<std::vector<double>>& raw,
                            const std::vector<std::vector<double>>* model_denoised,
                            const std::vector<DenoiserSpec>& denoisers, const Axis& axis,
                            const Bands& bands) {
  const long long n = static_cast<long long>(raw.size());
  out.push_back({condition, "raw", mean_snr_db(raw, axis, bands), n});
  if (model_denoised != nullptr)
    out.push_back({condition, "acdg", mean_snr_db(*model_denoised, axis, bands), n});
  for (const auto& spec : denoisers)
    out.push_back({condition, denoiser_kind_name(spec.kind),
                   mean_snr_db(apply_denoiser(spec, raw), axis, bands), n});
}

}  // namespace detail

// Evaluates the generative model on a task split: classification consumes the
// denoised spectrum, SNR rows cover raw, model-denoised, and every classical
// denoiser at each test condition.
template <typename T>
TaskReport evaluate_task(const ModelBundle<T>& bundle, const TaskSplit& split,
                         const Axis& axis, const Bands& bands,
                         const std::vector<DenoiserSpec>& denoisers = default_denoisers()) {
  check_usage(bundle.trained, "evaluation requires a trained model");
  check_dim(bundle.config.axis_length == axis.length,
            "model and axis disagree on spectrum length");
  detail::check_split_labels(split, bundle.config.n_classes);

  TaskReport rep;
  rep.task_id = "s" + detail::fmt_real(split.source_condition);
  rep.method = "acdg";
  rep.source_condition = split.source_condition;
  rep.train_fraction = split.train_fraction;

  if (!split.intra_test.empty()) {
    const auto rows = detail::rows_of(split.intra_test);
    const auto denoised = detail::denoise_rows(bundle, rows);
    rep.intra = detail::make_cell(detail::classify_prepared(bundle, denoised),
                                  detail::labels_of(split.intra_test),
                                  bundle.config.n_classes);
    detail::append_snr_rows(rep.snr, split.source_condition, rows, &denoised, denoisers,
                            axis, bands);
  }

  std::vector<int> pooled_preds, pooled_labels;
  for (const auto& [cond, specs] : split.inter_test) {
    if (specs.empty()) continue;
    const auto rows = detail::rows_of(specs);
    const auto labels = detail::labels_of(specs);
    const auto denoised = detail::denoise_rows(bundle, rows);
    const auto preds = detail::classify_prepared(bundle, denoised);
    rep.inter.push_back({cond, detail::make_cell(preds, labels, bundle.config.n_classes)});
    pooled_preds.insert(pooled_preds.end(), preds.begin(), preds.end());
    pooled_labels.insert(pooled_labels.end(), labels.begin(), labels.end());
    detail::append_snr_rows(rep.snr, cond, rows, &denoised, denoisers, axis, bands);
  }
  if (!pooled_preds.empty())
    rep.inter_pooled =
        detail::make_cell(pooled_preds, pooled_labels, bundle.config.n_classes);
  return rep;
}

// Evaluates the plain baseline on the identical protocol. It classifies raw
// spectra; SNR rows cover raw and the classical denoisers only.
template <typename T>
TaskReport evaluate_task(const ErmBundle<T>& baseline, const TaskSplit& split,
                         const Axis& axis, const Bands& bands,
                         const std::vector<DenoiserSpec>& denoisers = default_denoisers()) {
  check_usage(baseline.trained, "evaluation requires a trained model");
  check_dim(baseline.config.axis_length == axis.length,
            "model and axis disagree on spectrum length");
  detail::check_split_labels(split, baseline.config.n_classes);

  TaskReport rep;
  rep.task_id = "s" + detail::fmt_real(split.source_condition);
  rep.method = "erm";
  rep.source_condition = split.source_condition;
  rep.train_fraction = split.train_fraction;

  if (!split.intra_test.empty()) {
    const auto rows = detail::rows_of(split.intra_test);
    rep.intra = detail::make_cell(detail::predict_erm(baseline, rows),
                                  detail::labels_of(split.intra_test),
                                  baseline.config.n_classes);
    detail::append_snr_rows(rep.snr, split.source_condition, rows, nullptr, denoisers,
                            axis, bands);
  }

  std::vector<int> pooled_preds, pooled_labels;
  for (const auto& [cond, specs] : split.inter_test) {
    if (specs.empty()) continue;
    const auto rows = detail::rows_of(specs);
    const auto labels = detail::labels_of(specs);
    const auto preds = detail::predict_erm(baseline, rows);
    rep.inter.push_back(
        {cond, detail::make_cell(preds, labels, baseline.config.n_classes)});
    pooled_preds.insert(pooled_preds.end(), preds.begin(), preds.end());
    pooled_labels.insert(pooled_labels.end(), labels.begin(), labels.end());
    detail::append_snr_rows(rep.snr, cond, rows, nullptr, denoisers, axis, bands);
  }
  if (!pooled_preds.empty())
    rep.inter_pooled =
        detail::make_cell(pooled_preds, pooled_labels, baseline.config.n_classes);
  return rep;
}

// ===== Protocol runner =====

struct ProtocolConfig {
  TrainConfig train;  // model template and optimizer knobs; seed is per run
  double train_fraction = 0.2;
  std::vector<double> source_conditions;  // empty: one task per dataset condition
  std::vector<DenoiserSpec> denoisers = default_denoisers();
  Bands bands{};
};

struct RunRecord {
  std::uint64_t seed = 0;
  TaskReport acdg;
  TaskReport erm;
};

struct AggregateRow {
  std::string task_id;
  double source_condition = 0.0;
  std::string method;
  std::string eval_s;  // "intra", "pooled", or a condition value
  std::string metric;
  double mean = 0.0;
  double stddev = 0.0;  // population deviation over seeds
  int n = 0;
};

struct ProtocolReport {
  std::vector<RunRecord> runs;
  std::vector<AggregateRow> aggregate;
};

namespace detail {

inline void aggregate_protocol(ProtocolReport& report) {
  // key: task_id, method, eval_s, metric -> (source condition, samples)
  std::map<std::tuple<std::string, std::string, std::string, std::string>,
           std::pair<double, std::vector<double>>>
      cells;
  auto put = [&](const TaskReport& rep, const std::string& method,
                 const std::string& eval_s, const std::string& metric, double value) {
    auto& cell = cells[{rep.task_id, method, eval_s, metric}];
    cell.first = rep.source_condition;
    cell.second.push_back(value);
  };
  for (const auto& run : report.runs) {
    for (const TaskReport* rep : {&run.acdg, &run.erm}) {
      if (rep->intra.count > 0)
        put(*rep, rep->method, "intra", "accuracy", rep->intra.metric.accuracy);
      if (rep->inter_pooled.count > 0) {
        put(*rep, rep->method, "pooled", "accuracy", rep->inter_pooled.metric.accuracy);
        put(*rep, rep->method, "pooled", "macro_f1", rep->inter_pooled.metric.macro_f1);
      }
      for (const auto& cond : rep->inter)
        put(*rep, rep->method, fmt_real(cond.condition), "accuracy",
            cond.cell.metric.accuracy);
    }
    // SNR aggregates come from the generative report, which carries every
    // method's rows.
    for (const auto& row : run.acdg.snr)
      put(run.acdg, row.method, fmt_real(row.condition), "mean_snr_db",
          row.mean_snr_db);
  }
  for (const auto& [key, cell] : cells) {
    const auto& samples = cell.second;
    double mean = 0.0;
    for (double v : samples) mean += v;
    mean /= static_cast<double>(samples.size());
    double var = 0.0;
    for (double v : samples) var += (v - mean) * (v - mean);
    var /= static_cast<double>(samples.size());
    report.aggregate.push_back({std::get<0>(key), cell.first, std::get<1>(key),
                                std::get<2>(key), std::get<3>(key), mean,
                                std::sqrt(var), static_cast<int>(samples.size())});
  }
}

}  // namespace detail

// One task per source condition: split, train both methods on the source
// training set, evaluate on the identical split, aggregate across seeds.
inline ProtocolReport run_protocol(const DomainDataset& ds, const ProtocolConfig& cfg,
                                   const std::vector<std::uint64_t>& seeds) {
  check_config(!seeds.empty(), "protocol needs at least one seed");
  const std::vector<double> sources =
      cfg.source_conditions.empty() ? ds.conditions : cfg.source_conditions;
  check_config(!sources.empty(), "protocol needs at least one source condition");

  ProtocolReport report;
  for (double src : sources) {
    for (std::uint64_t seed : seeds) {
      auto split = split_task(ds, src, cfg.train_fraction, seed);
      TrainConfig tc = cfg.train;
      tc.seed = seed;
      tc.model.axis_length = ds.axis.length;
      tc.model.n_classes = ds.class_count;
      auto acdg = train<float>(split.train, tc);
      auto erm = train_erm_baseline<float>(split.train, tc);
      RunRecord rec;
      rec.seed = seed;
      rec.acdg = evaluate_task(acdg.bundle, split, ds.axis, cfg.bands, cfg.denoisers);
      rec.erm = evaluate_task(erm.bundle, split, ds.axis, cfg.bands, cfg.denoisers);
      report.runs.push_back(std::move(rec));
    }
  }
  detail::aggregate_protocol(report);
  return report;
}

// ===== JSON serialization =====

namespace detail {

inline nlohmann::ordered_json metric_to_json(const MetricSet& m) {
  nlohmann::ordered_json j;
  j["accuracy"] = m.accuracy;
  j["macro_precision"] = m.macro_precision;
  j["macro_recall"] = m.macro_recall;
  j["macro_specificity"] = m.macro_specificity;
  j["macro_f1"] = m.macro_f1;
  j["undefined_flags"] = m.undefined_flags;
  return j;
}

inline MetricSet metric_from_json(const nlohmann::json& j) {
  try {
    MetricSet m;
    m.accuracy = j.at("accuracy").get<double>();
    m.macro_precision = j.at("macro_precision").get<double>();
    m.macro_recall = j.at("macro_recall").get<double>();
    m.macro_specificity = j.at("macro_specificity").get<double>();
    m.macro_f1 = j.at("macro_f1").get<double>();
    m.undefined_flags = j.at("undefined_flags").get<int>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("bad metric block: ") + e.what());
  }
}

inline nlohmann::ordered_json cell_to_json(const EvalCell& cell) {
  nlohmann::ordered_json j;
  j["count"] = cell.count;
  j["confusion"] = cell.cm.counts;
  j["metrics"] = metric_to_json(cell.metric);
  return j;
}

inline EvalCell cell_from_json(const nlohmann::json& j) {
  EvalCell cell;
  try {
    cell.count = j.at("count").get<long long>();
    const auto& cm = j.at("confusion");
    if (!cm.is_array()) throw SchemaError("confusion must be an array");
    cell.cm.n_classes = static_cast<int>(cm.size());
    for (const auto& row : cm) {
      if (!row.is_array() || row.size() != cm.size())
        throw SchemaError("confusion matrix is not square");
      std::vector<long long> r;
      for (const auto& v : row) {
        if (!v.is_number_integer() || v.get<long long>() < 0)
          throw SchemaError("confusion entries must be nonnegative integers");
        r.push_back(v.get<long long>());
      }
      cell.cm.counts.push_back(std::move(r));
    }
    cell.metric = metric_from_json(j.at("metrics"));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("bad evaluation cell: ") + e.what());
  }
  if (cell.count != cell.cm.total())
    throw SchemaError("cell count does not match its confusion total");
  return cell;
}

inline nlohmann::ordered_json task_report_to_json(const TaskReport& rep) {
  nlohmann::ordered_json j;
  j["format"] = "acdg-task-report";
  j["version"] = 1;
  j["task_id"] = rep.task_id;
  j["method"] = rep.method;
  j["source_condition"] = rep.source_condition;
  j["train_fraction"] = rep.train_fraction;
  j["intra"] = cell_to_json(rep.intra);
  j["inter"] = nlohmann::ordered_json::array();
  for (const auto& c : rep.inter) {
    nlohmann::ordered_json e = cell_to_json(c.cell);
    e["condition"] = c.condition;
    j["inter"].push_back(std::move(e));
  }
  j["inter_pooled"] = cell_to_json(rep.inter_pooled);
  j["snr"] = nlohmann::ordered_json::array();
  for (const auto& s : rep.snr) {
    nlohmann::ordered_json e;
    e["condition"] = s.condition;
    e["method"] = s.method;
    e["mean_snr_db"] = s.mean_snr_db;
    e["count"] = s.count;
    j["snr"].push_back(std::move(e));
  }
  return j;
}

inline TaskReport task_report_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("format", "") != std::string("acdg-task-report"))
    throw SchemaError("not a task report");
  if (j.value("version", 0) != 1) throw SchemaError("unsupported task report version");
  TaskReport rep;
  try {
    rep.task_id = j.at("task_id").get<std::string>();
    rep.method = j.at("method").get<std::string>();
    rep.source_condition = j.at("source_condition").get<double>();
    rep.train_fraction = j.at("train_fraction").get<double>();
    rep.intra = cell_from_json(j.at("intra"));
    for (const auto& e : j.at("inter")) {
      ConditionResult c;
      c.condition = e.at("condition").get<double>();
      c.cell = cell_from_json(e);
      rep.inter.push_back(std::move(c));
    }
    rep.inter_pooled = cell_from_json(j.at("inter_pooled"));
    for (const auto& e : j.at("snr")) {
      SnrEntry s;
      s.condition = e.at("condition").get<double>();
      s.method = e.at("method").get<std::string>();
      s.mean_snr_db = e.at("mean_snr_db").get<double>();
      s.count = e.at("count").get<long long>();
      rep.snr.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("bad task report: ") + e.what());
  }
  return rep;
}

inline nlohmann::json read_json_file(const std::string& path, const char* what) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError(std::string("cannot read ") + what + ": " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    throw SchemaError(std::string(what) + " is not valid JSON: " + e.what());
  }
  return j;
}

inline void write_text_file(const std::string& text, const std::string& path,
                            const char* what) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError(std::string("cannot write ") + what + ": " + path);
  f << text;
  if (!f) throw IoError(std::string("short write: ") + path);
}

}  // namespace detail

inline void save_task_report_json(const TaskReport& rep, const std::string& path) {
  detail::write_text_file(detail::task_report_to_json(rep).dump(2) + "\n", path,
                          "task report");
}

inline TaskReport load_task_report_json(const std::string& path) {
  return detail::task_report_from_json(detail::read_json_file(path, "task report"));
}

inline void save_protocol_report_json(const ProtocolReport& report,
                                      const std::string& path) {
  nlohmann::ordered_json j;
  j["format"] = "acdg-protocol-report";
  j["version"] = 1;
  j["runs"] = nlohmann::ordered_json::array();
  for (const auto& run : report.runs) {
    nlohmann::ordered_json e;
    e["seed"] = run.seed;
    e["acdg"] = detail::task_report_to_json(run.acdg);
    e["erm"] = detail::task_report_to_json(run.erm);
    j["runs"].push_back(std::move(e));
  }
  j["aggregate"] = nlohmann::ordered_json::array();
  for (const auto& row : report.aggregate) {
    nlohmann::ordered_json e;
    e["task_id"] = row.task_id;
    e["source_condition"] = row.source_condition;
    e["method"] = row.method;
    e["eval_s"] = row.eval_s;
    e["metric"] = row.metric;
    e["mean"] = row.mean;
    e["stddev"] = row.stddev;
    e["n"] = row.n;
    j["aggregate"].push_back(std::move(e));
  }
  detail::write_text_file(j.dump(2) + "\n", path, "protocol report");
}

inline ProtocolReport load_protocol_report_json(const std::string& path) {
  const auto j = detail::read_json_file(path, "protocol report");
  if (!j.is_object() || j.value("format", "") != std::string("acdg-protocol-report"))
    throw SchemaError("not a protocol report");
  if (j.value("version", 0) != 1)
    throw SchemaError("unsupported protocol report version");
  ProtocolReport report;
  try {
    for (const auto& e : j.at("runs")) {
      RunRecord run;
      run.seed = e.at("seed").get<std::uint64_t>();
      run.acdg = detail::task_report_from_json(e.at("acdg"));
      run.erm = detail::task_report_from_json(e.at("erm"));
      report.runs.push_back(std::move(run));
    }
    for (const auto& e : j.at("aggregate")) {
      AggregateRow row;
      row.task_id = e.at("task_id").get<std::string>();
      row.source_condition = e.at("source_condition").get<double>();
      row.method = e.at("method").get<std::string>();
      row.eval_s = e.at("eval_s").get<std::string>();
      row.metric = e.at("metric").get<std::string>();
      row.mean = e.at("mean").get<double>();
      row.stddev = e.at("stddev").get<double>();
      row.n = e.at("n").get<int>();
      report.aggregate.push_back(std::move(row));
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("bad protocol report: ") + e.what());
  }
  return report;
}

// ===== CSV emission =====

inline const char* kReportCsvHeader = "task,source_s,eval_s,method,metric,value";

namespace detail {

inline void append_metric_rows(std::ostringstream& out, const TaskReport& rep,
                               const std::string& eval_s, const EvalCell& cell) {
  if (cell.count == 0) return;
  auto row = [&](const std::string& metric, const std::string& value) {
    out << rep.task_id << "," << fmt_real(rep.source_condition) << "," << eval_s << ","
        << rep.method << "," << metric << "," << value << "\n";
  };
  row("count", std::to_string(cell.count));
  row("accuracy", fmt_real(cell.metric.accuracy));
  row("macro_precision", fmt_real(cell.metric.macro_precision));
  row("macro_recall", fmt_real(cell.metric.macro_recall));
  row("macro_specificity", fmt_real(cell.metric.macro_specificity));
  row("macro_f1", fmt_real(cell.metric.macro_f1));
  row("undefined_flags", std::to_string(cell.metric.undefined_flags));
}

}  // namespace detail

inline std::string task_report_csv(const TaskReport& rep) {
  std::ostringstream out;
  out << kReportCsvHeader << "\n";
  detail::append_metric_rows(out, rep, detail::fmt_real(rep.source_condition), rep.intra);
  for (const auto& c : rep.inter)
    detail::append_metric_rows(out, rep, detail::fmt_real(c.condition), c.cell);
  detail::append_metric_rows(out, rep, "pooled", rep.inter_pooled);
  for (const auto& s : rep.snr)
    out << rep.task_id << "," << detail::fmt_real(rep.source_condition) << ","
        << detail::fmt_real(s.condition) << "," << s.method << ",mean_snr_db,"
        << detail::fmt_real(s.mean_snr_db) << "\n";
  return out.str();
}

inline void save_task_csv(const TaskReport& rep, const std::string& path) {
  detail::write_text_file(task_report_csv(rep), path, "task csv");
}

inline std::string protocol_report_csv(const ProtocolReport& report) {
  std::ostringstream out;
  out << kReportCsvHeader << "\n";
  for (const auto& row : report.aggregate) {
    out << row.task_id << "," << detail::fmt_real(row.source_condition) << ","
        << row.eval_s << "," << row.method << "," << row.metric << "_mean,"
        << detail::fmt_real(row.mean) << "\n";
    out << row.task_id << "," << detail::fmt_real(row.source_condition) << ","
        << row.eval_s << "," << row.method << "," << row.metric << "_std,"
        << detail::fmt_real(row.stddev) << "\n";
  }
  return out.str();
}

inline void save_protocol_csv(const ProtocolReport& report, const std::string& path) {
  detail::write_text_file(protocol_report_csv(report), path, "protocol csv");
}

// ===== SVG line plots =====

struct PlotSeries {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

namespace detail {

inline std::string xml_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace detail

// Self-contained SVG line chart. With log_x, positions use log10(x) while tick
// labels keep the raw values; every x must then be positive.
inline std::string render_line_plot_svg(const std::string& title,
                                        const std::string& x_label,
                                        const std::string& y_label,
                                        const std::vector<PlotSeries>& series,
                                        bool log_x = false) {
  check_config(!series.empty(), "plot needs at least one series");
  std::vector<double> xs, ys;
  for (const auto& s : series) {
    check_config(!s.points.empty(), "plot series needs at least one point");
    for (const auto& [x, y] : s.points) {
      if (log_x) check_config(x > 0.0, "log axis needs positive x values");
      xs.push_back(log_x ? std::log10(x) : x);
      ys.push_back(y);
    }
  }
  auto bounds = [](std::vector<double>& v) {
    double lo = *std::min_element(v.begin(), v.end());
    double hi = *std::max_element(v.begin(), v.end());
    if (hi - lo < 1e-12) {
      lo -= 0.5;
      hi += 0.5;
    }
    const double pad = 0.06 * (hi - lo);
    return std::pair<double, double>{lo - pad, hi + pad};
  };
  const auto [x_lo, x_hi] = bounds(xs);
  const auto [y_lo, y_hi] = bounds(ys);

  const double px0 = 72, px1 = 690, py0 = 424, py1 = 56;  // y axis points up
  auto sx = [&](double x) {
    const double t = log_x ? std::log10(x) : x;
    return px0 + (t - x_lo) / (x_hi - x_lo) * (px1 - px0);
  };
  auto sy = [&](double y) { return py0 + (y - y_lo) / (y_hi - y_lo) * (py1 - py0); };

  static const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                   "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
  constexpr int kPaletteSize = 8;

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"720\" height=\"480\" "
         "viewBox=\"0 0 720 480\" font-family=\"sans-serif\">\n";
  svg << "<rect width=\"720\" height=\"480\" fill=\"#ffffff\"/>\n";
  svg << "<text x=\"360\" y=\"28\" text-anchor=\"middle\" font-size=\"16\">"
      << detail::xml_escape(title) << "</text>\n";

  // Axes.
  svg << "<line x1=\"" << px0 << "\" y1=\"" << py0 << "\" x2=\"" << px1 << "\" y2=\""
      << py0 << "\" stroke=\"#333333\"/>\n";
  svg << "<line x1=\"" << px0 << "\" y1=\"" << py0 << "\" x2=\"" << px0 << "\" y2=\""
      << py1 << "\" stroke=\"#333333\"/>\n";
  svg << "<text x=\"" << (px0 + px1) / 2
      << "\" y=\"466\" text-anchor=\"middle\" font-size=\"13\">"
      << detail::xml_escape(x_label) << "</text>\n";
  svg << "<text x=\"20\" y=\"" << (py0 + py1) / 2
      << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 20 "
      << (py0 + py1) / 2 << ")\">" << detail::xml_escape(y_label) << "</text>\n";

  // X ticks: at the distinct data positions when few, else uniform.
  std::vector<double> x_ticks = xs;
  std::sort(x_ticks.begin(), x_ticks.end());
  x_ticks.erase(std::unique(x_ticks.begin(), x_ticks.end(),
                            [](double a, double b) { return std::abs(a - b) < 1e-12; }),
                x_ticks.end());
  if (x_ticks.size() > 8) {
    x_ticks.clear();
    for (int i = 0; i <= 4; ++i) x_ticks.push_back(x_lo + (x_hi - x_lo) * i / 4.0);
  }
  for (double t : x_ticks) {
    const double raw = log_x ? std::pow(10.0, t) : t;
    const double px = px0 + (t - x_lo) / (x_hi - x_lo) * (px1 - px0);
    svg << "<line x1=\"" << px << "\" y1=\"" << py0 << "\" x2=\"" << px << "\" y2=\""
        << py0 + 5 << "\" stroke=\"#333333\"/>\n";
    svg << "<text x=\"" << px << "\" y=\"" << py0 + 20
        << "\" text-anchor=\"middle\" font-size=\"11\">" << detail::fmt_real(raw)
        << "</text>\n";
  }
  for (int i = 0; i <= 4; ++i) {
    const double y = y_lo + (y_hi - y_lo) * i / 4.0;
    const double py = sy(y);
    svg << "<line x1=\"" << px0 - 5 << "\" y1=\"" << py << "\" x2=\"" << px0
        << "\" y2=\"" << py << "\" stroke=\"#333333\"/>\n";
    svg << "<text x=\"" << px0 - 9 << "\" y=\"" << py + 4
        << "\" text-anchor=\"end\" font-size=\"11\">" << detail::fmt_real(y)
        << "</text>\n";
  }

  // Series.
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = kPalette[k % kPaletteSize];
    auto pts = series[k].points;
    std::sort(pts.begin(), pts.end());
    svg << "<polyline fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"2\" points=\"";
    for (const auto& [x, y] : pts) svg << sx(x) << "," << sy(y) << " ";
    svg << "\"/>\n";
    for (const auto& [x, y] : pts)
      svg << "<circle cx=\"" << sx(x) << "\" cy=\"" << sy(y) << "\" r=\"3\" fill=\""
          << color << "\"/>\n";
    const double ly = 56.0 + 18.0 * static_cast<double>(k);
    svg << "<line x1=\"560\" y1=\"" << ly - 4 << "\" x2=\"584\" y2=\"" << ly - 4
        << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"590\" y=\"" << ly << "\" font-size=\"12\">"
        << detail::xml_escape(series[k].label) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

inline void save_svg(const std::string& svg, const std::string& path) {
  detail::write_text_file(svg, path, "svg plot");
}

}  // namespace acdg
