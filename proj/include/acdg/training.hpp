// ===== Alternating two-player training, sampling, logging, checkpoints =====
//
// Each batch runs two phases against the same data. Phase one freezes the
// generators and fits the task networks to beta*task + invariance. Phase two
// freezes the task networks and fits the generators to alpha*generation +
// semantics, backpropagating through the frozen task stack. "Frozen" means
// excluded from the optimizer step; gradients still flow through the graph
// and are discarded. Batch-norm running statistics are buffers, not
// parameters, and update in any train-mode forward regardless of freeze
// state.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "acdg/common.hpp"
#include "acdg/losses.hpp"
#include "acdg/model.hpp"
#include "acdg/optim.hpp"
#include "acdg/rng.hpp"
#include "acdg/spectra.hpp"
#include "json.hpp"

namespace acdg {

// ===== Config =====

struct TrainConfig {
  ModelConfig model;
  double lr = 1e-4;
  int batch_size = 12;
  int epochs = 100;
  double tau = 0.2;
  double alpha = 0.01;
  double beta = 0.1;
  double weight_decay = 0.01;
  std::uint64_t seed = 0;
  bool class_balanced = true;

  void validate() const {
    model.validate();
    check_config(lr > 0.0, "learning rate must be positive");
    check_config(batch_size >= 4, "batch size must be at least 4");
    check_config(epochs >= 1, "need at least one epoch");
    check_config(tau > 0.0, "temperature must be positive");
    check_config(alpha >= 0.0 && beta >= 0.0, "loss weights must be nonnegative");
    check_config(weight_decay >= 0.0, "weight decay must be nonnegative");
  }
};

struct EpochLog {
  int epoch = 0;
  double l_dt = 0.0;
  double l_task = 0.0;
  double l_invariance = 0.0;
  double l_dg = 0.0;
  double l_generation = 0.0;
  double l_semantics = 0.0;
  double train_accuracy = 0.0;
};

// ===== Sampling =====

// Each batch draws ceil(batch_size / C') samples from C' randomly chosen
// classes, interleaved round-robin and trimmed to batch_size, so every class
// in the batch keeps at least two members and every contrastive anchor has a
// positive. C' = min(#classes with >=2 samples, 4, batch_size / 2).
class BalancedSampler {
 public:
  BalancedSampler(const std::vector<int>& labels, int batch_size)
      : batch_size_(batch_size) {
    check_config(batch_size >= 4, "batch size must be at least 4");
    std::map<int, std::vector<int>> pools;
    for (std::size_t i = 0; i < labels.size(); ++i)
      pools[labels[i]].push_back(static_cast<int>(i));
    for (auto& [label, pool] : pools)
      if (pool.size() >= 2) pools_.push_back(std::move(pool));
    check_config(!pools_.empty(), "sampler: no class has at least 2 samples");
  }

  std::vector<int> next(Rng& rng) {
    const int c_take = std::max(
        1, std::min({static_cast<int>(pools_.size()), 4, batch_size_ / 2}));
    std::vector<int> order(pools_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    rng.shuffle(order.begin(), order.end());

    const int per = (batch_size_ + c_take - 1) / c_take;
    std::vector<std::vector<int>> draws(c_take);
    for (int c = 0; c < c_take; ++c) {
      auto pool = pools_[order[c]];
      rng.shuffle(pool.begin(), pool.end());
      for (int j = 0; j < per; ++j)
        draws[c].push_back(pool[static_cast<std::size_t>(j) % pool.size()]);
    }
    std::vector<int> batch;
    for (int j = 0; j < per && static_cast<int>(batch.size()) < batch_size_; ++j)
      for (int c = 0; c < c_take && static_cast<int>(batch.size()) < batch_size_; ++c)
        batch.push_back(draws[c][j]);
    return batch;
  }

 private:
  int batch_size_;
  std::vector<std::vector<int>> pools_;
};

// ===== Step internals =====

struct StepStats {
  double l_dt = 0.0;
  double l_task = 0.0;
  double l_invariance = 0.0;
  double l_dg = 0.0;
  double l_generation = 0.0;
  double l_semantics = 0.0;
  double accuracy = 0.0;
};

namespace detail {

inline void check_batch_has_pair(const std::vector<int>& labels) {
  std::map<int, int> counts;
  for (int l : labels) ++counts[l];
  for (const auto& [label, c] : counts)
    if (c >= 2) return;
  throw UsageError("batch has no class with at least 2 samples");
}

template <typename T>
ArrayRef<T> batch_input(const std::vector<Spectrum>& data, const std::vector<int>& idx,
                        int axis_length) {
  check_usage(!idx.empty(), "empty batch");
  auto x = zeros<T>({static_cast<int>(idx.size()), 1, axis_length});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto& s = data[static_cast<std::size_t>(idx[i])];
    check_dim(static_cast<int>(s.intensities.size()) == axis_length,
              "spectrum length does not match model config");
    auto norm = normalize_minmax(s.intensities);
    std::copy(norm.begin(), norm.end(),
              x->values.begin() + static_cast<std::ptrdiff_t>(i) * axis_length);
  }
  return x;
}

// One source batch pushed through every generator and then, block by block,
// through the shared extractor and both heads.
template <typename T>
struct OmegaForward {
  std::vector<ArrayRef<T>> logits_blocks;  // [K+1] entries of [B, C]
  ArrayRef<T> z_all;                       // [(K+1)B, d_z]
  ArrayRef<T> logits_all;                  // [(K+1)B, C]
  std::vector<int> labels_all;
  std::vector<int> domains_all;
};

template <typename T>
OmegaForward<T> forward_omega(Tape<T>& tape, const ModelBundle<T>& bundle,
                              const ArrayRef<T>& x, const std::vector<int>& labels) {
  const int K = static_cast<int>(bundle.generators.size());
  std::vector<ArrayRef<T>> xs{x};
  for (const auto& g : bundle.generators)
    xs.push_back(g.generate(tape, x, Mode::kTrain));

  OmegaForward<T> out;
  std::vector<ArrayRef<T>> z_blocks;
  for (int b = 0; b <= K; ++b) {
    auto feats = bundle.extract(tape, xs[static_cast<std::size_t>(b)], Mode::kTrain);
    z_blocks.push_back(bundle.project(tape, feats));
    out.logits_blocks.push_back(bundle.classify(tape, feats));
    for (int l : labels) out.labels_all.push_back(l);
    for (std::size_t i = 0; i < labels.size(); ++i) out.domains_all.push_back(b);
  }
  out.z_all = concat0(tape, z_blocks);
  out.logits_all = concat0(tape, out.logits_blocks);
  return out;
}

template <typename T>
double block_accuracy(const ArrayRef<T>& logits, const std::vector<int>& labels) {
  const int n = logits->shape[0], c = logits->shape[1];
  int hits = 0;
  for (int i = 0; i < n; ++i) {
    const T* row = logits->values.data() + static_cast<std::size_t>(i) * c;
    int best = 0;
    for (int j = 1; j < c; ++j)
      if (row[j] > row[best]) best = j;
    if (best == labels[static_cast<std::size_t>(i)]) ++hits;
  }
  return static_cast<double>(hits) / n;
}

inline std::vector<int> batch_labels(const std::vector<Spectrum>& data,
                                     const std::vector<int>& idx, int n_classes) {
  std::vector<int> labels;
  for (int i : idx) {
    const int l = data[static_cast<std::size_t>(i)].strain_label;
    check_config(l >= 0 && l < n_classes, "strain label outside configured class count");
    labels.push_back(l);
  }
  return labels;
}

}  // namespace detail

// ===== Alternating steps =====

// Phase one: generators frozen, task networks updated from
// beta*task + invariance. The classifier sees only the task gradient and the
// projection head only the invariance gradient by graph structure; with
// beta = 0 the classifier is additionally frozen so the optimizer leaves it
// bitwise untouched.
template <typename T>
StepStats step_task(ModelBundle<T>& bundle, AdamW<T>& opt,
                    const std::vector<Spectrum>& data, const std::vector<int>& batch,
                    const TrainConfig& cfg) {
  auto labels = detail::batch_labels(data, batch, cfg.model.n_classes);
  detail::check_batch_has_pair(labels);

  bundle.freeze_generators(true);
  const bool classifier_idle = cfg.beta == 0.0;
  if (classifier_idle) bundle.params.set_frozen("classifier", true);
  bundle.params.zero_grad();

  Tape<T> tape;
  auto x = detail::batch_input<T>(data, batch, cfg.model.axis_length);
  auto fwd = detail::forward_omega(tape, bundle, x, labels);
  auto inv = invariance_loss(
      tape, EmbeddingBatch<T>{fwd.z_all, fwd.labels_all, fwd.domains_all}, cfg.tau);
  auto task = task_loss(tape, fwd.logits_all, fwd.labels_all);
  auto l_dt = dt_loss(tape, task, inv, cfg.beta);
  tape.backward(l_dt);
  opt.step(bundle.params);

  if (classifier_idle) bundle.params.set_frozen("classifier", false);
  bundle.freeze_generators(false);

  StepStats s;
  s.l_dt = static_cast<double>(l_dt->values[0]);
  s.l_task = static_cast<double>(task->values[0]);
  s.l_invariance = static_cast<double>(inv->values[0]);
  s.accuracy = detail::block_accuracy(fwd.logits_blocks[0], labels);
  return s;
}

// Phase two: task networks frozen, generators updated from
// alpha*generation + semantics backpropagated through the frozen stack.
template <typename T>
StepStats step_generation(ModelBundle<T>& bundle, AdamW<T>& opt,
                          const std::vector<Spectrum>& data,
                          const std::vector<int>& batch, const TrainConfig& cfg) {
  auto labels = detail::batch_labels(data, batch, cfg.model.n_classes);
  detail::check_batch_has_pair(labels);

  bundle.freeze_task_networks(true);
  bundle.params.zero_grad();

  Tape<T> tape;
  auto x = detail::batch_input<T>(data, batch, cfg.model.axis_length);
  auto fwd = detail::forward_omega(tape, bundle, x, labels);
  const int K = static_cast<int>(bundle.generators.size());
  auto gen = generation_loss(
      tape, EmbeddingBatch<T>{fwd.z_all, fwd.labels_all, fwd.domains_all}, K, cfg.tau);
  std::vector<ArrayRef<T>> extended_logits(fwd.logits_blocks.begin() + 1,
                                           fwd.logits_blocks.end());
  auto sem = semantics_loss(tape, extended_logits, labels);
  auto l_dg = dg_loss(tape, gen, sem, cfg.alpha);
  tape.backward(l_dg);
  opt.step(bundle.params);

  bundle.freeze_task_networks(false);

  StepStats s;
  s.l_dg = static_cast<double>(l_dg->values[0]);
  s.l_generation = static_cast<double>(gen->values[0]);
  s.l_semantics = static_cast<double>(sem->values[0]);
  return s;
}

// ===== Orchestration =====

enum class StepPhase { kTask, kGeneration };
enum class StepEdge { kBefore, kAfter };

template <typename T>
struct TrainHooks {
  std::function<void(const ModelBundle<T>&, int epoch, int batch, StepPhase, StepEdge)>
      observe;
};

template <typename T>
struct TrainResult {
  ModelBundle<T> bundle;
  std::vector<EpochLog> logs;
};

namespace detail {

inline void validate_training_inputs(const std::vector<Spectrum>& train_set,
                                     const TrainConfig& cfg) {
  cfg.validate();
  check_config(!train_set.empty(), "empty training dataset");
  for (const auto& s : train_set)
    check_config(s.condition_s == train_set.front().condition_s,
                 "training data must come from a single acquisition condition");
  std::vector<int> class_counts(static_cast<std::size_t>(cfg.model.n_classes), 0);
  for (const auto& s : train_set) {
    check_config(s.strain_label >= 0 && s.strain_label < cfg.model.n_classes,
                 "strain label outside configured class count");
    ++class_counts[static_cast<std::size_t>(s.strain_label)];
  }
  for (int c = 0; c < cfg.model.n_classes; ++c)
    check_config(class_counts[static_cast<std::size_t>(c)] >= 2,
                 "class " + std::to_string(c) + " has fewer than 2 training samples");
}

}  // namespace detail

template <typename T>
TrainResult<T> train(const std::vector<Spectrum>& train_set, const TrainConfig& cfg,
                     const TrainHooks<T>* hooks = nullptr) {
  detail::validate_training_inputs(train_set, cfg);

  ModelBundle<T> bundle(cfg.model, cfg.seed);
  AdamW<T> opt(typename AdamW<T>::Config{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
  Rng rng(mix_seed(cfg.seed, 0x545241494EULL));

  std::vector<int> labels;
  for (const auto& s : train_set) labels.push_back(s.strain_label);
  BalancedSampler sampler(labels, cfg.batch_size);

  const int n = static_cast<int>(train_set.size());
  const int batches_per_epoch = std::max(1, n / cfg.batch_size);

  std::vector<int> sequential(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) sequential[static_cast<std::size_t>(i)] = i;

  std::vector<EpochLog> logs;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (!cfg.class_balanced) rng.shuffle(sequential.begin(), sequential.end());
    EpochLog log;
    log.epoch = epoch;
    for (int b = 0; b < batches_per_epoch; ++b) {
      std::vector<int> batch;
      if (cfg.class_balanced) {
        batch = sampler.next(rng);
      } else {
        const auto base = static_cast<std::size_t>(b) * cfg.batch_size;
        const auto end = std::min(base + static_cast<std::size_t>(cfg.batch_size),
                                  static_cast<std::size_t>(n));
        batch.assign(sequential.begin() + static_cast<std::ptrdiff_t>(base),
                     sequential.begin() + static_cast<std::ptrdiff_t>(end));
      }
      if (hooks && hooks->observe)
        hooks->observe(bundle, epoch, b, StepPhase::kTask, StepEdge::kBefore);
      auto a = step_task(bundle, opt, train_set, batch, cfg);
      if (hooks && hooks->observe)
        hooks->observe(bundle, epoch, b, StepPhase::kTask, StepEdge::kAfter);

      if (hooks && hooks->observe)
        hooks->observe(bundle, epoch, b, StepPhase::kGeneration, StepEdge::kBefore);
      auto g = step_generation(bundle, opt, train_set, batch, cfg);
      if (hooks && hooks->observe)
        hooks->observe(bundle, epoch, b, StepPhase::kGeneration, StepEdge::kAfter);

      log.l_dt += a.l_dt;
      log.l_task += a.l_task;
      log.l_invariance += a.l_invariance;
      log.train_accuracy += a.accuracy;
      log.l_dg += g.l_dg;
      log.l_generation += g.l_generation;
      log.l_semantics += g.l_semantics;
    }
    const double inv_b = 1.0 / batches_per_epoch;
    log.l_dt *= inv_b;
    log.l_task *= inv_b;
    log.l_invariance *= inv_b;
    log.l_dg *= inv_b;
    log.l_generation *= inv_b;
    log.l_semantics *= inv_b;
    log.train_accuracy *= inv_b;
    logs.push_back(log);
  }
  bundle.trained = true;
  return TrainResult<T>{std::move(bundle), std::move(logs)};
}

// ===== Parameter hashing =====

// FNV-1a over the raw bytes of every trainable parameter whose name starts
// with the prefix. Buffers (running statistics) are excluded: they update in
// any train-mode forward and are not part of the freeze contract.
template <typename T>
std::uint64_t hash_params(const ParamRegistry<T>& params, const std::string& prefix = "") {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : params.items()) {
    if (!p.trainable) continue;
    if (p.name.rfind(prefix, 0) != 0) continue;
    const auto* bytes = reinterpret_cast<const unsigned char*>(p.value->values.data());
    const std::size_t len = p.value->values.size() * sizeof(T);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

// ===== Epoch log stream =====

inline void save_epoch_logs(const std::string& path, const std::vector<EpochLog>& logs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  for (const auto& l : logs) {
    nlohmann::json j;
    j["epoch"] = l.epoch;
    j["l_dt"] = l.l_dt;
    j["l_task"] = l.l_task;
    j["l_invariance"] = l.l_invariance;
    j["l_dg"] = l.l_dg;
    j["l_generation"] = l.l_generation;
    j["l_semantics"] = l.l_semantics;
    j["train_accuracy"] = l.train_accuracy;
    out << j.dump() << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

inline std::vector<EpochLog> load_epoch_logs(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  std::vector<EpochLog> logs;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw SchemaError("epoch log line is not valid JSON");
    try {
      EpochLog l;
      l.epoch = j.at("epoch").get<int>();
      l.l_dt = j.at("l_dt").get<double>();
      l.l_task = j.at("l_task").get<double>();
      l.l_invariance = j.at("l_invariance").get<double>();
      l.l_dg = j.at("l_dg").get<double>();
      l.l_generation = j.at("l_generation").get<double>();
      l.l_semantics = j.at("l_semantics").get<double>();
      l.train_accuracy = j.at("train_accuracy").get<double>();
      logs.push_back(l);
    } catch (const nlohmann::json::exception&) {
      throw SchemaError("epoch log line is missing a required key");
    }
  }
  return logs;
}

// ===== Checkpoints =====
//
// Layout: <dir>/manifest.json + <dir>/params.bin. The payload is every
// registered parameter and buffer, in registry order, as little-endian
// IEEE-754 float32. The manifest records names, shapes, and byte offsets,
// echoes the full config, and carries the epoch and sampler RNG state.

struct CheckpointMeta {
  int epoch = 0;
  std::string rng_state;
};

namespace detail {

inline nlohmann::json model_config_json(const ModelConfig& m) {
  nlohmann::json j;
  j["axis_length"] = m.axis_length;
  j["n_classes"] = m.n_classes;
  j["n_generators"] = m.n_generators;
  j["gen_ch1"] = m.gen_ch1;
  j["gen_ch2"] = m.gen_ch2;
  j["gen_stride"] = m.gen_stride;
  j["stem_channels"] = m.stem_channels;
  j["d_z"] = m.d_z;
  auto plan = nlohmann::json::array();
  for (const auto& [ch, stride] : m.block_plan) plan.push_back({ch, stride});
  j["block_plan"] = plan;
  return j;
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig m;
  m.axis_length = j.at("axis_length").get<int>();
  m.n_classes = j.at("n_classes").get<int>();
  m.n_generators = j.at("n_generators").get<int>();
  m.gen_ch1 = j.at("gen_ch1").get<int>();
  m.gen_ch2 = j.at("gen_ch2").get<int>();
  m.gen_stride = j.at("gen_stride").get<int>();
  m.stem_channels = j.at("stem_channels").get<int>();
  m.d_z = j.at("d_z").get<int>();
  m.block_plan.clear();
  for (const auto& e : j.at("block_plan"))
    m.block_plan.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
  return m;
}

inline void append_f32_le(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  out.push_back(static_cast<char>(bits & 0xff));
  out.push_back(static_cast<char>((bits >> 8) & 0xff));
  out.push_back(static_cast<char>((bits >> 16) & 0xff));
  out.push_back(static_cast<char>((bits >> 24) & 0xff));
}

inline float read_f32_le(const unsigned char* p) {
  const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) |
                             (static_cast<std::uint32_t>(p[1]) << 8) |
                             (static_cast<std::uint32_t>(p[2]) << 16) |
                             (static_cast<std::uint32_t>(p[3]) << 24);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace detail

template <typename T>
void save_checkpoint(const ModelBundle<T>& bundle, const TrainConfig& cfg,
                     const CheckpointMeta& meta, const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create checkpoint directory: " + dir);

  std::string payload;
  auto entries = nlohmann::json::array();
  for (const auto& p : bundle.params.items()) {
    nlohmann::json e;
    e["name"] = p.name;
    e["shape"] = p.value->shape;
    e["offset"] = payload.size();
    e["trainable"] = p.trainable;
    entries.push_back(e);
    for (const T v : p.value->values)
      detail::append_f32_le(payload, static_cast<float>(v));
  }

  nlohmann::json manifest;
  manifest["format"] = "acdg-checkpoint";
  manifest["version"] = 1;
  manifest["epoch"] = meta.epoch;
  manifest["rng_state"] = meta.rng_state;
  manifest["trained"] = bundle.trained;
  manifest["payload_bytes"] = payload.size();
  manifest["model"] = detail::model_config_json(cfg.model);
  manifest["train"] = {
      {"lr", cfg.lr},           {"batch_size", cfg.batch_size},
      {"epochs", cfg.epochs},   {"tau", cfg.tau},
      {"alpha", cfg.alpha},     {"beta", cfg.beta},
      {"weight_decay", cfg.weight_decay},
      {"seed", cfg.seed},       {"class_balanced", cfg.class_balanced}};
  manifest["params"] = entries;

  const auto dirp = std::filesystem::path(dir);
  {
    std::ofstream out(dirp / "manifest.json", std::ios::binary);
    if (!out) throw IoError("cannot write manifest in: " + dir);
    out << manifest.dump(2) << "\n";
    if (!out) throw IoError("manifest write failed in: " + dir);
  }
  {
    std::ofstream out(dirp / "params.bin", std::ios::binary);
    if (!out) throw IoError("cannot write payload in: " + dir);
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw IoError("payload write failed in: " + dir);
  }
}

template <typename T>
struct LoadedCheckpoint {
  ModelBundle<T> bundle;
  TrainConfig cfg;
  CheckpointMeta meta;
};

template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::string& dir) {
  const auto dirp = std::filesystem::path(dir);
  std::ifstream min(dirp / "manifest.json", std::ios::binary);
  if (!min) throw IoError("cannot open manifest in: " + dir);
  nlohmann::json manifest = nlohmann::json::parse(min, nullptr, false);
  if (manifest.is_discarded())
    throw CorruptManifestError("manifest is not valid JSON: " + dir);

  TrainConfig cfg;
  CheckpointMeta meta;
  bool trained = false;
  std::size_t payload_bytes = 0;
  nlohmann::json entries;
  try {
    if (manifest.at("format").get<std::string>() != "acdg-checkpoint")
      throw CorruptManifestError("unrecognized checkpoint format tag: " + dir);
    if (manifest.at("version").get<int>() != 1)
      throw CorruptManifestError("unsupported checkpoint version: " + dir);
    meta.epoch = manifest.at("epoch").get<int>();
    meta.rng_state = manifest.at("rng_state").get<std::string>();
    trained = manifest.at("trained").get<bool>();
    payload_bytes = manifest.at("payload_bytes").get<std::size_t>();
    cfg.model = detail::model_config_from_json(manifest.at("model"));
    const auto& t = manifest.at("train");
    cfg.lr = t.at("lr").get<double>();
    cfg.batch_size = t.at("batch_size").get<int>();
    cfg.epochs = t.at("epochs").get<int>();
    cfg.tau = t.at("tau").get<double>();
    cfg.alpha = t.at("alpha").get<double>();
    cfg.beta = t.at("beta").get<double>();
    cfg.weight_decay = t.at("weight_decay").get<double>();
    cfg.seed = t.at("seed").get<std::uint64_t>();
    cfg.class_balanced = t.at("class_balanced").get<bool>();
    entries = manifest.at("params");
  } catch (const nlohmann::json::exception& e) {
    throw CorruptManifestError(std::string("manifest is missing or mistyping a key: ") +
                               e.what());
  }

  LoadedCheckpoint<T> out{ModelBundle<T>(cfg.model, cfg.seed), cfg, meta};
  auto& items = out.bundle.params.items();
  if (!entries.is_array() || entries.size() != items.size())
    throw ShapeMismatchError("manifest parameter list does not match the model");

  std::ifstream pin(dirp / "params.bin", std::ios::binary | std::ios::ate);
  if (!pin) throw IoError("cannot open payload in: " + dir);
  const auto file_bytes = static_cast<std::size_t>(pin.tellg());
  if (file_bytes != payload_bytes)
    throw TruncatedPayloadError("payload size does not match manifest: " + dir);
  pin.seekg(0);
  std::vector<unsigned char> payload(file_bytes);
  pin.read(reinterpret_cast<char*>(payload.data()),
           static_cast<std::streamsize>(file_bytes));
  if (!pin) throw IoError("payload read failed in: " + dir);

  std::size_t expected = 0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& e = entries[i];
    std::string name;
    Shape shape;
    std::size_t offset = 0;
    try {
      name = e.at("name").get<std::string>();
      shape = e.at("shape").get<Shape>();
      offset = e.at("offset").get<std::size_t>();
    } catch (const nlohmann::json::exception&) {
      throw CorruptManifestError("parameter entry is missing a key: " + dir);
    }
    auto& p = items[i];
    if (name != p.name || shape != p.value->shape)
      throw ShapeMismatchError("parameter " + std::to_string(i) + " expected " + p.name +
                               shape_str(p.value->shape) + ", manifest has " + name +
                               shape_str(shape));
    const std::size_t count = p.value->values.size();
    if (offset != expected)
      throw CorruptManifestError("parameter offsets are not contiguous: " + dir);
    expected += count * 4;
    if (offset + count * 4 > file_bytes)
      throw TruncatedPayloadError("payload too short for parameter " + name);
    for (std::size_t k = 0; k < count; ++k)
      p.value->values[k] =
          static_cast<T>(detail::read_f32_le(payload.data() + offset + 4 * k));
  }
  if (expected != file_bytes)
    throw TruncatedPayloadError("payload has trailing bytes: " + dir);
  out.bundle.trained = trained;
  return out;
}

}  // namespace acdg
