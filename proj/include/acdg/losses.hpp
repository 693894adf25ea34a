// ===== Contrastive and classification objectives =====
//
// One supervised-contrastive kernel parameterized by explicit anchor /
// positive / denominator index sets; the named losses differ only in how the
// sets are built from (labels, domains). Domain tags: 0 = source, k in 1..K =
// extended domain k. Averaging convention: mean over positives per anchor,
// then mean over anchors that have at least one positive; anchors without
// positives are skipped and counted.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "acdg/common.hpp"
#include "acdg/ops.hpp"
#include "acdg/tensor.hpp"

namespace acdg {

// ===== Weights =====

struct LossWeights {
  double tau = 0.2;
  double alpha = 0.01;
  double beta = 0.1;

  void validate() const {
    check_config(tau > 0.0, "temperature must be positive");
    check_config(alpha >= 0.0 && beta >= 0.0, "loss weights must be nonnegative");
  }
};

// ===== Batch bookkeeping =====

template <typename T>
struct EmbeddingBatch {
  ArrayRef<T> z;              // [n, d]
  std::vector<int> labels;    // [n]
  std::vector<int> domains;   // [n], 0 = source, 1..K = extended
};

struct ContrastiveSets {
  std::vector<int> anchors;
  std::vector<std::vector<int>> positives;  // per anchor
  std::vector<std::vector<int>> denoms;     // per anchor
};

struct ContrastiveDiag {
  int anchors_total = 0;
  int anchors_skipped = 0;
};

// ===== Fused supervised-contrastive kernel =====

template <typename T>
ArrayRef<T> supcon(Tape<T>& tape, const ArrayRef<T>& z, const ContrastiveSets& sets,
                   double tau, ContrastiveDiag* diag = nullptr) {
  check_dim(z->shape.size() == 2, "embeddings must be [n, d]");
  check_config(tau > 0.0, "temperature must be positive");
  const int n = z->shape[0];
  const int d = z->shape[1];
  const std::size_t n_anchors = sets.anchors.size();
  check_dim(sets.positives.size() == n_anchors && sets.denoms.size() == n_anchors,
            "contrastive sets are inconsistent");

  for (std::size_t a = 0; a < n_anchors; ++a) {
    const int i = sets.anchors[a];
    check_dim(i >= 0 && i < n, "anchor index out of range");
    check_usage(!sets.denoms[a].empty(), "empty denominator set for anchor");
    for (int j : sets.denoms[a]) {
      check_dim(j >= 0 && j < n, "denominator index out of range");
      check_usage(j != i, "anchor may not appear in its own denominator set");
    }
    for (int p : sets.positives[a])
      check_usage(std::find(sets.denoms[a].begin(), sets.denoms[a].end(), p) !=
                      sets.denoms[a].end(),
                  "positive set must be contained in the denominator set");
  }

  // Cosine similarities with the shared eps floor on each norm.
  const T eps = static_cast<T>(kStdEps);
  std::vector<T> norm(n), raw_norm(n);
  std::vector<char> floored(n);
  for (int i = 0; i < n; ++i) {
    T sq = T(0);
    for (int k = 0; k < d; ++k) {
      const T v = z->values[static_cast<std::size_t>(i) * d + k];
      sq += v * v;
    }
    raw_norm[i] = std::sqrt(sq);
    floored[i] = raw_norm[i] < eps;
    norm[i] = std::max(raw_norm[i], eps);
  }
  std::vector<T> sim(static_cast<std::size_t>(n) * n, T(0));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      T dot = T(0);
      for (int k = 0; k < d; ++k)
        dot += z->values[static_cast<std::size_t>(i) * d + k] *
               z->values[static_cast<std::size_t>(j) * d + k];
      sim[static_cast<std::size_t>(i) * n + j] = dot / (norm[i] * norm[j]);
    }

  // Per-anchor mean over positives of (logsumexp over denoms - positive sim).
  int valid = 0, skipped = 0;
  std::vector<char> anchor_valid(n_anchors, 0);
  T total = T(0);
  for (std::size_t a = 0; a < n_anchors; ++a) {
    if (sets.positives[a].empty()) {
      ++skipped;
      continue;
    }
    anchor_valid[a] = 1;
    ++valid;
    const int i = sets.anchors[a];
    T mx = -std::numeric_limits<T>::infinity();
    for (int j : sets.denoms[a])
      mx = std::max(mx, sim[static_cast<std::size_t>(i) * n + j] / static_cast<T>(tau));
    T acc = T(0);
    for (int j : sets.denoms[a])
      acc += std::exp(sim[static_cast<std::size_t>(i) * n + j] / static_cast<T>(tau) - mx);
    const T lse = mx + std::log(acc);
    T anchor_term = T(0);
    for (int p : sets.positives[a])
      anchor_term += lse - sim[static_cast<std::size_t>(i) * n + p] / static_cast<T>(tau);
    total += anchor_term / static_cast<T>(sets.positives[a].size());
  }
  if (diag != nullptr) {
    diag->anchors_total += static_cast<int>(n_anchors);
    diag->anchors_skipped += skipped;
  }

  auto out = scalar_array<T>(valid > 0 ? total / static_cast<T>(valid) : T(0));
  if (!z->requires_grad || valid == 0) return out;
  out->requires_grad = true;

  tape.record([z, out, sets, sim, norm, raw_norm, floored, anchor_valid, n, d, tau,
               valid]() {
    if (!out->has_grad()) return;
    const T g = out->grad[0];
    if (g == T(0)) return;
    z->ensure_grad();

    // dLoss/dSim, sparse over (anchor, member) pairs.
    std::vector<T> gs(static_cast<std::size_t>(n) * n, T(0));
    const T inv_tau = T(1) / static_cast<T>(tau);
    for (std::size_t a = 0; a < sets.anchors.size(); ++a) {
      if (!anchor_valid[a]) continue;
      const int i = sets.anchors[a];
      const T anchor_w = g / static_cast<T>(valid);
      T mx = -std::numeric_limits<T>::infinity();
      for (int j : sets.denoms[a])
        mx = std::max(mx, sim[static_cast<std::size_t>(i) * n + j] * inv_tau);
      T acc = T(0);
      for (int j : sets.denoms[a])
        acc += std::exp(sim[static_cast<std::size_t>(i) * n + j] * inv_tau - mx);
      for (int j : sets.denoms[a]) {
        const T w = std::exp(sim[static_cast<std::size_t>(i) * n + j] * inv_tau - mx) / acc;
        gs[static_cast<std::size_t>(i) * n + j] += anchor_w * w * inv_tau;
      }
      const T pw = anchor_w * inv_tau / static_cast<T>(sets.positives[a].size());
      for (int p : sets.positives[a]) gs[static_cast<std::size_t>(i) * n + p] -= pw;
    }

    // Chain through the cosine: dS_ij/dz_i = z_j/(Ni Nj) - S_ij z_i/Ni^2,
    // with the z_i term dropped when the norm was floored.
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const T G = gs[static_cast<std::size_t>(i) * n + j];
        if (G == T(0)) continue;
        const T s = sim[static_cast<std::size_t>(i) * n + j];
        const T inv_ninj = T(1) / (norm[i] * norm[j]);
        for (int k = 0; k < d; ++k) {
          const T zi = z->values[static_cast<std::size_t>(i) * d + k];
          const T zj = z->values[static_cast<std::size_t>(j) * d + k];
          T gi = zj * inv_ninj;
          if (!floored[i]) gi -= s * zi / (norm[i] * norm[i]);
          T gj = zi * inv_ninj;
          if (!floored[j]) gj -= s * zj / (norm[j] * norm[j]);
          z->grad[static_cast<std::size_t>(i) * d + k] += G * gi;
          z->grad[static_cast<std::size_t>(j) * d + k] += G * gj;
        }
      }
  });
  return out;
}

// ===== Set builders =====

namespace detail {
inline void check_batch_tags(const std::vector<int>& labels, const std::vector<int>& domains) {
  check_dim(labels.size() == domains.size(), "labels/domains size mismatch");
  check_dim(labels.size() >= 2, "contrastive batch needs at least 2 samples");
  for (int d : domains) check_dim(d >= 0, "negative domain tag");
}
}  // namespace detail

// Anchors: source samples. Positives: other source samples of the same class.
// Denominator: everything except the anchor.
inline ContrastiveSets sets_expansion(const std::vector<int>& labels,
                                      const std::vector<int>& domains) {
  detail::check_batch_tags(labels, domains);
  const int n = static_cast<int>(labels.size());
  ContrastiveSets sets;
  for (int i = 0; i < n; ++i) {
    if (domains[i] != 0) continue;
    sets.anchors.push_back(i);
    std::vector<int> pos, den;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      den.push_back(j);
      if (domains[j] == 0 && labels[j] == labels[i]) pos.push_back(j);
    }
    sets.positives.push_back(std::move(pos));
    sets.denoms.push_back(std::move(den));
  }
  return sets;
}

// For one extended domain k: anchors are its samples, positives the same-class
// samples within it, denominator all extended samples (any k) except the
// anchor.
inline ContrastiveSets sets_diversity_for(const std::vector<int>& labels,
                                          const std::vector<int>& domains, int k) {
  detail::check_batch_tags(labels, domains);
  check_config(k >= 1, "extended domain index starts at 1");
  const int n = static_cast<int>(labels.size());
  ContrastiveSets sets;
  for (int i = 0; i < n; ++i) {
    if (domains[i] != k) continue;
    sets.anchors.push_back(i);
    std::vector<int> pos, den;
    for (int j = 0; j < n; ++j) {
      if (j == i || domains[j] == 0) continue;
      den.push_back(j);
      if (domains[j] == k && labels[j] == labels[i]) pos.push_back(j);
    }
    sets.positives.push_back(std::move(pos));
    sets.denoms.push_back(std::move(den));
  }
  return sets;
}

// Anchors: every sample. Positives: same-class samples from any domain.
// Denominator: everything except the anchor.
inline ContrastiveSets sets_invariance(const std::vector<int>& labels,
                                       const std::vector<int>& domains) {
  detail::check_batch_tags(labels, domains);
  const int n = static_cast<int>(labels.size());
  ContrastiveSets sets;
  for (int i = 0; i < n; ++i) {
    sets.anchors.push_back(i);
    std::vector<int> pos, den;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      den.push_back(j);
      if (labels[j] == labels[i]) pos.push_back(j);
    }
    sets.positives.push_back(std::move(pos));
    sets.denoms.push_back(std::move(den));
  }
  return sets;
}

// ===== Named losses =====

template <typename T>
ArrayRef<T> expansion_loss(Tape<T>& tape, const EmbeddingBatch<T>& batch, double tau,
                           ContrastiveDiag* diag = nullptr) {
  return supcon(tape, batch.z, sets_expansion(batch.labels, batch.domains), tau, diag);
}

template <typename T>
ArrayRef<T> diversity_loss(Tape<T>& tape, const EmbeddingBatch<T>& batch, int n_generators,
                           double tau, ContrastiveDiag* diag = nullptr) {
  check_config(n_generators >= 1, "need at least one extended domain");
  ArrayRef<T> total;
  for (int k = 1; k <= n_generators; ++k) {
    auto sets = sets_diversity_for(batch.labels, batch.domains, k);
    if (sets.anchors.empty()) continue;
    auto term = supcon(tape, batch.z, sets, tau, diag);
    total = total ? add(tape, total, term) : term;
  }
  return total ? total : scalar_array<T>(T(0));
}

template <typename T>
ArrayRef<T> generation_loss(Tape<T>& tape, const EmbeddingBatch<T>& batch, int n_generators,
                            double tau, ContrastiveDiag* diag = nullptr) {
  auto e = expansion_loss(tape, batch, tau, diag);
  auto d = diversity_loss(tape, batch, n_generators, tau, diag);
  return add(tape, e, d);
}

template <typename T>
ArrayRef<T> invariance_loss(Tape<T>& tape, const EmbeddingBatch<T>& batch, double tau,
                            ContrastiveDiag* diag = nullptr) {
  return supcon(tape, batch.z, sets_invariance(batch.labels, batch.domains), tau, diag);
}

// Sum over extended domains of the per-domain mean cross entropy.
template <typename T>
ArrayRef<T> semantics_loss(Tape<T>& tape, const std::vector<ArrayRef<T>>& logits_per_k,
                           const std::vector<int>& labels) {
  check_config(!logits_per_k.empty(), "semantics loss needs at least one logit block");
  ArrayRef<T> total;
  for (const auto& logits : logits_per_k) {
    auto term = softmax_cross_entropy(tape, logits, labels);
    total = total ? add(tape, total, term) : term;
  }
  return total;
}

// Mean cross entropy over one combined logit block (source + all extended).
template <typename T>
ArrayRef<T> task_loss(Tape<T>& tape, const ArrayRef<T>& logits,
                      const std::vector<int>& labels) {
  return softmax_cross_entropy(tape, logits, labels);
}

template <typename T>
ArrayRef<T> dt_loss(Tape<T>& tape, const ArrayRef<T>& task, const ArrayRef<T>& invariance,
                    double beta) {
  check_config(beta >= 0.0, "beta must be nonnegative");
  return add(tape, scale(tape, task, static_cast<T>(beta)), invariance);
}

template <typename T>
ArrayRef<T> dg_loss(Tape<T>& tape, const ArrayRef<T>& generation,
                    const ArrayRef<T>& semantics, double alpha) {
  check_config(alpha >= 0.0, "alpha must be nonnegative");
  return add(tape, scale(tape, generation, static_cast<T>(alpha)), semantics);
}

}  // namespace acdg
