#pragma once

// AdamW with decoupled weight decay.
//
// Update rule per parameter element, with t counted per parameter so a
// freshly unfrozen parameter resumes exactly where its own trajectory left
// off:
//   m <- beta1*m + (1-beta1)*g
//   v <- beta2*v + (1-beta2)*g^2
//   p <- p*(1 - lr*wd) - lr * (m/(1-beta1^t)) / (sqrt(v/(1-beta2^t)) + eps)
//
// Frozen parameters are skipped completely: no update, no moment decay, no
// step-count increment. A parameter whose gradient buffer was never
// allocated steps with g = 0.

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "acdg/common.hpp"
#include "acdg/tensor.hpp"

namespace acdg {

template <typename T>
class AdamW {
 public:
  struct Config {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
  };

  AdamW() = default;
  explicit AdamW(Config cfg) : cfg_(cfg) {
    check_config(cfg.lr > 0, "AdamW: lr must be positive");
    check_config(cfg.beta1 >= 0 && cfg.beta1 < 1, "AdamW: beta1 out of [0,1)");
    check_config(cfg.beta2 >= 0 && cfg.beta2 < 1, "AdamW: beta2 out of [0,1)");
    check_config(cfg.eps > 0, "AdamW: eps must be positive");
    check_config(cfg.weight_decay >= 0, "AdamW: weight_decay must be >= 0");
  }

  const Config& config() const { return cfg_; }

  void step(ParamRegistry<T>& params) {
    for (auto& p : params.items()) {
      if (!p.trainable || p.frozen) continue;
      auto& st = state_[p.name];
      auto& value = p.value->values;
      const std::size_t n = value.size();
      if (st.m.size() != n) {
        st.m.assign(n, T(0));
        st.v.assign(n, T(0));
      }
      st.t += 1;
      const T b1 = T(cfg_.beta1), b2 = T(cfg_.beta2);
      const T lr = T(cfg_.lr), eps = T(cfg_.eps);
      const T decay_keep = T(1) - lr * T(cfg_.weight_decay);
      const T bc1 = T(1) - std::pow(b1, T(st.t));
      const T bc2 = T(1) - std::pow(b2, T(st.t));
      const bool has_grad = p.value->has_grad();
      const T* g = has_grad ? p.value->grad.data() : nullptr;
      for (std::size_t i = 0; i < n; ++i) {
        const T gi = g ? g[i] : T(0);
        st.m[i] = b1 * st.m[i] + (T(1) - b1) * gi;
        st.v[i] = b2 * st.v[i] + (T(1) - b2) * gi * gi;
        const T mhat = st.m[i] / bc1;
        const T vhat = st.v[i] / bc2;
        value[i] = value[i] * decay_keep - lr * mhat / (std::sqrt(vhat) + eps);
      }
    }
  }

 private:
  struct State {
    long long t = 0;
    std::vector<T> m, v;
  };

  Config cfg_;
  std::map<std::string, State> state_;
};

}  // namespace acdg
