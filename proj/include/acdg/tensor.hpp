#pragma once

// Reverse-mode differentiable arrays.
//
// An Array<T> owns its values and (lazily) a gradient buffer of the same
// size. Operations append one backward closure per produced array onto the
// active Tape; Tape::backward replays the closures in reverse recording
// order, which is a valid reverse topological order because arrays are
// immutable once produced. A tape is single-use: after backward it must be
// discarded and the episode re-recorded.

#include <functional>
#include <memory>
#include <vector>

#include "acdg/common.hpp"

namespace acdg {

template <typename T>
struct Array {
  Shape shape;
  std::vector<T> values;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  int node_id = -1;  // index of the tape node that produced this array

  Array() = default;
  Array(Shape s, std::vector<T> v) : shape(std::move(s)), values(std::move(v)) {}

  long long size() const { return static_cast<long long>(values.size()); }

  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), T(0));
  }

  bool has_grad() const { return !grad.empty(); }

  void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

template <typename T>
using ArrayRef = std::shared_ptr<Array<T>>;

template <typename T>
ArrayRef<T> make_array(Shape shape, std::vector<T> values, bool requires_grad = false) {
  check_dim(numel(shape) == static_cast<long long>(values.size()),
            "make_array: " + shape_str(shape) + " does not hold " +
                std::to_string(values.size()) + " values");
  auto a = std::make_shared<Array<T>>(std::move(shape), std::move(values));
  a->requires_grad = requires_grad;
  return a;
}

template <typename T>
ArrayRef<T> zeros(Shape shape, bool requires_grad = false) {
  return make_array<T>(std::move(shape), std::vector<T>(numel(shape), T(0)), requires_grad);
}

template <typename T>
ArrayRef<T> full(Shape shape, T value, bool requires_grad = false) {
  return make_array<T>(std::move(shape), std::vector<T>(numel(shape), value), requires_grad);
}

template <typename T>
ArrayRef<T> scalar_array(T value, bool requires_grad = false) {
  return make_array<T>({1}, {value}, requires_grad);
}

template <typename T>
class Tape {
 public:
  // Registers the backward rule of a freshly produced array. Returns the
  // node id. Exactly one node per op output group.
  int record(std::function<void()> backward_fn) {
    check_usage(!consumed_, "Tape::record: tape already consumed by backward");
    nodes_.push_back(std::move(backward_fn));
    return static_cast<int>(nodes_.size()) - 1;
  }

  // Seeds d(loss)/d(loss) = 1 and replays every node once, newest first.
  // Only scalar losses are differentiable roots; calling twice on the same
  // tape is an error (second-order differentiation is unsupported).
  void backward(const ArrayRef<T>& loss) {
    check_usage(!consumed_,
                "Tape::backward: tape already consumed; re-record the episode");
    check_usage(!nodes_.empty(), "Tape::backward: tape is empty");
    check_dim(loss && loss->size() == 1, "Tape::backward: loss must be scalar");
    check_usage(loss->requires_grad, "Tape::backward: loss does not require grad");
    loss->ensure_grad();
    loss->grad[0] = T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
    consumed_ = true;
  }

  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

 private:
  std::vector<std::function<void()>> nodes_;
  bool consumed_ = false;
};

// ===== Parameters =====

template <typename T>
struct Parameter {
  std::string name;
  ArrayRef<T> value;
  bool trainable = true;  // false: persistent buffer (e.g. running stats)
  bool frozen = false;    // true: optimizer must skip it this step
};

// Ordered, name-unique parameter collection. Order is the serialization
// order, so construction order must be deterministic.
template <typename T>
class ParamRegistry {
 public:
  Parameter<T>& add(const std::string& name, ArrayRef<T> value, bool trainable = true) {
    check_usage(find(name) == nullptr, "ParamRegistry: duplicate name " + name);
    value->requires_grad = trainable;
    items_.push_back(Parameter<T>{name, std::move(value), trainable, false});
    return items_.back();
  }

  Parameter<T>* find(const std::string& name) {
    for (auto& p : items_)
      if (p.name == name) return &p;
    return nullptr;
  }

  const Parameter<T>* find(const std::string& name) const {
    for (const auto& p : items_)
      if (p.name == name) return &p;
    return nullptr;
  }

  std::vector<Parameter<T>>& items() { return items_; }
  const std::vector<Parameter<T>>& items() const { return items_; }

  void zero_grad() {
    for (auto& p : items_)
      if (p.value->has_grad()) p.value->zero_grad();
  }

  // Freeze / unfreeze every parameter whose name starts with the prefix.
  void set_frozen(const std::string& prefix, bool frozen) {
    for (auto& p : items_)
      if (p.name.rfind(prefix, 0) == 0) p.frozen = frozen;
  }

  long long trainable_count() const {
    long long n = 0;
    for (const auto& p : items_)
      if (p.trainable) n += p.value->size();
    return n;
  }

 private:
  std::vector<Parameter<T>> items_;
};

}  // namespace acdg
