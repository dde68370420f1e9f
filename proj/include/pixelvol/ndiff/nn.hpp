#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "pixelvol/ndiff/ops.hpp"
#include "pixelvol/util/rng.hpp"

namespace pixelvol::ndiff {

// Named, ordered parameter set. Entry order is insertion order and defines
// the deterministic iteration order used by the optimizer and checkpoints.
template <typename T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Array<T> value;
    bool trainable = true;
  };

  int add(const std::string& name, Array<T> value, bool trainable = true) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter " + name);
    index_[name] = int(entries_.size());
    entries_.push_back(Entry{name, std::move(value), trainable});
    return int(entries_.size()) - 1;
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  const Array<T>& value(const std::string& name) const { return entries_[find(name)].value; }

  void set(const std::string& name, Array<T> value) {
    Entry& e = entries_[size_t(find(name))];
    if (value.shape() != e.value.shape())
      throw std::invalid_argument("parameter " + name + ": shape mismatch on set");
    e.value = std::move(value);
  }

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }
  size_t size() const { return entries_.size(); }

  int64_t total_elements() const {
    int64_t n = 0;
    for (const Entry& e : entries_) n += e.value.size();
    return n;
  }

 private:
  int find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("unknown parameter " + name);
    return it->second;
  }

  std::vector<Entry> entries_;
  std::unordered_map<std::string, int> index_;
};

// Per-name gradient accumulator with deterministic accumulation order left to
// the caller.
template <typename T>
using GradMap = std::unordered_map<std::string, std::vector<T>>;

template <typename T>
void accumulate(GradMap<T>& dst, const GradMap<T>& src) {
  for (const auto& [name, g] : src) {
    auto it = dst.find(name);
    if (it == dst.end()) {
      dst.emplace(name, g);
    } else {
      std::vector<T>& d = it->second;
      for (size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    }
  }
}

template <typename T>
void scale(GradMap<T>& grads, T factor) {
  for (auto& [name, g] : grads)
    for (T& v : g) v *= factor;
}

// Binds store parameters onto one tape, leafing each at most once so fan-out
// within the tape accumulates into a single gradient buffer.
template <typename T>
class ParamBinder {
 public:
  ParamBinder(Tape<T>& tape, const ParamStore<T>& store) : tape_(tape), store_(store) {}

  Var<T> operator()(const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    const Array<T>& v = store_.value(name);
    bool trainable = trainable_of(name);
    Var<T> var = tape_.leaf(v.with_requires_grad(trainable));
    bound_.emplace(name, var);
    return var;
  }

  // Collects gradients of every bound trainable parameter into `out`.
  void collect(GradMap<T>& out) const {
    for (const auto& [name, var] : bound_) {
      if (!tape_.needs_grad(var) || !tape_.has_grad(var)) continue;
      auto g = tape_.grad(var).to_vector();
      auto it = out.find(name);
      if (it == out.end()) {
        out.emplace(name, std::move(g));
      } else {
        std::vector<T>& d = it->second;
        for (size_t i = 0; i < g.size(); ++i) d[i] += g[i];
      }
    }
  }

  Tape<T>& tape() { return tape_; }
  const ParamStore<T>& store() const { return store_; }

 private:
  bool trainable_of(const std::string& name) const {
    for (const auto& e : store_.entries())
      if (e.name == name) return e.trainable;
    return true;
  }

  Tape<T>& tape_;
  const ParamStore<T>& store_;
  std::unordered_map<std::string, Var<T>> bound_;
};

// ---------------------------------------------------------------------------
// Initializers and the linear layer used by every MLP in the model.

template <typename T>
Array<T> kaiming_uniform(Shape shape, int64_t fan_in, util::Rng& rng) {
  double bound = std::sqrt(6.0 / double(fan_in));
  return Array<T>::uniform(std::move(shape), rng, -bound, bound);
}

// y = x * W + b for row-major batches; W is [in x out], b is [out].
template <typename T>
void add_linear(ParamStore<T>& store, const std::string& prefix, int64_t in, int64_t out,
                util::Rng& rng, double weight_scale = 1.0) {
  Array<T> w = kaiming_uniform<T>({in, out}, in, rng);
  if (weight_scale != 1.0) {
    std::vector<T> v = w.to_vector();
    for (T& x : v) x *= T(weight_scale);
    w = Array<T>({in, out}, std::move(v));
  }
  store.add(prefix + ".w", std::move(w));
  store.add(prefix + ".b", Array<T>::zeros({out}));
}

template <typename T>
Var<T> linear(ParamBinder<T>& bind, const std::string& prefix, Var<T> x) {
  return add(matmul(x, bind(prefix + ".w")), bind(prefix + ".b"));
}

}  // namespace pixelvol::ndiff
