#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pixelvol/util/rng.hpp"

namespace pixelvol::ndiff {

using Shape = std::vector<int64_t>;

inline int64_t numel(const Shape& s) {
  int64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

inline std::string to_string(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

// Non-finite values are a contract violation; the check is on by default in
// debug builds and can be toggled at runtime.
inline bool& finite_checks_flag() {
#ifdef NDEBUG
  static bool on = false;
#else
  static bool on = true;
#endif
  return on;
}
inline void set_finite_checks(bool on) { finite_checks_flag() = on; }
inline bool finite_checks_enabled() { return finite_checks_flag(); }

template <typename T>
void check_finite(std::span<const T> vals, const char* context) {
  for (const T& v : vals) {
    if (!std::isfinite(double(v)))
      throw std::runtime_error(std::string("non-finite value produced by ") + context);
  }
}

// Immutable shape-carrying tensor. Copies share the payload, so Arrays are
// cheap values that are safe to hand across threads.
template <typename T>
class Array {
 public:
  Array() = default;
  Array(Shape shape, std::vector<T> data, bool requires_grad = false)
      : shape_(std::move(shape)),
        data_(std::make_shared<const std::vector<T>>(std::move(data))),
        requires_grad_(requires_grad) {
    if (numel(shape_) != int64_t(data_->size()))
      throw std::invalid_argument("Array: shape " + to_string(shape_) + " does not match " +
                                  std::to_string(data_->size()) + " elements");
  }

  static Array zeros(Shape shape) {
    auto n = size_t(numel(shape));
    return Array(std::move(shape), std::vector<T>(n, T(0)));
  }
  static Array full(Shape shape, T v) {
    auto n = size_t(numel(shape));
    return Array(std::move(shape), std::vector<T>(n, v));
  }
  static Array scalar(T v) { return Array({1}, {v}); }
  static Array uniform(Shape shape, util::Rng& rng, double lo, double hi) {
    std::vector<T> data(size_t(numel(shape)));
    for (auto& x : data) x = T(rng.uniform(lo, hi));
    return Array(std::move(shape), std::move(data));
  }
  static Array normal(Shape shape, util::Rng& rng, double mean, double stddev) {
    std::vector<T> data(size_t(numel(shape)));
    for (auto& x : data) x = T(mean + stddev * rng.normal());
    return Array(std::move(shape), std::move(data));
  }

  bool empty() const { return !data_; }
  const Shape& shape() const { return shape_; }
  int64_t rank() const { return int64_t(shape_.size()); }
  int64_t extent(int64_t axis) const { return shape_[size_t(axis)]; }
  int64_t size() const { return data_ ? int64_t(data_->size()) : 0; }

  // Rvalue overloads are deleted: a span into a temporary Array would dangle.
  std::span<const T> values() const& {
    return data_ ? std::span<const T>(data_->data(), data_->size()) : std::span<const T>();
  }
  std::span<const T> values() const&& = delete;
  const T* data() const& { return data_ ? data_->data() : nullptr; }
  const T* data() const&& = delete;
  T operator[](int64_t i) const { return (*data_)[size_t(i)]; }

  bool requires_grad() const { return requires_grad_; }
  Array with_requires_grad(bool on) const {
    Array a = *this;
    a.requires_grad_ = on;
    return a;
  }

  Array reshaped(Shape shape) const {
    if (numel(shape) != size())
      throw std::invalid_argument("reshape: " + to_string(shape_) + " -> " + to_string(shape));
    Array a = *this;
    a.shape_ = std::move(shape);
    return a;
  }

  std::vector<T> to_vector() const { return data_ ? *data_ : std::vector<T>(); }

 private:
  Shape shape_;
  std::shared_ptr<const std::vector<T>> data_;
  bool requires_grad_ = false;
};

}  // namespace pixelvol::ndiff
