// Copyright 2026 The panoavoid Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace panoavoid {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

/// Raised when operand extents do not line up.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

template <class T>
class Tape;

template <class T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  bool requires_grad = false;
  // Set for op outputs recorded on a tape; leaves keep tape_id == 0.
  std::uint64_t tape_id = 0;
  std::size_t slot = 0;
};

/// Dense row-major array with optional participation in reverse-mode
/// differentiation. Copies share storage; op results are fresh values.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0))
      : impl_(std::make_shared<TensorImpl<T>>()) {
    impl_->data.assign(numel(shape), fill);
    impl_->shape = std::move(shape);
  }

  Tensor(Shape shape, std::vector<T> data)
      : impl_(std::make_shared<TensorImpl<T>>()) {
    if (numel(shape) != data.size()) {
      throw ShapeError("tensor: shape " + shape_str(shape) + " holds " +
                       std::to_string(numel(shape)) + " elements, got " +
                       std::to_string(data.size()));
    }
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
  }

  static Tensor scalar(T v) { return Tensor(Shape{1}, std::vector<T>{v}); }

  static Tensor vec3(T x, T y, T z) {
    return Tensor(Shape{3}, std::vector<T>{x, y, z});
  }

  /// A trainable leaf.
  static Tensor parameter(Shape shape, std::vector<T> data) {
    Tensor t(std::move(shape), std::move(data));
    t.impl_->requires_grad = true;
    return t;
  }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }
  std::size_t size() const { return impl_->data.size(); }

  std::span<const T> data() const { return impl_->data; }
  // Only the optimizer and checkpoint loader write through this.
  std::span<T> mutable_data() { return impl_->data; }
  const std::vector<T>& values() const { return impl_->data; }

  T operator[](std::size_t i) const { return impl_->data[i]; }
  T item() const {
    if (size() != 1) {
      throw ShapeError("item: tensor of shape " + shape_str(shape()) +
                       " is not a scalar");
    }
    return impl_->data[0];
  }

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  bool is_leaf() const { return impl_->tape_id == 0; }

  Tensor& set_requires_grad(bool flag) {
    if (!is_leaf()) {
      throw std::logic_error("set_requires_grad: only leaves can be toggled");
    }
    impl_->requires_grad = flag;
    return *this;
  }

  /// Value copy cut from any tape.
  Tensor detach() const { return Tensor(shape(), impl_->data); }

  const std::shared_ptr<TensorImpl<T>>& impl() const { return impl_; }

  explicit Tensor(std::shared_ptr<TensorImpl<T>> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<TensorImpl<T>> impl_;
};

/// Leaf gradients produced by one backward pass.
template <class T>
class Gradients {
 public:
  std::vector<T> get(const Tensor<T>& leaf) const {
    auto it = grads_.find(leaf.impl().get());
    if (it == grads_.end()) return std::vector<T>(leaf.size(), T(0));
    return it->second;
  }
  bool contains(const Tensor<T>& leaf) const {
    return grads_.count(leaf.impl().get()) != 0;
  }
  void set(const TensorImpl<T>* leaf, std::vector<T> g) {
    grads_[leaf] = std::move(g);
  }
  std::size_t size() const { return grads_.size(); }

 private:
  std::unordered_map<const TensorImpl<T>*, std::vector<T>> grads_;
};

namespace detail {

inline std::uint64_t next_tape_id() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}

template <class T>
Tape<T>*& active_tape_ref() {
  thread_local Tape<T>* tape = nullptr;
  return tape;
}

}  // namespace detail

/// Per-op gradient accessors handed to backward rules. Entry i is null
/// when input i does not need a gradient.
template <class T>
struct GradRefs {
  std::vector<T*> in;
  T* operator[](std::size_t i) const { return in[i]; }
};

/// Ordered record of differentiable operations. Records are appended as ops
/// execute, so inputs always precede the ops that consume them; backward
/// walks the records once in reverse.
template <class T>
class Tape {
 public:
  using Rule = std::function<void(const T* grad_out, const GradRefs<T>& grads)>;

  struct Record {
    std::size_t out_slot;
    std::vector<std::size_t> in_slots;  // npos for inputs without gradient
    Rule rule;
  };

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  Tape() : id_(detail::next_tape_id()) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::uint64_t id() const { return id_; }
  std::size_t num_records() const { return records_.size(); }
  const std::vector<Record>& records() const { return records_; }

  /// Slot for an input, or npos when it carries no gradient on this tape.
  std::size_t slot_of(const std::shared_ptr<TensorImpl<T>>& impl) {
    if (!impl->requires_grad) return npos;
    if (impl->tape_id == id_) return impl->slot;
    if (impl->tape_id != 0) return npos;  // output of another tape: constant
    auto it = leaf_slots_.find(impl.get());
    if (it != leaf_slots_.end()) return it->second;
    std::size_t s = new_slot(impl->data.size());
    leaf_slots_.emplace(impl.get(), s);
    leaves_.push_back(impl);
    return s;
  }

  /// Registers an op output and its backward rule.
  void record(const std::shared_ptr<TensorImpl<T>>& out,
              std::vector<std::size_t> in_slots, Rule rule) {
    out->requires_grad = true;
    out->tape_id = id_;
    out->slot = new_slot(out->data.size());
    records_.push_back(Record{out->slot, std::move(in_slots), std::move(rule)});
  }

  Gradients<T> backward(const Tensor<T>& root) {
    if (root.size() != 1) {
      throw ShapeError("backward: root must be a scalar, got shape " +
                       shape_str(root.shape()));
    }
    Gradients<T> out;
    if (!root.requires_grad() || root.impl()->tape_id != id_) {
      if (root.requires_grad() && root.is_leaf()) {
        out.set(root.impl().get(), std::vector<T>{T(1)});
      }
      return out;
    }
    for (auto& g : grads_) g.clear();
    grad(root.impl()->slot)[0] = T(1);
    GradRefs<T> refs;
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
      if (grads_[it->out_slot].empty()) continue;
      refs.in.assign(it->in_slots.size(), nullptr);
      for (std::size_t i = 0; i < it->in_slots.size(); ++i) {
        if (it->in_slots[i] != npos) refs.in[i] = grad(it->in_slots[i]).data();
      }
      it->rule(grads_[it->out_slot].data(), refs);
    }
    for (const auto& leaf : leaves_) {
      auto& g = grads_[leaf_slots_.at(leaf.get())];
      if (g.empty()) g.assign(sizes_[leaf_slots_.at(leaf.get())], T(0));
      out.set(leaf.get(), g);
    }
    return out;
  }

  void clear() {
    records_.clear();
    grads_.clear();
    sizes_.clear();
    leaf_slots_.clear();
    leaves_.clear();
    id_ = detail::next_tape_id();
  }

 private:
  std::size_t new_slot(std::size_t n) {
    sizes_.push_back(n);
    grads_.emplace_back();
    return sizes_.size() - 1;
  }

  std::vector<T>& grad(std::size_t slot) {
    auto& g = grads_[slot];
    if (g.empty()) g.assign(sizes_[slot], T(0));
    return g;
  }

  std::uint64_t id_;
  std::vector<Record> records_;
  std::vector<std::vector<T>> grads_;
  std::vector<std::size_t> sizes_;
  std::unordered_map<const TensorImpl<T>*, std::size_t> leaf_slots_;
  std::vector<std::shared_ptr<TensorImpl<T>>> leaves_;
};

template <class T>
Tape<T>* active_tape() {
  return detail::active_tape_ref<T>();
}

/// Routes ops executed on this thread onto `tape` for the scope's lifetime.
template <class T>
class GradScope {
 public:
  explicit GradScope(Tape<T>& tape) : prev_(detail::active_tape_ref<T>()) {
    detail::active_tape_ref<T>() = &tape;
  }
  ~GradScope() { detail::active_tape_ref<T>() = prev_; }
  GradScope(const GradScope&) = delete;
  GradScope& operator=(const GradScope&) = delete;

 private:
  Tape<T>* prev_;
};

/// Suspends recording on this thread.
template <class T>
class NoGradScope {
 public:
  NoGradScope() : prev_(detail::active_tape_ref<T>()) {
    detail::active_tape_ref<T>() = nullptr;
  }
  ~NoGradScope() { detail::active_tape_ref<T>() = prev_; }
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape<T>* prev_;
};

/// Backward pass over the active tape.
template <class T>
Gradients<T> backward(const Tensor<T>& root) {
  Tape<T>* tape = active_tape<T>();
  if (tape == nullptr) {
    if (root.size() != 1) {
      throw ShapeError("backward: root must be a scalar, got shape " +
                       shape_str(root.shape()));
    }
    return {};
  }
  return tape->backward(root);
}

namespace detail {

/// Wraps freshly computed values as an op result, recording `rule` when a
/// tape is active and any input needs a gradient.
template <class T>
Tensor<T> make_result(Shape shape, std::vector<T> values,
                      std::initializer_list<const Tensor<T>*> inputs,
                      typename Tape<T>::Rule rule) {
  Tensor<T> out(std::move(shape), std::move(values));
  Tape<T>* tape = active_tape<T>();
  if (tape == nullptr) return out;
  std::vector<std::size_t> slots;
  slots.reserve(inputs.size());
  bool any = false;
  for (const Tensor<T>* in : inputs) {
    std::size_t s = tape->slot_of(in->impl());
    any = any || s != Tape<T>::npos;
    slots.push_back(s);
  }
  if (any) tape->record(out.impl(), std::move(slots), std::move(rule));
  return out;
}

template <class T>
Tensor<T> make_result(Shape shape, std::vector<T> values,
                      const std::vector<Tensor<T>>& inputs,
                      typename Tape<T>::Rule rule) {
  Tensor<T> out(std::move(shape), std::move(values));
  Tape<T>* tape = active_tape<T>();
  if (tape == nullptr) return out;
  std::vector<std::size_t> slots;
  slots.reserve(inputs.size());
  bool any = false;
  for (const Tensor<T>& in : inputs) {
    std::size_t s = tape->slot_of(in.impl());
    any = any || s != Tape<T>::npos;
    slots.push_back(s);
  }
  if (any) tape->record(out.impl(), std::move(slots), std::move(rule));
  return out;
}

}  // namespace detail

}  // namespace panoavoid
