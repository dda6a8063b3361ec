#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "lego/core/errors.hpp"

namespace lego::nn {

/// Dense row-major matrix; vectors are 1 x n rows.
template <class S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class S>
struct Parameter {
  std::string name;
  Matrix<S> value;
  Matrix<S> grad;

  Parameter(std::string n, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)), value(Matrix<S>::Zero(rows, cols)), grad(Matrix<S>::Zero(rows, cols)) {}
  Eigen::Index size() const { return value.size(); }
};

/// Named parameters with stable addresses, iterated in insertion order.
template <class S>
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore& other) { *this = other; }
  ParameterStore& operator=(const ParameterStore& other) {
    if (this == &other) return *this;
    params_.clear();
    index_.clear();
    for (const auto& p : other.params_) {
      auto& q = add(p->name, p->value.rows(), p->value.cols());
      q.value = p->value;
      q.grad = p->grad;
    }
    return *this;
  }
  ParameterStore(ParameterStore&&) noexcept = default;
  ParameterStore& operator=(ParameterStore&&) noexcept = default;

  Parameter<S>& add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    if (index_.count(name)) throw ContractError("duplicate parameter '" + name + "'");
    params_.push_back(std::make_unique<Parameter<S>>(name, rows, cols));
    index_[name] = params_.size() - 1;
    return *params_.back();
  }
  Parameter<S>& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter '" + name + "'");
    return *params_[it->second];
  }
  const Parameter<S>& at(const std::string& name) const { return const_cast<ParameterStore*>(this)->at(name); }
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  void zero_grad() {
    for (auto& p : params_) p->grad.setZero();
  }
  std::size_t size() const { return params_.size(); }
  Eigen::Index scalar_count() const {
    Eigen::Index n = 0;
    for (const auto& p : params_) n += p->size();
    return n;
  }
  Parameter<S>& operator[](std::size_t i) { return *params_[i]; }
  const Parameter<S>& operator[](std::size_t i) const { return *params_[i]; }

  template <class F>
  void for_each(F&& f) {
    for (auto& p : params_) f(*p);
  }
  template <class F>
  void for_each(F&& f) const {
    for (const auto& p : params_) f(static_cast<const Parameter<S>&>(*p));
  }

 private:
  std::vector<std::unique_ptr<Parameter<S>>> params_;
  std::map<std::string, std::size_t> index_;
};

template <class S>
class Tape;

/// Handle to a node recorded on a Tape.
template <class S>
struct Var {
  Tape<S>* tape = nullptr;
  std::size_t id = 0;

  const Matrix<S>& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

/// Records a computation for reverse-mode differentiation. Nodes are appended
/// in evaluation order, so reverse insertion order is a valid topological order.
template <class S>
class Tape {
 public:
  using Backprop = std::function<void(Tape&, std::size_t)>;

  struct Node {
    Matrix<S> value;
    Matrix<S> grad;
    Backprop backprop;
    Parameter<S>* param = nullptr;
    bool needs_grad = false;
  };

  /// With `track_gradients` false, parameters enter as constants and nothing is differentiable.
  explicit Tape(bool track_gradients = true) : track_(track_gradients) { nodes_.reserve(256); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<S> constant(Matrix<S> value) { return push(std::move(value), false, nullptr); }

  /// Leaf bound to a parameter; its gradient is accumulated into `p.grad` by backward().
  Var<S> param(Parameter<S>& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return {this, it->second};
    auto v = push(p.value, track_, {});
    nodes_[v.id].param = &p;
    param_nodes_[&p] = v.id;
    return v;
  }

  Var<S> push(Matrix<S> value, bool needs_grad, Backprop backprop) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  const Matrix<S>& value(std::size_t id) const { return nodes_[id].value; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  const Matrix<S>& grad(std::size_t id) const { return nodes_[id].grad; }
  bool has_grad(std::size_t id) const { return nodes_[id].grad.size() > 0; }

  /// Adds `g` into the gradient of node `id` when that node is differentiable.
  template <class Expr>
  void accumulate(std::size_t id, const Expr& g) {
    auto& n = nodes_[id];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0)
      n.grad = g;
    else
      n.grad += g;
  }
  Matrix<S>& grad_buffer(std::size_t id) {
    auto& n = nodes_[id];
    if (n.grad.size() == 0) n.grad = Matrix<S>::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  /// Reverse sweep from a 1x1 loss; parameter gradients are added to Parameter::grad.
  void backward(Var<S> loss) {
    require(loss.tape == this, "loss recorded on a different tape");
    const auto& lv = nodes_[loss.id].value;
    if (lv.rows() != 1 || lv.cols() != 1) throw ContractError("backward requires a scalar loss");
    if (!nodes_[loss.id].needs_grad) return;
    nodes_[loss.id].grad = Matrix<S>::Ones(1, 1);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (n.grad.size() == 0) continue;
      if (n.param) {
        n.param->grad += n.grad;
      } else if (n.backprop) {
        n.backprop(*this, i);
      }
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;
  std::map<const Parameter<S>*, std::size_t> param_nodes_;
  bool track_ = true;
};

template <class S>
const Matrix<S>& Var<S>::value() const {
  return tape->value(id);
}

}  // namespace lego::nn
