#pragma once

#include <string>
#include <vector>

#include "lego/nn/init.hpp"
#include "lego/nn/ops.hpp"

namespace lego::nn {

/// y = x W + b with W stored in x n-major (in x out) layout.
template <class S>
class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore<S>& store, const std::string& name, Eigen::Index in, Eigen::Index out, double gain, Rng& rng,
         bool bias = true)
      : in_(in), out_(out), has_bias_(bias) {
    weight_ = store.size();
    orthogonal_init(store.add(name + ".w", in, out).value, gain, rng);
    if (bias) {
      bias_ = store.size();
      store.add(name + ".b", 1, out);
    }
  }

  Var<S> forward(Tape<S>& tape, ParameterStore<S>& store, Var<S> x) const {
    if (x.cols() != in_)
      throw ContractError("linear layer '" + store[weight_].name + "' expects " + std::to_string(in_) +
                          " input columns, got " + std::to_string(x.cols()));
    auto y = matmul(x, tape.param(store[weight_]));
    return has_bias_ ? add_row(y, tape.param(store[bias_])) : y;
  }

  Eigen::Index in() const { return in_; }
  Eigen::Index out() const { return out_; }
  std::size_t weight_index() const { return weight_; }
  std::size_t bias_index() const { return bias_; }

 private:
  std::size_t weight_ = 0, bias_ = 0;
  Eigen::Index in_ = 0, out_ = 0;
  bool has_bias_ = true;
};

enum class Activation { Tanh, Relu };

template <class S>
Var<S> activate(Var<S> x, Activation a) {
  return a == Activation::Tanh ? tanh(x) : relu(x);
}

/// Fully connected stack; the final layer is linear.
template <class S>
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParameterStore<S>& store, const std::string& name, const std::vector<Eigen::Index>& widths, Rng& rng,
      double output_gain = 1.0, Activation act = Activation::Tanh)
      : act_(act) {
    require(widths.size() >= 2, "mlp needs at least an input and an output width");
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
      const bool last = i + 2 == widths.size();
      layers_.emplace_back(store, name + "." + std::to_string(i), widths[i], widths[i + 1],
                           last ? output_gain : kReluGain, rng);
    }
  }

  Var<S> forward(Tape<S>& tape, ParameterStore<S>& store, Var<S> x) const {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      x = layers_[i].forward(tape, store, x);
      if (i + 1 < layers_.size()) x = activate(x, act_);
    }
    return x;
  }

  const std::vector<Linear<S>>& layers() const { return layers_; }
  Eigen::Index in() const { return layers_.front().in(); }
  Eigen::Index out() const { return layers_.back().out(); }

 private:
  std::vector<Linear<S>> layers_;
  Activation act_ = Activation::Tanh;
};

struct AttentionSizes {
  Eigen::Index width = 64;  // d
  Eigen::Index heads = 4;   // H; head width d_h = d / H
  Eigen::Index ffn = 128;   // hidden width of the position-wise feedforward
};

/// One residual self-attention block over dense segments:
/// x <- x + FFN(concat_h softmax(Q_h K_h^T / sqrt(d_h)) V_h).
template <class S>
class AttentionLayer {
 public:
  AttentionLayer() = default;
  AttentionLayer(ParameterStore<S>& store, const std::string& name, AttentionSizes sizes, Rng& rng)
      : sizes_(sizes),
        query_(store, name + ".q", sizes.width, sizes.width, 1.0, rng, false),
        key_(store, name + ".k", sizes.width, sizes.width, 1.0, rng, false),
        value_(store, name + ".v", sizes.width, sizes.width, 1.0, rng, false),
        ffn_in_(store, name + ".ffn0", sizes.width, sizes.ffn, kReluGain, rng),
        ffn_out_(store, name + ".ffn1", sizes.ffn, sizes.width, 1.0, rng) {
    require(sizes.heads > 0 && sizes.width % sizes.heads == 0, "attention width must be divisible by the head count");
  }

  Var<S> forward(Tape<S>& tape, ParameterStore<S>& store, Var<S> x, const Offsets& offsets) const {
    if (x.cols() != sizes_.width) throw ContractError("attention layer: input width mismatch");
    auto q = query_.forward(tape, store, x);
    auto k = key_.forward(tape, store, x);
    auto v = value_.forward(tape, store, x);
    auto mixed = segment_attention(q, k, v, offsets, sizes_.heads);
    auto update = ffn_out_.forward(tape, store, relu(ffn_in_.forward(tape, store, mixed)));
    return add(x, update);
  }

  const AttentionSizes& sizes() const { return sizes_; }
  const Linear<S>& query() const { return query_; }
  const Linear<S>& key() const { return key_; }
  const Linear<S>& value() const { return value_; }
  const Linear<S>& ffn_in() const { return ffn_in_; }
  const Linear<S>& ffn_out() const { return ffn_out_; }

 private:
  AttentionSizes sizes_{};
  Linear<S> query_, key_, value_, ffn_in_, ffn_out_;
};

/// Convenience wrapper for a single dense graph of n nodes.
template <class S>
Var<S> attention_layer_forward(Tape<S>& tape, ParameterStore<S>& store, const AttentionLayer<S>& layer, Var<S> x) {
  require(x.rows() >= 1, "attention over an empty graph");
  return layer.forward(tape, store, x, Offsets{0, x.rows()});
}

/// Degree-normalised mean aggregation followed by an affine map and ReLU:
/// relu(D^-1 A x W + b).
template <class S>
class GcnLayer {
 public:
  GcnLayer() = default;
  GcnLayer(ParameterStore<S>& store, const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng)
      : linear_(store, name, in, out, kReluGain, rng) {}

  Var<S> forward(Tape<S>& tape, ParameterStore<S>& store, Var<S> x,
                 std::shared_ptr<const SparseMatrix<S>> normalized_adjacency) const {
    return relu(linear_.forward(tape, store, spmm(std::move(normalized_adjacency), x)));
  }

  const Linear<S>& linear() const { return linear_; }

 private:
  Linear<S> linear_;
};

/// Row-normalises a 0/1 adjacency matrix (self-loops expected on the diagonal).
template <class S>
std::shared_ptr<const SparseMatrix<S>> mean_aggregation(const Matrix<S>& adjacency) {
  require(adjacency.rows() == adjacency.cols(), "adjacency must be square");
  std::vector<Eigen::Triplet<S>> entries;
  for (Eigen::Index i = 0; i < adjacency.rows(); ++i) {
    const S degree = adjacency.row(i).sum();
    require(degree > S(0), "adjacency row without neighbours");
    for (Eigen::Index j = 0; j < adjacency.cols(); ++j)
      if (adjacency(i, j) != S(0)) entries.emplace_back(i, j, adjacency(i, j) / degree);
  }
  auto a = std::make_shared<SparseMatrix<S>>(adjacency.rows(), adjacency.cols());
  a->setFromTriplets(entries.begin(), entries.end());
  return a;
}

/// Block-diagonal mean aggregation over dense segments (complete graphs with self-loops).
template <class S>
std::shared_ptr<const SparseMatrix<S>> dense_segment_aggregation(const Offsets& offsets) {
  std::vector<Eigen::Triplet<S>> entries;
  const auto segments = static_cast<Eigen::Index>(offsets.size()) - 1;
  for (Eigen::Index s = 0; s < segments; ++s) {
    const auto o = offsets[s], n = offsets[s + 1] - offsets[s];
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) entries.emplace_back(o + i, o + j, S(1) / static_cast<S>(n));
  }
  auto a = std::make_shared<SparseMatrix<S>>(offsets.back(), offsets.back());
  a->setFromTriplets(entries.begin(), entries.end());
  return a;
}

/// Per-role graph encoder: node embedding, L attention layers, mean pooling.
template <class S>
class RoleEncoder {
 public:
  RoleEncoder() = default;
  RoleEncoder(ParameterStore<S>& store, const std::string& name, Eigen::Index node_width, AttentionSizes sizes,
              int layers, Rng& rng)
      : embed_(store, name + ".embed", node_width, sizes.width, 1.0, rng) {
    for (int l = 0; l < layers; ++l) layers_.emplace_back(store, name + ".attn" + std::to_string(l), sizes, rng);
  }

  /// `nodes` stacks the buckets of a batch; returns one pooled row per segment.
  Var<S> forward(Tape<S>& tape, ParameterStore<S>& store, Var<S> nodes, const Offsets& offsets) const {
    if (nodes.rows() == 0) {
      return tape.constant(Matrix<S>::Zero(static_cast<Eigen::Index>(offsets.size()) - 1, embed_.out()));
    }
    auto x = embed_.forward(tape, store, nodes);
    for (const auto& layer : layers_) x = layer.forward(tape, store, x, offsets);
    return segment_mean(x, offsets);
  }

  Eigen::Index width() const { return embed_.out(); }
  const std::vector<AttentionLayer<S>>& layers() const { return layers_; }

 private:
  Linear<S> embed_;
  std::vector<AttentionLayer<S>> layers_;
};

}  // namespace lego::nn
