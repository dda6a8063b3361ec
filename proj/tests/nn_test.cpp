#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "lego/check/gradients.hpp"
#include "lego/nn/adam.hpp"
#include "lego/nn/layers.hpp"

namespace {

using namespace lego;
using namespace lego::nn;
using M = Matrix<double>;

M random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  M m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng, -scale, scale);
  return m;
}

/// Weighted sum of all outputs so every element receives a distinct gradient.
Var<double> probe(Tape<double>& tape, Var<double> y, const M& weights) {
  return sum(mul(y, tape.constant(weights)));
}

TEST(Autodiff, SumOfSquares) {
  ParameterStore<double> store;
  auto& w = store.add("w", 1, 3);
  w.value << 1, 2, 3;
  Tape<double> tape;
  tape.backward(sum(square(tape.param(w))));
  EXPECT_EQ(w.grad, (M(1, 3) << 2, 4, 6).finished());
}

TEST(Autodiff, NonScalarBackwardIsContractError) {
  ParameterStore<double> store;
  auto& w = store.add("w", 2, 2);
  Tape<double> tape;
  auto y = tape.param(w);
  EXPECT_THROW(tape.backward(y), ContractError);
}

TEST(Autodiff, UnusedParameterGetsZeroGradient) {
  ParameterStore<double> store;
  auto& used = store.add("used", 1, 2);
  auto& unused = store.add("unused", 1, 2);
  used.value << 1, -1;
  unused.grad.setZero();
  Tape<double> tape;
  tape.backward(sum(tape.param(used)));
  EXPECT_EQ(unused.grad, M::Zero(1, 2));
  EXPECT_EQ(used.grad, M::Ones(1, 2));
}

TEST(Autodiff, ShapeMismatchIsContractError) {
  Tape<double> tape;
  auto a = tape.constant(M::Ones(2, 3));
  auto b = tape.constant(M::Ones(2, 3));
  EXPECT_THROW(matmul(a, b), ContractError);
  EXPECT_THROW(add(a, tape.constant(M::Ones(3, 2))), ContractError);
}

TEST(Autodiff, ClampBlocksGradientOutsideRange) {
  ParameterStore<double> store;
  auto& w = store.add("w", 1, 3);
  w.value << 0.5, 1.0, 1.5;
  Tape<double> tape;
  tape.backward(sum(clamp(tape.param(w), 0.8, 1.2)));
  EXPECT_EQ(w.grad, (M(1, 3) << 0, 1, 0).finished());
}

TEST(Autodiff, ParameterUsedTwiceAccumulates) {
  ParameterStore<double> store;
  auto& w = store.add("w", 1, 1);
  w.value << 3.0;
  Tape<double> tape;
  auto x = tape.param(w);
  tape.backward(sum(mul(x, x)));
  EXPECT_DOUBLE_EQ(w.grad(0, 0), 6.0);
}

// Scalar-loop evaluation of the residual attention update, in column-vector
// notation: q_u = A_Q x_u, logits q_u . k_v / sqrt(d_h), softmax over v, heads
// concatenated, then x_u + W2 relu(W1 h_u + b1) + b2.
std::vector<std::vector<double>> attention_oracle(const std::vector<std::vector<double>>& x, const M& wq, const M& wk,
                                                  const M& wv, const M& w1, const M& b1, const M& w2, const M& b2,
                                                  int heads) {
  const std::size_t n = x.size(), d = x[0].size();
  const std::size_t dh = d / static_cast<std::size_t>(heads);
  auto project = [&](const M& w, const std::vector<double>& v) {
    std::vector<double> out(static_cast<std::size_t>(w.cols()), 0.0);
    for (std::size_t o = 0; o < out.size(); ++o)
      for (std::size_t i = 0; i < v.size(); ++i) out[o] += w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(o)) * v[i];
    return out;
  };
  std::vector<std::vector<double>> q(n), k(n), v(n), out(n);
  for (std::size_t u = 0; u < n; ++u) {
    q[u] = project(wq, x[u]);
    k[u] = project(wk, x[u]);
    v[u] = project(wv, x[u]);
  }
  for (std::size_t u = 0; u < n; ++u) {
    std::vector<double> mixed(d, 0.0);
    for (int h = 0; h < heads; ++h) {
      const std::size_t off = static_cast<std::size_t>(h) * dh;
      std::vector<double> logits(n);
      for (std::size_t w = 0; w < n; ++w) {
        double dot = 0.0;
        for (std::size_t c = 0; c < dh; ++c) dot += q[u][off + c] * k[w][off + c];
        logits[w] = dot / std::sqrt(static_cast<double>(dh));
      }
      double z = 0.0;
      for (double l : logits) z += std::exp(l);
      for (std::size_t w = 0; w < n; ++w)
        for (std::size_t c = 0; c < dh; ++c) mixed[off + c] += std::exp(logits[w]) / z * v[w][off + c];
    }
    auto hidden = project(w1, mixed);
    for (std::size_t c = 0; c < hidden.size(); ++c) hidden[c] = std::max(0.0, hidden[c] + b1(0, static_cast<Eigen::Index>(c)));
    auto update = project(w2, hidden);
    out[u].resize(d);
    for (std::size_t c = 0; c < d; ++c) out[u][c] = x[u][c] + update[c] + b2(0, static_cast<Eigen::Index>(c));
  }
  return out;
}

struct AttentionFixture {
  ParameterStore<double> store;
  AttentionLayer<double> layer;
  AttentionFixture(AttentionSizes sizes, std::uint64_t seed) {
    Rng rng = make_rng(seed);
    layer = AttentionLayer<double>(store, "attn", sizes, rng);
    store.for_each([&](Parameter<double>& p) { p.value = random_matrix(p.value.rows(), p.value.cols(), rng, 0.8); });
  }
  const M& w(const Linear<double>& l) { return store[l.weight_index()].value; }
  const M& b(const Linear<double>& l) { return store[l.bias_index()].value; }
  std::vector<std::vector<double>> oracle(const M& x) {
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index r = 0; r < x.rows(); ++r) rows[static_cast<std::size_t>(r)].assign(x.row(r).data(), x.row(r).data() + x.cols());
    return attention_oracle(rows, w(layer.query()), w(layer.key()), w(layer.value()), w(layer.ffn_in()),
                            b(layer.ffn_in()), w(layer.ffn_out()), b(layer.ffn_out()),
                            static_cast<int>(layer.sizes().heads));
  }
  M forward(const M& x) {
    Tape<double> tape(false);
    return attention_layer_forward(tape, store, layer, tape.constant(x)).value();
  }
};

TEST(Attention, HandSetTwoNodeOracle) {
  AttentionFixture f({2, 1, 3}, 0);
  f.store.at("attn.q.w").value << 0.5, -0.2, 0.1, 0.3;
  f.store.at("attn.k.w").value << -0.4, 0.6, 0.2, 0.1;
  f.store.at("attn.v.w").value << 1.0, 0.5, -0.5, 0.25;
  f.store.at("attn.ffn0.w").value << 0.3, -0.7, 0.2, 0.9, 0.1, -0.4;
  f.store.at("attn.ffn0.b").value << 0.05, -0.1, 0.2;
  f.store.at("attn.ffn1.w").value << 0.6, -0.3, 0.2, 0.8, -0.5, 0.4;
  f.store.at("attn.ffn1.b").value << -0.02, 0.03;
  M x(2, 2);
  x << 0.7, -1.2, 0.4, 0.9;
  const auto expected = f.oracle(x);
  const M got = f.forward(x);
  for (std::size_t u = 0; u < 2; ++u)
    for (std::size_t c = 0; c < 2; ++c)
      EXPECT_NEAR(got(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(c)), expected[u][c], 1e-10);
}

TEST(Attention, MultiHeadOracle) {
  AttentionFixture f({8, 4, 12}, 7);
  Rng rng = make_rng(3);
  const M x = random_matrix(5, 8, rng);
  const auto expected = f.oracle(x);
  const M got = f.forward(x);
  for (Eigen::Index u = 0; u < 5; ++u)
    for (Eigen::Index c = 0; c < 8; ++c) EXPECT_NEAR(got(u, c), expected[static_cast<std::size_t>(u)][static_cast<std::size_t>(c)], 1e-10);
}

TEST(Attention, SingletonGetsFullWeight) {
  Rng rng = make_rng(1);
  Tape<double> tape;
  const M q = random_matrix(1, 4, rng), k = random_matrix(1, 4, rng), v = random_matrix(1, 4, rng);
  const M out = segment_attention(tape.constant(q), tape.constant(k), tape.constant(v), Offsets{0, 1}, 2).value();
  EXPECT_EQ(out, v);
}

TEST(Attention, SoftmaxRowsSumToOne) {
  Rng rng = make_rng(2);
  Tape<double> tape;
  const M q = random_matrix(7, 6, rng, 30.0), k = random_matrix(7, 6, rng, 30.0);
  const M ones = M::Ones(7, 6);
  const M out = segment_attention(tape.constant(q), tape.constant(k), tape.constant(ones), Offsets{0, 3, 3, 7}, 3).value();
  EXPECT_LT((out - ones).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Attention, IdenticalRowsGiveIdenticalOutputs) {
  AttentionFixture f({8, 2, 16}, 5);
  Rng rng = make_rng(9);
  const M row = random_matrix(1, 8, rng);
  const M out = f.forward(row.replicate(4, 1));
  for (Eigen::Index r = 1; r < 4; ++r) EXPECT_LT((out.row(r) - out.row(0)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Attention, PermutationEquivariant) {
  AttentionFixture f({8, 4, 16}, 11);
  Rng rng = make_rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const M x = random_matrix(6, 8, rng);
    std::vector<int> perm(6);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    M px(6, 8);
    for (int r = 0; r < 6; ++r) px.row(r) = x.row(perm[static_cast<std::size_t>(r)]);
    const M a = f.forward(x), b = f.forward(px);
    for (int r = 0; r < 6; ++r) EXPECT_LT((b.row(r) - a.row(perm[static_cast<std::size_t>(r)])).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Attention, ZeroOutputWeightsGiveIdentity) {
  AttentionFixture f({8, 4, 16}, 13);
  f.store.at("attn.ffn1.w").value.setZero();
  f.store.at("attn.ffn1.b").value.setZero();
  Rng rng = make_rng(6);
  const M x = random_matrix(3, 8, rng);
  EXPECT_EQ(f.forward(x), x);
}

TEST(Attention, WidthMismatchIsContractError) {
  AttentionFixture f({8, 4, 16}, 1);
  EXPECT_THROW(f.forward(M::Ones(2, 6)), ContractError);
}

TEST(Gcn, IdentityAdjacencyActsPerNode) {
  ParameterStore<double> store;
  Rng rng = make_rng(8);
  GcnLayer<double> layer(store, "gcn", 3, 5, rng);
  const M x = random_matrix(4, 3, rng);
  Tape<double> tape(false);
  const M out = layer.forward(tape, store, tape.constant(x), mean_aggregation<double>(M::Identity(4, 4))).value();
  const M expected = ((x * store.at("gcn.w").value).rowwise() + store.at("gcn.b").value.row(0)).cwiseMax(0.0);
  EXPECT_LT((out - expected).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Gcn, CompleteGraphWithIdenticalRows) {
  ParameterStore<double> store;
  Rng rng = make_rng(10);
  GcnLayer<double> layer(store, "gcn", 3, 5, rng);
  const M x = random_matrix(1, 3, rng).replicate(4, 1);
  Tape<double> tape(false);
  const M out = layer.forward(tape, store, tape.constant(x), mean_aggregation<double>(M::Ones(4, 4))).value();
  for (Eigen::Index r = 1; r < 4; ++r) EXPECT_EQ(out.row(r), out.row(0));
}

TEST(Gcn, PathGraphMatchesDenseOracle) {
  ParameterStore<double> store;
  Rng rng = make_rng(12);
  GcnLayer<double> layer(store, "gcn", 2, 3, rng);
  store.at("gcn.w").value << 0.5, -1.0, 0.25, 0.75, 0.5, -0.5;
  store.at("gcn.b").value << 0.1, 0.0, -0.1;
  M adjacency(3, 3);
  adjacency << 1, 1, 0, 1, 1, 1, 0, 1, 1;
  M x(3, 2);
  x << 1.0, 2.0, -1.0, 0.5, 0.25, -0.75;
  // Row-normalised operator written out by hand.
  M a_hat(3, 3);
  a_hat << 0.5, 0.5, 0.0, 1.0 / 3, 1.0 / 3, 1.0 / 3, 0.0, 0.5, 0.5;
  const M expected = ((a_hat * x * store.at("gcn.w").value).rowwise() + store.at("gcn.b").value.row(0)).cwiseMax(0.0);
  Tape<double> tape(false);
  const M out = layer.forward(tape, store, tape.constant(x), mean_aggregation<double>(adjacency)).value();
  EXPECT_LT((out - expected).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Gradients, Linear) {
  ParameterStore<double> store;
  Rng rng = make_rng(20);
  Linear<double> layer(store, "lin", 4, 3, 1.0, rng);
  auto& x = store.add("x", 5, 4);
  x.value = random_matrix(5, 4, rng);
  store.at("lin.b").value = random_matrix(1, 3, rng);
  const M w = random_matrix(5, 3, rng);
  const auto r = check::finite_difference_check(
      store, [&](Tape<double>& t) { return probe(t, layer.forward(t, store, t.param(x)), w); });
  EXPECT_LT(r.max_relative_error, 1e-4) << r.worst_parameter;
}

TEST(Gradients, Mlp) {
  ParameterStore<double> store;
  Rng rng = make_rng(21);
  Mlp<double> mlp(store, "mlp", {6, 8, 8, 2}, rng);
  auto& x = store.add("x", 4, 6);
  x.value = random_matrix(4, 6, rng);
  store.for_each([&](Parameter<double>& p) {
    if (p.name.ends_with(".b")) p.value = random_matrix(1, p.value.cols(), rng, 0.2);
  });
  const M w = random_matrix(4, 2, rng);
  const auto r = check::finite_difference_check(
      store, [&](Tape<double>& t) { return probe(t, mlp.forward(t, store, t.param(x)), w); });
  EXPECT_LT(r.max_relative_error, 1e-4) << r.worst_parameter;
}

TEST(Gradients, AttentionAndFeedforward) {
  AttentionFixture f({8, 4, 12}, 22);
  Rng rng = make_rng(23);
  auto& x = f.store.add("x", 7, 8);
  x.value = random_matrix(7, 8, rng);
  const M w = random_matrix(7, 8, rng);
  const Offsets offsets{0, 3, 3, 4, 7};
  const auto r = check::finite_difference_check(f.store, [&](Tape<double>& t) {
    return probe(t, f.layer.forward(t, f.store, t.param(x), offsets), w);
  });
  EXPECT_LT(r.max_relative_error, 1e-4) << r.worst_parameter;
}

TEST(Gradients, Gcn) {
  ParameterStore<double> store;
  Rng rng = make_rng(24);
  GcnLayer<double> layer(store, "gcn", 4, 6, rng);
  store.at("gcn.b").value = random_matrix(1, 6, rng, 0.3);
  auto& x = store.add("x", 5, 4);
  x.value = random_matrix(5, 4, rng);
  M adjacency(5, 5);
  adjacency << 1, 1, 0, 0, 1, 1, 1, 1, 0, 0, 0, 1, 1, 1, 0, 0, 0, 1, 1, 1, 1, 0, 0, 1, 1;
  const auto a = mean_aggregation<double>(adjacency);
  const M w = random_matrix(5, 6, rng);
  const auto r = check::finite_difference_check(
      store, [&](Tape<double>& t) { return probe(t, layer.forward(t, store, t.param(x), a), w); });
  EXPECT_LT(r.max_relative_error, 1e-4) << r.worst_parameter;
}

TEST(Gradients, EncoderWithPooling) {
  ParameterStore<double> store;
  Rng rng = make_rng(25);
  RoleEncoder<double> encoder(store, "enc", 4, {8, 2, 16}, 2, rng);
  store.for_each([&](Parameter<double>& p) {
    if (p.name.ends_with(".b")) p.value = random_matrix(1, p.value.cols(), rng, 0.2);
  });
  auto& x = store.add("x", 6, 4);
  x.value = random_matrix(6, 4, rng);
  const Offsets offsets{0, 2, 2, 6};
  const M w = random_matrix(3, 8, rng);
  const auto r = check::finite_difference_check(
      store, [&](Tape<double>& t) { return probe(t, encoder.forward(t, store, t.param(x), offsets), w); });
  EXPECT_LT(r.max_relative_error, 1e-4) << r.worst_parameter;
}

TEST(Gradients, ElementwiseOps) {
  ParameterStore<double> store;
  Rng rng = make_rng(26);
  auto& a = store.add("a", 3, 4);
  auto& b = store.add("b", 3, 4);
  auto& r = store.add("r", 1, 4);
  a.value = random_matrix(3, 4, rng);
  b.value = random_matrix(3, 4, rng).array() + 2.0;
  r.value = random_matrix(1, 4, rng);
  const auto rep = check::finite_difference_check(store, [&](Tape<double>& t) {
    auto x = t.param(a), y = t.param(b), row = t.param(r);
    auto z = add(mul_row(tanh(x), exp(row)), log(y));
    auto m = minimum(z, clamp(scale(x, 1.5), -0.5, 0.5));
    return add(sum(square(m)), mean(row_sum(slice_cols(concat_cols<double>(std::vector{z, x}), 2, 4))));
  });
  EXPECT_LT(rep.max_relative_error, 1e-4) << rep.worst_parameter;
}

TEST(Adam, ConvergesOnQuadratic) {
  ParameterStore<double> store;
  auto& w = store.add("w", 1, 2);
  w.value << 3.0, -2.0;
  Adam<double> opt(store);
  for (int i = 0; i < 2000; ++i) {
    store.zero_grad();
    Tape<double> tape;
    tape.backward(sum(square(add_scalar(tape.param(w), -1.0))));
    opt.step(store, 0.01);
  }
  EXPECT_NEAR(w.value(0, 0), 1.0, 1e-3);
  EXPECT_NEAR(w.value(0, 1), 1.0, 1e-3);
}

TEST(Adam, GradientClipping) {
  ParameterStore<double> store;
  auto& w = store.add("w", 1, 2);
  w.grad << 3.0, 4.0;
  EXPECT_DOUBLE_EQ(clip_gradient_norm(store, 0.5), 5.0);
  EXPECT_NEAR(gradient_norm(store), 0.5, 1e-15);
}

}  // namespace
