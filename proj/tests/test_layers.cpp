#include "drivesec/layers.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "drivesec/gradcheck.hpp"

using namespace drivesec;

namespace {

void zero_params(LayerParams& p) {
  for (Tensor& w : p.weights)
    for (long i = 0; i < w.size(); ++i) w[i] = 0.0;
  for (Tensor& b : p.biases)
    for (long i = 0; i < b.size(); ++i) b[i] = 0.0;
}

}  // namespace

TEST(Dense, ForwardMatchesHandComputation) {
  Rng rng(1);
  LayerParams p = make_dense(3, 2, Activation::Linear, rng);
  p.weights[0] = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  p.biases[0] = Tensor::from({2}, {0.5, -0.5});
  Tensor x = Tensor::from({3}, {1, -1, 2});
  ForwardOut fo = layer_forward(p, x);
  // row 0: 1*1 + 2*(-1) + 3*2 + 0.5 = 5.5; row 1: 4 - 5 + 12 - 0.5 = 10.5
  EXPECT_DOUBLE_EQ(fo.output[0], 5.5);
  EXPECT_DOUBLE_EQ(fo.output[1], 10.5);
}

TEST(Dense, Activations) {
  Rng rng(2);
  for (Activation a : {Activation::Relu, Activation::Sigmoid, Activation::Tanh}) {
    LayerParams p = make_dense(1, 1, a, rng);
    p.weights[0][0] = 1.0;
    p.biases[0][0] = 0.0;
    Tensor x({1});
    x[0] = -0.7;
    double got = layer_forward(p, x).output[0];
    double want = a == Activation::Relu ? 0.0
                  : a == Activation::Sigmoid ? 1.0 / (1.0 + std::exp(0.7))
                                             : std::tanh(-0.7);
    EXPECT_DOUBLE_EQ(got, want);
  }
}

TEST(Dense, InitBoundScalesWithGain) {
  Rng rng(3);
  double gain = 4.0;
  LayerParams p = make_dense(16, 64, Activation::Linear, rng, gain);
  double bound = gain / std::sqrt(16.0);
  double biggest = 0.0;
  for (long i = 0; i < p.weights[0].size(); ++i) {
    EXPECT_LE(std::fabs(p.weights[0][i]), bound);
    biggest = std::max(biggest, std::fabs(p.weights[0][i]));
  }
  EXPECT_GT(biggest, 0.5 * bound);  // actually spread out, not collapsed
  for (long i = 0; i < p.biases[0].size(); ++i)
    EXPECT_DOUBLE_EQ(p.biases[0][i], 0.0);
}

TEST(Conv1d, KernelOneIdentity) {
  Rng rng(4);
  LayerParams p = make_conv1d(1, 1, 1, Activation::Linear, rng);
  p.weights[0][0] = 1.0;
  p.biases[0][0] = 0.0;
  Tensor x = Tensor::from({5, 1}, {1, 2, 3, 4, 5});
  ForwardOut fo = layer_forward(p, x);
  ASSERT_EQ(fo.output.dim(0), 5);
  for (int t = 0; t < 5; ++t) EXPECT_DOUBLE_EQ(fo.output.at(t, 0), x.at(t, 0));
}

TEST(Conv1d, SamePaddingKeepsLength) {
  Rng rng(5);
  for (int k : {1, 2, 3, 5, 8}) {
    LayerParams p = make_conv1d(3, 4, k, Activation::Relu, rng);
    Tensor x({16, 3}, 0.25);
    ForwardOut fo = layer_forward(p, x);
    EXPECT_EQ(fo.output.dim(0), 16);
    EXPECT_EQ(fo.output.dim(1), 4);
  }
}

TEST(Conv1d, HandComputedKernelThree) {
  Rng rng(6);
  LayerParams p = make_conv1d(1, 1, 3, Activation::Linear, rng);
  p.weights[0] = Tensor::from({1, 1, 3}, {1, 10, 100});
  p.biases[0][0] = 0.0;
  Tensor x = Tensor::from({4, 1}, {1, 2, 3, 4});
  ForwardOut fo = layer_forward(p, x);
  // pad 1 at both ends: y[t] = 1*x[t-1] + 10*x[t] + 100*x[t+1]
  EXPECT_DOUBLE_EQ(fo.output.at(0, 0), 10 * 1 + 100 * 2);
  EXPECT_DOUBLE_EQ(fo.output.at(1, 0), 1 * 1 + 10 * 2 + 100 * 3);
  EXPECT_DOUBLE_EQ(fo.output.at(2, 0), 1 * 2 + 10 * 3 + 100 * 4);
  EXPECT_DOUBLE_EQ(fo.output.at(3, 0), 1 * 3 + 10 * 4);
}

TEST(GlobalPool, AveragesOverTime) {
  LayerParams p = make_global_pool(2);
  Tensor x = Tensor::from({3, 2}, {1, 10, 2, 20, 3, 30});
  ForwardOut fo = layer_forward(p, x);
  ASSERT_EQ(fo.output.size(), 2);
  EXPECT_DOUBLE_EQ(fo.output[0], 2.0);
  EXPECT_DOUBLE_EQ(fo.output[1], 20.0);
}

TEST(LstmCell, ZeroEverythingStaysZero) {
  Rng rng(7);
  LayerParams p = make_lstm_cell(3, 4, rng);
  zero_params(p);
  Tensor x({3});
  ForwardOut fo = layer_forward(p, x);
  for (long i = 0; i < fo.output.size(); ++i) EXPECT_DOUBLE_EQ(fo.output[i], 0.0);
  for (long i = 0; i < fo.state.c.size(); ++i) EXPECT_DOUBLE_EQ(fo.state.c[i], 0.0);
}

TEST(GruCell, ZeroEverythingStaysZero) {
  Rng rng(8);
  LayerParams p = make_gru_cell(3, 4, rng);
  zero_params(p);
  Tensor x({3});
  ForwardOut fo = layer_forward(p, x);
  for (long i = 0; i < fo.output.size(); ++i) EXPECT_DOUBLE_EQ(fo.output[i], 0.0);
}

TEST(GruCell, FullUpdateGateHandsOverToCandidate) {
  // Force z == 1 via a huge update-gate bias: h' must equal tanh-candidate,
  // independent of the previous hidden state.
  Rng rng(9);
  LayerParams p = make_gru_cell(1, 1, rng);
  zero_params(p);
  p.biases[0][0] = 1000.0;  // z gate
  p.biases[0][2] = 0.3;     // candidate pre-activation
  Tensor x({1});
  RecState st;
  st.h = Tensor({1});
  st.h[0] = 0.9;
  ForwardOut fo = layer_forward(p, x, &st);
  EXPECT_NEAR(fo.output[0], std::tanh(0.3), 1e-12);
}

TEST(LstmCell, StatePropagatesThroughForgetGate) {
  // Open forget/output gates (huge biases), close input gate: c' = c, and
  // h' = tanh(c).
  Rng rng(10);
  LayerParams p = make_lstm_cell(1, 1, rng);
  zero_params(p);
  p.biases[0][0] = -1000.0;  // input gate shut
  p.biases[0][1] = 1000.0;   // forget gate open
  p.biases[0][3] = 1000.0;   // output gate open
  Tensor x({1});
  RecState st;
  st.h = Tensor({1});
  st.c = Tensor({1});
  st.c[0] = 0.42;
  ForwardOut fo = layer_forward(p, x, &st);
  EXPECT_NEAR(fo.state.c[0], 0.42, 1e-12);
  EXPECT_NEAR(fo.output[0], std::tanh(0.42), 1e-12);
}

TEST(ParamCount, ClosedForms) {
  Rng rng(11);
  EXPECT_EQ(param_count(make_dense(5, 3, Activation::Linear, rng)), 5 * 3 + 3);
  EXPECT_EQ(param_count(make_lstm_cell(5, 7, rng)),
            4 * 7 * 5 + 4 * 7 * 7 + 4 * 7);
  EXPECT_EQ(param_count(make_gru_cell(5, 7, rng)),
            3 * 7 * 5 + 3 * 7 * 7 + 3 * 7);
  EXPECT_EQ(param_count(make_conv1d(5, 3, 4, Activation::Relu, rng)),
            3 * 5 * 4 + 3);
  EXPECT_EQ(param_count(make_global_pool(9)), 0);
}

TEST(Grads, AccumulateAndScale) {
  Rng rng(12);
  LayerParams p = make_dense(2, 2, Activation::Linear, rng);
  LayerGrads a = zero_grads(p), b = zero_grads(p);
  a.weights[0][0] = 1.0;
  b.weights[0][0] = 2.0;
  b.biases[0][1] = 4.0;
  accumulate(a, b);
  EXPECT_DOUBLE_EQ(a.weights[0][0], 3.0);
  EXPECT_DOUBLE_EQ(a.biases[0][1], 4.0);
  scale_grads(a, 0.5);
  EXPECT_DOUBLE_EQ(a.weights[0][0], 1.5);
  EXPECT_DOUBLE_EQ(a.biases[0][1], 2.0);
}

// Finite differences against the analytic backward pass, for every layer kind
// in isolation (parameters, inputs, and recurrent state are all covered by
// layer_grad_check's weighted-output loss).
TEST(Backward, FiniteDifferenceDense) {
  Rng rng(20);
  LayerParams p = make_dense(4, 3, Activation::Tanh, rng);
  Tensor x({4});
  for (long i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1, 1);
  EXPECT_LT(layer_grad_check(p, x, 77, 1e-5), 1e-6);
}

TEST(Backward, FiniteDifferenceConv) {
  Rng rng(21);
  LayerParams p = make_conv1d(3, 2, 3, Activation::Relu, rng);
  Tensor x({6, 3});
  for (long i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1, 1) + 0.01;
  EXPECT_LT(layer_grad_check(p, x, 78, 1e-5), 1e-5);
}

TEST(Backward, FiniteDifferencePool) {
  LayerParams p = make_global_pool(3);
  Rng rng(22);
  Tensor x({5, 3});
  for (long i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1, 1);
  EXPECT_LT(layer_grad_check(p, x, 79, 1e-5), 1e-6);
}

TEST(Backward, FiniteDifferenceLstm) {
  Rng rng(23);
  LayerParams p = make_lstm_cell(4, 5, rng);
  Tensor x({4});
  for (long i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1, 1);
  EXPECT_LT(layer_grad_check(p, x, 80, 1e-5), 1e-5);
}

TEST(Backward, FiniteDifferenceGru) {
  Rng rng(24);
  LayerParams p = make_gru_cell(4, 5, rng);
  Tensor x({4});
  for (long i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1, 1);
  EXPECT_LT(layer_grad_check(p, x, 81, 1e-5), 1e-5);
}
