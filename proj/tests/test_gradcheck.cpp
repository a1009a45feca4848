#include "drivesec/gradcheck.hpp"

#include <gtest/gtest.h>

using namespace drivesec;

namespace {

Tensor random_window(int T, int F, std::uint64_t seed) {
  Rng rng(seed);
  Tensor w({T, F});
  for (long i = 0; i < w.size(); ++i) w[i] = rng.uniform(0, 1);
  return w;
}

ArchSpec small_spec(ArchKind kind) {
  ArchSpec as;
  as.kind = kind;
  as.hidden = {8};
  as.conv_widths = {4, 6, 4};
  as.conv_kernels = {3, 3, 3};
  as.classes = 3;
  as.features = 5;
  return as;
}

}  // namespace

// Whole-network analytic gradients against central finite differences, for
// each architecture at hidden size 8. The 1e-4 ceiling leaves margin over the
// ~1e-7 the double-precision FD probe actually achieves.
TEST(GradCheck, LstmFcnBelowTolerance) {
  ClassifierNet net = build_net(small_spec(ArchKind::LstmFcn), 101);
  Tensor w = random_window(12, 5, 201);
  EXPECT_LT(grad_check(net, w, 1, 1e-5), 1e-4);
}

TEST(GradCheck, LstmBelowTolerance) {
  ClassifierNet net = build_net(small_spec(ArchKind::Lstm), 102);
  Tensor w = random_window(12, 5, 202);
  EXPECT_LT(grad_check(net, w, 0, 1e-5), 1e-4);
}

TEST(GradCheck, RnnGruBelowTolerance) {
  ClassifierNet net = build_net(small_spec(ArchKind::RnnGru), 103);
  Tensor w = random_window(12, 5, 203);
  EXPECT_LT(grad_check(net, w, 2, 1e-4), 1e-4);
}

TEST(GradCheck, StackedRecurrentLayers) {
  ArchSpec as = small_spec(ArchKind::Lstm);
  as.hidden = {6, 6};
  ClassifierNet net = build_net(as, 104);
  Tensor w = random_window(10, 5, 204);
  EXPECT_LT(grad_check(net, w, 1, 1e-5), 1e-4);
}

TEST(GradCheck, EveryTargetClass) {
  ClassifierNet net = build_net(small_spec(ArchKind::RnnGru), 105);
  Tensor w = random_window(8, 5, 205);
  for (int target = 0; target < 3; ++target)
    EXPECT_LT(grad_check(net, w, target, 1e-4), 1e-4) << "target " << target;
}

// The checker must be able to fail: corrupt one analytic gradient entry and
// the reported worst relative error jumps by orders of magnitude.
TEST(GradCheck, DetectsCorruptedGradient) {
  ClassifierNet net = build_net(small_spec(ArchKind::Lstm), 106);
  Tensor w = random_window(8, 5, 206);
  NetForward fo = net_forward(net, w);
  LossOut lo = softmax_xent(fo.logits, 1);
  NetBackward bo = net_backward(net, fo.cache, lo.logit_grad);
  double honest = compare_to_fd(net, w, 1, bo.grads, 1e-5);
  bo.grads[0].weights[0][0] += 1.0;
  double corrupted = compare_to_fd(net, w, 1, bo.grads, 1e-5);
  EXPECT_LT(honest, 1e-4);
  EXPECT_GT(corrupted, 0.1);
}

TEST(GradCheck, RejectsBadEpsilon) {
  ClassifierNet net = build_net(small_spec(ArchKind::Lstm), 107);
  Tensor w = random_window(8, 5, 207);
  EXPECT_THROW(grad_check(net, w, 0, 0.0), Error);
}
