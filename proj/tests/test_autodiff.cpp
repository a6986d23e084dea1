#include <cmath>
#include <random>

#include "addrtag/autodiff.hpp"
#include "doctest.h"
#include "support/fd_check.hpp"

using namespace addrtag;
using ad::Tape;
using ad::Var;
using Mat = Eigen::MatrixXd;

namespace {

Mat random_mat(std::mt19937_64& rng, long rows, long cols, double scale = 1.0) {
  Mat m(rows, cols);
  for (long r = 0; r < rows; ++r) {
    for (long c = 0; c < cols; ++c) {
      m(r, c) = scale * (2.0 * (static_cast<double>(rng() >> 11) * 0x1.0p-53) - 1.0);
    }
  }
  return m;
}

}  // namespace

TEST_SUITE_BEGIN("autodiff");

TEST_CASE("parameter blocks initialize within the fan-in bound, deterministically") {
  params::ParamSet a, b;
  a.add("w", 8, 16, 8);
  a.add("b", 1, 16, 8);
  b.add("w", 8, 16, 8);
  b.add("b", 1, 16, 8);
  a.init_uniform(123);
  b.init_uniform(123);
  CHECK(a.blocks[0].w == b.blocks[0].w);
  CHECK(a.blocks[1].w == b.blocks[1].w);
  CHECK(a.blocks[0].w.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(8.0));
  CHECK(a.blocks[0].w.cwiseAbs().maxCoeff() > 0.0);

  params::ParamSet c;
  c.add("w", 8, 16, 8);
  c.init_uniform(124);
  CHECK(a.blocks[0].w != c.blocks[0].w);
}

TEST_CASE("frozen blocks are skipped by init and sgd") {
  params::ParamSet set;
  params::Block& w = set.add("w", 2, 2, 2);
  w.w = Mat::Identity(2, 2);
  w.frozen = true;
  set.init_uniform(9);
  CHECK(w.w == Mat::Identity(2, 2));
  w.g = Mat::Ones(2, 2);
  set.sgd_step(0.5);
  CHECK(w.w == Mat::Identity(2, 2));
}

TEST_CASE("forward values of the elementwise ops") {
  Tape tape;
  Mat x(2, 2);
  x << 0.0, 1.0, -1.0, 2.0;
  Var vx = tape.constant(x);
  CHECK(tape.value(tape.tanh(vx))(0, 1) == doctest::Approx(std::tanh(1.0)));
  CHECK(tape.value(tape.sigmoid(vx))(0, 0) == doctest::Approx(0.5));
  CHECK(tape.value(tape.scale(vx, -2.0))(1, 1) == doctest::Approx(-4.0));
  CHECK(tape.value(tape.hadamard(vx, vx))(1, 0) == doctest::Approx(1.0));
}

TEST_CASE("softmax rows sum to one and respect the mask") {
  std::mt19937_64 rng(7);
  Tape tape;
  Mat x = random_mat(rng, 5, 9, 3.0);
  Mat mask = Mat::Ones(5, 9);
  mask(0, 3) = 0.0;
  mask(2, 0) = 0.0;
  mask.row(4).setZero();
  mask(4, 8) = 1.0;

  Var sm = tape.softmax_rows(tape.constant(x), &mask);
  const Mat& y = tape.value(sm);
  for (long r = 0; r < y.rows(); ++r) {
    CHECK(y.row(r).sum() == doctest::Approx(1.0).epsilon(1e-12));
    for (long c = 0; c < y.cols(); ++c) {
      CHECK(y(r, c) >= 0.0);
      if (mask(r, c) == 0.0) CHECK(y(r, c) == 0.0);
    }
  }
  CHECK(y(4, 8) == doctest::Approx(1.0));
}

TEST_CASE("cross entropy of zero logits over two classes is ln 2") {
  Tape tape;
  Var logits = tape.constant(Mat::Zero(4, 2));
  Var ce = tape.cross_entropy(logits, {0, 1, 0, 1}, Eigen::VectorXd::Ones(4), 4.0);
  CHECK(tape.value(ce)(0, 0) == doctest::Approx(std::log(2.0)));
}

TEST_CASE("grad_reverse is the identity forward and flips the gradient backward") {
  for (double lambda : {0.0, 0.5, 1.0, 3.0}) {
    Tape tape;
    params::ParamSet set;
    params::Block& w = set.add("w", 1, 3, 3);
    w.w << 1.5, -2.0, 0.25;

    Var vw = tape.param(w);
    Var rev = tape.grad_reverse(vw, lambda);
    CHECK(tape.value(rev) == w.w);

    // downstream scalar: sum of squares / 2, gradient w.r.t. rev equals value
    Var loss = tape.cross_entropy(rev, {1}, Eigen::VectorXd::Ones(1), 1.0);
    tape.backward(loss);

    Tape plain;
    params::ParamSet set2;
    params::Block& w2 = set2.add("w", 1, 3, 3);
    w2.w = w.w;
    Var loss2 = plain.cross_entropy(plain.param(w2), {1}, Eigen::VectorXd::Ones(1), 1.0);
    plain.backward(loss2);

    CHECK((w.g + lambda * w2.g).cwiseAbs().maxCoeff() == doctest::Approx(0.0).epsilon(1e-15));
  }
}

TEST_CASE("gather accumulates into repeated rows") {
  Tape tape;
  params::ParamSet set;
  params::Block& table = set.add("t", 3, 2, 2);
  table.w << 1, 2, 3, 4, 5, 6;
  Var g = tape.gather_rows(tape.param(table), {2, 0, 2});
  CHECK(tape.value(g)(0, 0) == 5);
  CHECK(tape.value(g)(1, 1) == 2);

  Var loss = tape.cross_entropy(g, {0, 1, 1}, Eigen::VectorXd::Ones(3), 3.0);
  tape.backward(loss);
  // row 2 used twice, row 1 never
  CHECK(table.g.row(1).cwiseAbs().maxCoeff() == 0.0);
  CHECK(table.g.row(2).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("composite graph gradients match central finite differences") {
  std::mt19937_64 rng(101);
  params::ParamSet set;
  params::Block& w1 = set.add("w1", 4, 12, 4);
  params::Block& b1 = set.add("b1", 1, 12, 4);
  params::Block& w2 = set.add("w2", 3, 4, 3);
  params::Block& table = set.add("table", 5, 4, 4);
  params::Block& p = set.add("p", 4, 1, 4);
  set.init_uniform(55);

  Mat x = random_mat(rng, 6, 4);
  Mat mask = Mat::Ones(6, 3);
  mask(1, 2) = 0.0;
  mask(3, 0) = 0.0;
  std::vector<int> gather_idx = {0, 4, 2, 2, 1, 3};
  std::vector<int> targets = {0, 1, 2, 0, 1, 2};
  Eigen::VectorXd weights(6);
  weights << 1, 0, 1, 1, 0.5, 1;

  auto build = [&](Tape& tape) {
    Var vx = tape.constant(x);
    Var rows = tape.gather_rows(tape.param(table), gather_idx);
    Var mixed = tape.hadamard(tape.tanh(vx), tape.sigmoid(rows));
    Var z = tape.add_rowvec(tape.matmul(mixed, tape.param(w1)), tape.param(b1));
    Var a = tape.tanh(tape.slice_cols(z, 0, 4));
    Var b = tape.sigmoid(tape.slice_cols(z, 4, 4));
    Var c = tape.add(tape.hadamard(a, b), tape.scale(tape.slice_cols(z, 8, 4), 0.3));
    Var s = tape.matmul(c, tape.param(p));           // 6x1
    Var scaled = tape.row_scale(c, s);               // row_scale with a variable scale
    Var cat = tape.hconcat({scaled, tape.scale(c, 0.7)});
    Var logits = tape.matmul(cat, tape.constant(random_mat(rng, 8, 3)));
    Var sm_in = tape.matmul(tape.softmax_rows(logits, &mask), tape.param(w2));
    return tape.cross_entropy(sm_in, targets, weights, 4.5);
  };

  std::mt19937_64 rng_frozen = rng;  // the random constant must be identical per rebuild
  auto loss_value = [&]() {
    rng = rng_frozen;
    Tape tape;
    return tape.value(build(tape))(0, 0);
  };

  rng = rng_frozen;
  Tape tape;
  Var loss = build(tape);
  tape.backward(loss);

  auto report = testsupport::finite_difference_check(set, loss_value, 1e-5, 30);
  INFO(report.worst);
  CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("backward through reused nodes accumulates both paths") {
  params::ParamSet set;
  params::Block& w = set.add("w", 1, 2, 2);
  w.w << 0.3, -0.4;

  Tape tape;
  Var vw = tape.param(w);
  Var doubled = tape.add(vw, vw);  // same node used twice
  Var loss = tape.cross_entropy(doubled, {0}, Eigen::VectorXd::Ones(1), 1.0);
  tape.backward(loss);

  auto loss_value = [&]() {
    Tape t;
    Var v = t.param(w);
    return t.value(t.cross_entropy(t.add(v, v), {0}, Eigen::VectorXd::Ones(1), 1.0))(0, 0);
  };
  auto report = testsupport::finite_difference_check(set, loss_value);
  CHECK(report.max_rel_error < 1e-7);
}

TEST_SUITE_END();
