#include "addrtag/autodiff.hpp"

#include <cmath>
#include <stdexcept>

#include "addrtag/types.hpp"
#include "addrtag/util.hpp"

namespace addrtag::params {

Block& ParamSet::add(const std::string& name, int rows, int cols, int fan_in) {
  if (find(name)) throw std::logic_error("duplicate parameter block: " + name);
  blocks.emplace_back(name, rows, cols, fan_in);
  return blocks.back();
}

Block* ParamSet::find(const std::string& name) {
  for (auto& b : blocks) {
    if (b.name == name) return &b;
  }
  return nullptr;
}

const Block* ParamSet::find(const std::string& name) const {
  for (const auto& b : blocks) {
    if (b.name == name) return &b;
  }
  return nullptr;
}

void ParamSet::zero_grads() {
  for (auto& b : blocks) b.g.setZero();
}

void ParamSet::sgd_step(double lr) {
  for (auto& b : blocks) {
    if (!b.frozen) b.w -= lr * b.lr_scale * b.g;
  }
}

long ParamSet::count() const {
  long n = 0;
  for (const auto& b : blocks) n += b.w.size();
  return n;
}

void ParamSet::init_uniform(std::uint64_t seed) {
  // Hand-rolled uniform from raw 64-bit draws so the stream is identical
  // across standard libraries.
  std::uint64_t state = seed;
  auto next_unit = [&state]() {
    state = mix_seed(state, 0x5eed);
    return static_cast<double>(state >> 11) * 0x1.0p-53;  // [0, 1)
  };
  for (auto& b : blocks) {
    if (b.frozen) continue;
    double bound = 1.0 / std::sqrt(static_cast<double>(b.fan_in));
    for (long r = 0; r < b.w.rows(); ++r) {
      for (long c = 0; c < b.w.cols(); ++c) {
        b.w(r, c) = (2.0 * next_unit() - 1.0) * bound;
      }
    }
  }
}

}  // namespace addrtag::params

namespace addrtag::ad {

namespace {

void require(bool cond, const char* what) {
  if (!cond) throw std::logic_error(std::string("tape misuse: ") + what);
}

}  // namespace

int Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

const Tape::Node& Tape::at(Var v) const {
  require(v.valid() && v.i < static_cast<int>(nodes_.size()), "dangling Var");
  return nodes_[static_cast<std::size_t>(v.i)];
}

const Mat& Tape::value(Var v) const { return at(v).value; }

const Mat& Tape::gradient(Var v) const { return at(v).grad; }

Mat& Tape::grad_of(int i, long rows, long cols) {
  Mat& g = nodes_[static_cast<std::size_t>(i)].grad;
  if (g.size() == 0) g = Mat::Zero(rows, cols);
  return g;
}

Var Tape::constant(Mat v) {
  Node n;
  n.op = Op::kConst;
  n.value = std::move(v);
  return {push(std::move(n))};
}

Var Tape::param(params::Block& b) {
  Node n;
  n.op = Op::kParam;
  n.value = b.w;
  n.block = &b;
  return {push(std::move(n))};
}

Var Tape::matmul(Var a, Var b) {
  require(at(a).value.cols() == at(b).value.rows(), "matmul inner dims");
  Node n;
  n.op = Op::kMatmul;
  n.a = a.i;
  n.b = b.i;
  n.value = at(a).value * at(b).value;
  return {push(std::move(n))};
}

Var Tape::add(Var a, Var b) {
  require(at(a).value.rows() == at(b).value.rows() && at(a).value.cols() == at(b).value.cols(), "add shapes");
  Node n;
  n.op = Op::kAdd;
  n.a = a.i;
  n.b = b.i;
  n.value = at(a).value + at(b).value;
  return {push(std::move(n))};
}

Var Tape::scale(Var a, double k) {
  Node n;
  n.op = Op::kScale;
  n.a = a.i;
  n.k = k;
  n.value = k * at(a).value;
  return {push(std::move(n))};
}

Var Tape::add_rowvec(Var a, Var row) {
  require(at(row).value.rows() == 1 && at(row).value.cols() == at(a).value.cols(), "add_rowvec shapes");
  Node n;
  n.op = Op::kAddRowVec;
  n.a = a.i;
  n.b = row.i;
  n.value = at(a).value.rowwise() + at(row).value.row(0);
  return {push(std::move(n))};
}

Var Tape::hadamard(Var a, Var b) {
  require(at(a).value.rows() == at(b).value.rows() && at(a).value.cols() == at(b).value.cols(), "hadamard shapes");
  Node n;
  n.op = Op::kHadamard;
  n.a = a.i;
  n.b = b.i;
  n.value = at(a).value.cwiseProduct(at(b).value);
  return {push(std::move(n))};
}

Var Tape::tanh(Var a) {
  Node n;
  n.op = Op::kTanh;
  n.a = a.i;
  n.value = at(a).value.array().tanh();
  return {push(std::move(n))};
}

Var Tape::sigmoid(Var a) {
  Node n;
  n.op = Op::kSigmoid;
  n.a = a.i;
  n.value = (1.0 / (1.0 + (-at(a).value.array()).exp())).matrix();
  return {push(std::move(n))};
}

Var Tape::hconcat(const std::vector<Var>& vs) {
  require(!vs.empty(), "hconcat needs inputs");
  long rows = at(vs.front()).value.rows();
  long cols = 0;
  for (Var v : vs) {
    require(at(v).value.rows() == rows, "hconcat row counts");
    cols += at(v).value.cols();
  }
  Node n;
  n.op = Op::kHConcat;
  n.value.resize(rows, cols);
  long c = 0;
  for (Var v : vs) {
    n.many.push_back(v.i);
    n.value.middleCols(c, at(v).value.cols()) = at(v).value;
    c += at(v).value.cols();
  }
  return {push(std::move(n))};
}

Var Tape::slice_cols(Var a, int col0, int ncols) {
  require(col0 >= 0 && ncols >= 1 && col0 + ncols <= at(a).value.cols(), "slice bounds");
  Node n;
  n.op = Op::kSliceCols;
  n.a = a.i;
  n.col0 = col0;
  n.ncols = ncols;
  n.value = at(a).value.middleCols(col0, ncols);
  return {push(std::move(n))};
}

Var Tape::row_scale(Var a, Var s) {
  require(at(s).value.cols() == 1 && at(s).value.rows() == at(a).value.rows(), "row_scale shapes");
  Node n;
  n.op = Op::kRowScale;
  n.a = a.i;
  n.b = s.i;
  n.value = at(a).value.array().colwise() * at(s).value.col(0).array();
  return {push(std::move(n))};
}

Var Tape::gather_rows(Var table, std::vector<int> idx) {
  const Mat& t = at(table).value;
  Node n;
  n.op = Op::kGatherRows;
  n.a = table.i;
  n.value.resize(static_cast<long>(idx.size()), t.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    require(idx[i] >= 0 && idx[i] < t.rows(), "gather index");
    n.value.row(static_cast<long>(i)) = t.row(idx[i]);
  }
  n.idx = std::move(idx);
  return {push(std::move(n))};
}

Var Tape::softmax_rows(Var a, const Mat* mask01) {
  const Mat& x = at(a).value;
  if (mask01) {
    require(mask01->rows() == x.rows() && mask01->cols() == x.cols(), "softmax mask shape");
  }
  Node n;
  n.op = Op::kSoftmaxRows;
  n.a = a.i;
  n.value.resize(x.rows(), x.cols());
  for (long r = 0; r < x.rows(); ++r) {
    double m = -std::numeric_limits<double>::infinity();
    for (long c = 0; c < x.cols(); ++c) {
      if (!mask01 || (*mask01)(r, c) != 0.0) m = std::max(m, x(r, c));
    }
    if (!std::isfinite(m)) throw NonFiniteError("softmax row with no unmasked entries");
    double z = 0.0;
    for (long c = 0; c < x.cols(); ++c) {
      double e = (!mask01 || (*mask01)(r, c) != 0.0) ? std::exp(x(r, c) - m) : 0.0;
      n.value(r, c) = e;
      z += e;
    }
    n.value.row(r) /= z;
  }
  return {push(std::move(n))};
}

Var Tape::cross_entropy(Var logits, std::vector<int> targets, Eigen::VectorXd weights, double normalizer) {
  const Mat& x = at(logits).value;
  require(static_cast<long>(targets.size()) == x.rows(), "cross_entropy target count");
  require(weights.size() == x.rows(), "cross_entropy weight count");
  require(normalizer > 0.0, "cross_entropy normalizer");

  Node n;
  n.op = Op::kCrossEntropy;
  n.a = logits.i;
  n.norm = normalizer;
  n.aux.resize(x.rows(), x.cols());  // softmax probabilities, reused in backward
  double total = 0.0;
  for (long r = 0; r < x.rows(); ++r) {
    require(targets[static_cast<std::size_t>(r)] >= 0 && targets[static_cast<std::size_t>(r)] < x.cols(),
            "cross_entropy target range");
    double m = x.row(r).maxCoeff();
    double z = (x.row(r).array() - m).exp().sum();
    n.aux.row(r) = ((x.row(r).array() - m).exp() / z).matrix();
    double log_prob = x(r, targets[static_cast<std::size_t>(r)]) - m - std::log(z);
    total += weights(r) * (-log_prob);
  }
  n.idx = std::move(targets);
  n.w = std::move(weights);
  n.value = Mat::Constant(1, 1, total / normalizer);
  return {push(std::move(n))};
}

Var Tape::grad_reverse(Var a, double lambda) {
  Node n;
  n.op = Op::kGradReverse;
  n.a = a.i;
  n.k = lambda;
  n.value = at(a).value;
  return {push(std::move(n))};
}

void Tape::backward(Var scalar_loss) {
  const Node& loss = at(scalar_loss);
  require(loss.value.rows() == 1 && loss.value.cols() == 1, "backward needs a 1x1 loss");
  grad_of(scalar_loss.i, 1, 1) = Mat::Ones(1, 1);

  for (int i = scalar_loss.i; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.grad.size() == 0) continue;  // not reached from the loss
    const Mat& g = n.grad;
    switch (n.op) {
      case Op::kConst:
        break;
      case Op::kParam:
        n.block->g += g;
        break;
      case Op::kMatmul: {
        const Mat& av = nodes_[static_cast<std::size_t>(n.a)].value;
        const Mat& bv = nodes_[static_cast<std::size_t>(n.b)].value;
        grad_of(n.a, av.rows(), av.cols()).noalias() += g * bv.transpose();
        grad_of(n.b, bv.rows(), bv.cols()).noalias() += av.transpose() * g;
        break;
      }
      case Op::kAdd:
        grad_of(n.a, g.rows(), g.cols()) += g;
        grad_of(n.b, g.rows(), g.cols()) += g;
        break;
      case Op::kScale:
        grad_of(n.a, g.rows(), g.cols()) += n.k * g;
        break;
      case Op::kAddRowVec:
        grad_of(n.a, g.rows(), g.cols()) += g;
        grad_of(n.b, 1, g.cols()) += g.colwise().sum();
        break;
      case Op::kHadamard: {
        const Mat& av = nodes_[static_cast<std::size_t>(n.a)].value;
        const Mat& bv = nodes_[static_cast<std::size_t>(n.b)].value;
        grad_of(n.a, g.rows(), g.cols()) += g.cwiseProduct(bv);
        grad_of(n.b, g.rows(), g.cols()) += g.cwiseProduct(av);
        break;
      }
      case Op::kTanh:
        grad_of(n.a, g.rows(), g.cols()).array() += g.array() * (1.0 - n.value.array().square());
        break;
      case Op::kSigmoid:
        grad_of(n.a, g.rows(), g.cols()).array() += g.array() * n.value.array() * (1.0 - n.value.array());
        break;
      case Op::kHConcat: {
        long c = 0;
        for (int src : n.many) {
          const Mat& sv = nodes_[static_cast<std::size_t>(src)].value;
          grad_of(src, sv.rows(), sv.cols()) += g.middleCols(c, sv.cols());
          c += sv.cols();
        }
        break;
      }
      case Op::kSliceCols: {
        const Mat& av = nodes_[static_cast<std::size_t>(n.a)].value;
        grad_of(n.a, av.rows(), av.cols()).middleCols(n.col0, n.ncols) += g;
        break;
      }
      case Op::kRowScale: {
        const Mat& av = nodes_[static_cast<std::size_t>(n.a)].value;
        const Mat& sv = nodes_[static_cast<std::size_t>(n.b)].value;
        grad_of(n.a, g.rows(), g.cols()).array() += g.array().colwise() * sv.col(0).array();
        grad_of(n.b, sv.rows(), 1).col(0) += g.cwiseProduct(av).rowwise().sum();
        break;
      }
      case Op::kGatherRows: {
        const Mat& tv = nodes_[static_cast<std::size_t>(n.a)].value;
        Mat& tg = grad_of(n.a, tv.rows(), tv.cols());
        for (std::size_t r = 0; r < n.idx.size(); ++r) {
          tg.row(n.idx[r]) += g.row(static_cast<long>(r));
        }
        break;
      }
      case Op::kSoftmaxRows: {
        Mat& ag = grad_of(n.a, g.rows(), g.cols());
        for (long r = 0; r < g.rows(); ++r) {
          double dot = g.row(r).dot(n.value.row(r));
          ag.row(r).array() += n.value.row(r).array() * (g.row(r).array() - dot);
        }
        break;
      }
      case Op::kCrossEntropy: {
        double up = g(0, 0) / n.norm;
        const Mat& lv = nodes_[static_cast<std::size_t>(n.a)].value;
        Mat& lg = grad_of(n.a, lv.rows(), lv.cols());
        for (long r = 0; r < lv.rows(); ++r) {
          double wr = up * n.w(r);
          lg.row(r) += wr * n.aux.row(r);
          lg(r, n.idx[static_cast<std::size_t>(r)]) -= wr;
        }
        break;
      }
      case Op::kGradReverse:
        grad_of(n.a, g.rows(), g.cols()) += (-n.k) * g;
        break;
    }
  }
}

}  // namespace addrtag::ad
