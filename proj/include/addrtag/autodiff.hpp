#ifndef ADDRTAG_AUTODIFF_HPP
#define ADDRTAG_AUTODIFF_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <deque>
#include <string>
#include <vector>

namespace addrtag::params {

// Named trainable parameter block. `g` accumulates gradients between
// optimizer steps. `fan_in` drives the uniform [-1/sqrt(fan_in), 1/sqrt(fan_in)]
// initialization; frozen blocks are skipped by both init and updates.
struct Block {
  std::string name;
  Eigen::MatrixXd w;
  Eigen::MatrixXd g;
  int fan_in;
  bool frozen = false;
  double lr_scale = 1.0;

  Block(std::string n, int rows, int cols, int fan)
      : name(std::move(n)), w(Eigen::MatrixXd::Zero(rows, cols)), g(Eigen::MatrixXd::Zero(rows, cols)), fan_in(fan) {}
};

struct ParamSet {
  std::deque<Block> blocks;  // deque keeps Block* stable

  Block& add(const std::string& name, int rows, int cols, int fan_in);
  Block* find(const std::string& name);
  const Block* find(const std::string& name) const;
  void zero_grads();
  void sgd_step(double lr);
  long count() const;
  void init_uniform(std::uint64_t seed);
};

}  // namespace addrtag::params

namespace addrtag::ad {

using Mat = Eigen::MatrixXd;

// Handle into a Tape.
struct Var {
  int i = -1;
  bool valid() const { return i >= 0; }
};

// Eagerly-evaluated reverse-mode tape over dense matrices. One Tape per
// forward pass; backward() accumulates parameter gradients into the Blocks
// referenced by param() nodes.
class Tape {
 public:
  Var constant(Mat v);
  Var param(params::Block& b);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var scale(Var a, double k);
  Var add_rowvec(Var a, Var row);          // row is 1 x K, broadcast over rows
  Var hadamard(Var a, Var b);
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var hconcat(const std::vector<Var>& vs);
  Var slice_cols(Var a, int col0, int ncols);
  Var row_scale(Var a, Var s);             // s is B x 1, scales each row
  Var gather_rows(Var table, std::vector<int> idx);
  // Row-wise softmax. Entries where mask01 is 0 get probability exactly 0.
  Var softmax_rows(Var a, const Mat* mask01 = nullptr);
  // Sum over rows of w[i] * CE(logits.row(i), targets[i]) / normalizer; 1x1.
  Var cross_entropy(Var logits, std::vector<int> targets, Eigen::VectorXd weights, double normalizer);
  // Identity forward; backward multiplies the upstream gradient by -lambda.
  Var grad_reverse(Var a, double lambda);

  const Mat& value(Var v) const;
  // Gradient of the last backward() w.r.t. node v (empty if unreached).
  const Mat& gradient(Var v) const;
  void backward(Var scalar_loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  enum class Op : std::uint8_t {
    kConst, kParam, kMatmul, kAdd, kScale, kAddRowVec, kHadamard, kTanh, kSigmoid,
    kHConcat, kSliceCols, kRowScale, kGatherRows, kSoftmaxRows, kCrossEntropy, kGradReverse,
  };

  struct Node {
    Op op;
    int a = -1, b = -1;
    std::vector<int> many;
    Mat value;
    Mat grad;  // empty until touched by backward
    double k = 0.0;
    int col0 = 0, ncols = 0;
    std::vector<int> idx;
    Eigen::VectorXd w;
    double norm = 1.0;
    Mat aux;  // softmax probabilities cache / CE probabilities
    params::Block* block = nullptr;
  };

  int push(Node n);
  Mat& grad_of(int i, long rows, long cols);
  const Node& at(Var v) const;

  std::vector<Node> nodes_;
};

}  // namespace addrtag::ad

#endif  // ADDRTAG_AUTODIFF_HPP
