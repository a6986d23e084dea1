#ifndef ADDRTAG_NN_MATH_HPP
#define ADDRTAG_NN_MATH_HPP

#include <Eigen/Dense>
#include <cmath>

namespace addrtag::nn {

struct LstmState {
  Eigen::RowVectorXd h;
  Eigen::RowVectorXd c;
};

inline LstmState lstm_zero_state(int hidden) {
  return {Eigen::RowVectorXd::Zero(hidden), Eigen::RowVectorXd::Zero(hidden)};
}

// One LSTM cell step, gate order i, f, g, o. Weights are laid out for
// right-multiplication: x (1 x in) * wx (in x 4*hidden).
inline LstmState lstm_cell(const Eigen::RowVectorXd& x, const LstmState& prev, const Eigen::MatrixXd& wx,
                           const Eigen::MatrixXd& wh, const Eigen::MatrixXd& b) {
  const long hidden = wh.rows();
  Eigen::RowVectorXd z = x * wx + prev.h * wh + b.row(0);
  LstmState next{Eigen::RowVectorXd(hidden), Eigen::RowVectorXd(hidden)};
  for (long k = 0; k < hidden; ++k) {
    double i = 1.0 / (1.0 + std::exp(-z(k)));
    double f = 1.0 / (1.0 + std::exp(-z(hidden + k)));
    double g = std::tanh(z(2 * hidden + k));
    double o = 1.0 / (1.0 + std::exp(-z(3 * hidden + k)));
    next.c(k) = f * prev.c(k) + i * g;
    next.h(k) = o * std::tanh(next.c(k));
  }
  return next;
}

template <typename Derived>
Eigen::VectorXd softmax(const Eigen::MatrixBase<Derived>& scores) {
  Eigen::VectorXd s = scores;
  double m = s.maxCoeff();
  Eigen::ArrayXd e = (s.array() - m).exp();
  return (e / e.sum()).matrix();
}

// First maximal entry wins, so ties break toward the lowest index.
template <typename Derived>
int argmax_lowest(const Eigen::MatrixBase<Derived>& row) {
  int best = 0;
  for (int i = 1; i < row.size(); ++i) {
    if (row(i) > row(best)) best = i;
  }
  return best;
}

}  // namespace addrtag::nn

#endif  // ADDRTAG_NN_MATH_HPP
