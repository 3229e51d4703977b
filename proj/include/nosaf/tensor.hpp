#pragma once

#include <cstddef>
#include <vector>

#include "nosaf/sparse.hpp"

namespace nosaf {

enum class Mode { kTrain, kEval };

// Per-feature affine + running statistics for one batch-norm layer.
// gamma/beta are learnable (the model turns them into tape leaves);
// running_mean/running_var are updated in place by train-mode forward.
struct BatchNormState {
  Mat gamma;         // 1 x F
  Mat beta;          // 1 x F
  Mat running_mean;  // 1 x F
  Mat running_var;   // 1 x F
  double eps = 1e-5;
  double momentum = 0.1;

  static BatchNormState init(int features);
};

class Tape;

// Cheap handle to a tape node. Copying copies the handle, not the data.
struct Tensor {
  Tape* tape = nullptr;
  int id = -1;

  int rows() const;
  int cols() const;
  const Mat& value() const;
};

// Reverse-mode tape over dense 64-bit matrices. One tape per forward pass;
// record leaves and ops, call backward(loss) once, read gradients off the
// leaves. Constants are leaves that never receive a gradient.
class Tape {
 public:
  Tensor leaf(Mat value, bool requires_grad);
  Tensor constant(Mat value) { return leaf(std::move(value), false); }

  // Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse. Gradients at
  // fan-out accumulate by summation. loss must be 1x1 and live on this tape.
  void backward(const Tensor& loss);

  bool has_grad(const Tensor& t) const;
  const Mat& grad(const Tensor& t) const;  // throws ArgumentError if absent
  Mat grad_or_zero(const Tensor& t) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  enum class Op {
    kLeaf,
    kMatMul,
    kSpmm,
    kAdd,
    kSub,
    kHadamard,
    kScale,
    kRelu,
    kLeakyRelu,
    kSigmoid,
    kBroadcastCol,
    kBroadcastRow,
    kConcatCols,
    kBatchNorm,
    kMaskedCe,
    kSum,
  };

  struct Node {
    Op op = Op::kLeaf;
    int in0 = -1, in1 = -1, in2 = -1;
    Mat value;
    bool requires_grad = false;  // leaves only: eligible for a gradient
    double scalar = 0.0;         // scale factor / leaky slope
    int split = 0;               // concat: column count of the left operand
    const SparseCsr* sp = nullptr;  // spmm; must outlive the tape
    Mat saved_a;  // relu/leaky: input copy is in0; bn: xhat; ce: d(loss)/d(logits)
    Mat saved_b;  // bn: inv_std (1 x F)
    bool flag = false;  // bn: recorded in train mode
  };

  int push(Node n);
  const Mat& val(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  void accumulate(int id, const Mat& g);

  std::vector<Node> nodes_;
  std::vector<Mat> grads_;  // parallel to nodes_; empty = no gradient reached

  friend struct Tensor;
  friend Tensor matmul(const Tensor& a, const Tensor& b);
  friend Tensor spmm(const SparseCsr& s, const Tensor& d);
  friend Tensor add(const Tensor& a, const Tensor& b);
  friend Tensor sub(const Tensor& a, const Tensor& b);
  friend Tensor hadamard(const Tensor& a, const Tensor& b);
  friend Tensor scale(const Tensor& a, double c);
  friend Tensor relu(const Tensor& a);
  friend Tensor leaky_relu(const Tensor& a, double slope);
  friend Tensor sigmoid(const Tensor& a);
  friend Tensor broadcast_col(const Tensor& v, int width);
  friend Tensor broadcast_row(const Tensor& v, int height);
  friend Tensor concat_cols(const Tensor& a, const Tensor& b);
  friend Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                           BatchNormState& state, Mode mode);
  friend Tensor masked_softmax_cross_entropy(const Tensor& logits,
                                             const std::vector<int>& labels,
                                             const std::vector<int>& mask);
  friend Tensor sum(const Tensor& a);
};

// ---- recorded operations ----------------------------------------------
// All shape preconditions throw DimensionError with both shapes in the
// message. Results are finite whenever the inputs are finite.

Tensor matmul(const Tensor& a, const Tensor& b);

// s is captured by reference and must outlive the tape. No gradient flows
// to the sparse values (the adjacency is structural, not learnable).
Tensor spmm(const SparseCsr& s, const Tensor& d);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope);
Tensor sigmoid(const Tensor& a);

// N x 1 column -> N x width (each row constant). Backward row-sums.
Tensor broadcast_col(const Tensor& v, int width);

// 1 x K row -> height x K (each column constant). Backward column-sums.
Tensor broadcast_row(const Tensor& v, int height);

Tensor concat_cols(const Tensor& a, const Tensor& b);

// Train mode normalizes by batch statistics (biased variance) and updates
// state's running statistics (unbiased variance, biased when N == 1).
// Eval mode normalizes by the running statistics. Differentiable in both
// modes with respect to x, gamma and beta.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormState& state, Mode mode);

// Mean negative log-softmax-likelihood over the rows listed in mask.
// Row-max subtraction keeps the softmax finite for any finite logits.
// labels.size() must equal logits.rows(); labels in [0, logits.cols());
// mask must be non-empty with valid row indices.
Tensor masked_softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels,
                                    const std::vector<int>& mask);

// Sum of all entries (1 x 1). Mostly useful for tests.
Tensor sum(const Tensor& a);

}  // namespace nosaf
