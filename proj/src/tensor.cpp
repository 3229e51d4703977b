#include "nosaf/tensor.hpp"

#include <cmath>
#include <string>

#include "nosaf/errors.hpp"

namespace nosaf {

namespace {

std::string shape_of(const Mat& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_tape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.tape == nullptr || a.tape != b.tape)
    throw ArgumentError(std::string(op) + ": operands live on different tapes");
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError(std::string(op) + ": " + shape_of(a.value()) + " vs " +
                         shape_of(b.value()));
}

// Numerically safe logistic: never exponentiates a positive argument.
double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

int Tensor::rows() const { return static_cast<int>(value().rows()); }
int Tensor::cols() const { return static_cast<int>(value().cols()); }

const Mat& Tensor::value() const {
  if (tape == nullptr || id < 0) throw ArgumentError("Tensor: empty handle");
  return tape->nodes_[static_cast<std::size_t>(id)].value;
}

BatchNormState BatchNormState::init(int features) {
  if (features <= 0) throw ArgumentError("BatchNormState: feature count must be positive");
  BatchNormState s;
  s.gamma = Mat::Ones(1, features);
  s.beta = Mat::Zero(1, features);
  s.running_mean = Mat::Zero(1, features);
  s.running_var = Mat::Ones(1, features);
  return s;
}

int Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Tensor Tape::leaf(Mat value, bool requires_grad) {
  Node n;
  n.op = Op::kLeaf;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  return Tensor{this, push(std::move(n))};
}

void Tape::accumulate(int id, const Mat& g) {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.op == Op::kLeaf && !n.requires_grad) return;  // constants take no gradient
  Mat& slot = grads_[static_cast<std::size_t>(id)];
  if (slot.size() == 0)
    slot = g;
  else
    slot += g;
}

bool Tape::has_grad(const Tensor& t) const {
  return t.tape == this && t.id >= 0 && static_cast<std::size_t>(t.id) < grads_.size() &&
         grads_[static_cast<std::size_t>(t.id)].size() != 0;
}

const Mat& Tape::grad(const Tensor& t) const {
  if (!has_grad(t)) throw ArgumentError("Tape::grad: node has no gradient");
  return grads_[static_cast<std::size_t>(t.id)];
}

Mat Tape::grad_or_zero(const Tensor& t) const {
  if (has_grad(t)) return grads_[static_cast<std::size_t>(t.id)];
  return Mat::Zero(t.rows(), t.cols());
}

void Tape::backward(const Tensor& loss) {
  if (loss.tape != this) throw ArgumentError("backward: loss lives on another tape");
  if (loss.rows() != 1 || loss.cols() != 1)
    throw ArgumentError("backward: loss must be 1x1, got " + shape_of(loss.value()));

  grads_.assign(nodes_.size(), Mat());
  grads_[static_cast<std::size_t>(loss.id)] = Mat::Ones(1, 1);

  for (int i = loss.id; i >= 0; --i) {
    const Mat& g = grads_[static_cast<std::size_t>(i)];
    if (g.size() == 0) continue;
    const Node& n = nodes_[static_cast<std::size_t>(i)];
    switch (n.op) {
      case Op::kLeaf:
        break;
      case Op::kMatMul: {
        accumulate(n.in0, g * val(n.in1).transpose());
        accumulate(n.in1, val(n.in0).transpose() * g);
        break;
      }
      case Op::kSpmm: {
        const SparseCsr& s = *n.sp;
        Mat dd = Mat::Zero(val(n.in0).rows(), val(n.in0).cols());
        for (int r = 0; r < s.rows; ++r)
          for (int k = s.row_ptr[r]; k < s.row_ptr[r + 1]; ++k)
            dd.row(s.col_idx[k]) += s.values[k] * g.row(r);
        accumulate(n.in0, dd);
        break;
      }
      case Op::kAdd: {
        accumulate(n.in0, g);
        accumulate(n.in1, g);
        break;
      }
      case Op::kSub: {
        accumulate(n.in0, g);
        accumulate(n.in1, -g);
        break;
      }
      case Op::kHadamard: {
        accumulate(n.in0, g.cwiseProduct(val(n.in1)));
        accumulate(n.in1, g.cwiseProduct(val(n.in0)));
        break;
      }
      case Op::kScale: {
        accumulate(n.in0, n.scalar * g);
        break;
      }
      case Op::kRelu: {
        const Mat& x = val(n.in0);
        accumulate(n.in0, (x.array() > 0.0).cast<double>().matrix().cwiseProduct(g));
        break;
      }
      case Op::kLeakyRelu: {
        const double slope = n.scalar;
        Mat factor = val(n.in0).unaryExpr(
            [slope](double v) { return v > 0.0 ? 1.0 : slope; });
        accumulate(n.in0, factor.cwiseProduct(g));
        break;
      }
      case Op::kSigmoid: {
        const Mat& y = n.value;
        Mat dy = g.cwiseProduct(y.cwiseProduct(Mat::Ones(y.rows(), y.cols()) - y));
        accumulate(n.in0, dy);
        break;
      }
      case Op::kBroadcastCol: {
        accumulate(n.in0, g.rowwise().sum());
        break;
      }
      case Op::kBroadcastRow: {
        accumulate(n.in0, g.colwise().sum());
        break;
      }
      case Op::kConcatCols: {
        accumulate(n.in0, g.leftCols(n.split));
        accumulate(n.in1, g.rightCols(g.cols() - n.split));
        break;
      }
      case Op::kBatchNorm: {
        const Mat& xhat = n.saved_a;    // N x F
        const Mat& inv_std = n.saved_b;  // 1 x F
        const Mat& gamma = val(n.in1);   // 1 x F
        const auto N = static_cast<double>(xhat.rows());
        Mat dgamma = g.cwiseProduct(xhat).colwise().sum();
        Mat dbeta = g.colwise().sum();
        Mat dxhat = g.cwiseProduct(gamma.replicate(xhat.rows(), 1));
        Mat dx;
        if (n.flag) {  // train mode: batch statistics depend on x
          Mat sum_dxhat = dxhat.colwise().sum();                       // 1 x F
          Mat sum_dxhat_xhat = dxhat.cwiseProduct(xhat).colwise().sum();  // 1 x F
          dx = (N * dxhat - sum_dxhat.replicate(xhat.rows(), 1) -
                xhat.cwiseProduct(sum_dxhat_xhat.replicate(xhat.rows(), 1)))
                   .cwiseProduct(inv_std.replicate(xhat.rows(), 1)) /
               N;
        } else {  // eval mode: running statistics are constants
          dx = dxhat.cwiseProduct(inv_std.replicate(xhat.rows(), 1));
        }
        accumulate(n.in0, dx);
        accumulate(n.in1, dgamma);
        accumulate(n.in2, dbeta);
        break;
      }
      case Op::kMaskedCe: {
        accumulate(n.in0, g(0, 0) * n.saved_a);
        break;
      }
      case Op::kSum: {
        const Mat& x = val(n.in0);
        accumulate(n.in0, Mat::Constant(x.rows(), x.cols(), g(0, 0)));
        break;
      }
    }
  }
}

// ---- recorded operations ----------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_same_tape("matmul", a, b);
  if (a.cols() != b.rows())
    throw DimensionError("matmul: " + shape_of(a.value()) + " * " + shape_of(b.value()));
  Tape::Node n;
  n.op = Tape::Op::kMatMul;
  n.in0 = a.id;
  n.in1 = b.id;
  n.value = a.value() * b.value();
  return Tensor{a.tape, a.tape->push(std::move(n))};
}

Tensor spmm(const SparseCsr& s, const Tensor& d) {
  if (d.tape == nullptr) throw ArgumentError("spmm: dense operand has no tape");
  Tape::Node n;
  n.op = Tape::Op::kSpmm;
  n.in0 = d.id;
  n.sp = &s;
  n.value = s.multiply(d.value());  // checks s.cols == d.rows
  return Tensor{d.tape, d.tape->push(std::move(n))};
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_tape("add", a, b);
  require_same_shape("add", a, b);
  Tape::Node n;
  n.op = Tape::Op::kAdd;
  n.in0 = a.id;
  n.in1 = b.id;
  n.value = a.value() + b.value();
  return Tensor{a.tape, a.tape->push(std::move(n))};
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_tape("sub", a, b);
  require_same_shape("sub", a, b);
  Tape::Node n;
  n.op = Tape::Op::kSub;
  n.in0 = a.id;
  n.in1 = b.id;
  n.value = a.value() - b.value();
  return Tensor{a.tape, a.tape->push(std::move(n))};
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_tape("hadamard", a, b);
  require_same_shape("hadamard", a, b);
  Tape::Node n;
  n.op = Tape::Op::kHadamard;
  n.in0 = a.id;
  n.in1 = b.id;
  n.value = a.value().cwiseProduct(b.value());
  return Tensor{a.tape, a.tape->push(std::move(n))};
}

Tensor scale(const Tensor& a, double c) {
  Tape::Node n;
  n.op = Tape::Op::kScale;
  n.in0 = a.id;
  n.scalar = c;
  n.value = c * a.value();
  return Tensor{a.tape, a.tape->push(std::move(n))};
}

Tensor relu(const Tensor& a) {
  Tape::Node n;
  n.op = Tape::Op::kRelu;
  n.in0 = a.id;
  n.value = a.value().cwiseMax(0.0);
  return Tensor{a.tape, a.tape->push(std::move(n))};
}

Tensor leaky_relu(const Tensor& a, double slope) {
  Tape::Node n;
  n.op = Tape::Op::kLeakyRelu;
  n.in0 = a.id;
  n.scalar = slope;
  n.value = a.value().cwiseMax(slope * a.value());
  return Tensor{a.tape, a.tape->push(std::move(n))};
}

Tensor sigmoid(const Tensor& a) {
  Tape::Node n;
  n.op = Tape::Op::kSigmoid;
  n.in0 = a.id;
  n.value = a.value().unaryExpr(&stable_sigmoid);
  return Tensor{a.tape, a.tape->push(std::move(n))};
}

Tensor broadcast_col(const Tensor& v, int width) {
  if (v.cols() != 1)
    throw DimensionError("broadcast_col: expected a column, got " + shape_of(v.value()));
  if (width <= 0) throw ArgumentError("broadcast_col: width must be positive");
  Tape::Node n;
  n.op = Tape::Op::kBroadcastCol;
  n.in0 = v.id;
  n.value = v.value().replicate(1, width);
  return Tensor{v.tape, v.tape->push(std::move(n))};
}

Tensor broadcast_row(const Tensor& v, int height) {
  if (v.rows() != 1)
    throw DimensionError("broadcast_row: expected a row, got " + shape_of(v.value()));
  if (height <= 0) throw ArgumentError("broadcast_row: height must be positive");
  Tape::Node n;
  n.op = Tape::Op::kBroadcastRow;
  n.in0 = v.id;
  n.value = v.value().replicate(height, 1);
  return Tensor{v.tape, v.tape->push(std::move(n))};
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  require_same_tape("concat_cols", a, b);
  if (a.rows() != b.rows())
    throw DimensionError("concat_cols: " + shape_of(a.value()) + " vs " + shape_of(b.value()));
  Tape::Node n;
  n.op = Tape::Op::kConcatCols;
  n.in0 = a.id;
  n.in1 = b.id;
  n.split = a.cols();
  n.value.resize(a.rows(), a.cols() + b.cols());
  n.value << a.value(), b.value();
  return Tensor{a.tape, a.tape->push(std::move(n))};
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormState& state, Mode mode) {
  require_same_tape("batch_norm", x, gamma);
  require_same_tape("batch_norm", x, beta);
  const int f = x.cols();
  if (x.rows() < 1) throw ArgumentError("batch_norm: input has no rows");
  if (gamma.rows() != 1 || gamma.cols() != f || beta.rows() != 1 || beta.cols() != f)
    throw DimensionError("batch_norm: gamma/beta must be 1x" + std::to_string(f) + ", got " +
                         shape_of(gamma.value()) + " and " + shape_of(beta.value()));
  if (state.gamma.cols() != f)
    throw DimensionError("batch_norm: state tracks " + std::to_string(state.gamma.cols()) +
                         " features, input has " + std::to_string(f));

  const Mat& xv = x.value();
  const auto rows = static_cast<double>(xv.rows());
  Mat mean, inv_std;
  if (mode == Mode::kTrain) {
    mean = xv.colwise().mean();
    Mat centered = xv - mean.replicate(xv.rows(), 1);
    Mat var = centered.cwiseProduct(centered).colwise().sum() / rows;  // biased
    inv_std = (var.array() + state.eps).rsqrt().matrix();
    Mat var_unbiased = xv.rows() > 1 ? Mat(var * rows / (rows - 1.0)) : var;
    state.running_mean = (1.0 - state.momentum) * state.running_mean + state.momentum * mean;
    state.running_var = (1.0 - state.momentum) * state.running_var + state.momentum * var_unbiased;
  } else {
    mean = state.running_mean;
    inv_std = (state.running_var.array() + state.eps).rsqrt().matrix();
  }

  Tape::Node n;
  n.op = Tape::Op::kBatchNorm;
  n.in0 = x.id;
  n.in1 = gamma.id;
  n.in2 = beta.id;
  n.flag = (mode == Mode::kTrain);
  n.saved_a = (xv - mean.replicate(xv.rows(), 1)).cwiseProduct(inv_std.replicate(xv.rows(), 1));
  n.saved_b = inv_std;
  n.value = n.saved_a.cwiseProduct(gamma.value().replicate(xv.rows(), 1)) +
            beta.value().replicate(xv.rows(), 1);
  return Tensor{x.tape, x.tape->push(std::move(n))};
}

Tensor masked_softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels,
                                    const std::vector<int>& mask) {
  const Mat& z = logits.value();
  const int rows = static_cast<int>(z.rows());
  const int classes = static_cast<int>(z.cols());
  if (static_cast<int>(labels.size()) != rows)
    throw ArgumentError("masked_softmax_cross_entropy: " + std::to_string(labels.size()) +
                        " labels for " + std::to_string(rows) + " rows");
  if (mask.empty()) throw ArgumentError("masked_softmax_cross_entropy: empty mask");
  for (int lab : labels)
    if (lab < 0 || lab >= classes)
      throw DataError("masked_softmax_cross_entropy: label " + std::to_string(lab) +
                      " outside [0, " + std::to_string(classes) + ")");
  for (int i : mask)
    if (i < 0 || i >= rows)
      throw ArgumentError("masked_softmax_cross_entropy: mask index " + std::to_string(i) +
                          " outside [0, " + std::to_string(rows) + ")");

  const auto m = static_cast<double>(mask.size());
  Mat dlogits = Mat::Zero(rows, classes);
  double loss = 0.0;
  for (int i : mask) {
    const double rowmax = z.row(i).maxCoeff();
    Eigen::RowVectorXd shifted = z.row(i).array() - rowmax;
    Eigen::RowVectorXd ex = shifted.array().exp();
    const double denom = ex.sum();
    loss += std::log(denom) - shifted(labels[static_cast<std::size_t>(i)]);
    dlogits.row(i) = ex / denom;
    dlogits(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
  }
  dlogits /= m;

  Tape::Node n;
  n.op = Tape::Op::kMaskedCe;
  n.in0 = logits.id;
  n.saved_a = std::move(dlogits);
  n.value = Mat::Constant(1, 1, loss / m);
  return Tensor{logits.tape, logits.tape->push(std::move(n))};
}

Tensor sum(const Tensor& a) {
  Tape::Node n;
  n.op = Tape::Op::kSum;
  n.in0 = a.id;
  n.value = Mat::Constant(1, 1, a.value().sum());
  return Tensor{a.tape, a.tape->push(std::move(n))};
}

}  // namespace nosaf
