#pragma once

#include <vector>

#include "nosaf/sparse.hpp"

namespace nosaf {

struct AdamConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 5e-4;  // L2, folded into the gradient: g += wd * theta
};

// Adam with bias correction over a fixed, ordered parameter list. The list
// (count and shapes) is locked in by the first step() call.
class Adam {
 public:
  explicit Adam(const AdamConfig& cfg) : cfg_(cfg) {}

  // params[i] is updated in place using grads[i]. The step counter advances
  // once per call (full-batch training: one step per epoch).
  void step(const std::vector<Mat*>& params, const std::vector<Mat>& grads);

  long steps_taken() const { return t_; }

 private:
  struct Slot {
    Mat m;
    Mat v;
  };

  AdamConfig cfg_;
  long t_ = 0;
  std::vector<Slot> slots_;
};

}  // namespace nosaf
