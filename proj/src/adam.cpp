#include "nosaf/adam.hpp"

#include <cmath>
#include <string>

#include "nosaf/errors.hpp"

namespace nosaf {

void Adam::step(const std::vector<Mat*>& params, const std::vector<Mat>& grads) {
  if (params.size() != grads.size())
    throw ArgumentError("Adam::step: " + std::to_string(params.size()) + " params vs " +
                        std::to_string(grads.size()) + " grads");
  if (slots_.empty()) {
    slots_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      slots_[i].m = Mat::Zero(params[i]->rows(), params[i]->cols());
      slots_[i].v = Mat::Zero(params[i]->rows(), params[i]->cols());
    }
  } else if (slots_.size() != params.size()) {
    throw ArgumentError("Adam::step: parameter list changed size");
  }

  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Mat& p = *params[i];
    if (grads[i].rows() != p.rows() || grads[i].cols() != p.cols())
      throw DimensionError("Adam::step: grad " + std::to_string(grads[i].rows()) + "x" +
                           std::to_string(grads[i].cols()) + " vs param " +
                           std::to_string(p.rows()) + "x" + std::to_string(p.cols()));
    Mat g = grads[i] + cfg_.weight_decay * p;
    Slot& s = slots_[i];
    s.m = cfg_.beta1 * s.m + (1.0 - cfg_.beta1) * g;
    s.v = cfg_.beta2 * s.v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    Mat m_hat = s.m / bc1;
    Mat v_hat = s.v / bc2;
    p.array() -= cfg_.lr * m_hat.array() / (v_hat.array().sqrt() + cfg_.eps);
  }
}

}  // namespace nosaf
