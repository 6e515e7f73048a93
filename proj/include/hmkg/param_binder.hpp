#pragma once

#include "hmkg/autodiff.hpp"

#include <unordered_map>

namespace hmkg {

// Lazily lifts parameter matrices onto a tape. In training mode each matrix
// becomes a gradient-tracked variable; otherwise a constant.
class ParamBinder {
 public:
  ParamBinder(ad::Tape& tape, bool track_gradients) : tape_(tape), track_(track_gradients) {}

  ad::Var operator()(const ad::Matrix& param) {
    auto it = bound_.find(&param);
    if (it != bound_.end()) return it->second;
    ad::Var v = track_ ? tape_.variable(param) : tape_.constant(param);
    bound_.emplace(&param, v);
    return v;
  }

  // Gradient for a bound parameter after backward(); zero if never bound.
  ad::Matrix grad(const ad::Matrix& param) const {
    auto it = bound_.find(&param);
    if (it == bound_.end()) return ad::Matrix::Zero(param.rows(), param.cols());
    return it->second.grad();
  }

  ad::Tape& tape() { return tape_; }

 private:
  ad::Tape& tape_;
  bool track_;
  std::unordered_map<const ad::Matrix*, ad::Var> bound_;
};

}  // namespace hmkg
