#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "hjid/autodiff.hpp"

namespace hjid {

// Lazily lifts parameter matrices onto a tape, one Var per matrix. With
// `trainable` false every parameter enters as a constant (evaluation).
class Binding {
 public:
  Binding(Tape& tape, bool trainable) : tape_(tape), trainable_(trainable) {}

  Var operator()(const Matrix& param) {
    auto it = vars_.find(&param);
    if (it != vars_.end()) return it->second;
    Var v = trainable_ ? tape_.variable(param) : tape_.constant(param);
    vars_.emplace(&param, v);
    return v;
  }

  // Gradient of a bound parameter after Tape::backward; zeros if the
  // parameter never entered the graph.
  Matrix gradient(const Matrix& param) const {
    auto it = vars_.find(&param);
    if (it == vars_.end() || it->second.grad().size() == 0)
      return Matrix::Zero(param.rows(), param.cols());
    return it->second.grad();
  }

  Tape& tape() { return tape_; }
  bool trainable() const { return trainable_; }

 private:
  Tape& tape_;
  bool trainable_;
  std::unordered_map<const Matrix*, Var> vars_;
};

struct NamedParam {
  std::string name;
  Matrix* value;
};

}  // namespace hjid
