#pragma once

#include <span>
#include <vector>

#include "exnet/nn.hpp"

namespace exnet {

/// One momentum step over every tensor: v <- mu*v + g, then w <- w - lr*v.
/// Throws StateError unless velocities and parameters pair up by shape.
template <typename T>
void sgdm_step(std::span<const ParamRef<T>> params, std::span<Tensor<T>> velocities, double lr, double momentum);

/// Stochastic gradient descent with heavy-ball momentum. Velocities start at
/// zero and are bound to the parameter list seen by the first step.
template <typename T>
class SgdMomentum {
 public:
  /// Throws ConfigError unless lr >= 0 and 0 <= momentum < 1.
  SgdMomentum(double learning_rate, double momentum);

  void step(std::span<const ParamRef<T>> params);

  [[nodiscard]] double learning_rate() const noexcept { return lr_; }
  [[nodiscard]] double momentum() const noexcept { return mu_; }
  [[nodiscard]] const std::vector<Tensor<T>>& velocities() const noexcept { return velocity_; }

 private:
  double lr_;
  double mu_;
  std::vector<Tensor<T>> velocity_;
};

}  // namespace exnet
