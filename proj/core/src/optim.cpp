#include "exnet/optim.hpp"

#include <cmath>

#include "exnet/error.hpp"

namespace exnet {

template <typename T>
void sgdm_step(std::span<const ParamRef<T>> params, std::span<Tensor<T>> velocities, double lr, double momentum) {
  if (params.size() != velocities.size()) {
    throw StateError("optimizer holds " + std::to_string(velocities.size()) + " velocity tensors for " +
                     std::to_string(params.size()) + " parameters");
  }
  const T mu = static_cast<T>(momentum);
  const T step = static_cast<T>(lr);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T>& w = *params[i].value;
    const Tensor<T>& g = *params[i].grad;
    Tensor<T>& v = velocities[i];
    if (v.shape() != w.shape() || g.shape() != w.shape()) {
      throw StateError("optimizer state for " + params[i].name + " has shape " + shape_str(v.shape()) +
                       ", parameter has " + shape_str(w.shape()));
    }
    T* wp = w.data();
    T* vp = v.data();
    const T* gp = g.data();
    for (std::size_t k = 0; k < w.size(); ++k) {
      vp[k] = mu * vp[k] + gp[k];
      wp[k] = wp[k] - step * vp[k];
    }
  }
}

template <typename T>
SgdMomentum<T>::SgdMomentum(double learning_rate, double momentum) : lr_(learning_rate), mu_(momentum) {
  if (!(std::isfinite(lr_) && lr_ >= 0.0)) throw ConfigError("learning rate must be finite and >= 0");
  if (!(mu_ >= 0.0 && mu_ < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
}

template <typename T>
void SgdMomentum<T>::step(std::span<const ParamRef<T>> params) {
  if (velocity_.empty()) {
    velocity_.reserve(params.size());
    for (const auto& p : params) velocity_.push_back(Tensor<T>::zeros_like(*p.value));
  }
  sgdm_step<T>(params, velocity_, lr_, mu_);
}

template void sgdm_step<float>(std::span<const ParamRef<float>>, std::span<Tensor<float>>, double, double);
template void sgdm_step<double>(std::span<const ParamRef<double>>, std::span<Tensor<double>>, double, double);
template class SgdMomentum<float>;
template class SgdMomentum<double>;

}  // namespace exnet
