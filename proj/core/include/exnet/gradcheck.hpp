#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "exnet/model.hpp"

namespace exnet {

using ConvFactory = std::function<std::unique_ptr<Conv2d<double>>(std::string name, std::size_t in_channels,
                                                                  std::size_t out_channels, std::size_t kernel)>;

struct GradCheckOptions {
  double tolerance = 1e-4;
  std::uint64_t seed = 0;
  std::size_t probes = 20;  // per checked tensor
  double step = 1e-5;
  std::size_t batch = 8;  // whole-model probe batch
  /// Builds the conv layer of the standalone conv check; default Conv2d.
  ConvFactory conv_factory;
};

struct LayerCheck {
  std::string layer;
  double max_relative_error = 0.0;
  std::size_t probes = 0;
  std::size_t redrawn = 0;  // probes discarded for crossing a kink
  bool passed = false;
};

struct GradCheckReport {
  std::vector<LayerCheck> entries;
  double tolerance = 0.0;

  [[nodiscard]] bool passed() const;
};

/// |a - n| / max(|a|, |n|, 1e-8).
double relative_error(double analytic, double numeric);

/// Central-difference checks of conv, batchnorm, relu, maxpool, linear,
/// dropout (frozen mask) and softmax cross-entropy in isolation, then of the
/// whole network built from `spec` (typically ModelSpec::shrunken()). Probes
/// whose perturbation changes a ReLU sign or pooling argmax are redrawn.
GradCheckReport grad_check(const ModelSpec& spec, const GradCheckOptions& options = {});

std::string format_gradcheck(const GradCheckReport& report);

}  // namespace exnet
