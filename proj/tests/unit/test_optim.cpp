#include <cmath>

#include "doctest.h"
#include "exnet/error.hpp"
#include "exnet/optim.hpp"

using namespace exnet;

namespace {

struct Param {
  Tensor<double> value;
  Tensor<double> grad;
  std::vector<ParamRef<double>> refs() { return {{"p", &value, &grad}}; }
};

}  // namespace

TEST_CASE("zero momentum is plain SGD") {
  Param p{Tensor<double>({3}, std::vector<double>{1, 2, 3}), Tensor<double>({3}, std::vector<double>{0.5, -1, 2})};
  SgdMomentum<double> opt(0.1, 0.0);
  opt.step(p.refs());
  CHECK(p.value[0] == doctest::Approx(0.95));
  CHECK(p.value[1] == doctest::Approx(2.1));
  CHECK(p.value[2] == doctest::Approx(2.8));
}

TEST_CASE("constant gradient: velocity follows the geometric series") {
  // v_t = g * (1 - mu^t) / (1 - mu), so the limit is 10 g at mu = 0.9.
  Param p{Tensor<double>({1}, 0.0), Tensor<double>({1}, 1.0)};
  SgdMomentum<double> opt(0.01, 0.9);
  double w = 0.0;
  for (int t = 1; t <= 200; ++t) {
    opt.step(p.refs());
    const double v = (1.0 - std::pow(0.9, t)) / 0.1;
    w -= 0.01 * v;
    CHECK(opt.velocities()[0][0] == doctest::Approx(v).epsilon(1e-12));
    CHECK(p.value[0] == doctest::Approx(w).epsilon(1e-10));
  }
  CHECK(opt.velocities()[0][0] == doctest::Approx(10.0).epsilon(1e-8));
}

TEST_CASE("zero gradients decay the velocity and keep parameters otherwise unchanged") {
  Param p{Tensor<double>({2}, 1.0), Tensor<double>({2}, 1.0)};
  SgdMomentum<double> opt(0.5, 0.9);
  opt.step(p.refs());
  const double after_first = p.value[0];
  p.grad.fill(0.0);
  opt.step(p.refs());
  CHECK(opt.velocities()[0][0] == doctest::Approx(0.9));
  CHECK(p.value[0] == doctest::Approx(after_first - 0.5 * 0.9));
}

TEST_CASE("zero learning rate leaves parameters fixed") {
  Param p{Tensor<double>({4}, std::vector<double>{1, -2, 3, -4}), Tensor<double>({4}, 123.0)};
  const auto before = p.value;
  SgdMomentum<double> opt(0.0, 0.9);
  for (int i = 0; i < 5; ++i) opt.step(p.refs());
  CHECK(p.value == before);
}

TEST_CASE("state mismatches and bad hyperparameters") {
  Param p{Tensor<double>({2}, 0.0), Tensor<double>({2}, 0.0)};
  std::vector<Tensor<double>> v = {Tensor<double>({3}, 0.0)};
  CHECK_THROWS_AS(sgdm_step<double>(p.refs(), v, 0.1, 0.9), StateError);
  std::vector<Tensor<double>> none;
  CHECK_THROWS_AS(sgdm_step<double>(p.refs(), none, 0.1, 0.9), StateError);

  SgdMomentum<double> opt(0.1, 0.9);
  opt.step(p.refs());
  Param q{Tensor<double>({5}, 0.0), Tensor<double>({5}, 0.0)};
  CHECK_THROWS_AS(opt.step(q.refs()), StateError);

  CHECK_THROWS_AS(SgdMomentum<double>(-0.1, 0.9), ConfigError);
  CHECK_THROWS_AS(SgdMomentum<double>(0.1, 1.0), ConfigError);
}
