#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "oracles.hpp"

using namespace ddfusion;

namespace {

ModelConfig cfg_half_meter() { return {0.5, 1.0 / 60.0}; }

StateVector make(double x, double y, double psi, double wr, double wl, double rr, double rl,
                 double b) {
  StateVector s;
  s.x = x;
  s.y = y;
  s.psi = psi;
  s.omega_r = wr;
  s.omega_l = wl;
  s.radius_r = rr;
  s.radius_l = rl;
  s.bias = b;
  return s;
}

}  // namespace

TEST(StateModel, ZeroWheelSpeedsIsFixedPoint) {
  const StateVector s = make(0, 0, 0, 0, 0, 0.1, 0.1, 0);
  EXPECT_EQ(predict_state(s, cfg_half_meter()), s);
}

TEST(StateModel, StraightStepAdvancesX) {
  const StateVector out = predict_state(make(0, 0, 0, 10, 10, 0.1, 0.1, 0), cfg_half_meter());
  EXPECT_NEAR(out.x, 1.0 / 60.0, 1e-15);
  EXPECT_EQ(out.y, 0.0);
  EXPECT_EQ(out.psi, 0.0);
  EXPECT_EQ(out.omega_r, 10.0);
  EXPECT_EQ(out.omega_l, 10.0);
}

TEST(StateModel, PureRotationStep) {
  const StateVector out = predict_state(make(0, 0, 0, 10, -10, 0.1, 0.1, 0), cfg_half_meter());
  EXPECT_EQ(out.x, 0.0);
  EXPECT_EQ(out.y, 0.0);
  EXPECT_NEAR(out.psi, 4.0 / 60.0, 1e-15);
}

TEST(StateModel, HeadingIsNotWrappedInState) {
  StateVector s = make(0, 0, 3.1, 10, -10, 0.1, 0.1, 0);
  for (int i = 0; i < 10; ++i) s = predict_state(s, cfg_half_meter());
  EXPECT_GT(s.psi, std::numbers::pi);
}

TEST(StateModel, InputIsNotMutated) {
  const StateVector s = make(1, 2, 0.3, 4, 5, 0.1, 0.11, 0.01);
  const StateVector copy = s;
  (void)predict_state(s, cfg_half_meter());
  EXPECT_EQ(s, copy);
}

TEST(StateModel, JacobianAtRestHasNoHeadingCoupling) {
  const Matrix8 a = state_jacobian(make(3, -1, 0.7, 0, 0, 0.1, 0.1, 0), cfg_half_meter());
  EXPECT_EQ(a(kX, kPsi), 0.0);
  EXPECT_EQ(a(kY, kPsi), 0.0);
}

TEST(StateModel, JacobianHandValue) {
  const Matrix8 a = state_jacobian(make(0, 0, 0, 10, 10, 0.1, 0.1, 0), cfg_half_meter());
  EXPECT_NEAR(a(kX, kOmegaR), 0.05 / 60.0, 1e-18);
}

TEST(StateModel, JacobianStructure) {
  std::mt19937_64 rng(7);
  for (int n = 0; n < 100; ++n) {
    const Matrix8 a = state_jacobian(oracle::random_state(rng), cfg_half_meter());
    for (int r = kOmegaR; r < kStateSize; ++r)
      for (int c = 0; c < kStateSize; ++c) EXPECT_EQ(a(r, c), r == c ? 1.0 : 0.0);
    for (int r = 0; r < kStateSize; ++r)
      if (r != kX && r != kY && r != kPsi) {
        EXPECT_EQ(a(r, kPsi), 0.0);
      }
  }
}

TEST(StateModelProperty, StaticStatesAreBitIdentical) {
  std::mt19937_64 rng(11);
  for (int n = 0; n < 1000; ++n) {
    const StateVector s = oracle::random_state(rng);
    const StateVector out = predict_state(s, cfg_half_meter());
    EXPECT_EQ(out.omega_r, s.omega_r);
    EXPECT_EQ(out.omega_l, s.omega_l);
    EXPECT_EQ(out.radius_r, s.radius_r);
    EXPECT_EQ(out.radius_l, s.radius_l);
    EXPECT_EQ(out.bias, s.bias);
  }
}

TEST(StateModelProperty, TranslationCommutes) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> shift(-10.0, 10.0);
  for (int n = 0; n < 1000; ++n) {
    const StateVector s = oracle::random_state(rng);
    const double dx = shift(rng), dy = shift(rng);
    StateVector moved = s;
    moved.x += dx;
    moved.y += dy;
    const StateVector a = predict_state(s, cfg_half_meter());
    const StateVector b = predict_state(moved, cfg_half_meter());
    EXPECT_NEAR(b.x - dx, a.x, 1e-12);
    EXPECT_NEAR(b.y - dy, a.y, 1e-12);
    EXPECT_EQ(b.psi, a.psi);
  }
}

TEST(StateModelProperty, RotationEquivariance) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> ang(-std::numbers::pi, std::numbers::pi);
  for (int n = 0; n < 1000; ++n) {
    const StateVector s = oracle::random_state(rng);
    const double th = ang(rng);
    const RigidTransform2D rot{th, 0.0, 0.0};
    StateVector r = s;
    const Eigen::Vector2d p = apply_transform(rot, Eigen::Vector2d(s.x, s.y));
    r.x = p.x();
    r.y = p.y();
    r.psi = s.psi + th;
    const StateVector a = predict_state(s, cfg_half_meter());
    const StateVector b = predict_state(r, cfg_half_meter());
    const Eigen::Vector2d pa = apply_transform(rot, Eigen::Vector2d(a.x, a.y));
    EXPECT_NEAR(b.x, pa.x(), 1e-10);
    EXPECT_NEAR(b.y, pa.y(), 1e-10);
    EXPECT_NEAR(b.psi, a.psi + th, 1e-12);
  }
}

TEST(StateModelOracle, JacobianMatchesFiniteDifferences) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> track(0.2, 1.0);
  double worst = 0.0;
  for (int n = 0; n < 1000; ++n) {
    const StateVector s = oracle::random_state(rng);
    const ModelConfig cfg{track(rng), 1.0 / 60.0};
    const auto f = [&](const StateVector& x) -> Eigen::VectorXd {
      return predict_state(x, cfg).to_vector();
    };
    worst = std::max(worst, oracle::relative_error(state_jacobian(s, cfg),
                                                   oracle::finite_difference(f, s)));
  }
  EXPECT_LT(worst, 1e-6);
}

TEST(StateModel, WrapAngleRange) {
  EXPECT_EQ(wrap_angle(std::numbers::pi), std::numbers::pi);
  EXPECT_EQ(wrap_angle(-std::numbers::pi), std::numbers::pi);
  EXPECT_NEAR(wrap_angle(3.1 - (-3.1)), 6.2 - 2.0 * std::numbers::pi, 1e-15);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> any(-100.0, 100.0);
  for (int n = 0; n < 1000; ++n) {
    const double w = wrap_angle(any(rng));
    EXPECT_GT(w, -std::numbers::pi);
    EXPECT_LE(w, std::numbers::pi);
  }
}

TEST(StateModel, ConfigValidation) {
  EXPECT_THROW((ModelConfig{0.0, 0.01}.validate()), ConfigError);
  EXPECT_THROW((ModelConfig{0.5, -1.0}.validate()), ConfigError);
  EXPECT_NO_THROW((ModelConfig{0.5, 0.01}.validate()));
  StateVector s;
  s.radius_l = 0.0;
  EXPECT_FALSE(s.is_valid());
}
