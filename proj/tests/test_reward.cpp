#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace sensched;
using namespace sensched::testing;

namespace {

struct Case1 : ::testing::Test {
  NetworkModel model = case1_model();
  SteadyState steady = solve_steady_state(model);
  TildeMatrices t = tilde_matrices(model);

  Matrix one_step(int i) const {
    const int j = 1 - i;
    return t.A_tilde * steady.P[i] * t.A_tilde.transpose() +
           t.G_tilde * steady.P[j] * t.G_tilde.transpose() + model.Q[i];
  }
};

double rel_diff(const Matrix& a, const Matrix& b) {
  return linalg::max_abs_diff(a, b) / std::max(1.0, linalg::max_abs(b));
}

}  // namespace

TEST_F(Case1, UnitAgesApplyOneStep) {
  const auto idx = reconstruct_indices(model, steady, AgeState{{1, 1}});
  for (int i = 0; i < 2; ++i) EXPECT_LT(rel_diff(idx.P_k[i], one_step(i)), 1e-12);
  EXPECT_NEAR(idx.trace_sum, one_step(0).trace() + one_step(1).trace(), 1e-12);
}

TEST(Reward, UnitAgesApplyOneStepForAnyN) {
  std::mt19937_64 rng(4);
  for (int N : {1, 3, 5}) {
    auto m = random_decoupled_model(2, 2, N, rng);
    m.G = random_matrix(2, 2, rng, 0.3);
    m.mu = 0.2;
    const auto steady = solve_steady_state(m);
    const auto t = tilde_matrices(m);
    const auto idx = reconstruct_indices(m, steady, AgeState{std::vector<int>(N, 1)});
    for (int i = 0; i < N; ++i)
      EXPECT_LT(rel_diff(idx.P_k[i], propagate_bound(m, t, i, steady.P)), 1e-12);
  }
}

TEST_F(Case1, ClosedFormAgainstRecursionWithFrozenNeighbour) {
  // With node 2 reset at step k (age 0) node 1 sees P_2 on the whole interval.
  for (int gap = 0; gap <= 12; ++gap) {
    const auto idx = reconstruct_indices(model, steady, AgeState{{gap, 0}});
    EXPECT_LT(rel_diff(idx.P_k[0], hbar_node(model, steady.P, 0, gap)), 1e-9) << gap;
    EXPECT_LT(rel_diff(idx.P_k[1], steady.P[1]), 1e-12);
  }
}

TEST_F(Case1, ClosedFormThenJointPropagation) {
  for (int tau1 = 1; tau1 <= 10; ++tau1) {
    for (int tau2 = 1; tau2 <= tau1; ++tau2) {
      MatrixList Y{hbar_node(model, steady.P, 0, tau1 - tau2), steady.P[1]};
      for (int l = 0; l < tau2; ++l) {
        MatrixList next(2);
        for (int i = 0; i < 2; ++i) {
          const int j = 1 - i;
          next[i] = t.A_tilde * Y[i] * t.A_tilde.transpose() +
                    t.G_tilde * Y[j] * t.G_tilde.transpose() + model.Q[i];
        }
        Y = next;
      }
      const auto idx = reconstruct_indices(model, steady, AgeState{{tau1, tau2}});
      EXPECT_LT(rel_diff(idx.P_k[0], Y[0]), 1e-9);
      EXPECT_LT(rel_diff(idx.P_k[1], Y[1]), 1e-9);
    }
  }
}

TEST_F(Case1, RewardAtUnitAges) {
  const double expect = one_step(0).trace() + one_step(1).trace() + 20.0;
  EXPECT_NEAR(one_stage_reward(model, steady, AgeState{{1, 1}}, Action{{1, 0}}, 20.0, 1), expect,
              1e-12);
}

TEST_F(Case1, EqualCardinalityActionsCostTheSame) {
  const AgeState s{{7, 3}};
  EXPECT_EQ(one_stage_reward(model, steady, s, Action{{1, 0}}, 20.0, 1),
            one_stage_reward(model, steady, s, Action{{0, 1}}, 20.0, 1));
}

TEST_F(Case1, CardinalityMustEqualM) {
  EXPECT_THROW(one_stage_reward(model, steady, AgeState{{1, 1}}, Action{{1, 1}}, 20.0, 1),
               std::invalid_argument);
  EXPECT_THROW(one_stage_reward(model, steady, AgeState{{1, 1}}, Action{{0, 0}}, 20.0, 1),
               std::invalid_argument);
  IndexCache cache(model, steady);
  EXPECT_THROW(cache.reward(AgeState{{1, 1}}, Action{{1, 1}}, 20.0, 1), std::invalid_argument);
  EXPECT_THROW(reconstruct_indices(model, steady, AgeState{{1, 1, 1}}), std::invalid_argument);
}

TEST_F(Case1, MonotoneInEachAge) {
  const Action a{{1, 0}};
  EXPECT_LE(one_stage_reward(model, steady, AgeState{{1, 1}}, a, 20.0, 1),
            one_stage_reward(model, steady, AgeState{{2, 1}}, a, 20.0, 1));
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> age(1, 30);
  for (int t = 0; t < 500; ++t) {
    AgeState s{{age(rng), age(rng)}};
    AgeState up = s;
    const int i = t % 2;
    up.tau[i] += 1 + t % 4;
    const auto lo = reconstruct_indices(model, steady, s);
    const auto hi = reconstruct_indices(model, steady, up);
    for (int h = 0; h < 2; ++h) EXPECT_TRUE(psd_leq(lo.P_k[h], hi.P_k[h], 1e-8));
    EXPECT_LE(lo.trace_sum, hi.trace_sum);
  }
}

TEST_F(Case1, FloorAtUnitAges) {
  const double floor = reconstruct_indices(model, steady, AgeState{{1, 1}}).trace_sum;
  const double steady_sum = steady.P[0].trace() + steady.P[1].trace();
  for (int a = 1; a <= 20; ++a)
    for (int b = 1; b <= 20; ++b) {
      const double v = reconstruct_indices(model, steady, AgeState{{a, b}}).trace_sum;
      EXPECT_GE(v, floor - 1e-12);
      EXPECT_GE(v, steady_sum);
    }
}

TEST_F(Case1, MemoizedEqualsFresh) {
  IndexCache cache(model, steady);
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> age(1, 50);
  for (int t = 0; t < 300; ++t) {
    const AgeState s{{age(rng), age(rng)}};
    const double fresh = reconstruct_indices(model, steady, s).trace_sum;
    EXPECT_EQ(cache.at(s).trace_sum, fresh);
    EXPECT_EQ(cache.at(s).trace_sum, fresh);
  }
  EXPECT_LE(cache.size(), 300u);
  EXPECT_GT(cache.size(), 0u);
}
