#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace rhg;
using rhg::testing::reference_params;

namespace {

ChainParameters single_supplier_params() {
  ChainParameters p = reference_params();
  p.suppliers = {{1.0, 0.1, 40.0}};
  return p;
}

AgentAction action(std::initializer_list<double> orders, double price) {
  VectorXd o(static_cast<Eigen::Index>(orders.size()));
  Eigen::Index i = 0;
  for (double x : orders) o(i++) = x;
  return {o, price};
}

}  // namespace

TEST(Demand, ZeroPricesGiveBaseDemand) {
  const MarketParams m = reference_params().market;
  EXPECT_DOUBLE_EQ(demand(m, 0, Eigen::Vector3d(0, 0, 0), 10.0), 10.0);
}

TEST(Demand, HandEvaluatedExamples) {
  const MarketParams m = reference_params().market;
  EXPECT_NEAR(demand(m, 0, Eigen::Vector3d(2, 1, 1), 10.0), 9.2, 1e-12);
  EXPECT_NEAR(demand(m, 1, Eigen::Vector3d(1, 1, 1), 5.0), 4.8, 1e-12);
}

TEST(Demand, NotClippedAtZero) {
  const MarketParams m = reference_params().market;
  EXPECT_LT(demand(m, 0, Eigen::Vector3d(100, 0, 0), 10.0), 0.0);
}

TEST(Demand, RejectsWrongPriceCount) {
  const MarketParams m = reference_params().market;
  EXPECT_THROW(demand(m, 0, Eigen::Vector2d(1, 1), 10.0), DimensionError);
}

TEST(Demand, LinearInEachPrice) {
  const MarketParams m = reference_params().market;
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const VectorXd p = rhg::testing::random_vector(rng, 3, 0.0, 30.0);
    const double delta = rhg::testing::random_vector(rng, 1, -5.0, 5.0)(0);
    for (std::size_t v = 0; v < 3; ++v) {
      for (Eigen::Index j = 0; j < 3; ++j) {
        VectorXd q = p;
        q(j) += delta;
        const double expected = (static_cast<Eigen::Index>(v) == j ? -1.0 : 1.0) * m.beta(static_cast<Eigen::Index>(v), j) * delta;
        EXPECT_NEAR(demand(m, v, q, 10.0) - demand(m, v, p, 10.0), expected, 1e-12);
      }
    }
  }
}

TEST(WholesalePrice, Examples) {
  EXPECT_DOUBLE_EQ(wholesale_price({1.0, 0.1, 40.0}, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(wholesale_price({1.0, 0.1, 40.0}, 10.0), 2.0);
  EXPECT_NEAR(wholesale_price({1.5, 0.15, 40.0}, 4.0), 2.1, 1e-12);
}

TEST(StepInventory, Examples) {
  EXPECT_DOUBLE_EQ(step_inventory({1.0, 0.1, 25.0, 50.0}, {30.0, 0.0, 0.0}), 30.0);
  EXPECT_DOUBLE_EQ(step_inventory({0.9, 0.1, 25.0, 50.0}, {30.0, 5.0, 3.0}), 29.0);
  EXPECT_DOUBLE_EQ(step_inventory({0.5, 0.1, 25.0, 50.0}, {20.0, 10.0, 10.0}), 10.0);
}

TEST(StepInventory, ConservationWithoutSpoilage) {
  // Multiples of 1/8: every sum below is exactly representable.
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> eighths(0, 320);
  for (int i = 0; i < 100; ++i) {
    const AgentState s{eighths(rng) / 8.0, eighths(rng) / 8.0, eighths(rng) / 8.0};
    EXPECT_EQ(step_inventory({1.0, 0.1, 25.0, 50.0}, s) - s.xi, s.o_prev - s.d_prev);
  }
}

TEST(StageCost, OnTargetWithoutTradeIsZero) {
  const ChainParameters p = single_supplier_params();
  const std::vector<AgentAction> none(3, action({0.0}, 0.0));
  EXPECT_DOUBLE_EQ(stage_cost(p, 0, {25.0, 0.0, 0.0}, none, 123.0), 0.0);
}

TEST(StageCost, SafetyStockTerm) {
  const ChainParameters p = single_supplier_params();
  const std::vector<AgentAction> none(3, action({0.0}, 0.0));
  EXPECT_NEAR(stage_cost(p, 0, {30.0, 0.0, 0.0}, none, 10.0), 2.5, 1e-12);
}

TEST(StageCost, BothTerms) {
  const ChainParameters p = single_supplier_params();
  const std::vector<AgentAction> a{action({3.0}, 2.0), action({0.0}, 0.0), action({0.0}, 0.0)};
  EXPECT_NEAR(stage_cost(p, 0, {25.0, 0.0, 0.0}, a, 10.0), -13.3, 1e-12);
}

TEST(StageCost, NoTradeReducesToNonnegativePenalty) {
  const ChainParameters p = reference_params();
  const std::vector<AgentAction> none(3, action({0.0, 0.0}, 0.0));
  for (double xi : {0.0, 10.0, 25.0, 49.0}) {
    for (std::size_t v = 0; v < 3; ++v) {
      const double dev = xi - p.manufacturers[v].xi_safety;
      const double c = stage_cost(p, v, {xi, 0.0, 0.0}, none, 10.0);
      EXPECT_DOUBLE_EQ(c, p.manufacturers[v].gamma * dev * dev);
      EXPECT_GE(c, 0.0);
    }
  }
}

TEST(AgentLti, ReferencePattern) {
  const AgentLti lti = build_agent_lti(reference_params(), 0);
  Eigen::Matrix3d A;
  A << 0.9, 1, -1,
       0, 0, 0,
       0, 0, 0;
  EXPECT_EQ(lti.A, A);
  MatrixXd B11(3, 3);
  B11 << 0, 0, 0,
         1, 1, 0,
         0, 0, -0.7;
  EXPECT_EQ(lti.B_self, B11);
  EXPECT_EQ(lti.D, Eigen::Vector3d(0, 0, 1));
}

TEST(AgentLti, CrossBlockHasSinglePriceEntry) {
  const AgentLti lti = build_agent_lti(reference_params(), 0);
  MatrixXd B12 = MatrixXd::Zero(3, 3);
  B12(2, 2) = 0.3;
  EXPECT_EQ(lti.B(0, 1), B12);
  EXPECT_EQ(lti.B_cross[0], MatrixXd::Zero(3, 3));
}

TEST(AgentLti, SparsityPatternEntrywise) {
  const ChainParameters p = reference_params();
  for (std::size_t v = 0; v < 3; ++v) {
    const AgentLti lti = build_agent_lti(p, v);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) EXPECT_EQ(lti.A(r, c) != 0.0, r == 0) << "A(" << r << "," << c << ")";
    }
    for (std::size_t j = 0; j < 3; ++j) {
      const MatrixXd& B = lti.B(v, j);
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
          const bool order_entry = j == v && r == 1 && c < 2;
          const bool price_entry = r == 2 && c == 2;
          EXPECT_EQ(B(r, c) != 0.0, order_entry || price_entry) << "B(" << v << "," << j << ")(" << r << "," << c << ")";
        }
      }
      const double expected_price = j == v ? -p.market.beta(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(v))
                                           : p.market.beta(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(j));
      EXPECT_EQ(B(2, 2), expected_price);
    }
  }
}

TEST(AgentLti, RejectsBadIndex) { EXPECT_THROW(build_agent_lti(reference_params(), 3), DimensionError); }

TEST(GlobalLti, SingleAgentEqualsAgentSystem) {
  ChainParameters p = reference_params();
  p.market.beta = p.market.beta.topLeftCorner(1, 1).eval();
  p.manufacturers.resize(1);
  const GlobalLti g = build_global_lti(p);
  const AgentLti a = build_agent_lti(p, 0);
  EXPECT_EQ(g.A, MatrixXd(a.A));
  EXPECT_EQ(g.B, a.B_self);
  EXPECT_EQ(g.D, MatrixXd(a.D));
}

TEST(GlobalLti, ReferenceShapes) {
  const GlobalLti g = build_global_lti(reference_params());
  ASSERT_EQ(g.A.rows(), 9);
  ASSERT_EQ(g.A.cols(), 9);
  ASSERT_EQ(g.B.rows(), 9);
  ASSERT_EQ(g.B.cols(), 9);
  ASSERT_EQ(g.D.rows(), 9);
  ASSERT_EQ(g.D.cols(), 3);
  for (int r = 0; r < 9; ++r) {
    for (int c = 0; c < 9; ++c) {
      if (r / 3 != c / 3) {
        EXPECT_EQ(g.A(r, c), 0.0);
        // Off-diagonal agent blocks of B only touch price columns.
        if (c % 3 != 2) {
          EXPECT_EQ(g.B(r, c), 0.0);
        }
      }
    }
  }
  for (int v = 0; v < 3; ++v) EXPECT_EQ(g.D.middleRows(3 * v, 3).sum(), 1.0);
}

TEST(GlobalLti, BitwiseEqualToScalarMaps) {
  const ChainParameters p = reference_params();
  const GlobalLti g = build_global_lti(p);
  std::mt19937_64 rng(2024);
  std::vector<AgentState> states = unstack_states(rhg::testing::reference_x0());
  VectorXd x = rhg::testing::reference_x0();
  for (int t = 0; t < 50; ++t) {
    const VectorXd u = rhg::testing::random_vector(rng, 9, 0.0, 20.0);
    const VectorXd w = rhg::testing::random_vector(rng, 3, 5.0, 15.0);
    std::vector<AgentAction> actions;
    for (int v = 0; v < 3; ++v) actions.push_back(AgentAction::from(u.segment(3 * v, 3)));
    states = step_chain(p, states, actions, w);
    x = lti_step(g, x, u, w);
    const VectorXd xs = stack_states(states);
    for (Eigen::Index i = 0; i < 9; ++i) ASSERT_EQ(x(i), xs(i)) << "day " << t << " entry " << i;
  }
}

TEST(Validation, RejectsBadParameters) {
  ChainParameters p = reference_params();
  p.manufacturers[1].gamma = 0.0;
  EXPECT_THROW(validate(p), ParameterError);

  p = reference_params();
  p.market.beta = MatrixXd::Ones(2, 3);
  EXPECT_THROW(validate(p), DimensionError);

  p = reference_params();
  p.market.beta(1, 1) = 0.0;
  EXPECT_THROW(validate(p), ParameterError);

  p = reference_params();
  p.manufacturers[0].alpha = 1.5;
  EXPECT_THROW(validate(p), ParameterError);

  p = reference_params();
  p.horizon = 0;
  EXPECT_THROW(validate(p), ParameterError);
}

TEST(Validation, NegativeSlopeIsAcceptedByTypeButNotForSolving) {
  ChainParameters p = reference_params();
  p.suppliers[0].rho1 = -0.1;
  EXPECT_NO_THROW(validate(p));
  try {
    check_convexity(p);
    FAIL() << "expected a convexity error";
  } catch (const ParameterError& e) {
    EXPECT_NE(std::string(e.what()).find("convexity requirement"), std::string::npos);
  }
}
