#include "minco/infotheory.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace minco::info;

namespace {

// Second implementation: I = H(s) + H(o) - H(s, o).
double mi_by_entropies(const DiscreteJoint& j) {
  const auto h = [](const std::vector<double>& p) {
    double out = 0.0;
    for (double v : p)
      if (v > 0) out -= v * std::log(v);
    return out;
  };
  return h(j.marginal_s()) + h(j.marginal_o()) - h(j.table().data());
}

DiscreteJoint identity_joint(std::size_t m) {
  Table t(m, m);
  for (std::size_t i = 0; i < m; ++i) t(i, i) = 1.0 / static_cast<double>(m);
  return DiscreteJoint(t);
}

DiscreteJoint product_joint(const std::vector<double>& ps, const std::vector<double>& po) {
  Table t(ps.size(), po.size());
  for (std::size_t s = 0; s < ps.size(); ++s)
    for (std::size_t o = 0; o < po.size(); ++o) t(s, o) = ps[s] * po[o];
  return DiscreteJoint(t);
}

}  // namespace

TEST(MutualInformation, IndependentIsZero) {
  const auto j = product_joint({0.2, 0.3, 0.5}, {0.6, 0.4});
  EXPECT_NEAR(mutual_information(j), 0.0, 1e-15);
}

TEST(MutualInformation, PerfectCorrelationOnTwoSymbols) {
  EXPECT_NEAR(mutual_information(identity_joint(2)), 0.693147180559945, 1e-12);
}

TEST(MutualInformation, MatchesEntropyDecomposition) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    const auto j = random_joint(4, 4, rng, i % 2 ? 0.3 : 0.0);
    EXPECT_NEAR(mutual_information(j), mi_by_entropies(j), 1e-12);
  }
}

TEST(MutualInformation, BoundedByMarginalEntropies) {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<std::size_t> size(1, 8);
  for (int i = 0; i < 1000; ++i) {
    const auto j = random_joint(size(rng), size(rng), rng, 0.2);
    const double mi = mutual_information(j);
    EXPECT_GE(mi, 0.0);
    EXPECT_LE(mi, std::min(entropy(j.marginal_s()), entropy(j.marginal_o())) + 1e-12);
  }
}

TEST(DiscreteJoint, RejectsInvalidTables) {
  EXPECT_THROW(DiscreteJoint(Table(2, 2, 0.3)), std::invalid_argument);
  EXPECT_THROW(DiscreteJoint(Table(1, 2, std::vector<double>{1.5, -0.5})), std::invalid_argument);
  EXPECT_THROW(ConditionalModel(Table(2, 2, 0.4)), std::invalid_argument);
}

TEST(Prop1, TruePosteriorAttainsMi) {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 100; ++i) {
    const auto j = random_joint(5, 6, rng, 0.3);
    const auto r = prop1_gap(j, posterior_o_given_s(j));
    EXPECT_NEAR(r.lower_bound, r.mi, 1e-10);
  }
}

TEST(Prop1, MarginalModelGivesZero) {
  std::mt19937_64 rng(22);
  const auto j = random_joint(4, 3, rng);
  const auto po = j.marginal_o();
  Table q(4, 3);
  for (std::size_t s = 0; s < 4; ++s)
    for (std::size_t o = 0; o < 3; ++o) q(s, o) = po[o];
  const auto r = prop1_gap(j, ConditionalModel(q));
  EXPECT_NEAR(r.lower_bound, 0.0, 1e-12);
  EXPECT_LE(r.lower_bound, r.mi + 1e-12);
}

TEST(Prop1, RejectsModelWithMissingSupport) {
  const auto j = identity_joint(2);
  const ConditionalModel q(Table(2, 2, std::vector<double>{0.0, 1.0, 0.0, 1.0}));
  EXPECT_THROW(prop1_gap(j, q), std::invalid_argument);
}

TEST(Prop1, FuzzNeverExceedsMi) {
  std::mt19937_64 rng(23);
  std::uniform_int_distribution<std::size_t> size(1, 8);
  for (int i = 0; i < 1000; ++i) {
    const auto ns = size(rng), no = size(rng);
    const auto j = random_joint(ns, no, rng, 0.25);
    const auto r = prop1_gap(j, random_conditional(ns, no, rng));
    EXPECT_LE(r.lower_bound, r.mi + 1e-9);
  }
}

TEST(Prop2, ContextMarginalAttainsConditionalMi) {
  std::mt19937_64 rng(31);
  for (int i = 0; i < 100; ++i) {
    const auto cj = random_conditional_joint(3, 4, 5, rng);
    const auto r = prop2_gap(cj, context_marginals(cj));
    EXPECT_NEAR(r.upper_bound, r.cond_mi, 1e-10);
  }
}

TEST(Prop2, IndependentContextsHaveZeroMi) {
  std::mt19937_64 rng(32);
  std::vector<DiscreteJoint> joints{product_joint({0.5, 0.5}, {0.1, 0.9}),
                                    product_joint({0.3, 0.7}, {0.5, 0.5})};
  const ConditionalJoint cj({0.4, 0.6}, joints);
  const auto r = prop2_gap(cj, random_conditional(2, 2, rng));
  EXPECT_NEAR(r.cond_mi, 0.0, 1e-15);
  EXPECT_GE(r.upper_bound, 0.0);
}

TEST(Prop2, FuzzNeverBelowConditionalMi) {
  std::mt19937_64 rng(33);
  std::uniform_int_distribution<std::size_t> size(1, 8);
  std::uniform_int_distribution<std::size_t> ctx(1, 4);
  for (int i = 0; i < 1000; ++i) {
    const auto k = ctx(rng), ns = size(rng), no = size(rng);
    const auto cj = random_conditional_joint(k, ns, no, rng);
    const auto r = prop2_gap(cj, random_conditional(k, ns, rng));
    EXPECT_GE(r.upper_bound, r.cond_mi - 1e-9);
  }
}

TEST(InfoNce, IndependentJointGivesZeroBound) {
  std::mt19937_64 rng(41);
  const auto j = product_joint({0.25, 0.75}, {0.5, 0.2, 0.3});
  const auto r = infonce_bound_check(j, 8, 2000, rng);
  EXPECT_NEAR(r.mean_bound, 0.0, 1e-12);
  EXPECT_EQ(r.mi, 0.0);
}

TEST(InfoNce, IdentityJointStaysBelowLogM) {
  std::mt19937_64 rng(42);
  const auto j = identity_joint(16);
  const auto r = infonce_bound_check(j, 8, 100000, rng);
  EXPECT_NEAR(r.mi, std::log(16.0), 1e-12);
  EXPECT_LE(r.mean_bound, r.mi + 3 * r.std_error);
  EXPECT_LE(r.mean_bound, std::log(8.0) + 1e-12);
}

TEST(InfoNce, BoundGrowsWithNegatives) {
  std::mt19937_64 rng(43);
  const auto j = identity_joint(64);
  double prev = -1.0;
  for (int n : {2, 8, 32}) {
    const auto r = infonce_bound_check(j, n, 20000, rng);
    EXPECT_GT(r.mean_bound, prev);
    prev = r.mean_bound;
  }
}

TEST(InfoNce, RejectsFewerThanTwoSamples) {
  std::mt19937_64 rng(44);
  EXPECT_THROW(infonce_bound_check(identity_joint(2), 1, 10, rng), std::invalid_argument);
}

TEST(BoundSuites, DefaultSeedsPass) {
  BoundsOptions o;
  o.trials = 200;
  o.infonce_joints = 20;
  o.infonce_trials = 4000;
  const auto r = run_bound_suites(o);
  EXPECT_EQ(r.prop1.violations, 0);
  EXPECT_EQ(r.prop2.violations, 0);
  EXPECT_EQ(r.infonce.violations, 0);
  EXPECT_TRUE(r.passed());
}
