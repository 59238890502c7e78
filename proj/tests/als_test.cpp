#include "tmrec/als.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace tmrec {
namespace {

// Dense brute-force loss over every (user, item) cell.
double dense_objective(const ImplicitFeedback& data, const LatentFactors& f, const ALSConfig& cfg) {
  double loss = 0.0;
  for (std::size_t u = 0; u < data.num_users(); ++u) {
    std::vector<double> counts(data.num_items(), 0.0);
    for (const auto& e : data.by_user(u)) counts[e.index] = e.count;
    for (std::size_t i = 0; i < data.num_items(); ++i) {
      double s = 0.0;
      for (Eigen::Index k = 0; k < f.user_factors.cols(); ++k) {
        s += f.user_factors(static_cast<Eigen::Index>(u), k) * f.item_factors(static_cast<Eigen::Index>(i), k);
      }
      const double p = counts[i] > 0 ? 1.0 : 0.0;
      const double c = 1.0 + cfg.confidence_alpha * counts[i];
      loss += c * (p - s) * (p - s);
    }
  }
  double reg = 0.0;
  for (Eigen::Index r = 0; r < f.user_factors.rows(); ++r)
    for (Eigen::Index k = 0; k < f.user_factors.cols(); ++k) reg += f.user_factors(r, k) * f.user_factors(r, k);
  for (Eigen::Index r = 0; r < f.item_factors.rows(); ++r)
    for (Eigen::Index k = 0; k < f.item_factors.cols(); ++k) reg += f.item_factors(r, k) * f.item_factors(r, k);
  return loss + cfg.regularization * reg;
}

std::string uid(std::size_t u) { return "u" + std::to_string(1000 + u); }
std::string iid(std::size_t i) { return "i" + std::to_string(1000 + i); }

ImplicitFeedback random_feedback(std::size_t users, std::size_t items, double density, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution hit(density);
  std::uniform_int_distribution<int> repeat(1, 3);
  std::vector<std::pair<std::string, std::string>> pairs;
  for (std::size_t u = 0; u < users; ++u) {
    pairs.emplace_back(uid(u), iid(u % items));  // every user and item appears
    for (std::size_t i = 0; i < items; ++i) {
      if (!hit(rng)) continue;
      for (int r = repeat(rng); r > 0; --r) pairs.emplace_back(uid(u), iid(i));
    }
  }
  for (std::size_t i = 0; i < items; ++i) pairs.emplace_back(uid(i % users), iid(i));
  return ImplicitFeedback::from_pairs(pairs);
}

TEST(Als, FeedbackIndexCountsRepeats) {
  const auto fb = ImplicitFeedback::from_pairs({{"b", "x"}, {"a", "x"}, {"b", "x"}, {"b", "y"}});
  ASSERT_EQ(fb.num_users(), 2u);
  ASSERT_EQ(fb.num_items(), 2u);
  EXPECT_EQ(fb.user_ids()[0], "a");
  ASSERT_EQ(fb.by_user(1).size(), 2u);
  EXPECT_EQ(fb.by_user(1)[0].count, 2.0);
  EXPECT_EQ(fb.by_item(0).size(), 2u);
  EXPECT_THROW(ImplicitFeedback::from_pairs({}), DataError);
}

TEST(Als, ObjectiveMatchesDenseSum) {
  const auto fb = random_feedback(25, 18, 0.15, 3);
  ALSConfig cfg;
  cfg.rank = 4;
  cfg.sweeps = 2;
  const auto f = fit_als(fb, cfg);
  const double dense = dense_objective(fb, f, cfg);
  EXPECT_NEAR(objective(fb, f, cfg), dense, 1e-9 * std::abs(dense));
}

TEST(Als, ZeroFactorsGiveConfidenceSum) {
  const auto fb = ImplicitFeedback::from_pairs({{"a", "x"}, {"a", "x"}, {"b", "y"}});
  ALSConfig cfg;
  cfg.rank = 3;
  LatentFactors f;
  f.user_factors = Eigen::MatrixXd::Zero(2, 3);
  f.item_factors = Eigen::MatrixXd::Zero(2, 3);
  EXPECT_DOUBLE_EQ(objective(fb, f, cfg), (1 + 40.0 * 2) + (1 + 40.0 * 1));
}

TEST(Als, RegularizationIsLinearInLambda) {
  const auto fb = random_feedback(10, 8, 0.3, 5);
  ALSConfig cfg;
  cfg.rank = 3;
  cfg.sweeps = 1;
  const auto f = fit_als(fb, cfg);
  auto doubled = cfg;
  doubled.regularization *= 2;
  const double reg = cfg.regularization * (f.user_factors.squaredNorm() + f.item_factors.squaredNorm());
  EXPECT_NEAR(objective(fb, f, doubled) - objective(fb, f, cfg), reg, 1e-9);
}

TEST(Als, ObjectiveDimensionMismatch) {
  const auto fb = ImplicitFeedback::from_pairs({{"a", "x"}});
  LatentFactors f;
  f.user_factors = Eigen::MatrixXd::Zero(2, 3);
  f.item_factors = Eigen::MatrixXd::Zero(1, 3);
  EXPECT_THROW(objective(fb, f, ALSConfig{}), DimensionError);
}

TEST(Als, SingleCellClosedForm) {
  const auto fb = ImplicitFeedback::from_pairs({{"a", "x"}});
  ALSConfig cfg;
  cfg.rank = 1;
  cfg.sweeps = 5;
  const auto f = fit_als(fb, cfg);
  const double u = f.user_factors(0, 0);
  const double v = f.item_factors(0, 0);
  EXPECT_GT(u * v, 0.0);
  // Items were solved last: v = c u / (c u^2 + lambda).
  const double c = 1.0 + cfg.confidence_alpha;
  EXPECT_NEAR(v, c * u / (c * u * u + cfg.regularization), 1e-12);
}

TEST(Als, ObjectiveNonIncreasingEverySweep) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto fb = random_feedback(60, 40, 0.1, seed);
    ALSConfig cfg;
    cfg.rank = 6;
    cfg.sweeps = 12;
    cfg.seed = seed;
    std::vector<double> trace;
    fit_als(fb, cfg, &trace);
    ASSERT_EQ(trace.size(), 13u);
    for (std::size_t t = 1; t < trace.size(); ++t) {
      EXPECT_LE(trace[t], trace[t - 1] * (1 + 1e-12)) << "sweep " << t;
    }
  }
}

TEST(Als, RankTwoBlocksRecovered) {
  // Two disjoint customer groups buying two disjoint item groups.
  std::vector<std::pair<std::string, std::string>> pairs;
  for (std::size_t u = 0; u < 20; ++u) {
    for (std::size_t i = 0; i < 15; ++i) {
      if ((u < 10) == (i < 7)) pairs.emplace_back(uid(u), iid(i));
    }
  }
  const auto fb = ImplicitFeedback::from_pairs(pairs);
  ALSConfig cfg;
  cfg.rank = 2;
  cfg.sweeps = 30;
  const auto f = fit_als(fb, cfg);
  double se = 0.0;
  for (const auto& [u, i] : pairs) {
    const double s = f.user_or_zero(u).dot(f.item_or_zero(i));
    se += (1.0 - s) * (1.0 - s);
  }
  EXPECT_LT(std::sqrt(se / static_cast<double>(pairs.size())), 0.05);
}

TEST(Als, SeedReproducible) {
  const auto fb = random_feedback(30, 20, 0.2, 9);
  ALSConfig cfg;
  cfg.rank = 5;
  cfg.sweeps = 3;
  cfg.seed = 77;
  const auto a = fit_als(fb, cfg);
  const auto b = fit_als(fb, cfg, nullptr, 3);
  EXPECT_TRUE(a.user_factors == b.user_factors);
  EXPECT_TRUE(a.item_factors == b.item_factors);
  cfg.seed = 78;
  const auto c = fit_als(fb, cfg);
  EXPECT_FALSE(a.user_factors == c.user_factors);
}

TEST(Als, SingleInteractionRowsStayFinite) {
  std::vector<std::pair<std::string, std::string>> pairs;
  for (std::size_t u = 0; u < 12; ++u) pairs.emplace_back(uid(u), iid(u));
  for (double lambda : {1e-9, 1e-3, 10.0}) {
    ALSConfig cfg;
    cfg.rank = 8;
    cfg.regularization = lambda;
    cfg.sweeps = 4;
    const auto f = fit_als(ImplicitFeedback::from_pairs(pairs), cfg);
    EXPECT_TRUE(f.user_factors.allFinite());
    EXPECT_TRUE(f.item_factors.allFinite());
  }
}

TEST(Als, ColdStartFallsBackToZero) {
  const auto f = fit_als(ImplicitFeedback::from_pairs({{"a", "x"}}), ALSConfig{});
  bool found = true;
  const auto v = f.user_or_zero("nobody", &found);
  EXPECT_FALSE(found);
  EXPECT_EQ(v.size(), 16);
  EXPECT_EQ(v.squaredNorm(), 0.0);
  EXPECT_FALSE(f.item_row("nothing").has_value());
  f.item_or_zero("x", &found);
  EXPECT_TRUE(found);
}

TEST(Als, ConfigValidation) {
  ALSConfig cfg;
  cfg.rank = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.regularization = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.confidence_alpha = -1;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Als, JsonRoundTrip) {
  const auto fb = random_feedback(8, 6, 0.3, 4);
  ALSConfig cfg;
  cfg.rank = 3;
  cfg.seed = 12;
  const auto f = fit_als(fb, cfg);
  const auto g = factors_from_json(nlohmann::ordered_json::parse(to_json(f).dump()));
  EXPECT_TRUE(f.user_factors == g.user_factors);
  EXPECT_TRUE(f.item_factors == g.item_factors);
  EXPECT_EQ(f.user_ids, g.user_ids);
  EXPECT_EQ(g.config.seed, 12u);
  EXPECT_TRUE(g.user_row(f.user_ids[2]).has_value());
}

}  // namespace
}  // namespace tmrec
