#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "dva/eval.hpp"
#include "test_support.hpp"

namespace dva {
namespace {

TEST(ScorePercentage, Examples) {
  EXPECT_DOUBLE_EQ(score_percentage(110, 10, 110), 1.0);
  EXPECT_DOUBLE_EQ(score_percentage(10, 10, 110), 0.0);
  EXPECT_NEAR(score_percentage(60, 10, 110), 0.5, 1e-9);
  // Not clamped.
  EXPECT_NEAR(score_percentage(120, 10, 110), 1.1, 1e-9);
  EXPECT_NEAR(score_percentage(0, 10, 110), -0.1, 1e-9);
  EXPECT_THROW(score_percentage(1, 5, 5), std::invalid_argument);
  EXPECT_THROW(score_percentage(1, 6, 5), std::invalid_argument);
}

TEST(ScorePercentage, AffineInvariance) {
  Rng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const double s_min = rng.uniform(-100, 100);
    const double s_max = s_min + rng.uniform(0.5, 200);
    const double s_a = rng.uniform(-200, 300);
    const double a = rng.uniform(0.01, 50), b = rng.uniform(-1000, 1000);
    EXPECT_NEAR(score_percentage(a * s_a + b, a * s_min + b, a * s_max + b),
                score_percentage(s_a, s_min, s_max), 1e-9);
  }
}

TEST(ScoreStats, SampleStatistics) {
  const auto s = ScoreStats::of({1.0, 2.0, 3.0, 4.0});
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_NEAR(s.std, std::sqrt(5.0 / 3.0), 1e-15);
  EXPECT_EQ(s.n, 4u);
  EXPECT_EQ(s.min, 1.0);
  EXPECT_EQ(s.max, 4.0);
  EXPECT_NEAR(s.std_error(), std::sqrt(5.0 / 3.0) / 2.0, 1e-15);
}

EvalConfig config(ViewVariant v, std::size_t episodes, std::uint64_t seed) {
  EvalConfig c;
  c.view = v;
  c.episodes = episodes;
  c.seed = seed;
  return c;
}

TEST(Baselines, RangeDeterminismAndScaling) {
  const auto a = estimate_baselines(Scenario::kBasicShooting, ViewVariant::kDual, 100, 3);
  const auto b = estimate_baselines(Scenario::kBasicShooting, ViewVariant::kDual, 100, 3);
  EXPECT_EQ(a.s_min, b.s_min);
  EXPECT_EQ(a.random.std, b.random.std);
  EXPECT_GE(a.random.min, -75.0);
  EXPECT_LE(a.random.max, 99.0);
  EXPECT_EQ(a.random.n, 100u);
  EXPECT_FALSE(a.notes.empty());

  const auto big = estimate_baselines(Scenario::kBasicShooting, ViewVariant::kDual, 1000, 3);
  const double ratio = a.random.std_error() / big.random.std_error();
  EXPECT_NEAR(ratio, std::sqrt(10.0), 0.3 * std::sqrt(10.0));
}

TEST(Evaluate, SameSeedIsBitIdentical) {
  const auto arch = ArchSpec::standard(ViewVariant::kDual);
  const auto params = build_network<float>(arch, 1);
  auto cfg = config(ViewVariant::kDual, 12, 5);
  cfg.drop = {0.3, 0.6, 0.0};
  const auto a = evaluate(arch, params, cfg);
  const auto b = evaluate(arch, params, cfg);
  ASSERT_EQ(a.episodes.size(), 12u);
  for (std::size_t i = 0; i < 12; ++i) {
    EXPECT_EQ(a.episodes[i].score, b.episodes[i].score);
    EXPECT_EQ(a.episodes[i].decisions, b.episodes[i].decisions);
  }
  EXPECT_EQ(a.score.mean, b.score.mean);
  EXPECT_EQ(a.score.std, b.score.std);
}

TEST(Evaluate, UntrainedMatchesRandomBaseline) {
  const auto arch = ArchSpec::standard(ViewVariant::kDual);
  const auto params = build_network<float>(arch, 2);
  for (DropConfig drop : {DropConfig{}, DropConfig{1.0, 1.0, 0.0}, DropConfig{0.5, 0.2, 0.0}}) {
    auto cfg = config(ViewVariant::kDual, 200, 6);
    cfg.drop = drop;
    const auto net = evaluate(arch, params, cfg);
    const auto rnd = evaluate_random(cfg);
    const double se = std::hypot(net.score.std_error(), rnd.score.std_error());
    EXPECT_LE(std::abs(net.score.mean - rnd.score.mean), 2 * se)
        << drop.p_generic << "," << drop.p_center;
  }
}

TEST(Evaluate, Errors) {
  const auto arch = ArchSpec::standard(ViewVariant::kDual);
  const auto params = build_network<float>(arch, 2);
  EXPECT_THROW(evaluate(arch, params, config(ViewVariant::kSingle, 1, 0)), std::invalid_argument);
  EXPECT_THROW(evaluate(arch, params, config(ViewVariant::kDual, 0, 0)), std::invalid_argument);
  auto bad = config(ViewVariant::kDual, 1, 0);
  bad.drop.p_center = 2.0;
  EXPECT_THROW(evaluate(arch, params, bad), std::invalid_argument);

  Checkpoint ckpt;
  ckpt.params = params;
  store_arch(arch, ckpt.meta);
  EXPECT_THROW(evaluate(ckpt, config(ViewVariant::kGenericOnly, 1, 0)), std::invalid_argument);
  EXPECT_THROW(robustness_grid(ckpt, Scenario::kBasicShooting, ViewVariant::kSingle, {0.0}, 1, 0),
               std::invalid_argument);
}

TEST(Evaluate, InputBlindPolicyIgnoresDrops) {
  // Episode seeds are shared across drop settings, so a policy that never
  // looks at its input replays identical episodes.
  const auto arch = ArchSpec::standard(ViewVariant::kDual);
  auto blind = build_network<float>(arch, 0);
  blind.zero();
  blind["policy.b"][actions::kShoot] = 1.0f;
  auto cfg = config(ViewVariant::kDual, 15, 4);
  const auto base = evaluate(arch, blind, cfg);
  for (DropConfig d : {DropConfig{1.0, 0.0, 0.0}, DropConfig{0.5, 0.5, 0.0}, DropConfig{1.0, 1.0, 0.0}}) {
    cfg.drop = d;
    const auto r = evaluate(arch, blind, cfg);
    for (std::size_t i = 0; i < r.episodes.size(); ++i) {
      EXPECT_EQ(r.episodes[i].score, base.episodes[i].score);
    }
  }
}

const std::vector<double> kPs{0.0, 0.2, 0.5, 0.8, 1.0};

TEST(RobustnessGrid, CenterOnlyTrackerShape) {
  const auto arch = ArchSpec::standard(ViewVariant::kDual);
  const auto grid = robustness_grid(arch, testing::tracker_params(ViewVariant::kDual),
                                    Scenario::kBasicShooting, kPs, 40, 11);
  ASSERT_GT(grid.s_max, grid.s_min + 20.0);
  ASSERT_EQ(grid.cells.size(), 25u);
  EXPECT_EQ(grid.cell(0.0, 0.0).s_p, 1.0);
  EXPECT_EQ(grid.cell(0.0, 0.0).stats.mean, grid.s_max);
  for (double pg : kPs) {
    // The generic stream has no weights: dropping it replays the episodes.
    EXPECT_EQ(grid.cell(pg, 0.0).s_p, 1.0) << pg;
    // Without the center view the tracker never aims.
    EXPECT_LT(grid.cell(pg, 1.0).s_p, 0.1) << pg;
    for (std::size_t j = 0; j + 1 < kPs.size(); ++j) {
      EXPECT_LE(grid.cell(pg, kPs[j + 1]).s_p, grid.cell(pg, kPs[j]).s_p + 0.05);
    }
  }
  EXPECT_EQ(grid.cells[1].p_generic, 0.0);
  EXPECT_EQ(*grid.cells[1].p_center, 0.2);
  EXPECT_THROW(grid.cell(0.3, 0.0), std::out_of_range);
  EXPECT_NE(grid.format_table().find("generic view P_drop"), std::string::npos);
}

TEST(RobustnessGrid, SingleTrackerLosesEverythingAtFullDrop) {
  const auto arch = ArchSpec::standard(ViewVariant::kSingle);
  const auto grid = robustness_grid(arch, testing::tracker_params(ViewVariant::kSingle),
                                    Scenario::kBasicShooting, {0.0, 1.0}, 40, 12);
  ASSERT_EQ(grid.cells.size(), 2u);
  EXPECT_EQ(grid.cell(0.0).s_p, 1.0);
  EXPECT_LT(grid.cell(1.0).s_p, 0.1);
  EXPECT_GT(grid.s_max, 80.0);
}

TEST(RobustnessGrid, CsvLayouts) {
  testing::TempDir dir("grid_csv");
  const std::vector<double> ps{0.0, 0.2, 0.5, 0.8, 1.0};
  const auto dual_arch = ArchSpec::standard(ViewVariant::kDual);
  const auto dual = robustness_grid(dual_arch, testing::tracker_params(ViewVariant::kDual),
                                    Scenario::kBasicShooting, ps, 5, 2);
  dual.write_csv(dir / "dual.csv");
  dual.write_baselines_csv(dir / "dual_baselines.csv");

  std::ifstream is(dir / "dual.csv");
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "p_generic,p_center,mean,std,n,s_p");
  int rows = 0;
  while (std::getline(is, line)) {
    if (rows == 0) EXPECT_EQ(line.rfind("0,0,", 0), 0u) << line;
    ++rows;
  }
  EXPECT_EQ(rows, 25);

  std::ifstream bs(dir / "dual_baselines.csv");
  std::getline(bs, line);
  EXPECT_EQ(line, "quantity,value,n");
  std::getline(bs, line);
  EXPECT_EQ(line.rfind("s_min,", 0), 0u);
  std::getline(bs, line);
  EXPECT_EQ(line.rfind("s_max,", 0), 0u);

  const auto single_arch = ArchSpec::standard(ViewVariant::kSingle);
  const auto single = robustness_grid(single_arch, testing::tracker_params(ViewVariant::kSingle),
                                      Scenario::kBasicShooting, ps, 5, 2);
  ASSERT_EQ(single.cells.size(), 5u);
  EXPECT_FALSE(single.cells[0].p_center.has_value());
  single.write_csv(dir / "single.csv");
  std::ifstream ss(dir / "single.csv");
  std::getline(ss, line);
  std::getline(ss, line);
  EXPECT_EQ(line.rfind("0,,", 0), 0u) << line;
}

TEST(RobustnessGrid, RejectsBadAxes) {
  const auto arch = ArchSpec::standard(ViewVariant::kDual);
  const auto p = testing::tracker_params(ViewVariant::kDual);
  EXPECT_THROW(robustness_grid(arch, p, Scenario::kBasicShooting, {}, 1, 0), std::invalid_argument);
  EXPECT_THROW(robustness_grid(arch, p, Scenario::kBasicShooting, {0.0, 1.2}, 1, 0),
               std::invalid_argument);
}

TEST(RobustnessGrid, UntrainedAgentHasNothingToLose) {
  // An untrained network's own S_max is within noise of S_min, so the scale
  // comes from the best episode score the scenario allows.
  const auto arch = ArchSpec::standard(ViewVariant::kDual);
  const auto params = build_network<float>(arch, 4);
  const double s_min = estimate_baselines(Scenario::kBasicShooting, arch.variant, 100, 8).s_min;
  for (double pg : {0.0, 0.5, 1.0}) {
    for (double pc : {0.0, 0.5, 1.0}) {
      auto cfg = config(ViewVariant::kDual, 30, 8);
      cfg.drop = {pg, pc, 0.0};
      const double s_p = score_percentage(evaluate(arch, params, cfg).score.mean, s_min, 99.0);
      EXPECT_LE(std::abs(s_p), 0.15) << pg << "," << pc;
    }
  }
}

TEST(Health, RandomBaselineIsFinite) {
  const auto b = estimate_baselines(Scenario::kHealthGathering, ViewVariant::kDual, 20, 1);
  EXPECT_GT(b.s_min, 0.0);
  EXPECT_LE(b.random.max, 525.0 + 5.0 * 525);
}

}  // namespace
}  // namespace dva
