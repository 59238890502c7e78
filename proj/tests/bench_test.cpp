#include "tmrec/bench.hpp"

#include <gtest/gtest.h>

#include "tmrec/synthetic.hpp"

namespace tmrec {
namespace {

ScalingRow measured(std::size_t k, double train, double one, double test) {
  ScalingRow r;
  r.item_count = k;
  r.dataset_rows = k * 10;
  r.dataset_fraction = 0.1;
  r.absolute = {train, one, test};
  return r;
}

TEST(Normalize, SingleConfigurationIsOne) {
  ScalingReport r;
  r.rows.push_back(measured(8, 3.7, 0.4, 0.05));
  normalize_timings(r);
  ASSERT_TRUE(r.rows[0].relative);
  EXPECT_EQ(*r.rows[0].relative, (TimingSet{1.0, 1.0, 1.0}));
}

TEST(Normalize, DividesBySmallestMeasuredRow) {
  ScalingReport r;
  ScalingRow skipped = measured(4, 0, 0, 0);
  skipped.skipped = "no examples";
  r.rows = {skipped, measured(8, 2.0, 0.5, 0.25), measured(64, 5.0, 1.0, 1.0)};
  normalize_timings(r);
  EXPECT_FALSE(r.rows[0].relative);
  EXPECT_EQ(*r.rows[1].relative, (TimingSet{1.0, 1.0, 1.0}));
  EXPECT_DOUBLE_EQ(r.rows[2].relative->train_epochs, 2.5);
  EXPECT_DOUBLE_EQ(r.rows[2].relative->train_1_epoch, 2.0);
  EXPECT_DOUBLE_EQ(r.rows[2].relative->test_1_epoch, 4.0);
}

TEST(Normalize, ZeroBaseNeverProducesNaN) {
  ScalingReport r;
  r.rows = {measured(8, 0.0, 0.0, 0.0), measured(16, 1.0, 1.0, 1.0)};
  normalize_timings(r);
  EXPECT_TRUE(std::isfinite(r.rows[1].relative->train_epochs));
}

TEST(Render, EmptyReportIsHeaderOnly) {
  ScalingReport r;
  r.epochs = 10;
  const auto table = render_scaling_table(r);
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 2);
  EXPECT_NE(table.find("Num items"), std::string::npos);
  EXPECT_NE(table.find("Dataset percentage"), std::string::npos);
  EXPECT_NE(table.find("Train 10 epochs"), std::string::npos);
}

TEST(Render, PercentHasThreeDecimals) {
  EXPECT_EQ(format_percent(0.01616), "1.616%");
  EXPECT_EQ(format_percent(1.0), "100.000%");
  ScalingReport r;
  r.epochs = 2;
  r.rows = {measured(8, 1, 1, 1)};
  r.rows[0].dataset_fraction = 0.01616;
  normalize_timings(r);
  EXPECT_NE(render_scaling_table(r).find("1.616%"), std::string::npos);
}

TEST(Render, CsvHasOneLinePerRow) {
  ScalingReport r;
  r.rows = {measured(8, 1, 1, 1), measured(64, 2, 2, 2)};
  normalize_timings(r);
  const auto csv = scaling_csv(r);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  EXPECT_EQ(csv.rfind("item_count,", 0), 0U);
}

TEST(Render, JsonRoundTripIsIdentical) {
  ScalingReport r;
  r.model = "tm";
  r.epochs = 10;
  r.total_rows = 1234;
  r.environment = environment_fingerprint(1, 42);
  ScalingRow skipped = measured(4, 0, 0, 0);
  skipped.skipped = "no test examples";
  r.rows = {measured(8, 0.123456789012345, 1.0 / 3.0, 2e-7), measured(64, 1, 2, 3), skipped};
  r.rows[0].test_accuracy = 0.75;
  normalize_timings(r);
  const auto back = scaling_report_from_json(nlohmann::ordered_json::parse(to_json(r).dump()));
  EXPECT_EQ(back, r);
  EXPECT_THROW(scaling_report_from_json({{"format", "other"}}), FormatError);
}

TEST(Suite, RejectsBadItemCounts) {
  const auto log = generate_synthetic({}).log;
  ModelOptions opt;
  EXPECT_THROW(run_scaling_suite(opt, log, {}), ConfigError);
  EXPECT_THROW(run_scaling_suite(opt, log, {64, 8}), ConfigError);
  EXPECT_THROW(run_scaling_suite(opt, log, {8, 8}), ConfigError);
}

TEST(Suite, SmallSyntheticRun) {
  auto spec = scaling_synthetic_spec(5);
  spec.num_customers = 300;
  spec.num_items = 64;
  const auto log = generate_synthetic(spec).log;
  ModelOptions opt;
  opt.kind = ModelKind::tm;
  opt.clauses = 6;
  opt.epochs = 2;
  PipelineConfig pc;
  pc.cutoff_days = 20;
  pc.als.rank = 2;
  pc.als.sweeps = 2;
  pc.schema.history_length = 2;
  std::size_t progress_calls = 0;
  const auto report = run_scaling_suite(opt, log, {4, 16, 48}, pc, [&](const ScalingRow&) { ++progress_calls; });
  EXPECT_EQ(progress_calls, 3U);
  ASSERT_EQ(report.rows.size(), 3U);
  EXPECT_EQ(report.model, "tm");
  EXPECT_EQ(report.total_rows, log.transactions.size());
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    const auto& r = report.rows[i];
    ASSERT_FALSE(r.skipped) << *r.skipped;
    EXPECT_LE(r.items_present, r.item_count);
    EXPECT_GT(r.dataset_fraction, 0.0);
    EXPECT_LE(r.dataset_fraction, 1.0);
    if (i > 0) {
      EXPECT_GE(r.dataset_rows, report.rows[i - 1].dataset_rows);
    }
  }
  EXPECT_EQ(*report.rows[0].relative, (TimingSet{1.0, 1.0, 1.0}));
}

}  // namespace
}  // namespace tmrec
