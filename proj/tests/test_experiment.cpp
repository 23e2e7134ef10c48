#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "l2lws/errors.hpp"
#include "l2lws/experiment.hpp"

using namespace l2lws;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json tiny_config() {
  return json::parse(R"({
    "methods": ["WSO"],
    "seeds": [0],
    "architecture": {"embedding_dim": 8, "conv": [{"filters": 6, "width": 3}],
                     "target_hidden": [8], "confidence_hidden": [6], "dropout": 0.2},
    "train": {"optimizer": "adam", "lr": 0.01, "max_steps": 40, "batch_size": 16,
              "ratio": [1, 3], "eval_every": 10},
    "data": {"synthetic": {"vocab_size": 200, "indicative_per_class": 15, "u_size": 300,
                           "v_size": 40, "val_size": 60, "test_size": 60}}
  })");
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("l2lws_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::vector<std::string>> read_table(const fs::path& p, char sep) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(slurp(p));
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, sep)) cells.push_back(cell);
    if (!line.empty() && line.back() == sep) cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

}  // namespace

TEST(Config, UnknownKeysAreRejected) {
  auto j = tiny_config();
  j["colour"] = "blue";
  EXPECT_THROW(experiment::parse_config(j), ConfigError);
  j = tiny_config();
  j["train"]["momentum"] = 0.9;
  EXPECT_THROW(experiment::parse_config(j), ConfigError);
  j = tiny_config();
  j["train"]["optimizer"] = "rmsprop";
  EXPECT_THROW(experiment::parse_config(j), ConfigError);
  j = tiny_config();
  j["methods"] = {"WSO", "MAGIC"};
  EXPECT_THROW(experiment::parse_config(j), ConfigError);
}

TEST(Config, DocumentedTrainKeys) {
  auto j = tiny_config();
  j.erase("seeds");
  j["train"]["seed"] = 7;
  j["train"]["schedule"] = "interleave";
  j["train"]["reduction"] = "mean";
  const auto c = experiment::parse_config(j);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{7}));
  EXPECT_EQ(c.plan.ratio_full, 1u);
  EXPECT_EQ(c.plan.ratio_weak, 3u);
  EXPECT_EQ(c.plan.batch_size, 16u);
  EXPECT_EQ(c.plan.optimizer.kind, train::OptimizerKind::adam);
  EXPECT_EQ(c.plan.schedule, train::Schedule::interleave);
  EXPECT_EQ(c.plan.reduction, nn::Reduction::mean);
  EXPECT_EQ(c.architecture.conv[0].filters, 6u);
}

TEST(Config, JsonRoundTrip) {
  const auto c = experiment::parse_config(tiny_config());
  const auto j = experiment::to_json(c);
  EXPECT_EQ(experiment::to_json(experiment::parse_config(j)), j);
}

TEST(Config, HashIgnoresMethodOnly) {
  auto a = experiment::parse_config(tiny_config());
  auto b = a;
  b.methods = {baselines::Method::L2LWS};
  EXPECT_EQ(experiment::config_hash(a, 0, 1.0), experiment::config_hash(b, 0, 1.0));
  EXPECT_NE(experiment::config_hash(a, 0, 1.0), experiment::config_hash(a, 1, 1.0));
  EXPECT_NE(experiment::config_hash(a, 0, 1.0), experiment::config_hash(a, 0, 0.5));
  b.plan.optimizer.lr = 0.02;
  EXPECT_NE(experiment::config_hash(a, 0, 1.0), experiment::config_hash(b, 0, 1.0));
}

TEST(Experiment, SingleMethodGivesOneRow) {
  const auto out = scratch("one_row");
  const auto config = experiment::parse_config(tiny_config());
  const auto report = experiment::run_experiment(config, out);
  EXPECT_EQ(report.failures, 0u);
  ASSERT_EQ(report.runs.size(), 1u);
  const auto summary = read_table(out / "summary.tsv", '\t');
  ASSERT_EQ(summary.size(), 2u);
  EXPECT_EQ(summary[0], (std::vector<std::string>{"method", "dataset", "seed", "macro_f1", "steps",
                                                  "wallclock_s"}));
  EXPECT_EQ(summary[1][0], "WSO");
  EXPECT_EQ(summary[1][2], "0");
  EXPECT_EQ(summary[1][4], "40");
  EXPECT_TRUE(fs::exists(out / "runs" / "WSO_seed0.csv"));
  EXPECT_TRUE(fs::exists(out / "report.json"));
}

TEST(Experiment, ThreeSeedsAggregateMatchesSummary) {
  const auto out = scratch("three_seeds");
  auto j = tiny_config();
  j["seeds"] = {0, 1, 2};
  j["methods"] = {"WA", "WSO"};
  const auto report = experiment::run_experiment(experiment::parse_config(j), out);
  EXPECT_EQ(report.failures, 0u);
  for (int s = 0; s < 3; ++s) {
    EXPECT_TRUE(fs::exists(out / "runs" / ("WSO_seed" + std::to_string(s) + ".csv")));
  }
  std::map<std::string, std::vector<double>> scores;
  const auto summary = read_table(out / "summary.tsv", '\t');
  for (std::size_t r = 1; r < summary.size(); ++r) scores[summary[r][0]].push_back(std::stod(summary[r][3]));
  const auto aggregate = read_table(out / "aggregate.tsv", '\t');
  ASSERT_EQ(aggregate[0],
            (std::vector<std::string>{"method", "dataset", "n", "macro_f1_mean", "macro_f1_std"}));
  ASSERT_EQ(aggregate.size(), 3u);
  for (std::size_t r = 1; r < aggregate.size(); ++r) {
    const auto& v = scores.at(aggregate[r][0]);
    ASSERT_EQ(std::stoul(aggregate[r][2]), v.size());
    double mean = 0.0;
    for (double x : v) mean += x / v.size();
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean) / (v.size() - 1);
    EXPECT_NEAR(std::stod(aggregate[r][3]), mean, 1e-12);
    EXPECT_NEAR(std::stod(aggregate[r][4]), std::sqrt(var), 1e-12);
  }
  // The last metrics row of each run is the step count reported in summary.
  for (std::size_t r = 1; r < summary.size(); ++r) {
    if (summary[r][0] != "WSO") continue;
    const auto csv = read_table(out / "runs" / ("WSO_seed" + summary[r][2] + ".csv"), ',');
    EXPECT_EQ(csv.back()[0], summary[r][4]);
  }
}

TEST(Experiment, RerunIsByteIdentical) {
  auto j = tiny_config();
  j["methods"] = {"WSO", "L2LWS"};
  j["seeds"] = {3};
  const auto config = experiment::parse_config(j);
  const auto a = scratch("rerun_a"), b = scratch("rerun_b");
  experiment::run_experiment(config, a);
  experiment::run_experiment(config, b);
  for (const auto* name : {"WSO_seed3.csv", "L2LWS_seed3.csv"})
    EXPECT_EQ(slurp(a / "runs" / name), slurp(b / "runs" / name)) << name;
  const auto sa = read_table(a / "summary.tsv", '\t'), sb = read_table(b / "summary.tsv", '\t');
  ASSERT_EQ(sa.size(), sb.size());
  for (std::size_t r = 0; r < sa.size(); ++r)
    for (std::size_t c = 0; c < 5; ++c) EXPECT_EQ(sa[r][c], sb[r][c]);
}

TEST(Experiment, FailingRunIsRecordedAndOthersContinue) {
  auto j = tiny_config();
  j["methods"] = {"WSO", "FSO"};
  j["data"]["synthetic"]["v_size"] = 0;
  const auto out = scratch("failure");
  const auto report = experiment::run_experiment(experiment::parse_config(j), out);
  EXPECT_EQ(report.failures, 1u);
  ASSERT_EQ(report.runs.size(), 2u);
  EXPECT_FALSE(report.runs[0].error.has_value());
  EXPECT_TRUE(report.runs[1].error.has_value());
}

TEST(Experiment, FractionSweepWritesLearningCurve) {
  auto j = tiny_config();
  j["u_fractions"] = {0.5};
  const auto out = scratch("fractions");
  const auto report = experiment::run_experiment(experiment::parse_config(j), out);
  EXPECT_EQ(report.runs.size(), 2u);
  const auto curve = read_table(out / "learning_curve.tsv", '\t');
  ASSERT_EQ(curve.size(), 3u);
  EXPECT_EQ(curve[0], (std::vector<std::string>{"method", "u_fraction", "seed", "macro_f1"}));
}

TEST(MetricsCsv, HeaderAndEmptyNan) {
  train::MetricsRecord rec;
  rec.step = 5;
  rec.phase = "weak";
  rec.loss_t = 0.25;
  rec.weak_seen = 80;
  std::ostringstream out;
  experiment::write_metrics_csv(out, {rec});
  EXPECT_EQ(out.str(),
            "step,mode,loss_t,loss_c,val_loss,val_macro_f1,mean_conf,weak_seen\n"
            "5,weak,0.25,,,,,80\n");
}

TEST(Curves, TwoSeriesCopiedVerbatim) {
  const auto dir = scratch("curves");
  const std::string header = "step,mode,loss_t,loss_c,val_loss,val_macro_f1,mean_conf,weak_seen\n";
  write_file(dir / "WSO_seed0.csv", header + "10,weak,1.0986122886681098,,0.9,0.5,,160\n20,weak,0.7,,0.8,0.6,,320\n");
  write_file(dir / "L2LWS_seed0.csv", header + "10,joint,0.123456789012345,0.6,0.85,0.55,0.7,120\n");
  const auto result = experiment::emit_curves({dir / "WSO_seed0.csv", dir / "L2LWS_seed0.csv"}, dir / "out");
  EXPECT_EQ(result.series, 2u);
  EXPECT_EQ(result.rows, 3u);
  const auto rows = read_table(dir / "out" / "curves.tsv", '\t');
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0][0], "series");
  EXPECT_EQ(rows[1][0], "WSO_seed0");
  EXPECT_EQ(rows[1][3], "1.0986122886681098");
  EXPECT_EQ(rows[3][0], "L2LWS_seed0");
  EXPECT_EQ(rows[3][3], "0.123456789012345");
  EXPECT_EQ(rows[3][7], "0.7");
  EXPECT_TRUE(fs::exists(dir / "out" / "plot_curves.py"));
}

TEST(Curves, EmptyCsvWarns) {
  const auto dir = scratch("curves_empty");
  write_file(dir / "empty.csv", "");
  const auto result = experiment::emit_curves({dir / "empty.csv"}, dir / "out");
  EXPECT_EQ(result.rows, 0u);
  EXPECT_FALSE(result.warnings.empty());
  EXPECT_EQ(read_table(dir / "out" / "curves.tsv", '\t').size(), 1u);
}

TEST(Curves, MissingColumnIsSchemaError) {
  const auto dir = scratch("curves_schema");
  write_file(dir / "bad.csv", "step,mode,loss_t\n1,weak,0.5\n");
  EXPECT_THROW(experiment::emit_curves({dir / "bad.csv"}, dir / "out"), SchemaError);
}

TEST(FormatNumber, ShortestRoundTrip) {
  EXPECT_EQ(experiment::format_number(0.1), "0.1");
  EXPECT_EQ(std::stod(experiment::format_number(1.0 / 3.0)), 1.0 / 3.0);
}
