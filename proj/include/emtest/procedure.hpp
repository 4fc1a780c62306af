#pragma once

#include <string>
#include <vector>

#include "emtest/em_test.hpp"
#include "emtest/null_dist.hpp"
#include "emtest/simgen.hpp"

namespace emtest {

// Everything a single test run needs. The master seed derives independent
// streams for the null fit, the EM grid and the chi-bar calibration.
struct TestConfig {
  EmTestConfig em;
  NullFitConfig null_fit;
  int mc_draws = 10000;
  int threads = 1;
  std::uint64_t seed = 0;
};

struct TestReport {
  int m0 = 0;
  double statistic = 0.0;
  double pvalue = 1.0;
  ChiBarWeights weights;
  NullFit nullfit;
  EmTestResult em;
  TestConfig config;
  std::uint64_t seed = 0;
  double wall_time_sec = 0.0;
};

struct SequentialResult {
  int selected_m = 0;  // 0 when a step failed before a decision
  bool capped = false;
  std::vector<TestReport> reports;
  double level = 0.0;
  std::string error;  // nonempty when a step failed
};

struct TuneRow {
  double c = 0.0;
  std::vector<double> rejection;  // one entry per level
};

struct TuneResult {
  double chosen_c = 0.0;
  std::vector<double> levels;
  std::vector<TuneRow> table;
  int reps = 0;
  int failures = 0;
};

// Null fit, EM statistic, score covariance, Monte Carlo chi-bar weights and
// p-value, assembled into a report.
TestReport run_test(const Dataset& data, int m0, const TestConfig& config);

// Tests m0 = 1, 2, ... until the first non-rejection or m_max.
SequentialResult sequential_test(const Dataset& data, double level, int m_max,
                                 const TestConfig& config);

// Simulates `reps` null datasets from the scenario (at sample size n) and,
// reusing one chi-bar calibration per dataset, tabulates rejection rates for
// every penalty constant in c_grid. Chooses the constant minimizing the
// summed absolute deviation from the nominal levels; ties go to the smaller
// constant.
TuneResult tune_c(const ScenarioSpec& scenario,
                  const std::vector<double>& c_grid,
                  const std::vector<double>& levels, int reps, int n,
                  const TestConfig& config);

}  // namespace emtest
