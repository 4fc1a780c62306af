#include "emtest/procedure.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "emtest/parallel.hpp"

namespace emtest {

namespace {

// Stream tags for deriving independent seeds from the master seed.
constexpr std::uint64_t kNullFitStream = 11;
constexpr std::uint64_t kEmStream = 22;
constexpr std::uint64_t kChiBarStream = 33;
constexpr std::uint64_t kSequentialStream = 500;

}  // namespace

TestReport run_test(const Dataset& data, int m0, const TestConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  data.validate();
  if (m0 < 1) throw InvalidInputError("run_test: m0 must be >= 1");
  config.em.validate();

  TestReport report;
  report.m0 = m0;
  report.config = config;
  report.seed = config.seed;

  NullFitConfig nf = config.null_fit;
  nf.seed = derive_seed(config.seed, kNullFitStream);
  report.nullfit = fit_null(data, m0, nf);

  EmTestConfig em = config.em;
  em.seed = derive_seed(config.seed, kEmStream);
  report.em = em_statistic(data, report.nullfit, m0, em);
  report.statistic = report.em.statistic;

  const ScoreVectors scores = score_vectors(report.nullfit, data);
  const Eigen::MatrixXd b22 = tilde_b22(scores);
  report.weights = estimate_chibar_weights(
      b22, config.mc_draws, derive_seed(config.seed, kChiBarStream),
      config.threads);
  report.pvalue = chibar_pvalue(report.statistic, report.weights);

  report.wall_time_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return report;
}

SequentialResult sequential_test(const Dataset& data, double level, int m_max,
                                 const TestConfig& config) {
  if (!(level > 0.0 && level < 1.0))
    throw InvalidInputError("sequential_test: level must lie in (0, 1)");
  if (m_max < 1) throw InvalidInputError("sequential_test: m_max must be >= 1");

  SequentialResult result;
  result.level = level;
  for (int m0 = 1; m0 <= m_max; ++m0) {
    TestConfig sub = config;
    sub.seed = derive_seed(config.seed, kSequentialStream + m0);
    try {
      TestReport report = run_test(data, m0, sub);
      const double pvalue = report.pvalue;
      result.reports.push_back(std::move(report));
      if (pvalue > level) {
        result.selected_m = m0;
        return result;
      }
    } catch (const Error& e) {
      result.error = e.what();
      result.selected_m = 0;
      return result;
    }
  }
  result.selected_m = m_max;
  result.capped = true;
  return result;
}

TuneResult tune_c(const ScenarioSpec& scenario,
                  const std::vector<double>& c_grid,
                  const std::vector<double>& levels, int reps, int n,
                  const TestConfig& config) {
  if (c_grid.empty()) throw InvalidInputError("tune_c: empty c grid");
  if (reps < 1) throw InvalidInputError("tune_c: reps must be >= 1");
  for (double c : c_grid)
    if (!(c > 0.0)) throw InvalidInputError("tune_c: C values must be > 0");

  std::vector<double> grid = c_grid;
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  ScenarioSpec spec = scenario;
  spec.n = n;
  const int m0 = spec.test_m0;

  // pvalues[r][ci]; the null fit and the chi-bar calibration do not depend
  // on C, so each replicate computes them once.
  std::vector<std::vector<double>> pvalues(reps);
  std::vector<char> failed(reps, 0);

  parallel_for(reps, config.threads, [&](std::int64_t r) {
    const std::uint64_t rep_seed =
        derive_seed(config.seed, 0xC0 + static_cast<std::uint64_t>(r));
    try {
      Rng rng(derive_seed(rep_seed, 1));
      const Dataset data = generate_scenario(spec, rng);

      NullFitConfig nf = config.null_fit;
      nf.seed = derive_seed(rep_seed, 2);
      const NullFit fit = fit_null(data, m0, nf);

      const ScoreVectors scores = score_vectors(fit, data);
      const Eigen::MatrixXd b22 = tilde_b22(scores);
      const ChiBarWeights weights = estimate_chibar_weights(
          b22, config.mc_draws, derive_seed(rep_seed, 3), 1);

      std::vector<double> ps;
      ps.reserve(grid.size());
      for (double c : grid) {
        EmTestConfig em = config.em;
        em.C = c;
        em.seed = derive_seed(rep_seed, 4);
        const EmTestResult er = em_statistic(data, fit, m0, em);
        ps.push_back(chibar_pvalue(er.statistic, weights));
      }
      pvalues[r] = std::move(ps);
    } catch (const Error&) {
      failed[r] = 1;
    }
  });

  int failures = 0;
  for (char f : failed) failures += f;
  const int ok = reps - failures;
  if (ok == 0) throw NumericalError("tune_c: every replicate failed");

  TuneResult result;
  result.levels = levels;
  result.reps = ok;
  result.failures = failures;

  double best_score = std::numeric_limits<double>::infinity();
  for (std::size_t ci = 0; ci < grid.size(); ++ci) {
    TuneRow row;
    row.c = grid[ci];
    double score = 0.0;
    for (double level : levels) {
      int hits = 0;
      for (int r = 0; r < reps; ++r)
        if (!failed[r] && pvalues[r][ci] <= level) ++hits;
      const double prop = static_cast<double>(hits) / ok;
      row.rejection.push_back(prop);
      score += std::abs(prop - level);
    }
    // Strict improvement only: ties resolve to the smaller constant because
    // the grid is sorted ascending.
    if (score < best_score) {
      best_score = score;
      result.chosen_c = row.c;
    }
    result.table.push_back(std::move(row));
  }
  return result;
}

}  // namespace emtest
