#include "emtest/report.hpp"

#include <cstdio>
#include <sstream>

#include <json.hpp>

namespace emtest {

namespace {

using nlohmann::json;

json vec_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.begin(), v.end());
}

json mat_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    rows.push_back(row);
  }
  return rows;
}

json config_json(const TestConfig& cfg) {
  json j;
  j["K"] = cfg.em.K;
  j["C"] = cfg.em.C;
  j["beta_grid"] = cfg.em.beta_grid;
  j["lambda"] = cfg.em.lambda;
  j["inner_restarts"] = cfg.em.inner_restarts;
  j["restarts"] = cfg.null_fit.restarts;
  j["mc_draws"] = cfg.mc_draws;
  j["threads"] = cfg.threads;
  j["seed"] = cfg.seed;
  return j;
}

json nullfit_json(const NullFit& fit) {
  json j;
  j["alphas"] = vec_json(fit.psi.alphas);
  j["thetas"] = mat_json(fit.psi.thetas);
  j["gamma"] = vec_json(fit.gamma);
  j["loglik"] = fit.loglik;
  j["converged"] = fit.converged;
  j["iterations"] = fit.iterations;
  return j;
}

json test_json(const TestReport& report) {
  json j;
  j["schema"] = "emtest-report/1";
  j["command"] = "test";
  j["m0"] = report.m0;
  j["statistic"] = report.statistic;
  j["pvalue"] = report.pvalue;
  j["chibar_weights"] = vec_json(report.weights.a);
  j["mc_draws"] = report.weights.mc_draws;
  j["null_fit"] = nullfit_json(report.nullfit);
  json grid = json::array();
  for (const GridPointResult& pt : report.em.per_grid) {
    json g;
    g["beta0"] = vec_json(pt.beta0);
    g["m_trace"] = pt.trace;
    g["failed"] = pt.failed;
    if (pt.failed) g["error"] = pt.error;
    grid.push_back(g);
  }
  j["grid"] = grid;
  j["config"] = config_json(report.config);
  j["seed"] = report.seed;
  j["wall_time_sec"] = report.wall_time_sec;
  return j;
}

std::string fmt(double v, int width = 10, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%*.*f", width, prec, v);
  return buf;
}

}  // namespace

std::string test_report_json(const TestReport& report) {
  return test_json(report).dump(2) + "\n";
}

std::string sequential_result_json(const SequentialResult& result) {
  json j;
  j["schema"] = "emtest-report/1";
  j["command"] = "sequential";
  j["level"] = result.level;
  j["selected_m"] = result.selected_m;
  j["capped"] = result.capped;
  if (!result.error.empty()) j["error"] = result.error;
  json reports = json::array();
  for (const TestReport& r : result.reports) reports.push_back(test_json(r));
  j["reports"] = reports;
  return j.dump(2) + "\n";
}

std::string rejection_table_json(const RejectionTable& table,
                                 const std::string& scenario_id, int m0,
                                 std::uint64_t seed) {
  json j;
  j["schema"] = "emtest-report/1";
  j["command"] = "simulate";
  j["scenario"] = scenario_id;
  j["m0"] = m0;
  j["seed"] = seed;
  j["failures"] = table.failures;
  json rows = json::array();
  for (const RejectionRow& r : table.rows) {
    json row;
    row["level"] = r.level;
    row["proportion"] = r.proportion;
    row["reps"] = r.reps;
    row["mc_se"] = r.mc_se;
    rows.push_back(row);
  }
  j["rows"] = rows;
  return j.dump(2) + "\n";
}

std::string tune_result_json(const TuneResult& result,
                             const std::string& scenario_id,
                             std::uint64_t seed) {
  json j;
  j["schema"] = "emtest-report/1";
  j["command"] = "tune";
  j["scenario"] = scenario_id;
  j["seed"] = seed;
  j["levels"] = result.levels;
  j["chosen_c"] = result.chosen_c;
  j["reps"] = result.reps;
  j["failures"] = result.failures;
  json rows = json::array();
  for (const TuneRow& r : result.table) {
    json row;
    row["c"] = r.c;
    row["rejection"] = r.rejection;
    rows.push_back(row);
  }
  j["table"] = rows;
  return j.dump(2) + "\n";
}

std::string predict_report_json(const PredictReport& report,
                                std::uint64_t seed) {
  json j;
  j["schema"] = "emtest-report/1";
  j["command"] = "predict";
  j["m"] = report.m;
  j["folds"] = report.folds;
  j["seed"] = seed;
  j["assignment_rule"] = report.assignment_rule;
  j["assignment_counts"] = report.assignment_counts;
  j["failed_folds"] = report.failed_folds;
  auto metrics_json = [](const FoldMetrics& m) {
    json f;
    f["accuracy"] = m.accuracy;
    f["precision"] = m.precision;
    f["recall"] = m.recall;
    f["f1"] = m.f1;
    f["auc"] = m.auc;
    f["n_test"] = m.n_test;
    f["failed"] = m.failed;
    if (m.failed) f["error"] = m.error;
    return f;
  };
  json per_fold = json::array();
  for (const FoldMetrics& m : report.per_fold) per_fold.push_back(metrics_json(m));
  j["per_fold"] = per_fold;
  j["aggregate"] = metrics_json(report.aggregate);
  j["coefficients"] = mat_json(report.coefficients);
  j["gamma"] = vec_json(report.gamma);
  return j.dump(2) + "\n";
}

std::string test_report_table(const TestReport& report) {
  std::ostringstream os;
  os << "EM test: H0 m = " << report.m0 << " vs working alternative m = "
     << 2 * report.m0 << "\n";
  os << "  statistic EM_n^(K) " << fmt(report.statistic, 12, 6) << "\n";
  os << "  p-value            " << fmt(report.pvalue, 12, 6) << "\n";
  os << "  null loglik        " << fmt(report.nullfit.loglik, 12, 4) << "\n";
  os << "  chi-bar weights   ";
  for (Eigen::Index s = 0; s < report.weights.a.size(); ++s)
    os << " a" << s << "=" << fmt(report.weights.a[s], 0, 4);
  os << "\n  grid (beta0 -> M trace):\n";
  for (const GridPointResult& pt : report.em.per_grid) {
    os << "    (";
    for (Eigen::Index h = 0; h < pt.beta0.size(); ++h)
      os << (h ? "," : "") << pt.beta0[h];
    os << ") ->";
    if (pt.failed) {
      os << " failed: " << pt.error;
    } else {
      for (double m : pt.trace) os << " " << fmt(m, 0, 4);
    }
    os << "\n";
  }
  return os.str();
}

std::string sequential_result_table(const SequentialResult& result) {
  std::ostringstream os;
  os << "Sequential subgroup-count selection (level " << result.level << ")\n";
  os << "  m0   statistic      p-value   decision\n";
  for (const TestReport& r : result.reports)
    os << fmt(r.m0, 4, 0) << " " << fmt(r.statistic, 11, 4) << " "
       << fmt(r.pvalue, 12, 6) << "   "
       << (r.pvalue > result.level ? "accept (stop)" : "reject") << "\n";
  if (!result.error.empty())
    os << "  halted: " << result.error << "\n";
  else if (result.capped)
    os << "  reached m_max; selected m* = " << result.selected_m << " (capped)\n";
  else
    os << "  selected m* = " << result.selected_m << "\n";
  return os.str();
}

std::string rejection_table_text(const RejectionTable& table) {
  std::ostringstream os;
  os << "  scenario        level   rejection      MC se   reps\n";
  for (const RejectionRow& r : table.rows) {
    char line[128];
    std::snprintf(line, sizeof line, "  %-14s %6.3f   %9.4f  %9.4f  %5d\n",
                  r.spec_id.c_str(), r.level, r.proportion, r.mc_se, r.reps);
    os << line;
  }
  if (table.failures > 0) os << "  failed replicates: " << table.failures << "\n";
  return os.str();
}

std::string tune_result_table(const TuneResult& result) {
  std::ostringstream os;
  os << "  C      ";
  for (double level : result.levels) os << fmt(level, 8, 3);
  os << "\n";
  for (const TuneRow& row : result.table) {
    os << fmt(row.c, 5, 2) << (row.c == result.chosen_c ? " *" : "  ");
    for (double p : row.rejection) os << fmt(p, 8, 3);
    os << "\n";
  }
  os << "  chosen C = " << result.chosen_c << " (" << result.reps
     << " replicates";
  if (result.failures) os << ", " << result.failures << " failed";
  os << ")\n";
  return os.str();
}

std::string predict_report_table(const PredictReport& report) {
  std::ostringstream os;
  os << "Cross-validated subgroup prediction (m = " << report.m << ", "
     << report.folds << " folds)\n";
  os << "  fold   accuracy  precision     recall         F1        AUC\n";
  for (std::size_t f = 0; f < report.per_fold.size(); ++f) {
    const FoldMetrics& m = report.per_fold[f];
    if (m.failed) {
      os << fmt(static_cast<double>(f + 1), 6, 0) << "   failed: " << m.error
         << "\n";
      continue;
    }
    os << fmt(static_cast<double>(f + 1), 6, 0) << " " << fmt(m.accuracy)
       << " " << fmt(m.precision) << " " << fmt(m.recall) << " " << fmt(m.f1)
       << " " << fmt(m.auc) << "\n";
  }
  const FoldMetrics& a = report.aggregate;
  os << "  mean   " << fmt(a.accuracy, 8, 4) << " " << fmt(a.precision) << " "
     << fmt(a.recall) << " " << fmt(a.f1) << " " << fmt(a.auc) << "\n";
  os << "  assignment rule: " << report.assignment_rule << "\n";
  return os.str();
}

std::string scenario_catalog_table() {
  std::ostringstream os;
  os << "  id                family   m  test-m0  default-n  description\n";
  for (const ScenarioSpec& s : list_builtin_scenarios()) {
    char line[256];
    std::snprintf(line, sizeof line, "  %-17s %-8s %2d  %7d  %9d  %s\n",
                  s.id.c_str(),
                  s.family.kind == FamilyKind::NormalKnownVariance ? "normal"
                                                                   : "logit",
                  static_cast<int>(s.weights.size()), s.test_m0, s.n,
                  s.description.c_str());
    os << line;
  }
  return os.str();
}

}  // namespace emtest
