// Command-line surface: subgroup-count testing for finite mixtures of GLMs,
// sequential selection, Monte Carlo studies, penalty tuning and
// cross-validated subgroup prediction.
//
// Exit codes: 0 success, 1 usage, 2 input/parse, 3 fitting, 4 numerical.

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "emtest/csv.hpp"
#include "emtest/report.hpp"

namespace {

using namespace emtest;

constexpr int kExitUsage = 1;
constexpr int kExitParse = 2;
constexpr int kExitFit = 3;
constexpr int kExitNumerical = 4;

struct CommonOpts {
  std::string input;
  std::string response = "y";
  std::vector<std::string> x_cols;
  std::vector<std::string> z_cols;
  std::string family = "normal";
  double sigma = 1.0;
  int m0 = 1;
  double level = 0.05;
  int K = 3;
  double C = 3.0;
  std::vector<double> beta_grid = {0.1, 0.3, 0.5};
  double lambda = 0.0;
  int mc_draws = 10000;
  int reps = 1000;
  std::uint64_t seed = 0;
  int threads = 1;
  int restarts = 20;
  std::string out;
};

Family parse_family(const CommonOpts& o) {
  if (o.family == "normal") return Family::normal(o.sigma);
  if (o.family == "logit") return Family::logit();
  throw InvalidInputError("--family must be 'normal' or 'logit'");
}

TestConfig make_config(const CommonOpts& o) {
  TestConfig cfg;
  cfg.em.K = o.K;
  cfg.em.C = o.C;
  cfg.em.beta_grid = o.beta_grid;
  cfg.em.lambda = o.lambda;
  cfg.null_fit.restarts = o.restarts;
  cfg.mc_draws = o.mc_draws;
  cfg.threads = o.threads;
  cfg.seed = o.seed;
  cfg.em.validate();
  return cfg;
}

Dataset load_dataset(const CommonOpts& o) {
  if (o.input.empty()) throw InvalidInputError("--input is required");
  if (o.x_cols.empty()) throw InvalidInputError("--x names at least one column");
  return read_dataset_csv(o.input, o.response, o.x_cols, o.z_cols,
                          parse_family(o));
}

void write_output(const std::string& json_text, const std::string& out_path) {
  if (out_path.empty()) return;
  std::ofstream out(out_path);
  if (!out) throw CsvError("cannot write '" + out_path + "'");
  out << json_text;
}

void add_common_flags(CLI::App* cmd, CommonOpts* o, bool with_data) {
  if (with_data) {
    cmd->add_option("--input", o->input, "input CSV file");
    cmd->add_option("--response", o->response, "response column name");
    cmd->add_option("--x", o->x_cols, "subgroup-effect columns")->delimiter(',');
    cmd->add_option("--z", o->z_cols, "common-effect columns")->delimiter(',');
    cmd->add_option("--family", o->family, "normal|logit");
    cmd->add_option("--sigma", o->sigma, "known error sd (normal family)");
  }
  cmd->add_option("--K", o->K, "EM iterations per grid point");
  cmd->add_option("--C", o->C, "penalty tuning constant");
  cmd->add_option("--beta-grid", o->beta_grid, "split-weight grid in (0,.5]")
      ->delimiter(',');
  cmd->add_option("--lambda", o->lambda, "coefficient-difference penalty scale");
  cmd->add_option("--mc-draws", o->mc_draws, "chi-bar Monte Carlo draws");
  cmd->add_option("--seed", o->seed, "master seed");
  cmd->add_option("--threads", o->threads, "worker parallelism bound");
  cmd->add_option("--restarts", o->restarts, "null-fit EM restarts");
  cmd->add_option("--out", o->out, "write the JSON report here");
}

// "a..b" restricts the default tuning grid to [a, b]; otherwise a comma list.
std::vector<double> parse_c_grid(const std::string& text) {
  static const std::vector<double> kDefault = {0.2, 0.4, 0.6, 0.8, 1.0, 1.5,
                                               2.0, 3.0, 5.0, 8.0, 12.0};
  const auto dots = text.find("..");
  if (dots != std::string::npos) {
    const double lo = std::stod(text.substr(0, dots));
    const double hi = std::stod(text.substr(dots + 2));
    std::vector<double> grid;
    for (double c : kDefault)
      if (c >= lo && c <= hi) grid.push_back(c);
    if (grid.empty()) throw InvalidInputError("--c-grid range selects nothing");
    return grid;
  }
  std::vector<double> grid;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) grid.push_back(std::stod(cell));
  if (grid.empty()) throw InvalidInputError("--c-grid is empty");
  return grid;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EM test for the number of latent subgroups in finite mixtures "
               "of generalized linear models"};
  app.require_subcommand(1);

  CommonOpts o;
  int m_max = 5;
  int folds = 5;
  std::string scenario_id, spec_file, c_grid_text = "0.2..12";
  std::vector<double> levels = {0.01, 0.05, 0.1};
  int n_override = 0;

  CLI::App* cmd_test = app.add_subcommand("test", "single test of H0: m = m0");
  add_common_flags(cmd_test, &o, true);
  cmd_test->add_option("--m0", o.m0, "null order under test");

  CLI::App* cmd_seq =
      app.add_subcommand("sequential", "increase m0 until non-rejection");
  add_common_flags(cmd_seq, &o, true);
  cmd_seq->add_option("--level", o.level, "test level");
  cmd_seq->add_option("--m-max", m_max, "largest m0 to try");

  CLI::App* cmd_sim =
      app.add_subcommand("simulate", "Monte Carlo rejection-rate study");
  cmd_sim->add_option("scenario", scenario_id, "builtin scenario id");
  cmd_sim->add_option("--spec", spec_file, "user scenario JSON file");
  cmd_sim->add_option("--n", n_override, "sample size override");
  cmd_sim->add_option("--reps", o.reps, "Monte Carlo replicates");
  cmd_sim->add_option("--levels", levels, "test levels")->delimiter(',');
  cmd_sim->add_option("--m0", o.m0, "override the scenario's test order");
  add_common_flags(cmd_sim, &o, false);

  CLI::App* cmd_tune =
      app.add_subcommand("tune", "choose the penalty constant C");
  cmd_tune->add_option("scenario", scenario_id, "builtin scenario id");
  cmd_tune->add_option("--spec", spec_file, "user scenario JSON file");
  cmd_tune->add_option("--c-grid", c_grid_text, "comma list or lo..hi range");
  cmd_tune->add_option("--n", n_override, "sample size override");
  cmd_tune->add_option("--reps", o.reps, "replicates per C");
  cmd_tune->add_option("--levels", levels, "nominal levels")->delimiter(',');
  add_common_flags(cmd_tune, &o, false);

  CLI::App* cmd_pred = app.add_subcommand(
      "predict", "k-fold cross-validated subgroup prediction (binary response)");
  add_common_flags(cmd_pred, &o, true);
  cmd_pred->add_option("--m0", o.m0, "number of subgroups to fit");
  cmd_pred->add_option("--folds", folds, "cross-validation folds");

  CLI::App* cmd_scen =
      app.add_subcommand("scenarios", "list builtin data-generating scenarios");
  cmd_scen->add_option("--out", o.out, "write the catalog as JSON here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_test->parsed()) {
      const Dataset data = load_dataset(o);
      const TestReport report = run_test(data, o.m0, make_config(o));
      std::cout << test_report_table(report);
      write_output(test_report_json(report), o.out);
    } else if (cmd_seq->parsed()) {
      const Dataset data = load_dataset(o);
      const SequentialResult result =
          sequential_test(data, o.level, m_max, make_config(o));
      std::cout << sequential_result_table(result);
      write_output(sequential_result_json(result), o.out);
      if (!result.error.empty()) return kExitFit;
    } else if (cmd_sim->parsed() || cmd_tune->parsed()) {
      if (o.reps < 1) throw InvalidInputError("--reps must be >= 1");
      ScenarioSpec spec;
      if (!spec_file.empty()) {
        std::ifstream in(spec_file);
        if (!in) throw CsvError("cannot open '" + spec_file + "'");
        std::stringstream ss;
        ss << in.rdbuf();
        spec = scenario_from_json(ss.str());
      } else if (!scenario_id.empty()) {
        spec = find_scenario(scenario_id);
      } else {
        throw InvalidInputError("name a scenario id or pass --spec");
      }
      if (n_override > 0) spec.n = n_override;
      if (cmd_sim->parsed()) {
        const int m0 = cmd_sim->count("--m0") ? o.m0 : spec.test_m0;
        const RejectionTable table =
            monte_carlo_rejection(spec, m0, make_config(o), o.reps, levels);
        std::cout << rejection_table_text(table);
        write_output(rejection_table_json(table, spec.id, m0, o.seed), o.out);
      } else {
        const TuneResult result = tune_c(spec, parse_c_grid(c_grid_text),
                                         levels, o.reps, spec.n, make_config(o));
        std::cout << tune_result_table(result);
        write_output(tune_result_json(result, spec.id, o.seed), o.out);
      }
    } else if (cmd_pred->parsed()) {
      const Dataset data = load_dataset(o);
      TestConfig cfg = make_config(o);
      const PredictReport report =
          cross_validated_predict(data, o.m0, folds, cfg.null_fit, o.seed);
      std::cout << predict_report_table(report);
      write_output(predict_report_json(report, o.seed), o.out);
    } else if (cmd_scen->parsed()) {
      std::cout << scenario_catalog_table();
      if (!o.out.empty()) {
        std::string all = "[\n";
        const auto& reg = list_builtin_scenarios();
        for (std::size_t i = 0; i < reg.size(); ++i)
          all += scenario_to_json(reg[i]) + (i + 1 < reg.size() ? ",\n" : "\n");
        all += "]\n";
        write_output(all, o.out);
      }
    }
  } catch (const CsvError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitParse;
  } catch (const InvalidInputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitParse;
  } catch (const SingularFitError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFit;
  } catch (const SeparationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFit;
  } catch (const DegenerateComponentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFit;
  } catch (const DegeneratePartitionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFit;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return 0;
}
