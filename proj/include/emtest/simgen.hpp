#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "emtest/glm.hpp"

namespace emtest {

struct TestConfig;  // procedure.hpp

enum class CovariateLaw { Uniform01, Uniform5To10 };

// How observations are assigned to components.
enum class MembershipRule {
  Categorical,     // random, by the weight vector
  ThresholdX2,     // deterministic: component 1 iff x2 > 7
  ThresholdSum,    // deterministic: component 1 iff x1 + x2 > 14
  LogisticLatent,  // random, P(component 2) = logistic((1, x)'membership)
};

// Declarative data-generating process. For LogisticLatent the covariates are
// (1, z, x) with z ~ Bernoulli(.5), x ~ N(-1, 1) and the law field unused.
struct ScenarioSpec {
  std::string id;
  std::string description;
  Family family;
  Eigen::VectorXd weights;        // m
  Eigen::MatrixXd thetas;         // m x p
  Eigen::VectorXd gamma;          // q
  CovariateLaw law = CovariateLaw::Uniform01;
  MembershipRule rule = MembershipRule::Categorical;
  Eigen::VectorXd membership;     // LogisticLatent coefficients (2)
  int n = 500;
  int test_m0 = 1;                // null order this scenario is tested at

  void validate() const;
};

struct RejectionRow {
  std::string spec_id;
  double level = 0.0;
  double proportion = 0.0;
  int reps = 0;
  double mc_se = 0.0;
};

struct RejectionTable {
  std::vector<RejectionRow> rows;
  int failures = 0;
};

Dataset generate_scenario(const ScenarioSpec& spec, Rng& rng);

// Same draw sequence; additionally reports the component index of every
// observation.
Dataset generate_scenario(const ScenarioSpec& spec, Rng& rng,
                          std::vector<int>* labels);

// Runs run_test on `reps` independently generated datasets (derived seeds)
// and tabulates the share of p-values at or below each level, with binomial
// Monte Carlo standard errors. Replicate failures are counted; a failure
// rate above 2% fails the run.
RejectionTable monte_carlo_rejection(const ScenarioSpec& spec,
                                     int m0_under_test,
                                     const TestConfig& config, int reps,
                                     const std::vector<double>& levels);

const std::vector<ScenarioSpec>& list_builtin_scenarios();

// Lookup by id; throws InvalidInputError listing valid ids when absent.
const ScenarioSpec& find_scenario(const std::string& id);

std::string scenario_to_json(const ScenarioSpec& spec);
ScenarioSpec scenario_from_json(const std::string& text);

}  // namespace emtest
