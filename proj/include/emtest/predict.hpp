#pragma once

#include <string>
#include <vector>

#include "emtest/mixture.hpp"

namespace emtest {

struct FoldMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double auc = 0.0;
  int n_test = 0;
  bool failed = false;
  std::string error;
};

struct PredictReport {
  int m = 0;
  int folds = 0;
  std::vector<FoldMetrics> per_fold;
  FoldMetrics aggregate;               // means over successful folds
  std::vector<int> assignment_counts;  // test-time subgroup sizes, pooled
  Eigen::MatrixXd coefficients;        // m x p from a full-data fit
  Eigen::VectorXd gamma;
  std::string assignment_rule;
  int failed_folds = 0;
};

// K-fold cross-validated subgroup prediction for a binary response: per
// fold, fit the m-component mixture on the training split, route each test
// observation to the subgroup whose responsibility-weighted training
// centroid (in x-space) is nearest, and score that subgroup's GLM
// prediction. Threshold metrics use 0.5; AUC is the rank statistic over
// predicted probabilities. Degenerate metric corners fall back to 0 (no
// predicted/actual positives) and 0.5 (single-class AUC).
PredictReport cross_validated_predict(const Dataset& data, int m, int folds,
                                      const NullFitConfig& fit_config,
                                      std::uint64_t seed);

}  // namespace emtest
