#include "emtest/predict.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "emtest/rng.hpp"

namespace emtest {

namespace {

Dataset subset(const Dataset& data, const std::vector<int>& idx) {
  Dataset out;
  out.family = data.family;
  out.y.resize(idx.size());
  out.X.resize(idx.size(), data.p());
  out.Z.resize(idx.size(), data.q());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    out.y[r] = data.y[idx[r]];
    out.X.row(r) = data.X.row(idx[r]);
    if (data.q() > 0) out.Z.row(r) = data.Z.row(idx[r]);
  }
  return out;
}

// Mann-Whitney AUC with midranks for ties.
double rank_auc(const std::vector<double>& score, const std::vector<int>& y) {
  const std::size_t n = score.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return score[a] < score[b]; });
  std::vector<double> rank(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && score[order[j + 1]] == score[order[i]]) ++j;
    const double mid = 0.5 * (i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    i = j + 1;
  }
  double rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t k = 0; k < n; ++k)
    if (y[k] == 1) {
      rank_sum += rank[k];
      ++pos;
    }
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) return 0.5;
  return (rank_sum - 0.5 * pos * (pos + 1)) / (static_cast<double>(pos) * neg);
}

}  // namespace

PredictReport cross_validated_predict(const Dataset& data, int m, int folds,
                                      const NullFitConfig& fit_config,
                                      std::uint64_t seed) {
  data.validate();
  if (data.family.kind != FamilyKind::BernoulliLogit)
    throw InvalidInputError("cross_validated_predict: binary response required");
  if (m < 1) throw InvalidInputError("cross_validated_predict: m must be >= 1");
  if (folds < 2 || folds > static_cast<int>(data.n()))
    throw InvalidInputError("cross_validated_predict: bad fold count");

  const Eigen::Index n = data.n(), p = data.p();

  // Deterministic shuffled fold assignment.
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(derive_seed(seed, 0xF01D));
  for (Eigen::Index i = n - 1; i > 0; --i) {
    const auto j = static_cast<Eigen::Index>(rng.uniform() * (i + 1));
    std::swap(perm[i], perm[j]);
  }

  PredictReport report;
  report.m = m;
  report.folds = folds;
  report.assignment_counts.assign(m, 0);
  report.assignment_rule = "nearest responsibility-weighted training centroid in x";

  double acc = 0, prec = 0, rec = 0, f1 = 0, auc = 0;
  int ok = 0;

  for (int f = 0; f < folds; ++f) {
    std::vector<int> train_idx, test_idx;
    for (Eigen::Index i = 0; i < n; ++i)
      (static_cast<int>(i) % folds == f ? test_idx : train_idx)
          .push_back(perm[i]);

    FoldMetrics fm;
    fm.n_test = static_cast<int>(test_idx.size());
    try {
      const Dataset train = subset(data, train_idx);
      const Dataset test = subset(data, test_idx);
      NullFitConfig cfg = fit_config;
      cfg.seed = derive_seed(seed, 100 + f);
      const NullFit fit = fit_null(train, m, cfg);

      // Responsibility-weighted x centroids of the training subgroups.
      Eigen::MatrixXd centroids(m, p);
      for (int h = 0; h < m; ++h) {
        const Eigen::VectorXd& r = fit.responsibilities.col(h);
        centroids.row(h) =
            (r.transpose() * train.X) / std::max(r.sum(), 1e-300);
      }

      int tp = 0, tn = 0, fp = 0, fn = 0;
      std::vector<double> prob(test_idx.size());
      std::vector<int> truth(test_idx.size());
      for (std::size_t t = 0; t < test_idx.size(); ++t) {
        int best_h = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (int h = 0; h < m; ++h) {
          const double d = (test.X.row(t) - centroids.row(h)).squaredNorm();
          if (d < best_d) {
            best_d = d;
            best_h = h;
          }
        }
        report.assignment_counts[best_h]++;
        double eta = test.X.row(t).dot(fit.psi.thetas.row(best_h));
        if (data.q() > 0) eta += test.Z.row(t).dot(fit.gamma);
        prob[t] = logistic(eta);
        truth[t] = test.y[t] == 1.0 ? 1 : 0;
        const int pred = prob[t] >= 0.5 ? 1 : 0;
        if (pred && truth[t]) ++tp;
        if (pred && !truth[t]) ++fp;
        if (!pred && truth[t]) ++fn;
        if (!pred && !truth[t]) ++tn;
      }
      fm.accuracy = static_cast<double>(tp + tn) / fm.n_test;
      fm.precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
      fm.recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
      fm.f1 = fm.precision + fm.recall > 0.0
                  ? 2.0 * fm.precision * fm.recall / (fm.precision + fm.recall)
                  : 0.0;
      fm.auc = rank_auc(prob, truth);

      acc += fm.accuracy;
      prec += fm.precision;
      rec += fm.recall;
      f1 += fm.f1;
      auc += fm.auc;
      ++ok;
    } catch (const Error& e) {
      fm.failed = true;
      fm.error = e.what();
      ++report.failed_folds;
    }
    report.per_fold.push_back(std::move(fm));
  }

  if (ok == 0)
    throw DegenerateComponentError(
        "cross_validated_predict: every fold failed to fit");
  report.aggregate.accuracy = acc / ok;
  report.aggregate.precision = prec / ok;
  report.aggregate.recall = rec / ok;
  report.aggregate.f1 = f1 / ok;
  report.aggregate.auc = auc / ok;
  report.aggregate.n_test = static_cast<int>(n);

  // Full-data coefficient table for the report.
  NullFitConfig cfg = fit_config;
  cfg.seed = derive_seed(seed, 7);
  const NullFit full = fit_null(data, m, cfg);
  report.coefficients = full.psi.thetas;
  report.gamma = full.gamma;
  return report;
}

}  // namespace emtest
