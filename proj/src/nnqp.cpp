#include "emtest/nnqp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace emtest {

namespace {

constexpr double kSupportTol = 1e-12;

void check_input(const Eigen::VectorXd& w, const Eigen::MatrixXd& Q) {
  const Eigen::Index d = w.size();
  if (d < 1 || Q.rows() != d || Q.cols() != d)
    throw InvalidInputError("nnqp: dimension mismatch");
  const double scale = std::max(1.0, Q.cwiseAbs().maxCoeff());
  if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale)
    throw InvalidInputError("nnqp: Q not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Q,
                                                    Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() <= 1e-10)
    throw InvalidInputError(
        "nnqp: Q must be positive definite (min eigenvalue > 1e-10)");
}

NnqpSolution finish(const Eigen::VectorXd& w, const Eigen::MatrixXd& Q,
                    const Eigen::VectorXd& v) {
  NnqpSolution sol;
  sol.v = v;
  for (int k = 0; k < v.size(); ++k)
    if (v[k] > kSupportTol) sol.support.push_back(k);
  sol.objective = 2.0 * v.dot(w) - v.dot(Q * v);
  return sol;
}

Eigen::VectorXd solve_on_support(const Eigen::MatrixXd& Q,
                                 const Eigen::VectorXd& w,
                                 const std::vector<int>& S) {
  const int s = static_cast<int>(S.size());
  Eigen::MatrixXd Qss(s, s);
  Eigen::VectorXd ws(s);
  for (int a = 0; a < s; ++a) {
    ws[a] = w[S[a]];
    for (int b = 0; b < s; ++b) Qss(a, b) = Q(S[a], S[b]);
  }
  return Qss.ldlt().solve(ws);
}

}  // namespace

NnqpSolution solve_nnqp(const Eigen::VectorXd& w, const Eigen::MatrixXd& Q) {
  check_input(w, Q);
  const int d = static_cast<int>(w.size());
  const double gtol = 1e-11 * std::max(1.0, w.cwiseAbs().maxCoeff());

  Eigen::VectorXd v = Eigen::VectorXd::Zero(d);
  std::vector<bool> passive(d, false);
  std::vector<int> P;
  Eigen::VectorXd grad = w;  // w - Qv at v = 0

  const int max_pivots = 3 * d * d + 10;
  int pivots = 0;
  while (true) {
    // Most violated dual coordinate outside the passive set.
    int enter = -1;
    double best = gtol;
    for (int k = 0; k < d; ++k)
      if (!passive[k] && grad[k] > best) {
        best = grad[k];
        enter = k;
      }
    if (enter < 0) break;
    passive[enter] = true;
    P.push_back(enter);

    while (true) {
      if (++pivots > max_pivots)
        throw ConvergenceError("solve_nnqp: pivot cap exceeded");
      Eigen::VectorXd z = solve_on_support(Q, w, P);
      bool interior = true;
      for (int a = 0; a < static_cast<int>(P.size()); ++a)
        if (z[a] <= 0.0) interior = false;
      if (interior) {
        v.setZero();
        for (int a = 0; a < static_cast<int>(P.size()); ++a) v[P[a]] = z[a];
        break;
      }
      // Step toward z until the first passive coordinate hits zero.
      double alpha = std::numeric_limits<double>::infinity();
      for (int a = 0; a < static_cast<int>(P.size()); ++a)
        if (z[a] <= 0.0) {
          const double va = v[P[a]];
          alpha = std::min(alpha, va / (va - z[a]));
        }
      alpha = std::max(0.0, std::min(1.0, alpha));
      for (int a = 0; a < static_cast<int>(P.size()); ++a)
        v[P[a]] += alpha * (z[a] - v[P[a]]);
      std::vector<int> keep;
      for (int a = 0; a < static_cast<int>(P.size()); ++a) {
        if (v[P[a]] <= kSupportTol) {
          passive[P[a]] = false;
          v[P[a]] = 0.0;
        } else {
          keep.push_back(P[a]);
        }
      }
      P = keep;
      if (P.empty()) {
        v.setZero();
        break;
      }
    }
    grad = w - Q * v;
  }
  return finish(w, Q, v);
}

NnqpSolution brute_force_nnqp(const Eigen::VectorXd& w,
                              const Eigen::MatrixXd& Q) {
  check_input(w, Q);
  const int d = static_cast<int>(w.size());
  if (d > 16)
    throw InvalidInputError("brute_force_nnqp: refusing d > 16 (2^d supports)");

  Eigen::VectorXd best_v = Eigen::VectorXd::Zero(d);
  double best_obj = 0.0;  // empty support
  for (unsigned mask = 1; mask < (1u << d); ++mask) {
    std::vector<int> S;
    for (int k = 0; k < d; ++k)
      if (mask & (1u << k)) S.push_back(k);
    const Eigen::VectorXd z = solve_on_support(Q, w, S);
    if ((z.array() <= 0.0).any()) continue;  // not a feasible face optimum
    Eigen::VectorXd v = Eigen::VectorXd::Zero(d);
    for (int a = 0; a < static_cast<int>(S.size()); ++a) v[S[a]] = z[a];
    const double obj = 2.0 * v.dot(w) - v.dot(Q * v);
    if (obj > best_obj) {
      best_obj = obj;
      best_v = v;
    }
  }
  return finish(w, Q, best_v);
}

}  // namespace emtest
