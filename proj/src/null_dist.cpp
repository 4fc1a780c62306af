#include "emtest/null_dist.hpp"

#include <cmath>
#include <iostream>
#include <vector>

#include "emtest/nnqp.hpp"
#include "emtest/parallel.hpp"
#include "emtest/rng.hpp"

namespace emtest {

namespace {

double logsumexp_row(const Eigen::RowVectorXd& row) {
  const double m = row.maxCoeff();
  if (!std::isfinite(m))
    throw DegenerateLikelihoodError(
        "mixture density underflowed at an observation");
  return m + std::log((row.array() - m).exp().sum());
}

Eigen::MatrixXd centered(const Eigen::MatrixXd& M) {
  return M.rowwise() - M.colwise().mean();
}

}  // namespace

ScoreVectors score_vectors(const NullFit& nullfit, const Dataset& data) {
  const Eigen::Index n = data.n(), p = data.p();
  const Eigen::Index m0 = nullfit.psi.components();
  const Eigen::MatrixXd logf =
      component_log_densities(nullfit.psi.thetas, nullfit.gamma, data);
  const Eigen::RowVectorXd log_alpha =
      nullfit.psi.alphas.array().log().matrix().transpose();

  const Eigen::VectorXd z_off =
      data.q() > 0 ? Eigen::VectorXd(data.Z * nullfit.gamma)
                   : Eigen::VectorXd::Zero(n);

  ScoreVectors sv;
  sv.b1.resize(n, m0 - 1 + m0 * p);
  sv.b2.resize(n, m0 * p);

  for (Eigen::Index i = 0; i < n; ++i) {
    const double logmix = logsumexp_row(logf.row(i) + log_alpha);
    // ratio_h = f_ih / f_mix (the component density itself, not weighted).
    Eigen::VectorXd ratio(m0);
    for (Eigen::Index h = 0; h < m0; ++h)
      ratio[h] = std::exp(logf(i, h) - logmix);

    for (Eigen::Index h = 0; h + 1 < m0; ++h)
      sv.b1(i, h) = ratio[h] - ratio[m0 - 1];

    for (Eigen::Index h = 0; h < m0; ++h) {
      const double eta_ih =
          data.X.row(i).dot(nullfit.psi.thetas.row(h)) + z_off[i];
      const EtaRatios r = eta_derivative_ratios(data.family, data.y[i], eta_ih);
      for (Eigen::Index k = 0; k < p; ++k) {
        sv.b1(i, m0 - 1 + h * p + k) = ratio[h] * r.score * data.X(i, k);
        sv.b2(i, h * p + k) =
            ratio[h] * r.curvature * data.X(i, k) * data.X(i, k);
      }
    }
  }
  if (!sv.b1.allFinite() || !sv.b2.allFinite())
    throw NumericalError("score_vectors: non-finite score entry");
  return sv;
}

Eigen::MatrixXd tilde_b22(const ScoreVectors& scores) {
  const Eigen::Index n = scores.b1.rows();
  const Eigen::Index d1 = scores.b1.cols(), d2 = scores.b2.cols();
  if (n <= d1)
    throw InvalidInputError("tilde_b22: need more observations than b1 columns");

  const Eigen::MatrixXd c1 = centered(scores.b1);
  const Eigen::MatrixXd c2 = centered(scores.b2);
  const double inv_n = 1.0 / static_cast<double>(n);
  const Eigen::MatrixXd B11 = inv_n * (c1.transpose() * c1);
  const Eigen::MatrixXd B21 = inv_n * (c2.transpose() * c1);
  const Eigen::MatrixXd B22 = inv_n * (c2.transpose() * c2);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(B11);
  const Eigen::VectorXd ev = es.eigenvalues();
  const double cutoff = 1e-10 * ev.maxCoeff();
  Eigen::VectorXd inv_ev(d1);
  bool truncated = false;
  for (Eigen::Index k = 0; k < d1; ++k) {
    if (ev[k] > cutoff) {
      inv_ev[k] = 1.0 / ev[k];
    } else {
      inv_ev[k] = 0.0;
      truncated = true;
    }
  }
  if (truncated)
    std::cerr << "warning: tilde_b22 truncated a near-singular direction of "
                 "B11 (pseudo-inverse)\n";
  const Eigen::MatrixXd B11_pinv =
      es.eigenvectors() * inv_ev.asDiagonal() * es.eigenvectors().transpose();

  Eigen::MatrixXd out = B22 - B21 * B11_pinv * B21.transpose();
  out = 0.5 * (out + out.transpose());
  if (!out.allFinite()) throw NumericalError("tilde_b22: non-finite result");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> check(out,
                                                       Eigen::EigenvaluesOnly);
  if (check.eigenvalues().minCoeff() < 1e-10) {
    // Absolute floor keeps zero-information fits (saturated likelihoods)
    // solvable; a trace-proportional ridge alone vanishes with the matrix.
    const double ridge =
        1e-8 * std::max(out.trace() / static_cast<double>(d2), 1.0);
    out.diagonal().array() += ridge;
  }
  return out;
}

ChiBarWeights estimate_chibar_weights(const Eigen::MatrixXd& b22, int N,
                                      std::uint64_t seed, int threads) {
  const Eigen::Index d = b22.rows();
  if (N < 1) throw InvalidInputError("estimate_chibar_weights: N must be >= 1");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(b22);
  if (es.eigenvalues().minCoeff() < -1e-10 * std::abs(es.eigenvalues().maxCoeff()))
    throw InvalidInputError("estimate_chibar_weights: b22 not PSD");
  const Eigen::MatrixXd root =
      es.eigenvectors() *
      es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
      es.eigenvectors().transpose();

  std::vector<int> sizes(N);
  parallel_for(N, threads, [&](std::int64_t j) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(j)));
    const Eigen::VectorXd w = root * rng.normal_vector(static_cast<int>(d));
    const NnqpSolution sol = solve_nnqp(w, b22);
    sizes[j] = static_cast<int>(sol.support.size());
  });

  Eigen::VectorXd counts = Eigen::VectorXd::Zero(d + 1);
  for (int s : sizes) counts[s] += 1.0;
  ChiBarWeights weights;
  weights.a = counts / static_cast<double>(N);
  weights.mc_draws = N;
  weights.seed = seed;
  return weights;
}

double chisq_upper_tail(int df, double t) {
  if (df < 0) throw InvalidInputError("chisq_upper_tail: negative df");
  if (df == 0) return t > 0.0 ? 0.0 : 1.0;
  if (t <= 0.0) return 1.0;
  // Ascend df by two, starting from the closed forms for df = 1 and 2:
  // Q_{k+2}(t) = Q_k(t) + (t/2)^{k/2} e^{-t/2} / Gamma(k/2 + 1).
  const double half_t = 0.5 * t;
  double q;
  int k;
  if (df % 2 == 1) {
    q = std::erfc(std::sqrt(half_t));
    k = 1;
  } else {
    q = std::exp(-half_t);
    k = 2;
  }
  while (k < df) {
    q += std::exp(0.5 * k * std::log(half_t) - half_t -
                  std::lgamma(0.5 * k + 1.0));
    k += 2;
  }
  return std::min(1.0, q);
}

double chibar_pvalue(double t, const ChiBarWeights& weights) {
  if (!std::isfinite(t)) throw InvalidInputError("chibar_pvalue: t not finite");
  double p = 0.0;
  for (Eigen::Index s = 0; s < weights.a.size(); ++s)
    p += weights.a[s] * chisq_upper_tail(static_cast<int>(s), t);
  return std::min(1.0, std::max(0.0, p));
}

}  // namespace emtest
