#include "emtest/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace emtest {

namespace {

constexpr double kAlphaFloor = 1e-6;
constexpr int kMaxFloorHits = 50;

double logsumexp_row(const Eigen::RowVectorXd& row) {
  const double m = row.maxCoeff();
  if (!std::isfinite(m))
    throw DegenerateLikelihoodError(
        "mixture density underflowed at an observation");
  return m + std::log((row.array() - m).exp().sum());
}

struct EmRun {
  MixingDistribution psi;
  Eigen::VectorXd gamma;
  double loglik = -std::numeric_limits<double>::infinity();
  Eigen::MatrixXd resp;
  bool converged = false;
  int iterations = 0;
  bool degenerate = false;
  bool failed = false;
};

// One joint GLM fit of (X, Z); the exact null MLE for m0 = 1.
void joint_single_fit(const Dataset& data, Eigen::VectorXd* theta,
                      Eigen::VectorXd* gamma) {
  const Eigen::Index n = data.n(), p = data.p(), q = data.q();
  Eigen::MatrixXd design(n, p + q);
  design.leftCols(p) = data.X;
  if (q > 0) design.rightCols(q) = data.Z;
  const Eigen::VectorXd coef = fit_weighted_glm(
      data.family, data.y, design, Eigen::VectorXd::Ones(n),
      Eigen::VectorXd::Zero(n));
  *theta = coef.head(p);
  *gamma = coef.tail(q);
}

// M-step from a fixed responsibility matrix. gamma may be empty (q = 0).
void m_step(const Dataset& data, const Eigen::MatrixXd& resp,
            Eigen::VectorXd* alphas, Eigen::MatrixXd* thetas,
            Eigen::VectorXd* gamma) {
  const Eigen::Index n = data.n(), p = data.p(), q = data.q();
  const Eigen::Index m = resp.cols();
  *alphas = resp.colwise().mean();

  const Eigen::VectorXd z_off =
      q > 0 ? Eigen::VectorXd(data.Z * *gamma) : Eigen::VectorXd::Zero(n);
  for (Eigen::Index h = 0; h < m; ++h)
    thetas->row(h) =
        fit_weighted_glm(data.family, data.y, data.X, resp.col(h), z_off)
            .transpose();

  if (q > 0) {
    // Shared-effect update on the component-replicated data.
    Eigen::VectorXd y_rep(n * m), w_rep(n * m), off_rep(n * m);
    Eigen::MatrixXd z_rep(n * m, q);
    for (Eigen::Index h = 0; h < m; ++h) {
      y_rep.segment(h * n, n) = data.y;
      w_rep.segment(h * n, n) = resp.col(h);
      off_rep.segment(h * n, n) = data.X * thetas->row(h).transpose();
      z_rep.middleRows(h * n, n) = data.Z;
    }
    *gamma = fit_weighted_glm(data.family, y_rep, z_rep, w_rep, off_rep);
  }
}

EmRun run_em(const Dataset& data, int m0, const NullFitConfig& cfg,
             Eigen::VectorXd alphas, Eigen::MatrixXd thetas,
             Eigen::VectorXd gamma, bool start_with_m_step,
             const Eigen::MatrixXd& start_resp) {
  EmRun run;
  try {
    int floor_hits = 0;
    if (start_with_m_step) m_step(data, start_resp, &alphas, &thetas, &gamma);

    double prev = -std::numeric_limits<double>::infinity();
    for (int iter = 1; iter <= cfg.max_iterations; ++iter) {
      const Eigen::MatrixXd logf = component_log_densities(thetas, gamma, data);
      Eigen::MatrixXd resp(data.n(), m0);
      double ll = 0.0;
      const Eigen::RowVectorXd log_alpha =
          alphas.array().log().matrix().transpose();
      for (Eigen::Index i = 0; i < data.n(); ++i) {
        const Eigen::RowVectorXd row = logf.row(i) + log_alpha;
        const double lse = logsumexp_row(row);
        ll += lse;
        resp.row(i) = (row.array() - lse).exp();
      }

      run.iterations = iter;
      run.loglik = ll;
      run.resp = resp;
      if (std::abs(ll - prev) < cfg.rel_tol * (1.0 + std::abs(ll))) {
        run.converged = true;
        break;
      }
      prev = ll;

      m_step(data, resp, &alphas, &thetas, &gamma);
      if (alphas.minCoeff() < kAlphaFloor) {
        alphas = alphas.cwiseMax(kAlphaFloor);
        alphas /= alphas.sum();
        if (++floor_hits >= kMaxFloorHits) {
          run.degenerate = true;
          break;
        }
      }
    }
    run.psi.alphas = alphas;
    run.psi.thetas = thetas;
    run.gamma = gamma;
    if (!run.converged) {
      // The loop ended after an M-step; re-evaluate at the final parameters.
      const Eigen::MatrixXd logf = component_log_densities(thetas, gamma, data);
      const Eigen::RowVectorXd log_alpha =
          alphas.array().log().matrix().transpose();
      double ll = 0.0;
      Eigen::MatrixXd resp(data.n(), m0);
      for (Eigen::Index i = 0; i < data.n(); ++i) {
        const Eigen::RowVectorXd row = logf.row(i) + log_alpha;
        const double lse = logsumexp_row(row);
        ll += lse;
        resp.row(i) = (row.array() - lse).exp();
      }
      run.loglik = ll;
      run.resp = resp;
    }
    if (!run.degenerate && alphas.minCoeff() < 2.0 * kAlphaFloor)
      run.degenerate = true;
  } catch (const Error&) {
    run.failed = true;
  }
  return run;
}

}  // namespace

void MixingDistribution::validate() const {
  if (components() < 1 || thetas.rows() != components())
    throw InvalidInputError("MixingDistribution: dimension mismatch");
  if (alphas.minCoeff() < 0.0 || std::abs(alphas.sum() - 1.0) > 1e-10)
    throw InvalidInputError("MixingDistribution: weights must sum to one");
}

Eigen::MatrixXd component_log_densities(const Eigen::MatrixXd& thetas,
                                        const Eigen::VectorXd& gamma,
                                        const Dataset& data) {
  const Eigen::Index n = data.n(), m = thetas.rows();
  const Eigen::VectorXd z_off =
      data.q() > 0 ? Eigen::VectorXd(data.Z * gamma) : Eigen::VectorXd::Zero(n);
  Eigen::MatrixXd logf(n, m);
  for (Eigen::Index h = 0; h < m; ++h) {
    const Eigen::VectorXd eta = data.X * thetas.row(h).transpose() + z_off;
    logf.col(h) = log_density_vec(data.family, data.y, eta);
  }
  return logf;
}

double mixture_loglik(const MixingDistribution& psi,
                      const Eigen::VectorXd& gamma, const Dataset& data) {
  psi.validate();
  const Eigen::MatrixXd logf = component_log_densities(psi.thetas, gamma, data);
  const Eigen::RowVectorXd log_alpha =
      psi.alphas.array().log().matrix().transpose();
  double ll = 0.0;
  for (Eigen::Index i = 0; i < data.n(); ++i)
    ll += logsumexp_row(logf.row(i) + log_alpha);
  return ll;
}

Eigen::MatrixXd responsibilities(const MixingDistribution& psi,
                                 const Eigen::VectorXd& gamma,
                                 const Dataset& data) {
  psi.validate();
  const Eigen::MatrixXd logf = component_log_densities(psi.thetas, gamma, data);
  const Eigen::RowVectorXd log_alpha =
      psi.alphas.array().log().matrix().transpose();
  Eigen::MatrixXd resp(data.n(), psi.components());
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    const Eigen::RowVectorXd row = logf.row(i) + log_alpha;
    resp.row(i) = (row.array() - logsumexp_row(row)).exp();
  }
  return resp;
}

MixingDistribution canonical_order(const MixingDistribution& psi) {
  const Eigen::Index m = psi.components();
  std::vector<Eigen::Index> idx(m);
  std::iota(idx.begin(), idx.end(), 0);
  const Eigen::VectorXd sums = psi.thetas.rowwise().sum();
  std::sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) {
    if (sums[a] != sums[b]) return sums[a] < sums[b];
    for (Eigen::Index k = 0; k < psi.thetas.cols(); ++k)
      if (psi.thetas(a, k) != psi.thetas(b, k))
        return psi.thetas(a, k) < psi.thetas(b, k);
    return psi.alphas[a] > psi.alphas[b];
  });
  MixingDistribution out;
  out.alphas.resize(m);
  out.thetas.resize(m, psi.thetas.cols());
  for (Eigen::Index r = 0; r < m; ++r) {
    out.alphas[r] = psi.alphas[idx[r]];
    out.thetas.row(r) = psi.thetas.row(idx[r]);
  }
  return out;
}

NullFit fit_null(const Dataset& data, int m0, const NullFitConfig& cfg) {
  data.validate();
  if (m0 < 1) throw InvalidInputError("fit_null: m0 must be >= 1");
  if (data.n() <= m0 * data.p() + data.q())
    throw InvalidInputError("fit_null: n too small for identifiability");

  const Eigen::Index n = data.n(), p = data.p(), q = data.q();

  if (m0 == 1) {
    // The order-1 likelihood is a plain GLM likelihood; its maximizer is the
    // joint fit, no EM needed.
    NullFit fit;
    Eigen::VectorXd theta, gamma;
    joint_single_fit(data, &theta, &gamma);
    fit.psi.alphas = Eigen::VectorXd::Ones(1);
    fit.psi.thetas = theta.transpose();
    fit.gamma = gamma;
    fit.loglik = mixture_loglik(fit.psi, fit.gamma, data);
    fit.responsibilities = Eigen::MatrixXd::Ones(n, 1);
    fit.converged = true;
    fit.iterations = 1;
    return fit;
  }

  std::vector<EmRun> runs;
  runs.reserve(cfg.restarts);
  for (int r = 0; r < cfg.restarts; ++r) {
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(r)));
    if (r == 0) {
      // Deterministic start: spread the single-fit coefficients by
      // component-specific shifts on every coordinate.
      Eigen::VectorXd theta0, gamma0;
      try {
        joint_single_fit(data, &theta0, &gamma0);
      } catch (const Error&) {
        theta0 = Eigen::VectorXd::Zero(p);
        gamma0 = Eigen::VectorXd::Zero(q);
      }
      Eigen::MatrixXd thetas(m0, p);
      for (int h = 0; h < m0; ++h)
        thetas.row(h) = (theta0.array() + 0.5 * ((h + 1) - 0.5 * (m0 + 1)))
                            .matrix()
                            .transpose();
      runs.push_back(run_em(data, m0, cfg,
                            Eigen::VectorXd::Constant(m0, 1.0 / m0), thetas,
                            gamma0, false, Eigen::MatrixXd()));
    } else {
      // Flat-Dirichlet responsibilities, then an M-step.
      Eigen::MatrixXd resp(n, m0);
      for (Eigen::Index i = 0; i < n; ++i) {
        double s = 0.0;
        for (int h = 0; h < m0; ++h) {
          resp(i, h) = -std::log(1.0 - rng.uniform());
          s += resp(i, h);
        }
        resp.row(i) /= s;
      }
      runs.push_back(run_em(data, m0, cfg,
                            Eigen::VectorXd::Constant(m0, 1.0 / m0),
                            Eigen::MatrixXd::Zero(m0, p),
                            Eigen::VectorXd::Zero(q), true, resp));
    }
  }

  const EmRun* best = nullptr;
  for (const EmRun& run : runs)
    if (!run.failed && !run.degenerate &&
        (best == nullptr || run.loglik > best->loglik))
      best = &run;
  if (best == nullptr) {
    double best_ll = -std::numeric_limits<double>::infinity();
    for (const EmRun& run : runs)
      if (!run.failed) best_ll = std::max(best_ll, run.loglik);
    throw DegenerateComponentError(
        "fit_null: every restart collapsed a component (best degenerate "
        "loglik " +
        std::to_string(best_ll) + ")");
  }

  NullFit fit;
  fit.gamma = best->gamma;
  fit.loglik = best->loglik;
  fit.converged = best->converged;
  fit.iterations = best->iterations;

  // Resolve label switching globally; responsibilities follow the same
  // permutation.
  fit.psi = canonical_order(best->psi);
  const Eigen::VectorXd sums_in = best->psi.thetas.rowwise().sum();
  const Eigen::VectorXd sums_out = fit.psi.thetas.rowwise().sum();
  fit.responsibilities.resize(n, m0);
  std::vector<bool> used(m0, false);
  for (int h = 0; h < m0; ++h) {
    for (int j = 0; j < m0; ++j) {
      if (!used[j] && sums_out[h] == sums_in[j] &&
          fit.psi.alphas[h] == best->psi.alphas[j] &&
          fit.psi.thetas.row(h) == best->psi.thetas.row(j)) {
        fit.responsibilities.col(h) = best->resp.col(j);
        used[j] = true;
        break;
      }
    }
  }
  return fit;
}

}  // namespace emtest
