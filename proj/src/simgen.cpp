#include "emtest/simgen.hpp"

#include <mutex>

#include <json.hpp>

#include "emtest/parallel.hpp"
#include "emtest/procedure.hpp"

namespace emtest {

namespace {

using nlohmann::json;

Eigen::VectorXd rowvec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

Eigen::MatrixXd rows(std::initializer_list<std::initializer_list<double>> r) {
  const Eigen::Index m = static_cast<Eigen::Index>(r.size());
  const Eigen::Index p = static_cast<Eigen::Index>(r.begin()->size());
  Eigen::MatrixXd out(m, p);
  Eigen::Index i = 0;
  for (const auto& row : r) {
    Eigen::Index k = 0;
    for (double x : row) out(i, k++) = x;
    ++i;
  }
  return out;
}

ScenarioSpec mixture_spec(std::string id, std::string desc, Family family,
                          CovariateLaw law, Eigen::VectorXd weights,
                          Eigen::MatrixXd thetas, Eigen::VectorXd gamma,
                          int n, int test_m0) {
  ScenarioSpec s;
  s.id = std::move(id);
  s.description = std::move(desc);
  s.family = family;
  s.law = law;
  s.weights = std::move(weights);
  s.thetas = std::move(thetas);
  s.gamma = std::move(gamma);
  s.n = n;
  s.test_m0 = test_m0;
  return s;
}

ScenarioSpec shen_spec(std::string id, double a, double b, double c,
                       bool null_case) {
  // Outcome model: y = (1, z, x)'(beta1 + delta * beta2) + N(0, 0.5^2) with
  // latent membership P(delta = 1) = logistic(g0 + g1 x).
  ScenarioSpec s;
  s.id = std::move(id);
  s.family = Family::normal(0.5);
  s.rule = MembershipRule::LogisticLatent;
  s.n = 100;
  s.test_m0 = 1;
  const Eigen::VectorXd beta1 = rowvec({1.0, 0.0, 2.0});
  const Eigen::VectorXd beta2 =
      null_case ? rowvec({0.0, 0.0, 0.0}) : rowvec({1.0, a, b});
  s.thetas.resize(2, 3);
  s.thetas.row(0) = beta1.transpose();
  s.thetas.row(1) = (beta1 + beta2).transpose();
  s.weights = rowvec({0.5, 0.5});  // informational; membership is latent
  s.membership = null_case ? rowvec({0.0, 0.0}) : rowvec({1.0, c});
  s.gamma.resize(0);
  s.description =
      null_case
          ? "latent-membership normal outcome, identical components (no "
            "subgroup)"
          : "latent-membership normal outcome, second component shifted by "
            "(1," +
                std::to_string(a) + "," + std::to_string(b) +
                "), membership slope " + std::to_string(c);
  return s;
}

std::vector<ScenarioSpec> build_registry() {
  std::vector<ScenarioSpec> reg;
  const Family norm1 = Family::normal(1.0);
  const Family logit = Family::logit();
  const CovariateLaw u01 = CovariateLaw::Uniform01;
  const CovariateLaw u510 = CovariateLaw::Uniform5To10;
  const Eigen::VectorXd g1 = rowvec({1.0});
  const Eigen::VectorXd g0;

  // Normal mixtures: two subgroup covariates plus one shared covariate, all
  // uniform on (0,1), unit error variance.
  reg.push_back(mixture_spec("normal-s1-null",
                             "one normal component, coefficients (3,5), "
                             "shared effect 1",
                             norm1, u01, rowvec({1.0}), rows({{3, 5}}), g1,
                             500, 1));
  reg.push_back(mixture_spec("normal-s1-weak",
                             "two close normal components against the "
                             "one-component null",
                             norm1, u01, rowvec({.8, .2}),
                             rows({{3, 5}, {3, 3}}), g1, 500, 1));
  reg.push_back(mixture_spec("normal-s1-strong",
                             "two well-separated normal components against "
                             "the one-component null",
                             norm1, u01, rowvec({.6, .4}),
                             rows({{3, 5}, {3, -5}}), g1, 500, 1));
  reg.push_back(mixture_spec("normal-s2-null",
                             "two normal components (.4,.6), coefficients "
                             "(1,6) and (2,-6)",
                             norm1, u01, rowvec({.4, .6}),
                             rows({{1, 6}, {2, -6}}), g1, 500, 2));
  reg.push_back(mixture_spec("normal-s2-weak",
                             "three normal components against the "
                             "two-component null",
                             norm1, u01, rowvec({.4, .4, .2}),
                             rows({{1, 6}, {2, -6}, {3, -5.5}}), g1, 500, 2));
  reg.push_back(mixture_spec("normal-s2-strong",
                             "four spread normal components against the "
                             "two-component null",
                             norm1, u01, rowvec({.25, .25, .25, .25}),
                             rows({{1, 6}, {2, -6}, {3, 5}, {6, -6}}), g1,
                             500, 2));
  reg.push_back(mixture_spec("normal-s3-null",
                             "three normal components (.4,.3,.3)", norm1, u01,
                             rowvec({.4, .3, .3}),
                             rows({{1, 6}, {2, -6}, {-2, 3}}), g1, 500, 3));
  reg.push_back(mixture_spec("normal-s3-weak",
                             "four normal components against the "
                             "three-component null",
                             norm1, u01, rowvec({.2, .2, .3, .3}),
                             rows({{1, 6}, {1, -4}, {2, -6}, {-2, 3}}), g1,
                             500, 3));
  reg.push_back(mixture_spec(
      "normal-s3-strong",
      "six normal components against the three-component null", norm1, u01,
      rowvec({.2, .2, .1, .2, .2, .1}),
      rows({{1, 6}, {1, -4}, {2, -6}, {-2, 3}, {-5, -4}, {5, 5}}), g1, 500,
      3));

  // Logistic mixtures: two subgroup covariates uniform on (5,10), no shared
  // covariate, no intercept.
  reg.push_back(mixture_spec("logit-s1-null",
                             "one logistic component, coefficients (.4,.6)",
                             logit, u510, rowvec({1.0}), rows({{.4, .6}}), g0,
                             500, 1));
  reg.push_back(mixture_spec("logit-s1-weak",
                             "two close logistic components against the "
                             "one-component null",
                             logit, u510, rowvec({.5, .5}),
                             rows({{-.4, -.2}, {0, 0}}), g0, 500, 1));
  reg.push_back(mixture_spec("logit-s1-strong",
                             "unbalanced separated logistic pair against the "
                             "one-component null",
                             logit, u510, rowvec({.9, .1}),
                             rows({{-.4, -.2}, {.2, .4}}), g0, 500, 1));
  reg.push_back(mixture_spec("logit-s2-null",
                             "two logistic components (.6,.4), coefficients "
                             "(-.1,-.2) and (.2,.1)",
                             logit, u510, rowvec({.6, .4}),
                             rows({{-.1, -.2}, {.2, .1}}), g0, 500, 2));
  reg.push_back(mixture_spec("logit-s2-weak",
                             "four logistic components against the "
                             "two-component null",
                             logit, u510, rowvec({.1, .1, .1, .7}),
                             rows({{-.2, -.4}, {-.2, 0}, {-.2, .2}, {.4, .2}}),
                             g0, 500, 2));
  reg.push_back(mixture_spec("logit-s2-strong",
                             "four spread logistic components against the "
                             "two-component null",
                             logit, u510, rowvec({.25, .25, .25, .25}),
                             rows({{-.1, -.2}, {-.1, 0}, {1, 0}, {.2, .2}}),
                             g0, 500, 2));
  reg.push_back(mixture_spec("logit-s3-null",
                             "three logistic components (.4,.3,.3)", logit,
                             u510, rowvec({.4, .3, .3}),
                             rows({{-.1, -.2}, {0, .3}, {.3, 0}}), g0, 500,
                             3));
  reg.push_back(mixture_spec(
      "logit-s3-weak",
      "six logistic components against the three-component null", logit, u510,
      rowvec({.2, .2, .2, .2, .1, .1}),
      rows({{-.1, -.2}, {0, .3}, {.3, 0}, {.1, -.2}, {-.2, .2}, {-.3, 0}}),
      g0, 500, 3));
  reg.push_back(mixture_spec(
      "logit-s3-strong",
      "six logistic components against the three-component null, alternative "
      "spread",
      logit, u510, rowvec({.1, .2, .2, .2, .2, .1}),
      rows({{-.1, -.2}, {.1, -.2}, {-.3, .1}, {-.1, .1}, {0, .3}, {.2, .3}}),
      g0, 500, 3));

  // Latent-membership comparison generator (null and the six power settings).
  reg.push_back(shen_spec("shen-null", 0, 0, 0, true));
  reg.push_back(shen_spec("shen-a05-b1-c1", 0.5, 1.0, 1.0, false));
  reg.push_back(shen_spec("shen-a05-b0-c1", 0.5, 0.0, 1.0, false));
  reg.push_back(shen_spec("shen-a05-b1-c0", 0.5, 1.0, 0.0, false));
  reg.push_back(shen_spec("shen-a10-b1-c1", 1.0, 1.0, 1.0, false));
  reg.push_back(shen_spec("shen-a10-b0-c1", 1.0, 0.0, 1.0, false));
  reg.push_back(shen_spec("shen-a10-b1-c0", 1.0, 1.0, 0.0, false));

  // Deterministic-membership logistic pairs (model misspecification by
  // design); tested at m0 = 2.
  {
    ScenarioSpec t1 = mixture_spec(
        "tree-s1",
        "logistic pair with membership fixed by x2 > 7 (component 1 when "
        "true)",
        logit, u510, rowvec({.6, .4}), rows({{-.1, -.2}, {.2, .1}}), g0, 500,
        2);
    t1.rule = MembershipRule::ThresholdX2;
    reg.push_back(t1);
    ScenarioSpec t2 = mixture_spec(
        "tree-s2",
        "logistic pair with membership fixed by x1 + x2 > 14 (component 1 "
        "when true)",
        logit, u510, rowvec({.68, .32}), rows({{-.1, -.2}, {.2, .1}}), g0,
        500, 2);
    t2.rule = MembershipRule::ThresholdSum;
    reg.push_back(t2);
    reg.push_back(mixture_spec(
        "tree-s3", "logistic pair with random membership (.6,.4)", logit,
        u510, rowvec({.6, .4}), rows({{-.1, -.2}, {.2, .1}}), g0, 500, 2));
  }
  return reg;
}

double draw_covariate(CovariateLaw law, Rng& rng) {
  switch (law) {
    case CovariateLaw::Uniform01:
      return rng.uniform();
    case CovariateLaw::Uniform5To10:
      return rng.uniform(5.0, 10.0);
  }
  throw InvalidInputError("unknown covariate law");
}

std::string law_name(CovariateLaw law) {
  return law == CovariateLaw::Uniform01 ? "uniform01" : "uniform5_10";
}

CovariateLaw law_from_name(const std::string& s) {
  if (s == "uniform01") return CovariateLaw::Uniform01;
  if (s == "uniform5_10") return CovariateLaw::Uniform5To10;
  throw InvalidInputError("unknown covariate law: " + s);
}

std::string rule_name(MembershipRule r) {
  switch (r) {
    case MembershipRule::Categorical: return "categorical";
    case MembershipRule::ThresholdX2: return "threshold_x2";
    case MembershipRule::ThresholdSum: return "threshold_sum";
    case MembershipRule::LogisticLatent: return "logistic_latent";
  }
  return "categorical";
}

MembershipRule rule_from_name(const std::string& s) {
  if (s == "categorical") return MembershipRule::Categorical;
  if (s == "threshold_x2") return MembershipRule::ThresholdX2;
  if (s == "threshold_sum") return MembershipRule::ThresholdSum;
  if (s == "logistic_latent") return MembershipRule::LogisticLatent;
  throw InvalidInputError("unknown membership rule: " + s);
}

}  // namespace

void ScenarioSpec::validate() const {
  if (n < 1) throw InvalidInputError("ScenarioSpec: n must be >= 1");
  if (weights.size() != thetas.rows() || weights.size() < 1)
    throw InvalidInputError("ScenarioSpec: weights/thetas mismatch");
  if (weights.minCoeff() < 0.0 || std::abs(weights.sum() - 1.0) > 1e-8)
    throw InvalidInputError("ScenarioSpec: weights must sum to one");
  if (rule == MembershipRule::LogisticLatent &&
      (membership.size() != 2 || thetas.rows() != 2 || thetas.cols() != 3))
    throw InvalidInputError(
        "ScenarioSpec: latent-membership generator needs 2 components over "
        "(1, z, x) and a 2-vector membership");
  if (test_m0 < 1) throw InvalidInputError("ScenarioSpec: test_m0 must be >= 1");
}

Dataset generate_scenario(const ScenarioSpec& spec, Rng& rng) {
  return generate_scenario(spec, rng, nullptr);
}

Dataset generate_scenario(const ScenarioSpec& spec, Rng& rng,
                          std::vector<int>* labels) {
  spec.validate();
  const Eigen::Index n = spec.n;
  Dataset data;
  data.family = spec.family;
  if (labels) labels->assign(n, 0);

  if (spec.rule == MembershipRule::LogisticLatent) {
    data.X.resize(n, 3);
    data.Z.resize(n, 0);
    Eigen::VectorXd eta(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double z = rng.bernoulli(0.5) ? 1.0 : 0.0;
      const double x = rng.normal(-1.0, 1.0);
      data.X(i, 0) = 1.0;
      data.X(i, 1) = z;
      data.X(i, 2) = x;
      const double p_second =
          logistic(spec.membership[0] + spec.membership[1] * x);
      const int comp = rng.bernoulli(p_second) ? 1 : 0;
      if (labels) (*labels)[i] = comp;
      eta[i] = data.X.row(i).dot(spec.thetas.row(comp));
    }
    data.y = simulate_response(spec.family, eta, rng);
    return data;
  }

  const Eigen::Index p = spec.thetas.cols();
  const Eigen::Index q = spec.gamma.size();
  data.X.resize(n, p);
  data.Z.resize(n, q);
  Eigen::VectorXd eta(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < p; ++k)
      data.X(i, k) = draw_covariate(spec.law, rng);
    for (Eigen::Index k = 0; k < q; ++k)
      data.Z(i, k) = draw_covariate(spec.law, rng);
    int comp = 0;
    switch (spec.rule) {
      case MembershipRule::Categorical:
        comp = rng.categorical(spec.weights);
        break;
      case MembershipRule::ThresholdX2:
        comp = data.X(i, 1) > 7.0 ? 0 : 1;
        break;
      case MembershipRule::ThresholdSum:
        comp = data.X(i, 0) + data.X(i, 1) > 14.0 ? 0 : 1;
        break;
      case MembershipRule::LogisticLatent:
        break;  // handled above
    }
    if (labels) (*labels)[i] = comp;
    eta[i] = data.X.row(i).dot(spec.thetas.row(comp));
    if (q > 0) eta[i] += data.Z.row(i).dot(spec.gamma);
  }
  data.y = simulate_response(spec.family, eta, rng);
  return data;
}

RejectionTable monte_carlo_rejection(const ScenarioSpec& spec,
                                     int m0_under_test,
                                     const TestConfig& config, int reps,
                                     const std::vector<double>& levels) {
  spec.validate();
  if (reps < 1) throw InvalidInputError("monte_carlo_rejection: reps must be >= 1");
  std::vector<double> pvalues(reps, -1.0);
  std::vector<char> failed(reps, 0);

  parallel_for(reps, config.threads, [&](std::int64_t r) {
    const std::uint64_t rep_seed =
        derive_seed(config.seed, 0x5150 + static_cast<std::uint64_t>(r));
    Rng rng(derive_seed(rep_seed, 1));
    try {
      const Dataset data = generate_scenario(spec, rng);
      TestConfig sub = config;
      sub.seed = derive_seed(rep_seed, 2);
      sub.threads = 1;  // replicate-level parallelism only
      const TestReport report = run_test(data, m0_under_test, sub);
      pvalues[r] = report.pvalue;
    } catch (const Error&) {
      failed[r] = 1;
    }
  });

  int failures = 0;
  for (char f : failed) failures += f;
  if (failures * 50 > reps)  // > 2%
    throw NumericalError("monte_carlo_rejection: replicate failure rate " +
                         std::to_string(failures) + "/" +
                         std::to_string(reps) + " exceeds 2%");

  const int ok = reps - failures;
  RejectionTable table;
  table.failures = failures;
  for (double level : levels) {
    int hits = 0;
    for (int r = 0; r < reps; ++r)
      if (!failed[r] && pvalues[r] <= level) ++hits;
    RejectionRow row;
    row.spec_id = spec.id;
    row.level = level;
    row.proportion = ok > 0 ? static_cast<double>(hits) / ok : 0.0;
    row.reps = ok;
    row.mc_se = ok > 0
                    ? std::sqrt(row.proportion * (1.0 - row.proportion) / ok)
                    : 0.0;
    table.rows.push_back(row);
  }
  return table;
}

const std::vector<ScenarioSpec>& list_builtin_scenarios() {
  static const std::vector<ScenarioSpec> registry = build_registry();
  return registry;
}

const ScenarioSpec& find_scenario(const std::string& id) {
  for (const ScenarioSpec& s : list_builtin_scenarios())
    if (s.id == id) return s;
  std::string msg = "unknown scenario id '" + id + "'; valid ids:";
  for (const ScenarioSpec& s : list_builtin_scenarios()) msg += " " + s.id;
  throw InvalidInputError(msg);
}

std::string scenario_to_json(const ScenarioSpec& spec) {
  json j;
  j["id"] = spec.id;
  j["description"] = spec.description;
  j["family"] = spec.family.kind == FamilyKind::NormalKnownVariance
                    ? "normal"
                    : "logit";
  if (spec.family.kind == FamilyKind::NormalKnownVariance)
    j["sigma"] = spec.family.sigma;
  j["weights"] = std::vector<double>(spec.weights.begin(), spec.weights.end());
  json thetas = json::array();
  for (Eigen::Index h = 0; h < spec.thetas.rows(); ++h) {
    json row = json::array();
    for (Eigen::Index k = 0; k < spec.thetas.cols(); ++k)
      row.push_back(spec.thetas(h, k));
    thetas.push_back(row);
  }
  j["thetas"] = thetas;
  j["gamma"] = std::vector<double>(spec.gamma.begin(), spec.gamma.end());
  j["law"] = law_name(spec.law);
  j["rule"] = rule_name(spec.rule);
  if (spec.rule == MembershipRule::LogisticLatent)
    j["membership"] =
        std::vector<double>(spec.membership.begin(), spec.membership.end());
  j["n"] = spec.n;
  j["test_m0"] = spec.test_m0;
  return j.dump(2);
}

ScenarioSpec scenario_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InvalidInputError(std::string("scenario JSON parse error: ") +
                            e.what());
  }
  ScenarioSpec spec;
  try {
    spec.id = j.value("id", "user-scenario");
    spec.description = j.value("description", "");
    const std::string fam = j.at("family").get<std::string>();
    if (fam == "normal")
      spec.family = Family::normal(j.value("sigma", 1.0));
    else if (fam == "logit")
      spec.family = Family::logit();
    else
      throw InvalidInputError("scenario family must be 'normal' or 'logit'");
    const auto w = j.at("weights").get<std::vector<double>>();
    spec.weights = Eigen::Map<const Eigen::VectorXd>(w.data(), w.size());
    const auto th = j.at("thetas").get<std::vector<std::vector<double>>>();
    if (th.empty()) throw InvalidInputError("scenario thetas empty");
    spec.thetas.resize(th.size(), th.front().size());
    for (std::size_t h = 0; h < th.size(); ++h) {
      if (th[h].size() != static_cast<std::size_t>(spec.thetas.cols()))
        throw InvalidInputError("scenario thetas ragged");
      for (std::size_t k = 0; k < th[h].size(); ++k)
        spec.thetas(h, k) = th[h][k];
    }
    const auto g = j.value("gamma", std::vector<double>{});
    spec.gamma = Eigen::Map<const Eigen::VectorXd>(g.data(), g.size());
    spec.law = law_from_name(j.value("law", "uniform01"));
    spec.rule = rule_from_name(j.value("rule", "categorical"));
    if (spec.rule == MembershipRule::LogisticLatent) {
      const auto mem = j.at("membership").get<std::vector<double>>();
      spec.membership = Eigen::Map<const Eigen::VectorXd>(mem.data(), mem.size());
    }
    spec.n = j.value("n", 500);
    spec.test_m0 = j.value("test_m0", 1);
  } catch (const json::exception& e) {
    throw InvalidInputError(std::string("scenario JSON field error: ") +
                            e.what());
  }
  spec.validate();
  return spec;
}

}  // namespace emtest
