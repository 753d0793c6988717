#include <doctest.h>

#include <random>

#include "cosbal/errors.hpp"
#include "cosbal/estimator.hpp"
#include "cosbal/stats.hpp"
#include "helpers.hpp"

using namespace cosbal;
using cosbal::testing::ClusterSpec;
using cosbal::testing::make_dataset;

namespace {

WeightSolution weights_on_controls(const CosDataset& ds, Eigen::VectorXd gamma) {
  WeightSolution ws;
  ws.mode = BalanceMode::unit;
  ws.gamma = std::move(gamma);
  const auto& cc = ds.control_clusters();
  ws.cluster_weights.resize(static_cast<Eigen::Index>(cc.size()));
  Eigen::Index pos = 0;
  for (std::size_t c = 0; c < cc.size(); ++c) {
    const auto len = static_cast<Eigen::Index>(ds.clusters()[cc[c]].size);
    ws.cluster_weights[static_cast<Eigen::Index>(c)] =
        ws.gamma.segment(pos, len).mean();
    pos += len;
  }
  ws.ess_control =
      ws.gamma.sum() * ws.gamma.sum() / ws.gamma.squaredNorm();
  return ws;
}

OutcomeModel zero_model(Eigen::Index d) {
  OutcomeModel m;
  m.beta = Eigen::VectorXd::Zero(d);
  m.intercept = 0.0;
  return m;
}

}  // namespace

TEST_SUITE("estimator") {

TEST_CASE("weighted_mu0 hand examples") {
  // clusters: treated {c,c}, control {5, 9} as singleton clusters
  const auto ds = make_dataset(
      {
          {"t", true, {}, {{{}, 3.0}, {{}, 3.0}}},
          {"c1", false, {}, {{{}, 5.0}}},
          {"c2", false, {}, {{{}, 9.0}}},
      },
      {}, {});
  Eigen::VectorXd g(2);
  g << 2.0, 0.0;
  CHECK(weighted_mu0(ds, weights_on_controls(ds, g)) == doctest::Approx(5.0));

  // uniform n1/n0 weights on constant outcomes give that constant
  const auto ds2 = make_dataset(
      {
          {"t", true, {}, {{{}, 1.0}, {{}, 2.0}}},
          {"c1", false, {}, {{{}, 7.0}, {{}, 7.0}, {{}, 7.0}}},
      },
      {}, {});
  Eigen::VectorXd u = Eigen::VectorXd::Constant(3, 2.0 / 3.0);
  CHECK(weighted_mu0(ds2, weights_on_controls(ds2, u)) == doctest::Approx(7.0));
}

TEST_CASE("weighted_mu0 matches a brute-force dot product") {
  const auto ds = testing::random_dataset(31, 3, 4, 2, 6);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> normal(1.0, 0.5);
  Eigen::VectorXd g(static_cast<Eigen::Index>(ds.n0()));
  for (auto& v : g) v = normal(rng);
  const auto ws = weights_on_controls(ds, g);

  double brute = 0.0;
  std::size_t r = 0;
  for (const auto i : ds.control_units())
    brute += g[static_cast<Eigen::Index>(r++)] * ds.units()[i].y;
  brute /= static_cast<double>(ds.n1());
  CHECK(weighted_mu0(ds, ws) == doctest::Approx(brute).epsilon(1e-12));
}

TEST_CASE("att_estimate is zero for identical arms and shift invariant") {
  const auto ds = make_dataset(
      {
          {"t", true, {}, {{{}, 4.0}, {{}, 4.0}}},
          {"c", false, {}, {{{}, 4.0}, {{}, 4.0}}},
      },
      {}, {});
  const auto ws = weights_on_controls(ds, Eigen::VectorXd::Ones(2));
  CHECK(att_estimate(ds, ws) == doctest::Approx(0.0));

  const auto base = testing::random_dataset(32, 2, 3, 2, 5);
  Eigen::VectorXd g(static_cast<Eigen::Index>(base.n0()));
  std::mt19937_64 rng(9);
  std::normal_distribution<double> normal(1.0, 0.3);
  for (auto& v : g) v = std::abs(normal(rng));
  g *= static_cast<double>(base.n1()) / g.sum();  // honor the sum constraint
  const auto w0 = weights_on_controls(base, g);
  const double est0 = att_estimate(base, w0);

  std::vector<UnitRecord> units = base.units();
  for (auto& u : units) u.y += 55.5;
  const auto shifted = CosDataset::create(units, base.clusters(),
                                          base.unit_covariate_names(),
                                          base.cluster_covariate_names());
  CHECK(att_estimate(shifted, w0) == doctest::Approx(est0).epsilon(1e-12));
}

TEST_CASE("ato_estimate basics") {
  // all weights one, equal means -> 0
  const auto ds = testing::mirrored_dataset(33, 2, 3);
  WeightSolution ws;
  ws.mode = BalanceMode::subset;
  ws.gamma = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(ds.n()));
  double trt_mean = 0.0, ctrl_mean = 0.0;
  for (const auto i : ds.treated_units()) trt_mean += ds.units()[i].y;
  for (const auto i : ds.control_units()) ctrl_mean += ds.units()[i].y;
  trt_mean /= static_cast<double>(ds.n1());
  ctrl_mean /= static_cast<double>(ds.n0());
  CHECK(ato_estimate(ds, ws) == doctest::Approx(trt_mean - ctrl_mean));

  CHECK_THROWS_AS(att_estimate(ds, ws), ValidationError);

  // constant treatment effect tau on mirrored outcomes -> exactly tau
  std::vector<UnitRecord> units = ds.units();
  std::vector<ClusterRecord> clusters = ds.clusters();
  const double tau = 1.75;
  for (std::size_t i = 0; i < units.size(); ++i)
    if (ds.unit_treated(i)) units[i].y += tau - (trt_mean - ctrl_mean);
  const auto shifted = CosDataset::create(units, clusters,
                                          ds.unit_covariate_names(),
                                          ds.cluster_covariate_names());
  CHECK(ato_estimate(shifted, ws) == doctest::Approx(tau).epsilon(1e-12));
}

TEST_CASE("outcome model: exact affine data fits exactly") {
  const auto ds = testing::random_dataset(34, 2, 4, 3, 6, 2, 1);
  FeatureSpec fspec;
  fspec.standardize = false;
  auto features = build_features(ds, fspec);
  // overwrite outcomes with an exact affine function of the features
  std::vector<UnitRecord> units = ds.units();
  {
    std::size_t r0 = 0, r1 = 0;
    for (std::size_t i = 0; i < units.size(); ++i) {
      const Eigen::VectorXd row =
          ds.unit_treated(i)
              ? features.b1.row(static_cast<Eigen::Index>(r1++))
              : features.b0.row(static_cast<Eigen::Index>(r0++));
      units[i].y = 2.0 + row[0] - 0.5 * row[1] + 0.25 * row[2];
    }
  }
  const auto exact = CosDataset::create(units, ds.clusters(),
                                        ds.unit_covariate_names(),
                                        ds.cluster_covariate_names());
  const auto model =
      fit_outcome_model(exact, features, ModelSide::controls, nullptr, 1e-10);
  const Eigen::VectorXd resid = [&] {
    Eigen::VectorXd yc(features.b0.rows());
    std::size_t r = 0;
    for (const auto i : exact.control_units())
      yc[static_cast<Eigen::Index>(r++)] = exact.units()[i].y;
    return yc - model.predict(features.b0);
  }();
  CHECK(resid.lpNorm<Eigen::Infinity>() < 1e-8);
}

TEST_CASE("outcome model: huge ridge shrinks to the weighted mean") {
  const auto ds = testing::random_dataset(35, 2, 3, 3, 5);
  const auto features = build_features(ds, {});
  const auto model =
      fit_outcome_model(ds, features, ModelSide::controls, nullptr, 1e12);
  CHECK(model.beta.lpNorm<Eigen::Infinity>() < 1e-6);
  Eigen::VectorXd yc(features.b0.rows());
  std::size_t r = 0;
  for (const auto i : ds.control_units())
    yc[static_cast<Eigen::Index>(r++)] = ds.units()[i].y;
  CHECK(model.intercept == doctest::Approx(yc.mean()).epsilon(1e-6));
}

TEST_CASE("outcome model matches hand-assembled normal equations") {
  // 5 units x 2 features, weighted, explicit lambda
  Eigen::MatrixXd psi(5, 2);
  psi << 1.0, 0.5, -0.3, 1.2, 0.8, -0.7, 0.1, 0.4, -1.1, 0.9;
  Eigen::VectorXd y(5);
  y << 2.0, 1.0, 0.5, -0.3, 1.7;
  Eigen::VectorXd w(5);
  w << 1.0, 2.0, 0.5, 1.5, 1.0;
  const double lambda = 0.1;

  // library route, through a dataset with 5 singleton control clusters
  std::vector<ClusterSpec> specs;
  specs.push_back({"t", true, {}, {{{0.0, 0.0}, 0.0}}});
  for (int i = 0; i < 5; ++i) {
    ClusterSpec cs;
    cs.id = "c" + std::to_string(i);
    cs.treated = false;
    cs.units.push_back(
        {{psi(i, 0), psi(i, 1)}, y[i]});
    specs.push_back(cs);
  }
  const auto ds = make_dataset(specs, {"x1", "x2"}, {});
  FeatureSpec fspec;
  fspec.standardize = false;
  const auto features = build_features(ds, fspec);
  const auto ws = weights_on_controls(ds, w);
  const auto model =
      fit_outcome_model(ds, features, ModelSide::controls, &ws, lambda);

  // oracle: solve the centered weighted normal equations directly
  const double wsum = w.sum();
  const Eigen::RowVectorXd mean = (w.transpose() * psi) / wsum;
  const double ymean = y.dot(w) / wsum;
  const Eigen::MatrixXd xc = psi.rowwise() - mean;
  const Eigen::VectorXd yc = y.array() - ymean;
  Eigen::MatrixXd lhs = xc.transpose() * w.asDiagonal() * xc +
                        lambda * Eigen::MatrixXd::Identity(2, 2);
  const Eigen::VectorXd beta = lhs.fullPivLu().solve(
      xc.transpose() * (w.asDiagonal() * yc));
  const double intercept = ymean - (mean * beta).value();

  CHECK((model.beta - beta).lpNorm<Eigen::Infinity>() < 1e-10);
  CHECK(model.intercept == doctest::Approx(intercept).epsilon(1e-10));
}

TEST_CASE("bias correction cancels for a constant model") {
  const auto ds = testing::random_dataset(36, 2, 3, 2, 5);
  const auto features = build_features(ds, {});
  Eigen::VectorXd g(static_cast<Eigen::Index>(ds.n0()));
  std::mt19937_64 rng(4);
  std::normal_distribution<double> normal(1.0, 0.4);
  for (auto& v : g) v = std::abs(normal(rng));
  g *= static_cast<double>(ds.n1()) / g.sum();
  const auto ws = weights_on_controls(ds, g);

  OutcomeModel constant = zero_model(features.d());
  constant.intercept = 4.2;
  CHECK(bias_corrected_mu0(ds, features, ws, constant) ==
        doctest::Approx(weighted_mu0(ds, ws)).epsilon(1e-12));
}

TEST_CASE("bias correction is exact on a linear outcome with bad weights") {
  // Controls differ from treated in x; outcomes exactly linear in x.
  std::vector<ClusterSpec> specs;
  auto linear = [](double x) { return 1.0 + 2.0 * x; };
  ClusterSpec t1{"t1", true, {}, {}};
  for (const double x : {2.0, 2.5, 3.0}) t1.units.push_back({{x}, linear(x)});
  ClusterSpec t2{"t2", true, {}, {}};
  for (const double x : {2.2, 2.8}) t2.units.push_back({{x}, linear(x)});
  ClusterSpec c1{"c1", false, {}, {}};
  for (const double x : {0.0, 0.5, 1.0}) c1.units.push_back({{x}, linear(x)});
  ClusterSpec c2{"c2", false, {}, {}};
  for (const double x : {0.2, 0.8, 1.4}) c2.units.push_back({{x}, linear(x)});
  specs = {t1, t2, c1, c2};
  const auto ds = make_dataset(specs, {"x"}, {});
  FeatureSpec fspec;
  fspec.standardize = false;
  const auto features = build_features(ds, fspec);

  // deliberately imbalanced: uniform weights
  const double u = static_cast<double>(ds.n1()) / static_cast<double>(ds.n0());
  const auto ws = weights_on_controls(
      ds, Eigen::VectorXd::Constant(static_cast<Eigen::Index>(ds.n0()), u));

  // true mu0: average of linear(x) over treated units
  double mu0_true = 0.0;
  for (const auto i : ds.treated_units()) mu0_true += linear(ds.units()[i].x[0]);
  mu0_true /= static_cast<double>(ds.n1());

  const double plain = weighted_mu0(ds, ws);
  CHECK(std::abs(plain - mu0_true) > 0.1);

  const auto model =
      fit_outcome_model(ds, features, ModelSide::controls, &ws, 1e-10);
  const double corrected = bias_corrected_mu0(ds, features, ws, model);
  CHECK(corrected == doctest::Approx(mu0_true).epsilon(1e-8));
}

TEST_CASE("plug-in variance hand examples") {
  // one control cluster, gamma [1,1], residuals [1,-1]: cancellation
  const auto ds1 = make_dataset(
      {
          {"t", true, {}, {{{}, 0.0}, {{}, 0.0}}},
          {"c", false, {}, {{{}, 1.0}, {{}, -1.0}}},
      },
      {}, {});
  const auto f1 = build_features(ds1, {});
  const auto ws1 = weights_on_controls(ds1, Eigen::VectorXd::Ones(2));
  CHECK(var_plugin_unit(ds1, f1, ws1, zero_model(f1.d())) ==
        doctest::Approx(0.0));

  // two singleton clusters, gamma [1,1], residuals [1,2], n1=2 -> 1.25
  const auto ds2 = make_dataset(
      {
          {"t", true, {}, {{{}, 0.0}, {{}, 0.0}}},
          {"c1", false, {}, {{{}, 1.0}}},
          {"c2", false, {}, {{{}, 2.0}}},
      },
      {}, {});
  const auto f2 = build_features(ds2, {});
  const auto ws2 = weights_on_controls(ds2, Eigen::VectorXd::Ones(2));
  CHECK(var_plugin_unit(ds2, f2, ws2, zero_model(f2.d())) ==
        doctest::Approx(1.25));

  // all residuals zero
  const auto ds3 = make_dataset(
      {
          {"t", true, {}, {{{}, 0.0}}},
          {"c", false, {}, {{{}, 0.0}, {{}, 0.0}}},
      },
      {}, {});
  const auto f3 = build_features(ds3, {});
  const auto ws3 = weights_on_controls(ds3, Eigen::VectorXd::Ones(2));
  CHECK(var_plugin_unit(ds3, f3, ws3, zero_model(f3.d())) == 0.0);
}

TEST_CASE("cluster-sum form equals the explicit double sum") {
  std::mt19937_64 rng(15);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int rep = 0; rep < 100; ++rep) {
    const auto ds = testing::random_dataset(1000 + rep, 2, 4, 1, 5);
    const auto features = build_features(ds, {});
    Eigen::VectorXd g(static_cast<Eigen::Index>(ds.n0()));
    for (auto& v : g) v = normal(rng);
    const auto ws = weights_on_controls(ds, g);
    const auto model = zero_model(features.d());
    const double fast = var_plugin_unit(ds, features, ws, model);

    // independent double-sum route over raw outcomes (residuals = y here)
    double slow = 0.0;
    const auto& cc = ds.control_clusters();
    std::size_t base_row = 0;
    for (const auto c : cc) {
      const auto& range = ds.cluster_range(c);
      const auto len = range.size();
      for (std::size_t a = 0; a < len; ++a) {
        for (std::size_t b = 0; b < len; ++b) {
          slow += g[static_cast<Eigen::Index>(base_row + a)] *
                  g[static_cast<Eigen::Index>(base_row + b)] *
                  ds.units()[range.first + a].y * ds.units()[range.first + b].y;
        }
      }
      base_row += len;
    }
    slow /= static_cast<double>(ds.n1()) * static_cast<double>(ds.n1());
    CHECK(fast == doctest::Approx(slow).epsilon(1e-12));
  }
}

TEST_CASE("sandwich equals an intercept-only plug-in and a textbook oracle") {
  const auto ds = testing::random_dataset(37, 3, 5, 2, 6);
  const auto features = build_features(ds, {});
  Eigen::VectorXd g(static_cast<Eigen::Index>(ds.n0()));
  std::mt19937_64 rng(16);
  std::normal_distribution<double> normal(1.0, 0.3);
  for (auto& v : g) v = std::abs(normal(rng));
  g *= static_cast<double>(ds.n1()) / g.sum();
  const auto ws = weights_on_controls(ds, g);

  // intercept-only model at the weighted mean
  OutcomeModel intercept_only = zero_model(features.d());
  intercept_only.intercept = weighted_mu0(ds, ws);  // sum gamma = n1
  CHECK(var_sandwich(ds, ws) ==
        doctest::Approx(var_plugin_unit(ds, features, ws, intercept_only))
            .epsilon(1e-12));

  // textbook weighted cluster-robust variance of a weighted mean
  const double wsum = g.sum();
  double mean = 0.0;
  {
    std::size_t r = 0;
    for (const auto i : ds.control_units())
      mean += g[static_cast<Eigen::Index>(r++)] * ds.units()[i].y;
    mean /= wsum;
  }
  double oracle = 0.0;
  std::size_t r = 0;
  for (const auto c : ds.control_clusters()) {
    double s = 0.0;
    const auto& range = ds.cluster_range(c);
    for (std::size_t i = range.first; i <= range.last; ++i)
      s += g[static_cast<Eigen::Index>(r++)] * (ds.units()[i].y - mean);
    oracle += s * s;
  }
  oracle /= wsum * wsum;  // wsum == n1
  CHECK(var_sandwich(ds, ws) == doctest::Approx(oracle).epsilon(1e-10));
}

TEST_CASE("cluster plug-in examples and equivalence to the unit form") {
  // single control cluster, gammabar 1, residuals {1,1}, n1=2 -> 1
  const auto ds = make_dataset(
      {
          {"t", true, {}, {{{}, 0.0}, {{}, 0.0}}},
          {"c", false, {}, {{{}, 1.0}, {{}, 1.0}}},
      },
      {}, {});
  const auto f = build_features(ds, {});
  WeightSolution cw;
  cw.mode = BalanceMode::cluster_only;
  cw.gamma = Eigen::VectorXd::Ones(2);
  cw.cluster_weights = Eigen::VectorXd::Ones(1);
  CHECK(var_plugin_cluster(ds, f, cw, zero_model(f.d())) == doctest::Approx(1.0));

  // residuals zero
  std::vector<UnitRecord> units = ds.units();
  for (auto& u : units) u.y = 0.0;
  const auto zero_ds = CosDataset::create(units, ds.clusters(),
                                          ds.unit_covariate_names(),
                                          ds.cluster_covariate_names());
  CHECK(var_plugin_cluster(zero_ds, f, cw, zero_model(f.d())) == 0.0);

  // equality with the unit form when unit weights are cluster-constant
  const auto big = testing::random_dataset(38, 2, 4, 2, 6);
  FeatureSpec fspec;
  fspec.include_unit = false;
  const auto bf = build_features(big, fspec);
  std::mt19937_64 rng(17);
  std::normal_distribution<double> normal(1.0, 0.2);
  WeightSolution cb;
  cb.mode = BalanceMode::cluster_only;
  cb.cluster_weights.resize(static_cast<Eigen::Index>(big.m_control()));
  for (auto& v : cb.cluster_weights) v = normal(rng);
  cb.gamma.resize(static_cast<Eigen::Index>(big.n0()));
  Eigen::Index pos = 0;
  for (std::size_t c = 0; c < big.m_control(); ++c) {
    const auto len = static_cast<Eigen::Index>(
        big.clusters()[big.control_clusters()[c]].size);
    cb.gamma.segment(pos, len).setConstant(
        cb.cluster_weights[static_cast<Eigen::Index>(c)]);
    pos += len;
  }
  const auto model = fit_outcome_model(big, bf, ModelSide::controls, nullptr, 0.1);
  const double vc = var_plugin_cluster(big, bf, cb, model);
  const double vu = var_plugin_unit(big, bf, cb, model);
  CHECK(vc == doctest::Approx(vu).epsilon(1e-12));
}

TEST_CASE("design effect is one for cluster-constant weights") {
  const auto ds = testing::random_dataset(39, 2, 4, 2, 6);
  WeightSolution cluster;
  cluster.mode = BalanceMode::cluster_only;
  cluster.cluster_weights.resize(static_cast<Eigen::Index>(ds.m_control()));
  std::mt19937_64 rng(18);
  std::normal_distribution<double> normal(1.0, 0.25);
  for (auto& v : cluster.cluster_weights) v = normal(rng);
  cluster.gamma.resize(static_cast<Eigen::Index>(ds.n0()));
  Eigen::Index pos = 0;
  for (std::size_t c = 0; c < ds.m_control(); ++c) {
    const auto len =
        static_cast<Eigen::Index>(ds.clusters()[ds.control_clusters()[c]].size);
    cluster.gamma.segment(pos, len).setConstant(
        cluster.cluster_weights[static_cast<Eigen::Index>(c)]);
    pos += len;
  }
  for (const double rho : {0.0, 0.25, 0.5, 0.75, 1.0})
    CHECK(design_effect(ds, cluster, cluster, rho) ==
          doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("design effect formula specializations at rho 0 and 1") {
  const auto ds = testing::random_dataset(40, 2, 3, 2, 5);
  std::mt19937_64 rng(19);
  std::normal_distribution<double> normal(1.0, 0.3);
  Eigen::VectorXd g(static_cast<Eigen::Index>(ds.n0()));
  for (auto& v : g) v = std::abs(normal(rng));
  const auto unit_ws = weights_on_controls(ds, g);
  WeightSolution cl;
  cl.mode = BalanceMode::cluster_only;
  cl.cluster_weights.resize(static_cast<Eigen::Index>(ds.m_control()));
  for (auto& v : cl.cluster_weights) v = std::abs(normal(rng));

  double num0 = g.squaredNorm();
  double den0 = 0.0, num1 = 0.0, den1 = 0.0;
  Eigen::Index pos = 0;
  for (std::size_t c = 0; c < ds.m_control(); ++c) {
    const double nl = static_cast<double>(
        ds.clusters()[ds.control_clusters()[c]].size);
    const double s = g.segment(pos, static_cast<Eigen::Index>(nl)).sum();
    num1 += s * s;
    const double gb = cl.cluster_weights[static_cast<Eigen::Index>(c)];
    den0 += nl * gb * gb;
    den1 += nl * gb * nl * gb;
    pos += static_cast<Eigen::Index>(nl);
  }
  CHECK(design_effect(ds, unit_ws, cl, 0.0) ==
        doctest::Approx(num0 / den0).epsilon(1e-12));
  CHECK(design_effect(ds, unit_ws, cl, 1.0) ==
        doctest::Approx(num1 / den1).epsilon(1e-12));
}

TEST_CASE("confidence intervals against the quantile oracle") {
  const auto degenerate = confidence_interval(1.5, 0.0, 0.05);
  CHECK(degenerate.first == 1.5);
  CHECK(degenerate.second == 1.5);

  const auto ci = confidence_interval(0.0, 1.0, 0.05);
  CHECK(ci.second == doctest::Approx(1.959964).epsilon(1e-6));
  CHECK(ci.first == doctest::Approx(-1.959964).epsilon(1e-6));
  CHECK(std::abs(ci.second - testing::normal_quantile_oracle(0.975)) < 1e-9);

  const auto ci32 = confidence_interval(1.0, 4.0, 0.32);
  CHECK(ci32.first == doctest::Approx(1.0 - 2.0 * 0.9944579).epsilon(1e-6));
  CHECK(ci32.second == doctest::Approx(1.0 + 2.0 * 0.9944579).epsilon(1e-6));
  CHECK(std::abs((ci32.second - 1.0) / 2.0 -
                 testing::normal_quantile_oracle(0.84)) < 1e-9);

  // width scales exactly as sqrt(var)
  const auto narrow = confidence_interval(0.0, 1.0, 0.05);
  const auto wide = confidence_interval(0.0, 9.0, 0.05);
  CHECK(wide.second == doctest::Approx(3.0 * narrow.second).epsilon(1e-14));

  CHECK_THROWS_AS(confidence_interval(0.0, -1.0, 0.05), ValidationError);
}

TEST_CASE("normal quantile agrees with the oracle across the range") {
  for (const double p : {1e-6, 1e-3, 0.025, 0.16, 0.5, 0.84, 0.975, 0.999,
                         1.0 - 1e-6})
    CHECK(std::abs(stats::normal_quantile(p) -
                   testing::normal_quantile_oracle(p)) < 1e-9);
}

TEST_CASE("estimate_effect assembles a consistent report") {
  const auto ds = testing::mirrored_dataset(41, 4, 6);
  const auto features = build_features(ds, {});
  BalanceSpec spec;
  spec.mode = BalanceMode::unit;
  spec.hyper.icc = 0.3;
  spec.hyper.noise_to_signal = 0.5;
  const auto ws = fit(ds, features, spec);
  EstimateOptions opts;
  opts.total_variance = true;
  const auto est = estimate_effect(ds, features, ws, opts);

  CHECK(est.estimand == Estimand::att_unit);
  CHECK(est.point_bias_corrected.has_value());
  CHECK(est.var_plugin >= 0.0);
  CHECK(est.var_sandwich >= 0.0);
  CHECK(est.ci_plugin.first <= est.point);
  CHECK(est.ci_plugin.second >= est.point);
  REQUIRE(est.var_plugin_total.has_value());
  CHECK(*est.var_plugin_total >= est.var_plugin);
  REQUIRE(est.var_sandwich_total.has_value());
  CHECK(*est.var_sandwich_total >= est.var_sandwich);
  // the interval from the larger variance is wider
  CHECK(est.ci_plugin_total->second >= est.ci_plugin.second);
}

}  // TEST_SUITE
