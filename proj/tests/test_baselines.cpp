#include <cmath>
#include <map>
#include <random>
#include <sstream>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "doctest.h"
#include "spillcast/baselines.hpp"
#include "spillcast/errors.hpp"
#include "spillcast/graph.hpp"
#include "spillcast/rng.hpp"

using namespace spillcast;

namespace {

ObservedCascade make_observed(std::vector<Adoption> adopters, std::int64_t root_time = 0,
                              std::int64_t window = 10800) {
  ObservedCascade oc;
  oc.message_id = 1;
  oc.root_time = root_time;
  oc.window = window;
  oc.observed = std::move(adopters);
  return oc;
}

// Independent oracle for the kernel mass: numerically integrate the density
// (constant for const_period seconds, then power-law with exponent 1+theta,
// normalized to total mass 1).
double numeric_kernel_mass(double x, const SeismicParams& p) {
  if (x <= 0.0) return 0.0;
  const double c = p.theta / (p.const_period * (1.0 + p.theta));
  auto density = [&](double t) {
    if (t <= p.const_period) return c;
    return c * std::pow(t / p.const_period, -(1.0 + p.theta));
  };
  const int steps = 200000;
  double h = x / steps;
  double acc = 0.5 * (density(0.0) + density(x));
  for (int i = 1; i < steps; ++i) acc += density(i * h);
  return acc * h;
}

}  // namespace

TEST_CASE("cascade features match a hand-computed fixture") {
  SocialGraph g = SocialGraph::from_edges(
      {{2, 1}, {3, 1}, {4, 2}, {1, 5}, {2, 5}, {2, 6}, {5, 6}});
  ObservedCascade oc = make_observed({{1, 0}, {2, 100}, {3, 200}, {5, 400}});
  Eigen::RowVectorXd f = cascade_features(oc, g);
  REQUIRE(f.size() == kNumCascadeFeatures);
  CHECK(f(0) == 4.0);    // observed size
  CHECK(f(1) == 2.0);    // users 2 and 3 follow the originator
  CHECK(f(2) == 4.0);    // induced edges among {1,2,3,5}
  CHECK(f(3) == 1.5);    // out-degrees 1,3,1,1
  CHECK(f(4) == 3.0);
  CHECK(f(5) == 100.0);  // second of four adopters reaches the half mark
  CHECK(f(6) == 1.0);    // originator follows only user 5

  // half-time rounds up: 3 adopters -> the 2nd one
  ObservedCascade three = make_observed({{1, 50}, {2, 80}, {3, 200}}, 50);
  CHECK(cascade_features(three, g)(5) == 30.0);

  CHECK_THROWS_AS(cascade_features(make_observed({}), g), DataError);
  CHECK_THROWS_WITH_AS(cascade_features(make_observed({{99, 0}}), g),
                       doctest::Contains("99"), DataError);

  std::vector<ObservedCascade> both = {oc, three};
  Eigen::MatrixXd X = feature_matrix(both, g);
  REQUIRE(X.rows() == 2);
  CHECK((X.row(0) - f).norm() == 0.0);
  CHECK((X.row(1) - cascade_features(three, g)).norm() == 0.0);
}

TEST_CASE("ridge recovers simple generating processes") {
  std::mt19937_64 rng(6);

  // constant target: near-zero penalty reproduces the constant
  Eigen::MatrixXd X(6, 2);
  for (int i = 0; i < 6; ++i) {
    X(i, 0) = uniform(rng, -1, 1);
    X(i, 1) = uniform(rng, -1, 1);
  }
  Eigen::VectorXd y = Eigen::VectorXd::Constant(6, 3.25);
  RidgeModel constant = ridge_fit(X, y, 1e-10);
  Eigen::VectorXd pred = ridge_predict(constant, X);
  for (int i = 0; i < 6; ++i) CHECK(pred(i) == doctest::Approx(3.25).epsilon(1e-6));

  // exact line y = 2x
  Eigen::MatrixXd X1(5, 1);
  X1 << 1, 2, 3, 4, 5;
  Eigen::VectorXd y1 = 2.0 * X1.col(0);
  RidgeModel line = ridge_fit(X1, y1, 1e-10);
  CHECK(line.weights(0) == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(std::abs(line.weights(1)) < 1e-6);
}

TEST_CASE("ridge solution matches an independent SVD solve") {
  std::mt19937_64 rng(12);
  Eigen::MatrixXd X(10, 7);
  Eigen::VectorXd y(10);
  for (int i = 0; i < 10; ++i) {
    for (int j = 0; j < 7; ++j) X(i, j) = uniform(rng, -2, 2);
    y(i) = uniform(rng, 0, 10);
  }
  const double l2 = 1e-3;
  RidgeModel model = ridge_fit(X, y, l2);

  Eigen::MatrixXd Xa(10, 8);
  Xa << X, Eigen::VectorXd::Ones(10);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(Xa, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  Eigen::VectorXd uy = svd.matrixU().transpose() * y;
  Eigen::VectorXd shrunk(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    shrunk(i) = s(i) * uy(i) / (s(i) * s(i) + l2);
  }
  Eigen::VectorXd want = svd.matrixV() * shrunk;
  CHECK((model.weights - want).norm() < 1e-8);

  // predictions are affine in the weights
  Eigen::VectorXd pred = ridge_predict(model, X);
  for (int i = 0; i < 10; ++i) {
    double manual = X.row(i) * model.weights.head(7) + model.weights(7);
    CHECK(pred(i) == doctest::Approx(manual).epsilon(1e-12));
  }

  // doubling every target doubles every prediction
  RidgeModel doubled = ridge_fit(X, 2.0 * y, l2);
  Eigen::VectorXd pred2 = ridge_predict(doubled, X);
  CHECK((pred2 - 2.0 * pred).norm() < 1e-8);
}

TEST_CASE("ridge rejects degenerate input and mismatched shapes") {
  Eigen::MatrixXd one_row(1, 2);
  one_row << 1, 2;
  CHECK_THROWS_AS(ridge_fit(one_row, Eigen::VectorXd::Ones(1), 0.1), DataError);

  Eigen::MatrixXd X(3, 2);
  X.setRandom();
  CHECK_THROWS_AS(ridge_fit(X, Eigen::VectorXd::Ones(2), 0.1), DataError);
  CHECK_THROWS_AS(ridge_fit(X, Eigen::VectorXd::Ones(3), 0.0), ConfigError);
  CHECK_THROWS_AS(ridge_fit(X, Eigen::VectorXd::Ones(3), -1.0), ConfigError);

  RidgeModel model = ridge_fit(X, Eigen::VectorXd::Ones(3), 0.1);
  Eigen::MatrixXd wrong(3, 5);
  wrong.setZero();
  CHECK_THROWS_AS(ridge_predict(model, wrong), ShapeError);
}

TEST_CASE("clipped ridge predictions never fall below the observed size") {
  // feature 0 is the observed size; craft a model that underpredicts
  RidgeModel model;
  model.weights = Eigen::VectorXd::Zero(kNumCascadeFeatures + 1);
  model.weights(kNumCascadeFeatures) = 2.0;  // constant prediction 2
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(3, kNumCascadeFeatures);
  X(0, 0) = 5.0;
  X(1, 0) = 1.0;
  X(2, 0) = 2.0;
  Eigen::VectorXd pred = ridge_predict_clipped(model, X);
  CHECK(pred(0) == 5.0);  // floored
  CHECK(pred(1) == 2.0);  // affine value survives
  CHECK(pred(2) == 2.0);
}

TEST_CASE("kernel mass matches numeric integration of the density") {
  SeismicParams p;
  CHECK(seismic_kernel_mass(0.0, p) == 0.0);
  CHECK(seismic_kernel_mass(-5.0, p) == 0.0);

  // constant regime: mass is linear in time
  const double c = p.theta / (p.const_period * (1.0 + p.theta));
  CHECK(seismic_kernel_mass(150.0, p) == doctest::Approx(c * 150.0).epsilon(1e-12));
  CHECK(seismic_kernel_mass(300.0, p) == doctest::Approx(c * 300.0).epsilon(1e-12));

  for (double x : {10.0, 299.0, 301.0, 600.0, 3600.0, 10800.0}) {
    CAPTURE(x);
    CHECK(seismic_kernel_mass(x, p) == doctest::Approx(numeric_kernel_mass(x, p)).epsilon(1e-6));
  }

  // monotone, continuous at the regime switch, and asymptotically 1
  CHECK(seismic_kernel_mass(300.0 + 1e-9, p) ==
        doctest::Approx(seismic_kernel_mass(300.0, p)).epsilon(1e-9));
  double prev = 0.0;
  for (double x = 50.0; x < 5000.0; x += 50.0) {
    double m = seismic_kernel_mass(x, p);
    CHECK(m > prev);
    prev = m;
  }
  double far = seismic_kernel_mass(1e12, p);
  CHECK(far > 0.99);
  CHECK(far < 1.0);

  SeismicParams bad;
  bad.theta = 0.0;
  CHECK_THROWS_AS(seismic_kernel_mass(10.0, bad), ConfigError);
}

TEST_CASE("seismic point estimates follow the hand-evaluated estimator") {
  SeismicParams p;

  // no retweets yet: infectiousness 0, prediction equals the observed size
  std::map<UserId, double> lone = {{1, 50.0}};
  CHECK(seismic_predict(make_observed({{1, 0}}), lone, 3600.0, p) == 1.0);

  // zero follower mass: nothing left to infect
  std::map<UserId, double> empty_aud = {{1, 0.0}};
  CHECK(seismic_predict(make_observed({{1, 0}}), empty_aud, 3600.0, p) == 1.0);

  // 5-event fixture, spreadsheet style
  ObservedCascade oc =
      make_observed({{1, 0}, {2, 60}, {3, 400}, {4, 900}, {5, 2400}});
  std::map<UserId, double> followers = {{1, 10}, {2, 5}, {3, 8}, {4, 2}, {5, 20}};
  const double now = 3600.0;
  double spent = 0.0, remaining = 0.0, total = 0.0;
  for (const Adoption& a : oc.observed) {
    double mass = numeric_kernel_mass(now - static_cast<double>(a.time), p);
    double ni = followers.at(a.user);
    spent += ni * mass;
    remaining += ni * (1.0 - mass);
    total += ni;
  }
  double inf = 4.0 / spent;
  double branching = std::min(inf * total / 5.0, p.correction_cap);
  double want = 5.0 + inf * remaining / (1.0 - branching);
  CHECK(seismic_predict(oc, followers, now, p) == doctest::Approx(want).epsilon(1e-5));
  CHECK(seismic_predict(oc, followers, now, p) > 5.0);

  // hot cascade: the branching correction is capped
  ObservedCascade hot = make_observed({{1, 0}, {2, 10}, {3, 20}});
  std::map<UserId, double> big = {{1, 100}, {2, 100}, {3, 100}};
  double hot_spent = 0.0, hot_remaining = 0.0;
  for (const Adoption& a : hot.observed) {
    double mass = seismic_kernel_mass(30.0 - static_cast<double>(a.time), p);
    hot_spent += 100.0 * mass;
    hot_remaining += 100.0 * (1.0 - mass);
  }
  double hot_inf = 2.0 / hot_spent;
  CHECK(hot_inf * 100.0 > p.correction_cap);  // cap actually binds
  double hot_want = 3.0 + hot_inf * hot_remaining / (1.0 - p.correction_cap);
  CHECK(seismic_predict(hot, big, 30.0, p) == doctest::Approx(hot_want).epsilon(1e-9));
}

TEST_CASE("seismic predictions never fall below the observed size") {
  std::mt19937_64 rng(33);
  SeismicParams p;
  for (int trial = 0; trial < 30; ++trial) {
    std::size_t n = 1 + uniform_index(rng, 8);
    std::vector<Adoption> adopters;
    std::map<UserId, double> followers;
    std::int64_t t = 0;
    for (std::size_t i = 0; i < n; ++i) {
      adopters.push_back({static_cast<UserId>(i + 1), t});
      t += static_cast<std::int64_t>(uniform_index(rng, 900));
      followers[static_cast<UserId>(i + 1)] =
          static_cast<double>(uniform_index(rng, 40));  // zeros allowed
    }
    double now = static_cast<double>(t) + 1.0 + uniform(rng, 0, 7200);
    double pred = seismic_predict(make_observed(adopters), followers, now, p);
    CHECK(pred >= static_cast<double>(n));
    CHECK(std::isfinite(pred));
  }
}

TEST_CASE("seismic rejects inconsistent inputs") {
  SeismicParams p;
  std::map<UserId, double> followers = {{1, 5.0}};
  CHECK_THROWS_AS(seismic_predict(make_observed({}), followers, 100.0, p), DataError);
  CHECK_THROWS_WITH_AS(seismic_predict(make_observed({{2, 0}}), followers, 100.0, p),
                       doctest::Contains("2"), DataError);
  CHECK_THROWS_AS(seismic_predict(make_observed({{1, 200}}), followers, 100.0, p), DataError);
  std::map<UserId, double> neg = {{1, -3.0}};
  CHECK_THROWS_AS(seismic_predict(make_observed({{1, 0}}), neg, 100.0, p), DataError);
}

TEST_CASE("follower counts come from in-degrees or a simple file format") {
  SocialGraph g = SocialGraph::from_edges({{2, 1}, {3, 1}, {1, 2}});
  std::map<UserId, double> counts = follower_counts_from_graph(g);
  CHECK(counts.at(1) == 2.0);
  CHECK(counts.at(2) == 1.0);
  CHECK(counts.at(3) == 0.0);

  std::istringstream in("# audience\n1 250\n2 0.5\n\n3 7\n");
  std::map<UserId, double> parsed = load_follower_counts(in);
  REQUIRE(parsed.size() == 3);
  CHECK(parsed.at(1) == 250.0);
  CHECK(parsed.at(2) == 0.5);
  CHECK(parsed.at(3) == 7.0);

  std::istringstream bad("1 abc\n");
  CHECK_THROWS_WITH_AS(load_follower_counts(bad), doctest::Contains("line 1"), DataError);
  CHECK_THROWS_AS(load_follower_counts_file("/nonexistent/followers.txt"), DataError);
}
