#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "gpforecast/gp.hpp"
#include "gpforecast/model_io.hpp"
#include "gpforecast/optimizer.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

using namespace gpforecast;
using Catch::Matchers::WithinAbs;

namespace {

// all signal magnitudes pushed to ~0, unit independent noise
HyperParams pure_noise_theta() {
  HyperParams h;
  h.log_sigma1 = h.log_sigma2 = h.log_sigma3 = h.log_sigmaf = -40.0;
  h.log_sigman = 0.0;
  return h;
}

}  // namespace

TEST_CASE("fit on a single point with pure noise returns alpha = y") {
  const std::vector<InputPoint> pts{{1.0, 0.0, 0.0, 0.0}};
  Eigen::VectorXd y(1);
  y << 0.7;
  const TrainedModel m = fit(pts, y, pure_noise_theta());
  // K = sigma_n^2 = 1, so alpha = y
  CHECK_THAT(m.alpha[0], WithinAbs(0.7, 1e-10));
}

TEST_CASE("fit handles duplicate covariate rows via the index delta") {
  const InputPoint p{3.0, 0.2, -0.1, 0.4};
  Eigen::VectorXd y(2);
  y << 1.0, -1.0;
  HyperParams theta;
  theta.log_sigman = std::log(0.5);
  const TrainedModel m = fit({p, p}, y, theta);
  CHECK(m.factor.jitter_used == 0.0);
  CHECK(((m.factor.lower * m.factor.lower.transpose()) * m.alpha - y).norm() <
        1e-8);
}

TEST_CASE("fit rejects empty and mismatched input") {
  CHECK_THROWS_AS(fit({}, Eigen::VectorXd(), HyperParams{}), EmptyData);
  CHECK_THROWS_AS(
      fit({{1.0, 0.0, 0.0, 0.0}}, Eigen::VectorXd::Zero(2), HyperParams{}),
      DimensionMismatch);
}

TEST_CASE("fit alpha matches the brute-force solve") {
  testsupport::Rng rng(51);
  const auto pts = testsupport::random_points(rng, 5);
  Eigen::VectorXd y(5);
  for (int i = 0; i < 5; ++i) y[i] = rng.uniform(-1.0, 1.0);
  const HyperParams theta = testsupport::random_theta(rng);

  const TrainedModel m = fit(pts, y, theta);

  Eigen::MatrixXd k(5, 5);
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) {
      k(i, j) = testsupport::oracle_kernel(
          pts[static_cast<std::size_t>(i)], pts[static_cast<std::size_t>(j)],
          i == j, theta);
    }
  }
  const Eigen::VectorXd oracle = testsupport::gauss_solve(k, y);
  CHECK((m.alpha - oracle).norm() / oracle.norm() < 1e-8);
}

TEST_CASE("predict interpolates training targets when noise is tiny") {
  testsupport::Rng rng(53);
  const auto pts = testsupport::random_points(rng, 8);
  Eigen::VectorXd y(8);
  for (int i = 0; i < 8; ++i) y[i] = std::sin(0.5 * pts[static_cast<std::size_t>(i)].t);
  HyperParams theta;
  theta.log_l1 = theta.log_l2 = theta.log_l3 = theta.log_l4 = std::log(3.0);
  theta.log_sigman = std::log(1e-12);

  const TrainedModel m = fit(pts, y, theta);
  const Prediction p = predict(m, pts);
  for (int i = 0; i < 8; ++i) {
    CHECK_THAT(p.mean[i], WithinAbs(y[i], 1e-6));
  }
}

TEST_CASE("predict reverts to the zero prior far from data") {
  const std::vector<InputPoint> pts{{1.0, 0.0, 0.0, 0.0},
                                    {2.0, 0.1, 0.0, -0.1}};
  Eigen::VectorXd y(2);
  y << 1.0, -0.5;
  HyperParams theta;
  const TrainedModel m = fit(pts, y, theta);

  const InputPoint far{5000.0, 0.0, 0.0, 0.0};
  const Prediction p = predict(m, {far});
  CHECK_THAT(p.mean[0], WithinAbs(0.0, 1e-8));
  // prior variance without the noise spike
  CHECK_THAT(p.variance[0],
             WithinAbs(composite(far, far, false, theta), 1e-8));
  CHECK(p.lower95[0] <= p.mean[0]);
  CHECK(p.mean[0] <= p.upper95[0]);
}

TEST_CASE("predict matches the brute-force predictive equations") {
  testsupport::Rng rng(59);
  const auto train = testsupport::random_points(rng, 3);
  const auto stars = testsupport::random_points(rng, 2);
  Eigen::VectorXd y(3);
  for (int i = 0; i < 3; ++i) y[i] = rng.uniform(-1.0, 1.0);
  const HyperParams theta = testsupport::random_theta(rng);

  const TrainedModel m = fit(train, y, theta);
  const Prediction p = predict(m, stars, /*full_cov=*/true);
  const auto oracle = testsupport::brute_force_gp(train, y, theta, stars);

  for (int i = 0; i < 2; ++i) {
    CHECK_THAT(p.mean[i], WithinAbs(oracle.mean[i], 1e-8));
    CHECK_THAT(p.variance[i], WithinAbs(oracle.variance[i], 1e-8));
  }
  REQUIRE(p.full_cov.has_value());
  CHECK((*p.full_cov - oracle.covariance).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("full predictive covariance is symmetric PSD") {
  testsupport::Rng rng(61);
  const auto train = testsupport::random_points(rng, 10);
  const auto stars = testsupport::random_points(rng, 20);
  Eigen::VectorXd y(10);
  for (int i = 0; i < 10; ++i) y[i] = rng.uniform(-1.0, 1.0);
  const TrainedModel m = fit(train, y, testsupport::random_theta(rng));
  const Prediction p = predict(m, stars, /*full_cov=*/true);
  REQUIRE(p.full_cov.has_value());
  const Eigen::MatrixXd& c = *p.full_cov;
  CHECK((c - c.transpose()).cwiseAbs().maxCoeff() < 1e-10);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(c);
  CHECK(eig.eigenvalues().minCoeff() >= -1e-8);
}

TEST_CASE("log marginal likelihood scalar cases") {
  {
    // n = 1: K + sigma_n^2 = 2^2 + ... with pure noise theta, K = [1]
    const std::vector<InputPoint> pts{{1.0, 0.0, 0.0, 0.0}};
    Eigen::VectorXd y(1);
    y << 0.3;
    const TrainedModel m = fit(pts, y, pure_noise_theta());
    const double v = 1.0;
    const double expected = -y[0] * y[0] / (2.0 * v) - 0.5 * std::log(v) -
                            0.5 * std::log(2.0 * std::numbers::pi);
    CHECK_THAT(log_marginal_likelihood(m), WithinAbs(expected, 1e-10));
  }
  {
    // zero targets: only the complexity terms remain
    testsupport::Rng rng(67);
    const auto pts = testsupport::random_points(rng, 4);
    const HyperParams theta = testsupport::random_theta(rng);
    const TrainedModel m = fit(pts, Eigen::VectorXd::Zero(4), theta);
    const double expected =
        -0.5 * log_det(m.factor) - 2.0 * std::log(2.0 * std::numbers::pi);
    CHECK_THAT(log_marginal_likelihood(m), WithinAbs(expected, 1e-12));
  }
}

TEST_CASE("log marginal likelihood matches the explicit-inverse oracle") {
  testsupport::Rng rng(71);
  const auto pts = testsupport::random_points(rng, 6);
  Eigen::VectorXd y(6);
  for (int i = 0; i < 6; ++i) y[i] = rng.uniform(-1.0, 1.0);
  const HyperParams theta = testsupport::random_theta(rng);
  const TrainedModel m = fit(pts, y, theta);
  const auto oracle = testsupport::brute_force_gp(pts, y, theta, pts);
  CHECK_THAT(log_marginal_likelihood(m), WithinAbs(oracle.lml, 1e-8));
}

TEST_CASE("lml_gradient matches central finite differences") {
  testsupport::Rng rng(73);
  for (int trial = 0; trial < 5; ++trial) {
    const auto pts = testsupport::random_points(rng, 7);
    Eigen::VectorXd y(7);
    for (int i = 0; i < 7; ++i) y[i] = rng.uniform(-1.0, 1.0);
    const HyperParams theta = testsupport::random_theta(rng);
    const TrainedModel m = fit(pts, y, theta);
    const Eigen::VectorXd analytic = lml_gradient(m);
    const Eigen::VectorXd fd = testsupport::fd_lml_gradient(pts, y, theta);
    for (int i = 0; i < analytic.size(); ++i) {
      const double scale = std::max({std::abs(fd[i]), std::abs(analytic[i]), 1e-4});
      CHECK(std::abs(analytic[i] - fd[i]) / scale < 1e-4);
    }
  }
}

TEST_CASE("increasing noise lowers the LML on near-noiseless data") {
  // smooth seasonal signal, essentially noise free
  std::vector<InputPoint> pts;
  Eigen::VectorXd y(24);
  for (int i = 0; i < 24; ++i) {
    pts.push_back({static_cast<double>(i + 1), 0.0, 0.0, 0.0});
    y[i] = std::sin(2.0 * std::numbers::pi * i / 12.0);
  }
  HyperParams theta;
  theta.log_l1 = theta.log_l2 = theta.log_l3 = theta.log_l4 = std::log(4.0);
  theta.log_sigman = std::log(1e-4);
  const TrainedModel m = fit(pts, y, theta);
  const Eigen::VectorXd g = lml_gradient(m);
  CHECK(g[slot::sigman] < 0.0);

  HyperParams doubled = theta;
  doubled.log_sigman += std::log(2.0);
  const TrainedModel m2 = fit(pts, y, doubled);
  CHECK(log_marginal_likelihood(m2) < log_marginal_likelihood(m));
}

TEST_CASE("model document round-trips bit-for-bit") {
  testsupport::Rng rng(79);
  const auto pts = testsupport::random_points(rng, 9);
  Eigen::VectorXd counts(9);
  for (int i = 0; i < 9; ++i) counts[i] = std::floor(rng.uniform(0.0, 400.0));
  auto [targets, state] = forward(counts);
  const HyperParams theta = testsupport::random_theta(rng);
  const TrainedModel m = fit(pts, targets, theta, state);

  const ModelDocument doc = make_document(m);
  const std::string path =
      (std::filesystem::temp_directory_path() / "gpf_model_roundtrip.json")
          .string();
  save_model(path, doc);
  const ModelDocument loaded = load_model(path);

  CHECK(serialize_model(loaded) == serialize_model(doc));

  const TrainedModel m2 = refit(loaded);
  const auto stars = testsupport::random_points(rng, 5);
  const Prediction p1 = predict(m, stars);
  const Prediction p2 = predict(m2, stars);
  CHECK((p1.mean - p2.mean).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK((p1.variance - p2.variance).cwiseAbs().maxCoeff() <= 1e-10);
  std::remove(path.c_str());
}

TEST_CASE("loading a document with a foreign format version fails") {
  nlohmann::ordered_json j;
  j["format_version"] = 999;
  CHECK_THROWS_AS(document_from_json(j), IoError);
}
