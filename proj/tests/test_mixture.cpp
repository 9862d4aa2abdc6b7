#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "hmmix/errors.hpp"
#include "hmmix/mixture.hpp"
#include "test_util.hpp"

using namespace hmmix;

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

Sample small_sample(std::size_t T, Seed seed) {
  return simulate_hmm(HmmDgpParams::reference_design(0.65, 0.0), T, 100, seed);
}

struct Ols {
  double a, b, sigma;
};

Ols closed_form_ols(const Sample& s) {
  const std::size_t n = s.size();
  double mx = 0, my = 0;
  for (std::size_t t = 0; t < n; ++t) {
    mx += s.w[t];
    my += s.y[t];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (std::size_t t = 0; t < n; ++t) {
    sxx += (s.w[t] - mx) * (s.w[t] - mx);
    sxy += (s.w[t] - mx) * (s.y[t] - my);
  }
  const double b = sxy / sxx, a = my - b * mx;
  double ssr = 0;
  for (std::size_t t = 0; t < n; ++t) ssr += std::pow(s.y[t] - a - b * s.w[t], 2);
  return {a, b, std::sqrt(ssr / n)};
}

}  // namespace

TEST_SUITE("mixture") {
  TEST_CASE("component log density closed form") {
    CHECK(component_logdensity(0, 0, {0, 0, 1}) == doctest::Approx(-kHalfLog2Pi).epsilon(1e-15));
    CHECK(component_logdensity(0, 0, {0, 0, 1}) == doctest::Approx(-0.9189385).epsilon(1e-7));
    CHECK(component_logdensity(1, 2, {0, 0.5, 1}) == doctest::Approx(-0.9189385).epsilon(1e-7));
    CHECK(component_logdensity(2, 0, {0, 0, 2}) == doctest::Approx(-std::log(2.0) - kHalfLog2Pi - 0.5).epsilon(1e-15));
    CHECK_THROWS_AS(component_logdensity(0, 0, {0, 0, 0}), DomainError);
    CHECK_THROWS_AS(component_logdensity(0, 0, {0, 0, -1}), DomainError);
  }

  TEST_CASE("one component reduces to the regression log-likelihood") {
    const Sample s = small_sample(200, 3);
    const MixtureParams theta{{{0.3, 0.7, 1.3}}, {1.0}};
    double direct = 0.0;
    for (std::size_t t = 0; t < s.size(); ++t) direct += component_logdensity(s.y[t], s.w[t], theta.components[0]);
    direct /= double(s.size());
    CHECK(quasi_loglik(theta, s, ModelSpec::hmm(1)) == doctest::Approx(direct).epsilon(1e-14));
  }

  TEST_CASE("two identical components equal the single component") {
    const Sample s = small_sample(300, 4);
    const Component c{0.4, -0.2, 0.9};
    const double one = quasi_loglik({{c}, {1.0}}, s, ModelSpec::hmm(1));
    const double two = quasi_loglik({{c, c}, {0.3, 0.7}}, s, ModelSpec::hmm(2));
    CHECK(two == doctest::Approx(one).epsilon(1e-13));
  }

  TEST_CASE("truth beats a shifted intercept on a long sample") {
    const Sample s = simulate_hmm(HmmDgpParams::reference_design(), 3200, kDefaultBurnIn, 17);
    const MixtureParams truth = testutil::reference_theta(0.6);
    MixtureParams shifted = truth;
    shifted.components[0].mu += 1.0;
    CHECK(quasi_loglik(truth, s, ModelSpec::hmm(2)) > quasi_loglik(shifted, s, ModelSpec::hmm(2)));
  }

  TEST_CASE("empty samples and wrong dimensions are rejected") {
    CHECK_THROWS_AS(quasi_loglik(testutil::reference_theta(), Sample{}, ModelSpec::hmm(2)), Error);
    const Sample s = small_sample(20, 1);
    CHECK_THROWS_AS(quasi_loglik(testutil::reference_theta(), s, ModelSpec::hmm(3)), Error);
  }

  TEST_CASE("label permutation invariance is exact") {
    std::mt19937_64 rng(11);
    const Sample s = small_sample(150, 5);
    const ModelSpec spec = ModelSpec::hmm(3);
    for (int rep = 0; rep < 10; ++rep) {
      const MixtureParams theta = testutil::random_theta(rng, spec);
      const double base = quasi_loglik(theta, s, spec);
      std::vector<std::size_t> perm{0, 1, 2};
      while (std::next_permutation(perm.begin(), perm.end())) CHECK(quasi_loglik(permute(theta, perm), s, spec) == base);
    }
  }

  TEST_CASE("log-sum-exp survives residuals of 100 standard deviations") {
    Sample s;
    s.y = {100.0, -100.0, 250.0};
    s.w = {0.0, 0.0, 0.0};
    const MixtureParams theta{{{0, 0, 1}, {0.5, 0, 1}}, {0.5, 0.5}};
    const double v = quasi_loglik(theta, s, ModelSpec::hmm(2));
    CHECK(std::isfinite(v));
    const Eigen::VectorXd g = score(encode(theta, ModelSpec::hmm(2)), s, ModelSpec::hmm(2));
    CHECK(g.allFinite());
  }

  TEST_CASE("encode and decode round-trip") {
    std::mt19937_64 rng(21);
    for (const ModelSpec& spec : {ModelSpec::hmm(1), ModelSpec::hmm(2), ModelSpec::hmm(3), ModelSpec::msar(2)}) {
      for (int rep = 0; rep < 50; ++rep) {
        const MixtureParams theta = testutil::random_theta(rng, spec);
        const MixtureParams back = decode(encode(theta, spec), spec);
        for (std::size_t s = 0; s < spec.d; ++s) {
          CHECK(std::abs(back.components[s].mu - theta.components[s].mu) <= 1e-12);
          CHECK(std::abs(back.components[s].gamma - theta.components[s].gamma) <= 1e-12);
          CHECK(std::abs(back.components[s].sigma - theta.components[s].sigma) <= 1e-12);
          CHECK(std::abs(back.weights[s] - theta.weights[s]) <= 1e-12);
        }
        const Eigen::VectorXd f = encode(theta, spec);
        CHECK((encode(decode(f, spec), spec) - f).cwiseAbs().maxCoeff() <= 1e-12);
      }
    }
  }

  TEST_CASE("decode always yields valid parameters") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> big(0.0, 400.0);
    for (const ModelSpec& spec : {ModelSpec::hmm(2), ModelSpec::hmm(4), ModelSpec::msar(3)}) {
      const FreeLayout layout(spec);
      for (int rep = 0; rep < 200; ++rep) {
        Eigen::VectorXd f(layout.dim());
        for (Eigen::Index i = 0; i < f.size(); ++i) f(i) = big(rng);
        const MixtureParams theta = decode(f, spec);
        CHECK(theta.violations().empty());
        double total = 0.0;
        for (double w : theta.weights) {
          CHECK(w > 0.0);
          total += w;
        }
        CHECK(std::abs(total - 1.0) <= 1e-12);
      }
    }
  }

  TEST_CASE("free layout dimensions") {
    CHECK(FreeLayout(ModelSpec::hmm(2)).dim() == 7);
    CHECK(FreeLayout(ModelSpec::hmm(1)).dim() == 3);
    CHECK(FreeLayout(ModelSpec::msar(2)).dim() == 6);
    CHECK(natural_parameter_names(ModelSpec::msar(2)) ==
          std::vector<std::string>{"mu(1)", "mu(2)", "phi", "sigma(1)", "sigma(2)", "weight(1)", "weight(2)"});
  }

  TEST_CASE("analytic score matches central differences on 100 random cases") {
    std::mt19937_64 rng(1234);
    const ModelSpec specs[] = {ModelSpec::hmm(2), ModelSpec::hmm(3), ModelSpec::msar(2), ModelSpec::hmm(1)};
    double worst = 0.0;
    for (int rep = 0; rep < 100; ++rep) {
      const ModelSpec& spec = specs[rep % 4];
      const Sample s = small_sample(50, 1000 + rep);
      const MixtureObjective obj(regression_data(s, spec), spec);
      const Eigen::VectorXd f = encode(testutil::random_theta(rng, spec), spec);
      const Eigen::VectorXd g = obj.score(f);
      const Eigen::VectorXd fd = testutil::numeric_gradient([&](const Eigen::VectorXd& x) { return obj.loglik(x); }, f, 1e-5);
      const double rel = (g - fd).cwiseAbs().maxCoeff() / std::max(1.0, g.cwiseAbs().maxCoeff());
      worst = std::max(worst, rel);
      CHECK(rel <= 1e-5);
    }
    MESSAGE("worst relative score error " << worst);
  }

  TEST_CASE("single-component score vanishes at least squares") {
    const Sample s = small_sample(400, 6);
    const Ols ols = closed_form_ols(s);
    const ModelSpec spec = ModelSpec::hmm(1);
    const Eigen::VectorXd g = score(encode({{{ols.a, ols.b, ols.sigma}}, {1.0}}, spec), s, spec);
    CHECK(g.cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("score contributions average to the score") {
    std::mt19937_64 rng(4);
    for (const ModelSpec& spec : {ModelSpec::hmm(2), ModelSpec::msar(2), ModelSpec::hmm(3)}) {
      const Sample s = small_sample(120, 7);
      const Eigen::VectorXd f = encode(testutil::random_theta(rng, spec), spec);
      const Eigen::MatrixXd G = score_contributions(f, s, spec);
      CHECK(G.rows() == Eigen::Index(regression_data(s, spec).size()));
      const Eigen::VectorXd means = G.colwise().mean();
      CHECK((means - score(f, s, spec)).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }

  TEST_CASE("one observation gives one row equal to the score") {
    Sample s;
    s.y = {0.7};
    s.w = {-0.3};
    const ModelSpec spec = ModelSpec::hmm(2);
    const Eigen::VectorXd f = encode(testutil::reference_theta(0.4), spec);
    const Eigen::MatrixXd G = score_contributions(f, s, spec);
    REQUIRE(G.rows() == 1);
    CHECK((G.row(0).transpose() - score(f, s, spec)).cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("single-component contributions are the Gaussian regression scores") {
    const Sample s = small_sample(60, 9);
    const Component c{0.2, 0.6, 1.4};
    const Eigen::MatrixXd G = score_contributions(encode({{c}, {1.0}}, ModelSpec::hmm(1)), s, ModelSpec::hmm(1));
    for (std::size_t t = 0; t < s.size(); ++t) {
      const double u = (s.y[t] - c.mu - c.gamma * s.w[t]) / c.sigma;
      CHECK(G(t, 0) == doctest::Approx(u / c.sigma).epsilon(1e-13));
      CHECK(G(t, 1) == doctest::Approx(u * s.w[t] / c.sigma).epsilon(1e-13));
      CHECK(G(t, 2) == doctest::Approx(u * u - 1.0).epsilon(1e-12));
    }
  }

  TEST_CASE("hessian is exactly symmetric") {
    std::mt19937_64 rng(2);
    const Sample s = small_sample(200, 10);
    for (const ModelSpec& spec : {ModelSpec::hmm(2), ModelSpec::msar(2)}) {
      const Eigen::MatrixXd H = hessian(encode(testutil::random_theta(rng, spec), spec), s, spec);
      CHECK((H - H.transpose()).cwiseAbs().maxCoeff() == 0.0);
    }
  }

  TEST_CASE("single-component hessian matches its closed form") {
    const Sample s = small_sample(500, 12);
    const Component c{0.1, 0.8, 1.2};
    const double v = c.sigma * c.sigma;
    double m1 = 0, mx = 0, mxx = 0, me = 0, mex = 0, mee = 0;
    for (std::size_t t = 0; t < s.size(); ++t) {
      const double e = s.y[t] - c.mu - c.gamma * s.w[t], x = s.w[t];
      m1 += 1;
      mx += x;
      mxx += x * x;
      me += e;
      mex += e * x;
      mee += e * e;
    }
    const double n = double(s.size());
    Eigen::Matrix3d H;
    H << -m1 / v, -mx / v, -2 * me / v,  //
        -mx / v, -mxx / v, -2 * mex / v,  //
        -2 * me / v, -2 * mex / v, -2 * mee / v;
    H /= n;
    const Eigen::MatrixXd Hn = hessian(encode({{c}, {1.0}}, ModelSpec::hmm(1)), s, ModelSpec::hmm(1));
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) CHECK(std::abs(Hn(i, j) - H(i, j)) <= 1e-4 * std::abs(H(i, j)) + 1e-12);
  }

  TEST_CASE("natural jacobian matches differences of the natural map") {
    std::mt19937_64 rng(3);
    for (const ModelSpec& spec : {ModelSpec::hmm(2), ModelSpec::hmm(3), ModelSpec::msar(2)}) {
      const Eigen::VectorXd f = encode(testutil::random_theta(rng, spec), spec);
      const Eigen::MatrixXd J = natural_jacobian(f, spec);
      for (Eigen::Index k = 0; k < J.rows(); ++k) {
        const auto fk = [&](const Eigen::VectorXd& x) { return natural_parameters(decode(x, spec), spec)(k); };
        const Eigen::VectorXd row = testutil::numeric_gradient(fk, f, 1e-6);
        CHECK((row.transpose() - J.row(k)).cwiseAbs().maxCoeff() <= 1e-8);
      }
    }
  }

  TEST_CASE("autoregressive form conditions on the first observation") {
    Sample s;
    s.y = {1.0, 2.0, 3.5, 3.0};
    s.w = {0.0, 0.0, 0.0, 0.0};
    const RegressionData d = regression_data(s, ModelSpec::msar(2));
    CHECK(d.y == std::vector<double>{2.0, 3.5, 3.0});
    CHECK(d.x == std::vector<double>{1.0, 2.0, 3.5});
    const RegressionData h = regression_data(s, ModelSpec::hmm(2));
    CHECK(h.y == s.y);
    CHECK(h.x == s.w);
  }

  TEST_CASE("shared blocks must agree across components") {
    MixtureParams theta{{{1, 0.9, 1}, {-1, 0.8, 1}}, {0.5, 0.5}};
    CHECK_THROWS_AS(theta.validate(ModelSpec::msar(2)), ValidationError);
    theta.components[1].gamma = 0.9;
    CHECK_NOTHROW(theta.validate(ModelSpec::msar(2)));
  }
}
