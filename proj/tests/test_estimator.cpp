#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "hmmix/errors.hpp"
#include "hmmix/estimator.hpp"
#include "hmmix/inference.hpp"
#include "test_util.hpp"

using namespace hmmix;

namespace {

void check_monotone(const EmResult& em) {
  for (std::size_t i = 1; i < em.loglik_trace.size(); ++i) {
    if (std::find(em.reseed_iterations.begin(), em.reseed_iterations.end(), i) != em.reseed_iterations.end()) continue;
    CHECK(em.loglik_trace[i] >= em.loglik_trace[i - 1] - 1e-10);
  }
}

double brute_distance(const MixtureParams& a, const MixtureParams& b) {
  double ss = 0.0;
  for (std::size_t s = 0; s < a.d(); ++s) {
    ss += std::pow(a.components[s].mu - b.components[s].mu, 2);
    ss += std::pow(a.components[s].gamma - b.components[s].gamma, 2);
    ss += std::pow(a.components[s].sigma - b.components[s].sigma, 2);
  }
  return std::sqrt(ss);
}

std::vector<double> responsibilities(const MixtureParams& theta, double y, double x) {
  std::vector<double> lp(theta.d());
  double top = -INFINITY;
  for (std::size_t s = 0; s < theta.d(); ++s) {
    lp[s] = std::log(theta.weights[s]) + component_logdensity(y, x, theta.components[s]);
    top = std::max(top, lp[s]);
  }
  double total = 0.0;
  for (double& v : lp) total += (v = std::exp(v - top));
  for (double& v : lp) v /= total;
  return lp;
}

}  // namespace

TEST_SUITE("estimator") {
  TEST_CASE("one component: a single EM step is least squares") {
    const Sample s = simulate_hmm(HmmDgpParams::reference_design(), 500, 50, 2);
    EstimatorConfig cfg;
    cfg.em_max_iter = 1;
    const EmResult em = em_fit(s, ModelSpec::hmm(1), {{{5.0, -3.0, 7.0}}, {1.0}}, cfg);
    const std::size_t n = s.size();
    Eigen::MatrixXd X(n, 2);
    Eigen::VectorXd y(n);
    for (std::size_t t = 0; t < n; ++t) {
      X(t, 0) = 1.0;
      X(t, 1) = s.w[t];
      y(t) = s.y[t];
    }
    const Eigen::Vector2d b = X.colPivHouseholderQr().solve(y);
    const double sigma = std::sqrt((y - X * b).squaredNorm() / double(n));
    CHECK(em.theta.components[0].mu == doctest::Approx(b(0)).epsilon(1e-12));
    CHECK(em.theta.components[0].gamma == doctest::Approx(b(1)).epsilon(1e-12));
    CHECK(em.theta.components[0].sigma == doctest::Approx(sigma).epsilon(1e-12));
  }

  TEST_CASE("EM started at the truth moves little and never decreases") {
    const Sample s = simulate_hmm(HmmDgpParams::reference_design(), 3200, kDefaultBurnIn, 21);
    EstimatorConfig cfg;
    const EmResult em = em_fit(s, ModelSpec::hmm(2), testutil::reference_theta(0.6), cfg);
    REQUIRE(em.loglik_trace.size() >= 2);
    CHECK(em.loglik_trace[1] - em.loglik_trace[0] < 0.01);
    CHECK(em.loglik_trace[1] >= em.loglik_trace[0]);
    check_monotone(em);
    CHECK(!em.degenerate);
  }

  TEST_CASE("separated components give hard responsibilities after two iterations") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n01;
    Sample s;
    for (int t = 0; t < 600; ++t) {
      const double w = n01(rng);
      const bool first = t % 3 == 0;
      s.w.push_back(w);
      s.y.push_back((first ? 10.0 : -10.0) + (first ? 0.5 : 1.0) * w + n01(rng));
    }
    EstimatorConfig cfg;
    cfg.em_max_iter = 2;
    const MixtureParams init{{{6.0, 0.0, 3.0}, {-6.0, 0.0, 3.0}}, {0.5, 0.5}};
    const EmResult em = em_fit(s, ModelSpec::hmm(2), init, cfg);
    CHECK(em.iterations == 2);
    for (std::size_t t = 0; t < s.size(); ++t) {
      const auto r = responsibilities(em.theta, s.y[t], s.w[t]);
      const double hard = s.y[t] > 0 ? r[0] : r[1];
      CHECK(hard >= 1.0 - 1e-6);
    }
  }

  TEST_CASE("reference design at T = 3200 lands near the truth") {
    const Sample s = simulate_hmm(HmmDgpParams::reference_design(), 3200, kDefaultBurnIn, 3200);
    const EstimationResult r = qml_estimate(s, ModelSpec::hmm(2), EstimatorConfig{});
    const MixtureParams a = align_permutation(r.theta_hat, testutil::reference_theta());
    CHECK(std::abs(a.components[0].mu - 1.0) < 0.15);
    CHECK(std::abs(a.components[1].gamma - 1.0) < 0.15);
    CHECK(r.converged);
  }

  TEST_CASE("long sample recovers all outcome parameters") {
    const Sample s = simulate_hmm(HmmDgpParams::reference_design(), 20000, kDefaultBurnIn, 20000);
    const ModelSpec spec = ModelSpec::hmm(2);
    EstimationResult r = qml_estimate(s, spec, EstimatorConfig{});
    attach_sandwich(r, s, spec, HacConfig{});
    REQUIRE(r.std_errors.has_value());
    const Alignment al = align(r.theta_hat, testutil::reference_theta());
    const MixtureParams truth = testutil::reference_theta();
    for (std::size_t k = 0; k < 2; ++k) {
      const auto& est = al.aligned.components[k];
      const auto& tru = truth.components[k];
      const auto col = static_cast<Eigen::Index>(al.permutation[k]);
      const double err[3] = {est.mu - tru.mu, est.gamma - tru.gamma, est.sigma - tru.sigma};
      for (Eigen::Index j = 0; j < 3; ++j) {
        CHECK(std::abs(err[j]) < 0.15);
        CHECK(std::abs(err[j]) / (*r.std_errors)(2 * j + col) < 3.5);
      }
    }
  }

  TEST_CASE("one-component fit to two-regime data is the pooled regression") {
    const Sample s = simulate_hmm(HmmDgpParams::reference_design(), 1000, kDefaultBurnIn, 44);
    const EstimationResult one = qml_estimate(s, ModelSpec::hmm(1), EstimatorConfig{});
    const EstimationResult two = qml_estimate(s, ModelSpec::hmm(2), EstimatorConfig{});
    const std::size_t n = s.size();
    Eigen::MatrixXd X(n, 2);
    Eigen::VectorXd y(n);
    for (std::size_t t = 0; t < n; ++t) {
      X(t, 0) = 1.0;
      X(t, 1) = s.w[t];
      y(t) = s.y[t];
    }
    const Eigen::Vector2d b = X.colPivHouseholderQr().solve(y);
    CHECK(one.theta_hat.components[0].mu == doctest::Approx(b(0)).epsilon(1e-9));
    CHECK(one.theta_hat.components[0].gamma == doctest::Approx(b(1)).epsilon(1e-9));
    CHECK(one.loglik < two.loglik);
  }

  TEST_CASE("fit invariants: monotone EM, refinement never loses, first-order condition") {
    const ModelSpec specs[] = {ModelSpec::hmm(2), ModelSpec::msar(2), ModelSpec::hmm(3)};
    for (int rep = 0; rep < 6; ++rep) {
      const ModelSpec& spec = specs[rep % 3];
      const Sample s = spec.form == OutcomeForm::Msar
                           ? simulate_msar(HmmDgpParams::reference_msar_design(), 800, kDefaultBurnIn, 600 + rep)
                           : simulate_hmm(HmmDgpParams::reference_design(0.65, 0.0), 800, kDefaultBurnIn, 600 + rep);
      EstimatorConfig cfg;
      cfg.seed = 77 + rep;
      const EstimationResult r = qml_estimate(s, spec, cfg);
      for (const auto& st : r.starts)
        if (!st.degenerate) CHECK(r.loglik >= st.loglik - 1e-12);
      CHECK(std::abs(r.loglik - quasi_loglik(r.theta_hat, s, spec)) <= 1e-10);
      if (r.converged) CHECK(r.max_abs_score <= cfg.qn_grad_tol);

      const MixtureObjective obj(regression_data(s, spec), spec);
      for (std::size_t k = 0; k < cfg.n_starts; ++k) {
        const EmResult em = em_fit(obj, initial_guess(obj.data(), spec, k, cfg.seed), cfg);
        check_monotone(em);
      }
    }
  }

  TEST_CASE("hessian is negative semidefinite at the maximiser") {
    const Sample s = simulate_hmm(HmmDgpParams::reference_design(), 3200, kDefaultBurnIn, 8);
    const EstimationResult r = qml_estimate(s, ModelSpec::hmm(2), EstimatorConfig{});
    REQUIRE(r.converged);
    const Eigen::MatrixXd H = hessian(r.theta_free, s, ModelSpec::hmm(2));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(H);
    CHECK(eig.eigenvalues().maxCoeff() <= 1e-8);
  }

  TEST_CASE("permuted initialisation gives the same aligned estimate") {
    const Sample s = simulate_hmm(HmmDgpParams::reference_design(), 2000, kDefaultBurnIn, 61);
    EstimatorConfig cfg;
    cfg.em_tol = 1e-300;
    cfg.em_max_iter = 300;
    const MixtureParams init{{{0.5, 0.2, 1.5}, {-0.5, 0.8, 0.8}}, {0.4, 0.6}};
    const EmResult a = em_fit(s, ModelSpec::hmm(2), init, cfg);
    const EmResult b = em_fit(s, ModelSpec::hmm(2), permute(init, {1, 0}), cfg);
    const MixtureParams bb = align_permutation(b.theta, a.theta);
    for (std::size_t k = 0; k < 2; ++k) {
      CHECK(std::abs(bb.components[k].mu - a.theta.components[k].mu) < 1e-6);
      CHECK(std::abs(bb.components[k].gamma - a.theta.components[k].gamma) < 1e-6);
      CHECK(std::abs(bb.components[k].sigma - a.theta.components[k].sigma) < 1e-6);
      CHECK(std::abs(bb.weights[k] - a.theta.weights[k]) < 1e-6);
    }
  }

  TEST_CASE("estimation is deterministic") {
    const Sample s = simulate_hmm(HmmDgpParams::reference_design(0.65, 0.65), 800, kDefaultBurnIn, 5);
    const EstimationResult a = qml_estimate(s, ModelSpec::hmm(2), EstimatorConfig{});
    const EstimationResult b = qml_estimate(s, ModelSpec::hmm(2), EstimatorConfig{});
    CHECK(a.loglik == b.loglik);
    CHECK(a.theta_free == b.theta_free);
    CHECK(a.start_index == b.start_index);
    CHECK(a.em_iterations == b.em_iterations);
  }

  TEST_CASE("too-short samples are rejected") {
    Sample s;
    s.y = {1, 2, 3, 4, 5};
    s.w = {0, 1, 0, 1, 0};
    CHECK_THROWS_AS(qml_estimate(s, ModelSpec::hmm(2), EstimatorConfig{}), DomainError);
  }

  TEST_CASE("collapsing data makes every start degenerate") {
    Sample s;
    for (int t = 0; t < 40; ++t) {
      s.y.push_back(t % 2 ? 1.0 : 3.0);
      s.w.push_back(t % 2 ? 0.0 : 1.0);
    }
    try {
      qml_estimate(s, ModelSpec::hmm(2), EstimatorConfig{});
      FAIL("expected an estimation error");
    } catch (const EstimationError& e) {
      CHECK(e.starts().size() == EstimatorConfig{}.n_starts);
      for (const auto& st : e.starts()) CHECK(st.degenerate);
    }
  }

  TEST_CASE("invalid estimator settings are rejected") {
    EstimatorConfig cfg;
    cfg.qn_grad_tol = 0.0;
    CHECK(!cfg.violations().empty());
    cfg = {};
    cfg.n_starts = 0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
  }

  TEST_CASE("alignment: identity, perfect swap, recovered permutation") {
    const MixtureParams ref = testutil::reference_theta(0.6);
    const Alignment same = align(ref, ref);
    CHECK(same.permutation == std::vector<std::size_t>{0, 1});
    CHECK(same.distance_after == 0.0);
    const MixtureParams swapped = permute(ref, {1, 0});
    const MixtureParams back = align_permutation(swapped, ref);
    CHECK(back.weights == ref.weights);
    CHECK(brute_distance(back, ref) == 0.0);

    std::mt19937_64 rng(9);
    for (int rep = 0; rep < 20; ++rep) {
      const MixtureParams r3 = testutil::random_theta(rng, ModelSpec::hmm(3));
      std::vector<std::size_t> perm{0, 1, 2};
      std::shuffle(perm.begin(), perm.end(), rng);
      const MixtureParams shuffled = permute(r3, perm);
      const Alignment al = align(shuffled, r3);
      CHECK(brute_distance(al.aligned, r3) == 0.0);
      for (std::size_t k = 0; k < 3; ++k) CHECK(perm[al.permutation[k]] == k);
    }
  }

  TEST_CASE("alignment equals an independent brute force for d <= 3") {
    std::mt19937_64 rng(10);
    for (std::size_t d = 1; d <= 3; ++d) {
      for (int rep = 0; rep < 30; ++rep) {
        const MixtureParams a = testutil::random_theta(rng, ModelSpec::hmm(d));
        const MixtureParams b = testutil::random_theta(rng, ModelSpec::hmm(d));
        std::vector<std::size_t> perm(d);
        std::iota(perm.begin(), perm.end(), 0);
        double best = INFINITY;
        do best = std::min(best, brute_distance(permute(a, perm), b));
        while (std::next_permutation(perm.begin(), perm.end()));
        const Alignment al = align(a, b);
        CHECK(al.distance_after == doctest::Approx(best).epsilon(1e-14));
        CHECK(al.distance_after <= al.distance_before);
        CHECK(brute_distance(al.aligned, b) == doctest::Approx(al.distance_after).epsilon(1e-14));
      }
    }
  }

  TEST_CASE("sort_by_mu orders components") {
    const MixtureParams t{{{2, 0, 1}, {-1, 0, 1}, {0.5, 0, 1}}, {0.2, 0.3, 0.5}};
    const MixtureParams s = sort_by_mu(t);
    CHECK(s.components[0].mu == -1);
    CHECK(s.components[2].mu == 2);
    CHECK(s.weights == std::vector<double>{0.3, 0.5, 0.2});
  }
}
