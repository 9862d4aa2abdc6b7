#include <doctest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

#include "hmmix/errors.hpp"
#include "hmmix/json_io.hpp"
#include "hmmix/sample_io.hpp"

using namespace hmmix;
namespace fs = std::filesystem;

namespace {

struct CommandResult {
  int status = -1;
  std::string out;
};

// Runs the CLI with stderr merged into stdout.
CommandResult run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + HMMIX_CLI + "\" " + args + " 2>&1";
  CommandResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf{};
  for (std::size_t n; (n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0;) r.out.append(buf.data(), n);
  const int status = pclose(pipe);
  r.status = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "hmmix_tests" / "cli";
  fs::create_directories(dir);
  return dir / name;
}

Json last_json_line(const std::string& text) {
  const auto start = text.rfind("\n{", text.size() >= 2 ? text.size() - 2 : 0);
  return Json::parse(start == std::string::npos ? text : text.substr(start + 1));
}

}  // namespace

TEST_SUITE("json_cli") {
  TEST_CASE("dgp round trip") {
    HmmDgpParams p = HmmDgpParams::reference_design(0.65, 0.3);
    const HmmDgpParams back = dgp_from_json(to_json(p));
    CHECK(back.fingerprint() == p.fingerprint());
    p.ar_coefficient = 0.9;
    CHECK(dgp_from_json(to_json(p)).fingerprint() == p.fingerprint());

    Eigen::MatrixXd alpha(3, 3), beta = Eigen::MatrixXd::Zero(3, 3);
    alpha << 0, -1, -2, -1, 0, -1, -2, -1, 0;
    beta(0, 1) = 0.5;
    HmmDgpParams three = p;
    three.ar_coefficient.reset();
    three.outcomes.push_back({3.0, 0.0, 2.0});
    three.transition = TransitionSpec(alpha, beta);
    CHECK(dgp_from_json(to_json(three)).fingerprint() == three.fingerprint());
  }

  TEST_CASE("configuration round trips") {
    ModelSpec m = ModelSpec::msar(3);
    const ModelSpec mb = model_from_json(to_json(m));
    CHECK(mb.d == 3);
    CHECK(mb.form == OutcomeForm::Msar);
    CHECK(mb.switching.slope == m.switching.slope);

    EstimatorConfig e;
    e.n_starts = 3;
    e.em_tol = 1e-7;
    e.seed = 42;
    const EstimatorConfig eb = estimator_from_json(to_json(e));
    CHECK(eb.n_starts == 3);
    CHECK(eb.em_tol == 1e-7);
    CHECK(eb.seed == 42);
    CHECK(eb.qn_grad_tol == e.qn_grad_tol);

    HacConfig h;
    h.bandwidth = Bandwidth::fixed(7.5);
    h.demean_scores = false;
    const HacConfig hb = hac_from_json(to_json(h));
    CHECK(!hb.bandwidth.automatic);
    CHECK(hb.bandwidth.value == 7.5);
    CHECK(!hb.demean_scores);
    CHECK(hac_from_json(Json::parse(R"({"bandwidth": "auto"})")).bandwidth.automatic);

    const MixtureParams theta{{{1.0, 0.5, 1.0}, {-1.0, 1.0, 2.0}}, {0.3, 0.7}};
    const MixtureParams tb = mixture_from_json(to_json(theta));
    CHECK(tb.weights == theta.weights);
    CHECK(tb.components[1].sigma == 2.0);
  }

  TEST_CASE("experiment round trip resolves relative directories") {
    ExperimentConfig c;
    c.name = "x";
    c.design = "rho=0";
    c.dgp = HmmDgpParams::reference_design();
    c.T = 321;
    c.n_reps = 7;
    c.master_seed = 5;
    c.out_dir = "runs/x";
    const ExperimentConfig b = experiment_from_json(to_json(c), "/base");
    CHECK(b.T == 321);
    CHECK(b.n_reps == 7);
    CHECK(b.master_seed == 5);
    CHECK(b.design == "rho=0");
    CHECK(b.out_dir == fs::path("/base/runs/x"));
    CHECK(b.dgp.fingerprint() == c.dgp.fingerprint());
  }

  TEST_CASE("unknown keys and bad values are rejected") {
    CHECK_THROWS_AS(model_from_json(Json::parse(R"({"d": 2, "fomr": "hmm"})")), ConfigError);
    CHECK_THROWS_AS(hac_from_json(Json::parse(R"({"kernel": "bartlett"})")), ConfigError);
    CHECK_THROWS_AS(hac_from_json(Json::parse(R"({"bandwidth": -2})")), ValidationError);
    CHECK_THROWS_AS(estimator_from_json(Json::parse(R"({"n_start": 2})")), ConfigError);
    Json dgp = to_json(HmmDgpParams::reference_design());
    dgp["extra"] = 1;
    CHECK_THROWS_AS(dgp_from_json(dgp), ConfigError);
    CHECK_THROWS_AS(read_json_file("/nonexistent/config.json"), IoError);
  }

  TEST_CASE("shipped experiment configurations load and validate") {
    std::size_t hmm = 0, msar = 0;
    for (const auto& entry : fs::recursive_directory_iterator(HMMIX_CONFIG_DIR)) {
      if (entry.path().extension() != ".json") continue;
      const Json j = read_json_file(entry.path());
      if (!j.contains("n_reps")) {
        CHECK_NOTHROW(dgp_from_json(j).validate());
        continue;
      }
      const ExperimentConfig c = experiment_from_json(j, HMMIX_CONFIG_DIR);
      CHECK_NOTHROW(c.validate());
      if (c.spec.form == OutcomeForm::Msar) {
        ++msar;
        CHECK(c.dgp.ar_coefficient.value() == 0.9);
      } else {
        ++hmm;
        CHECK(c.dgp.fingerprint() ==
              HmmDgpParams::reference_design(c.dgp.noise.rho, c.dgp.noise.omega).fingerprint());
      }
    }
    CHECK(hmm == 16);
    CHECK(msar == 12);
  }

  TEST_CASE("cli simulate then fit") {
    const fs::path csv = scratch("sim.csv"), fit_json = scratch("fit.json");
    const std::string dgp = std::string(HMMIX_CONFIG_DIR) + "/dgp/hmm_rho0_omega0.json";
    const auto sim = run_cli("simulate --config \"" + dgp + "\" --T 400 --seed 3 --out \"" + csv.string() + "\"");
    REQUIRE(sim.status == 0);
    const Sample s = load_sample(csv);
    CHECK(s.size() == 400);
    CHECK(s.y == simulate_hmm(HmmDgpParams::reference_design(), 400, kDefaultBurnIn, 3).y);

    const auto fit = run_cli("fit --data \"" + csv.string() + "\" --d 2 --out \"" + fit_json.string() + "\"");
    REQUIRE(fit.status == 0);
    const Json j = read_json_file(fit_json);
    CHECK(j.contains("theta"));
    CHECK(j.contains("convergence"));
    CHECK(j.contains("inference"));
    REQUIRE(j["parameters"].size() == 8);
    for (const auto& p : j["parameters"]) CHECK(p["std_error"].is_number());
  }

  TEST_CASE("cli check-id reports a verdict") {
    const auto r = run_cli("check-id --family student-t:5 --a1 2 --a2 1");
    REQUIRE(r.status == 0);
    const Json j = Json::parse(r.out);
    CHECK(j["verdict"] == true);
    const auto g = run_cli("check-id --family gaussian --a1 1.5 --a2 1 --tau-max 10 --tau-step 10");
    REQUIRE(g.status == 0);
    const Json gj = Json::parse(g.out);
    CHECK(gj["ratio_trace"].size() == 1);
  }

  TEST_CASE("cli oracle") {
    const std::string dgp = std::string(HMMIX_CONFIG_DIR) + "/dgp/hmm_rho0_omega0.json";
    const auto r = run_cli("oracle --config \"" + dgp + "\" --n-sim 20000 --seed 4");
    REQUIRE(r.status == 0);
    const Json j = Json::parse(r.out);
    CHECK(j["weights_star"].size() == 2);
    CHECK(j["weights_star"][0].get<double>() > 0.5);
  }

  TEST_CASE("cli mc and render") {
    const fs::path out = scratch("mc_run");
    fs::remove_all(out);
    const std::string cfg = std::string(HMMIX_CONFIG_DIR) + "/table1/rho0_omega0_T200.json";
    const auto r = run_cli("mc --config \"" + cfg + "\" --n-reps 3 --quiet --out-dir \"" + out.string() + "\"");
    REQUIRE(r.status == 0);
    CHECK(fs::exists(out / "replications.csv"));
    const auto t = run_cli("render \"" + out.string() + "\" --layout hmm");
    REQUIRE(t.status == 0);
    CHECK(t.out.find("Bias") != std::string::npos);
    CHECK(t.out.find("rho=0, omega=0") != std::string::npos);
  }

  TEST_CASE("cli failures are machine readable") {
    const auto missing = run_cli("fit --data /nonexistent.csv");
    CHECK(missing.status == 1);
    CHECK(last_json_line(missing.out).contains("error"));

    const fs::path bad = scratch("bad.csv");
    std::ofstream(bad) << "y,w\n1,2\nx,3\n";
    const auto parse = run_cli("fit --data \"" + bad.string() + "\"");
    CHECK(parse.status == 1);
    const Json pj = last_json_line(parse.out);
    CHECK(pj["kind"] == "parse");
    CHECK(pj["line"] == 3);

    const auto domain = run_cli("check-id --a1 1 --a2 2");
    CHECK(domain.status == 1);
    CHECK(last_json_line(domain.out)["kind"] == "domain");

    const fs::path cfg = scratch("invalid_dgp.json");
    Json j = to_json(HmmDgpParams::reference_design());
    j["regimes"][0]["sigma"] = -1.0;
    write_json_file(cfg, j);
    const auto invalid = run_cli("oracle --config \"" + cfg.string() + "\" --n-sim 20000");
    CHECK(invalid.status == 1);
    const Json ij = last_json_line(invalid.out);
    CHECK(ij["kind"] == "validation");
    CHECK(ij["violations"].size() >= 1);

    const auto usage = run_cli("nonsense");
    CHECK(usage.status == 1);
    CHECK(last_json_line(usage.out)["kind"] == "usage");
  }
}
