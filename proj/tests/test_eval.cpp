#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "miirl/eval.hpp"
#include "miirl/outputs.hpp"
#include "toys.hpp"

using namespace miirl;

using toys::exact_net;

TEST_CASE("evd: exact recovery and positive scaling give zero") {
  const BenchmarkEnv env = toys::line_world();
  const Eigen::VectorXd truth = intention_reward(env, 0);
  CHECK(evd(env, 0, truth, 1e-6) <= 2e-6);
  CHECK(evd(env, 0, (2.0 * truth.array()).matrix(), 1e-6) <= 2e-6);
  CHECK_THROWS(evd(env, 0, Eigen::VectorXd::Zero(3), 1e-6));
}

TEST_CASE("evd matches the geometric-series hand computation") {
  // 3-state chain, true reward (0,0,1), learned reward swapped to the left
  // end. Expert values are the geometric series (8.1, 9, 10); the swapped
  // policy walks left and only state 2 ever collects reward once, so its
  // values under the true reward are (0, 0, 1) and
  // EVD = (27.1 - 1) / 3 = 8.7 under the uniform start.
  std::vector<Eigen::MatrixXd> p(2, Eigen::MatrixXd::Zero(3, 3));
  for (int s = 0; s < 3; ++s) {
    p[0](s, std::max(s - 1, 0)) = 1.0;
    p[1](s, std::min(s + 1, 2)) = 1.0;
  }
  Eigen::VectorXd goal(3), swapped(3);
  goal << 0.0, 0.0, 1.0;
  swapped << 1.0, 0.0, 0.0;
  BenchmarkEnv env{EnvKind::GridWorld,
                   3,
                   0,
                   0,
                   0,
                   TabularMdp(p, 0.9, Eigen::VectorXd::Constant(3, 1.0 / 3)),
                   Eigen::MatrixXd::Identity(3, 3),
                   {},
                   {goal}};
  const double d = evd(env, 0, swapped, 1e-9);
  CHECK(d == doctest::Approx(8.7).epsilon(1e-5));
}

TEST_CASE("evaluate_run: perfect recovery scores zero, K is reported") {
  const BenchmarkEnv env = toys::line_world();
  const BenchmarkEnv transferred = toys::line_world();  // same layout is fine
  const auto demos = toys::interleave(
      {toys::toy_demos(env, 0, 3, 6, 10), toys::toy_demos(env, 1, 3, 6, 11)});

  TrainResult result;
  result.net = exact_net({env.true_rewards[0], env.true_rewards[1]});
  result.crp.alpha = 1.0;
  result.crp.counts = {3, 3};
  for (const Trajectory& d : demos)
    result.crp.assignments.push_back(*d.true_intention);

  const EvalResult r = evaluate_run(env, transferred, result, demos, 1e-6);
  CHECK(r.avg_evd <= 2e-6);
  CHECK(r.transfer_avg_evd <= 2e-6);
  CHECK(r.k_predicted == 2);
}

TEST_CASE("evaluate_run averages per-demo EVDs (one mis-assigned demo)") {
  const BenchmarkEnv env = toys::line_world();
  std::vector<Trajectory> demos;
  demos.push_back(toys::toy_demos(env, 0, 1, 6, 20)[0]);
  demos.push_back(toys::toy_demos(env, 1, 1, 6, 21)[0]);

  TrainResult result;
  result.net = exact_net({env.true_rewards[0], env.true_rewards[1]});
  result.crp.alpha = 1.0;
  result.crp.counts = {2};
  result.crp.assignments = {0, 0};  // demo 1 mis-assigned to the left head

  const EvalResult r = evaluate_run(env, env, result, demos, 1e-8);
  const double d0 = evd(env, 0, env.true_rewards[0], 1e-8);
  const double d1 = evd(env, 1, env.true_rewards[0], 1e-8);
  CHECK(r.avg_evd == doctest::Approx(0.5 * (d0 + d1)).epsilon(1e-9));
  CHECK(r.avg_evd > 0.1);  // the mis-assignment actually costs something
}

TEST_CASE("run_experiment: record counts, determinism, summary re-aggregation") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "miirl_experiment_test";
  fs::remove_all(dir);

  ExperimentConfig cfg;
  cfg.kind = EnvKind::MBinaryWorld;
  cfg.grid_size = 8;
  cfg.intentions = {0, 1};
  cfg.demos_per_intention = 3;
  cfg.repeats = 2;
  cfg.seed = 5;
  cfg.train.algorithm = Algorithm::Sem;
  cfg.train.alpha = 1.0;
  cfg.train.max_iter = 4;
  cfg.train.lr = 0.01;
  cfg.train.net_shape = NetShape{1, 8, true};
  cfg.train.reward_feature_dim = 8;
  cfg.out_dir = dir.string();

  const ExperimentOutput out = run_experiment(cfg);
  CHECK(out.all_ok());
  CHECK(out.records.size() == 2 * 4);  // repeats x iterations
  REQUIRE(out.summaries.size() == 1);
  CHECK(out.summaries[0].repeats == 2);
  CHECK_FALSE(out.summaries[0].degenerate);

  const ExperimentOutput again = run_experiment(cfg);
  CHECK(again.records == out.records);

  write_outputs(out.records, out.summaries, out.maps, cfg.to_key_values(),
                dir.string());
  const std::vector<RunRecord> parsed = parse_runs_csv((dir / "runs.csv").string());
  CHECK(parsed == out.records);

  // Independent re-aggregation of the summary from the CSV.
  double sum = 0.0;
  int n = 0;
  for (const RunRecord& r : parsed)
    if (r.iteration == cfg.train.max_iter) {
      sum += r.avg_evd;
      ++n;
    }
  CHECK(n == 2);
  const auto summaries = parse_summary_csv((dir / "summary.csv").string());
  REQUIRE(summaries.size() == 1);
  CHECK(std::abs(summaries[0].mean_avg_evd - sum / n) <= 1e-12);

  fs::remove_all(dir);
}

TEST_CASE("run_experiment: degenerate single repeat and failure flagging") {
  ExperimentConfig cfg;
  cfg.kind = EnvKind::MBinaryWorld;
  cfg.grid_size = 8;
  cfg.intentions = {0};
  cfg.demos_per_intention = 2;
  cfg.repeats = 1;
  cfg.seed = 6;
  cfg.train.max_iter = 2;
  cfg.train.net_shape = NetShape{1, 8, true};
  cfg.train.reward_feature_dim = 8;

  const ExperimentOutput out = run_experiment(cfg);
  CHECK(out.all_ok());
  REQUIRE(out.summaries.size() == 1);
  CHECK(out.summaries[0].degenerate);
  CHECK(out.summaries[0].se_avg_evd == 0.0);

  // k_init larger than the demo count: every repeat fails, the run flags it.
  ExperimentConfig bad = cfg;
  bad.train.k_init = 10;
  const ExperimentOutput failed = run_experiment(bad);
  CHECK_FALSE(failed.all_ok());
  CHECK(failed.summaries[0].failures == 1);
  CHECK(failed.summaries[0].repeats == 0);
  CHECK(failed.records.empty());
}

TEST_CASE("csv writer: empty lists produce headers only; quoting round-trips") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "miirl_csv_test";
  fs::remove_all(dir);
  write_outputs({}, {}, {}, "seed = 1\n", dir.string());
  {
    std::ifstream in(dir / "runs.csv");
    std::string line;
    CHECK(std::getline(in, line));
    CHECK(line ==
          "run_id,seed,algorithm,env,iteration,avg_evd,transfer_avg_evd,"
          "k_predicted,wall_ms");
    CHECK_FALSE(std::getline(in, line));
  }

  RunRecord tricky;
  tricky.run_id = "odd,\"name\"";
  tricky.seed = 9;
  tricky.iteration = 1;
  tricky.avg_evd = 0.125;
  tricky.transfer_avg_evd = std::numeric_limits<double>::quiet_NaN();
  tricky.k_predicted = 2;
  write_outputs({tricky}, {}, {}, "", dir.string());
  const auto parsed = parse_runs_csv((dir / "runs.csv").string());
  REQUIRE(parsed.size() == 1);
  CHECK(parsed[0].run_id == tricky.run_id);
  CHECK(std::isnan(parsed[0].transfer_avg_evd));
  CHECK(parsed[0].avg_evd == 0.125);
  fs::remove_all(dir);
}

TEST_CASE("ppm: normalization and the constant-map convention") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "miirl_ppm_test";
  fs::create_directories(dir);
  const std::string path = (dir / "map.ppm").string();

  Eigen::VectorXd v(4);
  v << 0.0, 1.0, 0.5, 1.0;
  write_ppm(path, v, 2, 2);
  std::ifstream in(path);
  std::string magic;
  int w, h, maxval;
  in >> magic >> w >> h >> maxval;
  CHECK(magic == "P2");
  CHECK(w == 2);
  CHECK(h == 2);
  CHECK(maxval == 255);
  std::vector<int> pixels(4);
  for (int& px : pixels) in >> px;
  CHECK(pixels == std::vector<int>{0, 255, 128, 255});

  Eigen::VectorXd flat = Eigen::VectorXd::Constant(4, 3.25);
  write_ppm(path, flat, 2, 2);
  std::ifstream in2(path);
  in2 >> magic >> w >> h >> maxval;
  for (int& px : pixels) in2 >> px;
  for (int px : pixels) CHECK(px == 128);
  fs::remove_all(dir);
}

TEST_CASE("format_double uses 9 significant digits") {
  CHECK(format_double(0.5) == "0.5");
  CHECK(format_double(1.0 / 3.0) == "0.333333333");
  CHECK(format_double(std::numeric_limits<double>::quiet_NaN()) == "nan");
  CHECK(format_double(123456789012.0) == "1.23456789e+11");
}
