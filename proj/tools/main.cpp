#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "mpg/async_trainer.hpp"
#include "mpg/config.hpp"
#include "mpg/diagnostics.hpp"
#include "mpg/metrics.hpp"
#include "mpg/svg.hpp"

namespace fs = std::filesystem;

namespace {

void write_file(const fs::path& path, const std::string& contents) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << contents;
}

std::string seed_csv_name(std::uint64_t seed) {
  return "metrics_seed" + std::to_string(seed) + ".csv";
}

// ---- run -------------------------------------------------------------------

mpg::TrainResult run_one(const mpg::RunConfig& cfg, std::uint64_t seed,
                         const fs::path& out_dir) {
  mpg::TrainSetup setup = cfg.make_setup(seed);
  setup.abort_dir = out_dir.string();
  mpg::EvalSink sink = [&](long iteration, const mpg::NetSet& nets,
                           const mpg::MetricRow& row) {
    std::string name = "ckpt_seed" + std::to_string(seed) + "_iter" +
                       std::to_string(iteration) + ".ckpt";
    mpg::save_checkpoint((out_dir / name).string(),
                         mpg::checkpoint_of(nets, iteration));
    std::printf("  seed %llu iter %ld: eval return %.3f (ci %.3f)\n",
                static_cast<unsigned long long>(seed), iteration,
                row.eval_return_mean, row.eval_return_ci);
    std::fflush(stdout);
  };
  if (cfg.mode == "serial") return mpg::serial_train(setup, sink);
  return mpg::async_train(setup, cfg.make_topology(), sink);
}

int cmd_run(const mpg::RunConfig& cfg) {
  fs::path out_dir(cfg.out);
  fs::create_directories(out_dir);
  write_file(out_dir / "config.ini", mpg::serialize_config(cfg));

  std::vector<mpg::MetricLog> logs;
  for (std::uint64_t seed : cfg.seeds) {
    std::printf("training %s / %s, seed %llu, %ld iterations (%s mode)\n",
                cfg.task.c_str(), cfg.algorithm.c_str(),
                static_cast<unsigned long long>(seed), cfg.budget,
                cfg.mode.c_str());
    std::fflush(stdout);
    mpg::TrainResult res = run_one(cfg, seed, out_dir);
    write_file(out_dir / seed_csv_name(seed), res.log.to_csv());
    logs.push_back(std::move(res.log));
  }

  // merged summary
  std::string summary = "seed,final_return,best_return,reached_minimum_at\n";
  for (size_t i = 0; i < logs.size(); ++i) {
    double final_ret = logs[i].rows.empty()
                           ? 0.0
                           : logs[i].rows.back().eval_return_mean;
    double best = -1e300;
    for (const auto& r : logs[i].rows) best = std::max(best, r.eval_return_mean);
    auto at = mpg::iterations_to_goal(logs[i], mpg::minimum_return(cfg.task));
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%llu,%.17g,%.17g,%s\n",
                  static_cast<unsigned long long>(cfg.seeds[i]), final_ret,
                  best, at ? std::to_string(*at).c_str() : "-");
    summary += buf;
  }
  write_file(out_dir / "summary.csv", summary);

  // mean +- 95% CI training curve across seeds
  if (!logs.empty() && !logs[0].rows.empty()) {
    mpg::PlotSeries series;
    series.label = cfg.algorithm;
    size_t rows = logs[0].rows.size();
    for (const auto& log : logs) rows = std::min(rows, log.rows.size());
    for (size_t i = 0; i < rows; ++i) {
      double mean = 0;
      for (const auto& log : logs) mean += log.rows[i].eval_return_mean;
      mean /= static_cast<double>(logs.size());
      double var = 0;
      for (const auto& log : logs) {
        double d = log.rows[i].eval_return_mean - mean;
        var += d * d;
      }
      var = logs.size() > 1 ? var / static_cast<double>(logs.size() - 1) : 0;
      series.xs.push_back(static_cast<double>(logs[0].rows[i].iteration));
      series.ys.push_back(mean);
      series.band.push_back(1.96 *
                            std::sqrt(var / static_cast<double>(logs.size())));
    }
    mpg::PlotOptions opt;
    opt.title = cfg.task + " / " + cfg.algorithm;
    opt.xlabel = "iteration";
    opt.ylabel = "evaluation return";
    opt.has_marker = true;
    opt.marker_y = mpg::minimum_return(cfg.task);
    write_file(out_dir / "training_curve.svg", mpg::render_plot({series}, opt));
  }
  std::printf("artifacts written to %s\n", out_dir.string().c_str());
  return 0;
}

// ---- eval ------------------------------------------------------------------

int cmd_eval(const mpg::RunConfig& cfg, const std::string& checkpoint,
             std::uint64_t seed) {
  mpg::TrainSetup setup = cfg.make_setup(seed);
  mpg::Checkpoint ck = mpg::load_checkpoint(checkpoint);
  std::mt19937_64 init_rng = mpg::derive_stream(seed, mpg::StreamKind::kInit);
  mpg::NetSet nets = mpg::NetSet::init(setup, init_rng);
  mpg::restore_layers(ck, "pi", nets.pi.layers());

  std::mt19937_64 rng = mpg::derive_stream(seed, mpg::StreamKind::kEval, 0);
  std::unique_ptr<mpg::Env> env = setup.make_env();
  std::vector<mpg::TrajectoryRow> rows;
  std::vector<double> returns;
  for (int ep = 0; ep < setup.eval_episodes; ++ep) {
    env->reset(rng);
    double total = 0;
    for (int step = 0; step < setup.eval_horizon; ++step) {
      mpg::TrajectoryRow row;
      row.step = step;
      row.agent = ep;
      if (cfg.task == "path_tracking") {
        const auto& s = dynamic_cast<mpg::TrackingEnv&>(*env).raw_state();
        row.state = {s.u, s.v, s.r, s.y, s.phi, s.x};
      } else {
        Eigen::VectorXd o = env->observe();
        row.state = {o[0], o[1], o[2], o[3]};
      }
      Eigen::VectorXd a =
          nets.pi.forward_plain(env->observe().transpose()).row(0).transpose();
      mpg::StepOut out = env->step(a);
      for (Eigen::Index j = 0; j < a.size(); ++j) row.action.push_back(a[j]);
      row.reward = out.reward;
      row.done = out.done;
      total += out.reward;
      rows.push_back(std::move(row));
      if (out.done) break;
    }
    returns.push_back(total);
  }

  double mean = 0;
  for (double r : returns) mean += r;
  mean /= static_cast<double>(returns.size());
  std::printf("checkpoint %s (iteration %ld)\n", checkpoint.c_str(),
              ck.iteration);
  for (size_t i = 0; i < returns.size(); ++i)
    std::printf("  episode %zu: return %.4f\n", i, returns[i]);
  std::printf("mean return over %zu episodes: %.4f\n", returns.size(), mean);

  fs::path out_dir(cfg.out);
  fs::create_directories(out_dir);
  fs::path traj = out_dir / "trajectories.csv";
  write_file(traj, mpg::trajectories_to_csv(cfg.task, rows));
  std::printf("trajectories written to %s\n", traj.string().c_str());
  return 0;
}

// ---- table -----------------------------------------------------------------

int cmd_table(const std::string& task, std::vector<double> goals,
              const std::vector<std::string>& csvs, const std::string& out) {
  if (goals.empty()) goals = mpg::default_goals(task);
  std::vector<mpg::MetricLog> runs;
  for (const std::string& path : csvs) runs.push_back(mpg::load_metric_csv(path));
  mpg::ConvergenceTable table = mpg::convergence_table(runs, goals);
  std::printf("%-12s %-8s %s\n", "goal", "reached", "iterations to goal");
  for (const auto& c : table.cells) {
    if (c.reached()) {
      std::printf("%-12g %d/%-6d %.0f +- %.0f\n", c.goal, c.runs_reached,
                  c.runs_total, c.mean_iterations, c.ci);
    } else {
      std::printf("%-12g %d/%-6d -\n", c.goal, c.runs_reached, c.runs_total);
    }
  }
  if (!out.empty()) {
    write_file(out, table.to_csv());
    std::printf("table written to %s\n", out.c_str());
  }
  return 0;
}

// ---- errors ----------------------------------------------------------------

int cmd_errors(const std::string& trajectories) {
  std::ifstream f(trajectories);
  if (!f) throw std::runtime_error("cannot open " + trajectories);
  std::vector<mpg::TrajectoryRow> rows = mpg::parse_trajectory_csv(f);
  if (rows.empty()) {
    std::printf("no trajectory rows\n");
    return 0;
  }
  if (rows[0].state.size() == 6) {
    mpg::TrackingErrors e = mpg::tracking_errors(rows);
    std::printf("Error_y   = %.6f m\n", e.y);
    std::printf("Error_phi = %.6f rad\n", e.phi);
    std::printf("Error_u   = %.6f m/s\n", e.u);
  } else {
    mpg::StateMagnitudes m = mpg::state_magnitudes(rows);
    std::printf("State_x        = %.6f m\n", m.x);
    std::printf("State_xdot     = %.6f m/s\n", m.xd);
    std::printf("State_theta    = %.6f rad\n", m.th);
    std::printf("State_thetadot = %.6f rad/s\n", m.thd);
  }
  return 0;
}

// ---- bias study --------------------------------------------------------------

int cmd_bias_study(const std::string& task, int seeds, int hidden,
                   const std::string& out) {
  mpg::BiasDiagnosticConfig cfg;
  cfg.seeds = seeds;
  cfg.hidden = hidden;
  fs::path out_dir(out);
  fs::create_directories(out_dir);

  struct Regime {
    mpg::BiasRegime regime;
    const char* name;
    const char* color;
  };
  std::vector<Regime> regimes = {
      {mpg::BiasRegime::kNone, "no_error", "#2ca02c"},
      {mpg::BiasRegime::kCriticError, "critic_error", "#1f77b4"},
      {mpg::BiasRegime::kModelError, "model_error", "#d62728"},
  };

  std::string csv = "regime,horizon,mean_bias\n";
  std::vector<mpg::PlotSeries> series;
  for (const Regime& r : regimes) {
    mpg::BiasCurve curve = mpg::pg_bias_diagnostic(r.regime, task, cfg, 1234);
    mpg::PlotSeries s;
    s.label = r.name;
    s.color = r.color;
    std::vector<double> hs;
    for (size_t i = 0; i < curve.horizons.size(); ++i) {
      char buf[128];
      std::snprintf(buf, sizeof(buf), "%s,%d,%.17g\n", r.name,
                    curve.horizons[i], curve.mean_bias[i]);
      csv += buf;
      s.xs.push_back(curve.horizons[i]);
      s.ys.push_back(curve.mean_bias[i]);
      hs.push_back(curve.horizons[i]);
    }
    double rho = mpg::spearman(hs, curve.mean_bias);
    std::printf("%-14s spearman(horizon, bias) = %+.3f\n", r.name, rho);
    series.push_back(std::move(s));
  }
  write_file(out_dir / "bias.csv", csv);
  mpg::PlotOptions opt;
  opt.title = "policy-gradient bias vs predictive horizon (" + task + ")";
  opt.xlabel = "horizon n";
  opt.ylabel = "|grad J_n - grad J|";
  write_file(out_dir / "bias.svg", mpg::render_plot(series, opt));
  std::printf("bias study written to %s\n", out_dir.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mixed policy gradient toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_override, checkpoint, trajectories, table_out;
  std::vector<std::uint64_t> seed_override;
  std::vector<double> goals;
  std::vector<std::string> csvs;
  std::string task_flag, algorithm_flag, mode_flag;
  long budget_flag = -1;
  int bias_seeds = 20, bias_hidden = 32;
  std::uint64_t eval_seed = 0;

  CLI::App* run = app.add_subcommand("run", "train and emit metrics/plots");
  run->add_option("--config", config_path, "config file (ini)");
  run->add_option("--seed", seed_override, "override the seed list");
  run->add_option("--out", out_override, "override the output directory");
  run->add_option("--task", task_flag, "override the task");
  run->add_option("--algorithm", algorithm_flag, "override the algorithm");
  run->add_option("--mode", mode_flag, "override the execution mode");
  run->add_option("--budget", budget_flag, "override the iteration budget");

  CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  ev->add_option("--config", config_path, "config file (ini)");
  ev->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  ev->add_option("--seed", eval_seed, "evaluation stream seed");
  ev->add_option("--out", out_override, "output directory");
  ev->add_option("--task", task_flag, "override the task");

  CLI::App* tb = app.add_subcommand("table", "convergence-speed table");
  tb->add_option("--task", task_flag, "task for default goals");
  tb->add_option("--goals", goals, "goal returns");
  tb->add_option("--out", table_out, "write the table csv here");
  tb->add_option("csvs", csvs, "metric csv files")->required();

  CLI::App* er = app.add_subcommand("errors", "tracking errors / state magnitudes");
  er->add_option("--trajectories", trajectories, "trajectory csv")->required();

  CLI::App* bs = app.add_subcommand("bias-study", "gradient bias vs horizon");
  bs->add_option("--task", task_flag, "task");
  bs->add_option("--seeds", bias_seeds, "monte-carlo seeds");
  bs->add_option("--hidden", bias_hidden, "hidden units of the probe nets");
  bs->add_option("--out", out_override, "output directory");

  try {
    app.parse(argc, argv);

    mpg::RunConfig cfg;
    if (!config_path.empty()) cfg = mpg::load_config(config_path);
    mpg::apply_env_overrides(cfg);
    if (!task_flag.empty()) cfg.task = task_flag;
    if (!algorithm_flag.empty()) cfg.algorithm = algorithm_flag;
    if (!mode_flag.empty()) cfg.mode = mode_flag;
    if (budget_flag >= 0) cfg.budget = budget_flag;
    if (!seed_override.empty()) cfg.seeds = seed_override;
    if (!out_override.empty()) cfg.out = out_override;
    mpg::validate_config(cfg);

    if (run->parsed()) return cmd_run(cfg);
    if (ev->parsed()) return cmd_eval(cfg, checkpoint, eval_seed);
    if (tb->parsed())
      return cmd_table(task_flag.empty() ? cfg.task : task_flag, goals, csvs,
                       table_out);
    if (er->parsed()) return cmd_errors(trajectories);
    if (bs->parsed())
      return cmd_bias_study(task_flag.empty() ? cfg.task : task_flag,
                            bias_seeds, bias_hidden,
                            out_override.empty() ? "bias_study" : out_override);
    return 0;
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const mpg::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
