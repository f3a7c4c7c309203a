#pragma once

#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mpg/trainer.hpp"

namespace mpg {

struct MetricsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

/// Reader for the tool's own metric CSVs.
inline MetricLog parse_metric_csv(std::istream& in) {
  MetricLog log;
  std::string line;
  if (!std::getline(in, line)) throw MetricsError("metric csv: empty input");
  if (split_csv_line(line) != split_csv_line(MetricLog::csv_header()))
    throw MetricsError("metric csv: unexpected header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != 12) throw MetricsError("metric csv: bad row");
    MetricRow r;
    r.iteration = std::stol(cells[0]);
    r.wall_clock_s = std::stod(cells[1]);
    r.eval_return_mean = std::stod(cells[2]);
    r.eval_return_ci = std::stod(cells[3]);
    r.value_loss = std::stod(cells[4]);
    r.policy_loss = std::stod(cells[5]);
    r.w0 = std::stod(cells[6]);
    r.wH = std::stod(cells[7]);
    r.lambda = std::stod(cells[8]);
    r.grad_staleness_mean = std::stod(cells[9]);
    r.update_time_ms = std::stod(cells[10]);
    r.grad_compute_time_ms = std::stod(cells[11]);
    log.rows.push_back(r);
  }
  return log;
}

inline MetricLog load_metric_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw MetricsError("cannot open metric csv " + path);
  return parse_metric_csv(f);
}

// ---- convergence speed -------------------------------------------------------

/// First evaluation iteration whose mean return reaches the goal; empty when
/// the run never does.
inline std::optional<long> iterations_to_goal(const MetricLog& log,
                                              double goal) {
  for (const MetricRow& r : log.rows) {
    if (r.eval_return_mean >= goal) return r.iteration;
  }
  return std::nullopt;
}

struct ConvergenceCell {
  double goal = 0;
  int runs_total = 0;
  int runs_reached = 0;
  double mean_iterations = 0;  // over the runs that reached the goal
  double ci = 0;               // 95% half width over those runs
  bool reached() const { return runs_reached > 0; }
};

struct ConvergenceTable {
  std::vector<ConvergenceCell> cells;

  std::string to_csv() const {
    std::string out = "goal,runs_total,runs_reached,mean_iterations,ci\n";
    char buf[256];
    for (const auto& c : cells) {
      if (c.reached()) {
        std::snprintf(buf, sizeof(buf), "%g,%d,%d,%.17g,%.17g\n", c.goal,
                      c.runs_total, c.runs_reached, c.mean_iterations, c.ci);
      } else {
        std::snprintf(buf, sizeof(buf), "%g,%d,0,-,-\n", c.goal, c.runs_total);
      }
      out += buf;
    }
    return out;
  }
};

inline ConvergenceTable convergence_table(const std::vector<MetricLog>& runs,
                                          const std::vector<double>& goals) {
  ConvergenceTable table;
  for (double goal : goals) {
    ConvergenceCell cell;
    cell.goal = goal;
    cell.runs_total = static_cast<int>(runs.size());
    std::vector<double> iters;
    for (const MetricLog& log : runs) {
      if (auto k = iterations_to_goal(log, goal))
        iters.push_back(static_cast<double>(*k));
    }
    cell.runs_reached = static_cast<int>(iters.size());
    if (!iters.empty()) {
      double mean = 0;
      for (double v : iters) mean += v;
      mean /= static_cast<double>(iters.size());
      double var = 0;
      for (double v : iters) var += (v - mean) * (v - mean);
      var = iters.size() > 1 ? var / static_cast<double>(iters.size() - 1) : 0;
      cell.mean_iterations = mean;
      cell.ci = 1.96 * std::sqrt(var / static_cast<double>(iters.size()));
    }
    table.cells.push_back(cell);
  }
  return table;
}

inline std::vector<double> default_goals(const std::string& task) {
  if (task == "path_tracking") return {-100, -30, -10, -5};
  return {-20, -2, -0.1, -0.01};
}

// ---- trajectories and their summary statistics -------------------------------

/// One simulator step: raw state (not the learning observation), the applied
/// action, the reward collected on this step.
struct TrajectoryRow {
  long step = 0;
  int agent = 0;
  std::vector<double> state;
  std::vector<double> action;
  double reward = 0;
  bool done = false;
};

inline std::string trajectory_csv_header(const std::string& task) {
  if (task == "path_tracking")
    return "iteration,agent,u,v,r,y,phi,x,delta,acc,reward,done";
  return "iteration,agent,x,theta,xdot,thetadot,force,reward,done";
}

inline std::string trajectories_to_csv(const std::string& task,
                                       const std::vector<TrajectoryRow>& rows) {
  std::string out = trajectory_csv_header(task) + "\n";
  char buf[512];
  for (const auto& r : rows) {
    std::string line = std::to_string(r.step) + "," + std::to_string(r.agent);
    for (double v : r.state) {
      std::snprintf(buf, sizeof(buf), ",%.17g", v);
      line += buf;
    }
    for (double v : r.action) {
      std::snprintf(buf, sizeof(buf), ",%.17g", v);
      line += buf;
    }
    std::snprintf(buf, sizeof(buf), ",%.17g,%d\n", r.reward, r.done ? 1 : 0);
    line += buf;
    out += line;
  }
  return out;
}

inline std::vector<TrajectoryRow> parse_trajectory_csv(std::istream& in) {
  std::vector<TrajectoryRow> rows;
  std::string line;
  if (!std::getline(in, line)) throw MetricsError("trajectory csv: empty");
  size_t columns = split_csv_line(line).size();
  size_t state_action = columns - 4;  // minus step, agent, reward, done
  size_t state_dim = (columns == 12) ? 6 : 4;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != columns) throw MetricsError("trajectory csv: bad row");
    TrajectoryRow r;
    r.step = std::stol(cells[0]);
    r.agent = static_cast<int>(std::stol(cells[1]));
    for (size_t i = 0; i < state_dim; ++i)
      r.state.push_back(std::stod(cells[2 + i]));
    for (size_t i = state_dim; i < state_action; ++i)
      r.action.push_back(std::stod(cells[2 + i]));
    r.reward = std::stod(cells[columns - 2]);
    r.done = cells[columns - 1] == "1";
    rows.push_back(std::move(r));
  }
  return rows;
}

struct TrackingErrors {
  double y = 0, phi = 0, u = 0;
};

/// Root mean square tracking deviations over the pooled state collection.
inline TrackingErrors tracking_errors(const std::vector<TrajectoryRow>& rows,
                                      double u_ref = 20.0) {
  if (rows.empty()) return {};
  double sy = 0, sphi = 0, su = 0;
  for (const auto& r : rows) {
    if (r.state.size() != 6)
      throw MetricsError("tracking_errors: need 6-dimensional vehicle states");
    ReferencePoint ref = reference_path(r.state[5]);
    double dy = r.state[3] - ref.y_ref;
    double dphi = r.state[4] - ref.phi_ref;
    double du = r.state[0] - u_ref;
    sy += dy * dy;
    sphi += dphi * dphi;
    su += du * du;
  }
  double n = static_cast<double>(rows.size());
  return {std::sqrt(sy / n), std::sqrt(sphi / n), std::sqrt(su / n)};
}

struct StateMagnitudes {
  double x = 0, xd = 0, th = 0, thd = 0;
};

/// Root mean square state magnitudes over the pooled collection.
inline StateMagnitudes state_magnitudes(const std::vector<TrajectoryRow>& rows) {
  if (rows.empty()) return {};
  double sx = 0, sxd = 0, sth = 0, sthd = 0;
  for (const auto& r : rows) {
    if (r.state.size() != 4)
      throw MetricsError("state_magnitudes: need 4-dimensional pendulum states");
    sx += r.state[0] * r.state[0];
    sth += r.state[1] * r.state[1];
    sxd += r.state[2] * r.state[2];
    sthd += r.state[3] * r.state[3];
  }
  double n = static_cast<double>(rows.size());
  return {std::sqrt(sx / n), std::sqrt(sxd / n), std::sqrt(sth / n),
          std::sqrt(sthd / n)};
}

}  // namespace mpg
