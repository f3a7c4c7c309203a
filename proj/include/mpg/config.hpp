#pragma once

#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mpg/async_trainer.hpp"
#include "mpg/trainer.hpp"

namespace mpg {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// One experiment: task, algorithm, execution mode, seeds and every
/// hyperparameter. Zeros on the task- or variant-dependent fields mean
/// "use the published default for this task/variant".
struct RunConfig {
  // [run]
  std::string task = "path_tracking";
  std::string algorithm = "mpg_v1";
  std::string mode = "serial";  // serial | async | async_rendezvous
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  long budget = 30000;
  long eval_interval = 3000;
  int eval_episodes = 5;
  int eval_horizon = 0;  // 0: 200 path tracking, 100 inverted pendulum
  std::string out = "runs/out";
  bool deterministic_timing = false;

  // [hyper]
  double gamma = 0.98;
  double tau = 0.005;
  int batch_size = 256;
  long replay_capacity = 500000;
  double policy_lr = 3e-4;
  double policy_lr_final = 3e-6;
  double value_lr = 8e-4;
  double value_lr_final = 8e-6;
  long lr_decay_horizon = 0;  // 0: decay across the whole budget
  int hidden_units = 256;
  double eta = 0.1;
  long weight_ramp = 0;  // 0: 9000 path tracking, 4000 inverted pendulum
  int horizon = 25;
  int n_step = 25;
  int batch_reuse = 0;  // 0: 10 (1 for td3)
  int delayed_update = 2;
  double exploration_std = 0.1;
  double smoothing_std = 0.1;
  double smoothing_clip = 0.5;

  // [topology]
  int actors = 2;
  int buffers = 2;
  int learners = 12;
  long grad_queue_capacity = 4;
  long exp_queue_capacity = 8;
  int n_agent = 128;

  // [env]
  VehicleParams vehicle;
  VehicleResetRange vehicle_reset;
  PendulumParams pendulum;
  PendulumResetRange pendulum_reset;
  double pendulum_collect_angle = 0.2;  // exploration episode cut; 0 disables
  double x_feature_scale = 1200.0;  // divisor on the x observation feature

  AlgorithmSpec make_algorithm_spec() const {
    AlgorithmSpec s = make_spec(parse_algorithm(algorithm));
    s.n = n_step;
    s.horizon = horizon;
    s.delayed_update = delayed_update;
    if (batch_reuse > 0) s.batch_reuse = batch_reuse;
    s.gamma = gamma;
    s.tau = tau;
    s.exploration_std = exploration_std;
    s.smoothing_std = smoothing_std;
    s.smoothing_clip = smoothing_clip;
    s.eta = eta;
    s.weight_ramp =
        weight_ramp > 0 ? weight_ramp
                        : (task == "path_tracking" ? 9000 : 4000);
    return s;
  }

  TrainSetup make_setup(std::uint64_t seed) const {
    TrainSetup s;
    s.task = task;
    s.spec = make_algorithm_spec();
    s.hidden = hidden_units;
    s.budget = budget;
    s.eval_interval = eval_interval;
    s.eval_episodes = eval_episodes;
    s.eval_horizon =
        eval_horizon > 0 ? eval_horizon : (task == "path_tracking" ? 200 : 100);
    s.batch_size = batch_size;
    s.replay_capacity = static_cast<size_t>(replay_capacity);
    s.n_agent = n_agent;
    long decay = lr_decay_horizon > 0 ? lr_decay_horizon : budget;
    if (decay <= 0) decay = 1;
    s.policy_lr = {policy_lr, policy_lr_final, decay};
    s.value_lr = {value_lr, value_lr_final, decay};
    s.seed = seed;
    s.deterministic_timing = deterministic_timing;
    s.vehicle = vehicle;
    s.vehicle_reset = vehicle_reset;
    s.pendulum = pendulum;
    s.pendulum_reset = pendulum_reset;
    s.pendulum_collect_angle = pendulum_collect_angle;
    if (task == "path_tracking" && x_feature_scale > 0) {
      Eigen::RowVectorXd scale = Eigen::RowVectorXd::Ones(6);
      scale[5] = 1.0 / x_feature_scale;
      s.obs_scale = scale;
    }
    return s;
  }

  Topology make_topology() const {
    Topology t;
    t.actors = actors;
    t.buffers = buffers;
    t.learners = learners;
    t.grad_queue_capacity = static_cast<size_t>(grad_queue_capacity);
    t.exp_queue_capacity = static_cast<size_t>(exp_queue_capacity);
    t.rendezvous = mode == "async_rendezvous";
    if (t.rendezvous) t.actors = t.buffers = t.learners = 1;
    return t;
  }
};

namespace detail_config {

inline double parse_double(const std::string& v) {
  size_t pos = 0;
  double d = std::stod(v, &pos);
  if (pos != v.size()) throw std::invalid_argument("trailing characters");
  return d;
}

inline long parse_long(const std::string& v) {
  size_t pos = 0;
  long l = std::stol(v, &pos);
  if (pos != v.size()) throw std::invalid_argument("trailing characters");
  return l;
}

inline bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("expected true/false");
}

inline std::string format_double(double d) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", d);
  return buf;
}

struct FieldDef {
  std::string section;
  std::string key;
  std::string range_doc;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

inline const std::vector<FieldDef>& config_fields() {
  static const std::vector<FieldDef> fields = [] {
    std::vector<FieldDef> f;
    auto str = [&](const char* sec, const char* key, const char* doc,
                   std::string RunConfig::*member) {
      f.push_back({sec, key, doc,
                   [member](const RunConfig& c) { return c.*member; },
                   [member](RunConfig& c, const std::string& v) { c.*member = v; }});
    };
    auto dbl = [&](const char* sec, const char* key, const char* doc,
                   double RunConfig::*member) {
      f.push_back({sec, key, doc,
                   [member](const RunConfig& c) { return format_double(c.*member); },
                   [member](RunConfig& c, const std::string& v) {
                     c.*member = parse_double(v);
                   }});
    };
    auto lng = [&](const char* sec, const char* key, const char* doc,
                   long RunConfig::*member) {
      f.push_back({sec, key, doc,
                   [member](const RunConfig& c) { return std::to_string(c.*member); },
                   [member](RunConfig& c, const std::string& v) {
                     c.*member = parse_long(v);
                   }});
    };
    auto intf = [&](const char* sec, const char* key, const char* doc,
                    int RunConfig::*member) {
      f.push_back({sec, key, doc,
                   [member](const RunConfig& c) { return std::to_string(c.*member); },
                   [member](RunConfig& c, const std::string& v) {
                     c.*member = static_cast<int>(parse_long(v));
                   }});
    };
    auto bol = [&](const char* sec, const char* key, const char* doc,
                   bool RunConfig::*member) {
      f.push_back({sec, key, doc,
                   [member](const RunConfig& c) {
                     return std::string(c.*member ? "true" : "false");
                   },
                   [member](RunConfig& c, const std::string& v) {
                     c.*member = parse_bool(v);
                   }});
    };
    auto vdbl = [&](const char* sec, const char* key, const char* doc,
                    auto accessor) {
      f.push_back({sec, key, doc,
                   [accessor](const RunConfig& c) {
                     return format_double(accessor(const_cast<RunConfig&>(c)));
                   },
                   [accessor](RunConfig& c, const std::string& v) {
                     accessor(c) = parse_double(v);
                   }});
    };

    str("run", "task", "path_tracking | inverted_pendulum", &RunConfig::task);
    str("run", "algorithm", "mpg_v1 | mpg_v2 | nstep_dpg | nstep_adp | td3",
        &RunConfig::algorithm);
    str("run", "mode", "serial | async | async_rendezvous", &RunConfig::mode);
    f.push_back({"run", "seeds", "space-separated non-negative integers",
                 [](const RunConfig& c) {
                   std::string s;
                   for (size_t i = 0; i < c.seeds.size(); ++i) {
                     if (i) s += ' ';
                     s += std::to_string(c.seeds[i]);
                   }
                   return s;
                 },
                 [](RunConfig& c, const std::string& v) {
                   c.seeds.clear();
                   std::istringstream in(v);
                   std::string tok;
                   while (in >> tok)
                     c.seeds.push_back(static_cast<std::uint64_t>(
                         std::stoull(tok)));
                 }});
    lng("run", "budget", ">= 0", &RunConfig::budget);
    lng("run", "eval_interval", ">= 1", &RunConfig::eval_interval);
    intf("run", "eval_episodes", ">= 1", &RunConfig::eval_episodes);
    intf("run", "eval_horizon", "0 (task default) or >= 1",
         &RunConfig::eval_horizon);
    str("run", "out", "output directory", &RunConfig::out);
    bol("run", "deterministic_timing", "true | false",
        &RunConfig::deterministic_timing);

    dbl("hyper", "gamma", "(0, 1)", &RunConfig::gamma);
    dbl("hyper", "tau", "[0, 1]", &RunConfig::tau);
    intf("hyper", "batch_size", ">= 1", &RunConfig::batch_size);
    lng("hyper", "replay_capacity", ">= 1", &RunConfig::replay_capacity);
    dbl("hyper", "policy_lr", "> 0", &RunConfig::policy_lr);
    dbl("hyper", "policy_lr_final", ">= 0", &RunConfig::policy_lr_final);
    dbl("hyper", "value_lr", "> 0", &RunConfig::value_lr);
    dbl("hyper", "value_lr_final", ">= 0", &RunConfig::value_lr_final);
    lng("hyper", "lr_decay_horizon", "0 (whole budget) or >= 1",
        &RunConfig::lr_decay_horizon);
    intf("hyper", "hidden_units", ">= 1", &RunConfig::hidden_units);
    dbl("hyper", "eta", "(0, 1)", &RunConfig::eta);
    lng("hyper", "weight_ramp", "0 (task default) or >= 1",
        &RunConfig::weight_ramp);
    intf("hyper", "horizon", ">= 1", &RunConfig::horizon);
    intf("hyper", "n_step", ">= 1", &RunConfig::n_step);
    intf("hyper", "batch_reuse", "0 (variant default) or >= 1",
         &RunConfig::batch_reuse);
    intf("hyper", "delayed_update", ">= 1", &RunConfig::delayed_update);
    dbl("hyper", "exploration_std", ">= 0 (relative to action bound)",
        &RunConfig::exploration_std);
    dbl("hyper", "smoothing_std", ">= 0", &RunConfig::smoothing_std);
    dbl("hyper", "smoothing_clip", "> 0", &RunConfig::smoothing_clip);

    intf("topology", "actors", ">= 1", &RunConfig::actors);
    intf("topology", "buffers", ">= 1", &RunConfig::buffers);
    intf("topology", "learners", ">= 1", &RunConfig::learners);
    lng("topology", "grad_queue_capacity", ">= 1",
        &RunConfig::grad_queue_capacity);
    lng("topology", "exp_queue_capacity", ">= 1",
        &RunConfig::exp_queue_capacity);
    intf("topology", "n_agent", ">= 1", &RunConfig::n_agent);

    vdbl("env", "vehicle_cf", "< 0",
         [](RunConfig& c) -> double& { return c.vehicle.cf; });
    vdbl("env", "vehicle_cr", "< 0",
         [](RunConfig& c) -> double& { return c.vehicle.cr; });
    vdbl("env", "vehicle_a", "> 0",
         [](RunConfig& c) -> double& { return c.vehicle.a; });
    vdbl("env", "vehicle_b", "> 0",
         [](RunConfig& c) -> double& { return c.vehicle.b; });
    vdbl("env", "vehicle_mass", "> 0",
         [](RunConfig& c) -> double& { return c.vehicle.mass; });
    vdbl("env", "vehicle_iz", "> 0",
         [](RunConfig& c) -> double& { return c.vehicle.iz; });
    vdbl("env", "vehicle_f_sam", "> 0",
         [](RunConfig& c) -> double& { return c.vehicle.f_sam; });
    vdbl("env", "vehicle_f_sys", "> 0",
         [](RunConfig& c) -> double& { return c.vehicle.f_sys; });
    vdbl("env", "vehicle_u_ref", "> 0",
         [](RunConfig& c) -> double& { return c.vehicle.u_ref; });
    vdbl("env", "vehicle_delta_bound", "> 0",
         [](RunConfig& c) -> double& { return c.vehicle.delta_bound; });
    vdbl("env", "vehicle_acc_bound", "> 0",
         [](RunConfig& c) -> double& { return c.vehicle.acc_bound; });
    vdbl("env", "vehicle_reset_u_min", "",
         [](RunConfig& c) -> double& { return c.vehicle_reset.u_min; });
    vdbl("env", "vehicle_reset_u_max", "",
         [](RunConfig& c) -> double& { return c.vehicle_reset.u_max; });
    vdbl("env", "vehicle_reset_v_min", "",
         [](RunConfig& c) -> double& { return c.vehicle_reset.v_min; });
    vdbl("env", "vehicle_reset_v_max", "",
         [](RunConfig& c) -> double& { return c.vehicle_reset.v_max; });
    vdbl("env", "vehicle_reset_r_min", "",
         [](RunConfig& c) -> double& { return c.vehicle_reset.r_min; });
    vdbl("env", "vehicle_reset_r_max", "",
         [](RunConfig& c) -> double& { return c.vehicle_reset.r_max; });
    vdbl("env", "vehicle_reset_dy_min", "",
         [](RunConfig& c) -> double& { return c.vehicle_reset.dy_min; });
    vdbl("env", "vehicle_reset_dy_max", "",
         [](RunConfig& c) -> double& { return c.vehicle_reset.dy_max; });
    vdbl("env", "vehicle_reset_dphi_min", "",
         [](RunConfig& c) -> double& { return c.vehicle_reset.dphi_min; });
    vdbl("env", "vehicle_reset_dphi_max", "",
         [](RunConfig& c) -> double& { return c.vehicle_reset.dphi_max; });
    vdbl("env", "vehicle_reset_x_min", "",
         [](RunConfig& c) -> double& { return c.vehicle_reset.x_min; });
    vdbl("env", "vehicle_reset_x_max", "",
         [](RunConfig& c) -> double& { return c.vehicle_reset.x_max; });
    vdbl("env", "pendulum_m1", "> 0",
         [](RunConfig& c) -> double& { return c.pendulum.m1; });
    vdbl("env", "pendulum_m2", "> 0",
         [](RunConfig& c) -> double& { return c.pendulum.m2; });
    vdbl("env", "pendulum_l", "> 0",
         [](RunConfig& c) -> double& { return c.pendulum.l; });
    vdbl("env", "pendulum_g", "> 0",
         [](RunConfig& c) -> double& { return c.pendulum.g; });
    vdbl("env", "pendulum_f_sam", "> 0",
         [](RunConfig& c) -> double& { return c.pendulum.f_sam; });
    vdbl("env", "pendulum_f_sys", "> 0",
         [](RunConfig& c) -> double& { return c.pendulum.f_sys; });
    vdbl("env", "force_bound", "> 0",
         [](RunConfig& c) -> double& { return c.pendulum.force_bound; });
    vdbl("env", "pendulum_xd_bound", "> 0",
         [](RunConfig& c) -> double& { return c.pendulum.xd_bound; });
    vdbl("env", "pendulum_thd_bound", "> 0",
         [](RunConfig& c) -> double& { return c.pendulum.thd_bound; });
    dbl("env", "pendulum_collect_angle", ">= 0 (0 disables the episode cut)",
        &RunConfig::pendulum_collect_angle);
    vdbl("env", "pendulum_reset_lo", "",
         [](RunConfig& c) -> double& { return c.pendulum_reset.lo; });
    vdbl("env", "pendulum_reset_hi", "",
         [](RunConfig& c) -> double& { return c.pendulum_reset.hi; });
    dbl("env", "x_feature_scale", "> 0 (divisor on the x feature)",
        &RunConfig::x_feature_scale);
    return f;
  }();
  return fields;
}

}  // namespace detail_config

inline void set_config_field(RunConfig& cfg, const std::string& section,
                             const std::string& key, const std::string& value) {
  for (const auto& fd : detail_config::config_fields()) {
    if (fd.section == section && fd.key == key) {
      try {
        fd.set(cfg, value);
      } catch (const std::exception&) {
        throw ConfigError("config field [" + section + "] " + key +
                          ": invalid value '" + value + "' (accepted: " +
                          fd.range_doc + ")");
      }
      return;
    }
  }
  throw ConfigError("unknown config field [" + section + "] " + key);
}

/// Key-value-with-sections grammar: `[section]` headers, `key = value`
/// entries, `#` or `;` comments, blank lines ignored.
inline RunConfig parse_config(std::istream& in) {
  RunConfig cfg;
  std::string line, section;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    size_t cut = line.find_first_of("#;");
    if (cut != std::string::npos) line = line.substr(0, cut);
    auto strip = [](std::string s) {
      size_t b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      size_t e = s.find_last_not_of(" \t\r");
      return s.substr(b, e - b + 1);
    };
    line = strip(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("line " + std::to_string(line_no) +
                          ": malformed section header");
      section = line.substr(1, line.size() - 2);
      continue;
    }
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) +
                        ": expected key = value");
    std::string key = strip(line.substr(0, eq));
    std::string value = strip(line.substr(eq + 1));
    set_config_field(cfg, section, key, value);
  }
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path);
  return parse_config(f);
}

inline std::string serialize_config(const RunConfig& cfg) {
  std::string out;
  std::string section;
  for (const auto& fd : detail_config::config_fields()) {
    if (fd.section != section) {
      if (!out.empty()) out += "\n";
      section = fd.section;
      out += "[" + section + "]\n";
    }
    out += fd.key + " = " + fd.get(cfg) + "\n";
  }
  return out;
}

/// Environment variable overrides: MPG_<SECTION>_<KEY>, uppercase.
inline void apply_env_overrides(RunConfig& cfg) {
  for (const auto& fd : detail_config::config_fields()) {
    std::string name = "MPG_" + fd.section + "_" + fd.key;
    for (char& ch : name) ch = static_cast<char>(std::toupper(ch));
    if (const char* v = std::getenv(name.c_str())) {
      set_config_field(cfg, fd.section, fd.key, v);
    }
  }
}

inline void validate_config(const RunConfig& cfg) {
  auto fail = [](const std::string& field, const std::string& range) {
    throw ConfigError("config field " + field + ": out of range (accepted: " +
                      range + ")");
  };
  if (cfg.task != "path_tracking" && cfg.task != "inverted_pendulum")
    fail("[run] task", "path_tracking | inverted_pendulum");
  try {
    parse_algorithm(cfg.algorithm);
  } catch (const AlgoError&) {
    fail("[run] algorithm", "mpg_v1 | mpg_v2 | nstep_dpg | nstep_adp | td3");
  }
  if (cfg.mode != "serial" && cfg.mode != "async" &&
      cfg.mode != "async_rendezvous")
    fail("[run] mode", "serial | async | async_rendezvous");
  if (cfg.seeds.empty()) fail("[run] seeds", "at least one seed");
  if (cfg.budget < 0) fail("[run] budget", ">= 0");
  if (cfg.eval_interval < 1) fail("[run] eval_interval", ">= 1");
  if (cfg.eval_episodes < 1) fail("[run] eval_episodes", ">= 1");
  if (cfg.gamma <= 0 || cfg.gamma >= 1) fail("[hyper] gamma", "(0, 1)");
  if (cfg.tau < 0 || cfg.tau > 1) fail("[hyper] tau", "[0, 1]");
  if (cfg.batch_size < 1) fail("[hyper] batch_size", ">= 1");
  if (cfg.replay_capacity < 1) fail("[hyper] replay_capacity", ">= 1");
  if (cfg.eta <= 0 || cfg.eta >= 1) fail("[hyper] eta", "(0, 1)");
  if (cfg.horizon < 1) fail("[hyper] horizon", ">= 1");
  if (cfg.n_step < 1) fail("[hyper] n_step", ">= 1");
  if (cfg.delayed_update < 1) fail("[hyper] delayed_update", ">= 1");
  if (cfg.actors < 1) fail("[topology] actors", ">= 1");
  if (cfg.buffers < 1) fail("[topology] buffers", ">= 1");
  if (cfg.learners < 1) fail("[topology] learners", ">= 1");
  if (cfg.grad_queue_capacity < 1)
    fail("[topology] grad_queue_capacity", ">= 1");
  if (cfg.exp_queue_capacity < 1) fail("[topology] exp_queue_capacity", ">= 1");
  if (cfg.n_agent < 1) fail("[topology] n_agent", ">= 1");
  if (cfg.x_feature_scale <= 0) fail("[env] x_feature_scale", "> 0");
}

/// Hard-coded task floor for "good enough" plots and tables.
inline double minimum_return(const std::string& task) {
  if (task == "path_tracking") return -30.0;
  if (task == "inverted_pendulum") return -2.0;
  throw ConfigError("minimum_return: unknown task '" + task + "'");
}

}  // namespace mpg
