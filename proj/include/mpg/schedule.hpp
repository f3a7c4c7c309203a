#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace mpg {

struct ScheduleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Ramp base: rises linearly from 1-eta to 1+eta over T iterations, then
/// holds.
inline double lambda_value(long k, double eta, long T) {
  if (k < 0) throw ScheduleError("lambda_value: negative iteration");
  if (T <= 0) throw ScheduleError("lambda_value: ramp length must be positive");
  double frac = static_cast<double>(std::min(k, T)) / static_cast<double>(T);
  return (1.0 - eta) + 2.0 * eta * frac;
}

/// Rule-based horizon weights. Each horizon gets an error proxy that decays
/// exponentially for lambda <= 1 and grows for lambda > 1; the softmax of the
/// inverse errors yields weights on the simplex.
inline std::vector<double> rule_weights(double lambda,
                                        const std::vector<int>& horizons) {
  if (horizons.empty()) throw ScheduleError("rule_weights: no horizons");
  if (std::find(horizons.begin(), horizons.end(), 0) == horizons.end())
    throw ScheduleError("rule_weights: horizon set must include 0");
  if (lambda <= 0.0 || lambda >= 2.0)
    throw ScheduleError("rule_weights: lambda out of (0, 2)");
  int max_i = *std::max_element(horizons.begin(), horizons.end());
  std::vector<double> inv_err(horizons.size());
  for (size_t j = 0; j < horizons.size(); ++j) {
    int i = horizons[j];
    double err = lambda <= 1.0 ? std::pow(lambda, i)
                               : std::pow(2.0 - lambda, max_i - i);
    inv_err[j] = 1.0 / err;
  }
  double top = *std::max_element(inv_err.begin(), inv_err.end());
  double total = 0.0;
  std::vector<double> w(horizons.size());
  for (size_t j = 0; j < w.size(); ++j) {
    w[j] = std::exp(inv_err[j] - top);
    total += w[j];
  }
  for (double& v : w) v /= total;
  return w;
}

/// Iteration-indexed weights for the two-horizon mixture.
struct WeightSchedule {
  double eta = 0.1;
  long ramp_iterations = 9000;
  int horizon = 25;

  double lambda(long k) const { return lambda_value(k, eta, ramp_iterations); }

  // (w0, wH) at iteration k.
  std::pair<double, double> at(long k) const {
    std::vector<double> w = rule_weights(lambda(k), {0, horizon});
    return {w[0], w[1]};
  }
};

}  // namespace mpg
