#ifndef SYMPOP_DYNAMICS_HPP
#define SYMPOP_DYNAMICS_HPP

#include "sympop/core.hpp"
#include "sympop/game.hpp"
#include "sympop/protocol.hpp"

#include <fmt/format.h>

#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace sympop {

/// Mean dynamic velocity: xdot_i = sum_j x_j rho_ji - x_i sum_j rho_ij,
/// per population. Self-switches cancel and are skipped.
inline std::vector<Vector> mean_dynamic_rhs(const PopulationGame& game, const Protocols& protocols,
                                            const SocialState& state) {
  const auto rates = evaluate_rates(game, protocols, state);
  std::vector<Vector> out;
  out.reserve(rates.size());
  for (std::size_t p = 0; p < rates.size(); ++p) {
    const Matrix& r = rates[p];
    const Vector& x = state[p];
    Vector v = Vector::Zero(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      for (Eigen::Index j = 0; j < x.size(); ++j) {
        if (i == j) continue;
        const double flow = x[i] * r(i, j);
        v[i] -= flow;
        v[j] += flow;
      }
    }
    out.push_back(std::move(v));
  }
  return out;
}

struct ClampEvent {
  std::int64_t step;
  int population;
  double min_value;
};

struct Trajectory {
  double dt = 0.0;
  std::vector<double> times;
  std::vector<SocialState> states;
  std::vector<ClampEvent> clamp_events;

  std::size_t size() const { return times.size(); }
  double horizon() const { return times.empty() ? 0.0 : times.back(); }
};

struct IntegrationOptions {
  /// Negative entries below this are a hard error rather than float leakage.
  double negative_tolerance = 1e-9;
  double blowup_factor = 10.0;
};

namespace detail {

inline SocialState axpy(const SocialState& x, double h, const std::vector<Vector>& k) {
  SocialState out = x;
  for (std::size_t p = 0; p < out.populations.size(); ++p) out[p] += h * k[p];
  return out;
}

}  // namespace detail

/// Classical fixed-step RK4 on the mean dynamic. After each step the mass
/// drift is removed per population; tiny negative entries are clamped to
/// zero, renormalized, and logged in `clamp_events`.
inline Trajectory integrate_mean_dynamic(const PopulationGame& game, const Protocols& protocols,
                                         const SocialState& x0, double horizon, double dt,
                                         const IntegrationOptions& opts = {}) {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw PreconditionError("horizon must be positive");
  if (!(dt > 0.0) || dt > horizon * (1.0 + 1e-12)) throw PreconditionError("dt must satisfy 0 < dt <= T");
  if (!game.is_valid_state(x0, 1e-9)) throw PreconditionError("initial state is not a valid social state");

  const auto steps = static_cast<std::int64_t>(std::ceil(horizon / dt - 1e-9));
  Trajectory traj;
  traj.dt = dt;
  traj.times.reserve(static_cast<std::size_t>(steps) + 1);
  traj.states.reserve(static_cast<std::size_t>(steps) + 1);
  traj.times.push_back(0.0);
  traj.states.push_back(x0);

  SocialState x = x0;
  for (std::int64_t s = 1; s <= steps; ++s) {
    const auto k1 = mean_dynamic_rhs(game, protocols, x);
    const auto k2 = mean_dynamic_rhs(game, protocols, detail::axpy(x, dt / 2, k1));
    const auto k3 = mean_dynamic_rhs(game, protocols, detail::axpy(x, dt / 2, k2));
    const auto k4 = mean_dynamic_rhs(game, protocols, detail::axpy(x, dt, k3));
    for (std::size_t p = 0; p < x.populations.size(); ++p) {
      x[p] += (dt / 6.0) * (k1[p] + 2.0 * k2[p] + 2.0 * k3[p] + k4[p]);
      const double m = game.mass(static_cast<int>(p));
      const auto n = static_cast<double>(x[p].size());
      if (!x[p].allFinite() || x[p].cwiseAbs().maxCoeff() > opts.blowup_factor * m) {
        throw IntegrationDiverged(fmt::format("mean dynamic integration diverged at step {} (t = {})", s,
                                              static_cast<double>(s) * dt),
                                  s);
      }
      x[p].array() -= (x[p].sum() - m) / n;
      const double lo = x[p].minCoeff();
      if (lo < 0.0) {
        if (lo < -opts.negative_tolerance) {
          throw IntegrationDiverged(
              fmt::format("mean dynamic left the simplex at step {} (min entry {})", s, lo), s);
        }
        traj.clamp_events.push_back({s, static_cast<int>(p), lo});
        x[p] = x[p].cwiseMax(0.0);
        x[p] *= m / x[p].sum();
      }
    }
    traj.times.push_back(static_cast<double>(s) * dt);
    traj.states.push_back(x);
  }
  return traj;
}

/// Rest point reached by integrating from `start` until the velocity
/// sup-norm drops to `tolerance`.
struct RestPoint {
  SocialState state;
  double residual;
};

inline double rhs_sup_norm(const std::vector<Vector>& v) {
  double out = 0.0;
  for (const auto& p : v) out = std::max(out, p.cwiseAbs().maxCoeff());
  return out;
}

inline RestPoint find_rest_point(const PopulationGame& game, const Protocols& protocols,
                                 const SocialState& start, double tolerance = 1e-10, double dt = 0.01,
                                 double max_time = 1e4) {
  SocialState x = start;
  double residual = rhs_sup_norm(mean_dynamic_rhs(game, protocols, x));
  double elapsed = 0.0;
  const double chunk = 10.0;
  while (residual > tolerance && elapsed < max_time) {
    const auto traj = integrate_mean_dynamic(game, protocols, x, chunk, dt);
    x = traj.states.back();
    elapsed += chunk;
    residual = rhs_sup_norm(mean_dynamic_rhs(game, protocols, x));
  }
  if (residual > tolerance) {
    throw SolverError(fmt::format("mean dynamic did not settle at a rest point (residual {})", residual));
  }
  return {x, residual};
}

/// CSV with header t,x_1,...,x_n (multi-population: x{p}_{i}).
inline void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  if (traj.states.empty()) return;
  const auto& first = traj.states.front();
  os << "t";
  for (std::size_t p = 0; p < first.num_populations(); ++p) {
    for (Eigen::Index i = 0; i < first[p].size(); ++i) {
      if (first.num_populations() == 1) {
        os << ",x_" << i + 1;
      } else {
        os << ",x" << p + 1 << "_" << i + 1;
      }
    }
  }
  os << "\n";
  for (std::size_t k = 0; k < traj.size(); ++k) {
    os << fmt::format("{:.17g}", traj.times[k]);
    for (const auto& v : traj.states[k].populations) {
      for (Eigen::Index i = 0; i < v.size(); ++i) os << fmt::format(",{:.17g}", v[i]);
    }
    os << "\n";
  }
}

}  // namespace sympop

#endif  // SYMPOP_DYNAMICS_HPP
