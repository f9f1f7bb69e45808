#ifndef SYMPOP_CHAIN_HPP
#define SYMPOP_CHAIN_HPP

#include "sympop/core.hpp"
#include "sympop/dynamics.hpp"
#include "sympop/game.hpp"
#include "sympop/grid.hpp"
#include "sympop/protocol.hpp"
#include "sympop/table.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

namespace sympop {

/// Off-diagonal generator entry: one agent of `population` switches
/// `from` -> `to`, moving the state by (e_to - e_from) / N.
struct Transition {
  std::size_t target;
  double rate;
  int population;
  int from;
  int to;
};

/// Finite-N Markov jump process on the lattice X^N. The generator is stored
/// row-wise; the diagonal is implied by `exit_rates` (q_xx = -exit_rates[x]).
class FiniteChain {
 public:
  std::shared_ptr<const JointGrid> grid;
  std::vector<std::int64_t> sizes;
  std::vector<std::vector<Transition>> rows;
  std::vector<double> exit_rates;

  std::size_t size() const { return rows.size(); }

  /// q_xy for x != y, 0 when there is no edge.
  double rate(std::size_t from, std::size_t to) const {
    const auto& row = rows[from];
    auto it = std::lower_bound(row.begin(), row.end(), to,
                               [](const Transition& t, std::size_t v) { return t.target < v; });
    return it != row.end() && it->target == to ? it->rate : 0.0;
  }

  double max_abs_entry() const {
    double m = 0.0;
    for (std::size_t x = 0; x < rows.size(); ++x) {
      m = std::max(m, exit_rates[x]);
      for (const auto& t : rows[x]) m = std::max(m, t.rate);
    }
    return m;
  }

  double max_row_sum_error() const {
    double m = 0.0;
    for (std::size_t x = 0; x < rows.size(); ++x) {
      double s = -exit_rates[x];
      for (const auto& t : rows[x]) s += t.rate;
      m = std::max(m, std::abs(s));
    }
    return m;
  }

  Matrix dense_generator() const {
    Matrix q = Matrix::Zero(static_cast<Eigen::Index>(size()), static_cast<Eigen::Index>(size()));
    for (std::size_t x = 0; x < rows.size(); ++x) {
      const auto xi = static_cast<Eigen::Index>(x);
      q(xi, xi) = -exit_rates[x];
      for (const auto& t : rows[x]) q(xi, static_cast<Eigen::Index>(t.target)) += t.rate;
    }
    return q;
  }
};

/// Generator of the Markov process with q(x -> x + (e_j - e_i)/N^p) =
/// N^p x_i^p rho^p_ij(F(x), x^p) = k_i^p rho^p_ij.
inline FiniteChain build_generator(const PopulationGame& game, const Protocols& protocols,
                                   const std::vector<std::int64_t>& sizes, double limit = kDefaultGridLimit) {
  check_protocol_count(game, protocols);
  FiniteChain chain;
  chain.grid = std::make_shared<const JointGrid>(JointGrid::for_game(game, sizes, limit));
  chain.sizes = sizes;
  const JointGrid& grid = *chain.grid;
  chain.rows.resize(grid.size());
  chain.exit_rates.assign(grid.size(), 0.0);

  for (std::size_t x = 0; x < grid.size(); ++x) {
    const SocialState state = grid.social_state(x, sizes);
    const auto rates = evaluate_rates(game, protocols, state);
    auto& row = chain.rows[x];
    for (std::size_t p = 0; p < grid.num_populations(); ++p) {
      const StateGrid& pg = grid.population(p);
      const std::size_t own = grid.component(x, p);
      auto span = pg.state(own);
      std::vector<std::int64_t> counts(span.begin(), span.end());
      for (int i = 0; i < pg.parts(); ++i) {
        const auto ki = counts[static_cast<std::size_t>(i)];
        if (ki == 0) continue;
        for (int j = 0; j < pg.parts(); ++j) {
          if (i == j) continue;
          const double r = static_cast<double>(ki) * rates[p](i, j);
          if (r == 0.0) continue;
          --counts[static_cast<std::size_t>(i)];
          ++counts[static_cast<std::size_t>(j)];
          const std::size_t moved = pg.index_of(counts);
          ++counts[static_cast<std::size_t>(i)];
          --counts[static_cast<std::size_t>(j)];
          const std::size_t target = x - own * grid.stride(p) + moved * grid.stride(p);
          row.push_back({target, r, static_cast<int>(p), i, j});
        }
      }
    }
    std::sort(row.begin(), row.end(), [](const Transition& a, const Transition& b) { return a.target < b.target; });
    double exit = 0.0;
    for (const auto& t : row) exit += t.rate;
    chain.exit_rates[x] = exit;
  }
  return chain;
}

/// Strongly connected components of the transition graph (iterative Tarjan).
inline std::vector<std::vector<std::size_t>> communicating_classes(const FiniteChain& chain) {
  const std::size_t n = chain.size();
  constexpr std::size_t unvisited = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> index(n, unvisited), low(n, 0);
  std::vector<char> on_stack(n, 0);
  std::vector<std::size_t> stack;
  std::vector<std::vector<std::size_t>> classes;
  std::size_t counter = 0;

  struct Frame {
    std::size_t node;
    std::size_t edge;
  };
  std::vector<Frame> call;
  for (std::size_t root = 0; root < n; ++root) {
    if (index[root] != unvisited) continue;
    call.push_back({root, 0});
    index[root] = low[root] = counter++;
    stack.push_back(root);
    on_stack[root] = 1;
    while (!call.empty()) {
      Frame& f = call.back();
      const auto& row = chain.rows[f.node];
      if (f.edge < row.size()) {
        const std::size_t w = row[f.edge++].target;
        if (index[w] == unvisited) {
          index[w] = low[w] = counter++;
          stack.push_back(w);
          on_stack[w] = 1;
          call.push_back({w, 0});
        } else if (on_stack[w]) {
          low[f.node] = std::min(low[f.node], index[w]);
        }
        continue;
      }
      const std::size_t v = f.node;
      call.pop_back();
      if (!call.empty()) low[call.back().node] = std::min(low[call.back().node], low[v]);
      if (low[v] == index[v]) {
        std::vector<std::size_t> cls;
        std::size_t w;
        do {
          w = stack.back();
          stack.pop_back();
          on_stack[w] = 0;
          cls.push_back(w);
        } while (w != v);
        std::sort(cls.begin(), cls.end());
        classes.push_back(std::move(cls));
      }
    }
  }
  std::sort(classes.begin(), classes.end());
  return classes;
}

inline bool is_irreducible(const FiniteChain& chain) { return communicating_classes(chain).size() == 1; }

enum class StationaryMethod { automatic, dense_lu, power_iteration };

struct StationaryOptions {
  StationaryMethod method = StationaryMethod::automatic;
  std::size_t dense_limit = 20000;
  double relative_tolerance = 1e-12;
  std::size_t max_iterations = 50'000'000;
};

/// ||mu Q||_inf.
inline double stationary_residual(const FiniteChain& chain, const std::vector<double>& mu) {
  std::vector<double> flow(chain.size(), 0.0);
  for (std::size_t x = 0; x < chain.size(); ++x) {
    flow[x] -= mu[x] * chain.exit_rates[x];
    for (const auto& t : chain.rows[x]) flow[t.target] += mu[x] * t.rate;
  }
  double m = 0.0;
  for (double f : flow) m = std::max(m, std::abs(f));
  return m;
}

namespace detail {

inline std::vector<double> solve_dense_lu(const FiniteChain& chain) {
  const auto n = static_cast<Eigen::Index>(chain.size());
  // Q^T mu = 0 with the last balance equation replaced by sum(mu) = 1.
  Matrix a = chain.dense_generator().transpose();
  a.row(n - 1).setOnes();
  Vector b = Vector::Zero(n);
  b[n - 1] = 1.0;
  Eigen::PartialPivLU<Matrix> lu(a);
  Vector mu = lu.solve(b);
  // One step of iterative refinement.
  mu += lu.solve(b - a * mu);
  return {mu.data(), mu.data() + n};
}

inline std::vector<double> solve_power(const FiniteChain& chain, double tolerance, std::size_t max_iterations,
                                       std::size_t& iterations) {
  const std::size_t n = chain.size();
  double lambda = 0.0;
  for (double e : chain.exit_rates) lambda = std::max(lambda, e);
  lambda *= 1.05;
  std::vector<double> mu(n, 1.0 / static_cast<double>(n)), next(n);
  for (iterations = 1; iterations <= max_iterations; ++iterations) {
    for (std::size_t x = 0; x < n; ++x) next[x] = mu[x] * (1.0 - chain.exit_rates[x] / lambda);
    for (std::size_t x = 0; x < n; ++x) {
      for (const auto& t : chain.rows[x]) next[t.target] += mu[x] * t.rate / lambda;
    }
    const double s = pairwise_sum(next);
    for (std::size_t x = 0; x < n; ++x) mu[x] = next[x] / s;
    if (iterations % 64 == 0 && stationary_residual(chain, mu) <= tolerance) return mu;
  }
  throw SolverError(fmt::format("power iteration did not reach residual {} in {} iterations", tolerance,
                                max_iterations));
}

}  // namespace detail

/// Exact stationary distribution mu Q = 0, sum mu = 1. Dense LU up to
/// `dense_limit` states, uniformized power iteration above.
inline StationaryTable exact_stationary(const FiniteChain& chain, const StationaryOptions& opts = {}) {
  const auto classes = communicating_classes(chain);
  if (classes.size() != 1) {
    std::string msg = fmt::format("chain is reducible: {} communicating classes (sizes", classes.size());
    for (std::size_t c = 0; c < std::min<std::size_t>(classes.size(), 10); ++c) {
      msg += fmt::format(" {}", classes[c].size());
    }
    if (classes.size() > 10) msg += " ...";
    msg += ")";
    throw ReducibleChain(msg, classes);
  }

  const double tol = opts.relative_tolerance * std::max(chain.max_abs_entry(), std::numeric_limits<double>::min());
  StationaryMethod method = opts.method;
  if (method == StationaryMethod::automatic) {
    method = chain.size() <= opts.dense_limit ? StationaryMethod::dense_lu : StationaryMethod::power_iteration;
  }

  StationaryTable table;
  table.grid = chain.grid;
  table.provenance = Provenance::exact;
  std::size_t iterations = 0;
  if (method == StationaryMethod::dense_lu) {
    table.probabilities = detail::solve_dense_lu(chain);
    table.metadata["solver"] = "dense_lu";
  } else {
    table.probabilities = detail::solve_power(chain, tol, opts.max_iterations, iterations);
    table.metadata["solver"] = "power_iteration";
    table.metadata["iterations"] = std::to_string(iterations);
  }
  for (auto& p : table.probabilities) {
    // LU can leave values of order -1e-17 where the true mass is tiny.
    if (p < 0.0) p = 0.0;
  }
  table.normalize();
  const double residual = stationary_residual(chain, table.probabilities);
  if (!(residual <= tol)) {
    throw SolverError(fmt::format("stationary residual {} exceeds {}", residual, tol));
  }
  table.metadata["residual"] = fmt::format("{:.17g}", residual);
  table.metadata["states"] = std::to_string(chain.size());
  return table;
}

struct DetailedBalanceReport {
  double max_imbalance = 0.0;
  std::size_t worst_from = 0;
  std::size_t worst_to = 0;
};

/// max |mu_x q_xy - mu_y q_yx| over edges, divided by the largest edge flow.
inline DetailedBalanceReport check_detailed_balance(const FiniteChain& chain, const StationaryTable& stationary) {
  if (stationary.provenance != Provenance::exact) {
    throw PreconditionError("detailed balance needs an exact stationary table");
  }
  if (stationary.size() != chain.size()) throw DimensionError("stationary table does not match the chain");
  DetailedBalanceReport rep;
  double max_flow = 0.0;
  double max_gap = 0.0;
  for (std::size_t x = 0; x < chain.size(); ++x) {
    for (const auto& t : chain.rows[x]) {
      const double forward = stationary[x] * t.rate;
      const double backward = stationary[t.target] * chain.rate(t.target, x);
      max_flow = std::max(max_flow, forward);
      const double gap = std::abs(forward - backward);
      if (gap > max_gap) {
        max_gap = gap;
        rep.worst_from = x;
        rep.worst_to = t.target;
      }
    }
  }
  rep.max_imbalance = max_flow > 0.0 ? max_gap / max_flow : 0.0;
  return rep;
}

// ---------------------------------------------------------------------------
// Simulation

/// 64-bit Mersenne Twister; the seed is recorded with every output.
using Rng = std::mt19937_64;

/// Uniform on (0, 1], built directly from the generator bits so paths do not
/// depend on the standard library's distribution implementations.
inline double uniform_open_closed(Rng& rng) {
  return (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53;
}

struct PathEvent {
  double time;
  std::vector<std::int64_t> counts;  // all populations concatenated
};

struct SamplePath {
  std::uint64_t seed = 0;
  double horizon = 0.0;
  std::vector<std::int64_t> sizes;
  std::vector<int> strategy_counts;
  std::vector<PathEvent> events;  // first event is the initial state at t = 0
};

struct SimulationResult {
  SamplePath path;
  std::optional<StationaryTable> occupancy;
};

namespace detail {

inline std::vector<std::int64_t> flatten(const std::vector<std::vector<std::int64_t>>& counts) {
  std::vector<std::int64_t> out;
  for (const auto& c : counts) out.insert(out.end(), c.begin(), c.end());
  return out;
}

}  // namespace detail

/// Gillespie realization of a precomputed chain, started at grid index
/// `start`. Occupancy is the time-weighted visit distribution over
/// [burn_in, horizon].
inline SimulationResult simulate_path(const FiniteChain& chain, std::size_t start, double horizon,
                                      std::uint64_t seed, double burn_in = 0.0) {
  if (!(horizon > 0.0)) throw PreconditionError("horizon must be positive");
  if (burn_in < 0.0 || burn_in >= horizon) throw PreconditionError("burn-in must lie in [0, T)");
  if (start >= chain.size()) throw PreconditionError("start state is not on the grid");
  Rng rng(seed);
  SimulationResult res;
  res.path.seed = seed;
  res.path.horizon = horizon;
  res.path.sizes = chain.sizes;
  for (const auto& g : chain.grid->populations()) res.path.strategy_counts.push_back(g.parts());

  std::vector<double> occupancy(chain.size(), 0.0);
  std::size_t x = start;
  double t = 0.0;
  res.path.events.push_back({0.0, detail::flatten(chain.grid->counts(x))});
  while (true) {
    const double exit = chain.exit_rates[x];
    const double hold = exit > 0.0 ? -std::log(uniform_open_closed(rng)) / exit
                                   : std::numeric_limits<double>::infinity();
    const double next_t = t + hold;
    const double lo = std::max(t, burn_in);
    const double hi = std::min(next_t, horizon);
    if (hi > lo) occupancy[x] += hi - lo;
    if (next_t >= horizon) break;
    double u = uniform_open_closed(rng) * exit;
    const auto& row = chain.rows[x];
    std::size_t pick = row.size() - 1;
    for (std::size_t k = 0; k < row.size(); ++k) {
      u -= row[k].rate;
      if (u <= 0.0) {
        pick = k;
        break;
      }
    }
    x = row[pick].target;
    t = next_t;
    res.path.events.push_back({t, detail::flatten(chain.grid->counts(x))});
  }
  StationaryTable occ;
  occ.grid = chain.grid;
  occ.provenance = Provenance::empirical;
  occ.probabilities = std::move(occupancy);
  occ.normalize();
  occ.metadata["seed"] = std::to_string(seed);
  occ.metadata["horizon"] = fmt::format("{:.17g}", horizon);
  occ.metadata["burn_in"] = fmt::format("{:.17g}", burn_in);
  res.occupancy = std::move(occ);
  return res;
}

/// Gillespie realization with rates evaluated on the fly; for lattices too
/// large to enumerate.
inline SamplePath simulate_path(const PopulationGame& game, const Protocols& protocols, const LatticeState& x0,
                                double horizon, std::uint64_t seed) {
  check_protocol_count(game, protocols);
  if (!(horizon > 0.0)) throw PreconditionError("horizon must be positive");
  if (x0.counts.size() != static_cast<std::size_t>(game.num_populations())) {
    throw DimensionError("initial state has the wrong population count");
  }
  for (int p = 0; p < game.num_populations(); ++p) {
    const auto& c = x0.counts[static_cast<std::size_t>(p)];
    if (c.size() != static_cast<std::size_t>(game.strategy_count(p))) {
      throw DimensionError("initial state has the wrong strategy count");
    }
    std::int64_t s = 0;
    for (auto k : c) {
      if (k < 0) throw PreconditionError("initial state has negative counts");
      s += k;
    }
    if (s != JointGrid::lattice_total(x0.resolution[static_cast<std::size_t>(p)], game.mass(p))) {
      throw PreconditionError("initial state counts do not sum to N * mass");
    }
  }
  Rng rng(seed);
  SamplePath path;
  path.seed = seed;
  path.horizon = horizon;
  path.sizes = x0.resolution;
  path.strategy_counts = game.strategy_counts();

  LatticeState x = x0;
  double t = 0.0;
  path.events.push_back({0.0, detail::flatten(x.counts)});
  std::vector<Transition> moves;
  while (true) {
    const auto rates = evaluate_rates(game, protocols, x.to_continuous());
    moves.clear();
    double exit = 0.0;
    for (std::size_t p = 0; p < rates.size(); ++p) {
      const auto& c = x.counts[p];
      for (std::size_t i = 0; i < c.size(); ++i) {
        if (c[i] == 0) continue;
        for (std::size_t j = 0; j < c.size(); ++j) {
          if (i == j) continue;
          const double r = static_cast<double>(c[i]) *
                           rates[p](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
          if (r == 0.0) continue;
          moves.push_back({0, r, static_cast<int>(p), static_cast<int>(i), static_cast<int>(j)});
          exit += r;
        }
      }
    }
    if (exit <= 0.0) break;
    t += -std::log(uniform_open_closed(rng)) / exit;
    if (t >= horizon) break;
    double u = uniform_open_closed(rng) * exit;
    std::size_t pick = moves.size() - 1;
    for (std::size_t k = 0; k < moves.size(); ++k) {
      u -= moves[k].rate;
      if (u <= 0.0) {
        pick = k;
        break;
      }
    }
    const auto& m = moves[pick];
    --x.counts[static_cast<std::size_t>(m.population)][static_cast<std::size_t>(m.from)];
    ++x.counts[static_cast<std::size_t>(m.population)][static_cast<std::size_t>(m.to)];
    path.events.push_back({t, detail::flatten(x.counts)});
  }
  return path;
}

/// Time-weighted occupancy of a path over [burn_in, horizon] on `grid`.
inline StationaryTable occupancy_table(const SamplePath& path, std::shared_ptr<const JointGrid> grid,
                                       double burn_in = 0.0) {
  if (burn_in < 0.0 || burn_in >= path.horizon) throw PreconditionError("burn-in must lie in [0, T)");
  StationaryTable occ;
  occ.grid = grid;
  occ.provenance = Provenance::empirical;
  occ.probabilities.assign(grid->size(), 0.0);
  for (std::size_t e = 0; e < path.events.size(); ++e) {
    const double t0 = std::max(path.events[e].time, burn_in);
    const double t1 = e + 1 < path.events.size() ? path.events[e + 1].time : path.horizon;
    if (t1 <= t0) continue;
    std::vector<std::vector<std::int64_t>> counts;
    std::size_t offset = 0;
    for (int n : path.strategy_counts) {
      counts.emplace_back(path.events[e].counts.begin() + static_cast<std::ptrdiff_t>(offset),
                          path.events[e].counts.begin() + static_cast<std::ptrdiff_t>(offset + static_cast<std::size_t>(n)));
      offset += static_cast<std::size_t>(n);
    }
    occ.probabilities[grid->index_of(counts)] += t1 - t0;
  }
  occ.normalize();
  occ.metadata["seed"] = std::to_string(path.seed);
  return occ;
}

/// A right-continuous step function of continuous states.
struct StepPath {
  double horizon = 0.0;
  std::vector<double> times;
  std::vector<Vector> states;
};

inline StepPath to_step_path(const SamplePath& path) {
  StepPath out;
  out.horizon = path.horizon;
  for (const auto& e : path.events) {
    Vector v(static_cast<Eigen::Index>(e.counts.size()));
    std::size_t offset = 0;
    for (std::size_t p = 0; p < path.strategy_counts.size(); ++p) {
      for (int i = 0; i < path.strategy_counts[p]; ++i, ++offset) {
        v[static_cast<Eigen::Index>(offset)] =
            static_cast<double>(e.counts[offset]) / static_cast<double>(path.sizes[p]);
      }
    }
    out.times.push_back(e.time);
    out.states.push_back(std::move(v));
  }
  return out;
}

/// The trajectory as a sample-and-hold step function.
inline StepPath to_step_path(const Trajectory& traj) {
  StepPath out;
  out.horizon = traj.horizon();
  out.times = traj.times;
  for (const auto& s : traj.states) out.states.push_back(s.flat());
  return out;
}

/// sup_{t <= T} ||X_t - x_t||_inf with both paths held constant between
/// their own time points; exact over the merged time grid.
inline double deviation_vs_ode(const StepPath& path, const StepPath& reference) {
  if (path.times.empty() || reference.times.empty()) throw PreconditionError("empty path");
  const double horizon = reference.horizon;
  if (std::abs(path.horizon - horizon) > 1e-9 * std::max(1.0, horizon)) {
    throw PreconditionError(fmt::format("path horizon {} does not match trajectory horizon {}", path.horizon,
                                        horizon));
  }
  if (path.states.front().size() != reference.states.front().size()) {
    throw DimensionError("path and trajectory have different state dimensions");
  }
  std::size_t a = 0;
  std::size_t b = 0;
  double sup = 0.0;
  double t = 0.0;
  while (true) {
    while (a + 1 < path.times.size() && path.times[a + 1] <= t) ++a;
    while (b + 1 < reference.times.size() && reference.times[b + 1] <= t) ++b;
    sup = std::max(sup, (path.states[a] - reference.states[b]).cwiseAbs().maxCoeff());
    double next = std::numeric_limits<double>::infinity();
    if (a + 1 < path.times.size()) next = std::min(next, path.times[a + 1]);
    if (b + 1 < reference.times.size()) next = std::min(next, reference.times[b + 1]);
    if (!(next <= horizon)) break;
    t = next;
  }
  return sup;
}

inline double deviation_vs_ode(const SamplePath& path, const Trajectory& traj) {
  return deviation_vs_ode(to_step_path(path), to_step_path(traj));
}

inline void write_path_csv(std::ostream& os, const SamplePath& path,
                           const std::map<std::string, std::string>& metadata = {}) {
  for (const auto& [k, v] : metadata) os << "# " << k << ": " << v << "\n";
  os << "t,state_counts\n";
  for (const auto& e : path.events) {
    std::vector<std::vector<std::int64_t>> counts;
    std::size_t offset = 0;
    for (int n : path.strategy_counts) {
      counts.emplace_back(e.counts.begin() + static_cast<std::ptrdiff_t>(offset),
                          e.counts.begin() + static_cast<std::ptrdiff_t>(offset + static_cast<std::size_t>(n)));
      offset += static_cast<std::size_t>(n);
    }
    os << fmt::format("{:.17g},", e.time) << format_counts(counts) << "\n";
  }
}

}  // namespace sympop

#endif  // SYMPOP_CHAIN_HPP
