#ifndef SYMPOP_STATIONARY_HPP
#define SYMPOP_STATIONARY_HPP

#include "sympop/chain.hpp"
#include "sympop/core.hpp"
#include "sympop/game.hpp"
#include "sympop/grid.hpp"
#include "sympop/table.hpp"
#include "sympop/transform.hpp"

#include <fmt/format.h>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace sympop {

/// Binomial factor of the product: (K - j + 1) / j, or the literal printed
/// (K - j - 1) / j.
enum class FactorVariant { standard, paper };
/// standard: up-rate at j-1 over down-rate at j. paper: rho*_{i,~i} at j-1
/// over rho*_{~i,i} at j.
enum class OrientationVariant { standard, paper };

inline const char* to_string(FactorVariant v) { return v == FactorVariant::standard ? "standard" : "paper"; }
inline const char* to_string(OrientationVariant v) {
  return v == OrientationVariant::standard ? "standard" : "paper";
}

/// 2-strategy population of K agents; k counts agents on the own strategy.
/// up_rate(k) = rho*_{~i,i} and down_rate(k) = rho*_{i,~i}, both at k/N.
struct BirthDeathSpec {
  int population = 0;
  std::int64_t size = 0;
  std::function<double(std::int64_t)> up_rate;
  std::function<double(std::int64_t)> down_rate;
  FactorVariant factor = FactorVariant::standard;
  OrientationVariant orientation = OrientationVariant::standard;
};

struct BirthDeathWeights {
  std::vector<double> weights;  // weights[0] == 1
  bool degenerate = false;      // some weight is zero or negative

  std::vector<double> normalized() const {
    const double s = pairwise_sum(weights);
    if (!(s > 0.0) || !std::isfinite(s)) throw EmptySupport("birth-death weights cannot be normalized");
    std::vector<double> out(weights);
    for (auto& w : out) w /= s;
    return out;
  }
};

/// mu_k / mu_0 = prod_{j=1}^{k} factor(j) * num(j) / den(j).
inline BirthDeathWeights birth_death_weights(const BirthDeathSpec& spec) {
  if (spec.size < 1) throw PreconditionError("birth-death population size must be at least 1");
  if (!spec.up_rate || !spec.down_rate) throw PreconditionError("birth-death spec needs both rate functions");
  const std::int64_t n = spec.size;
  auto checked = [&](const std::function<double(std::int64_t)>& f, std::int64_t k, const char* which) {
    const double r = f(k);
    if (!(r > 0.0) || !std::isfinite(r)) {
      throw PreconditionError(fmt::format("population {}: {} rate at k = {} is {}, must be positive",
                                          spec.population + 1, which, k, r));
    }
    return r;
  };
  BirthDeathWeights out;
  out.weights.assign(static_cast<std::size_t>(n) + 1, 0.0);
  out.weights[0] = 1.0;
  for (std::int64_t j = 1; j <= n; ++j) {
    const double jd = static_cast<double>(j);
    const double factor = spec.factor == FactorVariant::standard ? static_cast<double>(n - j + 1) / jd
                                                                 : static_cast<double>(n - j - 1) / jd;
    double ratio;
    if (spec.orientation == OrientationVariant::standard) {
      ratio = checked(spec.up_rate, j - 1, "up") / checked(spec.down_rate, j, "down");
    } else {
      ratio = checked(spec.down_rate, j - 1, "down") / checked(spec.up_rate, j, "up");
    }
    out.weights[static_cast<std::size_t>(j)] = out.weights[static_cast<std::size_t>(j - 1)] * factor * ratio;
  }
  for (double w : out.weights) {
    if (!(w > 0.0)) out.degenerate = true;
  }
  return out;
}

// ---------------------------------------------------------------------------
// From a transformed game to per-population birth-death chains.

/// Base state felt by derived population `d` when its own strategy holds
/// `own_mass`: the remaining mass of the base population is split over the
/// other base strategies in proportion to `rest_point`; other base
/// populations stay at the rest point.
inline SocialState fill_in_state(const TransformedGame& tg, std::size_t d, double own_mass,
                                 const SocialState& rest_point) {
  const auto& pop = tg.populations().at(d);
  if (pop.strategies.size() != 2) throw DimensionError("fill-in needs a 2-strategy derived population");
  const auto p = static_cast<std::size_t>(tg.base_population());
  SocialState x = rest_point;
  Vector& xp = x[p];
  const auto& own = pop.strategies.front().members;
  const auto& other = pop.strategies.back().members;
  double other_rest = 0.0;
  for (int m : other) other_rest += rest_point[p][m];
  const double remaining = std::max(0.0, tg.mass() - own_mass);
  xp.setZero();
  // Own strategy is a single base strategy for every 2-strategy derived population.
  for (int m : own) xp[m] = own_mass / static_cast<double>(own.size());
  for (int m : other) {
    xp[m] = other_rest > 0.0 ? remaining * rest_point[p][m] / other_rest
                             : remaining / static_cast<double>(other.size());
  }
  return x;
}

/// Birth-death description of derived population `d`, with rates tabulated
/// on the lattice {0, ..., K}.
inline BirthDeathSpec make_birth_death_spec(const TransformedGame& tg, std::size_t d, const SocialState& rest_point,
                                            FactorVariant factor = FactorVariant::standard,
                                            OrientationVariant orientation = OrientationVariant::standard) {
  const std::int64_t total = JointGrid::lattice_total(tg.population_size(), tg.mass());
  std::vector<double> up(static_cast<std::size_t>(total) + 1), down(static_cast<std::size_t>(total) + 1);
  for (std::int64_t k = 0; k <= total; ++k) {
    const double own = static_cast<double>(k) / static_cast<double>(tg.population_size());
    const auto blocks = tg.derived_blocks(fill_in_state(tg, d, own, rest_point));
    up[static_cast<std::size_t>(k)] = blocks[d](1, 0);
    down[static_cast<std::size_t>(k)] = blocks[d](0, 1);
  }
  BirthDeathSpec spec;
  spec.population = static_cast<int>(d);
  spec.size = total;
  spec.up_rate = [up](std::int64_t k) { return up.at(static_cast<std::size_t>(k)); };
  spec.down_rate = [down](std::int64_t k) { return down.at(static_cast<std::size_t>(k)); };
  spec.factor = factor;
  spec.orientation = orientation;
  return spec;
}

/// Derived population `d` as a stand-alone 2-strategy game and protocol, so
/// the generic chain machinery can solve it independently of the product
/// formula.
inline std::pair<PopulationGame, RevisionProtocol> derived_population_game(const TransformedGame& tg, std::size_t d,
                                                                           const SocialState& rest_point) {
  auto fill = [tg, d, rest_point](const Vector& xstar) { return fill_in_state(tg, d, xstar[0], rest_point); };
  PopulationGame game({tg.mass()}, {2}, [tg, d, fill](const SocialState& xs) {
    return std::vector<Vector>{tg.derived_payoff(fill(xs[0]))[d]};
  });
  auto protocol = RevisionProtocol::custom(
      [tg, d, fill](const Vector&, const Vector& xstar) { return tg.derived_blocks(fill(xstar))[d]; }, false);
  return {std::move(game), std::move(protocol)};
}

// ---------------------------------------------------------------------------
// Joint prediction

namespace detail {

inline const std::vector<double>& effective_marginal(const std::vector<std::vector<double>>& marginals, int strategies,
                                                    std::size_t p) {
  if (strategies == 2) {
    if (marginals.size() == 2) {
      const auto& a = marginals[0];
      const auto& b = marginals[1];
      for (std::size_t k = 0; k < a.size(); ++k) {
        if (std::abs(a[k] - b[a.size() - 1 - k]) > 1e-12) {
          throw PreconditionError(
              fmt::format("population {}: the two marginals of a 2-strategy population must mirror each other",
                          p + 1));
        }
      }
    }
    return marginals.front();
  }
  return marginals.front();
}

}  // namespace detail

/// Product of per-population marginals on the original grid, conditioned on
/// each base population's simplex constraint sum_i k_i = K^p and
/// renormalized. `marginals[p][i][k]` is the weight of k agents on strategy i
/// of base population p. A 2-strategy population takes its own marginal
/// (optionally followed by the mirrored one, which carries no extra
/// information).
inline StationaryTable product_form_joint(const std::vector<std::vector<std::vector<double>>>& marginals,
                                          std::shared_ptr<const JointGrid> grid) {
  if (marginals.size() != grid->num_populations()) {
    throw DimensionError("one marginal set per base population is required");
  }
  std::vector<std::vector<double>> conditional(grid->num_populations());
  for (std::size_t p = 0; p < grid->num_populations(); ++p) {
    const StateGrid& g = grid->population(p);
    const auto& ms = marginals[p];
    const bool two = g.parts() == 2;
    if (!(two ? (ms.size() == 1 || ms.size() == 2) : ms.size() == static_cast<std::size_t>(g.parts()))) {
      throw DimensionError(fmt::format("population {}: expected {} marginals, got {}", p + 1,
                                       two ? std::string("1 or 2") : std::to_string(g.parts()), ms.size()));
    }
    for (const auto& m : ms) {
      if (m.size() != static_cast<std::size_t>(g.total()) + 1) {
        throw PreconditionError(fmt::format(
            "population {}: marginal has {} points but the population has {} agents (inconsistent N)", p + 1,
            m.size(), g.total()));
      }
    }
    auto& w = conditional[p];
    w.resize(g.size());
    for (std::size_t s = 0; s < g.size(); ++s) {
      const auto k = g.state(s);
      if (two) {
        w[s] = detail::effective_marginal(ms, 2, p)[static_cast<std::size_t>(k[0])];
      } else {
        double v = 1.0;
        for (std::size_t i = 0; i < ms.size(); ++i) v *= ms[i][static_cast<std::size_t>(k[i])];
        w[s] = v;
      }
    }
    const double total = pairwise_sum(w);
    if (!(total > 0.0)) {
      throw EmptySupport(fmt::format(
          "population {}: product of marginals has no mass on the simplex sum_i k_i = {}", p + 1, g.total()));
    }
    for (auto& v : w) v /= total;
  }
  StationaryTable table;
  table.grid = grid;
  table.provenance = Provenance::predicted_product_form;
  table.probabilities.resize(grid->size());
  for (std::size_t x = 0; x < grid->size(); ++x) {
    double v = 1.0;
    for (std::size_t p = 0; p < grid->num_populations(); ++p) v *= conditional[p][grid->component(x, p)];
    table.probabilities[x] = v;
  }
  table.normalize();
  return table;
}

/// Unconditioned product over the box {0..K_1} x ... x {0..K_n}, last
/// coordinate varying fastest.
inline std::vector<double> product_form_unconditioned(const std::vector<std::vector<double>>& marginals) {
  std::size_t size = 1;
  for (const auto& m : marginals) size *= m.size();
  std::vector<double> out(size, 1.0);
  for (std::size_t idx = 0; idx < size; ++idx) {
    std::size_t rem = idx;
    for (std::size_t i = marginals.size(); i-- > 0;) {
      out[idx] *= marginals[i][rem % marginals[i].size()];
      rem /= marginals[i].size();
    }
  }
  return out;
}

inline std::vector<double> project_box(const std::vector<double>& box, const std::vector<std::size_t>& shape,
                                       std::size_t axis) {
  std::vector<double> out(shape.at(axis), 0.0);
  std::size_t stride = 1;
  for (std::size_t i = shape.size(); i-- > axis + 1;) stride *= shape[i];
  for (std::size_t idx = 0; idx < box.size(); ++idx) out[(idx / stride) % shape[axis]] += box[idx];
  return out;
}

// ---------------------------------------------------------------------------
// Comparison

struct Comparison {
  double tv = 0.0;
  double kl = 0.0;  // natural log; +inf when p > 0 where q = 0
  double max_abs = 0.0;
};

inline Comparison compare(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw DimensionError("distributions have different sizes");
  Comparison c;
  std::vector<double> abs_diff(p.size()), kl_terms(p.size(), 0.0);
  bool infinite = false;
  for (std::size_t i = 0; i < p.size(); ++i) {
    abs_diff[i] = std::abs(p[i] - q[i]);
    c.max_abs = std::max(c.max_abs, abs_diff[i]);
    if (p[i] > 0.0) {
      if (q[i] > 0.0) {
        kl_terms[i] = p[i] * std::log(p[i] / q[i]);
      } else {
        infinite = true;
      }
    }
  }
  c.tv = 0.5 * pairwise_sum(abs_diff);
  c.kl = infinite ? std::numeric_limits<double>::infinity() : pairwise_sum(kl_terms);
  return c;
}

inline Comparison compare(const StationaryTable& p, const StationaryTable& q) {
  if (!p.grid || !q.grid || !(*p.grid == *q.grid)) throw DimensionError("tables are on different grids");
  return compare(std::span<const double>(p.probabilities), std::span<const double>(q.probabilities));
}

/// Distribution of the count on strategy i of population p.
inline std::vector<double> marginal(const StationaryTable& table, std::size_t p, std::size_t i) {
  if (p >= table.grid->num_populations()) throw DimensionError("population index out of range");
  const StateGrid& g = table.grid->population(p);
  if (i >= static_cast<std::size_t>(g.parts())) throw DimensionError("strategy index out of range");
  std::vector<double> out(static_cast<std::size_t>(g.total()) + 1, 0.0);
  for (std::size_t x = 0; x < table.size(); ++x) {
    out[static_cast<std::size_t>(g.state(table.grid->component(x, p))[i])] += table[x];
  }
  return out;
}

inline std::vector<double> marginal_from_exact(const StationaryTable& exact, std::size_t p, std::size_t i) {
  if (exact.provenance != Provenance::exact) throw PreconditionError("marginal_from_exact needs an exact table");
  return marginal(exact, p, i);
}

}  // namespace sympop

#endif  // SYMPOP_STATIONARY_HPP
