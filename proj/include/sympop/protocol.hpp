#ifndef SYMPOP_PROTOCOL_HPP
#define SYMPOP_PROTOCOL_HPP

#include "sympop/core.hpp"
#include "sympop/game.hpp"
#include "sympop/grid.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace sympop {

enum class ProtocolKind { constant, sum_exponential, table, custom };

inline const char* to_string(ProtocolKind k) {
  switch (k) {
    case ProtocolKind::constant: return "constant";
    case ProtocolKind::sum_exponential: return "sum_exponential";
    case ProtocolKind::table: return "table";
    case ProtocolKind::custom: return "custom";
  }
  return "unknown";
}

/// Revision protocol of one population: (payoff vector, population state)
/// -> matrix of conditional switch rates rho_ij.
///
/// The support floor is the lower bound R_ used for the full-support check.
/// The rate cap R_ij is optional; when present it must bound rho_ij on every
/// state the chain visits.
class RevisionProtocol {
 public:
  using RateMap = std::function<Matrix(const Vector& payoff, const Vector& state)>;

  static RevisionProtocol constant(double c, std::optional<double> support_floor = {}) {
    if (!(c >= 0.0) || !std::isfinite(c)) throw ConstructionError("constant rate must be finite and >= 0");
    return RevisionProtocol(
        ProtocolKind::constant,
        [c](const Vector& payoff, const Vector&) { return Matrix::Constant(payoff.size(), payoff.size(), c); },
        support_floor.value_or(c), true, c);
  }

  /// rho_ij = exp(eta * (pi_i + pi_j)); symmetric in (i, j) by construction.
  static RevisionProtocol sum_exponential(double eta, double support_floor = 0.0) {
    if (!std::isfinite(eta)) throw ConstructionError("eta must be finite");
    return RevisionProtocol(
        ProtocolKind::sum_exponential,
        [eta](const Vector& pi, const Vector&) {
          const Eigen::Index n = pi.size();
          Matrix r(n, n);
          for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = i; j < n; ++j) {
              r(i, j) = r(j, i) = std::exp(eta * (pi[i] + pi[j]));
            }
          }
          return r;
        },
        support_floor, true, eta);
  }

  /// Fixed rate matrix. The support floor defaults to the smallest
  /// off-diagonal entry.
  static RevisionProtocol table(const Matrix& rates, std::optional<double> support_floor = {}) {
    if (rates.rows() != rates.cols() || rates.rows() < 2) {
      throw ConstructionError("rate table must be square with at least two strategies");
    }
    if (!rates.allFinite() || (rates.array() < 0.0).any()) {
      throw ConstructionError("rate table entries must be finite and >= 0");
    }
    double floor = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < rates.rows(); ++i) {
      for (Eigen::Index j = 0; j < rates.cols(); ++j) {
        if (i != j) floor = std::min(floor, rates(i, j));
      }
    }
    const bool symmetric = rates == rates.transpose();
    return RevisionProtocol(
        ProtocolKind::table,
        [rates](const Vector& payoff, const Vector&) {
          if (payoff.size() != rates.rows()) {
            throw DimensionError("rate table is " + std::to_string(rates.rows()) + "x" +
                                 std::to_string(rates.rows()) + " but the population has " +
                                 std::to_string(payoff.size()) + " strategies");
          }
          return rates;
        },
        support_floor.value_or(floor), symmetric, 0.0);
  }

  static RevisionProtocol custom(RateMap map, bool declared_symmetric, double support_floor = 0.0) {
    if (!map) throw ConstructionError("custom protocol needs a rate map");
    return RevisionProtocol(ProtocolKind::custom, std::move(map), support_floor, declared_symmetric, 0.0);
  }

  /// Rates at (payoff, state); rejects negative or non-finite output.
  Matrix rates(const Vector& payoff, const Vector& state) const {
    if (payoff.size() != state.size()) {
      throw DimensionError("payoff has " + std::to_string(payoff.size()) + " entries, state has " +
                           std::to_string(state.size()));
    }
    Matrix r = map_(payoff, state);
    if (r.rows() != payoff.size() || r.cols() != payoff.size()) {
      throw DimensionError("protocol returned a rate matrix of the wrong shape");
    }
    for (Eigen::Index i = 0; i < r.rows(); ++i) {
      for (Eigen::Index j = 0; j < r.cols(); ++j) {
        if (!std::isfinite(r(i, j)) || r(i, j) < 0.0) {
          throw ProtocolViolation(std::string(to_string(kind_)) + " protocol produced rate " +
                                  std::to_string(r(i, j)) + " for switch " + std::to_string(i + 1) +
                                  "->" + std::to_string(j + 1));
        }
      }
    }
    return r;
  }

  ProtocolKind kind() const { return kind_; }
  double support_floor() const { return support_floor_; }
  bool declared_symmetric() const { return declared_symmetric_; }
  /// c for constant protocols, eta for sum_exponential, 0 otherwise.
  double parameter() const { return parameter_; }
  const std::optional<Matrix>& rate_cap() const { return rate_cap_; }

  RevisionProtocol with_support_floor(double floor) const {
    RevisionProtocol out = *this;
    out.support_floor_ = floor;
    return out;
  }

  RevisionProtocol with_rate_cap(Matrix cap) const {
    if (!cap.allFinite() || (cap.array() <= 0.0).any()) {
      throw ConstructionError("rate cap entries must be finite and > 0");
    }
    RevisionProtocol out = *this;
    out.rate_cap_ = std::move(cap);
    return out;
  }

 private:
  RevisionProtocol(ProtocolKind kind, RateMap map, double floor, bool symmetric, double parameter)
      : kind_(kind), map_(std::move(map)), support_floor_(floor), declared_symmetric_(symmetric),
        parameter_(parameter) {}

  ProtocolKind kind_;
  RateMap map_;
  double support_floor_;
  bool declared_symmetric_;
  double parameter_;
  std::optional<Matrix> rate_cap_;
};

/// Protocols indexed by population. A single entry applies to every population.
using Protocols = std::vector<RevisionProtocol>;

inline const RevisionProtocol& protocol_for(const Protocols& protocols, int p) {
  if (protocols.empty()) throw ConstructionError("no revision protocol given");
  if (protocols.size() == 1) return protocols.front();
  if (p < 0 || static_cast<std::size_t>(p) >= protocols.size()) {
    throw DimensionError("no revision protocol for population " + std::to_string(p + 1));
  }
  return protocols[static_cast<std::size_t>(p)];
}

inline void check_protocol_count(const PopulationGame& game, const Protocols& protocols) {
  if (protocols.empty() ||
      (protocols.size() != 1 && protocols.size() != static_cast<std::size_t>(game.num_populations()))) {
    throw DimensionError("expected 1 or " + std::to_string(game.num_populations()) + " protocols, got " +
                         std::to_string(protocols.size()));
  }
}

/// rho^p(pi^p, x^p) for every population.
inline std::vector<Matrix> evaluate_rates(const Protocols& protocols, const std::vector<Vector>& payoffs,
                                          const SocialState& state) {
  if (payoffs.size() != state.num_populations()) {
    throw DimensionError("payoff and state population counts differ");
  }
  std::vector<Matrix> out;
  out.reserve(payoffs.size());
  for (std::size_t p = 0; p < payoffs.size(); ++p) {
    out.push_back(protocol_for(protocols, static_cast<int>(p)).rates(payoffs[p], state[p]));
  }
  return out;
}

inline std::vector<Matrix> evaluate_rates(const PopulationGame& game, const Protocols& protocols,
                                          const SocialState& state) {
  check_protocol_count(game, protocols);
  return evaluate_rates(protocols, game.payoff(state), state);
}

struct ValidationReport {
  bool symmetric = false;
  bool fully_supported = false;
  double max_asymmetry = 0.0;
  double min_rate = std::numeric_limits<double>::infinity();
  double support_floor = 0.0;
  std::size_t samples = 0;
  bool exhaustive = false;
};

inline constexpr double kSymmetryTolerance = 1e-14;

/// Checks symmetry (rho_ij == rho_ji, R_ij == R_ji) and full support
/// (rho_ij >= R_ > 0, i != j) over the given sample states. Diagonal rates
/// never produce transitions and are excluded from the support check.
inline ValidationReport validate_hypotheses(const PopulationGame& game, const Protocols& protocols,
                                            const std::vector<SocialState>& samples,
                                            bool exhaustive = false) {
  check_protocol_count(game, protocols);
  ValidationReport rep;
  rep.samples = samples.size();
  rep.exhaustive = exhaustive;
  rep.support_floor = std::numeric_limits<double>::infinity();
  for (int p = 0; p < game.num_populations(); ++p) {
    const auto& proto = protocol_for(protocols, p);
    rep.support_floor = std::min(rep.support_floor, proto.support_floor());
    if (const auto& cap = proto.rate_cap()) {
      rep.max_asymmetry = std::max(rep.max_asymmetry, (*cap - cap->transpose()).cwiseAbs().maxCoeff());
    }
  }
  for (const auto& x : samples) {
    const auto rates = evaluate_rates(game, protocols, x);
    for (const auto& r : rates) {
      for (Eigen::Index i = 0; i < r.rows(); ++i) {
        for (Eigen::Index j = 0; j < r.cols(); ++j) {
          if (i == j) continue;
          rep.max_asymmetry = std::max(rep.max_asymmetry, std::abs(r(i, j) - r(j, i)));
          rep.min_rate = std::min(rep.min_rate, r(i, j));
        }
      }
    }
  }
  rep.symmetric = rep.max_asymmetry <= kSymmetryTolerance;
  rep.fully_supported = !samples.empty() && rep.support_floor > 0.0 && rep.min_rate >= rep.support_floor;
  return rep;
}

struct SampleSet {
  std::vector<SocialState> states;
  bool exhaustive = false;
};

inline constexpr double kExhaustiveSampleLimit = 1e6;

/// The whole lattice X^N when it has at most 10^6 points, otherwise `random_count`
/// uniform draws from the simplex product (seeded).
inline SampleSet default_sample_states(const PopulationGame& game, const std::vector<std::int64_t>& sizes,
                                       std::size_t random_count = 1000, std::uint64_t seed = 0x5eedULL) {
  double lattice = 1.0;
  for (int p = 0; p < game.num_populations(); ++p) {
    lattice *= composition_count(game.strategy_count(p),
                                 JointGrid::lattice_total(sizes[static_cast<std::size_t>(p)], game.mass(p)));
  }
  SampleSet out;
  if (lattice <= kExhaustiveSampleLimit) {
    const JointGrid grid = JointGrid::for_game(game, sizes, kExhaustiveSampleLimit);
    out.states.reserve(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) out.states.push_back(grid.social_state(i, sizes));
    out.exhaustive = true;
    return out;
  }
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> expo(1.0);
  for (std::size_t s = 0; s < std::max<std::size_t>(random_count, 1000); ++s) {
    SocialState x;
    for (int p = 0; p < game.num_populations(); ++p) {
      Vector v(game.strategy_count(p));
      for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = expo(rng);
      v *= game.mass(p) / v.sum();
      x.populations.push_back(std::move(v));
    }
    out.states.push_back(std::move(x));
  }
  return out;
}

inline ValidationReport validate_hypotheses(const PopulationGame& game, const Protocols& protocols,
                                            const SampleSet& samples) {
  return validate_hypotheses(game, protocols, samples.states, samples.exhaustive);
}

/// Default per-pair cap R_ij: 10% above the largest rho_ij seen on the samples.
inline std::vector<Matrix> default_rate_caps(const PopulationGame& game, const Protocols& protocols,
                                             const std::vector<SocialState>& samples) {
  check_protocol_count(game, protocols);
  std::vector<Matrix> caps;
  for (int p = 0; p < game.num_populations(); ++p) {
    caps.push_back(Matrix::Zero(game.strategy_count(p), game.strategy_count(p)));
  }
  for (const auto& x : samples) {
    const auto rates = evaluate_rates(game, protocols, x);
    for (std::size_t p = 0; p < rates.size(); ++p) caps[p] = caps[p].cwiseMax(rates[p]);
  }
  for (auto& c : caps) {
    c *= 1.1;
    // A pair that is never used still needs a positive cap.
    c = c.cwiseMax(std::numeric_limits<double>::min());
  }
  return caps;
}

inline Protocols with_default_rate_caps(const PopulationGame& game, const Protocols& protocols,
                                        const std::vector<SocialState>& samples) {
  const auto caps = default_rate_caps(game, protocols, samples);
  Protocols out;
  for (int p = 0; p < game.num_populations(); ++p) {
    out.push_back(protocol_for(protocols, p).with_rate_cap(caps[static_cast<std::size_t>(p)]));
  }
  return out;
}

}  // namespace sympop

#endif  // SYMPOP_PROTOCOL_HPP
