#ifndef SYMPOP_GAME_HPP
#define SYMPOP_GAME_HPP

#include "sympop/core.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

namespace sympop {

/// Per-population strategy masses x^p. Entries are masses, not fractions:
/// the components of population p sum to its mass m^p.
struct SocialState {
  std::vector<Vector> populations;

  SocialState() = default;
  explicit SocialState(std::vector<Vector> pops) : populations(std::move(pops)) {}

  std::size_t num_populations() const { return populations.size(); }
  const Vector& operator[](std::size_t p) const { return populations[p]; }
  Vector& operator[](std::size_t p) { return populations[p]; }

  /// All populations concatenated.
  Vector flat() const {
    Eigen::Index total = 0;
    for (const auto& v : populations) total += v.size();
    Vector out(total);
    Eigen::Index offset = 0;
    for (const auto& v : populations) {
      out.segment(offset, v.size()) = v;
      offset += v.size();
    }
    return out;
  }

  bool operator==(const SocialState& other) const {
    if (populations.size() != other.populations.size()) return false;
    for (std::size_t p = 0; p < populations.size(); ++p) {
      if (populations[p].size() != other.populations[p].size()) return false;
      if (populations[p] != other.populations[p]) return false;
    }
    return true;
  }
};

/// Integer form of a social state on the grid X^N: x_i^p = counts[p][i] / N^p.
struct LatticeState {
  std::vector<std::vector<std::int64_t>> counts;
  std::vector<std::int64_t> resolution;

  SocialState to_continuous() const {
    SocialState s;
    s.populations.reserve(counts.size());
    for (std::size_t p = 0; p < counts.size(); ++p) {
      Vector v(static_cast<Eigen::Index>(counts[p].size()));
      for (std::size_t i = 0; i < counts[p].size(); ++i) {
        v[static_cast<Eigen::Index>(i)] =
            static_cast<double>(counts[p][i]) / static_cast<double>(resolution[p]);
      }
      s.populations.push_back(std::move(v));
    }
    return s;
  }

  /// Inverse of to_continuous. Every N^p * x_i^p must be an integer up to
  /// rounding noise.
  static LatticeState from_continuous(const SocialState& x, std::vector<std::int64_t> resolution) {
    if (resolution.size() != x.num_populations()) {
      throw DimensionError("lattice resolution count does not match population count");
    }
    LatticeState out;
    out.resolution = std::move(resolution);
    for (std::size_t p = 0; p < x.num_populations(); ++p) {
      std::vector<std::int64_t> row;
      const double n = static_cast<double>(out.resolution[p]);
      for (Eigen::Index i = 0; i < x[p].size(); ++i) {
        const double scaled = x[p][i] * n;
        const double rounded = std::round(scaled);
        if (std::abs(scaled - rounded) > 1e-6) {
          throw PreconditionError("state is not on the lattice with resolution " +
                                  std::to_string(out.resolution[p]));
        }
        row.push_back(static_cast<std::int64_t>(rounded));
      }
      out.counts.push_back(std::move(row));
    }
    return out;
  }

  bool operator==(const LatticeState&) const = default;
};

/// A population game: 𝔭 populations with masses m^p, n^p strategies each,
/// and a payoff map F from social states to per-population payoff vectors.
class PopulationGame {
 public:
  using PayoffMap = std::function<std::vector<Vector>(const SocialState&)>;

  PopulationGame(std::vector<double> masses, std::vector<int> strategy_counts, PayoffMap payoff)
      : masses_(std::move(masses)),
        strategy_counts_(std::move(strategy_counts)),
        payoff_(std::move(payoff)) {
    if (masses_.empty()) throw ConstructionError("a game needs at least one population");
    if (masses_.size() != strategy_counts_.size()) {
      throw ConstructionError("masses and strategy counts differ in length");
    }
    for (std::size_t p = 0; p < masses_.size(); ++p) {
      if (!(masses_[p] > 0.0) || !std::isfinite(masses_[p])) {
        throw ConstructionError("population " + std::to_string(p + 1) + " has non-positive mass");
      }
      if (strategy_counts_[p] < 2) {
        throw ConstructionError("population " + std::to_string(p + 1) +
                                " needs at least two strategies");
      }
    }
    if (!payoff_) throw ConstructionError("payoff map is empty");
  }

  int num_populations() const { return static_cast<int>(masses_.size()); }
  const std::vector<double>& masses() const { return masses_; }
  double mass(int p) const { return masses_[static_cast<std::size_t>(p)]; }
  const std::vector<int>& strategy_counts() const { return strategy_counts_; }
  int strategy_count(int p) const { return strategy_counts_[static_cast<std::size_t>(p)]; }
  int total_strategies() const {
    return std::accumulate(strategy_counts_.begin(), strategy_counts_.end(), 0);
  }

  /// F(x), checked for shape and finiteness.
  std::vector<Vector> payoff(const SocialState& x) const {
    check_shape(x);
    auto out = payoff_(x);
    if (out.size() != masses_.size()) throw DimensionError("payoff map returned wrong population count");
    for (std::size_t p = 0; p < out.size(); ++p) {
      if (out[p].size() != strategy_counts_[p]) {
        throw DimensionError("payoff map returned wrong strategy count for population " +
                             std::to_string(p + 1));
      }
      if (!out[p].allFinite()) {
        throw ConstructionError("payoff map returned a non-finite value");
      }
    }
    return out;
  }

  void check_shape(const SocialState& x) const {
    if (x.num_populations() != masses_.size()) {
      throw DimensionError("state has " + std::to_string(x.num_populations()) +
                           " populations, game has " + std::to_string(masses_.size()));
    }
    for (std::size_t p = 0; p < masses_.size(); ++p) {
      if (x[p].size() != strategy_counts_[p]) {
        throw DimensionError("state population " + std::to_string(p + 1) + " has " +
                             std::to_string(x[p].size()) + " strategies, expected " +
                             std::to_string(strategy_counts_[p]));
      }
    }
  }

  /// Nonnegativity and per-population mass constraint.
  bool is_valid_state(const SocialState& x, double tol = 1e-12) const {
    if (x.num_populations() != masses_.size()) return false;
    for (std::size_t p = 0; p < masses_.size(); ++p) {
      if (x[p].size() != strategy_counts_[p]) return false;
      if (!x[p].allFinite() || (x[p].array() < 0.0).any()) return false;
      if (std::abs(x[p].sum() - masses_[p]) > tol * std::max(1.0, masses_[p])) return false;
    }
    return true;
  }

  SocialState barycenter() const {
    SocialState s;
    for (std::size_t p = 0; p < masses_.size(); ++p) {
      s.populations.push_back(Vector::Constant(strategy_counts_[p], masses_[p] / strategy_counts_[p]));
    }
    return s;
  }

 private:
  std::vector<double> masses_;
  std::vector<int> strategy_counts_;
  PayoffMap payoff_;
};

namespace detail {
inline void check_payoff_matrix(const Matrix& a, const std::string& what) {
  if (a.rows() != a.cols()) {
    throw ConstructionError(what + " must be square, got " + std::to_string(a.rows()) + "x" +
                            std::to_string(a.cols()));
  }
  if (a.rows() < 2) throw ConstructionError(what + " needs at least two strategies");
  if (!a.allFinite()) throw ConstructionError(what + " has non-finite entries");
}
}  // namespace detail

/// Single-population matrix game F(x) = A x.
inline PopulationGame make_linear_game(const Matrix& payoff_matrix, double mass = 1.0) {
  detail::check_payoff_matrix(payoff_matrix, "payoff matrix");
  return PopulationGame({mass}, {static_cast<int>(payoff_matrix.rows())},
                        [a = payoff_matrix](const SocialState& x) {
                          return std::vector<Vector>{a * x[0]};
                        });
}

/// Multi-population game where population p plays against itself: F^p(x) = A^p x^p.
inline PopulationGame make_separable_linear_game(const std::vector<Matrix>& matrices,
                                                 std::vector<double> masses) {
  if (matrices.size() != masses.size()) {
    throw ConstructionError("one payoff matrix per population is required");
  }
  std::vector<int> counts;
  for (std::size_t p = 0; p < matrices.size(); ++p) {
    detail::check_payoff_matrix(matrices[p], "payoff matrix of population " + std::to_string(p + 1));
    counts.push_back(static_cast<int>(matrices[p].rows()));
  }
  return PopulationGame(std::move(masses), std::move(counts),
                        [ms = matrices](const SocialState& x) {
                          std::vector<Vector> out;
                          out.reserve(ms.size());
                          for (std::size_t p = 0; p < ms.size(); ++p) out.push_back(ms[p] * x[p]);
                          return out;
                        });
}

/// State-independent payoffs, one fixed vector per population.
inline PopulationGame make_constant_payoff_game(const std::vector<Vector>& payoffs,
                                                std::vector<double> masses) {
  if (payoffs.size() != masses.size()) {
    throw ConstructionError("one payoff vector per population is required");
  }
  std::vector<int> counts;
  for (const auto& v : payoffs) {
    if (!v.allFinite()) throw ConstructionError("payoff table has non-finite entries");
    counts.push_back(static_cast<int>(v.size()));
  }
  return PopulationGame(std::move(masses), std::move(counts),
                        [ps = payoffs](const SocialState&) { return ps; });
}

inline Matrix rock_paper_scissors() {
  Matrix a(3, 3);
  a << 0, -1, 1,
       1, 0, -1,
       -1, 1, 0;
  return a;
}

}  // namespace sympop

#endif  // SYMPOP_GAME_HPP
