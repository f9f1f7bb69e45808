#ifndef SYMPOP_GRID_HPP
#define SYMPOP_GRID_HPP

#include "sympop/core.hpp"
#include "sympop/game.hpp"

#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace sympop {

inline constexpr double kDefaultGridLimit = 2e6;

/// C(n, k) in floating point; exact for every size this library enumerates.
inline double binomial(std::int64_t n, std::int64_t k) {
  if (k < 0 || k > n) return 0.0;
  k = std::min(k, n - k);
  double out = 1.0;
  for (std::int64_t i = 1; i <= k; ++i) {
    out = out * static_cast<double>(n - k + i) / static_cast<double>(i);
  }
  return out < 9e15 ? std::round(out) : out;
}

/// Number of compositions of `total` into `parts` nonnegative integers.
inline double composition_count(std::int64_t parts, std::int64_t total) {
  return binomial(total + parts - 1, parts - 1);
}

/// All compositions of `total` into `parts` nonnegative integers in
/// lexicographic order, with an O(parts * total) ranking function.
class StateGrid {
 public:
  StateGrid(int parts, std::int64_t total, double limit = kDefaultGridLimit)
      : parts_(parts), total_(total) {
    if (parts < 2) throw ConstructionError("a state grid needs at least two strategies");
    if (total < 1) throw ConstructionError("population size must be at least 1");
    const double size = composition_count(parts, total);
    if (size > limit) {
      throw GridTooLarge("state grid has " + std::to_string(static_cast<std::uint64_t>(size)) +
                             " states, limit is " + std::to_string(static_cast<std::uint64_t>(limit)),
                         size);
    }
    size_ = static_cast<std::size_t>(size);
    states_.reserve(size_ * static_cast<std::size_t>(parts_));
    std::vector<std::int64_t> k(static_cast<std::size_t>(parts_), 0);
    k.back() = total_;
    // Lex-ascending enumeration: next composition is found by incrementing the
    // rightmost position that still has mass to its right.
    while (true) {
      states_.insert(states_.end(), k.begin(), k.end());
      int pos = parts_ - 2;
      while (pos >= 0) {
        std::int64_t right = 0;
        for (int q = pos + 1; q < parts_; ++q) right += k[static_cast<std::size_t>(q)];
        if (right > 0) break;
        --pos;
      }
      if (pos < 0) break;
      std::int64_t right = 0;
      for (int q = pos + 1; q < parts_; ++q) right += k[static_cast<std::size_t>(q)];
      ++k[static_cast<std::size_t>(pos)];
      --right;
      for (int q = pos + 1; q < parts_ - 1; ++q) k[static_cast<std::size_t>(q)] = 0;
      k.back() = right;
    }
  }

  int parts() const { return parts_; }
  std::int64_t total() const { return total_; }
  std::size_t size() const { return size_; }

  std::span<const std::int64_t> state(std::size_t index) const {
    return {states_.data() + index * static_cast<std::size_t>(parts_), static_cast<std::size_t>(parts_)};
  }

  std::size_t index_of(std::span<const std::int64_t> counts) const {
    if (counts.size() != static_cast<std::size_t>(parts_)) {
      throw DimensionError("composition has wrong number of parts");
    }
    std::int64_t remaining = total_;
    double rank = 0.0;
    for (int q = 0; q < parts_ - 1; ++q) {
      const std::int64_t kq = counts[static_cast<std::size_t>(q)];
      if (kq < 0 || kq > remaining) throw PreconditionError("composition is not on the grid");
      const int rest = parts_ - q - 1;
      for (std::int64_t a = 0; a < kq; ++a) rank += composition_count(rest, remaining - a);
      remaining -= kq;
    }
    if (counts.back() != remaining) throw PreconditionError("composition does not sum to the grid total");
    return static_cast<std::size_t>(rank);
  }

  bool operator==(const StateGrid& o) const { return parts_ == o.parts_ && total_ == o.total_; }

 private:
  int parts_;
  std::int64_t total_;
  std::size_t size_ = 0;
  std::vector<std::int64_t> states_;
};

/// Product of per-population grids, population 0 varying slowest.
class JointGrid {
 public:
  explicit JointGrid(std::vector<StateGrid> grids, double limit = kDefaultGridLimit)
      : grids_(std::move(grids)) {
    if (grids_.empty()) throw ConstructionError("joint grid needs at least one population");
    double size = 1.0;
    for (const auto& g : grids_) size *= static_cast<double>(g.size());
    if (size > limit) {
      throw GridTooLarge("joint state grid has " + std::to_string(static_cast<std::uint64_t>(size)) +
                             " states, limit is " + std::to_string(static_cast<std::uint64_t>(limit)),
                         size);
    }
    size_ = static_cast<std::size_t>(size);
    strides_.assign(grids_.size(), 1);
    for (std::size_t p = grids_.size() - 1; p > 0; --p) strides_[p - 1] = strides_[p] * grids_[p].size();
  }

  /// Grid for a game at per-population sizes N^p; counts sum to N^p * m^p.
  static JointGrid for_game(const PopulationGame& game, const std::vector<std::int64_t>& sizes,
                            double limit = kDefaultGridLimit) {
    if (sizes.size() != static_cast<std::size_t>(game.num_populations())) {
      throw DimensionError("one population size per population is required");
    }
    std::vector<StateGrid> grids;
    for (int p = 0; p < game.num_populations(); ++p) {
      grids.emplace_back(game.strategy_count(p), lattice_total(sizes[static_cast<std::size_t>(p)], game.mass(p)),
                         limit);
    }
    return JointGrid(std::move(grids), limit);
  }

  /// Number of agents N^p * m^p, which must be integral.
  static std::int64_t lattice_total(std::int64_t n, double mass) {
    if (n < 1) throw ConstructionError("population size must be at least 1");
    const double t = static_cast<double>(n) * mass;
    const double r = std::round(t);
    if (std::abs(t - r) > 1e-9 * std::max(1.0, t) || r < 1) {
      throw ConstructionError("N * mass must be a positive integer, got " + std::to_string(t));
    }
    return static_cast<std::int64_t>(r);
  }

  std::size_t size() const { return size_; }
  std::size_t num_populations() const { return grids_.size(); }
  const StateGrid& population(std::size_t p) const { return grids_[p]; }
  const std::vector<StateGrid>& populations() const { return grids_; }

  std::size_t component(std::size_t index, std::size_t p) const { return (index / strides_[p]) % grids_[p].size(); }
  std::size_t stride(std::size_t p) const { return strides_[p]; }

  std::size_t index_of(const std::vector<std::vector<std::int64_t>>& counts) const {
    if (counts.size() != grids_.size()) throw DimensionError("state has wrong population count");
    std::size_t idx = 0;
    for (std::size_t p = 0; p < grids_.size(); ++p) idx += strides_[p] * grids_[p].index_of(counts[p]);
    return idx;
  }

  std::vector<std::vector<std::int64_t>> counts(std::size_t index) const {
    std::vector<std::vector<std::int64_t>> out;
    for (std::size_t p = 0; p < grids_.size(); ++p) {
      auto s = grids_[p].state(component(index, p));
      out.emplace_back(s.begin(), s.end());
    }
    return out;
  }

  /// Continuous state for the given resolution (x = counts / N^p).
  SocialState social_state(std::size_t index, const std::vector<std::int64_t>& sizes) const {
    SocialState s;
    for (std::size_t p = 0; p < grids_.size(); ++p) {
      auto c = grids_[p].state(component(index, p));
      Vector v(static_cast<Eigen::Index>(c.size()));
      for (std::size_t i = 0; i < c.size(); ++i) {
        v[static_cast<Eigen::Index>(i)] = static_cast<double>(c[i]) / static_cast<double>(sizes[p]);
      }
      s.populations.push_back(std::move(v));
    }
    return s;
  }

  bool operator==(const JointGrid& o) const { return grids_ == o.grids_; }

 private:
  std::vector<StateGrid> grids_;
  std::vector<std::size_t> strides_;
  std::size_t size_ = 0;
};

inline StateGrid enumerate_states(int strategies, std::int64_t population_size,
                                  double limit = kDefaultGridLimit) {
  return StateGrid(strategies, population_size, limit);
}

}  // namespace sympop

#endif  // SYMPOP_GRID_HPP
