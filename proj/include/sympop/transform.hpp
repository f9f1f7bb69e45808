#ifndef SYMPOP_TRANSFORM_HPP
#define SYMPOP_TRANSFORM_HPP

#include "sympop/core.hpp"
#include "sympop/game.hpp"
#include "sympop/protocol.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>

#include <algorithm>
#include <limits>
#include <optional>
#include <cstdint>
#include <string>
#include <vector>

namespace sympop {

// ---------------------------------------------------------------------------
// Block-level constructions. Each takes the rate matrix of one population
// and returns the rate blocks of the populations that replace it.

/// Cyclic n -> n-1 split of an arity-k block (k >= 3). Sub-block l keeps the
/// strategies l, l+1, ..., l+k-3 (mod k) and lumps l+k-2, l+k-1 into one
/// aggregate strategy. Rates into the aggregate sum the two columns, rates
/// out of it sum the two rows, and its self-rate sums all four entries.
template <typename Scalar>
std::vector<MatrixT<Scalar>> reduce_block(const MatrixT<Scalar>& b) {
  const Eigen::Index k = b.rows();
  if (k < 3 || b.cols() != k) throw DimensionError("reduce_block needs a square block of arity >= 3");
  std::vector<MatrixT<Scalar>> out;
  out.reserve(static_cast<std::size_t>(k));
  for (Eigen::Index l = 0; l < k; ++l) {
    std::vector<Eigen::Index> pos;
    for (Eigen::Index t = 0; t <= k - 3; ++t) pos.push_back((l + t) % k);
    const Eigen::Index u = (l + k - 2) % k;
    const Eigen::Index v = (l + k - 1) % k;
    const Eigen::Index m = k - 1;
    const Eigen::Index agg = m - 1;
    MatrixT<Scalar> s(m, m);
    for (Eigen::Index a = 0; a < agg; ++a) {
      for (Eigen::Index c = 0; c < agg; ++c) s(a, c) = b(pos[a], pos[c]);
      s(a, agg) = b(pos[a], u) + b(pos[a], v);
      s(agg, a) = b(u, pos[a]) + b(v, pos[a]);
    }
    s(agg, agg) = b(u, u) + b(u, v) + b(v, u) + b(v, v);
    out.push_back(std::move(s));
  }
  return out;
}

/// 3 -> three 2-strategy blocks ("play i" vs "not i"):
///   [ rho_ii                      rho_ij + rho_ik                       ]
///   [ (rho_ji + rho_ki) / 2       (rho_jk + rho_kj + rho_jj + rho_kk) / 2 ]
template <typename Scalar>
std::vector<MatrixT<Scalar>> symmetrize_block(const MatrixT<Scalar>& b) {
  if (b.rows() != 3 || b.cols() != 3) throw DimensionError("symmetrize_block needs a 3x3 block");
  std::vector<MatrixT<Scalar>> out;
  for (Eigen::Index i = 0; i < 3; ++i) {
    const Eigen::Index j = (i + 1) % 3;
    const Eigen::Index k = (i + 2) % 3;
    MatrixT<Scalar> s(2, 2);
    s(0, 0) = b(i, i);
    s(0, 1) = b(i, j) + b(i, k);
    s(1, 0) = (b(j, i) + b(k, i)) / Scalar(2);
    s(1, 1) = (b(j, k) + b(k, j) + b(j, j) + b(k, k)) / Scalar(2);
    out.push_back(std::move(s));
  }
  return out;
}

/// A 2-strategy block and its relabelled mirror.
template <typename Scalar>
std::vector<MatrixT<Scalar>> mirror_block(const MatrixT<Scalar>& b) {
  if (b.rows() != 2 || b.cols() != 2) throw DimensionError("mirror_block needs a 2x2 block");
  MatrixT<Scalar> m(2, 2);
  m << b(1, 1), b(1, 0), b(0, 1), b(0, 0);
  return {b, m};
}

// ---------------------------------------------------------------------------
// Labels

/// A derived strategy: one base strategy, an aggregate of several, or the
/// complement "not i" of a 3 -> 2 split. Members are 0-based base indices.
struct StrategyLabel {
  std::vector<int> members;
  bool complement = false;
  /// For a complement, the members of the strategy it negates.
  std::vector<int> complement_of;

  bool is_singleton() const { return members.size() == 1 && !complement; }

  /// "2", "a{3,4}", "~1" (1-based).
  std::string name() const {
    if (is_singleton()) return std::to_string(members.front() + 1);
    if (complement) return "~" + StrategyLabel{complement_of, false, {}}.name();
    std::vector<int> shown;
    for (int m : members) shown.push_back(m + 1);
    return fmt::format("a{{{}}}", fmt::join(shown, ","));
  }

  bool operator==(const StrategyLabel&) const = default;
};

struct DerivedPopulation {
  std::vector<StrategyLabel> strategies;
  /// Base strategy of the first derived strategy.
  int leading() const { return strategies.front().members.front(); }
  bool operator==(const DerivedPopulation&) const = default;
};

enum class StageKind { reduce_once, symmetrize_3to2, mirror_2 };

inline const char* to_string(StageKind k) {
  switch (k) {
    case StageKind::reduce_once: return "reduce_once";
    case StageKind::symmetrize_3to2: return "symmetrize_3to2";
    case StageKind::mirror_2: return "mirror_2";
  }
  return "unknown";
}

struct ReductionStage {
  StageKind kind;
  int from_arity;
  int to_arity;
  int populations;
  bool operator==(const ReductionStage&) const = default;
};

enum class FStarVariant { zero, weighted };

inline const char* to_string(FStarVariant v) { return v == FStarVariant::zero ? "zero" : "weighted"; }

namespace detail {

inline std::vector<std::vector<StrategyLabel>> reduce_labels(const std::vector<StrategyLabel>& labels) {
  const auto k = static_cast<int>(labels.size());
  std::vector<std::vector<StrategyLabel>> out;
  for (int l = 0; l < k; ++l) {
    std::vector<StrategyLabel> sub;
    for (int t = 0; t <= k - 3; ++t) sub.push_back(labels[static_cast<std::size_t>((l + t) % k)]);
    StrategyLabel agg;
    for (int q : {(l + k - 2) % k, (l + k - 1) % k}) {
      const auto& m = labels[static_cast<std::size_t>(q)].members;
      agg.members.insert(agg.members.end(), m.begin(), m.end());
    }
    std::sort(agg.members.begin(), agg.members.end());
    sub.push_back(std::move(agg));
    out.push_back(std::move(sub));
  }
  return out;
}

inline std::vector<std::vector<StrategyLabel>> symmetrize_labels(const std::vector<StrategyLabel>& labels) {
  std::vector<std::vector<StrategyLabel>> out;
  for (int i = 0; i < 3; ++i) {
    StrategyLabel comp;
    comp.complement = true;
    comp.complement_of = labels[static_cast<std::size_t>(i)].members;
    for (int q : {(i + 1) % 3, (i + 2) % 3}) {
      const auto& m = labels[static_cast<std::size_t>(q)].members;
      comp.members.insert(comp.members.end(), m.begin(), m.end());
    }
    std::sort(comp.members.begin(), comp.members.end());
    out.push_back({labels[static_cast<std::size_t>(i)], std::move(comp)});
  }
  return out;
}

template <typename Scalar>
std::vector<MatrixT<Scalar>> apply_stage(StageKind kind, const MatrixT<Scalar>& b) {
  switch (kind) {
    case StageKind::reduce_once: return reduce_block(b);
    case StageKind::symmetrize_3to2: return symmetrize_block(b);
    case StageKind::mirror_2: return mirror_block(b);
  }
  throw Error("unknown reduction stage");
}

inline std::vector<std::vector<StrategyLabel>> apply_stage_labels(StageKind kind,
                                                                  const std::vector<StrategyLabel>& labels) {
  switch (kind) {
    case StageKind::reduce_once: return reduce_labels(labels);
    case StageKind::symmetrize_3to2: return symmetrize_labels(labels);
    case StageKind::mirror_2: return {labels, {labels[1], labels[0]}};
  }
  throw Error("unknown reduction stage");
}

}  // namespace detail

/// A base population replaced by derived populations. The derived protocol
/// is defined through the base one: at a base state x, the base rates
/// rho(F(x), x) are pushed through the recorded stages.
///
/// The first stage splits the base block into all of its sub-blocks; every
/// later stage splits each derived block and keeps only the sub-block led by
/// the same strategy, which discards the duplicated populations.
class TransformedGame {
 public:
  TransformedGame(PopulationGame base, int base_population, RevisionProtocol protocol,
                  std::int64_t population_size, FStarVariant fstar)
      : base_(std::move(base)), base_population_(base_population), protocol_(std::move(protocol)),
        population_size_(population_size), fstar_(fstar) {
    std::vector<StrategyLabel> labels;
    for (int i = 0; i < base_.strategy_count(base_population_); ++i) labels.push_back({{i}, false, {}});
    populations_ = {{labels}};
  }

  const PopulationGame& base() const { return base_; }
  int base_population() const { return base_population_; }
  const RevisionProtocol& protocol() const { return protocol_; }
  std::int64_t population_size() const { return population_size_; }
  double mass() const { return base_.mass(base_population_); }
  FStarVariant fstar() const { return fstar_; }
  const std::vector<DerivedPopulation>& populations() const { return populations_; }
  const std::vector<ReductionStage>& lineage() const { return lineage_; }
  int base_arity() const { return base_.strategy_count(base_population_); }
  int arity() const { return static_cast<int>(populations_.front().strategies.size()); }
  std::size_t num_populations() const { return populations_.size(); }

  void apply(StageKind kind) {
    const int from = arity();
    std::vector<DerivedPopulation> next;
    for (const auto& pop : populations_) {
      auto subs = detail::apply_stage_labels(kind, pop.strategies);
      if (lineage_.empty()) {
        for (auto& s : subs) next.push_back({std::move(s)});
      } else {
        next.push_back({std::move(subs.front())});
      }
    }
    populations_ = std::move(next);
    lineage_.push_back({kind, from, arity(), static_cast<int>(populations_.size())});
  }

  /// Derived blocks from a base rate matrix, replaying the lineage.
  template <typename Scalar>
  std::vector<MatrixT<Scalar>> blocks(const Matrix& base_rates) const {
    if (base_rates.rows() != base_arity() || base_rates.cols() != base_arity()) {
      throw DimensionError("base rate matrix does not match the base population");
    }
    std::vector<MatrixT<Scalar>> current{base_rates.cast<Scalar>()};
    for (std::size_t s = 0; s < lineage_.size(); ++s) {
      std::vector<MatrixT<Scalar>> next;
      for (const auto& b : current) {
        auto subs = detail::apply_stage(lineage_[s].kind, b);
        if (s == 0) {
          for (auto& m : subs) next.push_back(std::move(m));
        } else {
          next.push_back(std::move(subs.front()));
        }
      }
      current = std::move(next);
    }
    return current;
  }

  /// rho^p(F^p(x), x^p) of the base population.
  Matrix base_rates(const SocialState& x) const {
    const auto payoff = base_.payoff(x);
    const auto p = static_cast<std::size_t>(base_population_);
    return protocol_.rates(payoff[p], x[p]);
  }

  std::vector<Matrix> derived_blocks(const SocialState& x) const { return blocks<double>(base_rates(x)); }
  std::vector<ExtendedMatrix> derived_blocks_extended(const SocialState& x) const {
    return blocks<ExtendedScalar>(base_rates(x));
  }

  /// Full derived rate matrix: block diagonal, one block per derived population.
  Matrix derived_rate_matrix(const SocialState& x) const {
    const auto bs = derived_blocks(x);
    const Eigen::Index a = arity();
    const auto n = static_cast<Eigen::Index>(bs.size());
    Matrix out = Matrix::Zero(n * a, n * a);
    for (Eigen::Index q = 0; q < n; ++q) out.block(q * a, q * a, a, a) = bs[static_cast<std::size_t>(q)];
    return out;
  }

  /// Cap R* obtained by pushing the base cap through the same stages.
  std::optional<std::vector<Matrix>> derived_rate_caps() const {
    if (!protocol_.rate_cap()) return std::nullopt;
    return blocks<double>(*protocol_.rate_cap());
  }

  /// x* per derived population: each derived strategy carries the total mass
  /// of its members, e.g. (x1, 1-x1, x2, 1-x2, x3, 1-x3) for 3 -> 2.
  std::vector<Vector> embed(const SocialState& x) const {
    const Vector& xp = x[static_cast<std::size_t>(base_population_)];
    std::vector<Vector> out;
    for (const auto& pop : populations_) {
      Vector v(static_cast<Eigen::Index>(pop.strategies.size()));
      for (std::size_t s = 0; s < pop.strategies.size(); ++s) {
        double sum = 0.0;
        for (int m : pop.strategies[s].members) sum += xp[m];
        v[static_cast<Eigen::Index>(s)] = sum;
      }
      out.push_back(std::move(v));
    }
    return out;
  }

  /// Lattice form of the embedding.
  std::vector<std::vector<std::int64_t>> embed_counts(const std::vector<std::int64_t>& base_counts) const {
    std::vector<std::vector<std::int64_t>> out;
    for (const auto& pop : populations_) {
      std::vector<std::int64_t> c;
      for (const auto& label : pop.strategies) {
        std::int64_t sum = 0;
        for (int m : label.members) sum += base_counts[static_cast<std::size_t>(m)];
        c.push_back(sum);
      }
      out.push_back(std::move(c));
    }
    return out;
  }

  /// F*: singletons keep their base payoff; aggregate and complement
  /// strategies get 0 (zero variant) or the mass-weighted mean payoff of
  /// their members (weighted variant).
  std::vector<Vector> derived_payoff(const SocialState& x) const {
    const auto y = base_.payoff(x)[static_cast<std::size_t>(base_population_)];
    const Vector& xp = x[static_cast<std::size_t>(base_population_)];
    std::vector<Vector> out;
    for (const auto& pop : populations_) {
      Vector v(static_cast<Eigen::Index>(pop.strategies.size()));
      for (std::size_t s = 0; s < pop.strategies.size(); ++s) {
        const auto& label = pop.strategies[s];
        double value = 0.0;
        if (label.is_singleton()) {
          value = y[label.members.front()];
        } else if (fstar_ == FStarVariant::weighted) {
          double mass = 0.0;
          double weighted = 0.0;
          double plain = 0.0;
          for (int m : label.members) {
            mass += xp[m];
            weighted += xp[m] * y[m];
            plain += y[m];
          }
          value = mass > 0.0 ? weighted / mass : plain / static_cast<double>(label.members.size());
        }
        v[static_cast<Eigen::Index>(s)] = value;
      }
      out.push_back(std::move(v));
    }
    return out;
  }

 private:
  PopulationGame base_;
  int base_population_;
  RevisionProtocol protocol_;
  std::int64_t population_size_;
  FStarVariant fstar_;
  std::vector<DerivedPopulation> populations_;
  std::vector<ReductionStage> lineage_;
};

struct TransformOptions {
  int population = 0;
  FStarVariant fstar = FStarVariant::zero;
};

namespace detail {

/// Largest |rho_ij - rho_ji| (and |R_ij - R_ji|) of population p over the
/// default sample states of the game.
inline double population_asymmetry(const PopulationGame& game, const RevisionProtocol& protocol, int p,
                                   const SampleSet& samples) {
  double worst = 0.0;
  if (const auto& cap = protocol.rate_cap()) worst = (*cap - cap->transpose()).cwiseAbs().maxCoeff();
  for (const auto& x : samples.states) {
    const Matrix r = protocol.rates(game.payoff(x)[static_cast<std::size_t>(p)], x[static_cast<std::size_t>(p)]);
    worst = std::max(worst, (r - r.transpose()).cwiseAbs().maxCoeff());
  }
  return worst;
}

inline void require_symmetric(const PopulationGame& game, const RevisionProtocol& protocol, int p,
                              std::int64_t population_size) {
  std::vector<std::int64_t> sizes(static_cast<std::size_t>(game.num_populations()), population_size);
  const double asym = population_asymmetry(game, protocol, p, default_sample_states(game, sizes));
  if (asym > kSymmetryTolerance) {
    throw PreconditionError(fmt::format(
        "population {} protocol is not symmetric (max_asymmetry = {:.17g})", p + 1, asym));
  }
}

inline void check_population_index(const PopulationGame& game, int p) {
  if (p < 0 || p >= game.num_populations()) {
    throw DimensionError(fmt::format("population {} does not exist", p + 1));
  }
}

}  // namespace detail

/// One 3-strategy population -> three 2-strategy populations.
inline TransformedGame symmetrize_3to2(const PopulationGame& game, const RevisionProtocol& protocol,
                                       std::int64_t population_size, const TransformOptions& opts = {}) {
  detail::check_population_index(game, opts.population);
  if (game.strategy_count(opts.population) != 3) {
    throw DimensionError(fmt::format("symmetrize_3to2 needs 3 strategies, population {} has {}",
                                     opts.population + 1, game.strategy_count(opts.population)));
  }
  detail::require_symmetric(game, protocol, opts.population, population_size);
  TransformedGame out(game, opts.population, protocol, population_size, opts.fstar);
  out.apply(StageKind::symmetrize_3to2);
  return out;
}

/// Recovers the base 3x3 rates from three derived 2x2 blocks:
/// rho_ii = rho*_{i,i}, rho_ij = (rho*_{i,~i} + rho*_{j,~j} - 2 rho*_{~k,k}) / 2.
inline Matrix invert_3to2(const std::vector<ExtendedMatrix>& blocks) {
  if (blocks.size() != 3) throw DimensionError("invert_3to2 needs exactly 3 derived blocks");
  for (const auto& b : blocks) {
    if (b.rows() != 2 || b.cols() != 2) throw DimensionError("invert_3to2 needs 2x2 derived blocks");
  }
  Matrix out(3, 3);
  for (int i = 0; i < 3; ++i) {
    out(i, i) = static_cast<double>(blocks[static_cast<std::size_t>(i)](0, 0));
    for (int j = 0; j < 3; ++j) {
      if (i == j) continue;
      const int k = 3 - i - j;
      const ExtendedScalar v = (blocks[static_cast<std::size_t>(i)](0, 1) + blocks[static_cast<std::size_t>(j)](0, 1) -
                                ExtendedScalar(2) * blocks[static_cast<std::size_t>(k)](1, 0)) /
                               ExtendedScalar(2);
      out(i, j) = static_cast<double>(v);
    }
  }
  return out;
}

inline Matrix invert_3to2(const std::vector<Matrix>& blocks) {
  std::vector<ExtendedMatrix> ext;
  for (const auto& b : blocks) ext.push_back(b.cast<ExtendedScalar>());
  return invert_3to2(ext);
}

inline Matrix invert_3to2(const TransformedGame& tg, const SocialState& x) {
  if (tg.lineage().size() != 1 || tg.lineage().front().kind != StageKind::symmetrize_3to2) {
    throw DimensionError("invert_3to2 needs a game produced by symmetrize_3to2");
  }
  return invert_3to2(tg.derived_blocks_extended(x));
}

/// One n-strategy population (n > 3) -> n populations of n-1 strategies.
inline TransformedGame reduce_once(const PopulationGame& game, const RevisionProtocol& protocol,
                                   std::int64_t population_size, const TransformOptions& opts = {}) {
  detail::check_population_index(game, opts.population);
  const int n = game.strategy_count(opts.population);
  if (n <= 3) {
    throw DimensionError(fmt::format("reduce_once needs more than 3 strategies, got {} (use symmetrize_3to2)", n));
  }
  detail::require_symmetric(game, protocol, opts.population, population_size);
  TransformedGame out(game, opts.population, protocol, population_size, opts.fstar);
  out.apply(StageKind::reduce_once);
  return out;
}

/// Iterated reduction to arity m: n populations of m strategies. The last
/// step to m = 2 is the 3 -> 2 split.
inline TransformedGame reduce_to(const PopulationGame& game, const RevisionProtocol& protocol,
                                 std::int64_t population_size, int target_arity, const TransformOptions& opts = {}) {
  detail::check_population_index(game, opts.population);
  const int n = game.strategy_count(opts.population);
  if (target_arity < 2) throw DimensionError("target arity must be at least 2");
  if (target_arity >= n) {
    throw DimensionError(fmt::format("target arity {} is not below the strategy count {}", target_arity, n));
  }
  detail::require_symmetric(game, protocol, opts.population, population_size);
  TransformedGame out(game, opts.population, protocol, population_size, opts.fstar);
  while (out.arity() > std::max(target_arity, 3)) out.apply(StageKind::reduce_once);
  if (target_arity == 2) out.apply(StageKind::symmetrize_3to2);
  return out;
}

/// Inverse of reduce_once. Pairs that share a derived population as plain
/// strategies are read off directly; the rest are recovered from an
/// aggregate entry minus the already-known partner rate.
inline Matrix invert_reduce_once(const std::vector<ExtendedMatrix>& blocks) {
  const auto n = static_cast<int>(blocks.size());
  if (n < 4) throw DimensionError("invert_reduce_once needs at least 4 derived blocks");
  for (const auto& b : blocks) {
    if (b.rows() != n - 1 || b.cols() != n - 1) throw DimensionError("derived block has the wrong arity");
  }
  const int singles = n - 2;  // plain strategies per derived population
  ExtendedMatrix rho = ExtendedMatrix::Constant(n, n, ExtendedScalar(-1));
  std::vector<std::vector<char>> known(static_cast<std::size_t>(n), std::vector<char>(static_cast<std::size_t>(n), 0));
  for (int l = 0; l < n; ++l) {
    for (int a = 0; a < singles; ++a) {
      for (int c = 0; c < singles; ++c) {
        const int i = (l + a) % n;
        const int j = (l + c) % n;
        rho(i, j) = blocks[static_cast<std::size_t>(l)](a, c);
        known[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = 1;
      }
    }
  }
  for (int i = 0; i < n; ++i) {
    // Block i lumps u = i+n-2 and v = i+n-1; row 0 is strategy i.
    const int u = (i + n - 2) % n;
    const int v = (i + n - 1) % n;
    const ExtendedScalar out_sum = blocks[static_cast<std::size_t>(i)](0, singles);
    const ExtendedScalar in_sum = blocks[static_cast<std::size_t>(i)](singles, 0);
    auto& ku = known[static_cast<std::size_t>(i)];
    if (!ku[static_cast<std::size_t>(u)] && ku[static_cast<std::size_t>(v)]) {
      rho(i, u) = out_sum - rho(i, v);
      ku[static_cast<std::size_t>(u)] = 1;
    }
    if (!known[static_cast<std::size_t>(u)][static_cast<std::size_t>(i)] &&
        known[static_cast<std::size_t>(v)][static_cast<std::size_t>(i)]) {
      rho(u, i) = in_sum - rho(v, i);
      known[static_cast<std::size_t>(u)][static_cast<std::size_t>(i)] = 1;
    }
  }
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (!known[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]) {
        throw Error(fmt::format("rate {}->{} is not recoverable from the derived blocks", i + 1, j + 1));
      }
    }
  }
  return rho.cast<double>();
}

/// Every population of a multi-population game split into 2-strategy
/// populations: n^p = 2 passes through (with its mirror), n^p = 3 goes
/// through symmetrize_3to2, n^p > 3 through reduce_to(3) and then a 3 -> 2
/// split of each derived population. Yields sum_p n^p derived populations.
inline std::vector<TransformedGame> decompose(const PopulationGame& game, const Protocols& protocols,
                                              const std::vector<std::int64_t>& sizes,
                                              FStarVariant fstar = FStarVariant::zero) {
  check_protocol_count(game, protocols);
  if (sizes.size() != static_cast<std::size_t>(game.num_populations())) {
    throw DimensionError("one population size per population is required");
  }
  std::vector<std::string> failures;
  const auto samples = default_sample_states(game, sizes);
  for (int p = 0; p < game.num_populations(); ++p) {
    const auto& proto = protocol_for(protocols, p);
    const double asym = detail::population_asymmetry(game, proto, p, samples);
    if (asym > kSymmetryTolerance) {
      failures.push_back(fmt::format("population {}: not symmetric (max_asymmetry = {:.17g})", p + 1, asym));
    }
    double min_rate = std::numeric_limits<double>::infinity();
    for (const auto& x : samples.states) {
      const Matrix r = proto.rates(game.payoff(x)[static_cast<std::size_t>(p)], x[static_cast<std::size_t>(p)]);
      for (Eigen::Index i = 0; i < r.rows(); ++i) {
        for (Eigen::Index j = 0; j < r.cols(); ++j) {
          if (i != j) min_rate = std::min(min_rate, r(i, j));
        }
      }
    }
    if (!(proto.support_floor() > 0.0) || min_rate < proto.support_floor()) {
      failures.push_back(fmt::format("population {}: not fully supported (min_rate = {:.17g}, floor = {:.17g})",
                                     p + 1, min_rate, proto.support_floor()));
    }
  }
  if (!failures.empty()) {
    std::string msg = "decomposition preconditions failed:";
    for (const auto& f : failures) msg += "\n  " + f;
    throw PreconditionError(msg);
  }

  std::vector<TransformedGame> out;
  for (int p = 0; p < game.num_populations(); ++p) {
    const auto& proto = protocol_for(protocols, p);
    TransformedGame tg(game, p, proto, sizes[static_cast<std::size_t>(p)], fstar);
    const int n = game.strategy_count(p);
    if (n == 2) {
      tg.apply(StageKind::mirror_2);
    } else {
      while (tg.arity() > 3) tg.apply(StageKind::reduce_once);
      tg.apply(StageKind::symmetrize_3to2);
    }
    out.push_back(std::move(tg));
  }
  return out;
}

}  // namespace sympop

#endif  // SYMPOP_TRANSFORM_HPP
