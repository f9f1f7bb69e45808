#ifndef SYMPOP_PIPELINE_HPP
#define SYMPOP_PIPELINE_HPP

#include "sympop/chain.hpp"
#include "sympop/config.hpp"
#include "sympop/dynamics.hpp"
#include "sympop/stationary.hpp"
#include "sympop/transform.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace sympop {

inline const std::vector<std::string>& commands() {
  static const std::vector<std::string> c = {"validate",         "mean-dynamic", "simulate", "exact-stationary",
                                             "transform",        "predict",      "compare",  "experiment"};
  return c;
}

/// Nearest lattice point by largest remainder: floor every coordinate, then
/// hand the missing agents to the largest fractional parts (ties to the
/// lower index).
inline LatticeState round_to_lattice(const SocialState& x, const std::vector<std::int64_t>& sizes) {
  LatticeState out;
  out.resolution = sizes;
  for (std::size_t p = 0; p < x.num_populations(); ++p) {
    const auto n = static_cast<double>(sizes[p]);
    const Vector scaled = x[p] * n;
    const auto total = static_cast<std::int64_t>(std::llround(x[p].sum() * n));
    std::vector<std::int64_t> c(static_cast<std::size_t>(scaled.size()));
    std::vector<std::pair<double, std::size_t>> frac;
    std::int64_t used = 0;
    for (Eigen::Index i = 0; i < scaled.size(); ++i) {
      const double f = std::floor(scaled[i] + 1e-9);
      c[static_cast<std::size_t>(i)] = static_cast<std::int64_t>(f);
      used += c[static_cast<std::size_t>(i)];
      frac.emplace_back(scaled[i] - f, static_cast<std::size_t>(i));
    }
    std::stable_sort(frac.begin(), frac.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::int64_t k = 0; k < total - used; ++k) ++c[frac[static_cast<std::size_t>(k) % frac.size()].second];
    out.counts.push_back(std::move(c));
  }
  return out;
}

namespace detail {

/// Files written by one command; removed again if the command fails.
class Artifacts {
 public:
  explicit Artifacts(std::filesystem::path dir) : dir_(std::move(dir)) {}

  std::ofstream open(const std::string& name) {
    std::filesystem::create_directories(dir_);
    const auto path = dir_ / name;
    written_.push_back(path);
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error(fmt::format("cannot write {}", path.string()));
    return os;
  }

  void rollback() {
    std::error_code ec;
    for (const auto& p : written_) std::filesystem::remove(p, ec);
    written_.clear();
  }

  const std::vector<std::filesystem::path>& written() const { return written_; }

 private:
  std::filesystem::path dir_;
  std::vector<std::filesystem::path> written_;
};

/// Report as '[stage]' groups of 'key: value' lines, in insertion order.
class Report {
 public:
  void stage(const std::string& name) { text_ += (text_.empty() ? "" : "\n") + fmt::format("[{}]\n", name); }
  void put(const std::string& key, const std::string& value) { text_ += fmt::format("{}: {}\n", key, value); }
  void put(const std::string& key, double value) { put(key, fmt::format("{:.17g}", value)); }
  void put(const std::string& key, bool value) { put(key, std::string(value ? "true" : "false")); }
  void put(const std::string& key, std::size_t value) { put(key, std::to_string(value)); }
  const std::string& text() const { return text_; }
  bool empty() const { return text_.empty(); }

 private:
  std::string text_;
};

inline std::string matrix_inline(const Matrix& m) {
  std::vector<std::string> rows;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<std::string> cells;
    for (Eigen::Index j = 0; j < m.cols(); ++j) cells.push_back(fmt::format("{:.17g}", m(i, j)));
    rows.push_back(fmt::format("{}", fmt::join(cells, ", ")));
  }
  return fmt::format("{}", fmt::join(rows, "; "));
}

/// Lazily computed pipeline stages shared by the commands.
class Pipeline {
 public:
  Pipeline(ExperimentConfig cfg, std::string command, Artifacts& artifacts)
      : cfg_(std::move(cfg)), command_(std::move(command)), out_(artifacts), game_(make_game(cfg_)),
        protocols_(make_protocols(cfg_)) {}

  Report report;

  std::map<std::string, std::string> metadata(std::optional<std::uint64_t> seed = {}) const {
    std::map<std::string, std::string> m{
        {"command", command_},
        {"config_hash", fmt::format("{:016x}", cfg_.hash)},
        {"variant_factor", to_string(cfg_.run.factor)},
        {"variant_orientation", to_string(cfg_.run.orientation)},
        {"fstar", to_string(cfg_.run.fstar)},
        {"N", fmt::format("{}", fmt::join(sizes(), ","))},
        {"seed", seed ? std::to_string(*seed) : std::string("none")},
    };
    return m;
  }

  const std::vector<std::int64_t>& sizes() const {
    if (cfg_.run.N.empty()) throw PreconditionError("[run] N is required for this command");
    return cfg_.run.N;
  }

  double horizon() const {
    if (!cfg_.run.horizon) throw PreconditionError("[run] horizon is required for this command");
    return *cfg_.run.horizon;
  }

  SocialState x0() const {
    if (!cfg_.run.x0) return game_.barycenter();
    SocialState x{*cfg_.run.x0};
    if (!game_.is_valid_state(x, 1e-9)) throw PreconditionError("[run] x0 is not a valid social state");
    return x;
  }

  // ---- validate
  ValidationReport validate() {
    const auto samples = default_sample_states(game_, cfg_.run.N.empty() ? default_sizes() : cfg_.run.N);
    const auto rep = validate_hypotheses(game_, protocols_, samples);
    report.stage("validate");
    report.put("symmetric", rep.symmetric);
    report.put("fully_supported", rep.fully_supported);
    report.put("max_asymmetry", rep.max_asymmetry);
    report.put("min_rate", rep.min_rate);
    report.put("support_floor", rep.support_floor);
    report.put("samples", rep.samples);
    report.put("exhaustive", rep.exhaustive);
    return rep;
  }

  // ---- mean dynamic
  const Trajectory& trajectory() {
    if (!trajectory_) trajectory_ = integrate_mean_dynamic(game_, protocols_, x0(), horizon(), cfg_.run.dt);
    return *trajectory_;
  }

  void mean_dynamic() {
    const auto& traj = trajectory();
    if (cfg_.output.csv) {
      auto os = out_.open("trajectory.csv");
      write_trajectory_csv(os, traj);
    }
    report.stage("mean-dynamic");
    report.put("horizon", traj.horizon());
    report.put("dt", traj.dt);
    report.put("steps", traj.size() - 1);
    report.put("clamp_events", traj.clamp_events.size());
    double drift = 0.0;
    for (const auto& s : traj.states) {
      for (std::size_t p = 0; p < s.num_populations(); ++p) {
        drift = std::max(drift, std::abs(s[p].sum() - game_.mass(static_cast<int>(p))));
      }
    }
    report.put("max_mass_drift", drift);
  }

  // ---- simulate
  void simulate() {
    if (cfg_.run.seeds.empty()) throw PreconditionError("[run] seeds must be nonempty for simulate");
    const double T = horizon();
    const double burn = cfg_.run.effective_burn_in();
    const auto start = round_to_lattice(x0(), sizes());
    const auto& traj = trajectory_from(start.to_continuous());
    std::shared_ptr<const JointGrid> grid;
    if (joint_size() <= kDefaultGridLimit) grid = joint_grid();
    report.stage("simulate");
    std::vector<std::vector<std::int64_t>> start_counts = start.counts;
    report.put("start_counts", format_counts(start_counts));
    report.put("burn_in", burn);
    for (auto seed : cfg_.run.seeds) {
      const auto path = simulate_path(game_, protocols_, start, T, seed);
      if (cfg_.output.csv) {
        auto os = out_.open(fmt::format("path_seed{}.csv", seed));
        write_path_csv(os, cfg_.run.sample_time ? thinned(path, *cfg_.run.sample_time) : path, metadata(seed));
        if (grid) {
          auto occ = occupancy_table(path, grid, burn);
          occ.metadata = metadata(seed);
          occ.metadata["burn_in"] = fmt::format("{:.17g}", burn);
          auto os2 = out_.open(fmt::format("occupancy_seed{}.csv", seed));
          write_table_csv(os2, occ);
        }
      }
      report.put(fmt::format("events_seed_{}", seed), path.events.size() - 1);
      report.put(fmt::format("deviation_vs_ode_seed_{}", seed), deviation_vs_ode(path, traj));
    }
  }

  // ---- exact stationary
  const FiniteChain& chain() {
    if (!chain_) chain_ = build_generator(game_, protocols_, sizes());
    return *chain_;
  }

  const StationaryTable& exact() {
    if (!exact_) {
      StationaryOptions opts;
      opts.method = cfg_.run.method;
      exact_ = exact_stationary(chain(), opts);
      for (const auto& [k, v] : metadata()) exact_->metadata[k] = v;
    }
    return *exact_;
  }

  void exact_stationary_stage() {
    const auto& table = exact();
    const auto db = check_detailed_balance(chain(), table);
    if (cfg_.output.csv) {
      auto os = out_.open("exact.csv");
      write_table_csv(os, table);
    }
    report.stage("exact-stationary");
    report.put("states", table.size());
    report.put("solver", table.metadata.at("solver"));
    report.put("residual", table.metadata.at("residual"));
    report.put("irreducible", true);
    report.put("detailed_balance_max_imbalance", db.max_imbalance);
    report.put("detailed_balance_worst_pair",
               fmt::format("{} -> {}", format_counts(chain().grid->counts(db.worst_from)),
                           format_counts(chain().grid->counts(db.worst_to))));
  }

  // ---- transform
  const std::vector<TransformedGame>& transformed() {
    if (tgs_.empty()) tgs_ = decompose(game_, protocols_, sizes(), cfg_.run.fstar);
    return tgs_;
  }

  void transform() {
    const auto& tgs = transformed();
    const SocialState ref = game_.barycenter();
    if (cfg_.output.report) {
      auto os = out_.open("transformed.txt");
      os << "# derived rates are evaluated at the barycenter\n";
      os << fmt::format("fstar: {}\n", to_string(cfg_.run.fstar));
      for (const auto& tg : tgs) {
        const int p = tg.base_population() + 1;
        os << fmt::format("\n[population {}]\n", p);
        os << fmt::format("base_strategies: {}\n", tg.base_arity());
        os << fmt::format("population_size: {}\n", tg.population_size());
        std::vector<std::string> stages;
        for (const auto& s : tg.lineage()) {
          stages.push_back(fmt::format("{} {}->{} ({} populations)", to_string(s.kind), s.from_arity, s.to_arity,
                                       s.populations));
        }
        os << fmt::format("lineage: {}\n", fmt::join(stages, "; "));
        const auto blocks = tg.derived_blocks(ref);
        const auto payoff = tg.derived_payoff(ref);
        for (std::size_t d = 0; d < tg.num_populations(); ++d) {
          std::vector<std::string> labels;
          for (const auto& l : tg.populations()[d].strategies) labels.push_back(l.name());
          os << fmt::format("derived_{}_strategies: {}\n", d + 1, fmt::join(labels, ", "));
          os << fmt::format("derived_{}_rates: {}\n", d + 1, matrix_inline(blocks[d]));
          os << fmt::format("derived_{}_payoff: {}\n", d + 1, matrix_inline(payoff[d].transpose()));
        }
      }
    }
    report.stage("transform");
    for (const auto& tg : tgs) {
      const int p = tg.base_population() + 1;
      report.put(fmt::format("population_{}_derived_populations", p), tg.num_populations());
      report.put(fmt::format("population_{}_lineage_length", p), tg.lineage().size());
    }
  }

  // ---- predict
  struct DerivedMarginal {
    int base_population;
    std::size_t derived;
    std::string label;
    BirthDeathSpec spec;
    std::vector<double> weights;  // normalized
    bool degenerate;
  };

  const SocialState& rest_point() {
    if (!rest_) rest_ = find_rest_point(game_, protocols_, game_.barycenter()).state;
    return *rest_;
  }

  const std::vector<DerivedMarginal>& marginals() {
    if (marginals_.empty()) {
      for (const auto& tg : transformed()) {
        for (std::size_t d = 0; d < tg.num_populations(); ++d) {
          auto spec = make_birth_death_spec(tg, d, rest_point(), cfg_.run.factor, cfg_.run.orientation);
          spec.population = static_cast<int>(d);
          const auto w = birth_death_weights(spec);
          marginals_.push_back({tg.base_population(), d, tg.populations()[d].strategies.front().name(), spec,
                                w.normalized(), w.degenerate});
        }
      }
    }
    return marginals_;
  }

  const StationaryTable& predicted() {
    if (!predicted_) {
      std::vector<std::vector<std::vector<double>>> per_base(static_cast<std::size_t>(game_.num_populations()));
      for (const auto& tg : transformed()) {
        const auto p = static_cast<std::size_t>(tg.base_population());
        std::vector<std::vector<double>> ms(static_cast<std::size_t>(tg.base_arity() == 2 ? 1 : tg.base_arity()));
        for (const auto& m : marginals()) {
          if (m.base_population != tg.base_population()) continue;
          if (tg.base_arity() == 2) {
            if (m.derived == 0) ms[0] = m.weights;
          } else {
            ms[static_cast<std::size_t>(tg.populations()[m.derived].leading())] = m.weights;
          }
        }
        per_base[p] = std::move(ms);
      }
      predicted_ = product_form_joint(per_base, joint_grid());
      for (const auto& [k, v] : metadata()) predicted_->metadata[k] = v;
    }
    return *predicted_;
  }

  void predict() {
    const auto& ms = marginals();
    const auto& table = predicted();
    if (cfg_.output.csv) {
      auto os = out_.open("predicted.csv");
      write_table_csv(os, table);
      auto om = out_.open("marginals.csv");
      for (const auto& [k, v] : metadata()) om << "# " << k << ": " << v << "\n";
      om << "population,derived,strategy,count,probability\n";
      for (const auto& m : ms) {
        for (std::size_t k = 0; k < m.weights.size(); ++k) {
          om << fmt::format("{},{},{},{},{:.17g}\n", m.base_population + 1, m.derived + 1, m.label, k, m.weights[k]);
        }
      }
    }
    report.stage("predict");
    report.put("rest_point", fmt::format("{}", fmt::join(rest_point().flat(), ", ")));
    bool degenerate = false;
    for (const auto& m : ms) degenerate = degenerate || m.degenerate;
    report.put("degenerate_weights", degenerate);
    report.put("states", table.size());
  }

  // ---- compare
  void compare_stage() {
    const auto c = compare(predicted(), exact());
    if (cfg_.output.report) {
      auto os = out_.open("compare.txt");
      for (const auto& [k, v] : metadata()) os << "# " << k << ": " << v << "\n";
      os << fmt::format("tv: {:.17g}\nkl: {:.17g}\nmax_abs: {:.17g}\n", c.tv, c.kl, c.max_abs);
    }
    report.stage("compare");
    report.put("tv_predicted_vs_exact", c.tv);
    report.put("kl_predicted_vs_exact", c.kl);
    report.put("max_abs_predicted_vs_exact", c.max_abs);
    for (const auto& m : marginals()) {
      const auto& tg = transformed()[static_cast<std::size_t>(m.base_population)];
      if (tg.base_arity() == 2 && m.derived != 0) continue;
      const auto strategy = static_cast<std::size_t>(tg.populations()[m.derived].leading());
      const auto exact_m = marginal_from_exact(exact(), static_cast<std::size_t>(m.base_population), strategy);
      const auto mc = compare(std::span<const double>(m.weights), std::span<const double>(exact_m));
      report.put(fmt::format("tv_marginal_p{}_{}_vs_exact", m.base_population + 1, m.label), mc.tv);
    }
  }

  /// Each derived 2-strategy chain solved on its own: agreement with the
  /// birth-death weights and its detailed-balance imbalance.
  void derived_checks() {
    report.stage("derived-chains");
    double worst_db = 0.0;
    for (const auto& m : marginals()) {
      const auto& tg = transformed()[static_cast<std::size_t>(m.base_population)];
      auto [dg, dp] = derived_population_game(tg, m.derived, rest_point());
      const auto dc = build_generator(dg, {dp}, {tg.population_size()});
      const auto dex = exact_stationary(dc);
      std::vector<double> by_count(m.weights.size(), 0.0);
      for (std::size_t s = 0; s < dex.size(); ++s) {
        by_count[static_cast<std::size_t>(dc.grid->counts(s)[0][0])] = dex[s];
      }
      const auto c = compare(std::span<const double>(m.weights), std::span<const double>(by_count));
      const auto db = check_detailed_balance(dc, dex);
      worst_db = std::max(worst_db, db.max_imbalance);
      report.put(fmt::format("tv_birth_death_vs_chain_p{}_{}", m.base_population + 1, m.label), c.tv);
      report.put(fmt::format("detailed_balance_p{}_{}", m.base_population + 1, m.label), db.max_imbalance);
    }
    report.put("detailed_balance_derived_max", worst_db);
  }

  void settings() {
    report.stage("config");
    for (const auto& [k, v] : metadata()) {
      if (k != "seed") report.put(k, v);
    }
    report.put("seeds", fmt::format("{}", fmt::join(cfg_.run.seeds, ",")));
  }

  const ExperimentConfig& config() const { return cfg_; }

 private:
  std::vector<std::int64_t> default_sizes() const {
    return std::vector<std::int64_t>(static_cast<std::size_t>(game_.num_populations()), 20);
  }

  double joint_size() const {
    double size = 1.0;
    for (int p = 0; p < game_.num_populations(); ++p) {
      size *= composition_count(game_.strategy_count(p),
                                JointGrid::lattice_total(sizes()[static_cast<std::size_t>(p)], game_.mass(p)));
    }
    return size;
  }

  std::shared_ptr<const JointGrid> joint_grid() {
    if (chain_) return chain_->grid;
    if (!grid_) grid_ = std::make_shared<const JointGrid>(JointGrid::for_game(game_, sizes()));
    return grid_;
  }

  const Trajectory& trajectory_from(const SocialState& start) {
    if (!sim_trajectory_) sim_trajectory_ = integrate_mean_dynamic(game_, protocols_, start, horizon(), cfg_.run.dt);
    return *sim_trajectory_;
  }

  /// State held at t = 0, s, 2s, ... <= T.
  static SamplePath thinned(const SamplePath& path, double step) {
    SamplePath out = path;
    out.events.clear();
    std::size_t e = 0;
    for (std::int64_t k = 0;; ++k) {
      const double t = static_cast<double>(k) * step;
      if (t > path.horizon * (1.0 + 1e-12)) break;
      while (e + 1 < path.events.size() && path.events[e + 1].time <= t) ++e;
      out.events.push_back({t, path.events[e].counts});
    }
    return out;
  }

  ExperimentConfig cfg_;
  std::string command_;
  Artifacts& out_;
  PopulationGame game_;
  Protocols protocols_;
  std::optional<Trajectory> trajectory_;
  std::optional<Trajectory> sim_trajectory_;
  std::optional<FiniteChain> chain_;
  std::shared_ptr<const JointGrid> grid_;
  std::optional<StationaryTable> exact_;
  std::vector<TransformedGame> tgs_;
  std::optional<SocialState> rest_;
  std::vector<DerivedMarginal> marginals_;
  std::optional<StationaryTable> predicted_;
};

}  // namespace detail

/// Runs one command and writes its artifacts under `out_dir`. Returns the
/// exit status: 0 on success, 1 when validate finds a hypothesis violated,
/// 2 on any error (artifacts of the failed run are removed).
inline int run_command(const std::string& command, const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                       std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  if (std::find(commands().begin(), commands().end(), command) == commands().end()) {
    err << fmt::format("unknown command '{}' (expected one of {})\n", command, fmt::join(commands(), ", "));
    return 2;
  }
  detail::Artifacts artifacts(out_dir);
  int status = 0;
  try {
    detail::Pipeline pl(cfg, command, artifacts);
    pl.settings();
    std::string report_name = "report.txt";
    if (command == "validate") {
      const auto rep = pl.validate();
      status = rep.symmetric && rep.fully_supported ? 0 : 1;
      report_name = "validation.txt";
    } else if (command == "mean-dynamic") {
      pl.mean_dynamic();
    } else if (command == "simulate") {
      pl.simulate();
    } else if (command == "exact-stationary") {
      pl.exact_stationary_stage();
    } else if (command == "transform") {
      pl.transform();
    } else if (command == "predict") {
      pl.predict();
    } else if (command == "compare") {
      pl.compare_stage();
    } else {
      pl.validate();
      if (cfg.run.horizon) pl.mean_dynamic();
      if (cfg.run.horizon && !cfg.run.seeds.empty()) pl.simulate();
      pl.exact_stationary_stage();
      pl.transform();
      pl.predict();
      pl.compare_stage();
      pl.derived_checks();
    }
    if (cfg.output.report) {
      auto os = artifacts.open(report_name);
      os << pl.report.text();
    }
    for (const auto& p : artifacts.written()) out << p.string() << "\n";
    if (status == 1) err << "validation failed: game is not symmetric and fully supported (see validation.txt)\n";
  } catch (const std::exception& e) {
    artifacts.rollback();
    err << e.what() << "\n";
    return 2;
  }
  return status;
}

}  // namespace sympop

#endif  // SYMPOP_PIPELINE_HPP
