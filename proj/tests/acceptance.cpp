// Acceptance run: one PASS/FAIL line per criterion.
// usage: acceptance [path/to/sympop] [docs/examples]

#include "sympop/chain.hpp"
#include "sympop/dynamics.hpp"
#include "sympop/stationary.hpp"
#include "sympop/transform.hpp"

#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>

using namespace sympop;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

int failures = 0;

void criterion(int id, const std::string& name, double budget_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o{false, ""};
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, fmt::format("threw: {}", e.what())};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (budget_s > 0 && secs > budget_s) {
    o.pass = false;
    o.detail += fmt::format("; over budget {}s", budget_s);
  }
  if (!o.pass) ++failures;
  fmt::print("{} {:2d} {} ({}; {:.3f}s)\n", o.pass ? "PASS" : "FAIL", id, name, o.detail, secs);
}

std::vector<double> by_count(const FiniteChain& c, const StationaryTable& t) {
  std::vector<double> out(static_cast<std::size_t>(c.grid->population(0).total()) + 1, 0.0);
  for (std::size_t s = 0; s < t.size(); ++s) out[static_cast<std::size_t>(c.grid->counts(s)[0][0])] = t[s];
  return out;
}

double tv(const std::vector<double>& a, const std::vector<double>& b) {
  return compare(std::span<const double>(a), std::span<const double>(b)).tv;
}

struct Case {
  std::string name;
  PopulationGame game;
  RevisionProtocol protocol;
};

std::vector<Case> transform_cases() {
  const auto rps = make_linear_game(rock_paper_scissors());
  const auto coord = make_linear_game(Matrix::Identity(3, 3));
  std::vector<Case> out;
  for (const auto& [gname, game, lo] : {std::tuple{"rps", rps, -2.0}, std::tuple{"coordination", coord, 0.0}}) {
    out.push_back({fmt::format("{}/constant", gname), game, RevisionProtocol::constant(1.0)});
    for (double eta : {0.5, 2.0}) {
      out.push_back({fmt::format("{}/sum_exponential({})", gname, eta), game,
                     RevisionProtocol::sum_exponential(eta, std::exp(eta * lo))});
    }
  }
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  const std::string cli = argc > 1 ? argv[1] : "build/sympop";
  const fs::path examples = argc > 2 ? argv[2] : "docs/examples";

  criterion(1, "3->2 round trip is exact on 100 random symmetric tables", 1.0, [] {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.1, 10.0);
    const auto game = make_linear_game(Matrix::Zero(3, 3));
    int mismatched = 0;
    for (int t = 0; t < 100; ++t) {
      Matrix rho(3, 3);
      for (int i = 0; i < 3; ++i) {
        for (int j = i; j < 3; ++j) rho(i, j) = rho(j, i) = u(rng);
      }
      const auto tg = symmetrize_3to2(game, RevisionProtocol::table(rho), 2);
      if (invert_3to2(tg, game.barycenter()) != rho) ++mismatched;
    }
    return Outcome{mismatched == 0, fmt::format("{} of 100 tables differ", mismatched)};
  });

  criterion(2, "birth-death weights match the derived chains, N = 2..20", 10.0, [] {
    double worst = 0.0;
    std::size_t checked = 0;
    for (const auto& c : transform_cases()) {
      const Protocols ps{c.protocol};
      const auto rest = find_rest_point(c.game, ps, c.game.barycenter()).state;
      for (std::int64_t n = 2; n <= 20; ++n) {
        const auto tg = decompose(c.game, ps, {n}).front();
        for (std::size_t d = 0; d < tg.num_populations(); ++d) {
          const auto w = birth_death_weights(make_birth_death_spec(tg, d, rest)).normalized();
          auto [dg, dp] = derived_population_game(tg, d, rest);
          const auto chain = build_generator(dg, {dp}, {n});
          worst = std::max(worst, tv(w, by_count(chain, exact_stationary(chain))));
          ++checked;
        }
      }
    }
    return Outcome{worst <= 1e-10, fmt::format("max TV {:.3g} over {} populations", worst, checked)};
  });

  criterion(3, "paper factor degenerates at N = 2", 0.0, [] {
    const auto g = make_linear_game(rock_paper_scissors());
    const auto tg = symmetrize_3to2(g, RevisionProtocol::constant(1.0), 2);
    bool all = true;
    for (std::size_t d = 0; d < 3; ++d) {
      auto spec = make_birth_death_spec(tg, d, g.barycenter(), FactorVariant::paper);
      const auto w = birth_death_weights(spec);
      all = all && w.degenerate && w.weights[1] == 0.0 && w.weights[2] == 0.0;
    }
    return Outcome{all, "weights (1, 0, 0), flag set"};
  });

  criterion(4, "constant protocol n = 3, N = 4 is multinomial", 1.0, [] {
    const auto g = make_linear_game(rock_paper_scissors());
    const auto chain = build_generator(g, {RevisionProtocol::constant(1.0)}, {4});
    const auto mu = exact_stationary(chain);
    std::vector<double> multi;
    for (std::size_t s = 0; s < chain.size(); ++s) {
      const auto k = chain.grid->counts(s)[0];
      double coef = 24.0;
      for (auto ki : k) coef /= std::tgamma(static_cast<double>(ki) + 1.0);
      multi.push_back(coef / 81.0);
    }
    const double joint = tv(mu.probabilities, multi);
    double marg = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
      std::vector<double> bin;
      for (int k = 0; k <= 4; ++k) bin.push_back(binomial(4, k) * std::pow(1.0 / 3, k) * std::pow(2.0 / 3, 4 - k));
      marg = std::max(marg, tv(marginal_from_exact(mu, 0, i), bin));
    }
    return Outcome{joint <= 1e-10 && marg <= 1e-12, fmt::format("joint TV {:.3g}, marginal TV {:.3g}", joint, marg)};
  });

  criterion(5, "product-form gap is 2/15 for constant n = 3, N = 2", 0.0, [] {
    const auto g = make_linear_game(rock_paper_scissors());
    const Protocols ps{RevisionProtocol::constant(1.0)};
    std::vector<std::string> gaps;
    double at2 = 0.0;
    for (std::int64_t n = 2; n <= 8; ++n) {
      const auto chain = build_generator(g, ps, {n});
      const auto tg = decompose(g, ps, {n}).front();
      std::vector<std::vector<double>> ms(3);
      for (std::size_t d = 0; d < 3; ++d) {
        ms[static_cast<std::size_t>(tg.populations()[d].leading())] =
            birth_death_weights(make_birth_death_spec(tg, d, g.barycenter())).normalized();
      }
      const double gap = compare(product_form_joint({ms}, chain.grid), exact_stationary(chain)).tv;
      if (n == 2) at2 = gap;
      gaps.push_back(fmt::format("{:.6f}", gap));
    }
    return Outcome{std::abs(at2 - 2.0 / 15) <= 1e-10,
                   fmt::format("TV {:.12f}; N = 2..8: {}", at2, fmt::join(gaps, " "))};
  });

  criterion(6, "derived chains reversible, original RPS chain is not", 0.0, [] {
    double worst = 0.0;
    for (const auto& c : transform_cases()) {
      const Protocols ps{c.protocol};
      const auto rest = find_rest_point(c.game, ps, c.game.barycenter()).state;
      for (std::int64_t n : {2, 5, 10, 20}) {
        const auto tg = decompose(c.game, ps, {n}).front();
        for (std::size_t d = 0; d < tg.num_populations(); ++d) {
          auto [dg, dp] = derived_population_game(tg, d, rest);
          const auto chain = build_generator(dg, {dp}, {n});
          worst = std::max(worst, check_detailed_balance(chain, exact_stationary(chain)).max_imbalance);
        }
      }
    }
    const auto g = make_linear_game(rock_paper_scissors());
    const auto chain = build_generator(g, {RevisionProtocol::sum_exponential(2.0)}, {4});
    const double rps = check_detailed_balance(chain, exact_stationary(chain)).max_imbalance;
    return Outcome{worst <= 1e-12 && rps > 0.0,
                   fmt::format("derived max {:.3g}; RPS eta = 2, N = 4: {:.17g}", worst, rps)};
  });

  criterion(7, "N = 1000 paths stay within 0.1 of the mean dynamic", 300.0, [] {
    const auto g = make_linear_game(rock_paper_scissors());
    const Protocols ps{RevisionProtocol::sum_exponential(1.0)};
    Vector x0(3);
    x0 << 0.5, 0.3, 0.2;
    const auto traj = integrate_mean_dynamic(g, ps, SocialState{{x0}}, 10.0, 0.01);
    const LatticeState start{{{500, 300, 200}}, {1000}};
    int within = 0;
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
      const double dev = deviation_vs_ode(simulate_path(g, ps, start, 10.0, seed), traj);
      worst = std::max(worst, dev);
      if (dev < 0.1) ++within;
    }
    return Outcome{within >= 95, fmt::format("{} of 100 runs below 0.1, max {:.4f}", within, worst)};
  });

  criterion(8, "RK4 keeps mass over 10^4 steps", 0.0, [] {
    double drift = 0.0;
    const std::vector<std::pair<PopulationGame, RevisionProtocol>> cases = {
        {make_linear_game(rock_paper_scissors()), RevisionProtocol::constant(1.0)},
        {make_linear_game(rock_paper_scissors()), RevisionProtocol::sum_exponential(2.0)},
        {make_linear_game(Matrix::Identity(3, 3)), RevisionProtocol::sum_exponential(0.5)},
        {make_linear_game(Matrix::Identity(5, 5)), RevisionProtocol::sum_exponential(1.0)},
    };
    for (const auto& [g, p] : cases) {
      SocialState x0 = g.barycenter();
      x0.populations[0].setZero();
      x0.populations[0][0] = 0.7;
      x0.populations[0][1] = 0.3;
      const auto traj = integrate_mean_dynamic(g, {p}, x0, 100.0, 0.01);
      for (const auto& s : traj.states) drift = std::max(drift, std::abs(s[0].sum() - 1.0));
    }
    return Outcome{drift <= 1e-9, fmt::format("max |sum - 1| = {:.3g}", drift)};
  });

  criterion(9, "n = 5 reduces to five 2-strategy populations in 3 stages", 0.0, [] {
    const double c = 0.75;
    const auto game = make_linear_game(Matrix::Zero(5, 5));
    const auto tg = reduce_to(game, RevisionProtocol::constant(c), 4, 2);
    bool shape = tg.num_populations() == 5 && tg.arity() == 2 && tg.lineage().size() == 3;
    // Constant closure: plain-strategy rates inside every block stay c at every stage.
    bool closed = true;
    TransformedGame staged(game, 0, RevisionProtocol::constant(c), 4, FStarVariant::zero);
    while (staged.arity() > 3) {
      staged.apply(StageKind::reduce_once);
      for (const auto& b : staged.derived_blocks(game.barycenter())) {
        for (Eigen::Index i = 0; i + 1 < b.rows(); ++i) {
          for (Eigen::Index j = 0; j + 1 < b.cols(); ++j) closed = closed && b(i, j) == c;
        }
      }
    }
    for (const auto& b : tg.derived_blocks(game.barycenter())) closed = closed && b(0, 0) == c;
    return Outcome{shape && closed, fmt::format("{} populations x {} strategies, lineage {}, closure {}",
                                                tg.num_populations(), tg.arity(), tg.lineage().size(),
                                                closed ? "holds" : "broken")};
  });

  criterion(10, "every command reruns byte-identically", 0.0, [&] {
    const auto root = fs::temp_directory_path() / "sympop_acceptance";
    fs::remove_all(root);
    std::size_t files = 0;
    std::vector<std::string> bad;
    for (const char* cmd : {"validate", "mean-dynamic", "simulate", "exact-stationary", "transform", "predict",
                            "compare", "experiment"}) {
      for (const char* run : {"a", "b"}) {
        const auto line = fmt::format("{} {} --config {} --out {} > /dev/null 2>&1", cli, cmd,
                                      (examples / "rps_sum_exponential.cfg").string(),
                                      (root / run / cmd).string());
        if (std::system(line.c_str()) != 0) bad.push_back(fmt::format("{} exited nonzero", cmd));
      }
      if (!fs::exists(root / "a" / cmd)) continue;
      for (const auto& e : fs::directory_iterator(root / "a" / cmd)) {
        ++files;
        if (slurp(e.path()) != slurp(root / "b" / cmd / e.path().filename())) {
          bad.push_back(e.path().filename().string());
        }
      }
    }
    return Outcome{bad.empty() && files > 0,
                   bad.empty() ? fmt::format("{} files compared", files) : fmt::format("{}", fmt::join(bad, ", "))};
  });

  return failures == 0 ? 0 : 1;
}
