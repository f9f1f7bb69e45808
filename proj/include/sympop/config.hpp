#ifndef SYMPOP_CONFIG_HPP
#define SYMPOP_CONFIG_HPP

#include "sympop/chain.hpp"
#include "sympop/core.hpp"
#include "sympop/game.hpp"
#include "sympop/protocol.hpp"
#include "sympop/stationary.hpp"
#include "sympop/transform.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace sympop {

/// All problems found in a config, one message per line.
class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> problems)
      : Error(join(problems)), problems_(std::move(problems)) {}
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string out = "invalid config:";
    for (const auto& s : v) out += "\n  " + s;
    return out;
  }
  std::vector<std::string> problems_;
};

enum class GameType { linear, table_payoff };

struct ExperimentConfig {
  struct Game {
    GameType type = GameType::linear;
    int populations = 1;
    std::vector<double> masses;
    std::vector<Matrix> payoffs;  // square per population (linear) or 1 x n (table-payoff)
  } game;

  struct Protocol {
    ProtocolKind kind = ProtocolKind::constant;
    double c = 1.0;
    double eta = 1.0;
    std::optional<double> support_floor;
    std::vector<Matrix> tables;
  } protocol;

  struct Run {
    std::vector<std::int64_t> N;
    std::optional<double> horizon;
    double dt = 0.01;
    std::optional<double> burn_in;
    std::optional<double> sample_time;
    std::vector<std::uint64_t> seeds;
    std::optional<std::vector<Vector>> x0;
    FactorVariant factor = FactorVariant::standard;
    OrientationVariant orientation = OrientationVariant::standard;
    FStarVariant fstar = FStarVariant::zero;
    StationaryMethod method = StationaryMethod::automatic;

    double effective_burn_in() const { return burn_in ? *burn_in : (horizon ? *horizon / 10.0 : 0.0); }
  } run;

  struct Output {
    std::string directory = "out";
    bool csv = true;
    bool report = true;
  } output;

  std::uint64_t hash = 0;
};

/// FNV-1a, 64 bit.
inline std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

namespace detail {

struct Entry {
  std::string value;
  std::vector<std::string> rows;  // indented continuation lines
  int line = 0;
};

using Section = std::map<std::string, Entry>;

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    auto t = trim(item);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

inline const std::map<std::string, std::vector<std::string>>& schema() {
  static const std::map<std::string, std::vector<std::string>> s = {
      {"game", {"type", "populations", "masses", "payoff"}},
      {"protocol", {"kind", "c", "eta", "support_floor", "table"}},
      {"run",
       {"N", "horizon", "dt", "burn_in", "sample_time", "seeds", "x0", "factor", "orientation", "fstar", "method"}},
      {"output", {"directory", "formats"}},
  };
  return s;
}

inline bool indexed_key(const std::string& base) { return base == "payoff" || base == "table" || base == "x0"; }

inline std::string nearest(const std::string& word, const std::vector<std::string>& options) {
  std::string best;
  std::size_t best_d = std::string::npos;
  for (const auto& o : options) {
    const auto d = edit_distance(word, o);
    if (d < best_d) {
      best_d = d;
      best = o;
    }
  }
  return best_d <= std::max<std::size_t>(2, word.size() / 2) ? best : std::string{};
}

class Reader {
 public:
  std::vector<std::string> errors;

  void error(const std::string& section, int line, const std::string& msg) {
    errors.push_back(line > 0 ? fmt::format("[{}] line {}: {}", section, line, msg) : fmt::format("[{}]: {}", section, msg));
  }

  std::optional<double> real(const std::string& sec, const Entry& e, const std::string& key) {
    const auto t = trim(e.value);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || ec != std::errc{} || ptr != t.data() + t.size() || !std::isfinite(v)) {
      error(sec, e.line, fmt::format("{} must be a number, got '{}'", key, t));
      return std::nullopt;
    }
    return v;
  }

  std::optional<std::vector<double>> reals(const std::string& sec, int line, const std::string& text,
                                           const std::string& key) {
    std::vector<double> out;
    for (const auto& item : split_list(text)) {
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
      if (ec != std::errc{} || ptr != item.data() + item.size() || !std::isfinite(v)) {
        error(sec, line, fmt::format("{}: '{}' is not a number", key, item));
        return std::nullopt;
      }
      out.push_back(v);
    }
    if (out.empty()) {
      error(sec, line, fmt::format("{} is empty", key));
      return std::nullopt;
    }
    return out;
  }

  template <typename Int>
  std::optional<std::vector<Int>> integers(const std::string& sec, const Entry& e, const std::string& key) {
    std::vector<Int> out;
    for (const auto& item : split_list(e.value)) {
      Int v{};
      const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
      if (ec != std::errc{} || ptr != item.data() + item.size()) {
        error(sec, e.line, fmt::format("{}: '{}' is not a nonnegative integer", key, item));
        return std::nullopt;
      }
      out.push_back(v);
    }
    if (out.empty()) {
      error(sec, e.line, fmt::format("{} is empty", key));
      return std::nullopt;
    }
    return out;
  }

  /// Matrix from continuation rows, or from the inline value as a single row.
  std::optional<Matrix> matrix(const std::string& sec, const Entry& e, const std::string& key) {
    std::vector<std::string> rows = e.rows;
    if (!trim(e.value).empty()) rows.insert(rows.begin(), e.value);
    if (rows.empty()) {
      error(sec, e.line, fmt::format("{} has no rows", key));
      return std::nullopt;
    }
    std::vector<std::vector<double>> parsed;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      auto row = reals(sec, e.line + static_cast<int>(r), rows[r], key);
      if (!row) return std::nullopt;
      parsed.push_back(std::move(*row));
    }
    for (const auto& row : parsed) {
      if (row.size() != parsed.front().size()) {
        error(sec, e.line, fmt::format("{}: rows have different lengths", key));
        return std::nullopt;
      }
    }
    Matrix m(static_cast<Eigen::Index>(parsed.size()), static_cast<Eigen::Index>(parsed.front().size()));
    for (std::size_t r = 0; r < parsed.size(); ++r) {
      for (std::size_t c = 0; c < parsed[r].size(); ++c) {
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = parsed[r][c];
      }
    }
    return m;
  }
};

/// Per-population value: "key.p" wins over a broadcast "key".
inline const Entry* for_population(const Section& s, const std::string& key, int p, int populations) {
  if (auto it = s.find(fmt::format("{}.{}", key, p + 1)); it != s.end()) return &it->second;
  if (auto it = s.find(key); it != s.end() && (populations == 1 || key != "x0")) return &it->second;
  return nullptr;
}

}  // namespace detail

/// Sectioned key = value text. '#' starts a comment; an indented line
/// continues the previous key as another matrix row.
inline ExperimentConfig parse_config(const std::string& text) {
  using detail::Entry;
  detail::Reader rd;
  std::map<std::string, detail::Section> sections;
  std::string current;
  Entry* last = nullptr;

  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const auto hash = raw.find('#');
    std::string line = hash == std::string::npos ? raw : raw.substr(0, hash);
    const bool indented = !line.empty() && (line[0] == ' ' || line[0] == '\t');
    const auto t = detail::trim(line);
    if (t.empty()) continue;
    if (t.front() == '[') {
      last = nullptr;
      if (t.back() != ']') {
        rd.error(current.empty() ? "top" : current, lineno, "malformed section header");
        continue;
      }
      current = detail::trim(t.substr(1, t.size() - 2));
      if (!detail::schema().contains(current)) {
        std::vector<std::string> names;
        for (const auto& [k, v] : detail::schema()) names.push_back(k);
        const auto hint = detail::nearest(current, names);
        rd.error(current, lineno,
                 hint.empty() ? "unknown section" : fmt::format("unknown section (did you mean [{}]?)", hint));
      }
      sections[current];
      continue;
    }
    if (indented && last != nullptr && t.find('=') == std::string::npos) {
      last->rows.push_back(t);
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      rd.error(current.empty() ? "top" : current, lineno, fmt::format("expected key = value, got '{}'", t));
      continue;
    }
    if (current.empty()) {
      rd.error("top", lineno, "key outside of any section");
      continue;
    }
    const auto key = detail::trim(t.substr(0, eq));
    const auto dot = key.find('.');
    const auto base = key.substr(0, dot);
    const auto sit = detail::schema().find(current);
    if (sit != detail::schema().end()) {
      const auto& allowed = sit->second;
      const bool known = std::find(allowed.begin(), allowed.end(), base) != allowed.end();
      if (!known) {
        auto hint = detail::nearest(base, allowed);
        std::string elsewhere;
        for (const auto& [sec, keys] : detail::schema()) {
          if (sec != current && std::find(keys.begin(), keys.end(), base) != keys.end()) elsewhere = sec;
        }
        std::string msg = fmt::format("unknown key '{}'", key);
        if (!elsewhere.empty()) {
          msg += fmt::format(" (it belongs in [{}])", elsewhere);
        } else if (!hint.empty()) {
          msg += fmt::format(" (did you mean '{}'?)", hint);
        } else {
          std::vector<std::string> names;
          for (const auto& [sec, keys] : detail::schema()) names.push_back(sec);
          if (auto s = detail::nearest(base, names); !s.empty()) {
            msg += fmt::format(" (did you mean the [{}] section?)", s);
          }
        }
        rd.error(current, lineno, msg);
        last = nullptr;
        continue;
      }
      if (dot != std::string::npos) {
        const auto suffix = key.substr(dot + 1);
        int idx = 0;
        const auto [ptr, ec] = std::from_chars(suffix.data(), suffix.data() + suffix.size(), idx);
        if (!detail::indexed_key(base) || ec != std::errc{} || ptr != suffix.data() + suffix.size() || idx < 1) {
          rd.error(current, lineno, fmt::format("unknown key '{}'", key));
          last = nullptr;
          continue;
        }
      }
    }
    auto& sec = sections[current];
    if (sec.contains(key)) rd.error(current, lineno, fmt::format("duplicate key '{}'", key));
    sec[key] = Entry{detail::trim(t.substr(eq + 1)), {}, lineno};
    last = &sec[key];
  }

  ExperimentConfig cfg;
  cfg.hash = fnv1a64(text);
  const detail::Section empty;
  auto section = [&](const std::string& name) -> const detail::Section& {
    auto it = sections.find(name);
    return it == sections.end() ? empty : it->second;
  };
  auto find = [](const detail::Section& s, const std::string& key) -> const Entry* {
    auto it = s.find(key);
    return it == s.end() ? nullptr : &it->second;
  };

  // [game]
  const auto& g = section("game");
  if (!sections.contains("game")) rd.error("game", 0, "section is missing");
  if (const auto* e = find(g, "type")) {
    if (e->value == "linear") {
      cfg.game.type = GameType::linear;
    } else if (e->value == "table-payoff") {
      cfg.game.type = GameType::table_payoff;
    } else {
      rd.error("game", e->line, fmt::format("type must be linear or table-payoff, got '{}'", e->value));
    }
  }
  if (const auto* e = find(g, "populations")) {
    auto v = rd.integers<int>("game", *e, "populations");
    if (v && (v->size() != 1 || v->front() < 1)) {
      rd.error("game", e->line, "populations must be a single positive integer");
    } else if (v) {
      cfg.game.populations = v->front();
    }
  }
  const int P = cfg.game.populations;
  cfg.game.masses.assign(static_cast<std::size_t>(P), 1.0);
  if (const auto* e = find(g, "masses")) {
    if (auto v = rd.reals("game", e->line, e->value, "masses")) {
      if (static_cast<int>(v->size()) != P) {
        rd.error("game", e->line, fmt::format("masses has {} entries for {} populations", v->size(), P));
      } else if (std::any_of(v->begin(), v->end(), [](double m) { return !(m > 0.0); })) {
        rd.error("game", e->line, "masses must be positive");
      } else {
        cfg.game.masses = *v;
      }
    }
  }
  std::vector<int> strategies(static_cast<std::size_t>(P), 0);
  for (int p = 0; p < P; ++p) {
    const auto* e = detail::for_population(g, "payoff", p, P);
    if (e == nullptr) {
      if (sections.contains("game")) rd.error("game", 0, fmt::format("no payoff for population {}", p + 1));
      continue;
    }
    auto m = rd.matrix("game", *e, "payoff");
    if (!m) continue;
    if (cfg.game.type == GameType::linear && m->rows() != m->cols()) {
      rd.error("game", e->line,
               fmt::format("payoff matrix for population {} is {}x{}, must be square", p + 1, m->rows(), m->cols()));
      continue;
    }
    if (cfg.game.type == GameType::table_payoff && m->rows() != 1) {
      rd.error("game", e->line, fmt::format("table-payoff for population {} must be a single row", p + 1));
      continue;
    }
    if (m->cols() < 2) {
      rd.error("game", e->line, fmt::format("population {} needs at least 2 strategies", p + 1));
      continue;
    }
    strategies[static_cast<std::size_t>(p)] = static_cast<int>(m->cols());
    cfg.game.payoffs.push_back(std::move(*m));
  }

  // [protocol]
  const auto& pr = section("protocol");
  if (!sections.contains("protocol")) rd.error("protocol", 0, "section is missing");
  if (const auto* e = find(pr, "kind")) {
    const std::map<std::string, ProtocolKind> kinds = {
        {"constant", ProtocolKind::constant}, {"sum_exponential", ProtocolKind::sum_exponential},
        {"table", ProtocolKind::table}};
    if (auto it = kinds.find(e->value); it != kinds.end()) {
      cfg.protocol.kind = it->second;
    } else {
      rd.error("protocol", e->line,
               fmt::format("kind must be constant, sum_exponential or table, got '{}'", e->value));
    }
  } else if (sections.contains("protocol")) {
    rd.error("protocol", 0, "kind is required");
  }
  auto required_real = [&](const char* key, double& out) {
    if (const auto* e = find(pr, key)) {
      if (auto v = rd.real("protocol", *e, key)) out = *v;
    } else {
      rd.error("protocol", 0, fmt::format("{} is required for kind = {}", key, to_string(cfg.protocol.kind)));
    }
  };
  if (cfg.protocol.kind == ProtocolKind::constant) required_real("c", cfg.protocol.c);
  if (cfg.protocol.kind == ProtocolKind::sum_exponential) required_real("eta", cfg.protocol.eta);
  if (const auto* e = find(pr, "support_floor")) {
    if (auto v = rd.real("protocol", *e, "support_floor")) {
      if (*v < 0.0) {
        rd.error("protocol", e->line, "support_floor must be nonnegative");
      } else {
        cfg.protocol.support_floor = v;
      }
    }
  }
  if (cfg.protocol.kind == ProtocolKind::table) {
    for (int p = 0; p < P; ++p) {
      const auto* e = detail::for_population(pr, "table", p, P);
      if (e == nullptr) {
        rd.error("protocol", 0, fmt::format("no rate table for population {}", p + 1));
        continue;
      }
      auto m = rd.matrix("protocol", *e, "table");
      if (!m) continue;
      const int n = strategies[static_cast<std::size_t>(p)];
      if (n > 0 && (m->rows() != n || m->cols() != n)) {
        rd.error("protocol", e->line,
                 fmt::format("rate table for population {} is {}x{}, game has {} strategies", p + 1, m->rows(),
                             m->cols(), n));
        continue;
      }
      cfg.protocol.tables.push_back(std::move(*m));
    }
  }

  // [run]
  const auto& r = section("run");
  if (const auto* e = find(r, "N")) {
    if (auto v = rd.integers<std::int64_t>("run", *e, "N")) {
      if (v->size() != 1 && static_cast<int>(v->size()) != P) {
        rd.error("run", e->line, fmt::format("N has {} entries for {} populations", v->size(), P));
      } else if (std::any_of(v->begin(), v->end(), [](std::int64_t n) { return n < 1; })) {
        rd.error("run", e->line, "N must be positive");
      } else {
        cfg.run.N = v->size() == 1 ? std::vector<std::int64_t>(static_cast<std::size_t>(P), v->front()) : *v;
        for (int p = 0; p < P; ++p) {
          const double k = static_cast<double>(cfg.run.N[static_cast<std::size_t>(p)]) *
                           cfg.game.masses[static_cast<std::size_t>(p)];
          if (std::abs(k - std::round(k)) > 1e-9) {
            rd.error("run", e->line, fmt::format("N * mass must be an integer for population {}", p + 1));
          }
        }
      }
    }
  }
  auto optional_real = [&](const char* key, std::optional<double>& out, bool positive) {
    if (const auto* e = find(r, key)) {
      if (auto v = rd.real("run", *e, key)) {
        if (positive ? !(*v > 0.0) : *v < 0.0) {
          rd.error("run", e->line, fmt::format("{} must be {}", key, positive ? "positive" : "nonnegative"));
        } else {
          out = v;
        }
      }
    }
  };
  optional_real("horizon", cfg.run.horizon, true);
  std::optional<double> dt;
  optional_real("dt", dt, true);
  if (dt) cfg.run.dt = *dt;
  optional_real("burn_in", cfg.run.burn_in, false);
  optional_real("sample_time", cfg.run.sample_time, true);
  if (cfg.run.horizon && cfg.run.dt > *cfg.run.horizon) rd.error("run", 0, "dt must not exceed horizon");
  if (cfg.run.horizon && cfg.run.burn_in && *cfg.run.burn_in >= *cfg.run.horizon) {
    rd.error("run", 0, "burn_in must be below horizon");
  }
  if (const auto* e = find(r, "seeds")) {
    if (auto v = rd.integers<std::uint64_t>("run", *e, "seeds")) cfg.run.seeds = *v;
  }
  if (detail::for_population(r, "x0", 0, P) != nullptr) {
    std::vector<Vector> x0;
    for (int p = 0; p < P; ++p) {
      const auto* e = detail::for_population(r, "x0", p, P);
      if (e == nullptr) {
        rd.error("run", 0, fmt::format("x0 missing for population {}", p + 1));
        continue;
      }
      auto v = rd.reals("run", e->line, e->value, "x0");
      if (!v) continue;
      const int n = strategies[static_cast<std::size_t>(p)];
      if (n > 0 && static_cast<int>(v->size()) != n) {
        rd.error("run", e->line, fmt::format("x0 for population {} has {} entries, game has {} strategies", p + 1,
                                             v->size(), n));
        continue;
      }
      x0.push_back(Eigen::Map<const Vector>(v->data(), static_cast<Eigen::Index>(v->size())));
    }
    if (static_cast<int>(x0.size()) == P) cfg.run.x0 = std::move(x0);
  }
  auto choice = [&](const char* key, const std::vector<std::string>& options) -> std::optional<std::size_t> {
    const auto* e = find(r, key);
    if (e == nullptr) return std::nullopt;
    for (std::size_t i = 0; i < options.size(); ++i) {
      if (e->value == options[i]) return i;
    }
    rd.error("run", e->line, fmt::format("{} must be one of {}, got '{}'", key, fmt::join(options, "|"), e->value));
    return std::nullopt;
  };
  if (auto c = choice("factor", {"standard", "paper"})) cfg.run.factor = static_cast<FactorVariant>(*c);
  if (auto c = choice("orientation", {"standard", "paper"})) cfg.run.orientation = static_cast<OrientationVariant>(*c);
  if (auto c = choice("fstar", {"zero", "weighted"})) cfg.run.fstar = static_cast<FStarVariant>(*c);
  if (auto c = choice("method", {"automatic", "dense_lu", "power_iteration"})) {
    cfg.run.method = static_cast<StationaryMethod>(*c);
  }

  // [output]
  const auto& o = section("output");
  if (const auto* e = find(o, "directory")) cfg.output.directory = e->value;
  if (const auto* e = find(o, "formats")) {
    cfg.output.csv = cfg.output.report = false;
    for (const auto& f : detail::split_list(e->value)) {
      if (f == "csv") {
        cfg.output.csv = true;
      } else if (f == "report") {
        cfg.output.report = true;
      } else {
        rd.error("output", e->line, fmt::format("unknown format '{}' (csv, report)", f));
      }
    }
  }

  if (!rd.errors.empty()) throw ConfigError(rd.errors);
  return cfg;
}

inline PopulationGame make_game(const ExperimentConfig& cfg) {
  if (cfg.game.type == GameType::linear) return make_separable_linear_game(cfg.game.payoffs, cfg.game.masses);
  std::vector<Vector> payoffs;
  for (const auto& m : cfg.game.payoffs) payoffs.push_back(m.row(0).transpose());
  return make_constant_payoff_game(payoffs, cfg.game.masses);
}

inline Protocols make_protocols(const ExperimentConfig& cfg) {
  const auto& pc = cfg.protocol;
  switch (pc.kind) {
    case ProtocolKind::constant:
      return {RevisionProtocol::constant(pc.c, pc.support_floor)};
    case ProtocolKind::sum_exponential:
      return {RevisionProtocol::sum_exponential(pc.eta, pc.support_floor.value_or(0.0))};
    case ProtocolKind::table: {
      Protocols out;
      for (const auto& t : pc.tables) out.push_back(RevisionProtocol::table(t, pc.support_floor));
      return out;
    }
    case ProtocolKind::custom:
      break;
  }
  throw ConstructionError("custom protocols cannot come from a config file");
}

}  // namespace sympop

#endif  // SYMPOP_CONFIG_HPP
