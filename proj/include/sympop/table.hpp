#ifndef SYMPOP_TABLE_HPP
#define SYMPOP_TABLE_HPP

#include "sympop/core.hpp"
#include "sympop/grid.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>

#include <map>
#include <memory>
#include <numeric>
#include <span>
#include <ostream>
#include <string>
#include <vector>

namespace sympop {

enum class Provenance { exact, empirical, predicted_product_form };

inline const char* to_string(Provenance p) {
  switch (p) {
    case Provenance::exact: return "exact";
    case Provenance::empirical: return "empirical";
    case Provenance::predicted_product_form: return "predicted-product-form";
  }
  return "unknown";
}

/// Pairwise summation; deterministic for a given input order.
inline double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

/// A probability distribution over a joint state grid.
struct StationaryTable {
  std::shared_ptr<const JointGrid> grid;
  std::vector<double> probabilities;
  Provenance provenance = Provenance::exact;
  std::map<std::string, std::string> metadata;

  std::size_t size() const { return probabilities.size(); }
  double operator[](std::size_t i) const { return probabilities[i]; }
  double total() const { return pairwise_sum(probabilities); }

  void normalize() {
    const double s = total();
    if (!(s > 0.0)) throw EmptySupport("distribution has no mass to normalize");
    for (auto& p : probabilities) p /= s;
  }
};

/// "2:0:0" for one population, populations joined by '/'.
inline std::string format_counts(const std::vector<std::vector<std::int64_t>>& counts) {
  std::string out;
  for (std::size_t p = 0; p < counts.size(); ++p) {
    if (p > 0) out += '/';
    out += fmt::format("{}", fmt::join(counts[p], ":"));
  }
  return out;
}

/// Metadata as '# key: value' lines, then state_counts,probability,provenance.
inline void write_table_csv(std::ostream& os, const StationaryTable& table) {
  for (const auto& [k, v] : table.metadata) os << "# " << k << ": " << v << "\n";
  os << "state_counts,probability,provenance\n";
  for (std::size_t i = 0; i < table.size(); ++i) {
    os << format_counts(table.grid->counts(i)) << fmt::format(",{:.17g},", table.probabilities[i])
       << to_string(table.provenance) << "\n";
  }
}

}  // namespace sympop

#endif  // SYMPOP_TABLE_HPP
