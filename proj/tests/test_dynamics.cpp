#include "sympop/dynamics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace sympop;

namespace {

SocialState single(double a, double b, double c) {
  Vector x(3);
  x << a, b, c;
  return SocialState{{x}};
}

double final_error(const PopulationGame& g, const Protocols& ps, const SocialState& x0, double T, double dt,
                   const Vector& reference) {
  return (integrate_mean_dynamic(g, ps, x0, T, dt).states.back()[0] - reference).cwiseAbs().maxCoeff();
}

}  // namespace

TEST(MeanDynamic, ConstantFromVertex) {
  const auto g = make_linear_game(rock_paper_scissors());
  const auto v = mean_dynamic_rhs(g, {RevisionProtocol::constant(1.0)}, single(1, 0, 0));
  EXPECT_DOUBLE_EQ(v[0][0], -2.0);
  EXPECT_DOUBLE_EQ(v[0][1], 1.0);
  EXPECT_DOUBLE_EQ(v[0][2], 1.0);
}

TEST(MeanDynamic, BarycenterIsRest) {
  const auto g = make_linear_game(rock_paper_scissors());
  const auto b = g.barycenter();
  EXPECT_LE(rhs_sup_norm(mean_dynamic_rhs(g, {RevisionProtocol::constant(1.0)}, b)), 1e-15);
  EXPECT_LE(rhs_sup_norm(mean_dynamic_rhs(g, {RevisionProtocol::sum_exponential(1.0)}, b)), 1e-15);
}

TEST(Integrate, ConstantConvergesToBarycenter) {
  const auto g = make_linear_game(rock_paper_scissors());
  const auto traj = integrate_mean_dynamic(g, {RevisionProtocol::constant(1.0)}, single(1, 0, 0), 50.0, 0.01);
  EXPECT_EQ(traj.size(), 5001u);
  EXPECT_LE((traj.states.back()[0] - Vector::Constant(3, 1.0 / 3)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Integrate, SingleStep) {
  const auto g = make_linear_game(rock_paper_scissors());
  const auto traj = integrate_mean_dynamic(g, {RevisionProtocol::constant(1.0)}, single(1, 0, 0), 0.01, 0.01);
  EXPECT_EQ(traj.size(), 2u);
  EXPECT_DOUBLE_EQ(traj.times[1], 0.01);
}

TEST(Integrate, RestStaysPut) {
  const auto g = make_linear_game(rock_paper_scissors());
  const auto b = g.barycenter();
  const auto traj = integrate_mean_dynamic(g, {RevisionProtocol::constant(1.0)}, b, 5.0, 0.01);
  for (const auto& s : traj.states) EXPECT_LE((s[0] - b[0]).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Integrate, ArithmeticTimes) {
  const auto g = make_linear_game(rock_paper_scissors());
  const auto traj = integrate_mean_dynamic(g, {RevisionProtocol::sum_exponential(1.0)}, single(0.5, 0.3, 0.2), 2.0, 0.1);
  ASSERT_EQ(traj.size(), 21u);
  for (std::size_t k = 0; k < traj.size(); ++k) EXPECT_DOUBLE_EQ(traj.times[k], 0.1 * static_cast<double>(k));
}

TEST(Integrate, ClosedFormAgreement) {
  // xdot = 1 - 3x from the vertex: x_1(t) = 1/3 + (2/3) e^{-3t}.
  const auto g = make_linear_game(rock_paper_scissors());
  const auto traj = integrate_mean_dynamic(g, {RevisionProtocol::constant(1.0)}, single(1, 0, 0), 1.0, 0.01);
  EXPECT_NEAR(traj.states.back()[0][0], 1.0 / 3 + 2.0 / 3 * std::exp(-3.0), 1e-9);
}

TEST(Integrate, FourthOrder) {
  const auto g = make_linear_game(rock_paper_scissors());
  const Protocols ps{RevisionProtocol::sum_exponential(1.0)};
  const auto x0 = single(0.5, 0.3, 0.2);
  const Vector reference = integrate_mean_dynamic(g, ps, x0, 1.0, 1.0 / 2048).states.back()[0];
  const double e1 = final_error(g, ps, x0, 1.0, 0.1, reference);
  const double e2 = final_error(g, ps, x0, 1.0, 0.05, reference);
  EXPECT_GE(std::log2(e1 / e2), 3.9);
}

TEST(Integrate, MassConserved) {
  const auto g = make_separable_linear_game({rock_paper_scissors(), Matrix::Identity(2, 2)}, {1.0, 0.5});
  const auto traj = integrate_mean_dynamic(g, {RevisionProtocol::sum_exponential(1.5)}, g.barycenter(), 100.0, 0.01);
  ASSERT_EQ(traj.size(), 10001u);
  double drift = 0.0;
  for (const auto& s : traj.states) {
    drift = std::max(drift, std::abs(s[0].sum() - 1.0));
    drift = std::max(drift, std::abs(s[1].sum() - 0.5));
  }
  EXPECT_LE(drift, 1e-9);
}

TEST(Integrate, Preconditions) {
  const auto g = make_linear_game(rock_paper_scissors());
  const Protocols ps{RevisionProtocol::constant(1.0)};
  EXPECT_THROW(integrate_mean_dynamic(g, ps, single(1, 0, 0), 1.0, 2.0), PreconditionError);
  EXPECT_THROW(integrate_mean_dynamic(g, ps, single(1, 0, 0), 0.0, 0.1), PreconditionError);
  EXPECT_THROW(integrate_mean_dynamic(g, ps, single(1, 1, 0), 1.0, 0.1), PreconditionError);
}

TEST(Integrate, DivergenceDetected) {
  const auto g = make_linear_game(rock_paper_scissors());
  // Huge rates with a coarse step overshoot the simplex.
  EXPECT_THROW(integrate_mean_dynamic(g, {RevisionProtocol::constant(100.0)}, single(1, 0, 0), 1.0, 0.5),
               IntegrationDiverged);
}

TEST(RestPoint, SumExponentialRps) {
  const auto g = make_linear_game(rock_paper_scissors());
  const auto rp = find_rest_point(g, {RevisionProtocol::sum_exponential(1.0)}, single(0.5, 0.3, 0.2));
  EXPECT_LE(rp.residual, 1e-10);
}

TEST(TrajectoryCsv, RowsAndHeader) {
  const auto g = make_linear_game(rock_paper_scissors());
  const auto traj = integrate_mean_dynamic(g, {RevisionProtocol::constant(1.0)}, single(1, 0, 0), 1.0, 0.01);
  std::ostringstream os;
  write_trajectory_csv(os, traj);
  std::istringstream in(os.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "t,x_1,x_2,x_3");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 101);
}
