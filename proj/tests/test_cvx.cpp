#include <Eigen/Eigenvalues>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "oracle_cvx.hpp"
#include "uavrelay/cvx.hpp"
#include "uavrelay/rng.hpp"

using namespace uavrelay;
using cvx::Constraint;
using cvx::Program;
using cvx::Term;
using cvx::TermKind;

namespace {

Program tight_cap_lp() {
  Program p;
  const int eta = p.add_var(-10.0, 10.0);
  p.objective[eta] = 1.0;
  p.add_ineq().add_lin(eta, 1.0).constant = -3.0;
  p.add_ineq().add_lin(eta, 1.0).constant = -5.0;
  return p;
}

Term make_term(TermKind k, std::initializer_list<int> vars) {
  Term t;
  t.kind = k;
  t.nvar = 0;
  for (int v : vars) t.var[t.nvar++] = v;
  return t;
}

}  // namespace

TEST_CASE("solver recovers the tighter of two linear caps") {
  const cvx::Solution s = cvx::solve(tight_cap_lp());
  CHECK(s.status == cvx::SolveStatus::Optimal);
  CHECK(s.objective == doctest::Approx(3.0).epsilon(1e-6));
  CHECK(s.feas_residual <= 1e-7);
}

TEST_CASE("monotone epigraph pushes bandwidth to its cap") {
  // max t s.t. t <= a log2(1 + 7/a): increasing in a, so a* = 1, t* = 3.
  Program p;
  const int a = p.add_var(1e-6, 1.0);
  const int t = p.add_var(0.0, 10.0);
  p.objective[t] = 1.0;
  Term nl = make_term(TermKind::NegLogFixedArg, {a});
  nl.c0 = 7.0;
  p.add_ineq().add(nl).add_lin(t, 1.0);
  const cvx::Solution s = cvx::solve(p);
  CHECK(s.status == cvx::SolveStatus::Optimal);
  CHECK(s.objective == doctest::Approx(3.0).epsilon(1e-5));
  CHECK(s.x[a] >= 1.0 - 1e-4);
}

TEST_CASE("symmetric water-filling returns the even split") {
  const Program p = oracle::make_waterfilling(4.0);
  const cvx::Solution s = cvx::solve(p);
  CHECK(s.status == cvx::SolveStatus::Optimal);
  const double expect = 0.5 * std::log2(5.0);
  CHECK(std::abs(s.objective - expect) <= 1e-5);
  for (int i = 0; i < 4; ++i) CHECK(std::abs(s.x[i] - 0.5) <= 1e-5);

  SUBCASE("warm start at the optimum does not degrade the result") {
    const cvx::Solution w = cvx::solve(p, &s.x);
    CHECK(w.status == cvx::SolveStatus::Optimal);
    CHECK(std::abs(w.objective - s.objective) <= 1e-8);
  }
}

TEST_CASE("contradictory caps are reported infeasible") {
  Program p = tight_cap_lp();
  Constraint& c = p.add_ineq(); // eta >= 4
  c.add_lin(0, -1.0);
  c.constant = 4.0;
  const cvx::Solution s = cvx::solve(p);
  CHECK(s.status == cvx::SolveStatus::Infeasible);
}

TEST_CASE("kkt residual vanishes at the optimum and flags interior points") {
  const Program p = tight_cap_lp();
  Eigen::VectorXd opt(1), mid(1);
  opt << 3.0;
  mid << 0.0;
  const auto [feas_o, stat_o] = cvx::kkt_residual(p, opt);
  CHECK(feas_o <= 1e-12);
  CHECK(stat_o <= 1e-8);
  const auto [feas_m, stat_m] = cvx::kkt_residual(p, mid);
  CHECK(feas_m <= 1e-12);
  CHECK(stat_m >= 0.5);
}

TEST_CASE("atom gradients and Hessians match finite differences and stay convex") {
  Rng rng(2026);
  auto uni = [&](double a, double b) { return a + (b - a) * rng.next_double(); };

  // A term plus an in-domain sampler for its variables.
  struct Case {
    Term t;
    std::vector<std::pair<double, double>> box; // per-variable domain
  };
  std::vector<Case> cases;
  {
    Term t = make_term(TermKind::NegPerspectiveLog, {0, 1});
    t.c0 = uni(0.5, 50.0);
    cases.push_back({t, {{0.05, 1.0}, {0.05, 2.0}}});
  }
  {
    Term t = make_term(TermKind::NegLogFixedArg, {0});
    t.c0 = uni(0.5, 100.0);
    cases.push_back({t, {{0.05, 1.0}}});
  }
  {
    Term t = make_term(TermKind::SurrogateRate, {0, 1});
    t.c0 = uni(0.1, 1.0);
    t.c1 = uni(1.0, 1e3);
    t.c2 = rng.next_double();
    t.c3 = uni(0.5, 2.0);
    t.c4 = uni(2.0, 3.0);
    cases.push_back({t, {{5.0, 1e4}, {1.05, 80.0}}});
  }
  {
    Term t = make_term(TermKind::RecipRate, {0});
    t.c0 = uni(0.1, 1.0);
    t.c1 = uni(1.0, 1e3);
    cases.push_back({t, {{5.0, 1e4}}});
  }
  {
    Term t = make_term(TermKind::ExpAffine, {0});
    t.c0 = uni(0.1, 2.0);
    t.c1 = uni(-4.0, 4.0);
    t.c2 = uni(-7.0, 7.0);
    cases.push_back({t, {{0.02, 1.0}}});
  }
  {
    Term t = make_term(TermKind::SqrtQuad, {0, 1});
    t.c0 = uni(0.2, 2.0);
    t.c1 = uni(0.1, 4.0);
    t.u[0] = uni(-2.0, 2.0);
    t.u[1] = uni(-2.0, 2.0);
    cases.push_back({t, {{-2.0, 2.0}, {-2.0, 2.0}}});
  }
  {
    Term t = make_term(TermKind::SqrtQuad, {0});
    t.c0 = uni(0.2, 2.0);
    t.c1 = uni(0.1, 4.0);
    t.u[0] = 0.0;
    cases.push_back({t, {{0.3, 1.5}}});
  }
  {
    Term t = make_term(TermKind::QuadOverLin, {0, 1});
    t.c0 = uni(0.2, 2.0);
    t.c1 = uni(-1.0, 1.0);
    cases.push_back({t, {{-2.0, 2.0}, {0.2, 3.0}}});
  }
  {
    Term t = make_term(TermKind::Reciprocal, {0});
    t.c0 = uni(0.05, 2.0);
    cases.push_back({t, {{0.1, 3.0}}});
  }
  {
    Term t = make_term(TermKind::SquareDist, {0, 1});
    t.c0 = uni(0.2, 2.0);
    t.u[0] = uni(-2.0, 2.0);
    t.u[1] = uni(-2.0, 2.0);
    cases.push_back({t, {{-3.0, 3.0}, {-3.0, 3.0}}});
  }
  {
    Term t = make_term(TermKind::SquareDiff, {0, 1});
    t.c0 = uni(0.2, 2.0);
    cases.push_back({t, {{-3.0, 3.0}, {-3.0, 3.0}}});
  }

  for (const auto& cs : cases) {
    CAPTURE(static_cast<int>(cs.t.kind));
    for (int trial = 0; trial < 3; ++trial) {
      double x[3] = {0, 0, 0};
      for (int i = 0; i < cs.t.nvar; ++i)
        x[i] = uni(cs.box[i].first, cs.box[i].second);
      double g[3], h[9];
      const double f0 = cs.t.eval(x, g, h);
      CHECK(f0 == doctest::Approx(cs.t.value(x)).epsilon(1e-12));

      for (int i = 0; i < cs.t.nvar; ++i) {
        const double step = 1e-6 * std::max(1.0, std::abs(x[i]));
        double xp[3] = {x[0], x[1], x[2]}, xm[3] = {x[0], x[1], x[2]};
        xp[i] += step;
        xm[i] -= step;
        const double fd = (cs.t.value(xp) - cs.t.value(xm)) / (2 * step);
        CHECK(std::abs(fd - g[i]) <= 1e-5 * std::max(1.0, std::abs(g[i])));

        double gp[3], gm[3], hd[9];
        cs.t.eval(xp, gp, hd);
        cs.t.eval(xm, gm, hd);
        for (int j = 0; j < cs.t.nvar; ++j) {
          const double hfd = (gp[j] - gm[j]) / (2 * step);
          CHECK(std::abs(hfd - h[i * cs.t.nvar + j]) <=
                1e-4 * std::max(1.0, std::abs(h[i * cs.t.nvar + j])));
        }
      }

      Eigen::MatrixXd H(cs.t.nvar, cs.t.nvar);
      for (int i = 0; i < cs.t.nvar; ++i)
        for (int j = 0; j < cs.t.nvar; ++j) H(i, j) = h[i * cs.t.nvar + j];
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
      const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
      CHECK(es.eigenvalues().minCoeff() >= -1e-7 * scale);
    }
  }
}

TEST_CASE("randomized instances agree with the zoom-grid reference") {
  Rng rng(77);
  for (int i = 0; i < 12; ++i) {
    CAPTURE(i);
    oracle::Instance inst = oracle::make_solver_instance(i, rng);
    REQUIRE(oracle::feasible_ref(inst.prog, inst.anchor, 1e-9));
    const oracle::GridBest ref = oracle::reference_max(inst);
    REQUIRE(ref.found);
    const cvx::Solution s = cvx::solve(inst.prog);
    CHECK(s.status == cvx::SolveStatus::Optimal);
    CHECK(std::abs(s.objective - ref.obj) <= 1e-4 * std::max(1.0, std::abs(ref.obj)));
  }
}
