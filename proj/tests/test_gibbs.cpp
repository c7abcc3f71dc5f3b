#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "doctest.h"
#include "test_util.hpp"
#include "uavrelay/gibbs.hpp"
#include "uavrelay/sca.hpp"

using namespace uavrelay;
namespace gb = gibbs;
namespace sc = sca;

namespace {

// Two-by-two-by-two cell space: 10 m square region, 10 m altitude band,
// 5 m cells.
ScenarioFile eight_cell_scenario() {
  ScenarioFile sf;
  sf.scenario.pairs.push_back({{0.0, 0.0}, {10.0, 10.0}});
  sf.scenario.num_uavs = 1;
  sf.scenario.alt_min_m = 30.0;
  sf.scenario.alt_max_m = 40.0;
  sf.scenario.finalize();
  sf.algo.grid_cell_m = 5.0;
  return sf;
}

}  // namespace

TEST_CASE("grid covers the deployment cube with interior centroids") {
  ScenarioFile sf = testutil::random_scenario(3, 2, 7);
  const Scenario& s = sf.scenario;
  const gb::Grid g = gb::Grid::of(s, 5.0);
  CHECK(g.nx == 60);
  CHECK(g.ny == 60);
  CHECK(g.nz == 24);
  for (int c : {0, 1, g.nx, g.nx * g.ny, g.num_cells() - 1}) {
    const Eigen::Vector3d p = g.centroid(c);
    CHECK(p.x() >= s.region.lo.x());
    CHECK(p.x() <= s.region.hi.x());
    CHECK(p.y() >= s.region.lo.y());
    CHECK(p.y() <= s.region.hi.y());
    CHECK(p.z() >= s.alt_min_m);
    CHECK(p.z() <= s.alt_max_m);
  }
  // index <-> centroid round trip on every cell of a small grid
  const gb::Grid g8 = gb::Grid::of(eight_cell_scenario().scenario, 5.0);
  for (int c = 0; c < g8.num_cells(); ++c) CHECK(g8.snap_one(g8.centroid(c)) == c);
}

TEST_CASE("snap: centroid fixed point, corner tie to the smallest index") {
  const gb::Grid g = gb::Grid::of(testutil::random_scenario(2, 1, 3).scenario, 5.0);
  CHECK(g.snap_one(g.centroid(777)) == 777);

  // Exactly between the first two centroids on each axis, and at the shared
  // corner of the first eight cells: the smaller index must win every tie.
  const Eigen::Vector3d c000 = g.centroid(0);
  CHECK(g.snap_one(c000 + Eigen::Vector3d(2.5, 0, 0)) == 0);
  CHECK(g.snap_one(c000 + Eigen::Vector3d(0, 2.5, 0)) == 0);
  CHECK(g.snap_one(c000 + Eigen::Vector3d(0, 0, 2.5)) == 0);
  CHECK(g.snap_one(c000 + Eigen::Vector3d(2.5, 2.5, 2.5)) == 0);
}

TEST_CASE("snap agrees with an exhaustive nearest-centroid scan") {
  ScenarioFile sf = testutil::random_scenario(2, 2, 5);
  const Scenario& s = sf.scenario;
  const gb::Grid g = gb::Grid::of(s, 25.0); // coarse: 12x12x4 cells, scannable
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::Vector3d p{
        s.region.lo.x() + (s.region.hi.x() - s.region.lo.x()) * rng.next_double(),
        s.region.lo.y() + (s.region.hi.y() - s.region.lo.y()) * rng.next_double(),
        s.alt_min_m + (s.alt_max_m - s.alt_min_m) * rng.next_double()};
    int best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (int c = 0; c < g.num_cells(); ++c) {
      const double d = (g.centroid(c) - p).squaredNorm();
      if (d < bd) {
        bd = d;
        best = c;
      }
    }
    CHECK(g.snap_one(p) == best);
  }
  // Out-of-cube points clamp to a boundary cell.
  const int c = g.snap_one({s.region.lo.x() - 50.0, s.region.lo.y() - 50.0, 0.0});
  CHECK(c == 0);
}

TEST_CASE("eta cache: one solve per tuple, equal-budget relay symmetry") {
  ScenarioFile sf = testutil::random_scenario(2, 2, 21);
  const Scenario& s = sf.scenario;
  const gb::Grid g = gb::Grid::of(s, 60.0);
  gb::EtaCache cache;

  const std::vector<int> cells{3, 41};
  const double e1 = cache.eval(s, g, cells, sf.algo);
  CHECK(cache.solves() == 1);
  const double e2 = cache.eval(s, g, cells, sf.algo);
  CHECK(cache.solves() == 1); // memo hit, no second solve
  CHECK(e1 == e2);

  // Swapping the two relays relabels identical machines.
  const double eswap = cache.eval(s, g, {41, 3}, sf.algo);
  CHECK(cache.solves() == 2);
  CHECK(eswap == doctest::Approx(e1).epsilon(1e-6));

  // The cached value is the slave solve at the tuple's centroids.
  gb::GsState st;
  st.cells = cells;
  const auto [al, eta] = sc::solve_resource_allocation(
      s, gb::placement_of(g, st), sc::Allocation::equal_split(s), sf.algo);
  CHECK(e1 == doctest::Approx(eta).epsilon(1e-12));
}

TEST_CASE("candidate sets: structure, dedup and clipping") {
  ScenarioFile sf = eight_cell_scenario();
  const Scenario& s = sf.scenario;
  const gb::Grid g = gb::Grid::of(s, 5.0);
  REQUIRE(g.num_cells() == 8);
  sf.algo.random_candidates = 3;
  gb::EtaCache cache;
  Rng rng(4);

  gb::GsState st;
  st.cells = {0}; // corner cell: 3 face neighbors survive clipping
  for (int rep = 0; rep < 20; ++rep) {
    const gb::CandidateSet cs = gb::candidate_set(s, g, st, 0, sf.algo, rng, cache);
    CHECK(cs.cells.size() == 7); // 1 + 3 neighbors + 3 random
    CHECK(std::is_sorted(cs.cells.begin(), cs.cells.end()));
    CHECK(std::adjacent_find(cs.cells.begin(), cs.cells.end()) == cs.cells.end());
    CHECK(std::binary_search(cs.cells.begin(), cs.cells.end(), 0));
    for (int c : {1, 2, 4}) CHECK(std::binary_search(cs.cells.begin(), cs.cells.end(), c));
    for (int c : cs.cells) {
      CHECK(c >= 0);
      CHECK(c < 8);
    }
  }
}

TEST_CASE("softmax: shift invariance, uniformity at mu=0, ratio at mu>0") {
  const std::vector<double> eta{1.3, 2.1, 0.4, 2.1};
  const std::vector<double> w = gb::softmax_weights(eta, 7.0);
  double sum = 0;
  for (double x : w) sum += x;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

  std::vector<double> shifted = eta;
  for (double& x : shifted) x += 123.0;
  const std::vector<double> ws = gb::softmax_weights(shifted, 7.0);
  for (std::size_t j = 0; j < w.size(); ++j)
    CHECK(w[j] == doctest::Approx(ws[j]).epsilon(1e-12));

  const std::vector<double> u = gb::softmax_weights(eta, 0.0);
  for (double x : u) CHECK(x == doctest::Approx(0.25).epsilon(1e-12));

  // exp(mu * (eta1 - eta0)) between two states
  const std::vector<double> two = gb::softmax_weights({0.7, 1.0}, 5.0);
  CHECK(two[1] / two[0] == doctest::Approx(std::exp(1.5)).epsilon(1e-12));
}

TEST_CASE("transition sampling is uniform at mu=0 (chi-squared)") {
  gb::CandidateSet cs;
  cs.cells = {2, 5, 9, 11, 20};
  cs.eta = {0.1, 3.0, 1.0, 2.2, 0.5}; // ignored at mu=0
  Rng rng(31);
  std::map<int, int> counts;
  const int n = 10000;
  for (int i = 0; i < n; ++i) ++counts[gb::transition_sample(cs, 0.0, rng)];
  const double expect = n / 5.0;
  double chi2 = 0;
  for (int c : cs.cells) {
    const double d = counts[c] - expect;
    chi2 += d * d / expect;
  }
  // 4 degrees of freedom: p > 0.01 means chi2 below 13.277
  CHECK(chi2 < 13.277);

  gb::CandidateSet one;
  one.cells = {4};
  one.eta = {1.0};
  for (int i = 0; i < 50; ++i) CHECK(gb::transition_sample(one, 3.0, rng) == 4);
}

TEST_CASE("transition sampling: two-candidate odds follow exp(mu * delta)") {
  gb::CandidateSet cs;
  cs.cells = {0, 1};
  cs.eta = {1.0, 1.4};
  const double mu = 2.0;
  const double p1 = std::exp(mu * 0.4) / (1.0 + std::exp(mu * 0.4));
  Rng rng(77);
  int hits = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) hits += gb::transition_sample(cs, mu, rng) == 1;
  const double sigma = std::sqrt(n * p1 * (1.0 - p1));
  CHECK(std::abs(hits - n * p1) <= 3.0 * sigma);
}

TEST_CASE("exact chain: stationary distribution and argmax mass growth") {
  ScenarioFile sf = eight_cell_scenario();
  const Scenario& s = sf.scenario;
  const gb::Grid g = gb::Grid::of(s, 5.0);
  REQUIRE(g.num_cells() == 8);
  gb::EtaCache cache;

  std::vector<double> eta(8);
  for (int c = 0; c < 8; ++c) eta[c] = cache.eval(s, g, {c}, sf.algo);

  auto stationary = [&](double mu) {
    std::vector<double> pi = gb::softmax_weights(eta, mu);
    return pi;
  };

  // M=1: each exact step samples the stationary law directly; a long run must
  // land within small total variation of it.
  const double mu = 2.0;
  const std::vector<double> pi = stationary(mu);
  gb::GsState st;
  st.cells = {0};
  Rng rng(123);
  std::vector<int> visits(8, 0);
  const int steps = 100000;
  for (int i = 0; i < steps; ++i) {
    st = gb::full_gibbs_step(s, g, st, 0, mu, sf.algo, rng, cache);
    ++visits[st.cells[0]];
  }
  CHECK(cache.solves() == 8); // enumeration fully memoized
  double tv = 0;
  for (int c = 0; c < 8; ++c) tv += std::abs(visits[c] / double(steps) - pi[c]);
  CHECK(0.5 * tv <= 0.05);

  // Sharper temperatures concentrate on the argmax.
  const int best = static_cast<int>(std::max_element(eta.begin(), eta.end()) -
                                    eta.begin());
  double prev = -1.0;
  for (double m : {0.0, 2.0, 10.0}) {
    const double mass = stationary(m)[best];
    CHECK(mass >= prev - 1e-15);
    prev = mass;
  }

  // Enumeration guard.
  CHECK_THROWS_AS(gb::full_gibbs_step(s, g, st, 0, mu, sf.algo, rng, cache, 4),
                  ValidationError);
}

TEST_CASE("gs phase: stopping rules and seed reproducibility") {
  ScenarioFile sf = eight_cell_scenario();
  const Scenario& s = sf.scenario;
  const gb::Grid g = gb::Grid::of(s, 5.0);
  AlgoConfig cfg = sf.algo;
  cfg.max_gs_iters = 6;
  cfg.random_candidates = 2;
  cfg.mu = 2.0;

  gb::GsState start;
  start.cells = {5};

  // Any finite eta beats -inf after the first sub-iteration.
  {
    gb::EtaCache cache;
    Rng rng(9);
    const gb::GsOutcome o = gb::gs_phase(
        s, g, start, -std::numeric_limits<double>::infinity(), cfg, rng, cache);
    CHECK(o.improved);
    CHECK(o.iterations == 1);
    CHECK(o.state.i == 1);
  }
  // Unreachable target: exhausts the budget and reports the best visit.
  {
    gb::EtaCache cache;
    Rng rng(9);
    const gb::GsOutcome o = gb::gs_phase(s, g, start, 1e9, cfg, rng, cache);
    CHECK_FALSE(o.improved);
    CHECK(o.iterations == cfg.max_gs_iters);
    CHECK(o.eta == cache.eval(s, g, o.state.cells, cfg));
  }
  // Zero budget: exhausted immediately with the start state.
  {
    gb::EtaCache cache;
    Rng rng(9);
    AlgoConfig c0 = cfg;
    c0.max_gs_iters = 0;
    const gb::GsOutcome o = gb::gs_phase(s, g, start, 1e9, c0, rng, cache);
    CHECK_FALSE(o.improved);
    CHECK(o.iterations == 0);
    CHECK(o.state.cells == start.cells);
  }
  // Same seed, fresh cache vs warm cache: identical visited sequence. The
  // sampler must consume randomness independently of memo state.
  {
    gb::EtaCache warm;
    for (int c = 0; c < 8; ++c) warm.eval(s, g, {c}, cfg); // pre-populate
    gb::EtaCache cold;
    Rng r1(42), r2(42);
    const gb::GsOutcome a = gb::gs_phase(s, g, start, 1e9, cfg, r1, cold);
    const gb::GsOutcome b = gb::gs_phase(s, g, start, 1e9, cfg, r2, warm);
    CHECK(a.state.cells == b.state.cells);
    CHECK(a.eta == b.eta);
    CHECK(a.iterations == b.iterations);
  }
}
