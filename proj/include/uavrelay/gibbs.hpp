#pragma once

#include <map>
#include <vector>

#include "uavrelay/rng.hpp"
#include "uavrelay/sca.hpp"
#include "uavrelay/scenario.hpp"

namespace uavrelay::gibbs {

// Uniform cubic partition of the deployment cube (service square x altitude
// range). Cell c = (iz * ny + iy) * nx + ix; centroids lie strictly inside
// the cube. Axes whose span is shorter than one cell collapse to a single
// cell centered on the span.
struct Grid {
  double cell_m = 0;
  int nx = 0, ny = 0, nz = 0;
  Eigen::Vector2d lo;
  double z_lo = 0;
  // Midpoint centroids for collapsed axes (see of()).
  Eigen::Vector3d c0;

  static Grid of(const Scenario& s, double cell_m);

  int num_cells() const { return nx * ny * nz; }
  int index(int ix, int iy, int iz) const { return (iz * ny + iy) * nx + ix; }
  Eigen::Vector3d centroid(int cell) const;
  // Nearest centroid by Euclidean distance; equidistant points take the
  // smallest cell index. Points outside the cube land on a boundary cell,
  // which doubles as the clamp for out-of-region placements.
  int snap_one(const Eigen::Vector3d& p) const;
};

// Discrete chain state: one cell per UAV plus the iteration bookkeeping of
// the sampling loop.
struct GsState {
  std::vector<int> cells;
  double eta = 0;
  bool eta_valid = false;
  int t = 0; // iteration
  int i = 0; // sub-iteration (UAV just updated), 0 = none yet
};

sca::Placement placement_of(const Grid& g, const GsState& st);
GsState snap_to_grid(const Grid& g, const sca::Placement& w);

// Memoized slave-problem values: one bandwidth/power solve per distinct cell
// tuple, from the equal-split start so the value depends on the tuple alone.
class EtaCache {
 public:
  double eval(const Scenario& s, const Grid& g, const std::vector<int>& cells,
              const AlgoConfig& cfg);
  std::size_t solves() const { return solves_; }
  void clear() { memo_.clear(); }

 private:
  std::map<std::vector<int>, double> memo_;
  std::size_t solves_ = 0;
};

// Accessible cells for one UAV's sub-iteration, ascending by cell index:
// the current cell, its face-adjacent neighbors (boundary-clipped), and up
// to L uniform draws from the remaining cells (without replacement).
struct CandidateSet {
  std::vector<int> cells;
  std::vector<double> eta;
};

CandidateSet candidate_set(const Scenario& s, const Grid& g, const GsState& st, int uav,
                           const AlgoConfig& cfg, Rng& rng, EtaCache& cache);

// exp(mu * eta_j) / sum, computed with the max subtracted first. Weights are
// strictly positive and sum to 1 up to rounding.
std::vector<double> softmax_weights(const std::vector<double>& eta, double mu);

// One draw from the softmax over the candidate set; returns the chosen cell.
int transition_sample(const CandidateSet& c, double mu, Rng& rng);

struct GsOutcome {
  bool improved = false;
  GsState state; // first improving state, or best visited on exhaustion
  double eta = 0;
  int iterations = 0; // completed sampling iterations
};

// Sampling phase: up to cfg.max_gs_iters iterations of M sub-iterations,
// each resampling one UAV's cell over its candidate set. Stops at the first
// visited state whose eta exceeds eta_target; otherwise reports the best
// visited state (the start counts as visited).
GsOutcome gs_phase(const Scenario& s, const Grid& g, const GsState& start,
                   double eta_target, const AlgoConfig& cfg, Rng& rng, EtaCache& cache);

// Exact-chain step for stationarity tests: resamples UAV `uav` over the whole
// cell space. Refuses grids larger than `max_cells` since it evaluates every
// cell. The induced scan chain has stationary mass proportional to
// exp(mu * eta) on the product space.
GsState full_gibbs_step(const Scenario& s, const Grid& g, const GsState& st, int uav,
                        double mu, const AlgoConfig& cfg, Rng& rng, EtaCache& cache,
                        int max_cells = 4096);

}  // namespace uavrelay::gibbs
