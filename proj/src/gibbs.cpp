#include "uavrelay/gibbs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace uavrelay::gibbs {

namespace {

// Cells per axis: nearest count keeping every centroid inside the span
// ((n - 0.5) * cell <= span). Sub-cell spans still get one cell.
int axis_cells(double span, double cell) {
  int n = static_cast<int>(std::floor(span / cell + 0.5));
  while (n > 1 && (n - 0.5) * cell > span) --n;
  return std::max(n, 1);
}

// Centroid coordinate along one axis; a collapsed axis (single cell narrower
// than the span) centers on the span instead of the lattice.
double axis_centroid(double lo, double span, double cell, int n, int i) {
  if (n == 1 && cell > span) return lo + 0.5 * span;
  return lo + (i + 0.5) * cell;
}

// Nearest lattice index with ties to the smaller index.
int axis_snap(double x, double lo, double cell, int n) {
  if (n == 1) return 0;
  const double u = (x - lo) / cell - 0.5;
  const int i = static_cast<int>(std::ceil(u - 0.5));
  return std::clamp(i, 0, n - 1);
}

}  // namespace

Grid Grid::of(const Scenario& s, double cell_m) {
  Grid g;
  g.cell_m = cell_m;
  g.lo = s.region.lo;
  g.z_lo = s.alt_min_m;
  const Eigen::Vector2d span = s.region.hi - s.region.lo;
  const double zspan = s.alt_max_m - s.alt_min_m;
  g.nx = axis_cells(span.x(), cell_m);
  g.ny = axis_cells(span.y(), cell_m);
  g.nz = axis_cells(zspan, cell_m);
  g.c0 = {axis_centroid(g.lo.x(), span.x(), cell_m, g.nx, 0),
          axis_centroid(g.lo.y(), span.y(), cell_m, g.ny, 0),
          axis_centroid(g.z_lo, zspan, cell_m, g.nz, 0)};
  return g;
}

Eigen::Vector3d Grid::centroid(int cell) const {
  const int ix = cell % nx;
  const int iy = (cell / nx) % ny;
  const int iz = cell / (nx * ny);
  return {c0.x() + ix * cell_m, c0.y() + iy * cell_m, c0.z() + iz * cell_m};
}

int Grid::snap_one(const Eigen::Vector3d& p) const {
  // Distance factorizes per axis, so the per-axis nearest-with-smaller-tie
  // choice minimizes the composite index among all nearest centroids.
  const int ix = axis_snap(p.x(), c0.x() - 0.5 * cell_m, cell_m, nx);
  const int iy = axis_snap(p.y(), c0.y() - 0.5 * cell_m, cell_m, ny);
  const int iz = axis_snap(p.z(), c0.z() - 0.5 * cell_m, cell_m, nz);
  return index(ix, iy, iz);
}

sca::Placement placement_of(const Grid& g, const GsState& st) {
  const int m = static_cast<int>(st.cells.size());
  sca::Placement w;
  w.q.resize(2, m);
  w.z.resize(m);
  for (int j = 0; j < m; ++j) {
    const Eigen::Vector3d c = g.centroid(st.cells[j]);
    w.q.col(j) << c.x(), c.y();
    w.z[j] = c.z();
  }
  return w;
}

GsState snap_to_grid(const Grid& g, const sca::Placement& w) {
  GsState st;
  st.cells.resize(w.count());
  for (int m = 0; m < w.count(); ++m)
    st.cells[m] = g.snap_one({w.q(0, m), w.q(1, m), w.z[m]});
  return st;
}

double EtaCache::eval(const Scenario& s, const Grid& g, const std::vector<int>& cells,
                      const AlgoConfig& cfg) {
  const auto it = memo_.find(cells);
  if (it != memo_.end()) return it->second;
  GsState st;
  st.cells = cells;
  sca::SolveDiag dg;
  const auto [al, eta] = sca::solve_resource_allocation(
      s, placement_of(g, st), sca::Allocation::equal_split(s), cfg, &dg);
  const double value = dg.solver_ok ? eta : 0.0;
  ++solves_;
  memo_.emplace(cells, value);
  return value;
}

CandidateSet candidate_set(const Scenario& s, const Grid& g, const GsState& st, int uav,
                           const AlgoConfig& cfg, Rng& rng, EtaCache& cache) {
  const int cur = st.cells[uav];
  const int ix = cur % g.nx;
  const int iy = (cur / g.nx) % g.ny;
  const int iz = cur / (g.nx * g.ny);

  std::vector<int> cells{cur};
  auto push = [&](int jx, int jy, int jz) {
    if (jx < 0 || jx >= g.nx || jy < 0 || jy >= g.ny || jz < 0 || jz >= g.nz) return;
    cells.push_back(g.index(jx, jy, jz));
  };
  push(ix - 1, iy, iz);
  push(ix + 1, iy, iz);
  push(ix, iy - 1, iz);
  push(ix, iy + 1, iz);
  push(ix, iy, iz - 1);
  push(ix, iy, iz + 1);
  std::sort(cells.begin(), cells.end());

  // Uniform rejection draws from the remaining cells, without replacement.
  const int total = g.num_cells();
  const int want = std::min<int>(cfg.random_candidates,
                                 total - static_cast<int>(cells.size()));
  std::vector<int> drawn;
  while (static_cast<int>(drawn.size()) < want) {
    const int c = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(total)));
    if (std::binary_search(cells.begin(), cells.end(), c)) continue;
    if (std::find(drawn.begin(), drawn.end(), c) != drawn.end()) continue;
    drawn.push_back(c);
  }
  cells.insert(cells.end(), drawn.begin(), drawn.end());
  std::sort(cells.begin(), cells.end());

  CandidateSet out;
  out.cells = std::move(cells);
  out.eta.resize(out.cells.size());
  std::vector<int> probe = st.cells;
  for (std::size_t j = 0; j < out.cells.size(); ++j) {
    probe[uav] = out.cells[j];
    out.eta[j] = cache.eval(s, g, probe, cfg);
  }
  return out;
}

std::vector<double> softmax_weights(const std::vector<double>& eta, double mu) {
  const double top = *std::max_element(eta.begin(), eta.end());
  std::vector<double> w(eta.size());
  double sum = 0;
  for (std::size_t j = 0; j < eta.size(); ++j) sum += w[j] = std::exp(mu * (eta[j] - top));
  for (double& x : w) x /= sum;
  return w;
}

int transition_sample(const CandidateSet& c, double mu, Rng& rng) {
  const std::vector<double> w = softmax_weights(c.eta, mu);
  const double u = rng.next_double();
  double acc = 0;
  for (std::size_t j = 0; j + 1 < w.size(); ++j) {
    acc += w[j];
    if (u < acc) return c.cells[j];
  }
  return c.cells.back();
}

GsOutcome gs_phase(const Scenario& s, const Grid& g, const GsState& start,
                   double eta_target, const AlgoConfig& cfg, Rng& rng, EtaCache& cache) {
  const int M = static_cast<int>(start.cells.size());
  GsState cur = start;
  cur.eta = cache.eval(s, g, cur.cells, cfg);
  cur.eta_valid = true;

  GsOutcome out;
  out.state = cur;
  out.eta = cur.eta;

  for (int t = 1; t <= cfg.max_gs_iters; ++t) {
    for (int m = 0; m < M; ++m) {
      const CandidateSet cs = candidate_set(s, g, cur, m, cfg, rng, cache);
      cur.cells[m] = transition_sample(cs, cfg.mu, rng);
      cur.eta = cache.eval(s, g, cur.cells, cfg);
      cur.t = t;
      cur.i = m + 1;
      if (cur.eta > out.eta) {
        out.state = cur;
        out.eta = cur.eta;
      }
      if (cur.eta > eta_target) {
        out.improved = true;
        out.state = cur;
        out.eta = cur.eta;
        out.iterations = t;
        return out;
      }
    }
    out.iterations = t;
  }
  return out;
}

GsState full_gibbs_step(const Scenario& s, const Grid& g, const GsState& st, int uav,
                        double mu, const AlgoConfig& cfg, Rng& rng, EtaCache& cache,
                        int max_cells) {
  if (g.num_cells() > max_cells)
    throw ValidationError("full_gibbs_step: cell space too large to enumerate");
  CandidateSet cs;
  cs.cells.resize(g.num_cells());
  cs.eta.resize(g.num_cells());
  std::vector<int> probe = st.cells;
  for (int c = 0; c < g.num_cells(); ++c) {
    probe[uav] = c;
    cs.cells[c] = c;
    cs.eta[c] = cache.eval(s, g, probe, cfg);
  }
  GsState next = st;
  next.cells[uav] = transition_sample(cs, mu, rng);
  next.eta = cache.eval(s, g, next.cells, cfg);
  next.eta_valid = true;
  return next;
}

}  // namespace uavrelay::gibbs
