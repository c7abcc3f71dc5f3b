#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace uavrelay {

// Thrown when a scenario file or config violates a model invariant. The
// message names the violated invariant.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Thrown on unreadable/unwritable files or malformed JSON.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Air-to-ground channel parameters. File-unit fields are authoritative;
// beta0 and gamma0 are derived once by Scenario::finalize().
struct ChannelParams {
  double alpha = 2.5;      // path-loss exponent
  double beta0_db = -30.0; // channel gain at 1 m, dB
  double b1 = -4.3224;     // logistic surrogate offset
  double b2 = 6.0750;      // logistic surrogate slope
  double c1 = 0.0;         // logistic surrogate floor
  double c2 = 1.0;         // logistic surrogate span (c1 + c2 == 1)
  double a1 = 5.0;         // Rician factor scale
  double a2 = 2.0;         // Rician factor exponent rate
  double eps0 = 0.05;      // outage target

  // Derived, linear scale.
  double beta0 = 1e-3;
  double gamma0 = 0.0; // beta0 / (N0 * B * snr_gap)
};

// Algorithm knobs. All fields have working defaults; scenario files may
// override any of them in their "algo" object.
struct AlgoConfig {
  double mu = 30.0;              // inverse temperature for sampling
  double grid_cell_m = 5.0;      // placement grid cell edge, meters
  int random_candidates = 3;     // extra uniform candidates per sub-iteration (L)
  int max_gs_iters = 50;         // sampling iterations per phase (T_GS)
  int max_bcd_iters = 30;        // coordinate-descent rounds per phase (T_BCD)
  int max_outer_iters = 20;      // alternation budget (T_out)
  double sca_tol = 1e-3;         // relative convergence tolerance (eps)
  std::uint64_t rng_seed = 1;
  double init_altitude_m = 50.0; // initial/virtual altitude (H0)
  std::string init_mode = "vuc"; // vuc | random | gnc
  int random_select_n = 300;     // placements tried by the random baseline
};

struct GroundPair {
  Eigen::Vector2d src;
  Eigen::Vector2d dst;
};

// Horizontal service region (axis-aligned box).
struct Region {
  Eigen::Vector2d lo;
  Eigen::Vector2d hi;
};

// A problem instance. Physical quantities are stored in the units the file
// quotes (MHz, dBm, dB); finalize() derives the linear-SI values used by all
// computation so that serialize/load round-trips are field-exact.
struct Scenario {
  std::vector<GroundPair> pairs;
  int num_uavs = 1;

  double bandwidth_mhz = 10.0;
  double noise_dbm_per_hz = -169.0;
  double snr_gap_db = 8.2;
  double uav_power_w = 2.0;       // per-UAV budget P_m
  double source_power_dbm = 15.0; // per-source budget P_k
  double alt_min_m = 30.0;
  double alt_max_m = 150.0;
  ChannelParams channel;

  // Derived by finalize().
  Region region{{0, 0}, {0, 0}};
  double bandwidth_hz = 0;
  double noise_w_per_hz = 0;
  double snr_gap = 0;
  double source_power_w = 0;

  int num_pairs() const { return static_cast<int>(pairs.size()); }

  // Validates invariants, computes the square region covering all ground
  // nodes and fills the derived linear fields. Throws ValidationError.
  void finalize();
};

struct ScenarioFile {
  Scenario scenario;
  AlgoConfig algo;
};

double dbm_to_watt(double dbm);
double watt_to_dbm(double watt);
double db_to_linear(double db);
double linear_to_db(double lin);

// Unit-tagged conversion; unit is one of "dbm->w", "w->dbm", "db->ratio",
// "ratio->db", "dbm/hz->w/hz". Throws ValidationError on unknown units.
double convert_unit(double value, std::string_view unit);

// Parse + validate a scenario JSON document. Throws IoError on malformed
// JSON and ValidationError on invariant violations.
ScenarioFile load_scenario(const std::string& json_text);

// Read a scenario from disk. Throws IoError if unreadable.
ScenarioFile load_scenario_file(const std::string& path);

// Inverse of load_scenario for valid inputs (field-exact round trip).
std::string serialize_scenario(const ScenarioFile& sf);

// FNV-1a hash of the serialized scenario, as a 16-hex-digit string. Used to
// stamp outputs with the instance they came from.
std::string scenario_digest(const ScenarioFile& sf);

}  // namespace uavrelay
