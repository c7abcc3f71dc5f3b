#include "uavrelay/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace uavrelay {

using nlohmann::json;

double dbm_to_watt(double dbm) { return std::pow(10.0, dbm / 10.0) * 1e-3; }
double watt_to_dbm(double watt) { return 10.0 * std::log10(watt * 1e3); }
double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
double linear_to_db(double lin) { return 10.0 * std::log10(lin); }

double convert_unit(double value, std::string_view unit) {
  if (unit == "dbm->w") return dbm_to_watt(value);
  if (unit == "w->dbm") return watt_to_dbm(value);
  if (unit == "db->ratio") return db_to_linear(value);
  if (unit == "ratio->db") return linear_to_db(value);
  if (unit == "dbm/hz->w/hz") return dbm_to_watt(value);
  throw ValidationError("unknown unit tag '" + std::string(unit) + "'");
}

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw ValidationError(what);
}

}  // namespace

void Scenario::finalize() {
  require(!pairs.empty(), "at least one source-destination pair required");
  require(num_uavs >= 1, "num_uavs must be >= 1");
  require(bandwidth_mhz > 0, "bandwidth must be positive");
  require(uav_power_w > 0, "UAV power budget must be positive");
  require(alt_min_m > 0, "minimum altitude must be positive");
  require(alt_min_m <= alt_max_m, "altitude range inverted");
  require(channel.alpha >= 2.0 && channel.alpha <= 6.0,
          "path-loss exponent out of range [2, 6]");
  require(std::abs(channel.c1 + channel.c2 - 1.0) <= 1e-12, "C1+C2 != 1");
  require(channel.b1 < 0.0 && channel.b2 > 0.0, "logistic shape requires B1 < 0 < B2");
  require(channel.a1 > 0.0, "Rician factor scale A1 must be positive");
  require(channel.a2 >= 0.0, "Rician factor rate A2 must be nonnegative");
  require(channel.eps0 > 0.0 && channel.eps0 <= 0.1, "outage target out of range (0, 0.1]");
  require(snr_gap_db >= 0.0, "SNR gap must be >= 0 dB");

  bandwidth_hz = bandwidth_mhz * 1e6;
  noise_w_per_hz = dbm_to_watt(noise_dbm_per_hz);
  snr_gap = db_to_linear(snr_gap_db);
  source_power_w = dbm_to_watt(source_power_dbm);
  channel.beta0 = db_to_linear(channel.beta0_db);
  channel.gamma0 = channel.beta0 / (noise_w_per_hz * bandwidth_hz * snr_gap);

  // Smallest square covering all ground nodes; relay positions live inside it.
  Eigen::Vector2d lo = pairs[0].src, hi = pairs[0].src;
  for (const auto& pr : pairs) {
    lo = lo.cwiseMin(pr.src).cwiseMin(pr.dst);
    hi = hi.cwiseMax(pr.src).cwiseMax(pr.dst);
  }
  const Eigen::Vector2d extent = hi - lo;
  const double side = std::max(extent.x(), extent.y());
  const Eigen::Vector2d center = 0.5 * (lo + hi);
  region.lo = center - Eigen::Vector2d::Constant(side / 2);
  region.hi = center + Eigen::Vector2d::Constant(side / 2);
}

namespace {

void check_algo(const AlgoConfig& a) {
  require(a.mu >= 0.0, "sampling temperature mu must be >= 0");
  require(a.grid_cell_m > 0.0, "grid cell size must be positive");
  require(a.random_candidates >= 0, "random candidate count L must be >= 0");
  require(a.max_gs_iters >= 1, "max_gs_iters must be >= 1");
  require(a.max_bcd_iters >= 1, "max_bcd_iters must be >= 1");
  require(a.max_outer_iters >= 1, "max_outer_iters must be >= 1");
  require(a.sca_tol > 0.0, "convergence tolerance eps must be positive");
  require(a.init_altitude_m > 0.0, "initial altitude must be positive");
  require(a.init_mode == "vuc" || a.init_mode == "random" || a.init_mode == "gnc",
          "init_mode must be one of vuc|random|gnc");
  require(a.random_select_n >= 1, "random_select_n must be >= 1");
}

Eigen::Vector2d parse_point(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    throw ValidationError(std::string(what) + " must be a [x, y] number pair");
  return {j[0].get<double>(), j[1].get<double>()};
}

}  // namespace

ScenarioFile load_scenario(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed scenario JSON: ") + e.what());
  }
  if (!j.is_object()) throw IoError("scenario JSON root must be an object");

  ScenarioFile sf;
  Scenario& s = sf.scenario;
  try {
    if (!j.contains("pairs") || !j["pairs"].is_array() || j["pairs"].empty())
      throw ValidationError("at least one source-destination pair required");
    for (const auto& p : j["pairs"]) {
      GroundPair gp;
      gp.src = parse_point(p.at("src"), "pair src");
      gp.dst = parse_point(p.at("dst"), "pair dst");
      s.pairs.push_back(gp);
    }
    s.num_uavs = j.value("num_uavs", s.num_uavs);
    s.bandwidth_mhz = j.value("bandwidth_mhz", s.bandwidth_mhz);
    s.noise_dbm_per_hz = j.value("noise_dbm_per_hz", s.noise_dbm_per_hz);
    s.snr_gap_db = j.value("snr_gap_db", s.snr_gap_db);
    s.uav_power_w = j.value("uav_power_w", s.uav_power_w);
    s.source_power_dbm = j.value("source_power_dbm", s.source_power_dbm);
    if (j.contains("altitude_m")) {
      const auto& alt = j["altitude_m"];
      if (!alt.is_array() || alt.size() != 2)
        throw ValidationError("altitude_m must be [min, max]");
      s.alt_min_m = alt[0].get<double>();
      s.alt_max_m = alt[1].get<double>();
    }
    if (j.contains("channel")) {
      const auto& c = j["channel"];
      ChannelParams& cp = s.channel;
      cp.alpha = c.value("alpha", cp.alpha);
      cp.beta0_db = c.value("beta0_db", cp.beta0_db);
      cp.b1 = c.value("B1", cp.b1);
      cp.b2 = c.value("B2", cp.b2);
      cp.c1 = c.value("C1", cp.c1);
      cp.c2 = c.value("C2", cp.c2);
      cp.a1 = c.value("A1", cp.a1);
      cp.a2 = c.value("A2", cp.a2);
      cp.eps0 = c.value("eps0", cp.eps0);
    }
    if (j.contains("algo")) {
      const auto& a = j["algo"];
      AlgoConfig& cfg = sf.algo;
      cfg.mu = a.value("mu", cfg.mu);
      cfg.grid_cell_m = a.value("grid_cell_m", cfg.grid_cell_m);
      cfg.random_candidates = a.value("L", cfg.random_candidates);
      cfg.max_gs_iters = a.value("max_gs_iters", cfg.max_gs_iters);
      cfg.max_bcd_iters = a.value("max_bcd_iters", cfg.max_bcd_iters);
      cfg.max_outer_iters = a.value("max_outer_iters", cfg.max_outer_iters);
      cfg.sca_tol = a.value("eps", cfg.sca_tol);
      cfg.rng_seed = a.value("seed", cfg.rng_seed);
      cfg.init_altitude_m = a.value("init_altitude_m", cfg.init_altitude_m);
      cfg.init_mode = a.value("init_mode", cfg.init_mode);
      cfg.random_select_n = a.value("random_select_n", cfg.random_select_n);
    }
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed scenario JSON: ") + e.what());
  }

  s.finalize();
  check_algo(sf.algo);
  require(sf.algo.init_altitude_m >= s.alt_min_m && sf.algo.init_altitude_m <= s.alt_max_m,
          "initial altitude outside altitude range");
  return sf;
}

ScenarioFile load_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open scenario file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_scenario(ss.str());
}

std::string serialize_scenario(const ScenarioFile& sf) {
  const Scenario& s = sf.scenario;
  json pairs = json::array();
  for (const auto& p : s.pairs)
    pairs.push_back({{"src", {p.src.x(), p.src.y()}}, {"dst", {p.dst.x(), p.dst.y()}}});

  json j{
      {"pairs", pairs},
      {"num_uavs", s.num_uavs},
      {"bandwidth_mhz", s.bandwidth_mhz},
      {"noise_dbm_per_hz", s.noise_dbm_per_hz},
      {"snr_gap_db", s.snr_gap_db},
      {"uav_power_w", s.uav_power_w},
      {"source_power_dbm", s.source_power_dbm},
      {"altitude_m", {s.alt_min_m, s.alt_max_m}},
      {"channel",
       {{"alpha", s.channel.alpha},
        {"beta0_db", s.channel.beta0_db},
        {"B1", s.channel.b1},
        {"B2", s.channel.b2},
        {"C1", s.channel.c1},
        {"C2", s.channel.c2},
        {"A1", s.channel.a1},
        {"A2", s.channel.a2},
        {"eps0", s.channel.eps0}}},
      {"algo",
       {{"mu", sf.algo.mu},
        {"grid_cell_m", sf.algo.grid_cell_m},
        {"L", sf.algo.random_candidates},
        {"max_gs_iters", sf.algo.max_gs_iters},
        {"max_bcd_iters", sf.algo.max_bcd_iters},
        {"max_outer_iters", sf.algo.max_outer_iters},
        {"eps", sf.algo.sca_tol},
        {"seed", sf.algo.rng_seed},
        {"init_altitude_m", sf.algo.init_altitude_m},
        {"init_mode", sf.algo.init_mode},
        {"random_select_n", sf.algo.random_select_n}}},
  };
  return j.dump(2);
}

std::string scenario_digest(const ScenarioFile& sf) {
  const std::string text = serialize_scenario(sf);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace uavrelay
