// platform.hpp - two-cluster processor model: per-cluster DVFS, power, RC thermal network, DTM
#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "topil/workload.hpp"

namespace topil {

inline constexpr int kNumThermalNodes = kNumCores + 1;  // cores + package
inline constexpr int kPackageNode = kNumCores;

class InvalidFrequencyError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ClusterSpec {
  ClusterId id = ClusterId::little;
  std::vector<int> core_ids;
  std::vector<double> freq_levels;  // GHz, strictly ascending
  std::vector<double> voltages;     // V, one per level

  void validate() const;
  int levels() const { return static_cast<int>(freq_levels.size()); }
  int max_level() const { return levels() - 1; }
  double freq(int level) const { return freq_levels.at(static_cast<std::size_t>(level)); }
  double voltage(int level) const { return voltages.at(static_cast<std::size_t>(level)); }
  /// Level index of an exact table frequency, or nullopt.
  std::optional<int> level_of(double f_ghz) const;
};

/// Affine voltage curve V = v0 + slope * f evaluated at each level.
std::vector<double> affine_voltages(std::span<const double> freqs, double v0, double slope);

struct ClusterPower {
  double c_dyn = 0.5;          // W / (GHz V^2) at activity 1
  double p_leak0 = 0.05;       // W per busy core at ambient
  double k_leak = 0.02;        // 1/degC
  double idle_activity = 0.1;  // activity of a busy core while stalled
  double uncore = 0.05;        // W while any core of the cluster is busy
};

struct PowerModelParams {
  std::array<ClusterPower, kNumClusters> cluster;
  void validate() const;
};

struct ThermalModelParams {
  double c_core = 0.03;        // J/degC per core node
  double c_package = 0.2;      // J/degC
  double g_lateral = 0.4;      // W/degC between adjacent cores of a cluster
  double g_core_package = 0.5;  // W/degC
  double g_ambient_fan = 0.18;  // package -> ambient, W/degC
  double g_ambient_nofan = 0.09;
  double ambient = 25.0;
  double dtm_threshold = 85.0;
  double dtm_release = 80.0;

  void validate() const;
  double g_ambient(Cooling c) const { return c == Cooling::fan ? g_ambient_fan : g_ambient_nofan; }
};

struct MigrationPenalty {
  double stall = 0.005;            // s without progress after a migration
  double slowdown = 0.05;          // s of reduced throughput following the stall
  double slowdown_factor = 0.8;    // IPS multiplier during the slowdown

  /// Progress-equivalent seconds lost per migration.
  double lost_seconds() const { return stall + slowdown * (1.0 - slowdown_factor); }
};

struct PlatformConfig {
  std::array<ClusterSpec, kNumClusters> clusters;
  PowerModelParams power;
  ThermalModelParams thermal;
  MigrationPenalty migration;
  double dt = 0.005;  // s

  static PlatformConfig defaults();
  static PlatformConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  /// Throws std::invalid_argument, including for an explicit-Euler-unstable dt.
  void validate() const;
  const ClusterSpec& cluster(ClusterId c) const { return clusters[static_cast<std::size_t>(index_of(c))]; }
  /// Largest stable Euler step: min over nodes of capacity / total conductance.
  double max_stable_dt(Cooling cooling) const;
};

/// Symmetric conductance matrix G (W/degC) with G * (T - T_amb) = P at steady state.
using ConductanceMatrix = std::array<std::array<double, kNumThermalNodes>, kNumThermalNodes>;
ConductanceMatrix conductance_matrix(const ThermalModelParams& params, Cooling cooling);
/// Core pairs that share a lateral conductance (2x2 floorplan per cluster).
std::span<const std::pair<int, int>> lateral_pairs();

struct PlatformState {
  double time = 0.0;
  std::array<double, kNumThermalNodes> temperatures{};
  std::array<int, kNumClusters> level{};          // effective level (after DTM)
  std::array<int, kNumClusters> requested_level{};  // level set by the governor
  std::array<int, kNumClusters> dtm_cap{};          // highest level DTM allows
  std::array<bool, kNumClusters> dtm_active{};
  std::array<AppId, kNumCores> mapping{};           // -1 when free
  std::array<double, kNumCores> utilization{};      // over the last closed epoch

  double f(ClusterId c, const PlatformConfig& cfg) const { return cfg.cluster(c).freq(level[index_of(c)]); }
  bool core_free(int core) const { return mapping[static_cast<std::size_t>(core)] < 0; }
};

class Platform {
 public:
  Platform(PlatformConfig config, Cooling cooling);

  const PlatformConfig& config() const { return config_; }
  Cooling cooling() const { return cooling_; }
  const PlatformState& state() const { return state_; }
  double ambient() const { return config_.thermal.ambient; }

  /// Advance one dt: retire instructions of mapped apps (indexed by AppId), compute
  /// power and integrate the RC network with one explicit Euler step.
  void step(std::span<AppInstance> apps);

  void set_cluster_freq(ClusterId cluster, double f_ghz);
  void set_cluster_level(ClusterId cluster, int level);
  double freq(ClusterId cluster) const { return state_.f(cluster, config_); }
  int level(ClusterId cluster) const { return state_.level[index_of(cluster)]; }

  /// Called once per DVFS epoch. Steps the hotter cluster down while the peak exceeds
  /// the threshold; releases all caps below the release temperature.
  void apply_dtm();

  /// Max over the core nodes.
  double peak_temperature() const;
  const std::array<double, kNumThermalNodes>& power() const { return power_; }

  void assign(AppInstance& app, int core);
  void release(AppInstance& app);
  /// Moves a running app to a free core and charges the migration penalty.
  void migrate(AppInstance& app, int to_core);

  /// Closes the utilization epoch: utilization = busy time / elapsed time since last close.
  void close_epoch();

  void set_temperatures(const std::array<double, kNumThermalNodes>& t) { state_.temperatures = t; }

 private:
  void update_effective_level(int cluster);
  double advance_app(AppInstance& app, int core, double dt);  // returns busy seconds

  PlatformConfig config_;
  Cooling cooling_;
  PlatformState state_;
  ConductanceMatrix g_;
  std::array<double, kNumThermalNodes> inv_capacity_{};
  std::array<double, kNumThermalNodes> power_{};
  std::array<double, kNumCores> busy_time_{};
  std::array<double, kNumCores> activity_{};
  double epoch_start_ = 0.0;
  long long steps_ = 0;
};

struct TemperatureSample {
  double time;
  std::array<double, kNumThermalNodes> temperatures;
  double f_little;
  double f_big;
};

void write_temperature_trace(const std::filesystem::path& path, std::span<const TemperatureSample> samples);

}  // namespace topil
