// workload.hpp - synthetic application models, live instances and scenario generation
#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace topil {

enum class ClusterId : std::uint8_t { little = 0, big = 1 };

inline constexpr int kNumClusters = 2;
inline constexpr int kNumCores = 8;
inline constexpr int kCoresPerCluster = 4;

constexpr ClusterId cluster_of(int core) { return core < kCoresPerCluster ? ClusterId::little : ClusterId::big; }
constexpr int index_of(ClusterId c) { return static_cast<int>(c); }
std::string_view to_string(ClusterId c);

/// Memory-saturation frequency (GHz) shared by all models.
inline constexpr double kMemSaturationGhz = 1.0;
/// Multiplier applied to AppModel::total_instructions for live instances.
inline constexpr double kDefaultTimeScale = 100.0;

struct PhaseSpec {
  double fraction = 1.0;  // share of the model's instructions
  double ipc_little = 0.5;
  double ipc_big = 1.0;
  double mem_intensity = 0.0;  // saturation strength, >= 0
  double l2d_rate = 2e7;       // L2D accesses per 1e9 instructions
  double activity = 0.8;       // switching activity for the power model
};

struct AppModel {
  std::string name;
  double total_instructions = 1e8;
  std::vector<PhaseSpec> phases;

  /// Throws std::invalid_argument on broken invariants.
  void validate() const;
  /// Index of the phase active after `executed` instructions out of `total`.
  std::size_t phase_at(double executed, double total) const;
  /// Instruction-weighted average IPS when the whole app runs on one cluster at f.
  double average_ips(ClusterId cluster, double f_ghz) const;
};

/// Instructions per second of one phase: base_ipc * f / (1 + mu * f / f_sat).
double ips(const PhaseSpec& phase, ClusterId cluster, double f_ghz);
double ips(const AppModel& model, std::size_t phase, ClusterId cluster, double f_ghz);

using AppId = int;

struct AppInstance {
  AppId id = -1;
  std::shared_ptr<const AppModel> model;
  double qos_target = 0.0;  // Q_k, IPS
  double arrival = 0.0;     // s
  double total_instructions = 0.0;
  bool endless = false;  // background load that never completes

  // progress
  double executed = 0.0;
  double start_time = -1.0;
  double finish_time = -1.0;
  double busy_time = 0.0;  // time spent mapped to a core
  int core = -1;
  int migrations = 0;

  // measurement window (reset by the runtime at each control epoch)
  double window_instructions = 0.0;
  double window_l2d = 0.0;
  double window_time = 0.0;
  double measured_ips = 0.0;  // q_k from the last closed window
  double measured_l2d = 0.0;  // accesses/s from the last closed window
  int measured_windows = 0;   // closed windows with nonzero mapped time

  // migration penalty still to be served
  double stall_remaining = 0.0;
  double slowdown_remaining = 0.0;

  bool running() const { return core >= 0; }
  bool finished() const { return finish_time >= 0.0; }
  std::size_t phase() const;
  double mean_ips() const { return busy_time > 0.0 ? executed / busy_time : 0.0; }
  bool qos_violated() const { return mean_ips() < qos_target; }
};

AppInstance make_instance(AppId id, std::shared_ptr<const AppModel> model, double qos_target, double arrival,
                          double time_scale = kDefaultTimeScale);

struct QosSample {
  double ips = 0.0;
  double l2d_per_s = 0.0;
};

/// Instructions retired in the current window divided by `window` (pro-rated when the
/// app ran for only part of it).
QosSample measure_qos(const AppInstance& instance, double window);

// ---------------------------------------------------------------------------
// App library

class AppLibrary {
 public:
  AppLibrary() = default;
  explicit AppLibrary(std::vector<AppModel> models);

  /// Shipped models: eight single-phase training apps and eight multi-phase evaluation apps.
  static AppLibrary defaults();
  static AppLibrary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::shared_ptr<const AppModel> find(std::string_view name) const;
  std::shared_ptr<const AppModel> at(std::string_view name) const;  // throws when missing
  const std::vector<std::shared_ptr<const AppModel>>& models() const { return models_; }
  std::vector<std::string> names() const;

 private:
  std::vector<std::shared_ptr<const AppModel>> models_;
};

std::vector<std::string> training_app_names();
std::vector<std::string> evaluation_app_names();
/// Training apps whose AoI role is withheld for model evaluation.
std::vector<std::string> held_out_aoi_names();
std::vector<std::string> all_app_names();

// ---------------------------------------------------------------------------
// Scenarios

struct QosRule {
  double low_fraction = 0.2;  // of the app's max-big-frequency IPS
  double high_fraction = 0.8;
  double reference_big_ghz = 2.36;  // frequency defining "max-big IPS"
};

enum class Cooling : std::uint8_t { fan, no_fan };
std::string_view to_string(Cooling c);
Cooling parse_cooling(std::string_view s);

struct ScenarioSpec {
  std::uint64_t seed = 1;
  std::vector<std::string> pool;
  int count = 20;
  double arrival_rate = 0.1;  // apps/s
  QosRule qos;
  Cooling cooling = Cooling::fan;

  void validate() const;
};

struct ScenarioApp {
  std::string app;
  double qos_target = 0.0;
  double arrival = 0.0;
};

/// Reproducible from the seed. The app multiset depends only on (seed, pool, count).
std::vector<ScenarioApp> generate_scenario(const ScenarioSpec& spec, const AppLibrary& library);

void save_scenario_csv(const std::filesystem::path& path, std::span<const ScenarioApp> apps);
std::vector<ScenarioApp> load_scenario_csv(const std::filesystem::path& path);

/// Average IPS on the big cluster at `big_max_ghz`, used as the QoS reference.
double max_big_ips(const AppModel& model, double big_max_ghz);

}  // namespace topil
