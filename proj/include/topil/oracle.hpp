// oracle.hpp - design-time trace collection and soft-labeled training data extraction
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "topil/features.hpp"

namespace topil {

struct TracePoint {
  double q = 0.0;       // IPS of the AoI
  double l2d = 0.0;     // L2D accesses/s of the AoI
  double peak_t = 0.0;  // max core temperature over the trace, degC
};

/// Traces of one (background, AoI) combination over a reduced VF grid.
struct ComboTraces {
  std::string scenario;
  std::string aoi;
  std::array<bool, kNumCores> occupied{};
  std::vector<double> freqs_l;  // ascending grid frequencies, GHz
  std::vector<double> freqs_b;
  std::array<std::vector<TracePoint>, kNumCores> grid;  // per free core, index li * |freqs_b| + bi

  std::vector<int> free_cores() const;
  /// Throws std::runtime_error for a missing grid point.
  const TracePoint& at(int core, int li, int bi) const;
  void set(int core, int li, int bi, const TracePoint& p);
  /// Highest q in the grid.
  double max_q() const;
};

struct VfChoice {
  int li = 0;
  int bi = 0;
  bool operator==(const VfChoice&) const = default;
};

/// Coolest grid point with f_l >= req_l, f_b >= req_b and q >= Q. Ties prefer the
/// lower f_l + f_b, then the lower f_b.
std::optional<VfChoice> select_vf(const ComboTraces& traces, int core, double Q, double req_l, double req_b);

struct CoreOutcome {
  enum class Kind { occupied, infeasible, feasible };
  Kind kind = Kind::occupied;
  double temp = 0.0;
};

/// Soft labels from per-core outcomes. nullopt when no free core is feasible (row discarded).
std::optional<std::array<double, kNumCores>> compute_labels(const std::array<CoreOutcome, kNumCores>& outcomes,
                                                            double alpha = 1.0);

struct TrainingExample {
  std::string scenario;
  std::string aoi;
  FeatureVector features;
  std::array<double, kNumCores> labels{};
  /// Peak T of the selected trace per core: NaN when occupied, +inf when infeasible.
  std::array<double, kNumCores> core_temps{};
};

struct SweepPoint {
  double Q = 0.0;
  double req_l = 0.0;  // f~_{l\AoI}, GHz
  double req_b = 0.0;  // f~_{b\AoI}, GHz
};

/// Labels plus one example per free core taken as the AoI's source mapping. Empty when
/// the sweep point is fully infeasible.
std::vector<TrainingExample> examples_for_sweep_point(const ComboTraces& traces, const SweepPoint& point,
                                                      double alpha = 1.0);

struct ExtractConfig {
  int qos_points = 12;
  double qos_low = 0.1;  // fraction of the AoI's max grid IPS
  double qos_high = 0.9;
  double alpha = 1.0;
};

/// Q values of the sweep for a combination.
std::vector<double> qos_sweep(const ComboTraces& traces, const ExtractConfig& cfg);

/// Sweeps Q over the grid and f~ over the grid levels of each cluster hosting background
/// apps (the lowest level otherwise).
std::vector<TrainingExample> extract_training_data(const ComboTraces& traces, const ExtractConfig& cfg = {});

void write_training_csv(const std::filesystem::path& path, const std::vector<TrainingExample>& rows);
std::vector<TrainingExample> load_training_csv(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Trace collection on the simulator

struct BackgroundApp {
  std::string app;
  int core = 0;
};

struct Combo {
  std::string id;
  std::string aoi;
  std::vector<BackgroundApp> background;

  std::array<bool, kNumCores> occupied() const;
  std::string background_key() const;  // "app@core;..." sorted by core
};

struct ComboSpec {
  std::uint64_t seed = 1;
  std::vector<std::string> aois;        // AoI models
  std::vector<std::string> background;  // pool for background apps
  int backgrounds_per_aoi = 24;
  int max_background = 5;
};

/// Background sizes cycle through 0..max_background; apps and cores are drawn from the seed.
std::vector<Combo> generate_combos(const ComboSpec& spec);

void save_combos_csv(const std::filesystem::path& path, const std::vector<Combo>& combos);
std::vector<Combo> load_combos_csv(const std::filesystem::path& path);

struct TraceConfig {
  std::vector<int> levels_l{0, 2, 4, 6};  // reduced grid as level indices
  std::vector<int> levels_b{0, 2, 4, 6};
  double warmup_s = 10.0;
  double aoi_instructions = 1e10;
  double max_trace_s = 600.0;
  Cooling cooling = Cooling::fan;
  std::uint64_t seed = 1;  // execution order
};

/// Memo of simulated traces keyed by (background, AoI, core, f_l, f_b).
class TraceStore {
 public:
  std::optional<TracePoint> find(const std::string& key) const;
  void insert(const std::string& key, const TracePoint& p) { memo_.emplace(key, p); }
  std::size_t size() const { return memo_.size(); }
  long long simulations() const { return simulations_; }
  void count_simulation() { ++simulations_; }

  static std::string key(const Combo& combo, int core, double f_l, double f_b);

 private:
  std::map<std::string, TracePoint> memo_;
  long long simulations_ = 0;
};

/// Runs (or recalls) every (free core, grid point) trace of the combination.
ComboTraces collect_traces(const Combo& combo, const PlatformConfig& platform, const AppLibrary& library,
                           const TraceConfig& cfg, TraceStore& store);

/// Trace CSV columns: aoi, core_j, f_l, f_b, q_mips, l2d, peak_t.
void write_trace_csv(const std::filesystem::path& path, const ComboTraces& traces);
ComboTraces load_trace_csv(const std::filesystem::path& path, const std::string& scenario,
                           const std::array<bool, kNumCores>& occupied);

}  // namespace topil
