// harness.hpp - experiment runner, policy sweeps, reports, overhead and model evaluation
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "topil/policies.hpp"

namespace topil {

struct RunConfig {
  double dvfs_period = 0.05;
  double migration_period = 0.5;
  double time_scale = kDefaultTimeScale;
  double max_sim_s = 4 * 3600.0;
  double wall_budget_s = 900.0;  // guard against non-terminating workloads
  bool keep_log = false;
  bool keep_trace = false;
  double trace_period = 0.05;
};

struct AppRecord {
  std::string app;
  double qos_target = 0.0;
  double arrival = 0.0;
  double start = 0.0;
  double finish = 0.0;
  double mean_ips = 0.0;
  bool violated = false;
  int migrations = 0;
};

struct ExperimentResult {
  std::string policy;
  std::string cooling;
  std::uint64_t seed = 0;
  double arrival_rate = 0.0;
  double duration = 0.0;
  double avg_temp = 0.0;   // time-weighted peak core temperature
  double peak_temp = 0.0;
  int violations = 0;      // apps whose mean IPS fell below Q
  double violation_severity = 0.0;  // mean relative shortfall of the violating apps
  double window_violation_rate = 0.0;  // share of measured windows below Q
  int migrations = 0;
  int dtm_epochs = 0;      // DVFS epochs with DTM active on some cluster
  std::array<std::vector<double>, kNumClusters> cpu_time;  // seconds per (cluster, level)
  std::vector<AppRecord> apps;
  std::vector<DecisionRecord> log;
  std::vector<TemperatureSample> trace;

  double total_cpu_time() const;
};

/// Drives the simulator until every app of the scenario has finished. Tick order at each
/// DVFS boundary: close measurement windows, migration tick (every migration period), DVFS
/// tick, DTM. Arrivals are placed on the cold-start core, queueing while all cores are busy.
ExperimentResult run_experiment(const std::vector<ScenarioApp>& scenario, Policy& policy, const PlatformConfig& platform,
                                Cooling cooling, const AppLibrary& library, const RunConfig& cfg = {});

void write_result_json(const std::filesystem::path& path, const ExperimentResult& r);
void write_app_records_csv(const std::filesystem::path& path, const ExperimentResult& r);

// ---------------------------------------------------------------------------
// Policy construction

struct PolicyAssets {
  std::vector<std::shared_ptr<const MlpModel>> models;  // one per repetition
  std::vector<QTable> tables;                           // one per repetition
  RlConfig rl;
  GtsConfig gts;
};

std::vector<std::string> policy_names();
/// `rep` selects model / table / exploration seed.
std::unique_ptr<Policy> make_policy(const std::string& name, const PolicyAssets& assets, int rep);

// ---------------------------------------------------------------------------
// Sweeps

struct SweepConfig {
  std::vector<std::string> policies = policy_names();
  std::vector<double> rates{0.05, 0.08, 0.11, 0.15};
  std::vector<Cooling> coolings{Cooling::fan, Cooling::no_fan};
  int count = 20;
  int repetitions = 3;
  std::uint64_t scenario_seed = 100;
  bool vary_scenario = true;  // repetition r uses scenario seed + r
  std::vector<std::string> pool = all_app_names();
  int jobs = 1;  // worker threads; results keep the serial order
};

std::vector<ScenarioApp> sweep_scenario(const SweepConfig& sweep, const AppLibrary& library, double rate, int rep);

std::vector<ExperimentResult> run_sweep(const SweepConfig& sweep, const PolicyAssets& assets,
                                        const PlatformConfig& platform, const AppLibrary& library,
                                        const RunConfig& cfg = {});

struct Stat {
  double mean = 0.0;
  double std = 0.0;
};
Stat mean_std(const std::vector<double>& v);

struct CellSummary {
  std::string policy;
  std::string cooling;
  double rate = 0.0;
  int runs = 0;
  Stat avg_temp;
  Stat peak_temp;
  Stat violations;
  Stat migrations;
  std::array<std::vector<double>, kNumClusters> cpu_time;  // mean seconds
};

std::vector<CellSummary> summarize(const std::vector<ExperimentResult>& results);
const CellSummary& find_cell(const std::vector<CellSummary>& cells, const std::string& policy,
                             const std::string& cooling, double rate);

void write_results_csv(const std::filesystem::path& path, const std::vector<ExperimentResult>& results);
void write_summary_csv(const std::filesystem::path& path, const std::vector<CellSummary>& cells);
/// Grouped bar chart of one metric ("avg_temp" or "violations") per rate and policy.
void write_bar_svg(const std::filesystem::path& path, const std::vector<CellSummary>& cells, const std::string& metric,
                   const std::string& cooling);
/// Stacked CPU-time share per (cluster, level) for each policy, summed over rates.
void write_histogram_svg(const std::filesystem::path& path, const std::vector<CellSummary>& cells,
                         const std::string& cooling, const PlatformConfig& platform);

struct OrderingCheck {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct OrderingRules {
  double violation_ratio = 0.25;  // TOP-IL <= ratio * powersave counts as much fewer
  double min_gap = 3.0;           // degC TOP-IL below ondemand, mean over rates per cooling
  double top_bin_share = 0.5;     // ondemand CPU time at (big, max)
  double min_level_share = 0.99;  // powersave CPU time at the lowest levels
};

std::vector<OrderingCheck> check_orderings(const std::vector<CellSummary>& cells, const PlatformConfig& platform,
                                           const OrderingRules& rules = {});

// ---------------------------------------------------------------------------
// Migration overhead

struct OverheadConfig {
  double period = 0.5;        // s between migrations
  double first_switch = 0.5;  // s until the first migration
  int little_core = 0;
  int big_core = 4;
  bool start_big = true;
  double instructions = 1e10;
};

struct OverheadResult {
  std::string app;
  double t_big = 0.0;
  double t_little = 0.0;
  double t_migrate = 0.0;
  int migrations = 0;
  double m = 0.0;
};

/// m = ((1/t_big + 1/t_LITTLE) / 2) / (1/t_migrate) - 1 at maximum frequencies.
double overhead_metric(double t_big, double t_little, double t_migrate);
OverheadResult migration_overhead(const std::shared_ptr<const AppModel>& app, const PlatformConfig& platform,
                                  const OverheadConfig& cfg);
/// Three repetitions with staggered first migration; returns each.
std::vector<OverheadResult> migration_overhead_reps(const std::shared_ptr<const AppModel>& app,
                                                    const PlatformConfig& platform, OverheadConfig cfg);

// ---------------------------------------------------------------------------
// Model evaluation

struct EvalReport {
  int decisions = 0;
  int within_1c = 0;
  int infeasible_choices = 0;  // counted as misses
  double accuracy = 0.0;
  double mean_excess = 0.0;    // over feasible choices, degC
};

using RatingFn = std::function<Eigen::MatrixXd(const std::vector<FeatureVector>&)>;

/// Each example is one decision: the rated argmax over its free cores against the
/// coolest feasible core.
EvalReport evaluate_decisions(const std::vector<TrainingExample>& examples, const RatingFn& rate,
                              double tolerance = 1.0);

// ---------------------------------------------------------------------------
// Data generation and training pipeline

struct PipelineConfig {
  ComboSpec combos;
  TraceConfig trace;
  ExtractConfig extract;
  std::vector<std::string> held_out = held_out_aoi_names();

  static PipelineConfig defaults(std::uint64_t seed = 1);
};

struct PipelineData {
  std::vector<Combo> combos;
  std::vector<ComboTraces> traces;
  std::vector<TrainingExample> train;  // AoIs not held out
  std::vector<TrainingExample> test;   // held-out AoIs
  long long simulations = 0;
};

PipelineData generate_training_data(const PipelineConfig& cfg, const PlatformConfig& platform,
                                    const AppLibrary& library);

/// Normalizer fitted on `examples`, He init and Adam with `cfg`.
TrainResult train_model(const std::vector<TrainingExample>& examples, const AppLibrary& library,
                        const PlatformConfig& platform, const ModelSpec& spec, const TrainConfig& cfg);

// ---------------------------------------------------------------------------
// RL pretraining

struct PretrainConfig {
  double hours = 3.0;  // simulated
  double arrival_rate = 0.1;
  int apps_per_scenario = 20;
  std::uint64_t seed = 0;
  std::vector<std::string> pool = training_app_names();
  Cooling cooling = Cooling::fan;
};

struct PretrainResult {
  QTable table;
  std::vector<double> deltas;  // L-inf table change per scenario window
  int scenarios = 0;
  double simulated_s = 0.0;
};

PretrainResult pretrain_rl(const PretrainConfig& cfg, const RlConfig& rl, const PlatformConfig& platform,
                           const AppLibrary& library);

}  // namespace topil
