// policies.hpp - runtime resource managers: TOP-IL, multi-agent Q-learning, GTS + governors
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "topil/mlp.hpp"

namespace topil {

struct DecisionRecord {
  double time = 0.0;
  std::string event;  // arrive, place, migrate, dvfs, exit
  AppId app = -1;
  int from_core = -1;
  int to_core = -1;
  double f_l = 0.0;
  double f_b = 0.0;
  std::string reason;
};

void write_decision_log(const std::filesystem::path& path, const std::vector<DecisionRecord>& log);

/// What a policy sees and controls during a tick.
class Context {
 public:
  Context(Platform& platform, std::vector<AppInstance>& apps, std::vector<DecisionRecord>* log = nullptr)
      : platform_(platform), apps_(apps), log_(log) {}

  Platform& platform() { return platform_; }
  const Platform& platform() const { return platform_; }
  std::vector<AppInstance>& apps() { return apps_; }
  const std::vector<AppInstance>& apps() const { return apps_; }
  double time() const { return platform_.state().time; }

  /// Ids of mapped, unfinished apps in ascending order.
  std::vector<AppId> running() const;
  /// Running apps as counter observations, in the order of `running()`.
  SystemObservation observe() const;

  void migrate(AppId app, int to_core, std::string_view reason);
  void set_level(ClusterId cluster, int level, std::string_view reason);
  void record(std::string_view event, AppId app, int from, int to, std::string_view reason);
  int migrations() const { return migrations_; }

 private:
  Platform& platform_;
  std::vector<AppInstance>& apps_;
  std::vector<DecisionRecord>* log_;
  int migrations_ = 0;
};

class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string name() const = 0;
  virtual void on_arrival(Context&, AppId) {}
  virtual void on_exit(Context&, AppId) {}
  virtual void on_migration_tick(Context&) {}
  virtual void on_dvfs_tick(Context&) {}
};

/// First free LITTLE core, else first free big core, else -1.
int cold_start_core(const PlatformState& state);

// ---------------------------------------------------------------------------
// DVFS control loop shared by TOP-IL and RL

/// One level from `current` toward `target`.
int step_toward(int current, int target);

/// Target level per cluster: highest minimum-frequency level among apps on it, lowest when idle.
std::array<int, kNumClusters> dvfs_targets(const PlatformConfig& cfg, const SystemObservation& obs);

class DvfsLoop {
 public:
  explicit DvfsLoop(int skip_after_migration = 2) : skip_after_migration_(skip_after_migration) {}
  void notify_migration() { skip_ = skip_after_migration_; }
  void tick(Context& ctx);
  int pending_skips() const { return skip_; }

 private:
  int skip_after_migration_;
  int skip_ = 0;
};

// ---------------------------------------------------------------------------
// TOP-IL

class Rater {
 public:
  virtual ~Rater() = default;
  /// One row of 8 core ratings per feature vector.
  virtual Eigen::MatrixXd rate(const std::vector<FeatureVector>& rows) = 0;
};

class ModelRater : public Rater {
 public:
  explicit ModelRater(std::shared_ptr<const MlpModel> model) : model_(std::move(model)) {}
  Eigen::MatrixXd rate(const std::vector<FeatureVector>& rows) override { return model_->rate(rows); }

 private:
  std::shared_ptr<const MlpModel> model_;
};

struct MigrationChoice {
  std::size_t app = 0;  // row in the ratings matrix
  int core = -1;
  double improvement = 0.0;
};

/// Largest rating gain over free cores (plus each app's own core). Ties keep the first found in app,
/// then core, order. nullopt when the best improvement is <= min_gain.
std::optional<MigrationChoice> select_migration(const Eigen::MatrixXd& ratings, const std::vector<int>& current_core,
                                                const std::array<bool, kNumCores>& free, double min_gain = 0.0);

class TopIlPolicy : public Policy {
 public:
  /// Gains up to `min_gain` are ignored.
  explicit TopIlPolicy(std::shared_ptr<Rater> rater, double min_gain = kDefaultMinGain)
      : rater_(std::move(rater)), min_gain_(min_gain) {}
  static constexpr double kDefaultMinGain = 0.05;
  std::string name() const override { return "topil"; }
  void on_migration_tick(Context& ctx) override;
  void on_dvfs_tick(Context& ctx) override { dvfs_.tick(ctx); }

 private:
  std::shared_ptr<Rater> rater_;
  double min_gain_;
  DvfsLoop dvfs_;
};

// ---------------------------------------------------------------------------
// Multi-agent tabular Q-learning

struct RlConfig {
  double epsilon = 0.1;
  double gamma = 0.8;
  double alpha = 0.05;
  double reward_base = 80.0;
  double violation_penalty = -200.0;
  double l2d_high = 3.5e7;  // accesses/s separating the L2D bins
  double init = 0.0;

  void validate() const;
};

class QTable {
 public:
  static constexpr int kStates = 2 * 2 * kNumCores * 3 * 3;
  static constexpr int kActions = kNumCores;

  explicit QTable(double init = 0.0) { q_.fill(init); }
  double get(int s, int a) const { return q_.at(static_cast<std::size_t>(s * kActions + a)); }
  void set(int s, int a, double v) { q_.at(static_cast<std::size_t>(s * kActions + a)) = v; }
  double max(int s) const;
  int argmax(int s) const;  // lowest action among ties
  const std::array<double, kStates * kActions>& values() const { return q_; }
  double max_abs_diff(const QTable& o) const;

  void save(const std::filesystem::path& path) const;
  static QTable load(const std::filesystem::path& path);
  bool operator==(const QTable&) const = default;

 private:
  std::array<double, kStates * kActions> q_{};
};

/// Tercile of a level index among `levels` levels: floor(3 * level / levels).
int tercile(int level, int levels);
int rl_state(bool qos_met, bool l2d_high, int core, int tercile_l, int tercile_b);
/// One-step Q-learning target update; returns the new value.
double q_update(double q, double reward, double max_next, double alpha, double gamma);
double rl_reward(bool any_violation, double peak_t, const RlConfig& cfg);

class RlPolicy : public Policy {
 public:
  RlPolicy(std::shared_ptr<QTable> table, RlConfig cfg, std::uint64_t seed, bool learn = true);
  std::string name() const override { return "rl"; }
  void on_migration_tick(Context& ctx) override;
  void on_dvfs_tick(Context& ctx) override { dvfs_.tick(ctx); }
  const QTable& table() const { return *table_; }
  long long updates() const { return updates_; }

 private:
  int state_of(const Context& ctx, const AppInstance& app) const;

  std::shared_ptr<QTable> table_;
  RlConfig cfg_;
  std::mt19937_64 rng_;
  bool learn_;
  DvfsLoop dvfs_;
  struct Pending {
    AppId app;
    int state;
    int action;
  };
  std::optional<Pending> pending_;
  long long updates_ = 0;
};

// ---------------------------------------------------------------------------
// GTS with ondemand / powersave governors

struct GtsConfig {
  double down_threshold = 0.3;  // demand below: move to LITTLE
  double up_threshold = 0.7;    // demand above: move to big
  double ondemand_up = 0.8;
  double ondemand_down = 0.3;
};

enum class Governor { ondemand, powersave };

/// Demand of an app: utilization of its core over the last epoch.
std::optional<std::pair<AppId, int>> gts_decision(const Context& ctx, const GtsConfig& cfg);
/// ondemand next level from the cluster's utilization (max over its cores).
int ondemand_level(int current, int max_level, double utilization, const GtsConfig& cfg);

class GtsPolicy : public Policy {
 public:
  GtsPolicy(Governor governor, GtsConfig cfg = {}) : governor_(governor), cfg_(cfg) {}
  std::string name() const override { return governor_ == Governor::ondemand ? "gts-ondemand" : "gts-powersave"; }
  void on_migration_tick(Context& ctx) override;
  void on_dvfs_tick(Context& ctx) override;

 private:
  Governor governor_;
  GtsConfig cfg_;
};

}  // namespace topil
