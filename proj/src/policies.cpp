#include "topil/policies.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "topil/csv.hpp"

namespace topil {

void write_decision_log(const std::filesystem::path& path, const std::vector<DecisionRecord>& log) {
  csv::Writer w(path, {"time", "event", "app", "from_core", "to_core", "f_l", "f_b", "reason"});
  for (const auto& r : log) {
    w.cell(r.time).cell(r.event).cell(r.app).cell(r.from_core).cell(r.to_core).cell(r.f_l).cell(r.f_b).cell(r.reason);
    w.end_row();
  }
}

std::vector<AppId> Context::running() const {
  std::vector<AppId> ids;
  for (const auto& a : apps_)
    if (a.running() && !a.finished()) ids.push_back(a.id);
  return ids;
}

SystemObservation Context::observe() const {
  SystemObservation obs;
  obs.level = platform_.state().level;
  obs.utilization = platform_.state().utilization;
  for (AppId id : running()) {
    const auto& a = apps_[static_cast<std::size_t>(id)];
    obs.apps.push_back({a.core, a.measured_ips, a.measured_l2d, a.qos_target});
  }
  return obs;
}

void Context::record(std::string_view event, AppId app, int from, int to, std::string_view reason) {
  if (!log_) return;
  log_->push_back({time(), std::string(event), app, from, to, platform_.freq(ClusterId::little),
                   platform_.freq(ClusterId::big), std::string(reason)});
}

void Context::migrate(AppId app, int to_core, std::string_view reason) {
  auto& a = apps_.at(static_cast<std::size_t>(app));
  const int from = a.core;
  platform_.migrate(a, to_core);
  ++migrations_;
  record("migrate", app, from, to_core, reason);
}

void Context::set_level(ClusterId cluster, int level, std::string_view reason) {
  const auto c = static_cast<std::size_t>(index_of(cluster));
  if (platform_.state().requested_level[c] == level) return;
  platform_.set_cluster_level(cluster, level);
  record("dvfs", -1, -1, -1, reason);
}

int cold_start_core(const PlatformState& state) {
  for (int c = 0; c < kNumCores; ++c)
    if (state.core_free(c)) return c;
  return -1;
}

// ---------------------------------------------------------------------------

int step_toward(int current, int target) {
  if (target > current) return current + 1;
  if (target < current) return current - 1;
  return current;
}

std::array<int, kNumClusters> dvfs_targets(const PlatformConfig& cfg, const SystemObservation& obs) {
  std::array<int, kNumClusters> target{};
  for (int c = 0; c < kNumClusters; ++c) {
    const auto cl = static_cast<ClusterId>(c);
    const auto& spec = cfg.cluster(cl);
    const double f_cur = spec.freq(obs.level[static_cast<std::size_t>(c)]);
    std::vector<int> levels;
    for (const auto& a : obs.apps)
      if (a.core >= 0 && cluster_of(a.core) == cl) levels.push_back(estimate_min_freq(spec, a.q, f_cur, a.Q).level);
    target[static_cast<std::size_t>(c)] = required_level_without_aoi(levels);
  }
  return target;
}

void DvfsLoop::tick(Context& ctx) {
  if (skip_ > 0) {
    --skip_;
    return;
  }
  const auto obs = ctx.observe();
  const auto target = dvfs_targets(ctx.platform().config(), obs);
  for (int c = 0; c < kNumClusters; ++c) {
    const auto cl = static_cast<ClusterId>(c);
    const bool idle = std::none_of(obs.apps.begin(), obs.apps.end(),
                                   [&](const AppObservation& a) { return cluster_of(a.core) == cl; });
    const int cur = obs.level[static_cast<std::size_t>(c)];
    const int next = idle ? 0 : step_toward(cur, target[static_cast<std::size_t>(c)]);
    ctx.set_level(cl, next, idle ? "idle" : "min-freq");
  }
}

// ---------------------------------------------------------------------------

std::optional<MigrationChoice> select_migration(const Eigen::MatrixXd& ratings, const std::vector<int>& current_core,
                                                const std::array<bool, kNumCores>& free, double min_gain) {
  if (ratings.rows() != static_cast<Eigen::Index>(current_core.size()) || ratings.cols() != kNumCores)
    throw std::invalid_argument("select_migration: ratings shape mismatch");
  std::optional<MigrationChoice> best;
  for (std::size_t k = 0; k < current_core.size(); ++k) {
    const auto r = static_cast<Eigen::Index>(k);
    const double own = ratings(r, current_core[k]);
    for (int c = 0; c < kNumCores; ++c) {
      if (!free[static_cast<std::size_t>(c)]) continue;
      const double gain = ratings(r, c) - own;
      if (!best || gain > best->improvement) best = MigrationChoice{k, c, gain};
    }
  }
  if (!best || !(best->improvement > min_gain)) return std::nullopt;
  return best;
}

void TopIlPolicy::on_migration_tick(Context& ctx) {
  const auto ids = ctx.running();
  const auto obs = ctx.observe();
  std::vector<FeatureVector> rows;
  std::vector<int> cores;
  std::vector<AppId> aoi_ids;
  for (std::size_t k = 0; k < ids.size(); ++k) {
    if (ctx.apps()[static_cast<std::size_t>(ids[k])].measured_windows == 0) continue;
    rows.push_back(extract_features(ctx.platform().config(), obs, k));
    cores.push_back(obs.apps[k].core);
    aoi_ids.push_back(ids[k]);
  }
  if (rows.empty()) return;
  Eigen::MatrixXd ratings;
  try {
    ratings = rater_->rate(rows);
  } catch (const std::exception& e) {
    ctx.record("skip", -1, -1, -1, std::string("inference failed: ") + e.what());
    return;
  }
  std::array<bool, kNumCores> free{};
  for (int c = 0; c < kNumCores; ++c) free[static_cast<std::size_t>(c)] = ctx.platform().state().core_free(c);
  if (auto choice = select_migration(ratings, cores, free, min_gain_)) {
    ctx.migrate(aoi_ids[choice->app], choice->core, "rating-gain");
    dvfs_.notify_migration();
  }
}

// ---------------------------------------------------------------------------

void RlConfig::validate() const {
  if (epsilon < 0.0 || epsilon > 1.0) throw std::invalid_argument("rl config: epsilon outside [0,1]");
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("rl config: gamma outside (0,1)");
  if (!(alpha > 0.0)) throw std::invalid_argument("rl config: alpha must be positive");
}

double QTable::max(int s) const { return get(s, argmax(s)); }

int QTable::argmax(int s) const {
  int best = 0;
  for (int a = 1; a < kActions; ++a)
    if (get(s, a) > get(s, best)) best = a;
  return best;
}

double QTable::max_abs_diff(const QTable& o) const {
  double d = 0.0;
  for (std::size_t i = 0; i < q_.size(); ++i) d = std::max(d, std::abs(q_[i] - o.q_[i]));
  return d;
}

namespace {
constexpr char kQMagic[8] = {'T', 'O', 'P', 'I', 'L', 'Q', 'T', 'B'};
}

void QTable::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write Q-table " + path.string());
  out.write(kQMagic, sizeof kQMagic);
  const std::uint32_t dims[2] = {kStates, kActions};
  out.write(reinterpret_cast<const char*>(dims), sizeof dims);
  out.write(reinterpret_cast<const char*>(q_.data()), static_cast<std::streamsize>(sizeof(double) * q_.size()));
  if (!out) throw std::runtime_error("failed writing Q-table " + path.string());
}

QTable QTable::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open Q-table " + path.string());
  char magic[sizeof kQMagic];
  std::uint32_t dims[2];
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(dims), sizeof dims);
  if (!in || std::memcmp(magic, kQMagic, sizeof kQMagic) != 0) throw std::runtime_error("not a Q-table: " + path.string());
  if (dims[0] != kStates || dims[1] != kActions) throw std::runtime_error("Q-table shape mismatch in " + path.string());
  QTable t;
  in.read(reinterpret_cast<char*>(t.q_.data()), static_cast<std::streamsize>(sizeof(double) * t.q_.size()));
  if (!in) throw std::runtime_error("Q-table truncated: " + path.string());
  if (in.peek() != std::char_traits<char>::eof()) throw std::runtime_error("trailing bytes in Q-table " + path.string());
  return t;
}

int tercile(int level, int levels) { return std::clamp(3 * level / levels, 0, 2); }

int rl_state(bool qos_met, bool l2d_high, int core, int tercile_l, int tercile_b) {
  return ((((qos_met ? 1 : 0) * 2 + (l2d_high ? 1 : 0)) * kNumCores + core) * 3 + tercile_l) * 3 + tercile_b;
}

double q_update(double q, double reward, double max_next, double alpha, double gamma) {
  return q + alpha * (reward + gamma * max_next - q);
}

double rl_reward(bool any_violation, double peak_t, const RlConfig& cfg) {
  return any_violation ? cfg.violation_penalty : cfg.reward_base - peak_t;
}

RlPolicy::RlPolicy(std::shared_ptr<QTable> table, RlConfig cfg, std::uint64_t seed, bool learn)
    : table_(std::move(table)), cfg_(cfg), rng_(seed), learn_(learn) {
  cfg_.validate();
  if (!table_) throw std::invalid_argument("RlPolicy: null Q-table");
}

int RlPolicy::state_of(const Context& ctx, const AppInstance& a) const {
  const auto& cfg = ctx.platform().config();
  const auto& st = ctx.platform().state();
  return rl_state(a.measured_ips >= a.qos_target, a.measured_l2d >= cfg_.l2d_high, a.core,
                  tercile(st.level[0], cfg.clusters[0].levels()), tercile(st.level[1], cfg.clusters[1].levels()));
}

void RlPolicy::on_migration_tick(Context& ctx) {
  const auto ids = ctx.running();
  if (pending_ && learn_) {
    bool violation = false;
    for (AppId id : ids) {
      const auto& a = ctx.apps()[static_cast<std::size_t>(id)];
      if (a.measured_windows > 0 && a.measured_ips < a.qos_target) violation = true;
    }
    const double r = rl_reward(violation, ctx.platform().peak_temperature(), cfg_);
    const auto& agent = ctx.apps()[static_cast<std::size_t>(pending_->app)];
    const double next = agent.running() && !agent.finished() ? table_->max(state_of(ctx, agent)) : 0.0;
    table_->set(pending_->state, pending_->action,
                q_update(table_->get(pending_->state, pending_->action), r, next, cfg_.alpha, cfg_.gamma));
    ++updates_;
  }
  pending_.reset();

  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<int> any_core(0, kNumCores - 1);
  std::optional<Pending> best;
  double best_q = 0.0;
  for (AppId id : ids) {
    const auto& a = ctx.apps()[static_cast<std::size_t>(id)];
    if (a.measured_windows == 0) continue;
    const int s = state_of(ctx, a);
    const int act = coin(rng_) < cfg_.epsilon ? any_core(rng_) : table_->argmax(s);
    const double q = table_->get(s, act);
    if (!best || q > best_q) {
      best = Pending{id, s, act};
      best_q = q;
    }
  }
  if (!best) return;
  const auto& a = ctx.apps()[static_cast<std::size_t>(best->app)];
  if (best->action != a.core && ctx.platform().state().core_free(best->action)) {
    ctx.migrate(best->app, best->action, "q-learning");
    dvfs_.notify_migration();
  }
  pending_ = best;
}

// ---------------------------------------------------------------------------

std::optional<std::pair<AppId, int>> gts_decision(const Context& ctx, const GtsConfig& cfg) {
  const auto& st = ctx.platform().state();
  auto first_free = [&](ClusterId cl) {
    for (int c = 0; c < kNumCores; ++c)
      if (cluster_of(c) == cl && st.core_free(c)) return c;
    return -1;
  };
  for (AppId id : ctx.running()) {
    const auto& a = ctx.apps()[static_cast<std::size_t>(id)];
    if (a.measured_windows == 0) continue;
    const double demand = st.utilization[static_cast<std::size_t>(a.core)];
    if (cluster_of(a.core) == ClusterId::little && demand > cfg.up_threshold) {
      if (int c = first_free(ClusterId::big); c >= 0) return std::pair{id, c};
    } else if (cluster_of(a.core) == ClusterId::big && demand < cfg.down_threshold) {
      if (int c = first_free(ClusterId::little); c >= 0) return std::pair{id, c};
    }
  }
  return std::nullopt;
}

int ondemand_level(int current, int max_level, double utilization, const GtsConfig& cfg) {
  if (utilization > cfg.ondemand_up) return max_level;
  if (utilization < cfg.ondemand_down) return std::max(0, current - 1);
  return current;
}

void GtsPolicy::on_migration_tick(Context& ctx) {
  if (auto d = gts_decision(ctx, cfg_)) ctx.migrate(d->first, d->second, "gts");
}

void GtsPolicy::on_dvfs_tick(Context& ctx) {
  const auto& st = ctx.platform().state();
  for (int c = 0; c < kNumClusters; ++c) {
    const auto cl = static_cast<ClusterId>(c);
    if (governor_ == Governor::powersave) {
      ctx.set_level(cl, 0, "powersave");
      continue;
    }
    double util = 0.0;
    for (int core = 0; core < kNumCores; ++core)
      if (cluster_of(core) == cl) util = std::max(util, st.utilization[static_cast<std::size_t>(core)]);
    const int max_level = ctx.platform().config().clusters[static_cast<std::size_t>(c)].max_level();
    ctx.set_level(cl, ondemand_level(st.level[static_cast<std::size_t>(c)], max_level, util, cfg_), "ondemand");
  }
}

}  // namespace topil
