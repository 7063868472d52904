#include "topil/platform.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>

#include <json.hpp>

#include "topil/csv.hpp"

namespace topil {

namespace {

constexpr std::array<std::pair<int, int>, 8> kLateralPairs{{
    {0, 1}, {2, 3}, {0, 2}, {1, 3},  // LITTLE 2x2
    {4, 5}, {6, 7}, {4, 6}, {5, 7},  // big 2x2
}};

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("platform config: " + what);
}

}  // namespace

std::span<const std::pair<int, int>> lateral_pairs() { return kLateralPairs; }

std::vector<double> affine_voltages(std::span<const double> freqs, double v0, double slope) {
  std::vector<double> v;
  v.reserve(freqs.size());
  for (double f : freqs) v.push_back(v0 + slope * f);
  return v;
}

void ClusterSpec::validate() const {
  const std::string name(to_string(id));
  require(core_ids.size() == static_cast<std::size_t>(kCoresPerCluster), name + ": needs 4 cores");
  require(freq_levels.size() >= 3, name + ": needs at least 3 frequency levels");
  require(voltages.size() == freq_levels.size(), name + ": one voltage per frequency level");
  for (std::size_t i = 0; i < freq_levels.size(); ++i) {
    require(freq_levels[i] > 0.0, name + ": frequencies must be positive");
    require(voltages[i] > 0.0, name + ": voltages must be positive");
    if (i > 0) {
      require(freq_levels[i] > freq_levels[i - 1], name + ": frequencies must be strictly ascending");
      require(voltages[i] >= voltages[i - 1], name + ": voltage must not decrease with frequency");
    }
  }
}

std::optional<int> ClusterSpec::level_of(double f_ghz) const {
  for (std::size_t i = 0; i < freq_levels.size(); ++i)
    if (std::abs(freq_levels[i] - f_ghz) <= 1e-9) return static_cast<int>(i);
  return std::nullopt;
}

void PowerModelParams::validate() const {
  for (const auto& c : cluster) {
    require(c.c_dyn >= 0 && c.p_leak0 >= 0 && c.k_leak >= 0 && c.uncore >= 0, "power coefficients must be >= 0");
    require(c.idle_activity >= 0 && c.idle_activity <= 1, "idle activity must be in [0,1]");
  }
  require(cluster[1].c_dyn > cluster[0].c_dyn, "big c_dyn must exceed LITTLE c_dyn");
}

void ThermalModelParams::validate() const {
  require(c_core > 0 && c_package > 0, "heat capacities must be positive");
  require(g_lateral > 0 && g_core_package > 0 && g_ambient_fan > 0 && g_ambient_nofan > 0,
          "conductances must be positive");
  require(g_ambient_fan > g_ambient_nofan, "fan conductance must exceed no-fan conductance");
  require(dtm_release < dtm_threshold, "dtm_release must be below dtm_threshold");
}

PlatformConfig PlatformConfig::defaults() {
  PlatformConfig c;
  const std::vector<double> little{0.5, 0.9, 1.2, 1.4, 1.6, 1.8, 1.84};
  const std::vector<double> big{0.7, 1.0, 1.2, 1.5, 1.8, 2.1, 2.36};
  c.clusters[0] = ClusterSpec{ClusterId::little, {0, 1, 2, 3}, little, affine_voltages(little, 0.60, 0.25)};
  c.clusters[1] = ClusterSpec{ClusterId::big, {4, 5, 6, 7}, big, affine_voltages(big, 0.55, 0.25)};
  c.power.cluster[0] = ClusterPower{0.25, 0.01, 0.02, 0.1, 0.03};
  c.power.cluster[1] = ClusterPower{0.55, 0.05, 0.02, 0.1, 0.08};
  return c;
}

double PlatformConfig::max_stable_dt(Cooling cooling) const {
  const auto g = conductance_matrix(thermal, cooling);
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < kNumThermalNodes; ++i) {
    const double cap = i == kPackageNode ? thermal.c_package : thermal.c_core;
    best = std::min(best, cap / g[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)]);
  }
  return best;
}

void PlatformConfig::validate() const {
  require(clusters[0].id == ClusterId::little && clusters[1].id == ClusterId::big, "cluster order must be LITTLE, big");
  std::array<bool, kNumCores> seen{};
  for (const auto& cl : clusters) {
    cl.validate();
    for (int core : cl.core_ids) {
      require(core >= 0 && core < kNumCores, "core index out of range");
      require(cluster_of(core) == cl.id, "core " + std::to_string(core) + " placed in the wrong cluster");
      require(!seen[static_cast<std::size_t>(core)], "core index sets overlap");
      seen[static_cast<std::size_t>(core)] = true;
    }
  }
  power.validate();
  thermal.validate();
  require(migration.stall >= 0 && migration.slowdown >= 0 && migration.slowdown_factor > 0 &&
              migration.slowdown_factor <= 1,
          "bad migration penalty");
  require(dt > 0 && dt <= 0.010, "dt must be in (0, 10 ms]");
  const double limit = std::min(max_stable_dt(Cooling::fan), max_stable_dt(Cooling::no_fan));
  require(dt < limit, "dt " + std::to_string(dt) + " s is not stable for explicit Euler (limit " +
                          std::to_string(limit) + " s)");
}

ConductanceMatrix conductance_matrix(const ThermalModelParams& p, Cooling cooling) {
  ConductanceMatrix g{};
  auto link = [&g](int a, int b, double v) {
    const auto ua = static_cast<std::size_t>(a), ub = static_cast<std::size_t>(b);
    g[ua][ua] += v;
    g[ub][ub] += v;
    g[ua][ub] -= v;
    g[ub][ua] -= v;
  };
  for (auto [a, b] : kLateralPairs) link(a, b, p.g_lateral);
  for (int c = 0; c < kNumCores; ++c) link(c, kPackageNode, p.g_core_package);
  g[kPackageNode][kPackageNode] += p.g_ambient(cooling);
  return g;
}

// ---------------------------------------------------------------------------

Platform::Platform(PlatformConfig config, Cooling cooling)
    : config_(std::move(config)), cooling_(cooling), g_(conductance_matrix(config_.thermal, cooling)) {
  config_.validate();
  state_.temperatures.fill(config_.thermal.ambient);
  state_.mapping.fill(-1);
  for (int c = 0; c < kNumClusters; ++c) {
    state_.level[static_cast<std::size_t>(c)] = 0;
    state_.requested_level[static_cast<std::size_t>(c)] = 0;
    state_.dtm_cap[static_cast<std::size_t>(c)] = config_.clusters[static_cast<std::size_t>(c)].max_level();
  }
  for (int i = 0; i < kNumThermalNodes; ++i)
    inv_capacity_[static_cast<std::size_t>(i)] =
        1.0 / (i == kPackageNode ? config_.thermal.c_package : config_.thermal.c_core);
}

void Platform::update_effective_level(int cluster) {
  const auto c = static_cast<std::size_t>(cluster);
  state_.level[c] = std::min(state_.requested_level[c], state_.dtm_cap[c]);
}

void Platform::set_cluster_level(ClusterId cluster, int level) {
  const auto& spec = config_.cluster(cluster);
  if (level < 0 || level > spec.max_level())
    throw InvalidFrequencyError("level " + std::to_string(level) + " outside the " + std::string(to_string(cluster)) +
                                " table");
  state_.requested_level[static_cast<std::size_t>(index_of(cluster))] = level;
  update_effective_level(index_of(cluster));
}

void Platform::set_cluster_freq(ClusterId cluster, double f_ghz) {
  const auto level = config_.cluster(cluster).level_of(f_ghz);
  if (!level)
    throw InvalidFrequencyError(std::to_string(f_ghz) + " GHz is not a " + std::string(to_string(cluster)) +
                                " frequency level");
  set_cluster_level(cluster, *level);
}

double Platform::peak_temperature() const {
  return *std::max_element(state_.temperatures.begin(), state_.temperatures.begin() + kNumCores);
}

void Platform::apply_dtm() {
  const auto hottest = std::max_element(state_.temperatures.begin(), state_.temperatures.begin() + kNumCores);
  const double peak = *hottest;
  if (peak > config_.thermal.dtm_threshold) {
    const int core = static_cast<int>(hottest - state_.temperatures.begin());
    const auto c = static_cast<std::size_t>(index_of(cluster_of(core)));
    state_.dtm_active[c] = true;
    state_.dtm_cap[c] = std::max(0, state_.level[c] - 1);
    update_effective_level(static_cast<int>(c));
  } else if (peak < config_.thermal.dtm_release) {
    for (int c = 0; c < kNumClusters; ++c) {
      const auto uc = static_cast<std::size_t>(c);
      state_.dtm_active[uc] = false;
      state_.dtm_cap[uc] = config_.clusters[uc].max_level();
      update_effective_level(c);
    }
  }
}

void Platform::assign(AppInstance& app, int core) {
  if (core < 0 || core >= kNumCores) throw std::out_of_range("assign: bad core index");
  if (!state_.core_free(core)) throw std::logic_error("assign: core " + std::to_string(core) + " is occupied");
  if (app.running()) throw std::logic_error("assign: app already running");
  state_.mapping[static_cast<std::size_t>(core)] = app.id;
  app.core = core;
  if (app.start_time < 0.0) app.start_time = state_.time;
}

void Platform::release(AppInstance& app) {
  if (!app.running()) return;
  state_.mapping[static_cast<std::size_t>(app.core)] = -1;
  app.core = -1;
}

void Platform::migrate(AppInstance& app, int to_core) {
  if (!app.running()) throw std::logic_error("migrate: app is not running");
  if (to_core < 0 || to_core >= kNumCores) throw std::out_of_range("migrate: bad core index");
  if (to_core == app.core) return;
  if (!state_.core_free(to_core)) throw std::logic_error("migrate: core " + std::to_string(to_core) + " is occupied");
  state_.mapping[static_cast<std::size_t>(app.core)] = -1;
  state_.mapping[static_cast<std::size_t>(to_core)] = app.id;
  app.core = to_core;
  app.stall_remaining = config_.migration.stall;
  app.slowdown_remaining = config_.migration.slowdown;
  ++app.migrations;
}

double Platform::advance_app(AppInstance& app, int core, double dt) {
  const ClusterId cluster = cluster_of(core);
  const double f = freq(cluster);
  const auto& model = *app.model;
  const auto& pw = config_.power.cluster[static_cast<std::size_t>(index_of(cluster))];

  double remaining = dt;
  double activity_time = 0.0;  // integral of activity over the step
  while (remaining > 0.0 && !app.finished()) {
    if (app.stall_remaining > 0.0) {
      const double s = std::min(app.stall_remaining, remaining);
      app.stall_remaining -= s;
      remaining -= s;
      activity_time += s * pw.idle_activity;
      continue;
    }
    const bool slowed = app.slowdown_remaining > 0.0;
    const double seg = slowed ? std::min(remaining, app.slowdown_remaining) : remaining;
    const std::size_t ph = app.phase();
    const auto& phase = model.phases[ph];
    const double rate = ips(phase, cluster, f) * (slowed ? config_.migration.slowdown_factor : 1.0);

    // Instructions until the next phase boundary or completion.
    double limit = std::numeric_limits<double>::infinity();
    if (model.phases.size() > 1) {
      double end_frac = 0.0;
      for (std::size_t i = 0; i <= ph; ++i) end_frac += model.phases[i].fraction;
      const double cycle = app.endless ? std::floor(app.executed / app.total_instructions) : 0.0;
      limit = (cycle + end_frac) * app.total_instructions - app.executed;
    }
    if (!app.endless) limit = std::min(limit, app.total_instructions - app.executed);
    limit = std::max(limit, 1.0);  // always make progress across boundaries

    double instr = rate * seg;
    double used = seg;
    if (instr >= limit) {
      instr = limit;
      used = limit / rate;
    }
    app.executed += instr;
    app.window_instructions += instr;
    app.window_l2d += instr * phase.l2d_rate * 1e-9;
    activity_time += used * phase.activity;
    if (slowed) app.slowdown_remaining = std::max(0.0, app.slowdown_remaining - used);
    remaining -= used;
    if (!app.endless && app.executed >= app.total_instructions) {
      app.executed = app.total_instructions;
      app.finish_time = state_.time + (dt - remaining);
    }
  }
  const double busy = dt - std::max(remaining, 0.0);
  app.busy_time += busy;
  app.window_time += busy;
  busy_time_[static_cast<std::size_t>(core)] += busy;
  activity_[static_cast<std::size_t>(core)] = activity_time;
  return busy;
}

void Platform::step(std::span<AppInstance> apps) {
  const double dt = config_.dt;
  const double amb = config_.thermal.ambient;
  power_.fill(0.0);
  std::array<bool, kNumClusters> cluster_busy{};

  for (int core = 0; core < kNumCores; ++core) {
    const AppId id = state_.mapping[static_cast<std::size_t>(core)];
    if (id < 0) continue;
    auto& app = apps[static_cast<std::size_t>(id)];
    const double busy = advance_app(app, core, dt);
    if (busy <= 0.0) continue;
    const ClusterId cl = cluster_of(core);
    const auto& spec = config_.cluster(cl);
    const auto& pw = config_.power.cluster[static_cast<std::size_t>(index_of(cl))];
    const int lv = level(cl);
    const double f = spec.freq(lv), v = spec.voltage(lv);
    const double dyn = pw.c_dyn * f * v * v * activity_[static_cast<std::size_t>(core)] / dt;
    const double leak_scale = std::max(0.0, 1.0 + pw.k_leak * (state_.temperatures[static_cast<std::size_t>(core)] - amb));
    const double leak = pw.p_leak0 * leak_scale * busy / dt;
    power_[static_cast<std::size_t>(core)] = dyn + leak;
    cluster_busy[static_cast<std::size_t>(index_of(cl))] = true;
  }
  for (int c = 0; c < kNumClusters; ++c)
    if (cluster_busy[static_cast<std::size_t>(c)]) power_[kPackageNode] += config_.power.cluster[static_cast<std::size_t>(c)].uncore;

  std::array<double, kNumThermalNodes> rise{};
  for (std::size_t i = 0; i < kNumThermalNodes; ++i) rise[i] = state_.temperatures[i] - amb;
  std::array<double, kNumThermalNodes> next{};
  for (std::size_t i = 0; i < kNumThermalNodes; ++i) {
    double flow = power_[i];
    for (std::size_t j = 0; j < kNumThermalNodes; ++j) flow -= g_[i][j] * rise[j];
    next[i] = state_.temperatures[i] + dt * inv_capacity_[i] * flow;
  }
  state_.temperatures = next;

  // Release cores of apps that completed during this step.
  for (int core = 0; core < kNumCores; ++core) {
    const AppId id = state_.mapping[static_cast<std::size_t>(core)];
    if (id >= 0 && apps[static_cast<std::size_t>(id)].finished()) release(apps[static_cast<std::size_t>(id)]);
  }
  ++steps_;
  state_.time = static_cast<double>(steps_) * dt;
}

void Platform::close_epoch() {
  const double span = state_.time - epoch_start_;
  for (std::size_t c = 0; c < kNumCores; ++c) {
    state_.utilization[c] = span > 0.0 ? std::min(1.0, busy_time_[c] / span) : 0.0;
    busy_time_[c] = 0.0;
  }
  epoch_start_ = state_.time;
}

// ---------------------------------------------------------------------------

namespace {

nlohmann::json cluster_json(const ClusterSpec& c, const ClusterPower& p) {
  return {{"name", std::string(to_string(c.id))},
          {"cores", c.core_ids},
          {"freq_ghz", c.freq_levels},
          {"voltage_v", c.voltages},
          {"power",
           {{"c_dyn", p.c_dyn},
            {"p_leak0", p.p_leak0},
            {"k_leak", p.k_leak},
            {"idle_activity", p.idle_activity},
            {"uncore", p.uncore}}}};
}

}  // namespace

void PlatformConfig::save(const std::filesystem::path& path) const {
  const auto& t = thermal;
  nlohmann::json j{
      {"format", "topil-platform"},
      {"version", 1},
      {"dt_s", dt},
      {"clusters", {cluster_json(clusters[0], power.cluster[0]), cluster_json(clusters[1], power.cluster[1])}},
      {"thermal",
       {{"c_core", t.c_core},
        {"c_package", t.c_package},
        {"g_lateral", t.g_lateral},
        {"g_core_package", t.g_core_package},
        {"g_ambient", {{"fan", t.g_ambient_fan}, {"nofan", t.g_ambient_nofan}}},
        {"ambient_c", t.ambient},
        {"dtm_threshold_c", t.dtm_threshold},
        {"dtm_release_c", t.dtm_release}}},
      {"migration_penalty",
       {{"stall_s", migration.stall}, {"slowdown_s", migration.slowdown}, {"slowdown_factor", migration.slowdown_factor}}},
  };
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write platform config " + path.string());
  out << j.dump(2) << '\n';
}

PlatformConfig PlatformConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open platform config " + path.string());
  const auto j = nlohmann::json::parse(in);
  PlatformConfig c = defaults();
  c.dt = j.value("dt_s", c.dt);
  const auto& jc = j.at("clusters");
  if (jc.size() != 2) throw std::invalid_argument("platform config: exactly two clusters required");
  for (std::size_t i = 0; i < 2; ++i) {
    auto& spec = c.clusters[i];
    spec.id = static_cast<ClusterId>(i);
    spec.core_ids = jc[i].at("cores").get<std::vector<int>>();
    spec.freq_levels = jc[i].at("freq_ghz").get<std::vector<double>>();
    spec.voltages = jc[i].at("voltage_v").get<std::vector<double>>();
    const auto& jp = jc[i].at("power");
    auto& p = c.power.cluster[i];
    p.c_dyn = jp.at("c_dyn").get<double>();
    p.p_leak0 = jp.at("p_leak0").get<double>();
    p.k_leak = jp.at("k_leak").get<double>();
    p.idle_activity = jp.at("idle_activity").get<double>();
    p.uncore = jp.at("uncore").get<double>();
  }
  const auto& jt = j.at("thermal");
  auto& t = c.thermal;
  t.c_core = jt.at("c_core").get<double>();
  t.c_package = jt.at("c_package").get<double>();
  t.g_lateral = jt.at("g_lateral").get<double>();
  t.g_core_package = jt.at("g_core_package").get<double>();
  t.g_ambient_fan = jt.at("g_ambient").at("fan").get<double>();
  t.g_ambient_nofan = jt.at("g_ambient").at("nofan").get<double>();
  t.ambient = jt.at("ambient_c").get<double>();
  t.dtm_threshold = jt.at("dtm_threshold_c").get<double>();
  t.dtm_release = jt.at("dtm_release_c").get<double>();
  if (j.contains("migration_penalty")) {
    const auto& jm = j.at("migration_penalty");
    c.migration.stall = jm.at("stall_s").get<double>();
    c.migration.slowdown = jm.at("slowdown_s").get<double>();
    c.migration.slowdown_factor = jm.at("slowdown_factor").get<double>();
  }
  c.validate();
  return c;
}

void write_temperature_trace(const std::filesystem::path& path, std::span<const TemperatureSample> samples) {
  std::vector<std::string> header{"time_s"};
  for (int c = 0; c < kNumCores; ++c) header.push_back("t_core" + std::to_string(c));
  header.insert(header.end(), {"t_pkg", "f_l", "f_b"});
  csv::Writer w(path, header);
  for (const auto& s : samples) {
    w.cell(s.time);
    for (double t : s.temperatures) w.cell(t);
    w.cell(s.f_little).cell(s.f_big);
    w.end_row();
  }
}

}  // namespace topil
