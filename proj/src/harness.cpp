#include "topil/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "topil/csv.hpp"

namespace topil {

double ExperimentResult::total_cpu_time() const {
  double s = 0.0;
  for (const auto& c : cpu_time) s = std::accumulate(c.begin(), c.end(), s);
  return s;
}

ExperimentResult run_experiment(const std::vector<ScenarioApp>& scenario, Policy& policy, const PlatformConfig& platform,
                                Cooling cooling, const AppLibrary& library, const RunConfig& cfg) {
  Platform sim(platform, cooling);
  const double dt = platform.dt;
  const long long k_dvfs = std::llround(cfg.dvfs_period / dt);
  const long long k_mig = std::llround(cfg.migration_period / dt);
  if (k_dvfs < 1 || k_mig < 1 || k_mig % k_dvfs != 0)
    throw std::invalid_argument("run_experiment: periods must be multiples of dt and of each other");

  std::vector<AppInstance> apps;
  apps.reserve(scenario.size());
  for (const auto& s : scenario)
    apps.push_back(make_instance(static_cast<AppId>(apps.size()), library.at(s.app), s.qos_target, s.arrival,
                                 cfg.time_scale));
  std::vector<std::size_t> order(apps.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return apps[a].arrival < apps[b].arrival; });

  ExperimentResult r;
  r.policy = policy.name();
  r.cooling = std::string(to_string(cooling));
  for (int c = 0; c < kNumClusters; ++c)
    r.cpu_time[static_cast<std::size_t>(c)].assign(static_cast<std::size_t>(platform.clusters[static_cast<std::size_t>(c)].levels()), 0.0);

  std::vector<DecisionRecord> log;
  Context ctx(sim, apps, cfg.keep_log ? &log : nullptr);
  std::size_t next_arrival = 0;
  std::deque<AppId> waiting;
  std::vector<bool> exited(apps.size(), false);
  std::size_t done = 0;
  double temp_integral = 0.0;
  double peak = sim.peak_temperature();
  long long windows = 0, bad_windows = 0;
  const auto wall_start = std::chrono::steady_clock::now();

  struct Busy {
    AppId id;
    int core;
    int level;
    double busy;
  };
  std::vector<Busy> snapshot;

  for (long long n = 0;; ++n) {
    const double t = sim.state().time;
    if (n % k_dvfs == 0) {
      for (auto& a : apps) {
        if (a.window_time > 0.0) {
          const auto q = measure_qos(a, a.window_time);
          a.measured_ips = q.ips;
          a.measured_l2d = q.l2d_per_s;
          ++a.measured_windows;
          ++windows;
          if (q.ips < a.qos_target) ++bad_windows;
        }
        a.window_instructions = a.window_l2d = a.window_time = 0.0;
      }
      sim.close_epoch();
      if (n % k_mig == 0) policy.on_migration_tick(ctx);
      policy.on_dvfs_tick(ctx);
      sim.apply_dtm();
      if (sim.state().dtm_active[0] || sim.state().dtm_active[1]) ++r.dtm_epochs;
    }
    for (auto& a : apps) {
      if (a.finished() && !exited[static_cast<std::size_t>(a.id)]) {
        exited[static_cast<std::size_t>(a.id)] = true;
        ++done;
        ctx.record("exit", a.id, -1, -1, "");
        policy.on_exit(ctx, a.id);
      }
    }
    while (next_arrival < order.size() && apps[order[next_arrival]].arrival <= t + 1e-12) {
      const AppId id = static_cast<AppId>(order[next_arrival++]);
      ctx.record("arrive", id, -1, -1, apps[static_cast<std::size_t>(id)].model->name);
      waiting.push_back(id);
    }
    while (!waiting.empty()) {
      const int core = cold_start_core(sim.state());
      if (core < 0) break;
      const AppId id = waiting.front();
      waiting.pop_front();
      sim.assign(apps[static_cast<std::size_t>(id)], core);
      ctx.record("place", id, -1, core, "cold-start");
      policy.on_arrival(ctx, id);
    }
    if (done == apps.size()) break;

    if (t > cfg.max_sim_s) throw std::runtime_error("run_experiment: exceeded max simulated time");
    if (n % 20000 == 0 && n > 0) {
      const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
      if (wall > cfg.wall_budget_s) throw std::runtime_error("run_experiment: exceeded wall-clock budget");
    }
    const double p = sim.peak_temperature();
    temp_integral += p * dt;
    peak = std::max(peak, p);
    if (cfg.keep_trace && n % std::max(1LL, std::llround(cfg.trace_period / dt)) == 0)
      r.trace.push_back({t, sim.state().temperatures, sim.freq(ClusterId::little), sim.freq(ClusterId::big)});

    snapshot.clear();
    for (const auto& a : apps)
      if (a.running()) snapshot.push_back({a.id, a.core, sim.level(cluster_of(a.core)), a.busy_time});
    sim.step(apps);
    for (const auto& s : snapshot) {
      const double delta = apps[static_cast<std::size_t>(s.id)].busy_time - s.busy;
      r.cpu_time[static_cast<std::size_t>(index_of(cluster_of(s.core)))][static_cast<std::size_t>(s.level)] += delta;
    }
  }

  r.duration = sim.state().time;
  r.avg_temp = r.duration > 0.0 ? temp_integral / r.duration : sim.ambient();
  r.peak_temp = peak;
  r.migrations = ctx.migrations();
  r.window_violation_rate = windows ? static_cast<double>(bad_windows) / static_cast<double>(windows) : 0.0;
  double severity = 0.0;
  for (const auto& a : apps) {
    AppRecord rec{a.model->name, a.qos_target, a.arrival, a.start_time, a.finish_time, a.mean_ips(), a.qos_violated(),
                  a.migrations};
    if (rec.violated) {
      ++r.violations;
      severity += (a.qos_target - rec.mean_ips) / a.qos_target;
    }
    r.apps.push_back(std::move(rec));
  }
  r.violation_severity = r.violations ? severity / r.violations : 0.0;
  r.log = std::move(log);
  return r;
}

void write_result_json(const std::filesystem::path& path, const ExperimentResult& r) {
  nlohmann::json j{{"policy", r.policy},
                   {"cooling", r.cooling},
                   {"seed", r.seed},
                   {"arrival_rate", r.arrival_rate},
                   {"duration_s", r.duration},
                   {"avg_temp_c", r.avg_temp},
                   {"peak_temp_c", r.peak_temp},
                   {"violations", r.violations},
                   {"violation_severity", r.violation_severity},
                   {"window_violation_rate", r.window_violation_rate},
                   {"migrations", r.migrations},
                   {"dtm_epochs", r.dtm_epochs},
                   {"cpu_time_little_s", r.cpu_time[0]},
                   {"cpu_time_big_s", r.cpu_time[1]}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void write_app_records_csv(const std::filesystem::path& path, const ExperimentResult& r) {
  csv::Writer w(path, {"app", "qos_target_ips", "arrival_s", "start_s", "finish_s", "mean_ips", "violated", "migrations"});
  for (const auto& a : r.apps) {
    w.cell(a.app).cell(a.qos_target).cell(a.arrival).cell(a.start).cell(a.finish).cell(a.mean_ips);
    w.cell(a.violated ? 1 : 0).cell(a.migrations);
    w.end_row();
  }
}

// ---------------------------------------------------------------------------

std::vector<std::string> policy_names() { return {"topil", "rl", "gts-ondemand", "gts-powersave"}; }

std::unique_ptr<Policy> make_policy(const std::string& name, const PolicyAssets& assets, int rep) {
  const auto pick = [rep](const auto& v, const char* what) -> const auto& {
    if (v.empty()) throw std::invalid_argument(std::string("make_policy: no ") + what + " available");
    return v[static_cast<std::size_t>(rep) % v.size()];
  };
  if (name == "topil") return std::make_unique<TopIlPolicy>(std::make_shared<ModelRater>(pick(assets.models, "model")));
  if (name == "rl")
    return std::make_unique<RlPolicy>(std::make_shared<QTable>(pick(assets.tables, "Q-table")), assets.rl,
                                      static_cast<std::uint64_t>(1000 + rep));
  if (name == "gts-ondemand") return std::make_unique<GtsPolicy>(Governor::ondemand, assets.gts);
  if (name == "gts-powersave") return std::make_unique<GtsPolicy>(Governor::powersave, assets.gts);
  throw std::invalid_argument("unknown policy '" + name + "'");
}

std::vector<ScenarioApp> sweep_scenario(const SweepConfig& sweep, const AppLibrary& library, double rate, int rep) {
  ScenarioSpec spec;
  spec.seed = sweep.scenario_seed + (sweep.vary_scenario ? static_cast<std::uint64_t>(rep) : 0);
  spec.pool = sweep.pool;
  spec.count = sweep.count;
  spec.arrival_rate = rate;
  return generate_scenario(spec, library);
}

std::vector<ExperimentResult> run_sweep(const SweepConfig& sweep, const PolicyAssets& assets,
                                        const PlatformConfig& platform, const AppLibrary& library,
                                        const RunConfig& cfg) {
  struct Job {
    Cooling cooling;
    double rate;
    int rep;
    std::string policy;
  };
  std::vector<Job> jobs;
  for (Cooling cooling : sweep.coolings)
    for (double rate : sweep.rates)
      for (int rep = 0; rep < sweep.repetitions; ++rep)
        for (const auto& name : sweep.policies) jobs.push_back({cooling, rate, rep, name});

  std::vector<std::optional<ExperimentResult>> slots(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < jobs.size();) {
      const auto& j = jobs[i];
      try {
        auto policy = make_policy(j.policy, assets, j.rep);
        auto r = run_experiment(sweep_scenario(sweep, library, j.rate, j.rep), *policy, platform, j.cooling, library, cfg);
        r.seed = static_cast<std::uint64_t>(j.rep);
        r.arrival_rate = j.rate;
        slots[i] = std::move(r);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int n = std::max(1, std::min<int>(sweep.jobs, static_cast<int>(jobs.size())));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  std::vector<ExperimentResult> out;
  out.reserve(jobs.size());
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
    out.push_back(std::move(*slots[i]));
  }
  return out;
}

Stat mean_std(const std::vector<double>& v) {
  if (v.empty()) return {};
  const double n = static_cast<double>(v.size());
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, std::sqrt(ss / n)};
}

std::vector<CellSummary> summarize(const std::vector<ExperimentResult>& results) {
  std::map<std::tuple<std::string, std::string, double>, std::vector<const ExperimentResult*>> cells;
  std::vector<std::tuple<std::string, std::string, double>> keys;
  for (const auto& r : results) {
    auto key = std::tuple{r.cooling, r.policy, r.arrival_rate};
    if (!cells.count(key)) keys.push_back(key);
    cells[key].push_back(&r);
  }
  std::vector<CellSummary> out;
  for (const auto& key : keys) {
    const auto& rs = cells[key];
    CellSummary c;
    c.cooling = std::get<0>(key);
    c.policy = std::get<1>(key);
    c.rate = std::get<2>(key);
    c.runs = static_cast<int>(rs.size());
    std::vector<double> avg, pk, vio, mig;
    for (std::size_t cl = 0; cl < kNumClusters; ++cl) c.cpu_time[cl].assign(rs.front()->cpu_time[cl].size(), 0.0);
    for (const auto* r : rs) {
      avg.push_back(r->avg_temp);
      pk.push_back(r->peak_temp);
      vio.push_back(r->violations);
      mig.push_back(r->migrations);
      for (std::size_t cl = 0; cl < kNumClusters; ++cl)
        for (std::size_t l = 0; l < c.cpu_time[cl].size(); ++l) c.cpu_time[cl][l] += r->cpu_time[cl][l] / static_cast<double>(rs.size());
    }
    c.avg_temp = mean_std(avg);
    c.peak_temp = mean_std(pk);
    c.violations = mean_std(vio);
    c.migrations = mean_std(mig);
    out.push_back(std::move(c));
  }
  return out;
}

const CellSummary& find_cell(const std::vector<CellSummary>& cells, const std::string& policy,
                             const std::string& cooling, double rate) {
  for (const auto& c : cells)
    if (c.policy == policy && c.cooling == cooling && c.rate == rate) return c;
  throw std::out_of_range("no summary cell for " + policy + "/" + cooling + "/" + csv::num(rate));
}

void write_results_csv(const std::filesystem::path& path, const std::vector<ExperimentResult>& results) {
  csv::Writer w(path, {"policy", "cooling", "rate", "seed", "duration_s", "avg_temp_c", "peak_temp_c", "violations",
                       "violation_severity", "window_violation_rate", "migrations", "dtm_epochs", "cpu_time_s"});
  for (const auto& r : results) {
    w.cell(r.policy).cell(r.cooling).cell(r.arrival_rate).cell(static_cast<long long>(r.seed)).cell(r.duration);
    w.cell(r.avg_temp).cell(r.peak_temp).cell(r.violations).cell(r.violation_severity).cell(r.window_violation_rate);
    w.cell(r.migrations).cell(r.dtm_epochs).cell(r.total_cpu_time());
    w.end_row();
  }
}

void write_summary_csv(const std::filesystem::path& path, const std::vector<CellSummary>& cells) {
  std::vector<std::string> header{"policy",     "cooling",       "rate",           "runs",          "avg_temp_mean",
                                  "avg_temp_std", "peak_temp_mean", "violations_mean", "violations_std", "migrations_mean"};
  std::size_t nl = 0, nb = 0;
  if (!cells.empty()) {
    nl = cells.front().cpu_time[0].size();
    nb = cells.front().cpu_time[1].size();
  }
  for (std::size_t l = 0; l < nl; ++l) header.push_back("cpu_l" + std::to_string(l) + "_s");
  for (std::size_t l = 0; l < nb; ++l) header.push_back("cpu_b" + std::to_string(l) + "_s");
  csv::Writer w(path, header);
  for (const auto& c : cells) {
    w.cell(c.policy).cell(c.cooling).cell(c.rate).cell(c.runs).cell(c.avg_temp.mean).cell(c.avg_temp.std);
    w.cell(c.peak_temp.mean).cell(c.violations.mean).cell(c.violations.std).cell(c.migrations.mean);
    for (double x : c.cpu_time[0]) w.cell(x);
    for (double x : c.cpu_time[1]) w.cell(x);
    w.end_row();
  }
}

namespace {

const char* kPalette[] = {"#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666"};

std::string fmt(double v, int prec = 1) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(prec);
  s << v;
  return s.str();
}

}  // namespace

void write_bar_svg(const std::filesystem::path& path, const std::vector<CellSummary>& cells, const std::string& metric,
                   const std::string& cooling) {
  std::vector<std::string> policies;
  std::vector<double> rates;
  for (const auto& c : cells) {
    if (c.cooling != cooling) continue;
    if (std::find(policies.begin(), policies.end(), c.policy) == policies.end()) policies.push_back(c.policy);
    if (std::find(rates.begin(), rates.end(), c.rate) == rates.end()) rates.push_back(c.rate);
  }
  auto value = [&](const CellSummary& c) { return metric == "violations" ? c.violations : c.avg_temp; };
  double vmax = 1.0;
  for (const auto& c : cells)
    if (c.cooling == cooling) vmax = std::max(vmax, value(c).mean + value(c).std);
  const double W = 720, H = 360, left = 60, bottom = 40, top = 30;
  const double plot_h = H - bottom - top;
  const double group_w = (W - left - 20) / std::max<std::size_t>(1, rates.size());
  const double bar_w = group_w * 0.8 / std::max<std::size_t>(1, policies.size());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  out << "<text x=\"" << left << "\" y=\"18\">" << (metric == "violations" ? "QoS violations" : "Average temperature [C]")
      << " (" << cooling << ")</text>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << H - bottom << "\" x2=\"" << W - 10 << "\" y2=\"" << H - bottom << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = vmax * i / 4.0, y = H - bottom - plot_h * i / 4.0;
    out << "<text x=\"" << left - 5 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << fmt(v) << "</text>\n";
  }
  for (std::size_t ri = 0; ri < rates.size(); ++ri) {
    const double gx = left + group_w * static_cast<double>(ri) + group_w * 0.1;
    out << "<text x=\"" << gx + group_w * 0.4 << "\" y=\"" << H - bottom + 16 << "\" text-anchor=\"middle\">rate "
        << fmt(rates[ri], 2) << "/s</text>\n";
    for (std::size_t pi = 0; pi < policies.size(); ++pi) {
      for (const auto& c : cells) {
        if (c.cooling != cooling || c.rate != rates[ri] || c.policy != policies[pi]) continue;
        const auto s = value(c);
        const double h = plot_h * s.mean / vmax;
        const double x = gx + bar_w * static_cast<double>(pi);
        out << "<rect x=\"" << x << "\" y=\"" << H - bottom - h << "\" width=\"" << bar_w * 0.9 << "\" height=\"" << h
            << "\" fill=\"" << kPalette[pi % 8] << "\"/>\n";
        const double ye = H - bottom - plot_h * (s.mean + s.std) / vmax;
        out << "<line x1=\"" << x + bar_w * 0.45 << "\" y1=\"" << ye << "\" x2=\"" << x + bar_w * 0.45 << "\" y2=\""
            << H - bottom - plot_h * std::max(0.0, s.mean - s.std) / vmax << "\" stroke=\"black\"/>\n";
      }
    }
  }
  for (std::size_t pi = 0; pi < policies.size(); ++pi)
    out << "<rect x=\"" << W - 150 << "\" y=\"" << 10 + 14 * pi << "\" width=\"10\" height=\"10\" fill=\"" << kPalette[pi % 8]
        << "\"/><text x=\"" << W - 135 << "\" y=\"" << 19 + 14 * pi << "\">" << policies[pi] << "</text>\n";
  out << "</svg>\n";
}

void write_histogram_svg(const std::filesystem::path& path, const std::vector<CellSummary>& cells,
                         const std::string& cooling, const PlatformConfig& platform) {
  std::vector<std::string> policies;
  std::map<std::string, std::vector<double>> bins;  // LITTLE levels then big levels
  const std::size_t nl = static_cast<std::size_t>(platform.clusters[0].levels());
  const std::size_t nb = static_cast<std::size_t>(platform.clusters[1].levels());
  for (const auto& c : cells) {
    if (c.cooling != cooling) continue;
    auto& b = bins[c.policy];
    if (b.empty()) {
      policies.push_back(c.policy);
      b.assign(nl + nb, 0.0);
    }
    for (std::size_t l = 0; l < nl && l < c.cpu_time[0].size(); ++l) b[l] += c.cpu_time[0][l];
    for (std::size_t l = 0; l < nb && l < c.cpu_time[1].size(); ++l) b[nl + l] += c.cpu_time[1][l];
  }
  const double W = 720, row_h = 40, left = 120;
  const double H = 60 + row_h * static_cast<double>(policies.size()) + 60;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  out << "<text x=\"10\" y=\"18\">CPU time share per cluster and VF level (" << cooling << ")</text>\n";
  for (std::size_t pi = 0; pi < policies.size(); ++pi) {
    const auto& b = bins[policies[pi]];
    const double total = std::max(1e-12, std::accumulate(b.begin(), b.end(), 0.0));
    const double y = 40 + row_h * static_cast<double>(pi);
    out << "<text x=\"" << left - 6 << "\" y=\"" << y + 18 << "\" text-anchor=\"end\">" << policies[pi] << "</text>\n";
    double x = left;
    for (std::size_t i = 0; i < b.size(); ++i) {
      const double w = (W - left - 20) * b[i] / total;
      const bool big = i >= nl;
      const std::size_t level = big ? i - nl : i;
      const std::size_t levels = big ? nb : nl;
      const int shade = static_cast<int>(230 - 180.0 * static_cast<double>(level) / static_cast<double>(levels - 1));
      out << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << w << "\" height=\"" << row_h - 10 << "\" fill=\"rgb("
          << (big ? 255 : shade) << "," << shade << "," << (big ? shade : 255) << ")\" stroke=\"white\"/>\n";
      x += w;
    }
  }
  const double ly = 50 + row_h * static_cast<double>(policies.size());
  out << "<text x=\"" << left << "\" y=\"" << ly << "\">blue: LITTLE levels, red: big levels; darker = higher frequency</text>\n";
  out << "</svg>\n";
}

std::vector<OrderingCheck> check_orderings(const std::vector<CellSummary>& cells, const PlatformConfig& platform,
                                           const OrderingRules& rules) {
  std::vector<OrderingCheck> out;
  std::vector<std::pair<std::string, double>> keys;
  for (const auto& c : cells)
    if (std::find(keys.begin(), keys.end(), std::pair{c.cooling, c.rate}) == keys.end()) keys.emplace_back(c.cooling, c.rate);
  for (const auto& [cooling, rate] : keys) {
    const auto tag = cooling + "@" + fmt(rate, 2);
    const auto& ps = find_cell(cells, "gts-powersave", cooling, rate);
    const auto& od = find_cell(cells, "gts-ondemand", cooling, rate);
    const auto& il = find_cell(cells, "topil", cooling, rate);
    const auto& rl = find_cell(cells, "rl", cooling, rate);
    auto add = [&](std::string name, bool ok, std::string detail) {
      out.push_back({std::move(name) + " " + tag, ok, std::move(detail)});
    };
    add("avgT powersave <= topil", ps.avg_temp.mean <= il.avg_temp.mean,
        fmt(ps.avg_temp.mean, 2) + " vs " + fmt(il.avg_temp.mean, 2));
    add("avgT topil < ondemand", il.avg_temp.mean < od.avg_temp.mean,
        fmt(il.avg_temp.mean, 2) + " vs " + fmt(od.avg_temp.mean, 2));
    add("violations topil < rl", il.violations.mean < rl.violations.mean,
        fmt(il.violations.mean, 2) + " vs " + fmt(rl.violations.mean, 2));
    add("violations topil << powersave", il.violations.mean <= rules.violation_ratio * ps.violations.mean,
        fmt(il.violations.mean, 2) + " vs " + fmt(ps.violations.mean, 2));
  }
  std::vector<std::string> coolings;
  for (const auto& k : keys)
    if (std::find(coolings.begin(), coolings.end(), k.first) == coolings.end()) coolings.push_back(k.first);
  const std::size_t top_b = static_cast<std::size_t>(platform.clusters[1].max_level());
  for (const auto& cooling : coolings) {
    double gap = 0.0;
    int rates = 0;
    for (const auto& [c, rate] : keys) {
      if (c != cooling) continue;
      gap += find_cell(cells, "gts-ondemand", c, rate).avg_temp.mean - find_cell(cells, "topil", c, rate).avg_temp.mean;
      ++rates;
    }
    gap /= rates;
    out.push_back({"mean gap ondemand - topil >= " + fmt(rules.min_gap) + " " + cooling, gap >= rules.min_gap,
                   fmt(gap, 2) + " C over " + std::to_string(rates) + " rates"});
    std::array<std::vector<double>, kNumClusters> od{}, ps{};
    for (std::size_t cl = 0; cl < kNumClusters; ++cl) {
      od[cl].assign(static_cast<std::size_t>(platform.clusters[cl].levels()), 0.0);
      ps[cl].assign(static_cast<std::size_t>(platform.clusters[cl].levels()), 0.0);
    }
    for (const auto& c : cells) {
      if (c.cooling != cooling) continue;
      auto* dst = c.policy == "gts-ondemand" ? &od : c.policy == "gts-powersave" ? &ps : nullptr;
      if (!dst) continue;
      for (std::size_t cl = 0; cl < kNumClusters; ++cl)
        for (std::size_t l = 0; l < (*dst)[cl].size(); ++l) (*dst)[cl][l] += c.cpu_time[cl][l];
    }
    const auto total = [](const auto& h) {
      double s = 0.0;
      for (const auto& v : h) s = std::accumulate(v.begin(), v.end(), s);
      return s;
    };
    double od_max_other = 0.0;
    for (std::size_t cl = 0; cl < kNumClusters; ++cl)
      for (std::size_t l = 0; l < od[cl].size(); ++l)
        if (!(cl == 1 && l == top_b)) od_max_other = std::max(od_max_other, od[cl][l]);
    const double od_share = od[1][top_b] / std::max(1e-12, total(od));
    out.push_back({"histogram ondemand peaks at big max " + cooling,
                   od[1][top_b] > od_max_other && od_share >= rules.top_bin_share, "share " + fmt(100 * od_share) + " %"});
    const double ps_share = (ps[0][0] + ps[1][0]) / std::max(1e-12, total(ps));
    out.push_back({"histogram powersave at min levels " + cooling, ps_share >= rules.min_level_share,
                   "share " + fmt(100 * ps_share, 2) + " %"});
  }
  return out;
}

// ---------------------------------------------------------------------------

double overhead_metric(double t_big, double t_little, double t_migrate) {
  return ((1.0 / t_big + 1.0 / t_little) / 2.0) * t_migrate - 1.0;
}

namespace {

double run_pinned(const std::shared_ptr<const AppModel>& app, const PlatformConfig& platform, const OverheadConfig& cfg,
                  int core, bool migrate, int* migrations) {
  Platform sim(platform, Cooling::fan);
  sim.set_cluster_level(ClusterId::little, platform.clusters[0].max_level());
  sim.set_cluster_level(ClusterId::big, platform.clusters[1].max_level());
  std::vector<AppInstance> apps{make_instance(0, app, 0.0, 0.0, 1.0)};
  apps[0].total_instructions = cfg.instructions;
  sim.assign(apps[0], core);
  const long long first = std::llround(cfg.first_switch / platform.dt);
  const long long period = std::llround(cfg.period / platform.dt);
  int count = 0;
  for (long long n = 0; !apps[0].finished(); ++n) {
    if (migrate && n >= first && (n - first) % period == 0) {
      sim.migrate(apps[0], apps[0].core == cfg.big_core ? cfg.little_core : cfg.big_core);
      ++count;
    }
    sim.step(apps);
    if (n > 100000000) throw std::runtime_error("migration_overhead: run did not finish");
  }
  if (migrations) *migrations = count;
  return apps[0].finish_time;
}

}  // namespace

OverheadResult migration_overhead(const std::shared_ptr<const AppModel>& app, const PlatformConfig& platform,
                                  const OverheadConfig& cfg) {
  OverheadResult r;
  r.app = app->name;
  r.t_big = run_pinned(app, platform, cfg, cfg.big_core, false, nullptr);
  r.t_little = run_pinned(app, platform, cfg, cfg.little_core, false, nullptr);
  r.t_migrate = run_pinned(app, platform, cfg, cfg.start_big ? cfg.big_core : cfg.little_core, true, &r.migrations);
  r.m = overhead_metric(r.t_big, r.t_little, r.t_migrate);
  return r;
}

std::vector<OverheadResult> migration_overhead_reps(const std::shared_ptr<const AppModel>& app,
                                                    const PlatformConfig& platform, OverheadConfig cfg) {
  std::vector<OverheadResult> out;
  const double base = cfg.first_switch;
  for (int rep = 0; rep < 3; ++rep) {
    cfg.first_switch = base + cfg.period * rep / 3.0;
    cfg.first_switch = std::round(cfg.first_switch / platform.dt) * platform.dt;
    out.push_back(migration_overhead(app, platform, cfg));
  }
  return out;
}

// ---------------------------------------------------------------------------

EvalReport evaluate_decisions(const std::vector<TrainingExample>& examples, const RatingFn& rate, double tolerance) {
  EvalReport rep;
  if (examples.empty()) return rep;
  std::vector<FeatureVector> rows;
  rows.reserve(examples.size());
  for (const auto& e : examples) rows.push_back(e.features);
  const Eigen::MatrixXd ratings = rate(rows);
  double excess_sum = 0.0;
  int feasible = 0;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& t = examples[i].core_temps;
    int choice = -1;
    double best = -std::numeric_limits<double>::infinity();
    double t_min = std::numeric_limits<double>::infinity();
    for (int c = 0; c < kNumCores; ++c) {
      const double tc = t[static_cast<std::size_t>(c)];
      if (std::isnan(tc)) continue;
      t_min = std::min(t_min, tc);
      const double score = ratings(static_cast<Eigen::Index>(i), c);
      if (choice < 0 || score > best) {
        best = score;
        choice = c;
      }
    }
    ++rep.decisions;
    const double tc = t[static_cast<std::size_t>(choice)];
    if (std::isinf(tc)) {
      ++rep.infeasible_choices;
      continue;
    }
    const double excess = tc - t_min;
    excess_sum += excess;
    ++feasible;
    if (excess <= tolerance) ++rep.within_1c;
  }
  rep.accuracy = static_cast<double>(rep.within_1c) / rep.decisions;
  rep.mean_excess = feasible ? excess_sum / feasible : 0.0;
  return rep;
}

// ---------------------------------------------------------------------------

PipelineConfig PipelineConfig::defaults(std::uint64_t seed) {
  PipelineConfig c;
  c.combos.seed = seed;
  c.combos.aois = training_app_names();
  c.combos.background = training_app_names();
  c.trace.seed = seed;
  return c;
}

PipelineData generate_training_data(const PipelineConfig& cfg, const PlatformConfig& platform,
                                    const AppLibrary& library) {
  PipelineData d;
  d.combos = generate_combos(cfg.combos);
  TraceStore store;
  for (const auto& combo : d.combos) {
    d.traces.push_back(collect_traces(combo, platform, library, cfg.trace, store));
    auto rows = extract_training_data(d.traces.back(), cfg.extract);
    const bool held = std::find(cfg.held_out.begin(), cfg.held_out.end(), combo.aoi) != cfg.held_out.end();
    auto& dst = held ? d.test : d.train;
    dst.insert(dst.end(), std::make_move_iterator(rows.begin()), std::make_move_iterator(rows.end()));
  }
  d.simulations = store.simulations();
  return d;
}

TrainResult train_model(const std::vector<TrainingExample>& examples, const AppLibrary& library,
                        const PlatformConfig& platform, const ModelSpec& spec, const TrainConfig& cfg) {
  const auto& big = platform.cluster(ClusterId::big);
  const auto norm = fit_normalizer(examples, reference_ips(library, big.freq(big.max_level())));
  auto result = train(make_dataset(examples, norm), spec, cfg);
  result.model.normalizer = norm;
  return result;
}

// ---------------------------------------------------------------------------

PretrainResult pretrain_rl(const PretrainConfig& cfg, const RlConfig& rl, const PlatformConfig& platform,
                           const AppLibrary& library) {
  auto table = std::make_shared<QTable>(rl.init);
  RlPolicy policy(table, rl, cfg.seed * 7919 + 17);
  PretrainResult out;
  const double budget = cfg.hours * 3600.0;
  RunConfig run;
  for (int i = 0; out.simulated_s < budget; ++i) {
    ScenarioSpec spec;
    spec.seed = 0xB000 + cfg.seed * 100003 + static_cast<std::uint64_t>(i);
    spec.pool = cfg.pool;
    spec.count = cfg.apps_per_scenario;
    spec.arrival_rate = cfg.arrival_rate;
    const QTable before = *table;
    const auto r = run_experiment(generate_scenario(spec, library), policy, platform, cfg.cooling, library, run);
    out.deltas.push_back(table->max_abs_diff(before));
    out.simulated_s += r.duration;
    ++out.scenarios;
  }
  out.table = *table;
  return out;
}

}  // namespace topil
