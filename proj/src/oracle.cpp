#include "topil/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <stdexcept>
#include <tuple>

#include "topil/csv.hpp"

namespace topil {

namespace {

constexpr double kFreqTol = 1e-9;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

std::vector<int> ComboTraces::free_cores() const {
  std::vector<int> out;
  for (int c = 0; c < kNumCores; ++c)
    if (!occupied[static_cast<std::size_t>(c)]) out.push_back(c);
  return out;
}

const TracePoint& ComboTraces::at(int core, int li, int bi) const {
  const auto& g = grid.at(static_cast<std::size_t>(core));
  const std::size_t nb = freqs_b.size();
  const std::size_t idx = static_cast<std::size_t>(li) * nb + static_cast<std::size_t>(bi);
  if (li < 0 || bi < 0 || static_cast<std::size_t>(li) >= freqs_l.size() || static_cast<std::size_t>(bi) >= nb ||
      g.size() != freqs_l.size() * nb || std::isnan(g[idx].peak_t))
    throw std::runtime_error("incomplete trace grid: " + scenario + " core " + std::to_string(core) + " point (" +
                             std::to_string(li) + "," + std::to_string(bi) + ")");
  return g[idx];
}

void ComboTraces::set(int core, int li, int bi, const TracePoint& p) {
  auto& g = grid.at(static_cast<std::size_t>(core));
  if (g.size() != freqs_l.size() * freqs_b.size()) g.assign(freqs_l.size() * freqs_b.size(), TracePoint{0, 0, kNaN});
  g.at(static_cast<std::size_t>(li) * freqs_b.size() + static_cast<std::size_t>(bi)) = p;
}

double ComboTraces::max_q() const {
  double best = 0.0;
  for (const auto& g : grid)
    for (const auto& p : g) best = std::max(best, p.q);
  return best;
}

std::optional<VfChoice> select_vf(const ComboTraces& traces, int core, double Q, double req_l, double req_b) {
  std::optional<VfChoice> best;
  std::tuple<double, double, double> best_key{};
  for (int li = 0; li < static_cast<int>(traces.freqs_l.size()); ++li) {
    const double fl = traces.freqs_l[static_cast<std::size_t>(li)];
    for (int bi = 0; bi < static_cast<int>(traces.freqs_b.size()); ++bi) {
      const double fb = traces.freqs_b[static_cast<std::size_t>(bi)];
      const auto& p = traces.at(core, li, bi);
      if (fl < req_l - kFreqTol || fb < req_b - kFreqTol || p.q < Q) continue;
      const std::tuple<double, double, double> key{p.peak_t, fl + fb, fb};
      if (!best || key < best_key) {
        best = VfChoice{li, bi};
        best_key = key;
      }
    }
  }
  return best;
}

std::optional<std::array<double, kNumCores>> compute_labels(const std::array<CoreOutcome, kNumCores>& outcomes,
                                                            double alpha) {
  double t_min = kInf;
  for (const auto& o : outcomes)
    if (o.kind == CoreOutcome::Kind::feasible) t_min = std::min(t_min, o.temp);
  if (t_min == kInf) return std::nullopt;
  std::array<double, kNumCores> labels{};
  for (std::size_t c = 0; c < kNumCores; ++c) {
    switch (outcomes[c].kind) {
      case CoreOutcome::Kind::occupied: labels[c] = 0.0; break;
      case CoreOutcome::Kind::infeasible: labels[c] = -1.0; break;
      case CoreOutcome::Kind::feasible: labels[c] = std::exp(-alpha * (outcomes[c].temp - t_min)); break;
    }
  }
  return labels;
}

std::vector<TrainingExample> examples_for_sweep_point(const ComboTraces& traces, const SweepPoint& point,
                                                      double alpha) {
  std::array<CoreOutcome, kNumCores> outcomes{};
  std::array<std::optional<VfChoice>, kNumCores> choice{};
  const auto free = traces.free_cores();
  for (int c : free) {
    const auto uc = static_cast<std::size_t>(c);
    choice[uc] = select_vf(traces, c, point.Q, point.req_l, point.req_b);
    outcomes[uc] = choice[uc] ? CoreOutcome{CoreOutcome::Kind::feasible, traces.at(c, choice[uc]->li, choice[uc]->bi).peak_t}
                              : CoreOutcome{CoreOutcome::Kind::infeasible, kInf};
  }
  const auto labels = compute_labels(outcomes, alpha);
  if (!labels) return {};

  std::array<double, kNumCores> temps{};
  std::array<double, kNumCores> util{};
  for (std::size_t c = 0; c < kNumCores; ++c) {
    temps[c] = traces.occupied[c] ? kNaN : outcomes[c].temp;
    util[c] = traces.occupied[c] ? 1.0 : 0.0;
  }

  auto lowest_at_least = [](const std::vector<double>& freqs, double req) {
    for (std::size_t i = 0; i < freqs.size(); ++i)
      if (freqs[i] >= req - kFreqTol) return static_cast<int>(i);
    return static_cast<int>(freqs.size()) - 1;
  };

  std::vector<TrainingExample> out;
  out.reserve(free.size());
  for (int src : free) {
    const auto us = static_cast<std::size_t>(src);
    VfChoice vf;
    if (choice[us]) {
      vf = *choice[us];
    } else if (cluster_of(src) == ClusterId::little) {
      vf = {static_cast<int>(traces.freqs_l.size()) - 1, lowest_at_least(traces.freqs_b, point.req_b)};
    } else {
      vf = {lowest_at_least(traces.freqs_l, point.req_l), static_cast<int>(traces.freqs_b.size()) - 1};
    }
    const auto& p = traces.at(src, vf.li, vf.bi);
    const double ratio_l = point.req_l / traces.freqs_l[static_cast<std::size_t>(vf.li)];
    const double ratio_b = point.req_b / traces.freqs_b[static_cast<std::size_t>(vf.bi)];
    out.push_back({traces.scenario, traces.aoi, make_features(p.q, p.l2d, src, point.Q, ratio_l, ratio_b, util),
                   *labels, temps});
  }
  return out;
}

std::vector<double> qos_sweep(const ComboTraces& traces, const ExtractConfig& cfg) {
  std::vector<double> qs;
  const double top = traces.max_q();
  for (int i = 0; i < cfg.qos_points; ++i) {
    const double frac = cfg.qos_points == 1
                            ? cfg.qos_low
                            : cfg.qos_low + (cfg.qos_high - cfg.qos_low) * i / static_cast<double>(cfg.qos_points - 1);
    qs.push_back(frac * top);
  }
  return qs;
}

std::vector<TrainingExample> extract_training_data(const ComboTraces& traces, const ExtractConfig& cfg) {
  bool bg_little = false, bg_big = false;
  for (int c = 0; c < kNumCores; ++c) {
    if (!traces.occupied[static_cast<std::size_t>(c)]) continue;
    (cluster_of(c) == ClusterId::little ? bg_little : bg_big) = true;
  }
  const std::vector<double> req_l = bg_little ? traces.freqs_l : std::vector<double>{traces.freqs_l.front()};
  const std::vector<double> req_b = bg_big ? traces.freqs_b : std::vector<double>{traces.freqs_b.front()};

  std::vector<TrainingExample> out;
  for (double Q : qos_sweep(traces, cfg))
    for (double rl : req_l)
      for (double rb : req_b) {
        auto rows = examples_for_sweep_point(traces, {Q, rl, rb}, cfg.alpha);
        out.insert(out.end(), std::make_move_iterator(rows.begin()), std::make_move_iterator(rows.end()));
      }
  return out;
}

namespace {

std::vector<std::string> training_header() {
  std::vector<std::string> h{"scenario", "aoi"};
  for (const auto& n : FeatureVector::names()) h.push_back(n);
  for (int c = 0; c < kNumCores; ++c) h.push_back("l_" + std::to_string(c));
  for (int c = 0; c < kNumCores; ++c) h.push_back("t_" + std::to_string(c));
  return h;
}

}  // namespace

void write_training_csv(const std::filesystem::path& path, const std::vector<TrainingExample>& rows) {
  csv::Writer w(path, training_header());
  for (const auto& r : rows) {
    w.cell(r.scenario).cell(r.aoi);
    for (double x : r.features.v) w.cell(x);
    for (double x : r.labels) w.cell(x);
    for (double x : r.core_temps) w.cell(x);
    w.end_row();
  }
}

std::vector<TrainingExample> load_training_csv(const std::filesystem::path& path) {
  const auto t = csv::Table::read(path);
  const auto header = training_header();
  if (t.header() != header) throw std::runtime_error("training csv: unexpected columns in " + path.string());
  std::vector<TrainingExample> out;
  out.reserve(t.rows());
  for (std::size_t r = 0; r < t.rows(); ++r) {
    TrainingExample e;
    e.scenario = t.str(r, 0);
    e.aoi = t.str(r, 1);
    std::size_t col = 2;
    for (auto& x : e.features.v) x = t.num(r, col++);
    for (auto& x : e.labels) x = t.num(r, col++);
    for (auto& x : e.core_temps) x = t.num(r, col++);
    out.push_back(std::move(e));
  }
  return out;
}

// ---------------------------------------------------------------------------

std::array<bool, kNumCores> Combo::occupied() const {
  std::array<bool, kNumCores> occ{};
  for (const auto& b : background) occ.at(static_cast<std::size_t>(b.core)) = true;
  return occ;
}

std::string Combo::background_key() const {
  auto bg = background;
  std::sort(bg.begin(), bg.end(), [](const auto& a, const auto& b) { return a.core < b.core; });
  std::string s;
  for (const auto& b : bg) s += (s.empty() ? "" : ";") + b.app + "@" + std::to_string(b.core);
  return s;
}

std::vector<Combo> generate_combos(const ComboSpec& spec) {
  if (spec.aois.empty() || spec.background.empty()) throw std::invalid_argument("generate_combos: empty app list");
  if (spec.max_background < 0 || spec.max_background >= kNumCores)
    throw std::invalid_argument("generate_combos: max_background must leave a free core");
  std::seed_seq seq{spec.seed, std::uint64_t{0xC0}};
  std::mt19937_64 rng(seq);
  std::uniform_int_distribution<std::size_t> pick(0, spec.background.size() - 1);
  std::vector<Combo> out;
  for (const auto& aoi : spec.aois) {
    for (int b = 0; b < spec.backgrounds_per_aoi; ++b) {
      Combo c;
      c.id = aoi + "_bg" + std::to_string(b);
      c.aoi = aoi;
      const int size = b % (spec.max_background + 1);
      std::array<int, kNumCores> cores{0, 1, 2, 3, 4, 5, 6, 7};
      std::shuffle(cores.begin(), cores.end(), rng);
      for (int i = 0; i < size; ++i) c.background.push_back({spec.background[pick(rng)], cores[static_cast<std::size_t>(i)]});
      std::sort(c.background.begin(), c.background.end(), [](const auto& x, const auto& y) { return x.core < y.core; });
      out.push_back(std::move(c));
    }
  }
  return out;
}

void save_combos_csv(const std::filesystem::path& path, const std::vector<Combo>& combos) {
  csv::Writer w(path, {"scenario", "aoi", "background"});
  for (const auto& c : combos) {
    w.cell(c.id).cell(c.aoi).cell(c.background_key());
    w.end_row();
  }
}

std::vector<Combo> load_combos_csv(const std::filesystem::path& path) {
  const auto t = csv::Table::read(path);
  const auto cs = t.column("scenario"), ca = t.column("aoi"), cb = t.column("background");
  std::vector<Combo> out;
  for (std::size_t r = 0; r < t.rows(); ++r) {
    Combo c{t.str(r, cs), t.str(r, ca), {}};
    const auto& bg = t.str(r, cb);
    if (!bg.empty())
      for (const auto& item : csv::split(bg, ';')) {
        const auto at = item.rfind('@');
        if (at == std::string::npos) throw std::runtime_error("combos csv: bad background entry '" + item + "'");
        c.background.push_back({item.substr(0, at), std::stoi(item.substr(at + 1))});
      }
    out.push_back(std::move(c));
  }
  return out;
}

std::optional<TracePoint> TraceStore::find(const std::string& key) const {
  auto it = memo_.find(key);
  if (it == memo_.end()) return std::nullopt;
  return it->second;
}

std::string TraceStore::key(const Combo& combo, int core, double f_l, double f_b) {
  return combo.aoi + "|" + combo.background_key() + "|" + std::to_string(core) + "|" + csv::num(f_l) + "|" +
         csv::num(f_b);
}

namespace {

struct WarmState {
  Platform platform;
  std::vector<AppInstance> apps;
};

WarmState warm_up(const Combo& combo, const PlatformConfig& platform, const AppLibrary& library,
                  const TraceConfig& cfg, int level_l, int level_b) {
  WarmState w{Platform(platform, cfg.cooling), {}};
  w.platform.set_cluster_level(ClusterId::little, level_l);
  w.platform.set_cluster_level(ClusterId::big, level_b);
  for (const auto& b : combo.background) {
    auto inst = make_instance(static_cast<AppId>(w.apps.size()), library.at(b.app), 0.0, 0.0);
    inst.endless = true;
    w.apps.push_back(std::move(inst));
    w.platform.assign(w.apps.back(), b.core);
  }
  const auto steps = std::llround(cfg.warmup_s / platform.dt);
  for (long long s = 0; s < steps; ++s) w.platform.step(w.apps);
  return w;
}

TracePoint run_aoi(WarmState w, const std::shared_ptr<const AppModel>& model, int core, const TraceConfig& cfg) {
  auto inst = make_instance(static_cast<AppId>(w.apps.size()), model, 0.0, w.platform.state().time, 1.0);
  inst.total_instructions = cfg.aoi_instructions;
  w.apps.push_back(std::move(inst));
  auto& a = w.apps.back();
  w.platform.assign(a, core);
  const double t_end = w.platform.state().time + cfg.max_trace_s;
  double peak = w.platform.peak_temperature();
  while (!a.finished() && w.platform.state().time < t_end) {
    w.platform.step(w.apps);
    peak = std::max(peak, w.platform.peak_temperature());
  }
  if (!a.finished()) throw std::runtime_error("trace of " + model->name + " exceeded max_trace_s");
  return {a.window_instructions / a.window_time, a.window_l2d / a.window_time, peak};
}

}  // namespace

ComboTraces collect_traces(const Combo& combo, const PlatformConfig& platform, const AppLibrary& library,
                           const TraceConfig& cfg, TraceStore& store) {
  ComboTraces t;
  t.scenario = combo.id;
  t.aoi = combo.aoi;
  t.occupied = combo.occupied();
  for (int l : cfg.levels_l) t.freqs_l.push_back(platform.cluster(ClusterId::little).freq(l));
  for (int l : cfg.levels_b) t.freqs_b.push_back(platform.cluster(ClusterId::big).freq(l));
  const auto aoi_model = library.at(combo.aoi);

  struct Task {
    int core, li, bi;
  };
  std::vector<Task> tasks;
  for (int c : t.free_cores())
    for (int li = 0; li < static_cast<int>(t.freqs_l.size()); ++li)
      for (int bi = 0; bi < static_cast<int>(t.freqs_b.size()); ++bi) tasks.push_back({c, li, bi});
  std::seed_seq seq{cfg.seed, fnv1a(combo.id)};
  std::mt19937_64 rng(seq);
  std::shuffle(tasks.begin(), tasks.end(), rng);

  std::map<std::pair<int, int>, WarmState> warm;
  for (const auto& task : tasks) {
    const auto key = TraceStore::key(combo, task.core, t.freqs_l[static_cast<std::size_t>(task.li)],
                                     t.freqs_b[static_cast<std::size_t>(task.bi)]);
    if (auto hit = store.find(key)) {
      t.set(task.core, task.li, task.bi, *hit);
      continue;
    }
    auto it = warm.find({task.li, task.bi});
    if (it == warm.end())
      it = warm.emplace(std::pair{task.li, task.bi},
                        warm_up(combo, platform, library, cfg, cfg.levels_l[static_cast<std::size_t>(task.li)],
                                cfg.levels_b[static_cast<std::size_t>(task.bi)]))
               .first;
    const auto p = run_aoi(it->second, aoi_model, task.core, cfg);
    store.count_simulation();
    store.insert(key, p);
    t.set(task.core, task.li, task.bi, p);
  }
  return t;
}

void write_trace_csv(const std::filesystem::path& path, const ComboTraces& traces) {
  csv::Writer w(path, {"aoi", "core_j", "f_l", "f_b", "q_mips", "l2d", "peak_t"});
  for (int c : traces.free_cores())
    for (int li = 0; li < static_cast<int>(traces.freqs_l.size()); ++li)
      for (int bi = 0; bi < static_cast<int>(traces.freqs_b.size()); ++bi) {
        const auto& p = traces.at(c, li, bi);
        w.cell(traces.aoi).cell(c).cell(traces.freqs_l[static_cast<std::size_t>(li)]);
        w.cell(traces.freqs_b[static_cast<std::size_t>(bi)]).cell(p.q / 1e6).cell(p.l2d).cell(p.peak_t);
        w.end_row();
      }
}

ComboTraces load_trace_csv(const std::filesystem::path& path, const std::string& scenario,
                           const std::array<bool, kNumCores>& occupied) {
  const auto tab = csv::Table::read(path);
  const auto ca = tab.column("aoi"), cc = tab.column("core_j"), cl = tab.column("f_l"), cb = tab.column("f_b"),
             cq = tab.column("q_mips"), cd = tab.column("l2d"), ct = tab.column("peak_t");
  ComboTraces t;
  t.scenario = scenario;
  t.occupied = occupied;
  std::set<double> fl, fb;
  for (std::size_t r = 0; r < tab.rows(); ++r) {
    fl.insert(tab.num(r, cl));
    fb.insert(tab.num(r, cb));
  }
  t.freqs_l.assign(fl.begin(), fl.end());
  t.freqs_b.assign(fb.begin(), fb.end());
  for (std::size_t r = 0; r < tab.rows(); ++r) {
    if (t.aoi.empty()) t.aoi = tab.str(r, ca);
    const int core = static_cast<int>(tab.num(r, cc));
    if (core < 0 || core >= kNumCores || occupied[static_cast<std::size_t>(core)])
      throw std::runtime_error("trace csv: row for occupied or invalid core " + std::to_string(core));
    const auto li = std::distance(t.freqs_l.begin(), std::find(t.freqs_l.begin(), t.freqs_l.end(), tab.num(r, cl)));
    const auto bi = std::distance(t.freqs_b.begin(), std::find(t.freqs_b.begin(), t.freqs_b.end(), tab.num(r, cb)));
    t.set(core, static_cast<int>(li), static_cast<int>(bi), {tab.num(r, cq) * 1e6, tab.num(r, cd), tab.num(r, ct)});
  }
  return t;
}

}  // namespace topil
