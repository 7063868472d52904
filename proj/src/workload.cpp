#include "topil/workload.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "topil/csv.hpp"

namespace topil {

std::string_view to_string(ClusterId c) { return c == ClusterId::little ? "LITTLE" : "big"; }

std::string_view to_string(Cooling c) { return c == Cooling::fan ? "fan" : "nofan"; }

Cooling parse_cooling(std::string_view s) {
  if (s == "fan") return Cooling::fan;
  if (s == "nofan" || s == "no_fan" || s == "no-fan") return Cooling::no_fan;
  throw std::invalid_argument("unknown cooling variant '" + std::string(s) + "'");
}

double ips(const PhaseSpec& phase, ClusterId cluster, double f_ghz) {
  const double ipc = cluster == ClusterId::big ? phase.ipc_big : phase.ipc_little;
  return ipc * f_ghz * 1e9 / (1.0 + phase.mem_intensity * f_ghz / kMemSaturationGhz);
}

double ips(const AppModel& model, std::size_t phase, ClusterId cluster, double f_ghz) {
  return ips(model.phases.at(phase), cluster, f_ghz);
}

void AppModel::validate() const {
  if (name.empty()) throw std::invalid_argument("app model without a name");
  if (phases.empty()) throw std::invalid_argument("app model '" + name + "' has no phases");
  if (!(total_instructions > 0.0)) throw std::invalid_argument("app model '" + name + "': total_instructions <= 0");
  double sum = 0.0;
  for (const auto& p : phases) {
    if (!(p.fraction > 0.0)) throw std::invalid_argument("app model '" + name + "': phase fraction <= 0");
    if (!(p.ipc_little > 0.0) || !(p.ipc_big > 0.0))
      throw std::invalid_argument("app model '" + name + "': ipc must be positive");
    if (p.ipc_big < 0.5 * p.ipc_little)
      throw std::invalid_argument("app model '" + name + "': big ipc below half of LITTLE ipc");
    if (p.mem_intensity < 0.0) throw std::invalid_argument("app model '" + name + "': negative mem_intensity");
    if (p.l2d_rate < 0.0) throw std::invalid_argument("app model '" + name + "': negative l2d_rate");
    if (p.activity < 0.0 || p.activity > 1.0)
      throw std::invalid_argument("app model '" + name + "': activity outside [0,1]");
    sum += p.fraction;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("app model '" + name + "': phase fractions do not sum to 1");
}

std::size_t AppModel::phase_at(double executed, double total) const {
  if (phases.size() == 1 || total <= 0.0) return 0;
  double pos = executed / total;
  pos -= std::floor(pos);  // endless instances wrap around
  double acc = 0.0;
  for (std::size_t i = 0; i < phases.size(); ++i) {
    acc += phases[i].fraction;
    if (pos < acc) return i;
  }
  return phases.size() - 1;
}

double AppModel::average_ips(ClusterId cluster, double f_ghz) const {
  double seconds_per_instr = 0.0;
  for (const auto& p : phases) seconds_per_instr += p.fraction / ips(p, cluster, f_ghz);
  return 1.0 / seconds_per_instr;
}

double max_big_ips(const AppModel& model, double big_max_ghz) { return model.average_ips(ClusterId::big, big_max_ghz); }

std::size_t AppInstance::phase() const { return model ? model->phase_at(executed, total_instructions) : 0; }

AppInstance make_instance(AppId id, std::shared_ptr<const AppModel> model, double qos_target, double arrival,
                          double time_scale) {
  if (!model) throw std::invalid_argument("make_instance: null model");
  AppInstance a;
  a.id = id;
  a.total_instructions = model->total_instructions * time_scale;
  a.model = std::move(model);
  a.qos_target = qos_target;
  a.arrival = arrival;
  return a;
}

QosSample measure_qos(const AppInstance& instance, double window) {
  if (!(window > 0.0)) throw std::invalid_argument("measure_qos: window must be positive");
  return {instance.window_instructions / window, instance.window_l2d / window};
}

// ---------------------------------------------------------------------------

namespace {

AppModel single(std::string name, double ipc_big, double little_ratio, double mu, double l2d, double activity) {
  return AppModel{std::move(name), 1e8, {PhaseSpec{1.0, ipc_big * little_ratio, ipc_big, mu, l2d, activity}}};
}

PhaseSpec phase(double fraction, double ipc_big, double little_ratio, double mu, double l2d, double activity) {
  return PhaseSpec{fraction, ipc_big * little_ratio, ipc_big, mu, l2d, activity};
}

}  // namespace

AppLibrary::AppLibrary(std::vector<AppModel> models) {
  for (auto& m : models) {
    m.validate();
    if (find(m.name)) throw std::invalid_argument("duplicate app model '" + m.name + "'");
    models_.push_back(std::make_shared<const AppModel>(std::move(m)));
  }
}

AppLibrary AppLibrary::defaults() {
  std::vector<AppModel> m;
  m.push_back(single("adi", 0.80, 0.41, 0.045, 6.0e7, 0.80));
  m.push_back(single("seidel-2d", 0.75, 0.65, 0.0, 1.5e7, 0.85));
  m.push_back(single("fdtd-2d", 0.90, 0.48, 0.15, 4.0e7, 0.80));
  m.push_back(single("floyd-warshall", 1.10, 0.58, 0.05, 2.5e7, 0.90));
  m.push_back(single("gramschmidt", 0.70, 0.45, 0.25, 5.0e7, 0.75));
  m.push_back(single("heat-3d", 0.85, 0.52, 0.40, 3.5e7, 0.75));
  m.push_back(single("syr2k", 1.30, 0.62, 0.10, 2.0e7, 0.95));
  m.push_back(single("jacobi-2d", 0.90, 0.47, 0.20, 4.5e7, 0.80));

  m.push_back({"blackscholes", 1e8, {phase(0.3, 1.20, 0.60, 0.02, 1.0e7, 0.90), phase(0.7, 1.00, 0.55, 0.05, 1.5e7, 0.90)}});
  m.push_back({"bodytrack", 1e8, {phase(0.5, 0.90, 0.50, 0.10, 3.0e7, 0.85), phase(0.5, 0.70, 0.45, 0.30, 5.0e7, 0.75)}});
  m.push_back({"canneal", 1e8, {phase(0.2, 0.50, 0.50, 0.80, 8.0e7, 0.60), phase(0.8, 0.40, 0.55, 1.50, 9.0e7, 0.55)}});
  m.push_back({"dedup",
               1e8,
               {phase(0.4, 0.80, 0.45, 0.30, 5.0e7, 0.80), phase(0.3, 1.00, 0.60, 0.10, 2.0e7, 0.85),
                phase(0.3, 0.60, 0.42, 0.50, 6.0e7, 0.70)}});
  m.push_back({"facesim", 1e8, {phase(0.5, 1.00, 0.50, 0.15, 4.0e7, 0.85), phase(0.5, 0.80, 0.60, 0.05, 2.0e7, 0.85)}});
  m.push_back({"ferret",
               1e8,
               {phase(0.3, 0.90, 0.50, 0.20, 4.0e7, 0.80), phase(0.4, 1.10, 0.55, 0.10, 3.0e7, 0.90),
                phase(0.3, 0.70, 0.45, 0.35, 5.5e7, 0.75)}});
  m.push_back(
      {"fluidanimate", 1e8, {phase(0.6, 0.95, 0.52, 0.12, 3.5e7, 0.85), phase(0.4, 0.85, 0.50, 0.20, 4.0e7, 0.80)}});
  m.push_back({"swaptions", 1e8, {phase(0.5, 1.25, 0.62, 0.0, 0.8e7, 0.95), phase(0.5, 1.15, 0.60, 0.02, 1.2e7, 0.95)}});
  return AppLibrary(std::move(m));
}

std::vector<std::string> training_app_names() {
  return {"adi", "seidel-2d", "fdtd-2d", "floyd-warshall", "gramschmidt", "heat-3d", "syr2k", "jacobi-2d"};
}

std::vector<std::string> evaluation_app_names() {
  return {"blackscholes", "bodytrack", "canneal", "dedup", "facesim", "ferret", "fluidanimate", "swaptions"};
}

std::vector<std::string> held_out_aoi_names() { return {"gramschmidt", "jacobi-2d"}; }

std::vector<std::string> all_app_names() {
  auto v = training_app_names();
  auto e = evaluation_app_names();
  v.insert(v.end(), e.begin(), e.end());
  return v;
}

std::shared_ptr<const AppModel> AppLibrary::find(std::string_view name) const {
  for (const auto& m : models_)
    if (m->name == name) return m;
  return nullptr;
}

std::shared_ptr<const AppModel> AppLibrary::at(std::string_view name) const {
  auto m = find(name);
  if (!m) throw std::out_of_range("unknown app model '" + std::string(name) + "'");
  return m;
}

std::vector<std::string> AppLibrary::names() const {
  std::vector<std::string> out;
  for (const auto& m : models_) out.push_back(m->name);
  return out;
}

AppLibrary AppLibrary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open app library " + path.string());
  auto j = nlohmann::json::parse(in);
  std::vector<AppModel> models;
  for (const auto& jm : j.at("apps")) {
    AppModel m;
    m.name = jm.at("name").get<std::string>();
    m.total_instructions = jm.value("total_instructions", 1e8);
    for (const auto& jp : jm.at("phases")) {
      PhaseSpec p;
      p.fraction = jp.at("fraction").get<double>();
      p.ipc_little = jp.at("ipc_little").get<double>();
      p.ipc_big = jp.at("ipc_big").get<double>();
      p.mem_intensity = jp.at("mem_intensity").get<double>();
      p.l2d_rate = jp.at("l2d_rate").get<double>();
      p.activity = jp.at("activity").get<double>();
      m.phases.push_back(p);
    }
    models.push_back(std::move(m));
  }
  return AppLibrary(std::move(models));
}

void AppLibrary::save(const std::filesystem::path& path) const {
  nlohmann::json apps = nlohmann::json::array();
  for (const auto& m : models_) {
    nlohmann::json phases = nlohmann::json::array();
    for (const auto& p : m->phases)
      phases.push_back({{"fraction", p.fraction},
                        {"ipc_little", p.ipc_little},
                        {"ipc_big", p.ipc_big},
                        {"mem_intensity", p.mem_intensity},
                        {"l2d_rate", p.l2d_rate},
                        {"activity", p.activity}});
    apps.push_back({{"name", m->name}, {"total_instructions", m->total_instructions}, {"phases", phases}});
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write app library " + path.string());
  out << nlohmann::json{{"format", "topil-apps"}, {"version", 1}, {"apps", apps}}.dump(2) << '\n';
}

// ---------------------------------------------------------------------------

void ScenarioSpec::validate() const {
  if (pool.empty()) throw std::invalid_argument("scenario: empty app pool");
  if (count < 1) throw std::invalid_argument("scenario: count must be >= 1");
  if (!(arrival_rate > 0.0)) throw std::invalid_argument("scenario: arrival rate must be positive");
  if (qos.low_fraction < 0.0 || qos.high_fraction < qos.low_fraction)
    throw std::invalid_argument("scenario: bad QoS fraction range");
}

std::vector<ScenarioApp> generate_scenario(const ScenarioSpec& spec, const AppLibrary& library) {
  spec.validate();
  std::seed_seq app_seq{spec.seed, std::uint64_t{0xA11}};
  std::seed_seq arrival_seq{spec.seed, std::uint64_t{0xA22}};
  std::seed_seq qos_seq{spec.seed, std::uint64_t{0xA33}};
  std::mt19937_64 app_rng(app_seq), arrival_rng(arrival_seq), qos_rng(qos_seq);

  std::uniform_int_distribution<std::size_t> pick(0, spec.pool.size() - 1);
  std::exponential_distribution<double> gap(spec.arrival_rate);
  std::uniform_real_distribution<double> qos(spec.qos.low_fraction, spec.qos.high_fraction);

  std::vector<ScenarioApp> out;
  out.reserve(static_cast<std::size_t>(spec.count));
  double t = 0.0;
  for (int i = 0; i < spec.count; ++i) {
    const auto& name = spec.pool[pick(app_rng)];
    const auto model = library.at(name);
    if (i > 0) t += gap(arrival_rng);
    out.push_back({name, qos(qos_rng) * max_big_ips(*model, spec.qos.reference_big_ghz), t});
  }
  return out;
}

void save_scenario_csv(const std::filesystem::path& path, std::span<const ScenarioApp> apps) {
  csv::Writer w(path, {"app", "qos_target_ips", "arrival_s"});
  for (const auto& a : apps) {
    w.cell(a.app).cell(a.qos_target).cell(a.arrival);
    w.end_row();
  }
}

std::vector<ScenarioApp> load_scenario_csv(const std::filesystem::path& path) {
  auto t = csv::Table::read(path);
  const auto c_app = t.column("app"), c_q = t.column("qos_target_ips"), c_t = t.column("arrival_s");
  std::vector<ScenarioApp> out;
  for (std::size_t r = 0; r < t.rows(); ++r) out.push_back({t.str(r, c_app), t.num(r, c_q), t.num(r, c_t)});
  return out;
}

}  // namespace topil
