// topil - command-line front end for trace collection, training and policy experiments
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "topil/csv.hpp"
#include "topil/harness.hpp"

namespace fs = std::filesystem;
using namespace topil;

namespace {

struct Global {
  std::string config;
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  std::string cooling = "fan";
  std::string policy = "topil";
};

struct Env {
  PlatformConfig platform;
  AppLibrary library;
  Cooling cooling = Cooling::fan;
  fs::path out;
};

// Config file: {"platform": "<platform.json>", "apps": "<apps.json>"}; paths relative to the file.
Env load_env(const Global& g) {
  Env e{PlatformConfig::defaults(), AppLibrary::defaults(), parse_cooling(g.cooling), g.out_dir};
  if (!g.config.empty()) {
    std::ifstream in(g.config);
    if (!in) throw std::runtime_error("cannot open config " + g.config);
    const auto j = nlohmann::json::parse(in);
    const fs::path base = fs::path(g.config).parent_path();
    if (j.contains("platform")) e.platform = PlatformConfig::load(base / j.at("platform").get<std::string>());
    if (j.contains("apps")) e.library = AppLibrary::load(base / j.at("apps").get<std::string>());
  }
  fs::create_directories(e.out);
  return e;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  for (auto& x : csv::split(s, ','))
    if (!x.empty()) out.push_back(x);
  return out;
}

std::vector<int> int_list(const std::string& s) {
  std::vector<int> out;
  for (const auto& x : split_list(s)) out.push_back(std::stoi(x));
  return out;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Input files are looked up in the output directory unless given as absolute paths.
PolicyAssets load_assets(const fs::path& dir, const std::vector<std::string>& models,
                         const std::vector<std::string>& tables) {
  PolicyAssets a;
  for (const auto& m : models) a.models.push_back(std::make_shared<const MlpModel>(MlpModel::load(dir / m)));
  for (const auto& t : tables) a.tables.push_back(QTable::load(dir / t));
  return a;
}

void print_report(const EvalReport& r) {
  std::printf("decisions %d  within 1C %d (%.1f %%)  infeasible %d  mean excess %.3f C\n", r.decisions, r.within_1c,
              100.0 * r.accuracy, r.infeasible_choices, r.mean_excess);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Thermal-aware big.LITTLE resource management: simulator, oracle, training and experiments"};
  app.require_subcommand(1);
  app.fallthrough();
  Global g;
  app.add_option("--config", g.config, "JSON file naming platform and app-library files");
  app.add_option("--seed", g.seed, "Seed for every randomized stage");
  app.add_option("--out-dir", g.out_dir, "Output directory");
  app.add_option("--cooling", g.cooling, "fan or nofan")->check(CLI::IsMember({"fan", "nofan"}));
  app.add_option("--policy", g.policy, "topil, rl, gts-ondemand or gts-powersave")->check(CLI::IsMember(policy_names()));

  // trace
  auto* trace = app.add_subcommand("trace", "Simulate oracle traces for seeded background combinations");
  int per_aoi = ComboSpec{}.backgrounds_per_aoi;
  std::string trace_out = "traces";
  trace->add_option("--scenarios", per_aoi, "Background combinations per AoI");
  trace->add_option("--out", trace_out, "Trace directory (inside the output directory)");

  // extract
  auto* extract = app.add_subcommand("extract", "Turn traces into labelled training and held-out test sets");
  std::string extract_in = "traces", extract_out = "train.csv", test_out = "test.csv", held = "";
  int qos_points = ExtractConfig{}.qos_points;
  extract->add_option("--traces", extract_in, "Trace directory written by `trace`");
  extract->add_option("--out", extract_out, "Training CSV");
  extract->add_option("--test-out", test_out, "Held-out CSV");
  extract->add_option("--held-out", held, "Comma-separated held-out AoIs (default: shipped split)");
  extract->add_option("--scenarios", qos_points, "QoS targets swept per combination");

  // train
  auto* trn = app.add_subcommand("train", "Train the rating network");
  std::string train_data = "train.csv", model_out = "model.bin", hidden = "64,64,64,64";
  TrainConfig tcfg;
  trn->add_option("--data", train_data, "Training CSV");
  trn->add_option("--out", model_out, "Model file");
  trn->add_option("--hidden", hidden, "Hidden layer widths");
  trn->add_option("--epochs", tcfg.max_epochs, "Maximum epochs");
  trn->add_option("--lr", tcfg.lr0, "Initial learning rate");
  trn->add_option("--batch", tcfg.batch_size, "Mini-batch size");
  trn->add_option("--patience", tcfg.patience, "Early-stopping patience");

  // nas
  auto* nas = app.add_subcommand("nas", "Grid search over depth and width");
  std::string nas_data = "train.csv", depths = "1,2,3,4,5,6", widths = "8,16,32,64,128";
  TrainConfig ncfg;
  ncfg.max_epochs = 100;
  nas->add_option("--data", nas_data, "Training CSV");
  nas->add_option("--depths", depths, "Hidden layer counts");
  nas->add_option("--widths", widths, "Hidden layer widths");
  nas->add_option("--epochs", ncfg.max_epochs, "Maximum epochs per candidate");

  // pretrain-rl
  auto* pre = app.add_subcommand("pretrain-rl", "Pretrain the Q-table on training-pool scenarios");
  PretrainConfig pcfg;
  std::string table_out = "qtable.bin";
  pre->add_option("--hours", pcfg.hours, "Simulated hours");
  pre->add_option("--rate", pcfg.arrival_rate, "Arrival rate (apps/s)");
  pre->add_option("--out", table_out, "Q-table file");

  // run
  auto* run = app.add_subcommand("run", "Run one scenario under one policy");
  std::string scenario_csv, model_in = "model.bin", table_in = "qtable.bin";
  double rate = 0.1;
  int count = 20;
  run->add_option("--scenario", scenario_csv, "Scenario CSV (app, qos_target, arrival); generated when omitted");
  run->add_option("--rate", rate, "Arrival rate of a generated scenario");
  run->add_option("--count", count, "Apps in a generated scenario");
  run->add_option("--model", model_in, "Model file for topil");
  run->add_option("--qtable", table_in, "Q-table file for rl");

  // compare
  auto* cmp = app.add_subcommand("compare", "Sweep policies over arrival rates and cooling variants");
  std::string models = "model_0.bin,model_1.bin,model_2.bin", tables = "qtable_0.bin,qtable_1.bin,qtable_2.bin";
  std::string policies = "topil,rl,gts-ondemand,gts-powersave", rates = "0.05,0.08,0.11,0.15", coolings = "fan,nofan";
  SweepConfig sweep;
  sweep.jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  bool assert_orderings = false;
  cmp->add_option("--models", models, "One model file per repetition");
  cmp->add_option("--qtables", tables, "One Q-table file per repetition");
  cmp->add_option("--policies", policies, "Policies to compare");
  cmp->add_option("--rates", rates, "Arrival rates (apps/s)");
  cmp->add_option("--coolings", coolings, "Cooling variants");
  cmp->add_option("--count", sweep.count, "Apps per scenario");
  cmp->add_option("--reps", sweep.repetitions, "Repetitions per cell");
  cmp->add_option("--jobs", sweep.jobs, "Worker threads");
  cmp->add_flag("--assert", assert_orderings, "Exit nonzero when an ordering check fails");

  // eval-model
  auto* ev = app.add_subcommand("eval-model", "Score a model against the brute-force oracle on held-out data");
  std::string eval_model = "model.bin", eval_data = "test.csv";
  ev->add_option("--model", eval_model, "Model file");
  ev->add_option("--data", eval_data, "Held-out CSV from `extract`");

  // overhead
  auto* ovh = app.add_subcommand("overhead", "Migration overhead of periodic big/LITTLE switching");
  std::string ovh_apps;
  OverheadConfig ocfg;
  ovh->add_option("--apps", ovh_apps, "Apps to measure (default: all)");
  ovh->add_option("--period", ocfg.period, "Seconds between migrations");

  auto* dflt = app.add_subcommand("defaults", "Write the built-in platform and app library as JSON");

  CLI11_PARSE(app, argc, argv);

  try {
    Env env = load_env(g);
    const auto t0 = std::chrono::steady_clock::now();

    if (*dflt) {
      fs::create_directories(env.out);
      env.platform.save(env.out / "platform_default.json");
      env.library.save(env.out / "apps_default.json");
      std::printf("wrote %s and %s\n", (env.out / "platform_default.json").c_str(), (env.out / "apps_default.json").c_str());
    } else if (*trace) {
      auto pc = PipelineConfig::defaults(g.seed);
      pc.combos.backgrounds_per_aoi = per_aoi;
      pc.trace.cooling = env.cooling;
      const auto combos = generate_combos(pc.combos);
      const fs::path dir = env.out / trace_out;
      fs::create_directories(dir);
      save_combos_csv(dir / "combos.csv", combos);
      TraceStore store;
      for (const auto& c : combos) write_trace_csv(dir / (c.id + ".csv"), collect_traces(c, env.platform, env.library, pc.trace, store));
      std::printf("%zu combinations, %lld simulations, %.1f s\n", combos.size(), store.simulations(), seconds_since(t0));
    } else if (*extract) {
      const fs::path dir = env.out / extract_in;
      const auto combos = load_combos_csv(dir / "combos.csv");
      const auto held_out = held.empty() ? held_out_aoi_names() : split_list(held);
      ExtractConfig ec;
      ec.qos_points = qos_points;
      std::vector<TrainingExample> tr, te;
      for (const auto& c : combos) {
        auto rows = extract_training_data(load_trace_csv(dir / (c.id + ".csv"), c.id, c.occupied()), ec);
        auto& dst = std::find(held_out.begin(), held_out.end(), c.aoi) != held_out.end() ? te : tr;
        dst.insert(dst.end(), rows.begin(), rows.end());
      }
      write_training_csv(env.out / extract_out, tr);
      write_training_csv(env.out / test_out, te);
      std::printf("%zu training rows, %zu held-out rows\n", tr.size(), te.size());
    } else if (*trn) {
      ModelSpec spec;
      spec.hidden = int_list(hidden);
      tcfg.seed = g.seed;
      const auto res = train_model(load_training_csv(env.out / train_data), env.library, env.platform, spec, tcfg);
      res.model.save(env.out / model_out);
      write_curve_csv(env.out / (fs::path(model_out).stem().string() + "_curve.csv"), res.curve);
      std::printf("best epoch %d, val mse %.5f, %.1f s\n", res.model.meta.best_epoch, res.model.meta.val_loss,
                  seconds_since(t0));
    } else if (*nas) {
      const auto examples = load_training_csv(env.out / nas_data);
      const auto& big = env.platform.cluster(ClusterId::big);
      const auto norm = fit_normalizer(examples, reference_ips(env.library, big.freq(big.max_level())));
      ncfg.seed = g.seed;
      const auto grid = grid_search(make_dataset(examples, norm), int_list(depths), int_list(widths), ncfg,
                                    {g.seed, g.seed + 1, g.seed + 2});
      write_grid_csv(env.out / "nas.csv", grid);
      for (const auto& e : grid) std::printf("%-8s %.5f +- %.5f\n", e.spec.label().c_str(), e.mean_val, e.std_val);
    } else if (*pre) {
      pcfg.seed = g.seed;
      pcfg.cooling = env.cooling;
      const auto res = pretrain_rl(pcfg, RlConfig{}, env.platform, env.library);
      res.table.save(env.out / table_out);
      csv::Writer w(env.out / "pretrain_deltas.csv", {"scenario", "max_abs_delta"});
      for (std::size_t i = 0; i < res.deltas.size(); ++i) w.cell(static_cast<long long>(i)).cell(res.deltas[i]).end_row();
      std::printf("%d scenarios, %.2f h simulated, %.1f s\n", res.scenarios, res.simulated_s / 3600.0, seconds_since(t0));
    } else if (*run) {
      std::vector<ScenarioApp> scenario;
      if (!scenario_csv.empty()) {
        scenario = load_scenario_csv(env.out / scenario_csv);
      } else {
        ScenarioSpec s;
        s.seed = g.seed;
        s.pool = all_app_names();
        s.count = count;
        s.arrival_rate = rate;
        scenario = generate_scenario(s, env.library);
        save_scenario_csv(env.out / "scenario.csv", scenario);
      }
      PolicyAssets assets;
      if (g.policy == "topil") assets = load_assets(env.out, {model_in}, {});
      if (g.policy == "rl") assets = load_assets(env.out, {}, {table_in});
      auto policy = make_policy(g.policy, assets, 0);
      RunConfig rc;
      rc.keep_log = rc.keep_trace = true;
      auto r = run_experiment(scenario, *policy, env.platform, env.cooling, env.library, rc);
      r.seed = g.seed;
      r.arrival_rate = rate;
      write_result_json(env.out / "result.json", r);
      write_app_records_csv(env.out / "apps.csv", r);
      write_decision_log(env.out / "decisions.csv", r.log);
      write_temperature_trace(env.out / "temperature.csv", r.trace);
      std::printf("%s: avg %.2f C, peak %.2f C, violations %d/%zu, migrations %d, %.1f s simulated\n", r.policy.c_str(),
                  r.avg_temp, r.peak_temp, r.violations, r.apps.size(), r.migrations, r.duration);
    } else if (*cmp) {
      sweep.policies = split_list(policies);
      if (sweep.policies.size() < 2) throw std::invalid_argument("compare needs at least two policies");
      sweep.rates.clear();
      for (const auto& x : split_list(rates)) sweep.rates.push_back(std::stod(x));
      sweep.coolings.clear();
      for (const auto& x : split_list(coolings)) sweep.coolings.push_back(parse_cooling(x));
      sweep.scenario_seed = g.seed;
      const bool need_models = std::count(sweep.policies.begin(), sweep.policies.end(), "topil") > 0;
      const bool need_tables = std::count(sweep.policies.begin(), sweep.policies.end(), "rl") > 0;
      const auto assets = load_assets(env.out, need_models ? split_list(models) : std::vector<std::string>{},
                                      need_tables ? split_list(tables) : std::vector<std::string>{});
      const auto results = run_sweep(sweep, assets, env.platform, env.library);
      const auto cells = summarize(results);
      write_results_csv(env.out / "results.csv", results);
      write_summary_csv(env.out / "summary.csv", cells);
      for (Cooling c : sweep.coolings) {
        const std::string cs(to_string(c));
        write_bar_svg(env.out / ("avg_temp_" + cs + ".svg"), cells, "avg_temp", cs);
        write_bar_svg(env.out / ("violations_" + cs + ".svg"), cells, "violations", cs);
        write_histogram_svg(env.out / ("cpu_time_" + cs + ".svg"), cells, cs, env.platform);
      }
      for (const auto& c : cells)
        std::printf("%-6s %.2f %-14s avgT %6.2f +- %.2f  violations %5.2f +- %.2f  migrations %6.1f\n", c.cooling.c_str(),
                    c.rate, c.policy.c_str(), c.avg_temp.mean, c.avg_temp.std, c.violations.mean, c.violations.std,
                    c.migrations.mean);
      if (assert_orderings) {
        bool ok = true;
        for (const auto& chk : check_orderings(cells, env.platform)) {
          std::printf("%s %s (%s)\n", chk.pass ? "PASS" : "FAIL", chk.name.c_str(), chk.detail.c_str());
          ok = ok && chk.pass;
        }
        if (!ok) return 1;
      }
      std::printf("%zu runs, %.1f s\n", results.size(), seconds_since(t0));
    } else if (*ev) {
      const auto model = MlpModel::load(env.out / eval_model);
      const auto rep = evaluate_decisions(load_training_csv(env.out / eval_data),
                                          [&](const auto& rows) { return model.rate(rows); });
      print_report(rep);
    } else if (*ovh) {
      const auto names = ovh_apps.empty() ? env.library.names() : split_list(ovh_apps);
      csv::Writer w(env.out / "overhead.csv", {"app", "rep", "t_big_s", "t_little_s", "t_migrate_s", "migrations", "m"});
      for (const auto& name : names) {
        const auto reps = migration_overhead_reps(env.library.at(name), env.platform, ocfg);
        std::vector<double> ms;
        for (std::size_t i = 0; i < reps.size(); ++i) {
          const auto& r = reps[i];
          w.cell(name).cell(static_cast<long long>(i)).cell(r.t_big).cell(r.t_little).cell(r.t_migrate).cell(r.migrations).cell(r.m);
          w.end_row();
          ms.push_back(r.m);
        }
        const auto s = mean_std(ms);
        std::printf("%-14s m = %.3f %% +- %.3f %%\n", name.c_str(), 100 * s.mean, 100 * s.std);
      }
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
