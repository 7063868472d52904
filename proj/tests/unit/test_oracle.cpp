#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "topil/harness.hpp"
#include "util.hpp"

using namespace topil;

namespace {

const std::array<bool, kNumCores> kGoldenOccupied{true, true, true, false, true, true, false, true};

ComboTraces golden() {
  return load_trace_csv(std::string(TOPIL_FIXTURE_DIR) + "/golden_two_core_traces.csv", "golden", kGoldenOccupied);
}

const TrainingExample& from_core(const std::vector<TrainingExample>& rows, int core) {
  for (const auto& r : rows)
    if (r.features.mapped_core() == core) return r;
  throw std::runtime_error("no row for core");
}

// Tiny grid with fast traces for the simulator-backed cases.
TraceConfig quick_trace() {
  TraceConfig t;
  t.levels_l = {0, 6};
  t.levels_b = {0, 6};
  t.warmup_s = 1.0;
  t.aoi_instructions = 5e8;
  return t;
}

}  // namespace

TEST_SUITE("oracle") {
  TEST_CASE("golden traces load onto the two free cores") {
    const auto t = golden();
    CHECK(t.aoi == "aoi");
    CHECK(t.free_cores() == std::vector<int>{3, 6});
    CHECK(t.freqs_l == std::vector<double>{0.509, 1.402, 1.844});
    CHECK(t.freqs_b == std::vector<double>{0.682, 1.21, 1.498});
    CHECK(t.at(3, 2, 0).q == 471e6);
    CHECK(t.at(6, 1, 1).peak_t == 46.6);
    CHECK(t.max_q() == 563e6);
    CHECK_THROWS(t.at(0, 0, 0));
  }

  TEST_CASE("golden: Q 400 MIPS with LITTLE bound 1.402 GHz") {
    const auto t = golden();
    const auto c3 = select_vf(t, 3, 400e6, 1.402, 0.682);
    const auto c6 = select_vf(t, 6, 400e6, 1.402, 0.682);
    REQUIRE(c3);
    REQUIRE(c6);
    CHECK(*c3 == VfChoice{2, 0});
    CHECK(*c6 == VfChoice{1, 1});
    const auto rows = examples_for_sweep_point(t, {400e6, 1.402, 0.682});
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].labels[3] == doctest::Approx(1.00).epsilon(0.005));
    CHECK(rows[0].labels[6] == doctest::Approx(0.017).epsilon(0.05));
    CHECK(rows[0].core_temps[3] == 42.5);
    CHECK(rows[0].core_temps[6] == 46.6);
    CHECK(std::isnan(rows[0].core_temps[0]));

    const auto& r3 = from_core(rows, 3);
    CHECK(r3.features[feat::qos] == 471e6);
    CHECK(r3.features[feat::ratio_l] == doctest::Approx(0.76).epsilon(0.005));
    CHECK(r3.features[feat::ratio_b] == doctest::Approx(1.00));
    const auto& r6 = from_core(rows, 6);
    CHECK(r6.features[feat::qos] == 455e6);
    CHECK(r6.features[feat::ratio_l] == doctest::Approx(1.00));
    CHECK(r6.features[feat::ratio_b] == doctest::Approx(0.56).epsilon(0.01));
    const std::array<double, kNumCores> util{1, 1, 1, 0, 1, 1, 0, 1};
    for (int c = 0; c < kNumCores; ++c) {
      CHECK(r3.features[feat::utilization + c] == util[static_cast<std::size_t>(c)]);
      CHECK(r6.features[feat::utilization + c] == util[static_cast<std::size_t>(c)]);
    }
  }

  TEST_CASE("golden: Q 200 MIPS with both bounds raised gives a close second label") {
    const auto rows = examples_for_sweep_point(golden(), {200e6, 1.402, 1.21});
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].core_temps[3] == 46.2);
    CHECK(rows[0].core_temps[6] == 46.6);
    CHECK(rows[0].labels[3] == doctest::Approx(1.00));
    CHECK(std::abs(rows[0].labels[6] - 0.65) <= 0.03);
  }

  TEST_CASE("golden: Q 400 MIPS with big bound 1.498 GHz prefers the big core") {
    const auto rows = examples_for_sweep_point(golden(), {400e6, 0.509, 1.498});
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].core_temps[3] == 56.1);
    CHECK(rows[0].core_temps[6] == 52.2);
    CHECK(rows[0].labels[3] == doctest::Approx(0.02).epsilon(0.05));
    CHECK(rows[0].labels[6] == doctest::Approx(1.00));
  }

  TEST_CASE("golden: Q 500 MIPS is infeasible on the LITTLE core") {
    const auto t = golden();
    CHECK_FALSE(select_vf(t, 3, 500e6, 0.509, 0.682));
    const auto rows = examples_for_sweep_point(t, {500e6, 0.509, 0.682});
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].labels[3] == -1.0);
    CHECK(rows[0].labels[6] == doctest::Approx(1.00));
    CHECK(std::isinf(rows[0].core_temps[3]));
    const auto& r3 = from_core(rows, 3);
    CHECK(r3.features[feat::qos] == 471e6);
    CHECK(r3.features[feat::ratio_l] == doctest::Approx(0.28).epsilon(0.02));
    CHECK(r3.features[feat::ratio_b] == doctest::Approx(1.00));
    const auto& r6 = from_core(rows, 6);
    CHECK(r6.features[feat::qos] == 563e6);
    CHECK(r6.features[feat::ratio_l] == doctest::Approx(1.00));
    CHECK(r6.features[feat::ratio_b] == doctest::Approx(0.455).epsilon(0.005));
  }

  TEST_CASE("fully infeasible sweep point yields no rows") {
    CHECK(examples_for_sweep_point(golden(), {600e6, 0.509, 0.682}).empty());
  }

  TEST_CASE("compute_labels") {
    using K = CoreOutcome::Kind;
    std::array<CoreOutcome, kNumCores> o{};
    CHECK_FALSE(compute_labels(o));
    o[2] = {K::infeasible, 0.0};
    CHECK_FALSE(compute_labels(o));
    o[4] = {K::feasible, 50.0};
    o[5] = {K::feasible, 52.0};
    o[7] = {K::feasible, 50.0};
    const auto l = compute_labels(o);
    REQUIRE(l);
    CHECK((*l)[0] == 0.0);
    CHECK((*l)[2] == -1.0);
    CHECK((*l)[4] == 1.0);
    CHECK((*l)[7] == 1.0);
    CHECK((*l)[5] == doctest::Approx(std::exp(-2.0)));
    const auto sharp = compute_labels(o, 2.0);
    CHECK((*sharp)[5] == doctest::Approx(std::exp(-4.0)));
  }

  TEST_CASE("select_vf breaks temperature ties by the lower frequency sum") {
    ComboTraces t;
    t.aoi = "x";
    t.freqs_l = {1.0, 2.0};
    t.freqs_b = {1.0, 2.0};
    for (int c = 0; c < kNumCores; ++c) t.occupied[static_cast<std::size_t>(c)] = c != 0;
    t.set(0, 0, 0, {1e8, 0, 40.0});
    t.set(0, 0, 1, {5e8, 0, 45.0});
    t.set(0, 1, 0, {5e8, 0, 45.0});
    t.set(0, 1, 1, {6e8, 0, 45.0});
    CHECK(*select_vf(t, 0, 4e8, 0.0, 0.0) == VfChoice{1, 0});
    CHECK(*select_vf(t, 0, 4e8, 0.0, 1.5) == VfChoice{0, 1});
    CHECK(*select_vf(t, 0, 5.5e8, 0.0, 0.0) == VfChoice{1, 1});
    CHECK(*select_vf(t, 0, 1e8, 0.0, 0.0) == VfChoice{0, 0});
    CHECK_FALSE(select_vf(t, 0, 7e8, 0.0, 0.0));
  }

  TEST_CASE("Q sweep spans the configured fractions of the best grid IPS") {
    const auto t = golden();
    const auto qs = qos_sweep(t, ExtractConfig{});
    REQUIRE(qs.size() == 12);
    CHECK(qs.front() == doctest::Approx(0.1 * 563e6));
    CHECK(qs.back() == doctest::Approx(0.9 * 563e6));
    CHECK(std::is_sorted(qs.begin(), qs.end()));
  }

  TEST_CASE("extraction sweeps bounds only for clusters hosting background apps") {
    auto t = golden();
    // both clusters busy: 12 Q x 3 x 3 points, 2 rows each when feasible
    const auto rows = extract_training_data(t);
    CHECK(rows.size() <= 12u * 9u * 2u);
    CHECK(rows.size() > 12u * 2u);
    std::set<double> rl;
    for (const auto& r : rows) rl.insert(std::round(r.features[feat::ratio_l] * 1e6));
    CHECK(rl.size() > 1);

    ComboTraces lonely = t;
    lonely.occupied = {true, true, true, false, false, false, false, false};
    for (int c : {4, 5, 7})
      for (int li = 0; li < 3; ++li)
        for (int bi = 0; bi < 3; ++bi) lonely.set(c, li, bi, t.at(6, li, bi));
    std::size_t expected = 0;
    for (double Q : qos_sweep(lonely, ExtractConfig{}))
      for (double fl : lonely.freqs_l) expected += examples_for_sweep_point(lonely, {Q, fl, 0.682}).size();
    CHECK(extract_training_data(lonely).size() == expected);
  }

  TEST_CASE("combos are reproducible and always leave a free core") {
    ComboSpec s;
    s.aois = training_app_names();
    s.background = training_app_names();
    s.backgrounds_per_aoi = 6;
    const auto a = generate_combos(s), b = generate_combos(s);
    REQUIRE(a.size() == 48);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].background_key() == b[i].background_key());
      CHECK(static_cast<int>(a[i].background.size()) == static_cast<int>(i % 6));
      int free = 0;
      for (bool o : a[i].occupied()) free += !o;
      CHECK(free >= kNumCores - 5);
    }
    s.max_background = kNumCores;
    CHECK_THROWS_AS(generate_combos(s), std::invalid_argument);
  }

  TEST_CASE("trace collection memoizes every simulated point") {
    const auto lib = AppLibrary::defaults();
    const auto cfg = PlatformConfig::defaults();
    const Combo combo{"c0", "syr2k", {{"adi", 1}, {"jacobi-2d", 5}}};
    TraceStore store;
    const auto tc = quick_trace();
    const auto first = collect_traces(combo, cfg, lib, tc, store);
    CHECK(store.simulations() == 6 * 4);
    CHECK(store.size() == 6 * 4);
    const auto again = collect_traces(combo, cfg, lib, tc, store);
    CHECK(store.simulations() == 6 * 4);
    for (int c : first.free_cores())
      for (int li = 0; li < 2; ++li)
        for (int bi = 0; bi < 2; ++bi) {
          CHECK(first.at(c, li, bi).q == again.at(c, li, bi).q);
          CHECK(first.at(c, li, bi).peak_t == again.at(c, li, bi).peak_t);
        }

    // a different Q sweep needs no further simulation
    ExtractConfig few;
    few.qos_points = 3;
    CHECK(extract_training_data(first, few).size() < extract_training_data(first).size());
    CHECK(store.simulations() == 6 * 4);
  }

  TEST_CASE("traces behave physically") {
    const auto lib = AppLibrary::defaults();
    const auto cfg = PlatformConfig::defaults();
    TraceStore store;
    const auto t = collect_traces(Combo{"c1", "syr2k", {}}, cfg, lib, quick_trace(), store);
    // q grows with the frequency of the core's own cluster and ignores the other one
    CHECK(t.at(0, 1, 0).q > t.at(0, 0, 0).q);
    CHECK(t.at(0, 0, 1).q == doctest::Approx(t.at(0, 0, 0).q));
    CHECK(t.at(4, 0, 1).q > t.at(4, 0, 0).q);
    CHECK(t.at(4, 0, 0).q == doctest::Approx(ips(*lib.at("syr2k"), 0, ClusterId::big, 0.7)));
    CHECK(t.at(4, 1, 1).peak_t > t.at(4, 0, 0).peak_t);
  }

  TEST_CASE("file round-trips") {
    const auto dir = testutil::scratch("oracle_files");
    const auto t = golden();
    write_trace_csv(dir / "t.csv", t);
    const auto back = load_trace_csv(dir / "t.csv", "golden", kGoldenOccupied);
    for (int c : t.free_cores())
      for (int li = 0; li < 3; ++li)
        for (int bi = 0; bi < 3; ++bi) {
          CHECK(back.at(c, li, bi).q == t.at(c, li, bi).q);
          CHECK(back.at(c, li, bi).peak_t == t.at(c, li, bi).peak_t);
        }

    const auto rows = extract_training_data(t);
    write_training_csv(dir / "rows.csv", rows);
    const auto rb = load_training_csv(dir / "rows.csv");
    REQUIRE(rb.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      CHECK(rb[i].scenario == rows[i].scenario);
      CHECK(rb[i].features.v == rows[i].features.v);
      CHECK(rb[i].labels == rows[i].labels);
      for (int c = 0; c < kNumCores; ++c) {
        const double a = rows[i].core_temps[static_cast<std::size_t>(c)], b = rb[i].core_temps[static_cast<std::size_t>(c)];
        CHECK(((std::isnan(a) && std::isnan(b)) || a == b));
      }
    }

    ComboSpec s;
    s.aois = {"adi"};
    s.background = training_app_names();
    const auto combos = generate_combos(s);
    save_combos_csv(dir / "c.csv", combos);
    const auto cb = load_combos_csv(dir / "c.csv");
    REQUIRE(cb.size() == combos.size());
    for (std::size_t i = 0; i < combos.size(); ++i) {
      CHECK(cb[i].id == combos[i].id);
      CHECK(cb[i].background_key() == combos[i].background_key());
    }
  }

  TEST_CASE("forty combinations yield at least 5000 training rows") {
    const auto lib = AppLibrary::defaults();
    const auto cfg = PlatformConfig::defaults();
    auto p = PipelineConfig::defaults();
    p.combos.backgrounds_per_aoi = 5;
    p.held_out.clear();
    const auto data = generate_training_data(p, cfg, lib);
    CHECK(data.combos.size() >= 40);
    CHECK(data.train.size() >= 5000);
    CHECK(data.test.empty());
    long long expected = 0;
    for (const auto& t : data.traces)
      expected += static_cast<long long>(t.free_cores().size() * t.freqs_l.size() * t.freqs_b.size());
    CHECK(data.simulations == expected);
  }
}
