#include "topil/features.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "topil/csv.hpp"

namespace topil {

int FeatureVector::mapped_core() const {
  for (int c = 0; c < kNumCores; ++c)
    if ((*this)[feat::mapping + c] == 1.0) return c;
  return -1;
}

const std::array<std::string, kNumFeatures>& FeatureVector::names() {
  static const auto names = [] {
    std::array<std::string, kNumFeatures> n;
    n[feat::qos] = "q_ips";
    n[feat::l2d] = "l2d_per_s";
    for (int c = 0; c < kNumCores; ++c) n[static_cast<std::size_t>(feat::mapping + c)] = "map_" + std::to_string(c);
    n[feat::qos_target] = "qos_target_ips";
    n[feat::ratio_l] = "ratio_l";
    n[feat::ratio_b] = "ratio_b";
    for (int c = 0; c < kNumCores; ++c)
      n[static_cast<std::size_t>(feat::utilization + c)] = "util_" + std::to_string(c);
    return n;
  }();
  return names;
}

std::array<double, kNumFeatures> Normalizer::apply(const FeatureVector& f) const {
  auto out = f.v;
  out[feat::qos] /= ref_ips;
  out[feat::qos_target] /= ref_ips;
  out[feat::l2d] /= ref_l2d;
  return out;
}

double reference_ips(const AppLibrary& library, double big_max_ghz) {
  double best = 0.0;
  for (const auto& m : library.models()) best = std::max(best, max_big_ips(*m, big_max_ghz));
  return best;
}

FreqEstimate estimate_min_freq(const ClusterSpec& cluster, double q, double f_cur, double Q) {
  const int top = cluster.max_level();
  if (Q <= 0.0) return {0, true};
  if (q <= 0.0 || f_cur <= 0.0) return {top, false};
  auto meets = [&](int l) { return q * cluster.freq(l) / f_cur >= Q; };
  if (!meets(top)) return {top, false};
  // Predicate is monotone in the level.
  int lo = 0, hi = top;
  while (lo < hi) {
    const int mid = (lo + hi) / 2;
    if (meets(mid))
      hi = mid;
    else
      lo = mid + 1;
  }
  return {lo, true};
}

int required_level_without_aoi(std::span<const int> levels) {
  int best = 0;
  for (int l : levels) best = std::max(best, l);
  return best;
}

FeatureVector make_features(double q, double l2d, int core, double Q, double ratio_l, double ratio_b,
                            const std::array<double, kNumCores>& utilization) {
  if (core < 0 || core >= kNumCores) throw std::out_of_range("make_features: bad core");
  FeatureVector f;
  f[feat::qos] = q;
  f[feat::l2d] = l2d;
  f[feat::mapping + core] = 1.0;
  f[feat::qos_target] = Q;
  f[feat::ratio_l] = ratio_l;
  f[feat::ratio_b] = ratio_b;
  for (int c = 0; c < kNumCores; ++c)
    f[feat::utilization + c] = c == core ? 0.0 : utilization[static_cast<std::size_t>(c)];
  return f;
}

int required_level_without(const PlatformConfig& cfg, const SystemObservation& obs, ClusterId cluster,
                           std::size_t aoi) {
  const auto& spec = cfg.cluster(cluster);
  const double f_cur = spec.freq(obs.level[static_cast<std::size_t>(index_of(cluster))]);
  std::vector<int> levels;
  for (std::size_t k = 0; k < obs.apps.size(); ++k) {
    const auto& a = obs.apps[k];
    if (k == aoi || a.core < 0 || cluster_of(a.core) != cluster) continue;
    levels.push_back(estimate_min_freq(spec, a.q, f_cur, a.Q).level);
  }
  return required_level_without_aoi(levels);
}

FeatureVector extract_features(const PlatformConfig& cfg, const SystemObservation& obs, std::size_t aoi) {
  const auto& a = obs.apps.at(aoi);
  std::array<double, kNumClusters> ratio{};
  for (int c = 0; c < kNumClusters; ++c) {
    const auto cl = static_cast<ClusterId>(c);
    const auto& spec = cfg.cluster(cl);
    const int need = required_level_without(cfg, obs, cl, aoi);
    ratio[static_cast<std::size_t>(c)] = spec.freq(need) / spec.freq(obs.level[static_cast<std::size_t>(c)]);
  }
  return make_features(a.q, a.l2d, a.core, a.Q, ratio[0], ratio[1], obs.utilization);
}

void write_features_csv(const std::filesystem::path& path, std::span<const FeatureVector> rows) {
  const auto& n = FeatureVector::names();
  csv::Writer w(path, std::vector<std::string>(n.begin(), n.end()));
  for (const auto& r : rows) {
    for (double x : r.v) w.cell(x);
    w.end_row();
  }
}

}  // namespace topil
