// features.hpp - 21-value AoI feature vector and minimum-frequency estimates
#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "topil/platform.hpp"

namespace topil {

inline constexpr int kNumFeatures = 21;

namespace feat {
inline constexpr int qos = 0;         // q of the AoI, IPS
inline constexpr int l2d = 1;         // L2D accesses/s of the AoI
inline constexpr int mapping = 2;     // 8 one-hot entries
inline constexpr int qos_target = 10;  // Q of the AoI, IPS
inline constexpr int ratio_l = 11;
inline constexpr int ratio_b = 12;
inline constexpr int utilization = 13;  // 8 entries
}  // namespace feat

/// Raw (unnormalized) feature values in the fixed column order.
struct FeatureVector {
  std::array<double, kNumFeatures> v{};

  double operator[](int i) const { return v[static_cast<std::size_t>(i)]; }
  double& operator[](int i) { return v[static_cast<std::size_t>(i)]; }
  int mapped_core() const;
  static const std::array<std::string, kNumFeatures>& names();
};

/// Scale applied to IPS- and L2D-valued features before they reach the model.
struct Normalizer {
  double ref_ips = 1e9;
  double ref_l2d = 1e8;

  std::array<double, kNumFeatures> apply(const FeatureVector& f) const;
};

/// Largest average big-cluster IPS among the library's models at `big_max_ghz`.
double reference_ips(const AppLibrary& library, double big_max_ghz);

struct FreqEstimate {
  int level = 0;
  bool feasible = true;
};

/// Lowest level f of the cluster with q * f / f_cur >= Q. Infeasible (or q <= 0
/// with Q > 0) yields the highest level with feasible = false.
FreqEstimate estimate_min_freq(const ClusterSpec& cluster, double q, double f_cur, double Q);

/// Highest of the given per-app levels, or level 0 for none.
int required_level_without_aoi(std::span<const int> levels);

/// Assemble a feature vector. The AoI's own core reads utilization 0.
FeatureVector make_features(double q, double l2d, int core, double Q, double ratio_l, double ratio_b,
                            const std::array<double, kNumCores>& utilization);

/// Runtime snapshot of one running app, as observed through counters.
struct AppObservation {
  int core = -1;
  double q = 0.0;    // IPS over the last window
  double l2d = 0.0;  // accesses/s over the last window
  double Q = 0.0;
};

struct SystemObservation {
  std::array<int, kNumClusters> level{};
  std::array<double, kNumCores> utilization{};
  std::vector<AppObservation> apps;
};

/// Required level of `cluster` when apps[aoi] is excluded.
int required_level_without(const PlatformConfig& cfg, const SystemObservation& obs, ClusterId cluster,
                           std::size_t aoi);

FeatureVector extract_features(const PlatformConfig& cfg, const SystemObservation& obs, std::size_t aoi);

void write_features_csv(const std::filesystem::path& path, std::span<const FeatureVector> rows);

}  // namespace topil
