#include "topil/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include "topil/csv.hpp"

namespace topil {

namespace {

constexpr char kMagic[8] = {'T', 'O', 'P', 'I', 'L', 'M', 'L', 'P'};
constexpr std::uint32_t kVersion = 1;

std::vector<int> layer_dims(const ModelSpec& s) {
  std::vector<int> d{s.input_dim};
  d.insert(d.end(), s.hidden.begin(), s.hidden.end());
  d.push_back(s.output_dim);
  return d;
}

}  // namespace

void ModelSpec::validate() const {
  if (input_dim < 1 || output_dim < 1) throw std::invalid_argument("model spec: dims must be >= 1");
  for (int w : hidden)
    if (w < 1) throw std::invalid_argument("model spec: hidden widths must be >= 1");
}

std::string ModelSpec::label() const {
  if (hidden.empty()) return "linear";
  bool uniform = std::all_of(hidden.begin(), hidden.end(), [&](int w) { return w == hidden.front(); });
  if (uniform) return std::to_string(hidden.size()) + "x" + std::to_string(hidden.front());
  std::string s;
  for (int w : hidden) s += (s.empty() ? "" : "-") + std::to_string(w);
  return s;
}

void TrainConfig::validate() const {
  if (!(lr0 > 0.0)) throw std::invalid_argument("train config: lr0 must be positive");
  if (!(decay > 0.0 && decay < 1.0)) throw std::invalid_argument("train config: decay must be in (0,1)");
  if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
  if (max_epochs < 1) throw std::invalid_argument("train config: max_epochs must be >= 1");
  if (patience < 1) throw std::invalid_argument("train config: patience must be >= 1");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw std::invalid_argument("train config: val_fraction in (0,1)");
}

MlpModel::MlpModel(ModelSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  const auto d = layer_dims(spec_);
  for (std::size_t i = 0; i + 1 < d.size(); ++i)
    layers_.push_back({Eigen::MatrixXd::Zero(d[i + 1], d[i]), Eigen::VectorXd::Zero(d[i + 1])});
}

MlpModel MlpModel::he_init(ModelSpec spec, std::uint64_t seed) {
  MlpModel m(std::move(spec));
  std::mt19937_64 rng(seed);
  for (auto& l : m.layers_) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(l.W.cols())));
    for (Eigen::Index i = 0; i < l.W.rows(); ++i)
      for (Eigen::Index j = 0; j < l.W.cols(); ++j) l.W(i, j) = dist(rng);
  }
  m.meta.seed = seed;
  return m;
}

Eigen::MatrixXd MlpModel::infer_batch(const Eigen::MatrixXd& rows) const {
  if (rows.cols() != spec_.input_dim)
    throw std::invalid_argument("infer_batch: expected " + std::to_string(spec_.input_dim) + " columns, got " +
                                std::to_string(rows.cols()));
  if (!rows.allFinite()) throw std::invalid_argument("infer_batch: non-finite input");
  Eigen::MatrixXd out(rows.rows(), spec_.output_dim);
  std::vector<double> a, z;
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    a.resize(static_cast<std::size_t>(rows.cols()));
    for (Eigen::Index j = 0; j < rows.cols(); ++j) a[static_cast<std::size_t>(j)] = rows(r, j);
    for (std::size_t li = 0; li < layers_.size(); ++li) {
      const auto& L = layers_[li];
      z.assign(L.b.data(), L.b.data() + L.b.size());
      for (Eigen::Index i = 0; i < L.W.cols(); ++i) {
        const double ai = a[static_cast<std::size_t>(i)];
        const double* col = L.W.data() + i * L.W.rows();
        for (Eigen::Index o = 0; o < L.W.rows(); ++o) z[static_cast<std::size_t>(o)] += col[o] * ai;
      }
      if (li + 1 < layers_.size())
        for (auto& v : z) v = v > 0.0 ? v : 0.0;
      a.swap(z);
    }
    for (Eigen::Index o = 0; o < spec_.output_dim; ++o) out(r, o) = a[static_cast<std::size_t>(o)];
  }
  return out;
}

Eigen::MatrixXd MlpModel::rate(const std::vector<FeatureVector>& rows) const {
  Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), spec_.input_dim);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto n = normalizer.apply(rows[r]);
    for (int j = 0; j < spec_.input_dim; ++j) X(static_cast<Eigen::Index>(r), j) = n[static_cast<std::size_t>(j)];
  }
  return infer_batch(X);
}

bool MlpModel::operator==(const MlpModel& o) const {
  if (!(spec_ == o.spec_) || layers_.size() != o.layers_.size()) return false;
  if (normalizer.ref_ips != o.normalizer.ref_ips || normalizer.ref_l2d != o.normalizer.ref_l2d) return false;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    if (layers_[i].W != o.layers_[i].W || layers_[i].b != o.layers_[i].b) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw std::runtime_error("model file truncated: " + path.string());
  return v;
}

}  // namespace

void MlpModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write model " + path.string());
  out.write(kMagic, sizeof kMagic);
  put(out, kVersion);
  put(out, static_cast<std::uint32_t>(spec_.input_dim));
  put(out, static_cast<std::uint32_t>(spec_.output_dim));
  put(out, static_cast<std::uint32_t>(spec_.hidden.size()));
  for (int w : spec_.hidden) put(out, static_cast<std::uint32_t>(w));
  put(out, normalizer.ref_ips);
  put(out, normalizer.ref_l2d);
  put(out, meta.seed);
  put(out, static_cast<std::int32_t>(meta.final_epoch));
  put(out, static_cast<std::int32_t>(meta.best_epoch));
  put(out, meta.val_loss);
  for (const auto& L : layers_) {
    for (Eigen::Index i = 0; i < L.W.rows(); ++i)
      for (Eigen::Index j = 0; j < L.W.cols(); ++j) put(out, L.W(i, j));
    for (Eigen::Index i = 0; i < L.b.size(); ++i) put(out, L.b(i));
  }
  if (!out) throw std::runtime_error("failed writing model " + path.string());
}

MlpModel MlpModel::load(const std::filesystem::path& path, std::optional<int> input_dim, std::optional<int> output_dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open model " + path.string());
  char magic[sizeof kMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw std::runtime_error("not a model file: " + path.string());
  const auto version = get<std::uint32_t>(in, path);
  if (version != kVersion)
    throw std::runtime_error("unsupported model version " + std::to_string(version) + " in " + path.string());
  ModelSpec spec;
  spec.input_dim = static_cast<int>(get<std::uint32_t>(in, path));
  spec.output_dim = static_cast<int>(get<std::uint32_t>(in, path));
  const auto depth = get<std::uint32_t>(in, path);
  if (depth > 64) throw std::runtime_error("implausible hidden depth in " + path.string());
  spec.hidden.clear();
  for (std::uint32_t i = 0; i < depth; ++i) spec.hidden.push_back(static_cast<int>(get<std::uint32_t>(in, path)));
  if (input_dim && spec.input_dim != *input_dim)
    throw std::runtime_error("model input_dim " + std::to_string(spec.input_dim) + " does not match expected " +
                             std::to_string(*input_dim));
  if (output_dim && spec.output_dim != *output_dim)
    throw std::runtime_error("model output_dim " + std::to_string(spec.output_dim) + " does not match expected " +
                             std::to_string(*output_dim));
  MlpModel m(spec);
  m.normalizer.ref_ips = get<double>(in, path);
  m.normalizer.ref_l2d = get<double>(in, path);
  m.meta.seed = get<std::uint64_t>(in, path);
  m.meta.final_epoch = get<std::int32_t>(in, path);
  m.meta.best_epoch = get<std::int32_t>(in, path);
  m.meta.val_loss = get<double>(in, path);
  for (auto& L : m.layers_) {
    for (Eigen::Index i = 0; i < L.W.rows(); ++i)
      for (Eigen::Index j = 0; j < L.W.cols(); ++j) L.W(i, j) = get<double>(in, path);
    for (Eigen::Index i = 0; i < L.b.size(); ++i) L.b(i) = get<double>(in, path);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw std::runtime_error("trailing bytes in model " + path.string());
  return m;
}

// ---------------------------------------------------------------------------
// Data

Dataset Dataset::subset(const std::vector<Eigen::Index>& idx) const {
  Dataset d;
  d.X.resize(static_cast<Eigen::Index>(idx.size()), X.cols());
  d.Y.resize(static_cast<Eigen::Index>(idx.size()), Y.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    d.X.row(static_cast<Eigen::Index>(r)) = X.row(idx[r]);
    d.Y.row(static_cast<Eigen::Index>(r)) = Y.row(idx[r]);
    if (!groups.empty()) d.groups.push_back(groups[static_cast<std::size_t>(idx[r])]);
  }
  return d;
}

Dataset make_dataset(const std::vector<TrainingExample>& examples, const Normalizer& norm) {
  Dataset d;
  const auto n = static_cast<Eigen::Index>(examples.size());
  d.X.resize(n, kNumFeatures);
  d.Y.resize(n, kNumCores);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& e = examples[static_cast<std::size_t>(r)];
    const auto x = norm.apply(e.features);
    for (int j = 0; j < kNumFeatures; ++j) d.X(r, j) = x[static_cast<std::size_t>(j)];
    for (int j = 0; j < kNumCores; ++j) d.Y(r, j) = e.labels[static_cast<std::size_t>(j)];
    d.groups.push_back(e.scenario);
  }
  return d;
}

Normalizer fit_normalizer(const std::vector<TrainingExample>& examples, double ref_ips) {
  if (examples.empty()) throw std::invalid_argument("fit_normalizer: no examples");
  std::vector<double> l2d;
  for (const auto& e : examples) l2d.push_back(e.features[feat::l2d]);
  const auto k = static_cast<std::size_t>(std::floor(0.95 * static_cast<double>(l2d.size() - 1)));
  std::nth_element(l2d.begin(), l2d.begin() + static_cast<std::ptrdiff_t>(k), l2d.end());
  Normalizer n;
  n.ref_ips = ref_ips;
  n.ref_l2d = l2d[k] > 0.0 ? l2d[k] : 1.0;
  return n;
}

std::pair<Dataset, Dataset> split_stratified(const Dataset& data, double fraction, std::uint64_t seed) {
  std::map<std::string, std::vector<Eigen::Index>> by_group;
  for (Eigen::Index r = 0; r < data.rows(); ++r)
    by_group[data.groups.empty() ? std::string() : data.groups[static_cast<std::size_t>(r)]].push_back(r);
  std::mt19937_64 rng(seed ^ 0x5151u);
  std::vector<Eigen::Index> tr, va;
  for (auto& [g, idx] : by_group) {
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto nv = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(idx.size())));
    va.insert(va.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(nv));
    tr.insert(tr.end(), idx.begin() + static_cast<std::ptrdiff_t>(nv), idx.end());
  }
  std::sort(tr.begin(), tr.end());
  std::sort(va.begin(), va.end());
  return {data.subset(tr), data.subset(va)};
}

// ---------------------------------------------------------------------------
// Training

double mse_loss(const MlpModel& model, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, Gradients* grad) {
  const auto& layers = model.layers();
  const std::size_t n_layers = layers.size();
  std::vector<Eigen::MatrixXd> acts;  // acts[i] = input of layer i, rows x dim
  acts.reserve(n_layers + 1);
  acts.push_back(X);
  for (std::size_t i = 0; i < n_layers; ++i) {
    Eigen::MatrixXd z = acts.back() * layers[i].W.transpose();
    z.rowwise() += layers[i].b.transpose();
    if (i + 1 < n_layers) z = z.cwiseMax(0.0);
    acts.push_back(std::move(z));
  }
  const Eigen::MatrixXd diff = acts.back() - Y;
  const double count = static_cast<double>(diff.size());
  const double loss = diff.squaredNorm() / count;
  if (!grad) return loss;

  grad->dW.resize(n_layers);
  grad->db.resize(n_layers);
  Eigen::MatrixXd dz = diff * (2.0 / count);
  for (std::size_t k = n_layers; k-- > 0;) {
    grad->dW[k] = dz.transpose() * acts[k];
    grad->db[k] = dz.colwise().sum().transpose();
    if (k > 0) {
      Eigen::MatrixXd da = dz * layers[k].W;
      dz = (acts[k].array() > 0.0).select(da, 0.0);
    }
  }
  return loss;
}

TrainResult train(const Dataset& train_set, const Dataset& val_set, const ModelSpec& spec, const TrainConfig& cfg) {
  cfg.validate();
  spec.validate();
  if (train_set.rows() < 1 || val_set.rows() < 1) throw std::invalid_argument("train: empty train or validation set");
  if (train_set.X.cols() != spec.input_dim || train_set.Y.cols() != spec.output_dim)
    throw std::invalid_argument("train: dataset shape does not match the model spec");

  MlpModel model = MlpModel::he_init(spec, cfg.seed);
  auto& layers = model.layers();
  const std::size_t n_layers = layers.size();
  std::vector<Eigen::MatrixXd> mW, vW;
  std::vector<Eigen::VectorXd> mb, vb;
  for (const auto& L : layers) {
    mW.push_back(Eigen::MatrixXd::Zero(L.W.rows(), L.W.cols()));
    vW.push_back(Eigen::MatrixXd::Zero(L.W.rows(), L.W.cols()));
    mb.push_back(Eigen::VectorXd::Zero(L.b.size()));
    vb.push_back(Eigen::VectorXd::Zero(L.b.size()));
  }

  std::mt19937_64 rng(cfg.seed * 0x9E3779B97F4A7C15ull + 1);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(train_set.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  TrainResult result;
  MlpModel best = model;
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  long long t = 0;
  Gradients g;
  Eigen::MatrixXd xb, yb;
  int epoch = 0;
  for (; epoch < cfg.max_epochs; ++epoch) {
    const double lr = cfg.lr0 * std::pow(cfg.decay, epoch);
    std::shuffle(order.begin(), order.end(), rng);
    double train_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const auto nb = static_cast<Eigen::Index>(end - start);
      xb.resize(nb, train_set.X.cols());
      yb.resize(nb, train_set.Y.cols());
      for (Eigen::Index r = 0; r < nb; ++r) {
        xb.row(r) = train_set.X.row(order[start + static_cast<std::size_t>(r)]);
        yb.row(r) = train_set.Y.row(order[start + static_cast<std::size_t>(r)]);
      }
      const double loss = mse_loss(model, xb, yb, &g);
      train_sum += loss * static_cast<double>(nb);
      ++t;
      const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
      const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
      for (std::size_t k = 0; k < n_layers; ++k) {
        mW[k] = cfg.beta1 * mW[k] + (1.0 - cfg.beta1) * g.dW[k];
        vW[k] = cfg.beta2 * vW[k] + (1.0 - cfg.beta2) * g.dW[k].cwiseAbs2();
        layers[k].W.array() -= lr * (mW[k].array() / c1) / ((vW[k].array() / c2).sqrt() + cfg.epsilon);
        mb[k] = cfg.beta1 * mb[k] + (1.0 - cfg.beta1) * g.db[k];
        vb[k] = cfg.beta2 * vb[k] + (1.0 - cfg.beta2) * g.db[k].cwiseAbs2();
        layers[k].b.array() -= lr * (mb[k].array() / c1) / ((vb[k].array() / c2).sqrt() + cfg.epsilon);
      }
    }
    const double train_mse = train_sum / static_cast<double>(order.size());
    const double val_mse = mse_loss(model, val_set.X, val_set.Y);
    if (!std::isfinite(train_mse) || !std::isfinite(val_mse))
      throw DivergenceError("training diverged at epoch " + std::to_string(epoch));
    result.curve.push_back({epoch, lr, train_mse, val_mse});
    if (val_mse < best_val) {
      best_val = val_mse;
      best_epoch = epoch;
      best = model;
    } else if (epoch - best_epoch >= cfg.patience) {
      ++epoch;
      break;
    }
  }
  best.meta = {cfg.seed, epoch - 1, best_epoch, best_val};
  result.model = std::move(best);
  return result;
}

TrainResult train(const Dataset& data, const ModelSpec& spec, const TrainConfig& cfg) {
  auto [tr, va] = split_stratified(data, cfg.val_fraction, cfg.seed);
  return train(tr, va, spec, cfg);
}

void write_curve_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& curve) {
  csv::Writer w(path, {"epoch", "lr", "train_mse", "val_mse"});
  for (const auto& e : curve) {
    w.cell(e.epoch).cell(e.lr).cell(e.train_mse).cell(e.val_mse);
    w.end_row();
  }
}

std::vector<GridEntry> grid_search(const Dataset& data, const std::vector<int>& depths, const std::vector<int>& widths,
                                   const TrainConfig& cfg, const std::vector<std::uint64_t>& seeds) {
  if (depths.empty() || widths.empty() || seeds.empty()) throw std::invalid_argument("grid_search: empty range");
  std::vector<GridEntry> out;
  for (int d : depths)
    for (int w : widths) {
      GridEntry e;
      e.spec.input_dim = static_cast<int>(data.X.cols());
      e.spec.output_dim = static_cast<int>(data.Y.cols());
      e.spec.hidden.assign(static_cast<std::size_t>(d), w);
      for (auto s : seeds) {
        auto c = cfg;
        c.seed = s;
        e.val_losses.push_back(train(data, e.spec, c).model.meta.val_loss);
      }
      const double n = static_cast<double>(e.val_losses.size());
      e.mean_val = std::accumulate(e.val_losses.begin(), e.val_losses.end(), 0.0) / n;
      double ss = 0.0;
      for (double v : e.val_losses) ss += (v - e.mean_val) * (v - e.mean_val);
      e.std_val = std::sqrt(ss / n);
      out.push_back(std::move(e));
    }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.mean_val < b.mean_val; });
  return out;
}

void write_grid_csv(const std::filesystem::path& path, const std::vector<GridEntry>& entries) {
  csv::Writer w(path, {"rank", "depth", "width", "mean_val_mse", "std_val_mse"});
  int rank = 1;
  for (const auto& e : entries) {
    w.cell(rank++).cell(static_cast<int>(e.spec.hidden.size())).cell(e.spec.hidden.empty() ? 0 : e.spec.hidden.front());
    w.cell(e.mean_val).cell(e.std_val);
    w.end_row();
  }
}

}  // namespace topil
