#include "gtf/mlp.hpp"

#include <cmath>
#include <cstddef>
#include <fstream>
#include <set>
#include <utility>

#include "json.hpp"

#include "gtf/errors.hpp"
#include "gtf/rng.hpp"
#include "gtf/version.hpp"

namespace gtf {
namespace {

constexpr std::uint64_t kInitStream = 0x111ULL;
constexpr std::uint64_t kTapeStream = 0x7a9eULL;
constexpr std::uint64_t kDataStream = 0xda7aULL;
constexpr double kDropout = 0.10;

void validate_spec(const MlpSpec& spec) {
  if (spec.data_dim < 1) throw InvalidDim("data_dim must be >= 1");
  if (spec.time_embed_dim < 2 || spec.time_embed_dim % 2 != 0) {
    throw InvalidDim("time_embed_dim must be a positive even integer");
  }
  if (spec.condition_count < 1) throw InvalidDim("condition_count must be >= 1");
  if (spec.hidden.empty()) throw ValidationError("at least one hidden layer is required");
  for (int w : spec.hidden) {
    if (w < 1) throw ValidationError("hidden widths must be >= 1");
  }
}

int onehot_slot(const MlpSpec& spec, ConditionId c) {
  if (c == UNCONDITIONAL) return spec.condition_count;
  if (c.value < 0 || c.value >= spec.condition_count) {
    throw UnknownCondition("condition id outside the network's one-hot table");
  }
  return c.value;
}

double activate(Activation act, double z) {
  if (act == Activation::ReLU) return z > 0.0 ? z : 0.0;
  const double s = 1.0 / (1.0 + std::exp(-z));
  return z * s;
}

double activate_grad(Activation act, double z) {
  if (act == Activation::ReLU) return z > 0.0 ? 1.0 : 0.0;
  const double s = 1.0 / (1.0 + std::exp(-z));
  return s * (1.0 + z * (1.0 - s));
}

Eigen::MatrixXd apply_activation(Activation act, const Eigen::MatrixXd& z) {
  return z.unaryExpr([act](double v) { return activate(act, v); });
}

Eigen::MatrixXd apply_activation_grad(Activation act, const Eigen::MatrixXd& z) {
  return z.unaryExpr([act](double v) { return activate_grad(act, v); });
}

// Row-stacked network input [x, time embedding, condition one-hot].
Eigen::MatrixXd assemble_input(const Mlp& net, const Eigen::MatrixXd& x_rows,
                               const std::vector<int>& t, const std::vector<ConditionId>& c) {
  const MlpSpec& spec = net.spec();
  const auto n = x_rows.rows();
  Eigen::MatrixXd input = Eigen::MatrixXd::Zero(n, spec.input_dim());
  input.leftCols(spec.data_dim) = x_rows;
  for (Eigen::Index r = 0; r < n; ++r) {
    input.block(r, spec.data_dim, 1, spec.time_embed_dim) =
        time_embedding(t[static_cast<std::size_t>(r)], spec.time_embed_dim, net.max_timestep())
            .transpose();
    input(r, spec.data_dim + spec.time_embed_dim +
                 onehot_slot(spec, c[static_cast<std::size_t>(r)])) = 1.0;
  }
  return input;
}

Eigen::MatrixXd forward_rows(const Mlp& net, const Eigen::MatrixXd& input,
                             std::vector<Eigen::MatrixXd>* pre_activations = nullptr,
                             std::vector<Eigen::MatrixXd>* activations = nullptr) {
  Eigen::MatrixXd a = input;
  if (activations != nullptr) activations->push_back(a);
  const std::size_t layers = net.W.size();
  for (std::size_t l = 0; l < layers; ++l) {
    Eigen::MatrixXd z = (a * net.W[l].transpose()).rowwise() + net.b[l].transpose();
    if (l + 1 == layers) return z;  // linear output layer
    if (pre_activations != nullptr) pre_activations->push_back(z);
    a = apply_activation(net.spec().activation, z);
    if (activations != nullptr) activations->push_back(a);
  }
  return a;
}

void validate_batch(const Mlp& net, const TrainBatch& batch) {
  const auto n = batch.x_t.rows();
  if (n < 1) throw ValidationError("batch must be non-empty");
  if (batch.x_t.cols() != net.dimension() || batch.eps.rows() != n ||
      batch.eps.cols() != net.dimension()) {
    throw DimensionMismatch("batch shapes disagree with the network dimension");
  }
  if (batch.t.size() != static_cast<std::size_t>(n) ||
      batch.c.size() != static_cast<std::size_t>(n)) {
    throw DimensionMismatch("batch t/c lengths disagree with the sample count");
  }
}

struct AdamState {
  std::vector<Eigen::MatrixXd> mW, vW;
  std::vector<Eigen::VectorXd> mb, vb;
  long step = 0;

  explicit AdamState(const Mlp& net) {
    for (std::size_t l = 0; l < net.W.size(); ++l) {
      mW.push_back(Eigen::MatrixXd::Zero(net.W[l].rows(), net.W[l].cols()));
      vW.push_back(Eigen::MatrixXd::Zero(net.W[l].rows(), net.W[l].cols()));
      mb.push_back(Eigen::VectorXd::Zero(net.b[l].size()));
      vb.push_back(Eigen::VectorXd::Zero(net.b[l].size()));
    }
  }

  void update(Mlp& net, const MlpGradients& g, double lr) {
    constexpr double beta1 = 0.9;
    constexpr double beta2 = 0.999;
    constexpr double eps = 1e-8;
    ++step;
    const double corr1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double corr2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (std::size_t l = 0; l < net.W.size(); ++l) {
      mW[l] = beta1 * mW[l] + (1.0 - beta1) * g.dW[l];
      vW[l] = beta2 * vW[l].array().matrix() + (1.0 - beta2) * g.dW[l].array().square().matrix();
      net.W[l].array() -=
          lr * (mW[l].array() / corr1) / ((vW[l].array() / corr2).sqrt() + eps);
      mb[l] = beta1 * mb[l] + (1.0 - beta1) * g.db[l];
      vb[l] = beta2 * vb[l].array().matrix() + (1.0 - beta2) * g.db[l].array().square().matrix();
      net.b[l].array() -=
          lr * (mb[l].array() / corr1) / ((vb[l].array() / corr2).sqrt() + eps);
    }
  }
};

}  // namespace

Eigen::VectorXd time_embedding(int t, int dim, int T) {
  if (dim < 2 || dim % 2 != 0) throw InvalidDim("time_embedding: dim must be a positive even integer");
  if (T < 1) throw InvalidRange("time_embedding: T must be >= 1");
  if (t < 0 || t > T) throw OutOfRange("time_embedding: t must lie in [0, T]");
  const int half = dim / 2;
  Eigen::VectorXd emb(dim);
  for (int k = 0; k < half; ++k) {
    const double omega = std::exp(-k * std::log(10000.0) / half);
    emb[2 * k] = std::sin(t * omega);
    emb[2 * k + 1] = std::cos(t * omega);
  }
  return emb;
}

Mlp::Mlp(MlpSpec spec, int max_timestep, std::uint64_t init_seed)
    : spec_(std::move(spec)), max_timestep_(max_timestep) {
  validate_spec(spec_);
  if (max_timestep_ < 1) throw InvalidRange("max_timestep must be >= 1");

  std::vector<int> widths;
  widths.push_back(spec_.input_dim());
  widths.insert(widths.end(), spec_.hidden.begin(), spec_.hidden.end());
  widths.push_back(spec_.data_dim);

  Rng rng(derive_stream_seed(init_seed, kInitStream));
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const int fan_in = widths[l];
    const int fan_out = widths[l + 1];
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(fan_out, fan_in);
    const bool output_layer = l + 2 == widths.size();
    if (!output_layer) {
      const double scale = std::sqrt(2.0 / fan_in);
      for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = scale * rng.normal();
    }
    W.push_back(std::move(w));
    b.push_back(Eigen::VectorXd::Zero(fan_out));
  }
}

NoiseVector Mlp::predict(const NoiseVector& x, int t, ConditionId c) const {
  if (x.size() != spec_.data_dim) throw DimensionMismatch("predict: dimension mismatch");
  const Eigen::MatrixXd out =
      forward_rows(*this, assemble_input(*this, x.transpose(), {t}, {c}));
  return out.row(0).transpose();
}

Eigen::MatrixXd Mlp::predict_batch(const Eigen::MatrixXd& x_rows, int t, ConditionId c) const {
  if (x_rows.cols() != spec_.data_dim) throw DimensionMismatch("predict_batch: dimension mismatch");
  const auto n = x_rows.rows();
  const std::vector<int> ts(static_cast<std::size_t>(n), t);
  const std::vector<ConditionId> cs(static_cast<std::size_t>(n), c);
  return forward_rows(*this, assemble_input(*this, x_rows, ts, cs));
}

std::size_t Mlp::parameter_count() const {
  std::size_t total = 0;
  for (std::size_t l = 0; l < W.size(); ++l) {
    total += static_cast<std::size_t>(W[l].size()) + static_cast<std::size_t>(b[l].size());
  }
  return total;
}

double Mlp::get_parameter(std::size_t flat_index) const {
  for (std::size_t l = 0; l < W.size(); ++l) {
    const auto wn = static_cast<std::size_t>(W[l].size());
    if (flat_index < wn) {
      const auto cols = static_cast<std::size_t>(W[l].cols());
      return W[l](static_cast<Eigen::Index>(flat_index / cols),
                  static_cast<Eigen::Index>(flat_index % cols));
    }
    flat_index -= wn;
    const auto bn = static_cast<std::size_t>(b[l].size());
    if (flat_index < bn) return b[l](static_cast<Eigen::Index>(flat_index));
    flat_index -= bn;
  }
  throw OutOfRange("parameter index out of range");
}

void Mlp::set_parameter(std::size_t flat_index, double value) {
  for (std::size_t l = 0; l < W.size(); ++l) {
    const auto wn = static_cast<std::size_t>(W[l].size());
    if (flat_index < wn) {
      const auto cols = static_cast<std::size_t>(W[l].cols());
      W[l](static_cast<Eigen::Index>(flat_index / cols),
           static_cast<Eigen::Index>(flat_index % cols)) = value;
      return;
    }
    flat_index -= wn;
    const auto bn = static_cast<std::size_t>(b[l].size());
    if (flat_index < bn) {
      b[l](static_cast<Eigen::Index>(flat_index)) = value;
      return;
    }
    flat_index -= bn;
  }
  throw OutOfRange("parameter index out of range");
}

NoiseVector forward(const Mlp& net, const NoiseVector& x, int t, ConditionId c) {
  return net.predict(x, t, c);
}

double mlp_batch_loss(const Mlp& net, const TrainBatch& batch) {
  validate_batch(net, batch);
  const Eigen::MatrixXd out =
      forward_rows(net, assemble_input(net, batch.x_t, batch.t, batch.c));
  return (out - batch.eps).squaredNorm() / static_cast<double>(batch.x_t.rows());
}

MlpGradients mlp_batch_gradients(const Mlp& net, const TrainBatch& batch, double* loss) {
  validate_batch(net, batch);
  std::vector<Eigen::MatrixXd> pre;
  std::vector<Eigen::MatrixXd> acts;
  const Eigen::MatrixXd out =
      forward_rows(net, assemble_input(net, batch.x_t, batch.t, batch.c), &pre, &acts);
  const double n = static_cast<double>(batch.x_t.rows());
  const Eigen::MatrixXd residual = out - batch.eps;
  if (loss != nullptr) *loss = residual.squaredNorm() / n;

  MlpGradients grads;
  grads.dW.resize(net.W.size());
  grads.db.resize(net.b.size());
  Eigen::MatrixXd delta = 2.0 * residual / n;  // d(loss)/d(output rows)
  for (std::size_t l = net.W.size(); l-- > 0;) {
    grads.dW[l] = delta.transpose() * acts[l];
    grads.db[l] = delta.colwise().sum().transpose();
    if (l > 0) {
      delta = (delta * net.W[l]).cwiseProduct(
          apply_activation_grad(net.spec().activation, pre[l - 1]));
    }
  }
  return grads;
}

std::vector<double> train(Mlp& net, const std::map<ConditionId, Eigen::MatrixXd>& data,
                          const NoiseSchedule& sched, const TrainConfig& cfg) {
  if (cfg.epochs < 1) throw InvalidRange("train: epochs must be >= 1");
  if (cfg.batch_size < 1) throw InvalidRange("train: batch_size must be >= 1");
  if (!(cfg.learning_rate >= 0.0) || !std::isfinite(cfg.learning_rate)) {
    throw InvalidRange("train: learning_rate must be finite and >= 0");
  }
  if (data.empty()) throw DataExhausted("train: empty dataset");

  struct Pool {
    ConditionId id;
    const Eigen::MatrixXd* rows;
    Eigen::Index cum_end;  // cumulative row count including this pool
  };
  std::vector<Pool> pools;
  Eigen::Index total = 0;
  bool any_full_batch = false;
  for (const auto& [id, rows] : data) {
    if (rows.cols() != net.dimension()) {
      throw DimensionMismatch("train: dataset dimension disagrees with the network");
    }
    if (id == UNCONDITIONAL || id.value < 0 || id.value >= net.spec().condition_count) {
      throw UnknownCondition("train: dataset condition outside the network's table");
    }
    if (rows.rows() >= cfg.batch_size) any_full_batch = true;
    total += rows.rows();
    pools.push_back({id, &rows, total});
  }
  if (!any_full_batch) {
    throw DataExhausted("train: no condition holds a full batch of samples");
  }

  const int d = net.dimension();
  const int T = sched.T;
  const long steps = std::max<long>(1, total / cfg.batch_size);
  AdamState adam(net);
  std::vector<double> history;
  history.reserve(static_cast<std::size_t>(cfg.epochs));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // The tape restarts from the same stream every epoch on purpose: with
    // learning_rate = 0 each epoch sees byte-identical batches.
    Rng tape(derive_stream_seed(cfg.seed, kTapeStream));
    double epoch_loss = 0.0;
    for (long s = 0; s < steps; ++s) {
      TrainBatch batch;
      batch.x_t.resize(cfg.batch_size, d);
      batch.eps.resize(cfg.batch_size, d);
      batch.t.resize(static_cast<std::size_t>(cfg.batch_size));
      batch.c.resize(static_cast<std::size_t>(cfg.batch_size));
      for (int i = 0; i < cfg.batch_size; ++i) {
        const auto pick = static_cast<Eigen::Index>(tape.uniform() * static_cast<double>(total));
        const auto j = std::min(pick, total - 1);
        std::size_t p = 0;
        while (pools[p].cum_end <= j) ++p;
        const Eigen::Index local = j - (pools[p].cum_end - pools[p].rows->rows());
        const int t = 1 + std::min(static_cast<int>(tape.uniform() * T), T - 1);
        const bool drop = tape.uniform() < kDropout;
        NoiseVector eps(d);
        for (int k = 0; k < d; ++k) eps[k] = tape.normal();
        batch.x_t.row(i) =
            forward_noise(pools[p].rows->row(local).transpose(), t, eps, sched).transpose();
        batch.eps.row(i) = eps.transpose();
        batch.t[static_cast<std::size_t>(i)] = t;
        batch.c[static_cast<std::size_t>(i)] = drop ? UNCONDITIONAL : pools[p].id;
      }
      double loss = 0.0;
      const MlpGradients grads = mlp_batch_gradients(net, batch, &loss);
      epoch_loss += loss;
      if (cfg.learning_rate > 0.0) adam.update(net, grads, cfg.learning_rate);
    }
    const double mean_loss = epoch_loss / static_cast<double>(steps);
    if (!std::isfinite(mean_loss)) throw DivergedLoss("train: loss became non-finite");
    history.push_back(mean_loss);
  }
  return history;
}

std::vector<double> train(Mlp& net, const AnalyticWorld<double>& world,
                          const NoiseSchedule& sched, const TrainConfig& cfg) {
  if (cfg.samples_per_condition < 1) {
    throw InvalidRange("train: samples_per_condition must be >= 1");
  }
  Rng rng(derive_stream_seed(cfg.seed, kDataStream));
  std::map<ConditionId, Eigen::MatrixXd> data;
  for (const auto& [id, mixture] : world.conditionals) {
    Eigen::MatrixXd rows(cfg.samples_per_condition, world.dim());
    for (int r = 0; r < cfg.samples_per_condition; ++r) {
      rows.row(r) = draw_sample(mixture, rng).transpose();
    }
    data.emplace(id, std::move(rows));
  }
  return train(net, data, sched, cfg);
}

double gradient_check_params(Mlp& net, const TrainBatch& batch,
                             const std::vector<std::size_t>& flat_indices) {
  if (flat_indices.empty()) throw ValidationError("gradient_check: no parameters selected");
  constexpr double h = 1e-5;
  const MlpGradients grads = mlp_batch_gradients(net, batch);

  auto analytic_at = [&](std::size_t flat) {
    std::size_t idx = flat;
    for (std::size_t l = 0; l < grads.dW.size(); ++l) {
      const auto wn = static_cast<std::size_t>(grads.dW[l].size());
      if (idx < wn) {
        const auto cols = static_cast<std::size_t>(grads.dW[l].cols());
        return grads.dW[l](static_cast<Eigen::Index>(idx / cols),
                           static_cast<Eigen::Index>(idx % cols));
      }
      idx -= wn;
      const auto bn = static_cast<std::size_t>(grads.db[l].size());
      if (idx < bn) return grads.db[l](static_cast<Eigen::Index>(idx));
      idx -= bn;
    }
    throw OutOfRange("parameter index out of range");
  };

  double worst = 0.0;
  for (std::size_t flat : flat_indices) {
    const double base = net.get_parameter(flat);
    net.set_parameter(flat, base + h);
    const double above = mlp_batch_loss(net, batch);
    net.set_parameter(flat, base - h);
    const double below = mlp_batch_loss(net, batch);
    net.set_parameter(flat, base);
    const double fd = (above - below) / (2.0 * h);
    const double an = analytic_at(flat);
    const double err = std::abs(fd - an) / std::max(1e-8, std::abs(fd) + std::abs(an));
    worst = std::max(worst, err);
  }
  return worst;
}

double gradient_check(Mlp& net, const TrainBatch& batch, int n_params, std::uint64_t seed) {
  if (n_params < 1) throw InvalidRange("gradient_check: n_params must be >= 1");
  const std::size_t count = net.parameter_count();
  const auto want = std::min<std::size_t>(static_cast<std::size_t>(n_params), count);
  Rng rng(derive_stream_seed(seed, 0x9cadULL));
  std::set<std::size_t> picked;
  while (picked.size() < want) {
    picked.insert(std::min(static_cast<std::size_t>(rng.uniform() * static_cast<double>(count)),
                           count - 1));
  }
  return gradient_check_params(net, batch,
                               std::vector<std::size_t>(picked.begin(), picked.end()));
}

void save_checkpoint(const Mlp& net, const std::string& path) {
  nlohmann::json doc;
  doc["version"] = kCheckpointTag;
  doc["data_dim"] = net.spec().data_dim;
  doc["time_embed_dim"] = net.spec().time_embed_dim;
  doc["condition_count"] = net.spec().condition_count;
  doc["hidden"] = net.spec().hidden;
  doc["activation"] = net.spec().activation == Activation::ReLU ? "relu" : "silu";
  doc["max_timestep"] = net.max_timestep();
  doc["condition_names"] = net.condition_names;
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t l = 0; l < net.W.size(); ++l) {
    nlohmann::json w_rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < net.W[l].rows(); ++r) {
      std::vector<double> row(static_cast<std::size_t>(net.W[l].cols()));
      for (Eigen::Index c = 0; c < net.W[l].cols(); ++c) {
        row[static_cast<std::size_t>(c)] = net.W[l](r, c);
      }
      w_rows.push_back(row);
    }
    std::vector<double> bias(net.b[l].data(), net.b[l].data() + net.b[l].size());
    layers.push_back({{"w", std::move(w_rows)}, {"b", std::move(bias)}});
  }
  doc["layers"] = std::move(layers);

  std::ofstream out(path);
  if (!out) throw Error("cannot open checkpoint path for writing: " + path);
  out << doc.dump(1) << '\n';
  if (!out) throw Error("failed while writing checkpoint: " + path);
}

Mlp load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open checkpoint: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  try {
    if (doc.at("version").get<std::string>() != kCheckpointTag) {
      throw SpecMismatch("checkpoint version tag mismatch");
    }
    MlpSpec spec;
    spec.data_dim = doc.at("data_dim").get<int>();
    spec.time_embed_dim = doc.at("time_embed_dim").get<int>();
    spec.condition_count = doc.at("condition_count").get<int>();
    spec.hidden = doc.at("hidden").get<std::vector<int>>();
    const std::string act = doc.at("activation").get<std::string>();
    if (act == "relu") {
      spec.activation = Activation::ReLU;
    } else if (act == "silu") {
      spec.activation = Activation::SiLU;
    } else {
      throw ParseError("checkpoint activation must be 'relu' or 'silu'");
    }
    Mlp net(spec, doc.at("max_timestep").get<int>(), 0);
    if (doc.contains("condition_names")) {
      net.condition_names = doc.at("condition_names").get<std::vector<std::string>>();
    }
    const auto& layers = doc.at("layers");
    if (layers.size() != net.W.size()) throw SpecMismatch("checkpoint layer count mismatch");
    for (std::size_t l = 0; l < net.W.size(); ++l) {
      const auto w_rows = layers.at(l).at("w").get<std::vector<std::vector<double>>>();
      const auto bias = layers.at(l).at("b").get<std::vector<double>>();
      if (w_rows.size() != static_cast<std::size_t>(net.W[l].rows()) ||
          bias.size() != static_cast<std::size_t>(net.b[l].size())) {
        throw SpecMismatch("checkpoint layer shape mismatch");
      }
      for (Eigen::Index r = 0; r < net.W[l].rows(); ++r) {
        const auto& row = w_rows[static_cast<std::size_t>(r)];
        if (row.size() != static_cast<std::size_t>(net.W[l].cols())) {
          throw SpecMismatch("checkpoint layer shape mismatch");
        }
        for (Eigen::Index c = 0; c < net.W[l].cols(); ++c) {
          net.W[l](r, c) = row[static_cast<std::size_t>(c)];
        }
      }
      for (Eigen::Index i = 0; i < net.b[l].size(); ++i) {
        net.b[l](i) = bias[static_cast<std::size_t>(i)];
      }
    }
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint structure invalid: ") + e.what());
  }
}

}  // namespace gtf
