#pragma once

// Recurrent network with parametric biases (RNNPB).
//
// Jordan-style topology, one hidden layer:
//
//   in_t    = [x_t, pb, c_t]                      (io + pb + context)
//   h_t     = sigmoid(W_in in_t + b_hidden)
//   x_{t+1} = sigmoid(W_out h_t + b_out)          (prediction)
//   c_{t+1} = sigmoid(W_ctx h_t + b_ctx)          (context fed back)
//
// c_0 = 0.5. PB values are sigmoid(u) of per-sequence internal potentials u.
//
// During training and recognition the input is blended,
//   x_in_t = (1 - r) * x_t + r * x_hat_t      (x_in_0 = x_0),
// with r = closed_loop_ratio: r = 0 is pure teacher forcing, r = 1 a free
// rollout. Gradients flow through the fed-back predictions. Generation is
// always fully closed loop. Per-sequence loss: E = sum_t 0.5 |x_hat_{t+1} - x_{t+1}|^2.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "binary_io.hpp"
#include "dataset.hpp"
#include "errors.hpp"

namespace iloci {

// When training counts as converged: the mean per-step MSE over the batch, or
// the worst single sequence. "max" keeps one badly fitted pattern from hiding
// behind many well fitted ones during rehearsal.
enum class StopRule : std::int32_t { mean = 0, max = 1 };

inline StopRule parse_stop_rule(const std::string& s) {
  if (s == "mean") return StopRule::mean;
  if (s == "max") return StopRule::max;
  throw ConfigError("stop_rule must be 'mean' or 'max', got '" + s + "'");
}

inline const char* to_string(StopRule r) { return r == StopRule::max ? "max" : "mean"; }

struct NetConfig {
  int io_dim = 6;
  int pb_dim = 4;
  int context_dim = 25;
  int hidden_dim = 60;
  double learn_rate_w = 0.05;
  double learn_rate_pb = 0.1;
  int max_epochs = 5000;
  double target_mse = 1e-3;
  int recog_iters = 300;
  std::uint64_t rng_seed = 1;
  double closed_loop_ratio = 0.0;        // input blending during training
  double recog_closed_loop_ratio = 0.0;  // input blending during recognition
  double grad_clip = 0.0;                // max norm of the averaged weight gradient; 0 disables
  StopRule stop_rule = StopRule::mean;

  int input_dim() const { return io_dim + pb_dim + context_dim; }

  void validate() const {
    if (io_dim <= 0 || pb_dim <= 0 || context_dim <= 0 || hidden_dim <= 0)
      throw ConfigError("network dimensions must be positive");
    if (learn_rate_w < 0.0 || learn_rate_pb < 0.0) throw ConfigError("learning rates must be non-negative");
    if (max_epochs < 0 || recog_iters < 0) throw ConfigError("iteration counts must be non-negative");
    if (!(target_mse > 0.0)) throw ConfigError("target_mse must be positive");
    if (!(closed_loop_ratio >= 0.0 && closed_loop_ratio <= 1.0) ||
        !(recog_closed_loop_ratio >= 0.0 && recog_closed_loop_ratio <= 1.0))
      throw ConfigError("closed-loop ratios must lie in [0, 1]");
    if (grad_clip < 0.0) throw ConfigError("grad_clip must be non-negative");
  }

  friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
/// Squashed PB values, componentwise in (0, 1).
using PBVector = Eigen::VectorXd;

inline double sigmoid(double a) { return 1.0 / (1.0 + std::exp(-a)); }
inline Vector sigmoid(const Vector& a) {
  return a.unaryExpr([](double v) { return sigmoid(v); });
}
inline Vector logit(const Vector& p) {
  return p.unaryExpr([](double v) { return std::log(v / (1.0 - v)); });
}

struct NetWeights {
  Matrix w_in;  // hidden x input
  Vector b_hidden;
  Matrix w_out;  // io x hidden
  Vector b_out;
  Matrix w_ctx;  // context x hidden
  Vector b_ctx;

  int io_dim() const { return static_cast<int>(w_out.rows()); }
  int context_dim() const { return static_cast<int>(w_ctx.rows()); }
  int hidden_dim() const { return static_cast<int>(w_in.rows()); }
  int pb_dim() const { return static_cast<int>(w_in.cols()) - io_dim() - context_dim(); }

  static NetWeights zeros(const NetConfig& cfg) {
    return {Matrix::Zero(cfg.hidden_dim, cfg.input_dim()), Vector::Zero(cfg.hidden_dim),
            Matrix::Zero(cfg.io_dim, cfg.hidden_dim),      Vector::Zero(cfg.io_dim),
            Matrix::Zero(cfg.context_dim, cfg.hidden_dim), Vector::Zero(cfg.context_dim)};
  }

  std::size_t size() const {
    return static_cast<std::size_t>(w_in.size() + b_hidden.size() + w_out.size() + b_out.size() + w_ctx.size() +
                                    b_ctx.size());
  }

  /// Visits every parameter in a fixed order.
  template <typename F>
  void for_each(F&& f) {
    auto visit = [&](auto& m) {
      for (Eigen::Index i = 0; i < m.size(); ++i) f(m.data()[i]);
    };
    visit(w_in), visit(b_hidden), visit(w_out), visit(b_out), visit(w_ctx), visit(b_ctx);
  }
  template <typename F>
  void for_each(F&& f) const {
    const_cast<NetWeights*>(this)->for_each([&](double& v) { f(static_cast<const double&>(v)); });
  }

  bool all_finite() const {
    return w_in.allFinite() && b_hidden.allFinite() && w_out.allFinite() && b_out.allFinite() && w_ctx.allFinite() &&
           b_ctx.allFinite();
  }

  void axpy(double a, const NetWeights& g) {
    w_in += a * g.w_in, b_hidden += a * g.b_hidden;
    w_out += a * g.w_out, b_out += a * g.b_out;
    w_ctx += a * g.w_ctx, b_ctx += a * g.b_ctx;
  }

  void set_zero() {
    w_in.setZero(), b_hidden.setZero(), w_out.setZero(), b_out.setZero(), w_ctx.setZero(), b_ctx.setZero();
  }

  friend bool operator==(const NetWeights& a, const NetWeights& b) {
    return a.w_in == b.w_in && a.b_hidden == b.b_hidden && a.w_out == b.w_out && a.b_out == b.b_out &&
           a.w_ctx == b.w_ctx && a.b_ctx == b.b_ctx;
  }
};

/// Portable uniform double in [0, 1) from 53 random bits.
inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline NetWeights init_weights(const NetConfig& cfg) {
  cfg.validate();
  NetWeights w = NetWeights::zeros(cfg);
  std::mt19937_64 rng(cfg.rng_seed);
  w.for_each([&](double& v) { v = -0.1 + 0.2 * unit_uniform(rng); });
  return w;
}

struct StepOutput {
  Vector prediction;
  Vector context;
  Vector hidden;
};

inline StepOutput forward_step(const NetWeights& w, const Vector& x, const PBVector& pb, const Vector& c) {
  Vector in(x.size() + pb.size() + c.size());
  in << x, pb, c;
  Vector h = sigmoid(w.w_in * in + w.b_hidden);
  return {sigmoid(w.w_out * h + w.b_out), sigmoid(w.w_ctx * h + w.b_ctx), std::move(h)};
}

inline constexpr double kContextInit = 0.5;

/// Closed-loop rollout: returns `steps` predictions, each fed back as the next input.
inline Sequence generate(const NetWeights& w, const PBVector& pb, const Vector& x0, int steps) {
  Sequence out(steps, w.io_dim());
  Vector x = x0;
  Vector c = Vector::Constant(w.context_dim(), kContextInit);
  for (int t = 0; t < steps; ++t) {
    auto s = forward_step(w, x, pb, c);
    out.row(t) = s.prediction.transpose();
    x = std::move(s.prediction);
    c = std::move(s.context);
  }
  return out;
}

/// Mean squared error per step and channel between two equally shaped sequences.
inline double mse(const Sequence& a, const Sequence& b) {
  if (a.size() == 0) return 0.0;
  return (a - b).squaredNorm() / static_cast<double>(a.size());
}

/// Rebuilds a full pattern (first input row plus closed-loop continuation).
inline Sequence regenerate(const NetWeights& w, const PBVector& pb, const Vector& x0, int num_steps) {
  Sequence s(num_steps, w.io_dim());
  s.row(0) = x0.transpose();
  if (num_steps > 1) s.bottomRows(num_steps - 1) = generate(w, pb, x0, num_steps - 1);
  return s;
}

/// Mean per-step, per-channel squared error of the closed-loop regeneration of `seq`.
inline double generation_error(const NetWeights& w, const PBVector& pb, const Sequence& seq) {
  if (seq.rows() < 2) return 0.0;
  const Sequence gen = generate(w, pb, seq.row(0).transpose(), static_cast<int>(seq.rows()) - 1);
  return mse(gen, seq.bottomRows(seq.rows() - 1));
}

// ---------------------------------------------------------------------------
// BPTT (teacher-forced, or inputs blended with the previous prediction)

/// Scratch buffers reused across sequences and epochs.
class Bptt {
 public:
  explicit Bptt(const NetWeights& w, double closed_loop_ratio = 0.0) : w_(&w), ratio_(closed_loop_ratio) {}

  /// Loss E of one sequence; accumulates dE/dW into `gw` (if non-null) and returns dE/dpb in `gpb`.
  double run(const Sequence& seq, const PBVector& pb, NetWeights* gw, Vector& gpb) {
    const NetWeights& w = *w_;
    const int io = w.io_dim(), pbd = static_cast<int>(pb.size()), cd = w.context_dim(), hd = w.hidden_dim();
    const int n = static_cast<int>(seq.rows()) - 1;
    gpb.setZero(pbd);
    if (n <= 0) return 0.0;
    in_.resize(n, io + pbd + cd);
    hid_.resize(n, hd);
    out_x_.resize(n, io);
    out_c_.resize(n, cd);
    double loss = 0.0;

    Vector c = Vector::Constant(cd, kContextInit);
    for (int t = 0; t < n; ++t) {
      if (t == 0 || ratio_ == 0.0)
        in_.row(t).head(io) = seq.row(t);
      else
        in_.row(t).head(io) = (1.0 - ratio_) * seq.row(t) + ratio_ * out_x_.row(t - 1);
      in_.row(t).segment(io, pbd) = pb.transpose();
      in_.row(t).tail(cd) = c.transpose();
      hid_.row(t) = sigmoid(w.w_in * in_.row(t).transpose() + w.b_hidden).transpose();
      out_x_.row(t) = sigmoid(w.w_out * hid_.row(t).transpose() + w.b_out).transpose();
      c = sigmoid(w.w_ctx * hid_.row(t).transpose() + w.b_ctx);
      out_c_.row(t) = c.transpose();
      loss += 0.5 * (out_x_.row(t) - seq.row(t + 1)).squaredNorm();
    }

    d_ox_.resize(n, io);
    d_oc_.resize(n, cd);
    d_a_.resize(n, hd);
    Vector dc_next = Vector::Zero(cd);  // dE/dc_{t+1} flowing back from step t+1
    Vector dx_next = Vector::Zero(io);  // dE/dx_in_{t+1}
    for (int t = n - 1; t >= 0; --t) {
      auto yx = out_x_.row(t).array();
      auto yc = out_c_.row(t).array();
      Vector dyx = (out_x_.row(t) - seq.row(t + 1)).transpose() + ratio_ * dx_next;
      d_ox_.row(t) = (dyx.transpose().array() * yx * (1.0 - yx)).matrix();
      d_oc_.row(t) = (dc_next.transpose().array() * yc * (1.0 - yc)).matrix();
      Vector dh = w.w_out.transpose() * d_ox_.row(t).transpose() + w.w_ctx.transpose() * d_oc_.row(t).transpose();
      auto h = hid_.row(t).transpose().array();
      d_a_.row(t) = (dh.array() * h * (1.0 - h)).matrix().transpose();
      Vector din = w.w_in.transpose() * d_a_.row(t).transpose();
      gpb += din.segment(io, pbd);
      dc_next = din.tail(cd);
      dx_next = din.head(io);
    }

    if (gw != nullptr) {
      gw->w_in.noalias() += d_a_.transpose() * in_;
      gw->b_hidden += d_a_.colwise().sum().transpose();
      gw->w_out.noalias() += d_ox_.transpose() * hid_;
      gw->b_out += d_ox_.colwise().sum().transpose();
      gw->w_ctx.noalias() += d_oc_.transpose() * hid_;
      gw->b_ctx += d_oc_.colwise().sum().transpose();
    }
    return loss;
  }

 private:
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const NetWeights* w_;
  double ratio_;
  RowMat in_, hid_, out_x_, out_c_, d_ox_, d_oc_, d_a_;
};

/// Per-step, per-channel MSE corresponding to a loss E over `steps` predictions.
inline double loss_to_mse(double loss, std::size_t predicted_steps, int io_dim) {
  return predicted_steps == 0 ? 0.0 : 2.0 * loss / static_cast<double>(predicted_steps * static_cast<std::size_t>(io_dim));
}

struct TrainResult {
  NetWeights weights;
  std::vector<Vector> potentials;  // trained u per sequence
  std::vector<PBVector> pbs;       // sigmoid(u)
  double final_mse = 0.0;
  double initial_mse = 0.0;
  int epochs = 0;  // weight updates performed
};

/// Full-batch gradient descent over all sequences with shared weights and per-sequence PB.
/// Weight step: learn_rate_w times the sequence-averaged dE/dW (norm capped at grad_clip if set).
/// PB step: learn_rate_pb times that sequence's dE/du (summed over its time steps).
/// Stops once the per-step MSE (batch mean, or worst sequence under StopRule::max)
/// reaches target_mse or after max_epochs updates. final_mse is always the batch mean.
inline TrainResult train(NetWeights w, const std::vector<Sequence>& batch, std::vector<Vector> potentials,
                         const NetConfig& cfg) {
  if (batch.empty()) throw ContractError("train: empty batch");
  if (potentials.size() != batch.size()) throw ContractError("train: one PB potential vector per sequence required");
  std::size_t predicted = 0;
  for (const auto& s : batch) {
    if (s.cols() != w.io_dim()) throw ContractError("train: sequence width differs from io_dim");
    if (s.rows() < 1) throw ContractError("train: empty sequence");
    predicted += static_cast<std::size_t>(s.rows() - 1);
  }
  const double inv_count = 1.0 / static_cast<double>(batch.size());

  NetWeights grad = w;
  Bptt bptt(w, cfg.closed_loop_ratio);
  Vector gpb;
  TrainResult result;
  for (int epoch = 0;; ++epoch) {
    grad.set_zero();
    double loss = 0.0, worst = 0.0;
    std::vector<Vector> pb_grads(batch.size());
    for (std::size_t s = 0; s < batch.size(); ++s) {
      const PBVector pb = sigmoid(potentials[s]);
      const double ls = bptt.run(batch[s], pb, &grad, gpb);
      loss += ls;
      if (batch[s].rows() > 1)
        worst = std::max(worst, loss_to_mse(ls, static_cast<std::size_t>(batch[s].rows() - 1), w.io_dim()));
      pb_grads[s] = (gpb.array() * pb.array() * (1.0 - pb.array())).matrix();
    }
    const double m = loss_to_mse(loss, predicted, w.io_dim());
    if (!std::isfinite(m)) {
      std::ostringstream os;
      os << "training diverged at epoch " << epoch << " (learn_rate_w=" << cfg.learn_rate_w
         << ", learn_rate_pb=" << cfg.learn_rate_pb << ")";
      throw DivergenceError(os.str());
    }
    if (epoch == 0) result.initial_mse = m;
    const double stop_value = cfg.stop_rule == StopRule::max ? worst : m;
    if (stop_value <= cfg.target_mse || epoch >= cfg.max_epochs) {
      result.final_mse = m;
      result.epochs = epoch;
      break;
    }
    double step = cfg.learn_rate_w * inv_count;
    if (cfg.grad_clip > 0.0) {
      double sq = 0.0;
      grad.for_each([&](const double& v) { sq += v * v; });
      const double norm = std::sqrt(sq) * inv_count;
      if (norm > cfg.grad_clip) step *= cfg.grad_clip / norm;
    }
    w.axpy(-step, grad);
    for (std::size_t s = 0; s < batch.size(); ++s) potentials[s] -= cfg.learn_rate_pb * pb_grads[s];
  }
  result.pbs.reserve(potentials.size());
  for (const auto& u : potentials) result.pbs.push_back(sigmoid(u));
  result.weights = std::move(w);
  result.potentials = std::move(potentials);
  return result;
}

struct Recognition {
  PBVector pb;
  double residual_mse = 0.0;
};

/// PB-only gradient descent on the prediction error (blended by recog_closed_loop_ratio,
/// teacher-forced by default); weights are frozen. Starts from u = 0, i.e. PB = 0.5.
inline Recognition recognize(const NetWeights& w, const Sequence& seq, const NetConfig& cfg) {
  Vector u = Vector::Zero(w.pb_dim());
  Bptt bptt(w, cfg.recog_closed_loop_ratio);
  Vector gpb;
  const std::size_t predicted = seq.rows() > 0 ? static_cast<std::size_t>(seq.rows() - 1) : 0;
  for (int it = 0;; ++it) {
    const PBVector pb = sigmoid(u);
    const double loss = bptt.run(seq, pb, nullptr, gpb);
    if (!std::isfinite(loss)) throw DivergenceError("recognition diverged at iteration " + std::to_string(it));
    if (it >= cfg.recog_iters) return {pb, loss_to_mse(loss, predicted, w.io_dim())};
    u -= cfg.learn_rate_pb * (gpb.array() * pb.array() * (1.0 - pb.array())).matrix();
  }
}

// ---------------------------------------------------------------------------
// Gradient checking

struct Gradient {
  NetWeights weights;
  Vector potentials;
};

/// dE/dW and dE/du for a single sequence.
inline Gradient analytic_gradient(const NetWeights& w, const Sequence& seq, const Vector& u, double ratio = 0.0) {
  Gradient g{w, Vector()};
  g.weights.set_zero();
  Bptt bptt(w, ratio);
  Vector gpb;
  const PBVector pb = sigmoid(u);
  bptt.run(seq, pb, &g.weights, gpb);
  g.potentials = (gpb.array() * pb.array() * (1.0 - pb.array())).matrix();
  return g;
}

inline double sequence_loss(const NetWeights& w, const Sequence& seq, const Vector& u, double ratio = 0.0) {
  Bptt bptt(w, ratio);
  Vector gpb;
  return bptt.run(seq, sigmoid(u), nullptr, gpb);
}

/// Central finite differences of E.
inline Gradient numerical_gradient(const NetWeights& w, const Sequence& seq, const Vector& u, double ratio = 0.0,
                                   double h = 1e-5) {
  Gradient g{w, Vector::Zero(u.size())};
  NetWeights probe = w;
  std::vector<double*> params;
  probe.for_each([&](double& v) { params.push_back(&v); });
  std::vector<double> out;
  out.reserve(params.size());
  for (double* p : params) {
    const double orig = *p;
    *p = orig + h;
    const double up = sequence_loss(probe, seq, u, ratio);
    *p = orig - h;
    const double down = sequence_loss(probe, seq, u, ratio);
    *p = orig;
    out.push_back((up - down) / (2.0 * h));
  }
  std::size_t i = 0;
  g.weights.for_each([&](double& v) { v = out[i++]; });
  for (Eigen::Index k = 0; k < u.size(); ++k) {
    Vector up = u, down = u;
    up(k) += h;
    down(k) -= h;
    g.potentials(k) = (sequence_loss(w, seq, up, ratio) - sequence_loss(w, seq, down, ratio)) / (2.0 * h);
  }
  return g;
}

/// max |a - b| / max(|a|, |b|, floor) over all components. The floor keeps
/// vanishing gradients from turning round-off into huge relative errors.
inline double max_relative_error(const Gradient& a, const Gradient& b, double floor = 1e-6) {
  std::vector<double> va, vb;
  a.weights.for_each([&](const double& v) { va.push_back(v); });
  b.weights.for_each([&](const double& v) { vb.push_back(v); });
  for (Eigen::Index k = 0; k < a.potentials.size(); ++k) va.push_back(a.potentials(k));
  for (Eigen::Index k = 0; k < b.potentials.size(); ++k) vb.push_back(b.potentials(k));
  if (va.size() != vb.size()) throw ContractError("gradient shapes differ");
  double worst = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) {
    const double denom = std::max({std::abs(va[i]), std::abs(vb[i]), floor});
    worst = std::max(worst, std::abs(va[i] - vb[i]) / denom);
  }
  return worst;
}

inline double gradient_check(const NetWeights& w, const Sequence& seq, const Vector& u, double ratio = 0.0) {
  return max_relative_error(analytic_gradient(w, seq, u, ratio), numerical_gradient(w, seq, u, ratio));
}

// ---------------------------------------------------------------------------
// Weight snapshots

inline constexpr std::string_view kWeightsMagic = "ILOCINET";
inline constexpr std::uint32_t kWeightsVersion = 2;

inline void put_config(io::Writer& out, const NetConfig& c) {
  out.put<std::int32_t>(c.io_dim), out.put<std::int32_t>(c.pb_dim);
  out.put<std::int32_t>(c.context_dim), out.put<std::int32_t>(c.hidden_dim);
  out.put<double>(c.learn_rate_w), out.put<double>(c.learn_rate_pb);
  out.put<std::int32_t>(c.max_epochs), out.put<double>(c.target_mse);
  out.put<std::int32_t>(c.recog_iters), out.put<std::uint64_t>(c.rng_seed);
  out.put<double>(c.closed_loop_ratio), out.put<double>(c.recog_closed_loop_ratio);
  out.put<double>(c.grad_clip), out.put<std::int32_t>(static_cast<std::int32_t>(c.stop_rule));
}

inline NetConfig get_config(io::Reader& in) {
  NetConfig c;
  c.io_dim = in.get<std::int32_t>(), c.pb_dim = in.get<std::int32_t>();
  c.context_dim = in.get<std::int32_t>(), c.hidden_dim = in.get<std::int32_t>();
  c.learn_rate_w = in.get<double>(), c.learn_rate_pb = in.get<double>();
  c.max_epochs = in.get<std::int32_t>(), c.target_mse = in.get<double>();
  c.recog_iters = in.get<std::int32_t>(), c.rng_seed = in.get<std::uint64_t>();
  c.closed_loop_ratio = in.get<double>(), c.recog_closed_loop_ratio = in.get<double>();
  c.grad_clip = in.get<double>();
  const auto rule = in.get<std::int32_t>();
  if (rule != 0 && rule != 1) throw CorruptFileError("unknown stop rule in weight file");
  c.stop_rule = static_cast<StopRule>(rule);
  return c;
}

inline void put_weights(io::Writer& out, const NetWeights& w) {
  std::vector<double> flat;
  flat.reserve(w.size());
  w.for_each([&](const double& v) { flat.push_back(v); });
  out.put_doubles(flat.data(), flat.size());
}

inline NetWeights get_weights(io::Reader& in, const NetConfig& cfg) {
  NetWeights w = NetWeights::zeros(cfg);
  const auto flat = in.get_doubles();
  if (flat.size() != w.size()) throw CorruptFileError("weight count does not match the recorded config");
  std::size_t i = 0;
  w.for_each([&](double& v) { v = flat[i++]; });
  return w;
}

inline std::string serialize(const NetConfig& cfg, const NetWeights& w) {
  io::Writer out;
  put_config(out, cfg);
  put_weights(out, w);
  return io::frame(kWeightsMagic, kWeightsVersion, out.bytes());
}

inline std::pair<NetConfig, NetWeights> deserialize_weights(const std::string& bytes) {
  io::Reader in(io::unframe(kWeightsMagic, kWeightsVersion, bytes));
  NetConfig cfg = get_config(in);
  NetWeights w = get_weights(in, cfg);
  if (!in.at_end()) throw CorruptFileError("trailing bytes in weight file");
  return {cfg, std::move(w)};
}

}  // namespace iloci
