#include "moldline/lstm.hpp"

#include <cmath>

#include "moldline/error.hpp"
#include "moldline/random.hpp"

namespace moldline::lstm {

namespace {

using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

LstmLayer::LstmLayer(int input_size, int hidden)
    : W("W", {4 * hidden, input_size}, true),
      U("U", {4 * hidden, hidden}, true),
      b("b", {4 * hidden}, false),
      input_size_(input_size),
      hidden_(hidden) {}

std::vector<RowMat> LstmLayer::forward(const std::vector<RowMat>& xs) {
  const int H = hidden_;
  const auto T = xs.size();
  if (T == 0) fail(ErrorCode::ShapeMismatch, "lstm: empty sequence");
  const Eigen::Index B = xs[0].rows();
  MapC Wm(W.value.data(), 4 * H, input_size_);
  MapC Um(U.value.data(), 4 * H, H);
  Eigen::Map<const Eigen::RowVectorXd> bv(b.value.data(), 4 * H);
  x_ = xs;
  act_.assign(T, RowMat());
  c_.assign(T, RowMat());
  h_.assign(T, RowMat());
  RowMat h_prev = RowMat::Zero(B, H), c_prev = RowMat::Zero(B, H);
  for (std::size_t t = 0; t < T; ++t) {
    if (xs[t].cols() != input_size_ || xs[t].rows() != B)
      fail(ErrorCode::ShapeMismatch, "lstm: step input has the wrong shape");
    RowMat z = xs[t] * Wm.transpose() + h_prev * Um.transpose();
    z.rowwise() += bv;
    RowMat c(B, H), h(B, H);
    for (Eigen::Index r = 0; r < B; ++r) {
      double* zr = z.row(r).data();
      for (int k = 0; k < H; ++k) {
        const double i = sigmoid(zr[k]);
        const double f = sigmoid(zr[H + k]);
        const double g = std::tanh(zr[2 * H + k]);
        const double o = sigmoid(zr[3 * H + k]);
        zr[k] = i;
        zr[H + k] = f;
        zr[2 * H + k] = g;
        zr[3 * H + k] = o;
        c(r, k) = f * c_prev(r, k) + i * g;
        h(r, k) = o * std::tanh(c(r, k));
      }
    }
    act_[t] = std::move(z);
    c_[t] = c;
    h_[t] = h;
    h_prev = std::move(h);
    c_prev = std::move(c);
  }
  return h_;
}

std::vector<RowMat> LstmLayer::backward(const std::vector<RowMat>& dh_ext) {
  const int H = hidden_;
  const auto T = x_.size();
  const Eigen::Index B = x_[0].rows();
  MapC Wm(W.value.data(), 4 * H, input_size_);
  MapC Um(U.value.data(), 4 * H, H);
  Map dW(W.grad.data(), 4 * H, input_size_);
  Map dU(U.grad.data(), 4 * H, H);
  Eigen::Map<Eigen::RowVectorXd> db(b.grad.data(), 4 * H);

  std::vector<RowMat> dx(T);
  RowMat dh_next = RowMat::Zero(B, H), dc_next = RowMat::Zero(B, H);
  RowMat dz(B, 4 * H);
  for (std::size_t t = T; t-- > 0;) {
    const RowMat& a = act_[t];
    for (Eigen::Index r = 0; r < B; ++r)
      for (int k = 0; k < H; ++k) {
        const double i = a(r, k), f = a(r, H + k), g = a(r, 2 * H + k), o = a(r, 3 * H + k);
        const double tc = std::tanh(c_[t](r, k));
        const double c_prev = t > 0 ? c_[t - 1](r, k) : 0.0;
        const double dh = dh_ext[t](r, k) + dh_next(r, k);
        const double dc = dc_next(r, k) + dh * o * (1.0 - tc * tc);
        dz(r, k) = dc * g * i * (1.0 - i);
        dz(r, H + k) = dc * c_prev * f * (1.0 - f);
        dz(r, 2 * H + k) = dc * i * (1.0 - g * g);
        dz(r, 3 * H + k) = dh * tc * o * (1.0 - o);
        dc_next(r, k) = dc * f;
      }
    dW.noalias() += dz.transpose() * x_[t];
    if (t > 0) dU.noalias() += dz.transpose() * h_[t - 1];
    db += dz.colwise().sum();
    dx[t] = dz * Wm;
    dh_next = dz * Um;
  }
  return dx;
}

StepOutput lstm_step(const LstmLayer& layer, std::span<const double> x, std::span<const double> h_prev,
                     std::span<const double> c_prev) {
  const int H = layer.hidden(), D = layer.input_size();
  if (static_cast<int>(x.size()) != D || static_cast<int>(h_prev.size()) != H ||
      static_cast<int>(c_prev.size()) != H)
    fail(ErrorCode::ShapeMismatch, "lstm_step: input sizes do not match the cell");
  std::vector<double> z(static_cast<std::size_t>(4 * H));
  for (int r = 0; r < 4 * H; ++r) {
    double s = layer.b.value[static_cast<std::size_t>(r)];
    for (int j = 0; j < D; ++j) s += layer.W.value[static_cast<std::size_t>(r * D + j)] * x[static_cast<std::size_t>(j)];
    for (int j = 0; j < H; ++j)
      s += layer.U.value[static_cast<std::size_t>(r * H + j)] * h_prev[static_cast<std::size_t>(j)];
    z[static_cast<std::size_t>(r)] = s;
  }
  StepOutput out;
  out.h.resize(static_cast<std::size_t>(H));
  out.c.resize(static_cast<std::size_t>(H));
  for (int k = 0; k < H; ++k) {
    const auto K = static_cast<std::size_t>(k);
    const auto h = static_cast<std::size_t>(H);
    const double i = sigmoid(z[K]), f = sigmoid(z[h + K]), g = std::tanh(z[2 * h + K]), o = sigmoid(z[3 * h + K]);
    out.c[K] = f * c_prev[K] + i * g;
    out.h[K] = o * std::tanh(out.c[K]);
  }
  return out;
}

nlohmann::json LstmSpec::to_json() const {
  return {{"name", name},         {"timesteps", timesteps},
          {"input_size", input_size}, {"hidden", hidden},
          {"layers", layers},     {"loss", nn::loss_name(loss)},
          {"optimizer", optimizer.to_json()}, {"l2", l2},
          {"batch_size", batch_size}, {"iterations", iterations},
          {"log_every", log_every}, {"clip_norm", clip_norm},
          {"init_std", init_std}, {"forget_bias", forget_bias},
          {"seed", seed}};
}

LstmSpec LstmSpec::from_json(const nlohmann::json& j) {
  LstmSpec s;
  s.name = j.value("name", s.name);
  s.timesteps = j.value("timesteps", s.timesteps);
  s.input_size = j.value("input_size", s.input_size);
  s.hidden = j.value("hidden", s.hidden);
  s.layers = j.value("layers", s.layers);
  const auto loss = nn::parse_loss(j.value("loss", std::string("mse")));
  if (!loss) fail(ErrorCode::BadConfig, "unknown loss for lstm");
  s.loss = *loss;
  if (j.contains("optimizer")) s.optimizer = nn::OptimizerSpec::from_json(j.at("optimizer"));
  s.l2 = j.value("l2", s.l2);
  s.batch_size = j.value("batch_size", s.batch_size);
  s.iterations = j.value("iterations", s.iterations);
  s.log_every = j.value("log_every", s.log_every);
  s.clip_norm = j.value("clip_norm", s.clip_norm);
  s.init_std = j.value("init_std", s.init_std);
  s.forget_bias = j.value("forget_bias", s.forget_bias);
  s.seed = j.value("seed", s.seed);
  return s;
}

LstmNetwork::LstmNetwork(LstmSpec spec) : spec_(std::move(spec)) {
  if (spec_.layers != 1 && spec_.layers != 2) fail(ErrorCode::BadConfig, "lstm: layers must be 1 or 2");
  if (spec_.hidden < 1 || spec_.input_size < 1 || spec_.timesteps < 1)
    fail(ErrorCode::BadConfig, "lstm: sizes must be positive");
  Rng rng(derive_seed(spec_.seed, "init"));
  std::normal_distribution<double> nd(0.0, spec_.init_std);
  const int H = spec_.hidden;
  for (int l = 0; l < spec_.layers; ++l) {
    layers_.emplace_back(l == 0 ? spec_.input_size : H, H);
    auto& layer = layers_.back();
    for (auto& v : layer.W.value) v = nd(rng);
    for (auto& v : layer.U.value) v = nd(rng);
    for (int k = 0; k < H; ++k) layer.b.value[static_cast<std::size_t>(H + k)] = spec_.forget_bias;
  }
  head_W = Param("head_W", {1, H}, true);
  head_b = Param("head_b", {1}, false);
  for (auto& v : head_W.value) v = nd(rng);
}

Tensor LstmNetwork::forward(const Tensor& x) {
  if (x.shape.size() != 3 || x.shape[1] != spec_.timesteps || x.shape[2] != spec_.input_size)
    fail(ErrorCode::ShapeMismatch, "lstm input " + nn::shape_string(x.shape) + " does not match [N, " +
                                       std::to_string(spec_.timesteps) + ", " +
                                       std::to_string(spec_.input_size) + "]");
  const int B = x.shape[0], T = spec_.timesteps, D = spec_.input_size;
  batch_ = B;
  std::vector<RowMat> seq(static_cast<std::size_t>(T), RowMat(B, D));
  for (int s = 0; s < B; ++s)
    for (int t = 0; t < T; ++t)
      std::copy_n(x.data.data() + (static_cast<std::size_t>(s) * T + t) * D, D,
                  seq[static_cast<std::size_t>(t)].row(s).data());
  for (auto& layer : layers_) seq = layer.forward(seq);
  last_h_ = seq.back();
  Tensor y({B, 1});
  Eigen::Map<Eigen::VectorXd>(y.data.data(), B) =
      last_h_ * Eigen::Map<const Eigen::VectorXd>(head_W.value.data(), spec_.hidden);
  for (auto& v : y.data) v += head_b.value[0];
  return y;
}

void LstmNetwork::backward(const Tensor& grad_out) {
  const int B = batch_, T = spec_.timesteps, H = spec_.hidden;
  Eigen::Map<const Eigen::VectorXd> g(grad_out.data.data(), B);
  Eigen::Map<Eigen::RowVectorXd>(head_W.grad.data(), H) += g.transpose() * last_h_;
  head_b.grad[0] += g.sum();
  std::vector<RowMat> dh(static_cast<std::size_t>(T), RowMat::Zero(B, H));
  dh.back() = g * Eigen::Map<const Eigen::RowVectorXd>(head_W.value.data(), H);
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) dh = it->backward(dh);
}

std::vector<Param*> LstmNetwork::params() {
  std::vector<Param*> out;
  for (auto& l : layers_) {
    out.push_back(&l.W);
    out.push_back(&l.U);
    out.push_back(&l.b);
  }
  out.push_back(&head_W);
  out.push_back(&head_b);
  return out;
}

void LstmNetwork::zero_grad() {
  for (auto* p : params()) p->zero_grad();
}

std::vector<double> LstmNetwork::predict(const Tensor& x, std::size_t chunk) {
  const auto n = static_cast<std::size_t>(x.shape.at(0));
  std::vector<double> out;
  out.reserve(n);
  for (std::size_t b = 0; b < n; b += chunk) {
    const Tensor y = forward(x.slice_rows(b, std::min(chunk, n - b)));
    out.insert(out.end(), y.data.begin(), y.data.end());
  }
  return out;
}

nlohmann::json LstmNetwork::to_json() {
  nlohmann::json ps = nlohmann::json::array();
  for (auto* p : params()) ps.push_back(p->value);
  return {{"spec", spec_.to_json()}, {"params", ps}};
}

LstmNetwork LstmNetwork::from_json(const nlohmann::json& j) {
  LstmNetwork net(LstmSpec::from_json(j.at("spec")));
  auto params = net.params();
  const auto& ps = j.at("params");
  if (ps.size() != params.size()) fail(ErrorCode::MalformedRecord, "lstm parameter count mismatch");
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto v = ps[k].get<std::vector<double>>();
    if (v.size() != params[k]->value.size()) fail(ErrorCode::MalformedRecord, "lstm parameter size mismatch");
    params[k]->value.assign(v.begin(), v.end());
  }
  return net;
}

nn::TrainResult train_lstm(LstmNetwork& net, const Tensor& X, std::span<const double> y) {
  const LstmSpec& spec = net.spec();
  const auto n = static_cast<std::size_t>(X.shape.at(0));
  if (y.size() != n) fail(ErrorCode::ShapeMismatch, "train_lstm: one label per sample required");
  nn::Optimizer opt(spec.optimizer);
  Rng batch_rng(derive_seed(spec.seed, "batch"));
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  auto params = net.params();

  nn::TrainResult res;
  std::vector<std::size_t> idx(static_cast<std::size_t>(spec.batch_size));
  std::vector<double> yb(idx.size());
  double window = 0.0;
  int window_n = 0;
  for (int it = 1; it <= spec.iterations; ++it) {
    for (std::size_t k = 0; k < idx.size(); ++k) {
      idx[k] = pick(batch_rng);
      yb[k] = y[idx[k]];
    }
    net.zero_grad();
    const Tensor out = net.forward(X.gather_rows(idx));
    const auto loss = nn::compute_loss(spec.loss, out.data, yb);
    if (!std::isfinite(loss.value))
      fail(ErrorCode::NonFiniteLoss, spec.name + ": loss became non-finite at iteration " + std::to_string(it));
    net.backward(Tensor(out.shape, loss.grad));
    if (spec.l2 > 0.0)
      for (auto* p : params)
        if (p->decays)
          for (std::size_t i = 0; i < p->value.size(); ++i) p->grad[i] += spec.l2 * p->value[i];
    if (spec.clip_norm > 0.0) {
      double sq = 0.0;
      for (auto* p : params)
        for (double g : p->grad) sq += g * g;
      const double norm = std::sqrt(sq);
      if (norm > spec.clip_norm)
        for (auto* p : params)
          for (auto& g : p->grad) g *= spec.clip_norm / norm;
    }
    opt.step(params);

    window += loss.value;
    ++window_n;
    if (spec.log_every > 0 && (it % spec.log_every == 0 || it == spec.iterations)) {
      res.trajectory.push_back({it, window / window_n});
      window = 0.0;
      window_n = 0;
    }
  }
  res.optimizer_state = opt.state_json();
  return res;
}

nn::Shape framing_shape(int length, int channels, int timesteps) {
  if (timesteps < 1 || length % timesteps != 0)
    fail(ErrorCode::BadConfig, "lstm framing: " + std::to_string(length) + " samples do not split into " +
                                   std::to_string(timesteps) + " steps");
  return {timesteps, length / timesteps * channels};
}

}  // namespace moldline::lstm
