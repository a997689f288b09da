#include "moldline/nn/network.hpp"

#include <cmath>

#include "moldline/error.hpp"
#include "moldline/text_io.hpp"

namespace moldline::nn {

namespace {

const char* type_name(LayerSpec::Type t) {
  switch (t) {
    case LayerSpec::Type::Dense: return "dense";
    case LayerSpec::Type::Conv2d: return "conv2d";
    case LayerSpec::Type::MaxPool: return "maxpool";
    case LayerSpec::Type::Relu: return "relu";
    case LayerSpec::Type::Dropout: return "dropout";
    case LayerSpec::Type::Flatten: return "flatten";
  }
  return "?";
}

std::unique_ptr<Layer> make_layer(const LayerSpec& s, bool rate_is_keep) {
  switch (s.type) {
    case LayerSpec::Type::Dense: return std::make_unique<Dense>(s.units);
    case LayerSpec::Type::Conv2d: return std::make_unique<Conv2d>(s.filters, s.kernel, s.stride, s.padding);
    case LayerSpec::Type::MaxPool: return std::make_unique<MaxPool>(s.size, s.stride);
    case LayerSpec::Type::Relu: return std::make_unique<Relu>();
    case LayerSpec::Type::Dropout: return std::make_unique<Dropout>(rate_is_keep ? s.rate : 1.0 - s.rate);
    case LayerSpec::Type::Flatten: return std::make_unique<Flatten>(s.expected);
  }
  fail(ErrorCode::BadConfig, "unknown layer type");
}

}  // namespace

LayerSpec LayerSpec::dense(int units) {
  LayerSpec s;
  s.type = Type::Dense;
  s.units = units;
  return s;
}

LayerSpec LayerSpec::conv(int filters, int kernel, int stride, Padding padding) {
  LayerSpec s;
  s.type = Type::Conv2d;
  s.filters = filters;
  s.kernel = kernel;
  s.stride = stride;
  s.padding = padding;
  return s;
}

LayerSpec LayerSpec::pool(int size, int stride) {
  LayerSpec s;
  s.type = Type::MaxPool;
  s.size = size;
  s.stride = stride;
  return s;
}

LayerSpec LayerSpec::relu() { return LayerSpec{}; }

LayerSpec LayerSpec::dropout(double rate) {
  LayerSpec s;
  s.type = Type::Dropout;
  s.rate = rate;
  return s;
}

LayerSpec LayerSpec::flatten(int expected) {
  LayerSpec s;
  s.type = Type::Flatten;
  s.expected = expected;
  return s;
}

std::string LayerSpec::describe() const {
  switch (type) {
    case Type::Dense: return "FC(" + std::to_string(units) + ")";
    case Type::Conv2d:
      return "C(" + std::to_string(filters) + "," + std::to_string(kernel) + "," + std::to_string(stride) +
             (padding == Padding::Valid ? ",valid)" : ")");
    case Type::MaxPool: return "P";
    case Type::Relu: return "N";
    case Type::Dropout: return "D";
    case Type::Flatten: return expected ? "F(" + std::to_string(expected) + ")" : "F";
  }
  return "?";
}

nlohmann::json LayerSpec::to_json() const {
  nlohmann::json j{{"type", type_name(type)}};
  switch (type) {
    case Type::Dense: j["units"] = units; break;
    case Type::Conv2d:
      j["filters"] = filters;
      j["kernel"] = kernel;
      j["stride"] = stride;
      j["padding"] = padding == Padding::Same ? "same" : "valid";
      break;
    case Type::MaxPool:
      j["size"] = size;
      j["stride"] = stride;
      break;
    case Type::Dropout: j["rate"] = rate; break;
    case Type::Flatten: j["expected"] = expected; break;
    case Type::Relu: break;
  }
  return j;
}

LayerSpec LayerSpec::from_json(const nlohmann::json& j) {
  const auto t = j.at("type").get<std::string>();
  if (t == "dense") return dense(j.at("units").get<int>());
  if (t == "conv2d") {
    const auto pad = j.value("padding", std::string("same"));
    if (pad != "same" && pad != "valid") fail(ErrorCode::BadConfig, "conv2d padding must be same or valid");
    return conv(j.at("filters").get<int>(), j.at("kernel").get<int>(), j.value("stride", 1),
                pad == "same" ? Padding::Same : Padding::Valid);
  }
  if (t == "maxpool") return pool(j.value("size", 2), j.value("stride", 2));
  if (t == "relu") return relu();
  if (t == "dropout") return dropout(j.at("rate").get<double>());
  if (t == "flatten") return flatten(j.value("expected", 0));
  fail(ErrorCode::BadConfig, "unknown layer type '" + t + "'");
}

std::string NetworkSpec::describe() const {
  std::string out;
  for (const auto& l : layers) out += (out.empty() ? "" : "-") + l.describe();
  return out;
}

nlohmann::json NetworkSpec::to_json() const {
  nlohmann::json ls = nlohmann::json::array();
  for (const auto& l : layers) ls.push_back(l.to_json());
  return {{"name", name},
          {"input", input},
          {"layers", ls},
          {"loss", loss_name(loss)},
          {"huber_delta", huber_delta},
          {"optimizer", optimizer.to_json()},
          {"init", init.kind == Init::Kind::Xavier ? "xavier" : "normal"},
          {"init_std", init.stddev},
          {"l2", l2},
          {"batch_size", batch_size},
          {"iterations", iterations},
          {"log_every", log_every},
          {"seed", seed},
          {"dropout_rate_is_keep", dropout_rate_is_keep}};
}

NetworkSpec NetworkSpec::from_json(const nlohmann::json& j) {
  NetworkSpec s;
  s.name = j.value("name", s.name);
  s.input = j.at("input").get<Shape>();
  for (const auto& l : j.at("layers")) s.layers.push_back(LayerSpec::from_json(l));
  const auto loss = parse_loss(j.value("loss", std::string("l1")));
  if (!loss) fail(ErrorCode::BadConfig, "unknown loss '" + j.value("loss", std::string()) + "'");
  s.loss = *loss;
  s.huber_delta = j.value("huber_delta", s.huber_delta);
  if (j.contains("optimizer")) s.optimizer = OptimizerSpec::from_json(j.at("optimizer"));
  const auto init = j.value("init", std::string("normal"));
  if (init != "normal" && init != "xavier") fail(ErrorCode::BadConfig, "init must be normal or xavier");
  s.init.kind = init == "xavier" ? Init::Kind::Xavier : Init::Kind::Normal;
  s.init.stddev = j.value("init_std", s.init.stddev);
  s.l2 = j.value("l2", s.l2);
  s.batch_size = j.value("batch_size", s.batch_size);
  s.iterations = j.value("iterations", s.iterations);
  s.log_every = j.value("log_every", s.log_every);
  s.seed = j.value("seed", s.seed);
  s.dropout_rate_is_keep = j.value("dropout_rate_is_keep", s.dropout_rate_is_keep);
  return s;
}

std::vector<Shape> validate(const NetworkSpec& spec) {
  std::vector<Shape> shapes{spec.input};
  (void)volume(spec.input);
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    auto layer = make_layer(spec.layers[i], spec.dropout_rate_is_keep);
    try {
      shapes.push_back(layer->output_shape(shapes.back()));
    } catch (const Error& e) {
      fail(ErrorCode::ShapeMismatch, "layer " + std::to_string(i) + " " + spec.layers[i].describe() +
                                         " on input " + shape_string(shapes.back()) + ": " + e.what());
    }
  }
  if (shapes.back() != Shape{1})
    fail(ErrorCode::ShapeMismatch, "network must end in a single scalar, got " + shape_string(shapes.back()));
  return shapes;
}

Network::Network(NetworkSpec spec)
    : spec_(std::move(spec)), shapes_(validate(spec_)), dropout_rng_(derive_seed(spec_.seed, "dropout")) {
  Rng init_rng(derive_seed(spec_.seed, "init"));
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    layers_.push_back(make_layer(spec_.layers[i], spec_.dropout_rate_is_keep));
    layers_.back()->initialize(shapes_[i], init_rng, spec_.init);
  }
}

Tensor Network::forward(const Tensor& x, bool training) {
  if (x.shape.size() != spec_.input.size() + 1 ||
      !std::equal(spec_.input.begin(), spec_.input.end(), x.shape.begin() + 1))
    fail(ErrorCode::ShapeMismatch, "network input " + shape_string(x.shape) + " does not match " +
                                       shape_string(spec_.input));
  Tensor h = x;
  for (auto& l : layers_) h = l->forward(h, training, dropout_rng_);
  return h;
}

Tensor Network::backward(const Tensor& grad_out) {
  Tensor g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

std::vector<Param*> Network::params() {
  std::vector<Param*> out;
  for (auto& l : layers_)
    for (auto* p : l->params()) out.push_back(p);
  return out;
}

void Network::zero_grad() {
  for (auto* p : params()) p->zero_grad();
}

std::size_t Network::parameter_count() {
  std::size_t n = 0;
  for (auto* p : params()) n += p->value.size();
  return n;
}

std::vector<double> Network::predict(const Tensor& x, std::size_t chunk) {
  const auto n = static_cast<std::size_t>(x.shape.at(0));
  std::vector<double> out;
  out.reserve(n);
  for (std::size_t b = 0; b < n; b += chunk) {
    const Tensor y = forward(x.slice_rows(b, std::min(chunk, n - b)), false);
    out.insert(out.end(), y.data.begin(), y.data.end());
  }
  return out;
}

nlohmann::json Network::to_json() {
  nlohmann::json ps = nlohmann::json::array();
  for (auto* p : params()) ps.push_back(p->value);
  return {{"spec", spec_.to_json()}, {"params", ps}};
}

Network Network::from_json(const nlohmann::json& j) {
  Network net(NetworkSpec::from_json(j.at("spec")));
  const auto& ps = j.at("params");
  auto params = net.params();
  if (ps.size() != params.size()) fail(ErrorCode::MalformedRecord, "network parameter count mismatch");
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto v = ps[k].get<std::vector<double>>();
    if (v.size() != params[k]->value.size())
      fail(ErrorCode::MalformedRecord, "network parameter " + std::to_string(k) + " has the wrong size");
    params[k]->value.assign(v.begin(), v.end());
  }
  return net;
}

TrainResult train_network(Network& net, const Tensor& X, std::span<const double> y) {
  const NetworkSpec& spec = net.spec();
  const auto n = static_cast<std::size_t>(X.shape.at(0));
  if (y.size() != n) fail(ErrorCode::ShapeMismatch, "train: one label per sample required");
  if (n == 0 || spec.batch_size < 1) fail(ErrorCode::InvalidArgument, "train: empty data or batch");
  Optimizer opt(spec.optimizer);
  Rng batch_rng(derive_seed(spec.seed, "batch"));
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  auto params = net.params();

  TrainResult res;
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
    const Tensor out = net.forward(X.gather_rows(idx), true);
    const LossValue loss = compute_loss(spec.loss, out.data, yb, spec.huber_delta);
    if (!std::isfinite(loss.value))
      fail(ErrorCode::NonFiniteLoss, spec.name + ": loss became non-finite at iteration " + std::to_string(it));
    net.backward(Tensor(out.shape, loss.grad));
    if (spec.l2 > 0.0)
      for (auto* p : params)
        if (p->decays)
          for (std::size_t i = 0; i < p->value.size(); ++i) p->grad[i] += spec.l2 * p->value[i];
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

std::string train_log_csv(const std::vector<TrainPoint>& trajectory) {
  std::string out = "iteration,loss\n";
  for (const auto& p : trajectory) out += std::to_string(p.iteration) + "," + format_double(p.loss) + "\n";
  return out;
}

}  // namespace moldline::nn
