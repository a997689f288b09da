#include "moldline/neural_regressor.hpp"

#include <algorithm>
#include <cmath>

#include "moldline/error.hpp"
#include "moldline/nn/architectures.hpp"

namespace moldline {

nlohmann::json neural_default_hyperparameters(const std::string& kind) {
  if (kind == "lstm1" || kind == "lstm2")
    return {{"iterations", 100000}, {"batch_size", 17},       {"optimizer", "adam"},
            {"lr", 0.001},          {"loss", "mse"},          {"l2", 0.0},
            {"hidden", 30},         {"timesteps", 100},       {"signal_length", 3000},
            {"channels", 4},        {"clip_norm", 5.0},       {"init_std", 0.1},
            {"forget_bias", 1.0},   {"log_every", 100},       {"seed", 0},
            {"save_optimizer_state", false}};
  const auto& names = nn::architecture_names();
  if (std::find(names.begin(), names.end(), kind) == names.end())
    fail(ErrorCode::UnknownModel, "unknown neural model '" + kind + "'");
  nlohmann::json j{{"iterations", kind == "cnn3_fc2" ? 100000 : 10000},
                   {"batch_size", 17},
                   {"optimizer", "adam"},
                   {"lr", 0.001},
                   {"loss", "l1"},
                   {"l2", 0.01},
                   {"dropout_rate", 0.9},
                   {"dropout_rate_is_keep", true},
                   {"init", "normal"},
                   {"init_std", 0.1},
                   {"log_every", 100},
                   {"seed", 0},
                   {"save_optimizer_state", false}};
  if (kind == "mlp_2fc") j["mlp_hidden"] = 128;
  if (kind == "cnn2_fc2" || kind == "cnn3_fc2") j["fc_hidden"] = 1024;
  if (kind == "cnn3_fc2") j["conv3_filters"] = {32, 64, 64};
  return j;
}

std::unique_ptr<regress::Regressor> make_neural_regressor(const std::string& kind, const nlohmann::json& hyper) {
  return std::make_unique<NeuralRegressor>(kind, hyper);
}

NeuralRegressor::NeuralRegressor(std::string kind, nlohmann::json hyper)
    : kind_(std::move(kind)), hyper_(std::move(hyper)) {
  // Fail early on inconsistent settings.
  if (is_lstm())
    (void)lstm_spec();
  else
    (void)nn::validate(network_spec());
}

nn::NetworkSpec NeuralRegressor::network_spec() const {
  nn::ArchitectureOptions o;
  o.dropout_rate = hyper_.at("dropout_rate").get<double>();
  o.fc_hidden = hyper_.value("fc_hidden", o.fc_hidden);
  o.mlp_hidden = hyper_.value("mlp_hidden", o.mlp_hidden);
  if (hyper_.contains("conv3_filters")) {
    const auto f = hyper_.at("conv3_filters").get<std::vector<int>>();
    if (f.size() != 3) fail(ErrorCode::BadConfig, "conv3_filters needs three entries");
    for (int i = 0; i < 3; ++i) o.conv3_filters[i] = f[static_cast<std::size_t>(i)];
  }
  nn::NetworkSpec s = nn::build_architecture(kind_, o);
  const auto loss = nn::parse_loss(hyper_.at("loss").get<std::string>());
  if (!loss) fail(ErrorCode::BadConfig, kind_ + ": unknown loss");
  s.loss = *loss;
  s.optimizer.name = hyper_.at("optimizer").get<std::string>();
  s.optimizer.lr = hyper_.at("lr").get<double>();
  s.l2 = hyper_.at("l2").get<double>();
  s.batch_size = hyper_.at("batch_size").get<int>();
  s.iterations = hyper_.at("iterations").get<int>();
  s.log_every = hyper_.at("log_every").get<int>();
  s.seed = hyper_.at("seed").get<std::uint64_t>();
  s.dropout_rate_is_keep = hyper_.at("dropout_rate_is_keep").get<bool>();
  const auto init = hyper_.at("init").get<std::string>();
  if (init != "normal" && init != "xavier") fail(ErrorCode::BadConfig, "init must be normal or xavier");
  s.init.kind = init == "xavier" ? nn::Init::Kind::Xavier : nn::Init::Kind::Normal;
  s.init.stddev = hyper_.at("init_std").get<double>();
  return s;
}

lstm::LstmSpec NeuralRegressor::lstm_spec() const {
  lstm::LstmSpec s;
  s.name = kind_;
  s.layers = kind_ == "lstm2" ? 2 : 1;
  const int length = hyper_.at("signal_length").get<int>();
  const int channels = hyper_.at("channels").get<int>();
  s.timesteps = hyper_.at("timesteps").get<int>();
  s.input_size = lstm::framing_shape(length, channels, s.timesteps)[1];
  s.hidden = hyper_.at("hidden").get<int>();
  const auto loss = nn::parse_loss(hyper_.at("loss").get<std::string>());
  if (!loss) fail(ErrorCode::BadConfig, kind_ + ": unknown loss");
  s.loss = *loss;
  s.optimizer.name = hyper_.at("optimizer").get<std::string>();
  s.optimizer.lr = hyper_.at("lr").get<double>();
  s.l2 = hyper_.at("l2").get<double>();
  s.batch_size = hyper_.at("batch_size").get<int>();
  s.iterations = hyper_.at("iterations").get<int>();
  s.log_every = hyper_.at("log_every").get<int>();
  s.clip_norm = hyper_.at("clip_norm").get<double>();
  s.init_std = hyper_.at("init_std").get<double>();
  s.forget_bias = hyper_.at("forget_bias").get<double>();
  s.seed = hyper_.at("seed").get<std::uint64_t>();
  return s;
}

Eigen::Index NeuralRegressor::input_width() const {
  if (is_lstm()) return hyper_.at("signal_length").get<Eigen::Index>() * hyper_.at("channels").get<Eigen::Index>();
  return static_cast<Eigen::Index>(nn::volume(network_spec().input));
}

std::string NeuralRegressor::describe() const {
  if (is_lstm()) {
    const auto s = lstm_spec();
    return "LSTM(" + std::to_string(s.hidden) + ")x" + std::to_string(s.layers) + "-FC(1) over " +
           std::to_string(s.timesteps) + "x" + std::to_string(s.input_size);
  }
  return network_spec().describe();
}

nn::Tensor NeuralRegressor::to_tensor(const regress::Matrix& X) const {
  if (X.cols() != input_width())
    fail(ErrorCode::ShapeMismatch, kind_ + ": expected " + std::to_string(input_width()) +
                                       " inputs per sample, got " + std::to_string(X.cols()));
  nn::Shape shape;
  if (is_lstm()) {
    const auto s = lstm_spec();
    shape = {static_cast<int>(X.rows()), s.timesteps, s.input_size};
  } else {
    shape = network_spec().input;
    shape.insert(shape.begin(), static_cast<int>(X.rows()));
  }
  nn::Tensor t(shape);
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(t.data.data(), X.rows(),
                                                                                     X.cols()) = X;
  return t;
}

void NeuralRegressor::fit(const regress::Matrix& X, const regress::Vector& y) {
  check_fit_input(X, y);
  reset_flags();
  const nn::Tensor t = to_tensor(X);
  y_mean_ = y.mean();
  y_std_ = std::sqrt((y.array() - y_mean_).square().sum() / static_cast<double>(y.size()));
  if (!(y_std_ > 0.0)) {
    y_std_ = 1.0;
    flag("constant_target");
  }
  std::vector<double> z(static_cast<std::size_t>(y.size()));
  for (Eigen::Index i = 0; i < y.size(); ++i) z[static_cast<std::size_t>(i)] = (y(i) - y_mean_) / y_std_;

  nn::TrainResult r;
  if (is_lstm()) {
    lstm_ = std::make_unique<lstm::LstmNetwork>(lstm_spec());
    net_.reset();
    r = lstm::train_lstm(*lstm_, t, z);
  } else {
    net_ = std::make_unique<nn::Network>(network_spec());
    lstm_.reset();
    r = nn::train_network(*net_, t, z);
  }
  trajectory_ = std::move(r.trajectory);
  optimizer_state_ = std::move(r.optimizer_state);
  fitted_ = true;
}

regress::Vector NeuralRegressor::predict(const regress::Matrix& X) const {
  require_fitted();
  const nn::Tensor t = to_tensor(X);
  const std::vector<double> z = lstm_ ? lstm_->predict(t) : net_->predict(t);
  regress::Vector out(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) out(i) = z[static_cast<std::size_t>(i)] * y_std_ + y_mean_;
  return out;
}

nlohmann::json NeuralRegressor::state() const {
  require_fitted();
  nlohmann::json traj = nlohmann::json::array();
  for (const auto& p : trajectory_) traj.push_back({p.iteration, p.loss});
  nlohmann::json s{{"y_mean", y_mean_},
                   {"y_std", y_std_},
                   {"network", lstm_ ? lstm_->to_json() : net_->to_json()},
                   {"trajectory", traj}};
  if (hyper_.value("save_optimizer_state", false)) s["optimizer"] = optimizer_state_;
  return s;
}

void NeuralRegressor::load_state(const nlohmann::json& state) {
  y_mean_ = state.at("y_mean").get<double>();
  y_std_ = state.at("y_std").get<double>();
  if (is_lstm()) {
    lstm_ = std::make_unique<lstm::LstmNetwork>(lstm::LstmNetwork::from_json(state.at("network")));
    net_.reset();
  } else {
    net_ = std::make_unique<nn::Network>(nn::Network::from_json(state.at("network")));
    lstm_.reset();
  }
  trajectory_.clear();
  for (const auto& p : state.value("trajectory", nlohmann::json::array()))
    trajectory_.push_back({p.at(0).get<int>(), p.at(1).get<double>()});
  optimizer_state_ = state.value("optimizer", nlohmann::json());
  fitted_ = true;
}

}  // namespace moldline
