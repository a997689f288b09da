#include "moldline/nn/architectures.hpp"

#include "moldline/error.hpp"

namespace moldline::nn {

const std::vector<std::string>& architecture_names() {
  static const std::vector<std::string> names{"mlp_2fc", "cnn1_fc1", "cnn2_fc1", "cnn2_fc2", "cnn3_fc2"};
  return names;
}

NetworkSpec build_architecture(const std::string& name, const ArchitectureOptions& o) {
  using L = LayerSpec;
  NetworkSpec s;
  s.name = name;
  s.input = {28, 28, 1};
  if (name == "mlp_2fc") {
    s.layers = {L::flatten(784), L::dense(o.mlp_hidden), L::relu(), L::dense(1)};
  } else if (name == "cnn1_fc1") {
    s.layers = {L::conv(32, 5), L::pool(), L::dropout(o.dropout_rate), L::relu(), L::flatten(6272),
                L::dense(1)};
  } else if (name == "cnn2_fc1") {
    s.layers = {L::conv(32, 5), L::pool(), L::conv(64, 5), L::pool(), L::dropout(o.dropout_rate),
                L::relu(), L::flatten(3136), L::dense(1)};
  } else if (name == "cnn2_fc2") {
    s.layers = {L::conv(32, 5), L::pool(), L::conv(64, 5), L::pool(), L::dropout(o.dropout_rate),
                L::relu(), L::flatten(3136), L::dense(o.fc_hidden), L::dense(1)};
  } else if (name == "cnn3_fc2") {
    const int w = 3 * 3 * o.conv3_filters[2];
    s.layers = {L::conv(o.conv3_filters[0], 3), L::pool(), L::conv(o.conv3_filters[1], 3), L::pool(),
                L::conv(o.conv3_filters[2], 3), L::pool(), L::dropout(o.dropout_rate), L::relu(),
                L::flatten(w), L::dense(o.fc_hidden), L::dense(1)};
    s.iterations = 100000;
  } else {
    fail(ErrorCode::UnknownModel, "unknown architecture '" + name + "'");
  }
  return s;
}

std::vector<NetworkSpec> build_all_architectures(const ArchitectureOptions& options) {
  std::vector<NetworkSpec> out;
  for (const auto& n : architecture_names()) out.push_back(build_architecture(n, options));
  return out;
}

}  // namespace moldline::nn
