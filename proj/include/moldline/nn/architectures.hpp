#pragma once

#include <string>
#include <vector>

#include "moldline/nn/network.hpp"

namespace moldline::nn {

struct ArchitectureOptions {
  int conv3_filters[3] = {32, 64, 64};  // cnn3_fc2 filter counts
  double dropout_rate = 0.9;
  int fc_hidden = 1024;
  int mlp_hidden = 128;
};

/// mlp_2fc, cnn1_fc1, cnn2_fc1, cnn2_fc2, cnn3_fc2 on a 28x28x1 input:
///   mlp_2fc   F(784)-FC(128)-N-FC(1)
///   cnn1_fc1  C(32,5,1)-P-D-N-F(6272)-FC(1)
///   cnn2_fc1  C(32,5,1)-P-C(64,5,1)-P-D-N-F(3136)-FC(1)
///   cnn2_fc2  C(32,5,1)-P-C(64,5,1)-P-D-N-F(3136)-FC(1024)-FC(1)
///   cnn3_fc2  C(32,3,1)-P-C(64,3,1)-P-C(64,3,1)-P-D-N-F(576)-FC(1024)-FC(1)
const std::vector<std::string>& architecture_names();
NetworkSpec build_architecture(const std::string& name, const ArchitectureOptions& options = {});
std::vector<NetworkSpec> build_all_architectures(const ArchitectureOptions& options = {});

}  // namespace moldline::nn
