// SPDX-License-Identifier: Apache-2.0

#ifndef RGNN_NN_HPP
#define RGNN_NN_HPP

#include <vector>

#include "rgnn/tensor.hpp"

namespace rgnn {

struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double base_lr = 0.01;
    long step = 0;
    // one moment pair per parameter, same order as the parameter list
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;

    void init(const std::vector<Tensor>& params);
};

// One Adam update over `params` using each tensor's accumulated grad.
// Throws if any gradient is non-finite, naming the parameter index.
void adam_step(AdamState& state, const std::vector<Tensor>& params, double lr);

// base * 0.5^(epoch/50)
double lr_at(long epoch, double base);

struct BatchNormState {
    Tensor gamma;  // 1 x features, learnable
    Tensor beta;   // 1 x features, learnable
    std::vector<double> running_mean;
    std::vector<double> running_var;
    double momentum = 0.1;
    double eps = 1e-5;

    explicit BatchNormState(std::size_t features = 0);
    std::size_t features() const { return running_mean.size(); }
};

// Training mode normalizes by batch statistics and updates running stats;
// eval mode normalizes by running stats. Training requires >= 2 rows.
Tensor batch_norm(Tape& tape, const Tensor& x, BatchNormState& state, bool training);

}  // namespace rgnn

#endif
