// SPDX-License-Identifier: Apache-2.0

#include "rgnn/nn.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace rgnn {

void AdamState::init(const std::vector<Tensor>& params) {
    step = 0;
    m.clear();
    v.clear();
    for (const Tensor& p : params) {
        m.emplace_back(p->size(), 0.0);
        v.emplace_back(p->size(), 0.0);
    }
}

void adam_step(AdamState& state, const std::vector<Tensor>& params, double lr) {
    if (state.m.size() != params.size())
        throw std::invalid_argument("adam_step: state not initialized for this parameter list");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor p = params[pi];
        p->ensure_grad();
        if (state.m[pi].size() != p->size())
            throw std::invalid_argument("adam_step: parameter shape changed");
        for (std::size_t i = 0; i < p->size(); ++i) {
            const double g = p->g[i];
            if (!std::isfinite(g))
                throw std::runtime_error("adam_step: non-finite gradient in parameter " +
                                         std::to_string(pi));
            state.m[pi][i] = state.beta1 * state.m[pi][i] + (1.0 - state.beta1) * g;
            state.v[pi][i] = state.beta2 * state.v[pi][i] + (1.0 - state.beta2) * g * g;
            const double mhat = state.m[pi][i] / bc1;
            const double vhat = state.v[pi][i] / bc2;
            p->v[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

double lr_at(long epoch, double base) {
    if (epoch < 0) throw std::invalid_argument("lr_at: negative epoch");
    return base * std::pow(0.5, static_cast<double>(epoch / 50));
}

BatchNormState::BatchNormState(std::size_t features) {
    gamma = make_tensor(1, features, std::vector<double>(features, 1.0), true);
    beta = make_tensor(1, features, std::vector<double>(features, 0.0), true);
    running_mean.assign(features, 0.0);
    running_var.assign(features, 1.0);
}

Tensor batch_norm(Tape& tape, const Tensor& x, BatchNormState& state, bool training) {
    const std::size_t n = x->rows, f = x->cols;
    if (f != state.features()) throw std::invalid_argument("batch_norm: feature dim mismatch");
    if (n < 1) throw std::invalid_argument("batch_norm: empty batch");
    if (training && n < 2)
        throw std::invalid_argument("batch_norm: training batch needs >= 2 rows");

    Tensor out = make_tensor(n, f);
    if (training) {
        std::vector<double> mu(f, 0.0), var(f, 0.0), inv_std(f, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < f; ++j) mu[j] += x->at(i, j);
        for (std::size_t j = 0; j < f; ++j) mu[j] /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < f; ++j) {
                const double d = x->at(i, j) - mu[j];
                var[j] += d * d;
            }
        for (std::size_t j = 0; j < f; ++j) var[j] /= static_cast<double>(n);
        for (std::size_t j = 0; j < f; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + state.eps);

        // xhat kept for backward
        auto xhat = std::make_shared<std::vector<double>>(n * f);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < f; ++j) {
                (*xhat)[i * f + j] = (x->at(i, j) - mu[j]) * inv_std[j];
                out->at(i, j) = state.gamma->v[j] * (*xhat)[i * f + j] + state.beta->v[j];
            }

        const double unbias = static_cast<double>(n) / static_cast<double>(n - 1);
        for (std::size_t j = 0; j < f; ++j) {
            state.running_mean[j] =
                (1.0 - state.momentum) * state.running_mean[j] + state.momentum * mu[j];
            state.running_var[j] =
                (1.0 - state.momentum) * state.running_var[j] + state.momentum * var[j] * unbias;
        }

        Tensor gamma = state.gamma, beta = state.beta;
        if (tape.wants_grad({&x, &gamma, &beta})) {
            out->requires_grad = true;
            tape.push_record(
                [x, out, gamma, beta, xhat, inv_std, n, f] {
                    if (gamma->requires_grad) gamma->ensure_grad();
                    if (beta->requires_grad) beta->ensure_grad();
                    std::vector<double> sum_dy(f, 0.0), sum_dy_xhat(f, 0.0);
                    for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t j = 0; j < f; ++j) {
                            const double dy = out->g[i * f + j];
                            sum_dy[j] += dy;
                            sum_dy_xhat[j] += dy * (*xhat)[i * f + j];
                        }
                    if (gamma->requires_grad)
                        for (std::size_t j = 0; j < f; ++j) gamma->g[j] += sum_dy_xhat[j];
                    if (beta->requires_grad)
                        for (std::size_t j = 0; j < f; ++j) beta->g[j] += sum_dy[j];
                    if (x->requires_grad) {
                        x->ensure_grad();
                        const double invn = 1.0 / static_cast<double>(n);
                        for (std::size_t i = 0; i < n; ++i)
                            for (std::size_t j = 0; j < f; ++j) {
                                const double dy = out->g[i * f + j];
                                const double dxhat = dy * gamma->v[j];
                                x->g[i * f + j] +=
                                    inv_std[j] *
                                    (dxhat - invn * (sum_dy[j] * gamma->v[j] +
                                                     (*xhat)[i * f + j] * sum_dy_xhat[j] *
                                                         gamma->v[j]));
                            }
                    }
                },
                {x, out, gamma, beta});
        }
    } else {
        std::vector<double> inv_std(f);
        for (std::size_t j = 0; j < f; ++j)
            inv_std[j] = 1.0 / std::sqrt(state.running_var[j] + state.eps);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < f; ++j)
                out->at(i, j) = state.gamma->v[j] * (x->at(i, j) - state.running_mean[j]) *
                                    inv_std[j] +
                                state.beta->v[j];
        Tensor gamma = state.gamma, beta = state.beta;
        std::vector<double> rmean = state.running_mean;
        if (tape.wants_grad({&x, &gamma, &beta})) {
            out->requires_grad = true;
            tape.push_record(
                [x, out, gamma, beta, inv_std, rmean, n, f] {
                    if (beta->requires_grad) beta->ensure_grad();
                    if (gamma->requires_grad) gamma->ensure_grad();
                    if (x->requires_grad) x->ensure_grad();
                    for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t j = 0; j < f; ++j) {
                            const double dy = out->g[i * f + j];
                            if (beta->requires_grad) beta->g[j] += dy;
                            if (gamma->requires_grad)
                                gamma->g[j] += dy * (x->v[i * f + j] - rmean[j]) * inv_std[j];
                            if (x->requires_grad)
                                x->g[i * f + j] += dy * gamma->v[j] * inv_std[j];
                        }
                },
                {x, out, gamma, beta});
        }
    }
    return out;
}

}  // namespace rgnn
