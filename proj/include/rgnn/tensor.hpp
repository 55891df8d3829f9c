// SPDX-License-Identifier: Apache-2.0

#ifndef RGNN_TENSOR_HPP
#define RGNN_TENSOR_HPP

#include <cstddef>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

namespace rgnn {

// Dense 2-D f64 tensor. Scalars are 1x1.
struct TensorNode {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> v;
    bool requires_grad = false;
    std::vector<double> g;

    std::size_t size() const { return rows * cols; }
    double& at(std::size_t i, std::size_t j) { return v[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return v[i * cols + j]; }
    void ensure_grad() {
        if (g.size() != v.size()) g.assign(v.size(), 0.0);
    }
    void zero_grad() { g.assign(v.size(), 0.0); }
};

using Tensor = std::shared_ptr<TensorNode>;

Tensor make_tensor(std::size_t rows, std::size_t cols, bool requires_grad = false);
Tensor make_tensor(std::size_t rows, std::size_t cols, std::vector<double> values,
                   bool requires_grad = false);
Tensor make_scalar(double value, bool requires_grad = false);

// Reverse-mode tape. Primitive ops record a backward closure when the tape
// is enabled and any input requires a gradient; output tensors then have
// requires_grad set so tracking propagates through composites.
class Tape {
public:
    explicit Tape(bool enabled = true) : enabled_(enabled) {}

    Tensor matmul(const Tensor& a, const Tensor& b);
    // a * b^T
    Tensor matmul_nt(const Tensor& a, const Tensor& b);
    Tensor add(const Tensor& a, const Tensor& b);
    Tensor sub(const Tensor& a, const Tensor& b);
    // broadcast a 1xN bias over every row of a MxN matrix
    Tensor add_rowvec(const Tensor& a, const Tensor& bias);
    Tensor mul(const Tensor& a, const Tensor& b);
    Tensor scale(const Tensor& a, double c);
    Tensor relu(const Tensor& a);
    Tensor sigmoid(const Tensor& a);
    Tensor softmax_row(const Tensor& a);
    Tensor log(const Tensor& a);
    Tensor clamp_min(const Tensor& a, double lo);
    Tensor sum_all(const Tensor& a);
    Tensor concat_rows(const std::vector<Tensor>& parts);
    Tensor reshape(const Tensor& a, std::size_t rows, std::size_t cols);
    Tensor gather_rows(const Tensor& a, const std::vector<std::size_t>& idx);
    Tensor scatter_sum(const Tensor& messages, const std::vector<std::size_t>& targets,
                       std::size_t num_rows);
    Tensor segment_mean(const Tensor& a, const std::vector<std::size_t>& targets,
                        std::size_t num_segments);
    // per-row constant coefficients (not differentiated w.r.t. coeff)
    Tensor scale_rows(const Tensor& a, const std::vector<double>& coeff);
    // picks a[i, idx[i]] into a Mx1 column
    Tensor pick_rows(const Tensor& a, const std::vector<std::size_t>& idx);

    // hooks for ops with a hand-written backward (batch norm lives outside)
    bool wants_grad(std::initializer_list<const Tensor*> inputs) const { return track(inputs); }
    void push_record(std::function<void()> back, const std::vector<Tensor>& touched);

    void backward(const Tensor& loss);
    void clear();
    bool enabled() const { return enabled_; }
    std::size_t num_records() const { return records_.size(); }

private:
    bool track(std::initializer_list<const Tensor*> inputs) const;
    void record(std::function<void()> back, std::initializer_list<Tensor> touched);

    bool enabled_;
    std::vector<std::function<void()>> records_;
    std::vector<Tensor> touched_;
};

struct GradCheckReport {
    double max_rel_err = 0.0;
    bool pass = false;
};

// Central finite differences (step 1e-5) against reverse-mode gradients of a
// scalar-valued function of `point`.
GradCheckReport grad_check(const std::function<Tensor(Tape&, const Tensor&)>& f,
                           const Tensor& point, double tol, double step = 1e-5);

}  // namespace rgnn

#endif
