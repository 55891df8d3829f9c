// SPDX-License-Identifier: Apache-2.0

#include "rgnn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace rgnn {

Tensor make_tensor(std::size_t rows, std::size_t cols, bool requires_grad) {
    auto t = std::make_shared<TensorNode>();
    t->rows = rows;
    t->cols = cols;
    t->v.assign(rows * cols, 0.0);
    t->requires_grad = requires_grad;
    return t;
}

Tensor make_tensor(std::size_t rows, std::size_t cols, std::vector<double> values,
                   bool requires_grad) {
    if (values.size() != rows * cols)
        throw std::invalid_argument("make_tensor: value count does not match shape");
    auto t = std::make_shared<TensorNode>();
    t->rows = rows;
    t->cols = cols;
    t->v = std::move(values);
    t->requires_grad = requires_grad;
    return t;
}

Tensor make_scalar(double value, bool requires_grad) {
    return make_tensor(1, 1, {value}, requires_grad);
}

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a->rows != b->rows || a->cols != b->cols)
        throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

}  // namespace

bool Tape::track(std::initializer_list<const Tensor*> inputs) const {
    if (!enabled_) return false;
    for (const Tensor* t : inputs)
        if ((*t)->requires_grad) return true;
    return false;
}

void Tape::record(std::function<void()> back, std::initializer_list<Tensor> touched) {
    records_.push_back(std::move(back));
    for (const Tensor& t : touched) touched_.push_back(t);
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
    if (a->cols != b->rows) throw std::invalid_argument("matmul: inner dimension mismatch");
    Tensor out = make_tensor(a->rows, b->cols);
    const std::size_t m = a->rows, k = a->cols, n = b->cols;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a->v[i * k + p];
            if (av == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) out->v[i * n + j] += av * b->v[p * n + j];
        }
    if (track({&a, &b})) {
        out->requires_grad = true;
        record(
            [a, b, out, m, k, n] {
                if (a->requires_grad) {
                    a->ensure_grad();
                    for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < n; ++j) {
                            const double go = out->g[i * n + j];
                            if (go == 0.0) continue;
                            for (std::size_t p = 0; p < k; ++p)
                                a->g[i * k + p] += go * b->v[p * n + j];
                        }
                }
                if (b->requires_grad) {
                    b->ensure_grad();
                    for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t p = 0; p < k; ++p) {
                            const double av = a->v[i * k + p];
                            if (av == 0.0) continue;
                            for (std::size_t j = 0; j < n; ++j)
                                b->g[p * n + j] += av * out->g[i * n + j];
                        }
                }
            },
            {a, b, out});
    }
    return out;
}

Tensor Tape::matmul_nt(const Tensor& a, const Tensor& b) {
    if (a->cols != b->cols) throw std::invalid_argument("matmul_nt: inner dimension mismatch");
    Tensor out = make_tensor(a->rows, b->rows);
    const std::size_t m = a->rows, k = a->cols, n = b->rows;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += a->v[i * k + p] * b->v[j * k + p];
            out->v[i * n + j] = s;
        }
    if (track({&a, &b})) {
        out->requires_grad = true;
        record(
            [a, b, out, m, k, n] {
                if (a->requires_grad) {
                    a->ensure_grad();
                    for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < n; ++j) {
                            const double go = out->g[i * n + j];
                            if (go == 0.0) continue;
                            for (std::size_t p = 0; p < k; ++p)
                                a->g[i * k + p] += go * b->v[j * k + p];
                        }
                }
                if (b->requires_grad) {
                    b->ensure_grad();
                    for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < n; ++j) {
                            const double go = out->g[i * n + j];
                            if (go == 0.0) continue;
                            for (std::size_t p = 0; p < k; ++p)
                                b->g[j * k + p] += go * a->v[i * k + p];
                        }
                }
            },
            {a, b, out});
    }
    return out;
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    Tensor out = make_tensor(a->rows, a->cols);
    for (std::size_t i = 0; i < out->size(); ++i) out->v[i] = a->v[i] + b->v[i];
    if (track({&a, &b})) {
        out->requires_grad = true;
        record(
            [a, b, out] {
                if (a->requires_grad) {
                    a->ensure_grad();
                    for (std::size_t i = 0; i < out->size(); ++i) a->g[i] += out->g[i];
                }
                if (b->requires_grad) {
                    b->ensure_grad();
                    for (std::size_t i = 0; i < out->size(); ++i) b->g[i] += out->g[i];
                }
            },
            {a, b, out});
    }
    return out;
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    Tensor out = make_tensor(a->rows, a->cols);
    for (std::size_t i = 0; i < out->size(); ++i) out->v[i] = a->v[i] - b->v[i];
    if (track({&a, &b})) {
        out->requires_grad = true;
        record(
            [a, b, out] {
                if (a->requires_grad) {
                    a->ensure_grad();
                    for (std::size_t i = 0; i < out->size(); ++i) a->g[i] += out->g[i];
                }
                if (b->requires_grad) {
                    b->ensure_grad();
                    for (std::size_t i = 0; i < out->size(); ++i) b->g[i] -= out->g[i];
                }
            },
            {a, b, out});
    }
    return out;
}

Tensor Tape::add_rowvec(const Tensor& a, const Tensor& bias) {
    if (bias->rows != 1 || bias->cols != a->cols)
        throw std::invalid_argument("add_rowvec: bias must be 1 x cols(a)");
    Tensor out = make_tensor(a->rows, a->cols);
    for (std::size_t i = 0; i < a->rows; ++i)
        for (std::size_t j = 0; j < a->cols; ++j)
            out->at(i, j) = a->at(i, j) + bias->v[j];
    if (track({&a, &bias})) {
        out->requires_grad = true;
        record(
            [a, bias, out] {
                if (a->requires_grad) {
                    a->ensure_grad();
                    for (std::size_t i = 0; i < out->size(); ++i) a->g[i] += out->g[i];
                }
                if (bias->requires_grad) {
                    bias->ensure_grad();
                    for (std::size_t i = 0; i < a->rows; ++i)
                        for (std::size_t j = 0; j < a->cols; ++j)
                            bias->g[j] += out->g[i * a->cols + j];
                }
            },
            {a, bias, out});
    }
    return out;
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    Tensor out = make_tensor(a->rows, a->cols);
    for (std::size_t i = 0; i < out->size(); ++i) out->v[i] = a->v[i] * b->v[i];
    if (track({&a, &b})) {
        out->requires_grad = true;
        record(
            [a, b, out] {
                if (a->requires_grad) {
                    a->ensure_grad();
                    for (std::size_t i = 0; i < out->size(); ++i) a->g[i] += out->g[i] * b->v[i];
                }
                if (b->requires_grad) {
                    b->ensure_grad();
                    for (std::size_t i = 0; i < out->size(); ++i) b->g[i] += out->g[i] * a->v[i];
                }
            },
            {a, b, out});
    }
    return out;
}

Tensor Tape::scale(const Tensor& a, double c) {
    Tensor out = make_tensor(a->rows, a->cols);
    for (std::size_t i = 0; i < out->size(); ++i) out->v[i] = a->v[i] * c;
    if (track({&a})) {
        out->requires_grad = true;
        record(
            [a, out, c] {
                a->ensure_grad();
                for (std::size_t i = 0; i < out->size(); ++i) a->g[i] += out->g[i] * c;
            },
            {a, out});
    }
    return out;
}

Tensor Tape::relu(const Tensor& a) {
    Tensor out = make_tensor(a->rows, a->cols);
    for (std::size_t i = 0; i < out->size(); ++i) out->v[i] = a->v[i] > 0.0 ? a->v[i] : 0.0;
    if (track({&a})) {
        out->requires_grad = true;
        record(
            [a, out] {
                a->ensure_grad();
                for (std::size_t i = 0; i < out->size(); ++i)
                    if (a->v[i] > 0.0) a->g[i] += out->g[i];
            },
            {a, out});
    }
    return out;
}

Tensor Tape::sigmoid(const Tensor& a) {
    Tensor out = make_tensor(a->rows, a->cols);
    for (std::size_t i = 0; i < out->size(); ++i) out->v[i] = 1.0 / (1.0 + std::exp(-a->v[i]));
    if (track({&a})) {
        out->requires_grad = true;
        record(
            [a, out] {
                a->ensure_grad();
                for (std::size_t i = 0; i < out->size(); ++i) {
                    const double s = out->v[i];
                    a->g[i] += out->g[i] * s * (1.0 - s);
                }
            },
            {a, out});
    }
    return out;
}

Tensor Tape::softmax_row(const Tensor& a) {
    Tensor out = make_tensor(a->rows, a->cols);
    for (std::size_t i = 0; i < a->rows; ++i) {
        double mx = a->at(i, 0);
        for (std::size_t j = 1; j < a->cols; ++j) mx = std::max(mx, a->at(i, j));
        double z = 0.0;
        for (std::size_t j = 0; j < a->cols; ++j) {
            out->at(i, j) = std::exp(a->at(i, j) - mx);
            z += out->at(i, j);
        }
        for (std::size_t j = 0; j < a->cols; ++j) out->at(i, j) /= z;
    }
    if (track({&a})) {
        out->requires_grad = true;
        record(
            [a, out] {
                a->ensure_grad();
                for (std::size_t i = 0; i < a->rows; ++i) {
                    double dot = 0.0;
                    for (std::size_t j = 0; j < a->cols; ++j)
                        dot += out->g[i * a->cols + j] * out->v[i * a->cols + j];
                    for (std::size_t j = 0; j < a->cols; ++j) {
                        const std::size_t idx = i * a->cols + j;
                        a->g[idx] += out->v[idx] * (out->g[idx] - dot);
                    }
                }
            },
            {a, out});
    }
    return out;
}

Tensor Tape::log(const Tensor& a) {
    Tensor out = make_tensor(a->rows, a->cols);
    for (std::size_t i = 0; i < out->size(); ++i) out->v[i] = std::log(a->v[i]);
    if (track({&a})) {
        out->requires_grad = true;
        record(
            [a, out] {
                a->ensure_grad();
                for (std::size_t i = 0; i < out->size(); ++i) a->g[i] += out->g[i] / a->v[i];
            },
            {a, out});
    }
    return out;
}

Tensor Tape::clamp_min(const Tensor& a, double lo) {
    Tensor out = make_tensor(a->rows, a->cols);
    for (std::size_t i = 0; i < out->size(); ++i) out->v[i] = std::max(a->v[i], lo);
    if (track({&a})) {
        out->requires_grad = true;
        record(
            [a, out, lo] {
                a->ensure_grad();
                for (std::size_t i = 0; i < out->size(); ++i)
                    if (a->v[i] > lo) a->g[i] += out->g[i];
            },
            {a, out});
    }
    return out;
}

Tensor Tape::sum_all(const Tensor& a) {
    Tensor out = make_scalar(0.0);
    double s = 0.0;
    for (double x : a->v) s += x;
    out->v[0] = s;
    if (track({&a})) {
        out->requires_grad = true;
        record(
            [a, out] {
                a->ensure_grad();
                for (std::size_t i = 0; i < a->size(); ++i) a->g[i] += out->g[0];
            },
            {a, out});
    }
    return out;
}

Tensor Tape::concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: empty input");
    const std::size_t cols = parts[0]->cols;
    std::size_t rows = 0;
    bool needs = false;
    for (const Tensor& p : parts) {
        if (p->cols != cols) throw std::invalid_argument("concat_rows: column mismatch");
        rows += p->rows;
        needs = needs || p->requires_grad;
    }
    Tensor out = make_tensor(rows, cols);
    std::size_t off = 0;
    for (const Tensor& p : parts) {
        std::copy(p->v.begin(), p->v.end(), out->v.begin() + static_cast<long>(off));
        off += p->size();
    }
    if (enabled_ && needs) {
        out->requires_grad = true;
        std::vector<Tensor> owned = parts;
        records_.push_back([owned, out] {
            std::size_t o = 0;
            for (const Tensor& p : owned) {
                if (p->requires_grad) {
                    p->ensure_grad();
                    for (std::size_t i = 0; i < p->size(); ++i) p->g[i] += out->g[o + i];
                }
                o += p->size();
            }
        });
        for (const Tensor& p : parts) touched_.push_back(p);
        touched_.push_back(out);
    }
    return out;
}

Tensor Tape::reshape(const Tensor& a, std::size_t rows, std::size_t cols) {
    if (rows * cols != a->size()) throw std::invalid_argument("reshape: element count mismatch");
    Tensor out = make_tensor(rows, cols, a->v);
    if (track({&a})) {
        out->requires_grad = true;
        record(
            [a, out] {
                a->ensure_grad();
                for (std::size_t i = 0; i < a->size(); ++i) a->g[i] += out->g[i];
            },
            {a, out});
    }
    return out;
}

Tensor Tape::gather_rows(const Tensor& a, const std::vector<std::size_t>& idx) {
    for (std::size_t i : idx)
        if (i >= a->rows) throw std::out_of_range("gather_rows: row index out of range");
    Tensor out = make_tensor(idx.size(), a->cols);
    for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t j = 0; j < a->cols; ++j) out->at(r, j) = a->at(idx[r], j);
    if (track({&a})) {
        out->requires_grad = true;
        record(
            [a, out, idx] {
                a->ensure_grad();
                for (std::size_t r = 0; r < idx.size(); ++r)
                    for (std::size_t j = 0; j < a->cols; ++j)
                        a->g[idx[r] * a->cols + j] += out->g[r * a->cols + j];
            },
            {a, out});
    }
    return out;
}

Tensor Tape::scatter_sum(const Tensor& messages, const std::vector<std::size_t>& targets,
                         std::size_t num_rows) {
    if (targets.size() != messages->rows)
        throw std::invalid_argument("scatter_sum: one target per message row required");
    for (std::size_t t : targets)
        if (t >= num_rows) throw std::out_of_range("scatter_sum: target out of range");
    Tensor out = make_tensor(num_rows, messages->cols);
    for (std::size_t r = 0; r < targets.size(); ++r)
        for (std::size_t j = 0; j < messages->cols; ++j)
            out->at(targets[r], j) += messages->at(r, j);
    if (track({&messages})) {
        out->requires_grad = true;
        record(
            [messages, out, targets] {
                messages->ensure_grad();
                for (std::size_t r = 0; r < targets.size(); ++r)
                    for (std::size_t j = 0; j < messages->cols; ++j)
                        messages->g[r * messages->cols + j] +=
                            out->g[targets[r] * messages->cols + j];
            },
            {messages, out});
    }
    return out;
}

Tensor Tape::segment_mean(const Tensor& a, const std::vector<std::size_t>& targets,
                          std::size_t num_segments) {
    if (targets.size() != a->rows)
        throw std::invalid_argument("segment_mean: one target per row required");
    std::vector<double> counts(num_segments, 0.0);
    for (std::size_t t : targets) {
        if (t >= num_segments) throw std::out_of_range("segment_mean: target out of range");
        counts[t] += 1.0;
    }
    Tensor out = make_tensor(num_segments, a->cols);
    for (std::size_t r = 0; r < targets.size(); ++r)
        for (std::size_t j = 0; j < a->cols; ++j) out->at(targets[r], j) += a->at(r, j);
    for (std::size_t s = 0; s < num_segments; ++s) {
        if (counts[s] == 0.0) continue;
        for (std::size_t j = 0; j < a->cols; ++j) out->at(s, j) /= counts[s];
    }
    if (track({&a})) {
        out->requires_grad = true;
        record(
            [a, out, targets, counts] {
                a->ensure_grad();
                for (std::size_t r = 0; r < targets.size(); ++r)
                    for (std::size_t j = 0; j < a->cols; ++j)
                        a->g[r * a->cols + j] +=
                            out->g[targets[r] * a->cols + j] / counts[targets[r]];
            },
            {a, out});
    }
    return out;
}

Tensor Tape::scale_rows(const Tensor& a, const std::vector<double>& coeff) {
    if (coeff.size() != a->rows)
        throw std::invalid_argument("scale_rows: one coefficient per row required");
    Tensor out = make_tensor(a->rows, a->cols);
    for (std::size_t i = 0; i < a->rows; ++i)
        for (std::size_t j = 0; j < a->cols; ++j) out->at(i, j) = a->at(i, j) * coeff[i];
    if (track({&a})) {
        out->requires_grad = true;
        record(
            [a, out, coeff] {
                a->ensure_grad();
                for (std::size_t i = 0; i < a->rows; ++i)
                    for (std::size_t j = 0; j < a->cols; ++j)
                        a->g[i * a->cols + j] += out->g[i * a->cols + j] * coeff[i];
            },
            {a, out});
    }
    return out;
}

Tensor Tape::pick_rows(const Tensor& a, const std::vector<std::size_t>& idx) {
    if (idx.size() != a->rows)
        throw std::invalid_argument("pick_rows: one column index per row required");
    for (std::size_t j : idx)
        if (j >= a->cols) throw std::out_of_range("pick_rows: column index out of range");
    Tensor out = make_tensor(a->rows, 1);
    for (std::size_t i = 0; i < a->rows; ++i) out->v[i] = a->at(i, idx[i]);
    if (track({&a})) {
        out->requires_grad = true;
        record(
            [a, out, idx] {
                a->ensure_grad();
                for (std::size_t i = 0; i < a->rows; ++i)
                    a->g[i * a->cols + idx[i]] += out->g[i];
            },
            {a, out});
    }
    return out;
}

void Tape::push_record(std::function<void()> back, const std::vector<Tensor>& touched) {
    records_.push_back(std::move(back));
    for (const Tensor& t : touched) touched_.push_back(t);
}

void Tape::backward(const Tensor& loss) {
    if (loss->rows != 1 || loss->cols != 1)
        throw std::invalid_argument("backward: loss must be a scalar");
    std::unordered_set<TensorNode*> seen;
    for (const Tensor& t : touched_) {
        if (seen.insert(t.get()).second) t->zero_grad();
    }
    loss->ensure_grad();
    loss->g[0] = 1.0;
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)();
    clear();
}

void Tape::clear() {
    records_.clear();
    touched_.clear();
}

GradCheckReport grad_check(const std::function<Tensor(Tape&, const Tensor&)>& f,
                           const Tensor& point, double tol, double step) {
    Tensor p = make_tensor(point->rows, point->cols, point->v, true);
    Tape tape;
    Tensor loss = f(tape, p);
    tape.backward(loss);
    std::vector<double> analytic = p->g.empty() ? std::vector<double>(p->size(), 0.0) : p->g;

    GradCheckReport rep;
    Tape notape(false);
    Tensor q = make_tensor(point->rows, point->cols, point->v, false);
    for (std::size_t i = 0; i < q->size(); ++i) {
        const double orig = q->v[i];
        q->v[i] = orig + step;
        const double fp = f(notape, q)->v[0];
        q->v[i] = orig - step;
        const double fm = f(notape, q)->v[0];
        q->v[i] = orig;
        const double numeric = (fp - fm) / (2.0 * step);
        const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1.0});
        rep.max_rel_err = std::max(rep.max_rel_err, std::abs(analytic[i] - numeric) / denom);
    }
    rep.pass = rep.max_rel_err < tol;
    return rep;
}

}  // namespace rgnn
