// SPDX-License-Identifier: Apache-2.0

#include "rgnn/adapter.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "rgnn/metrics.hpp"
#include "rgnn/rng.hpp"

namespace rgnn {

AdapterParams init_adapter(std::size_t k, std::size_t d, std::size_t d_proj,
                           std::uint64_t seed) {
    if (k < 1 || d < 1) throw std::invalid_argument("init_adapter: k and d must be >= 1");
    if (d_proj == 0) d_proj = d;
    AdapterParams p;
    p.k = k;
    p.d = d;
    p.d_proj = d_proj;
    Rng rng(seed ^ 0xd6e8feb86659fd93ULL);
    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    p.w1 = make_tensor(d_proj, d, true);
    p.w2 = make_tensor(d_proj, d, true);
    for (double& x : p.w1->v) x = rng.uniform(-bound, bound);
    for (double& x : p.w2->v) x = rng.uniform(-bound, bound);
    p.phi = make_tensor(1, k + 1, std::vector<double>(k + 1, 0.0), true);
    return p;
}

RetrievalSet retrieve_with_dropout(const FlatIndex& index, const std::vector<double>& h,
                                   std::size_t k, bool training,
                                   std::optional<std::uint64_t> self_id) {
    if (index.size() == 0) throw std::invalid_argument("retrieve_with_dropout: empty index");
    RetrievalSet out;
    if (training) {
        if (!self_id) throw std::invalid_argument("retrieve_with_dropout: training needs self_id");
        if (index.size() < k + 1)
            throw std::invalid_argument("retrieve_with_dropout: index smaller than k+1");
        auto hits = index.search_topk(h, k + 1);
        const auto self = std::find_if(hits.begin(), hits.end(), [&](const SearchHit& s) {
            return s.entry->example_id == *self_id;
        });
        // absent self (e.g. augmented queries): drop the nearest instead
        hits.erase(self != hits.end() ? self : hits.begin());
        for (const SearchHit& s : hits)
            out.push_back({s.entry->key, s.entry->label, s.distance, s.entry->example_id});
    } else {
        for (const SearchHit& s : index.search_topk(h, k))
            out.push_back({s.entry->key, s.entry->label, s.distance, s.entry->example_id});
    }
    return out;
}

Tensor compute_attention(Tape& tape, const AdapterParams& params,
                         const std::vector<double>& h, const RetrievalSet& retrieved) {
    if (h.size() != params.d)
        throw std::invalid_argument("compute_attention: embedding dimension mismatch");
    if (retrieved.size() != params.k)
        throw std::invalid_argument("compute_attention: retrieved count != k");
    Tensor hx = make_tensor(1, params.d, h);
    Tensor stacked = make_tensor(params.k + 1, params.d);
    for (std::size_t j = 0; j < params.d; ++j) stacked->at(0, j) = h[j];
    for (std::size_t i = 0; i < params.k; ++i) {
        if (retrieved[i].key.size() != params.d)
            throw std::invalid_argument("compute_attention: retrieved key dimension mismatch");
        for (std::size_t j = 0; j < params.d; ++j)
            stacked->at(i + 1, j) = retrieved[i].key[j];
    }
    Tensor q = tape.matmul_nt(hx, params.w1);        // 1 x d_proj
    Tensor keys = tape.matmul_nt(stacked, params.w2);  // (k+1) x d_proj
    Tensor scores = tape.scale(tape.matmul_nt(q, keys),
                               1.0 / std::sqrt(static_cast<double>(params.d_proj)));
    return tape.softmax_row(tape.add(scores, params.phi));
}

Tensor cls_loss(Tape& tape, const Tensor& attn, const std::vector<double>& model_probs,
                const RetrievalSet& retrieved, long true_class) {
    if (true_class < 0 || static_cast<std::size_t>(true_class) >= model_probs.size())
        throw std::invalid_argument("cls_loss: class index out of range");
    if (attn->cols != retrieved.size() + 1)
        throw std::invalid_argument("cls_loss: attention length mismatch");
    Tensor mask = make_tensor(1, attn->cols);
    mask->v[0] = model_probs[static_cast<std::size_t>(true_class)];
    for (std::size_t i = 0; i < retrieved.size(); ++i)
        mask->v[i + 1] = retrieved[i].label.cls == true_class ? 1.0 : 0.0;
    Tensor hit_mass = tape.sum_all(tape.mul(attn, mask));
    return tape.scale(tape.log(tape.clamp_min(hit_mass, 1e-12)), -1.0);
}

Tensor reg_loss(Tape& tape, const Tensor& attn, double model_value,
                const RetrievalSet& retrieved, double target) {
    if (attn->cols != retrieved.size() + 1)
        throw std::invalid_argument("reg_loss: attention length mismatch");
    Tensor z = make_tensor(1, attn->cols);
    z->v[0] = model_value;
    for (std::size_t i = 0; i < retrieved.size(); ++i) z->v[i + 1] = retrieved[i].label.value;
    Tensor pred = tape.sum_all(tape.mul(attn, z));
    Tensor diff = tape.sub(pred, make_scalar(target));
    return tape.mul(diff, diff);
}

ClsPrediction cls_predict(const std::vector<double>& attn,
                          const std::vector<double>& model_probs,
                          const RetrievalSet& retrieved) {
    if (attn.size() != retrieved.size() + 1)
        throw std::invalid_argument("cls_predict: attention length mismatch");
    ClsPrediction p;
    p.distribution.resize(model_probs.size());
    for (std::size_t c = 0; c < model_probs.size(); ++c)
        p.distribution[c] = attn[0] * model_probs[c];
    for (std::size_t i = 0; i < retrieved.size(); ++i) {
        const long c = retrieved[i].label.cls;
        if (c >= 0 && static_cast<std::size_t>(c) < p.distribution.size())
            p.distribution[static_cast<std::size_t>(c)] += attn[i + 1];
    }
    p.predicted = static_cast<long>(std::max_element(p.distribution.begin(),
                                                     p.distribution.end()) -
                                    p.distribution.begin());
    return p;
}

double reg_predict(const std::vector<double>& attn, double model_value,
                   const RetrievalSet& retrieved) {
    if (attn.size() != retrieved.size() + 1)
        throw std::invalid_argument("reg_predict: attention length mismatch");
    double s = attn[0] * model_value;
    for (std::size_t i = 0; i < retrieved.size(); ++i)
        s += attn[i + 1] * retrieved[i].label.value;
    return s;
}

ClsPrediction averaging_cls_predict(const std::vector<double>& model_probs,
                                    const RetrievalSet& retrieved) {
    const std::vector<double> uniform(retrieved.size() + 1,
                                      1.0 / static_cast<double>(retrieved.size() + 1));
    return cls_predict(uniform, model_probs, retrieved);
}

double averaging_reg_predict(double model_value, const RetrievalSet& retrieved) {
    const std::vector<double> uniform(retrieved.size() + 1,
                                      1.0 / static_cast<double>(retrieved.size() + 1));
    return reg_predict(uniform, model_value, retrieved);
}

namespace {

double validation_metric(TaskKind task, const AdapterParams& params,
                         const EncodedSplit& valid_enc,
                         const std::vector<RetrievalSet>& valid_retr,
                         const std::vector<Example>& valid) {
    Tape tape(false);
    if (task == TaskKind::Regression) {
        std::vector<double> preds, targets;
        for (std::size_t i = 0; i < valid.size(); ++i) {
            Tensor attn = compute_attention(tape, params, valid_enc.embeddings[i], valid_retr[i]);
            preds.push_back(reg_predict(attn->v, valid_enc.outputs[i][0], valid_retr[i]));
            targets.push_back(valid[i].label.value);
        }
        return -mae(preds, targets);  // higher is better
    }
    std::vector<long> preds, labels;
    std::vector<double> scores;
    for (std::size_t i = 0; i < valid.size(); ++i) {
        Tensor attn = compute_attention(tape, params, valid_enc.embeddings[i], valid_retr[i]);
        ClsPrediction p = cls_predict(attn->v, valid_enc.outputs[i], valid_retr[i]);
        preds.push_back(p.predicted);
        labels.push_back(valid[i].label.cls);
        if (task == TaskKind::Binary) scores.push_back(p.distribution[1]);
    }
    if (task == TaskKind::Binary) {
        try {
            return roc_auc(scores, labels);
        } catch (const std::invalid_argument&) {
            return accuracy(preds, labels);  // degenerate single-class validation split
        }
    }
    return accuracy(preds, labels);
}

}  // namespace

AdapterParams train_adapter(ModelParams& model, const FlatIndex& index, const Dataset& ds,
                            const AdapterTrainOptions& opts, DropoutAudit* audit) {
    if (ds.train.size() < opts.k + 1)
        throw std::invalid_argument("train_adapter: train split smaller than k+1");
    const std::size_t d = model.embedding_dim();
    AdapterParams params = init_adapter(opts.k, d, opts.d_proj ? opts.d_proj : d, opts.seed);

    // the model is frozen: embeddings, base outputs, and retrieval sets are
    // fixed for the whole phase and computed once
    EncodedSplit train_enc = encode_split(model, ds.train);
    EncodedSplit valid_enc = encode_split(model, ds.valid);
    std::vector<RetrievalSet> train_retr(ds.train.size());
    for (std::size_t i = 0; i < ds.train.size(); ++i)
        train_retr[i] = retrieve_with_dropout(index, train_enc.embeddings[i], opts.k, true,
                                              ds.train[i].id);
    std::vector<RetrievalSet> valid_retr(ds.valid.size());
    for (std::size_t i = 0; i < ds.valid.size(); ++i)
        valid_retr[i] = retrieve_with_dropout(index, valid_enc.embeddings[i], opts.k, false);

    AdamState adam;
    adam.base_lr = opts.base_lr;
    const std::vector<Tensor> learnables = params.parameters();
    adam.init(learnables);
    Rng order_rng(opts.seed * 0x9e3779b97f4a7c15ULL + 3);

    AdapterParams best = params;
    best.w1 = make_tensor(params.w1->rows, params.w1->cols, params.w1->v);
    best.w2 = make_tensor(params.w2->rows, params.w2->cols, params.w2->v);
    best.phi = make_tensor(1, params.phi->cols, params.phi->v);
    double best_metric = -std::numeric_limits<double>::infinity();

    std::vector<std::size_t> order(ds.train.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
        order_rng.shuffle(order);
        const double lr = lr_at(static_cast<long>(epoch), opts.base_lr);
        for (std::size_t off = 0; off < order.size(); off += opts.batch_size) {
            const std::size_t end = std::min(off + opts.batch_size, order.size());
            Tape tape;
            Tensor total = make_scalar(0.0);
            for (std::size_t t = off; t < end; ++t) {
                const std::size_t i = order[t];
                if (audit) {
                    ++audit->checked;
                    for (const Retrieved& r : train_retr[i])
                        if (r.example_id == ds.train[i].id) ++audit->violations;
                }
                Tensor attn = compute_attention(tape, params, train_enc.embeddings[i],
                                                train_retr[i]);
                Tensor li = ds.task == TaskKind::Regression
                                ? reg_loss(tape, attn, train_enc.outputs[i][0], train_retr[i],
                                           ds.train[i].label.value)
                                : cls_loss(tape, attn, train_enc.outputs[i], train_retr[i],
                                           ds.train[i].label.cls);
                total = tape.add(total, li);
            }
            Tensor loss = tape.scale(total, 1.0 / static_cast<double>(end - off));
            tape.backward(loss);
            adam_step(adam, learnables, lr);
        }
        const double metric = validation_metric(ds.task, params, valid_enc, valid_retr, ds.valid);
        if (metric > best_metric) {
            best_metric = metric;
            best.w1->v = params.w1->v;
            best.w2->v = params.w2->v;
            best.phi->v = params.phi->v;
        }
    }
    return best;
}

}  // namespace rgnn
