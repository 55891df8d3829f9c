// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "rgnn/adapter.hpp"
#include "rgnn/dataset.hpp"
#include "rgnn/pipeline.hpp"
#include "rgnn/rng.hpp"

using namespace rgnn;

namespace {

RetrievalSet fake_retrieved(const std::vector<std::vector<double>>& keys,
                            const std::vector<long>& classes) {
    RetrievalSet r;
    for (std::size_t i = 0; i < keys.size(); ++i)
        r.push_back({keys[i], Label::of_class(classes[i]), static_cast<double>(i), 1000 + i});
    return r;
}

std::vector<double> rand_vec(Rng& rng, std::size_t d) {
    std::vector<double> v(d);
    for (double& x : v) x = rng.normal();
    return v;
}

double mean_attn0_on_valid(ModelParams& model, const FlatIndex& index,
                           const AdapterParams& adapter, const Dataset& ds, std::size_t k) {
    EncodedSplit enc = encode_split(model, ds.valid);
    Tape tape(false);
    double sum = 0.0;
    for (std::size_t i = 0; i < ds.valid.size(); ++i) {
        RetrievalSet r = retrieve_with_dropout(index, enc.embeddings[i], k, false);
        Tensor attn = compute_attention(tape, adapter, enc.embeddings[i], r);
        sum += attn->v[0];
    }
    return sum / static_cast<double>(ds.valid.size());
}

FlatIndex index_from_model(ModelParams& model, const Dataset& ds, bool shuffle_labels,
                           std::uint64_t seed) {
    EncodedSplit enc = encode_split(model, ds.train);
    std::vector<std::pair<std::uint64_t, Label>> payloads;
    for (const Example& ex : ds.train) payloads.emplace_back(ex.id, ex.label);
    if (shuffle_labels) {
        Rng rng(seed);
        for (auto& [id, lbl] : payloads) {
            (void)id;
            lbl = Label::of_class(static_cast<long>(rng.next(ds.num_classes)));
        }
    }
    return FlatIndex::build(enc.embeddings, payloads);
}

}  // namespace

TEST_CASE("training retrieval drops the query itself") {
    FlatIndex ix = FlatIndex::build({{0.0}, {1.0}, {2.0}, {3.0}, {4.0}},
                                    {{0, Label::of_class(0)},
                                     {1, Label::of_class(1)},
                                     {2, Label::of_class(0)},
                                     {3, Label::of_class(1)},
                                     {4, Label::of_class(0)}});
    RetrievalSet r = retrieve_with_dropout(ix, {2.0}, 3, true, 2);
    CHECK(r.size() == 3);
    for (const Retrieved& e : r) CHECK(e.example_id != 2);

    // brute-force oracle: top-4 by distance then remove self
    std::vector<std::uint64_t> expect = {1, 3, 0};  // distances 1,1,2 after dropping id 2
    for (std::size_t i = 0; i < 3; ++i) CHECK(r[i].example_id == expect[i]);

    RetrievalSet eval = retrieve_with_dropout(ix, {2.0}, 3, false);
    CHECK(eval.size() == 3);
    CHECK(eval[0].example_id == 2);  // self allowed at evaluation

    // absent self id: nearest dropped instead
    RetrievalSet aug = retrieve_with_dropout(ix, {2.0}, 3, true, 999);
    for (const Retrieved& e : aug) CHECK(e.example_id != 2);

    CHECK_THROWS(retrieve_with_dropout(ix, {2.0}, 3, true));       // missing self id
    CHECK_THROWS(retrieve_with_dropout(ix, {2.0}, 5, true, 2));    // index smaller than k+1
}

TEST_CASE("identical rows with zero bias give uniform attention") {
    Rng rng(3);
    AdapterParams p = init_adapter(3, 4, 0, 1);
    std::vector<double> h = rand_vec(rng, 4);
    RetrievalSet r = fake_retrieved({h, h, h}, {0, 1, 2});
    Tape tape(false);
    Tensor attn = compute_attention(tape, p, h, r);
    for (double a : attn->v) CHECK(a == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("zero scores reduce attention to softmax of the bias") {
    Rng rng(4);
    AdapterParams p = init_adapter(2, 3, 0, 1);
    for (double& x : p.w1->v) x = 0.0;  // q = 0 so scores vanish
    p.phi->v = {std::log(2.0), 0.0, 0.0};
    std::vector<double> h = rand_vec(rng, 3);
    RetrievalSet r = fake_retrieved({rand_vec(rng, 3), rand_vec(rng, 3)}, {0, 1});
    Tape tape(false);
    Tensor attn = compute_attention(tape, p, h, r);
    CHECK(attn->v[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(attn->v[1] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(attn->v[2] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("attention matches the hand-rolled formula on random inputs") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t d = 4, dp = 3, k = 3;
        AdapterParams p = init_adapter(k, d, dp, 100 + trial);
        for (double& x : p.phi->v) x = rng.normal();
        std::vector<double> h = rand_vec(rng, d);
        RetrievalSet r =
            fake_retrieved({rand_vec(rng, d), rand_vec(rng, d), rand_vec(rng, d)}, {0, 1, 0});
        Tape tape(false);
        Tensor attn = compute_attention(tape, p, h, r);

        // oracle: q = W1 h, K_i = W2 H_i, softmax(q.K^T/sqrt(dp) + phi)
        std::vector<std::vector<double>> H = {h, r[0].key, r[1].key, r[2].key};
        std::vector<double> q(dp, 0.0);
        for (std::size_t a = 0; a < dp; ++a)
            for (std::size_t b = 0; b < d; ++b) q[a] += p.w1->at(a, b) * h[b];
        std::vector<double> scores(k + 1);
        for (std::size_t i = 0; i <= k; ++i) {
            double s = 0.0;
            for (std::size_t a = 0; a < dp; ++a) {
                double ki = 0.0;
                for (std::size_t b = 0; b < d; ++b) ki += p.w2->at(a, b) * H[i][b];
                s += q[a] * ki;
            }
            scores[i] = s / std::sqrt(static_cast<double>(dp)) + p.phi->v[i];
        }
        const double mx = *std::max_element(scores.begin(), scores.end());
        double z = 0.0;
        for (double s : scores) z += std::exp(s - mx);
        double total = 0.0;
        for (std::size_t i = 0; i <= k; ++i) {
            const double expect = std::exp(scores[i] - mx) / z;
            CHECK(attn->v[i] == doctest::Approx(expect).epsilon(1e-9));
            CHECK(attn->v[i] >= 0.0);
            total += attn->v[i];
        }
        CHECK(std::abs(total - 1.0) < 1e-9);
    }
}

TEST_CASE("bias shift invariance") {
    Rng rng(6);
    AdapterParams p = init_adapter(2, 3, 0, 9);
    std::vector<double> h = rand_vec(rng, 3);
    RetrievalSet r = fake_retrieved({rand_vec(rng, 3), rand_vec(rng, 3)}, {0, 1});
    Tape tape(false);
    Tensor a1 = compute_attention(tape, p, h, r);
    for (double& x : p.phi->v) x += 7.5;
    Tensor a2 = compute_attention(tape, p, h, r);
    for (std::size_t i = 0; i < a1->v.size(); ++i)
        CHECK(a1->v[i] == doctest::Approx(a2->v[i]).epsilon(1e-9));
}

TEST_CASE("classification loss hand values") {
    Rng rng(7);
    RetrievalSet r3 = fake_retrieved(
        {rand_vec(rng, 2), rand_vec(rng, 2), rand_vec(rng, 2)}, {0, 1, 1});
    Tape tape(false);

    Tensor sure = make_tensor(1, 4, {1, 0, 0, 0});
    CHECK(cls_loss(tape, sure, {1.0, 0.0}, r3, 0)->v[0] == doctest::Approx(0.0).epsilon(1e-9));

    RetrievalSet r1 = fake_retrieved({rand_vec(rng, 2)}, {1});
    Tensor half = make_tensor(1, 2, {0.5, 0.5});
    CHECK(cls_loss(tape, half, {0.0, 1.0}, r1, 1)->v[0] == doctest::Approx(0.0).epsilon(1e-9));

    // uniform over 4, model prob 0.8, one matching retrieval
    RetrievalSet one_match = fake_retrieved(
        {rand_vec(rng, 2), rand_vec(rng, 2), rand_vec(rng, 2)}, {0, 1, 1});
    Tensor quarter = make_tensor(1, 4, {0.25, 0.25, 0.25, 0.25});
    CHECK(cls_loss(tape, quarter, {0.8, 0.2}, one_match, 0)->v[0] ==
          doctest::Approx(-std::log(0.45)).epsilon(1e-9));

    CHECK_THROWS(cls_loss(tape, quarter, {0.8, 0.2}, one_match, 5));
}

TEST_CASE("regression loss hand values") {
    Rng rng(8);
    RetrievalSet r1 = fake_retrieved({rand_vec(rng, 2)}, {0});
    r1[0].label = Label::of_value(4.0);
    Tape tape(false);

    Tensor a = make_tensor(1, 2, {1.0, 0.0});
    CHECK(reg_loss(tape, a, 3.0, r1, 3.0)->v[0] == doctest::Approx(0.0));

    Tensor even = make_tensor(1, 2, {0.5, 0.5});
    CHECK(reg_loss(tape, even, 2.0, r1, 3.0)->v[0] == doctest::Approx(0.0).epsilon(1e-12));

    Tensor skew = make_tensor(1, 2, {0.25, 0.75});
    r1[0].label = Label::of_value(4.0);
    CHECK(reg_loss(tape, skew, 0.0, r1, 1.0)->v[0] == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("prediction ops") {
    Rng rng(9);
    RetrievalSet r = fake_retrieved(
        {rand_vec(rng, 2), rand_vec(rng, 2), rand_vec(rng, 2)}, {3, 1, 0});

    // attention fully on slot 0 reduces to the base model
    std::vector<double> probs = {0.1, 0.2, 0.3, 0.4};
    ClsPrediction base = cls_predict({1, 0, 0, 0}, probs, r);
    for (std::size_t c = 0; c < 4; ++c) CHECK(base.distribution[c] == doctest::Approx(probs[c]));
    CHECK(base.predicted == 3);

    // all mass on the first retrieval slot predicts that label
    ClsPrediction follow = cls_predict({0, 1, 0, 0}, probs, r);
    CHECK(follow.predicted == 3);

    // normalization is preserved
    Tape tape(false);
    AdapterParams p = init_adapter(3, 2, 0, 10);
    std::vector<double> h = rand_vec(rng, 2);
    Tensor attn = compute_attention(tape, p, h, r);
    ClsPrediction mix = cls_predict(attn->v, probs, r);
    double sum = 0.0;
    for (double v : mix.distribution) sum += v;
    CHECK(std::abs(sum - 1.0) < 1e-9);

    // regression: slot-0 identity, uniform mean, dot-product oracle
    RetrievalSet rv = fake_retrieved({rand_vec(rng, 2), rand_vec(rng, 2)}, {0, 0});
    rv[0].label = Label::of_value(1.0);
    rv[1].label = Label::of_value(3.0);
    CHECK(reg_predict({1, 0, 0}, 7.0, rv) == doctest::Approx(7.0));
    CHECK(reg_predict({1.0 / 3, 1.0 / 3, 1.0 / 3}, 2.0, rv) == doctest::Approx(2.0));
    std::vector<double> w = {0.2, 0.5, 0.3};
    CHECK(reg_predict(w, 2.0, rv) ==
          doctest::Approx(0.2 * 2.0 + 0.5 * 1.0 + 0.3 * 3.0).epsilon(1e-12));
}

TEST_CASE("averaging ablation equals uniform-attention prediction") {
    Rng rng(11);
    RetrievalSet r = fake_retrieved(
        {rand_vec(rng, 2), rand_vec(rng, 2), rand_vec(rng, 2)}, {2, 2, 2});
    std::vector<double> probs = {0.5, 0.5, 0.0};
    ClsPrediction avg = averaging_cls_predict(probs, r);
    CHECK(avg.distribution[2] == doctest::Approx(0.75));
    CHECK(avg.predicted == 2);
    ClsPrediction manual = cls_predict({0.25, 0.25, 0.25, 0.25}, probs, r);
    for (std::size_t c = 0; c < 3; ++c)
        CHECK(avg.distribution[c] == doctest::Approx(manual.distribution[c]).epsilon(1e-12));

    RetrievalSet rv = fake_retrieved({rand_vec(rng, 2)}, {0});
    rv[0].label = Label::of_value(4.0);
    CHECK(averaging_reg_predict(2.0, rv) == doctest::Approx(3.0));
}

TEST_CASE("classification loss equals minus log of the predicted mass") {
    Rng rng(12);
    for (int trial = 0; trial < 10; ++trial) {
        AdapterParams p = init_adapter(3, 3, 0, 200 + trial);
        for (double& x : p.phi->v) x = rng.normal();
        std::vector<double> h = rand_vec(rng, 3);
        RetrievalSet r = fake_retrieved(
            {rand_vec(rng, 3), rand_vec(rng, 3), rand_vec(rng, 3)}, {0, 1, 0});
        std::vector<double> probs = {0.6, 0.4};
        Tape tape(false);
        Tensor attn = compute_attention(tape, p, h, r);
        const double loss = cls_loss(tape, attn, probs, r, 0)->v[0];
        ClsPrediction pred = cls_predict(attn->v, probs, r);
        CHECK(loss == doctest::Approx(-std::log(pred.distribution[0])).epsilon(1e-9));
    }
}

TEST_CASE("adapter loss gradients match finite differences") {
    Rng rng(13);
    const std::size_t d = 3, k = 2;
    std::vector<double> h = rand_vec(rng, d);
    RetrievalSet r = fake_retrieved({rand_vec(rng, d), rand_vec(rng, d)}, {0, 1});
    RetrievalSet rv = r;
    rv[0].label = Label::of_value(1.5);
    rv[1].label = Label::of_value(-0.5);

    AdapterParams p = init_adapter(k, d, d, 77);
    for (Tensor probe : {p.w1, p.w2, p.phi}) {
        auto f_cls = [&](Tape& t, const Tensor& x) {
            AdapterParams q = p;
            if (probe == p.w1)
                q.w1 = x;
            else if (probe == p.w2)
                q.w2 = x;
            else
                q.phi = x;
            Tensor attn = compute_attention(t, q, h, r);
            return cls_loss(t, attn, {0.3, 0.7}, r, 1);
        };
        CHECK(grad_check(f_cls, probe, 1e-5).pass);

        auto f_reg = [&](Tape& t, const Tensor& x) {
            AdapterParams q = p;
            if (probe == p.w1)
                q.w1 = x;
            else if (probe == p.w2)
                q.w2 = x;
            else
                q.phi = x;
            Tensor attn = compute_attention(t, q, h, rv);
            return reg_loss(t, attn, 0.4, rv, 0.9);
        };
        CHECK(grad_check(f_reg, probe, 1e-5).pass);
    }
}

TEST_CASE("informative neighbors pull attention off the model slot") {
    // untrained model: base output is noise, but embeddings still cluster by
    // class, so retrieval labels carry the signal
    Dataset ds = gen_longtail_motif(4, 15, 5, 0.25, 31);
    GnnConfig cfg;
    cfg.kind = GnnKind::GIN;
    cfg.layers = 2;
    cfg.hidden_dim = 8;
    cfg.readout = ReadoutMode::Mean;
    ModelParams model = init_model(cfg, ds.d_v, 0, 1, ds.num_classes, 3);
    FlatIndex ix = index_from_model(model, ds, false, 0);

    AdapterTrainOptions opts;
    opts.epochs = 30;
    opts.k = 3;
    opts.batch_size = 16;
    opts.seed = 5;
    DropoutAudit audit;
    AdapterParams adapter = train_adapter(model, ix, ds, opts, &audit);

    CHECK(audit.checked == 30 * ds.train.size());
    CHECK(audit.violations == 0);
    CHECK(mean_attn0_on_valid(model, ix, adapter, ds, opts.k) < 0.25);
}

TEST_CASE("noisy neighbors push attention onto the model slot") {
    Dataset ds = gen_longtail_motif(4, 15, 5, 0.25, 31);
    GnnConfig cfg;
    cfg.kind = GnnKind::GIN;
    cfg.layers = 2;
    cfg.hidden_dim = 8;
    cfg.readout = ReadoutMode::Mean;
    // a trained model whose own predictions beat label-shuffled retrievals
    ModelParams model = train_model(ds, cfg, 30, 16, 0.01, 3);
    FlatIndex ix = index_from_model(model, ds, true, 99);

    AdapterTrainOptions opts;
    opts.epochs = 30;
    opts.k = 3;
    opts.batch_size = 16;
    opts.seed = 5;
    AdapterParams adapter = train_adapter(model, ix, ds, opts);
    CHECK(mean_attn0_on_valid(model, ix, adapter, ds, opts.k) > 0.25);
}

TEST_CASE("adapter training is seed-deterministic") {
    Dataset ds = gen_longtail_motif(3, 10, 3, 0.34, 41);
    GnnConfig cfg;
    cfg.layers = 1;
    cfg.hidden_dim = 6;
    ModelParams model = init_model(cfg, ds.d_v, 0, 1, ds.num_classes, 11);
    FlatIndex ix = index_from_model(model, ds, false, 0);

    AdapterTrainOptions opts;
    opts.epochs = 5;
    opts.k = 2;
    opts.batch_size = 8;
    opts.seed = 17;
    AdapterParams a = train_adapter(model, ix, ds, opts);
    AdapterParams b = train_adapter(model, ix, ds, opts);
    CHECK(a.w1->v == b.w1->v);
    CHECK(a.w2->v == b.w2->v);
    CHECK(a.phi->v == b.phi->v);

    AdapterTrainOptions big = opts;
    big.k = ds.train.size();  // train split smaller than k+1
    CHECK_THROWS(train_adapter(model, ix, ds, big));
}
