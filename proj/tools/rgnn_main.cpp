// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: dataset generation, two-phase training, index
// construction, adapter training, evaluation, retrieval baselines, report
// rendering, and the gradient-check suite.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rgnn/adapter.hpp"
#include "rgnn/dataset.hpp"
#include "rgnn/gnn.hpp"
#include "rgnn/index.hpp"
#include "rgnn/metrics.hpp"
#include "rgnn/pipeline.hpp"
#include "rgnn/rng.hpp"
#include "rgnn/tensor.hpp"

namespace fs = std::filesystem;
using namespace rgnn;

namespace {

Dataset load_dataset(const std::string& path, const std::string& meta) {
    if (!fs::exists(path))
        throw std::runtime_error("dataset file not found: " + path + " (--data)");
    return load_jsonl(path, meta);
}

Checkpoint load_checkpoint(const std::string& path) {
    if (!fs::exists(path))
        throw std::runtime_error("checkpoint file not found: " + path + " (--checkpoint)");
    return Checkpoint::load(path);
}

FlatIndex load_index(const std::string& path) {
    if (!fs::exists(path))
        throw std::runtime_error("index file not found: " + path + " (--index)");
    return FlatIndex::load(path);
}

void print_report(const MetricsReport& rep) {
    std::printf("metric       %s\n", rep.metric.c_str());
    std::printf("value        %.6f\n", rep.value);
    if (rep.mean) std::printf("mean         %.6f\n", *rep.mean);
    if (rep.std_dev) std::printf("std          %.6f\n", *rep.std_dev);
    if (rep.seeds > 1) std::printf("seeds        %zu\n", rep.seeds);
    if (!rep.groups.empty()) {
        std::printf("%-12s %8s %10s\n", "group", "count", rep.metric.c_str());
        for (const GroupMetric& g : rep.groups)
            std::printf("%-12s %8zu %10.6f\n", g.label.c_str(), g.count, g.value);
    }
}

void write_or_print(const MetricsReport& rep, const std::string& out) {
    if (out.empty()) {
        print_report(rep);
        return;
    }
    std::ofstream f(out);
    if (!f) throw std::runtime_error("cannot write " + out + " (--out)");
    f << rep.to_json() << "\n";
    std::printf("wrote %s\n", out.c_str());
}

int cmd_gen_data(const std::string& kind, std::size_t classes, std::size_t head,
                 std::size_t tail, double tail_fraction, std::size_t size,
                 std::uint64_t seed, const std::string& out) {
    Dataset ds;
    if (kind == "motif")
        ds = gen_longtail_motif(classes, head, tail, tail_fraction, seed);
    else if (kind == "regression")
        ds = gen_longtail_regression(seed, size);
    else
        throw std::runtime_error("unknown --kind '" + kind + "' (motif|regression)");
    write_jsonl(ds, out);
    std::printf("wrote %s (%zu train / %zu valid / %zu test) and %s.meta\n", out.c_str(),
                ds.train.size(), ds.valid.size(), ds.test.size(), out.c_str());
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& out,
              std::optional<std::uint64_t> seed) {
    if (!fs::exists(config_path))
        throw std::runtime_error("config file not found: " + config_path + " (--config)");
    RunConfig cfg = RunConfig::from_file(config_path);
    if (!out.empty()) cfg.out_dir = out;
    if (seed) cfg.seed = *seed;
    cfg.snapshot = cfg.to_text();
    cfg.validate();
    Dataset ds = load_dataset(cfg.dataset_path, cfg.meta_path);

    TwoPhaseResult res = train_two_phase(cfg, ds, true);
    std::printf("base %s: %.6f\n", res.base_report.metric.c_str(), res.base_report.value);
    std::printf("enhanced %s over %zu seeds: mean %.6f std %.6f\n", res.aggregate.metric.c_str(),
                res.enhanced_reports.size(), res.aggregate.mean.value_or(res.aggregate.value),
                res.aggregate.std_dev.value_or(0.0));
    std::printf("retrieval dropout audit: %zu checked, %zu violations\n",
                res.dropout_audit.checked, res.dropout_audit.violations);
    std::printf("artifacts under %s\n", cfg.out_dir.c_str());
    return res.dropout_audit.violations == 0 ? 0 : 1;
}

int cmd_build_index(const std::string& ckpt_path, const std::string& data,
                    const std::string& meta, const std::string& out) {
    Checkpoint ck = load_checkpoint(ckpt_path);
    Dataset ds = load_dataset(data, meta);
    FlatIndex index = build_index_from_model(ck.model, ds);
    index.save(out);
    std::printf("wrote %s (%zu entries, dim %zu)\n", out.c_str(), index.size(), index.dim());
    return 0;
}

int cmd_train_adapter(const std::string& ckpt_path, const std::string& index_path,
                      const std::string& data, const std::string& meta, const std::string& out,
                      std::size_t epochs, std::size_t k, std::size_t batch_size, double lr,
                      std::uint64_t seed) {
    Checkpoint ck = load_checkpoint(ckpt_path);
    FlatIndex index = load_index(index_path);
    Dataset ds = load_dataset(data, meta);

    AdapterTrainOptions opts;
    opts.epochs = epochs;
    opts.k = k;
    opts.batch_size = batch_size;
    opts.base_lr = lr;
    opts.seed = seed;
    const std::uint64_t before = model_checksum(ck.model);
    DropoutAudit audit;
    ck.adapter = train_adapter(ck.model, index, ds, opts, &audit);
    if (model_checksum(ck.model) != before)
        throw std::runtime_error("internal error: adapter training mutated the model");
    ck.seed = seed;
    ck.index_path = index_path;
    ck.save(out);
    std::printf("wrote %s (dropout audit: %zu checked, %zu violations)\n", out.c_str(),
                audit.checked, audit.violations);
    return audit.violations == 0 ? 0 : 1;
}

int cmd_evaluate(const std::string& ckpt_path, const std::string& index_path,
                 const std::string& data, const std::string& meta, const std::string& split,
                 const std::string& mode_str, const std::vector<std::size_t>& boundaries,
                 const std::vector<double>& edges, const std::string& out) {
    Checkpoint ck = load_checkpoint(ckpt_path);
    Dataset ds = load_dataset(data, meta);
    const EvalMode mode = eval_mode_from_string(mode_str);

    const AdapterParams* adapter = nullptr;
    std::optional<FlatIndex> index;
    if (mode != EvalMode::Base) {
        const std::string ipath = index_path.empty() ? ck.index_path : index_path;
        if (ipath.empty())
            throw std::runtime_error("mode '" + mode_str + "' needs an index (--index)");
        index = load_index(ipath);
        if (mode == EvalMode::Enhanced) {
            if (!ck.adapter)
                throw std::runtime_error("adapter missing: " + ckpt_path +
                                         " has no adapter parameters; run train-adapter first");
            adapter = &*ck.adapter;
        }
    }
    MetricsReport rep = evaluate(ck.model, adapter, index ? &*index : nullptr, ds,
                                 split_from_string(split), mode, boundaries, edges);
    write_or_print(rep, out);
    return 0;
}

int cmd_baseline(const std::string& ckpt_path, const std::string& index_path,
                 const std::string& data, const std::string& meta, const std::string& split,
                 std::size_t n, const std::string& out) {
    Checkpoint ck = load_checkpoint(ckpt_path);
    FlatIndex index = load_index(index_path.empty() ? ck.index_path : index_path);
    Dataset ds = load_dataset(data, meta);
    const Split sp = split_from_string(split);
    MetricsReport rep = n <= 1 ? baseline_retrieval(index, ck.model, ds, sp)
                               : baseline_majority(index, ck.model, ds, sp, n);
    write_or_print(rep, out);
    return 0;
}

int cmd_report(const std::string& in) {
    if (!fs::exists(in)) throw std::runtime_error("metrics file not found: " + in + " (--in)");
    std::ifstream f(in);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    print_report(MetricsReport::from_json(text));
    return 0;
}

// ------------------------------------------------------------------ gradcheck

Graph random_graph(Rng& rng, std::size_t nodes, std::size_t d) {
    Graph g;
    g.num_nodes = nodes;
    g.node_feat.resize(nodes);
    for (auto& row : g.node_feat) {
        row.resize(d);
        for (double& x : row) x = rng.normal();
    }
    for (std::size_t u = 0; u < nodes; ++u)
        for (std::size_t v = u + 1; v < nodes; ++v)
            if (rng.uniform() < 0.4) g.edges.emplace_back(u, v);
    return g;
}

int cmd_gradcheck(std::uint64_t seed, std::size_t trials) {
    Rng rng(seed);
    bool all_pass = true;
    auto component = [&](const char* name, const std::function<bool(double&)>& body) {
        double worst = 0.0;
        const bool ok = body(worst);
        std::printf("%-18s max rel err %.3e  %s\n", name, worst, ok ? "pass" : "FAIL");
        if (!ok) all_pass = false;
    };
    auto probe = [](double& worst, const std::function<Tensor(Tape&, const Tensor&)>& f,
                    const Tensor& point) {
        const GradCheckReport rep = grad_check(f, point, 1e-5);
        worst = std::max(worst, rep.max_rel_err);
        return rep.pass;
    };

    component("gcn layer", [&](double& worst) {
        for (std::size_t i = 0; i < trials; ++i) {
            Example ex;
            ex.graphs.push_back(random_graph(rng, 4 + rng.next(4), 3));
            ex.label = Label::of_class(0);
            GraphBatch batch = build_batch({&ex});
            Tensor w = make_tensor(3, 4);
            for (double& x : w->v) x = rng.normal();
            if (!probe(worst, [&](Tape& t, const Tensor& x) {
                    return t.sum_all(t.relu(t.matmul(gcn_aggregate(t, batch.x, batch), x)));
                }, w))
                return false;
        }
        return true;
    });
    component("gin layer", [&](double& worst) {
        for (std::size_t i = 0; i < trials; ++i) {
            Example ex;
            ex.graphs.push_back(random_graph(rng, 4 + rng.next(4), 3));
            ex.label = Label::of_class(0);
            GraphBatch batch = build_batch({&ex});
            Tensor w = make_tensor(3, 4);
            for (double& x : w->v) x = rng.normal();
            if (!probe(worst, [&](Tape& t, const Tensor& x) {
                    Tensor agg = gin_aggregate(t, batch.x, batch, 0.2, nullptr);
                    return t.sum_all(t.sigmoid(t.matmul(agg, x)));
                }, w))
                return false;
        }
        return true;
    });
    component("model composite", [&](double& worst) {
        for (std::size_t trial = 0; trial < trials; ++trial) {
            std::vector<Example> exs;
            for (int i = 0; i < 3; ++i) {
                Example e;
                e.graphs.push_back(random_graph(rng, 5, 2));
                e.label = Label::of_class(i % 2);
                e.id = static_cast<std::size_t>(i);
                exs.push_back(std::move(e));
            }
            std::vector<const Example*> ptrs;
            for (const Example& e : exs) ptrs.push_back(&e);
            GnnConfig cfg;
            cfg.kind = trial % 2 ? GnnKind::GCN : GnnKind::GIN;
            cfg.layers = 2;
            cfg.hidden_dim = 4;
            ModelParams m = init_model(cfg, 2, 0, 1, 2, seed + trial);
            Tensor w0 = m.layers[0].w1;
            const bool ok = probe(worst, [&](Tape& t, const Tensor& x) {
                m.layers[0].w1 = x;
                GraphBatch batch = build_batch(ptrs);
                ForwardResult fr = forward(t, m, batch, false);
                return phase1_loss(t, fr.output, ptrs, TaskKind::Binary);
            }, w0);
            m.layers[0].w1 = w0;
            if (!ok) return false;
        }
        return true;
    });
    auto adapter_component = [&](bool classification) {
        return [&, classification](double& worst) {
            for (std::size_t trial = 0; trial < trials; ++trial) {
                const std::size_t d = 3, k = 2;
                std::vector<double> h(d);
                for (double& x : h) x = rng.normal();
                RetrievalSet r;
                for (std::size_t i = 0; i < k; ++i) {
                    std::vector<double> key(d);
                    for (double& x : key) x = rng.normal();
                    r.push_back({key,
                                 classification ? Label::of_class(static_cast<long>(i % 2))
                                                : Label::of_value(rng.normal()),
                                 0.1 * static_cast<double>(i + 1), 500 + i});
                }
                AdapterParams p = init_adapter(k, d, d, seed + 7 * trial);
                for (double& x : p.phi->v) x = rng.normal();
                for (int which = 0; which < 3; ++which) {
                    Tensor point = which == 0 ? p.w1 : which == 1 ? p.w2 : p.phi;
                    if (!probe(worst, [&](Tape& t, const Tensor& x) {
                            AdapterParams q = p;
                            (which == 0 ? q.w1 : which == 1 ? q.w2 : q.phi) = x;
                            Tensor attn = compute_attention(t, q, h, r);
                            return classification ? cls_loss(t, attn, {0.4, 0.6}, r, 1)
                                                  : reg_loss(t, attn, 0.7, r, -0.2);
                        }, point))
                        return false;
                }
            }
            return true;
        };
    };
    component("adapter cls loss", adapter_component(true));
    component("adapter reg loss", adapter_component(false));
    return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"retrieval-enhanced GNN toolkit"};
    app.require_subcommand(1);

    // gen-data
    std::string gd_kind = "motif", gd_out = "data.jsonl";
    std::size_t gd_classes = 20, gd_head = 200, gd_tail = 5, gd_size = 2000;
    double gd_tail_fraction = 0.25;
    std::uint64_t gd_seed = 0;
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic long-tail dataset");
    gen->add_option("--kind", gd_kind, "motif | regression");
    gen->add_option("--classes", gd_classes, "motif: number of classes");
    gen->add_option("--head", gd_head, "motif: train examples per head class");
    gen->add_option("--tail", gd_tail, "motif: train examples per tail class");
    gen->add_option("--tail-fraction", gd_tail_fraction, "motif: fraction of tail classes");
    gen->add_option("--size", gd_size, "regression: total examples");
    gen->add_option("--seed", gd_seed, "generator seed");
    gen->add_option("--out", gd_out, "output JSONL path (sidecar at <out>.meta)");

    // train
    std::string tr_config, tr_out;
    std::optional<std::uint64_t> tr_seed;
    auto* train = app.add_subcommand("train", "full two-phase training run");
    train->add_option("--config", tr_config, "run config file")->required();
    train->add_option("--out", tr_out, "output directory (overrides config)");
    train->add_option("--seed", tr_seed, "phase-1 seed (overrides config)");

    // build-index
    std::string bi_ckpt, bi_data, bi_meta, bi_out = "index.grix";
    auto* build = app.add_subcommand("build-index", "embed the train split and build the index");
    build->add_option("--checkpoint", bi_ckpt, "model checkpoint")->required();
    build->add_option("--data", bi_data, "dataset JSONL")->required();
    build->add_option("--meta", bi_meta, "dataset sidecar (default <data>.meta)");
    build->add_option("--out", bi_out, "index output path");

    // train-adapter
    std::string ta_ckpt, ta_index, ta_data, ta_meta, ta_out = "adapter.ckpt";
    std::size_t ta_epochs = 200, ta_k = 3, ta_batch = 32;
    double ta_lr = 0.01;
    std::uint64_t ta_seed = 0;
    auto* tad = app.add_subcommand("train-adapter", "train the attention adapter, model frozen");
    tad->add_option("--checkpoint", ta_ckpt, "model checkpoint")->required();
    tad->add_option("--index", ta_index, "index file")->required();
    tad->add_option("--data", ta_data, "dataset JSONL")->required();
    tad->add_option("--meta", ta_meta, "dataset sidecar (default <data>.meta)");
    tad->add_option("--out", ta_out, "adapter checkpoint output path");
    tad->add_option("--epochs", ta_epochs, "adapter training epochs");
    tad->add_option("--k", ta_k, "retrieval count");
    tad->add_option("--batch-size", ta_batch, "batch size");
    tad->add_option("--lr", ta_lr, "base learning rate");
    tad->add_option("--seed", ta_seed, "adapter seed");

    // evaluate
    std::string ev_ckpt, ev_index, ev_data, ev_meta, ev_split = "test", ev_mode = "base", ev_out;
    std::vector<std::size_t> ev_boundaries = {100, 500, 1000, 5000};
    std::vector<double> ev_edges = {0, 10, 20, 30};
    auto* ev = app.add_subcommand("evaluate", "evaluate a checkpoint on a split");
    ev->add_option("--checkpoint", ev_ckpt, "checkpoint file")->required();
    ev->add_option("--index", ev_index, "index file (enhanced/averaging modes)");
    ev->add_option("--data", ev_data, "dataset JSONL")->required();
    ev->add_option("--meta", ev_meta, "dataset sidecar (default <data>.meta)");
    ev->add_option("--split", ev_split, "train | valid | test");
    ev->add_option("--mode", ev_mode, "base | enhanced | averaging");
    ev->add_option("--boundaries", ev_boundaries, "class-count group boundaries")
        ->delimiter(',');
    ev->add_option("--edges", ev_edges, "regression bucket edges")->delimiter(',');
    ev->add_option("--out", ev_out, "write metrics JSON here (default: print table)");

    // baseline
    std::string bl_ckpt, bl_index, bl_data, bl_meta, bl_split = "test", bl_out;
    std::size_t bl_n = 1;
    auto* bl = app.add_subcommand("baseline", "pure-retrieval baselines (1-NN or majority vote)");
    bl->add_option("--checkpoint", bl_ckpt, "model checkpoint")->required();
    bl->add_option("--index", bl_index, "index file (default: path stored in checkpoint)");
    bl->add_option("--data", bl_data, "dataset JSONL")->required();
    bl->add_option("--meta", bl_meta, "dataset sidecar (default <data>.meta)");
    bl->add_option("--split", bl_split, "train | valid | test");
    bl->add_option("--n", bl_n, "vote count; 1 = nearest-neighbor baseline");
    bl->add_option("--out", bl_out, "write metrics JSON here (default: print table)");

    // report
    std::string rp_in;
    auto* rp = app.add_subcommand("report", "render a metrics JSON file as a table");
    rp->add_option("--in", rp_in, "metrics JSON file")->required();

    // gradcheck
    std::uint64_t gc_seed = 202;
    std::size_t gc_trials = 20;
    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    gc->add_option("--seed", gc_seed, "instance seed");
    gc->add_option("--trials", gc_trials, "instances per component");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed())
            return cmd_gen_data(gd_kind, gd_classes, gd_head, gd_tail, gd_tail_fraction, gd_size,
                                gd_seed, gd_out);
        if (train->parsed()) return cmd_train(tr_config, tr_out, tr_seed);
        if (build->parsed()) return cmd_build_index(bi_ckpt, bi_data, bi_meta, bi_out);
        if (tad->parsed())
            return cmd_train_adapter(ta_ckpt, ta_index, ta_data, ta_meta, ta_out, ta_epochs, ta_k,
                                     ta_batch, ta_lr, ta_seed);
        if (ev->parsed())
            return cmd_evaluate(ev_ckpt, ev_index, ev_data, ev_meta, ev_split, ev_mode,
                                ev_boundaries, ev_edges, ev_out);
        if (bl->parsed())
            return cmd_baseline(bl_ckpt, bl_index, bl_data, bl_meta, bl_split, bl_n, bl_out);
        if (rp->parsed()) return cmd_report(rp_in);
        if (gc->parsed()) return cmd_gradcheck(gc_seed, gc_trials);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
