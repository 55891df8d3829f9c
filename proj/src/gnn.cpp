// SPDX-License-Identifier: Apache-2.0

#include "rgnn/gnn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "rgnn/rng.hpp"

namespace rgnn {

namespace {

Tensor init_weight(std::size_t rows, std::size_t cols, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
    Tensor t = make_tensor(rows, cols, true);
    for (double& x : t->v) x = rng.uniform(-bound, bound);
    return t;
}

Tensor init_bias(std::size_t cols) {
    return make_tensor(1, cols, std::vector<double>(cols, 0.0), true);
}

}  // namespace

std::vector<Tensor> ModelParams::parameters() const {
    std::vector<Tensor> ps;
    for (const LayerParams& l : layers) {
        ps.push_back(l.w1);
        if (config.kind == GnnKind::GIN) {
            ps.push_back(l.b1);
            ps.push_back(l.w2);
            ps.push_back(l.b2);
        }
        if (l.edge_w) ps.push_back(l.edge_w);
        ps.push_back(l.bn.gamma);
        ps.push_back(l.bn.beta);
    }
    ps.push_back(head_w);
    ps.push_back(head_b);
    return ps;
}

ModelParams init_model(const GnnConfig& config, std::size_t d_v, std::size_t d_e,
                       std::size_t instances, std::size_t out_dim, std::uint64_t seed) {
    if (config.layers < 1 || config.hidden_dim < 1)
        throw std::invalid_argument("init_model: layers and hidden_dim must be >= 1");
    ModelParams p;
    p.config = config;
    p.d_v = d_v;
    p.d_e = d_e;
    p.instances = instances;
    p.out_dim = out_dim;
    Rng rng(seed ^ 0xc2b2ae3d27d4eb4fULL);
    std::size_t in = d_v;
    for (std::size_t t = 0; t < config.layers; ++t) {
        LayerParams l;
        const std::size_t h = config.hidden_dim;
        if (config.kind == GnnKind::GCN) {
            l.w1 = init_weight(in, h, rng);
        } else {
            l.w1 = init_weight(in, h, rng);
            l.b1 = init_bias(h);
            l.w2 = init_weight(h, h, rng);
            l.b2 = init_bias(h);
        }
        if (config.use_edge_feat && config.kind == GnnKind::GIN && d_e > 0)
            l.edge_w = init_weight(d_e, in, rng);
        l.bn = BatchNormState(h);
        p.layers.push_back(std::move(l));
        in = h;
    }
    p.head_w = init_weight(instances * config.hidden_dim, out_dim, rng);
    p.head_b = init_bias(out_dim);
    return p;
}

GraphBatch build_batch(const std::vector<const Example*>& examples) {
    if (examples.empty()) throw std::invalid_argument("build_batch: no examples");
    const std::size_t instances = examples[0]->graphs.size();
    GraphBatch b;
    b.num_examples = examples.size();

    std::size_t total_nodes = 0, total_edges = 0;
    std::size_t d_v = 0, d_e = 0;
    for (const Example* ex : examples) {
        if (ex->graphs.size() != instances)
            throw std::invalid_argument("build_batch: examples differ in graph count");
        for (const Graph& g : ex->graphs) {
            if (g.num_nodes == 0) throw std::invalid_argument("build_batch: empty graph");
            total_nodes += g.num_nodes;
            total_edges += g.num_edges();
            d_v = g.node_feat[0].size();
            if (g.has_edge_feat()) d_e = g.edge_feat[0].size();
        }
    }
    b.num_graphs = examples.size() * instances;
    b.x = make_tensor(total_nodes, d_v);
    if (d_e > 0) b.edge_x = make_tensor(total_edges, d_e);

    std::size_t node_off = 0, edge_off = 0, graph_idx = 0;
    std::vector<double> degree(total_nodes, 0.0);
    for (const Example* ex : examples) {
        for (const Graph& g : ex->graphs) {
            for (std::size_t i = 0; i < g.num_nodes; ++i) {
                for (std::size_t j = 0; j < d_v; ++j)
                    b.x->at(node_off + i, j) = g.node_feat[i][j];
                b.node_graph.push_back(graph_idx);
            }
            for (std::size_t e = 0; e < g.num_edges(); ++e) {
                const std::size_t u = node_off + g.edges[e].first;
                const std::size_t v = node_off + g.edges[e].second;
                b.src.push_back(u);
                b.dst.push_back(v);
                b.src.push_back(v);
                b.dst.push_back(u);
                b.edge_id.push_back(edge_off + e);
                b.edge_id.push_back(edge_off + e);
                degree[u] += 1.0;
                degree[v] += 1.0;
                if (d_e > 0)
                    for (std::size_t j = 0; j < d_e; ++j)
                        b.edge_x->at(edge_off + e, j) = g.edge_feat[e][j];
            }
            node_off += g.num_nodes;
            edge_off += g.num_edges();
            ++graph_idx;
        }
    }
    b.gcn_self_coeff.resize(total_nodes);
    for (std::size_t i = 0; i < total_nodes; ++i) b.gcn_self_coeff[i] = 1.0 / (degree[i] + 1.0);
    b.gcn_coeff.resize(b.src.size());
    for (std::size_t e = 0; e < b.src.size(); ++e)
        b.gcn_coeff[e] = 1.0 / std::sqrt((degree[b.src[e]] + 1.0) * (degree[b.dst[e]] + 1.0));
    return b;
}

Tensor gcn_aggregate(Tape& tape, const Tensor& h, const GraphBatch& batch) {
    if (h->rows != batch.node_graph.size())
        throw std::invalid_argument("gcn_aggregate: node count mismatch");
    Tensor self = tape.scale_rows(h, batch.gcn_self_coeff);
    if (batch.src.empty()) return self;
    Tensor msgs = tape.scale_rows(tape.gather_rows(h, batch.src), batch.gcn_coeff);
    Tensor agg = tape.scatter_sum(msgs, batch.dst, h->rows);
    return tape.add(agg, self);
}

Tensor gin_aggregate(Tape& tape, const Tensor& h, const GraphBatch& batch, double eps,
                     const Tensor& edge_w) {
    if (h->rows != batch.node_graph.size())
        throw std::invalid_argument("gin_aggregate: node count mismatch");
    Tensor self = tape.scale(h, 1.0 + eps);
    if (batch.src.empty()) return self;
    Tensor msgs = tape.gather_rows(h, batch.src);
    if (edge_w && batch.edge_x) {
        Tensor proj = tape.matmul(batch.edge_x, edge_w);
        msgs = tape.add(msgs, tape.gather_rows(proj, batch.edge_id));
    }
    Tensor neigh = tape.scatter_sum(msgs, batch.dst, h->rows);
    return tape.add(self, neigh);
}

Tensor readout(Tape& tape, const Tensor& h, const GraphBatch& batch, ReadoutMode mode) {
    if (h->rows == 0) throw std::invalid_argument("readout: empty graph");
    if (mode == ReadoutMode::Sum)
        return tape.scatter_sum(h, batch.node_graph, batch.num_graphs);
    return tape.segment_mean(h, batch.node_graph, batch.num_graphs);
}

ForwardResult forward(Tape& tape, ModelParams& params, const GraphBatch& batch, bool training) {
    Tensor h = batch.x;
    for (LayerParams& l : params.layers) {
        if (params.config.kind == GnnKind::GCN) {
            Tensor agg = gcn_aggregate(tape, h, batch);
            Tensor z = tape.matmul(agg, l.w1);
            z = batch_norm(tape, z, l.bn, training);
            h = tape.relu(z);
        } else {
            Tensor z = gin_aggregate(tape, h, batch, params.config.gin_eps, l.edge_w);
            z = tape.relu(tape.add_rowvec(tape.matmul(z, l.w1), l.b1));
            z = tape.add_rowvec(tape.matmul(z, l.w2), l.b2);
            h = batch_norm(tape, z, l.bn, training);
        }
    }
    Tensor per_graph = readout(tape, h, batch, params.config.readout);
    ForwardResult r;
    r.embeddings = tape.reshape(per_graph, batch.num_examples,
                                params.instances * params.config.hidden_dim);
    Tensor logits = tape.add_rowvec(tape.matmul(r.embeddings, params.head_w), params.head_b);
    r.output = params.out_dim > 1 ? tape.softmax_row(logits) : logits;
    return r;
}

Tensor phase1_loss(Tape& tape, const Tensor& output, const std::vector<const Example*>& examples,
                   TaskKind task) {
    const double inv_n = 1.0 / static_cast<double>(examples.size());
    if (task == TaskKind::Regression) {
        Tensor targets = make_tensor(examples.size(), 1);
        for (std::size_t i = 0; i < examples.size(); ++i)
            targets->v[i] = examples[i]->label.value;
        Tensor diff = tape.sub(output, targets);
        return tape.scale(tape.sum_all(tape.mul(diff, diff)), inv_n);
    }
    std::vector<std::size_t> classes(examples.size());
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const long c = examples[i]->label.cls;
        if (c < 0 || static_cast<std::size_t>(c) >= output->cols)
            throw std::invalid_argument("phase1_loss: class index out of range");
        classes[i] = static_cast<std::size_t>(c);
    }
    Tensor picked = tape.pick_rows(output, classes);
    return tape.scale(tape.sum_all(tape.log(tape.clamp_min(picked, 1e-12))), -inv_n);
}

ForwardResult encode_example(ModelParams& params, const Example& ex) {
    Tape tape(false);
    GraphBatch batch = build_batch({&ex});
    return forward(tape, params, batch, false);
}

EncodedSplit encode_split(ModelParams& params, const std::vector<Example>& split) {
    EncodedSplit enc;
    constexpr std::size_t kChunk = 256;
    Tape tape(false);
    for (std::size_t off = 0; off < split.size(); off += kChunk) {
        std::vector<const Example*> chunk;
        for (std::size_t i = off; i < std::min(off + kChunk, split.size()); ++i)
            chunk.push_back(&split[i]);
        GraphBatch batch = build_batch(chunk);
        ForwardResult fr = forward(tape, params, batch, false);
        for (std::size_t r = 0; r < chunk.size(); ++r) {
            std::vector<double> emb(fr.embeddings->cols);
            for (std::size_t j = 0; j < emb.size(); ++j) emb[j] = fr.embeddings->at(r, j);
            enc.embeddings.push_back(std::move(emb));
            std::vector<double> out(fr.output->cols);
            for (std::size_t j = 0; j < out.size(); ++j) out[j] = fr.output->at(r, j);
            enc.outputs.push_back(std::move(out));
        }
    }
    return enc;
}

std::uint64_t model_checksum(const ModelParams& params) {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const double* data, std::size_t n) {
        const auto* bytes = reinterpret_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n * sizeof(double); ++i) {
            h ^= bytes[i];
            h *= 1099511628211ULL;
        }
    };
    for (const Tensor& p : params.parameters()) mix(p->v.data(), p->v.size());
    for (const LayerParams& l : params.layers) {
        mix(l.bn.running_mean.data(), l.bn.running_mean.size());
        mix(l.bn.running_var.data(), l.bn.running_var.size());
    }
    return h;
}

}  // namespace rgnn
