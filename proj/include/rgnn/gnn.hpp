// SPDX-License-Identifier: Apache-2.0

#ifndef RGNN_GNN_HPP
#define RGNN_GNN_HPP

#include <cstdint>
#include <vector>

#include "rgnn/graph.hpp"
#include "rgnn/nn.hpp"
#include "rgnn/tensor.hpp"

namespace rgnn {

enum class GnnKind { GCN, GIN };
enum class ReadoutMode { Sum, Mean };

struct GnnConfig {
    GnnKind kind = GnnKind::GIN;
    std::size_t layers = 3;
    std::size_t hidden_dim = 16;
    ReadoutMode readout = ReadoutMode::Sum;
    bool use_edge_feat = false;
    double gin_eps = 0.0;
};

struct LayerParams {
    // GCN uses w1 only; GIN uses the 2-layer MLP (w1,b1,w2,b2)
    Tensor w1, b1, w2, b2;
    Tensor edge_w;  // null unless edge features enabled (GIN)
    BatchNormState bn;
};

struct ModelParams {
    GnnConfig config;
    std::size_t d_v = 0, d_e = 0;
    std::size_t instances = 1;  // graphs per example
    std::size_t out_dim = 1;    // C logits or 1 regression value
    std::vector<LayerParams> layers;
    Tensor head_w, head_b;

    std::vector<Tensor> parameters() const;  // learnables, fixed order
    std::size_t embedding_dim() const { return instances * config.hidden_dim; }
};

ModelParams init_model(const GnnConfig& config, std::size_t d_v, std::size_t d_e,
                       std::size_t instances, std::size_t out_dim, std::uint64_t seed);

// Block-diagonal batch over the graphs of a set of examples. Examples must
// share the per-example graph count so embeddings reshape uniformly.
struct GraphBatch {
    Tensor x;       // total_nodes x d_v
    Tensor edge_x;  // undirected edge features, or null
    std::vector<std::size_t> src, dst;  // directed edges (both orientations)
    std::vector<std::size_t> edge_id;   // directed edge -> undirected row
    std::vector<std::size_t> node_graph;
    std::vector<double> gcn_coeff;       // per directed edge, 1/sqrt(d~u d~v)
    std::vector<double> gcn_self_coeff;  // per node, 1/d~v
    std::size_t num_graphs = 0;
    std::size_t num_examples = 0;
};

GraphBatch build_batch(const std::vector<const Example*>& examples);

// Single layer pieces; BN/activation composed by forward()
Tensor gcn_aggregate(Tape& tape, const Tensor& h, const GraphBatch& batch);
Tensor gin_aggregate(Tape& tape, const Tensor& h, const GraphBatch& batch, double eps,
                     const Tensor& edge_w);
Tensor readout(Tape& tape, const Tensor& h, const GraphBatch& batch, ReadoutMode mode);

struct ForwardResult {
    Tensor embeddings;  // num_examples x embedding_dim
    Tensor output;      // class distribution rows, or num_examples x 1 values
};

ForwardResult forward(Tape& tape, ModelParams& params, const GraphBatch& batch, bool training);

// mean cross-entropy over class rows, or mean squared error
Tensor phase1_loss(Tape& tape, const Tensor& output, const std::vector<const Example*>& examples,
                   TaskKind task);

// eval-mode embedding + prediction of a single example
ForwardResult encode_example(ModelParams& params, const Example& ex);

// eval-mode embeddings and predictions over a whole split, chunked
struct EncodedSplit {
    std::vector<std::vector<double>> embeddings;
    std::vector<std::vector<double>> outputs;  // distribution rows, or {value}
};
EncodedSplit encode_split(ModelParams& params, const std::vector<Example>& split);

// fnv-1a over every parameter and running-stat byte; frozen-model checks
std::uint64_t model_checksum(const ModelParams& params);

}  // namespace rgnn

#endif
