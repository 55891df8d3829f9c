// SPDX-License-Identifier: Apache-2.0

#ifndef RGNN_ADAPTER_HPP
#define RGNN_ADAPTER_HPP

#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "rgnn/gnn.hpp"
#include "rgnn/graph.hpp"
#include "rgnn/index.hpp"
#include "rgnn/tensor.hpp"

namespace rgnn {

struct AdapterParams {
    Tensor w1;   // d_proj x d
    Tensor w2;   // d_proj x d
    Tensor phi;  // 1 x (k+1)
    std::size_t k = 0;
    std::size_t d = 0;
    std::size_t d_proj = 0;

    std::vector<Tensor> parameters() const { return {w1, w2, phi}; }
};

// W1, W2 uniform in +-1/sqrt(d); phi zero so initial attention is uniform
AdapterParams init_adapter(std::size_t k, std::size_t d, std::size_t d_proj,
                           std::uint64_t seed);

struct Retrieved {
    std::vector<double> key;
    Label label;
    double distance = 0.0;
    std::uint64_t example_id = 0;
};
using RetrievalSet = std::vector<Retrieved>;

// Training mode queries top-(k+1) and drops the entry matching self_id (the
// nearest entry when self_id is absent); eval mode is a plain top-k query.
RetrievalSet retrieve_with_dropout(const FlatIndex& index, const std::vector<double>& h,
                                   std::size_t k, bool training,
                                   std::optional<std::uint64_t> self_id = std::nullopt);

// Attn = softmax(q K^T / sqrt(d_proj) + phi), a 1 x (k+1) row;
// slot 0 weights the model's own prediction
Tensor compute_attention(Tape& tape, const AdapterParams& params,
                         const std::vector<double>& h, const RetrievalSet& retrieved);

Tensor cls_loss(Tape& tape, const Tensor& attn, const std::vector<double>& model_probs,
                const RetrievalSet& retrieved, long true_class);
Tensor reg_loss(Tape& tape, const Tensor& attn, double model_value,
                const RetrievalSet& retrieved, double target);

struct ClsPrediction {
    std::vector<double> distribution;  // adjusted L_X over C
    long predicted = 0;                // argmax, ties to the smaller class
};

ClsPrediction cls_predict(const std::vector<double>& attn,
                          const std::vector<double>& model_probs,
                          const RetrievalSet& retrieved);
double reg_predict(const std::vector<double>& attn, double model_value,
                   const RetrievalSet& retrieved);

// uniform-weight ablation of the two predict ops
ClsPrediction averaging_cls_predict(const std::vector<double>& model_probs,
                                    const RetrievalSet& retrieved);
double averaging_reg_predict(double model_value, const RetrievalSet& retrieved);

struct DropoutAudit {
    std::size_t checked = 0;
    std::size_t violations = 0;
};

struct AdapterTrainOptions {
    std::size_t epochs = 200;  // m2
    std::size_t k = 3;
    std::size_t d_proj = 0;  // 0 -> same as embedding dim
    std::size_t batch_size = 32;
    double base_lr = 0.01;
    std::uint64_t seed = 0;
};

// Optimizes W1, W2, phi with the model frozen; keeps the best-validation
// parameters. `audit`, when given, records the retrieval-dropout contract.
AdapterParams train_adapter(ModelParams& model, const FlatIndex& index, const Dataset& ds,
                            const AdapterTrainOptions& opts, DropoutAudit* audit = nullptr);

}  // namespace rgnn

#endif
