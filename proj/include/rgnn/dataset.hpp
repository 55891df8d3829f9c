// SPDX-License-Identifier: Apache-2.0

#ifndef RGNN_DATASET_HPP
#define RGNN_DATASET_HPP

#include <cstdint>
#include <string>

#include "rgnn/graph.hpp"

namespace rgnn {

// Reads a JSONL dataset (one example per line) plus its sidecar meta file
// declaring the task kind and class count. The sidecar defaults to
// "<path>.meta" when meta_path is empty.
Dataset load_jsonl(const std::string& path, const std::string& meta_path = "");

// Writes dataset + sidecar; load_jsonl(write_jsonl(ds)) == ds.
void write_jsonl(const Dataset& ds, const std::string& path,
                 const std::string& meta_path = "");

// Multiclass dataset with per-class feature signatures and planted motifs.
// A tail_fraction of classes receive tail_count training examples, the rest
// head_count; valid/test are class-balanced. Tail signatures sit close to a
// head signature so a parametric classifier under-predicts tails while
// nearest neighbors still separate them.
Dataset gen_longtail_motif(std::size_t num_classes, std::size_t head_count,
                           std::size_t tail_count, double tail_fraction,
                           std::uint64_t seed);

// Regression dataset whose target is regression_target(graph); edge counts
// are drawn with exponentially decaying mass so high-value buckets are rare.
Dataset gen_longtail_regression(std::uint64_t seed, std::size_t size);

// The deterministic target function of gen_longtail_regression.
double regression_target(const Graph& g);

// Class signature vectors used by gen_longtail_motif; exposed so an
// independent fingerprint oracle can be built against the same geometry.
std::size_t motif_feature_dim();

}  // namespace rgnn

#endif
