// SPDX-License-Identifier: Apache-2.0

#ifndef RGNN_PIPELINE_HPP
#define RGNN_PIPELINE_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rgnn/adapter.hpp"
#include "rgnn/dataset.hpp"
#include "rgnn/gnn.hpp"
#include "rgnn/index.hpp"
#include "rgnn/metrics.hpp"

namespace rgnn {

struct RunConfig {
    std::string dataset_path;
    std::string meta_path;  // empty -> dataset_path + ".meta"
    GnnConfig model;
    std::size_t m1 = 300;
    std::size_t m2 = 200;
    std::size_t k = 3;
    std::size_t batch_size = 32;
    double base_lr = 0.01;
    std::size_t seeds = 5;
    std::uint64_t seed = 0;  // phase-1 seed; phase-2 seeds derive per run
    std::vector<std::size_t> group_boundaries = {100, 500, 1000, 5000};
    std::vector<double> bucket_edges = {0, 10, 20, 30};
    std::string out_dir = "run";
    std::string snapshot;  // raw config text, stored in checkpoints

    static RunConfig from_file(const std::string& path);
    std::string to_text() const;
    void validate() const;
};

struct Checkpoint {
    std::uint32_t version = 1;
    std::string config_text;
    std::uint64_t seed = 0;
    TaskKind task = TaskKind::Multiclass;
    std::size_t num_classes = 0;
    ModelParams model;
    std::optional<AdapterParams> adapter;
    std::string index_path;

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);
};

// Phase-1 supervised training; returns best-validation parameters
// (ties resolved to the earlier epoch).
ModelParams train_model(const Dataset& ds, const GnnConfig& config, std::size_t m1,
                        std::size_t batch_size, double base_lr, std::uint64_t seed);

// embeds the train split in eval mode and builds the flat index
FlatIndex build_index_from_model(ModelParams& model, const Dataset& ds);

enum class EvalMode { Base, Enhanced, Averaging };
EvalMode eval_mode_from_string(const std::string& s);

MetricsReport evaluate(ModelParams& model, const AdapterParams* adapter, const FlatIndex* index,
                       const Dataset& ds, Split split, EvalMode mode,
                       const std::vector<std::size_t>& group_boundaries,
                       const std::vector<double>& bucket_edges);

MetricsReport baseline_retrieval(const FlatIndex& index, ModelParams& model, const Dataset& ds,
                                 Split split);
MetricsReport baseline_majority(const FlatIndex& index, ModelParams& model, const Dataset& ds,
                                Split split, std::size_t n);

struct TwoPhaseResult {
    Checkpoint model_checkpoint;           // phase 1 only
    std::vector<Checkpoint> seed_checkpoints;
    MetricsReport base_report;
    std::vector<MetricsReport> enhanced_reports;  // one per phase-2 seed
    MetricsReport aggregate;                      // mean/std over seeds
    DropoutAudit dropout_audit;
};

// Full two-phase run; writes checkpoints, the index, and metrics JSON files
// under cfg.out_dir when write_outputs is true.
TwoPhaseResult train_two_phase(const RunConfig& cfg, const Dataset& ds,
                               bool write_outputs = true);

}  // namespace rgnn

#endif
