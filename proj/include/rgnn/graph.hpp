// SPDX-License-Identifier: Apache-2.0

#ifndef RGNN_GRAPH_HPP
#define RGNN_GRAPH_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace rgnn {

// Undirected graph; each {u,v} stored once, no self-loops in storage.
struct Graph {
    std::size_t num_nodes = 0;
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    std::vector<std::vector<double>> node_feat;            // num_nodes x d_v
    std::vector<std::vector<double>> edge_feat;            // empty or num_edges x d_e

    std::size_t num_edges() const { return edges.size(); }
    bool has_edge_feat() const { return !edge_feat.empty(); }
    void validate() const;  // throws on any invariant violation
};

enum class TaskKind { Binary, Multiclass, Regression };

struct Label {
    // class index for classification tasks, real value for regression
    bool is_class = true;
    long cls = 0;
    double value = 0.0;

    static Label of_class(long c) { return Label{true, c, 0.0}; }
    static Label of_value(double v) { return Label{false, 0, v}; }
    bool operator==(const Label& o) const {
        return is_class == o.is_class && cls == o.cls && value == o.value;
    }
};

enum class Split { Train, Valid, Test };

struct Example {
    std::vector<Graph> graphs;  // nonempty; the input X
    Label label;
    std::size_t id = 0;  // assigned by dataset construction (file line order)
};

struct Dataset {
    TaskKind task = TaskKind::Multiclass;
    std::size_t num_classes = 0;  // 2 for binary, C for multiclass, 0 for regression
    std::size_t d_v = 0;
    std::size_t d_e = 0;  // 0 when no edge features
    std::vector<Example> train, valid, test;

    const std::vector<Example>& split(Split s) const {
        switch (s) {
            case Split::Train: return train;
            case Split::Valid: return valid;
            default: return test;
        }
    }
    // number of graphs per example; validated uniform at model construction
    std::size_t instances_per_example() const;
    void validate() const;
};

TaskKind task_from_string(const std::string& s);
std::string task_to_string(TaskKind t);
Split split_from_string(const std::string& s);
std::string split_to_string(Split s);

}  // namespace rgnn

#endif
