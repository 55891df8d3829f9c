// SPDX-License-Identifier: Apache-2.0

#include "rgnn/graph.hpp"

#include <stdexcept>
#include <unordered_set>

namespace rgnn {

void Graph::validate() const {
    if (node_feat.size() != num_nodes)
        throw std::invalid_argument("graph: node_feat row count != num_nodes");
    const std::size_t dv = num_nodes ? node_feat[0].size() : 0;
    for (const auto& row : node_feat)
        if (row.size() != dv) throw std::invalid_argument("graph: ragged node_feat");
    for (const auto& [u, v] : edges) {
        if (u >= num_nodes || v >= num_nodes)
            throw std::invalid_argument("graph: edge endpoint out of range");
        if (u == v) throw std::invalid_argument("graph: self-loop in storage");
    }
    if (!edge_feat.empty()) {
        if (edge_feat.size() != edges.size())
            throw std::invalid_argument("graph: edge_feat row count != num_edges");
        const std::size_t de = edge_feat[0].size();
        for (const auto& row : edge_feat)
            if (row.size() != de) throw std::invalid_argument("graph: ragged edge_feat");
    }
}

std::size_t Dataset::instances_per_example() const {
    for (const auto* s : {&train, &valid, &test})
        if (!s->empty()) return (*s)[0].graphs.size();
    return 0;
}

void Dataset::validate() const {
    std::unordered_set<std::size_t> ids;
    auto check_split = [&](const std::vector<Example>& split) {
        for (const Example& ex : split) {
            if (ex.graphs.empty()) throw std::invalid_argument("dataset: example with no graphs");
            for (const Graph& g : ex.graphs) {
                g.validate();
                if (g.num_nodes && g.node_feat[0].size() != d_v)
                    throw std::invalid_argument("dataset: node feature dimension mismatch");
                if (g.has_edge_feat() && g.edge_feat[0].size() != d_e)
                    throw std::invalid_argument("dataset: edge feature dimension mismatch");
                if (!g.has_edge_feat() && d_e != 0 && g.num_edges() > 0)
                    throw std::invalid_argument("dataset: missing edge features");
            }
            if (task == TaskKind::Regression) {
                if (ex.label.is_class)
                    throw std::invalid_argument("dataset: class label in regression task");
            } else {
                if (!ex.label.is_class)
                    throw std::invalid_argument("dataset: value label in classification task");
                if (ex.label.cls < 0 || static_cast<std::size_t>(ex.label.cls) >= num_classes)
                    throw std::invalid_argument("dataset: class label out of range");
            }
            if (!ids.insert(ex.id).second)
                throw std::invalid_argument("dataset: duplicate example id across splits");
        }
    };
    check_split(train);
    check_split(valid);
    check_split(test);
    if (train.empty()) throw std::invalid_argument("dataset: empty train split");
}

TaskKind task_from_string(const std::string& s) {
    if (s == "binary") return TaskKind::Binary;
    if (s == "multiclass") return TaskKind::Multiclass;
    if (s == "regression") return TaskKind::Regression;
    throw std::invalid_argument("unknown task kind: " + s);
}

std::string task_to_string(TaskKind t) {
    switch (t) {
        case TaskKind::Binary: return "binary";
        case TaskKind::Multiclass: return "multiclass";
        default: return "regression";
    }
}

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "valid") return Split::Valid;
    if (s == "test") return Split::Test;
    throw std::invalid_argument("unknown split tag: " + s);
}

std::string split_to_string(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Valid: return "valid";
        default: return "test";
    }
}

}  // namespace rgnn
