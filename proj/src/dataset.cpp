// SPDX-License-Identifier: Apache-2.0

#include "rgnn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "rgnn/rng.hpp"

namespace rgnn {

using nlohmann::json;

namespace {

std::string default_meta_path(const std::string& path) { return path + ".meta"; }

std::map<std::string, std::string> read_kv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open meta file: " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            if (b == std::string::npos) return std::string();
            const auto e = s.find_last_not_of(" \t\r");
            return s.substr(b, e - b + 1);
        };
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

Graph parse_graph(const json& jg, std::size_t line_no) {
    auto fail = [line_no](const std::string& msg) {
        throw std::runtime_error("line " + std::to_string(line_no + 1) + ": " + msg);
    };
    Graph g;
    if (!jg.contains("num_nodes") || !jg["num_nodes"].is_number_unsigned())
        fail("missing or invalid num_nodes");
    g.num_nodes = jg["num_nodes"].get<std::size_t>();
    for (const auto& je : jg.value("edges", json::array())) {
        if (!je.is_array() || je.size() != 2) fail("edge is not a pair");
        const auto u = je[0].get<long long>();
        const auto v = je[1].get<long long>();
        if (u < 0 || v < 0 || static_cast<std::size_t>(u) >= g.num_nodes ||
            static_cast<std::size_t>(v) >= g.num_nodes)
            fail("edge endpoint out of range");
        if (u == v) fail("self-loop edge");
        g.edges.emplace_back(static_cast<std::size_t>(u), static_cast<std::size_t>(v));
    }
    if (!jg.contains("node_feat")) fail("missing node_feat");
    for (const auto& row : jg["node_feat"]) g.node_feat.push_back(row.get<std::vector<double>>());
    if (g.node_feat.size() != g.num_nodes) fail("node_feat row count != num_nodes");
    if (jg.contains("edge_feat")) {
        for (const auto& row : jg["edge_feat"])
            g.edge_feat.push_back(row.get<std::vector<double>>());
        if (g.edge_feat.size() != g.edges.size()) fail("edge_feat row count != num_edges");
    }
    try {
        g.validate();
    } catch (const std::exception& e) {
        fail(e.what());
    }
    return g;
}

json graph_to_json(const Graph& g) {
    json jg;
    jg["num_nodes"] = g.num_nodes;
    json edges = json::array();
    for (const auto& [u, v] : g.edges) edges.push_back({u, v});
    jg["edges"] = std::move(edges);
    jg["node_feat"] = g.node_feat;
    if (g.has_edge_feat()) jg["edge_feat"] = g.edge_feat;
    return jg;
}

}  // namespace

Dataset load_jsonl(const std::string& path, const std::string& meta_path) {
    const std::string mpath = meta_path.empty() ? default_meta_path(path) : meta_path;
    const auto meta = read_kv_file(mpath);
    if (!meta.count("task")) throw std::runtime_error("meta file missing 'task': " + mpath);

    Dataset ds;
    ds.task = task_from_string(meta.at("task"));
    if (ds.task == TaskKind::Binary) {
        ds.num_classes = 2;
    } else if (ds.task == TaskKind::Multiclass) {
        if (!meta.count("classes"))
            throw std::runtime_error("meta file missing 'classes' for multiclass task");
        ds.num_classes = std::stoul(meta.at("classes"));
    }

    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open dataset file: " + path);
    std::string line;
    std::size_t line_no = 0, id = 0;
    bool have_dims = false;
    for (; std::getline(in, line); ++line_no) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw std::runtime_error("line " + std::to_string(line_no + 1) +
                                     ": malformed JSON: " + e.what());
        }
        Example ex;
        ex.id = id++;
        if (!j.contains("graphs") || !j["graphs"].is_array() || j["graphs"].empty())
            throw std::runtime_error("line " + std::to_string(line_no + 1) +
                                     ": missing or empty 'graphs'");
        for (const auto& jg : j["graphs"]) ex.graphs.push_back(parse_graph(jg, line_no));

        const json& jl = j.at("label");
        if (ds.task == TaskKind::Regression) {
            if (!jl.is_number())
                throw std::runtime_error("line " + std::to_string(line_no + 1) +
                                         ": regression label must be a number");
            ex.label = Label::of_value(jl.get<double>());
        } else {
            if (!jl.is_number_integer())
                throw std::runtime_error("line " + std::to_string(line_no + 1) +
                                         ": class label must be an integer");
            ex.label = Label::of_class(jl.get<long>());
        }

        const std::size_t dv = ex.graphs[0].num_nodes ? ex.graphs[0].node_feat[0].size() : 0;
        const std::size_t de =
            ex.graphs[0].has_edge_feat() ? ex.graphs[0].edge_feat[0].size() : 0;
        if (!have_dims) {
            ds.d_v = dv;
            ds.d_e = de;
            have_dims = true;
        } else if (dv != ds.d_v || de != ds.d_e) {
            throw std::runtime_error("line " + std::to_string(line_no + 1) +
                                     ": feature dimension mismatch with earlier lines");
        }

        Split s;
        try {
            s = split_from_string(j.at("split").get<std::string>());
        } catch (const std::exception& e) {
            throw std::runtime_error("line " + std::to_string(line_no + 1) + ": " + e.what());
        }
        switch (s) {
            case Split::Train: ds.train.push_back(std::move(ex)); break;
            case Split::Valid: ds.valid.push_back(std::move(ex)); break;
            case Split::Test: ds.test.push_back(std::move(ex)); break;
        }
    }
    ds.validate();
    return ds;
}

void write_jsonl(const Dataset& ds, const std::string& path, const std::string& meta_path) {
    std::vector<std::pair<const Example*, Split>> rows;
    for (const Example& ex : ds.train) rows.emplace_back(&ex, Split::Train);
    for (const Example& ex : ds.valid) rows.emplace_back(&ex, Split::Valid);
    for (const Example& ex : ds.test) rows.emplace_back(&ex, Split::Test);
    std::sort(rows.begin(), rows.end(),
              [](const auto& a, const auto& b) { return a.first->id < b.first->id; });

    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write dataset file: " + path);
    for (const auto& [ex, split] : rows) {
        json j;
        json graphs = json::array();
        for (const Graph& g : ex->graphs) graphs.push_back(graph_to_json(g));
        j["graphs"] = std::move(graphs);
        if (ex->label.is_class)
            j["label"] = ex->label.cls;
        else
            j["label"] = ex->label.value;
        j["split"] = split_to_string(split);
        out << j.dump() << "\n";
    }

    const std::string mpath = meta_path.empty() ? default_meta_path(path) : meta_path;
    std::ofstream mout(mpath);
    if (!mout) throw std::runtime_error("cannot write meta file: " + mpath);
    mout << "task = " << task_to_string(ds.task) << "\n";
    if (ds.task == TaskKind::Multiclass) mout << "classes = " << ds.num_classes << "\n";
}

namespace {

constexpr std::size_t kMotifDim = 8;

Graph make_motif_graph(const std::vector<double>& signature, std::size_t cls, Rng& rng) {
    Graph g;
    g.num_nodes = 8 + rng.next(9);  // 8..16
    g.node_feat.resize(g.num_nodes);
    for (auto& row : g.node_feat) {
        row.resize(kMotifDim);
        for (std::size_t j = 0; j < kMotifDim; ++j)
            row[j] = signature[j] + 0.25 * rng.normal();
    }
    // planted cycle of class-dependent length over the first nodes
    const std::size_t cycle = 3 + cls % 6;
    std::set<std::pair<std::size_t, std::size_t>> used;
    auto add_edge = [&](std::size_t u, std::size_t v) {
        if (u == v) return;
        if (u > v) std::swap(u, v);
        if (used.insert({u, v}).second) g.edges.emplace_back(u, v);
    };
    for (std::size_t i = 0; i < cycle; ++i) add_edge(i, (i + 1) % cycle);
    // random filler edges keep structure from being fully determined by class
    const std::size_t extra = g.num_nodes / 2;
    for (std::size_t i = 0; i < extra; ++i)
        add_edge(rng.next(g.num_nodes), rng.next(g.num_nodes));
    return g;
}

}  // namespace

std::size_t motif_feature_dim() { return kMotifDim; }

Dataset gen_longtail_motif(std::size_t num_classes, std::size_t head_count,
                           std::size_t tail_count, double tail_fraction,
                           std::uint64_t seed) {
    if (num_classes < 2) throw std::invalid_argument("gen_longtail_motif: need >= 2 classes");
    if (!(head_count > tail_count && tail_count >= 1))
        throw std::invalid_argument("gen_longtail_motif: need head_count > tail_count >= 1");
    const std::size_t n_tail =
        static_cast<std::size_t>(std::llround(tail_fraction * static_cast<double>(num_classes)));
    const std::size_t first_tail = num_classes - n_tail;

    Rng rng(seed * 0x9e3779b97f4a7c15ULL + 1);
    std::vector<std::vector<double>> signatures(num_classes);
    for (std::size_t c = 0; c < first_tail; ++c) {
        signatures[c].resize(kMotifDim);
        for (double& x : signatures[c]) x = rng.normal();
    }
    // tail signatures sit near a head signature, offset by a fixed-norm bump
    for (std::size_t c = first_tail; c < num_classes; ++c) {
        const std::size_t head = (c - first_tail) % std::max<std::size_t>(first_tail, 1);
        std::vector<double> dir(kMotifDim);
        double norm = 0.0;
        for (double& x : dir) {
            x = rng.normal();
            norm += x * x;
        }
        norm = std::sqrt(norm);
        signatures[c] = signatures[head];
        for (std::size_t j = 0; j < kMotifDim; ++j) signatures[c][j] += 0.4 * dir[j] / norm;
    }

    Dataset ds;
    ds.task = TaskKind::Multiclass;
    ds.num_classes = num_classes;
    ds.d_v = kMotifDim;
    ds.d_e = 0;
    std::size_t id = 0;
    // held-out sizes scale with the head count so accuracy resolution keeps
    // pace with the training set
    const std::size_t kValidPerClass = std::max<std::size_t>(5, head_count / 8);
    const std::size_t kTestPerClass = std::max<std::size_t>(10, head_count / 4);
    for (std::size_t c = 0; c < num_classes; ++c) {
        const std::size_t n_train = c < first_tail ? head_count : tail_count;
        for (std::size_t i = 0; i < n_train; ++i)
            ds.train.push_back({{make_motif_graph(signatures[c], c, rng)},
                                Label::of_class(static_cast<long>(c)), id++});
        for (std::size_t i = 0; i < kValidPerClass; ++i)
            ds.valid.push_back({{make_motif_graph(signatures[c], c, rng)},
                                Label::of_class(static_cast<long>(c)), id++});
        for (std::size_t i = 0; i < kTestPerClass; ++i)
            ds.test.push_back({{make_motif_graph(signatures[c], c, rng)},
                               Label::of_class(static_cast<long>(c)), id++});
    }
    ds.validate();
    return ds;
}

double regression_target(const Graph& g) {
    const double m = static_cast<double>(g.num_edges());
    return m + 0.03 * m * m;
}

Dataset gen_longtail_regression(std::uint64_t seed, std::size_t size) {
    if (size < 100) throw std::invalid_argument("gen_longtail_regression: size must be >= 100");
    Rng rng(seed * 0x2545f4914f6cdd1dULL + 7);
    Dataset ds;
    ds.task = TaskKind::Regression;
    ds.d_v = 1;
    ds.d_e = 0;
    for (std::size_t i = 0; i < size; ++i) {
        std::size_t m = static_cast<std::size_t>(rng.exponential(6.0));
        m = std::min<std::size_t>(m, 40);
        // smallest n with n(n-1)/2 >= m, plus slack
        std::size_t n = 2;
        while (n * (n - 1) / 2 < m) ++n;
        n = std::max<std::size_t>(4, n + rng.next(3));
        Graph g;
        g.num_nodes = n;
        g.node_feat.assign(n, {1.0});
        std::set<std::pair<std::size_t, std::size_t>> used;
        while (g.edges.size() < m) {
            std::size_t u = rng.next(n), v = rng.next(n);
            if (u == v) continue;
            if (u > v) std::swap(u, v);
            if (used.insert({u, v}).second) g.edges.emplace_back(u, v);
        }
        Example ex;
        ex.graphs.push_back(std::move(g));
        ex.label = Label::of_value(regression_target(ex.graphs[0]));
        ex.id = i;
        // 14/3/3 round-robin keeps the value distribution similar across splits
        const std::size_t slot = i % 20;
        if (slot < 14)
            ds.train.push_back(std::move(ex));
        else if (slot < 17)
            ds.valid.push_back(std::move(ex));
        else
            ds.test.push_back(std::move(ex));
    }
    ds.validate();
    return ds;
}

}  // namespace rgnn
