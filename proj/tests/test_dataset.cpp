// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "rgnn/dataset.hpp"

using namespace rgnn;
namespace fs = std::filesystem;

namespace {

struct TmpDir {
    fs::path path;
    TmpDir() {
        path = fs::temp_directory_path() / ("rgnn_ds_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TmpDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    out << text;
}

// class fingerprint: mean node-feature vector of the example's first graph
std::vector<double> fingerprint(const Example& ex) {
    const Graph& g = ex.graphs.front();
    std::vector<double> mean(g.node_feat.front().size(), 0.0);
    for (const auto& row : g.node_feat)
        for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += row[j];
    for (double& m : mean) m /= static_cast<double>(g.num_nodes);
    return mean;
}

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

}  // namespace

TEST_CASE("minimal single-line file loads") {
    TmpDir tmp;
    write_file(tmp.file("d.jsonl"),
               R"({"graphs":[{"num_nodes":1,"edges":[],"node_feat":[[1.0]]}],"label":0,"split":"train"})"
               "\n");
    write_file(tmp.file("d.jsonl.meta"), "task=binary\n");
    Dataset ds = load_jsonl(tmp.file("d.jsonl"));
    CHECK(ds.train.size() == 1);
    CHECK(ds.valid.empty());
    CHECK(ds.test.empty());
    CHECK(ds.d_v == 1);
    CHECK(ds.task == TaskKind::Binary);
    CHECK(ds.num_classes == 2);
    CHECK(ds.train[0].label == Label::of_class(0));
}

TEST_CASE("split field routes records") {
    TmpDir tmp;
    std::string rec =
        R"({"graphs":[{"num_nodes":1,"edges":[],"node_feat":[[1.0]]}],"label":0,"split":")";
    write_file(tmp.file("d.jsonl"),
               rec + "train\"}\n" + rec + "valid\"}\n" + rec + "test\"}\n");
    write_file(tmp.file("d.jsonl.meta"), "task=binary\n");
    Dataset ds = load_jsonl(tmp.file("d.jsonl"));
    CHECK(ds.train.size() == 1);
    CHECK(ds.valid.size() == 1);
    CHECK(ds.test.size() == 1);
    // ids follow file line order
    CHECK(ds.train[0].id == 0);
    CHECK(ds.valid[0].id == 1);
    CHECK(ds.test[0].id == 2);
}

TEST_CASE("edge endpoint out of range reports the line") {
    TmpDir tmp;
    write_file(tmp.file("d.jsonl"),
               R"({"graphs":[{"num_nodes":1,"edges":[],"node_feat":[[1.0]]}],"label":0,"split":"train"})"
               "\n"
               R"({"graphs":[{"num_nodes":2,"edges":[[0,5]],"node_feat":[[1.0],[1.0]]}],"label":1,"split":"train"})"
               "\n");
    write_file(tmp.file("d.jsonl.meta"), "task=binary\n");
    try {
        load_jsonl(tmp.file("d.jsonl"));
        FAIL("expected a load error");
    } catch (const std::exception& e) {
        std::string msg = e.what();
        CHECK(msg.find("line 2") != std::string::npos);
        CHECK(msg.find("edge endpoint out of range") != std::string::npos);
    }
}

TEST_CASE("malformed JSON, unknown split, dim mismatch, empty train all throw") {
    TmpDir tmp;
    write_file(tmp.file("meta"), "task=binary\n");
    std::string good =
        R"({"graphs":[{"num_nodes":1,"edges":[],"node_feat":[[1.0]]}],"label":0,"split":"train"})";

    write_file(tmp.file("a.jsonl"), "{not json\n");
    CHECK_THROWS(load_jsonl(tmp.file("a.jsonl"), tmp.file("meta")));

    write_file(tmp.file("b.jsonl"),
               R"({"graphs":[{"num_nodes":1,"edges":[],"node_feat":[[1.0]]}],"label":0,"split":"half"})"
               "\n");
    CHECK_THROWS(load_jsonl(tmp.file("b.jsonl"), tmp.file("meta")));

    write_file(tmp.file("c.jsonl"),
               good + "\n" +
               R"({"graphs":[{"num_nodes":1,"edges":[],"node_feat":[[1.0,2.0]]}],"label":0,"split":"train"})"
               "\n");
    CHECK_THROWS(load_jsonl(tmp.file("c.jsonl"), tmp.file("meta")));

    write_file(tmp.file("e.jsonl"),
               R"({"graphs":[{"num_nodes":1,"edges":[],"node_feat":[[1.0]]}],"label":0,"split":"test"})"
               "\n");
    CHECK_THROWS(load_jsonl(tmp.file("e.jsonl"), tmp.file("meta")));

    CHECK_THROWS(load_jsonl(tmp.file("missing.jsonl"), tmp.file("meta")));
}

TEST_CASE("write then load round-trips a generated dataset") {
    TmpDir tmp;
    Dataset ds = gen_longtail_motif(4, 12, 3, 0.25, 9);
    write_jsonl(ds, tmp.file("rt.jsonl"));
    Dataset back = load_jsonl(tmp.file("rt.jsonl"));

    CHECK(back.task == ds.task);
    CHECK(back.num_classes == ds.num_classes);
    CHECK(back.d_v == ds.d_v);
    CHECK(back.d_e == ds.d_e);
    for (Split s : {Split::Train, Split::Valid, Split::Test}) {
        const auto& a = ds.split(s);
        const auto& b = back.split(s);
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].id == b[i].id);
            CHECK(a[i].label == b[i].label);
            REQUIRE(a[i].graphs.size() == b[i].graphs.size());
            for (std::size_t gi = 0; gi < a[i].graphs.size(); ++gi) {
                CHECK(a[i].graphs[gi].num_nodes == b[i].graphs[gi].num_nodes);
                CHECK(a[i].graphs[gi].edges == b[i].graphs[gi].edges);
                CHECK(a[i].graphs[gi].node_feat == b[i].graphs[gi].node_feat);
                CHECK(a[i].graphs[gi].edge_feat == b[i].graphs[gi].edge_feat);
            }
        }
    }
}

TEST_CASE("motif generator split sizes follow the config arithmetic") {
    Dataset ds = gen_longtail_motif(20, 200, 5, 0.25, 7);
    CHECK(ds.train.size() == 15 * 200 + 5 * 5);  // 3025
    CHECK(ds.valid.size() == 20 * 25);  // per-class held-out counts scale with head_count
    CHECK(ds.test.size() == 20 * 50);
    CHECK(ds.num_classes == 20);
    CHECK(ds.d_v == motif_feature_dim());
    ds.validate();

    std::map<long, std::size_t> train_counts;
    for (const auto& ex : ds.train) ++train_counts[ex.label.cls];
    std::size_t heads = 0, tails = 0;
    for (const auto& [c, n] : train_counts) {
        (void)c;
        if (n == 200) ++heads;
        if (n == 5) ++tails;
    }
    CHECK(heads == 15);
    CHECK(tails == 5);
}

TEST_CASE("motif generator is deterministic and rejects empty splits") {
    Dataset a = gen_longtail_motif(5, 20, 2, 0.2, 13);
    Dataset b = gen_longtail_motif(5, 20, 2, 0.2, 13);
    REQUIRE(a.train.size() == b.train.size());
    for (std::size_t i = 0; i < a.train.size(); ++i) {
        CHECK(a.train[i].label == b.train[i].label);
        CHECK(a.train[i].graphs[0].node_feat == b.train[i].graphs[0].node_feat);
        CHECK(a.train[i].graphs[0].edges == b.train[i].graphs[0].edges);
    }
    Dataset c = gen_longtail_motif(5, 20, 2, 0.2, 14);
    bool differs = false;
    for (std::size_t i = 0; i < a.train.size() && !differs; ++i)
        differs = a.train[i].graphs[0].node_feat != c.train[i].graphs[0].node_feat;
    CHECK(differs);

    CHECK_THROWS(gen_longtail_motif(1, 10, 1, 0.0, 0));
    CHECK_THROWS(gen_longtail_motif(5, 2, 5, 0.2, 0));
}

TEST_CASE("nearest-fingerprint classifier recovers generated classes") {
    // independent oracle: 1-NN over mean node-feature vectors of train examples
    Dataset ds = gen_longtail_motif(10, 40, 4, 0.3, 21);
    std::vector<std::vector<double>> keys;
    std::vector<long> key_cls;
    for (const auto& ex : ds.train) {
        keys.push_back(fingerprint(ex));
        key_cls.push_back(ex.label.cls);
    }
    std::size_t hits = 0;
    for (const auto& ex : ds.test) {
        std::vector<double> q = fingerprint(ex);
        std::size_t best = 0;
        double best_d = sq_dist(q, keys[0]);
        for (std::size_t i = 1; i < keys.size(); ++i) {
            double d = sq_dist(q, keys[i]);
            if (d < best_d) {
                best_d = d;
                best = i;
            }
        }
        if (key_cls[best] == ex.label.cls) ++hits;
    }
    double acc = static_cast<double>(hits) / static_cast<double>(ds.test.size());
    CHECK(acc > 0.9);
}

TEST_CASE("regression generator matches the target oracle") {
    Dataset ds = gen_longtail_regression(1, 200);
    ds.validate();
    CHECK(ds.task == TaskKind::Regression);
    for (Split s : {Split::Train, Split::Valid, Split::Test})
        for (const auto& ex : ds.split(s))
            CHECK(ex.label.value == doctest::Approx(regression_target(ex.graphs[0])).epsilon(1e-12));
}

TEST_CASE("regression generator bucket mass decays") {
    Dataset ds = gen_longtail_regression(1, 1000);
    CHECK(ds.train.size() + ds.valid.size() + ds.test.size() == 1000);
    std::vector<std::size_t> counts(4, 0);
    const double edges[] = {0, 10, 20, 30};
    for (Split s : {Split::Train, Split::Valid, Split::Test})
        for (const auto& ex : ds.split(s)) {
            double t = ex.label.value;
            std::size_t b = 0;
            for (std::size_t i = 1; i < 4; ++i)
                if (t >= edges[i]) b = i;
            ++counts[b];
        }
    CHECK(counts[0] > counts[1]);
    CHECK(counts[1] > counts[2]);
    CHECK(counts[2] > counts[3]);
    CHECK(counts[3] >= 1);  // the rare tail still exists
}

TEST_CASE("regression generator is deterministic") {
    Dataset a = gen_longtail_regression(5, 300);
    Dataset b = gen_longtail_regression(5, 300);
    REQUIRE(a.train.size() == b.train.size());
    for (std::size_t i = 0; i < a.train.size(); ++i) {
        CHECK(a.train[i].label.value == b.train[i].label.value);
        CHECK(a.train[i].graphs[0].edges == b.train[i].graphs[0].edges);
    }
    CHECK_THROWS(gen_longtail_regression(5, 10));  // below minimum size
}

TEST_CASE("graph validation catches broken invariants") {
    Graph g;
    g.num_nodes = 2;
    g.node_feat = {{1.0}, {1.0}};
    g.edges = {{0, 1}};
    g.validate();

    Graph loop = g;
    loop.edges = {{1, 1}};
    CHECK_THROWS(loop.validate());

    Graph bad_feat = g;
    bad_feat.node_feat = {{1.0}};
    CHECK_THROWS(bad_feat.validate());

    Graph bad_edge_feat = g;
    bad_edge_feat.edge_feat = {{0.5}, {0.5}};  // two rows for one edge
    CHECK_THROWS(bad_edge_feat.validate());
}
