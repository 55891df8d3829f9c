// SPDX-License-Identifier: Apache-2.0

#ifndef RGNN_INDEX_HPP
#define RGNN_INDEX_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "rgnn/graph.hpp"

namespace rgnn {

struct IndexEntry {
    std::vector<double> key;
    std::uint64_t example_id = 0;
    Label label;
};

struct SearchHit {
    const IndexEntry* entry = nullptr;
    double distance = 0.0;
};

double l2_distance(const std::vector<double>& a, const std::vector<double>& b);

// monotone, bounded similarity exposed to the retrieval baselines
inline double similarity_from_distance(double d) { return 1.0 / (1.0 + d); }

// Exact L2 top-k search; immutable after build, safe for concurrent queries.
class FlatIndex {
public:
    FlatIndex() = default;

    static FlatIndex build(const std::vector<std::vector<double>>& keys,
                           const std::vector<std::pair<std::uint64_t, Label>>& payloads);

    // k smallest distances ascending; ties broken by smaller example_id
    std::vector<SearchHit> search_topk(const std::vector<double>& query, std::size_t k) const;

    std::size_t size() const { return entries_.size(); }
    std::size_t dim() const { return dim_; }
    const std::vector<IndexEntry>& entries() const { return entries_; }

    void save(const std::string& path) const;
    static FlatIndex load(const std::string& path);

private:
    std::size_t dim_ = 0;
    std::vector<IndexEntry> entries_;
};

}  // namespace rgnn

#endif
