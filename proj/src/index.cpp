// SPDX-License-Identifier: Apache-2.0

#include "rgnn/index.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <unordered_set>

namespace rgnn {

namespace {

constexpr char kMagic[6] = {'G', 'R', 'I', 'X', '1', '\0'};

template <typename T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const char* what) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error(std::string("index load: truncated file at ") + what);
    return v;
}

}  // namespace

double l2_distance(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("l2_distance: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

FlatIndex FlatIndex::build(const std::vector<std::vector<double>>& keys,
                           const std::vector<std::pair<std::uint64_t, Label>>& payloads) {
    if (keys.empty()) throw std::invalid_argument("index build: empty input");
    if (keys.size() != payloads.size())
        throw std::invalid_argument("index build: key/payload count mismatch");
    FlatIndex idx;
    idx.dim_ = keys[0].size();
    std::unordered_set<std::uint64_t> ids;
    for (std::size_t i = 0; i < keys.size(); ++i) {
        if (keys[i].size() != idx.dim_)
            throw std::invalid_argument("index build: inconsistent key dimension");
        if (!ids.insert(payloads[i].first).second)
            throw std::invalid_argument("index build: duplicate example_id");
        idx.entries_.push_back({keys[i], payloads[i].first, payloads[i].second});
    }
    return idx;
}

std::vector<SearchHit> FlatIndex::search_topk(const std::vector<double>& query,
                                              std::size_t k) const {
    if (k < 1) throw std::invalid_argument("search_topk: k must be >= 1");
    if (query.size() != dim_) throw std::invalid_argument("search_topk: dimension mismatch");
    std::vector<SearchHit> hits;
    hits.reserve(entries_.size());
    for (const IndexEntry& e : entries_) hits.push_back({&e, l2_distance(e.key, query)});
    const std::size_t n = std::min(k, hits.size());
    auto cmp = [](const SearchHit& a, const SearchHit& b) {
        if (a.distance != b.distance) return a.distance < b.distance;
        return a.entry->example_id < b.entry->example_id;
    };
    std::partial_sort(hits.begin(), hits.begin() + static_cast<long>(n), hits.end(), cmp);
    hits.resize(n);
    return hits;
}

void FlatIndex::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("index save: cannot open " + path);
    out.write(kMagic, sizeof(kMagic));
    write_pod(out, static_cast<std::uint32_t>(dim_));
    write_pod(out, static_cast<std::uint64_t>(entries_.size()));
    for (const IndexEntry& e : entries_) {
        write_pod(out, e.example_id);
        const std::uint8_t kind = e.label.is_class ? 0 : 1;
        write_pod(out, kind);
        if (e.label.is_class)
            write_pod(out, static_cast<std::uint32_t>(e.label.cls));
        else
            write_pod(out, e.label.value);
        out.write(reinterpret_cast<const char*>(e.key.data()),
                  static_cast<long>(e.key.size() * sizeof(double)));
    }
    if (!out) throw std::runtime_error("index save: write failure on " + path);
}

FlatIndex FlatIndex::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("index load: cannot open " + path);
    char magic[6];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("index load: bad magic in " + path);
    FlatIndex idx;
    idx.dim_ = read_pod<std::uint32_t>(in, "dim");
    const std::uint64_t count = read_pod<std::uint64_t>(in, "count");
    idx.entries_.resize(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        IndexEntry& e = idx.entries_[i];
        e.example_id = read_pod<std::uint64_t>(in, "example_id");
        const std::uint8_t kind = read_pod<std::uint8_t>(in, "label_kind");
        if (kind == 0)
            e.label = Label::of_class(read_pod<std::uint32_t>(in, "class"));
        else if (kind == 1)
            e.label = Label::of_value(read_pod<double>(in, "value"));
        else
            throw std::runtime_error("index load: unknown label kind");
        e.key.resize(idx.dim_);
        in.read(reinterpret_cast<char*>(e.key.data()),
                static_cast<long>(idx.dim_ * sizeof(double)));
        if (!in) throw std::runtime_error("index load: truncated key data");
    }
    return idx;
}

}  // namespace rgnn
