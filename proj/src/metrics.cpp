// SPDX-License-Identifier: Apache-2.0

#include "rgnn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace rgnn {

using nlohmann::json;

std::string MetricsReport::to_json() const {
    json j;
    j["metric"] = metric;
    j["value"] = value;
    if (!groups.empty()) {
        json jg = json::array();
        for (const GroupMetric& g : groups)
            jg.push_back({{"label", g.label}, {"count", g.count}, {"value", g.value}});
        j["groups"] = std::move(jg);
    }
    j["seeds"] = seeds;
    if (mean) j["mean"] = *mean;
    if (std_dev) j["std"] = *std_dev;
    return j.dump(2);
}

MetricsReport MetricsReport::from_json(const std::string& text) {
    const json j = json::parse(text);
    MetricsReport r;
    r.metric = j.at("metric").get<std::string>();
    r.value = j.at("value").get<double>();
    if (j.contains("groups"))
        for (const auto& jg : j["groups"])
            r.groups.push_back({jg.at("label").get<std::string>(),
                                jg.at("count").get<std::size_t>(),
                                jg.at("value").get<double>()});
    r.seeds = j.value("seeds", std::size_t{1});
    if (j.contains("mean")) r.mean = j["mean"].get<double>();
    if (j.contains("std")) r.std_dev = j["std"].get<double>();
    return r;
}

double accuracy(const std::vector<long>& preds, const std::vector<long>& labels) {
    if (preds.empty() || preds.size() != labels.size())
        throw std::invalid_argument("accuracy: need equal nonempty sequences");
    std::size_t hit = 0;
    for (std::size_t i = 0; i < preds.size(); ++i)
        if (preds[i] == labels[i]) ++hit;
    return static_cast<double>(hit) / static_cast<double>(preds.size());
}

double roc_auc(const std::vector<double>& scores, const std::vector<long>& labels) {
    if (scores.size() != labels.size() || scores.empty())
        throw std::invalid_argument("roc_auc: need equal nonempty sequences");
    std::size_t pos = 0, neg = 0;
    for (long l : labels) (l == 1 ? pos : neg)++;
    if (pos == 0 || neg == 0)
        throw std::invalid_argument("roc_auc: both classes must be present");

    // tie-averaged ranks; rank-sum form equals half-credit pair counting
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&scores](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
        for (std::size_t t = i; t < j; ++t)
            if (labels[order[t]] == 1) rank_sum_pos += avg_rank;
        i = j;
    }
    const double p = static_cast<double>(pos), n = static_cast<double>(neg);
    return (rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n);
}

double mae(const std::vector<double>& preds, const std::vector<double>& targets) {
    if (preds.empty() || preds.size() != targets.size())
        throw std::invalid_argument("mae: need equal nonempty sequences");
    double s = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) s += std::abs(preds[i] - targets[i]);
    return s / static_cast<double>(preds.size());
}

MetricsReport longtail_class_report(const std::vector<long>& preds,
                                    const std::vector<long>& labels,
                                    const std::map<long, std::size_t>& train_class_counts,
                                    const std::vector<std::size_t>& boundaries) {
    for (std::size_t i = 1; i < boundaries.size(); ++i)
        if (boundaries[i] <= boundaries[i - 1])
            throw std::invalid_argument("longtail_class_report: boundaries not increasing");
    auto group_of = [&boundaries](std::size_t count) {
        std::size_t g = 0;
        while (g < boundaries.size() && count >= boundaries[g]) ++g;
        return g;
    };
    auto group_label = [&boundaries](std::size_t g) {
        if (boundaries.empty()) return std::string("all");
        if (g == 0) return "<" + std::to_string(boundaries[0]);
        if (g == boundaries.size()) return ">=" + std::to_string(boundaries.back());
        return std::to_string(boundaries[g - 1]) + "-" + std::to_string(boundaries[g]);
    };

    const std::size_t n_groups = boundaries.size() + 1;
    std::vector<std::size_t> total(n_groups, 0), hit(n_groups, 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto it = train_class_counts.find(labels[i]);
        if (it == train_class_counts.end())
            throw std::invalid_argument("longtail_class_report: class " +
                                        std::to_string(labels[i]) + " absent from train counts");
        const std::size_t g = group_of(it->second);
        ++total[g];
        if (preds[i] == labels[i]) ++hit[g];
    }

    MetricsReport r;
    r.metric = "accuracy";
    r.value = accuracy(preds, labels);
    for (std::size_t g = 0; g < n_groups; ++g) {
        if (total[g] == 0) continue;
        r.groups.push_back({group_label(g), total[g],
                            static_cast<double>(hit[g]) / static_cast<double>(total[g])});
    }
    return r;
}

MetricsReport value_bucket_report(const std::vector<double>& preds,
                                  const std::vector<double>& targets,
                                  const std::vector<double>& edges) {
    if (edges.empty()) throw std::invalid_argument("value_bucket_report: need bucket edges");
    for (std::size_t i = 1; i < edges.size(); ++i)
        if (edges[i] <= edges[i - 1])
            throw std::invalid_argument("value_bucket_report: edges not increasing");

    const std::size_t n_buckets = edges.size();  // [e0,e1),...,[en,inf)
    std::vector<std::size_t> count(n_buckets, 0);
    std::vector<double> err(n_buckets, 0.0);
    for (std::size_t i = 0; i < targets.size(); ++i) {
        std::size_t b = 0;
        while (b + 1 < n_buckets && targets[i] >= edges[b + 1]) ++b;
        ++count[b];
        err[b] += std::abs(preds[i] - targets[i]);
    }

    MetricsReport r;
    r.metric = "mae";
    r.value = mae(preds, targets);
    auto fmt = [](double x) {
        std::string s = std::to_string(x);
        s.erase(s.find_last_not_of('0') + 1);
        if (!s.empty() && s.back() == '.') s.pop_back();
        return s;
    };
    for (std::size_t b = 0; b < n_buckets; ++b) {
        if (count[b] == 0) continue;
        const std::string label = b + 1 < n_buckets
                                      ? "[" + fmt(edges[b]) + "," + fmt(edges[b + 1]) + ")"
                                      : "[" + fmt(edges[b]) + ",inf)";
        r.groups.push_back({label, count[b], err[b] / static_cast<double>(count[b])});
    }
    return r;
}

}  // namespace rgnn
