// SPDX-License-Identifier: Apache-2.0

#ifndef RGNN_METRICS_HPP
#define RGNN_METRICS_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace rgnn {

struct GroupMetric {
    std::string label;
    std::size_t count = 0;
    double value = 0.0;
};

struct MetricsReport {
    std::string metric;
    double value = 0.0;
    std::vector<GroupMetric> groups;
    std::size_t seeds = 1;
    std::optional<double> mean;
    std::optional<double> std_dev;

    std::string to_json() const;
    static MetricsReport from_json(const std::string& text);
};

double accuracy(const std::vector<long>& preds, const std::vector<long>& labels);

// P(random positive outscores random negative), ties half-credited
double roc_auc(const std::vector<double>& scores, const std::vector<long>& labels);

double mae(const std::vector<double>& preds, const std::vector<double>& targets);

// classes bucketed by train-sample count into |boundaries|+1 groups;
// per-group accuracy over the evaluated examples
MetricsReport longtail_class_report(const std::vector<long>& preds,
                                    const std::vector<long>& labels,
                                    const std::map<long, std::size_t>& train_class_counts,
                                    const std::vector<std::size_t>& boundaries);

// examples bucketed by target into [e0,e1), ..., [en,inf); per-bucket MAE
MetricsReport value_bucket_report(const std::vector<double>& preds,
                                  const std::vector<double>& targets,
                                  const std::vector<double>& edges);

}  // namespace rgnn

#endif
