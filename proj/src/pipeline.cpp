// SPDX-License-Identifier: Apache-2.0

#include "rgnn/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "rgnn/rng.hpp"

namespace rgnn {

namespace {

std::map<std::string, std::string> parse_kv(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
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

template <typename T>
std::vector<T> parse_list(const std::string& s) {
    std::vector<T> out;
    std::istringstream in(s);
    std::string tok;
    while (std::getline(in, tok, ','))
        if (!tok.empty()) out.push_back(static_cast<T>(std::stod(tok)));
    return out;
}

template <typename T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const char* what) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error(std::string("checkpoint: truncated at ") + what);
    return v;
}

void write_string(std::ostream& out, const std::string& s) {
    write_pod(out, static_cast<std::uint64_t>(s.size()));
    out.write(s.data(), static_cast<long>(s.size()));
}

std::string read_string(std::istream& in, const char* what) {
    const auto n = read_pod<std::uint64_t>(in, what);
    std::string s(n, '\0');
    in.read(s.data(), static_cast<long>(n));
    if (!in) throw std::runtime_error(std::string("checkpoint: truncated at ") + what);
    return s;
}

void write_tensor(std::ostream& out, const Tensor& t) {
    write_pod(out, static_cast<std::uint64_t>(t->rows));
    write_pod(out, static_cast<std::uint64_t>(t->cols));
    out.write(reinterpret_cast<const char*>(t->v.data()),
              static_cast<long>(t->v.size() * sizeof(double)));
}

Tensor read_tensor(std::istream& in, bool requires_grad, const char* what) {
    const auto rows = read_pod<std::uint64_t>(in, what);
    const auto cols = read_pod<std::uint64_t>(in, what);
    Tensor t = make_tensor(rows, cols, requires_grad);
    in.read(reinterpret_cast<char*>(t->v.data()),
            static_cast<long>(t->v.size() * sizeof(double)));
    if (!in) throw std::runtime_error(std::string("checkpoint: truncated at ") + what);
    return t;
}

void write_doubles(std::ostream& out, const std::vector<double>& v) {
    write_pod(out, static_cast<std::uint64_t>(v.size()));
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<long>(v.size() * sizeof(double)));
}

std::vector<double> read_doubles(std::istream& in, const char* what) {
    const auto n = read_pod<std::uint64_t>(in, what);
    std::vector<double> v(n);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<long>(n * sizeof(double)));
    if (!in) throw std::runtime_error(std::string("checkpoint: truncated at ") + what);
    return v;
}

constexpr char kCkptMagic[6] = {'G', 'R', 'C', 'K', '1', '\0'};

ModelParams clone_model(const ModelParams& src) {
    ModelParams dst;
    dst.config = src.config;
    dst.d_v = src.d_v;
    dst.d_e = src.d_e;
    dst.instances = src.instances;
    dst.out_dim = src.out_dim;
    auto copy_tensor = [](const Tensor& t) {
        return t ? make_tensor(t->rows, t->cols, t->v, t->requires_grad) : Tensor();
    };
    for (const LayerParams& l : src.layers) {
        LayerParams c;
        c.w1 = copy_tensor(l.w1);
        c.b1 = copy_tensor(l.b1);
        c.w2 = copy_tensor(l.w2);
        c.b2 = copy_tensor(l.b2);
        c.edge_w = copy_tensor(l.edge_w);
        c.bn = BatchNormState(l.bn.features());
        c.bn.gamma->v = l.bn.gamma->v;
        c.bn.beta->v = l.bn.beta->v;
        c.bn.running_mean = l.bn.running_mean;
        c.bn.running_var = l.bn.running_var;
        c.bn.momentum = l.bn.momentum;
        c.bn.eps = l.bn.eps;
        dst.layers.push_back(std::move(c));
    }
    dst.head_w = copy_tensor(src.head_w);
    dst.head_b = copy_tensor(src.head_b);
    return dst;
}

double headline_metric(TaskKind task, const std::vector<long>& preds,
                       const std::vector<long>& labels, const std::vector<double>& scores,
                       const std::vector<double>& values, const std::vector<double>& targets) {
    if (task == TaskKind::Regression) return -mae(values, targets);
    if (task == TaskKind::Binary) {
        try {
            return roc_auc(scores, labels);
        } catch (const std::invalid_argument&) {
            return accuracy(preds, labels);
        }
    }
    return accuracy(preds, labels);
}

double model_validation_metric(ModelParams& model, const Dataset& ds) {
    EncodedSplit enc = encode_split(model, ds.valid);
    std::vector<long> preds, labels;
    std::vector<double> scores, values, targets;
    for (std::size_t i = 0; i < ds.valid.size(); ++i) {
        if (ds.task == TaskKind::Regression) {
            values.push_back(enc.outputs[i][0]);
            targets.push_back(ds.valid[i].label.value);
        } else {
            const auto& probs = enc.outputs[i];
            preds.push_back(static_cast<long>(
                std::max_element(probs.begin(), probs.end()) - probs.begin()));
            labels.push_back(ds.valid[i].label.cls);
            if (ds.task == TaskKind::Binary) scores.push_back(probs[1]);
        }
    }
    return headline_metric(ds.task, preds, labels, scores, values, targets);
}

std::map<long, std::size_t> train_class_counts(const Dataset& ds) {
    std::map<long, std::size_t> counts;
    for (const Example& ex : ds.train) counts[ex.label.cls]++;
    return counts;
}

}  // namespace

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    RunConfig cfg;
    cfg.snapshot = buf.str();
    const auto kv = parse_kv(cfg.snapshot);
    auto get = [&kv](const std::string& key) -> const std::string* {
        const auto it = kv.find(key);
        return it == kv.end() ? nullptr : &it->second;
    };
    if (const auto* v = get("dataset")) cfg.dataset_path = *v;
    if (const auto* v = get("meta")) cfg.meta_path = *v;
    if (const auto* v = get("kind"))
        cfg.model.kind = *v == "gcn" ? GnnKind::GCN : GnnKind::GIN;
    if (const auto* v = get("layers")) cfg.model.layers = std::stoul(*v);
    if (const auto* v = get("hidden_dim")) cfg.model.hidden_dim = std::stoul(*v);
    if (const auto* v = get("readout"))
        cfg.model.readout = *v == "mean" ? ReadoutMode::Mean : ReadoutMode::Sum;
    if (const auto* v = get("use_edge_feat")) cfg.model.use_edge_feat = *v == "true";
    if (const auto* v = get("gin_eps")) cfg.model.gin_eps = std::stod(*v);
    if (const auto* v = get("m1")) cfg.m1 = std::stoul(*v);
    if (const auto* v = get("m2")) cfg.m2 = std::stoul(*v);
    if (const auto* v = get("k")) cfg.k = std::stoul(*v);
    if (const auto* v = get("batch_size")) cfg.batch_size = std::stoul(*v);
    if (const auto* v = get("lr")) cfg.base_lr = std::stod(*v);
    if (const auto* v = get("seeds")) cfg.seeds = std::stoul(*v);
    if (const auto* v = get("seed")) cfg.seed = std::stoull(*v);
    if (const auto* v = get("boundaries")) cfg.group_boundaries = parse_list<std::size_t>(*v);
    if (const auto* v = get("edges")) cfg.bucket_edges = parse_list<double>(*v);
    if (const auto* v = get("out_dir")) cfg.out_dir = *v;
    cfg.validate();
    return cfg;
}

std::string RunConfig::to_text() const {
    std::ostringstream out;
    out << "dataset = " << dataset_path << "\n";
    if (!meta_path.empty()) out << "meta = " << meta_path << "\n";
    out << "kind = " << (model.kind == GnnKind::GCN ? "gcn" : "gin") << "\n";
    out << "layers = " << model.layers << "\n";
    out << "hidden_dim = " << model.hidden_dim << "\n";
    out << "readout = " << (model.readout == ReadoutMode::Mean ? "mean" : "sum") << "\n";
    out << "use_edge_feat = " << (model.use_edge_feat ? "true" : "false") << "\n";
    out << "gin_eps = " << model.gin_eps << "\n";
    out << "m1 = " << m1 << "\nm2 = " << m2 << "\nk = " << k << "\n";
    out << "batch_size = " << batch_size << "\nlr = " << base_lr << "\n";
    out << "seeds = " << seeds << "\nseed = " << seed << "\n";
    out << "boundaries = ";
    for (std::size_t i = 0; i < group_boundaries.size(); ++i)
        out << (i ? "," : "") << group_boundaries[i];
    out << "\nedges = ";
    for (std::size_t i = 0; i < bucket_edges.size(); ++i)
        out << (i ? "," : "") << bucket_edges[i];
    out << "\nout_dir = " << out_dir << "\n";
    return out.str();
}

void RunConfig::validate() const {
    if (m1 < 1 || m2 < 1) throw std::invalid_argument("config: m1 and m2 must be >= 1");
    if (k < 1) throw std::invalid_argument("config: k must be >= 1");
    if (batch_size < 2) throw std::invalid_argument("config: batch_size must be >= 2");
    if (seeds < 1) throw std::invalid_argument("config: seeds must be >= 1");
}

void Checkpoint::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot open " + path);
    out.write(kCkptMagic, sizeof(kCkptMagic));
    write_pod(out, version);
    write_pod(out, seed);
    write_pod(out, static_cast<std::uint8_t>(task));
    write_pod(out, static_cast<std::uint64_t>(num_classes));
    write_string(out, config_text);
    write_string(out, index_path);

    const GnnConfig& c = model.config;
    write_pod(out, static_cast<std::uint8_t>(c.kind));
    write_pod(out, static_cast<std::uint64_t>(c.layers));
    write_pod(out, static_cast<std::uint64_t>(c.hidden_dim));
    write_pod(out, static_cast<std::uint8_t>(c.readout));
    write_pod(out, static_cast<std::uint8_t>(c.use_edge_feat ? 1 : 0));
    write_pod(out, c.gin_eps);
    write_pod(out, static_cast<std::uint64_t>(model.d_v));
    write_pod(out, static_cast<std::uint64_t>(model.d_e));
    write_pod(out, static_cast<std::uint64_t>(model.instances));
    write_pod(out, static_cast<std::uint64_t>(model.out_dim));
    for (const LayerParams& l : model.layers) {
        write_tensor(out, l.w1);
        if (c.kind == GnnKind::GIN) {
            write_tensor(out, l.b1);
            write_tensor(out, l.w2);
            write_tensor(out, l.b2);
        }
        write_pod(out, static_cast<std::uint8_t>(l.edge_w ? 1 : 0));
        if (l.edge_w) write_tensor(out, l.edge_w);
        write_tensor(out, l.bn.gamma);
        write_tensor(out, l.bn.beta);
        write_doubles(out, l.bn.running_mean);
        write_doubles(out, l.bn.running_var);
    }
    write_tensor(out, model.head_w);
    write_tensor(out, model.head_b);

    write_pod(out, static_cast<std::uint8_t>(adapter ? 1 : 0));
    if (adapter) {
        write_pod(out, static_cast<std::uint64_t>(adapter->k));
        write_pod(out, static_cast<std::uint64_t>(adapter->d));
        write_pod(out, static_cast<std::uint64_t>(adapter->d_proj));
        write_tensor(out, adapter->w1);
        write_tensor(out, adapter->w2);
        write_tensor(out, adapter->phi);
    }
    if (!out) throw std::runtime_error("checkpoint: write failure on " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[6];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCkptMagic, sizeof(kCkptMagic)) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    Checkpoint ck;
    ck.version = read_pod<std::uint32_t>(in, "version");
    if (ck.version != 1) throw std::runtime_error("checkpoint: unsupported version");
    ck.seed = read_pod<std::uint64_t>(in, "seed");
    ck.task = static_cast<TaskKind>(read_pod<std::uint8_t>(in, "task"));
    ck.num_classes = read_pod<std::uint64_t>(in, "num_classes");
    ck.config_text = read_string(in, "config_text");
    ck.index_path = read_string(in, "index_path");

    GnnConfig c;
    c.kind = static_cast<GnnKind>(read_pod<std::uint8_t>(in, "kind"));
    c.layers = read_pod<std::uint64_t>(in, "layers");
    c.hidden_dim = read_pod<std::uint64_t>(in, "hidden_dim");
    c.readout = static_cast<ReadoutMode>(read_pod<std::uint8_t>(in, "readout"));
    c.use_edge_feat = read_pod<std::uint8_t>(in, "use_edge_feat") != 0;
    c.gin_eps = read_pod<double>(in, "gin_eps");
    ck.model.config = c;
    ck.model.d_v = read_pod<std::uint64_t>(in, "d_v");
    ck.model.d_e = read_pod<std::uint64_t>(in, "d_e");
    ck.model.instances = read_pod<std::uint64_t>(in, "instances");
    ck.model.out_dim = read_pod<std::uint64_t>(in, "out_dim");
    for (std::size_t t = 0; t < c.layers; ++t) {
        LayerParams l;
        l.w1 = read_tensor(in, true, "layer w1");
        if (c.kind == GnnKind::GIN) {
            l.b1 = read_tensor(in, true, "layer b1");
            l.w2 = read_tensor(in, true, "layer w2");
            l.b2 = read_tensor(in, true, "layer b2");
        }
        if (read_pod<std::uint8_t>(in, "has_edge_w")) l.edge_w = read_tensor(in, true, "edge_w");
        Tensor gamma = read_tensor(in, true, "bn gamma");
        Tensor beta = read_tensor(in, true, "bn beta");
        l.bn = BatchNormState(gamma->cols);
        l.bn.gamma->v = gamma->v;
        l.bn.beta->v = beta->v;
        l.bn.running_mean = read_doubles(in, "bn running_mean");
        l.bn.running_var = read_doubles(in, "bn running_var");
        ck.model.layers.push_back(std::move(l));
    }
    ck.model.head_w = read_tensor(in, true, "head_w");
    ck.model.head_b = read_tensor(in, true, "head_b");

    if (read_pod<std::uint8_t>(in, "has_adapter")) {
        AdapterParams a;
        a.k = read_pod<std::uint64_t>(in, "adapter k");
        a.d = read_pod<std::uint64_t>(in, "adapter d");
        a.d_proj = read_pod<std::uint64_t>(in, "adapter d_proj");
        a.w1 = read_tensor(in, true, "adapter w1");
        a.w2 = read_tensor(in, true, "adapter w2");
        a.phi = read_tensor(in, true, "adapter phi");
        ck.adapter = std::move(a);
    }
    return ck;
}

ModelParams train_model(const Dataset& ds, const GnnConfig& config, std::size_t m1,
                        std::size_t batch_size, double base_lr, std::uint64_t seed) {
    const std::size_t instances = ds.instances_per_example();
    const std::size_t out_dim = ds.task == TaskKind::Regression ? 1 : ds.num_classes;
    ModelParams model = init_model(config, ds.d_v, ds.d_e, instances, out_dim, seed);

    std::vector<Tensor> learnables = model.parameters();
    AdamState adam;
    adam.base_lr = base_lr;
    adam.init(learnables);
    Rng order_rng(seed * 0x9e3779b97f4a7c15ULL + 11);

    ModelParams best = clone_model(model);
    double best_metric = -std::numeric_limits<double>::infinity();

    std::vector<std::size_t> order(ds.train.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t epoch = 0; epoch < m1; ++epoch) {
        order_rng.shuffle(order);
        const double lr = lr_at(static_cast<long>(epoch), base_lr);
        for (std::size_t off = 0; off < order.size();) {
            std::size_t end = std::min(off + batch_size, order.size());
            if (order.size() - end == 1) end = order.size();  // avoid a 1-example tail batch
            std::vector<const Example*> batch_ex;
            for (std::size_t t = off; t < end; ++t) batch_ex.push_back(&ds.train[order[t]]);
            Tape tape;
            GraphBatch batch = build_batch(batch_ex);
            ForwardResult fr = forward(tape, model, batch, true);
            Tensor loss = phase1_loss(tape, fr.output, batch_ex, ds.task);
            if (!std::isfinite(loss->v[0]))
                throw std::runtime_error("train_model: non-finite loss at epoch " +
                                         std::to_string(epoch));
            tape.backward(loss);
            adam_step(adam, learnables, lr);
            off = end;
        }
        const double metric = model_validation_metric(model, ds);
        if (metric > best_metric) {
            best_metric = metric;
            best = clone_model(model);
        }
    }
    return best;
}

FlatIndex build_index_from_model(ModelParams& model, const Dataset& ds) {
    EncodedSplit enc = encode_split(model, ds.train);
    std::vector<std::pair<std::uint64_t, Label>> payloads;
    for (const Example& ex : ds.train) payloads.emplace_back(ex.id, ex.label);
    return FlatIndex::build(enc.embeddings, payloads);
}

EvalMode eval_mode_from_string(const std::string& s) {
    if (s == "base") return EvalMode::Base;
    if (s == "enhanced") return EvalMode::Enhanced;
    if (s == "averaging") return EvalMode::Averaging;
    throw std::invalid_argument("unknown eval mode: " + s);
}

MetricsReport evaluate(ModelParams& model, const AdapterParams* adapter, const FlatIndex* index,
                       const Dataset& ds, Split split, EvalMode mode,
                       const std::vector<std::size_t>& group_boundaries,
                       const std::vector<double>& bucket_edges) {
    if (mode == EvalMode::Enhanced && (!adapter || !index))
        throw std::invalid_argument("evaluate: enhanced mode needs adapter and index");
    if (mode == EvalMode::Averaging && !index)
        throw std::invalid_argument("evaluate: averaging mode needs index");
    const std::vector<Example>& examples = ds.split(split);
    if (examples.empty()) throw std::invalid_argument("evaluate: empty split");
    const std::size_t k = adapter ? adapter->k : 3;

    EncodedSplit enc = encode_split(model, examples);
    std::vector<long> preds, labels;
    std::vector<double> scores, values, targets;
    Tape tape(false);
    for (std::size_t i = 0; i < examples.size(); ++i) {
        std::vector<double> dist;
        double value = 0.0;
        if (mode == EvalMode::Base) {
            if (ds.task == TaskKind::Regression)
                value = enc.outputs[i][0];
            else
                dist = enc.outputs[i];
        } else {
            RetrievalSet retr = retrieve_with_dropout(*index, enc.embeddings[i], k, false);
            if (mode == EvalMode::Enhanced) {
                Tensor attn = compute_attention(tape, *adapter, enc.embeddings[i], retr);
                if (ds.task == TaskKind::Regression)
                    value = reg_predict(attn->v, enc.outputs[i][0], retr);
                else
                    dist = cls_predict(attn->v, enc.outputs[i], retr).distribution;
            } else {
                if (ds.task == TaskKind::Regression)
                    value = averaging_reg_predict(enc.outputs[i][0], retr);
                else
                    dist = averaging_cls_predict(enc.outputs[i], retr).distribution;
            }
        }
        if (ds.task == TaskKind::Regression) {
            values.push_back(value);
            targets.push_back(examples[i].label.value);
        } else {
            preds.push_back(static_cast<long>(
                std::max_element(dist.begin(), dist.end()) - dist.begin()));
            labels.push_back(examples[i].label.cls);
            if (ds.task == TaskKind::Binary) scores.push_back(dist[1]);
        }
    }

    if (ds.task == TaskKind::Regression) return value_bucket_report(values, targets, bucket_edges);
    if (ds.task == TaskKind::Binary) {
        MetricsReport r;
        r.metric = "roc_auc";
        r.value = roc_auc(scores, labels);
        return r;
    }
    return longtail_class_report(preds, labels, train_class_counts(ds), group_boundaries);
}

namespace {

MetricsReport baseline_report(const Dataset& ds, const std::vector<long>& preds,
                              const std::vector<long>& labels, const std::vector<double>& scores,
                              const std::vector<double>& values,
                              const std::vector<double>& targets) {
    MetricsReport r;
    if (ds.task == TaskKind::Regression) {
        r.metric = "mae";
        r.value = mae(values, targets);
    } else if (ds.task == TaskKind::Binary) {
        r.metric = "roc_auc";
        r.value = roc_auc(scores, labels);
    } else {
        r.metric = "accuracy";
        r.value = accuracy(preds, labels);
    }
    return r;
}

}  // namespace

MetricsReport baseline_retrieval(const FlatIndex& index, ModelParams& model, const Dataset& ds,
                                 Split split) {
    if (index.size() == 0) throw std::invalid_argument("baseline_retrieval: empty index");
    const std::vector<Example>& examples = ds.split(split);
    EncodedSplit enc = encode_split(model, examples);
    std::vector<long> preds, labels;
    std::vector<double> scores, values, targets;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const SearchHit hit = index.search_topk(enc.embeddings[i], 1)[0];
        if (ds.task == TaskKind::Regression) {
            values.push_back(hit.entry->label.value);
            targets.push_back(examples[i].label.value);
        } else {
            preds.push_back(hit.entry->label.cls);
            labels.push_back(examples[i].label.cls);
            const double sim = similarity_from_distance(hit.distance);
            scores.push_back(hit.entry->label.cls == 1 ? sim : 1.0 - sim);
        }
    }
    return baseline_report(ds, preds, labels, scores, values, targets);
}

MetricsReport baseline_majority(const FlatIndex& index, ModelParams& model, const Dataset& ds,
                                Split split, std::size_t n) {
    if (n > index.size()) throw std::invalid_argument("baseline_majority: n larger than index");
    const std::vector<Example>& examples = ds.split(split);
    EncodedSplit enc = encode_split(model, examples);
    std::vector<long> preds, labels;
    std::vector<double> scores, values, targets;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const auto hits = index.search_topk(enc.embeddings[i], n);
        if (ds.task == TaskKind::Regression) {
            double s = 0.0;
            for (const SearchHit& h : hits) s += h.entry->label.value;
            values.push_back(s / static_cast<double>(hits.size()));
            targets.push_back(examples[i].label.value);
            continue;
        }
        std::map<long, std::size_t> votes;
        for (const SearchHit& h : hits) votes[h.entry->label.cls]++;
        std::size_t best_count = 0;
        for (const auto& [cls, cnt] : votes) best_count = std::max(best_count, cnt);
        // hits are distance-ordered: the first label reaching the modal count
        // is the tie winner with the closest supporting entry
        long modal = hits[0].entry->label.cls;
        for (const SearchHit& h : hits)
            if (votes[h.entry->label.cls] == best_count) {
                modal = h.entry->label.cls;
                break;
            }
        preds.push_back(modal);
        labels.push_back(examples[i].label.cls);
        double best_sim = 0.0;
        for (const SearchHit& h : hits)
            if (h.entry->label.cls == modal)
                best_sim = std::max(best_sim, similarity_from_distance(h.distance));
        scores.push_back(modal == 1 ? best_sim : 1.0 - best_sim);
    }
    return baseline_report(ds, preds, labels, scores, values, targets);
}

TwoPhaseResult train_two_phase(const RunConfig& cfg, const Dataset& ds, bool write_outputs) {
    cfg.validate();
    namespace fs = std::filesystem;
    if (write_outputs) fs::create_directories(cfg.out_dir);
    const std::string config_text = cfg.snapshot.empty() ? cfg.to_text() : cfg.snapshot;

    TwoPhaseResult result;
    ModelParams model = train_model(ds, cfg.model, cfg.m1, cfg.batch_size, cfg.base_lr, cfg.seed);
    FlatIndex index = build_index_from_model(model, ds);
    const std::string index_path =
        (fs::path(cfg.out_dir) / "index.grix").string();
    if (write_outputs) index.save(index_path);

    result.model_checkpoint.config_text = config_text;
    result.model_checkpoint.seed = cfg.seed;
    result.model_checkpoint.task = ds.task;
    result.model_checkpoint.num_classes = ds.num_classes;
    result.model_checkpoint.model = clone_model(model);
    result.model_checkpoint.index_path = index_path;
    if (write_outputs)
        result.model_checkpoint.save((fs::path(cfg.out_dir) / "model.ckpt").string());

    result.base_report = evaluate(model, nullptr, nullptr, ds, Split::Test, EvalMode::Base,
                                  cfg.group_boundaries, cfg.bucket_edges);
    if (write_outputs) {
        std::ofstream out((fs::path(cfg.out_dir) / "metrics_base.json").string());
        out << result.base_report.to_json() << "\n";
    }

    const std::uint64_t frozen = model_checksum(model);
    std::vector<double> headline;
    for (std::size_t s = 0; s < cfg.seeds; ++s) {
        AdapterTrainOptions opts;
        opts.epochs = cfg.m2;
        opts.k = cfg.k;
        opts.batch_size = cfg.batch_size;
        opts.base_lr = cfg.base_lr;
        opts.seed = cfg.seed * 1000003ULL + s;
        AdapterParams adapter = train_adapter(model, index, ds, opts, &result.dropout_audit);
        if (model_checksum(model) != frozen)
            throw std::runtime_error("train_two_phase: model mutated during phase 2");

        MetricsReport rep = evaluate(model, &adapter, &index, ds, Split::Test,
                                     EvalMode::Enhanced, cfg.group_boundaries, cfg.bucket_edges);
        headline.push_back(rep.value);
        result.enhanced_reports.push_back(rep);

        Checkpoint ck;
        ck.config_text = config_text;
        ck.seed = opts.seed;
        ck.task = ds.task;
        ck.num_classes = ds.num_classes;
        ck.model = clone_model(model);
        ck.adapter = adapter;
        ck.index_path = index_path;
        if (write_outputs) {
            ck.save((fs::path(cfg.out_dir) / ("adapter_seed" + std::to_string(s) + ".ckpt"))
                        .string());
            std::ofstream out((fs::path(cfg.out_dir) /
                               ("metrics_enhanced_seed" + std::to_string(s) + ".json"))
                                  .string());
            out << rep.to_json() << "\n";
        }
        result.seed_checkpoints.push_back(std::move(ck));
    }

    double mean = 0.0;
    for (double v : headline) mean += v;
    mean /= static_cast<double>(headline.size());
    double var = 0.0;
    for (double v : headline) var += (v - mean) * (v - mean);
    var /= static_cast<double>(headline.size());
    result.aggregate.metric = result.enhanced_reports[0].metric;
    result.aggregate.value = mean;
    result.aggregate.seeds = cfg.seeds;
    result.aggregate.mean = mean;
    result.aggregate.std_dev = std::sqrt(var);
    if (write_outputs) {
        std::ofstream out((fs::path(cfg.out_dir) / "metrics_aggregate.json").string());
        out << result.aggregate.to_json() << "\n";
    }
    return result;
}

}  // namespace rgnn
