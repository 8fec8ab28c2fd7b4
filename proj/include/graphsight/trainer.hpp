#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "graphsight/autodiff.hpp"
#include "graphsight/boxcox.hpp"
#include "graphsight/error.hpp"
#include "graphsight/graph.hpp"
#include "graphsight/model.hpp"
#include "graphsight/rng.hpp"

namespace graphsight {

struct train_config {
    double lr0 = 0.001;
    double decay_factor = 10.0;
    std::size_t decay_every = 50;
    std::size_t epochs = 300;
    std::size_t batch_size = 16;
    std::uint64_t seed = 0;
    std::size_t folds = 5;

    void validate() const {
        if (!(lr0 > 0.0) || !(decay_factor > 0.0) || decay_every == 0 || batch_size == 0 || folds == 0)
            throw invalid_input("training settings must be positive");
    }

    bool operator==(const train_config&) const = default;
};

/// lr0 · factor^(-floor(epoch / decay_every))
inline double lr_schedule(const train_config& c, std::size_t epoch) {
    const auto drops = static_cast<double>(epoch / c.decay_every);
    return c.lr0 / std::pow(c.decay_factor, drops);
}

struct adam_state {
    std::vector<tensor> m, v;
    std::size_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Bias-corrected Adam update. Returns false and leaves everything untouched
/// when a gradient entry is not finite.
inline bool adam_step(adam_state& s, std::span<tensor* const> params, std::span<const tensor> grads, double lr) {
    if (params.size() != grads.size()) throw shape_error("adam_step: parameter and gradient counts differ");
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (!params[k]->same_shape(grads[k]))
            throw shape_error(ad::detail::shapes("adam_step", *params[k], grads[k]));
        for (double g : grads[k].data())
            if (!std::isfinite(g)) return false;
    }
    if (s.m.empty()) {
        for (const tensor* p : params) {
            s.m.emplace_back(p->rows(), p->cols(), 0.0);
            s.v.emplace_back(p->rows(), p->cols(), 0.0);
        }
    }
    ++s.step;
    const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
    const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& p = params[k]->data();
        auto& m = s.m[k].data();
        auto& v = s.v[k].data();
        const auto& g = grads[k].data();
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g[i];
            v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * g[i] * g[i];
            p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + s.eps);
        }
    }
    return true;
}

/// Binary classification metrics with label 1 as the positive class.
struct metrics {
    double accuracy = 0.0;
    double f_score = 0.0;
    double precision = 0.0;
    double recall = 0.0;
};

inline metrics compute_metrics(std::span<const int> truth, std::span<const int> predicted) {
    if (truth.size() != predicted.size()) throw invalid_input("metrics: length mismatch");
    if (truth.empty()) throw invalid_input("metrics: no instances");
    std::size_t tp = 0, fp = 0, fn = 0, correct = 0;
    for (std::size_t k = 0; k < truth.size(); ++k) {
        correct += truth[k] == predicted[k];
        tp += truth[k] == 1 && predicted[k] == 1;
        fp += truth[k] == 0 && predicted[k] == 1;
        fn += truth[k] == 1 && predicted[k] == 0;
    }
    metrics m;
    m.accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());
    m.precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    m.recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    const double d = m.precision + m.recall;
    m.f_score = d > 0.0 ? 2.0 * m.precision * m.recall / d : 0.0;
    return m;
}

/// Predicted class for p(c=1|G): 1 when strictly above one half.
inline int decide(double p1) { return p1 > 0.5 ? 1 : 0; }

inline metrics evaluate(const gnn_model& m, const graph_dataset& test) {
    if (test.graphs.empty()) throw invalid_input("evaluate: empty test set");
    std::vector<int> truth, pred;
    for (const auto& g : test.graphs) {
        truth.push_back(g.label);
        pred.push_back(decide(predict(m, g)[1]));
    }
    return compute_metrics(truth, pred);
}

struct fold_split {
    std::vector<std::size_t> train;  // graph positions
    std::vector<std::size_t> test;
    std::vector<std::string> test_subjects;
};

/// Subject-level k-fold partition. Subjects are shuffled with `seed` and dealt
/// round-robin, so fold sizes (in subjects) differ by at most one.
inline std::vector<fold_split> kfold_split(const graph_dataset& ds, std::size_t folds, std::uint64_t seed) {
    if (folds == 0) throw invalid_input("kfold_split: folds must be positive");
    std::set<std::string> unique;
    for (const auto& g : ds.graphs) unique.insert(g.subject_id);
    std::vector<std::string> subjects(unique.begin(), unique.end());
    if (subjects.size() < folds)
        throw invalid_input("kfold_split: " + std::to_string(subjects.size()) + " subjects for " +
                            std::to_string(folds) + " folds");
    rng r(seed);
    r.shuffle(subjects);
    std::map<std::string, std::size_t> fold_of;
    std::vector<fold_split> out(folds);
    for (std::size_t k = 0; k < subjects.size(); ++k) {
        fold_of[subjects[k]] = k % folds;
        out[k % folds].test_subjects.push_back(subjects[k]);
    }
    for (auto& f : out) std::sort(f.test_subjects.begin(), f.test_subjects.end());
    for (std::size_t i = 0; i < ds.graphs.size(); ++i) {
        const std::size_t f = fold_of[ds.graphs[i].subject_id];
        for (std::size_t k = 0; k < folds; ++k) (k == f ? out[k].test : out[k].train).push_back(i);
    }
    return out;
}

struct epoch_log {
    std::size_t epoch = 0;
    double lr = 0.0;
    double loss = 0.0;
    metrics train;  // from predictions made during the epoch
};

struct train_result {
    gnn_model model;
    std::vector<epoch_log> log;
    bool diverged = false;
    std::size_t skipped_steps = 0;  // Adam steps aborted on non-finite gradients
};

/// Minibatch Adam over the schedule in `cfg`. Graphs must already be
/// normalized. On a non-finite loss the model from the start of the failing
/// epoch is returned with `diverged` set.
inline train_result train(gnn_model model, const graph_dataset& data, const train_config& cfg,
                          const std::function<void(const epoch_log&)>& on_epoch = {}) {
    cfg.validate();
    if (data.graphs.empty()) throw invalid_input("train: empty training set");
    train_result res;
    adam_state adam;
    std::vector<std::size_t> order(data.graphs.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const gnn_model last_good = model;
        const double lr = lr_schedule(cfg, epoch);
        rng r(derive_seed(cfg.seed, epoch));
        r.shuffle(order);

        double loss_sum = 0.0;
        std::vector<int> truth, pred;
        bool bad = false;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            ad::tape t;
            model_vars v = bind_model(t, model, true);
            std::vector<ad::var> ce;
            for (std::size_t b = start; b < end; ++b) {
                const brain_graph& g = data.graphs[order[b]];
                graph_vars gv = bind_graph(t, g, false, model.config.edge_dim);
                ad::var probs = model_forward(v, model.config, gv).probs;
                truth.push_back(g.label);
                pred.push_back(decide(probs.value()[1]));
                ce.push_back(cross_entropy(probs, g.label));
            }
            ad::var l = ad::add(ad::mean(ad::concat(ce)), pooling_regularizer(v, model.config.lambda_reg));
            const double lv = l.value().item();
            if (!std::isfinite(lv)) {
                bad = true;
                break;
            }
            loss_sum += lv * static_cast<double>(end - start);
            t.backward(l);
            auto params = model.parameters();
            std::vector<tensor*> ptrs;
            std::vector<tensor> grads;
            for (std::size_t k = 0; k < params.size(); ++k) {
                ptrs.push_back(params[k].second);
                grads.push_back(v.all[k].grad());
            }
            if (!adam_step(adam, ptrs, grads, lr)) ++res.skipped_steps;
        }
        if (bad) {
            res.diverged = true;
            model = last_good;
            break;
        }
        epoch_log e;
        e.epoch = epoch;
        e.lr = lr;
        e.loss = loss_sum / static_cast<double>(order.size());
        e.train = compute_metrics(truth, pred);
        res.log.push_back(e);
        if (on_epoch) on_epoch(e);
    }
    res.model = std::move(model);
    return res;
}

/// Everything produced by training and testing one cross-validation fold.
struct fold_outcome {
    std::size_t fold = 0;
    boxcox_params boxcox;
    train_result training;
    metrics test;
};

/// Fits Box-Cox on the training graphs only, trains a fresh model and scores
/// the held-out graphs.
inline fold_outcome run_fold(const graph_dataset& raw, const fold_split& split, std::size_t fold,
                             const model_config& mc, const train_config& tc, std::uint64_t init_seed) {
    fold_outcome out;
    out.fold = fold;
    graph_dataset train_raw = raw.subset(split.train);
    out.boxcox = boxcox_fit(train_raw);
    graph_dataset train_set = boxcox_apply(train_raw, out.boxcox);
    graph_dataset test_set = boxcox_apply(raw.subset(split.test), out.boxcox);
    out.training = train(init_model(mc, init_seed), train_set, tc);
    out.test = evaluate(out.training.model, test_set);
    return out;
}

}  // namespace graphsight
