#pragma once

// Seeded synthetic populations with a planted class-discriminative community.
//
// Nodes are split into modules (the planted set P is one of them) with
// elevated within-module partial correlation. Case subjects (label 1) get
// +delta_sig on beta1 at every node of P and a partial-correlation boost of
// corr_coupling·delta_sig on pairs inside P. Everything else is
// class-independent noise. Each subject profile is expanded into noisy
// copies that stand in for bootstrap resampling of voxels.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "graphsight/error.hpp"
#include "graphsight/graph.hpp"
#include "graphsight/rng.hpp"

namespace graphsight {

struct synthetic_spec {
    std::size_t n_nodes = 30;
    std::size_t subjects_per_class = 20;
    std::size_t augment_case = 10;
    std::size_t augment_control = 10;
    std::vector<std::size_t> planted = {2, 7, 11, 16, 20, 25};
    std::size_t n_modules = 5;
    double delta_sig = 3.0;
    double noise_scale = 1.0;
    double aug_noise = 0.3;       // node-attribute noise per copy
    double aug_corr_noise = 0.02; // correlation noise per copy
    double corr_base = 0.1;
    double module_corr = 0.25;
    double corr_coupling = 0.005;
    double corr_noise = 0.05;
    double percentile = 95.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (n_nodes < 2) throw invalid_input("synthetic: need at least two nodes");
        if (planted.empty()) throw invalid_input("synthetic: planted set is empty");
        if (planted.size() > n_nodes) throw invalid_input("synthetic: planted set larger than the graph");
        for (std::size_t k = 0; k < planted.size(); ++k) {
            if (planted[k] >= n_nodes) throw invalid_input("synthetic: planted node out of range");
            for (std::size_t q = 0; q < k; ++q)
                if (planted[q] == planted[k]) throw invalid_input("synthetic: duplicate planted node");
        }
        if (subjects_per_class == 0 || augment_case == 0 || augment_control == 0)
            throw invalid_input("synthetic: subject and copy counts must be positive");
        if (n_modules == 0) throw invalid_input("synthetic: n_modules must be positive");
        if (!(delta_sig >= 0.0) || !(noise_scale >= 0.0) || !(aug_noise >= 0.0) || !(aug_corr_noise >= 0.0) ||
            !(corr_noise >= 0.0))
            throw invalid_input("synthetic: signal and noise scales must be non-negative");
        if (!(percentile >= 0.0 && percentile < 100.0)) throw invalid_input("synthetic: percentile outside [0,100)");
    }

    bool operator==(const synthetic_spec&) const = default;
};

/// Pre-sparsification graph of one subject before augmentation.
struct subject_profile {
    std::string subject_id;
    int label = 0;
    brain_graph graph;  // complete graph, degree column zero
};

/// Module membership: module 0 is the planted set, remaining nodes are
/// shuffled and dealt into n_modules-1 groups.
inline std::vector<std::vector<std::size_t>> synthetic_modules(const synthetic_spec& spec) {
    std::vector<std::vector<std::size_t>> mods;
    std::vector<std::size_t> p = spec.planted;
    std::sort(p.begin(), p.end());
    mods.push_back(p);
    std::vector<std::size_t> rest;
    for (std::size_t i = 0; i < spec.n_nodes; ++i)
        if (!std::binary_search(p.begin(), p.end(), i)) rest.push_back(i);
    if (spec.n_modules > 1 && !rest.empty()) {
        rng r(derive_seed(spec.seed, 0xA11CE));
        r.shuffle(rest);
        const std::size_t groups = spec.n_modules - 1;
        std::vector<std::vector<std::size_t>> g(groups);
        for (std::size_t k = 0; k < rest.size(); ++k) g[k % groups].push_back(rest[k]);
        for (auto& m : g) {
            std::sort(m.begin(), m.end());
            if (!m.empty()) mods.push_back(std::move(m));
        }
    }
    return mods;
}

/// Region centers, fixed per node and shared by every subject.
inline std::vector<std::array<double, 3>> synthetic_coordinates(const synthetic_spec& spec) {
    rng r(derive_seed(spec.seed, 0xC00D));
    std::vector<std::array<double, 3>> xyz(spec.n_nodes);
    for (auto& c : xyz)
        for (auto& v : c) v = r.uniform(-70.0, 70.0);
    return xyz;
}

namespace detail {

inline double clamp_corr(double v) { return std::clamp(v, -0.999, 0.999); }

inline std::string subject_name(std::size_t k) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "subj-%03zu", k);
    return buf;
}

}  // namespace detail

inline subject_profile make_subject_profile(const synthetic_spec& spec, std::size_t subject, int label,
                                            const std::vector<std::vector<std::size_t>>& modules,
                                            const std::vector<std::array<double, 3>>& xyz) {
    const std::size_t n = spec.n_nodes;
    rng r(derive_seed(derive_seed(spec.seed, streams::generate), subject));
    std::vector<std::size_t> module_of(n, 0);
    for (std::size_t m = 0; m < modules.size(); ++m)
        for (std::size_t i : modules[m]) module_of[i] = m;
    std::vector<bool> in_p(n, false);
    for (std::size_t i : spec.planted) in_p[i] = true;

    subject_profile prof;
    prof.subject_id = detail::subject_name(subject);
    prof.label = label;
    brain_graph& g = prof.graph;
    g.subject_id = prof.subject_id;
    g.label = label;
    g.nodes = tensor(n, node_attr::count, 0.0);
    const double sd = spec.noise_scale;
    for (std::size_t i = 0; i < n; ++i) {
        g.nodes(i, node_attr::beta1) = r.normal(0.0, sd) + (label == 1 && in_p[i] ? spec.delta_sig : 0.0);
        g.nodes(i, node_attr::beta2) = r.normal(0.0, sd);
        g.nodes(i, node_attr::beta3) = r.normal(0.0, sd);
        g.nodes(i, node_attr::beta4) = r.normal(0.0, sd);
        g.nodes(i, node_attr::tf_mean) = r.normal(10.0, sd);
        g.nodes(i, node_attr::tf_std) = r.normal(3.0, 0.5 * sd);
        g.nodes(i, node_attr::x) = xyz[i][0];
        g.nodes(i, node_attr::y) = xyz[i][1];
        g.nodes(i, node_attr::z) = xyz[i][2];
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double pc = spec.corr_base + r.normal(0.0, spec.corr_noise);
            if (module_of[i] == module_of[j]) pc += spec.module_corr;
            if (label == 1 && in_p[i] && in_p[j]) pc += spec.corr_coupling * spec.delta_sig;
            pc = detail::clamp_corr(pc);
            const double pearson = detail::clamp_corr(0.3 + 0.6 * pc + r.normal(0.0, spec.corr_noise));
            const double dx = xyz[i][0] - xyz[j][0], dy = xyz[i][1] - xyz[j][1], dz = xyz[i][2] - xyz[j][2];
            const double dist = std::sqrt(dx * dx + dy * dy + dz * dz);
            g.edges.push_back(make_edge(i, j, {pearson, pc, std::exp(-dist / 10.0)}));
        }
    return prof;
}

/// Noisy copies of a subject profile: every non-coordinate, non-degree node
/// attribute gets N(0, node_noise²), Pearson and partial correlations get
/// N(0, corr_noise²). Copies keep the subject id.
inline std::vector<brain_graph> bootstrap_augment(const subject_profile& prof, std::size_t copies, double node_noise,
                                                  double corr_noise, std::uint64_t seed) {
    if (copies < 1) throw invalid_input("bootstrap_augment: copies must be at least 1");
    std::vector<brain_graph> out;
    out.reserve(copies);
    for (std::size_t c = 0; c < copies; ++c) {
        rng r(derive_seed(seed, c));
        brain_graph g = prof.graph;
        for (std::size_t i = 0; i < g.n_nodes(); ++i)
            for (std::size_t a = node_attr::beta1; a <= node_attr::tf_std; ++a) g.nodes(i, a) += node_noise * r.normal();
        for (auto& e : g.edges) {
            e.attr[edge_attr::pearson] = detail::clamp_corr(e.attr[edge_attr::pearson] + corr_noise * r.normal());
            e.attr[edge_attr::partial] = detail::clamp_corr(e.attr[edge_attr::partial] + corr_noise * r.normal());
        }
        out.push_back(std::move(g));
    }
    return out;
}

/// Controls first (subjects 0..k-1), then cases. Each copy is sparsified at
/// the configured percentile and gets its degree column filled.
inline graph_dataset generate_population(const synthetic_spec& spec) {
    spec.validate();
    const auto modules = synthetic_modules(spec);
    const auto xyz = synthetic_coordinates(spec);
    graph_dataset ds;
    ds.meta.seed = spec.seed;
    ds.meta.node_dim = node_attr::count;
    ds.meta.edge_dim = edge_attr::count;
    const std::size_t total = 2 * spec.subjects_per_class;
    for (std::size_t s = 0; s < total; ++s) {
        const int label = s < spec.subjects_per_class ? 0 : 1;
        const auto prof = make_subject_profile(spec, s, label, modules, xyz);
        const std::size_t copies = label == 1 ? spec.augment_case : spec.augment_control;
        const std::uint64_t aug_seed = derive_seed(derive_seed(spec.seed, streams::generate), 0x10000 + s);
        for (auto& g : bootstrap_augment(prof, copies, spec.aug_noise, spec.aug_corr_noise, aug_seed)) {
            brain_graph sparse = sparsify_edges(g, spec.percentile);
            set_degree_feature(sparse);
            ds.graphs.push_back(std::move(sparse));
        }
    }
    ds.validate();
    return ds;
}

}  // namespace graphsight
