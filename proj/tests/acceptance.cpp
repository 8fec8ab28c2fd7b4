// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
// Usage: acceptance [criterion numbers...]   (default: all)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "graphsight/community.hpp"
#include "graphsight/config.hpp"
#include "graphsight/diagnostics.hpp"
#include "graphsight/io.hpp"
#include "graphsight/saliency.hpp"
#include "graphsight/synthetic.hpp"
#include "graphsight/trainer.hpp"

#ifndef GRAPHSIGHT_CLI_PATH
#error "GRAPHSIGHT_CLI_PATH must point at the graphsight executable"
#endif

using namespace graphsight;
namespace fs = std::filesystem;

namespace {

struct outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int prec = 4) {
    std::ostringstream os;
    os.precision(prec);
    os << v;
    return os.str();
}

void log(const std::string& s) { std::cerr << "  .. " << s << std::endl; }

// ---- pipeline pieces shared with the CLI's seed layout ----------------------

struct fold_run {
    fold_outcome out;
    fold_split split;
    graph_dataset train_norm;
};

fold_run run_pipeline_fold(const graph_dataset& ds, std::uint64_t seed, std::size_t k, const train_config& base) {
    const auto splits = kfold_split(ds, base.folds, derive_seed(seed, streams::split));
    model_config mc;
    mc.d0 = ds.meta.node_dim;
    mc.edge_dim = ds.meta.edge_dim;
    train_config tc = base;
    tc.seed = derive_seed(derive_seed(seed, streams::shuffle), k);
    fold_run r;
    r.split = splits[k];
    r.out = run_fold(ds, r.split, k, mc, tc, derive_seed(derive_seed(seed, streams::init), k));
    r.train_norm = boxcox_apply(ds.subset(r.split.train), r.out.boxcox);
    return r;
}

// Five folds of the default generator with signal `delta`; cached because
// criteria 4, 5 and 9 all use them.
std::map<double, std::vector<fold_run>> g_cv_cache;

const std::vector<fold_run>& cross_validate(double delta) {
    auto it = g_cv_cache.find(delta);
    if (it != g_cv_cache.end()) return it->second;
    synthetic_spec spec;
    spec.delta_sig = delta;
    spec.seed = 0;
    const graph_dataset ds = generate_population(spec);
    std::vector<fold_run> runs;
    for (std::size_t k = 0; k < train_config{}.folds; ++k) {
        runs.push_back(run_pipeline_fold(ds, spec.seed, k, train_config{}));
        log("delta " + fmt(delta) + " fold " + std::to_string(k) + " test accuracy " +
            fmt(runs.back().out.test.accuracy));
    }
    return g_cv_cache.emplace(delta, std::move(runs)).first->second;
}

tensor uniform_tensor(rng& r, std::size_t rows, std::size_t cols, double lo, double hi) {
    tensor t(rows, cols);
    for (auto& x : t.data()) x = r.uniform(lo, hi);
    return t;
}

double column_cosine(const tensor& x, std::size_t p, const tensor& y, std::size_t q) {
    double xy = 0.0, xx = 0.0, yy = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        xy += x(i, p) * y(i, q);
        xx += x(i, p) * x(i, p);
        yy += y(i, q) * y(i, q);
    }
    return xy / std::sqrt(xx * yy);
}

// ---- criteria ---------------------------------------------------------------

outcome gradient_exactness() {
    const auto t0 = std::chrono::steady_clock::now();
    rng r(derive_seed(1, streams::gradcheck));
    double worst = 0.0;
    std::size_t checked = 0, nonfinite = 0;
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t n = 4 + r.below(9);
        const gnn_model m = init_model(model_config{}, r.next());
        const brain_graph g = random_graph(r, n, 10, 3, trial % 2);
        const fd_report rep = model_gradcheck(m, g);
        worst = std::max(worst, rep.max_rel_error);
        checked += rep.checked;
        nonfinite += rep.count("non-finite");
    }
    const double secs = seconds_since(t0);
    return {worst < 1e-5 && nonfinite == 0 && secs < 60.0,
            "max rel err " + fmt(worst, 3) + " over " + std::to_string(checked) + " coordinates in " + fmt(secs, 3) +
                " s"};
}

outcome permutation_invariance() {
    rng r(202);
    const gnn_model m = init_model(model_config{}, 17);
    const brain_graph g = random_graph(r, 30, 10, 3, 1, 0.3);
    const auto base = predict(m, g);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<std::size_t> perm(30);
        std::iota(perm.begin(), perm.end(), 0);
        r.shuffle(perm);
        brain_graph h = g;
        for (std::size_t i = 0; i < 30; ++i)
            for (std::size_t c = 0; c < 10; ++c) h.nodes(perm[i], c) = g.nodes(i, c);
        h.edges.clear();
        for (const auto& e : g.edges) h.edges.push_back(make_edge(perm[e.i], perm[e.j], e.attr));
        r.shuffle(h.edges);
        const auto p = predict(m, h);
        worst = std::max({worst, std::abs(p[0] - base[0]), std::abs(p[1] - base[1])});
    }
    return {worst < 1e-9, "max probability change " + fmt(worst, 3) + " over 100 permutations"};
}

// Edges of `in` restricted to `kept` and renumbered by position in `kept`,
// as sorted (i, j, attrs...) tuples.
std::vector<std::vector<double>> restricted_edges(const std::vector<std::array<std::size_t, 2>>& edges,
                                                  const tensor& attrs, const std::vector<std::size_t>& kept) {
    std::vector<std::vector<double>> out;
    for (std::size_t m = 0; m < edges.size(); ++m) {
        const auto a = std::find(kept.begin(), kept.end(), edges[m][0]);
        const auto b = std::find(kept.begin(), kept.end(), edges[m][1]);
        if (a == kept.end() || b == kept.end()) continue;
        const auto i = static_cast<double>(a - kept.begin()), j = static_cast<double>(b - kept.begin());
        std::vector<double> row{std::min(i, j), std::max(i, j)};
        for (std::size_t f = 0; f < attrs.cols(); ++f) row.push_back(attrs(m, f));
        out.push_back(row);
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::vector<double>> edge_tuples(const graph_vars& g) {
    std::vector<std::vector<double>> out;
    for (std::size_t m = 0; m < g.edges.size(); ++m) {
        const auto i = static_cast<double>(g.edges[m][0]), j = static_cast<double>(g.edges[m][1]);
        std::vector<double> row{std::min(i, j), std::max(i, j)};
        for (std::size_t f = 0; f < g.edge_attrs.cols(); ++f) row.push_back(g.edge_attrs.value()(m, f));
        out.push_back(row);
    }
    std::sort(out.begin(), out.end());
    return out;
}

outcome pooling_contract() {
    rng r(303);
    std::size_t bad_sizes = 0, bad_edges = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 1 + r.below(40);
        const std::size_t pct = 1 + r.below(100);  // r = pct/100, exact integer ceilings
        model_config c;
        c.pool_ratio = static_cast<double>(pct) / 100.0;
        const gnn_model m = init_model(c, r.next());
        const brain_graph g = random_graph(r, n, 10, 3, 0, 0.4);
        ad::tape t;
        const graph_vars gv = bind_graph(t, g, false, 3);
        const auto tr = model_forward(bind_model(t, m, false), c, gv);
        const std::size_t k1 = (pct * n + 99) / 100, k2 = (pct * k1 + 99) / 100;
        if (tr.pool1.graph.nodes.rows() != k1 || tr.pool2.graph.nodes.rows() != k2) ++bad_sizes;
        if (edge_tuples(tr.pool1.graph) != restricted_edges(gv.edges, gv.edge_attrs.value(), tr.pool1.kept))
            ++bad_edges;
        if (edge_tuples(tr.pool2.graph) !=
            restricted_edges(tr.pool1.graph.edges, tr.pool1.graph.edge_attrs.value(), tr.pool2.kept))
            ++bad_edges;
    }
    return {bad_sizes == 0 && bad_edges == 0,
            std::to_string(bad_sizes) + " size mismatches, " + std::to_string(bad_edges) +
                " edge-set mismatches over 50 (N, r) pairs"};
}

outcome subgraph_admissibility() {
    const fold_run& run = cross_validate(3.0).front();
    const gnn_model& m = run.out.training.model;
    rng r(404);
    double worst = 0.0;
    std::size_t failures = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const brain_graph& g = run.train_norm.graphs[r.below(run.train_norm.graphs.size())];
        std::vector<std::size_t> nodes(g.n_nodes());
        std::iota(nodes.begin(), nodes.end(), 0);
        r.shuffle(nodes);
        nodes.resize(1 + r.below(g.n_nodes()));
        try {
            const auto p = predict(m, slice_subgraph(g, subgraph_index::from_unsorted(nodes)));
            worst = std::max(worst, std::abs(p[0] + p[1] - 1.0));
            if (!(p[0] > 0.0 && p[1] > 0.0)) ++failures;
        } catch (const std::exception& e) {
            ++failures;
            log(std::string("slice failed: ") + e.what());
        }
    }
    return {failures == 0 && worst <= 1e-12,
            std::to_string(failures) + " failures, max |p0+p1-1| " + fmt(worst, 3) + " over 100 slices"};
}

outcome synthetic_classification() {
    const auto t0 = std::chrono::steady_clock::now();
    auto mean_acc = [](const std::vector<fold_run>& runs) {
        double s = 0.0;
        for (const auto& r : runs) s += r.out.test.accuracy;
        return s / static_cast<double>(runs.size());
    };
    const double signal = mean_acc(cross_validate(3.0));
    const double null = mean_acc(cross_validate(0.0));
    const double secs = seconds_since(t0);
    return {signal >= 0.90 && null >= 0.40 && null <= 0.60 && secs < 900.0,
            "mean test accuracy " + fmt(signal) + " (delta 3), " + fmt(null) + " (delta 0), " + fmt(secs, 3) +
                " s for both 5-fold runs"};
}

outcome cp_recovery() {
    const std::size_t n = 30, s = 40;
    std::size_t recovered = 0, monotone = 0;
    double worst_min = 1.0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        rng r(derive_seed(606, seed));
        // Each planted column loads on a random block of 8-12 nodes.
        tensor a(n, 3, 0.0);
        for (std::size_t q = 0; q < 3; ++q) {
            std::vector<std::size_t> idx(n);
            std::iota(idx.begin(), idx.end(), 0);
            r.shuffle(idx);
            const std::size_t size = 8 + r.below(5);
            for (std::size_t k = 0; k < size; ++k) a(idx[k], q) = r.uniform(0.3, 1.0);
        }
        const tensor c = uniform_tensor(r, s, 3, 0.1, 1.0);
        const double lam[3] = {3.0, 2.0, 1.5};
        connectivity_tensor tau(n, s);
        for (std::size_t sl = 0; sl < s; ++sl)
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    for (std::size_t q = 0; q < 3; ++q) tau(i, j, sl) += lam[q] * a(i, q) * a(j, q) * c(sl, q);
        cp_options opt;
        opt.rank = 3;
        opt.seed = derive_seed(seed, streams::decompose);
        const cp_factors f = nncp_decompose(tau, opt);

        std::vector<std::size_t> perm{0, 1, 2};
        double best_min = -1.0;
        do {
            double mn = 1.0;
            for (std::size_t q = 0; q < 3; ++q) mn = std::min(mn, column_cosine(f.a, perm[q], a, q));
            best_min = std::max(best_min, mn);
        } while (std::next_permutation(perm.begin(), perm.end()));
        worst_min = std::min(worst_min, best_min);
        recovered += best_min >= 0.95;
        bool mono = true;
        for (std::size_t k = 1; k < f.error_history.size(); ++k)
            mono = mono && f.error_history[k] <= f.error_history[k - 1];
        monotone += mono;
    }
    return {recovered >= 9 && monotone == 10,
            std::to_string(recovered) + "/10 seeds with all columns >= 0.95 (worst matched min " + fmt(worst_min) +
                "), error monotone in " + std::to_string(monotone) + "/10"};
}

outcome interpretation_oracle() {
    const synthetic_spec base;
    const std::set<std::size_t> planted(base.planted.begin(), base.planted.end());
    std::size_t top1 = 0, enough_nodes = 0;
    std::string per_seed;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        synthetic_spec spec = base;
        spec.seed = seed;
        const graph_dataset ds = generate_population(spec);
        const fold_run run = run_pipeline_fold(ds, seed, 0, train_config{});
        cp_options opt;
        opt.rank = 5;
        opt.seed = derive_seed(derive_seed(seed, streams::decompose), 0);
        const auto communities =
            membership_threshold(nncp_decompose(build_tensor(ds.subset(run.split.train)), opt));
        // The planted community is the one overlapping P best (Jaccard).
        std::optional<std::size_t> planted_j;
        double best_jac = 0.0;
        for (const auto& c : communities) {
            std::size_t inter = 0;
            for (std::size_t i : c.members) inter += planted.count(i);
            const double jac = static_cast<double>(inter) /
                               static_cast<double>(c.members.size() + planted.size() - inter);
            if (jac > best_jac) best_jac = jac, planted_j = c.j;
        }
        const auto eccs = ecc(run.out.training.model, communities, run.train_norm);
        const auto ranked = rank_by_ecc(eccs);
        const bool is_top = planted_j && best_jac >= 0.5 && !ranked.empty() && ranked.front().community == *planted_j;
        top1 += is_top;
        const auto ni = compute_node_importance(eccs, communities, spec.n_nodes);
        std::size_t in_top10 = 0;
        for (std::size_t k = 0; k < 10; ++k) in_top10 += planted.count(ni.order[k]);
        enough_nodes += in_top10 >= 5;
        per_seed += (per_seed.empty() ? "" : " ") + std::to_string(is_top) + "/" + std::to_string(in_top10);
        log("seed " + std::to_string(seed) + ": test acc " + fmt(run.out.test.accuracy) + ", planted Jaccard " +
            fmt(best_jac) + ", top-1 " + (is_top ? "yes" : "no") + ", planted in top 10: " + std::to_string(in_top10));
    }
    return {top1 >= 9 && enough_nodes >= 9,
            "planted community top-1 in " + std::to_string(top1) + "/10 seeds; >=5 planted nodes in top 10 in " +
                std::to_string(enough_nodes) + "/10 (top1/count per seed: " + per_seed + ")"};
}

outcome ecc_arithmetic() {
    const double got = ecc_from_probabilities(std::vector<double>{0.9, 0.8});
    // Corrected probabilities 0.7 and 0.65 give odds 7/3 and 13/7.
    const double want = 0.5 * (std::tanh(std::log2(7.0 / 3.0)) + std::tanh(std::log2(13.0 / 7.0)));
    const double half = ecc_from_probabilities(std::vector<double>(4, 0.5));
    return {std::abs(got - want) < 1e-6 && std::abs(got - 0.776) < 1e-3 && half == 0.0,
            "ECC(0.9, 0.8) = " + fmt(got, 10) + " vs hand value " + fmt(want, 10) + "; ECC at p = 0.5 is " +
                fmt(half)};
}

outcome attribute_importance_sanity() {
    std::size_t beta1_max = 0;
    std::string detail;
    const auto& runs = cross_validate(3.0);
    std::vector<double> mean_rel(node_attr::count, 0.0);
    for (const auto& run : runs) {
        const auto ai = gradient_explanation(run.out.training.model, run.train_norm);
        for (std::size_t k = 0; k < mean_rel.size(); ++k) mean_rel[k] += ai.relative[k] / double(runs.size());
        const std::size_t top = static_cast<std::size_t>(std::max_element(ai.relative.begin(), ai.relative.end()) -
                                                         ai.relative.begin());
        beta1_max += top == node_attr::beta1;
        std::vector<double> sorted = ai.relative;
        std::sort(sorted.rbegin(), sorted.rend());
        detail += (detail.empty() ? "" : ", ") + std::string(node_attr::names[top]) + " (runner-up " +
                  fmt(sorted[1], 3) + ")";
    }

    // Duplicate-column symmetry on the trained fold-0 model made symmetric in
    // attributes beta2 and beta3.
    gnn_model m = runs.front().out.training.model;
    const std::size_t a = node_attr::beta2, b = node_attr::beta3, in = m.conv1.in_dim();
    for (std::size_t o = 0; o < m.conv1.theta.rows(); ++o) {
        m.conv1.theta(o, b) = m.conv1.theta(o, a);
        for (std::size_t f = 0; f < m.conv1.edge_weight.rows(); ++f)
            m.conv1.edge_weight(f, o * in + b) = m.conv1.edge_weight(f, o * in + a);
        m.conv1.edge_bias(0, o * in + b) = m.conv1.edge_bias(0, o * in + a);
    }
    graph_dataset dup = runs.front().train_norm;
    for (auto& g : dup.graphs)
        for (std::size_t i = 0; i < g.n_nodes(); ++i) g.nodes(i, b) = g.nodes(i, a);
    const auto ai = gradient_explanation(m, dup);
    const double gap = std::abs(ai.raw[a] - ai.raw[b]);
    // Informational only; the pass rule is per fold.
    const std::size_t mean_top =
        static_cast<std::size_t>(std::max_element(mean_rel.begin(), mean_rel.end()) - mean_rel.begin());
    return {beta1_max == runs.size() && gap <= 1e-9,
            "beta1 is the top attribute in " + std::to_string(beta1_max) + "/" + std::to_string(runs.size()) +
                " folds [" + detail + "]; fold-averaged top " + std::string(node_attr::names[mean_top]) +
                "; duplicate-column gap " + fmt(gap, 3)};
}

// ---- CLI determinism --------------------------------------------------------

std::string read_file(const fs::path& p) { return io::read_text(p); }

std::map<std::string, std::string> snapshot(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = read_file(e.path());
    return out;
}

int run_cli(const std::string& args, const fs::path& log_file) {
    const std::string cmd = std::string("\"") + GRAPHSIGHT_CLI_PATH + "\" " + args + " > \"" + log_file.string() +
                            "\" 2>&1";
    const int rc = std::system(cmd.c_str());
    return rc;
}

outcome cli_determinism() {
    const fs::path root = fs::temp_directory_path() / "graphsight_acceptance_cli";
    fs::remove_all(root);
    fs::create_directories(root);
    const fs::path cfg = root / "config.json";
    io::write_text(cfg, R"({
  "seed": 5,
  "synthetic": {"subjects_per_class": 4, "augment_case": 2, "augment_control": 2},
  "train": {"epochs": 4, "folds": 2, "batch_size": 8},
  "community": {"rank": 4, "iters": 60, "restarts": 2},
  "interpret": {"retrain_top": 1, "plot": true}
})");
    const std::vector<std::string> subcommands{"generate", "train",   "eval",     "decompose",
                                               "interpret", "explain", "gradcheck"};
    std::vector<std::string> differing, failed;
    std::size_t files = 0;
    for (const auto& sub : subcommands) {
        std::map<std::string, std::string> snaps[2];
        for (int rep = 0; rep < 2; ++rep) {
            const fs::path out = root / ("run" + std::to_string(rep));
            const int rc = run_cli(sub + " --config \"" + cfg.string() + "\" --out \"" + out.string() + "\" --jobs 2",
                                   root / (sub + std::to_string(rep) + ".log"));
            if (rc != 0) failed.push_back(sub);
            snaps[rep] = snapshot(out);
        }
        if (snaps[0] != snaps[1]) differing.push_back(sub);
        files = snaps[0].size();
    }
    std::string detail = std::to_string(subcommands.size()) + " subcommands, " + std::to_string(files) +
                         " artifacts compared byte for byte";
    if (!failed.empty()) {
        detail += "; non-zero exit:";
        for (const auto& s : failed) detail += " " + s;
    }
    if (!differing.empty()) {
        detail += "; differing after:";
        for (const auto& s : differing) detail += " " + s;
    }
    return {failed.empty() && differing.empty() && files > 0, detail};
}

outcome metrics_arithmetic() {
    model_config c;
    gnn_model m = init_model(c, 0);
    m.head.w2 = tensor(c.head_hidden, 2, 0.0);
    m.head.b2 = tensor::row_vector({-30.0, 30.0});
    rng r(1111);
    graph_dataset ds;
    for (int k = 0; k < 4; ++k) ds.graphs.push_back(random_graph(r, 5, 10, 3, k % 2));
    const metrics got = evaluate(m, ds);
    const bool ok = std::abs(got.accuracy - 0.5) <= 1e-12 && std::abs(got.recall - 1.0) <= 1e-12 &&
                    std::abs(got.precision - 0.5) <= 1e-12 && std::abs(got.f_score - 2.0 / 3.0) <= 1e-12;
    return {ok, "accuracy " + fmt(got.accuracy, 12) + ", recall " + fmt(got.recall, 12) + ", precision " +
                    fmt(got.precision, 12) + ", F " + fmt(got.f_score, 12)};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<outcome()>>> criteria{
        {"gradient exactness", gradient_exactness},
        {"permutation invariance", permutation_invariance},
        {"pooling contract", pooling_contract},
        {"sub-graph admissibility", subgraph_admissibility},
        {"synthetic classification", synthetic_classification},
        {"CP recovery", cp_recovery},
        {"interpretation oracle", interpretation_oracle},
        {"ECC arithmetic", ecc_arithmetic},
        {"attribute importance sanity", attribute_importance_sanity},
        {"CLI determinism", cli_determinism},
        {"metrics arithmetic", metrics_arithmetic},
    };
    std::set<std::size_t> only;
    for (int i = 1; i < argc; ++i) only.insert(static_cast<std::size_t>(std::stoul(argv[i])));

    // Criterion 5 fills the cross-validation cache that 4 and 9 read, so run
    // it first and report in numeric order.
    std::vector<std::size_t> order{5, 1, 2, 3, 4, 6, 7, 8, 9, 10, 11};
    std::map<std::size_t, outcome> results;
    for (std::size_t id : order) {
        if (!only.empty() && !only.count(id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            results[id] = criteria[id - 1].second();
        } catch (const std::exception& e) {
            results[id] = {false, std::string("threw: ") + e.what()};
        }
        log("criterion " + std::to_string(id) + " took " + fmt(seconds_since(t0), 3) + " s");
    }
    int failures = 0;
    for (const auto& [id, res] : results) {
        std::cout << (res.pass ? "PASS" : "FAIL") << " [" << id << "] " << criteria[id - 1].first << ": "
                  << res.detail << "\n";
        failures += !res.pass;
    }
    std::cout << results.size() - static_cast<std::size_t>(failures) << "/" << results.size()
              << " criteria passed\n";
    return failures == 0 ? 0 : 1;
}
