// graphsight: generate, train, evaluate and interpret brain-graph classifiers.
//
// Every subcommand is a pure function of (config, seed, input files). Fold
// artifacts live under <out>/fold<k>/.

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "graphsight/community.hpp"
#include "graphsight/config.hpp"
#include "graphsight/diagnostics.hpp"
#include "graphsight/io.hpp"
#include "graphsight/saliency.hpp"
#include "graphsight/synthetic.hpp"
#include "graphsight/trainer.hpp"

namespace fs = std::filesystem;
namespace gs = graphsight;
using json = nlohmann::ordered_json;

namespace {

struct options {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<std::size_t> rank;
    std::size_t jobs = 1;
    std::optional<std::size_t> fold;
};

struct context {
    gs::run_config cfg;
    fs::path out;
    fs::path dataset;
    std::optional<std::size_t> fold;
    std::size_t jobs = 1;
    std::optional<std::size_t> rank;
};

context make_context(const options& o) {
    context c;
    if (!o.config_path.empty()) c.cfg = gs::parse_run_config(gs::io::read_json(o.config_path));
    if (o.seed) gs::set_root_seed(c.cfg, *o.seed);
    c.out = o.out.empty() ? fs::path(c.cfg.paths.out) : fs::path(o.out);
    const fs::path ds(c.cfg.paths.dataset);
    c.dataset = ds.is_absolute() ? ds : c.out / ds;
    c.fold = o.fold;
    c.jobs = o.jobs == 0 ? 1 : o.jobs;
    c.rank = o.rank;
    if (c.rank && *c.rank == 0) throw gs::config_error({"--rank: must be positive"});
    return c;
}

fs::path fold_dir(const context& c, std::size_t k) { return c.out / ("fold" + std::to_string(k)); }

gs::model_config model_for(const context& c, const gs::graph_dataset& ds) {
    gs::model_config m = c.cfg.model;
    m.d0 = ds.meta.node_dim;
    m.edge_dim = ds.meta.edge_dim;
    m.validate();
    return m;
}

std::vector<gs::fold_split> splits_for(const context& c, const gs::graph_dataset& ds) {
    return gs::kfold_split(ds, c.cfg.train.folds, gs::derive_seed(c.cfg.seed, gs::streams::split));
}

std::uint64_t init_seed(const context& c, std::size_t fold) {
    return gs::derive_seed(gs::derive_seed(c.cfg.seed, gs::streams::init), fold);
}

std::vector<std::size_t> selected_folds(const context& c) {
    if (c.fold) {
        if (*c.fold >= c.cfg.train.folds)
            throw gs::config_error({"--fold: " + std::to_string(*c.fold) + " is outside [0," +
                                    std::to_string(c.cfg.train.folds) + ")"});
        return {*c.fold};
    }
    std::vector<std::size_t> all(c.cfg.train.folds);
    for (std::size_t k = 0; k < all.size(); ++k) all[k] = k;
    return all;
}

std::size_t single_fold(const context& c) { return selected_folds(c).front(); }

/// Runs f(k) for every k in `items` on up to `jobs` threads. The first
/// exception (in item order) is rethrown.
template <class F>
void parallel_for(const std::vector<std::size_t>& items, std::size_t jobs, F f) {
    std::vector<std::exception_ptr> errors(items.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < items.size(); i = next++) {
            try {
                f(items[i]);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < std::min(jobs, items.size()); ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

gs::graph_dataset normalized_train(const gs::graph_dataset& ds, const gs::fold_split& split,
                                   const gs::boxcox_params& bc) {
    return gs::boxcox_apply(ds.subset(split.train), bc);
}

// ---------------------------------------------------------------- subcommands

int cmd_generate(const context& c) {
    const gs::graph_dataset ds = gs::generate_population(c.cfg.synthetic);
    gs::io::save_dataset(c.dataset, ds);
    std::vector<std::size_t> planted = c.cfg.synthetic.planted;
    std::sort(planted.begin(), planted.end());
    json truth;
    truth["planted_nodes"] = planted;
    truth["delta_sig"] = c.cfg.synthetic.delta_sig;
    truth["modules"] = gs::synthetic_modules(c.cfg.synthetic);
    gs::io::write_json(c.out / "ground_truth.json", truth);
    gs::io::write_json(c.out / "config.json", gs::run_config_to_json(c.cfg));
    std::cout << "generated " << ds.graphs.size() << " graphs -> " << c.dataset.string() << "\n";
    return 0;
}

int cmd_train(const context& c) {
    const gs::graph_dataset ds = gs::io::load_dataset(c.dataset);
    const gs::model_config mc = model_for(c, ds);
    const auto splits = splits_for(c, ds);
    std::mutex out_mu;
    parallel_for(selected_folds(c), c.jobs, [&](std::size_t k) {
        const gs::fold_split& split = splits[k];
        const gs::graph_dataset train_raw = ds.subset(split.train);
        const gs::boxcox_params bc = gs::boxcox_fit(train_raw);
        gs::train_config tc = c.cfg.train;
        tc.seed = gs::derive_seed(c.cfg.train.seed, k);
        const auto res = gs::train(gs::init_model(mc, init_seed(c, k)), gs::boxcox_apply(train_raw, bc), tc);
        const fs::path dir = fold_dir(c, k);
        gs::io::save_model(dir / "model.json", res.model);
        gs::io::write_json(dir / "boxcox.json", gs::io::boxcox_to_json(bc));
        gs::io::write_text(dir / "train_log.csv", gs::io::train_log_csv(res.log));
        json sj;
        sj["fold"] = k;
        sj["test_subjects"] = split.test_subjects;
        sj["train"] = split.train;
        sj["test"] = split.test;
        sj["diverged"] = res.diverged;
        sj["skipped_steps"] = res.skipped_steps;
        gs::io::write_json(dir / "split.json", sj);
        std::lock_guard lock(out_mu);
        std::cout << "fold " << k << ": trained " << res.log.size() << " epochs, final loss "
                  << (res.log.empty() ? 0.0 : res.log.back().loss) << (res.diverged ? " (diverged)" : "") << "\n";
    });
    std::cout << "parameters: " << gs::param_count(mc) << "\n";
    return 0;
}

int cmd_eval(const context& c) {
    const gs::graph_dataset ds = gs::io::load_dataset(c.dataset);
    const auto splits = splits_for(c, ds);
    const auto folds = selected_folds(c);
    std::vector<gs::metrics> results(c.cfg.train.folds);
    parallel_for(folds, c.jobs, [&](std::size_t k) {
        const fs::path dir = fold_dir(c, k);
        const gs::gnn_model m = gs::io::load_model(dir / "model.json");
        const gs::boxcox_params bc = gs::io::boxcox_from_json(gs::io::read_json(dir / "boxcox.json"));
        results[k] = gs::evaluate(m, gs::boxcox_apply(ds.subset(splits[k].test), bc));
        gs::io::write_json(dir / "metrics.json", gs::io::metrics_to_json(results[k]));
    });
    json summary;
    json per_fold = json::array();
    gs::metrics mean;
    for (std::size_t k : folds) {
        json f = gs::io::metrics_to_json(results[k]);
        per_fold.push_back({{"fold", k}, {"metrics", f}});
        mean.accuracy += results[k].accuracy;
        mean.f_score += results[k].f_score;
        mean.precision += results[k].precision;
        mean.recall += results[k].recall;
    }
    const double n = static_cast<double>(folds.size());
    mean.accuracy /= n, mean.f_score /= n, mean.precision /= n, mean.recall /= n;
    summary["folds"] = per_fold;
    summary["mean"] = gs::io::metrics_to_json(mean);
    gs::io::write_json(c.out / "metrics.json", summary);
    std::cout << "mean accuracy " << mean.accuracy << ", f_score " << mean.f_score << "\n";
    return 0;
}

struct decomposition {
    gs::cp_factors factors;
    std::vector<gs::community> communities;
};

decomposition decompose_fold(const context& c, const gs::graph_dataset& ds, const gs::fold_split& split,
                             std::size_t k) {
    const gs::graph_dataset source = c.cfg.community.all_graphs ? ds : ds.subset(split.train);
    gs::cp_options opt;
    opt.rank = c.rank.value_or(c.cfg.community.rank);
    opt.iters = c.cfg.community.iters;
    opt.tol = c.cfg.community.tol;
    opt.restarts = c.cfg.community.restarts;
    opt.seed = gs::derive_seed(gs::derive_seed(c.cfg.seed, gs::streams::decompose), k);
    opt.jobs = c.jobs;
    decomposition d;
    d.factors = gs::nncp_decompose(gs::build_tensor(source), opt);
    d.communities = gs::membership_threshold(d.factors);
    const fs::path dir = fold_dir(c, k);
    gs::io::write_json(dir / "factors.json", gs::io::factors_to_json(d.factors));
    gs::io::write_json(dir / "communities.json", gs::io::communities_to_json(d.communities));
    return d;
}

int cmd_decompose(const context& c) {
    const gs::graph_dataset ds = gs::io::load_dataset(c.dataset);
    const auto splits = splits_for(c, ds);
    const std::size_t k = single_fold(c);
    const auto d = decompose_fold(c, ds, splits[k], k);
    std::size_t nonempty = 0;
    for (const auto& cm : d.communities) nonempty += !cm.members.empty();
    std::cout << "fold " << k << ": rank " << d.factors.rank << ", fit " << d.factors.fit << ", " << nonempty
              << " nonempty communities\n";
    return 0;
}

int cmd_interpret(const context& c) {
    const gs::graph_dataset ds = gs::io::load_dataset(c.dataset);
    const auto splits = splits_for(c, ds);
    const std::size_t k = single_fold(c);
    const fs::path dir = fold_dir(c, k);
    const gs::gnn_model m = gs::io::load_model(dir / "model.json");
    const gs::boxcox_params bc = gs::io::boxcox_from_json(gs::io::read_json(dir / "boxcox.json"));

    // Reuse a stored decomposition when its rank matches, otherwise refit.
    std::vector<gs::community> communities;
    const std::size_t want = c.rank.value_or(c.cfg.community.rank);
    bool reuse = fs::exists(dir / "factors.json") && fs::exists(dir / "communities.json");
    if (reuse) reuse = gs::io::factors_from_json(gs::io::read_json(dir / "factors.json")).rank == want;
    if (reuse)
        communities = gs::io::communities_from_json(gs::io::read_json(dir / "communities.json"));
    else
        communities = decompose_fold(c, ds, splits[k], k).communities;

    const gs::graph_dataset train = normalized_train(ds, splits[k], bc);
    const auto eccs = gs::ecc(m, communities, train);
    const auto ranked = gs::rank_by_ecc(eccs);
    const std::size_t n = ds.graphs.front().n_nodes();
    const auto ni = gs::compute_node_importance(eccs, communities, n);

    json report;
    report["fold"] = k;
    report["rank"] = want;
    report["training_graphs"] = train.graphs.size();
    json cj = json::array();
    for (const auto& e : ranked) {
        const auto& cm = *std::find_if(communities.begin(), communities.end(),
                                       [&](const gs::community& x) { return x.j == e.community; });
        cj.push_back({{"j", cm.j}, {"members", cm.members}, {"threshold", cm.threshold}, {"ecc", e.score}});
    }
    report["communities"] = cj;
    json skipped = json::array();
    for (const auto& cm : communities)
        if (cm.degenerate || cm.members.empty()) skipped.push_back(cm.j);
    report["skipped_communities"] = skipped;
    json nj = json::array();
    for (std::size_t node : ni.order)
        nj.push_back({{"roi_index", node}, {"score", ni.score[node]}, {"rank", ni.rank[node]}});
    report["node_importance"] = nj;

    if (c.cfg.interpret.retrain_top > 0) {
        const auto nodes = gs::top_community_nodes(eccs, communities, c.cfg.interpret.retrain_top);
        const gs::metrics full = gs::evaluate(m, gs::boxcox_apply(ds.subset(splits[k].test), bc));
        gs::train_config tc = c.cfg.train;
        tc.seed = gs::derive_seed(c.cfg.train.seed, k);
        const auto check = gs::subgraph_retrain_check(nodes, ds, splits[k], m.config, tc,
                                                      gs::derive_seed(c.cfg.seed, gs::streams::retrain), full);
        report["retrain"] = {{"nodes", check.nodes},
                             {"sliced", gs::io::metrics_to_json(check.sliced)},
                             {"full", gs::io::metrics_to_json(check.full)}};
    }
    gs::io::write_json(dir / "interpret.json", report);
    gs::io::write_text(dir / "node_importance.csv", gs::io::node_importance_csv(ni));
    if (!ranked.empty())
        std::cout << "fold " << k << ": top community " << ranked.front().community << " (ECC "
                  << ranked.front().score << ")\n";
    else
        std::cout << "fold " << k << ": no scorable communities\n";
    return 0;
}

int cmd_explain(const context& c) {
    const gs::graph_dataset ds = gs::io::load_dataset(c.dataset);
    const auto splits = splits_for(c, ds);
    const std::size_t k = single_fold(c);
    const fs::path dir = fold_dir(c, k);
    const gs::gnn_model m = gs::io::load_model(dir / "model.json");
    const gs::boxcox_params bc = gs::io::boxcox_from_json(gs::io::read_json(dir / "boxcox.json"));
    const auto imp = gs::gradient_explanation(m, normalized_train(ds, splits[k], bc));

    std::vector<std::string> names;
    for (std::size_t a = 0; a < imp.raw.size(); ++a)
        names.emplace_back(a < gs::node_attr::count ? std::string(gs::node_attr::names[a])
                                                    : "attr" + std::to_string(a));
    json report;
    report["fold"] = k;
    report["normalized"] = imp.normalized;
    report["excluded_graphs"] = imp.excluded;
    json attrs = json::array();
    for (std::size_t a = 0; a < imp.raw.size(); ++a)
        attrs.push_back({{"name", names[a]}, {"raw", imp.raw[a]}, {"relative", imp.relative[a]}});
    report["attributes"] = attrs;
    gs::io::write_json(dir / "explain.json", report);
    if (c.cfg.interpret.plot)
        gs::io::write_text(dir / "attribute_importance.svg",
                           gs::io::bar_chart_svg(names, imp.relative, "Relative gradient importance"));
    const auto best = std::max_element(imp.relative.begin(), imp.relative.end()) - imp.relative.begin();
    std::cout << "fold " << k << ": most important attribute " << names[static_cast<std::size_t>(best)] << "\n";
    return 0;
}

int cmd_gradcheck(const context& c) {
    gs::rng r(gs::derive_seed(c.cfg.seed, gs::streams::gradcheck));
    gs::model_config mc = c.cfg.model;
    mc.validate();
    json graphs = json::array();
    double worst = 0.0;
    std::size_t kinks = 0, nonfinite = 0;
    for (std::size_t g = 0; g < 10; ++g) {
        const std::size_t n = 4 + r.below(9);
        const gs::brain_graph graph = gs::random_graph(r, n, mc.d0, mc.edge_dim, static_cast<int>(g % 2));
        const gs::gnn_model m = gs::init_model(mc, r.next());
        const auto rep = gs::model_gradcheck(m, graph);
        worst = std::max(worst, rep.max_rel_error);
        kinks += rep.count("nondifferentiable");
        nonfinite += rep.count("non-finite");
        graphs.push_back({{"nodes", n},
                          {"edges", graph.edges.size()},
                          {"checked", rep.checked},
                          {"max_rel_error", rep.max_rel_error},
                          {"mean_rel_error", rep.mean_rel_error},
                          {"nondifferentiable", rep.count("nondifferentiable")},
                          {"non_finite", rep.count("non-finite")}});
    }
    const bool pass = worst < 1e-5 && nonfinite == 0;
    json report;
    report["tolerance"] = 1e-5;
    report["max_rel_error"] = worst;
    report["nondifferentiable"] = kinks;
    report["non_finite"] = nonfinite;
    report["passed"] = pass;
    report["graphs"] = graphs;
    gs::io::write_json(c.out / "gradcheck.json", report);
    std::cout << "gradcheck max relative error " << worst << (pass ? " (pass)" : " (FAIL)") << "\n";
    return pass ? 0 : 1;
}

int report_error(const std::string& type, const std::string& message, const std::vector<std::string>& problems,
                 int code) {
    json j;
    j["error"] = {{"type", type}, {"message", message}, {"problems", problems}, {"exit_code", code}};
    std::cerr << j.dump() << "\n";
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"graphsight: interpretable graph classification of brain connectivity"};
    app.require_subcommand(1);
    options o;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config_path, "JSON run configuration");
        sub->add_option("--seed", o.seed, "root seed (overrides the config)");
        sub->add_option("--out", o.out, "output directory (overrides paths.out)");
        sub->add_option("--rank", o.rank, "CP decomposition rank");
        sub->add_option("--jobs", o.jobs, "worker threads");
        sub->add_option("--fold", o.fold, "restrict to one fold");
    };
    const std::vector<std::pair<std::string, int (*)(const context&)>> commands = {
        {"generate", cmd_generate},   {"train", cmd_train},     {"eval", cmd_eval},
        {"decompose", cmd_decompose}, {"interpret", cmd_interpret}, {"explain", cmd_explain},
        {"gradcheck", cmd_gradcheck},
    };
    const std::vector<std::string> help = {
        "write a synthetic dataset and its ground truth",
        "train one model per cross-validation fold",
        "score trained models on their held-out folds",
        "non-negative CP decomposition and communities",
        "community evidence and node importance",
        "gradient importance of node attributes",
        "finite-difference check of the model gradients",
    };
    std::vector<CLI::App*> subs;
    for (std::size_t k = 0; k < commands.size(); ++k) {
        subs.push_back(app.add_subcommand(commands[k].first, help[k]));
        add_common(subs.back());
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        return report_error("usage_error", e.what(), {}, 2);
    }

    try {
        const context c = make_context(o);
        for (std::size_t k = 0; k < commands.size(); ++k)
            if (subs[k]->parsed()) return commands[k].second(c);
        return report_error("usage_error", "no subcommand", {}, 2);
    } catch (const gs::config_error& e) {
        return report_error("config_error", e.what(), e.problems(), 2);
    } catch (const gs::io_error& e) {
        return report_error("io_error", e.what(), {}, 3);
    } catch (const gs::error& e) {
        return report_error("invalid_input", e.what(), {}, 1);
    } catch (const std::exception& e) {
        return report_error("internal_error", e.what(), {}, 1);
    }
}
