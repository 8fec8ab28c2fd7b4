#pragma once

// One JSON run configuration covering every pipeline stage. Missing keys take
// their defaults; unknown keys and badly typed values are all collected and
// reported together through config_error.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "graphsight/community.hpp"
#include "graphsight/error.hpp"
#include "graphsight/model.hpp"
#include "graphsight/synthetic.hpp"
#include "graphsight/trainer.hpp"

namespace graphsight {

struct community_config {
    std::size_t rank = 20;
    std::size_t iters = 500;
    double tol = 1e-8;
    std::size_t restarts = 10;
    bool all_graphs = false;  // decompose every graph instead of the training split

    bool operator==(const community_config&) const = default;
};

struct interpret_config {
    std::size_t retrain_top = 0;  // 0 disables the sub-graph retraining check
    bool plot = true;             // write the attribute-importance bar chart

    bool operator==(const interpret_config&) const = default;
};

struct path_config {
    std::string dataset = "dataset.json";  // relative paths resolve against --out
    std::string out = "run";

    bool operator==(const path_config&) const = default;
};

struct run_config {
    std::uint64_t seed = 0;
    synthetic_spec synthetic;
    model_config model;
    train_config train;
    community_config community;
    interpret_config interpret;
    path_config paths;

    bool operator==(const run_config&) const = default;
};

namespace detail {

using ojson = nlohmann::ordered_json;

/// Reads declared fields of one JSON object, recording every problem.
class section_reader {
public:
    section_reader(const ojson& obj, std::string name, std::vector<std::string>& problems)
        : obj_(obj), name_(std::move(name)), problems_(problems) {}

    template <class T>
    section_reader& field(const char* key, T& dst) {
        known_.push_back(key);
        if (!obj_.contains(key)) return *this;
        const ojson& v = obj_.at(key);
        if (!type_ok<T>(v)) {
            problems_.push_back(name_ + "." + key + ": expected " + type_name<T>());
            return *this;
        }
        try {
            dst = v.get<T>();
        } catch (const ojson::exception&) {
            problems_.push_back(name_ + "." + key + ": expected " + type_name<T>());
        }
        return *this;
    }

    void finish() {
        for (auto it = obj_.begin(); it != obj_.end(); ++it) {
            bool found = false;
            for (const auto& k : known_) found = found || k == it.key();
            if (!found) problems_.push_back(name_ + "." + it.key() + ": unknown key");
        }
    }

private:
    template <class T>
    static bool type_ok(const ojson& v) {
        if constexpr (std::is_same_v<T, ojson>) return true;
        else if constexpr (std::is_same_v<T, bool>) return v.is_boolean();
        else if constexpr (std::is_same_v<T, std::string>) return v.is_string();
        else if constexpr (std::is_floating_point_v<T>) return v.is_number();
        else if constexpr (std::is_integral_v<T>) return v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0);
        else if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
            if (!v.is_array()) return false;
            for (const auto& x : v)
                if (!type_ok<std::size_t>(x)) return false;
            return true;
        } else return false;
    }

    template <class T>
    static std::string type_name() {
        if constexpr (std::is_same_v<T, bool>) return "a boolean";
        else if constexpr (std::is_same_v<T, std::string>) return "a string";
        else if constexpr (std::is_floating_point_v<T>) return "a number";
        else if constexpr (std::is_integral_v<T>) return "a non-negative integer";
        else return "an array of non-negative integers";
    }

    const ojson& obj_;
    std::string name_;
    std::vector<std::string>& problems_;
    std::vector<std::string> known_;
};

inline const ojson& section(const ojson& root, const char* key, std::vector<std::string>& problems) {
    static const ojson empty = ojson::object();
    if (!root.contains(key)) return empty;
    if (!root.at(key).is_object()) {
        problems.push_back(std::string(key) + ": expected an object");
        return empty;
    }
    return root.at(key);
}

}  // namespace detail

/// Parses a configuration document. Throws config_error listing every
/// unknown key, mistyped value and out-of-range setting.
inline run_config parse_run_config(const nlohmann::ordered_json& j) {
    std::vector<std::string> problems;
    run_config c;
    if (!j.is_object()) throw config_error({"config: top level must be an object"});

    {
        detail::section_reader top(j, "config", problems);
        top.field("seed", c.seed);
        for (const char* s : {"synthetic", "model", "train", "community", "interpret", "paths"}) {
            nlohmann::ordered_json ignored;
            top.field(s, ignored);
        }
        top.finish();
    }

    auto& sy = c.synthetic;
    detail::section_reader(detail::section(j, "synthetic", problems), "synthetic", problems)
        .field("n_nodes", sy.n_nodes)
        .field("subjects_per_class", sy.subjects_per_class)
        .field("augment_case", sy.augment_case)
        .field("augment_control", sy.augment_control)
        .field("planted", sy.planted)
        .field("n_modules", sy.n_modules)
        .field("delta_sig", sy.delta_sig)
        .field("noise_scale", sy.noise_scale)
        .field("aug_noise", sy.aug_noise)
        .field("aug_corr_noise", sy.aug_corr_noise)
        .field("corr_base", sy.corr_base)
        .field("module_corr", sy.module_corr)
        .field("corr_coupling", sy.corr_coupling)
        .field("corr_noise", sy.corr_noise)
        .field("percentile", sy.percentile)
        .finish();

    auto& mo = c.model;
    detail::section_reader(detail::section(j, "model", problems), "model", problems)
        .field("d1", mo.d1)
        .field("d2", mo.d2)
        .field("pool_ratio", mo.pool_ratio)
        .field("edge_hidden", mo.edge_hidden)
        .field("head_hidden", mo.head_hidden)
        .field("lambda_reg", mo.lambda_reg)
        .finish();

    auto& tr = c.train;
    detail::section_reader(detail::section(j, "train", problems), "train", problems)
        .field("lr0", tr.lr0)
        .field("decay_factor", tr.decay_factor)
        .field("decay_every", tr.decay_every)
        .field("epochs", tr.epochs)
        .field("batch_size", tr.batch_size)
        .field("folds", tr.folds)
        .finish();

    auto& co = c.community;
    detail::section_reader(detail::section(j, "community", problems), "community", problems)
        .field("rank", co.rank)
        .field("iters", co.iters)
        .field("tol", co.tol)
        .field("restarts", co.restarts)
        .field("all_graphs", co.all_graphs)
        .finish();

    auto& in = c.interpret;
    detail::section_reader(detail::section(j, "interpret", problems), "interpret", problems)
        .field("retrain_top", in.retrain_top)
        .field("plot", in.plot)
        .finish();

    auto& pa = c.paths;
    detail::section_reader(detail::section(j, "paths", problems), "paths", problems)
        .field("dataset", pa.dataset)
        .field("out", pa.out)
        .finish();

    // Range checks reuse each module's own validation.
    auto check = [&](const char* name, const std::function<void()>& f) {
        try {
            f();
        } catch (const error& e) {
            problems.push_back(std::string(name) + ": " + e.what());
        }
    };
    check("synthetic", [&] { sy.validate(); });
    check("model", [&] { mo.validate(); });
    check("train", [&] { tr.validate(); });
    if (co.rank == 0) problems.push_back("community.rank: must be positive");
    if (co.restarts == 0) problems.push_back("community.restarts: must be positive");
    if (!(co.tol >= 0.0)) problems.push_back("community.tol: must be non-negative");
    if (pa.dataset.empty()) problems.push_back("paths.dataset: must not be empty");

    if (!problems.empty()) throw config_error(problems);
    c.synthetic.seed = c.seed;
    c.train.seed = derive_seed(c.seed, streams::shuffle);
    return c;
}

inline nlohmann::ordered_json run_config_to_json(const run_config& c) {
    const auto& sy = c.synthetic;
    const auto& mo = c.model;
    const auto& tr = c.train;
    nlohmann::ordered_json j;
    j["seed"] = c.seed;
    j["synthetic"] = {{"n_nodes", sy.n_nodes},
                      {"subjects_per_class", sy.subjects_per_class},
                      {"augment_case", sy.augment_case},
                      {"augment_control", sy.augment_control},
                      {"planted", sy.planted},
                      {"n_modules", sy.n_modules},
                      {"delta_sig", sy.delta_sig},
                      {"noise_scale", sy.noise_scale},
                      {"aug_noise", sy.aug_noise},
                      {"aug_corr_noise", sy.aug_corr_noise},
                      {"corr_base", sy.corr_base},
                      {"module_corr", sy.module_corr},
                      {"corr_coupling", sy.corr_coupling},
                      {"corr_noise", sy.corr_noise},
                      {"percentile", sy.percentile}};
    j["model"] = {{"d1", mo.d1},
                  {"d2", mo.d2},
                  {"pool_ratio", mo.pool_ratio},
                  {"edge_hidden", mo.edge_hidden},
                  {"head_hidden", mo.head_hidden},
                  {"lambda_reg", mo.lambda_reg}};
    j["train"] = {{"lr0", tr.lr0},
                  {"decay_factor", tr.decay_factor},
                  {"decay_every", tr.decay_every},
                  {"epochs", tr.epochs},
                  {"batch_size", tr.batch_size},
                  {"folds", tr.folds}};
    j["community"] = {{"rank", c.community.rank},
                      {"iters", c.community.iters},
                      {"tol", c.community.tol},
                      {"restarts", c.community.restarts},
                      {"all_graphs", c.community.all_graphs}};
    j["interpret"] = {{"retrain_top", c.interpret.retrain_top}, {"plot", c.interpret.plot}};
    j["paths"] = {{"dataset", c.paths.dataset}, {"out", c.paths.out}};
    return j;
}

/// Re-derives the seed-dependent fields after the root seed changes.
inline void set_root_seed(run_config& c, std::uint64_t seed) {
    c.seed = seed;
    c.synthetic.seed = seed;
    c.train.seed = derive_seed(seed, streams::shuffle);
}

}  // namespace graphsight
