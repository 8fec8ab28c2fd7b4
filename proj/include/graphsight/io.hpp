#pragma once

// JSON and CSV persistence for datasets, models, Box-Cox parameters, CP
// factors, communities and reports. Field order is fixed (ordered_json) and
// doubles are written in shortest round-trip form, so identical inputs give
// identical bytes.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "graphsight/community.hpp"
#include "graphsight/error.hpp"
#include "graphsight/graph.hpp"
#include "graphsight/model.hpp"
#include "graphsight/saliency.hpp"
#include "graphsight/trainer.hpp"

namespace graphsight::io {

using json = nlohmann::ordered_json;

inline constexpr int model_format_version = 1;

inline std::string read_text(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw io_error("cannot open '" + p.string() + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw io_error("failed reading '" + p.string() + "'");
    return ss.str();
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
    std::error_code ec;
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path(), ec);
    if (ec) throw io_error("cannot create directory '" + p.parent_path().string() + "': " + ec.message());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot open '" + p.string() + "' for writing");
    out << text;
    out.flush();
    if (!out) throw io_error("failed writing '" + p.string() + "'");
}

inline json parse(const std::string& text, const std::string& what) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw io_error(what + ": malformed JSON: " + e.what());
    }
}

inline json read_json(const std::filesystem::path& p) { return parse(read_text(p), p.string()); }

inline void write_json(const std::filesystem::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

// Shape errors while decoding are reported as invalid_input with the path.
template <class T>
T get(const json& j, const char* key, const std::string& where) {
    if (!j.is_object() || !j.contains(key)) throw invalid_input(where + ": missing key '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw invalid_input(where + ": bad value for '" + key + "': " + e.what());
    }
}

inline json to_json(const tensor& t) {
    json rows = json::array();
    for (std::size_t r = 0; r < t.rows(); ++r) {
        json row = json::array();
        for (std::size_t c = 0; c < t.cols(); ++c) row.push_back(t(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline tensor matrix_from_json(const json& j, const std::string& where) {
    if (!j.is_array()) throw invalid_input(where + ": expected a matrix");
    const std::size_t rows = j.size();
    const std::size_t cols = rows ? j[0].size() : 0;
    tensor t(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        if (!j[r].is_array() || j[r].size() != cols) throw invalid_input(where + ": ragged matrix");
        for (std::size_t c = 0; c < cols; ++c) {
            if (!j[r][c].is_number()) throw invalid_input(where + ": non-numeric entry");
            t(r, c) = j[r][c].get<double>();
        }
    }
    return t;
}

// ---- dataset ---------------------------------------------------------------

inline json dataset_to_json(const graph_dataset& ds) {
    json j;
    j["meta"] = {{"seed", ds.meta.seed}, {"D", ds.meta.node_dim}, {"F", ds.meta.edge_dim},
                 {"generator", ds.meta.generator}};
    json graphs = json::array();
    for (const auto& g : ds.graphs) {
        json gj;
        gj["subject_id"] = g.subject_id;
        gj["label"] = g.label;
        gj["nodes"] = to_json(g.nodes);
        json edges = json::array();
        for (const auto& e : g.edges) edges.push_back(json::array({e.i, e.j, e.attr}));
        gj["edges"] = std::move(edges);
        graphs.push_back(std::move(gj));
    }
    j["graphs"] = std::move(graphs);
    return j;
}

inline graph_dataset dataset_from_json(const json& j) {
    graph_dataset ds;
    const json meta = get<json>(j, "meta", "dataset");
    ds.meta.seed = get<std::uint64_t>(meta, "seed", "dataset.meta");
    ds.meta.node_dim = get<std::size_t>(meta, "D", "dataset.meta");
    ds.meta.edge_dim = get<std::size_t>(meta, "F", "dataset.meta");
    ds.meta.generator = get<std::string>(meta, "generator", "dataset.meta");
    const json graphs = get<json>(j, "graphs", "dataset");
    if (!graphs.is_array()) throw invalid_input("dataset: 'graphs' must be an array");
    for (std::size_t k = 0; k < graphs.size(); ++k) {
        const std::string where = "dataset.graphs[" + std::to_string(k) + "]";
        const json& gj = graphs[k];
        brain_graph g;
        g.subject_id = get<std::string>(gj, "subject_id", where);
        g.label = get<int>(gj, "label", where);
        g.nodes = matrix_from_json(get<json>(gj, "nodes", where), where + ".nodes");
        if (g.nodes.rows() > 0 && g.nodes.cols() != ds.meta.node_dim)
            throw invalid_input(where + ": node rows must have D entries");
        for (const auto& ej : get<json>(gj, "edges", where)) {
            if (!ej.is_array() || ej.size() != 3) throw invalid_input(where + ": edge must be [i, j, [attrs]]");
            try {
                g.edges.push_back(make_edge(ej[0].get<std::size_t>(), ej[1].get<std::size_t>(),
                                            ej[2].get<std::vector<double>>()));
            } catch (const json::exception& e) {
                throw invalid_input(where + ": bad edge: " + e.what());
            }
        }
        ds.graphs.push_back(std::move(g));
    }
    ds.validate();
    return ds;
}

inline void save_dataset(const std::filesystem::path& p, const graph_dataset& ds) {
    write_json(p, dataset_to_json(ds));
}

inline graph_dataset load_dataset(const std::filesystem::path& p) { return dataset_from_json(read_json(p)); }

// ---- model -----------------------------------------------------------------

inline json model_config_to_json(const model_config& c) {
    return {{"d0", c.d0},
            {"d1", c.d1},
            {"d2", c.d2},
            {"pool_ratio", c.pool_ratio},
            {"edge_dim", c.edge_dim},
            {"edge_hidden", c.edge_hidden},
            {"head_hidden", c.head_hidden},
            {"lambda_reg", c.lambda_reg}};
}

inline model_config model_config_from_json(const json& j) {
    model_config c;
    c.d0 = get<std::size_t>(j, "d0", "model.config");
    c.d1 = get<std::size_t>(j, "d1", "model.config");
    c.d2 = get<std::size_t>(j, "d2", "model.config");
    c.pool_ratio = get<double>(j, "pool_ratio", "model.config");
    c.edge_dim = get<std::size_t>(j, "edge_dim", "model.config");
    c.edge_hidden = get<std::size_t>(j, "edge_hidden", "model.config");
    c.head_hidden = get<std::size_t>(j, "head_hidden", "model.config");
    c.lambda_reg = get<double>(j, "lambda_reg", "model.config");
    c.validate();
    return c;
}

inline json model_to_json(const gnn_model& m) {
    json j;
    j["format_version"] = model_format_version;
    j["config"] = model_config_to_json(m.config);
    json params = json::array();
    for (const auto& [name, t] : m.parameters()) {
        json pj;
        pj["name"] = name;
        pj["shape"] = json::array({t->rows(), t->cols()});
        pj["data"] = t->data();
        params.push_back(std::move(pj));
    }
    j["parameters"] = std::move(params);
    return j;
}

inline gnn_model model_from_json(const json& j) {
    const int version = get<int>(j, "format_version", "model");
    if (version != model_format_version)
        throw invalid_input("model: unsupported format_version " + std::to_string(version));
    gnn_model m = init_model(model_config_from_json(get<json>(j, "config", "model")), 0);
    const json params = get<json>(j, "parameters", "model");
    auto slots = m.parameters();
    if (!params.is_array() || params.size() != slots.size())
        throw invalid_input("model: expected " + std::to_string(slots.size()) + " parameter tensors");
    for (std::size_t k = 0; k < slots.size(); ++k) {
        const std::string where = "model.parameters[" + std::to_string(k) + "]";
        const auto name = get<std::string>(params[k], "name", where);
        if (name != slots[k].first) throw invalid_input(where + ": expected '" + slots[k].first + "', got '" + name + "'");
        const auto shape = get<std::vector<std::size_t>>(params[k], "shape", where);
        auto data = get<std::vector<double>>(params[k], "data", where);
        tensor& t = *slots[k].second;
        if (shape.size() != 2 || shape[0] != t.rows() || shape[1] != t.cols() || data.size() != t.size())
            throw invalid_input(where + ": shape does not match the config");
        t.data() = std::move(data);
    }
    return m;
}

inline void save_model(const std::filesystem::path& p, const gnn_model& m) { write_json(p, model_to_json(m)); }

inline gnn_model load_model(const std::filesystem::path& p) { return model_from_json(read_json(p)); }

// ---- Box-Cox ---------------------------------------------------------------

inline json boxcox_to_json(const boxcox_params& b) {
    json cols = json::array();
    for (const auto& c : b.columns)
        cols.push_back({{"lambda", c.lambda},
                        {"shift", c.shift},
                        {"mean", c.mean},
                        {"std", c.std},
                        {"train_min", c.train_min},
                        {"degenerate", c.degenerate}});
    return {{"columns", cols}};
}

inline boxcox_params boxcox_from_json(const json& j) {
    boxcox_params b;
    for (const auto& cj : get<json>(j, "columns", "boxcox")) {
        boxcox_column c;
        c.lambda = get<double>(cj, "lambda", "boxcox.column");
        c.shift = get<double>(cj, "shift", "boxcox.column");
        c.mean = get<double>(cj, "mean", "boxcox.column");
        c.std = get<double>(cj, "std", "boxcox.column");
        c.train_min = get<double>(cj, "train_min", "boxcox.column");
        c.degenerate = get<bool>(cj, "degenerate", "boxcox.column");
        b.columns.push_back(c);
    }
    return b;
}

// ---- factors and communities -----------------------------------------------

inline json factors_to_json(const cp_factors& f) {
    json j;
    j["rank"] = f.rank;
    j["lambda"] = f.lambda;
    j["A"] = to_json(f.a);
    j["C"] = to_json(f.c);
    j["fit"] = std::isfinite(f.fit) ? json(f.fit) : json(nullptr);
    j["degenerate"] = f.degenerate;
    return j;
}

inline cp_factors factors_from_json(const json& j) {
    cp_factors f;
    f.rank = get<std::size_t>(j, "rank", "factors");
    f.lambda = get<std::vector<double>>(j, "lambda", "factors");
    f.a = matrix_from_json(get<json>(j, "A", "factors"), "factors.A");
    f.c = matrix_from_json(get<json>(j, "C", "factors"), "factors.C");
    if (f.a.cols() != f.rank || f.c.cols() != f.rank || f.lambda.size() != f.rank)
        throw invalid_input("factors: widths disagree with rank");
    f.fit = j.contains("fit") && j["fit"].is_number() ? j["fit"].get<double>()
                                                       : std::numeric_limits<double>::quiet_NaN();
    if (j.contains("degenerate")) f.degenerate = j["degenerate"].get<bool>();
    return f;
}

inline json communities_to_json(const std::vector<community>& cs) {
    json arr = json::array();
    for (const auto& c : cs) arr.push_back({{"j", c.j}, {"members", c.members}, {"threshold", c.threshold}});
    return arr;
}

inline std::vector<community> communities_from_json(const json& j) {
    if (!j.is_array()) throw invalid_input("communities: expected an array");
    std::vector<community> out;
    for (const auto& cj : j) {
        community c;
        c.j = get<std::size_t>(cj, "j", "communities");
        c.members = get<std::vector<std::size_t>>(cj, "members", "communities");
        c.threshold = get<double>(cj, "threshold", "communities");
        c.degenerate = c.members.empty();
        out.push_back(std::move(c));
    }
    return out;
}

// ---- reports ---------------------------------------------------------------

inline json metrics_to_json(const metrics& m) {
    return {{"accuracy", m.accuracy}, {"f_score", m.f_score}, {"precision", m.precision}, {"recall", m.recall}};
}

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) { return json(v).dump(); }

inline std::string train_log_csv(const std::vector<epoch_log>& log) {
    std::string out = "epoch,lr,loss,acc,f1,precision,recall\n";
    for (const auto& e : log) {
        out += std::to_string(e.epoch) + "," + format_double(e.lr) + "," + format_double(e.loss) + "," +
               format_double(e.train.accuracy) + "," + format_double(e.train.f_score) + "," +
               format_double(e.train.precision) + "," + format_double(e.train.recall) + "\n";
    }
    return out;
}

inline std::string node_importance_csv(const node_importance& ni) {
    std::string out = "roi_index,score,rank\n";
    for (std::size_t k : ni.order)
        out += std::to_string(k) + "," + format_double(ni.score[k]) + "," + std::to_string(ni.rank[k]) + "\n";
    return out;
}

/// Horizontal bar chart of relative importances as a standalone SVG.
inline std::string bar_chart_svg(const std::vector<std::string>& labels, const std::vector<double>& values,
                                 const std::string& title) {
    if (labels.size() != values.size()) throw invalid_input("bar_chart_svg: label and value counts differ");
    const int row = 24, left = 110, width = 300, top = 36;
    const int height = top + row * static_cast<int>(values.size()) + 16;
    double vmax = 0.0;
    for (double v : values) vmax = std::max(vmax, v);
    char buf[256];
    std::string out;
    std::snprintf(buf, sizeof buf,
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" font-family=\"sans-serif\" "
                  "font-size=\"12\">\n",
                  left + width + 70, height);
    out += buf;
    out += "<text x=\"8\" y=\"20\" font-size=\"14\">" + title + "</text>\n";
    for (std::size_t k = 0; k < values.size(); ++k) {
        const int y = top + row * static_cast<int>(k);
        const double frac = vmax > 0.0 ? values[k] / vmax : 0.0;
        std::snprintf(buf, sizeof buf,
                      "<text x=\"%d\" y=\"%d\" text-anchor=\"end\">%s</text>"
                      "<rect x=\"%d\" y=\"%d\" width=\"%.2f\" height=\"%d\" fill=\"#4c72b0\"/>"
                      "<text x=\"%.2f\" y=\"%d\">%.3f</text>\n",
                      left - 8, y + 14, labels[k].c_str(), left, y + 2, frac * width, row - 6,
                      left + frac * width + 6, y + 14, values[k]);
        out += buf;
    }
    out += "</svg>\n";
    return out;
}

}  // namespace graphsight::io
