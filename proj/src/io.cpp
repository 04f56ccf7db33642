#include "gpmu/io.hpp"

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <sstream>

namespace gpmu {

using nlohmann::json;

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.15g", v);
    return buf;
}

namespace {

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw config_error("cannot write '" + path + "'");
    return out;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot read '" + path + "'");
    return in;
}

json vec_to_json(const Vec& v) {
    json a = json::array();
    for (Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

Vec vec_from_json(const json& a) {
    Vec v(static_cast<Index>(a.size()));
    for (size_t i = 0; i < a.size(); ++i) v[static_cast<Index>(i)] = a[i].get<double>();
    return v;
}

json mat_to_json(const Mat& m) {
    json rows = json::array();
    for (Index i = 0; i < m.rows(); ++i) rows.push_back(vec_to_json(m.row(i).transpose()));
    return rows;
}

Mat mat_from_json(const json& rows) {
    if (rows.empty()) return Mat();
    Mat m(static_cast<Index>(rows.size()), static_cast<Index>(rows[0].size()));
    for (size_t i = 0; i < rows.size(); ++i)
        m.row(static_cast<Index>(i)) = vec_from_json(rows[i]).transpose();
    return m;
}

json write_json_guarded(const std::string& path, const json& j) {
    auto out = open_out(path);
    out << j.dump(2) << "\n";
    if (!out) throw config_error("write failed for '" + path + "'");
    return j;
}

json load_json(const std::string& path) {
    auto in = open_in(path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw config_error("parse error in '" + path + "': " + e.what());
    }
    return j;
}

} // namespace

void write_table(const std::string& path, const std::vector<std::string>& header,
                 const Mat& columns) {
    if (static_cast<Index>(header.size()) != columns.cols())
        throw invalid_model("one header entry per column required");
    auto out = open_out(path);
    for (size_t c = 0; c < header.size(); ++c)
        out << (c ? "," : "") << header[c];
    out << "\n";
    for (Index i = 0; i < columns.rows(); ++i) {
        for (Index c = 0; c < columns.cols(); ++c)
            out << (c ? "," : "") << format_double(columns(i, c));
        out << "\n";
    }
    if (!out) throw config_error("write failed for '" + path + "'");
}

Table read_table(const std::string& path) {
    auto in = open_in(path);
    Table t;
    std::string line;
    if (!std::getline(in, line)) throw config_error("'" + path + "' is empty");
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) t.header.push_back(cell);
    }
    std::vector<std::vector<double>> rows;
    size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw config_error("'" + path + "' line " + std::to_string(lineno) +
                                   ": not a number: '" + cell + "'");
            }
        }
        if (row.size() != t.header.size())
            throw config_error("'" + path + "' line " + std::to_string(lineno) +
                               ": expected " + std::to_string(t.header.size()) + " cells");
        rows.push_back(std::move(row));
    }
    t.columns = Mat(static_cast<Index>(rows.size()), static_cast<Index>(t.header.size()));
    for (size_t i = 0; i < rows.size(); ++i)
        for (size_t c = 0; c < rows[i].size(); ++c)
            t.columns(static_cast<Index>(i), static_cast<Index>(c)) = rows[i][c];
    return t;
}

void write_dataset(const std::string& path, const TimeSeriesDataset& data,
                   const std::string& description, std::optional<std::uint64_t> seed) {
    data.validate();
    const Vec t = data.times();
    const Index n = data.n();
    const Index nx = data.n_inputs();
    const Index ny = data.has_output() ? data.n_outputs() : 0;
    Mat cols(n, 1 + nx + ny);
    cols.col(0) = t;
    cols.middleCols(1, nx) = data.input;
    if (ny > 0) cols.middleCols(1 + nx, ny) = data.output;
    std::vector<std::string> header{"t"};
    for (Index i = 0; i < nx; ++i) header.push_back("x_" + std::to_string(i + 1));
    for (Index c = 0; c < ny; ++c) header.push_back("y_" + std::to_string(c + 1));
    write_table(path, header, cols);

    json meta;
    meta["type"] = "dataset_meta";
    meta["dt"] = data.dt;
    meta["channel_dofs"] = data.channel_labels;
    if (!description.empty()) meta["description"] = description;
    if (seed) meta["seed"] = *seed;
    write_json_guarded(path + ".meta.json", meta);
}

TimeSeriesDataset read_dataset(const std::string& path) {
    const Table t = read_table(path);
    if (t.header.empty() || t.header[0] != "t")
        throw config_error("'" + path + "': first column must be t");
    Index nx = 0, ny = 0;
    for (size_t c = 1; c < t.header.size(); ++c) {
        if (t.header[c].rfind("x_", 0) == 0 && ny == 0) {
            ++nx;
        } else if (t.header[c].rfind("y_", 0) == 0) {
            ++ny;
        } else {
            throw config_error("'" + path + "': unexpected column '" + t.header[c] + "'");
        }
    }
    TimeSeriesDataset data;
    const Vec tv = t.columns.col(0);
    data.t = tv;
    data.dt = tv.size() > 1 ? tv[1] - tv[0] : 0.0;
    data.input = t.columns.middleCols(1, nx);
    data.output = t.columns.middleCols(1 + nx, ny);
    for (Index c = 0; c < ny; ++c) data.channel_labels.push_back(static_cast<int>(c));

    std::ifstream meta_in(path + ".meta.json");
    if (meta_in) {
        json meta;
        try {
            meta_in >> meta;
        } catch (const json::parse_error& e) {
            throw config_error("'" + path + ".meta.json': " + e.what());
        }
        if (meta.contains("dt")) data.dt = meta.at("dt").get<double>();
        if (meta.contains("channel_dofs")) {
            const auto dofs = meta.at("channel_dofs").get<std::vector<int>>();
            if (static_cast<Index>(dofs.size()) == ny) data.channel_labels = dofs;
        }
    }
    data.validate();
    return data;
}

namespace {

json parameter_map_to_json(const std::vector<ParameterInfo>& map) {
    json a = json::array();
    for (const auto& p : map)
        a.push_back({{"name", p.name},
                     {"unit", p.unit},
                     {"transform", p.transform == Transform::Log ? "log" : "identity"}});
    return a;
}

std::vector<ParameterInfo> parameter_map_from_json(const json& a) {
    std::vector<ParameterInfo> map;
    for (const auto& e : a)
        map.push_back({e.at("name").get<std::string>(), e.at("unit").get<std::string>(),
                       e.at("transform").get<std::string>() == "log" ? Transform::Log
                                                                     : Transform::Identity});
    return map;
}

} // namespace

void write_laplace_summary(const std::string& path, const LaplaceSummary& summary) {
    json j;
    j["type"] = "laplace_summary";
    j["parameters"] = parameter_map_to_json(summary.mpv.parameter_map);
    j["n_theta"] = summary.mpv.n_theta();
    j["mpv"] = vec_to_json(summary.mpv.packed());
    j["standard_deviations"] = vec_to_json(summary.standard_deviations());
    j["covariance"] = mat_to_json(summary.covariance);
    j["converged"] = summary.converged;
    j["non_identifiable"] = summary.non_identifiable;
    j["iterations"] = summary.iterations;
    j["neg_log_posterior_at_mpv"] = summary.neg_log_posterior_at_mpv;
    j["log_likelihood_at_mpv"] = summary.log_likelihood_at_mpv;
    j["objective_trace"] = summary.objective_trace;
    write_json_guarded(path, j);
}

LaplaceSummary read_laplace_summary(const std::string& path) {
    const json j = load_json(path);
    if (j.value("type", "") != "laplace_summary")
        throw config_error("'" + path + "' is not a parameter summary");
    LaplaceSummary s;
    const Vec packed = vec_from_json(j.at("mpv"));
    s.mpv = ParameterSplit::from_packed(packed, j.at("n_theta").get<Index>(),
                                        parameter_map_from_json(j.at("parameters")));
    s.covariance = mat_from_json(j.at("covariance"));
    s.converged = j.at("converged").get<bool>();
    s.non_identifiable = j.at("non_identifiable").get<bool>();
    s.iterations = j.at("iterations").get<int>();
    s.neg_log_posterior_at_mpv = j.at("neg_log_posterior_at_mpv").get<double>();
    s.log_likelihood_at_mpv = j.at("log_likelihood_at_mpv").get<double>();
    s.objective_trace = j.at("objective_trace").get<std::vector<double>>();
    return s;
}

void write_posterior_samples(const std::string& table_path, const std::string& summary_path,
                             const PosteriorSamples& samples) {
    std::vector<std::string> header = samples.parameter_names;
    if (static_cast<Index>(header.size()) != samples.dim()) {
        header.clear();
        for (Index i = 0; i < samples.dim(); ++i) header.push_back("p" + std::to_string(i + 1));
    }
    header.push_back("log_likelihood");
    Mat cols(samples.n_samples(), samples.dim() + 1);
    cols.leftCols(samples.dim()) = samples.samples;
    cols.col(samples.dim()) = samples.log_likelihoods;
    write_table(table_path, header, cols);

    json j;
    j["type"] = "posterior_summary";
    j["log_evidence"] = samples.log_evidence;
    j["stage_betas"] = samples.stage_betas;
    j["acceptance_rates"] = samples.acceptance_rates;
    j["n_samples"] = samples.n_samples();
    write_json_guarded(summary_path, j);
}

PosteriorSamples read_posterior_samples(const std::string& table_path,
                                        const std::string& summary_path) {
    const Table t = read_table(table_path);
    if (t.header.empty() || t.header.back() != "log_likelihood")
        throw config_error("'" + table_path + "' is not a sample table");
    PosteriorSamples s;
    const Index d = static_cast<Index>(t.header.size()) - 1;
    s.samples = t.columns.leftCols(d);
    s.log_likelihoods = t.columns.col(d);
    s.parameter_names.assign(t.header.begin(), t.header.end() - 1);
    const json j = load_json(summary_path);
    s.log_evidence = j.at("log_evidence").get<double>();
    s.stage_betas = j.at("stage_betas").get<std::vector<double>>();
    s.acceptance_rates = j.at("acceptance_rates").get<std::vector<double>>();
    return s;
}

void write_predictive(const std::string& path, const PredictiveDistribution& pred,
                      double band_k) {
    const int C = pred.grid.channels;
    const Index n = pred.grid.n_times();
    std::vector<std::string> header{"t"};
    for (int c = 1; c <= C; ++c) {
        const std::string s = std::to_string(c);
        header.push_back("mean" + s);
        header.push_back("sd" + s);
        header.push_back("lower" + s);
        header.push_back("upper" + s);
    }
    Mat cols(n, 1 + 4 * C);
    cols.col(0) = pred.grid.zeta;
    const Vec sd = pred.sd();
    for (Index i = 0; i < n; ++i) {
        for (int c = 0; c < C; ++c) {
            const double m = pred.mean[i * C + c];
            const double s = sd[i * C + c];
            cols(i, 1 + 4 * c) = m;
            cols(i, 2 + 4 * c) = s;
            cols(i, 3 + 4 * c) = m - band_k * s;
            cols(i, 4 + 4 * c) = m + band_k * s;
        }
    }
    write_table(path, header, cols);
}

void write_score_table(const std::string& path, const std::vector<ModelClassScore>& scores,
                       const Vec& probabilities) {
    if (static_cast<Index>(scores.size()) != probabilities.size())
        throw invalid_model("one probability per score required");
    auto out = open_out(path);
    out << "model_id,log_evidence,log_posterior_predictive,bic,posterior_probability,"
           "evidence_provenance\n";
    for (size_t i = 0; i < scores.size(); ++i) {
        const auto& s = scores[i];
        out << s.model_id << "," << format_double(s.log_evidence) << ",";
        out << (s.log_posterior_predictive ? format_double(*s.log_posterior_predictive) : "");
        out << ",";
        out << (s.bic ? format_double(*s.bic) : "");
        out << "," << format_double(probabilities[static_cast<Index>(i)]);
        out << "," << s.evidence_provenance << "\n";
    }
    if (!out) throw config_error("write failed for '" + path + "'");
}

void write_acf(const std::string& path, const Vec& acf, double dt) {
    Mat cols(acf.size(), 2);
    for (Index k = 0; k < acf.size(); ++k) {
        cols(k, 0) = static_cast<double>(k) * dt;
        cols(k, 1) = acf[k];
    }
    write_table(path, {"lag_s", "acf"}, cols);
}

void write_psd(const std::string& path, const Psd& psd) {
    Mat cols(psd.freq_hz.size(), 2);
    cols.col(0) = psd.freq_hz;
    cols.col(1) = psd.power;
    write_table(path, {"freq_hz", "power"}, cols);
}

std::string file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw config_error("cannot hash '" + path + "'");
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[4096];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        const std::streamsize got = in.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
        if (got < static_cast<std::streamsize>(sizeof(buf))) break;
    }
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
    return hex;
}

void write_manifest(const std::string& path, const RunManifest& manifest) {
    json j;
    j["type"] = "run_manifest";
    j["command"] = manifest.command;
    j["config_hash"] = manifest.config_hash;
    j["seed"] = manifest.seed;
    j["schema_version"] = manifest.schema_version;
    j["wall_seconds"] = manifest.wall_seconds;
    json arts = json::array();
    for (const auto& a : manifest.artifacts) arts.push_back({{"path", a.path}, {"hash", a.hash}});
    j["artifacts"] = arts;
    write_json_guarded(path, j);
}

} // namespace gpmu
