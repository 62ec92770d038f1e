#include "mrsc/io.hpp"

#include "mrsc/error.hpp"
#include "mrsc/rng.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace mrsc::io {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    bool quoted = false;
    for (char c : line) {
        if (c == '"') {
            quoted = !quoted;
        } else if (c == ',' && !quoted) {
            cells.push_back(trim(cell));
            cell.clear();
        } else {
            cell.push_back(c);
        }
    }
    cells.push_back(trim(cell));
    return cells;
}

std::optional<double> parse_cell(const std::string& cell, const std::string& where) {
    if (cell.empty() || cell == "NA" || cell == "na") return std::nullopt;
    double value = 0.0;
    const auto* begin = cell.data();
    const auto* end = cell.data() + cell.size();
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end) {
        throw Error(ErrorCode::ParseError, "cannot parse '" + cell + "' at " + where);
    }
    return value;
}

std::string format_double(double v) {
    std::ostringstream out;
    out.precision(17);
    out << v;
    return out.str();
}

Json matrix_rows(const Matrix& m) {
    Json rows = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        Json row = Json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Json vector_json(const Vector& v) {
    Json out = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

}  // namespace

MetricTable parse_metric_csv(const std::string& text, const std::string& metric_name) {
    std::istringstream in(text);
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(in, line)) {
        if (!trim(line).empty()) lines.push_back(line);
    }
    if (lines.empty()) throw Error(ErrorCode::EmptyInput, "metric '" + metric_name + "' is empty");
    const auto header = split_csv_line(lines.front());
    if (header.size() < 2) {
        throw Error(ErrorCode::EmptyInput, "metric '" + metric_name + "' has no period columns");
    }
    if (lines.size() < 2) {
        throw Error(ErrorCode::EmptyInput, "metric '" + metric_name + "' has no unit rows");
    }
    const std::size_t periods = header.size() - 1;
    MetricTable table;
    table.name = metric_name;
    for (std::size_t r = 1; r < lines.size(); ++r) {
        auto cells = split_csv_line(lines[r]);
        // a trailing empty cell may be dropped by some writers
        if (cells.size() == periods) cells.emplace_back();
        if (cells.size() != periods + 1) {
            throw Error(ErrorCode::DimensionMismatch,
                        "metric '" + metric_name + "' row " + std::to_string(r) + " has " +
                            std::to_string(cells.size() - 1) + " periods, header has " +
                            std::to_string(periods));
        }
        table.unit_labels.push_back(cells.front());
        std::vector<std::optional<double>> row;
        for (std::size_t j = 1; j < cells.size(); ++j) {
            row.push_back(parse_cell(cells[j], metric_name + " row " + std::to_string(r) +
                                                   " column " + std::to_string(j)));
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::EmptyInput, "cannot open " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write " + path.string());
    out << text;
}

MetricTable read_metric_csv(const fs::path& path, const std::string& metric_name) {
    return parse_metric_csv(read_text(path), metric_name);
}

void write_metric_csv(const fs::path& path, const ObservationTensor& tensor, std::size_t metric) {
    std::ostringstream out;
    out << "unit";
    for (std::size_t j = 0; j < tensor.n_periods(); ++j) out << ',' << j + 1;
    out << '\n';
    for (std::size_t i = 0; i < tensor.n_units(); ++i) {
        out << tensor.unit_labels()[i];
        for (std::size_t j = 0; j < tensor.n_periods(); ++j) {
            out << ',';
            if (const auto v = tensor.at(i, j, metric)) out << format_double(*v);
        }
        out << '\n';
    }
    write_text(path, out.str());
}

std::optional<std::size_t> DatasetManifest::t0_periods() const {
    if (!t0) return std::nullopt;
    return static_cast<std::size_t>(std::llround(*t0 * period_scale));
}

fs::path DatasetManifest::resolve(const MetricFile& metric) const {
    return metric.file.is_absolute() ? metric.file : base_dir / metric.file;
}

DatasetManifest parse_manifest(const Json& json, const fs::path& base_dir) {
    DatasetManifest manifest;
    manifest.base_dir = base_dir;
    try {
        if (!json.contains("metrics") || !json.at("metrics").is_array() ||
            json.at("metrics").empty()) {
            throw Error(ErrorCode::EmptyInput, "manifest lists no metrics");
        }
        for (const auto& entry : json.at("metrics")) {
            manifest.metrics.push_back(
                {entry.at("name").get<std::string>(), fs::path(entry.at("file").get<std::string>())});
        }
        if (json.contains("treatment")) manifest.treatment = json.at("treatment").get<std::string>();
        if (json.contains("t0")) manifest.t0 = json.at("t0").get<double>();
        if (json.contains("period_scale")) manifest.period_scale = json.at("period_scale").get<double>();
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("manifest: ") + e.what());
    }
    if (!(manifest.period_scale > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "period_scale must be positive");
    }
    return manifest;
}

DatasetManifest read_manifest(const fs::path& path) {
    Json json;
    try {
        json = Json::parse(read_text(path));
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
    }
    return parse_manifest(json, path.parent_path());
}

Json to_json(const DatasetManifest& manifest) {
    Json json;
    json["metrics"] = Json::array();
    for (const auto& m : manifest.metrics) {
        json["metrics"].push_back({{"name", m.name}, {"file", m.file.generic_string()}});
    }
    json["treatment"] = manifest.treatment;
    if (manifest.t0) json["t0"] = *manifest.t0;
    json["period_scale"] = manifest.period_scale;
    return json;
}

ObservationTensor load_dataset(const DatasetManifest& manifest) {
    std::vector<MetricTable> tables;
    for (const auto& metric : manifest.metrics) {
        tables.push_back(read_metric_csv(manifest.resolve(metric), metric.name));
    }
    return build_tensor(tables);
}

void export_bundle(const fs::path& dir, const GroundTruthBundle& bundle, std::size_t t0) {
    fs::create_directories(dir);
    DatasetManifest manifest;
    manifest.treatment = bundle.tensor.unit_labels().front();
    manifest.t0 = static_cast<double>(t0);
    for (std::size_t k = 0; k < bundle.tensor.n_metrics(); ++k) {
        const auto& name = bundle.tensor.metric_labels()[k];
        const fs::path file = name + ".csv";
        write_metric_csv(dir / file, bundle.tensor, k);
        manifest.metrics.push_back({name, file});
    }
    write_text(dir / "manifest.json", to_json(manifest).dump(2) + "\n");

    Json truth;
    truth["generator"] = bundle.generator;
    truth["rng"] = bundle.rng;
    truth["seed"] = bundle.seed;
    truth["beta_star"] = vector_json(bundle.beta_star);
    truth["means"] = Json::object();
    for (std::size_t k = 0; k < bundle.mean_tensor.n_metrics(); ++k) {
        truth["means"][bundle.mean_tensor.metric_labels()[k]] = matrix_rows(bundle.mean_tensor.slice(k));
    }
    truth["units"] = bundle.mean_tensor.unit_labels();
    write_text(dir / "ground_truth.json", truth.dump() + "\n");
}

void save_model(const fs::path& stem, const DenoisedModel& model) {
    Json meta;
    meta["dims"] = {{"rows", model.m_hat.rows()},
                    {"cols", model.m_hat.cols()},
                    {"n_metrics", model.n_metrics},
                    {"n_periods", model.n_periods}};
    meta["retained_rank"] = model.retained_rank;
    meta["rho_hat"] = model.rho_hat;
    meta["spectrum"] = vector_json(model.singular_values);
    meta["missing_data_warning"] = model.missing_data_warning;
    meta["all_zero_spectrum"] = model.all_zero_spectrum;
    meta["m_hat_file"] = stem.filename().string() + ".bin";
    meta["m_hat_encoding"] = "float64-le-row-major";
    write_text(fs::path(stem.string() + ".json"), meta.dump(2) + "\n");

    std::string bytes;
    bytes.reserve(static_cast<std::size_t>(model.m_hat.size()) * 8);
    for (Eigen::Index i = 0; i < model.m_hat.rows(); ++i) {
        for (Eigen::Index j = 0; j < model.m_hat.cols(); ++j) {
            auto bits = std::bit_cast<std::uint64_t>(model.m_hat(i, j));
            for (int b = 0; b < 8; ++b) bytes.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
        }
    }
    write_text(fs::path(stem.string() + ".bin"), bytes);
}

DenoisedModel load_model(const fs::path& stem) {
    Json meta;
    try {
        meta = Json::parse(read_text(fs::path(stem.string() + ".json")));
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::ParseError, e.what());
    }
    DenoisedModel model;
    try {
        const auto rows = meta.at("dims").at("rows").get<Eigen::Index>();
        const auto cols = meta.at("dims").at("cols").get<Eigen::Index>();
        model.n_metrics = meta.at("dims").at("n_metrics").get<std::size_t>();
        model.n_periods = meta.at("dims").at("n_periods").get<std::size_t>();
        model.retained_rank = meta.at("retained_rank").get<std::size_t>();
        model.rho_hat = meta.at("rho_hat").get<double>();
        model.missing_data_warning = meta.value("missing_data_warning", false);
        model.all_zero_spectrum = meta.value("all_zero_spectrum", false);
        const auto spectrum = meta.at("spectrum").get<std::vector<double>>();
        model.singular_values = Eigen::Map<const Vector>(spectrum.data(),
                                                         static_cast<Eigen::Index>(spectrum.size()));
        const auto bytes = read_text(stem.parent_path() / meta.at("m_hat_file").get<std::string>());
        if (bytes.size() != static_cast<std::size_t>(rows * cols) * 8) {
            throw Error(ErrorCode::DimensionMismatch, "model sidecar size does not match dims");
        }
        model.m_hat.resize(rows, cols);
        std::size_t at = 0;
        for (Eigen::Index i = 0; i < rows; ++i) {
            for (Eigen::Index j = 0; j < cols; ++j) {
                std::uint64_t bits = 0;
                for (int b = 0; b < 8; ++b) {
                    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[at++])) << (8 * b);
                }
                model.m_hat(i, j) = std::bit_cast<double>(bits);
            }
        }
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("model: ") + e.what());
    }
    return model;
}

Json to_json(const SyntheticControl& control) {
    Json json;
    json["beta"] = vector_json(control.beta);
    json["weights"] = control.weights.w;
    json["retained_rank"] = control.retained_rank;
    json["fit_residual"] = control.fit_residual;
    json["solver"] = "min-norm-pseudoinverse";
    json["used_columns"] = control.used_columns;
    json["dropped_columns"] = control.dropped_columns;
    json["degenerate_model"] = control.degenerate_model;
    json["t0"] = control.t0;
    return json;
}

Json to_json(const ForecastReport& report, const std::vector<std::string>& metric_labels) {
    Json json;
    json["t0"] = report.t0;
    json["metrics"] = Json::array();
    for (Eigen::Index k = 0; k < report.trajectories.rows(); ++k) {
        const auto ki = static_cast<std::size_t>(k);
        Json metric;
        metric["name"] = ki < metric_labels.size() ? metric_labels[ki] : "metric_" + std::to_string(k);
        metric["forecast"] = std::vector<double>(report.trajectories.row(k).begin(),
                                                 report.trajectories.row(k).end());
        if (report.scored) {
            metric["pre_mse"] = report.pre_mse[ki];
            metric["post_mse"] = report.post_mse[ki];
        }
        if (ki < report.mape.size()) {
            Json horizons = Json::array();
            for (const auto& h : report.mape[ki]) {
                horizons.push_back({{"horizon", h.horizon},
                                    {"mape", h.mape},
                                    {"points", h.points},
                                    {"zero_actual_points", h.zero_actual_points}});
            }
            metric["mape"] = horizons;
        }
        if (report.band_level) {
            metric["residual_band"] = {
                {"level", *report.band_level},
                {"lower", std::vector<double>(report.band_lower.row(k).begin(),
                                              report.band_lower.row(k).end())},
                {"upper", std::vector<double>(report.band_upper.row(k).begin(),
                                              report.band_upper.row(k).end())}};
        }
        json["metrics"].push_back(std::move(metric));
    }
    if (report.scored) {
        json["pre_mse_avg"] = report.pre_mse_avg;
        json["post_mse_avg"] = report.post_mse_avg;
    }
    return json;
}

Json to_json(const DiagnosticReport& report, const std::vector<std::string>& metric_labels) {
    Json json;
    json["criterion"] = report.criterion;
    if (std::isfinite(report.energy_threshold)) json["energy_threshold"] = report.energy_threshold;
    json["pass_ratio"] = report.pass_ratio;
    json["per_metric_rank"] = Json::object();
    for (std::size_t k = 0; k < report.per_metric_rank.size(); ++k) {
        json["per_metric_rank"][metric_labels.at(k)] = report.per_metric_rank[k];
    }
    json["combined_rank"] = report.combined_rank;
    json["ratio"] = std::isfinite(report.ratio) ? Json(report.ratio) : Json("inf");
    json["passed"] = report.passed;
    if (!report.note.empty()) json["note"] = report.note;
    return json;
}

Json to_json(const RankTable& table) {
    Json json;
    json["criterion"] = table.criterion;
    json["pass_ratio"] = table.pass_ratio;
    json["n_seeds"] = table.n_seeds;
    json["rows"] = Json::array();
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        json["rows"].push_back(
            {{"matrix", table.rows[r]}, {"mean_rank", table.mean_rank(r)}, {"ranks", table.ranks[r]}});
    }
    json["same_params_passed"] = table.same_passed;
    json["different_params_failed"] = table.different_failed;
    return json;
}

namespace {

Json cell_json(const CellKey& cell) {
    return {{"n_units", cell.n_units},   {"n_metrics", cell.n_metrics},
            {"alphas", cell.alphas},     {"t0", cell.t0},
            {"policy", cell.policy},     {"weights", cell.weights},
            {"observed_fraction", cell.observed_fraction},
            {"comparator", cell.comparator}};
}

std::string cell_label(const CellKey& cell) {
    std::ostringstream out;
    out << "N=" << cell.n_units << ";K=" << cell.n_metrics << ";t0=" << cell.t0 << ";"
        << cell.policy << ";rho=" << format_double(cell.observed_fraction);
    return out.str();
}

std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

}  // namespace

Json summary_json(const BenchmarkResult& result) {
    const auto& c = result.config;
    Json json;
    json["name"] = c.name;
    json["generator"] = c.generator == GeneratorKind::Lvm ? "lvm" : "lowrank";
    json["rng"] = std::string(SplitMix64::name);
    json["seed"] = c.seed;
    json["n_trials"] = c.n_trials;
    json["n_periods"] = c.n_periods;
    json["noise_sd"] = c.noise_sd;
    json["pool_size"] = c.pool_size;
    json["share_latents"] = c.share_latents;
    json["aggregates"] = Json::array();
    for (const auto& row : result.aggregates) {
        Json entry = cell_json(row.cell);
        entry["n_ok"] = row.n_ok;
        entry["n_failed"] = row.n_failed;
        entry["mean_post_rmse"] = row.mean_post_rmse;
        entry["mean_pre_mse"] = row.mean_pre_mse;
        entry["mean_post_mse"] = row.mean_post_mse;
        entry["mean_pre_mse_avg"] = row.mean_pre_mse_avg;
        entry["mean_post_mse_avg"] = row.mean_post_mse_avg;
        json["aggregates"].push_back(std::move(entry));
    }
    return json;
}

std::string trials_csv(const BenchmarkResult& result) {
    std::size_t max_k = 0;
    for (const auto& t : result.trials) max_k = std::max(max_k, t.cell.n_metrics);
    std::ostringstream out;
    out << "n_units,n_metrics,alphas,t0,policy,weights,observed_fraction,comparator,trial,seed,ok,error";
    for (std::size_t k = 0; k < max_k; ++k) {
        out << ",pre_mse_" << k << ",post_mse_" << k << ",post_rmse_" << k;
    }
    out << '\n';
    for (const auto& t : result.trials) {
        out << t.cell.n_units << ',' << t.cell.n_metrics << ',' << csv_quote(t.cell.alphas) << ','
            << t.cell.t0 << ',' << csv_quote(t.cell.policy) << ',' << csv_quote(t.cell.weights)
            << ',' << format_double(t.cell.observed_fraction) << ',' << csv_quote(t.cell.comparator)
            << ',' << t.trial << ',' << t.seed << ',' << (t.ok ? 1 : 0) << ',' << csv_quote(t.error);
        for (std::size_t k = 0; k < max_k; ++k) {
            if (t.ok && k < t.post_mse.size()) {
                out << ',' << format_double(t.pre_mse[k]) << ',' << format_double(t.post_mse[k]) << ','
                    << format_double(t.post_rmse[k]);
            } else {
                out << ",,,";
            }
        }
        out << '\n';
    }
    return out.str();
}

std::string plot_csv(const BenchmarkResult& result) {
    std::ostringstream out;
    out << "config,comparator,metric,statistic,value\n";
    for (const auto& row : result.aggregates) {
        const auto config = csv_quote(cell_label(row.cell));
        for (std::size_t k = 0; k < row.mean_post_rmse.size(); ++k) {
            out << config << ',' << csv_quote(row.cell.comparator) << ",metric_" << k
                << ",mean_post_rmse," << format_double(row.mean_post_rmse[k]) << '\n';
            out << config << ',' << csv_quote(row.cell.comparator) << ",metric_" << k
                << ",mean_pre_mse," << format_double(row.mean_pre_mse[k]) << '\n';
            out << config << ',' << csv_quote(row.cell.comparator) << ",metric_" << k
                << ",mean_post_mse," << format_double(row.mean_post_mse[k]) << '\n';
        }
    }
    return out.str();
}

std::string spectra_csv(const DiagnosticReport& report,
                        const std::vector<std::string>& metric_labels) {
    std::ostringstream out;
    out << "index";
    for (std::size_t k = 0; k < report.per_metric_spectrum.size(); ++k) out << ',' << csv_quote(metric_labels.at(k));
    out << ",combined\n";
    const auto rows = report.combined_spectrum.size();
    for (Eigen::Index i = 0; i < rows; ++i) {
        out << i + 1;
        for (const auto& s : report.per_metric_spectrum) {
            out << ',';
            if (i < s.size()) out << format_double(s(i));
        }
        out << ',' << format_double(report.combined_spectrum(i)) << '\n';
    }
    return out.str();
}

}  // namespace mrsc::io
