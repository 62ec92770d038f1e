#pragma once

// File formats.
//
// Metric CSV: a header row ("unit,<period labels>") followed by one row per
// unit: the unit label, then one cell per period. An empty cell (or NA) is a
// missing observation.
//
// Dataset manifest (JSON):
//   {"metrics": [{"name": "sales", "file": "sales.csv"}, ...],
//    "treatment": "store_1", "t0": 15, "period_scale": 1}
// Relative file paths resolve against the manifest's directory. t0 is given
// in manifest units; the period index is t0 * period_scale.
//
// Model sidecar: <stem>.json (dims, retained_rank, rho_hat, spectrum) plus
// <stem>.bin holding m_hat as row-major little-endian float64.

#include "mrsc/denoise.hpp"
#include "mrsc/evaluation.hpp"
#include "mrsc/regression.hpp"
#include "mrsc/synthgen.hpp"
#include "mrsc/tensor.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mrsc::io {

using Json = nlohmann::json;

MetricTable parse_metric_csv(const std::string& text, const std::string& metric_name);
MetricTable read_metric_csv(const std::filesystem::path& path, const std::string& metric_name);
void write_metric_csv(const std::filesystem::path& path, const ObservationTensor& tensor,
                      std::size_t metric);

struct MetricFile {
    std::string name;
    std::filesystem::path file;
};

struct DatasetManifest {
    std::vector<MetricFile> metrics;
    std::string treatment;
    std::optional<double> t0;  // manifest units
    double period_scale = 1.0;
    std::filesystem::path base_dir;

    /// t0 * period_scale, rounded to the nearest period.
    std::optional<std::size_t> t0_periods() const;
    std::filesystem::path resolve(const MetricFile& metric) const;
};

DatasetManifest parse_manifest(const Json& json, const std::filesystem::path& base_dir);
DatasetManifest read_manifest(const std::filesystem::path& path);
Json to_json(const DatasetManifest& manifest);

/// Reads every metric file and builds the tensor.
ObservationTensor load_dataset(const DatasetManifest& manifest);

/// Writes metric CSVs, manifest.json and ground_truth.json (means, beta_star,
/// generator metadata) into `dir`.
void export_bundle(const std::filesystem::path& dir, const GroundTruthBundle& bundle,
                   std::size_t t0);

void save_model(const std::filesystem::path& stem, const DenoisedModel& model);
DenoisedModel load_model(const std::filesystem::path& stem);

Json to_json(const SyntheticControl& control);
Json to_json(const ForecastReport& report, const std::vector<std::string>& metric_labels);
Json to_json(const DiagnosticReport& report, const std::vector<std::string>& metric_labels);
Json to_json(const RankTable& table);
Json summary_json(const BenchmarkResult& result);

std::string trials_csv(const BenchmarkResult& result);
/// Long format: config,comparator,metric,statistic,value.
std::string plot_csv(const BenchmarkResult& result);
/// index,<metric labels>...,combined: one row per singular value index.
std::string spectra_csv(const DiagnosticReport& report, const std::vector<std::string>& metric_labels);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace mrsc::io
