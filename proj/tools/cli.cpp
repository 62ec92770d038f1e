#include "cli.hpp"

#include "mrsc/error.hpp"
#include "mrsc/regression.hpp"
#include "mrsc/rng.hpp"
#include "mrsc/synthgen.hpp"
#include "mrsc/tensor.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <sstream>

namespace mrsc::cli {

namespace fs = std::filesystem;
using io::Json;

namespace {

// Same stream tag as the benchmark sweep, so a CLI-masked fixture matches a
// sweep cell with the same seed.
constexpr std::uint64_t kMaskStream = 0x6d61736b;

double parse_number(const std::string& text, const std::string& what) {
    double value = 0.0;
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr != end) {
        throw Error(ErrorCode::ParseError, "cannot parse " + what + " '" + text + "'");
    }
    return value;
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> parts;
    std::stringstream in(text);
    std::string part;
    while (std::getline(in, part, ',')) {
        if (!part.empty()) parts.push_back(part);
    }
    return parts;
}

std::string fixed(double v, int digits = 6) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(digits) << v;
    return out.str();
}

// Options shared by diagnose and forecast.
struct PolicyFlags {
    std::optional<std::size_t> rank;
    std::optional<double> energy;
    std::optional<double> lambda;

    std::optional<ThresholdPolicy> policy() const {
        if (rank) return FixedRank{*rank};
        if (energy) return EnergyFraction{*energy};
        if (lambda) return SingularValueCutoff{*lambda};
        return std::nullopt;
    }
};

void add_policy_flags(CLI::App* cmd, PolicyFlags& flags) {
    auto* rank = cmd->add_option("--rank", flags.rank, "Keep this many singular values");
    auto* energy = cmd->add_option("--energy", flags.energy,
                                   "Keep the smallest rank reaching this energy fraction");
    auto* lambda = cmd->add_option("--lambda", flags.lambda, "Keep singular values >= lambda");
    rank->excludes(energy)->excludes(lambda);
    energy->excludes(lambda);
}

MetricWeights parse_weights(const std::string& text, std::size_t n_metrics) {
    if (text.empty()) return MetricWeights::uniform(n_metrics);
    MetricWeights weights;
    for (const auto& part : split_list(text)) weights.w.push_back(parse_number(part, "weight"));
    if (weights.size() != n_metrics) {
        throw Error(ErrorCode::DimensionMismatch,
                    "expected " + std::to_string(n_metrics) + " weights, got " +
                        std::to_string(weights.size()));
    }
    weights.validate(n_metrics);
    return weights;
}

std::vector<std::size_t> parse_horizons(const std::string& text) {
    std::vector<std::size_t> horizons;
    for (const auto& part : split_list(text)) {
        const double h = parse_number(part, "horizon");
        if (!(h >= 1.0) || h != std::floor(h)) {
            throw Error(ErrorCode::InvalidArgument, "horizon must be a positive integer");
        }
        horizons.push_back(static_cast<std::size_t>(h));
    }
    return horizons;
}

struct LoadedData {
    io::DatasetManifest manifest;
    ObservationTensor tensor;
};

LoadedData load(const std::string& manifest_path) {
    auto manifest = io::read_manifest(manifest_path);
    auto tensor = io::load_dataset(manifest);
    return {std::move(manifest), std::move(tensor)};
}

std::size_t resolve_treatment(const ObservationTensor& tensor, const io::DatasetManifest& manifest,
                              const std::string& flag) {
    const std::string label = flag.empty() ? manifest.treatment : flag;
    if (label.empty()) throw Error(ErrorCode::InvalidArgument, "no treatment unit given");
    const auto unit = tensor.find_unit(label);
    if (!unit) throw Error(ErrorCode::InvalidArgument, "unknown treatment unit '" + label + "'");
    return *unit;
}

std::size_t resolve_t0(const ObservationTensor& tensor, io::DatasetManifest manifest,
                       const std::optional<double>& flag) {
    if (flag) manifest.t0 = *flag;
    const auto t0 = manifest.t0_periods();
    if (!t0) throw Error(ErrorCode::InvalidArgument, "no t0 given");
    if (*t0 < 1 || *t0 >= tensor.n_periods()) {
        throw Error(ErrorCode::InvalidArgument,
                    "t0 = " + std::to_string(*t0) + " periods is outside [1, " +
                        std::to_string(tensor.n_periods() - 1) + "]");
    }
    return *t0;
}

Json error_json(std::string_view code, const std::string& message) {
    return {{"code", std::string(code)}, {"message", message}};
}

// ---- validate -------------------------------------------------------------

struct ValidateArgs {
    std::string manifest;
};

int cmd_validate(const ValidateArgs& args, std::ostream& out) {
    Json report;
    report["manifest"] = args.manifest;
    Json errors = Json::array();
    std::optional<io::DatasetManifest> manifest;
    try {
        manifest = io::read_manifest(args.manifest);
    } catch (const Error& e) {
        errors.push_back(error_json(to_string(e.code()), e.what()));
    }

    std::vector<MetricTable> tables;
    if (manifest) {
        // Parse every file so one report lists all broken inputs.
        for (const auto& metric : manifest->metrics) {
            try {
                tables.push_back(io::read_metric_csv(manifest->resolve(metric), metric.name));
            } catch (const Error& e) {
                errors.push_back(error_json(to_string(e.code()), e.what()));
            }
        }
    }

    if (manifest && errors.empty()) {
        try {
            const auto tensor = build_tensor(tables);
            report["n_units"] = tensor.n_units();
            report["n_periods"] = tensor.n_periods();
            report["n_metrics"] = tensor.n_metrics();
            const double cells = static_cast<double>(tensor.n_units() * tensor.n_periods());
            Json metrics = Json::array();
            for (std::size_t k = 0; k < tensor.n_metrics(); ++k) {
                metrics.push_back({{"name", tensor.metric_labels()[k]},
                                   {"missing", tensor.missing_count(k)},
                                   {"missing_percent", 100.0 * tensor.missing_count(k) / cells}});
            }
            report["metrics"] = metrics;
            report["missing_percent"] =
                100.0 * tensor.missing_count() / (cells * tensor.n_metrics());
            if (!manifest->treatment.empty() && !tensor.find_unit(manifest->treatment)) {
                errors.push_back(error_json("InvalidArgument",
                                            "treatment '" + manifest->treatment + "' not found"));
            }
            if (manifest->t0) {
                const auto t0 = *manifest->t0_periods();
                if (t0 < 1 || t0 >= tensor.n_periods()) {
                    errors.push_back(error_json("InvalidArgument", "t0 outside [1, T-1]"));
                }
            }
        } catch (const Error& e) {
            errors.push_back(error_json(to_string(e.code()), e.what()));
        }
    }

    report["valid"] = errors.empty();
    report["errors"] = errors;
    out << report.dump(2) << '\n';
    return errors.empty() ? kExitOk : kExitInput;
}

// ---- diagnose -------------------------------------------------------------

struct DiagnoseArgs {
    std::string manifest;
    double energy = 0.995;
    std::optional<double> rank_tol;
    double pass_ratio = 1.25;
    std::string out_dir = "out";
};

int cmd_diagnose(const DiagnoseArgs& args, std::ostream& out) {
    const auto data = load(args.manifest);
    const RankCriterion criterion = args.rank_tol ? RankCriterion{ToleranceCriterion{*args.rank_tol}}
                                                  : RankCriterion{EnergyCriterion{args.energy}};
    const auto report = rank_preservation_diagnostic(data.tensor, criterion, args.pass_ratio);
    const auto& labels = data.tensor.metric_labels();

    io::write_text(fs::path(args.out_dir) / "diagnostic.json",
                   io::to_json(report, labels).dump(2) + "\n");
    io::write_text(fs::path(args.out_dir) / "spectra.csv", io::spectra_csv(report, labels));

    out << "criterion: " << report.criterion << '\n';
    for (std::size_t k = 0; k < labels.size(); ++k) {
        out << std::left << std::setw(24) << labels[k] << report.per_metric_rank[k] << '\n';
    }
    out << std::left << std::setw(24) << "combined" << report.combined_rank << '\n';
    out << "ratio " << (std::isfinite(report.ratio) ? fixed(report.ratio, 4) : "inf") << " (pass <= "
        << fixed(report.pass_ratio, 4) << "): " << (report.passed ? "passed" : "failed") << '\n';
    if (!report.note.empty()) out << "note: " << report.note << '\n';
    return kExitOk;
}

// ---- forecast -------------------------------------------------------------

struct ForecastArgs {
    std::string manifest;
    std::string treatment;
    std::optional<double> t0;
    PolicyFlags policy;
    bool cross_validate = false;
    std::string weights;
    std::uint64_t seed = 0;
    std::optional<double> observed_fraction;
    std::string horizons;
    std::optional<double> band;
    std::string save_model;
    std::string model;
    std::string out_dir = "out";
};

int cmd_forecast(const ForecastArgs& args, std::ostream& out) {
    auto data = load(args.manifest);
    const auto treatment = resolve_treatment(data.tensor, data.manifest, args.treatment);
    const auto t0 = resolve_t0(data.tensor, data.manifest, args.t0);
    const PanelSplit split{treatment, t0};
    auto weights = parse_weights(args.weights, data.tensor.n_metrics());

    ObservationTensor tensor = data.tensor;
    if (args.observed_fraction) {
        SplitMix64 rng = SplitMix64(args.seed).split(kMaskStream);
        tensor = tensor.mask_bernoulli(*args.observed_fraction, rng, treatment);
    }

    ThresholdPolicy policy = EnergyFraction{0.995};
    Json cv_json;
    if (args.cross_validate) {
        if (args.policy.policy()) {
            throw Error(ErrorCode::InvalidArgument, "--cv cannot be combined with a policy flag");
        }
        std::vector<ThresholdPolicy> grid;
        const auto max_rank = std::min<std::size_t>(10, tensor.n_units() - 1);
        for (std::size_t r = 1; r <= max_rank; ++r) grid.push_back(FixedRank{r});
        const auto choice = cross_validate(tensor, split, grid, {weights});
        policy = choice.policy;
        cv_json = {{"policy", describe(choice.policy)},
                   {"validation_mse", choice.validation_mse},
                   {"grid_size", choice.grid.size()}};
    } else if (const auto chosen = args.policy.policy()) {
        policy = *chosen;
    }

    const auto panel = flatten(tensor, split);
    DenoisedModel model;
    if (!args.model.empty()) {
        model = io::load_model(args.model);
        if (model.m_hat.rows() != panel.donor.rows() || model.m_hat.cols() != panel.donor.cols()) {
            throw Error(ErrorCode::DimensionMismatch, "saved model does not match the dataset");
        }
    } else {
        model = hsvt(panel, policy);
    }
    const auto control = fit(model, panel, weights);
    auto report = predict(control, model);

    const Matrix truth = tensor.unit_trajectories(treatment);
    const Mask truth_present = tensor.unit_mask(treatment);
    const bool has_post = (truth_present.rightCols(
                               static_cast<Eigen::Index>(tensor.n_periods() - t0)) != 0)
                              .any();
    if (has_post) {
        report = score(std::move(report), truth, truth_present, split);
        const auto horizons = parse_horizons(args.horizons);
        if (!horizons.empty()) {
            report.mape.assign(tensor.n_metrics(), {});
            for (std::size_t k = 0; k < tensor.n_metrics(); ++k) {
                const auto kk = static_cast<Eigen::Index>(k);
                const std::vector<double> forecast(report.trajectories.row(kk).begin(),
                                                   report.trajectories.row(kk).end());
                std::vector<double> actual(truth.row(kk).begin(), truth.row(kk).end());
                // missing actuals are excluded like zero actuals
                for (std::size_t j = 0; j < actual.size(); ++j) {
                    if (!truth_present(kk, static_cast<Eigen::Index>(j))) actual[j] = 0.0;
                }
                report.mape[k] = mape(forecast, actual, t0, horizons);
            }
        }
    }
    if (args.band) report = add_residual_band(std::move(report), panel, *args.band);
    if (!args.save_model.empty()) io::save_model(args.save_model, model);

    const auto& labels = tensor.metric_labels();
    Json forecast = io::to_json(report, labels);
    forecast["treatment"] = tensor.unit_labels()[treatment];
    const fs::path dir(args.out_dir);
    io::write_text(dir / "forecast.json", forecast.dump(2) + "\n");

    const auto observed = observed_fraction(panel);
    Json run;
    run["manifest"] = args.manifest;
    run["treatment"] = tensor.unit_labels()[treatment];
    run["t0"] = t0;
    run["n_units"] = tensor.n_units();
    run["n_periods"] = tensor.n_periods();
    run["n_metrics"] = tensor.n_metrics();
    run["metrics"] = labels;
    run["policy"] = args.model.empty() ? describe(policy) : "loaded:" + args.model;
    if (!cv_json.is_null()) run["cross_validation"] = cv_json;
    run["seed"] = args.seed;
    if (args.observed_fraction) run["masking_observed_fraction"] = *args.observed_fraction;
    run["rho_hat"] = model.rho_hat;
    run["observed_fraction"] = observed.value;
    run["missing_data_warning"] = model.missing_data_warning;
    run["retained_rank"] = model.retained_rank;
    run["spectrum"] = std::vector<double>(model.singular_values.begin(), model.singular_values.end());
    run["control"] = io::to_json(control);
    run["donors"] = std::vector<std::string>();
    for (auto u : panel.donor_units) run["donors"].push_back(tensor.unit_labels()[u]);
    run["scored"] = report.scored;
    if (report.scored) {
        run["pre_mse"] = report.pre_mse;
        run["post_mse"] = report.post_mse;
        run["pre_mse_avg"] = report.pre_mse_avg;
        run["post_mse_avg"] = report.post_mse_avg;
    }
    io::write_text(dir / "report.json", run.dump(2) + "\n");

    out << "treatment " << tensor.unit_labels()[treatment] << ", t0 " << t0 << ", "
        << run["policy"].get<std::string>() << ", retained rank " << model.retained_rank
        << ", rho_hat " << fixed(model.rho_hat, 4) << '\n';
    if (model.missing_data_warning) out << "warning: donor pool has no observed entries\n";
    if (report.scored) {
        for (std::size_t k = 0; k < labels.size(); ++k) {
            out << std::left << std::setw(24) << labels[k] << "pre MSE " << fixed(report.pre_mse[k])
                << "  post MSE " << fixed(report.post_mse[k]) << '\n';
        }
    }
    out << "wrote " << (dir / "forecast.json").string() << " and " << (dir / "report.json").string()
        << '\n';
    return kExitOk;
}

// ---- benchmark ------------------------------------------------------------

struct BenchmarkArgs {
    std::string preset;
    std::string config;
    std::optional<std::size_t> trials;
    std::optional<std::uint64_t> seed;
    std::string comparators;
    bool serial = false;
    std::string out_dir = "out";
};

int cmd_rank_table(const BenchmarkArgs& args, std::ostream& out) {
    const std::size_t seeds = args.trials.value_or(10);
    const std::uint64_t seed = args.seed.value_or(2);
    const auto energy = rank_table(seed, seeds, EnergyCriterion{});
    const auto tolerance = rank_table(seed, seeds, ToleranceCriterion{});

    Json json;
    json["seed"] = seed;
    json["tables"] = {io::to_json(energy), io::to_json(tolerance)};
    const fs::path dir(args.out_dir);
    io::write_text(dir / "rank_table.json", json.dump(2) + "\n");

    std::ostringstream csv;
    csv << "criterion,matrix,mean_rank\n";
    for (const auto* table : {&energy, &tolerance}) {
        for (std::size_t r = 0; r < table->rows.size(); ++r) {
            csv << '"' << table->criterion << "\"," << table->rows[r] << ','
                << fixed(table->mean_rank(r), 2) << '\n';
        }
    }
    io::write_text(dir / "rank_table.csv", csv.str());

    out << std::left << std::setw(30) << "matrix" << std::setw(16) << "energy>=0.995"
        << "numerical rank\n";
    for (std::size_t r = 0; r < energy.rows.size(); ++r) {
        out << std::left << std::setw(30) << energy.rows[r] << std::setw(16)
            << fixed(energy.mean_rank(r), 2) << fixed(tolerance.mean_rank(r), 2) << '\n';
    }
    out << "same params passed " << energy.same_passed << "/" << seeds << " | "
        << tolerance.same_passed << "/" << seeds << "; different params failed "
        << energy.different_failed << "/" << seeds << " | " << tolerance.different_failed << "/"
        << seeds << '\n';
    return kExitOk;
}

int cmd_benchmark(const BenchmarkArgs& args, std::ostream& out) {
    if (args.preset == "diagnostic-table") return cmd_rank_table(args, out);

    ExperimentConfig config;
    if (!args.config.empty()) {
        Json json;
        try {
            json = Json::parse(io::read_text(args.config));
        } catch (const Json::exception& e) {
            throw Error(ErrorCode::ParseError, args.config + ": " + e.what());
        }
        config = config_from_json(json);
    } else {
        config = preset_config(args.preset.empty() ? "smoke" : args.preset);
    }
    if (args.trials) config.n_trials = *args.trials;
    if (args.seed) config.seed = *args.seed;
    if (!args.comparators.empty()) {
        config.comparators.clear();
        for (const auto& name : split_list(args.comparators)) {
            config.comparators.push_back(Comparator::parse(name));
        }
    }
    config.validate();

    const auto result = run_synthetic_benchmark(
        config, args.serial ? kernels::Backend::Serial : kernels::Backend::OpenMP);
    const fs::path dir(args.out_dir);
    io::write_text(dir / "trials.csv", io::trials_csv(result));
    io::write_text(dir / "summary.json", io::summary_json(result).dump(2) + "\n");
    io::write_text(dir / "plot.csv", io::plot_csv(result));

    out << std::left << std::setw(8) << "N" << std::setw(4) << "K" << std::setw(6) << "t0"
        << std::setw(14) << "policy" << std::setw(8) << "rho" << std::setw(12) << "comparator"
        << std::setw(8) << "ok" << "mean post RMSE per metric\n";
    for (const auto& row : result.aggregates) {
        out << std::left << std::setw(8) << row.cell.n_units << std::setw(4) << row.cell.n_metrics
            << std::setw(6) << row.cell.t0 << std::setw(14) << row.cell.policy << std::setw(8)
            << fixed(row.cell.observed_fraction, 2) << std::setw(12) << row.cell.comparator
            << std::setw(8) << (std::to_string(row.n_ok) + "/" + std::to_string(row.n_ok + row.n_failed));
        for (double v : row.mean_post_rmse) out << fixed(v, 4) << ' ';
        out << '\n';
    }
    return kExitOk;
}

// ---- generate -------------------------------------------------------------

struct GenerateArgs {
    std::string generator = "lvm";
    std::size_t donors = 100;
    std::size_t periods = 50;
    std::string alphas = "0.7,0.3";
    bool different_latents = false;
    double noise = 1.0;
    std::size_t rank = 2;
    std::size_t metrics = 2;
    std::uint64_t seed = 1;
    std::optional<double> observed_fraction;
    std::optional<std::size_t> t0;
    std::string out_dir = "out";
};

int cmd_generate(const GenerateArgs& args, std::ostream& out) {
    GroundTruthBundle bundle = [&] {
        if (args.generator == "lvm") {
            LvmSpec spec;
            spec.n_units = args.donors;
            spec.n_periods = args.periods;
            spec.alpha_per_metric.clear();
            for (const auto& a : split_list(args.alphas)) {
                spec.alpha_per_metric.push_back(parse_number(a, "alpha"));
            }
            spec.share_latents = !args.different_latents;
            spec.noise_sd = args.noise;
            spec.seed = args.seed;
            return generate_lvm(spec);
        }
        if (args.generator == "lowrank") {
            return generate_lowrank_tensor(args.donors, args.periods, args.metrics, args.rank,
                                           args.seed);
        }
        throw Error(ErrorCode::InvalidArgument, "unknown generator '" + args.generator + "'");
    }();
    if (args.observed_fraction) {
        SplitMix64 rng = SplitMix64(args.seed).split(kMaskStream);
        bundle.tensor = bundle.tensor.mask_bernoulli(*args.observed_fraction, rng, 0);
    }
    const std::size_t t0 = args.t0.value_or(std::max<std::size_t>(1, args.periods / 5));
    if (t0 < 1 || t0 >= args.periods) {
        throw Error(ErrorCode::InvalidArgument, "t0 outside [1, T-1]");
    }
    io::export_bundle(args.out_dir, bundle, t0);
    out << "wrote " << bundle.tensor.n_metrics() << " metric files, manifest.json and "
        << "ground_truth.json to " << args.out_dir << '\n';
    return kExitOk;
}

int exit_code(const Error& e) { return is_numerical(e.code()) ? kExitNumerical : kExitInput; }

}  // namespace

ThresholdPolicy parse_policy(const std::string& text) {
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::ParseError, "bad policy '" + text + "'");
    const auto kind = text.substr(0, eq);
    const double value = parse_number(text.substr(eq + 1), "policy value");
    ThresholdPolicy policy;
    if (kind == "rank") {
        if (value < 0.0 || value != std::floor(value)) {
            throw Error(ErrorCode::ParseError, "rank must be a nonnegative integer");
        }
        policy = FixedRank{static_cast<std::size_t>(value)};
    } else if (kind == "energy") {
        policy = EnergyFraction{value};
    } else if (kind == "lambda") {
        policy = SingularValueCutoff{value};
    } else {
        throw Error(ErrorCode::ParseError, "unknown policy kind '" + kind + "'");
    }
    validate(policy);
    return policy;
}

ExperimentConfig config_from_json(const Json& json) {
    if (!json.is_object()) throw Error(ErrorCode::ParseError, "config must be a JSON object");
    ExperimentConfig config =
        json.contains("preset") ? preset_config(json.at("preset").get<std::string>()) : ExperimentConfig{};
    try {
        for (const auto& [key, value] : json.items()) {
            if (key == "preset") continue;
            if (key == "name") {
                config.name = value.get<std::string>();
            } else if (key == "generator") {
                const auto g = value.get<std::string>();
                if (g == "lvm") {
                    config.generator = GeneratorKind::Lvm;
                } else if (g == "lowrank") {
                    config.generator = GeneratorKind::LowRank;
                } else {
                    throw Error(ErrorCode::ParseError, "unknown generator '" + g + "'");
                }
            } else if (key == "units") {
                config.unit_grid = value.get<std::vector<std::size_t>>();
            } else if (key == "n_periods") {
                config.n_periods = value.get<std::size_t>();
            } else if (key == "pool_size") {
                config.pool_size = value.get<std::size_t>();
            } else if (key == "noise_sd") {
                config.noise_sd = value.get<double>();
            } else if (key == "share_latents") {
                config.share_latents = value.get<bool>();
            } else if (key == "alphas") {
                config.alpha_grid = value.get<std::vector<std::vector<double>>>();
            } else if (key == "lowrank_rank") {
                config.lowrank_rank = value.get<std::size_t>();
            } else if (key == "lowrank_metrics") {
                config.lowrank_metrics = value.get<std::size_t>();
            } else if (key == "t0_fractions") {
                config.t0_fractions = value.get<std::vector<double>>();
            } else if (key == "policies") {
                config.policies.clear();
                for (const auto& p : value) config.policies.push_back(parse_policy(p.get<std::string>()));
            } else if (key == "weights") {
                config.weight_grid = value.get<std::vector<std::vector<double>>>();
            } else if (key == "observed_fractions") {
                config.observed_fractions = value.get<std::vector<double>>();
            } else if (key == "n_trials") {
                config.n_trials = value.get<std::size_t>();
            } else if (key == "seed") {
                config.seed = value.get<std::uint64_t>();
            } else if (key == "comparators") {
                config.comparators.clear();
                for (const auto& c : value) config.comparators.push_back(Comparator::parse(c.get<std::string>()));
            } else {
                throw Error(ErrorCode::ParseError, "unknown config key '" + key + "'");
            }
        }
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("config: ") + e.what());
    }
    config.validate();
    return config;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Multi-metric robust synthetic control", "mrsc"};
    app.require_subcommand(1);

    ValidateArgs validate_args;
    auto* validate_cmd = app.add_subcommand("validate", "Check a dataset manifest and its metric files");
    validate_cmd->add_option("--manifest", validate_args.manifest, "Dataset manifest")->required();

    DiagnoseArgs diagnose_args;
    auto* diagnose_cmd = app.add_subcommand("diagnose", "Rank-preservation diagnostic and spectra");
    diagnose_cmd->add_option("--manifest", diagnose_args.manifest, "Dataset manifest")->required();
    auto* energy_opt = diagnose_cmd->add_option("--energy", diagnose_args.energy,
                                                "Spectral energy threshold")->capture_default_str();
    diagnose_cmd->add_option("--rank-tol", diagnose_args.rank_tol,
                             "Count s_i > tol * s_1 instead (0 picks max(m,n)*eps)")
        ->excludes(energy_opt);
    diagnose_cmd->add_option("--pass-ratio", diagnose_args.pass_ratio, "Pass iff ratio <= this")->capture_default_str();
    diagnose_cmd->add_option("--out", diagnose_args.out_dir, "Output directory")->capture_default_str();

    ForecastArgs forecast_args;
    auto* forecast_cmd = app.add_subcommand("forecast", "Fit and forecast the treatment unit");
    forecast_cmd->add_option("--manifest", forecast_args.manifest, "Dataset manifest")->required();
    forecast_cmd->add_option("--treatment", forecast_args.treatment, "Treatment unit label");
    forecast_cmd->add_option("--t0", forecast_args.t0, "Intervention time in manifest units");
    add_policy_flags(forecast_cmd, forecast_args.policy);
    forecast_cmd->add_flag("--cv", forecast_args.cross_validate,
                           "Pick the rank by forward-chaining validation");
    forecast_cmd->add_option("--weights", forecast_args.weights, "Per-metric weights w1,...,wK");
    forecast_cmd->add_option("--seed", forecast_args.seed, "Seed for --observed-fraction masking");
    forecast_cmd->add_option("--observed-fraction", forecast_args.observed_fraction,
                             "Mask donor cells, keeping each with this probability");
    forecast_cmd->add_option("--horizons", forecast_args.horizons, "MAPE horizons h1,h2,...");
    forecast_cmd->add_option("--band", forecast_args.band, "Residual band level, e.g. 0.95");
    forecast_cmd->add_option("--save-model", forecast_args.save_model, "Write the denoised model to STEM.{json,bin}");
    forecast_cmd->add_option("--model", forecast_args.model, "Reuse a saved model STEM");
    forecast_cmd->add_option("--out", forecast_args.out_dir, "Output directory")->capture_default_str();

    BenchmarkArgs bench_args;
    auto* bench_cmd = app.add_subcommand("benchmark", "Seeded synthetic sweep");
    auto* preset_opt = bench_cmd->add_option(
        "--preset", bench_args.preset,
        "rmse-sweep, smoke, k-sweep, masking, ablation, exact-recovery or diagnostic-table");
    bench_cmd->add_option("--config", bench_args.config, "JSON sweep config")->excludes(preset_opt);
    bench_cmd->add_option("--trials", bench_args.trials, "Override the trial count");
    bench_cmd->add_option("--seed", bench_args.seed, "Override the sweep seed");
    bench_cmd->add_option("--comparators", bench_args.comparators,
                          "mrsc,rsc,no-denoise,average,restricted:<regex>");
    bench_cmd->add_flag("--serial", bench_args.serial, "Run trials on one thread");
    bench_cmd->add_option("--out", bench_args.out_dir, "Output directory")->capture_default_str();

    GenerateArgs gen_args;
    auto* gen_cmd = app.add_subcommand("generate", "Export a synthetic dataset with ground truth");
    gen_cmd->add_option("--generator", gen_args.generator, "lvm or lowrank")->capture_default_str();
    gen_cmd->add_option("--donors", gen_args.donors, "Donor count")->capture_default_str();
    gen_cmd->add_option("--periods", gen_args.periods, "Period count")->capture_default_str();
    gen_cmd->add_option("--alphas", gen_args.alphas, "LVM alpha per metric")->capture_default_str();
    gen_cmd->add_flag("--different-latents", gen_args.different_latents,
                      "Draw fresh latents per metric");
    gen_cmd->add_option("--noise", gen_args.noise, "LVM noise standard deviation")->capture_default_str();
    gen_cmd->add_option("--rank", gen_args.rank, "Low-rank generator rank")->capture_default_str();
    gen_cmd->add_option("--metrics", gen_args.metrics, "Low-rank generator metric count")->capture_default_str();
    gen_cmd->add_option("--seed", gen_args.seed, "Generator seed")->capture_default_str();
    gen_cmd->add_option("--observed-fraction", gen_args.observed_fraction,
                        "Mask donor cells, keeping each with this probability");
    gen_cmd->add_option("--t0", gen_args.t0, "t0 written to the manifest");
    gen_cmd->add_option("--out", gen_args.out_dir, "Output directory")->capture_default_str();

    std::vector<std::string> argv_storage{"mrsc"};
    argv_storage.insert(argv_storage.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& a : argv_storage) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitInput;
    }

    try {
        if (validate_cmd->parsed()) return cmd_validate(validate_args, out);
        if (diagnose_cmd->parsed()) return cmd_diagnose(diagnose_args, out);
        if (forecast_cmd->parsed()) return cmd_forecast(forecast_args, out);
        if (bench_cmd->parsed()) return cmd_benchmark(bench_args, out);
        if (gen_cmd->parsed()) return cmd_generate(gen_args, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code(e);
    } catch (const fs::filesystem_error& e) {
        err << "error: InvalidArgument: " << e.what() << '\n';
        return kExitInput;
    } catch (const Json::exception& e) {
        err << "error: ParseError: " << e.what() << '\n';
        return kExitInput;
    }
    return kExitInput;
}

}  // namespace mrsc::cli
