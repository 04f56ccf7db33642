#include "gpmu/pipeline.hpp"

#include "gpmu/diagnostics.hpp"
#include "gpmu/io.hpp"
#include "gpmu/prediction.hpp"
#include "gpmu/rng.hpp"
#include "gpmu/selection.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

namespace gpmu {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Per-stage RNG streams derived from the single config seed (same derivation
// as SplitRng::split, but from the raw seed value).
constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
std::uint64_t stage_seed(std::uint64_t seed, std::uint64_t stage) {
    return mix64(seed + kGolden * (stage + 1));
}
constexpr std::uint64_t kStageSynthesize = 1;
constexpr std::uint64_t kStageTmcmc = 2;
constexpr std::uint64_t kStageMpvRestarts = 3;
constexpr std::uint64_t kStageSelect = 16; // + candidate index

struct LockGuard {
    fs::path path;
    bool held = false;

    bool acquire() {
        std::error_code ec;
        if (fs::exists(path, ec)) return false;
        std::ofstream f(path);
        if (!f) return false;
        f << "gpmu run lock\n";
        held = true;
        return true;
    }
    ~LockGuard() {
        if (held) {
            std::error_code ec;
            fs::remove(path, ec);
        }
    }
};

struct ArtifactLog {
    fs::path dir;
    std::vector<ManifestEntry> entries;

    std::string file(const std::string& name) {
        entries.push_back({name, ""});
        return (dir / name).string();
    }
    void finalize_hashes() {
        for (auto& e : entries) e.hash = file_hash((dir / e.path).string());
    }
};

struct Stage {
    ExperimentConfig config;
    RunOptions options;
    fs::path out;
    ArtifactLog artifacts;

    void say(const std::string& msg) const {
        if (!options.quiet) std::cout << "[gpmu] " << msg << "\n";
    }
};

ShearBuildingModel truth_model(const ExperimentConfig& c) {
    ShearBuildingModel truth = template_model(c.model);
    const SynthesisSpec& s = *c.data.synthesis;
    if (s.true_stiffnesses) truth.story_stiffnesses = *s.true_stiffnesses;
    if (s.true_damping) truth.damping = *s.true_damping;
    truth.validate();
    return truth;
}

TimeSeriesDataset load_dataset(const Stage& st) {
    const ExperimentConfig& c = st.config;
    if (!c.data.path.empty()) {
        fs::path p = c.data.path;
        if (!fs::exists(p)) {
            // relative paths also resolve against the config file's directory
            fs::path beside = fs::path(st.options.config_path).parent_path() / c.data.path;
            if (fs::exists(beside)) p = beside;
        }
        if (!fs::exists(p))
            throw config_error("dataset not found: " + c.data.path);
        return read_dataset(p.string());
    }
    // synthesis-based configs: prefer the artifact a prior `synthesize` run
    // left in the output directory, otherwise regenerate (same seed, same data)
    const fs::path artifact = st.out / "dataset.csv";
    if (fs::exists(artifact)) return read_dataset(artifact.string());
    const SynthesisSpec& s = *c.data.synthesis;
    return synthesize_dataset(truth_model(c), {s.excitation_std, stage_seed(c.seed, kStageSynthesize)},
                              s.dt, s.duration, s.output_noise_std);
}

struct StageData {
    TimeSeriesDataset full;
    TimeSeriesDataset train;
    TimeSeriesDataset heldout; // empty input when no split configured
    bool gapped = false;
};

StageData split_stage_data(const ExperimentConfig& c, TimeSeriesDataset full) {
    StageData sd;
    sd.full = std::move(full);
    if (c.prediction.gap) {
        auto [observed, gap] = excise(sd.full, c.prediction.gap->first, c.prediction.gap->second);
        sd.train = std::move(observed);
        sd.heldout = std::move(gap);
        sd.gapped = true;
    } else if (c.prediction.train_end) {
        auto [train, heldout] = split_at(sd.full, *c.prediction.train_end);
        sd.train = std::move(train);
        sd.heldout = std::move(heldout);
    } else {
        sd.train = sd.full;
    }
    if (sd.train.n() < 8) throw config_error("training split leaves fewer than 8 samples");
    return sd;
}

InferenceProblem stage_problem(const ExperimentConfig& c, const StageData& sd,
                               std::optional<KernelFamily> family = std::nullopt,
                               std::optional<int> order = std::nullopt) {
    InferenceProblem p = build_problem(c, sd.train, family, order);
    if (sd.gapped) // non-contiguous grid: simulate the full history, keep observed rows
        p.response_override = subset_response(sd.full, sd.train);
    return p;
}

MpvOptions stage_mpv_options(const ExperimentConfig& c) {
    MpvOptions o = c.inference.mpv;
    o.restart_seed = stage_seed(c.seed, kStageMpvRestarts);
    return o;
}

TmcmcConfig stage_tmcmc_config(const ExperimentConfig& c, std::uint64_t stream) {
    TmcmcConfig t = c.inference.tmcmc;
    t.seed = stage_seed(c.seed, stream);
    return t;
}

std::string score_id(KernelFamily family, int order) {
    std::string id = to_string(family);
    if (family == KernelFamily::MMTE) id += "_m" + std::to_string(order);
    return id;
}

void require_artifact(const fs::path& p) {
    if (!fs::exists(p))
        throw config_error("missing artifact: " + p.string() +
                           " (run the producing stage first)");
}

// --- stages -----------------------------------------------------------------

void run_synthesize(Stage& st) {
    const ExperimentConfig& c = st.config;
    if (!c.data.synthesis)
        throw config_error("synthesize needs a data.synthesis block, not a dataset path");
    const SynthesisSpec& s = *c.data.synthesis;
    const std::uint64_t seed = stage_seed(c.seed, kStageSynthesize);
    TimeSeriesDataset data =
        synthesize_dataset(truth_model(c), {s.excitation_std, seed}, s.dt, s.duration,
                           s.output_noise_std);
    const std::string description =
        std::to_string(c.model.masses.size()) + "-story shear frame, GWN excitation std " +
        format_double(s.excitation_std) + ", output noise std " +
        format_double(s.output_noise_std);
    write_dataset(st.artifacts.file("dataset.csv"), data, description, seed);
    st.artifacts.entries.push_back({"dataset.csv.meta.json", ""});
    st.say("synthesize: " + std::to_string(data.n()) + " rows, dt = " + format_double(data.dt) +
           " s, " + std::to_string(data.n_outputs()) + " output channel(s)");
}

void run_infer_mpv(Stage& st) {
    const ExperimentConfig& c = st.config;
    StageData sd = split_stage_data(c, load_dataset(st));
    InferenceProblem problem = stage_problem(c, sd);
    LaplaceSummary summary = find_mpv(problem, initial_split(c), stage_mpv_options(c));
    summary = laplace_covariance(problem, summary);
    write_laplace_summary(st.artifacts.file("mpv.json"), summary);
    std::string line = "infer-mpv:";
    for (Index i = 0; i < summary.mpv.n_theta(); ++i)
        line += " " + summary.mpv.parameter_map[static_cast<size_t>(i)].name + " = " +
                format_double(summary.mpv.theta[i]);
    line += summary.converged ? " (converged)" : " (NOT converged)";
    st.say(line);
}

void run_infer_tmcmc(Stage& st) {
    const ExperimentConfig& c = st.config;
    StageData sd = split_stage_data(c, load_dataset(st));
    InferenceProblem problem = stage_problem(c, sd);
    PosteriorSamples samples = tmcmc_sample(problem, stage_tmcmc_config(c, kStageTmcmc));
    write_posterior_samples(st.artifacts.file("samples.csv"), st.artifacts.file("posterior.json"),
                            samples);
    st.say("infer-tmcmc: " + std::to_string(samples.n_samples()) + " samples, " +
           std::to_string(samples.stage_betas.size() - 1) + " stages, log evidence = " +
           format_double(samples.log_evidence));
}

// Prediction target rows for predict/reconstruct: held-out (or gap) span.
TimeSeriesDataset prediction_target(const StageData& sd) {
    if (sd.heldout.n() == 0)
        throw config_error("prediction needs a train_end split or a gap in the config");
    TimeSeriesDataset target = sd.heldout;
    target.output.resize(0, target.output.cols()); // targets are input-only
    return target;
}

PredictiveDistribution stage_predict(Stage& st, const StageData& sd,
                                     const TimeSeriesDataset& target) {
    const ExperimentConfig& c = st.config;
    InferenceProblem problem = stage_problem(c, sd);
    if (c.inference.method == "tmcmc") {
        const fs::path table = st.out / "samples.csv", summary = st.out / "posterior.json";
        require_artifact(table);
        require_artifact(summary);
        PosteriorSamples samples = read_posterior_samples(table.string(), summary.string());
        MixtureOptions mo;
        mo.thin = c.prediction.mixture_thin;
        return mixture_predict(problem, samples, target, mo);
    }
    const fs::path mpv_path = st.out / "mpv.json";
    require_artifact(mpv_path);
    LaplaceSummary summary = read_laplace_summary(mpv_path.string());
    return map_predict(problem, summary, target);
}

json band_metrics(const PredictiveDistribution& pred, const TimeSeriesDataset& truth,
                  double band_k) {
    const Index n = truth.n();
    const int channels = static_cast<int>(truth.n_outputs());
    Index covered = 0, total = 0;
    double se = 0.0, se_zero = 0.0;
    for (Index i = 0; i < n; ++i)
        for (int ch = 0; ch < channels; ++ch) {
            const Index k = i * channels + ch;
            const double y = truth.output(i, ch), mu = pred.mean[k],
                         sd = std::sqrt(std::max(pred.variance[k], 0.0));
            covered += std::abs(y - mu) <= band_k * sd ? 1 : 0;
            ++total;
            se += (y - mu) * (y - mu);
            se_zero += y * y; // RMS of predicting the bare model response
        }
    json m;
    m["band_k"] = band_k;
    m["coverage"] = total ? static_cast<double>(covered) / static_cast<double>(total) : 0.0;
    m["rms_error"] = std::sqrt(se / static_cast<double>(std::max<Index>(total, 1)));
    m["rms_residual"] = std::sqrt(se_zero / static_cast<double>(std::max<Index>(total, 1)));
    m["n_points"] = static_cast<std::int64_t>(total);
    return m;
}

void run_predict(Stage& st, const std::string& artifact_name) {
    const ExperimentConfig& c = st.config;
    StageData sd = split_stage_data(c, load_dataset(st));
    const TimeSeriesDataset target = prediction_target(sd);
    PredictiveDistribution pred = stage_predict(st, sd, target);
    write_predictive(st.artifacts.file(artifact_name + ".csv"), pred, c.prediction.band_k);
    if (sd.heldout.has_output()) {
        json metrics = band_metrics(pred, sd.heldout, c.prediction.band_k);
        std::ofstream f(st.artifacts.file(artifact_name + "_metrics.json"));
        f << metrics.dump(2) << "\n";
        st.say(artifact_name + ": coverage = " + format_double(metrics["coverage"].get<double>()) +
               ", rms error = " + format_double(metrics["rms_error"].get<double>()));
    } else {
        st.say(artifact_name + ": " + std::to_string(target.n()) + " rows predicted");
    }
}

void run_select(Stage& st) {
    const ExperimentConfig& c = st.config;
    if (c.selection.candidates.empty() && c.selection.orders.empty())
        throw config_error("select needs selection.candidates and/or selection.orders");
    StageData sd = split_stage_data(c, load_dataset(st));

    if (!c.selection.candidates.empty()) {
        const bool predictive = c.selection.use_predictive && sd.heldout.has_output();
        std::vector<ModelClassScore> scores;
        for (size_t idx = 0; idx < c.selection.candidates.size(); ++idx) {
            const auto [family, order] = c.selection.candidates[idx];
            InferenceProblem problem = stage_problem(c, sd, family, order);
            const ParameterSplit init = initial_split(c, family, order);
            LaplaceSummary summary = find_mpv(problem, init, stage_mpv_options(c));

            ModelClassScore score;
            score.model_id = score_id(family, order);
            score.bic = bic_score(summary.log_likelihood_at_mpv,
                                  static_cast<int>(problem.prior.dim()),
                                  dataset_grid(problem.dataset).dim());
            if (c.inference.method == "tmcmc") {
                PosteriorSamples samples =
                    tmcmc_sample(problem, stage_tmcmc_config(c, kStageSelect + idx));
                score.log_evidence = samples.log_evidence;
                score.evidence_provenance = "tmcmc";
                if (predictive)
                    score.log_posterior_predictive = log_posterior_predictive_score(
                        problem, samples, sd.heldout, c.prediction.mixture_thin);
            } else {
                summary = laplace_covariance(problem, summary);
                score.log_evidence = laplace_evidence(problem, summary);
                score.evidence_provenance = "laplace";
                if (predictive)
                    score.log_posterior_predictive =
                        log_predictive_density(problem, summary.mpv.packed(), sd.heldout);
            }
            write_laplace_summary(st.artifacts.file("mpv_" + score.model_id + ".json"), summary);
            scores.push_back(std::move(score));
        }
        const Vec probs = model_posterior_probabilities(scores, predictive);
        write_score_table(st.artifacts.file("scores.csv"), scores, probs);
        Index best;
        probs.maxCoeff(&best);
        st.say("select: " + scores[static_cast<size_t>(best)].model_id +
               " ranks first (posterior probability " + format_double(probs[best]) + ")");
    }

    if (!c.selection.orders.empty()) {
        OrderedProblemFactory factory = [&](int order) {
            return std::make_pair(stage_problem(c, sd, KernelFamily::MMTE, order),
                                  initial_split(c, KernelFamily::MMTE, order));
        };
        OrderSelectionResult result =
            select_mmte_order(factory, c.selection.orders, stage_mpv_options(c));
        Mat cols(static_cast<Index>(result.candidates.size()), 4);
        for (size_t i = 0; i < result.candidates.size(); ++i) {
            const OrderCandidate& cand = result.candidates[i];
            cols.row(static_cast<Index>(i)) << static_cast<double>(cand.order),
                cand.failed ? std::nan("") : cand.bic,
                cand.failed ? std::nan("") : cand.log_lik_at_mpv,
                cand.order == result.chosen_order ? 1.0 : 0.0;
        }
        write_table(st.artifacts.file("orders.csv"), {"order", "bic", "log_lik_at_mpv", "chosen"},
                    cols);
        st.say("select: BIC chooses " + std::to_string(result.chosen_order) + " mode(s)");
    }
}

void run_diagnose(Stage& st) {
    const ExperimentConfig& c = st.config;
    const TimeSeriesDataset data = load_dataset(st);
    if (!data.has_output()) throw config_error("diagnose needs observed outputs");
    const ShearBuildingModel model =
        (c.model.theta_as_ratio ? stiffness_ratio_builder(template_model(c.model),
                                                          c.model.unknown_stories)
                                : stiffness_builder(template_model(c.model),
                                                    c.model.unknown_stories))(c.model.theta_init);
    const Mat response = simulate_response(model, data.input, data.dt);
    const Index max_lag = std::min<Index>(data.n() - 1, data.n() / 2);
    for (Index ch = 0; ch < data.n_outputs(); ++ch) {
        const int label = ch < static_cast<Index>(data.channel_labels.size())
                              ? data.channel_labels[static_cast<size_t>(ch)] + 1
                              : static_cast<int>(ch) + 1;
        const std::string suffix = "_dof" + std::to_string(label) + ".csv";
        ResidualSeries res{data.output.col(ch) - response.col(ch), data.dt,
                           "dof" + std::to_string(label)};
        write_acf(st.artifacts.file("residual_acf" + suffix), sample_acf(res, max_lag), data.dt);
        const Psd psd = periodogram(res);
        write_psd(st.artifacts.file("residual_psd" + suffix), psd);
        const auto peaks = peak_pick(psd, 10);
        Mat cols(static_cast<Index>(peaks.size()), 2);
        for (size_t i = 0; i < peaks.size(); ++i)
            cols.row(static_cast<Index>(i)) << peaks[i].freq_hz, peaks[i].power;
        write_table(st.artifacts.file("residual_peaks" + suffix), {"freq_hz", "power"}, cols);
        if (!peaks.empty())
            st.say("diagnose dof" + std::to_string(label) + ": dominant residual peak at " +
                   format_double(peaks.front().freq_hz) + " Hz");
    }
}

void run_report(Stage& st) {
    const fs::path& out = st.out;
    std::vector<std::string> known = {"dataset.csv",       "mpv.json",        "samples.csv",
                                      "posterior.json",    "predictive.csv",  "reconstruction.csv",
                                      "scores.csv",        "orders.csv"};
    std::vector<std::string> present;
    for (const auto& name : known)
        if (fs::exists(out / name)) present.push_back(name);
    for (const auto& entry : fs::directory_iterator(out)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("residual_", 0) == 0 || name.rfind("mpv_", 0) == 0 ||
            name.find("_metrics.json") != std::string::npos)
            present.push_back(name);
    }
    if (present.empty())
        throw config_error("missing artifact: no stage outputs under " + out.string() +
                           " (run synthesize/infer/predict first)");
    std::sort(present.begin(), present.end());

    std::ofstream rep(st.artifacts.file("report.txt"));
    rep << "gpmu run report\n================\n\n";
    rep << "output directory: " << out.string() << "\n";
    rep << "artifacts found: " << present.size() << "\n\n";
    for (const auto& name : present)
        rep << "  " << name << "  (hash " << file_hash((out / name).string()) << ")\n";
    rep << "\n";

    if (fs::exists(out / "dataset.csv")) {
        const TimeSeriesDataset d = read_dataset((out / "dataset.csv").string());
        rep << "dataset: " << d.n() << " rows, dt = " << format_double(d.dt) << " s, "
            << d.n_inputs() << " input(s), " << d.n_outputs() << " output channel(s)\n\n";
    }
    for (const auto& name : present) {
        if (name.rfind("mpv", 0) != 0 || name.rfind(".json") == std::string::npos) continue;
        const LaplaceSummary s = read_laplace_summary((out / name).string());
        rep << name << ": " << (s.converged ? "converged" : "NOT converged") << " in "
            << s.iterations << " sweep(s), log likelihood " << format_double(s.log_likelihood_at_mpv)
            << "\n";
        const Vec sds = s.covariance.size() ? s.standard_deviations() : Vec();
        const Vec x = s.mpv.packed();
        for (Index i = 0; i < x.size(); ++i) {
            rep << "    " << s.mpv.parameter_map[static_cast<size_t>(i)].name << " = "
                << format_double(x[i]);
            if (sds.size() == x.size()) rep << "  (sd " << format_double(sds[i]) << ")";
            rep << "\n";
        }
    }
    if (fs::exists(out / "posterior.json") && fs::exists(out / "samples.csv")) {
        const PosteriorSamples ps =
            read_posterior_samples((out / "samples.csv").string(), (out / "posterior.json").string());
        rep << "posterior: " << ps.n_samples() << " samples, log evidence "
            << format_double(ps.log_evidence) << ", " << ps.stage_betas.size() - 1
            << " tempering stage(s)\n";
        const auto [mean, cov] = sample_moments(ps);
        for (Index i = 0; i < mean.size(); ++i)
            rep << "    " << ps.parameter_names[static_cast<size_t>(i)] << " = "
                << format_double(mean[i]) << "  (sd " << format_double(std::sqrt(cov(i, i)))
                << ")\n";
    }
    if (fs::exists(out / "scores.csv"))
        rep << "model-class scores and posterior probabilities: scores.csv\n";
    if (fs::exists(out / "orders.csv")) {
        const Table t = read_table((out / "orders.csv").string());
        for (Index i = 0; i < t.columns.rows(); ++i)
            if (t.columns(i, 3) == 1.0)
                rep << "BIC order selection: " << static_cast<int>(t.columns(i, 0))
                    << " mode(s)\n";
    }
    rep << "\n";
    st.say("report: " + std::to_string(present.size()) + " artifact(s) summarized");
}

} // namespace

int run_command(const std::string& command, const RunOptions& options) {
    Eigen::setNbThreads(std::max(options.threads, 1));

    static const std::vector<std::string> commands = {"synthesize", "infer-mpv", "infer-tmcmc",
                                                      "predict",    "reconstruct", "select",
                                                      "diagnose",   "report"};
    if (std::find(commands.begin(), commands.end(), command) == commands.end()) {
        std::cerr << "error: unknown command '" << command << "'\n";
        return kExitValidation;
    }

    Stage st;
    st.options = options;
    std::vector<Finding> findings;
    try {
        st.config = parse_config(options.config_path, findings);
    } catch (const config_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    }
    if (options.seed_override) {
        st.config.seed = *options.seed_override;
        st.config.seed_set = true;
    }
    if (!options.out_dir.empty()) st.config.out_dir = options.out_dir;

    const auto more = validate_config(st.config);
    findings.insert(findings.end(), more.begin(), more.end());
    bool fatal = false;
    for (const auto& f : findings) {
        // missing seed/out_dir are only warnings while overrides can still fill them
        const bool is_error =
            f.error || (f.where == "/seed" && !st.config.seed_set) ||
            (f.where == "/out_dir" && st.config.out_dir.empty());
        if (is_error) {
            std::cerr << "error: " << f.where << ": " << f.message << "\n";
            fatal = true;
        } else if (!options.quiet) {
            std::cerr << "warning: " << f.where << ": " << f.message << "\n";
        }
    }
    if (!st.config.seed_set && !fatal) {
        std::cerr << "error: /seed: no seed in config and no --seed given\n";
        fatal = true;
    }
    if (st.config.out_dir.empty() && !fatal) {
        std::cerr << "error: /out_dir: no out_dir in config and no --out given\n";
        fatal = true;
    }
    if (fatal) return kExitValidation;

    st.out = st.config.out_dir;
    std::error_code ec;
    fs::create_directories(st.out, ec);
    if (ec) {
        std::cerr << "error: cannot create output directory " << st.out << ": " << ec.message()
                  << "\n";
        return kExitValidation;
    }
    LockGuard lock{st.out / ".lock"};
    if (!lock.acquire()) {
        std::cerr << "error: another run holds " << (st.out / ".lock")
                  << " (remove it if stale)\n";
        return kExitValidation;
    }
    st.artifacts.dir = st.out;

    const auto t0 = std::chrono::steady_clock::now();
    try {
        if (command == "synthesize") run_synthesize(st);
        else if (command == "infer-mpv") run_infer_mpv(st);
        else if (command == "infer-tmcmc") run_infer_tmcmc(st);
        else if (command == "predict") run_predict(st, "predictive");
        else if (command == "reconstruct") {
            if (!st.config.prediction.gap)
                throw config_error("reconstruct needs a prediction.gap interval");
            run_predict(st, "reconstruction");
        } else if (command == "select") run_select(st);
        else if (command == "diagnose") run_diagnose(st);
        else run_report(st);
    } catch (const config_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) { // invalid_model, numerical_error, io failures
        std::cerr << "error: " << command << " failed: " << e.what() << "\n";
        json diag;
        diag["command"] = command;
        diag["error"] = e.what();
        std::ofstream f(st.out / "failure.json");
        f << diag.dump(2) << "\n";
        return kExitNumerical;
    }
    const auto t1 = std::chrono::steady_clock::now();

    st.artifacts.finalize_hashes();
    RunManifest manifest;
    manifest.command = command;
    manifest.config_hash = file_hash(options.config_path);
    manifest.seed = st.config.seed;
    manifest.schema_version = st.config.schema_version;
    manifest.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
    manifest.artifacts = st.artifacts.entries;
    write_manifest((st.out / "manifest.json").string(), manifest);
    return kExitOk;
}

} // namespace gpmu
