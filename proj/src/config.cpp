#include "gpmu/config.hpp"

#include "gpmu/selection.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>

namespace gpmu {

using nlohmann::json;

namespace {

void add(std::vector<Finding>& findings, bool error, std::string where, std::string message) {
    findings.push_back({error, std::move(where), std::move(message)});
}

Vec vec_from(const json& a) {
    Vec v(static_cast<Index>(a.size()));
    for (size_t i = 0; i < a.size(); ++i) v[static_cast<Index>(i)] = a[i].get<double>();
    return v;
}

std::optional<DampingSpec> damping_from(const json& d, const std::string& where,
                                        std::vector<Finding>& findings) {
    const std::string kind = d.value("kind", "");
    if (kind == "rayleigh")
        return DampingSpec{RayleighDamping{d.value("alpha", 0.0), d.value("beta", 0.0)}};
    if (kind == "modal") return DampingSpec{ModalRatioDamping{vec_from(d.at("zeta"))}};
    if (kind == "viscous_ratio") return DampingSpec{ViscousRatioDamping{d.value("zeta", 0.0)}};
    add(findings, true, where + "/kind", "unknown damping kind '" + kind + "'");
    return std::nullopt;
}

std::vector<PriorEntry> priors_from(const json& a, const std::string& where,
                                    std::vector<Finding>& findings) {
    std::vector<PriorEntry> out;
    for (size_t i = 0; i < a.size(); ++i) {
        const json& e = a[i];
        PriorEntry p;
        const std::string kind = e.value("kind", "uniform");
        if (kind == "uniform") p.kind = PriorKind::Uniform;
        else if (kind == "log_uniform") p.kind = PriorKind::LogUniform;
        else add(findings, true, where + "[" + std::to_string(i) + "]",
                 "unknown prior kind '" + kind + "'");
        p.lo = e.value("lo", 0.0);
        p.hi = e.value("hi", 0.0);
        out.push_back(p);
    }
    return out;
}

} // namespace

ExperimentConfig parse_config(const std::string& path, std::vector<Finding>& findings) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot read config '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw config_error("config parse error in '" + path + "': " + e.what());
    }

    ExperimentConfig c;
    c.schema_version = j.value("schema_version", "");
    if (c.schema_version.empty())
        add(findings, true, "/schema_version", "missing schema_version");
    else if (c.schema_version != kConfigSchemaVersion)
        add(findings, true, "/schema_version",
            "unsupported schema_version '" + c.schema_version + "' (expected " +
                kConfigSchemaVersion + ")");
    if (j.contains("seed")) {
        c.seed = j.at("seed").get<std::uint64_t>();
        c.seed_set = true;
    }
    c.out_dir = j.value("out_dir", "");

    if (!j.contains("model")) {
        add(findings, true, "/model", "missing model block");
    } else {
        const json& m = j.at("model");
        if (m.contains("masses")) c.model.masses = vec_from(m.at("masses"));
        else add(findings, true, "/model/masses", "missing masses");
        if (m.contains("stiffnesses")) c.model.stiffnesses = vec_from(m.at("stiffnesses"));
        else add(findings, true, "/model/stiffnesses", "missing stiffnesses");
        if (m.contains("damping")) {
            auto d = damping_from(m.at("damping"), "/model/damping", findings);
            if (d) c.model.damping = *d;
        } else {
            add(findings, true, "/model/damping", "missing damping block");
        }
        c.model.observed_dofs = m.value("observed_dofs", std::vector<int>{});
        if (c.model.observed_dofs.empty())
            add(findings, true, "/model/observed_dofs", "no observed DOFs");
        if (m.contains("input")) {
            const json& inp = m.at("input");
            const std::string kind = inp.value("kind", "force");
            if (kind == "force") c.model.input_kind = InputKind::Force;
            else if (kind == "base_acceleration") c.model.input_kind = InputKind::BaseAcceleration;
            else add(findings, true, "/model/input/kind", "unknown input kind '" + kind + "'");
            c.model.input_dof = inp.value("dof", 0);
        }
        if (m.contains("unknowns")) {
            const json& u = m.at("unknowns");
            c.model.unknown_stories = u.value("stories", std::vector<int>{});
            c.model.theta_as_ratio = u.value("as_ratio", false);
            if (u.contains("priors"))
                c.model.theta_priors = priors_from(u.at("priors"), "/model/unknowns/priors",
                                                   findings);
            else
                add(findings, true, "/model/unknowns/priors",
                    "structural priors are mandatory (no silent defaults)");
            if (u.contains("init")) c.model.theta_init = vec_from(u.at("init"));
            else add(findings, true, "/model/unknowns/init", "missing init");
        } else {
            add(findings, true, "/model/unknowns", "missing unknowns block");
        }
    }

    if (!j.contains("kernel")) {
        add(findings, true, "/kernel", "missing kernel block");
    } else {
        const json& k = j.at("kernel");
        try {
            c.kernel.family = kernel_family_from_string(k.value("family", ""));
        } catch (const config_error& e) {
            add(findings, true, "/kernel/family", e.what());
        }
        c.kernel.order = k.value("order", 1);
        if (k.contains("priors"))
            c.kernel.phi_priors = priors_from(k.at("priors"), "/kernel/priors", findings);
        else
            add(findings, false, "/kernel/priors",
                "using the documented default hyperpriors");
        if (k.contains("init")) c.kernel.phi_init = vec_from(k.at("init"));
        c.kernel.init_omegas_from_modes = k.value("init_omegas_from_modes", true);
    }

    if (!j.contains("data")) {
        add(findings, true, "/data", "missing data block");
    } else {
        const json& d = j.at("data");
        c.data.path = d.value("path", "");
        if (d.contains("synthesis")) {
            const json& s = d.at("synthesis");
            SynthesisSpec spec;
            spec.excitation_std = s.value("excitation_std", 1.0);
            spec.dt = s.value("dt", 0.01);
            spec.duration = s.value("duration", 0.0);
            spec.output_noise_std = s.value("output_noise_std", 0.0);
            if (s.contains("true_stiffnesses"))
                spec.true_stiffnesses = vec_from(s.at("true_stiffnesses"));
            if (s.contains("true_damping"))
                spec.true_damping =
                    damping_from(s.at("true_damping"), "/data/synthesis/true_damping", findings);
            c.data.synthesis = spec;
        }
    }

    if (j.contains("inference")) {
        const json& inf = j.at("inference");
        c.inference.method = inf.value("method", "mpv");
        if (inf.contains("mpv")) {
            const json& m = inf.at("mpv");
            c.inference.mpv.tol = m.value("tol", c.inference.mpv.tol);
            c.inference.mpv.max_iter = m.value("max_iter", c.inference.mpv.max_iter);
            c.inference.mpv.half_step_budget =
                m.value("half_step_budget", c.inference.mpv.half_step_budget);
            c.inference.mpv.restarts = m.value("restarts", c.inference.mpv.restarts);
        }
        if (inf.contains("tmcmc")) {
            const json& t = inf.at("tmcmc");
            c.inference.tmcmc.n_samples = t.value("n_samples", c.inference.tmcmc.n_samples);
            c.inference.tmcmc.proposal_scale =
                t.value("proposal_scale", c.inference.tmcmc.proposal_scale);
            c.inference.tmcmc.target_weight_cov =
                t.value("target_weight_cov", c.inference.tmcmc.target_weight_cov);
            c.inference.tmcmc.max_stages = t.value("max_stages", c.inference.tmcmc.max_stages);
        }
        if (inf.contains("truncation")) {
            const json& t = inf.at("truncation");
            c.inference.truncation.enabled = t.value("enabled", false);
            c.inference.truncation.relative_threshold =
                t.value("relative_threshold", c.inference.truncation.relative_threshold);
        }
    }

    if (j.contains("prediction")) {
        const json& p = j.at("prediction");
        if (p.contains("train_end")) c.prediction.train_end = p.at("train_end").get<double>();
        if (p.contains("gap")) {
            const json& g = p.at("gap");
            if (g.is_array() && g.size() == 2)
                c.prediction.gap = std::make_pair(g[0].get<double>(), g[1].get<double>());
            else add(findings, true, "/prediction/gap", "gap must be [lo, hi]");
        }
        c.prediction.band_k = p.value("band_k", 2.0);
        c.prediction.mixture_thin = p.value("mixture_thin", 1);
    }

    if (j.contains("selection")) {
        const json& s = j.at("selection");
        if (s.contains("candidates")) {
            for (const auto& cand : s.at("candidates")) {
                try {
                    if (cand.is_array())
                        c.selection.candidates.emplace_back(
                            kernel_family_from_string(cand.at(0).get<std::string>()),
                            cand.size() > 1 ? cand.at(1).get<int>() : 1);
                    else
                        c.selection.candidates.emplace_back(
                            kernel_family_from_string(cand.get<std::string>()), 1);
                } catch (const config_error& e) {
                    add(findings, true, "/selection/candidates", e.what());
                }
            }
        }
        c.selection.orders = s.value("orders", std::vector<int>{});
        c.selection.use_predictive = s.value("use_predictive", true);
    }
    return c;
}

std::vector<Finding> validate_config(const ExperimentConfig& c) {
    std::vector<Finding> findings;
    const Index n = c.model.masses.size();
    if (n < 1) add(findings, true, "/model/masses", "at least one story required");
    if (c.model.stiffnesses.size() != n)
        add(findings, true, "/model/stiffnesses", "one stiffness per story required");
    if ((c.model.masses.array() <= 0.0).any())
        add(findings, true, "/model/masses", "masses must be > 0");
    if (c.model.stiffnesses.size() == n && (c.model.stiffnesses.array() <= 0.0).any())
        add(findings, true, "/model/stiffnesses", "stiffnesses must be > 0");
    for (int dof : c.model.observed_dofs)
        if (dof < 0 || dof >= n)
            add(findings, true, "/model/observed_dofs",
                "observed DOF " + std::to_string(dof) + " out of range");
    if (c.model.input_kind == InputKind::Force &&
        (c.model.input_dof < 0 || c.model.input_dof >= n))
        add(findings, true, "/model/input/dof",
            "input DOF " + std::to_string(c.model.input_dof) + " out of range");

    const size_t nu = c.model.unknown_stories.size();
    if (nu == 0) add(findings, true, "/model/unknowns/stories", "no unknown stories listed");
    for (int s : c.model.unknown_stories)
        if (s < 0 || s >= n)
            add(findings, true, "/model/unknowns/stories",
                "story " + std::to_string(s) + " does not exist in the template");
    if (c.model.theta_priors.size() != nu)
        add(findings, true, "/model/unknowns/priors",
            "need exactly " + std::to_string(nu) + " structural priors");
    for (size_t i = 0; i < c.model.theta_priors.size(); ++i) {
        const auto& p = c.model.theta_priors[i];
        if (!(p.lo < p.hi))
            add(findings, true, "/model/unknowns/priors[" + std::to_string(i) + "]",
                "prior bounds must satisfy lo < hi for parameter " + std::to_string(i + 1));
        if (p.kind == PriorKind::LogUniform && p.lo <= 0.0)
            add(findings, true, "/model/unknowns/priors[" + std::to_string(i) + "]",
                "log-uniform prior needs lo > 0");
    }
    if (static_cast<size_t>(c.model.theta_init.size()) != nu)
        add(findings, true, "/model/unknowns/init",
            "need exactly " + std::to_string(nu) + " initial values");
    else
        for (size_t i = 0; i < std::min(nu, c.model.theta_priors.size()); ++i) {
            const auto& p = c.model.theta_priors[i];
            const double v = c.model.theta_init[static_cast<Index>(i)];
            if (!(v >= p.lo && v <= p.hi))
                add(findings, true, "/model/unknowns/init",
                    "init " + std::to_string(v) + " outside the prior for parameter " +
                        std::to_string(i + 1));
        }

    if (c.kernel.order < 1) add(findings, true, "/kernel/order", "order must be >= 1");
    const Index want_phi = kernel_phi_size(c.kernel.family, c.kernel.order);
    if (!c.kernel.phi_priors.empty() &&
        static_cast<Index>(c.kernel.phi_priors.size()) != want_phi)
        add(findings, true, "/kernel/priors",
            "this kernel takes " + std::to_string(want_phi) + " hyperparameters");
    if (c.kernel.phi_init.size() != 0 && c.kernel.phi_init.size() != want_phi)
        add(findings, true, "/kernel/init",
            "this kernel takes " + std::to_string(want_phi) + " hyperparameters");

    const bool has_path = !c.data.path.empty();
    const bool has_synth = c.data.synthesis.has_value();
    if (has_path == has_synth)
        add(findings, true, "/data", "exactly one of data.path / data.synthesis required");
    if (has_synth) {
        const auto& s = *c.data.synthesis;
        if (s.dt <= 0.0) add(findings, true, "/data/synthesis/dt", "dt must be > 0");
        if (s.duration <= 0.0)
            add(findings, true, "/data/synthesis/duration", "duration must be > 0");
        if (s.dt > 0.0 && s.duration > 0.0 && s.duration / s.dt < 8)
            add(findings, true, "/data/synthesis", "record shorter than 8 samples");
        if (s.excitation_std <= 0.0)
            add(findings, true, "/data/synthesis/excitation_std", "excitation std must be > 0");
        if (s.true_stiffnesses &&
            (s.true_stiffnesses->size() != n || (s.true_stiffnesses->array() <= 0.0).any()))
            add(findings, true, "/data/synthesis/true_stiffnesses",
                "need one positive stiffness per story");
        const double T = s.duration;
        if (c.prediction.train_end && !(*c.prediction.train_end > 0.0 &&
                                        *c.prediction.train_end < T))
            add(findings, true, "/prediction/train_end",
                "split at " + std::to_string(*c.prediction.train_end) +
                    " s lies outside the record (0, " + std::to_string(T) + ")");
        if (c.prediction.gap) {
            const auto [lo, hi] = *c.prediction.gap;
            if (!(lo >= 0.0 && lo < hi && hi <= T))
                add(findings, true, "/prediction/gap",
                    "gap [" + std::to_string(lo) + ", " + std::to_string(hi) +
                        ") must lie inside the record");
        }
    }

    if (c.inference.method != "mpv" && c.inference.method != "tmcmc")
        add(findings, true, "/inference/method", "method must be 'mpv' or 'tmcmc'");
    if (c.inference.mpv.tol <= 0.0) add(findings, true, "/inference/mpv/tol", "tol must be > 0");
    if (c.inference.mpv.max_iter < 1)
        add(findings, true, "/inference/mpv/max_iter", "max_iter must be >= 1");
    if (c.inference.method == "tmcmc") {
        TmcmcConfig t = c.inference.tmcmc;
        t.seed = c.seed; // placeholder so only the structural fields get checked
        try {
            t.validate();
        } catch (const config_error& e) {
            add(findings, true, "/inference/tmcmc", e.what());
        }
    }
    try {
        c.inference.truncation.validate();
    } catch (const config_error& e) {
        add(findings, true, "/inference/truncation", e.what());
    }
    if (c.prediction.band_k <= 0.0)
        add(findings, true, "/prediction/band_k", "band_k must be > 0");
    if (c.prediction.mixture_thin < 1)
        add(findings, true, "/prediction/mixture_thin", "mixture_thin must be >= 1");
    for (int o : c.selection.orders)
        if (o < 1) add(findings, true, "/selection/orders", "orders must be >= 1");
    if (!c.seed_set)
        add(findings, false, "/seed", "no seed in the config; require --seed at run time");
    if (c.out_dir.empty())
        add(findings, false, "/out_dir", "no out_dir in the config; require --out at run time");
    return findings;
}

ShearBuildingModel template_model(const ModelBlock& block) {
    ShearBuildingModel m;
    m.masses = block.masses;
    m.story_stiffnesses = block.stiffnesses;
    m.damping = block.damping;
    m.observed_dofs = block.observed_dofs;
    m.input_kind = block.input_kind;
    m.input_dof = block.input_dof;
    m.validate();
    return m;
}

std::vector<PriorEntry> default_phi_priors(KernelFamily family, int order) {
    const PriorEntry sf2{PriorKind::LogUniform, 1e-8, 1e2};
    const PriorEntry il2{PriorKind::LogUniform, 1e-6, 1e4};
    const PriorEntry omega{PriorKind::LogUniform, 1e-1, 50.0};
    const PriorEntry sn2{PriorKind::LogUniform, 1e-10, 1.0};
    std::vector<PriorEntry> out;
    switch (family) {
    case KernelFamily::GWN: break;
    case KernelFamily::SE: out = {sf2, il2}; break;
    case KernelFamily::PE: out = {sf2, il2, omega}; break;
    case KernelFamily::MMTE:
        for (int k = 0; k < order; ++k) {
            out.push_back(sf2);
            out.push_back(omega);
            out.push_back(il2);
        }
        break;
    }
    out.push_back(sn2);
    return out;
}

namespace {

Vec default_phi_init_for(const ExperimentConfig& config, KernelFamily family, int order) {
    const double sf2 = 1e-2, il2 = 1.0, sn2 = 1e-2;
    switch (family) {
    case KernelFamily::GWN: {
        Vec v(1);
        v << sn2;
        return v;
    }
    case KernelFamily::SE: {
        Vec v(3);
        v << sf2, il2, sn2;
        return v;
    }
    case KernelFamily::PE: {
        const ModalResult modes = modal_analysis(template_model(config.model));
        Vec v(4);
        v << sf2, il2, std::max(modes.frequencies[0], 0.2), sn2;
        return v;
    }
    case KernelFamily::MMTE: {
        const ModalResult modes = modal_analysis(template_model(config.model));
        if (config.kernel.init_omegas_from_modes)
            return mmte_initial_phi(modes.frequencies, order, sf2, il2, sn2);
        Vec omegas(order);
        for (int k = 0; k < order; ++k) omegas[k] = 1.0 + 2.0 * k;
        return mmte_initial_phi(omegas, order, sf2, il2, sn2);
    }
    }
    throw config_error("unknown kernel family");
}

} // namespace

Vec default_phi_init(const ExperimentConfig& config) {
    return default_phi_init_for(config, config.kernel.family, config.kernel.order);
}

InferenceProblem build_problem(const ExperimentConfig& config, TimeSeriesDataset dataset,
                               std::optional<KernelFamily> family, std::optional<int> order) {
    const KernelFamily fam = family.value_or(config.kernel.family);
    const int ord = order.value_or(config.kernel.order);

    InferenceProblem p;
    p.dataset = std::move(dataset);
    const ShearBuildingModel nominal = template_model(config.model);
    p.build_model = config.model.theta_as_ratio
                        ? stiffness_ratio_builder(nominal, config.model.unknown_stories)
                        : stiffness_builder(nominal, config.model.unknown_stories);
    p.build_kernel = kernel_builder(fam, ord);
    p.n_theta = static_cast<Index>(config.model.unknown_stories.size());

    p.prior.entries = config.model.theta_priors;
    std::vector<PriorEntry> phi_priors;
    if (!config.kernel.phi_priors.empty() && fam == config.kernel.family &&
        ord == config.kernel.order)
        phi_priors = config.kernel.phi_priors;
    else
        phi_priors = default_phi_priors(fam, ord);
    p.prior.entries.insert(p.prior.entries.end(), phi_priors.begin(), phi_priors.end());
    p.prior.validate();

    for (size_t i = 0; i < config.model.unknown_stories.size(); ++i) {
        ParameterInfo info;
        const std::string story = std::to_string(config.model.unknown_stories[i] + 1);
        info.name = config.model.theta_as_ratio ? "theta" + story : "k" + story;
        info.unit = config.model.theta_as_ratio ? "-" : "N/m";
        info.transform = Transform::Identity;
        p.parameter_map.push_back(info);
    }
    const auto phi_map = kernel_parameter_map(fam, ord);
    p.parameter_map.insert(p.parameter_map.end(), phi_map.begin(), phi_map.end());
    p.truncation = config.inference.truncation;
    p.validate();
    return p;
}

ParameterSplit initial_split(const ExperimentConfig& config, std::optional<KernelFamily> family,
                             std::optional<int> order) {
    const KernelFamily fam = family.value_or(config.kernel.family);
    const int ord = order.value_or(config.kernel.order);
    ParameterSplit s;
    s.theta = config.model.theta_init;
    if (config.kernel.phi_init.size() > 0 && fam == config.kernel.family &&
        ord == config.kernel.order)
        s.phi = config.kernel.phi_init;
    else
        s.phi = default_phi_init_for(config, fam, ord);
    for (size_t i = 0; i < config.model.unknown_stories.size(); ++i) {
        const std::string story = std::to_string(config.model.unknown_stories[i] + 1);
        s.parameter_map.push_back({config.model.theta_as_ratio ? "theta" + story : "k" + story,
                                   config.model.theta_as_ratio ? "-" : "N/m",
                                   Transform::Identity});
    }
    const auto phi_map = kernel_parameter_map(fam, ord);
    s.parameter_map.insert(s.parameter_map.end(), phi_map.begin(), phi_map.end());
    s.validate();
    return s;
}

} // namespace gpmu
