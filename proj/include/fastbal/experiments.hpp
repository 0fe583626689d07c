#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "fastbal/choice.hpp"
#include "fastbal/diagnostics.hpp"
#include "fastbal/errors.hpp"
#include "fastbal/noise.hpp"
#include "fastbal/numeric.hpp"
#include "fastbal/regularization.hpp"
#include "fastbal/rng.hpp"
#include "fastbal/spectral.hpp"

#include "json.hpp"

namespace fastbal {

// ---------------------------------------------------------------------------
// Configuration

struct ProblemSpec {
    std::optional<std::string> file; // load instead of generating
    DecaySpec decay = GeometricDecay{0.7};
    std::size_t K = 400;
    double scale = 1.0;
    SmoothnessSpec smooth = PowerSmoothness{0.25};
    double jitter = 0.1;
    std::optional<std::uint64_t> solution_seed; // derived from master seed when absent
    std::string label;
};

enum class NoiseModelKind { deterministic, white, colored };

struct NoiseConfig {
    NoiseModelKind model = NoiseModelKind::white;
    std::vector<double> delta{0.01};  // one batch sweep per entry
    bool delta_is_relative = true;    // delta_abs = delta * ||y_exact||
    std::string policy = "sphere_random"; // deterministic only
    int n_ref = 30;                       // aligned policy reference level
    std::optional<double> sigma_exponent; // colored: mode_std ∝ sigma^e, energy-matched
    std::optional<std::vector<double>> mode_std; // colored: explicit stds (single level)
};

struct ExperimentConfig {
    std::string label = "experiment";
    std::vector<ProblemSpec> problems;
    std::optional<double> grid_q0; // default: sigma_1^2 per instance
    double grid_q = 0.5;
    int grid_n_max = 60;
    FilterKind filter = FilterKind::tikhonov;
    NoiseConfig noise;
    std::vector<std::string> methods{"fast", "lepskij", "morozov"};
    BalancingConfig balancing;
    double morozov_tau = 1.0;
    std::size_t replicates = 200;
    std::uint64_t seed = 1;
    unsigned threads = 0; // 0 = hardware concurrency
};

/// The Monte Carlo suite used by default: three operators spanning mild and
/// severe ill-posedness crossed with three solution smoothness classes.
inline ExperimentConfig default_suite_config(std::uint64_t seed = 20260810) {
    ExperimentConfig cfg;
    cfg.label = "default-suite";
    cfg.seed = seed;
    cfg.noise.delta = {1e-1, 1e-2, 1e-3};
    const std::vector<std::pair<std::string, DecaySpec>> ops = {
        {"geo0.7", GeometricDecay{0.7}},
        {"poly1", PolynomialDecay{1.0}},
        {"poly2", PolynomialDecay{2.0}},
    };
    const std::vector<std::pair<std::string, SmoothnessSpec>> sols = {
        {"pow0.25", PowerSmoothness{0.25}},
        {"pow0.4", PowerSmoothness{0.4}},
        {"smooth4", Supersmooth{4.0}},
    };
    for (const auto& [olab, decay] : ops)
        for (const auto& [slab, smooth] : sols) {
            ProblemSpec p;
            p.decay = decay;
            p.smooth = smooth;
            p.label = olab + "-" + slab;
            cfg.problems.push_back(std::move(p));
        }
    return cfg;
}

// ---------------------------------------------------------------------------
// JSON round trip for configs

inline nlohmann::json config_to_json(const ExperimentConfig& cfg) {
    nlohmann::json j;
    j["label"] = cfg.label;
    j["problems"] = nlohmann::json::array();
    for (const auto& p : cfg.problems) {
        nlohmann::json pj;
        if (p.file) {
            pj["file"] = *p.file;
        } else {
            nlohmann::json op;
            if (const auto* g = std::get_if<GeometricDecay>(&p.decay)) {
                op["decay"] = "geometric";
                op["ratio"] = g->ratio;
            } else {
                op["decay"] = "polynomial";
                op["exponent"] = std::get<PolynomialDecay>(p.decay).exponent;
            }
            op["K"] = p.K;
            op["scale"] = p.scale;
            pj["operator"] = op;
            nlohmann::json so;
            if (const auto* pw = std::get_if<PowerSmoothness>(&p.smooth)) {
                so["kind"] = "power";
                so["nu"] = pw->nu;
            } else {
                so["kind"] = "supersmooth";
                so["s"] = std::get<Supersmooth>(p.smooth).s;
            }
            so["jitter"] = p.jitter;
            if (p.solution_seed) so["seed"] = *p.solution_seed;
            pj["solution"] = so;
        }
        if (!p.label.empty()) pj["label"] = p.label;
        j["problems"].push_back(pj);
    }
    nlohmann::json grid;
    if (cfg.grid_q0) grid["q0"] = *cfg.grid_q0;
    grid["q"] = cfg.grid_q;
    grid["n_max"] = cfg.grid_n_max;
    j["grid"] = grid;
    j["filter"] = to_string(cfg.filter);
    nlohmann::json noise;
    noise["model"] = cfg.noise.model == NoiseModelKind::deterministic ? "deterministic"
                     : cfg.noise.model == NoiseModelKind::white       ? "white"
                                                                      : "colored";
    noise[cfg.noise.delta_is_relative ? "delta_rel" : "delta_abs"] = cfg.noise.delta;
    if (cfg.noise.model == NoiseModelKind::deterministic) {
        noise["policy"] = cfg.noise.policy;
        if (cfg.noise.policy == "aligned") noise["n_ref"] = cfg.noise.n_ref;
    }
    if (cfg.noise.sigma_exponent) noise["sigma_exponent"] = *cfg.noise.sigma_exponent;
    if (cfg.noise.mode_std) noise["mode_std"] = *cfg.noise.mode_std;
    j["noise"] = noise;
    j["methods"] = cfg.methods;
    nlohmann::json bal;
    bal["tau"] = cfg.balancing.tau;
    bal["k"] = cfg.balancing.k;
    if (cfg.balancing.N) bal["N"] = *cfg.balancing.N;
    j["balancing"] = bal;
    j["morozov_tau"] = cfg.morozov_tau;
    j["replicates"] = cfg.replicates;
    j["seed"] = cfg.seed;
    j["threads"] = cfg.threads;
    return j;
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    ExperimentConfig cfg;
    try {
        if (j.contains("label")) cfg.label = j.at("label").get<std::string>();
        if (!j.contains("problems") || !j.at("problems").is_array() || j.at("problems").empty())
            throw schema_error("field problems: need a nonempty array");
        for (const auto& pj : j.at("problems")) {
            ProblemSpec p;
            if (pj.contains("file")) {
                p.file = pj.at("file").get<std::string>();
            } else {
                const auto& op = pj.at("operator");
                const auto decay = op.at("decay").get<std::string>();
                if (decay == "geometric")
                    p.decay = GeometricDecay{op.at("ratio").get<double>()};
                else if (decay == "polynomial")
                    p.decay = PolynomialDecay{op.at("exponent").get<double>()};
                else
                    throw schema_error("field operator.decay: unknown kind " + decay);
                if (op.contains("K")) p.K = op.at("K").get<std::size_t>();
                if (op.contains("scale")) p.scale = op.at("scale").get<double>();
                const auto& so = pj.at("solution");
                const auto kind = so.at("kind").get<std::string>();
                if (kind == "power")
                    p.smooth = PowerSmoothness{so.at("nu").get<double>()};
                else if (kind == "supersmooth")
                    p.smooth = Supersmooth{so.at("s").get<double>()};
                else
                    throw schema_error("field solution.kind: unknown kind " + kind);
                if (so.contains("jitter")) p.jitter = so.at("jitter").get<double>();
                if (so.contains("seed")) p.solution_seed = so.at("seed").get<std::uint64_t>();
            }
            if (pj.contains("label")) p.label = pj.at("label").get<std::string>();
            cfg.problems.push_back(std::move(p));
        }
        if (j.contains("grid")) {
            const auto& g = j.at("grid");
            if (g.contains("q0")) cfg.grid_q0 = g.at("q0").get<double>();
            if (g.contains("q")) cfg.grid_q = g.at("q").get<double>();
            if (g.contains("n_max")) cfg.grid_n_max = g.at("n_max").get<int>();
        }
        if (j.contains("filter"))
            cfg.filter = filter_kind_from_string(j.at("filter").get<std::string>());
        if (j.contains("noise")) {
            const auto& nj = j.at("noise");
            const auto model = nj.at("model").get<std::string>();
            if (model == "deterministic")
                cfg.noise.model = NoiseModelKind::deterministic;
            else if (model == "white")
                cfg.noise.model = NoiseModelKind::white;
            else if (model == "colored")
                cfg.noise.model = NoiseModelKind::colored;
            else
                throw schema_error("field noise.model: unknown model " + model);
            if (nj.contains("delta_rel")) {
                cfg.noise.delta = nj.at("delta_rel").get<std::vector<double>>();
                cfg.noise.delta_is_relative = true;
            } else if (nj.contains("delta_abs")) {
                cfg.noise.delta = nj.at("delta_abs").get<std::vector<double>>();
                cfg.noise.delta_is_relative = false;
            }
            if (nj.contains("policy")) cfg.noise.policy = nj.at("policy").get<std::string>();
            if (nj.contains("n_ref")) cfg.noise.n_ref = nj.at("n_ref").get<int>();
            if (nj.contains("sigma_exponent"))
                cfg.noise.sigma_exponent = nj.at("sigma_exponent").get<double>();
            if (nj.contains("mode_std"))
                cfg.noise.mode_std = nj.at("mode_std").get<std::vector<double>>();
        }
        if (j.contains("methods")) cfg.methods = j.at("methods").get<std::vector<std::string>>();
        if (j.contains("balancing")) {
            const auto& b = j.at("balancing");
            if (b.contains("tau")) cfg.balancing.tau = b.at("tau").get<double>();
            if (b.contains("k")) cfg.balancing.k = b.at("k").get<int>();
            if (b.contains("N")) cfg.balancing.N = b.at("N").get<int>();
        }
        if (j.contains("morozov_tau")) cfg.morozov_tau = j.at("morozov_tau").get<double>();
        if (j.contains("replicates")) cfg.replicates = j.at("replicates").get<std::size_t>();
        if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("threads")) cfg.threads = j.at("threads").get<unsigned>();
    } catch (const nlohmann::json::exception& e) {
        throw schema_error(std::string("malformed config: ") + e.what());
    }
    if (cfg.problems.empty()) throw schema_error("field problems: must be nonempty");
    if (cfg.methods.empty()) throw schema_error("field methods: must be nonempty");
    if (cfg.replicates < 1) throw schema_error("field replicates: must be >= 1");
    for (double d : cfg.noise.delta)
        if (!(d > 0.0)) throw schema_error("field noise.delta: values must be positive");
    return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw schema_error(std::string("unparseable config: ") + e.what());
    }
    return config_from_json(j);
}

// ---------------------------------------------------------------------------
// Resolved experiment

struct InstanceInfo {
    std::string label;
    std::size_t K = 0;
    double norm_x = 0.0, norm_y = 0.0;
    double tail_energy = 0.0;
    double w1 = 0.0, w2 = 0.0;
    int n_cut = 0;
    bool assumption_satisfied = false;
    std::optional<double> nu_fit;
};

struct InstanceContext {
    ProblemInstance inst;
    RegGrid grid;
    std::vector<double> delta_abs;             // per delta index
    std::vector<std::vector<double>> rho;      // per delta index
    std::vector<std::vector<double>> mode_std; // colored only, per delta index
    InstanceInfo info;
};

struct ResolvedExperiment {
    ExperimentConfig cfg;
    std::vector<InstanceContext> instances;

    std::size_t deltas() const { return cfg.noise.delta.size(); }
    long trials() const {
        return static_cast<long>(instances.size() * deltas() * cfg.replicates);
    }
};

inline ProblemInstance build_problem(const ProblemSpec& p, std::uint64_t master_seed,
                                     std::size_t index) {
    if (p.file) return load_problem(*p.file);
    const std::uint64_t seed =
        p.solution_seed ? *p.solution_seed : substream(master_seed, 0xB10B, index);
    auto op = make_operator(p.decay, p.K, p.scale);
    auto x = make_solution(op, p.smooth, seed, p.jitter);
    std::string label = p.label;
    if (label.empty()) label = "problem" + std::to_string(index);
    return make_instance(std::move(op), std::move(x), std::move(label));
}

inline ResolvedExperiment resolve(const ExperimentConfig& cfg) {
    ResolvedExperiment r;
    r.cfg = cfg;
    if (cfg.noise.mode_std && cfg.noise.delta.size() != 1)
        throw std::invalid_argument("explicit mode_std supports exactly one noise level");
    for (std::size_t i = 0; i < cfg.problems.size(); ++i) {
        InstanceContext ctx;
        ctx.inst = build_problem(cfg.problems[i], cfg.seed, i);
        ctx.grid = RegGrid{cfg.grid_q0.value_or(ctx.inst.op.sigma.front() *
                                                ctx.inst.op.sigma.front()),
                           cfg.grid_q, cfg.grid_n_max};
        validate_grid(ctx.grid);
        const std::size_t K = ctx.inst.op.dim();

        ctx.info.label = ctx.inst.label;
        ctx.info.K = K;
        ctx.info.norm_x = ctx.inst.x_true.norm();
        ctx.info.norm_y = ctx.inst.y_exact.norm();
        ctx.info.tail_energy = tail_energy_fraction(ctx.inst.x_true);

        for (std::size_t d = 0; d < cfg.noise.delta.size(); ++d) {
            const double delta_abs = cfg.noise.delta_is_relative
                                         ? cfg.noise.delta[d] * ctx.info.norm_y
                                         : cfg.noise.delta[d];
            ctx.delta_abs.push_back(delta_abs);
            switch (cfg.noise.model) {
            case NoiseModelKind::deterministic:
                ctx.rho.push_back(
                    rho_deterministic_curve(ctx.inst.op, ctx.grid, cfg.filter, delta_abs));
                break;
            case NoiseModelKind::white: {
                std::vector<double> std_k(K, delta_abs);
                ctx.rho.push_back(rho_stochastic_curve(ctx.inst.op, ctx.grid, cfg.filter, std_k));
                ctx.mode_std.push_back(std::move(std_k));
                break;
            }
            case NoiseModelKind::colored: {
                std::vector<double> std_k;
                if (cfg.noise.mode_std) {
                    std_k = *cfg.noise.mode_std;
                } else {
                    // shape sigma^e, scaled to the white-noise energy K delta^2
                    const double e = cfg.noise.sigma_exponent.value_or(-0.25);
                    std_k.resize(K);
                    for (std::size_t k = 0; k < K; ++k)
                        std_k[k] = std::pow(ctx.inst.op.sigma[k], e);
                    const double norm = l2_norm(std_k);
                    const double c = delta_abs * std::sqrt(static_cast<double>(K)) / norm;
                    for (auto& s : std_k) s *= c;
                }
                if (std_k.size() != K) throw shape_error("mode_std length does not match operator");
                ctx.rho.push_back(rho_stochastic_curve(ctx.inst.op, ctx.grid, cfg.filter, std_k));
                ctx.mode_std.push_back(std::move(std_k));
                break;
            }
            }
        }

        const auto err = noise_free_error_curve(ctx.inst, ctx.grid, cfg.filter);
        const int n_cut = presaturation_cut(err, ctx.info.norm_x);
        if (n_cut >= 1) {
            const auto reg = estimate_regularity_constants(err, ctx.rho.front(), n_cut);
            ctx.info.w1 = reg.w1;
            ctx.info.w2 = reg.w2;
            ctx.info.n_cut = reg.n_cut;
        }
        const auto assumption = check_source_assumption(ctx.inst.x_true, ctx.inst.op);
        ctx.info.assumption_satisfied = assumption.satisfied;
        ctx.info.nu_fit = assumption.nu_fit;
        r.instances.push_back(std::move(ctx));
    }
    return r;
}

// ---------------------------------------------------------------------------
// Trials

struct RunRecord {
    std::string instance;
    long trial = 0;
    int delta_index = 0;
    double delta_rel = 0.0;
    double delta_abs = 0.0;
    std::string method;
    int chosen_n = 0;
    bool exhausted = false;
    double error = 0.0;
    std::optional<double> vs_oo;
    double vs_best = 0.0;
    long solves_used = 0;
    int n_o = 0;
    int n_oo = 0;
    std::optional<int> n_opt;
    double wall_ms = 0.0; // console reporting only; never written to files
};

struct Batch {
    std::vector<RunRecord> records;
    std::vector<InstanceInfo> instances;
    nlohmann::json config_echo;
};

namespace detail {

inline NoiseSpec noise_spec_for(const ResolvedExperiment& r, std::size_t i, std::size_t d,
                                std::size_t rep) {
    const auto& ctx = r.instances[i];
    NoiseSpec spec;
    spec.seed = substream(r.cfg.seed, i + 1, d + 1, rep + 1);
    switch (r.cfg.noise.model) {
    case NoiseModelKind::deterministic: {
        DeterministicNoise det;
        det.delta = ctx.delta_abs[d];
        if (r.cfg.noise.policy == "sphere_random")
            det.policy = SphereRandom{};
        else if (r.cfg.noise.policy == "aligned")
            det.policy = AlignedWorst{r.cfg.noise.n_ref};
        else if (r.cfg.noise.policy == "flat")
            det.policy = FlatDirection{};
        else
            throw std::invalid_argument("unknown deterministic policy: " + r.cfg.noise.policy);
        spec.model = det;
        break;
    }
    case NoiseModelKind::white:
        spec.model = WhiteNoise{ctx.delta_abs[d]};
        break;
    case NoiseModelKind::colored:
        spec.model = ColoredNoise{ctx.mode_std[d]};
        break;
    }
    return spec;
}

} // namespace detail

/// One trial: a single noise realization shared by every configured method.
/// Fast balancing runs on a level-on-demand path (its work counter is the
/// point); Lepskij, Morozov, and the oracles force the full path.
inline std::vector<RunRecord> run_trial(const ResolvedExperiment& r, std::size_t i,
                                        std::size_t d, std::size_t rep) {
    const auto& ctx = r.instances[i];
    const auto& cfg = r.cfg;
    const NoiseSpec spec = detail::noise_spec_for(r, i, d, rep);
    const NoiseRealization noise = sample_noise(ctx.inst.op, ctx.grid, spec);

    SpectralVector y_noisy = ctx.inst.y_exact;
    for (std::size_t k = 0; k < y_noisy.size(); ++k) y_noisy.coeffs[k] += noise.xi.coeffs[k];

    const RegPath path = build_path(ctx.inst, y_noisy, ctx.grid, cfg.filter, ctx.rho[d]);
    const OracleParameters oracle = oracle_parameters(path, ctx.inst.x_true);

    const long trial =
        static_cast<long>((i * r.deltas() + d) * cfg.replicates + rep);
    std::vector<RunRecord> records;
    records.reserve(cfg.methods.size());
    for (const auto& method : cfg.methods) {
        const auto t0 = std::chrono::steady_clock::now();
        ChoiceOutcome out;
        if (method == "fast") {
            LazyPath lazy(ctx.inst.op, y_noisy, ctx.grid, cfg.filter, ctx.rho[d]);
            out = fast_balancing(lazy, cfg.balancing);
        } else if (method == "lepskij") {
            out = lepskij_balancing(path, cfg.balancing);
        } else if (method == "morozov") {
            out = morozov_discrepancy(ctx.inst.op, y_noisy, path, cfg.morozov_tau,
                                      noise_norm_level(spec, ctx.inst.op.dim()));
        } else {
            throw std::invalid_argument("unknown method: " + method);
        }
        RunRecord rec;
        rec.instance = ctx.inst.label;
        rec.trial = trial;
        rec.delta_index = static_cast<int>(d);
        rec.delta_rel = cfg.noise.delta_is_relative ? cfg.noise.delta[d]
                                                    : ctx.delta_abs[d] / ctx.info.norm_y;
        rec.delta_abs = ctx.delta_abs[d];
        rec.method = method;
        rec.chosen_n = out.chosen_n;
        rec.exhausted = out.stopped == StopReason::grid_exhausted;
        rec.error = distance(path.noisy_solution(out.chosen_n), ctx.inst.x_true);
        const auto eff = efficiency_ratio(path, ctx.inst.x_true, out.chosen_n);
        rec.vs_oo = eff.vs_oo;
        rec.vs_best = eff.vs_best;
        rec.solves_used = out.solves_used;
        rec.n_o = oracle.n_o;
        rec.n_oo = oracle.n_oo;
        rec.n_opt = oracle.n_opt;
        rec.wall_ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
        records.push_back(std::move(rec));
    }
    return records;
}

inline std::vector<RunRecord> run_trial(const ResolvedExperiment& r, long trial_index) {
    const auto R = r.cfg.replicates;
    const auto D = r.deltas();
    const auto rep = static_cast<std::size_t>(trial_index) % R;
    const auto d = (static_cast<std::size_t>(trial_index) / R) % D;
    const auto i = static_cast<std::size_t>(trial_index) / (R * D);
    return run_trial(r, i, d, rep);
}

/// Replicates x noise levels x instances, concurrent over trials with
/// per-trial derived RNG streams. Record order is fixed by trial index, so
/// output is independent of scheduling.
inline Batch run_monte_carlo(const ExperimentConfig& cfg) {
    const ResolvedExperiment r = resolve(cfg);
    const long total = r.trials();
    const std::size_t M = cfg.methods.size();
    Batch batch;
    batch.config_echo = config_to_json(cfg);
    for (const auto& ctx : r.instances) batch.instances.push_back(ctx.info);
    batch.records.resize(static_cast<std::size_t>(total) * M);

    unsigned n_threads = cfg.threads != 0 ? cfg.threads : std::thread::hardware_concurrency();
    if (n_threads == 0) n_threads = 1;
    n_threads = std::min<unsigned>(n_threads, static_cast<unsigned>(std::max<long>(total, 1)));

    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(n_threads);
    for (unsigned t = 0; t < n_threads; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (long idx = t; idx < total; idx += n_threads) {
                    auto recs = run_trial(r, idx);
                    for (std::size_t m = 0; m < M; ++m)
                        batch.records[static_cast<std::size_t>(idx) * M + m] =
                            std::move(recs[m]);
                }
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return batch;
}

// ---------------------------------------------------------------------------
// Summaries and comparisons

struct MethodSummary {
    std::string method;
    std::size_t trials = 0;
    std::size_t with_oracle = 0; // records where n_opt exists
    double median_vs_oo = 0.0;
    double p90_vs_oo = 0.0;
    double median_vs_best = 0.0;
    double p90_vs_best = 0.0;
    double outlier_rate = 0.0; // fraction with vs_best > 10
    double mean_solves = 0.0;
    double exhausted_rate = 0.0;
};

struct BatchSummary {
    std::vector<MethodSummary> methods;
    std::optional<double> fast_lepskij_agreement;
    bool outside_theory = false; // tau < 1 is not covered by the oracle results
};

inline std::vector<std::string> methods_in(const std::vector<RunRecord>& records) {
    std::vector<std::string> methods;
    for (const auto& rec : records)
        if (std::find(methods.begin(), methods.end(), rec.method) == methods.end())
            methods.push_back(rec.method);
    return methods;
}

inline BatchSummary summarize(const std::vector<RunRecord>& records,
                              const std::vector<std::string>& methods, double tau = 1.0) {
    BatchSummary s;
    s.outside_theory = tau < 1.0;
    for (const auto& method : methods) {
        MethodSummary ms;
        ms.method = method;
        std::vector<double> voo, vbest;
        long double solves = 0.0L;
        std::size_t exhausted = 0;
        for (const auto& rec : records) {
            if (rec.method != method) continue;
            ++ms.trials;
            if (rec.vs_oo) {
                ++ms.with_oracle;
                voo.push_back(*rec.vs_oo);
            }
            vbest.push_back(rec.vs_best);
            solves += rec.solves_used;
            exhausted += rec.exhausted ? 1 : 0;
        }
        if (ms.trials == 0) continue;
        ms.median_vs_oo = voo.empty() ? std::nan("") : median(voo);
        ms.p90_vs_oo = voo.empty() ? std::nan("") : quantile(voo, 0.9);
        ms.median_vs_best = median(vbest);
        ms.p90_vs_best = quantile(vbest, 0.9);
        std::size_t outliers = 0;
        for (double v : vbest) outliers += v > 10.0 ? 1 : 0;
        ms.outlier_rate = static_cast<double>(outliers) / static_cast<double>(ms.trials);
        ms.mean_solves = static_cast<double>(solves / static_cast<long double>(ms.trials));
        ms.exhausted_rate =
            static_cast<double>(exhausted) / static_cast<double>(ms.trials);
        s.methods.push_back(std::move(ms));
    }

    // Agreement between fast and Lepskij on shared trials.
    std::map<long, int> fast_choice;
    for (const auto& rec : records)
        if (rec.method == "fast") fast_choice[rec.trial] = rec.chosen_n;
    std::size_t shared = 0, agree = 0;
    for (const auto& rec : records) {
        if (rec.method != "lepskij") continue;
        const auto it = fast_choice.find(rec.trial);
        if (it == fast_choice.end()) continue;
        ++shared;
        agree += it->second == rec.chosen_n ? 1 : 0;
    }
    if (shared > 0)
        s.fast_lepskij_agreement = static_cast<double>(agree) / static_cast<double>(shared);
    return s;
}

inline BatchSummary summarize(const Batch& batch, const ExperimentConfig& cfg) {
    return summarize(batch.records, cfg.methods, cfg.balancing.tau);
}

/// Per-method comparison table (insufficient with fewer than two methods).
inline std::vector<MethodSummary> compare_methods(const std::vector<RunRecord>& records) {
    const auto methods = methods_in(records);
    if (methods.size() < 2)
        throw insufficient_data_error("method comparison needs at least two methods");
    return summarize(records, methods).methods;
}

inline std::vector<MethodSummary> compare_methods(const Batch& batch,
                                                  const ExperimentConfig& cfg) {
    if (cfg.methods.size() < 2)
        throw insufficient_data_error("method comparison needs at least two methods");
    return summarize(batch, cfg).methods;
}

/// Canonical single instance (the first default-suite problem) used by the
/// probes when no problem file is given.
inline ProblemInstance default_instance(std::uint64_t seed = 20260810) {
    const auto cfg = default_suite_config(seed);
    return build_problem(cfg.problems.front(), cfg.seed, 0);
}

// ---------------------------------------------------------------------------
// Persistence. Two formats: rows (one record per line, header, tab
// separated) and document (nested JSON). Both round-trip, and neither
// carries wall time so reruns with the same seed are byte-identical.

inline const char* rows_header() {
    return "instance\ttrial\tdelta_index\tdelta_rel\tdelta_abs\tmethod\tchosen_n\tstopped\t"
           "error\tvs_oo\tvs_best\tsolves_used\tn_o\tn_oo\tn_opt";
}

inline std::string record_to_row(const RunRecord& rec) {
    std::ostringstream os;
    os << rec.instance << '\t' << rec.trial << '\t' << rec.delta_index << '\t'
       << format_double(rec.delta_rel) << '\t' << format_double(rec.delta_abs) << '\t'
       << rec.method << '\t' << rec.chosen_n << '\t'
       << (rec.exhausted ? "grid_exhausted" : "threshold_met") << '\t'
       << format_double(rec.error) << '\t'
       << (rec.vs_oo ? format_double(*rec.vs_oo) : std::string("-")) << '\t'
       << format_double(rec.vs_best) << '\t' << rec.solves_used << '\t' << rec.n_o << '\t'
       << rec.n_oo << '\t' << (rec.n_opt ? std::to_string(*rec.n_opt) : std::string("-"));
    return os.str();
}

inline void emit_rows(const std::vector<RunRecord>& records,
                      const std::filesystem::path& path) {
    if (records.empty()) throw insufficient_data_error("refusing to emit an empty batch");
    std::ofstream out(path);
    if (!out) throw io_error("cannot open " + path.string() + " for writing");
    out << rows_header() << '\n';
    for (const auto& rec : records) out << record_to_row(rec) << '\n';
    if (!out) throw io_error("write failed: " + path.string());
}

inline std::vector<RunRecord> parse_rows(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != rows_header())
        throw schema_error("rows file: unexpected header");
    std::vector<RunRecord> records;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::size_t start = 0;
        while (true) {
            const auto pos = line.find('\t', start);
            f.push_back(line.substr(start, pos - start));
            if (pos == std::string::npos) break;
            start = pos + 1;
        }
        if (f.size() != 15) throw schema_error("rows file: wrong column count");
        RunRecord rec;
        rec.instance = f[0];
        rec.trial = std::stol(f[1]);
        rec.delta_index = std::stoi(f[2]);
        rec.delta_rel = std::strtod(f[3].c_str(), nullptr);
        rec.delta_abs = std::strtod(f[4].c_str(), nullptr);
        rec.method = f[5];
        rec.chosen_n = std::stoi(f[6]);
        rec.exhausted = f[7] == "grid_exhausted";
        rec.error = std::strtod(f[8].c_str(), nullptr);
        if (f[9] != "-") rec.vs_oo = std::strtod(f[9].c_str(), nullptr);
        rec.vs_best = std::strtod(f[10].c_str(), nullptr);
        rec.solves_used = std::stol(f[11]);
        rec.n_o = std::stoi(f[12]);
        rec.n_oo = std::stoi(f[13]);
        if (f[14] != "-") rec.n_opt = std::stoi(f[14]);
        records.push_back(std::move(rec));
    }
    return records;
}

inline nlohmann::json record_to_json(const RunRecord& rec) {
    nlohmann::json j;
    j["instance"] = rec.instance;
    j["trial"] = rec.trial;
    j["delta_index"] = rec.delta_index;
    j["delta_rel"] = rec.delta_rel;
    j["delta_abs"] = rec.delta_abs;
    j["method"] = rec.method;
    j["chosen_n"] = rec.chosen_n;
    j["stopped"] = rec.exhausted ? "grid_exhausted" : "threshold_met";
    j["error"] = rec.error;
    if (rec.vs_oo) j["vs_oo"] = *rec.vs_oo;
    j["vs_best"] = rec.vs_best;
    j["solves_used"] = rec.solves_used;
    j["n_o"] = rec.n_o;
    j["n_oo"] = rec.n_oo;
    if (rec.n_opt) j["n_opt"] = *rec.n_opt;
    return j;
}

inline RunRecord record_from_json(const nlohmann::json& j) {
    RunRecord rec;
    rec.instance = j.at("instance").get<std::string>();
    rec.trial = j.at("trial").get<long>();
    rec.delta_index = j.at("delta_index").get<int>();
    rec.delta_rel = j.at("delta_rel").get<double>();
    rec.delta_abs = j.at("delta_abs").get<double>();
    rec.method = j.at("method").get<std::string>();
    rec.chosen_n = j.at("chosen_n").get<int>();
    rec.exhausted = j.at("stopped").get<std::string>() == "grid_exhausted";
    rec.error = j.at("error").get<double>();
    if (j.contains("vs_oo")) rec.vs_oo = j.at("vs_oo").get<double>();
    rec.vs_best = j.at("vs_best").get<double>();
    rec.solves_used = j.at("solves_used").get<long>();
    rec.n_o = j.at("n_o").get<int>();
    rec.n_oo = j.at("n_oo").get<int>();
    if (j.contains("n_opt")) rec.n_opt = j.at("n_opt").get<int>();
    return rec;
}

inline nlohmann::json instance_info_to_json(const InstanceInfo& info) {
    nlohmann::json j;
    j["label"] = info.label;
    j["K"] = info.K;
    j["norm_x"] = info.norm_x;
    j["norm_y"] = info.norm_y;
    j["tail_energy"] = info.tail_energy;
    j["w1"] = info.w1;
    j["w2"] = info.w2;
    j["n_cut"] = info.n_cut;
    j["assumption_satisfied"] = info.assumption_satisfied;
    if (info.nu_fit) j["nu_fit"] = *info.nu_fit;
    return j;
}

inline nlohmann::json summary_to_json(const BatchSummary& s) {
    nlohmann::json j;
    j["methods"] = nlohmann::json::array();
    for (const auto& m : s.methods) {
        nlohmann::json mj;
        mj["method"] = m.method;
        mj["trials"] = m.trials;
        mj["with_oracle"] = m.with_oracle;
        if (m.with_oracle > 0) {
            mj["median_vs_oo"] = m.median_vs_oo;
            mj["p90_vs_oo"] = m.p90_vs_oo;
        }
        mj["median_vs_best"] = m.median_vs_best;
        mj["p90_vs_best"] = m.p90_vs_best;
        mj["outlier_rate"] = m.outlier_rate;
        mj["mean_solves"] = m.mean_solves;
        mj["exhausted_rate"] = m.exhausted_rate;
        j["methods"].push_back(mj);
    }
    if (s.fast_lepskij_agreement) j["fast_lepskij_agreement"] = *s.fast_lepskij_agreement;
    j["outside_theory"] = s.outside_theory;
    return j;
}

inline void emit_document(const Batch& batch, const BatchSummary& summary,
                          const std::filesystem::path& path) {
    if (batch.records.empty()) throw insufficient_data_error("refusing to emit an empty batch");
    nlohmann::json j;
    j["config"] = batch.config_echo;
    j["instances"] = nlohmann::json::array();
    for (const auto& info : batch.instances) j["instances"].push_back(instance_info_to_json(info));
    j["summary"] = summary_to_json(summary);
    j["records"] = nlohmann::json::array();
    for (const auto& rec : batch.records) j["records"].push_back(record_to_json(rec));
    std::ofstream out(path);
    if (!out) throw io_error("cannot open " + path.string() + " for writing");
    out << j.dump(1) << '\n';
    if (!out) throw io_error("write failed: " + path.string());
}

/// What the `run` command persists: the records as rows plus a summary
/// document (config echo, per-instance constants, aggregates). Neither file
/// contains timing, so identical config and seed give identical bytes.
inline void write_run_outputs(const Batch& batch, const BatchSummary& summary,
                              const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    emit_rows(batch.records, out_dir / "batch.tsv");
    nlohmann::json j;
    j["config"] = batch.config_echo;
    j["instances"] = nlohmann::json::array();
    for (const auto& info : batch.instances) j["instances"].push_back(instance_info_to_json(info));
    j["summary"] = summary_to_json(summary);
    std::ofstream out(out_dir / "summary.json");
    if (!out) throw io_error("cannot open " + (out_dir / "summary.json").string());
    out << j.dump(2) << '\n';
    if (!out) throw io_error("write failed: " + (out_dir / "summary.json").string());
}

inline std::vector<RunRecord> parse_document_records(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw schema_error(std::string("unparseable document: ") + e.what());
    }
    if (!j.contains("records")) throw schema_error("document: missing field records");
    std::vector<RunRecord> records;
    for (const auto& rj : j.at("records")) records.push_back(record_from_json(rj));
    return records;
}

} // namespace fastbal
