// Command-line front end: generate problems, run Monte Carlo batches,
// run the statistical probes, and convert or compare result files.
//
// Exit codes: 0 success, 1 usage or data error, 2 a probe's acceptance
// assertion failed.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "fastbal/fastbal.hpp"

namespace fs = std::filesystem;
using namespace fastbal;

namespace {

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

void print_summary(const BatchSummary& summary) {
    std::printf("%-10s %8s %12s %8s %12s %8s %9s %11s\n", "method", "trials", "median_vs_oo",
                "p90", "median_vs_best", "p90", "outliers", "mean_solves");
    for (const auto& m : summary.methods) {
        std::printf("%-10s %8zu %12.4f %8.4f %12.4f %8.4f %8.2f%% %11.2f\n", m.method.c_str(),
                    m.trials, m.median_vs_oo, m.p90_vs_oo, m.median_vs_best, m.p90_vs_best,
                    100.0 * m.outlier_rate, m.mean_solves);
    }
    if (summary.fast_lepskij_agreement)
        std::printf("fast/lepskij agreement: %.2f%%\n", 100.0 * *summary.fast_lepskij_agreement);
    if (summary.outside_theory)
        std::printf("note: tau < 1 is outside the range covered by the oracle bounds\n");
}

void write_json(const nlohmann::json& j, const std::string& out) {
    if (out.empty()) {
        std::cout << j.dump(2) << '\n';
        return;
    }
    std::ofstream f(out);
    if (!f) throw io_error("cannot open " + out + " for writing");
    f << j.dump(2) << '\n';
}

std::vector<RunRecord> load_records(const std::string& path) {
    std::ifstream probe(path);
    if (!probe) throw io_error("cannot open " + path);
    char first = 0;
    probe >> first;
    if (first == '{') return parse_document_records(path);
    return parse_rows(path);
}

ProblemInstance load_or_default(const std::string& problem_path) {
    if (problem_path.empty()) return default_instance();
    return load_problem(problem_path);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tikhonov regularization with fast balancing parameter choice"};
    app.require_subcommand(1);

    // --- gen-problem -------------------------------------------------------
    auto* gen = app.add_subcommand("gen-problem", "generate a synthetic problem file");
    std::string g_decay = "geometric", g_solution = "power", g_label = "problem", g_out;
    double g_ratio = 0.7, g_exponent = 1.0, g_scale = 1.0, g_nu = 0.25, g_s = 4.0,
           g_jitter = 0.1;
    std::size_t g_K = 400;
    std::uint64_t g_seed = 1;
    gen->add_option("--decay", g_decay, "geometric|polynomial")
        ->check(CLI::IsMember({"geometric", "polynomial"}));
    gen->add_option("--ratio", g_ratio, "geometric decay ratio in (0,1)");
    gen->add_option("--exponent", g_exponent, "polynomial decay exponent > 0");
    gen->add_option("--K", g_K, "number of modes");
    gen->add_option("--scale", g_scale, "sigma_1");
    gen->add_option("--solution", g_solution, "power|supersmooth")
        ->check(CLI::IsMember({"power", "supersmooth"}));
    gen->add_option("--nu", g_nu, "power smoothness in (0,1)");
    gen->add_option("--s", g_s, "supersmooth exponent > 2");
    gen->add_option("--jitter", g_jitter, "multiplicative jitter amplitude in [0,0.1]");
    gen->add_option("--seed", g_seed, "jitter seed");
    gen->add_option("--label", g_label, "instance label");
    gen->add_option("--out", g_out, "output problem file")->required();

    // --- run ----------------------------------------------------------------
    auto* run = app.add_subcommand("run", "run a Monte Carlo batch from a config file");
    std::string r_config, r_out = "out", r_methods;
    std::uint64_t r_seed = 0;
    double r_tau = 1.0;
    int r_k = 1;
    run->add_option("--config", r_config, "config file (default: built-in default suite)");
    run->add_option("--out", r_out, "output directory");
    run->add_option("--method", r_methods, "override method list, comma separated");
    run->add_option("--seed", r_seed, "override master seed");
    run->add_option("--tau", r_tau, "override balancing threshold");
    run->add_option("--k", r_k, "override balancing lookahead");

    // --- probe ---------------------------------------------------------------
    auto* probe = app.add_subcommand("probe", "statistical checks of the model assumptions");
    probe->require_subcommand(1);
    std::string p_out, p_problem, p_config, p_weights = "geo100";
    std::size_t p_samples = 100000;
    std::uint64_t p_seed = 12345;
    int p_level = 10;
    double p_delta_rel = 1e-2;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--out", p_out, "write the report document here (default: stdout)");
        sub->add_option("--seed", p_seed, "sampling seed");
    };
    auto* p_tail = probe->add_subcommand("tail", "weighted chi-square tail bound");
    p_tail->add_option("--weights", p_weights, "single|flat10|geo100")
        ->check(CLI::IsMember({"single", "flat10", "geo100"}));
    p_tail->add_option("--samples", p_samples, "Monte Carlo samples (>= 1e4)");
    add_common(p_tail);
    auto* p_assume = probe->add_subcommand("assumption", "source condition on x");
    p_assume->add_option("--problem", p_problem, "problem file (default: built-in instance)");
    add_common(p_assume);
    auto* p_mom = probe->add_subcommand("moments", "fourth-to-second moment ratio");
    p_mom->add_option("--problem", p_problem, "problem file (default: built-in instance)");
    p_mom->add_option("--level", p_level, "grid level n");
    p_mom->add_option("--delta-rel", p_delta_rel, "white noise level relative to ||y||");
    p_mom->add_option("--samples", p_samples, "Monte Carlo samples");
    add_common(p_mom);
    auto* p_stops = probe->add_subcommand("stops", "stop-index distribution of fast balancing");
    p_stops->add_option("--config", p_config, "config file (default: built-in default suite)");
    add_common(p_stops);
    auto* p_dec = probe->add_subcommand("decomposition", "stochastic error decomposition");
    p_dec->add_option("--problem", p_problem, "problem file (default: built-in instance)");
    p_dec->add_option("--delta-rel", p_delta_rel, "white noise level relative to ||y||");
    p_dec->add_option("--samples", p_samples, "Monte Carlo samples");
    add_common(p_dec);

    // --- compare --------------------------------------------------------------
    auto* cmp = app.add_subcommand("compare", "per-method comparison table from a batch file");
    std::string c_batch, c_out;
    cmp->add_option("--batch", c_batch, "batch file (rows or document)")->required();
    cmp->add_option("--out", c_out, "write the table here as well");

    // --- report -----------------------------------------------------------------
    auto* rep = app.add_subcommand("report", "convert a batch file between formats");
    std::string t_in, t_out, t_format = "rows";
    rep->add_option("--in", t_in, "input batch file (rows or document)")->required();
    rep->add_option("--format", t_format, "rows|document")
        ->check(CLI::IsMember({"rows", "document"}));
    rep->add_option("--out", t_out, "output file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1; // usage errors are exit 1; --help stays 0
    }

    try {
        if (gen->parsed()) {
            DecaySpec decay = g_decay == "geometric" ? DecaySpec{GeometricDecay{g_ratio}}
                                                     : DecaySpec{PolynomialDecay{g_exponent}};
            SmoothnessSpec smooth = g_solution == "power" ? SmoothnessSpec{PowerSmoothness{g_nu}}
                                                          : SmoothnessSpec{Supersmooth{g_s}};
            auto op = make_operator(decay, g_K, g_scale);
            auto x = make_solution(op, smooth, g_seed, g_jitter);
            const auto inst = make_instance(std::move(op), std::move(x), g_label);
            const double tail = tail_energy_fraction(inst.x_true);
            save_problem(inst, g_out);
            std::printf("wrote %s (K=%zu, ||x||=%s, tail energy fraction=%s)\n", g_out.c_str(),
                        inst.op.dim(), format_double(inst.x_true.norm()).c_str(),
                        format_double(tail).c_str());
            if (tail > 1e-6)
                std::printf("warning: last 10%% of modes carry %.3g of ||x||^2; "
                            "truncation to K=%zu is lossy for this solution\n",
                            tail, inst.op.dim());
            return 0;
        }

        if (run->parsed()) {
            ExperimentConfig cfg =
                r_config.empty() ? default_suite_config() : load_config(r_config);
            if (run->count("--seed") > 0) cfg.seed = r_seed;
            if (run->count("--tau") > 0) cfg.balancing.tau = r_tau;
            if (run->count("--k") > 0) cfg.balancing.k = r_k;
            if (!r_methods.empty()) cfg.methods = split_csv(r_methods);

            const auto batch = run_monte_carlo(cfg);
            const auto summary = summarize(batch, cfg);
            write_run_outputs(batch, summary, r_out);
            print_summary(summary);
            std::printf("wrote %s and %s\n", (fs::path(r_out) / "batch.tsv").c_str(),
                        (fs::path(r_out) / "summary.json").c_str());
            for (const auto& info : batch.instances)
                if (info.tail_energy > 1e-6)
                    std::printf("warning: instance %s carries %.3g of ||x||^2 in the last "
                                "10%% of modes\n",
                                info.label.c_str(), info.tail_energy);
            return 0;
        }

        if (probe->parsed()) {
            bool pass = true;
            nlohmann::json report;
            if (p_tail->parsed()) {
                std::vector<double> w;
                if (p_weights == "single") {
                    w = {1.0};
                } else if (p_weights == "flat10") {
                    w.assign(10, std::sqrt(0.1));
                } else {
                    w.resize(100);
                    double norm2 = 0.0;
                    for (std::size_t k = 0; k < w.size(); ++k) {
                        w[k] = std::pow(0.9, static_cast<double>(k));
                        norm2 += w[k] * w[k];
                    }
                    for (auto& a : w) a /= std::sqrt(norm2);
                }
                const auto r =
                    tail_bound_probe(w, {0.0, 1.0, 2.0, 4.0, 8.0, 16.0}, p_samples, p_seed);
                report = json_of(r);
                pass = r.violations == 0;
            } else if (p_assume->parsed()) {
                const auto inst = load_or_default(p_problem);
                const auto r = check_source_assumption(inst.x_true, inst.op);
                report = json_of(r);
                pass = r.satisfied;
            } else if (p_mom->parsed()) {
                const auto inst = load_or_default(p_problem);
                const auto grid = default_grid(inst.op);
                NoiseSpec spec;
                spec.model = WhiteNoise{p_delta_rel * inst.y_exact.norm()};
                spec.seed = p_seed;
                const auto r = moment_ratio_probe(inst, grid, FilterKind::tikhonov, spec,
                                                  p_level, p_samples, p_seed);
                report = json_of(r);
                pass = r.pass;
            } else if (p_stops->parsed()) {
                ExperimentConfig cfg =
                    p_config.empty() ? default_suite_config() : load_config(p_config);
                cfg.methods = {"fast"};
                const auto batch = run_monte_carlo(cfg);
                std::vector<StopSample> samples;
                for (const auto& rec : batch.records)
                    samples.push_back({rec.chosen_n, rec.n_opt});
                const auto r = stop_distribution_probe(samples, cfg.balancing);
                report = json_of(r);
                pass = r.late_decay_ok && r.late_base < 1.0;
            } else if (p_dec->parsed()) {
                const auto inst = load_or_default(p_problem);
                const auto grid = default_grid(inst.op);
                const double delta = p_delta_rel * inst.y_exact.norm();
                const std::size_t n = p_samples == 100000 ? 10000 : p_samples;
                const auto rows =
                    decomposition_probe(inst, grid, FilterKind::tikhonov, delta, n, p_seed);
                report = json_of(rows);
                for (const auto& row : rows) pass = pass && row.pass;
            }
            write_json(report, p_out);
            if (!pass) {
                std::fprintf(stderr, "probe assertion failed\n");
                return 2;
            }
            return 0;
        }

        if (cmp->parsed()) {
            const auto records = load_records(c_batch);
            const auto table = compare_methods(records);
            BatchSummary s;
            s.methods = table;
            print_summary(s);
            if (!c_out.empty()) {
                nlohmann::json j;
                j["methods"] = summary_to_json(s)["methods"];
                write_json(j, c_out);
            }
            return 0;
        }

        if (rep->parsed()) {
            const auto records = load_records(t_in);
            if (records.empty()) throw insufficient_data_error("input batch is empty");
            if (t_format == "rows") {
                emit_rows(records, t_out);
            } else {
                Batch b;
                b.records = records;
                b.config_echo = nlohmann::json::object();
                emit_document(b, summarize(records, methods_in(records)), t_out);
            }
            std::printf("wrote %s (%zu records)\n", t_out.c_str(), records.size());
            return 0;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
