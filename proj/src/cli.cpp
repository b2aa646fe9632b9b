#include "ilms/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>

#ifndef ILMS_VERSION
#define ILMS_VERSION "0.0.0"
#endif

namespace ilms::cli {

namespace fs = std::filesystem;

std::string_view version() noexcept { return ILMS_VERSION; }

int exit_code_for(const std::exception& e) noexcept {
    if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
    if (dynamic_cast<const DivergenceError*>(&e)) return kExitDivergence;
    if (dynamic_cast<const InstabilityError*>(&e)) return kExitInstability;
    return kExitFailure;
}

std::string format_number(double value) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", value);
    return buf;
}

CsvWriter::CsvWriter(const config::LoadedConfig& cfg, std::string_view command) {
    comment("ilms " + std::string(version()));
    comment("command: " + std::string(command));
    comment("config_hash: " + config::hex64(cfg.hash));
    comment("seed: " + std::to_string(cfg.network.seed));
    const auto& p = cfg.plan;
    comment("mode: " + std::string(to_string(p.mode)) + ", runs: " + std::to_string(p.runs) +
            ", iterations: " + std::to_string(p.iterations) + ", tail: " + std::to_string(p.tail));
}

void CsvWriter::comment(std::string_view text) {
    buf_ += "# ";
    buf_ += text;
    buf_ += '\n';
}

void CsvWriter::header(std::initializer_list<std::string_view> columns) {
    bool first = true;
    for (auto c : columns) {
        if (!first) buf_ += ',';
        buf_ += c;
        first = false;
    }
    buf_ += '\n';
}

CsvWriter& CsvWriter::cell(double value) { return cell(std::string_view(format_number(value))); }

CsvWriter& CsvWriter::cell(long long value) { return cell(std::string_view(std::to_string(value))); }

CsvWriter& CsvWriter::cell(std::string_view text) {
    if (row_open_) buf_ += ',';
    buf_ += text;
    row_open_ = true;
    return *this;
}

void CsvWriter::end_row() {
    buf_ += '\n';
    row_open_ = false;
}

namespace {

void write_file(const fs::path& path, const std::string& text) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << text;
        if (!out) throw std::runtime_error("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

void prepare(const fs::path& out_dir) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw ConfigError("cannot create output directory: " + ec.message(), "--out");
}

void write_resolved(const config::LoadedConfig& cfg, const fs::path& out_dir) {
    nlohmann::json doc = cfg.resolved;
    doc["meta"] = {{"tool", "ilms"},
                   {"version", std::string(version())},
                   {"config_hash", config::hex64(cfg.hash)}};
    write_file(out_dir / "resolved_config.json", doc.dump(2) + "\n");
}

void steady_rows(CsvWriter& csv, const engine::SteadyStateEstimate& est) {
    csv.header({"node", "eta", "zeta", "xi", "eta_db", "zeta_db", "xi_db", "bias_norm"});
    for (std::size_t k = 0; k < est.nodes.size(); ++k) {
        const auto& n = est.nodes[k];
        csv.cell(static_cast<int>(k + 1)).cell(n.eta).cell(n.zeta).cell(n.xi);
        csv.cell(n.eta_db).cell(n.zeta_db).cell(n.xi_db).cell(n.bias.size() ? n.bias.norm() : 0.0);
        csv.end_row();
    }
}

SimulationResult simulate(const model::NetworkConfig& net, const ExperimentPlan& plan) {
    SimulationResult r;
    r.series = engine::run_monte_carlo(net, plan);
    r.steady = engine::estimate_steady_state(r.series, plan.tail);
    return r;
}

}  // namespace

void CsvWriter::save(const fs::path& path) const { write_file(path, buf_); }

SimulationResult cmd_simulate(const config::LoadedConfig& cfg, const fs::path& out_dir, std::ostream& log) {
    auto result = simulate(cfg.network, cfg.plan);
    prepare(out_dir);

    const auto& s = result.series;
    CsvWriter series(cfg, "simulate");
    series.header({"iter", "node", "msd", "emse", "mse"});
    for (int i = 0; i < s.iterations; ++i) {
        for (int k = 0; k < s.nodes; ++k) {
            const auto idx = s.index(k, i);
            series.cell(i + 1).cell(k + 1).cell(s.msd[idx]).cell(s.emse[idx]).cell(s.mse[idx]);
            series.end_row();
        }
    }

    CsvWriter steady(cfg, "simulate");
    if (s.zf_outages > 0) steady.comment("zf_outages: " + std::to_string(s.zf_outages));
    steady_rows(steady, result.steady);

    write_resolved(cfg, out_dir);
    series.save(out_dir / "series.csv");
    steady.save(out_dir / "steady.csv");
    log << "simulate: " << s.runs << " runs x " << s.iterations << " iterations, " << s.nodes
        << " nodes -> " << (out_dir / "series.csv").string() << ", " << (out_dir / "steady.csv").string() << "\n";
    return result;
}

TheoryResult cmd_theory(const config::LoadedConfig& cfg, const fs::path& out_dir, std::ostream& log) {
    const auto ws = theory::build_workspace(cfg.network, cfg.plan.mode);
    TheoryResult result;
    result.stability = theory::ms_stability_check(ws);
    prepare(out_dir);
    write_resolved(cfg, out_dir);

    const auto& rep = result.stability;
    CsvWriter stab(cfg, "theory");
    stab.header({"node", "mu_lo", "mu_hi", "ms_margin", "rho_pi", "rho_mean", "mean_stable", "ms_stable"});
    for (std::size_t k = 0; k < rep.nodes.size(); ++k) {
        const auto& n = rep.nodes[k];
        stab.cell(static_cast<int>(k + 1)).cell(n.mu_lo).cell(n.mu_hi).cell(n.ms_margin).cell(n.rho_pi);
        stab.cell(rep.rho_mean).cell(rep.mean_stable ? "true" : "false").cell(rep.ms_stable ? "true" : "false");
        stab.end_row();
    }
    stab.save(out_dir / "stability.csv");

    const fs::path pred_path = out_dir / "prediction.csv";
    try {
        result.prediction = theory::steady_state_prediction(ws);
    } catch (const InstabilityError&) {
        std::error_code ec;
        fs::remove(pred_path, ec);
        log << "theory: stability.csv written; prediction omitted\n";
        throw;
    }

    CsvWriter pred(cfg, "theory");
    for (const auto& w : result.prediction.warnings) pred.comment("warning: " + w);
    pred.header({"node", "eta", "zeta", "xi", "eta_db", "zeta_db", "xi_db", "bias_norm"});
    for (std::size_t k = 0; k < result.prediction.nodes.size(); ++k) {
        const auto& n = result.prediction.nodes[k];
        pred.cell(static_cast<int>(k + 1)).cell(n.eta).cell(n.zeta).cell(n.xi);
        pred.cell(n.eta_db).cell(n.zeta_db).cell(n.xi_db).cell(n.bias_norm);
        pred.end_row();
    }
    pred.save(pred_path);
    for (const auto& w : result.prediction.warnings) log << "warning: " << w << "\n";
    log << "theory: rho_mean = " << format_number(rep.rho_mean) << " -> " << (out_dir / "stability.csv").string()
        << ", " << pred_path.string() << "\n";
    return result;
}

CompareResult cmd_compare(const config::LoadedConfig& cfg, const fs::path& out_dir, std::ostream& log) {
    const auto ws = theory::build_workspace(cfg.network, cfg.plan.mode);
    const auto pred = theory::steady_state_prediction(ws);
    const auto sim = simulate(cfg.network, cfg.plan);

    static constexpr const char* kMetric[3] = {"eta", "zeta", "xi"};
    CompareResult result;
    result.max_abs_gap = -1.0;
    for (int k = 0; k < cfg.network.n; ++k) {
        CompareRow row;
        row.node = k + 1;
        const auto& s = sim.steady.nodes[k];
        const auto& t = pred.nodes[k];
        const double sv[3] = {s.eta_db, s.zeta_db, s.xi_db};
        const double tv[3] = {t.eta_db, t.zeta_db, t.xi_db};
        for (int j = 0; j < 3; ++j) {
            row.sim[j] = sv[j];
            row.theory[j] = tv[j];
            row.gap[j] = sv[j] - tv[j];
            if (std::abs(row.gap[j]) > result.max_abs_gap) {
                result.max_abs_gap = std::abs(row.gap[j]);
                result.max_node = row.node;
                result.max_metric = kMetric[j];
            }
        }
        result.rows.push_back(row);
    }

    CsvWriter csv(cfg, "compare");
    for (const auto& w : pred.warnings) csv.comment("warning: " + w);
    csv.header({"node", "sim_eta_db", "theory_eta_db", "gap_eta_db", "sim_zeta_db", "theory_zeta_db",
                "gap_zeta_db", "sim_xi_db", "theory_xi_db", "gap_xi_db"});
    for (const auto& r : result.rows) {
        csv.cell(r.node);
        for (int j = 0; j < 3; ++j) csv.cell(r.sim[j]).cell(r.theory[j]).cell(r.gap[j]);
        csv.end_row();
    }
    prepare(out_dir);
    write_resolved(cfg, out_dir);
    csv.save(out_dir / "compare.csv");
    log << "compare: max |gap| = " << format_number(result.max_abs_gap) << " dB (node " << result.max_node << ", "
        << result.max_metric << ")\n";
    return result;
}

model::NetworkConfig with_step_size(const model::NetworkConfig& net, double mu) {
    model::NetworkConfig out = net;
    for (auto& p : out.profiles) p = model::make_profile(p.index, mu, p.ru, p.sigma_v2, p.q, p.regressor, true);
    return out;
}

model::NetworkConfig with_second_moment(const model::NetworkConfig& net, double s) {
    model::NetworkConfig out = net;
    for (auto& c : out.channels) c = model::make_channel(model::unit_mean_law(s), c.estimation_error_var);
    return out;
}

std::vector<SweepRow> cmd_sweep(const config::LoadedConfig& cfg, const fs::path& out_dir, std::ostream& log) {
    if (!cfg.plan.sweep) throw ConfigError("sweep needs a plan.sweep section", "plan.sweep");
    const auto& sw = *cfg.plan.sweep;
    const int n = cfg.network.n;
    if (sw.node_focus > n) throw ConfigError("node_focus exceeds N", "plan.sweep.node_focus");
    if (sw.parameter == SweepParameter::S) {
        for (std::size_t i = 0; i < sw.values.size(); ++i)
            if (!(sw.values[i] >= 1.0))
                throw ConfigError("a mean-one gain needs s >= 1", "plan.sweep.values[" + std::to_string(i) + "]");
    }

    constexpr double nan = std::numeric_limits<double>::quiet_NaN();
    std::vector<SweepRow> rows;
    auto focus = [&](int k) { return sw.node_focus == 0 || sw.node_focus == k; };
    auto blank = [&](double v, const char* source) {
        for (int k = 1; k <= n; ++k)
            if (focus(k)) rows.push_back({v, k, nan, nan, nan, source});
    };

    int unstable = 0, diverged = 0;
    for (double v : sw.values) {
        const auto net = sw.parameter == SweepParameter::Mu ? with_step_size(cfg.network, v)
                                                            : with_second_moment(cfg.network, v);
        try {
            const auto pred = theory::steady_state_prediction(theory::build_workspace(net, cfg.plan.mode));
            for (int k = 1; k <= n; ++k) {
                if (!focus(k)) continue;
                const auto& p = pred.nodes[k - 1];
                rows.push_back({v, k, p.eta_db, p.zeta_db, p.xi_db, "theory"});
            }
        } catch (const InstabilityError&) {
            blank(v, "unstable");
            ++unstable;
        }
        if (sw.simulate) {
            try {
                const auto sim = simulate(net, cfg.plan);
                for (int k = 1; k <= n; ++k) {
                    if (!focus(k)) continue;
                    const auto& e = sim.steady.nodes[k - 1];
                    rows.push_back({v, k, e.eta_db, e.zeta_db, e.xi_db, "simulation"});
                }
            } catch (const DivergenceError&) {
                blank(v, "diverged");
                ++diverged;
            }
        }
    }

    CsvWriter csv(cfg, "sweep");
    csv.comment(std::string("parameter: ") + (sw.parameter == SweepParameter::Mu ? "mu" : "s"));
    csv.header({"value", "node", "eta_db", "zeta_db", "xi_db", "source"});
    for (const auto& r : rows) {
        csv.cell(r.value).cell(r.node).cell(r.eta_db).cell(r.zeta_db).cell(r.xi_db).cell(r.source);
        csv.end_row();
    }
    prepare(out_dir);
    write_resolved(cfg, out_dir);
    csv.save(out_dir / "sweep.csv");
    log << "sweep: " << sw.values.size() << " points (" << unstable << " unstable, " << diverged << " diverged) -> "
        << (out_dir / "sweep.csv").string() << "\n";
    return rows;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Incremental LMS over fading links: simulation and steady-state theory"};
    app.set_version_flag("--version", std::string(version()));
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = ".";
    std::optional<std::uint64_t> seed;
    std::optional<int> runs, iterations, tail, workers;
    std::optional<std::string> mode;

    auto add_common = [&](CLI::App* sub, bool monte_carlo) {
        sub->add_option("--config", config_path, "experiment JSON")->required();
        sub->add_option("--out", out_dir, "output directory");
        sub->add_option("--seed", seed, "override network.seed");
        sub->add_option("--mode", mode, "ideal | fading | fading_zf");
        if (monte_carlo) {
            sub->add_option("--runs", runs, "Monte Carlo runs");
            sub->add_option("--iterations", iterations, "cycles per run");
            sub->add_option("--tail", tail, "steady-state window");
            sub->add_option("--workers", workers, "threads (0 = default)");
        }
    };
    auto* sim = app.add_subcommand("simulate", "Monte Carlo learning curves and steady state");
    auto* th = app.add_subcommand("theory", "stability report and closed-form steady state");
    auto* cmp = app.add_subcommand("compare", "simulation vs theory per node");
    auto* swp = app.add_subcommand("sweep", "theory (and optionally simulation) over mu or s");
    add_common(sim, true);
    add_common(th, true);
    add_common(cmp, true);
    add_common(swp, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        config::Overrides ov;
        ov.seed = seed;
        ov.runs = runs;
        ov.iterations = iterations;
        ov.tail = tail;
        ov.workers = workers;
        ov.mode = mode;
        const auto cfg = config::parse_config(config_path, ov);
        if (*sim) (void)cmd_simulate(cfg, out_dir, out);
        else if (*th) (void)cmd_theory(cfg, out_dir, out);
        else if (*cmp) (void)cmd_compare(cfg, out_dir, out);
        else (void)cmd_sweep(cfg, out_dir, out);
        return kExitOk;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }
}

}  // namespace ilms::cli
